//! The assembled resource manager: line protocol, audit and event logs,
//! policy reload, and a TCP/local-socket front end.
//!
//! Requests flow gatekeeper → `gram-authz` callout → job manager. Callouts
//! run outside the job-table lock; job-table mutations and log appends are
//! serialized so sequence numbers follow causal order.

pub mod audit;
pub mod config;
pub mod events;
pub mod log;
pub mod server;
pub mod simulate;
pub mod wire;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use thiserror::Error;

use crate::callout::{
    parse_callout_config, AuthzCallout, CalloutConfig, CalloutError, CalloutSystem, Invocation, PolicyPair, PolicyStore,
    Registry,
};
use crate::engine::{authorize, Action, AuthorizationRequest, Decision};
use crate::gatekeeper::{parse_gridmap, AdmitError, Gatekeeper, Gridmap, GridmapError};
use crate::jobmanager::{authorize_management, JobError, JobFilter, JobManager, JobState, SignalKind};
use crate::policy::{parse_policy, GridIdentity, PolicyDocument, PolicyError, PolicySource};
use crate::rsl::parse_request;

use self::audit::{AuditLog, AuditRecord, AuditSource};
pub use self::config::{ConfigError, ServiceConfig};
use self::events::{parse_event_log, EventLog};
use self::log::{read_if_exists, CorruptLog, LogFile};
use self::wire::{parse_command, quote, Fields};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Policy { path: PathBuf, source: PolicyError },
    #[error("{path}: {source}")]
    Gridmap { path: PathBuf, source: GridmapError },
    #[error("{path}: {source}")]
    Callout { path: PathBuf, source: CalloutError },
    #[error(transparent)]
    MissingBinding(CalloutError),
    #[error("{path}: {source}")]
    CorruptLog { path: PathBuf, source: CorruptLog },
}

/// Protocol error classes. Each internal failure maps to exactly one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    Syntax(String),
    Gate(String),
    Deny(String),
    Error(String),
    UnknownJob(String),
    Transition(String),
}

impl ProtocolError {
    pub fn class(&self) -> &'static str {
        match self {
            ProtocolError::Syntax(_) => "E-SYNTAX",
            ProtocolError::Gate(_) => "E-GATE",
            ProtocolError::Deny(_) => "E-DENY",
            ProtocolError::Error(_) => "E-ERROR",
            ProtocolError::UnknownJob(_) => "E-UNKNOWN-JOB",
            ProtocolError::Transition(_) => "E-TRANSITION",
        }
    }

    fn message(&self) -> &str {
        match self {
            ProtocolError::Syntax(m)
            | ProtocolError::Gate(m)
            | ProtocolError::Deny(m)
            | ProtocolError::Error(m)
            | ProtocolError::UnknownJob(m)
            | ProtocolError::Transition(m) => m,
        }
    }

    pub fn render(&self) -> String {
        format!("{} {}", self.class(), one_line(self.message()))
    }
}

impl From<JobError> for ProtocolError {
    fn from(e: JobError) -> Self {
        match e {
            JobError::UnknownJob(_) => ProtocolError::UnknownJob(e.to_string()),
            JobError::InvalidTransition { .. } | JobError::NoFreeSlot(_) => ProtocolError::Transition(e.to_string()),
            JobError::ClockRegression { .. } => ProtocolError::Syntax(e.to_string()),
            JobError::Denied(r) => ProtocolError::Deny(r),
            JobError::AuthzFailure(d) => ProtocolError::Error(d),
            JobError::BadSignal(_) => ProtocolError::Syntax(e.to_string()),
            JobError::DuplicateTicket(_) | JobError::NotPermitted => ProtocolError::Error(e.to_string()),
        }
    }
}

/// Policy denials lead with the outcome class (`no grant satisfied` or
/// `requirement violated`) and carry the per-source detail in parentheses.
/// Other providers' reasons pass through unchanged.
fn deny(reason: String, inv: Option<&Invocation>) -> ProtocolError {
    if inv.is_none_or(|i| i.evidence.is_none()) {
        return ProtocolError::Deny(reason);
    }
    let headline = if reason.contains("requirement violated") {
        "requirement violated"
    } else {
        "no grant satisfied"
    };
    ProtocolError::Deny(format!("{headline} ({reason})"))
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

/// In-memory inputs for building a service without files.
pub struct ServiceParts {
    pub local: PolicyDocument,
    pub vo: PolicyDocument,
    pub gridmap: Gridmap,
    pub callout_config: CalloutConfig,
    pub providers: Vec<(String, Arc<dyn AuthzCallout>)>,
    pub slots: usize,
    pub self_management: bool,
}

impl ServiceParts {
    pub fn new(local: PolicyDocument, vo: PolicyDocument, gridmap: Gridmap, callout_config: CalloutConfig) -> Self {
        ServiceParts {
            local,
            vo,
            gridmap,
            callout_config,
            providers: Vec::new(),
            slots: 1,
            self_management: true,
        }
    }

    pub fn slots(mut self, slots: usize) -> Self {
        self.slots = slots;
        self
    }

    pub fn self_management(mut self, on: bool) -> Self {
        self.self_management = on;
        self
    }

    pub fn provider(mut self, id: &str, provider: Arc<dyn AuthzCallout>) -> Self {
        self.providers.push((id.to_string(), provider));
        self
    }
}

struct State {
    jm: JobManager,
    audit: AuditLog,
    events: EventLog,
}

struct ReloadPaths {
    base: PathBuf,
    local: PathBuf,
    vo: PathBuf,
    gridmap: PathBuf,
}

pub struct Service {
    store: Arc<PolicyStore>,
    gatekeeper: Gatekeeper,
    callouts: CalloutSystem,
    self_management: bool,
    reload: Option<ReloadPaths>,
    state: Mutex<State>,
}

fn read(path: &Path) -> Result<String, ServiceError> {
    fs::read_to_string(path).map_err(|source| ServiceError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_policy(path: &Path, source: PolicySource) -> Result<PolicyDocument, ServiceError> {
    parse_policy(&read(path)?, source)
        .map(|d| d.with_label(path.display().to_string()))
        .map_err(|source| ServiceError::Policy {
            path: path.to_path_buf(),
            source,
        })
}

fn load_gridmap(path: &Path) -> Result<Gridmap, ServiceError> {
    parse_gridmap(&read(path)?).map_err(|source| ServiceError::Gridmap {
        path: path.to_path_buf(),
        source,
    })
}

impl Service {
    pub fn from_parts(parts: ServiceParts) -> Result<Self, ServiceError> {
        Self::assemble(parts, None, AuditLog::in_memory(), EventLog::in_memory(), Vec::new())
    }

    fn assemble(
        parts: ServiceParts,
        reload: Option<ReloadPaths>,
        audit: AuditLog,
        events: EventLog,
        history: Vec<crate::jobmanager::JobEvent>,
    ) -> Result<Self, ServiceError> {
        let store = Arc::new(PolicyStore::new(PolicyPair::new(parts.local, parts.vo)));
        let mut registry = Registry::with_builtins(store.clone());
        for (id, p) in parts.providers {
            registry.register(&id, p).map_err(ServiceError::MissingBinding)?;
        }
        let callouts = CalloutSystem::new(parts.callout_config, registry);
        callouts.validate().map_err(ServiceError::MissingBinding)?;
        let jm = JobManager::replay(parts.slots, &history).map_err(|e| ServiceError::CorruptLog {
            path: PathBuf::from("<event log>"),
            source: CorruptLog {
                sequence: e.sequence,
                message: e.message,
            },
        })?;
        let gatekeeper = Gatekeeper::new(parts.gridmap);
        if let Some(t) = jm.max_ticket() {
            gatekeeper.observe_ticket(t);
        }
        Ok(Service {
            store,
            gatekeeper,
            callouts,
            self_management: parts.self_management,
            reload,
            state: Mutex::new(State { jm, audit, events }),
        })
    }

    /// Loads every configured file, replays an existing event log, and
    /// continues an existing audit log.
    pub fn start(config: &ServiceConfig) -> Result<Self, ServiceError> {
        Self::start_with(config, Vec::new())
    }

    pub fn start_with(
        config: &ServiceConfig,
        providers: Vec<(String, Arc<dyn AuthzCallout>)>,
    ) -> Result<Self, ServiceError> {
        let local = load_policy(&config.local_policy_path, PolicySource::Local)?;
        let vo = load_policy(&config.vo_policy_path, PolicySource::Vo)?;
        let gridmap = load_gridmap(&config.gridmap_path)?;
        let callout_config = parse_callout_config(&read(&config.callout_config_path)?).map_err(|source| {
            ServiceError::Callout {
                path: config.callout_config_path.clone(),
                source,
            }
        })?;

        let open = |path: &Path| -> Result<(LogFile, String), ServiceError> {
            let io = |source| ServiceError::Io {
                path: path.to_path_buf(),
                source,
            };
            let existing = read_if_exists(path).map_err(io)?;
            Ok((LogFile::open(path).map_err(io)?, existing))
        };
        let corrupt = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ServiceError::CorruptLog { path, source }
        };

        let audit = match &config.audit_log_path {
            Some(p) => {
                let (file, existing) = open(p)?;
                AuditLog::with_file(file, &existing).map_err(corrupt(p))?
            }
            None => AuditLog::in_memory(),
        };
        let (events, history) = match &config.event_log_path {
            Some(p) => {
                let (file, existing) = open(p)?;
                let history = parse_event_log(&existing).map_err(corrupt(p))?;
                (EventLog::with_file(file, history.clone()), history)
            }
            None => (EventLog::in_memory(), Vec::new()),
        };

        let mut parts = ServiceParts::new(local, vo, gridmap, callout_config)
            .slots(config.slots)
            .self_management(config.self_management);
        parts.providers = providers;
        let base = config
            .local_policy_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let reload = ReloadPaths {
            base,
            local: config.local_policy_path.clone(),
            vo: config.vo_policy_path.clone(),
            gridmap: config.gridmap_path.clone(),
        };
        Self::assemble(parts, Some(reload), audit, events, history)
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn callouts(&self) -> &CalloutSystem {
        &self.callouts
    }

    pub fn policies(&self) -> Arc<PolicyPair> {
        self.store.snapshot()
    }

    pub fn snapshot(&self) -> String {
        self.lock().jm.snapshot()
    }

    pub fn audit_records(&self) -> Vec<AuditRecord> {
        self.lock().audit.records().to_vec()
    }

    pub fn event_log_text(&self) -> String {
        self.lock().events.text()
    }

    pub fn job_manager(&self) -> JobManager {
        self.lock().jm.clone()
    }

    /// Handles one protocol line and returns the response line.
    pub fn handle_request(&self, line: &str) -> String {
        match self.dispatch(line) {
            Ok(ok) => format!("OK {}", one_line(&ok)),
            Err(e) => e.render(),
        }
    }

    fn dispatch(&self, line: &str) -> Result<String, ProtocolError> {
        let (verb, fields) = parse_command(line).map_err(|e| ProtocolError::Syntax(e.to_string()))?;
        match verb.as_str() {
            "SUBMIT" => self.submit(&fields),
            "CANCEL" => self.manage(&fields, Action::Cancel),
            "SIGNAL" => self.manage(&fields, Action::Signal),
            "STATUS" if fields.get("job").is_none() && fields.get("dn").is_none() => Ok(self.liveness()),
            "STATUS" => self.manage(&fields, Action::Information),
            "LIST" => self.list(&fields),
            "POLICY-EVAL" => self.policy_eval(&fields),
            "TICK" => self.tick(&fields),
            "RELOAD" => self.reload(&fields),
            other => Err(ProtocolError::Syntax(format!("unknown verb `{other}`"))),
        }
    }

    fn liveness(&self) -> String {
        let st = self.lock();
        format!(
            "service now={} slots={} jobs={} active={}",
            st.jm.now(),
            st.jm.slots(),
            st.jm.jobs().len(),
            st.jm.active_count()
        )
    }

    fn write_audit(st: &mut State, record: AuditRecord) -> Result<(), ProtocolError> {
        st.audit
            .write_audit(record)
            .map(|_| ())
            .map_err(|e| ProtocolError::Error(format!("audit log write failed: {e}")))
    }

    fn flush_events(st: &mut State) -> Result<(), ProtocolError> {
        let events = st.jm.take_events();
        st.events
            .append(events)
            .map_err(|e| ProtocolError::Error(format!("event log write failed: {e}")))
    }

    fn submit(&self, f: &Fields) -> Result<String, ProtocolError> {
        let requester = requester(f)?;
        let rsl = f.require("rsl").map_err(|e| ProtocolError::Syntax(e.to_string()))?;
        let admitted = self.gatekeeper.admit(&self.callouts, &requester, rsl);

        let mut st = self.lock();
        let now = st.jm.now();
        let dn = requester.to_string();
        match admitted {
            Err(AdmitError::Syntax(e)) => Err(ProtocolError::Syntax(e.to_string())),
            Err(AdmitError::NotAuthorized(e)) => {
                let record = AuditRecord::simple(
                    now,
                    dn,
                    Action::Start,
                    None,
                    Decision::Deny(e.to_string()),
                    AuditSource::Gate,
                    "no gridmap entry".into(),
                );
                Self::write_audit(&mut st, record)?;
                Err(ProtocolError::Gate(e.to_string()))
            }
            Err(AdmitError::Denied { reason, invocation }) => {
                Self::write_audit(&mut st, AuditRecord::from_invocation(now, dn, Action::Start, None, &invocation))?;
                Err(deny(reason, Some(&invocation)))
            }
            Err(AdmitError::Error { detail, invocation }) => {
                Self::write_audit(&mut st, AuditRecord::from_invocation(now, dn, Action::Start, None, &invocation))?;
                Err(ProtocolError::Error(detail))
            }
            Ok(ticket) => {
                let (job_id, state) = {
                    let rec = st.jm.submit(&ticket)?;
                    (rec.job_id.clone(), rec.state)
                };
                let record = AuditRecord::from_invocation(now, dn, Action::Start, Some(job_id.clone()), &ticket.invocation);
                Self::write_audit(&mut st, record)?;
                Self::flush_events(&mut st)?;
                Ok(format!("{job_id} {state}"))
            }
        }
    }

    fn manage(&self, f: &Fields, action: Action) -> Result<String, ProtocolError> {
        let requester = requester(f)?;
        let job_id = f.require("job").map_err(|e| ProtocolError::Syntax(e.to_string()))?;
        let signal = match action {
            Action::Signal => Some(
                SignalKind::parse(
                    f.require("signal").map_err(|e| ProtocolError::Syntax(e.to_string()))?,
                    f.get("value"),
                )
                .map_err(ProtocolError::from)?,
            ),
            _ => None,
        };

        let record = self.lock().jm.get(job_id)?.clone();
        let authz = authorize_management(
            &record,
            &requester,
            action,
            signal.as_ref(),
            &self.callouts,
            self.self_management,
        );

        let mut st = self.lock();
        let now = st.jm.now();
        let dn = requester.to_string();
        let audit = match &authz.invocation {
            Some(inv) => AuditRecord::from_invocation(now, dn, action, Some(job_id.to_string()), inv),
            None => AuditRecord::simple(
                now,
                dn,
                action,
                Some(job_id.to_string()),
                authz.decision.clone(),
                AuditSource::SelfRule,
                "requester is the job owner".into(),
            ),
        };
        Self::write_audit(&mut st, audit)?;
        match authz.decision {
            Decision::Permit => {}
            Decision::Deny(r) => return Err(deny(r, authz.invocation.as_ref())),
            Decision::Error(e) => return Err(ProtocolError::Error(e)),
        }

        let response = match (action, signal) {
            (Action::Cancel, _) => {
                let rec = st.jm.apply_cancel(job_id, &requester)?;
                format!("{} {}", rec.job_id, rec.state)
            }
            (Action::Signal, Some(kind)) => {
                let rec = st.jm.apply_signal(job_id, kind, &requester)?;
                format!("{} {} priority={}", rec.job_id, rec.state, rec.priority)
            }
            _ => {
                let s = st.jm.get(job_id)?.status();
                let opt = |v: Option<u64>| v.map_or("-".to_string(), |t| t.to_string());
                Fields::new()
                    .with("state", s.state.as_str())
                    .with("owner", s.owner.to_string())
                    .with("account", &s.account)
                    .with("jobtag", s.jobtag.as_deref().unwrap_or("-"))
                    .with("priority", s.priority.to_string())
                    .with("submitted", s.submitted_at.to_string())
                    .with("started", opt(s.started_at))
                    .with("ended", opt(s.ended_at))
                    .with("history", s.history_len.to_string())
                    .encode()
                    .replacen("state=", &format!("{} state=", s.job_id), 1)
            }
        };
        Self::flush_events(&mut st)?;
        Ok(response)
    }

    fn list(&self, f: &Fields) -> Result<String, ProtocolError> {
        let owner = f
            .get("owner")
            .map(|o| GridIdentity::parse(o).map_err(|e| ProtocolError::Syntax(e.to_string())))
            .transpose()?;
        let state = f
            .get("state")
            .map(|s| JobState::parse(s).ok_or_else(|| ProtocolError::Syntax(format!("unknown state `{s}`"))))
            .transpose()?;
        let filter = JobFilter {
            jobtag: f.get("jobtag").map(str::to_string),
            owner,
            state,
        };
        let jobs = self.lock().jm.list_jobs(&filter);
        let mut out = jobs.len().to_string();
        for j in jobs {
            out.push_str(&format!(" {}:{}", j.job_id, j.state));
        }
        Ok(out)
    }

    /// Dry-run evaluation against the current policy documents. No audit
    /// record, no state change.
    fn policy_eval(&self, f: &Fields) -> Result<String, ProtocolError> {
        let requester = requester(f)?;
        let action: Action = f
            .require("action")
            .map_err(|e| ProtocolError::Syntax(e.to_string()))?
            .parse()
            .map_err(|e: crate::engine::UnknownAction| ProtocolError::Syntax(e.to_string()))?;
        let request = if action == Action::Start {
            let rsl = f.require("rsl").map_err(|e| ProtocolError::Syntax(e.to_string()))?;
            let description = parse_request(rsl).map_err(|e| ProtocolError::Syntax(e.to_string()))?;
            AuthorizationRequest::start(requester, description)
        } else {
            let job_id = f.require("job").map_err(|e| ProtocolError::Syntax(e.to_string()))?;
            let record = self.lock().jm.get(job_id)?.clone();
            let signal = f
                .get("signal")
                .map(|s| SignalKind::parse(s, f.get("value")))
                .transpose()?;
            AuthorizationRequest::management(requester, action, record.description.clone(), record.context(signal.as_ref()))
        }
        .map_err(|e| ProtocolError::Syntax(e.to_string()))?;

        let pair = self.store.snapshot();
        let a = authorize(&pair.local, &pair.vo, &request);
        Ok(Fields::new()
            .with("decision", a.decision.label())
            .with("reason", a.decision.reason())
            .with("local", a.local.1.summary())
            .with("vo", a.vo.1.summary())
            .encode())
    }

    fn tick(&self, f: &Fields) -> Result<String, ProtocolError> {
        let by: Option<u64> = f.parse_as("by").map_err(|e| ProtocolError::Syntax(e.to_string()))?;
        let to: Option<u64> = f.parse_as("to").map_err(|e| ProtocolError::Syntax(e.to_string()))?;
        let mut st = self.lock();
        let now = match (by, to) {
            (Some(_), Some(_)) => return Err(ProtocolError::Syntax("give either by= or to=".into())),
            (_, Some(t)) => t,
            (b, None) => st.jm.now() + b.unwrap_or(1),
        };
        let changes = st.jm.tick(now)?;
        Self::flush_events(&mut st)?;
        let mut out = format!("now={now}");
        for c in changes {
            out.push_str(&format!(" {}:{}", c.job_id, c.to));
        }
        Ok(out)
    }

    fn reload(&self, f: &Fields) -> Result<String, ProtocolError> {
        let resolve = |key: &str, default: Option<&Path>| -> Result<PathBuf, ProtocolError> {
            match (f.get(key), &self.reload, default) {
                (Some(p), Some(r), _) => Ok(r.base.join(p)),
                (Some(p), None, _) => Ok(PathBuf::from(p)),
                (None, _, Some(d)) => Ok(d.to_path_buf()),
                (None, _, None) => Err(ProtocolError::Error(format!("no `{key}` file configured"))),
            }
        };
        let r = self.reload.as_ref();
        let local_path = resolve("local", r.map(|r| r.local.as_path()))?;
        let vo_path = resolve("vo", r.map(|r| r.vo.as_path()))?;
        let gridmap_path = match (f.get("gridmap"), r) {
            (None, None) => None,
            _ => Some(resolve("gridmap", r.map(|r| r.gridmap.as_path()))?),
        };

        let err = |e: ServiceError| ProtocolError::Error(format!("reload failed: {e}"));
        let local = load_policy(&local_path, PolicySource::Local).map_err(err)?;
        let vo = load_policy(&vo_path, PolicySource::Vo).map_err(err)?;
        let gridmap = gridmap_path.as_deref().map(load_gridmap).transpose().map_err(err)?;

        // Swap under the job-table lock so no request straddles the change.
        let _st = self.lock();
        let counts = (local.statements.len(), vo.statements.len());
        self.store.replace(PolicyPair::new(local, vo));
        let mut out = format!("reloaded local={} vo={}", counts.0, counts.1);
        if let Some(gm) = gridmap {
            out.push_str(&format!(" gridmap={}", gm.len()));
            self.gatekeeper.replace_gridmap(gm);
        }
        ::log::info!("{out}");
        Ok(out)
    }
}

fn requester(f: &Fields) -> Result<GridIdentity, ProtocolError> {
    let dn = f.require("dn").map_err(|e| ProtocolError::Syntax(e.to_string()))?;
    GridIdentity::parse(dn).map_err(|e| ProtocolError::Syntax(e.to_string()))
}

/// Builds a protocol line from a verb and fields.
pub fn request_line(verb: &str, fields: &[(&str, &str)]) -> String {
    let mut line = verb.to_string();
    for (k, v) in fields {
        line.push(' ');
        line.push_str(k);
        line.push('=');
        line.push_str(&quote(v));
    }
    line
}
