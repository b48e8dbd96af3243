//! Gatekeeper: gridmapfile access control, account mapping, and start-time
//! authorization through the `gram-authz` callout.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::callout::{CalloutArgs, CalloutSystem, Invocation};
use crate::engine::Decision;
use crate::policy::GridIdentity;
use crate::rsl::{parse_request, JobDescription, RslError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridmapError {
    #[error("gridmap line {line}: {message}")]
    Syntax { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridmapEntry {
    pub identity: GridIdentity,
    pub account: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gridmap {
    pub entries: Vec<GridmapEntry>,
    pub warnings: Vec<String>,
}

impl Gridmap {
    /// Exact-identity lookup; the first entry for an identity wins.
    pub fn lookup(&self, identity: &GridIdentity) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| &e.identity == identity)
            .map(|e| e.account.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn parse_gridmap(text: &str) -> Result<Gridmap, GridmapError> {
    let mut gm = Gridmap::default();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| GridmapError::Syntax {
            line: line_no,
            message,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let quoted = line
            .strip_prefix('"')
            .ok_or_else(|| err("expected a double-quoted distinguished name".into()))?;
        let (dn, rest) = quoted
            .split_once('"')
            .ok_or_else(|| err("unterminated quote".into()))?;
        let identity = GridIdentity::parse(dn).map_err(|e| err(e.to_string()))?;
        let mut fields = rest.split_whitespace();
        let account = fields.next().ok_or_else(|| err("missing account name".into()))?;
        if !rest.starts_with(char::is_whitespace) {
            return Err(err("expected whitespace after the quoted name".into()));
        }
        if let Some(extra) = fields.next() {
            return Err(err(format!("unexpected field `{extra}` after account")));
        }
        if !seen.insert(identity.clone()) {
            let warning = format!("line {line_no}: duplicate entry for {identity} ignored");
            log::warn!("{warning}");
            gm.warnings.push(warning);
            continue;
        }
        gm.entries.push(GridmapEntry {
            identity,
            account: account.to_string(),
        });
    }
    Ok(gm)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0} is not authorized by the gridmap")]
pub struct NotAuthorized(pub GridIdentity);

pub fn authorize_and_map(gm: &Gridmap, identity: &GridIdentity) -> Result<String, NotAuthorized> {
    gm.lookup(identity)
        .map(str::to_string)
        .ok_or_else(|| NotAuthorized(identity.clone()))
}

/// Everything the job manager needs to create a job.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissionTicket {
    pub ticket_id: u64,
    pub requester: GridIdentity,
    pub account: String,
    pub description: JobDescription,
    pub decision: Decision,
    pub invocation: Invocation,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdmitError {
    #[error("invalid job description: {0}")]
    Syntax(#[from] RslError),
    #[error(transparent)]
    NotAuthorized(#[from] NotAuthorized),
    #[error("authorization denied: {reason}")]
    Denied { reason: String, invocation: Box<Invocation> },
    #[error("authorization system failure: {detail}")]
    Error { detail: String, invocation: Box<Invocation> },
}

impl AdmitError {
    pub fn invocation(&self) -> Option<&Invocation> {
        match self {
            AdmitError::Denied { invocation, .. } | AdmitError::Error { invocation, .. } => Some(invocation),
            _ => None,
        }
    }
}

/// Parse, default, gridmap check, then the start-time callout. The callout
/// is not consulted when the gridmap refuses the requester.
pub fn admit(
    gm: &Gridmap,
    callouts: &CalloutSystem,
    requester: &GridIdentity,
    rsl_text: &str,
    ticket_id: u64,
) -> Result<AdmissionTicket, AdmitError> {
    let description = parse_request(rsl_text)?;
    let account = authorize_and_map(gm, requester)?;
    let args = CalloutArgs::for_start(requester.clone(), description.to_string());
    let invocation = callouts.authorize(&args);
    match invocation.decision() {
        Decision::Permit => Ok(AdmissionTicket {
            ticket_id,
            requester: requester.clone(),
            account,
            description,
            decision: Decision::Permit,
            invocation,
        }),
        Decision::Deny(reason) => Err(AdmitError::Denied {
            reason,
            invocation: Box::new(invocation),
        }),
        Decision::Error(detail) => Err(AdmitError::Error {
            detail,
            invocation: Box::new(invocation),
        }),
    }
}

/// Holds the current gridmap and issues ticket ids.
#[derive(Debug)]
pub struct Gatekeeper {
    gridmap: RwLock<Arc<Gridmap>>,
    next_ticket: AtomicU64,
}

impl Gatekeeper {
    pub fn new(gridmap: Gridmap) -> Self {
        Gatekeeper {
            gridmap: RwLock::new(Arc::new(gridmap)),
            next_ticket: AtomicU64::new(1),
        }
    }

    pub fn gridmap(&self) -> Arc<Gridmap> {
        self.gridmap.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn replace_gridmap(&self, gridmap: Gridmap) {
        *self.gridmap.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(gridmap);
    }

    /// Ensures future tickets are numbered above `ticket_id`.
    pub fn observe_ticket(&self, ticket_id: u64) {
        self.next_ticket.fetch_max(ticket_id + 1, Ordering::SeqCst);
    }

    pub fn admit(
        &self,
        callouts: &CalloutSystem,
        requester: &GridIdentity,
        rsl_text: &str,
    ) -> Result<AdmissionTicket, AdmitError> {
        let gm = self.gridmap();
        let mut ticket = admit(&gm, callouts, requester, rsl_text, 0)?;
        ticket.ticket_id = self.next_ticket.fetch_add(1, Ordering::SeqCst);
        Ok(ticket)
    }
}
