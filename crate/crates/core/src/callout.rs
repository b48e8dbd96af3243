//! Authorization callouts.
//!
//! Decision points ask an abstract callout name (normally `gram-authz`) for a
//! verdict. The callout configuration binds that name to a provider id, and
//! the registry maps provider ids to implementations. Swapping a binding
//! changes decisions without touching the gatekeeper or the job manager.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, RwLock};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{authorize, Action, Authorization, AuthorizationRequest, Decision, JobContext};
use crate::policy::{GridIdentity, PolicyDocument, PolicySource};
use crate::rsl::parse_request;

/// Abstract callout consulted for job start and job management.
pub const GRAM_AUTHZ: &str = "gram-authz";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CalloutError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("no provider bound to abstract callout `{0}`")]
    MissingBinding(String),
    #[error("provider `{0}` is already registered")]
    DuplicateProvider(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CalloutArgs {
    pub requester: GridIdentity,
    /// Job initiator; present only for management actions.
    pub initiator: Option<GridIdentity>,
    pub action: Action,
    pub job_id: Option<String>,
    pub rsl_text: String,
    pub job_context: Option<JobContext>,
}

impl CalloutArgs {
    pub fn for_start(requester: GridIdentity, rsl_text: String) -> Self {
        CalloutArgs {
            requester,
            initiator: None,
            action: Action::Start,
            job_id: None,
            rsl_text,
            job_context: None,
        }
    }

    pub fn for_management(
        requester: GridIdentity,
        action: Action,
        rsl_text: String,
        context: JobContext,
    ) -> Self {
        CalloutArgs {
            requester,
            initiator: Some(context.jobowner.clone()),
            action,
            job_id: Some(context.job_id.clone()),
            rsl_text,
            job_context: Some(context),
        }
    }

    /// Short hex digest of the canonical argument text, for audit records.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.requester.to_string());
        h.update([0]);
        if let Some(i) = &self.initiator {
            h.update(i.to_string());
        }
        h.update([0]);
        h.update(self.action.as_str());
        h.update([0]);
        h.update(self.job_id.as_deref().unwrap_or(""));
        h.update([0]);
        h.update(&self.rsl_text);
        h.update([0]);
        if let Some(c) = &self.job_context {
            h.update(c.jobtag.as_deref().unwrap_or(""));
            h.update([0]);
            h.update(c.signal_kind.as_deref().unwrap_or(""));
        }
        let out = h.finalize();
        out[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn to_request(&self) -> Result<AuthorizationRequest, String> {
        let description = parse_request(&self.rsl_text).map_err(|e| format!("bad job description: {e}"))?;
        AuthorizationRequest::new(
            self.requester.clone(),
            self.action,
            description,
            self.job_context.clone(),
        )
        .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CalloutResult {
    Success,
    Denied(String),
    SystemFailure(String),
}

impl CalloutResult {
    pub fn denied(reason: impl Into<String>) -> Self {
        let reason = reason.into();
        if reason.is_empty() {
            CalloutResult::Denied("denied".into())
        } else {
            CalloutResult::Denied(reason)
        }
    }

    pub fn to_decision(&self) -> Decision {
        match self {
            CalloutResult::Success => Decision::Permit,
            CalloutResult::Denied(r) => Decision::Deny(r.clone()),
            CalloutResult::SystemFailure(d) => Decision::Error(d.clone()),
        }
    }

    pub fn from_decision(d: &Decision) -> Self {
        match d {
            Decision::Permit => CalloutResult::Success,
            Decision::Deny(r) => CalloutResult::denied(r.clone()),
            Decision::Error(e) => CalloutResult::SystemFailure(e.clone()),
        }
    }
}

impl fmt::Display for CalloutResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CalloutResult::Success => f.write_str("SUCCESS"),
            CalloutResult::Denied(r) => write!(f, "DENIED({r})"),
            CalloutResult::SystemFailure(d) => write!(f, "SYSTEM_FAILURE({d})"),
        }
    }
}

/// A provider's answer, optionally with the policy evaluation behind it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CalloutResponse {
    pub result: CalloutResult,
    pub evidence: Option<Authorization>,
}

impl From<CalloutResult> for CalloutResponse {
    fn from(result: CalloutResult) -> Self {
        CalloutResponse {
            result,
            evidence: None,
        }
    }
}

pub trait AuthzCallout: Send + Sync {
    fn call(&self, args: &CalloutArgs) -> CalloutResponse;
}

impl<F> AuthzCallout for F
where
    F: Fn(&CalloutArgs) -> CalloutResult + Send + Sync,
{
    fn call(&self, args: &CalloutArgs) -> CalloutResponse {
        self(args).into()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyPair {
    pub local: PolicyDocument,
    pub vo: PolicyDocument,
}

impl PolicyPair {
    pub fn new(local: PolicyDocument, vo: PolicyDocument) -> Self {
        PolicyPair { local, vo }
    }

    pub fn empty() -> Self {
        PolicyPair::new(
            PolicyDocument::empty(PolicySource::Local),
            PolicyDocument::empty(PolicySource::Vo),
        )
    }
}

/// Current LOCAL/VO document pair. Both documents are replaced together.
#[derive(Debug)]
pub struct PolicyStore {
    current: RwLock<Arc<PolicyPair>>,
}

impl PolicyStore {
    pub fn new(pair: PolicyPair) -> Self {
        PolicyStore {
            current: RwLock::new(Arc::new(pair)),
        }
    }

    pub fn snapshot(&self) -> Arc<PolicyPair> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn replace(&self, pair: PolicyPair) {
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(pair);
    }
}

/// The `rsl-pep` provider: evaluates the request against the stored LOCAL
/// and VO documents.
pub struct RslPep {
    store: Arc<PolicyStore>,
}

impl RslPep {
    pub fn new(store: Arc<PolicyStore>) -> Self {
        RslPep { store }
    }
}

impl AuthzCallout for RslPep {
    fn call(&self, args: &CalloutArgs) -> CalloutResponse {
        let request = match args.to_request() {
            Ok(r) => r,
            Err(e) => return CalloutResult::SystemFailure(e).into(),
        };
        let pair = self.store.snapshot();
        let evidence = authorize(&pair.local, &pair.vo, &request);
        CalloutResponse {
            result: CalloutResult::from_decision(&evidence.decision),
            evidence: Some(evidence),
        }
    }
}

#[derive(Clone, Default)]
pub struct Registry {
    providers: HashMap<String, Arc<dyn AuthzCallout>>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut ids: Vec<_> = self.providers.keys().collect();
        ids.sort();
        f.debug_struct("Registry").field("providers", &ids).finish()
    }
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with `rsl-pep`, `allow-all` and `deny-all` registered.
    pub fn with_builtins(store: Arc<PolicyStore>) -> Self {
        let mut r = Registry::new();
        r.providers.insert("rsl-pep".into(), Arc::new(RslPep::new(store)));
        r.providers
            .insert("allow-all".into(), Arc::new(|_: &CalloutArgs| CalloutResult::Success));
        r.providers.insert(
            "deny-all".into(),
            Arc::new(|_: &CalloutArgs| CalloutResult::denied("deny-all")),
        );
        r
    }

    pub fn register(&mut self, id: &str, provider: Arc<dyn AuthzCallout>) -> Result<(), CalloutError> {
        if self.providers.contains_key(id) {
            return Err(CalloutError::DuplicateProvider(id.to_string()));
        }
        self.providers.insert(id.to_string(), provider);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Arc<dyn AuthzCallout>> {
        self.providers.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.providers.contains_key(id)
    }
}

pub fn register_provider(
    registry: &mut Registry,
    id: &str,
    provider: Arc<dyn AuthzCallout>,
) -> Result<(), CalloutError> {
    registry.register(id, provider)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CalloutConfig {
    pub bindings: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl CalloutConfig {
    pub fn bind(mut self, name: &str, provider: &str) -> Self {
        self.bindings.insert(name.to_string(), provider.to_string());
        self
    }

    pub fn provider_for(&self, name: &str) -> Option<&str> {
        self.bindings.get(name).map(String::as_str)
    }

    pub fn require(&self, name: &str) -> Result<&str, CalloutError> {
        self.provider_for(name)
            .ok_or_else(|| CalloutError::MissingBinding(name.to_string()))
    }
}

pub fn parse_callout_config(text: &str) -> Result<CalloutConfig, CalloutError> {
    let mut config = CalloutConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [name, provider] = fields[..] else {
            return Err(CalloutError::Syntax {
                line: idx + 1,
                message: format!("expected `<abstract-name> <provider-id>`, got {} field(s)", fields.len()),
            });
        };
        if let Some(prev) = config.bindings.insert(name.to_string(), provider.to_string()) {
            let warning = format!(
                "line {}: `{name}` rebound from `{prev}` to `{provider}`",
                idx + 1
            );
            log::warn!("{warning}");
            config.warnings.push(warning);
        }
    }
    Ok(config)
}

/// Record of one callout invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub abstract_name: String,
    pub provider: Option<String>,
    pub args_digest: String,
    pub result: CalloutResult,
    pub evidence: Option<Authorization>,
}

impl Invocation {
    pub fn decision(&self) -> Decision {
        self.result.to_decision()
    }
}

pub fn invoke(config: &CalloutConfig, registry: &Registry, abstract_name: &str, args: &CalloutArgs) -> Invocation {
    let args_digest = args.digest();
    let provider_id = config.provider_for(abstract_name).map(str::to_string);
    let response = match provider_id.as_deref() {
        None => CalloutResult::SystemFailure(format!("no provider bound to `{abstract_name}`")).into(),
        Some(id) => match registry.get(id) {
            None => CalloutResult::SystemFailure(format!("no provider `{id}` registered")).into(),
            Some(provider) => match catch_unwind(AssertUnwindSafe(|| provider.call(args))) {
                Ok(CalloutResponse {
                    result: CalloutResult::Denied(r),
                    evidence,
                }) if r.is_empty() => CalloutResponse {
                    result: CalloutResult::denied(r),
                    evidence,
                },
                Ok(response) => response,
                Err(panic) => {
                    let what = panic
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| panic.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "unknown panic".into());
                    CalloutResult::SystemFailure(format!("provider `{id}` failed: {what}")).into()
                }
            },
        },
    };
    log::debug!(
        "callout {abstract_name} -> {} args={args_digest} result={}",
        provider_id.as_deref().unwrap_or("-"),
        response.result
    );
    Invocation {
        abstract_name: abstract_name.to_string(),
        provider: provider_id,
        args_digest,
        result: response.result,
        evidence: response.evidence,
    }
}

/// Configuration and registry together; immutable once the service starts.
#[derive(Debug, Clone)]
pub struct CalloutSystem {
    pub config: CalloutConfig,
    pub registry: Registry,
}

impl CalloutSystem {
    pub fn new(config: CalloutConfig, registry: Registry) -> Self {
        CalloutSystem { config, registry }
    }

    /// Fails unless `gram-authz` is bound.
    pub fn validate(&self) -> Result<(), CalloutError> {
        self.config.require(GRAM_AUTHZ).map(|_| ())
    }

    pub fn invoke(&self, abstract_name: &str, args: &CalloutArgs) -> Invocation {
        invoke(&self.config, &self.registry, abstract_name, args)
    }

    pub fn authorize(&self, args: &CalloutArgs) -> Invocation {
        self.invoke(GRAM_AUTHZ, args)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parse_policy;

    const PAPER_POLICY: &str = include_str!("../../../fixtures/paper.policy");
    const BO: &str = "/O=Grid/O=Globus/OU=mcs.anl.gov/CN=Bo Liu";
    const KATE: &str = "/O=Grid/O=Globus/OU=mcs.anl.gov/CN=KateKeahey";

    fn dn(s: &str) -> GridIdentity {
        GridIdentity::parse(s).unwrap()
    }

    fn paper_store() -> Arc<PolicyStore> {
        Arc::new(PolicyStore::new(PolicyPair::new(
            parse_policy(PAPER_POLICY, PolicySource::Local).unwrap(),
            parse_policy(PAPER_POLICY, PolicySource::Vo).unwrap(),
        )))
    }

    fn kate_cancels(tag: &str) -> CalloutArgs {
        CalloutArgs::for_management(
            dn(KATE),
            Action::Cancel,
            format!("&(executable = test2)(jobtag = {tag})(count = 1)"),
            JobContext {
                job_id: "job-2".into(),
                jobowner: dn(BO),
                jobtag: Some(tag.into()),
                signal_kind: None,
            },
        )
    }

    #[test]
    fn config_parsing() {
        let c = parse_callout_config("gram-authz rsl-pep\n").unwrap();
        assert_eq!(c.provider_for(GRAM_AUTHZ), Some("rsl-pep"));
        assert!(c.warnings.is_empty());

        let empty = parse_callout_config("# nothing here\n\n").unwrap();
        assert_eq!(empty.require(GRAM_AUTHZ), Err(CalloutError::MissingBinding(GRAM_AUTHZ.into())));

        let c = parse_callout_config("gram-authz allow-all\ngram-authz deny-all\n").unwrap();
        assert_eq!(c.provider_for(GRAM_AUTHZ), Some("deny-all"));
        assert_eq!(c.warnings.len(), 1);

        let err = parse_callout_config("gram-authz\n").unwrap_err();
        assert!(matches!(err, CalloutError::Syntax { line: 1, .. }));
        let err = parse_callout_config("\ngram-authz a b\n").unwrap_err();
        assert!(matches!(err, CalloutError::Syntax { line: 2, .. }));
    }

    #[test]
    fn registry() {
        let mut r = Registry::with_builtins(paper_store());
        let audit_only: Arc<dyn AuthzCallout> = Arc::new(|_: &CalloutArgs| CalloutResult::Success);
        register_provider(&mut r, "audit-only", audit_only.clone()).unwrap();
        assert!(r.contains("audit-only"));
        assert_eq!(
            register_provider(&mut r, "rsl-pep", audit_only),
            Err(CalloutError::DuplicateProvider("rsl-pep".into()))
        );
    }

    #[test]
    fn invoke_paths() {
        let registry = Registry::with_builtins(paper_store());
        let pep = CalloutConfig::default().bind(GRAM_AUTHZ, "rsl-pep");
        let inv = invoke(&pep, &registry, GRAM_AUTHZ, &kate_cancels("NFC"));
        assert_eq!(inv.result, CalloutResult::Success);
        assert_eq!(inv.provider.as_deref(), Some("rsl-pep"));
        assert!(inv.evidence.is_some());
        assert_eq!(inv.args_digest.len(), 16);

        let inv = invoke(&pep, &registry, GRAM_AUTHZ, &kate_cancels("ADS"));
        assert!(matches!(inv.result, CalloutResult::Denied(_)));

        let deny = CalloutConfig::default().bind(GRAM_AUTHZ, "deny-all");
        let inv = invoke(&deny, &registry, GRAM_AUTHZ, &kate_cancels("NFC"));
        assert_eq!(inv.result, CalloutResult::Denied("deny-all".into()));

        let inv = invoke(&pep, &registry, "other", &kate_cancels("NFC"));
        assert!(matches!(inv.result, CalloutResult::SystemFailure(ref d) if d.contains("no provider")));

        let dangling = CalloutConfig::default().bind(GRAM_AUTHZ, "missing");
        let inv = invoke(&dangling, &registry, GRAM_AUTHZ, &kate_cancels("NFC"));
        assert!(matches!(inv.result, CalloutResult::SystemFailure(_)));
        assert_eq!(inv.decision(), Decision::Error("no provider `missing` registered".into()));
    }

    #[test]
    fn panicking_provider_is_a_system_failure() {
        let mut registry = Registry::new();
        registry
            .register("boom", Arc::new(|_: &CalloutArgs| -> CalloutResult { panic!("backend down") }))
            .unwrap();
        let config = CalloutConfig::default().bind(GRAM_AUTHZ, "boom");
        let inv = invoke(&config, &registry, GRAM_AUTHZ, &kate_cancels("NFC"));
        assert!(matches!(inv.result, CalloutResult::SystemFailure(ref d) if d.contains("backend down")));
        assert!(inv.decision().is_error());
    }

    #[test]
    fn empty_denial_reason_is_filled() {
        let mut registry = Registry::new();
        registry
            .register("mute", Arc::new(|_: &CalloutArgs| CalloutResult::Denied(String::new())))
            .unwrap();
        let config = CalloutConfig::default().bind(GRAM_AUTHZ, "mute");
        let inv = invoke(&config, &registry, GRAM_AUTHZ, &kate_cancels("NFC"));
        assert!(matches!(inv.result, CalloutResult::Denied(ref r) if !r.is_empty()));
    }

    #[test]
    fn result_mapping_is_a_bijection() {
        for d in [Decision::Permit, Decision::Deny("x".into()), Decision::Error("y".into())] {
            assert_eq!(CalloutResult::from_decision(&d).to_decision(), d);
        }
    }

    #[test]
    fn store_swaps_both_documents() {
        let store = paper_store();
        let before = store.snapshot();
        store.replace(PolicyPair::empty());
        assert!(before.local.statements.len() == 5 && before.vo.statements.len() == 5);
        let after = store.snapshot();
        assert!(after.local.is_empty() && after.vo.is_empty());
    }
}
