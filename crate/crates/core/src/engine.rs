//! Policy evaluation point.
//!
//! A document permits a request when every applicable requirement holds and
//! at least one applicable grant holds; anything else is a denial. The
//! resource owner's (LOCAL) and the VO's documents are evaluated separately
//! and their decisions conjoined.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::policy::{GridIdentity, PolicyDocument, PolicySource, PolicyStatement, StatementKind};
use crate::rsl::{JobDescription, Relation, RslAssertion, RslConjunction, RslValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Start,
    Cancel,
    Information,
    Signal,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Start, Action::Cancel, Action::Information, Action::Signal];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Start => "start",
            Action::Cancel => "cancel",
            Action::Information => "information",
            Action::Signal => "signal",
        }
    }

    pub fn is_management(self) -> bool {
        self != Action::Start
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown action `{0}` (expected start, cancel, information or signal)")]
pub struct UnknownAction(pub String);

impl FromStr for Action {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownAction(s.to_string()))
    }
}

/// Facts about an existing job, taken from the job manager's records rather
/// than from the client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobContext {
    pub job_id: String,
    pub jobowner: GridIdentity,
    pub jobtag: Option<String>,
    pub signal_kind: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RequestError {
    #[error("start requests carry no job context")]
    StartWithContext,
    #[error("start requests need a non-empty job description")]
    EmptyDescription,
    #[error("management action `{0}` needs a job context")]
    MissingContext(Action),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthorizationRequest {
    pub requester: GridIdentity,
    pub action: Action,
    pub description: JobDescription,
    pub job_context: Option<JobContext>,
}

impl AuthorizationRequest {
    pub fn new(
        requester: GridIdentity,
        action: Action,
        description: JobDescription,
        job_context: Option<JobContext>,
    ) -> Result<Self, RequestError> {
        match (action, &job_context) {
            (Action::Start, Some(_)) => return Err(RequestError::StartWithContext),
            (Action::Start, None) if description.is_empty() => {
                return Err(RequestError::EmptyDescription)
            }
            (a, None) if a.is_management() => return Err(RequestError::MissingContext(a)),
            _ => {}
        }
        Ok(AuthorizationRequest {
            requester,
            action,
            description,
            job_context,
        })
    }

    pub fn start(requester: GridIdentity, description: JobDescription) -> Result<Self, RequestError> {
        Self::new(requester, Action::Start, description, None)
    }

    pub fn management(
        requester: GridIdentity,
        action: Action,
        description: JobDescription,
        context: JobContext,
    ) -> Result<Self, RequestError> {
        Self::new(requester, action, description, Some(context))
    }

    /// Values an assertion on `attribute` is compared against. `None` means
    /// the attribute is absent.
    fn resolve(&self, attribute: &str) -> Option<Vec<RslValue>> {
        let text = |s: &str| vec![RslValue::Text(s.to_string())];
        match attribute {
            "action" => Some(text(self.action.as_str())),
            "jobowner" => self
                .job_context
                .as_ref()
                .map(|c| text(&c.jobowner.to_string())),
            "jobtag" => match &self.job_context {
                Some(c) => c.jobtag.as_deref().map(text),
                None => self.description.get("jobtag").map(<[_]>::to_vec),
            },
            "signal" => self
                .job_context
                .as_ref()
                .and_then(|c| c.signal_kind.as_deref())
                .map(text),
            other => self.description.get(other).map(<[_]>::to_vec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Decision {
    Permit,
    Deny(String),
    Error(String),
}

impl Decision {
    pub fn is_permit(&self) -> bool {
        matches!(self, Decision::Permit)
    }

    pub fn is_deny(&self) -> bool {
        matches!(self, Decision::Deny(_))
    }

    pub fn is_error(&self) -> bool {
        matches!(self, Decision::Error(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            Decision::Permit => "PERMIT",
            Decision::Deny(_) => "DENY",
            Decision::Error(_) => "ERROR",
        }
    }

    pub fn reason(&self) -> &str {
        match self {
            Decision::Permit => "",
            Decision::Deny(r) | Decision::Error(r) => r,
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Permit => f.write_str("PERMIT"),
            Decision::Deny(r) => write!(f, "DENY({r})"),
            Decision::Error(e) => write!(f, "ERROR({e})"),
        }
    }
}

/// Points at a statement of an evaluated document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatementRef {
    pub index: usize,
    pub line: usize,
    pub kind: StatementKind,
    pub text: String,
}

impl StatementRef {
    fn of(index: usize, s: &PolicyStatement) -> Self {
        StatementRef {
            index,
            line: s.source_line,
            kind: s.kind,
            text: s.to_string(),
        }
    }
}

impl fmt::Display for StatementRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.text)
        } else {
            write!(f, "#{}: {}", self.index, self.text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatementOutcome {
    pub statement: StatementRef,
    /// False for requirements whose `action` assertion does not cover the request.
    pub applicable: bool,
    pub held: bool,
    pub failing: Option<RslAssertion>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Explanation {
    pub source: PolicySource,
    pub label: String,
    pub matched_requirements: Vec<StatementOutcome>,
    pub matched_grants: Vec<StatementOutcome>,
    pub satisfying_grant: Option<StatementRef>,
}

impl Explanation {
    /// One-line summary, e.g. `req[2:held] grant[5:fail (count < 4)] grant[6:fail ...]`.
    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        let mut push = |tag: &str, o: &StatementOutcome| {
            let state = match (&o.failing, o.applicable) {
                (_, false) => "n/a".to_string(),
                (Some(a), _) => format!("fail {a}"),
                (None, _) => "held".to_string(),
            };
            parts.push(format!("{tag}[{}:{state}]", o.statement.line));
        };
        for o in &self.matched_requirements {
            push("req", o);
        }
        for o in &self.matched_grants {
            push("grant", o);
        }
        if parts.is_empty() {
            "no applicable statements".to_string()
        } else {
            parts.join(" ")
        }
    }
}

impl fmt::Display for Explanation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}] {}", self.source, self.label)?;
        if self.matched_requirements.is_empty() && self.matched_grants.is_empty() {
            return writeln!(f, "  no applicable statements");
        }
        for o in self.matched_requirements.iter().chain(&self.matched_grants) {
            let status = match (&o.failing, o.applicable) {
                (_, false) => "not applicable to this action".to_string(),
                (Some(a), _) => format!("FAILED at {a}"),
                (None, _) => "holds".to_string(),
            };
            writeln!(f, "  {:<11} {}  => {status}", o.statement.kind, o.statement)?;
        }
        match &self.satisfying_grant {
            Some(g) => writeln!(f, "  satisfied by {g}"),
            None => writeln!(f, "  no satisfying grant"),
        }
    }
}

fn literal_matches(value: &RslValue, literal: &RslValue, req: &AuthorizationRequest) -> bool {
    match literal {
        RslValue::SelfRef => identity_equals(value, &req.requester),
        RslValue::Text(t) if t.starts_with('/') => match GridIdentity::parse(t) {
            Ok(id) => identity_equals(value, &id),
            Err(_) => value.loosely_equals(literal),
        },
        _ => value.loosely_equals(literal),
    }
}

fn identity_equals(value: &RslValue, id: &GridIdentity) -> bool {
    match GridIdentity::parse(&value.as_text()) {
        Ok(v) => &v == id,
        Err(_) => false,
    }
}

pub fn evaluate_assertion(a: &RslAssertion, req: &AuthorizationRequest) -> bool {
    let resolved = req
        .resolve(a.attribute.as_str())
        .filter(|vs| vs.iter().any(|v| !v.is_empty()));
    match (a.relation, &a.value, resolved) {
        (Relation::Neq, RslValue::Null, present) => present.is_some(),
        (Relation::Eq, RslValue::Null, present) => present.is_none(),
        (Relation::Eq, _, None) => false,
        (Relation::Neq, _, None) => true,
        (Relation::Eq, lit, Some(vs)) => vs.iter().any(|v| literal_matches(v, lit, req)),
        (Relation::Neq, lit, Some(vs)) => !vs.iter().any(|v| literal_matches(v, lit, req)),
        (_, _, None) => false,
        (rel, lit, Some(vs)) => match lit.as_integer() {
            Some(bound) => vs
                .iter()
                .all(|v| v.as_integer().is_some_and(|n| rel.compare(n, bound))),
            None => false,
        },
    }
}

fn in_value_set(a: &RslAssertion) -> bool {
    a.relation == Relation::Eq && a.value != RslValue::Null
}

/// Evaluates a rule; on failure returns the first failing assertion. Equality
/// literals on one attribute are a disjunctive value set, reported by their
/// first member.
pub fn evaluate_rule<'r>(rule: &'r RslConjunction, req: &AuthorizationRequest) -> Result<(), &'r RslAssertion> {
    for (i, a) in rule.assertions.iter().enumerate() {
        if in_value_set(a) {
            let first_of_set = !rule.assertions[..i]
                .iter()
                .any(|b| in_value_set(b) && b.attribute == a.attribute);
            if !first_of_set {
                continue;
            }
            let any_holds = rule.assertions[i..]
                .iter()
                .filter(|b| in_value_set(b) && b.attribute == a.attribute)
                .any(|b| evaluate_assertion(b, req));
            if !any_holds {
                return Err(a);
            }
        } else if !evaluate_assertion(a, req) {
            return Err(a);
        }
    }
    Ok(())
}

fn requirement_applies(rule: &RslConjunction, req: &AuthorizationRequest) -> bool {
    rule.on("action").all(|a| evaluate_assertion(a, req))
}

pub fn evaluate_document(doc: &PolicyDocument, req: &AuthorizationRequest) -> (Decision, Explanation) {
    let mut explanation = Explanation {
        source: doc.source,
        label: doc.label.clone(),
        matched_requirements: Vec::new(),
        matched_grants: Vec::new(),
        satisfying_grant: None,
    };
    let mut first_violation: Option<(StatementRef, RslAssertion)> = None;

    for (index, s) in doc.applicable(&req.requester) {
        let statement = StatementRef::of(index, s);
        match s.kind {
            StatementKind::Requirement => {
                let applicable = requirement_applies(&s.rule, req);
                let failing = if applicable {
                    evaluate_rule(&s.rule, req).err().cloned()
                } else {
                    None
                };
                if let (Some(a), None) = (&failing, &first_violation) {
                    first_violation = Some((statement.clone(), a.clone()));
                }
                explanation.matched_requirements.push(StatementOutcome {
                    statement,
                    applicable,
                    held: failing.is_none(),
                    failing,
                });
            }
            StatementKind::Grant => {
                let failing = evaluate_rule(&s.rule, req).err().cloned();
                if failing.is_none() && explanation.satisfying_grant.is_none() {
                    explanation.satisfying_grant = Some(statement.clone());
                }
                explanation.matched_grants.push(StatementOutcome {
                    statement,
                    applicable: true,
                    held: failing.is_none(),
                    failing,
                });
            }
        }
    }

    let decision = if explanation.matched_requirements.is_empty() && explanation.matched_grants.is_empty() {
        Decision::Deny("no applicable statements".into())
    } else if let Some((statement, assertion)) = first_violation {
        Decision::Deny(format!("requirement violated: {statement} failed at {assertion}"))
    } else if explanation.satisfying_grant.is_none() {
        let failures: Vec<String> = explanation
            .matched_grants
            .iter()
            .filter_map(|o| o.failing.as_ref().map(|a| format!("line {} failed {a}", o.statement.line)))
            .collect();
        if failures.is_empty() {
            Decision::Deny("no grant satisfied".into())
        } else {
            Decision::Deny(format!("no grant satisfied ({})", failures.join("; ")))
        }
    } else {
        Decision::Permit
    };
    if !decision.is_permit() {
        explanation.satisfying_grant = None;
    }
    (decision, explanation)
}

pub fn combine_decisions(local: Decision, vo: Decision) -> Decision {
    use Decision::*;
    match (local, vo) {
        (Error(a), Error(b)) => Error(format!("{a}; {b}")),
        (Error(e), _) | (_, Error(e)) => Error(e),
        (Deny(a), Deny(b)) => Deny(format!("LOCAL: {a}; VO: {b}")),
        (Deny(r), Permit) => Deny(format!("LOCAL: {r}")),
        (Permit, Deny(r)) => Deny(format!("VO: {r}")),
        (Permit, Permit) => Permit,
    }
}

/// Outcome of evaluating one request against both policy sources.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Authorization {
    pub decision: Decision,
    pub local: (Decision, Explanation),
    pub vo: (Decision, Explanation),
}

pub fn authorize(local_doc: &PolicyDocument, vo_doc: &PolicyDocument, req: &AuthorizationRequest) -> Authorization {
    let local = evaluate_document(local_doc, req);
    let vo = evaluate_document(vo_doc, req);
    Authorization {
        decision: combine_decisions(local.0.clone(), vo.0.clone()),
        local,
        vo,
    }
}

pub fn evaluate_batch_sequential(doc: &PolicyDocument, requests: &[AuthorizationRequest]) -> Vec<Decision> {
    requests.iter().map(|r| evaluate_document(doc, r).0).collect()
}

pub fn authorize_batch_sequential(
    local_doc: &PolicyDocument,
    vo_doc: &PolicyDocument,
    requests: &[AuthorizationRequest],
) -> Vec<Decision> {
    requests
        .iter()
        .map(|r| authorize(local_doc, vo_doc, r).decision)
        .collect()
}

/// Evaluates many requests against one document. Runs on the rayon pool when
/// the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn evaluate_batch(doc: &PolicyDocument, requests: &[AuthorizationRequest]) -> Vec<Decision> {
    use rayon::prelude::*;
    requests.par_iter().map(|r| evaluate_document(doc, r).0).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn evaluate_batch(doc: &PolicyDocument, requests: &[AuthorizationRequest]) -> Vec<Decision> {
    evaluate_batch_sequential(doc, requests)
}

#[cfg(feature = "parallel")]
pub fn authorize_batch(
    local_doc: &PolicyDocument,
    vo_doc: &PolicyDocument,
    requests: &[AuthorizationRequest],
) -> Vec<Decision> {
    use rayon::prelude::*;
    requests
        .par_iter()
        .map(|r| authorize(local_doc, vo_doc, r).decision)
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn authorize_batch(
    local_doc: &PolicyDocument,
    vo_doc: &PolicyDocument,
    requests: &[AuthorizationRequest],
) -> Vec<Decision> {
    authorize_batch_sequential(local_doc, vo_doc, requests)
}
