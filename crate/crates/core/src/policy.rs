//! Policy documents: DN subject lines followed by RSL rule lines.
//!
//! ```text
//! &/O=Grid/O=Globus/OU=mcs.anl.gov:
//! (action = start)(jobtag != NULL)
//!
//! /O=Grid/O=Globus/OU=mcs.anl.gov/CN=Bo Liu:
//! &(action = start)(executable = test1)(jobtag = ADS)(count<4)
//! ```
//!
//! A `&` in front of the subject makes every rule of the block a
//! requirement; otherwise the rules are grants.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::rsl::{parse_rsl, RslConjunction, RslValue, Relation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: subject `{subject}` has no rules")]
    EmptyBlock { line: usize, subject: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid distinguished name `{text}`: {reason}")]
pub struct IdentityError {
    pub text: String,
    pub reason: &'static str,
}

/// A Grid distinguished name, `/KEY=value/...`. Keys are stored uppercased,
/// values are trimmed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridIdentity {
    components: Vec<(String, String)>,
}

impl GridIdentity {
    pub fn parse(text: &str) -> Result<Self, IdentityError> {
        let err = |reason| IdentityError {
            text: text.to_string(),
            reason,
        };
        let body = text
            .trim()
            .strip_prefix('/')
            .ok_or_else(|| err("must start with `/`"))?;
        let mut components = Vec::new();
        for part in body.split('/') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| err("component without `=`"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(err("empty component key"));
            }
            components.push((key.to_ascii_uppercase(), value.trim().to_string()));
        }
        Ok(GridIdentity { components })
    }

    pub fn components(&self) -> &[(String, String)] {
        &self.components
    }

    /// Component-wise prefix test.
    pub fn starts_with(&self, prefix: &GridIdentity) -> bool {
        prefix.components.len() <= self.components.len()
            && prefix
                .components
                .iter()
                .zip(&self.components)
                .all(|(p, c)| p == c)
    }
}

impl FromStr for GridIdentity {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GridIdentity::parse(s)
    }
}

impl fmt::Display for GridIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.components {
            write!(f, "/{k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubjectPattern(pub GridIdentity);

impl SubjectPattern {
    pub fn matches(&self, identity: &GridIdentity) -> bool {
        identity.starts_with(&self.0)
    }
}

impl fmt::Display for SubjectPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub fn match_subject(pattern: &SubjectPattern, identity: &GridIdentity) -> bool {
    pattern.matches(identity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatementKind {
    Requirement,
    Grant,
}

impl fmt::Display for StatementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StatementKind::Requirement => "REQUIREMENT",
            StatementKind::Grant => "GRANT",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicySource {
    Vo,
    Local,
}

impl PolicySource {
    pub fn label(self) -> &'static str {
        match self {
            PolicySource::Vo => "VO",
            PolicySource::Local => "LOCAL",
        }
    }
}

impl fmt::Display for PolicySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyStatement {
    pub subject: SubjectPattern,
    pub kind: StatementKind,
    pub rule: RslConjunction,
    /// 1-based line of the rule in its source document (0 when built in code).
    pub source_line: usize,
}

impl PolicyStatement {
    pub fn new(subject: SubjectPattern, kind: StatementKind, rule: RslConjunction) -> Self {
        PolicyStatement {
            subject,
            kind,
            rule,
            source_line: 0,
        }
    }

    /// Same subject, kind and rule; ignores where it came from.
    pub fn same_content(&self, other: &PolicyStatement) -> bool {
        self.subject == other.subject && self.kind == other.kind && self.rule == other.rule
    }
}

impl fmt::Display for PolicyStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kind == StatementKind::Requirement {
            f.write_str("&")?;
        }
        write!(f, "{}: {}", self.subject, self.rule)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyDocument {
    pub statements: Vec<PolicyStatement>,
    pub source: PolicySource,
    pub label: String,
}

impl PolicyDocument {
    pub fn empty(source: PolicySource) -> Self {
        PolicyDocument {
            statements: Vec::new(),
            source,
            label: source.label().to_string(),
        }
    }

    pub fn new(source: PolicySource, statements: Vec<PolicyStatement>) -> Self {
        PolicyDocument {
            statements,
            source,
            label: source.label().to_string(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn applicable<'a>(
        &'a self,
        identity: &'a GridIdentity,
    ) -> impl Iterator<Item = (usize, &'a PolicyStatement)> + 'a {
        self.statements
            .iter()
            .enumerate()
            .filter(move |(_, s)| s.subject.matches(identity))
    }
}

pub fn parse_policy(text: &str, source: PolicySource) -> Result<PolicyDocument, PolicyError> {
    struct Block {
        subject: SubjectPattern,
        kind: StatementKind,
        line: usize,
        rules: usize,
    }

    let mut statements = Vec::new();
    let mut block: Option<Block> = None;

    let close = |block: &mut Option<Block>| -> Result<(), PolicyError> {
        match block.take() {
            Some(b) if b.rules == 0 => Err(PolicyError::EmptyBlock {
                line: b.line,
                subject: b.subject.to_string(),
            }),
            _ => Ok(()),
        }
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            close(&mut block)?;
            continue;
        }
        if let Some(subject_text) = line.strip_suffix(':') {
            close(&mut block)?;
            let (kind, dn) = match subject_text.trim_start().strip_prefix('&') {
                Some(rest) => (StatementKind::Requirement, rest),
                None => (StatementKind::Grant, subject_text),
            };
            let identity = GridIdentity::parse(dn).map_err(|e| PolicyError::Syntax {
                line: line_no,
                message: e.to_string(),
            })?;
            block = Some(Block {
                subject: SubjectPattern(identity),
                kind,
                line: line_no,
                rules: 0,
            });
            continue;
        }
        let Some(current) = block.as_mut() else {
            return Err(PolicyError::Syntax {
                line: line_no,
                message: "rule line without a preceding subject line".into(),
            });
        };
        let rule = parse_rsl(line).map_err(|e| PolicyError::Syntax {
            line: line_no,
            message: e.to_string(),
        })?;
        if rule.on("action").count() > 1 {
            return Err(PolicyError::Syntax {
                line: line_no,
                message: "more than one `action` assertion in a rule".into(),
            });
        }
        current.rules += 1;
        statements.push(PolicyStatement {
            subject: current.subject.clone(),
            kind: current.kind,
            rule,
            source_line: line_no,
        });
    }
    close(&mut block)?;
    Ok(PolicyDocument::new(source, statements))
}

/// Canonical text form. Consecutive statements sharing subject and kind are
/// printed as one block.
pub fn render_policy(doc: &PolicyDocument) -> String {
    let mut out = String::new();
    let mut prev: Option<(&SubjectPattern, StatementKind)> = None;
    for s in &doc.statements {
        if prev != Some((&s.subject, s.kind)) {
            if prev.is_some() {
                out.push('\n');
            }
            if s.kind == StatementKind::Requirement {
                out.push('&');
            }
            out.push_str(&format!("{}:\n", s.subject));
            prev = Some((&s.subject, s.kind));
        }
        out.push_str(&s.rule.to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LintKind {
    Unsatisfiable,
    GrantWithoutAction,
    OrderingOnNonInteger,
    SelfOutsideJobowner,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LintWarning {
    pub line: usize,
    pub kind: LintKind,
    pub message: String,
}

impl fmt::Display for LintWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

pub fn lint_policy(doc: &PolicyDocument) -> Vec<LintWarning> {
    let mut warnings = Vec::new();
    for s in &doc.statements {
        let mut warn = |kind, message: String| {
            warnings.push(LintWarning {
                line: s.source_line,
                kind,
                message,
            })
        };
        if let Some(reason) = unsatisfiable(&s.rule) {
            warn(
                LintKind::Unsatisfiable,
                format!("rule {} can never hold: {reason}", s.rule),
            );
        }
        if s.kind == StatementKind::Grant && s.rule.on("action").next().is_none() {
            warn(
                LintKind::GrantWithoutAction,
                format!("grant {} has no `action` assertion", s.rule),
            );
        }
        for a in s.rule.iter() {
            if a.relation.is_ordering() && a.value.as_integer().is_none() {
                warn(
                    LintKind::OrderingOnNonInteger,
                    format!("ordering relation on non-integer literal in {a}"),
                );
            }
            if a.value == RslValue::SelfRef && a.attribute.as_str() != "jobowner" {
                warn(
                    LintKind::SelfOutsideJobowner,
                    format!("SELF used with `{}` instead of `jobowner` in {a}", a.attribute),
                );
            }
        }
    }
    warnings
}

/// Per-attribute satisfiability check. Equality literals on one attribute
/// form a disjunctive value set; every other assertion conjoins.
fn unsatisfiable(rule: &RslConjunction) -> Option<String> {
    #[derive(Default)]
    struct Constraint<'a> {
        lo: Option<i128>,
        hi: Option<i128>,
        ordered: bool,
        eq: Vec<&'a RslValue>,
        neq: Vec<&'a RslValue>,
        must_be_absent: bool,
        must_be_present: bool,
    }

    let mut by_attr: BTreeMap<&str, Constraint> = BTreeMap::new();
    for a in rule.iter() {
        let c = by_attr.entry(a.attribute.as_str()).or_default();
        match (a.relation, &a.value) {
            (Relation::Eq, RslValue::Null) => c.must_be_absent = true,
            (Relation::Neq, RslValue::Null) => c.must_be_present = true,
            (Relation::Eq, v) => c.eq.push(v),
            (Relation::Neq, v) => c.neq.push(v),
            (rel, v) => {
                c.ordered = true;
                let Some(n) = v.as_integer() else { continue };
                let n = n as i128;
                let (lo, hi) = match rel {
                    Relation::Lt => (None, Some(n - 1)),
                    Relation::Le => (None, Some(n)),
                    Relation::Gt => (Some(n + 1), None),
                    _ => (Some(n), None),
                };
                if let Some(lo) = lo {
                    c.lo = Some(c.lo.map_or(lo, |cur| cur.max(lo)));
                }
                if let Some(hi) = hi {
                    c.hi = Some(c.hi.map_or(hi, |cur| cur.min(hi)));
                }
            }
        }
    }

    for (name, c) in &by_attr {
        if let (Some(lo), Some(hi)) = (c.lo, c.hi) {
            if lo > hi {
                return Some(format!("empty integer range for `{name}`"));
            }
        }
        if c.must_be_absent && (c.must_be_present || c.ordered || !c.eq.is_empty()) {
            return Some(format!("`{name}` must be both absent and present"));
        }
        if !c.eq.is_empty() {
            let admissible = c.eq.iter().any(|v| {
                let in_range = if c.ordered {
                    v.as_integer().is_some_and(|n| {
                        let n = n as i128;
                        c.lo.is_none_or(|lo| n >= lo) && c.hi.is_none_or(|hi| n <= hi)
                    })
                } else {
                    true
                };
                let excluded = **v != RslValue::SelfRef && c.neq.iter().any(|x| x.loosely_equals(v));
                in_range && !excluded
            });
            if !admissible {
                return Some(format!("no listed value of `{name}` satisfies the other constraints"));
            }
        }
    }
    None
}
