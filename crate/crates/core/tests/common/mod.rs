//! Seeded generators and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use gram_authz::engine::{Action, AuthorizationRequest, JobContext};
use gram_authz::policy::{GridIdentity, PolicyDocument, PolicySource, PolicyStatement, StatementKind, SubjectPattern};
use gram_authz::rsl::{AttributeName, JobDescription, Relation, RslAssertion, RslConjunction, RslValue};

pub use rand::SeedableRng;
pub type Rng64 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const PAPER_POLICY: &str = include_str!("../../../../fixtures/paper.policy");
pub const PAPER_SIGNAL_POLICY: &str = include_str!("../../../../fixtures/paper-signal.policy");
pub const GRIDMAP: &str = include_str!("../../../../fixtures/grid-mapfile");

pub const MCS: &str = "/O=Grid/O=Globus/OU=mcs.anl.gov";
pub const BO: &str = "/O=Grid/O=Globus/OU=mcs.anl.gov/CN=Bo Liu";
pub const KATE: &str = "/O=Grid/O=Globus/OU=mcs.anl.gov/CN=KateKeahey";
pub const STRANGER: &str = "/O=Grid/O=Globus/OU=mcs.anl.gov/CN=Stranger";
pub const OUTSIDER: &str = "/O=Grid/O=Elsewhere/CN=Eve";

pub fn dn(s: &str) -> GridIdentity {
    GridIdentity::parse(s).unwrap()
}

pub fn fixtures_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn scenarios_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn attr(name: &str) -> AttributeName {
    AttributeName::new(name).unwrap()
}

fn text(s: &str) -> RslValue {
    RslValue::Text(s.to_string())
}

fn assertion(name: &str, rel: Relation, value: RslValue) -> RslAssertion {
    RslAssertion::new(attr(name), rel, value)
}

// --- Small-domain policies and requests -----------------------------------

pub const SUBJECTS: [&str; 6] = [
    "/O=Grid",
    "/O=Grid/O=Globus",
    MCS,
    BO,
    KATE,
    OUTSIDER,
];
pub const REQUESTERS: [&str; 4] = [BO, KATE, STRANGER, OUTSIDER];
pub const EXECUTABLES: [&str; 3] = ["test1", "test2", "TRANSP"];
pub const DIRECTORIES: [&str; 2] = ["/sandbox/test", "/tmp"];
pub const JOBTAGS: [&str; 2] = ["ADS", "NFC"];
const ORDERING: [Relation; 4] = [Relation::Lt, Relation::Gt, Relation::Le, Relation::Ge];

/// A rule over the small domain: usually one action assertion plus up to
/// three constraints.
pub fn small_rule(r: &mut Rng64) -> RslConjunction {
    let mut a = Vec::new();
    if r.gen_bool(0.85) {
        let act = *Action::ALL.choose(r).unwrap();
        let rel = if r.gen_bool(0.8) { Relation::Eq } else { Relation::Neq };
        a.push(assertion("action", rel, text(act.as_str())));
    }
    for _ in 0..r.gen_range(0..=3) {
        a.push(match r.gen_range(0..7) {
            0 => assertion("executable", Relation::Eq, text(EXECUTABLES.choose(r).unwrap())),
            1 => assertion("executable", Relation::Neq, text(EXECUTABLES.choose(r).unwrap())),
            2 => assertion("directory", Relation::Eq, text(DIRECTORIES.choose(r).unwrap())),
            3 => assertion("jobtag", Relation::Eq, text(JOBTAGS.choose(r).unwrap())),
            4 => {
                let rel = if r.gen_bool(0.5) { Relation::Eq } else { Relation::Neq };
                assertion("jobtag", rel, RslValue::Null)
            }
            5 => assertion("count", *ORDERING.choose(r).unwrap(), RslValue::Integer(r.gen_range(0..7))),
            _ => assertion("jobowner", Relation::Eq, RslValue::SelfRef),
        });
    }
    if a.is_empty() {
        a.push(assertion("count", Relation::Ge, RslValue::Integer(1)));
    }
    RslConjunction::new(a)
}

pub fn small_document(r: &mut Rng64, source: PolicySource, max_statements: usize) -> PolicyDocument {
    let n = r.gen_range(0..=max_statements);
    let statements = (0..n)
        .map(|_| {
            let kind = if r.gen_bool(0.3) {
                StatementKind::Requirement
            } else {
                StatementKind::Grant
            };
            PolicyStatement::new(SubjectPattern(dn(SUBJECTS.choose(r).unwrap())), kind, small_rule(r))
        })
        .collect();
    PolicyDocument::new(source, statements)
}

pub fn small_description(r: &mut Rng64) -> JobDescription {
    let mut jd = JobDescription::new();
    jd.push(attr("executable"), text(EXECUTABLES.choose(r).unwrap()));
    jd.push(attr("directory"), text(DIRECTORIES.choose(r).unwrap()));
    if r.gen_bool(0.7) {
        jd.push(attr("jobtag"), text(JOBTAGS.choose(r).unwrap()));
    }
    jd.push(attr("count"), RslValue::Integer(r.gen_range(1..=5)));
    jd
}

pub fn small_request(r: &mut Rng64) -> AuthorizationRequest {
    let requester = dn(REQUESTERS.choose(r).unwrap());
    let action = *Action::ALL.choose(r).unwrap();
    let description = small_description(r);
    if action == Action::Start {
        return AuthorizationRequest::start(requester, description).unwrap();
    }
    let context = JobContext {
        job_id: format!("job-{}", r.gen_range(1..100)),
        jobowner: dn(REQUESTERS.choose(r).unwrap()),
        jobtag: description.jobtag(),
        signal_kind: (action == Action::Signal)
            .then(|| ["suspend", "resume", "priority"].choose(r).unwrap().to_string()),
    };
    AuthorizationRequest::management(requester, action, description, context).unwrap()
}

// --- Wide-alphabet generators for round-trips -----------------------------

const WORDS: [&str; 12] = [
    "test1", "/sandbox/test", "a b", "say \"hi\"", "NULL", "SELF", "null", "self", "007", "-3x", "(paren)", "é≠",
];

pub fn any_value(r: &mut Rng64, allow_special: bool) -> RslValue {
    match r.gen_range(0..if allow_special { 6 } else { 4 }) {
        0 => RslValue::Integer(r.gen_range(-1000..1000)),
        1 => text(WORDS.choose(r).unwrap()),
        2 => {
            let len = r.gen_range(0..8);
            RslValue::Text(
                (0..len)
                    .map(|_| *[' ', 'a', 'Z', '9', '"', '=', '<', '&', ')', '(', '_', '.', '-', '#', ':']
                        .choose(r)
                        .unwrap())
                    .collect(),
            )
        }
        3 => RslValue::Text(r.gen_range(-50i64..50).to_string()),
        4 => RslValue::Null,
        _ => RslValue::SelfRef,
    }
}

pub fn any_attribute(r: &mut Rng64) -> AttributeName {
    let first = *['a', 'c', 'j', 'x', 'q'].choose(r).unwrap();
    let len = r.gen_range(0..7);
    let rest: String = (0..len)
        .map(|_| *['a', 'e', 'r', '_', '1', '9', 't'].choose(r).unwrap())
        .collect();
    attr(&format!("{first}{rest}"))
}

/// Any conjunction the parser should accept. `policy` allows NULL/SELF
/// (never under an ordering relation).
pub fn any_conjunction(r: &mut Rng64, policy: bool) -> RslConjunction {
    let n = r.gen_range(1..6);
    let rels = [Relation::Eq, Relation::Neq, Relation::Lt, Relation::Gt, Relation::Le, Relation::Ge];
    RslConjunction::new(
        (0..n)
            .map(|_| {
                let relation = *rels.choose(r).unwrap();
                let value = any_value(r, policy && !relation.is_ordering());
                let mut name = any_attribute(r);
                if name.as_str() == "action" {
                    name = attr("act");
                }
                RslAssertion::new(name, relation, value)
            })
            .collect(),
    )
}

pub fn any_subject(r: &mut Rng64) -> GridIdentity {
    let keys = ["O", "OU", "CN", "L", "DC"];
    let vals = ["Grid", "Globus", "mcs.anl.gov", "Bo Liu", "Kate Keahey", "x-1", "Site 7"];
    let n = r.gen_range(1..5);
    let text: String = (0..n)
        .map(|_| format!("/{}={}", keys.choose(r).unwrap(), vals.choose(r).unwrap()))
        .collect();
    dn(&text)
}

/// Policy text as a person might write it: varied spacing, comments,
/// optional `&` on rules.
pub fn any_policy_text(r: &mut Rng64) -> String {
    let mut out = String::new();
    for b in 0..r.gen_range(1..5) {
        if b > 0 {
            out.push('\n');
        }
        if r.gen_bool(0.3) {
            out.push_str("# comment line\n");
        }
        if r.gen_bool(0.3) {
            out.push('&');
        }
        out.push_str(&any_subject(r).to_string());
        out.push_str(":\n");
        for _ in 0..r.gen_range(1..4) {
            let mut rule = any_conjunction(r, true);
            if r.gen_bool(0.7) {
                let act = *Action::ALL.choose(r).unwrap();
                rule.assertions
                    .insert(0, assertion("action", Relation::Eq, text(act.as_str())));
            }
            let mut line = rule.to_string();
            if r.gen_bool(0.5) {
                line = line.trim_start_matches('&').to_string();
            }
            if r.gen_bool(0.3) {
                line = line.replace(") (", ")(").replace(")(", ") (");
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}
