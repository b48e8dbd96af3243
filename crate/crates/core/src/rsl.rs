//! Conjunctive subset of the Resource Specification Language.
//!
//! Job requests and policy rules share one surface syntax: an optional
//! leading `&` followed by parenthesised `(attribute RELATION value)`
//! groups. Policy rules may additionally use the `NULL` and `SELF`
//! special values, which are rejected when a conjunction is turned into
//! a [`JobDescription`].

use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RslError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("ordering relation `{relation}` applied to special value {value} on `{attribute}` (byte {offset})")]
    OrderingOnSpecial {
        offset: usize,
        attribute: String,
        relation: Relation,
        value: RslValue,
    },
    #[error("job request uses a non-equality relation: {0}")]
    NonEqualityInRequest(String),
    #[error("job request uses a policy-only special value on `{0}`")]
    SpecialValueInRequest(String),
}

/// Lowercased RSL attribute name; construction is the only place case is folded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttributeName(String);

impl AttributeName {
    pub fn new(name: &str) -> Option<Self> {
        let folded = name.to_ascii_lowercase();
        let mut chars = folded.chars();
        match chars.next() {
            Some(c) if c.is_ascii_lowercase() => {}
            _ => return None,
        }
        if chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
            Some(AttributeName(folded))
        } else {
            None
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AttributeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RslValue {
    Text(String),
    Integer(i64),
    /// `NULL`: the absent/empty marker.
    Null,
    /// `SELF`: the requester's identity.
    SelfRef,
}

impl RslValue {
    pub fn is_special(&self) -> bool {
        matches!(self, RslValue::Null | RslValue::SelfRef)
    }

    /// Integer view of the value, accepting integer-parsable text.
    pub fn as_integer(&self) -> Option<i64> {
        match self {
            RslValue::Integer(n) => Some(*n),
            RslValue::Text(t) => parse_integer(t.trim()),
            _ => None,
        }
    }

    /// Plain text form as seen by a job (no quoting).
    pub fn as_text(&self) -> String {
        match self {
            RslValue::Text(t) => t.clone(),
            RslValue::Integer(n) => n.to_string(),
            RslValue::Null => "NULL".to_string(),
            RslValue::SelfRef => "SELF".to_string(),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, RslValue::Text(t) if t.is_empty())
    }

    /// Value equality used by policy evaluation: numeric when both sides are
    /// integers, textual otherwise.
    pub fn loosely_equals(&self, other: &RslValue) -> bool {
        match (self.as_integer(), other.as_integer()) {
            (Some(a), Some(b)) => a == b,
            _ => self.as_text() == other.as_text(),
        }
    }
}

impl fmt::Display for RslValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RslValue::Text(t) if needs_quoting(t) => {
                f.write_str("\"")?;
                f.write_str(&t.replace('"', "\"\""))?;
                f.write_str("\"")
            }
            other => f.write_str(&other.as_text()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Eq,
    Neq,
    Lt,
    Gt,
    Le,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "=",
            Relation::Neq => "!=",
            Relation::Lt => "<",
            Relation::Gt => ">",
            Relation::Le => "<=",
            Relation::Ge => ">=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, Relation::Eq | Relation::Neq)
    }

    /// Applies an ordering relation to two integers. Equality relations are
    /// answered numerically as well.
    pub fn compare(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Relation::Eq => lhs == rhs,
            Relation::Neq => lhs != rhs,
            Relation::Lt => lhs < rhs,
            Relation::Gt => lhs > rhs,
            Relation::Le => lhs <= rhs,
            Relation::Ge => lhs >= rhs,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RslAssertion {
    pub attribute: AttributeName,
    pub relation: Relation,
    pub value: RslValue,
}

impl RslAssertion {
    pub fn new(attribute: AttributeName, relation: Relation, value: RslValue) -> Self {
        RslAssertion {
            attribute,
            relation,
            value,
        }
    }
}

impl fmt::Display for RslAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {} {})", self.attribute, self.relation, self.value)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct RslConjunction {
    pub assertions: Vec<RslAssertion>,
}

impl RslConjunction {
    pub fn new(assertions: Vec<RslAssertion>) -> Self {
        RslConjunction { assertions }
    }

    pub fn is_empty(&self) -> bool {
        self.assertions.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RslAssertion> {
        self.assertions.iter()
    }

    /// Assertions on `name`, in source order.
    pub fn on<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a RslAssertion> + 'a {
        self.assertions
            .iter()
            .filter(move |a| a.attribute.as_str() == name)
    }
}

impl fmt::Display for RslConjunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("&")?;
        for a in &self.assertions {
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// Equality-only view of a submitted request: attribute name to values,
/// in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JobDescription {
    attributes: IndexMap<AttributeName, Vec<RslValue>>,
}

impl JobDescription {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&[RslValue]> {
        AttributeName::new(name)
            .and_then(|n| self.attributes.get(&n))
            .map(Vec::as_slice)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// First value of `name` as plain text.
    pub fn first_text(&self, name: &str) -> Option<String> {
        self.get(name)
            .and_then(|vs| vs.first())
            .map(RslValue::as_text)
    }

    pub fn jobtag(&self) -> Option<String> {
        self.first_text("jobtag")
    }

    /// Appends a value. Special values are not representable in a job
    /// description and are ignored.
    pub fn push(&mut self, name: AttributeName, value: RslValue) {
        if value.is_special() {
            return;
        }
        self.attributes.entry(name).or_default().push(value);
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AttributeName, &[RslValue])> {
        self.attributes.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn to_conjunction(&self) -> RslConjunction {
        let assertions = self
            .iter()
            .flat_map(|(name, values)| {
                values
                    .iter()
                    .map(move |v| RslAssertion::new(name.clone(), Relation::Eq, v.clone()))
            })
            .collect();
        RslConjunction::new(assertions)
    }
}

impl fmt::Display for JobDescription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_conjunction().fmt(f)
    }
}

pub fn parse_rsl(text: &str) -> Result<RslConjunction, RslError> {
    Parser::new(text).conjunction()
}

pub fn render_rsl(conj: &RslConjunction) -> String {
    conj.to_string()
}

pub fn to_job_description(conj: &RslConjunction) -> Result<JobDescription, RslError> {
    let mut jd = JobDescription::new();
    for a in conj.iter() {
        if a.relation != Relation::Eq {
            return Err(RslError::NonEqualityInRequest(a.to_string()));
        }
        if a.value.is_special() {
            return Err(RslError::SpecialValueInRequest(a.attribute.to_string()));
        }
        jd.push(a.attribute.clone(), a.value.clone());
    }
    Ok(jd)
}

/// Inserts `count = 1` when the request does not say how many processes it
/// wants, so that relational grants on `count` are decidable.
pub fn apply_defaults(mut jd: JobDescription) -> JobDescription {
    if !jd.contains("count") {
        jd.push(AttributeName("count".into()), RslValue::Integer(1));
    }
    jd
}

/// Parses a submitted request, enforces the equality-only rule and applies
/// defaults.
pub fn parse_request(text: &str) -> Result<JobDescription, RslError> {
    let conj = parse_rsl(text)?;
    to_job_description(&conj).map(apply_defaults)
}

fn parse_integer(token: &str) -> Option<i64> {
    let digits = token.strip_prefix(['+', '-']).unwrap_or(token);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    token.parse().ok()
}

fn is_bare_char(c: char) -> bool {
    !(c.is_whitespace() || matches!(c, '(' | ')' | '"' | '&'))
}

fn needs_quoting(text: &str) -> bool {
    text.is_empty()
        || !text.chars().all(is_bare_char)
        || text == "NULL"
        || text == "SELF"
        || parse_integer(text).is_some()
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn error<T>(&self, expected: &str) -> Result<T, RslError> {
        Err(RslError::Syntax {
            offset: self.pos,
            expected: expected.to_string(),
        })
    }

    fn expect(&mut self, c: char, what: &str) -> Result<(), RslError> {
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            self.error(what)
        }
    }

    fn conjunction(mut self) -> Result<RslConjunction, RslError> {
        self.skip_ws();
        if self.peek() == Some('&') {
            self.bump();
            self.skip_ws();
        }
        let mut assertions = Vec::new();
        loop {
            match self.peek() {
                Some('(') => assertions.push(self.group()?),
                None if !assertions.is_empty() => break,
                None => return self.error("`(` opening a relation"),
                Some(_) if assertions.is_empty() => return self.error("`(` opening a relation"),
                Some(_) => return self.error("`(` or end of input"),
            }
            self.skip_ws();
        }
        Ok(RslConjunction::new(assertions))
    }

    fn group(&mut self) -> Result<RslAssertion, RslError> {
        self.expect('(', "`(`")?;
        self.skip_ws();
        let attribute = self.attribute()?;
        self.skip_ws();
        let relation = self.relation()?;
        self.skip_ws();
        let value_offset = self.pos;
        let value = self.value()?;
        self.skip_ws();
        self.expect(')', "`)` closing the relation")?;
        if relation.is_ordering() && value.is_special() {
            return Err(RslError::OrderingOnSpecial {
                offset: value_offset,
                attribute: attribute.to_string(),
                relation,
                value,
            });
        }
        Ok(RslAssertion::new(attribute, relation, value))
    }

    fn attribute(&mut self) -> Result<AttributeName, RslError> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            self.bump();
        }
        match AttributeName::new(&self.src[start..self.pos]) {
            Some(name) => Ok(name),
            None => {
                self.pos = start;
                self.error("attribute name")
            }
        }
    }

    fn relation(&mut self) -> Result<Relation, RslError> {
        let rel = match self.peek() {
            Some('=') => Relation::Eq,
            Some('!') => {
                self.bump();
                if self.peek() != Some('=') {
                    return self.error("`=` after `!`");
                }
                Relation::Neq
            }
            Some('<') => {
                self.bump();
                if self.peek() == Some('=') {
                    Relation::Le
                } else {
                    return Ok(Relation::Lt);
                }
            }
            Some('>') => {
                self.bump();
                if self.peek() == Some('=') {
                    Relation::Ge
                } else {
                    return Ok(Relation::Gt);
                }
            }
            _ => return self.error("relation operator (=, !=, <, >, <=, >=)"),
        };
        self.bump();
        Ok(rel)
    }

    fn value(&mut self) -> Result<RslValue, RslError> {
        match self.peek() {
            Some('"') => {
                self.bump();
                let mut text = String::new();
                loop {
                    match self.bump() {
                        Some('"') if self.peek() == Some('"') => {
                            self.bump();
                            text.push('"');
                        }
                        Some('"') => return Ok(RslValue::Text(text)),
                        Some(c) => text.push(c),
                        None => return self.error("closing `\"`"),
                    }
                }
            }
            Some(c) if is_bare_char(c) => {
                let start = self.pos;
                while self.peek().is_some_and(is_bare_char) {
                    self.bump();
                }
                let token = &self.src[start..self.pos];
                Ok(match token {
                    "NULL" => RslValue::Null,
                    "SELF" => RslValue::SelfRef,
                    _ => parse_integer(token)
                        .map(RslValue::Integer)
                        .unwrap_or_else(|| RslValue::Text(token.to_string())),
                })
            }
            _ => self.error("value"),
        }
    }
}
