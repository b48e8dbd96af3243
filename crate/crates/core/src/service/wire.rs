//! `key="value"` line codec shared by the protocol, the audit log and the
//! event log. Values are bare when they consist of safe characters,
//! otherwise double-quoted with `\"`, `\\` and `\n` escapes.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("missing field `{0}`")]
    Missing(String),
    #[error("field `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn is_bare(c: char) -> bool {
    c.is_ascii_alphanumeric() || "_./:+-@,".contains(c)
}

pub fn quote(value: &str) -> String {
    if !value.is_empty() && value.chars().all(is_bare) {
        return value.to_string();
    }
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Ordered key/value pairs of one line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Fields {
    pairs: Vec<(String, String)>,
}

impl Fields {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl AsRef<str>) -> Self {
        self.push(key, value);
        self
    }

    pub fn push(&mut self, key: &str, value: impl AsRef<str>) {
        self.pairs.push((key.to_string(), value.as_ref().to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, WireError> {
        self.get(key).ok_or_else(|| WireError::Missing(key.to_string()))
    }

    pub fn parse_as<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, WireError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| WireError::Invalid {
                    key: key.to_string(),
                    message: e.to_string(),
                })
            })
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|(k, _)| k.as_str())
    }

    pub fn encode(&self) -> String {
        let mut out = String::new();
        for (i, (k, v)) in self.pairs.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{k}={}", quote(v));
        }
        out
    }
}

pub fn parse_fields(text: &str) -> Result<Fields, WireError> {
    let mut fields = Fields::new();
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    let malformed = |offset: usize, message: &str| WireError::Malformed {
        offset,
        message: message.to_string(),
    };
    while i < bytes.len() {
        if bytes[i].1.is_whitespace() {
            i += 1;
            continue;
        }
        let key_start = i;
        while i < bytes.len() && (bytes[i].1.is_ascii_alphanumeric() || bytes[i].1 == '_' || bytes[i].1 == '-') {
            i += 1;
        }
        if i == key_start {
            return Err(malformed(bytes[i].0, "expected a key"));
        }
        let key: String = bytes[key_start..i].iter().map(|(_, c)| c).collect();
        if i >= bytes.len() || bytes[i].1 != '=' {
            let at = bytes.get(i).map_or(text.len(), |b| b.0);
            return Err(malformed(at, "expected `=` after key"));
        }
        i += 1;
        let mut value = String::new();
        if i < bytes.len() && bytes[i].1 == '"' {
            let open = bytes[i].0;
            i += 1;
            loop {
                let Some(&(_, c)) = bytes.get(i) else {
                    return Err(malformed(open, "unterminated quoted value"));
                };
                i += 1;
                match c {
                    '"' => break,
                    '\\' => {
                        let Some(&(at, esc)) = bytes.get(i) else {
                            return Err(malformed(open, "unterminated quoted value"));
                        };
                        i += 1;
                        match esc {
                            '"' => value.push('"'),
                            '\\' => value.push('\\'),
                            'n' => value.push('\n'),
                            _ => return Err(malformed(at, "unknown escape")),
                        }
                    }
                    c => value.push(c),
                }
            }
            if i < bytes.len() && !bytes[i].1.is_whitespace() {
                return Err(malformed(bytes[i].0, "expected whitespace after quoted value"));
            }
        } else {
            while i < bytes.len() && !bytes[i].1.is_whitespace() {
                if bytes[i].1 == '"' {
                    return Err(malformed(bytes[i].0, "stray quote in bare value"));
                }
                value.push(bytes[i].1);
                i += 1;
            }
        }
        fields.pairs.push((key, value));
    }
    Ok(fields)
}

/// Splits `VERB rest...` and parses the rest as fields.
pub fn parse_command(line: &str) -> Result<(String, Fields), WireError> {
    let line = line.trim();
    let (verb, rest) = line
        .split_once(char::is_whitespace)
        .unwrap_or((line, ""));
    if verb.is_empty() {
        return Err(WireError::Malformed {
            offset: 0,
            message: "empty request".into(),
        });
    }
    Ok((verb.to_ascii_uppercase(), parse_fields(rest)?))
}
