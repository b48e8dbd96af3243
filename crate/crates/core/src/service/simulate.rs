//! Scripted driver: one request per line, optionally followed by
//! `=> expected-prefix`. `#` starts a comment line.

use std::fmt;

use super::Service;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub line: usize,
    pub request: String,
    pub expected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    pub step: Step,
    pub response: String,
}

impl StepResult {
    pub fn matched(&self) -> bool {
        self.step
            .expected
            .as_deref()
            .is_none_or(|e| self.response.starts_with(e))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Transcript {
    pub steps: Vec<StepResult>,
}

impl Transcript {
    pub fn all_matched(&self) -> bool {
        self.steps.iter().all(StepResult::matched)
    }

    pub fn failures(&self) -> impl Iterator<Item = &StepResult> {
        self.steps.iter().filter(|s| !s.matched())
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            writeln!(f, "> {}", s.step.request)?;
            writeln!(f, "< {}", s.response)?;
            if !s.matched() {
                writeln!(
                    f,
                    "!! line {}: expected prefix `{}`",
                    s.step.line,
                    s.step.expected.as_deref().unwrap_or_default()
                )?;
            }
        }
        Ok(())
    }
}

/// Splits at the first `=>` outside a quoted value.
fn split_expectation(line: &str) -> (&str, Option<&str>) {
    let mut quoted = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if quoted => escaped = true,
            '"' => quoted = !quoted,
            '=' if !quoted && line[i..].starts_with("=>") => {
                return (line[..i].trim(), Some(line[i + 2..].trim()));
            }
            _ => {}
        }
    }
    (line.trim(), None)
}

pub fn parse_script(text: &str) -> Vec<Step> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                return None;
            }
            let (request, expected) = split_expectation(line);
            Some(Step {
                line: i + 1,
                request: request.to_string(),
                expected: expected.map(str::to_string),
            })
        })
        .collect()
}

pub fn run_script(service: &Service, text: &str) -> Transcript {
    Transcript {
        steps: parse_script(text)
            .into_iter()
            .map(|step| StepResult {
                response: service.handle_request(&step.request),
                step,
            })
            .collect(),
    }
}
