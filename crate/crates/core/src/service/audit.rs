use std::fmt;
use std::io;

use crate::callout::Invocation;
use crate::engine::{Action, Decision, Explanation};

use super::log::{read_records, CorruptLog, LogFile};
use super::wire::Fields;

/// Which decision point produced an audited decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AuditSource {
    Gate,
    LocalPep,
    VoPep,
    /// Both PEPs agreed (permit, or both denied).
    BothPeps,
    SelfRule,
    /// A provider other than the policy evaluator.
    Callout,
}

impl AuditSource {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditSource::Gate => "GATE",
            AuditSource::LocalPep => "LOCAL-PEP",
            AuditSource::VoPep => "VO-PEP",
            AuditSource::BothPeps => "LOCAL-PEP+VO-PEP",
            AuditSource::SelfRule => "SELF-RULE",
            AuditSource::Callout => "CALLOUT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            AuditSource::Gate,
            AuditSource::LocalPep,
            AuditSource::VoPep,
            AuditSource::BothPeps,
            AuditSource::SelfRule,
            AuditSource::Callout,
        ]
        .into_iter()
        .find(|a| a.as_str() == s)
    }
}

impl fmt::Display for AuditSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub sequence: u64,
    pub time: u64,
    pub requester: String,
    pub action: Action,
    pub job_id: Option<String>,
    pub decision: Decision,
    /// Satisfying grant(s) or the failing statement.
    pub evidence: String,
    pub source: AuditSource,
    pub provider: Option<String>,
    pub args_digest: Option<String>,
}

impl AuditRecord {
    /// Record for a decision taken by a callout.
    pub fn from_invocation(
        time: u64,
        requester: String,
        action: Action,
        job_id: Option<String>,
        inv: &Invocation,
    ) -> Self {
        let decision = inv.decision();
        let (source, evidence) = match &inv.evidence {
            Some(auth) => {
                let source = match (&auth.local.0, &auth.vo.0) {
                    (Decision::Permit, Decision::Permit) => AuditSource::BothPeps,
                    (Decision::Permit, _) => AuditSource::VoPep,
                    (_, Decision::Permit) => AuditSource::LocalPep,
                    _ => AuditSource::BothPeps,
                };
                let evidence = format!(
                    "LOCAL: {} | VO: {}",
                    side_evidence(&auth.local.0, &auth.local.1),
                    side_evidence(&auth.vo.0, &auth.vo.1)
                );
                (source, evidence)
            }
            None => (AuditSource::Callout, inv.result.to_string()),
        };
        AuditRecord {
            sequence: 0,
            time,
            requester,
            action,
            job_id,
            decision,
            evidence,
            source,
            provider: inv.provider.clone(),
            args_digest: Some(inv.args_digest.clone()),
        }
    }

    pub fn simple(
        time: u64,
        requester: String,
        action: Action,
        job_id: Option<String>,
        decision: Decision,
        source: AuditSource,
        evidence: String,
    ) -> Self {
        AuditRecord {
            sequence: 0,
            time,
            requester,
            action,
            job_id,
            decision,
            evidence,
            source,
            provider: None,
            args_digest: None,
        }
    }

    pub fn to_fields(&self) -> Fields {
        let mut f = Fields::new()
            .with("seq", self.sequence.to_string())
            .with("time", self.time.to_string())
            .with("requester", &self.requester)
            .with("action", self.action.as_str())
            .with("job", self.job_id.as_deref().unwrap_or("-"))
            .with("decision", self.decision.label())
            .with("reason", self.decision.reason())
            .with("source", self.source.as_str())
            .with("evidence", &self.evidence);
        if let Some(p) = &self.provider {
            f.push("provider", p);
        }
        if let Some(d) = &self.args_digest {
            f.push("args", d);
        }
        f
    }

    pub fn from_fields(f: &Fields) -> Result<Self, String> {
        let get = |k: &str| f.require(k).map_err(|e| e.to_string());
        let num = |k: &str| -> Result<u64, String> {
            get(k)?.parse().map_err(|_| format!("`{k}` is not a number"))
        };
        let reason = get("reason")?.to_string();
        let decision = match get("decision")? {
            "PERMIT" => Decision::Permit,
            "DENY" => Decision::Deny(reason),
            "ERROR" => Decision::Error(reason),
            other => return Err(format!("unknown decision `{other}`")),
        };
        Ok(AuditRecord {
            sequence: num("seq")?,
            time: num("time")?,
            requester: get("requester")?.to_string(),
            action: get("action")?.parse().map_err(|e: crate::engine::UnknownAction| e.to_string())?,
            job_id: Some(get("job")?).filter(|j| *j != "-").map(str::to_string),
            decision,
            evidence: get("evidence")?.to_string(),
            source: AuditSource::parse(get("source")?).ok_or("unknown source")?,
            provider: f.get("provider").map(str::to_string),
            args_digest: f.get("args").map(str::to_string),
        })
    }
}

fn side_evidence(decision: &Decision, explanation: &Explanation) -> String {
    match (decision, &explanation.satisfying_grant) {
        (Decision::Permit, Some(g)) => format!("granted by {g}"),
        _ => decision.reason().to_string(),
    }
}

/// In-memory audit trail with an optional file sink.
#[derive(Debug, Default)]
pub struct AuditLog {
    records: Vec<AuditRecord>,
    next: u64,
    file: Option<LogFile>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        AuditLog {
            records: Vec::new(),
            next: 1,
            file: None,
        }
    }

    /// Opens a file sink, continuing the sequence of any records already in it.
    pub fn with_file(file: LogFile, existing: &str) -> Result<Self, CorruptLog> {
        let records = read_records(existing)?
            .iter()
            .map(|f| {
                AuditRecord::from_fields(f).map_err(|message| CorruptLog {
                    sequence: f.get("seq").and_then(|s| s.parse().ok()).unwrap_or(0),
                    message,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AuditLog {
            next: records.len() as u64 + 1,
            records,
            file: Some(file),
        })
    }

    pub fn write_audit(&mut self, mut record: AuditRecord) -> io::Result<u64> {
        record.sequence = self.next;
        if let Some(file) = &mut self.file {
            file.append(&record.to_fields().encode())?;
        }
        self.next += 1;
        self.records.push(record);
        Ok(self.next - 1)
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }
}

pub fn parse_audit_log(text: &str) -> Result<Vec<AuditRecord>, CorruptLog> {
    read_records(text)?
        .iter()
        .enumerate()
        .map(|(i, f)| {
            AuditRecord::from_fields(f).map_err(|message| CorruptLog {
                sequence: i as u64 + 1,
                message,
            })
        })
        .collect()
}
