use std::io;

use crate::jobmanager::{description_from_text, JobEvent, JobEventKind, JobManager};
use crate::policy::GridIdentity;

use super::log::{read_records, CorruptLog, LogFile};
use super::wire::Fields;

pub fn encode_event(e: &JobEvent) -> String {
    let mut f = Fields::new()
        .with("seq", e.sequence.to_string())
        .with("time", e.time.to_string())
        .with("event", e.kind.name());
    if let Some(job) = &e.job_id {
        f.push("job", job);
    }
    f.push("actor", &e.actor);
    match &e.kind {
        JobEventKind::Created {
            ticket_id,
            owner,
            account,
            description,
            priority,
            duration,
        } => {
            f.push("ticket", ticket_id.to_string());
            f.push("owner", owner.to_string());
            f.push("account", account);
            f.push("priority", priority.to_string());
            f.push("duration", duration.to_string());
            f.push("rsl", description.to_string());
        }
        JobEventKind::PriorityChanged(p) => f.push("value", p.to_string()),
        _ => {}
    }
    f.encode()
}

pub fn decode_event(f: &Fields) -> Result<JobEvent, String> {
    let get = |k: &str| f.require(k).map_err(|e| e.to_string());
    let num = |k: &str| -> Result<u64, String> { get(k)?.parse().map_err(|_| format!("`{k}` is not a number")) };
    let int = |k: &str| -> Result<i64, String> { get(k)?.parse().map_err(|_| format!("`{k}` is not an integer")) };
    let kind = match get("event")? {
        "created" => JobEventKind::Created {
            ticket_id: num("ticket")?,
            owner: GridIdentity::parse(get("owner")?).map_err(|e| e.to_string())?,
            account: get("account")?.to_string(),
            description: description_from_text(get("rsl")?)?,
            priority: int("priority")?,
            duration: num("duration")?,
        },
        "dispatched" => JobEventKind::Dispatched,
        "suspended" => JobEventKind::Suspended,
        "resumed" => JobEventKind::Resumed,
        "priority-changed" => JobEventKind::PriorityChanged(int("value")?),
        "done" => JobEventKind::Done,
        "failed" => JobEventKind::Failed,
        "canceled" => JobEventKind::Canceled,
        "clock" => JobEventKind::Clock,
        other => return Err(format!("unknown event `{other}`")),
    };
    Ok(JobEvent {
        sequence: num("seq")?,
        time: num("time")?,
        job_id: f.get("job").map(str::to_string),
        kind,
        actor: get("actor")?.to_string(),
    })
}

pub fn parse_event_log(text: &str) -> Result<Vec<JobEvent>, CorruptLog> {
    read_records(text)?
        .iter()
        .enumerate()
        .map(|(i, f)| {
            decode_event(f).map_err(|message| CorruptLog {
                sequence: i as u64 + 1,
                message,
            })
        })
        .collect()
}

/// Rebuilds the job table from an event log.
pub fn replay_events(text: &str, slots: usize) -> Result<JobManager, CorruptLog> {
    let events = parse_event_log(text)?;
    JobManager::replay(slots, &events).map_err(|e| CorruptLog {
        sequence: e.sequence,
        message: e.message,
    })
}

#[derive(Debug, Default)]
pub struct EventLog {
    events: Vec<JobEvent>,
    file: Option<LogFile>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_file(file: LogFile, existing: Vec<JobEvent>) -> Self {
        EventLog {
            events: existing,
            file: Some(file),
        }
    }

    pub fn append(&mut self, events: Vec<JobEvent>) -> io::Result<()> {
        for e in events {
            if let Some(file) = &mut self.file {
                file.append(&encode_event(&e))?;
            }
            self.events.push(e);
        }
        Ok(())
    }

    pub fn events(&self) -> &[JobEvent] {
        &self.events
    }

    pub fn text(&self) -> String {
        self.events.iter().map(|e| encode_event(e) + "\n").collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::callout::{CalloutArgs, CalloutConfig, CalloutSystem, Registry};
    use crate::engine::Decision;
    use crate::gatekeeper::AdmissionTicket;
    use crate::jobmanager::SignalKind;
    use crate::rsl::parse_request;

    fn dn(s: &str) -> GridIdentity {
        GridIdentity::parse(s).unwrap()
    }

    fn scenario() -> JobManager {
        let bo = dn("/O=Grid/CN=Bo Liu");
        let none = CalloutSystem::new(CalloutConfig::default(), Registry::new());
        let mut jm = JobManager::new(1);
        for (id, rsl) in [(1, r#"(executable = "my app")(jobtag = NFC)(maxtime = 2)"#), (2, "(executable = b)(priority = 4)")] {
            let description = parse_request(rsl).unwrap();
            jm.submit(&AdmissionTicket {
                ticket_id: id,
                requester: bo.clone(),
                account: "bliu".into(),
                invocation: none.authorize(&CalloutArgs::for_start(bo.clone(), description.to_string())),
                description,
                decision: Decision::Permit,
            })
            .unwrap();
        }
        jm.tick(1).unwrap();
        jm.apply_signal("job-2", SignalKind::Priority(-3), &bo).unwrap();
        jm.apply_signal("job-2", SignalKind::Suspend, &bo).unwrap();
        jm.tick(2).unwrap();
        jm.apply_cancel("job-1", &bo).unwrap();
        jm.tick(5).unwrap();
        jm
    }

    #[test]
    fn replay_reproduces_snapshot() {
        let mut jm = scenario();
        let mut log = EventLog::in_memory();
        log.append(jm.take_events()).unwrap();
        let rebuilt = replay_events(&log.text(), 1).unwrap();
        assert_eq!(rebuilt.snapshot(), jm.snapshot());
    }

    #[test]
    fn empty_log_is_empty_table() {
        let jm = replay_events("", 3).unwrap();
        assert!(jm.jobs().is_empty());
        assert_eq!(jm.now(), 0);
    }

    #[test]
    fn truncated_last_line_is_corrupt() {
        let mut jm = scenario();
        let mut log = EventLog::in_memory();
        log.append(jm.take_events()).unwrap();
        let text = log.text();
        let count = log.events().len() as u64;
        let truncated = &text[..text.len() - 5];
        let err = replay_events(truncated, 1).unwrap_err();
        assert_eq!(err.sequence, count);
    }

    #[test]
    fn semantic_corruption_is_detected() {
        let text = "seq=1 time=0 event=dispatched job=job-1 actor=scheduler\n";
        let err = replay_events(text, 1).unwrap_err();
        assert_eq!(err.sequence, 1);
        let text = "seq=1 time=0 event=exploded job=job-1 actor=scheduler\n";
        assert!(replay_events(text, 1).is_err());
    }
}
