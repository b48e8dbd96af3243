//! Job manager: the job table, a simulated local scheduler running on
//! virtual time, and policy-mediated management of running jobs.
//!
//! Every mutation of the table is expressed as a [`JobEvent`] and applied
//! through [`JobManager::apply`], so replaying the emitted events onto an
//! empty manager rebuilds the same table.

use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::callout::{CalloutArgs, CalloutSystem, Invocation};
use crate::engine::{Action, Decision, JobContext};
use crate::gatekeeper::AdmissionTicket;
use crate::policy::GridIdentity;
use crate::rsl::{parse_rsl, to_job_description, JobDescription};

pub const DEFAULT_DURATION: u64 = 10;
pub const SCHEDULER_ACTOR: &str = "scheduler";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JobState {
    Pending,
    Active,
    Suspended,
    Done,
    Failed,
    Canceled,
}

impl JobState {
    pub const ALL: [JobState; 6] = [
        JobState::Pending,
        JobState::Active,
        JobState::Suspended,
        JobState::Done,
        JobState::Failed,
        JobState::Canceled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Pending => "PENDING",
            JobState::Active => "ACTIVE",
            JobState::Suspended => "SUSPENDED",
            JobState::Done => "DONE",
            JobState::Failed => "FAILED",
            JobState::Canceled => "CANCELED",
        }
    }

    pub fn parse(s: &str) -> Option<JobState> {
        JobState::ALL.into_iter().find(|st| st.as_str().eq_ignore_ascii_case(s))
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed | JobState::Canceled)
    }

    pub fn can_transition_to(self, to: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, to),
            (Pending, Active | Canceled | Failed)
                | (Active, Suspended | Done | Failed | Canceled)
                | (Suspended, Active | Canceled | Failed)
        )
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    Suspend,
    Resume,
    Priority(i64),
}

impl SignalKind {
    pub fn parse(kind: &str, value: Option<&str>) -> Result<SignalKind, JobError> {
        let bad = |msg: &str| JobError::BadSignal(msg.to_string());
        match (kind.to_ascii_lowercase().as_str(), value) {
            ("suspend", None) => Ok(SignalKind::Suspend),
            ("resume", None) => Ok(SignalKind::Resume),
            ("priority", Some(v)) => v
                .trim()
                .parse()
                .map(SignalKind::Priority)
                .map_err(|_| bad("priority value must be an integer")),
            ("priority", None) => Err(bad("priority signal needs a value")),
            ("suspend" | "resume", Some(_)) => Err(bad("only the priority signal takes a value")),
            _ => Err(bad("unknown signal (expected suspend, resume or priority)")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SignalKind::Suspend => "suspend",
            SignalKind::Resume => "resume",
            SignalKind::Priority(_) => "priority",
        }
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalKind::Priority(n) => write!(f, "priority({n})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JobEventKind {
    Created {
        ticket_id: u64,
        owner: GridIdentity,
        account: String,
        description: JobDescription,
        priority: i64,
        duration: u64,
    },
    Dispatched,
    Suspended,
    Resumed,
    PriorityChanged(i64),
    Done,
    Failed,
    Canceled,
    /// Virtual clock advanced; carries no job.
    Clock,
}

impl JobEventKind {
    pub fn name(&self) -> &'static str {
        match self {
            JobEventKind::Created { .. } => "created",
            JobEventKind::Dispatched => "dispatched",
            JobEventKind::Suspended => "suspended",
            JobEventKind::Resumed => "resumed",
            JobEventKind::PriorityChanged(_) => "priority-changed",
            JobEventKind::Done => "done",
            JobEventKind::Failed => "failed",
            JobEventKind::Canceled => "canceled",
            JobEventKind::Clock => "clock",
        }
    }

    fn target_state(&self) -> Option<JobState> {
        match self {
            JobEventKind::Dispatched | JobEventKind::Resumed => Some(JobState::Active),
            JobEventKind::Suspended => Some(JobState::Suspended),
            JobEventKind::Done => Some(JobState::Done),
            JobEventKind::Failed => Some(JobState::Failed),
            JobEventKind::Canceled => Some(JobState::Canceled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobEvent {
    pub sequence: u64,
    pub time: u64,
    pub job_id: Option<String>,
    pub kind: JobEventKind,
    pub actor: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryEntry {
    pub time: u64,
    pub event: &'static str,
    pub detail: Option<String>,
    pub actor: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobRecord {
    pub job_id: String,
    pub ticket_id: u64,
    pub owner: GridIdentity,
    pub account: String,
    pub jobtag: Option<String>,
    pub description: JobDescription,
    pub state: JobState,
    pub priority: i64,
    pub duration: u64,
    pub submitted_at: u64,
    pub started_at: Option<u64>,
    pub ended_at: Option<u64>,
    /// Active time accumulated over closed intervals.
    pub active_time: u64,
    pub active_since: Option<u64>,
    pub history: Vec<HistoryEntry>,
}

impl JobRecord {
    pub fn active_time_at(&self, now: u64) -> u64 {
        self.active_time + self.active_since.map_or(0, |since| now.saturating_sub(since))
    }

    pub fn context(&self, signal: Option<&SignalKind>) -> JobContext {
        JobContext {
            job_id: self.job_id.clone(),
            jobowner: self.owner.clone(),
            jobtag: self.jobtag.clone(),
            signal_kind: signal.map(|s| s.name().to_string()),
        }
    }

    pub fn status(&self) -> JobStatus {
        JobStatus {
            job_id: self.job_id.clone(),
            state: self.state,
            owner: self.owner.clone(),
            account: self.account.clone(),
            jobtag: self.jobtag.clone(),
            priority: self.priority,
            duration: self.duration,
            submitted_at: self.submitted_at,
            started_at: self.started_at,
            ended_at: self.ended_at,
            history_len: self.history.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobStatus {
    pub job_id: String,
    pub state: JobState,
    pub owner: GridIdentity,
    pub account: String,
    pub jobtag: Option<String>,
    pub priority: i64,
    pub duration: u64,
    pub submitted_at: u64,
    pub started_at: Option<u64>,
    pub ended_at: Option<u64>,
    pub history_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateChange {
    pub job_id: String,
    pub from: JobState,
    pub to: JobState,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JobFilter {
    pub jobtag: Option<String>,
    pub owner: Option<GridIdentity>,
    pub state: Option<JobState>,
}

impl JobFilter {
    fn accepts(&self, r: &JobRecord) -> bool {
        self.jobtag.as_ref().is_none_or(|t| r.jobtag.as_ref() == Some(t))
            && self.owner.as_ref().is_none_or(|o| &r.owner == o)
            && self.state.is_none_or(|s| r.state == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JobError {
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("{job_id}: cannot {op} a {from} job")]
    InvalidTransition {
        job_id: String,
        from: JobState,
        op: &'static str,
    },
    #[error("{0}: no free slot to resume into")]
    NoFreeSlot(String),
    #[error("admission ticket {0} was already submitted")]
    DuplicateTicket(u64),
    #[error("admission ticket does not carry a PERMIT decision")]
    NotPermitted,
    #[error("clock regression: {now} is before {clock}")]
    ClockRegression { now: u64, clock: u64 },
    #[error("{0}")]
    Denied(String),
    #[error("authorization system failure: {0}")]
    AuthzFailure(String),
    #[error("bad signal: {0}")]
    BadSignal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("event {sequence}: {message}")]
pub struct ReplayError {
    pub sequence: u64,
    pub message: String,
}

/// Result of authorizing a management request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManagementDecision {
    pub decision: Decision,
    /// True when the owner was admitted by the self-management rule, without a callout.
    pub self_rule: bool,
    pub invocation: Option<Invocation>,
}

pub fn authorize_management(
    record: &JobRecord,
    requester: &GridIdentity,
    action: Action,
    signal: Option<&SignalKind>,
    callouts: &CalloutSystem,
    self_management: bool,
) -> ManagementDecision {
    debug_assert!(action.is_management());
    if self_management && requester == &record.owner {
        return ManagementDecision {
            decision: Decision::Permit,
            self_rule: true,
            invocation: None,
        };
    }
    let args = CalloutArgs::for_management(
        requester.clone(),
        action,
        record.description.to_string(),
        record.context(signal),
    );
    let invocation = callouts.authorize(&args);
    ManagementDecision {
        decision: invocation.decision(),
        self_rule: false,
        invocation: Some(invocation),
    }
}

fn decision_to_result(d: &ManagementDecision) -> Result<(), JobError> {
    match &d.decision {
        Decision::Permit => Ok(()),
        Decision::Deny(r) => Err(JobError::Denied(r.clone())),
        Decision::Error(e) => Err(JobError::AuthzFailure(e.clone())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobManager {
    slots: usize,
    clock: u64,
    jobs: Vec<JobRecord>,
    next_event: u64,
    journal: Vec<JobEvent>,
}

impl JobManager {
    pub fn new(slots: usize) -> Self {
        JobManager {
            slots: slots.max(1),
            clock: 0,
            jobs: Vec::new(),
            next_event: 1,
            journal: Vec::new(),
        }
    }

    /// Rebuilds a manager from an event stream.
    pub fn replay<'a>(slots: usize, events: impl IntoIterator<Item = &'a JobEvent>) -> Result<Self, ReplayError> {
        let mut jm = JobManager::new(slots);
        for e in events {
            jm.apply(e)?;
        }
        jm.journal.clear();
        Ok(jm)
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn now(&self) -> u64 {
        self.clock
    }

    pub fn next_event_sequence(&self) -> u64 {
        self.next_event
    }

    pub fn active_count(&self) -> usize {
        self.jobs.iter().filter(|j| j.state == JobState::Active).count()
    }

    pub fn jobs(&self) -> &[JobRecord] {
        &self.jobs
    }

    pub fn max_ticket(&self) -> Option<u64> {
        self.jobs.iter().map(|j| j.ticket_id).max()
    }

    pub fn get(&self, job_id: &str) -> Result<&JobRecord, JobError> {
        self.index_of(job_id)
            .map(|i| &self.jobs[i])
            .ok_or_else(|| JobError::UnknownJob(job_id.to_string()))
    }

    fn index_of(&self, job_id: &str) -> Option<usize> {
        let n: usize = job_id.strip_prefix("job-")?.parse().ok()?;
        let idx = n.checked_sub(1)?;
        (idx < self.jobs.len() && self.jobs[idx].job_id == job_id).then_some(idx)
    }

    /// Events emitted since the last call.
    pub fn take_events(&mut self) -> Vec<JobEvent> {
        std::mem::take(&mut self.journal)
    }

    fn emit(&mut self, job_id: Option<&str>, kind: JobEventKind, actor: &str) -> Result<(), JobError> {
        let event = JobEvent {
            sequence: self.next_event,
            time: self.clock,
            job_id: job_id.map(str::to_string),
            kind,
            actor: actor.to_string(),
        };
        self.apply(&event)
            .unwrap_or_else(|e| panic!("internally generated event rejected: {e}"));
        self.journal.push(event);
        Ok(())
    }

    /// Applies one event. Live operations validate before emitting, so an
    /// error here means a corrupt or out-of-order stream.
    pub fn apply(&mut self, e: &JobEvent) -> Result<(), ReplayError> {
        let fail = |message: String| ReplayError {
            sequence: e.sequence,
            message,
        };
        if e.sequence != self.next_event {
            return Err(fail(format!("expected sequence {}", self.next_event)));
        }
        if e.time < self.clock {
            return Err(fail(format!("time {} precedes clock {}", e.time, self.clock)));
        }
        match &e.kind {
            JobEventKind::Clock => {
                if e.job_id.is_some() {
                    return Err(fail("clock event names a job".into()));
                }
            }
            JobEventKind::Created {
                ticket_id,
                owner,
                account,
                description,
                priority,
                duration,
            } => {
                let expected = format!("job-{}", self.jobs.len() + 1);
                if e.job_id.as_deref() != Some(expected.as_str()) {
                    return Err(fail(format!("expected new job id {expected}")));
                }
                if self.jobs.iter().any(|j| j.ticket_id == *ticket_id) {
                    return Err(fail(format!("ticket {ticket_id} used twice")));
                }
                self.jobs.push(JobRecord {
                    job_id: expected,
                    ticket_id: *ticket_id,
                    owner: owner.clone(),
                    account: account.clone(),
                    jobtag: description.jobtag(),
                    description: description.clone(),
                    state: JobState::Pending,
                    priority: *priority,
                    duration: *duration,
                    submitted_at: e.time,
                    started_at: None,
                    ended_at: None,
                    active_time: 0,
                    active_since: None,
                    history: vec![HistoryEntry {
                        time: e.time,
                        event: "created",
                        detail: None,
                        actor: e.actor.clone(),
                    }],
                });
            }
            kind => {
                let job_id = e.job_id.as_deref().ok_or_else(|| fail("event without job".into()))?;
                let idx = self
                    .index_of(job_id)
                    .ok_or_else(|| fail(format!("unknown job {job_id}")))?;
                let active = self.active_count();
                let slots = self.slots;
                let job = &mut self.jobs[idx];
                let mut detail = None;
                if let JobEventKind::PriorityChanged(p) = kind {
                    if job.state.is_terminal() {
                        return Err(fail(format!("priority change on {} job", job.state)));
                    }
                    job.priority = *p;
                    detail = Some(p.to_string());
                } else if let Some(to) = kind.target_state() {
                    if !job.state.can_transition_to(to) {
                        return Err(fail(format!("illegal transition {} -> {to}", job.state)));
                    }
                    if matches!(kind, JobEventKind::Dispatched) != (job.state == JobState::Pending)
                        && to == JobState::Active
                    {
                        return Err(fail(format!("{} does not apply to a {} job", kind.name(), job.state)));
                    }
                    if to == JobState::Active && active >= slots {
                        return Err(fail("no free slot".into()));
                    }
                    if let Some(since) = job.active_since.take() {
                        job.active_time += e.time - since;
                    }
                    if to == JobState::Active {
                        job.active_since = Some(e.time);
                        job.started_at.get_or_insert(e.time);
                    }
                    if to.is_terminal() {
                        job.ended_at = Some(e.time);
                    }
                    job.state = to;
                }
                job.history.push(HistoryEntry {
                    time: e.time,
                    event: kind.name(),
                    detail,
                    actor: e.actor.clone(),
                });
            }
        }
        self.clock = e.time;
        self.next_event = e.sequence + 1;
        Ok(())
    }

    pub fn submit(&mut self, ticket: &AdmissionTicket) -> Result<&JobRecord, JobError> {
        if !ticket.decision.is_permit() {
            return Err(JobError::NotPermitted);
        }
        if self.jobs.iter().any(|j| j.ticket_id == ticket.ticket_id) {
            return Err(JobError::DuplicateTicket(ticket.ticket_id));
        }
        let first_int = |name| {
            ticket
                .description
                .get(name)
                .and_then(|vs| vs.first())
                .and_then(|v| v.as_integer())
        };
        let priority = first_int("priority").unwrap_or(0);
        let duration = first_int("maxtime").map_or(DEFAULT_DURATION, |n| n.max(0) as u64);
        let job_id = format!("job-{}", self.jobs.len() + 1);
        self.emit(
            Some(&job_id),
            JobEventKind::Created {
                ticket_id: ticket.ticket_id,
                owner: ticket.requester.clone(),
                account: ticket.account.clone(),
                description: ticket.description.clone(),
                priority,
                duration,
            },
            &ticket.requester.to_string(),
        )?;
        Ok(self.jobs.last().expect("job just created"))
    }

    fn transition(&mut self, job_id: &str, kind: JobEventKind, op: &'static str, actor: &str) -> Result<&JobRecord, JobError> {
        let job = self.get(job_id)?;
        let to = kind.target_state().expect("transition event");
        let from = job.state;
        let legal = from.can_transition_to(to)
            && match kind {
                JobEventKind::Resumed => from == JobState::Suspended,
                JobEventKind::Dispatched => from == JobState::Pending,
                _ => true,
            };
        if !legal {
            return Err(JobError::InvalidTransition {
                job_id: job_id.to_string(),
                from,
                op,
            });
        }
        if to == JobState::Active && self.active_count() >= self.slots {
            return Err(JobError::NoFreeSlot(job_id.to_string()));
        }
        self.emit(Some(job_id), kind, actor)?;
        self.get(job_id)
    }

    /// Cancels a job on behalf of `actor`; authorization is the caller's job.
    pub fn apply_cancel(&mut self, job_id: &str, actor: &GridIdentity) -> Result<&JobRecord, JobError> {
        self.transition(job_id, JobEventKind::Canceled, "cancel", &actor.to_string())
    }

    pub fn apply_signal(&mut self, job_id: &str, kind: SignalKind, actor: &GridIdentity) -> Result<&JobRecord, JobError> {
        let actor = actor.to_string();
        match kind {
            SignalKind::Suspend => self.transition(job_id, JobEventKind::Suspended, "suspend", &actor),
            SignalKind::Resume => self.transition(job_id, JobEventKind::Resumed, "resume", &actor),
            SignalKind::Priority(p) => {
                let job = self.get(job_id)?;
                if job.state.is_terminal() {
                    return Err(JobError::InvalidTransition {
                        job_id: job_id.to_string(),
                        from: job.state,
                        op: "reprioritise",
                    });
                }
                self.emit(Some(job_id), JobEventKind::PriorityChanged(p), &actor)?;
                self.get(job_id)
            }
        }
    }

    /// Marks a job as failed, e.g. when the simulated backend loses it.
    pub fn fail(&mut self, job_id: &str) -> Result<&JobRecord, JobError> {
        self.transition(job_id, JobEventKind::Failed, "fail", SCHEDULER_ACTOR)
    }

    pub fn cancel(
        &mut self,
        job_id: &str,
        requester: &GridIdentity,
        callouts: &CalloutSystem,
        self_management: bool,
    ) -> Result<&JobRecord, JobError> {
        let d = authorize_management(self.get(job_id)?, requester, Action::Cancel, None, callouts, self_management);
        decision_to_result(&d)?;
        self.apply_cancel(job_id, requester)
    }

    pub fn signal(
        &mut self,
        job_id: &str,
        requester: &GridIdentity,
        kind: SignalKind,
        callouts: &CalloutSystem,
        self_management: bool,
    ) -> Result<&JobRecord, JobError> {
        let d = authorize_management(self.get(job_id)?, requester, Action::Signal, Some(&kind), callouts, self_management);
        decision_to_result(&d)?;
        self.apply_signal(job_id, kind, requester)
    }

    pub fn status(
        &self,
        job_id: &str,
        requester: &GridIdentity,
        callouts: &CalloutSystem,
        self_management: bool,
    ) -> Result<JobStatus, JobError> {
        let job = self.get(job_id)?;
        let d = authorize_management(job, requester, Action::Information, None, callouts, self_management);
        decision_to_result(&d)?;
        Ok(job.status())
    }

    pub fn list_jobs(&self, filter: &JobFilter) -> Vec<JobStatus> {
        self.jobs
            .iter()
            .filter(|j| filter.accepts(j))
            .map(JobRecord::status)
            .collect()
    }

    /// Advances virtual time to `now`. The scheduler first runs at the
    /// current time, then at the exact time each job reaches its duration,
    /// so one large tick and many small ones give the same schedule. At each step, finished jobs leave
    /// first, then pending jobs are dispatched by priority (highest first,
    /// ties by submission order) into free slots.
    pub fn tick(&mut self, now: u64) -> Result<Vec<StateChange>, JobError> {
        if now < self.clock {
            return Err(JobError::ClockRegression { now, clock: self.clock });
        }
        let mut changes = Vec::new();
        // Jobs queued since the last tick start at the current time.
        self.step(self.clock, &mut changes)?;
        loop {
            let step = match self.next_completion() {
                Some(t) if t < now => t.max(self.clock),
                _ => now,
            };
            self.step(step, &mut changes)?;
            if step == now {
                return Ok(changes);
            }
        }
    }

    fn next_completion(&self) -> Option<u64> {
        self.jobs
            .iter()
            .filter(|j| j.state == JobState::Active)
            .filter_map(|j| j.active_since.map(|since| since + j.duration.saturating_sub(j.active_time)))
            .min()
    }

    fn step(&mut self, now: u64, changes: &mut Vec<StateChange>) -> Result<(), JobError> {
        if now > self.clock {
            self.clock = now;
            self.emit(None, JobEventKind::Clock, SCHEDULER_ACTOR)?;
        }

        let finished: Vec<String> = self
            .jobs
            .iter()
            .filter(|j| j.state == JobState::Active && j.active_time_at(now) >= j.duration)
            .map(|j| j.job_id.clone())
            .collect();
        for id in finished {
            self.emit(Some(&id), JobEventKind::Done, SCHEDULER_ACTOR)?;
            changes.push(StateChange {
                job_id: id,
                from: JobState::Active,
                to: JobState::Done,
            });
        }

        let free = self.slots.saturating_sub(self.active_count());
        let mut pending: Vec<(i64, usize)> = self
            .jobs
            .iter()
            .enumerate()
            .filter(|(_, j)| j.state == JobState::Pending)
            .map(|(i, j)| (j.priority, i))
            .collect();
        pending.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, idx) in pending.into_iter().take(free) {
            let id = self.jobs[idx].job_id.clone();
            self.emit(Some(&id), JobEventKind::Dispatched, SCHEDULER_ACTOR)?;
            changes.push(StateChange {
                job_id: id,
                from: JobState::Pending,
                to: JobState::Active,
            });
        }
        Ok(())
    }

    /// Deterministic text rendering of the whole table, used to compare a
    /// live manager with a replayed one.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "clock={} slots={} jobs={}", self.clock, self.slots, self.jobs.len());
        for j in &self.jobs {
            let opt = |v: Option<u64>| v.map_or("-".to_string(), |t| t.to_string());
            let _ = writeln!(
                out,
                "{} ticket={} state={} owner={} account={} jobtag={} priority={} duration={} active={} since={} submitted={} started={} ended={} rsl={}",
                j.job_id,
                j.ticket_id,
                j.state,
                j.owner,
                j.account,
                j.jobtag.as_deref().unwrap_or("-"),
                j.priority,
                j.duration,
                j.active_time,
                opt(j.active_since),
                j.submitted_at,
                opt(j.started_at),
                opt(j.ended_at),
                j.description,
            );
            for h in &j.history {
                let _ = writeln!(
                    out,
                    "  t={} {}{} by {}",
                    h.time,
                    h.event,
                    h.detail.as_ref().map(|d| format!("({d})")).unwrap_or_default(),
                    h.actor
                );
            }
        }
        out
    }
}

/// Rebuilds a job description stored as RSL text in an event log.
pub fn description_from_text(text: &str) -> Result<JobDescription, String> {
    parse_rsl(text)
        .and_then(|c| to_job_description(&c))
        .map_err(|e| e.to_string())
}
