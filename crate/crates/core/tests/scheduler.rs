mod common;

use std::sync::Arc;

use rand::Rng;

use common::*;
use gram_authz::callout::{CalloutArgs, CalloutConfig, CalloutSystem, PolicyPair, PolicyStore, Registry, GRAM_AUTHZ};
use gram_authz::engine::Decision;
use gram_authz::gatekeeper::AdmissionTicket;
use gram_authz::jobmanager::{JobManager, JobState, SignalKind};
use gram_authz::rsl::parse_request;

fn ticket(id: u64, rsl: &str) -> AdmissionTicket {
    let callouts = CalloutSystem::new(
        CalloutConfig::default().bind(GRAM_AUTHZ, "allow-all"),
        Registry::with_builtins(Arc::new(PolicyStore::new(PolicyPair::empty()))),
    );
    let description = parse_request(rsl).unwrap();
    AdmissionTicket {
        ticket_id: id,
        requester: dn(BO),
        account: "bliu".into(),
        invocation: callouts.authorize(&CalloutArgs::for_start(dn(BO), description.to_string())),
        description,
        decision: Decision::Permit,
    }
}

fn times(jm: &JobManager) -> Vec<(JobState, Option<u64>, Option<u64>, u64)> {
    jm.jobs()
        .iter()
        .map(|j| (j.state, j.started_at, j.ended_at, j.active_time))
        .collect()
}

#[test]
fn one_large_tick_equals_unit_ticks() {
    for seed in 0..300 {
        let mut r = rng(seed);
        let slots = r.gen_range(1..4);
        let (mut big, mut small) = (JobManager::new(slots), JobManager::new(slots));
        for id in 1..=r.gen_range(1..8) {
            let rsl = format!("(executable = x)(maxtime = {})(priority = {})", r.gen_range(0..9), r.gen_range(0..3));
            big.submit(&ticket(id, &rsl)).unwrap();
            small.submit(&ticket(id, &rsl)).unwrap();
        }
        let horizon = 60;
        big.tick(horizon).unwrap();
        for t in 0..=horizon {
            small.tick(t).unwrap();
        }
        assert_eq!(times(&big), times(&small), "seed {seed}");
        assert!(big.jobs().iter().all(|j| j.state == JobState::Done), "seed {seed}");
    }
}

#[test]
fn suspended_time_does_not_count() {
    let bo = dn(BO);
    let mut jm = JobManager::new(1);
    jm.submit(&ticket(1, "(executable = x)(maxtime = 6)")).unwrap();
    jm.tick(2).unwrap(); // active since 0
    jm.apply_signal("job-1", SignalKind::Suspend, &bo).unwrap();
    jm.tick(20).unwrap();
    assert_eq!(jm.get("job-1").unwrap().active_time, 2);
    jm.apply_signal("job-1", SignalKind::Resume, &bo).unwrap();
    jm.tick(23).unwrap();
    assert_eq!(jm.get("job-1").unwrap().state, JobState::Active);
    jm.tick(30).unwrap();
    let j = jm.get("job-1").unwrap();
    assert_eq!((j.state, j.ended_at, j.active_time), (JobState::Done, Some(24), 6));
}

#[test]
fn priority_change_reorders_queue() {
    let bo = dn(BO);
    let mut jm = JobManager::new(1);
    for id in 1..=3 {
        jm.submit(&ticket(id, "(executable = x)(maxtime = 2)")).unwrap();
    }
    jm.apply_signal("job-3", SignalKind::Priority(9), &bo).unwrap();
    jm.tick(0).unwrap();
    assert_eq!(jm.get("job-3").unwrap().state, JobState::Active);
    jm.tick(100).unwrap();
    let order: Vec<_> = jm.jobs().iter().map(|j| j.started_at.unwrap()).collect();
    assert_eq!(order, vec![2, 4, 0]);
}

#[test]
fn clock_never_moves_backwards() {
    let mut jm = JobManager::new(1);
    jm.tick(5).unwrap();
    assert!(jm.tick(4).is_err());
    assert_eq!(jm.now(), 5);
    assert!(jm.tick(5).unwrap().is_empty());
}
