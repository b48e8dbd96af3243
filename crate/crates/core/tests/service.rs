mod common;

use std::fs;
use std::sync::Arc;

use common::*;
use gram_authz::callout::{CalloutConfig, CalloutError, GRAM_AUTHZ};
use gram_authz::gatekeeper::parse_gridmap;
use gram_authz::policy::{parse_policy, PolicySource};
use gram_authz::service::server::{bind, send_request, send_requests};
use gram_authz::service::{request_line, Service, ServiceConfig, ServiceError, ServiceParts};

fn paper_service(provider: &str, self_management: bool) -> Service {
    let parts = ServiceParts::new(
        parse_policy(PAPER_POLICY, PolicySource::Local).unwrap(),
        parse_policy(PAPER_POLICY, PolicySource::Vo).unwrap(),
        parse_gridmap(GRIDMAP).unwrap(),
        CalloutConfig::default().bind(GRAM_AUTHZ, provider),
    )
    .self_management(self_management);
    Service::from_parts(parts).unwrap()
}

fn submit(svc: &Service, who: &str, rsl: &str) -> String {
    svc.handle_request(&request_line("SUBMIT", &[("dn", who), ("rsl", rsl)]))
}

const ADS: &str = "&(executable=test1)(directory=/sandbox/test)(jobtag=ADS)(count=1)";
const NFC: &str = "&(executable=test2)(directory=/sandbox/test)(jobtag=NFC)(count=1)";

/// Copies the fixture set into a temp dir with logs inside it.
fn temp_config(dir: &std::path::Path) -> ServiceConfig {
    for f in ["paper.policy", "paper-signal.policy", "grid-mapfile", "callouts.conf"] {
        fs::copy(fixtures_dir().join(f), dir.join(f)).unwrap();
    }
    let conf = fs::read_to_string(fixtures_dir().join("paper.conf"))
        .unwrap()
        .replace("../target/gram-authz/", "logs/");
    fs::write(dir.join("paper.conf"), &conf).unwrap();
    ServiceConfig::load(&dir.join("paper.conf")).unwrap()
}

#[test]
fn protocol_examples() {
    let svc = paper_service("rsl-pep", true);
    assert_eq!(submit(&svc, BO, ADS), "OK job-1 PENDING");
    assert_eq!(submit(&svc, BO, NFC), "OK job-2 PENDING");
    assert_eq!(
        svc.handle_request(&format!(r#"CANCEL dn="{KATE}" job=job-2"#)),
        "OK job-2 CANCELED"
    );
    let resp = svc.handle_request(&format!(r#"CANCEL dn="{STRANGER}" job=job-1"#));
    assert!(resp.starts_with("E-DENY no grant satisfied"), "{resp}");
}

#[test]
fn error_classes() {
    let svc = paper_service("rsl-pep", true);
    submit(&svc, BO, ADS);
    let cases = [
        ("FROB x=1".to_string(), "E-SYNTAX"),
        (r#"SUBMIT dn="/O=Grid/CN=x" rsl="&(a"#.to_string(), "E-SYNTAX"),
        (r#"SUBMIT dn=nodn rsl="&(a=b)""#.to_string(), "E-SYNTAX"),
        (r#"SUBMIT rsl="&(a=b)""#.to_string(), "E-SYNTAX"),
        (request_line("SUBMIT", &[("dn", OUTSIDER), ("rsl", ADS)]), "E-GATE"),
        (request_line("SUBMIT", &[("dn", BO), ("rsl", "&(executable=test3)(jobtag=ADS)")]), "E-DENY"),
        (request_line("CANCEL", &[("dn", BO), ("job", "job-7")]), "E-UNKNOWN-JOB"),
        (request_line("SIGNAL", &[("dn", BO), ("job", "job-1"), ("signal", "resume")]), "E-TRANSITION"),
        (request_line("SIGNAL", &[("dn", BO), ("job", "job-1"), ("signal", "explode")]), "E-SYNTAX"),
        ("TICK by=x".to_string(), "E-SYNTAX"),
        ("TICK to=0".to_string(), "OK now=0"),
    ];
    for (line, class) in cases {
        let resp = svc.handle_request(&line);
        assert!(resp.starts_with(class), "{line} -> {resp}");
    }
    svc.handle_request("TICK to=5");
    assert!(svc.handle_request("TICK to=2").starts_with("E-SYNTAX"));
}

#[test]
fn one_audit_record_per_decision() {
    let svc = paper_service("rsl-pep", true);
    submit(&svc, BO, ADS); // permit
    submit(&svc, OUTSIDER, ADS); // gate
    submit(&svc, BO, "&(executable=test1"); // syntax: no decision
    svc.handle_request(&request_line("STATUS", &[("dn", BO), ("job", "job-1")])); // self rule
    svc.handle_request(&request_line("STATUS", &[("dn", KATE), ("job", "job-1")])); // pep deny
    svc.handle_request(&request_line("STATUS", &[("dn", KATE), ("job", "job-9")])); // unknown job
    svc.handle_request("LIST");
    svc.handle_request(&request_line(
        "POLICY-EVAL",
        &[("dn", BO), ("action", "start"), ("rsl", ADS)],
    ));
    let records = svc.audit_records();
    let sources: Vec<_> = records.iter().map(|r| (r.sequence, r.source.as_str(), r.decision.label())).collect();
    assert_eq!(
        sources,
        vec![
            (1, "LOCAL-PEP+VO-PEP", "PERMIT"),
            (2, "GATE", "DENY"),
            (3, "SELF-RULE", "PERMIT"),
            (4, "LOCAL-PEP+VO-PEP", "DENY"),
        ]
    );
    assert!(records[0].evidence.contains("granted by line 5"), "{}", records[0].evidence);
    assert_eq!(records[0].provider.as_deref(), Some("rsl-pep"));
    assert_eq!(records[0].args_digest.as_ref().map(String::len), Some(16));
}

#[test]
fn self_management_off_sends_owner_to_policy() {
    let svc = paper_service("rsl-pep", false);
    submit(&svc, BO, ADS);
    let resp = svc.handle_request(&request_line("CANCEL", &[("dn", BO), ("job", "job-1")]));
    assert!(resp.starts_with("E-DENY"), "{resp}");
    let svc = paper_service("deny-all", true);
    assert!(submit(&svc, BO, ADS).starts_with("E-DENY deny-all"));
}

#[test]
fn policy_eval_has_no_side_effects() {
    let svc = paper_service("rsl-pep", true);
    let before = svc.snapshot();
    let resp = svc.handle_request(&request_line(
        "POLICY-EVAL",
        &[("dn", BO), ("action", "start"), ("rsl", "&(executable=test1)(directory=/sandbox/test)(jobtag=ADS)(count=4)")],
    ));
    assert!(resp.starts_with("OK decision=DENY"), "{resp}");
    assert!(resp.contains("(count < 4)"), "{resp}");
    assert_eq!(svc.snapshot(), before);
    assert!(svc.audit_records().is_empty());
}

#[test]
fn list_filters() {
    let svc = paper_service("rsl-pep", true);
    submit(&svc, BO, ADS);
    submit(&svc, BO, NFC);
    submit(&svc, KATE, "&(executable=TRANSP)(directory=/sandbox/test)(jobtag=NFC)");
    svc.handle_request("TICK by=1");
    assert_eq!(svc.handle_request("LIST jobtag=NFC"), "OK 2 job-2:PENDING job-3:PENDING");
    assert_eq!(svc.handle_request(&request_line("LIST", &[("owner", KATE)])), "OK 1 job-3:PENDING");
    assert_eq!(svc.handle_request("LIST state=ACTIVE"), "OK 1 job-1:ACTIVE");
    assert!(svc.handle_request("LIST state=BOGUS").starts_with("E-SYNTAX"));
}

#[test]
fn startup_failures_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = temp_config(dir.path());
    fs::write(dir.path().join("paper.policy"), "/O=Grid:\n(action = start)\n\n/O=Grid:\n(action = \n").unwrap();
    let err = Service::start(&cfg).err().expect("malformed policy must fail");
    assert!(matches!(err, ServiceError::Policy { .. }), "{err}");
    assert!(err.to_string().contains("line 5"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let cfg = temp_config(dir.path());
    fs::write(dir.path().join("callouts.conf"), "# nothing bound\nother-hook allow-all\n").unwrap();
    let err = Service::start(&cfg).err().expect("unbound gram-authz must fail");
    assert!(matches!(err, ServiceError::MissingBinding(CalloutError::MissingBinding(_))), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let cfg = temp_config(dir.path());
    fs::create_dir_all(dir.path().join("logs")).unwrap();
    fs::write(dir.path().join("logs/events.log"), "seq=1 time=0 event=clock actor=scheduler\nseq=3 time=1").unwrap();
    let err = Service::start(&cfg).err().expect("corrupt log must fail");
    assert!(matches!(err, ServiceError::CorruptLog { .. }), "{err}");
}

#[test]
fn reload_swaps_policies_and_survives_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = temp_config(dir.path());
    let svc = Service::start(&cfg).unwrap();
    submit(&svc, BO, NFC);
    let suspend = request_line("SIGNAL", &[("dn", KATE), ("job", "job-1"), ("signal", "suspend")]);
    svc.handle_request("TICK by=1");
    assert!(svc.handle_request(&suspend).starts_with("E-DENY"));

    fs::write(dir.path().join("broken.policy"), "/O=Grid:\n").unwrap();
    let resp = svc.handle_request("RELOAD local=paper-signal.policy vo=broken.policy");
    assert!(resp.starts_with("E-ERROR reload failed"), "{resp}");
    // Neither document changed.
    assert_eq!(svc.policies().local.statements.len(), 5);
    assert!(svc.handle_request(&suspend).starts_with("E-DENY"));

    let resp = svc.handle_request("RELOAD local=paper-signal.policy vo=paper-signal.policy");
    assert!(resp.starts_with("OK reloaded local=7 vo=7"), "{resp}");
    assert_eq!(svc.handle_request(&suspend), "OK job-1 SUSPENDED priority=0");

    // Plain RELOAD re-reads the configured files.
    assert!(svc.handle_request("RELOAD").starts_with("OK reloaded local=5 vo=5 gridmap=4"));
}

#[test]
fn restart_continues_from_logs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = temp_config(dir.path());
    let svc = Service::start(&cfg).unwrap();
    submit(&svc, BO, ADS);
    submit(&svc, BO, NFC);
    svc.handle_request("TICK by=4");
    svc.handle_request(&request_line("CANCEL", &[("dn", KATE), ("job", "job-2")]));
    let snapshot = svc.snapshot();
    let tail = [
        request_line("SUBMIT", &[("dn", KATE), ("rsl", "&(executable=TRANSP)(directory=/sandbox/test)(jobtag=NFC)")]),
        "TICK by=20".to_string(),
        "LIST".to_string(),
    ];
    let uninterrupted: Vec<String> = tail.iter().map(|l| svc.handle_request(l)).collect();
    drop(svc);

    // Rebuild from the logs as they were before the tail ran.
    let events = fs::read_to_string(dir.path().join("logs/events.log")).unwrap();
    let audit = fs::read_to_string(dir.path().join("logs/audit.log")).unwrap();
    let keep = |text: &str, n: usize| text.lines().take(n).map(|l| format!("{l}\n")).collect::<String>();
    let replay_len = gram_authz::service::events::parse_event_log(&events)
        .unwrap()
        .iter()
        .position(|e| e.job_id.as_deref() == Some("job-3"))
        .unwrap();
    fs::write(dir.path().join("logs/events.log"), keep(&events, replay_len)).unwrap();
    fs::write(dir.path().join("logs/audit.log"), keep(&audit, 3)).unwrap();

    let svc = Service::start(&cfg).unwrap();
    assert_eq!(svc.snapshot(), snapshot);
    let resumed: Vec<String> = tail.iter().map(|l| svc.handle_request(l)).collect();
    assert_eq!(resumed, uninterrupted);
    assert_eq!(svc.audit_records().last().unwrap().sequence, 4);
}

#[test]
fn tcp_server_round_trip() {
    let svc = Arc::new(paper_service("rsl-pep", true));
    let server = bind(svc.clone(), "127.0.0.1:0").unwrap();
    let ep = server.endpoint().to_string();
    assert!(send_request(&ep, "STATUS").unwrap().starts_with("OK service"));
    let responses = send_requests(
        &ep,
        &[request_line("SUBMIT", &[("dn", BO), ("rsl", ADS)]), "LIST".into(), "BOGUS".into()],
    )
    .unwrap();
    assert_eq!(responses[0], "OK job-1 PENDING");
    assert_eq!(responses[1], "OK 1 job-1:PENDING");
    assert!(responses[2].starts_with("E-SYNTAX"));

    let clients: Vec<_> = (0..8)
        .map(|_| {
            let ep = ep.clone();
            std::thread::spawn(move || send_request(&ep, &request_line("SUBMIT", &[("dn", BO), ("rsl", NFC)])).unwrap())
        })
        .collect();
    for c in clients {
        assert!(c.join().unwrap().starts_with("OK job-"));
    }
    let seqs: Vec<u64> = svc.audit_records().iter().map(|r| r.sequence).collect();
    assert_eq!(seqs, (1..=9).collect::<Vec<_>>());
    server.shutdown();
    assert!(send_request(&ep, "STATUS").is_err());
}

#[cfg(unix)]
#[test]
fn local_socket_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gram.sock");
    let svc = Arc::new(paper_service("rsl-pep", true));
    let server = bind(svc, path.to_str().unwrap()).unwrap();
    assert!(send_request(path.to_str().unwrap(), "STATUS").unwrap().starts_with("OK service"));
    server.shutdown();
    assert!(!path.exists());
}
