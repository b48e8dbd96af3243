use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use gram_authz::engine::{authorize, Action, AuthorizationRequest, JobContext};
use gram_authz::policy::{lint_policy, parse_policy, GridIdentity, PolicyDocument, PolicySource};
use gram_authz::rsl::parse_request;
use gram_authz::service::server::{bind, send_request};
use gram_authz::service::simulate::run_script;
use gram_authz::service::{request_line, Service, ServiceConfig};

/// Exit code for operational failures (unreadable files, no server).
const EXIT_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "gram-authz", version, about = "VO-aware authorization and job management service")]
struct Cli {
    /// Service configuration file.
    #[arg(long, global = true, default_value = "gram-authz.conf")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the service in the foreground.
    Serve,
    /// Submit a job.
    Submit {
        #[arg(long)]
        dn: String,
        #[arg(long)]
        rsl: String,
    },
    /// Cancel a job.
    Cancel(JobArgs),
    /// Signal a job (suspend, resume, priority).
    Signal {
        #[command(flatten)]
        job: JobArgs,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        value: Option<String>,
    },
    /// Query a job's status.
    Status(JobArgs),
    /// List jobs.
    List {
        #[arg(long)]
        jobtag: Option<String>,
        #[arg(long)]
        owner: Option<String>,
        #[arg(long)]
        state: Option<String>,
    },
    /// Advance the virtual clock.
    Tick {
        #[arg(long)]
        by: Option<u64>,
    },
    /// Check or evaluate policy files offline.
    #[command(subcommand)]
    Policy(PolicyCommand),
    /// Run a request script against an in-process service.
    Simulate {
        script: PathBuf,
        /// Write the audit trail here (replacing any existing file).
        #[arg(long)]
        audit_out: Option<PathBuf>,
        /// Write the job event log here (replacing any existing file).
        #[arg(long)]
        events_out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct JobArgs {
    #[arg(long)]
    dn: String,
    #[arg(long)]
    job: String,
}

#[derive(Subcommand)]
enum PolicyCommand {
    /// Parse and lint a policy file.
    Check {
        file: PathBuf,
        /// Exit non-zero on lint warnings.
        #[arg(long)]
        deny_warnings: bool,
    },
    /// Evaluate one request against the configured policies.
    Eval {
        #[arg(long)]
        dn: String,
        #[arg(long)]
        action: Action,
        /// Job description (start) or the job's description (management).
        #[arg(long)]
        rsl: String,
        /// Job owner, for management actions.
        #[arg(long)]
        job_owner: Option<String>,
        #[arg(long)]
        signal: Option<String>,
        /// Use this file as both local and VO policy instead of the config.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Print which statements matched and which grant applied.
        #[arg(long)]
        explain: bool,
    },
}

type Fail = (u8, String);

fn fail(e: impl std::fmt::Display) -> Fail {
    (EXIT_FAILURE, e.to_string())
}

fn load_config(path: &Path) -> Result<ServiceConfig, Fail> {
    ServiceConfig::load(path).map_err(fail)
}

fn remote(config: &Path, line: String) -> Result<u8, Fail> {
    let cfg = load_config(config)?;
    let resp = send_request(&cfg.listen_endpoint, &line).map_err(|e| fail(format!("{}: {e}", cfg.listen_endpoint)))?;
    println!("{resp}");
    Ok(if resp.starts_with("OK") { 0 } else { 1 })
}

fn read_policy(path: &Path, source: PolicySource) -> Result<PolicyDocument, Fail> {
    let text = fs::read_to_string(path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
    parse_policy(&text, source)
        .map(|d| d.with_label(path.display().to_string()))
        .map_err(|e| (1, format!("{}: {e}", path.display())))
}

fn dn(s: &str) -> Result<GridIdentity, Fail> {
    GridIdentity::parse(s).map_err(|e| (1, e.to_string()))
}

fn run(cli: Cli) -> Result<u8, Fail> {
    let cfg_path = cli.config;
    match cli.command {
        Command::Serve => {
            let cfg = load_config(&cfg_path)?;
            let service = Arc::new(Service::start(&cfg).map_err(fail)?);
            let handle = bind(service, &cfg.listen_endpoint).map_err(fail)?;
            eprintln!("gram-authz listening on {}", handle.endpoint());
            handle.wait();
            Ok(0)
        }
        Command::Submit { dn, rsl } => remote(&cfg_path, request_line("SUBMIT", &[("dn", &dn), ("rsl", &rsl)])),
        Command::Cancel(j) => remote(&cfg_path, request_line("CANCEL", &[("dn", &j.dn), ("job", &j.job)])),
        Command::Status(j) => remote(&cfg_path, request_line("STATUS", &[("dn", &j.dn), ("job", &j.job)])),
        Command::Signal { job, kind, value } => {
            let mut fields = vec![("dn", job.dn.as_str()), ("job", job.job.as_str()), ("signal", kind.as_str())];
            if let Some(v) = &value {
                fields.push(("value", v));
            }
            remote(&cfg_path, request_line("SIGNAL", &fields))
        }
        Command::List { jobtag, owner, state } => {
            let fields: Vec<(&str, &str)> = [("jobtag", &jobtag), ("owner", &owner), ("state", &state)]
                .into_iter()
                .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
                .collect();
            remote(&cfg_path, request_line("LIST", &fields))
        }
        Command::Tick { by } => remote(&cfg_path, request_line("TICK", &[("by", &by.unwrap_or(1).to_string())])),
        Command::Policy(PolicyCommand::Check { file, deny_warnings }) => {
            let doc = read_policy(&file, PolicySource::Local)?;
            let warnings = lint_policy(&doc);
            for w in &warnings {
                println!("{}:{}: warning: {}", file.display(), w.line, w.message);
            }
            println!("{}: {} statement(s), {} warning(s)", file.display(), doc.statements.len(), warnings.len());
            Ok(if deny_warnings && !warnings.is_empty() { 1 } else { 0 })
        }
        Command::Policy(PolicyCommand::Eval {
            dn: requester,
            action,
            rsl,
            job_owner,
            signal,
            policy,
            explain,
        }) => {
            let (local, vo) = match policy {
                Some(p) => (read_policy(&p, PolicySource::Local)?, read_policy(&p, PolicySource::Vo)?),
                None => {
                    let cfg = load_config(&cfg_path)?;
                    (
                        read_policy(&cfg.local_policy_path, PolicySource::Local)?,
                        read_policy(&cfg.vo_policy_path, PolicySource::Vo)?,
                    )
                }
            };
            let requester = dn(&requester)?;
            let description = parse_request(&rsl).map_err(|e| (1, e.to_string()))?;
            let request = if action == Action::Start {
                AuthorizationRequest::start(requester, description)
            } else {
                let owner = match job_owner {
                    Some(o) => dn(&o)?,
                    None => return Err((2, "--job-owner is required for management actions".into())),
                };
                let context = JobContext {
                    job_id: "job-0".into(),
                    jobowner: owner,
                    jobtag: description.jobtag(),
                    signal_kind: signal,
                };
                AuthorizationRequest::management(requester, action, description, context)
            }
            .map_err(|e| (1, e.to_string()))?;
            let a = authorize(&local, &vo, &request);
            println!("{}", a.decision);
            if explain {
                print!("{}{}", a.local.1, a.vo.1);
            }
            Ok(if a.decision.is_permit() { 0 } else { 1 })
        }
        Command::Simulate {
            script,
            audit_out,
            events_out,
        } => {
            let mut cfg = load_config(&cfg_path)?;
            for p in [&audit_out, &events_out].into_iter().flatten() {
                if p.exists() {
                    fs::remove_file(p).map_err(|e| fail(format!("{}: {e}", p.display())))?;
                }
            }
            cfg.audit_log_path = audit_out;
            cfg.event_log_path = events_out;
            let text = fs::read_to_string(&script).map_err(|e| fail(format!("{}: {e}", script.display())))?;
            let service = Service::start(&cfg).map_err(fail)?;
            let transcript = run_script(&service, &text);
            print!("{transcript}");
            let failed = transcript.failures().count();
            println!("{} step(s), {} mismatch(es)", transcript.steps.len(), failed);
            Ok(if failed == 0 { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("gram-authz: {msg}");
            ExitCode::from(code)
        }
    }
}
