//! Fine-grained, VO-aware authorization for a GRAM-style resource manager.
//!
//! Pipeline: [`gatekeeper`] (identity → account) → [`callout`] (named
//! authorization hooks, the default one backed by [`engine`]) →
//! [`jobmanager`] (job lifecycle). [`service`] wires them behind a line
//! protocol with audit and event logs.

pub mod callout;
pub mod engine;
pub mod gatekeeper;
pub mod jobmanager;
pub mod policy;
pub mod rsl;
pub mod service;

pub use callout::{CalloutSystem, GRAM_AUTHZ};
pub use engine::{authorize, combine_decisions, evaluate_document, Action, AuthorizationRequest, Decision};
pub use gatekeeper::Gatekeeper;
pub use jobmanager::{JobManager, JobState};
pub use policy::{parse_policy, GridIdentity, PolicyDocument, PolicySource};
pub use rsl::{parse_request, parse_rsl, JobDescription};
pub use service::{Service, ServiceConfig};
