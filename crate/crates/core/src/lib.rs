//! Origin-aware mandatory access control.
//!
//! Every process carries an [`Origin`] assigned when its session was created
//! and inherited across fork and exec. Policies are ordered first-match rule
//! lists keyed by origin, evaluated at two enforcement planes: filesystem
//! paths and named control-plane interfaces.
//!
//! - [`kernel`] simulates the process table and origin propagation.
//! - [`event`] parses and replays process-lifecycle event logs.
//! - [`policy`] holds rules, first-match evaluation, the live store and
//!   audit counters.
//! - [`mediation`] resolves subjects and records decisions.
//! - [`dsl`] parses and formats the policy language.
//! - [`analyzer`] lints policies and builds reachability reports.
//! - [`scenario`] replays scripted attack and maintenance scenarios.
//! - [`ctl`] implements the `oamacctl` commands over a state directory.

pub mod analyzer;
pub mod ctl;
pub mod dsl;
pub mod event;
pub mod kernel;
pub mod mediation;
pub mod origin;
pub mod policy;
pub mod scenario;

pub use analyzer::{analyze, reachability, Finding, FindingKind};
pub use dsl::{format_policy, parse_policy, PolicyDocument};
pub use event::{Event, Replayer};
pub use kernel::{Pid, ProcessTable, SessionEntry, SessionKind, TerminalAssociation};
pub use mediation::{Engine, InterfaceId};
pub use origin::{Origin, OriginSet};
pub use policy::{default_policy, AccessMode, AccessRequest, Action, Decision, Policy, PolicyRule, PolicyStore};
pub use scenario::{parse_script, run_script, RunOptions, Transcript};
