//! Project store, coding runs and consensus on top of `themeloom-core`.

pub mod consensus;
pub mod run;
pub mod store;
pub mod workflow;

pub use consensus::{ConsensusError, ConsensusSession, Resolution, SessionStatus};
pub use run::{revision_deltas, Coder, CodingRun, MachineProvenance, RevisionDelta, RunStatus};
pub use store::{Approval, Project, ProjectLock, StoreError, SCHEMA_VERSION};
pub use workflow::{RunOptions, WorkflowError};
