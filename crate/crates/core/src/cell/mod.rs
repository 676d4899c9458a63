//! Simulated assembly cell: conveyors, magazine, robot memory, execution.

mod memory;
mod report;
mod scenario;
mod sim;

pub use memory::{Access, RobotMemory};
pub use report::{reconfiguration_report, ModeTotal, ReconfigMode, ReconfigReport};
pub use scenario::{Scenario, ScenarioAction, ScenarioError, ScenarioEvent};
pub use sim::{
    boundary, BlockedReason, BoardPost, CellConfig, CellPhase, CellSim, Execution, Magazine,
    Provision, SimEvent, SimJob, TimedEvent,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CellError {
    #[error("{0} over capacity")]
    OverCapacity(&'static str),
    #[error("service {0} is not defined for this cell")]
    UnknownService(String),
    #[error("no finished intermediate on the board post")]
    NothingToCollect,
}
