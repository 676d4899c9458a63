//! Bidding, agendas, negotiation and order decomposition.

mod agenda;
mod negotiation;
mod plan;

pub use agenda::{commit_bid, compute_bid, Agenda, CellBidder, GanttEntry, ScheduleSlot};
pub use negotiation::{
    negotiate_service, select_bid, Action, Awarded, InMemoryMarket, Market, Negotiation,
    NegotiationConfig,
};
pub use plan::{decompose_order, schedule_plan, PlanNode, PlanState, ProductCatalog, StockTable};

use crate::protocol::EpochTime;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedulingError {
    #[error("window [{start}, {end}) is already booked")]
    SlotConflict { start: EpochTime, end: EpochTime },
    #[error("no bid issued for {conversation}/{op_id}")]
    UnknownBid { conversation: String, op_id: String },
    #[error("invalid slot [{start}, {end})")]
    InvalidSlot { start: EpochTime, end: EpochTime },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NegotiationError {
    #[error("no provider offers {0}")]
    NoProvider(String),
    #[error("no bids received for {0}")]
    NoBids(String),
    #[error("award for {0} rejected too many times")]
    AwardFailed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("unknown product {0}")]
    UnknownProduct(String),
    #[error("product {0} contains itself")]
    CyclicProduct(String),
    #[error(transparent)]
    Negotiation(#[from] NegotiationError),
}
