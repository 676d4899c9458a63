//! XML codec and schemas for inter-holon messages and product documents.

mod messages;
mod product;
mod time;
mod xml;

pub use messages::{
    decode, encode, schema_of, AwardOp, BidRequest, BidResponse, CancelOp, ConfirmOp, CreateOrder,
    DefineService, ExecOp, LookupService, OpDone, OpFault, OpProgress, OrderAccepted, OrderFailed,
    OrderRejected, OrderStatus, PlanReady, ProtocolMsg, RegisterService, RspLookup, Schema,
};
pub use product::{
    parse_product, parse_services, ProductKind, ProductSpec, ServiceDef, ServiceKind, ServiceStep,
};
pub use time::EpochTime;
pub use xml::{is_valid_name, Message};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("missing attribute {0}")]
    MissingAttribute(String),
    #[error("bad time value {0:?}")]
    BadTime(String),
    #[error("bad value for {attr}: {value:?}")]
    BadValue { attr: String, value: String },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("unexpected message type {0}")]
    UnexpectedType(String),
}
