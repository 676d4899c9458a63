//! Holons built from function blocks: resource and order holons, the order
//! holon manager, the coordinator and its service directory.

mod assembly;
mod cell;
mod directory;
pub mod interface;
mod manager;
mod order;

pub use assembly::{hii_network, resource_holon_commands, ResourceHolonSpec, RESOURCE_DISPATCHER};
pub use cell::{
    cell_b1_type, cell_b2_type, hii_type, CellHandles, CommandStep, CtrlCommand, CtrlStatus,
    SequenceTable, StatusKind, CELL_B1, CELL_B2, HII,
};
pub use directory::{coordinator_type, Directory, DirectoryEntry, COORDINATOR};
pub use manager::{manager_type, ManagerSettings, OrderRecord, OrderRegistry, ORDER_MANAGER};
pub use order::{order_b1_type, order_holon_type, ORDER_B1, ORDER_DISPATCHER, ORDER_HOLON};

use serde::{Deserialize, Serialize};

use crate::fb::{Effect, ExecContext, Value};
use crate::messaging::ChannelId;
use crate::protocol::ProtocolMsg;
use crate::trace::TraceEvent;

use interface::{ID_DEST, OUT_GROUP, SEND_GROUP};

/// Identity of a holon: a name and the inbox channel both its components
/// share.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HolonId {
    pub id: String,
    pub inbox: ChannelId,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HolonError {
    #[error("unknown product {0}")]
    UnknownProduct(String),
    #[error("holon {0} is still busy")]
    HolonBusy(String),
    #[error("order rejected: {0}")]
    Rejected(String),
    #[error("no reply from {0}")]
    NoReply(String),
    #[error(transparent)]
    Messaging(#[from] crate::messaging::MessagingError),
    #[error(transparent)]
    Fb(#[from] crate::fb::FbError),
}

/// Text of a message data input, whether it arrived as text or bytes.
pub(crate) fn input_text(ctx: &ExecContext<'_>, port: &str) -> Option<String> {
    match ctx.input(port)? {
        Value::Text(s) => Some(s.clone()),
        Value::Blob(b) => String::from_utf8(b.clone()).ok(),
        _ => None,
    }
}

pub(crate) fn incoming(ctx: &ExecContext<'_>, port: &str) -> Option<ProtocolMsg> {
    let text = input_text(ctx, port)?;
    match ProtocolMsg::decode(&text) {
        Ok(msg) => Some(msg),
        Err(e) => {
            tracing::warn!(instance = ctx.instance(), error = %e, "undecodable message");
            None
        }
    }
}

pub(crate) fn send_group(ctx: &mut ExecContext<'_>, to: ChannelId, msg: &ProtocolMsg) {
    ctx.set_output(OUT_GROUP, msg.encode());
    ctx.set_output(ID_DEST, to.to_string());
    let _ = ctx.emit(SEND_GROUP);
}

pub(crate) fn send_on(ctx: &mut ExecContext<'_>, event: &str, port: &str, text: String) {
    ctx.set_output(port, text);
    let _ = ctx.emit(event);
}

pub(crate) fn trace(ctx: &mut ExecContext<'_>, event: TraceEvent) {
    ctx.effect(Effect::Trace(event));
}

pub(crate) fn channel_param(ctx: &ExecContext<'_>, port: &str) -> Option<ChannelId> {
    let text = ctx.text(port);
    match text.parse() {
        Ok(c) => Some(c),
        Err(_) => {
            if !text.is_empty() {
                tracing::warn!(
                    instance = ctx.instance(),
                    port,
                    value = text,
                    "invalid channel parameter"
                );
            }
            None
        }
    }
}
