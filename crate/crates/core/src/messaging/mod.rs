//! Publish/subscribe transport and the inter-holon interface blocks.

mod blocks;
mod bus;
mod channel;
mod routing;

pub use blocks::{dispatcher_type, publish_type, subscribe_type, DISPATCHER, PUBLISH, SUBSCRIBE};
pub use bus::{Bus, ChannelHandle, Envelope, SubscriberId, Subscription, Transport};
pub use channel::{ChannelId, ChannelParseError};
pub use routing::{dispatch, dispatch_counted, Component, DropCounter, Routed, RoutingTable};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MessagingError {
    #[error("transport unavailable: {0}")]
    TransportUnavailable(String),
    #[error("channel {0} is closed")]
    ChannelClosed(ChannelId),
    #[error("empty payload")]
    EmptyPayload,
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("channel {0} already has a subscriber")]
    ChannelInUse(ChannelId),
}
