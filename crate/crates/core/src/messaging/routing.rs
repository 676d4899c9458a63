use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::protocol::{decode, Message};

use super::{Envelope, MessagingError};

/// Which intelligent-control component a message is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    /// Conscious: negotiation and deliberation.
    B1,
    /// Subconscious: reactive handling of execution and control feedback.
    B2,
}

/// Message type → component. Unlisted types go to the default.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTable {
    routes: BTreeMap<String, Component>,
    default: Component,
}

impl Default for RoutingTable {
    fn default() -> Self {
        Self {
            routes: BTreeMap::new(),
            default: Component::B1,
        }
    }
}

impl RoutingTable {
    pub fn new(default: Component) -> Self {
        Self {
            routes: BTreeMap::new(),
            default,
        }
    }

    /// Table used by resource holons: execution feedback is subconscious,
    /// everything else (negotiation, definitions) conscious.
    pub fn resource_holon() -> Self {
        let mut t = Self::default();
        for ty in ["OpProgress", "OpDone", "OpFault", "ExecOp"] {
            t.route(ty, Component::B2);
        }
        t
    }

    pub fn route(&mut self, type_name: &str, target: Component) -> &mut Self {
        self.routes.insert(type_name.to_string(), target);
        self
    }

    pub fn target(&self, type_name: &str) -> Component {
        self.routes.get(type_name).copied().unwrap_or(self.default)
    }
}

/// A routed message; `payload` is the envelope's bytes, untouched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Routed {
    pub target: Component,
    pub message: Message,
    pub payload: Vec<u8>,
}

/// Counts envelopes dropped because their payload did not decode.
#[derive(Debug, Clone, Default)]
pub struct DropCounter(Arc<AtomicU64>);

impl DropCounter {
    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }
}

/// Reads the message type from the payload and picks the component.
pub fn dispatch(envelope: &Envelope, table: &RoutingTable) -> Result<Routed, MessagingError> {
    let text = std::str::from_utf8(&envelope.payload)
        .map_err(|_| MessagingError::MalformedPayload("payload is not UTF-8".into()))?;
    let message = decode(text).map_err(|e| MessagingError::MalformedPayload(e.to_string()))?;
    Ok(Routed {
        target: table.target(&message.type_name),
        message,
        payload: envelope.payload.clone(),
    })
}

/// [`dispatch`] that counts failures.
pub fn dispatch_counted(
    envelope: &Envelope,
    table: &RoutingTable,
    drops: &DropCounter,
) -> Result<Routed, MessagingError> {
    dispatch(envelope, table).inspect_err(|_| drops.bump())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::messaging::ChannelId;

    fn env(payload: &str) -> Envelope {
        Envelope::new(
            "225.0.0.1:3002".parse::<ChannelId>().unwrap(),
            payload.as_bytes().to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn negotiation_goes_to_b1() {
        let t = RoutingTable::resource_holon();
        let e = env(
            r#"<GetBidForOp ID="15" OpID="Op_30" MinStartTime="1308574904" Sender="225.0.0.1:2101" />"#,
        );
        let r = dispatch(&e, &t).unwrap();
        assert_eq!(r.target, Component::B1);
        assert_eq!(r.payload, e.payload);
    }

    #[test]
    fn progress_goes_to_b2() {
        let t = RoutingTable::resource_holon();
        let r = dispatch(
            &env(r#"<OpProgress ID="a" OpID="S_20" Percent="33" />"#),
            &t,
        )
        .unwrap();
        assert_eq!(r.target, Component::B2);
    }

    #[test]
    fn unknown_types_default_to_b1() {
        let t = RoutingTable::resource_holon();
        assert_eq!(
            dispatch(&env("<Whatever />"), &t).unwrap().target,
            Component::B1
        );
    }

    #[test]
    fn malformed_is_counted() {
        let drops = DropCounter::default();
        let t = RoutingTable::default();
        let err = dispatch_counted(&env("not xml"), &t, &drops).unwrap_err();
        assert!(matches!(err, MessagingError::MalformedPayload(_)));
        assert_eq!(drops.get(), 1);
        let bad_utf8 = Envelope::new("1.1.1.1:1".parse().unwrap(), vec![0xff, 0xfe]).unwrap();
        assert!(dispatch_counted(&bad_utf8, &t, &drops).is_err());
        assert_eq!(drops.get(), 2);
    }
}
