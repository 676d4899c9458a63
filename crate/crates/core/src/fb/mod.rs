//! Event-driven function-block runtime.
//!
//! Blocks live in resources. Each resource owns one FIFO of pending event
//! deliveries and processes at most one delivery per [`Resource::dispatch_step`].
//! Data travelling with an event is sampled when the event is emitted, so a
//! receiver always sees the values that were current at emit time.
//!
//! Behaviors never touch the outside world directly: anything beyond their
//! own outputs is requested as an [`Effect`] and carried out by the host
//! between dispatch steps.

mod config;
mod device;
mod resource;
mod types;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::messaging::ChannelId;
use crate::protocol::{EpochTime, Message};
use crate::trace::TraceEvent;

pub use config::{ConnectionDecl, DeviceDecl, InstanceDecl, ResourceDecl};
pub use device::Device;
pub use resource::{Connection, Delivery, FBInstance, Resource, DEFAULT_MAX_STEPS};
pub use types::{
    BehaviorFactory, CompositeConnection, CompositeNetwork, DataPort, EventPort, FBTypeDef, FbKind,
    MemberPort, TypeId, TypeRegistry, Value, ValueKind,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FbError {
    #[error("type {0} already registered")]
    DuplicateType(String),
    #[error("invalid type definition: {0}")]
    InvalidType(String),
    #[error("unknown type {0}")]
    UnknownType(String),
    #[error("unknown instance {0}")]
    UnknownInstance(String),
    #[error("instance {0} already exists")]
    DuplicateInstance(String),
    #[error("unknown port {instance}.{port}")]
    UnknownPort { instance: String, port: String },
    #[error("illegal connection: {0}")]
    IllegalConnection(String),
    #[error("no such connection {0}")]
    UnknownConnection(String),
    #[error("step budget of {0} exceeded")]
    StepBudgetExceeded(usize),
    #[error("step budget must be positive")]
    InvalidBudget,
    #[error("unknown resource {0}")]
    UnknownResource(String),
    #[error("resource {0} already exists")]
    DuplicateResource(String),
    #[error("unknown device {0}")]
    UnknownDevice(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnectionKind {
    Event,
    Data,
}

/// `(instance, port)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub instance: String,
    pub port: String,
}

impl Endpoint {
    pub fn new(instance: impl Into<String>, port: impl Into<String>) -> Self {
        Self {
            instance: instance.into(),
            port: port.into(),
        }
    }

    /// Parses `instance.port`, splitting at the last dot so composite member
    /// names (`OH1.B1`) stay intact.
    pub fn parse(s: &str) -> Option<Endpoint> {
        let (i, p) = s.rsplit_once('.')?;
        (!i.is_empty() && !p.is_empty()).then(|| Endpoint::new(i, p))
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.instance, self.port)
    }
}

/// Online management command.
#[derive(Debug, Clone, PartialEq)]
pub enum MgmtCommand {
    CreateInstance {
        id: String,
        type_name: String,
        params: Vec<(String, Value)>,
    },
    DeleteInstance {
        id: String,
    },
    CreateConnection {
        kind: ConnectionKind,
        source: Endpoint,
        target: Endpoint,
    },
    DeleteConnection {
        kind: ConnectionKind,
        source: Endpoint,
        target: Endpoint,
    },
}

/// Side effect requested by a behavior, executed by the host.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Publish {
        channel: ChannelId,
        payload: Vec<u8>,
    },
    Subscribe {
        channel: ChannelId,
        instance: String,
    },
    Unsubscribe {
        channel: ChannelId,
        instance: String,
    },
    /// Deliver `event` to `instance` after `after` seconds, with `tag` on
    /// the data input associated with that event.
    Timer {
        after: u64,
        instance: String,
        event: String,
        tag: String,
    },
    Mgmt {
        device: String,
        resource: String,
        command: MgmtCommand,
    },
    /// Command for the physical controller behind a hardware interface.
    Hardware(Message),
    Trace(TraceEvent),
}

/// Behavior of a basic or service-interface block. Invoked with the name of
/// the event input that triggered it.
pub trait Behavior: Send {
    fn on_event(&mut self, event: &str, ctx: &mut ExecContext<'_>);

    /// Called once after the instance (and its composite siblings) exist.
    fn on_create(&mut self, _ctx: &mut ExecContext<'_>) {}

    fn on_delete(&mut self, _ctx: &mut ExecContext<'_>) {}
}

/// What a behavior sees during one invocation.
pub struct ExecContext<'a> {
    instance: &'a str,
    now: EpochTime,
    type_def: &'a FBTypeDef,
    inputs: &'a BTreeMap<String, Value>,
    outputs: &'a mut BTreeMap<String, Value>,
    emitted: Vec<(String, Vec<(String, Value)>)>,
    effects: &'a mut Vec<Effect>,
}

impl<'a> ExecContext<'a> {
    pub fn instance(&self) -> &str {
        self.instance
    }

    pub fn now(&self) -> EpochTime {
        self.now
    }

    pub fn input(&self, name: &str) -> Option<&Value> {
        self.inputs.get(name)
    }

    /// Text value of a data input, or `""`.
    pub fn text(&self, name: &str) -> &str {
        self.inputs
            .get(name)
            .and_then(Value::as_text)
            .unwrap_or_default()
    }

    pub fn output(&self, name: &str) -> Option<&Value> {
        self.outputs.get(name)
    }

    pub fn set_output(&mut self, name: &str, value: impl Into<Value>) {
        if let Some(slot) = self.outputs.get_mut(name) {
            *slot = value.into();
        } else {
            debug_assert!(false, "{} has no data output {name}", self.type_def.name);
        }
    }

    /// Emits an event output, sampling its associated data outputs now.
    pub fn emit(&mut self, event: &str) -> Result<(), FbError> {
        let port = self
            .type_def
            .event_output(event)
            .ok_or_else(|| FbError::UnknownPort {
                instance: self.instance.to_string(),
                port: event.to_string(),
            })?;
        let snapshot = port
            .with
            .iter()
            .map(|d| (d.clone(), self.outputs[d].clone()))
            .collect();
        self.emitted.push((event.to_string(), snapshot));
        Ok(())
    }

    pub fn effect(&mut self, effect: Effect) {
        self.effects.push(effect);
    }
}
