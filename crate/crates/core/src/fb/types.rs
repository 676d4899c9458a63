use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Behavior, ConnectionKind, FbError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Text,
    Integer,
    Boolean,
    Blob,
}

impl ValueKind {
    pub fn default_value(self) -> Value {
        match self {
            ValueKind::Text => Value::Text(String::new()),
            ValueKind::Integer => Value::Int(0),
            ValueKind::Boolean => Value::Bool(false),
            ValueKind::Blob => Value::Blob(Vec::new()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Value {
    Text(String),
    Int(i64),
    Bool(bool),
    Blob(Vec<u8>),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Text(_) => ValueKind::Text,
            Value::Int(_) => ValueKind::Integer,
            Value::Bool(_) => ValueKind::Boolean,
            Value::Blob(_) => ValueKind::Blob,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Value::Blob(b) => Some(b),
            Value::Text(s) => Some(s.as_bytes()),
            _ => None,
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Value {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Value {
        Value::Text(s)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Value {
        Value::Int(i)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Value {
        Value::Bool(b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventPort {
    pub name: String,
    /// Data ports sampled (inputs) or sent (outputs) with this event.
    pub with: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPort {
    pub name: String,
    pub kind: ValueKind,
}

pub type BehaviorFactory = Arc<dyn Fn() -> Box<dyn Behavior> + Send + Sync>;

/// Endpoint inside a composite network: `(member, port)`.
pub type MemberPort = (String, String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeConnection {
    pub kind: ConnectionKind,
    pub from: MemberPort,
    pub to: MemberPort,
}

/// Internal network of a composite block. Interface ports of the composite
/// are bound to member ports: an input may fan out to several members, an
/// output is bound to exactly one member output.
#[derive(Debug, Clone, Default)]
pub struct CompositeNetwork {
    pub members: Vec<(String, String)>,
    pub connections: Vec<CompositeConnection>,
    pub input_bindings: Vec<(String, MemberPort)>,
    pub output_bindings: Vec<(String, MemberPort)>,
}

#[derive(Clone)]
pub enum FbKind {
    Basic(BehaviorFactory),
    ServiceInterface(BehaviorFactory),
    Composite(CompositeNetwork),
}

impl fmt::Debug for FbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FbKind::Basic(_) => f.write_str("Basic(..)"),
            FbKind::ServiceInterface(_) => f.write_str("ServiceInterface(..)"),
            FbKind::Composite(net) => f.debug_tuple("Composite").field(net).finish(),
        }
    }
}

/// A function-block type: event and data interface plus its kind.
#[derive(Debug, Clone)]
pub struct FBTypeDef {
    pub name: String,
    pub event_inputs: Vec<EventPort>,
    pub event_outputs: Vec<EventPort>,
    pub data_inputs: Vec<DataPort>,
    pub data_outputs: Vec<DataPort>,
    pub kind: FbKind,
}

impl FBTypeDef {
    pub fn new(name: impl Into<String>, kind: FbKind) -> Self {
        Self {
            name: name.into(),
            event_inputs: Vec::new(),
            event_outputs: Vec::new(),
            data_inputs: Vec::new(),
            data_outputs: Vec::new(),
            kind,
        }
    }

    pub fn basic<B, F>(name: impl Into<String>, factory: F) -> Self
    where
        B: Behavior + 'static,
        F: Fn() -> B + Send + Sync + 'static,
    {
        Self::new(name, FbKind::Basic(Arc::new(move || Box::new(factory()))))
    }

    pub fn service<B, F>(name: impl Into<String>, factory: F) -> Self
    where
        B: Behavior + 'static,
        F: Fn() -> B + Send + Sync + 'static,
    {
        Self::new(
            name,
            FbKind::ServiceInterface(Arc::new(move || Box::new(factory()))),
        )
    }

    pub fn event_in(mut self, name: &str, with: &[&str]) -> Self {
        self.event_inputs.push(EventPort {
            name: name.into(),
            with: with.iter().map(|s| s.to_string()).collect(),
        });
        self
    }

    pub fn event_out(mut self, name: &str, with: &[&str]) -> Self {
        self.event_outputs.push(EventPort {
            name: name.into(),
            with: with.iter().map(|s| s.to_string()).collect(),
        });
        self
    }

    pub fn data_in(mut self, name: &str, kind: ValueKind) -> Self {
        self.data_inputs.push(DataPort {
            name: name.into(),
            kind,
        });
        self
    }

    pub fn data_out(mut self, name: &str, kind: ValueKind) -> Self {
        self.data_outputs.push(DataPort {
            name: name.into(),
            kind,
        });
        self
    }

    pub fn event_input(&self, name: &str) -> Option<&EventPort> {
        self.event_inputs.iter().find(|p| p.name == name)
    }

    pub fn event_output(&self, name: &str) -> Option<&EventPort> {
        self.event_outputs.iter().find(|p| p.name == name)
    }

    pub fn data_input(&self, name: &str) -> Option<&DataPort> {
        self.data_inputs.iter().find(|p| p.name == name)
    }

    pub fn data_output(&self, name: &str) -> Option<&DataPort> {
        self.data_outputs.iter().find(|p| p.name == name)
    }

    pub fn is_composite(&self) -> bool {
        matches!(self.kind, FbKind::Composite(_))
    }

    /// Port names are unique across the whole interface and every
    /// association names a declared data port of the right direction.
    pub fn validate(&self) -> Result<(), FbError> {
        let invalid = |why: String| FbError::InvalidType(format!("{}: {}", self.name, why));
        if self.name.is_empty() {
            return Err(invalid("empty type name".into()));
        }
        let mut seen = BTreeSet::new();
        let all = self
            .event_inputs
            .iter()
            .map(|p| &p.name)
            .chain(self.event_outputs.iter().map(|p| &p.name))
            .chain(self.data_inputs.iter().map(|p| &p.name))
            .chain(self.data_outputs.iter().map(|p| &p.name));
        for name in all {
            if !seen.insert(name) {
                return Err(invalid(format!("duplicate port {name}")));
            }
        }
        for ev in &self.event_inputs {
            for d in &ev.with {
                if self.data_input(d).is_none() {
                    return Err(invalid(format!(
                        "{} associates unknown data input {d}",
                        ev.name
                    )));
                }
            }
        }
        for ev in &self.event_outputs {
            for d in &ev.with {
                if self.data_output(d).is_none() {
                    return Err(invalid(format!(
                        "{} associates unknown data output {d}",
                        ev.name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeId(pub usize);

/// Registered block types. Types are immutable once registered.
#[derive(Debug, Default, Clone)]
pub struct TypeRegistry {
    by_name: BTreeMap<String, TypeId>,
    types: Vec<Arc<FBTypeDef>>,
}

impl TypeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, def: FBTypeDef) -> Result<TypeId, FbError> {
        if self.by_name.contains_key(&def.name) {
            return Err(FbError::DuplicateType(def.name));
        }
        def.validate()?;
        if let FbKind::Composite(net) = &def.kind {
            self.validate_composite(&def, net)?;
        }
        let id = TypeId(self.types.len());
        self.by_name.insert(def.name.clone(), id);
        self.types.push(Arc::new(def));
        Ok(id)
    }

    fn validate_composite(&self, def: &FBTypeDef, net: &CompositeNetwork) -> Result<(), FbError> {
        let invalid = |why: String| FbError::InvalidType(format!("{}: {}", def.name, why));
        let mut members = BTreeMap::new();
        for (member, type_name) in &net.members {
            let ty = self
                .get(type_name)
                .ok_or_else(|| FbError::UnknownType(type_name.clone()))?;
            if members.insert(member.as_str(), ty).is_some() {
                return Err(invalid(format!("duplicate member {member}")));
            }
        }
        let member = |name: &str| {
            members
                .get(name)
                .cloned()
                .ok_or_else(|| invalid(format!("unknown member {name}")))
        };
        for (port, (m, p)) in &net.input_bindings {
            let ty = member(m)?;
            let ok = (def.event_input(port).is_some() && ty.event_input(p).is_some())
                || (def.data_input(port).is_some() && ty.data_input(p).is_some());
            if !ok {
                return Err(invalid(format!("bad input binding {port} -> {m}.{p}")));
            }
        }
        for (port, (m, p)) in &net.output_bindings {
            let ty = member(m)?;
            let ok = (def.event_output(port).is_some() && ty.event_output(p).is_some())
                || (def.data_output(port).is_some() && ty.data_output(p).is_some());
            if !ok {
                return Err(invalid(format!("bad output binding {port} -> {m}.{p}")));
            }
        }
        for c in &net.connections {
            member(&c.from.0)?;
            member(&c.to.0)?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<Arc<FBTypeDef>> {
        self.by_name.get(name).map(|id| self.types[id.0].clone())
    }

    pub fn id_of(&self, name: &str) -> Option<TypeId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}
