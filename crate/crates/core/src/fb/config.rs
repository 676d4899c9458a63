//! Declarative form of devices, resources and their initial networks.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::messaging::ChannelId;

use super::{ConnectionKind, Endpoint, FbError, MgmtCommand, Value};

#[derive(Debug, Clone, Deserialize)]
pub struct DeviceDecl {
    pub name: String,
    pub management: ChannelId,
    #[serde(default)]
    pub resources: Vec<ResourceDecl>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ResourceDecl {
    pub name: String,
    #[serde(default)]
    pub instances: Vec<InstanceDecl>,
    #[serde(default)]
    pub connections: Vec<ConnectionDecl>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct InstanceDecl {
    pub id: String,
    #[serde(rename = "type")]
    pub type_name: String,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Text(String),
}

impl From<&ParamValue> for Value {
    fn from(p: &ParamValue) -> Value {
        match p {
            ParamValue::Bool(b) => Value::Bool(*b),
            ParamValue::Int(i) => Value::Int(*i),
            ParamValue::Text(s) => Value::Text(s.clone()),
        }
    }
}

/// `from`/`to` are `instance.port`.
#[derive(Debug, Clone, Deserialize)]
pub struct ConnectionDecl {
    pub kind: ConnectionKind,
    pub from: String,
    pub to: String,
}

impl ResourceDecl {
    /// Management commands that build this resource's initial network.
    pub fn commands(&self) -> Result<Vec<MgmtCommand>, FbError> {
        let mut out = Vec::new();
        for inst in &self.instances {
            out.push(MgmtCommand::CreateInstance {
                id: inst.id.clone(),
                type_name: inst.type_name.clone(),
                params: inst
                    .params
                    .iter()
                    .map(|(k, v)| (k.clone(), Value::from(v)))
                    .collect(),
            });
        }
        for c in &self.connections {
            let parse = |s: &str| {
                Endpoint::parse(s)
                    .ok_or_else(|| FbError::IllegalConnection(format!("bad endpoint {s:?}")))
            };
            out.push(MgmtCommand::CreateConnection {
                kind: c.kind,
                source: parse(&c.from)?,
                target: parse(&c.to)?,
            });
        }
        Ok(out)
    }
}
