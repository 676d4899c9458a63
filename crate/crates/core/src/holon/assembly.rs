//! Management command lists that wire holons and controller interfaces into
//! a resource.

use serde::{Deserialize, Serialize};

use crate::fb::{ConnectionKind, Endpoint, MgmtCommand, Value};
use crate::messaging::{ChannelId, PUBLISH, SUBSCRIBE};

use super::cell::{CELL_B1, CELL_B2, HII};
use super::interface::*;

pub const RESOURCE_DISPATCHER: &str = "ResourceDispatcher";

/// Channels of one resource holon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceHolonSpec {
    pub name: String,
    pub inbox: ChannelId,
    pub ctrl: ChannelId,
    pub status: ChannelId,
    pub hmi_out: ChannelId,
    pub hmi_in: ChannelId,
    pub coordinator: ChannelId,
}

struct Builder {
    prefix: String,
    out: Vec<MgmtCommand>,
}

impl Builder {
    fn name(&self, member: &str) -> String {
        format!("{}_{member}", self.prefix)
    }

    fn create(&mut self, member: &str, type_name: &str, params: &[(&str, String)]) {
        let id = self.name(member);
        self.out.push(MgmtCommand::CreateInstance {
            id,
            type_name: type_name.to_string(),
            params: params
                .iter()
                .map(|(k, v)| (k.to_string(), Value::Text(v.clone())))
                .collect(),
        });
    }

    fn link(&mut self, kind: ConnectionKind, from: (&str, &str), to: (&str, &str)) {
        self.out.push(MgmtCommand::CreateConnection {
            kind,
            source: Endpoint::new(self.name(from.0), from.1),
            target: Endpoint::new(self.name(to.0), to.1),
        });
    }

    fn subscriber(&mut self, member: &str, channel: ChannelId) {
        self.create(member, SUBSCRIBE, &[("ID", channel.to_string())]);
    }

    /// A publisher fed by `src`'s `event`/`port`, on a fixed channel or on
    /// the one named by `src`'s `ID_Dest`.
    fn publisher(&mut self, member: &str, channel: Option<ChannelId>, src: (&str, &str, &str)) {
        let params: Vec<(&str, String)> = channel.iter().map(|c| ("ID", c.to_string())).collect();
        self.create(member, PUBLISH, &params);
        let (block, event, port) = src;
        self.link(ConnectionKind::Event, (block, event), (member, "REQ"));
        self.link(ConnectionKind::Data, (block, port), (member, "SD_1"));
        if channel.is_none() {
            self.link(ConnectionKind::Data, (block, ID_DEST), (member, "ID"));
        }
    }
}

/// Builds a resource holon named `spec.name`: inbox subscriber and
/// dispatcher, B1 and B2 with their links, controller and HMI channels.
/// Instances are named `"{name}_{member}"`. Needs [`RESOURCE_DISPATCHER`]
/// registered alongside the cell and messaging block types.
pub fn resource_holon_commands(spec: &ResourceHolonSpec) -> Vec<MgmtCommand> {
    use ConnectionKind::{Data, Event};
    let mut b = Builder {
        prefix: spec.name.clone(),
        out: Vec::new(),
    };
    let inbox = spec.inbox.to_string();
    b.create(
        "B1",
        CELL_B1,
        &[(ID, inbox.clone()), ("COORD", spec.coordinator.to_string())],
    );
    b.create("B2", CELL_B2, &[(ID, inbox)]);
    b.create("DISP", RESOURCE_DISPATCHER, &[]);
    b.subscriber("SUB", spec.inbox);
    b.link(Event, ("SUB", "IND"), ("DISP", "REQ"));
    b.link(Data, ("SUB", "RD_1"), ("DISP", "IN"));
    b.link(Event, ("DISP", "TO_B1"), ("B1", REC_GROUP));
    b.link(Data, ("DISP", "OUT_B1"), ("B1", IN_GROUP));
    b.link(Event, ("DISP", "TO_B2"), ("B2", REC_GROUP));
    b.link(Data, ("DISP", "OUT_B2"), ("B2", IN_GROUP));

    b.link(Event, ("B1", SEND_B2), ("B2", REC_B1));
    b.link(Data, ("B1", OUT_B2), ("B2", IN_B1));
    b.link(Event, ("B2", SEND_B1), ("B1", REC_B2));
    b.link(Data, ("B2", OUT_B1), ("B1", IN_B2));

    b.publisher("PUB_B1", None, ("B1", SEND_GROUP, OUT_GROUP));
    b.publisher("PUB_B2", None, ("B2", SEND_GROUP, OUT_GROUP));

    b.publisher("PUB_CTRL", Some(spec.ctrl), ("B2", SEND_CTRL, OUT_CTRL));
    b.subscriber("SUB_STATUS", spec.status);
    b.link(Event, ("SUB_STATUS", "IND"), ("B2", REC_CTRL));
    b.link(Data, ("SUB_STATUS", "RD_1"), ("B2", IN_CTRL));

    b.subscriber("SUB_HMI", spec.hmi_in);
    for comp in ["B1", "B2"] {
        b.link(Event, ("SUB_HMI", "IND"), (comp, REC_HMI));
        b.link(Data, ("SUB_HMI", "RD_1"), (comp, IN_HMI));
    }
    b.publisher("PUB_HMI_B1", Some(spec.hmi_out), ("B1", SEND_HMI, OUT_HMI));
    b.publisher("PUB_HMI_B2", Some(spec.hmi_out), ("B2", SEND_HMI, OUT_HMI));
    b.out
}

/// Controller-side network: one command subscriber on `ctrl` fanned out to
/// an interface block per controller, each publishing status on `status`.
/// Interface blocks are named `"HII_{CONTROLLER}"`.
pub fn hii_network(ctrl: ChannelId, status: ChannelId, controllers: &[&str]) -> Vec<MgmtCommand> {
    use ConnectionKind::{Data, Event};
    let mut b = Builder {
        prefix: "NET".into(),
        out: Vec::new(),
    };
    b.subscriber("SUB_CMD", ctrl);
    for c in controllers {
        let hii = format!("HII_{}", c.to_uppercase());
        b.create(&hii, HII, &[("CONTROLLER", c.to_string())]);
        b.link(Event, ("SUB_CMD", "IND"), (&hii, "REQ"));
        b.link(Data, ("SUB_CMD", "RD_1"), (&hii, "CMD"));
        b.publisher(
            &format!("PUB_{}", c.to_uppercase()),
            Some(status),
            (&hii, "IND", "STATUS"),
        );
    }
    b.out
}
