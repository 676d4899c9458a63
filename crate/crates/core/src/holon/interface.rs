//! Interfaces of the conscious (B1) and subconscious (B2) components.

use crate::fb::{Behavior, FBTypeDef, ValueKind};

pub const REC_GROUP: &str = "RecGroupMsg";
pub const REC_B1: &str = "RecB1Msg";
pub const REC_B2: &str = "RecB2Msg";
pub const REC_CTRL: &str = "RecCtrlMsg";
pub const REC_HMI: &str = "RecMsgHMI";
pub const ID: &str = "ID";
pub const IN_GROUP: &str = "InGroupMsg";
pub const IN_B1: &str = "InB1Msg";
pub const IN_B2: &str = "InB2Msg";
pub const IN_CTRL: &str = "InCtrlMsg";
pub const IN_HMI: &str = "InMsgHMI";
pub const SEND_GROUP: &str = "SendGroupMsg";
pub const SEND_B1: &str = "SendB1Msg";
pub const SEND_B2: &str = "SendB2Msg";
pub const SEND_CTRL: &str = "SendCtrlMsg";
pub const SEND_HMI: &str = "SendMsgHMI";
pub const ID_DEST: &str = "ID_Dest";
pub const OUT_GROUP: &str = "OutGroupMsg";
pub const OUT_B1: &str = "OutB1Msg";
pub const OUT_B2: &str = "OutB2Msg";
pub const OUT_CTRL: &str = "OutCtrlMsg";
pub const OUT_HMI: &str = "OutMsgHMI";

/// Timer expiry delivered by the host; `TAG` names the timer.
pub const TIMEOUT: &str = "Timeout";
pub const TAG: &str = "TAG";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    B1,
    B2,
    Both,
}

/// Every port of the intelligent-control interface and the component(s)
/// that carry it.
pub const PORT_SPLIT: &[(&str, Owner)] = &[
    (REC_GROUP, Owner::Both),
    (REC_B2, Owner::B1),
    (REC_B1, Owner::B2),
    (REC_CTRL, Owner::B2),
    (REC_HMI, Owner::Both),
    (ID, Owner::Both),
    (IN_GROUP, Owner::Both),
    (IN_B2, Owner::B1),
    (IN_B1, Owner::B2),
    (IN_CTRL, Owner::B2),
    (IN_HMI, Owner::Both),
    (SEND_GROUP, Owner::Both),
    (SEND_B2, Owner::B1),
    (SEND_B1, Owner::B2),
    (SEND_CTRL, Owner::B2),
    (SEND_HMI, Owner::Both),
    (ID_DEST, Owner::Both),
    (OUT_GROUP, Owner::Both),
    (OUT_B2, Owner::B1),
    (OUT_B1, Owner::B2),
    (OUT_CTRL, Owner::B2),
    (OUT_HMI, Owner::Both),
];

/// B1 interface around `factory`. Also accepts host timer expiries.
pub fn conscious_interface<B, F>(name: &str, factory: F) -> FBTypeDef
where
    B: Behavior + 'static,
    F: Fn() -> B + Send + Sync + 'static,
{
    FBTypeDef::basic(name, factory)
        .event_in(REC_GROUP, &[IN_GROUP])
        .event_in(REC_B2, &[IN_B2])
        .event_in(REC_HMI, &[IN_HMI])
        .event_in(TIMEOUT, &[TAG])
        .event_out(SEND_GROUP, &[OUT_GROUP, ID_DEST])
        .event_out(SEND_B2, &[OUT_B2])
        .event_out(SEND_HMI, &[OUT_HMI])
        .data_in(ID, ValueKind::Text)
        .data_in(IN_GROUP, ValueKind::Text)
        .data_in(IN_B2, ValueKind::Text)
        .data_in(IN_HMI, ValueKind::Blob)
        .data_in(TAG, ValueKind::Text)
        .data_out(OUT_GROUP, ValueKind::Text)
        .data_out(ID_DEST, ValueKind::Text)
        .data_out(OUT_B2, ValueKind::Text)
        .data_out(OUT_HMI, ValueKind::Text)
}

pub fn subconscious_interface<B, F>(name: &str, factory: F) -> FBTypeDef
where
    B: Behavior + 'static,
    F: Fn() -> B + Send + Sync + 'static,
{
    FBTypeDef::basic(name, factory)
        .event_in(REC_GROUP, &[IN_GROUP])
        .event_in(REC_B1, &[IN_B1])
        .event_in(REC_CTRL, &[IN_CTRL])
        .event_in(REC_HMI, &[IN_HMI])
        .event_out(SEND_GROUP, &[OUT_GROUP, ID_DEST])
        .event_out(SEND_B1, &[OUT_B1])
        .event_out(SEND_CTRL, &[OUT_CTRL])
        .event_out(SEND_HMI, &[OUT_HMI])
        .data_in(ID, ValueKind::Text)
        .data_in(IN_GROUP, ValueKind::Text)
        .data_in(IN_B1, ValueKind::Text)
        .data_in(IN_CTRL, ValueKind::Blob)
        .data_in(IN_HMI, ValueKind::Blob)
        .data_out(OUT_GROUP, ValueKind::Text)
        .data_out(ID_DEST, ValueKind::Text)
        .data_out(OUT_B1, ValueKind::Text)
        .data_out(OUT_CTRL, ValueKind::Text)
        .data_out(OUT_HMI, ValueKind::Text)
}

fn has_port(t: &FBTypeDef, name: &str) -> bool {
    t.event_input(name).is_some()
        || t.event_output(name).is_some()
        || t.data_input(name).is_some()
        || t.data_output(name).is_some()
}

/// Checks a B1/B2 pair against [`PORT_SPLIT`]: each port sits on exactly the
/// components it belongs to, and each message data port travels with exactly
/// one event. Returns every violation found.
pub fn check_port_split(b1: &FBTypeDef, b2: &FBTypeDef) -> Result<(), Vec<String>> {
    let mut errors = Vec::new();
    for &(port, owner) in PORT_SPLIT {
        let want = match owner {
            Owner::B1 => (true, false),
            Owner::B2 => (false, true),
            Owner::Both => (true, true),
        };
        let got = (has_port(b1, port), has_port(b2, port));
        if got != want {
            errors.push(format!(
                "{port}: expected {owner:?}, found on B1={} B2={}",
                got.0, got.1
            ));
        }
    }
    let is_message_port = |name: &str| name != ID && PORT_SPLIT.iter().any(|(p, _)| *p == name);
    for t in [b1, b2] {
        for d in &t.data_inputs {
            if !is_message_port(&d.name) {
                continue;
            }
            let n = t
                .event_inputs
                .iter()
                .filter(|e| e.with.contains(&d.name))
                .count();
            if n != 1 {
                errors.push(format!("{}.{} is carried by {n} events", t.name, d.name));
            }
        }
        for d in &t.data_outputs {
            if !is_message_port(&d.name) {
                continue;
            }
            let n = t
                .event_outputs
                .iter()
                .filter(|e| e.with.contains(&d.name))
                .count();
            if n != 1 {
                errors.push(format!("{}.{} is carried by {n} events", t.name, d.name));
            }
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}
