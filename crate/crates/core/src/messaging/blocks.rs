//! SUBSCRIBE → Dispatcher → components; components → PUBLISH.

use crate::fb::{Behavior, Effect, ExecContext, FBTypeDef, Value, ValueKind};

use super::{dispatch_counted, ChannelId, Component, DropCounter, Envelope, RoutingTable};

pub const SUBSCRIBE: &str = "SUBSCRIBE";
pub const PUBLISH: &str = "PUBLISH";
pub const DISPATCHER: &str = "Dispatcher";

/// Receives from channel `ID`. The host fills `RD_1` and fires `IND` for
/// every envelope delivered to this block's subscription.
struct Subscribe {
    channel: Option<ChannelId>,
}

impl Behavior for Subscribe {
    fn on_event(&mut self, _event: &str, _ctx: &mut ExecContext<'_>) {}

    fn on_create(&mut self, ctx: &mut ExecContext<'_>) {
        self.channel = ctx.text("ID").parse().ok();
        if let Some(channel) = self.channel {
            let instance = ctx.instance().to_string();
            ctx.effect(Effect::Subscribe { channel, instance });
        } else {
            tracing::warn!(
                instance = ctx.instance(),
                id = ctx.text("ID"),
                "SUBSCRIBE without a valid channel"
            );
        }
    }

    fn on_delete(&mut self, ctx: &mut ExecContext<'_>) {
        if let Some(channel) = self.channel {
            let instance = ctx.instance().to_string();
            ctx.effect(Effect::Unsubscribe { channel, instance });
        }
    }
}

pub fn subscribe_type() -> FBTypeDef {
    FBTypeDef::service(SUBSCRIBE, || Subscribe { channel: None })
        .event_out("IND", &["RD_1"])
        .data_in("ID", ValueKind::Text)
        .data_out("RD_1", ValueKind::Blob)
}

/// Publishes `SD_1` on channel `ID` at every `REQ`.
struct Publish;

impl Behavior for Publish {
    fn on_event(&mut self, _event: &str, ctx: &mut ExecContext<'_>) {
        match ctx.text("ID").parse::<ChannelId>() {
            Ok(channel) => {
                let payload = ctx.text("SD_1").as_bytes().to_vec();
                if !payload.is_empty() {
                    ctx.effect(Effect::Publish { channel, payload });
                }
            }
            Err(_) => {
                tracing::warn!(
                    instance = ctx.instance(),
                    id = ctx.text("ID"),
                    "PUBLISH to invalid channel"
                );
            }
        }
        let _ = ctx.emit("CNF");
    }
}

pub fn publish_type() -> FBTypeDef {
    FBTypeDef::service(PUBLISH, || Publish)
        .event_in("REQ", &["ID", "SD_1"])
        .event_out("CNF", &[])
        .data_in("ID", ValueKind::Text)
        .data_in("SD_1", ValueKind::Text)
}

struct Dispatcher {
    table: RoutingTable,
    drops: DropCounter,
}

impl Behavior for Dispatcher {
    fn on_event(&mut self, _event: &str, ctx: &mut ExecContext<'_>) {
        let Some(Value::Blob(payload)) = ctx.input("IN").cloned() else {
            self.drops.bump();
            return;
        };
        // The channel is irrelevant for routing; any well-formed id will do.
        let channel = ChannelId::new([0, 0, 0, 0], 1).expect("nonzero port");
        let Ok(envelope) = Envelope::new(channel, payload) else {
            self.drops.bump();
            return;
        };
        let Ok(routed) = dispatch_counted(&envelope, &self.table, &self.drops) else {
            return;
        };
        // Valid UTF-8 is guaranteed once the payload decoded.
        let text = String::from_utf8(routed.payload).unwrap_or_default();
        let (port, event) = match routed.target {
            Component::B1 => ("OUT_B1", "TO_B1"),
            Component::B2 => ("OUT_B2", "TO_B2"),
        };
        ctx.set_output(port, text);
        let _ = ctx.emit(event);
    }
}

/// A dispatcher type with a fixed routing table. Malformed payloads are
/// dropped and counted in `drops`.
pub fn dispatcher_type(name: &str, table: RoutingTable, drops: DropCounter) -> FBTypeDef {
    FBTypeDef::basic(name, move || Dispatcher {
        table: table.clone(),
        drops: drops.clone(),
    })
    .event_in("REQ", &["IN"])
    .event_out("TO_B1", &["OUT_B1"])
    .event_out("TO_B2", &["OUT_B2"])
    .data_in("IN", ValueKind::Blob)
    .data_out("OUT_B1", ValueKind::Text)
    .data_out("OUT_B2", ValueKind::Text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fb::{ConnectionKind, Endpoint, Resource, TypeRegistry};

    struct Capture;
    impl Behavior for Capture {
        fn on_event(&mut self, _event: &str, _ctx: &mut ExecContext<'_>) {}
    }

    #[test]
    fn dispatcher_interface_shape() {
        let t = dispatcher_type(DISPATCHER, RoutingTable::default(), DropCounter::default());
        assert_eq!(t.event_inputs.len(), 1);
        assert_eq!(t.data_inputs.len(), 1);
        assert_eq!(t.event_outputs.len(), 2);
        assert_eq!(t.data_outputs.len(), 2);
        let mut reg = TypeRegistry::new();
        reg.register(t).unwrap();
    }

    #[test]
    fn subscribe_dispatch_route() {
        let drops = DropCounter::default();
        let mut reg = TypeRegistry::new();
        reg.register(subscribe_type()).unwrap();
        reg.register(dispatcher_type(
            DISPATCHER,
            RoutingTable::resource_holon(),
            drops.clone(),
        ))
        .unwrap();
        reg.register(
            FBTypeDef::basic("Cap", || Capture)
                .event_in("REC", &["MSG"])
                .data_in("MSG", ValueKind::Text),
        )
        .unwrap();
        let mut r = Resource::new("R");
        r.create_instance(
            &reg,
            "SUB",
            SUBSCRIBE,
            &[("ID".into(), "225.0.0.1:3002".into())],
        )
        .unwrap();
        let effects = r.take_effects();
        assert!(matches!(&effects[..], [Effect::Subscribe { instance, .. }] if instance == "SUB"));
        r.create_instance(&reg, "DISP", DISPATCHER, &[]).unwrap();
        r.create_instance(&reg, "B1", "Cap", &[]).unwrap();
        r.create_instance(&reg, "B2", "Cap", &[]).unwrap();
        let c = |a: &str, b: &str| (Endpoint::parse(a).unwrap(), Endpoint::parse(b).unwrap());
        for (kind, (s, t)) in [
            (ConnectionKind::Event, c("SUB.IND", "DISP.REQ")),
            (ConnectionKind::Data, c("SUB.RD_1", "DISP.IN")),
            (ConnectionKind::Event, c("DISP.TO_B1", "B1.REC")),
            (ConnectionKind::Data, c("DISP.OUT_B1", "B1.MSG")),
            (ConnectionKind::Event, c("DISP.TO_B2", "B2.REC")),
            (ConnectionKind::Data, c("DISP.OUT_B2", "B2.MSG")),
        ] {
            r.connect(kind, &s, &t).unwrap();
        }
        let deliver = |r: &mut Resource, text: &str| {
            r.set_output("SUB", "RD_1", Value::Blob(text.as_bytes().to_vec()))
                .unwrap();
            r.emit("SUB", "IND").unwrap();
            r.run_until_quiescent(10).unwrap();
        };
        let progress = r#"<OpProgress ID="a" OpID="S_20" Percent="33" />"#;
        deliver(&mut r, progress);
        assert_eq!(
            r.instance("B2").unwrap().data_input_values["MSG"],
            Value::Text(progress.into())
        );
        assert_eq!(
            r.instance("B1").unwrap().data_input_values["MSG"],
            Value::Text(String::new())
        );
        deliver(&mut r, "garbage");
        assert_eq!(drops.get(), 1);
    }
}
