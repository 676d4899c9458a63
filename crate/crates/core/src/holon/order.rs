//! Order holons: one per order, spawned and removed by the manager.

use std::collections::BTreeMap;

use crate::fb::{
    CompositeConnection, CompositeNetwork, ConnectionKind, Effect, ExecContext, FBTypeDef, FbKind,
    ValueKind,
};
use crate::messaging::{ChannelId, PUBLISH, SUBSCRIBE};
use crate::protocol::{
    CancelOp, CreateOrder, EpochTime, OrderFailed, OrderStatus, PlanReady, ProductKind,
    ProductSpec, ProtocolMsg,
};
use crate::scheduling::{Action, Awarded, Negotiation, NegotiationConfig, PlanState};

use super::interface::*;
use super::{channel_param, incoming, send_group};

pub const ORDER_B1: &str = "OrderB1";
pub const ORDER_HOLON: &str = "OrderHolon";
pub const ORDER_DISPATCHER: &str = "OrderDispatcher";

struct Step {
    serv_id: String,
    award: Option<Awarded>,
    percent: u8,
}

struct OrderB1 {
    cfg: NegotiationConfig,
    me: Option<ChannelId>,
    manager: Option<ChannelId>,
    coordinator: Option<ChannelId>,
    order_id: String,
    parent: Option<ChannelId>,
    state: PlanState,
    awaiting_accepts: usize,
    children: BTreeMap<String, Option<EpochTime>>,
    steps: Vec<Step>,
    current: usize,
    min_start: EpochTime,
    negotiation: Option<(String, Negotiation)>,
}

impl OrderB1 {
    fn new(cfg: NegotiationConfig) -> Self {
        Self {
            cfg,
            me: None,
            manager: None,
            coordinator: None,
            order_id: String::new(),
            parent: None,
            state: PlanState::Pending,
            awaiting_accepts: 0,
            children: BTreeMap::new(),
            steps: Vec::new(),
            current: 0,
            min_start: EpochTime(0),
            negotiation: None,
        }
    }

    fn terminal(&self) -> bool {
        matches!(self.state, PlanState::Done | PlanState::Failed)
    }

    fn percent(&self) -> u8 {
        if self.steps.is_empty() {
            return 0;
        }
        let total: u32 = self.steps.iter().map(|s| u32::from(s.percent)).sum();
        (total / self.steps.len() as u32) as u8
    }

    fn report(&self, ctx: &mut ExecContext<'_>) {
        let Some(manager) = self.manager else {
            return;
        };
        let status = ProtocolMsg::OrderStatus(OrderStatus {
            order_id: self.order_id.clone(),
            percent: self.percent(),
            state: Some(format!("{:?}", self.state)),
        });
        send_group(ctx, manager, &status);
    }

    fn on_create_order(&mut self, ctx: &mut ExecContext<'_>, order: CreateOrder) {
        if self.state != PlanState::Pending || !self.order_id.is_empty() {
            return;
        }
        let (Some(spec), Some(order_id)) = (order.spec, order.order_id) else {
            tracing::warn!(
                instance = ctx.instance(),
                "order holon created without a processing document"
            );
            return;
        };
        self.order_id = order_id;
        self.parent = order.parent;
        self.steps = spec
            .services
            .iter()
            .map(|s| Step {
                serv_id: s.serv_id.clone(),
                award: None,
                percent: 0,
            })
            .collect();
        self.request_components(ctx, &spec);
        self.maybe_negotiate(ctx);
    }

    fn request_components(&mut self, ctx: &mut ExecContext<'_>, spec: &ProductSpec) {
        if spec.kind != ProductKind::Composite {
            return;
        }
        let (Some(manager), Some(me)) = (self.manager, self.me) else {
            return;
        };
        for component in spec.components() {
            let mut req = CreateOrder::new(component);
            req.parent = Some(me);
            req.sender = Some(me);
            send_group(ctx, manager, &ProtocolMsg::CreateOrder(req));
            self.awaiting_accepts += 1;
        }
    }

    fn maybe_negotiate(&mut self, ctx: &mut ExecContext<'_>) {
        if self.state != PlanState::Pending
            || self.awaiting_accepts > 0
            || self.children.values().any(Option::is_none)
        {
            return;
        }
        let children_end = self.children.values().flatten().copied().max();
        self.min_start = children_end.map_or(ctx.now(), |e| e.max(ctx.now()));
        self.state = PlanState::Negotiating;
        self.report(ctx);
        self.next_step(ctx);
    }

    fn next_step(&mut self, ctx: &mut ExecContext<'_>) {
        let (Some(me), Some(coordinator)) = (self.me, self.coordinator) else {
            self.fail(ctx, "order holon has no coordinator");
            return;
        };
        let Some(step) = self.steps.get(self.current) else {
            self.scheduled(ctx);
            return;
        };
        let base = format!("{}:{}", self.order_id, self.current + 1);
        let mut n = Negotiation::new(&base, &step.serv_id, self.min_start, me, self.cfg);
        let actions = n.start_lookup(coordinator);
        self.negotiation = Some((base, n));
        self.apply(ctx, actions);
    }

    fn apply(&mut self, ctx: &mut ExecContext<'_>, actions: Vec<Action>) {
        for action in actions {
            match action {
                Action::Send { to, msg } => send_group(ctx, to, &msg),
                Action::StartTimer { after, tag } => {
                    let Some((base, _)) = &self.negotiation else {
                        continue;
                    };
                    ctx.effect(Effect::Timer {
                        after,
                        instance: ctx.instance().to_string(),
                        event: TIMEOUT.to_string(),
                        tag: format!("{base}/{tag}"),
                    });
                }
                Action::Awarded(award) => {
                    self.negotiation = None;
                    self.min_start = award.slot.end;
                    self.steps[self.current].award = Some(award);
                    self.current += 1;
                    self.next_step(ctx);
                }
                Action::Failed(e) => {
                    self.negotiation = None;
                    self.fail(ctx, &e.to_string());
                }
            }
        }
    }

    fn scheduled(&mut self, ctx: &mut ExecContext<'_>) {
        self.state = PlanState::Scheduled;
        let end = self
            .steps
            .iter()
            .filter_map(|s| s.award.as_ref().map(|a| a.slot.end))
            .max()
            .unwrap_or(self.min_start);
        if let Some(parent) = self.parent {
            let ready = ProtocolMsg::PlanReady(PlanReady {
                order_id: self.order_id.clone(),
                end,
            });
            send_group(ctx, parent, &ready);
        }
        self.report(ctx);
    }

    fn fail(&mut self, ctx: &mut ExecContext<'_>, reason: &str) {
        if self.terminal() {
            return;
        }
        tracing::info!(order = self.order_id, reason, "order failed");
        self.state = PlanState::Failed;
        self.negotiation = None;
        for step in &self.steps {
            if let Some(a) = &step.award {
                if step.percent < 100 {
                    let cancel = ProtocolMsg::CancelOp(CancelOp {
                        id: a.slot.conversation.clone(),
                        op_id: a.slot.serv_id.clone(),
                    });
                    send_group(ctx, a.holon, &cancel);
                }
            }
        }
        if let Some(parent) = self.parent {
            let failed = ProtocolMsg::OrderFailed(OrderFailed {
                order_id: self.order_id.clone(),
                reason: reason.to_string(),
            });
            send_group(ctx, parent, &failed);
        }
        self.report(ctx);
    }

    fn step_of(&self, conversation: &str, serv_id: &str) -> Option<usize> {
        self.steps.iter().position(|s| {
            s.award
                .as_ref()
                .is_some_and(|a| a.slot.conversation == conversation && a.slot.serv_id == serv_id)
        })
    }

    fn on_timeout(&mut self, ctx: &mut ExecContext<'_>, tag: &str) {
        let Some((base, n)) = tag.rsplit_once('/') else {
            return;
        };
        let Ok(n) = n.parse::<u64>() else {
            return;
        };
        let actions = match &mut self.negotiation {
            Some((current, neg)) if current == base => neg.on_timer(n),
            _ => return,
        };
        self.apply(ctx, actions);
    }

    fn on_message(&mut self, ctx: &mut ExecContext<'_>, msg: ProtocolMsg) {
        match msg {
            ProtocolMsg::CreateOrder(order) => self.on_create_order(ctx, order),
            ProtocolMsg::OrderAccepted(a)
                if self.state == PlanState::Pending && self.awaiting_accepts > 0 =>
            {
                self.awaiting_accepts -= 1;
                if !a.from_stock {
                    self.children.entry(a.order_id).or_insert(None);
                }
                self.maybe_negotiate(ctx);
            }
            ProtocolMsg::OrderRejected(r) => {
                if self.state == PlanState::Pending {
                    self.fail(
                        ctx,
                        &format!("component {} rejected: {}", r.product, r.reason),
                    );
                }
            }
            ProtocolMsg::PlanReady(p) => {
                self.children.insert(p.order_id, Some(p.end));
                self.maybe_negotiate(ctx);
            }
            ProtocolMsg::OrderFailed(f) => {
                self.fail(
                    ctx,
                    &format!("component order {} failed: {}", f.order_id, f.reason),
                );
            }
            ProtocolMsg::RspLookup(_) | ProtocolMsg::RspBidForOp(_) | ProtocolMsg::ConfirmOp(_) => {
                let actions = match &mut self.negotiation {
                    Some((_, neg)) => neg.on_message(&msg),
                    None => return,
                };
                self.apply(ctx, actions);
            }
            ProtocolMsg::OpProgress(p) => {
                if self.terminal() {
                    return;
                }
                if let Some(i) = self.step_of(&p.id, &p.op_id) {
                    self.steps[i].percent = self.steps[i].percent.max(p.percent.min(100));
                    self.state = PlanState::Executing;
                    self.report(ctx);
                }
            }
            ProtocolMsg::OpDone(d) => {
                if self.terminal() {
                    return;
                }
                if let Some(i) = self.step_of(&d.id, &d.op_id) {
                    self.steps[i].percent = 100;
                    self.state = if self.steps.iter().all(|s| s.percent == 100) {
                        PlanState::Done
                    } else {
                        PlanState::Executing
                    };
                    self.report(ctx);
                }
            }
            ProtocolMsg::OpFault(f) => {
                if self.step_of(&f.id, &f.op_id).is_some() {
                    self.fail(ctx, &format!("{} faulted: {}", f.op_id, f.reason));
                }
            }
            other => tracing::debug!(kind = other.type_name(), "order holon ignores message"),
        }
    }
}

impl crate::fb::Behavior for OrderB1 {
    fn on_create(&mut self, ctx: &mut ExecContext<'_>) {
        self.me = channel_param(ctx, ID);
        self.manager = channel_param(ctx, "MANAGER");
        self.coordinator = channel_param(ctx, "COORD");
    }

    fn on_event(&mut self, event: &str, ctx: &mut ExecContext<'_>) {
        match event {
            REC_GROUP => {
                if let Some(msg) = incoming(ctx, IN_GROUP) {
                    self.on_message(ctx, msg);
                }
            }
            TIMEOUT => {
                let tag = ctx.text(TAG).to_string();
                self.on_timeout(ctx, &tag);
            }
            _ => {}
        }
    }
}

/// Conscious component of an order holon. Order holons have no subconscious
/// part; execution feedback is handled here.
pub fn order_b1_type(cfg: NegotiationConfig) -> FBTypeDef {
    FBTypeDef::basic(ORDER_B1, move || OrderB1::new(cfg))
        .event_in(REC_GROUP, &[IN_GROUP])
        .event_in(TIMEOUT, &[TAG])
        .event_out(SEND_GROUP, &[OUT_GROUP, ID_DEST])
        .data_in(ID, ValueKind::Text)
        .data_in("MANAGER", ValueKind::Text)
        .data_in("COORD", ValueKind::Text)
        .data_in(IN_GROUP, ValueKind::Text)
        .data_in(TAG, ValueKind::Text)
        .data_out(OUT_GROUP, ValueKind::Text)
        .data_out(ID_DEST, ValueKind::Text)
}

fn link(kind: ConnectionKind, from: (&str, &str), to: (&str, &str)) -> CompositeConnection {
    CompositeConnection {
        kind,
        from: (from.0.into(), from.1.into()),
        to: (to.0.into(), to.1.into()),
    }
}

/// SUBSCRIBE → dispatcher → B1 → PUBLISH, listening on `ID`. Needs
/// [`ORDER_DISPATCHER`], [`ORDER_B1`] and the messaging blocks registered.
pub fn order_holon_type() -> FBTypeDef {
    use ConnectionKind::{Data, Event};
    let net = CompositeNetwork {
        members: vec![
            ("SUB".into(), SUBSCRIBE.into()),
            ("DISP".into(), ORDER_DISPATCHER.into()),
            ("B1".into(), ORDER_B1.into()),
            ("PUB".into(), PUBLISH.into()),
        ],
        connections: vec![
            link(Event, ("SUB", "IND"), ("DISP", "REQ")),
            link(Data, ("SUB", "RD_1"), ("DISP", "IN")),
            link(Event, ("DISP", "TO_B1"), ("B1", REC_GROUP)),
            link(Data, ("DISP", "OUT_B1"), ("B1", IN_GROUP)),
            link(Event, ("B1", SEND_GROUP), ("PUB", "REQ")),
            link(Data, ("B1", OUT_GROUP), ("PUB", "SD_1")),
            link(Data, ("B1", ID_DEST), ("PUB", "ID")),
        ],
        input_bindings: vec![
            (ID.into(), ("SUB".into(), "ID".into())),
            (ID.into(), ("B1".into(), ID.into())),
            ("MANAGER".into(), ("B1".into(), "MANAGER".into())),
            ("COORD".into(), ("B1".into(), "COORD".into())),
        ],
        output_bindings: vec![],
    };
    FBTypeDef::new(ORDER_HOLON, FbKind::Composite(net))
        .data_in(ID, ValueKind::Text)
        .data_in("MANAGER", ValueKind::Text)
        .data_in("COORD", ValueKind::Text)
}
