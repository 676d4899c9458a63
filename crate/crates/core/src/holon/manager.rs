//! The order holon manager: validates orders, spawns an order holon per
//! order and removes it once it and its component orders are finished.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use crate::fb::{Behavior, Effect, ExecContext, FBTypeDef, MgmtCommand, Value, ValueKind};
use crate::messaging::ChannelId;
use crate::protocol::{CreateOrder, OrderAccepted, OrderRejected, OrderStatus, ProtocolMsg};
use crate::scheduling::{decompose_order, PlanError, PlanState, ProductCatalog, StockTable};
use crate::trace::{EventKind, TraceEvent};

use super::interface::*;
use super::order::ORDER_HOLON;
use super::{channel_param, incoming, send_group, trace};

pub const ORDER_MANAGER: &str = "OrderManager";

/// Where the manager spawns order holons and how they reach the coordinator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManagerSettings {
    pub device: String,
    pub resource: String,
    /// Inbox of the first order holon; later ones take the following ports.
    pub first_inbox: ChannelId,
    pub coordinator: ChannelId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRecord {
    pub id: String,
    pub product: String,
    pub inbox: ChannelId,
    pub parent: Option<String>,
    pub children: Vec<String>,
    pub state: PlanState,
    pub percent: u8,
    /// The holon has been removed from its resource.
    pub despawned: bool,
}

impl OrderRecord {
    pub fn is_terminal(&self) -> bool {
        matches!(self.state, PlanState::Done | PlanState::Failed)
    }
}

#[derive(Debug, Default)]
struct RegistryState {
    orders: BTreeMap<String, OrderRecord>,
    catalog: ProductCatalog,
    stock: StockTable,
    next_id: u32,
    next_port: u16,
}

/// Orders, catalog and stock, shared by the manager and its host.
#[derive(Debug, Clone, Default)]
pub struct OrderRegistry(Arc<Mutex<RegistryState>>);

impl OrderRegistry {
    pub fn new(catalog: ProductCatalog, stock: StockTable) -> Self {
        Self(Arc::new(Mutex::new(RegistryState {
            catalog,
            stock,
            ..RegistryState::default()
        })))
    }

    fn lock(&self) -> MutexGuard<'_, RegistryState> {
        self.0.lock().unwrap()
    }

    pub fn orders(&self) -> Vec<OrderRecord> {
        self.lock().orders.values().cloned().collect()
    }

    pub fn get(&self, id: &str) -> Option<OrderRecord> {
        self.lock().orders.get(id).cloned()
    }

    /// Order holons currently instantiated.
    pub fn live(&self) -> usize {
        self.lock().orders.values().filter(|o| !o.despawned).count()
    }

    pub fn all_terminal(&self) -> bool {
        self.lock().orders.values().all(OrderRecord::is_terminal)
    }

    pub fn catalog(&self) -> ProductCatalog {
        self.lock().catalog.clone()
    }

    pub fn stock(&self) -> StockTable {
        self.lock().stock.clone()
    }

    /// Id the next order without a requested id will get.
    pub fn peek_id(&self) -> String {
        let s = self.lock();
        next_free_id(&s.orders, s.next_id).1
    }
}

fn next_free_id(orders: &BTreeMap<String, OrderRecord>, from: u32) -> (u32, String) {
    let mut n = from + 1;
    loop {
        let id = format!("O{n}");
        if !orders.contains_key(&id) {
            return (n, id);
        }
        n += 1;
    }
}

fn reject_reason(e: &PlanError) -> String {
    match e {
        PlanError::UnknownProduct(p) => format!("UnknownProduct: {p}"),
        PlanError::CyclicProduct(p) => format!("CyclicProduct: {p}"),
        other => other.to_string(),
    }
}

struct Manager {
    settings: ManagerSettings,
    registry: OrderRegistry,
    me: Option<ChannelId>,
}

impl Manager {
    fn reject(
        &self,
        ctx: &mut ExecContext<'_>,
        to: Option<ChannelId>,
        order: &CreateOrder,
        reason: String,
    ) {
        tracing::info!(product = order.product, reason, "order rejected");
        if let Some(to) = to {
            let msg = ProtocolMsg::OrderRejected(OrderRejected {
                product: order.product.clone(),
                reason,
                order_id: order.order_id.clone(),
            });
            send_group(ctx, to, &msg);
        }
    }

    fn on_create_order(&mut self, ctx: &mut ExecContext<'_>, order: CreateOrder) {
        let Some(me) = self.me else {
            return;
        };
        let reply_to = order.sender;
        let mut state = self.registry.lock();
        let Some(spec) = state.catalog.get(&order.product).cloned() else {
            drop(state);
            let reason = reject_reason(&PlanError::UnknownProduct(order.product.clone()));
            self.reject(ctx, reply_to, &order, reason);
            return;
        };
        if order.parent.is_some() && state.stock.take(&order.product) {
            drop(state);
            if let Some(to) = reply_to {
                let msg = ProtocolMsg::OrderAccepted(OrderAccepted {
                    order_id: "stock".into(),
                    product: order.product.clone(),
                    from_stock: true,
                });
                send_group(ctx, to, &msg);
            }
            return;
        }
        if let Err(e) = decompose_order(&spec, &state.catalog, &mut StockTable::new()) {
            drop(state);
            self.reject(ctx, reply_to, &order, reject_reason(&e));
            return;
        }
        let id = match &order.order_id {
            Some(id) if !id.is_empty() && !state.orders.contains_key(id) => id.clone(),
            _ => {
                let (n, id) = next_free_id(&state.orders, state.next_id);
                state.next_id = n;
                id
            }
        };
        let Some(inbox) = self.settings.first_inbox.offset(state.next_port) else {
            drop(state);
            self.reject(ctx, reply_to, &order, "no free order inbox".into());
            return;
        };
        state.next_port += 1;
        let parent_id = order.parent.and_then(|p| {
            state
                .orders
                .values()
                .find(|o| o.inbox == p && !o.despawned)
                .map(|o| o.id.clone())
        });
        if let Some(pid) = &parent_id {
            if let Some(p) = state.orders.get_mut(pid) {
                p.children.push(id.clone());
            }
        }
        state.orders.insert(
            id.clone(),
            OrderRecord {
                id: id.clone(),
                product: order.product.clone(),
                inbox,
                parent: parent_id.clone(),
                children: Vec::new(),
                state: PlanState::Pending,
                percent: 0,
                despawned: false,
            },
        );
        drop(state);

        ctx.effect(Effect::Mgmt {
            device: self.settings.device.clone(),
            resource: self.settings.resource.clone(),
            command: MgmtCommand::CreateInstance {
                id: id.clone(),
                type_name: ORDER_HOLON.into(),
                params: vec![
                    (ID.into(), Value::Text(inbox.to_string())),
                    ("MANAGER".into(), Value::Text(me.to_string())),
                    (
                        "COORD".into(),
                        Value::Text(self.settings.coordinator.to_string()),
                    ),
                ],
            },
        });
        trace(
            ctx,
            TraceEvent::new(EventKind::HolonCreated)
                .with("holon", id.clone())
                .with("kind", "order")
                .with("product", order.product.clone())
                .with("parent", parent_id.unwrap_or_default())
                .with("inbox", inbox.to_string()),
        );
        let forward = ProtocolMsg::CreateOrder(CreateOrder {
            product: order.product.clone(),
            order_id: Some(id.clone()),
            parent: order.parent,
            sender: Some(me),
            spec: Some(spec),
        });
        send_group(ctx, inbox, &forward);
        if let Some(to) = reply_to {
            let msg = ProtocolMsg::OrderAccepted(OrderAccepted {
                order_id: id,
                product: order.product,
                from_stock: false,
            });
            send_group(ctx, to, &msg);
        }
    }

    fn on_status(&mut self, ctx: &mut ExecContext<'_>, status: OrderStatus) {
        let state = match status.state.as_deref() {
            Some("Pending") => PlanState::Pending,
            Some("Negotiating") => PlanState::Negotiating,
            Some("Scheduled") => PlanState::Scheduled,
            Some("Executing") => PlanState::Executing,
            Some("Done") => PlanState::Done,
            Some("Failed") => PlanState::Failed,
            _ => return,
        };
        {
            let mut reg = self.registry.lock();
            let Some(rec) = reg.orders.get_mut(&status.order_id) else {
                return;
            };
            if rec.is_terminal() || rec.despawned {
                return;
            }
            rec.state = state;
            rec.percent = status.percent.min(100);
        }
        trace(
            ctx,
            TraceEvent::new(EventKind::OrderProgress)
                .with("order", status.order_id.clone())
                .with("percent", status.percent.min(100))
                .with("state", format!("{state:?}")),
        );
        self.despawn_from(ctx, &status.order_id);
    }

    /// Removes `id` if it and all its component orders are finished, then
    /// retries its parent.
    fn despawn_from(&mut self, ctx: &mut ExecContext<'_>, id: &str) {
        let mut next = Some(id.to_string());
        while let Some(id) = next.take() {
            let (remove, parent) = {
                let reg = self.registry.lock();
                let Some(rec) = reg.orders.get(&id) else {
                    return;
                };
                let children_gone = rec
                    .children
                    .iter()
                    .all(|c| reg.orders.get(c).is_none_or(|c| c.despawned));
                (
                    rec.is_terminal() && !rec.despawned && children_gone,
                    rec.parent.clone(),
                )
            };
            if !remove {
                return;
            }
            if let Some(rec) = self.registry.lock().orders.get_mut(&id) {
                rec.despawned = true;
            }
            ctx.effect(Effect::Mgmt {
                device: self.settings.device.clone(),
                resource: self.settings.resource.clone(),
                command: MgmtCommand::DeleteInstance { id: id.clone() },
            });
            trace(
                ctx,
                TraceEvent::new(EventKind::HolonRemoved)
                    .with("holon", id.clone())
                    .with("kind", "order"),
            );
            next = parent;
        }
    }
}

impl Behavior for Manager {
    fn on_create(&mut self, ctx: &mut ExecContext<'_>) {
        self.me = channel_param(ctx, ID);
    }

    fn on_event(&mut self, event: &str, ctx: &mut ExecContext<'_>) {
        if event != REC_GROUP {
            return;
        }
        match incoming(ctx, IN_GROUP) {
            Some(ProtocolMsg::CreateOrder(order)) => self.on_create_order(ctx, order),
            Some(ProtocolMsg::OrderStatus(status)) => self.on_status(ctx, status),
            Some(ProtocolMsg::DefineProduct(spec)) => {
                self.registry.lock().catalog.insert(spec.name.clone(), spec);
            }
            Some(other) => tracing::debug!(kind = other.type_name(), "manager ignores message"),
            None => {}
        }
    }
}

pub fn manager_type(settings: ManagerSettings, registry: OrderRegistry) -> FBTypeDef {
    FBTypeDef::basic(ORDER_MANAGER, move || Manager {
        settings: settings.clone(),
        registry: registry.clone(),
        me: None,
    })
    .event_in(REC_GROUP, &[IN_GROUP])
    .event_out(SEND_GROUP, &[OUT_GROUP, ID_DEST])
    .data_in(ID, ValueKind::Text)
    .data_in(IN_GROUP, ValueKind::Text)
    .data_out(OUT_GROUP, ValueKind::Text)
    .data_out(ID_DEST, ValueKind::Text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_skip_taken_names() {
        let reg = OrderRegistry::default();
        assert_eq!(reg.peek_id(), "O1");
        reg.lock().orders.insert(
            "O1".into(),
            OrderRecord {
                id: "O1".into(),
                product: "P".into(),
                inbox: "225.0.0.1:2101".parse().unwrap(),
                parent: None,
                children: vec![],
                state: PlanState::Done,
                percent: 100,
                despawned: true,
            },
        );
        assert_eq!(reg.peek_id(), "O2");
        assert!(reg.all_terminal());
        assert_eq!(reg.live(), 0);
    }

    #[test]
    fn reject_reasons_name_the_product() {
        assert_eq!(
            reject_reason(&PlanError::UnknownProduct("X".into())),
            "UnknownProduct: X"
        );
    }
}
