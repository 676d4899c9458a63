//! The control application in one process: the four devices, the message
//! bus, host timers and the simulated cell, driven by a simulated clock.

use std::collections::{BTreeMap, VecDeque};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::cell::{CellError, CellSim, Provision, SimEvent, SimJob, TimedEvent};
use crate::config::{ConfigError, DevicePlace, SystemConfig};
use crate::fb::{
    ConnectionKind, Device, Effect, Endpoint, FbError, MgmtCommand, Resource, TypeRegistry, Value,
};
use crate::holon::interface::{ID, ID_DEST, IN_GROUP, OUT_GROUP, REC_GROUP, SEND_GROUP, TAG};
use crate::holon::{
    cell_b1_type, cell_b2_type, coordinator_type, hii_network, hii_type, manager_type,
    order_b1_type, order_holon_type, resource_holon_commands, CellHandles, CtrlCommand, CtrlStatus,
    Directory, DirectoryEntry, HolonError, HolonId, ManagerSettings, OrderRegistry,
    ResourceHolonSpec, SequenceTable, StatusKind, COORDINATOR, HII, ORDER_DISPATCHER,
    ORDER_MANAGER, RESOURCE_DISPATCHER,
};
use crate::messaging::{
    dispatcher_type, publish_type, subscribe_type, Bus, ChannelId, Component, DropCounter,
    MessagingError, RoutingTable, Subscription, Transport, PUBLISH, SUBSCRIBE,
};
use crate::protocol::{
    CreateOrder, DefineService, EpochTime, Message, ProductSpec, ProtocolMsg, ServiceDef,
};
use crate::scheduling::{CellBidder, ScheduleSlot};
use crate::trace::{EventFrame, EventKind, TraceEvent};

#[derive(Debug, thiserror::Error)]
pub enum SystemError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fb(#[from] FbError),
    #[error(transparent)]
    Messaging(#[from] MessagingError),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Holon(#[from] HolonError),
    #[error("directory: {0}")]
    Directory(#[from] std::io::Error),
    #[error("no quiescence after {0} dispatches")]
    StepBudget(usize),
}

/// Where a block instance lives.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location {
    pub device: String,
    pub resource: String,
    pub instance: String,
}

#[derive(Debug, Clone)]
struct TimerEntry {
    at: Location,
    event: String,
    tag: String,
}

const STEP_BUDGET: usize = 2_000_000;
const UDP_GRACE: Duration = Duration::from_millis(50);

pub struct System {
    cfg: SystemConfig,
    registry: TypeRegistry,
    devices: BTreeMap<String, Device>,
    bus: Bus,
    transport: Transport,
    subs: BTreeMap<(ChannelId, Location), Subscription>,
    gateway: Subscription,
    gateway_inbox: VecDeque<ProtocolMsg>,
    timers: BTreeMap<(EpochTime, u64), TimerEntry>,
    timer_seq: u64,
    sim: CellSim,
    hii: BTreeMap<String, Location>,
    faults: BTreeMap<(String, String), u32>,
    frames: Vec<EventFrame>,
    listeners: Vec<Sender<EventFrame>>,
    now: EpochTime,
    last_activity: EpochTime,
    orders: OrderRegistry,
    cells: CellHandles,
    directory: Arc<Mutex<Directory>>,
    drops: DropCounter,
    resource_holons: Vec<HolonId>,
    boot_census: Vec<HolonId>,
}

impl std::fmt::Debug for System {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("System")
            .field("now", &self.now)
            .field("devices", &self.devices.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// SUBSCRIBE(inbox) → dispatcher → `block` → PUBLISH(ID_Dest).
fn inbox_chain(name: &str, inbox: ChannelId, block_type: &str) -> Vec<MgmtCommand> {
    let text = |s: String| Value::Text(s);
    let id = |m: &str| format!("{m}_{name}");
    let conn = |kind, from: (String, &str), to: (String, &str)| MgmtCommand::CreateConnection {
        kind,
        source: Endpoint::new(from.0, from.1),
        target: Endpoint::new(to.0, to.1),
    };
    use ConnectionKind::{Data, Event};
    vec![
        MgmtCommand::CreateInstance {
            id: id("SUB"),
            type_name: SUBSCRIBE.into(),
            params: vec![("ID".into(), text(inbox.to_string()))],
        },
        MgmtCommand::CreateInstance {
            id: id("DISP"),
            type_name: ORDER_DISPATCHER.into(),
            params: vec![],
        },
        MgmtCommand::CreateInstance {
            id: name.to_string(),
            type_name: block_type.into(),
            params: vec![(ID.into(), text(inbox.to_string()))],
        },
        MgmtCommand::CreateInstance {
            id: id("PUB"),
            type_name: PUBLISH.into(),
            params: vec![],
        },
        conn(Event, (id("SUB"), "IND"), (id("DISP"), "REQ")),
        conn(Data, (id("SUB"), "RD_1"), (id("DISP"), "IN")),
        conn(Event, (id("DISP"), "TO_B1"), (name.to_string(), REC_GROUP)),
        conn(Data, (id("DISP"), "OUT_B1"), (name.to_string(), IN_GROUP)),
        conn(Event, (name.to_string(), SEND_GROUP), (id("PUB"), "REQ")),
        conn(Data, (name.to_string(), OUT_GROUP), (id("PUB"), "SD_1")),
        conn(Data, (name.to_string(), ID_DEST), (id("PUB"), "ID")),
    ]
}

impl System {
    /// Boots every device of `cfg` and the simulated cell at `cfg.start_time`.
    pub fn boot(cfg: SystemConfig, transport: Transport) -> Result<System, SystemError> {
        let bus = Bus::new();
        let directory = match &cfg.directory_file {
            Some(path) => {
                let mut d = Directory::open(path)?;
                for row in &cfg.directory {
                    d.register(&row.service, row.holon_addr);
                }
                d
            }
            None => Directory::from_rows(cfg.directory.clone()),
        };
        let directory = Arc::new(Mutex::new(directory));
        let orders = OrderRegistry::new(cfg.catalog.clone(), cfg.stock.clone());
        let cells = CellHandles::default();
        let sim = CellSim::new(&cfg.cell_sim, cfg.start_time)?;
        let drops = DropCounter::default();

        let mut registry = TypeRegistry::new();
        registry.register(subscribe_type())?;
        registry.register(publish_type())?;
        registry.register(dispatcher_type(
            RESOURCE_DISPATCHER,
            RoutingTable::resource_holon(),
            drops.clone(),
        ))?;
        registry.register(dispatcher_type(
            ORDER_DISPATCHER,
            RoutingTable::new(Component::B1),
            drops.clone(),
        ))?;
        registry.register(cell_b1_type(cells.clone()))?;
        registry.register(cell_b2_type(SequenceTable::default()))?;
        registry.register(hii_type())?;
        registry.register(coordinator_type(directory.clone()))?;
        registry.register(manager_type(
            ManagerSettings {
                device: cfg.devices.orders.name.clone(),
                resource: cfg.devices.orders.resource.clone(),
                first_inbox: cfg.addresses.first_order_inbox,
                coordinator: cfg.addresses.coordinator,
            },
            orders.clone(),
        ))?;
        registry.register(order_b1_type(cfg.negotiation))?;
        registry.register(order_holon_type())?;

        bus.open_channel(cfg.addresses.gateway, transport)?;
        let gateway = bus.subscribe(cfg.addresses.gateway)?;

        let mut devices = BTreeMap::new();
        for place in [
            &cfg.devices.hmi,
            &cfg.devices.orders,
            &cfg.devices.cell,
            &cfg.devices.net,
        ] {
            let mut d = Device::new(&place.name, place.management);
            d.add_resource(Resource::new(&place.resource))?;
            devices.insert(place.name.clone(), d);
        }
        for decl in &cfg.extra_devices {
            devices.insert(decl.name.clone(), Device::from_decl(decl, &registry)?);
        }

        let start = cfg.start_time;
        let mut system = System {
            registry,
            devices,
            bus,
            transport,
            subs: BTreeMap::new(),
            gateway,
            gateway_inbox: VecDeque::new(),
            timers: BTreeMap::new(),
            timer_seq: 0,
            sim,
            hii: BTreeMap::new(),
            faults: BTreeMap::new(),
            frames: Vec::new(),
            listeners: Vec::new(),
            now: start,
            last_activity: start,
            orders,
            cells,
            directory,
            drops,
            resource_holons: Vec::new(),
            boot_census: Vec::new(),
            cfg,
        };
        system.set_now(start);

        let hmi = system.cfg.devices.hmi.clone();
        let mut commands = inbox_chain("MGR", system.cfg.addresses.manager, ORDER_MANAGER);
        commands.extend(inbox_chain(
            "COORD",
            system.cfg.addresses.coordinator,
            COORDINATOR,
        ));
        for c in commands {
            system.mgmt(&hmi.name, &hmi.resource, c)?;
        }

        let net = system.cfg.devices.net.clone();
        let controllers: Vec<&str> = system.cfg.controllers.iter().map(String::as_str).collect();
        for c in hii_network(system.cfg.cell.ctrl, system.cfg.cell.status, &controllers) {
            system.mgmt(&net.name, &net.resource, c)?;
        }

        let spec = system.cfg.cell.clone();
        let place = system.cfg.devices.cell.clone();
        let bidder = CellBidder::new(
            spec.inbox,
            system.cfg.services.clone(),
            system.sim.memory().clone(),
            system.cfg.cell_sim.load_time,
        );
        system.assemble_resource_holon(&place, &spec, bidder)?;

        system.drain_effects()?;
        system.locate_hii();
        system.boot_census = system.census();
        Ok(system)
    }

    /// Builds a resource holon into `place`. Fails with `ChannelInUse` when
    /// something already listens on its inbox.
    pub fn assemble_resource_holon(
        &mut self,
        place: &DevicePlace,
        spec: &ResourceHolonSpec,
        bidder: CellBidder,
    ) -> Result<HolonId, SystemError> {
        if self.bus.subscriber_count(spec.inbox) > 0 {
            return Err(MessagingError::ChannelInUse(spec.inbox).into());
        }
        self.cells.insert(bidder);
        for c in resource_holon_commands(spec) {
            self.mgmt(&place.name, &place.resource, c)?;
        }
        self.drain_effects()?;
        let id = HolonId {
            id: spec.name.clone(),
            inbox: spec.inbox,
        };
        self.resource_holons.push(id.clone());
        self.record(
            TraceEvent::new(EventKind::HolonCreated)
                .with("holon", spec.name.clone())
                .with("kind", "resource")
                .with("inbox", spec.inbox.to_string()),
        );
        Ok(id)
    }

    fn locate_hii(&mut self) {
        self.hii.clear();
        for (dname, d) in &self.devices {
            for r in d.resources() {
                for inst in r.instances().filter(|i| i.type_def.name == HII) {
                    let controller = inst
                        .data_input_values
                        .get("CONTROLLER")
                        .and_then(Value::as_text);
                    if let Some(c) = controller {
                        self.hii.insert(
                            c.to_string(),
                            Location {
                                device: dname.clone(),
                                resource: r.name().to_string(),
                                instance: inst.instance_id.clone(),
                            },
                        );
                    }
                }
            }
        }
    }

    fn mgmt(&mut self, device: &str, resource: &str, command: MgmtCommand) -> Result<(), FbError> {
        let d = self
            .devices
            .get_mut(device)
            .ok_or_else(|| FbError::UnknownDevice(device.to_string()))?;
        d.mgmt(&self.registry, resource, command)
    }

    fn resource_mut(&mut self, device: &str, resource: &str) -> Option<&mut Resource> {
        self.devices.get_mut(device)?.resource_mut(resource)
    }

    fn resource_keys(&self) -> Vec<(String, String)> {
        self.devices
            .iter()
            .flat_map(|(d, dev)| {
                dev.resources()
                    .map(move |r| (d.clone(), r.name().to_string()))
            })
            .collect()
    }

    fn set_now(&mut self, t: EpochTime) {
        self.now = self.now.max(t);
        let now = self.now;
        for d in self.devices.values_mut() {
            for r in d.resources_mut() {
                r.set_now(now);
            }
        }
    }

    fn record(&mut self, event: TraceEvent) {
        let frame = EventFrame {
            seq: self.frames.len() as u64 + 1,
            sim_time: self.now,
            kind: event.kind,
            payload: event.payload,
        };
        self.last_activity = self.now;
        self.listeners.retain(|l| l.send(frame.clone()).is_ok());
        self.frames.push(frame);
    }

    /// Applies pending effects of every resource until none remain.
    fn drain_effects(&mut self) -> Result<bool, SystemError> {
        let mut any = false;
        loop {
            let mut batch = Vec::new();
            for (d, r) in self.resource_keys() {
                if let Some(res) = self.resource_mut(&d, &r) {
                    for e in res.take_effects() {
                        batch.push((d.clone(), r.clone(), e));
                    }
                }
            }
            if batch.is_empty() {
                return Ok(any);
            }
            any = true;
            for (d, r, e) in batch {
                self.apply_effect(&d, &r, e)?;
            }
        }
    }

    fn apply_effect(
        &mut self,
        device: &str,
        resource: &str,
        effect: Effect,
    ) -> Result<(), SystemError> {
        match effect {
            Effect::Publish { channel, payload } => {
                if !self.bus.is_open(channel) {
                    self.bus.open_channel(channel, self.transport)?;
                }
                self.bus.publish(channel, &payload)?;
            }
            Effect::Subscribe { channel, instance } => {
                self.bus.open_channel(channel, self.transport)?;
                let sub = self.bus.subscribe(channel)?;
                let at = Location {
                    device: device.to_string(),
                    resource: resource.to_string(),
                    instance,
                };
                self.subs.insert((channel, at), sub);
            }
            Effect::Unsubscribe { channel, instance } => {
                let at = Location {
                    device: device.to_string(),
                    resource: resource.to_string(),
                    instance,
                };
                if let Some(sub) = self.subs.remove(&(channel, at)) {
                    sub.unsubscribe();
                }
                if self.bus.subscriber_count(channel) == 0 {
                    self.bus.close(channel);
                }
            }
            Effect::Timer {
                after,
                instance,
                event,
                tag,
            } => {
                self.timer_seq += 1;
                let entry = TimerEntry {
                    at: Location {
                        device: device.to_string(),
                        resource: resource.to_string(),
                        instance,
                    },
                    event,
                    tag,
                };
                self.timers
                    .insert((self.now + after, self.timer_seq), entry);
            }
            Effect::Mgmt {
                device: target_device,
                resource: target_resource,
                command,
            } => {
                if let Err(e) = self.mgmt(&target_device, &target_resource, command) {
                    tracing::warn!(device = target_device, error = %e, "management command failed");
                }
                let effects = self
                    .resource_mut(&target_device, &target_resource)
                    .map(Resource::take_effects)
                    .unwrap_or_default();
                for e in effects {
                    self.apply_effect(&target_device, &target_resource, e)?;
                }
            }
            Effect::Hardware(msg) => self.on_hardware(&msg),
            Effect::Trace(event) => self.record(event),
        }
        Ok(())
    }

    /// The simulated controllers behind the interface blocks.
    fn on_hardware(&mut self, msg: &Message) {
        let cmd = match CtrlCommand::from_message(msg) {
            Ok(c) => c,
            Err(e) => {
                tracing::warn!(error = %e, "bad hardware command");
                return;
            }
        };
        let mut status = CtrlStatus::new(&cmd.controller, StatusKind::Ack, &cmd.id, &cmd.op_id);
        status.cmd = Some(cmd.name.clone());
        let key = (cmd.controller.clone(), cmd.name.clone());
        let injected = match self.faults.get_mut(&key) {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        };
        let result = if injected {
            Err("injected controller fault".to_string())
        } else {
            match (cmd.controller.as_str(), cmd.name.as_str()) {
                ("plc", "Clamp") => Ok(()),
                ("robot", "Execute") => match (cmd.start, cmd.duration) {
                    (Some(start), Some(duration)) => self
                        .sim
                        .enqueue(SimJob {
                            id: cmd.id.clone(),
                            serv_id: cmd.op_id.clone(),
                            start,
                            duration,
                        })
                        .map_err(|e| e.to_string()),
                    _ => Err("Execute needs Start and Duration".into()),
                },
                ("robot", "Withdraw") => {
                    self.sim.withdraw(&cmd.id, &cmd.op_id);
                    Ok(())
                }
                ("robot", "Define") => match cmd.service {
                    Some(def) => {
                        self.sim.define_service(def);
                        Ok(())
                    }
                    None => Err("Define needs a service definition".into()),
                },
                (c, n) => Err(format!("controller {c} has no command {n}")),
            }
        };
        if let Err(reason) = result {
            status.kind = StatusKind::Fault;
            status.reason = Some(reason);
        }
        self.send_status(status);
    }

    fn send_status(&mut self, status: CtrlStatus) {
        let Some(at) = self.hii.get(&status.controller).cloned() else {
            tracing::warn!(
                controller = status.controller,
                "no interface block for controller"
            );
            return;
        };
        let xml = status.to_message().to_xml();
        if let Some(r) = self.resource_mut(&at.device, &at.resource) {
            if let Err(e) = r.inject(&at.instance, "HW", vec![("HWMSG".into(), Value::Text(xml))]) {
                tracing::warn!(error = %e, "cannot deliver controller status");
            }
        }
    }

    fn on_sim_event(&mut self, ev: TimedEvent) {
        let robot = "robot";
        let status = match ev.event {
            SimEvent::Started { id, serv_id, load } => {
                let mut s = CtrlStatus::new(robot, StatusKind::Started, &id, &serv_id);
                s.load = Some(load);
                s
            }
            SimEvent::Loaded { serv_id, evicted } => {
                tracing::debug!(serv_id, ?evicted, "configuration loaded");
                return;
            }
            SimEvent::Progress {
                id,
                serv_id,
                percent,
            } => {
                let mut s = CtrlStatus::new(robot, StatusKind::Progress, &id, &serv_id);
                s.percent = Some(percent);
                s
            }
            SimEvent::Done { id, serv_id } => {
                CtrlStatus::new(robot, StatusKind::Done, &id, &serv_id)
            }
            SimEvent::Blocked {
                id,
                serv_id,
                reason,
            } => {
                let mut s = CtrlStatus::new(robot, StatusKind::Blocked, &id, &serv_id);
                s.reason = Some(format!("{reason:?}"));
                s
            }
            SimEvent::Overrun {
                id,
                serv_id,
                late_by,
            } => {
                let mut s = CtrlStatus::new(robot, StatusKind::Overrun, &id, &serv_id);
                s.late_by = Some(late_by);
                s
            }
        };
        self.send_status(status);
    }

    /// Moves received envelopes into their SUBSCRIBE blocks.
    fn pump(&mut self) -> Result<bool, SystemError> {
        let mut any = false;
        let keys: Vec<(ChannelId, Location)> = self.subs.keys().cloned().collect();
        for key in keys {
            let Some(sub) = self.subs.get(&key) else {
                continue;
            };
            let envelopes = sub.drain();
            let at = &key.1;
            for env in envelopes {
                any = true;
                let (device, resource, instance) =
                    (at.device.clone(), at.resource.clone(), at.instance.clone());
                if let Some(r) = self.resource_mut(&device, &resource) {
                    r.set_output(&instance, "RD_1", Value::Blob(env.payload))?;
                    r.emit(&instance, "IND")?;
                }
            }
        }
        for env in self.gateway.drain() {
            any = true;
            match String::from_utf8(env.payload).map(|t| ProtocolMsg::decode(&t)) {
                Ok(Ok(msg)) => self.gateway_inbox.push_back(msg),
                _ => tracing::warn!("undecodable message at the gateway"),
            }
        }
        Ok(any)
    }

    /// Runs all resources, the bus and effects until nothing is pending.
    /// Returns the number of block invocations.
    pub fn settle(&mut self) -> Result<usize, SystemError> {
        let mut steps = 0;
        loop {
            let mut progress = self.drain_effects()?;
            progress |= self.pump()?;
            for (d, r) in self.resource_keys() {
                let stepped = self.resource_mut(&d, &r).map_or(0, Resource::dispatch_step);
                if stepped > 0 {
                    steps += stepped;
                    progress = true;
                    self.drain_effects()?;
                }
            }
            if steps > STEP_BUDGET {
                return Err(SystemError::StepBudget(steps));
            }
            if !progress {
                if self.transport == Transport::Udp && self.bus.wait_for_traffic(UDP_GRACE) {
                    continue;
                }
                return Ok(steps);
            }
        }
    }

    /// Settles, then feeds due cell events and timers, until the current
    /// instant is exhausted.
    fn run_instant(&mut self) -> Result<(), SystemError> {
        loop {
            self.settle()?;
            let mut worked = false;
            let events = self.sim.advance_to(self.now);
            for e in events {
                worked = true;
                self.on_sim_event(e);
            }
            while let Some((&key, _)) = self.timers.first_key_value() {
                if key.0 > self.now {
                    break;
                }
                let entry = self.timers.remove(&key).expect("present");
                worked = true;
                let at = entry.at;
                let Some(r) = self.resource_mut(&at.device, &at.resource) else {
                    continue;
                };
                if r.contains(&at.instance) {
                    r.inject(
                        &at.instance,
                        &entry.event,
                        vec![(TAG.into(), Value::Text(entry.tag))],
                    )?;
                }
            }
            if !worked {
                return Ok(());
            }
        }
    }

    /// Earliest pending cell event or timer.
    pub fn next_event_time(&self) -> Option<EpochTime> {
        let timer = self.timers.keys().next().map(|k| k.0);
        match (self.sim.next_event_time(), timer) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Processes everything due up to and including `t`, in time order.
    pub fn advance_to(&mut self, t: EpochTime) -> Result<(), SystemError> {
        self.run_instant()?;
        while let Some(at) = self.next_event_time().filter(|at| *at <= t) {
            self.set_now(at);
            self.run_instant()?;
        }
        self.set_now(t);
        self.run_instant()
    }

    fn publish_to(&mut self, to: ChannelId, msg: &ProtocolMsg) -> Result<(), SystemError> {
        if !self.bus.is_open(to) {
            self.bus.open_channel(to, self.transport)?;
        }
        self.bus.publish(to, msg.encode().as_bytes())?;
        Ok(())
    }

    /// Sends an order to the manager as the operator; returns its order id.
    pub fn submit_order(
        &mut self,
        product: &str,
        order_id: Option<String>,
    ) -> Result<String, SystemError> {
        let order = CreateOrder {
            product: product.to_string(),
            order_id,
            parent: None,
            sender: Some(self.cfg.addresses.gateway),
            spec: None,
        };
        self.publish_to(self.cfg.addresses.manager, &ProtocolMsg::CreateOrder(order))?;
        self.run_instant()?;
        let pos = self.gateway_inbox.iter().position(|m| match m {
            ProtocolMsg::OrderAccepted(a) => a.product == product,
            ProtocolMsg::OrderRejected(r) => r.product == product,
            _ => false,
        });
        match pos.and_then(|i| self.gateway_inbox.remove(i)) {
            Some(ProtocolMsg::OrderAccepted(a)) => Ok(a.order_id),
            Some(ProtocolMsg::OrderRejected(r)) if r.reason.starts_with("UnknownProduct") => {
                Err(HolonError::UnknownProduct(product.to_string()).into())
            }
            Some(ProtocolMsg::OrderRejected(r)) => Err(HolonError::Rejected(r.reason).into()),
            _ => Err(HolonError::NoReply(ORDER_MANAGER.into()).into()),
        }
    }

    /// Adds or replaces a product in the manager's catalog.
    pub fn define_product(&mut self, spec: ProductSpec) -> Result<(), SystemError> {
        self.publish_to(
            self.cfg.addresses.manager,
            &ProtocolMsg::DefineProduct(spec),
        )?;
        self.run_instant()
    }

    /// Teaches the cell a service; the cell registers it with the coordinator.
    pub fn define_service(&mut self, def: ServiceDef) -> Result<(), SystemError> {
        self.publish_to(
            self.cfg.cell.inbox,
            &ProtocolMsg::DefineService(DefineService(def)),
        )?;
        self.run_instant()
    }

    pub fn provision(&mut self, p: Provision) -> Result<(), SystemError> {
        self.sim.provision(p)?;
        self.run_instant()
    }

    /// Makes the next `n` `command`s to `controller` fail.
    pub fn inject_faults(&mut self, controller: &str, command: &str, n: u32) {
        self.faults
            .insert((controller.to_string(), command.to_string()), n);
    }

    /// Whether order holon `id` may be removed. The manager removes order
    /// holons itself once terminal; this fails with `HolonBusy` before that.
    pub fn check_despawn(&self, id: &str) -> Result<(), SystemError> {
        let rec = self
            .orders
            .get(id)
            .ok_or_else(|| HolonError::Rejected(format!("no order {id}")))?;
        if !rec.is_terminal() {
            return Err(HolonError::HolonBusy(id.to_string()).into());
        }
        Ok(())
    }

    pub fn now(&self) -> EpochTime {
        self.now
    }

    pub fn start_time(&self) -> EpochTime {
        self.cfg.start_time
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    /// Time of the last trace event, or boot.
    pub fn last_activity(&self) -> EpochTime {
        self.last_activity
    }

    pub fn frames(&self) -> &[EventFrame] {
        &self.frames
    }

    /// Live frame feed from now on.
    pub fn listen(&mut self) -> Receiver<EventFrame> {
        let (tx, rx) = channel();
        self.listeners.push(tx);
        rx
    }

    pub fn orders(&self) -> &OrderRegistry {
        &self.orders
    }

    pub fn sim(&self) -> &CellSim {
        &self.sim
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn devices(&self) -> impl Iterator<Item = &Device> {
        self.devices.values()
    }

    pub fn device(&self, name: &str) -> Option<&Device> {
        self.devices.get(name)
    }

    /// Messages dropped by dispatchers as malformed.
    pub fn dropped(&self) -> u64 {
        self.drops.get()
    }

    pub fn directory(&self) -> Vec<DirectoryEntry> {
        self.directory.lock().unwrap().rows().to_vec()
    }

    /// Resource holons and live order holons.
    pub fn census(&self) -> Vec<HolonId> {
        let mut out = self.resource_holons.clone();
        out.extend(
            self.orders
                .orders()
                .into_iter()
                .filter(|o| !o.despawned)
                .map(|o| HolonId {
                    id: o.id,
                    inbox: o.inbox,
                }),
        );
        out
    }

    pub fn boot_census(&self) -> &[HolonId] {
        &self.boot_census
    }

    /// Committed slots of the resource holon listening on `inbox`.
    pub fn agenda(&self, inbox: ChannelId) -> Vec<ScheduleSlot> {
        self.cells
            .get(inbox)
            .map(|b| b.lock().unwrap().agenda().slots().to_vec())
            .unwrap_or_default()
    }

    pub fn resource_holons(&self) -> &[HolonId] {
        &self.resource_holons
    }

    /// Inboxes of every holon and host endpoint that receives group messages.
    pub fn group_endpoints(&self) -> Vec<ChannelId> {
        let mut out = vec![
            self.cfg.addresses.gateway,
            self.cfg.addresses.manager,
            self.cfg.addresses.coordinator,
        ];
        out.extend(self.resource_holons.iter().map(|h| h.inbox));
        out.extend(self.orders.orders().iter().map(|o| o.inbox));
        out
    }

    pub fn dangling_connections(&self) -> usize {
        self.devices
            .values()
            .flat_map(Device::resources)
            .map(Resource::dangling_connections)
            .sum()
    }

    /// Starts recording block invocations in every resource.
    pub fn record_invocations(&mut self) {
        for d in self.devices.values_mut() {
            for r in d.resources_mut() {
                r.record_invocations();
            }
        }
    }

    /// Recorded invocations by `"device/resource"`.
    pub fn invocations(&self) -> BTreeMap<String, Vec<(String, String)>> {
        let mut out = BTreeMap::new();
        for (dname, d) in &self.devices {
            for r in d.resources() {
                out.insert(format!("{dname}/{}", r.name()), r.invocations().to_vec());
            }
        }
        out
    }
}
