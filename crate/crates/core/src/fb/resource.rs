use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use crate::protocol::EpochTime;

use super::{
    Behavior, ConnectionKind, Effect, Endpoint, ExecContext, FBTypeDef, FbError, FbKind,
    MgmtCommand, TypeRegistry, Value,
};

/// Step budget used when callers do not pick one.
pub const DEFAULT_MAX_STEPS: usize = 100_000;

pub struct FBInstance {
    pub instance_id: String,
    pub type_def: Arc<FBTypeDef>,
    pub data_input_values: BTreeMap<String, Value>,
    pub data_output_values: BTreeMap<String, Value>,
    behavior: Option<Box<dyn Behavior>>,
    /// Enclosing composite instance, if any.
    pub parent: Option<String>,
}

impl std::fmt::Debug for FBInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FBInstance")
            .field("instance_id", &self.instance_id)
            .field("type", &self.type_def.name)
            .field("data_input_values", &self.data_input_values)
            .field("data_output_values", &self.data_output_values)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connection {
    pub id: u64,
    pub kind: ConnectionKind,
    pub source: Endpoint,
    pub target: Endpoint,
}

/// A pending event delivery with the data sampled at emit time.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub target: String,
    pub event_input: String,
    pub values: Vec<(String, Value)>,
}

#[derive(Debug)]
struct CompositeRecord {
    type_def: Arc<FBTypeDef>,
    members: Vec<String>,
    parent: Option<String>,
}

enum Hook {
    Create,
    Delete,
}

/// Container for a network of function blocks with a single event queue.
#[derive(Debug)]
pub struct Resource {
    name: String,
    instances: BTreeMap<String, FBInstance>,
    composites: BTreeMap<String, CompositeRecord>,
    connections: Vec<Connection>,
    next_connection: u64,
    queue: VecDeque<Delivery>,
    effects: Vec<Effect>,
    now: EpochTime,
    invocations: Option<Vec<(String, String)>>,
    processed: u64,
}

impl Resource {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            instances: BTreeMap::new(),
            composites: BTreeMap::new(),
            connections: Vec::new(),
            next_connection: 0,
            queue: VecDeque::new(),
            effects: Vec::new(),
            now: EpochTime::ZERO,
            invocations: None,
            processed: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_now(&mut self, now: EpochTime) {
        self.now = now;
    }

    /// Starts recording `(instance, event input)` for every invocation.
    pub fn record_invocations(&mut self) {
        self.invocations.get_or_insert_with(Vec::new);
    }

    pub fn invocations(&self) -> &[(String, String)] {
        self.invocations.as_deref().unwrap_or_default()
    }

    /// Total deliveries popped since creation.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn instance(&self, id: &str) -> Option<&FBInstance> {
        self.instances.get(id)
    }

    pub fn instances(&self) -> impl Iterator<Item = &FBInstance> {
        self.instances.values()
    }

    /// Basic instances plus composite containers.
    pub fn contains(&self, id: &str) -> bool {
        self.instances.contains_key(id) || self.composites.contains_key(id)
    }

    /// Ids of instances not nested in a composite, with their type names.
    pub fn top_level(&self) -> Vec<(String, String)> {
        let basics = self
            .instances
            .values()
            .filter(|i| i.parent.is_none())
            .map(|i| (i.instance_id.clone(), i.type_def.name.clone()));
        let composites = self
            .composites
            .iter()
            .filter(|(_, c)| c.parent.is_none())
            .map(|(id, c)| (id.clone(), c.type_def.name.clone()));
        let mut all: Vec<_> = basics.chain(composites).collect();
        all.sort();
        all
    }

    pub fn connections(&self) -> &[Connection] {
        &self.connections
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn pending(&self) -> impl Iterator<Item = &Delivery> {
        self.queue.iter()
    }

    pub fn take_effects(&mut self) -> Vec<Effect> {
        std::mem::take(&mut self.effects)
    }

    pub fn has_effects(&self) -> bool {
        !self.effects.is_empty()
    }

    /// Connections whose endpoints no longer exist. Always zero unless the
    /// cascade on delete is broken.
    pub fn dangling_connections(&self) -> usize {
        self.connections
            .iter()
            .filter(|c| {
                !self.instances.contains_key(&c.source.instance)
                    || !self.instances.contains_key(&c.target.instance)
            })
            .count()
    }

    /// Applies a management command. Commands are only ever applied between
    /// dispatch steps because a behavior cannot reach its own resource.
    pub fn mgmt(&mut self, registry: &TypeRegistry, command: MgmtCommand) -> Result<(), FbError> {
        match command {
            MgmtCommand::CreateInstance {
                id,
                type_name,
                params,
            } => self.create_instance(registry, &id, &type_name, &params),
            MgmtCommand::DeleteInstance { id } => self.delete_instance(&id),
            MgmtCommand::CreateConnection {
                kind,
                source,
                target,
            } => self.connect(kind, &source, &target),
            MgmtCommand::DeleteConnection {
                kind,
                source,
                target,
            } => self.disconnect(kind, &source, &target),
        }
    }

    pub fn create_instance(
        &mut self,
        registry: &TypeRegistry,
        id: &str,
        type_name: &str,
        params: &[(String, Value)],
    ) -> Result<(), FbError> {
        if self.contains(id) {
            return Err(FbError::DuplicateInstance(id.to_string()));
        }
        let ty = registry
            .get(type_name)
            .ok_or_else(|| FbError::UnknownType(type_name.to_string()))?;
        // Validate parameters and member names up front so a failure leaves
        // the resource untouched.
        self.check_create(registry, id, &ty, params)?;
        let mut created = Vec::new();
        self.create_unchecked(registry, id, ty, params, None, &mut created)?;
        for inst in created {
            self.run_hook(&inst, Hook::Create);
        }
        Ok(())
    }

    fn check_create(
        &self,
        registry: &TypeRegistry,
        id: &str,
        ty: &FBTypeDef,
        params: &[(String, Value)],
    ) -> Result<(), FbError> {
        for (name, value) in params {
            let port = ty.data_input(name).ok_or_else(|| FbError::UnknownPort {
                instance: id.to_string(),
                port: name.clone(),
            })?;
            if port.kind != value.kind() {
                return Err(FbError::IllegalConnection(format!(
                    "parameter {id}.{name} expects {:?}",
                    port.kind
                )));
            }
        }
        if let FbKind::Composite(net) = &ty.kind {
            for (member, member_type) in &net.members {
                let full = format!("{id}.{member}");
                if self.contains(&full) {
                    return Err(FbError::DuplicateInstance(full));
                }
                let mty = registry
                    .get(member_type)
                    .ok_or_else(|| FbError::UnknownType(member_type.clone()))?;
                self.check_create(registry, &full, &mty, &member_params(net, member, params))?;
            }
        }
        Ok(())
    }

    fn create_unchecked(
        &mut self,
        registry: &TypeRegistry,
        id: &str,
        ty: Arc<FBTypeDef>,
        params: &[(String, Value)],
        parent: Option<String>,
        created: &mut Vec<String>,
    ) -> Result<(), FbError> {
        match &ty.kind {
            FbKind::Basic(factory) | FbKind::ServiceInterface(factory) => {
                let mut inputs: BTreeMap<String, Value> = ty
                    .data_inputs
                    .iter()
                    .map(|p| (p.name.clone(), p.kind.default_value()))
                    .collect();
                for (name, value) in params {
                    inputs.insert(name.clone(), value.clone());
                }
                let outputs = ty
                    .data_outputs
                    .iter()
                    .map(|p| (p.name.clone(), p.kind.default_value()))
                    .collect();
                let behavior = factory();
                self.instances.insert(
                    id.to_string(),
                    FBInstance {
                        instance_id: id.to_string(),
                        type_def: ty.clone(),
                        data_input_values: inputs,
                        data_output_values: outputs,
                        behavior: Some(behavior),
                        parent,
                    },
                );
                created.push(id.to_string());
            }
            FbKind::Composite(net) => {
                let mut members = Vec::new();
                for (member, member_type) in &net.members {
                    let full = format!("{id}.{member}");
                    let mty = registry
                        .get(member_type)
                        .ok_or_else(|| FbError::UnknownType(member_type.clone()))?;
                    let mparams = member_params(net, member, params);
                    self.create_unchecked(
                        registry,
                        &full,
                        mty,
                        &mparams,
                        Some(id.to_string()),
                        created,
                    )?;
                    members.push(full);
                }
                self.composites.insert(
                    id.to_string(),
                    CompositeRecord {
                        type_def: ty.clone(),
                        members,
                        parent,
                    },
                );
                for c in &net.connections {
                    let source = Endpoint::new(format!("{id}.{}", c.from.0), &c.from.1);
                    let target = Endpoint::new(format!("{id}.{}", c.to.0), &c.to.1);
                    self.connect(c.kind, &source, &target)?;
                }
            }
        }
        Ok(())
    }

    pub fn delete_instance(&mut self, id: &str) -> Result<(), FbError> {
        if !self.contains(id) {
            return Err(FbError::UnknownInstance(id.to_string()));
        }
        let mut doomed = Vec::new();
        self.collect_members(id, &mut doomed);
        for inst in &doomed {
            self.run_hook(inst, Hook::Delete);
        }
        for inst in &doomed {
            self.instances.remove(inst);
        }
        self.remove_composites(id);
        self.connections.retain(|c| {
            !doomed.contains(&c.source.instance) && !doomed.contains(&c.target.instance)
        });
        self.queue.retain(|d| !doomed.contains(&d.target));
        Ok(())
    }

    fn collect_members(&self, id: &str, out: &mut Vec<String>) {
        match self.composites.get(id) {
            Some(rec) => {
                for m in &rec.members {
                    self.collect_members(m, out);
                }
            }
            None => out.push(id.to_string()),
        }
    }

    fn remove_composites(&mut self, id: &str) {
        if let Some(rec) = self.composites.remove(id) {
            for m in rec.members {
                self.remove_composites(&m);
            }
        }
    }

    /// Maps a composite output endpoint onto the member output behind it.
    fn resolve_source(&self, ep: &Endpoint) -> Result<Endpoint, FbError> {
        match self.composites.get(&ep.instance) {
            None => Ok(ep.clone()),
            Some(rec) => {
                let FbKind::Composite(net) = &rec.type_def.kind else {
                    unreachable!("composite record without composite type")
                };
                let (_, (m, p)) = net
                    .output_bindings
                    .iter()
                    .find(|(port, _)| *port == ep.port)
                    .ok_or_else(|| unknown_port(ep))?;
                self.resolve_source(&Endpoint::new(format!("{}.{m}", ep.instance), p))
            }
        }
    }

    /// Maps a composite input endpoint onto every member input bound to it.
    fn resolve_targets(&self, ep: &Endpoint) -> Result<Vec<Endpoint>, FbError> {
        match self.composites.get(&ep.instance) {
            None => Ok(vec![ep.clone()]),
            Some(rec) => {
                let FbKind::Composite(net) = &rec.type_def.kind else {
                    unreachable!("composite record without composite type")
                };
                let mut out = Vec::new();
                for (port, (m, p)) in &net.input_bindings {
                    if *port == ep.port {
                        out.extend(
                            self.resolve_targets(&Endpoint::new(
                                format!("{}.{m}", ep.instance),
                                p,
                            ))?,
                        );
                    }
                }
                if out.is_empty() {
                    return Err(unknown_port(ep));
                }
                Ok(out)
            }
        }
    }

    fn check_connection(
        &self,
        kind: ConnectionKind,
        source: &Endpoint,
        target: &Endpoint,
    ) -> Result<(), FbError> {
        let src = self
            .instances
            .get(&source.instance)
            .ok_or_else(|| FbError::UnknownInstance(source.instance.clone()))?;
        let dst = self
            .instances
            .get(&target.instance)
            .ok_or_else(|| FbError::UnknownInstance(target.instance.clone()))?;
        let illegal =
            |why: &str| FbError::IllegalConnection(format!("{source} -> {target}: {why}"));
        match kind {
            ConnectionKind::Event => {
                let out_ok = src.type_def.event_output(&source.port).is_some();
                let in_ok = dst.type_def.event_input(&target.port).is_some();
                if !out_ok || !in_ok {
                    let data_shaped = src.type_def.data_output(&source.port).is_some()
                        || dst.type_def.data_input(&target.port).is_some();
                    return Err(if data_shaped {
                        illegal("event connection between data ports")
                    } else if !out_ok {
                        unknown_port(source)
                    } else {
                        unknown_port(target)
                    });
                }
                if self
                    .connections
                    .iter()
                    .any(|c| c.kind == kind && c.source == *source && c.target == *target)
                {
                    return Err(illegal("duplicate event connection"));
                }
            }
            ConnectionKind::Data => {
                let out = src.type_def.data_output(&source.port);
                let inp = dst.type_def.data_input(&target.port);
                let (out, inp) = match (out, inp) {
                    (Some(o), Some(i)) => (o, i),
                    _ => {
                        let event_shaped = src.type_def.event_output(&source.port).is_some()
                            || dst.type_def.event_input(&target.port).is_some();
                        return Err(if event_shaped {
                            illegal("data connection between event ports")
                        } else if out.is_none() {
                            unknown_port(source)
                        } else {
                            unknown_port(target)
                        });
                    }
                };
                if out.kind != inp.kind {
                    return Err(illegal("value kinds differ"));
                }
                if self
                    .connections
                    .iter()
                    .any(|c| c.kind == ConnectionKind::Data && c.target == *target)
                {
                    return Err(illegal("data input already has a source"));
                }
            }
        }
        Ok(())
    }

    pub fn connect(
        &mut self,
        kind: ConnectionKind,
        source: &Endpoint,
        target: &Endpoint,
    ) -> Result<(), FbError> {
        let source = self.resolve_source(source)?;
        let targets = self.resolve_targets(target)?;
        for (i, t) in targets.iter().enumerate() {
            self.check_connection(kind, &source, t)?;
            if targets[..i].contains(t) {
                return Err(FbError::IllegalConnection(format!("{t} bound twice")));
            }
        }
        for target in targets {
            let id = self.next_connection;
            self.next_connection += 1;
            self.connections.push(Connection {
                id,
                kind,
                source: source.clone(),
                target,
            });
        }
        Ok(())
    }

    pub fn disconnect(
        &mut self,
        kind: ConnectionKind,
        source: &Endpoint,
        target: &Endpoint,
    ) -> Result<(), FbError> {
        let source = self.resolve_source(source)?;
        let targets = self.resolve_targets(target)?;
        let before = self.connections.len();
        self.connections
            .retain(|c| !(c.kind == kind && c.source == source && targets.contains(&c.target)));
        if self.connections.len() == before {
            return Err(FbError::UnknownConnection(format!("{source} -> {target}")));
        }
        Ok(())
    }

    /// Writes a data output from outside the block (service-interface
    /// bindings and tests).
    pub fn set_output(&mut self, instance: &str, port: &str, value: Value) -> Result<(), FbError> {
        let ep = Endpoint::new(instance, port);
        let ep = self.resolve_source(&ep)?;
        let inst = self
            .instances
            .get_mut(&ep.instance)
            .ok_or_else(|| FbError::UnknownInstance(ep.instance.clone()))?;
        let slot = inst
            .data_output_values
            .get_mut(&ep.port)
            .ok_or_else(|| unknown_port(&ep))?;
        *slot = value;
        Ok(())
    }

    /// Emits `event_output` of `instance`: one delivery per outgoing event
    /// connection, in connection creation order. Returns the number of
    /// deliveries enqueued.
    pub fn emit(&mut self, instance: &str, event_output: &str) -> Result<usize, FbError> {
        let ep = self.resolve_source(&Endpoint::new(instance, event_output))?;
        let inst = self
            .instances
            .get(&ep.instance)
            .ok_or_else(|| FbError::UnknownInstance(ep.instance.clone()))?;
        let port = inst
            .type_def
            .event_output(&ep.port)
            .ok_or_else(|| unknown_port(&ep))?;
        let snapshot = port
            .with
            .iter()
            .map(|d| (d.clone(), inst.data_output_values[d].clone()))
            .collect();
        Ok(self.enqueue_emit(&ep.instance, &ep.port, snapshot))
    }

    fn enqueue_emit(&mut self, source: &str, event: &str, snapshot: Vec<(String, Value)>) -> usize {
        let mut count = 0;
        for ev in self.connections.iter().filter(|c| {
            c.kind == ConnectionKind::Event && c.source.instance == source && c.source.port == event
        }) {
            let mut values = Vec::new();
            for (out, value) in &snapshot {
                for dc in &self.connections {
                    if dc.kind == ConnectionKind::Data
                        && dc.source.instance == source
                        && dc.source.port == *out
                        && dc.target.instance == ev.target.instance
                    {
                        values.push((dc.target.port.clone(), value.clone()));
                    }
                }
            }
            self.queue.push_back(Delivery {
                target: ev.target.instance.clone(),
                event_input: ev.target.port.clone(),
                values,
            });
            count += 1;
        }
        count
    }

    /// Enqueues a delivery from outside the network (timers, hosts).
    pub fn inject(
        &mut self,
        instance: &str,
        event_input: &str,
        values: Vec<(String, Value)>,
    ) -> Result<(), FbError> {
        let inst = self
            .instances
            .get(instance)
            .ok_or_else(|| FbError::UnknownInstance(instance.to_string()))?;
        let ep = Endpoint::new(instance, event_input);
        if inst.type_def.event_input(event_input).is_none() {
            return Err(unknown_port(&ep));
        }
        for (name, _) in &values {
            if inst.type_def.data_input(name).is_none() {
                return Err(unknown_port(&Endpoint::new(instance, name.as_str())));
            }
        }
        self.queue.push_back(Delivery {
            target: instance.to_string(),
            event_input: event_input.to_string(),
            values,
        });
        Ok(())
    }

    /// Processes at most one pending delivery. Returns 0 when the queue is
    /// empty, 1 otherwise.
    pub fn dispatch_step(&mut self) -> usize {
        let Some(delivery) = self.queue.pop_front() else {
            return 0;
        };
        self.processed += 1;
        let Resource {
            instances,
            effects,
            invocations,
            now,
            ..
        } = self;
        let Some(inst) = instances.get_mut(&delivery.target) else {
            return 1;
        };
        for (name, value) in delivery.values {
            if let Some(slot) = inst.data_input_values.get_mut(&name) {
                *slot = value;
            }
        }
        if let Some(log) = invocations {
            log.push((delivery.target.clone(), delivery.event_input.clone()));
        }
        let mut emitted = Vec::new();
        if let Some(mut behavior) = inst.behavior.take() {
            let mut ctx = ExecContext {
                instance: &inst.instance_id,
                now: *now,
                type_def: &inst.type_def,
                inputs: &inst.data_input_values,
                outputs: &mut inst.data_output_values,
                emitted: Vec::new(),
                effects,
            };
            behavior.on_event(&delivery.event_input, &mut ctx);
            emitted = ctx.emitted;
            inst.behavior = Some(behavior);
        }
        for (event, snapshot) in emitted {
            self.enqueue_emit(&delivery.target, &event, snapshot);
        }
        1
    }

    fn run_hook(&mut self, id: &str, hook: Hook) {
        let Resource {
            instances,
            effects,
            now,
            ..
        } = self;
        let Some(inst) = instances.get_mut(id) else {
            return;
        };
        let Some(mut behavior) = inst.behavior.take() else {
            return;
        };
        let mut ctx = ExecContext {
            instance: &inst.instance_id,
            now: *now,
            type_def: &inst.type_def,
            inputs: &inst.data_input_values,
            outputs: &mut inst.data_output_values,
            emitted: Vec::new(),
            effects,
        };
        match hook {
            Hook::Create => behavior.on_create(&mut ctx),
            Hook::Delete => behavior.on_delete(&mut ctx),
        }
        let emitted = ctx.emitted;
        inst.behavior = Some(behavior);
        if matches!(hook, Hook::Create) {
            for (event, snapshot) in emitted {
                self.enqueue_emit(id, &event, snapshot);
            }
        }
    }

    /// Repeats [`Resource::dispatch_step`] until the queue is empty.
    pub fn run_until_quiescent(&mut self, max_steps: usize) -> Result<usize, FbError> {
        if max_steps == 0 {
            return Err(FbError::InvalidBudget);
        }
        let mut steps = 0;
        while !self.queue.is_empty() {
            if steps == max_steps {
                return Err(FbError::StepBudgetExceeded(max_steps));
            }
            steps += self.dispatch_step();
        }
        Ok(steps)
    }
}

fn unknown_port(ep: &Endpoint) -> FbError {
    FbError::UnknownPort {
        instance: ep.instance.clone(),
        port: ep.port.clone(),
    }
}

fn member_params(
    net: &super::CompositeNetwork,
    member: &str,
    params: &[(String, Value)],
) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    for (name, value) in params {
        for (port, (m, p)) in &net.input_bindings {
            if port == name && m == member {
                out.push((p.clone(), value.clone()));
            }
        }
    }
    out
}
