//! The assembly cell as a resource holon: bidding B1, sequencing B2 and the
//! hardware-independent interface blocks in front of its controllers.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use crate::fb::{Behavior, Effect, ExecContext, FBTypeDef, ValueKind};
use crate::messaging::ChannelId;
use crate::protocol::{
    CancelOp, EpochTime, ExecOp, Message, OpDone, OpFault, OpProgress, ProtocolError, ProtocolMsg,
    RegisterService, ServiceDef,
};
use crate::scheduling::CellBidder;
use crate::trace::{EventKind, TraceEvent};

use super::interface::*;
use super::{channel_param, incoming, input_text, send_group, send_on, trace};

pub const CELL_B1: &str = "CellB1";
pub const CELL_B2: &str = "CellB2";
pub const HII: &str = "HII";

/// Bidders of the resource holons in a system, by inbox.
#[derive(Debug, Clone, Default)]
pub struct CellHandles(Arc<Mutex<BTreeMap<ChannelId, Arc<Mutex<CellBidder>>>>>);

impl CellHandles {
    pub fn insert(&self, bidder: CellBidder) -> Arc<Mutex<CellBidder>> {
        let handle = Arc::new(Mutex::new(bidder));
        let addr = handle.lock().unwrap().addr();
        self.0.lock().unwrap().insert(addr, handle.clone());
        handle
    }

    pub fn get(&self, inbox: ChannelId) -> Option<Arc<Mutex<CellBidder>>> {
        self.0.lock().unwrap().get(&inbox).cloned()
    }

    pub fn inboxes(&self) -> Vec<ChannelId> {
        self.0.lock().unwrap().keys().copied().collect()
    }
}

/// Command sent to a controller's hardware-independent interface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtrlCommand {
    pub controller: String,
    pub name: String,
    pub id: String,
    pub op_id: String,
    pub start: Option<EpochTime>,
    pub duration: Option<u64>,
    pub service: Option<ServiceDef>,
}

impl CtrlCommand {
    pub fn new(controller: &str, name: &str, id: &str, op_id: &str) -> Self {
        Self {
            controller: controller.to_string(),
            name: name.to_string(),
            id: id.to_string(),
            op_id: op_id.to_string(),
            start: None,
            duration: None,
            service: None,
        }
    }

    pub fn to_message(&self) -> Message {
        let mut m = Message::new("Cmd")
            .with("Controller", &self.controller)
            .with("Name", &self.name)
            .with("ID", &self.id)
            .with("OpID", &self.op_id);
        if let Some(s) = self.start {
            m.set("Start", s);
        }
        if let Some(d) = self.duration {
            m.set("Duration", d);
        }
        if let Some(def) = &self.service {
            m = m.with_child(def.to_message());
        }
        m
    }

    pub fn from_message(m: &Message) -> Result<Self, ProtocolError> {
        if m.type_name != "Cmd" {
            return Err(ProtocolError::UnexpectedType(m.type_name.clone()));
        }
        let req = |a: &str| {
            m.get(a)
                .map(str::to_string)
                .ok_or_else(|| ProtocolError::MissingAttribute(a.to_string()))
        };
        let num = |a: &str| -> Result<Option<u64>, ProtocolError> {
            m.get(a)
                .map(|v| {
                    v.parse().map_err(|_| ProtocolError::BadValue {
                        attr: a.to_string(),
                        value: v.to_string(),
                    })
                })
                .transpose()
        };
        Ok(Self {
            controller: req("Controller")?,
            name: req("Name")?,
            id: req("ID")?,
            op_id: req("OpID")?,
            start: num("Start")?.map(EpochTime),
            duration: num("Duration")?,
            service: m
                .children
                .first()
                .map(ServiceDef::from_message)
                .transpose()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatusKind {
    Ack,
    Fault,
    Started,
    Progress,
    Done,
    Blocked,
    Overrun,
}

impl StatusKind {
    fn as_str(self) -> &'static str {
        match self {
            StatusKind::Ack => "Ack",
            StatusKind::Fault => "Fault",
            StatusKind::Started => "Started",
            StatusKind::Progress => "Progress",
            StatusKind::Done => "Done",
            StatusKind::Blocked => "Blocked",
            StatusKind::Overrun => "Overrun",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            StatusKind::Ack,
            StatusKind::Fault,
            StatusKind::Started,
            StatusKind::Progress,
            StatusKind::Done,
            StatusKind::Blocked,
            StatusKind::Overrun,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

/// Status report from a controller interface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtrlStatus {
    pub controller: String,
    pub kind: StatusKind,
    pub id: String,
    pub op_id: String,
    /// Command acknowledged or refused (`Ack`/`Fault`).
    pub cmd: Option<String>,
    pub percent: Option<u8>,
    pub reason: Option<String>,
    pub late_by: Option<u64>,
    pub load: Option<bool>,
}

impl CtrlStatus {
    pub fn new(controller: &str, kind: StatusKind, id: &str, op_id: &str) -> Self {
        Self {
            controller: controller.to_string(),
            kind,
            id: id.to_string(),
            op_id: op_id.to_string(),
            cmd: None,
            percent: None,
            reason: None,
            late_by: None,
            load: None,
        }
    }

    pub fn to_message(&self) -> Message {
        let mut m = Message::new("Status")
            .with("Controller", &self.controller)
            .with("Kind", self.kind.as_str())
            .with("ID", &self.id)
            .with("OpID", &self.op_id);
        if let Some(c) = &self.cmd {
            m.set("Cmd", c);
        }
        if let Some(p) = self.percent {
            m.set("Percent", p);
        }
        if let Some(r) = &self.reason {
            m.set("Reason", r);
        }
        if let Some(l) = self.late_by {
            m.set("LateBy", l);
        }
        if let Some(l) = self.load {
            m.set("Load", l);
        }
        m
    }

    pub fn from_message(m: &Message) -> Result<Self, ProtocolError> {
        if m.type_name != "Status" {
            return Err(ProtocolError::UnexpectedType(m.type_name.clone()));
        }
        let req = |a: &str| {
            m.get(a)
                .map(str::to_string)
                .ok_or_else(|| ProtocolError::MissingAttribute(a.to_string()))
        };
        let bad = |a: &str, v: &str| ProtocolError::BadValue {
            attr: a.to_string(),
            value: v.to_string(),
        };
        let kind_text = req("Kind")?;
        let kind = StatusKind::parse(&kind_text).ok_or_else(|| bad("Kind", &kind_text))?;
        let percent = m
            .get("Percent")
            .map(|v| {
                v.parse::<u8>()
                    .ok()
                    .filter(|p| *p <= 100)
                    .ok_or_else(|| bad("Percent", v))
            })
            .transpose()?;
        let late_by = m
            .get("LateBy")
            .map(|v| v.parse::<u64>().map_err(|_| bad("LateBy", v)))
            .transpose()?;
        let load = m
            .get("Load")
            .map(|v| v.parse::<bool>().map_err(|_| bad("Load", v)))
            .transpose()?;
        Ok(Self {
            controller: req("Controller")?,
            kind,
            id: req("ID")?,
            op_id: req("OpID")?,
            cmd: m.get("Cmd").map(str::to_string),
            percent,
            reason: m.get("Reason").map(str::to_string),
            late_by,
            load,
        })
    }
}

struct CellB1 {
    cells: CellHandles,
    me: Option<ChannelId>,
    coordinator: Option<ChannelId>,
    bidder: Option<Arc<Mutex<CellBidder>>>,
}

impl CellB1 {
    fn cancel(&self, ctx: &mut ExecContext<'_>, bidder: &Arc<Mutex<CellBidder>>, c: CancelOp) {
        if bidder.lock().unwrap().handle_cancel(&c).is_some() {
            send_on(ctx, SEND_B2, OUT_B2, ProtocolMsg::CancelOp(c).encode());
        }
    }
}

impl Behavior for CellB1 {
    fn on_create(&mut self, ctx: &mut ExecContext<'_>) {
        self.me = channel_param(ctx, ID);
        self.coordinator = channel_param(ctx, "COORD");
        self.bidder = self.me.and_then(|me| self.cells.get(me));
        if self.bidder.is_none() {
            tracing::warn!(
                instance = ctx.instance(),
                "cell B1 has no bidder for its inbox"
            );
        }
    }

    fn on_event(&mut self, event: &str, ctx: &mut ExecContext<'_>) {
        let (Some(me), Some(bidder)) = (self.me, self.bidder.clone()) else {
            return;
        };
        let msg = match event {
            REC_GROUP => incoming(ctx, IN_GROUP),
            REC_HMI => incoming(ctx, IN_HMI),
            REC_B2 => {
                if let Some(ProtocolMsg::OpFault(f)) = incoming(ctx, IN_B2) {
                    tracing::warn!(
                        order = f.id,
                        serv = f.op_id,
                        reason = f.reason,
                        "operation faulted"
                    );
                }
                return;
            }
            _ => return,
        };
        match msg {
            Some(ProtocolMsg::GetBidForOp(req)) => {
                let bid = bidder.lock().unwrap().handle_request(&req);
                if let Some(bid) = bid {
                    send_group(ctx, req.sender, &ProtocolMsg::RspBidForOp(bid));
                }
            }
            Some(ProtocolMsg::AwardOp(award)) => {
                let (confirm, result) = bidder.lock().unwrap().handle_award(&award);
                let confirm = ProtocolMsg::ConfirmOp(confirm);
                send_group(ctx, award.sender, &confirm);
                send_on(ctx, SEND_HMI, OUT_HMI, confirm.encode());
                match result {
                    Ok(slot) => {
                        trace(
                            ctx,
                            TraceEvent::new(EventKind::SlotCommitted)
                                .with("holon", me.to_string())
                                .with("serv", slot.serv_id.clone())
                                .with("order", slot.conversation.clone())
                                .with("start", slot.start.0)
                                .with("end", slot.end.0),
                        );
                        let exec = ExecOp {
                            id: slot.conversation.clone(),
                            op_id: slot.serv_id.clone(),
                            start: slot.start,
                            exec_time: slot.duration(),
                            sender: award.sender,
                        };
                        send_on(ctx, SEND_B2, OUT_B2, ProtocolMsg::ExecOp(exec).encode());
                    }
                    Err(e) => tracing::debug!(order = award.id, error = %e, "award refused"),
                }
            }
            Some(ProtocolMsg::CancelOp(c)) => self.cancel(ctx, &bidder, c),
            Some(ProtocolMsg::DefineService(d)) => {
                let serv_id = d.0.serv_id.clone();
                bidder.lock().unwrap().define_service(d.0.clone());
                send_on(ctx, SEND_B2, OUT_B2, ProtocolMsg::DefineService(d).encode());
                if let Some(coord) = self.coordinator {
                    let reg = ProtocolMsg::RegisterService(RegisterService {
                        serv_id,
                        holon_addr: me,
                    });
                    send_group(ctx, coord, &reg);
                }
            }
            Some(other) => tracing::debug!(kind = other.type_name(), "cell B1 ignores message"),
            None => {}
        }
    }
}

/// Conscious component of a cell; finds its bidder in `cells` by its `ID`.
pub fn cell_b1_type(cells: CellHandles) -> FBTypeDef {
    conscious_interface(CELL_B1, move || CellB1 {
        cells: cells.clone(),
        me: None,
        coordinator: None,
        bidder: None,
    })
    .data_in("COORD", ValueKind::Text)
}

/// One step of a service's command sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandStep {
    pub controller: String,
    pub name: String,
}

impl CommandStep {
    pub fn new(controller: &str, name: &str) -> Self {
        Self {
            controller: controller.to_string(),
            name: name.to_string(),
        }
    }
}

/// Commands B2 issues, in order, to carry out a service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceTable {
    pub default: Vec<CommandStep>,
    pub per_service: BTreeMap<String, Vec<CommandStep>>,
}

impl Default for SequenceTable {
    fn default() -> Self {
        Self {
            default: vec![
                CommandStep::new("plc", "Clamp"),
                CommandStep::new("robot", "Execute"),
            ],
            per_service: BTreeMap::new(),
        }
    }
}

impl SequenceTable {
    pub fn plan(&self, serv_id: &str) -> &[CommandStep] {
        self.per_service.get(serv_id).unwrap_or(&self.default)
    }
}

struct Job {
    exec: ExecOp,
    cursor: usize,
    retried: bool,
}

struct CellB2 {
    table: SequenceTable,
    me: Option<ChannelId>,
    jobs: BTreeMap<(String, String), Job>,
}

impl CellB2 {
    fn send_step(&self, ctx: &mut ExecContext<'_>, job: &Job) {
        let Some(step) = self.table.plan(&job.exec.op_id).get(job.cursor) else {
            return;
        };
        let mut cmd = CtrlCommand::new(&step.controller, &step.name, &job.exec.id, &job.exec.op_id);
        cmd.start = Some(job.exec.start);
        cmd.duration = Some(job.exec.exec_time);
        send_on(ctx, SEND_CTRL, OUT_CTRL, cmd.to_message().to_xml());
    }

    fn start_job(&mut self, ctx: &mut ExecContext<'_>, exec: ExecOp) {
        let key = (exec.id.clone(), exec.op_id.clone());
        let job = Job {
            exec,
            cursor: 0,
            retried: false,
        };
        self.send_step(ctx, &job);
        self.jobs.insert(key, job);
    }

    fn on_status(&mut self, ctx: &mut ExecContext<'_>, status: CtrlStatus) {
        let me = self.me.map(|m| m.to_string()).unwrap_or_default();
        let key = (status.id.clone(), status.op_id.clone());
        let Some(job) = self.jobs.get_mut(&key) else {
            return;
        };
        let sender = job.exec.sender;
        let base = |kind| {
            TraceEvent::new(kind)
                .with("holon", me.clone())
                .with("order", status.id.clone())
                .with("serv", status.op_id.clone())
        };
        match status.kind {
            StatusKind::Ack => {
                let expected = self
                    .table
                    .plan(&status.op_id)
                    .get(job.cursor)
                    .map(|s| s.name.clone());
                if status.cmd.is_some() && status.cmd == expected {
                    job.cursor += 1;
                    job.retried = false;
                    let job = &self.jobs[&key];
                    self.send_step(ctx, job);
                }
            }
            StatusKind::Fault => {
                if !job.retried {
                    job.retried = true;
                    let job = &self.jobs[&key];
                    self.send_step(ctx, job);
                } else {
                    let job = self.jobs.remove(&key).expect("job present");
                    let fault = ProtocolMsg::OpFault(OpFault {
                        id: job.exec.id,
                        op_id: job.exec.op_id,
                        reason: status.reason.unwrap_or_else(|| "controller fault".into()),
                    });
                    send_group(ctx, sender, &fault);
                    send_on(ctx, SEND_B1, OUT_B1, fault.encode());
                }
            }
            StatusKind::Started => {
                trace(
                    ctx,
                    base(EventKind::OpStarted).with("load", status.load.unwrap_or(false)),
                );
            }
            StatusKind::Progress => {
                let percent = status.percent.unwrap_or(0);
                let msg = ProtocolMsg::OpProgress(OpProgress {
                    id: status.id.clone(),
                    op_id: status.op_id.clone(),
                    percent,
                });
                send_group(ctx, sender, &msg);
                send_on(ctx, SEND_HMI, OUT_HMI, msg.encode());
                trace(ctx, base(EventKind::OpProgress).with("percent", percent));
            }
            StatusKind::Done => {
                self.jobs.remove(&key);
                let msg = ProtocolMsg::OpDone(OpDone {
                    id: status.id.clone(),
                    op_id: status.op_id.clone(),
                });
                send_group(ctx, sender, &msg);
                send_on(ctx, SEND_B1, OUT_B1, msg.encode());
                trace(ctx, base(EventKind::OpDone));
            }
            StatusKind::Overrun => {
                trace(
                    ctx,
                    base(EventKind::Overrun).with("late_by", status.late_by.unwrap_or(0)),
                );
            }
            StatusKind::Blocked => {
                tracing::debug!(order = status.id, serv = status.op_id, reason = ?status.reason, "slot blocked");
            }
        }
    }
}

impl Behavior for CellB2 {
    fn on_create(&mut self, ctx: &mut ExecContext<'_>) {
        self.me = channel_param(ctx, ID);
    }

    fn on_event(&mut self, event: &str, ctx: &mut ExecContext<'_>) {
        match event {
            REC_B1 | REC_GROUP => {
                let port = if event == REC_B1 { IN_B1 } else { IN_GROUP };
                match incoming(ctx, port) {
                    Some(ProtocolMsg::ExecOp(exec)) => self.start_job(ctx, exec),
                    Some(ProtocolMsg::CancelOp(c)) => {
                        if self.jobs.remove(&(c.id.clone(), c.op_id.clone())).is_some() {
                            let cmd = CtrlCommand::new("robot", "Withdraw", &c.id, &c.op_id);
                            send_on(ctx, SEND_CTRL, OUT_CTRL, cmd.to_message().to_xml());
                        }
                    }
                    Some(ProtocolMsg::DefineService(d)) => {
                        let mut cmd = CtrlCommand::new("robot", "Define", "-", &d.0.serv_id);
                        cmd.service = Some(d.0);
                        send_on(ctx, SEND_CTRL, OUT_CTRL, cmd.to_message().to_xml());
                    }
                    Some(other) => {
                        tracing::debug!(kind = other.type_name(), "cell B2 ignores message")
                    }
                    None => {}
                }
            }
            REC_CTRL => {
                let Some(text) = input_text(ctx, IN_CTRL) else {
                    return;
                };
                match Message::from_xml(&text).and_then(|m| CtrlStatus::from_message(&m)) {
                    Ok(status) => self.on_status(ctx, status),
                    Err(e) => tracing::warn!(error = %e, "bad controller status"),
                }
            }
            _ => {}
        }
    }
}

/// Subconscious component of a cell, sequencing controller commands per
/// `table`. A refused command is retried once before the operation faults.
pub fn cell_b2_type(table: SequenceTable) -> FBTypeDef {
    subconscious_interface(CELL_B2, move || CellB2 {
        table: table.clone(),
        me: None,
        jobs: BTreeMap::new(),
    })
}

struct HiiBlock {
    controller: String,
}

impl Behavior for HiiBlock {
    fn on_create(&mut self, ctx: &mut ExecContext<'_>) {
        self.controller = ctx.text("CONTROLLER").to_string();
    }

    fn on_event(&mut self, event: &str, ctx: &mut ExecContext<'_>) {
        match event {
            "REQ" => {
                let Some(text) = input_text(ctx, "CMD") else {
                    return;
                };
                match Message::from_xml(&text) {
                    Ok(m) if m.get("Controller") == Some(self.controller.as_str()) => {
                        ctx.effect(Effect::Hardware(m));
                    }
                    Ok(_) => {}
                    Err(e) => tracing::warn!(error = %e, "bad controller command"),
                }
            }
            "HW" => {
                let status = ctx.text("HWMSG").to_string();
                ctx.set_output("STATUS", status);
                let _ = ctx.emit("IND");
            }
            _ => {}
        }
    }
}

/// Hardware-independent interface of one controller. Commands addressed to
/// `CONTROLLER` go to the host as hardware effects; the host feeds status
/// back through `HW`.
pub fn hii_type() -> FBTypeDef {
    FBTypeDef::service(HII, || HiiBlock {
        controller: String::new(),
    })
    .event_in("REQ", &["CMD"])
    .event_in("HW", &["HWMSG"])
    .event_out("IND", &["STATUS"])
    .data_in("CONTROLLER", ValueKind::Text)
    .data_in("CMD", ValueKind::Blob)
    .data_in("HWMSG", ValueKind::Text)
    .data_out("STATUS", ValueKind::Text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ctrl_messages_round_trip() {
        let mut cmd = CtrlCommand::new("robot", "Execute", "O1:1", "S_20");
        cmd.start = Some(EpochTime(10));
        cmd.duration = Some(60);
        let text = cmd.to_message().to_xml();
        assert_eq!(
            text,
            r#"<Cmd Controller="robot" Name="Execute" ID="O1:1" OpID="S_20" Start="10" Duration="60" />"#
        );
        assert_eq!(
            CtrlCommand::from_message(&Message::from_xml(&text).unwrap()).unwrap(),
            cmd
        );

        let mut st = CtrlStatus::new("robot", StatusKind::Progress, "O1:1", "S_20");
        st.percent = Some(66);
        let back = CtrlStatus::from_message(&Message::from_xml(&st.to_message().to_xml()).unwrap())
            .unwrap();
        assert_eq!(back, st);
        let bad = Message::new("Status")
            .with("Controller", "robot")
            .with("Kind", "Progress")
            .with("ID", "a")
            .with("OpID", "b")
            .with("Percent", "101");
        assert!(CtrlStatus::from_message(&bad).is_err());
    }

    #[test]
    fn cell_interfaces_follow_split() {
        let b1 = cell_b1_type(CellHandles::default());
        let b2 = cell_b2_type(SequenceTable::default());
        assert_eq!(check_port_split(&b1, &b2), Ok(()));
    }
}
