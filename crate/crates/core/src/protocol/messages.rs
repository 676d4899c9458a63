//! Typed inter-holon messages.
//!
//! Every message is an XML element whose name is the message type. Known
//! types have a schema fixing the canonical attribute order; [`encode`]
//! applies it so that the same message always produces the same bytes.

use crate::messaging::ChannelId;

use super::product::{ProductSpec, ServiceDef};
use super::{EpochTime, Message, ProtocolError};

/// Attribute layout of a known message type. `fields` is the canonical
/// order; names flagged `true` are required.
#[derive(Debug, Clone, Copy)]
pub struct Schema {
    pub type_name: &'static str,
    pub fields: &'static [(&'static str, bool)],
}

const SCHEMAS: &[Schema] = &[
    Schema {
        type_name: "GetBidForOp",
        fields: &[
            ("ID", true),
            ("OpID", true),
            ("MinStartTime", true),
            ("Sender", true),
        ],
    },
    Schema {
        type_name: "RspBidForOp",
        fields: &[
            ("ID", true),
            ("OpID", true),
            ("StartTime", true),
            ("ExecTime", true),
            ("Sender", true),
        ],
    },
    Schema {
        type_name: "AwardOp",
        fields: &[
            ("ID", true),
            ("OpID", true),
            ("StartTime", true),
            ("Sender", true),
        ],
    },
    Schema {
        type_name: "ConfirmOp",
        fields: &[("ID", true), ("OpID", true), ("Accepted", true)],
    },
    Schema {
        type_name: "CancelOp",
        fields: &[("ID", true), ("OpID", true)],
    },
    Schema {
        type_name: "RegisterService",
        fields: &[("ServID", true), ("HolonAddr", true)],
    },
    Schema {
        type_name: "LookupService",
        fields: &[("ServID", true), ("Sender", true)],
    },
    Schema {
        type_name: "RspLookup",
        fields: &[("ServID", true)],
    },
    Schema {
        type_name: "ExecOp",
        fields: &[
            ("ID", true),
            ("OpID", true),
            ("StartTime", true),
            ("ExecTime", true),
            ("Sender", true),
        ],
    },
    Schema {
        type_name: "OpProgress",
        fields: &[("ID", true), ("OpID", true), ("Percent", true)],
    },
    Schema {
        type_name: "OpDone",
        fields: &[("ID", true), ("OpID", true)],
    },
    Schema {
        type_name: "OpFault",
        fields: &[("ID", true), ("OpID", true), ("Reason", true)],
    },
    Schema {
        type_name: "CreateOrder",
        fields: &[
            ("Product", true),
            ("OrderID", false),
            ("Parent", false),
            ("Sender", false),
        ],
    },
    Schema {
        type_name: "OrderStatus",
        fields: &[("OrderID", true), ("Percent", true), ("State", false)],
    },
    Schema {
        type_name: "OrderAccepted",
        fields: &[("OrderID", true), ("Product", true), ("FromStock", true)],
    },
    Schema {
        type_name: "OrderRejected",
        fields: &[("Product", true), ("Reason", true), ("OrderID", false)],
    },
    Schema {
        type_name: "PlanReady",
        fields: &[("OrderID", true), ("End", true)],
    },
    Schema {
        type_name: "OrderFailed",
        fields: &[("OrderID", true), ("Reason", true)],
    },
    Schema {
        type_name: "DefineProduct",
        fields: &[],
    },
    Schema {
        type_name: "DefineService",
        fields: &[
            ("ServID", true),
            ("ExecTime", true),
            ("Steps", false),
            ("Components", false),
            ("Kind", false),
            ("Resident", false),
        ],
    },
];

pub fn schema_of(type_name: &str) -> Option<&'static Schema> {
    SCHEMAS.iter().find(|s| s.type_name == type_name)
}

/// Canonical text form of a message. Known types are checked against their
/// schema and their attributes are put in schema order.
pub fn encode(message: &Message) -> Result<String, ProtocolError> {
    if !super::is_valid_name(&message.type_name) {
        return Err(ProtocolError::SchemaViolation(format!(
            "invalid element name {:?}",
            message.type_name
        )));
    }
    match schema_of(&message.type_name) {
        None => Ok(message.to_xml()),
        Some(schema) => {
            for (name, required) in schema.fields {
                if *required && message.get(name).is_none() {
                    return Err(ProtocolError::SchemaViolation(format!(
                        "{} requires {}",
                        schema.type_name, name
                    )));
                }
            }
            let order: Vec<&str> = schema.fields.iter().map(|(n, _)| *n).collect();
            let mut canonical = message.clone();
            canonical.reorder(&order);
            Ok(canonical.to_xml())
        }
    }
}

/// Structural decode. Unknown types decode as generic messages; use
/// [`ProtocolMsg::from_message`] for strict validation.
pub fn decode(text: &str) -> Result<Message, ProtocolError> {
    Message::from_xml(text)
}

fn req<'a>(m: &'a Message, attr: &str) -> Result<&'a str, ProtocolError> {
    m.get(attr)
        .ok_or_else(|| ProtocolError::MissingAttribute(attr.to_string()))
}

fn text(m: &Message, attr: &str) -> Result<String, ProtocolError> {
    req(m, attr).map(str::to_string)
}

fn time(m: &Message, attr: &str) -> Result<EpochTime, ProtocolError> {
    req(m, attr)?.parse()
}

fn seconds(m: &Message, attr: &str) -> Result<u64, ProtocolError> {
    // Durations share the whole-seconds syntax of timestamps.
    let raw = req(m, attr)?;
    raw.parse::<EpochTime>()
        .map(|t| t.0)
        .map_err(|_| ProtocolError::BadValue {
            attr: attr.into(),
            value: raw.into(),
        })
}

fn channel(m: &Message, attr: &str) -> Result<ChannelId, ProtocolError> {
    let raw = req(m, attr)?;
    raw.parse().map_err(|_| ProtocolError::BadValue {
        attr: attr.into(),
        value: raw.into(),
    })
}

fn opt_channel(m: &Message, attr: &str) -> Result<Option<ChannelId>, ProtocolError> {
    match m.get(attr) {
        None => Ok(None),
        Some(_) => channel(m, attr).map(Some),
    }
}

fn boolean(m: &Message, attr: &str) -> Result<bool, ProtocolError> {
    match req(m, attr)? {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(ProtocolError::BadValue {
            attr: attr.into(),
            value: other.into(),
        }),
    }
}

fn percent(m: &Message, attr: &str) -> Result<u8, ProtocolError> {
    let raw = req(m, attr)?;
    match raw.parse::<u8>() {
        Ok(p) if p <= 100 && !raw.starts_with('+') => Ok(p),
        _ => Err(ProtocolError::BadValue {
            attr: attr.into(),
            value: raw.into(),
        }),
    }
}

/// Call for bids on one operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BidRequest {
    pub id: String,
    pub op_id: String,
    pub min_start: EpochTime,
    pub sender: ChannelId,
}

/// A resource holon's quote for a [`BidRequest`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BidResponse {
    pub id: String,
    pub op_id: String,
    pub start: EpochTime,
    pub exec_time: u64,
    pub sender: ChannelId,
}

impl BidResponse {
    pub fn finish(&self) -> EpochTime {
        self.start + self.exec_time
    }

    /// Checks this response is a legal answer to `request`.
    pub fn answers(&self, request: &BidRequest) -> Result<(), ProtocolError> {
        if self.id != request.id || self.op_id != request.op_id {
            return Err(ProtocolError::SchemaViolation(format!(
                "response {}/{} does not match request {}/{}",
                self.id, self.op_id, request.id, request.op_id
            )));
        }
        if self.start < request.min_start {
            return Err(ProtocolError::SchemaViolation(format!(
                "StartTime {} precedes MinStartTime {}",
                self.start, request.min_start
            )));
        }
        if self.exec_time == 0 {
            return Err(ProtocolError::SchemaViolation(
                "ExecTime must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AwardOp {
    pub id: String,
    pub op_id: String,
    pub start: EpochTime,
    pub sender: ChannelId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfirmOp {
    pub id: String,
    pub op_id: String,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CancelOp {
    pub id: String,
    pub op_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterService {
    pub serv_id: String,
    pub holon_addr: ChannelId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupService {
    pub serv_id: String,
    pub sender: ChannelId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RspLookup {
    pub serv_id: String,
    pub holons: Vec<ChannelId>,
}

/// Execution request for a committed slot (B1 → B2 → hardware interface).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOp {
    pub id: String,
    pub op_id: String,
    pub start: EpochTime,
    pub exec_time: u64,
    /// Order holon to report progress to.
    pub sender: ChannelId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpProgress {
    pub id: String,
    pub op_id: String,
    pub percent: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpDone {
    pub id: String,
    pub op_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpFault {
    pub id: String,
    pub op_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreateOrder {
    pub product: String,
    pub order_id: Option<String>,
    pub parent: Option<ChannelId>,
    pub sender: Option<ChannelId>,
    /// Processing document, attached when the manager forwards the order to
    /// the holon it spawned.
    pub spec: Option<ProductSpec>,
}

impl CreateOrder {
    pub fn new(product: &str) -> CreateOrder {
        CreateOrder {
            product: product.to_string(),
            order_id: None,
            parent: None,
            sender: None,
            spec: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderStatus {
    pub order_id: String,
    pub percent: u8,
    pub state: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderAccepted {
    pub order_id: String,
    pub product: String,
    pub from_stock: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderRejected {
    pub product: String,
    pub reason: String,
    pub order_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanReady {
    pub order_id: String,
    pub end: EpochTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderFailed {
    pub order_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefineService(pub ServiceDef);

/// Every message type the holons understand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMsg {
    GetBidForOp(BidRequest),
    RspBidForOp(BidResponse),
    AwardOp(AwardOp),
    ConfirmOp(ConfirmOp),
    CancelOp(CancelOp),
    RegisterService(RegisterService),
    LookupService(LookupService),
    RspLookup(RspLookup),
    ExecOp(ExecOp),
    OpProgress(OpProgress),
    OpDone(OpDone),
    OpFault(OpFault),
    CreateOrder(CreateOrder),
    OrderStatus(OrderStatus),
    OrderAccepted(OrderAccepted),
    OrderRejected(OrderRejected),
    PlanReady(PlanReady),
    OrderFailed(OrderFailed),
    DefineProduct(ProductSpec),
    DefineService(DefineService),
}

impl ProtocolMsg {
    pub fn type_name(&self) -> &'static str {
        match self {
            ProtocolMsg::GetBidForOp(_) => "GetBidForOp",
            ProtocolMsg::RspBidForOp(_) => "RspBidForOp",
            ProtocolMsg::AwardOp(_) => "AwardOp",
            ProtocolMsg::ConfirmOp(_) => "ConfirmOp",
            ProtocolMsg::CancelOp(_) => "CancelOp",
            ProtocolMsg::RegisterService(_) => "RegisterService",
            ProtocolMsg::LookupService(_) => "LookupService",
            ProtocolMsg::RspLookup(_) => "RspLookup",
            ProtocolMsg::ExecOp(_) => "ExecOp",
            ProtocolMsg::OpProgress(_) => "OpProgress",
            ProtocolMsg::OpDone(_) => "OpDone",
            ProtocolMsg::OpFault(_) => "OpFault",
            ProtocolMsg::CreateOrder(_) => "CreateOrder",
            ProtocolMsg::OrderStatus(_) => "OrderStatus",
            ProtocolMsg::OrderAccepted(_) => "OrderAccepted",
            ProtocolMsg::OrderRejected(_) => "OrderRejected",
            ProtocolMsg::PlanReady(_) => "PlanReady",
            ProtocolMsg::OrderFailed(_) => "OrderFailed",
            ProtocolMsg::DefineProduct(_) => "DefineProduct",
            ProtocolMsg::DefineService(_) => "DefineService",
        }
    }

    /// Builds the element in canonical attribute order.
    pub fn to_message(&self) -> Message {
        let m = Message::new(self.type_name());
        match self {
            ProtocolMsg::GetBidForOp(r) => m
                .with("ID", &r.id)
                .with("OpID", &r.op_id)
                .with("MinStartTime", r.min_start)
                .with("Sender", r.sender),
            ProtocolMsg::RspBidForOp(r) => m
                .with("ID", &r.id)
                .with("OpID", &r.op_id)
                .with("StartTime", r.start)
                .with("ExecTime", r.exec_time)
                .with("Sender", r.sender),
            ProtocolMsg::AwardOp(a) => m
                .with("ID", &a.id)
                .with("OpID", &a.op_id)
                .with("StartTime", a.start)
                .with("Sender", a.sender),
            ProtocolMsg::ConfirmOp(c) => m
                .with("ID", &c.id)
                .with("OpID", &c.op_id)
                .with("Accepted", c.accepted),
            ProtocolMsg::CancelOp(c) => m.with("ID", &c.id).with("OpID", &c.op_id),
            ProtocolMsg::RegisterService(r) => {
                m.with("ServID", &r.serv_id).with("HolonAddr", r.holon_addr)
            }
            ProtocolMsg::LookupService(l) => m.with("ServID", &l.serv_id).with("Sender", l.sender),
            ProtocolMsg::RspLookup(r) => {
                let mut m = m.with("ServID", &r.serv_id);
                for h in &r.holons {
                    m.children.push(Message::new("Holon").with("HolonAddr", h));
                }
                m
            }
            ProtocolMsg::ExecOp(e) => m
                .with("ID", &e.id)
                .with("OpID", &e.op_id)
                .with("StartTime", e.start)
                .with("ExecTime", e.exec_time)
                .with("Sender", e.sender),
            ProtocolMsg::OpProgress(p) => m
                .with("ID", &p.id)
                .with("OpID", &p.op_id)
                .with("Percent", p.percent),
            ProtocolMsg::OpDone(d) => m.with("ID", &d.id).with("OpID", &d.op_id),
            ProtocolMsg::OpFault(f) => m
                .with("ID", &f.id)
                .with("OpID", &f.op_id)
                .with("Reason", &f.reason),
            ProtocolMsg::CreateOrder(c) => {
                let mut m = m.with("Product", &c.product);
                if let Some(id) = &c.order_id {
                    m.set("OrderID", id);
                }
                if let Some(p) = c.parent {
                    m.set("Parent", p);
                }
                if let Some(s) = c.sender {
                    m.set("Sender", s);
                }
                if let Some(spec) = &c.spec {
                    m.children.push(spec.to_message());
                }
                m
            }
            ProtocolMsg::OrderStatus(s) => {
                let mut m = m.with("OrderID", &s.order_id).with("Percent", s.percent);
                if let Some(state) = &s.state {
                    m.set("State", state);
                }
                m
            }
            ProtocolMsg::OrderAccepted(a) => m
                .with("OrderID", &a.order_id)
                .with("Product", &a.product)
                .with("FromStock", a.from_stock),
            ProtocolMsg::OrderRejected(r) => {
                let mut m = m.with("Product", &r.product).with("Reason", &r.reason);
                if let Some(id) = &r.order_id {
                    m.set("OrderID", id);
                }
                m
            }
            ProtocolMsg::PlanReady(p) => m.with("OrderID", &p.order_id).with("End", p.end),
            ProtocolMsg::OrderFailed(f) => m.with("OrderID", &f.order_id).with("Reason", &f.reason),
            ProtocolMsg::DefineProduct(spec) => m.with_child(spec.to_message()),
            ProtocolMsg::DefineService(DefineService(def)) => {
                let mut body = def.to_message();
                body.type_name = "DefineService".into();
                body
            }
        }
    }

    /// Strict validation of a decoded element against its schema.
    pub fn from_message(m: &Message) -> Result<ProtocolMsg, ProtocolError> {
        let msg = match m.type_name.as_str() {
            "GetBidForOp" => ProtocolMsg::GetBidForOp(BidRequest {
                id: text(m, "ID")?,
                op_id: text(m, "OpID")?,
                min_start: time(m, "MinStartTime")?,
                sender: channel(m, "Sender")?,
            }),
            "RspBidForOp" => {
                let r = BidResponse {
                    id: text(m, "ID")?,
                    op_id: text(m, "OpID")?,
                    start: time(m, "StartTime")?,
                    exec_time: seconds(m, "ExecTime")?,
                    sender: channel(m, "Sender")?,
                };
                if r.exec_time == 0 {
                    return Err(ProtocolError::SchemaViolation(
                        "ExecTime must be positive".into(),
                    ));
                }
                ProtocolMsg::RspBidForOp(r)
            }
            "AwardOp" => ProtocolMsg::AwardOp(AwardOp {
                id: text(m, "ID")?,
                op_id: text(m, "OpID")?,
                start: time(m, "StartTime")?,
                sender: channel(m, "Sender")?,
            }),
            "ConfirmOp" => ProtocolMsg::ConfirmOp(ConfirmOp {
                id: text(m, "ID")?,
                op_id: text(m, "OpID")?,
                accepted: boolean(m, "Accepted")?,
            }),
            "CancelOp" => ProtocolMsg::CancelOp(CancelOp {
                id: text(m, "ID")?,
                op_id: text(m, "OpID")?,
            }),
            "RegisterService" => ProtocolMsg::RegisterService(RegisterService {
                serv_id: text(m, "ServID")?,
                holon_addr: channel(m, "HolonAddr")?,
            }),
            "LookupService" => ProtocolMsg::LookupService(LookupService {
                serv_id: text(m, "ServID")?,
                sender: channel(m, "Sender")?,
            }),
            "RspLookup" => ProtocolMsg::RspLookup(RspLookup {
                serv_id: text(m, "ServID")?,
                holons: m
                    .children
                    .iter()
                    .map(|c| channel(c, "HolonAddr"))
                    .collect::<Result<_, _>>()?,
            }),
            "ExecOp" => ProtocolMsg::ExecOp(ExecOp {
                id: text(m, "ID")?,
                op_id: text(m, "OpID")?,
                start: time(m, "StartTime")?,
                exec_time: seconds(m, "ExecTime")?,
                sender: channel(m, "Sender")?,
            }),
            "OpProgress" => ProtocolMsg::OpProgress(OpProgress {
                id: text(m, "ID")?,
                op_id: text(m, "OpID")?,
                percent: percent(m, "Percent")?,
            }),
            "OpDone" => ProtocolMsg::OpDone(OpDone {
                id: text(m, "ID")?,
                op_id: text(m, "OpID")?,
            }),
            "OpFault" => ProtocolMsg::OpFault(OpFault {
                id: text(m, "ID")?,
                op_id: text(m, "OpID")?,
                reason: text(m, "Reason")?,
            }),
            "CreateOrder" => ProtocolMsg::CreateOrder(CreateOrder {
                product: text(m, "Product")?,
                order_id: m.get("OrderID").map(str::to_string),
                parent: opt_channel(m, "Parent")?,
                sender: opt_channel(m, "Sender")?,
                spec: match m.children.first() {
                    Some(child) => Some(ProductSpec::from_message(child)?),
                    None => None,
                },
            }),
            "OrderStatus" => ProtocolMsg::OrderStatus(OrderStatus {
                order_id: text(m, "OrderID")?,
                percent: percent(m, "Percent")?,
                state: m.get("State").map(str::to_string),
            }),
            "OrderAccepted" => ProtocolMsg::OrderAccepted(OrderAccepted {
                order_id: text(m, "OrderID")?,
                product: text(m, "Product")?,
                from_stock: boolean(m, "FromStock")?,
            }),
            "OrderRejected" => ProtocolMsg::OrderRejected(OrderRejected {
                product: text(m, "Product")?,
                reason: text(m, "Reason")?,
                order_id: m.get("OrderID").map(str::to_string),
            }),
            "PlanReady" => ProtocolMsg::PlanReady(PlanReady {
                order_id: text(m, "OrderID")?,
                end: time(m, "End")?,
            }),
            "OrderFailed" => ProtocolMsg::OrderFailed(OrderFailed {
                order_id: text(m, "OrderID")?,
                reason: text(m, "Reason")?,
            }),
            "DefineProduct" => {
                let child = m.children.first().ok_or_else(|| {
                    ProtocolError::SchemaViolation("DefineProduct needs a <Product>".into())
                })?;
                ProtocolMsg::DefineProduct(ProductSpec::from_message(child)?)
            }
            "DefineService" => {
                let mut body = m.clone();
                body.type_name = "Service".into();
                ProtocolMsg::DefineService(DefineService(ServiceDef::from_message(&body)?))
            }
            other => return Err(ProtocolError::UnexpectedType(other.to_string())),
        };
        Ok(msg)
    }

    pub fn decode(text: &str) -> Result<ProtocolMsg, ProtocolError> {
        ProtocolMsg::from_message(&decode(text)?)
    }

    pub fn encode(&self) -> String {
        self.to_message().to_xml()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ch(s: &str) -> ChannelId {
        s.parse().unwrap()
    }

    #[test]
    fn bid_request_canonical_text() {
        let req = ProtocolMsg::GetBidForOp(BidRequest {
            id: "15".into(),
            op_id: "Op_30".into(),
            min_start: EpochTime(1308574904),
            sender: ch("225.0.0.1:2101"),
        });
        assert_eq!(
            req.encode(),
            r#"<GetBidForOp ID="15" OpID="Op_30" MinStartTime="1308574904" Sender="225.0.0.1:2101" />"#
        );
    }

    #[test]
    fn encode_reorders_known_types() {
        let m = Message::new("OpDone")
            .with("OpID", "S_20")
            .with("ID", "O1:1");
        assert_eq!(encode(&m).unwrap(), r#"<OpDone ID="O1:1" OpID="S_20" />"#);
    }

    #[test]
    fn encode_rejects_missing_required() {
        let m = Message::new("RspBidForOp").with("ID", "15");
        assert!(matches!(encode(&m), Err(ProtocolError::SchemaViolation(_))));
    }

    #[test]
    fn unknown_type_decodes_generic() {
        let m = decode(r#"<Hello Who="cell" />"#).unwrap();
        assert_eq!(m.type_name, "Hello");
        assert!(matches!(
            ProtocolMsg::from_message(&m),
            Err(ProtocolError::UnexpectedType(_))
        ));
        assert_eq!(encode(&m).unwrap(), r#"<Hello Who="cell" />"#);
    }

    #[test]
    fn validate_reports_missing_attribute() {
        let m = decode(r#"<RspBidForOp ID="15" />"#).unwrap();
        assert_eq!(
            ProtocolMsg::from_message(&m),
            Err(ProtocolError::MissingAttribute("OpID".into()))
        );
    }

    #[test]
    fn validate_reports_bad_time() {
        let m = decode(r#"<GetBidForOp ID="1" OpID="S" MinStartTime="soon" Sender="1.2.3.4:5" />"#)
            .unwrap();
        assert_eq!(
            ProtocolMsg::from_message(&m),
            Err(ProtocolError::BadTime("soon".into()))
        );
    }

    #[test]
    fn response_must_not_precede_request() {
        let req = BidRequest {
            id: "15".into(),
            op_id: "Op_30".into(),
            min_start: EpochTime(1308574904),
            sender: ch("225.0.0.1:2101"),
        };
        let mut rsp = BidResponse {
            id: "15".into(),
            op_id: "Op_30".into(),
            start: EpochTime(1308574950),
            exec_time: 50,
            sender: ch("225.0.0.1:3001"),
        };
        assert!(rsp.answers(&req).is_ok());
        rsp.start = EpochTime(1308574903);
        assert!(rsp.answers(&req).is_err());
    }

    #[test]
    fn create_order_carries_spec() {
        let msg = ProtocolMsg::CreateOrder(CreateOrder {
            product: "P_10".into(),
            order_id: Some("O1".into()),
            parent: None,
            sender: Some(ch("225.0.0.1:2001")),
            spec: Some(ProductSpec::composite("P_10", "S_10", &["P_20", "P_21"])),
        });
        assert_eq!(ProtocolMsg::decode(&msg.encode()).unwrap(), msg);
    }

    #[test]
    fn define_service_round_trip() {
        let msg = ProtocolMsg::DefineService(DefineService(ServiceDef::placement("S_22", 40, 2)));
        let text = msg.encode();
        assert!(text.starts_with("<DefineService ServID=\"S_22\" ExecTime=\"40\""));
        assert_eq!(ProtocolMsg::decode(&text).unwrap(), msg);
    }
}
