//! Product processing documents and service definition files.

use serde::{Deserialize, Serialize};

use super::{Message, ProtocolError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProductKind {
    Simple,
    Composite,
}

impl ProductKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProductKind::Simple => "Simple",
            ProductKind::Composite => "Composite",
        }
    }
}

/// One `<Service>` entry of a product document. `components` is empty for
/// simple products; for composite ones it lists `Cmp1..CmpN` in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceStep {
    pub index: u32,
    pub serv_id: String,
    pub components: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductSpec {
    pub name: String,
    pub kind: ProductKind,
    pub services: Vec<ServiceStep>,
}

impl ProductSpec {
    pub fn simple(name: &str, services: &[&str]) -> ProductSpec {
        ProductSpec {
            name: name.to_string(),
            kind: ProductKind::Simple,
            services: services
                .iter()
                .enumerate()
                .map(|(i, s)| ServiceStep {
                    index: i as u32 + 1,
                    serv_id: s.to_string(),
                    components: Vec::new(),
                })
                .collect(),
        }
    }

    pub fn composite(name: &str, serv_id: &str, components: &[&str]) -> ProductSpec {
        ProductSpec {
            name: name.to_string(),
            kind: ProductKind::Composite,
            services: vec![ServiceStep {
                index: 1,
                serv_id: serv_id.to_string(),
                components: components.iter().map(|c| c.to_string()).collect(),
            }],
        }
    }

    /// All components in service order, then `Cmp` order.
    pub fn components(&self) -> impl Iterator<Item = &str> {
        self.services
            .iter()
            .flat_map(|s| s.components.iter().map(String::as_str))
    }

    pub fn to_message(&self) -> Message {
        let mut product = Message::new("Product")
            .with("Name", &self.name)
            .with("Type", self.kind.as_str());
        for step in &self.services {
            let mut svc = Message::new("Service")
                .with("Index", step.index)
                .with("ServID", &step.serv_id);
            if !step.components.is_empty() {
                svc.set("NrCmp", step.components.len());
                for (i, c) in step.components.iter().enumerate() {
                    svc.set(format!("Cmp{}", i + 1), c);
                }
            }
            product.children.push(svc);
        }
        product
    }

    pub fn from_message(msg: &Message) -> Result<ProductSpec, ProtocolError> {
        if msg.type_name != "Product" {
            return Err(ProtocolError::UnexpectedType(msg.type_name.clone()));
        }
        let name = required(msg, "Name")?.to_string();
        let kind = match required(msg, "Type")? {
            "Simple" => ProductKind::Simple,
            "Composite" => ProductKind::Composite,
            other => {
                return Err(ProtocolError::BadValue {
                    attr: "Type".into(),
                    value: other.into(),
                })
            }
        };
        if msg.children.is_empty() {
            return Err(violation(format!("product {name} lists no services")));
        }
        let mut services = Vec::with_capacity(msg.children.len());
        for child in &msg.children {
            if child.type_name != "Service" {
                return Err(violation(format!(
                    "unexpected <{}> in product",
                    child.type_name
                )));
            }
            let index = parse_u32(child, "Index")?;
            let serv_id = required(child, "ServID")?.to_string();
            let components = match (kind, child.get("NrCmp")) {
                (ProductKind::Simple, None) => {
                    if child.attributes().any(|(n, _)| n.starts_with("Cmp")) {
                        return Err(violation(format!(
                            "simple product {name} declares components"
                        )));
                    }
                    Vec::new()
                }
                (ProductKind::Simple, Some(_)) => {
                    return Err(violation(format!("simple product {name} declares NrCmp")))
                }
                (ProductKind::Composite, None) => {
                    return Err(violation(format!(
                        "composite entry {index} of {name} lacks NrCmp"
                    )))
                }
                (ProductKind::Composite, Some(_)) => {
                    let count = parse_u32(child, "NrCmp")? as usize;
                    if count == 0 {
                        return Err(violation(format!("NrCmp of {name} must be positive")));
                    }
                    let mut cmps = Vec::with_capacity(count);
                    for i in 1..=count {
                        let key = format!("Cmp{i}");
                        let c = child
                            .get(&key)
                            .ok_or_else(|| violation(format!("NrCmp={count} but {key} missing")))?;
                        cmps.push(c.to_string());
                    }
                    let declared = child.attributes().filter(|(n, _)| is_cmp_attr(n)).count();
                    if declared != count {
                        return Err(violation(format!(
                            "NrCmp={count} but {declared} Cmp attributes present"
                        )));
                    }
                    cmps
                }
            };
            services.push(ServiceStep {
                index,
                serv_id,
                components,
            });
        }
        for (expected, step) in (1u32..).zip(&services) {
            if step.index != expected {
                return Err(violation(format!(
                    "service Index values must be 1..n in order, found {} at position {}",
                    step.index, expected
                )));
            }
        }
        Ok(ProductSpec {
            name,
            kind,
            services,
        })
    }
}

fn is_cmp_attr(name: &str) -> bool {
    name.strip_prefix("Cmp")
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

/// Parses a product processing document.
pub fn parse_product(text: &str) -> Result<ProductSpec, ProtocolError> {
    ProductSpec::from_message(&Message::from_xml(text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ServiceKind {
    /// Components picked from the magazine and placed on a semifinished board.
    Placement,
    /// Two intermediate boards joined into a finished product.
    Join,
}

/// A service the assembly cell can perform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDef {
    pub serv_id: String,
    /// Execution time with the configuration already in robot memory.
    pub base_exec: u64,
    /// Pick-and-place step count; each step takes `base_exec / steps`.
    pub steps: u32,
    /// Magazine components consumed per execution.
    pub components: u32,
    pub kind: ServiceKind,
    /// Needs a slot in robot memory (and a load when not resident).
    pub resident_required: bool,
}

impl ServiceDef {
    pub fn placement(serv_id: &str, base_exec: u64, components: u32) -> ServiceDef {
        ServiceDef {
            serv_id: serv_id.to_string(),
            base_exec,
            steps: 3,
            components,
            kind: ServiceKind::Placement,
            resident_required: true,
        }
    }

    pub fn join(serv_id: &str, base_exec: u64) -> ServiceDef {
        ServiceDef {
            serv_id: serv_id.to_string(),
            base_exec,
            steps: 2,
            components: 0,
            kind: ServiceKind::Join,
            resident_required: true,
        }
    }

    pub fn to_message(&self) -> Message {
        Message::new("Service")
            .with("ServID", &self.serv_id)
            .with("ExecTime", self.base_exec)
            .with("Steps", self.steps)
            .with("Components", self.components)
            .with(
                "Kind",
                match self.kind {
                    ServiceKind::Placement => "Placement",
                    ServiceKind::Join => "Join",
                },
            )
            .with("Resident", self.resident_required)
    }

    pub fn from_message(msg: &Message) -> Result<ServiceDef, ProtocolError> {
        let serv_id = required(msg, "ServID")?.to_string();
        let base_exec = parse_u32(msg, "ExecTime")? as u64;
        if base_exec == 0 {
            return Err(violation(format!("{serv_id}: ExecTime must be positive")));
        }
        let kind = match msg.get("Kind").unwrap_or("Placement") {
            "Placement" => ServiceKind::Placement,
            "Join" => ServiceKind::Join,
            other => {
                return Err(ProtocolError::BadValue {
                    attr: "Kind".into(),
                    value: other.into(),
                })
            }
        };
        let steps = match msg.get("Steps") {
            Some(_) => parse_u32(msg, "Steps")?,
            None => 3,
        };
        if steps == 0 {
            return Err(violation(format!("{serv_id}: Steps must be positive")));
        }
        let components = match msg.get("Components") {
            Some(_) => parse_u32(msg, "Components")?,
            None => 0,
        };
        let resident_required = match msg.get("Resident").unwrap_or("true") {
            "true" => true,
            "false" => false,
            other => {
                return Err(ProtocolError::BadValue {
                    attr: "Resident".into(),
                    value: other.into(),
                })
            }
        };
        Ok(ServiceDef {
            serv_id,
            base_exec,
            steps,
            components,
            kind,
            resident_required,
        })
    }
}

/// Parses a `<Services>` document listing service definitions.
pub fn parse_services(text: &str) -> Result<Vec<ServiceDef>, ProtocolError> {
    let root = Message::from_xml(text)?;
    if root.type_name != "Services" {
        return Err(ProtocolError::UnexpectedType(root.type_name));
    }
    root.children.iter().map(ServiceDef::from_message).collect()
}

fn required<'a>(msg: &'a Message, attr: &str) -> Result<&'a str, ProtocolError> {
    msg.get(attr)
        .ok_or_else(|| ProtocolError::MissingAttribute(attr.to_string()))
}

fn parse_u32(msg: &Message, attr: &str) -> Result<u32, ProtocolError> {
    let raw = required(msg, attr)?;
    if raw.is_empty() || !raw.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ProtocolError::BadValue {
            attr: attr.into(),
            value: raw.into(),
        });
    }
    raw.parse().map_err(|_| ProtocolError::BadValue {
        attr: attr.into(),
        value: raw.into(),
    })
}

fn violation(msg: String) -> ProtocolError {
    ProtocolError::SchemaViolation(msg)
}
