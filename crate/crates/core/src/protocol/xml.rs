//! Generic XML element model used by every protocol message.
//!
//! A message is a single XML element: the element name is the message type,
//! attributes carry the fields and child elements carry nested records. Text
//! content is not part of the model and is ignored on decode (whitespace
//! between children is common in hand-written documents).

use std::fmt::Write as _;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::ProtocolError;

/// One XML element.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Message {
    pub type_name: String,
    attributes: Vec<(String, String)>,
    pub children: Vec<Message>,
}

impl Message {
    pub fn new(type_name: impl Into<String>) -> Self {
        Self {
            type_name: type_name.into(),
            attributes: Vec::new(),
            children: Vec::new(),
        }
    }

    /// Builder form of [`Message::set`].
    pub fn with(mut self, name: impl Into<String>, value: impl ToString) -> Self {
        self.set(name, value);
        self
    }

    pub fn with_child(mut self, child: Message) -> Self {
        self.children.push(child);
        self
    }

    /// Sets an attribute, replacing an existing value in place so that
    /// attribute order is stable.
    pub fn set(&mut self, name: impl Into<String>, value: impl ToString) {
        let name = name.into();
        let value = value.to_string();
        match self.attributes.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = value,
            None => self.attributes.push((name, value)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn remove(&mut self, name: &str) -> Option<String> {
        let idx = self.attributes.iter().position(|(n, _)| n == name)?;
        Some(self.attributes.remove(idx).1)
    }

    pub fn attributes(&self) -> impl Iterator<Item = (&str, &str)> {
        self.attributes
            .iter()
            .map(|(n, v)| (n.as_str(), v.as_str()))
    }

    pub fn attribute_count(&self) -> usize {
        self.attributes.len()
    }

    /// Reorders attributes: names listed in `order` first (in that order),
    /// everything else afterwards in its current relative order.
    pub(crate) fn reorder(&mut self, order: &[&str]) {
        let mut rest = std::mem::take(&mut self.attributes);
        let mut sorted = Vec::with_capacity(rest.len());
        for name in order {
            if let Some(idx) = rest.iter().position(|(n, _)| n == name) {
                sorted.push(rest.remove(idx));
            }
        }
        sorted.extend(rest);
        self.attributes = sorted;
    }

    /// Writes the element in the canonical text form: attributes in stored
    /// order, double-quoted, and `<Name ... />` when there are no children.
    pub fn to_xml(&self) -> String {
        let mut out = String::new();
        self.write_into(&mut out);
        out
    }

    fn write_into(&self, out: &mut String) {
        out.push('<');
        out.push_str(&self.type_name);
        for (name, value) in &self.attributes {
            let _ = write!(out, " {}=\"{}\"", name, escape(value));
        }
        if self.children.is_empty() {
            out.push_str(" />");
        } else {
            out.push('>');
            for child in &self.children {
                child.write_into(out);
            }
            let _ = write!(out, "</{}>", self.type_name);
        }
    }

    /// Parses one element (the document root). Anything after the root
    /// element other than whitespace or comments is rejected.
    pub fn from_xml(text: &str) -> Result<Message, ProtocolError> {
        let mut reader = Reader::from_str(text);
        let mut stack: Vec<Message> = Vec::new();
        let mut root: Option<Message> = None;
        loop {
            let event = reader
                .read_event()
                .map_err(|e| ProtocolError::MalformedXml(e.to_string()))?;
            match event {
                Event::Start(start) => {
                    if root.is_some() {
                        return Err(malformed("content after root element"));
                    }
                    stack.push(element_from(&start)?);
                }
                Event::Empty(start) => {
                    if root.is_some() {
                        return Err(malformed("content after root element"));
                    }
                    let elem = element_from(&start)?;
                    match stack.last_mut() {
                        Some(parent) => parent.children.push(elem),
                        None => root = Some(elem),
                    }
                }
                Event::End(end) => {
                    let elem = stack.pop().ok_or_else(|| malformed("unbalanced end tag"))?;
                    if end.name().as_ref() != elem.type_name.as_bytes() {
                        return Err(malformed("mismatched end tag"));
                    }
                    match stack.last_mut() {
                        Some(parent) => parent.children.push(elem),
                        None => root = Some(elem),
                    }
                }
                Event::Text(t) => {
                    let raw = t.into_inner();
                    // Element text is not part of the message model.
                    if !raw.iter().all(u8::is_ascii_whitespace) && stack.is_empty() {
                        return Err(malformed("text outside root element"));
                    }
                }
                Event::CData(_) => {
                    if stack.is_empty() {
                        return Err(malformed("CDATA outside root element"));
                    }
                }
                Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
                Event::Eof => break,
            }
        }
        if !stack.is_empty() {
            return Err(malformed("unclosed element"));
        }
        root.ok_or_else(|| malformed("no root element"))
    }
}

fn malformed(reason: &str) -> ProtocolError {
    ProtocolError::MalformedXml(reason.to_string())
}

fn element_from(start: &BytesStart<'_>) -> Result<Message, ProtocolError> {
    let name = std::str::from_utf8(start.name().as_ref())
        .map_err(|_| malformed("element name is not UTF-8"))?
        .to_string();
    if !is_valid_name(&name) {
        return Err(malformed("invalid element name"));
    }
    let mut msg = Message::new(name);
    for attr in start.attributes() {
        let attr = attr.map_err(|e| ProtocolError::MalformedXml(e.to_string()))?;
        let key = std::str::from_utf8(attr.key.as_ref())
            .map_err(|_| malformed("attribute name is not UTF-8"))?
            .to_string();
        if !is_valid_name(&key) {
            return Err(malformed("invalid attribute name"));
        }
        let value = attr
            .unescape_value()
            .map_err(|e| ProtocolError::MalformedXml(e.to_string()))?
            .into_owned();
        if msg.get(&key).is_some() {
            return Err(malformed("duplicate attribute"));
        }
        msg.attributes.push((key, value));
    }
    Ok(msg)
}

/// XML `Name` restricted to the ASCII subset plus any non-ASCII letters;
/// colons are excluded since namespaces are not supported.
pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c == '_' || c.is_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_element_is_self_closing() {
        assert_eq!(Message::new("Ping").to_xml(), "<Ping />");
    }

    #[test]
    fn nested_children_round_trip() {
        let m = Message::new("RspLookup")
            .with("ServID", "S_20")
            .with_child(Message::new("Holon").with("HolonAddr", "225.0.0.1:3002"));
        let text = m.to_xml();
        assert_eq!(
            text,
            r#"<RspLookup ServID="S_20"><Holon HolonAddr="225.0.0.1:3002" /></RspLookup>"#
        );
        assert_eq!(Message::from_xml(&text).unwrap(), m);
    }

    #[test]
    fn escaping_survives_round_trip() {
        let m = Message::new("Note").with("Text", "a<b & \"c\"\n\tz");
        assert_eq!(Message::from_xml(&m.to_xml()).unwrap(), m);
    }

    #[test]
    fn whitespace_and_declaration_tolerated() {
        let text = "<?xml version=\"1.0\"?>\n<Product Name=\"P_20\" Type=\"Simple\">\n  <Service Index=\"1\" ServID=\"S_20\"/>\n</Product>\n";
        let m = Message::from_xml(text).unwrap();
        assert_eq!(m.type_name, "Product");
        assert_eq!(m.children.len(), 1);
    }

    #[test]
    fn rejects_garbage() {
        for bad in [
            "not xml",
            "",
            "<a>",
            "<a></b>",
            "<a/><b/>",
            "<a x=\"1\" x=\"2\"/>",
            "</a>",
        ] {
            assert!(
                matches!(Message::from_xml(bad), Err(ProtocolError::MalformedXml(_))),
                "{bad:?} should be malformed"
            );
        }
    }

    #[test]
    fn set_keeps_position() {
        let mut m = Message::new("X").with("a", 1).with("b", 2);
        m.set("a", 3);
        let names: Vec<_> = m.attributes().map(|(n, _)| n).collect();
        assert_eq!(names, ["a", "b"]);
        assert_eq!(m.get("a"), Some("3"));
    }
}
