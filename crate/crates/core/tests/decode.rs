use holocell::protocol::{Message, ProtocolMsg};
use proptest::prelude::*;

const FRAGMENTS: &[&str] = &[
    "<",
    ">",
    "/>",
    "</",
    " ",
    "=",
    "\"",
    "'",
    "&amp;",
    "&#x3c;",
    "&bogus;",
    "<!--",
    "-->",
    "<?xml version=\"1.0\"?>",
    "GetBidForOp",
    "RspBidForOp",
    "AwardOp",
    "CreateOrder",
    "Product",
    "Service",
    "ID",
    "OpID",
    "MinStartTime",
    "StartTime",
    "ExecTime",
    "Sender",
    "225.0.0.1:2101",
    "1308574904",
    "-1",
    "99999999999999999999",
    "Op_30",
    "\u{0}",
    "é",
];

fn xmlish() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(FRAGMENTS), 0..40).prop_map(|v| v.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5000))]

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let text = String::from_utf8_lossy(&bytes);
        let _ = ProtocolMsg::decode(&text);
        let _ = Message::from_xml(&text);
    }

    #[test]
    fn xml_shaped_input_never_panics(text in xmlish()) {
        let _ = ProtocolMsg::decode(&text);
    }

    #[test]
    fn accepted_input_reencodes_stably(text in xmlish()) {
        if let Ok(m) = ProtocolMsg::decode(&text) {
            let once = m.encode();
            prop_assert_eq!(ProtocolMsg::decode(&once).unwrap().encode(), once);
        }
    }
}

#[test]
fn rejects_unknown_root_and_missing_attributes() {
    assert!(ProtocolMsg::decode("<Nope />").is_err());
    assert!(ProtocolMsg::decode(r#"<GetBidForOp ID="15" OpID="Op_30" />"#).is_err());
    assert!(ProtocolMsg::decode(
        r#"<GetBidForOp ID="15" OpID="Op_30" MinStartTime="x" Sender="225.0.0.1:2101" />"#
    )
    .is_err());
    assert!(ProtocolMsg::decode("").is_err());
}
