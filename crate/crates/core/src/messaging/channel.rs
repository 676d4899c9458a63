use std::fmt;
use std::net::{Ipv4Addr, SocketAddrV4};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A publish/subscribe channel address, rendered `A.B.C.D:port`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelId {
    address: [u8; 4],
    port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed channel id {0:?}")]
pub struct ChannelParseError(pub String);

impl ChannelId {
    /// Port 0 is not a valid channel.
    pub fn new(address: [u8; 4], port: u16) -> Option<ChannelId> {
        (port != 0).then_some(ChannelId { address, port })
    }

    pub fn address(&self) -> [u8; 4] {
        self.address
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    /// Same address, port shifted by `offset`.
    pub fn offset(&self, offset: u16) -> Option<ChannelId> {
        ChannelId::new(self.address, self.port.checked_add(offset)?)
    }

    pub fn socket_addr(&self) -> SocketAddrV4 {
        SocketAddrV4::new(Ipv4Addr::from(self.address), self.port)
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.address;
        write!(f, "{a}.{b}.{c}.{d}:{}", self.port)
    }
}

// Strict decimal component: no sign, no leading zeros (so rendering is exact).
fn strict_number(s: &str, max: u32) -> Option<u32> {
    if s.is_empty() || s.len() > 5 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if s.len() > 1 && s.starts_with('0') {
        return None;
    }
    let v: u32 = s.parse().ok()?;
    (v <= max).then_some(v)
}

impl FromStr for ChannelId {
    type Err = ChannelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ChannelParseError(s.to_string());
        let (host, port) = s.split_once(':').ok_or_else(err)?;
        let mut address = [0u8; 4];
        let mut parts = host.split('.');
        for slot in &mut address {
            *slot = strict_number(parts.next().ok_or_else(err)?, 255).ok_or_else(err)? as u8;
        }
        if parts.next().is_some() {
            return Err(err());
        }
        let port = strict_number(port, 65535).ok_or_else(err)? as u16;
        ChannelId::new(address, port).ok_or_else(err)
    }
}

impl Serialize for ChannelId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChannelId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
