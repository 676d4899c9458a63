//! Publish/subscribe transport.
//!
//! `InProc` channels deliver every publish to every subscriber queue
//! immediately, lossless and FIFO. `Udp` channels bind one socket per
//! channel; a background thread moves received datagrams into the
//! subscriber queues. UDP is best effort: nothing is retransmitted.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, VecDeque};
use std::net::{Ipv4Addr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, Weak};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChannelId, MessagingError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    #[default]
    InProc,
    Udp,
}

impl std::str::FromStr for Transport {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inproc" => Ok(Transport::InProc),
            "udp" => Ok(Transport::Udp),
            other => Err(format!("unknown transport {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub channel: ChannelId,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn new(channel: ChannelId, payload: Vec<u8>) -> Result<Envelope, MessagingError> {
        if payload.is_empty() {
            return Err(MessagingError::EmptyPayload);
        }
        Ok(Envelope { channel, payload })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubscriberId(u64);

struct UdpLink {
    socket: Arc<UdpSocket>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Drop for UdpLink {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

struct ChannelState {
    transport: Transport,
    subscribers: BTreeMap<SubscriberId, VecDeque<Envelope>>,
    udp: Option<UdpLink>,
}

#[derive(Default)]
struct BusInner {
    channels: BTreeMap<ChannelId, ChannelState>,
    next_subscriber: u64,
    published: BTreeMap<ChannelId, u64>,
    delivered: BTreeMap<ChannelId, u64>,
}

#[derive(Default)]
struct Shared {
    inner: Mutex<BusInner>,
    traffic: Condvar,
}

/// The set of open channels. Cloning shares the same bus.
#[derive(Clone, Default)]
pub struct Bus {
    shared: Arc<Shared>,
}

impl std::fmt::Debug for Bus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.shared.inner.lock().unwrap();
        f.debug_struct("Bus")
            .field("channels", &inner.channels.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Bus {
    pub fn new() -> Bus {
        Bus::default()
    }

    /// Opens `channel`, or returns a handle to it when it is already open.
    pub fn open_channel(
        &self,
        channel: ChannelId,
        transport: Transport,
    ) -> Result<ChannelHandle, MessagingError> {
        let mut inner = self.shared.inner.lock().unwrap();
        if let Entry::Vacant(slot) = inner.channels.entry(channel) {
            let udp = match transport {
                Transport::InProc => None,
                Transport::Udp => Some(self.bind_udp(channel)?),
            };
            slot.insert(ChannelState {
                transport,
                subscribers: BTreeMap::new(),
                udp,
            });
        }
        Ok(ChannelHandle {
            bus: self.clone(),
            channel,
        })
    }

    fn bind_udp(&self, channel: ChannelId) -> Result<UdpLink, MessagingError> {
        let unavailable =
            |e: std::io::Error| MessagingError::TransportUnavailable(format!("{channel}: {e}"));
        let addr = Ipv4Addr::from(channel.address());
        let socket = if addr.is_multicast() {
            let s =
                UdpSocket::bind((Ipv4Addr::UNSPECIFIED, channel.port())).map_err(unavailable)?;
            s.join_multicast_v4(&addr, &Ipv4Addr::UNSPECIFIED)
                .map_err(unavailable)?;
            s.set_multicast_loop_v4(true).map_err(unavailable)?;
            s
        } else {
            UdpSocket::bind(channel.socket_addr()).map_err(unavailable)?
        };
        socket
            .set_read_timeout(Some(Duration::from_millis(20)))
            .map_err(unavailable)?;
        let socket = Arc::new(socket);
        let stop = Arc::new(AtomicBool::new(false));
        let weak: Weak<Shared> = Arc::downgrade(&self.shared);
        let thread = {
            let socket = socket.clone();
            let stop = stop.clone();
            std::thread::spawn(move || udp_receive_loop(channel, socket, stop, weak))
        };
        Ok(UdpLink {
            socket,
            stop,
            thread: Some(thread),
        })
    }

    pub fn is_open(&self, channel: ChannelId) -> bool {
        self.shared
            .inner
            .lock()
            .unwrap()
            .channels
            .contains_key(&channel)
    }

    pub fn open_channels(&self) -> Vec<ChannelId> {
        self.shared
            .inner
            .lock()
            .unwrap()
            .channels
            .keys()
            .copied()
            .collect()
    }

    pub fn subscriber_count(&self, channel: ChannelId) -> usize {
        self.shared
            .inner
            .lock()
            .unwrap()
            .channels
            .get(&channel)
            .map_or(0, |c| c.subscribers.len())
    }

    /// Closes a channel; pending envelopes are discarded.
    pub fn close(&self, channel: ChannelId) {
        let removed = self.shared.inner.lock().unwrap().channels.remove(&channel);
        drop(removed);
    }

    pub fn publish(&self, channel: ChannelId, payload: &[u8]) -> Result<(), MessagingError> {
        if payload.is_empty() {
            return Err(MessagingError::EmptyPayload);
        }
        let mut inner = self.shared.inner.lock().unwrap();
        let state = inner
            .channels
            .get_mut(&channel)
            .ok_or(MessagingError::ChannelClosed(channel))?;
        match &state.udp {
            None => {
                let n = state.subscribers.len() as u64;
                for queue in state.subscribers.values_mut() {
                    queue.push_back(Envelope {
                        channel,
                        payload: payload.to_vec(),
                    });
                }
                *inner.published.entry(channel).or_default() += 1;
                *inner.delivered.entry(channel).or_default() += n;
                self.shared.traffic.notify_all();
            }
            Some(link) => {
                let socket = link.socket.clone();
                *inner.published.entry(channel).or_default() += 1;
                drop(inner);
                // Best effort: a failed send is a lost datagram.
                let _ = socket.send_to(payload, channel.socket_addr());
            }
        }
        Ok(())
    }

    pub fn subscribe(&self, channel: ChannelId) -> Result<Subscription, MessagingError> {
        let mut inner = self.shared.inner.lock().unwrap();
        let id = SubscriberId(inner.next_subscriber);
        inner.next_subscriber += 1;
        let state = inner
            .channels
            .get_mut(&channel)
            .ok_or(MessagingError::ChannelClosed(channel))?;
        state.subscribers.insert(id, VecDeque::new());
        Ok(Subscription {
            bus: self.clone(),
            channel,
            id,
        })
    }

    fn unsubscribe(&self, channel: ChannelId, id: SubscriberId) {
        let mut inner = self.shared.inner.lock().unwrap();
        if let Some(state) = inner.channels.get_mut(&channel) {
            state.subscribers.remove(&id);
        }
    }

    fn take(&self, channel: ChannelId, id: SubscriberId, max: usize) -> Vec<Envelope> {
        let mut inner = self.shared.inner.lock().unwrap();
        let Some(queue) = inner
            .channels
            .get_mut(&channel)
            .and_then(|s| s.subscribers.get_mut(&id))
        else {
            return Vec::new();
        };
        let n = max.min(queue.len());
        queue.drain(..n).collect()
    }

    /// Envelopes waiting in any subscriber queue.
    pub fn backlog(&self) -> usize {
        let inner = self.shared.inner.lock().unwrap();
        inner
            .channels
            .values()
            .flat_map(|c| c.subscribers.values())
            .map(VecDeque::len)
            .sum()
    }

    /// Blocks until some subscriber queue is non-empty or `timeout` passes.
    pub fn wait_for_traffic(&self, timeout: Duration) -> bool {
        let inner = self.shared.inner.lock().unwrap();
        let pending = |i: &BusInner| {
            i.channels
                .values()
                .any(|c| c.subscribers.values().any(|q| !q.is_empty()))
        };
        if pending(&inner) {
            return true;
        }
        let (inner, _) = self
            .shared
            .traffic
            .wait_timeout_while(inner, timeout, |i| !pending(i))
            .unwrap();
        pending(&inner)
    }

    /// Per-channel count of envelopes handed to subscribers.
    pub fn delivered_per_channel(&self) -> BTreeMap<ChannelId, u64> {
        self.shared.inner.lock().unwrap().delivered.clone()
    }

    pub fn published_per_channel(&self) -> BTreeMap<ChannelId, u64> {
        self.shared.inner.lock().unwrap().published.clone()
    }

    pub fn transport_of(&self, channel: ChannelId) -> Option<Transport> {
        self.shared
            .inner
            .lock()
            .unwrap()
            .channels
            .get(&channel)
            .map(|c| c.transport)
    }
}

fn udp_receive_loop(
    channel: ChannelId,
    socket: Arc<UdpSocket>,
    stop: Arc<AtomicBool>,
    shared: Weak<Shared>,
) {
    let mut buf = vec![0u8; 65536];
    while !stop.load(Ordering::Relaxed) {
        let n = match socket.recv_from(&mut buf) {
            Ok((n, _)) => n,
            Err(_) => continue,
        };
        if n == 0 {
            continue;
        }
        let Some(shared) = shared.upgrade() else {
            return;
        };
        let mut inner = shared.inner.lock().unwrap();
        let Some(state) = inner.channels.get_mut(&channel) else {
            return;
        };
        let count = state.subscribers.len() as u64;
        for queue in state.subscribers.values_mut() {
            queue.push_back(Envelope {
                channel,
                payload: buf[..n].to_vec(),
            });
        }
        *inner.delivered.entry(channel).or_default() += count;
        shared.traffic.notify_all();
    }
}

/// Handle to one open channel.
#[derive(Clone, Debug)]
pub struct ChannelHandle {
    bus: Bus,
    channel: ChannelId,
}

impl ChannelHandle {
    pub fn channel(&self) -> ChannelId {
        self.channel
    }

    pub fn publish(&self, payload: &[u8]) -> Result<(), MessagingError> {
        self.bus.publish(self.channel, payload)
    }

    pub fn subscribe(&self) -> Result<Subscription, MessagingError> {
        self.bus.subscribe(self.channel)
    }
}

/// One subscriber's queue on a channel.
#[derive(Debug)]
pub struct Subscription {
    bus: Bus,
    channel: ChannelId,
    id: SubscriberId,
}

impl Subscription {
    pub fn id(&self) -> SubscriberId {
        self.id
    }

    pub fn channel(&self) -> ChannelId {
        self.channel
    }

    pub fn try_recv(&self) -> Option<Envelope> {
        self.bus.take(self.channel, self.id, 1).pop()
    }

    pub fn drain(&self) -> Vec<Envelope> {
        self.bus.take(self.channel, self.id, usize::MAX)
    }

    pub fn unsubscribe(self) {
        self.bus.unsubscribe(self.channel, self.id);
    }
}
