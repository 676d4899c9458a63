//! Order-side contract net: lookup, call for bids, award, confirm.
//!
//! [`Negotiation`] is a pure state machine; hosts feed it messages and timer
//! expiries and carry out the returned [`Action`]s.

use std::collections::{BTreeMap, VecDeque};

use crate::messaging::ChannelId;
use crate::protocol::{
    AwardOp, BidRequest, BidResponse, CancelOp, EpochTime, LookupService, ProtocolMsg,
};

use super::{CellBidder, NegotiationError, ScheduleSlot};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegotiationConfig {
    /// Simulated seconds to wait for bids, and for a confirmation.
    pub timeout: u64,
    /// Rejected awards tolerated before giving up.
    pub max_conflicts: u32,
}

impl Default for NegotiationConfig {
    fn default() -> Self {
        Self {
            timeout: 2,
            max_conflicts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Awarded {
    pub holon: ChannelId,
    pub slot: ScheduleSlot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Send {
        to: ChannelId,
        msg: ProtocolMsg,
    },
    /// Call [`Negotiation::on_timer`] with `tag` after `after` seconds.
    StartTimer {
        after: u64,
        tag: u64,
    },
    Awarded(Awarded),
    Failed(NegotiationError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Phase {
    Idle,
    Lookup,
    Collecting {
        request: BidRequest,
        bids: Vec<BidResponse>,
        timer: u64,
    },
    Confirming {
        bid: BidResponse,
        timer: u64,
    },
    Finished,
}

#[derive(Debug, Clone)]
pub struct Negotiation {
    base_id: String,
    serv_id: String,
    min_start: EpochTime,
    me: ChannelId,
    cfg: NegotiationConfig,
    providers: Vec<ChannelId>,
    round: u32,
    conflicts: u32,
    timers: u64,
    phase: Phase,
}

impl Negotiation {
    pub fn new(
        base_id: &str,
        serv_id: &str,
        min_start: EpochTime,
        me: ChannelId,
        cfg: NegotiationConfig,
    ) -> Self {
        Self {
            base_id: base_id.to_string(),
            serv_id: serv_id.to_string(),
            min_start,
            me,
            cfg,
            providers: Vec::new(),
            round: 0,
            conflicts: 0,
            timers: 0,
            phase: Phase::Idle,
        }
    }

    pub fn serv_id(&self) -> &str {
        &self.serv_id
    }

    pub fn min_start(&self) -> EpochTime {
        self.min_start
    }

    pub fn conflicts(&self) -> u32 {
        self.conflicts
    }

    pub fn rounds(&self) -> u32 {
        self.round + 1
    }

    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Finished
    }

    /// Conversation id of the current round.
    pub fn conversation(&self) -> String {
        if self.round == 0 {
            self.base_id.clone()
        } else {
            format!("{}#{}", self.base_id, self.round)
        }
    }

    /// Whether `id` names any round of this negotiation.
    pub fn owns(&self, id: &str) -> bool {
        id == self.base_id
            || id
                .strip_prefix(self.base_id.as_str())
                .and_then(|rest| rest.strip_prefix('#'))
                .is_some_and(|n| n.parse::<u32>().is_ok())
    }

    /// Starts by asking the directory at `directory` for providers.
    pub fn start_lookup(&mut self, directory: ChannelId) -> Vec<Action> {
        self.phase = Phase::Lookup;
        vec![Action::Send {
            to: directory,
            msg: ProtocolMsg::LookupService(LookupService {
                serv_id: self.serv_id.clone(),
                sender: self.me,
            }),
        }]
    }

    /// Starts with an already known provider list.
    pub fn start_with_providers(&mut self, providers: &[ChannelId]) -> Vec<Action> {
        let mut p = providers.to_vec();
        p.sort();
        p.dedup();
        self.providers = p;
        if self.providers.is_empty() {
            return self.fail(NegotiationError::NoProvider(self.serv_id.clone()));
        }
        self.broadcast()
    }

    pub fn on_message(&mut self, msg: &ProtocolMsg) -> Vec<Action> {
        match (msg, &mut self.phase) {
            (ProtocolMsg::RspLookup(r), Phase::Lookup) if r.serv_id == self.serv_id => {
                let holons = r.holons.clone();
                self.start_with_providers(&holons)
            }
            (ProtocolMsg::RspBidForOp(bid), Phase::Collecting { request, bids, .. }) => {
                if bid.answers(request).is_err()
                    || !self.providers.contains(&bid.sender)
                    || bids.iter().any(|b| b.sender == bid.sender)
                {
                    return Vec::new();
                }
                bids.push(bid.clone());
                if bids.len() == self.providers.len() {
                    self.close_bidding()
                } else {
                    Vec::new()
                }
            }
            (ProtocolMsg::ConfirmOp(c), Phase::Confirming { bid, .. })
                if c.id == bid.id && c.op_id == bid.op_id =>
            {
                if c.accepted {
                    let bid = bid.clone();
                    self.phase = Phase::Finished;
                    let slot = ScheduleSlot {
                        serv_id: bid.op_id.clone(),
                        conversation: bid.id.clone(),
                        start: bid.start,
                        end: bid.finish(),
                    };
                    vec![Action::Awarded(Awarded {
                        holon: bid.sender,
                        slot,
                    })]
                } else {
                    self.conflict(None)
                }
            }
            _ => Vec::new(),
        }
    }

    pub fn on_timer(&mut self, tag: u64) -> Vec<Action> {
        match &self.phase {
            Phase::Collecting { timer, .. } if *timer == tag => self.close_bidding(),
            Phase::Confirming { timer, bid } if *timer == tag => {
                // No confirmation: withdraw in case the award did land.
                let cancel = Action::Send {
                    to: bid.sender,
                    msg: ProtocolMsg::CancelOp(CancelOp {
                        id: bid.id.clone(),
                        op_id: bid.op_id.clone(),
                    }),
                };
                self.conflict(Some(cancel))
            }
            _ => Vec::new(),
        }
    }

    fn next_timer(&mut self) -> u64 {
        self.timers += 1;
        self.timers
    }

    fn broadcast(&mut self) -> Vec<Action> {
        let request = BidRequest {
            id: self.conversation(),
            op_id: self.serv_id.clone(),
            min_start: self.min_start,
            sender: self.me,
        };
        let timer = self.next_timer();
        let mut out: Vec<Action> = self
            .providers
            .iter()
            .map(|&to| Action::Send {
                to,
                msg: ProtocolMsg::GetBidForOp(request.clone()),
            })
            .collect();
        out.push(Action::StartTimer {
            after: self.cfg.timeout,
            tag: timer,
        });
        self.phase = Phase::Collecting {
            request,
            bids: Vec::new(),
            timer,
        };
        out
    }

    fn close_bidding(&mut self) -> Vec<Action> {
        let Phase::Collecting { bids, .. } = &self.phase else {
            return Vec::new();
        };
        let Some(best) = select_bid(bids).cloned() else {
            return self.fail(NegotiationError::NoBids(self.serv_id.clone()));
        };
        let timer = self.next_timer();
        let award = AwardOp {
            id: best.id.clone(),
            op_id: best.op_id.clone(),
            start: best.start,
            sender: self.me,
        };
        let to = best.sender;
        self.phase = Phase::Confirming { bid: best, timer };
        vec![
            Action::Send {
                to,
                msg: ProtocolMsg::AwardOp(award),
            },
            Action::StartTimer {
                after: self.cfg.timeout,
                tag: timer,
            },
        ]
    }

    fn conflict(&mut self, first: Option<Action>) -> Vec<Action> {
        self.conflicts += 1;
        let mut out: Vec<Action> = first.into_iter().collect();
        if self.conflicts >= self.cfg.max_conflicts {
            out.extend(self.fail(NegotiationError::AwardFailed(self.serv_id.clone())));
        } else {
            self.round += 1;
            out.extend(self.broadcast());
        }
        out
    }

    fn fail(&mut self, e: NegotiationError) -> Vec<Action> {
        self.phase = Phase::Finished;
        vec![Action::Failed(e)]
    }
}

/// Minimum finish; ties go to the lexicographically smallest sender.
pub fn select_bid(bids: &[BidResponse]) -> Option<&BidResponse> {
    bids.iter()
        .min_by(|a, b| (a.finish(), a.sender.to_string()).cmp(&(b.finish(), b.sender.to_string())))
}

/// Synchronous message exchange with resource holons.
pub trait Market {
    fn lookup(&mut self, serv_id: &str) -> Vec<ChannelId>;
    /// Delivers `msg` to `to` and returns any replies; none models a lost
    /// message or a silent provider.
    fn deliver(&mut self, to: ChannelId, msg: &ProtocolMsg) -> Vec<ProtocolMsg>;
}

/// Runs one negotiation to completion against `market`.
pub fn negotiate_service(
    market: &mut impl Market,
    conversation: &str,
    serv_id: &str,
    min_start: EpochTime,
    me: ChannelId,
    cfg: NegotiationConfig,
) -> Result<Awarded, NegotiationError> {
    let mut n = Negotiation::new(conversation, serv_id, min_start, me, cfg);
    let providers = market.lookup(serv_id);
    let mut pending: VecDeque<Action> = n.start_with_providers(&providers).into();
    let mut timers = VecDeque::new();
    loop {
        while let Some(action) = pending.pop_front() {
            match action {
                Action::Send { to, msg } => {
                    for reply in market.deliver(to, &msg) {
                        pending.extend(n.on_message(&reply));
                    }
                }
                Action::StartTimer { tag, .. } => timers.push_back(tag),
                Action::Awarded(a) => return Ok(a),
                Action::Failed(e) => return Err(e),
            }
        }
        match timers.pop_front() {
            Some(tag) => pending.extend(n.on_timer(tag)),
            None => return Err(NegotiationError::NoBids(serv_id.to_string())),
        }
    }
}

/// Directory plus resource holons answering in-process.
#[derive(Debug, Clone, Default)]
pub struct InMemoryMarket {
    pub directory: BTreeMap<String, Vec<ChannelId>>,
    pub cells: BTreeMap<ChannelId, CellBidder>,
}

impl InMemoryMarket {
    /// Adds a cell and registers every service it offers.
    pub fn add_cell(&mut self, cell: CellBidder) {
        for s in cell.services() {
            self.directory
                .entry(s.serv_id.clone())
                .or_default()
                .push(cell.addr());
        }
        self.cells.insert(cell.addr(), cell);
    }
}

impl Market for InMemoryMarket {
    fn lookup(&mut self, serv_id: &str) -> Vec<ChannelId> {
        self.directory.get(serv_id).cloned().unwrap_or_default()
    }

    fn deliver(&mut self, to: ChannelId, msg: &ProtocolMsg) -> Vec<ProtocolMsg> {
        let Some(cell) = self.cells.get_mut(&to) else {
            return Vec::new();
        };
        match msg {
            ProtocolMsg::GetBidForOp(req) => cell
                .handle_request(req)
                .map(ProtocolMsg::RspBidForOp)
                .into_iter()
                .collect(),
            ProtocolMsg::AwardOp(award) => vec![ProtocolMsg::ConfirmOp(cell.handle_award(award).0)],
            ProtocolMsg::CancelOp(c) => {
                cell.handle_cancel(c);
                Vec::new()
            }
            _ => Vec::new(),
        }
    }
}
