use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cell::RobotMemory;
use crate::messaging::ChannelId;
use crate::protocol::{
    AwardOp, BidRequest, BidResponse, CancelOp, ConfirmOp, EpochTime, ServiceDef,
};

use super::SchedulingError;

/// One committed booking `[start, end)` of a service for an order conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleSlot {
    pub serv_id: String,
    pub conversation: String,
    pub start: EpochTime,
    pub end: EpochTime,
}

impl ScheduleSlot {
    pub fn new(
        serv_id: &str,
        conversation: &str,
        start: EpochTime,
        end: EpochTime,
    ) -> Result<Self, SchedulingError> {
        if start >= end {
            return Err(SchedulingError::InvalidSlot { start, end });
        }
        Ok(Self {
            serv_id: serv_id.to_string(),
            conversation: conversation.to_string(),
            start,
            end,
        })
    }

    pub fn duration(&self) -> u64 {
        self.end.0 - self.start.0
    }

    pub fn overlaps(&self, start: EpochTime, end: EpochTime) -> bool {
        self.start < end && start < self.end
    }
}

/// Gantt row for one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GanttEntry {
    pub serv_id: String,
    pub order: String,
    pub start: EpochTime,
    pub end: EpochTime,
}

/// Committed slots of one resource holon, sorted by start, pairwise disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agenda {
    slots: Vec<ScheduleSlot>,
}

impl Agenda {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn slots(&self) -> &[ScheduleSlot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_free(&self, start: EpochTime, end: EpochTime) -> bool {
        !self.slots.iter().any(|s| s.overlaps(start, end))
    }

    /// Earliest `t >= min_start` with `[t, t + duration)` free.
    pub fn earliest_start(&self, min_start: EpochTime, duration: u64) -> EpochTime {
        let mut t = min_start;
        for s in &self.slots {
            if s.end <= t {
                continue;
            }
            if s.start >= t + duration {
                break;
            }
            t = s.end;
        }
        t
    }

    pub fn insert(&mut self, slot: ScheduleSlot) -> Result<(), SchedulingError> {
        if !self.is_free(slot.start, slot.end) {
            return Err(SchedulingError::SlotConflict {
                start: slot.start,
                end: slot.end,
            });
        }
        let idx = self.slots.partition_point(|s| s.start < slot.start);
        self.slots.insert(idx, slot);
        Ok(())
    }

    /// Frees the slot booked for `(conversation, serv_id)`; other slots stay put.
    pub fn remove(&mut self, conversation: &str, serv_id: &str) -> Option<ScheduleSlot> {
        let idx = self
            .slots
            .iter()
            .position(|s| s.conversation == conversation && s.serv_id == serv_id)?;
        Some(self.slots.remove(idx))
    }

    pub fn find(&self, conversation: &str, serv_id: &str) -> Option<&ScheduleSlot> {
        self.slots
            .iter()
            .find(|s| s.conversation == conversation && s.serv_id == serv_id)
    }

    pub fn gantt(&self) -> Vec<GanttEntry> {
        self.slots
            .iter()
            .map(|s| GanttEntry {
                serv_id: s.serv_id.clone(),
                order: s.conversation.clone(),
                start: s.start,
                end: s.end,
            })
            .collect()
    }

    /// Whether the agenda invariant holds (sorted, disjoint, non-empty slots).
    pub fn is_consistent(&self) -> bool {
        self.slots.iter().all(|s| s.start < s.end)
            && self.slots.windows(2).all(|w| w[0].end <= w[1].start)
    }
}

/// Quote for `service`: earliest start and execution time. A non-resident
/// service costs `load_time` extra. Quotes reserve nothing.
pub fn compute_bid(
    agenda: &Agenda,
    service: &ServiceDef,
    min_start: EpochTime,
    resident: bool,
    load_time: u64,
) -> (EpochTime, u64) {
    let exec = service.base_exec + if resident { 0 } else { load_time };
    (agenda.earliest_start(min_start, exec), exec)
}

/// Books a previously issued bid. The slot starts at the awarded start and
/// lasts the quoted execution time.
pub fn commit_bid(
    agenda: &mut Agenda,
    bid: &BidResponse,
    award_start: EpochTime,
    conversation: &str,
) -> Result<ScheduleSlot, SchedulingError> {
    let slot = ScheduleSlot::new(
        &bid.op_id,
        conversation,
        award_start,
        award_start + bid.exec_time,
    )?;
    agenda.insert(slot.clone())?;
    Ok(slot)
}

/// The bidding side of a resource holon: service catalogue, agenda, memory
/// model and the quotes it has issued.
#[derive(Debug, Clone)]
pub struct CellBidder {
    addr: ChannelId,
    services: BTreeMap<String, ServiceDef>,
    agenda: Agenda,
    memory: RobotMemory,
    load_time: u64,
    quotes: BTreeMap<(String, String), (BidRequest, BidResponse)>,
}

impl CellBidder {
    pub fn new(
        addr: ChannelId,
        services: Vec<ServiceDef>,
        memory: RobotMemory,
        load_time: u64,
    ) -> Self {
        Self {
            addr,
            services: services
                .into_iter()
                .map(|s| (s.serv_id.clone(), s))
                .collect(),
            agenda: Agenda::new(),
            memory,
            load_time,
            quotes: BTreeMap::new(),
        }
    }

    pub fn addr(&self) -> ChannelId {
        self.addr
    }

    pub fn agenda(&self) -> &Agenda {
        &self.agenda
    }

    pub fn agenda_mut(&mut self) -> &mut Agenda {
        &mut self.agenda
    }

    pub fn service(&self, serv_id: &str) -> Option<&ServiceDef> {
        self.services.get(serv_id)
    }

    pub fn services(&self) -> impl Iterator<Item = &ServiceDef> {
        self.services.values()
    }

    /// Adds or replaces a service offer.
    pub fn define_service(&mut self, def: ServiceDef) {
        self.services.insert(def.serv_id.clone(), def);
    }

    pub fn outstanding_quotes(&self) -> usize {
        self.quotes.len()
    }

    /// Residency of `serv_id` once every committed slot has run, assuming
    /// slots execute in agenda order.
    pub fn predicted_resident(&self, serv_id: &str) -> bool {
        let Some(def) = self.services.get(serv_id) else {
            return false;
        };
        if !def.resident_required {
            return true;
        }
        let mut m = self.memory.clone();
        for s in self.agenda.slots() {
            if self
                .services
                .get(&s.serv_id)
                .is_some_and(|d| d.resident_required)
            {
                m.touch(&s.serv_id);
            }
        }
        m.contains(serv_id)
    }

    /// Answers a call for bids; `None` when the service is not offered.
    pub fn handle_request(&mut self, req: &BidRequest) -> Option<BidResponse> {
        let def = self.services.get(&req.op_id)?;
        let resident = self.predicted_resident(&req.op_id);
        let (start, exec_time) =
            compute_bid(&self.agenda, def, req.min_start, resident, self.load_time);
        let bid = BidResponse {
            id: req.id.clone(),
            op_id: req.op_id.clone(),
            start,
            exec_time,
            sender: self.addr,
        };
        self.quotes.insert(
            (req.id.clone(), req.op_id.clone()),
            (req.clone(), bid.clone()),
        );
        Some(bid)
    }

    /// Commits the quote named by `award`.
    pub fn commit(&mut self, award: &AwardOp) -> Result<ScheduleSlot, SchedulingError> {
        let key = (award.id.clone(), award.op_id.clone());
        let Some((req, bid)) = self.quotes.get(&key) else {
            return Err(SchedulingError::UnknownBid {
                conversation: award.id.clone(),
                op_id: award.op_id.clone(),
            });
        };
        if award.start < req.min_start {
            return Err(SchedulingError::InvalidSlot {
                start: award.start,
                end: award.start + bid.exec_time,
            });
        }
        let slot = commit_bid(&mut self.agenda, bid, award.start, &award.id)?;
        self.quotes.remove(&key);
        Ok(slot)
    }

    /// Award leg: commits and builds the confirmation.
    pub fn handle_award(
        &mut self,
        award: &AwardOp,
    ) -> (ConfirmOp, Result<ScheduleSlot, SchedulingError>) {
        let result = self.commit(award);
        let confirm = ConfirmOp {
            id: award.id.clone(),
            op_id: award.op_id.clone(),
            accepted: result.is_ok(),
        };
        (confirm, result)
    }

    pub fn handle_cancel(&mut self, cancel: &CancelOp) -> Option<ScheduleSlot> {
        self.quotes
            .remove(&(cancel.id.clone(), cancel.op_id.clone()));
        self.agenda.remove(&cancel.id, &cancel.op_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn slot(start: u64, end: u64) -> ScheduleSlot {
        ScheduleSlot::new("S", &format!("c{start}"), EpochTime(start), EpochTime(end)).unwrap()
    }

    fn oracle(agenda: &Agenda, min: u64, dur: u64, horizon: u64) -> Option<u64> {
        (min..=horizon).find(|&t| agenda.is_free(EpochTime(t), EpochTime(t + dur)))
    }

    #[test]
    fn empty_agenda_bids_min_start() {
        let def = ServiceDef::placement("S", 50, 1);
        assert_eq!(
            compute_bid(&Agenda::new(), &def, EpochTime(1000), true, 120),
            (EpochTime(1000), 50)
        );
        assert_eq!(
            compute_bid(&Agenda::new(), &def, EpochTime(1000), false, 120),
            (EpochTime(1000), 170)
        );
    }

    #[test]
    fn bid_after_occupied_window() {
        let mut a = Agenda::new();
        a.insert(slot(1000, 1050)).unwrap();
        let def = ServiceDef::placement("S", 50, 1);
        let bid = compute_bid(&a, &def, EpochTime(1000), true, 0);
        assert_eq!(bid, (EpochTime(1050), 50));
        assert_eq!(Some(bid.0 .0), oracle(&a, 1000, 50, 2000));
    }

    #[test]
    fn gap_between_slots_is_used_when_wide_enough() {
        let mut a = Agenda::new();
        a.insert(slot(100, 200)).unwrap();
        a.insert(slot(260, 300)).unwrap();
        assert_eq!(a.earliest_start(EpochTime(0), 100), EpochTime(0));
        assert_eq!(a.earliest_start(EpochTime(50), 60), EpochTime(200));
        assert_eq!(a.earliest_start(EpochTime(50), 61), EpochTime(300));
    }

    #[test]
    fn commit_fig8_bid() {
        let bid = BidResponse {
            id: "15".into(),
            op_id: "Op_30".into(),
            start: EpochTime(1308574950),
            exec_time: 50,
            sender: "225.0.0.1:3002".parse().unwrap(),
        };
        let mut a = Agenda::new();
        let s = commit_bid(&mut a, &bid, bid.start, "15").unwrap();
        assert_eq!(
            (s.start, s.end),
            (EpochTime(1308574950), EpochTime(1308575000))
        );
    }

    fn bidder() -> CellBidder {
        CellBidder::new(
            "225.0.0.1:3002".parse().unwrap(),
            vec![
                ServiceDef::placement("S_20", 60, 2),
                ServiceDef::placement("S_21", 60, 2),
            ],
            RobotMemory::preloaded(4, &["S_20", "S_21"]),
            120,
        )
    }

    fn request(id: &str, op: &str, min: u64) -> BidRequest {
        BidRequest {
            id: id.into(),
            op_id: op.into(),
            min_start: EpochTime(min),
            sender: "225.0.0.1:2101".parse().unwrap(),
        }
    }

    fn award(bid: &BidResponse) -> AwardOp {
        AwardOp {
            id: bid.id.clone(),
            op_id: bid.op_id.clone(),
            start: bid.start,
            sender: "225.0.0.1:2101".parse().unwrap(),
        }
    }

    #[test]
    fn racing_awards_one_conflict_either_order() {
        for first_a in [true, false] {
            let mut b = bidder();
            let qa = b.handle_request(&request("a", "S_20", 0)).unwrap();
            let qb = b.handle_request(&request("b", "S_21", 0)).unwrap();
            assert_eq!(qa.start, qb.start);
            let (x, y) = if first_a { (qa, qb) } else { (qb, qa) };
            assert!(b.commit(&award(&x)).is_ok());
            assert!(matches!(
                b.commit(&award(&y)),
                Err(SchedulingError::SlotConflict { .. })
            ));
            assert_eq!(b.agenda().len(), 1);
        }
    }

    #[test]
    fn unknown_or_reused_award_rejected() {
        let mut b = bidder();
        let bid = b.handle_request(&request("a", "S_20", 0)).unwrap();
        let mut stray = award(&bid);
        stray.id = "zzz".into();
        assert!(matches!(
            b.commit(&stray),
            Err(SchedulingError::UnknownBid { .. })
        ));
        assert!(b.commit(&award(&bid)).is_ok());
        assert!(matches!(
            b.commit(&award(&bid)),
            Err(SchedulingError::UnknownBid { .. })
        ));
    }

    #[test]
    fn unknown_service_gets_no_bid() {
        assert!(bidder().handle_request(&request("a", "S_99", 0)).is_none());
    }

    #[test]
    fn residency_prediction_charges_load() {
        let mut b = CellBidder::new(
            "225.0.0.1:3002".parse().unwrap(),
            vec![
                ServiceDef::placement("A", 10, 1),
                ServiceDef::placement("B", 10, 1),
            ],
            RobotMemory::preloaded(1, &["A"]),
            100,
        );
        assert_eq!(
            b.handle_request(&request("1", "A", 0)).unwrap().exec_time,
            10
        );
        let q = b.handle_request(&request("2", "B", 0)).unwrap();
        assert_eq!(q.exec_time, 110);
        b.commit(&award(&q)).unwrap();
        // B now occupies the only memory slot once its booking has run.
        assert_eq!(
            b.handle_request(&request("3", "A", 0)).unwrap().exec_time,
            110
        );
    }

    #[test]
    fn cancel_frees_only_its_slot() {
        let mut b = bidder();
        let q1 = b.handle_request(&request("a", "S_20", 0)).unwrap();
        b.commit(&award(&q1)).unwrap();
        let q2 = b.handle_request(&request("b", "S_21", 0)).unwrap();
        b.commit(&award(&q2)).unwrap();
        let freed = b
            .handle_cancel(&CancelOp {
                id: "a".into(),
                op_id: "S_20".into(),
            })
            .unwrap();
        assert_eq!(freed.start, EpochTime(0));
        assert_eq!(b.agenda().slots()[0].start, EpochTime(60));
    }

    proptest! {
        #[test]
        fn earliest_gap_matches_linear_scan(
            raw in prop::collection::vec((0u64..10_000, 1u64..600), 0..8),
            min in 0u64..10_000,
            dur in 1u64..600,
        ) {
            let mut a = Agenda::new();
            for (s, d) in raw {
                let _ = a.insert(slot(s, s + d));
            }
            prop_assert!(a.is_consistent());
            let got = a.earliest_start(EpochTime(min), dur).0;
            prop_assert_eq!(Some(got), oracle(&a, min, dur, 20_000));
        }
    }
}
