//! Read model rebuilt from event frames alone.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::trace::{EventFrame, EventKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HolonView {
    pub id: String,
    pub kind: String,
    pub product: Option<String>,
    pub parent: Option<String>,
    pub inbox: String,
    pub live: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrderView {
    pub id: String,
    pub product: String,
    pub parent: Option<String>,
    pub state: String,
    pub percent: u64,
    pub children: Vec<String>,
}

/// An order with its sub-orders expanded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrderTree {
    pub id: String,
    pub product: String,
    pub state: String,
    pub percent: u64,
    pub children: Vec<OrderTree>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GanttBar {
    pub order: String,
    pub serv: String,
    pub start: u64,
    pub end: u64,
    pub started: Option<u64>,
    pub done: Option<u64>,
    pub percent: u64,
    pub late_by: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReadModel {
    last_seq: u64,
    holons: BTreeMap<String, HolonView>,
    orders: BTreeMap<String, OrderView>,
    /// Bars by holon inbox.
    gantt: BTreeMap<String, Vec<GanttBar>>,
}

fn opt(s: Option<&str>) -> Option<String> {
    s.filter(|s| !s.is_empty()).map(str::to_string)
}

impl ReadModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn replay<'a>(frames: impl IntoIterator<Item = &'a EventFrame>) -> Self {
        let mut m = Self::new();
        for f in frames {
            m.apply(f);
        }
        m
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    /// Applies one frame. Frames at or below the last applied sequence
    /// number are ignored.
    pub fn apply(&mut self, f: &EventFrame) -> bool {
        if f.seq <= self.last_seq {
            return false;
        }
        self.last_seq = f.seq;
        let t = f.sim_time.0;
        match f.kind {
            EventKind::HolonCreated => {
                let id = f.text("holon").unwrap_or_default().to_string();
                let h = HolonView {
                    id: id.clone(),
                    kind: f.text("kind").unwrap_or_default().to_string(),
                    product: opt(f.text("product")),
                    parent: opt(f.text("parent")),
                    inbox: f.text("inbox").unwrap_or_default().to_string(),
                    live: true,
                };
                if h.kind == "order" {
                    if let Some(p) = h.parent.as_ref().and_then(|p| self.orders.get_mut(p)) {
                        p.children.push(id.clone());
                    }
                    self.orders.insert(
                        id.clone(),
                        OrderView {
                            id: id.clone(),
                            product: h.product.clone().unwrap_or_default(),
                            parent: h.parent.clone(),
                            state: "Pending".into(),
                            percent: 0,
                            children: Vec::new(),
                        },
                    );
                }
                self.holons.insert(id, h);
            }
            EventKind::HolonRemoved => {
                if let Some(h) = f.text("holon").and_then(|id| self.holons.get_mut(id)) {
                    h.live = false;
                }
            }
            EventKind::OrderProgress => {
                if let Some(o) = f.text("order").and_then(|id| self.orders.get_mut(id)) {
                    o.percent = f.int("percent").unwrap_or(o.percent);
                    if let Some(s) = f.text("state") {
                        o.state = s.to_string();
                    }
                }
            }
            EventKind::SlotCommitted => {
                let bars = self
                    .gantt
                    .entry(f.text("holon").unwrap_or_default().to_string())
                    .or_default();
                bars.push(GanttBar {
                    order: f.text("order").unwrap_or_default().to_string(),
                    serv: f.text("serv").unwrap_or_default().to_string(),
                    start: f.int("start").unwrap_or(t),
                    end: f.int("end").unwrap_or(t),
                    started: None,
                    done: None,
                    percent: 0,
                    late_by: 0,
                });
                bars.sort_by_key(|b| b.start);
            }
            EventKind::OpStarted
            | EventKind::OpProgress
            | EventKind::OpDone
            | EventKind::Overrun => {
                let (Some(holon), Some(order), Some(serv)) =
                    (f.text("holon"), f.text("order"), f.text("serv"))
                else {
                    return true;
                };
                let Some(bar) = self.gantt.get_mut(holon).and_then(|bars| {
                    bars.iter_mut()
                        .rev()
                        .find(|b| b.order == order && b.serv == serv)
                }) else {
                    return true;
                };
                match f.kind {
                    EventKind::OpStarted => bar.started = Some(t),
                    EventKind::OpProgress => bar.percent = f.int("percent").unwrap_or(bar.percent),
                    EventKind::OpDone => {
                        bar.done = Some(t);
                        bar.percent = 100;
                    }
                    _ => bar.late_by = f.int("late_by").unwrap_or(bar.late_by),
                }
            }
        }
        true
    }

    /// Live holons.
    pub fn census(&self) -> Vec<&HolonView> {
        self.holons.values().filter(|h| h.live).collect()
    }

    pub fn holons(&self) -> impl Iterator<Item = &HolonView> {
        self.holons.values()
    }

    pub fn order(&self, id: &str) -> Option<&OrderView> {
        self.orders.get(id)
    }

    pub fn orders(&self) -> impl Iterator<Item = &OrderView> {
        self.orders.values()
    }

    pub fn order_tree(&self, id: &str) -> Option<OrderTree> {
        let o = self.orders.get(id)?;
        Some(OrderTree {
            id: o.id.clone(),
            product: o.product.clone(),
            state: o.state.clone(),
            percent: o.percent,
            children: o
                .children
                .iter()
                .filter_map(|c| self.order_tree(c))
                .collect(),
        })
    }

    /// Bars of the holon named `id` or listening on inbox `id`; `None` for
    /// an unknown holon.
    pub fn gantt(&self, id: &str) -> Option<Vec<GanttBar>> {
        let inbox = match self.holons.get(id) {
            Some(h) => h.inbox.as_str(),
            None if self.holons.values().any(|h| h.inbox == id) => id,
            None => return None,
        };
        Some(self.gantt.get(inbox).cloned().unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::EpochTime;
    use crate::trace::TraceEvent;

    fn frames(events: Vec<(u64, TraceEvent)>) -> Vec<EventFrame> {
        events
            .into_iter()
            .enumerate()
            .map(|(i, (t, e))| EventFrame {
                seq: i as u64 + 1,
                sim_time: EpochTime(t),
                kind: e.kind,
                payload: e.payload,
            })
            .collect()
    }

    fn created(id: &str, kind: &str, parent: &str, inbox: &str) -> TraceEvent {
        TraceEvent::new(EventKind::HolonCreated)
            .with("holon", id)
            .with("kind", kind)
            .with("product", "P")
            .with("parent", parent)
            .with("inbox", inbox)
    }

    #[test]
    fn tree_grows_and_collapses() {
        let fs = frames(vec![
            (0, created("CELL", "resource", "", "c")),
            (0, created("O1", "order", "", "a")),
            (0, created("O2", "order", "O1", "b")),
            (
                5,
                TraceEvent::new(EventKind::HolonRemoved).with("holon", "O2"),
            ),
            (
                6,
                TraceEvent::new(EventKind::HolonRemoved).with("holon", "O1"),
            ),
        ]);
        let m = ReadModel::replay(&fs[..3]);
        assert_eq!(m.census().len(), 3);
        assert_eq!(m.order_tree("O1").unwrap().children.len(), 1);
        let m = ReadModel::replay(&fs);
        assert_eq!(m.census().len(), 1);
    }

    #[test]
    fn bars_follow_slot_events() {
        let op = |kind, t| {
            (
                t,
                TraceEvent::new(kind)
                    .with("holon", "c")
                    .with("order", "O1:1")
                    .with("serv", "S_20"),
            )
        };
        let fs = frames(vec![
            (0, created("CELL", "resource", "", "c")),
            (
                0,
                TraceEvent::new(EventKind::SlotCommitted)
                    .with("holon", "c")
                    .with("order", "O1:1")
                    .with("serv", "S_20")
                    .with("start", 10)
                    .with("end", 70),
            ),
            op(EventKind::OpStarted, 10),
            op(EventKind::OpDone, 70),
        ]);
        let m = ReadModel::replay(&fs);
        let bars = m.gantt("CELL").unwrap();
        assert_eq!(bars.len(), 1);
        assert_eq!(
            (bars[0].started, bars[0].done, bars[0].percent),
            (Some(10), Some(70), 100)
        );
        assert_eq!(m.gantt("c").unwrap(), bars);
        assert!(m.gantt("nope").is_none());
    }

    #[test]
    fn stale_frames_ignored() {
        let fs = frames(vec![(0, created("CELL", "resource", "", "c"))]);
        let mut m = ReadModel::replay(&fs);
        assert!(!m.apply(&fs[0]));
    }
}
