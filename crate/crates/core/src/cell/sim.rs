use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::protocol::{EpochTime, ServiceDef, ServiceKind};

use super::{CellError, RobotMemory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Magazine {
    pub capacity: u32,
    pub remaining: u32,
    pub layout: String,
}

impl Magazine {
    pub fn refill(&mut self, n: u32) -> Result<(), CellError> {
        let total = self
            .remaining
            .checked_add(n)
            .filter(|&t| t <= self.capacity);
        match total {
            Some(t) => {
                self.remaining = t;
                Ok(())
            }
            None => Err(CellError::OverCapacity("magazine")),
        }
    }
}

/// Work post on the secondary conveyor. A board being worked on keeps its
/// place on the post.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardPost {
    pub blanks: u32,
    pub intermediates: u32,
    pub on_table: u32,
}

impl BoardPost {
    pub const CAPACITY: u32 = 2;

    pub fn occupied(&self) -> u32 {
        self.blanks + self.intermediates + self.on_table
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provision {
    BoardArrived,
    MagazineRefill(u32),
    /// The conveyor takes a finished intermediate off the post.
    Collect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockedReason {
    NoBoard,
    NoComponents,
    RobotBusy,
}

/// A committed slot handed to the cell for execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimJob {
    pub id: String,
    pub serv_id: String,
    pub start: EpochTime,
    pub duration: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellPhase {
    Idle,
    Loading {
        job: SimJob,
        until: EpochTime,
    },
    Executing {
        job: SimJob,
        step: u32,
        steps: u32,
        started: EpochTime,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimEvent {
    Started {
        id: String,
        serv_id: String,
        load: bool,
    },
    Loaded {
        serv_id: String,
        evicted: Option<String>,
    },
    Progress {
        id: String,
        serv_id: String,
        percent: u8,
    },
    Done {
        id: String,
        serv_id: String,
    },
    Blocked {
        id: String,
        serv_id: String,
        reason: BlockedReason,
    },
    Overrun {
        id: String,
        serv_id: String,
        late_by: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub at: EpochTime,
    pub event: SimEvent,
}

/// One service execution, for reconfiguration accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub serv_id: String,
    pub loaded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellConfig {
    pub services: Vec<ServiceDef>,
    pub memory_capacity: usize,
    pub load_time: u64,
    pub preloaded: Vec<String>,
    pub magazine_capacity: u32,
    pub magazine_initial: u32,
    pub layout: String,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            services: Vec::new(),
            memory_capacity: 4,
            load_time: 120,
            preloaded: Vec::new(),
            magazine_capacity: 100,
            magazine_initial: 100,
            layout: "default".into(),
        }
    }
}

/// Discrete-event model of the assembly cell.
#[derive(Debug, Clone)]
pub struct CellSim {
    now: EpochTime,
    services: BTreeMap<String, ServiceDef>,
    load_time: u64,
    memory: RobotMemory,
    magazine: Magazine,
    post: BoardPost,
    queue: Vec<SimJob>,
    phase: CellPhase,
    blocked: Option<BlockedReason>,
    finished: u32,
    consumed: u64,
    executions: Vec<Execution>,
}

impl CellSim {
    pub fn new(cfg: &CellConfig, now: EpochTime) -> Result<Self, CellError> {
        if cfg.magazine_initial > cfg.magazine_capacity {
            return Err(CellError::OverCapacity("magazine"));
        }
        Ok(Self {
            now,
            services: cfg
                .services
                .iter()
                .map(|s| (s.serv_id.clone(), s.clone()))
                .collect(),
            load_time: cfg.load_time,
            memory: RobotMemory::preloaded(cfg.memory_capacity, &cfg.preloaded),
            magazine: Magazine {
                capacity: cfg.magazine_capacity,
                remaining: cfg.magazine_initial,
                layout: cfg.layout.clone(),
            },
            post: BoardPost::default(),
            queue: Vec::new(),
            phase: CellPhase::Idle,
            blocked: None,
            finished: 0,
            consumed: 0,
            executions: Vec::new(),
        })
    }

    pub fn now(&self) -> EpochTime {
        self.now
    }

    pub fn phase(&self) -> &CellPhase {
        &self.phase
    }

    pub fn memory(&self) -> &RobotMemory {
        &self.memory
    }

    pub fn magazine(&self) -> &Magazine {
        &self.magazine
    }

    pub fn post(&self) -> &BoardPost {
        &self.post
    }

    pub fn queue(&self) -> &[SimJob] {
        &self.queue
    }

    pub fn blocked(&self) -> Option<BlockedReason> {
        self.blocked
    }

    pub fn finished_products(&self) -> u32 {
        self.finished
    }

    pub fn components_consumed(&self) -> u64 {
        self.consumed
    }

    pub fn executions(&self) -> &[Execution] {
        &self.executions
    }

    pub fn is_idle(&self) -> bool {
        self.phase == CellPhase::Idle && self.queue.is_empty()
    }

    /// Adds or replaces a service definition.
    pub fn define_service(&mut self, def: ServiceDef) {
        self.services.insert(def.serv_id.clone(), def);
    }

    /// Queues a job; jobs run in start order.
    pub fn enqueue(&mut self, job: SimJob) -> Result<(), CellError> {
        if !self.services.contains_key(&job.serv_id) {
            return Err(CellError::UnknownService(job.serv_id));
        }
        let idx = self.queue.partition_point(|j| j.start <= job.start);
        self.queue.insert(idx, job);
        Ok(())
    }

    /// Removes a queued, not yet started job.
    pub fn withdraw(&mut self, id: &str, serv_id: &str) -> Option<SimJob> {
        let idx = self
            .queue
            .iter()
            .position(|j| j.id == id && j.serv_id == serv_id)?;
        Some(self.queue.remove(idx))
    }

    pub fn provision(&mut self, p: Provision) -> Result<(), CellError> {
        match p {
            Provision::BoardArrived => {
                if self.post.occupied() >= BoardPost::CAPACITY {
                    return Err(CellError::OverCapacity("board post"));
                }
                self.post.blanks += 1;
                Ok(())
            }
            Provision::MagazineRefill(n) => self.magazine.refill(n),
            Provision::Collect => {
                if self.post.intermediates == 0 {
                    return Err(CellError::NothingToCollect);
                }
                self.post.intermediates -= 1;
                Ok(())
            }
        }
    }

    /// Time of the next internal event, if one is pending.
    pub fn next_event_time(&self) -> Option<EpochTime> {
        match &self.phase {
            CellPhase::Loading { until, .. } => Some(*until),
            CellPhase::Executing {
                job,
                step,
                steps,
                started,
            } => {
                let base = self.services[&job.serv_id].base_exec;
                Some(*started + boundary(base, step + 1, *steps))
            }
            CellPhase::Idle => self
                .queue
                .first()
                .filter(|j| j.start > self.now)
                .map(|j| j.start),
        }
    }

    /// Advances by `dt` seconds.
    pub fn tick(&mut self, dt: u64) -> Vec<TimedEvent> {
        let target = self.now + dt;
        self.advance_to(target)
    }

    /// Processes everything due up to and including `t`. Calling it with the
    /// current time re-evaluates a blocked head job.
    pub fn advance_to(&mut self, t: EpochTime) -> Vec<TimedEvent> {
        let mut out = Vec::new();
        loop {
            self.try_start(&mut out);
            let next = match &self.phase {
                CellPhase::Idle => None,
                _ => self.next_event_time(),
            };
            match next {
                Some(at) if at <= t => {
                    self.now = self.now.max(at);
                    self.step_phase(&mut out);
                }
                _ => break,
            }
        }
        self.now = self.now.max(t);
        self.try_start(&mut out);
        out
    }

    fn emit(&self, out: &mut Vec<TimedEvent>, event: SimEvent) {
        out.push(TimedEvent {
            at: self.now,
            event,
        });
    }

    fn check(&self, def: &ServiceDef) -> Option<BlockedReason> {
        match def.kind {
            ServiceKind::Placement if self.post.blanks == 0 => Some(BlockedReason::NoBoard),
            ServiceKind::Placement if self.magazine.remaining < def.components => {
                Some(BlockedReason::NoComponents)
            }
            ServiceKind::Join if self.post.intermediates < 2 => Some(BlockedReason::NoBoard),
            _ => None,
        }
    }

    fn try_start(&mut self, out: &mut Vec<TimedEvent>) {
        let Some(head) = self.queue.first() else {
            return;
        };
        if head.start > self.now {
            return;
        }
        let def = self.services[&head.serv_id].clone();
        let reason = if self.phase != CellPhase::Idle {
            Some(BlockedReason::RobotBusy)
        } else {
            self.check(&def)
        };
        if let Some(reason) = reason {
            if self.blocked != Some(reason) {
                self.blocked = Some(reason);
                let event = SimEvent::Blocked {
                    id: head.id.clone(),
                    serv_id: head.serv_id.clone(),
                    reason,
                };
                self.emit(out, event);
            }
            return;
        }
        self.blocked = None;
        let job = self.queue.remove(0);
        match def.kind {
            ServiceKind::Placement => {
                self.post.blanks -= 1;
                self.post.on_table += 1;
                self.magazine.remaining -= def.components;
                self.consumed += u64::from(def.components);
            }
            ServiceKind::Join => {
                self.post.intermediates -= 2;
                self.post.on_table += 1;
            }
        }
        let load = def.resident_required && !self.memory.contains(&def.serv_id);
        let access = def
            .resident_required
            .then(|| self.memory.touch(&def.serv_id));
        self.executions.push(Execution {
            serv_id: def.serv_id.clone(),
            loaded: load,
        });
        self.emit(
            out,
            SimEvent::Started {
                id: job.id.clone(),
                serv_id: job.serv_id.clone(),
                load,
            },
        );
        if load {
            let evicted = access.and_then(|a| a.evicted);
            self.emit(
                out,
                SimEvent::Loaded {
                    serv_id: def.serv_id.clone(),
                    evicted,
                },
            );
            self.phase = CellPhase::Loading {
                job,
                until: self.now + self.load_time,
            };
        } else {
            self.phase = CellPhase::Executing {
                job,
                step: 0,
                steps: def.steps.max(1),
                started: self.now,
            };
        }
    }

    fn step_phase(&mut self, out: &mut Vec<TimedEvent>) {
        match std::mem::replace(&mut self.phase, CellPhase::Idle) {
            CellPhase::Idle => {}
            CellPhase::Loading { job, .. } => {
                let steps = self.services[&job.serv_id].steps.max(1);
                self.phase = CellPhase::Executing {
                    job,
                    step: 0,
                    steps,
                    started: self.now,
                };
            }
            CellPhase::Executing {
                job,
                step,
                steps,
                started,
            } => {
                let step = step + 1;
                let percent = (100 * step / steps) as u8;
                self.emit(
                    out,
                    SimEvent::Progress {
                        id: job.id.clone(),
                        serv_id: job.serv_id.clone(),
                        percent,
                    },
                );
                if step < steps {
                    self.phase = CellPhase::Executing {
                        job,
                        step,
                        steps,
                        started,
                    };
                    return;
                }
                self.post.on_table -= 1;
                match self.services[&job.serv_id].kind {
                    ServiceKind::Placement => self.post.intermediates += 1,
                    ServiceKind::Join => self.finished += 1,
                }
                let due = job.start + job.duration;
                self.emit(
                    out,
                    SimEvent::Done {
                        id: job.id.clone(),
                        serv_id: job.serv_id.clone(),
                    },
                );
                if self.now > due {
                    let late_by = self.now - due;
                    self.emit(
                        out,
                        SimEvent::Overrun {
                            id: job.id,
                            serv_id: job.serv_id,
                            late_by: late_by as u64,
                        },
                    );
                }
            }
        }
    }
}

/// Offset of the end of step `k` (1-based) of `steps` equal steps.
pub fn boundary(base_exec: u64, k: u32, steps: u32) -> u64 {
    base_exec * u64::from(k) / u64::from(steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> CellConfig {
        CellConfig {
            services: vec![
                ServiceDef::placement("S_20", 60, 4),
                ServiceDef::placement("S_21", 60, 4),
                ServiceDef::join("S_10", 45),
            ],
            preloaded: vec!["S_20".into(), "S_21".into(), "S_10".into()],
            magazine_capacity: 10,
            magazine_initial: 10,
            ..CellConfig::default()
        }
    }

    fn job(id: &str, serv: &str, start: u64, duration: u64) -> SimJob {
        SimJob {
            id: id.into(),
            serv_id: serv.into(),
            start: EpochTime(start),
            duration,
        }
    }

    fn kinds(events: &[TimedEvent]) -> Vec<String> {
        events
            .iter()
            .map(|e| match &e.event {
                SimEvent::Started { .. } => "start".to_string(),
                SimEvent::Loaded { .. } => "load".to_string(),
                SimEvent::Progress { percent, .. } => format!("p{percent}"),
                SimEvent::Done { .. } => "done".to_string(),
                SimEvent::Blocked { reason, .. } => format!("{reason:?}"),
                SimEvent::Overrun { late_by, .. } => format!("late{late_by}"),
            })
            .collect()
    }

    #[test]
    fn idle_without_jobs() {
        let mut s = CellSim::new(&cfg(), EpochTime(0)).unwrap();
        assert!(s.tick(500).is_empty());
        assert_eq!(s.phase(), &CellPhase::Idle);
        assert_eq!(s.now(), EpochTime(500));
    }

    #[test]
    fn starts_when_due() {
        let mut s = CellSim::new(&cfg(), EpochTime(99)).unwrap();
        s.provision(Provision::BoardArrived).unwrap();
        s.enqueue(job("a", "S_20", 100, 60)).unwrap();
        assert!(s.advance_to(EpochTime(99)).is_empty());
        s.advance_to(EpochTime(101));
        assert!(matches!(s.phase(), CellPhase::Executing { step: 0, .. }));
    }

    #[test]
    fn three_steps_then_done() {
        let mut s = CellSim::new(&cfg(), EpochTime(0)).unwrap();
        s.provision(Provision::BoardArrived).unwrap();
        s.enqueue(job("a", "S_20", 0, 60)).unwrap();
        let ev = s.advance_to(EpochTime(1000));
        assert_eq!(kinds(&ev), ["start", "p33", "p66", "p100", "done"]);
        let times: Vec<u64> = ev.iter().map(|e| e.at.0).collect();
        assert_eq!(times, [0, 20, 40, 60, 60]);
        assert_eq!(s.post().intermediates, 1);
        assert_eq!(s.magazine().remaining, 6);
        assert_eq!(s.components_consumed(), 4);
    }

    #[test]
    fn join_needs_two_intermediates() {
        let mut s = CellSim::new(&cfg(), EpochTime(0)).unwrap();
        s.provision(Provision::BoardArrived).unwrap();
        s.enqueue(job("a", "S_20", 0, 60)).unwrap();
        s.enqueue(job("c", "S_10", 60, 45)).unwrap();
        let ev = s.advance_to(EpochTime(60));
        assert_eq!(
            ev.last().unwrap().event,
            SimEvent::Blocked {
                id: "c".into(),
                serv_id: "S_10".into(),
                reason: BlockedReason::NoBoard
            }
        );
        assert_eq!(s.blocked(), Some(BlockedReason::NoBoard));
    }

    #[test]
    fn p10_sequence_with_late_board_overruns() {
        let mut s = CellSim::new(&cfg(), EpochTime(0)).unwrap();
        s.provision(Provision::BoardArrived).unwrap();
        s.enqueue(job("a", "S_20", 0, 60)).unwrap();
        s.enqueue(job("b", "S_21", 60, 60)).unwrap();
        s.enqueue(job("c", "S_10", 120, 45)).unwrap();
        s.advance_to(EpochTime(80));
        s.provision(Provision::BoardArrived).unwrap();
        let ev = s.advance_to(EpochTime(1000));
        let done: Vec<(String, u64)> = ev
            .iter()
            .filter_map(|e| match &e.event {
                SimEvent::Done { id, .. } => Some((id.clone(), e.at.0)),
                _ => None,
            })
            .collect();
        assert_eq!(done, [("b".to_string(), 140), ("c".to_string(), 185)]);
        let k = kinds(&ev);
        assert!(k.contains(&"late20".to_string()));
        assert_eq!(s.finished_products(), 1);
        assert_eq!(s.post().occupied(), 0);
    }

    #[test]
    fn non_resident_loads_with_lru_eviction() {
        let mut c = cfg();
        c.memory_capacity = 2;
        c.preloaded = vec!["S_20".into(), "S_21".into()];
        let mut s = CellSim::new(&c, EpochTime(0)).unwrap();
        for _ in 0..2 {
            s.provision(Provision::BoardArrived).unwrap();
        }
        s.enqueue(job("a", "S_20", 0, 60)).unwrap();
        s.enqueue(job("b", "S_21", 60, 60)).unwrap();
        s.enqueue(job("c", "S_10", 120, 165)).unwrap();
        let ev = s.advance_to(EpochTime(1000));
        // S_20 was least recently used when S_10 loaded.
        assert!(ev.iter().any(|e| e.event
            == SimEvent::Loaded {
                serv_id: "S_10".into(),
                evicted: Some("S_20".into())
            }));
        let done_c = ev
            .iter()
            .find(|e| matches!(&e.event, SimEvent::Done { id, .. } if id == "c"))
            .unwrap();
        assert_eq!(done_c.at, EpochTime(120 + 120 + 45));
        assert!(s.memory().len() <= 2);
    }

    #[test]
    fn missing_components_block() {
        let mut c = cfg();
        c.magazine_initial = 3;
        let mut s = CellSim::new(&c, EpochTime(0)).unwrap();
        s.provision(Provision::BoardArrived).unwrap();
        s.enqueue(job("a", "S_20", 0, 60)).unwrap();
        let ev = s.advance_to(EpochTime(10));
        assert_eq!(kinds(&ev), ["NoComponents"]);
        s.provision(Provision::MagazineRefill(7)).unwrap();
        assert_eq!(s.magazine().remaining, 10);
        assert_eq!(
            s.provision(Provision::MagazineRefill(1)),
            Err(CellError::OverCapacity("magazine"))
        );
        let ev = s.advance_to(EpochTime(10));
        assert_eq!(kinds(&ev), ["start"]);
    }

    #[test]
    fn post_capacity() {
        let mut s = CellSim::new(&cfg(), EpochTime(0)).unwrap();
        s.provision(Provision::BoardArrived).unwrap();
        s.provision(Provision::BoardArrived).unwrap();
        assert_eq!(
            s.provision(Provision::BoardArrived),
            Err(CellError::OverCapacity("board post"))
        );
    }

    #[test]
    fn collect_frees_the_post() {
        let mut s = CellSim::new(&cfg(), EpochTime(0)).unwrap();
        assert_eq!(
            s.provision(Provision::Collect),
            Err(CellError::NothingToCollect)
        );
        s.provision(Provision::BoardArrived).unwrap();
        s.enqueue(job("a", "S_20", 0, 60)).unwrap();
        s.advance_to(EpochTime(60));
        assert_eq!(s.post().intermediates, 1);
        s.provision(Provision::Collect).unwrap();
        assert_eq!(s.post().occupied(), 0);
    }

    #[test]
    fn boundaries_cover_exec_time() {
        assert_eq!(
            (1..=3).map(|k| boundary(50, k, 3)).collect::<Vec<_>>(),
            [16, 33, 50]
        );
    }
}
