//! The system on its own thread, fed by requests from the gateway.

use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use holocell::cell::{Scenario, ScenarioAction, ScenarioEvent};
use holocell::config::SystemConfig;
use holocell::holon::{DirectoryEntry, HolonError};
use holocell::messaging::Transport;
use holocell::protocol::{EpochTime, ProductSpec, ServiceDef};
use holocell::system::{System, SystemError};
use holocell::trace::EventFrame;
use holocell::view::ReadModel;
use tokio::sync::{broadcast, oneshot};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("unknown product {0}")]
    UnknownProduct(String),
    #[error("{0}")]
    Rejected(String),
    #[error("engine stopped")]
    Stopped,
    #[error("{0}")]
    Internal(String),
}

impl From<SystemError> for EngineError {
    fn from(e: SystemError) -> Self {
        match e {
            SystemError::Holon(HolonError::UnknownProduct(p)) => EngineError::UnknownProduct(p),
            SystemError::Holon(HolonError::Rejected(r)) => EngineError::Rejected(r),
            other => EngineError::Internal(other.to_string()),
        }
    }
}

type Reply<T> = oneshot::Sender<Result<T, EngineError>>;

enum Request {
    DefineProduct(ProductSpec, Reply<()>),
    DefineServices(Vec<ServiceDef>, Reply<()>),
    SubmitOrder(String, Reply<String>),
    Directory(Reply<Vec<DirectoryEntry>>),
}

/// Everything the gateway serves reads, written only by the engine thread.
#[derive(Debug, Default)]
pub struct Shared {
    pub model: ReadModel,
    pub log: Vec<EventFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pacing {
    /// Simulated seconds per wall second; 0 runs as fast as possible.
    pub speed: f64,
}

#[derive(Clone)]
pub struct EngineHandle {
    tx: mpsc::Sender<Request>,
    pub shared: Arc<Mutex<Shared>>,
    pub events: broadcast::Sender<EventFrame>,
}

impl EngineHandle {
    async fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Request) -> Result<T, EngineError> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(make(tx)).map_err(|_| EngineError::Stopped)?;
        rx.await.map_err(|_| EngineError::Stopped)?
    }

    pub async fn define_product(&self, spec: ProductSpec) -> Result<(), EngineError> {
        self.call(|r| Request::DefineProduct(spec, r)).await
    }

    pub async fn define_services(&self, defs: Vec<ServiceDef>) -> Result<(), EngineError> {
        self.call(|r| Request::DefineServices(defs, r)).await
    }

    pub async fn submit_order(&self, product: String) -> Result<String, EngineError> {
        self.call(|r| Request::SubmitOrder(product, r)).await
    }

    pub async fn directory(&self) -> Result<Vec<DirectoryEntry>, EngineError> {
        self.call(Request::Directory).await
    }
}

struct Engine {
    system: System,
    feed: Receiver<EventFrame>,
    shared: Arc<Mutex<Shared>>,
    events: broadcast::Sender<EventFrame>,
    pending: std::vec::IntoIter<ScenarioEvent>,
    next_action: Option<ScenarioEvent>,
    pacing: Pacing,
    wall_start: Instant,
}

impl Engine {
    fn publish(&self) {
        let mut shared = self.shared.lock().unwrap();
        for f in self.feed.try_iter() {
            shared.model.apply(&f);
            let _ = self.events.send(f.clone());
            shared.log.push(f);
        }
    }

    fn handle(&mut self, req: Request) {
        match req {
            Request::DefineProduct(spec, reply) => {
                let _ = reply.send(self.system.define_product(spec).map_err(Into::into));
            }
            Request::DefineServices(defs, reply) => {
                let r = defs
                    .into_iter()
                    .try_for_each(|d| self.system.define_service(d));
                let _ = reply.send(r.map_err(Into::into));
            }
            Request::SubmitOrder(product, reply) => {
                let _ = reply.send(self.system.submit_order(&product, None).map_err(Into::into));
            }
            Request::Directory(reply) => {
                let _ = reply.send(Ok(self.system.directory()));
            }
        }
        self.publish();
    }

    fn next_scenario_time(&self) -> Option<EpochTime> {
        self.next_action
            .as_ref()
            .map(|e| self.system.start_time() + e.at)
    }

    fn run_due_actions(&mut self) -> Result<(), SystemError> {
        while let Some(ev) = self.next_action.take() {
            if self.system.start_time() + ev.at > self.system.now() {
                self.next_action = Some(ev);
                break;
            }
            match ev.action {
                ScenarioAction::Order(p) => {
                    if let Err(e) = self.system.submit_order(&p, None) {
                        tracing::warn!(product = p, error = %e, "scenario order failed");
                    }
                }
                other => self
                    .system
                    .provision(other.provision().expect("provisioning action"))?,
            }
            self.next_action = self.pending.next();
        }
        self.publish();
        Ok(())
    }

    /// Simulated time the wall clock has reached.
    fn wall_sim_time(&self) -> EpochTime {
        let elapsed = self.wall_start.elapsed().as_secs_f64() * self.pacing.speed;
        self.system.start_time() + elapsed as u64
    }

    fn run(mut self, rx: Receiver<Request>) -> Result<(), SystemError> {
        loop {
            self.run_due_actions()?;
            let next = match (self.system.next_event_time(), self.next_scenario_time()) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            let wait = if self.pacing.speed > 0.0 {
                let target = self.wall_sim_time();
                if target > self.system.now() {
                    self.system.advance_to(target)?;
                    self.publish();
                    continue;
                }
                let secs = next.map_or(1.0, |t| {
                    (t - self.system.now()).max(1) as f64 / self.pacing.speed
                });
                Some(Duration::from_secs_f64(secs.min(0.1)))
            } else if let Some(t) = next {
                self.system.advance_to(t)?;
                self.publish();
                match rx.try_recv() {
                    Ok(req) => self.handle(req),
                    Err(mpsc::TryRecvError::Empty) => {}
                    Err(mpsc::TryRecvError::Disconnected) => return Ok(()),
                }
                continue;
            } else {
                None
            };
            let req = match wait {
                Some(d) => match rx.recv_timeout(d) {
                    Ok(req) => req,
                    Err(RecvTimeoutError::Timeout) => continue,
                    Err(RecvTimeoutError::Disconnected) => return Ok(()),
                },
                None => match rx.recv() {
                    Ok(req) => req,
                    Err(_) => return Ok(()),
                },
            };
            self.handle(req);
        }
    }
}

/// Boots the system on a new thread and returns a handle to it once booted.
pub fn spawn(
    cfg: SystemConfig,
    transport: Transport,
    scenario: Option<Scenario>,
    pacing: Pacing,
) -> Result<(EngineHandle, JoinHandle<Result<(), SystemError>>), SystemError> {
    let (tx, rx) = mpsc::channel();
    let shared = Arc::new(Mutex::new(Shared::default()));
    let (events, _) = broadcast::channel(1024);
    let (boot_tx, boot_rx) = mpsc::channel();
    let thread = {
        let shared = shared.clone();
        let events = events.clone();
        std::thread::Builder::new()
            .name("holocell-engine".into())
            .spawn(move || {
                let mut system = match System::boot(cfg, transport) {
                    Ok(s) => s,
                    Err(e) => {
                        let _ = boot_tx.send(Err(e));
                        return Ok(());
                    }
                };
                {
                    let mut s = shared.lock().unwrap();
                    for f in system.frames() {
                        s.model.apply(f);
                        s.log.push(f.clone());
                    }
                }
                let feed = system.listen();
                let mut pending = scenario.unwrap_or_default().events.into_iter();
                let next_action = pending.next();
                let engine = Engine {
                    system,
                    feed,
                    shared,
                    events,
                    pending,
                    next_action,
                    pacing,
                    wall_start: Instant::now(),
                };
                let _ = boot_tx.send(Ok(()));
                engine.run(rx)
            })
            .expect("spawn engine thread")
    };
    match boot_rx.recv() {
        Ok(Ok(())) => Ok((EngineHandle { tx, shared, events }, thread)),
        Ok(Err(e)) => Err(e),
        Err(_) => match thread.join() {
            Err(panic) => std::panic::resume_unwind(panic),
            Ok(_) => unreachable!("engine thread reports boot before exiting"),
        },
    }
}
