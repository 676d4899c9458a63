//! Headless scenario runs.

use std::time::Duration;

use serde::Serialize;

use crate::cell::{Scenario, ScenarioAction};
use crate::holon::{HolonError, OrderRecord};
use crate::protocol::EpochTime;
use crate::scheduling::PlanState;
use crate::system::{System, SystemError};

/// Simulated seconds without events after which a run counts as stuck.
pub const IDLE_TIMEOUT: u64 = 300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub idle_timeout: u64,
    /// Simulated seconds per wall second; 0 runs as fast as possible.
    pub speed: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            idle_timeout: IDLE_TIMEOUT,
            speed: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedOrder {
    pub product: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    /// Every order reached a terminal state and every order holon is gone.
    pub finished: bool,
    pub idle_timeout: bool,
    pub end_time: EpochTime,
    /// Orders submitted by the scenario.
    pub orders: Vec<OrderRecord>,
    pub rejected: Vec<RejectedOrder>,
}

impl RunReport {
    pub fn all_done(&self) -> bool {
        self.finished
            && self.rejected.is_empty()
            && self.orders.iter().all(|o| o.state == PlanState::Done)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_done() {
            0
        } else {
            1
        }
    }

    /// One line per order that did not finish.
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .rejected
            .iter()
            .map(|r| format!("{} rejected: {}", r.product, r.reason))
            .collect();
        out.extend(
            self.orders
                .iter()
                .filter(|o| o.state != PlanState::Done)
                .map(|o| format!("{} ({}) {:?} at {}%", o.id, o.product, o.state, o.percent)),
        );
        if self.idle_timeout {
            out.push(format!("idle timeout at {}", self.end_time.0));
        }
        out
    }
}

fn apply(
    system: &mut System,
    action: &ScenarioAction,
    ids: &mut Vec<String>,
    rejected: &mut Vec<RejectedOrder>,
) -> Result<(), SystemError> {
    match action {
        ScenarioAction::Order(product) => match system.submit_order(product, None) {
            Ok(id) => ids.push(id),
            Err(SystemError::Holon(
                e @ (HolonError::UnknownProduct(_) | HolonError::Rejected(_)),
            )) => {
                rejected.push(RejectedOrder {
                    product: product.clone(),
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        },
        other => system.provision(other.provision().expect("provisioning action"))?,
    }
    Ok(())
}

fn quiescent(system: &System, ids: &[String]) -> bool {
    let orders = system.orders();
    ids.iter()
        .all(|id| orders.get(id).is_some_and(|o| o.is_terminal()))
        && orders.all_terminal()
        && system.census() == system.boot_census()
}

/// Plays `scenario` against `system` until every order has finished and its
/// holons are gone, or until nothing has happened for `idle_timeout`
/// simulated seconds.
pub fn run_scenario(
    system: &mut System,
    scenario: &Scenario,
    opts: RunOptions,
) -> Result<RunReport, SystemError> {
    let start = system.start_time();
    let mut ids = Vec::new();
    let mut rejected = Vec::new();
    let mut pending = scenario.events.iter().peekable();
    let mut idle_timeout = false;
    loop {
        while let Some(ev) = pending.next_if(|e| start + e.at <= system.now()) {
            apply(system, &ev.action, &mut ids, &mut rejected)?;
        }
        if pending.peek().is_none() && quiescent(system, &ids) {
            break;
        }
        let deadline = system.last_activity() + opts.idle_timeout;
        let next_scenario = pending.peek().map(|e| start + e.at);
        let next = match (system.next_event_time(), next_scenario) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let next = match next {
            Some(t) if Some(t) == next_scenario || t <= deadline => t,
            _ => {
                system.advance_to(deadline.max(system.now()))?;
                idle_timeout = true;
                break;
            }
        };
        if opts.speed > 0.0 && next > system.now() {
            std::thread::sleep(Duration::from_secs_f64(
                (next - system.now()) as f64 / opts.speed,
            ));
        }
        system.advance_to(next)?;
    }
    let orders = ids
        .iter()
        .filter_map(|id| system.orders().get(id))
        .collect();
    Ok(RunReport {
        finished: !idle_timeout,
        idle_timeout,
        end_time: system.now(),
        orders,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use std::path::{Path, PathBuf};

    use super::*;
    use crate::config::SystemConfig;
    use crate::messaging::Transport;
    use crate::trace::EventKind;

    fn config_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config")
    }

    fn run(scenario: &str) -> (System, RunReport) {
        let cfg = SystemConfig::load(&config_dir().join("reference.toml")).unwrap();
        let mut system = System::boot(cfg, Transport::InProc).unwrap();
        let text = std::fs::read_to_string(config_dir().join("scenarios").join(scenario)).unwrap();
        let report =
            run_scenario(&mut system, &text.parse().unwrap(), RunOptions::default()).unwrap();
        (system, report)
    }

    #[test]
    fn p10_completes() {
        let (system, report) = run("p10.txt");
        assert_eq!(report.exit_code(), 0, "{:?}", report.failures());
        let done: Vec<(String, u64)> = system
            .frames()
            .iter()
            .filter(|f| f.kind == EventKind::OpDone)
            .map(|f| {
                (
                    f.text("serv").unwrap().to_string(),
                    f.sim_time.0 - system.start_time().0,
                )
            })
            .collect();
        assert_eq!(
            done,
            [
                ("S_20".into(), 60),
                ("S_21".into(), 120),
                ("S_10".into(), 165)
            ]
        );
        assert_eq!(system.census(), system.boot_census());
    }

    #[test]
    fn starved_run_times_out() {
        let (_, report) = run("starved.txt");
        assert!(report.idle_timeout);
        assert_eq!(report.exit_code(), 1);
    }
}
