//! Shared fixtures for the benchmarks.

use std::path::{Path, PathBuf};

use holocell::config::SystemConfig;
use holocell::messaging::Transport;
use holocell::protocol::EpochTime;
use holocell::runner::{run_scenario, RunOptions, RunReport};
use holocell::scheduling::{Agenda, ScheduleSlot};
use holocell::system::System;

pub fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config")
}

pub fn reference() -> SystemConfig {
    SystemConfig::load(&config_dir().join("reference.toml")).expect("reference config")
}

pub fn p10_text() -> String {
    std::fs::read_to_string(config_dir().join("scenarios/p10.txt")).expect("p10 scenario")
}

/// Boots the reference system and plays `scenario` to the end.
pub fn run(scenario: &str) -> RunReport {
    let mut system = System::boot(reference(), Transport::InProc).expect("boot");
    run_scenario(
        &mut system,
        &scenario.parse().expect("scenario"),
        RunOptions::default(),
    )
    .expect("run")
}

/// An agenda of `n` slots of length 30 separated by gaps of 10.
pub fn striped_agenda(n: u64) -> Agenda {
    let mut a = Agenda::new();
    for k in 0..n {
        let s = EpochTime(k * 40);
        let slot = ScheduleSlot::new("S", &format!("o{k}"), s, s + 30).expect("slot");
        a.insert(slot).expect("free");
    }
    a
}
