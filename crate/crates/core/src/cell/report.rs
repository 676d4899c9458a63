use serde::{Deserialize, Serialize};

use super::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReconfigMode {
    Holonic,
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeTotal {
    pub mode: ReconfigMode,
    pub total_switch_time: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconfigReport {
    pub holonic: ModeTotal,
    pub classical: ModeTotal,
    /// Consecutive executions of different services.
    pub switches: u32,
    /// Executions that needed a memory load.
    pub loads: u32,
}

/// Compares switch time for a run. Holonic mode pays `load_time` only for
/// loads into robot memory. Classical mode pays it at every change of
/// service, and for any load that falls outside a change.
pub fn reconfiguration_report(executions: &[Execution], load_time: u64) -> ReconfigReport {
    let mut switches = 0;
    let mut loads = 0;
    let mut classical_charges = 0u64;
    for (i, e) in executions.iter().enumerate() {
        let switch = i > 0 && executions[i - 1].serv_id != e.serv_id;
        switches += u32::from(switch);
        loads += u32::from(e.loaded);
        classical_charges += u64::from(switch || e.loaded);
    }
    ReconfigReport {
        holonic: ModeTotal {
            mode: ReconfigMode::Holonic,
            total_switch_time: u64::from(loads) * load_time,
        },
        classical: ModeTotal {
            mode: ReconfigMode::Classical,
            total_switch_time: classical_charges * load_time,
        },
        switches,
        loads,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(seq: &[(&str, bool)]) -> Vec<Execution> {
        seq.iter()
            .map(|(s, l)| Execution {
                serv_id: s.to_string(),
                loaded: *l,
            })
            .collect()
    }

    #[test]
    fn alternating_resident_pays_nothing_holonic() {
        let seq: Vec<(&str, bool)> = (0..6)
            .map(|i| (if i % 2 == 0 { "A" } else { "B" }, false))
            .collect();
        let r = reconfiguration_report(&run(&seq), 120);
        assert_eq!(r.holonic.total_switch_time, 0);
        assert_eq!(r.classical.total_switch_time, 5 * 120);
    }

    #[test]
    fn single_type_resident_is_free() {
        let r = reconfiguration_report(&run(&[("A", false), ("A", false)]), 120);
        assert_eq!(
            (r.holonic.total_switch_time, r.classical.total_switch_time),
            (0, 0)
        );
    }

    #[test]
    fn load_charged_in_both_modes() {
        let r = reconfiguration_report(&run(&[("A", true), ("A", false)]), 120);
        assert_eq!(
            (r.holonic.total_switch_time, r.classical.total_switch_time),
            (120, 120)
        );
    }
}
