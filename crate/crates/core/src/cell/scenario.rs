//! Scenario files: one timestamped action per line.
//!
//! ```text
//! # seconds after start
//! 0 order P_10
//! 0 board
//! 60 board
//! 300 refill 20
//! 360 collect
//! ```

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Provision;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioAction {
    Order(String),
    Board,
    Refill(u32),
    Collect,
}

impl ScenarioAction {
    /// The cell provisioning this action stands for, if any.
    pub fn provision(&self) -> Option<Provision> {
        match self {
            ScenarioAction::Order(_) => None,
            ScenarioAction::Board => Some(Provision::BoardArrived),
            ScenarioAction::Refill(n) => Some(Provision::MagazineRefill(*n)),
            ScenarioAction::Collect => Some(Provision::Collect),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    /// Seconds after the simulation start.
    pub at: u64,
    pub action: ScenarioAction,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub events: Vec<ScenarioEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("scenario line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

impl FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut events = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: &str| ScenarioError {
                line: i + 1,
                message: message.to_string(),
            };
            let words: Vec<&str> = line.split_whitespace().collect();
            let at: u64 = words[0].parse().map_err(|_| err("bad time"))?;
            let action = match &words[1..] {
                ["order", product] => ScenarioAction::Order(product.to_string()),
                ["board"] => ScenarioAction::Board,
                ["collect"] => ScenarioAction::Collect,
                ["refill", n] => {
                    ScenarioAction::Refill(n.parse().map_err(|_| err("bad refill count"))?)
                }
                _ => return Err(err("unknown action")),
            };
            events.push(ScenarioEvent { at, action });
        }
        events.sort_by_key(|e| e.at);
        Ok(Scenario { events })
    }
}

impl Scenario {
    /// Time of the last event.
    pub fn horizon(&self) -> u64 {
        self.events.last().map_or(0, |e| e.at)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_sorts() {
        let s: Scenario =
            "# demo\n60 board\n0 order P_10  # first\n\n0 board\n5 refill 3\n70 collect\n"
                .parse()
                .unwrap();
        assert_eq!(
            s.events,
            [
                ScenarioEvent {
                    at: 0,
                    action: ScenarioAction::Order("P_10".into())
                },
                ScenarioEvent {
                    at: 0,
                    action: ScenarioAction::Board
                },
                ScenarioEvent {
                    at: 5,
                    action: ScenarioAction::Refill(3)
                },
                ScenarioEvent {
                    at: 60,
                    action: ScenarioAction::Board
                },
                ScenarioEvent {
                    at: 70,
                    action: ScenarioAction::Collect
                },
            ]
        );
        assert_eq!(s.horizon(), 70);
    }

    #[test]
    fn rejects_bad_lines() {
        assert_eq!("x board".parse::<Scenario>().unwrap_err().line, 1);
        assert_eq!("0 board\n1 fly".parse::<Scenario>().unwrap_err().line, 2);
        assert!("1 refill -2".parse::<Scenario>().is_err());
    }
}
