use serde::Serialize;

/// Service configurations held in robot memory, least recently used first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RobotMemory {
    capacity: usize,
    resident: Vec<String>,
}

/// Outcome of using a service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Access {
    /// The service was already resident; no load needed.
    pub hit: bool,
    pub evicted: Option<String>,
}

impl RobotMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            resident: Vec::new(),
        }
    }

    /// Memory pre-loaded with `services` (earlier entries are older). Entries
    /// beyond capacity push out the oldest.
    pub fn preloaded<S: AsRef<str>>(capacity: usize, services: &[S]) -> Self {
        let mut m = Self::new(capacity);
        for s in services {
            m.touch(s.as_ref());
        }
        m
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.resident.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resident.is_empty()
    }

    pub fn contains(&self, serv_id: &str) -> bool {
        self.resident.iter().any(|s| s == serv_id)
    }

    /// Resident services, least recently used first.
    pub fn resident(&self) -> &[String] {
        &self.resident
    }

    /// Uses `serv_id`: refreshes it on a hit, loads it (evicting the least
    /// recently used entry when full) on a miss.
    pub fn touch(&mut self, serv_id: &str) -> Access {
        if let Some(idx) = self.resident.iter().position(|s| s == serv_id) {
            let s = self.resident.remove(idx);
            self.resident.push(s);
            return Access {
                hit: true,
                evicted: None,
            };
        }
        if self.capacity == 0 {
            return Access {
                hit: false,
                evicted: None,
            };
        }
        let evicted = (self.resident.len() >= self.capacity).then(|| self.resident.remove(0));
        self.resident.push(serv_id.to_string());
        Access {
            hit: false,
            evicted,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lru_eviction_matches_hand_trace() {
        // Capacity 2; accesses A B A C: C evicts B (A was refreshed).
        let mut m = RobotMemory::new(2);
        assert_eq!(
            m.touch("A"),
            Access {
                hit: false,
                evicted: None
            }
        );
        assert_eq!(
            m.touch("B"),
            Access {
                hit: false,
                evicted: None
            }
        );
        assert_eq!(
            m.touch("A"),
            Access {
                hit: true,
                evicted: None
            }
        );
        assert_eq!(
            m.touch("C"),
            Access {
                hit: false,
                evicted: Some("B".into())
            }
        );
        assert_eq!(m.resident(), ["A", "C"]);
    }

    #[test]
    fn never_exceeds_capacity() {
        let mut m = RobotMemory::preloaded(3, &["a", "b", "c", "d", "e"]);
        assert_eq!(m.resident(), ["c", "d", "e"]);
        for s in ["x", "c", "y", "z", "x"] {
            m.touch(s);
            assert!(m.len() <= 3);
        }
        let mut zero = RobotMemory::new(0);
        assert!(!zero.touch("a").hit);
        assert!(zero.is_empty());
    }
}
