use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::Action;
use crate::origin::Origin;

/// One counter cell: mediation point, subject origin and outcome.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CounterKey {
    pub point: String,
    pub origin: Origin,
    pub action: Action,
}

impl CounterKey {
    pub fn new(point: impl Into<String>, origin: Origin, action: Action) -> Self {
        Self { point: point.into(), origin, action }
    }

    fn sort_key(&self) -> (&str, &str, &str) {
        (&self.point, self.origin.as_str(), self.action.as_str())
    }
}

// Ordered by rendered text so the exported table is lexicographically sorted.
impl Ord for CounterKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for CounterKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Monotonic per-(mediation point, origin, action) decision counts.
#[derive(Debug, Default)]
pub struct AuditCounters {
    cells: Mutex<BTreeMap<CounterKey, u64>>,
}

impl AuditCounters {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds counters from a previous [`snapshot`](Self::snapshot).
    pub fn from_snapshot(cells: impl IntoIterator<Item = (CounterKey, u64)>) -> Self {
        let mut map = BTreeMap::new();
        for (k, v) in cells {
            *map.entry(k).or_insert(0) += v;
        }
        Self { cells: Mutex::new(map) }
    }

    pub fn record(&self, point: &str, origin: Origin, action: Action) {
        let mut cells = self.cells.lock().unwrap_or_else(|e| e.into_inner());
        *cells.entry(CounterKey::new(point, origin, action)).or_insert(0) += 1;
    }

    /// Point-in-time copy in sorted order.
    pub fn snapshot(&self) -> Vec<(CounterKey, u64)> {
        let cells = self.cells.lock().unwrap_or_else(|e| e.into_inner());
        cells.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    pub fn get(&self, point: &str, origin: Origin, action: Action) -> u64 {
        let cells = self.cells.lock().unwrap_or_else(|e| e.into_inner());
        cells.get(&CounterKey::new(point, origin, action)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.cells.lock().unwrap_or_else(|e| e.into_inner()).values().sum()
    }

    /// Sum over all cells with the given action.
    pub fn total_for(&self, action: Action) -> u64 {
        let cells = self.cells.lock().unwrap_or_else(|e| e.into_inner());
        cells.iter().filter(|(k, _)| k.action == action).map(|(_, v)| v).sum()
    }

    pub fn reset(&self) {
        self.cells.lock().unwrap_or_else(|e| e.into_inner()).clear();
    }

    /// `mediation-point origin action count` lines, sorted.
    pub fn render(&self) -> String {
        render_table(&self.snapshot())
    }
}

/// Renders counter cells as `mediation-point origin action count` lines.
pub fn render_table(cells: &[(CounterKey, u64)]) -> String {
    let mut out = String::new();
    for (k, v) in cells {
        let _ = writeln!(out, "{} {} {} {}", k.point, k.origin, k.action, v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn single_event() {
        let c = AuditCounters::new();
        c.record("file", Origin::Remote, Action::Deny);
        assert_eq!(c.get("file", Origin::Remote, Action::Deny), 1);
        assert_eq!(c.render(), "file remote deny 1\n");
    }

    #[test]
    fn render_is_lexicographic() {
        let c = AuditCounters::new();
        c.record("file", Origin::Service, Action::Allow);
        c.record("bpf-prog-load", Origin::Service, Action::Deny);
        c.record("file", Origin::ControlPlane, Action::Allow);
        c.record("file", Origin::Physical, Action::Allow);
        c.record("file", Origin::Physical, Action::Allow);
        assert_eq!(
            c.render(),
            "bpf-prog-load service deny 1\nfile control-plane allow 1\nfile physical allow 2\nfile service allow 1\n"
        );
        assert_eq!(c.snapshot(), c.snapshot());
    }

    #[test]
    fn concurrent_increments_are_counted_once() {
        let c = Arc::new(AuditCounters::new());
        let threads: Vec<_> = (0..8)
            .map(|i| {
                let c = Arc::clone(&c);
                std::thread::spawn(move || {
                    for _ in 0..1000 {
                        let action = if i % 2 == 0 { Action::Allow } else { Action::Deny };
                        c.record("file", Origin::Remote, action);
                    }
                })
            })
            .collect();
        for t in threads {
            t.join().unwrap();
        }
        assert_eq!(c.total(), 8000);
        assert_eq!(c.total_for(Action::Deny), 4000);
    }

    #[test]
    fn restore_from_snapshot() {
        let c = AuditCounters::new();
        c.record("file", Origin::Remote, Action::Deny);
        let again = AuditCounters::from_snapshot(c.snapshot());
        assert_eq!(again.snapshot(), c.snapshot());
        again.reset();
        assert_eq!(again.total(), 0);
    }
}
