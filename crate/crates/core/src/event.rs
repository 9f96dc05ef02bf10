//! Time-ordered event queue for the discrete-event core.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Start of profile hour `n`.
    HourTick(usize),
    GenDown(usize),
    GenUp(usize),
    /// Protection trip of a line whose flow reached its trip threshold.
    LineTrip(usize),
    LinePermFail(usize),
    LineRepair(usize),
    ManualReclose(usize),
    OperatorContactDone(usize),
    OperatorSolutionDone(usize),
    RestorationComplete(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
    /// Validity token; an event whose token no longer matches the
    /// component's current token has been superseded and is skipped.
    pub token: u64,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; reverse for earliest-first.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<SimEvent>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Events at non-finite times are dropped.
    pub fn schedule(&mut self, time: f64, kind: EventKind, token: u64) {
        if !time.is_finite() {
            return;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent { time, seq, kind, token });
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_by_time_then_insertion() {
        let mut q = EventQueue::new();
        q.schedule(2.0, EventKind::GenUp(0), 0);
        q.schedule(1.0, EventKind::GenDown(1), 0);
        q.schedule(1.0, EventKind::GenDown(2), 0);
        q.schedule(f64::INFINITY, EventKind::GenDown(3), 0);
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|e| e.kind).collect();
        assert_eq!(
            order,
            vec![EventKind::GenDown(1), EventKind::GenDown(2), EventKind::GenUp(0)]
        );
    }
}
