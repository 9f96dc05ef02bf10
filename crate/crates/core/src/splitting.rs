//! Load-generation imbalance after the network separates into islands.
//!
//! An island short of generation loses randomly chosen loads, one at a time,
//! until its demand fits its capacity. An island with surplus generation
//! simply runs its units down to the demand; no load is lost.

use crate::dispatch::{shed_until_feasible, BALANCE_EPS};
use crate::stochastic::RngStream;

/// Supply situation of one island created by a split.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildIsland {
    pub island: usize,
    /// Capacity of in-service units on the island, MW.
    pub capacity: f64,
    /// Supplied loads with their currently served demand, MW.
    pub loads: Vec<(usize, f64)>,
    /// Generation the island's units produced just before the split, MW.
    pub prior_generation: f64,
}

impl ChildIsland {
    pub fn demand(&self) -> f64 {
        self.loads.iter().map(|(_, d)| d).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChildOutcome {
    pub island: usize,
    /// Demand minus capacity before handling; positive means a shortage.
    pub imbalance_mw: f64,
    pub disconnected: Vec<usize>,
    /// Reduction of generator output needed to meet the remaining demand.
    pub curtailed_mw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitEvent {
    pub time: f64,
    pub children: Vec<ChildOutcome>,
}

impl SplitEvent {
    pub fn disconnected(&self) -> impl Iterator<Item = usize> + '_ {
        self.children.iter().flat_map(|c| c.disconnected.iter().copied())
    }
}

pub fn handle_split(children: &[ChildIsland], t: f64, rng: &mut RngStream) -> SplitEvent {
    let children = children
        .iter()
        .map(|c| {
            let demand = c.demand();
            let imbalance_mw = demand - c.capacity;
            let disconnected = shed_until_feasible(&c.loads, imbalance_mw, rng);
            let removed: f64 = c.loads.iter().filter(|(l, _)| disconnected.contains(l)).map(|(_, d)| d).sum();
            let remaining = demand - removed;
            let curtailed = c.prior_generation - remaining;
            ChildOutcome {
                island: c.island,
                imbalance_mw,
                disconnected,
                curtailed_mw: if curtailed > BALANCE_EPS { curtailed } else { 0.0 },
            }
        })
        .collect();
    SplitEvent { time: t, children }
}
