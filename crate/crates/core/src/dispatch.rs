//! Generation-load balancing of the control objects: priority-list
//! commitment with equal sharing inside a priority tier, assistance from
//! other areas on the same island, and random load disconnection when an
//! island cannot be supplied.

use rand::seq::SliceRandom;

use crate::fsm::OutageCause;
use crate::model::Network;
use crate::stochastic::RngStream;

/// MW below which a deficit or residual counts as zero.
pub const BALANCE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    /// MW per generator (all generators of the network; zero off-island).
    pub outputs: Vec<f64>,
    /// Uncovered demand per area index, MW.
    pub unserved: Vec<f64>,
    pub feasible: bool,
}

/// Splits `demand` equally among units with the given headrooms. Units that
/// hit their headroom are capped and the rest is shared among the others.
/// Returns the allocation and whatever could not be placed.
pub fn water_fill(demand: f64, headroom: &[f64]) -> (Vec<f64>, f64) {
    let mut alloc = vec![0.0; headroom.len()];
    if demand <= 0.0 || headroom.is_empty() {
        return (alloc, demand.max(0.0));
    }
    let mut order: Vec<usize> = (0..headroom.len()).collect();
    order.sort_by(|&a, &b| headroom[a].total_cmp(&headroom[b]).then(a.cmp(&b)));
    let mut remaining = demand;
    let mut left = order.len();
    for &i in &order {
        let share = remaining / left as f64;
        let take = share.min(headroom[i].max(0.0));
        alloc[i] = take;
        remaining -= take;
        left -= 1;
    }
    if remaining < BALANCE_EPS {
        remaining = 0.0;
    }
    (alloc, remaining)
}

/// Units grouped into priority tiers, highest priority (lowest number)
/// first. Each tier lists generator indices in ascending order.
fn tiers(net: &Network, units: &[usize]) -> Vec<Vec<usize>> {
    let mut sorted = units.to_vec();
    sorted.sort_by_key(|&g| (net.generator(g).priority, g));
    let mut out: Vec<Vec<usize>> = Vec::new();
    for g in sorted {
        match out.last_mut() {
            Some(t) if net.generator(t[0]).priority == net.generator(g).priority => t.push(g),
            _ => out.push(vec![g]),
        }
    }
    out
}

/// Raises outputs of `units` by `amount` MW in priority order. Returns the
/// part that did not fit.
pub fn fill_by_priority(net: &Network, units: &[usize], amount: f64, outputs: &mut [f64]) -> f64 {
    let mut remaining = amount;
    for tier in tiers(net, units) {
        if remaining <= BALANCE_EPS {
            return 0.0;
        }
        let head: Vec<f64> = tier.iter().map(|&g| net.generator(g).capacity_mw - outputs[g]).collect();
        let (alloc, left) = water_fill(remaining, &head);
        for (&g, a) in tier.iter().zip(alloc) {
            outputs[g] = (outputs[g] + a).min(net.generator(g).capacity_mw);
        }
        remaining = left;
    }
    if remaining <= BALANCE_EPS { 0.0 } else { remaining }
}

/// Lowers outputs of `units` by `amount` MW starting with the lowest
/// priority tier. Returns the part that could not be removed.
pub fn unload_by_priority(net: &Network, units: &[usize], amount: f64, outputs: &mut [f64]) -> f64 {
    let mut remaining = amount;
    for tier in tiers(net, units).into_iter().rev() {
        if remaining <= BALANCE_EPS {
            return 0.0;
        }
        let room: Vec<f64> = tier.iter().map(|&g| outputs[g]).collect();
        let (alloc, left) = water_fill(remaining, &room);
        for (&g, a) in tier.iter().zip(alloc) {
            outputs[g] = (outputs[g] - a).max(0.0);
        }
        remaining = left;
    }
    if remaining <= BALANCE_EPS { 0.0 } else { remaining }
}

/// Priority-list dispatch on one island.
///
/// `area_demand[k]` is the connected demand of area `k` on this island;
/// `available[g]` marks in-service units. Each area first covers its own
/// demand; uncovered demand is then taken by the other areas' units on the
/// island, areas with the largest remaining headroom first.
pub fn dispatch(net: &Network, island: &[usize], area_demand: &[f64], available: &[bool]) -> DispatchResult {
    let n_areas = net.n_areas();
    let mut on_island = vec![false; net.n_buses()];
    for &b in island {
        on_island[b] = true;
    }
    let mut units_by_area: Vec<Vec<usize>> = vec![Vec::new(); n_areas];
    for g in 0..net.n_generators() {
        if available[g] && on_island[net.generator_bus(g)] {
            units_by_area[net.generator_area(g)].push(g);
        }
    }
    let mut outputs = vec![0.0; net.n_generators()];
    let mut deficit: Vec<f64> = (0..n_areas)
        .map(|k| fill_by_priority(net, &units_by_area[k], area_demand[k], &mut outputs))
        .collect();

    let headroom = |k: usize, outputs: &[f64]| -> f64 {
        units_by_area[k].iter().map(|&g| net.generator(g).capacity_mw - outputs[g]).sum()
    };
    let mut needy: Vec<usize> = (0..n_areas).filter(|&k| deficit[k] > 0.0).collect();
    needy.sort_by_key(|&k| net.area(k).id);
    for k in needy {
        let mut helpers: Vec<(usize, f64)> = (0..n_areas)
            .filter(|&h| h != k)
            .map(|h| (h, headroom(h, &outputs)))
            .filter(|&(_, s)| s > BALANCE_EPS)
            .collect();
        helpers.sort_by(|a, b| b.1.total_cmp(&a.1).then(net.area(a.0).id.cmp(&net.area(b.0).id)));
        for (h, _) in helpers {
            if deficit[k] <= 0.0 {
                break;
            }
            deficit[k] = fill_by_priority(net, &units_by_area[h], deficit[k], &mut outputs);
        }
    }
    let feasible = deficit.iter().all(|&d| d <= BALANCE_EPS);
    DispatchResult { outputs, unserved: deficit, feasible }
}

/// Applies persistent corrective offsets to a base dispatch on one island
/// and restores the island balance in priority order if clamping to unit
/// limits disturbed it. `units` are the island's available generators.
pub fn apply_offsets(net: &Network, units: &[usize], base: &[f64], offsets: &[f64], demand: f64, outputs: &mut [f64]) {
    for &g in units {
        outputs[g] = (base[g] + offsets[g]).clamp(0.0, net.generator(g).capacity_mw);
    }
    let total: f64 = units.iter().map(|&g| outputs[g]).sum();
    let residual = demand - total;
    if residual > BALANCE_EPS {
        fill_by_priority(net, units, residual, outputs);
    } else if residual < -BALANCE_EPS {
        unload_by_priority(net, units, -residual, outputs);
    }
}

/// Disconnects loads in a uniformly random order until `excess` MW of
/// demand is removed. `candidates` are `(load, served MW)` pairs; loads
/// drawing nothing are never picked. Greedy: the disconnection stops at the
/// first load that makes the island feasible.
pub fn shed_until_feasible(candidates: &[(usize, f64)], excess: f64, rng: &mut RngStream) -> Vec<usize> {
    if excess <= BALANCE_EPS {
        return Vec::new();
    }
    let mut pool: Vec<(usize, f64)> = candidates.iter().copied().filter(|&(_, d)| d > 0.0).collect();
    pool.sort_by_key(|&(l, _)| l);
    pool.shuffle(rng.rng());
    let mut removed = Vec::new();
    let mut left = excess;
    for (l, d) in pool {
        if left <= BALANCE_EPS {
            break;
        }
        removed.push(l);
        left -= d;
    }
    removed
}

/// Supply situation of one island ahead of a rebalance.
#[derive(Debug, Clone, PartialEq)]
pub struct IslandSupply {
    pub capacity: f64,
    /// Supplied loads on the island with their served demand.
    pub loads: Vec<(usize, f64)>,
}

impl IslandSupply {
    pub fn demand(&self) -> f64 {
        self.loads.iter().map(|(_, d)| d).sum()
    }
}

/// Loads to disconnect so that every island's demand fits its capacity,
/// each tagged with `cause`.
pub fn rebalance(islands: &[IslandSupply], cause: OutageCause, rng: &mut RngStream) -> Vec<(usize, OutageCause)> {
    let mut out = Vec::new();
    for isl in islands {
        let excess = isl.demand() - isl.capacity;
        out.extend(shed_until_feasible(&isl.loads, excess, rng).into_iter().map(|l| (l, cause)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fixtures, Bus, NetworkModel};

    fn one_area(gens: &[(f64, u32)]) -> Network {
        let mut m = fixtures::buses(1);
        for (k, &(cap, p)) in gens.iter().enumerate() {
            m.generators.push(fixtures::gen(k as u32 + 1, 1, cap, p));
        }
        Network::new(m).unwrap()
    }

    #[test]
    fn water_fill_caps_and_redistributes() {
        let (a, left) = water_fill(100.0, &[10.0, 50.0, 50.0]);
        assert_eq!(a, vec![10.0, 45.0, 45.0]);
        assert_eq!(left, 0.0);
        let (a, left) = water_fill(200.0, &[10.0, 50.0]);
        assert_eq!(a, vec![10.0, 50.0]);
        assert_eq!(left, 140.0);
    }

    #[test]
    fn equal_split_in_top_tier() {
        let net = one_area(&[(50.0, 1), (50.0, 1)]);
        let r = dispatch(&net, &[0], &[80.0], &[true, true]);
        assert_eq!(r.outputs, vec![40.0, 40.0]);
        assert!(r.feasible);
    }

    #[test]
    fn overflow_to_next_tier() {
        let net = one_area(&[(50.0, 1), (50.0, 1), (400.0, 2)]);
        let r = dispatch(&net, &[0], &[120.0], &[true; 3]);
        assert_eq!(r.outputs, vec![50.0, 50.0, 20.0]);
        let r = dispatch(&net, &[0], &[0.0], &[true; 3]);
        assert_eq!(r.outputs, vec![0.0; 3]);
    }

    #[test]
    fn shortfall_is_reported_unserved() {
        let net = one_area(&[(50.0, 1)]);
        let r = dispatch(&net, &[0], &[80.0], &[true]);
        assert!(!r.feasible);
        assert!((r.unserved[0] - 30.0).abs() < 1e-12);
    }

    #[test]
    fn other_areas_assist() {
        let m = NetworkModel {
            areas: vec![fixtures::area(1), fixtures::area(2), fixtures::area(3)],
            buses: vec![Bus { id: 1, area: 1 }, Bus { id: 2, area: 2 }, Bus { id: 3, area: 3 }],
            lines: vec![fixtures::line(1, 1, 2, 0.1, 100.0), fixtures::line(2, 2, 3, 0.1, 100.0)],
            generators: vec![
                fixtures::gen(1, 1, 50.0, 1),
                fixtures::gen(2, 2, 100.0, 1),
                fixtures::gen(3, 3, 60.0, 1),
            ],
            ..fixtures::buses(0)
        };
        let net = Network::new(m).unwrap();
        // Area 1 short by 30; area 2 has 80 spare, area 3 has 40 spare.
        let r = dispatch(&net, &[0, 1, 2], &[80.0, 20.0, 20.0], &[true; 3]);
        assert_eq!(r.outputs, vec![50.0, 50.0, 20.0]);
        assert!(r.feasible);
    }

    #[test]
    fn offsets_are_applied_and_rebalanced() {
        let net = one_area(&[(50.0, 1), (100.0, 2)]);
        let base = dispatch(&net, &[0], &[60.0], &[true, true]).outputs;
        assert_eq!(base, vec![50.0, 10.0]);
        let mut out = vec![0.0; 2];
        apply_offsets(&net, &[0, 1], &base, &[-20.0, 20.0], 60.0, &mut out);
        assert_eq!(out, vec![30.0, 30.0]);
        // Demand grew to 80; the base moves and the offsets ride on top.
        let base = dispatch(&net, &[0], &[80.0], &[true, true]).outputs;
        apply_offsets(&net, &[0, 1], &base, &[-20.0, 20.0], 80.0, &mut out);
        assert_eq!(out, vec![30.0, 50.0]);
    }

    #[test]
    fn shedding_stops_at_first_feasible_pick() {
        for seed in 0..50 {
            let mut rng = RngStream::new(seed, 0);
            let loads = [(0, 30.0), (1, 30.0), (2, 40.0)];
            let out = shed_until_feasible(&loads, 20.0, &mut rng);
            assert_eq!(out.len(), 1);
        }
        let mut rng = RngStream::new(1, 0);
        assert!(shed_until_feasible(&[(0, 10.0)], 0.0, &mut rng).is_empty());
    }

    #[test]
    fn rebalance_disconnects_everything_when_no_capacity() {
        let mut rng = RngStream::new(1, 0);
        let isl = IslandSupply { capacity: 0.0, loads: vec![(0, 10.0), (1, 5.0), (2, 0.0)] };
        let mut out = rebalance(&[isl], OutageCause::GenerationInadequacy, &mut rng);
        out.sort();
        assert_eq!(out, vec![(0, OutageCause::GenerationInadequacy), (1, OutageCause::GenerationInadequacy)]);
        let ok = IslandSupply { capacity: 100.0, loads: vec![(0, 10.0)] };
        assert!(rebalance(&[ok], OutageCause::GenerationInadequacy, &mut rng).is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dispatch_respects_priority_and_balance(
                units in prop::collection::vec((1.0f64..300.0, 1u32..4), 1..10),
                demand in 0.0f64..1500.0,
            ) {
                let net = one_area(&units);
                let avail = vec![true; units.len()];
                let r = dispatch(&net, &[0], &[demand], &avail);
                let cap: f64 = units.iter().map(|u| u.0).sum();
                let total: f64 = r.outputs.iter().sum();
                for (g, &(c, _)) in units.iter().enumerate() {
                    prop_assert!(r.outputs[g] >= 0.0 && r.outputs[g] <= c + 1e-12);
                }
                if demand <= cap {
                    prop_assert!(r.feasible);
                    prop_assert!((total - demand).abs() <= 1e-9);
                } else {
                    prop_assert!(!r.feasible);
                }
                for (g, &(_, p)) in units.iter().enumerate() {
                    if r.outputs[g] > 1e-9 {
                        for (h, &(ch, ph)) in units.iter().enumerate() {
                            if ph < p {
                                prop_assert!((r.outputs[h] - ch).abs() <= 1e-9);
                            }
                        }
                    }
                }
                // Same tier, both below capacity -> equal outputs.
                for (g, &(cg, pg)) in units.iter().enumerate() {
                    for (h, &(ch, ph)) in units.iter().enumerate() {
                        if pg == ph && r.outputs[g] < cg - 1e-9 && r.outputs[h] < ch - 1e-9 {
                            prop_assert!((r.outputs[g] - r.outputs[h]).abs() <= 1e-9);
                        }
                    }
                }
            }

            #[test]
            fn greedy_shedding_is_minimal_for_its_order(
                demands in prop::collection::vec(1.0f64..100.0, 1..12),
                frac in 0.0f64..1.0,
                seed in 0u64..1000,
            ) {
                let loads: Vec<(usize, f64)> = demands.iter().copied().enumerate().collect();
                let total: f64 = demands.iter().sum();
                let excess = total * frac;
                let mut rng = RngStream::new(seed, 0);
                let out = shed_until_feasible(&loads, excess, &mut rng);
                let removed: f64 = out.iter().map(|&l| demands[l]).sum();
                prop_assert!(removed >= excess - BALANCE_EPS);
                if let Some((&last, rest)) = out.split_last() {
                    let _ = last;
                    let without: f64 = rest.iter().map(|&l| demands[l]).sum();
                    prop_assert!(without < excess - BALANCE_EPS);
                }
            }
        }
    }
}
