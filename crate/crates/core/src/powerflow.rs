//! DC power flow per island and line sensitivity factors.
//!
//! Angles use the MW-scaled per-unit convention: a line with reactance `x`
//! (per unit) carries `(theta_a - theta_b) / x` MW. Radians are
//! `theta / base_mva`.
//!
//! Two routes to the same angles: the bus-by-bus fixed point (Gauss-Seidel
//! sweeps of the nodal balance) and a direct Cholesky solve of the reduced
//! susceptance matrix. The direct route doubles as the fallback when the
//! iteration stalls and as the oracle in [`verify_flow`].

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::model::{Islands, Network, Topology};

/// Absolute MW tolerance when checking that an island's injections sum to
/// zero (relative to the island's gross injection).
const BALANCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMethod {
    /// Fixed-point sweeps, direct solve as fallback.
    Iterative,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationSettings {
    /// Stop when every bus's nodal mismatch before its update is below this.
    pub tol_mw: f64,
    pub max_sweeps: usize,
}

impl Default for IterationSettings {
    fn default() -> Self {
        Self { tol_mw: 1e-9, max_sweeps: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// MW-scaled angle per bus.
    pub angles: Vec<f64>,
    /// MW per line, positive from `from_bus` to `to_bus`; zero when out.
    pub flows: Vec<f64>,
    /// Reference bus per island.
    pub references: Vec<usize>,
    /// Sweeps used by the iterative route; `None` if the direct route
    /// produced the angles.
    pub sweeps: Option<usize>,
}

/// Default reference: the island's smallest bus id.
pub fn default_references(islands: &Islands) -> Vec<usize> {
    islands.members.iter().map(|m| m[0]).collect()
}

/// Susceptance-weighted adjacency: `(neighbour, 1/x)` per in-service line.
fn neighbours<'a>(net: &'a Network, topo: &'a Topology, bus: usize) -> impl Iterator<Item = (usize, f64)> + 'a {
    net.incident(bus)
        .iter()
        .filter(|(l, _)| topo.in_service[*l])
        .map(move |&(l, other)| (other, 1.0 / net.line(l).reactance_pu))
}

pub fn check_balance(net: &Network, islands: &Islands, injections: &[f64]) -> Result<()> {
    for m in &islands.members {
        let sum: f64 = m.iter().map(|&b| injections[b]).sum();
        let gross: f64 = m.iter().map(|&b| injections[b].abs()).sum();
        if sum.abs() > BALANCE_TOL * gross.max(1.0) {
            return Err(Error::UnbalancedIsland { bus: net.bus_id(m[0]), mismatch_mw: sum });
        }
    }
    Ok(())
}

pub fn line_flows(net: &Network, topo: &Topology, angles: &[f64]) -> Vec<f64> {
    (0..net.n_lines())
        .map(|l| {
            if !topo.in_service[l] {
                return 0.0;
            }
            let (f, t) = net.line_ends(l);
            (angles[f] - angles[t]) / net.line(l).reactance_pu
        })
        .collect()
}

/// Gauss-Seidel sweeps of the nodal balance
/// `theta_a = (P_a + sum_b theta_b / x_ab) / sum_b 1 / x_ab`
/// with each island's reference pinned at zero. Returns the angles and the
/// sweep count, or `None` if the sweep budget ran out.
pub fn iterate_angles(
    net: &Network,
    topo: &Topology,
    islands: &Islands,
    references: &[usize],
    injections: &[f64],
    warm_start: Option<&[f64]>,
    settings: IterationSettings,
) -> Option<(Vec<f64>, usize)> {
    let n = net.n_buses();
    let mut theta = match warm_start {
        Some(w) if w.len() == n => w.to_vec(),
        _ => vec![0.0; n],
    };
    let mut pinned = vec![false; n];
    for &r in references {
        pinned[r] = true;
        theta[r] = 0.0;
    }
    // Flattened adjacency keeps the inner loop tight.
    let mut order = Vec::with_capacity(n);
    let mut start = Vec::with_capacity(n + 1);
    let mut nbr = Vec::new();
    let mut diag = Vec::with_capacity(n);
    for m in &islands.members {
        for &b in m {
            if pinned[b] {
                continue;
            }
            order.push(b);
            start.push(nbr.len());
            let mut d = 0.0;
            for (o, y) in neighbours(net, topo, b) {
                nbr.push((o, y));
                d += y;
            }
            diag.push(d);
        }
    }
    start.push(nbr.len());

    for sweep in 1..=settings.max_sweeps {
        let mut worst: f64 = 0.0;
        for (k, &b) in order.iter().enumerate() {
            let mut acc = injections[b];
            for &(o, y) in &nbr[start[k]..start[k + 1]] {
                acc += y * theta[o];
            }
            let new = acc / diag[k];
            worst = worst.max((new - theta[b]).abs() * diag[k]);
            theta[b] = new;
        }
        if worst < settings.tol_mw {
            return Some((theta, sweep));
        }
    }
    None
}

#[derive(Debug, Clone)]
struct IslandFactor {
    /// Non-reference buses in matrix order.
    buses: Vec<usize>,
    chol: Option<Cholesky<f64, Dyn>>,
}

/// Cholesky factors of the reduced susceptance matrix of every island.
/// Valid for one topology; injections may change freely.
#[derive(Debug, Clone)]
pub struct DcFactorization {
    fingerprint: u64,
    references: Vec<usize>,
    islands: Vec<IslandFactor>,
    /// Local matrix position per bus (`usize::MAX` for references).
    local: Vec<usize>,
    island_of: Vec<usize>,
    /// Sensitivity rows computed so far, per line.
    rows: Vec<OnceLock<Vec<f64>>>,
}

impl DcFactorization {
    pub fn new(net: &Network, topo: &Topology, islands: &Islands) -> Result<Self> {
        Self::with_references(net, topo, islands, &default_references(islands))
    }

    pub fn with_references(net: &Network, topo: &Topology, islands: &Islands, references: &[usize]) -> Result<Self> {
        let n = net.n_buses();
        let mut local = vec![usize::MAX; n];
        let mut factors = Vec::with_capacity(islands.len());
        for (i, m) in islands.members.iter().enumerate() {
            let r = references[i];
            if islands.island_of[r] != i {
                return Err(Error::Flow(format!("reference bus {} is not on island {i}", net.bus_id(r))));
            }
            let buses: Vec<usize> = m.iter().copied().filter(|&b| b != r).collect();
            for (k, &b) in buses.iter().enumerate() {
                local[b] = k;
            }
            let chol = if buses.is_empty() {
                None
            } else {
                let mut mat = DMatrix::<f64>::zeros(buses.len(), buses.len());
                for (k, &b) in buses.iter().enumerate() {
                    for (o, y) in neighbours(net, topo, b) {
                        mat[(k, k)] += y;
                        if o != r {
                            mat[(k, local[o])] -= y;
                        }
                    }
                }
                Some(Cholesky::new(mat).ok_or_else(|| {
                    Error::Flow(format!("singular susceptance matrix on island of bus {}", net.bus_id(m[0])))
                })?)
            };
            factors.push(IslandFactor { buses, chol });
        }
        Ok(Self {
            fingerprint: topo.fingerprint(),
            references: references.to_vec(),
            islands: factors,
            local,
            island_of: islands.island_of.clone(),
            rows: (0..net.n_lines()).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn references(&self) -> &[usize] {
        &self.references
    }

    pub fn solve_angles(&self, injections: &[f64]) -> Vec<f64> {
        let mut theta = vec![0.0; injections.len()];
        for f in &self.islands {
            if let Some(chol) = &f.chol {
                let rhs = DVector::from_iterator(f.buses.len(), f.buses.iter().map(|&b| injections[b]));
                let x = chol.solve(&rhs);
                for (k, &b) in f.buses.iter().enumerate() {
                    theta[b] = x[k];
                }
            }
        }
        theta
    }

    /// Flow change on a line per MW injected at each bus (withdrawn at the
    /// island reference). Zero for buses on other islands.
    pub fn sensitivity_row(&self, net: &Network, line: usize) -> Vec<f64> {
        self.rows[line].get_or_init(|| self.compute_row(net, line)).clone()
    }

    fn compute_row(&self, net: &Network, line: usize) -> Vec<f64> {
        let (from, to) = net.line_ends(line);
        let mut row = vec![0.0; net.n_buses()];
        let island = self.island_of[from];
        let f = &self.islands[island];
        let Some(chol) = &f.chol else { return row };
        let mut rhs = DVector::<f64>::zeros(f.buses.len());
        if self.local[from] != usize::MAX {
            rhs[self.local[from]] += 1.0;
        }
        if self.island_of[to] == island && self.local[to] != usize::MAX {
            rhs[self.local[to]] -= 1.0;
        }
        let y = chol.solve(&rhs);
        let x = net.line(line).reactance_pu;
        for (k, &b) in f.buses.iter().enumerate() {
            row[b] = y[k] / x;
        }
        row
    }
}

/// Solves the DC flow for the given topology and net bus injections (MW,
/// generation minus demand).
pub fn solve_dc_flow(
    net: &Network,
    topo: &Topology,
    islands: &Islands,
    injections: &[f64],
    method: FlowMethod,
) -> Result<FlowSolution> {
    check_balance(net, islands, injections)?;
    let references = default_references(islands);
    let (angles, sweeps) = match method {
        FlowMethod::Iterative => {
            match iterate_angles(net, topo, islands, &references, injections, None, IterationSettings::default()) {
                Some((a, s)) => (a, Some(s)),
                None => {
                    log::debug!("gauss-seidel did not converge, falling back to direct solve");
                    (DcFactorization::new(net, topo, islands)?.solve_angles(injections), None)
                }
            }
        }
        FlowMethod::Direct => (DcFactorization::new(net, topo, islands)?.solve_angles(injections), None),
    };
    let flows = line_flows(net, topo, &angles);
    Ok(FlowSolution { angles, flows, references, sweeps })
}

/// Line sensitivity factors `dP_line / dP_bus` for a set of lines.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityFactors {
    fingerprint: u64,
    lines: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl SensitivityFactors {
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn lines(&self) -> &[usize] {
        &self.lines
    }

    pub fn row(&self, line: usize) -> Option<&[f64]> {
        self.lines.iter().position(|&l| l == line).map(|k| self.rows[k].as_slice())
    }

    pub fn factor(&self, line: usize, bus: usize) -> Option<f64> {
        self.row(line).map(|r| r[bus])
    }

    /// Predicted flow change on `line` for an injection change vector.
    pub fn predict(&self, line: usize, delta: &[f64]) -> Option<f64> {
        self.row(line).map(|r| r.iter().zip(delta).map(|(a, d)| a * d).sum())
    }
}

pub fn sensitivity_factors_from(
    net: &Network,
    topo: &Topology,
    factorization: &DcFactorization,
    scope: &[usize],
) -> Result<SensitivityFactors> {
    if factorization.fingerprint() != topo.fingerprint() {
        return Err(Error::StaleSensitivity);
    }
    let mut rows = Vec::with_capacity(scope.len());
    for &l in scope {
        if !topo.in_service[l] {
            return Err(Error::LineOutOfService(net.line(l).id));
        }
        rows.push(factorization.sensitivity_row(net, l));
    }
    Ok(SensitivityFactors { fingerprint: topo.fingerprint(), lines: scope.to_vec(), rows })
}

/// Sensitivity factors with an explicit reference bus per island (default:
/// smallest bus id).
pub fn sensitivity_factors(
    net: &Network,
    topo: &Topology,
    islands: &Islands,
    scope: &[usize],
    references: Option<&[usize]>,
) -> Result<SensitivityFactors> {
    let refs = references.map_or_else(|| default_references(islands), |r| r.to_vec());
    let fact = DcFactorization::with_references(net, topo, islands, &refs)?;
    sensitivity_factors_from(net, topo, &fact, scope)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowResidualReport {
    /// Largest |net injection - outgoing flows| over all buses, MW.
    pub max_nodal_residual: f64,
    /// Largest |flow - direct-solve flow| over all lines, MW.
    pub max_direct_discrepancy: f64,
}

pub fn verify_flow(
    solution: &FlowSolution,
    net: &Network,
    topo: &Topology,
    islands: &Islands,
    injections: &[f64],
) -> Result<FlowResidualReport> {
    let mut residual = injections.to_vec();
    let flows = line_flows(net, topo, &solution.angles);
    for (l, f) in flows.iter().enumerate() {
        let (a, b) = net.line_ends(l);
        residual[a] -= f;
        residual[b] += f;
    }
    let max_nodal_residual = residual.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let direct = DcFactorization::new(net, topo, islands)?.solve_angles(injections);
    let direct_flows = line_flows(net, topo, &direct);
    let max_direct_discrepancy = solution
        .flows
        .iter()
        .zip(&direct_flows)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(FlowResidualReport { max_nodal_residual, max_direct_discrepancy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{connected_components, fixtures};

    fn setup(m: crate::model::NetworkModel) -> (Network, Topology, Islands) {
        let net = Network::new(m).unwrap();
        let topo = Topology::all_in_service(net.n_lines());
        let islands = connected_components(&net, &topo);
        (net, topo, islands)
    }

    #[test]
    fn two_bus_line_carries_everything() {
        let mut m = fixtures::buses(2);
        m.lines.push(fixtures::line(1, 1, 2, 0.1, 100.0));
        let (net, topo, islands) = setup(m);
        for method in [FlowMethod::Iterative, FlowMethod::Direct] {
            let s = solve_dc_flow(&net, &topo, &islands, &[100.0, -100.0], method).unwrap();
            assert!((s.angles[0] - s.angles[1] - 10.0).abs() < 1e-9);
            assert!((s.flows[0] - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn triangle_splits_by_impedance() {
        let (net, topo, islands) = setup(fixtures::triangle());
        // Lines: 1-2, 2-3, 1-3
        for method in [FlowMethod::Iterative, FlowMethod::Direct] {
            let s = solve_dc_flow(&net, &topo, &islands, &[90.0, -90.0, 0.0], method).unwrap();
            assert!((s.flows[0] - 60.0).abs() < 1e-8, "{:?}", s.flows);
            assert!((s.flows[1] + 30.0).abs() < 1e-8);
            assert!((s.flows[2] - 30.0).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_injections_give_flat_angles() {
        let (net, topo, islands) = setup(fixtures::triangle());
        let s = solve_dc_flow(&net, &topo, &islands, &[0.0; 3], FlowMethod::Iterative).unwrap();
        assert!(s.angles.iter().all(|&a| a == 0.0));
        assert!(s.flows.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn unbalanced_island_is_rejected() {
        let (net, topo, islands) = setup(fixtures::triangle());
        let err = solve_dc_flow(&net, &topo, &islands, &[10.0, 0.0, 0.0], FlowMethod::Direct).unwrap_err();
        assert!(matches!(err, Error::UnbalancedIsland { .. }));
    }

    #[test]
    fn isolated_bus_gets_zero_angle() {
        let (net, _, _) = setup(fixtures::triangle());
        let topo = net.topology_from_ids(&[2].into_iter().collect());
        let islands = connected_components(&net, &topo);
        let s = solve_dc_flow(&net, &topo, &islands, &[0.0, 50.0, -50.0], FlowMethod::Iterative).unwrap();
        assert_eq!(s.angles[0], 0.0);
        assert!((s.flows[1] - 50.0).abs() < 1e-9);
        let r = verify_flow(&s, &net, &topo, &islands, &[0.0, 50.0, -50.0]).unwrap();
        assert!(r.max_nodal_residual < 1e-9);
    }

    #[test]
    fn sensitivity_examples() {
        let mut m = fixtures::buses(2);
        m.lines.push(fixtures::line(1, 1, 2, 0.1, 100.0));
        let (net, topo, islands) = setup(m);
        let s = sensitivity_factors(&net, &topo, &islands, &[0], Some(&[1])).unwrap();
        assert!((s.factor(0, 0).unwrap() - 1.0).abs() < 1e-12);
        let s = sensitivity_factors(&net, &topo, &islands, &[0], Some(&[0])).unwrap();
        assert_eq!(s.factor(0, 0).unwrap(), 0.0);

        let (net, topo, islands) = setup(fixtures::triangle());
        let s = sensitivity_factors(&net, &topo, &islands, &[0, 2], Some(&[2])).unwrap();
        assert!((s.factor(0, 0).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.factor(2, 0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_service_scope_line_is_an_error() {
        let (net, _, _) = setup(fixtures::triangle());
        let topo = net.topology_from_ids(&[2, 3].into_iter().collect());
        let islands = connected_components(&net, &topo);
        let err = sensitivity_factors(&net, &topo, &islands, &[0], None).unwrap_err();
        assert!(matches!(err, Error::LineOutOfService(1)));
    }

    #[test]
    fn stale_factorization_is_rejected() {
        let (net, topo, islands) = setup(fixtures::triangle());
        let fact = DcFactorization::new(&net, &topo, &islands).unwrap();
        let other = net.topology_from_ids(&[1, 2].into_iter().collect());
        assert!(matches!(sensitivity_factors_from(&net, &other, &fact, &[0]), Err(Error::StaleSensitivity)));
    }

    #[test]
    fn perturbed_angles_show_residual() {
        let (net, topo, islands) = setup(fixtures::triangle());
        let inj = [90.0, -90.0, 0.0];
        let mut s = solve_dc_flow(&net, &topo, &islands, &inj, FlowMethod::Direct).unwrap();
        s.angles[1] += 0.5;
        let r = verify_flow(&s, &net, &topo, &islands, &inj).unwrap();
        assert!(r.max_nodal_residual > 1.0);
    }
}
