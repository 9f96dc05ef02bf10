//! Corrective redispatch and load shedding for a line overload.
//!
//! The operator's remedy is a linear program on the target line's island:
//! minimise distance-weighted generator movement plus heavily weighted load
//! shedding, keep generation and demand in balance, respect unit limits and
//! bring the target and every other overloaded line in scope down to
//! `xi * rating`, using the linear sensitivity factors of the live topology.
//! Lines in scope that are not overloaded may not end up loaded above
//! `max(xi * rating, |current flow|)`, so a correction never creates a new
//! overload. Generator changes are split as
//! `dP = up - down` so the absolute value in the objective stays linear.
//!
//! Shedding `dD` at a bus raises that bus's net injection by `dD`, which is
//! what makes the balance row and the flow rows agree.

use crate::error::Result;
use crate::lp::{LinearProgram, LpError, Relation};
use crate::model::{Islands, Network, Topology};
use crate::powerflow::{sensitivity_factors_from, DcFactorization};

pub const WEIGHT_NEAR: f64 = 1.0;
pub const WEIGHT_ADJACENT: f64 = 10.0;
pub const WEIGHT_FAR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectiveScope {
    /// Overloaded tie-line between two areas (area indices).
    TieLine(usize, usize),
    /// Overloaded line inside one area.
    IntraArea(usize),
}

impl CorrectiveScope {
    pub fn of_line(net: &Network, line: usize) -> Self {
        let (f, t) = net.line_ends(line);
        let (a, b) = (net.bus_area(f), net.bus_area(t));
        if a == b {
            CorrectiveScope::IntraArea(a)
        } else {
            CorrectiveScope::TieLine(a.min(b), a.max(b))
        }
    }

    fn covers_area(self, area: usize) -> bool {
        match self {
            CorrectiveScope::TieLine(a, b) => area == a || area == b,
            CorrectiveScope::IntraArea(a) => area == a,
        }
    }
}

/// Snapshot of the operating point the operator acts on.
#[derive(Debug, Clone, Copy)]
pub struct OperatingPoint<'a> {
    pub topology: &'a Topology,
    pub islands: &'a Islands,
    /// MW per line.
    pub flows: &'a [f64],
    /// MW per generator.
    pub outputs: &'a [f64],
    /// In-service flag per generator.
    pub available: &'a [bool],
    /// Served demand per load, MW.
    pub demands: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectiveLpProblem {
    pub target: usize,
    pub scope: CorrectiveScope,
    pub xi: f64,
    pub shed_weight: f64,
    /// Distance weight per bus (whole network; off-island entries unused).
    pub bus_weights: Vec<f64>,
    /// Generator indices with their bus, output and capacity.
    pub generators: Vec<usize>,
    pub generator_bus: Vec<usize>,
    pub outputs: Vec<f64>,
    pub capacities: Vec<f64>,
    pub loads: Vec<usize>,
    pub load_bus: Vec<usize>,
    pub demands: Vec<f64>,
    /// Constrained lines with flow, limit and sensitivity row per bus.
    pub lines: Vec<usize>,
    pub flows: Vec<f64>,
    pub limits: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    /// Display ids for the text dump.
    pub generator_ids: Vec<u32>,
    pub load_ids: Vec<u32>,
    pub line_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal,
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectiveLpSolution {
    pub status: LpStatus,
    /// MW change per problem generator.
    pub delta_p: Vec<f64>,
    /// MW shed per problem load.
    pub delta_d: Vec<f64>,
    pub objective: f64,
}

impl CorrectiveLpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn total_shed(&self) -> f64 {
        self.delta_d.iter().sum()
    }
}

/// Distance weights for an overload on `target`.
///
/// Tie-line: 1 at both ends, 10 one in-service line away, 100 elsewhere.
/// Intra-area: 1 inside the area, 100 outside.
pub fn bus_weights(net: &Network, topo: &Topology, target: usize) -> Vec<f64> {
    match CorrectiveScope::of_line(net, target) {
        CorrectiveScope::IntraArea(area) => (0..net.n_buses())
            .map(|b| if net.bus_area(b) == area { WEIGHT_NEAR } else { WEIGHT_FAR })
            .collect(),
        CorrectiveScope::TieLine(..) => {
            let mut w = vec![WEIGHT_FAR; net.n_buses()];
            let (f, t) = net.line_ends(target);
            for end in [f, t] {
                for &(l, other) in net.incident(end) {
                    if topo.in_service[l] {
                        w[other] = WEIGHT_ADJACENT;
                    }
                }
            }
            w[f] = WEIGHT_NEAR;
            w[t] = WEIGHT_NEAR;
            w
        }
    }
}

pub fn build_problem(
    net: &Network,
    point: OperatingPoint<'_>,
    factorization: &DcFactorization,
    target: usize,
) -> Result<CorrectiveLpProblem> {
    let params = net.params();
    let scope = CorrectiveScope::of_line(net, target);
    let island = point.islands.island_of[net.line_ends(target).0];
    let on_island = |b: usize| point.islands.island_of[b] == island;

    let mut lines = vec![target];
    for l in 0..net.n_lines() {
        let (f, t) = net.line_ends(l);
        if l != target
            && point.topology.in_service[l]
            && on_island(f)
            && scope.covers_area(net.bus_area(f))
            && scope.covers_area(net.bus_area(t))
        {
            lines.push(l);
        }
    }
    let sens = sensitivity_factors_from(net, point.topology, factorization, &lines)?;
    let rows: Vec<Vec<f64>> = lines.iter().map(|&l| sens.row(l).expect("row computed").to_vec()).collect();

    let generators: Vec<usize> = (0..net.n_generators())
        .filter(|&g| point.available[g] && on_island(net.generator_bus(g)))
        .collect();
    let loads: Vec<usize> = (0..net.n_loads())
        .filter(|&i| {
            let b = net.load_bus(i);
            point.demands[i] > 0.0
                && on_island(b)
                && match scope {
                    CorrectiveScope::IntraArea(a) => net.bus_area(b) == a,
                    CorrectiveScope::TieLine(..) => true,
                }
        })
        .collect();

    Ok(CorrectiveLpProblem {
        target,
        scope,
        xi: params.xi,
        shed_weight: params.shed_weight,
        bus_weights: bus_weights(net, point.topology, target),
        generator_bus: generators.iter().map(|&g| net.generator_bus(g)).collect(),
        outputs: generators.iter().map(|&g| point.outputs[g]).collect(),
        capacities: generators.iter().map(|&g| net.generator(g).capacity_mw).collect(),
        generator_ids: generators.iter().map(|&g| net.generator(g).id).collect(),
        generators,
        load_bus: loads.iter().map(|&i| net.load_bus(i)).collect(),
        demands: loads.iter().map(|&i| point.demands[i]).collect(),
        load_ids: loads.iter().map(|&i| net.load(i).id).collect(),
        loads,
        flows: lines.iter().map(|&l| point.flows[l]).collect(),
        limits: lines
            .iter()
            .map(|&l| {
                let rating = net.line(l).rating_mw;
                let flow = point.flows[l].abs();
                if l == target || flow >= rating {
                    params.xi * rating
                } else {
                    (params.xi * rating).max(flow)
                }
            })
            .collect(),
        line_ids: lines.iter().map(|&l| net.line(l).id).collect(),
        lines,
        rows,
    })
}

impl CorrectiveLpProblem {
    fn n_gen(&self) -> usize {
        self.generators.len()
    }

    /// Column layout: `[up_0, down_0, up_1, down_1, ..., shed_0, shed_1, ...]`.
    pub fn to_linear_program(&self) -> LinearProgram {
        let ng = self.n_gen();
        let n = 2 * ng + self.loads.len();
        let mut lp = LinearProgram::new(n);
        for (k, &b) in self.generator_bus.iter().enumerate() {
            let w = self.bus_weights[b];
            lp.costs[2 * k] = w;
            lp.costs[2 * k + 1] = w;
            lp.upper[2 * k] = (self.capacities[k] - self.outputs[k]).max(0.0);
            lp.upper[2 * k + 1] = self.outputs[k].max(0.0);
            lp.names.push(format!("g{}_up", self.generator_ids[k]));
            lp.names.push(format!("g{}_down", self.generator_ids[k]));
        }
        for (k, &b) in self.load_bus.iter().enumerate() {
            lp.costs[2 * ng + k] = self.bus_weights[b] * self.shed_weight;
            lp.upper[2 * ng + k] = self.demands[k].max(0.0);
            lp.names.push(format!("d{}", self.load_ids[k]));
        }

        let mut balance = vec![0.0; n];
        for k in 0..ng {
            balance[2 * k] = 1.0;
            balance[2 * k + 1] = -1.0;
        }
        for v in &mut balance[2 * ng..] {
            *v = 1.0;
        }
        lp.add(balance, Relation::Eq, 0.0);

        for (r, row) in self.rows.iter().enumerate() {
            let mut coeffs = vec![0.0; n];
            for (k, &b) in self.generator_bus.iter().enumerate() {
                coeffs[2 * k] = row[b];
                coeffs[2 * k + 1] = -row[b];
            }
            for (k, &b) in self.load_bus.iter().enumerate() {
                coeffs[2 * ng + k] = row[b];
            }
            let neg: Vec<f64> = coeffs.iter().map(|v| -v).collect();
            lp.add(coeffs, Relation::Le, self.limits[r] - self.flows[r]);
            lp.add(neg, Relation::Le, self.limits[r] + self.flows[r]);
        }
        lp
    }

    /// Flows on the constrained lines after applying `solution`.
    pub fn predicted_flows(&self, delta_p: &[f64], delta_d: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.flows)
            .map(|(row, f)| {
                let dp: f64 = self.generator_bus.iter().zip(delta_p).map(|(&b, d)| row[b] * d).sum();
                let dd: f64 = self.load_bus.iter().zip(delta_d).map(|(&b, d)| row[b] * d).sum();
                f + dp + dd
            })
            .collect()
    }

    pub fn objective(&self, delta_p: &[f64], delta_d: &[f64]) -> f64 {
        let p: f64 = self.generator_bus.iter().zip(delta_p).map(|(&b, d)| self.bus_weights[b] * d.abs()).sum();
        let d: f64 =
            self.load_bus.iter().zip(delta_d).map(|(&b, d)| self.bus_weights[b] * self.shed_weight * d).sum();
        p + d
    }

    /// Plain-text dump: a comment header naming the target line followed by
    /// the program in LP format.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "\\ corrective LP, FORMAT v1\n\\ target line {}\n\\ scope {:?}\n\\ constrained lines {:?}\n",
            self.line_ids[0], self.scope, self.line_ids
        );
        s.push_str(&self.to_linear_program().to_text());
        s
    }
}

pub fn solve(problem: &CorrectiveLpProblem) -> CorrectiveLpSolution {
    let ng = problem.n_gen();
    let lp = problem.to_linear_program();
    match lp.solve() {
        Ok(sol) => {
            let delta_p: Vec<f64> = (0..ng).map(|k| sol.x[2 * k] - sol.x[2 * k + 1]).collect();
            let delta_d = sol.x[2 * ng..].to_vec();
            CorrectiveLpSolution { status: LpStatus::Optimal, delta_p, delta_d, objective: sol.objective }
        }
        Err(e) => {
            let msg = match e {
                LpError::Infeasible { .. } => format!("infeasible: {e}"),
                other => format!("solver failure: {other}"),
            };
            CorrectiveLpSolution {
                status: LpStatus::Infeasible(msg),
                delta_p: vec![0.0; ng],
                delta_d: vec![0.0; problem.loads.len()],
                objective: f64::NAN,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport {
    pub balance_residual: f64,
    pub bound_violation: f64,
    /// Largest predicted |flow| above its limit (zero when all hold).
    pub line_excess: f64,
}

impl ConstraintReport {
    pub const TOLERANCE: f64 = 1e-6;

    pub fn passes(&self) -> bool {
        self.balance_residual <= Self::TOLERANCE
            && self.bound_violation <= Self::TOLERANCE
            && self.line_excess <= Self::TOLERANCE
    }
}

pub fn verify_solution(problem: &CorrectiveLpProblem, solution: &CorrectiveLpSolution) -> ConstraintReport {
    let balance_residual = (solution.delta_p.iter().sum::<f64>() + solution.delta_d.iter().sum::<f64>()).abs();
    let mut bound_violation: f64 = 0.0;
    for (k, &d) in solution.delta_p.iter().enumerate() {
        bound_violation = bound_violation.max(-problem.outputs[k] - d).max(d - (problem.capacities[k] - problem.outputs[k]));
    }
    for (k, &d) in solution.delta_d.iter().enumerate() {
        bound_violation = bound_violation.max(-d).max(d - problem.demands[k]);
    }
    let line_excess = problem
        .predicted_flows(&solution.delta_p, &solution.delta_d)
        .iter()
        .zip(&problem.limits)
        .map(|(f, lim)| (f.abs() - lim).max(0.0))
        .fold(0.0, f64::max);
    ConstraintReport { balance_residual, bound_violation, line_excess }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{connected_components, fixtures, ControlArea, Load};
    use crate::powerflow::{solve_dc_flow, FlowMethod};

    struct Case {
        net: Network,
        topo: Topology,
        islands: Islands,
        outputs: Vec<f64>,
        demands: Vec<f64>,
        flows: Vec<f64>,
    }

    impl Case {
        fn new(model: crate::model::NetworkModel, outputs: Vec<f64>) -> Self {
            let net = Network::new(model).unwrap();
            let topo = Topology::all_in_service(net.n_lines());
            let islands = connected_components(&net, &topo);
            let demands: Vec<f64> = net.model().loads.iter().map(|l| l.peak_demand_mw).collect();
            let mut inj = vec![0.0; net.n_buses()];
            for (g, p) in outputs.iter().enumerate() {
                inj[net.generator_bus(g)] += p;
            }
            for (i, d) in demands.iter().enumerate() {
                inj[net.load_bus(i)] -= d;
            }
            let flows = solve_dc_flow(&net, &topo, &islands, &inj, FlowMethod::Direct).unwrap().flows;
            Self { net, topo, islands, outputs, demands, flows }
        }

        fn problem(&self, target: usize) -> CorrectiveLpProblem {
            let avail = vec![true; self.net.n_generators()];
            let point = OperatingPoint {
                topology: &self.topo,
                islands: &self.islands,
                flows: &self.flows,
                outputs: &self.outputs,
                available: &avail,
                demands: &self.demands,
            };
            let fact = DcFactorization::new(&self.net, &self.topo, &self.islands).unwrap();
            build_problem(&self.net, point, &fact, target).unwrap()
        }
    }

    fn load(id: u32, bus: u32, d: f64) -> Load {
        Load { id, bus, peak_demand_mw: d }
    }

    #[test]
    fn two_bus_overload_needs_shedding() {
        let mut m = fixtures::buses(2);
        m.lines.push(fixtures::line(1, 1, 2, 0.1, 90.0));
        m.generators.push(fixtures::gen(1, 1, 150.0, 1));
        m.loads.push(load(1, 2, 100.0));
        let case = Case::new(m, vec![100.0]);
        let p = case.problem(0);
        let s = solve(&p);
        assert!(s.is_optimal());
        assert!((s.delta_d[0] - 28.0).abs() < 1e-9, "{:?}", s);
        assert!((s.delta_p[0] + 28.0).abs() < 1e-9);
        assert!(verify_solution(&p, &s).passes());
        let after = p.predicted_flows(&s.delta_p, &s.delta_d);
        assert!((after[0] - 72.0).abs() < 1e-9);
    }

    #[test]
    fn three_bus_redispatch_avoids_shedding() {
        let mut m = fixtures::buses(3);
        m.lines.push(fixtures::line(1, 1, 2, 0.1, 90.0));
        m.lines.push(fixtures::line(2, 2, 3, 0.1, 200.0));
        m.generators.push(fixtures::gen(1, 1, 150.0, 1));
        m.generators.push(fixtures::gen(2, 3, 150.0, 2));
        m.loads.push(load(1, 2, 100.0));
        let case = Case::new(m, vec![100.0, 0.0]);
        let p = case.problem(0);
        let s = solve(&p);
        assert!(s.is_optimal());
        assert_eq!(s.total_shed(), 0.0);
        assert!((s.delta_p[0] + 28.0).abs() < 1e-9);
        assert!((s.delta_p[1] - 28.0).abs() < 1e-9);
        assert!(verify_solution(&p, &s).passes());
    }

    #[test]
    fn feasible_point_gives_zero_action() {
        let mut m = fixtures::buses(2);
        m.lines.push(fixtures::line(1, 1, 2, 0.1, 200.0));
        m.generators.push(fixtures::gen(1, 1, 150.0, 1));
        m.loads.push(load(1, 2, 100.0));
        let case = Case::new(m, vec![100.0]);
        let s = solve(&case.problem(0));
        assert!(s.is_optimal());
        assert_eq!(s.objective, 0.0);
        assert!(s.delta_p.iter().chain(&s.delta_d).all(|&v| v == 0.0));
    }

    #[test]
    fn unremovable_overload_is_infeasible() {
        // A single unit and no sheddable demand: balance pins the
        // generator, so the flow cannot move below 72.
        let mut m = fixtures::buses(2);
        m.lines.push(fixtures::line(1, 1, 2, 0.1, 90.0));
        m.generators.push(fixtures::gen(1, 1, 100.0, 1));
        m.loads.push(load(1, 2, 100.0));
        let case = Case::new(m, vec![100.0]);
        let mut p = case.problem(0);
        p.demands[0] = 0.0;
        let s = solve(&p);
        assert!(matches!(s.status, LpStatus::Infeasible(_)));
    }

    fn two_area_chain() -> crate::model::NetworkModel {
        // 1 - 2 | 3 - 4 with the 2-3 line tying area 1 to area 2.
        let mut m = fixtures::buses(4);
        m.areas.push(ControlArea { id: 2, contact_delay_min: 2.0, response_delay_min: 15.0 });
        m.buses[2].area = 2;
        m.buses[3].area = 2;
        m.lines.push(fixtures::line(1, 1, 2, 0.1, 500.0));
        m.lines.push(fixtures::line(2, 2, 3, 0.1, 500.0));
        m.lines.push(fixtures::line(3, 3, 4, 0.1, 500.0));
        m
    }

    #[test]
    fn tie_line_weights() {
        let net = Network::new(two_area_chain()).unwrap();
        let topo = Topology::all_in_service(3);
        assert_eq!(bus_weights(&net, &topo, 1), vec![10.0, 1.0, 1.0, 10.0]);
        let topo = net.topology_from_ids(&[2, 3].into_iter().collect());
        assert_eq!(bus_weights(&net, &topo, 1), vec![100.0, 1.0, 1.0, 10.0]);
    }

    #[test]
    fn intra_area_weights_and_load_scope() {
        let mut m = two_area_chain();
        m.generators.push(fixtures::gen(1, 1, 300.0, 1));
        m.generators.push(fixtures::gen(2, 4, 300.0, 1));
        m.loads.push(load(1, 2, 50.0));
        m.loads.push(load(2, 3, 50.0));
        let case = Case::new(m, vec![50.0, 50.0]);
        assert_eq!(bus_weights(&case.net, &case.topo, 0), vec![1.0, 1.0, 100.0, 100.0]);
        let p = case.problem(0);
        assert_eq!(p.scope, CorrectiveScope::IntraArea(0));
        assert_eq!(p.loads, vec![0]);
        assert_eq!(p.lines, vec![0]);
        let p = case.problem(1);
        assert_eq!(p.scope, CorrectiveScope::TieLine(0, 1));
        assert_eq!(p.loads, vec![0, 1]);
        assert_eq!(p.lines, vec![1, 0, 2]);
    }

    #[test]
    fn stale_factorization_is_rejected() {
        let mut m = fixtures::triangle();
        m.generators.push(fixtures::gen(1, 1, 300.0, 1));
        m.loads.push(load(1, 3, 100.0));
        let case = Case::new(m, vec![100.0]);
        let fact = DcFactorization::new(&case.net, &case.topo, &case.islands).unwrap();
        let topo = case.net.topology_from_ids(&[1, 2].into_iter().collect());
        let islands = connected_components(&case.net, &topo);
        let point = OperatingPoint {
            topology: &topo,
            islands: &islands,
            flows: &case.flows,
            outputs: &case.outputs,
            available: &[true],
            demands: &case.demands,
        };
        assert!(build_problem(&case.net, point, &fact, 0).is_err());
    }

    #[test]
    fn perturbed_solution_is_flagged() {
        let mut m = fixtures::buses(2);
        m.lines.push(fixtures::line(1, 1, 2, 0.1, 90.0));
        m.generators.push(fixtures::gen(1, 1, 150.0, 1));
        m.loads.push(load(1, 2, 100.0));
        let case = Case::new(m, vec![100.0]);
        let p = case.problem(0);
        let mut s = solve(&p);
        s.delta_d[0] -= 1.0;
        assert!(!verify_solution(&p, &s).passes());
    }

    #[test]
    fn solution_is_deterministic_and_dump_names_columns() {
        let mut m = fixtures::triangle();
        m.generators.push(fixtures::gen(1, 1, 300.0, 1));
        m.generators.push(fixtures::gen(2, 2, 300.0, 1));
        m.loads.push(load(1, 3, 150.0));
        let case = Case::new(m, vec![150.0, 0.0]);
        let p = case.problem(2);
        assert_eq!(solve(&p), solve(&p));
        let text = p.to_text();
        assert!(text.contains("g1_up") && text.contains("d1"));
        assert!(text.starts_with("\\ corrective LP, FORMAT v1"));
    }
}
