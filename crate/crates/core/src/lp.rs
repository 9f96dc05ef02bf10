//! Dense bounded-variable primal simplex.
//!
//! Solves `min c'x` subject to `a_i x (<=|=|>=) b_i` and `0 <= x <= u`
//! (`u` may be infinite). Two phases with artificial variables; Dantzig
//! pricing with a switch to Bland's rule after a run of degenerate pivots,
//! so the pivot sequence, and hence the returned vertex, is a deterministic
//! function of the input.
//!
//! Sized for the corrective problems of the operator model (hundreds of
//! columns); the tableau is stored densely.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn flipped(self) -> Self {
        match self {
            Relation::Le => Relation::Ge,
            Relation::Eq => Relation::Eq,
            Relation::Ge => Relation::Le,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub costs: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
    /// Optional column names for the text dump.
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpError {
    Infeasible { phase_one_objective: f64 },
    Unbounded,
    IterationLimit(usize),
    /// The final point violates a constraint by more than the tolerance.
    Numerical { max_violation: f64 },
}

impl std::fmt::Display for LpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LpError::Infeasible { phase_one_objective } => {
                write!(f, "infeasible (phase one stopped at {phase_one_objective:e})")
            }
            LpError::Unbounded => f.write_str("unbounded"),
            LpError::IterationLimit(n) => write!(f, "no convergence after {n} pivots"),
            LpError::Numerical { max_violation } => write!(f, "numerical failure, residual {max_violation:e}"),
        }
    }
}

impl std::error::Error for LpError {}

const PIVOT_TOL: f64 = 1e-10;
const DEGENERATE_RUN: usize = 50;

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        Self { costs: vec![0.0; n], upper: vec![f64::INFINITY; n], constraints: Vec::new(), names: Vec::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.n_vars());
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.costs.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of bounds or constraints at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, u) in x.iter().zip(&self.upper) {
            worst = worst.max(-v).max(v - u);
        }
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let d = lhs - c.rhs;
            worst = worst.max(match c.relation {
                Relation::Le => d,
                Relation::Ge => -d,
                Relation::Eq => d.abs(),
            });
        }
        worst
    }

    /// LP-format text, one constraint per line.
    pub fn to_text(&self) -> String {
        let name = |j: usize| self.names.get(j).cloned().unwrap_or_else(|| format!("x{j}"));
        let term_list = |coeffs: &[f64]| {
            let mut s = String::new();
            for (j, &a) in coeffs.iter().enumerate() {
                if a != 0.0 {
                    let sign = if a < 0.0 { '-' } else { '+' };
                    let _ = write!(s, " {sign} {} {}", a.abs(), name(j));
                }
            }
            if s.is_empty() {
                s.push_str(" 0");
            }
            s
        };
        let mut out = String::from("minimize\n obj:");
        out.push_str(&term_list(&self.costs));
        out.push_str("\nsubject to\n");
        for (i, c) in self.constraints.iter().enumerate() {
            let _ = writeln!(out, " c{i}:{} {} {}", term_list(&c.coeffs), c.relation.symbol(), c.rhs);
        }
        out.push_str("bounds\n");
        for (j, u) in self.upper.iter().enumerate() {
            if u.is_finite() {
                let _ = writeln!(out, " 0 <= {} <= {}", name(j), u);
            } else {
                let _ = writeln!(out, " {} >= 0", name(j));
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    m: usize,
    n_struct: usize,
    n_cols: usize,
    /// Row-major m x n_cols, holds B^-1 A.
    a: Vec<f64>,
    /// Values of the basic variables.
    beta: Vec<f64>,
    basis: Vec<usize>,
    upper: Vec<f64>,
    at_upper: Vec<bool>,
    artificial_start: usize,
    pivots: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.constraints.len();
        let n = lp.n_vars();
        let mut rows: Vec<(Vec<f64>, Relation, f64)> = lp
            .constraints
            .iter()
            .map(|c| {
                if c.rhs < 0.0 {
                    (c.coeffs.iter().map(|v| -v).collect(), c.relation.flipped(), -c.rhs)
                } else {
                    (c.coeffs.clone(), c.relation, c.rhs)
                }
            })
            .collect();
        let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let n_cols = n + n_slack + n_art;
        let artificial_start = n + n_slack;
        let mut a = vec![0.0; m * n_cols];
        let mut basis = vec![0; m];
        let mut beta = vec![0.0; m];
        let mut upper = lp.upper.clone();
        upper.extend(std::iter::repeat_n(f64::INFINITY, n_slack + n_art));
        let (mut s, mut art) = (n, artificial_start);
        for (i, (coeffs, rel, rhs)) in rows.iter_mut().enumerate() {
            a[i * n_cols..i * n_cols + n].copy_from_slice(coeffs);
            beta[i] = *rhs;
            match rel {
                Relation::Le => {
                    a[i * n_cols + s] = 1.0;
                    basis[i] = s;
                    s += 1;
                }
                Relation::Ge => {
                    a[i * n_cols + s] = -1.0;
                    s += 1;
                    a[i * n_cols + art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    a[i * n_cols + art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Self {
            m,
            n_struct: n,
            n_cols,
            a,
            beta,
            basis,
            upper,
            at_upper: vec![false; n_cols],
            artificial_start,
            pivots: 0,
        }
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let scale = lp.constraints.iter().map(|c| c.rhs.abs()).fold(1.0, f64::max);
        let feas_tol = 1e-9 * scale;
        let max_pivots = 50 * (self.m + self.n_cols) + 1000;

        if self.artificial_start < self.n_cols {
            let mut c1 = vec![0.0; self.n_cols];
            for c in &mut c1[self.artificial_start..] {
                *c = 1.0;
            }
            self.optimize(&c1, max_pivots, false)?;
            let infeas: f64 = self
                .basis
                .iter()
                .zip(&self.beta)
                .filter(|(&b, _)| b >= self.artificial_start)
                .map(|(_, v)| v)
                .sum();
            if infeas > feas_tol {
                return Err(LpError::Infeasible { phase_one_objective: infeas });
            }
            for j in self.artificial_start..self.n_cols {
                self.upper[j] = 0.0;
            }
            self.drive_out_artificials();
        }

        let mut c2 = vec![0.0; self.n_cols];
        c2[..self.n_struct].copy_from_slice(&lp.costs);
        self.optimize(&c2, max_pivots, true)?;

        let mut x = vec![0.0; self.n_struct];
        for j in 0..self.n_struct {
            if self.at_upper[j] {
                x[j] = self.upper[j];
            }
        }
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                x[b] = self.beta[i].clamp(0.0, self.upper[b]);
            }
        }
        let viol = lp.max_violation(&x);
        if viol > 1e-7 * scale {
            return Err(LpError::Numerical { max_violation: viol });
        }
        Ok(LpSolution { objective: lp.objective(&x), x, pivots: self.pivots })
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                let row = &self.a[i * self.n_cols..(i + 1) * self.n_cols];
                for (dj, aij) in d.iter_mut().zip(row) {
                    *dj -= cb * aij;
                }
            }
        }
        d
    }

    fn optimize(&mut self, cost: &[f64], max_pivots: usize, phase_two: bool) -> Result<(), LpError> {
        let cscale = cost.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        let dtol = 1e-9 * cscale;
        let mut degenerate = 0usize;
        let mut is_basic = vec![false; self.n_cols];
        for &b in &self.basis {
            is_basic[b] = true;
        }
        loop {
            if self.pivots >= max_pivots {
                return Err(LpError::IterationLimit(self.pivots));
            }
            let d = self.reduced_costs(cost);
            let bland = degenerate >= DEGENERATE_RUN;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.n_cols {
                if is_basic[j] || (phase_two && j >= self.artificial_start) {
                    continue;
                }
                let gain = if self.at_upper[j] { d[j] } else if self.upper[j] > 0.0 { -d[j] } else { 0.0 };
                if gain > dtol {
                    if bland {
                        entering = Some((j, gain));
                        break;
                    }
                    if entering.is_none_or(|(_, g)| gain > g) {
                        entering = Some((j, gain));
                    }
                }
            }
            let Some((q, _)) = entering else { return Ok(()) };
            let dir = if self.at_upper[q] { -1.0 } else { 1.0 };

            // Ratio test: entering moves by t >= 0 in direction `dir`.
            let mut t_best = self.upper[q];
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..self.m {
                let alpha = dir * self.a[i * self.n_cols + q];
                let b = self.basis[i];
                let (t, to_upper) = if alpha > PIVOT_TOL {
                    (self.beta[i].max(0.0) / alpha, false)
                } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                    ((self.upper[b] - self.beta[i]).max(0.0) / -alpha, true)
                } else {
                    continue;
                };
                // Ties with the bound flip favour the flip; ties between
                // rows favour the smallest basic index.
                let better = match leave {
                    None => t < t_best,
                    Some((r, _)) => t < t_best || (t == t_best && b < self.basis[r]),
                };
                if better {
                    t_best = t;
                    leave = Some((i, to_upper));
                }
            }
            if !t_best.is_finite() {
                return Err(LpError::Unbounded);
            }
            degenerate = if t_best <= PIVOT_TOL { degenerate + 1 } else { 0 };
            self.pivots += 1;
            for i in 0..self.m {
                let a = self.a[i * self.n_cols + q];
                if a != 0.0 {
                    self.beta[i] -= dir * a * t_best;
                }
            }
            match leave {
                None => {
                    self.at_upper[q] = !self.at_upper[q];
                }
                Some((r, to_upper)) => {
                    let entering_value = if self.at_upper[q] { self.upper[q] - t_best } else { t_best };
                    let out = self.basis[r];
                    self.pivot(r, q);
                    self.beta[r] = entering_value;
                    self.at_upper[out] = to_upper;
                    self.at_upper[q] = false;
                    is_basic[out] = false;
                    is_basic[q] = true;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let nc = self.n_cols;
        let p = self.a[r * nc + q];
        for v in &mut self.a[r * nc..(r + 1) * nc] {
            *v /= p;
        }
        let (head, rest) = self.a.split_at_mut(r * nc);
        let (prow, tail) = rest.split_at_mut(nc);
        for row in head.chunks_exact_mut(nc).chain(tail.chunks_exact_mut(nc)) {
            let f = row[q];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
                row[q] = 0.0;
            }
        }
        self.basis[r] = q;
    }

    /// Pivots zero-valued artificials out of the basis where a structural or
    /// slack column allows it; rows that stay artificial are redundant.
    fn drive_out_artificials(&mut self) {
        for r in 0..self.m {
            if self.basis[r] < self.artificial_start {
                continue;
            }
            let row = &self.a[r * self.n_cols..(r + 1) * self.n_cols];
            let candidate = (0..self.artificial_start)
                .filter(|&j| !self.basis.contains(&j))
                .find(|&j| row[j].abs() > 1e-7);
            if let Some(q) = candidate {
                let value = if self.at_upper[q] { self.upper[q] } else { 0.0 };
                let out = self.basis[r];
                self.pivot(r, q);
                self.at_upper[out] = false;
                self.at_upper[q] = false;
                // The artificial sat at zero, so the entering column keeps
                // its nonbasic value and no other basic value moves.
                self.beta[r] = value;
                self.pivots += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(costs: &[f64], upper: &[f64]) -> LinearProgram {
        LinearProgram { costs: costs.to_vec(), upper: upper.to_vec(), constraints: Vec::new(), names: Vec::new() }
    }

    #[test]
    fn textbook_maximisation() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut p = lp(&[-3.0, -5.0], &[f64::INFINITY; 2]);
        p.add(vec![1.0, 0.0], Relation::Le, 4.0);
        p.add(vec![0.0, 2.0], Relation::Le, 12.0);
        p.add(vec![3.0, 2.0], Relation::Le, 18.0);
        let s = p.solve().unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
        assert!((s.objective + 36.0).abs() < 1e-9);
    }

    #[test]
    fn upper_bounds_flip_without_rows() {
        let mut p = lp(&[-1.0, -2.0], &[3.0, 1.0]);
        p.add(vec![1.0, 1.0], Relation::Le, 10.0);
        let s = p.solve().unwrap();
        assert_eq!(s.x, vec![3.0, 1.0]);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + y, x + y = 5, x >= 2, y >= 1
        let mut p = lp(&[1.0, 2.0], &[f64::INFINITY; 2]);
        p.add(vec![1.0, 1.0], Relation::Eq, 5.0);
        p.add(vec![1.0, 0.0], Relation::Ge, 2.0);
        p.add(vec![0.0, 1.0], Relation::Ge, 1.0);
        let s = p.solve().unwrap();
        assert!((s.x[0] - 4.0).abs() < 1e-9 && (s.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_is_normalised() {
        // min x, -x <= -3
        let mut p = lp(&[1.0], &[10.0]);
        p.add(vec![-1.0], Relation::Le, -3.0);
        let s = p.solve().unwrap();
        assert!((s.x[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut p = lp(&[1.0], &[1.0]);
        p.add(vec![1.0], Relation::Ge, 2.0);
        assert!(matches!(p.solve(), Err(LpError::Infeasible { .. })));

        let mut p = lp(&[-1.0, 0.0], &[f64::INFINITY; 2]);
        p.add(vec![1.0, -1.0], Relation::Le, 1.0);
        assert_eq!(p.solve(), Err(LpError::Unbounded));
    }

    #[test]
    fn redundant_equalities() {
        let mut p = lp(&[1.0, 1.0], &[f64::INFINITY; 2]);
        p.add(vec![1.0, 1.0], Relation::Eq, 2.0);
        p.add(vec![2.0, 2.0], Relation::Eq, 4.0);
        let s = p.solve().unwrap();
        assert!((s.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example.
        let mut p = lp(&[-0.75, 150.0, -0.02, 6.0], &[f64::INFINITY; 4]);
        p.add(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0);
        p.add(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0);
        p.add(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        let s = p.solve().unwrap();
        assert!((s.objective + 0.05).abs() < 1e-9, "{}", s.objective);
    }

    #[test]
    fn same_input_same_vertex() {
        // Many optimal vertices: min 0 subject to x + y + z = 1.
        let mut p = lp(&[0.0; 3], &[1.0; 3]);
        p.add(vec![1.0; 3], Relation::Eq, 1.0);
        let a = p.solve().unwrap();
        let b = p.solve().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn text_dump_lists_every_row() {
        let mut p = lp(&[1.0, -2.0], &[5.0, f64::INFINITY]);
        p.names = vec!["u".into(), "v".into()];
        p.add(vec![1.0, 1.0], Relation::Eq, 3.0);
        let t = p.to_text();
        assert!(t.contains("obj: + 1 u - 2 v"));
        assert!(t.contains("c0: + 1 u + 1 v = 3"));
        assert!(t.contains("0 <= u <= 5"));
        assert!(t.contains("v >= 0"));
    }
}
