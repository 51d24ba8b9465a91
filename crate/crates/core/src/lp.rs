//! Dense two-phase primal simplex with Bland's rule.
//!
//! Problems are small (at most a few hundred columns), so a dense tableau is
//! used. Variables carry optional lower and upper bounds; rows are `<=`, `>=`
//! or `==` constraints. The solver either proves infeasibility, returns a
//! feasible point (optionally minimising a linear objective), or reports an
//! unbounded objective.

use thiserror::Error;

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Infeasible,
    /// Feasible point and objective value (0 when no objective was set).
    Optimal {
        x: Vec<f64>,
        objective: f64,
    },
    Unbounded,
}

impl LpOutcome {
    pub fn point(&self) -> Option<&[f64]> {
        match self {
            LpOutcome::Optimal { x, .. } => Some(x),
            _ => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        !matches!(self, LpOutcome::Infeasible)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("variable {var} has empty bounds [{lower}, {upper}]")]
    EmptyBounds { var: usize, lower: f64, upper: f64 },
    #[error("coefficient refers to variable {var} but the program has {n_vars} variables")]
    UnknownVariable { var: usize, n_vars: usize },
    #[error("non-finite coefficient or right-hand side")]
    NonFinite,
}

/// A linear program over `n_vars` bounded variables.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    n_vars: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
    objective: Option<Vec<f64>>,
}

impl LinearProgram {
    /// All variables start free.
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            lower: vec![f64::NEG_INFINITY; n_vars],
            upper: vec![f64::INFINITY; n_vars],
            rows: Vec::new(),
            objective: None,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(Row { coeffs, sense, rhs });
    }

    /// Minimise `c·x`.
    pub fn set_objective(&mut self, c: Vec<f64>) {
        self.objective = Some(c);
    }

    pub fn solve(&self) -> Result<LpOutcome, LpError> {
        Standard::build(self)?.solve(self)
    }
}

/// How an original variable is expressed in standard-form columns.
#[derive(Debug, Clone, Copy)]
enum ColMap {
    /// x = offset + col
    Shift { col: usize, offset: f64 },
    /// x = offset - col
    Flip { col: usize, offset: f64 },
    /// x = pos - neg
    Split { pos: usize, neg: usize },
    /// x fixed to a value (lower == upper)
    Fixed(f64),
}

struct Standard {
    /// Rows as dense coefficient vectors over structural columns.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    sense: Vec<Sense>,
    n_struct: usize,
    maps: Vec<ColMap>,
    cost: Vec<f64>,
}

impl Standard {
    fn build(lp: &LinearProgram) -> Result<Self, LpError> {
        let mut maps = Vec::with_capacity(lp.n_vars);
        let mut n_struct = 0;
        let mut extra_rows: Vec<(usize, f64)> = Vec::new();
        for v in 0..lp.n_vars {
            let (l, u) = (lp.lower[v], lp.upper[v]);
            if l.is_nan() || u.is_nan() {
                return Err(LpError::NonFinite);
            }
            if l > u + FEAS_TOL {
                return Err(LpError::EmptyBounds {
                    var: v,
                    lower: l,
                    upper: u,
                });
            }
            let map = if l.is_finite() && u.is_finite() && (u - l).abs() <= FEAS_TOL {
                ColMap::Fixed(0.5 * (l + u))
            } else if l.is_finite() {
                let col = n_struct;
                n_struct += 1;
                if u.is_finite() {
                    extra_rows.push((col, u - l));
                }
                ColMap::Shift { col, offset: l }
            } else if u.is_finite() {
                let col = n_struct;
                n_struct += 1;
                ColMap::Flip { col, offset: u }
            } else {
                let pos = n_struct;
                n_struct += 2;
                ColMap::Split { pos, neg: pos + 1 }
            };
            maps.push(map);
        }

        let mut a = Vec::with_capacity(lp.rows.len() + extra_rows.len());
        let mut b = Vec::new();
        let mut sense = Vec::new();
        for row in &lp.rows {
            if !row.rhs.is_finite() {
                return Err(LpError::NonFinite);
            }
            let mut dense = vec![0.0; n_struct];
            let mut rhs = row.rhs;
            for &(v, c) in &row.coeffs {
                if v >= lp.n_vars {
                    return Err(LpError::UnknownVariable {
                        var: v,
                        n_vars: lp.n_vars,
                    });
                }
                if !c.is_finite() {
                    return Err(LpError::NonFinite);
                }
                match maps[v] {
                    ColMap::Shift { col, offset } => {
                        dense[col] += c;
                        rhs -= c * offset;
                    }
                    ColMap::Flip { col, offset } => {
                        dense[col] -= c;
                        rhs -= c * offset;
                    }
                    ColMap::Split { pos, neg } => {
                        dense[pos] += c;
                        dense[neg] -= c;
                    }
                    ColMap::Fixed(val) => rhs -= c * val,
                }
            }
            a.push(dense);
            b.push(rhs);
            sense.push(row.sense);
        }
        for (col, width) in extra_rows {
            let mut dense = vec![0.0; n_struct];
            dense[col] = 1.0;
            a.push(dense);
            b.push(width);
            sense.push(Sense::Le);
        }

        let mut cost = vec![0.0; n_struct];
        if let Some(c) = &lp.objective {
            for (v, &cv) in c.iter().enumerate().take(lp.n_vars) {
                match maps[v] {
                    ColMap::Shift { col, .. } => cost[col] += cv,
                    ColMap::Flip { col, .. } => cost[col] -= cv,
                    ColMap::Split { pos, neg } => {
                        cost[pos] += cv;
                        cost[neg] -= cv;
                    }
                    ColMap::Fixed(_) => {}
                }
            }
        }
        Ok(Self {
            a,
            b,
            sense,
            n_struct,
            maps,
            cost,
        })
    }

    fn solve(self, lp: &LinearProgram) -> Result<LpOutcome, LpError> {
        let m = self.a.len();
        // Column layout: structural | slack/surplus (one per inequality) | artificial.
        let n_slack = self.sense.iter().filter(|s| **s != Sense::Eq).count();
        let mut n_art = 0;
        let mut row_plan = Vec::with_capacity(m);
        let mut slack_idx = 0;
        for i in 0..m {
            let flip = self.b[i] < 0.0;
            let sense = match (self.sense[i], flip) {
                (Sense::Le, true) => Sense::Ge,
                (Sense::Ge, true) => Sense::Le,
                (s, _) => s,
            };
            let slack = if self.sense[i] != Sense::Eq {
                slack_idx += 1;
                Some(slack_idx - 1)
            } else {
                None
            };
            let needs_art = sense != Sense::Le;
            if needs_art {
                n_art += 1;
            }
            row_plan.push((flip, sense, slack, needs_art));
        }
        let n_cols = self.n_struct + n_slack + n_art;
        let width = n_cols + 1;
        let mut t = Tableau {
            data: vec![0.0; (m + 1) * width],
            width,
            m,
            basis: vec![0; m],
        };
        let mut art_col = self.n_struct + n_slack;
        for i in 0..m {
            let (flip, sense, slack, needs_art) = row_plan[i];
            let sign = if flip { -1.0 } else { 1.0 };
            for j in 0..self.n_struct {
                t.set(i, j, sign * self.a[i][j]);
            }
            t.set(i, n_cols, sign * self.b[i]);
            if let Some(s) = slack {
                // Slack enters with +1 for <= rows and -1 for >= rows, in the flipped frame.
                let coef = match sense {
                    Sense::Le => 1.0,
                    _ => -1.0,
                };
                t.set(i, self.n_struct + s, coef);
                if sense == Sense::Le {
                    t.basis[i] = self.n_struct + s;
                }
            }
            if needs_art {
                t.set(i, art_col, 1.0);
                t.basis[i] = art_col;
                art_col += 1;
            }
        }
        let first_art = self.n_struct + n_slack;

        // Phase 1: minimise the sum of artificials.
        if n_art > 0 {
            let mut c1 = vec![0.0; n_cols];
            for c in c1.iter_mut().skip(first_art) {
                *c = 1.0;
            }
            t.load_cost(&c1);
            t.run(n_cols, |_| true);
            let infeas = -t.get(m, n_cols);
            let scale = 1.0 + self.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if infeas > FEAS_TOL * scale {
                return Ok(LpOutcome::Infeasible);
            }
            t.expel_artificials(first_art);
        }

        // Phase 2 on structural + slack columns only.
        let mut c2 = vec![0.0; n_cols];
        c2[..self.n_struct].copy_from_slice(&self.cost);
        t.load_cost(&c2);
        let bounded = t.run(n_cols, |j| j < first_art);
        if !bounded {
            return Ok(LpOutcome::Unbounded);
        }

        let mut col_val = vec![0.0; self.n_struct];
        for i in 0..m {
            let bcol = t.basis[i];
            if bcol < self.n_struct {
                col_val[bcol] = t.get(i, n_cols);
            }
        }
        let mut x = vec![0.0; lp.n_vars];
        for (v, map) in self.maps.iter().enumerate() {
            x[v] = match *map {
                ColMap::Shift { col, offset } => offset + col_val[col],
                ColMap::Flip { col, offset } => offset - col_val[col],
                ColMap::Split { pos, neg } => col_val[pos] - col_val[neg],
                ColMap::Fixed(val) => val,
            };
        }
        let objective = match &lp.objective {
            Some(c) => c.iter().zip(&x).map(|(a, b)| a * b).sum(),
            None => 0.0,
        };
        Ok(LpOutcome::Optimal { x, objective })
    }
}

struct Tableau {
    data: Vec<f64>,
    width: usize,
    m: usize,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.width + j] = v;
    }

    /// Write reduced costs for `c` into the objective row given the current basis.
    fn load_cost(&mut self, c: &[f64]) {
        let m = self.m;
        let w = self.width;
        for j in 0..w {
            self.data[m * w + j] = if j < c.len() { c[j] } else { 0.0 };
        }
        for i in 0..m {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    let v = self.data[i * w + j];
                    self.data[m * w + j] -= cb * v;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.get(r, c);
        for j in 0..w {
            self.data[r * w + j] /= p;
        }
        self.data[r * w + c] = 1.0;
        for i in 0..=self.m {
            if i == r {
                continue;
            }
            let f = self.data[i * w + c];
            if f != 0.0 {
                for j in 0..w {
                    let v = self.data[r * w + j];
                    self.data[i * w + j] -= f * v;
                }
                self.data[i * w + c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Bland's rule iterations. Returns false if the objective is unbounded.
    fn run(&mut self, n_cols: usize, allowed: impl Fn(usize) -> bool) -> bool {
        let m = self.m;
        loop {
            let entering = (0..n_cols).find(|&j| allowed(j) && self.get(m, j) < -COST_TOL);
            let Some(c) = entering else {
                return true;
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..m {
                let a = self.get(i, c);
                if a > PIVOT_TOL {
                    let ratio = self.get(i, n_cols) / a;
                    let cand = (ratio, self.basis[i], i);
                    best = match best {
                        None => Some(cand),
                        Some(b) => {
                            if ratio < b.0 - 1e-12 || ((ratio - b.0).abs() <= 1e-12 && cand.1 < b.1)
                            {
                                Some(cand)
                            } else {
                                Some(b)
                            }
                        }
                    };
                }
            }
            match best {
                None => return false,
                Some((_, _, r)) => self.pivot(r, c),
            }
        }
    }

    /// Pivot remaining (zero-valued) artificials out of the basis where possible.
    fn expel_artificials(&mut self, first_art: usize) {
        for i in 0..self.m {
            if self.basis[i] >= first_art {
                if let Some(c) = (0..first_art).find(|&j| self.get(i, j).abs() > PIVOT_TOL) {
                    self.pivot(i, c);
                }
                // Otherwise the row is redundant; the artificial stays basic at zero
                // and is barred from re-entering in phase 2.
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feasible(lp: &LinearProgram) -> Vec<f64> {
        match lp.solve().unwrap() {
            LpOutcome::Optimal { x, .. } => x,
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    fn check_point(lp: &LinearProgram, x: &[f64]) {
        for row in lp.rows() {
            let lhs: f64 = row.coeffs.iter().map(|&(v, c)| c * x[v]).sum();
            match row.sense {
                Sense::Le => assert!(lhs <= row.rhs + 1e-6, "{lhs} <= {}", row.rhs),
                Sense::Ge => assert!(lhs >= row.rhs - 1e-6, "{lhs} >= {}", row.rhs),
                Sense::Eq => assert!((lhs - row.rhs).abs() <= 1e-6),
            }
        }
    }

    #[test]
    fn simple_feasible() {
        let mut lp = LinearProgram::new(2);
        lp.set_bounds(0, 0.0, 1.0);
        lp.set_bounds(1, 0.0, 1.0);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Sense::Ge, 1.5);
        let x = feasible(&lp);
        check_point(&lp, &x);
    }

    #[test]
    fn simple_infeasible() {
        let mut lp = LinearProgram::new(2);
        lp.set_bounds(0, 0.0, 1.0);
        lp.set_bounds(1, 0.0, 1.0);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Sense::Ge, 2.5);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn free_and_negative_variables() {
        let mut lp = LinearProgram::new(2);
        lp.add_row(vec![(0, 1.0)], Sense::Le, -3.0);
        lp.add_row(vec![(0, 1.0), (1, -1.0)], Sense::Eq, 2.0);
        lp.set_bounds(1, f64::NEG_INFINITY, -6.0);
        let x = feasible(&lp);
        check_point(&lp, &x);
        assert!(x[1] <= -6.0 + 1e-9);
    }

    #[test]
    fn minimises_objective() {
        let mut lp = LinearProgram::new(2);
        lp.set_bounds(0, -1.0, 4.0);
        lp.set_bounds(1, -2.0, 3.0);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Sense::Le, 5.0);
        lp.set_objective(vec![1.0, -2.0]);
        match lp.solve().unwrap() {
            LpOutcome::Optimal { x, objective } => {
                assert!((objective - (-1.0 - 6.0)).abs() < 1e-9, "{objective} {x:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.set_bounds(0, 0.0, f64::INFINITY);
        lp.set_objective(vec![-1.0]);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn fixed_variable_and_redundant_rows() {
        let mut lp = LinearProgram::new(2);
        lp.set_bounds(0, 2.0, 2.0);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 3.0);
        lp.add_row(vec![(0, 2.0), (1, 2.0)], Sense::Eq, 6.0);
        let x = feasible(&lp);
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!((x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_bounds_rejected() {
        let mut lp = LinearProgram::new(1);
        lp.set_bounds(0, 1.0, 0.0);
        assert!(matches!(lp.solve(), Err(LpError::EmptyBounds { .. })));
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's classic cycling instance; Bland's rule must terminate.
        let mut lp = LinearProgram::new(4);
        for v in 0..4 {
            lp.set_bounds(v, 0.0, f64::INFINITY);
        }
        lp.add_row(
            vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)],
            Sense::Le,
            0.0,
        );
        lp.add_row(
            vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)],
            Sense::Le,
            0.0,
        );
        lp.add_row(vec![(2, 1.0)], Sense::Le, 1.0);
        lp.set_objective(vec![-0.75, 150.0, -0.02, 6.0]);
        match lp.solve().unwrap() {
            LpOutcome::Optimal { objective, .. } => assert!((objective + 0.05).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            /// A program built around a known interior point is always found feasible,
            /// and the returned point satisfies every row.
            #[test]
            fn planted_point_is_feasible(
                point in prop::collection::vec(-5.0f64..5.0, 3),
                rows in prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 3), 0.0f64..2.0, 0u8..3), 1..8),
            ) {
                let mut lp = LinearProgram::new(3);
                for v in 0..3 {
                    lp.set_bounds(v, -10.0, 10.0);
                }
                for (coefs, slack, kind) in rows {
                    let lhs: f64 = coefs.iter().zip(&point).map(|(a, b)| a * b).sum();
                    let c: Vec<(usize, f64)> = coefs.into_iter().enumerate().collect();
                    match kind {
                        0 => lp.add_row(c, Sense::Le, lhs + slack),
                        1 => lp.add_row(c, Sense::Ge, lhs - slack),
                        _ => lp.add_row(c, Sense::Eq, lhs),
                    }
                }
                let x = feasible(&lp);
                check_point(&lp, &x);
            }
        }
    }
}
