//! Dense two-phase primal simplex with variable bounds.
//!
//! Variables carry individual bounds handled inside the ratio test (upper
//! bounds never become rows), inequalities get one slack column each, and
//! infeasible starting rows get phase-one artificials. Pivoting is Dantzig
//! with lowest-index tie-breaking, falling back to Bland's rule permanently
//! after 1000 degenerate pivots so every solve terminates. All choices are
//! deterministic: the same input always produces the same pivot sequence.
//!
//! Work is metered in tableau-update units (rows x columns per pivot) against
//! an [`Effort`] budget, which is what makes solver time limits reproducible.

use crate::model::Sense;

#[derive(Debug, Clone)]
pub struct LpRow {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Effort budget or iteration cap hit before optimality.
    Stopped,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values (meaningful for `Optimal`).
    pub x: Vec<f64>,
    /// Objective value c.x (no constant term).
    pub value: f64,
}

/// Deterministic work meter shared across LP solves of one run.
#[derive(Debug, Clone)]
pub struct Effort {
    used: u64,
    budget: u64,
}

impl Effort {
    pub fn unlimited() -> Effort {
        Effort { used: 0, budget: u64::MAX }
    }

    pub fn with_budget(budget: u64) -> Effort {
        Effort { used: 0, budget }
    }

    /// Records `amount` units; false once the budget is exhausted.
    pub fn charge(&mut self, amount: u64) -> bool {
        self.used = self.used.saturating_add(amount);
        self.used <= self.budget
    }

    pub fn exhausted(&self) -> bool {
        self.used > self.budget
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }
}

const RC_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-6;
const BLAND_AFTER: u64 = 1000;

#[derive(Clone, Copy, PartialEq, Eq)]
enum VStat {
    Basic,
    AtLower,
    AtUpper,
}

struct Tableau {
    m: usize,
    ncols: usize,
    /// Row-major m x ncols coefficient matrix, kept as B^{-1}A.
    t: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    val: Vec<f64>,
    status: Vec<VStat>,
    basis: Vec<usize>,
    reduced: Vec<f64>,
    degenerate_pivots: u64,
    pivots: u64,
}

impl Tableau {
    fn compute_reduced(&mut self, cost: &[f64], effort: &mut Effort) {
        self.reduced.copy_from_slice(cost);
        let mut touched = 1u64;
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                touched += 1;
                let row = i * self.ncols;
                for k in 0..self.ncols {
                    self.reduced[k] -= cb * self.t[row + k];
                }
            }
        }
        effort.charge(touched * self.ncols as u64);
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.ncols {
            if self.upper[j] - self.lower[j] < 1e-12 {
                continue;
            }
            let d = self.reduced[j];
            let eligible = match self.status[j] {
                VStat::AtLower => d < -RC_TOL,
                VStat::AtUpper => d > RC_TOL,
                VStat::Basic => false,
            };
            if !eligible {
                continue;
            }
            if bland {
                return Some(j);
            }
            match best {
                Some((_, mag)) if d.abs() <= mag => {}
                _ => best = Some((j, d.abs())),
            }
        }
        best.map(|(j, _)| j)
    }

    /// One simplex step; returns false when no entering column remains.
    fn step(&mut self, bland: bool, effort: &mut Effort) -> Result<bool, LpStatus> {
        let Some(enter) = self.entering(bland) else {
            return Ok(false);
        };
        let dir = if self.status[enter] == VStat::AtLower { 1.0 } else { -1.0 };

        // Ratio test against basic bounds and the entering bound span.
        let mut t_best = self.upper[enter] - self.lower[enter];
        let mut leave: Option<(usize, usize, f64)> = None; // (row, basic col, bound hit)
        for i in 0..self.m {
            let alpha = self.t[i * self.ncols + enter];
            let a = dir * alpha;
            let b = self.basis[i];
            let (limit, hit) = if a > PIVOT_TOL {
                ((self.val[b] - self.lower[b]) / a, self.lower[b])
            } else if a < -PIVOT_TOL {
                if self.upper[b].is_infinite() {
                    continue;
                }
                ((self.upper[b] - self.val[b]) / (-a), self.upper[b])
            } else {
                continue;
            };
            let limit = limit.max(0.0);
            let better = match leave {
                None => limit < t_best - 1e-12,
                Some((_, col, _)) => {
                    limit < t_best - 1e-12 || (limit < t_best + 1e-12 && b < col)
                }
            };
            if better {
                t_best = t_best.min(limit);
                leave = Some((i, b, hit));
            }
        }

        let span = self.upper[enter] - self.lower[enter];
        if leave.is_none() && span.is_infinite() {
            return Err(LpStatus::Unbounded);
        }
        let t = t_best.max(0.0);
        if t <= DEGENERATE_STEP {
            self.degenerate_pivots += 1;
        }

        // Move the entering variable and adjust all basics.
        self.val[enter] += dir * t;
        for i in 0..self.m {
            let alpha = self.t[i * self.ncols + enter];
            if alpha != 0.0 {
                self.val[self.basis[i]] -= dir * t * alpha;
            }
        }
        // Entering scan plus ratio test work.
        if !effort.charge((self.m + self.ncols) as u64) {
            return Err(LpStatus::Stopped);
        }

        match leave {
            None => {
                // Bound flip, no basis change.
                self.status[enter] =
                    if dir > 0.0 { VStat::AtUpper } else { VStat::AtLower };
                self.val[enter] = if dir > 0.0 { self.upper[enter] } else { self.lower[enter] };
                Ok(true)
            }
            Some((r, leaving, hit)) => {
                self.val[leaving] = hit;
                self.status[leaving] =
                    if hit == self.lower[leaving] { VStat::AtLower } else { VStat::AtUpper };
                let work = self.pivot(r, enter);
                self.status[enter] = VStat::Basic;
                self.basis[r] = enter;
                if !effort.charge(work) {
                    return Err(LpStatus::Stopped);
                }
                Ok(true)
            }
        }
    }

    /// Eliminates the entering column; returns the touched work in tableau
    /// entries (rows with a nonzero factor are the only ones updated).
    fn pivot(&mut self, r: usize, enter: usize) -> u64 {
        self.pivots += 1;
        let piv = self.t[r * self.ncols + enter];
        debug_assert!(piv.abs() > 1e-12, "pivot on a zero element");
        let inv = 1.0 / piv;
        let (rstart, rend) = (r * self.ncols, (r + 1) * self.ncols);
        for k in rstart..rend {
            self.t[k] *= inv;
        }
        self.t[rstart + enter] = 1.0;
        let mut touched = 1u64;
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let factor = self.t[i * self.ncols + enter];
            if factor == 0.0 {
                continue;
            }
            touched += 1;
            let istart = i * self.ncols;
            for k in 0..self.ncols {
                self.t[istart + k] -= factor * self.t[rstart + k];
            }
            self.t[istart + enter] = 0.0;
        }
        let factor = self.reduced[enter];
        if factor != 0.0 {
            touched += 1;
            for k in 0..self.ncols {
                self.reduced[k] -= factor * self.t[rstart + k];
            }
            self.reduced[enter] = 0.0;
        }
        touched * self.ncols as u64
    }

    fn run_phase(&mut self, cost: &[f64], effort: &mut Effort, cap: u64) -> LpStatus {
        self.compute_reduced(cost, effort);
        let mut bland = false;
        loop {
            if self.pivots > cap {
                return LpStatus::Stopped;
            }
            if !bland && self.degenerate_pivots >= BLAND_AFTER {
                bland = true;
            }
            match self.step(bland, effort) {
                Ok(true) => continue,
                Ok(false) => return LpStatus::Optimal,
                Err(status) => return status,
            }
        }
    }
}

/// Minimizes `objective . x` subject to `rows` and `lower <= x <= upper`.
pub fn solve_lp(
    objective: &[f64],
    rows: &[LpRow],
    lower: &[f64],
    upper: &[f64],
    effort: &mut Effort,
) -> LpSolution {
    let n = objective.len();
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.sense != Sense::Eq).count();
    let ncols_max = n + n_slack + m;

    let fail = |status: LpStatus| LpSolution { status, x: vec![0.0; n], value: f64::NAN };
    if !effort.charge((m as u64) * (ncols_max as u64)) {
        return fail(LpStatus::Stopped);
    }

    let mut t = vec![0.0; m * ncols_max];
    let mut lb = Vec::with_capacity(ncols_max);
    let mut ub = Vec::with_capacity(ncols_max);
    lb.extend_from_slice(lower);
    ub.extend_from_slice(upper);

    // Nonbasic start at finite lower bounds.
    let mut val: Vec<f64> = lower.to_vec();
    let mut status = vec![VStat::AtLower; n];

    // Slack columns.
    let mut slack_col = vec![usize::MAX; m];
    let mut next = n;
    for (i, row) in rows.iter().enumerate() {
        for &(v, c) in &row.terms {
            debug_assert!(v < n);
            t[i * ncols_max + v] = c;
        }
        if row.sense != Sense::Eq {
            let sign = if row.sense == Sense::Le { 1.0 } else { -1.0 };
            t[i * ncols_max + next] = sign;
            slack_col[i] = next;
            lb.push(0.0);
            ub.push(f64::INFINITY);
            val.push(0.0);
            status.push(VStat::AtLower);
            next += 1;
        }
    }

    // Choose a starting basis per row: the slack when it can absorb the
    // residual, otherwise a fresh artificial.
    let mut basis = vec![usize::MAX; m];
    let mut artificial_from = next;
    for (i, row) in rows.iter().enumerate() {
        let residual = row.rhs
            - row.terms.iter().map(|&(v, c)| c * val[v]).sum::<f64>();
        let use_slack = match row.sense {
            Sense::Le => residual >= 0.0,
            Sense::Ge => residual <= 0.0,
            Sense::Eq => false,
        };
        if use_slack {
            let s = slack_col[i];
            basis[i] = s;
            val[s] = residual.abs();
            status[s] = VStat::Basic;
            if row.sense == Sense::Ge {
                // Slack enters with coefficient -1: normalize the row.
                for k in i * ncols_max..(i + 1) * ncols_max {
                    t[k] = -t[k];
                }
            }
        } else {
            let a = next;
            next += 1;
            let sign = if residual >= 0.0 { 1.0 } else { -1.0 };
            t[i * ncols_max + a] = sign;
            if sign < 0.0 {
                for k in i * ncols_max..(i + 1) * ncols_max {
                    t[k] = -t[k];
                }
            }
            lb.push(0.0);
            ub.push(f64::INFINITY);
            val.push(residual.abs());
            status.push(VStat::Basic);
            basis[i] = a;
        }
    }
    let ncols = next;
    if ncols < ncols_max {
        // Shrink rows to the actual column count.
        let mut compact = vec![0.0; m * ncols];
        for i in 0..m {
            compact[i * ncols..(i + 1) * ncols]
                .copy_from_slice(&t[i * ncols_max..i * ncols_max + ncols]);
        }
        t = compact;
    }
    artificial_from = artificial_from.min(ncols);

    let mut tab = Tableau {
        m,
        ncols,
        t,
        lower: lb,
        upper: ub,
        val,
        status,
        basis,
        reduced: vec![0.0; ncols],
        degenerate_pivots: 0,
        pivots: 0,
    };
    let pivot_cap = 50_000 + 20 * (m as u64 + ncols as u64);

    // Phase one: drive the artificials to zero.
    if artificial_from < ncols {
        let mut cost1 = vec![0.0; ncols];
        for c in cost1.iter_mut().skip(artificial_from) {
            *c = 1.0;
        }
        match tab.run_phase(&cost1, effort, pivot_cap) {
            LpStatus::Optimal => {}
            LpStatus::Unbounded => return fail(LpStatus::Infeasible),
            s => return fail(s),
        }
        let infeas: f64 = (artificial_from..ncols).map(|j| tab.val[j]).sum();
        if infeas > FEAS_TOL {
            return fail(LpStatus::Infeasible);
        }
        // Pivot remaining basic artificials out where possible.
        for i in 0..m {
            if tab.basis[i] >= artificial_from {
                let row = i * tab.ncols;
                if let Some(k) = (0..artificial_from)
                    .find(|&k| tab.status[k] != VStat::Basic && tab.t[row + k].abs() > 1e-7)
                {
                    let entering_val = tab.val[k];
                    tab.compute_reduced(&cost1, effort);
                    let leaving = tab.basis[i];
                    tab.pivot(i, k);
                    tab.status[leaving] = VStat::AtLower;
                    tab.val[leaving] = 0.0;
                    tab.status[k] = VStat::Basic;
                    tab.basis[i] = k;
                    tab.val[k] = entering_val;
                }
            }
        }
        // Freeze the artificials at zero for phase two.
        for j in artificial_from..ncols {
            tab.lower[j] = 0.0;
            tab.upper[j] = 0.0;
            if tab.status[j] != VStat::Basic {
                tab.val[j] = 0.0;
                tab.status[j] = VStat::AtLower;
            }
        }
    }

    let mut cost2 = vec![0.0; ncols];
    cost2[..n].copy_from_slice(objective);
    let status = tab.run_phase(&cost2, effort, pivot_cap);
    match status {
        LpStatus::Optimal => {
            let x: Vec<f64> = tab.val[..n].to_vec();
            let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            LpSolution { status: LpStatus::Optimal, x, value }
        }
        s => fail(s),
    }
}
