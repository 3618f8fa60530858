//! Generic mixed-integer linear model container and linearization kernels.
//!
//! `MilpModel` stores variables with bounds, sparse linear rows, and a sparse
//! minimization objective (plus a constant term), with a stable name-to-index
//! registry so solutions survive LP-file round trips. The kernels turn the
//! nonlinear relations of the flow model — implications, binary-continuous
//! products, two-argument minima, and the nondecreasing-stock assignment —
//! into exact linear systems over bounded variables.

use std::collections::HashMap;
use thiserror::Error;

pub type VarId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    /// Sorted by column, no duplicates, no explicit zeros.
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A linear expression over model variables plus a constant.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> LinExpr {
        LinExpr { terms: Vec::new(), constant: c }
    }

    pub fn var(v: VarId) -> LinExpr {
        LinExpr { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn term(mut self, v: VarId, coef: f64) -> LinExpr {
        self.terms.push((v, coef));
        self
    }

    pub fn plus(mut self, other: &LinExpr) -> LinExpr {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn minus(mut self, other: &LinExpr) -> LinExpr {
        self.terms.extend(other.terms.iter().map(|&(v, c)| (v, -c)));
        self.constant -= other.constant;
        self
    }

    pub fn scaled(mut self, factor: f64) -> LinExpr {
        for t in &mut self.terms {
            t.1 *= factor;
        }
        self.constant *= factor;
        self
    }

    pub fn add_const(mut self, c: f64) -> LinExpr {
        self.constant += c;
        self
    }

    /// Merge duplicate columns and drop zero coefficients.
    fn normalized(mut self) -> LinExpr {
        self.terms.sort_by_key(|&(v, _)| v);
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for (v, c) in self.terms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        self.terms = merged;
        self
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }
}

impl From<VarId> for LinExpr {
    fn from(v: VarId) -> LinExpr {
        LinExpr::var(v)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("big-M bound {0} must be positive")]
    InvalidBigM(f64),
    #[error("inflow and outflow vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Default)]
pub struct MilpModel {
    variables: Vec<Variable>,
    rows: Vec<Row>,
    objective: Vec<(VarId, f64)>,
    pub objective_constant: f64,
    name_index: HashMap<String, VarId>,
}

impl MilpModel {
    pub fn new() -> MilpModel {
        MilpModel::default()
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name.into(), VarKind::Continuous, lower, upper)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name.into(), VarKind::Binary, 0.0, 1.0)
    }

    fn add_var(&mut self, name: String, kind: VarKind, lower: f64, upper: f64) -> VarId {
        assert!(lower <= upper, "variable {name}: lower {lower} > upper {upper}");
        let id = self.variables.len();
        let previous = self.name_index.insert(name.clone(), id);
        assert!(previous.is_none(), "duplicate variable name {name}");
        self.variables.push(Variable { name, kind, lower, upper });
        id
    }

    /// Adds `expr (sense) rhs`; the expression's constant moves to the
    /// right-hand side.
    pub fn add_row(&mut self, name: impl Into<String>, expr: LinExpr, sense: Sense, rhs: f64) {
        let expr = expr.normalized();
        for &(v, _) in &expr.terms {
            debug_assert!(v < self.variables.len(), "row references unknown variable");
        }
        self.rows.push(Row {
            name: name.into(),
            rhs: rhs - expr.constant,
            terms: expr.terms,
            sense,
        });
    }

    pub fn add_objective(&mut self, expr: LinExpr) {
        let expr = expr.normalized();
        self.objective_constant += expr.constant;
        self.objective.extend(expr.terms);
        let merged = LinExpr { terms: std::mem::take(&mut self.objective), constant: 0.0 }.normalized();
        self.objective = merged.terms;
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_binary(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id]
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn objective(&self) -> &[(VarId, f64)] {
        &self.objective
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.name_index.get(name).copied()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }

    pub fn row_activity(&self, row: &Row, x: &[f64]) -> f64 {
        row.terms.iter().map(|&(v, c)| c * x[v]).sum()
    }

    /// Largest constraint or bound violation of `x`, with the offender's name.
    pub fn max_violation(&self, x: &[f64]) -> (f64, String) {
        let mut worst = (0.0f64, String::new());
        for (id, var) in self.variables.iter().enumerate() {
            let v = (var.lower - x[id]).max(x[id] - var.upper);
            let v = if var.kind == VarKind::Binary {
                v.max((x[id] - x[id].round()).abs())
            } else {
                v
            };
            if v > worst.0 {
                worst = (v, format!("bound {}", var.name));
            }
        }
        for row in &self.rows {
            let a = self.row_activity(row, x);
            let v = match row.sense {
                Sense::Le => a - row.rhs,
                Sense::Ge => row.rhs - a,
                Sense::Eq => (a - row.rhs).abs(),
            };
            if v > worst.0 {
                worst = (v, format!("row {}", row.name));
            }
        }
        worst
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.max_violation(x).0 <= tol
    }
}

/// Encodes `x > 0 implies b = 1` as `x <= M b`, given `0 <= x <= M`.
pub fn linearize_implication(
    model: &mut MilpModel,
    name: &str,
    x: impl Into<LinExpr>,
    b: impl Into<LinExpr>,
    big_m: f64,
) -> Result<(), ModelError> {
    if big_m <= 0.0 {
        return Err(ModelError::InvalidBigM(big_m));
    }
    let expr = x.into().minus(&b.into().scaled(big_m));
    model.add_row(name, expr, Sense::Le, 0.0);
    Ok(())
}

/// Introduces `p = b * x` for a 0/1-valued expression `b` and `0 <= x <= M`:
/// `p <= x`, `p <= M b`, `p >= 0`, `p >= x - M(1-b)`.
pub fn linearize_product(
    model: &mut MilpModel,
    prefix: &str,
    b: impl Into<LinExpr>,
    x: impl Into<LinExpr>,
    big_m: f64,
) -> Result<VarId, ModelError> {
    if big_m <= 0.0 {
        return Err(ModelError::InvalidBigM(big_m));
    }
    let b = b.into();
    let x = x.into();
    let p = model.add_continuous(format!("{prefix}_p"), 0.0, big_m);
    model.add_row(format!("{prefix}_le_x"), LinExpr::var(p).minus(&x), Sense::Le, 0.0);
    model.add_row(format!("{prefix}_le_mb"), LinExpr::var(p).minus(&b.clone().scaled(big_m)), Sense::Le, 0.0);
    // p >= x - M(1-b)  <=>  p - x - M b >= -M
    model.add_row(
        format!("{prefix}_ge_x"),
        LinExpr::var(p).minus(&x).minus(&b.scaled(big_m)),
        Sense::Ge,
        -big_m,
    );
    Ok(p)
}

/// Forces `z = min(x1, x2)` for `x1, x2` in `[0, M]` via a fresh branch
/// binary: `z <= x1`, `z <= x2`, `z >= x1 - M b`, `z >= x2 - M(1-b)`.
/// Returns the branch binary.
pub fn linearize_min(
    model: &mut MilpModel,
    prefix: &str,
    z: VarId,
    x1: impl Into<LinExpr>,
    x2: impl Into<LinExpr>,
    big_m: f64,
) -> Result<VarId, ModelError> {
    if big_m <= 0.0 {
        return Err(ModelError::InvalidBigM(big_m));
    }
    let x1 = x1.into();
    let x2 = x2.into();
    let b = model.add_binary(format!("{prefix}_b"));
    model.add_row(format!("{prefix}_le1"), LinExpr::var(z).minus(&x1), Sense::Le, 0.0);
    model.add_row(format!("{prefix}_le2"), LinExpr::var(z).minus(&x2), Sense::Le, 0.0);
    model.add_row(
        format!("{prefix}_ge1"),
        LinExpr::var(z).minus(&x1).plus(&LinExpr::var(b).scaled(big_m)),
        Sense::Ge,
        0.0,
    );
    // z >= x2 - M(1-b)  <=>  z - x2 - M b >= -M
    model.add_row(
        format!("{prefix}_ge2"),
        LinExpr::var(z).minus(&x2).minus(&LinExpr::var(b).scaled(big_m)),
        Sense::Ge,
        -big_m,
    );
    Ok(b)
}

/// Pairs storage inflows with outflows at a source node under nondecreasing
/// stock: binary matrix `beta` with row sums equal to the storage inflows,
/// column sums equal to the storage outflows, and
/// `f_in[n] <= f_out[m] + (1 - beta[n][m]) M`. Returns the matrix.
///
/// `inflows` and `outflows` are (hydrogen, storage) expression pairs of equal
/// length.
pub fn linearize_assignment(
    model: &mut MilpModel,
    prefix: &str,
    inflows: &[(LinExpr, LinExpr)],
    outflows: &[(LinExpr, LinExpr)],
    big_m: f64,
) -> Result<Vec<Vec<VarId>>, ModelError> {
    if big_m <= 0.0 {
        return Err(ModelError::InvalidBigM(big_m));
    }
    if inflows.len() != outflows.len() {
        return Err(ModelError::LengthMismatch(inflows.len(), outflows.len()));
    }
    let n = inflows.len();
    let beta: Vec<Vec<VarId>> = (0..n)
        .map(|i| (0..n).map(|m| model.add_binary(format!("{prefix}_b{i}_{m}"))).collect())
        .collect();
    for (i, (_, y_in)) in inflows.iter().enumerate() {
        let mut sum = LinExpr::default();
        for m in 0..n {
            sum = sum.term(beta[i][m], 1.0);
        }
        model.add_row(format!("{prefix}_row{i}"), sum.minus(y_in), Sense::Eq, 0.0);
    }
    for (m, (_, y_out)) in outflows.iter().enumerate() {
        let mut sum = LinExpr::default();
        for row in beta.iter().take(n) {
            sum = sum.term(row[m], 1.0);
        }
        model.add_row(format!("{prefix}_col{m}"), sum.minus(y_out), Sense::Eq, 0.0);
    }
    for (i, (f_in, _)) in inflows.iter().enumerate() {
        for (m, (f_out, _)) in outflows.iter().enumerate() {
            // f_in <= f_out + (1 - beta) M  <=>  f_in - f_out + M beta <= M
            let expr = f_in.clone().minus(f_out).plus(&LinExpr::var(beta[i][m]).scaled(big_m));
            model.add_row(format!("{prefix}_nd_{i}_{m}"), expr, Sense::Le, big_m);
        }
    }
    Ok(beta)
}
