//! A minimal conic-program representation and solver contract.
//!
//! Programs hold named real variables (complex model variables are lowered to
//! interleaved real pairs), one linear objective to maximize, and constraints
//! drawn from linear equalities/inequalities, second-order cones, rotated
//! second-order cones and the exponential cone. The only exponential-cone
//! shape the toolkit needs is `value >= 2^exponent`, lowered via
//! `value >= e^(exponent * ln 2)`.
//!
//! Two variable counts are exposed. [`ConicProgram::variable_count`] is the
//! total number of scalar reals (a complex entry counts as two).
//! [`ConicProgram::model_variable_count`] counts model variables before
//! real-lowering (a complex entry counts once) and excludes auxiliaries
//! introduced by epigraph lowering; this is the count the per-strategy
//! complexity accounting is stated in.
//!
//! The solve backend is the Clarabel interior-point solver; a program is
//! immutable once built and concurrent solves of distinct programs are safe.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DVector;
use num_complex::Complex64;
use thiserror::Error;

/// Errors raised while building or lowering a program.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConicError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("solver setup failed: {0}")]
    Setup(String),
}

/// Handle to one scalar real variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(usize);

/// Handle to a complex vector variable stored as interleaved (re, im) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVecVar {
    ids: Vec<VarId>,
    len: usize,
}

impl ComplexVecVar {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn re(&self, i: usize) -> VarId {
        self.ids[2 * i]
    }

    pub fn im(&self, i: usize) -> VarId {
        self.ids[2 * i + 1]
    }

    /// All underlying scalar ids, interleaved re/im.
    pub fn scalars(&self) -> &[VarId] {
        &self.ids
    }

    /// Real and imaginary part of `h^H p` as linear expressions, for a fixed
    /// complex vector `h` and this variable `p`.
    pub fn conjugate_inner(&self, h: &DVector<Complex64>) -> (LinExpr, LinExpr) {
        assert_eq!(h.len(), self.len, "dimension mismatch in h^H p");
        let mut re = LinExpr::zero();
        let mut im = LinExpr::zero();
        for i in 0..self.len {
            let (a, b) = (h[i].re, h[i].im);
            // conj(h_i) * p_i = (a x + b y) + j (a y - b x)
            re.push(self.re(i), a);
            re.push(self.im(i), b);
            im.push(self.im(i), a);
            im.push(self.re(i), -b);
        }
        (re, im)
    }
}

/// A linear expression `sum coeff_i * var_i + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinExpr {
    terms: Vec<(VarId, f64)>,
    constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn term(var: VarId, coeff: f64) -> Self {
        Self {
            terms: vec![(var, coeff)],
            constant: 0.0,
        }
    }

    pub fn push(&mut self, var: VarId, coeff: f64) {
        if coeff != 0.0 {
            self.terms.push((var, coeff));
        }
    }

    pub fn add_constant(&mut self, value: f64) {
        self.constant += value;
    }

    pub fn scale(mut self, factor: f64) -> Self {
        for (_, c) in &mut self.terms {
            *c *= factor;
        }
        self.constant *= factor;
        self
    }

    pub fn plus(mut self, other: &LinExpr) -> Self {
        self.terms.extend(other.terms.iter().copied());
        self.constant += other.constant;
        self
    }

    pub fn minus(self, other: &LinExpr) -> Self {
        self.plus(&other.clone().scale(-1.0))
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Collapses duplicate variables; used when lowering.
    fn compacted(&self) -> Self {
        let mut map: BTreeMap<VarId, f64> = BTreeMap::new();
        for &(v, c) in &self.terms {
            *map.entry(v).or_insert(0.0) += c;
        }
        Self {
            terms: map.into_iter().filter(|(_, c)| *c != 0.0).collect(),
            constant: self.constant,
        }
    }

    fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| values[v.0] * c).sum::<f64>()
    }
}

impl From<VarId> for LinExpr {
    fn from(v: VarId) -> Self {
        LinExpr::term(v, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Constraint {
    /// expr = 0
    Eq(LinExpr),
    /// expr <= 0
    Le(LinExpr),
    /// ||args|| <= bound
    Soc { args: Vec<LinExpr>, bound: LinExpr },
    /// 2 * u * v >= ||args||^2 with u, v >= 0
    RotatedSoc { u: LinExpr, v: LinExpr, args: Vec<LinExpr> },
    /// value >= 2^exponent
    Pow2 { exponent: LinExpr, value: LinExpr },
}

#[derive(Debug, Clone)]
struct VarInfo {
    name: String,
    /// Weight in the model-variable count (1 for a model scalar, 1/2 per real
    /// pair of a model complex entry encoded as 0.5 each, 0 for auxiliaries).
    model_weight: f64,
}

/// Incremental builder; variables are handed out as typed ids so constraints
/// can only reference declared variables.
#[derive(Debug, Default)]
pub struct ProgramBuilder {
    vars: Vec<VarInfo>,
    constraints: Vec<Constraint>,
    objective: LinExpr,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn add_var(&mut self, name: String, model_weight: f64) -> VarId {
        self.vars.push(VarInfo { name, model_weight });
        VarId(self.vars.len() - 1)
    }

    /// A scalar model variable.
    pub fn scalar(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name.into(), 1.0)
    }

    /// A scalar auxiliary (lowering) variable, excluded from the model count.
    pub fn aux_scalar(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name.into(), 0.0)
    }

    /// A complex vector model variable of `len` entries (counts `len` model
    /// variables, `2 len` scalar reals).
    pub fn complex_vector(&mut self, name: impl Into<String>, len: usize) -> ComplexVecVar {
        let name = name.into();
        let mut ids = Vec::with_capacity(2 * len);
        for i in 0..len {
            ids.push(self.add_var(format!("{name}[{i}].re"), 0.5));
            ids.push(self.add_var(format!("{name}[{i}].im"), 0.5));
        }
        ComplexVecVar { ids, len }
    }

    pub fn maximize(&mut self, objective: LinExpr) {
        self.objective = objective;
    }

    /// lhs = rhs
    pub fn eq(&mut self, lhs: LinExpr, rhs: LinExpr) {
        self.constraints.push(Constraint::Eq(lhs.minus(&rhs)));
    }

    /// lhs <= rhs
    pub fn le(&mut self, lhs: LinExpr, rhs: LinExpr) {
        self.constraints.push(Constraint::Le(lhs.minus(&rhs)));
    }

    /// lhs >= rhs
    pub fn ge(&mut self, lhs: LinExpr, rhs: LinExpr) {
        self.le(rhs, lhs);
    }

    /// ||args|| <= bound
    pub fn soc(&mut self, args: Vec<LinExpr>, bound: LinExpr) {
        if args.is_empty() {
            self.ge(bound, LinExpr::constant(0.0));
        } else {
            self.constraints.push(Constraint::Soc { args, bound });
        }
    }

    /// 2 u v >= ||args||^2, u >= 0, v >= 0
    pub fn rotated_soc(&mut self, u: LinExpr, v: LinExpr, args: Vec<LinExpr>) {
        self.constraints.push(Constraint::RotatedSoc { u, v, args });
    }

    /// sum args_i^2 <= bound, lowered to one second-order cone.
    pub fn quad_le(&mut self, args: Vec<LinExpr>, bound: LinExpr) {
        if args.is_empty() {
            self.ge(bound, LinExpr::constant(0.0));
            return;
        }
        // ||[args; (1 - b)/2]|| <= (1 + b)/2  <=>  sum args^2 <= b
        let mut stacked = args;
        let half_minus = LinExpr::constant(0.5).plus(&bound.clone().scale(-0.5));
        let half_plus = LinExpr::constant(0.5).plus(&bound.scale(0.5));
        stacked.push(half_minus);
        self.constraints.push(Constraint::Soc {
            args: stacked,
            bound: half_plus,
        });
    }

    /// value >= 2^exponent (exponential cone)
    pub fn pow2_le(&mut self, exponent: LinExpr, value: LinExpr) {
        self.constraints.push(Constraint::Pow2 { exponent, value });
    }

    pub fn build(self) -> Result<ConicProgram, ConicError> {
        for c in &self.constraints {
            if let Constraint::Soc { args, .. } = c {
                if args.is_empty() {
                    return Err(ConicError::Malformed("second-order cone with no members".into()));
                }
            }
        }
        Ok(ConicProgram {
            vars: self.vars,
            constraints: self.constraints,
            objective: self.objective,
        })
    }
}

/// An immutable conic program: linear objective (maximize) plus conic
/// constraints over declared variables.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    vars: Vec<VarInfo>,
    constraints: Vec<Constraint>,
    objective: LinExpr,
}

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

/// Primal solution returned by [`ConicProgram::solve`].
#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    values: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: u32,
}

impl ConicSolution {
    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }

    pub fn eval(&self, expr: &LinExpr) -> f64 {
        expr.eval(&self.values)
    }

    pub fn complex_vector(&self, var: &ComplexVecVar) -> DVector<Complex64> {
        DVector::from_iterator(
            var.len(),
            (0..var.len()).map(|i| Complex64::new(self.value(var.re(i)), self.value(var.im(i)))),
        )
    }
}

impl ConicProgram {
    /// Total scalar real variable count (complex entries count as two).
    pub fn variable_count(&self) -> usize {
        self.vars.len()
    }

    /// Model variables before real-lowering: complex entries count once,
    /// auxiliary lowering variables not at all.
    pub fn model_variable_count(&self) -> usize {
        self.vars.iter().map(|v| v.model_weight).sum::<f64>().round() as usize
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    /// Plain-text form, one constraint per line, for diffing.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vars {} (model {})", self.variable_count(), self.model_variable_count());
        let _ = writeln!(out, "maximize {}", self.fmt_expr(&self.objective));
        for c in &self.constraints {
            let line = match c {
                Constraint::Eq(e) => format!("eq: {} = 0", self.fmt_expr(e)),
                Constraint::Le(e) => format!("le: {} <= 0", self.fmt_expr(e)),
                Constraint::Soc { args, bound } => {
                    let parts: Vec<String> = args.iter().map(|a| self.fmt_expr(a)).collect();
                    format!("soc: ||[{}]|| <= {}", parts.join("; "), self.fmt_expr(bound))
                }
                Constraint::RotatedSoc { u, v, args } => {
                    let parts: Vec<String> = args.iter().map(|a| self.fmt_expr(a)).collect();
                    format!(
                        "rsoc: 2 ({}) ({}) >= ||[{}]||^2",
                        self.fmt_expr(u),
                        self.fmt_expr(v),
                        parts.join("; ")
                    )
                }
                Constraint::Pow2 { exponent, value } => {
                    format!("pow2: {} >= 2^({})", self.fmt_expr(value), self.fmt_expr(exponent))
                }
            };
            let _ = writeln!(out, "{line}");
        }
        out
    }

    fn fmt_expr(&self, expr: &LinExpr) -> String {
        let expr = expr.compacted();
        let mut out = String::new();
        for (i, (v, c)) in expr.terms.iter().enumerate() {
            if i > 0 {
                out.push_str(" + ");
            }
            let _ = write!(out, "{c:.6}*{}", self.vars[v.0].name);
        }
        if expr.terms.is_empty() || expr.constant != 0.0 {
            if !expr.terms.is_empty() {
                out.push_str(" + ");
            }
            let _ = write!(out, "{:.6}", expr.constant);
        }
        out
    }

    /// [`ConicProgram::solve`], retrying at 10x and 100x the tolerance when
    /// the interior point stalls before certifying optimality or
    /// infeasibility. Ill-conditioned instances near a cone boundary may not
    /// reach the tightest gap; the relaxed solve still lands within the
    /// retried tolerance.
    pub fn solve_robust(&self, tol: f64) -> Result<ConicSolution, ConicError> {
        let mut last = self.solve(tol)?;
        for factor in [10.0, 100.0] {
            if last.status != SolveStatus::MaxIter {
                return Ok(last);
            }
            last = self.solve(tol * factor)?;
        }
        Ok(last)
    }

    /// Solves the program to tolerance `tol` with the interior-point backend.
    pub fn solve(&self, tol: f64) -> Result<ConicSolution, ConicError> {
        let n = self.vars.len();

        // Row blocks must follow the cone ordering: zero cone (equalities),
        // nonnegative cone (inequalities), then one block per SOC / exp cone.
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row = 0usize;

        // s = b - A x; push rows so that s equals `expr` (A = -coeffs, b = const).
        let push_expr_row = |expr: &LinExpr, triplets: &mut Vec<(usize, usize, f64)>, b: &mut Vec<f64>, row: &mut usize| {
            let e = expr.compacted();
            for (v, c) in &e.terms {
                triplets.push((*row, v.0, -c));
            }
            b.push(e.constant);
            *row += 1;
        };

        let n_eq = self
            .constraints
            .iter()
            .filter(|c| matches!(c, Constraint::Eq(_)))
            .count();
        if n_eq > 0 {
            for c in &self.constraints {
                if let Constraint::Eq(e) = c {
                    // expr = 0 -> s = expr in the zero cone
                    push_expr_row(e, &mut triplets, &mut b, &mut row);
                }
            }
            cones.push(SupportedConeT::ZeroConeT(n_eq));
        }

        let n_le = self
            .constraints
            .iter()
            .filter(|c| matches!(c, Constraint::Le(_)))
            .count();
        if n_le > 0 {
            for c in &self.constraints {
                if let Constraint::Le(e) = c {
                    // expr <= 0 -> s = -expr >= 0
                    push_expr_row(&e.clone().scale(-1.0), &mut triplets, &mut b, &mut row);
                }
            }
            cones.push(SupportedConeT::NonnegativeConeT(n_le));
        }

        for c in &self.constraints {
            match c {
                Constraint::Soc { args, bound } => {
                    push_expr_row(bound, &mut triplets, &mut b, &mut row);
                    for a in args {
                        push_expr_row(a, &mut triplets, &mut b, &mut row);
                    }
                    cones.push(SupportedConeT::SecondOrderConeT(args.len() + 1));
                }
                Constraint::RotatedSoc { u, v, args } => {
                    // 2uv >= ||w||^2 <=> ||[sqrt(2) w; u - v]|| <= u + v
                    push_expr_row(&u.clone().plus(v), &mut triplets, &mut b, &mut row);
                    for a in args {
                        push_expr_row(&a.clone().scale(std::f64::consts::SQRT_2), &mut triplets, &mut b, &mut row);
                    }
                    push_expr_row(&u.clone().minus(v), &mut triplets, &mut b, &mut row);
                    cones.push(SupportedConeT::SecondOrderConeT(args.len() + 2));
                }
                Constraint::Pow2 { exponent, value } => {
                    // value >= 2^exponent <=> (exponent ln2, 1, value) in K_exp
                    push_expr_row(&exponent.clone().scale(std::f64::consts::LN_2), &mut triplets, &mut b, &mut row);
                    push_expr_row(&LinExpr::constant(1.0), &mut triplets, &mut b, &mut row);
                    push_expr_row(value, &mut triplets, &mut b, &mut row);
                    cones.push(SupportedConeT::ExponentialConeT());
                }
                Constraint::Eq(_) | Constraint::Le(_) => {}
            }
        }

        let m = row;
        let a = csc_from_triplets(m, n, &triplets);
        let p = CscMatrix::<f64>::zeros((n, n));
        let objective = self.objective.compacted();
        let mut q = vec![0.0; n];
        for (v, c) in &objective.terms {
            q[v.0] = -c;
        }

        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(500)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            .tol_feas(tol)
            .build()
            .map_err(|e| ConicError::Setup(e.to_string()))?;

        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| ConicError::Setup(e.to_string()))?;
        solver.solve();
        let solution = &solver.solution;

        let status = match solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            _ => SolveStatus::MaxIter,
        };

        Ok(ConicSolution {
            status,
            objective: -solution.obj_val + objective.constant,
            values: solution.x.clone(),
            primal_residual: solution.r_prim,
            dual_residual: solution.r_dual,
            iterations: solution.iterations,
        })
    }
}

fn csc_from_triplets(m: usize, n: usize, triplets: &[(usize, usize, f64)]) -> CscMatrix<f64> {
    let mut entries: Vec<(usize, usize, f64)> = triplets.to_vec();
    entries.sort_by_key(|&(r, c, _)| (c, r));
    let mut rowval: Vec<usize> = Vec::with_capacity(entries.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(entries.len());
    let mut cols: Vec<usize> = Vec::with_capacity(entries.len());
    for &(r, c, v) in &entries {
        if cols.last() == Some(&c) && rowval.last() == Some(&r) {
            *nzval.last_mut().unwrap() += v;
        } else {
            rowval.push(r);
            nzval.push(v);
            cols.push(c);
        }
    }
    let mut colptr = vec![0usize; n + 1];
    for &c in &cols {
        colptr[c + 1] += 1;
    }
    for c in 0..n {
        colptr[c + 1] += colptr[c];
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}
