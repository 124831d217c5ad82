//! Standard-form convex conic programs.
//!
//! Problems are assembled from affine expressions over a flat real variable
//! vector. Every variable block is registered under a name, and each
//! constraint states that a list of affine expressions lies in one cone:
//! zero, nonnegative orthant, second-order, real PSD (upper-triangle svec
//! packing) or exponential. Complex Hermitian matrices enter through their
//! real symmetric embedding. Solving is delegated to Clarabel.

use std::f64::consts::{LN_2, SQRT_2};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::DMatrix;

use crate::numerics::{c64, CVector, HermitianMatrix};

/// Sparse affine expression `Σ c_i x_i + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(index: usize) -> Self {
        Self { terms: vec![(index, 1.0)], constant: 0.0 }
    }

    pub fn term(index: usize, coef: f64) -> Self {
        Self { terms: vec![(index, coef)], constant: 0.0 }
    }

    pub fn add_term(&mut self, index: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((index, coef));
        }
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    /// `self += s · other`.
    pub fn add_scaled(&mut self, other: &Affine, s: f64) -> &mut Self {
        if s != 0.0 {
            self.terms.extend(other.terms.iter().map(|&(i, c)| (i, c * s)));
            self.constant += s * other.constant;
        }
        self
    }

    pub fn plus(mut self, other: &Affine) -> Self {
        self.add_scaled(other, 1.0);
        self
    }

    pub fn minus(mut self, other: &Affine) -> Self {
        self.add_scaled(other, -1.0);
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }
}

/// Contiguous index range of a registered variable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarRange {
    pub start: usize,
    pub len: usize,
}

impl VarRange {
    pub fn at(&self, i: usize) -> Affine {
        assert!(i < self.len, "index {i} outside block of length {}", self.len);
        Affine::var(self.start + i)
    }

    pub fn index(&self, i: usize) -> usize {
        assert!(i < self.len);
        self.start + i
    }

    pub fn values<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.start..self.start + self.len]
    }
}

/// Cone families supported by [`ConicProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Zero,
    Nonnegative,
    SecondOrder,
    /// Real symmetric PSD of the given side length, svec packed.
    Psd(usize),
    Exponential,
}

#[derive(Debug, Clone)]
struct ConeBlock {
    kind: ConeKind,
    rows: Vec<Affine>,
}

/// Length of the svec packing of a `d × d` symmetric matrix.
pub fn triangular(d: usize) -> usize {
    d * (d + 1) / 2
}

/// A Hermitian `m × m` matrix variable stored as `m²` reals: the diagonal,
/// then `(Re, Im)` of each strictly-upper entry in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermitianVar {
    pub range: VarRange,
    pub dim: usize,
}

impl HermitianVar {
    fn offdiag_slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        let m = self.dim;
        // Number of strict upper entries in rows before i, plus the column offset.
        let before = i * m - i * (i + 1) / 2;
        m + 2 * (before + (j - i - 1))
    }

    /// `(Re X_ij, Im X_ij)` as affine expressions.
    pub fn entry(&self, i: usize, j: usize) -> (Affine, Affine) {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => (self.range.at(i), Affine::zero()),
            Less => {
                let s = self.offdiag_slot(i, j);
                (self.range.at(s), self.range.at(s + 1))
            }
            Greater => {
                let s = self.offdiag_slot(j, i);
                (self.range.at(s), self.range.at(s + 1).scaled(-1.0))
            }
        }
    }

    pub fn trace(&self) -> Affine {
        let mut a = Affine::zero();
        for i in 0..self.dim {
            a.add_term(self.range.index(i), 1.0);
        }
        a
    }

    /// `Re tr(C X)` for a fixed Hermitian `C`.
    pub fn trace_product(&self, c: &HermitianMatrix) -> Affine {
        assert_eq!(c.dim(), self.dim);
        let mut a = Affine::zero();
        for i in 0..self.dim {
            a.add_term(self.range.index(i), c.get(i, i).re);
            for j in i + 1..self.dim {
                let s = self.offdiag_slot(i, j);
                let cij = c.get(i, j);
                a.add_term(self.range.index(s), 2.0 * cij.re);
                a.add_term(self.range.index(s + 1), 2.0 * cij.im);
            }
        }
        a
    }

    /// `s^H X s`.
    pub fn quad_form(&self, s: &CVector) -> Affine {
        self.trace_product(&HermitianMatrix::outer(s))
    }

    pub fn decode(&self, x: &[f64]) -> HermitianMatrix {
        HermitianEmbedding { dim: self.dim }.decode(self.range.values(x))
    }

    /// Expression matrix `coef · X`.
    pub fn expr(&self, coef: f64) -> HermExpr {
        HermExpr::from_fn(self.dim, |i, j| {
            let (re, im) = self.entry(i, j);
            (re.scaled(coef), im.scaled(coef))
        })
    }
}

/// Complex vector variable `[u; 1]` of total length `len`, whose last entry
/// is pinned to one. Stored as `(Re u_n, Im u_n)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PinnedComplexVar {
    pub range: VarRange,
    pub len: usize,
}

impl PinnedComplexVar {
    fn free(&self) -> usize {
        self.len - 1
    }

    pub fn re(&self, n: usize) -> Affine {
        if n == self.free() {
            Affine::constant(1.0)
        } else {
            self.range.at(2 * n)
        }
    }

    pub fn im(&self, n: usize) -> Affine {
        if n == self.free() {
            Affine::zero()
        } else {
            self.range.at(2 * n + 1)
        }
    }

    /// `Re{v^H g}`.
    pub fn re_inner(&self, g: &CVector) -> Affine {
        assert_eq!(g.len(), self.len);
        let mut a = Affine::constant(g[self.free()].re);
        for n in 0..self.free() {
            a.add_term(self.range.index(2 * n), g[n].re);
            a.add_term(self.range.index(2 * n + 1), g[n].im);
        }
        a
    }

    /// Real and imaginary parts of `R v`, interleaved per row.
    pub fn linear_map(&self, r: &crate::numerics::CMatrix) -> Vec<Affine> {
        assert_eq!(r.ncols(), self.len);
        let last = self.free();
        let mut out = Vec::with_capacity(2 * r.nrows());
        for i in 0..r.nrows() {
            let mut re = Affine::constant(r[(i, last)].re);
            let mut im = Affine::constant(r[(i, last)].im);
            for n in 0..last {
                let z = r[(i, n)];
                re.add_term(self.range.index(2 * n), z.re).add_term(self.range.index(2 * n + 1), -z.im);
                im.add_term(self.range.index(2 * n), z.im).add_term(self.range.index(2 * n + 1), z.re);
            }
            out.push(re);
            out.push(im);
        }
        out
    }

    pub fn decode(&self, x: &[f64]) -> CVector {
        let p = self.range.values(x);
        CVector::from_fn(self.len, |n, _| if n == self.free() { c64(1.0, 0.0) } else { c64(p[2 * n], p[2 * n + 1]) })
    }

    pub fn encode(&self, v: &CVector) -> Vec<f64> {
        (0..self.free()).flat_map(|n| [v[n].re, v[n].im]).collect()
    }
}

/// Packing of Hermitian matrices into the `m²` real parameters used by
/// [`HermitianVar`], and into the `2m × 2m` real symmetric embedding
/// `[[Re X, −Im X], [Im X, Re X]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermitianEmbedding {
    pub dim: usize,
}

impl HermitianEmbedding {
    pub fn param_len(&self) -> usize {
        self.dim * self.dim
    }

    /// Side length of the real PSD block.
    pub fn block_side(&self) -> usize {
        2 * self.dim
    }

    pub fn encode(&self, h: &HermitianMatrix) -> Vec<f64> {
        let m = self.dim;
        let mut out = Vec::with_capacity(m * m);
        out.extend((0..m).map(|i| h.get(i, i).re));
        for i in 0..m {
            for j in i + 1..m {
                let z = h.get(i, j);
                out.push(z.re);
                out.push(z.im);
            }
        }
        out
    }

    pub fn decode(&self, p: &[f64]) -> HermitianMatrix {
        let m = self.dim;
        assert_eq!(p.len(), m * m);
        let mut mat = crate::numerics::CMatrix::zeros(m, m);
        for i in 0..m {
            mat[(i, i)] = c64(p[i], 0.0);
        }
        let mut s = m;
        for i in 0..m {
            for j in i + 1..m {
                mat[(i, j)] = c64(p[s], p[s + 1]);
                mat[(j, i)] = c64(p[s], -p[s + 1]);
                s += 2;
            }
        }
        HermitianMatrix::from_matrix(mat)
    }

    pub fn embed(&self, h: &HermitianMatrix) -> DMatrix<f64> {
        let m = self.dim;
        DMatrix::from_fn(2 * m, 2 * m, |r, c| {
            let z = h.get(r % m, c % m);
            match (r < m, c < m) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        })
    }

    /// Inverse of [`Self::embed`] on the range of the embedding.
    pub fn unembed(&self, e: &DMatrix<f64>) -> HermitianMatrix {
        let m = self.dim;
        HermitianMatrix::from_matrix(crate::numerics::CMatrix::from_fn(m, m, |i, j| c64(e[(i, j)], e[(i + m, j)])))
    }
}

/// Square matrix of complex affine expressions `(Re, Im)` describing a
/// Hermitian-valued affine map.
#[derive(Debug, Clone)]
pub struct HermExpr {
    pub dim: usize,
    entries: Vec<(Affine, Affine)>,
}

impl HermExpr {
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> (Affine, Affine)) -> Self {
        let mut entries = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                entries.push(f(i, j));
            }
        }
        Self { dim, entries }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_fn(dim, |_, _| (Affine::zero(), Affine::zero()))
    }

    pub fn get(&self, i: usize, j: usize) -> &(Affine, Affine) {
        &self.entries[i * self.dim + j]
    }

    /// `self += s · other`.
    pub fn add_scaled(&mut self, other: &HermExpr, s: f64) -> &mut Self {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            a.0.add_scaled(&b.0, s);
            a.1.add_scaled(&b.1, s);
        }
        self
    }

    /// `self += e · I` for a scalar affine `e`.
    pub fn add_identity(&mut self, e: &Affine) -> &mut Self {
        for i in 0..self.dim {
            self.entries[i * self.dim + i].0.add_scaled(e, 1.0);
        }
        self
    }
}

/// Status reported by [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    /// Solved to the solver's reduced accuracy thresholds only.
    Inaccurate,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalFailure,
}

impl ConicStatus {
    /// Whether the primal point is usable.
    pub fn has_solution(&self) -> bool {
        matches!(self, Self::Optimal | Self::Inaccurate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: ConicStatus,
    pub x: Vec<f64>,
    /// Value of the objective as posed (maximization problems report the
    /// maximized value).
    pub objective: f64,
    pub residuals: Residuals,
    pub iterations: u32,
    pub detail: String,
}

impl ConicSolution {
    pub fn value(&self, e: &Affine) -> f64 {
        e.eval(&self.x)
    }
}

/// A stalled solve whose primal residual and relative duality gap are
/// below these is reported as [`ConicStatus::Inaccurate`] rather than a
/// failure.
pub const STALL_FEAS: f64 = 1e-5;
pub const STALL_GAP: f64 = 1e-4;

/// Interior-point backend behind [`ConicProblem::solve`].
pub const BACKEND: &str = "clarabel 0.11";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: u32,
    /// Shorter steps, heavier regularization and more refinement, for a
    /// second attempt after the default settings stall.
    pub careful: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200, careful: false }
    }
}

impl SolverOptions {
    pub fn new(tol: f64, max_iter: u32) -> Self {
        Self { tol, max_iter, careful: false }
    }

    pub fn careful(self) -> Self {
        Self { careful: true, ..self }
    }
}

/// A convex conic program under construction.
#[derive(Debug, Clone, Default)]
pub struct ConicProblem {
    registry: Vec<(String, VarRange)>,
    nvars: usize,
    objective: Affine,
    maximize: bool,
    blocks: Vec<ConeBlock>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    pub fn registry(&self) -> &[(String, VarRange)] {
        &self.registry
    }

    pub fn lookup(&self, name: &str) -> Option<VarRange> {
        self.registry.iter().find(|(n, _)| n == name).map(|(_, r)| *r)
    }

    /// Registers a block of `len` free real variables.
    pub fn add_var(&mut self, name: impl Into<String>, len: usize) -> VarRange {
        let r = VarRange { start: self.nvars, len };
        self.nvars += len;
        self.registry.push((name.into(), r));
        r
    }

    pub fn add_scalar(&mut self, name: impl Into<String>) -> Affine {
        self.add_var(name, 1).at(0)
    }

    pub fn add_hermitian(&mut self, name: impl Into<String>, dim: usize) -> HermitianVar {
        HermitianVar { range: self.add_var(name, dim * dim), dim }
    }

    /// Registers `[u; 1]` with `|u_n| ≤ 1` for every free entry.
    pub fn add_reflect_vector(&mut self, name: impl Into<String>, len: usize) -> PinnedComplexVar {
        assert!(len >= 1);
        let var = PinnedComplexVar { range: self.add_var(name, 2 * (len - 1)), len };
        for n in 0..len - 1 {
            self.add_soc(Affine::constant(1.0), vec![var.re(n), var.im(n)]);
        }
        var
    }

    pub fn maximize(&mut self, e: Affine) {
        self.objective = e;
        self.maximize = true;
    }

    pub fn minimize(&mut self, e: Affine) {
        self.objective = e;
        self.maximize = false;
    }

    fn push(&mut self, kind: ConeKind, rows: Vec<Affine>) {
        self.blocks.push(ConeBlock { kind, rows });
    }

    /// `e = 0`.
    pub fn add_eq(&mut self, e: Affine) {
        self.push(ConeKind::Zero, vec![e]);
    }

    /// `e ≥ 0`.
    pub fn add_nonneg(&mut self, e: Affine) {
        self.push(ConeKind::Nonnegative, vec![e]);
    }

    /// `lhs ≤ rhs`.
    pub fn add_le(&mut self, lhs: Affine, rhs: &Affine) {
        self.add_nonneg(rhs.clone().minus(&lhs));
    }

    /// `head ≥ ‖tail‖₂`.
    pub fn add_soc(&mut self, head: Affine, tail: Vec<Affine>) {
        let mut rows = Vec::with_capacity(tail.len() + 1);
        rows.push(head);
        rows.extend(tail);
        self.push(ConeKind::SecondOrder, rows);
    }

    /// `‖tail‖² ≤ bound` with `bound ≥ 0`, via the rotated form
    /// `(bound + 1)/2 ≥ ‖((bound − 1)/2, tail)‖`.
    pub fn add_squared_norm_le(&mut self, tail: Vec<Affine>, bound: &Affine) {
        let mut head = bound.clone().scaled(0.5);
        head.add_constant(0.5);
        let mut first = bound.clone().scaled(0.5);
        first.add_constant(-0.5);
        let mut rows = vec![first];
        rows.extend(tail);
        self.add_soc(head, rows);
    }

    /// `y e^{x/y} ≤ z`.
    pub fn add_exp(&mut self, x: Affine, y: Affine, z: Affine) {
        self.push(ConeKind::Exponential, vec![x, y, z]);
    }

    /// Hypograph of the perspective logarithm: `z ≤ t log₂(u/t)`.
    pub fn perspective_log_hypograph(&mut self, u: Affine, t: Affine, z: Affine) {
        self.add_exp(z.scaled(LN_2), t, u);
    }

    /// Real symmetric PSD constraint on a `d × d` matrix of expressions given
    /// by `f(i, j)` for `i ≤ j`.
    pub fn add_psd(&mut self, d: usize, mut f: impl FnMut(usize, usize) -> Affine) {
        let mut rows = Vec::with_capacity(triangular(d));
        for j in 0..d {
            for i in 0..=j {
                let e = f(i, j);
                rows.push(if i == j { e } else { e.scaled(SQRT_2) });
            }
        }
        self.push(ConeKind::Psd(d), rows);
    }

    /// Hermitian PSD constraint via the real embedding.
    pub fn add_hermitian_psd(&mut self, h: &HermExpr) {
        let m = h.dim;
        if m == 1 {
            self.add_nonneg(h.get(0, 0).0.clone());
            return;
        }
        self.add_psd(2 * m, |r, c| {
            let (re, im) = h.get(r % m, c % m);
            match (r < m, c < m) {
                (true, true) | (false, false) => re.clone(),
                (true, false) => im.clone().scaled(-1.0),
                (false, true) => im.clone(),
            }
        });
    }

    /// Cone kinds with their row counts, in insertion order.
    pub fn cone_layout(&self) -> Vec<(ConeKind, usize)> {
        self.blocks.iter().map(|b| (b.kind, b.rows.len())).collect()
    }

    pub fn solve(&self, opts: &SolverOptions) -> ConicSolution {
        solve(self, opts)
    }
}

fn failure(status: ConicStatus, n: usize, detail: String) -> ConicSolution {
    ConicSolution {
        status,
        x: vec![f64::NAN; n],
        objective: f64::NAN,
        residuals: Residuals { primal: f64::NAN, dual: f64::NAN, gap: f64::NAN },
        iterations: 0,
        detail,
    }
}

/// Solves `p` with Clarabel. Never panics on solver trouble; inspect the
/// returned status.
pub fn solve(p: &ConicProblem, opts: &SolverOptions) -> ConicSolution {
    let n = p.nvars;
    let sign = if p.maximize { -1.0 } else { 1.0 };
    let mut q = vec![0.0; n];
    for &(i, c) in &p.objective.terms {
        q[i] += sign * c;
    }

    let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut row = 0;
    for block in &p.blocks {
        if block.rows.is_empty() {
            continue;
        }
        for e in &block.rows {
            for &(j, c) in &e.terms {
                ii.push(row);
                jj.push(j);
                vv.push(-c);
            }
            b.push(e.constant);
            row += 1;
        }
        let len = block.rows.len();
        cones.push(match block.kind {
            ConeKind::Zero => SupportedConeT::ZeroConeT(len),
            ConeKind::Nonnegative => SupportedConeT::NonnegativeConeT(len),
            ConeKind::SecondOrder => SupportedConeT::SecondOrderConeT(len),
            ConeKind::Psd(d) => SupportedConeT::PSDTriangleConeT(d),
            ConeKind::Exponential => SupportedConeT::ExponentialConeT(),
        });
    }
    // Merge runs of scalar cones to keep the cone list short.
    let mut merged: Vec<SupportedConeT<f64>> = Vec::with_capacity(cones.len());
    for c in cones {
        match (merged.last_mut(), &c) {
            (Some(SupportedConeT::NonnegativeConeT(a)), SupportedConeT::NonnegativeConeT(b)) => *a += b,
            (Some(SupportedConeT::ZeroConeT(a)), SupportedConeT::ZeroConeT(b)) => *a += b,
            _ => merged.push(c),
        }
    }

    let a = CscMatrix::new_from_triplets(row, n, ii, jj, vv);
    let pmat = CscMatrix::zeros((n, n));
    let mut builder = DefaultSettingsBuilder::default();
    builder.verbose(false).max_iter(opts.max_iter).tol_gap_abs(opts.tol).tol_gap_rel(opts.tol).tol_feas(opts.tol);
    if opts.careful {
        builder
            .max_step_fraction(0.9)
            .static_regularization_constant(1e-7)
            .iterative_refinement_max_iter(30)
            .equilibrate_max_iter(50)
            .reduced_tol_feas(1e-5)
            .reduced_tol_gap_abs(1e-4)
            .reduced_tol_gap_rel(1e-4);
    }
    let settings = match builder.build() {
        Ok(s) => s,
        Err(e) => return failure(ConicStatus::NumericalFailure, n, format!("settings: {e}")),
    };
    let mut solver = match DefaultSolver::new(&pmat, &q, &a, &b, &merged, settings) {
        Ok(s) => s,
        Err(e) => return failure(ConicStatus::NumericalFailure, n, format!("setup: {e:?}")),
    };
    solver.solve();
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved => ConicStatus::Optimal,
        SolverStatus::AlmostSolved => ConicStatus::Inaccurate,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => ConicStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => ConicStatus::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => ConicStatus::MaxIter,
        SolverStatus::InsufficientProgress | SolverStatus::NumericalError
            if sol.r_prim <= STALL_FEAS
                && (sol.obj_val - sol.obj_val_dual).abs() <= STALL_GAP * sol.obj_val.abs().max(1.0) =>
        {
            ConicStatus::Inaccurate
        }
        _ => ConicStatus::NumericalFailure,
    };
    let x = sol.x.clone();
    let objective = if status.has_solution() { p.objective.eval(&x) } else { f64::NAN };
    let gap = (sol.obj_val - sol.obj_val_dual).abs();
    ConicSolution {
        status,
        x,
        objective,
        residuals: Residuals { primal: sol.r_prim, dual: sol.r_dual, gap },
        iterations: sol.iterations,
        detail: format!("{:?}", sol.status),
    }
}

/// Builds the eigenvalue program `max tr(C X) s.t. tr X = 1, X ⪰ 0` over
/// real symmetric `X`.
pub fn eigenvalue_program(c: &DMatrix<f64>) -> (ConicProblem, VarRange) {
    let d = c.nrows();
    let mut p = ConicProblem::new();
    let x = p.add_var("X", d * d);
    let idx = |i: usize, j: usize| if i <= j { i * d + j } else { j * d + i };
    let mut obj = Affine::zero();
    let mut tr = Affine::constant(-1.0);
    for i in 0..d {
        tr.add_term(x.index(idx(i, i)), 1.0);
        for j in 0..d {
            obj.add_term(x.index(idx(i, j)), c[(i, j)]);
        }
    }
    p.maximize(obj);
    p.add_eq(tr);
    p.add_psd(d, |i, j| x.at(idx(i, j)));
    (p, x)
}
