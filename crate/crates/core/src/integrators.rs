//! Time stepping: Poisson splitting, Hamiltonian splitting and Crank–Nicolson,
//! plus the dense one-step evolution operator for stability checks.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assembly::SystemOperators;
use crate::diagnostics::Iterations;
use crate::error::{Error, Result};
use crate::linsolve::{pbicgstab, pcg, BlockDiagPrec, Identity, LinOp, SolveStats, SolverParams};
use crate::plasma::envelope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    PoissonSplit,
    HamiltonianSplit,
    CrankNicolson,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::PoissonSplit, Scheme::HamiltonianSplit, Scheme::CrankNicolson];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::PoissonSplit => "poisson",
            Scheme::HamiltonianSplit => "hamiltonian",
            Scheme::CrankNicolson => "crank_nicolson",
        }
    }

    /// Block products spent on right-hand sides per step in the cost model.
    pub fn rhs_mvbp(&self) -> usize {
        match self {
            Scheme::PoissonSplit => 9,
            Scheme::HamiltonianSplit => 10,
            Scheme::CrankNicolson => 9,
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poisson" | "poisson_split" | "poissonsplit" => Ok(Scheme::PoissonSplit),
            "hamiltonian" | "hamiltonian_split" | "hamiltoniansplit" => Ok(Scheme::HamiltonianSplit),
            "cn" | "crank_nicolson" | "cranknicolson" => Ok(Scheme::CrankNicolson),
            _ => Err(Error::Config(format!("unknown scheme '{s}'"))),
        }
    }
}

/// Coefficients of (E, B, Y) at time t.
#[derive(Debug, Clone, PartialEq)]
pub struct StateU {
    pub e: Vec<f64>,
    pub b: Vec<f64>,
    pub y: Vec<f64>,
    pub t: f64,
}

impl StateU {
    pub fn zeros(ops: &SystemOperators) -> Self {
        StateU { e: vec![0.0; ops.dim_e()], b: vec![0.0; ops.dim_b()], y: vec![0.0; ops.dim_e()], t: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.e.len() + self.b.len() + self.y.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        [self.e.as_slice(), &self.b, &self.y].concat()
    }

    pub fn from_flat(ops: &SystemOperators, v: &[f64], t: f64) -> Result<Self> {
        let (ne, nb) = (ops.dim_e(), ops.dim_b());
        if v.len() != 2 * ne + nb {
            return Err(Error::InvalidArgument(format!("state vector of length {} for dimension {}", v.len(), 2 * ne + nb)));
        }
        Ok(StateU { e: v[..ne].to_vec(), b: v[ne..ne + nb].to_vec(), y: v[ne + nb..].to_vec(), t })
    }

    pub fn max_abs(&self) -> f64 {
        self.e.iter().chain(&self.b).chain(&self.y).fold(0.0, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub solver: SolverParams,
    /// Include the source arrays; off gives the homogeneous scheme.
    pub with_source: bool,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, dt: f64) -> Self {
        SchemeConfig { scheme, dt, solver: SolverParams::default(), with_source: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flow {
    Maxwell,
    Plasma,
    E,
    BY,
    CrankNicolson,
}

/// Which terms of the semi-discrete Ampère law each flow integrates. The
/// penalty A1 and the source always travel with CᵀM2B.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowTerms {
    pub curl_t: bool,
    pub penalty: bool,
    pub source: bool,
}

impl Flow {
    pub fn terms(&self) -> FlowTerms {
        let on = matches!(self, Flow::Maxwell | Flow::BY | Flow::CrankNicolson);
        FlowTerms { curl_t: on, penalty: on, source: on }
    }

    /// Number of field blocks in the flow's linear system.
    pub fn blocks(&self) -> usize {
        match self {
            Flow::Maxwell | Flow::E => 1,
            Flow::Plasma | Flow::BY => 2,
            Flow::CrankNicolson => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub flow: Flow,
    pub stats: SolveStats,
}

impl SolveRecord {
    pub fn block_products(&self) -> usize {
        self.flow.blocks() * self.stats.total_products()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub scheme: Scheme,
    pub solves: Vec<SolveRecord>,
}

impl StepReport {
    /// Iteration counts in the form the cost formulas take.
    pub fn iterations(&self) -> Iterations {
        let it = |f: Flow| -> Vec<f64> { self.solves.iter().filter(|s| s.flow == f).map(|s| s.stats.iterations as f64).collect() };
        let mean = |v: Vec<f64>| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        match self.scheme {
            Scheme::PoissonSplit => Iterations::Poisson { n_maxwell: mean(it(Flow::Maxwell)), n_plasma: mean(it(Flow::Plasma)) },
            Scheme::HamiltonianSplit => Iterations::Hamiltonian { n_e: mean(it(Flow::E)), n_by: mean(it(Flow::BY)) },
            Scheme::CrankNicolson => Iterations::CrankNicolson { n: mean(it(Flow::CrankNicolson)) },
        }
    }

    /// Block products counted by the solvers plus the right-hand-side share.
    pub fn mvbp_counted(&self) -> usize {
        self.scheme.rhs_mvbp() + self.solves.iter().map(|s| s.block_products()).sum::<usize>()
    }
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

struct MaxwellHalfOp<'a> {
    ops: &'a SystemOperators,
    dt: f64,
}

impl LinOp for MaxwellHalfOp<'_> {
    fn dim(&self) -> usize {
        self.ops.dim_e()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let o = self.ops;
        y.fill(0.0);
        o.m1.apply_add(1.0, x, y);
        axpy(0.25 * self.dt * self.dt, &o.curl_curl(x), y);
        o.a1.apply_add(0.5 * self.dt, x, y);
    }
}

/// [E; Y] systems of the plasma and BY flows.
struct EyOp<'a> {
    ops: &'a SystemOperators,
    dt: f64,
    /// BY flow: A1 on the diagonal, no Mwp coupling below it
    triangular: bool,
}

impl LinOp for EyOp<'_> {
    fn dim(&self) -> usize {
        2 * self.ops.dim_e()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let o = self.ops;
        let n = o.dim_e();
        let h = 0.5 * self.dt;
        let (xe, xy) = x.split_at(n);
        y.fill(0.0);
        let (ye, yy) = y.split_at_mut(n);
        o.m1.apply_add(1.0, xe, ye);
        o.m1_wp.apply_add(h, xy, ye);
        o.m1.apply_add(1.0, xy, yy);
        o.r_nue.apply_add(h, xy, yy);
        if self.triangular {
            o.a1.apply_add(h, xe, ye);
        } else {
            o.m1_wp.apply_add(-h, xe, yy);
        }
    }
}

struct CnOp<'a> {
    ops: &'a SystemOperators,
    dt: f64,
}

impl LinOp for CnOp<'_> {
    fn dim(&self) -> usize {
        2 * self.ops.dim_e() + self.ops.dim_b()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let o = self.ops;
        let (n, nb) = (o.dim_e(), o.dim_b());
        let h = 0.5 * self.dt;
        let (xe, rest) = x.split_at(n);
        let (xb, xy) = rest.split_at(nb);
        y.fill(0.0);
        let (ye, rest) = y.split_at_mut(n);
        let (yb, yy) = rest.split_at_mut(nb);
        o.m1.apply_add(1.0, xe, ye);
        o.a1.apply_add(h, xe, ye);
        axpy(-h, &o.curl_t_m2(xb), ye);
        o.m1_wp.apply_add(h, xy, ye);
        o.complex.curl.apply_add(h, xe, yb);
        axpy(1.0, xb, yb);
        o.m1_wp.apply_add(-h, xe, yy);
        o.m1.apply_add(1.0, xy, yy);
        o.r_nue.apply_add(h, xy, yy);
    }
}

/// Steps a state with one scheme over a fixed set of operators.
pub struct Integrator<'a> {
    pub ops: &'a SystemOperators,
    pub cfg: SchemeConfig,
}

impl<'a> Integrator<'a> {
    pub fn new(ops: &'a SystemOperators, cfg: SchemeConfig) -> Result<Self> {
        if !(cfg.dt > 0.0) || !cfg.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {}", cfg.dt)));
        }
        Ok(Integrator { ops, cfg })
    }

    /// ∫ S^inc over [t0, t0 + dt] from the closed-form sin/cos differences,
    /// times the envelope at the sub-interval midpoint when enabled.
    pub fn source_integral(&self, t0: f64, dt: f64) -> Option<Vec<f64>> {
        let o = self.ops;
        if !self.cfg.with_source || o.s_r.iter().chain(&o.s_i).all(|v| *v == 0.0) {
            return None;
        }
        let s = (t0 + dt).sin() - t0.sin();
        let c = (t0 + dt).cos() - t0.cos();
        let chi = o.sources.envelope_dt.map_or(1.0, |d| envelope(t0 + 0.5 * dt, d));
        Some(o.s_r.iter().zip(&o.s_i).map(|(r, i)| chi * (s * r - c * i)).collect())
    }

    /// Trapezoidal Maxwell half of the Poisson splitting.
    pub fn flow_maxwell(&self, st: &mut StateU, dt: f64, t0: f64) -> Result<SolveRecord> {
        let o = self.ops;
        let mut rhs = o.m1.apply(&st.e);
        axpy(0.5 * dt, &o.curl_t_m2(&st.b), &mut rhs);
        if let Some(src) = self.source_integral(t0, dt) {
            axpy(0.5, &src, &mut rhs);
        }
        let mut half = st.e.clone();
        let stats = pcg(&MaxwellHalfOp { ops: o, dt }, &o.m1_solver, &rhs, &mut half, self.cfg.solver)?;
        o.complex.curl.apply_add(-dt, &half, &mut st.b);
        for (e, h) in st.e.iter_mut().zip(&half) {
            *e = 2.0 * h - *e;
        }
        Ok(SolveRecord { flow: Flow::Maxwell, stats })
    }

    /// Trapezoidal plasma half of the Poisson splitting; B is untouched.
    pub fn flow_plasma(&self, st: &mut StateU, dt: f64) -> Result<SolveRecord> {
        let o = self.ops;
        let n = o.dim_e();
        let h = 0.5 * dt;
        let mut re = o.m1.apply(&st.e);
        o.m1_wp.apply_add(-h, &st.y, &mut re);
        let mut ry = o.m1.apply(&st.y);
        o.r_nue.apply_add(-h, &st.y, &mut ry);
        o.m1_wp.apply_add(h, &st.e, &mut ry);
        let rhs = [re, ry].concat();
        let mut x = [st.e.as_slice(), &st.y].concat();
        let prec = BlockDiagPrec::new(vec![&o.m1_solver, &o.m1_solver], &[n, n])?;
        let stats = pbicgstab(&EyOp { ops: o, dt, triangular: false }, &prec, &rhs, &mut x, self.cfg.solver)?;
        st.e.copy_from_slice(&x[..n]);
        st.y.copy_from_slice(&x[n..]);
        Ok(SolveRecord { flow: Flow::Plasma, stats })
    }

    /// Exact flow driven by E: E fixed, B and Y advance linearly.
    pub fn flow_e(&self, st: &mut StateU, dt: f64) -> Result<SolveRecord> {
        let o = self.ops;
        o.complex.curl.apply_add(-dt, &st.e, &mut st.b);
        let mut rhs = o.m1.apply(&st.y);
        o.m1_wp.apply_add(dt, &st.e, &mut rhs);
        let mut y = st.y.clone();
        let stats = pcg(&o.m1, &o.m1_solver, &rhs, &mut y, self.cfg.solver)?;
        st.y = y;
        Ok(SolveRecord { flow: Flow::E, stats })
    }

    /// Block-triangular (E, Y) flow of the Hamiltonian splitting.
    pub fn flow_by(&self, st: &mut StateU, dt: f64, t0: f64) -> Result<SolveRecord> {
        let o = self.ops;
        let n = o.dim_e();
        let h = 0.5 * dt;
        let mut re = o.m1.apply(&st.e);
        o.a1.apply_add(-h, &st.e, &mut re);
        axpy(dt, &o.curl_t_m2(&st.b), &mut re);
        o.m1_wp.apply_add(-h, &st.y, &mut re);
        if let Some(src) = self.source_integral(t0, dt) {
            axpy(1.0, &src, &mut re);
        }
        let mut ry = o.m1.apply(&st.y);
        o.r_nue.apply_add(-h, &st.y, &mut ry);
        let rhs = [re, ry].concat();
        let mut x = [st.e.as_slice(), &st.y].concat();
        let prec = BlockDiagPrec::new(vec![&o.m1_solver, &o.m1_solver], &[n, n])?;
        let stats = pbicgstab(&EyOp { ops: o, dt, triangular: true }, &prec, &rhs, &mut x, self.cfg.solver)?;
        st.e.copy_from_slice(&x[..n]);
        st.y.copy_from_slice(&x[n..]);
        Ok(SolveRecord { flow: Flow::BY, stats })
    }

    /// Full implicit midpoint step on (E, B, Y).
    pub fn flow_cn(&self, st: &mut StateU, dt: f64, t0: f64) -> Result<SolveRecord> {
        let o = self.ops;
        let (n, nb) = (o.dim_e(), o.dim_b());
        let h = 0.5 * dt;
        let mut re = o.m1.apply(&st.e);
        o.a1.apply_add(-h, &st.e, &mut re);
        axpy(h, &o.curl_t_m2(&st.b), &mut re);
        o.m1_wp.apply_add(-h, &st.y, &mut re);
        if let Some(src) = self.source_integral(t0, dt) {
            axpy(1.0, &src, &mut re);
        }
        let mut rb = st.b.clone();
        o.complex.curl.apply_add(-h, &st.e, &mut rb);
        let mut ry = o.m1.apply(&st.y);
        o.r_nue.apply_add(-h, &st.y, &mut ry);
        o.m1_wp.apply_add(h, &st.e, &mut ry);
        let rhs = [re, rb, ry].concat();
        let mut x = st.to_flat();
        let id = Identity(nb);
        let prec = BlockDiagPrec::new(vec![&o.m1_solver, &id, &o.m1_solver], &[n, nb, n])?;
        let stats = pbicgstab(&CnOp { ops: o, dt }, &prec, &rhs, &mut x, self.cfg.solver)?;
        st.e.copy_from_slice(&x[..n]);
        st.b.copy_from_slice(&x[n..n + nb]);
        st.y.copy_from_slice(&x[n + nb..]);
        Ok(SolveRecord { flow: Flow::CrankNicolson, stats })
    }

    /// Advance by one time step of the configured scheme.
    pub fn step(&self, st: &mut StateU) -> Result<StepReport> {
        let (dt, t) = (self.cfg.dt, st.t);
        let solves = match self.cfg.scheme {
            Scheme::PoissonSplit => {
                vec![self.flow_maxwell(st, 0.5 * dt, t)?, self.flow_plasma(st, dt)?, self.flow_maxwell(st, 0.5 * dt, t + 0.5 * dt)?]
            }
            Scheme::HamiltonianSplit => vec![self.flow_e(st, 0.5 * dt)?, self.flow_by(st, dt, t)?, self.flow_e(st, 0.5 * dt)?],
            Scheme::CrankNicolson => vec![self.flow_cn(st, dt, t)?],
        };
        st.t = t + dt;
        Ok(StepReport { scheme: self.cfg.scheme, solves })
    }
}

/// Block mass diag(M1, M2, M1) as a dense matrix.
pub fn state_mass(ops: &SystemOperators) -> DMatrix<f64> {
    let (n, nb) = (ops.dim_e(), ops.dim_b());
    let mut m = DMatrix::zeros(2 * n + nb, 2 * n + nb);
    let m1 = ops.m1.to_dense();
    m.view_mut((0, 0), (n, n)).copy_from(&m1);
    m.view_mut((n, n), (nb, nb)).copy_from(&ops.m2.to_dense());
    m.view_mut((n + nb, n + nb), (n, n)).copy_from(&m1);
    m
}

pub const DEFAULT_OPERATOR_CAP: usize = 1500;

/// Dense one-step map K of the homogeneous scheme and the block mass M.
pub fn build_evolution_operator(ops: &SystemOperators, cfg: SchemeConfig, cap: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dim = 2 * ops.dim_e() + ops.dim_b();
    if dim > cap {
        return Err(Error::TooLarge { dim, cap });
    }
    let integ = Integrator::new(ops, SchemeConfig { with_source: false, ..cfg })?;
    let mut k = DMatrix::zeros(dim, dim);
    let mut unit = vec![0.0; dim];
    for j in 0..dim {
        unit[j] = 1.0;
        let mut st = StateU::from_flat(ops, &unit, 0.0)?;
        integ.step(&mut st)?;
        k.column_mut(j).copy_from_slice(&st.to_flat());
        unit[j] = 0.0;
    }
    Ok((k, state_mass(ops)))
}

/// max over x of ‖Kx‖_M / ‖x‖_M.
pub fn m_norm(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<f64> {
    let chol = m.clone().cholesky().ok_or_else(|| Error::InvalidArgument("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    // Lᵀ K L⁻ᵀ
    let lt = l.transpose();
    let lt_inv = lt.clone().try_inverse().ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?;
    let a = &lt * k * lt_inv;
    Ok(a.singular_values().max())
}
