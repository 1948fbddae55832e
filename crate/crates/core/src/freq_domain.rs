//! Time-harmonic problem (CᵀM2C − M_{1,ε} − iA1) Ê = −iŜ and the
//! comparison residual between a time-domain run and its harmonic limit.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_dielectric_mass, DielectricMass, SystemOperators};
use crate::diagnostics::FieldSampler;
use crate::error::{Error, Result};
use crate::linsolve::{pbicgstab, BlockDiagPrec, LinOp, SolveStats, SolverParams};
use crate::plasma::{dielectric_apply, stix, PlasmaProfile};
use crate::stencil::CsrMatrix;

type C = Complex64;

/// Assembled frequency-domain operator, stored as real and imaginary parts.
pub struct FrequencySystem<'a> {
    pub ops: &'a SystemOperators,
    pub eps: DielectricMass,
    profile: PlasmaProfile,
    /// Re(A) = CᵀM2C − Re M_{1,ε}
    pub a_re: CsrMatrix,
    /// Im(A) = −Im M_{1,ε} − A1
    pub a_im: CsrMatrix,
    pub rhs_re: Vec<f64>,
    pub rhs_im: Vec<f64>,
}

pub fn assemble_frequency_system<'a>(ops: &'a SystemOperators, profile: &PlasmaProfile) -> Result<FrequencySystem<'a>> {
    let eps = assemble_dielectric_mass(&ops.complex.v1, profile)?;
    let c = ops.complex.curl.to_csr();
    let k = c.transpose().matmul(&ops.m2.to_csr().matmul(&c));
    let a_re = k.add(&eps.re.to_csr().scaled(-1.0));
    let a_im = eps.im.to_csr().scaled(-1.0).add(&ops.a1.to_csr().scaled(-1.0));
    // −i(S_R + iS_I) = S_I − iS_R
    let rhs_re = ops.s_i.clone();
    let rhs_im = ops.s_r.iter().map(|v| -v).collect();
    Ok(FrequencySystem { ops, eps, profile: profile.clone(), a_re, a_im, rhs_re, rhs_im })
}

impl FrequencySystem<'_> {
    pub fn dim(&self) -> usize {
        self.a_re.nrows
    }

    /// (yr, yi) = A (xr + i xi)
    pub fn apply(&self, xr: &[f64], xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut yr = self.a_re.apply(xr);
        self.a_im.apply_add(-1.0, xi, &mut yr);
        let mut yi = self.a_re.apply(xi);
        self.a_im.apply_add(1.0, xr, &mut yi);
        (yr, yi)
    }

    pub fn apply_complex(&self, x: &[C]) -> Vec<C> {
        let (xr, xi): (Vec<f64>, Vec<f64>) = x.iter().map(|z| (z.re, z.im)).unzip();
        let (yr, yi) = self.apply(&xr, &xi);
        yr.into_iter().zip(yi).map(|(a, b)| C::new(a, b)).collect()
    }

    pub fn rhs(&self) -> Vec<C> {
        self.rhs_re.iter().zip(&self.rhs_im).map(|(a, b)| C::new(*a, *b)).collect()
    }

    /// ‖Ax − b‖/‖b‖ (absolute when b = 0).
    pub fn relative_residual(&self, x: &[C]) -> f64 {
        let ax = self.apply_complex(x);
        let b = self.rhs();
        let r: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
        let bn: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if bn > 0.0 {
            r / bn
        } else {
            r
        }
    }

    fn direct_solve(&self) -> Result<Vec<C>> {
        let n = self.dim();
        let mut trip: Vec<Triplet<usize, usize, c64>> = Vec::with_capacity(self.a_re.nnz() + self.a_im.nnz());
        for (i, j, v) in self.a_re.triplets() {
            trip.push(Triplet::new(i, j, c64::new(v, 0.0)));
        }
        for (i, j, v) in self.a_im.triplets() {
            trip.push(Triplet::new(i, j, c64::new(0.0, v)));
        }
        let a = SparseColMat::<usize, c64>::try_new_from_triplets(n, n, &trip).map_err(|e| Error::Direct(format!("{e:?}")))?;
        let lu = a.sp_lu().map_err(|e| Error::Direct(format!("{e:?}")))?;
        let b = Mat::<c64>::from_fn(n, 1, |i, _| c64::new(self.rhs_re[i], self.rhs_im[i]));
        let x = lu.solve(&b);
        let out: Vec<C> = (0..n).map(|i| C::new(x[(i, 0)].re, x[(i, 0)].im)).collect();
        if out.iter().any(|z| !z.is_finite()) {
            return Err(Error::Direct("non-finite solution".into()));
        }
        Ok(out)
    }

    fn iterative_solve(&self, params: SolverParams) -> Result<(Vec<C>, SolveStats)> {
        let n = self.dim();
        let op = RealForm(self);
        let prec = BlockDiagPrec::new(vec![&self.ops.m1_solver, &self.ops.m1_solver], &[n, n])?;
        let b = [self.rhs_re.clone(), self.rhs_im.clone()].concat();
        let mut x = vec![0.0; 2 * n];
        let stats = pbicgstab(&op, &prec, &b, &mut x, params)?;
        Ok(((0..n).map(|i| C::new(x[i], x[n + i])).collect(), stats))
    }

    /// Ŷ from ω̂ₚŶ = i(Ê − εÊ) by an L2 projection; zero where ω̂ₚ = 0.
    pub fn recover_y(&self, e_hat: &[C]) -> Result<Vec<C>> {
        let v1 = &self.ops.complex.v1;
        let sampler = FieldSampler::new(v1)?;
        let (er, ei): (Vec<f64>, Vec<f64>) = e_hat.iter().map(|z| (z.re, z.im)).unzip();
        let (vr, vi) = (sampler.values(&er), sampler.values(&ei));
        let nq = sampler.points.len();
        let mut fr = vec![vec![0.0; nq]; 3];
        let mut fi = vec![vec![0.0; nq]; 3];
        for (q, x) in sampler.points.iter().enumerate() {
            let wp = self.profile.omega_p(*x);
            if wp == 0.0 {
                continue;
            }
            let e = [0, 1, 2].map(|c| C::new(vr[c][q], vi[c][q]));
            let eps_e = dielectric_apply(&stix(&self.profile, *x)?, self.profile.b0(*x), e);
            for c in 0..3 {
                let y = C::i() * (e[c] - eps_e[c]) / wp;
                fr[c][q] = y.re;
                fi[c][q] = y.im;
            }
        }
        let mut yr = sampler.load(&fr);
        let mut yi = sampler.load(&fi);
        self.ops.m1_solver.solve_in_place(&mut yr);
        self.ops.m1_solver.solve_in_place(&mut yi);
        Ok(yr.into_iter().zip(yi).map(|(a, b)| C::new(a, b)).collect())
    }
}

/// [[Re A, −Im A], [Im A, Re A]] acting on [xr; xi].
struct RealForm<'s, 'a>(&'s FrequencySystem<'a>);

impl LinOp for RealForm<'_, '_> {
    fn dim(&self) -> usize {
        2 * self.0.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.0.dim();
        let (yr, yi) = self.0.apply(&x[..n], &x[n..]);
        y[..n].copy_from_slice(&yr);
        y[n..].copy_from_slice(&yi);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Iterative,
    Direct,
    /// iterative first, sparse LU if it fails
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyParams {
    pub method: SolveMethod,
    pub solver: SolverParams,
}

impl Default for FrequencyParams {
    fn default() -> Self {
        FrequencyParams { method: SolveMethod::Auto, solver: SolverParams { tol: 1e-10, max_iter: 2000 } }
    }
}

#[derive(Debug, Clone)]
pub struct FrequencySolution {
    pub e_hat: Vec<C>,
    /// −i C Ê
    pub b_hat: Vec<C>,
    pub y_hat: Vec<C>,
    /// ‖AÊ − b‖/‖b‖
    pub residual: f64,
    pub method: SolveMethod,
    pub stats: Option<SolveStats>,
}

impl FrequencySolution {
    /// Re{Ê e^{−it}}
    pub fn e_at(&self, t: f64) -> Vec<f64> {
        let (c, s) = (t.cos(), t.sin());
        self.e_hat.iter().map(|z| z.re * c + z.im * s).collect()
    }
}

pub fn solve_frequency(sys: &FrequencySystem, params: FrequencyParams) -> Result<FrequencySolution> {
    let (e_hat, method, stats) = match params.method {
        SolveMethod::Direct => (sys.direct_solve()?, SolveMethod::Direct, None),
        SolveMethod::Iterative => {
            let (x, st) = sys.iterative_solve(params.solver)?;
            (x, SolveMethod::Iterative, Some(st))
        }
        SolveMethod::Auto => match sys.iterative_solve(params.solver) {
            Ok((x, st)) => (x, SolveMethod::Iterative, Some(st)),
            Err(Error::NotConverged(_) | Error::Breakdown(_)) => (sys.direct_solve()?, SolveMethod::Direct, None),
            Err(e) => return Err(e),
        },
    };
    let residual = sys.relative_residual(&e_hat);
    let curl = &sys.ops.complex.curl;
    let (er, ei): (Vec<f64>, Vec<f64>) = e_hat.iter().map(|z| (z.re, z.im)).unzip();
    let (cr, ci) = (curl.apply(&er), curl.apply(&ei));
    let b_hat = cr.iter().zip(&ci).map(|(r, i)| C::new(*i, -r)).collect();
    let y_hat = sys.recover_y(&e_hat)?;
    Ok(FrequencySolution { e_hat, b_hat, y_hat, residual, method, stats })
}

/// Tracks R(t) = (E_h − Re{Ê e^{−it}}) normalized by the running maximum of
/// max(‖E^th‖, ‖E_h‖) over the recorded history.
#[derive(Debug, Clone)]
pub struct HarmonicResidual {
    running_max: f64,
}

impl Default for HarmonicResidual {
    fn default() -> Self {
        Self::new()
    }
}

impl HarmonicResidual {
    pub fn new() -> Self {
        HarmonicResidual { running_max: 0.0 }
    }

    /// Returns the residual coefficients and the normalized L2 norm.
    pub fn update(&mut self, ops: &SystemOperators, e_h: &[f64], sol: &FrequencySolution, t: f64) -> (Vec<f64>, f64) {
        let e_th = sol.e_at(t);
        let m_norm = |v: &[f64]| v.iter().zip(ops.m1.apply(v)).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt();
        let r: Vec<f64> = e_h.iter().zip(&e_th).map(|(a, b)| a - b).collect();
        self.running_max = self.running_max.max(m_norm(&e_th)).max(m_norm(e_h));
        let nr = m_norm(&r);
        let rel = if self.running_max > 0.0 { nr / self.running_max } else { 0.0 };
        let scale = if self.running_max > 0.0 { 1.0 / self.running_max } else { 0.0 };
        (r.into_iter().map(|v| v * scale).collect(), rel)
    }
}
