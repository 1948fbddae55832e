//! Tracked quantities (energy, charge, div B), error norms against
//! time-harmonic reference solutions, energy balance and the cost model.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assembly::SystemOperators;
use crate::derham::{project_commuting, project_l2, DeRham, TensorSpace};
use crate::error::Result;
use crate::integrators::{Scheme, StateU};
use crate::plasma::envelope;
use crate::spline::gauss_rule;
use crate::stencil::{BlockMatrix, CsrMatrix, IntCsr};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn quad_form(m: &BlockMatrix, x: &[f64]) -> f64 {
    dot(&m.apply(x), x)
}

/// ½(EᵀM1E + BᵀM2B + YᵀM1Y)
pub fn hamiltonian(st: &StateU, ops: &SystemOperators) -> f64 {
    0.5 * (quad_form(&ops.m1, &st.e) + quad_form(&ops.m2, &st.b) + quad_form(&ops.m1, &st.y))
}

/// Σ_i (W E)_i for the weak divergence W = −GᵀM1 + B1, i.e. W E paired with
/// the constant V0 function.
pub fn total_charge(e: &[f64], weak_div: &CsrMatrix) -> f64 {
    weak_div.apply(e).iter().sum()
}

pub fn div_b_max(b: &[f64], div: &IntCsr) -> f64 {
    div.apply(b).iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// S^inc(t) including the envelope when the sources use one.
pub fn source_at(ops: &SystemOperators, t: f64) -> Vec<f64> {
    let chi = ops.sources.envelope_dt.map_or(1.0, |d| envelope(t, d));
    ops.s_r.iter().zip(&ops.s_i).map(|(r, i)| chi * (t.cos() * r + t.sin() * i)).collect()
}

/// (H^{n+1} − H^n)/Δt minus the midpoint value of −EᵀA1E − YᵀMνY + EᵀS.
pub fn energy_balance_residual(prev: &StateU, next: &StateU, ops: &SystemOperators, with_source: bool) -> f64 {
    let dt = next.t - prev.t;
    let mid = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect::<Vec<f64>>();
    let (e, y) = (mid(&prev.e, &next.e), mid(&prev.y, &next.y));
    let mut rate = -quad_form(&ops.a1, &e) - quad_form(&ops.m1_nue, &y);
    if with_source {
        rate += dot(&e, &source_at(ops, 0.5 * (prev.t + next.t)));
    }
    (hamiltonian(next, ops) - hamiltonian(prev, ops)) / dt - rate
}

pub fn energy_balance_series(states: &[StateU], ops: &SystemOperators, with_source: bool) -> Vec<f64> {
    states.windows(2).map(|w| energy_balance_residual(&w[0], &w[1], ops, with_source)).collect()
}

/// Average inner iterations per solve type within a step or a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Iterations {
    CrankNicolson { n: f64 },
    Poisson { n_maxwell: f64, n_plasma: f64 },
    Hamiltonian { n_e: f64, n_by: f64 },
}

impl Iterations {
    pub fn scheme(&self) -> Scheme {
        match self {
            Iterations::CrankNicolson { .. } => Scheme::CrankNicolson,
            Iterations::Poisson { .. } => Scheme::PoissonSplit,
            Iterations::Hamiltonian { .. } => Scheme::HamiltonianSplit,
        }
    }

    /// Component-wise mean of several records of the same scheme.
    pub fn mean(items: &[Iterations]) -> Option<Iterations> {
        let first = *items.first()?;
        let k = items.len() as f64;
        let mut acc = [0.0; 2];
        for it in items {
            let v = match (first, it) {
                (Iterations::CrankNicolson { .. }, Iterations::CrankNicolson { n }) => [*n, 0.0],
                (Iterations::Poisson { .. }, Iterations::Poisson { n_maxwell, n_plasma }) => [*n_maxwell, *n_plasma],
                (Iterations::Hamiltonian { .. }, Iterations::Hamiltonian { n_e, n_by }) => [*n_e, *n_by],
                _ => return None,
            };
            acc[0] += v[0];
            acc[1] += v[1];
        }
        Some(match first {
            Iterations::CrankNicolson { .. } => Iterations::CrankNicolson { n: acc[0] / k },
            Iterations::Poisson { .. } => Iterations::Poisson { n_maxwell: acc[0] / k, n_plasma: acc[1] / k },
            Iterations::Hamiltonian { .. } => Iterations::Hamiltonian { n_e: acc[0] / k, n_by: acc[1] / k },
        })
    }
}

/// Matrix-vector block products per time step.
pub fn mvbp(it: &Iterations) -> f64 {
    match *it {
        Iterations::CrankNicolson { n } => 15.0 + 12.0 * n,
        Iterations::Poisson { n_maxwell, n_plasma } => 17.0 + 4.0 * n_maxwell + 8.0 * n_plasma,
        Iterations::Hamiltonian { n_e, n_by } => 18.0 + 4.0 * n_e + 8.0 * n_by,
    }
}

/// Local field operations per period.
pub fn lfops(ppp: f64, mvbp: f64, dim: usize) -> f64 {
    ppp * mvbp * dim as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub scheme: Scheme,
    pub ppw: f64,
    pub ppp: f64,
    pub dim: usize,
    pub iterations: Iterations,
    pub mvbp: f64,
    /// mean per-step MVBP from the solver counters
    pub mvbp_counted: f64,
    pub lfops: f64,
}

/// Least-squares slope of log(y) against log(x).
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// Evaluation of a discrete field at a fixed tensor Gauss rule.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    comps: Vec<CsrMatrix>,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl FieldSampler {
    /// Gauss rule with p_d + 3 points per cell along each axis d.
    pub fn new(space: &TensorSpace) -> Result<Self> {
        let grid = space.grid();
        // per axis: (cell, x, w)
        let mut axes: Vec<Vec<(usize, f64, f64)>> = Vec::new();
        for d in 0..3 {
            let h = grid.cell_width(d);
            let bp: Vec<f64> = (0..=grid.n_cells[d]).map(|k| grid.domain[d].0 + k as f64 * h).collect();
            let rule = gauss_rule(grid.degrees[d] + 3, &bp)?;
            let mut v = Vec::new();
            for (cell, (pts, wts)) in rule.points.iter().zip(&rule.weights).enumerate() {
                for (x, w) in pts.iter().zip(wts) {
                    v.push((cell, *x, *w));
                }
            }
            axes.push(v);
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for a in &axes[0] {
            for b in &axes[1] {
                for c in &axes[2] {
                    points.push([a.1, b.1, c.1]);
                    weights.push(a.2 * b.2 * c.2);
                }
            }
        }
        let mut comps = Vec::new();
        for c in 0..space.n_components() {
            // per axis, per point: (global indices, values)
            let tabs: Vec<Vec<Vec<(usize, f64)>>> = (0..3)
                .map(|d| {
                    let basis = space.basis(c, d);
                    axes[d]
                        .iter()
                        .map(|(cell, x, _)| {
                            let bv = basis.eval_in_cell(*cell, *x, 0);
                            bv.values[0].iter().enumerate().map(|(k, v)| (basis.global_index(bv.first + k as isize), *v)).collect()
                        })
                        .collect()
                })
                .collect();
            let s = space.component_shape(c);
            let off = space.component_offset(c);
            let mut trip = Vec::new();
            let mut q = 0;
            for ta in &tabs[0] {
                for tb in &tabs[1] {
                    for tc in &tabs[2] {
                        for (ia, va) in ta {
                            for (ib, vb) in tb {
                                for (ic, vc) in tc {
                                    trip.push((q, off + (ia * s[1] + ib) * s[2] + ic, va * vb * vc));
                                }
                            }
                        }
                        q += 1;
                    }
                }
            }
            comps.push(CsrMatrix::from_triplets(points.len(), space.dim(), trip));
        }
        Ok(FieldSampler { comps, points, weights })
    }

    pub fn n_components(&self) -> usize {
        self.comps.len()
    }

    /// values[c][q]
    pub fn values(&self, coeffs: &[f64]) -> Vec<Vec<f64>> {
        self.comps.iter().map(|m| m.apply(coeffs)).collect()
    }

    /// Load vector ∫ Λ_i · f with f given at the sample points as [c][q].
    pub fn load(&self, f: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.comps.first().map_or(0, |m| m.ncols)];
        for (m, fc) in self.comps.iter().zip(f) {
            for (q, (fq, w)) in fc.iter().zip(&self.weights).enumerate() {
                let a = fq * w;
                if a == 0.0 {
                    continue;
                }
                for k in m.indptr[q]..m.indptr[q + 1] {
                    out[m.indices[k]] += a * m.values[k];
                }
            }
        }
        out
    }

    /// ‖u_h − f‖_L2 with f given at the sample points as [c][q].
    pub fn l2_diff(&self, coeffs: &[f64], f: &[Vec<f64>]) -> f64 {
        let v = self.values(coeffs);
        let mut s = 0.0;
        for (vc, fc) in v.iter().zip(f) {
            for ((a, b), w) in vc.iter().zip(fc).zip(&self.weights) {
                s += w * (a - b).powi(2);
            }
        }
        s.sqrt()
    }
}

/// Per-field error norms at one time, ordered (E, B, Y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub t: f64,
    pub proj: [f64; 3],
    pub total: [f64; 3],
    pub solver: [f64; 3],
    /// peak-in-time L2 norm of each exact field, used for normalization
    pub reference: [f64; 3],
}

fn combine(v: &[f64; 3], r: &[f64; 3]) -> f64 {
    (v.iter().map(|a| a * a).sum::<f64>() / r.iter().map(|a| a * a).sum::<f64>()).sqrt()
}

impl ErrorReport {
    pub fn rel_total(&self) -> f64 {
        combine(&self.total, &self.reference)
    }
    pub fn rel_solver(&self) -> f64 {
        combine(&self.solver, &self.reference)
    }
    pub fn rel_proj(&self) -> f64 {
        combine(&self.proj, &self.reference)
    }
}

/// Exact solution of the form Re{û(x) e^{−it}} for (E, B, Y), sampled once
/// and projected once; any time is a cos/sin combination of the two parts.
#[derive(Debug, Clone)]
pub struct HarmonicReference {
    v1: FieldSampler,
    v2: FieldSampler,
    /// [field] -> (re, im) samples as [c][q]
    samples: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
    /// [field] -> (re, im) coefficients: L2 projection for E, Y, commuting for B
    coeffs: Vec<(Vec<f64>, Vec<f64>)>,
    m1: BlockMatrix,
    m2: BlockMatrix,
    reference: [f64; 3],
}

impl HarmonicReference {
    pub fn new(complex: &DeRham, m1: &BlockMatrix, m2: &BlockMatrix, amplitudes: &(dyn Fn([f64; 3]) -> [[Complex64; 3]; 3] + Sync)) -> Result<Self> {
        let v1 = FieldSampler::new(&complex.v1)?;
        let v2 = FieldSampler::new(&complex.v2)?;
        let mut samples = Vec::new();
        let mut coeffs = Vec::new();
        let mut reference = [0.0; 3];
        for f in 0..3 {
            let sampler = if f == 1 { &v2 } else { &v1 };
            let part = |im: bool| -> Vec<Vec<f64>> {
                let vals: Vec<[Complex64; 3]> = sampler.points.iter().map(|x| amplitudes(*x)[f]).collect();
                (0..3).map(|c| vals.iter().map(|z| if im { z[c].im } else { z[c].re }).collect()).collect()
            };
            let (re, im) = (part(false), part(true));
            let norms = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> f64 {
                let mut s = 0.0;
                for c in 0..3 {
                    for q in 0..sampler.weights.len() {
                        s += sampler.weights[q] * a[c][q] * b[c][q];
                    }
                }
                s
            };
            // max_t ‖cos t a + sin t b‖² in closed form
            let (aa, bb, ab) = (norms(&re, &re), norms(&im, &im), norms(&re, &im));
            reference[f] = (0.5 * (aa + bb) + (0.25 * (aa - bb).powi(2) + ab * ab).sqrt()).sqrt();
            samples.push((re, im));
            let proj = |im: bool| -> Result<Vec<f64>> {
                let g = |x: [f64; 3]| -> Vec<f64> { amplitudes(x)[f].iter().map(|z| if im { z.im } else { z.re }).collect() };
                if f == 1 {
                    Ok(project_commuting(&complex.v2, &g)?.data)
                } else {
                    Ok(project_l2(&complex.v1, &g)?.0.data)
                }
            };
            coeffs.push((proj(false)?, proj(true)?));
        }
        Ok(HarmonicReference { v1, v2, samples, coeffs, m1: m1.clone(), m2: m2.clone(), reference })
    }

    pub fn reference_norms(&self) -> [f64; 3] {
        self.reference
    }

    /// Projected exact solution (P1 E, Π2 B, P1 Y) at time t.
    pub fn projected(&self, t: f64) -> StateU {
        let (c, s) = (t.cos(), t.sin());
        let mix = |p: &(Vec<f64>, Vec<f64>)| p.0.iter().zip(&p.1).map(|(a, b)| c * a + s * b).collect::<Vec<f64>>();
        StateU { e: mix(&self.coeffs[0]), b: mix(&self.coeffs[1]), y: mix(&self.coeffs[2]), t }
    }

    fn exact_samples(&self, f: usize, t: f64) -> Vec<Vec<f64>> {
        let (c, s) = (t.cos(), t.sin());
        let (re, im) = &self.samples[f];
        re.iter().zip(im).map(|(a, b)| a.iter().zip(b).map(|(x, y)| c * x + s * y).collect()).collect()
    }

    /// ½ Σ ‖u^ex(t)‖² over (E, B, Y), by the sampling quadrature.
    pub fn exact_energy(&self, t: f64) -> f64 {
        let mut h = 0.0;
        for f in 0..3 {
            let sampler = if f == 1 { &self.v2 } else { &self.v1 };
            for comp in self.exact_samples(f, t) {
                h += comp.iter().zip(&sampler.weights).map(|(v, w)| w * v * v).sum::<f64>();
            }
        }
        0.5 * h
    }

    pub fn errors(&self, st: &StateU) -> ErrorReport {
        let p = self.projected(st.t);
        let fields = [(&st.e, &p.e), (&st.b, &p.b), (&st.y, &p.y)];
        let mut rep = ErrorReport { t: st.t, proj: [0.0; 3], total: [0.0; 3], solver: [0.0; 3], reference: self.reference };
        for (f, (uh, pu)) in fields.iter().enumerate() {
            let (sampler, mass) = if f == 1 { (&self.v2, &self.m2) } else { (&self.v1, &self.m1) };
            let ex = self.exact_samples(f, st.t);
            rep.total[f] = sampler.l2_diff(uh, &ex);
            rep.proj[f] = sampler.l2_diff(pu, &ex);
            let d: Vec<f64> = uh.iter().zip(pu.iter()).map(|(a, b)| a - b).collect();
            rep.solver[f] = quad_form(mass, &d).max(0.0).sqrt();
        }
        rep
    }
}

/// One row of the per-step diagnostics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub hamiltonian: f64,
    pub total_charge: f64,
    pub div_b_max: f64,
    pub boundary_dissipation: f64,
    pub collisional_dissipation: f64,
    pub source_power: f64,
    pub err_total: Option<f64>,
    pub err_solver: Option<f64>,
    pub err_proj: Option<f64>,
    pub iterations: Vec<usize>,
    pub mvbp: Option<usize>,
}

impl DiagnosticRecord {
    pub fn new(st: &StateU, ops: &SystemOperators, weak_div: &CsrMatrix, errors: Option<&ErrorReport>) -> Self {
        DiagnosticRecord {
            t: st.t,
            hamiltonian: hamiltonian(st, ops),
            total_charge: total_charge(&st.e, weak_div),
            div_b_max: div_b_max(&st.b, &ops.complex.div),
            boundary_dissipation: quad_form(&ops.a1, &st.e),
            collisional_dissipation: quad_form(&ops.m1_nue, &st.y),
            source_power: dot(&st.e, &source_at(ops, st.t)),
            err_total: errors.map(|e| e.rel_total()),
            err_solver: errors.map(|e| e.rel_solver()),
            err_proj: errors.map(|e| e.rel_proj()),
            iterations: Vec::new(),
            mvbp: None,
        }
    }
}

pub const DIAGNOSTIC_COLUMNS: [&str; 12] = [
    "t",
    "hamiltonian",
    "total_charge",
    "div_b_max",
    "boundary_dissipation",
    "collisional_dissipation",
    "source_power",
    "err_total",
    "err_solver",
    "err_proj",
    "iterations",
    "mvbp",
];

/// CSV with the fixed columns above; iteration counts are joined by ';'.
pub fn write_diagnostics_csv<W: Write>(out: W, rows: &[DiagnosticRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DIAGNOSTIC_COLUMNS)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    for r in rows {
        w.write_record([
            format!("{:e}", r.t),
            format!("{:e}", r.hamiltonian),
            format!("{:e}", r.total_charge),
            format!("{:e}", r.div_b_max),
            format!("{:e}", r.boundary_dissipation),
            format!("{:e}", r.collisional_dissipation),
            format!("{:e}", r.source_power),
            opt(r.err_total),
            opt(r.err_solver),
            opt(r.err_proj),
            r.iterations.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(";"),
            r.mvbp.map_or(String::new(), |m| m.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_weak_div, SourceSpec};
    use crate::derham::build_complex;
    use crate::integrators::{Integrator, SchemeConfig};
    use crate::plasma::{Manufactured, PlasmaProfile, Polarization};
    use std::f64::consts::PI;

    fn strip(n: usize, p: &PlasmaProfile, src: SourceSpec) -> SystemOperators {
        let c = build_complex([n, 1, 1], [3, 1, 1], [false, true, true], [(0.0, 3.0 * PI), (0.0, 2.0 * PI), (0.0, 2.0 * PI)]).unwrap();
        SystemOperators::assemble(c, p, src, None).unwrap()
    }

    #[test]
    fn cost_model_examples() {
        assert!((mvbp(&Iterations::CrankNicolson { n: 11.8 }) - 156.6).abs() < 1e-12);
        assert!((mvbp(&Iterations::Poisson { n_maxwell: 8.7, n_plasma: 4.0 }) - 83.8).abs() < 1e-12);
        assert_eq!(mvbp(&Iterations::Hamiltonian { n_e: 0.0, n_by: 0.0 }), 18.0);
        assert_eq!(lfops(40.0, 48.0, 100), 192000.0);
        assert_eq!(lfops(40.0, 0.0, 100), 0.0);
        assert_eq!(lfops(80.0, 48.0, 200), 4.0 * lfops(40.0, 48.0, 100));
        let m = Iterations::mean(&[Iterations::Poisson { n_maxwell: 2.0, n_plasma: 4.0 }, Iterations::Poisson { n_maxwell: 4.0, n_plasma: 6.0 }]).unwrap();
        assert_eq!(m, Iterations::Poisson { n_maxwell: 3.0, n_plasma: 5.0 });
        assert!(Iterations::mean(&[Iterations::Poisson { n_maxwell: 2.0, n_plasma: 4.0 }, Iterations::CrankNicolson { n: 1.0 }]).is_none());
    }

    #[test]
    fn slope_of_power_law() {
        let x = [0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|h: &f64| 3.0 * h.powi(2)).collect();
        assert!((fit_slope(&x, &y).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn zero_state_quantities() {
        let ops = strip(4, &PlasmaProfile::vacuum(), SourceSpec::default());
        let st = StateU::zeros(&ops);
        let wd = assemble_weak_div(&ops.complex, &ops.m1);
        assert_eq!(hamiltonian(&st, &ops), 0.0);
        assert_eq!(total_charge(&st.e, &wd), 0.0);
        assert_eq!(div_b_max(&st.b, &ops.complex.div), 0.0);
        let next = StateU { t: 0.1, ..st.clone() };
        assert_eq!(energy_balance_residual(&st, &next, &ops, true), 0.0);
    }

    #[test]
    fn div_b_of_curl_is_zero_and_max_is_true_max() {
        let ops = strip(4, &PlasmaProfile::vacuum(), SourceSpec::default());
        let e: Vec<f64> = (0..ops.dim_e()).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(div_b_max(&ops.complex.curl.apply(&e), &ops.complex.div), 0.0);
        let b: Vec<f64> = (0..ops.dim_b()).map(|i| (i as f64 * 1.3).cos()).collect();
        let want = ops.complex.div.apply(&b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(div_b_max(&b, &ops.complex.div), want);
    }

    #[test]
    fn charge_matches_operator_helper() {
        let ops = strip(5, &PlasmaProfile::vacuum(), SourceSpec::default());
        let wd = assemble_weak_div(&ops.complex, &ops.m1);
        let e: Vec<f64> = (0..ops.dim_e()).map(|i| (i as f64).sqrt()).collect();
        assert!((total_charge(&e, &wd) - ops.total_charge(&e)).abs() < 1e-10 * ops.total_charge(&e).abs().max(1.0));
    }

    #[test]
    fn projected_reference_has_only_projection_error() {
        let m = Manufactured::benchmark(Polarization::X);
        let ops = strip(12, &m.profile(), m.source_spec());
        let r = HarmonicReference::new(&ops.complex, &ops.m1, &ops.m2, &|x| m.amplitudes(x)).unwrap();
        let st = r.projected(0.7);
        let e = r.errors(&st);
        assert!(e.solver.iter().all(|v| *v == 0.0));
        for f in 0..3 {
            assert!((e.total[f] - e.proj[f]).abs() <= 1e-14 * e.reference[f]);
        }
        // triangle inequality on a perturbed state
        let mut p = st.clone();
        p.e.iter_mut().for_each(|v| *v *= 1.01);
        let e = r.errors(&p);
        for f in 0..3 {
            assert!(e.solver[f] <= e.total[f] + e.proj[f] + 1e-14);
        }
        // E = (−cos x sin t, −ω_c cos x cos t, 0) peaks at t = π/2
        let peak_e = (4.0 * PI * PI * 1.5 * PI).sqrt();
        assert!((r.reference_norms()[0] - peak_e).abs() < 1e-8 * peak_e);
    }

    #[test]
    fn hamiltonian_of_projected_x_mode() {
        let m = Manufactured::benchmark(Polarization::X);
        let l = 3.0 * PI;
        let exact = m.hamiltonian_x_t0(l);
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for n in [6, 12, 24] {
            let ops = strip(n, &m.profile(), SourceSpec::default());
            let r = HarmonicReference::new(&ops.complex, &ops.m1, &ops.m2, &|x| m.amplitudes(x)).unwrap();
            let h = hamiltonian(&r.projected(0.0), &ops);
            errs.push((h - exact).abs() / exact);
            hs.push(l / n as f64);
        }
        assert!(errs[2] < 1e-5, "{errs:?}");
        assert!(errs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn energy_balance_small_for_ideal_cn() {
        let ops = strip(6, &PlasmaProfile::vacuum(), SourceSpec::default());
        let c = build_complex([3, 2, 2], [2, 2, 1], [true; 3], [(0.0, 1.0); 3]).unwrap();
        let per = SystemOperators::assemble(c, &PlasmaProfile::vacuum(), SourceSpec::default(), None).unwrap();
        for o in [&ops, &per] {
            let it = Integrator::new(o, SchemeConfig::new(Scheme::CrankNicolson, 0.1)).unwrap();
            let mut st = StateU::zeros(o);
            st.e.iter_mut().enumerate().for_each(|(i, v)| *v = (i as f64 * 0.3).sin());
            let mut states = vec![st.clone()];
            for _ in 0..3 {
                it.step(&mut st).unwrap();
                states.push(st.clone());
            }
            let h = hamiltonian(&states[0], o);
            for r in energy_balance_series(&states, o, false) {
                assert!(r.abs() < 1e-9 * h.max(1.0), "{r}");
            }
        }
    }

    #[test]
    fn csv_columns_are_fixed() {
        let rec = DiagnosticRecord {
            t: 0.5,
            hamiltonian: 1.0,
            total_charge: 0.0,
            div_b_max: 0.0,
            boundary_dissipation: 0.0,
            collisional_dissipation: 0.0,
            source_power: 0.0,
            err_total: Some(0.1),
            err_solver: None,
            err_proj: None,
            iterations: vec![3, 4, 3],
            mvbp: Some(75),
        };
        let mut buf = Vec::new();
        write_diagnostics_csv(&mut buf, &[rec]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), DIAGNOSTIC_COLUMNS.join(","));
        assert!(lines.next().unwrap().ends_with("3;4;3,75"));
    }
}
