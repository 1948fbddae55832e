//! Plasma profiles, Stix parameters, dielectric tensor, dispersion scans,
//! the Gaussian beam source and the manufactured O/X-mode solutions.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assembly::{BoundaryField, SourceSpec, VectorField};
use crate::derham::Face;
use crate::error::{Error, Result};

type C = Complex64;

/// Gaussian bump used by the synthetic density patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: [f64; 2],
    pub width: f64,
    pub amplitude: f64,
}

/// Bilinear table over the (x, y) plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GriddedData {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// values[i][j] at (xs[i], ys[j])
    pub values: Vec<Vec<f64>>,
}

impl GriddedData {
    /// Read rows `x,y,value` (header optional) on a full tensor grid.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() == 3 => rows.push((v[0], v[1], v[2])),
                Ok(v) => return Err(Error::Config(format!("expected 3 columns, got {}", v.len()))),
                Err(_) if rows.is_empty() => continue,
                Err(e) => return Err(Error::Config(format!("bad number in {}: {e}", path.display()))),
            }
        }
        let mut xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        for v in [&mut xs, &mut ys] {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.dedup();
        }
        if xs.len() < 2 || ys.len() < 2 || xs.len() * ys.len() != rows.len() {
            return Err(Error::Config(format!("{} is not a full grid with at least 2x2 nodes", path.display())));
        }
        let mut values = vec![vec![f64::NAN; ys.len()]; xs.len()];
        for (x, y, v) in rows {
            let i = xs.iter().position(|a| *a == x).unwrap();
            let j = ys.iter().position(|a| *a == y).unwrap();
            values[i][j] = v;
        }
        Ok(GriddedData { xs, ys, values })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let locate = |v: &[f64], t: f64| -> (usize, f64) {
            let t = t.clamp(v[0], v[v.len() - 1]);
            let i = match v.iter().position(|a| *a > t) {
                Some(0) => 0,
                Some(i) => i - 1,
                None => v.len() - 2,
            };
            (i, (t - v[i]) / (v[i + 1] - v[i]))
        };
        let (i, s) = locate(&self.xs, x);
        let (j, r) = locate(&self.ys, y);
        let v = &self.values;
        (1.0 - s) * ((1.0 - r) * v[i][j] + r * v[i][j + 1]) + s * ((1.0 - r) * v[i + 1][j] + r * v[i + 1][j + 1])
    }
}

pub type ScalarFn = Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarProfile {
    Constant(f64),
    Linear { gradient: [f64; 3], offset: f64 },
    /// sqrt of `scale * ramp(x) * Σ a exp(-|(x,y) - c|² / w²)`, so that the
    /// blobs describe ω_p², i.e. the density. `ramp` rises linearly from 0 at
    /// `x_start` to 1 at `x_end`.
    Blobs { blobs: Vec<Blob>, scale: f64, x_start: f64, x_end: f64 },
    /// sqrt of bilinearly interpolated ω_p² data
    Gridded(GriddedData),
    #[serde(skip)]
    Custom(ScalarFn),
}

impl std::fmt::Debug for ScalarProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalarProfile::Constant(v) => write!(f, "Constant({v})"),
            ScalarProfile::Linear { gradient, offset } => write!(f, "Linear({gradient:?}, {offset})"),
            ScalarProfile::Blobs { blobs, scale, .. } => write!(f, "Blobs({} blobs, scale {scale})", blobs.len()),
            ScalarProfile::Gridded(g) => write!(f, "Gridded({}x{})", g.xs.len(), g.ys.len()),
            ScalarProfile::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ScalarProfile {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        match self {
            ScalarProfile::Constant(v) => *v,
            ScalarProfile::Linear { gradient, offset } => offset + gradient[0] * x[0] + gradient[1] * x[1] + gradient[2] * x[2],
            ScalarProfile::Blobs { blobs, scale, x_start, x_end } => {
                let ramp = ((x[0] - x_start) / (x_end - x_start)).clamp(0.0, 1.0);
                let sum: f64 = blobs
                    .iter()
                    .map(|b| {
                        let d2 = (x[0] - b.center[0]).powi(2) + (x[1] - b.center[1]).powi(2);
                        b.amplitude * (-d2 / (b.width * b.width)).exp()
                    })
                    .sum();
                (scale * ramp * sum).max(0.0).sqrt()
            }
            ScalarProfile::Gridded(g) => g.eval(x[0], x[1]).max(0.0).sqrt(),
            ScalarProfile::Custom(f) => f(x),
        }
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VectorProfile {
    Constant([f64; 3]),
    #[serde(skip)]
    Custom(VectorFn),
}

impl std::fmt::Debug for VectorProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VectorProfile::Constant(v) => write!(f, "Constant({v:?})"),
            VectorProfile::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl VectorProfile {
    pub fn eval(&self, x: [f64; 3]) -> [f64; 3] {
        match self {
            VectorProfile::Constant(v) => *v,
            VectorProfile::Custom(f) => f(x),
        }
    }
}

/// Normalized plasma parameters as functions of position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlasmaProfile {
    pub omega_p: ScalarProfile,
    pub omega_c: ScalarProfile,
    pub b0: VectorProfile,
    pub nu_e: ScalarProfile,
}

impl PlasmaProfile {
    pub fn vacuum() -> Self {
        PlasmaProfile {
            omega_p: ScalarProfile::Constant(0.0),
            omega_c: ScalarProfile::Constant(0.0),
            b0: VectorProfile::Constant([0.0, 0.0, 1.0]),
            nu_e: ScalarProfile::Constant(0.0),
        }
    }

    /// ω_p = x/100, ω_c = 0.5, b0 = e_z, no collisions.
    pub fn benchmark_1d() -> Self {
        PlasmaProfile {
            omega_p: ScalarProfile::Linear { gradient: [0.01, 0.0, 0.0], offset: 0.0 },
            omega_c: ScalarProfile::Constant(0.5),
            b0: VectorProfile::Constant([0.0, 0.0, 1.0]),
            nu_e: ScalarProfile::Constant(0.0),
        }
    }

    pub fn omega_p(&self, x: [f64; 3]) -> f64 {
        self.omega_p.eval(x)
    }
    pub fn omega_c(&self, x: [f64; 3]) -> f64 {
        self.omega_c.eval(x)
    }
    pub fn b0(&self, x: [f64; 3]) -> [f64; 3] {
        self.b0.eval(x)
    }
    pub fn nu_e(&self, x: [f64; 3]) -> f64 {
        self.nu_e.eval(x)
    }

    /// Check |b0| = 1 and ν_e ≥ 0 at the given points.
    pub fn validate(&self, points: &[[f64; 3]]) -> Result<()> {
        for x in points {
            let b = self.b0(*x);
            let n = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
            if (n - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("|b0| = {n} at {x:?}")));
            }
            if self.nu_e(*x) < 0.0 {
                return Err(Error::Config(format!("negative collision rate at {x:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StixPoint {
    pub s: C,
    pub d: C,
    pub p: C,
}

/// Stix parameters at a point.
pub fn stix(profile: &PlasmaProfile, x: [f64; 3]) -> Result<StixPoint> {
    let wp2 = profile.omega_p(x).powi(2);
    let wc = profile.omega_c(x);
    let g = C::new(1.0, profile.nu_e(x));
    let den = g * g - wc * wc;
    if den.norm() == 0.0 {
        return Err(Error::CyclotronResonance(x));
    }
    Ok(StixPoint { s: 1.0 - g * wp2 / den, d: wc * wp2 / den, p: 1.0 - wp2 / g })
}

/// ε v = S v − i D b0 × v + (P − S) b0 (b0 · v)
pub fn dielectric_apply(st: &StixPoint, b0: [f64; 3], v: [C; 3]) -> [C; 3] {
    let cross = [b0[1] * v[2] - b0[2] * v[1], b0[2] * v[0] - b0[0] * v[2], b0[0] * v[1] - b0[1] * v[0]];
    let dot = b0[0] * v[0] + b0[1] * v[1] + b0[2] * v[2];
    [0, 1, 2].map(|k| st.s * v[k] - C::i() * st.d * cross[k] + (st.p - st.s) * b0[k] * dot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarization {
    O,
    X,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionSample {
    pub x: [f64; 3],
    pub n2: f64,
    /// n² changes sign between the previous sample and this one
    pub cutoff: bool,
    /// S changes sign between the previous sample and this one (X-mode)
    pub resonance: bool,
}

/// Local refractive index for perpendicular propagation along a path of
/// points, with sign-change flags. Collisions are ignored.
pub fn dispersion_scan(profile: &PlasmaProfile, points: &[[f64; 3]], mode: Polarization) -> Result<Vec<DispersionSample>> {
    let mut out: Vec<DispersionSample> = Vec::with_capacity(points.len());
    let mut prev_s: Option<f64> = None;
    for x in points {
        let wp2 = profile.omega_p(*x).powi(2);
        let wc = profile.omega_c(*x);
        if (1.0 - wc * wc) == 0.0 {
            return Err(Error::CyclotronResonance(*x));
        }
        let s = 1.0 - wp2 / (1.0 - wc * wc);
        let d = wc * wp2 / (1.0 - wc * wc);
        let n2 = match mode {
            Polarization::O => 1.0 - wp2,
            Polarization::X => s - d * d / s,
        };
        let (cutoff, resonance) = match out.last() {
            Some(last) => {
                let res = mode == Polarization::X && prev_s.is_some_and(|ps| ps * s <= 0.0 && ps != s);
                // a pole also flips the sign of n²; only count zeros
                let cut = !res && last.n2.is_finite() && n2.is_finite() && last.n2 * n2 <= 0.0 && last.n2 != n2;
                (cut, res)
            }
            None => (false, false),
        };
        prev_s = Some(s);
        out.push(DispersionSample { x: *x, n2, cutoff, resonance });
    }
    Ok(out)
}

/// Gaussian beam launched along +x from the plane x = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    pub waist: f64,
    /// (y0, z0)
    pub focus: [f64; 2],
    pub polarization: [f64; 3],
    /// drop the z offset from the radius, for runs that are constant in z
    #[serde(default)]
    pub planar: bool,
}

impl BeamParams {
    pub fn rayleigh_range(&self) -> f64 {
        self.waist * self.waist / 2.0
    }

    pub fn e_field(&self, x: [f64; 3]) -> [C; 3] {
        let xr = self.rayleigh_range();
        let w2 = self.waist * self.waist * (1.0 + (x[0] / xr).powi(2));
        let kappa = x[0] / (x[0] * x[0] + xr * xr);
        let psi = (x[0] / xr).atan();
        let mut r2 = (x[1] - self.focus[0]).powi(2);
        if !self.planar {
            r2 += (x[2] - self.focus[1]).powi(2);
        }
        let amp = self.waist / w2.sqrt() * (-r2 / w2).exp();
        let phase = x[0] + 0.5 * kappa * r2 - psi;
        let z = C::from_polar(amp, phase);
        self.polarization.map(|e| z * e)
    }
}

/// Beam fields (Ê, B̂) with B̂ = −i curl Ê from 4th-order central differences.
pub fn gaussian_beam_fields(params: &BeamParams, x: [f64; 3]) -> ([C; 3], [C; 3]) {
    let e = params.e_field(x);
    let h = 1e-3;
    // partial[d][k] = ∂_d E_k
    let mut partial = [[C::new(0.0, 0.0); 3]; 3];
    for (d, row) in partial.iter_mut().enumerate() {
        let at = |s: f64| {
            let mut y = x;
            y[d] += s * h;
            params.e_field(y)
        };
        let (p1, m1, p2, m2) = (at(1.0), at(-1.0), at(2.0), at(-2.0));
        for k in 0..3 {
            row[k] = (8.0 * (p1[k] - m1[k]) - (p2[k] - m2[k])) / (12.0 * h);
        }
    }
    let curl = [partial[1][2] - partial[2][1], partial[2][0] - partial[0][2], partial[0][1] - partial[1][0]];
    (e, curl.map(|c| -C::i() * c))
}

/// Boundary source ŝ = Ê − B̂ × ν on the incoming face x = 0, zero elsewhere.
pub fn beam_boundary_field(params: BeamParams) -> BoundaryField {
    Arc::new(move |x, face: Face| {
        if face.axis != 0 || face.upper {
            return [C::new(0.0, 0.0); 3];
        }
        let (e, b) = gaussian_beam_fields(&params, x);
        let n = face.outward_normal();
        let bxn = [b[1] * n[2] - b[2] * n[1], b[2] * n[0] - b[0] * n[2], b[0] * n[1] - b[1] * n[0]];
        [0, 1, 2].map(|k| e[k] - bxn[k])
    })
}

/// Source ramp 2/π arctan(t / (20 Δt)).
pub fn envelope(t: f64, dt: f64) -> f64 {
    2.0 / PI * (t / (20.0 * dt)).atan()
}

/// Exact real fields at one point and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactFields {
    pub e: [f64; 3],
    pub b: [f64; 3],
    pub y: [f64; 3],
}

/// Manufactured solution with ω_p = slope·x, constant ω_c, b0 = e_z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Manufactured {
    pub mode: Polarization,
    pub omega_c: f64,
    pub wp_slope: f64,
}

impl Manufactured {
    pub fn benchmark(mode: Polarization) -> Self {
        Manufactured { mode, omega_c: 0.5, wp_slope: 0.01 }
    }

    pub fn profile(&self) -> PlasmaProfile {
        PlasmaProfile {
            omega_p: ScalarProfile::Linear { gradient: [self.wp_slope, 0.0, 0.0], offset: 0.0 },
            omega_c: ScalarProfile::Constant(self.omega_c),
            b0: VectorProfile::Constant([0.0, 0.0, 1.0]),
            nu_e: ScalarProfile::Constant(0.0),
        }
    }

    fn wp(&self, x: f64) -> f64 {
        self.wp_slope * x
    }

    /// Complex amplitudes (Ê, B̂, Ŷ); real fields are Re{· e^{−it}}.
    pub fn amplitudes(&self, x: [f64; 3]) -> [[C; 3]; 3] {
        let z = C::new(0.0, 0.0);
        let (s, c) = x[0].sin_cos();
        let wc = self.omega_c;
        match self.mode {
            Polarization::O => {
                let ex = C::from_polar(1.0, x[0]);
                [[z, z, ex], [z, -ex, z], [z, z, C::i() * self.wp(x[0]) * ex]]
            }
            Polarization::X => [
                [C::new(0.0, -c), C::new(-wc * c, 0.0), z],
                [z, z, C::new(0.0, -wc * s)],
                [C::new(self.wp(x[0]) * c, 0.0), z, z],
            ],
        }
    }

    pub fn fields(&self, t: f64, x: [f64; 3]) -> ExactFields {
        let rot = C::from_polar(1.0, -t);
        let a = self.amplitudes(x);
        let re = |v: [C; 3]| v.map(|z| (z * rot).re);
        ExactFields { e: re(a[0]), b: re(a[1]), y: re(a[2]) }
    }

    /// Volume source split as S = S_R cos t + S_I sin t.
    pub fn volume_source(&self, x: [f64; 3]) -> ([f64; 3], [f64; 3]) {
        let wp2 = self.wp(x[0]).powi(2);
        let (s, c) = x[0].sin_cos();
        match self.mode {
            Polarization::O => ([0.0, 0.0, -wp2 * s], [0.0, 0.0, wp2 * c]),
            Polarization::X => ([(wp2 - 1.0) * c, 0.0, 0.0], [0.0; 3]),
        }
    }

    /// Boundary data ŝ = S_R^inc + i S_I^inc; `nu1` is the x-component of the
    /// outward normal.
    pub fn boundary_source(&self, x: [f64; 3], nu1: f64) -> [C; 3] {
        let (s, c) = x[0].sin_cos();
        let wc = self.omega_c;
        match self.mode {
            Polarization::O => [C::new(0.0, 0.0), C::new(0.0, 0.0), C::new((1.0 - nu1) * c, (1.0 - nu1) * s)],
            Polarization::X => [C::new(0.0, -c), C::new(-wc * c, wc * nu1 * s), C::new(0.0, 0.0)],
        }
    }

    pub fn source_spec(&self) -> SourceSpec {
        let me = *self;
        let bf: BoundaryField = Arc::new(move |x, face: Face| me.boundary_source(x, face.outward_normal()[0]));
        let vr: VectorField = Arc::new(move |x| me.volume_source(x).0);
        let vi: VectorField = Arc::new(move |x| me.volume_source(x).1);
        SourceSpec { boundary_field: Some(bf), volume_r: Some(vr), volume_i: Some(vi), envelope_dt: None }
    }

    /// Exact Hamiltonian of the X-mode solution at t = 0 on [0, L] × [0, 2π]²,
    /// from direct integration of the fields.
    pub fn hamiltonian_x_t0(&self, length: f64) -> f64 {
        let l = length;
        // ∫cos² = L/2 + sin 2L / 4, ∫x² cos² = L³/6 + (L/4) cos 2L + (2L² − 1) sin 2L / 8
        let c2 = l / 2.0 + (2.0 * l).sin() / 4.0;
        let x2c2 = l.powi(3) / 6.0 + l / 4.0 * (2.0 * l).cos() + (2.0 * l * l - 1.0) * (2.0 * l).sin() / 8.0;
        0.5 * 4.0 * PI * PI * (self.omega_c.powi(2) * c2 + self.wp_slope.powi(2) * x2c2)
    }

    /// Closed form quoted for the X-mode Hamiltonian at t = 0 (slope 1/100).
    pub fn hamiltonian_x_t0_quoted(&self, length: f64) -> f64 {
        let l = length;
        PI * PI * (self.omega_c.powi(2) * l + (4.0 * l.powi(3) + 6.0 * l * l - 3.0) / (12.0 * 1e4))
    }

    /// Total charge ∫ div E of the X-mode solution on [0, L] × [0, 2π]².
    pub fn charge_x(&self, t: f64, length: f64) -> f64 {
        // E_x = −cos x sin t, so ∫ ∂_x E_x = 4π² (cos 0 − cos L) sin t
        4.0 * PI * PI * (1.0 - length.cos()) * t.sin()
    }
}
