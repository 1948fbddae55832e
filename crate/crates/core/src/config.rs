//! JSON run configuration. All quantities are in normalized units
//! (time in 1/ω, length in c/ω).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::derham::{build_complex, DeRham};
use crate::error::{Error, Result};
use crate::freq_domain::FrequencyParams;
use crate::integrators::Scheme;
use crate::linsolve::SolverParams;
use crate::plasma::{BeamParams, Blob, GriddedData, PlasmaProfile, Polarization, ScalarProfile, VectorProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Converge,
    Stability,
    Conserve,
    Perf,
    Beam2d,
    Freqsolve,
}

impl RunMode {
    pub fn name(&self) -> &'static str {
        match self {
            RunMode::Converge => "converge",
            RunMode::Stability => "stability",
            RunMode::Conserve => "conserve",
            RunMode::Perf => "perf",
            RunMode::Beam2d => "beam2d",
            RunMode::Freqsolve => "freqsolve",
        }
    }
}

/// Exactly one of CFL = Δt/Δx or PPP = 2π/Δt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStep {
    Cfl(f64),
    Ppp(f64),
}

impl TimeStep {
    pub fn dt(&self, dx: f64) -> f64 {
        match *self {
            TimeStep::Cfl(c) => c * dx,
            TimeStep::Ppp(p) => 2.0 * PI / p,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    /// vacuum, benchmark_1d, blobs, single_blob
    Preset { name: String },
    Inline { profile: PlasmaProfile },
    /// ω_p² on a regular (x, y) grid from CSV rows x,y,value
    DensityFile { path: PathBuf, omega_c: f64, b0: [f64; 3], nu_e: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceConfig {
    None,
    Manufactured { mode: Polarization },
    Beam { beam: BeamParams, envelope: bool },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "default_true")]
    pub csv: bool,
    /// times at which field snapshots are written (beam runs)
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Sweep {
    #[serde(default)]
    pub ppw: Vec<f64>,
    #[serde(default)]
    pub cfl: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Checks {
    /// accepted band for fitted error slopes
    #[serde(default)]
    pub slope_band: Option<[f64; 2]>,
    /// run sweep entries on separate threads
    #[serde(default)]
    pub parallel: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: RunMode,
    pub domain: [[f64; 2]; 3],
    pub n_cells: [usize; 3],
    pub degrees: [usize; 3],
    pub periodic: [bool; 3],
    pub schemes: Vec<Scheme>,
    pub time_step: TimeStep,
    pub n_periods: f64,
    pub profile: ProfileSpec,
    pub source: SourceConfig,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub freq: Option<FrequencyParams>,
    pub output: OutputConfig,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub checks: Checks,
}

/// Blob pattern for the 2D runs on [0, 24π]², ω_p² peaking near `peak`.
pub fn blob_pattern(peak: f64) -> ScalarProfile {
    let l = 24.0 * PI;
    // (x, y, width, amplitude) in units of the box side
    let raw = [
        (0.55, 0.50, 0.10, 1.0),
        (0.70, 0.30, 0.08, 0.8),
        (0.75, 0.68, 0.09, 0.9),
        (0.45, 0.25, 0.07, 0.6),
        (0.40, 0.78, 0.06, 0.7),
        (0.88, 0.50, 0.10, 1.0),
    ];
    let blobs: Vec<Blob> = raw.iter().map(|&(x, y, w, a)| Blob { center: [x * l, y * l], width: w * l, amplitude: a }).collect();
    let mut unscaled = ScalarProfile::Blobs { blobs: blobs.clone(), scale: 1.0, x_start: 0.0, x_end: l };
    let mut top = 0.0f64;
    for i in 0..=96 {
        for j in 0..=96 {
            let v = unscaled.eval([l * i as f64 / 96.0, l * j as f64 / 96.0, 0.0]);
            top = top.max(v * v);
        }
    }
    if let ScalarProfile::Blobs { scale, .. } = &mut unscaled {
        *scale = peak / top;
    }
    unscaled
}

pub fn preset_profile(name: &str) -> Result<PlasmaProfile> {
    let l = 24.0 * PI;
    let mag = |wp: ScalarProfile| PlasmaProfile {
        omega_p: wp,
        omega_c: ScalarProfile::Constant(0.5),
        b0: VectorProfile::Constant([0.0, 0.0, 1.0]),
        nu_e: ScalarProfile::Constant(0.0),
    };
    match name {
        "vacuum" => Ok(PlasmaProfile::vacuum()),
        "benchmark_1d" => Ok(PlasmaProfile::benchmark_1d()),
        // beyond the O-mode cutoff ω_p = 1 in the densest spots
        "blobs" => Ok(mag(blob_pattern(1.4))),
        // between the X-mode R cutoff (ω_p² = 0.5) and upper hybrid (0.75)
        "single_blob" => Ok(mag(ScalarProfile::Blobs {
            blobs: vec![Blob { center: [0.6 * l, 0.42 * l], width: 0.1 * l, amplitude: 1.0 }],
            scale: 0.65 / 0.6,
            x_start: 0.0,
            x_end: l,
        })),
        other => Err(Error::Config(format!("unknown profile preset '{other}'"))),
    }
}

impl ProfileSpec {
    pub fn build(&self) -> Result<PlasmaProfile> {
        match self {
            ProfileSpec::Preset { name } => preset_profile(name),
            ProfileSpec::Inline { profile } => Ok(profile.clone()),
            ProfileSpec::DensityFile { path, omega_c, b0, nu_e } => Ok(PlasmaProfile {
                omega_p: ScalarProfile::Gridded(GriddedData::from_csv(path)?),
                omega_c: ScalarProfile::Constant(*omega_c),
                b0: VectorProfile::Constant(*b0),
                nu_e: ScalarProfile::Constant(*nu_e),
            }),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for d in 0..3 {
            if self.n_cells[d] == 0 || self.degrees[d] == 0 {
                return bad(format!("axis {d}: need at least one cell and degree ≥ 1"));
            }
            if !(self.domain[d][1] > self.domain[d][0]) {
                return bad(format!("axis {d}: empty domain"));
            }
        }
        if self.schemes.is_empty() {
            return bad("no scheme given".into());
        }
        let step = match self.time_step {
            TimeStep::Cfl(v) | TimeStep::Ppp(v) => v,
        };
        if !(step > 0.0 && step.is_finite()) {
            return bad(format!("time step parameter must be positive, got {step}"));
        }
        if !(self.n_periods > 0.0) {
            return bad("n_periods must be positive".into());
        }
        if self.sweep.ppw.iter().chain(&self.sweep.cfl).any(|v| !(*v > 0.0)) {
            return bad("sweep entries must be positive".into());
        }
        let manufactured = matches!(self.source, SourceConfig::Manufactured { .. });
        if matches!(self.mode, RunMode::Converge | RunMode::Stability | RunMode::Conserve | RunMode::Perf) && !manufactured {
            return bad(format!("mode {} needs a manufactured source", self.mode.name()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.domain[0][1] - self.domain[0][0]) / self.n_cells[0] as f64
    }

    /// 2π/Δx along x.
    pub fn ppw(&self) -> f64 {
        2.0 * PI / self.dx()
    }

    pub fn dt(&self) -> f64 {
        self.time_step.dt(self.dx())
    }

    /// Cells along x (and along y when the box is square in x, y and y is
    /// not a single periodic cell) giving the requested PPW.
    pub fn with_ppw(&self, ppw: f64) -> RunConfig {
        let mut c = self.clone();
        let dx = 2.0 * PI / ppw;
        for d in 0..2 {
            if d == 0 || self.n_cells[1] > 1 {
                c.n_cells[d] = (((self.domain[d][1] - self.domain[d][0]) / dx).round() as usize).max(1);
            }
        }
        c
    }

    pub fn build_complex(&self) -> Result<DeRham> {
        build_complex(self.n_cells, self.degrees, self.periodic, self.domain.map(|d| (d[0], d[1])))
    }

    /// Manufactured 1D study on [0, 3π] × [0, 2π]², degrees (3, 1, 1).
    pub fn manufactured(mode: RunMode, polarization: Polarization) -> RunConfig {
        let (sweep, step, schemes) = match mode {
            RunMode::Stability => (Sweep { ppw: vec![10.0], cfl: vec![0.25, 0.33, 0.5, 1.0] }, TimeStep::Cfl(0.25), Scheme::ALL.to_vec()),
            RunMode::Perf => (Sweep { ppw: vec![10.0, 20.0, 40.0], cfl: vec![] }, TimeStep::Cfl(0.25), Scheme::ALL.to_vec()),
            _ => (Sweep { ppw: vec![10.0, 20.0, 40.0], cfl: vec![] }, TimeStep::Cfl(0.25), Scheme::ALL.to_vec()),
        };
        RunConfig {
            mode,
            domain: [[0.0, 3.0 * PI], [0.0, 2.0 * PI], [0.0, 2.0 * PI]],
            n_cells: [15, 1, 1],
            degrees: [3, 1, 1],
            periodic: [false, true, true],
            schemes,
            time_step: step,
            n_periods: 3.0,
            profile: ProfileSpec::Preset { name: "benchmark_1d".into() },
            source: SourceConfig::Manufactured { mode: polarization },
            solver: SolverParams::default(),
            freq: None,
            output: OutputConfig { dir: PathBuf::from("out").join(mode.name()), csv: true, snapshot_times: vec![] },
            sweep,
            checks: Checks { slope_band: if mode == RunMode::Converge { Some([1.8, 2.2]) } else { None }, parallel: true },
        }
    }

    /// 2D beam on [0, 24π]² × [0, 2π], one periodic cell in z.
    pub fn beam_2d(ppw: f64, polarization: Polarization, profile: &str) -> RunConfig {
        let l = 24.0 * PI;
        let cells = (l / (2.0 * PI / ppw)).round() as usize;
        let pol = match polarization {
            Polarization::O => [0.0, 0.0, 1.0],
            Polarization::X => [0.0, 1.0, 0.0],
        };
        RunConfig {
            mode: RunMode::Beam2d,
            domain: [[0.0, l], [0.0, l], [0.0, 2.0 * PI]],
            n_cells: [cells, cells, 1],
            degrees: [3, 3, 1],
            periodic: [false, false, true],
            schemes: vec![Scheme::PoissonSplit],
            time_step: TimeStep::Ppp(32.0),
            n_periods: 20.0,
            profile: ProfileSpec::Preset { name: profile.into() },
            source: SourceConfig::Beam {
                beam: BeamParams { waist: 2.0 * PI, focus: [0.5 * l, PI], polarization: pol, planar: true },
                envelope: true,
            },
            solver: SolverParams::default(),
            freq: Some(FrequencyParams::default()),
            output: OutputConfig { dir: PathBuf::from("out").join("beam2d"), csv: true, snapshot_times: vec![] },
            sweep: Sweep::default(),
            checks: Checks::default(),
        }
    }
}
