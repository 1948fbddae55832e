//! Assembly of every matrix and source array of the semi-discrete system.
//!
//! Integrals use p_max + 1 Gauss points per cell and direction. Face
//! integrals collapse the normal direction to a single point.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::derham::{DeRham, Face, Grid, TensorSpace};
use crate::error::{Error, Result};
use crate::linsolve::KroneckerMassSolver;
use crate::plasma::{stix, PlasmaProfile};
use crate::spline::{gauss_rule, BSplineBasis1D};
use crate::stencil::{AxisBand, BlockMatrix, CsrMatrix, StencilMatrix};

/// Quadrature points of one axis, grouped by cell.
#[derive(Debug, Clone)]
pub struct AxisQuad {
    /// cell index of each group, as seen by the bases
    pub cells: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
}

impl AxisQuad {
    fn len(&self) -> usize {
        self.points.iter().map(|p| p.len()).sum()
    }
}

/// Tensor quadrature over the volume or over a face.
#[derive(Debug, Clone)]
pub struct QuadGrid {
    pub axes: [AxisQuad; 3],
}

impl QuadGrid {
    pub fn volume(grid: &Grid) -> Self {
        let axes = [0, 1, 2].map(|d| {
            let h = grid.cell_width(d);
            let bp: Vec<f64> = (0..=grid.n_cells[d]).map(|k| grid.domain[d].0 + k as f64 * h).collect();
            let rule = gauss_rule(grid.quad_points(), &bp).expect("valid breakpoints");
            AxisQuad { cells: (0..grid.n_cells[d]).collect(), points: rule.points, weights: rule.weights }
        });
        QuadGrid { axes }
    }

    pub fn face(grid: &Grid, face: Face) -> Self {
        let mut q = Self::volume(grid);
        let d = face.axis;
        let cell = if face.upper { grid.n_cells[d] - 1 } else { 0 };
        q.axes[d] = AxisQuad { cells: vec![cell], points: vec![vec![face.coordinate(grid)]], weights: vec![vec![1.0]] };
        q
    }

    pub fn shape(&self) -> [usize; 3] {
        [0, 1, 2].map(|d| self.axes[d].len())
    }

    pub fn n_points(&self) -> usize {
        self.shape().iter().product()
    }

    /// Flat point list with weights, x-major.
    pub fn points(&self) -> Vec<([f64; 3], f64)> {
        let flat = |a: &AxisQuad| -> Vec<(f64, f64)> {
            a.points.iter().flatten().copied().zip(a.weights.iter().flatten().copied()).collect()
        };
        let (px, py, pz) = (flat(&self.axes[0]), flat(&self.axes[1]), flat(&self.axes[2]));
        let mut out = Vec::with_capacity(px.len() * py.len() * pz.len());
        for (x, wx) in &px {
            for (y, wy) in &py {
                for (z, wz) in &pz {
                    out.push(([*x, *y, *z], wx * wy * wz));
                }
            }
        }
        out
    }

    pub fn eval_scalar(&self, f: &dyn Fn([f64; 3]) -> f64) -> Vec<f64> {
        self.points().into_iter().map(|(x, _)| f(x)).collect()
    }
}

/// Basis values at the quadrature points of one axis.
struct AxisTab {
    /// [group][q][a]
    vals: Vec<Vec<Vec<f64>>>,
    /// unwrapped index of local function 0, per group
    first: Vec<isize>,
    /// flat quadrature offset of each group
    qoff: Vec<usize>,
}

impl AxisTab {
    fn new(basis: &BSplineBasis1D, aq: &AxisQuad) -> Self {
        let mut vals = Vec::new();
        let mut first = Vec::new();
        let mut qoff = Vec::new();
        let mut off = 0;
        for (g, cell) in aq.cells.iter().enumerate() {
            let v: Vec<Vec<f64>> = aq.points[g].iter().map(|x| basis.eval_in_cell(*cell, *x, 0).values.swap_remove(0)).collect();
            vals.push(v);
            first.push(basis.first_in_cell(*cell));
            qoff.push(off);
            off += aq.points[g].len();
        }
        AxisTab { vals, first, qoff }
    }
}

fn band(row: &TensorSpace, rc: usize, col: &TensorSpace, cc: usize) -> [AxisBand; 3] {
    let g = row.grid();
    [0, 1, 2].map(|d| AxisBand::new(row.basis(rc, d).dim(), col.basis(cc, d).dim(), g.periodic[d], g.degrees[d]))
}

/// ∫ w Λ_row,i Λ_col,j over the region described by `qg`; `w` holds the
/// weight at each point of `qg` (without quadrature weights).
pub fn assemble_pair(row: (&TensorSpace, usize), col: (&TensorSpace, usize), qg: &QuadGrid, w: &[f64]) -> StencilMatrix {
    let (rs, rc) = row;
    let (cs, cc) = col;
    let mut m = StencilMatrix::zeros(band(rs, rc, cs, cc));
    if w.iter().all(|v| *v == 0.0) {
        return m;
    }
    let rt: Vec<AxisTab> = (0..3).map(|d| AxisTab::new(rs.basis(rc, d), &qg.axes[d])).collect();
    let ct: Vec<AxisTab> = (0..3).map(|d| AxisTab::new(cs.basis(cc, d), &qg.axes[d])).collect();
    let rb: Vec<&BSplineBasis1D> = (0..3).map(|d| rs.basis(rc, d)).collect();
    let cb: Vec<&BSplineBasis1D> = (0..3).map(|d| cs.basis(cc, d)).collect();
    let nr = [0, 1, 2].map(|d| rb[d].degree() + 1);
    let nc = [0, 1, 2].map(|d| cb[d].degree() + 1);
    let qs = qg.shape();
    let (nrt, nct) = (nr[0] * nr[1] * nr[2], nc[0] * nc[1] * nc[2]);
    let mut elem = vec![0.0; nrt * nct];
    let mut rv = vec![0.0; nrt];
    let mut cv = vec![0.0; nct];
    for gx in 0..qg.axes[0].cells.len() {
        for gy in 0..qg.axes[1].cells.len() {
            for gz in 0..qg.axes[2].cells.len() {
                elem.iter_mut().for_each(|v| *v = 0.0);
                let g = [gx, gy, gz];
                let nq = [0, 1, 2].map(|d| qg.axes[d].points[g[d]].len());
                for qx in 0..nq[0] {
                    for qy in 0..nq[1] {
                        for qz in 0..nq[2] {
                            let q = [qx, qy, qz];
                            let flat = [0, 1, 2].map(|d| rt[d].qoff[g[d]] + q[d]);
                            let mut wt = w[(flat[0] * qs[1] + flat[1]) * qs[2] + flat[2]];
                            if wt == 0.0 {
                                continue;
                            }
                            for d in 0..3 {
                                wt *= qg.axes[d].weights[g[d]][q[d]];
                            }
                            let (r0, r1, r2) = (&rt[0].vals[gx][qx], &rt[1].vals[gy][qy], &rt[2].vals[gz][qz]);
                            let mut k = 0;
                            for a in r0 {
                                for b in r1 {
                                    for c in r2 {
                                        rv[k] = a * b * c;
                                        k += 1;
                                    }
                                }
                            }
                            let (c0, c1, c2) = (&ct[0].vals[gx][qx], &ct[1].vals[gy][qy], &ct[2].vals[gz][qz]);
                            let mut k = 0;
                            for a in c0 {
                                for b in c1 {
                                    for c in c2 {
                                        cv[k] = wt * a * b * c;
                                        k += 1;
                                    }
                                }
                            }
                            for (i, r) in rv.iter().enumerate() {
                                let e = &mut elem[i * nct..(i + 1) * nct];
                                for (ej, c) in e.iter_mut().zip(&cv) {
                                    *ej += r * c;
                                }
                            }
                        }
                    }
                }
                let rf = [0, 1, 2].map(|d| rt[d].first[g[d]]);
                let cf = [0, 1, 2].map(|d| ct[d].first[g[d]]);
                let mut i = 0;
                for a0 in 0..nr[0] {
                    for a1 in 0..nr[1] {
                        for a2 in 0..nr[2] {
                            let ru = [rf[0] + a0 as isize, rf[1] + a1 as isize, rf[2] + a2 as isize];
                            let rgl = [0, 1, 2].map(|d| rb[d].global_index(ru[d]));
                            let mut j = 0;
                            for b0 in 0..nc[0] {
                                for b1 in 0..nc[1] {
                                    for b2 in 0..nc[2] {
                                        let v = elem[i * nct + j];
                                        if v != 0.0 {
                                            let cu = [cf[0] + b0 as isize, cf[1] + b1 as isize, cf[2] + b2 as isize];
                                            m.add(rgl, [cu[0] - ru[0], cu[1] - ru[1], cu[2] - ru[2]], v);
                                        }
                                        j += 1;
                                    }
                                }
                            }
                            i += 1;
                        }
                    }
                }
            }
        }
    }
    m
}

/// ∫ f_c Λ_c,i over the region, for every component.
fn assemble_linear(space: &TensorSpace, qg: &QuadGrid, f: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; space.dim()];
    let qs = qg.shape();
    for c in 0..space.n_components() {
        if f[c].iter().all(|v| *v == 0.0) {
            continue;
        }
        let off = space.component_offset(c);
        let s = space.component_shape(c);
        let tabs: Vec<AxisTab> = (0..3).map(|d| AxisTab::new(space.basis(c, d), &qg.axes[d])).collect();
        let bs: Vec<&BSplineBasis1D> = (0..3).map(|d| space.basis(c, d)).collect();
        for gx in 0..qg.axes[0].cells.len() {
            for gy in 0..qg.axes[1].cells.len() {
                for gz in 0..qg.axes[2].cells.len() {
                    let g = [gx, gy, gz];
                    let nq = [0, 1, 2].map(|d| qg.axes[d].points[g[d]].len());
                    for qx in 0..nq[0] {
                        for qy in 0..nq[1] {
                            for qz in 0..nq[2] {
                                let q = [qx, qy, qz];
                                let flat = [0, 1, 2].map(|d| tabs[d].qoff[g[d]] + q[d]);
                                let mut wt = f[c][(flat[0] * qs[1] + flat[1]) * qs[2] + flat[2]];
                                if wt == 0.0 {
                                    continue;
                                }
                                for d in 0..3 {
                                    wt *= qg.axes[d].weights[g[d]][q[d]];
                                }
                                for (a, va) in tabs[0].vals[gx][qx].iter().enumerate() {
                                    let ia = bs[0].global_index(tabs[0].first[gx] + a as isize);
                                    for (b, vb) in tabs[1].vals[gy][qy].iter().enumerate() {
                                        let ib = bs[1].global_index(tabs[1].first[gy] + b as isize);
                                        for (e, ve) in tabs[2].vals[gz][qz].iter().enumerate() {
                                            let ie = bs[2].global_index(tabs[2].first[gz] + e as isize);
                                            out[off + (ia * s[1] + ib) * s[2] + ie] += wt * va * vb * ve;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Load vector (<Λ_i, f>) of a vector or scalar function.
pub fn assemble_load(space: &TensorSpace, f: &dyn Fn([f64; 3]) -> Vec<f64>) -> Vec<f64> {
    let qg = QuadGrid::volume(space.grid());
    let mut vals = vec![Vec::with_capacity(qg.n_points()); space.n_components()];
    for (x, _) in qg.points() {
        let v = f(x);
        for c in 0..space.n_components() {
            vals[c].push(v[c]);
        }
    }
    assemble_linear(space, &qg, &vals)
}

/// Mass matrix with an optional scalar weight; only diagonal blocks.
pub fn assemble_mass(space: &TensorSpace, weight: Option<&dyn Fn([f64; 3]) -> f64>) -> BlockMatrix {
    let qg = QuadGrid::volume(space.grid());
    let w = match weight {
        Some(f) => qg.eval_scalar(f),
        None => vec![1.0; qg.n_points()],
    };
    let sizes = space.component_sizes();
    let mut m = BlockMatrix::new(sizes.clone(), sizes);
    for c in 0..space.n_components() {
        m.set_block(c, c, assemble_pair((space, c), (space, c), &qg, &w));
    }
    m
}

fn levi_civita(a: usize, b: usize, k: usize) -> f64 {
    match (a, b, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// R_ij = <Λ_i × Λ_j, v> with v = ω_c b0.
pub fn assemble_rotation(v1: &TensorSpace, v: &dyn Fn([f64; 3]) -> [f64; 3]) -> BlockMatrix {
    let qg = QuadGrid::volume(v1.grid());
    let vals: Vec<[f64; 3]> = qg.points().into_iter().map(|(x, _)| v(x)).collect();
    let sizes = v1.component_sizes();
    let mut m = BlockMatrix::new(sizes.clone(), sizes);
    for a in 0..3 {
        for b in 0..3 {
            if a == b {
                continue;
            }
            let w: Vec<f64> = vals.iter().map(|vk| (0..3).map(|k| levi_civita(a, b, k) * vk[k]).sum()).collect();
            m.set_block(a, b, assemble_pair((v1, a), (v1, b), &qg, &w));
        }
    }
    m
}

fn check_faces(grid: &Grid, faces: &[Face]) -> Result<()> {
    for f in faces {
        if f.axis > 2 {
            return Err(Error::Config(format!("face axis {} out of range", f.axis)));
        }
        if grid.periodic[f.axis] {
            return Err(Error::Config(format!("face on axis {} is periodic and cannot be artificial", f.axis)));
        }
    }
    Ok(())
}

/// A1_ij = <ν × Λ_i, ν × Λ_j> over the given faces.
pub fn assemble_boundary_penalty(v1: &TensorSpace, faces: &[Face]) -> Result<BlockMatrix> {
    check_faces(v1.grid(), faces)?;
    let sizes = v1.component_sizes();
    let mut m = BlockMatrix::new(sizes.clone(), sizes.clone());
    let mut blocks: Vec<Option<StencilMatrix>> = vec![None; 3];
    for f in faces {
        let qg = QuadGrid::face(v1.grid(), *f);
        let w = vec![1.0; qg.n_points()];
        for c in 0..3 {
            if c == f.axis {
                continue;
            }
            let part = assemble_pair((v1, c), (v1, c), &qg, &w);
            match &mut blocks[c] {
                Some(b) => b.axpy(1.0, &part),
                None => blocks[c] = Some(part),
            }
        }
    }
    for (c, b) in blocks.into_iter().enumerate() {
        if let Some(b) = b {
            m.set_block(c, c, b);
        }
    }
    Ok(m)
}

/// B1_ij = <Λ⁰_i, Λ¹_j · ν> over all non-periodic faces.
pub fn assemble_boundary_flux(complex: &DeRham) -> BlockMatrix {
    let (v0, v1) = (&complex.v0, &complex.v1);
    let mut m = BlockMatrix::new(v0.component_sizes(), v1.component_sizes());
    let grid = v0.grid();
    for axis in 0..3 {
        if grid.periodic[axis] {
            continue;
        }
        let mut acc: Option<StencilMatrix> = None;
        for upper in [false, true] {
            let f = Face { axis, upper };
            let qg = QuadGrid::face(grid, f);
            let w = vec![f.outward_normal()[axis]; qg.n_points()];
            let part = assemble_pair((v0, 0), (v1, axis), &qg, &w);
            match &mut acc {
                Some(a) => a.axpy(1.0, &part),
                None => acc = Some(part),
            }
        }
        m.set_block(0, axis, acc.unwrap());
    }
    m
}

/// Weak divergence −Gᵀ M1 + B1 as a sparse matrix V1 → V0 (dual).
pub fn assemble_weak_div(complex: &DeRham, m1: &BlockMatrix) -> CsrMatrix {
    let gt = complex.grad.to_csr().transpose().scaled(-1.0);
    gt.matmul(&m1.to_csr()).add(&assemble_boundary_flux(complex).to_csr())
}

/// Complex vector field on a face.
pub type BoundaryField = Arc<dyn Fn([f64; 3], Face) -> [Complex64; 3] + Send + Sync>;
pub type VectorField = Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;

/// Boundary and volume data that make up S_R and S_I.
#[derive(Clone, Default)]
pub struct SourceSpec {
    /// ŝ on Γ_A; only its tangential part is used
    pub boundary_field: Option<BoundaryField>,
    pub volume_r: Option<VectorField>,
    pub volume_i: Option<VectorField>,
    /// time step of the arctan envelope, if the envelope is on
    pub envelope_dt: Option<f64>,
}

impl std::fmt::Debug for SourceSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SourceSpec")
            .field("boundary_field", &self.boundary_field.is_some())
            .field("volume_r", &self.volume_r.is_some())
            .field("volume_i", &self.volume_i.is_some())
            .field("envelope_dt", &self.envelope_dt)
            .finish()
    }
}

/// (S_R, S_I) including optional volume terms.
pub fn assemble_boundary_source(v1: &TensorSpace, spec: &SourceSpec, faces: &[Face]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_faces(v1.grid(), faces)?;
    let n = v1.dim();
    let (mut sr, mut si) = (vec![0.0; n], vec![0.0; n]);
    if let Some(bf) = &spec.boundary_field {
        for f in faces {
            let qg = QuadGrid::face(v1.grid(), *f);
            let pts = qg.points();
            let mut re: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(pts.len())).collect();
            let mut im: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(pts.len())).collect();
            for (x, _) in &pts {
                let s = bf(*x, *f);
                for c in 0..3 {
                    // (ν × e_c)·(ν × s) keeps the tangential components only
                    let keep = if c == f.axis { 0.0 } else { 1.0 };
                    re[c].push(keep * s[c].re);
                    im[c].push(keep * s[c].im);
                }
            }
            for (acc, vals) in [(&mut sr, re), (&mut si, im)] {
                for (a, v) in acc.iter_mut().zip(assemble_linear(v1, &qg, &vals)) {
                    *a += v;
                }
            }
        }
    }
    for (acc, vf) in [(&mut sr, &spec.volume_r), (&mut si, &spec.volume_i)] {
        if let Some(vf) = vf {
            let load = assemble_load(v1, &|x| vf(x).to_vec());
            for (a, v) in acc.iter_mut().zip(load) {
                *a += v;
            }
        }
    }
    Ok((sr, si))
}

/// Real and imaginary parts of M_{1,ε}.
#[derive(Debug, Clone)]
pub struct DielectricMass {
    pub re: BlockMatrix,
    pub im: BlockMatrix,
    /// S changes sign inside the domain with no collisions
    pub resonance_warning: bool,
}

/// (M_{1,ε})_ij = <Λ_i, ε Λ_j> with ε v = S v − iD b0×v + (P−S) b0 (b0·v).
pub fn assemble_dielectric_mass(v1: &TensorSpace, profile: &PlasmaProfile) -> Result<DielectricMass> {
    let qg = QuadGrid::volume(v1.grid());
    let pts = qg.points();
    let mut eps: Vec<[[Complex64; 3]; 3]> = Vec::with_capacity(pts.len());
    let (mut s_pos, mut s_neg) = (false, false);
    for (x, _) in &pts {
        let st = stix(profile, *x)?;
        let b0 = profile.b0(*x);
        if profile.nu_e(*x) == 0.0 {
            if st.s.re > 0.0 {
                s_pos = true;
            } else if st.s.re < 0.0 {
                s_neg = true;
            }
        }
        let mut e = [[Complex64::new(0.0, 0.0); 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                // (b0 × e_b)_a = ε_{a j b} b0_j
                let cross: f64 = (0..3).map(|j| levi_civita(a, j, b) * b0[j]).sum();
                let delta = if a == b { 1.0 } else { 0.0 };
                e[a][b] = st.s * delta - Complex64::i() * st.d * cross + (st.p - st.s) * b0[a] * b0[b];
            }
        }
        eps.push(e);
    }
    let sizes = v1.component_sizes();
    let mut re = BlockMatrix::new(sizes.clone(), sizes.clone());
    let mut im = BlockMatrix::new(sizes.clone(), sizes);
    for a in 0..3 {
        for b in 0..3 {
            let wr: Vec<f64> = eps.iter().map(|e| e[a][b].re).collect();
            let wi: Vec<f64> = eps.iter().map(|e| e[a][b].im).collect();
            re.set_block(a, b, assemble_pair((v1, a), (v1, b), &qg, &wr));
            im.set_block(a, b, assemble_pair((v1, a), (v1, b), &qg, &wi));
        }
    }
    Ok(DielectricMass { re, im, resonance_warning: s_pos && s_neg })
}

/// 1D mass matrix of a basis on its own domain.
pub fn mass_1d(basis: &BSplineBasis1D, n_points: usize) -> DMatrix<f64> {
    let n = basis.dim();
    let (a, _) = basis.domain();
    let h = basis.knot_vector().cell_width();
    let bp: Vec<f64> = (0..=basis.n_cells()).map(|k| a + k as f64 * h).collect();
    let rule = gauss_rule(n_points, &bp).expect("valid breakpoints");
    let mut m = DMatrix::zeros(n, n);
    for cell in 0..basis.n_cells() {
        for (x, w) in rule.points[cell].iter().zip(&rule.weights[cell]) {
            let bv = basis.eval_in_cell(cell, *x, 0);
            for (i, vi) in bv.values[0].iter().enumerate() {
                let gi = basis.global_index(bv.first + i as isize);
                for (j, vj) in bv.values[0].iter().enumerate() {
                    let gj = basis.global_index(bv.first + j as isize);
                    m[(gi, gj)] += w * vi * vj;
                }
            }
        }
    }
    m
}

/// Exact inverse of the unweighted mass matrix of a space.
pub fn kron_mass_solver(space: &TensorSpace) -> Result<KroneckerMassSolver> {
    let nq = space.grid().quad_points();
    let factors: Vec<[DMatrix<f64>; 3]> = (0..space.n_components()).map(|c| [0, 1, 2].map(|d| mass_1d(space.basis(c, d), nq))).collect();
    KroneckerMassSolver::new(&factors, space.grid().periodic)
}

/// Every assembled operator of the time-domain system.
#[derive(Debug, Clone)]
pub struct SystemOperators {
    pub complex: DeRham,
    pub m1: BlockMatrix,
    pub m2: BlockMatrix,
    pub m1_wp: BlockMatrix,
    pub m1_nue: BlockMatrix,
    pub r1_wc: BlockMatrix,
    /// R + M_ν, the operator acting on Y
    pub r_nue: BlockMatrix,
    pub a1: BlockMatrix,
    pub b1: BlockMatrix,
    pub s_r: Vec<f64>,
    pub s_i: Vec<f64>,
    pub m1_solver: KroneckerMassSolver,
    pub m2_solver: KroneckerMassSolver,
    pub gamma_a: Vec<Face>,
    pub sources: SourceSpec,
}

impl SystemOperators {
    /// Assemble all operators. `gamma_a` defaults to every non-periodic face.
    pub fn assemble(complex: DeRham, profile: &PlasmaProfile, sources: SourceSpec, gamma_a: Option<Vec<Face>>) -> Result<Self> {
        let gamma_a = gamma_a.unwrap_or_else(|| complex.grid().boundary_faces());
        check_faces(complex.grid(), &gamma_a)?;
        let v1 = complex.v1.clone();
        let m1 = assemble_mass(&v1, None);
        let m2 = assemble_mass(&complex.v2, None);
        let m1_wp = assemble_mass(&v1, Some(&|x| profile.omega_p(x)));
        let m1_nue = assemble_mass(&v1, Some(&|x| profile.nu_e(x)));
        let r1_wc = assemble_rotation(&v1, &|x| {
            let (w, b) = (profile.omega_c(x), profile.b0(x));
            [w * b[0], w * b[1], w * b[2]]
        });
        let r_nue = r1_wc.added(1.0, &m1_nue);
        let a1 = assemble_boundary_penalty(&v1, &gamma_a)?;
        let b1 = assemble_boundary_flux(&complex);
        let (s_r, s_i) = assemble_boundary_source(&v1, &sources, &gamma_a)?;
        let m1_solver = kron_mass_solver(&v1)?;
        let m2_solver = kron_mass_solver(&complex.v2)?;
        Ok(SystemOperators { complex, m1, m2, m1_wp, m1_nue, r1_wc, r_nue, a1, b1, s_r, s_i, m1_solver, m2_solver, gamma_a, sources })
    }

    pub fn dim_e(&self) -> usize {
        self.complex.v1.dim()
    }
    pub fn dim_b(&self) -> usize {
        self.complex.v2.dim()
    }

    /// Cᵀ M2 b
    pub fn curl_t_m2(&self, b: &[f64]) -> Vec<f64> {
        self.complex.curl.apply_transpose(&self.m2.apply(b))
    }

    /// Cᵀ M2 C e
    pub fn curl_curl(&self, e: &[f64]) -> Vec<f64> {
        self.curl_t_m2(&self.complex.curl.apply(e))
    }

    /// Total charge 1ᵀ(−GᵀM1 + B1)E.
    pub fn total_charge(&self, e: &[f64]) -> f64 {
        let ones = vec![1.0; self.complex.v0.dim()];
        let grad_one = self.complex.grad.apply(&ones);
        let m1e = self.m1.apply(e);
        let vol: f64 = -grad_one.iter().zip(&m1e).map(|(a, b)| a * b).sum::<f64>();
        let flux: f64 = self.b1.apply(e).iter().sum();
        vol + flux
    }
}
