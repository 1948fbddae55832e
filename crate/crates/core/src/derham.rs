//! Tensor-product spline spaces V0..V3, their incidence matrices, field
//! evaluation and the two projections used to build reference fields.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assembly;
use crate::error::{Error, Result};
use crate::linsolve::{pcg, SolveStats, SolverParams};
use crate::spline::{curry_schoenberg, gauss_legendre, make_knot_vector, BSplineBasis1D, BasisKind};
use crate::stencil::IntCsr;

use BasisKind::{D, N};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n_cells: [usize; 3],
    pub degrees: [usize; 3],
    pub periodic: [bool; 3],
    pub domain: [(f64, f64); 3],
}

impl Grid {
    pub fn cell_width(&self, d: usize) -> f64 {
        (self.domain[d].1 - self.domain[d].0) / self.n_cells[d] as f64
    }

    pub fn max_degree(&self) -> usize {
        *self.degrees.iter().max().unwrap()
    }

    /// Gauss points per cell used everywhere: exact for spline products.
    pub fn quad_points(&self) -> usize {
        self.max_degree() + 1
    }

    /// All faces on non-periodic sides.
    pub fn boundary_faces(&self) -> Vec<Face> {
        (0..3)
            .filter(|d| !self.periodic[*d])
            .flat_map(|axis| [Face { axis, upper: false }, Face { axis, upper: true }])
            .collect()
    }
}

/// One side of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
}

impl Face {
    pub fn outward_normal(&self) -> [f64; 3] {
        let mut n = [0.0; 3];
        n[self.axis] = if self.upper { 1.0 } else { -1.0 };
        n
    }

    pub fn coordinate(&self, grid: &Grid) -> f64 {
        if self.upper {
            grid.domain[self.axis].1
        } else {
            grid.domain[self.axis].0
        }
    }
}

#[derive(Debug)]
struct Bases {
    grid: Grid,
    n: [BSplineBasis1D; 3],
    d: [BSplineBasis1D; 3],
}

/// Discrete space of a given form degree.
#[derive(Debug, Clone)]
pub struct TensorSpace {
    form_degree: usize,
    kinds: Vec<[BasisKind; 3]>,
    bases: Arc<Bases>,
}

impl PartialEq for TensorSpace {
    fn eq(&self, other: &Self) -> bool {
        self.form_degree == other.form_degree && self.bases.grid == other.bases.grid
    }
}

impl TensorSpace {
    pub fn form_degree(&self) -> usize {
        self.form_degree
    }
    pub fn grid(&self) -> &Grid {
        &self.bases.grid
    }
    pub fn n_components(&self) -> usize {
        self.kinds.len()
    }
    pub fn kinds(&self, comp: usize) -> [BasisKind; 3] {
        self.kinds[comp]
    }
    pub fn basis(&self, comp: usize, dir: usize) -> &BSplineBasis1D {
        match self.kinds[comp][dir] {
            N => &self.bases.n[dir],
            D => &self.bases.d[dir],
        }
    }
    /// Standard basis along `dir`, shared by every space of the complex.
    pub fn n_basis(&self, dir: usize) -> &BSplineBasis1D {
        &self.bases.n[dir]
    }
    pub fn component_shape(&self, comp: usize) -> [usize; 3] {
        [0, 1, 2].map(|d| self.basis(comp, d).dim())
    }
    pub fn component_dim(&self, comp: usize) -> usize {
        self.component_shape(comp).iter().product()
    }
    pub fn component_sizes(&self) -> Vec<usize> {
        (0..self.n_components()).map(|c| self.component_dim(c)).collect()
    }
    pub fn component_offset(&self, comp: usize) -> usize {
        (0..comp).map(|c| self.component_dim(c)).sum()
    }
    pub fn dim(&self) -> usize {
        self.component_sizes().iter().sum()
    }

    /// Field values at a point, one entry per component.
    pub fn eval(&self, coeffs: &[f64], x: [f64; 3]) -> Result<Vec<f64>> {
        assert_eq!(coeffs.len(), self.dim());
        let mut out = Vec::with_capacity(self.n_components());
        for c in 0..self.n_components() {
            let bv = [0, 1, 2].map(|d| self.basis(c, d).eval(x[d], 0));
            let bv = [bv[0].clone()?, bv[1].clone()?, bv[2].clone()?];
            let s = self.component_shape(c);
            let off = self.component_offset(c);
            let mut v = 0.0;
            for (a, va) in bv[0].values[0].iter().enumerate() {
                let ia = self.basis(c, 0).global_index(bv[0].first + a as isize);
                for (b, vb) in bv[1].values[0].iter().enumerate() {
                    let ib = self.basis(c, 1).global_index(bv[1].first + b as isize);
                    for (e, ve) in bv[2].values[0].iter().enumerate() {
                        let ie = self.basis(c, 2).global_index(bv[2].first + e as isize);
                        v += va * vb * ve * coeffs[off + (ia * s[1] + ib) * s[2] + ie];
                    }
                }
            }
            out.push(v);
        }
        Ok(out)
    }
}

/// Coefficients of a discrete field together with its space.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldCoeffs {
    pub space: TensorSpace,
    pub data: Vec<f64>,
}

impl FieldCoeffs {
    pub fn zeros(space: &TensorSpace) -> Self {
        FieldCoeffs { data: vec![0.0; space.dim()], space: space.clone() }
    }

    pub fn component(&self, comp: usize) -> &[f64] {
        let off = self.space.component_offset(comp);
        &self.data[off..off + self.space.component_dim(comp)]
    }
}

/// Evaluate a field at several points.
pub fn eval_field(f: &FieldCoeffs, points: &[[f64; 3]]) -> Result<Vec<Vec<f64>>> {
    points.iter().map(|x| f.space.eval(&f.data, *x)).collect()
}

#[derive(Debug, Clone)]
pub struct DeRham {
    pub v0: TensorSpace,
    pub v1: TensorSpace,
    pub v2: TensorSpace,
    pub v3: TensorSpace,
    pub grad: IntCsr,
    pub curl: IntCsr,
    pub div: IntCsr,
}

impl DeRham {
    pub fn grid(&self) -> &Grid {
        self.v0.grid()
    }
}

fn identity(n: usize) -> IntCsr {
    IntCsr::from_triplets(n, n, (0..n).map(|i| (i, i, 1)).collect())
}

/// Difference matrix from the N basis coefficients to the D basis ones.
pub fn difference_1d(n_basis: usize, periodic: bool) -> IntCsr {
    let rows = if periodic { n_basis } else { n_basis - 1 };
    let mut t = Vec::with_capacity(2 * rows);
    for j in 0..rows {
        t.push((j, j, -1));
        t.push((j, (j + 1) % n_basis, 1));
    }
    IntCsr::from_triplets(rows, n_basis, t)
}

fn kron(a: &IntCsr, b: &IntCsr) -> IntCsr {
    let mut t = Vec::with_capacity(a.nnz() * b.nnz());
    for (ra, ca, va) in a.triplets() {
        for (rb, cb, vb) in b.triplets() {
            t.push((ra * b.nrows + rb, ca * b.ncols + cb, va * vb));
        }
    }
    IntCsr::from_triplets(a.nrows * b.nrows, a.ncols * b.ncols, t)
}

fn kron3(m: [&IntCsr; 3]) -> IntCsr {
    kron(&kron(m[0], m[1]), m[2])
}

/// Assemble a block matrix; `blocks[i][j]` is (matrix, sign) or None.
fn block_int(row_sizes: &[usize], col_sizes: &[usize], blocks: Vec<Vec<Option<(IntCsr, i64)>>>) -> IntCsr {
    let mut t = Vec::new();
    let mut ro = 0;
    for (i, row) in blocks.into_iter().enumerate() {
        let mut co = 0;
        for (j, b) in row.into_iter().enumerate() {
            if let Some((m, s)) = b {
                assert_eq!((m.nrows, m.ncols), (row_sizes[i], col_sizes[j]));
                t.extend(m.triplets().into_iter().map(|(r, c, v)| (ro + r, co + c, s * v)));
            }
            co += col_sizes[j];
        }
        ro += row_sizes[i];
    }
    IntCsr::from_triplets(row_sizes.iter().sum(), col_sizes.iter().sum(), t)
}

/// Build the discrete complex on a box.
pub fn build_complex(n_cells: [usize; 3], degrees: [usize; 3], periodic: [bool; 3], domain: [(f64, f64); 3]) -> Result<DeRham> {
    let mut nb = Vec::new();
    let mut db = Vec::new();
    for d in 0..3 {
        if degrees[d] == 0 {
            return Err(Error::InvalidArgument(format!("degree 0 along axis {d}")));
        }
        let kv = make_knot_vector(n_cells[d], degrees[d], domain[d], periodic[d])?;
        let b = BSplineBasis1D::standard(kv);
        db.push(curry_schoenberg(&b)?);
        nb.push(b);
    }
    let bases = Arc::new(Bases {
        grid: Grid { n_cells, degrees, periodic, domain },
        n: [nb[0].clone(), nb[1].clone(), nb[2].clone()],
        d: [db[0].clone(), db[1].clone(), db[2].clone()],
    });
    let space = |form_degree, kinds: Vec<[BasisKind; 3]>| TensorSpace { form_degree, kinds, bases: bases.clone() };
    let v0 = space(0, vec![[N, N, N]]);
    let v1 = space(1, vec![[D, N, N], [N, D, N], [N, N, D]]);
    let v2 = space(2, vec![[N, D, D], [D, N, D], [D, D, N]]);
    let v3 = space(3, vec![[D, D, D]]);

    let nn: Vec<usize> = (0..3).map(|d| bases.n[d].dim()).collect();
    let dd: Vec<IntCsr> = (0..3).map(|d| difference_1d(nn[d], periodic[d])).collect();
    let i_n: Vec<IntCsr> = (0..3).map(|d| identity(nn[d])).collect();
    let i_d: Vec<IntCsr> = (0..3).map(|d| identity(bases.d[d].dim())).collect();

    // derivative along `dir` on a component whose other axes have `kinds`
    let partial = |dir: usize, kinds: [BasisKind; 3]| -> IntCsr {
        let f = |d: usize| -> &IntCsr {
            if d == dir {
                &dd[d]
            } else if kinds[d] == N {
                &i_n[d]
            } else {
                &i_d[d]
            }
        };
        kron3([f(0), f(1), f(2)])
    };

    let (s0, s1, s2, s3) = (v0.component_sizes(), v1.component_sizes(), v2.component_sizes(), v3.component_sizes());
    let grad = block_int(&s1, &s0, (0..3).map(|d| vec![Some((partial(d, [N, N, N]), 1))]).collect());
    let curl = block_int(
        &s2,
        &s1,
        vec![
            vec![None, Some((partial(2, [N, D, N]), -1)), Some((partial(1, [N, N, D]), 1))],
            vec![Some((partial(2, [D, N, N]), 1)), None, Some((partial(0, [N, N, D]), -1))],
            vec![Some((partial(1, [D, N, N]), -1)), Some((partial(0, [N, D, N]), 1)), None],
        ],
    );
    let div = block_int(&s3, &s2, vec![vec![Some((partial(0, [N, D, D]), 1)), Some((partial(1, [D, N, D]), 1)), Some((partial(2, [D, D, N]), 1))]]);
    Ok(DeRham { v0, v1, v2, v3, grad, curl, div })
}

/// L2 projection: solves M c = (<Λ_i, f>) with PCG to 1e-12.
pub fn project_l2(space: &TensorSpace, f: &dyn Fn([f64; 3]) -> Vec<f64>) -> Result<(FieldCoeffs, SolveStats)> {
    let rhs = assembly::assemble_load(space, f);
    let m = assembly::assemble_mass(space, None);
    let prec = assembly::kron_mass_solver(space)?;
    let mut c = vec![0.0; space.dim()];
    let stats = pcg(&m, &prec, &rhs, &mut c, SolverParams { tol: 1e-12, max_iter: 2000 })?;
    Ok((FieldCoeffs { space: space.clone(), data: c }, stats))
}

/// Degrees of freedom of one axis: each is a weighted sum of point samples.
fn axis_dofs(space: &TensorSpace, comp: usize, dir: usize) -> Vec<Vec<(f64, f64)>> {
    let nb = space.n_basis(dir);
    let g = nb.greville_unwrapped();
    match space.kinds(comp)[dir] {
        N => g.iter().map(|x| vec![(*x, 1.0)]).collect(),
        D => {
            let grid = space.grid();
            let (a, b) = grid.domain[dir];
            let h = grid.cell_width(dir);
            let nq = grid.quad_points() + 6;
            let (qp, qw) = gauss_legendre(nq);
            let n_int = if nb.periodic() { g.len() } else { g.len() - 1 };
            (0..n_int)
                .map(|j| {
                    let lo = g[j];
                    let hi = if j + 1 < g.len() { g[j + 1] } else { g[0] + (b - a) };
                    // split at breakpoints so each piece is polynomial
                    let mut cuts = vec![lo];
                    let k0 = ((lo - a) / h).floor() as i64 + 1;
                    let mut k = k0;
                    loop {
                        let x = a + k as f64 * h;
                        if x >= hi - 1e-12 * h {
                            break;
                        }
                        if x > lo + 1e-12 * h {
                            cuts.push(x);
                        }
                        k += 1;
                    }
                    cuts.push(hi);
                    let mut rule = Vec::new();
                    for w in cuts.windows(2) {
                        let half = 0.5 * (w[1] - w[0]);
                        let mid = 0.5 * (w[1] + w[0]);
                        for (p, wt) in qp.iter().zip(&qw) {
                            rule.push((mid + half * p, half * wt));
                        }
                    }
                    rule
                })
                .collect()
        }
    }
}

fn wrap(x: f64, dom: (f64, f64), periodic: bool) -> f64 {
    if periodic {
        dom.0 + (x - dom.0).rem_euclid(dom.1 - dom.0)
    } else {
        x.clamp(dom.0, dom.1)
    }
}

/// Collocation/histopolation matrix of one axis.
fn axis_matrix(space: &TensorSpace, comp: usize, dir: usize, dofs: &[Vec<(f64, f64)>]) -> Result<DMatrix<f64>> {
    let basis = space.basis(comp, dir);
    let n = basis.dim();
    let mut m = DMatrix::zeros(dofs.len(), n);
    let dom = space.grid().domain[dir];
    for (i, rule) in dofs.iter().enumerate() {
        for (x, w) in rule {
            let bv = basis.eval(wrap(*x, dom, basis.periodic()), 0)?;
            for (j, v) in bv.values[0].iter().enumerate() {
                m[(i, basis.global_index(bv.first + j as isize))] += w * v;
            }
        }
    }
    Ok(m)
}

/// Commuting projection by interpolation at Greville points along N axes
/// and histopolation between consecutive Greville points along D axes.
pub fn project_commuting(space: &TensorSpace, f: &dyn Fn([f64; 3]) -> Vec<f64>) -> Result<FieldCoeffs> {
    let grid = space.grid().clone();
    let mut data = vec![0.0; space.dim()];
    for c in 0..space.n_components() {
        let dofs: Vec<Vec<Vec<(f64, f64)>>> = (0..3).map(|d| axis_dofs(space, c, d)).collect();
        let mut lus = Vec::new();
        for d in 0..3 {
            let m = axis_matrix(space, c, d, &dofs[d])?;
            let lu = m.lu();
            if !lu.is_invertible() {
                return Err(Error::Config(format!("singular 1D projection matrix on axis {d}")));
            }
            lus.push(lu);
        }
        let s = space.component_shape(c);
        let off = space.component_offset(c);
        let blk = &mut data[off..off + s[0] * s[1] * s[2]];
        for i in 0..s[0] {
            for j in 0..s[1] {
                for k in 0..s[2] {
                    let mut v = 0.0;
                    for (x, wx) in &dofs[0][i] {
                        for (y, wy) in &dofs[1][j] {
                            for (z, wz) in &dofs[2][k] {
                                let p = [
                                    wrap(*x, grid.domain[0], grid.periodic[0]),
                                    wrap(*y, grid.domain[1], grid.periodic[1]),
                                    wrap(*z, grid.domain[2], grid.periodic[2]),
                                ];
                                v += wx * wy * wz * f(p)[c];
                            }
                        }
                    }
                    blk[(i * s[1] + j) * s[2] + k] = v;
                }
            }
        }
        kron_lu_solve(&lus, s, blk);
    }
    Ok(FieldCoeffs { space: space.clone(), data })
}

fn kron_lu_solve(lus: &[nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>], s: [usize; 3], blk: &mut [f64]) {
    let strides = [s[1] * s[2], s[2], 1];
    for d in 0..3 {
        let (o1, o2) = match d {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for i in 0..s[o1] {
            for j in 0..s[o2] {
                let base = i * strides[o1] + j * strides[o2];
                let mut line = nalgebra::DVector::from_fn(s[d], |k, _| blk[base + k * strides[d]]);
                lus[d].solve_mut(&mut line);
                for k in 0..s[d] {
                    blk[base + k * strides[d]] = line[k];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn section6(n: usize) -> DeRham {
        build_complex([n, 1, 1], [3, 1, 1], [false, true, true], [(0.0, 3.0 * PI), (0.0, 2.0 * PI), (0.0, 2.0 * PI)]).unwrap()
    }

    fn assert_zero(m: &IntCsr) {
        assert_eq!(m.nnz(), 0, "nonzero entries: {:?}", &m.triplets()[..m.nnz().min(5)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn complex_is_exact(n in prop::array::uniform3(1usize..4), p in prop::array::uniform3(1usize..4), per in prop::array::uniform3(any::<bool>())) {
            let c = build_complex(n, p, per, [(0.0, 1.0), (0.0, 2.0), (-1.0, 1.0)]).unwrap();
            assert_zero(&c.curl.matmul(&c.grad));
            assert_zero(&c.div.matmul(&c.curl));
            for m in [&c.grad, &c.curl, &c.div] {
                prop_assert!(m.values.iter().all(|v| v.abs() == 1));
            }
        }
    }

    #[test]
    fn section6_dimensions_and_gradient() {
        let c = section6(4);
        assert_eq!(c.v0.dim(), 7);
        assert_eq!(c.v1.component_sizes(), vec![6, 7, 7]);
        // x-derivative block of G is the bidiagonal (-1, +1) difference
        for (r, col, v) in c.grad.triplets().into_iter().filter(|t| t.0 < 6) {
            assert!((col == r && v == -1) || (col == r + 1 && v == 1));
        }
        assert!(build_complex([2, 1, 1], [0, 1, 1], [false; 3], [(0.0, 1.0); 3]).is_err());
    }

    #[test]
    fn evaluation_basics() {
        let c = section6(5);
        let f = FieldCoeffs { space: c.v0.clone(), data: vec![1.0; c.v0.dim()] };
        let z = FieldCoeffs::zeros(&c.v1);
        for x in [[0.0, 0.0, 0.0], [1.3, 2.0, 5.0], [3.0 * PI, 6.0, 1.0]] {
            assert!((eval_field(&f, &[x]).unwrap()[0][0] - 1.0).abs() < 1e-13);
            assert!(eval_field(&z, &[x]).unwrap()[0].iter().all(|v| *v == 0.0));
        }
        assert!(eval_field(&f, &[[-1.0, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn projections_reproduce_linear_functions() {
        let c = build_complex([3, 2, 2], [2, 1, 1], [false, false, true], [(0.0, 1.0), (0.0, 2.0), (0.0, 1.0)]).unwrap();
        let lin = |x: [f64; 3]| vec![1.0 + 2.0 * x[0] - 0.5 * x[1]];
        let (p, _) = project_l2(&c.v0, &lin).unwrap();
        let q = project_commuting(&c.v0, &lin).unwrap();
        for x in [[0.1, 0.3, 0.2], [0.77, 1.9, 0.9]] {
            assert!((c.v0.eval(&p.data, x).unwrap()[0] - lin(x)[0]).abs() < 1e-12);
            assert!((c.v0.eval(&q.data, x).unwrap()[0] - lin(x)[0]).abs() < 1e-12);
        }
        // constants are reproduced in every space
        for s in [&c.v1, &c.v2, &c.v3] {
            let k = |_: [f64; 3]| vec![0.7; 3];
            let q = project_commuting(s, &k).unwrap();
            let v = s.eval(&q.data, [0.4, 1.1, 0.3]).unwrap();
            assert!(v.iter().all(|a| (a - 0.7).abs() < 1e-12));
        }
    }

    #[test]
    fn l2_projection_is_idempotent() {
        let c = section6(4);
        let coeffs: Vec<f64> = (0..c.v1.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let space = c.v1.clone();
        let f = |x: [f64; 3]| space.eval(&coeffs, x).unwrap();
        let (p, _) = project_l2(&c.v1, &f).unwrap();
        for (a, b) in p.data.iter().zip(&coeffs) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn commuting_diagram_for_curl() {
        let c = build_complex([3, 2, 4], [2, 3, 1], [false, true, false], [(0.0, 1.0), (0.0, 2.0 * PI), (0.0, 1.5)]).unwrap();
        let e = |x: [f64; 3]| vec![(2.0 * x[0]).sin() * x[2], x[1].cos() + x[0], (x[2] * x[0]).exp() * x[1].sin()];
        let curl_e = |x: [f64; 3]| {
            let g = (x[2] * x[0]).exp();
            vec![g * x[1].cos(), (2.0 * x[0]).sin() - x[2] * g * x[1].sin(), 1.0]
        };
        let pe = project_commuting(&c.v1, &e).unwrap();
        let lhs = c.curl.apply(&pe.data);
        let rhs = project_commuting(&c.v2, &curl_e).unwrap();
        for (u, v) in lhs.iter().zip(&rhs.data) {
            assert!((u - v).abs() < 1e-10, "{u} vs {v}");
        }
    }

    #[test]
    fn commuting_diagram_for_divergence() {
        let c = build_complex([3, 2, 4], [2, 3, 1], [false, true, false], [(0.0, 1.0), (0.0, 2.0 * PI), (0.0, 1.5)]).unwrap();
        let b = |x: [f64; 3]| vec![(2.0 * x[0]).sin() * x[2], x[1].cos() + x[0], (x[2] * x[0]).exp() * x[1].sin()];
        let div_b = |x: [f64; 3]| vec![2.0 * (2.0 * x[0]).cos() * x[2] - x[1].sin() + x[0] * (x[2] * x[0]).exp() * x[1].sin()];
        let pb = project_commuting(&c.v2, &b).unwrap();
        let lhs = c.div.apply(&pb.data);
        let rhs = project_commuting(&c.v3, &div_b).unwrap();
        for (u, v) in lhs.iter().zip(&rhs.data) {
            assert!((u - v).abs() < 1e-10, "{u} vs {v}");
        }
        // divergence-free field
        let sol = |x: [f64; 3]| vec![x[2], (x[0] * 3.0).sin(), 0.0];
        let ps = project_commuting(&c.v2, &sol).unwrap();
        assert!(c.div.apply(&ps.data).iter().all(|v| v.abs() < 1e-12));
    }
}
