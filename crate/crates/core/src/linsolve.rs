//! Krylov solvers with exact product accounting, plus the Kronecker mass
//! solver and block-diagonal preconditioner built on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stencil::{BlockMatrix, CsrMatrix, StencilMatrix};

/// Square linear operator.
pub trait LinOp: Sync {
    fn dim(&self) -> usize;
    /// y = A x (overwrites y)
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinOp for BlockMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        self.apply_add(1.0, x, y);
    }
}

impl LinOp for StencilMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        self.apply_add(1.0, x, y);
    }
}

impl LinOp for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        self.apply_add(1.0, x, y);
    }
}

impl LinOp for nalgebra::DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (0..self.ncols()).map(|j| self[(i, j)] * x[j]).sum();
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinOp for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Wraps a closure as an operator.
pub struct FnOp<F: Fn(&[f64], &mut [f64]) + Sync> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> LinOp for FnOp<F> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SolverKind {
    Pcg,
    BiCgStab,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub kind: SolverKind,
    pub iterations: usize,
    pub matvec_a: usize,
    pub matvec_p: usize,
    pub converged: bool,
    pub final_residual: f64,
}

impl SolveStats {
    /// Products per iteration are fixed by the method; any drift is a bug.
    fn check(self) -> Self {
        let per_iter = match self.kind {
            SolverKind::Pcg => 1,
            SolverKind::BiCgStab => 2,
        };
        assert_eq!(self.matvec_a, 1 + per_iter * self.iterations, "operator product count");
        assert_eq!(self.matvec_p, 1 + per_iter * self.iterations, "preconditioner product count");
        self
    }

    pub fn total_products(&self) -> usize {
        self.matvec_a + self.matvec_p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { tol: 1e-12, max_iter: 1000 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned conjugate gradients. `x` holds the initial guess on entry.
///
/// Stops on ‖b − Ax‖/‖b‖ ≤ tol, with the residual tracked by recurrence.
pub fn pcg(a: &dyn LinOp, p: &dyn LinOp, b: &[f64], x: &mut [f64], params: SolverParams) -> Result<SolveStats> {
    let n = b.len();
    if a.dim() != n || p.dim() != n || x.len() != n {
        return Err(Error::InvalidArgument(format!("pcg dimension mismatch: A {}, P {}, b {n}, x {}", a.dim(), p.dim(), x.len())));
    }
    let mut stats = SolveStats { kind: SolverKind::Pcg, iterations: 0, matvec_a: 0, matvec_p: 0, converged: false, final_residual: 0.0 };
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.fill(0.0);
    }
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    stats.matvec_a += 1;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z = vec![0.0; n];
    p.apply(&r, &mut z);
    stats.matvec_p += 1;
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut res = norm(&r) / scale;
    stats.final_residual = res;
    if res <= params.tol || bnorm == 0.0 {
        stats.converged = true;
        return Ok(stats.check());
    }
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    while stats.iterations < params.max_iter {
        a.apply(&dir, &mut q);
        stats.matvec_a += 1;
        let pq = dot(&dir, &q);
        if pq == 0.0 || !pq.is_finite() {
            stats.iterations += 1;
            p.apply(&r, &mut z);
            stats.matvec_p += 1;
            return Err(Error::Breakdown(stats.check()));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * dir[i];
            r[i] -= alpha * q[i];
        }
        p.apply(&r, &mut z);
        stats.matvec_p += 1;
        stats.iterations += 1;
        res = norm(&r) / scale;
        stats.final_residual = res;
        if res <= params.tol {
            stats.converged = true;
            return Ok(stats.check());
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            dir[i] = z[i] + beta * dir[i];
        }
    }
    Err(Error::NotConverged(stats.check()))
}

/// Left-preconditioned BiCGStab on P A x = P b with shadow vector equal to
/// the initial preconditioned residual. `x` holds the initial guess on entry.
///
/// The unpreconditioned residual is carried along by recurrence (it costs
/// no extra products) and the stopping test is ‖b − Ax‖/‖b‖ ≤ tol.
pub fn pbicgstab(a: &dyn LinOp, p: &dyn LinOp, b: &[f64], x: &mut [f64], params: SolverParams) -> Result<SolveStats> {
    let n = b.len();
    if a.dim() != n || p.dim() != n || x.len() != n {
        return Err(Error::InvalidArgument(format!("bicgstab dimension mismatch: A {}, P {}, b {n}, x {}", a.dim(), p.dim(), x.len())));
    }
    let mut stats = SolveStats { kind: SolverKind::BiCgStab, iterations: 0, matvec_a: 0, matvec_p: 0, converged: false, final_residual: 0.0 };
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.fill(0.0);
    }
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    // ru: true residual, r: preconditioned residual
    let mut ru = vec![0.0; n];
    a.apply(x, &mut ru);
    stats.matvec_a += 1;
    for (ri, bi) in ru.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut r = vec![0.0; n];
    p.apply(&ru, &mut r);
    stats.matvec_p += 1;
    stats.final_residual = norm(&ru) / scale;
    if stats.final_residual <= params.tol || bnorm == 0.0 {
        stats.converged = true;
        return Ok(stats.check());
    }
    let shadow = r.clone();
    let mut rho = dot(&shadow, &r);
    let mut dir = r.clone();
    let mut ap = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut as_ = vec![0.0; n];
    let mut t = vec![0.0; n];
    let tiny = f64::EPSILON * f64::EPSILON;
    while stats.iterations < params.max_iter {
        a.apply(&dir, &mut ap);
        stats.matvec_a += 1;
        p.apply(&ap, &mut v);
        stats.matvec_p += 1;
        let sv = dot(&shadow, &v);
        if sv.abs() <= tiny * norm(&shadow) * norm(&v) || !sv.is_finite() {
            // keep counters consistent with a full iteration
            a.apply(&dir, &mut as_);
            p.apply(&as_, &mut t);
            stats.matvec_a += 1;
            stats.matvec_p += 1;
            stats.iterations += 1;
            return Err(Error::Breakdown(stats.check()));
        }
        let alpha = rho / sv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        a.apply(&s, &mut as_);
        stats.matvec_a += 1;
        p.apply(&as_, &mut t);
        stats.matvec_p += 1;
        let tt = dot(&t, &t);
        let omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * dir[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
            ru[i] -= alpha * ap[i] + omega * as_[i];
        }
        stats.iterations += 1;
        stats.final_residual = norm(&ru) / scale;
        if stats.final_residual <= params.tol {
            stats.converged = true;
            return Ok(stats.check());
        }
        let rho_new = dot(&shadow, &r);
        if rho_new.abs() <= tiny * norm(&shadow) * norm(&r) || omega == 0.0 || !rho_new.is_finite() {
            return Err(Error::Breakdown(stats.check()));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            dir[i] = r[i] + beta * (dir[i] - omega * v[i]);
        }
    }
    Err(Error::NotConverged(stats.check()))
}

/// Cholesky factor of a symmetric positive definite 1D matrix.
#[derive(Debug, Clone)]
enum Factor1d {
    /// lower band, row-major with `w + 1` entries per row, diagonal last
    Banded { n: usize, w: usize, l: Vec<f64> },
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
}

impl Factor1d {
    fn new(m: &nalgebra::DMatrix<f64>, periodic: bool) -> Result<Self> {
        let n = m.nrows();
        if periodic {
            return m
                .clone()
                .cholesky()
                .map(Factor1d::Dense)
                .ok_or_else(|| Error::Config("singular 1D mass factor".into()));
        }
        let mut w = 0;
        for i in 0..n {
            for j in 0..i {
                if m[(i, j)] != 0.0 {
                    w = w.max(i - j);
                }
            }
        }
        let mut l = vec![0.0; n * (w + 1)];
        let at = |i: usize, j: usize| i * (w + 1) + (w + j - i);
        for i in 0..n {
            let j0 = i.saturating_sub(w);
            for j in j0..=i {
                let mut sum = m[(i, j)];
                for k in j0.max(j.saturating_sub(w))..j {
                    sum -= l[at(i, k)] * l[at(j, k)];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::Config("singular 1D mass factor".into()));
                    }
                    l[at(i, i)] = sum.sqrt();
                } else {
                    l[at(i, j)] = sum / l[at(j, j)];
                }
            }
        }
        Ok(Factor1d::Banded { n, w, l })
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        match self {
            Factor1d::Banded { n, w, l } => {
                let (n, w) = (*n, *w);
                let at = |i: usize, j: usize| i * (w + 1) + (w + j - i);
                for i in 0..n {
                    let mut s = b[i];
                    for k in i.saturating_sub(w)..i {
                        s -= l[at(i, k)] * b[k];
                    }
                    b[i] = s / l[at(i, i)];
                }
                for i in (0..n).rev() {
                    let mut s = b[i];
                    for k in i + 1..(i + w + 1).min(n) {
                        s -= l[at(k, i)] * b[k];
                    }
                    b[i] = s / l[at(i, i)];
                }
            }
            Factor1d::Dense(ch) => {
                let mut v = nalgebra::DVector::from_column_slice(b);
                ch.solve_mut(&mut v);
                b.copy_from_slice(v.as_slice());
            }
        }
    }
}

/// Inverse of a Kronecker-product matrix M_x ⊗ M_y ⊗ M_z, one per component.
#[derive(Debug, Clone)]
pub struct KroneckerMassSolver {
    comps: Vec<([Factor1d; 3], [usize; 3])>,
    dim: usize,
}

impl KroneckerMassSolver {
    /// `factors[c][d]` is the 1D mass matrix of component `c` along axis `d`.
    pub fn new(factors: &[[nalgebra::DMatrix<f64>; 3]], periodic: [bool; 3]) -> Result<Self> {
        let mut comps = Vec::new();
        let mut dim = 0;
        for f in factors {
            let shape = [f[0].nrows(), f[1].nrows(), f[2].nrows()];
            let fac = [Factor1d::new(&f[0], periodic[0])?, Factor1d::new(&f[1], periodic[1])?, Factor1d::new(&f[2], periodic[2])?];
            dim += shape.iter().product::<usize>();
            comps.push((fac, shape));
        }
        Ok(KroneckerMassSolver { comps, dim })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let mut off = 0;
        let mut line = Vec::new();
        for (fac, s) in &self.comps {
            let len = s[0] * s[1] * s[2];
            let blk = &mut x[off..off + len];
            let strides = [s[1] * s[2], s[2], 1];
            for d in 0..3 {
                let n = s[d];
                if n == 1 {
                    let mut one = [0.0];
                    for v in blk.iter_mut() {
                        one[0] = *v;
                        fac[d].solve_in_place(&mut one);
                        *v = one[0];
                    }
                    continue;
                }
                line.resize(n, 0.0);
                let (o1, o2) = match d {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                for i in 0..s[o1] {
                    for j in 0..s[o2] {
                        let base = i * strides[o1] + j * strides[o2];
                        for k in 0..n {
                            line[k] = blk[base + k * strides[d]];
                        }
                        fac[d].solve_in_place(&mut line);
                        for k in 0..n {
                            blk[base + k * strides[d]] = line[k];
                        }
                    }
                }
            }
            off += len;
        }
    }
}

impl LinOp for KroneckerMassSolver {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
        self.solve_in_place(y);
    }
}

/// Block-diagonal preconditioner.
pub struct BlockDiagPrec<'a> {
    blocks: Vec<&'a dyn LinOp>,
    dim: usize,
}

impl<'a> BlockDiagPrec<'a> {
    pub fn new(blocks: Vec<&'a dyn LinOp>, sizes: &[usize]) -> Result<Self> {
        if blocks.len() != sizes.len() {
            return Err(Error::InvalidArgument(format!("{} blocks for {} system blocks", blocks.len(), sizes.len())));
        }
        for (b, s) in blocks.iter().zip(sizes) {
            if b.dim() != *s {
                return Err(Error::InvalidArgument(format!("block of size {} for system block of size {s}", b.dim())));
            }
        }
        Ok(BlockDiagPrec { dim: sizes.iter().sum(), blocks })
    }
}

impl LinOp for BlockDiagPrec<'_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut off = 0;
        for b in &self.blocks {
            let n = b.dim();
            b.apply(&x[off..off + n], &mut y[off..off + n]);
            off += n;
        }
    }
}
