//! Univariate B-splines on uniform knots: standard (N) bases, their
//! Curry-Schoenberg (D) companions, Greville points and Gauss rules.
//!
//! Every basis keeps a local knot array (with clamping or ghost knots) and
//! maps local function numbers to an unwrapped index `u`. For clamped bases
//! `u` is the global index; periodic bases wrap it modulo the cell count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisKind {
    /// Standard B-splines of the full degree.
    N,
    /// Curry-Schoenberg splines of one degree lower, unit integral.
    D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
    periodic: bool,
    n_cells: usize,
    domain: (f64, f64),
}

impl KnotVector {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
    pub fn degree(&self) -> usize {
        self.degree
    }
    pub fn periodic(&self) -> bool {
        self.periodic
    }
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }
    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }
    pub fn cell_width(&self) -> f64 {
        (self.domain.1 - self.domain.0) / self.n_cells as f64
    }
    /// Breakpoints x_0 < ... < x_n of the uniform grid.
    pub fn breakpoints(&self) -> Vec<f64> {
        let h = self.cell_width();
        (0..=self.n_cells)
            .map(|i| {
                if i == self.n_cells {
                    self.domain.1
                } else {
                    self.domain.0 + i as f64 * h
                }
            })
            .collect()
    }
    pub fn n_basis(&self) -> usize {
        if self.periodic {
            self.n_cells
        } else {
            self.knots.len() - self.degree - 1
        }
    }
}

/// Uniform clamped or periodic knot vector.
pub fn make_knot_vector(n_cells: usize, degree: usize, domain: (f64, f64), periodic: bool) -> Result<KnotVector> {
    if n_cells < 1 {
        return Err(Error::InvalidArgument("n_cells must be at least 1".into()));
    }
    let (a, b) = domain;
    if !(b > a) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!("degenerate domain [{a}, {b}]")));
    }
    let h = (b - a) / n_cells as f64;
    let p = degree;
    let knots = if periodic {
        (-(p as isize)..=(n_cells + p) as isize)
            .map(|k| if k == n_cells as isize { b } else { a + k as f64 * h })
            .collect()
    } else {
        let mut k = vec![a; p + 1];
        k.extend((1..n_cells).map(|i| a + i as f64 * h));
        k.extend(std::iter::repeat_n(b, p + 1));
        k
    };
    Ok(KnotVector { knots, degree, periodic, n_cells, domain })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis1D {
    kv: KnotVector,
    kind: BasisKind,
    /// Per local function scaling (1 for N, p/(t_{i+p}-t_i) for D).
    scales: Vec<f64>,
    /// Offset between local function number and unwrapped index.
    shift: usize,
}

/// Nonzero basis functions at a point. `values[k][j]` is the k-th derivative
/// of the function with unwrapped index `first + j`.
#[derive(Debug, Clone)]
pub struct BasisValues {
    pub first: isize,
    pub values: Vec<Vec<f64>>,
}

impl BSplineBasis1D {
    /// Standard basis built on a knot vector.
    pub fn standard(kv: KnotVector) -> Self {
        let nloc = kv.knots.len() - kv.degree - 1;
        let shift = if kv.periodic { kv.degree } else { 0 };
        BSplineBasis1D { kv, kind: BasisKind::N, scales: vec![1.0; nloc], shift }
    }

    pub fn knot_vector(&self) -> &KnotVector {
        &self.kv
    }
    pub fn kind(&self) -> BasisKind {
        self.kind
    }
    /// Polynomial degree of the functions in this basis.
    pub fn degree(&self) -> usize {
        self.kv.degree
    }
    pub fn periodic(&self) -> bool {
        self.kv.periodic
    }
    pub fn n_cells(&self) -> usize {
        self.kv.n_cells
    }
    pub fn domain(&self) -> (f64, f64) {
        self.kv.domain
    }
    pub fn dim(&self) -> usize {
        if self.kv.periodic {
            self.kv.n_cells
        } else {
            self.scales.len()
        }
    }

    /// Map an unwrapped index to the coefficient index.
    #[inline]
    pub fn global_index(&self, u: isize) -> usize {
        if self.kv.periodic {
            u.rem_euclid(self.kv.n_cells as isize) as usize
        } else {
            debug_assert!(u >= 0 && (u as usize) < self.scales.len());
            u as usize
        }
    }

    /// Cell containing x (the last cell for x = b).
    pub fn cell_of(&self, x: f64) -> usize {
        let (a, _) = self.kv.domain;
        let h = self.kv.cell_width();
        let c = ((x - a) / h).floor();
        if c < 0.0 {
            0
        } else {
            (c as usize).min(self.kv.n_cells - 1)
        }
    }

    /// Nonzero functions and derivatives at x, which must lie in the domain.
    pub fn eval(&self, x: f64, nderiv: usize) -> Result<BasisValues> {
        let (a, b) = self.kv.domain;
        let tol = 1e-12 * (b - a);
        if !(x >= a - tol && x <= b + tol) {
            return Err(Error::OutOfDomain { x, a, b });
        }
        Ok(self.eval_in_cell(self.cell_of(x), x, nderiv))
    }

    /// Evaluate using the polynomial piece of `cell`; x is not range checked.
    pub fn eval_in_cell(&self, cell: usize, x: f64, nderiv: usize) -> BasisValues {
        let q = self.kv.degree;
        let span = q + cell;
        let mut values = ders_basis_funs(&self.kv.knots, q, span, x, nderiv);
        let e0 = span - q;
        for row in values.iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v *= self.scales[e0 + j];
            }
        }
        BasisValues { first: e0 as isize - self.shift as isize, values }
    }

    /// Unwrapped index of the first function that is nonzero on `cell`.
    pub fn first_in_cell(&self, cell: usize) -> isize {
        cell as isize - self.shift as isize
    }

    /// Value of a single function (by coefficient index) at x. Slow path,
    /// summing all periodic images.
    pub fn eval_single(&self, index: usize, x: f64) -> Result<f64> {
        let bv = self.eval(x, 0)?;
        Ok(bv.values[0]
            .iter()
            .enumerate()
            .filter(|(j, _)| self.global_index(bv.first + *j as isize) == index)
            .map(|(_, v)| *v)
            .sum())
    }

    /// Greville abscissae, one per function, wrapped into the domain for
    /// periodic bases.
    pub fn greville_points(&self) -> Vec<f64> {
        let (a, b) = self.kv.domain;
        self.greville_unwrapped()
            .into_iter()
            .map(|g| {
                if self.kv.periodic {
                    let l = b - a;
                    a + (g - a).rem_euclid(l)
                } else {
                    g
                }
            })
            .collect()
    }

    /// Greville abscissae without periodic wrapping; for periodic bases
    /// point i belongs to the function with unwrapped index i.
    pub fn greville_unwrapped(&self) -> Vec<f64> {
        let p = self.kv.degree;
        let (a, _) = self.kv.domain;
        if self.kv.periodic {
            let h = self.kv.cell_width();
            (0..self.kv.n_cells)
                .map(|i| a + h * (i as f64 + (p as f64 + 1.0) / 2.0))
                .collect()
        } else if p == 0 {
            let t = &self.kv.knots;
            (0..self.dim()).map(|i| 0.5 * (t[i] + t[i + 1])).collect()
        } else {
            let t = &self.kv.knots;
            (0..self.dim())
                .map(|i| t[i + 1..=i + p].iter().sum::<f64>() / p as f64)
                .collect()
        }
    }
}

/// Curry-Schoenberg companion D_i = p N_i^{p-1} / (t_{i+p} - t_i) of a
/// standard basis, indexed so that (N_i)' = D_{i-1} - D_i.
pub fn curry_schoenberg(basis: &BSplineBasis1D) -> Result<BSplineBasis1D> {
    if basis.kind != BasisKind::N {
        return Err(Error::InvalidArgument("curry_schoenberg expects an N basis".into()));
    }
    let p = basis.kv.degree;
    if p == 0 {
        return Err(Error::InvalidArgument("degree 0 has no derivative basis".into()));
    }
    let t = &basis.kv.knots;
    let knots: Vec<f64> = t[1..t.len() - 1].to_vec();
    let q = p - 1;
    let nloc = knots.len() - q - 1;
    let scales = (0..nloc)
        .map(|e| {
            let len = knots[e + p] - knots[e];
            if len > 0.0 {
                p as f64 / len
            } else {
                0.0
            }
        })
        .collect();
    let kv = KnotVector { knots, degree: q, periodic: basis.kv.periodic, n_cells: basis.kv.n_cells, domain: basis.kv.domain };
    let shift = if kv.periodic { p } else { 0 };
    Ok(BSplineBasis1D { kv, kind: BasisKind::D, scales, shift })
}

/// Cox-de Boor values and derivatives of the q+1 functions nonzero on
/// knot span `span` (The NURBS Book, A2.3). Rows beyond degree q are zero.
pub fn ders_basis_funs(knots: &[f64], q: usize, span: usize, x: f64, nderiv: usize) -> Vec<Vec<f64>> {
    let mut ndu = vec![vec![0.0; q + 1]; q + 1];
    let mut left = vec![0.0; q + 1];
    let mut right = vec![0.0; q + 1];
    ndu[0][0] = 1.0;
    for j in 1..=q {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = vec![vec![0.0; q + 1]; nderiv + 1];
    for j in 0..=q {
        ders[0][j] = ndu[j][q];
    }
    let n = nderiv.min(q);
    let mut a = [vec![0.0; q + 1], vec![0.0; q + 1]];
    for r in 0..=q {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=n {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = q - k;
            if r >= k {
                let rk = rk as usize;
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { q - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut fac = q as f64;
    for k in 1..=n {
        for v in ders[k].iter_mut() {
            *v *= fac;
        }
        fac *= (q - k) as f64;
    }
    ders
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "at least one quadrature point");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        // recompute derivative at the converged node
        let (mut p0, mut p1) = (1.0, 0.0);
        for j in 0..n {
            let p2 = p1;
            p1 = p0;
            p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
        }
        if n > 1 || z != 0.0 {
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
        }
        let wi = if n == 1 { 2.0 } else { 2.0 / ((1.0 - z * z) * dp * dp) };
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss rule mapped onto each cell of a breakpoint sequence.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
}

pub fn gauss_rule(n_points: usize, breakpoints: &[f64]) -> Result<QuadratureRule> {
    if n_points < 1 {
        return Err(Error::InvalidArgument("n_points must be at least 1".into()));
    }
    let (xr, wr) = gauss_legendre(n_points);
    let mut points = Vec::with_capacity(breakpoints.len().saturating_sub(1));
    let mut weights = Vec::with_capacity(points.capacity());
    for c in breakpoints.windows(2) {
        let (lo, hi) = (c[0], c[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        points.push(xr.iter().map(|x| mid + half * x).collect());
        weights.push(wr.iter().map(|w| half * w).collect());
    }
    Ok(QuadratureRule { points, weights })
}
