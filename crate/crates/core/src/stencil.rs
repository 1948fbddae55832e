//! Sparse storage for tensor-product spline operators.
//!
//! `StencilMatrix` stores one component block with a fixed band of 2p+1
//! offsets per direction. Periodic directions with fewer than 2p+1 cells
//! alias offsets, so those store one slot per column instead.
//! `BlockMatrix` stacks component blocks; `CsrMatrix` and `IntCsr` are plain
//! compressed-row matrices used for incidence operators and conversions.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct AxisBand {
    pub n_rows: usize,
    pub n_cols: usize,
    pub periodic: bool,
    pub width: usize,
    aliased: bool,
}

impl AxisBand {
    pub fn new(n_rows: usize, n_cols: usize, periodic: bool, width: usize) -> Self {
        assert!(!periodic || n_rows == n_cols, "periodic band needs a square axis");
        let aliased = periodic && n_cols < 2 * width + 1;
        AxisBand { n_rows, n_cols, periodic, width, aliased }
    }

    pub fn slots(&self) -> usize {
        if self.aliased {
            self.n_cols
        } else {
            2 * self.width + 1
        }
    }

    #[inline]
    pub fn slot(&self, offset: isize) -> usize {
        debug_assert!(offset.unsigned_abs() <= self.width, "offset {offset} outside band {}", self.width);
        if self.aliased {
            offset.rem_euclid(self.n_cols as isize) as usize
        } else {
            (offset + self.width as isize) as usize
        }
    }

    #[inline]
    pub fn col(&self, row: usize, slot: usize) -> Option<usize> {
        if self.aliased {
            return Some((row + slot) % self.n_cols);
        }
        let c = row as isize + slot as isize - self.width as isize;
        if self.periodic {
            Some(c.rem_euclid(self.n_cols as isize) as usize)
        } else if c >= 0 && (c as usize) < self.n_cols {
            Some(c as usize)
        } else {
            None
        }
    }

    fn neighbours(&self) -> Vec<Vec<(usize, usize)>> {
        (0..self.n_rows)
            .map(|r| (0..self.slots()).filter_map(|s| self.col(r, s).map(|c| (s, c))).collect())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct StencilMatrix {
    axes: [AxisBand; 3],
    nbrs: [Vec<Vec<(usize, usize)>>; 3],
    slots: [usize; 3],
    data: Vec<f64>,
}

impl PartialEq for StencilMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.axes == other.axes && self.data == other.data
    }
}

impl StencilMatrix {
    pub fn zeros(axes: [AxisBand; 3]) -> Self {
        let slots = [axes[0].slots(), axes[1].slots(), axes[2].slots()];
        let nrows = axes[0].n_rows * axes[1].n_rows * axes[2].n_rows;
        let nbrs = [axes[0].neighbours(), axes[1].neighbours(), axes[2].neighbours()];
        StencilMatrix { data: vec![0.0; nrows * slots[0] * slots[1] * slots[2]], axes, nbrs, slots }
    }

    pub fn axes(&self) -> &[AxisBand; 3] {
        &self.axes
    }
    pub fn row_shape(&self) -> [usize; 3] {
        [self.axes[0].n_rows, self.axes[1].n_rows, self.axes[2].n_rows]
    }
    pub fn col_shape(&self) -> [usize; 3] {
        [self.axes[0].n_cols, self.axes[1].n_cols, self.axes[2].n_cols]
    }
    pub fn nrows(&self) -> usize {
        self.row_shape().iter().product()
    }
    pub fn ncols(&self) -> usize {
        self.col_shape().iter().product()
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn stride(&self) -> usize {
        self.slots[0] * self.slots[1] * self.slots[2]
    }

    /// Accumulate `v` at row multi-index `row` and unwrapped offset `off`.
    #[inline]
    pub fn add(&mut self, row: [usize; 3], off: [isize; 3], v: f64) {
        let rs = self.row_shape();
        let r = (row[0] * rs[1] + row[1]) * rs[2] + row[2];
        let s = (self.axes[0].slot(off[0]) * self.slots[1] + self.axes[1].slot(off[1])) * self.slots[2] + self.axes[2].slot(off[2]);
        let st = self.stride();
        self.data[r * st + s] += v;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    /// self += alpha * other; both must share the band layout.
    pub fn axpy(&mut self, alpha: f64, other: &StencilMatrix) {
        assert_eq!(self.axes, other.axes, "band layouts differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// y += alpha * A x
    pub fn apply_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        let rs = self.row_shape();
        let cs = self.col_shape();
        debug_assert_eq!(x.len(), self.ncols());
        debug_assert_eq!(y.len(), self.nrows());
        let st = self.stride();
        let (s1, s2) = (self.slots[1], self.slots[2]);
        let mut row = 0;
        for ix in 0..rs[0] {
            let nx = &self.nbrs[0][ix];
            for iy in 0..rs[1] {
                let ny = &self.nbrs[1][iy];
                for iz in 0..rs[2] {
                    let nz = &self.nbrs[2][iz];
                    let base_r = row * st;
                    let mut acc = 0.0;
                    for &(sx, cx) in nx {
                        for &(sy, cy) in ny {
                            let base = base_r + (sx * s1 + sy) * s2;
                            let cb = (cx * cs[1] + cy) * cs[2];
                            for &(sz, cz) in nz {
                                acc += self.data[base + sz] * x[cb + cz];
                            }
                        }
                    }
                    y[row] += alpha * acc;
                    row += 1;
                }
            }
        }
    }

    /// Visit every stored entry as (row, col, value), including explicit zeros.
    pub fn for_each_entry(&self, mut f: impl FnMut(usize, usize, f64)) {
        let rs = self.row_shape();
        let cs = self.col_shape();
        let st = self.stride();
        let (s1, s2) = (self.slots[1], self.slots[2]);
        let mut row = 0;
        for ix in 0..rs[0] {
            for iy in 0..rs[1] {
                for iz in 0..rs[2] {
                    for &(sx, cx) in &self.nbrs[0][ix] {
                        for &(sy, cy) in &self.nbrs[1][iy] {
                            for &(sz, cz) in &self.nbrs[2][iz] {
                                let v = self.data[row * st + (sx * s1 + sy) * s2 + sz];
                                f(row, (cx * cs[1] + cy) * cs[2] + cz, v);
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols());
        self.for_each_entry(|r, c, v| m[(r, c)] += v);
        m
    }
}

/// Component-block matrix. Missing blocks are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
    blocks: Vec<Option<StencilMatrix>>,
}

impl BlockMatrix {
    pub fn new(row_sizes: Vec<usize>, col_sizes: Vec<usize>) -> Self {
        let n = row_sizes.len() * col_sizes.len();
        BlockMatrix { row_sizes, col_sizes, blocks: vec![None; n] }
    }

    pub fn nrows(&self) -> usize {
        self.row_sizes.iter().sum()
    }
    pub fn ncols(&self) -> usize {
        self.col_sizes.iter().sum()
    }
    pub fn n_block_rows(&self) -> usize {
        self.row_sizes.len()
    }
    pub fn n_block_cols(&self) -> usize {
        self.col_sizes.len()
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&StencilMatrix> {
        self.blocks[i * self.col_sizes.len() + j].as_ref()
    }

    /// Store a block; all-zero blocks are dropped.
    pub fn set_block(&mut self, i: usize, j: usize, m: StencilMatrix) {
        assert_eq!(m.nrows(), self.row_sizes[i]);
        assert_eq!(m.ncols(), self.col_sizes[j]);
        let nc = self.col_sizes.len();
        self.blocks[i * nc + j] = if m.is_zero() { None } else { Some(m) };
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.is_none())
    }

    pub fn n_nonzero_blocks(&self) -> usize {
        self.blocks.iter().filter(|b| b.is_some()).count()
    }

    fn offsets(sizes: &[usize]) -> Vec<usize> {
        let mut o = vec![0; sizes.len() + 1];
        for (i, s) in sizes.iter().enumerate() {
            o[i + 1] = o[i] + s;
        }
        o
    }

    pub fn apply_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        let ro = Self::offsets(&self.row_sizes);
        let co = Self::offsets(&self.col_sizes);
        let nc = self.col_sizes.len();
        for i in 0..self.row_sizes.len() {
            for j in 0..nc {
                if let Some(b) = &self.blocks[i * nc + j] {
                    b.apply_add(alpha, &x[co[j]..co[j + 1]], &mut y[ro[i]..ro[i + 1]]);
                }
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.apply_add(1.0, x, &mut y);
        y
    }

    /// self + alpha * other, blockwise.
    pub fn added(&self, alpha: f64, other: &BlockMatrix) -> BlockMatrix {
        assert_eq!(self.row_sizes, other.row_sizes);
        assert_eq!(self.col_sizes, other.col_sizes);
        let mut out = self.clone();
        for (a, b) in out.blocks.iter_mut().zip(&other.blocks) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => a.axpy(alpha, b),
                (None, Some(b)) => {
                    let mut m = b.clone();
                    m.scale(alpha);
                    *a = Some(m);
                }
                _ => {}
            }
        }
        out
    }

    pub fn for_each_entry(&self, mut f: impl FnMut(usize, usize, f64)) {
        let ro = Self::offsets(&self.row_sizes);
        let co = Self::offsets(&self.col_sizes);
        let nc = self.col_sizes.len();
        for i in 0..self.row_sizes.len() {
            for j in 0..nc {
                if let Some(b) = &self.blocks[i * nc + j] {
                    b.for_each_entry(|r, c, v| f(ro[i] + r, co[j] + c, v));
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols());
        self.for_each_entry(|r, c, v| m[(r, c)] += v);
        m
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let mut t = Vec::new();
        self.for_each_entry(|r, c, v| {
            if v != 0.0 {
                t.push((r, c, v))
            }
        });
        CsrMatrix::from_triplets(self.nrows(), self.ncols(), t)
    }
}

/// Real compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicates are summed; exact zeros are kept out.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        let mut m = CsrMatrix { nrows, ncols, indptr, indices, values };
        m.prune();
        m
    }

    fn prune(&mut self) {
        let mut indptr = vec![0; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != 0.0 {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn apply_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            y[r] += alpha * acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.apply_add(1.0, x, &mut y);
        y
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                t.push((r, self.indices[k], self.values[k]));
            }
        }
        t
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, t)
    }

    pub fn scaled(&self, alpha: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= alpha);
        m.prune();
        m
    }

    pub fn add(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = self.triplets();
        t.extend(other.triplets());
        CsrMatrix::from_triplets(self.nrows, self.ncols, t)
    }

    /// Sparse product self * other.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut acc = vec![0.0; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut t = Vec::new();
        for r in 0..self.nrows {
            let mut cols = Vec::new();
            for k in self.indptr[r]..self.indptr[r + 1] {
                let (mid, a) = (self.indices[k], self.values[k]);
                for l in other.indptr[mid]..other.indptr[mid + 1] {
                    let c = other.indices[l];
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = 0.0;
                        cols.push(c);
                    }
                    acc[c] += a * other.values[l];
                }
            }
            for c in cols {
                t.push((r, c, acc[c]));
            }
        }
        CsrMatrix::from_triplets(self.nrows, other.ncols, t)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }
}

/// Integer compressed sparse row matrix for incidence operators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntCsr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<i64>,
}

impl IntCsr {
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, i64)>) -> Self {
        t.sort_by_key(|a| (a.0, a.1));
        let mut merged: Vec<(usize, usize, i64)> = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            assert!(r < nrows && c < ncols);
            match merged.last_mut() {
                Some(last) if (last.0, last.1) == (r, c) => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|e| e.2 != 0);
        let mut indptr = vec![0; nrows + 1];
        for e in &merged {
            indptr[e.0 + 1] += 1;
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        IntCsr {
            nrows,
            ncols,
            indptr,
            indices: merged.iter().map(|e| e.1).collect(),
            values: merged.iter().map(|e| e.2).collect(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, i64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                t.push((r, self.indices[k], self.values[k]));
            }
        }
        t
    }

    /// Exact integer product.
    pub fn matmul(&self, other: &IntCsr) -> IntCsr {
        assert_eq!(self.ncols, other.nrows);
        let mut t = Vec::new();
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let mid = self.indices[k];
                for l in other.indptr[mid]..other.indptr[mid + 1] {
                    t.push((r, other.indices[l], self.values[k] * other.values[l]));
                }
            }
        }
        IntCsr::from_triplets(self.nrows, other.ncols, t)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.apply_add(1.0, x, &mut y);
        y
    }

    pub fn apply_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] as f64 * x[self.indices[k]];
            }
            y[r] += alpha * acc;
        }
    }

    /// y += alpha * Aᵀ x
    pub fn apply_transpose_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for r in 0..self.nrows {
            let xr = alpha * x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.values[k] as f64 * xr;
            }
        }
    }

    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.apply_transpose_add(1.0, x, &mut y);
        y
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.nrows, self.ncols, self.triplets().into_iter().map(|(r, c, v)| (r, c, v as f64)).collect())
    }
}
