//! Dense symmetric matrices, cubic third-order tensors and the multilinear
//! algebra the private estimators are built from.
//!
//! Matrices are `nalgebra` dense matrices. Third-order tensors keep their own
//! row-major buffer: entry `(i, j, k)` of a side-`D` tensor lives at
//! `(i * D + j) * D + k`, which is also the order used by [`Tensor3::vectorize`].
//!
//! Unique entries of a symmetric tensor are indexed by canonical triples
//! `i <= j <= k` ranked colexicographically (compare `k`, then `j`, then `i`):
//!
//! ```text
//! rank(i, j, k) = i + C(j + 1, 2) + C(k + 2, 3)
//! ```

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Iteration cap handed to the symmetric eigensolver.
const EIGEN_MAX_ITER: usize = 10_000;

/// Square matrix that is exactly symmetric by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix(Matrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(Matrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        SymMatrix(Matrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 }))
    }

    /// Builds the matrix from its upper triangle; `f(i, j)` is called once for
    /// every `i <= j` in row-major order and mirrored below the diagonal.
    pub fn from_upper(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    /// Symmetric part `(M + Mᵀ) / 2`. Exact symmetry holds because the two
    /// mirrored sums are the same floating-point operation.
    pub fn symmetric_part(m: &Matrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "symmetric part of a {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        Ok(SymMatrix(Matrix::from_fn(n, n, |i, j| {
            let (a, b) = (i.min(j), i.max(j));
            0.5 * (m[(a, b)] + m[(b, a)])
        })))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_dim(self.dim(), other.dim(), "matrix sum")?;
        Ok(SymMatrix(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_dim(self.dim(), other.dim(), "matrix difference")?;
        Ok(SymMatrix(&self.0 - &other.0))
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix(&self.0 * c)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Cubic `D x D x D` array with row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Tensor3 {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a tensor of side {dim}",
                data.len()
            )));
        }
        Ok(Tensor3 { dim, data })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dim * dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    data.push(f(i, j, k));
                }
            }
        }
        Tensor3 { dim, data }
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dim + j) * self.dim + k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored entries, `D³`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Entries in row-major order (last index fastest).
    pub fn vectorize(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Frobenius-type norm, equal to the 2-norm of [`Tensor3::vectorize`].
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Tensor3 {
        Tensor3 {
            dim: self.dim,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &Tensor3) -> Result<()> {
        check_dim(self.dim, other.dim, "tensor axpy")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    fn zip_with(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Result<Tensor3> {
        check_dim(self.dim, other.dim, "tensor elementwise op")?;
        Ok(Tensor3 {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Largest absolute difference between entries related by an index
    /// permutation; zero for an exactly symmetric tensor.
    pub fn asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let v = self.get(i, j, k);
                    for (a, b, c) in permutations(i, j, k) {
                        worst = worst.max((v - self.get(a, b, c)).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Third-order tensor invariant under all six index permutations.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensor3(Tensor3);

impl SymTensor3 {
    pub fn zeros(dim: usize) -> Self {
        SymTensor3(Tensor3::zeros(dim))
    }

    /// Expands a vector of unique entries (in [`SymIndex`] rank order) to the
    /// full symmetric tensor.
    pub fn from_unique(dim: usize, unique: &[f64]) -> Result<Self> {
        let expected = d_sym(dim, 3);
        if unique.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} unique entries for side {dim}, expected {expected}",
                unique.len()
            )));
        }
        let mut t = Tensor3::zeros(dim);
        for (idx, &v) in SymIndex::all(dim).zip(unique) {
            for (a, b, c) in permutations(idx.i, idx.j, idx.k) {
                t.set(a, b, c, v);
            }
        }
        Ok(SymTensor3(t))
    }

    /// Averages each entry over its index permutations.
    pub fn symmetrize(t: &Tensor3) -> Self {
        let d = t.dim();
        let mut out = Tensor3::zeros(d);
        for idx in SymIndex::all(d) {
            let perms = permutations(idx.i, idx.j, idx.k);
            let mean = perms.iter().map(|&(a, b, c)| t.get(a, b, c)).sum::<f64>() / 6.0;
            for (a, b, c) in perms {
                out.set(a, b, c, mean);
            }
        }
        SymTensor3(out)
    }

    /// Unique entries in [`SymIndex`] rank order.
    pub fn unique(&self) -> Vec<f64> {
        SymIndex::all(self.dim())
            .map(|idx| self.0.get(idx.i, idx.j, idx.k))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.0.get(i, j, k)
    }

    pub fn as_tensor(&self) -> &Tensor3 {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor3 {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn add(&self, other: &SymTensor3) -> Result<SymTensor3> {
        Ok(SymTensor3(self.0.add(&other.0)?))
    }

    pub fn sub(&self, other: &SymTensor3) -> Result<SymTensor3> {
        Ok(SymTensor3(self.0.sub(&other.0)?))
    }

    pub fn scale(&self, c: f64) -> SymTensor3 {
        SymTensor3(self.0.scale(c))
    }

    /// `λ v⊗v⊗v`
    pub fn rank_one(lambda: f64, v: &[f64]) -> SymTensor3 {
        let d = v.len();
        SymTensor3(Tensor3::from_fn(d, |i, j, k| lambda * v[i] * v[j] * v[k]))
    }

    /// `self -= λ v⊗v⊗v`, preserving exact symmetry.
    pub fn deflate(&mut self, lambda: f64, v: &[f64]) -> Result<()> {
        check_dim(self.dim(), v.len(), "deflation vector")?;
        for idx in SymIndex::all(self.dim()) {
            let val = self.0.get(idx.i, idx.j, idx.k) - lambda * v[idx.i] * v[idx.j] * v[idx.k];
            for (a, b, c) in permutations(idx.i, idx.j, idx.k) {
                self.0.set(a, b, c, val);
            }
        }
        Ok(())
    }
}

/// Canonical index `i <= j <= k` of a unique entry of a symmetric tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymIndex {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl SymIndex {
    /// Sorts an arbitrary triple into canonical order.
    pub fn new(a: usize, b: usize, c: usize) -> Self {
        let mut v = [a, b, c];
        v.sort_unstable();
        SymIndex {
            i: v[0],
            j: v[1],
            k: v[2],
        }
    }

    pub fn rank(&self) -> usize {
        self.i + binomial(self.j + 1, 2) + binomial(self.k + 2, 3)
    }

    pub fn from_rank(rank: usize) -> Self {
        let mut k = 0;
        while binomial(k + 3, 3) <= rank {
            k += 1;
        }
        let rest = rank - binomial(k + 2, 3);
        let mut j = 0;
        while binomial(j + 2, 2) <= rest {
            j += 1;
        }
        let i = rest - binomial(j + 1, 2);
        SymIndex { i, j, k }
    }

    /// All canonical triples for side `dim`, in rank order.
    pub fn all(dim: usize) -> impl Iterator<Item = SymIndex> {
        (0..dim).flat_map(|k| (0..=k).flat_map(move |j| (0..=j).map(move |i| SymIndex { i, j, k })))
    }

    /// Number of distinct index permutations of this entry (1, 3 or 6).
    pub fn multiplicity(&self) -> usize {
        if self.i == self.j && self.j == self.k {
            1
        } else if self.i == self.j || self.j == self.k {
            3
        } else {
            6
        }
    }
}

fn permutations(i: usize, j: usize, k: usize) -> [(usize, usize, usize); 6] {
    [
        (i, j, k),
        (i, k, j),
        (j, i, k),
        (j, k, i),
        (k, i, j),
        (k, j, i),
    ]
}

fn binomial(n: usize, r: usize) -> usize {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for t in 0..r {
        acc = acc * (n - t) as u128 / (t + 1) as u128;
    }
    acc as usize
}

/// Number of unique entries of a symmetric order-`order` tensor of side `dim`,
/// `C(dim + order - 1, order)`.
pub fn d_sym(dim: usize, order: usize) -> usize {
    if dim == 0 {
        return 0;
    }
    binomial(dim + order - 1, order)
}

fn check_dim(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// `u ⊗ v ⊗ w`
pub fn outer3(u: &[f64], v: &[f64], w: &[f64]) -> Result<Tensor3> {
    check_dim(u.len(), v.len(), "outer product")?;
    check_dim(u.len(), w.len(), "outer product")?;
    Ok(Tensor3::from_fn(u.len(), |i, j, k| u[i] * v[j] * w[k]))
}

/// Multilinear map `T(V₁, V₂, V₃)`:
/// `out[a][b][c] = Σ_ijk T[i][j][k] V₁[i][a] V₂[j][b] V₃[k][c]`.
///
/// Contracts one mode at a time, `O(D³K)` work.
pub fn multilinear3(t: &Tensor3, v1: &Matrix, v2: &Matrix, v3: &Matrix) -> Result<Tensor3> {
    let d = t.dim();
    for v in [v1, v2, v3] {
        check_dim(v.nrows(), d, "multilinear map rows")?;
    }
    let kk = v1.ncols();
    check_dim(v2.ncols(), kk, "multilinear map columns")?;
    check_dim(v3.ncols(), kk, "multilinear map columns")?;
    let src = t.as_slice();

    // mode 1: s1[a][j][k], shape K x D x D
    let mut s1 = vec![0.0; kk * d * d];
    for i in 0..d {
        let slab = &src[i * d * d..(i + 1) * d * d];
        for a in 0..kk {
            let c = v1[(i, a)];
            if c == 0.0 {
                continue;
            }
            let dst = &mut s1[a * d * d..(a + 1) * d * d];
            for (x, y) in dst.iter_mut().zip(slab) {
                *x += c * y;
            }
        }
    }
    // mode 2: s2[a][b][k], shape K x K x D
    let mut s2 = vec![0.0; kk * kk * d];
    for a in 0..kk {
        for j in 0..d {
            let row = &s1[(a * d + j) * d..(a * d + j + 1) * d];
            for b in 0..kk {
                let c = v2[(j, b)];
                if c == 0.0 {
                    continue;
                }
                let dst = &mut s2[(a * kk + b) * d..(a * kk + b + 1) * d];
                for (x, y) in dst.iter_mut().zip(row) {
                    *x += c * y;
                }
            }
        }
    }
    // mode 3
    let mut out = Tensor3::zeros(kk);
    for a in 0..kk {
        for b in 0..kk {
            let row = &s2[(a * kk + b) * d..(a * kk + b + 1) * d];
            for c in 0..kk {
                let val: f64 = row.iter().enumerate().map(|(k, x)| x * v3[(k, c)]).sum();
                out.set(a, b, c, val);
            }
        }
    }
    Ok(out)
}

/// Same projection on all three modes, `T(W, W, W)`.
pub fn project3(t: &Tensor3, w: &Matrix) -> Result<Tensor3> {
    multilinear3(t, w, w, w)
}

/// `T(I, u, u)`, the tensor power-method map before normalization.
pub fn apply_iuu(t: &Tensor3, u: &[f64]) -> Result<Vec<f64>> {
    let d = t.dim();
    check_dim(u.len(), d, "apply_iuu vector")?;
    let src = t.as_slice();
    Ok((0..d)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..d {
                let row = &src[(i * d + j) * d..(i * d + j + 1) * d];
                let inner: f64 = row.iter().zip(u).map(|(x, y)| x * y).sum();
                acc += u[j] * inner;
            }
            acc
        })
        .collect())
}

/// `T(u, u, u)`
pub fn apply_uuu(t: &Tensor3, u: &[f64]) -> Result<f64> {
    let r = apply_iuu(t, u)?;
    Ok(r.iter().zip(u).map(|(a, b)| a * b).sum())
}

/// Leading eigenpairs of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct Eigen {
    /// Descending by algebraic value.
    pub values: Vec<f64>,
    /// `D x K`, orthonormal columns matching `values`.
    pub vectors: Matrix,
}

/// Top-`k` eigenpairs of `a`, sorted by descending eigenvalue (negative values
/// keep their algebraic order). Each eigenvector's largest-magnitude entry is
/// made positive, ties going to the lowest index.
pub fn top_k_eigs(a: &SymMatrix, k: usize) -> Result<Eigen> {
    let d = a.dim();
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("k = {k} must be in 1..={d}")));
    }
    let eig = SymmetricEigen::try_new(a.as_matrix().clone(), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or(Error::NonConvergence {
            max_iter: EIGEN_MAX_ITER,
        })?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let values: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::from_fn(d, k, |r, c| eig.eigenvectors[(r, order[c])]);
    canonicalize_signs(&mut vectors);
    Ok(Eigen { values, vectors })
}

/// Flips each column so that its largest-magnitude entry is positive.
pub fn canonicalize_signs(m: &mut Matrix) {
    for c in 0..m.ncols() {
        let mut best = 0;
        for r in 1..m.nrows() {
            if m[(r, c)].abs() > m[(best, c)].abs() {
                best = r;
            }
        }
        if m[(best, c)] < 0.0 {
            m.column_mut(c).neg_mut();
        }
    }
}

/// `‖VᵀV − I‖_F`
pub fn orthonormality_defect(v: &Matrix) -> f64 {
    let g = v.transpose() * v;
    (g - Matrix::identity(v.ncols(), v.ncols())).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn e(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    fn random_tensor(rng: &mut ChaCha8Rng, d: usize) -> Tensor3 {
        Tensor3::from_fn(d, |_, _, _| rng.random_range(-1.0..1.0))
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    // Independent oracle: the defining sextuple sum.
    fn naive_multilinear(t: &Tensor3, v1: &Matrix, v2: &Matrix, v3: &Matrix) -> Tensor3 {
        let d = t.dim();
        let k = v1.ncols();
        Tensor3::from_fn(k, |a, b, c| {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    for l in 0..d {
                        s += t.get(i, j, l) * v1[(i, a)] * v2[(j, b)] * v3[(l, c)];
                    }
                }
            }
            s
        })
    }

    fn max_abs_diff(a: &Tensor3, b: &Tensor3) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn outer3_basic_cases() {
        let t = outer3(&e(2, 0), &e(2, 0), &e(2, 0)).unwrap();
        assert_eq!(t.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let z = outer3(&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(z.as_slice().iter().all(|&x| x == 0.0));
        let ones = outer3(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!(ones.as_slice().iter().all(|&x| x == 1.0));
        assert!(outer3(&[1.0], &[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn multilinear_identity_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_tensor(&mut rng, 4);
        let id = Matrix::identity(4, 4);
        let out = multilinear3(&t, &id, &id, &id).unwrap();
        assert!(max_abs_diff(&out, &t) < 1e-15);
    }

    #[test]
    fn multilinear_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = random_matrix(&mut rng, 5, 3);
        let t = SymTensor3::rank_one(1.7, &v);
        let out = project3(t.as_tensor(), &w).unwrap();
        let wv: Vec<f64> = (0..3)
            .map(|c| (0..5).map(|r| w[(r, c)] * v[r]).sum())
            .collect();
        let expected = outer3(&wv, &wv, &wv).unwrap().scale(1.7);
        assert!(max_abs_diff(&out, &expected) < 1e-12);
    }

    #[test]
    fn multilinear_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (d, k) in [(2, 2), (3, 2), (4, 3), (5, 5)] {
            let t = random_tensor(&mut rng, d);
            let (a, b, c) = (
                random_matrix(&mut rng, d, k),
                random_matrix(&mut rng, d, k),
                random_matrix(&mut rng, d, k),
            );
            let fast = multilinear3(&t, &a, &b, &c).unwrap();
            let slow = naive_multilinear(&t, &a, &b, &c);
            assert!(max_abs_diff(&fast, &slow) < 1e-12, "d={d} k={k}");
        }
    }

    #[test]
    fn multilinear_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let t = random_tensor(&mut rng, 5);
            let a = random_matrix(&mut rng, 5, 4);
            let b = random_matrix(&mut rng, 4, 2);
            let ab = &a * &b;
            let direct = project3(&t, &ab).unwrap();
            let staged = project3(&project3(&t, &a).unwrap(), &b).unwrap();
            let scale = direct.norm().max(1.0);
            assert!(max_abs_diff(&direct, &staged) / scale < 1e-10);
        }
    }

    #[test]
    fn multilinear_rejects_bad_shapes() {
        let t = Tensor3::zeros(3);
        let ok = Matrix::zeros(3, 2);
        assert!(multilinear3(&t, &Matrix::zeros(2, 2), &ok, &ok).is_err());
        assert!(multilinear3(&t, &ok, &Matrix::zeros(3, 1), &ok).is_err());
    }

    #[test]
    fn apply_iuu_examples() {
        let t = SymTensor3::rank_one(2.0, &e(2, 0));
        assert_eq!(apply_iuu(t.as_tensor(), &e(2, 0)).unwrap(), vec![2.0, 0.0]);
        assert_eq!(apply_iuu(t.as_tensor(), &e(2, 1)).unwrap(), vec![0.0, 0.0]);

        let t = SymTensor3::rank_one(2.0, &e(2, 0))
            .add(&SymTensor3::rank_one(1.0, &e(2, 1)))
            .unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = apply_iuu(t.as_tensor(), &[h, h]).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn apply_iuu_agrees_with_multilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 4;
        let t = random_tensor(&mut rng, d);
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let id = Matrix::identity(d, d);
        // T(I, u, u) as the first column block of the multilinear map with
        // rank-one second/third factors.
        let um = Matrix::from_fn(d, d, |r, c| if c == 0 { u[r] } else { 0.0 });
        let full = multilinear3(&t, &id, &um, &um).unwrap();
        let fast = apply_iuu(&t, &u).unwrap();
        for i in 0..d {
            assert!((full.get(i, 0, 0) - fast[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn norms() {
        assert_eq!(Tensor3::zeros(3).norm(), 0.0);
        let x = [0.6, 0.8, 0.0];
        let t = outer3(&x, &x, &x).unwrap();
        assert!((t.norm() - 1.0).abs() < 1e-15);
        let ones = Tensor3::from_fn(2, |_, _, _| 1.0);
        assert!((ones.norm() - 8f64.sqrt()).abs() < 1e-15);
        let v = ones.vectorize();
        assert_eq!(v.len(), 8);
    }

    #[test]
    fn d_sym_values() {
        assert_eq!(d_sym(2, 3), 4);
        assert_eq!(d_sym(3, 3), 10);
        assert_eq!(d_sym(1, 3), 1);
        assert_eq!(d_sym(4, 2), 10);
    }

    #[test]
    fn d_sym_matches_enumeration() {
        for d in 1..=10 {
            let mut count = 0;
            for i in 0..d {
                for j in i..d {
                    for _k in j..d {
                        count += 1;
                    }
                }
            }
            assert_eq!(d_sym(d, 3), count);
            assert_eq!(SymIndex::all(d).count(), count);
        }
    }

    #[test]
    fn sym_index_rank_is_a_bijection() {
        for d in 1..=8 {
            for (r, idx) in SymIndex::all(d).enumerate() {
                assert!(idx.i <= idx.j && idx.j <= idx.k && idx.k < d);
                assert_eq!(idx.rank(), r);
                assert_eq!(SymIndex::from_rank(r), idx);
            }
        }
        assert_eq!(SymIndex::new(2, 0, 1), SymIndex { i: 0, j: 1, k: 2 });
    }

    #[test]
    fn from_unique_examples() {
        let t = SymTensor3::from_unique(1, &[5.0]).unwrap();
        assert_eq!(t.get(0, 0, 0), 5.0);

        let t = SymTensor3::from_unique(2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.get(0, 0, 0), 1.0);
        for (i, j, k) in [(0, 0, 1), (0, 1, 0), (1, 0, 0)] {
            assert_eq!(t.get(i, j, k), 2.0);
        }
        for (i, j, k) in [(0, 1, 1), (1, 0, 1), (1, 1, 0)] {
            assert_eq!(t.get(i, j, k), 3.0);
        }
        assert_eq!(t.get(1, 1, 1), 4.0);
        assert_eq!(t.as_tensor().asymmetry(), 0.0);
        assert!(SymTensor3::from_unique(2, &[1.0; 5]).is_err());
    }

    #[test]
    fn symmetrize_single_triple() {
        let t = outer3(&e(3, 0), &e(3, 1), &e(3, 2)).unwrap();
        let s = SymTensor3::symmetrize(&t);
        assert_eq!(s.as_tensor().asymmetry(), 0.0);
        assert!((s.get(2, 1, 0) - 1.0 / 6.0).abs() < 1e-16);
        assert_eq!(s.get(0, 0, 1), 0.0);
    }

    #[test]
    fn top_k_eigs_identity_and_diagonal() {
        let eig = top_k_eigs(&SymMatrix::identity(3), 2).unwrap();
        assert_eq!(eig.values.len(), 2);
        assert!(eig.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!(orthonormality_defect(&eig.vectors) < 1e-12);

        let eig = top_k_eigs(&SymMatrix::from_diagonal(&[3.0, 2.0, 1.0]), 2).unwrap();
        assert!((eig.values[0] - 3.0).abs() < 1e-14 && (eig.values[1] - 2.0).abs() < 1e-14);
        let expected = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!((&eig.vectors - expected).norm() < 1e-14);

        assert!(top_k_eigs(&SymMatrix::identity(3), 4).is_err());
        assert!(top_k_eigs(&SymMatrix::identity(3), 0).is_err());
    }

    #[test]
    fn top_k_eigs_residual_on_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = SymMatrix::from_upper(5, |_, _| rng.random_range(-1.0..1.0));
        let eig = top_k_eigs(&a, 5).unwrap();
        let lambda = Matrix::from_diagonal(&nalgebra::DVector::from_vec(eig.values.clone()));
        let resid = (a.as_matrix() * &eig.vectors - &eig.vectors * lambda).norm();
        assert!(resid < 1e-10, "residual {resid}");
        assert!(orthonormality_defect(&eig.vectors) < 1e-10);
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn sign_canonicalization_prefers_lowest_index_on_ties() {
        let mut m = Matrix::from_column_slice(2, 1, &[-0.5, 0.5]);
        canonicalize_signs(&mut m);
        assert_eq!(m[(0, 0)], 0.5);
        let mut m = Matrix::from_column_slice(3, 1, &[0.1, -0.9, 0.2]);
        canonicalize_signs(&mut m);
        assert_eq!(m[(1, 0)], 0.9);
    }

    #[test]
    fn symmetric_part_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_matrix(&mut rng, 4, 4);
        let s = SymMatrix::symmetric_part(&m).unwrap();
        assert_eq!(s.as_matrix(), &s.as_matrix().transpose());
        assert!(SymMatrix::symmetric_part(&Matrix::zeros(2, 3)).is_err());
    }
}
