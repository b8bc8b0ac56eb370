//! Dense `f64` matrices and the deterministic random number source.
//!
//! `Matrix` is the single numeric carrier for the whole crate: row-major,
//! 64-bit floats, no views. Network sizes here top out around 1000x784,
//! so a plain dense layout is the right tradeoff and no sparsity or mixed
//! precision is offered.
//!
//! `Rng` wraps a counter-based generator (ChaCha, 8 rounds). For a given
//! seed the sample stream is fixed by the pinned `rand_chacha` /
//! `rand_distr` versions, so the same seed reproduces the same matrices
//! bit-for-bit on every run of the same build.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
///
/// Invariants: `data.len() == rows * cols` always, and both dimensions are
/// at least 1. Values are immutable once a matrix has been returned from an
/// operation; all operations produce new matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data. Errors if the length does not
    /// match `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Dimension {
                op: "from_vec",
                msg: format!("{}x{} needs {} entries, got {}", rows, cols, rows * cols, data.len()),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Convenience constructor from nested rows; panics on ragged input.
    /// Intended for literals in tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Matrix {
        assert!(!rows.is_empty() && !rows[0].is_empty());
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn identity(n: usize) -> Matrix {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Elementwise map into a new matrix.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|v| c * v)
    }

    /// Standard matrix product. The inner kernel is delegated to a packed
    /// SIMD gemm; `tests` pin it against a naive triple-loop oracle.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(self.shape_err("matmul", other));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                other.cols,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                other.data.as_ptr(),
                other.cols as isize,
                1,
                0.0,
                out.data.as_mut_ptr(),
                other.cols as isize,
                1,
            );
        }
        Ok(out)
    }

    /// `self^T * other` without materializing the transpose.
    pub(crate) fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(self.shape_err("matmul_tn", other));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        unsafe {
            matrixmultiply::dgemm(
                self.cols,
                self.rows,
                other.cols,
                1.0,
                self.data.as_ptr(),
                1,
                self.cols as isize,
                other.data.as_ptr(),
                other.cols as isize,
                1,
                0.0,
                out.data.as_mut_ptr(),
                other.cols as isize,
                1,
            );
        }
        Ok(out)
    }

    /// `self * other^T` without materializing the transpose.
    pub(crate) fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(self.shape_err("matmul_nt", other));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                other.rows,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                other.data.as_ptr(),
                1,
                other.cols as isize,
                0.0,
                out.data.as_mut_ptr(),
                other.rows as isize,
                1,
            );
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(self.shape_err("hadamard", other));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    /// Max over entries of the absolute value; 0 for an all-zero matrix.
    pub fn inf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|&v| v * v).sum::<f64>().sqrt()
    }

    /// Flattened inner product; the flattening order is irrelevant for the
    /// sum, so column- and row-stacking agree by construction.
    pub fn dot(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(self.shape_err("dot", other));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    fn shape_err(&self, op: &'static str, other: &Matrix) -> Error {
        Error::Shape {
            op,
            lhs_rows: self.rows,
            lhs_cols: self.cols,
            rhs_rows: other.rows,
            rhs_cols: other.cols,
        }
    }
}

/// Returns `alpha * x + y`.
pub fn axpy(alpha: f64, x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.shape() != y.shape() {
        return Err(Error::Shape {
            op: "axpy",
            lhs_rows: x.rows,
            lhs_cols: x.cols,
            rhs_rows: y.rows,
            rhs_cols: y.cols,
        });
    }
    Ok(Matrix {
        rows: x.rows,
        cols: x.cols,
        data: x
            .data
            .iter()
            .zip(&y.data)
            .map(|(xv, yv)| alpha * xv + yv)
            .collect(),
    })
}

/// Deterministic seeded random source. One instance per logical stream;
/// never shared between streams (single-owner).
///
/// The generator is ChaCha with 8 rounds, a counter-based stream cipher.
/// Seeding goes through `seed_from_u64`, so a 64-bit seed pins the entire
/// stream.
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn from_seed(seed: u64) -> Rng {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Stream for a named component of a run. All randomness funnels
    /// through one master seed; per-component streams are derived by
    /// fixed labeled hashing (see [`derive_seed`]) so that adding or
    /// removing one consumer never shifts the draws of another.
    pub fn derived(master_seed: u64, label: &str) -> Rng {
        Rng::from_seed(derive_seed(master_seed, label))
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
}

/// Maps `(seed, label)` to a derived 64-bit seed: FNV-1a over the label
/// bytes, xor-folded into the seed, finalized by two SplitMix64 rounds.
/// The constants are fixed; this mapping is part of the reproducibility
/// contract.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    let mut z = seed ^ h;
    for _ in 0..2 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

/// Matrix with i.i.d. standard normal entries, drawn row-major.
pub fn sample_normal(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data.iter_mut() {
        *v = StandardNormal.sample(&mut rng.0);
    }
    m
}

/// Matrix with i.i.d. entries from {-1, +1}, each with probability 1/2.
pub fn sample_rademacher(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data.iter_mut() {
        *v = if rng.next_u32() & 1 == 1 { 1.0 } else { -1.0 };
    }
    m
}
