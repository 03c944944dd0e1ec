//! Dense row-major tensors, seeded random streams, and the small set of
//! matrix routines the rest of the crate builds on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense tensor of 64-bit floats in row-major order.
///
/// Invariants: `shape.iter().product() == data.len()` and every entry is
/// finite. Both are enforced at construction and after the matrix
/// routines below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} expects {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        let tensor = Tensor { shape, data };
        tensor.ensure_finite("tensor construction")?;
        Ok(tensor)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Build a matrix from row vectors; all rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Dimension(format!(
                    "row {} has width {}, expected {}",
                    i,
                    row.len(),
                    width
                )));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![rows.len(), width], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Interpret as a matrix, returning (rows, cols).
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::Dimension(format!(
                "expected a 2-d tensor, got shape {:?}",
                other
            ))),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let cols = self.shape[self.shape.len() - 1];
        self.data[row * cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let cols = self.shape[self.shape.len() - 1];
        self.data[row * cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let cols = self.shape[self.shape.len() - 1];
        &self.data[row * cols..(row + 1) * cols]
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor {
            shape: vec![n, m],
            data: out,
        })
    }

    /// Matrix product `self · other` for 2-d tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner dimensions disagree: {}x{} vs {}x{}",
                m, k, k2, n
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        let result = Tensor {
            shape: vec![m, n],
            data: out,
        };
        result.ensure_finite("matmul")?;
        Ok(result)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b, "add")
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b, "sub")
    }

    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a * b, "hadamard")
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64, what: &str) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "{}: shape {:?} vs {:?}",
                what, self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Contiguous column block `[start, start+width)` of a matrix.
    pub fn slice_cols(&self, start: usize, width: usize) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        if start + width > n {
            return Err(Error::Dimension(format!(
                "column slice {}..{} out of bounds for width {}",
                start,
                start + width,
                n
            )));
        }
        let mut data = Vec::with_capacity(m * width);
        for i in 0..m {
            data.extend_from_slice(&self.data[i * n + start..i * n + start + width]);
        }
        Ok(Tensor {
            shape: vec![m, width],
            data,
        })
    }

    /// Contiguous row block `[start, start+count)` of a matrix.
    pub fn slice_rows(&self, start: usize, count: usize) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        if start + count > m {
            return Err(Error::Dimension(format!(
                "row slice {}..{} out of bounds for {} rows",
                start,
                start + count,
                m
            )));
        }
        Ok(Tensor {
            shape: vec![count, n],
            data: self.data[start * n..(start + count) * n].to_vec(),
        })
    }

    pub fn col_means(&self) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        if m == 0 {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        let mut sums = vec![0.0; n];
        for i in 0..m {
            for (s, &v) in sums.iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        for s in &mut sums {
            *s /= m as f64;
        }
        Ok(Tensor {
            shape: vec![n],
            data: sums,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("non-finite value after {}", what)))
        }
    }
}

/// Deterministic random stream keyed by `(seed, stream id)`.
///
/// Identical keys reproduce identical draw sequences on every platform;
/// distinct stream ids give independent streams without coordination.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// I.i.d. draws from N(0, 1).
    pub fn standard_normal(&mut self, shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        let data = (0..len)
            .map(|_| self.rng.sample::<f64, _>(StandardNormal))
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    /// I.i.d. draws from Uniform[low, high).
    pub fn uniform(&mut self, low: f64, high: f64, shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        let data = (0..len).map(|_| self.rng.gen_range(low..high)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn shuffled_indices(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        idx
    }
}

/// Convenience alias for the spec-level sampling operation.
pub fn sample_standard_normal(rng: &mut RngStream, shape: &[usize]) -> Tensor {
    rng.standard_normal(shape)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns the eigenvalues and the matrix whose columns are the matching
/// eigenvectors. Input must already be symmetric; callers symmetrize.
pub(crate) fn symmetric_eigen(matrix: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let (n, n2) = matrix.dims2()?;
    if n != n2 {
        return Err(Error::Dimension(format!("expected square matrix, got {}x{}", n, n2)));
    }
    let mut a = matrix.data.clone();
    let mut v = Tensor::identity(n).data;
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = (1e-14 * frob).max(f64::MIN_POSITIVE);

    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= tol {
            let eigenvalues = (0..n).map(|i| a[i * n + i]).collect();
            return Ok((
                eigenvalues,
                Tensor {
                    shape: vec![n, n],
                    data: v,
                },
            ));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[p * n + p] -= t * apq;
                a[q * n + q] += t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    a[r * n + p] = arp - s * (arq + tau * arp);
                    a[p * n + r] = a[r * n + p];
                    a[r * n + q] = arq + s * (arp - tau * arq);
                    a[q * n + r] = a[r * n + q];
                }
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = vrp - s * (vrq + tau * vrp);
                    v[r * n + q] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }
    Err(Error::Numeric(
        "symmetric eigendecomposition did not converge".into(),
    ))
}

/// Symmetric positive-semidefinite square root.
///
/// The input is symmetrized, eigen-decomposed, and negative eigenvalues
/// are clamped to zero. Eigenvalues below `-1e-6` reject the input as
/// not PSD.
#[allow(clippy::needless_range_loop)]
pub fn psd_matrix_sqrt(matrix: &Tensor) -> Result<Tensor> {
    let (n, n2) = matrix.dims2()?;
    if n != n2 {
        return Err(Error::Dimension(format!("expected square matrix, got {}x{}", n, n2)));
    }
    let max_abs = matrix.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sym_tol = 1e-8 * max_abs.max(1.0);
    let mut sym = matrix.data.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = sym[i * n + j];
            let b = sym[j * n + i];
            if (a - b).abs() > sym_tol {
                return Err(Error::Data(format!(
                    "matrix is not symmetric within tolerance at ({}, {}): {} vs {}",
                    i, j, a, b
                )));
            }
            let avg = 0.5 * (a + b);
            sym[i * n + j] = avg;
            sym[j * n + i] = avg;
        }
    }
    let sym = Tensor {
        shape: vec![n, n],
        data: sym,
    };
    let (eigenvalues, vectors) = symmetric_eigen(&sym)?;
    let min_eig = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eig < -1e-6 {
        return Err(Error::NotPsd {
            min_eigenvalue: min_eig,
        });
    }
    // s = V diag(sqrt(max(lambda, 0))) V^T
    let roots: Vec<f64> = eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let mut scaled = vectors.clone();
    for i in 0..n {
        for j in 0..n {
            let v = scaled.get(i, j) * roots[j];
            scaled.set(i, j, v);
        }
    }
    let mut result = scaled.matmul(&vectors.transpose()?)?;
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (result.get(i, j) + result.get(j, i));
            result.set(i, j, avg);
            result.set(j, i, avg);
        }
    }
    Ok(result)
}

/// Column means and the unbiased sample covariance (divisor m-1).
pub fn mean_and_cov(samples: &Tensor) -> Result<(Tensor, Tensor)> {
    let (m, d) = samples.dims2()?;
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    let mean = samples.col_means()?;
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for r in 0..m {
        for (c, (&v, &mu)) in samples.row(r).iter().zip(mean.data()).enumerate() {
            centered[c] = v - mu;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                cov[i * d + j] += ci * centered[j];
            }
        }
    }
    let denom = (m - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    let cov = Tensor {
        shape: vec![d, d],
        data: cov,
    };
    cov.ensure_finite("covariance")?;
    Ok((mean, cov))
}
