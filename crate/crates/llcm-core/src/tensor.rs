//! Dense row-major `f64` tensors.
//!
//! Rank 1 and rank 2 are the only shapes the rest of the crate needs; the
//! shape vector is kept general so batch carriers stay uniform. Every public
//! operation validates shapes and rejects non-finite results.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};

/// Dense tensor of 64-bit floats, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `data` fills `shape` exactly and is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(CoreError::shape(format!(
                "tensor data length {} does not fill shape {:?}",
                data.len(),
                shape
            )));
        }
        let t = Tensor { shape, data };
        t.ensure_finite("tensor construction")?;
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Result<Self> {
        let n = shape.iter().product();
        Tensor::new(shape, vec![value; n])
    }

    /// Rank-0-like scalar carrier (shape `[1]`).
    pub fn scalar(value: f64) -> Result<Self> {
        Tensor::new(vec![1], vec![value])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(CoreError::shape(format!(
                    "row {i} has length {} but row 0 has length {d}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![n, d], data)
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

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(CoreError::shape(format!(
                "expected scalar, got shape {:?}",
                self.shape
            )))
        }
    }

    /// Number of rows when interpreted as a matrix (`[n]` counts as one row).
    pub fn n_rows(&self) -> usize {
        match self.shape.as_slice() {
            [n, _] => *n,
            _ => 1,
        }
    }

    /// Number of columns when interpreted as a matrix.
    pub fn n_cols(&self) -> usize {
        match self.shape.as_slice() {
            [_, d] => *d,
            [d] => *d,
            _ => self.data.len(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let d = self.n_cols();
        self.data[i * d + j] = v;
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(CoreError::non_finite(format!(
                    "{context}: element {i} is {v}"
                )));
            }
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &Tensor, op: &str, operand: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(CoreError::shape(format!(
                "{op}: operand `{operand}` has shape {:?}, expected {:?}",
                other.shape, self.shape
            )));
        }
        Ok(())
    }

    fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| f(*a, *b))
            .collect();
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "add", "rhs")?;
        let out = self.zip_map(other, |a, b| a + b);
        out.ensure_finite("add")?;
        Ok(out)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "sub", "rhs")?;
        let out = self.zip_map(other, |a, b| a - b);
        out.ensure_finite("sub")?;
        Ok(out)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "mul", "rhs")?;
        let out = self.zip_map(other, |a, b| a * b);
        out.ensure_finite("mul")?;
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        let data = self.data.iter().map(|a| a * c).collect();
        let out = Tensor {
            shape: self.shape.clone(),
            data,
        };
        out.ensure_finite("scale")?;
        Ok(out)
    }

    /// `a*x + b*y` elementwise.
    pub fn lincomb(a: f64, x: &Tensor, b: f64, y: &Tensor) -> Result<Tensor> {
        x.check_same_shape(y, "lincomb", "y")?;
        let data = x
            .data
            .iter()
            .zip(y.data.iter())
            .map(|(xv, yv)| a * xv + b * yv)
            .collect();
        let out = Tensor {
            shape: x.shape.clone(),
            data,
        };
        out.ensure_finite("lincomb")?;
        Ok(out)
    }

    /// Per-row `a[i]*x[i,:] + b[i]*y[i,:]` for matching `[n, d]` tensors.
    pub fn lincomb_rows(a: &[f64], x: &Tensor, b: &[f64], y: &Tensor) -> Result<Tensor> {
        x.check_same_shape(y, "lincomb_rows", "y")?;
        let n = x.n_rows();
        if a.len() != n || b.len() != n {
            return Err(CoreError::shape(format!(
                "lincomb_rows: {} coefficients for {} rows",
                a.len().min(b.len()),
                n
            )));
        }
        let d = x.n_cols();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                data.push(a[i] * x.data[i * d + j] + b[i] * y.data[i * d + j]);
            }
        }
        let out = Tensor {
            shape: x.shape.clone(),
            data,
        };
        out.ensure_finite("lincomb_rows")?;
        Ok(out)
    }

    /// Multiplies each row by its own factor.
    pub fn scale_rows(&self, factors: &[f64]) -> Result<Tensor> {
        let n = self.n_rows();
        if factors.len() != n {
            return Err(CoreError::shape(format!(
                "scale_rows: {} factors for {n} rows",
                factors.len()
            )));
        }
        let d = self.n_cols();
        let mut data = self.data.clone();
        for i in 0..n {
            for j in 0..d {
                data[i * d + j] *= factors[i];
            }
        }
        let out = Tensor {
            shape: self.shape.clone(),
            data,
        };
        out.ensure_finite("scale_rows")?;
        Ok(out)
    }

    /// Matrix product `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (n, k) = match self.shape.as_slice() {
            [n, k] => (*n, *k),
            _ => {
                return Err(CoreError::shape(format!(
                    "matmul: lhs must be rank 2, got {:?}",
                    self.shape
                )))
            }
        };
        let (k2, m) = match other.shape.as_slice() {
            [k2, m] => (*k2, *m),
            _ => {
                return Err(CoreError::shape(format!(
                    "matmul: rhs must be rank 2, got {:?}",
                    other.shape
                )))
            }
        };
        if k != k2 {
            return Err(CoreError::shape(format!(
                "matmul: inner dims {k} and {k2} differ"
            )));
        }
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * m..(p + 1) * m];
                let orow = &mut data[i * m..(i + 1) * m];
                for j in 0..m {
                    orow[j] += a * brow[j];
                }
            }
        }
        let out = Tensor {
            shape: vec![n, m],
            data,
        };
        out.ensure_finite("matmul")?;
        Ok(out)
    }

    /// Transposed matrix product `lhs^T * rhs` for `[k, n] x [k, m] -> [n, m]`.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor> {
        let (k, n) = match self.shape.as_slice() {
            [k, n] => (*k, *n),
            _ => {
                return Err(CoreError::shape(format!(
                    "matmul_tn: lhs must be rank 2, got {:?}",
                    self.shape
                )))
            }
        };
        let (k2, m) = match other.shape.as_slice() {
            [k2, m] => (*k2, *m),
            _ => {
                return Err(CoreError::shape(format!(
                    "matmul_tn: rhs must be rank 2, got {:?}",
                    other.shape
                )))
            }
        };
        if k != k2 {
            return Err(CoreError::shape(format!(
                "matmul_tn: leading dims {k} and {k2} differ"
            )));
        }
        let mut data = vec![0.0; n * m];
        for p in 0..k {
            let arow = &self.data[p * n..(p + 1) * n];
            let brow = &other.data[p * m..(p + 1) * m];
            for i in 0..n {
                let a = arow[i];
                if a == 0.0 {
                    continue;
                }
                let orow = &mut data[i * m..(i + 1) * m];
                for j in 0..m {
                    orow[j] += a * brow[j];
                }
            }
        }
        let out = Tensor {
            shape: vec![n, m],
            data,
        };
        out.ensure_finite("matmul_tn")?;
        Ok(out)
    }

    /// Matrix product with transposed rhs: `[n, k] x [m, k]^T -> [n, m]`.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        let (n, k) = match self.shape.as_slice() {
            [n, k] => (*n, *k),
            _ => {
                return Err(CoreError::shape(format!(
                    "matmul_nt: lhs must be rank 2, got {:?}",
                    self.shape
                )))
            }
        };
        let (m, k2) = match other.shape.as_slice() {
            [m, k2] => (*m, *k2),
            _ => {
                return Err(CoreError::shape(format!(
                    "matmul_nt: rhs must be rank 2, got {:?}",
                    other.shape
                )))
            }
        };
        if k != k2 {
            return Err(CoreError::shape(format!(
                "matmul_nt: trailing dims {k} and {k2} differ"
            )));
        }
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            let arow = &self.data[i * k..(i + 1) * k];
            for j in 0..m {
                let brow = &other.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for p in 0..k {
                    acc += arow[p] * brow[p];
                }
                data[i * m + j] = acc;
            }
        }
        let out = Tensor {
            shape: vec![n, m],
            data,
        };
        out.ensure_finite("matmul_nt")?;
        Ok(out)
    }

    /// Adds a `[d]` bias vector to every row of a `[n, d]` matrix.
    pub fn add_row_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let (n, d) = match self.shape.as_slice() {
            [n, d] => (*n, *d),
            _ => {
                return Err(CoreError::shape(format!(
                    "add_row_bias: lhs must be rank 2, got {:?}",
                    self.shape
                )))
            }
        };
        if bias.shape != [d] {
            return Err(CoreError::shape(format!(
                "add_row_bias: operand `bias` has shape {:?}, expected [{d}]",
                bias.shape
            )));
        }
        let mut data = self.data.clone();
        for i in 0..n {
            for j in 0..d {
                data[i * d + j] += bias.data[j];
            }
        }
        let out = Tensor {
            shape: vec![n, d],
            data,
        };
        out.ensure_finite("add_row_bias")?;
        Ok(out)
    }

    /// Sums each column of a `[n, d]` matrix into a `[d]` vector.
    pub fn col_sum(&self) -> Result<Tensor> {
        let (n, d) = match self.shape.as_slice() {
            [n, d] => (*n, *d),
            _ => {
                return Err(CoreError::shape(format!(
                    "col_sum: input must be rank 2, got {:?}",
                    self.shape
                )))
            }
        };
        let mut data = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                data[j] += self.data[i * d + j];
            }
        }
        Ok(Tensor {
            shape: vec![d],
            data,
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest absolute elementwise difference; shapes must match.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.check_same_shape(other, "max_abs_diff", "rhs")?;
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Squared Euclidean norm of the whole tensor.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(CoreError::shape(format!(
                "reshape: shape {:?} does not fit {} elements",
                shape,
                self.data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    /// Horizontal concatenation of `[n, *]` blocks.
    pub fn hconcat(blocks: &[&Tensor]) -> Result<Tensor> {
        if blocks.is_empty() {
            return Err(CoreError::shape(String::from("hconcat: no blocks")));
        }
        let n = blocks[0].n_rows();
        for (i, b) in blocks.iter().enumerate() {
            if b.n_rows() != n {
                return Err(CoreError::shape(format!(
                    "hconcat: block {i} has {} rows, expected {n}",
                    b.n_rows()
                )));
            }
        }
        let d: usize = blocks.iter().map(|b| b.n_cols()).sum();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            for b in blocks {
                data.extend_from_slice(b.row(i));
            }
        }
        Tensor::new(vec![n, d], data)
    }
}
