use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Length {
                what: "tensor data",
                left: data.len(),
                right: rows * cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a tensor from nested rows. Panics on ragged input; intended for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn column_vector(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a 1x1 tensor.
    pub fn item(&self) -> Option<f64> {
        (self.shape() == (1, 1)).then(|| self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other, op)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub(crate) fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for (p, &a) in self.data[i * k..(i + 1) * k].iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            rows: n,
            cols: m,
            data: out,
        })
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::Shape {
                op: "t_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (k, n, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for p in 0..k {
            let a_row = &self.data[p * n..(p + 1) * n];
            let b_row = &other.data[p * m..(p + 1) * m];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out[i * m..(i + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            rows: n,
            cols: m,
            data: out,
        })
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::Shape {
                op: "matmul_t",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (n, m) = (self.rows, other.rows);
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let a = self.row(i);
            for j in 0..m {
                out.push(a.iter().zip(other.row(j)).map(|(x, y)| x * y).sum());
            }
        }
        Ok(Self {
            rows: n,
            cols: m,
            data: out,
        })
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Numerically stable softmax over each row.
    pub fn rowwise_softmax(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows {
            softmax_in_place(out.row_mut(r));
        }
        out
    }

    /// Per-column maximum and the row index attaining it (lowest index on ties).
    pub fn colwise_max(&self) -> Result<(Self, Vec<usize>)> {
        if self.rows == 0 {
            return Err(Error::EmptyBag("colwise_max"));
        }
        let mut max = self.row(0).to_vec();
        let mut arg = vec![0usize; self.cols];
        for r in 1..self.rows {
            for (c, &v) in self.row(r).iter().enumerate() {
                if v > max[c] {
                    max[c] = v;
                    arg[c] = r;
                }
            }
        }
        Ok((Self::row_vector(&max), arg))
    }

    pub fn colwise_sum(&self) -> Self {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        Self::row_vector(&out)
    }

    pub fn colwise_mean(&self) -> Result<Self> {
        if self.rows == 0 {
            return Err(Error::EmptyBag("colwise_mean"));
        }
        let n = self.rows as f64;
        Ok(self.colwise_sum().map(|v| v / n))
    }

    pub fn slice_cols(&self, start: usize, width: usize) -> Result<Self> {
        if start + width > self.cols {
            return Err(Error::Shape {
                op: "slice_cols",
                left: self.shape(),
                right: (self.rows, start + width),
            });
        }
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + width]);
        }
        Ok(Self {
            rows: self.rows,
            cols: width,
            data,
        })
    }

    pub fn concat_cols(parts: &[&Self]) -> Result<Self> {
        let rows = parts.first().map_or(0, |p| p.rows);
        for p in parts {
            if p.rows != rows {
                return Err(Error::Shape {
                    op: "concat_cols",
                    left: (rows, parts[0].cols),
                    right: p.shape(),
                });
            }
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(Self { rows, cols, data })
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let m = Tensor2::from_rows(&[&[1.0, -2.0], &[0.5, 3.0], &[4.0, 0.0]]);
        assert_eq!(Tensor2::identity(3).matmul(&m).unwrap(), m);
    }

    #[test]
    fn small_matmul() {
        let a = Tensor2::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Tensor2::from_rows(&[&[1.0], &[1.0]]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor2::zeros(2, 3);
        let b = Tensor2::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)"), "{err}");
        assert!(matches!(
            a.matmul(&b),
            Err(Error::Shape { left: (2, 3), right: (2, 3), .. })
        ));
    }

    #[test]
    fn transposed_products_agree() {
        let a = Tensor2::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let b = Tensor2::from_rows(&[&[1.0, 0.0], &[2.0, 1.0]]);
        assert_eq!(a.t_matmul(&b).unwrap(), a.transpose().matmul(&b).unwrap());
        let c = Tensor2::from_rows(&[&[1.0, 0.0, 2.0]]);
        assert_eq!(a.matmul_t(&c).unwrap(), a.matmul(&c.transpose()).unwrap());
    }

    #[test]
    fn softmax_cases() {
        let z = Tensor2::zeros(1, 4).rowwise_softmax();
        assert_eq!(z.data(), &[0.25; 4]);

        let big = Tensor2::row_vector(&[1000.0, 0.0]).rowwise_softmax();
        assert_eq!(big.data()[0], 1.0);
        assert!(big.data()[1] >= 0.0 && big.data()[1] < 1e-300);
        assert!(big.is_finite());

        let s = Tensor2::row_vector(&[1.0, 2.0, 3.0]).rowwise_softmax();
        let denom: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (i, v) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((s.data()[i] - v.exp() / denom).abs() < 1e-12);
        }
    }

    #[test]
    fn colwise_max_cases() {
        let x = Tensor2::from_rows(&[&[1.0, 5.0], &[3.0, 2.0]]);
        let (m, arg) = x.colwise_max().unwrap();
        assert_eq!(m.data(), &[3.0, 5.0]);
        assert_eq!(arg, vec![1, 0]);

        let single = Tensor2::row_vector(&[4.0, -1.0, 2.0]);
        let (m, arg) = single.colwise_max().unwrap();
        assert_eq!(m, single);
        assert_eq!(arg, vec![0, 0, 0]);

        let tie = Tensor2::column_vector(&[2.0, 2.0]);
        assert_eq!(tie.colwise_max().unwrap().1, vec![0]);

        assert!(matches!(Tensor2::zeros(0, 3).colwise_max(), Err(Error::EmptyBag(_))));
    }

    #[test]
    fn colwise_mean_cases() {
        let x = Tensor2::from_rows(&[&[1.0, 3.0], &[3.0, 5.0]]);
        assert_eq!(x.colwise_mean().unwrap().data(), &[2.0, 4.0]);
        let single = Tensor2::row_vector(&[7.0, 8.0]);
        assert_eq!(single.colwise_mean().unwrap(), single);
        assert!(Tensor2::zeros(0, 2).colwise_mean().is_err());
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor2::from_vec(2, 2, vec![1.0; 3]).is_err());
    }
}
