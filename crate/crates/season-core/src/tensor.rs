//! Minimal dense matrix support for the toy models.
//!
//! Row-major flat buffer, f64 only. Covers exactly what the encoder/decoder
//! stacks need: matmul, transpose products, row views, elementwise blends.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Row-major `rows x cols` matrix of f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("matrix must have at least one row"));
        }
        let cols = rows[0].len();
        if cols == 0 {
            return Err(Error::invalid("matrix must have at least one column"));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "flat buffer has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// self (r x k) times other (k x c).
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for (o, &b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// self (r x k) times other^T (c x k) -> (r x c).
    pub fn matmul_transposed(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_transposed shape mismatch");
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                let mut acc = 0.0;
                for (a, b) in self.row(i).iter().zip(other.row(j)) {
                    acc += a * b;
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn bitwise_eq(&self, other: &Mat) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Per-frame feature stack: one `patches x dim` matrix per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFeatures {
    pub frames: Vec<Mat>,
}

impl FrameFeatures {
    pub fn new(frames: Vec<Mat>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("feature stack needs at least one frame"));
        }
        let (k, d) = (frames[0].rows(), frames[0].cols());
        for (t, f) in frames.iter().enumerate() {
            if f.rows() != k || f.cols() != d {
                return Err(Error::shape(format!(
                    "frame {t} is {}x{}, expected {k}x{d}",
                    f.rows(),
                    f.cols()
                )));
            }
        }
        Ok(FrameFeatures { frames })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn patches(&self) -> usize {
        self.frames[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].cols()
    }

    pub fn is_finite(&self) -> bool {
        self.frames.iter().all(Mat::is_finite)
    }

    /// Elementwise mean across frames, summed in an order-invariant way so
    /// permuting the frames cannot change a single output bit.
    pub fn frame_mean(&self) -> Mat {
        let (k, d) = (self.patches(), self.dim());
        let mut out = Mat::zeros(k, d);
        let mut scratch = vec![0.0f64; self.frame_count()];
        for idx in 0..k * d {
            for (t, f) in self.frames.iter().enumerate() {
                scratch[t] = f.data()[idx];
            }
            out.data_mut()[idx] = crate::numerics::order_invariant_mean(&scratch);
        }
        out
    }

    pub fn max_abs_diff(&self, other: &FrameFeatures) -> f64 {
        assert_eq!(self.frame_count(), other.frame_count());
        self.frames
            .iter()
            .zip(&other.frames)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn bitwise_eq(&self, other: &FrameFeatures) -> bool {
        self.frame_count() == other.frame_count()
            && self
                .frames
                .iter()
                .zip(&other.frames)
                .all(|(a, b)| a.bitwise_eq(b))
    }

    /// Maximum pairwise distance (max-abs metric) between frame slices.
    pub fn max_pairwise_frame_distance(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.frame_count() {
            for j in i + 1..self.frame_count() {
                worst = worst.max(self.frames[i].max_abs_diff(&self.frames[j]));
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Mat::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Mat::from_rows(vec![vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_transposed_matches_matmul() {
        let a = Mat::from_rows(vec![vec![1.0, 2.0, 3.0], vec![0.5, -1.0, 2.0]]).unwrap();
        let b = Mat::from_rows(vec![vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]]).unwrap();
        // a * b^T via both paths
        let bt = Mat::from_rows(vec![vec![1.0, 2.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(a.matmul_transposed(&b).data(), a.matmul(&bt).data());
    }

    #[test]
    fn frame_mean_is_permutation_invariant() {
        let f0 = Mat::from_rows(vec![vec![1.0, 2.0]]).unwrap();
        let f1 = Mat::from_rows(vec![vec![0.25, -3.0]]).unwrap();
        let f2 = Mat::from_rows(vec![vec![10.0, 0.5]]).unwrap();
        let a = FrameFeatures::new(vec![f0.clone(), f1.clone(), f2.clone()]).unwrap();
        let b = FrameFeatures::new(vec![f2, f0, f1]).unwrap();
        assert!(a.frame_mean().bitwise_eq(&b.frame_mean()));
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Mat::from_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Mat::from_flat(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn mismatched_frames_rejected() {
        let a = Mat::zeros(2, 3);
        let b = Mat::zeros(2, 4);
        assert!(FrameFeatures::new(vec![a, b]).is_err());
    }
}
