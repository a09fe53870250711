//! Frame-major feature matrices shared by the encoders, prosody and fusion.

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor};

/// `rows x cols` real matrix, row-major; one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!("{rows}x{cols} matrix from {} values", data.len())));
        }
        Ok(FeatureMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        FeatureMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(FeatureMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Constant `[rows, cols]` tensor.
    pub fn to_tensor<'g>(&self, graph: &'g Graph) -> Result<Tensor<'g>> {
        graph.constant(self.data.clone(), &[self.rows, self.cols])
    }

    /// Reads back a rank-2 tensor.
    pub fn from_tensor(t: &Tensor<'_>) -> Result<Self> {
        match t.shape().as_slice() {
            &[r, c] => Ok(FeatureMatrix {
                rows: r,
                cols: c,
                data: t.value(),
            }),
            s => Err(Error::Shape(format!("expected a rank-2 tensor, got {s:?}"))),
        }
    }
}
