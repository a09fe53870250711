//! Prosody-queried fusion: each frame attends over the pair
//! `{h_b[t], h_w[t]}` with `h_p[t]` as the query, using scaled dot-product
//! scores and a two-way softmax. There is no mixing across time.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutput {
    pub h_f: FeatureMatrix,
    /// `T x 2`, columns `w_b`, `w_w`.
    pub weights: FeatureMatrix,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn fuse(h_b: &FeatureMatrix, h_w: &FeatureMatrix, h_p: &FeatureMatrix) -> Result<FusionOutput> {
    if h_b.shape() != h_w.shape() || h_b.shape() != h_p.shape() {
        return Err(Error::Shape(format!(
            "fusion inputs H_b {:?}, H_w {:?}, H_p {:?}",
            h_b.shape(),
            h_w.shape(),
            h_p.shape()
        )));
    }
    for (name, m) in [("H_b", h_b), ("H_w", h_w), ("H_p", h_p)] {
        if !m.is_finite() {
            return Err(Error::NonFinite(format!("fusion input {name}")));
        }
    }
    let (t, f) = h_b.shape();
    let scale = 1.0 / (f as f64).sqrt();
    let mut h_f = FeatureMatrix::zeros(t, f);
    let mut weights = FeatureMatrix::zeros(t, 2);
    for i in 0..t {
        let (b, w, q) = (h_b.row(i), h_w.row(i), h_p.row(i));
        let s_b = dot(q, b) * scale;
        let s_w = dot(q, w) * scale;
        // two-way softmax in logistic form: stable for any score gap
        let w_b = 1.0 / (1.0 + (s_w - s_b).exp());
        let w_w = 1.0 / (1.0 + (s_b - s_w).exp());
        weights.row_mut(i).copy_from_slice(&[w_b, w_w]);
        for (o, (x, y)) in h_f.row_mut(i).iter_mut().zip(b.iter().zip(w)) {
            *o = w_b * x + w_w * y;
        }
    }
    Ok(FusionOutput { h_f, weights })
}

/// Differentiable fusion of three `[T, F]` tensors; returns `(h_f, weights)`.
pub fn fuse_tensor<'g>(h_b: Tensor<'g>, h_w: Tensor<'g>, h_p: Tensor<'g>) -> Result<(Tensor<'g>, Tensor<'g>)> {
    let shape = h_b.shape();
    if shape.len() != 2 || h_w.shape() != shape || h_p.shape() != shape {
        return Err(Error::Shape(format!(
            "fusion inputs {:?}, {:?}, {:?}",
            shape,
            h_w.shape(),
            h_p.shape()
        )));
    }
    let scale = 1.0 / (shape[1] as f64).sqrt();
    let s_b = h_p.mul(h_b)?.sum_last()?.scale(scale);
    let s_w = h_p.mul(h_w)?.sum_last()?.scale(scale);
    let t = shape[0];
    let scores = Tensor::concat_last(&[s_b.reshape(&[t, 1])?, s_w.reshape(&[t, 1])?])?;
    let weights = scores.softmax()?;
    let h_f = h_b
        .scale_rows(weights.slice_last(0, 1)?)?
        .add(h_w.scale_rows(weights.slice_last(1, 2)?)?)?;
    Ok((h_f, weights))
}

/// `(frame, w_b)` per frame.
pub fn weight_trajectory(out: &FusionOutput) -> Vec<(usize, f64)> {
    out.weights.iter_rows().enumerate().map(|(t, r)| (t, r[0])).collect()
}

/// Trajectory CSV with header `frame,w_b`.
pub fn trajectory_csv(out: &FusionOutput) -> String {
    let mut s = String::from("frame,w_b\n");
    for (t, w) in weight_trajectory(out) {
        s.push_str(&format!("{t},{w}\n"));
    }
    s
}
