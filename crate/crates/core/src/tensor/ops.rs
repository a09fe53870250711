//! Forward rules. Every op validates shapes, computes its value and records
//! what the backward sweep needs.

use super::stft::{stft_forward, StftResolution};
use super::{numel, ConvGeom, Op, Tensor};
use crate::error::{shape_err, Result};

/// Splits a time-major shape into `(batch, rows, cols)`.
fn seq_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [l, c] => Ok((1, l, c)),
        [b, l, c] => Ok((b, l, c)),
        _ => shape_err(format!("expected [L, C] or [B, L, C], got {shape:?}")),
    }
}

fn seq_shape(template: &[usize], batch: usize, rows: usize, cols: usize) -> Vec<usize> {
    if template.len() == 2 {
        vec![rows, cols]
    } else {
        vec![batch, rows, cols]
    }
}

impl<'g> Tensor<'g> {
    fn unary(&self, f: impl Fn(f64) -> f64, op: Op) -> Tensor<'g> {
        let (v, s) = self.with_value(|v| (v.iter().map(|&x| f(x)).collect(), self.shape()));
        let rg = self.requires_grad();
        self.graph.push(v, s, op, rg)
    }

    fn binary(&self, other: Tensor<'g>, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Tensor<'g>> {
        let (sa, sb) = (self.shape(), other.shape());
        let (na, nb) = (numel(&sa), numel(&sb));
        let shape = if sa == sb || nb == 1 {
            sa
        } else if na == 1 {
            sb
        } else {
            return shape_err(format!("elementwise op on {sa:?} and {sb:?}"));
        };
        let a = self.value();
        let b = other.value();
        let n = numel(&shape);
        let v = (0..n)
            .map(|i| f(a[if na == 1 { 0 } else { i }], b[if nb == 1 { 0 } else { i }]))
            .collect();
        let rg = self.graph.requires(&[self.id, other.id]);
        Ok(self.graph.push(v, shape, op, rg))
    }

    pub fn add(&self, o: Tensor<'g>) -> Result<Tensor<'g>> {
        self.binary(o, |a, b| a + b, Op::Add(self.id, o.id))
    }

    pub fn sub(&self, o: Tensor<'g>) -> Result<Tensor<'g>> {
        self.binary(o, |a, b| a - b, Op::Sub(self.id, o.id))
    }

    pub fn mul(&self, o: Tensor<'g>) -> Result<Tensor<'g>> {
        self.binary(o, |a, b| a * b, Op::Mul(self.id, o.id))
    }

    pub fn div(&self, o: Tensor<'g>) -> Result<Tensor<'g>> {
        self.binary(o, |a, b| a / b, Op::Div(self.id, o.id))
    }

    pub fn scale(&self, c: f64) -> Tensor<'g> {
        self.unary(|x| c * x, Op::Scale(self.id, c))
    }

    pub fn add_scalar(&self, c: f64) -> Tensor<'g> {
        self.unary(|x| x + c, Op::AddScalar(self.id))
    }

    pub fn neg(&self) -> Tensor<'g> {
        self.unary(|x| -x, Op::Neg(self.id))
    }

    pub fn relu(&self) -> Tensor<'g> {
        self.unary(|x| x.max(0.0), Op::Relu(self.id))
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor<'g> {
        self.unary(|x| if x > 0.0 { x } else { slope * x }, Op::LeakyRelu(self.id, slope))
    }

    pub fn tanh(&self) -> Tensor<'g> {
        self.unary(f64::tanh, Op::Tanh(self.id))
    }

    pub fn abs(&self) -> Tensor<'g> {
        self.unary(f64::abs, Op::Abs(self.id))
    }

    pub fn square(&self) -> Tensor<'g> {
        self.unary(|x| x * x, Op::Square(self.id))
    }

    pub fn sqrt(&self) -> Tensor<'g> {
        self.unary(f64::sqrt, Op::Sqrt(self.id))
    }

    pub fn log(&self) -> Tensor<'g> {
        self.unary(f64::ln, Op::Log(self.id))
    }

    pub fn exp(&self) -> Tensor<'g> {
        self.unary(f64::exp, Op::Exp(self.id))
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, o: Tensor<'g>) -> Result<Tensor<'g>> {
        let (sa, sb) = (self.shape(), o.shape());
        let (m, k, n) = match (sa.as_slice(), sb.as_slice()) {
            (&[m, k], &[k2, n]) if k == k2 => (m, k, n),
            _ => return shape_err(format!("matmul {sa:?} x {sb:?}")),
        };
        let a = self.value();
        let b = o.value();
        let mut v = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = a[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let row = &b[p * n..(p + 1) * n];
                for (out, &bv) in v[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *out += aip * bv;
                }
            }
        }
        let rg = self.graph.requires(&[self.id, o.id]);
        Ok(self.graph.push(v, vec![m, n], Op::MatMul { a: self.id, b: o.id, m, k, n }, rg))
    }

    /// Strided 1-D convolution over the time axis of `[L, C_in]` or
    /// `[B, L, C_in]` with `pad_left` / `pad_right` zeros.
    pub fn conv1d(
        &self,
        w: Tensor<'g>,
        b: Option<Tensor<'g>>,
        stride: usize,
        pad_left: usize,
        pad_right: usize,
    ) -> Result<Tensor<'g>> {
        let xs = self.shape();
        let (batch, len_in, c_in) = seq_dims(&xs)?;
        let (c_out, k) = match w.shape().as_slice() {
            &[co, ci, k] if ci == c_in && k > 0 => (co, k),
            s => return shape_err(format!("conv1d weight {s:?} for {c_in} input channels")),
        };
        if let Some(b) = b {
            if b.shape() != [c_out] {
                return shape_err(format!("conv1d bias {:?}, want [{c_out}]", b.shape()));
            }
        }
        if stride == 0 || len_in + pad_left + pad_right < k {
            return shape_err(format!("conv1d: input length {len_in} too short for kernel {k}"));
        }
        let len_out = (len_in + pad_left + pad_right - k) / stride + 1;
        let geom = ConvGeom {
            batch,
            len_in,
            len_out,
            c_in,
            c_out,
            k,
            stride,
            offset: pad_left,
        };
        let x = self.value();
        let wt = conv_weight_kio(&w.value(), c_out, c_in, k);
        let bias = b.map(|b| b.value());
        let mut out = vec![0.0; batch * len_out * c_out];
        for bi in 0..batch {
            for o in 0..len_out {
                let dst = &mut out[(bi * len_out + o) * c_out..(bi * len_out + o + 1) * c_out];
                if let Some(bias) = &bias {
                    dst.copy_from_slice(bias);
                }
                for kk in 0..k {
                    let pos = (o * stride + kk) as isize - pad_left as isize;
                    if pos < 0 || pos as usize >= len_in {
                        continue;
                    }
                    let src = &x[(bi * len_in + pos as usize) * c_in..(bi * len_in + pos as usize + 1) * c_in];
                    for (ci, &xv) in src.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        let wrow = &wt[(kk * c_in + ci) * c_out..(kk * c_in + ci + 1) * c_out];
                        for (d, &wv) in dst.iter_mut().zip(wrow) {
                            *d += xv * wv;
                        }
                    }
                }
            }
        }
        let mut ids = vec![self.id, w.id];
        if let Some(b) = b {
            ids.push(b.id);
        }
        let rg = self.graph.requires(&ids);
        Ok(self.graph.push(
            out,
            seq_shape(&xs, batch, len_out, c_out),
            Op::Conv1d {
                x: self.id,
                w: w.id,
                b: b.map(|b| b.id),
                geom,
            },
            rg,
        ))
    }

    /// Transposed convolution: every input step scatters a `K`-long kernel
    /// at `stride` spacing; the full `(L - 1) * stride + K` result is
    /// cropped by `crop_left` and truncated to `len_out`.
    pub fn conv_transpose1d(
        &self,
        w: Tensor<'g>,
        b: Option<Tensor<'g>>,
        stride: usize,
        crop_left: usize,
        len_out: usize,
    ) -> Result<Tensor<'g>> {
        let xs = self.shape();
        let (batch, len_in, c_in) = seq_dims(&xs)?;
        let (c_out, k) = match w.shape().as_slice() {
            &[ci, co, k] if ci == c_in && k > 0 => (co, k),
            s => return shape_err(format!("conv_transpose1d weight {s:?} for {c_in} input channels")),
        };
        if let Some(b) = b {
            if b.shape() != [c_out] {
                return shape_err(format!("conv_transpose1d bias {:?}, want [{c_out}]", b.shape()));
            }
        }
        let full = (len_in.max(1) - 1) * stride + k;
        if stride == 0 || crop_left + len_out > full {
            return shape_err(format!(
                "conv_transpose1d: crop {crop_left} + length {len_out} exceeds {full}"
            ));
        }
        let geom = ConvGeom {
            batch,
            len_in,
            len_out,
            c_in,
            c_out,
            k,
            stride,
            offset: crop_left,
        };
        let x = self.value();
        let wv = w.value();
        // [C_in, C_out, K] -> [K, C_in, C_out]
        let mut wt = vec![0.0; k * c_in * c_out];
        for ci in 0..c_in {
            for co in 0..c_out {
                for kk in 0..k {
                    wt[(kk * c_in + ci) * c_out + co] = wv[(ci * c_out + co) * k + kk];
                }
            }
        }
        let mut out = vec![0.0; batch * len_out * c_out];
        if let Some(b) = b {
            let bias = b.value();
            for row in out.chunks_exact_mut(c_out) {
                row.copy_from_slice(&bias);
            }
        }
        for bi in 0..batch {
            for i in 0..len_in {
                let src = &x[(bi * len_in + i) * c_in..(bi * len_in + i + 1) * c_in];
                for kk in 0..k {
                    let pos = (i * stride + kk) as isize - crop_left as isize;
                    if pos < 0 || pos as usize >= len_out {
                        continue;
                    }
                    let base = (bi * len_out + pos as usize) * c_out;
                    for (ci, &xv) in src.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        let wrow = &wt[(kk * c_in + ci) * c_out..(kk * c_in + ci + 1) * c_out];
                        for (d, &w) in out[base..base + c_out].iter_mut().zip(wrow) {
                            *d += xv * w;
                        }
                    }
                }
            }
        }
        let mut ids = vec![self.id, w.id];
        if let Some(b) = b {
            ids.push(b.id);
        }
        let rg = self.graph.requires(&ids);
        Ok(self.graph.push(
            out,
            seq_shape(&xs, batch, len_out, c_out),
            Op::ConvTranspose1d {
                x: self.id,
                w: w.id,
                b: b.map(|b| b.id),
                geom,
            },
            rg,
        ))
    }

    /// Softmax over the last axis.
    pub fn softmax(&self) -> Result<Tensor<'g>> {
        let s = self.shape();
        let c = *s.last().unwrap_or(&0);
        if c == 0 {
            return shape_err("softmax over an empty axis");
        }
        let mut v = self.value();
        for row in v.chunks_exact_mut(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for r in row.iter_mut() {
                *r = (*r - m).exp();
                z += *r;
            }
            for r in row.iter_mut() {
                *r /= z;
            }
        }
        let rg = self.requires_grad();
        Ok(self.graph.push(v, s, Op::Softmax(self.id), rg))
    }

    /// Normalizes every row over its last axis to zero mean and unit
    /// (population) variance, `eps` added to the variance. No affine part.
    pub fn layer_norm(&self, eps: f64) -> Result<Tensor<'g>> {
        let s = self.shape();
        let c = *s.last().unwrap_or(&0);
        if c == 0 {
            return shape_err("layer norm over an empty axis");
        }
        let mut v = self.value();
        let mut inv_std = Vec::with_capacity(v.len() / c);
        for row in v.chunks_exact_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            for r in row.iter_mut() {
                *r = (*r - mean) * is;
            }
            inv_std.push(is);
        }
        let rg = self.requires_grad();
        Ok(self.graph.push(v, s, Op::LayerNorm { x: self.id, inv_std }, rg))
    }

    fn channel_op(&self, p: Tensor<'g>, mul: bool) -> Result<Tensor<'g>> {
        let s = self.shape();
        let c = *s.last().unwrap_or(&0);
        if p.shape() != [c] {
            return shape_err(format!("per-channel parameter {:?} for {s:?}", p.shape()));
        }
        let pv = p.value();
        let mut v = self.value();
        for row in v.chunks_exact_mut(c) {
            for (r, q) in row.iter_mut().zip(&pv) {
                if mul {
                    *r *= q
                } else {
                    *r += q
                }
            }
        }
        let op = if mul {
            Op::MulChannels(self.id, p.id)
        } else {
            Op::AddChannels(self.id, p.id)
        };
        let rg = self.graph.requires(&[self.id, p.id]);
        Ok(self.graph.push(v, s, op, rg))
    }

    /// `x[.., c] * gamma[c]`.
    pub fn mul_channels(&self, gamma: Tensor<'g>) -> Result<Tensor<'g>> {
        self.channel_op(gamma, true)
    }

    /// `x[.., c] + beta[c]`.
    pub fn add_channels(&self, beta: Tensor<'g>) -> Result<Tensor<'g>> {
        self.channel_op(beta, false)
    }

    /// `x[t, f] * s[t]` for `x: [T, F]`, `s: [T, 1]`.
    pub fn scale_rows(&self, s: Tensor<'g>) -> Result<Tensor<'g>> {
        let xs = self.shape();
        let (t, f) = match xs.as_slice() {
            &[t, f] => (t, f),
            _ => return shape_err(format!("scale_rows on {xs:?}")),
        };
        if s.shape() != [t, 1] {
            return shape_err(format!("row scales {:?} for {xs:?}", s.shape()));
        }
        let sv = s.value();
        let mut v = self.value();
        for (row, k) in v.chunks_exact_mut(f).zip(&sv) {
            for r in row.iter_mut() {
                *r *= k;
            }
        }
        let rg = self.graph.requires(&[self.id, s.id]);
        Ok(self.graph.push(v, xs, Op::ScaleRows(self.id, s.id), rg))
    }

    pub fn sum(&self) -> Tensor<'g> {
        let v = self.with_value(|v| v.iter().sum::<f64>());
        let rg = self.requires_grad();
        self.graph.push(vec![v], vec![1], Op::Sum(self.id), rg)
    }

    pub fn mean(&self) -> Tensor<'g> {
        let v = self.with_value(|v| v.iter().sum::<f64>() / v.len().max(1) as f64);
        let rg = self.requires_grad();
        self.graph.push(vec![v], vec![1], Op::Mean(self.id), rg)
    }

    /// Sums the last axis, keeping it as a length-1 axis.
    pub fn sum_last(&self) -> Result<Tensor<'g>> {
        let mut s = self.shape();
        let c = match s.last() {
            Some(&c) if c > 0 => c,
            _ => return shape_err("sum over an empty axis"),
        };
        let v = self.with_value(|v| v.chunks_exact(c).map(|r| r.iter().sum()).collect());
        *s.last_mut().unwrap() = 1;
        let rg = self.requires_grad();
        Ok(self.graph.push(v, s, Op::SumLast(self.id), rg))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<'g>> {
        if numel(shape) != self.numel() {
            return shape_err(format!("reshape {:?} -> {shape:?}", self.shape()));
        }
        let rg = self.requires_grad();
        Ok(self.graph.push(self.value(), shape.to_vec(), Op::Reshape(self.id), rg))
    }

    /// Swaps the last two axes of a rank-2 or rank-3 tensor.
    pub fn transpose(&self) -> Result<Tensor<'g>> {
        let s = self.shape();
        let (batch, rows, cols) = seq_dims(&s)?;
        let x = self.value();
        let mut v = vec![0.0; x.len()];
        for b in 0..batch {
            let base = b * rows * cols;
            for r in 0..rows {
                for c in 0..cols {
                    v[base + c * rows + r] = x[base + r * cols + c];
                }
            }
        }
        let rg = self.requires_grad();
        Ok(self.graph.push(
            v,
            seq_shape(&s, batch, cols, rows),
            Op::Transpose {
                x: self.id,
                batch,
                rows,
                cols,
            },
            rg,
        ))
    }

    /// Concatenates along the last axis; all leading axes must agree.
    pub fn concat_last(parts: &[Tensor<'g>]) -> Result<Tensor<'g>> {
        let first = parts.first().ok_or_else(|| crate::Error::Shape("concat of nothing".into()))?;
        let s0 = first.shape();
        let lead = &s0[..s0.len() - 1];
        let mut widths = Vec::new();
        for p in parts {
            let s = p.shape();
            if s.len() != s0.len() || &s[..s.len() - 1] != lead {
                return shape_err(format!("concat {s0:?} with {s:?}"));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let rows = numel(lead);
        let values: Vec<Vec<f64>> = parts.iter().map(|p| p.value()).collect();
        let mut v = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (pv, &w) in values.iter().zip(&widths) {
                v.extend_from_slice(&pv[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = first.graph.requires(&ids);
        Ok(first.graph.push(v, shape, Op::ConcatLast(ids), rg))
    }

    /// Columns `start..end` of the last axis.
    pub fn slice_last(&self, start: usize, end: usize) -> Result<Tensor<'g>> {
        let mut s = self.shape();
        let c = *s.last().unwrap_or(&0);
        if start >= end || end > c {
            return shape_err(format!("slice {start}..{end} of last axis {c}"));
        }
        let v = self.with_value(|v| {
            v.chunks_exact(c)
                .flat_map(|r| r[start..end].iter().copied())
                .collect()
        });
        *s.last_mut().unwrap() = end - start;
        let rg = self.requires_grad();
        Ok(self.graph.push(v, s, Op::SliceLast { x: self.id, start }, rg))
    }

    /// Zero-pads the time axis (`L` of `[L, C]` / `[B, L, C]`).
    pub fn pad_rows(&self, before: usize, after: usize) -> Result<Tensor<'g>> {
        let s = self.shape();
        let (batch, rows, cols) = seq_dims(&s)?;
        let new_rows = rows + before + after;
        let x = self.value();
        let mut v = vec![0.0; batch * new_rows * cols];
        for b in 0..batch {
            let src = &x[b * rows * cols..(b + 1) * rows * cols];
            let dst = (b * new_rows + before) * cols;
            v[dst..dst + rows * cols].copy_from_slice(src);
        }
        let rg = self.requires_grad();
        Ok(self.graph.push(
            v,
            seq_shape(&s, batch, new_rows, cols),
            Op::PadRows { x: self.id, before },
            rg,
        ))
    }

    /// Time steps `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor<'g>> {
        let s = self.shape();
        let (batch, rows, cols) = seq_dims(&s)?;
        if start >= end || end > rows {
            return shape_err(format!("row slice {start}..{end} of {rows}"));
        }
        let x = self.value();
        let n = end - start;
        let mut v = Vec::with_capacity(batch * n * cols);
        for b in 0..batch {
            v.extend_from_slice(&x[(b * rows + start) * cols..(b * rows + end) * cols]);
        }
        let rg = self.requires_grad();
        Ok(self.graph.push(
            v,
            seq_shape(&s, batch, n, cols),
            Op::SliceRows { x: self.id, start },
            rg,
        ))
    }

    /// Non-overlapping average pooling of the time axis by `k`; a trailing
    /// partial window is dropped.
    pub fn avg_pool_rows(&self, k: usize) -> Result<Tensor<'g>> {
        let s = self.shape();
        let (batch, rows, cols) = seq_dims(&s)?;
        if k == 0 || rows < k {
            return shape_err(format!("pool {k} over {rows} rows"));
        }
        let n = rows / k;
        let x = self.value();
        let mut v = vec![0.0; batch * n * cols];
        for b in 0..batch {
            for o in 0..n {
                for j in 0..k {
                    let src = (b * rows + o * k + j) * cols;
                    let dst = (b * n + o) * cols;
                    for c in 0..cols {
                        v[dst + c] += x[src + c] / k as f64;
                    }
                }
            }
        }
        let rg = self.requires_grad();
        Ok(self.graph.push(v, seq_shape(&s, batch, n, cols), Op::AvgPoolRows { x: self.id, k }, rg))
    }

    /// Magnitude spectrogram `[frames, fft / 2 + 1]` of a waveform with
    /// `L` samples (any shape holding `L` values).
    pub fn stft_magnitude(&self, res: StftResolution) -> Result<Tensor<'g>> {
        res.validate()?;
        let x = self.value();
        if x.is_empty() {
            return shape_err("stft of an empty signal");
        }
        let (mags, spectra, frames) = stft_forward(&x, res);
        let rg = self.requires_grad();
        Ok(self.graph.push(
            mags,
            vec![frames, res.fft / 2 + 1],
            Op::Stft {
                x: self.id,
                res,
                spectra,
            },
            rg,
        ))
    }
}

/// `[C_out, C_in, K]` -> `[K, C_in, C_out]`.
pub(crate) fn conv_weight_kio(w: &[f64], c_out: usize, c_in: usize, k: usize) -> Vec<f64> {
    let mut wt = vec![0.0; w.len()];
    for co in 0..c_out {
        for ci in 0..c_in {
            for kk in 0..k {
                wt[(kk * c_in + ci) * c_out + co] = w[(co * c_in + ci) * k + kk];
            }
        }
    }
    wt
}
