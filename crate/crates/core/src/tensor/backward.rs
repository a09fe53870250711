//! Reverse sweep.

use super::ops::conv_weight_kio;
use super::stft::stft_backward;
use super::{Node, Op, Tensor};
use crate::error::{shape_err, Result};

type Grads = Vec<Option<Vec<f64>>>;

/// Adds into the gradient slot of `id`, allocating it on first touch.
fn acc(nodes: &[Node], grads: &mut Grads, id: usize, f: impl FnOnce(&mut [f64])) {
    if !nodes[id].requires_grad {
        return;
    }
    let slot = grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()]);
    f(slot);
}

/// Gradient for an operand of an elementwise op that may have been
/// broadcast from a single element.
fn acc_broadcast(nodes: &[Node], grads: &mut Grads, id: usize, per_elem: impl Fn(usize) -> f64, n: usize) {
    let broadcast = nodes[id].value.len() == 1 && n > 1;
    acc(nodes, grads, id, |s| {
        if broadcast {
            s[0] += (0..n).map(&per_elem).sum::<f64>();
        } else {
            for (i, v) in s.iter_mut().enumerate() {
                *v += per_elem(i);
            }
        }
    });
}

fn at(v: &[f64], i: usize) -> f64 {
    if v.len() == 1 {
        v[0]
    } else {
        v[i]
    }
}

fn propagate(nodes: &[Node], id: usize, g: &[f64], grads: &mut Grads) {
    let node = &nodes[id];
    let out = &node.value;
    let n = g.len();
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            acc_broadcast(nodes, grads, *a, |i| g[i], n);
            acc_broadcast(nodes, grads, *b, |i| g[i], n);
        }
        Op::Sub(a, b) => {
            acc_broadcast(nodes, grads, *a, |i| g[i], n);
            acc_broadcast(nodes, grads, *b, |i| -g[i], n);
        }
        Op::Mul(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            acc_broadcast(nodes, grads, *a, |i| g[i] * at(bv, i), n);
            acc_broadcast(nodes, grads, *b, |i| g[i] * at(av, i), n);
        }
        Op::Div(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            acc_broadcast(nodes, grads, *a, |i| g[i] / at(bv, i), n);
            acc_broadcast(nodes, grads, *b, |i| -g[i] * at(av, i) / at(bv, i).powi(2), n);
        }
        Op::Scale(x, c) => acc(nodes, grads, *x, |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += c * g)),
        Op::AddScalar(x) | Op::Reshape(x) => {
            acc(nodes, grads, *x, |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += g))
        }
        Op::Neg(x) => acc(nodes, grads, *x, |s| s.iter_mut().zip(g).for_each(|(s, g)| *s -= g)),
        Op::MatMul { a, b, m, k, n: nc } => {
            let (m, k, nc) = (*m, *k, *nc);
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            acc(nodes, grads, *a, |s| {
                for i in 0..m {
                    for p in 0..k {
                        let mut t = 0.0;
                        for j in 0..nc {
                            t += g[i * nc + j] * bv[p * nc + j];
                        }
                        s[i * k + p] += t;
                    }
                }
            });
            acc(nodes, grads, *b, |s| {
                for i in 0..m {
                    for p in 0..k {
                        let aip = av[i * k + p];
                        for j in 0..nc {
                            s[p * nc + j] += aip * g[i * nc + j];
                        }
                    }
                }
            });
        }
        Op::Conv1d { x, w, b, geom } => {
            let ge = *geom;
            let xv = &nodes[*x].value;
            let wt = conv_weight_kio(&nodes[*w].value, ge.c_out, ge.c_in, ge.k);
            let (ci_n, co_n) = (ge.c_in, ge.c_out);
            let need_x = nodes[*x].requires_grad;
            let need_w = nodes[*w].requires_grad;
            let mut dx = vec![0.0; if need_x { xv.len() } else { 0 }];
            let mut dwt = vec![0.0; if need_w { wt.len() } else { 0 }];
            for bi in 0..ge.batch {
                for o in 0..ge.len_out {
                    let grow = &g[(bi * ge.len_out + o) * co_n..(bi * ge.len_out + o + 1) * co_n];
                    for kk in 0..ge.k {
                        let pos = (o * ge.stride + kk) as isize - ge.offset as isize;
                        if pos < 0 || pos as usize >= ge.len_in {
                            continue;
                        }
                        let xbase = (bi * ge.len_in + pos as usize) * ci_n;
                        for ci in 0..ci_n {
                            let wrow = (kk * ci_n + ci) * co_n;
                            if need_x {
                                let mut t = 0.0;
                                for co in 0..co_n {
                                    t += grow[co] * wt[wrow + co];
                                }
                                dx[xbase + ci] += t;
                            }
                            if need_w {
                                let xval = xv[xbase + ci];
                                if xval != 0.0 {
                                    for co in 0..co_n {
                                        dwt[wrow + co] += xval * grow[co];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if need_x {
                acc(nodes, grads, *x, |s| s.iter_mut().zip(&dx).for_each(|(s, d)| *s += d));
            }
            if need_w {
                acc(nodes, grads, *w, |s| {
                    for co in 0..co_n {
                        for ci in 0..ci_n {
                            for kk in 0..ge.k {
                                s[(co * ci_n + ci) * ge.k + kk] += dwt[(kk * ci_n + ci) * co_n + co];
                            }
                        }
                    }
                });
            }
            if let Some(b) = b {
                acc(nodes, grads, *b, |s| {
                    for row in g.chunks_exact(co_n) {
                        s.iter_mut().zip(row).for_each(|(s, g)| *s += g);
                    }
                });
            }
        }
        Op::ConvTranspose1d { x, w, b, geom } => {
            let ge = *geom;
            let xv = &nodes[*x].value;
            let wv = &nodes[*w].value;
            let (ci_n, co_n, k) = (ge.c_in, ge.c_out, ge.k);
            let need_x = nodes[*x].requires_grad;
            let need_w = nodes[*w].requires_grad;
            let mut dx = vec![0.0; if need_x { xv.len() } else { 0 }];
            let mut dw = vec![0.0; if need_w { wv.len() } else { 0 }];
            for bi in 0..ge.batch {
                for i in 0..ge.len_in {
                    let xbase = (bi * ge.len_in + i) * ci_n;
                    for kk in 0..k {
                        let pos = (i * ge.stride + kk) as isize - ge.offset as isize;
                        if pos < 0 || pos as usize >= ge.len_out {
                            continue;
                        }
                        let grow = &g[(bi * ge.len_out + pos as usize) * co_n..][..co_n];
                        for ci in 0..ci_n {
                            let xval = xv[xbase + ci];
                            let mut t = 0.0;
                            for (co, &gv) in grow.iter().enumerate() {
                                let widx = (ci * co_n + co) * k + kk;
                                t += gv * wv[widx];
                                if need_w {
                                    dw[widx] += xval * gv;
                                }
                            }
                            if need_x {
                                dx[xbase + ci] += t;
                            }
                        }
                    }
                }
            }
            if need_x {
                acc(nodes, grads, *x, |s| s.iter_mut().zip(&dx).for_each(|(s, d)| *s += d));
            }
            if need_w {
                acc(nodes, grads, *w, |s| s.iter_mut().zip(&dw).for_each(|(s, d)| *s += d));
            }
            if let Some(b) = b {
                acc(nodes, grads, *b, |s| {
                    for row in g.chunks_exact(co_n) {
                        s.iter_mut().zip(row).for_each(|(s, g)| *s += g);
                    }
                });
            }
        }
        Op::Relu(x) => {
            let xv = &nodes[*x].value;
            acc(nodes, grads, *x, |s| {
                for i in 0..n {
                    if xv[i] > 0.0 {
                        s[i] += g[i];
                    }
                }
            })
        }
        Op::LeakyRelu(x, slope) => {
            let xv = &nodes[*x].value;
            acc(nodes, grads, *x, |s| {
                for i in 0..n {
                    s[i] += if xv[i] > 0.0 { g[i] } else { slope * g[i] };
                }
            })
        }
        Op::Tanh(x) => acc(nodes, grads, *x, |s| {
            for i in 0..n {
                s[i] += g[i] * (1.0 - out[i] * out[i]);
            }
        }),
        Op::Softmax(x) => {
            let c = *node.shape.last().unwrap();
            acc(nodes, grads, *x, |s| {
                for r in 0..n / c {
                    let (y, gr) = (&out[r * c..(r + 1) * c], &g[r * c..(r + 1) * c]);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        s[r * c + j] += y[j] * (gr[j] - dot);
                    }
                }
            })
        }
        Op::LayerNorm { x, inv_std } => {
            let c = *node.shape.last().unwrap();
            acc(nodes, grads, *x, |s| {
                for (r, is) in inv_std.iter().enumerate() {
                    let (y, gr) = (&out[r * c..(r + 1) * c], &g[r * c..(r + 1) * c]);
                    let mg = gr.iter().sum::<f64>() / c as f64;
                    let mgy = gr.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    for j in 0..c {
                        s[r * c + j] += is * (gr[j] - mg - y[j] * mgy);
                    }
                }
            })
        }
        Op::MulChannels(x, p) => {
            let c = *node.shape.last().unwrap();
            let (xv, pv) = (&nodes[*x].value, &nodes[*p].value);
            acc(nodes, grads, *x, |s| {
                for i in 0..n {
                    s[i] += g[i] * pv[i % c];
                }
            });
            acc(nodes, grads, *p, |s| {
                for i in 0..n {
                    s[i % c] += g[i] * xv[i];
                }
            });
        }
        Op::AddChannels(x, p) => {
            let c = *node.shape.last().unwrap();
            acc(nodes, grads, *x, |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += g));
            acc(nodes, grads, *p, |s| {
                for i in 0..n {
                    s[i % c] += g[i];
                }
            });
        }
        Op::ScaleRows(x, sc) => {
            let f = node.shape[1];
            let (xv, sv) = (&nodes[*x].value, &nodes[*sc].value);
            acc(nodes, grads, *x, |s| {
                for i in 0..n {
                    s[i] += g[i] * sv[i / f];
                }
            });
            acc(nodes, grads, *sc, |s| {
                for i in 0..n {
                    s[i / f] += g[i] * xv[i];
                }
            });
        }
        Op::Sum(x) => acc(nodes, grads, *x, |s| s.iter_mut().for_each(|s| *s += g[0])),
        Op::Mean(x) => {
            let m = nodes[*x].value.len() as f64;
            acc(nodes, grads, *x, |s| s.iter_mut().for_each(|s| *s += g[0] / m))
        }
        Op::SumLast(x) => {
            let c = *nodes[*x].shape.last().unwrap();
            acc(nodes, grads, *x, |s| {
                for (i, v) in s.iter_mut().enumerate() {
                    *v += g[i / c];
                }
            })
        }
        Op::Abs(x) => {
            let xv = &nodes[*x].value;
            acc(nodes, grads, *x, |s| {
                for i in 0..n {
                    let sign = if xv[i] > 0.0 {
                        1.0
                    } else if xv[i] < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    s[i] += g[i] * sign;
                }
            })
        }
        Op::Square(x) => {
            let xv = &nodes[*x].value;
            acc(nodes, grads, *x, |s| {
                for i in 0..n {
                    s[i] += 2.0 * xv[i] * g[i];
                }
            })
        }
        Op::Sqrt(x) => acc(nodes, grads, *x, |s| {
            for i in 0..n {
                if out[i] > 0.0 {
                    s[i] += g[i] / (2.0 * out[i]);
                }
            }
        }),
        Op::Log(x) => {
            let xv = &nodes[*x].value;
            acc(nodes, grads, *x, |s| {
                for i in 0..n {
                    s[i] += g[i] / xv[i];
                }
            })
        }
        Op::Exp(x) => acc(nodes, grads, *x, |s| {
            for i in 0..n {
                s[i] += g[i] * out[i];
            }
        }),
        Op::Transpose { x, batch, rows, cols } => {
            let (rows, cols) = (*rows, *cols);
            acc(nodes, grads, *x, |s| {
                for b in 0..*batch {
                    let base = b * rows * cols;
                    for r in 0..rows {
                        for c in 0..cols {
                            s[base + r * cols + c] += g[base + c * rows + r];
                        }
                    }
                }
            })
        }
        Op::ConcatLast(ids) => {
            let total = *node.shape.last().unwrap();
            let rows = n / total;
            let mut off = 0;
            for &pid in ids {
                let w = *nodes[pid].shape.last().unwrap();
                acc(nodes, grads, pid, |s| {
                    for r in 0..rows {
                        for j in 0..w {
                            s[r * w + j] += g[r * total + off + j];
                        }
                    }
                });
                off += w;
            }
        }
        Op::SliceLast { x, start } => {
            let w = *node.shape.last().unwrap();
            let c = *nodes[*x].shape.last().unwrap();
            acc(nodes, grads, *x, |s| {
                for r in 0..n / w {
                    for j in 0..w {
                        s[r * c + start + j] += g[r * w + j];
                    }
                }
            })
        }
        Op::PadRows { x, before } => {
            let xs = &nodes[*x].shape;
            let (rows, cols) = (xs[xs.len() - 2], xs[xs.len() - 1]);
            let new_rows = node.shape[node.shape.len() - 2];
            let batch = nodes[*x].value.len() / (rows * cols).max(1);
            acc(nodes, grads, *x, |s| {
                for b in 0..batch {
                    let src = (b * new_rows + before) * cols;
                    for i in 0..rows * cols {
                        s[b * rows * cols + i] += g[src + i];
                    }
                }
            })
        }
        Op::SliceRows { x, start } => {
            let xs = &nodes[*x].shape;
            let (rows, cols) = (xs[xs.len() - 2], xs[xs.len() - 1]);
            let kept = node.shape[node.shape.len() - 2];
            let batch = n / (kept * cols).max(1);
            acc(nodes, grads, *x, |s| {
                for b in 0..batch {
                    for i in 0..kept * cols {
                        s[(b * rows + start) * cols + i] += g[b * kept * cols + i];
                    }
                }
            })
        }
        Op::AvgPoolRows { x, k } => {
            let xs = &nodes[*x].shape;
            let (rows, cols) = (xs[xs.len() - 2], xs[xs.len() - 1]);
            let pooled = node.shape[node.shape.len() - 2];
            let batch = n / (pooled * cols).max(1);
            acc(nodes, grads, *x, |s| {
                for b in 0..batch {
                    for o in 0..pooled {
                        for j in 0..*k {
                            for c in 0..cols {
                                s[(b * rows + o * k + j) * cols + c] += g[(b * pooled + o) * cols + c] / *k as f64;
                            }
                        }
                    }
                }
            })
        }
        Op::Stft { x, res, spectra } => {
            let len = nodes[*x].value.len();
            let dx = stft_backward(g, spectra, len, *res);
            acc(nodes, grads, *x, |s| s.iter_mut().zip(&dx).for_each(|(s, d)| *s += d));
        }
    }
}

impl Tensor<'_> {
    /// Back-propagates from this one-element tensor. Gradients of every
    /// reachable differentiable node are replaced (not accumulated across
    /// calls); fan-out within the graph accumulates additively.
    pub fn backward(&self) -> Result<()> {
        let mut nodes = self.graph.nodes.borrow_mut();
        if nodes[self.id].value.len() != 1 {
            return shape_err(format!("backward from non-scalar {:?}", nodes[self.id].shape));
        }
        for node in nodes.iter_mut() {
            node.grad = None;
        }
        let mut grads: Grads = vec![None; self.id + 1];
        grads[self.id] = Some(vec![1.0]);
        let mut done: Grads = vec![None; self.id + 1];
        for id in (0..=self.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !nodes[id].requires_grad {
                continue;
            }
            propagate(&nodes, id, &g, &mut grads);
            done[id] = Some(g);
        }
        for (node, g) in nodes.iter_mut().zip(done) {
            node.grad = g;
        }
        Ok(())
    }
}
