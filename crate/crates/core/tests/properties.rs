use fusevc_core::audio::{frame_count, frame_signal, resample_by};
use fusevc_core::content::{align_bnf, BnfMatrix};
use fusevc_core::fusion::fuse;
use fusevc_core::metrics::pearson;
use fusevc_core::prosody::{cln, znorm_f0, CLNParams};
use fusevc_core::synthesis::{stft_loss, Decoder, DecoderConfig};
use fusevc_core::tensor::{grad_check, StftResolution};
use fusevc_core::{AudioBuffer, FeatureMatrix, FrameConfig, Graph, SeededRng, SpeakerEmbedding, Tensor};
use proptest::prelude::*;

fn matrix(rng: &mut SeededRng, rows: usize, cols: usize, scale: f64) -> FeatureMatrix {
    let data = (0..rows * cols).map(|_| scale * rng.normal()).collect();
    FeatureMatrix::new(rows, cols, data).unwrap()
}

fn normals(seed: u64, n: usize, scale: f64) -> Vec<f64> {
    let mut r = SeededRng::new(seed);
    (0..n).map(|_| scale * r.normal()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fusion_weights_are_convex(seed in any::<u64>(), t in 1usize..30, f in 1usize..24) {
        let mut r = SeededRng::new(seed);
        let (b, w, p) = (matrix(&mut r, t, f, 1.0), matrix(&mut r, t, f, 1.0), matrix(&mut r, t, f, 1.0));
        let out = fuse(&b, &w, &p).unwrap();
        for i in 0..t {
            let wr = out.weights.row(i);
            prop_assert!((wr[0] + wr[1] - 1.0).abs() < 1e-12);
            prop_assert!(wr[0] > 0.0 && wr[0] < 1.0);
            for c in 0..f {
                let (lo, hi) = (b.row(i)[c].min(w.row(i)[c]), b.row(i)[c].max(w.row(i)[c]));
                let v = out.h_f.row(i)[c];
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn fusion_query_scaling_keeps_preference(seed in any::<u64>(), c in 0.01f64..50.0) {
        let mut r = SeededRng::new(seed);
        let (b, w, p) = (matrix(&mut r, 8, 6, 1.0), matrix(&mut r, 8, 6, 1.0), matrix(&mut r, 8, 6, 1.0));
        let scaled = FeatureMatrix::new(8, 6, p.data.iter().map(|v| v * c).collect()).unwrap();
        let a = fuse(&b, &w, &p).unwrap();
        let s = fuse(&b, &w, &scaled).unwrap();
        for i in 0..8 {
            let (x, y) = (a.weights.row(i)[0] - 0.5, s.weights.row(i)[0] - 0.5);
            prop_assert!(x == 0.0 || x.signum() == y.signum());
        }
    }

    #[test]
    fn fusion_is_frame_local(seed in any::<u64>(), t in 2usize..20, k in 0usize..20) {
        let k = k % t;
        let mut r = SeededRng::new(seed);
        let (b, w, p) = (matrix(&mut r, t, 5, 1.0), matrix(&mut r, t, 5, 1.0), matrix(&mut r, t, 5, 1.0));
        let mut b2 = b.clone();
        b2.row_mut(k).iter_mut().for_each(|v| *v += 3.0);
        let (x, y) = (fuse(&b, &w, &p).unwrap(), fuse(&b2, &w, &p).unwrap());
        for i in (0..t).filter(|&i| i != k) {
            prop_assert_eq!(x.h_f.row(i), y.h_f.row(i));
            prop_assert_eq!(x.weights.row(i), y.weights.row(i));
        }
    }

    #[test]
    fn znorm_is_scale_invariant(seed in any::<u64>(), c in 0.05f64..20.0) {
        let mut r = SeededRng::new(seed);
        let f0: Vec<f64> = (0..60).map(|i| if i % 4 == 0 { 0.0 } else { r.uniform(80.0, 300.0) }).collect();
        let scaled: Vec<f64> = f0.iter().map(|v| v * c).collect();
        let (a, b) = (znorm_f0(&f0).unwrap(), znorm_f0(&scaled).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn cln_core_is_standardized(seed in any::<u64>(), t in 1usize..10, c in 2usize..16) {
        let mut r = SeededRng::new(seed);
        let x = matrix(&mut r, t, c, 2.0);
        let spk = SpeakerEmbedding::new(normals(seed ^ 1, 4, 1.0)).unwrap();
        let y = cln(&x, &spk, &CLNParams::zeros(c, 4)).unwrap();
        for row in y.iter_rows() {
            let m = row.iter().sum::<f64>() / c as f64;
            let v = row.iter().map(|a| (a - m).powi(2)).sum::<f64>() / c as f64;
            prop_assert!(m.abs() < 1e-9);
            // eps inside the root pulls the variance slightly under 1
            prop_assert!(v <= 1.0 + 1e-9 && v > 0.99 || v < 1e-3);
        }
    }

    #[test]
    fn pearson_affine_invariance_and_symmetry(
        seed in any::<u64>(),
        a in 0.01f64..100.0, b in -50.0f64..50.0, c in 0.01f64..100.0, d in -50.0f64..50.0,
    ) {
        let x = normals(seed, 40, 1.0);
        let y: Vec<f64> = normals(seed ^ 9, 40, 1.0).iter().zip(&x).map(|(n, x)| 0.5 * x + n).collect();
        let r = pearson(&x, &y).unwrap();
        prop_assert_eq!(r, pearson(&y, &x).unwrap());
        let xa: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let yc: Vec<f64> = y.iter().map(|v| c * v + d).collect();
        prop_assert!((pearson(&xa, &yc).unwrap() - r).abs() < 1e-9);
        prop_assert!(r.abs() <= 1.0);
    }

    #[test]
    fn stft_loss_is_nonnegative(seed in any::<u64>(), len in 64usize..400) {
        let res = [StftResolution::new(64, 16, 64), StftResolution::new(32, 8, 24)];
        let y = normals(seed, len, 0.3);
        let y_hat = normals(seed ^ 5, len, 0.3);
        prop_assert!(stft_loss(&y, &y_hat, &res).unwrap() >= 0.0);
        prop_assert_eq!(stft_loss(&y, &y, &res).unwrap(), 0.0);
    }

    #[test]
    fn align_stays_within_neighbour_envelope(seed in any::<u64>(), n in 1usize..40, m in 1usize..120) {
        let vals: Vec<f32> = normals(seed, n * 3, 1.0).iter().map(|&v| v as f32).collect();
        let bnf = BnfMatrix::new(n, 3, 10, vals.clone()).unwrap();
        let out = align_bnf(&bnf, m).unwrap();
        prop_assert_eq!(out.shape(), (m, 3));
        for c in 0..3 {
            let col: Vec<f64> = (0..n).map(|i| vals[i * 3 + c] as f64).collect();
            let (lo, hi) = col.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
            for i in 0..m {
                let v = out.row(i)[c];
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn frame_count_ignores_content(seed in any::<u64>(), len in 1usize..5000) {
        let x: Vec<f32> = normals(seed, len, 0.5).iter().map(|&v| v as f32).collect();
        let a = AudioBuffer::new(x, 24_000).unwrap();
        let z = AudioBuffer::new(vec![0.0; len], 24_000).unwrap();
        let cfg = FrameConfig::default();
        let n = frame_signal(&a, &cfg).unwrap().count;
        prop_assert_eq!(n, frame_signal(&z, &cfg).unwrap().count);
        prop_assert_eq!(n, frame_count(len, 240));
    }

    #[test]
    fn resample_preserves_duration(len in 1usize..4000, factor in 0.3f64..3.0) {
        let out = resample_by(&vec![0.1; len], factor);
        prop_assert!((out.len() as f64 - len as f64 * factor).abs() <= 1.0);
    }
}

#[test]
fn decoder_length_is_hop_times_frames() {
    let dec = Decoder::init(DecoderConfig::new(4, 2), 3).unwrap();
    let hop = dec.config.hop();
    assert_eq!(hop, 240);
    for t in 1..200 {
        let h = FeatureMatrix::zeros(t, 4);
        let hp = FeatureMatrix::zeros(t, 2);
        assert_eq!(dec.decode(&h, &hp, 24_000).unwrap().len(), hop * t, "T = {t}");
    }
}

/// Every op on ten random instances, reduced by a random weighting.
#[test]
fn every_op_passes_grad_check() {
    type Op = for<'g> fn(&'g Graph, Tensor<'g>) -> fusevc_core::Result<Tensor<'g>>;
    fn w<'g>(g: &'g Graph, t: Tensor<'g>) -> fusevc_core::Result<Tensor<'g>> {
        let c = g.constant(normals(t.numel() as u64, t.numel(), 1.0), &t.shape())?;
        Ok(t.mul(c)?.sum())
    }
    fn other<'g>(g: &'g Graph, shape: &[usize]) -> Tensor<'g> {
        let n = shape.iter().product();
        g.constant(normals(99, n, 1.0), shape).unwrap()
    }
    let positive = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = x.abs() + 0.5);
    let away_from_zero = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x += 0.2f64.copysign(*x));
    let none = |_: &mut Vec<f64>| {};
    #[allow(clippy::type_complexity)]
    let cases: Vec<(&str, Vec<usize>, Op, &dyn Fn(&mut Vec<f64>))> = vec![
        ("add", vec![3, 4], |g, x| w(g, x.add(other(g, &[3, 4]))?), &none),
        ("add_broadcast", vec![3, 4], |g, x| w(g, x.add(other(g, &[1]))?), &none),
        ("sub", vec![3, 4], |g, x| w(g, other(g, &[3, 4]).sub(x)?), &none),
        ("mul", vec![3, 4], |g, x| w(g, x.mul(x)?), &none),
        ("div", vec![3, 4], |g, x| w(g, other(g, &[3, 4]).div(x)?), &away_from_zero),
        ("scale", vec![5], |g, x| w(g, x.scale(-2.5)), &none),
        ("add_scalar", vec![5], |g, x| w(g, x.add_scalar(1.5)), &none),
        ("neg", vec![5], |g, x| w(g, x.neg()), &none),
        ("relu", vec![6], |g, x| w(g, x.relu()), &away_from_zero),
        ("leaky_relu", vec![6], |g, x| w(g, x.leaky_relu(0.1)), &away_from_zero),
        ("tanh", vec![6], |g, x| w(g, x.tanh()), &none),
        ("abs", vec![6], |g, x| w(g, x.abs()), &away_from_zero),
        ("square", vec![6], |g, x| w(g, x.square()), &none),
        ("sqrt", vec![6], |g, x| w(g, x.sqrt()), &positive),
        ("log", vec![6], |g, x| w(g, x.log()), &positive),
        ("exp", vec![6], |g, x| w(g, x.exp()), &none),
        ("matmul", vec![3, 4], |g, x| w(g, x.matmul(other(g, &[4, 2]))?), &none),
        ("matmul_rhs", vec![4, 2], |g, x| w(g, other(g, &[3, 4]).matmul(x)?), &none),
        ("conv1d", vec![9, 2], |g, x| w(g, x.conv1d(other(g, &[3, 2, 4]), Some(other(g, &[3])), 2, 1, 2)?), &none),
        ("conv1d_weight", vec![3, 2, 4], |g, x| w(g, other(g, &[9, 2]).conv1d(x, None, 2, 1, 2)?), &none),
        ("conv_transpose1d", vec![4, 3], |g, x| {
            w(g, x.conv_transpose1d(other(g, &[3, 2, 6]), Some(other(g, &[2])), 3, 1, 12)?)
        }, &none),
        ("conv_transpose1d_weight", vec![3, 2, 6], |g, x| {
            w(g, other(g, &[4, 3]).conv_transpose1d(x, None, 3, 1, 12)?)
        }, &none),
        ("softmax", vec![3, 4], |g, x| w(g, x.softmax()?), &none),
        ("layer_norm", vec![3, 5], |g, x| w(g, x.layer_norm(1e-5)?), &none),
        ("mul_channels", vec![4], |g, x| w(g, other(g, &[3, 4]).mul_channels(x)?), &none),
        ("add_channels", vec![4], |g, x| w(g, other(g, &[3, 4]).add_channels(x)?), &none),
        ("scale_rows", vec![3, 1], |g, x| w(g, other(g, &[3, 4]).scale_rows(x)?), &none),
        ("scale_rows_input", vec![3, 4], |g, x| w(g, x.scale_rows(other(g, &[3, 1]))?), &none),
        ("sum", vec![3, 4], |_, x| Ok(x.sum().square()), &none),
        ("mean", vec![3, 4], |_, x| Ok(x.mean().square()), &none),
        ("sum_last", vec![3, 4], |g, x| w(g, x.sum_last()?), &none),
        ("reshape", vec![3, 4], |g, x| w(g, x.reshape(&[2, 6])?.softmax()?), &none),
        ("transpose", vec![3, 4], |g, x| w(g, x.transpose()?.softmax()?), &none),
        ("concat_last", vec![3, 2], |g, x| w(g, Tensor::concat_last(&[x, other(g, &[3, 1]), x])?), &none),
        ("slice_last", vec![3, 5], |g, x| w(g, x.slice_last(1, 4)?), &none),
        ("pad_rows", vec![3, 2], |g, x| w(g, x.pad_rows(2, 1)?), &none),
        ("slice_rows", vec![5, 2], |g, x| w(g, x.slice_rows(1, 4)?), &none),
        ("avg_pool_rows", vec![7, 2], |g, x| w(g, x.avg_pool_rows(2)?), &none),
        ("stft_magnitude", vec![80], |g, x| w(g, x.stft_magnitude(StftResolution::new(32, 8, 24))?), &none),
    ];
    for (name, shape, op, adjust) in cases {
        for instance in 0..10u64 {
            let n = shape.iter().product();
            let mut x = normals(1000 + instance, n, 1.0);
            adjust(&mut x);
            let err = grad_check(op, &x, &shape, 1e-6).unwrap();
            assert!(err < 1e-4, "{name} instance {instance}: {err:e}");
        }
    }
}

/// `y = a*b + exp(a)` with `a = x^2` shared by both branches.
#[test]
fn diamond_graph_sums_path_gradients() {
    let g = Graph::new();
    let x = g.variable(vec![0.7], &[1]).unwrap();
    let b = g.variable(vec![-1.3], &[1]).unwrap();
    let a = x.square();
    let y = a.mul(b).unwrap().add(a.exp()).unwrap();
    y.backward().unwrap();
    let (xv, bv) = (0.7f64, -1.3f64);
    let dy_da = bv + (xv * xv).exp();
    let expect_x = dy_da * 2.0 * xv;
    assert!((x.grad().unwrap()[0] - expect_x).abs() < 1e-14);
    assert!((b.grad().unwrap()[0] - xv * xv).abs() < 1e-14);
}

#[test]
fn forward_does_not_depend_on_build_order() {
    let v = normals(4, 12, 1.0);
    let g1 = Graph::new();
    let x1 = g1.constant(v.clone(), &[3, 4]).unwrap();
    let p = x1.tanh();
    let q = x1.exp();
    let r1 = p.mul(q).unwrap().sum().item();
    let g2 = Graph::new();
    let x2 = g2.constant(v, &[3, 4]).unwrap();
    let q = x2.exp();
    let p = x2.tanh();
    let r2 = p.mul(q).unwrap().sum().item();
    assert_eq!(r1, r2);
}
