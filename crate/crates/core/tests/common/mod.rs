//! Brute-force oracles and finite-difference helpers shared by the
//! integration suites. Nothing here calls into the GEMM path.

#![allow(dead_code)]

use pcbnet::tensor::rng::{seeded_rng, SeededRng};
use pcbnet::tensor::{Scalar, Tensor};
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for per-element relative error, so that gradients that
/// are zero up to rounding compare on absolute error instead.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> SeededRng {
    seeded_rng(seed)
}

pub fn random_tensor<T: Scalar>(rng: &mut SeededRng, dims: &[usize], lo: f64, hi: f64) -> Tensor<T> {
    Tensor::from_fn(dims.to_vec(), |_| T::of_f64(rng.random_range(lo..hi))).unwrap()
}

/// `‖a − b‖₂ / ‖b‖₂`, with `b` the reference.
pub fn normwise_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

pub fn as_f64<T: Scalar>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.as_f64()).collect()
}

/// Same-padded 3×3×3 convolution over `[N, C, D, H, W]`, accumulated in
/// `f64` straight from the definition.
pub fn conv_oracle(input: &[f64], dims: [usize; 5], weights: &[f64], bias: &[f64], out_channels: usize) -> Vec<f64> {
    let [n, c, d, h, w] = dims;
    let at = |b: usize, ch: usize, z: usize, y: usize, x: usize| (((b * c + ch) * d + z) * h + y) * w + x;
    let mut out = vec![0.0; n * out_channels * d * h * w];
    let mut i = 0;
    for b in 0..n {
        for o in 0..out_channels {
            for z in 0..d {
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = bias[o];
                        for ch in 0..c {
                            for kz in 0..3 {
                                for ky in 0..3 {
                                    for kx in 0..3 {
                                        let (zz, yy, xx) = (z + kz, y + ky, x + kx);
                                        if zz < 1 || yy < 1 || xx < 1 || zz > d || yy > h || xx > w {
                                            continue;
                                        }
                                        let wi = (((o * c + ch) * 3 + kz) * 3 + ky) * 3 + kx;
                                        acc += weights[wi] * input[at(b, ch, zz - 1, yy - 1, xx - 1)];
                                    }
                                }
                            }
                        }
                        out[i] = acc;
                        i += 1;
                    }
                }
            }
        }
    }
    out
}

/// 2×2×2 stride-2 max pooling with floor semantics.
pub fn pool_oracle(input: &[f64], dims: [usize; 5]) -> Vec<f64> {
    let [n, c, d, h, w] = dims;
    let mut out = Vec::new();
    for plane in 0..n * c {
        let base = plane * d * h * w;
        for z in 0..d / 2 {
            for y in 0..h / 2 {
                for x in 0..w / 2 {
                    let mut best = f64::NEG_INFINITY;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                best = best.max(input[base + ((2 * z + dz) * h + 2 * y + dy) * w + 2 * x + dx]);
                            }
                        }
                    }
                    out.push(best);
                }
            }
        }
    }
    out
}

/// `input [N, F] · weights [F, G] + bias`.
pub fn dense_oracle(input: &[f64], weights: &[f64], bias: &[f64], n: usize, f: usize, g: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * g];
    for r in 0..n {
        for col in 0..g {
            out[r * g + col] = bias[col] + (0..f).map(|k| input[r * f + k] * weights[k * g + col]).sum::<f64>();
        }
    }
    out
}

/// Central differences of `f` at every coordinate of `x`.
pub fn numeric_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Largest `|a − n| / max(|a|, |n|, FD_FLOOR)` over all coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR)).fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub mod manifests {
    use pcbnet::pcb::{AnnotationManifest, CrimeEvent, Fps, FrameCategory};
    use pcbnet::tensor::rng::SeededRng;
    use rand::Rng;

    /// Two crimes in a 400-frame video, first appearance at frame 0.
    pub fn two_events() -> AnnotationManifest {
        AnnotationManifest {
            video_id: "Shoplifting017".into(),
            frame_count: 400,
            fps: Fps::integer(30),
            suspect_first_appearance: 0,
            events: vec![
                CrimeEvent { ccm_start: 100, scm_start: 150, scm_end: 170, cl_end: 180 },
                CrimeEvent { ccm_start: 300, scm_start: 350, scm_end: 360, cl_end: 370 },
            ],
        }
    }

    /// A valid manifest with 0..6 events, zero-width gaps included.
    pub fn fuzz(r: &mut SeededRng, id: usize) -> AnnotationManifest {
        let frame_count = r.random_range(1..3000usize);
        let first = r.random_range(0..frame_count);
        let mut events = Vec::new();
        let mut cursor = first;
        for _ in 0..r.random_range(0..6) {
            let room = frame_count - cursor;
            if room < 2 {
                break;
            }
            let gap = if r.random_bool(0.2) { 0 } else { r.random_range(0..room / 2 + 1) };
            let ccm = cursor + gap;
            if ccm + 1 >= frame_count {
                break;
            }
            let scm_start = r.random_range(ccm..frame_count - 1);
            let scm_end = r.random_range(scm_start + 1..=frame_count);
            let cl_end = r.random_range(scm_end..=frame_count);
            events.push(CrimeEvent { ccm_start: ccm, scm_start, scm_end, cl_end });
            cursor = cl_end;
        }
        AnnotationManifest {
            video_id: format!("Fuzz{id:04}"),
            frame_count,
            fps: Fps::integer(30),
            suspect_first_appearance: first,
            events,
        }
    }

    /// Frame-by-frame category straight from the interval definitions.
    pub fn category_oracle(m: &AnnotationManifest, f: usize) -> FrameCategory {
        if f < m.suspect_first_appearance {
            return FrameCategory::PreAppearance;
        }
        for ev in &m.events {
            if (ev.ccm_start..ev.scm_start).contains(&f) {
                return FrameCategory::Ccm;
            }
            if (ev.scm_start..ev.scm_end).contains(&f) {
                return FrameCategory::Scm;
            }
            if (ev.scm_end..ev.cl_end).contains(&f) {
                return FrameCategory::ClResidue;
            }
        }
        if m.events.iter().any(|ev| ev.ccm_start > f) {
            FrameCategory::Pcb
        } else {
            FrameCategory::Post
        }
    }

    /// Every interval invariant of extraction and the timeline; the first
    /// violation is returned.
    pub fn check(m: &AnnotationManifest) -> Result<(), String> {
        use pcbnet::pcb::{category_counts, extract_pcb_segments, segment_timeline, timeline_runs};
        let ex = extract_pcb_segments(m).map_err(|e| format!("{}: {e}", m.video_id))?;
        let mut prev_end = 0;
        for (i, s) in ex.segments.iter().enumerate() {
            if s.is_empty() || s.ordinal != i + 1 || s.start < prev_end || s.start < m.suspect_first_appearance {
                return Err(format!("{}: bad segment {s:?}", m.video_id));
            }
            prev_end = s.end;
            for ev in &m.events {
                let (lo, hi) = ev.lapse();
                if s.start < hi && lo < s.end {
                    return Err(format!("{}: segment {s:?} overlaps lapse [{lo}, {hi})", m.video_id));
                }
            }
        }
        let timeline = segment_timeline(m).map_err(|e| e.to_string())?;
        if timeline.len() != m.frame_count {
            return Err(format!("{}: timeline has {} frames", m.video_id, timeline.len()));
        }
        if category_counts(&timeline).values().sum::<usize>() != m.frame_count {
            return Err(format!("{}: category counts do not sum to the frame count", m.video_id));
        }
        let runs = timeline_runs(&timeline);
        let contiguous = runs.windows(2).all(|w| w[0].2 == w[1].1 && w[0].0 != w[1].0);
        if !contiguous || runs.first().map(|r| r.1) != Some(0) || runs.last().map(|r| r.2) != Some(m.frame_count) {
            return Err(format!("{}: runs do not tile the frame range", m.video_id));
        }
        for (f, &cat) in timeline.iter().enumerate() {
            let expected = category_oracle(m, f);
            if cat != expected {
                return Err(format!("{}: frame {f} is {cat:?}, expected {expected:?}", m.video_id));
            }
            let in_segment = ex.segments.iter().any(|s| (s.start..s.end).contains(&f));
            if in_segment != (cat == FrameCategory::Pcb) {
                return Err(format!("{}: frame {f} segment membership disagrees with {cat:?}", m.video_id));
            }
        }
        Ok(())
    }
}

pub mod table1 {
    use pcbnet::dataset::{assemble_dataset, indexed_pool, parse_dataset_name, Label};

    /// Rows as printed, including the table's own spelling of
    /// `unabalanced`.
    pub const ROWS: [&str; 6] = [
        "SBT_balanced_60",
        "SBT_unabalanced_30s60n",
        "SBT_balanced_120",
        "SBT_balanced_120_flip",
        "SBT_unbalanced_60s120n",
        "SBT_balanced_240",
    ];

    fn range(prefix: &str, n: usize, flipped: bool) -> Vec<(String, bool)> {
        (1..=n).map(|i| (format!("{prefix}_{i}"), flipped)).collect()
    }

    /// (suspicious, normal) compositions transcribed from the table.
    pub fn expected(row: &str) -> (Vec<(String, bool)>, Vec<(String, bool)>) {
        let both = |p: &str, n: usize| [range(p, n, false), range(p, n, true)].concat();
        match row {
            "SBT_balanced_60" => (range("SB", 30, false), range("NB", 30, false)),
            "SBT_unabalanced_30s60n" => (range("SB", 30, false), range("NB", 60, false)),
            "SBT_balanced_120" => (range("SB", 60, false), range("NB", 60, false)),
            "SBT_balanced_120_flip" => (range("SB", 60, true), range("NB", 60, true)),
            "SBT_unbalanced_60s120n" => (range("SB", 60, false), both("NB", 60)),
            "SBT_balanced_240" => (both("SB", 60), both("NB", 60)),
            _ => panic!("not a table row: {row}"),
        }
    }

    fn sorted(mut v: Vec<(String, bool)>) -> Vec<(String, bool)> {
        v.sort();
        v
    }

    /// Assembles a row from 60-source pools and compares compositions as
    /// multisets.
    pub fn check(row: &str) -> Result<usize, String> {
        let spec = parse_dataset_name(row).map_err(|e| e.to_string())?;
        let index = assemble_dataset(&spec, &indexed_pool(Label::Suspicious, 60), &indexed_pool(Label::Normal, 60))
            .map_err(|e| e.to_string())?;
        let (s, n) = expected(row);
        for (label, want) in [(Label::Suspicious, s), (Label::Normal, n)] {
            let got = sorted(index.composition(label));
            if got != sorted(want) {
                return Err(format!("{row}: {label:?} composition differs"));
            }
        }
        Ok(index.entries.len())
    }
}

/// Oracle comparisons on random shapes; each returns the worst error seen.
pub mod oracle {
    use super::*;
    use pcbnet::tensor::{conv3d_forward, dense_forward, maxpool3d_forward, ConvParams};

    /// Random `[N, C, D, H, W]` conv shapes with output channel counts,
    /// plus three that span several im2col tiles.
    pub fn conv_shapes(seed: u64, count: usize) -> Vec<([usize; 5], usize)> {
        let mut r = rng(seed);
        let mut shapes: Vec<([usize; 5], usize)> = (0..count)
            .map(|_| {
                let dims = [
                    r.random_range(1..3),
                    r.random_range(1..4),
                    r.random_range(1..7),
                    r.random_range(1..8),
                    r.random_range(1..9),
                ];
                (dims, r.random_range(1..5))
            })
            .collect();
        shapes.extend([([1, 1, 10, 24, 32], 2), ([2, 8, 8, 12, 16], 3), ([1, 2, 30, 24, 32], 1)]);
        shapes
    }

    pub fn conv_error<T: Scalar>(dims: [usize; 5], out_channels: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        let input: Tensor<T> = random_tensor(&mut r, &dims, -1.0, 1.0);
        let weights: Tensor<T> = random_tensor(&mut r, &[out_channels, dims[1], 3, 3, 3], -0.5, 0.5);
        let bias: Tensor<T> = random_tensor(&mut r, &[out_channels], -0.5, 0.5);
        let expected = conv_oracle(&as_f64(&input), dims, &as_f64(&weights), &as_f64(&bias), out_channels);
        let params = ConvParams::new(weights, bias).unwrap();
        let got = conv3d_forward(&input, &params).unwrap();
        assert_eq!(got.dims(), [dims[0], out_channels, dims[2], dims[3], dims[4]]);
        normwise_error(&as_f64(&got), &expected)
    }

    /// Worst normwise error over `count` random pool shapes; pooling picks
    /// existing values so anything above zero is a bug.
    pub fn pool_error(seed: u64, count: usize) -> f64 {
        let mut r = rng(seed);
        (0..count)
            .map(|_| {
                let dims = [
                    r.random_range(1..3),
                    r.random_range(1..4),
                    r.random_range(2..9),
                    r.random_range(2..11),
                    r.random_range(2..11),
                ];
                let input: Tensor<f32> = random_tensor(&mut r, &dims, -1.0, 1.0);
                let (out, _) = maxpool3d_forward(&input).unwrap();
                assert_eq!(out.dims(), [dims[0], dims[1], dims[2] / 2, dims[3] / 2, dims[4] / 2]);
                normwise_error(&as_f64(&out), &pool_oracle(&as_f64(&input), dims))
            })
            .fold(0.0, f64::max)
    }

    /// Worst normwise errors (f32, f64) over `count` random dense shapes.
    pub fn dense_error(seed: u64, count: usize) -> (f64, f64) {
        let mut r = rng(seed);
        let mut worst = (0.0f64, 0.0f64);
        for _ in 0..count {
            let (n, f, g) = (r.random_range(1..9), r.random_range(1..300), r.random_range(1..70));
            let input: Tensor<f32> = random_tensor(&mut r, &[n, f], -1.0, 1.0);
            let w: Tensor<f32> = random_tensor(&mut r, &[f, g], -0.5, 0.5);
            let b: Tensor<f32> = random_tensor(&mut r, &[g], -0.5, 0.5);
            let expected = dense_oracle(&as_f64(&input), &as_f64(&w), &as_f64(&b), n, f, g);
            let got = dense_forward(&input, &w, &b).unwrap();
            let got64 = dense_forward(&input.cast::<f64>(), &w.cast(), &b.cast()).unwrap();
            worst.0 = worst.0.max(normwise_error(&as_f64(&got), &expected));
            worst.1 = worst.1.max(normwise_error(&as_f64(&got64), &expected));
        }
        worst
    }
}

/// Finite-difference checks in f64; each returns the worst per-element
/// relative error.
pub mod gradcheck {
    use super::*;
    use pcbnet::dataset::Resolution;
    use pcbnet::network::{build_network, NetworkConfig};
    use pcbnet::tensor::{
        conv3d_backward, conv3d_forward, dense_backward, dense_forward, maxpool3d_backward, maxpool3d_forward, relu,
        relu_backward, softmax_cross_entropy, ConvParams,
    };

    fn tensor(dims: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(dims.to_vec(), data.to_vec()).unwrap()
    }

    /// Input, weight and bias gradients of `⟨g, conv(x)⟩`.
    pub fn conv(seed: u64, dims: [usize; 5], oc: usize) -> f64 {
        let mut r = rng(seed);
        let x: Tensor<f64> = random_tensor(&mut r, &dims, -1.0, 1.0);
        let w: Tensor<f64> = random_tensor(&mut r, &[oc, dims[1], 3, 3, 3], -0.5, 0.5);
        let b: Tensor<f64> = random_tensor(&mut r, &[oc], -0.5, 0.5);
        let g: Tensor<f64> = random_tensor(&mut r, &[dims[0], oc, dims[2], dims[3], dims[4]], -1.0, 1.0);
        let loss = |x: &[f64], w: &[f64], b: &[f64]| {
            let p = ConvParams::new(tensor(&[oc, dims[1], 3, 3, 3], w), tensor(&[oc], b)).unwrap();
            dot(conv3d_forward(&tensor(&dims, x), &p).unwrap().data(), g.data())
        };
        let grads = conv3d_backward(&x, &ConvParams::new(w.clone(), b.clone()).unwrap(), &g).unwrap();
        let nx = numeric_gradient(x.data(), |v| loss(v, w.data(), b.data()));
        let nw = numeric_gradient(w.data(), |v| loss(x.data(), v, b.data()));
        let nb = numeric_gradient(b.data(), |v| loss(x.data(), w.data(), v));
        max_relative_error(grads.input.data(), &nx)
            .max(max_relative_error(grads.weights.data(), &nw))
            .max(max_relative_error(grads.bias.data(), &nb))
    }

    pub fn pool(seed: u64) -> f64 {
        let mut r = rng(seed);
        let dims = [2, 2, 4, 5, 6];
        let x: Tensor<f64> = random_tensor(&mut r, &dims, -1.0, 1.0);
        let (out, idx) = maxpool3d_forward(&x).unwrap();
        let g: Tensor<f64> = random_tensor(&mut r, out.dims(), -1.0, 1.0);
        let analytic = maxpool3d_backward(&idx, &g).unwrap();
        let numeric =
            numeric_gradient(x.data(), |v| dot(maxpool3d_forward(&tensor(&dims, v)).unwrap().0.data(), g.data()));
        max_relative_error(analytic.data(), &numeric)
    }

    pub fn dense(seed: u64) -> f64 {
        let mut r = rng(seed);
        let (n, f, gw) = (3, 7, 5);
        let x: Tensor<f64> = random_tensor(&mut r, &[n, f], -1.0, 1.0);
        let w: Tensor<f64> = random_tensor(&mut r, &[f, gw], -1.0, 1.0);
        let b: Tensor<f64> = random_tensor(&mut r, &[gw], -1.0, 1.0);
        let g: Tensor<f64> = random_tensor(&mut r, &[n, gw], -1.0, 1.0);
        let loss = |x: &[f64], w: &[f64], b: &[f64]| {
            dot(dense_forward(&tensor(&[n, f], x), &tensor(&[f, gw], w), &tensor(&[gw], b)).unwrap().data(), g.data())
        };
        let grads = dense_backward(&x, &w, &g).unwrap();
        let nx = numeric_gradient(x.data(), |v| loss(v, w.data(), b.data()));
        let nw = numeric_gradient(w.data(), |v| loss(x.data(), v, b.data()));
        let nb = numeric_gradient(b.data(), |v| loss(x.data(), w.data(), v));
        max_relative_error(grads.input.data(), &nx)
            .max(max_relative_error(grads.weights.data(), &nw))
            .max(max_relative_error(grads.bias.data(), &nb))
    }

    /// Inputs kept at least 0.01 away from the kink.
    pub fn relu_layer(seed: u64) -> f64 {
        let mut r = rng(seed);
        let x = Tensor::from_fn(vec![40], |_| {
            let v: f64 = r.random_range(0.01..1.0);
            if r.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .unwrap();
        let g: Tensor<f64> = random_tensor(&mut r, &[40], -1.0, 1.0);
        let analytic = relu_backward(&relu(&x), &g).unwrap();
        let numeric = numeric_gradient(x.data(), |v| dot(relu(&tensor(&[40], v)).data(), g.data()));
        max_relative_error(analytic.data(), &numeric)
    }

    pub fn softmax(seed: u64) -> f64 {
        let mut r = rng(seed);
        let logits: Tensor<f64> = random_tensor(&mut r, &[6, 2], -3.0, 3.0);
        let labels = [0, 1, 1, 0, 1, 0];
        let ce = softmax_cross_entropy(&logits, &labels).unwrap();
        let numeric =
            numeric_gradient(logits.data(), |v| softmax_cross_entropy(&tensor(&[6, 2], v), &labels).unwrap().loss);
        max_relative_error(ce.grad_logits.data(), &numeric)
    }

    /// Every parameter of an 8×8×8 network with two filters per conv layer.
    /// Fails if any parameter tensor has an all-vanishing gradient, which
    /// would make the comparison vacuous.
    pub fn network(seed: u64) -> Result<f64, String> {
        let config = NetworkConfig::custom(8, Resolution::new(8, 8), [2, 2, 2, 2], 4).with_seed(seed);
        let mut net = build_network::<f64>(&config).unwrap();
        let mut r = rng(seed + 1000);
        // nonzero biases keep ReLU units and pooling windows away from ties at 0
        for (name, p) in net.parameters_mut() {
            if name.ends_with(".bias") {
                for v in p.data_mut() {
                    *v = r.random_range(0.05..0.2);
                }
            }
        }
        let batch: Tensor<f64> = random_tensor(&mut r, &[2, 1, 8, 8, 8], 0.0, 1.0);
        let labels = [1, 0];
        let (_, grads) = net.loss_and_gradients(&batch, &labels).unwrap();
        let names: Vec<String> = net.parameters().map(|(n, _)| n.to_string()).collect();
        let mut worst = 0.0f64;
        for (i, name) in names.iter().enumerate() {
            if grads[i].data().iter().all(|g| g.abs() <= 1e-6) {
                return Err(format!("{name} has a vanishing gradient"));
            }
            let base = net.parameters().nth(i).unwrap().1.data().to_vec();
            let numeric = numeric_gradient(&base, |v| {
                let mut probe = net.clone();
                probe.parameters_mut().nth(i).unwrap().1.data_mut().copy_from_slice(v);
                softmax_cross_entropy(&probe.forward(&batch).unwrap(), &labels).unwrap().loss
            });
            worst = worst.max(max_relative_error(grads[i].data(), &numeric));
        }
        Ok(worst)
    }
}

/// Row names of the depth, test-size, unbalanced and flip result tables,
/// the two largest datasets, and the short forms of the thirty-run table.
pub const RESULT_ROWS: [&str; 19] = [
    "SBT_balanced_60_20t_10f",
    "SBT_balanced_60_20t_30f",
    "SBT_balanced_60_20t_90f",
    "SBT_balanced_60_30t_10f",
    "SBT_balanced_60_40t_10f",
    "SBT_unbalanced_30s60n_30t_10f",
    "SBT_unbalanced_30s60n_30t_30f",
    "SBT_unbalanced_30s60n_30t_90f",
    "SBT_balanced_120_40t_10f",
    "SBT_balanced_120_40t_10f_flip",
    "SBT_balanced_120_30t_10f",
    "SBT_balanced_120_30t_10f_flip",
    "SBT_balanced_240_30t",
    "SBT_unbalanced_60s120n_30t",
    "unb_60s120n_30t_10f",
    "unb_60s120n_30t_30f",
    "bal_240_30t_10f",
    "bal_240_30t_30f",
    "unb_60s120n_30t_10f_80x60",
];
