//! Synthetic stand-in for surveillance footage.
//!
//! Every clip shows a dim static "shelf" rectangle and one bright blob on a
//! dark background. In normal clips the blob walks straight across the frame
//! at constant speed. In suspicious clips it approaches the shelf, lingers
//! next to it with small moves and pauses, then backs away.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{indexed_pool, Clip, DatasetError, Label, Resolution};
use crate::tensor::rng::{seeded_stream, streams, SeededRng};
use crate::tensor::Tensor;

pub const SYNTH_NOISE_SIGMA: f32 = 0.05;
pub const SYNTH_MIN_RESOLUTION: Resolution = Resolution::new(16, 12);
pub const SYNTH_MIN_DEPTH: usize = 8;

const BACKGROUND: f32 = 0.1;
const SHELF: f32 = 0.35;
const BLOB: f32 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthPools {
    pub suspicious: Vec<Clip>,
    pub normal: Vec<Clip>,
}

impl SynthPools {
    pub fn pool(&self, label: Label) -> &[Clip] {
        match label {
            Label::Suspicious => &self.suspicious,
            Label::Normal => &self.normal,
        }
    }
}

pub fn synth_generate(
    per_class: usize,
    resolution: Resolution,
    depth: usize,
    seed: u64,
) -> Result<SynthPools, DatasetError> {
    if resolution.width < SYNTH_MIN_RESOLUTION.width
        || resolution.height < SYNTH_MIN_RESOLUTION.height
        || depth < SYNTH_MIN_DEPTH
    {
        return Err(DatasetError::Validation(format!(
            "synthetic clips need at least {SYNTH_MIN_RESOLUTION} and depth {SYNTH_MIN_DEPTH}, got {resolution} depth {depth}"
        )));
    }
    let make = |label: Label| -> Result<Vec<Clip>, DatasetError> {
        indexed_pool(label, per_class)
            .into_iter()
            .enumerate()
            .map(|(i, id)| {
                let stream = (streams::SYNTH << 40) | ((label.index() as u64) << 32) | i as u64;
                let mut rng = seeded_stream(seed, stream);
                Clip::new(render(label, resolution, depth, &mut rng), label, id)
            })
            .collect()
    };
    Ok(SynthPools { suspicious: make(Label::Suspicious)?, normal: make(Label::Normal)? })
}

struct Scene {
    shelf: (f32, f32, f32, f32),
    path: Vec<(f32, f32)>,
    radius: f32,
}

fn render(label: Label, res: Resolution, depth: usize, rng: &mut SeededRng) -> Tensor<f32> {
    let scene = match label {
        Label::Normal => normal_scene(res, depth, rng),
        Label::Suspicious => suspicious_scene(res, depth, rng),
    };
    let noise = Normal::new(0.0, SYNTH_NOISE_SIGMA).expect("positive sigma");
    let (w, h) = (res.width, res.height);
    let (sx0, sy0, sx1, sy1) = scene.shelf;
    let mut data = Vec::with_capacity(depth * h * w);
    for &(cx, cy) in &scene.path {
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as f32, y as f32);
                let base = if fx >= sx0 && fx <= sx1 && fy >= sy0 && fy <= sy1 { SHELF } else { BACKGROUND };
                let dist = ((fx - cx).powi(2) + (fy - cy).powi(2)).sqrt();
                let coverage = (scene.radius + 0.5 - dist).clamp(0.0, 1.0);
                let v = base + coverage * (BLOB - base) + noise.sample(rng);
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Tensor::new(vec![depth, h, w], data).expect("positive extents")
}

fn blob_radius(res: Resolution) -> f32 {
    (res.width as f32 / 16.0).max(1.5)
}

fn random_shelf(res: Resolution, rng: &mut SeededRng) -> (f32, f32, f32, f32) {
    let (w, h) = (res.width as f32, res.height as f32);
    let (sw, sh) = (w / 5.0, h / 5.0);
    let x0 = rng.random_range(0.2 * w..0.8 * w - sw);
    let y0 = rng.random_range(0.2 * h..0.8 * h - sh);
    (x0, y0, x0 + sw, y0 + sh)
}

fn normal_scene(res: Resolution, depth: usize, rng: &mut SeededRng) -> Scene {
    let radius = blob_radius(res);
    let (w, h) = (res.width as f32, res.height as f32);
    let shelf = random_shelf(res, rng);
    // enter and leave half outside the frame
    let (mut x0, mut x1) = (-radius, w - 1.0 + radius);
    if rng.random::<bool>() {
        std::mem::swap(&mut x0, &mut x1);
    }
    let y0 = rng.random_range(radius..h - 1.0 - radius);
    let y1 = rng.random_range(radius..h - 1.0 - radius);
    let path = (0..depth)
        .map(|t| {
            let s = t as f32 / (depth - 1) as f32;
            (x0 + s * (x1 - x0), y0 + s * (y1 - y0))
        })
        .collect();
    Scene { shelf, path, radius }
}

fn suspicious_scene(res: Resolution, depth: usize, rng: &mut SeededRng) -> Scene {
    let radius = blob_radius(res);
    let (w, h) = (res.width as f32, res.height as f32);
    let shelf = random_shelf(res, rng);
    let (sx0, sy0, sx1, sy1) = shelf;
    let centre = ((sx0 + sx1) / 2.0, (sy0 + sy1) / 2.0);
    let clamp = |(x, y): (f32, f32)| (x.clamp(radius, w - 1.0 - radius), y.clamp(radius, h - 1.0 - radius));

    // lingering spot just beside the shelf, and a start point further out
    let angle = rng.random_range(0.0..std::f32::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let near = clamp((centre.0 + dx * (sx1 - sx0) * 0.6, centre.1 + dy * (sy1 - sy0) * 0.6));
    let reach = 0.12 * w;
    let start = clamp((near.0 + dx * reach, near.1 + dy * reach));
    let leave = clamp((near.0 + dx * reach + dy * reach * 0.5, near.1 + dy * reach - dx * reach * 0.5));

    let last = (depth - 1) as f32;
    let arrive = (0.3 * last).round() as usize;
    let depart = (0.7 * last).round() as usize;
    let jitter = (w / 32.0).max(0.5);
    let mut path = Vec::with_capacity(depth);
    let mut here = near;
    for t in 0..depth {
        let p = if t <= arrive {
            let s = t as f32 / arrive.max(1) as f32;
            (start.0 + s * (near.0 - start.0), start.1 + s * (near.1 - start.1))
        } else if t < depart {
            if rng.random::<f32>() < 0.5 {
                here =
                    clamp((near.0 + rng.random_range(-jitter..=jitter), near.1 + rng.random_range(-jitter..=jitter)));
            }
            here
        } else {
            let s = (t - depart) as f32 / (depth - 1 - depart).max(1) as f32;
            (here.0 + s * (leave.0 - here.0), here.1 + s * (leave.1 - here.1))
        };
        path.push(p);
    }
    Scene { shelf, path, radius }
}
