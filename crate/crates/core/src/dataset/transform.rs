use crate::tensor::Tensor;

use super::{Clip, DatasetError, Label, Resolution};

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// BT.601 luma of a `[3, H, W]` RGB frame.
pub fn to_grayscale(rgb: &Tensor<f32>) -> Result<Tensor<f32>, DatasetError> {
    let d = rgb.dims();
    if d.len() != 3 || d[0] != 3 {
        return Err(DatasetError::Validation(format!("expected a [3, H, W] frame, got {d:?}")));
    }
    check_unit_range(rgb.data(), "rgb frame")?;
    let plane = d[1] * d[2];
    let (r, rest) = rgb.data().split_at(plane);
    let (g, b) = rest.split_at(plane);
    let luma = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| (LUMA[0] * r + LUMA[1] * g + LUMA[2] * b).clamp(0.0, 1.0))
        .collect();
    Ok(Tensor::new(vec![d[1], d[2]], luma)?)
}

/// Converts a raw RGB video stored as `[3·T, H, W]` (R, G and B planes per
/// frame, frame-major) into a `[T, H, W]` grayscale volume.
pub fn rgb_video_to_grayscale(video: &Tensor<f32>) -> Result<Tensor<f32>, DatasetError> {
    let d = video.dims();
    if d.len() != 3 || !d[0].is_multiple_of(3) {
        return Err(DatasetError::Validation(format!("RGB video must be [3·frames, H, W], got {d:?}")));
    }
    let frame_len = 3 * d[1] * d[2];
    let mut out = Vec::with_capacity(video.len() / 3);
    for chunk in video.data().chunks_exact(frame_len) {
        let frame = Tensor::new(vec![3, d[1], d[2]], chunk.to_vec())?;
        out.extend_from_slice(to_grayscale(&frame)?.data());
    }
    Ok(Tensor::new(vec![d[0] / 3, d[1], d[2]], out)?)
}

fn check_unit_range(data: &[f32], what: &str) -> Result<(), DatasetError> {
    match data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(DatasetError::Validation(format!("{what} has value {v} outside [0, 1]"))),
        None => Ok(()),
    }
}

/// Source coordinate and blend weight along one axis for half-pixel-centred
/// bilinear sampling.
fn axis_taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f32)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, (src - lo as f64) as f32)
        })
        .collect()
}

/// Bilinear resize of an `[H, W]` frame with half-pixel centre alignment.
pub fn resize(frame: &Tensor<f32>, target: Resolution) -> Result<Tensor<f32>, DatasetError> {
    if frame.rank() != 2 {
        return Err(DatasetError::Validation(format!("expected an [H, W] frame, got {:?}", frame.dims())));
    }
    let volume = frame.clone().reshape(vec![1, frame.dims()[0], frame.dims()[1]])?;
    let out = resize_volume(&volume, target)?;
    Ok(out.reshape(vec![target.height, target.width])?)
}

/// [`resize`] applied to every frame of a `[D, H, W]` volume.
pub fn resize_volume(volume: &Tensor<f32>, target: Resolution) -> Result<Tensor<f32>, DatasetError> {
    let d = volume.dims();
    if d.len() != 3 {
        return Err(DatasetError::Validation(format!("expected [D, H, W], got {d:?}")));
    }
    if target.width == 0 || target.height == 0 {
        return Err(crate::tensor::TensorError::shape("resize", format!("target {target} has a zero extent")).into());
    }
    let (depth, in_h, in_w) = (d[0], d[1], d[2]);
    if (in_h, in_w) == (target.height, target.width) {
        return Ok(volume.clone());
    }
    let rows = axis_taps(target.height, in_h);
    let cols = axis_taps(target.width, in_w);
    let mut out = Vec::with_capacity(depth * target.height * target.width);
    for frame in volume.data().chunks_exact(in_h * in_w) {
        for &(y0, y1, fy) in &rows {
            let (r0, r1) = (&frame[y0 * in_w..][..in_w], &frame[y1 * in_w..][..in_w]);
            for &(x0, x1, fx) in &cols {
                let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
                out.push((top + (bottom - top) * fy).clamp(0.0, 1.0));
            }
        }
    }
    Ok(Tensor::new(vec![depth, target.height, target.width], out)?)
}

/// Frame indices used to bring a segment of `length` frames to `depth`.
///
/// With `length >= depth` the picks are `⌊i·length/depth⌋`, strictly
/// increasing. Shorter segments are an error unless `loop_pad` is set, in
/// which case the segment repeats from its start.
pub fn temporal_indices(length: usize, depth: usize, loop_pad: bool) -> Result<Vec<usize>, DatasetError> {
    if length == 0 || depth == 0 {
        return Err(DatasetError::Validation(format!(
            "temporal sampling needs positive length and depth (got {length}, {depth})"
        )));
    }
    if length >= depth {
        Ok((0..depth).map(|i| i * length / depth).collect())
    } else if loop_pad {
        Ok((0..depth).map(|i| i % length).collect())
    } else {
        Err(DatasetError::TooShort { length, depth })
    }
}

/// Picks `depth` frames out of a `[L, H, W]` segment.
pub fn temporal_sample(segment: &Tensor<f32>, depth: usize, loop_pad: bool) -> Result<Tensor<f32>, DatasetError> {
    let d = segment.dims();
    if d.len() != 3 {
        return Err(DatasetError::Validation(format!("expected [L, H, W], got {d:?}")));
    }
    let plane = d[1] * d[2];
    let picks = temporal_indices(d[0], depth, loop_pad)?;
    let mut out = Vec::with_capacity(depth * plane);
    for i in picks {
        out.extend_from_slice(&segment.data()[i * plane..(i + 1) * plane]);
    }
    Ok(Tensor::new(vec![depth, d[1], d[2]], out)?)
}

/// Mirrors every row of a `[D, H, W]` volume: `(d, y, x) → (d, y, W−1−x)`.
pub fn flip_volume(volume: &Tensor<f32>) -> Tensor<f32> {
    let w = *volume.dims().last().expect("tensors have rank >= 1");
    let mut out = volume.clone();
    out.data_mut().chunks_exact_mut(w).for_each(|row| row.reverse());
    out
}

pub fn flip_horizontal(clip: &Clip) -> Clip {
    Clip {
        frames: flip_volume(&clip.frames),
        label: clip.label,
        source_id: clip.source_id.clone(),
        flipped: !clip.flipped,
    }
}

/// Brings a grayscale `[L, H, W]` segment to a training clip: temporal
/// sampling to `depth`, resize to `resolution`, then an optional flip.
pub fn prepare_clip(
    segment: &Tensor<f32>,
    label: Label,
    source_id: &str,
    depth: usize,
    resolution: Resolution,
    loop_pad: bool,
    flipped: bool,
) -> Result<Clip, DatasetError> {
    let sampled = temporal_sample(segment, depth, loop_pad)?;
    let clip = Clip::new(resize_volume(&sampled, resolution)?, label, source_id)?;
    Ok(if flipped { flip_horizontal(&clip) } else { clip })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rng::seeded_rng;
    use rand::Rng;

    fn rgb(r: f32, g: f32, b: f32) -> Tensor<f32> {
        Tensor::new(vec![3, 1, 1], vec![r, g, b]).unwrap()
    }

    #[test]
    fn grayscale_of_primaries() {
        assert_eq!(to_grayscale(&rgb(1.0, 1.0, 1.0)).unwrap().data(), &[1.0]);
        assert_eq!(to_grayscale(&rgb(0.0, 0.0, 0.0)).unwrap().data(), &[0.0]);
        assert!((to_grayscale(&rgb(1.0, 0.0, 0.0)).unwrap().data()[0] - 0.299).abs() < 1e-7);
        assert!(to_grayscale(&rgb(1.2, 0.0, 0.0)).is_err());
    }

    #[test]
    fn rgb_video_converts_frame_by_frame() {
        let video = Tensor::new(vec![6, 1, 1], vec![1.0, 1.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let gray = rgb_video_to_grayscale(&video).unwrap();
        assert_eq!(gray.dims(), &[2, 1, 1]);
        assert!((gray.data()[1] - 0.587).abs() < 1e-7);
    }

    /// Bilinear as a sum of separable tent weights over every source pixel.
    fn tent_oracle(src: &Tensor<f32>, out_w: usize, out_h: usize) -> Vec<f64> {
        let (h, w) = (src.dims()[0], src.dims()[1]);
        let coord = |o: usize, n_out: usize, n_in: usize| {
            ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64)
        };
        let mut out = Vec::new();
        for oy in 0..out_h {
            let sy = coord(oy, out_h, h);
            for ox in 0..out_w {
                let sx = coord(ox, out_w, w);
                let mut acc = 0.0;
                for y in 0..h {
                    for x in 0..w {
                        let wy = (1.0 - (sy - y as f64).abs()).max(0.0);
                        let wx = (1.0 - (sx - x as f64).abs()).max(0.0);
                        acc += wy * wx * src.get(&[y, x]) as f64;
                    }
                }
                out.push(acc);
            }
        }
        out
    }

    #[test]
    fn resize_matches_tent_oracle() {
        let mut rng = seeded_rng(11);
        for (iw, ih, ow, oh) in [(8, 8, 4, 4), (8, 8, 3, 5), (5, 7, 11, 9), (32, 24, 32, 24)] {
            let src = Tensor::from_fn(vec![ih, iw], |_| rng.random::<f32>()).unwrap();
            let got = resize(&src, Resolution::new(ow, oh)).unwrap();
            for (g, want) in got.data().iter().zip(tent_oracle(&src, ow, oh)) {
                assert!((*g as f64 - want).abs() < 1e-6, "{iw}x{ih}->{ow}x{oh}: {g} vs {want}");
            }
        }
    }

    #[test]
    fn resize_keeps_constants_constant() {
        let src = Tensor::full(vec![240, 320], 0.375f32).unwrap();
        let out = resize(&src, Resolution::new(80, 60)).unwrap();
        assert_eq!(out.dims(), &[60, 80]);
        assert!(out.data().iter().all(|&v| v == 0.375));
    }

    #[test]
    fn temporal_indices_cases() {
        assert_eq!(temporal_indices(10, 10, false).unwrap(), (0..10).collect::<Vec<_>>());
        assert_eq!(temporal_indices(20, 10, false).unwrap(), vec![0, 2, 4, 6, 8, 10, 12, 14, 16, 18]);
        assert!(matches!(temporal_indices(5, 10, false), Err(DatasetError::TooShort { length: 5, depth: 10 })));
        assert_eq!(temporal_indices(3, 7, true).unwrap(), vec![0, 1, 2, 0, 1, 2, 0]);
    }

    #[test]
    fn flip_is_an_involution() {
        let mut rng = seeded_rng(12);
        let frames = Tensor::from_fn(vec![3, 4, 5], |_| rng.random::<f32>()).unwrap();
        let clip = Clip::new(frames, Label::Suspicious, "SB_1").unwrap();
        let once = flip_horizontal(&clip);
        assert!(once.flipped);
        assert_eq!(once.get_pixel(1, 2, 0), clip.get_pixel(1, 2, 4));
        let twice = flip_horizontal(&once);
        assert_eq!(twice, clip);
    }

    impl Clip {
        fn get_pixel(&self, d: usize, y: usize, x: usize) -> f32 {
            self.frames.get(&[d, y, x])
        }
    }
}
