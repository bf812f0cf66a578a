//! Synthetic datasets with known structure.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{sq_dist, DataSet};
use crate::pipelines::GrayImage;

/// Points with their generating component.
#[derive(Debug, Clone)]
pub struct Labeled {
    pub data: DataSet,
    pub labels: Vec<usize>,
}

fn noise(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("noise level is finite and nonnegative")
}

/// Isotropic 2D Gaussian blobs of standard deviation `std`, `n_per` points
/// each, centers uniform in `[0, box_size]^2` and at least `min_gap` apart.
pub fn gaussian_blobs(
    seed: u64,
    k: usize,
    n_per: usize,
    std: f64,
    box_size: f64,
    min_gap: f64,
) -> Labeled {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::new();
    while centers.len() < k {
        let c = vec![rng.gen_range(0.0..box_size), rng.gen_range(0.0..box_size)];
        if centers.iter().all(|o| sq_dist(o, &c).sqrt() >= min_gap) {
            centers.push(c);
        }
    }
    let normal = noise(std);
    let mut rows = Vec::with_capacity(k * n_per);
    let mut labels = Vec::with_capacity(k * n_per);
    for (l, c) in centers.iter().enumerate() {
        for _ in 0..n_per {
            rows.push(vec![
                c[0] + normal.sample(&mut rng),
                c[1] + normal.sample(&mut rng),
            ]);
            labels.push(l);
        }
    }
    Labeled {
        data: DataSet::from_rows(&rows).expect("blob points are finite"),
        labels,
    }
}

/// `arms` interleaved spirals around the origin with Gaussian noise. Each
/// arm turns by `turn` radians while the radius grows from `inner_radius` to
/// 1, with points uniform in arc length.
pub fn spirals(
    seed: u64,
    arms: usize,
    n_per: usize,
    inner_radius: f64,
    turn: f64,
    noise_std: f64,
) -> Labeled {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = noise(noise_std);
    let (r0, r1) = (inner_radius, 1.0f64);
    let mut rows = Vec::with_capacity(arms * n_per);
    let mut labels = Vec::with_capacity(arms * n_per);
    for a in 0..arms {
        let phase = 2.0 * PI * a as f64 / arms as f64;
        for _ in 0..n_per {
            // Arc length grows like r^2 along a spiral of linearly growing radius.
            let r = (r0 * r0 + (r1 * r1 - r0 * r0) * rng.gen::<f64>()).sqrt();
            let angle = phase + turn * (r - r0) / (r1 - r0);
            rows.push(vec![
                r * angle.cos() + normal.sample(&mut rng),
                r * angle.sin() + normal.sample(&mut rng),
            ]);
            labels.push(a);
        }
    }
    Labeled {
        data: DataSet::from_rows(&rows).expect("spiral points are finite"),
        labels,
    }
}

/// Archimedean spiral `t (cos t, sin t)` for `t` in [`SPIRAL_START`, `SPIRAL_END`].
pub const SPIRAL_START: f64 = PI;
pub const SPIRAL_END: f64 = 7.0 * PI;

pub fn spiral_point(t: f64) -> [f64; 2] {
    [t * t.cos(), t * t.sin()]
}

/// Noisy samples of the spiral followed by uniform outliers.
#[derive(Debug, Clone)]
pub struct NoisySpiral {
    pub data: DataSet,
    pub is_outlier: Vec<bool>,
}

/// `n` spiral points with Gaussian noise plus `outliers` points uniform in
/// `[-half_width, half_width]^2`.
pub fn noisy_spiral(
    seed: u64,
    n: usize,
    noise_std: f64,
    outliers: usize,
    half_width: f64,
) -> NoisySpiral {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = noise(noise_std);
    let mut rows = Vec::with_capacity(n + outliers);
    for _ in 0..n {
        let t = rng.gen_range(SPIRAL_START..SPIRAL_END);
        let [x, y] = spiral_point(t);
        rows.push(vec![
            x + normal.sample(&mut rng),
            y + normal.sample(&mut rng),
        ]);
    }
    for _ in 0..outliers {
        rows.push(vec![
            rng.gen_range(-half_width..half_width),
            rng.gen_range(-half_width..half_width),
        ]);
    }
    let mut is_outlier = vec![false; n];
    is_outlier.resize(n + outliers, true);
    NoisySpiral {
        data: DataSet::from_rows(&rows).expect("spiral points are finite"),
        is_outlier,
    }
}

/// Distance from `p` to the clean spiral, by dense sampling of the curve
/// followed by a local golden-section refinement.
pub fn distance_to_spiral(p: &[f64]) -> f64 {
    let samples = 4000;
    let step = (SPIRAL_END - SPIRAL_START) / samples as f64;
    let dist = |t: f64| {
        let q = spiral_point(t);
        sq_dist(p, &q)
    };
    let best = (0..=samples)
        .map(|i| SPIRAL_START + i as f64 * step)
        .min_by(|a, b| dist(*a).total_cmp(&dist(*b)))
        .expect("at least one sample");
    let (mut lo, mut hi) = (
        (best - step).max(SPIRAL_START),
        (best + step).min(SPIRAL_END),
    );
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if dist(a) < dist(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    dist(0.5 * (lo + hi)).min(dist(best)).sqrt()
}

/// `height x width` image with intensity 0 on the left half of the columns
/// and 100 (the maxval) on the right, with its ground-truth labels.
pub fn two_band_image(height: usize, width: usize) -> (GrayImage, Vec<usize>) {
    let labels: Vec<usize> = (0..height * width)
        .map(|n| usize::from(n % width >= width / 2))
        .collect();
    let pixels = labels
        .iter()
        .map(|&l| if l == 0 { 0 } else { 100 })
        .collect();
    (
        GrayImage::new(height, width, 100, pixels).expect("valid image"),
        labels,
    )
}
