//! Deterministic synthetic face-like datasets for tests and demos.
//!
//! Each subject gets a fixed pattern of smooth blobs and oriented gratings;
//! each sample of that subject is the pattern shifted by up to one pixel,
//! rescaled in brightness, and overlaid with uniform noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, GrayImage, LabeledImage};

struct Blob {
    cx: f64,
    cy: f64,
    radius: f64,
    amplitude: f64,
}

struct Grating {
    cx: f64,
    cy: f64,
    extent: f64,
    freq_x: f64,
    freq_y: f64,
    amplitude: f64,
}

struct Pattern {
    background: f64,
    blobs: Vec<Blob>,
    gratings: Vec<Grating>,
}

impl Pattern {
    fn random(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Self {
        let (w, h) = (width as f64, height as f64);
        let blobs = (0..6)
            .map(|_| Blob {
                cx: rng.random_range(0.0..w),
                cy: rng.random_range(0.0..h),
                radius: rng.random_range(0.08..0.25) * w.min(h),
                amplitude: rng.random_range(-70.0..70.0),
            })
            .collect();
        let gratings = (0..4)
            .map(|_| Grating {
                cx: rng.random_range(0.0..w),
                cy: rng.random_range(0.0..h),
                extent: rng.random_range(0.1..0.3) * w.min(h),
                freq_x: rng.random_range(-1.2..1.2),
                freq_y: rng.random_range(-1.2..1.2),
                amplitude: rng.random_range(10.0..45.0),
            })
            .collect();
        Self {
            background: rng.random_range(80.0..150.0),
            blobs,
            gratings,
        }
    }

    fn value(&self, x: f64, y: f64) -> f64 {
        let mut v = self.background;
        for b in &self.blobs {
            let d2 = (x - b.cx).powi(2) + (y - b.cy).powi(2);
            v += b.amplitude * (-d2 / (2.0 * b.radius * b.radius)).exp();
        }
        for g in &self.gratings {
            let d2 = (x - g.cx).powi(2) + (y - g.cy).powi(2);
            let envelope = (-d2 / (2.0 * g.extent * g.extent)).exp();
            v += g.amplitude * envelope * (g.freq_x * x + g.freq_y * y).sin();
        }
        v
    }
}

/// Builds a `subjects x samples` dataset of `width x height` images.
///
/// Panics if any argument is zero.
pub fn synthetic_faces(
    subjects: usize,
    samples: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(subjects * samples);
    for subject_id in 0..subjects {
        let pattern = Pattern::random(&mut rng, width, height);
        for sample_index in 0..samples {
            let dx = rng.random_range(-1.0..=1.0);
            let dy = rng.random_range(-1.0..=1.0);
            let gain = rng.random_range(0.9..1.1);
            let mut pixels = Vec::with_capacity(width * height);
            for y in 0..height {
                for x in 0..width {
                    let v = gain * pattern.value(x as f64 + dx, y as f64 + dy)
                        + rng.random_range(-6.0..6.0);
                    pixels.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
            images.push(LabeledImage {
                image: GrayImage::new(width, height, pixels).expect("sized raster"),
                subject_id,
                sample_index,
            });
        }
    }
    Dataset::new(subjects, samples, images).expect("synthetic layout is complete")
}
