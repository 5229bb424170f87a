//! Synthetic curve images: one random cubic Bézier per sample, rasterized
//! onto a binary `resolution × resolution` grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Targets};

fn bezier(p: &[(f64, f64); 4], t: f64) -> (f64, f64) {
    let s = 1.0 - t;
    let (b0, b1, b2, b3) = (s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t);
    (
        b0 * p[0].0 + b1 * p[1].0 + b2 * p[2].0 + b3 * p[3].0,
        b0 * p[0].1 + b1 * p[1].1 + b2 * p[2].1 + b3 * p[3].1,
    )
}

/// Autoencoder dataset of `num_samples` rasterized curves.
pub fn generate_curves(num_samples: usize, resolution: usize, seed: u64) -> Dataset {
    assert!(num_samples >= 1 && resolution >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = resolution * resolution;
    let steps = 8 * resolution;
    let mut inputs = vec![0.0; num_samples * cells];
    for image in inputs.chunks_mut(cells) {
        let mut ctrl = [(0.0, 0.0); 4];
        for c in &mut ctrl {
            *c = (rng.gen::<f64>(), rng.gen::<f64>());
        }
        for k in 0..=steps {
            let (x, y) = bezier(&ctrl, k as f64 / steps as f64);
            let col = ((x * resolution as f64) as usize).min(resolution - 1);
            let row = ((y * resolution as f64) as usize).min(resolution - 1);
            image[row * resolution + col] = 1.0;
        }
    }
    Dataset::new(inputs, cells, Targets::Reconstruction).expect("generated shapes are consistent")
}
