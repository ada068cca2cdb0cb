//! He-style initialization.
//!
//! Weights are fan-in scaled normals, biases zero. Samples are drawn at
//! `f64` and cast, so the draw stream is identical whichever precision the
//! parameters are instantiated at.

use crate::Real;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn he_fill<F: Real>(data: &mut [F], fan_in: usize, rng: &mut ChaCha12Rng) {
    let std = (2.0 / fan_in as f64).sqrt();
    for v in data.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = F::of(z * std);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn f32_and_f64_share_the_draw_stream() {
        let mut a = vec![0f32; 64];
        let mut b = vec![0f64; 64];
        he_fill(&mut a, 9, &mut substream(5, "init"));
        he_fill(&mut b, 9, &mut substream(5, "init"));
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(*x, *y as f32);
        }
    }

    #[test]
    fn scale_tracks_fan_in() {
        let mut wide = vec![0f64; 20000];
        he_fill(&mut wide, 200, &mut substream(1, "init"));
        let var = wide.iter().map(|v| v * v).sum::<f64>() / wide.len() as f64;
        let want = 2.0 / 200.0;
        assert!((var - want).abs() < 0.1 * want, "var {var} vs {want}");
    }
}
