// SPDX-License-Identifier: Apache-2.0

//! Seeded synthetic layer data. Images and kernels draw from separate
//! streams of the same seed, so changing one shape never perturbs the other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{Image, KernelSet};

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Pixels uniform in `[0, 1]`.
pub fn synth_image(seed: u64, c: usize, h: usize, w: usize) -> Result<Image> {
    let mut rng = stream(seed, 0);
    Image::from_fn(c, h, w, |_, _, _| rng.gen_range(0.0..=1.0))
}

/// Weights uniform in `[-1, 1]`.
pub fn synth_kernels(seed: u64, n: usize, c: usize, l: usize) -> Result<KernelSet> {
    let mut rng = stream(seed, 1);
    KernelSet::from_fn(n, c, l, |_, _, _, _| rng.gen_range(-1.0..=1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = synth_image(7, 3, 4, 5).unwrap();
        assert_eq!(a, synth_image(7, 3, 4, 5).unwrap());
        assert_ne!(a, synth_image(8, 3, 4, 5).unwrap());
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let k = synth_kernels(7, 2, 3, 3).unwrap();
        assert!(k.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(k.data().iter().any(|v| *v < 0.0));
    }
}
