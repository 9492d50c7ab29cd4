//! Seeded random sampling: a thin wrapper around a counter-based
//! generator plus the non-uniform samplers the crate needs.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Deterministic random generator; the same seed reproduces the same
/// stream on every platform.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha12Rng,
}

impl SeededRng {
    /// Construct from a 64-bit seed.
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Derive an independent sub-stream (for parallel workers) by
    /// mixing the parent seed with the worker index.
    pub fn substream(seed: u64, index: u64) -> Self {
        // SplitMix64 finalisation of seed ^ golden-ratio multiples.
        let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        SeededRng::new(z ^ (z >> 31))
    }

    /// Uniform in [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Standard normal draw.
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Student-t draw with `nu` degrees of freedom (unit scale, not
    /// unit variance).
    pub fn student_t(&mut self, nu: f64) -> f64 {
        let z: f64 = self.standard_normal();
        let chi2 = Gamma::new(0.5 * nu, 2.0)
            .expect("valid Gamma parameters")
            .sample(&mut self.inner);
        z * (nu / chi2).sqrt()
    }

    /// Student-t draw standardised to unit variance (requires nu > 2).
    pub fn student_t_unit_var(&mut self, nu: f64) -> f64 {
        assert!(nu > 2.0, "unit-variance Student requires nu > 2");
        self.student_t(nu) * ((nu - 2.0) / nu).sqrt()
    }

    /// Gamma draw with the given shape and scale.
    pub fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        Gamma::new(shape, scale)
            .expect("valid Gamma parameters")
            .sample(&mut self.inner)
    }

    /// Beta draw via two Gammas.
    pub fn beta(&mut self, a: f64, b: f64) -> f64 {
        let x = self.gamma(a, 1.0);
        let y = self.gamma(b, 1.0);
        x / (x + y)
    }

    /// Random index in [0, n).
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Access the raw generator.
    pub fn raw(&mut self) -> &mut impl RngCore {
        &mut self.inner
    }
}
