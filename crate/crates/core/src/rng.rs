//! Seeded sampling helpers. Every randomized routine in the crate draws from a
//! `Sampler` so that results are reproducible from the seed alone.

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::geometry::Point;

pub const TAU: f64 = core::f64::consts::TAU;

#[derive(Clone, Debug)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream with the same seed; used to keep parallel loops and
    /// stratified sampling deterministic regardless of evaluation order.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Sampler { rng }
    }

    /// Uniform in [0,1).
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn angle(&mut self) -> f64 {
        TAU * self.uniform()
    }

    /// Standard complex Gaussian via Box-Muller.
    pub fn gaussian_complex(&mut self) -> Complex64 {
        let u = loop {
            let u = self.uniform();
            if u > 0.0 {
                break u;
            }
        };
        let r = (-2.0 * u.ln()).sqrt();
        let phi = self.angle();
        Complex64::new(r * phi.cos(), r * phi.sin()) * core::f64::consts::FRAC_1_SQRT_2
    }

    /// Uniform on the unit sphere of ℂⁿ.
    pub fn sphere_point(&mut self, n: usize) -> Point {
        loop {
            let mut coords = [Complex64::new(0.0, 0.0); 2];
            let mut norm_sq = 0.0;
            for c in coords.iter_mut().take(n) {
                *c = self.gaussian_complex();
                norm_sq += c.norm_sqr();
            }
            if norm_sq > 1e-12 {
                let inv = norm_sq.sqrt().recip();
                return Point::new(&coords[..n].iter().map(|c| c * inv).collect::<alloc::vec::Vec<_>>());
            }
        }
    }

    /// Uniform w.r.t. volume in the Euclidean ball of the given radius.
    pub fn euclidean_ball_point(&mut self, n: usize, radius: f64) -> Point {
        let dir = self.sphere_point(n);
        let r = radius * self.uniform().powf(1.0 / (2 * n) as f64);
        dir.scale(r)
    }

    /// Uniform in the unit ball, kept away from the sphere by `margin`.
    pub fn interior_point(&mut self, n: usize, margin: f64) -> Point {
        self.euclidean_ball_point(n, 1.0 - margin)
    }
}
