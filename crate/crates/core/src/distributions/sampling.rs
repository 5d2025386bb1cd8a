//! Seeded random streams and the samplers used by Monte Carlo.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A reproducible random stream. Independent streams for parallel chunks are
/// derived from one seed with [`stream_for_chunk`].
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

/// Stream number `chunk` of the generator seeded with `seed`.
pub fn stream_for_chunk(seed: u64, chunk: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    RngStream { rng, spare_normal: None }
}

impl RngStream {
    pub fn from_seed(seed: u64) -> Self {
        stream_for_chunk(seed, 0)
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Box-Muller, keeping the second variate for the next call.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare_normal = Some(r * s);
        r * c
    }

    /// Gamma(shape, 1) by Marsaglia-Tsang.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0);
            return g * self.uniform().powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.standard_normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform();
            if u < 1.0 - 0.0331 * x.powi(4) || u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = stream_for_chunk(7, 3);
        let mut b = stream_for_chunk(7, 3);
        let mut c = stream_for_chunk(7, 4);
        let xa: Vec<f64> = (0..5).map(|_| a.uniform()).collect();
        let xb: Vec<f64> = (0..5).map(|_| b.uniform()).collect();
        let xc: Vec<f64> = (0..5).map(|_| c.uniform()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn normal_and_gamma_first_two_moments() {
        let mut r = RngStream::from_seed(11);
        let xs: Vec<f64> = (0..200_000).map(|_| r.standard_normal()).collect();
        let (m, v) = mean_var(&xs);
        assert!(m.abs() < 0.01 && (v - 1.0).abs() < 0.02);
        for &k in &[0.3, 1.0, 4.5] {
            let xs: Vec<f64> = (0..200_000).map(|_| r.gamma(k)).collect();
            let (m, v) = mean_var(&xs);
            assert!((m - k).abs() < 0.02 * k.max(1.0), "shape {k}: mean {m}");
            assert!((v - k).abs() < 0.05 * k.max(1.0), "shape {k}: var {v}");
        }
    }
}
