//! Scrambled Halton points: each digit position of each base gets its own
//! random permutation, drawn from a seeded stream.

use crate::seed::{seed_derive, stream_rng};
use rand::seq::SliceRandom;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

#[derive(Clone, Debug)]
pub struct ScrambledHalton {
    dims: Vec<DimScramble>,
}

#[derive(Clone, Debug)]
struct DimScramble {
    base: u32,
    /// `perms[d][digit]` for digit positions `d`.
    perms: Vec<Vec<u32>>,
}

impl ScrambledHalton {
    /// `dim <= 16` coordinates; `scramble` selects an independent randomization.
    pub fn new(dim: usize, seed: u64, scramble: u64) -> Self {
        assert!(dim <= PRIMES.len(), "at most {} dimensions", PRIMES.len());
        let dims = (0..dim)
            .map(|j| {
                let base = PRIMES[j];
                let n_digits = (53.0 * std::f64::consts::LN_2 / (base as f64).ln()).ceil() as usize;
                let mut rng = stream_rng(seed_derive(seed, &["halton".into(), scramble.into(), j.into()]));
                let perms = (0..n_digits)
                    .map(|_| {
                        let mut p: Vec<u32> = (0..base).collect();
                        p.shuffle(&mut rng);
                        p
                    })
                    .collect();
                DimScramble { base, perms }
            })
            .collect();
        ScrambledHalton { dims }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    /// Point `i`, each coordinate in the open interval `(0, 1)`.
    pub fn point(&self, i: u64, out: &mut [f64]) {
        for (o, d) in out.iter_mut().zip(&self.dims) {
            let b = d.base as u64;
            let inv = 1.0 / b as f64;
            let mut k = i;
            let mut scale = inv;
            let mut v = 0.0;
            for perm in &d.perms {
                let digit = (k % b) as usize;
                k /= b;
                v += perm[digit] as f64 * scale;
                scale *= inv;
            }
            *o = v.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinates_are_equidistributed() {
        let h = ScrambledHalton::new(4, 1, 0);
        let mut p = [0.0; 4];
        let n = 1 << 12;
        let mut mean = [0.0; 4];
        let mut low = [0usize; 4];
        for i in 0..n {
            h.point(i, &mut p);
            for j in 0..4 {
                assert!(p[j] > 0.0 && p[j] < 1.0);
                mean[j] += p[j] / n as f64;
                if p[j] < 0.25 {
                    low[j] += 1;
                }
            }
        }
        for j in 0..4 {
            assert!((mean[j] - 0.5).abs() < 2e-3, "{mean:?}");
            assert!((low[j] as f64 / n as f64 - 0.25).abs() < 5e-3);
        }
    }

    #[test]
    fn qmc_beats_the_monte_carlo_rate_on_a_smooth_integrand() {
        // ∫_{[0,1]^3} x y z = 1/8
        let h = ScrambledHalton::new(3, 7, 2);
        let mut p = [0.0; 3];
        let n = 1 << 14;
        let s: f64 = (0..n)
            .map(|i| {
                h.point(i, &mut p);
                p[0] * p[1] * p[2]
            })
            .sum();
        assert!((s / n as f64 - 0.125).abs() < 2e-4);
    }

    #[test]
    fn scrambles_differ_and_are_reproducible() {
        let (a, b, c) = (
            ScrambledHalton::new(2, 1, 0),
            ScrambledHalton::new(2, 1, 1),
            ScrambledHalton::new(2, 1, 0),
        );
        let (mut x, mut y, mut z) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        a.point(5, &mut x);
        b.point(5, &mut y);
        c.point(5, &mut z);
        assert_ne!(x, y);
        assert_eq!(x, z);
    }
}
