//! Seeded multi-start maximization of scale- and translation-invariant
//! field functionals.
//!
//! Each restart walks on the unit sphere of mean-zero fields: a
//! finite-difference gradient step first, then a compass/random-direction
//! pattern step when the gradient step fails (the functionals are only
//! piecewise smooth). Restarts run in parallel with isolated RNG streams and
//! the merge is deterministic, so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::weighted_mean;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: 200,
            iterations: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub value: f64,
    pub point: Vec<f64>,
    pub restart: usize,
}

const MIN_STEP: f64 = 1e-13;
const FD_STEP: f64 = 1e-7;

struct Walker<'a> {
    weights: &'a [f64],
    mass: f64,
    objective: &'a (dyn Fn(&[f64]) -> f64 + Sync),
}

impl Walker<'_> {
    fn eval(&self, z: &[f64]) -> f64 {
        let v = (self.objective)(z);
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Removes the weighted mean and rescales to unit Euclidean length.
    fn normalize(&self, z: &mut [f64]) -> bool {
        let mean = weighted_mean(self.weights, z, self.mass);
        z.iter_mut().for_each(|v| *v -= mean);
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return false;
        }
        z.iter_mut().for_each(|v| *v /= norm);
        true
    }

    fn try_move(&self, z: &[f64], dir: &[f64], step: f64) -> Option<(Vec<f64>, f64)> {
        let mut cand: Vec<f64> = z.iter().zip(dir).map(|(a, d)| a + step * d).collect();
        if !self.normalize(&mut cand) {
            return None;
        }
        let v = self.eval(&cand);
        Some((cand, v))
    }

    fn gradient(&self, z: &[f64], f: f64) -> Vec<f64> {
        let mut probe = z.to_vec();
        let mut g = vec![0.0; z.len()];
        for i in 0..z.len() {
            probe[i] += FD_STEP;
            let v = self.eval(&probe);
            probe[i] = z[i];
            g[i] = if v.is_finite() { (v - f) / FD_STEP } else { 0.0 };
        }
        // Project onto the tangent space of the normalized manifold.
        let radial: f64 = g.iter().zip(z).map(|(a, b)| a * b).sum();
        g.iter_mut().zip(z).for_each(|(a, b)| *a -= radial * b);
        let mean = weighted_mean(self.weights, &g, self.mass);
        g.iter_mut().for_each(|a| *a -= mean);
        g
    }

    fn climb(&self, start: Vec<f64>, iterations: usize, rng: &mut ChaCha8Rng) -> Option<(Vec<f64>, f64)> {
        let n = start.len();
        let mut z = start;
        if !self.normalize(&mut z) {
            return None;
        }
        let mut f = self.eval(&z);
        if !f.is_finite() {
            return None;
        }
        let mut step = 0.25;
        for _ in 0..iterations {
            if step < MIN_STEP {
                break;
            }
            let g = self.gradient(&z, f);
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut moved = false;
            if gnorm > 0.0 && gnorm.is_finite() {
                let dir: Vec<f64> = g.iter().map(|v| v / gnorm).collect();
                if let Some((cand, v)) = self.try_move(&z, &dir, step) {
                    if v > f {
                        z = cand;
                        f = v;
                        step *= 1.5;
                        moved = true;
                    }
                }
            }
            if !moved {
                // Pattern step: ± coordinates, then random directions.
                let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(4 * n);
                for i in 0..n {
                    for sign in [1.0, -1.0] {
                        let mut d = vec![0.0; n];
                        d[i] = sign;
                        dirs.push(d);
                    }
                }
                for _ in 0..n {
                    let d: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let d: Vec<f64> = d.iter().map(|v| v / norm).collect();
                    dirs.push(d.iter().map(|v| -v).collect());
                    dirs.push(d);
                }
                for d in &dirs {
                    if let Some((cand, v)) = self.try_move(&z, d, step) {
                        if v > f {
                            z = cand;
                            f = v;
                            moved = true;
                            break;
                        }
                    }
                }
                if !moved {
                    step *= 0.5;
                }
            }
        }
        Some((z, f))
    }
}

/// Maximizes `objective` over nonconstant fields.
///
/// `objective` must be invariant under adding constants and under positive
/// scaling. The first restarts use `starts` (in order), the remaining ones
/// standard Gaussian fields. Ties go to the lowest restart index.
pub fn maximize_invariant(
    weights: &[f64],
    objective: &(dyn Fn(&[f64]) -> f64 + Sync),
    starts: &[Vec<f64>],
    config: &SearchConfig,
) -> Result<SearchOutcome> {
    let n = weights.len();
    let mass: f64 = crate::numeric::compensated_sum(weights.iter().copied());
    let walker = Walker {
        weights,
        mass,
        objective,
    };
    let restarts = config.restarts.max(1);
    let results: Vec<Option<(Vec<f64>, f64)>> = (0..restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64);
            let start = match starts.get(k) {
                Some(s) => s.clone(),
                None => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
            };
            walker.climb(start, config.iterations, &mut rng)
        })
        .collect();
    let mut best: Option<SearchOutcome> = None;
    for (restart, res) in results.into_iter().enumerate() {
        if let Some((point, value)) = res {
            if best.as_ref().is_none_or(|b| value > b.value) {
                best = Some(SearchOutcome {
                    value,
                    point,
                    restart,
                });
            }
        }
    }
    best.ok_or(Error::SearchFailed)
}
