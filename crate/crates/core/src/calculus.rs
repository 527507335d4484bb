//! Lebesgue norms, averages and discrete gradients of fields on a space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, CompensatedSum, Exponent};
use crate::space::{MetricMeasureSpace, METRIC_TOL};

/// Real values attached to the points of one space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
    space_id: u64,
}

impl ScalarField {
    pub fn new(space: &MetricMeasureSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::FieldSpaceMismatch {
                field: values.len(),
                space: space.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Self {
            values,
            space_id: space.id(),
        })
    }

    pub fn constant(space: &MetricMeasureSpace, c: f64) -> Result<Self> {
        Self::new(space, vec![c; space.len()])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn space_id(&self) -> u64 {
        self.space_id
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Self {
            values,
            space_id: self.space_id,
        })
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        self.map(|v| c * v)
    }

    pub fn shifted(&self, c: f64) -> Result<Self> {
        self.map(|v| v + c)
    }

    /// The same values attached to another space with the same number of points.
    pub fn rebind(&self, space: &MetricMeasureSpace) -> Result<Self> {
        Self::new(space, self.values.clone())
    }

    pub(crate) fn check(&self, space: &MetricMeasureSpace) -> Result<()> {
        if self.values.len() != space.len() || self.space_id != space.id() {
            return Err(Error::FieldSpaceMismatch {
                field: self.values.len(),
                space: space.len(),
            });
        }
        Ok(())
    }
}

/// `u_X = μ(X)^{-1} Σ u(x) μ({x})`.
pub fn average(space: &MetricMeasureSpace, u: &ScalarField) -> Result<f64> {
    u.check(space)?;
    Ok(weighted_mean(space.weights(), u.values(), space.total_mass()))
}

pub(crate) fn weighted_mean(weights: &[f64], values: &[f64], mass: f64) -> f64 {
    compensated_sum(weights.iter().zip(values).map(|(w, v)| w * v)) / mass
}

/// `u - u_X`.
pub fn centered(space: &MetricMeasureSpace, u: &ScalarField) -> Result<ScalarField> {
    let mean = average(space, u)?;
    u.map(|v| v - mean)
}

/// Cached `(|f|, μ)` pairs for evaluating `||f||_p` at many exponents.
#[derive(Debug, Clone)]
pub struct LpEvaluator {
    /// Nonzero magnitudes divided by their maximum, with their weights.
    scaled: Vec<(f64, f64)>,
    ln_scaled: Vec<f64>,
    raw: Vec<(f64, f64)>,
    max_abs: f64,
    wide_range: bool,
}

impl LpEvaluator {
    pub fn new(weights: &[f64], values: &[f64]) -> Self {
        let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let raw: Vec<(f64, f64)> = values
            .iter()
            .zip(weights)
            .filter(|(v, _)| **v != 0.0)
            .map(|(v, w)| (v.abs(), *w))
            .collect();
        let min_abs = raw.iter().fold(f64::INFINITY, |m, (v, _)| m.min(*v));
        let scaled: Vec<(f64, f64)> = raw.iter().map(|&(v, w)| (v / max_abs, w)).collect();
        let ln_scaled = scaled.iter().map(|(v, _)| v.ln()).collect();
        Self {
            scaled,
            ln_scaled,
            raw,
            max_abs,
            wide_range: max_abs / min_abs > 1e8,
        }
    }

    pub fn for_field(space: &MetricMeasureSpace, f: &ScalarField) -> Result<Self> {
        f.check(space)?;
        Ok(Self::new(space.weights(), f.values()))
    }

    pub fn is_zero(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    /// `||f||_p`; plain power sums for moderate `p`, max-scaled log form otherwise.
    pub fn norm(&self, p: Exponent) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        match p {
            Exponent::Infinity => self.max_abs,
            Exponent::Finite(p) if p > 64.0 || self.wide_range => {
                let s: CompensatedSum = self
                    .scaled
                    .iter()
                    .zip(&self.ln_scaled)
                    .map(|(&(_, w), &lv)| w * (p * lv).exp())
                    .collect();
                self.max_abs * (s.value().ln() / p).exp()
            }
            Exponent::Finite(p) => {
                let s: CompensatedSum = self.raw.iter().map(|&(v, w)| w * v.powf(p)).collect();
                s.value().powf(1.0 / p)
            }
        }
    }

    /// `ln ||f||_p`, `-inf` for the zero field.
    pub fn ln_norm(&self, p: Exponent) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        match p {
            Exponent::Infinity => self.max_abs.ln(),
            Exponent::Finite(p) => {
                let s: CompensatedSum = self
                    .scaled
                    .iter()
                    .zip(&self.ln_scaled)
                    .map(|(&(_, w), &lv)| w * (p * lv).exp())
                    .collect();
                self.max_abs.ln() + s.value().ln() / p
            }
        }
    }
}

/// `||f||_p = (Σ |f|^p μ)^{1/p}`, or `max |f|` for the infinity marker.
pub fn lp_norm(space: &MetricMeasureSpace, f: &ScalarField, p: impl Into<Exponent>) -> Result<f64> {
    let p = p.into().validate()?;
    Ok(LpEvaluator::for_field(space, f)?.norm(p))
}

/// Which pairs enter the discrete upper gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeighborRule {
    /// Graph (or lattice) edges of the space.
    Edges,
    /// All points within distance `r`.
    Radius { r: f64 },
    /// Every other point.
    AllPairs,
}

impl NeighborRule {
    /// `Edges` when the space remembers its edges, otherwise `AllPairs`.
    pub fn default_for(space: &MetricMeasureSpace) -> Self {
        if space.has_edges() {
            NeighborRule::Edges
        } else {
            NeighborRule::AllPairs
        }
    }
}

/// Precomputed neighbor lists `(j, 1/d(i,j))` for one rule.
#[derive(Debug, Clone)]
pub struct GradientStencil {
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl GradientStencil {
    pub fn new(space: &MetricMeasureSpace, rule: NeighborRule) -> Result<Self> {
        let n = space.len();
        let mut neighbors = Vec::with_capacity(n);
        for i in 0..n {
            let list: Vec<(usize, f64)> = match rule {
                NeighborRule::Edges => space
                    .edge_neighbors(i)
                    .ok_or_else(|| Error::InvalidSpace("space has no edge structure".into()))?
                    .iter()
                    .filter(|(j, _)| *j != i)
                    .map(|&(j, _)| (j, 1.0 / space.dist(i, j)))
                    .collect(),
                NeighborRule::Radius { r } => {
                    let reach = r + METRIC_TOL * space.diam();
                    (0..n)
                        .filter(|&j| j != i && space.dist(i, j) <= reach)
                        .map(|j| (j, 1.0 / space.dist(i, j)))
                        .collect()
                }
                NeighborRule::AllPairs => (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (j, 1.0 / space.dist(i, j)))
                    .collect(),
            };
            if list.is_empty() {
                return Err(Error::IsolatedPoint(i));
            }
            neighbors.push(list);
        }
        Ok(Self { neighbors })
    }

    /// `g(x) = max_y |u(x) - u(y)| / d(x, y)` into `out`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        for (i, (list, g)) in self.neighbors.iter().zip(out.iter_mut()).enumerate() {
            let ui = u[i];
            *g = list
                .iter()
                .fold(0.0f64, |m, &(j, inv)| m.max((ui - u[j]).abs() * inv));
        }
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.apply(u, &mut out);
        out
    }
}

/// Discrete minimal upper gradient: the largest difference quotient over
/// the admissible neighbors of each point.
pub fn upper_gradient(
    space: &MetricMeasureSpace,
    u: &ScalarField,
    rule: NeighborRule,
) -> Result<ScalarField> {
    u.check(space)?;
    let stencil = GradientStencil::new(space, rule)?;
    ScalarField::new(space, stencil.gradient(u.values()))
}

/// `||u||W_p^1 = ||∇u||_p`.
pub fn sobolev_seminorm(
    space: &MetricMeasureSpace,
    u: &ScalarField,
    p: impl Into<Exponent>,
    rule: NeighborRule,
) -> Result<f64> {
    let p = p.into().validate()?;
    let g = upper_gradient(space, u, rule)?;
    lp_norm(space, &g, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusProfile {
    pub taus: Vec<f64>,
    pub omegas: Vec<f64>,
}

/// All pairs `(d(x,y), |u(x) - u(y)|)` sorted by distance, with running maxima.
pub(crate) struct PairOscillation {
    dists: Vec<f64>,
    running_max: Vec<f64>,
    tol: f64,
}

impl PairOscillation {
    pub(crate) fn new(space: &MetricMeasureSpace, values: &[f64]) -> Self {
        let n = space.len();
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push((space.dist(i, j), (values[i] - values[j]).abs()));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut running = 0.0f64;
        let running_max = pairs
            .iter()
            .map(|&(_, du)| {
                running = running.max(du);
                running
            })
            .collect();
        Self {
            dists: pairs.iter().map(|p| p.0).collect(),
            running_max,
            tol: METRIC_TOL * space.diam(),
        }
    }

    pub(crate) fn omega(&self, tau: f64) -> f64 {
        let k = self.dists.partition_point(|&d| d <= tau + self.tol);
        if k == 0 {
            0.0
        } else {
            self.running_max[k - 1]
        }
    }
}

/// `ω(u, τ) = sup_{d(x,y) ≤ τ} |u(x) - u(y)|` at each τ.
pub fn modulus_of_continuity(
    space: &MetricMeasureSpace,
    u: &ScalarField,
    taus: &[f64],
) -> Result<ModulusProfile> {
    u.check(space)?;
    if taus.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidGrid("radii must be nonnegative".into()));
    }
    if taus.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidGrid("radii must be sorted ascending".into()));
    }
    let osc = PairOscillation::new(space, u.values());
    Ok(ModulusProfile {
        taus: taus.to_vec(),
        omegas: taus.iter().map(|&t| osc.omega(t)).collect(),
    })
}

/// Smallest `L` with `|u(x) - u(y)| ≤ L d(x, y)`.
pub fn lipschitz_constant(space: &MetricMeasureSpace, u: &ScalarField) -> Result<f64> {
    u.check(space)?;
    let v = u.values();
    let mut best = 0.0f64;
    for i in 0..v.len() {
        for j in (i + 1)..v.len() {
            best = best.max((v[i] - v[j]).abs() / space.dist(i, j));
        }
    }
    Ok(best)
}

/// Indicator of a nonempty subset.
pub fn indicator_field(space: &MetricMeasureSpace, subset: &[usize]) -> Result<ScalarField> {
    if subset.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut values = vec![0.0; space.len()];
    for &i in subset {
        space.check_index(i)?;
        values[i] = 1.0;
    }
    ScalarField::new(space, values)
}
