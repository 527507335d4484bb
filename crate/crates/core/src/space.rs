//! Finite metric measure spaces: construction, validation, balls and the
//! log-log order fit.

use std::sync::atomic::{AtomicU64, Ordering};

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Relative tolerance on distances, measured against the diameter.
pub const METRIC_TOL: f64 = 1e-12;
/// Default point cap for lattice builders.
pub const DEFAULT_SIZE_CAP: usize = 100_000;

static NEXT_SPACE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_SPACE_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
enum Distances {
    Dense(Vec<f64>),
    /// Regular lattice in `[0,1]^dim`; distances computed from coordinates.
    Lattice { side: usize, dim: usize, spacing: f64 },
}

/// A finite metric measure space `(X, μ, d)`.
///
/// Immutable after construction. Spaces built from edges (and lattices)
/// additionally remember their adjacency, which the `Edges` gradient rule uses.
#[derive(Debug, Clone)]
pub struct MetricMeasureSpace {
    id: u64,
    names: Vec<String>,
    dist: Distances,
    weights: Vec<f64>,
    total_mass: f64,
    diam: f64,
    adjacency: Option<Vec<Vec<(usize, f64)>>>,
}

impl MetricMeasureSpace {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match &self.dist {
            Distances::Dense(d) => d[i * self.len() + j],
            Distances::Lattice { side, dim, spacing } => {
                let (mut a, mut b) = (i, j);
                let mut acc = 0.0;
                for _ in 0..*dim {
                    let da = (a % side) as f64 - (b % side) as f64;
                    acc += da * da;
                    a /= side;
                    b /= side;
                }
                spacing * acc.sqrt()
            }
        }
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn diam(&self) -> f64 {
        self.diam
    }

    pub fn has_edges(&self) -> bool {
        self.adjacency.is_some()
    }

    /// Edge neighbors `(j, length)` of point `i`, if the space carries edges.
    pub fn edge_neighbors(&self, i: usize) -> Option<&[(usize, f64)]> {
        self.adjacency.as_ref().map(|adj| adj[i].as_slice())
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            })
        }
    }

    /// Same points and metric, measure rescaled to total mass 1.
    pub fn normalized(&self) -> Self {
        let scale = 1.0 / self.total_mass;
        let weights: Vec<f64> = self.weights.iter().map(|w| w * scale).collect();
        let total_mass = compensated_sum(weights.iter().copied());
        Self {
            weights,
            total_mass,
            ..self.clone()
        }
    }

    /// Same points and metric, measure multiplied by `factor`.
    pub fn with_scaled_measure(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::NonPositiveInput {
                what: "measure scale",
                index: 0,
                value: factor,
            });
        }
        let weights: Vec<f64> = self.weights.iter().map(|w| w * factor).collect();
        let total_mass = compensated_sum(weights.iter().copied());
        Ok(Self {
            weights,
            total_mass,
            ..self.clone()
        })
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass - 1.0).abs() <= 1e-12
    }

    /// Smallest nonzero distance.
    pub fn min_positive_distance(&self) -> f64 {
        match &self.dist {
            Distances::Lattice { spacing, .. } => *spacing,
            Distances::Dense(d) => d
                .iter()
                .copied()
                .filter(|&x| x > 0.0)
                .fold(f64::INFINITY, f64::min),
        }
    }

    fn assemble(
        names: Vec<String>,
        dist: Distances,
        weights: Vec<f64>,
        adjacency: Option<Vec<Vec<(usize, f64)>>>,
        normalize: bool,
    ) -> Result<Self> {
        let n = weights.len();
        for (index, &w) in weights.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::NonPositiveInput {
                    what: "weight",
                    index,
                    value: w,
                });
            }
        }
        let diam = match &dist {
            Distances::Dense(d) => d.iter().copied().fold(0.0, f64::max),
            Distances::Lattice { side, dim, spacing } => {
                spacing * (*side as f64 - 1.0) * (*dim as f64).sqrt()
            }
        };
        if !(diam > 0.0 && diam.is_finite()) {
            return Err(Error::InvalidSpace(format!("diameter must be positive and finite, got {diam}")));
        }
        let total_mass = compensated_sum(weights.iter().copied());
        let names = if names.is_empty() {
            (0..n).map(|i| i.to_string()).collect()
        } else {
            names
        };
        let space = Self {
            id: fresh_id(),
            names,
            dist,
            weights,
            total_mass,
            diam,
            adjacency,
        };
        Ok(if normalize { space.normalized() } else { space })
    }
}

/// Builds the shortest-path metric of a connected weighted graph.
pub fn build_from_edges(
    n: usize,
    edges: &[(usize, usize, f64)],
    weights: &[f64],
) -> Result<MetricMeasureSpace> {
    build_from_edges_named(Vec::new(), n, edges, weights, false)
}

fn build_from_edges_named(
    names: Vec<String>,
    n: usize,
    edges: &[(usize, usize, f64)],
    weights: &[f64],
    normalize: bool,
) -> Result<MetricMeasureSpace> {
    if n < 2 {
        return Err(Error::InvalidSpace(format!("need at least 2 points, got {n}")));
    }
    if weights.len() != n {
        return Err(Error::InvalidSpace(format!(
            "{} weights for {n} points",
            weights.len()
        )));
    }
    let mut graph: UnGraph<(), f64> = UnGraph::with_capacity(n, edges.len());
    let nodes: Vec<NodeIndex> = (0..n).map(|_| graph.add_node(())).collect();
    let mut adjacency = vec![Vec::new(); n];
    for (index, &(i, j, len)) in edges.iter().enumerate() {
        for k in [i, j] {
            if k >= n {
                return Err(Error::IndexOutOfRange { index: k, len: n });
            }
        }
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::NonPositiveInput {
                what: "edge length",
                index,
                value: len,
            });
        }
        if i == j {
            continue;
        }
        graph.add_edge(nodes[i], nodes[j], len);
        adjacency[i].push((j, len));
        adjacency[j].push((i, len));
    }

    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|src| {
            let reached = dijkstra(&graph, nodes[src], None, |e| *e.weight());
            let mut row = vec![0.0; n];
            for (dst, slot) in row.iter_mut().enumerate() {
                *slot = *reached.get(&nodes[dst]).ok_or(Error::DisconnectedGraph {
                    from: src,
                    to: dst,
                })?;
            }
            Ok(row)
        })
        .collect();
    let mut dist = Vec::with_capacity(n * n);
    for row in rows {
        dist.extend(row?);
    }
    // Dijkstra sums edges in path order, so symmetrize exactly.
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist[i * n + j].min(dist[j * n + i]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    MetricMeasureSpace::assemble(
        names,
        Distances::Dense(dist),
        weights.to_vec(),
        Some(adjacency),
        normalize,
    )
}

/// Validates an explicit distance matrix. Violations are reported, never repaired.
pub fn build_from_matrix(
    names: Vec<String>,
    matrix: &[Vec<f64>],
    weights: &[f64],
    normalize: bool,
) -> Result<MetricMeasureSpace> {
    let n = matrix.len();
    if n < 2 {
        return Err(Error::InvalidSpace(format!("need at least 2 points, got {n}")));
    }
    if weights.len() != n {
        return Err(Error::InvalidSpace(format!(
            "{} weights for {n} points",
            weights.len()
        )));
    }
    if let Some(row) = matrix.iter().position(|r| r.len() != n) {
        return Err(Error::InvalidSpace(format!("distance row {row} is not of length {n}")));
    }
    let mut dist = Vec::with_capacity(n * n);
    for (i, row) in matrix.iter().enumerate() {
        for (j, &d) in row.iter().enumerate() {
            if i == j {
                if d != 0.0 {
                    return Err(Error::InvalidSpace(format!("d({i},{i}) = {d}, expected 0")));
                }
            } else if !(d > 0.0 && d.is_finite()) {
                return Err(Error::NonPositiveInput {
                    what: "off-diagonal distance",
                    index: i * n + j,
                    value: d,
                });
            }
            dist.push(d);
        }
    }
    let diam = dist.iter().copied().fold(0.0, f64::max);
    let tol = METRIC_TOL * diam;
    for i in 0..n {
        for j in (i + 1)..n {
            if (dist[i * n + j] - dist[j * n + i]).abs() > tol {
                return Err(Error::InvalidSpace(format!(
                    "asymmetric distances d({i},{j}) = {} vs d({j},{i}) = {}",
                    dist[i * n + j],
                    dist[j * n + i]
                )));
            }
        }
    }
    for i in 0..n {
        for k in (i + 1)..n {
            let direct = dist[i * n + k];
            for via in 0..n {
                if via == i || via == k {
                    continue;
                }
                let detour = dist[i * n + via] + dist[via * n + k];
                if direct > detour + tol {
                    return Err(Error::MetricViolation {
                        i,
                        k,
                        via,
                        direct,
                        detour,
                    });
                }
            }
        }
    }
    MetricMeasureSpace::assemble(names, Distances::Dense(dist), weights.to_vec(), None, normalize)
}

/// Regular lattice in `[0,1]^dim` with `n` points per side and Euclidean distance.
pub fn build_interval_grid(n: usize, dim: usize, normalize_measure: bool) -> Result<MetricMeasureSpace> {
    build_interval_grid_capped(n, dim, normalize_measure, DEFAULT_SIZE_CAP)
}

pub fn build_interval_grid_capped(
    n: usize,
    dim: usize,
    normalize_measure: bool,
    cap: usize,
) -> Result<MetricMeasureSpace> {
    if n < 2 {
        return Err(Error::InvalidSpace(format!("need at least 2 points per side, got {n}")));
    }
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidSpace(format!("dimension must be 1, 2 or 3, got {dim}")));
    }
    let total = (0..dim).try_fold(1usize, |acc, _| acc.checked_mul(n));
    let total = match total {
        Some(t) if t <= cap => t,
        _ => {
            return Err(Error::SizeOverflow {
                requested: total.unwrap_or(usize::MAX),
                cap,
            })
        }
    };
    let spacing = 1.0 / (n as f64 - 1.0);
    let cell = spacing.powi(dim as i32);
    let mut adjacency = vec![Vec::new(); total];
    let mut stride = 1;
    for _ in 0..dim {
        for (idx, adj) in adjacency.iter_mut().enumerate() {
            let coord = (idx / stride) % n;
            if coord > 0 {
                adj.push((idx - stride, spacing));
            }
            if coord + 1 < n {
                adj.push((idx + stride, spacing));
            }
        }
        stride *= n;
    }
    MetricMeasureSpace::assemble(
        Vec::new(),
        Distances::Lattice {
            side: n,
            dim,
            spacing,
        },
        vec![cell; total],
        Some(adjacency),
        normalize_measure,
    )
}

/// JSON space descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDescriptor {
    #[serde(default)]
    pub points: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize, f64)>>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub normalize_measure: bool,
}

impl SpaceDescriptor {
    pub fn build(&self) -> Result<MetricMeasureSpace> {
        let names = self.points.clone();
        let n = self.weights.len();
        if !names.is_empty() && names.len() != n {
            return Err(Error::Parse(format!(
                "{} point names for {n} weights",
                names.len()
            )));
        }
        match (&self.dist_matrix, &self.edges) {
            (Some(m), None) => build_from_matrix(names, m, &self.weights, self.normalize_measure),
            (None, Some(e)) => build_from_edges_named(names, n, e, &self.weights, self.normalize_measure),
            _ => Err(Error::Parse(
                "descriptor needs exactly one of `dist_matrix` or `edges`".into(),
            )),
        }
    }
}

/// Parses a JSON space descriptor and builds the space.
pub fn load_space(descriptor: &str) -> Result<MetricMeasureSpace> {
    let desc: SpaceDescriptor =
        serde_json::from_str(descriptor).map_err(|e| Error::Parse(e.to_string()))?;
    desc.build()
}

/// `μ(B(center, r))` for the closed ball `{y : d(center, y) ≤ r}`.
pub fn ball_measure(space: &MetricMeasureSpace, center: usize, r: f64) -> Result<f64> {
    space.check_index(center)?;
    if !(r >= 0.0) {
        return Err(Error::OutOfDomain {
            value: r,
            domain: "radius >= 0".into(),
        });
    }
    let reach = r + METRIC_TOL * space.diam();
    Ok(compensated_sum(
        (0..space.len())
            .filter(|&y| space.dist(center, y) <= reach)
            .map(|y| space.weight(y)),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSample {
    pub center: usize,
    pub radius: f64,
    pub mass: f64,
}

/// Pooled log-log fit of ball masses `C r^s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub s: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    pub fit_residual: f64,
    pub samples: Vec<BallSample>,
    /// False when the fitted slope is not above 1; the slope is still reported.
    pub exceeds_one: bool,
}

pub fn estimate_order(
    space: &MetricMeasureSpace,
    radii: &[f64],
    centers: &[usize],
) -> Result<OrderEstimate> {
    let mut distinct: Vec<f64> = radii.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InsufficientSamples(format!(
            "need at least 3 distinct radii, got {}",
            distinct.len()
        )));
    }
    if centers.is_empty() {
        return Err(Error::InsufficientSamples("need at least one center".into()));
    }
    if let Some(&r) = distinct.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::OutOfDomain {
            value: r,
            domain: "radius > 0".into(),
        });
    }
    let mut samples = Vec::with_capacity(distinct.len() * centers.len());
    for &center in centers {
        for &radius in &distinct {
            samples.push(BallSample {
                center,
                radius,
                mass: ball_measure(space, center, radius)?,
            });
        }
    }
    let first = samples[0].mass;
    if samples.iter().all(|s| s.mass == first) {
        return Err(Error::DegenerateRadii);
    }

    let xs: Vec<f64> = samples.iter().map(|s| s.radius.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.mass.ln()).collect();
    let m = xs.len() as f64;
    let x_mean = compensated_sum(xs.iter().copied()) / m;
    let y_mean = compensated_sum(ys.iter().copied()) / m;
    let sxx = compensated_sum(xs.iter().map(|x| (x - x_mean).powi(2)));
    let sxy = compensated_sum(xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)));
    if sxx == 0.0 {
        return Err(Error::DegenerateRadii);
    }
    let s = sxy / sxx;
    let intercept = y_mean - s * x_mean;
    let offsets: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - s * x).collect();
    let c_lower = offsets.iter().copied().fold(f64::INFINITY, f64::min).exp();
    let c_upper = offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp();
    let fit_residual =
        (compensated_sum(offsets.iter().map(|o| (o - intercept).powi(2))) / m).sqrt();
    Ok(OrderEstimate {
        s,
        c_lower,
        c_upper,
        fit_residual,
        samples,
        exceeds_one: s > 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> MetricMeasureSpace {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        build_from_edges(n, &edges, &vec![1.0; n]).unwrap()
    }

    #[test]
    fn single_edge() {
        let s = build_from_edges(2, &[(0, 1, 1.0)], &[0.5, 0.5]).unwrap();
        assert_eq!(s.dist(0, 1), 1.0);
        assert_eq!(s.diam(), 1.0);
        assert_eq!(s.total_mass(), 1.0);
    }

    #[test]
    fn unit_path() {
        let s = path(3);
        assert_eq!(s.dist(0, 2), 2.0);
        assert_eq!(s.diam(), 2.0);
        assert_eq!(s.total_mass(), 3.0);
    }

    #[test]
    fn shortest_path_wins() {
        let s = build_from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 5.0)], &[1.0; 3]).unwrap();
        assert_eq!(s.dist(0, 2), 2.0);
    }

    #[test]
    fn disconnected_and_nonpositive() {
        let err = build_from_edges(3, &[(0, 1, 1.0)], &[1.0; 3]).unwrap_err();
        assert!(matches!(err, Error::DisconnectedGraph { .. }));
        let err = build_from_edges(2, &[(0, 1, 0.0)], &[1.0; 2]).unwrap_err();
        assert!(matches!(err, Error::NonPositiveInput { what: "edge length", .. }));
        let err = build_from_edges(2, &[(0, 1, 1.0)], &[1.0, -1.0]).unwrap_err();
        assert!(matches!(err, Error::NonPositiveInput { what: "weight", .. }));
    }

    #[test]
    fn interval_grids() {
        let s = build_interval_grid(2, 1, true).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dist(0, 1), 1.0);
        assert_eq!(s.weights(), &[0.5, 0.5]);

        let s = build_interval_grid(3, 1, true).unwrap();
        assert_eq!(s.diam(), 1.0);
        assert!((s.total_mass() - 1.0).abs() < 1e-15);

        let s = build_interval_grid(3, 2, true).unwrap();
        assert_eq!(s.len(), 9);
        assert!((s.diam() - 2f64.sqrt()).abs() < 1e-15);
        assert!((s.dist(0, 8) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn grid_size_cap() {
        let err = build_interval_grid_capped(50, 3, true, 1000).unwrap_err();
        assert!(matches!(err, Error::SizeOverflow { requested: 125_000, cap: 1000 }));
    }

    #[test]
    fn load_matrix_descriptor() {
        let s = load_space(r#"{"points":["a","b"],"dist_matrix":[[0,1],[1,0]],"weights":[1,1]}"#).unwrap();
        assert_eq!(s.diam(), 1.0);
        assert_eq!(s.names(), &["a", "b"]);
    }

    #[test]
    fn load_rejects_triangle_violation() {
        let err = load_space(
            r#"{"points":["a","b","c"],"dist_matrix":[[0,1,5],[1,0,1],[5,1,0]],"weights":[1,1,1]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MetricViolation { i: 0, k: 2, via: 1, .. }), "{err:?}");
    }

    #[test]
    fn load_rejects_zero_weight_and_bad_shape() {
        let err = load_space(r#"{"points":["a","b"],"dist_matrix":[[0,1],[1,0]],"weights":[1,0]}"#).unwrap_err();
        assert!(matches!(err, Error::NonPositiveInput { .. }));
        let err = load_space(r#"{"points":["a","b"],"weights":[1,1]}"#).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        let err = load_space("{not json").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn loader_keeps_full_precision() {
        let s = load_space(
            r#"{"points":["a","b"],"dist_matrix":[[0,0.12345678901234567],[0.12345678901234567,0]],"weights":[0.30000000000000004,1]}"#,
        )
        .unwrap();
        assert_eq!(s.dist(0, 1), 0.123_456_789_012_345_67);
        assert_eq!(s.weight(0), 0.300_000_000_000_000_04);
    }

    #[test]
    fn balls() {
        let two = build_from_edges(2, &[(0, 1, 1.0)], &[0.5, 0.5]).unwrap();
        assert_eq!(ball_measure(&two, 0, 0.5).unwrap(), 0.5);
        assert_eq!(ball_measure(&two, 0, 1.0).unwrap(), 1.0);
        assert_eq!(ball_measure(&path(3), 1, 1.0).unwrap(), 3.0);
        assert!(ball_measure(&two, 2, 1.0).is_err());
    }

    #[test]
    fn tree_distances_are_hop_counts() {
        // Star with a tail: 0-1, 0-2, 0-3, 3-4.
        let s = build_from_edges(5, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (3, 4, 1.0)], &[1.0; 5]).unwrap();
        assert_eq!(s.dist(1, 2), 2.0);
        assert_eq!(s.dist(1, 4), 3.0);
        assert_eq!(s.dist(4, 0), 2.0);
    }

    #[test]
    fn order_of_a_long_path() {
        let s = path(512);
        let centers: Vec<usize> = (200..312).step_by(8).collect();
        let est = estimate_order(&s, &[4.0, 8.0, 16.0, 32.0, 64.0], &centers).unwrap();
        assert!((0.8..=1.2).contains(&est.s), "s = {}", est.s);
        assert!(est.c_lower <= est.c_upper);
        assert!(est.samples.iter().all(|b| b.mass > 0.0 && b.mass <= s.total_mass()));
    }

    #[test]
    fn order_of_a_square_grid() {
        let s = build_interval_grid(64, 2, false).unwrap();
        let h = 1.0 / 63.0;
        let centers: Vec<usize> = [(31, 31), (32, 32), (30, 33)].iter().map(|(x, y)| x + 64 * y).collect();
        let radii: Vec<f64> = [2.0, 4.0, 8.0, 16.0, 28.0].iter().map(|r| r * h).collect();
        let est = estimate_order(&s, &radii, &centers).unwrap();
        assert!((1.7..=2.3).contains(&est.s), "s = {}", est.s);
        assert!(est.exceeds_one);
    }

    #[test]
    fn order_degenerate_and_insufficient() {
        let s = path(5);
        assert_eq!(estimate_order(&s, &[4.0, 5.0, 6.0], &[0]).unwrap_err(), Error::DegenerateRadii);
        assert!(matches!(
            estimate_order(&s, &[1.0, 2.0], &[0]).unwrap_err(),
            Error::InsufficientSamples(_)
        ));
        assert!(matches!(
            estimate_order(&s, &[1.0, 2.0, 3.0], &[]).unwrap_err(),
            Error::InsufficientSamples(_)
        ));
    }
}
