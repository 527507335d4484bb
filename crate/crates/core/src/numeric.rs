//! Small numerical kernels shared by the norm and supremum code: compensated
//! summation, the exponent type, and the one-dimensional supremum engine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// A Lebesgue exponent in `[1, ∞]`. Infinity is a marker, never a large float.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exponent {
    Finite(f64),
    #[serde(with = "infinity_marker")]
    Infinity,
}

mod infinity_marker {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("inf")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "inf" | "infinity" | "Infinity" => Ok(()),
            other => Err(D::Error::custom(format!("expected \"inf\", got {other:?}"))),
        }
    }
}

impl Exponent {
    pub fn validate(self) -> Result<Self> {
        match self {
            Exponent::Finite(p) if !(p >= 1.0) || !p.is_finite() => Err(Error::InvalidExponent(p)),
            e => Ok(e),
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Exponent::Finite(p) => Some(p),
            Exponent::Infinity => None,
        }
    }
}

impl From<f64> for Exponent {
    /// `f64::INFINITY` maps to the marker; everything else is kept as is.
    fn from(p: f64) -> Self {
        if p == f64::INFINITY {
            Exponent::Infinity
        } else {
            Exponent::Finite(p)
        }
    }
}

/// Where a supremum over exponents was attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Argmax {
    /// At a concrete exponent of the window (possibly its closed lower end).
    At(f64),
    /// Approached as `p` tends to the upper end of the window.
    UpperLimit,
}

/// Grid size of the supremum engine.
pub const SUP_GRID_POINTS: usize = 512;
/// Exponent cap for scans over `(lo, ∞)`.
pub const P_CAP: f64 = 1e6;
const GOLDEN_RTOL: f64 = 1e-10;

/// A maximization problem `sup_{p ∈ [lo, hi)} exp(log_obj(p))`.
///
/// `lo_value` is the log objective at the closed lower end, `hi_limit` its
/// limit as `p → hi`. Either may be `-inf`. `knots` are extra exponents
/// evaluated exactly (breakpoints of tabulated weights).
pub struct SupProblem<'a> {
    pub lo: f64,
    pub hi: f64,
    pub log_obj: &'a dyn Fn(f64) -> f64,
    pub lo_value: f64,
    pub hi_limit: f64,
    pub knots: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct SupOutcome {
    pub log_value: f64,
    pub argmax: Argmax,
    /// `(p, log objective)` on the scan grid, ascending in `p`.
    pub samples: Vec<(f64, f64)>,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Grid coordinate. Finite windows use `p` itself, infinite windows use
/// `t = 1 - 1/p`, which maps `(lo, ∞)` onto a bounded interval.
#[derive(Clone, Copy)]
enum Chart {
    Direct,
    Reciprocal,
}

impl Chart {
    fn to_p(self, x: f64) -> f64 {
        match self {
            Chart::Direct => x,
            Chart::Reciprocal => 1.0 / (1.0 - x),
        }
    }

    fn chart_of(self, p: f64) -> f64 {
        match self {
            Chart::Direct => p,
            Chart::Reciprocal => 1.0 - 1.0 / p,
        }
    }
}

/// Points strictly inside `(a, b)`, log-uniformly spaced in their distance
/// to both ends so that blow-ups at either end are resolved.
fn two_sided_grid(a: f64, b: f64, count: usize) -> Vec<f64> {
    let width = b - a;
    let eps = (1e-6f64).min(width / 1000.0);
    let half = count / 2;
    let (lmin, lmax) = (eps.ln(), (width / 2.0).ln());
    let mut xs = Vec::with_capacity(count);
    for i in 0..half {
        let frac = i as f64 / (half - 1) as f64;
        let off = (lmin + frac * (lmax - lmin)).exp();
        xs.push(a + off);
        xs.push(b - off);
    }
    xs.retain(|x| *x > a && *x < b);
    xs.sort_by(|u, v| u.total_cmp(v));
    xs.dedup();
    xs
}

/// Golden-section maximization of `f` on `[a, b]`.
pub fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = sanitize(f(c));
    let mut fd = sanitize(f(d));
    for _ in 0..400 {
        if (b - a).abs() <= GOLDEN_RTOL * (a.abs().max(b.abs()).max(1e-300)) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = sanitize(f(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = sanitize(f(d));
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Grid scan followed by golden-section refinement of the best brackets.
pub fn maximize(problem: &SupProblem<'_>) -> SupOutcome {
    let SupProblem {
        lo,
        hi,
        log_obj,
        lo_value,
        hi_limit,
        knots,
    } = *problem;
    debug_assert!(lo < hi);

    let chart = if hi.is_finite() {
        Chart::Direct
    } else {
        Chart::Reciprocal
    };
    let x_lo = chart.chart_of(lo);
    let x_hi = if hi.is_finite() {
        hi
    } else {
        chart.chart_of(P_CAP.max(lo * 2.0))
    };
    let obj_x = |x: f64| sanitize(log_obj(chart.to_p(x)));

    let xs = two_sided_grid(x_lo, x_hi, SUP_GRID_POINTS);
    let samples: Vec<(f64, f64)> = xs.iter().map(|&x| (chart.to_p(x), obj_x(x))).collect();

    let mut best_val = sanitize(lo_value);
    let mut best_arg = Argmax::At(lo);
    let mut consider = |val: f64, arg: Argmax| {
        if val > best_val {
            best_val = val;
            best_arg = arg;
        }
    };

    for &(p, v) in &samples {
        consider(v, Argmax::At(p));
    }

    // Refine around the three best local maxima of the scan.
    let mut peaks: Vec<usize> = (0..samples.len())
        .filter(|&i| {
            let v = samples[i].1;
            let left = if i == 0 { lo_value } else { samples[i - 1].1 };
            let right = if i + 1 == samples.len() {
                hi_limit
            } else {
                samples[i + 1].1
            };
            v.is_finite() && v >= sanitize(left) && v >= sanitize(right)
        })
        .collect();
    peaks.sort_by(|&i, &j| samples[j].1.total_cmp(&samples[i].1).then(i.cmp(&j)));
    peaks.truncate(3);
    for i in peaks {
        let a = if i == 0 { x_lo } else { xs[i - 1] };
        let b = if i + 1 == xs.len() { x_hi } else { xs[i + 1] };
        let (x, v) = golden_max(&obj_x, a, b);
        consider(v, Argmax::At(chart.to_p(x)));
    }

    for &k in knots {
        if k >= lo && k < hi {
            consider(sanitize(log_obj(k)), Argmax::At(k));
        }
    }
    consider(sanitize(hi_limit), Argmax::UpperLimit);

    SupOutcome {
        log_value: best_val,
        argmax: best_arg,
        samples,
    }
}

/// Log-uniform grid of `count` points on `[a, b]`, endpoints included.
pub fn log_uniform(a: f64, b: f64, count: usize) -> Vec<f64> {
    assert!(a > 0.0 && b >= a && count >= 1);
    if count == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..count)
        .map(|i| {
            if i == count - 1 {
                b
            } else {
                (la + (lb - la) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

pub(crate) fn check_increasing(what: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid(format!("{what} contains non-finite values")));
    }
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidGrid(format!("{what} must be strictly increasing")));
    }
    Ok(())
}
