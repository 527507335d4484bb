//! Bilateral grand Lebesgue norms `||f||Gψ = sup_p ||f||_p / ψ(p)`, their
//! fundamental functions, natural functions of families, and the small-mass
//! asymptotics of the two standard ψ families.

use serde::{Deserialize, Serialize};

use crate::calculus::{LpEvaluator, ScalarField};
use crate::error::{Error, Result};
use crate::numeric::{check_increasing, maximize, Argmax, Exponent, SupProblem};
use crate::space::MetricMeasureSpace;

/// Cap on grand norm values before reporting divergence.
pub const VALUE_CAP: f64 = 1e300;

/// A positive weight on an exponent interval `[lower, b)`.
///
/// Values may be `+inf` (the spike convention `C/∞ = 0`).
pub trait ExponentWeight: Sync {
    fn lower(&self) -> f64;
    /// Right end of the domain (`supp ψ`), possibly `+inf`.
    fn upper(&self) -> f64;
    fn value(&self, p: f64) -> f64;
    /// `lim_{p → upper} value(p)`, possibly `+inf`.
    fn upper_limit(&self) -> f64;
    /// The single exponent where a spike weight is finite.
    fn spike(&self) -> Option<f64> {
        None
    }
    /// Breakpoints of piecewise definitions.
    fn knots(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Interpolation between the knots of a tabulated ψ.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interp {
    /// `ln ψ` linear in `1/p`. Since `ln ||f||_p` is convex in `1/p`, a
    /// natural function interpolated this way still dominates every member.
    #[default]
    LogLinear,
    /// Constant from each knot up to the next one.
    Step,
}

/// Generator ψ of a grand Lebesgue space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiSpec {
    /// `(b - p)^{-β}` on `[1, b)`.
    PowerBlowup { b: f64, beta: f64 },
    /// `p^β` on `[1, ∞)`.
    PolynomialGrowth { beta: f64 },
    /// 1 at `p = r`, `+inf` elsewhere.
    Spike { r: f64 },
    /// `value` on `[1, b)`; `b` absent means `∞`.
    Constant {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<f64>,
    },
    /// Values at knots `p`, domain `[p_0, p_last]`.
    Tabulated {
        p: Vec<f64>,
        values: Vec<f64>,
        #[serde(default)]
        interp: Interp,
    },
}

impl PsiSpec {
    pub fn power_blowup(b: f64, beta: f64) -> Result<Self> {
        Self::PowerBlowup { b, beta }.validated()
    }

    pub fn polynomial_growth(beta: f64) -> Result<Self> {
        Self::PolynomialGrowth { beta }.validated()
    }

    pub fn spike(r: f64) -> Result<Self> {
        Self::Spike { r }.validated()
    }

    pub fn constant(value: f64, b: Option<f64>) -> Result<Self> {
        Self::Constant { value, b }.validated()
    }

    pub fn tabulated(p: Vec<f64>, values: Vec<f64>, interp: Interp) -> Result<Self> {
        Self::Tabulated { p, values, interp }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPsi(msg));
        match self {
            PsiSpec::PowerBlowup { b, beta } => {
                if !(b.is_finite() && *b > 1.0) {
                    return bad(format!("power_blowup needs finite b > 1, got {b}"));
                }
                if !(beta.is_finite() && *beta > 0.0) {
                    return bad(format!("power_blowup needs beta > 0, got {beta}"));
                }
            }
            PsiSpec::PolynomialGrowth { beta } => {
                if !(beta.is_finite() && *beta > 0.0) {
                    return bad(format!("polynomial_growth needs beta > 0, got {beta}"));
                }
            }
            PsiSpec::Spike { r } => {
                if !(r.is_finite() && *r >= 1.0) {
                    return bad(format!("spike needs finite r >= 1, got {r}"));
                }
            }
            PsiSpec::Constant { value, b } => {
                if !(value.is_finite() && *value > 0.0) {
                    return bad(format!("constant needs a positive value, got {value}"));
                }
                if let Some(b) = b {
                    if !(*b > 1.0) {
                        return bad(format!("constant needs b > 1, got {b}"));
                    }
                }
            }
            PsiSpec::Tabulated { p, values, .. } => {
                if p.len() < 2 || p.len() != values.len() {
                    return bad(format!(
                        "tabulated needs matching p/values of length >= 2, got {}/{}",
                        p.len(),
                        values.len()
                    ));
                }
                check_increasing("tabulated p", p).or_else(|e| bad(e.to_string()))?;
                if p[0] < 1.0 {
                    return bad(format!("tabulated p must start at >= 1, got {}", p[0]));
                }
                if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    return bad(format!("tabulated values must be positive and finite, got {v}"));
                }
            }
        }
        Ok(())
    }

    /// `supp ψ`.
    pub fn support(&self) -> f64 {
        self.upper()
    }

    fn tabulated_value(p: &[f64], values: &[f64], interp: Interp, x: f64) -> f64 {
        let k = p.partition_point(|&q| q <= x);
        if k == 0 {
            return values[0];
        }
        if k == p.len() {
            return values[p.len() - 1];
        }
        let (i, j) = (k - 1, k);
        match interp {
            Interp::Step => values[i],
            Interp::LogLinear => {
                let (ti, tj, tx) = (1.0 / p[i], 1.0 / p[j], 1.0 / x);
                let frac = (tx - ti) / (tj - ti);
                (values[i].ln() + frac * (values[j].ln() - values[i].ln())).exp()
            }
        }
    }
}

impl ExponentWeight for PsiSpec {
    fn lower(&self) -> f64 {
        match self {
            PsiSpec::Tabulated { p, .. } => p[0],
            _ => 1.0,
        }
    }

    fn upper(&self) -> f64 {
        match self {
            PsiSpec::PowerBlowup { b, .. } => *b,
            PsiSpec::PolynomialGrowth { .. } | PsiSpec::Spike { .. } => f64::INFINITY,
            PsiSpec::Constant { b, .. } => b.unwrap_or(f64::INFINITY),
            PsiSpec::Tabulated { p, .. } => p[p.len() - 1],
        }
    }

    fn value(&self, x: f64) -> f64 {
        match self {
            PsiSpec::PowerBlowup { b, beta } => (b - x).powf(-beta),
            PsiSpec::PolynomialGrowth { beta } => x.powf(*beta),
            PsiSpec::Spike { r } => {
                if x == *r {
                    1.0
                } else {
                    f64::INFINITY
                }
            }
            PsiSpec::Constant { value, .. } => *value,
            PsiSpec::Tabulated { p, values, interp } => Self::tabulated_value(p, values, *interp, x),
        }
    }

    fn upper_limit(&self) -> f64 {
        match self {
            PsiSpec::PowerBlowup { .. } | PsiSpec::PolynomialGrowth { .. } | PsiSpec::Spike { .. } => {
                f64::INFINITY
            }
            PsiSpec::Constant { value, .. } => *value,
            PsiSpec::Tabulated { values, .. } => values[values.len() - 1],
        }
    }

    fn spike(&self) -> Option<f64> {
        match self {
            PsiSpec::Spike { r } => Some(*r),
            _ => None,
        }
    }

    fn knots(&self) -> Vec<f64> {
        match self {
            PsiSpec::Tabulated { p, .. } => p.clone(),
            _ => Vec::new(),
        }
    }
}

/// `ψ(p)`, checked against the domain `[lower, b)` (`[p_0, p_last]` when tabulated).
pub fn eval_psi(psi: &PsiSpec, p: f64) -> Result<f64> {
    let inside = match psi {
        PsiSpec::Spike { .. } => p >= 1.0 && p.is_finite(),
        PsiSpec::Tabulated { .. } => p >= psi.lower() && p <= psi.upper(),
        _ => p >= psi.lower() && p < psi.upper(),
    };
    if !inside {
        return Err(Error::OutOfDomain {
            value: p,
            domain: format!("[{}, {})", psi.lower(), psi.upper()),
        });
    }
    Ok(psi.value(p))
}

/// Pointwise product of two weights on the intersection of their domains.
pub struct Product<'a> {
    pub left: &'a dyn ExponentWeight,
    pub right: &'a dyn ExponentWeight,
}

impl ExponentWeight for Product<'_> {
    fn lower(&self) -> f64 {
        self.left.lower().max(self.right.lower())
    }
    fn upper(&self) -> f64 {
        self.left.upper().min(self.right.upper())
    }
    fn value(&self, p: f64) -> f64 {
        self.left.value(p) * self.right.value(p)
    }
    fn upper_limit(&self) -> f64 {
        let hi = self.upper();
        let side = |w: &dyn ExponentWeight| {
            if w.upper() > hi {
                w.value(hi)
            } else {
                w.upper_limit()
            }
        };
        side(self.left) * side(self.right)
    }
    fn spike(&self) -> Option<f64> {
        match (self.left.spike(), self.right.spike()) {
            (Some(a), Some(b)) if a != b => Some(f64::NAN),
            (a, b) => a.or(b),
        }
    }
    fn knots(&self) -> Vec<f64> {
        let mut k = self.left.knots();
        k.extend(self.right.knots());
        k.sort_by(f64::total_cmp);
        k.dedup();
        k
    }
}

/// A weight restricted to `[lo, hi) ∩ domain`.
pub struct Window<'a> {
    pub inner: &'a dyn ExponentWeight,
    pub lo: f64,
    pub hi: f64,
}

impl ExponentWeight for Window<'_> {
    fn lower(&self) -> f64 {
        self.lo.max(self.inner.lower())
    }
    fn upper(&self) -> f64 {
        self.hi.min(self.inner.upper())
    }
    fn value(&self, p: f64) -> f64 {
        self.inner.value(p)
    }
    fn upper_limit(&self) -> f64 {
        let hi = self.upper();
        if hi < self.inner.upper() {
            self.inner.value(hi)
        } else {
            self.inner.upper_limit()
        }
    }
    fn spike(&self) -> Option<f64> {
        self.inner.spike()
    }
    fn knots(&self) -> Vec<f64> {
        self.inner.knots()
    }
}

/// A weight given by a closure, e.g. `p ↦ K_L(s, p)`.
pub struct FnWeight<F: Fn(f64) -> f64 + Sync> {
    pub lower: f64,
    pub upper: f64,
    pub f: F,
    pub upper_limit: f64,
    pub knots: Vec<f64>,
}

impl<F: Fn(f64) -> f64 + Sync> ExponentWeight for FnWeight<F> {
    fn lower(&self) -> f64 {
        self.lower
    }
    fn upper(&self) -> f64 {
        self.upper
    }
    fn value(&self, p: f64) -> f64 {
        (self.f)(p)
    }
    fn upper_limit(&self) -> f64 {
        self.upper_limit
    }
    fn knots(&self) -> Vec<f64> {
        self.knots.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrandNormResult {
    pub value: f64,
    pub argmax: Argmax,
    /// Scan samples `(p, ||f||_p / ψ(p))`.
    pub profile: Vec<(f64, f64)>,
}

/// Supremum of `exp(ln_num(p)) / w(p)` over the domain of `w`.
///
/// `ln_num` must accept the infinity marker when `w` has an infinite domain.
pub(crate) fn sup_over_weight(
    w: &dyn ExponentWeight,
    ln_num: &dyn Fn(Exponent) -> f64,
) -> Result<GrandNormResult> {
    let (lo, hi) = (w.lower(), w.upper());
    if let Some(r) = w.spike() {
        if r.is_nan() || r < lo || r > hi || (r == hi && hi.is_infinite()) {
            return Ok(GrandNormResult {
                value: 0.0,
                argmax: Argmax::At(lo),
                profile: Vec::new(),
            });
        }
        let value = (ln_num(Exponent::Finite(r)) - w.value(r).ln()).exp();
        return Ok(GrandNormResult {
            value,
            argmax: Argmax::At(r),
            profile: vec![(r, value)],
        });
    }
    if !(lo < hi) {
        return Err(Error::OutOfDomain {
            value: lo,
            domain: format!("empty exponent window [{lo}, {hi})"),
        });
    }
    let log_obj = |p: f64| ln_num(Exponent::Finite(p)) - w.value(p).ln();
    let hi_num = if hi.is_finite() {
        ln_num(Exponent::Finite(hi))
    } else {
        ln_num(Exponent::Infinity)
    };
    let knots = w.knots();
    let out = maximize(&SupProblem {
        lo,
        hi,
        log_obj: &log_obj,
        lo_value: log_obj(lo),
        hi_limit: hi_num - w.upper_limit().ln(),
        knots: &knots,
    });
    let value = out.log_value.exp();
    if value > VALUE_CAP {
        return Err(Error::NormDiverged { cap: VALUE_CAP });
    }
    Ok(GrandNormResult {
        value,
        argmax: out.argmax,
        profile: out.samples.into_iter().map(|(p, v)| (p, v.exp())).collect(),
    })
}

/// `||f||Gψ` over the whole domain of the weight.
pub fn bgls_norm(
    space: &MetricMeasureSpace,
    f: &ScalarField,
    psi: &dyn ExponentWeight,
) -> Result<GrandNormResult> {
    let eval = LpEvaluator::for_field(space, f)?;
    bgls_norm_of(&eval, psi)
}

pub(crate) fn bgls_norm_of(eval: &LpEvaluator, psi: &dyn ExponentWeight) -> Result<GrandNormResult> {
    if eval.is_zero() {
        return Ok(GrandNormResult {
            value: 0.0,
            argmax: Argmax::At(psi.lower()),
            profile: Vec::new(),
        });
    }
    if let Some(r) = psi.spike() {
        if r.is_finite() && r >= psi.lower() && r < psi.upper() {
            // Exact L_r recovery, no log round trip.
            let value = eval.norm(Exponent::Finite(r)) / psi.value(r);
            return Ok(GrandNormResult {
                value,
                argmax: Argmax::At(r),
                profile: vec![(r, value)],
            });
        }
    }
    sup_over_weight(psi, &|p| eval.ln_norm(p))
}

/// `φ(δ, Gψ) = sup_p δ^{1/p} / ψ(p)`.
pub fn fundamental_function(psi: &dyn ExponentWeight, delta: f64) -> Result<f64> {
    Ok(fundamental_function_full(psi, delta)?.value)
}

pub fn fundamental_function_full(psi: &dyn ExponentWeight, delta: f64) -> Result<GrandNormResult> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::OutOfDomain {
            value: delta,
            domain: "delta > 0".into(),
        });
    }
    let ln_delta = delta.ln();
    sup_over_weight(psi, &|p| match p {
        Exponent::Finite(p) => ln_delta / p,
        Exponent::Infinity => 0.0,
    })
}

/// Cap on natural-function values.
pub const FAMILY_CAP: f64 = 1e300;

/// `ψ_F(p) = sup_α ||f_α||_p` tabulated on `p_grid`.
pub fn natural_function(
    space: &MetricMeasureSpace,
    fields: &[ScalarField],
    p_grid: &[f64],
) -> Result<PsiSpec> {
    if fields.is_empty() {
        return Err(Error::EmptyFamily);
    }
    if p_grid.len() < 2 {
        return Err(Error::InvalidGrid("natural function needs at least 2 exponents".into()));
    }
    check_increasing("p grid", p_grid)?;
    if p_grid[0] < 1.0 {
        return Err(Error::InvalidExponent(p_grid[0]));
    }
    let evals = fields
        .iter()
        .map(|f| LpEvaluator::for_field(space, f))
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        let v = evals
            .iter()
            .map(|e| e.norm(Exponent::Finite(p)))
            .fold(0.0f64, f64::max);
        if !(v <= FAMILY_CAP) {
            return Err(Error::UnboundedFamily { p });
        }
        if v == 0.0 {
            return Err(Error::InvalidPsi(format!(
                "every member vanishes, natural function is zero at p = {p}"
            )));
        }
        values.push(v);
    }
    PsiSpec::tabulated(p_grid.to_vec(), values, Interp::LogLinear)
}

/// The ψ families with closed-form small-mass asymptotics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AsymptoticFamily {
    PowerBlowup { b: f64, beta: f64 },
    PolynomialGrowth { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticComparison {
    pub computed: f64,
    /// `(βb²/e)^β δ^{1/b} |ln δ|^{-β}` or `β^β |ln δ|^{-β}`.
    pub predicted: f64,
    pub ratio: f64,
    /// For polynomial growth, the exact interior-maximizer value
    /// `(β/e)^β |ln δ|^{-β}`; `None` for the blow-up family.
    pub stationary: Option<f64>,
}

/// Compares `φ(δ, Gψ)` with the leading small-δ asymptotic of its family.
pub fn asymptotic_ratio(family: AsymptoticFamily, delta: f64) -> Result<AsymptoticComparison> {
    if !(delta > 0.0 && delta < (-1.0f64).exp()) {
        return Err(Error::OutOfDomain {
            value: delta,
            domain: "(0, 1/e)".into(),
        });
    }
    let l = -delta.ln();
    let (psi, predicted, stationary) = match family {
        AsymptoticFamily::PowerBlowup { b, beta } => (
            PsiSpec::power_blowup(b, beta)?,
            (beta * b * b / std::f64::consts::E).powf(beta) * delta.powf(1.0 / b) * l.powf(-beta),
            None,
        ),
        AsymptoticFamily::PolynomialGrowth { beta } => (
            PsiSpec::polynomial_growth(beta)?,
            beta.powf(beta) * l.powf(-beta),
            Some((beta / std::f64::consts::E).powf(beta) * l.powf(-beta)),
        ),
    };
    let computed = fundamental_function(&psi, delta)?;
    Ok(AsymptoticComparison {
        computed,
        predicted,
        ratio: computed / predicted,
        stationary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{indicator_field, lp_norm};
    use crate::space::{build_from_edges, build_interval_grid};

    #[test]
    fn psi_families() {
        let pb = PsiSpec::power_blowup(2.0, 1.0).unwrap();
        assert_eq!(eval_psi(&pb, 1.5).unwrap(), 2.0);
        assert!(eval_psi(&pb, 2.0).is_err());
        assert!(eval_psi(&pb, 0.5).is_err());
        let pg = PsiSpec::polynomial_growth(2.0).unwrap();
        assert_eq!(eval_psi(&pg, 3.0).unwrap(), 9.0);
        let sp = PsiSpec::spike(2.0).unwrap();
        assert_eq!(eval_psi(&sp, 2.0).unwrap(), 1.0);
        assert_eq!(eval_psi(&sp, 3.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psi_validation() {
        assert!(PsiSpec::power_blowup(f64::INFINITY, 1.0).is_err());
        assert!(PsiSpec::power_blowup(2.0, 0.0).is_err());
        assert!(PsiSpec::polynomial_growth(-1.0).is_err());
        assert!(PsiSpec::tabulated(vec![1.0, 1.0], vec![1.0, 1.0], Interp::LogLinear).is_err());
        assert!(PsiSpec::tabulated(vec![1.0, 2.0], vec![1.0, 0.0], Interp::LogLinear).is_err());
        assert!(PsiSpec::constant(0.0, None).is_err());
    }

    #[test]
    fn psi_json_shapes() {
        let psi: PsiSpec = serde_json::from_str(r#"{"kind": "power_blowup", "b": 2.0, "beta": 1.0}"#).unwrap();
        assert_eq!(psi, PsiSpec::PowerBlowup { b: 2.0, beta: 1.0 });
        let psi: PsiSpec = serde_json::from_str(r#"{"kind": "tabulated", "p": [1, 2], "values": [3, 4]}"#).unwrap();
        assert_eq!(psi.knots(), vec![1.0, 2.0]);
        let psi: PsiSpec = serde_json::from_str(r#"{"kind": "constant", "value": 1}"#).unwrap();
        assert_eq!(psi.upper(), f64::INFINITY);
    }

    #[test]
    fn tabulated_interpolation() {
        let t = PsiSpec::tabulated(vec![1.0, 2.0], vec![1.0, 4.0], Interp::LogLinear).unwrap();
        // 1/p = 2/3 is a third of the way from 1 to 1/2.
        assert!((t.value(1.5) - 4f64.powf(2.0 / 3.0)).abs() < 1e-14);
        let s = PsiSpec::tabulated(vec![1.0, 2.0], vec![1.0, 4.0], Interp::Step).unwrap();
        assert_eq!(s.value(1.9), 1.0);
        assert_eq!(s.value(2.0), 4.0);
    }

    #[test]
    fn spike_recovers_lebesgue_norm() {
        let s = build_interval_grid(4, 1, true).unwrap();
        let f = ScalarField::new(&s, vec![0.3, -1.2, 2.0, 0.0]).unwrap();
        let res = bgls_norm(&s, &f, &PsiSpec::spike(2.0).unwrap()).unwrap();
        assert_eq!(res.value, lp_norm(&s, &f, 2.0).unwrap());
        assert_eq!(res.argmax, Argmax::At(2.0));
    }

    #[test]
    fn zero_field_has_zero_norm() {
        let s = build_interval_grid(4, 1, true).unwrap();
        let f = ScalarField::constant(&s, 0.0).unwrap();
        let res = bgls_norm(&s, &f, &PsiSpec::polynomial_growth(1.0).unwrap()).unwrap();
        assert_eq!(res.value, 0.0);
    }

    #[test]
    fn indicator_norm_peaks_at_the_upper_end() {
        // Mass 1/4 on a probability space, ψ ≡ 1 on (1, 2).
        let s = build_interval_grid(4, 1, true).unwrap();
        let f = indicator_field(&s, &[0]).unwrap();
        let psi = PsiSpec::constant(1.0, Some(2.0)).unwrap();
        let res = bgls_norm(&s, &f, &psi).unwrap();
        assert!((res.value - 0.5).abs() < 1e-15);
        assert_eq!(res.argmax, Argmax::UpperLimit);
        // Dense-grid oracle over p.
        let oracle = (0..=100_000)
            .map(|k| 1.0 + k as f64 / 100_000.0)
            .map(|p| 0.25f64.powf(1.0 / p))
            .fold(0.0, f64::max);
        assert!((res.value - oracle).abs() < 1e-12);
    }

    #[test]
    fn fundamental_function_examples() {
        let c = PsiSpec::constant(1.0, Some(2.0)).unwrap();
        assert!((fundamental_function(&c, 0.25).unwrap() - 0.5).abs() < 1e-15);

        let pg = PsiSpec::polynomial_growth(1.0).unwrap();
        let v = fundamental_function(&pg, (-4.0f64).exp()).unwrap();
        let closed = (-1.0f64).exp() / 4.0;
        assert!((v - closed).abs() < 1e-12 * closed, "{v} vs {closed}");
        let oracle = (1..=1_000_000)
            .map(|k| 1.0 + k as f64 * 1e-5)
            .map(|p| (-4.0 / p).exp() / p)
            .fold(0.0, f64::max);
        assert!((v - oracle).abs() < 1e-9);

        let sp = PsiSpec::spike(3.0).unwrap();
        assert!((fundamental_function(&sp, 0.2).unwrap() - 0.2f64.powf(1.0 / 3.0)).abs() < 1e-15);
        assert!(fundamental_function(&sp, 0.0).is_err());
    }

    #[test]
    fn fundamental_function_above_unit_mass() {
        // δ > 1 pulls the maximizer to small p: δ^{1/p}/p^β peaks at p = 1 for ln δ ≥ β.
        let pg = PsiSpec::polynomial_growth(1.0).unwrap();
        let v = fundamental_function(&pg, 4.0).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn natural_function_normalizes_members() {
        let s = build_from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], &[0.25; 4]).unwrap();
        let grid = [1.0, 1.5, 2.0, 3.0, 5.0, 8.0];
        let ind = indicator_field(&s, &[1]).unwrap();
        let psi = natural_function(&s, std::slice::from_ref(&ind), &grid).unwrap();
        for &p in &grid {
            assert!((psi.value(p) - 0.25f64.powf(1.0 / p)).abs() < 1e-15);
        }
        let f = ScalarField::new(&s, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let f2 = f.scaled(2.0).unwrap();
        let psi = natural_function(&s, &[f.clone(), f2.clone()], &grid).unwrap();
        let alone = natural_function(&s, std::slice::from_ref(&f), &grid).unwrap();
        for &p in &grid {
            assert!((psi.value(p) - 2.0 * alone.value(p)).abs() < 1e-12);
        }
        assert!((bgls_norm(&s, &f2, &psi).unwrap().value - 1.0).abs() < 1e-12);
        assert!(bgls_norm(&s, &f, &psi).unwrap().value <= 0.5 + 1e-12);
        assert_eq!(natural_function(&s, &[], &grid).unwrap_err(), Error::EmptyFamily);
    }

    #[test]
    fn blowup_asymptotics_improve() {
        let fam = AsymptoticFamily::PowerBlowup { b: 2.0, beta: 1.0 };
        let a12 = asymptotic_ratio(fam, 1e-12).unwrap();
        let a6 = asymptotic_ratio(fam, 1e-6).unwrap();
        assert!((0.85..=1.15).contains(&a12.ratio), "{a12:?}");
        assert!((a12.ratio - 1.0).abs() < (a6.ratio - 1.0).abs());
    }

    #[test]
    fn polynomial_asymptotics_differ_by_e() {
        let fam = AsymptoticFamily::PolynomialGrowth { beta: 1.0 };
        let a = asymptotic_ratio(fam, (-40.0f64).exp()).unwrap();
        assert!((a.ratio - (-1.0f64).exp()).abs() < 1e-9, "{a:?}");
        assert!((a.computed / a.stationary.unwrap() - 1.0).abs() < 1e-9);
        assert!(asymptotic_ratio(fam, 0.5).is_err());
    }
}
