//! Poincaré-type inequalities in grand Lebesgue norms.
//!
//! Three checks are provided, each returning an [`InequalityReport`]:
//!
//! * [`verify_prop21`]: on a probability space,
//!   `||u - u_X||Gν ≤ diam(X) ||∇u||Gψ` with `ν(q) = inf_p K_P(p,q) ψ(p)`;
//! * [`verify_afe`]: for a factorable `K_P ≤ R(p) V(q)` and arbitrary mass,
//!   `||u - u_X||G(Vζ) / φ(Gζ, μ(X)) ≤ diam(X) ||∇u||Gψ / φ(G(Rψ), μ(X))`;
//! * [`verify_lip`]: for `p > s`,
//!   `ω(u, τ) ≤ μ(X) τ / φ(G(K_L ψ), τ^s) ||∇u||Gψ`.
//!
//! The Poincaré constants are inputs. [`estimate_kp`] and [`estimate_kl`]
//! produce them by extremal search; those estimates are lower bounds of the
//! true suprema.

use serde::{Deserialize, Serialize};

use crate::calculus::{
    weighted_mean, GradientStencil, LpEvaluator, NeighborRule, PairOscillation, ScalarField,
};
use crate::error::{Error, Result};
use crate::gls::{
    bgls_norm_of, eval_psi, fundamental_function_full, sup_over_weight, ExponentWeight, FnWeight,
    Interp, Product, PsiSpec, Window,
};
use crate::numeric::{check_increasing, log_uniform, Argmax, Exponent};
use crate::search::{maximize_invariant, SearchConfig};
use crate::space::{MetricMeasureSpace, METRIC_TOL};

/// Relative tolerance on report ratios.
pub const RATIO_TOL: f64 = 1e-9;

/// Interpolation of a `K_P(p, q)` table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableInterp {
    /// `ln K` bilinear in `(ln p, ln q)`; no extrapolation.
    #[default]
    Bilinear,
    /// Monotone upper envelope: `K_P` is nonincreasing in `p` and
    /// nondecreasing in `q`, so the value at the nearest knot with smaller
    /// `p` and larger `q` bounds every point of the cell.
    Envelope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpTable {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// `values[i][j] = K_P(p[i], q[j])`.
    pub values: Vec<Vec<f64>>,
    #[serde(default)]
    pub interp: TableInterp,
}

impl KpTable {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidTransfer(m));
        check_increasing("kp table p", &self.p)?;
        check_increasing("kp table q", &self.q)?;
        let min_len = match self.interp {
            TableInterp::Bilinear => 2,
            TableInterp::Envelope => 1,
        };
        if self.p.len() < min_len || self.q.len() < min_len {
            return bad(format!("kp table needs at least {min_len} knots per axis"));
        }
        if self.values.len() != self.p.len() || self.values.iter().any(|r| r.len() != self.q.len()) {
            return bad("kp table values must be a p-by-q matrix".into());
        }
        if self.values.iter().flatten().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("kp table values must be positive and finite".into());
        }
        Ok(())
    }

    fn eval(&self, p: f64, q: f64) -> Option<f64> {
        match self.interp {
            TableInterp::Envelope => {
                let i = self.p.partition_point(|&x| x <= p).checked_sub(1)?;
                let j = self.q.partition_point(|&x| x < q);
                (j < self.q.len()).then(|| self.values[i][j])
            }
            TableInterp::Bilinear => {
                let cell = |xs: &[f64], x: f64| -> Option<(usize, f64)> {
                    if x < xs[0] || x > xs[xs.len() - 1] {
                        return None;
                    }
                    let k = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
                    let (a, b) = (xs[k - 1].ln(), xs[k].ln());
                    Some((k - 1, (x.ln() - a) / (b - a)))
                };
                let (i, tp) = cell(&self.p, p)?;
                let (j, tq) = cell(&self.q, q)?;
                let l = |a: usize, b: usize| self.values[a][b].ln();
                let v = (1.0 - tp) * (1.0 - tq) * l(i, j)
                    + tp * (1.0 - tq) * l(i + 1, j)
                    + (1.0 - tp) * tq * l(i, j + 1)
                    + tp * tq * l(i + 1, j + 1);
                Some(v.exp())
            }
        }
    }

    /// Raises every entry to the best lower bound implied by monotonicity in
    /// `p` (nonincreasing) and `q` (nondecreasing).
    pub fn monotone_closure(&mut self) {
        let (np, nq) = (self.p.len(), self.q.len());
        for j in 0..nq {
            for i in (0..np.saturating_sub(1)).rev() {
                self.values[i][j] = self.values[i][j].max(self.values[i + 1][j]);
            }
        }
        for row in &mut self.values {
            for j in 1..nq {
                row[j] = row[j].max(row[j - 1]);
            }
        }
    }
}

/// Source of `K_P(p, q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KpSpec {
    Constant { value: f64 },
    Table(KpTable),
}

impl KpSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KpSpec::Constant { value } if !(value.is_finite() && *value > 0.0) => Err(
                Error::InvalidTransfer(format!("kp constant must be positive, got {value}")),
            ),
            KpSpec::Constant { .. } => Ok(()),
            KpSpec::Table(t) => t.validate(),
        }
    }

    pub fn eval(&self, p: f64, q: f64) -> Result<f64> {
        match self {
            KpSpec::Constant { value } => Ok(*value),
            KpSpec::Table(t) => t
                .eval(p, q)
                .ok_or_else(|| Error::TableCoverage(format!("(p, q) = ({p}, {q})"))),
        }
    }

    fn eval_unchecked(&self, p: f64, q: f64) -> f64 {
        self.eval(p, q).unwrap_or(f64::NAN)
    }

    /// The same constants multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            KpSpec::Constant { value } => KpSpec::Constant {
                value: value * factor,
            },
            KpSpec::Table(t) => KpSpec::Table(KpTable {
                values: t
                    .values
                    .iter()
                    .map(|r| r.iter().map(|v| v * factor).collect())
                    .collect(),
                ..t.clone()
            }),
        }
    }
}

/// The constants and factor functions the inequalities are transferred through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSpec {
    /// Order `s > 1` of the space.
    pub s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kp: Option<KpSpec>,
    /// `p ↦ K_L(s, p)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl: Option<PsiSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_factor: Option<PsiSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_factor: Option<PsiSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<PsiSpec>,
}

impl TransferSpec {
    pub fn with_kp(s: f64, kp: KpSpec) -> Self {
        Self {
            s,
            kp: Some(kp),
            kl: None,
            r_factor: None,
            v_factor: None,
            zeta: None,
        }
    }

    pub fn with_kl(s: f64, kl: PsiSpec) -> Self {
        Self {
            s,
            kp: None,
            kl: Some(kl),
            r_factor: None,
            v_factor: None,
            zeta: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s.is_finite() && self.s > 1.0) {
            return Err(Error::InvalidTransfer(format!("order s must exceed 1, got {}", self.s)));
        }
        if let Some(kp) = &self.kp {
            kp.validate()?;
        }
        for psi in [&self.kl, &self.r_factor, &self.v_factor, &self.zeta].into_iter().flatten() {
            psi.validate()?;
        }
        Ok(())
    }

    fn kp(&self) -> Result<&KpSpec> {
        self.kp
            .as_ref()
            .ok_or_else(|| Error::InvalidTransfer("kp is required".into()))
    }

    fn kl(&self) -> Result<&PsiSpec> {
        self.kl
            .as_ref()
            .ok_or_else(|| Error::InvalidTransfer("kl is required".into()))
    }
}

/// Lower end `qs/(q+s)` of the admissible gradient exponents for a given `q`.
pub fn bracket_lower(q: f64, s: f64) -> f64 {
    q * s / (q + s)
}

/// Upper end `ps/(s-p)` of the admissible `q` for a given `p < s`.
pub fn q_upper(p: f64, s: f64) -> f64 {
    if p >= s {
        f64::INFINITY
    } else {
        p * s / (s - p)
    }
}

/// Clamped exponent bracket `(max(1, qs/(q+s)), min(s, supp ψ))` of `ν(q)`.
pub fn nu_bracket(psi: &dyn ExponentWeight, s: f64, q: f64) -> Result<(f64, f64)> {
    let lo = bracket_lower(q, s).max(1.0).max(psi.lower());
    let hi = s.min(psi.upper());
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err(Error::EmptyBracket { q, lo, hi })
    }
}

/// `ν(q) = inf_{p} K_P(p, q) ψ(p)` over the clamped bracket.
///
/// The bracket is open; its endpoints enter through their limits. A spike ψ
/// outside the bracket gives `+inf` (`C/∞ = 0` convention).
pub fn transfer_nu(psi: &PsiSpec, transfer: &TransferSpec, q: f64) -> Result<f64> {
    transfer.validate()?;
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::InvalidExponent(q));
    }
    nu_of(psi, transfer.kp()?, transfer.s, q)
}

fn nu_of(psi: &PsiSpec, kp: &KpSpec, s: f64, q: f64) -> Result<f64> {
    let (lo, hi) = nu_bracket(psi, s, q)?;
    if let Some(r) = psi.spike() {
        return if r >= lo && r <= hi {
            kp.eval(r, q)
        } else {
            Ok(f64::INFINITY)
        };
    }
    kp.eval(lo, q)?;
    kp.eval(hi, q)?;
    let upper_limit = if hi < psi.upper() {
        kp.eval(hi, q)? * psi.value(hi)
    } else {
        kp.eval(hi, q)? * psi.upper_limit()
    };
    let mut knots = psi.knots();
    if let KpSpec::Table(t) = kp {
        knots.extend(&t.p);
    }
    let w = FnWeight {
        lower: lo,
        upper: hi,
        f: |p: f64| kp.eval_unchecked(p, q) * psi.value(p),
        upper_limit,
        knots,
    };
    let sup_inv = sup_over_weight(&w, &|_| 0.0)?;
    Ok(1.0 / sup_inv.value)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Grid value (`q` or `τ`) realizing the left-hand side.
    pub grid_value: Option<f64>,
    /// Exponent realizing the gradient's grand norm.
    pub p: Option<f64>,
    /// Pair of points realizing the modulus of continuity.
    pub pair: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub grid_value: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`; 0 when both sides vanish (see `degenerate`).
    pub ratio: f64,
    /// Both sides vanish (constant field): holds by convention.
    pub degenerate: bool,
    pub holds: bool,
    pub tolerance: f64,
    pub witness: Witness,
    /// Name of the grid variable of `rows` (`q` or `tau`).
    pub grid_var: String,
    pub rows: Vec<GridRow>,
    pub flags: Vec<String>,
}

fn finish_report(
    lhs: f64,
    rhs: f64,
    ratio_override: Option<f64>,
    witness: Witness,
    grid_var: &str,
    rows: Vec<GridRow>,
    flags: Vec<String>,
) -> InequalityReport {
    let degenerate = lhs == 0.0 && rhs == 0.0;
    let ratio = if degenerate {
        0.0
    } else {
        ratio_override.unwrap_or(lhs / rhs)
    };
    InequalityReport {
        lhs,
        rhs,
        ratio,
        degenerate,
        holds: degenerate || ratio <= 1.0 + RATIO_TOL,
        tolerance: RATIO_TOL,
        witness,
        grid_var: grid_var.into(),
        rows,
        flags,
    }
}

fn argmax_p(a: Argmax, upper: f64) -> f64 {
    match a {
        Argmax::At(p) => p,
        Argmax::UpperLimit => upper,
    }
}

fn check_q_grid(q_grid: &[f64]) -> Result<()> {
    if q_grid.is_empty() {
        return Err(Error::InvalidGrid("q grid is empty".into()));
    }
    check_increasing("q grid", q_grid)?;
    if q_grid[0] < 1.0 {
        return Err(Error::InvalidExponent(q_grid[0]));
    }
    Ok(())
}

/// Default `q` grid: log-uniform over `[1, q_max]`.
pub fn default_q_grid(q_max: f64, count: usize) -> Vec<f64> {
    log_uniform(1.0, q_max, count)
}

fn tail_flag(terms: &[f64]) -> Option<String> {
    match terms {
        [.., a, b] if b > a => Some(format!(
            "tail: left-hand summand still increasing at q_max ({a:e} -> {b:e})"
        )),
        _ => None,
    }
}

/// Shared, field-independent data of the probability-space check.
pub struct Prop21<'a> {
    space: MetricMeasureSpace,
    psi: Window<'a>,
    nus: Vec<(f64, f64)>,
    stencil: GradientStencil,
}

impl<'a> Prop21<'a> {
    /// `normalize` rescales the measure to total mass 1 first; otherwise a
    /// non-probability space is rejected.
    pub fn new(
        space: &MetricMeasureSpace,
        psi: &'a PsiSpec,
        transfer: &TransferSpec,
        q_grid: &[f64],
        rule: NeighborRule,
        normalize: bool,
    ) -> Result<Self> {
        transfer.validate()?;
        check_q_grid(q_grid)?;
        let space = if space.is_probability() {
            space.clone()
        } else if normalize {
            space.normalized()
        } else {
            return Err(Error::NotProbability(space.total_mass()));
        };
        let kp = transfer.kp()?;
        let nus = q_grid
            .iter()
            .map(|&q| Ok((q, nu_of(psi, kp, transfer.s, q)?)))
            .collect::<Result<Vec<_>>>()?;
        let s_eff = transfer.s.min(psi.upper());
        Ok(Self {
            stencil: GradientStencil::new(&space, rule)?,
            space,
            psi: Window {
                inner: psi,
                lo: 1.0,
                hi: s_eff,
            },
            nus,
        })
    }

    /// `ν(q)` on the grid.
    pub fn nus(&self) -> &[(f64, f64)] {
        &self.nus
    }

    pub fn report(&self, u: &[f64]) -> Result<InequalityReport> {
        let space = &self.space;
        if u.len() != space.len() {
            return Err(Error::FieldSpaceMismatch {
                field: u.len(),
                space: space.len(),
            });
        }
        let mean = weighted_mean(space.weights(), u, space.total_mass());
        let centered: Vec<f64> = u.iter().map(|v| v - mean).collect();
        let osc = LpEvaluator::new(space.weights(), &centered);
        let grad = LpEvaluator::new(space.weights(), &self.stencil.gradient(u));
        let gnorm = bgls_norm_of(&grad, &self.psi)?;
        let rhs = space.diam() * gnorm.value;

        let mut rows = Vec::with_capacity(self.nus.len());
        let mut terms = Vec::with_capacity(self.nus.len());
        let (mut lhs, mut q_star) = (0.0f64, None);
        for &(q, nu) in &self.nus {
            let term = osc.norm(Exponent::Finite(q)) / nu;
            if term > lhs || q_star.is_none() {
                lhs = lhs.max(term);
                q_star = Some(q);
            }
            terms.push(term);
            rows.push(GridRow {
                grid_value: q,
                lhs: term,
                rhs,
            });
        }
        let flags = tail_flag(&terms).into_iter().collect();
        Ok(finish_report(
            lhs,
            rhs,
            None,
            Witness {
                grid_value: q_star,
                p: Some(argmax_p(gnorm.argmax, self.psi.upper())),
                pair: None,
            },
            "q",
            rows,
            flags,
        ))
    }

    pub fn ratio(&self, u: &[f64]) -> f64 {
        match self.report(u) {
            Ok(r) if !r.degenerate => r.ratio,
            _ => f64::NAN,
        }
    }
}

/// `||u - u_X||Gν ≤ diam(X) ||∇u||Gψ` on a probability space.
pub fn verify_prop21(
    space: &MetricMeasureSpace,
    u: &ScalarField,
    psi: &PsiSpec,
    transfer: &TransferSpec,
    q_grid: &[f64],
    rule: NeighborRule,
    normalize: bool,
) -> Result<InequalityReport> {
    u.check(space)?;
    Prop21::new(space, psi, transfer, q_grid, rule, normalize)?.report(u.values())
}

/// Field-independent data of the factorable-estimate check.
pub struct Afe<'a> {
    space: &'a MetricMeasureSpace,
    psi: Window<'a>,
    /// `(q, V(q) ζ(q))` on the grid.
    vz: Vec<(f64, f64)>,
    phi_zeta: f64,
    phi_r_psi: f64,
    stencil: GradientStencil,
}

impl<'a> Afe<'a> {
    pub fn new(
        space: &'a MetricMeasureSpace,
        psi: &'a PsiSpec,
        transfer: &'a TransferSpec,
        q_grid: &[f64],
        rule: NeighborRule,
    ) -> Result<Self> {
        transfer.validate()?;
        check_q_grid(q_grid)?;
        let missing = |what: &str| Error::InvalidTransfer(format!("{what} is required for the factorable check"));
        let r = transfer.r_factor.as_ref().ok_or_else(|| missing("r_factor"))?;
        let v = transfer.v_factor.as_ref().ok_or_else(|| missing("v_factor"))?;
        let zeta = transfer.zeta.as_ref().ok_or_else(|| missing("zeta"))?;
        if zeta.upper().is_finite() {
            return Err(Error::InvalidPsi("zeta must be supported on [1, ∞)".into()));
        }
        let s = transfer.s;
        let s_eff = s.min(psi.upper());
        if r.lower() > 1.0 || r.upper() < s_eff {
            return Err(Error::InvalidTransfer(format!(
                "r_factor must cover [1, {s_eff}], covers [{}, {}]",
                r.lower(),
                r.upper()
            )));
        }
        check_factorization(transfer.kp()?, r, v, s_eff, q_grid)?;

        let mu = space.total_mass();
        let phi_zeta = fundamental_function_full(zeta, mu)?.value;
        let psi_win = Window {
            inner: psi,
            lo: 1.0,
            hi: s_eff,
        };
        let r_psi = Product {
            left: r,
            right: psi,
        };
        let r_psi_win = Window {
            inner: &r_psi,
            lo: 1.0,
            hi: s_eff,
        };
        let phi_r_psi = fundamental_function_full(&r_psi_win, mu)?.value;
        let vz = q_grid
            .iter()
            .map(|&q| Ok((q, eval_psi(v, q)? * eval_psi(zeta, q)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            stencil: GradientStencil::new(space, rule)?,
            space,
            psi: psi_win,
            vz,
            phi_zeta,
            phi_r_psi,
        })
    }

    /// `φ(Gζ, μ(X))` and `φ(G(Rψ), μ(X))`.
    pub fn fundamental_values(&self) -> (f64, f64) {
        (self.phi_zeta, self.phi_r_psi)
    }

    pub fn report(&self, u: &[f64]) -> Result<InequalityReport> {
        let space = self.space;
        if u.len() != space.len() {
            return Err(Error::FieldSpaceMismatch {
                field: u.len(),
                space: space.len(),
            });
        }
        let mean = weighted_mean(space.weights(), u, space.total_mass());
        let centered: Vec<f64> = u.iter().map(|v| v - mean).collect();
        let osc = LpEvaluator::new(space.weights(), &centered);
        let grad = LpEvaluator::new(space.weights(), &self.stencil.gradient(u));
        let gnorm = bgls_norm_of(&grad, &self.psi)?;
        let rhs = space.diam() * gnorm.value / self.phi_r_psi;

        let mut rows = Vec::with_capacity(self.vz.len());
        let mut terms = Vec::with_capacity(self.vz.len());
        let (mut lhs, mut q_star) = (0.0f64, None);
        for &(q, vz) in &self.vz {
            let term = osc.norm(Exponent::Finite(q)) / vz / self.phi_zeta;
            if term > lhs || q_star.is_none() {
                lhs = lhs.max(term);
                q_star = Some(q);
            }
            terms.push(term);
            rows.push(GridRow {
                grid_value: q,
                lhs: term,
                rhs,
            });
        }
        let flags = tail_flag(&terms).into_iter().collect();
        Ok(finish_report(
            lhs,
            rhs,
            None,
            Witness {
                grid_value: q_star,
                p: Some(argmax_p(gnorm.argmax, self.psi.upper())),
                pair: None,
            },
            "q",
            rows,
            flags,
        ))
    }

    pub fn ratio(&self, u: &[f64]) -> f64 {
        match self.report(u) {
            Ok(r) if !r.degenerate => r.ratio,
            _ => f64::NAN,
        }
    }
}

/// Checks `K_P(p, q) ≤ R(p) V(q)` on a validation grid.
pub fn check_factorization(kp: &KpSpec, r: &PsiSpec, v: &PsiSpec, s: f64, q_grid: &[f64]) -> Result<()> {
    let mut ps = log_uniform(1.0, s, 16);
    ps.pop();
    ps.extend(r.knots().into_iter().filter(|&p| (1.0..s).contains(&p)));
    let mut qs = q_grid.to_vec();
    if let KpSpec::Table(t) = kp {
        ps.extend(t.p.iter().copied().filter(|&p| (1.0..s).contains(&p)));
        let qmax = q_grid[q_grid.len() - 1];
        qs.extend(t.q.iter().copied().filter(|&q| q <= qmax));
    }
    for &p in &ps {
        let rp = eval_psi(r, p)?;
        for &q in &qs {
            let k = kp.eval(p, q)?;
            let bound = rp * eval_psi(v, q)?;
            if k > bound * (1.0 + RATIO_TOL) {
                return Err(Error::AfeViolated { p, q, kp: k, bound });
            }
        }
    }
    Ok(())
}

/// Factorable estimate for arbitrary total mass (see module docs).
pub fn verify_afe(
    space: &MetricMeasureSpace,
    u: &ScalarField,
    psi: &PsiSpec,
    transfer: &TransferSpec,
    q_grid: &[f64],
    rule: NeighborRule,
) -> Result<InequalityReport> {
    u.check(space)?;
    Afe::new(space, psi, transfer, q_grid, rule)?.report(u.values())
}

/// `R(p) = max_q K_P(p, q)` as a step function on the table's `p` knots,
/// with `V ≡ 1`. Exact for envelope tables. The last value is held up to
/// `p_max`, which is valid since `K_P` is nonincreasing in `p`.
pub fn sup_q_factorization(table: &KpTable, p_max: f64) -> Result<(PsiSpec, PsiSpec)> {
    let values: Vec<f64> = table
        .values
        .iter()
        .map(|row| row.iter().copied().fold(0.0, f64::max))
        .collect();
    let (mut p, mut values) = (table.p.clone(), values);
    let last = p[p.len() - 1];
    if p_max > last || p.len() == 1 {
        p.push(if p_max > last { p_max } else { last + 1.0 });
        values.push(values[values.len() - 1]);
    }
    Ok((
        PsiSpec::tabulated(p, values, Interp::Step)?,
        PsiSpec::constant(1.0, None)?,
    ))
}

/// `μ(X) τ / φ(G(K_L ψ), τ^s)`: the modulus bound per unit of `||∇u||Gψ`.
pub struct LipMajorant<'a> {
    weight: Product<'a>,
    s: f64,
    mu: f64,
}

impl<'a> LipMajorant<'a> {
    pub fn new(psi: &'a PsiSpec, kl: &'a PsiSpec, s: f64, mu: f64) -> Result<Self> {
        let b = psi.upper();
        if !(b > s) {
            return Err(Error::OrderMismatch { b, s });
        }
        Ok(Self {
            weight: Product { left: kl, right: psi },
            s,
            mu,
        })
    }

    pub fn at(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0) {
            return Err(Error::OutOfDomain {
                value: tau,
                domain: "tau > 0".into(),
            });
        }
        let window = Window {
            inner: &self.weight,
            lo: self.s,
            hi: f64::INFINITY,
        };
        let phi = fundamental_function_full(&window, tau.powf(self.s))?.value;
        Ok(self.mu * tau / phi)
    }
}

/// Field-independent data of the modulus-of-continuity check.
pub struct Lip<'a> {
    space: &'a MetricMeasureSpace,
    psi: &'a PsiSpec,
    /// `(τ, μ(X) τ / φ(G(K_L ψ), τ^s))`.
    majorants: Vec<(f64, f64)>,
    stencil: GradientStencil,
}

impl<'a> Lip<'a> {
    pub fn new(
        space: &'a MetricMeasureSpace,
        psi: &'a PsiSpec,
        transfer: &'a TransferSpec,
        tau_grid: &[f64],
        rule: NeighborRule,
    ) -> Result<Self> {
        transfer.validate()?;
        if tau_grid.is_empty() {
            return Err(Error::InvalidGrid("tau grid is empty".into()));
        }
        check_increasing("tau grid", tau_grid)?;
        let reach = space.diam() * (1.0 + METRIC_TOL);
        if tau_grid[0] <= 0.0 || tau_grid[tau_grid.len() - 1] > reach {
            return Err(Error::InvalidGrid(format!(
                "tau must lie in (0, diam = {}]",
                space.diam()
            )));
        }
        let maj = LipMajorant::new(psi, transfer.kl()?, transfer.s, space.total_mass())?;
        let majorants = tau_grid
            .iter()
            .map(|&t| Ok((t, maj.at(t)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            stencil: GradientStencil::new(space, rule)?,
            space,
            psi,
            majorants,
        })
    }

    pub fn report(&self, u: &[f64]) -> Result<InequalityReport> {
        let space = self.space;
        if u.len() != space.len() {
            return Err(Error::FieldSpaceMismatch {
                field: u.len(),
                space: space.len(),
            });
        }
        let grad = LpEvaluator::new(space.weights(), &self.stencil.gradient(u));
        let gnorm = bgls_norm_of(&grad, self.psi)?;
        let osc = PairOscillation::new(space, u);

        let mut rows = Vec::with_capacity(self.majorants.len());
        let (mut lhs_at, mut rhs_at, mut best, mut tau_star) = (0.0, 0.0, f64::NEG_INFINITY, None);
        let mut violated_by_zero = false;
        for &(tau, m) in &self.majorants {
            let lhs = osc.omega(tau);
            let rhs = m * gnorm.value;
            rows.push(GridRow {
                grid_value: tau,
                lhs,
                rhs,
            });
            let ratio = if rhs > 0.0 {
                lhs / rhs
            } else if lhs > 0.0 {
                violated_by_zero = true;
                f64::INFINITY
            } else {
                continue;
            };
            if ratio > best {
                best = ratio;
                lhs_at = lhs;
                rhs_at = rhs;
                tau_star = Some(tau);
            }
        }
        let pair = tau_star.map(|t| extremal_pair(space, u, t));
        let ratio_override = if best.is_finite() || violated_by_zero {
            Some(best.max(0.0))
        } else {
            None
        };
        Ok(finish_report(
            lhs_at,
            rhs_at,
            ratio_override,
            Witness {
                grid_value: tau_star,
                p: Some(argmax_p(gnorm.argmax, self.psi.upper())),
                pair,
            },
            "tau",
            rows,
            vec!["every point carries positive mass: no null-set redefinition applied".into()],
        ))
    }

    pub fn ratio(&self, u: &[f64]) -> f64 {
        match self.report(u) {
            Ok(r) if !r.degenerate => r.ratio,
            _ => f64::NAN,
        }
    }
}

fn extremal_pair(space: &MetricMeasureSpace, u: &[f64], tau: f64) -> (usize, usize) {
    let reach = tau + METRIC_TOL * space.diam();
    let mut best = (0, 0, -1.0);
    for i in 0..u.len() {
        for j in (i + 1)..u.len() {
            let du = (u[i] - u[j]).abs();
            if space.dist(i, j) <= reach && du > best.2 {
                best = (i, j, du);
            }
        }
    }
    (best.0, best.1)
}

/// `ω(u, τ) ≤ μ(X) τ / φ(G(K_L ψ), τ^s) ||∇u||Gψ` for each τ of the grid.
pub fn verify_lip(
    space: &MetricMeasureSpace,
    u: &ScalarField,
    psi: &PsiSpec,
    transfer: &TransferSpec,
    tau_grid: &[f64],
    rule: NeighborRule,
) -> Result<InequalityReport> {
    u.check(space)?;
    Lip::new(space, psi, transfer, tau_grid, rule)?.report(u.values())
}

/// The normalized Poincaré ratio whose supremum over fields is `K_P(p, q)`.
pub struct KpRatio {
    weights: Vec<f64>,
    mass: f64,
    stencil: GradientStencil,
    p: Exponent,
    q: Exponent,
    scale: f64,
}

impl KpRatio {
    pub fn new(space: &MetricMeasureSpace, p: f64, q: f64, rule: NeighborRule) -> Result<Self> {
        let p = Exponent::from(p).validate()?;
        let q = Exponent::from(q).validate()?;
        let mu = space.total_mass();
        let inv = |e: Exponent| e.finite().map_or(0.0, |x| 1.0 / x);
        // μ^{-1/q} / (diam μ^{-1/p})
        let scale = mu.powf(inv(p) - inv(q)) / space.diam();
        Ok(Self {
            weights: space.weights().to_vec(),
            mass: mu,
            stencil: GradientStencil::new(space, rule)?,
            p,
            q,
            scale,
        })
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        let mean = weighted_mean(&self.weights, u, self.mass);
        let centered: Vec<f64> = u.iter().map(|v| v - mean).collect();
        let num = LpEvaluator::new(&self.weights, &centered).norm(self.q);
        let den = LpEvaluator::new(&self.weights, &self.stencil.gradient(u)).norm(self.p);
        self.scale * num / den
    }
}

/// The Hölder ratio whose supremum over fields and pairs is `K_L(s, p)`.
pub struct KlRatio {
    weights: Vec<f64>,
    mass: f64,
    stencil: GradientStencil,
    p: f64,
    /// `(i, j, d(i,j)^{-(1 - s/p)})`
    pairs: Vec<(usize, usize, f64)>,
}

impl KlRatio {
    pub fn new(space: &MetricMeasureSpace, s: f64, p: f64, rule: NeighborRule) -> Result<Self> {
        if !(s > 1.0) {
            return Err(Error::InvalidTransfer(format!("order s must exceed 1, got {s}")));
        }
        if !(p > s) {
            return Err(Error::OrderMismatch { b: p, s });
        }
        Exponent::from(p).validate()?;
        let expo = 1.0 - s / p;
        let n = space.len();
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push((i, j, space.dist(i, j).powf(-expo)));
            }
        }
        Ok(Self {
            weights: space.weights().to_vec(),
            mass: space.total_mass(),
            stencil: GradientStencil::new(space, rule)?,
            p,
            pairs,
        })
    }

    /// Ratio and the pair realizing it.
    pub fn eval_with_pair(&self, u: &[f64]) -> (f64, (usize, usize)) {
        let mut best = (f64::NEG_INFINITY, (0, 0));
        for &(i, j, w) in &self.pairs {
            let v = (u[i] - u[j]).abs() * w;
            if v > best.0 {
                best = (v, (i, j));
            }
        }
        let den = LpEvaluator::new(&self.weights, &self.stencil.gradient(u)).norm(Exponent::Finite(self.p));
        (best.0 / (self.mass * den), best.1)
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        self.eval_with_pair(u).0
    }
}

/// Distance-to-a-point fields, the first starts of every constant search.
fn distance_starts(space: &MetricMeasureSpace, count: usize) -> Vec<Vec<f64>> {
    let n = space.len();
    let step = (n / count.max(1)).max(1);
    (0..n)
        .step_by(step)
        .take(count)
        .map(|x| (0..n).map(|y| space.dist(x, y)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpEstimate {
    pub estimate: f64,
    pub witness: ScalarField,
}

/// Lower bound of `K_P(p, q)` by multi-start search over mean-zero fields.
pub fn estimate_kp(
    space: &MetricMeasureSpace,
    p: f64,
    q: f64,
    search: &SearchConfig,
    rule: NeighborRule,
) -> Result<KpEstimate> {
    let ratio = KpRatio::new(space, p, q, rule)?;
    let starts = distance_starts(space, search.restarts / 4);
    let out = maximize_invariant(space.weights(), &|u| ratio.eval(u), &starts, search)?;
    Ok(KpEstimate {
        estimate: ratio.eval(&out.point),
        witness: ScalarField::new(space, out.point)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlEstimate {
    pub estimate: f64,
    pub witness: ScalarField,
    pub pair: (usize, usize),
}

/// Lower bound of `K_L(s, p)` by multi-start search over fields and pairs.
pub fn estimate_kl(
    space: &MetricMeasureSpace,
    s: f64,
    p: f64,
    search: &SearchConfig,
    rule: NeighborRule,
) -> Result<KlEstimate> {
    let ratio = KlRatio::new(space, s, p, rule)?;
    let starts = distance_starts(space, search.restarts / 4);
    let out = maximize_invariant(space.weights(), &|u| ratio.eval(u), &starts, search)?;
    let (estimate, pair) = ratio.eval_with_pair(&out.point);
    Ok(KlEstimate {
        estimate,
        witness: ScalarField::new(space, out.point)?,
        pair,
    })
}

/// Envelope table of `K_P` estimates over `p_grid × q_grid`, closed under
/// the monotonicity of the true constants.
pub fn estimate_kp_table(
    space: &MetricMeasureSpace,
    p_grid: &[f64],
    q_grid: &[f64],
    search: &SearchConfig,
    rule: NeighborRule,
) -> Result<KpTable> {
    check_increasing("p grid", p_grid)?;
    check_increasing("q grid", q_grid)?;
    let mut values = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        let row = q_grid
            .iter()
            .map(|&q| Ok(estimate_kp(space, p, q, search, rule)?.estimate))
            .collect::<Result<Vec<_>>>()?;
        values.push(row);
    }
    let mut table = KpTable {
        p: p_grid.to_vec(),
        q: q_grid.to_vec(),
        values,
        interp: TableInterp::Envelope,
    };
    table.monotone_closure();
    table.validate()?;
    Ok(table)
}

/// `K_L(s, ·)` estimates tabulated on `p_grid` (all `> s`).
pub fn estimate_kl_table(
    space: &MetricMeasureSpace,
    s: f64,
    p_grid: &[f64],
    search: &SearchConfig,
    rule: NeighborRule,
) -> Result<PsiSpec> {
    let values = p_grid
        .iter()
        .map(|&p| Ok(estimate_kl(space, s, p, search, rule)?.estimate))
        .collect::<Result<Vec<_>>>()?;
    if p_grid.len() == 1 {
        return PsiSpec::constant(values[0], None);
    }
    PsiSpec::tabulated(p_grid.to_vec(), values, Interp::LogLinear)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    Prop21,
    Afe,
    Lip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub best_ratio: f64,
    pub witness: ScalarField,
}

/// Grids a sharpness probe evaluates its inequality on.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrids {
    pub q: Vec<f64>,
    pub tau: Vec<f64>,
}

/// Largest report ratio found by multi-start search over fields.
///
/// A lower bound for the sharpest ratio achievable on this space; a value
/// near 1 is numerical evidence that the constant cannot be improved here.
pub fn sharpness_probe(
    space: &MetricMeasureSpace,
    psi: &PsiSpec,
    transfer: &TransferSpec,
    which: Inequality,
    grids: &ProbeGrids,
    search: &SearchConfig,
    rule: NeighborRule,
) -> Result<ProbeOutcome> {
    let starts = distance_starts(space, search.restarts / 4);
    let weights = space.weights();
    let out = match which {
        Inequality::Prop21 => {
            let v = Prop21::new(space, psi, transfer, &grids.q, rule, false)?;
            maximize_invariant(weights, &|u| v.ratio(u), &starts, search)?
        }
        Inequality::Afe => {
            let v = Afe::new(space, psi, transfer, &grids.q, rule)?;
            maximize_invariant(weights, &|u| v.ratio(u), &starts, search)?
        }
        Inequality::Lip => {
            let v = Lip::new(space, psi, transfer, &grids.tau, rule)?;
            maximize_invariant(weights, &|u| v.ratio(u), &starts, search)?
        }
    };
    Ok(ProbeOutcome {
        best_ratio: out.value,
        witness: ScalarField::new(space, out.point)?,
    })
}
