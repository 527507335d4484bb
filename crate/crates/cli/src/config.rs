//! Experiment configuration and its resolution into library inputs.

use std::path::{Path, PathBuf};

use grand_poincare_core::calculus::{indicator_field, NeighborRule, ScalarField};
use grand_poincare_core::gls::{natural_function, ExponentWeight, PsiSpec};
use grand_poincare_core::poincare::{
    estimate_kl_table, estimate_kp_table, sup_q_factorization, Inequality, KpSpec, TransferSpec,
};
use grand_poincare_core::search::SearchConfig;
use grand_poincare_core::space::{build_interval_grid, estimate_order, MetricMeasureSpace, SpaceDescriptor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Norm,
    Fundamental,
    Transfer,
    VerifyPl,
    VerifyAfe,
    VerifyLip,
    EstimateKp,
    EstimateKl,
    EstimateOrder,
    Asymptotics,
    Sharpness,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Norm => "norm",
            Task::Fundamental => "fundamental",
            Task::Transfer => "transfer",
            Task::VerifyPl => "verify-pl",
            Task::VerifyAfe => "verify-afe",
            Task::VerifyLip => "verify-lip",
            Task::EstimateKp => "estimate-kp",
            Task::EstimateKl => "estimate-kl",
            Task::EstimateOrder => "estimate-order",
            Task::Asymptotics => "asymptotics",
            Task::Sharpness => "sharpness",
        }
    }

    /// Tasks whose outcome is a pass/fail verdict.
    pub fn is_verifying(self) -> bool {
        matches!(self, Task::VerifyPl | Task::VerifyAfe | Task::VerifyLip | Task::Sharpness)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    pub restarts: usize,
    pub iterations: usize,
}

impl Default for Budget {
    fn default() -> Self {
        let d = SearchConfig::default();
        Self {
            restarts: d.restarts,
            iterations: d.iterations,
        }
    }
}

impl Budget {
    pub fn with_seed(self, seed: u64) -> SearchConfig {
        SearchConfig {
            restarts: self.restarts,
            iterations: self.iterations,
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    /// Rescale the measure to mass 1 before the probability-space check.
    pub normalize: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neighbor_rule: Option<NeighborRule>,
    pub search: Budget,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inequality: Option<Inequality>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

/// A run description. Sections that need the library's tagged types are kept
/// as raw JSON and resolved with their config path for error reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<Value>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub options: Options,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::config("", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = read(path)?;
        Self::from_json(&text)
    }
}

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: DeserializeOwned>(value: &Value, path: &str) -> Result<T, RunError> {
    T::deserialize(value).map_err(|e| RunError::config(path, e.to_string()))
}

fn kind_of(value: &Value) -> Option<&str> {
    value.get("kind").and_then(Value::as_str)
}

/// Strips `kind` and parses the remaining keys.
fn parse_kind_body<T: DeserializeOwned>(value: &Value, path: &str) -> Result<T, RunError> {
    let mut body = value.clone();
    if let Some(map) = body.as_object_mut() {
        map.remove("kind");
    }
    parse(&body, path)
}

fn strictly_increasing(xs: &[f64], path: &str) -> Result<(), RunError> {
    if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(RunError::config(path, "grid must be finite and strictly increasing"));
    }
    Ok(())
}

/// Resolves config sections relative to the config file's directory.
pub struct Resolver<'a> {
    pub config: &'a ExperimentConfig,
    pub base: PathBuf,
    /// Raw bytes of every file read, for the input hashes.
    pub file_inputs: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpace {
    n: usize,
    #[serde(default = "one")]
    dim: usize,
    #[serde(default)]
    normalize_measure: bool,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RandomDist {
    Normal,
    Uniform,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum FieldSource {
    Values {
        values: Vec<f64>,
    },
    File {
        path: PathBuf,
    },
    Random {
        #[serde(default = "one")]
        count: usize,
        #[serde(default = "normal")]
        dist: RandomDist,
        #[serde(default)]
        seed: Option<u64>,
    },
    Indicator {
        subset: Vec<usize>,
    },
}

fn normal() -> RandomDist {
    RandomDist::Normal
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateSpec {
    #[serde(default)]
    p: Option<Vec<f64>>,
    #[serde(default)]
    q: Option<Vec<f64>>,
    #[serde(default)]
    budget: Option<Budget>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrderSpec {
    #[serde(default)]
    radii: Option<Vec<f64>>,
    #[serde(default)]
    centers: Option<Vec<usize>>,
}

/// Fully resolved transfer inputs plus what was estimated on the way.
pub struct ResolvedTransfer {
    pub spec: TransferSpec,
    pub estimated: Vec<(String, f64)>,
}

impl<'a> Resolver<'a> {
    pub fn new(config: &'a ExperimentConfig, base: PathBuf) -> Self {
        Self {
            config,
            base,
            file_inputs: Vec::new(),
        }
    }

    fn read_input(&mut self, rel: &Path) -> Result<String, RunError> {
        let path = self.base.join(rel);
        let text = read(&path)?;
        self.file_inputs.push((rel.display().to_string(), text.as_bytes().to_vec()));
        Ok(text)
    }

    pub fn rule(&self, space: &MetricMeasureSpace) -> NeighborRule {
        self.config
            .options
            .neighbor_rule
            .unwrap_or_else(|| NeighborRule::default_for(space))
    }

    pub fn search(&self) -> SearchConfig {
        self.config.options.search.with_seed(self.config.seed)
    }

    pub fn space(&mut self) -> Result<MetricMeasureSpace, RunError> {
        let v = self
            .config
            .space
            .as_ref()
            .ok_or_else(|| RunError::config("space", format!("task {} needs a space section", self.config.task.name())))?;
        let lib = |e| RunError::library("space", e);
        if let Some(rel) = v.as_str() {
            let text = self.read_input(Path::new(rel))?;
            let desc: SpaceDescriptor =
                serde_json::from_str(&text).map_err(|e| RunError::config("space", format!("{rel}: {e}")))?;
            return desc.build().map_err(lib);
        }
        if let Some(g) = v.get("grid") {
            let g: GridSpace = parse(g, "space.grid")?;
            return build_interval_grid(g.n, g.dim, g.normalize_measure).map_err(|e| RunError::library("space.grid", e));
        }
        let desc: SpaceDescriptor = parse(v, "space")?;
        desc.build().map_err(lib)
    }

    pub fn fields(&mut self, space: &MetricMeasureSpace) -> Result<Vec<ScalarField>, RunError> {
        let mut out = Vec::new();
        let sources = self.config.fields.clone();
        for (k, raw) in sources.iter().enumerate() {
            let path = format!("fields[{k}]");
            let lib = |e| RunError::library(&path, e);
            match parse::<FieldSource>(raw, &path)? {
                FieldSource::Values { values } => out.push(ScalarField::new(space, values).map_err(lib)?),
                FieldSource::File { path: rel } => {
                    let text = self.read_input(&rel)?;
                    let values: Vec<f64> = serde_json::from_str(&text)
                        .map_err(|e| RunError::config(&path, format!("{}: {e}", rel.display())))?;
                    out.push(ScalarField::new(space, values).map_err(lib)?);
                }
                FieldSource::Random { count, dist, seed } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(self.config.seed));
                    rng.set_stream(k as u64);
                    for _ in 0..count {
                        let values: Vec<f64> = match dist {
                            RandomDist::Normal => (0..space.len()).map(|_| rng.sample(StandardNormal)).collect(),
                            RandomDist::Uniform => {
                                let u = Uniform::new(-1.0, 1.0);
                                (0..space.len()).map(|_| u.sample(&mut rng)).collect()
                            }
                        };
                        out.push(ScalarField::new(space, values).map_err(lib)?);
                    }
                }
                FieldSource::Indicator { subset } => out.push(indicator_field(space, &subset).map_err(lib)?),
            }
        }
        Ok(out)
    }

    pub fn require_fields(&mut self, space: &MetricMeasureSpace) -> Result<Vec<ScalarField>, RunError> {
        let fields = self.fields(space)?;
        if fields.is_empty() {
            return Err(RunError::config("fields", format!("task {} needs at least one field", self.config.task.name())));
        }
        Ok(fields)
    }

    /// ψ from the `psi` section; `natural` builds it from the configured fields.
    pub fn psi(&mut self, space: &MetricMeasureSpace) -> Result<PsiSpec, RunError> {
        let v = self
            .config
            .psi
            .clone()
            .ok_or_else(|| RunError::config("psi", format!("task {} needs a psi section", self.config.task.name())))?;
        if kind_of(&v) == Some("natural") {
            #[derive(Deserialize)]
            #[serde(deny_unknown_fields)]
            struct Natural {
                p: Vec<f64>,
            }
            let nat: Natural = parse_kind_body(&v, "psi")?;
            let fields = self.require_fields(space)?;
            return natural_function(space, &fields, &nat.p).map_err(|e| RunError::library("psi", e));
        }
        let psi: PsiSpec = parse(&v, "psi")?;
        psi.validate().map_err(|e| RunError::library("psi", e))?;
        Ok(psi)
    }

    /// ψ for tasks without a space; `natural` is rejected.
    pub fn psi_without_space(&self) -> Result<PsiSpec, RunError> {
        let v = self
            .config
            .psi
            .as_ref()
            .ok_or_else(|| RunError::config("psi", format!("task {} needs a psi section", self.config.task.name())))?;
        if kind_of(v) == Some("natural") {
            return Err(RunError::config("psi", "a natural psi needs a space and fields"));
        }
        parse_psi(v, "psi")
    }

    pub fn q_grid(&self) -> Result<Vec<f64>, RunError> {
        match &self.config.grids.q {
            Some(q) => {
                strictly_increasing(q, "grids.q")?;
                if q.is_empty() || q[0] < 1.0 {
                    return Err(RunError::config("grids.q", "q grid must be nonempty with q >= 1"));
                }
                Ok(q.clone())
            }
            None => Ok((0..=16).map(|k| 2f64.powf(k as f64 / 2.0)).collect()),
        }
    }

    pub fn p_grid(&self, default: impl FnOnce() -> Vec<f64>) -> Result<Vec<f64>, RunError> {
        match &self.config.grids.p {
            Some(p) => {
                strictly_increasing(p, "grids.p")?;
                if p.is_empty() || p[0] < 1.0 {
                    return Err(RunError::config("grids.p", "p grid must be nonempty with p >= 1"));
                }
                Ok(p.clone())
            }
            None => Ok(default()),
        }
    }

    pub fn tau_grid(&self, space: &MetricMeasureSpace) -> Result<Vec<f64>, RunError> {
        match &self.config.grids.tau {
            Some(t) => {
                strictly_increasing(t, "grids.tau")?;
                Ok(t.clone())
            }
            None => Ok((0..=8).rev().map(|k| space.diam() * 0.5f64.powi(k)).collect()),
        }
    }

    pub fn delta_grid(&self) -> Result<Vec<f64>, RunError> {
        match &self.config.grids.delta {
            Some(d) => {
                strictly_increasing(d, "grids.delta")?;
                Ok(d.clone())
            }
            None => Ok((1..=12).rev().map(|k| 10f64.powi(-k)).collect()),
        }
    }

    fn transfer_value(&self) -> Result<Value, RunError> {
        self.config
            .transfer
            .clone()
            .ok_or_else(|| RunError::config("transfer", format!("task {} needs a transfer section", self.config.task.name())))
    }

    /// Order `s`: explicit, or fitted from ball masses.
    pub fn order(&self, space: &MetricMeasureSpace) -> Result<(f64, Option<f64>), RunError> {
        let t = self.transfer_value()?;
        let s = t.get("s").ok_or_else(|| RunError::config("transfer.s", "missing order s"))?;
        if let Some(x) = s.as_f64() {
            return Ok((x, None));
        }
        if kind_of(s) != Some("estimate_order") {
            return Err(RunError::config("transfer.s", "expected a number or {\"kind\": \"estimate_order\"}"));
        }
        let spec: OrderSpec = parse_kind_body(s, "transfer.s")?;
        let est = self.estimate_order_with(space, &spec, "transfer.s")?;
        Ok((est.s, Some(est.s)))
    }

    fn estimate_order_with(
        &self,
        space: &MetricMeasureSpace,
        spec: &OrderSpec,
        path: &str,
    ) -> Result<grand_poincare_core::space::OrderEstimate, RunError> {
        let radii = match &spec.radii {
            Some(r) => r.clone(),
            None => default_radii(space),
        };
        let centers = match &spec.centers {
            Some(c) => c.clone(),
            None => default_centers(space),
        };
        estimate_order(space, &radii, &centers).map_err(|e| RunError::library(path, e))
    }

    /// `estimate-order` task input: the `transfer.s` spec if present, else defaults.
    pub fn order_estimate(&self, space: &MetricMeasureSpace) -> Result<grand_poincare_core::space::OrderEstimate, RunError> {
        let spec = match self.config.transfer.as_ref().and_then(|t| t.get("s")) {
            Some(s) if kind_of(s) == Some("estimate_order") => parse_kind_body(s, "transfer.s")?,
            _ => OrderSpec::default(),
        };
        self.estimate_order_with(space, &spec, "transfer.s")
    }

    pub fn transfer(&self, space: &MetricMeasureSpace, psi: &PsiSpec) -> Result<ResolvedTransfer, RunError> {
        let t = self.transfer_value()?;
        if let Some(map) = t.as_object() {
            for key in map.keys() {
                if !["s", "kp", "kl", "r_factor", "v_factor", "zeta"].contains(&key.as_str()) {
                    return Err(RunError::config(&format!("transfer.{key}"), "unknown field"));
                }
            }
        }
        let (s, fitted) = self.order(space)?;
        let mut estimated = Vec::new();
        if let Some(s) = fitted {
            estimated.push(("s".to_string(), s));
        }
        let rule = self.rule(space);

        let kp = match t.get("kp") {
            None => None,
            Some(v) if kind_of(v) == Some("estimate") => {
                let spec: EstimateSpec = parse_kind_body(v, "transfer.kp")?;
                let p = match spec.p {
                    Some(p) => p,
                    None => default_kp_p_grid(s, psi),
                };
                let q = match spec.q {
                    Some(q) => q,
                    None => self.q_grid()?,
                };
                let search = spec
                    .budget
                    .unwrap_or(self.config.options.search)
                    .with_seed(spec.seed.unwrap_or(self.config.seed));
                let table = estimate_kp_table(space, &p, &q, &search, rule)
                    .map_err(|e| RunError::library("transfer.kp", e))?;
                Some(KpSpec::Table(table))
            }
            Some(v) => {
                let kp: KpSpec = parse(v, "transfer.kp")?;
                kp.validate().map_err(|e| RunError::library("transfer.kp", e))?;
                Some(kp)
            }
        };

        let kl = match t.get("kl") {
            None => None,
            Some(v) if kind_of(v) == Some("estimate") => {
                let spec: EstimateSpec = parse_kind_body(v, "transfer.kl")?;
                let p = match spec.p {
                    Some(p) => p,
                    None => default_kl_p_grid(s, psi),
                };
                let search = spec
                    .budget
                    .unwrap_or(self.config.options.search)
                    .with_seed(spec.seed.unwrap_or(self.config.seed));
                Some(estimate_kl_table(space, s, &p, &search, rule).map_err(|e| RunError::library("transfer.kl", e))?)
            }
            Some(v) => Some(parse_psi(v, "transfer.kl")?),
        };

        let mut r_factor = None;
        let mut v_factor = t.get("v_factor").map(|v| parse_psi(v, "transfer.v_factor")).transpose()?;
        if let Some(v) = t.get("r_factor") {
            if kind_of(v) == Some("sup_q") {
                let table = match &kp {
                    Some(KpSpec::Table(t)) => t,
                    _ => return Err(RunError::config("transfer.r_factor", "sup_q needs a tabulated or estimated kp")),
                };
                let (r, v1) = sup_q_factorization(table, s).map_err(|e| RunError::library("transfer.r_factor", e))?;
                r_factor = Some(r);
                v_factor.get_or_insert(v1);
            } else {
                r_factor = Some(parse_psi(v, "transfer.r_factor")?);
            }
        }
        let zeta = t.get("zeta").map(|v| parse_psi(v, "transfer.zeta")).transpose()?;
        let spec = TransferSpec {
            s,
            kp,
            kl,
            r_factor,
            v_factor,
            zeta,
        };
        spec.validate().map_err(|e| RunError::library("transfer", e))?;
        Ok(ResolvedTransfer { spec, estimated })
    }
}

fn parse_psi(v: &Value, path: &str) -> Result<PsiSpec, RunError> {
    let psi: PsiSpec = parse(v, path)?;
    psi.validate().map_err(|e| RunError::library(path, e))?;
    Ok(psi)
}

/// Starts at 1 so envelope lookups cover every bracket; stops below `s`.
fn default_kp_p_grid(s: f64, psi: &PsiSpec) -> Vec<f64> {
    let top = s.min(psi.upper());
    (0..6).map(|k| top.powf(k as f64 / 6.0)).collect()
}

fn default_kl_p_grid(s: f64, psi: &PsiSpec) -> Vec<f64> {
    let top = psi.upper().min(4.0 * s);
    (1..=6).map(|k| s + (top - s) * k as f64 / 7.0).collect()
}

fn default_radii(space: &MetricMeasureSpace) -> Vec<f64> {
    let lo = space.min_positive_distance();
    let hi = space.diam() / 2.0;
    if !(hi > lo) {
        return vec![lo, 1.5 * lo, 2.0 * lo];
    }
    (0..8).map(|k| lo * (hi / lo).powf(k as f64 / 7.0)).collect()
}

fn default_centers(space: &MetricMeasureSpace) -> Vec<usize> {
    let n = space.len();
    let step = (n / 64).max(1);
    (0..n).step_by(step).take(64).collect()
}
