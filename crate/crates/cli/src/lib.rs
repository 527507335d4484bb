//! Config-driven runner for the grand Lebesgue / Poincaré toolkit.
//!
//! One `run` entry dispatches on the configured task and returns a
//! [`ReportRecord`]. The record body is deterministic given the config and
//! seed; only `wall_time_s` varies between runs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use grand_poincare_core::gls::{
    asymptotic_ratio, bgls_norm, fundamental_function, AsymptoticFamily, PsiSpec,
};
use grand_poincare_core::numeric::Argmax;
use grand_poincare_core::poincare::{
    estimate_kl, estimate_kp, sharpness_probe, transfer_nu, Afe, InequalityReport, Lip, ProbeGrids,
    Prop21, KpSpec, RATIO_TOL,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{ExperimentConfig, Format, Task};
pub use report::{emit_report, Num, ReportBody, ReportRecord, Row, Verdict};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("error at `{path}`: {source}")]
    Library {
        path: String,
        #[source]
        source: grand_poincare_core::Error,
    },
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn config(path: &str, message: impl Into<String>) -> Self {
        RunError::Config {
            path: if path.is_empty() { "<root>".into() } else { path.into() },
            message: message.into(),
        }
    }

    pub fn library(path: &str, source: grand_poincare_core::Error) -> Self {
        RunError::Library {
            path: path.into(),
            source,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_section<T: Serialize>(v: &T) -> String {
    sha256_hex(serde_json::to_string(v).expect("config sections serialize").as_bytes())
}

/// Accumulates a report body.
struct Body {
    scalars: BTreeMap<String, Num>,
    rows: Vec<Row>,
    verdicts: Vec<Verdict>,
    flags: Vec<String>,
}

impl Body {
    fn new() -> Self {
        Self {
            scalars: BTreeMap::new(),
            rows: Vec::new(),
            verdicts: Vec::new(),
            flags: Vec::new(),
        }
    }

    fn scalar(&mut self, key: impl Into<String>, value: f64) {
        self.scalars.insert(key.into(), Num(value));
    }

    fn flag(&mut self, flag: String) {
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
        }
    }

    fn add_report(&mut self, field: usize, report: &InequalityReport) {
        for r in &report.rows {
            self.rows.push(Row::compare(&report.grid_var, r.grid_value, r.lhs, r.rhs, report.tolerance).for_field(field));
        }
        for f in &report.flags {
            self.flag(format!("field[{field}]: {f}"));
        }
        self.verdicts.push(Verdict {
            label: format!("field[{field}]"),
            holds: report.holds,
            ratio: Num(report.ratio),
            degenerate: report.degenerate,
            witness: serde_json::to_value(&report.witness).expect("witnesses serialize"),
        });
    }
}

fn argmax_value(a: Argmax) -> f64 {
    match a {
        Argmax::At(p) => p,
        Argmax::UpperLimit => f64::INFINITY,
    }
}

/// Runs in the current rayon pool. Relative paths resolve against `base_dir`.
pub fn run(config: &ExperimentConfig, base_dir: &Path) -> Result<ReportRecord, RunError> {
    let started = Instant::now();
    let mut res = config::Resolver::new(config, base_dir.to_path_buf());
    let mut body = Body::new();
    let task = config.task;
    let lib = |path: &'static str| move |e| RunError::library(path, e);

    match task {
        Task::Norm => {
            let space = res.space()?;
            let fields = res.require_fields(&space)?;
            let psi = res.psi(&space)?;
            for (k, f) in fields.iter().enumerate() {
                let out = bgls_norm(&space, f, &psi).map_err(lib("fields"))?;
                body.scalar(format!("norm[{k}]"), out.value);
                body.scalar(format!("argmax_p[{k}]"), argmax_value(out.argmax));
                body.rows.push(Row::value("field", k as f64, out.value).for_field(k));
            }
            if fields.len() == 1 {
                let v = body.scalars["norm[0]"].0;
                body.scalar("norm", v);
            }
        }
        Task::Fundamental => {
            let psi = res.psi_without_space()?;
            for d in res.delta_grid()? {
                let phi = fundamental_function(&psi, d).map_err(lib("grids.delta"))?;
                body.rows.push(Row::value("delta", d, phi));
            }
            if config.space.is_some() {
                let space = res.space()?;
                let phi = fundamental_function(&psi, space.total_mass()).map_err(lib("space"))?;
                body.scalar("phi_total_mass", phi);
            }
        }
        Task::Asymptotics => {
            let family = match res.psi_without_space()? {
                PsiSpec::PowerBlowup { b, beta } => AsymptoticFamily::PowerBlowup { b, beta },
                PsiSpec::PolynomialGrowth { beta } => AsymptoticFamily::PolynomialGrowth { beta },
                _ => return Err(RunError::config("psi", "asymptotics needs power_blowup or polynomial_growth")),
            };
            for d in res.delta_grid()? {
                let c = asymptotic_ratio(family, d).map_err(lib("grids.delta"))?;
                body.rows.push(Row {
                    rhs: Some(Num(c.predicted)),
                    ratio: Some(Num(c.ratio)),
                    ..Row::value("delta", d, c.computed)
                });
                if let Some(st) = c.stationary {
                    body.scalar(format!("stationary(delta={d:e})"), st);
                }
            }
        }
        Task::Transfer => {
            let space = res.space()?;
            let psi = res.psi(&space)?;
            let t = res.transfer(&space, &psi)?;
            record_transfer(&mut body, &t);
            for q in res.q_grid()? {
                let nu = transfer_nu(&psi, &t.spec, q).map_err(lib("transfer"))?;
                body.rows.push(Row::value("q", q, nu));
            }
        }
        Task::VerifyPl => {
            let space = res.space()?;
            let fields = res.require_fields(&space)?;
            let psi = res.psi(&space)?;
            let t = res.transfer(&space, &psi)?;
            record_transfer(&mut body, &t);
            let q = res.q_grid()?;
            let check = Prop21::new(&space, &psi, &t.spec, &q, res.rule(&space), config.options.normalize)
                .map_err(lib("transfer"))?;
            for (k, f) in fields.iter().enumerate() {
                let rep = check.report(f.values()).map_err(lib("fields"))?;
                body.add_report(k, &rep);
            }
        }
        Task::VerifyAfe => {
            let space = res.space()?;
            let fields = res.require_fields(&space)?;
            let psi = res.psi(&space)?;
            let t = res.transfer(&space, &psi)?;
            record_transfer(&mut body, &t);
            let q = res.q_grid()?;
            let check = Afe::new(&space, &psi, &t.spec, &q, res.rule(&space)).map_err(lib("transfer"))?;
            let (pz, prp) = check.fundamental_values();
            body.scalar("phi_zeta", pz);
            body.scalar("phi_r_psi", prp);
            for (k, f) in fields.iter().enumerate() {
                let rep = check.report(f.values()).map_err(lib("fields"))?;
                body.add_report(k, &rep);
            }
        }
        Task::VerifyLip => {
            let space = res.space()?;
            let fields = res.require_fields(&space)?;
            let psi = res.psi(&space)?;
            let t = res.transfer(&space, &psi)?;
            record_transfer(&mut body, &t);
            let tau = res.tau_grid(&space)?;
            let check = Lip::new(&space, &psi, &t.spec, &tau, res.rule(&space)).map_err(lib("transfer"))?;
            for (k, f) in fields.iter().enumerate() {
                let rep = check.report(f.values()).map_err(lib("fields"))?;
                body.add_report(k, &rep);
            }
        }
        Task::EstimateKp => {
            let space = res.space()?;
            let p_grid = res.p_grid(|| vec![1.0, 2.0, 4.0])?;
            let q_grid = res.q_grid()?;
            let search = res.search();
            for &p in &p_grid {
                for &q in &q_grid {
                    let e = estimate_kp(&space, p, q, &search, res.rule(&space)).map_err(lib("grids"))?;
                    body.scalar(format!("kp(p={p},q={q})"), e.estimate);
                    body.rows.push(Row::value(&format!("q@p={p}"), q, e.estimate));
                }
            }
            body.flag("estimates are lower bounds of the true constants".into());
        }
        Task::EstimateKl => {
            let space = res.space()?;
            let (s, fitted) = res.order(&space)?;
            if let Some(s) = fitted {
                body.scalar("s", s);
            }
            let p_grid = res.p_grid(|| vec![1.5 * s, 2.0 * s, 4.0 * s])?;
            let search = res.search();
            for &p in &p_grid {
                let e = estimate_kl(&space, s, p, &search, res.rule(&space)).map_err(lib("grids.p"))?;
                body.scalar(format!("kl(p={p})"), e.estimate);
                body.rows.push(Row::value("p", p, e.estimate));
                body.flag(format!("pair(p={p}) = ({}, {})", e.pair.0, e.pair.1));
            }
            body.flag("estimates are lower bounds of the true constants".into());
        }
        Task::EstimateOrder => {
            let space = res.space()?;
            let est = res.order_estimate(&space)?;
            body.scalar("s", est.s);
            body.scalar("c_lower", est.c_lower);
            body.scalar("c_upper", est.c_upper);
            body.scalar("fit_residual", est.fit_residual);
            if !est.exceeds_one {
                body.flag("fitted order does not exceed 1".into());
            }
            body.rows.push(Row::scalar(est.s));
        }
        Task::Sharpness => {
            let space = res.space()?;
            let psi = res.psi(&space)?;
            let t = res.transfer(&space, &psi)?;
            record_transfer(&mut body, &t);
            let which = config
                .options
                .inequality
                .ok_or_else(|| RunError::config("options.inequality", "sharpness needs an inequality"))?;
            let grids = ProbeGrids {
                q: res.q_grid()?,
                tau: match which {
                    grand_poincare_core::poincare::Inequality::Lip => res.tau_grid(&space)?,
                    _ => Vec::new(),
                },
            };
            let out = sharpness_probe(&space, &psi, &t.spec, which, &grids, &res.search(), res.rule(&space))
                .map_err(lib("options.inequality"))?;
            body.scalar("best_ratio", out.best_ratio);
            body.rows.push(Row::scalar(out.best_ratio));
            body.verdicts.push(Verdict {
                label: "best_ratio".into(),
                holds: out.best_ratio <= 1.0 + RATIO_TOL,
                ratio: Num(out.best_ratio),
                degenerate: false,
                witness: serde_json::to_value(out.witness.values()).expect("fields serialize"),
            });
            body.flag("best_ratio is a lower bound of the sharpest ratio on this space".into());
        }
    }

    let mut inputs = BTreeMap::new();
    if let Some(space) = &config.space {
        inputs.insert("space".into(), hash_section(space));
    }
    if !config.fields.is_empty() {
        inputs.insert("fields".into(), hash_section(&config.fields));
    }
    if let Some(psi) = &config.psi {
        inputs.insert("psi".into(), hash_section(psi));
    }
    if let Some(t) = &config.transfer {
        inputs.insert("transfer".into(), hash_section(t));
    }
    inputs.insert("grids".into(), hash_section(&config.grids));
    inputs.insert("options".into(), hash_section(&config.options));
    for (name, bytes) in &res.file_inputs {
        inputs.insert(format!("file:{name}"), sha256_hex(bytes));
    }

    let mut echo = config.clone();
    echo.output = None;
    Ok(ReportRecord {
        body: ReportBody {
            task: task.name().into(),
            seed: config.seed,
            inputs,
            config: serde_json::to_value(&echo).expect("configs serialize"),
            scalars: body.scalars,
            rows: body.rows,
            verdicts: body.verdicts,
            flags: body.flags,
        },
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

fn record_transfer(body: &mut Body, t: &config::ResolvedTransfer) {
    for (k, v) in &t.estimated {
        body.scalar(k.clone(), *v);
    }
    if let Some(KpSpec::Table(table)) = &t.spec.kp {
        for (i, p) in table.p.iter().enumerate() {
            for (j, q) in table.q.iter().enumerate() {
                body.scalar(format!("kp(p={p},q={q})"), table.values[i][j]);
            }
        }
    }
}

/// Runs in a dedicated pool of `threads` workers (all cores when `None`).
pub fn run_with_threads(
    config: &ExperimentConfig,
    base_dir: &Path,
    threads: Option<usize>,
) -> Result<ReportRecord, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .expect("thread pool");
    pool.install(|| run(config, base_dir))
}

/// Exit status contract: nonzero iff a verdict failed.
pub fn exit_code(record: &ReportRecord) -> i32 {
    if record.body.all_hold() {
        0
    } else {
        1
    }
}
