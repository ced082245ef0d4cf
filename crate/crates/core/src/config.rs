//! TOML and JSON documents for model specs and experiments.
//!
//! A model document:
//!
//! ```toml
//! variant = "unnormalized"   # or "normalized"
//! n = 300
//! p = 600
//! kappa = 1                  # optional, must match the prior dimension
//!
//! [theta_prior]
//! kind = "gaussian"          # "gaussian" | "rademacher" | "bounded_discrete"
//! covariance = [[0.64]]
//!
//! [u_prior]
//! kind = "rademacher"
//! dim = 1
//! ```
//!
//! Bounded-discrete priors take `atoms` (list of rows) and `weights`; every
//! prior accepts an optional `variance_proxy`. An experiment document nests a
//! model document under `model` and adds `kind` (`"clt"` or `"llr"`),
//! `hypothesis`, `reps`, `k_list`, `m`, `master_seed`, `output_path` and
//! `mc_draws`. Validation reports every violation with its dotted path.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde_json::{json, Map, Value};

use crate::defaults::{DEFAULT_MC_DRAWS, DEFAULT_REPS, DEFAULT_SEED};
use crate::error::{Error, Result, Violation};
use crate::experiments::{settings_violations, ExperimentConfig, ExperimentKind, Hypothesis};
use crate::linalg::{self, from_rows, to_rows};
use crate::model::{ModelSpec, PriorKind, PriorSpec, Variant};

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigDoc {
    Model(ModelSpec),
    Experiment(ExperimentConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    /// JSON for `.json` paths, TOML for `.toml`, otherwise sniffed from the text.
    pub fn detect(path: Option<&Path>, text: &str) -> Self {
        match path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            Some("toml") => Format::Toml,
            _ if text.trim_start().starts_with('{') => Format::Json,
            _ => Format::Toml,
        }
    }
}

fn parse_value(text: &str, format: Format) -> Result<Value> {
    let fail = |msg: String| Error::Config(vec![Violation::new("<document>", msg)]);
    match format {
        Format::Json => serde_json::from_str(text).map_err(|e| fail(e.to_string())),
        Format::Toml => {
            let v: toml::Value = toml::from_str(text).map_err(|e| fail(e.to_string()))?;
            serde_json::to_value(v).map_err(|e| fail(e.to_string()))
        }
    }
}

/// Parses and validates a document, sniffing its format.
pub fn parse_config(text: &str) -> Result<ConfigDoc> {
    parse_config_as(text, Format::detect(None, text))
}

pub fn parse_config_as(text: &str, format: Format) -> Result<ConfigDoc> {
    let value = parse_value(text, format)?;
    let mut w = Walker::default();
    let doc = match value.as_object() {
        Some(obj) if obj.contains_key("model") => w.experiment(obj).map(ConfigDoc::Experiment),
        Some(obj) => w.model(obj, "").map(ConfigDoc::Model),
        None => {
            w.push("<document>", "top level must be a table");
            None
        }
    };
    match doc {
        Some(doc) if w.violations.is_empty() => Ok(doc),
        _ => Err(Error::Config(w.violations)),
    }
}

pub fn load_config(path: &Path) -> Result<ConfigDoc> {
    let text = crate::io::read_text(path)?;
    parse_config_as(&text, Format::detect(Some(path), &text))
}

/// Parses a document that must describe a model.
pub fn parse_model(text: &str) -> Result<ModelSpec> {
    match parse_config(text)? {
        ConfigDoc::Model(spec) => Ok(spec),
        ConfigDoc::Experiment(e) => Ok(e.spec),
    }
}

#[derive(Default)]
struct Walker {
    violations: Vec<Violation>,
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

impl Walker {
    fn push(&mut self, path: impl Into<String>, msg: impl Into<String>) {
        self.violations.push(Violation::new(path, msg));
    }

    fn unknown_keys(&mut self, obj: &Map<String, Value>, prefix: &str, allowed: &[&str]) {
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                self.push(join(prefix, key), "unknown field");
            }
        }
    }

    fn required<'a>(&mut self, obj: &'a Map<String, Value>, prefix: &str, key: &str) -> Option<&'a Value> {
        let v = obj.get(key);
        if v.is_none() {
            self.push(join(prefix, key), "missing required field");
        }
        v
    }

    fn as_uint(&mut self, v: &Value, path: &str) -> Option<u64> {
        let out = v.as_u64();
        if out.is_none() {
            self.push(path, format!("expected a non-negative integer, got {v}"));
        }
        out
    }

    fn as_str<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a str> {
        let out = v.as_str();
        if out.is_none() {
            self.push(path, format!("expected a string, got {v}"));
        }
        out
    }

    fn as_rows(&mut self, v: &Value, path: &str) -> Option<Vec<Vec<f64>>> {
        let rows = v.as_array().and_then(|rows| {
            rows.iter()
                .map(|r| r.as_array().and_then(|r| r.iter().map(Value::as_f64).collect()))
                .collect::<Option<Vec<Vec<f64>>>>()
        });
        if rows.is_none() {
            self.push(path, "expected a list of numeric rows");
        }
        rows
    }

    fn as_matrix(&mut self, v: &Value, path: &str) -> Option<DMatrix<f64>> {
        let rows = self.as_rows(v, path)?;
        match from_rows(&rows) {
            Ok(m) if m.nrows() == m.ncols() && m.nrows() > 0 => Some(m),
            Ok(m) => {
                self.push(path, format!("expected a non-empty square matrix, got {}x{}", m.nrows(), m.ncols()));
                None
            }
            Err(e) => {
                self.push(path, e.to_string());
                None
            }
        }
    }

    /// Symmetric PSD check with a message naming the smallest eigenvalue.
    fn psd(&mut self, m: DMatrix<f64>, path: &str) -> Option<DMatrix<f64>> {
        match linalg::ensure_psd(&m, path) {
            Ok(()) => Some(m),
            Err(Error::NotPsd { min_eigenvalue }) => {
                self.push(path, format!("not positive semidefinite (min eigenvalue {min_eigenvalue:e})"));
                None
            }
            Err(e) => {
                self.push(path, e.to_string());
                None
            }
        }
    }

    fn prior(&mut self, v: &Value, path: &str) -> Option<PriorSpec> {
        let Some(obj) = v.as_object() else {
            self.push(path, "expected a table");
            return None;
        };
        let kind = self.required(obj, path, "kind").and_then(|k| self.as_str(k, &join(path, "kind")));
        let proxy = obj
            .get("variance_proxy")
            .and_then(|p| self.as_matrix(p, &join(path, "variance_proxy")))
            .and_then(|m| self.psd(m, &join(path, "variance_proxy")));
        let prior = match kind? {
            "gaussian" => {
                self.unknown_keys(obj, path, &["kind", "covariance", "variance_proxy"]);
                let cov_path = join(path, "covariance");
                let cov = self.required(obj, path, "covariance").and_then(|c| self.as_matrix(c, &cov_path));
                let cov = cov.and_then(|c| self.psd(c, &cov_path))?;
                PriorSpec::gaussian(cov).ok()?
            }
            "rademacher" => {
                self.unknown_keys(obj, path, &["kind", "dim", "variance_proxy"]);
                let dim_path = join(path, "dim");
                let dim = self.required(obj, path, "dim").and_then(|d| self.as_uint(d, &dim_path))?;
                match PriorSpec::rademacher(dim as usize) {
                    Ok(p) => p,
                    Err(e) => {
                        self.push(dim_path, e.to_string());
                        return None;
                    }
                }
            }
            "bounded_discrete" => {
                self.unknown_keys(obj, path, &["kind", "atoms", "weights", "variance_proxy"]);
                let atoms = self
                    .required(obj, path, "atoms")
                    .and_then(|a| self.as_rows(a, &join(path, "atoms")));
                let weights_path = join(path, "weights");
                let weights = self.required(obj, path, "weights").and_then(|w| {
                    let out = w.as_array().and_then(|w| w.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>());
                    if out.is_none() {
                        self.push(&weights_path, "expected a list of numbers");
                    }
                    out
                });
                match PriorSpec::bounded_discrete(atoms?, weights?) {
                    Ok(p) => p,
                    Err(e) => {
                        self.push(join(path, "atoms"), e.to_string());
                        return None;
                    }
                }
            }
            other => {
                self.push(
                    join(path, "kind"),
                    format!("unknown prior kind {other:?} (expected gaussian, rademacher or bounded_discrete)"),
                );
                return None;
            }
        };
        match proxy {
            Some(proxy) => match prior.with_variance_proxy(proxy) {
                Ok(p) => Some(p),
                Err(e) => {
                    self.push(join(path, "variance_proxy"), e.to_string());
                    None
                }
            },
            None if obj.contains_key("variance_proxy") => None,
            None => Some(prior),
        }
    }

    fn model(&mut self, obj: &Map<String, Value>, prefix: &str) -> Option<ModelSpec> {
        let before = self.violations.len();
        self.unknown_keys(obj, prefix, &["variant", "n", "p", "kappa", "theta_prior", "u_prior"]);
        let variant = self
            .required(obj, prefix, "variant")
            .and_then(|v| self.as_str(v, &join(prefix, "variant")))
            .and_then(|v| match v {
                "unnormalized" => Some(Variant::Unnormalized),
                "normalized" => Some(Variant::Normalized),
                other => {
                    self.push(join(prefix, "variant"), format!("expected unnormalized or normalized, got {other:?}"));
                    None
                }
            });
        let dim = |key: &str, w: &mut Self| -> Option<usize> {
            let path = join(prefix, key);
            let v = w.required(obj, prefix, key).and_then(|v| w.as_uint(v, &path))?;
            if v == 0 {
                w.push(path, "must be positive");
                return None;
            }
            Some(v as usize)
        };
        let n = dim("n", self);
        let p = dim("p", self);
        let kappa = obj.get("kappa").and_then(|k| self.as_uint(k, &join(prefix, "kappa")));
        let theta = self
            .required(obj, prefix, "theta_prior")
            .and_then(|v| self.prior(v, &join(prefix, "theta_prior")));
        let u = self
            .required(obj, prefix, "u_prior")
            .and_then(|v| self.prior(v, &join(prefix, "u_prior")));

        let rank = kappa.map(|k| k as usize).or(theta.as_ref().map(PriorSpec::dim));
        if let (Some(t), Some(u)) = (&theta, &u) {
            if t.dim() != u.dim() {
                self.push(
                    join(prefix, "u_prior"),
                    format!("dimension {} differs from theta_prior dimension {}", u.dim(), t.dim()),
                );
            }
        }
        if let (Some(k), Some(t)) = (kappa, &theta) {
            if k as usize != t.dim() {
                self.push(join(prefix, "kappa"), format!("is {k} but the priors have dimension {}", t.dim()));
            }
        }
        if let (Some(k), Some(n), Some(p)) = (rank, n, p) {
            if k >= n.min(p) {
                self.push(join(prefix, "kappa"), format!("kappa = {k} must be smaller than min(n, p) = {}", n.min(p)));
            }
        }
        if self.violations.len() > before {
            return None;
        }
        match ModelSpec::new(variant?, n?, p?, theta?, u?) {
            Ok(s) => Some(s),
            Err(e) => {
                self.push(prefix, e.to_string());
                None
            }
        }
    }

    fn experiment(&mut self, obj: &Map<String, Value>) -> Option<ExperimentConfig> {
        self.unknown_keys(
            obj,
            "",
            &["model", "kind", "hypothesis", "reps", "k_list", "m", "master_seed", "output_path", "mc_draws"],
        );
        let spec = match obj["model"].as_object() {
            Some(m) => self.model(m, "model"),
            None => {
                self.push("model", "expected a table");
                None
            }
        };
        let kind = match obj.get("kind").map(|k| (k, self.as_str(k, "kind"))) {
            None => Some(ExperimentKind::Clt),
            Some((_, Some("clt"))) => Some(ExperimentKind::Clt),
            Some((_, Some("llr"))) => Some(ExperimentKind::Llr),
            Some((k, Some(_))) => {
                self.push("kind", format!("expected clt or llr, got {k}"));
                None
            }
            Some((_, None)) => None,
        };
        let hypothesis = match obj.get("hypothesis").map(|h| (h, self.as_str(h, "hypothesis"))) {
            None => Some(Hypothesis::Null),
            Some((_, Some("null"))) => Some(Hypothesis::Null),
            Some((_, Some("alternative"))) => Some(Hypothesis::Alternative),
            Some((h, Some(_))) => {
                self.push("hypothesis", format!("expected null or alternative, got {h}"));
                None
            }
            Some((_, None)) => None,
        };
        let uint = |key: &str, default: u64, w: &mut Self| -> Option<u64> {
            match obj.get(key) {
                Some(v) => w.as_uint(v, key),
                None => Some(default),
            }
        };
        let reps = uint("reps", DEFAULT_REPS as u64, self);
        let m = uint("m", 3, self);
        let master_seed = uint("master_seed", DEFAULT_SEED, self);
        let mc_draws = uint("mc_draws", DEFAULT_MC_DRAWS as u64, self);
        let k_list = match obj.get("k_list") {
            None => Some(vec![1, 2, 3]),
            Some(v) => {
                let out = v
                    .as_array()
                    .and_then(|a| a.iter().map(|k| k.as_u64().map(|k| k as usize)).collect::<Option<Vec<_>>>());
                if out.is_none() {
                    self.push("k_list", "expected a list of non-negative integers");
                }
                out
            }
        };
        let output_path = match obj.get("output_path") {
            None => Some(None),
            Some(v) => self.as_str(v, "output_path").map(|s| Some(PathBuf::from(s))),
        };
        if let (Some(reps), Some(k_list), Some(m), Some(mc_draws)) = (reps, &k_list, m, mc_draws) {
            self.violations
                .extend(settings_violations(reps as usize, k_list, m as usize, mc_draws as usize));
        }
        let config = ExperimentConfig {
            kind: kind?,
            spec: spec?,
            hypothesis: hypothesis?,
            reps: reps? as usize,
            k_list: k_list?,
            m: m? as usize,
            master_seed: master_seed?,
            output_path: output_path?,
            mc_draws: mc_draws? as usize,
        };
        Some(config)
    }
}

fn prior_value(prior: &PriorSpec) -> Value {
    let mut v = match prior.kind() {
        PriorKind::Gaussian => json!({"kind": "gaussian", "covariance": to_rows(prior.covariance())}),
        PriorKind::Rademacher => json!({"kind": "rademacher", "dim": prior.dim()}),
        PriorKind::BoundedDiscrete { atoms, weights } => {
            json!({"kind": "bounded_discrete", "atoms": atoms, "weights": weights})
        }
    };
    v["variance_proxy"] = json!(to_rows(prior.variance_proxy()));
    v
}

pub fn model_value(spec: &ModelSpec) -> Value {
    json!({
        "variant": match spec.variant {
            Variant::Unnormalized => "unnormalized",
            Variant::Normalized => "normalized",
        },
        "n": spec.n,
        "p": spec.p,
        "kappa": spec.kappa,
        "theta_prior": prior_value(&spec.theta_prior),
        "u_prior": prior_value(&spec.u_prior),
    })
}

pub fn experiment_value(config: &ExperimentConfig) -> Value {
    let mut v = json!({
        "model": model_value(&config.spec),
        "kind": config.kind,
        "hypothesis": config.hypothesis,
        "reps": config.reps,
        "k_list": config.k_list,
        "m": config.m,
        "master_seed": config.master_seed,
        "mc_draws": config.mc_draws,
    });
    if let Some(path) = &config.output_path {
        v["output_path"] = json!(path.to_string_lossy());
    }
    v
}

fn doc_value(doc: &ConfigDoc) -> Value {
    match doc {
        ConfigDoc::Model(spec) => model_value(spec),
        ConfigDoc::Experiment(config) => experiment_value(config),
    }
}

/// Serializes a document so that parsing the result gives it back unchanged.
pub fn serialize_config(doc: &ConfigDoc, format: Format) -> Result<String> {
    let value = doc_value(doc);
    match format {
        Format::Json => serde_json::to_string_pretty(&value).map_err(|e| Error::Serialize(e.to_string())),
        Format::Toml => toml::to_string(&value).map_err(|e| Error::Serialize(e.to_string())),
    }
}
