//! Experiment configuration: one JSON document drives every mode.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use equinash_core::model::{contraction_constant, validate_params, ModelParams, ScalarSpec, SignalParams, TimeGrid};
use equinash_core::perturbation::{geometric_h_grid, Route};
use equinash_core::picard::PicardOptions;
use equinash_core::projection::BasisSpec;
use equinash_core::{Grid, Matrix, Params};
use serde::{Deserialize, Serialize};

/// A matrix entry: a scalar means `x·I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatDoc {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

/// A vector entry: a scalar is broadcast to every component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VecDoc {
    Scalar(f64),
    Items(Vec<f64>),
}

impl MatDoc {
    fn dim(&self) -> Option<usize> {
        match self {
            MatDoc::Scalar(_) => None,
            MatDoc::Rows(r) => Some(r.len()),
        }
    }

    fn to_mat(&self, k: usize, name: &str) -> Result<Matrix> {
        match self {
            MatDoc::Scalar(x) => Ok(Matrix::identity(k).scale(*x)),
            MatDoc::Rows(r) => Matrix::from_rows(r).map_err(|e| anyhow!("params.{name}: {e}")),
        }
    }
}

impl VecDoc {
    fn dim(&self) -> Option<usize> {
        match self {
            VecDoc::Scalar(_) => None,
            VecDoc::Items(v) => Some(v.len()),
        }
    }

    fn to_vec(&self, k: usize) -> Vec<f64> {
        match self {
            VecDoc::Scalar(x) => vec![*x; k],
            VecDoc::Items(v) => v.clone(),
        }
    }
}

/// Model parameters as written in the document. Omitted entries take the
/// baseline values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsDoc {
    pub horizon: f64,
    pub a: MatDoc,
    pub b: MatDoc,
    pub h: MatDoc,
    pub p: MatDoc,
    pub phi: MatDoc,
    pub psi: MatDoc,
    pub r_b: MatDoc,
    pub r_i: MatDoc,
    pub q_b0: VecDoc,
    pub q_i0: VecDoc,
    pub x_b0: f64,
    pub x_i0: f64,
    pub y0: VecDoc,
    pub z0: VecDoc,
    /// `K × D` price volatility.
    pub sigma: MatDoc,
    pub kappa: MatDoc,
    pub theta: VecDoc,
    pub sigma_alpha: MatDoc,
    pub alpha0_mean: VecDoc,
    pub alpha0_var: MatDoc,
}

impl From<ScalarSpec> for ParamsDoc {
    fn from(s: ScalarSpec) -> Self {
        let m = MatDoc::Scalar;
        let v = VecDoc::Scalar;
        Self {
            horizon: s.horizon,
            a: m(s.a),
            b: m(s.b),
            h: m(s.h),
            p: m(s.p),
            phi: m(s.phi),
            psi: m(s.psi),
            r_b: m(s.r_b),
            r_i: m(s.r_i),
            q_b0: v(s.q_b0),
            q_i0: v(s.q_i0),
            x_b0: s.x_b0,
            x_i0: s.x_i0,
            y0: v(s.y0),
            z0: v(s.z0),
            sigma: m(s.sigma),
            kappa: m(s.kappa),
            theta: v(s.theta),
            sigma_alpha: m(s.sigma_alpha),
            alpha0_mean: v(s.alpha0_mean),
            alpha0_var: m(s.alpha0_var),
        }
    }
}

impl Default for ParamsDoc {
    fn default() -> Self {
        ScalarSpec::baseline().into()
    }
}

impl ParamsDoc {
    fn mats(&self) -> [(&'static str, &MatDoc); 12] {
        [
            ("a", &self.a),
            ("b", &self.b),
            ("h", &self.h),
            ("p", &self.p),
            ("phi", &self.phi),
            ("psi", &self.psi),
            ("r_b", &self.r_b),
            ("r_i", &self.r_i),
            ("kappa", &self.kappa),
            ("sigma_alpha", &self.sigma_alpha),
            ("alpha0_var", &self.alpha0_var),
            ("sigma", &self.sigma),
        ]
    }

    fn vecs(&self) -> [&VecDoc; 6] {
        [&self.q_b0, &self.q_i0, &self.y0, &self.z0, &self.theta, &self.alpha0_mean]
    }

    /// Number of assets: the size of any explicitly written matrix or vector, else 1.
    pub fn k(&self) -> usize {
        self.mats()
            .iter()
            .filter_map(|(_, m)| m.dim())
            .chain(self.vecs().iter().filter_map(|v| v.dim()))
            .next()
            .unwrap_or(1)
    }

    pub fn build(&self) -> Result<Params> {
        let k = self.k();
        let mat = |name: &str, m: &MatDoc| m.to_mat(k, name);
        let sigma = mat("sigma", &self.sigma)?;
        Ok(ModelParams {
            k,
            d: sigma.cols(),
            horizon: self.horizon,
            a: mat("a", &self.a)?,
            b: mat("b", &self.b)?,
            h: mat("h", &self.h)?,
            p: mat("p", &self.p)?,
            phi: mat("phi", &self.phi)?,
            psi: mat("psi", &self.psi)?,
            r_b: mat("r_b", &self.r_b)?,
            r_i: mat("r_i", &self.r_i)?,
            q_b0: self.q_b0.to_vec(k),
            q_i0: self.q_i0.to_vec(k),
            x_b0: self.x_b0,
            x_i0: self.x_i0,
            y0: self.y0.to_vec(k),
            z0: self.z0.to_vec(k),
            sigma,
            signal: SignalParams {
                kappa: mat("kappa", &self.kappa)?,
                theta: self.theta.to_vec(k),
                sigma_alpha: mat("sigma_alpha", &self.sigma_alpha)?,
                alpha0_mean: self.alpha0_mean.to_vec(k),
                alpha0_var: mat("alpha0_var", &self.alpha0_var)?,
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridDoc {
    pub n_steps: usize,
}

impl Default for GridDoc {
    fn default() -> Self {
        Self { n_steps: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverDoc {
    pub tol: f64,
    pub max_iter: usize,
    pub basis: BasisSpec,
}

impl Default for SolverDoc {
    fn default() -> Self {
        let o = PicardOptions::default();
        Self { tol: o.tol, max_iter: o.max_iter, basis: BasisSpec::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationDoc {
    /// Truncation order `M`.
    pub order: usize,
    pub route: Route,
    /// Largest impact strength of the scaling study.
    pub h_ref: f64,
    /// Number of halvings of `h_ref`.
    pub h_points: usize,
    /// Explicit grid; overrides `h_ref` and `h_points`.
    pub h_grid: Option<Vec<f64>>,
    /// Picard tolerance for the coefficient and remainder solves (the tighter of
    /// this and `solver.tol` is used).
    pub tol: f64,
}

impl Default for PerturbationDoc {
    fn default() -> Self {
        Self { order: 1, route: Route::Grid, h_ref: 1.0, h_points: 5, h_grid: None, tol: 1e-10 }
    }
}

impl PerturbationDoc {
    pub fn h_grid(&self) -> Vec<f64> {
        self.h_grid.clone().unwrap_or_else(|| geometric_h_grid(self.h_ref, self.h_points))
    }
}

/// Sizes of the verification battery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyDoc {
    pub riccati_pairs: usize,
    pub contraction_pairs: usize,
    /// Slack added to `C(T)` for the measured contraction ratio.
    pub contraction_slack: f64,
    pub gateaux_directions: usize,
    pub deviations: usize,
    pub deviation_step: f64,
    pub concavity_pairs: usize,
    pub particles: usize,
    pub particle_groups: usize,
    /// Path whose price record feeds the particle filter.
    pub filter_path: usize,
    pub autocorrelation_lags: usize,
}

impl Default for VerifyDoc {
    fn default() -> Self {
        Self {
            riccati_pairs: 50,
            contraction_pairs: 100,
            contraction_slack: 0.05,
            gateaux_directions: 20,
            deviations: 10,
            deviation_step: 0.1,
            concavity_pairs: 20,
            particles: 100_000,
            particle_groups: 20,
            filter_path: 0,
            autocorrelation_lags: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputDoc {
    /// Used when no `--out` is given.
    pub dir: Option<String>,
    /// Paths written to per-path CSV files (the first ones of the ensemble).
    pub export_paths: usize,
}

impl Default for OutputDoc {
    fn default() -> Self {
        Self { dir: None, export_paths: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub params: ParamsDoc,
    #[serde(default)]
    pub grid: GridDoc,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverDoc,
    #[serde(default)]
    pub perturbation: PerturbationDoc,
    #[serde(default)]
    pub verify: VerifyDoc,
    #[serde(default)]
    pub output: OutputDoc,
}

fn default_n_paths() -> usize {
    10_000
}

fn default_seed() -> u64 {
    42
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            params: ParamsDoc::default(),
            grid: GridDoc::default(),
            n_paths: default_n_paths(),
            seed: default_seed(),
            solver: SolverDoc::default(),
            perturbation: PerturbationDoc::default(),
            verify: VerifyDoc::default(),
            output: OutputDoc::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn params(&self) -> Result<Params> {
        self.params.build()
    }

    pub fn grid(&self) -> Result<Grid> {
        Ok(TimeGrid::new(self.params.horizon, self.grid.n_steps)?)
    }

    pub fn picard(&self) -> PicardOptions {
        PicardOptions { tol: self.solver.tol, max_iter: self.solver.max_iter }
    }

    /// Every structural check at once; the error lists each failure.
    pub fn validate(&self) -> Result<()> {
        let params = self.params()?;
        let report = validate_params(&params);
        let mut problems: Vec<String> =
            report.failures().iter().map(|c| format!("{} (violation {:e})", c.name, c.violation)).collect();
        if self.n_paths < 2 {
            problems.push("n_paths must be at least 2".into());
        }
        if self.grid.n_steps == 0 {
            problems.push("grid.n_steps must be positive".into());
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            problems.push("solver.tol and solver.max_iter must be positive".into());
        }
        if !(1..=2).contains(&self.solver.basis.degree) {
            problems.push("solver.basis.degree must be 1 or 2".into());
        }
        if self.perturbation.h_grid().iter().any(|&h| !(h > 0.0)) {
            problems.push("perturbation h grid must be positive".into());
        }
        if self.verify.particle_groups < 2 || self.verify.filter_path >= self.n_paths {
            problems.push("verify needs at least two particle groups and an existing filter path".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            bail!("invalid configuration:\n  - {}", problems.join("\n  - "))
        }
    }

    pub fn contraction_constant(&self) -> Result<f64> {
        Ok(contraction_constant(&self.params()?)?)
    }
}

/// Parses and validates a document; errors name the offending key and line.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        anyhow!("config error at `{path}` (line {}, column {}): {inner}", inner.line(), inner.column())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("loading {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gets_defaults() {
        let cfg = parse_config("{}").unwrap();
        assert_eq!(cfg.n_paths, 10_000);
        assert_eq!(cfg.grid.n_steps, 100);
        assert_eq!(cfg.solver.tol, 1e-6);
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn round_trip_is_lossless() {
        let text = r#"{"params": {"a": [[2.0]], "q_i0": [1.5], "psi": 0.3}, "n_paths": 500, "seed": 9,
                       "perturbation": {"h_grid": [0.2, 0.1]}}"#;
        let cfg = parse_config(text).unwrap();
        let again = parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn negative_cost_names_the_invariant() {
        let err = parse_config(r#"{"params": {"a": -1.0}}"#).unwrap_err().to_string();
        assert!(err.contains("a positive definite"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected_with_location() {
        let err = parse_config("{\n \"solver\": {\"tolerance\": 1e-3}\n}").unwrap_err().to_string();
        assert!(err.contains("solver") && err.contains("tolerance") && err.contains("line 2"), "{err}");
    }

    #[test]
    fn all_failures_are_listed() {
        let err = parse_config(r#"{"params": {"a": -1.0, "b": -1.0}, "n_paths": 1}"#).unwrap_err().to_string();
        assert!(err.contains("a positive definite") && err.contains("b positive definite") && err.contains("n_paths"));
    }

    #[test]
    fn baseline_sits_in_contraction_regime() {
        let c = ExperimentConfig::default().contraction_constant().unwrap();
        assert!((c - 0.24625).abs() < 1e-12);
    }

    #[test]
    fn matrices_broadcast_to_the_asset_count() {
        let cfg = parse_config(r#"{"params": {"q_i0": [1.0, 2.0], "sigma": [[0.5, 0.0], [0.1, 0.4]]}}"#).unwrap();
        let p = cfg.params().unwrap();
        assert_eq!((p.k, p.d), (2, 2));
        assert_eq!(p.a, Matrix::identity(2));
    }
}
