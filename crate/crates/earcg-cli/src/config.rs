//! Experiment configuration: TOML schema, validation, CLI overrides, and
//! the content hash stamped into every trace file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use earcg::eametric::FomConfig;
use earcg::model::BuiltinModel;
use earcg::solvers::{CgVariant, LineSearchParams, SolverConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::HarnessError;

/// Canonical execution order; also the set of recognized solver names.
pub const SOLVER_ORDER: [&str; 4] = ["earcg", "eargd", "l2rcg", "scf"];

/// One experiment: a built-in model, a seeded shared initialization, and a
/// set of solvers with optional per-solver overrides.
///
/// Scalar fields precede the table-valued ones so the configuration
/// serializes back to TOML without reordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for the shared random initial frame.
    pub seed: u64,
    /// Where traces and the summary land; defaults to the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub model: ModelSection,
    /// Initialization rule; defaults to the model's preferred rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSection>,
    #[serde(rename = "solver", default, skip_serializing_if = "BTreeMap::is_empty")]
    pub solvers: BTreeMap<String, SolverSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Name of a built-in model; see `--list-models`.
    pub builtin: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub rule: InitRuleName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitRuleName {
    /// Seeded random frame refined by damped SCF to density difference 0.1.
    Scf,
    /// Raw seeded random orthonormal frame.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CgVariantName {
    FletcherReeves,
    PolakRibiere,
    Hybrid,
}

impl From<CgVariantName> for CgVariant {
    fn from(v: CgVariantName) -> CgVariant {
        match v {
            CgVariantName::FletcherReeves => CgVariant::FletcherReeves,
            CgVariantName::PolakRibiere => CgVariant::PolakRibiere,
            CgVariantName::Hybrid => CgVariant::Hybrid,
        }
    }
}

/// Per-solver overrides. Every field is optional; unset fields fall back to
/// the library defaults. `mixing_alpha` and `tol_density` apply to the SCF
/// baseline only, the remaining fields to the gradient-based solvers only
/// (`max_iters` is shared).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub res_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_variant: Option<CgVariantName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_search: Option<LineSearchSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fom: Option<FomSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LineSearchSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_ls: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_ls_iters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FomSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_block_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qr_drop_tol: Option<f64>,
}

/// Effective SCF-baseline parameters after merging overrides.
#[derive(Debug, Clone, Copy)]
pub struct ScfParams {
    pub mixing_alpha: f64,
    pub tol_density: f64,
    pub max_iters: usize,
}

impl Default for ScfParams {
    fn default() -> Self {
        ScfParams {
            mixing_alpha: 0.15,
            tol_density: 1e-9,
            max_iters: 500,
        }
    }
}

impl ExperimentConfig {
    /// Read and validate a configuration file.
    pub fn load(path: &Path) -> Result<ExperimentConfig, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io(format!("reading {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("parsing {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if BuiltinModel::from_name(&self.model.builtin).is_none() {
            return Err(HarnessError::Config(format!(
                "unknown model '{}'; available: {}",
                self.model.builtin,
                BuiltinModel::names().join(", ")
            )));
        }
        if self.solvers.is_empty() {
            return Err(HarnessError::Config(
                "at least one [solver.<name>] section is required".into(),
            ));
        }
        for (name, section) in &self.solvers {
            if !SOLVER_ORDER.contains(&name.as_str()) {
                return Err(HarnessError::Config(format!(
                    "unknown solver '{name}'; available: {}",
                    SOLVER_ORDER.join(", ")
                )));
            }
            let is_scf = name == "scf";
            let reject = |field: &str| {
                Err(HarnessError::Config(format!(
                    "field '{field}' does not apply to solver '{name}'"
                )))
            };
            if is_scf {
                if section.res_tol.is_some() {
                    return reject("res_tol");
                }
                if section.mu.is_some() {
                    return reject("mu");
                }
                if section.cg_variant.is_some() {
                    return reject("cg_variant");
                }
                if section.initial_step.is_some() {
                    return reject("initial_step");
                }
                if section.line_search.is_some() {
                    return reject("line_search");
                }
                if section.fom.is_some() {
                    return reject("fom");
                }
            } else {
                if section.mixing_alpha.is_some() {
                    return reject("mixing_alpha");
                }
                if section.tol_density.is_some() {
                    return reject("tol_density");
                }
            }
        }
        Ok(())
    }

    /// Apply CLI overrides, returning the effective configuration that runs
    /// (and that the config hash is computed over).
    pub fn with_overrides(
        mut self,
        seed: Option<u64>,
        out: Option<&Path>,
        solver_filter: Option<&[String]>,
    ) -> Result<ExperimentConfig, HarnessError> {
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if let Some(out) = out {
            self.output_dir = Some(out.to_path_buf());
        }
        if let Some(filter) = solver_filter {
            for name in filter {
                if !SOLVER_ORDER.contains(&name.as_str()) {
                    return Err(HarnessError::Config(format!(
                        "--solvers: unknown solver '{name}'"
                    )));
                }
            }
            self.solvers.retain(|name, _| filter.iter().any(|f| f == name));
            if self.solvers.is_empty() {
                return Err(HarnessError::Config(
                    "--solvers filter removed every configured solver".into(),
                ));
            }
        }
        Ok(self)
    }

    pub fn builtin(&self) -> BuiltinModel {
        BuiltinModel::from_name(&self.model.builtin).expect("validated builtin name")
    }

    /// Solver names present in this experiment, in canonical order.
    pub fn ordered_solvers(&self) -> Vec<&str> {
        SOLVER_ORDER
            .iter()
            .copied()
            .filter(|name| self.solvers.contains_key(*name))
            .collect()
    }

    /// Merge the overrides of `name` onto the library defaults.
    pub fn solver_config(&self, name: &str) -> SolverConfig {
        let section = self.solvers.get(name).cloned().unwrap_or_default();
        let mut cfg = SolverConfig::default();
        if let Some(v) = section.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = section.res_tol {
            cfg.res_tol = v;
        }
        if let Some(v) = section.mu {
            cfg.mu = v;
        }
        if let Some(v) = section.cg_variant {
            cfg.cg_variant = v.into();
        }
        if let Some(v) = section.initial_step {
            cfg.initial_step = v;
        }
        if let Some(ls) = &section.line_search {
            let d = LineSearchParams::default();
            cfg.line_search = LineSearchParams {
                delta: ls.delta.unwrap_or(d.delta),
                sigma_ls: ls.sigma_ls.unwrap_or(d.sigma_ls),
                gamma: ls.gamma.unwrap_or(d.gamma),
                epsilon: ls.epsilon.unwrap_or(d.epsilon),
                max_ls_iters: ls.max_ls_iters.unwrap_or(d.max_ls_iters),
            };
        }
        if let Some(fom) = &section.fom {
            let d = FomConfig::default();
            cfg.fom = FomConfig {
                rel_tol: fom.rel_tol.unwrap_or(d.rel_tol),
                max_block_iters: fom.max_block_iters.unwrap_or(d.max_block_iters),
                qr_drop_tol: fom.qr_drop_tol.unwrap_or(d.qr_drop_tol),
            };
        }
        cfg
    }

    pub fn scf_params(&self) -> ScfParams {
        let section = self.solvers.get("scf").cloned().unwrap_or_default();
        let d = ScfParams::default();
        ScfParams {
            mixing_alpha: section.mixing_alpha.unwrap_or(d.mixing_alpha),
            tol_density: section.tol_density.unwrap_or(d.tol_density),
            max_iters: section.max_iters.unwrap_or(d.max_iters),
        }
    }

    /// Hex digest of the effective configuration, stamped into every trace
    /// footer so outputs are traceable to the exact settings that ran. The
    /// output directory is excluded: it changes where results land, not
    /// what they are, and reruns relocated with `--out` must stay
    /// comparable.
    pub fn content_hash(&self) -> String {
        let mut semantic = self.clone();
        semantic.output_dir = None;
        let canonical = toml::to_string(&semantic).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}
