//! Experiment execution: shared initialization, per-solver runs with wall
//! clocks and operator counters, and CSV trace serialization.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use earcg::model::{presets::InitRule, KohnShamModel};
use earcg::solvers::{
    run_earcg, run_eargd, run_l2rcg, run_scf, IterRecord, SolverStatus, SolverTrace,
};
use earcg::stiefel::{is_on_manifold, random_frame, Frame};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, InitRuleName};
use crate::HarnessError;

/// Mixing factors tried, in order, by the SCF refinement of the shared
/// initial frame. Strong nonlinearities need sub-critical damping, so the
/// ladder descends; the first factor that reaches the density threshold
/// wins.
const INIT_MIXING_LADDER: [f64; 3] = [0.3, 0.15, 0.08];
/// Density-difference threshold of the shared initializer.
const INIT_DENSITY_TOL: f64 = 0.1;
/// SCF sweep budget per ladder rung during initialization.
const INIT_MAX_SWEEPS: usize = 300;

/// Everything one solver run leaves behind.
pub struct SolverOutcome {
    pub name: String,
    pub status: SolverStatus,
    pub records: Vec<IterRecord>,
    /// Orbitals per block; normalizes operator counts per band.
    pub bands: usize,
    /// Harness-measured wall time of the solver loop, seconds.
    pub wall_s: f64,
    pub csv_path: PathBuf,
}

/// One completed experiment: shared-frame provenance plus per-solver
/// outcomes in canonical order.
pub struct ExperimentOutcome {
    pub name: String,
    pub model: String,
    pub seed: u64,
    pub init_desc: String,
    pub init_hash: String,
    pub config_hash: String,
    pub dir: PathBuf,
    pub solvers: Vec<SolverOutcome>,
}

/// Hex digest of a frame's coefficient bytes; identifies the shared initial
/// guess across solvers and processes.
pub fn frame_hash(frame: &Frame) -> String {
    let mut hasher = Sha256::new();
    for block in frame.as_mat().blocks() {
        for z in block.iter() {
            hasher.update(z.re.to_le_bytes());
            hasher.update(z.im.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Build the frame every solver in the experiment starts from: a seeded
/// random orthonormal frame, refined by damped SCF to the density threshold
/// when the rule asks for it. SCF stagnation falls back to the raw random
/// frame with a warning on stderr. Returns the frame and a short
/// description for the summary header.
pub fn shared_init(
    model: &KohnShamModel,
    bands: usize,
    rule: InitRuleName,
    seed: u64,
) -> Result<(Frame, String), HarnessError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let raw = random_frame(&model.basis().block_dims(), bands, &mut rng);
    let (frame, desc) = match rule {
        InitRuleName::Random => (raw, "random".to_string()),
        InitRuleName::Scf => {
            let mut refined = None;
            for alpha in INIT_MIXING_LADDER {
                let (frame, trace) =
                    run_scf(model, &raw, alpha, INIT_DENSITY_TOL, INIT_MAX_SWEEPS)
                        .map_err(|e| HarnessError::Internal(format!("init scf: {e}")))?;
                if trace.status == SolverStatus::Converged {
                    refined = Some((frame, format!("scf(alpha={alpha})")));
                    break;
                }
            }
            match refined {
                Some(pair) => pair,
                None => {
                    eprintln!(
                        "warning: scf initializer stagnated at every mixing factor; \
                         falling back to the raw random frame"
                    );
                    (raw, "random (scf stagnated)".to_string())
                }
            }
        }
    };
    if !is_on_manifold(&frame, 1e-10) {
        return Err(HarnessError::Internal(
            "shared initial frame left the manifold".into(),
        ));
    }
    Ok((frame, desc))
}

fn dispatch(
    name: &str,
    cfg: &ExperimentConfig,
    model: &KohnShamModel,
    init: &Frame,
) -> Result<SolverTrace, HarnessError> {
    let result = match name {
        "earcg" => run_earcg(model, init, &cfg.solver_config(name)),
        "eargd" => run_eargd(model, init, &cfg.solver_config(name)),
        "l2rcg" => run_l2rcg(model, init, &cfg.solver_config(name)),
        "scf" => {
            let p = cfg.scf_params();
            run_scf(model, init, p.mixing_alpha, p.tol_density, p.max_iters)
        }
        other => return Err(HarnessError::Internal(format!("unknown solver '{other}'"))),
    };
    result
        .map(|(_, trace)| trace)
        .map_err(|e| HarnessError::Internal(format!("solver {name}: {e}")))
}

/// Serialize one trace. The header line is part of the output contract;
/// footer comments carry the config hash and the terminal status.
pub fn write_trace_csv(
    path: &Path,
    records: &[IterRecord],
    config_hash: &str,
    status: SolverStatus,
) -> Result<(), HarnessError> {
    let mut text = String::from("iter,energy_ha,res_fro,ham_applies,wall_s,tau,beta\n");
    for r in records {
        writeln!(
            text,
            "{},{:.16e},{:.16e},{},{:.6e},{:.16e},{:.16e}",
            r.iter, r.energy, r.res_norm, r.ham_applies, r.wall_s, r.tau, r.beta
        )
        .expect("writing to a string cannot fail");
    }
    writeln!(text, "# config_hash = {config_hash}").unwrap();
    writeln!(text, "# status = {status}").unwrap();
    std::fs::write(path, text)
        .map_err(|e| HarnessError::Io(format!("writing {}: {e}", path.display())))
}

/// Run every configured solver of one experiment from the identical shared
/// frame and leave one CSV per solver plus a machine-readable summary in
/// the experiment directory.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    experiment_name: &str,
) -> Result<ExperimentOutcome, HarnessError> {
    let builtin = cfg.builtin();
    let model = builtin
        .build()
        .map_err(|e| HarnessError::Internal(format!("building model: {e}")))?;
    let bands = builtin.orbitals();
    let rule = match &cfg.init {
        Some(section) => section.rule,
        None => match builtin.init() {
            InitRule::Scf => InitRuleName::Scf,
            InitRule::Random => InitRuleName::Random,
        },
    };
    let (init, init_desc) = shared_init(&model, bands, rule, cfg.seed)?;
    let init_hash = frame_hash(&init);

    let dir = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("."))
        .join(experiment_name);
    std::fs::create_dir_all(&dir)
        .map_err(|e| HarnessError::Io(format!("creating {}: {e}", dir.display())))?;

    let config_hash = cfg.content_hash();
    let mut solvers = Vec::new();
    for name in cfg.ordered_solvers() {
        // Every solver must consume the identical initial frame.
        if frame_hash(&init) != init_hash {
            return Err(HarnessError::Internal(
                "shared initial frame changed between solvers".into(),
            ));
        }
        let before = model.counter().snapshot();
        let clock = Instant::now();
        let trace = dispatch(name, cfg, &model, &init)?;
        let wall_s = clock.elapsed().as_secs_f64();
        let counted = model.counter().snapshot().since(&before).hamiltonian_applies;
        if trace.total_applies() != counted {
            return Err(HarnessError::Internal(format!(
                "solver {name} recorded {} operator applications but the counter saw {counted}",
                trace.total_applies()
            )));
        }

        let csv_path = dir.join(format!("{name}.csv"));
        write_trace_csv(&csv_path, &trace.records, &config_hash, trace.status)?;
        solvers.push(SolverOutcome {
            name: name.to_string(),
            status: trace.status,
            records: trace.records,
            bands,
            wall_s,
            csv_path,
        });
    }

    let outcome = ExperimentOutcome {
        name: experiment_name.to_string(),
        model: cfg.model.builtin.clone(),
        seed: cfg.seed,
        init_desc,
        init_hash,
        config_hash,
        dir,
        solvers,
    };
    let summary_csv = crate::summary::machine_summary(&outcome);
    let summary_path = outcome.dir.join("summary.csv");
    std::fs::write(&summary_path, summary_csv)
        .map_err(|e| HarnessError::Io(format!("writing {}: {e}", summary_path.display())))?;
    Ok(outcome)
}
