//! Optimization drivers: the modified secant line search, CG parameter
//! formulas, a generic Riemannian CG template, and its concrete
//! instantiations — the energy-adaptive RCG, energy-adaptive gradient
//! descent, the unpreconditioned `L²` RCG, and a damped fixed-point SCF
//! loop used both as a baseline and as an initializer.
//!
//! All variants share the same skeleton: evaluate the residual and the
//! Rayleigh matrix (one Hamiltonian application), obtain a search gradient
//! through a pair of hooks (a metric solve plus a gradient assembly), pick
//! the step size with a secant-based strong-Wolfe line search warm-started
//! from the previous step, retract with the polar factor, and update the
//! direction with a hybrid Fletcher-Reeves / Polak-Ribière-Polyak parameter
//! on transported quantities. The trace records one row per accepted step
//! with cumulative operator counts, so runs can be compared by cost rather
//! than by iteration count.

use std::time::Instant;

use thiserror::Error;

use crate::eametric::{build_shift, ea_gradient, fom_solve, EaError, FomConfig};
use crate::matcore::{herm_eig, MatError};
use crate::model::{Hamiltonian, KohnShamModel, ModelError, ResidualParts};
use crate::stiefel::{
    is_on_manifold, is_tangent, real_pairing, retract_transport_scaled, vector_transport,
    BlockMat, Frame, GeometryError, Tangent,
};

/// Below this magnitude of `⟨r, g⟩`, the CG parameter is meaningless and the
/// direction is restarted.
pub const PAIRING_RESTART_FLOOR: f64 = 1e-300;

/// Relative slope-difference threshold at which the secant step degenerates
/// and a bisection step is taken instead. The comparison is scaled by the
/// larger slope magnitude so the secant formula keeps working near
/// convergence, where all slopes along the ray are tiny but well resolved.
const SECANT_DEGENERACY_TOL: f64 = 1e-14;

/// Manifold tolerance required of initial guesses and guaranteed for all
/// accepted iterates.
pub const MANIFOLD_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Metric(#[from] EaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// Terminal state of a solver run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    MaxIters,
    LinesearchFail,
    Stagnation,
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolverStatus::Converged => "converged",
            SolverStatus::MaxIters => "max_iters",
            SolverStatus::LinesearchFail => "linesearch_fail",
            SolverStatus::Stagnation => "stagnation",
        };
        f.write_str(s)
    }
}

/// Parameters of the modified secant line search.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchParams {
    /// Armijo constant `δ ∈ (0, ½)`.
    pub delta: f64,
    /// Curvature constant `σ ∈ (δ, 1)`.
    pub sigma_ls: f64,
    /// Interval shrink/grow factor `γ ∈ (0, 1)`.
    pub gamma: f64,
    /// Energy slack `ε` in the approximate Wolfe test `E⁺ ≤ E + ε|E|`.
    pub epsilon: f64,
    /// Cap on line-function evaluations per search.
    pub max_ls_iters: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        LineSearchParams {
            delta: 0.05,
            sigma_ls: 0.1,
            gamma: 0.5,
            epsilon: 1e-12,
            max_ls_iters: 20,
        }
    }
}

impl LineSearchParams {
    fn validate(&self) -> Result<(), SolverError> {
        let ok = self.delta > 0.0
            && self.delta < 0.5
            && self.sigma_ls > self.delta
            && self.sigma_ls < 1.0
            && self.gamma > 0.0
            && self.gamma < 1.0
            && self.epsilon > 0.0
            && self.max_ls_iters >= 2;
        if ok {
            Ok(())
        } else {
            Err(SolverError::BadParameter(format!(
                "line-search parameters out of range: {self:?}"
            )))
        }
    }
}

/// Conjugacy-parameter formula selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgVariant {
    FletcherReeves,
    PolakRibiere,
    /// `β = max{0, min{β_FR, β_PRP}}`.
    Hybrid,
}

/// Shared configuration for all RCG-family solvers.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Convergence threshold on the largest per-block residual Frobenius norm.
    pub res_tol: f64,
    /// Shift correction `μ > 0` of the energy-adaptive metric.
    pub mu: f64,
    pub fom: FomConfig,
    pub line_search: LineSearchParams,
    pub cg_variant: CgVariant,
    /// First line-search guess before any warm start exists.
    pub initial_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 500,
            res_tol: 1e-8,
            mu: 0.01,
            fom: FomConfig::default(),
            line_search: LineSearchParams::default(),
            cg_variant: CgVariant::Hybrid,
            initial_step: 1.0,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), SolverError> {
        if self.max_iters == 0 {
            return Err(SolverError::BadParameter("max_iters must be positive".into()));
        }
        if !(self.res_tol > 0.0) {
            return Err(SolverError::BadParameter(format!(
                "res_tol must be positive, got {}",
                self.res_tol
            )));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(SolverError::BadParameter(format!(
                "shift correction must be positive, got {}",
                self.mu
            )));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(SolverError::BadParameter(format!(
                "initial_step must be positive, got {}",
                self.initial_step
            )));
        }
        self.line_search.validate()
    }
}

/// One row of a solver trace. `ham_applies` is cumulative since run start;
/// `tau` and `beta` describe the step taken into this row's state, and
/// `slope0`/`slope_tau` are the line-function derivatives at step sizes `0`
/// and `tau`, kept so the Wolfe certificates can be re-verified post hoc.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub energy: f64,
    pub res_norm: f64,
    pub ham_applies: u64,
    pub wall_s: f64,
    pub tau: f64,
    pub beta: f64,
    pub slope0: f64,
    pub slope_tau: f64,
    pub wolfe_ok: bool,
    pub restarted: bool,
    pub ls_evals: usize,
    pub fom_iters: usize,
    pub fom_relres: f64,
}

/// Complete instrumentation of one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<IterRecord>,
    pub status: SolverStatus,
}

impl SolverTrace {
    pub fn final_energy(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.energy)
    }

    pub fn final_res(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.res_norm)
    }

    pub fn total_applies(&self) -> u64 {
        self.records.last().map_or(0, |r| r.ham_applies)
    }

    /// Number of optimization steps taken (excludes the initial-state row).
    pub fn iters(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }
}

/// Snapshot of the loop state of a CG-type iteration: the current frame,
/// search gradient, residual, direction, and the two pairings the parameter
/// formulas and the Wolfe conditions consume.
#[derive(Debug, Clone)]
pub struct CGState {
    pub phi: Frame,
    pub grad: Tangent,
    pub residual: BlockMat,
    pub direction: Tangent,
    /// `⟨r, g⟩`.
    pub rg: f64,
    /// `⟨r, η⟩`.
    pub r_eta: f64,
}

// ---------------------------------------------------------------------------
// CG parameters.
// ---------------------------------------------------------------------------

/// Fletcher-Reeves parameter `⟨r⁺, g⁺⟩ / ⟨r, g⟩` in pairing form.
pub fn beta_fr(state: &CGState, next: &CGState) -> f64 {
    if state.rg.abs() < PAIRING_RESTART_FLOOR {
        return 0.0;
    }
    next.rg / state.rg
}

/// Polak-Ribière-Polyak parameter `⟨r⁺, g⁺ − T(g)⟩ / ⟨r, g⟩` in pairing
/// form, with `T(g)` the previous gradient transported to the new point.
pub fn beta_prp(state: &CGState, next: &CGState, transported_grad: &Tangent) -> f64 {
    if state.rg.abs() < PAIRING_RESTART_FLOOR {
        return 0.0;
    }
    let diff = next.grad.as_mat().add_scaled(-1.0, transported_grad.as_mat());
    real_pairing(&next.residual, &diff) / state.rg
}

/// Hybrid parameter `max{0, min{β_FR, β_PRP}}`.
pub fn beta_hybrid(state: &CGState, next: &CGState, transported_grad: &Tangent) -> f64 {
    if state.rg.abs() < PAIRING_RESTART_FLOOR {
        return 0.0;
    }
    let fr = beta_fr(state, next);
    let prp = beta_prp(state, next, transported_grad);
    fr.min(prp).max(0.0)
}

// ---------------------------------------------------------------------------
// Modified secant line search.
// ---------------------------------------------------------------------------

/// Result of one line search. `tau` is the accepted step when `accepted`,
/// otherwise the sampled step of lowest energy (NaN when every sample was
/// non-finite). `evals` counts line-function evaluations at `τ > 0`.
#[derive(Debug, Clone, Copy)]
pub struct LsResult {
    pub tau: f64,
    pub accepted: bool,
    pub evals: usize,
}

#[derive(Clone, Copy)]
struct LsSample {
    t: f64,
    e: f64,
    slope: f64,
}

/// Find a step size satisfying the approximate strong Wolfe conditions
/// `f(τ) ≤ f(0) + ε|f(0)|` and `|f′(τ)| ≤ min{σ, 1−2δ}·|f′(0)|` by the modified
/// secant strategy: propose the secant point of the current interval, shrink
/// the interval by `γ` on an over-step (energy up, slope still negative —
/// non-finite values count as over-steps), grow it by `1/γ` when the secant
/// falls left of the interval, and otherwise bracket by the sign of the
/// slope. A degenerate secant denominator falls back to bisection.
///
/// `f_eval` maps a step `τ` to `(energy, slope)`; it is called exactly once
/// at `τ = 0`, and the caller is expected to serve that query from cached
/// values. On evaluation exhaustion the lowest-energy sample is returned
/// with `accepted = false`.
pub fn secant_linesearch(
    mut f_eval: impl FnMut(f64) -> (f64, f64),
    params: &LineSearchParams,
    tau_init: f64,
) -> Result<LsResult, SolverError> {
    params.validate()?;
    if !(tau_init > 0.0 && tau_init.is_finite()) {
        return Err(SolverError::BadParameter(format!(
            "line-search initial step must be positive, got {tau_init}"
        )));
    }
    let (e0, slope0) = f_eval(0.0);
    if !(slope0 < 0.0) {
        return Err(SolverError::BadParameter(format!(
            "line search requires a descent direction, slope {slope0}"
        )));
    }

    // Energy slack scaled by |f(0)| so the gate stays a relaxation for
    // negative energies as well (it coincides with `(1+ε)f(0)` for f(0) ≥ 0).
    let e_gate = e0 + params.epsilon * e0.abs();
    let slope_gate = params.sigma_ls.min(1.0 - 2.0 * params.delta) * slope0.abs();
    let origin = LsSample {
        t: 0.0,
        e: e0,
        slope: slope0,
    };

    let mut evals = 0usize;
    let mut best: Option<LsSample> = None;
    let mut eval = |t: f64, evals: &mut usize, best: &mut Option<LsSample>| -> LsSample {
        *evals += 1;
        let (e, slope) = f_eval(t);
        let s = LsSample { t, e, slope };
        if e.is_finite() && best.map_or(true, |b| e < b.e) {
            *best = Some(s);
        }
        s
    };
    let fail = |best: Option<LsSample>, evals: usize| LsResult {
        tau: best.map_or(f64::NAN, |b| b.t),
        accepted: false,
        evals,
    };

    let mut a = origin;
    let mut b = eval(tau_init, &mut evals, &mut best);
    let mut cand = b;
    loop {
        if cand.e <= e_gate && cand.slope.abs() <= slope_gate {
            return Ok(LsResult {
                tau: cand.t,
                accepted: true,
                evals,
            });
        }
        if evals >= params.max_ls_iters {
            return Ok(fail(best, evals));
        }

        let denom = b.slope - a.slope;
        let degenerate = denom.abs() <= SECANT_DEGENERACY_TOL * a.slope.abs().max(b.slope.abs());
        let t_new = if degenerate || !denom.is_finite() {
            0.5 * (a.t + b.t)
        } else {
            (a.t * b.slope - b.t * a.slope) / denom
        };
        if !t_new.is_finite() {
            // Pathological endpoints: contract towards the origin.
            let t = params.gamma * b.t;
            a = origin;
            b = eval(t, &mut evals, &mut best);
            cand = b;
            continue;
        }

        let s_new = eval(t_new, &mut evals, &mut best);
        let non_finite = !s_new.e.is_finite() || !s_new.slope.is_finite();
        if non_finite || (s_new.e > e_gate && s_new.slope < 0.0) {
            // Over-step: decrease the search interval.
            let t = params.gamma * b.t;
            a = origin;
            b = eval(t, &mut evals, &mut best);
            cand = b;
        } else if s_new.t < a.t {
            // Under-step: increase the search interval.
            let t = b.t / params.gamma;
            a = origin;
            b = eval(t, &mut evals, &mut best);
            cand = b;
        } else if s_new.t > b.t {
            // Right of the interval: shift it to the right.
            a = b;
            b = s_new;
            cand = s_new;
        } else if s_new.slope < 0.0 {
            // Inside the interval with negative slope: keep the left part.
            b = s_new;
            cand = s_new;
        } else {
            // Slope has turned non-negative: keep the right part.
            a = s_new;
            cand = s_new;
        }
    }
}

// ---------------------------------------------------------------------------
// Generic RCG driver and its hooks.
// ---------------------------------------------------------------------------

/// Diagnostics attached to one gradient evaluation by the metric hook.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradientStats {
    pub fom_iters: usize,
    pub fom_relres: f64,
    pub fom_stagnated: bool,
}

/// Metric hook: given the frozen-density Hamiltonian and the residual data
/// at the current frame, produce the metric-solve output `x` feeding the
/// gradient assembly (for the energy-adaptive metric, the approximate
/// solution of the shifted Sylvester system; for the `L²` metric, the
/// residual itself).
pub type MetricHook<'h> = Box<
    dyn FnMut(
            &Hamiltonian<'_>,
            &Frame,
            &ResidualParts,
        ) -> Result<(BlockMat, GradientStats), SolverError>
        + 'h,
>;

/// Gradient hook: assemble the Riemannian gradient from the frame and the
/// metric-solve output.
pub type GradientHook<'h> = Box<dyn FnMut(&Frame, &BlockMat) -> Result<Tangent, SolverError> + 'h>;

/// The energy-adaptive metric hook: shift `Σ = Λ − μI`, TPA-preconditioned
/// block FOM solve of `H_{φ,Σ}(x) = φ` warm-started at `x₀ = μ⁻¹φ` (whose
/// image `H x₀ = μ⁻¹ HΦ` is reused from the residual evaluation).
pub fn ea_metric_hook<'h>(mu: f64, fom: FomConfig) -> MetricHook<'h> {
    Box::new(move |ham, phi, parts| {
        let sigma = build_shift(&parts.lambda, mu).map_err(SolverError::Metric)?;
        let precond = ham.model().tpa_preconditioner(phi);
        let x0 = phi.as_mat().scale(1.0 / mu);
        let hx0 = parts.h_phi.scale(1.0 / mu);
        let (x, stats) = fom_solve(ham, &sigma, phi.as_mat(), &x0, Some(&hx0), &fom, &precond)?;
        Ok((
            x,
            GradientStats {
                fom_iters: stats.block_iters.iter().sum(),
                fom_relres: stats
                    .block_relres
                    .iter()
                    .copied()
                    .fold(0.0, f64::max),
                fom_stagnated: stats.stagnated,
            },
        ))
    })
}

/// The gradient assembly of the energy-adaptive metric: `g = φ − x⟨φ,x⟩⁻¹`.
pub fn ea_gradient_hook<'h>() -> GradientHook<'h> {
    Box::new(|phi, x| ea_gradient(phi, x).map_err(SolverError::Metric))
}

/// The `L²` metric hook: the metric solve is the identity on the residual.
pub fn l2_metric_hook<'h>() -> MetricHook<'h> {
    Box::new(|_, _, parts| Ok((parts.residual.clone(), GradientStats::default())))
}

/// The `L²` gradient assembly: the residual is already the gradient
/// representative (it is horizontal by construction).
pub fn l2_gradient_hook<'h>() -> GradientHook<'h> {
    Box::new(|_, x| Ok(Tangent::new(x.clone())))
}

/// Full pre-step line-function evaluation, retained so the accepted sample
/// becomes the next iterate without recomputation.
struct LsEval<'m> {
    frame: Frame,
    ham: Hamiltonian<'m>,
    parts: ResidualParts,
    transported_dir: Tangent,
    energy: f64,
    slope: f64,
}

/// Generic Riemannian CG driver shared by every variant. `conjugacy = false`
/// degrades the method to gradient descent (`β ≡ 0`) with the identical
/// line search and instrumentation. The observer, when present, is invoked
/// with `(iter, frame)` after the initial evaluation and after every
/// accepted step; it must not touch the model (its operator counts would
/// pollute the trace).
pub fn run_rcg_generic(
    model: &KohnShamModel,
    phi0: &Frame,
    cfg: &SolverConfig,
    mut metric_hook: MetricHook<'_>,
    mut gradient_hook: GradientHook<'_>,
    conjugacy: bool,
    mut observer: Option<&mut dyn FnMut(usize, &Frame)>,
) -> Result<(Frame, SolverTrace), SolverError> {
    cfg.validate()?;
    if !is_on_manifold(phi0, MANIFOLD_TOL) {
        return Err(SolverError::BadParameter(
            "initial frame is not orthonormal".into(),
        ));
    }

    let clock = Instant::now();
    let counts0 = model.counter().snapshot();
    let applies = |model: &KohnShamModel| {
        model.counter().snapshot().since(&counts0).hamiltonian_applies
    };

    let mut phi = phi0.clone();
    let mut ham = model.hamiltonian(&phi)?;
    let mut parts = ham.residual_parts(&phi)?;
    let mut energy = model.kinetic_energy(&phi) + ham.local_energy();
    let mut records = Vec::new();
    records.push(IterRecord {
        iter: 0,
        energy,
        res_norm: parts.residual.norm(),
        ham_applies: applies(model),
        wall_s: clock.elapsed().as_secs_f64(),
        tau: 0.0,
        beta: 0.0,
        slope0: 0.0,
        slope_tau: 0.0,
        wolfe_ok: true,
        restarted: false,
        ls_evals: 0,
        fom_iters: 0,
        fom_relres: 0.0,
    });
    if let Some(obs) = observer.as_deref_mut() {
        obs(0, &phi);
    }
    if parts.residual.max_block_norm() <= cfg.res_tol {
        let trace = SolverTrace {
            records,
            status: SolverStatus::Converged,
        };
        return Ok((phi, trace));
    }

    // Initial gradient and direction.
    let (x, mut gstats) = metric_hook(&ham, &phi, &parts)?;
    let mut grad = gradient_hook(&phi, &x)?;
    debug_assert!(
        is_tangent(&phi, &grad, 1e-8 * (1.0 + grad.norm())),
        "gradient hook returned a non-tangent direction"
    );
    let mut rg = real_pairing(&parts.residual, grad.as_mat());

    let base_kind: u8 = if conjugacy { DIR_CONJUGATE } else { DIR_STEEPEST };
    let mut dir = build_direction(&grad, rg, &parts.residual, None, base_kind, 0, cfg.cg_variant);

    let mut tau_prev = cfg.initial_step;
    let mut consecutive_failures = 0usize;
    // Escalation floor for the next direction: failed searches push it from
    // the conjugate direction towards the metric-steepest and finally the
    // raw residual direction (which always descends).
    let mut kind_floor: u8 = DIR_CONJUGATE;
    let mut status = SolverStatus::MaxIters;

    for iter in 1..=cfg.max_iters {
        if !dir.r_eta.is_finite() {
            status = SolverStatus::LinesearchFail;
            break;
        }

        // --- Line search along the direction. Samples are memoized by
        // exact step value so the accepted state is reused, not recomputed.
        let mut memo: Vec<(f64, LsEval<'_>)> = Vec::new();
        let ls = {
            let phi_ref = &phi;
            let eta_ref = &dir.eta;
            let r_eta = dir.r_eta;
            let memo_ref = &mut memo;
            let f_eval = |t: f64| -> (f64, f64) {
                if t == 0.0 {
                    return (energy, r_eta);
                }
                if let Some((_, e)) = memo_ref.iter().find(|(tt, _)| *tt == t) {
                    return (e.energy, e.slope);
                }
                let Ok((frame, transported_dir)) =
                    retract_transport_scaled(phi_ref, t, eta_ref)
                else {
                    return (f64::NAN, f64::NAN);
                };
                let Ok(ham_t) = model.hamiltonian(&frame) else {
                    return (f64::NAN, f64::NAN);
                };
                let Ok(parts_t) = ham_t.residual_parts(&frame) else {
                    return (f64::NAN, f64::NAN);
                };
                let e_t = model.kinetic_energy(&frame) + ham_t.local_energy();
                let slope_t = real_pairing(&parts_t.residual, transported_dir.as_mat());
                memo_ref.push((
                    t,
                    LsEval {
                        frame,
                        ham: ham_t,
                        parts: parts_t,
                        transported_dir,
                        energy: e_t,
                        slope: slope_t,
                    },
                ));
                (e_t, slope_t)
            };
            secant_linesearch(f_eval, &cfg.line_search, tau_prev)?
        };

        let eval = ls
            .tau
            .is_finite()
            .then(|| memo.iter().position(|(t, _)| *t == ls.tau))
            .flatten()
            .map(|pos| memo.swap_remove(pos).1);
        drop(memo);
        // A Wolfe-certified step is always taken; a failed search moves
        // only when its best sample strictly improves the energy (uphill
        // moves would break trace monotonicity).
        let moved = ls.accepted
            || eval
                .as_ref()
                .map_or(false, |e| e.energy.is_finite() && e.energy < energy);

        if ls.accepted {
            consecutive_failures = 0;
            kind_floor = DIR_CONJUGATE;
        } else {
            consecutive_failures += 1;
            if !moved {
                if dir.kind >= DIR_RESIDUAL {
                    // Even the raw residual direction made no progress.
                    records.push(stall_record(
                        iter,
                        energy,
                        &parts,
                        applies(model),
                        clock.elapsed().as_secs_f64(),
                        &dir,
                        &ls,
                        &gstats,
                    ));
                    status = SolverStatus::LinesearchFail;
                    break;
                }
                kind_floor = dir.kind + 1;
            } else if consecutive_failures >= 2 {
                kind_floor = (dir.kind + 1).min(DIR_RESIDUAL);
            }
        }

        if !moved {
            records.push(stall_record(
                iter,
                energy,
                &parts,
                applies(model),
                clock.elapsed().as_secs_f64(),
                &dir,
                &ls,
                &gstats,
            ));
            if iter == cfg.max_iters {
                break;
            }
            // The state is unchanged: rebuild the direction from the same
            // gradient at the escalated kind and search again.
            dir = build_direction(
                &grad,
                rg,
                &parts.residual,
                None,
                base_kind,
                kind_floor,
                cfg.cg_variant,
            );
            continue;
        }
        let accepted = eval.expect("a moving step always has a sample");

        // Transport the previous gradient before the state moves on; only
        // the PRP-family parameters consume it.
        let needs_transport = conjugacy
            && base_kind.max(kind_floor) == DIR_CONJUGATE
            && matches!(cfg.cg_variant, CgVariant::PolakRibiere | CgVariant::Hybrid);
        let transported_grad = if needs_transport {
            Some(vector_transport(&phi, ls.tau, &dir.eta, &grad)?)
        } else {
            None
        };
        let prev_state = CGState {
            phi: phi.clone(),
            grad: grad.clone(),
            residual: parts.residual.clone(),
            direction: dir.eta.clone(),
            rg,
            r_eta: dir.r_eta,
        };

        #[cfg(debug_assertions)]
        if accepted.transported_dir.norm() > 10.0 * dir.eta.norm() {
            eprintln!(
                "rcg: transported direction grew {:.2}x at step {iter}",
                accepted.transported_dir.norm() / dir.eta.norm()
            );
        }

        phi = accepted.frame;
        ham = accepted.ham;
        parts = accepted.parts;
        energy = accepted.energy;
        debug_assert!(is_on_manifold(&phi, MANIFOLD_TOL));

        records.push(IterRecord {
            iter,
            energy,
            res_norm: parts.residual.norm(),
            ham_applies: applies(model),
            wall_s: clock.elapsed().as_secs_f64(),
            tau: ls.tau,
            beta: dir.beta,
            slope0: prev_state.r_eta,
            slope_tau: accepted.slope,
            wolfe_ok: ls.accepted,
            restarted: dir.restarted,
            ls_evals: ls.evals,
            fom_iters: gstats.fom_iters,
            fom_relres: gstats.fom_relres,
        });
        if let Some(obs) = observer.as_deref_mut() {
            obs(iter, &phi);
        }
        tau_prev = ls.tau;

        if parts.residual.max_block_norm() <= cfg.res_tol {
            status = SolverStatus::Converged;
            break;
        }
        if iter == cfg.max_iters {
            break;
        }

        // --- Next gradient and direction.
        let (x, stats) = metric_hook(&ham, &phi, &parts)?;
        gstats = stats;
        grad = gradient_hook(&phi, &x)?;
        debug_assert!(
            is_tangent(&phi, &grad, 1e-8 * (1.0 + grad.norm())),
            "gradient hook returned a non-tangent direction"
        );
        rg = real_pairing(&parts.residual, grad.as_mat());
        let conj = ConjugateData {
            prev: &prev_state,
            transported_grad: transported_grad.as_ref(),
            transported_dir: &accepted.transported_dir,
            next_phi: &phi,
        };
        dir = build_direction(
            &grad,
            rg,
            &parts.residual,
            Some(conj),
            base_kind,
            kind_floor,
            cfg.cg_variant,
        );
    }

    Ok((phi, SolverTrace { records, status }))
}

/// Direction kinds, ordered by escalation: the conjugate update, the
/// metric-steepest direction `−g`, and the raw residual direction `−r`
/// (descent in any state since `⟨r, −r⟩ = −‖r‖²`).
const DIR_CONJUGATE: u8 = 0;
const DIR_STEEPEST: u8 = 1;
const DIR_RESIDUAL: u8 = 2;

struct Direction {
    eta: Tangent,
    r_eta: f64,
    beta: f64,
    restarted: bool,
    kind: u8,
}

struct ConjugateData<'a> {
    prev: &'a CGState,
    transported_grad: Option<&'a Tangent>,
    transported_dir: &'a Tangent,
    next_phi: &'a Frame,
}

/// Build the next search direction, starting from the requested kind and
/// escalating until a descent direction is found. `base_kind` is the
/// method's natural kind (conjugate for CG, steepest for gradient descent);
/// directions above it are flagged as restarts.
fn build_direction(
    grad: &Tangent,
    rg: f64,
    residual: &BlockMat,
    conj: Option<ConjugateData<'_>>,
    base_kind: u8,
    kind_floor: u8,
    variant: CgVariant,
) -> Direction {
    let start = base_kind.max(kind_floor);
    let mut tried_conjugate = false;

    if start == DIR_CONJUGATE {
        if let Some(c) = &conj {
            tried_conjugate = true;
            let beta = if c.prev.rg.abs() < PAIRING_RESTART_FLOOR {
                0.0
            } else {
                let next_state = CGState {
                    phi: c.next_phi.clone(),
                    grad: grad.clone(),
                    residual: residual.clone(),
                    direction: c.prev.direction.clone(),
                    rg,
                    r_eta: 0.0,
                };
                match variant {
                    CgVariant::FletcherReeves => beta_fr(c.prev, &next_state),
                    CgVariant::PolakRibiere => beta_prp(
                        c.prev,
                        &next_state,
                        c.transported_grad.expect("transport computed for PRP"),
                    ),
                    CgVariant::Hybrid => beta_hybrid(
                        c.prev,
                        &next_state,
                        c.transported_grad.expect("transport computed for hybrid"),
                    ),
                }
            };
            if beta.is_finite() {
                let eta = Tangent::new(
                    grad.as_mat()
                        .scale(-1.0)
                        .add_scaled(beta, c.transported_dir.as_mat()),
                );
                let r_eta = real_pairing(residual, eta.as_mat());
                if r_eta < 0.0 {
                    return Direction {
                        eta,
                        r_eta,
                        beta,
                        restarted: false,
                        kind: DIR_CONJUGATE,
                    };
                }
            }
        }
    }

    if start <= DIR_STEEPEST {
        let eta = grad.scale(-1.0);
        let r_eta = -rg;
        if r_eta < 0.0 {
            return Direction {
                eta,
                r_eta,
                beta: 0.0,
                restarted: tried_conjugate || kind_floor > base_kind,
                kind: DIR_STEEPEST,
            };
        }
    }

    let eta = Tangent::new(residual.scale(-1.0));
    let r_eta = real_pairing(residual, eta.as_mat());
    Direction {
        eta,
        r_eta,
        beta: 0.0,
        restarted: true,
        kind: DIR_RESIDUAL,
    }
}

/// Trace row for an iteration whose line search produced no usable step:
/// the state (energy, residual) is unchanged, but the wasted evaluations
/// still show up in the cumulative apply count.
#[allow(clippy::too_many_arguments)]
fn stall_record(
    iter: usize,
    energy: f64,
    parts: &ResidualParts,
    ham_applies: u64,
    wall_s: f64,
    dir: &Direction,
    ls: &LsResult,
    gstats: &GradientStats,
) -> IterRecord {
    IterRecord {
        iter,
        energy,
        res_norm: parts.residual.norm(),
        ham_applies,
        wall_s,
        tau: 0.0,
        beta: dir.beta,
        slope0: dir.r_eta,
        slope_tau: 0.0,
        wolfe_ok: false,
        restarted: dir.restarted,
        ls_evals: ls.evals,
        fom_iters: gstats.fom_iters,
        fom_relres: gstats.fom_relres,
    }
}

/// Energy-adaptive Riemannian CG: shifted-Hamiltonian metric, FOM metric
/// solves, hybrid (or configured) conjugacy.
pub fn run_earcg(
    model: &KohnShamModel,
    phi0: &Frame,
    cfg: &SolverConfig,
) -> Result<(Frame, SolverTrace), SolverError> {
    run_rcg_generic(
        model,
        phi0,
        cfg,
        ea_metric_hook(cfg.mu, cfg.fom.clone()),
        ea_gradient_hook(),
        true,
        None,
    )
}

/// [`run_earcg`] with a per-step observer; used to harvest intermediate
/// states for diagnostics.
pub fn run_earcg_observed(
    model: &KohnShamModel,
    phi0: &Frame,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(usize, &Frame),
) -> Result<(Frame, SolverTrace), SolverError> {
    run_rcg_generic(
        model,
        phi0,
        cfg,
        ea_metric_hook(cfg.mu, cfg.fom.clone()),
        ea_gradient_hook(),
        true,
        Some(observer),
    )
}

/// Energy-adaptive Riemannian gradient descent: the same metric, gradient,
/// and line search as [`run_earcg`] with conjugacy disabled (`β ≡ 0`).
pub fn run_eargd(
    model: &KohnShamModel,
    phi0: &Frame,
    cfg: &SolverConfig,
) -> Result<(Frame, SolverTrace), SolverError> {
    run_rcg_generic(
        model,
        phi0,
        cfg,
        ea_metric_hook(cfg.mu, cfg.fom.clone()),
        ea_gradient_hook(),
        false,
        None,
    )
}

/// Unpreconditioned `L²` Riemannian CG: the gradient is the residual itself;
/// retraction, transport, conjugacy formulas, and line search are shared
/// with the energy-adaptive variants.
pub fn run_l2rcg(
    model: &KohnShamModel,
    phi0: &Frame,
    cfg: &SolverConfig,
) -> Result<(Frame, SolverTrace), SolverError> {
    run_rcg_generic(
        model,
        phi0,
        cfg,
        l2_metric_hook(),
        l2_gradient_hook(),
        true,
        None,
    )
}

// ---------------------------------------------------------------------------
// Damped fixed-point SCF.
// ---------------------------------------------------------------------------

/// Number of consecutive non-decreasing density differences after which the
/// SCF loop is declared oscillating.
const SCF_OSCILLATION_STEPS: usize = 10;

/// Damped fixed-point SCF: diagonalize the density-frozen Hamiltonian
/// densely, occupy the `p` lowest eigenvectors per block, and mix densities
/// `ρ ← (1−α)ρ + αρ_new` until the density difference `‖ρ_new − ρ‖₂` drops
/// below `tol_density`. Non-decreasing differences over ten consecutive
/// steps terminate the loop with a stagnation status (plain damped mixing
/// has no convergence guarantee for strong nonlinearities).
pub fn run_scf(
    model: &KohnShamModel,
    phi0: &Frame,
    mixing_alpha: f64,
    tol_density: f64,
    max_iters: usize,
) -> Result<(Frame, SolverTrace), SolverError> {
    if !(mixing_alpha > 0.0 && mixing_alpha <= 1.0) {
        return Err(SolverError::BadParameter(format!(
            "mixing factor must lie in (0, 1], got {mixing_alpha}"
        )));
    }
    if !(tol_density > 0.0) {
        return Err(SolverError::BadParameter(format!(
            "density tolerance must be positive, got {tol_density}"
        )));
    }
    if max_iters == 0 {
        return Err(SolverError::BadParameter("max_iters must be positive".into()));
    }
    if !is_on_manifold(phi0, MANIFOLD_TOL) {
        return Err(SolverError::BadParameter(
            "initial frame is not orthonormal".into(),
        ));
    }

    let clock = Instant::now();
    let counts0 = model.counter().snapshot();
    let p = phi0.p();

    let mut frame = phi0.clone();
    let mut rho = model.density(&frame);
    let mut records = Vec::new();
    let push_record = |records: &mut Vec<IterRecord>,
                       iter: usize,
                       frame: &Frame|
     -> Result<(), SolverError> {
        let ham = model.hamiltonian(frame)?;
        let parts = ham.residual_parts(frame)?;
        records.push(IterRecord {
            iter,
            energy: model.kinetic_energy(frame) + ham.local_energy(),
            res_norm: parts.residual.norm(),
            ham_applies: model.counter().snapshot().since(&counts0).hamiltonian_applies,
            wall_s: clock.elapsed().as_secs_f64(),
            tau: 0.0,
            beta: 0.0,
            slope0: 0.0,
            slope_tau: 0.0,
            wolfe_ok: true,
            restarted: false,
            ls_evals: 0,
            fom_iters: 0,
            fom_relres: 0.0,
        });
        Ok(())
    };
    push_record(&mut records, 0, &frame)?;

    let mut status = SolverStatus::MaxIters;
    let mut prev_diff = f64::INFINITY;
    let mut non_decreasing = 0usize;
    for iter in 1..=max_iters {
        let ham = model.hamiltonian_from_density(&rho)?;
        let mut blocks = Vec::with_capacity(model.num_blocks());
        for k in 0..model.num_blocks() {
            let dense = ham.assemble_dense(k)?;
            let eig = herm_eig(&dense)?;
            blocks.push(eig.vectors.columns(0, p).into_owned());
        }
        frame = Frame::from_blocks(blocks).map_err(|e| {
            SolverError::BadParameter(format!("eigenvector frame rejected: {e}"))
        })?;
        let rho_new = model.density(&frame);
        let diff = rho.l2_distance(&rho_new);
        rho = rho.mix(&rho_new, mixing_alpha);
        push_record(&mut records, iter, &frame)?;

        if diff <= tol_density {
            status = SolverStatus::Converged;
            break;
        }
        if diff >= prev_diff {
            non_decreasing += 1;
            if non_decreasing >= SCF_OSCILLATION_STEPS {
                status = SolverStatus::Stagnation;
                break;
            }
        } else {
            non_decreasing = 0;
        }
        prev_diff = diff;
    }

    Ok((frame, SolverTrace { records, status }))
}
