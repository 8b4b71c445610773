//! Comparison summaries: residual decade crossings per solver, operator
//! application ratios against the energy-adaptive CG, and the text /
//! machine-readable renderings.

use std::fmt::Write as _;

use earcg::solvers::{IterRecord, SolverStatus};

use crate::runner::{ExperimentOutcome, SolverOutcome};

/// Residual decades reported by every summary, from the loosest down to the
/// default solver tolerance. Columns of tighter decades than a solver's
/// configured tolerance simply stay blank.
pub const DECADES: [f64; 7] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];

/// First trace row at which the residual reached a decade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub iter: usize,
    pub applies: u64,
    pub wall_s: f64,
}

/// Decade crossings of one trace, aligned with [`DECADES`].
pub fn crossings(records: &[IterRecord]) -> [Option<Crossing>; 7] {
    let mut out = [None; 7];
    for (slot, &decade) in out.iter_mut().zip(DECADES.iter()) {
        *slot = records
            .iter()
            .find(|r| r.res_norm <= decade)
            .map(|r| Crossing {
                iter: r.iter,
                applies: r.ham_applies,
                wall_s: r.wall_s,
            });
    }
    out
}

fn totals(s: &SolverOutcome) -> (usize, u64) {
    let iters = s.records.len().saturating_sub(1);
    let applies = s.records.last().map_or(0, |r| r.ham_applies);
    (iters, applies)
}

/// Crossings usable for comparison: failed solvers get blank cells.
fn comparable_crossings(s: &SolverOutcome) -> [Option<Crossing>; 7] {
    if s.status == SolverStatus::Converged {
        crossings(&s.records)
    } else {
        [None; 7]
    }
}

/// The machine-readable per-experiment summary. One row per solver; per
/// decade the crossing iteration, operator applications, wall seconds, and
/// the application ratio against the energy-adaptive CG (blank when that
/// solver is absent, failed, or did not reach the decade). Wall-clock
/// columns all carry the `wall_s` suffix so deterministic comparisons can
/// strip them by name.
pub fn machine_summary(outcome: &ExperimentOutcome) -> String {
    let mut header = String::from("solver,status,iters,ham_applies,applies_per_band,wall_s");
    for decade in DECADES {
        for field in ["iter", "applies", "wall_s", "applies_ratio_vs_earcg"] {
            write!(header, ",r{decade:.0e}_{field}").unwrap();
        }
    }
    let earcg_cross = outcome
        .solvers
        .iter()
        .find(|s| s.name == "earcg")
        .map(comparable_crossings);

    let mut text = header;
    text.push('\n');
    for s in &outcome.solvers {
        let (iters, applies) = totals(s);
        write!(
            text,
            "{},{},{iters},{applies},{},{:.6e}",
            s.name,
            s.status,
            applies as f64 / s.bands as f64,
            s.wall_s
        )
        .unwrap();
        let cross = comparable_crossings(s);
        for (i, c) in cross.iter().enumerate() {
            match c {
                Some(c) => {
                    write!(text, ",{},{},{:.6e}", c.iter, c.applies, c.wall_s).unwrap();
                    let ratio = earcg_cross
                        .as_ref()
                        .and_then(|e| e[i])
                        .filter(|e| e.applies > 0)
                        .map(|e| c.applies as f64 / e.applies as f64);
                    match ratio {
                        Some(r) => write!(text, ",{r:.4}").unwrap(),
                        None => text.push(','),
                    }
                }
                None => text.push_str(",,,,"),
            }
        }
        text.push('\n');
    }
    text
}

/// The human-readable summary printed after each experiment.
pub fn render_text(outcome: &ExperimentOutcome) -> String {
    let mut text = format!(
        "experiment {}: model {}, seed {}, init {}, shared frame {}, config {}\n",
        outcome.name,
        outcome.model,
        outcome.seed,
        outcome.init_desc,
        outcome.init_hash,
        outcome.config_hash
    );
    writeln!(
        text,
        "  {:<7} {:<15} {:>6} {:>9} {:>13} {:>9}",
        "solver", "status", "iters", "applies", "applies/band", "wall_s"
    )
    .unwrap();
    for s in &outcome.solvers {
        let (iters, applies) = totals(s);
        writeln!(
            text,
            "  {:<7} {:<15} {:>6} {:>9} {:>13.1} {:>9.3}",
            s.name,
            s.status.to_string(),
            iters,
            applies,
            applies as f64 / s.bands as f64,
            s.wall_s
        )
        .unwrap();
    }

    let earcg_cross = outcome
        .solvers
        .iter()
        .find(|s| s.name == "earcg")
        .map(comparable_crossings);
    writeln!(
        text,
        "  residual decade crossings, operator applies (ratio vs earcg):"
    )
    .unwrap();
    let mut head = format!("  {:<7}", "solver");
    for decade in DECADES {
        write!(head, " {:>12}", format!("{decade:.0e}")).unwrap();
    }
    text.push_str(&head);
    text.push('\n');
    for s in &outcome.solvers {
        let cross = comparable_crossings(s);
        let mut row = format!("  {:<7}", s.name);
        for (i, c) in cross.iter().enumerate() {
            let cell = match c {
                Some(c) => {
                    let ratio = earcg_cross
                        .as_ref()
                        .and_then(|e| e[i])
                        .filter(|e| e.applies > 0)
                        .map(|e| c.applies as f64 / e.applies as f64);
                    match ratio {
                        Some(r) if s.name != "earcg" => format!("{} ({r:.1}x)", c.applies),
                        _ => format!("{}", c.applies),
                    }
                }
                None => "-".to_string(),
            };
            write!(row, " {cell:>12}").unwrap();
        }
        text.push_str(&row);
        text.push('\n');
    }
    if outcome.solvers.iter().any(|s| s.name == "scf") {
        writeln!(
            text,
            "  note: scf is a plain damped-mixing baseline (dense diagonalization, no acceleration)"
        )
        .unwrap();
    }
    text
}
