//! Grid search over (lambda, gamma) that keeps the setting exposing the
//! largest local group biases.
//!
//! Cells are independent and evaluated in parallel; the winner is selected
//! by a sequential fold over the canonical (lambda asc, gamma asc) ordering,
//! so a permuted grid specification returns the identical winner.

use rayon::prelude::*;

use crate::audit::{audit_clusters, normalized_inertia, AuditReport, BiasThresholds};
use crate::cohort::Cohort;
use crate::engine::{fit, Hyperparams};
use crate::error::{Error, Result};

/// The (lambda, gamma) grid plus the shared solver controls.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub base: Hyperparams,
}

impl GridSpec {
    /// The default 11 x 11 grid: lambda in {-100, -90, ..., 0} and gamma in
    /// {0, 10, ..., 100}.
    pub fn default_grid(base: Hyperparams) -> GridSpec {
        GridSpec {
            lambdas: (0..=10).map(|i| -100.0 + 10.0 * i as f64).collect(),
            gammas: (0..=10).map(|i| 10.0 * i as f64).collect(),
            base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.gammas.is_empty() {
            return Err(Error::Invalid("grid must have at least one lambda and one gamma".into()));
        }
        for &l in &self.lambdas {
            if !l.is_finite() || l > 0.0 {
                return Err(Error::Invalid(format!("grid lambda must be finite and <= 0, got {l}")));
            }
        }
        for &g in &self.gammas {
            if !g.is_finite() || g < 0.0 {
                return Err(Error::Invalid(format!("grid gamma must be finite and >= 0, got {g}")));
            }
        }
        Ok(())
    }

    /// Deduplicated cells in canonical (lambda asc, gamma asc) order.
    fn cells(&self) -> Vec<(f64, f64)> {
        let mut pairs: Vec<(f64, f64)> = self
            .lambdas
            .iter()
            .flat_map(|&l| self.gammas.iter().map(move |&g| (l, g)))
            .collect();
        pairs.sort_by(|a, b| a.partial_cmp(b).expect("grid values are finite"));
        pairs.dedup();
        pairs
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub lambda: f64,
    pub gamma: f64,
    pub scr: f64,
    pub sir: f64,
    pub avg_abs_bias: f64,
    pub max_abs_bias: f64,
    pub normalized_inertia: f64,
    pub objective: f64,
    /// Largest per-cluster gap regardless of flagging; ranks cells when
    /// nothing flags anywhere.
    pub max_cluster_gap: f64,
    pub flagged_count: usize,
}

/// Grid-search result: the winning setting, its audit, and the full table.
#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub winner: Hyperparams,
    pub report: AuditReport,
    pub table: Vec<GridCell>,
    /// False when no cell flagged any cluster; the winner is then the cell
    /// with the largest unflagged cluster gap.
    pub any_flagged: bool,
}

// Maximizing comparator over flagged-cluster bias: avg |Bias| first, ties by
// higher SIR, lower inertia, smaller |lambda|, smaller gamma.
fn beats(a: &GridCell, b: &GridCell) -> bool {
    if a.avg_abs_bias != b.avg_abs_bias {
        return a.avg_abs_bias > b.avg_abs_bias;
    }
    if a.sir != b.sir {
        return a.sir > b.sir;
    }
    if a.normalized_inertia != b.normalized_inertia {
        return a.normalized_inertia < b.normalized_inertia;
    }
    if a.lambda.abs() != b.lambda.abs() {
        return a.lambda.abs() < b.lambda.abs();
    }
    a.gamma < b.gamma
}

// Fallback comparator when no cell flags anything.
fn beats_unflagged(a: &GridCell, b: &GridCell) -> bool {
    if a.max_cluster_gap != b.max_cluster_gap {
        return a.max_cluster_gap > b.max_cluster_gap;
    }
    if a.normalized_inertia != b.normalized_inertia {
        return a.normalized_inertia < b.normalized_inertia;
    }
    if a.lambda.abs() != b.lambda.abs() {
        return a.lambda.abs() < b.lambda.abs();
    }
    a.gamma < b.gamma
}

/// Fit and audit every (lambda, gamma) pair with identical seed/restarts and
/// return the setting exposing the largest flagged biases. Deterministic.
pub fn grid_search(
    cohort: &Cohort,
    grid: &GridSpec,
    thresholds: &BiasThresholds,
) -> Result<GridSearchOutcome> {
    grid.validate()?;
    let cells = grid.cells();

    let baseline_params = Hyperparams {
        lambda: 0.0,
        gamma: 0.0,
        ..grid.base
    };
    let baseline = fit(cohort, &baseline_params)?;

    let evals: Vec<(Hyperparams, AuditReport, GridCell)> = cells
        .par_iter()
        .map(|&(lambda, gamma)| {
            let params = Hyperparams {
                lambda,
                gamma,
                ..grid.base
            };
            let result = fit(cohort, &params)?;
            let mut report = audit_clusters(&result, cohort, thresholds)?;
            let inertia = normalized_inertia(&result, &baseline)?;
            report.normalized_inertia = Some(inertia);
            let cell = GridCell {
                lambda,
                gamma,
                scr: report.scr,
                sir: report.sir,
                avg_abs_bias: report.avg_abs_bias,
                max_abs_bias: report.max_abs_bias,
                normalized_inertia: inertia,
                objective: result.objective,
                max_cluster_gap: report.max_cluster_gap(),
                flagged_count: report.flagged_count(),
            };
            Ok((params, report, cell))
        })
        .collect::<Result<Vec<_>>>()?;

    let any_flagged = evals.iter().any(|(_, _, c)| c.flagged_count > 0);
    let cmp = if any_flagged { beats } else { beats_unflagged };
    let mut winner_idx = 0;
    for i in 1..evals.len() {
        if cmp(&evals[i].2, &evals[winner_idx].2) {
            winner_idx = i;
        }
    }

    let table = evals.iter().map(|(_, _, c)| *c).collect();
    let (winner, report, _) = evals.into_iter().nth(winner_idx).expect("non-empty grid");
    Ok(GridSearchOutcome {
        winner,
        report,
        table,
        any_flagged,
    })
}
