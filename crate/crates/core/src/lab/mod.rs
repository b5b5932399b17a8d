//! Batch experiments: moment curves, thin-shell concentration, the
//! accuracy/robustness frontier, worst-shift grid checks, and
//! reconciliation against closed forms.

mod moments;
mod pareto;
mod verify;
mod worst_check;

pub use moments::{mean_variance_curve, thin_shell_report, MeanVarianceCurve, MomentRow, ThinShellReport, ThinShellRow};
pub use pareto::{
    family_grid, log_grid, pareto_sweep, DominanceCheck, ParetoPoint, ParetoReport, ROBUSTNESS_LAMBDA,
};
pub use verify::{
    clopper_pearson_coverage, closed_form_recovery, hoeffding_coverage, oracle_chain, write_oracle_chain_csv,
    write_recovery_csv, CoverageResult, OracleChainRow, RecoveryKind, RecoveryRow, DEFAULT_TRIPLES, MC_SIGMAS,
    QUADRATURE_TOLERANCE,
};
pub use worst_check::{worst_delta_grid_check, WorstDeltaCheckReport, WorstDeltaCheckRow, GRID_CHECK_TOLERANCE};
