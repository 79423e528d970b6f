//! Experiment catalog, convergence studies and error-constant validation.

mod cases;
mod run;
mod table;
mod validation;

pub use cases::{
    builtin_cases, find_case, moving_star_shape, CaseSpec, DataExtension, DtRule, HRule, TimeRule,
    BOUNDARY_X,
};
pub use run::{
    advance_level_set, run_elliptic, run_elliptic_with, run_parabolic, run_parabolic_with,
    solve_elliptic_at, solve_parabolic_at, RunOptions, RunOutcome,
};
pub use table::{convergence_order, fitted_order, ConvergenceRow, ConvergenceTable};
pub use validation::{
    lneps_quadratic_defect, run_constant_validation, run_constant_validation_with,
    truncation_split, write_constants_csv, ConstantOptions, ConstantRow, SplitReport, CONSTANT_EPS,
    LNEPS_FIT_EPS,
};
