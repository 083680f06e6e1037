//! Spec files, run reports and the commands behind the `cocyclelab` binary.

mod commands;
mod report;
mod spec;
mod sweep;
mod verify;

pub use commands::{
    cmd_accel, cmd_classify, cmd_degree, cmd_kam, cmd_lyapunov, cmd_nf, cmd_renorm, conjugacy_spec, end_to_end_residual,
    fit_normal_form, Branch, NormalFormFit, ClassifyParams, EstimatorParams, FLAT_THRESHOLD,
};
pub use report::{kam_margins, Margin, RunReport, SCHEMA_VERSION, TOOL_VERSION};
pub use spec::{digest_of, modes_to_poly, poly_to_modes, CocycleSpec, Factor, Form, Mode, Mode2, RandomBlock, SystemSpec};
pub use sweep::{cmd_sweep, instantiate, parse_grid, SweepParam, SWEEP_HEADER};
pub use verify::{cmd_verify, render_table, Check, SUITES};
