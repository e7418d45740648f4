//! Worst-case domain risk, the sharpness bound on it, the two-minima
//! sharpness-ordering instance and the stationarity guarantee for DGSAM.

pub mod bound;
pub mod convergence;
pub mod prop1;
pub mod worst_case;

pub use bound::{
    average_worst_case_risk, check_theorem1_bound, global_sharpness_violation, linear_violation_domains,
    random_bound_instance, BoundInstance, BoundReport, BoundSharpnessConfig, ViolationReport,
};
pub use convergence::{
    convergence_constants, empirical_stationarity_test, ConvergenceBudget, ConvergenceConstants, StationarityReport,
    Verdict,
};
pub use prop1::{build_prop1_counterexample, build_prop1_counterexample_with, Prop1Instance, Prop1Report};
pub use worst_case::{rho_of_delta, worst_case_risk, Divergence, UncertaintySet, WorstCase};
