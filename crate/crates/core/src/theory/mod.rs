//! Step-size bound, brute-force minima, and the empirical convergence
//! experiments (Gibbs-law W₁ scaling, excess risk decay).

mod excess;
mod oracle;
mod stepsize;
mod w1;

pub use excess::{excess_risk_experiment, ExcessRiskConfig, ExcessRiskCurve, ExcessRiskReport};
pub use oracle::{grid_oracle_mc, grid_oracle_minimum, OracleMinimum, ORACLE_LEVELS};
pub use stepsize::{lambda_max, lambda_max_overall, lognormal_shifted_moment, StepSizeInputs};
pub use w1::{w1_scaling_experiment, W1Config, W1Row, W1Table, STATIONARITY_TOLERANCE};
