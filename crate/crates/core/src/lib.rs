//! Randomized explicit/implicit Euler and two-stage Runge-Kutta schemes for
//! initial value problems under noisy information about the right-hand side,
//! together with the Monte Carlo machinery used to study their exceptional set:
//! sup-norm errors, order-statistic quantile multipliers, tail curves,
//! confidence bands and empirical convergence orders.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`). The `*64`
//! aliases at the crate root are the concrete types the experiment tooling uses.
//!
//! ```
//! use randode::{make_oracle, run_rk2, NoiseModel, TestProblem};
//!
//! let problem = TestProblem::A.spec::<f64>();
//! let mut oracle = make_oracle(&problem, NoiseModel::exact(), 7, 0).unwrap();
//! let trajectory = run_rk2(&mut oracle, 100).unwrap();
//! let end = trajectory.node(100)[0];
//! assert!((end - std::f64::consts::E).abs() < 1e-2);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
mod error;
pub mod ivp;
pub mod noise;
mod scalar;
pub mod schemes;
mod stream;

pub use analysis::band::{confidence_band, ConfidenceBand};
pub use analysis::batch::{run_batch, BatchCell, CellKey, ErrorBatch};
pub use analysis::reference::{build_reference_b, dense_rk4_reference, ReferenceMeta, ReferenceSolution};
pub use analysis::stats::{
    convergence_slope, fit_loglog_slope, tail_curve, wilson_half_width, wilson_interval, xi_hat, QuantileEstimate,
    SlopeFit, TailCurve,
};
pub use analysis::sup::{sup_error, ErrorProbe, DEFAULT_SUBSAMPLES};
pub use error::{Error, Result};
pub use ivp::{
    check_claimed_class, check_class_membership, eval_rhs, exact_derivative_a, exact_solution_a, one_norm, radius_ee,
    radius_rk, ClassParams, IvpSpec, MembershipReport, Rhs, TestProblem,
};
pub use noise::{
    make_oracle, verify_noise_bound, DeltaRule, InitialValueNoise, NoiseKind, NoiseModel, NoiseSample, NoisyOracle,
};
pub use scalar::Scalar;
pub use schemes::{
    gamma_of, implicit_step, interpolate, martingale_diagnostic, run_explicit_euler,
    run_implicit_euler, run_rk2, run_scheme, Grid, ImplicitOptions, ImplicitStep, MartingaleReport,
    SchemeKind, Trajectory,
};

pub type IvpSpec64 = IvpSpec<f64>;
pub type ClassParams64 = ClassParams<f64>;
pub type NoiseModel64 = NoiseModel<f64>;
pub type NoisyOracle64 = NoisyOracle<f64>;
pub type Grid64 = Grid<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type ReferenceSolution64 = ReferenceSolution<f64>;
pub type BatchCell64 = BatchCell<f64>;
pub type ErrorBatch64 = ErrorBatch<f64>;
pub type QuantileEstimate64 = QuantileEstimate<f64>;
pub type TailCurve64 = TailCurve<f64>;
pub type ConfidenceBand64 = ConfidenceBand<f64>;

pub type IvpSpec32 = IvpSpec<f32>;
pub type NoisyOracle32 = NoisyOracle<f32>;
pub type Trajectory32 = Trajectory<f32>;
