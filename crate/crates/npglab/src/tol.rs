//! Named numerical tolerances and guard thresholds used across the crate.
//!
//! Every hard-coded tolerance lives here with its rationale, so a reader can
//! audit the numerical contract in one place and tests can pin the ordering
//! between related thresholds.

/// Probability vectors (policy rows, start distributions, visitation
/// distributions) must sum to one within this slack. Linear solves and
/// normalized softmax outputs land well inside it.
pub const DIST_SUM_TOL: f64 = 1e-12;

/// Entries of a solved distribution may round to slightly negative values;
/// anything above this magnitude is treated as a genuine sign error rather
/// than roundoff.
pub const DIST_NEG_TOL: f64 = 1e-9;

/// Infinity-norm residual allowed on every linear solve (value functions,
/// visitation measures). LU on desk-scale systems sits orders of magnitude
/// below this; exceeding it means the system was ill-conditioned enough to
/// distrust.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-8;

/// Relative singular-value cutoff for minimum-norm least squares: singular
/// values below `cutoff = SV_CUTOFF_REL * sigma_max` are treated as zero.
pub const SV_CUTOFF_REL: f64 = 1e-10;

/// Relative eigenvalue cutoff when splitting a covariance into range and
/// null space for the relative condition number.
pub const EIG_RANK_REL: f64 = 1e-12;

/// A numerator covariance whose energy outside the denominator's range
/// exceeds this is not dominated at any finite ratio; the relative condition
/// number returns infinity.
pub const RANGE_RESIDUAL_TOL: f64 = 1e-8;

/// The performance-difference identity must close to this tolerance; it is
/// built from two linear solves and one weighted sum.
pub const PERF_DIFF_TOL: f64 = 1e-9;

/// The three-point mirror-descent identity must close to this tolerance when
/// the update direction is the realized linear critic.
pub const THREE_POINT_TOL: f64 = 1e-8;

/// Per-state logit spread (max minus min before max-subtraction) beyond which
/// a solver run halts with the truncation flag: the softmax is numerically
/// deterministic there and further geometric step growth only burns range.
pub const LOGIT_SPREAD_LIMIT: f64 = 700.0;

/// Absolute logit magnitude beyond which softmax evaluation refuses to
/// proceed; doubles overflow to infinity shortly after this point.
pub const LOGIT_OVERFLOW_LIMIT: f64 = 1e300;

/// A run whose optimality gap falls below this floor stops early with the
/// converged flag; double precision cannot resolve further progress.
pub const DELTA_FLOOR: f64 = 1e-12;

/// Default sup-norm tolerance for the optimal-policy solver.
pub const OPT_POLICY_TOL: f64 = 1e-10;

/// Truncation level for the default Monte-Carlo rollout horizon: the horizon
/// is chosen so the discarded tail of the discounted return is below this.
pub const MC_TRUNCATION: f64 = 1e-3;
