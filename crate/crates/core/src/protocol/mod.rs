//! The proposal-based almost-stable matching protocols.
//!
//! Layering, innermost first:
//!
//! * a proposal round (propose, accept, matching subroutine, reject),
//! * a quantile match (`k` proposal rounds from each man's best quantile),
//! * the drivers: deterministic ASM with its degree-bucketed outer loop,
//!   RandASM (randomized maximal matching), AlmostRegularASM (flat loop,
//!   almost-maximal matching) and distributed Gale-Shapley (singleton
//!   quantiles until quiescence).

mod run;
mod sim;
mod state;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ceil_log2, EngineError, MessageRecord, RoundTrace, DEFAULT_PAYLOAD_FACTOR};
use crate::maximal::{MatchingSubroutineSpec, SubroutineSpecError, DEFAULT_SHRINK};
use crate::model::Matching;

pub use run::{
    almost_regular_asm, asm, gale_shapley_distributed, gs_default_round_cap, rand_asm,
    run_algorithm,
};
pub use sim::{PHASE_ACCEPT, PHASE_MM, PHASE_PROPOSE, PHASE_REJECT, PROPOSAL_ROUND_PHASES};
pub use state::{ManSnapshot, ManState, Player, WomanSnapshot, WomanState};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Subroutine(#[from] SubroutineSpecError),
    #[error("inconsistent protocol state: {0}")]
    InconsistentState(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("preferences are not {alpha}-almost-regular: max degree {max} / min degree {min} = {ratio}")]
    NotAlmostRegular {
        alpha: f64,
        max: usize,
        min: usize,
        ratio: f64,
    },
    #[error("round cap of {} rounds exceeded", .0.cap)]
    RoundCapExceeded(Box<PartialRun>),
}

/// State recovered from a run that hit its round cap.
#[derive(Clone, Debug)]
pub struct PartialRun {
    pub cap: u64,
    pub matching: Matching,
    pub trace: RoundTrace,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse algorithm {0:?}; expected gs, asm:EPS, randasm:EPS,DELTA or aregasm:EPS,DELTA,ALPHA")]
pub struct AlgorithmParseError(pub String);

/// Algorithm descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Algorithm {
    GaleShapley,
    Asm { eps: f64 },
    RandAsm { eps: f64, delta: f64 },
    AlmostRegularAsm { eps: f64, delta: f64, alpha: f64 },
}

impl Algorithm {
    pub fn eps(&self) -> Option<f64> {
        match *self {
            Algorithm::GaleShapley => None,
            Algorithm::Asm { eps }
            | Algorithm::RandAsm { eps, .. }
            | Algorithm::AlmostRegularAsm { eps, .. } => Some(eps),
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match *self {
            Algorithm::RandAsm { delta, .. } | Algorithm::AlmostRegularAsm { delta, .. } => {
                Some(delta)
            }
            _ => None,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            Algorithm::AlmostRegularAsm { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Whether the guarantees only hold with high probability.
    pub fn is_randomized(&self) -> bool {
        matches!(
            self,
            Algorithm::RandAsm { .. } | Algorithm::AlmostRegularAsm { .. }
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::GaleShapley => f.write_str("gs"),
            Algorithm::Asm { eps } => write!(f, "asm:{eps}"),
            Algorithm::RandAsm { eps, delta } => write!(f, "randasm:{eps},{delta}"),
            Algorithm::AlmostRegularAsm { eps, delta, alpha } => {
                write!(f, "aregasm:{eps},{delta},{alpha}")
            }
        }
    }
}

impl FromStr for Algorithm {
    type Err = AlgorithmParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || AlgorithmParseError(s.to_string());
        let s = s.trim();
        if s == "gs" {
            return Ok(Algorithm::GaleShapley);
        }
        let (name, args) = s.split_once(':').ok_or_else(err)?;
        let nums = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| err())?;
        match (name, nums.as_slice()) {
            ("asm", &[eps]) => Ok(Algorithm::Asm { eps }),
            ("randasm", &[eps, delta]) => Ok(Algorithm::RandAsm { eps, delta }),
            ("aregasm", &[eps, delta, alpha]) => {
                Ok(Algorithm::AlmostRegularAsm { eps, delta, alpha })
            }
            _ => Err(err()),
        }
    }
}

fn ceil_tol(x: f64) -> u64 {
    (x - 1e-9).ceil().max(0.0) as u64
}

/// Parameters of the deterministic ASM loop structure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsmParams {
    pub eps: f64,
    /// Quantile count `ceil(8 / eps)`.
    pub k: usize,
    /// `eps / 8`.
    pub delta: f64,
    /// `ceil(log2 n) + 1`.
    pub outer_iterations: u32,
    /// `ceil(2k / delta)` quantile matches per outer iteration.
    pub inner_iterations: u64,
}

impl AsmParams {
    pub fn new(eps: f64, n: usize) -> Result<Self, ProtocolError> {
        check_eps(eps)?;
        let k = ceil_tol(8.0 / eps) as usize;
        let delta = eps / 8.0;
        Ok(AsmParams {
            eps,
            k,
            delta,
            outer_iterations: ceil_log2(n) + 1,
            inner_iterations: ceil_tol(2.0 * k as f64 / delta),
        })
    }

    /// Total number of matching-subroutine invocations.
    pub fn subroutine_calls(&self) -> u64 {
        u64::from(self.outer_iterations) * self.inner_iterations * self.k as u64
    }
}

fn check_eps(eps: f64) -> Result<(), ProtocolError> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(ProtocolError::InvalidParams(format!(
            "eps must lie in (0, 1], got {eps}"
        )))
    }
}

fn check_failure_prob(delta: f64) -> Result<(), ProtocolError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(ProtocolError::InvalidParams(format!(
            "failure probability must lie in (0, 1), got {delta}"
        )))
    }
}

/// Randomized maximal matching iterations for RandASM: the union bound over
/// all subroutine calls, `ceil(log(calls * n / delta) / log(1 / c))`.
pub fn rand_asm_iterations(params: &AsmParams, n: usize, delta: f64, shrink: f64) -> u32 {
    let ratio = params.subroutine_calls() as f64 * n.max(1) as f64 / delta;
    ((ratio.ln() / (1.0 / shrink).ln()).ceil()).max(1.0) as u32
}

/// Loop structure of AlmostRegularASM.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlmostRegularParams {
    pub eps: f64,
    pub alpha: f64,
    pub k: usize,
    /// `ceil(8 * alpha * k / eps)` quantile matches.
    pub iterations: u64,
    /// `eta = eps^4 / (64 alpha)`.
    pub eta: f64,
    /// Per-call failure probability `delta / calls`.
    pub call_delta: f64,
}

impl AlmostRegularParams {
    pub fn new(eps: f64, delta: f64, alpha: f64) -> Result<Self, ProtocolError> {
        check_eps(eps)?;
        check_failure_prob(delta)?;
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(ProtocolError::InvalidParams(format!(
                "alpha must be a finite value >= 1, got {alpha}"
            )));
        }
        let k = ceil_tol(8.0 / eps) as usize;
        let iterations = ceil_tol(8.0 * alpha * k as f64 / eps);
        let calls = iterations * k as u64;
        Ok(AlmostRegularParams {
            eps,
            alpha,
            k,
            iterations,
            eta: eps.powi(4) / (64.0 * alpha),
            call_delta: delta / calls as f64,
        })
    }

    pub fn subroutine_calls(&self) -> u64 {
        self.iterations * self.k as u64
    }

    pub fn subroutine(&self) -> MatchingSubroutineSpec {
        MatchingSubroutineSpec::AlmostMaximal {
            eta: self.eta,
            delta: self.call_delta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    /// Engine round cap; `None` uses the algorithm's default.
    pub round_cap: Option<u64>,
    pub payload_factor: u32,
    pub shrink: f64,
    pub mm_override: Option<MatchingSubroutineSpec>,
    /// Abort on the first monotonicity or quantile-match violation.
    /// Defaults to on for the deterministic subroutine only.
    pub strict_invariants: Option<bool>,
    pub log_messages: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            round_cap: None,
            payload_factor: DEFAULT_PAYLOAD_FACTOR,
            shrink: DEFAULT_SHRINK,
            mm_override: None,
            strict_invariants: None,
            log_messages: false,
        }
    }
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        RunConfig {
            seed,
            ..Default::default()
        }
    }
}

/// Counters for the run-time invariants checked during a run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantLog {
    pub proposal_rounds: u64,
    pub quantile_matches: u64,
    /// A woman accepted a proposer not strictly better than her partner,
    /// lost her partner, or switched to a partner that is not strictly better.
    pub monotonicity_violations: u64,
    /// A man ended a quantile match with `A` nonempty, or neither matched
    /// inside nor rejected by all of his entering `A`.
    pub quantile_match_violations: u64,
    /// The number of good men decreased across a quantile match.
    pub good_count_decreases: u64,
    pub first_violation: Option<String>,
}

impl InvariantLog {
    pub fn total_violations(&self) -> u64 {
        self.monotonicity_violations + self.quantile_match_violations + self.good_count_decreases
    }
}

/// Bad-man accounting for one outer iteration of ASM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterIterationRecord {
    pub iteration: u32,
    /// Men with `|Q| >= 2^iteration` at the start of the iteration.
    pub active_men: usize,
    /// Of those, men still bad when the inner loop ends.
    pub bad_men: usize,
    /// `delta * active_men`.
    pub bound: f64,
    pub pass: bool,
}

/// Everything a finished run exposes to the verifier.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub algorithm: Algorithm,
    pub matching: Matching,
    pub trace: RoundTrace,
    pub men: Vec<ManSnapshot>,
    pub women: Vec<WomanSnapshot>,
    /// Quantile count used for verification; `None` for Gale-Shapley.
    pub k: Option<usize>,
    pub subroutine: MatchingSubroutineSpec,
    pub subroutine_calls: u64,
    /// Subroutine calls that ended with a nonempty residual graph.
    pub subroutine_failures: u64,
    pub removed_men: usize,
    pub invariants: InvariantLog,
    pub outer_iterations: Vec<OuterIterationRecord>,
    pub message_log: Option<Vec<MessageRecord>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asm_params_for_half() {
        let p = AsmParams::new(0.5, 64).unwrap();
        assert_eq!(p.k, 16);
        assert_eq!(p.delta, 1.0 / 16.0);
        assert_eq!(p.inner_iterations, 512);
        assert_eq!(p.outer_iterations, 7);
    }

    #[test]
    fn asm_params_bounds() {
        for eps in [1.0, 0.75, 0.5, 0.3, 0.25, 0.1] {
            let p = AsmParams::new(eps, 10).unwrap();
            assert!(p.k >= 8);
            assert!(p.delta > 0.0 && p.delta <= 0.125);
            assert_eq!(p.k as f64, (8.0 / eps).ceil());
        }
        assert!(AsmParams::new(0.0, 4).is_err());
        assert!(AsmParams::new(1.5, 4).is_err());
        assert_eq!(AsmParams::new(1.0, 1).unwrap().outer_iterations, 1);
    }

    #[test]
    fn rand_asm_iterations_grow_logarithmically() {
        let p = AsmParams::new(0.5, 64).unwrap();
        let step = (2f64.ln() / (1.0 / 0.95f64).ln()).ceil() as i64;
        let a = rand_asm_iterations(&p, 64, 0.1, 0.95) as i64;
        let b = rand_asm_iterations(&p, 64, 0.05, 0.95) as i64;
        assert!((b - a - step).abs() <= 1, "{a} {b} {step}");
    }

    #[test]
    fn almost_regular_params() {
        let p = AlmostRegularParams::new(0.5, 0.1, 1.0).unwrap();
        assert_eq!(p.k, 16);
        assert_eq!(p.iterations, 256);
        assert!((p.eta - 0.0625 / 64.0).abs() < 1e-15);
        assert!((p.call_delta - 0.1 / 4096.0).abs() < 1e-15);
        assert!(AlmostRegularParams::new(0.5, 0.1, 0.5).is_err());
    }

    #[test]
    fn algorithm_descriptors() {
        assert_eq!("gs".parse(), Ok(Algorithm::GaleShapley));
        assert_eq!("asm:0.5".parse(), Ok(Algorithm::Asm { eps: 0.5 }));
        assert_eq!(
            "randasm:0.5,0.1".parse(),
            Ok(Algorithm::RandAsm {
                eps: 0.5,
                delta: 0.1
            })
        );
        assert_eq!(
            "aregasm:0.5,0.1,2".parse(),
            Ok(Algorithm::AlmostRegularAsm {
                eps: 0.5,
                delta: 0.1,
                alpha: 2.0
            })
        );
        assert!("asm".parse::<Algorithm>().is_err());
        assert!("asm:0.5,1".parse::<Algorithm>().is_err());
        assert!("foo:1".parse::<Algorithm>().is_err());
        for s in ["gs", "asm:0.25", "randasm:0.5,0.1", "aregasm:0.5,0.1,2"] {
            assert_eq!(s.parse::<Algorithm>().unwrap().to_string(), s);
        }
    }
}
