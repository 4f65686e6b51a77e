//! Exact-rational analysis of probabilistic pushdown automata: certified
//! bounds on return probabilities and expected runtimes, certificate
//! verification and synthesis, and testing oracles.
//!
//! Layering: [`rational`] and [`pps`] hold the arithmetic and the positive
//! polynomial systems, [`model`] the automaton and its derived systems,
//! [`solver`] the approximation routines, [`cert`] the certificates, and
//! [`oracle`] independent ground-truth generators. Everything that decides
//! acceptance runs in exact rational arithmetic; floats are advisory.

pub mod cert;
pub mod model;
pub mod oracle;
pub mod pps;
pub mod rational;
pub mod solver;
pub mod textio;

pub use cert::{
    cert_from_file, cert_to_file, decide_past, synth_cpast, synth_lower, synth_lower_with,
    synth_upper, synth_upper_with, verify_any,
    verify_cpast, verify_lower, verify_past, verify_upper, AnyCert, CertError, CpastCert,
    DecideOutcome, LowerCert, PastCert, SynthError, UpperCert,
};
pub use model::{
    gen_family, Family, ModelError, PairIndex, PbpaOutcome, Ppda, Push, Transition, TriIndex,
    ValidationMode,
};
pub use oracle::{
    simulate, spectral_radius_est, truncated_explore, ExploreConfig, ExploreResult, OracleError,
    SimStats, XorShift64Star,
};
pub use pps::{
    solve_linear_least, LinearOutcome, Monomial, Pps, PpsError, RatMat, RatVec, Reduced, Verdict,
    Violation,
};
pub use rational::{
    format_approx, format_exact, parse_rational, ExtRational, Rational, RationalError,
};
pub use solver::{
    approx_lfp_f64, iterate_approx_f64, kleene_lower, newton_approx, rationalize, ApproxConfig,
    Method,
};
pub use textio::{
    model_hash, parse_cert, parse_ppda, serialize_cert, serialize_ppda, CertFile, CertKind,
    ParsedModel, TextError,
};
