//! Coupled electron-nuclear donor spin systems (Si:Bi and friends): spin
//! Hamiltonian eigensolutions, transition derivatives, clock-transition
//! search, echo-detected field-sweep spectra, and a parametric decoherence
//! model for T2 against the normalized frequency-field slope.
//!
//! Units are fixed throughout: fields in T, energies and frequencies in GHz
//! (E/h), times in s, concentrations in cm⁻³.
//!
//! The numeric core is generic over the scalar type via [`Real`]
//! (`f32`/`f64`); the `*F64` aliases at the crate root cover the common
//! case. The quoted tolerances (1e-9 GHz solver cross-checks, 1e-9 T root
//! refinement) assume `f64`.

// negated comparisons on floats are validation guards that must also catch
// NaN; index loops match the dense-kernel style used throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod clock;
pub mod decoherence;
pub mod error;
pub mod export;
pub mod levels;
pub mod linalg;
pub mod operators;
pub mod optimize;
pub mod real;
pub mod spectra;
pub mod system;
pub mod transitions;

pub use clock::{
    find_all_cts, refine_ct, refine_root, scan_and_bracket, ClockTransition, CtScan, Quantity,
    ScanOptions,
};
pub use decoherence::{
    add_magnitude_noise, fit_echo_decay, fit_t2_model, simulate_echo_decay, DecayFit,
    DecoherenceModel, EchoDecay, FitScope, T2FitOptions, T2Point,
};
pub use error::{Error, Result};
pub use levels::{
    breit_rabi_levels, eigensolve, label_states, solve_at, sweep_levels, BranchId, BranchPair,
    EigenSolution, LevelSweep, StateLabel,
};
pub use operators::{build_operators, hamiltonian, SpinOperators};
pub use real::Real;
pub use spectra::{
    effective_linewidth, field_sweep, LineShape, LinewidthModel, Spectrum, SpectrumComponent,
};
pub use system::SpinSystem;
pub use transitions::{
    all_transitions, classify, eval_pair, fill_curvature, transition_curvature, Selection,
    Transition, TransitionKind,
};

pub type SpinSystemF64 = system::SpinSystem<f64>;
pub type SpinOperatorsF64 = operators::SpinOperators<f64>;
pub type EigenSolutionF64 = levels::EigenSolution<f64>;
pub type TransitionF64 = transitions::Transition<f64>;
pub type ClockTransitionF64 = clock::ClockTransition<f64>;
pub type SpectrumF64 = spectra::Spectrum<f64>;
pub type LinewidthModelF64 = spectra::LinewidthModel<f64>;
pub type DecoherenceModelF64 = decoherence::DecoherenceModel<f64>;
pub type EchoDecayF64 = decoherence::EchoDecay<f64>;
