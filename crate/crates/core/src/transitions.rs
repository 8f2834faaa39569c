//! Transition enumeration between eigenlevels: frequencies, field and
//! hyperfine derivatives, intensities, ESR/NMR classification.

use crate::error::{Error, Result};
use crate::levels::{solve_at, BranchPair, EigenSolution};
use crate::linalg::Mat;
use crate::operators::SpinOperators;
use crate::real::Real;
use crate::system::SpinSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    Esr,
    Nmr,
}

impl std::fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransitionKind::Esr => write!(f, "ESR"),
            TransitionKind::Nmr => write!(f, "NMR"),
        }
    }
}

/// Sign of the product ΔF·ΔmF distinguishing the two doublet branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Plus,
    Minus,
    Other,
}

impl std::fmt::Display for Selection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Selection::Plus => write!(f, "+1"),
            Selection::Minus => write!(f, "-1"),
            Selection::Other => write!(f, "other"),
        }
    }
}

/// One level pair at a fixed field, ordered i < j by energy.
#[derive(Debug, Clone, Copy)]
pub struct Transition<R> {
    pub level_i: usize,
    pub level_j: usize,
    /// Transition frequency E_j − E_i (GHz), ≥ 0.
    pub f: R,
    /// First field derivative (GHz/T), Hellmann-Feynman.
    pub dfdb: R,
    /// Second field derivative (GHz/T²); filled on demand.
    pub d2fdb2: Option<R>,
    /// Hyperfine derivative df/dA (dimensionless), Hellmann-Feynman.
    pub dfda: R,
    /// Squared driving matrix element |⟨i| γe·Sx − γn·Ix |j⟩|².
    pub intensity: R,
    /// Below the configured intensity floor (flagged, never dropped).
    pub weak: bool,
    pub kind: TransitionKind,
    pub selection: Selection,
}

fn expect<R: Real>(m: &Mat<R>, v: &[R]) -> R {
    m.bilinear(v, v)
}

fn elem<R: Real>(m: &Mat<R>, u: &[R], v: &[R]) -> R {
    m.bilinear(u, v)
}

/// Default intensity floor below which transitions are flagged weak.
pub fn default_intensity_floor<R: Real>(sys: &SpinSystem<R>) -> R {
    let half_gamma = sys.gamma_e * R::half();
    R::of(1e-6) * half_gamma * half_gamma
}

/// Classify by transition character: each transverse matrix element is
/// compared as a fraction of that spin's maximal element ((2S+1)/4 and
/// (2I+1)/4), so the outcome reflects whether the transition is closer to a
/// full electron flip or a full nuclear flip, independent of γe/γn.
pub fn classify<R: Real>(sys: &SpinSystem<R>, sx_elem: R, ix_elem: R) -> TransitionKind {
    let s_mult = R::of(sys.electron_multiplicity() as f64);
    let i_mult = R::of(sys.nuclear_multiplicity() as f64);
    if sx_elem.abs() * i_mult > ix_elem.abs() * s_mult {
        TransitionKind::Esr
    } else {
        TransitionKind::Nmr
    }
}

fn selection_of<R: Real>(sol: &EigenSolution<R>, i: usize, j: usize) -> Selection {
    let df = (sol.labels[j].f - sol.labels[i].f).to_f64_lossy().round() as i32;
    let dmf = ((sol.labels[j].m_f - sol.labels[i].m_f).to_f64_lossy()).round() as i32;
    match df * dmf {
        1 => Selection::Plus,
        -1 => Selection::Minus,
        _ => Selection::Other,
    }
}

fn transition_between<R: Real>(
    sol: &EigenSolution<R>,
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
    i: usize,
    j: usize,
    floor: R,
) -> Transition<R> {
    let (vi, vj) = (&sol.vectors[i], &sol.vectors[j]);
    let dfdb = sys.gamma_e * (expect(&ops.sz, vj) - expect(&ops.sz, vi))
        - sys.gamma_n * (expect(&ops.iz, vj) - expect(&ops.iz, vi));
    let dfda = expect(&ops.s_dot_i, vj) - expect(&ops.s_dot_i, vi);
    let sx = elem(&ops.sx, vi, vj);
    let ix = elem(&ops.ix, vi, vj);
    let amp = sys.gamma_e * sx - sys.gamma_n * ix;
    let intensity = amp * amp;
    Transition {
        level_i: i,
        level_j: j,
        f: sol.energies[j] - sol.energies[i],
        dfdb,
        d2fdb2: None,
        dfda,
        intensity,
        weak: intensity < floor,
        kind: classify(sys, sx, ix),
        selection: selection_of(sol, i, j),
    }
}

/// Enumerate all dipole-allowed level pairs (|ΔmF| = 1 under transverse
/// drive) with the default intensity floor.
pub fn all_transitions<R: Real>(
    sol: &EigenSolution<R>,
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
) -> Vec<Transition<R>> {
    all_transitions_with_floor(sol, sys, ops, default_intensity_floor(sys))
}

/// As `all_transitions` with an explicit weak-flag floor.
pub fn all_transitions_with_floor<R: Real>(
    sol: &EigenSolution<R>,
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
    floor: R,
) -> Vec<Transition<R>> {
    let d = sol.dimension();
    let mut out = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            if (sol.two_mf(i) - sol.two_mf(j)).abs() != 2 {
                continue;
            }
            out.push(transition_between(sol, sys, ops, i, j, floor));
        }
    }
    out
}

/// Evaluation of one tracked branch pair at a field point. The frequency is
/// reported non-negative; derivatives are oriented accordingly. `raw_dfdb`
/// and `raw_dfda` keep the fixed pair orientation (E_b − E_a) so that scans
/// see a smooth function even across energy-order swaps.
#[derive(Debug, Clone, Copy)]
pub struct BranchEval<R> {
    pub b0: R,
    pub level_i: usize,
    pub level_j: usize,
    pub f: R,
    pub dfdb: R,
    pub dfda: R,
    pub raw_dfdb: R,
    pub raw_dfda: R,
    /// +1 when the (a, b) pair orientation matches the energy order,
    /// −1 when E_b < E_a; raw quantities times `sign` give the oriented ones.
    pub sign: R,
    pub intensity: R,
    pub kind: TransitionKind,
    pub selection: Selection,
}

/// Evaluate a branch pair inside an already-computed solution.
pub fn eval_pair_in<R: Real>(
    sol: &EigenSolution<R>,
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
    pair: BranchPair,
) -> Result<BranchEval<R>> {
    let la = sol.level_of(pair.a).ok_or_else(|| {
        Error::Domain(format!(
            "branch (2mF = {}, ordinal {}) absent at B0 = {}",
            pair.a.two_mf, pair.a.ordinal, sol.b0
        ))
    })?;
    let lb = sol.level_of(pair.b).ok_or_else(|| {
        Error::Domain(format!(
            "branch (2mF = {}, ordinal {}) absent at B0 = {}",
            pair.b.two_mf, pair.b.ordinal, sol.b0
        ))
    })?;
    let (va, vb) = (&sol.vectors[la], &sol.vectors[lb]);
    let raw_f = sol.energies[lb] - sol.energies[la];
    let raw_dfdb = sys.gamma_e * (expect(&ops.sz, vb) - expect(&ops.sz, va))
        - sys.gamma_n * (expect(&ops.iz, vb) - expect(&ops.iz, va));
    let raw_dfda = expect(&ops.s_dot_i, vb) - expect(&ops.s_dot_i, va);
    let sign = if raw_f >= R::zero() { R::one() } else { -R::one() };
    let (level_i, level_j) = if raw_f >= R::zero() { (la, lb) } else { (lb, la) };
    let sx = elem(&ops.sx, va, vb);
    let ix = elem(&ops.ix, va, vb);
    let amp = sys.gamma_e * sx - sys.gamma_n * ix;
    Ok(BranchEval {
        b0: sol.b0,
        level_i,
        level_j,
        f: raw_f.abs(),
        dfdb: sign * raw_dfdb,
        dfda: sign * raw_dfda,
        raw_dfdb,
        raw_dfda,
        sign,
        intensity: amp * amp,
        kind: classify(sys, sx, ix),
        selection: selection_of(sol, level_i, level_j),
    })
}

/// Evaluate a branch pair at an arbitrary field (solves the Hamiltonian).
pub fn eval_pair<R: Real>(
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
    pair: BranchPair,
    b0: R,
) -> Result<BranchEval<R>> {
    let sol = solve_at(sys, ops, b0)?;
    eval_pair_in(&sol, sys, ops, pair)
}

/// Step control for the finite-difference curvature estimate.
#[derive(Debug, Clone, Copy)]
pub struct CurvatureOptions<R> {
    pub h_max: R,
    pub h_min: R,
    pub rel_tol: R,
    pub abs_tol: R,
}

impl<R: Real> Default for CurvatureOptions<R> {
    fn default() -> Self {
        Self {
            h_max: R::of(1e-4),
            h_min: R::of(1e-6),
            rel_tol: R::of(1e-4),
            abs_tol: R::of(1e-5),
        }
    }
}

/// Central difference of an analytic slope g(B), Richardson extrapolated,
/// with the step adapted downward until two estimates agree.
///
/// Used for d²f/dB² with g = df/dB; eigenvalue second derivatives have no
/// cheap closed form here.
pub fn second_derivative_of_slope<R: Real, F>(
    mut g: F,
    b: R,
    opts: CurvatureOptions<R>,
) -> Result<R>
where
    F: FnMut(R) -> Result<R>,
{
    let mut h = opts.h_max;
    let mut last_residual = R::infinity();
    while h >= opts.h_min {
        let d_h = (g(b + h)? - g(b - h)?) / (R::two() * h);
        let half = h * R::half();
        let d_half = (g(b + half)? - g(b - half)?) / (R::two() * half);
        let richardson = (R::of(4.0) * d_half - d_h) / R::of(3.0);
        let residual = (d_h - d_half).abs();
        if residual <= (opts.rel_tol * richardson.abs()).max(opts.abs_tol) {
            return Ok(richardson);
        }
        last_residual = residual;
        h = h * R::of(0.25);
    }
    Err(Error::StepSizeFailure {
        b0: b.to_f64_lossy(),
        residual: last_residual.to_f64_lossy(),
    })
}

/// d²f/dB² of a branch pair, oriented so the frequency is non-negative.
pub fn transition_curvature<R: Real>(
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
    pair: BranchPair,
    b0: R,
) -> Result<R> {
    let sign = eval_pair(sys, ops, pair, b0)?.sign;
    let raw = second_derivative_of_slope(
        |b| Ok(eval_pair(sys, ops, pair, b)?.raw_dfdb),
        b0,
        CurvatureOptions::default(),
    )?;
    Ok(sign * raw)
}

/// Fill the curvature field of a transition obtained from `all_transitions`.
pub fn fill_curvature<R: Real>(
    sol: &EigenSolution<R>,
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
    transition: &mut Transition<R>,
) -> Result<()> {
    let pair = BranchPair::new(
        sol.branch_id(transition.level_i),
        sol.branch_id(transition.level_j),
    );
    transition.d2fdb2 = Some(transition_curvature(sys, ops, pair, sol.b0)?);
    Ok(())
}
