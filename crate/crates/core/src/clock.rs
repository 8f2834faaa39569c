//! Clock-transition search: scan transition branches for roots of df/dB (or
//! df/dA), refine each bracket, and report certified clock transitions.

use crate::error::{Error, Result};
use crate::levels::{field_grid, solve_at, BranchId, BranchPair};
use crate::operators::SpinOperators;
use crate::real::Real;
use crate::system::SpinSystem;
use crate::transitions::{eval_pair, transition_curvature, Selection, TransitionKind};

/// Which derivative is zeroed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    DfdB,
    DfdA,
}

impl std::fmt::Display for Quantity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Quantity::DfdB => write!(f, "dfdB"),
            Quantity::DfdA => write!(f, "dfdA"),
        }
    }
}

/// A certified sign-change interval of the scanned derivative.
#[derive(Debug, Clone, Copy)]
pub struct Bracket<R> {
    pub lo: R,
    pub hi: R,
    pub g_lo: R,
    pub g_hi: R,
}

/// The ΔF·ΔmF = ∓1 partner merged into a doublet clock transition.
#[derive(Debug, Clone, Copy)]
pub struct DoubletPartner<R> {
    pub pair: BranchPair,
    /// The partner's own refined root.
    pub b_star: R,
    pub f_star: R,
    /// Partner frequency evaluated at the canonical B*.
    pub f_at_bstar: R,
}

/// A refined root of the chosen derivative on one transition branch.
#[derive(Debug, Clone)]
pub struct ClockTransition<R> {
    pub pair: BranchPair,
    /// Level indices at B*, i < j by energy.
    pub level_i: usize,
    pub level_j: usize,
    pub b_star: R,
    pub f_star: R,
    /// d²f/dB² at B* (GHz/T²).
    pub curvature: R,
    /// Zeroed derivative evaluated at B*, within tolerance of 0.
    pub derivative_at_root: R,
    /// Sign-change certificate.
    pub bracket: Bracket<R>,
    pub kind: TransitionKind,
    pub selection: Selection,
    pub quantity: Quantity,
    /// Present when the CT is the canonical (ΔF·ΔmF = +1) member of a
    /// resolved doublet.
    pub partner: Option<DoubletPartner<R>>,
}

/// A grid point where |g| dips below the grazing threshold without a sign
/// change: reported, but not a clock transition.
#[derive(Debug, Clone, Copy)]
pub struct Grazing<R> {
    pub pair: BranchPair,
    pub b: R,
    pub value: R,
    pub quantity: Quantity,
}

/// Scan result: refined CTs, grazing points, per-branch refinement failures.
#[derive(Debug, Clone)]
pub struct CtScan<R> {
    pub cts: Vec<ClockTransition<R>>,
    pub grazing: Vec<Grazing<R>>,
    pub failures: Vec<(BranchPair, String)>,
}

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions<R> {
    pub n_grid: usize,
    /// Primary tolerance: bracket width at convergence (T).
    pub field_tol: R,
    /// Secondary tolerance: |derivative| at the root.
    pub derivative_tol: R,
    /// Local |derivative| minimum below this, without a sign change, is
    /// reported as grazing.
    pub grazing_threshold: R,
    /// Roots of the same pair closer than this are duplicates (T).
    pub dedup_window: R,
    /// Frequency split below which ±1 partners form an unresolved doublet
    /// and are reported as one CT (GHz).
    pub doublet_window: R,
    pub group_doublets: bool,
}

impl<R: Real> Default for ScanOptions<R> {
    fn default() -> Self {
        Self {
            n_grid: 2048,
            field_tol: R::of(1e-9),
            derivative_tol: R::of(1e-6),
            grazing_threshold: R::of(1e-4),
            dedup_window: R::of(1e-6),
            doublet_window: R::of(3e-3),
            group_doublets: true,
        }
    }
}

/// All |ΔmF| = 1 branch pairs of the system.
pub fn allowed_branch_pairs<R: Real>(ops: &SpinOperators<R>) -> Vec<BranchPair> {
    let mut out = Vec::new();
    for (key, idx) in &ops.blocks {
        if let Some(next) = ops.block(key + 2) {
            for oa in 0..idx.len() {
                for ob in 0..next.len() {
                    out.push(BranchPair::new(
                        BranchId {
                            two_mf: *key,
                            ordinal: oa,
                        },
                        BranchId {
                            two_mf: key + 2,
                            ordinal: ob,
                        },
                    ));
                }
            }
        }
    }
    out
}

/// Bracketed scalar root refinement: bisection with inverse-quadratic /
/// secant acceleration (Brent). Returns (root, g(root)).
pub fn refine_root<R: Real, F>(
    mut g: F,
    lo: R,
    hi: R,
    xtol: R,
    max_iter: usize,
) -> Result<(R, R)>
where
    F: FnMut(R) -> Result<R>,
{
    let mut xpre = lo;
    let mut xcur = hi;
    let mut fpre = g(xpre)?;
    let mut fcur = g(xcur)?;
    if fpre == R::zero() {
        return Ok((xpre, fpre));
    }
    if fcur == R::zero() {
        return Ok((xcur, fcur));
    }
    if fpre * fcur > R::zero() {
        return Err(Error::BracketLost {
            lo: lo.to_f64_lossy(),
            hi: hi.to_f64_lossy(),
            detail: format!("no sign change: g(lo) = {fpre}, g(hi) = {fcur}"),
        });
    }
    let rtol = R::of(4.0) * R::epsilon();
    let mut xblk = R::zero();
    let mut fblk = R::zero();
    let mut spre = R::zero();
    let mut scur = R::zero();
    for _ in 0..max_iter {
        if fpre * fcur < R::zero() {
            xblk = xpre;
            fblk = fpre;
            spre = xcur - xpre;
            scur = spre;
        }
        if fblk.abs() < fcur.abs() {
            xpre = xcur;
            xcur = xblk;
            xblk = xpre;
            fpre = fcur;
            fcur = fblk;
            fblk = fpre;
        }
        let delta = (xtol + rtol * xcur.abs()) * R::half();
        let sbis = (xblk - xcur) * R::half();
        if fcur == R::zero() || sbis.abs() < delta {
            return Ok((xcur, fcur));
        }
        if spre.abs() > delta && fcur.abs() < fpre.abs() {
            let stry = if xpre == xblk {
                // secant
                -fcur * (xcur - xpre) / (fcur - fpre)
            } else {
                // inverse quadratic interpolation
                let dpre = (fpre - fcur) / (xpre - xcur);
                let dblk = (fblk - fcur) / (xblk - xcur);
                -fcur * (fblk * dblk - fpre * dpre) / (dblk * dpre * (fblk - fpre))
            };
            if R::two() * stry.abs() < spre.abs().min(R::of(3.0) * sbis.abs() - delta) {
                spre = scur;
                scur = stry;
            } else {
                spre = sbis;
                scur = sbis;
            }
        } else {
            spre = sbis;
            scur = sbis;
        }
        xpre = xcur;
        fpre = fcur;
        if scur.abs() > delta {
            xcur = xcur + scur;
        } else {
            xcur = xcur + if sbis > R::zero() { delta } else { -delta };
        }
        fcur = g(xcur)?;
    }
    Ok((xcur, fcur))
}

fn raw_derivative<R: Real>(
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
    pair: BranchPair,
    quantity: Quantity,
    b: R,
) -> Result<R> {
    let ev = eval_pair(sys, ops, pair, b)?;
    Ok(match quantity {
        Quantity::DfdB => ev.raw_dfdb,
        Quantity::DfdA => ev.raw_dfda,
    })
}

/// Sign-change intervals of the chosen derivative on one adiabatically
/// tracked transition branch.
pub fn scan_and_bracket<R: Real>(
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
    pair: BranchPair,
    b_lo: R,
    b_hi: R,
    n_grid: usize,
) -> Result<Vec<Bracket<R>>> {
    if !(b_lo <= b_hi) {
        return Err(Error::Domain(format!("bad field range [{b_lo}, {b_hi}]")));
    }
    if n_grid < 16 {
        return Err(Error::Domain(format!("n_grid = {n_grid} < 16")));
    }
    let fields = field_grid(b_lo, b_hi, n_grid);
    let mut g = Vec::with_capacity(fields.len());
    for &b in &fields {
        g.push(raw_derivative(sys, ops, pair, Quantity::DfdB, b)?);
    }
    Ok(brackets_of(&fields, &g))
}

fn brackets_of<R: Real>(fields: &[R], g: &[R]) -> Vec<Bracket<R>> {
    let mut out = Vec::new();
    for k in 0..g.len().saturating_sub(1) {
        if g[k] == R::zero() && k > 0 {
            continue; // the sign change is credited to the preceding interval
        }
        if g[k] * g[k + 1] <= R::zero() && (g[k] != R::zero() || g[k + 1] != R::zero()) {
            out.push(Bracket {
                lo: fields[k],
                hi: fields[k + 1],
                g_lo: g[k],
                g_hi: g[k + 1],
            });
        }
    }
    out
}

/// Local |g| minima below the grazing threshold, excluding bracketed roots.
fn grazing_minima<R: Real>(fields: &[R], g: &[R], threshold: R) -> Vec<(R, R)> {
    let n = g.len();
    let mut out = Vec::new();
    for k in 1..n.saturating_sub(1) {
        let a = g[k].abs();
        if a >= threshold || a > g[k - 1].abs() || a > g[k + 1].abs() {
            continue;
        }
        // a sign change next to this minimum means a true root, not a graze
        if g[k - 1] * g[k] <= R::zero() || g[k] * g[k + 1] <= R::zero() {
            continue;
        }
        out.push((fields[k], g[k]));
    }
    out
}

/// Refine one bracket into a clock transition. Both tolerances must hold:
/// bracket width ≤ field_tol (primary) and |derivative| ≤ derivative_tol.
pub fn refine_ct<R: Real>(
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
    pair: BranchPair,
    quantity: Quantity,
    bracket: Bracket<R>,
    opts: &ScanOptions<R>,
) -> Result<ClockTransition<R>> {
    let (b_star, _) = refine_root(
        |b| raw_derivative(sys, ops, pair, quantity, b),
        bracket.lo,
        bracket.hi,
        opts.field_tol,
        200,
    )?;
    let ev = eval_pair(sys, ops, pair, b_star)?;
    let derivative_at_root = match quantity {
        Quantity::DfdB => ev.dfdb,
        Quantity::DfdA => ev.dfda,
    };
    if derivative_at_root.abs() > opts.derivative_tol {
        return Err(Error::BracketLost {
            lo: bracket.lo.to_f64_lossy(),
            hi: bracket.hi.to_f64_lossy(),
            detail: format!(
                "derivative {derivative_at_root} at refined root exceeds tolerance {}",
                opts.derivative_tol
            ),
        });
    }
    let curvature = transition_curvature(sys, ops, pair, b_star)?;
    Ok(ClockTransition {
        pair,
        level_i: ev.level_i,
        level_j: ev.level_j,
        b_star,
        f_star: ev.f,
        curvature,
        derivative_at_root,
        bracket,
        kind: ev.kind,
        selection: ev.selection,
        quantity,
        partner: None,
    })
}

/// Find and refine every clock transition in the field range, over all
/// |ΔmF| = 1 transition branches.
///
/// Unresolved ΔF·ΔmF = ±1 doublets (partner frequencies within
/// `doublet_window` at the root) are reported as one CT whose canonical
/// member is the +1 branch, with the −1 root attached as `partner`; this
/// matches how such doublets appear as a single feature in a spectrum.
/// Refinement failures are collected per branch without aborting the scan.
pub fn find_all_cts<R: Real>(
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
    b_lo: R,
    b_hi: R,
    quantity: Quantity,
    opts: &ScanOptions<R>,
) -> Result<CtScan<R>> {
    if !(b_lo <= b_hi) {
        return Err(Error::Domain(format!("bad field range [{b_lo}, {b_hi}]")));
    }
    if opts.n_grid < 16 {
        return Err(Error::Domain(format!("n_grid = {} < 16", opts.n_grid)));
    }
    let fields = field_grid(b_lo, b_hi, opts.n_grid);
    let pairs = allowed_branch_pairs(ops);
    let mut tables: Vec<Vec<R>> = vec![Vec::with_capacity(fields.len()); pairs.len()];

    for &b in &fields {
        let sol = solve_at(sys, ops, b)?;
        // per-level expectations, shared by every pair at this field
        let mut sz = Vec::with_capacity(sol.dimension());
        let mut iz = Vec::with_capacity(sol.dimension());
        let mut sdi = Vec::with_capacity(sol.dimension());
        for v in &sol.vectors {
            sz.push(ops.sz.bilinear(v, v));
            iz.push(ops.iz.bilinear(v, v));
            sdi.push(ops.s_dot_i.bilinear(v, v));
        }
        for (p, pair) in pairs.iter().enumerate() {
            let la = sol.level_of(pair.a).ok_or(Error::TrackingAmbiguity {
                b0: b.to_f64_lossy(),
                overlap: 0.0,
            })?;
            let lb = sol.level_of(pair.b).ok_or(Error::TrackingAmbiguity {
                b0: b.to_f64_lossy(),
                overlap: 0.0,
            })?;
            let g = match quantity {
                Quantity::DfdB => {
                    sys.gamma_e * (sz[lb] - sz[la]) - sys.gamma_n * (iz[lb] - iz[la])
                }
                Quantity::DfdA => sdi[lb] - sdi[la],
            };
            tables[p].push(g);
        }
    }

    let mut candidates: Vec<ClockTransition<R>> = Vec::new();
    let mut grazing = Vec::new();
    let mut failures = Vec::new();
    for (p, pair) in pairs.iter().enumerate() {
        for bracket in brackets_of(&fields, &tables[p]) {
            match refine_ct(sys, ops, *pair, quantity, bracket, opts) {
                Ok(ct) => candidates.push(ct),
                Err(e) => failures.push((*pair, e.to_string())),
            }
        }
        for (b, value) in grazing_minima(&fields, &tables[p], opts.grazing_threshold) {
            grazing.push(Grazing {
                pair: *pair,
                b,
                value,
                quantity,
            });
        }
    }

    // dedup by (level pair, B* within the window)
    candidates.sort_by(|a, b| {
        a.pair
            .cmp(&b.pair)
            .then(a.b_star.partial_cmp(&b.b_star).unwrap())
    });
    candidates.dedup_by(|a, b| a.pair == b.pair && (a.b_star - b.b_star).abs() <= opts.dedup_window);

    let mut cts = if opts.group_doublets {
        group_doublets(sys, ops, candidates, opts)?
    } else {
        candidates
    };
    cts.sort_by(|a, b| a.b_star.partial_cmp(&b.b_star).unwrap());
    Ok(CtScan {
        cts,
        grazing,
        failures,
    })
}

fn block_pair_key(pair: &BranchPair) -> (i32, i32) {
    (pair.a.two_mf.min(pair.b.two_mf), pair.a.two_mf.max(pair.b.two_mf))
}

fn group_doublets<R: Real>(
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
    candidates: Vec<ClockTransition<R>>,
    opts: &ScanOptions<R>,
) -> Result<Vec<ClockTransition<R>>> {
    let mut out: Vec<ClockTransition<R>> = Vec::new();
    let mut minus_pool: Vec<ClockTransition<R>> = Vec::new();
    let mut plus_pool: Vec<ClockTransition<R>> = Vec::new();
    for ct in candidates {
        match ct.selection {
            Selection::Plus => plus_pool.push(ct),
            Selection::Minus => minus_pool.push(ct),
            Selection::Other => out.push(ct),
        }
    }
    let mut minus_used = vec![false; minus_pool.len()];
    for mut plus in plus_pool {
        let key = block_pair_key(&plus.pair);
        let mut best: Option<(usize, R)> = None;
        for (k, minus) in minus_pool.iter().enumerate() {
            if minus_used[k] || block_pair_key(&minus.pair) != key {
                continue;
            }
            let f_at = eval_pair(sys, ops, minus.pair, plus.b_star)?.f;
            let split = (f_at - plus.f_star).abs();
            if split <= opts.doublet_window && best.is_none_or(|(_, s)| split < s) {
                best = Some((k, split));
            }
        }
        if let Some((k, _)) = best {
            minus_used[k] = true;
            let minus = &minus_pool[k];
            let f_at_bstar = eval_pair(sys, ops, minus.pair, plus.b_star)?.f;
            plus.partner = Some(DoubletPartner {
                pair: minus.pair,
                b_star: minus.b_star,
                f_star: minus.f_star,
                f_at_bstar,
            });
        }
        out.push(plus);
    }
    for (k, minus) in minus_pool.into_iter().enumerate() {
        if !minus_used[k] {
            out.push(minus);
        }
    }
    Ok(out)
}
