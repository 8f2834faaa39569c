//! Eigensolutions of the donor Hamiltonian: dense diagonalization, the
//! analytic Breit-Rabi route, |F,mF⟩ state labels and tracked field sweeps.

use crate::error::{Error, Result};
use crate::linalg::{dot, jacobi_eigen, Mat};
use crate::operators::{fix_sign, hamiltonian, SpinOperators};
use crate::real::Real;
use crate::system::SpinSystem;

/// Label of one eigenstate by its dominant zero-field |F,mF⟩ component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateLabel<R> {
    /// Dominant total-spin quantum number (I ± S).
    pub f: R,
    /// Exact projection quantum number.
    pub m_f: R,
    /// Squared overlap with the dominant zero-field basis state, in [0, 1].
    pub purity: R,
}

/// Stable identity of one level across fields: mF is exact, and within an
/// mF block the energy ordering never changes for S = 1/2 (the block
/// off-diagonal element is field independent and non-zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchId {
    /// Doubled exact projection 2·mF.
    pub two_mf: i32,
    /// Rank within the mF block, by ascending energy.
    pub ordinal: usize,
}

/// An unordered pair of level branches defining one transition followed
/// across the field axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchPair {
    pub a: BranchId,
    pub b: BranchId,
}

impl BranchPair {
    pub fn new(a: BranchId, b: BranchId) -> Self {
        if a <= b {
            Self { a, b }
        } else {
            Self { a: b, b: a }
        }
    }

    /// |ΔmF| between the two branches.
    pub fn delta_mf_abs(&self) -> i32 {
        (self.a.two_mf - self.b.two_mf).abs() / 2
    }
}

/// Sorted energy levels with eigenvectors and labels at one field value.
#[derive(Debug, Clone)]
pub struct EigenSolution<R> {
    /// Magnetic field (T).
    pub b0: R,
    /// Eigenvalues in GHz (E/h), ascending.
    pub energies: Vec<R>,
    /// `vectors[k]` is the orthonormal eigenvector of `energies[k]`.
    pub vectors: Vec<Vec<R>>,
    /// Per-level |F,mF⟩ labels.
    pub labels: Vec<StateLabel<R>>,
}

impl<R: Real> EigenSolution<R> {
    pub fn dimension(&self) -> usize {
        self.energies.len()
    }

    pub fn two_mf(&self, level: usize) -> i32 {
        let doubled = (self.labels[level].m_f + self.labels[level].m_f).to_f64_lossy();
        doubled.round() as i32
    }

    /// Branch identity of a level index.
    pub fn branch_id(&self, level: usize) -> BranchId {
        let key = self.two_mf(level);
        let ordinal = (0..level).filter(|&j| self.two_mf(j) == key).count();
        BranchId {
            two_mf: key,
            ordinal,
        }
    }

    /// Level index of a branch at this field, if present.
    pub fn level_of(&self, branch: BranchId) -> Option<usize> {
        let mut seen = 0;
        for k in 0..self.dimension() {
            if self.two_mf(k) == branch.two_mf {
                if seen == branch.ordinal {
                    return Some(k);
                }
                seen += 1;
            }
        }
        None
    }
}

/// Attach |F,mF⟩ labels to a set of eigenvectors.
///
/// mF comes from ⟨Fz⟩ (Fz is diagonal in the product basis); levels whose
/// projection sits more than 1e-6 off the half-integer grid are rejected.
/// The dominant F and purity come from overlaps with the zero-field basis
/// restricted to the same mF block.
pub fn label_states<R: Real>(
    vectors: &[Vec<R>],
    b0: R,
    ops: &SpinOperators<R>,
) -> Result<Vec<StateLabel<R>>> {
    let mut labels = Vec::with_capacity(vectors.len());
    for (level, v) in vectors.iter().enumerate() {
        let mut fz = R::zero();
        for (k, &c) in v.iter().enumerate() {
            fz = fz + c * c * R::of(ops.basis_two_mf[k] as f64 / 2.0);
        }
        let doubled = (fz + fz).to_f64_lossy();
        if (doubled - doubled.round()).abs() > 2e-6 {
            return Err(Error::BadProjection {
                b0: b0.to_f64_lossy(),
                level,
                m_f: fz.to_f64_lossy(),
            });
        }
        let two_mf = doubled.round() as i32;
        let mut best_f = R::zero();
        let mut best_overlap = -R::one();
        for (col, zf_vec) in ops.zero_field.vectors.iter().enumerate() {
            if ops.zero_field.two_mf[col] != two_mf {
                continue;
            }
            let ov = dot(zf_vec, v);
            let ov2 = ov * ov;
            if ov2 > best_overlap {
                best_overlap = ov2;
                best_f = ops.zero_field.f[col];
            }
        }
        labels.push(StateLabel {
            f: best_f,
            m_f: R::of(two_mf as f64 / 2.0),
            purity: best_overlap.min(R::one()),
        });
    }
    Ok(labels)
}

fn sort_levels<R: Real>(
    b0: R,
    mut entries: Vec<(R, Vec<R>)>,
    ops: &SpinOperators<R>,
) -> Result<EigenSolution<R>> {
    entries.sort_by(|(ea, va), (eb, vb)| {
        ea.partial_cmp(eb)
            .unwrap()
            .then_with(|| block_of(va, ops).cmp(&block_of(vb, ops)))
    });
    let energies: Vec<R> = entries.iter().map(|(e, _)| *e).collect();
    let vectors: Vec<Vec<R>> = entries.into_iter().map(|(_, v)| v).collect();
    let labels = label_states(&vectors, b0, ops)?;
    Ok(EigenSolution {
        b0,
        energies,
        vectors,
        labels,
    })
}

fn block_of<R: Real>(v: &[R], ops: &SpinOperators<R>) -> i32 {
    let mut best = 0usize;
    let mut best_abs = R::zero();
    for (k, &x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = k;
        }
    }
    ops.basis_two_mf[best]
}

/// Dense eigensolution of a Hamiltonian matrix.
///
/// The Hamiltonian commutes with Fz and is exactly block sparse over mF in
/// the product basis; Jacobi rotations preserve that sparsity, so every
/// eigenvector carries a definite mF even inside degenerate manifolds. This
/// realizes the simultaneous diagonalization with Fz without a second pass.
pub fn eigensolve<R: Real>(
    h: &Mat<R>,
    b0: R,
    ops: &SpinOperators<R>,
) -> Result<EigenSolution<R>> {
    let (vals, vecs) = jacobi_eigen(h).map_err(|_| Error::NonConvergence {
        b0: b0.to_f64_lossy(),
    })?;
    let n = h.dim();
    let h_norm = h.frobenius_norm();
    let tol = R::of(1e-9) * h_norm.max(R::one());
    let mut entries = Vec::with_capacity(n);
    for j in 0..n {
        let mut v: Vec<R> = (0..n).map(|r| vecs.get(r, j)).collect();
        fix_sign(&mut v);
        let hv = h.matvec(&v);
        let mut resid = R::zero();
        for (a, b) in hv.iter().zip(&v) {
            let d = *a - vals[j] * *b;
            resid = resid + d * d;
        }
        if resid.sqrt() > tol {
            return Err(Error::NonConvergence {
                b0: b0.to_f64_lossy(),
            });
        }
        entries.push((vals[j], v));
    }
    sort_levels(b0, entries, ops)
}

/// Build the Hamiltonian at `b0` and diagonalize it.
pub fn solve_at<R: Real>(
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
    b0: R,
) -> Result<EigenSolution<R>> {
    eigensolve(&hamiltonian(sys, ops, b0), b0, ops)
}

/// Closed-form eigensolution for S = 1/2 via the mF block structure.
///
/// Every mF block is at most 2×2: the stretched states mF = ±(I+1/2) are
/// product states with exactly linear energies, and each interior block
/// diagonalizes analytically. Returns the same level set as `eigensolve`.
pub fn breit_rabi_levels<R: Real>(
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
    b0: R,
) -> Result<EigenSolution<R>> {
    if (sys.s - R::half()).abs() > R::of(1e-12) {
        return Err(Error::Domain(format!(
            "Breit-Rabi blocks need S = 1/2, got S = {}",
            sys.s
        )));
    }
    let dim = ops.dim;
    let mut entries: Vec<(R, Vec<R>)> = Vec::with_capacity(dim);
    for (key, idx) in &ops.blocks {
        let mf = R::of(*key as f64 / 2.0);
        match idx.len() {
            1 => {
                // stretched |mS = ±1/2, mI = ±I⟩ state, exactly linear in B
                let ms = if *key > 0 { R::half() } else { -R::half() };
                let mi = mf - ms;
                let e = b0 * (sys.gamma_e * ms - sys.gamma_n * mi) + sys.a * ms * mi;
                let mut v = vec![R::zero(); dim];
                v[idx[0]] = R::one();
                entries.push((e, v));
            }
            2 => {
                // basis order within the block: u = |+1/2, mF−1/2⟩ first
                // (mS-major ordering), then d = |−1/2, mF+1/2⟩
                let huu = b0 * (sys.gamma_e * R::half() - sys.gamma_n * (mf - R::half()))
                    + sys.a * R::half() * (mf - R::half());
                let hdd = b0 * (-sys.gamma_e * R::half() - sys.gamma_n * (mf + R::half()))
                    - sys.a * R::half() * (mf + R::half());
                let off = sys.a
                    * R::half()
                    * (sys.i * (sys.i + R::one()) - (mf - R::half()) * (mf + R::half())).sqrt();
                let mean = (huu + hdd) * R::half();
                let delta = (huu - hdd) * R::half();
                let r = (delta * delta + off * off).sqrt();
                // tan of the rotation angle for the upper eigenvector,
                // computed without cancellation
                let t = if delta >= R::zero() {
                    off / (r + delta)
                } else {
                    (r - delta) / off
                };
                let norm = (R::one() + t * t).sqrt();
                let (cu, su) = (R::one() / norm, t / norm);
                let mut upper = vec![R::zero(); dim];
                upper[idx[0]] = cu;
                upper[idx[1]] = su;
                let mut lower = vec![R::zero(); dim];
                lower[idx[0]] = -su;
                lower[idx[1]] = cu;
                fix_sign(&mut upper);
                fix_sign(&mut lower);
                entries.push((mean - r, lower));
                entries.push((mean + r, upper));
            }
            n => {
                return Err(Error::Domain(format!(
                    "unexpected mF block of size {n} for S = 1/2"
                )))
            }
        }
    }
    sort_levels(b0, entries, ops)
}

/// Energies and labels over a field grid with adiabatic branch tracking.
#[derive(Debug, Clone)]
pub struct LevelSweep<R> {
    pub fields: Vec<R>,
    /// Branch identities, ordered by ascending energy at the first field.
    pub branch_ids: Vec<BranchId>,
    /// `energies[branch][field_index]`.
    pub energies: Vec<Vec<R>>,
    /// `labels[branch][field_index]`.
    pub labels: Vec<Vec<StateLabel<R>>>,
}

/// Uniform field grid; a degenerate range (lo == hi) collapses to one point.
pub fn field_grid<R: Real>(lo: R, hi: R, n: usize) -> Vec<R> {
    if lo == hi || n <= 1 {
        return vec![lo];
    }
    let step = (hi - lo) / R::of((n - 1) as f64);
    (0..n)
        .map(|k| {
            if k == n - 1 {
                hi
            } else {
                lo + step * R::of(k as f64)
            }
        })
        .collect()
}

/// Sweep the field range, tracking each level branch by maximum eigenvector
/// overlap between adjacent grid points.
pub fn sweep_levels<R: Real>(
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
    b_lo: R,
    b_hi: R,
    n_grid: usize,
) -> Result<LevelSweep<R>> {
    let fields = field_grid(b_lo, b_hi, n_grid);
    let dim = ops.dim;
    let first = solve_at(sys, ops, fields[0])?;
    let branch_ids: Vec<BranchId> = (0..dim).map(|k| first.branch_id(k)).collect();

    let mut energies: Vec<Vec<R>> = vec![Vec::with_capacity(fields.len()); dim];
    let mut labels: Vec<Vec<StateLabel<R>>> = vec![Vec::with_capacity(fields.len()); dim];
    for branch in 0..dim {
        energies[branch].push(first.energies[branch]);
        labels[branch].push(first.labels[branch]);
    }

    let mut prev = first;
    let mut prev_level_of_branch: Vec<usize> = (0..dim).collect();
    for &b in &fields[1..] {
        let sol = solve_at(sys, ops, b)?;
        let assignment = match_by_overlap(&prev, &sol)?;
        for branch in 0..dim {
            let level = assignment[prev_level_of_branch[branch]];
            energies[branch].push(sol.energies[level]);
            labels[branch].push(sol.labels[level]);
        }
        prev_level_of_branch = (0..dim)
            .map(|branch| assignment[prev_level_of_branch[branch]])
            .collect();
        prev = sol;
    }

    Ok(LevelSweep {
        fields,
        branch_ids,
        energies,
        labels,
    })
}

/// Match levels of `next` to levels of `prev` by maximal |⟨v_prev|v_next⟩|.
/// Overlaps across different mF blocks vanish identically, so the matching
/// runs block by block; an ambiguous best overlap (squared < 0.5) is an
/// error carrying the field location.
fn match_by_overlap<R: Real>(
    prev: &EigenSolution<R>,
    next: &EigenSolution<R>,
) -> Result<Vec<usize>> {
    let dim = prev.dimension();
    let mut assignment = vec![usize::MAX; dim];
    let mut keys: Vec<i32> = (0..dim).map(|k| prev.two_mf(k)).collect();
    keys.sort_unstable();
    keys.dedup();
    for key in keys {
        let prev_idx: Vec<usize> = (0..dim).filter(|&k| prev.two_mf(k) == key).collect();
        let next_idx: Vec<usize> = (0..dim).filter(|&k| next.two_mf(k) == key).collect();
        if prev_idx.len() != next_idx.len() {
            return Err(Error::TrackingAmbiguity {
                b0: next.b0.to_f64_lossy(),
                overlap: 0.0,
            });
        }
        // greedy assignment on descending overlap
        let mut scored: Vec<(R, usize, usize)> = Vec::new();
        for &p in &prev_idx {
            for &q in &next_idx {
                let ov = dot(&prev.vectors[p], &next.vectors[q]).abs();
                scored.push((ov, p, q));
            }
        }
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut used_next = vec![false; dim];
        let mut remaining = prev_idx.len();
        for (ov, p, q) in scored {
            if assignment[p] != usize::MAX || used_next[q] {
                continue;
            }
            if ov * ov < R::half() {
                return Err(Error::TrackingAmbiguity {
                    b0: next.b0.to_f64_lossy(),
                    overlap: (ov * ov).to_f64_lossy(),
                });
            }
            assignment[p] = q;
            used_next[q] = true;
            remaining -= 1;
            if remaining == 0 {
                break;
            }
        }
        if remaining != 0 {
            return Err(Error::TrackingAmbiguity {
                b0: next.b0.to_f64_lossy(),
                overlap: 0.0,
            });
        }
    }
    Ok(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::build_operators;
    use approx::assert_relative_eq;

    fn si_bi() -> (SpinSystem<f64>, SpinOperators<f64>) {
        let sys = SpinSystem::si_bi();
        let ops = build_operators(&sys).unwrap();
        (sys, ops)
    }

    #[test]
    fn zero_field_manifolds() {
        let (sys, ops) = si_bi();
        let sol = solve_at(&sys, &ops, 0.0).unwrap();
        let a = sys.a;
        for e in &sol.energies[..9] {
            assert_relative_eq!(*e, -2.75 * a, epsilon = 1e-12);
        }
        for e in &sol.energies[9..] {
            assert_relative_eq!(*e, 2.25 * a, epsilon = 1e-12);
        }
        // zero-field splitting 5A = 7.37585 GHz
        assert_relative_eq!(sol.energies[19] - sol.energies[0], 7.37585, epsilon = 1e-9);
        // every level is pure in the |F,mF> basis
        for l in &sol.labels {
            assert!(l.purity > 1.0 - 1e-12);
        }
        let n4 = sol.labels.iter().filter(|l| l.f == 4.0).count();
        assert_eq!(n4, 9);
    }

    #[test]
    fn trace_is_conserved() {
        let (sys, ops) = si_bi();
        for b0 in [0.0, 0.05, 0.0798, 0.35, 0.6] {
            let sol = solve_at(&sys, &ops, b0).unwrap();
            let sum: f64 = sol.energies.iter().sum();
            assert!(sum.abs() < 1e-10, "trace {sum} at B = {b0}");
        }
    }

    #[test]
    fn eigenvectors_live_in_single_mf_blocks() {
        let (sys, ops) = si_bi();
        let sol = solve_at(&sys, &ops, 0.0798).unwrap();
        for (k, v) in sol.vectors.iter().enumerate() {
            let key = sol.two_mf(k);
            for (comp, &x) in v.iter().enumerate() {
                if ops.basis_two_mf[comp] != key {
                    assert_eq!(x, 0.0, "level {k} leaks outside its mF block");
                }
            }
        }
    }

    #[test]
    fn cross_solver_agreement_spot_checks() {
        let (sys, ops) = si_bi();
        for b0 in [0.0, 0.0798, 0.1, 0.35, 0.6] {
            let dense = solve_at(&sys, &ops, b0).unwrap();
            let analytic = breit_rabi_levels(&sys, &ops, b0).unwrap();
            for (e1, e2) in dense.energies.iter().zip(&analytic.energies) {
                assert!((e1 - e2).abs() < 1e-9, "B={b0}: {e1} vs {e2}");
            }
            // eigenvectors and labels agree branch by branch
            for k in 0..dense.dimension() {
                let id = dense.branch_id(k);
                let j = analytic.level_of(id).unwrap();
                let ov = crate::linalg::dot(&dense.vectors[k], &analytic.vectors[j]).abs();
                assert!(ov > 1.0 - 1e-10, "B={b0} branch {id:?}: overlap {ov}");
                assert_eq!(dense.labels[k].f, analytic.labels[j].f);
                assert!((dense.labels[k].purity - analytic.labels[j].purity).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn extreme_level_gap_at_798_gauss() {
        // frozen from the analytic 2x2 block solution at B0 = 0.0798 T
        let (sys, ops) = si_bi();
        let dense = solve_at(&sys, &ops, 0.0798).unwrap();
        let gap = dense.energies[19] - dense.energies[0];
        assert_relative_eq!(gap, 9.435326903324, epsilon = 1e-9);
        let analytic = breit_rabi_levels(&sys, &ops, 0.0798).unwrap();
        let gap2 = analytic.energies[19] - analytic.energies[0];
        assert_relative_eq!(gap, gap2, epsilon = 1e-12);
    }

    #[test]
    fn stretched_states_are_exactly_linear() {
        let (sys, ops) = si_bi();
        for b0 in [0.013, 0.2, 0.5] {
            let sol = breit_rabi_levels(&sys, &ops, b0).unwrap();
            // E(mF = ±(I+1/2)) = A·I/2 ± B0(γe/2 − γn·I)
            let slope = sys.gamma_e / 2.0 - sys.gamma_n * sys.i;
            let e0 = sys.a * sys.i / 2.0;
            let top = sol
                .energies
                .iter()
                .zip(&sol.labels)
                .find(|(_, l)| l.m_f == 5.0)
                .unwrap()
                .0;
            let bottom = sol
                .energies
                .iter()
                .zip(&sol.labels)
                .find(|(_, l)| l.m_f == -5.0)
                .unwrap()
                .0;
            assert_relative_eq!(*top, e0 + b0 * slope, epsilon = 1e-12);
            assert_relative_eq!(*bottom, e0 - b0 * slope, epsilon = 1e-12);
        }
    }

    #[test]
    fn breit_rabi_rejects_high_electron_spin() {
        let sys: SpinSystem<f64> = SpinSystem::new(1.0, 0.5, 28.0, 0.0, 0.1).unwrap();
        let ops = build_operators(&sys).unwrap();
        assert!(breit_rabi_levels(&sys, &ops, 0.1).is_err());
        // the dense route still works
        assert!(solve_at(&sys, &ops, 0.1).is_ok());
    }

    #[test]
    fn labels_stay_dominant_below_400_mt() {
        let (sys, ops) = si_bi();
        for k in 0..=40 {
            let b0 = 0.4 * k as f64 / 40.0;
            let sol = solve_at(&sys, &ops, b0).unwrap();
            for l in &sol.labels {
                assert!(l.purity >= 0.5, "purity {} at B = {b0}", l.purity);
                assert!(l.purity <= 1.0);
            }
        }
    }

    #[test]
    fn high_field_labels_lose_purity() {
        let (sys, ops) = si_bi();
        let sol = solve_at(&sys, &ops, 10.0).unwrap();
        let pure: Vec<_> = sol
            .labels
            .iter()
            .filter(|l| l.purity > 1.0 - 1e-9)
            .collect();
        // only the two stretched states stay exact |F,mF> states
        assert_eq!(pure.len(), 2);
        for l in &sol.labels {
            assert!(l.purity > 0.5, "labels stay dominant, got {}", l.purity);
        }
    }

    #[test]
    fn ct_levels_have_delta_f_one() {
        // the two levels of the 7.0317 GHz clock transition at 79.8 mT
        let (sys, ops) = si_bi();
        let sol = solve_at(&sys, &ops, 0.0798).unwrap();
        let lo = sol
            .level_of(BranchId {
                two_mf: -4,
                ordinal: 0,
            })
            .unwrap();
        let hi = sol
            .level_of(BranchId {
                two_mf: -2,
                ordinal: 1,
            })
            .unwrap();
        let f = sol.energies[hi] - sol.energies[lo];
        assert!((f - 7.0317).abs() < 2e-3, "doublet frequency {f}");
        assert_eq!((sol.labels[lo].f - sol.labels[hi].f).abs(), 1.0);
    }

    #[test]
    fn labels_reject_mixed_mf_vectors() {
        let (sys, ops) = si_bi();
        let sol = solve_at(&sys, &ops, 0.1).unwrap();
        // an uneven blend across blocks puts <Fz> off the half-integer grid
        let a = sol
            .level_of(BranchId { two_mf: -10, ordinal: 0 })
            .unwrap();
        let b = sol
            .level_of(BranchId { two_mf: -8, ordinal: 0 })
            .unwrap();
        let (wa, wb) = (0.7f64.sqrt(), 0.3f64.sqrt());
        let bad: Vec<f64> = sol.vectors[a]
            .iter()
            .zip(&sol.vectors[b])
            .map(|(x, y)| wa * x + wb * y)
            .collect();
        assert!(label_states(&[bad], 0.1, &ops).is_err());
    }

    #[test]
    fn sweep_tracks_branch_identity() {
        let (sys, ops) = si_bi();
        let sweep = sweep_levels(&sys, &ops, 0.001, 0.3, 64).unwrap();
        assert_eq!(sweep.branch_ids.len(), 20);
        // overlap tracking must agree with the exact (mF, ordinal) identity
        for (branch, id) in sweep.branch_ids.iter().enumerate() {
            for (k, &b) in sweep.fields.iter().enumerate() {
                let sol = solve_at(&sys, &ops, b).unwrap();
                let level = sol.level_of(*id).unwrap();
                assert_relative_eq!(
                    sweep.energies[branch][k],
                    sol.energies[level],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn degenerate_range_collapses_to_single_point() {
        let grid = field_grid(0.4f64, 0.4, 128);
        assert_eq!(grid, vec![0.4]);
        let grid = field_grid(0.0f64, 1.0, 5);
        assert_eq!(grid, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
