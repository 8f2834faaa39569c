//! Spin operator matrices in the product basis |mS⟩⊗|mI⟩ and the
//! field-dependent Hamiltonian.
//!
//! Basis ordering: mS runs slow and descending, mI fast and descending, so
//! for S = 1/2, I = 1/2 the basis is {|+,+⟩, |+,−⟩, |−,+⟩, |−,−⟩}.
//!
//! Everything is kept real. `Jy` is purely imaginary in this basis, so the
//! stored `i_sy`/`i_iy` matrices are the real matrices i·Sy and i·Iy; the
//! commutators become real identities (`[Sz,Sx] = i·Sy` etc.) and
//! Sy⊗Iy = −(i·Sy)⊗(i·Iy) keeps S·I and the Hamiltonian real symmetric.

use crate::error::Result;
use crate::linalg::{jacobi_eigen, Mat};
use crate::real::Real;
use crate::system::SpinSystem;

/// Single-spin matrices for spin j, descending-m basis.
fn single_spin<R: Real>(j: R) -> (Mat<R>, Mat<R>, Mat<R>, Mat<R>) {
    let d = (j + j).to_f64_lossy().round() as usize + 1;
    let mut jz = Mat::zeros(d);
    let mut jplus = Mat::zeros(d);
    for k in 0..d {
        let m = j - R::of(k as f64);
        jz.set(k, k, m);
        if k > 0 {
            // J+ |j,m> = sqrt(j(j+1) - m(m+1)) |j,m+1>
            let amp = (j * (j + R::one()) - m * (m + R::one())).sqrt();
            jplus.set(k - 1, k, amp);
        }
    }
    let mut jx = Mat::zeros(d);
    let mut i_jy = Mat::zeros(d);
    for r in 0..d {
        for c in 0..d {
            let p = jplus.get(r, c);
            let m = jplus.get(c, r); // J- = (J+)^T
            jx.set(r, c, (p + m) * R::half());
            i_jy.set(r, c, (p - m) * R::half()); // i·Jy = (J+ - J-)/2
        }
    }
    (jz, jplus, jx, i_jy)
}

/// Zero-field |F,mF⟩ eigenbasis used for state labelling: one column per
/// basis state, tagged with its F and exact mF.
#[derive(Debug, Clone)]
pub struct ZeroFieldBasis<R> {
    /// Full-dimension orthonormal columns.
    pub vectors: Vec<Vec<R>>,
    /// Total-spin quantum number of each column.
    pub f: Vec<R>,
    /// Doubled exact projection 2·mF of each column.
    pub two_mf: Vec<i32>,
}

/// Angular-momentum matrices for the coupled electron-nuclear system.
#[derive(Debug, Clone)]
pub struct SpinOperators<R> {
    pub dim: usize,
    pub sx: Mat<R>,
    /// i·Sy (real).
    pub i_sy: Mat<R>,
    pub sz: Mat<R>,
    pub ix: Mat<R>,
    /// i·Iy (real).
    pub i_iy: Mat<R>,
    pub iz: Mat<R>,
    /// S·I = SxIx + SyIy + SzIz.
    pub s_dot_i: Mat<R>,
    /// Doubled exact mF of each product basis state.
    pub basis_two_mf: Vec<i32>,
    /// mF blocks: (2·mF, basis indices), sorted by 2·mF.
    pub blocks: Vec<(i32, Vec<usize>)>,
    pub zero_field: ZeroFieldBasis<R>,
}

impl<R: Real> SpinOperators<R> {
    pub fn fz(&self) -> Mat<R> {
        self.sz.add_scaled(&self.iz, R::one())
    }

    /// Basis indices of the mF block with doubled projection `two_mf`.
    pub fn block(&self, two_mf: i32) -> Option<&[usize]> {
        self.blocks
            .iter()
            .find(|(k, _)| *k == two_mf)
            .map(|(_, idx)| idx.as_slice())
    }
}

/// Fix a deterministic overall sign: largest-magnitude component positive.
pub(crate) fn fix_sign<R: Real>(v: &mut [R]) {
    let mut best = 0usize;
    let mut best_abs = R::zero();
    for (k, &x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = k;
        }
    }
    if v[best] < R::zero() {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Build the coupled spin operators for a donor system.
///
/// Rejects non-half-integer S or I via `SpinSystem::new` validation.
pub fn build_operators<R: Real>(sys: &SpinSystem<R>) -> Result<SpinOperators<R>> {
    // re-validate so raw struct literals cannot smuggle bad spins in
    let sys = SpinSystem::new(sys.s, sys.i, sys.gamma_e, sys.gamma_n, sys.a)?;
    let (sz1, _, sx1, i_sy1) = single_spin(sys.s);
    let (iz1, _, ix1, i_iy1) = single_spin(sys.i);
    let ds = sz1.dim();
    let di = iz1.dim();
    let es = Mat::identity(ds);
    let ei = Mat::identity(di);

    let sx = Mat::kron(&sx1, &ei);
    let i_sy = Mat::kron(&i_sy1, &ei);
    let sz = Mat::kron(&sz1, &ei);
    let ix = Mat::kron(&es, &ix1);
    let i_iy = Mat::kron(&es, &i_iy1);
    let iz = Mat::kron(&es, &iz1);

    // S·I = Sx⊗Ix − (i·Sy)⊗(i·Iy) + Sz⊗Iz
    let s_dot_i = Mat::kron(&sx1, &ix1)
        .add_scaled(&Mat::kron(&i_sy1, &i_iy1), -R::one())
        .add_scaled(&Mat::kron(&sz1, &iz1), R::one());

    let dim = ds * di;
    let mut basis_two_mf = Vec::with_capacity(dim);
    for a in 0..ds {
        let ms = sys.s - R::of(a as f64);
        for b in 0..di {
            let mi = sys.i - R::of(b as f64);
            let two = ((ms + mi) * R::two()).to_f64_lossy().round() as i32;
            basis_two_mf.push(two);
        }
    }
    let mut blocks: Vec<(i32, Vec<usize>)> = Vec::new();
    let mut keys: Vec<i32> = basis_two_mf.clone();
    keys.sort_unstable();
    keys.dedup();
    for key in keys {
        let idx: Vec<usize> = basis_two_mf
            .iter()
            .enumerate()
            .filter(|(_, &k)| k == key)
            .map(|(i, _)| i)
            .collect();
        blocks.push((key, idx));
    }

    let zero_field = build_zero_field_basis(&sys, &s_dot_i, &blocks, dim)?;

    Ok(SpinOperators {
        dim,
        sx,
        i_sy,
        sz,
        ix,
        i_iy,
        iz,
        s_dot_i,
        basis_two_mf,
        blocks,
        zero_field,
    })
}

fn build_zero_field_basis<R: Real>(
    sys: &SpinSystem<R>,
    s_dot_i: &Mat<R>,
    blocks: &[(i32, Vec<usize>)],
    dim: usize,
) -> Result<ZeroFieldBasis<R>> {
    let casimir = sys.s * (sys.s + R::one()) + sys.i * (sys.i + R::one());
    let mut vectors = Vec::with_capacity(dim);
    let mut f_out = Vec::with_capacity(dim);
    let mut two_mf_out = Vec::with_capacity(dim);
    for (key, idx) in blocks {
        let nb = idx.len();
        let mut sub = Mat::zeros(nb);
        for (r, &gr) in idx.iter().enumerate() {
            for (c, &gc) in idx.iter().enumerate() {
                sub.set(r, c, s_dot_i.get(gr, gc));
            }
        }
        let (vals, vecs) = jacobi_eigen(&sub)?;
        let mut order: Vec<usize> = (0..nb).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        for &col in &order {
            // vals = (F(F+1) − S(S+1) − I(I+1)) / 2, solve for F
            let c = R::two() * vals[col] + casimir;
            let f_raw = (-R::one() + (R::one() + R::of(4.0) * c).sqrt()) * R::half();
            let f = R::of((f_raw + f_raw).to_f64_lossy().round() / 2.0);
            let mut full = vec![R::zero(); dim];
            for (r, &gr) in idx.iter().enumerate() {
                full[gr] = vecs.get(r, col);
            }
            fix_sign(&mut full);
            vectors.push(full);
            f_out.push(f);
            two_mf_out.push(*key);
        }
    }
    Ok(ZeroFieldBasis {
        vectors,
        f: f_out,
        two_mf: two_mf_out,
    })
}

/// Spin Hamiltonian in GHz: H = B0 (γe Sz − γn Iz) + A S·I.
pub fn hamiltonian<R: Real>(sys: &SpinSystem<R>, ops: &SpinOperators<R>, b0: R) -> Mat<R> {
    let zeeman = ops
        .sz
        .scale(sys.gamma_e)
        .add_scaled(&ops.iz, -sys.gamma_n);
    zeeman.scale(b0).add_scaled(&ops.s_dot_i, sys.a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::jacobi_eigen;
    use approx::assert_relative_eq;

    fn si_bi_ops() -> (SpinSystem<f64>, SpinOperators<f64>) {
        let sys = SpinSystem::si_bi();
        let ops = build_operators(&sys).unwrap();
        (sys, ops)
    }

    fn commutator(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
        a.matmul(b).add_scaled(&b.matmul(a), -1.0)
    }

    fn max_abs_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
        a.add_scaled(b, -1.0).max_abs()
    }

    #[test]
    fn sz_diagonal_for_two_half_spins() {
        let sys: SpinSystem<f64> = SpinSystem::new(0.5, 0.5, 28.0, 0.017, 0.1).unwrap();
        let ops = build_operators(&sys).unwrap();
        let expect = [0.5, 0.5, -0.5, -0.5];
        for k in 0..4 {
            assert_eq!(ops.sz.get(k, k), expect[k]);
            for c in 0..4 {
                if c != k {
                    assert_eq!(ops.sz.get(k, c), 0.0);
                }
            }
        }
    }

    #[test]
    fn commutation_relations_real_form() {
        // [Sz,Sx] = i·Sy, [Sx, i·Sy] = −Sz, [i·Sy, Sz] = −Sx, and S ↔ I copies
        let (_, ops) = si_bi_ops();
        assert!(max_abs_diff(&commutator(&ops.sz, &ops.sx), &ops.i_sy) < 1e-13);
        assert!(max_abs_diff(&commutator(&ops.sx, &ops.i_sy), &ops.sz.scale(-1.0)) < 1e-13);
        assert!(max_abs_diff(&commutator(&ops.i_sy, &ops.sz), &ops.sx.scale(-1.0)) < 1e-13);
        assert!(max_abs_diff(&commutator(&ops.iz, &ops.ix), &ops.i_iy) < 1e-13);
        assert!(max_abs_diff(&commutator(&ops.ix, &ops.i_iy), &ops.iz.scale(-1.0)) < 1e-13);
        // electron and nuclear operators commute
        assert!(commutator(&ops.sx, &ops.ix).max_abs() < 1e-14);
        assert!(commutator(&ops.sz, &ops.ix).max_abs() < 1e-14);
        assert!(commutator(&ops.sx, &ops.iz).max_abs() < 1e-14);
    }

    #[test]
    fn sz_squared_trace() {
        // trace(Sz²)·4/d = 1 for S = 1/2
        let (sys, ops) = si_bi_ops();
        let tr = ops.sz.matmul(&ops.sz).trace();
        assert_relative_eq!(tr * 4.0 / sys.dimension() as f64, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn s_dot_i_spectrum() {
        // S·I eigenvalues are 2.25 (×11) and −2.75 (×9) for S=1/2, I=9/2
        let (_, ops) = si_bi_ops();
        let (mut vals, _) = jacobi_eigen(&ops.s_dot_i).unwrap();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for v in &vals[..9] {
            assert_relative_eq!(*v, -2.75, epsilon = 1e-12);
        }
        for v in &vals[9..] {
            assert_relative_eq!(*v, 2.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn s_dot_i_is_symmetric_and_commutes_with_fz() {
        let (_, ops) = si_bi_ops();
        for r in 0..ops.dim {
            for c in 0..ops.dim {
                assert_eq!(ops.s_dot_i.get(r, c), ops.s_dot_i.get(c, r));
            }
        }
        assert!(commutator(&ops.s_dot_i, &ops.fz()).max_abs() < 1e-13);
    }

    #[test]
    fn hamiltonian_is_traceless_and_symmetric() {
        let (sys, ops) = si_bi_ops();
        for b0 in [0.0, 0.0798, 0.35, -0.2] {
            let h = hamiltonian(&sys, &ops, b0);
            assert!(h.trace().abs() < 1e-12);
            for r in 0..ops.dim {
                for c in 0..ops.dim {
                    assert_eq!(h.get(r, c), h.get(c, r));
                }
            }
        }
    }

    #[test]
    fn zero_field_basis_is_orthonormal_with_correct_f_counts() {
        let (_, ops) = si_bi_ops();
        let zf = &ops.zero_field;
        assert_eq!(zf.vectors.len(), 20);
        let n5 = zf.f.iter().filter(|&&f| f == 5.0).count();
        let n4 = zf.f.iter().filter(|&&f| f == 4.0).count();
        assert_eq!((n4, n5), (9, 11));
        for a in 0..20 {
            for b in 0..20 {
                let d = crate::linalg::dot(&zf.vectors[a], &zf.vectors[b]);
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-12);
            }
        }
        // each zero-field column is an S·I eigenvector
        for (k, v) in zf.vectors.iter().enumerate() {
            let ev = if zf.f[k] == 5.0 { 2.25 } else { -2.75 };
            let mv = ops.s_dot_i.matvec(v);
            for (x, y) in mv.iter().zip(v) {
                assert!((x - ev * y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_invalid_spins() {
        let bad = SpinSystem {
            s: 0.4,
            i: 4.5,
            gamma_e: 28.0,
            gamma_n: 0.007,
            a: 1.0,
        };
        assert!(build_operators(&bad).is_err());
    }
}
