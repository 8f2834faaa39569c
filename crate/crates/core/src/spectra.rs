//! Echo-detected field-sweep ESR spectra at fixed microwave frequency.
//!
//! The amplitude model is lineshape-weighted transition intensity only; the
//! lineshape lives in the frequency domain at fixed field, so the apparent
//! field-domain width comes entirely from the geometry of f(B). Quoted
//! widths are treated as FWHM throughout (for a Gaussian, σ = FWHM/2.3548).

use crate::clock::allowed_branch_pairs;
use crate::error::{Error, Result};
use crate::levels::{field_grid, solve_at, BranchPair};
use crate::operators::SpinOperators;
use crate::real::Real;
use crate::system::SpinSystem;
use crate::transitions::{classify, Selection, TransitionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineShape {
    Gaussian,
    Lorentzian,
}

/// Frequency-domain linewidth model. All widths are FWHM.
#[derive(Debug, Clone, Copy)]
pub struct LinewidthModel<R> {
    /// Intrinsic frequency-domain width (GHz).
    pub sigma_f0: R,
    /// Hyperfine-constant spread (GHz), entering as |df/dA|·σ_A.
    pub sigma_a: R,
    /// Field inhomogeneity (T), entering as |df/dB|·σ_B.
    pub sigma_b: R,
    pub shape: LineShape,
}

impl<R: Real> LinewidthModel<R> {
    pub fn new(sigma_f0: R, sigma_a: R, sigma_b: R, shape: LineShape) -> Result<Self> {
        if sigma_f0 < R::zero() || sigma_a < R::zero() || sigma_b < R::zero() {
            return Err(Error::Domain("linewidths must be non-negative".into()));
        }
        if sigma_f0 == R::zero() && sigma_a == R::zero() && sigma_b == R::zero() {
            return Err(Error::Domain("at least one linewidth must be positive".into()));
        }
        Ok(Self {
            sigma_f0,
            sigma_a,
            sigma_b,
            shape,
        })
    }

    /// ²⁸Si:Bi preset: the measured 270 kHz frequency-domain width encodes
    /// the total broadening, so σ_A and σ_B stay zero to avoid double
    /// counting.
    pub fn si28() -> Self {
        Self {
            sigma_f0: R::of(270e-6),
            sigma_a: R::zero(),
            sigma_b: R::zero(),
            shape: LineShape::Gaussian,
        }
    }

    /// Natural-silicon preset: 500 kHz at the clock transition.
    pub fn natural_si() -> Self {
        Self {
            sigma_f0: R::of(500e-6),
            sigma_a: R::zero(),
            sigma_b: R::zero(),
            shape: LineShape::Gaussian,
        }
    }

    /// Pure hyperfine-spread model (60 kHz in A).
    pub fn hyperfine_spread() -> Self {
        Self {
            sigma_f0: R::zero(),
            sigma_a: R::of(60e-6),
            sigma_b: R::zero(),
            shape: LineShape::Gaussian,
        }
    }
}

/// Quadrature combination of the width channels for one transition:
/// sqrt(σ_f0² + (df/dA·σ_A)² + (df/dB·σ_B)²), in GHz FWHM.
pub fn effective_linewidth<R: Real>(dfda: R, dfdb: R, model: &LinewidthModel<R>) -> R {
    let a = dfda * model.sigma_a;
    let b = dfdb * model.sigma_b;
    (model.sigma_f0 * model.sigma_f0 + a * a + b * b).sqrt()
}

/// Peak-normalized lineshape value at detuning `delta` for FWHM `w`.
pub fn lineshape_value<R: Real>(delta: R, w: R, shape: LineShape) -> R {
    if w <= R::zero() {
        return if delta == R::zero() { R::one() } else { R::zero() };
    }
    match shape {
        LineShape::Gaussian => {
            let four_ln2 = R::of(4.0 * std::f64::consts::LN_2);
            (-four_ln2 * delta * delta / (w * w)).exp()
        }
        LineShape::Lorentzian => {
            let hw = w * R::half();
            hw * hw / (delta * delta + hw * hw)
        }
    }
}

/// Per-transition contribution to a spectrum, tracked by branch pair.
#[derive(Debug, Clone)]
pub struct SpectrumComponent<R> {
    pub pair: BranchPair,
    pub label: String,
    /// Selection and kind evaluated at the component maximum.
    pub selection: Selection,
    pub kind: TransitionKind,
    pub amplitude: Vec<R>,
    pub max_amplitude: R,
}

/// Echo-detected field sweep at fixed microwave frequency.
#[derive(Debug, Clone)]
pub struct Spectrum<R> {
    /// Microwave frequency (GHz).
    pub f_mw: R,
    /// Sampled fields (T).
    pub fields: Vec<R>,
    /// Total echo amplitude, normalized to max 1 when non-empty.
    pub amplitude: Vec<R>,
    pub components: Vec<SpectrumComponent<R>>,
}

/// Synthesize amplitude(B) = Σ_transitions intensity · lineshape(f_mw − f(B)).
pub fn field_sweep<R: Real>(
    sys: &SpinSystem<R>,
    ops: &SpinOperators<R>,
    f_mw: R,
    b_lo: R,
    b_hi: R,
    n_points: usize,
    model: &LinewidthModel<R>,
) -> Result<Spectrum<R>> {
    if !(b_lo <= b_hi) {
        return Err(Error::Domain(format!("bad field range [{b_lo}, {b_hi}]")));
    }
    let fields = field_grid(b_lo, b_hi, n_points);
    let pairs = allowed_branch_pairs(ops);
    let mut comp_amp: Vec<Vec<R>> = vec![vec![R::zero(); fields.len()]; pairs.len()];
    let mut comp_meta: Vec<Option<(Selection, TransitionKind, R, usize)>> =
        vec![None; pairs.len()];

    for (k, &b) in fields.iter().enumerate() {
        let sol = solve_at(sys, ops, b)?;
        let d = sol.dimension();
        let mut sz = Vec::with_capacity(d);
        let mut iz = Vec::with_capacity(d);
        let mut sdi = Vec::with_capacity(d);
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
            let f = (sol.energies[lb] - sol.energies[la]).abs();
            let dfdb = sys.gamma_e * (sz[lb] - sz[la]) - sys.gamma_n * (iz[lb] - iz[la]);
            let dfda = sdi[lb] - sdi[la];
            let w = effective_linewidth(dfda, dfdb, model);
            let shape = lineshape_value(f_mw - f, w, model.shape);
            if shape < R::of(1e-30) {
                continue;
            }
            let (vi, vj) = (&sol.vectors[la], &sol.vectors[lb]);
            let sx = ops.sx.bilinear(vi, vj);
            let ix = ops.ix.bilinear(vi, vj);
            let drive = sys.gamma_e * sx - sys.gamma_n * ix;
            let contribution = drive * drive * shape;
            comp_amp[p][k] = contribution;
            let better = comp_meta[p].is_none_or(|(_, _, best, _)| contribution > best);
            if better {
                let (i, j) = if sol.energies[lb] >= sol.energies[la] {
                    (la, lb)
                } else {
                    (lb, la)
                };
                let df = (sol.labels[j].f - sol.labels[i].f).to_f64_lossy().round() as i32;
                let dmf =
                    (sol.labels[j].m_f - sol.labels[i].m_f).to_f64_lossy().round() as i32;
                let sel = match df * dmf {
                    1 => Selection::Plus,
                    -1 => Selection::Minus,
                    _ => Selection::Other,
                };
                comp_meta[p] = Some((sel, classify(sys, sx, ix), contribution, k));
            }
        }
    }

    let mut amplitude = vec![R::zero(); fields.len()];
    for amps in &comp_amp {
        for (tot, &a) in amplitude.iter_mut().zip(amps) {
            *tot = *tot + a;
        }
    }
    let max = amplitude.iter().fold(R::zero(), |m, &a| m.max(a));
    let mut components = Vec::new();
    if max > R::zero() {
        let inv = R::one() / max;
        for a in amplitude.iter_mut() {
            *a = *a * inv;
        }
        for (p, mut amps) in comp_amp.into_iter().enumerate() {
            let cmax = amps.iter().fold(R::zero(), |m, &a| m.max(a));
            if cmax <= R::zero() {
                continue;
            }
            for a in amps.iter_mut() {
                *a = *a * inv;
            }
            let (selection, kind, _, _) = comp_meta[p].unwrap();
            let pair = pairs[p];
            components.push(SpectrumComponent {
                pair,
                label: format!(
                    "b{}.{}-b{}.{}",
                    pair.a.two_mf, pair.a.ordinal, pair.b.two_mf, pair.b.ordinal
                ),
                selection,
                kind,
                amplitude: amps,
                max_amplitude: cmax * inv,
            });
        }
        components.sort_by_key(|c| c.pair);
    }
    Ok(Spectrum {
        f_mw,
        fields,
        amplitude,
        components,
    })
}

/// Indices of local maxima above `min_rel` of the global maximum.
pub fn find_peaks<R: Real>(amps: &[R], min_rel: R) -> Vec<usize> {
    let max = amps.iter().fold(R::zero(), |m, &a| m.max(a));
    let floor = max * min_rel;
    let mut out = Vec::new();
    for k in 1..amps.len().saturating_sub(1) {
        if amps[k] > amps[k - 1] && amps[k] >= amps[k + 1] && amps[k] > floor {
            out.push(k);
        }
    }
    out
}

/// Full width at half maximum of the peak at index `peak`, in field units,
/// with linear interpolation of the half crossings.
pub fn fwhm_of_peak<R: Real>(fields: &[R], amps: &[R], peak: usize) -> Result<R> {
    let half = amps[peak] * R::half();
    let mut i = peak;
    while i > 0 && amps[i] > half {
        i -= 1;
    }
    if amps[i] > half {
        return Err(Error::UnresolvedPeak(
            "left half-maximum crossing not reached inside the range".into(),
        ));
    }
    let left = interp_crossing(fields[i], amps[i], fields[i + 1], amps[i + 1], half);
    let mut j = peak;
    while j < amps.len() - 1 && amps[j] > half {
        j += 1;
    }
    if amps[j] > half {
        return Err(Error::UnresolvedPeak(
            "right half-maximum crossing not reached inside the range".into(),
        ));
    }
    let right = interp_crossing(fields[j - 1], amps[j - 1], fields[j], amps[j], half);
    Ok(right - left)
}

fn interp_crossing<R: Real>(x0: R, y0: R, x1: R, y1: R, level: R) -> R {
    if y1 == y0 {
        return x0;
    }
    x0 + (level - y0) / (y1 - y0) * (x1 - x0)
}

impl<R: Real> Spectrum<R> {
    /// Peaks of the total amplitude (field-ordered indices into `fields`).
    pub fn peaks(&self) -> Vec<usize> {
        find_peaks(&self.amplitude, R::of(0.05))
    }

    /// FWHM in field units of the `which`-th peak (field-ordered).
    pub fn peak_width_field_domain(&self, which: usize) -> Result<R> {
        let peaks = self.peaks();
        let &idx = peaks.get(which).ok_or(Error::NoSuchPeak {
            index: which,
            found: peaks.len(),
        })?;
        fwhm_of_peak(&self.fields, &self.amplitude, idx)
    }

    /// FWHM of the tallest peak of the total amplitude.
    pub fn tallest_peak_width(&self) -> Result<R> {
        let peaks = self.peaks();
        let &idx = peaks
            .iter()
            .max_by(|&&a, &&b| self.amplitude[a].partial_cmp(&self.amplitude[b]).unwrap())
            .ok_or(Error::NoSuchPeak { index: 0, found: 0 })?;
        fwhm_of_peak(&self.fields, &self.amplitude, idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::BranchId;
    use crate::operators::build_operators;
    use crate::transitions::eval_pair;
    use approx::assert_relative_eq;

    fn si_bi() -> (SpinSystem<f64>, SpinOperators<f64>) {
        let sys = SpinSystem::si_bi();
        let ops = build_operators(&sys).unwrap();
        (sys, ops)
    }

    fn plus_pair() -> BranchPair {
        BranchPair::new(
            BranchId { two_mf: -4, ordinal: 0 },
            BranchId { two_mf: -2, ordinal: 1 },
        )
    }

    const B_STAR: f64 = 0.079958003;

    #[test]
    fn linewidth_model_validation() {
        assert!(LinewidthModel::<f64>::new(0.0, 0.0, 0.0, LineShape::Gaussian).is_err());
        assert!(LinewidthModel::<f64>::new(-1e-6, 0.0, 0.0, LineShape::Gaussian).is_err());
        assert!(LinewidthModel::<f64>::new(270e-6, 0.0, 0.0, LineShape::Gaussian).is_ok());
    }

    #[test]
    fn hyperfine_spread_reproduces_270_khz_at_ct() {
        let (sys, ops) = si_bi();
        let ev = eval_pair(&sys, &ops, plus_pair(), B_STAR).unwrap();
        let w = effective_linewidth(ev.dfda, ev.dfdb, &LinewidthModel::hyperfine_spread());
        // |df/dA| ≈ 4.5 at the CT makes 60 kHz in A look like ≈270 kHz
        assert!((w - 270e-6).abs() <= 27e-6, "w = {} GHz", w);
    }

    #[test]
    fn f0_only_width_is_field_independent() {
        let model = LinewidthModel::<f64>::si28();
        for (dfda, dfdb) in [(0.0, 0.0), (5.0, 28.0), (-3.0, -10.0)] {
            assert_eq!(effective_linewidth(dfda, dfdb, &model), 270e-6);
        }
    }

    #[test]
    fn field_width_vanishes_at_ct_with_sigma_b_only() {
        let model = LinewidthModel::<f64>::new(0.0, 0.0, 1e-4, LineShape::Gaussian).unwrap();
        assert_eq!(effective_linewidth(4.5, 0.0, &model), 0.0);
        assert_eq!(lineshape_value(1e-6, 0.0, LineShape::Gaussian), 0.0);
        assert_eq!(lineshape_value(0.0, 0.0, LineShape::Gaussian), 1.0);
    }

    #[test]
    fn gaussian_mock_fwhm() {
        let sigma = 3.7e-4;
        let b0 = 0.08;
        let fields: Vec<f64> = field_grid(0.075, 0.085, 4001);
        let amps: Vec<f64> = fields
            .iter()
            .map(|b| (-(b - b0).powi(2) / (2.0 * sigma * sigma)).exp())
            .collect();
        let peaks = find_peaks(&amps, 0.05);
        assert_eq!(peaks.len(), 1);
        let w = fwhm_of_peak(&fields, &amps, peaks[0]).unwrap();
        assert_relative_eq!(w, 2.3548 * sigma, max_relative = 1e-3);
    }

    #[test]
    fn resolved_doublet_peaks_at_7034() {
        let (sys, ops) = si_bi();
        let spec = field_sweep(
            &sys,
            &ops,
            7.0340,
            0.07,
            0.09,
            2001,
            &LinewidthModel::si28(),
        )
        .unwrap();
        assert_relative_eq!(
            spec.amplitude.iter().cloned().fold(0.0, f64::max),
            1.0,
            epsilon = 1e-12
        );
        // four resonances: +1 and −1 branches on each side of 79.8 mT
        let peaks = spec.peaks();
        assert_eq!(peaks.len(), 4, "fields: {:?}", peaks.iter().map(|&k| spec.fields[k]).collect::<Vec<_>>());
        let expect = [0.07347, 0.07517, 0.08450, 0.08644];
        for (&k, e) in peaks.iter().zip(expect) {
            assert!((spec.fields[k] - e).abs() < 3e-4, "{} vs {e}", spec.fields[k]);
        }
        // both selections contribute on both sides of the CT field
        for side in [false, true] {
            let mut sels = Vec::new();
            for c in &spec.components {
                let cpk = find_peaks(&c.amplitude, 0.5);
                for &k in &cpk {
                    if (spec.fields[k] > 0.0798) == side {
                        sels.push(c.selection);
                    }
                }
            }
            assert!(sels.contains(&Selection::Plus), "side {side}");
            assert!(sels.contains(&Selection::Minus), "side {side}");
        }
    }

    #[test]
    fn merged_doublet_at_ct_frequency() {
        let (sys, ops) = si_bi();
        let spec = field_sweep(
            &sys,
            &ops,
            7.0317,
            0.07,
            0.09,
            4001,
            &LinewidthModel::si28(),
        )
        .unwrap();
        // frozen: merged feature width 3.3287e-3 T around B*
        let w = spec.tallest_peak_width().unwrap();
        assert_relative_eq!(w, 3.328673e-3, max_relative = 0.01);
        // curvature-limited scaling 2·sqrt(w_f/c), not 1/|df/dB|
        let scale = 2.0 * (270e-6f64 / 110.415069).sqrt();
        assert!((w - scale).abs() / scale < 0.15, "w = {w}, scale = {scale}");
    }

    #[test]
    fn curvature_limited_width_on_synthetic_branch() {
        // f(B) = f* + (c/2)(B−B*)² probed exactly at f_mw = f*
        let c = 110.0;
        let wf = 270e-6;
        let fields: Vec<f64> = field_grid(0.07, 0.09, 8001);
        let amps: Vec<f64> = fields
            .iter()
            .map(|b| {
                let det = -0.5 * c * (b - 0.08).powi(2);
                lineshape_value(det, wf, LineShape::Gaussian)
            })
            .collect();
        let peaks = find_peaks(&amps, 0.05);
        let w = fwhm_of_peak(&fields, &amps, peaks[0]).unwrap();
        assert_relative_eq!(w, 2.0 * (wf / c).sqrt(), max_relative = 2e-3);
    }

    #[test]
    fn resolved_peak_width_matches_slope_ratio() {
        // FWHM·|df/dB| at a resolved peak recovers the frequency-domain
        // width within 5%
        let (sys, ops) = si_bi();
        for f_mw in [7.0335, 7.0340] {
            let spec = field_sweep(&sys, &ops, f_mw, 0.07, 0.09, 4001, &LinewidthModel::si28())
                .unwrap();
            let comp = spec
                .components
                .iter()
                .find(|c| c.selection == Selection::Plus && c.max_amplitude > 0.3)
                .unwrap();
            let peaks = find_peaks(&comp.amplitude, 0.5);
            let &right = peaks.last().unwrap();
            let w = fwhm_of_peak(&spec.fields, &comp.amplitude, right).unwrap();
            let slope = eval_pair(&sys, &ops, comp.pair, spec.fields[right])
                .unwrap()
                .dfdb
                .abs();
            assert_relative_eq!(w * slope, 270e-6, max_relative = 0.05);
        }
    }

    #[test]
    fn width_diverges_monotonically_toward_ct() {
        let (sys, ops) = si_bi();
        let mut widths = Vec::new();
        for f_mw in [7.0340, 7.0335, 7.0330, 7.0325] {
            let spec = field_sweep(&sys, &ops, f_mw, 0.07, 0.09, 4001, &LinewidthModel::si28())
                .unwrap();
            let comp = spec
                .components
                .iter()
                .find(|c| c.selection == Selection::Plus && c.max_amplitude > 0.3)
                .unwrap();
            let peaks = find_peaks(&comp.amplitude, 0.5);
            let &right = peaks.last().unwrap();
            widths.push(fwhm_of_peak(&spec.fields, &comp.amplitude, right).unwrap());
        }
        for pair in widths.windows(2) {
            assert!(pair[1] > pair[0], "widths not monotone: {widths:?}");
        }
    }

    #[test]
    fn doublet_intensities_equal_at_ct() {
        let (sys, ops) = si_bi();
        let plus = eval_pair(&sys, &ops, plus_pair(), B_STAR).unwrap();
        let minus_pair = BranchPair::new(
            BranchId { two_mf: -4, ordinal: 1 },
            BranchId { two_mf: -2, ordinal: 0 },
        );
        let minus = eval_pair(&sys, &ops, minus_pair, B_STAR).unwrap();
        let ratio = plus.intensity / minus.intensity;
        assert!((ratio - 1.0).abs() < 0.01, "intensity ratio {ratio}");
    }

    #[test]
    fn off_resonance_spectrum_is_zero() {
        let (sys, ops) = si_bi();
        let spec = field_sweep(
            &sys,
            &ops,
            4.0,
            0.07,
            0.09,
            64,
            &LinewidthModel::si28(),
        )
        .unwrap();
        assert!(spec.amplitude.iter().all(|&a| a == 0.0));
        assert!(spec.components.is_empty());
        assert!(matches!(
            spec.peak_width_field_domain(0),
            Err(Error::NoSuchPeak { .. })
        ));
    }

    #[test]
    fn unresolved_peak_is_flagged() {
        let fields: Vec<f64> = field_grid(0.0, 1.0, 101);
        // plateau above half maximum at the range edge
        let amps: Vec<f64> = fields.iter().map(|&b| 0.9 + 0.1 * b).collect();
        assert!(matches!(
            fwhm_of_peak(&fields, &amps, 100),
            Err(Error::UnresolvedPeak(_))
        ));
    }

    #[test]
    fn lorentzian_shape_sanity() {
        let w = 2e-4f64;
        assert_relative_eq!(lineshape_value(0.0, w, LineShape::Lorentzian), 1.0);
        assert_relative_eq!(lineshape_value(w / 2.0, w, LineShape::Lorentzian), 0.5);
    }
}
