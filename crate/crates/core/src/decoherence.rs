//! Phenomenological decoherence model 1/T2(df/dB, concentration) with
//! instantaneous-diffusion (ID), indirect flip-flop (iFF) and direct
//! flip-flop (dFF) channels, plus Hahn-echo decay simulation and fitting.
//!
//! The model abscissa is the normalized slope x = |df/dB|/γe ∈ [0, 1].

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{least_squares, LmOptions};
use crate::real::Real;

/// Per-channel rate coefficients of 1/T2 = C·(k_dFF + k_iFF·x + k_ID·x²).
///
/// Units: s⁻¹·cm³ per channel, concentration in donors/cm³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceModel<R> {
    pub k_dff: R,
    pub k_iff: R,
    pub k_id: R,
    pub concentration: R,
}

impl<R: Real> DecoherenceModel<R> {
    pub fn new(k_dff: R, k_iff: R, k_id: R, concentration: R) -> Result<Self> {
        if k_dff < R::zero() || k_iff < R::zero() || k_id < R::zero() {
            return Err(Error::Domain("rate coefficients must be >= 0".into()));
        }
        if !(concentration > R::zero()) {
            return Err(Error::Domain("concentration must be > 0".into()));
        }
        Ok(Self {
            k_dff,
            k_iff,
            k_id,
            concentration,
        })
    }

    /// Example Si:Bi coefficients consistent with the reported anchors:
    /// T2 = 2.7 s at the clock transition for C = 3.6e14 cm⁻³, about two
    /// orders of magnitude enhancement over the free-electron slope, and an
    /// ID share below 10% for x < 0.1.
    pub fn si_bi_example(concentration: R) -> Self {
        Self {
            k_dff: R::of(1.0 / (2.7 * 3.6e14)),
            k_iff: R::of(5.2e-14),
            k_id: R::of(5.0e-14),
            concentration,
        }
    }

    /// 1/T2 at normalized slope x (s⁻¹).
    pub fn inv_t2(&self, x: R) -> Result<R> {
        if !(x >= R::zero() && x <= R::of(1.0) + R::of(1e-3)) {
            return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
        }
        Ok(self.concentration * (self.k_dff + self.k_iff * x + self.k_id * x * x))
    }

    /// T2 at normalized slope x (s).
    pub fn t2(&self, x: R) -> Result<R> {
        Ok(R::one() / self.inv_t2(x)?)
    }

    /// Fraction of the total rate contributed by the ID channel at x.
    pub fn id_share(&self, x: R) -> R {
        let id = self.k_id * x * x;
        id / (self.k_dff + self.k_iff * x + id)
    }
}

/// One T2 measurement: normalized slope, concentration (cm⁻³), T2 (s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2Point<R> {
    pub x: R,
    pub concentration: R,
    pub t2: R,
}

/// Fit one coefficient set across all concentrations, or one per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitScope {
    Shared,
    PerConcentration,
}

#[derive(Debug, Clone, Copy)]
pub struct T2FitOptions<R> {
    /// Concentration exponents of the (dFF, iFF, ID) channels; the iFF
    /// scaling with C is not pinned down by the data this model is built
    /// for, so it stays overridable. Defaults to linear for all three.
    pub c_exponents: [R; 3],
}

impl<R: Real> Default for T2FitOptions<R> {
    fn default() -> Self {
        Self {
            c_exponents: [R::one(), R::one(), R::one()],
        }
    }
}

#[derive(Debug, Clone)]
pub struct T2ModelFit<R> {
    /// One model per concentration present in the data (shared coefficients
    /// under `FitScope::Shared`).
    pub models: Vec<DecoherenceModel<R>>,
    /// RMS residual of log(1/T2).
    pub residual_rms_log: R,
    /// Channels whose contribution never exceeds 5% anywhere in the data.
    pub unidentifiable: Vec<&'static str>,
}

fn unique_concentrations<R: Real>(points: &[T2Point<R>]) -> Vec<R> {
    let mut cs: Vec<R> = Vec::new();
    for p in points {
        if !cs.contains(&p.concentration) {
            cs.push(p.concentration);
        }
    }
    cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cs
}

fn validate_points<R: Real>(points: &[T2Point<R>]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::Identifiability(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    for p in points {
        if !(p.t2 > R::zero()) || !(p.concentration > R::zero()) {
            return Err(Error::InvalidData(
                "T2 and concentration must be positive".into(),
            ));
        }
        if p.x < -R::of(1e-12) || p.x > R::of(1.0) + R::of(1e-3) {
            return Err(Error::InvalidData(format!("x = {} outside [0, 1]", p.x)));
        }
    }
    let xmin = points.iter().map(|p| p.x).fold(R::infinity(), R::min);
    let xmax = points.iter().map(|p| p.x).fold(R::zero(), R::max);
    if xmax - xmin <= R::of(1e-12) * (R::one() + xmax) {
        return Err(Error::RankDeficient(
            "all x values are equal; the channels cannot be separated".into(),
        ));
    }
    Ok(())
}

/// Nonlinear least squares on log(1/T2) with non-negative coefficients
/// (log-parameterized), initialized from a linear solve on the rates.
pub fn fit_t2_model<R: Real>(
    points: &[T2Point<R>],
    scope: FitScope,
    opts: T2FitOptions<R>,
) -> Result<T2ModelFit<R>> {
    validate_points(points)?;
    match scope {
        FitScope::Shared => fit_group(points, opts),
        FitScope::PerConcentration => {
            let mut models = Vec::new();
            let mut sumsq = R::zero();
            let mut count = 0usize;
            let mut unidentifiable: Vec<&'static str> = Vec::new();
            for c in unique_concentrations(points) {
                let group: Vec<T2Point<R>> = points
                    .iter()
                    .copied()
                    .filter(|p| p.concentration == c)
                    .collect();
                let fit = fit_group(&group, opts)?;
                sumsq = sumsq
                    + fit.residual_rms_log * fit.residual_rms_log * R::of(group.len() as f64);
                count += group.len();
                for name in fit.unidentifiable {
                    if !unidentifiable.contains(&name) {
                        unidentifiable.push(name);
                    }
                }
                models.extend(fit.models);
            }
            Ok(T2ModelFit {
                models,
                residual_rms_log: (sumsq / R::of(count as f64)).sqrt(),
                unidentifiable,
            })
        }
    }
}

fn fit_group<R: Real>(points: &[T2Point<R>], opts: T2FitOptions<R>) -> Result<T2ModelFit<R>> {
    validate_points(points)?;
    let [e0, e1, e2] = opts.c_exponents;
    let design = |p: &T2Point<R>| {
        [
            p.concentration.powf(e0),
            p.concentration.powf(e1) * p.x,
            p.concentration.powf(e2) * p.x * p.x,
        ]
    };

    // linear initialization on the raw rates
    let mut normal = crate::linalg::Mat::zeros(3);
    let mut rhs = [R::zero(); 3];
    for p in points {
        let row = design(p);
        let rate = R::one() / p.t2;
        for a in 0..3 {
            rhs[a] = rhs[a] + row[a] * rate;
            for b in a..3 {
                normal.add_to(a, b, row[a] * row[b]);
            }
        }
    }
    for a in 0..3 {
        for b in 0..a {
            normal.set(a, b, normal.get(b, a));
        }
        // tiny ridge so degenerate designs still give a starting point
        normal.add_to(a, a, R::of(1e-12) * normal.get(a, a).max(R::of(1e-300)));
    }
    let rate_scale = points
        .iter()
        .map(|p| R::one() / (p.t2 * p.concentration))
        .fold(R::zero(), R::max);
    let floor = rate_scale * R::of(1e-6);
    let init = crate::linalg::solve_spd(&normal, &rhs)
        .unwrap_or_else(|_| vec![floor, floor, floor]);
    let theta0: Vec<R> = init.iter().map(|&k| k.max(floor).ln()).collect();

    let resid = |theta: &[R], out: &mut [R]| -> Result<()> {
        let k: Vec<R> = theta.iter().map(|t| t.exp()).collect();
        for (i, p) in points.iter().enumerate() {
            let row = design(p);
            let rate = k[0] * row[0] + k[1] * row[1] + k[2] * row[2];
            out[i] = rate.ln() - (R::one() / p.t2).ln();
        }
        Ok(())
    };
    let fit = least_squares(resid, points.len(), &theta0, LmOptions::default())?;
    let k: Vec<R> = fit.params.iter().map(|t| t.exp()).collect();

    // identifiability: a channel that never contributes more than 5% of the
    // total rate anywhere in the data is flagged
    let names = ["dFF", "iFF", "ID"];
    let mut max_share = [R::zero(); 3];
    for p in points {
        let row = design(p);
        let terms = [k[0] * row[0], k[1] * row[1], k[2] * row[2]];
        let total = terms[0] + terms[1] + terms[2];
        for a in 0..3 {
            max_share[a] = max_share[a].max(terms[a] / total);
        }
    }
    let unidentifiable: Vec<&'static str> = (0..3)
        .filter(|&a| max_share[a] < R::of(0.05))
        .map(|a| names[a])
        .collect();

    let models = unique_concentrations(points)
        .into_iter()
        .map(|c| DecoherenceModel {
            k_dff: k[0],
            k_iff: k[1],
            k_id: k[2],
            concentration: c,
        })
        .collect();
    Ok(T2ModelFit {
        models,
        residual_rms_log: (fit.ssq / R::of(points.len() as f64)).sqrt(),
        unidentifiable,
    })
}

/// Hahn-echo decay curve: amplitude(2τ) = exp(−(2τ/T2)^n).
#[derive(Debug, Clone, PartialEq)]
pub struct EchoDecay<R> {
    /// 2τ delay values (s).
    pub delays: Vec<R>,
    /// Normalized echo amplitude.
    pub amplitude: Vec<R>,
    /// 1/e time (s).
    pub t2: R,
    /// Stretch exponent.
    pub n: R,
}

/// Simulate a stretched-exponential Hahn-echo decay.
pub fn simulate_echo_decay<R: Real>(t2: R, n: R, delays: &[R]) -> Result<EchoDecay<R>> {
    if !(t2 > R::zero()) {
        return Err(Error::Domain(format!("T2 = {t2} must be positive")));
    }
    if n < R::half() || n > R::of(4.0) {
        return Err(Error::Domain(format!("stretch exponent n = {n} outside [0.5, 4]")));
    }
    let amplitude = delays
        .iter()
        .map(|&t| (-(t / t2).powf(n)).exp())
        .collect();
    Ok(EchoDecay {
        delays: delays.to_vec(),
        amplitude,
        t2,
        n,
    })
}

/// Additive Gaussian noise followed by magnitude detection, as used for
/// test fixtures (|signal + noise| never goes negative).
pub fn add_magnitude_noise<R: Real>(decay: &mut EchoDecay<R>, sigma: R, rng: &mut impl Rng) {
    for a in decay.amplitude.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *a = (*a + sigma * R::of(z)).abs();
    }
}

/// Result of a stretched-exponential fit. `t2` is the fitted 1/e time.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit<R> {
    pub t2: R,
    pub n: R,
    pub t2_err: R,
    pub n_err: R,
    pub amplitude: R,
    /// Magnitude-detection noise floor.
    pub baseline: R,
    pub residual_rms: R,
}

/// Least-squares fit of a·exp(−(2τ/T2)^n) + baseline to echo data.
pub fn fit_echo_decay<R: Real>(delays: &[R], amplitude: &[R]) -> Result<DecayFit<R>> {
    if delays.len() != amplitude.len() {
        return Err(Error::InvalidData("delay/amplitude length mismatch".into()));
    }
    if delays.len() < 8 {
        return Err(Error::Identifiability(format!(
            "need at least 8 points, got {}",
            delays.len()
        )));
    }
    if amplitude.iter().any(|a| *a < R::zero()) {
        return Err(Error::InvalidData(
            "negative amplitudes: echo data must be magnitude-detected".into(),
        ));
    }
    if delays.iter().any(|t| !(*t >= R::zero())) {
        return Err(Error::InvalidData("delays must be non-negative".into()));
    }
    let max = amplitude.iter().fold(R::zero(), |m, &a| m.max(a));
    let min = amplitude.iter().fold(R::infinity(), |m, &a| m.min(a));
    if !(max > R::zero()) || (max - min) < R::of(0.02) * max {
        return Err(Error::NoDecay);
    }

    // sort by delay for the 1/e initial guess
    let mut order: Vec<usize> = (0..delays.len()).collect();
    order.sort_by(|&a, &b| delays[a].partial_cmp(&delays[b]).unwrap());
    let baseline0 = min;
    let amp0 = (max - baseline0).max(R::of(1e-6) * max);
    let target = baseline0 + amp0 * R::of((-1.0f64).exp());
    let mut t2_0 = delays[*order.last().unwrap()] * R::half();
    for w in order.windows(2) {
        let (a0, a1) = (amplitude[w[0]], amplitude[w[1]]);
        if a0 >= target && a1 < target {
            t2_0 = (delays[w[0]] + delays[w[1]]) * R::half();
            break;
        }
    }
    if !(t2_0 > R::zero()) {
        t2_0 = delays[order[order.len() / 2]].max(R::of(1e-12));
    }

    // parameters: [ln a, ln T2, ln n, baseline]
    let theta0 = [amp0.ln(), t2_0.ln(), R::zero(), baseline0];
    let resid = |theta: &[R], out: &mut [R]| -> Result<()> {
        let a = theta[0].exp();
        let t2 = theta[1].exp();
        let n = theta[2].exp();
        let base = theta[3];
        for (i, (&t, &y)) in delays.iter().zip(amplitude).enumerate() {
            let model = a * (-(t / t2).powf(n)).exp() + base;
            out[i] = model - y;
        }
        Ok(())
    };
    let fit = least_squares(resid, delays.len(), &theta0, LmOptions::default())?;
    let t2 = fit.params[1].exp();
    let n = fit.params[2].exp();
    if n < R::half() || n > R::of(4.0) {
        return Err(Error::NonPhysicalFit(format!(
            "stretch exponent n = {n} outside [0.5, 4]"
        )));
    }
    let (t2_err, n_err) = match &fit.covariance {
        Some(cov) => (t2 * cov.get(1, 1).max(R::zero()).sqrt(), n * cov.get(2, 2).max(R::zero()).sqrt()),
        None => (R::zero(), R::zero()),
    };
    Ok(DecayFit {
        t2,
        n,
        t2_err,
        n_err,
        amplitude: fit.params[0].exp(),
        baseline: fit.params[3],
        residual_rms: (fit.ssq / R::of(delays.len() as f64)).sqrt(),
    })
}
