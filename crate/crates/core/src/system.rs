//! Donor spin system parameters and the built-in constants registry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Physical constants of one donor species.
///
/// Units are fixed crate-wide: gyromagnetic ratios in GHz/T, hyperfine
/// coupling in GHz, fields in T. `gamma_n` enters the Hamiltonian with a
/// leading minus sign; its own sign is left to the caller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem<R> {
    /// Electron spin quantum number (1/2 for donors).
    pub s: R,
    /// Nuclear spin quantum number (9/2 for ²⁰⁹Bi).
    pub i: R,
    /// Electron gyromagnetic ratio (GHz/T), > 0.
    pub gamma_e: R,
    /// Nuclear gyromagnetic ratio (GHz/T).
    pub gamma_n: R,
    /// Isotropic hyperfine constant (GHz).
    pub a: R,
}

fn is_half_integer<R: Real>(x: R) -> bool {
    if !x.is_finite() || x < R::zero() {
        return false;
    }
    let doubled = (x + x).to_f64_lossy();
    (doubled - doubled.round()).abs() < 1e-9
}

impl<R: Real> SpinSystem<R> {
    pub fn new(s: R, i: R, gamma_e: R, gamma_n: R, a: R) -> Result<Self> {
        if !is_half_integer(s) {
            return Err(Error::InvalidSystem(format!(
                "S = {s} is not a non-negative half-integer"
            )));
        }
        if !is_half_integer(i) {
            return Err(Error::InvalidSystem(format!(
                "I = {i} is not a non-negative half-integer"
            )));
        }
        if !(gamma_e > R::zero()) {
            return Err(Error::InvalidSystem(format!("gamma_e = {gamma_e} must be > 0")));
        }
        if !gamma_n.is_finite() || !a.is_finite() {
            return Err(Error::InvalidSystem("gamma_n and A must be finite".into()));
        }
        Ok(Self {
            s,
            i,
            gamma_e,
            gamma_n,
            a,
        })
    }

    /// The ²⁰⁹Bi donor in silicon: A = 1.47517 GHz, γe = 27.997 GHz/T,
    /// γn = 7 MHz/T.
    pub fn si_bi() -> Self {
        Self {
            s: R::half(),
            i: R::of(4.5),
            gamma_e: R::of(27.997),
            gamma_n: R::of(0.007),
            a: R::of(1.47517),
        }
    }

    /// Look up a named preset. Currently only "Si:Bi" ships built in.
    pub fn by_name(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "si:bi" | "sibi" => Some(Self::si_bi()),
            _ => None,
        }
    }

    /// Hilbert-space dimension d = (2S+1)(2I+1).
    pub fn dimension(&self) -> usize {
        let ds = (self.s + self.s).to_f64_lossy().round() as usize + 1;
        let di = (self.i + self.i).to_f64_lossy().round() as usize + 1;
        ds * di
    }

    pub fn electron_multiplicity(&self) -> usize {
        (self.s + self.s).to_f64_lossy().round() as usize + 1
    }

    pub fn nuclear_multiplicity(&self) -> usize {
        (self.i + self.i).to_f64_lossy().round() as usize + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_si_bi() {
        let sys: SpinSystem<f64> = SpinSystem::by_name("Si:Bi").unwrap();
        assert_eq!(sys.dimension(), 20);
        assert_eq!(sys.a, 1.47517);
        assert_eq!(sys.gamma_e, 27.997);
        assert_eq!(sys.gamma_n, 0.007);
        assert!(SpinSystem::<f64>::by_name("Ge:As").is_none());
    }

    #[test]
    fn rejects_non_half_integer_spins() {
        assert!(SpinSystem::<f64>::new(0.3, 4.5, 28.0, 0.007, 1.0).is_err());
        assert!(SpinSystem::<f64>::new(0.5, 4.2, 28.0, 0.007, 1.0).is_err());
        assert!(SpinSystem::<f64>::new(-0.5, 4.5, 28.0, 0.007, 1.0).is_err());
        assert!(SpinSystem::<f64>::new(0.5, 4.5, -28.0, 0.007, 1.0).is_err());
        assert!(SpinSystem::<f64>::new(0.5, 4.5, 28.0, 0.007, 1.0).is_ok());
    }

    #[test]
    fn dimension_counts() {
        let four: SpinSystem<f64> = SpinSystem::new(0.5, 0.5, 28.0, 0.017, 0.118).unwrap();
        assert_eq!(four.dimension(), 4);
        let one: SpinSystem<f64> = SpinSystem::new(0.0, 0.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(one.dimension(), 1);
    }
}
