//! Rényi and von Neumann entropies, in nats, and their Schatten-norm form.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{DensityMatrix, SchattenOrder, SPECTRAL_ZERO};

/// Rényi order `p >= 1` (finite).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RenyiOrder(f64);

impl RenyiOrder {
    pub fn new(p: f64) -> Result<Self> {
        if !p.is_finite() || p < 1.0 {
            return Err(LabError::InvalidOrder(p));
        }
        Ok(RenyiOrder(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn as_schatten(self) -> SchattenOrder {
        SchattenOrder::new(self.0).expect("Rényi orders are valid Schatten orders")
    }
}

impl TryFrom<f64> for RenyiOrder {
    type Error = LabError;

    fn try_from(p: f64) -> Result<Self> {
        RenyiOrder::new(p)
    }
}

impl From<RenyiOrder> for f64 {
    fn from(p: RenyiOrder) -> f64 {
        p.0
    }
}

impl fmt::Display for RenyiOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Rényi entropy of a spectrum; von Neumann entropy for `p = 1`.
pub fn renyi_from_spectrum(eigenvalues: &[f64], p: RenyiOrder) -> f64 {
    let p = p.value();
    let s = if p == 1.0 {
        -eigenvalues
            .iter()
            .filter(|&&l| l > SPECTRAL_ZERO)
            .map(|&l| l * l.ln())
            .sum::<f64>()
    } else {
        let tr: f64 = eigenvalues.iter().filter(|&&l| l > 0.0).map(|&l| l.powf(p)).sum();
        tr.ln() / (1.0 - p)
    };
    // -0.0 and rounding below zero for pure states
    s.max(0.0)
}

/// `S_p(rho) = log(tr rho^p) / (1 - p)`, with the von Neumann limit at `p = 1`.
pub fn renyi_entropy(rho: &DensityMatrix, p: RenyiOrder) -> f64 {
    renyi_from_spectrum(rho.eigenvalues(), p)
}

/// `S_p = p/(1-p) * log ||rho||_p` for `p > 1`.
pub fn entropy_from_p_norm(norm_p: f64, p: RenyiOrder) -> Result<f64> {
    if p.value() == 1.0 {
        return Err(LabError::InvalidOrder(1.0));
    }
    if !(norm_p > 0.0) {
        return Err(LabError::Domain(format!("p-norm must be positive, got {norm_p}")));
    }
    let p = p.value();
    Ok(p / (1.0 - p) * norm_p.ln())
}

pub fn nats_to_bits(s: f64) -> f64 {
    s / std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{schatten_norm, CMatrix, PureState};

    fn order(p: f64) -> RenyiOrder {
        RenyiOrder::new(p).unwrap()
    }

    #[test]
    fn pure_state_has_zero_entropy() {
        let x = PureState::basis(3, 1).unwrap();
        let rho = DensityMatrix::from_pure(&x);
        for p in [1.0, 1.5, 2.0, 7.0] {
            assert_eq!(renyi_entropy(&rho, order(p)), 0.0);
        }
    }

    #[test]
    fn maximally_mixed_has_log_d() {
        let rho = DensityMatrix::maximally_mixed(5);
        for p in [1.0, 2.0, 3.5] {
            assert!((renyi_entropy(&rho, order(p)) - 5f64.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn continuity_at_one() {
        let rho = DensityMatrix::new(CMatrix::from_diagonal(&[0.7, 0.3])).unwrap();
        let s1 = renyi_entropy(&rho, order(1.0));
        let direct = -(0.7f64 * 0.7f64.ln() + 0.3 * 0.3f64.ln());
        assert!((s1 - direct).abs() < 1e-15);
        assert!((renyi_entropy(&rho, order(1.0001)) - s1).abs() < 1e-3);
    }

    #[test]
    fn order_below_one_rejected() {
        assert!(matches!(RenyiOrder::new(0.5), Err(LabError::InvalidOrder(_))));
        assert!(RenyiOrder::new(f64::INFINITY).is_err());
    }

    #[test]
    fn from_norm_examples() {
        let d = 6.0f64;
        let p = order(2.5);
        let s = entropy_from_p_norm(d.powf(1.0 / 2.5 - 1.0), p).unwrap();
        assert!((s - d.ln()).abs() < 1e-14);
        assert_eq!(entropy_from_p_norm(1.0, p).unwrap(), 0.0);
        assert!(matches!(entropy_from_p_norm(0.0, p), Err(LabError::Domain(_))));
        assert!(entropy_from_p_norm(-1.0, p).is_err());
        assert!(entropy_from_p_norm(0.5, order(1.0)).is_err());
    }

    #[test]
    fn norm_route_matches_spectrum_route() {
        let rho = DensityMatrix::new(CMatrix::from_diagonal(&[0.5, 0.25, 0.15, 0.1])).unwrap();
        let p = order(3.0);
        let n = schatten_norm(rho.matrix(), p.as_schatten()).unwrap();
        let a = entropy_from_p_norm(n, p).unwrap();
        assert!((a - renyi_entropy(&rho, p)).abs() < 1e-12);
    }
}
