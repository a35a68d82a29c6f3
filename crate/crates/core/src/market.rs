//! DRP offers derived from a linear inherent demand curve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::Drp;

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("demand-curve intercept pi_max={pi_max} must exceed the retail price pi_rr={pi_rr}")]
    Curve { pi_rr: f64, pi_max: f64 },
    #[error("incentive price must be >= 0, got {0}")]
    NegativePrice(f64),
    #[error("baseline must be > 0, got {0}")]
    Baseline(f64),
}

/// One point of a DRP's offer curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrpOffer {
    /// Position of the DRP in the case.
    pub drp: usize,
    pub pi_dr: f64,
    pub p_dr_max: f64,
}

/// Load shrinkage when consumers are paid `pi_s` per MW of reduction:
/// `min(p_base, pi_s / (pi_max - pi_rr) * p_base)`.
pub fn max_dr_commitment(p_base: f64, pi_rr: f64, pi_max: f64, pi_s: f64) -> Result<f64, MarketError> {
    if !(pi_max > pi_rr) {
        return Err(MarketError::Curve { pi_rr, pi_max });
    }
    if !(pi_s >= 0.0) {
        return Err(MarketError::NegativePrice(pi_s));
    }
    if !(p_base > 0.0) {
        return Err(MarketError::Baseline(p_base));
    }
    Ok(p_base.min(pi_s / (pi_max - pi_rr) * p_base))
}

/// The offer price equals the incentive price paid to end consumers.
pub fn build_offer(index: usize, drp: &Drp, pi_s: f64) -> Result<DrpOffer, MarketError> {
    Ok(DrpOffer {
        drp: index,
        pi_dr: pi_s,
        p_dr_max: max_dr_commitment(drp.p_base_mw, drp.pi_rr, drp.pi_max, pi_s)?,
    })
}

/// Offers for every DRP in a case at one common price.
pub fn uniform_offers(drps: &[Drp], pi_s: f64) -> Result<Vec<DrpOffer>, MarketError> {
    drps.iter().enumerate().map(|(j, d)| build_offer(j, d, pi_s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_bus_offer() {
        assert_eq!(max_dr_commitment(60.0, 100.0, 400.0, 100.0).unwrap(), 20.0);
        assert_eq!(max_dr_commitment(60.0, 100.0, 400.0, 0.0).unwrap(), 0.0);
        assert_eq!(max_dr_commitment(60.0, 100.0, 400.0, 350.0).unwrap(), 60.0);
    }

    #[test]
    fn offer_fields() {
        let drp = Drp {
            bus: 2,
            p_base_mw: 60.0,
            pi_rr: 100.0,
            pi_max: 400.0,
            pi_aux: 150.0,
        };
        let o = build_offer(0, &drp, 100.0).unwrap();
        assert_eq!((o.pi_dr, o.p_dr_max), (100.0, 20.0));
        let z = build_offer(0, &drp, 0.0).unwrap();
        assert_eq!((z.pi_dr, z.p_dr_max), (0.0, 0.0));
    }

    #[test]
    fn invalid_curve() {
        assert!(matches!(
            max_dr_commitment(60.0, 100.0, 100.0, 10.0),
            Err(MarketError::Curve { .. })
        ));
        assert!(max_dr_commitment(60.0, 100.0, 400.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn nondecreasing_and_saturating(base in 1.0..500.0f64, rr in 0.0..200.0f64, span in 1.0..500.0f64,
                                        p1 in 0.0..1000.0f64, p2 in 0.0..1000.0f64) {
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let a = max_dr_commitment(base, rr, rr + span, lo).unwrap();
            let b = max_dr_commitment(base, rr, rr + span, hi).unwrap();
            prop_assert!(a <= b);
            prop_assert!(b <= base);
            if hi >= span {
                prop_assert_eq!(b, base);
            }
        }

        #[test]
        fn homogeneous_below_saturation(base in 1.0..500.0f64, k in 0.1..10.0f64, frac in 0.0..1.0f64) {
            let span = 300.0;
            let pi = frac * span;
            let a = max_dr_commitment(base, 100.0, 100.0 + span, pi).unwrap();
            let b = max_dr_commitment(k * base, 100.0, 100.0 + span, pi).unwrap();
            prop_assert!((b - k * a).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
