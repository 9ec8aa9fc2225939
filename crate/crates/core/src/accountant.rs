//! Rényi-DP accounting for repeated Gaussian releases without subsampling.
//!
//! One release at noise multiplier `z` has RDP `alpha / (2 z^2)` at every
//! order `alpha`; `T` releases add up linearly. Conversion to `(eps, delta)`
//! uses
//!
//! ```text
//! eps = min_alpha  rdp(alpha) + ln((alpha - 1) / alpha) - (ln delta + ln alpha) / (alpha - 1)
//! ```
//!
//! clamped at zero, the same bound Opacus' `get_privacy_spent` applies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opacus' default order grid: 1.1, 1.2, ..., 10.9, then 12..=63.
pub fn default_orders() -> Vec<f64> {
    (1..100)
        .map(|x| 1.0 + x as f64 / 10.0)
        .chain((12..64).map(|x| x as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccountantState {
    orders: Vec<f64>,
    rdp: Vec<f64>,
}

impl Default for AccountantState {
    fn default() -> Self {
        Self::new(default_orders()).expect("default grid is valid")
    }
}

impl AccountantState {
    pub fn new(orders: Vec<f64>) -> Result<Self> {
        if let Some(a) = orders.iter().find(|&&a| !(a > 1.0 && a.is_finite())) {
            return Err(Error::Accountant(format!(
                "orders must be finite and > 1, got {a}"
            )));
        }
        let rdp = vec![0.0; orders.len()];
        Ok(Self { orders, rdp })
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn rdp(&self) -> &[f64] {
        &self.rdp
    }

    /// Charges `steps` Gaussian releases at `noise_multiplier`.
    pub fn compose_gaussian(mut self, noise_multiplier: f64, steps: usize) -> Result<Self> {
        if !(noise_multiplier > 0.0) {
            return Err(Error::Accountant(format!(
                "noise multiplier must be > 0, got {noise_multiplier}"
            )));
        }
        let z2 = noise_multiplier * noise_multiplier;
        for (r, &a) in self.rdp.iter_mut().zip(&self.orders) {
            *r += steps as f64 * a / (2.0 * z2);
        }
        Ok(self)
    }

    /// Returns `(epsilon, best_order)` at `delta`.
    pub fn to_epsilon(&self, delta: f64) -> Result<(f64, f64)> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Accountant(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        if self.orders.is_empty() {
            return Err(Error::Accountant("empty order grid".into()));
        }
        let ln_delta = delta.ln();
        let (eps, order) = self
            .orders
            .iter()
            .zip(&self.rdp)
            .map(|(&a, &r)| {
                (
                    r + ((a - 1.0) / a).ln() - (ln_delta + a.ln()) / (a - 1.0),
                    a,
                )
            })
            .fold((f64::INFINITY, f64::NAN), |best, cur| {
                if cur.0 < best.0 {
                    cur
                } else {
                    best
                }
            });
        // nothing released: the conversion bound is loose here, the true loss is zero
        if self.rdp.iter().all(|&r| r == 0.0) {
            return Ok((0.0, order));
        }
        Ok((eps.max(0.0), order))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
    pub noise_multiplier: f64,
    pub steps: usize,
    pub cap: usize,
    pub best_order: f64,
}

/// `(eps, best_order)` after `steps` releases at `noise_multiplier`.
pub fn epsilon_for(noise_multiplier: f64, steps: usize, delta: f64) -> Result<(f64, f64)> {
    AccountantState::default()
        .compose_gaussian(noise_multiplier, steps)?
        .to_epsilon(delta)
}

/// Report for aggregate noise `sigma` at sensitivity `cap`.
///
/// `sigma = 0` means no noise at all: the report carries an infinite
/// epsilon (serialized as `null`) and an undefined best order.
pub fn account(sigma: f64, cap: usize, steps: usize, delta: f64) -> Result<PrivacyReport> {
    if cap == 0 {
        return Err(Error::Accountant("cap must be >= 1".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Accountant(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    let noise_multiplier = sigma / cap as f64;
    let (epsilon, best_order) = if sigma == 0.0 && steps > 0 {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Accountant(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        (f64::INFINITY, f64::NAN)
    } else if sigma == 0.0 {
        (0.0, f64::NAN)
    } else {
        epsilon_for(noise_multiplier, steps, delta)?
    };
    Ok(PrivacyReport {
        epsilon,
        delta,
        sigma,
        noise_multiplier,
        steps,
        cap,
        best_order,
    })
}

const Z_LO: f64 = 1e-3;
const Z_HI: f64 = 1e6;

/// Finds the aggregate `sigma` whose epsilon lands in `[target - 1e-3, target]`.
pub fn calibrate_sigma(
    target_epsilon: f64,
    delta: f64,
    steps: usize,
    cap: usize,
) -> Result<PrivacyReport> {
    if !(target_epsilon > 0.0 && target_epsilon.is_finite()) {
        return Err(Error::Accountant(format!(
            "target epsilon must be > 0, got {target_epsilon}"
        )));
    }
    if steps == 0 {
        return Err(Error::Accountant("cannot calibrate zero releases".into()));
    }
    let eps = |z: f64| epsilon_for(z, steps, delta).map(|e| e.0);
    // eps decreases in z: keep eps(lo) > target >= eps(hi)
    let (mut lo, mut hi) = (Z_LO, Z_HI);
    if eps(lo)? <= target_epsilon || eps(hi)? > target_epsilon {
        return Err(Error::Accountant(format!(
            "target epsilon {target_epsilon} not bracketed by noise multipliers [{Z_LO}, {Z_HI}]"
        )));
    }
    for _ in 0..200 {
        if eps(hi)? >= target_epsilon - 1e-3 {
            break;
        }
        // geometric midpoint: the bracket spans nine decades
        let mid = (lo * hi).sqrt();
        if eps(mid)? > target_epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let report = account(hi * cap as f64, cap, steps, delta)?;
    if report.epsilon < target_epsilon - 1e-3 {
        return Err(Error::Accountant(format!(
            "calibration did not converge for target {target_epsilon}"
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_steps_unchanged() {
        let s = AccountantState::default();
        assert_eq!(s.clone().compose_gaussian(1.0, 0).unwrap(), s);
    }

    #[test]
    fn single_step_at_order_two() {
        let s = AccountantState::new(vec![2.0])
            .unwrap()
            .compose_gaussian(1.0, 1)
            .unwrap();
        assert_eq!(s.rdp(), &[1.0]);
    }

    #[test]
    fn composition_is_linear() {
        let one = AccountantState::default().compose_gaussian(1.7, 1).unwrap();
        let eleven = AccountantState::default()
            .compose_gaussian(1.7, 11)
            .unwrap();
        for (a, b) in one.rdp().iter().zip(eleven.rdp()) {
            assert!((11.0 * a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(AccountantState::default().compose_gaussian(0.0, 1).is_err());
        assert!(AccountantState::default()
            .compose_gaussian(-1.0, 1)
            .is_err());
        assert!(AccountantState::default().to_epsilon(0.0).is_err());
        assert!(AccountantState::default().to_epsilon(1.0).is_err());
        assert!(AccountantState::new(vec![])
            .unwrap()
            .to_epsilon(1e-5)
            .is_err());
        assert!(AccountantState::new(vec![1.0]).is_err());
        assert!(calibrate_sigma(0.0, 1e-5, 11, 8).is_err());
    }

    #[test]
    fn zero_rdp_gives_zero_epsilon() {
        assert_eq!(AccountantState::default().to_epsilon(1e-5).unwrap().0, 0.0);
    }

    #[test]
    fn default_grid_shape() {
        let g = default_orders();
        assert_eq!(g.len(), 99 + 52);
        assert!((g[0] - 1.1).abs() < 1e-12);
        assert_eq!(*g.last().unwrap(), 63.0);
    }

    #[test]
    fn doubling_cap_doubles_sigma() {
        let a = account(8.0 * 2.5, 8, 11, 3e-6).unwrap();
        let b = account(16.0 * 2.5, 16, 11, 3e-6).unwrap();
        assert_eq!(b.sigma, 2.0 * a.sigma);
        assert_eq!(a.epsilon, b.epsilon);
        assert_eq!(a.noise_multiplier, b.noise_multiplier);
    }

    #[test]
    fn noiseless_report_is_unbounded() {
        let r = account(0.0, 8, 3, 1e-5).unwrap();
        assert!(r.epsilon.is_infinite());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"epsilon\":null"));
    }

    #[test]
    fn report_field_names() {
        let r = account(20.0, 8, 11, 3e-6).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "best_order",
                "cap",
                "delta",
                "epsilon",
                "noise_multiplier",
                "sigma",
                "steps"
            ]
        );
    }
}
