//! Differentially private mechanisms: Gaussian noise calibration, per-unit
//! contribution clipping, and noisy-threshold release of data-derived
//! grouping keys. The heavy lifting of rewriting a Reduce into a DP subgraph
//! lives in [`reduce`].

pub mod reduce;

pub use reduce::{rewrite_reduce_dp, DpReduceOutcome};

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Noise scale for the Gaussian mechanism with l2 sensitivity `c`:
/// sigma = sqrt(2 ln(1.25/delta)) * c / epsilon.
pub fn gaussian_sigma(epsilon: f64, delta: f64, c: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")));
    }
    if !(c > 0.0) {
        return Err(Error::invalid(format!("sensitivity must be positive, got {c}")));
    }
    Ok((2.0 * (1.25 / delta).ln()).sqrt() * c / epsilon)
}

/// l2 clipping: v / max(1, |v|_2 / c).
pub fn clip_norm(v: &[f64], c: f64) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let factor = (norm / c).max(1.0);
    v.iter().map(|x| x / factor).collect()
}

/// Parameters of the noisy-threshold release of grouping keys: distinct-unit
/// counts are noised with `sigma_keys` and a group is released when the
/// noisy count reaches `tau`. A group backed by a single unit is then
/// released with probability at most `delta_keys / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauThresholdSpec {
    pub epsilon_keys: f64,
    pub delta_keys: f64,
    pub sigma_keys: f64,
    pub tau: f64,
}

impl TauThresholdSpec {
    pub fn new(epsilon_keys: f64, delta_keys: f64) -> Result<TauThresholdSpec> {
        let sigma_keys = gaussian_sigma(epsilon_keys, delta_keys / 2.0, 1.0)?;
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let tau = 1.0 + sigma_keys * normal.inverse_cdf(1.0 - delta_keys / 2.0);
        Ok(TauThresholdSpec { epsilon_keys, delta_keys, sigma_keys, tau })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_sigma_closed_form() {
        // evaluated directly from the closed form
        assert_abs_diff_eq!(gaussian_sigma(1.0, 1e-5, 1.0).unwrap(), 4.84481, epsilon = 1e-4);
        // halves with doubled epsilon
        assert_abs_diff_eq!(gaussian_sigma(2.0, 1e-5, 1.0).unwrap(), 2.42240, epsilon = 1e-4);
        // doubles with sensitivity
        assert_abs_diff_eq!(gaussian_sigma(1.0, 1e-5, 2.0).unwrap(), 9.68961, epsilon = 1e-4);
    }

    #[test]
    fn gaussian_sigma_rejects_bad_budget() {
        assert!(gaussian_sigma(0.0, 1e-5, 1.0).is_err());
        assert!(gaussian_sigma(1.0, 0.0, 1.0).is_err());
        assert!(gaussian_sigma(1.0, 1.5, 1.0).is_err());
        assert!(gaussian_sigma(1.0, 1e-5, 0.0).is_err());
    }

    #[test]
    fn gaussian_sigma_monotone() {
        let mut prev = f64::INFINITY;
        for eps in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let s = gaussian_sigma(eps, 1e-5, 1.0).unwrap();
            assert!(s < prev, "sigma must strictly decrease in epsilon");
            prev = s;
        }
        assert!(
            gaussian_sigma(1.0, 1e-6, 1.0).unwrap() > gaussian_sigma(1.0, 1e-5, 1.0).unwrap()
        );
        assert!(
            gaussian_sigma(1.0, 1e-5, 2.0).unwrap() > gaussian_sigma(1.0, 1e-5, 1.0).unwrap()
        );
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_norm(&[3.0, 4.0], 5.0), vec![3.0, 4.0]);
        assert_eq!(clip_norm(&[6.0, 8.0], 5.0), vec![3.0, 4.0]);
        assert_eq!(clip_norm(&[0.0, 0.0], 5.0), vec![0.0, 0.0]);
    }

    #[test]
    fn tau_spec_example() {
        // delta_keys = 1e-5: tau = 1 + sigma * Phi^-1(1 - 5e-6)
        let spec = TauThresholdSpec::new(0.5, 1e-5).unwrap();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let expected = 1.0 + spec.sigma_keys * normal.inverse_cdf(1.0 - 5e-6);
        assert_abs_diff_eq!(spec.tau, expected, epsilon = 1e-12);
        assert!(spec.tau >= 1.0);
    }
}
