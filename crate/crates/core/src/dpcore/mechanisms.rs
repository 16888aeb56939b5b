use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::DpError;

/// Privacy parameters of one query.
///
/// Either `epsilon` (with `delta` for Gaussian releases) or `sigma` is the
/// primary setting; [`PrivacyParams::sigma`] calibrates when only
/// `epsilon` is present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub sigma: Option<f64>,
    pub sensitivity: f64,
    pub trust_t: usize,
    pub n_parties: usize,
}

impl PrivacyParams {
    pub fn gaussian(sigma: f64, sensitivity: f64) -> Self {
        PrivacyParams {
            epsilon: None,
            delta: 0.0,
            sigma: Some(sigma),
            sensitivity,
            trust_t: 2,
            n_parties: 2,
        }
    }

    pub fn laplace(epsilon: f64, sensitivity: f64) -> Self {
        PrivacyParams {
            epsilon: Some(epsilon),
            delta: 0.0,
            sigma: None,
            sensitivity,
            trust_t: 2,
            n_parties: 2,
        }
    }

    pub fn with_trust(mut self, trust_t: usize, n_parties: usize) -> Self {
        self.trust_t = trust_t;
        self.n_parties = n_parties;
        self
    }

    /// Noise multiplier, calibrated from `(epsilon, delta)` if not set.
    pub fn sigma(&self) -> Result<f64, DpError> {
        match (self.sigma, self.epsilon) {
            (Some(s), _) => check_nonneg("sigma", s),
            (None, Some(eps)) => calibrate_gaussian_sigma(eps, self.delta),
            (None, None) => Err(DpError::MissingParameter("sigma or epsilon")),
        }
    }

    pub fn epsilon(&self) -> Result<f64, DpError> {
        let eps = self.epsilon.ok_or(DpError::MissingParameter("epsilon"))?;
        check_positive("epsilon", eps)
    }

    pub fn validate_trust(&self) -> Result<(), DpError> {
        if self.trust_t < 2 {
            return Err(DpError::TrustTooLow(self.trust_t));
        }
        if self.trust_t > self.n_parties {
            return Err(DpError::TrustExceedsParties {
                trust_t: self.trust_t,
                n_parties: self.n_parties,
            });
        }
        Ok(())
    }

    fn sensitivity(&self) -> Result<f64, DpError> {
        check_nonneg("sensitivity", self.sensitivity)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    Gaussian,
    Laplace,
    GammaShare,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseScaling {
    /// Each party adds the full mechanism noise.
    Full,
    /// Each party adds a `1/(t-1)` share of the noise.
    TrustScaled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    pub value: f64,
    pub mechanism: Mechanism,
    pub std_dev: f64,
}

fn check_positive(name: &'static str, value: f64) -> Result<f64, DpError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(DpError::Domain {
            name,
            value,
            expected: "finite and > 0",
        })
    }
}

fn check_nonneg(name: &'static str, value: f64) -> Result<f64, DpError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(DpError::Domain {
            name,
            value,
            expected: "finite and >= 0",
        })
    }
}

/// `sqrt(2 ln(1.25/delta)) / epsilon`.
///
/// The textbook guarantee assumes `epsilon < 1`; larger values are accepted
/// with a warning, and [`gaussian_theorem_holds`] reports the regime.
pub fn calibrate_gaussian_sigma(epsilon: f64, delta: f64) -> Result<f64, DpError> {
    check_positive("epsilon", epsilon)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(DpError::Domain {
            name: "delta",
            value: delta,
            expected: "in (0, 1)",
        });
    }
    if epsilon >= 1.0 {
        log::warn!(
            "epsilon = {epsilon} is outside the regime epsilon < 1 of the Gaussian calibration"
        );
    }
    Ok((2.0 * (1.25 / delta).ln()).sqrt() / epsilon)
}

/// Whether `(epsilon, delta, sigma)` satisfies the classic sufficient
/// condition `epsilon < 1` and `delta >= 1.25 exp(-(sigma epsilon)^2 / 2)`.
pub fn gaussian_theorem_holds(epsilon: f64, delta: f64, sigma: f64) -> bool {
    epsilon > 0.0 && epsilon < 1.0 && delta >= 1.25 * (-(sigma * epsilon).powi(2) / 2.0).exp()
}

fn gaussian_std(params: &PrivacyParams, divisor: usize) -> Result<f64, DpError> {
    Ok(params.sensitivity()? * params.sigma()? / (divisor as f64).sqrt())
}

fn normal<R: Rng + ?Sized>(rng: &mut R, std_dev: f64) -> f64 {
    if std_dev == 0.0 {
        0.0
    } else {
        let z: f64 = StandardNormal.sample(rng);
        std_dev * z
    }
}

/// Draw from `N(0, S^2 sigma^2)`.
pub fn gaussian_noise<R: Rng + ?Sized>(
    params: &PrivacyParams,
    rng: &mut R,
) -> Result<NoiseDraw, DpError> {
    let std_dev = gaussian_std(params, 1)?;
    Ok(NoiseDraw {
        value: normal(rng, std_dev),
        mechanism: Mechanism::Gaussian,
        std_dev,
    })
}

/// Draw from `N(0, S^2 sigma^2 / (t-1))`.
pub fn trust_scaled_gaussian<R: Rng + ?Sized>(
    params: &PrivacyParams,
    rng: &mut R,
) -> Result<NoiseDraw, DpError> {
    params.validate_trust()?;
    let std_dev = gaussian_std(params, params.trust_t - 1)?;
    Ok(NoiseDraw {
        value: normal(rng, std_dev),
        mechanism: Mechanism::Gaussian,
        std_dev,
    })
}

/// Draw from `Laplace(S/epsilon)`.
pub fn laplace_noise<R: Rng + ?Sized>(
    epsilon: f64,
    sensitivity: f64,
    rng: &mut R,
) -> Result<NoiseDraw, DpError> {
    check_positive("epsilon", epsilon)?;
    let scale = check_nonneg("sensitivity", sensitivity)? / epsilon;
    let value = if scale == 0.0 {
        0.0
    } else {
        let a: f64 = Exp1.sample(rng);
        let b: f64 = Exp1.sample(rng);
        scale * (a - b)
    };
    Ok(NoiseDraw {
        value,
        mechanism: Mechanism::Laplace,
        std_dev: std::f64::consts::SQRT_2 * scale,
    })
}

/// One party's share of distributed Laplace noise: `g1 - g2` with
/// `g_i ~ Gamma(1/(t-1), S/epsilon)`. Any `t - 1` shares sum to
/// `Laplace(S/epsilon)`.
pub fn gamma_share_noise<R: Rng + ?Sized>(
    epsilon: f64,
    sensitivity: f64,
    trust_t: usize,
    rng: &mut R,
) -> Result<NoiseDraw, DpError> {
    if trust_t < 2 {
        return Err(DpError::TrustTooLow(trust_t));
    }
    check_positive("epsilon", epsilon)?;
    let scale = check_nonneg("sensitivity", sensitivity)? / epsilon;
    let shape = 1.0 / (trust_t - 1) as f64;
    let value = if scale == 0.0 {
        0.0
    } else {
        let gamma = Gamma::new(shape, scale).expect("shape and scale are positive");
        gamma.sample(rng) - gamma.sample(rng)
    };
    Ok(NoiseDraw {
        value,
        mechanism: Mechanism::GammaShare,
        std_dev: scale * (2.0 * shape).sqrt(),
    })
}

/// Standard deviation of one party's noise under `mechanism` and `scaling`.
pub fn per_party_noise_std(
    mechanism: Mechanism,
    params: &PrivacyParams,
    scaling: NoiseScaling,
) -> Result<f64, DpError> {
    let divisor = match scaling {
        NoiseScaling::Full => 1,
        NoiseScaling::TrustScaled => {
            params.validate_trust()?;
            params.trust_t - 1
        }
    };
    match mechanism {
        Mechanism::Gaussian => gaussian_std(params, divisor),
        Mechanism::Laplace | Mechanism::GammaShare => {
            let scale = params.sensitivity()? / params.epsilon()?;
            Ok(scale * (2.0 / divisor as f64).sqrt())
        }
    }
}

/// The noise a party must add to its answer to one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mechanism: Mechanism,
    pub params: PrivacyParams,
    pub scaling: NoiseScaling,
}

impl NoiseSpec {
    pub fn std_dev(&self) -> Result<f64, DpError> {
        per_party_noise_std(self.mechanism, &self.params, self.scaling)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<NoiseDraw, DpError> {
        match (self.mechanism, self.scaling) {
            (Mechanism::Gaussian, NoiseScaling::Full) => gaussian_noise(&self.params, rng),
            (Mechanism::Gaussian, NoiseScaling::TrustScaled) => {
                trust_scaled_gaussian(&self.params, rng)
            }
            (Mechanism::Laplace | Mechanism::GammaShare, NoiseScaling::Full) => {
                laplace_noise(self.params.epsilon()?, self.params.sensitivity, rng)
            }
            (Mechanism::Laplace | Mechanism::GammaShare, NoiseScaling::TrustScaled) => {
                self.params.validate_trust()?;
                gamma_share_noise(
                    self.params.epsilon()?,
                    self.params.sensitivity,
                    self.params.trust_t,
                    rng,
                )
            }
        }
    }

    /// Adds an independent draw to every element of `values`.
    pub fn perturb<R: Rng + ?Sized>(&self, values: &mut [f64], rng: &mut R) -> Result<(), DpError> {
        if self.mechanism == Mechanism::Gaussian {
            // hot path for model-sized vectors: validate once, then sample directly
            let std_dev = self.std_dev()?;
            for v in values.iter_mut() {
                *v += normal(rng, std_dev);
            }
            return Ok(());
        }
        for v in values.iter_mut() {
            *v += self.sample(rng)?.value;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const SAMPLES: usize = 100_000;

    fn variance(xs: &[f64]) -> f64 {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    }

    fn rel_err(got: f64, want: f64) -> f64 {
        (got - want).abs() / want
    }

    #[test]
    fn calibration_closed_form() {
        let oracle = |eps: f64, delta: f64| (2.0 * (1.25f64 / delta).ln()).sqrt() / eps;
        let s1 = calibrate_gaussian_sigma(1.0, 1e-5).unwrap();
        assert!((s1 - 4.844_8).abs() < 1e-4, "{s1}");
        assert!((s1 - oracle(1.0, 1e-5)).abs() < 1e-12);
        let s_half = calibrate_gaussian_sigma(0.5, 1e-5).unwrap();
        assert!((s_half - 9.689_6).abs() < 1e-3);
        assert!((s_half - 2.0 * s1).abs() < 1e-12);
        assert!(calibrate_gaussian_sigma(1.0, 2e-5).unwrap() < s1);
        assert!(calibrate_gaussian_sigma(0.0, 1e-5).is_err());
        assert!(calibrate_gaussian_sigma(1.0, 0.0).is_err());
        assert!(calibrate_gaussian_sigma(1.0, 1.0).is_err());
    }

    #[test]
    fn calibrated_sigma_satisfies_condition() {
        let sigma = calibrate_gaussian_sigma(0.5, 1e-5).unwrap();
        assert!(gaussian_theorem_holds(0.5, 1e-5, sigma * 1.000_001));
        assert!(!gaussian_theorem_holds(0.5, 1e-5, sigma * 0.9));
    }

    #[test]
    fn zero_sensitivity_gives_exact_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(
            gaussian_noise(&PrivacyParams::gaussian(8.0, 0.0), &mut rng)
                .unwrap()
                .value,
            0.0
        );
        assert_eq!(laplace_noise(0.5, 0.0, &mut rng).unwrap().value, 0.0);
        assert_eq!(gamma_share_noise(0.5, 0.0, 3, &mut rng).unwrap().value, 0.0);
    }

    #[test]
    fn gaussian_variance_matches() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let params = PrivacyParams::gaussian(8.0, 1.0);
        let xs: Vec<f64> = (0..SAMPLES)
            .map(|_| gaussian_noise(&params, &mut rng).unwrap().value)
            .collect();
        assert!(rel_err(variance(&xs), 64.0) < 0.05);
        let scaled = PrivacyParams::gaussian(8.0, 3.0);
        assert_eq!(
            gaussian_noise(&scaled, &mut rng).unwrap().std_dev,
            3.0 * 8.0
        );
    }

    #[test]
    fn trust_scaled_variances() {
        let params = PrivacyParams::gaussian(8.0, 1.0).with_trust(10, 10);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let d = trust_scaled_gaussian(&params, &mut rng).unwrap();
        assert!((d.std_dev.powi(2) - 64.0 / 9.0).abs() < 1e-12);

        let sums: Vec<f64> = (0..SAMPLES)
            .map(|_| {
                (0..10)
                    .map(|_| trust_scaled_gaussian(&params, &mut rng).unwrap().value)
                    .sum()
            })
            .collect();
        let v = variance(&sums);
        assert!(rel_err(v, 10.0 * 64.0 / 9.0) < 0.05, "{v}");
        assert!(v > 64.0);

        let t2 = PrivacyParams::gaussian(8.0, 1.0).with_trust(2, 10);
        assert_eq!(
            trust_scaled_gaussian(&t2, &mut rng).unwrap().std_dev,
            gaussian_noise(&t2, &mut rng).unwrap().std_dev
        );
        let bad = PrivacyParams::gaussian(8.0, 1.0).with_trust(1, 10);
        assert_eq!(
            trust_scaled_gaussian(&bad, &mut rng),
            Err(DpError::TrustTooLow(1))
        );
        let over = PrivacyParams::gaussian(8.0, 1.0).with_trust(11, 10);
        assert!(trust_scaled_gaussian(&over, &mut rng).is_err());
    }

    #[test]
    fn trust_two_equals_full_gaussian_in_distribution() {
        // same seed, same parameters into the sampler → identical streams
        let params = PrivacyParams::gaussian(4.0, 2.0).with_trust(2, 5);
        let mut a = ChaCha20Rng::seed_from_u64(9);
        let mut b = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..100 {
            assert_eq!(
                trust_scaled_gaussian(&params, &mut a).unwrap().value,
                gaussian_noise(&params, &mut b).unwrap().value
            );
        }
    }

    #[test]
    fn laplace_std_and_median() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut xs: Vec<f64> = (0..SAMPLES)
            .map(|_| laplace_noise(0.05, 1.0, &mut rng).unwrap().value)
            .collect();
        let std = variance(&xs).sqrt();
        assert!(rel_err(std, 2f64.sqrt() / 0.05) < 0.05, "{std}");
        xs.sort_by(f64::total_cmp);
        assert!(xs[SAMPLES / 2].abs() < 0.5);
        assert!(laplace_noise(0.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn gamma_shares_sum_to_laplace() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (eps, s, t) = (0.5, 1.0, 5);
        let sums: Vec<f64> = (0..SAMPLES)
            .map(|_| {
                (0..t - 1)
                    .map(|_| gamma_share_noise(eps, s, t, &mut rng).unwrap().value)
                    .sum()
            })
            .collect();
        assert!(rel_err(variance(&sums), 2.0 * (s / eps).powi(2)) < 0.05);
        let single: Vec<f64> = (0..SAMPLES)
            .map(|_| gamma_share_noise(eps, s, t, &mut rng).unwrap().value)
            .collect();
        let mean = single.iter().sum::<f64>() / SAMPLES as f64;
        assert!(mean.abs() < 0.05);
        assert_eq!(
            gamma_share_noise(eps, s, 1, &mut rng),
            Err(DpError::TrustTooLow(1))
        );
    }

    #[test]
    fn gamma_share_at_trust_two_is_laplace() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let xs: Vec<f64> = (0..SAMPLES)
            .map(|_| gamma_share_noise(1.0, 1.0, 2, &mut rng).unwrap().value)
            .collect();
        assert!(rel_err(variance(&xs), 2.0) < 0.05);
        // Laplace(1) has P(|X| > 1) = e^-1
        let tail = xs.iter().filter(|x| x.abs() > 1.0).count() as f64 / SAMPLES as f64;
        assert!((tail - (-1f64).exp()).abs() < 0.01);
    }

    #[test]
    fn per_party_std_is_monotone_in_trust() {
        for mech in [Mechanism::Gaussian, Mechanism::GammaShare] {
            let base = PrivacyParams {
                epsilon: Some(0.5),
                delta: 1e-5,
                sigma: Some(4.0),
                sensitivity: 1.0,
                trust_t: 2,
                n_parties: 10,
            };
            let local = per_party_noise_std(mech, &base, NoiseScaling::Full).unwrap();
            let mut prev = f64::INFINITY;
            for t in 2..=10 {
                let p = base.clone().with_trust(t, 10);
                let s = per_party_noise_std(mech, &p, NoiseScaling::TrustScaled).unwrap();
                assert!(s <= prev);
                if t == 2 {
                    assert_eq!(s, local);
                }
                prev = s;
            }
        }
    }

    #[test]
    fn aggregate_noise_dominates_central() {
        for n in 2..=50usize {
            for t in 2..=n {
                let aggregate = n as f64 / (t - 1) as f64;
                assert!(aggregate > 1.0, "n={n} t={t}");
            }
        }
    }

    #[test]
    fn perturb_adds_noise_elementwise() {
        let spec = NoiseSpec {
            mechanism: Mechanism::Gaussian,
            params: PrivacyParams::gaussian(1.0, 0.0).with_trust(3, 4),
            scaling: NoiseScaling::TrustScaled,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut v = vec![1.0, 2.0];
        spec.perturb(&mut v, &mut rng).unwrap();
        assert_eq!(v, vec![1.0, 2.0]);
    }
}
