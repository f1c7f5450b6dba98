//! Gilbert-Elliott channel simulator.

use std::f64::consts::TAU;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{OutcomeTrace, DEFAULT_PERIOD_S};
use crate::rng;
use crate::{Error, Result};

/// Names accepted by [`GeChannelSpec::preset`], ordered from the most to the
/// least stable channel.
pub const PRESET_NAMES: [&str; 4] = ["synth-ch1", "synth-ch5", "synth-ch9", "synth-ch13"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelState {
    #[default]
    Good,
    Bad,
}

/// Slow sinusoidal modulation of both loss probabilities:
/// `e(i) = clamp(e * (1 + amplitude * sin(2*pi*i/period + phase)), 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub amplitude: f64,
    /// Modulation period in samples.
    pub period: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Drift {
    fn factor(&self, i: usize) -> f64 {
        1.0 + self.amplitude * (TAU * i as f64 / self.period + self.phase).sin()
    }
}

/// Two-state Markov channel with state-dependent loss probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeChannelSpec {
    /// Per-step probability of moving Good -> Bad.
    pub p_gb: f64,
    /// Per-step probability of moving Bad -> Good.
    pub p_bg: f64,
    /// Loss probability while Good.
    pub e_g: f64,
    /// Loss probability while Bad.
    pub e_b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Drift>,
    #[serde(default)]
    pub initial: ChannelState,
    pub seed: u64,
    #[serde(default)]
    pub channel_id: u32,
    #[serde(default = "default_period")]
    pub period_s: f64,
}

fn default_period() -> f64 {
    DEFAULT_PERIOD_S
}

impl GeChannelSpec {
    pub fn new(p_gb: f64, p_bg: f64, e_g: f64, e_b: f64, seed: u64) -> Self {
        Self {
            p_gb,
            p_bg,
            e_g,
            e_b,
            drift: None,
            initial: ChannelState::Good,
            seed,
            channel_id: 0,
            period_s: DEFAULT_PERIOD_S,
        }
    }

    /// Drift-free channel whose long-run delivery ratio is 0.85
    /// (15% failed attempts). Bad periods last 250 samples on average,
    /// good periods 1000.
    pub fn calibrated(seed: u64) -> Self {
        Self::new(0.001, 0.004, 0.05, 0.55, seed)
    }

    /// Four nonstationary stand-ins for the channels 1, 5, 9 and 13 of one
    /// link: close to [`GeChannelSpec::calibrated`], with burstiness and
    /// loss-rate drift growing mildly from `synth-ch1` to `synth-ch13`.
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        // (channel, p_gb, p_bg, e_g, e_b, drift amplitude, drift period)
        let (channel_id, p_gb, p_bg, e_g, e_b, amplitude, period) = match name {
            "synth-ch1" => (1, 0.0009, 0.0045, 0.045, 0.52, 0.05, 36_000.0),
            "synth-ch5" => (5, 0.0010, 0.0042, 0.050, 0.55, 0.10, 28_800.0),
            "synth-ch9" => (9, 0.0011, 0.0040, 0.055, 0.57, 0.15, 21_600.0),
            "synth-ch13" => (13, 0.0012, 0.0038, 0.060, 0.60, 0.20, 14_400.0),
            other => {
                return Err(Error::InvalidSpec(format!(
                    "unknown preset {other:?}, expected one of {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Ok(Self {
            drift: Some(Drift { amplitude, period, phase: 0.0 }),
            channel_id,
            ..Self::new(p_gb, p_bg, e_g, e_b, seed)
        })
    }

    pub fn with_channel_id(mut self, channel_id: u32) -> Self {
        self.channel_id = channel_id;
        self
    }

    pub fn with_drift(mut self, drift: Drift) -> Self {
        self.drift = Some(drift);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_gb", self.p_gb), ("p_bg", self.p_bg), ("e_g", self.e_g), ("e_b", self.e_b)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidSpec(format!("{name} = {p} is not a probability")));
            }
        }
        if let Some(d) = &self.drift {
            if !(0.0..1.0).contains(&d.amplitude) {
                return Err(Error::InvalidSpec(format!("drift amplitude {} not in [0, 1)", d.amplitude)));
            }
            if !(d.period.is_finite() && d.period > 0.0) {
                return Err(Error::InvalidSpec(format!("drift period {} must be > 0", d.period)));
            }
            if !d.phase.is_finite() {
                return Err(Error::InvalidSpec("drift phase must be finite".into()));
            }
        }
        if !(self.period_s.is_finite() && self.period_s > 0.0) {
            return Err(Error::InvalidSpec(format!("period_s = {} must be > 0", self.period_s)));
        }
        Ok(())
    }

    fn loss_probability(&self, state: ChannelState, i: usize) -> f64 {
        let base = match state {
            ChannelState::Good => self.e_g,
            ChannelState::Bad => self.e_b,
        };
        match &self.drift {
            Some(d) => (base * d.factor(i)).clamp(0.0, 1.0),
            None => base,
        }
    }

    fn stationary_good(&self) -> Result<f64> {
        let total = self.p_gb + self.p_bg;
        if total <= 0.0 {
            return Err(Error::InvalidSpec(
                "absorbing chain: p_gb and p_bg are both zero".into(),
            ));
        }
        Ok(self.p_bg / total)
    }

    fn require_drift_free(&self) -> Result<()> {
        if self.drift.is_some() {
            return Err(Error::InvalidSpec("analytic FDR needs a drift-free spec".into()));
        }
        Ok(())
    }
}

/// Generates `n` outcomes from the channel.
///
/// Step 0 uses `spec.initial`; every later step first moves the state chain,
/// then draws the outcome, which is 1 with probability `1 - e_state(i)`.
pub fn simulate_trace(spec: &GeChannelSpec, n: usize) -> Result<OutcomeTrace> {
    simulate_with_states(spec, n).map(|(trace, _)| trace)
}

/// Like [`simulate_trace`] but also returns the hidden state sequence.
pub fn simulate_with_states(
    spec: &GeChannelSpec,
    n: usize,
) -> Result<(OutcomeTrace, Vec<ChannelState>)> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidSpec("trace length must be >= 1".into()));
    }
    let mut rng = rng::seeded(spec.seed);
    let mut state = spec.initial;
    let mut outcomes = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            let u: f64 = rng.random();
            state = match state {
                ChannelState::Good if u < spec.p_gb => ChannelState::Bad,
                ChannelState::Bad if u < spec.p_bg => ChannelState::Good,
                s => s,
            };
        }
        let lost = rng.random::<f64>() < spec.loss_probability(state, i);
        outcomes.push(u8::from(!lost));
        states.push(state);
    }
    Ok((OutcomeTrace::new(spec.channel_id, spec.period_s, outcomes)?, states))
}

/// Simulates several channels in parallel; each spec uses its own seed.
pub fn simulate_many(specs: &[GeChannelSpec], n: usize) -> Result<Vec<OutcomeTrace>> {
    specs.par_iter().map(|s| simulate_trace(s, n)).collect()
}

/// Long-run delivery ratio `pi_G (1 - e_g) + pi_B (1 - e_b)` of a drift-free
/// channel, with `pi_G = p_bg / (p_gb + p_bg)`.
pub fn stationary_fdr(spec: &GeChannelSpec) -> Result<f64> {
    spec.require_drift_free()?;
    let pi_g = spec.stationary_good()?;
    Ok(pi_g * (1.0 - spec.e_g) + (1.0 - pi_g) * (1.0 - spec.e_b))
}

/// Expected delivery ratio of the `horizon` samples following a step spent
/// in `state`, for a drift-free channel.
///
/// With `lambda = 1 - p_gb - p_bg`, the probability of being Good `k` steps
/// ahead is `pi_G + (1[state = Good] - pi_G) * lambda^k`.
pub fn conditional_fdr(spec: &GeChannelSpec, state: ChannelState, horizon: usize) -> Result<f64> {
    spec.require_drift_free()?;
    if horizon == 0 {
        return Err(Error::InvalidSpec("horizon must be >= 1".into()));
    }
    let pi_g = spec.stationary_good()?;
    let lambda = 1.0 - spec.p_gb - spec.p_bg;
    let start = if state == ChannelState::Good { 1.0 } else { 0.0 };
    let mut decay = 1.0;
    let mut sum = 0.0;
    for _ in 0..horizon {
        decay *= lambda;
        let p_good = pi_g + (start - pi_g) * decay;
        sum += p_good * (1.0 - spec.e_g) + (1.0 - p_good) * (1.0 - spec.e_b);
    }
    Ok(sum / horizon as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_loss_gives_all_ones() {
        let spec = GeChannelSpec::new(0.3, 0.2, 0.0, 0.0, 11);
        let t = simulate_trace(&spec, 100).unwrap();
        assert!(t.outcomes().iter().all(|&x| x == 1));
    }

    #[test]
    fn bernoulli_mean_when_chain_is_frozen_good() {
        // p_gb = 0 keeps the chain in Good: outcomes are i.i.d. Bernoulli(0.85).
        // sigma of the mean is sqrt(0.85 * 0.15 / 1e6) ~ 3.6e-4, so 0.002 is > 5 sigma.
        let spec = GeChannelSpec::new(0.0, 0.5, 0.15, 0.9, 3);
        let t = simulate_trace(&spec, 1_000_000).unwrap();
        assert!((t.mean() - 0.85).abs() < 0.002, "mean {}", t.mean());
    }

    #[test]
    fn same_seed_same_trace() {
        let spec = GeChannelSpec::preset("synth-ch9", 42).unwrap();
        assert_eq!(simulate_trace(&spec, 20_000).unwrap(), simulate_trace(&spec, 20_000).unwrap());
        let other = GeChannelSpec { seed: 43, ..spec.clone() };
        assert_ne!(simulate_trace(&spec, 20_000).unwrap(), simulate_trace(&other, 20_000).unwrap());
    }

    #[test]
    fn stationary_fdr_examples() {
        assert_eq!(stationary_fdr(&GeChannelSpec::new(0.1, 0.3, 0.0, 0.0, 0)).unwrap(), 1.0);
        assert_eq!(stationary_fdr(&GeChannelSpec::new(0.2, 0.2, 0.0, 1.0, 0)).unwrap(), 0.5);
        let v = stationary_fdr(&GeChannelSpec::new(0.01, 0.04, 0.05, 0.6, 0)).unwrap();
        assert!((v - 0.84).abs() < 1e-12, "{v}");
        assert!((stationary_fdr(&GeChannelSpec::calibrated(0)).unwrap() - 0.85).abs() < 1e-12);
    }

    #[test]
    fn absorbing_chain_is_an_error() {
        let spec = GeChannelSpec::new(0.0, 0.0, 0.1, 0.5, 0);
        assert!(matches!(stationary_fdr(&spec), Err(Error::InvalidSpec(_))));
        assert!(stationary_fdr(&GeChannelSpec::preset("synth-ch1", 0).unwrap()).is_err());
    }

    #[test]
    fn invalid_probabilities_rejected() {
        for spec in [
            GeChannelSpec::new(-0.1, 0.1, 0.0, 0.0, 0),
            GeChannelSpec::new(0.1, 1.1, 0.0, 0.0, 0),
            GeChannelSpec::new(0.1, 0.1, 0.0, f64::NAN, 0),
            GeChannelSpec::new(0.1, 0.1, 0.0, 0.0, 0)
                .with_drift(Drift { amplitude: 1.0, period: 10.0, phase: 0.0 }),
        ] {
            assert!(simulate_trace(&spec, 10).is_err(), "{spec:?}");
        }
        assert!(simulate_trace(&GeChannelSpec::calibrated(0), 0).is_err());
    }

    #[test]
    fn drifted_loss_is_clamped() {
        let spec = GeChannelSpec::new(0.0, 0.0, 0.9, 0.9, 0)
            .with_drift(Drift { amplitude: 0.5, period: 8.0, phase: 0.0 });
        for i in 0..32 {
            let p = spec.loss_probability(ChannelState::Good, i);
            assert!((0.0..=1.0).contains(&p));
        }
        assert_eq!(spec.loss_probability(ChannelState::Good, 2), 1.0);
    }

    #[test]
    fn conditional_fdr_limits() {
        let spec = GeChannelSpec::calibrated(0);
        let stationary = stationary_fdr(&spec).unwrap();
        let good = conditional_fdr(&spec, ChannelState::Good, 1_000_000).unwrap();
        let bad = conditional_fdr(&spec, ChannelState::Bad, 1_000_000).unwrap();
        assert!((good - stationary).abs() < 1e-3 && (bad - stationary).abs() < 1e-3);
        let g1 = conditional_fdr(&spec, ChannelState::Good, 1).unwrap();
        let expected = (1.0 - spec.p_gb) * 0.95 + spec.p_gb * 0.45;
        assert!((g1 - expected).abs() < 1e-15);
    }

    #[test]
    fn presets_exist_and_validate() {
        for name in PRESET_NAMES {
            GeChannelSpec::preset(name, 1).unwrap().validate().unwrap();
        }
        assert!(GeChannelSpec::preset("synth-ch2", 1).is_err());
    }
}
