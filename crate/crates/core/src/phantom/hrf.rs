//! Hemodynamic response kernels and stimulus paradigms.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma};

use crate::error::{invalid, Result};

/// Kernel support in seconds.
pub const HRF_SUPPORT_S: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Hrf {
    /// Gamma(6) peak minus 1/6 of a Gamma(16) undershoot.
    #[default]
    DoubleGamma,
    /// Gamma(6) peak only.
    SingleGamma,
}

fn gamma(shape: f64) -> Gamma {
    Gamma::new(shape, 1.0).expect("valid gamma shape")
}

impl Hrf {
    /// Kernel value at lag `t` seconds (zero outside the support).
    pub fn kernel(self, t: f64) -> f64 {
        if !(0.0..=HRF_SUPPORT_S).contains(&t) {
            return 0.0;
        }
        let peak = gamma(6.0).pdf(t);
        match self {
            Hrf::DoubleGamma => peak - gamma(16.0).pdf(t) / 6.0,
            Hrf::SingleGamma => peak,
        }
    }

    /// Integral of the kernel over `[0, t]`, clamped to the support.
    pub fn integral(self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let t = t.min(HRF_SUPPORT_S);
        let peak = gamma(6.0).cdf(t);
        match self {
            Hrf::DoubleGamma => peak - gamma(16.0).cdf(t) / 6.0,
            Hrf::SingleGamma => peak,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub onset: f64,
    pub duration: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

/// Stimulus events over a run, all times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paradigm {
    pub events: Vec<Event>,
    pub run_length: f64,
}

impl Paradigm {
    pub fn new(events: Vec<Event>, run_length: f64) -> Result<Self> {
        let p = Self { events, run_length };
        p.validate()?;
        Ok(p)
    }

    pub fn empty(run_length: f64) -> Self {
        Self {
            events: Vec::new(),
            run_length,
        }
    }

    /// Alternating on/off blocks starting with an "on" block at t = 0.
    /// The last block is truncated at the end of the run.
    pub fn block(on: f64, off: f64, run_length: f64) -> Result<Self> {
        if on <= 0.0 || off < 0.0 || run_length <= 0.0 {
            return Err(invalid("block lengths and run length must be positive"));
        }
        let mut events = Vec::new();
        let mut onset = 0.0;
        while onset < run_length {
            events.push(Event {
                onset,
                duration: on.min(run_length - onset),
                amplitude: 1.0,
            });
            onset += on + off;
        }
        Self::new(events, run_length)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.run_length > 0.0) {
            return Err(invalid("run_length must be positive"));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, e) in self.events.iter().enumerate() {
            if !(e.onset >= 0.0 && e.duration >= 0.0) {
                return Err(invalid(format!("event {i}: negative onset or duration")));
            }
            if e.onset < prev {
                return Err(invalid(format!("event {i}: onsets must be non-decreasing")));
            }
            if e.onset + e.duration > self.run_length + 1e-9 {
                return Err(invalid(format!("event {i} ends after the run")));
            }
            prev = e.onset;
        }
        Ok(())
    }

    pub fn is_silent(&self) -> bool {
        self.events.iter().all(|e| e.amplitude == 0.0)
    }

    /// Stimulus train convolved with the kernel, evaluated at `t` seconds.
    /// Zero-duration events act as impulses.
    pub fn response(&self, hrf: Hrf, t: f64) -> f64 {
        self.events
            .iter()
            .map(|e| {
                let lag = t - e.onset;
                if lag < 0.0 || e.amplitude == 0.0 {
                    0.0
                } else if e.duration == 0.0 {
                    e.amplitude * hrf.kernel(lag)
                } else {
                    e.amplitude * (hrf.integral(lag) - hrf.integral(lag - e.duration))
                }
            })
            .sum()
    }
}

/// Samples the convolved paradigm at `shot_times` and rescales so the
/// largest sample is 1. An all-zero response is returned unscaled.
pub fn build_bold_timecourse(paradigm: &Paradigm, shot_times: &[f64], hrf: Hrf) -> Result<Vec<f64>> {
    paradigm.validate()?;
    if let Some(t) = shot_times
        .iter()
        .find(|&&t| !(0.0..=paradigm.run_length + 1e-9).contains(&t))
    {
        return Err(invalid(format!(
            "shot time {t} outside [0, {}]",
            paradigm.run_length
        )));
    }
    let mut h: Vec<f64> = shot_times.iter().map(|&t| paradigm.response(hrf, t)).collect();
    normalize_peak(&mut h);
    Ok(h)
}

pub(crate) fn normalize_peak(h: &mut [f64]) {
    let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        h.iter_mut().for_each(|v| *v /= peak);
    }
}
