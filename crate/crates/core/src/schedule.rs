//! Step-size, dual-rate, and tolerance schedules.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Constant,
    PowerDecay,
}

/// `value(t) = base · (t + 1)^(−exponent)`; a constant schedule has
/// exponent 0.
///
/// `base` may be zero (an `ε ≡ 0` tolerance or a frozen dual rate); every
/// positive-base schedule emits strictly positive, non-increasing values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub base: f64,
    #[serde(default)]
    pub exponent: f64,
}

impl Schedule {
    pub fn constant(base: f64) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            base,
            exponent: 0.0,
        }
    }

    pub fn power_decay(base: f64, exponent: f64) -> Self {
        Self {
            kind: ScheduleKind::PowerDecay,
            base,
            exponent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base.is_finite() && self.base >= 0.0) {
            return Err(Error::Config(format!(
                "schedule base must be finite and >= 0, got {}",
                self.base
            )));
        }
        if !(self.exponent.is_finite() && self.exponent >= 0.0) {
            return Err(Error::Config(format!(
                "schedule exponent must be finite and >= 0, got {}",
                self.exponent
            )));
        }
        if self.kind == ScheduleKind::Constant && self.exponent != 0.0 {
            return Err(Error::Config("constant schedule cannot carry an exponent".into()));
        }
        Ok(())
    }

    pub fn at(&self, step: usize) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.base,
            ScheduleKind::PowerDecay => self.base * ((step + 1) as f64).powf(-self.exponent),
        }
    }

    /// `Σ_{i<steps} value(i)`
    pub fn partial_sum(&self, steps: usize) -> f64 {
        (0..steps).map(|i| self.at(i)).sum()
    }
}
