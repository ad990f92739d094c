use serde::{Deserialize, Serialize};

use super::NeuralError;

/// Cosine annealing with warm restarts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub eta_max: f64,
    pub eta_min: f64,
    /// Length of the first cycle, in steps.
    pub t_0: u64,
    /// Cycle length multiplier applied at every restart.
    pub t_mult: u64,
}

impl LrSchedule {
    pub fn new(eta_max: f64, eta_min: f64, t_0: u64, t_mult: u64) -> Result<Self, NeuralError> {
        let s = Self {
            eta_max,
            eta_min,
            t_0,
            t_mult,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if !(self.eta_max >= self.eta_min && self.eta_min >= 0.0) || self.t_0 < 1 || self.t_mult < 1 {
            return Err(NeuralError::InvalidConfig(format!("bad schedule {self:?}")));
        }
        Ok(())
    }

    /// `(steps since restart, current cycle length)` for a global step.
    pub fn position(&self, step: u64) -> (u64, u64) {
        let mut t_cur = step;
        let mut t_i = self.t_0;
        while t_cur >= t_i {
            t_cur -= t_i;
            t_i = t_i.saturating_mul(self.t_mult);
        }
        (t_cur, t_i)
    }
}

/// `eta_min + (eta_max - eta_min) * (1 + cos(pi * t_cur / t_i)) / 2`
pub fn cosine_annealing(eta_max: f64, eta_min: f64, t_cur: f64, t_i: f64) -> f64 {
    eta_min + 0.5 * (eta_max - eta_min) * (1.0 + (std::f64::consts::PI * t_cur / t_i).cos())
}

pub fn lr_at(step: u64, schedule: &LrSchedule) -> f64 {
    let (t_cur, t_i) = schedule.position(step);
    cosine_annealing(schedule.eta_max, schedule.eta_min, t_cur as f64, t_i as f64)
}
