use serde::{Deserialize, Serialize};

/// Minimum decrease that counts as an improvement.
pub const IMPROVEMENT_EPS: f64 = 1e-6;

/// Learning-rate halving on plateaus plus early stopping, driven by the
/// validation loss. The two patience counters run independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub factor: f64,
    pub plateau_patience: usize,
    pub stop_patience: usize,
    pub best: f64,
    since_lr_change: usize,
    since_best: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScheduleEvent {
    pub improved: bool,
    pub lr_reduced: bool,
    pub stop: bool,
}

impl PlateauSchedule {
    pub fn new(lr: f64, factor: f64, plateau_patience: usize, stop_patience: usize) -> Self {
        Self {
            lr,
            factor,
            plateau_patience,
            stop_patience,
            best: f64::INFINITY,
            since_lr_change: 0,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> ScheduleEvent {
        let mut ev = ScheduleEvent::default();
        if loss < self.best - IMPROVEMENT_EPS {
            self.best = loss;
            self.since_best = 0;
            self.since_lr_change = 0;
            ev.improved = true;
            return ev;
        }
        self.since_best += 1;
        self.since_lr_change += 1;
        if self.since_lr_change >= self.plateau_patience {
            self.lr *= self.factor;
            self.since_lr_change = 0;
            ev.lr_reduced = true;
        }
        ev.stop = self.since_best >= self.stop_patience;
        ev
    }
}
