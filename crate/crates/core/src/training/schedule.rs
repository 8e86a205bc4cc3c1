//! Plateau learning-rate reduction with early stopping.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleEvent {
    Improved,
    Stagnant,
    /// The learning rate was reduced for the following epochs.
    Reduced,
    Stop,
}

/// Tracks the best validation loss. After `patience` epochs without a strict
/// improvement the rate is multiplied by `factor` (not below `min_lr`) and
/// the plateau count restarts; after `early_stop` epochs without improvement
/// training stops. The stop check runs before the reduction.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    min_lr: f64,
    early_stop: usize,
    best: f64,
    since_best: usize,
    since_reduce: usize,
}

impl PlateauScheduler {
    pub fn new(lr0: f64, factor: f64, patience: usize, min_lr: f64, early_stop: usize) -> Self {
        PlateauScheduler {
            lr: lr0,
            factor,
            patience,
            min_lr,
            early_stop,
            best: f64::INFINITY,
            since_best: 0,
            since_reduce: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn observe(&mut self, val_loss: f64) -> ScheduleEvent {
        if val_loss < self.best {
            self.best = val_loss;
            self.since_best = 0;
            self.since_reduce = 0;
            return ScheduleEvent::Improved;
        }
        self.since_best += 1;
        self.since_reduce += 1;
        if self.since_best >= self.early_stop {
            return ScheduleEvent::Stop;
        }
        if self.since_reduce >= self.patience {
            self.since_reduce = 0;
            let next = (self.lr * self.factor).max(self.min_lr);
            if next < self.lr {
                self.lr = next;
                return ScheduleEvent::Reduced;
            }
        }
        ScheduleEvent::Stagnant
    }
}
