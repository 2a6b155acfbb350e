/// Tracks validation loss and keeps a snapshot from the best epoch.
#[derive(Clone, Debug)]
pub struct EarlyStopping<S> {
    patience: usize,
    best: Option<(usize, f64, S)>,
    since_improvement: usize,
}

impl<S> EarlyStopping<S> {
    pub fn new(patience: usize) -> Self {
        Self { patience: patience.max(1), best: None, since_improvement: 0 }
    }

    pub fn patience(&self) -> usize {
        self.patience
    }

    /// Records an epoch's validation loss and returns `true` when training
    /// should stop. `snapshot` is only invoked on a strict improvement.
    pub fn observe(&mut self, epoch: usize, val_loss: f64, snapshot: impl FnOnce() -> S) -> bool {
        let improved = match &self.best {
            None => true,
            Some((_, best, _)) => val_loss < *best,
        };
        if improved {
            self.best = Some((epoch, val_loss, snapshot()));
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        self.since_improvement >= self.patience
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.as_ref().map(|b| b.0)
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.1)
    }

    pub fn best_snapshot(&self) -> Option<&S> {
        self.best.as_ref().map(|b| &b.2)
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.since_improvement
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stops_after_patience_on_worsening_loss() {
        let mut es = EarlyStopping::new(1);
        let losses = [1.0, 2.0, 3.0];
        let mut stopped_at = None;
        for (epoch, &l) in losses.iter().enumerate() {
            if es.observe(epoch + 1, l, || format!("weights@{}", epoch + 1)) {
                stopped_at = Some(epoch + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(2));
        assert_eq!(es.best_snapshot().map(String::as_str), Some("weights@1"));
    }

    #[test]
    fn keeps_minimum() {
        let mut es = EarlyStopping::new(10);
        for (e, l) in [3.0, 1.0, 2.0, 1.0, 0.5, 0.7].into_iter().enumerate() {
            es.observe(e, l, || e);
        }
        assert_eq!(es.best_epoch(), Some(4));
        assert_eq!(es.best_loss(), Some(0.5));
        assert_eq!(es.epochs_since_improvement(), 1);
    }
}
