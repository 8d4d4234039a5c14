use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Corpora "close to or bigger than" 1000 h get the short schedule; the
/// 917.68 h Spanish training set is in that group, the 247.38 h Italian one
/// is not.
pub const LONG_CORPUS_HOURS: f64 = 900.0;
pub const EPOCHS_LONG: usize = 40;
pub const EPOCHS_SHORT: usize = 150;
pub const LR_NUMERATOR: f64 = 10000.0;
pub const LR_MIN: f64 = 1e-5;
pub const LR_MAX: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub epochs: usize,
    pub lr: f64,
}

/// 40 epochs for long corpora, 150 otherwise; learning
/// rate `10000 / duration in seconds`, clamped. Explicit values win.
pub fn resolve_schedule(total_duration_s: f64, epochs: Option<usize>, lr: Option<f64>) -> Result<Schedule> {
    if !(total_duration_s > 0.0 && total_duration_s.is_finite()) {
        return Err(Error::Config(format!(
            "training duration must be positive, got {total_duration_s} s"
        )));
    }
    let hours = total_duration_s / 3600.0;
    Ok(Schedule {
        epochs: epochs.unwrap_or(if hours >= LONG_CORPUS_HOURS { EPOCHS_LONG } else { EPOCHS_SHORT }),
        lr: lr.unwrap_or((LR_NUMERATOR / total_duration_s).clamp(LR_MIN, LR_MAX)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_durations() {
        let de = resolve_schedule(1966.51 * 3600.0, None, None).unwrap();
        assert_eq!(de.epochs, 40);
        assert!((de.lr - 10000.0 / (1966.51 * 3600.0)).abs() < 1e-15);
        assert_eq!(resolve_schedule(103.65 * 3600.0, None, None).unwrap().epochs, 150);
        let syn = resolve_schedule(3600.0, None, None).unwrap();
        assert_eq!((syn.epochs, syn.lr), (150, 1e-2));
        let groups = [
            (1966.51, 40),
            (1544.24, 40),
            (1076.58, 40),
            (917.68, 40),
            (247.38, 150),
            (160.96, 150),
            (103.65, 150),
        ];
        for (h, e) in groups {
            assert_eq!(resolve_schedule(h * 3600.0, None, None).unwrap().epochs, e, "{h} h");
        }
        assert_eq!(resolve_schedule(10.0, Some(3), Some(0.5)).unwrap(), Schedule { epochs: 3, lr: 0.5 });
        assert!(resolve_schedule(0.0, None, None).is_err());
    }
}
