use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, MultiClass};

/// Subchannels withdrawn from a background connection after each conversion round.
///
/// `amounts[class][i]` is the total withdrawn after `i` rounds. Entry 0 is 0 and
/// the last entry is the full background width, so a user at the last stage has
/// its background connection frozen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WithdrawalSchedule {
    amounts: [Vec<u32>; 4],
}

impl WithdrawalSchedule {
    /// `min(i * step, width)` for every class, with `ceil(width / step)` stages.
    pub fn from_config(cfg: &ModelConfig) -> Self {
        let amounts = MultiClass::ALL.map(|class| {
            let width = cfg.width(class.background());
            let step = cfg.withdraw_step;
            let stages = width.div_ceil(step);
            (0..=stages).map(|i| (i * step).min(width)).collect()
        });
        Self { amounts }
    }

    /// Builds a schedule from explicit per-class lists, indexed I..IV.
    pub fn from_lists(cfg: &ModelConfig, lists: [Vec<u32>; 4]) -> Result<Self, ModelError> {
        for class in MultiClass::ALL {
            let list = &lists[class.index()];
            let field = format!("schedule.class_{}", class.label().to_lowercase());
            let width = cfg.width(class.background());
            let fail = |reason: String| ModelError::InvalidConfig { field: field.clone(), reason };
            if list.len() < 2 {
                return Err(fail("needs at least two entries (0 and the full width)".into()));
            }
            if list[0] != 0 {
                return Err(fail(format!("first entry must be 0, got {}", list[0])));
            }
            if let Some(w) = list.windows(2).find(|w| w[1] <= w[0]) {
                return Err(fail(format!("entries must strictly increase ({} then {})", w[0], w[1])));
            }
            let last = *list.last().unwrap();
            if last != width {
                return Err(fail(format!("last entry must equal the background width {width}, got {last}")));
            }
        }
        Ok(Self { amounts: lists })
    }

    /// Index of the frozen stage, `m_j`.
    pub fn stages(&self, class: MultiClass) -> usize {
        self.amounts[class.index()].len() - 1
    }

    pub fn withdrawn(&self, class: MultiClass, stage: usize) -> u32 {
        self.amounts[class.index()][stage]
    }

    pub fn amounts(&self, class: MultiClass) -> &[u32] {
        &self.amounts[class.index()]
    }

    pub fn lists(&self) -> &[Vec<u32>; 4] {
        &self.amounts
    }
}
