//! Segmentation overlap and paired significance testing.

mod dice;
mod wilcoxon;

pub use dice::{aggregate_subjects, dice_per_class, DiceReport, CLASS_NAMES, SPINE_CLASSES};
pub use wilcoxon::{wilcoxon_signed_rank, StatResult, EXACT_MAX_N, SIGNIFICANCE_LEVEL};
