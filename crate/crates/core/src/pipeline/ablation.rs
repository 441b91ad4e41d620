use super::config::{OrderMode, PipelineConfig, NOVEL_ORDER};
use crate::error::{Error, Result};

/// Every ablation setup: base, ours, ours_base_disabled, ours_random_order
/// and one base_plus_<transform> per appearance transform.
pub fn ablation_variants() -> Vec<String> {
    let mut v: Vec<String> = ["base", "ours", "ours_base_disabled", "ours_random_order"]
        .into_iter()
        .map(String::from)
        .collect();
    v.extend(NOVEL_ORDER.iter().map(|n| format!("base_plus_{n}")));
    v
}

/// Probability of the single enabled appearance transform in a
/// `base_plus_*` setup.
pub const SINGLE_TRANSFORM_PROBABILITY: f64 = 0.5;

pub fn make_ablation_config(base_seed: u64, variant: &str) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default_config();
    cfg.global_seed = base_seed;
    match variant {
        "base" => cfg.novel.clear(),
        "ours" => {}
        "ours_base_disabled" => cfg.baseline_intensity.iter_mut().for_each(|s| s.probability = 0.0),
        "ours_random_order" => cfg.order_mode = OrderMode::ShuffleNonGeometric,
        other => {
            let name = other
                .strip_prefix("base_plus_")
                .filter(|n| NOVEL_ORDER.contains(n))
                .ok_or_else(|| {
                    Error::arg(format!("unknown ablation variant {other:?}; expected one of {:?}", ablation_variants()))
                })?;
            cfg.novel.retain(|s| s.name == name);
            cfg.novel[0].probability = SINGLE_TRANSFORM_PROBABILITY;
        }
    }
    Ok(cfg)
}
