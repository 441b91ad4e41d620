use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::volume::{LabelMap, GEOMETRY_RTOL};

/// Semantic classes evaluated by default.
pub const SPINE_CLASSES: [u8; 3] = [1, 2, 3];
pub const CLASS_NAMES: [&str; 3] = ["vertebra", "ivd", "canal"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiceReport {
    pub per_class: BTreeMap<u8, f64>,
    /// Mean of `per_class`.
    pub global: f64,
}

/// `2 |P ∩ R| / (|P| + |R|)` per class; a class absent from both maps
/// scores 1.
pub fn dice_per_class(pred: &LabelMap, reference: &LabelMap, classes: &[u8]) -> Result<DiceReport> {
    if pred.dims() != reference.dims() || !pred.geometry().matches(reference.geometry(), GEOMETRY_RTOL) {
        return Err(Error::Shape(format!(
            "prediction {:?} and reference {:?} do not share geometry",
            pred.dims(),
            reference.dims()
        )));
    }
    if classes.is_empty() {
        return Err(Error::arg("no classes requested"));
    }
    // Joint histogram: counts[p][r].
    let mut counts = vec![[0u64; 256]; 256];
    for (&p, &r) in pred.data().iter().zip(reference.data()) {
        counts[p as usize][r as usize] += 1;
    }
    let pred_total = |c: usize| counts[c].iter().sum::<u64>();
    let ref_total = |c: usize| counts.iter().map(|row| row[c]).sum::<u64>();
    let per_class: BTreeMap<u8, f64> = classes
        .iter()
        .map(|&c| {
            let c_ = c as usize;
            let (p, r, both) = (pred_total(c_), ref_total(c_), counts[c_][c_]);
            let d = if p + r == 0 { 1.0 } else { 2.0 * both as f64 / (p + r) as f64 };
            (c, d)
        })
        .collect();
    let global = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok(DiceReport { per_class, global })
}

/// Mean over subjects of each subject's class-averaged Dice.
pub fn aggregate_subjects(reports: &[DiceReport]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::arg("cannot aggregate zero subjects"));
    }
    Ok(reports.iter().map(|r| r.global).sum::<f64>() / reports.len() as f64)
}
