use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{create_dir, list_nifti, nifti_stem, Diag};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_subjects, dice_per_class, wilcoxon_signed_rank, DiceReport, CLASS_NAMES, SPINE_CLASSES};
use crate::volume::{load_nifti, LabelMap};

const METRICS: [&str; 4] = ["vertebra", "ivd", "canal", "global"];

/// A prediction directory and the method name it reports under.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamedDir {
    pub name: String,
    pub dir: PathBuf,
}

/// `NAME=DIR`, or a bare directory named after its last component.
pub(crate) fn parse_named_dir(raw: &str) -> Result<NamedDir> {
    let (name, dir) = match raw.split_once('=') {
        Some((n, d)) => (n.to_string(), PathBuf::from(d)),
        None => {
            let dir = PathBuf::from(raw);
            let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            (name, dir)
        }
    };
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
        return Err(Error::arg(format!("bad prediction name in {raw:?}; use NAME=DIR with [A-Za-z0-9._-]")));
    }
    Ok(NamedDir { name, dir })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub name: String,
    pub subjects: BTreeMap<String, DiceReport>,
    pub per_class_mean: [f64; 3],
    /// Class-averaged, then subject-averaged Dice.
    pub global: f64,
}

impl MethodSummary {
    fn metric(&self, subject: &str, metric: usize) -> Option<f64> {
        let r = self.subjects.get(subject)?;
        Some(match metric {
            3 => r.global,
            c => r.per_class[&SPINE_CLASSES[c]],
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub methods: Vec<MethodSummary>,
}

impl fmt::Display for EvalSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20}{:>9}{:>10}{:>10}{:>10}{:>10}", "method", "subjects", "vertebra", "ivd", "canal", "global")?;
        for m in &self.methods {
            let [v, i, c] = m.per_class_mean;
            writeln!(f, "{:<20}{:>9}{v:>10.4}{i:>10.4}{c:>10.4}{:>10.4}", m.name, m.subjects.len(), m.global)?;
        }
        Ok(())
    }
}

fn by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    Ok(list_nifti(dir)?.into_iter().filter_map(|p| Some((nifti_stem(&p)?, p))).collect())
}

fn evaluate_method(pred: &NamedDir, refs: &BTreeMap<String, PathBuf>, diag: &mut Diag) -> Result<MethodSummary> {
    let preds = by_stem(&pred.dir)?;
    for stem in preds.keys().filter(|s| !refs.contains_key(*s)) {
        diag.warn(format!("{}: prediction {stem} has no reference, skipped", pred.name));
    }
    for stem in refs.keys().filter(|s| !preds.contains_key(*s)) {
        diag.warn(format!("{}: reference {stem} has no prediction, skipped", pred.name));
    }
    let pairs: Vec<(&String, &PathBuf, &PathBuf)> =
        preds.iter().filter_map(|(s, p)| refs.get(s).map(|r| (s, p, r))).collect();
    if pairs.is_empty() {
        return Err(Error::Io {
            path: pred.dir.clone(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no prediction/reference pairs"),
        });
    }
    let reports: Vec<Result<(String, DiceReport)>> = pairs
        .par_iter()
        .map(|(stem, p, r)| {
            let pred: LabelMap = load_nifti(p)?;
            let reference: LabelMap = load_nifti(r)?;
            let rep = dice_per_class(&pred, &reference, &SPINE_CLASSES)
                .map_err(|e| Error::Shape(format!("{stem}: {e}")))?;
            Ok(((*stem).clone(), rep))
        })
        .collect();
    let subjects: BTreeMap<String, DiceReport> = reports.into_iter().collect::<Result<_>>()?;
    let list: Vec<DiceReport> = subjects.values().cloned().collect();
    let n = list.len() as f64;
    let per_class_mean = [0, 1, 2].map(|c| list.iter().map(|r| r.per_class[&SPINE_CLASSES[c]]).sum::<f64>() / n);
    Ok(MethodSummary {
        name: pred.name.clone(),
        global: aggregate_subjects(&list)?,
        subjects,
        per_class_mean,
    })
}

/// `p=<value>;sig=<0|1>`; identical or all-tied pairs are reported as p = 1.
fn significance_cell(a: &MethodSummary, b: &MethodSummary, metric: usize) -> Result<String> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .subjects
        .keys()
        .filter_map(|s| Some((a.metric(s, metric)?, b.metric(s, metric)?)))
        .unzip();
    if xs.is_empty() {
        return Ok("p=NA;sig=0".into());
    }
    match wilcoxon_signed_rank(&xs, &ys) {
        Ok(r) => Ok(format!("p={};sig={}", r.p_value, r.significant as u8)),
        Err(Error::Degenerate(_)) => Ok("p=1;sig=0".into()),
        Err(e) => Err(e),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Write { path: path.to_path_buf(), source: e.into() })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Write { path: path.to_path_buf(), source: e.into() }
}

fn write_rows(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| Error::Write { path: path.to_path_buf(), source })
}

/// Evaluates each prediction directory against `reference` and writes
/// `per_subject_<name>.csv`, `summary.csv` and `significance_<metric>.csv`
/// into `out_dir`. Rows are sorted by subject id.
pub fn evaluate_dirs(preds: &[NamedDir], reference: &Path, out_dir: &Path, diag: &mut Diag) -> Result<EvalSummary> {
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = preds.iter().find(|p| !seen.insert(p.name.as_str())) {
        return Err(Error::arg(format!("prediction name {:?} given twice", dup.name)));
    }
    let refs = by_stem(reference)?;
    let methods = preds.iter().map(|p| evaluate_method(p, &refs, diag)).collect::<Result<Vec<_>>>()?;
    create_dir(out_dir)?;

    let header: Vec<String> = std::iter::once("subject_id".to_string())
        .chain(CLASS_NAMES.iter().map(|c| format!("dice_{c}")))
        .chain(std::iter::once("dice_global".to_string()))
        .collect();
    for m in &methods {
        let mut rows = vec![header.clone()];
        for (subject, r) in &m.subjects {
            let mut row = vec![subject.clone()];
            row.extend(SPINE_CLASSES.iter().map(|c| r.per_class[c].to_string()));
            row.push(r.global.to_string());
            rows.push(row);
        }
        write_rows(&out_dir.join(format!("per_subject_{}.csv", m.name)), &rows)?;
    }

    let mut rows = vec![{
        let mut h = vec!["method".to_string(), "n_subjects".to_string()];
        h.extend(header[1..].iter().cloned());
        h
    }];
    for m in &methods {
        let mut row = vec![m.name.clone(), m.subjects.len().to_string()];
        row.extend(m.per_class_mean.iter().map(f64::to_string));
        row.push(m.global.to_string());
        rows.push(row);
    }
    write_rows(&out_dir.join("summary.csv"), &rows)?;

    for (mi, metric) in METRICS.iter().enumerate() {
        let mut rows = vec![std::iter::once("method".to_string()).chain(methods.iter().map(|m| m.name.clone())).collect()];
        for a in &methods {
            let mut row = vec![a.name.clone()];
            for b in &methods {
                row.push(significance_cell(a, b, mi)?);
            }
            rows.push(row);
        }
        write_rows(&out_dir.join(format!("significance_{metric}.csv")), &rows)?;
    }
    Ok(EvalSummary { methods })
}
