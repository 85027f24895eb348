//! The detection benchmark: min-IoU matching, AP/mAP under the Default and
//! Known Object settings, Full/Rare/Non-Rare means and paired t-tests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bbox::BBox;
use crate::dataset::{Dataset, HoiInstance, RareSplit};
use crate::error::{Error, Result};
use crate::formats::ScoreRow;
use crate::proposals::mean_over;

pub use crate::bbox::pair_overlap;

/// A detection is a true positive iff `min(IoU_h, IoU_o) > MATCH_IOU`.
pub const MATCH_IOU: f64 = 0.5;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredDetection {
    pub image_id: String,
    pub hoi_id: usize,
    pub human_box: BBox,
    pub object_box: BBox,
    pub score: f64,
}

/// Flatten score rows into one detection per (proposal, class).
pub fn scored_detections(rows: &[ScoreRow]) -> Vec<ScoredDetection> {
    rows.iter()
        .flat_map(|r| {
            r.scores.iter().map(move |&(k, p)| ScoredDetection {
                image_id: r.image_id.clone(),
                hoi_id: k,
                human_box: r.human,
                object_box: r.object,
                score: p,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalSetting {
    Default,
    KnownObject,
}

impl fmt::Display for EvalSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalSetting::Default => "default",
            EvalSetting::KnownObject => "known-object",
        })
    }
}

impl FromStr for EvalSetting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(EvalSetting::Default),
            "known-object" => Ok(EvalSetting::KnownObject),
            _ => Err(Error::Config(format!("unknown setting `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApMethod {
    #[default]
    AllPoints,
    #[serde(rename = "11-point")]
    ElevenPoint,
}

impl fmt::Display for ApMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ApMethod::AllPoints => "all-points",
            ApMethod::ElevenPoint => "11-point",
        })
    }
}

impl FromStr for ApMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-points" => Ok(ApMethod::AllPoints),
            "11-point" => Ok(ApMethod::ElevenPoint),
            _ => Err(Error::Config(format!("unknown AP method `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: EvalSetting,
    pub ap_method: ApMethod,
    pub iou_threshold: f64,
    pub rare_threshold: usize,
    /// `None` for classes without ground truth in the evaluated images.
    pub per_class: Vec<Option<f64>>,
    pub full: Option<f64>,
    pub rare: Option<f64>,
    pub non_rare: Option<f64>,
}

/// Processing order: score descending, then image id and boxes.
fn rank_cmp(a: &ScoredDetection, b: &ScoredDetection) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.image_id.cmp(&b.image_id))
        .then_with(|| a.human_box.total_cmp(&b.human_box))
        .then_with(|| a.object_box.total_cmp(&b.object_box))
}

/// Greedy matching of one class's detections. Returns TP flags in
/// processing order (see [`rank_cmp`]); each ground-truth instance is
/// consumed by at most one detection, the one with the highest min-IoU
/// among still-unmatched instances.
pub fn match_detections(dets: &[ScoredDetection], gt: &[HoiInstance], thresh: f64) -> Vec<bool> {
    let mut order: Vec<&ScoredDetection> = dets.iter().collect();
    order.sort_by(|a, b| rank_cmp(a, b));
    let mut by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in gt.iter().enumerate() {
        by_image.entry(g.image_id.as_str()).or_default().push(i);
    }
    let mut used = vec![false; gt.len()];
    order
        .iter()
        .map(|d| {
            let Some(cands) = by_image.get(d.image_id.as_str()) else {
                return false;
            };
            let mut best: Option<(usize, f64)> = None;
            for &g in cands {
                if used[g] {
                    continue;
                }
                let ov = pair_overlap(&d.human_box, &d.object_box, &gt[g].human_box, &gt[g].object_box);
                if ov > thresh && best.is_none_or(|(_, b)| ov > b) {
                    best = Some((g, ov));
                }
            }
            match best {
                Some((g, _)) => {
                    used[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// AP from ranked TP/FP flags; `None` when there is no ground truth.
pub fn average_precision(flags: &[bool], n_gt: usize, method: ApMethod) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let n = n_gt as f64;
    let mut tp = 0usize;
    let mut tps = Vec::with_capacity(flags.len());
    let mut precision = Vec::with_capacity(flags.len());
    for (i, &f) in flags.iter().enumerate() {
        tp += f as usize;
        tps.push(tp);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    // Upper envelope: best precision at this rank or any later one.
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    Some(match method {
        ApMethod::AllPoints => {
            let mut ap = 0.0;
            let mut prev = 0.0;
            for (i, &f) in flags.iter().enumerate() {
                if f {
                    let r = tps[i] as f64 / n;
                    ap += (r - prev) * precision[i];
                    prev = r;
                }
            }
            ap
        }
        ApMethod::ElevenPoint => {
            let mut sum = 0.0;
            for t in 0..=10usize {
                // first rank whose recall reaches t/10
                let p = tps
                    .iter()
                    .position(|&c| c * 10 >= t * n_gt)
                    .map_or(0.0, |i| precision[i]);
                sum += p;
            }
            sum / 11.0
        }
    })
}

/// Images evaluated for each class under `setting`.
pub fn image_sets(ds: &Dataset, setting: EvalSetting) -> Vec<BTreeSet<&str>> {
    let tax = &ds.taxonomy;
    (0..tax.len())
        .map(|k| {
            let object = tax.object_of(k);
            ds.annotations
                .iter()
                .filter(|a| match setting {
                    EvalSetting::Default => true,
                    EvalSetting::KnownObject => {
                        a.positives.iter().any(|&p| tax.object_of(p) == object)
                    }
                })
                .map(|a| a.image_id.as_str())
                .collect()
        })
        .collect()
}

pub fn evaluate(
    scored: &[ScoredDetection],
    ds: &Dataset,
    setting: EvalSetting,
    split: &RareSplit,
    method: ApMethod,
    iou_threshold: f64,
) -> Result<EvalReport> {
    let index = ds.index();
    let k = ds.taxonomy.len();
    let mut dets: Vec<Vec<&ScoredDetection>> = vec![Vec::new(); k];
    for d in scored {
        if !index.contains_key(d.image_id.as_str()) {
            return Err(Error::UnknownImage(d.image_id.clone()));
        }
        if !d.score.is_finite() {
            return Err(Error::Precondition(format!(
                "non-finite score on image `{}`",
                d.image_id
            )));
        }
        if d.hoi_id >= k {
            return Err(Error::Precondition(format!("unknown class {}", d.hoi_id)));
        }
        dets[d.hoi_id].push(d);
    }
    let mut gt: Vec<Vec<HoiInstance>> = vec![Vec::new(); k];
    for inst in ds.instances() {
        gt[inst.hoi_id].push(inst.clone());
    }
    let sets = image_sets(ds, setting);

    let per_class = crate::par::map_range(k, |c| {
        let set = &sets[c];
        let kept: Vec<ScoredDetection> = dets[c]
            .iter()
            .filter(|d| set.contains(d.image_id.as_str()))
            .map(|d| (*d).clone())
            .collect();
        let truth: Vec<HoiInstance> = gt[c]
            .iter()
            .filter(|g| set.contains(g.image_id.as_str()))
            .cloned()
            .collect();
        let flags = match_detections(&kept, &truth, iou_threshold);
        average_precision(&flags, truth.len(), method)
    });
    let all: Vec<usize> = (0..k).collect();
    Ok(EvalReport {
        setting,
        ap_method: method,
        iou_threshold,
        rare_threshold: split.threshold,
        full: mean_over(&per_class, &all),
        rare: mean_over(&per_class, &split.rare),
        non_rare: mean_over(&per_class, &split.non_rare),
        per_class,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |v| format!("{:.2}", 100.0 * v))
}

impl EvalReport {
    /// Per-class CSV: `hoi_id,verb,object,ap` with empty AP for classes without ground truth.
    pub fn per_class_csv(&self, taxonomy: &crate::dataset::Taxonomy) -> String {
        let mut s = String::from("hoi_id,verb,object,ap\n");
        for (cat, ap) in taxonomy.categories().iter().zip(&self.per_class) {
            let ap = ap.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{},{ap}\n", cat.id, cat.verb, cat.object_category));
        }
        s
    }
}

/// mAP table (percent) with one row per setting: `setting | Full | Rare | Non-Rare`.
pub fn render_table(reports: &[(&str, &EvalReport)]) -> String {
    let mut s = format!("{:<24}{:>10}{:>10}{:>10}\n", "", "Full", "Rare", "Non-Rare");
    for (name, r) in reports {
        s.push_str(&format!(
            "{:<24}{:>10}{:>10}{:>10}\n",
            name,
            pct(r.full),
            pct(r.rare),
            pct(r.non_rare)
        ));
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub n: usize,
    pub t: f64,
    pub p: f64,
}

/// Two-sided paired t-test on per-class APs (`a - b`), `n - 1` degrees of freedom.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Precondition(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Precondition(format!(
            "paired t-test needs at least 2 classes, got {n}"
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("non-finite AP difference".into()));
    }
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if mean == 0.0 {
        return Ok(TTest { n, t: 0.0, p: 1.0 });
    }
    if var == 0.0 {
        return Ok(TTest {
            n,
            t: mean.signum() * f64::INFINITY,
            p: 0.0,
        });
    }
    let t = mean / (var / nf).sqrt();
    let dist = StudentsT::new(0.0, 1.0, nf - 1.0).expect("dof >= 1");
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(TTest { n, t, p })
}

/// Per-class APs present in both reports, paired by class.
pub fn paired_aps(a: &EvalReport, b: &EvalReport) -> (Vec<f64>, Vec<f64>) {
    a.per_class
        .iter()
        .zip(&b.per_class)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip()
}

/// `pair,t,p` rows.
pub fn render_ttests(rows: &[(String, TTest)]) -> String {
    let mut s = String::from("pair,t,p\n");
    for (name, r) in rows {
        s.push_str(&format!("{name},{},{}\n", r.t, r.p));
    }
    s
}
