//! Slow reference implementations used only to check the real ones.
//!
//! Each function here recomputes a quantity by a deliberately naive route
//! (per-cell loops, threshold enumeration, finite differences, quadrature) and
//! shares no code with the path it checks beyond plain data types.

use crate::bbox::BBox;
use crate::interaction::{snap, InteractionPattern};

/// Interaction pattern by testing every cell centre against every box.
pub fn brute_force_ip(
    human: &BBox,
    object: &BBox,
    size: usize,
    padded: bool,
    extra: &[BBox],
) -> InteractionPattern {
    let mut boxes = vec![*human, *object];
    boxes.extend_from_slice(extra);
    let wx1 = boxes.iter().map(|b| b.x1).fold(f64::INFINITY, f64::min);
    let wy1 = boxes.iter().map(|b| b.y1).fold(f64::INFINITY, f64::min);
    let wx2 = boxes.iter().map(|b| b.x2).fold(f64::NEG_INFINITY, f64::max);
    let wy2 = boxes.iter().map(|b| b.y2).fold(f64::NEG_INFINITY, f64::max);
    let (w, h) = (snap(wx2 - wx1), snap(wy2 - wy1));

    // (content cells, leading padding cells) per axis
    let (mut nx, mut px, mut ny, mut py) = (size, 0usize, size, 0usize);
    if padded && w != h {
        let short = (w.min(h) / w.max(h) * size as f64).round().clamp(1.0, size as f64) as usize;
        let lead = (size - short).div_ceil(2);
        if w > h {
            ny = short;
            py = lead;
        } else {
            nx = short;
            px = lead;
        }
    }

    let mut cells = vec![0u8; boxes.len() * size * size];
    for (c, b) in boxes.iter().enumerate() {
        let (bx1, bx2) = (snap(b.x1 - wx1), snap(b.x2 - wx1));
        let (by1, by2) = (snap(b.y1 - wy1), snap(b.y2 - wy1));
        for row in 0..size {
            if row < py || row >= py + ny {
                continue;
            }
            let cy = ((row - py) as f64 + 0.5) * h / ny as f64;
            for col in 0..size {
                if col < px || col >= px + nx {
                    continue;
                }
                let cx = ((col - px) as f64 + 0.5) * w / nx as f64;
                if bx1 <= cx && cx < bx2 && by1 <= cy && cy < by2 {
                    cells[(c * size + row) * size + col] = 1;
                }
            }
        }
    }
    InteractionPattern::from_parts(
        size,
        boxes.len(),
        cells,
        BBox {
            x1: wx1,
            y1: wy1,
            x2: wx2,
            y2: wy2,
        },
    )
}

/// Central finite-difference derivative of `f` at `x` along every coordinate.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Two-sided p-value of a Student t statistic by composite Simpson
/// integration of the density over `[0, |t|]`.
pub fn t_pvalue_by_quadrature(t: f64, dof: f64) -> f64 {
    let ln_norm = ln_gamma((dof + 1.0) / 2.0)
        - ln_gamma(dof / 2.0)
        - 0.5 * (dof * std::f64::consts::PI).ln();
    let density = |x: f64| (ln_norm - (dof + 1.0) / 2.0 * (1.0 + x * x / dof).ln()).exp();
    let n = 20_000usize;
    let a = t.abs();
    let hstep = a / n as f64;
    let mut s = density(0.0) + density(a);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * density(i as f64 * hstep);
    }
    let half_mass = s * hstep / 3.0;
    (1.0 - 2.0 * half_mass).clamp(0.0, 1.0)
}

/// Lanczos approximation (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub use eval_oracle::*;

mod eval_oracle {
    use std::collections::BTreeMap;

    use crate::dataset::HoiInstance;
    use crate::eval::ScoredDetection;

    /// All-points AP for one class by enumerating every score threshold.
    ///
    /// For each distinct score `tau`, the detections with score `>= tau` are
    /// matched from scratch (greedy, highest score first, each ground-truth
    /// instance consumed once) and the resulting (recall, precision) point is
    /// recorded. AP is the area under the upper envelope of those points.
    /// Scores must be distinct.
    pub fn ap_by_threshold_enumeration(
        dets: &[ScoredDetection],
        gt: &[HoiInstance],
        thresh: f64,
    ) -> Option<f64> {
        if gt.is_empty() {
            return None;
        }
        let mut thresholds: Vec<f64> = dets.iter().map(|d| d.score).collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();

        let mut points: Vec<(usize, f64)> = Vec::new();
        for &tau in &thresholds {
            let mut kept: Vec<&ScoredDetection> = dets.iter().filter(|d| d.score >= tau).collect();
            kept.sort_by(|a, b| b.score.total_cmp(&a.score));
            let mut used = vec![false; gt.len()];
            let mut tp = 0usize;
            for d in &kept {
                let mut best: Option<(usize, f64)> = None;
                for (g, inst) in gt.iter().enumerate() {
                    if used[g] || inst.image_id != d.image_id {
                        continue;
                    }
                    let ov = d.human_box.iou(&inst.human_box).min(d.object_box.iou(&inst.object_box));
                    if ov > thresh && best.is_none_or(|(_, bo)| ov > bo) {
                        best = Some((g, ov));
                    }
                }
                if let Some((g, _)) = best {
                    used[g] = true;
                    tp += 1;
                }
            }
            points.push((tp, tp as f64 / kept.len() as f64));
        }

        let n = gt.len() as f64;
        // distinct recall levels, increasing
        let mut levels: BTreeMap<usize, ()> = BTreeMap::new();
        for &(tp, _) in &points {
            if tp > 0 {
                levels.insert(tp, ());
            }
        }
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for &tp in levels.keys() {
            let recall = tp as f64 / n;
            let p = points
                .iter()
                .filter(|&&(t, _)| t >= tp)
                .map(|&(_, p)| p)
                .fold(0.0, f64::max);
            ap += (recall - prev_recall) * p;
            prev_recall = recall;
        }
        Some(ap)
    }
}
