//! Turning a trained model (or a random baseline) into scored proposal rows.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, RareSplit, Taxonomy};
use crate::error::{Error, Result};
use crate::eval::{evaluate, scored_detections, ApMethod, EvalReport, EvalSetting};
use crate::formats::ScoreRow;
use crate::model::{HoRcnn, StreamKind};
use crate::nn::{sigmoid, Scalar};
use crate::proposals::{Proposal, ProposalSet};

fn group_by_image(props: &ProposalSet) -> Vec<(&str, Vec<&Proposal>)> {
    let mut by_image: BTreeMap<&str, Vec<&Proposal>> = BTreeMap::new();
    for p in props.iter() {
        by_image.entry(p.image_id.as_str()).or_default().push(p);
    }
    by_image.into_iter().collect()
}

fn row(p: &Proposal, taxonomy: &Taxonomy, prob: impl Fn(usize) -> f64) -> ScoreRow {
    ScoreRow {
        image_id: p.image_id.clone(),
        object_category: p.object_category.clone(),
        human: p.human.bbox,
        object: p.object.bbox,
        scores: taxonomy
            .classes_for_object(&p.object_category)
            .iter()
            .map(|&k| (k, prob(k)))
            .collect(),
    }
}

/// Per-class probabilities for every proposal, only for the classes whose
/// object matches the proposal's category. With `stream` set, only that
/// stream's output is used.
pub fn score_proposals<T: Scalar>(
    model: &HoRcnn<T>,
    ds: &Dataset,
    props: &ProposalSet,
    stream: Option<StreamKind>,
) -> Result<Vec<ScoreRow>> {
    if let Some(s) = stream {
        if !model.has_stream(s) {
            return Err(Error::Config(format!("model has no {s} stream")));
        }
    }
    let index = ds.index();
    let groups = group_by_image(props);
    let rows = crate::par::map(&groups, |(image_id, props)| -> Result<Vec<ScoreRow>> {
        if !index.contains_key(image_id) {
            return Err(Error::UnknownImage(image_id.to_string()));
        }
        let image = ds.images.get(image_id)?;
        Ok(props
            .iter()
            .map(|p| {
                let s = model.score(&image, p);
                let raw: Vec<f64> = match stream {
                    _ if s.degenerate => vec![f64::NEG_INFINITY; model.num_classes],
                    None => s.total.iter().map(|v| v.f64()).collect(),
                    Some(kind) => {
                        let out = &s.per_stream.iter().find(|(k, _)| *k == kind).unwrap().1;
                        (0..model.num_classes)
                            .map(|k| out[if out.len() == 1 { 0 } else { k }].f64())
                            .collect()
                    }
                };
                row(p, &ds.taxonomy, |k| sigmoid(raw[k]))
            })
            .collect())
    });
    let mut out = Vec::with_capacity(props.len());
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// Stable per-image stream id, so a random baseline does not depend on
/// which other images are scored.
fn image_stream(image_id: &str) -> u64 {
    // FNV-1a
    image_id
        .bytes()
        .fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// Uniform `[0, 1)` scores, seeded per image.
pub fn random_scores(props: &ProposalSet, taxonomy: &Taxonomy, seed: u64) -> Vec<ScoreRow> {
    let mut out = Vec::with_capacity(props.len());
    for (image_id, props) in group_by_image(props) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(image_stream(image_id));
        for p in props {
            let n = taxonomy.classes_for_object(&p.object_category).len();
            let draws: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let classes = taxonomy.classes_for_object(&p.object_category);
            out.push(row(p, taxonomy, |k| {
                draws[classes.iter().position(|&c| c == k).unwrap()]
            }));
        }
    }
    out
}

/// Evaluate each stream of `model` on its own.
pub fn per_stream_reports<T: Scalar>(
    model: &HoRcnn<T>,
    ds: &Dataset,
    props: &ProposalSet,
    setting: EvalSetting,
    split: &RareSplit,
    method: ApMethod,
    iou_threshold: f64,
) -> Result<Vec<(StreamKind, EvalReport)>> {
    let kinds: Vec<StreamKind> = model.streams().map(|(k, _)| k).collect();
    kinds
        .into_iter()
        .map(|kind| {
            let rows = score_proposals(model, ds, props, Some(kind))?;
            let report = evaluate(&scored_detections(&rows), ds, setting, split, method, iou_threshold)?;
            Ok((kind, report))
        })
        .collect()
}
