//! Human-object proposals from per-category detections, and their recall.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bbox::pair_overlap;
use crate::dataset::{Dataset, Detection, RareSplit, Taxonomy, PERSON};

pub const DEFAULT_TOP_HUMANS: usize = 10;
pub const DEFAULT_TOP_OBJECTS: usize = 10;

/// Ground truth counts as covered by a proposal at `min(IoU_h, IoU_o) >= 0.5`.
pub const COVERAGE_IOU: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub image_id: String,
    pub human: Detection,
    pub object: Detection,
    pub object_category: String,
}

/// Proposals grouped per `(image_id, object_category)`, each list ordered by
/// (human rank, object rank).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProposalSet {
    groups: BTreeMap<(String, String), Vec<Proposal>>,
}

impl ProposalSet {
    pub fn from_proposals(props: impl IntoIterator<Item = Proposal>) -> Self {
        let mut groups: BTreeMap<(String, String), Vec<Proposal>> = BTreeMap::new();
        for p in props {
            groups
                .entry((p.image_id.clone(), p.object_category.clone()))
                .or_default()
                .push(p);
        }
        ProposalSet { groups }
    }

    pub fn group(&self, image_id: &str, category: &str) -> &[Proposal] {
        self.groups
            .get(&(image_id.to_string(), category.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn groups(&self) -> impl Iterator<Item = (&(String, String), &Vec<Proposal>)> {
        self.groups.iter()
    }

    /// All proposals of one image, grouped by category in name order.
    pub fn for_image<'a>(&'a self, image_id: &str) -> impl Iterator<Item = &'a Proposal> + 'a {
        let id = image_id.to_string();
        self.groups
            .range((id.clone(), String::new())..)
            .take_while(move |((img, _), _)| *img == id)
            .flat_map(|(_, v)| v.iter())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Proposal> {
        self.groups.values().flat_map(|v| v.iter())
    }

    pub fn len(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<Proposal> {
        self.iter().cloned().collect()
    }
}

fn rank_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.bbox.total_cmp(&b.bbox))
}

/// Pair the `top_humans` best person detections with the `top_objects` best
/// detections of every object category in each image.
pub fn generate_proposals(
    detections: &[Detection],
    top_humans: usize,
    top_objects: usize,
    taxonomy: &Taxonomy,
) -> ProposalSet {
    let mut per_image: BTreeMap<&str, Vec<&Detection>> = BTreeMap::new();
    for d in detections {
        per_image.entry(d.image_id.as_str()).or_default().push(d);
    }
    let images: Vec<(&str, Vec<&Detection>)> = per_image.into_iter().collect();

    let groups = crate::par::map(&images, |(image_id, dets)| {
        let ranked = |cat: &str, top: usize| {
            let mut v: Vec<(usize, &Detection)> = dets
                .iter()
                .copied()
                .filter(|d| d.category == cat)
                .enumerate()
                .collect();
            v.sort_by(|a, b| rank_order(a.1, b.1).then(a.0.cmp(&b.0)));
            v.truncate(top);
            v
        };
        let humans = ranked(PERSON, top_humans);
        let mut out = Vec::new();
        for cat in taxonomy.object_categories() {
            let objects = ranked(cat, top_objects);
            let mut list = Vec::with_capacity(humans.len() * objects.len());
            for (hi, h) in &humans {
                for (oi, o) in &objects {
                    if cat == PERSON && hi == oi {
                        continue;
                    }
                    list.push(Proposal {
                        image_id: image_id.to_string(),
                        human: (*h).clone(),
                        object: (*o).clone(),
                        object_category: cat.clone(),
                    });
                }
            }
            if !list.is_empty() {
                out.push(((image_id.to_string(), cat.clone()), list));
            }
        }
        out
    });
    ProposalSet {
        groups: groups.into_iter().flatten().collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub iou_threshold: f64,
    /// `None` for classes without ground truth.
    pub per_class: Vec<Option<f64>>,
    pub full: Option<f64>,
    pub rare: Option<f64>,
    pub non_rare: Option<f64>,
}

pub(crate) fn mean_over<'a>(
    values: &[Option<f64>],
    classes: impl IntoIterator<Item = &'a usize>,
) -> Option<f64> {
    let v: Vec<f64> = classes
        .into_iter()
        .filter_map(|&k| values.get(k).copied().flatten())
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Fraction of ground-truth instances per class covered by some proposal of
/// the class's object category in the same image.
pub fn proposal_recall(
    props: &ProposalSet,
    ds: &Dataset,
    split: &RareSplit,
    iou_threshold: f64,
) -> RecallReport {
    let tax = &ds.taxonomy;
    let k = tax.len();
    let per_image = crate::par::map(&ds.annotations, |ann| {
        let mut covered = vec![0usize; k];
        let mut total = vec![0usize; k];
        for inst in &ann.instances {
            total[inst.hoi_id] += 1;
            let hit = props
                .group(&ann.image_id, tax.object_of(inst.hoi_id))
                .iter()
                .any(|p| {
                    pair_overlap(&p.human.bbox, &p.object.bbox, &inst.human_box, &inst.object_box)
                        >= iou_threshold
                });
            covered[inst.hoi_id] += hit as usize;
        }
        (covered, total)
    });
    let mut covered = vec![0usize; k];
    let mut total = vec![0usize; k];
    for (c, t) in per_image {
        for i in 0..k {
            covered[i] += c[i];
            total[i] += t[i];
        }
    }
    let per_class: Vec<Option<f64>> = (0..k)
        .map(|i| (total[i] > 0).then(|| covered[i] as f64 / total[i] as f64))
        .collect();
    let all: Vec<usize> = (0..k).collect();
    RecallReport {
        iou_threshold,
        full: mean_over(&per_class, &all),
        rare: mean_over(&per_class, &split.rare),
        non_rare: mean_over(&per_class, &split.non_rare),
        per_class,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::BBox;
    use crate::dataset::{HoiInstance, ImageAnnotation, ImageStore, Split};
    use std::sync::Arc;

    fn det(img: &str, cat: &str, x: f64, score: f64) -> Detection {
        Detection {
            image_id: img.into(),
            category: cat.into(),
            bbox: BBox::new(x, 0.0, x + 5.0, 10.0).unwrap(),
            score,
        }
    }

    fn tax() -> Taxonomy {
        Taxonomy::from_pairs([("ride", "bicycle"), ("hug", "person")]).unwrap()
    }

    #[test]
    fn full_cross_product() {
        let mut dets = Vec::new();
        for i in 0..10 {
            dets.push(det("a", "person", i as f64, 0.9 - i as f64 * 0.01));
            dets.push(det("a", "bicycle", 50.0 + i as f64, 0.5));
        }
        let ps = generate_proposals(&dets, 10, 10, &tax());
        assert_eq!(ps.group("a", "bicycle").len(), 100);
        // person-person pairs exclude the diagonal
        assert_eq!(ps.group("a", "person").len(), 90);
    }

    #[test]
    fn self_pairs_excluded_for_person_objects() {
        let dets: Vec<_> = (0..3).map(|i| det("a", "person", i as f64 * 10.0, 0.5)).collect();
        let ps = generate_proposals(&dets, 10, 10, &tax());
        let g = ps.group("a", "person");
        assert_eq!(g.len(), 6);
        assert!(g.iter().all(|p| p.human != p.object));
    }

    #[test]
    fn no_humans_no_proposals() {
        let dets = vec![det("a", "bicycle", 0.0, 0.9)];
        assert!(generate_proposals(&dets, 10, 10, &tax()).is_empty());
    }

    #[test]
    fn top_counts_and_tie_order() {
        let dets = vec![
            det("a", "person", 30.0, 0.5),
            det("a", "person", 10.0, 0.5),
            det("a", "person", 20.0, 0.9),
            det("a", "bicycle", 0.0, 0.3),
            det("a", "bicycle", 5.0, 0.7),
        ];
        let ps = generate_proposals(&dets, 2, 1, &tax());
        let g = ps.group("a", "bicycle");
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].human.bbox.x1, 20.0);
        assert_eq!(g[1].human.bbox.x1, 10.0);
        assert!(g.iter().all(|p| p.object.bbox.x1 == 5.0));
    }

    #[test]
    fn recall_exact_and_empty() {
        let h = BBox::new(0.0, 0.0, 10.0, 20.0).unwrap();
        let o = BBox::new(10.0, 10.0, 20.0, 20.0).unwrap();
        let mut ann = ImageAnnotation::new("a", 32, 32);
        ann.positives.insert(0);
        ann.instances.push(HoiInstance {
            image_id: "a".into(),
            hoi_id: 0,
            human_box: h,
            object_box: o,
        });
        let ds = Dataset::new(Arc::new(tax()), Split::Test, vec![ann], ImageStore::empty())
            .unwrap();
        let split = crate::dataset::rare_split(&ds, 10);
        let dets = vec![
            Detection { image_id: "a".into(), category: "person".into(), bbox: h, score: 1.0 },
            Detection { image_id: "a".into(), category: "bicycle".into(), bbox: o, score: 1.0 },
        ];
        let r = proposal_recall(&generate_proposals(&dets, 10, 10, &ds.taxonomy), &ds, &split, 0.5);
        assert_eq!(r.per_class, vec![Some(1.0), None]);
        assert_eq!(r.full, Some(1.0));
        let r = proposal_recall(&ProposalSet::default(), &ds, &split, 0.5);
        assert_eq!(r.full, Some(0.0));
    }
}
