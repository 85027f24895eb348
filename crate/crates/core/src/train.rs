//! Image-centric minibatch sampling and SGD training of [`HoRcnn`] models.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::pair_overlap;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::HoRcnn;
use crate::nn::{multilabel_loss, Gradients, Scalar, Sgd};
use crate::proposals::{Proposal, ProposalSet, COVERAGE_IOU};

/// Lower edge of the type-I negative overlap band `[0.1, 0.5)`.
pub const TYPE1_MIN_IOU: f64 = 0.1;

/// Samples processed together on one worker; gradients of chunks are
/// summed in chunk order so results do not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    /// Multiplier applied to `lr` after `phase1_iterations`.
    pub lr_decay: f64,
    pub phase1_iterations: usize,
    pub phase2_iterations: usize,
    pub momentum: f64,
    pub images_per_batch: usize,
    pub proposals_per_image: usize,
    pub positives: usize,
    pub type1_negatives: usize,
    pub type2_negatives: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            lr_decay: 0.1,
            phase1_iterations: 2000,
            phase2_iterations: 1000,
            momentum: 0.9,
            images_per_batch: 8,
            proposals_per_image: 8,
            positives: 1,
            type1_negatives: 3,
            type2_negatives: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn iterations(&self) -> usize {
        self.phase1_iterations + self.phase2_iterations
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        if iteration < self.phase1_iterations {
            self.lr
        } else {
            self.lr * self.lr_decay
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.positives + self.type1_negatives + self.type2_negatives != self.proposals_per_image {
            return Err(Error::Config(format!(
                "per-image counts {} + {} + {} must sum to proposals_per_image {}",
                self.positives, self.type1_negatives, self.type2_negatives, self.proposals_per_image
            )));
        }
        if self.images_per_batch == 0 || self.proposals_per_image == 0 {
            return Err(Error::Config("empty minibatch".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) || self.lr_decay.is_nan() || self.lr_decay < 0.0 {
            return Err(Error::Config("learning rate must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleSource {
    Positive,
    TypeI,
    TypeII,
    /// Same-category proposal overlapping no instance by 0.1 or more.
    LowOverlap,
    /// Drawn again with replacement to fill the image's quota.
    Resampled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample<'a> {
    pub proposal: &'a Proposal,
    pub labels: Vec<bool>,
    pub source: SampleSource,
}

#[derive(Clone, Debug, Default)]
struct Buckets {
    /// (proposal index, labels)
    positives: Vec<(usize, Vec<bool>)>,
    type1: Vec<usize>,
    type2: Vec<usize>,
    low: Vec<usize>,
}

#[derive(Clone, Debug)]
struct Candidates<'a> {
    proposals: Vec<&'a Proposal>,
    /// One bucket set per object category with ground truth in the image.
    per_category: Vec<Buckets>,
}

/// Precomputed per-image sampling pools.
#[derive(Clone, Debug)]
pub struct Sampler<'a> {
    images: Vec<Candidates<'a>>,
    num_classes: usize,
    pub skipped: Vec<String>,
}

/// Labels of `p` against the image's instances: class `k` is on iff some
/// instance of `k` overlaps it by at least `COVERAGE_IOU`.
fn labels_for(p: &Proposal, ds: &Dataset, ann: usize) -> (Vec<bool>, f64) {
    let a = &ds.annotations[ann];
    let mut labels = vec![false; ds.taxonomy.len()];
    let mut best: f64 = 0.0;
    for inst in &a.instances {
        if ds.taxonomy.object_of(inst.hoi_id) != p.object_category {
            continue;
        }
        let ov = pair_overlap(&p.human.bbox, &p.object.bbox, &inst.human_box, &inst.object_box);
        best = best.max(ov);
        if ov >= COVERAGE_IOU {
            labels[inst.hoi_id] = true;
        }
    }
    (labels, best)
}

impl<'a> Sampler<'a> {
    pub fn new(ds: &Dataset, props: &'a ProposalSet) -> Self {
        let built = crate::par::map_range(ds.annotations.len(), |i| {
            let a = &ds.annotations[i];
            let proposals: Vec<&Proposal> = props.for_image(&a.image_id).collect();
            if a.instances.is_empty() || proposals.is_empty() {
                return Err(a.image_id.clone());
            }
            let cats: BTreeSet<&str> = a
                .instances
                .iter()
                .map(|inst| ds.taxonomy.object_of(inst.hoi_id))
                .collect();
            let scored: Vec<(Vec<bool>, f64)> =
                proposals.iter().map(|p| labels_for(p, ds, i)).collect();
            let per_category = cats
                .iter()
                .map(|&c| {
                    let mut b = Buckets::default();
                    for (j, p) in proposals.iter().enumerate() {
                        let (labels, best) = &scored[j];
                        let positive = labels.iter().any(|&l| l);
                        if p.object_category == c {
                            if positive {
                                b.positives.push((j, labels.clone()));
                            } else if *best >= TYPE1_MIN_IOU {
                                b.type1.push(j);
                            } else {
                                b.low.push(j);
                            }
                        } else if !positive {
                            b.type2.push(j);
                        }
                    }
                    b
                })
                .collect();
            Ok(Candidates {
                proposals,
                per_category,
            })
        });
        let mut images = Vec::new();
        let mut skipped = Vec::new();
        for r in built {
            match r {
                Ok(c) => images.push(c),
                Err(id) => skipped.push(id),
            }
        }
        if !skipped.is_empty() {
            log::warn!(
                "{} training images have no instances or no proposals and are skipped",
                skipped.len()
            );
        }
        Sampler {
            images,
            num_classes: ds.taxonomy.len(),
            skipped,
        }
    }

    pub fn eligible_images(&self) -> usize {
        self.images.len()
    }

    /// Draw `cfg.proposals_per_image` samples from one image.
    pub fn sample_image<R: Rng>(&self, image: usize, cfg: &TrainConfig, rng: &mut R) -> Vec<Sample<'a>> {
        let cand = &self.images[image];
        let b = &cand.per_category[rng.random_range(0..cand.per_category.len())];
        let zero = vec![false; self.num_classes];
        let mut out: Vec<Sample<'a>> = Vec::with_capacity(cfg.proposals_per_image);

        let take = |pool: &[usize], want: usize, rng: &mut R| -> Vec<usize> {
            let n = want.min(pool.len());
            sample(rng, pool.len(), n).into_iter().map(|i| pool[i]).collect()
        };

        let pos_idx: Vec<usize> = (0..b.positives.len()).collect();
        let picked = take(&pos_idx, cfg.positives, rng);
        let mut need = cfg.positives - picked.len();
        for i in picked {
            let (j, labels) = &b.positives[i];
            out.push(Sample {
                proposal: cand.proposals[*j],
                labels: labels.clone(),
                source: SampleSource::Positive,
            });
        }
        need += cfg.type1_negatives;
        let picked = take(&b.type1, need, rng);
        need -= picked.len();
        out.extend(picked.into_iter().map(|j| Sample {
            proposal: cand.proposals[j],
            labels: zero.clone(),
            source: SampleSource::TypeI,
        }));
        need += cfg.type2_negatives;
        let picked = take(&b.type2, need, rng);
        need -= picked.len();
        out.extend(picked.into_iter().map(|j| Sample {
            proposal: cand.proposals[j],
            labels: zero.clone(),
            source: SampleSource::TypeII,
        }));
        let picked = take(&b.low, need, rng);
        need -= picked.len();
        out.extend(picked.into_iter().map(|j| Sample {
            proposal: cand.proposals[j],
            labels: zero.clone(),
            source: SampleSource::LowOverlap,
        }));
        if need > 0 && !out.is_empty() {
            let n = out.len();
            for _ in 0..need {
                let s = out[rng.random_range(0..n)].clone();
                out.push(Sample {
                    source: SampleSource::Resampled,
                    ..s
                });
            }
        }
        out
    }

    /// `images_per_batch` distinct images (fewer if not enough are eligible).
    pub fn sample_batch<R: Rng>(&self, cfg: &TrainConfig, rng: &mut R) -> Vec<Sample<'a>> {
        let n = cfg.images_per_batch.min(self.images.len());
        let images = sample(rng, self.images.len(), n).into_vec();
        images
            .into_iter()
            .flat_map(|i| self.sample_image(i, cfg, rng))
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample loss of every iteration.
    pub losses: Vec<f64>,
    pub skipped_images: Vec<String>,
    /// Samples dropped because a clipped box had zero area.
    pub degenerate_samples: usize,
}

impl TrainReport {
    /// Mean of the first and last `window` losses.
    pub fn smoothed_ends(&self, window: usize) -> Option<(f64, f64)> {
        let w = window.min(self.losses.len());
        if w == 0 {
            return None;
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        Some((mean(&self.losses[..w]), mean(&self.losses[self.losses.len() - w..])))
    }
}

/// Gradient and loss sum over one chunk of samples.
fn chunk_gradient<T: Scalar>(
    model: &HoRcnn<T>,
    ds: &Dataset,
    chunk: &[Sample<'_>],
) -> Result<(Gradients<T>, f64, usize)> {
    let mut grads = model.zero_grads();
    let mut loss = 0.0;
    let mut used = 0;
    for s in chunk {
        let image = ds.images.get(&s.proposal.image_id)?;
        let Some(inputs) = model.prepare(&image, s.proposal) else {
            continue;
        };
        let trace = model.forward_traced(&inputs);
        let y: Vec<T> = s.labels.iter().map(|&l| if l { T::one() } else { T::zero() }).collect();
        let (l, ds_) = multilabel_loss(&trace.scores, &y);
        model.backward(&trace, &ds_, &mut grads);
        loss += l.f64();
        used += 1;
    }
    Ok((grads, loss, used))
}

/// SGD with momentum over sampled minibatches. The gradient of each step is
/// the mean over the batch's samples.
pub fn train<T: Scalar>(
    model: &mut HoRcnn<T>,
    ds: &Dataset,
    props: &ProposalSet,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_with_progress(model, ds, props, cfg, |_, _| {})
}

pub fn train_with_progress<T: Scalar>(
    model: &mut HoRcnn<T>,
    ds: &Dataset,
    props: &ProposalSet,
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    cfg.validate()?;
    if model.num_classes != ds.taxonomy.len() {
        return Err(Error::Config(format!(
            "model has {} classes, dataset {}",
            model.num_classes,
            ds.taxonomy.len()
        )));
    }
    let ds = ds.with_images_in_memory();
    let sampler = Sampler::new(&ds, props);
    if sampler.eligible_images() == 0 {
        return Err(Error::Precondition(
            "no training image has both instances and proposals".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Sgd::new(T::of(cfg.momentum));
    let mut report = TrainReport {
        skipped_images: sampler.skipped.clone(),
        ..Default::default()
    };
    for it in 0..cfg.iterations() {
        let batch = sampler.sample_batch(cfg, &mut rng);
        let chunks: Vec<&[Sample<'_>]> = batch.chunks(CHUNK).collect();
        let results = crate::par::map(&chunks, |c| chunk_gradient(model, &ds, c));
        let mut total: Option<Gradients<T>> = None;
        let mut loss = 0.0;
        let mut used = 0;
        for r in results {
            let (g, l, n) = r?;
            loss += l;
            used += n;
            match &mut total {
                None => total = Some(g),
                Some(t) => t.add_assign(&g),
            }
        }
        report.degenerate_samples += batch.len() - used;
        if used == 0 {
            report.losses.push(0.0);
            continue;
        }
        let mean_loss = loss / used as f64;
        if !mean_loss.is_finite() {
            return Err(Error::NonFinite { iteration: it });
        }
        let mut grads = total.expect("at least one chunk");
        grads.scale(T::of(1.0 / used as f64));
        opt.step(model.params_mut(), &grads, T::of(cfg.lr_at(it)));
        report.losses.push(mean_loss);
        progress(it, mean_loss);
    }
    Ok(report)
}
