//! The seeded synthetic comparison: generate scenes, corrupt detections,
//! build proposals, train every variant and evaluate it in both settings.

use serde::{Deserialize, Serialize};

use crate::dataset::{rare_split, Dataset, RareSplit};
use crate::error::{Error, Result};
use crate::eval::{evaluate, scored_detections, ApMethod, EvalReport, EvalSetting, MATCH_IOU};
use crate::formats::ScoreRow;
use crate::model::{HoRcnn, StreamConfig};
use crate::proposals::{generate_proposals, ProposalSet, DEFAULT_TOP_HUMANS, DEFAULT_TOP_OBJECTS};
use crate::score::{random_scores, score_proposals};
use crate::synth::{corrupt_detections, generate, NoiseModel, SynthConfig, SynthOutput};
use crate::train::{train, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum VariantKind {
    Random { seed: u64 },
    Model { preset: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    #[serde(flatten)]
    pub kind: VariantKind,
    /// Replaces the shared training schedule for this variant.
    #[serde(default)]
    pub train: Option<TrainConfig>,
}

impl Variant {
    pub fn model(preset: &str) -> Self {
        Variant {
            name: preset.to_string(),
            kind: VariantKind::Model {
                preset: preset.to_string(),
            },
            train: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub synth: SynthConfig,
    pub train_noise: NoiseModel,
    pub test_noise: NoiseModel,
    pub top_humans: usize,
    pub top_objects: usize,
    pub patch_size: usize,
    pub ip_size: usize,
    pub model_seed: u64,
    pub train: TrainConfig,
    pub rare_threshold: usize,
    pub variants: Vec<Variant>,
}

impl Default for BenchmarkConfig {
    /// Sized to train five models in a few minutes on one core.
    fn default() -> Self {
        let train = TrainConfig {
            lr: 0.01,
            phase1_iterations: 400,
            phase2_iterations: 200,
            seed: 3,
            ..TrainConfig::default()
        };
        let mut linear = Variant::model("score-linear");
        // 24 parameters: cheap, but slow to converge at the shared rate
        linear.train = Some(TrainConfig {
            phase1_iterations: 4000,
            phase2_iterations: 2000,
            ..train.clone()
        });
        BenchmarkConfig {
            synth: SynthConfig::default(),
            train_noise: NoiseModel::benchmark(11),
            test_noise: NoiseModel::benchmark(12),
            top_humans: DEFAULT_TOP_HUMANS,
            top_objects: DEFAULT_TOP_OBJECTS,
            patch_size: 16,
            ip_size: 16,
            model_seed: 1,
            train,
            rare_threshold: 10,
            variants: vec![
                Variant {
                    name: "random".into(),
                    kind: VariantKind::Random { seed: 5 },
                    train: None,
                },
                Variant::model("union"),
                linear,
                Variant::model("ho"),
                Variant::model("ho-ip1-conv"),
                Variant::model("ho-ip1-conv-s"),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub name: String,
    pub default: EvalReport,
    pub known_object: EvalReport,
    /// Mean loss over the first and last 50 iterations.
    pub loss_ends: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rare: RareSplit,
    /// Classes whose label depends only on the human-object layout.
    pub spatial_classes: Vec<usize>,
    pub results: Vec<VariantResult>,
}

impl BenchmarkReport {
    pub fn get(&self, name: &str) -> Option<&VariantResult> {
        self.results.iter().find(|r| r.name == name)
    }

    /// Mean Default-setting AP over the spatial classes that have test instances.
    pub fn spatial_map(&self, name: &str) -> Option<f64> {
        let r = self.get(name)?;
        let aps: Vec<f64> = self
            .spatial_classes
            .iter()
            .filter_map(|&k| r.default.per_class[k])
            .collect();
        (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
    }
}

/// Everything the variants share: data, corrupted detections and proposals.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub data: SynthOutput,
    pub train_proposals: ProposalSet,
    pub test_proposals: ProposalSet,
    pub rare: RareSplit,
}

pub fn prepare(cfg: &BenchmarkConfig) -> Result<Prepared> {
    let data = generate(&cfg.synth)?;
    let train_dets = corrupt_detections(&data.train_scene, &data.train, &cfg.train_noise)?;
    let test_dets = corrupt_detections(&data.test_scene, &data.test, &cfg.test_noise)?;
    let tax = &data.train.taxonomy;
    let train_proposals = generate_proposals(&train_dets, cfg.top_humans, cfg.top_objects, tax);
    let test_proposals = generate_proposals(&test_dets, cfg.top_humans, cfg.top_objects, tax);
    let rare = rare_split(&data.train, cfg.rare_threshold);
    Ok(Prepared {
        data,
        train_proposals,
        test_proposals,
        rare,
    })
}

fn eval_both(rows: &[ScoreRow], test: &Dataset, rare: &RareSplit) -> Result<(EvalReport, EvalReport)> {
    let scored = scored_detections(rows);
    let run = |setting| evaluate(&scored, test, setting, rare, ApMethod::AllPoints, MATCH_IOU);
    Ok((run(EvalSetting::Default)?, run(EvalSetting::KnownObject)?))
}

/// Test-set score rows and, for trained variants, the mean loss at both ends of training.
pub type VariantRun = (Vec<ScoreRow>, Option<(f64, f64)>);

/// Train (if needed) and score one variant on the test proposals.
pub fn run_variant(cfg: &BenchmarkConfig, prep: &Prepared, v: &Variant) -> Result<VariantRun> {
    match &v.kind {
        VariantKind::Random { seed } => Ok((
            random_scores(&prep.test_proposals, &prep.data.test.taxonomy, *seed),
            None,
        )),
        VariantKind::Model { preset } => {
            let sc = StreamConfig::preset(preset)?.with_sizes(cfg.patch_size, cfg.ip_size);
            let mut model = HoRcnn::<f32>::new(sc, prep.data.train.taxonomy.len(), cfg.model_seed)?;
            let tc = v.train.as_ref().unwrap_or(&cfg.train);
            let report = train(&mut model, &prep.data.train, &prep.train_proposals, tc)?;
            let test = prep.data.test.with_images_in_memory();
            let rows = score_proposals(&model, &test, &prep.test_proposals, None)?;
            Ok((rows, report.smoothed_ends(50)))
        }
    }
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    run_benchmark_with(cfg, |_| {})
}

/// As [`run_benchmark`], calling `done` after each variant.
pub fn run_benchmark_with(cfg: &BenchmarkConfig, mut done: impl FnMut(&VariantResult)) -> Result<BenchmarkReport> {
    if cfg.variants.is_empty() {
        return Err(Error::Config("benchmark has no variants".into()));
    }
    let prep = prepare(cfg)?;
    let mut results = Vec::new();
    for v in &cfg.variants {
        let (rows, loss_ends) = run_variant(cfg, &prep, v)?;
        let (default, known_object) = eval_both(&rows, &prep.data.test, &prep.rare)?;
        let r = VariantResult {
            name: v.name.clone(),
            default,
            known_object,
            loss_ends,
        };
        done(&r);
        results.push(r);
    }
    Ok(BenchmarkReport {
        rare: prep.rare,
        spatial_classes: cfg.synth.spatial_classes(),
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        let cfg = BenchmarkConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: BenchmarkConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn tiny_run_reports_every_variant() {
        let mut cfg = BenchmarkConfig::default();
        cfg.synth.n_train = 6;
        cfg.synth.n_test = 4;
        cfg.train.phase1_iterations = 2;
        cfg.train.phase2_iterations = 1;
        cfg.patch_size = 8;
        cfg.ip_size = 8;
        for v in &mut cfg.variants {
            v.train = None;
        }
        cfg.variants.truncate(3);
        let report = run_benchmark(&cfg).unwrap();
        let names: Vec<&str> = report.results.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["random", "union", "score-linear"]);
        assert_eq!(report.spatial_classes, vec![0, 1, 2, 3, 4, 5]);
    }
}
