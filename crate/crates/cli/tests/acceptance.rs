//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Runs as a plain binary (`harness = false`) so the checks execute in order
//! and their timings are not distorted by each other.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use hoidet::benchmark::{run_benchmark, BenchmarkConfig};
use hoidet::dataset::{
    rare_split, Dataset, HoiInstance, ImageAnnotation, ImageStore, Split, Taxonomy,
};
use hoidet::eval::{
    average_precision, evaluate, match_detections, paired_ttest, ApMethod, EvalSetting,
    ScoredDetection, MATCH_IOU,
};
use hoidet::interaction::{encode_ip, DEFAULT_IP_SIZE};
use hoidet::model::{pairwise_param_parity, PARITY_TOLERANCE};
use hoidet::nn::{multilabel_loss, LayerSpec, Network};
use hoidet::oracle::{
    ap_by_threshold_enumeration, brute_force_ip, central_difference, relative_error,
    t_pvalue_by_quadrature,
};
use hoidet::proposals::{generate_proposals, proposal_recall, COVERAGE_IOU};
use hoidet::synth::{corrupt_detections, generate, perfect_detections, NoiseModel};
use hoidet::BBox;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    // sides of at least 8 px in windows of at most 450 px: every box covers a
    // cell centre at size 64
    let x1 = rng.random_range(0.0..300.0);
    let y1 = rng.random_range(0.0..300.0);
    let w = rng.random_range(8.0..150.0);
    let h = rng.random_range(8.0..150.0);
    BBox::new(x1, y1, x1 + w, y1 + h).unwrap()
}

fn union_extent(p: &hoidet::interaction::InteractionPattern) -> (usize, usize, usize, usize) {
    let s = p.size();
    let (mut r0, mut r1, mut c0, mut c1) = (s, 0, s, 0);
    for c in 0..2 {
        if let Some((rows, cols)) = p.extent(c) {
            r0 = r0.min(rows.start);
            r1 = r1.max(rows.end);
            c0 = c0.min(cols.start);
            c1 = c1.max(cols.end);
        }
    }
    (r0, r1, c0, c1)
}

fn ip_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let size = DEFAULT_IP_SIZE;
    let mut worst_aspect = 0.0f64;
    for i in 0..1000 {
        let h = random_box(&mut rng);
        let o = random_box(&mut rng);
        let (dx, dy) = (rng.random_range(-1e4..1e4), rng.random_range(-1e4..1e4));
        for padded in [false, true] {
            let p = encode_ip(&h, &o, size, padded, &[]);
            let t = encode_ip(
                &h.translate(dx, dy),
                &o.translate(dx, dy),
                size,
                padded,
                &[],
            );
            ensure(p.cells() == t.cells(), || {
                format!("pair {i}: translation changed the pattern")
            })?;
            let s = encode_ip(&o, &h, size, padded, &[]);
            ensure(
                p.channel(0) == s.channel(1) && p.channel(1) == s.channel(0),
                || format!("pair {i}: swapping boxes did not swap channels"),
            )?;
            ensure(p == brute_force_ip(&h, &o, size, padded, &[]), || {
                format!("pair {i}: differs from brute force (padded={padded})")
            })?;

            let w = h.x2.max(o.x2) - h.x1.min(o.x1);
            let ht = h.y2.max(o.y2) - h.y1.min(o.y1);
            let (r0, r1, c0, c1) = union_extent(&p);
            if padded {
                let long = w.max(ht);
                let want_cols = size as f64 * w / long;
                let want_rows = size as f64 * ht / long;
                let err = ((c1 - c0) as f64 - want_cols)
                    .abs()
                    .max(((r1 - r0) as f64 - want_rows).abs());
                worst_aspect = worst_aspect.max(err);
                ensure(err <= 1.0, || {
                    format!(
                        "pair {i}: content {}x{} for a {w:.1}x{ht:.1} window",
                        c1 - c0,
                        r1 - r0
                    )
                })?;
                // padding split evenly around the content
                let (lead, trail) = if w >= ht {
                    (r0, size - r1)
                } else {
                    (c0, size - c1)
                };
                ensure(lead.abs_diff(trail) <= 1, || {
                    format!("pair {i}: padding {lead}/{trail}")
                })?;
            } else {
                ensure((r0, r1, c0, c1) == (0, size, 0, size), || {
                    format!("pair {i}: stretched pattern does not fill the grid")
                })?;
            }
        }
    }
    Ok(format!(
        "1000 pairs at size {size}, worst IP1 aspect error {worst_aspect:.3} cells"
    ))
}

fn micro_box(rng: &mut ChaCha8Rng) -> BBox {
    let x1 = rng.random_range(0.0..70.0);
    let y1 = rng.random_range(0.0..70.0);
    BBox::new(
        x1,
        y1,
        x1 + rng.random_range(5.0..30.0),
        y1 + rng.random_range(5.0..30.0),
    )
    .unwrap()
}

fn jitter(rng: &mut ChaCha8Rng, b: &BBox) -> BBox {
    let s = 0.3 * b.width().min(b.height());
    b.translate(rng.random_range(-s..s), rng.random_range(-s..s))
}

fn micro_instance(rng: &mut ChaCha8Rng) -> (Dataset, Vec<ScoredDetection>) {
    let tax = Taxonomy::from_pairs([("ride", "bicycle"), ("hold", "cup")]).unwrap();
    let n_img = rng.random_range(1..=5);
    let mut anns = Vec::new();
    for i in 0..n_img {
        let id = format!("img{i}");
        let mut a = ImageAnnotation::new(id.clone(), 100, 100);
        for k in 0..2 {
            for _ in 0..rng.random_range(0..=3) {
                a.positives.insert(k);
                a.instances.push(HoiInstance {
                    image_id: id.clone(),
                    hoi_id: k,
                    human_box: micro_box(rng),
                    object_box: micro_box(rng),
                });
            }
        }
        anns.push(a);
    }
    let mut dets = Vec::new();
    for k in 0..2 {
        let gt: Vec<HoiInstance> = anns
            .iter()
            .flat_map(|a| a.instances.iter())
            .filter(|i| i.hoi_id == k)
            .cloned()
            .collect();
        for _ in 0..rng.random_range(0..=10) {
            let d = if !gt.is_empty() && rng.random_bool(0.7) {
                let g = &gt[rng.random_range(0..gt.len())];
                ScoredDetection {
                    image_id: g.image_id.clone(),
                    hoi_id: k,
                    human_box: jitter(rng, &g.human_box),
                    object_box: jitter(rng, &g.object_box),
                    score: 0.0,
                }
            } else {
                ScoredDetection {
                    image_id: format!("img{}", rng.random_range(0..n_img)),
                    hoi_id: k,
                    human_box: micro_box(rng),
                    object_box: micro_box(rng),
                    score: 0.0,
                }
            };
            dets.push(d);
        }
    }
    let mut ranks: Vec<usize> = (0..dets.len()).collect();
    ranks.shuffle(rng);
    let n = dets.len();
    for (d, r) in dets.iter_mut().zip(ranks) {
        d.score = (r + 1) as f64 / (n + 1) as f64;
    }
    let ds = Dataset::new(Arc::new(tax), Split::Test, anns, ImageStore::empty()).unwrap();
    (ds, dets)
}

fn eval_oracle() -> Outcome {
    let ap = average_precision(&[true, false, true], 2, ApMethod::AllPoints).unwrap();
    ensure((ap - 5.0 / 6.0).abs() < 1e-9, || {
        format!("worked example gave {ap}")
    })?;

    let h = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
    let o = BBox::new(20.0, 0.0, 30.0, 10.0).unwrap();
    let (h6, o4) = (h.translate(2.5, 0.0), o.translate(30.0 / 7.0, 0.0));
    ensure(
        (h.iou(&h6) - 0.6).abs() < 1e-12 && (o.iou(&o4) - 0.4).abs() < 1e-12,
        || "could not build the (0.6, 0.4) pair".into(),
    )?;
    let gt = [HoiInstance {
        image_id: "a".into(),
        hoi_id: 0,
        human_box: h,
        object_box: o,
    }];
    let det = |hb, ob| ScoredDetection {
        image_id: "a".into(),
        hoi_id: 0,
        human_box: hb,
        object_box: ob,
        score: 1.0,
    };
    ensure(
        match_detections(&[det(h6, o4)], &gt, MATCH_IOU) == [false],
        || "(0.6, 0.4) pair accepted".into(),
    )?;
    ensure(
        match_detections(&[det(o4, h6)], &gt, MATCH_IOU) == [false],
        || "(0.4, 0.6) pair accepted".into(),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut classes, mut partial) = (0, 0);
    for trial in 0..200 {
        let (ds, dets) = micro_instance(&mut rng);
        let split = rare_split(&ds, 10);
        let report = evaluate(
            &dets,
            &ds,
            EvalSetting::Default,
            &split,
            ApMethod::AllPoints,
            MATCH_IOU,
        )
        .map_err(|e| format!("trial {trial}: {e}"))?;
        let mut oracle = Vec::new();
        for k in 0..2 {
            let d: Vec<ScoredDetection> = dets.iter().filter(|d| d.hoi_id == k).cloned().collect();
            let g: Vec<HoiInstance> = ds.instances().filter(|i| i.hoi_id == k).cloned().collect();
            oracle.push(ap_by_threshold_enumeration(&d, &g, MATCH_IOU));
        }
        ensure(report.per_class == oracle, || {
            format!(
                "trial {trial}: evaluate {:?} vs oracle {:?}",
                report.per_class, oracle
            )
        })?;
        let present: Vec<f64> = oracle.iter().flatten().copied().collect();
        classes += present.len();
        partial += present.iter().filter(|&&v| v > 0.0 && v < 1.0).count();
        let mean =
            (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        ensure(report.full == mean, || {
            format!("trial {trial}: mAP {:?} vs {mean:?}", report.full)
        })?;
    }
    Ok(format!(
        "200 micro-instances ({classes} scored classes, {partial} with 0 < AP < 1), worked example {ap:.10}"
    ))
}

fn check_network(
    specs: &[LayerSpec],
    input: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<f64, String> {
    let net = Network::<f64>::new(input, specs, rng).map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..net.input_len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let r: Vec<f64> = (0..net.output_len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let trace = net.forward_traced(&x);
    let mut g = net.zero_grads();
    let dx = net.backward(&trace, &r, &mut g.tensors, true).unwrap();
    let loss = |n: &Network<f64>, x: &[f64]| -> f64 {
        n.forward(x).iter().zip(&r).map(|(a, b)| a * b).sum()
    };

    let num_dx = central_difference(|x| loss(&net, x), &x, 1e-5);
    let p0 = net.flat_params();
    let num_dp = central_difference(
        |p| {
            let mut n = net.clone();
            n.set_flat_params(p).unwrap();
            loss(&n, &x)
        },
        &p0,
        1e-5,
    );
    let flat = g.flat();
    let analytic = dx.iter().chain(flat.iter()).copied();
    let numeric = num_dx.iter().chain(num_dp.iter()).copied();
    Ok(analytic
        .zip(numeric)
        .map(|(a, b)| relative_error(a, b, 1e-4))
        .fold(0.0, f64::max))
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    for _ in 0..100 {
        let c = rng.random_range(1..=3);
        let h = rng.random_range(1..=6);
        let w = rng.random_range(1..=6);
        let conv = LayerSpec::Conv {
            kernel: [1, 3, 5][rng.random_range(0..3)],
            filters: rng.random_range(1..=4),
        };
        let pooled = [c, 2 * rng.random_range(1..=4), 2 * rng.random_range(1..=4)];
        let n = rng.random_range(1..=12);
        let cases: [(&str, Vec<LayerSpec>, Vec<usize>); 5] = [
            ("conv", vec![conv], vec![c, h, w]),
            ("max-pool", vec![LayerSpec::MaxPool], pooled.to_vec()),
            (
                "dense",
                vec![LayerSpec::Dense {
                    out: rng.random_range(1..=8),
                }],
                vec![n],
            ),
            ("relu", vec![LayerSpec::Relu], vec![n]),
            ("flatten", vec![LayerSpec::Flatten], vec![c, h, w]),
        ];
        for (name, specs, input) in cases {
            let e = check_network(&specs, &input, &mut rng)?;
            let slot = worst.entry(name).or_insert(0.0);
            *slot = slot.max(e);
        }

        let k = rng.random_range(1..=12);
        let s: Vec<f64> = (0..k).map(|_| rng.random_range(-6.0..6.0)).collect();
        let y: Vec<f64> = (0..k)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
            .collect();
        let (_, g) = multilabel_loss(&s, &y);
        let num = central_difference(|s| multilabel_loss(s, &y).0, &s, 1e-5);
        let e = g
            .iter()
            .zip(&num)
            .map(|(a, b)| relative_error(*a, *b, 1e-4))
            .fold(0.0, f64::max);
        let slot = worst.entry("loss").or_insert(0.0);
        *slot = slot.max(e);
    }
    let detail = worst
        .iter()
        .map(|(k, v)| format!("{k} {v:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(worst.values().all(|&e| e < 1e-4), || {
        format!("worst relative error: {detail}")
    })?;
    Ok(format!(
        "100 configs per kind, worst relative error: {detail}"
    ))
}

fn parameter_parity() -> Outcome {
    let mut parts = Vec::new();
    for ip in [DEFAULT_IP_SIZE, 16] {
        for k in [1, 8, 64] {
            let p = pairwise_param_parity(k, ip).map_err(|e| e.to_string())?;
            ensure(p.relative_difference <= PARITY_TOLERANCE, || {
                format!(
                    "K={k} size {ip}: conv {} vs fc {} ({:.1}%)",
                    p.conv,
                    p.fc,
                    100.0 * p.relative_difference
                )
            })?;
            parts.push(format!("K={k}/{ip}: {:.1}%", 100.0 * p.relative_difference));
        }
    }
    Ok(parts.join(", "))
}

fn end_to_end() -> Outcome {
    let report = run_benchmark(&BenchmarkConfig::default()).map_err(|e| e.to_string())?;
    let map = |name: &str| -> Result<f64, String> {
        report
            .get(name)
            .and_then(|v| v.default.full)
            .ok_or_else(|| format!("no Default mAP for {name}"))
    };
    let order = ["random", "union", "score-linear", "ho", "ho-ip1-conv"];
    let values: Vec<f64> = order.iter().map(|n| map(n)).collect::<Result<_, _>>()?;
    let listing = order
        .iter()
        .zip(&values)
        .map(|(n, v)| format!("{n} {:.2}", 100.0 * v))
        .collect::<Vec<_>>()
        .join(" < ");
    ensure(values.windows(2).all(|w| w[0] < w[1]), || {
        format!("ordering broken: {listing}")
    })?;
    let with_s = map("ho-ip1-conv-s")?;
    ensure(with_s >= values[4], || {
        format!(
            "+S {:.2} below ho-ip1-conv {:.2}",
            100.0 * with_s,
            100.0 * values[4]
        )
    })?;
    let (sp_ho, sp_ip) = (
        report.spatial_map("ho").ok_or("no spatial mAP for ho")?,
        report
            .spatial_map("ho-ip1-conv")
            .ok_or("no spatial mAP for ho-ip1-conv")?,
    );
    ensure(sp_ip - sp_ho >= 0.10, || {
        format!(
            "spatial classes: ho-ip1-conv {:.2} vs ho {:.2}",
            100.0 * sp_ip,
            100.0 * sp_ho
        )
    })?;
    for v in &report.results {
        let (d, ko) = (v.default.full, v.known_object.full);
        ensure(matches!((d, ko), (Some(d), Some(ko)) if d <= ko), || {
            format!("{}: Default {d:?} above Known-object {ko:?}", v.name)
        })?;
    }
    Ok(format!(
        "{listing}; +S {:.2}; spatial ho {:.2} -> ip1 {:.2}; Default <= Known-object for all {}",
        100.0 * with_s,
        100.0 * sp_ho,
        100.0 * sp_ip,
        report.results.len()
    ))
}

fn recall_monotone() -> Outcome {
    let cfg = BenchmarkConfig::default();
    let out = generate(&cfg.synth).map_err(|e| e.to_string())?;
    let test = &out.test;
    let split = rare_split(&out.train, cfg.rare_threshold);
    let clean = perfect_detections(test);
    let noisy =
        corrupt_detections(&clean, test, &NoiseModel::benchmark(12)).map_err(|e| e.to_string())?;
    let mut prev = 0.0;
    let mut parts = Vec::new();
    for top in [1, 2, 5, 10] {
        let props = generate_proposals(&noisy, top, top, &test.taxonomy);
        let r = proposal_recall(&props, test, &split, COVERAGE_IOU)
            .full
            .ok_or("no ground truth")?;
        ensure(r >= prev, || {
            format!("recall fell from {prev:.4} to {r:.4} at top {top}")
        })?;
        parts.push(format!("{:.2}", 100.0 * r));
        prev = r;
    }
    let props = generate_proposals(&clean, 10, 10, &test.taxonomy);
    let perfect = proposal_recall(&props, test, &split, COVERAGE_IOU);
    ensure(perfect.full == Some(1.0), || {
        format!("perfect detections reach {:?}", perfect.full)
    })?;
    Ok(format!(
        "corrupted {} over tops 1/2/5/10; perfect 100.00",
        parts.join(" / ")
    ))
}

fn ttest() -> Outcome {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let r = paired_ttest(&a, &[0.0; 5]).map_err(|e| e.to_string())?;
    let oracle = t_pvalue_by_quadrature(r.t, (r.n - 1) as f64);
    ensure((r.t - 4.2426).abs() < 1e-4, || format!("t = {}", r.t))?;
    ensure((r.p - 0.0132).abs() < 1e-3, || format!("p = {}", r.p))?;
    ensure((r.p - oracle).abs() < 1e-3, || {
        format!("p = {} vs quadrature {oracle}", r.p)
    })?;
    let same = paired_ttest(&a, &a).map_err(|e| e.to_string())?;
    ensure(same.p == 1.0, || format!("p(x, x) = {}", same.p))?;
    Ok(format!(
        "t = {:.4}, p = {:.5} (quadrature {oracle:.5}), p(x,x) = 1",
        r.t, r.p
    ))
}

fn hoidet(dir: &Path, threads: usize, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hoidet"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .arg("--threads")
        .arg(threads.to_string())
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "`{}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )
    })
}

fn pipeline(dir: &Path, threads: usize) -> Result<(), String> {
    let steps: [&[&str]; 6] = [
        &[
            "synth",
            "--out",
            "data",
            "--seed",
            "7",
            "--n-train",
            "40",
            "--n-test",
            "20",
        ],
        &[
            "propose",
            "--dataset",
            "data/train",
            "--detections",
            "data/train/detections.txt",
            "--out",
            "train.props",
        ],
        &[
            "propose",
            "--dataset",
            "data/test",
            "--detections",
            "data/test/detections.txt",
            "--out",
            "test.props",
        ],
        &[
            "train",
            "--dataset",
            "data/train",
            "--proposals",
            "train.props",
            "--preset",
            "ho-ip1-conv-s",
            "--out",
            "model.bin",
            "--patch-size",
            "16",
            "--ip-size",
            "16",
            "--phase1",
            "30",
            "--phase2",
            "10",
        ],
        &[
            "score",
            "--dataset",
            "data/test",
            "--proposals",
            "test.props",
            "--model",
            "model.bin",
            "--out",
            "scores.txt",
        ],
        &[
            "eval",
            "--dataset",
            "data/test",
            "--scores",
            "scores.txt",
            "--rare-from",
            "data/train",
            "--out",
            "report.json",
            "--csv",
            "ap.csv",
        ],
    ];
    for args in steps {
        hoidet(dir, threads, args)?;
    }
    Ok(())
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn determinism() -> Outcome {
    let runs = [1usize, 2, 2];
    let mut trees = Vec::new();
    for threads in runs {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        pipeline(dir.path(), threads)?;
        trees.push(tree(dir.path()));
    }
    let first = &trees[0];
    for (t, other) in runs.iter().zip(&trees).skip(1) {
        ensure(first.keys().eq(other.keys()), || {
            format!("--threads {t} wrote a different set of files")
        })?;
        for (name, bytes) in first {
            ensure(other[name] == *bytes, || {
                format!("{name} differs under --threads {t}")
            })?;
        }
    }
    Ok(format!(
        "{} files byte-identical across --threads 1, 2, 2",
        first.len()
    ))
}

fn main() {
    let criteria = [
        Criterion {
            name: "interaction pattern correctness",
            budget: Some(Duration::from_secs(10)),
            run: ip_correctness,
        },
        Criterion {
            name: "evaluation oracle equivalence",
            budget: Some(Duration::from_secs(30)),
            run: eval_oracle,
        },
        Criterion {
            name: "gradient checks",
            budget: Some(Duration::from_secs(120)),
            run: gradient_checks,
        },
        Criterion {
            name: "parameter parity",
            budget: None,
            run: parameter_parity,
        },
        Criterion {
            name: "end-to-end ordering",
            budget: Some(Duration::from_secs(15 * 60)),
            run: end_to_end,
        },
        Criterion {
            name: "recall monotonicity",
            budget: None,
            run: recall_monotone,
        },
        Criterion {
            name: "paired t-test",
            budget: None,
            run: ttest,
        },
        Criterion {
            name: "determinism",
            budget: None,
            run: determinism,
        },
    ];

    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let mut outcome = (c.run)();
        let took = start.elapsed();
        if let (Ok(detail), Some(budget)) = (&outcome, c.budget) {
            if took > budget {
                outcome = Err(format!("{detail}; took {took:.1?}, budget {budget:?}"));
            }
        }
        match outcome {
            Ok(detail) => println!("PASS {} [{took:.1?}] {detail}", c.name),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} [{took:.1?}] {detail}", c.name);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
