use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hoidet::benchmark::{run_benchmark_with, BenchmarkConfig};
use hoidet::dataset::{
    dataset_stats, load_dataset, rare_split, save_dataset, Dataset, RareSplit, StatsTable,
};
use hoidet::eval::{
    evaluate, paired_aps, paired_ttest, render_table, render_ttests, scored_detections, EvalReport,
};
use hoidet::formats::{
    read_detections, read_proposals, read_scores, write_detections, write_proposals, write_scores,
};
use hoidet::interaction::{average_ip, grid_image};
use hoidet::model::{HoRcnn, StreamConfig, StreamKind};
use hoidet::proposals::{generate_proposals, proposal_recall, ProposalSet, COVERAGE_IOU};
use hoidet::score::{random_scores, score_proposals};
use hoidet::synth::{corrupt_detections, generate, Declaration, NoiseModel, SynthConfig};
use hoidet::train::{train_with_progress, TrainConfig};
use hoidet_annotate::{system_clock, TaskStore};
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::error::{CliError, Result};
use crate::manifest::{beside, RunManifest};
use crate::{
    AvgIpArgs, BenchmarkArgs, Command, EvalArgs, NoiseChoice, ProposeArgs, RareArgs, RecallArgs,
    ScoreArgs, ServeArgs, StatsArgs, SynthArgs, TrainArgs, TtestArgs,
};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Propose(a) => propose(a),
        Command::Recall(a) => recall(a),
        Command::Train(a) => train(a),
        Command::Score(a) => score(a),
        Command::Eval(a) => eval(a),
        Command::Ttest(a) => ttest(a),
        Command::AvgIp(a) => avg_ip(a),
        Command::Stats(a) => stats(a),
        Command::Serve(a) => serve(a),
        Command::Benchmark(a) => benchmark(a),
    }
}

fn need_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "missing input file {}",
            path.display()
        )))
    }
}

fn need_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "missing input directory {}",
            path.display()
        )))
    }
}

fn dataset(path: &Path) -> Result<Dataset> {
    need_dir(path)?;
    Ok(load_dataset(path)?)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    need_file(path)?;
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

fn rare_for(args: &RareArgs, evaluated: &Dataset) -> Result<RareSplit> {
    match &args.rare_from {
        Some(p) => {
            let train = dataset(p)?;
            if train.taxonomy != evaluated.taxonomy {
                return Err(CliError::Validation(format!(
                    "{} has a different taxonomy",
                    p.display()
                )));
            }
            Ok(rare_split(&train, args.rare_threshold))
        }
        None => {
            log::warn!("no --rare-from given; rare classes counted on the evaluated dataset");
            Ok(rare_split(evaluated, args.rare_threshold))
        }
    }
}

fn with_rare_input(m: RunManifest, args: &RareArgs) -> Result<RunManifest> {
    match &args.rare_from {
        Some(p) => m.input(p),
        None => Ok(m),
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".into(), |v| format!("{:.2}", 100.0 * v))
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.n_train {
        cfg.n_train = n;
    }
    if let Some(n) = a.n_test {
        cfg.n_test = n;
    }
    cfg.validate()?;
    let (train_noise, test_noise) = match a.noise {
        NoiseChoice::Benchmark => (
            NoiseModel::benchmark(a.noise_seed),
            NoiseModel::benchmark(a.noise_seed + 1),
        ),
        NoiseChoice::None => (NoiseModel::none(), NoiseModel::none()),
    };
    let out = &a.out;
    let (train_dir, test_dir) = (out.join("train"), out.join("test"));
    let files = [
        train_dir.clone(),
        test_dir.clone(),
        train_dir.join("scene_detections.txt"),
        train_dir.join("detections.txt"),
        test_dir.join("scene_detections.txt"),
        test_dir.join("detections.txt"),
        out.join("declared.json"),
        out.join("synth.json"),
    ];
    let mut m = RunManifest::new(
        "synth",
        &json!({ "synth": cfg, "train_noise": train_noise, "test_noise": test_noise }),
    )
    .seed("synth", cfg.seed)
    .seed("train_noise", train_noise.seed)
    .seed("test_noise", test_noise.seed);
    for f in &files {
        m = m.output(f);
    }
    m.write(&out.join("manifest.json"))?;

    let data = generate(&cfg)?;
    let train_dets = corrupt_detections(&data.train_scene, &data.train, &train_noise)?;
    let test_dets = corrupt_detections(&data.test_scene, &data.test, &test_noise)?;
    save_dataset(&data.train, &train_dir)?;
    save_dataset(&data.test, &test_dir)?;
    write_detections(&files[2], &data.train_scene)?;
    write_detections(&files[3], &train_dets)?;
    write_detections(&files[4], &data.test_scene)?;
    write_detections(&files[5], &test_dets)?;
    write_json(&files[6], &data.declared)?;
    write_json(&files[7], &cfg)?;
    println!("split\timages\tpositives\tinstances\tboxes");
    println!("train\t{}", data.declared.train);
    println!("test\t{}", data.declared.test);
    Ok(())
}

fn proposal_set(path: &Path) -> Result<ProposalSet> {
    need_file(path)?;
    Ok(ProposalSet::from_proposals(read_proposals(path)?))
}

fn detections(path: &Path, ds: &Dataset) -> Result<Vec<hoidet::dataset::Detection>> {
    need_file(path)?;
    let dets = read_detections(path)?;
    for d in &dets {
        d.validate(&ds.taxonomy)?;
    }
    Ok(dets)
}

fn propose(a: ProposeArgs) -> Result<()> {
    let ds = dataset(&a.dataset)?;
    let dets = detections(&a.detections, &ds)?;
    let top_h = a.top_humans.unwrap_or(a.top);
    let top_o = a.top_objects.unwrap_or(a.top);
    if top_h == 0 || top_o == 0 {
        return Err(CliError::Usage("top counts must be at least 1".into()));
    }
    let split = rare_for(&a.rare, &ds)?;
    let m = RunManifest::new("propose", &json!({ "top_humans": top_h, "top_objects": top_o, "rare_threshold": a.rare.rare_threshold }))
        .input(&a.dataset)?
        .input(&a.detections)?;
    with_rare_input(m, &a.rare)?
        .output(&a.out)
        .write(&beside(&a.out))?;

    let props = generate_proposals(&dets, top_h, top_o, &ds.taxonomy);
    write_proposals(&a.out, props.iter())?;
    let r = proposal_recall(&props, &ds, &split, COVERAGE_IOU);
    println!("proposals\ttop_humans\ttop_objects\tfull\trare\tnon_rare");
    println!(
        "{}\t{top_h}\t{top_o}\t{}\t{}\t{}",
        props.len(),
        pct(r.full),
        pct(r.rare),
        pct(r.non_rare)
    );
    Ok(())
}

fn recall(a: RecallArgs) -> Result<()> {
    let ds = dataset(&a.dataset)?;
    let dets = detections(&a.detections, &ds)?;
    if a.tops.is_empty() || a.tops.contains(&0) {
        return Err(CliError::Usage("--tops needs positive counts".into()));
    }
    let split = rare_for(&a.rare, &ds)?;
    if let Some(out) = &a.out {
        let m = RunManifest::new(
            "recall",
            &json!({ "tops": a.tops, "rare_threshold": a.rare.rare_threshold }),
        )
        .input(&a.dataset)?
        .input(&a.detections)?;
        with_rare_input(m, &a.rare)?
            .output(out)
            .write(&beside(out))?;
    }
    let mut csv = String::from("top,full,rare,non_rare\n");
    let show = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    println!("top\tfull\trare\tnon_rare");
    for &t in &a.tops {
        let props = generate_proposals(&dets, t, t, &ds.taxonomy);
        let r = proposal_recall(&props, &ds, &split, COVERAGE_IOU);
        println!("{t}\t{}\t{}\t{}", pct(r.full), pct(r.rare), pct(r.non_rare));
        let _ = writeln!(
            csv,
            "{t},{},{},{}",
            show(r.full),
            show(r.rare),
            show(r.non_rare)
        );
    }
    if let Some(out) = &a.out {
        write_text(out, &csv)?;
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let ds = dataset(&a.dataset)?;
    let props = proposal_set(&a.proposals)?;
    let mut tc: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.phase1 {
        tc.phase1_iterations = v;
    }
    if let Some(v) = a.phase2 {
        tc.phase2_iterations = v;
    }
    if let Some(v) = a.lr {
        tc.lr = v;
    }
    if let Some(v) = a.seed {
        tc.seed = v;
    }
    tc.validate()?;
    let sc = StreamConfig::preset(&a.preset)?.with_sizes(a.patch_size, a.ip_size);
    sc.validate()?;
    let loss_csv = a.loss_csv.clone().unwrap_or_else(|| {
        let mut n = a.out.file_name().unwrap_or_default().to_os_string();
        n.push(".loss.csv");
        a.out.with_file_name(n)
    });
    RunManifest::new(
        "train",
        &json!({ "preset": a.preset, "streams": sc, "train": tc, "model_seed": a.model_seed }),
    )
    .seed("sampling", tc.seed)
    .seed("init", a.model_seed)
    .input(&a.dataset)?
    .input(&a.proposals)?
    .output(&a.out)
    .output(&loss_csv)
    .write(&beside(&a.out))?;

    let mut model = HoRcnn::<f32>::new(sc, ds.taxonomy.len(), a.model_seed)?;
    let total = tc.iterations();
    let every = (total / 20).max(1);
    let report = train_with_progress(&mut model, &ds, &props, &tc, |it, loss| {
        if (it + 1) % every == 0 {
            log::info!("iteration {}/{total}: loss {loss:.4}", it + 1);
        }
    })?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    model.save(&a.out)?;
    let mut csv = String::from("iteration,loss\n");
    for (i, l) in report.losses.iter().enumerate() {
        let _ = writeln!(csv, "{i},{l}");
    }
    write_text(&loss_csv, &csv)?;
    if let Some((first, last)) = report.smoothed_ends((report.losses.len() / 4).clamp(1, 50)) {
        println!("loss\t{first:.4} -> {last:.4}");
    }
    if !report.skipped_images.is_empty() {
        println!(
            "skipped\t{} images without instances or proposals",
            report.skipped_images.len()
        );
    }
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let ds = dataset(&a.dataset)?;
    let props = proposal_set(&a.proposals)?;
    let stream: Option<StreamKind> = a.stream.as_deref().map(str::parse).transpose()?;
    if a.random.is_some() && stream.is_some() {
        return Err(CliError::Usage("--stream needs --model".into()));
    }
    let mut m = RunManifest::new("score", &json!({ "random": a.random, "stream": a.stream }))
        .input(&a.dataset)?
        .input(&a.proposals)?;
    if let Some(p) = &a.model {
        need_file(p)?;
        m = m.input(p)?;
    }
    if let Some(s) = a.random {
        m = m.seed("random", s);
    }
    m.output(&a.out).write(&beside(&a.out))?;

    let rows = match (&a.model, a.random) {
        (_, Some(seed)) => random_scores(&props, &ds.taxonomy, seed),
        (Some(p), None) => {
            let model = HoRcnn::<f32>::load(p)?;
            if model.num_classes != ds.taxonomy.len() {
                return Err(CliError::Validation(format!(
                    "model has {} classes, dataset {}",
                    model.num_classes,
                    ds.taxonomy.len()
                )));
            }
            let ds = ds.with_images_in_memory();
            score_proposals(&model, &ds, &props, stream)?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "one of --model or --random is required".into(),
            ))
        }
    };
    write_scores(&a.out, &rows)?;
    println!("scored\t{} proposals", rows.len());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let ds = dataset(&a.dataset)?;
    need_file(&a.scores)?;
    let setting = a.setting.parse()?;
    let method = a.ap.parse()?;
    if !(0.0..1.0).contains(&a.iou) {
        return Err(CliError::Usage(format!("--iou {} outside [0, 1)", a.iou)));
    }
    let split = rare_for(&a.rare, &ds)?;
    let mut m = RunManifest::new(
        "eval",
        &json!({ "setting": a.setting, "ap": a.ap, "iou": a.iou, "rare_threshold": a.rare.rare_threshold }),
    )
    .input(&a.dataset)?
    .input(&a.scores)?;
    m = with_rare_input(m, &a.rare)?.output(&a.out);
    if let Some(c) = &a.csv {
        m = m.output(c);
    }
    m.write(&beside(&a.out))?;

    let rows = read_scores(&a.scores)?;
    let report = evaluate(
        &scored_detections(&rows),
        &ds,
        setting,
        &split,
        method,
        a.iou,
    )?;
    write_json(&a.out, &report)?;
    if let Some(c) = &a.csv {
        write_text(c, &report.per_class_csv(&ds.taxonomy))?;
    }
    print!("{}", render_table(&[(&a.setting, &report)]));
    Ok(())
}

fn ttest(a: TtestArgs) -> Result<()> {
    let reports: Vec<EvalReport> = a
        .reports
        .iter()
        .map(|p| read_json(p))
        .collect::<Result<_>>()?;
    let name = |p: &PathBuf| {
        p.file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned()
    };
    let mut rows = Vec::new();
    for (path, r) in a.reports.iter().zip(&reports).skip(1) {
        if r.per_class.len() != reports[0].per_class.len() {
            return Err(CliError::Validation(format!(
                "{} covers {} classes, {} covers {}",
                path.display(),
                r.per_class.len(),
                a.reports[0].display(),
                reports[0].per_class.len()
            )));
        }
        let (x, y) = paired_aps(&reports[0], r);
        rows.push((
            format!("{}-{}", name(&a.reports[0]), name(path)),
            paired_ttest(&x, &y)?,
        ));
    }
    if let Some(out) = &a.out {
        let mut m = RunManifest::new("ttest", &json!({}));
        for p in &a.reports {
            m = m.input(p)?;
        }
        m.output(out).write(&beside(out))?;
        write_text(out, &render_ttests(&rows))?;
    }
    print!("{}", render_ttests(&rows));
    Ok(())
}

fn avg_ip(a: AvgIpArgs) -> Result<()> {
    let ds = dataset(&a.dataset)?;
    if a.size == 0 {
        return Err(CliError::Usage("--size must be positive".into()));
    }
    RunManifest::new(
        "avg-ip",
        &json!({ "size": a.size, "padded": !a.unpadded, "scale": a.scale }),
    )
    .input(&a.dataset)?
    .output(&a.out)
    .write(&a.out.join("manifest.json"))?;

    let instances: Vec<_> = ds.instances().cloned().collect();
    let mut index = String::from("hoi_id,verb,object,count,file\n");
    for cat in ds.taxonomy.categories() {
        let file = format!("class_{:03}.png", cat.id);
        match average_ip(&instances, cat.id, a.size, !a.unpadded) {
            Ok(avg) => {
                let h = grid_image(&avg.human, a.size, a.scale);
                let o = grid_image(&avg.object, a.size, a.scale);
                let gap = a.scale.max(1);
                let mut pair = image::GrayImage::from_pixel(
                    h.width() * 2 + gap,
                    h.height(),
                    image::Luma([128]),
                );
                image::imageops::replace(&mut pair, &h, 0, 0);
                image::imageops::replace(&mut pair, &o, (h.width() + gap) as i64, 0);
                let path = a.out.join(&file);
                pair.save(&path).map_err(hoidet::Error::from)?;
                let _ = writeln!(
                    index,
                    "{},{},{},{},{file}",
                    cat.id, cat.verb, cat.object_category, avg.count
                );
            }
            Err(hoidet::Error::EmptyClass(_)) => {
                let _ = writeln!(index, "{},{},{},0,", cat.id, cat.verb, cat.object_category);
            }
            Err(e) => return Err(e.into()),
        }
    }
    write_text(&a.out.join("index.csv"), &index)?;
    print!("{index}");
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    need_dir(&a.path)?;
    let splits: Vec<(&str, PathBuf)> = if a.path.join(hoidet::dataset::TAXONOMY_FILE).is_file() {
        vec![("dataset", a.path.clone())]
    } else {
        vec![
            ("train", a.path.join("train")),
            ("test", a.path.join("test")),
        ]
    };
    let tables: Vec<(&str, StatsTable)> = splits
        .iter()
        .map(|(name, p)| Ok((*name, dataset_stats(&dataset(p)?))))
        .collect::<Result<_>>()?;
    println!("split\timages\tpositives\tinstances\tboxes");
    for (name, t) in &tables {
        println!("{name}\t{t}");
    }
    let declared = a.declared.clone().or_else(|| {
        let p = a.path.join("declared.json");
        p.is_file().then_some(p)
    });
    if let Some(p) = declared {
        let d: Declaration = read_json(&p)?;
        for (name, t) in &tables {
            let want = match *name {
                "test" => &d.test,
                _ => &d.train,
            };
            if t != want {
                return Err(CliError::Validation(format!(
                    "{name} counts {t} differ from declared {want}"
                )));
            }
        }
        println!("declared counts match ({})", p.display());
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let ds = dataset(&a.dataset)?;
    if a.lease_minutes == 0 {
        return Err(CliError::Usage("--lease-minutes must be positive".into()));
    }
    let store = TaskStore::open(ds, Some(&a.log), system_clock(), a.lease_minutes * 60_000)?;
    let p = store.progress();
    let handle = hoidet_annotate::spawn(Arc::new(store), a.addr, a.workers)
        .map_err(|e| CliError::io(&a.log, e))?;
    println!(
        "listening\thttp://{}\ttasks {} open {} submitted {}",
        handle.addr, p.total, p.open, p.submitted
    );
    handle.join().map_err(|e| CliError::io(&a.log, e))
}

fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let mut cfg: BenchmarkConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => BenchmarkConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.synth.seed = s;
    }
    let mut m = RunManifest::new("benchmark", &cfg).seed("synth", cfg.synth.seed);
    if let Some(p) = &a.config {
        m = m.input(p)?;
    }
    m.output(&a.out).write(&beside(&a.out))?;

    let report = run_benchmark_with(&cfg, |r| {
        log::info!("{}: default mAP {}", r.name, pct(r.default.full));
    })?;
    write_json(&a.out, &report)?;
    let mut table = Vec::new();
    for r in &report.results {
        table.push((format!("{} (default)", r.name), &r.default));
        table.push((format!("{} (known-object)", r.name), &r.known_object));
    }
    let refs: Vec<(&str, &EvalReport)> = table.iter().map(|(n, r)| (n.as_str(), *r)).collect();
    print!("{}", render_table(&refs));
    Ok(())
}
