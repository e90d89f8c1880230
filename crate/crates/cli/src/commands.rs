use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use egopose::body::ablation::run_ladder;
use egopose::body::Modalities;
use egopose::dataset::{self, Samples};
use egopose::ensemble::{fuse_keyed, optimize_weights, EnsembleWeights, KeyedPredictions, ScoredPose};
use egopose::io::{self, LabelRecord, Task, WeightsFile};
use egopose::metrics::{self, MetricReport, NUM_CLASSES};
use egopose::pose::{JointSet, Pose3D, PoseSequence};
use egopose::synth::body::{dataset_anchor_interval_s, sequence_key};
use egopose::synth::Split;
use egopose::training::{train as fit, Precision, TrainConfig, TrainHistory, TrainOutcome, Trainable};
use serde::Serialize;

use crate::config::{AblationSection, ConfigFile, ModelConfig, ResolvedConfig};
use crate::error::{CliError, Stage};
use crate::models::{Model, Predictions};
use crate::{ModalitiesArg, PathwayArg, TrainFlags};

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    io::write_text(path, text).or_usage()
}

fn resolve_train(file: &ConfigFile, flags: &TrainFlags, seed: Option<u64>) -> Result<TrainConfig, CliError> {
    let mut t: TrainConfig = file.section("train")?;
    if let Some(v) = flags.epochs {
        t.epochs = v;
    }
    if let Some(v) = flags.max_steps {
        t.max_steps = Some(v);
    }
    if let Some(v) = flags.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = flags.lr {
        t.base_lr = v;
    }
    if let Some(v) = flags.weight_decay {
        t.weight_decay = v;
    }
    if let Some(p) = &flags.precision {
        t.precision = if p == "32" { Precision::F32 } else { Precision::F64 };
    }
    if let Some(s) = seed {
        t.seed = s;
    }
    t.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(t)
}

pub fn synth(task: Task, n: usize, n_val: usize, n_test: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    let mut resolved = ResolvedConfig::new("synth", out);
    resolved.task = Some(task);
    let mut params = toml::Table::new();
    for (k, v) in [("n", n as i64), ("n_val", n_val as i64), ("n_test", n_test as i64), ("seed", seed as i64)] {
        params.insert(k.into(), toml::Value::Integer(v));
    }
    resolved.params = Some(params);
    resolved.write()?;
    let manifest =
        dataset::write_dataset(out, task, seed, &[(Split::Train, n), (Split::Val, n_val), (Split::Test, n_test)]).or_usage()?;
    for s in &manifest.splits {
        println!("{} {}: {} samples -> {}", task.as_str(), s.split.as_str(), s.count, out.join(&s.annotations).display());
    }
    Ok(())
}

fn load_pair(data: &Path, task: Task) -> Result<(Samples, Samples, Split), CliError> {
    let manifest = dataset::read_manifest(data).or_usage()?;
    if manifest.task != task {
        return Err(CliError::usage(format!(
            "{} holds {} data, not {}",
            data.display(),
            manifest.task.as_str(),
            task.as_str()
        )));
    }
    let train = dataset::load_split(data, Split::Train).or_usage()?;
    let val_split = if manifest.split(Split::Val).is_some() { Split::Val } else { Split::Train };
    let val = dataset::load_split(data, val_split).or_usage()?;
    Ok((train, val, val_split))
}

fn run_training<M: Trainable>(
    model: &mut M,
    train: &[M::Sample],
    val: &[M::Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, CliError> {
    fit(model, train, val, cfg, |e| {
        if let Some(v) = e.val_metric {
            eprintln!("epoch {:>4}  step {:>6}  loss {:.6}  val {:.6}", e.epoch, e.steps, e.train_loss, v);
        }
    })
    .or_training()
}

pub fn write_history(out: &Path, history: &TrainHistory) -> Result<(), CliError> {
    write_file(&out.join("history.csv"), &history.to_csv())?;
    write_file(&out.join("history.json"), &io::to_json(history))
}

pub fn train(
    task: Task,
    data: &Path,
    out: &Path,
    seed: Option<u64>,
    modalities: Option<ModalitiesArg>,
    flags: &TrainFlags,
) -> Result<(), CliError> {
    let file = ConfigFile::load(flags.config.as_deref())?;
    let train_cfg = resolve_train(&file, flags, seed)?;
    let mut model_cfg = ModelConfig::from_file(&file, task)?;
    if let Some(s) = seed {
        model_cfg.set_seed(s);
    }
    match (&mut model_cfg, modalities) {
        (ModelConfig::Body(c), Some(m)) => {
            let ladder = Modalities::ladder();
            c.modalities = ladder[m as usize].1;
        }
        (_, Some(_)) => return Err(CliError::usage("--modalities only applies to the body task")),
        _ => {}
    }
    let mut resolved = ResolvedConfig::new("train", out);
    resolved.task = Some(task);
    resolved.data = Some(data.to_path_buf());
    resolved.train = Some(train_cfg.clone());
    resolved.model = Some(model_cfg.clone());
    resolved.write()?;

    let (train_set, val_set, val_split) = load_pair(data, task)?;
    let mut model = Model::new(&model_cfg).or_usage()?;
    let outcome = match (&mut model, &train_set, &val_set) {
        (Model::Hand(m), Samples::Hand(t), Samples::Hand(v)) => run_training(m, t, v, &train_cfg)?,
        (Model::Body(m), Samples::Body(t), Samples::Body(v)) => run_training(m, t, v, &train_cfg)?,
        (Model::Prof(m), Samples::Prof(t), Samples::Prof(v)) => run_training(m, t, v, &train_cfg)?,
        _ => unreachable!("dataset task checked against the command"),
    };
    write_history(out, &outcome.history)?;
    model.save(&out.join("final.safetensors")).or_usage()?;
    match &mut model {
        Model::Hand(m) => m.params_mut().copy_from(&outcome.best),
        Model::Body(m) => m.params_mut().copy_from(&outcome.best),
        Model::Prof(m) => m.params_mut().copy_from(&outcome.best),
    }
    model.save(&out.join("best.safetensors")).or_usage()?;
    let preds = model.predict(&val_set, PathwayArg::Fused, false).or_training()?;
    let pred_path = out.join(format!("predictions_{}.jsonl", val_split.as_str()));
    preds.write(&pred_path).or_usage()?;
    println!(
        "trained {} for {} steps; best {} {:.6} at epoch {}",
        task.as_str(),
        outcome.history.steps.len(),
        outcome.history.metric,
        outcome.history.best_val_metric.unwrap_or(f64::NAN),
        outcome.history.best_epoch.map_or(-1, |e| e as i64)
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn load_samples(data: &Path, split: Split) -> Result<Samples, CliError> {
    dataset::load_split(data, split).or_usage()
}

pub fn predict(
    checkpoint: &Path,
    data: &Path,
    split: Split,
    out: &Path,
    pathway: PathwayArg,
    tta: bool,
) -> Result<(), CliError> {
    let model = Model::load(checkpoint).or_usage()?;
    if (tta || pathway != PathwayArg::Fused) && !matches!(model, Model::Hand(_)) {
        return Err(CliError::usage("--tta and --pathway only apply to hand checkpoints"));
    }
    let samples = load_samples(data, split)?;
    let preds = model.predict(&samples, pathway, tta).or_evaluation()?;
    preds.write(out).or_usage()?;
    println!("wrote {} predictions to {}", samples.len(), out.display());
    Ok(())
}

/// A prediction or annotation file of either kind.
enum Records {
    Poses(KeyedPredictions),
    Labels(BTreeMap<String, LabelRecord>),
}

fn looks_like_labels(text: &str) -> bool {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .is_some_and(|v| v.get("label").is_some())
}

fn read_records(path: &Path) -> Result<Records, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let with_path = |e: egopose::Error| CliError::usage(format!("{}: {e}", path.display()));
    if looks_like_labels(&text) {
        io::parse_labels(&text).map(Records::Labels).map_err(with_path)
    } else {
        io::parse_poses(&text).map(Records::Poses).map_err(with_path)
    }
}

#[derive(Serialize)]
struct ClassificationReport {
    top1: f64,
    num_samples: usize,
    missing_predictions: usize,
    unmatched_predictions: usize,
}

/// MPJVE over every sequence with at least two frames, sequences keyed by
/// the id prefix before the last `-` and ordered by the numeric frame
/// suffix. Frame pairs are weighted equally across sequences.
fn sequence_mpjve(
    preds: &BTreeMap<String, Pose3D>,
    gts: &BTreeMap<String, Pose3D>,
    interval: f64,
) -> egopose::Result<Option<f64>> {
    let mut groups: BTreeMap<&str, Vec<(u64, &str)>> = BTreeMap::new();
    for id in gts.keys().filter(|id| preds.contains_key(*id)) {
        let Some((_, frame)) = id.rsplit_once('-') else { continue };
        let Ok(frame) = frame.parse::<u64>() else { continue };
        groups.entry(sequence_key(id)).or_default().push((frame, id));
    }
    let (mut sum, mut pairs) = (0.0, 0usize);
    for mut frames in groups.into_values().filter(|g| g.len() >= 2) {
        frames.sort_unstable();
        let p: Vec<Pose3D> = frames.iter().map(|(_, id)| preds[*id].clone()).collect();
        let g: Vec<Pose3D> = frames.iter().map(|(_, id)| gts[*id].clone()).collect();
        let v = metrics::mpjve(&PoseSequence::new(p, interval)?, &PoseSequence::new(g, interval)?)?;
        sum += v * (frames.len() - 1) as f64;
        pairs += frames.len() - 1;
    }
    Ok((pairs > 0).then(|| sum / pairs as f64))
}

pub fn eval(
    pred: &Path,
    gt: &Path,
    requested: &[String],
    frame_interval: Option<f64>,
    out: Option<&Path>,
    csv_out: Option<&Path>,
) -> Result<(), CliError> {
    const KNOWN: [&str; 4] = ["mpjpe", "pa-mpjpe", "mpjve", "top1"];
    if let Some(m) = requested.iter().find(|m| !KNOWN.contains(&m.as_str())) {
        return Err(CliError::usage(format!("unknown metric \"{m}\" (expected {})", KNOWN.join(", "))));
    }
    let wants = |m: &str| requested.is_empty() || requested.iter().any(|r| r == m);
    match (read_records(pred)?, read_records(gt)?) {
        (Records::Poses(p), Records::Poses(g)) => {
            let preds: BTreeMap<String, Pose3D> = p.into_iter().map(|(k, v)| (k, v.pose)).collect();
            let gts: BTreeMap<String, Pose3D> = g.into_iter().map(|(k, v)| (k, v.pose)).collect();
            let mut report = metrics::batch_evaluate(&preds, &gts).or_evaluation()?;
            let is_body = gts.values().next().is_some_and(|p| p.joint_set() == JointSet::Body17);
            if (is_body && requested.is_empty()) || requested.iter().any(|r| r == "mpjve") {
                let interval = frame_interval.unwrap_or_else(dataset_anchor_interval_s);
                report.mpjve_m_per_s = sequence_mpjve(&preds, &gts, interval).or_evaluation()?;
            }
            print_pose_report(&report, &wants);
            if let Some(path) = out {
                write_file(path, &io::to_json(&report))?;
            }
            if let Some(path) = csv_out {
                write_file(path, &per_sample_csv(&report)?)?;
            }
        }
        (Records::Labels(p), Records::Labels(g)) => {
            let ids: Vec<&String> = g.keys().filter(|id| p.contains_key(*id)).collect();
            if ids.is_empty() {
                return Err(CliError::evaluation(egopose::Error::NoOverlap.to_string()));
            }
            let pl: Vec<usize> = ids.iter().map(|id| p[*id].label).collect();
            let gl: Vec<usize> = ids.iter().map(|id| g[*id].label).collect();
            let report = ClassificationReport {
                top1: metrics::top1_accuracy(&pl, &gl).or_evaluation()?,
                num_samples: ids.len(),
                missing_predictions: g.len() - ids.len(),
                unmatched_predictions: p.len() - ids.len(),
            };
            println!("top-1: {:.6}", report.top1);
            println!("samples: {}", report.num_samples);
            if let Some(path) = out {
                write_file(path, &io::to_json(&report))?;
            }
            if let Some(path) = csv_out {
                let mut text = String::from("id,pred,gt\n");
                for (id, (a, b)) in ids.iter().zip(pl.iter().zip(&gl)) {
                    text.push_str(&format!("{id},{a},{b}\n"));
                }
                write_file(path, &text)?;
            }
        }
        _ => return Err(CliError::usage("prediction and ground-truth files are of different kinds")),
    }
    Ok(())
}

fn print_pose_report(r: &MetricReport, wants: &dyn Fn(&str) -> bool) {
    if wants("mpjpe") {
        println!("MPJPE: {:.6} {}", r.mpjpe, r.unit);
    }
    if wants("pa-mpjpe") {
        println!("PA-MPJPE: {:.6} {}", r.pa_mpjpe, r.unit);
    }
    if let Some(v) = r.mpjve_m_per_s {
        println!("MPJVE: {v:.6} m/s");
    }
    println!("samples: {}", r.num_samples);
    if r.missing_predictions > 0 {
        println!("ground-truth ids without prediction: {}", r.missing_predictions);
    }
}

fn per_sample_csv(r: &MetricReport) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &r.per_sample {
        w.serialize(s).map_err(|e| CliError::usage(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub struct EnsembleArgs {
    pub preds: Vec<PathBuf>,
    pub weights: Vec<f64>,
    pub weights_file: Option<PathBuf>,
    pub optimize: bool,
    pub gt: Option<PathBuf>,
    pub grid_step: f64,
    pub out: PathBuf,
    pub weights_out: Option<PathBuf>,
}

fn member_label(p: &Path) -> String {
    p.display().to_string()
}

pub fn ensemble(args: EnsembleArgs) -> Result<(), CliError> {
    let members: Vec<Records> = args.preds.iter().map(|p| read_records(p)).collect::<Result<_, _>>()?;
    let weights = if let Some(path) = &args.weights_file {
        let wf: WeightsFile = io::load_json(path).or_usage()?;
        wf.validate().or_evaluation()?;
        if wf.weights.len() != members.len() {
            return Err(CliError::usage(format!(
                "{} holds {} weights for {} prediction files",
                path.display(),
                wf.weights.len(),
                members.len()
            )));
        }
        Some(wf.weights)
    } else if !args.weights.is_empty() {
        if args.weights.len() != members.len() {
            return Err(CliError::usage(format!(
                "{} weights given for {} prediction files",
                args.weights.len(),
                members.len()
            )));
        }
        Some(args.weights.clone())
    } else {
        None
    };

    if members.iter().all(|m| matches!(m, Records::Labels(_))) {
        if args.optimize {
            return Err(CliError::usage("--optimize applies to pose predictions only"));
        }
        let labels: Vec<BTreeMap<String, LabelRecord>> = members
            .into_iter()
            .map(|m| match m {
                Records::Labels(l) => l,
                Records::Poses(_) => unreachable!(),
            })
            .collect();
        let w = match weights {
            Some(w) => EnsembleWeights::new(w),
            None => EnsembleWeights::uniform(labels.len()),
        }
        .or_evaluation()?;
        let fused = fuse_probabilities(&labels, &w)?;
        io::write_labels(&args.out, &fused).or_usage()?;
        println!("fused {} label predictions into {}", fused.len(), args.out.display());
        return Ok(());
    }

    let poses: Vec<KeyedPredictions> = members
        .into_iter()
        .map(|m| match m {
            Records::Poses(p) => Ok(p),
            Records::Labels(_) => Err(CliError::usage("cannot mix pose and label prediction files")),
        })
        .collect::<Result<_, _>>()?;

    let weights = if args.optimize {
        let gt_path = args.gt.as_ref().expect("clap requires --gt with --optimize");
        let gt = io::load_annotations(gt_path).or_usage()?;
        let search = if poses.len() == 1 {
            return Err(CliError::usage("--optimize needs at least two prediction files"));
        } else {
            optimize_weights(&poses, &gt, args.grid_step).or_evaluation()?
        };
        for (p, m) in args.preds.iter().zip(&search.member_mpjpe) {
            println!("member {}: MPJPE {m:.6}", p.display());
        }
        println!("optimized weights: {:?} (MPJPE {:.6}, {} grid points)", search.weights.weights(), search.mpjpe, search.grid_points);
        let wf = WeightsFile {
            members: args.preds.iter().map(|p| member_label(p)).collect(),
            weights: search.weights.weights().to_vec(),
        };
        let path = args.weights_out.clone().unwrap_or_else(|| args.out.with_extension("weights.json"));
        io::write_json(&path, &wf).or_usage()?;
        println!("wrote weights to {}", path.display());
        search.weights
    } else {
        match weights {
            Some(w) => EnsembleWeights::new(w),
            None => EnsembleWeights::uniform(poses.len()),
        }
        .or_evaluation()?
    };

    let fused = fuse_keyed(&poses, &weights).or_evaluation()?;
    let mut out = KeyedPredictions::new();
    for (id, pose) in fused {
        let score = poses
            .iter()
            .zip(weights.weights())
            .filter(|(_, w)| **w > 0.0)
            .map(|(m, _)| m[&id].score)
            .fold(f64::NEG_INFINITY, f64::max);
        out.insert(id, ScoredPose { pose, score });
    }
    io::write_predictions(&args.out, &out).or_usage()?;
    println!("fused {} predictions into {}", out.len(), args.out.display());
    Ok(())
}

/// Weighted mean of member probabilities over the ids every member holds.
fn fuse_probabilities(
    members: &[BTreeMap<String, LabelRecord>],
    weights: &EnsembleWeights,
) -> Result<BTreeMap<String, LabelRecord>, CliError> {
    if members.len() != weights.len() {
        return Err(CliError::usage("one weight per member is required"));
    }
    let w = weights.clone().normalized();
    let mut out = BTreeMap::new();
    for id in members[0].keys().filter(|id| members.iter().all(|m| m.contains_key(*id))) {
        let mut p = [0.0; NUM_CLASSES];
        for (m, wi) in members.iter().zip(w.weights()) {
            let probs = m[id]
                .probabilities
                .ok_or_else(|| CliError::usage(format!("{id}: member prediction has no probabilities")))?;
            for (a, b) in p.iter_mut().zip(probs) {
                *a += wi * b;
            }
        }
        let pred = egopose::proficiency::ProficiencyPrediction::from_probabilities(p).or_evaluation()?;
        out.insert(id.clone(), LabelRecord { label: pred.label, probabilities: Some(pred.probabilities) });
    }
    if out.is_empty() {
        return Err(CliError::evaluation(egopose::Error::NoOverlap.to_string()));
    }
    Ok(out)
}

#[derive(Serialize)]
struct TtaReport {
    split: Split,
    num_samples: usize,
    mpjpe_plain_mm: f64,
    mpjpe_tta_mm: f64,
    tta_gain_mm: f64,
}

pub fn tta_eval(checkpoint: &Path, data: &Path, split: Split, out: &Path) -> Result<(), CliError> {
    let mut resolved = ResolvedConfig::new("tta-eval", out);
    resolved.data = Some(data.to_path_buf());
    let mut params = toml::Table::new();
    params.insert("checkpoint".into(), toml::Value::String(checkpoint.display().to_string()));
    params.insert("split".into(), toml::Value::String(split.as_str().into()));
    resolved.params = Some(params);
    resolved.write()?;
    let model = Model::load(checkpoint).or_usage()?;
    if !matches!(model, Model::Hand(_)) {
        return Err(CliError::usage("tta-eval needs a hand checkpoint"));
    }
    let samples = load_samples(data, split)?;
    let gt = samples.poses().expect("hand data has poses");
    let mut scores = [0.0; 2];
    for (k, tta) in [false, true].into_iter().enumerate() {
        let Predictions::Poses(p) = model.predict(&samples, PathwayArg::Fused, tta).or_evaluation()? else {
            unreachable!("hand models predict poses")
        };
        let name = if tta { "predictions_tta.jsonl" } else { "predictions_plain.jsonl" };
        io::write_predictions(&out.join(name), &p).or_usage()?;
        let poses: BTreeMap<String, Pose3D> = p.into_iter().map(|(k, v)| (k, v.pose)).collect();
        scores[k] = metrics::mean_mpjpe(&poses, &gt).or_evaluation()?;
    }
    let report = TtaReport {
        split,
        num_samples: samples.len(),
        mpjpe_plain_mm: scores[0],
        mpjpe_tta_mm: scores[1],
        tta_gain_mm: scores[0] - scores[1],
    };
    println!("MPJPE without TTA: {:.6} mm", report.mpjpe_plain_mm);
    println!("MPJPE with flip TTA: {:.6} mm", report.mpjpe_tta_mm);
    write_file(&out.join("tta.json"), &io::to_json(&report))
}

pub fn ablation(data: &Path, out: &Path, seeds: &[u64], flags: &TrainFlags) -> Result<(), CliError> {
    let file = ConfigFile::load(flags.config.as_deref())?;
    let train_cfg = resolve_train(&file, flags, None)?;
    let ModelConfig::Body(body_cfg) = ModelConfig::from_file(&file, Task::Body)? else { unreachable!() };
    let mut section: AblationSection = file.section("ablation")?;
    if !seeds.is_empty() {
        section.seeds = seeds.to_vec();
    }
    if section.seeds.is_empty() {
        return Err(CliError::usage("at least one seed is required"));
    }
    let mut resolved = ResolvedConfig::new("ablation", out);
    resolved.task = Some(Task::Body);
    resolved.data = Some(data.to_path_buf());
    resolved.train = Some(train_cfg.clone());
    resolved.model = Some(ModelConfig::Body(body_cfg.clone()));
    resolved.ablation = Some(section.clone());
    resolved.write()?;

    let (train_set, val_set, _) = load_pair(data, Task::Body)?;
    let (Samples::Body(train_set), Samples::Body(val_set)) = (train_set, val_set) else { unreachable!() };
    let mut failure = None;
    let report = run_ladder(&train_set, &val_set, &section.seeds, &body_cfg, &train_cfg, |arm, seed, history, v| {
        eprintln!("{arm:<10} seed {seed}: val MPJPE {v:.6} cm");
        let path = out.join("runs").join(format!("{arm}-seed{seed}.csv"));
        if let Err(e) = write_file(&path, &history.to_csv()) {
            failure.get_or_insert(e);
        }
    })
    .or_training()?;
    if let Some(e) = failure {
        return Err(e);
    }
    write_file(&out.join("ablation.json"), &io::to_json(&report))?;
    let mut csv = String::from("arm,seed,val_mpjpe_cm\n");
    for a in &report.arms {
        for (s, v) in a.seeds.iter().zip(&a.val_mpjpe_cm) {
            csv.push_str(&format!("{},{s},{v:.16e}\n", a.arm));
        }
    }
    write_file(&out.join("ablation.csv"), &csv)?;
    for a in &report.arms {
        println!("{:<10} mean val MPJPE {:.6} cm", a.arm, a.mean_val_mpjpe_cm);
    }
    println!(
        "ordering {}",
        if report.ordering_holds() { "holds" } else { "does not hold" }
    );
    Ok(())
}
