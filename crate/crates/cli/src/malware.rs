use std::path::Path;
use std::time::{Duration, Instant};

use aidr_core::evalkit::roc;
use aidr_core::forest::ForestParams;
use aidr_core::malwarelab::{
    build_report, cascade_classify, train_bundle, CascadeConfig, Corpus, FeatureSet, Label, MalwareBundle,
    MalwareError, MalwareTrainParams, Report,
};
use aidr_core::opsd::container::{load_kind, save_model, Model, ModelKind};
use aidr_core::opsd::watch::DirWatcher;
use aidr_core::seqnet::TrainConfig;
use anyhow::{bail, Context, Result};

use crate::args::MalwareCmd;
use crate::serve::{self, ScanResponse};
use crate::settings::{Settings, UsageError};

const DEFAULT_MODEL: &str = "malware.aidr";

pub fn load_bundle(s: &Settings) -> Result<MalwareBundle> {
    let path = s.model(DEFAULT_MODEL)?;
    match load_kind(&path, ModelKind::MalwareBundle).with_context(|| format!("loading {}", path.display()))? {
        Model::Malware(b) => Ok(b),
        _ => unreachable!("load_kind checked the kind"),
    }
}

fn cascade_config(s: &Settings) -> Result<CascadeConfig> {
    let d = CascadeConfig::default();
    let feature_set = match s.config.get("malware.feature_set") {
        None => d.feature_set,
        Some("full") => FeatureSet::Full,
        Some("strings") => FeatureSet::Strings,
        Some(other) => bail!("malware.feature_set must be `full` or `strings`, got {other:?}"),
    };
    let cfg = CascadeConfig {
        hi: s.pick(None, "malware.hi", d.hi)?,
        lo: s.pick(None, "malware.lo", d.lo)?,
        hash_dim: s.pick(None, "malware.hash_dim", d.hash_dim)?,
        min_len: s.pick(None, "malware.min_len", d.min_len)?,
        max_len: s.pick(None, "malware.max_len", d.max_len)?,
        feature_set,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn train_params(s: &Settings) -> Result<MalwareTrainParams> {
    let d = MalwareTrainParams::default();
    let fd = ForestParams::default();
    let ld = &d.lstm;
    Ok(MalwareTrainParams {
        forest: ForestParams {
            n_estimators: s.pick(None, "forest.n_estimators", fd.n_estimators)?,
            min_samples_split: s.pick(None, "forest.min_samples_split", fd.min_samples_split)?,
            max_samples: s.opt("forest.max_samples")?.or(fd.max_samples),
            seed: s.seed,
            features_per_split: s.opt("forest.features_per_split")?.or(fd.features_per_split),
        },
        lstm: TrainConfig {
            epochs: s.pick(None, "lstm.epochs", ld.epochs)?,
            batch_size: s.pick(None, "lstm.batch_size", ld.batch_size)?,
            learning_rate: s.pick(None, "lstm.learning_rate", ld.learning_rate)?,
            clip_norm: s.opt("lstm.clip_norm")?.or(ld.clip_norm),
            seed: s.seed,
            ..ld.clone()
        },
        embed_dim: s.pick(None, "lstm.embed_dim", d.embed_dim)?,
        hidden: s.pick(None, "lstm.hidden", d.hidden)?,
        max_words: s.pick(None, "lstm.max_words", d.max_words)?,
    })
}

/// `(bytes, malicious)` for every file in `dir/benign` and `dir/malicious`.
fn labelled_files(dir: &Path) -> Result<Vec<(Vec<u8>, bool)>> {
    let mut out = Vec::new();
    for (sub, malicious) in [("benign", false), ("malicious", true)] {
        let d = dir.join(sub);
        if !d.is_dir() {
            return Err(UsageError(format!(
                "{} must contain benign/ and malicious/ directories",
                dir.display()
            ))
            .into());
        }
        for p in crate::list_files(&d)? {
            out.push((
                std::fs::read(&p).with_context(|| format!("reading {}", p.display()))?,
                malicious,
            ));
        }
    }
    Ok(out)
}

fn accuracy(pred: &[bool], truth: &[bool]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len().max(1) as f64
}

fn evaluate(bundle: &MalwareBundle, test: &Corpus) -> Result<()> {
    let truth = &test.malicious;
    let rf: Vec<f64> = test
        .features
        .iter()
        .map(|f| bundle.rf_probability(f))
        .collect::<Result<_, _>>()?;
    let lstm: Vec<f64> = test.features.iter().map(|f| bundle.lstm_probability(f)).collect();
    let cascade: Vec<bool> = test
        .features
        .iter()
        .map(|f| bundle.classify_features(f).map(|v| v.label == Label::Malicious))
        .collect::<Result<_, _>>()?;
    let rf_pred: Vec<bool> = rf.iter().map(|&p| p >= 0.5).collect();
    let lstm_pred: Vec<bool> = lstm.iter().map(|&p| p > 0.5).collect();
    println!("test files: {} ({} skipped)", test.len(), test.skipped);
    println!(
        "random forest  accuracy {:.4}  auc {:.4}",
        accuracy(&rf_pred, truth),
        roc(truth, &rf)?.auc
    );
    println!(
        "lstm           accuracy {:.4}  auc {:.4}",
        accuracy(&lstm_pred, truth),
        roc(truth, &lstm)?.auc
    );
    println!("cascade        accuracy {:.4}", accuracy(&cascade, truth));
    Ok(())
}

pub enum ScanOutcome {
    Verdict(ScanResponse, Box<Report>),
    Skipped(String),
}

pub fn scan_bytes(bundle: &MalwareBundle, name: &str, bytes: &[u8]) -> Result<ScanOutcome, MalwareError> {
    match cascade_classify(bundle, bytes) {
        Ok(a) => {
            let report = build_report(&a.info, &a.features, &a.verdict);
            Ok(ScanOutcome::Verdict(ScanResponse::new(name, &report), Box::new(report)))
        }
        Err(MalwareError::NotPe) => Ok(ScanOutcome::Skipped("not a PE file".into())),
        Err(e) => Err(e),
    }
}

fn scan_one(bundle: &MalwareBundle, path: &Path, reports: Option<&Path>, json: bool) -> Result<()> {
    let name = path
        .file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    match scan_bytes(bundle, &name, &bytes) {
        Ok(ScanOutcome::Verdict(resp, report)) => {
            if let Some(dir) = reports {
                serve::store_report(dir, &report)?;
            }
            if json {
                println!("{}", serde_json::to_string(&resp)?);
            } else {
                let lstm = resp
                    .lstm_probability
                    .map_or_else(|| "-".to_string(), |p| format!("{p:.3}"));
                println!(
                    "{name}\t{}\trf {:.3}\tlstm {lstm}\t{}",
                    resp.verdict, resp.rf_probability, resp.report_id
                );
            }
        }
        Ok(ScanOutcome::Skipped(why)) => {
            if json {
                println!("{}", serde_json::json!({ "filename": name, "skipped": why }));
            } else {
                println!("{name}\tskipped ({why})");
            }
        }
        Err(e) => {
            if json {
                println!("{}", serde_json::json!({ "filename": name, "error": e.to_string() }));
            } else {
                println!("{name}\terror ({e})");
            }
        }
    }
    Ok(())
}

pub fn run(s: &Settings, cmd: &MalwareCmd) -> Result<()> {
    match cmd {
        MalwareCmd::Train { data, test, out } => {
            let t0 = Instant::now();
            let cfg = cascade_config(s)?;
            let params = train_params(s)?;
            let corpus = Corpus::from_files(&labelled_files(data)?, cfg.min_len)?;
            let (bundle, summary) = train_bundle(&corpus, &cfg, &params)?;
            let path = s.output(out.as_deref(), DEFAULT_MODEL);
            eprintln!(
                "trained on {} files ({} skipped) in {:.1}s, lstm train accuracy {:.4} -> {}",
                summary.used,
                summary.skipped,
                t0.elapsed().as_secs_f64(),
                summary.lstm_train_accuracy,
                path.display()
            );
            if let Some(t) = test {
                let test = Corpus::from_files(&labelled_files(t)?, cfg.min_len)?;
                evaluate(&bundle, &test)?;
            }
            save_model(&Model::Malware(bundle), &path)?;
        }
        MalwareCmd::Scan {
            path,
            reports,
            json,
            watch,
            interval_ms,
            max_polls,
        } => {
            let bundle = load_bundle(s)?;
            if *watch {
                if !path.is_dir() {
                    return Err(UsageError("--watch needs a directory".into()).into());
                }
                let mut w = DirWatcher::new(path);
                let mut polls = 0u64;
                loop {
                    for p in w.poll()? {
                        scan_one(&bundle, &p, reports.as_deref(), *json)?;
                    }
                    polls += 1;
                    if max_polls.is_some_and(|m| polls >= m) {
                        break;
                    }
                    std::thread::sleep(Duration::from_millis(*interval_ms));
                }
            } else if path.is_dir() {
                for p in crate::list_files(path)? {
                    scan_one(&bundle, &p, reports.as_deref(), *json)?;
                }
            } else {
                scan_one(&bundle, path, reports.as_deref(), *json)?;
            }
        }
        MalwareCmd::Serve { addr, reports } => {
            let bundle = load_bundle(s)?;
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(serve::serve(*addr, bundle, reports.clone()))?;
        }
    }
    Ok(())
}
