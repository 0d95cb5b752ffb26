use std::time::Instant;

use aidr_core::evalkit::{classification_report, confusion, metrics};
use aidr_core::forest::{fit_forest, ForestParams};
use aidr_core::netflow::{classify_stream, rows_from_pcap, TrafficClassifier};
use aidr_core::opsd::container::{load_kind, save_model, Model, ModelKind};
use aidr_core::tabular::{
    load_csv, preprocess_with, LabelMap, PreprocessOptions, Preprocessed, Schema, Standardizer, NSL_KDD_DROP,
    UNSW_NB15_DROP,
};
use anyhow::{bail, Context, Result};

use crate::args::{DataArgs, DataFormat, NetclfCmd};
use crate::settings::Settings;

const DEFAULT_MODEL: &str = "netclf.aidr";

fn load(data: &DataArgs, classes: Vec<String>) -> Result<Preprocessed> {
    let (schema, drop): (Schema, &[&str]) = match data.format {
        DataFormat::NslKdd => (Schema::nsl_kdd(), &NSL_KDD_DROP),
        DataFormat::UnswNb15 => (Schema::unsw_nb15(), &UNSW_NB15_DROP),
    };
    let table = load_csv(&data.data, &schema).with_context(|| format!("loading {}", data.data.display()))?;
    let label_map = data.label_map.as_ref().map(LabelMap::load).transpose()?;
    let opts = PreprocessOptions {
        drop: drop.iter().map(|s| s.to_string()).collect(),
        label_map,
        classes,
    };
    let p = preprocess_with(&table, &opts)?;
    if p.dropped_rows > 0 {
        eprintln!("dropped {} rows with missing values", p.dropped_rows);
    }
    Ok(p)
}

fn forest_params(s: &Settings, trees: Option<usize>) -> Result<ForestParams> {
    let d = ForestParams::default();
    let p = ForestParams {
        n_estimators: s.pick(trees, "forest.n_estimators", d.n_estimators)?,
        min_samples_split: s.pick(None, "forest.min_samples_split", d.min_samples_split)?,
        max_samples: s.opt("forest.max_samples")?.or(d.max_samples),
        seed: s.seed,
        features_per_split: s.opt("forest.features_per_split")?.or(d.features_per_split),
    };
    p.validate()?;
    Ok(p)
}

fn load_classifier(s: &Settings) -> Result<TrafficClassifier> {
    let path = s.model(DEFAULT_MODEL)?;
    match load_kind(&path, ModelKind::Forest).with_context(|| format!("loading {}", path.display()))? {
        Model::Forest(c) => Ok(c),
        _ => unreachable!("load_kind checked the kind"),
    }
}

pub fn run(s: &Settings, cmd: &NetclfCmd) -> Result<()> {
    match cmd {
        NetclfCmd::Train {
            data,
            out,
            trees,
            normal_class,
        } => {
            let t0 = Instant::now();
            let ds = load(data, vec![])?.dataset;
            let params = forest_params(s, *trees)?;
            let st = Standardizer::fit(&ds.x)?;
            let mut z = ds.clone();
            z.x = st.apply(&ds.x)?;
            let forest = fit_forest(&z, &params)?;
            let normal = normal_class.clone().unwrap_or_else(|| match data.format {
                DataFormat::NslKdd => "normal".into(),
                DataFormat::UnswNb15 => "Normal".into(),
            });
            let model = TrafficClassifier::new(forest, st, ds.feature_names.clone(), normal)?;
            let path = s.output(out.as_deref(), DEFAULT_MODEL);
            save_model(&Model::Forest(model), &path)?;
            eprintln!(
                "trained {} trees on {} rows, {} features, {} classes in {:.1}s -> {}",
                params.n_estimators,
                ds.len(),
                ds.n_features(),
                ds.classes.len(),
                t0.elapsed().as_secs_f64(),
                path.display()
            );
        }
        NetclfCmd::Eval { data, json } => {
            let model = load_classifier(s)?;
            let ds = load(data, model.forest.classes().to_vec())?.dataset;
            if ds.feature_names != model.feature_names {
                bail!(
                    "feature columns of {} do not match the model ({} vs {} columns)",
                    data.data.display(),
                    ds.n_features(),
                    model.feature_names.len()
                );
            }
            let z = model.standardizer.apply(&ds.x)?;
            let pred = model.forest.predict(&z)?;
            let cm = confusion(&ds.y, &pred, ds.classes.len())?;
            let m = metrics(&cm)?;
            let unseen = ds.classes.len() - model.forest.classes().len();
            if *json {
                println!(
                    "{}",
                    serde_json::json!({
                        "accuracy": m.accuracy,
                        "rows": ds.len(),
                        "classes": ds.classes,
                        "unseen_classes": unseen,
                        "metrics": m,
                    })
                );
            } else {
                println!("rows: {}", ds.len());
                println!("accuracy: {:.4}", m.accuracy);
                if unseen > 0 {
                    println!("classes absent from training: {unseen}");
                }
                println!();
                print!("{}", classification_report(&m, &ds.classes));
            }
        }
        NetclfCmd::Classify { pcap, alerts } => {
            let model = load_classifier(s)?;
            let (cap, rows) = rows_from_pcap(pcap)?;
            let hub = crate::alert_hub(s, alerts);
            let preds = classify_stream(&model, &rows, &hub)?;
            let mut by_class = std::collections::BTreeMap::<&str, usize>::new();
            for p in preds.iter().filter(|p| p.is_attack) {
                *by_class.entry(&p.class).or_default() += 1;
            }
            eprintln!(
                "{} packets ({} skipped, {} decode errors), {} connections, {} flagged",
                cap.packets.len(),
                cap.skipped_non_ipv4 + cap.skipped_protocol,
                cap.decode_errors,
                rows.len(),
                by_class.values().sum::<usize>()
            );
            for (class, n) in by_class {
                eprintln!("  {class}: {n}");
            }
        }
    }
    Ok(())
}
