use std::time::Duration;

use aidr_core::isoforest::IsoParams;
use aidr_core::opsd::container::{load_kind, save_model, Model, ModelKind};
use aidr_core::opsd::watch::LineTail;
use aidr_core::weblog::{
    parse_log_line, read_log, score_window, train_wids, windows, LogRecord, LogWindow, WidsModel, WidsParams,
    DEFAULT_ALERT_THRESHOLD, DEFAULT_WINDOW_SECONDS,
};
use anyhow::{Context, Result};

use crate::args::WidsCmd;
use crate::settings::{Settings, UsageError};

const DEFAULT_MODEL: &str = "wids.aidr";

fn load_model(s: &Settings) -> Result<WidsModel> {
    let path = s.model(DEFAULT_MODEL)?;
    match load_kind(&path, ModelKind::WidsBundle).with_context(|| format!("loading {}", path.display()))? {
        Model::Wids(m) => Ok(m),
        _ => unreachable!("load_kind checked the kind"),
    }
}

fn print_window(w: &LogWindow, anomalies: usize, alert: bool) {
    let start = chrono::DateTime::from_timestamp(w.start, 0).map_or_else(|| w.start.to_string(), |t| t.to_rfc3339());
    eprintln!(
        "{start}  requests {:>5}  anomalies {:>4}{}",
        w.records.len(),
        anomalies,
        if alert { "  ALERT" } else { "" }
    );
}

pub fn run(s: &Settings, cmd: &WidsCmd) -> Result<()> {
    match cmd {
        WidsCmd::Train { log, out, tuning } => {
            let parsed = read_log(log)?;
            let d = IsoParams::default();
            let params = WidsParams {
                iso: IsoParams {
                    num_trees: s.pick(None, "iso.num_trees", d.num_trees)?,
                    num_samples: s.pick(None, "iso.num_samples", d.num_samples)?,
                    contamination: s.pick(tuning.contamination, "iso.contamination", d.contamination)?,
                    seed: s.seed,
                },
                window_seconds: s.pick(tuning.window_seconds, "wids.window_seconds", DEFAULT_WINDOW_SECONDS)?,
                alert_threshold: s.pick(tuning.threshold, "wids.alert_threshold", DEFAULT_ALERT_THRESHOLD)?,
            };
            let model = train_wids(&parsed.records, &params)?;
            let path = s.output(out.as_deref(), DEFAULT_MODEL);
            let n_windows = windows(&parsed.records, params.window_seconds).len();
            save_model(&Model::Wids(model), &path)?;
            eprintln!(
                "trained on {} requests ({} malformed lines skipped) in {} windows -> {}",
                parsed.records.len(),
                parsed.malformed,
                n_windows,
                path.display()
            );
        }
        WidsCmd::Score { log, alerts } => {
            let model = load_model(s)?;
            let parsed = read_log(log)?;
            let hub = crate::alert_hub(s, alerts);
            let mut n_alerts = 0;
            for w in windows(&parsed.records, model.window_seconds) {
                let sc = score_window(&model, &w, &hub)?;
                n_alerts += usize::from(sc.alert.is_some());
                print_window(&w, sc.anomaly_count, sc.alert.is_some());
            }
            eprintln!("{} malformed lines skipped, {n_alerts} alerts", parsed.malformed);
        }
        WidsCmd::Watch {
            log,
            interval_ms,
            max_polls,
            alerts,
        } => {
            if *interval_ms == 0 {
                return Err(UsageError("--interval-ms must be > 0".into()).into());
            }
            let model = load_model(s)?;
            let hub = crate::alert_hub(s, alerts);
            let width = model.window_seconds as i64;
            let mut tail = LineTail::new(log);
            let mut pending: Vec<LogRecord> = Vec::new();
            let mut current: Option<i64> = None;
            let mut malformed = 0usize;
            let flush = |start: i64, records: &mut Vec<LogRecord>| -> Result<()> {
                if records.is_empty() {
                    return Ok(());
                }
                let w = LogWindow {
                    start,
                    end: start + width,
                    records: std::mem::take(records),
                };
                let sc = score_window(&model, &w, &hub)?;
                print_window(&w, sc.anomaly_count, sc.alert.is_some());
                Ok(())
            };
            let mut polls = 0u64;
            loop {
                for line in tail.poll().with_context(|| format!("reading {}", log.display()))? {
                    let Ok(r) = parse_log_line(&line) else {
                        malformed += usize::from(!line.trim().is_empty());
                        continue;
                    };
                    let start = r.timestamp.timestamp().div_euclid(width) * width;
                    match current {
                        Some(c) if start > c => {
                            flush(c, &mut pending)?;
                            current = Some(start);
                        }
                        None => current = Some(start),
                        // Late lines join the open window.
                        _ => {}
                    }
                    pending.push(r);
                }
                polls += 1;
                if max_polls.is_some_and(|m| polls >= m) {
                    break;
                }
                std::thread::sleep(Duration::from_millis(*interval_ms));
            }
            if let Some(c) = current {
                flush(c, &mut pending)?;
            }
            if malformed > 0 {
                eprintln!("{malformed} malformed lines skipped");
            }
        }
    }
    Ok(())
}
