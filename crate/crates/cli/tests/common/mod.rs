//! Fixture writers shared by the CLI test targets.
#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aidr_core::netflow::pcap::Packet;
use aidr_core::netflow::{assemble_flows, extract_features, DEFAULT_IDLE_TIMEOUT_S};
use aidr_core::rng::seeded;
use aidr_core::synth::malware::sample_pe;
use aidr_core::synth::traffic::{normal_traffic, syn_flood, FloodSpec, NormalSpec};
use aidr_core::synth::weblog::{benign_log, BenignSpec};
use aidr_core::weblog::format_log_line;

pub fn aidr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aidr"))
        .args(args)
        .env_remove("AIDR_CONFIG")
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn aidr")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// NSL-KDD formatted rows: synthetic normal sessions plus SYN floods labelled
/// `neptune`.
pub fn write_kdd_csv(path: &Path, seed: u64) {
    let mut f = std::fs::File::create(path).unwrap();
    let normal = NormalSpec {
        seed,
        sessions: 300,
        ..NormalSpec::default()
    };
    let flood = FloodSpec {
        seed: seed + 1,
        packets: 200,
        ..FloodSpec::default()
    };
    for (packets, label) in [(normal_traffic(&normal), "normal"), (syn_flood(&flood), "neptune")] {
        for row in extract_features(&assemble_flows(&packets, DEFAULT_IDLE_TIMEOUT_S)) {
            writeln!(f, "{}", row.kdd_record(label)).unwrap();
        }
    }
}

pub fn mixed_capture() -> Vec<Packet> {
    let normal = normal_traffic(&NormalSpec {
        sessions: 100,
        ..NormalSpec::default()
    });
    let flood = syn_flood(&FloodSpec {
        seed: 77,
        packets: 60,
        ..FloodSpec::default()
    });
    aidr_core::synth::traffic::merge(&[normal, flood])
}

pub fn write_log(path: &Path, spec: &BenignSpec) {
    let text: String = benign_log(spec).iter().map(|r| format_log_line(r) + "\n").collect();
    std::fs::write(path, text).unwrap();
}

/// `dir/benign` and `dir/malicious` with `n` synthetic PE files each.
pub fn write_pe_dir(dir: &Path, n: usize, seed: u64) {
    let mut rng = seeded(seed);
    for (sub, malicious) in [("benign", false), ("malicious", true)] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).unwrap();
        for i in 0..n {
            std::fs::write(
                d.join(format!("{sub}_{i:03}.exe")),
                sample_pe(&mut rng, malicious, 0.05),
            )
            .unwrap();
        }
    }
}

/// A config that keeps the malware models small enough for tests.
pub fn small_malware_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.conf");
    std::fs::write(
        &path,
        "[forest]\nn_estimators = 15\n\n[lstm]\nepochs = 4\nembed_dim = 6\nhidden = 8\n",
    )
    .unwrap();
    path
}
