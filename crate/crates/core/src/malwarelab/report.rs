//! Scan reports: a serializable document and its text rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::features::{Indicator, StaticFeatures};
use super::pe::{Import, PeInfo, Section};
use super::{DecidedBy, Label, Verdict};
use crate::rng::fnv1a64;

pub const STRINGS_SAMPLE: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Headers {
    pub machine: String,
    pub machine_code: u16,
    pub timestamp: u32,
    pub pe32_plus: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub report_id: String,
    pub verdict: Verdict,
    pub headers: Headers,
    pub sections: Vec<Section>,
    pub imports: Vec<Import>,
    pub strings_total: usize,
    pub strings_sample: Vec<String>,
    pub indicators: Vec<Indicator>,
}

/// Hex identifier derived from the report content.
fn content_id(body: &Report) -> String {
    let json = serde_json::to_vec(body).expect("report serializes");
    format!("{:016x}", fnv1a64(&json))
}

pub fn build_report(info: &PeInfo, feats: &StaticFeatures, v: &Verdict) -> Report {
    let mut r = Report {
        report_id: String::new(),
        verdict: v.clone(),
        headers: Headers {
            machine: info.machine_name().to_owned(),
            machine_code: info.machine,
            timestamp: info.timestamp,
            pe32_plus: info.pe32_plus,
        },
        sections: info.sections.clone(),
        imports: info.imports.clone(),
        strings_total: feats.strings.len(),
        strings_sample: feats.strings.iter().take(STRINGS_SAMPLE).cloned().collect(),
        indicators: feats.indicators.clone(),
    };
    r.report_id = content_id(&r);
    r
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let v = &self.verdict;
        let mut s = String::new();
        let _ = writeln!(s, "report {}", self.report_id);
        let _ = writeln!(
            s,
            "verdict: {} (decided by {} model)",
            v.label.as_str(),
            match v.decided_by {
                DecidedBy::Primary => "primary",
                DecidedBy::Secondary => "secondary",
            }
        );
        let _ = writeln!(s, "rf probability: {:.4}", v.rf_probability);
        match v.lstm_probability {
            Some(p) => {
                let _ = writeln!(s, "lstm probability: {p:.4}");
            }
            None => {
                let _ = writeln!(s, "lstm probability: -");
            }
        }
        let h = &self.headers;
        let _ = writeln!(
            s,
            "\nheaders: machine {} (0x{:04x}), timestamp {}, {}",
            h.machine,
            h.machine_code,
            h.timestamp,
            if h.pe32_plus { "PE32+" } else { "PE32" }
        );
        let _ = writeln!(s, "\nsections:");
        for sec in &self.sections {
            let _ = writeln!(
                s,
                "  {:<8} va 0x{:08x} vsize {:>8} raw {:>8} flags 0x{:08x}",
                sec.name, sec.virtual_address, sec.virtual_size, sec.raw_size, sec.characteristics
            );
        }
        let _ = writeln!(s, "\nimports:");
        for imp in &self.imports {
            let _ = writeln!(s, "  {}: {}", imp.dll, imp.functions.join(", "));
        }
        let _ = writeln!(s, "\nindicators:");
        if self.indicators.is_empty() {
            let _ = writeln!(s, "  none");
        }
        for i in &self.indicators {
            let _ = writeln!(s, "  {:<8} {}", i.kind.as_str(), i.value);
        }
        let _ = writeln!(
            s,
            "\nstrings ({} shown of {}):",
            self.strings_sample.len(),
            self.strings_total
        );
        for st in &self.strings_sample {
            let _ = writeln!(s, "  {st}");
        }
        s
    }

    pub fn is_malicious(&self) -> bool {
        self.verdict.label == Label::Malicious
    }
}
