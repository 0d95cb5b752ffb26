//! Printable strings, network indicators and the two featurizations.

use std::collections::{BTreeMap, HashSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::rng::fnv1a64;
use crate::seqnet::Tokenizer;

pub const DEFAULT_MIN_LEN: usize = 5;
pub const DEFAULT_HASH_DIM: usize = 4096;

/// Maximal runs of printable ASCII (0x20..=0x7E) at least `min_len` long,
/// in file order.
pub fn extract_strings(bytes: &[u8], min_len: usize) -> Vec<String> {
    let min_len = min_len.max(1);
    bytes
        .split(|b| !(0x20..=0x7E).contains(b))
        .filter(|run| run.len() >= min_len)
        .map(|run| String::from_utf8(run.to_vec()).expect("ascii"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndicatorKind {
    Ipv4,
    Hostname,
    Url,
}

impl IndicatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IndicatorKind::Ipv4 => "ipv4",
            IndicatorKind::Hostname => "hostname",
            IndicatorKind::Url => "url",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Indicator {
    pub kind: IndicatorKind,
    pub value: String,
}

/// Top-level domains accepted for bare hostnames.
pub const KNOWN_TLDS: &[&str] = &[
    "com", "net", "org", "info", "biz", "io", "ru", "cn", "xyz", "top", "co", "uk", "de", "fr", "jp", "br", "in", "me",
    "tk", "cc", "su", "onion", "gov", "edu", "mil", "us", "ca", "au", "nl", "pl", "it", "es", "eu", "ir", "kp",
    "online", "site", "club", "pw", "ws", "to", "ly",
];

static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"(?i)https?://[^\s"'<>]+"#).expect("valid regex"));
static DOTTED_DIGITS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[0-9.]+").expect("valid regex"));
static HOST: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)[a-z0-9-]+(?:\.[a-z0-9-]+)+").expect("valid regex"));

const URL_TRAILING: &[char] = &['.', ',', ';', ':', ')', ']', '}', '!', '?'];

/// A run of digits and dots is an address when it has exactly four 1-3
/// digit parts each at most 255 (a trailing sentence dot is ignored).
pub fn parse_ipv4(token: &str) -> Option<String> {
    let t = token.trim_matches('.');
    let parts: Vec<&str> = t.split('.').collect();
    let ok = parts.len() == 4
        && parts
            .iter()
            .all(|p| (1..=3).contains(&p.len()) && p.parse::<u16>().is_ok_and(|v| v <= 255));
    ok.then(|| t.to_owned())
}

/// Dotted name whose labels are valid and whose last label is a known TLD.
pub fn parse_hostname(token: &str) -> Option<String> {
    let t = token.trim_matches(|c| c == '.' || c == '-').to_ascii_lowercase();
    let labels: Vec<&str> = t.split('.').collect();
    if labels.len() < 2 {
        return None;
    }
    let label_ok = |l: &&str| !l.is_empty() && l.len() <= 63 && !l.starts_with('-') && !l.ends_with('-');
    let tld = labels.last().expect("two labels");
    let ok = labels.iter().all(label_ok)
        && KNOWN_TLDS.contains(tld)
        && !labels.iter().all(|l| l.bytes().all(|b| b.is_ascii_digit()));
    ok.then_some(t)
}

fn scan_one(s: &str, out: &mut Vec<(usize, Indicator)>) {
    let mut masked = s.to_owned();
    for m in URL.find_iter(s) {
        let url = m.as_str().trim_end_matches(URL_TRAILING);
        out.push((
            m.start(),
            Indicator {
                kind: IndicatorKind::Url,
                value: url.to_owned(),
            },
        ));
        masked.replace_range(m.range(), &" ".repeat(m.len()));
    }
    for m in DOTTED_DIGITS.find_iter(&masked) {
        if let Some(ip) = parse_ipv4(m.as_str()) {
            out.push((
                m.start(),
                Indicator {
                    kind: IndicatorKind::Ipv4,
                    value: ip,
                },
            ));
        }
    }
    for m in HOST.find_iter(&masked) {
        if let Some(h) = parse_hostname(m.as_str()) {
            out.push((
                m.start(),
                Indicator {
                    kind: IndicatorKind::Hostname,
                    value: h,
                },
            ));
        }
    }
}

/// IPv4 addresses, URLs and bare hostnames found in `strings`, first
/// occurrence order, deduplicated. Hostnames inside a URL are part of the
/// URL indicator and are not reported separately.
pub fn extract_indicators<S: AsRef<str>>(strings: &[S]) -> Vec<Indicator> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for s in strings {
        let mut found = Vec::new();
        scan_one(s.as_ref(), &mut found);
        found.sort_by_key(|(pos, _)| *pos);
        for (_, ind) in found {
            if seen.insert(ind.clone()) {
                out.push(ind);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticFeatures {
    pub strings: Vec<String>,
    pub import_tokens: Vec<String>,
    pub indicators: Vec<Indicator>,
}

/// Which tokens feed the models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// Printable strings only.
    Strings,
    /// Strings, import tokens and `kind:value` indicator tokens.
    #[default]
    Full,
}

impl StaticFeatures {
    pub fn from_parts(strings: Vec<String>, import_tokens: Vec<String>) -> Self {
        let indicators = extract_indicators(&strings);
        Self {
            strings,
            import_tokens,
            indicators,
        }
    }

    /// Token document in extraction order.
    pub fn tokens(&self, set: FeatureSet) -> Vec<String> {
        let mut out = self.strings.clone();
        if set == FeatureSet::Full {
            out.extend(self.import_tokens.iter().cloned());
            out.extend(
                self.indicators
                    .iter()
                    .map(|i| format!("{}:{}", i.kind.as_str(), i.value)),
            );
        }
        out
    }
}

/// Token counts hashed into `dim` buckets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedVector {
    pub dim: usize,
    pub counts: BTreeMap<u32, u32>,
}

impl HashedVector {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for (&k, &c) in &self.counts {
            v[k as usize] = c as f64;
        }
        v
    }

    pub fn add(&self, other: &HashedVector) -> HashedVector {
        let mut counts = self.counts.clone();
        for (&k, &c) in &other.counts {
            *counts.entry(k).or_default() += c;
        }
        HashedVector { dim: self.dim, counts }
    }
}

/// Bucket of a token: 64-bit FNV-1a of its UTF-8 bytes, masked to `dim`.
pub fn bucket(token: &str, dim: usize) -> u32 {
    debug_assert!(dim.is_power_of_two());
    (fnv1a64(token.as_bytes()) & (dim as u64 - 1)) as u32
}

pub fn hash_tokens<S: AsRef<str>>(tokens: &[S], dim: usize) -> HashedVector {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(bucket(t.as_ref(), dim)).or_default() += 1;
    }
    HashedVector { dim, counts }
}

/// Panics unless `dim` is a power of two of at least 2.
pub fn featurize_hash(features: &StaticFeatures, set: FeatureSet, dim: usize) -> HashedVector {
    assert!(
        dim >= 2 && dim.is_power_of_two(),
        "hash dim must be a power of two >= 2"
    );
    hash_tokens(&features.tokens(set), dim)
}

pub fn featurize_tokens(features: &StaticFeatures, set: FeatureSet, tokenizer: &Tokenizer, max_len: usize) -> Vec<u32> {
    tokenizer.encode_pad(&features.tokens(set), max_len)
}
