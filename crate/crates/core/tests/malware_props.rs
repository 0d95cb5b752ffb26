use std::cell::Cell;

use aidr_core::malwarelab::features::hash_tokens;
use aidr_core::malwarelab::features::KNOWN_TLDS;
use aidr_core::malwarelab::{
    analyze, build_report, decide, extract_indicators, featurize_hash, parse_pe, route, CascadeConfig, DecidedBy,
    EvidenceSummary, FeatureSet, Indicator, IndicatorKind, Label, MalwareError, PeBuilder, Route, StaticFeatures,
};
use aidr_core::rng::seeded;
use aidr_core::synth::malware::sample_pe;
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

const TOKENS: &[&str] = &[
    "connect",
    "version",
    "1.2.3.4999",
    "10.0.0.1",
    "192.168.254.7",
    "256.1.1.1",
    "1.2.3",
    "http://evil.ru/payload.bin",
    "https://10.1.1.1:8443/c2",
    "http://cdn.site.com/x,",
    "HTTPS://Update.Example.COM/check?id=7",
    "mail.evil.ru",
    "Update.Example.COM",
    "readme.txt",
    "kernel32.dll",
    "abc-def",
    "c2.botnet.xyz",
    "-bad-.com",
];

fn ipv4_ok(t: &str) -> bool {
    let parts: Vec<&str> = t.split('.').collect();
    parts.len() == 4
        && parts.iter().all(|p| {
            !p.is_empty() && p.len() <= 3 && p.bytes().all(|b| b.is_ascii_digit()) && p.parse::<u32>().unwrap() <= 255
        })
}

fn host_ok(t: &str) -> Option<String> {
    let t = t.trim_matches(|c| c == '.' || c == '-').to_lowercase();
    let labels: Vec<&str> = t.split('.').collect();
    let good = labels.len() >= 2
        && labels.iter().all(|l| {
            !l.is_empty()
                && !l.starts_with('-')
                && !l.ends_with('-')
                && l.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
        })
        && KNOWN_TLDS.contains(labels.last().unwrap())
        && !labels.iter().all(|l| l.bytes().all(|b| b.is_ascii_digit()));
    good.then_some(t)
}

/// Whitespace-token reference scanner for strings built from `TOKENS`.
fn reference(strings: &[String]) -> Vec<Indicator> {
    let mut out: Vec<Indicator> = Vec::new();
    for s in strings {
        for tok in s.split(' ').filter(|t| !t.is_empty()) {
            let lower = tok.to_lowercase();
            let ind = if lower.starts_with("http://") || lower.starts_with("https://") {
                Some(Indicator {
                    kind: IndicatorKind::Url,
                    value: tok.trim_end_matches([',', '.']).to_string(),
                })
            } else if tok.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
                ipv4_ok(tok).then(|| Indicator {
                    kind: IndicatorKind::Ipv4,
                    value: tok.to_string(),
                })
            } else {
                host_ok(tok).map(|value| Indicator {
                    kind: IndicatorKind::Hostname,
                    value,
                })
            };
            if let Some(i) = ind {
                if !out.contains(&i) {
                    out.push(i);
                }
            }
        }
    }
    out
}

#[test]
fn indicator_scanner_matches_reference() {
    for seed in 0..500 {
        let mut rng = seeded(seed);
        let strings: Vec<String> = (0..rng.random_range(1..6))
            .map(|_| {
                (0..rng.random_range(1..6))
                    .map(|_| *TOKENS.choose(&mut rng).unwrap())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        assert_eq!(extract_indicators(&strings), reference(&strings), "{strings:?}");
    }
}

#[test]
fn three_urls_two_duplicate_hosts() {
    let strings = vec![
        "GET http://a.evil.ru/1 and https://b.evil.ru/2".to_string(),
        "fallback http://c.example.com/3 then c2.botnet.xyz".to_string(),
        "again c2.botnet.xyz".to_string(),
    ];
    let got = extract_indicators(&strings);
    assert_eq!(got, reference(&strings));
    let count = |k| got.iter().filter(|i| i.kind == k).count();
    assert_eq!((count(IndicatorKind::Url), count(IndicatorKind::Hostname)), (3, 1));
}

fn feats(tokens: &[String]) -> StaticFeatures {
    StaticFeatures {
        strings: tokens.to_vec(),
        import_tokens: vec![],
        indicators: vec![],
    }
}

proptest! {
    #[test]
    fn hashing_is_permutation_invariant_and_additive(
        a in prop::collection::vec("[a-z]{1,6}", 0..40),
        b in prop::collection::vec("[A-Z]{1,6}", 0..40),
        seed in any::<u64>(),
    ) {
        let dim = 64;
        let mut shuffled = a.clone();
        shuffled.shuffle(&mut seeded(seed));
        prop_assert_eq!(
            featurize_hash(&feats(&a), FeatureSet::Strings, dim),
            featurize_hash(&feats(&shuffled), FeatureSet::Strings, dim)
        );
        let joined: Vec<String> = a.iter().chain(&b).cloned().collect();
        prop_assert_eq!(
            hash_tokens(&joined, dim),
            hash_tokens(&a, dim).add(&hash_tokens(&b, dim))
        );
        let total: u32 = hash_tokens(&joined, dim).counts.values().sum();
        prop_assert_eq!(total as usize, joined.len());
    }
}

#[test]
fn parse_pe_survives_fuzzing() {
    let mut rng = seeded(77);
    let valid: Vec<Vec<u8>> = (0..20).map(|i| sample_pe(&mut rng, i % 2 == 0, 0.1)).collect();
    let mut outcomes = [0usize; 3];
    for i in 0..10_000 {
        let input: Vec<u8> = match i % 3 {
            0 => {
                let n = rng.random_range(0..2048);
                let mut v: Vec<u8> = (0..n).map(|_| rng.random()).collect();
                if n >= 2 && rng.random_bool(0.5) {
                    v[..2].copy_from_slice(b"MZ");
                }
                v
            }
            1 => {
                let v = valid.choose(&mut rng).unwrap();
                v[..rng.random_range(0..v.len())].to_vec()
            }
            _ => {
                let mut v = valid.choose(&mut rng).unwrap().clone();
                for _ in 0..rng.random_range(1..16) {
                    let at = rng.random_range(0..v.len().min(1024));
                    v[at] = rng.random();
                }
                v
            }
        };
        // Every input ends in exactly one of: a PE analysis, "not a PE", a
        // parse error.
        match analyze(&input, 5) {
            Ok(_) => outcomes[0] += 1,
            Err(MalwareError::NotPe) => outcomes[1] += 1,
            Err(MalwareError::Pe(_)) => outcomes[2] += 1,
            Err(e) => panic!("unexpected error {e}"),
        }
        let _ = parse_pe(&input);
    }
    assert!(outcomes.iter().all(|&n| n > 0), "{outcomes:?}");
}

#[test]
fn cascade_routing_invariant() {
    let cfg = CascadeConfig::default();
    let mut rng = seeded(5);
    for i in 0..10_000 {
        let p = match i % 10 {
            0 => 0.7,
            1 => 0.5,
            _ => rng.random::<f64>(),
        };
        let q = rng.random::<f64>();
        let called = Cell::new(false);
        let v = decide(p, &cfg, EvidenceSummary::default(), || {
            called.set(true);
            q
        });
        assert!(v.is_consistent(&cfg), "p {p}: {v:?}");
        assert_eq!(called.get(), (0.5..0.7).contains(&p));
        match v.decided_by {
            DecidedBy::Primary => assert_eq!(v.label == Label::Malicious, p >= 0.7),
            DecidedBy::Secondary => assert_eq!(v.label == Label::Malicious, q > 0.5),
        }
    }
    assert_eq!(route(0.7, &cfg), Route::Primary(Label::Malicious));
    assert_eq!(route(0.5, &cfg), Route::Secondary);
    assert_eq!(route(0.7 - 1e-12, &cfg), Route::Secondary);
    assert_eq!(route(0.5 - 1e-12, &cfg), Route::Primary(Label::Benign));
    let v = decide(0.6, &cfg, EvidenceSummary::default(), || 0.4);
    assert_eq!((v.label, v.decided_by), (Label::Benign, DecidedBy::Secondary));
}

#[test]
fn report_is_deterministic_and_carries_the_scan() {
    let bytes = PeBuilder::new()
        .import("KERNEL32.dll", &["ExitProcess", "GetTickCount"])
        .import("user32.dll", &["MessageBoxA"])
        .data(b"\0Hello from the installer\0see https://vendor.example.com/help\0")
        .build();
    let (info, f) = analyze(&bytes, 5).unwrap();
    let v = decide(
        0.1,
        &CascadeConfig::default(),
        EvidenceSummary::of(&f),
        || unreachable!(),
    );
    let a = build_report(&info, &f, &v);
    let b = build_report(&info, &f, &v);
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.indicators, extract_indicators(&f.strings));
    assert_eq!(a.verdict.label, Label::Benign);
    let funcs: Vec<&str> = a
        .imports
        .iter()
        .flat_map(|i| i.functions.iter().map(String::as_str))
        .collect();
    assert_eq!(funcs, ["ExitProcess", "GetTickCount", "MessageBoxA"]);
    assert!(a.to_text().contains("MessageBoxA"));
}
