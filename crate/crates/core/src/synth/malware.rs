//! Two-family PE corpus: benign utilities and malicious droppers, sharing
//! a pool of common tokens with a controllable amount of cross-over.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use crate::malwarelab::PeBuilder;
use crate::rng;

const SHARED_STRINGS: &[&str] = &[
    "Microsoft Visual C++ Runtime Library",
    "GetLastError",
    "runtime error",
    "Assertion failed",
    "KERNEL32.DLL",
    "mscoree.dll",
    "CorExitProcess",
    "bad allocation",
    "Unknown exception",
    "FlsAlloc",
    "InitializeCriticalSectionEx",
    "LC_ALL",
    "string too long",
    "invalid argument",
    "vector too long",
];

const BENIGN_STRINGS: &[&str] = &[
    "Copyright (C) Contoso Ltd.",
    "Settings saved successfully",
    "Open File...",
    "Help Topics",
    "About this application",
    "Print Preview",
    "Check for updates",
    "Save changes before closing?",
    "Recent Documents",
    "Select All",
    "Find and Replace",
    "Toolbar",
    "Status Bar",
    "Page Setup",
    "Undo Typing",
    "https://www.contoso.com/support",
    "Licensed to registered user",
    "Version 2.4.1 build",
    "Font Settings",
    "Zoom In",
];

const MALICIOUS_STRINGS: &[&str] = &[
    "cmd.exe /c del",
    "keylog.txt",
    "Global\\mtx_4f2a91",
    "http://update-check.xyz/gate.php",
    "http://185.220.101.4/panel/upload",
    "SOFTWARE\\Microsoft\\Windows\\CurrentVersion\\Run",
    "vssadmin delete shadows /all",
    "Your files have been encrypted",
    "bitcoin wallet",
    "beacon interval",
    "cnc.badhost.ru",
    "45.133.1.20",
    "powershell -enc",
    "\\AppData\\Roaming\\svchost.exe",
    "schtasks /create",
    "SeDebugPrivilege",
    "inject payload",
    "socks5 tunnel",
    "stealer config",
    "wallet.dat",
];

const SHARED_IMPORTS: &[(&str, &str)] = &[
    ("kernel32.dll", "ExitProcess"),
    ("kernel32.dll", "GetModuleHandleA"),
    ("kernel32.dll", "GetProcAddress"),
    ("kernel32.dll", "LoadLibraryA"),
    ("kernel32.dll", "CloseHandle"),
    ("kernel32.dll", "GetLastError"),
    ("kernel32.dll", "HeapAlloc"),
];

const BENIGN_IMPORTS: &[(&str, &str)] = &[
    ("user32.dll", "MessageBoxA"),
    ("user32.dll", "CreateWindowExA"),
    ("user32.dll", "GetMessageA"),
    ("user32.dll", "DispatchMessageA"),
    ("gdi32.dll", "TextOutA"),
    ("gdi32.dll", "CreateFontA"),
    ("comdlg32.dll", "GetOpenFileNameA"),
    ("comctl32.dll", "InitCommonControlsEx"),
    ("shell32.dll", "ShellExecuteA"),
    ("kernel32.dll", "ReadFile"),
];

const MALICIOUS_IMPORTS: &[(&str, &str)] = &[
    ("kernel32.dll", "VirtualAllocEx"),
    ("kernel32.dll", "WriteProcessMemory"),
    ("kernel32.dll", "CreateRemoteThread"),
    ("kernel32.dll", "OpenProcess"),
    ("ws2_32.dll", "connect"),
    ("ws2_32.dll", "send"),
    ("ws2_32.dll", "recv"),
    ("wininet.dll", "InternetOpenUrlA"),
    ("advapi32.dll", "RegSetValueExA"),
    ("advapi32.dll", "CryptEncrypt"),
    ("user32.dll", "SetWindowsHookExA"),
    ("user32.dll", "GetAsyncKeyState"),
];

#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub benign_train: usize,
    pub benign_test: usize,
    pub malicious_train: usize,
    pub malicious_test: usize,
    /// Probability that a class-specific token is drawn from the other
    /// family's pool.
    pub overlap: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    /// Train/test counts at a 70/30 split of 991 benign and 428 malicious
    /// files.
    fn default() -> Self {
        Self {
            benign_train: 694,
            benign_test: 297,
            malicious_train: 299,
            malicious_test: 129,
            overlap: 0.12,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// `(file bytes, malicious)`.
    pub train: Vec<(Vec<u8>, bool)>,
    pub test: Vec<(Vec<u8>, bool)>,
}

fn noise_word(rng: &mut rng::Rng) -> String {
    const ALPHA: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_";
    let n = rng.random_range(5..12);
    (0..n).map(|_| *ALPHA.choose(rng).expect("nonempty") as char).collect()
}

/// One PE file of the given family.
pub fn sample_pe(rng: &mut rng::Rng, malicious: bool, overlap: f64) -> Vec<u8> {
    let (own_s, other_s, own_i, other_i) = if malicious {
        (MALICIOUS_STRINGS, BENIGN_STRINGS, MALICIOUS_IMPORTS, BENIGN_IMPORTS)
    } else {
        (BENIGN_STRINGS, MALICIOUS_STRINGS, BENIGN_IMPORTS, MALICIOUS_IMPORTS)
    };
    let mut strings: Vec<String> = Vec::new();
    for _ in 0..rng.random_range(3..7) {
        strings.push((*SHARED_STRINGS.choose(rng).expect("nonempty")).to_owned());
    }
    for _ in 0..rng.random_range(4..9) {
        let pool = if rng.random_bool(overlap) { other_s } else { own_s };
        strings.push((*pool.choose(rng).expect("nonempty")).to_owned());
    }
    for _ in 0..rng.random_range(2..8) {
        strings.push(noise_word(rng));
    }
    strings.shuffle(rng);

    let mut imports: Vec<(&str, &str)> = SHARED_IMPORTS.choose_multiple(rng, 3).copied().collect();
    for _ in 0..rng.random_range(2..6) {
        let pool = if rng.random_bool(overlap) { other_i } else { own_i };
        let imp = *pool.choose(rng).expect("nonempty");
        if !imports.contains(&imp) {
            imports.push(imp);
        }
    }
    let mut by_dll: Vec<(&str, Vec<&str>)> = Vec::new();
    for (dll, f) in imports {
        match by_dll.iter_mut().find(|(d, _)| *d == dll) {
            Some((_, fs)) => fs.push(f),
            None => by_dll.push((dll, vec![f])),
        }
    }

    let mut data = Vec::new();
    for s in &strings {
        // non-printable filler keeps strings apart
        for _ in 0..rng.random_range(1..6) {
            data.push(rng.random_range(0x80..=0xFFu8));
        }
        data.push(0);
        data.extend_from_slice(s.as_bytes());
        data.push(0);
    }
    let mut b = PeBuilder::new()
        .timestamp(rng.random_range(1_500_000_000..1_700_000_000))
        .data(&data);
    for (dll, fs) in &by_dll {
        b = b.import(dll, fs);
    }
    b.build()
}

pub fn malware_corpus(spec: &CorpusSpec) -> SyntheticCorpus {
    let mut rng = rng::seeded(spec.seed);
    let mut gen = |n_benign: usize, n_mal: usize| -> Vec<(Vec<u8>, bool)> {
        let labels = std::iter::repeat_n(false, n_benign).chain(std::iter::repeat_n(true, n_mal));
        let mut v: Vec<(Vec<u8>, bool)> = labels
            .map(|mal| (sample_pe(&mut rng, mal, spec.overlap), mal))
            .collect();
        v.shuffle(&mut rng);
        v
    };
    let train = gen(spec.benign_train, spec.malicious_train);
    let test = gen(spec.benign_test, spec.malicious_test);
    SyntheticCorpus { train, test }
}
