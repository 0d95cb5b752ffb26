//! Web access logs: browsing sessions over a small site, and attack
//! bursts.

use chrono::DateTime;
use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::rng;
use crate::weblog::LogRecord;

const SITE: &[(&str, u64)] = &[
    ("/", 5120),
    ("/index.html", 5120),
    ("/products", 8340),
    ("/products/widget", 6120),
    ("/products/gadget", 6410),
    ("/products/gizmo", 5980),
    ("/cart", 2210),
    ("/checkout", 3120),
    ("/login", 1870),
    ("/account", 2950),
    ("/search?q=widget", 7300),
    ("/search?q=gadget", 7110),
    ("/blog", 9200),
    ("/blog/2024/launch", 11200),
    ("/blog/2024/update", 10400),
    ("/about", 3000),
    ("/contact", 2100),
    ("/static/app.js", 48200),
    ("/static/style.css", 12100),
    ("/favicon.ico", 1150),
];

/// Likely next pages from each page index.
fn next_page(rng: &mut rng::Rng, cur: usize) -> usize {
    let choices: &[usize] = match cur {
        0 | 1 => &[2, 12, 15, 8, 10, 17, 18],
        2 => &[3, 4, 5, 10, 11, 0],
        3..=5 => &[6, 2, 3, 4, 5],
        6 => &[7, 2, 3],
        7 => &[9, 0],
        8 => &[9, 0],
        9 => &[2, 6, 0],
        10 | 11 => &[3, 4, 5, 2],
        12 => &[13, 14, 0],
        13 | 14 => &[12, 0, 2],
        15 => &[16, 0],
        16 => &[0],
        _ => &[0, 1],
    };
    *choices.choose(rng).expect("nonempty")
}

const USER_AGENTS: &[(&str, u32)] = &[
    ("Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/124.0 Safari/537.36", 40),
    ("Mozilla/5.0 (Macintosh; Intel Mac OS X 14_4) AppleWebKit/605.1.15 (KHTML, like Gecko) Version/17.4 Safari/605.1.15", 20),
    ("Mozilla/5.0 (X11; Linux x86_64; rv:125.0) Gecko/20100101 Firefox/125.0", 15),
    ("Mozilla/5.0 (iPhone; CPU iPhone OS 17_4 like Mac OS X) AppleWebKit/605.1.15 Mobile/15E148", 15),
    ("Mozilla/5.0 (Linux; Android 14) AppleWebKit/537.36 Chrome/124.0 Mobile Safari/537.36", 8),
    ("Mozilla/5.0 (compatible; Googlebot/2.1; +http://www.google.com/bot.html)", 2),
];

const EXTERNAL_REFERRERS: &[&str] = &[
    "https://www.google.com/",
    "https://www.bing.com/search?q=widgets",
    "https://duckduckgo.com/",
    "https://news.ycombinator.com/",
];

const SITE_HOST: &str = "https://www.example.com";

fn weighted<'a>(rng: &mut rng::Rng, items: &'a [(&'a str, u32)]) -> &'a str {
    let total: u32 = items.iter().map(|(_, w)| w).sum();
    let mut r = rng.random_range(0..total);
    for (s, w) in items {
        if r < *w {
            return s;
        }
        r -= w;
    }
    items[0].0
}

#[derive(Debug, Clone)]
pub struct BenignSpec {
    pub seed: u64,
    /// Unix seconds of the first request.
    pub start: i64,
    pub duration_s: i64,
    pub requests_per_minute: usize,
    pub clients: usize,
}

impl Default for BenignSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            start: 1_718_000_000,
            duration_s: 3600,
            requests_per_minute: 60,
            clients: 150,
        }
    }
}

struct Client {
    ip: String,
    ua: &'static str,
    page: usize,
}

/// Browsing traffic: clients follow links around the site, with a few
/// arriving from search engines.
pub fn benign_log(spec: &BenignSpec) -> Vec<LogRecord> {
    let mut rng = rng::seeded(spec.seed);
    let mut clients: Vec<Client> = (0..spec.clients.max(1))
        .map(|i| Client {
            ip: format!("{}.{}.{}.{}", 23 + i % 170, (i * 37) % 256, (i * 91) % 256, 1 + i % 250),
            ua: weighted(&mut rng, USER_AGENTS),
            page: 0,
        })
        .collect();
    // uniform arrival times
    let n = (spec.duration_s.max(1) as usize * spec.requests_per_minute).div_ceil(60);
    let mut times: Vec<i64> = (0..n)
        .map(|_| spec.start + rng.random_range(0..spec.duration_s.max(1)))
        .collect();
    times.sort_unstable();
    let mut out = Vec::with_capacity(n);
    for t in times {
        let ci = rng.random_range(0..clients.len());
        let c = &mut clients[ci];
        let fresh = rng.random_bool(0.15);
        let (page, referrer) = if fresh {
            let r = if rng.random_bool(0.5) {
                (*EXTERNAL_REFERRERS.choose(&mut rng).expect("nonempty")).to_owned()
            } else {
                String::new()
            };
            (0, r)
        } else {
            let next = next_page(&mut rng, c.page);
            (next, format!("{SITE_HOST}{}", SITE[c.page].0))
        };
        c.page = page;
        let (path, size) = SITE[page];
        let mut path = path.to_owned();
        if rng.random_bool(0.01) {
            // sloppy links with a doubled slash do occur
            path = format!("/{path}");
        }
        let status = if rng.random_bool(0.02) { 404 } else { 200 };
        let bytes = if status == 200 {
            size + rng.random_range(0..400)
        } else {
            512
        };
        out.push(LogRecord {
            client_ip: c.ip.clone(),
            timestamp: DateTime::from_timestamp(t, 0).expect("valid time").fixed_offset(),
            method: "GET".into(),
            path,
            protocol: "HTTP/1.1".into(),
            status,
            bytes,
            referrer,
            user_agent: c.ua.to_owned(),
        });
    }
    out
}

const TRAVERSAL_TARGETS: &[&str] = &[
    "/../../../../etc/passwd",
    "/static/../../../etc/shadow",
    "/download?file=../../../../windows/win.ini",
    "/%2e%2e%2f%2e%2e%2fetc/passwd",
    "/images/..%2f..%2f..%2fetc/hosts",
    "/./.././../proc/self/environ",
    "/cgi-bin/..//..//etc/passwd",
    "/..%2F..%2F..%2Fboot.ini",
];

/// `n` directory-traversal requests from one address spread over
/// `span_s` seconds starting at `start`.
pub fn traversal_burst(seed: u64, ip: &str, start: i64, span_s: i64, n: usize) -> Vec<LogRecord> {
    let mut rng = rng::seeded(seed);
    let mut times: Vec<i64> = (0..n).map(|_| start + rng.random_range(0..span_s.max(1))).collect();
    times.sort_unstable();
    times
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let base = TRAVERSAL_TARGETS[i % TRAVERSAL_TARGETS.len()];
            LogRecord {
                client_ip: ip.to_owned(),
                timestamp: DateTime::from_timestamp(t, 0).expect("valid time").fixed_offset(),
                method: "GET".into(),
                path: format!(
                    "{base}{}",
                    if i >= TRAVERSAL_TARGETS.len() {
                        format!("?n={i}")
                    } else {
                        String::new()
                    }
                ),
                protocol: "HTTP/1.1".into(),
                status: if rng.random_bool(0.8) { 404 } else { 400 },
                bytes: 230,
                referrer: String::new(),
                user_agent: "DirBuster-1.0-RC1 (http://www.owasp.org)".into(),
            }
        })
        .collect()
}
