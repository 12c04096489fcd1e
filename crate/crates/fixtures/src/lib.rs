//! Synthetic flow records in the NSL-KDD column layout, for tests that must
//! run without the real dataset.
//!
//! Each line has 41 attributes, the attack label and a difficulty score. The
//! traffic is crude but keeps the structure the detectors care about: normal
//! connections look alike, and each attack family differs from them in a
//! characteristic group of attributes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NUMERIC: usize = 38;

// Positions within the 38 numeric attributes.
const DURATION: usize = 0;
const SRC_BYTES: usize = 1;
const DST_BYTES: usize = 2;
const WRONG_FRAGMENT: usize = 4;
const HOT: usize = 6;
const FAILED_LOGINS: usize = 7;
const LOGGED_IN: usize = 8;
const NUM_COMPROMISED: usize = 9;
const ROOT_SHELL: usize = 10;
const NUM_ROOT: usize = 12;
const FILE_CREATIONS: usize = 13;
const NUM_SHELLS: usize = 14;
const IS_GUEST_LOGIN: usize = 18;
const COUNT: usize = 19;
const SRV_COUNT: usize = 20;
const SERROR_RATE: usize = 21;
const SRV_SERROR_RATE: usize = 22;
const RERROR_RATE: usize = 23;
const SRV_RERROR_RATE: usize = 24;
const SAME_SRV_RATE: usize = 25;
const DIFF_SRV_RATE: usize = 26;
const SRV_DIFF_HOST_RATE: usize = 27;
const DST_HOST_COUNT: usize = 28;
const DST_HOST_SRV_COUNT: usize = 29;
const DST_HOST_SAME_SRV_RATE: usize = 30;
const DST_HOST_DIFF_SRV_RATE: usize = 31;
const DST_HOST_SAME_SRC_PORT_RATE: usize = 32;
const DST_HOST_SRV_DIFF_HOST_RATE: usize = 33;
const DST_HOST_SERROR_RATE: usize = 34;
const DST_HOST_SRV_SERROR_RATE: usize = 35;
const DST_HOST_RERROR_RATE: usize = 36;
const DST_HOST_SRV_RERROR_RATE: usize = 37;

/// Attack families the generator can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Normal,
    Dos,
    Probe,
    R2l,
    U2r,
    /// An attack name absent from the standard category table.
    Unlisted,
}

#[derive(Debug, Clone)]
pub struct FixtureConfig {
    pub records: usize,
    /// Share of records that are attacks.
    pub anomaly_fraction: f64,
    /// Share of attacks drawn to look like normal traffic.
    pub overlap: f64,
    /// Share of attacks carrying a name missing from the category table.
    pub unlisted_fraction: f64,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            records: 2000,
            anomaly_fraction: 0.45,
            overlap: 0.05,
            unlisted_fraction: 0.0,
            seed: 1,
        }
    }
}

/// One generated record, before formatting.
#[derive(Debug, Clone)]
pub struct Record {
    pub protocol: &'static str,
    pub service: &'static str,
    pub flag: &'static str,
    pub numeric: [f64; NUMERIC],
    pub label: &'static str,
    pub family: Family,
    pub difficulty: u32,
}

impl Record {
    /// The record as one comma-separated line: duration, protocol, service,
    /// flag, the other 37 numerics, label and difficulty.
    pub fn to_line(&self) -> String {
        let mut fields: Vec<String> = Vec::with_capacity(43);
        fields.push(num(self.numeric[DURATION]));
        fields.push(self.protocol.into());
        fields.push(self.service.into());
        fields.push(self.flag.into());
        fields.extend(self.numeric[1..].iter().map(|v| num(*v)));
        fields.push(self.label.into());
        fields.push(self.difficulty.to_string());
        fields.join(",")
    }

    /// The 41 attributes only.
    pub fn to_unlabeled_line(&self) -> String {
        let line = self.to_line();
        let mut parts: Vec<&str> = line.split(',').collect();
        parts.truncate(41);
        parts.join(",")
    }
}

fn num(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{:.2}", v)
    }
}

fn rate(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo..=hi) * 100.0).round() / 100.0
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

fn normal(rng: &mut ChaCha8Rng) -> Record {
    let (protocol, service) = pick(
        rng,
        &[
            ("tcp", "http"),
            ("tcp", "http"),
            ("tcp", "http"),
            ("tcp", "smtp"),
            ("tcp", "ftp_data"),
            ("tcp", "ftp"),
            ("udp", "domain_u"),
            ("udp", "private"),
            ("icmp", "eco_i"),
            ("udp", "ntp_u"),
        ],
    );
    let mut n = [0.0; NUMERIC];
    n[DURATION] = if rng.random_bool(0.9) { 0.0 } else { rng.random_range(1..60) as f64 };
    n[SRC_BYTES] = rng.random_range(100..1500) as f64;
    n[DST_BYTES] = if protocol == "tcp" { rng.random_range(200..9000) as f64 } else { rng.random_range(0..300) as f64 };
    n[LOGGED_IN] = if protocol == "tcp" { 1.0 } else { 0.0 };
    n[HOT] = if rng.random_bool(0.05) { 1.0 } else { 0.0 };
    n[COUNT] = rng.random_range(1..12) as f64;
    n[SRV_COUNT] = n[COUNT] + rng.random_range(0..8) as f64;
    n[SAME_SRV_RATE] = rate(rng, 0.9, 1.0);
    n[DIFF_SRV_RATE] = rate(rng, 0.0, 0.05);
    n[SRV_DIFF_HOST_RATE] = rate(rng, 0.0, 0.2);
    n[DST_HOST_COUNT] = rng.random_range(5..255) as f64;
    n[DST_HOST_SRV_COUNT] = rng.random_range(100..255) as f64;
    n[DST_HOST_SAME_SRV_RATE] = rate(rng, 0.8, 1.0);
    n[DST_HOST_DIFF_SRV_RATE] = rate(rng, 0.0, 0.05);
    n[DST_HOST_SAME_SRC_PORT_RATE] = rate(rng, 0.0, 0.1);
    n[DST_HOST_SRV_DIFF_HOST_RATE] = rate(rng, 0.0, 0.05);
    Record {
        protocol,
        service,
        flag: "SF",
        numeric: n,
        label: "normal",
        family: Family::Normal,
        difficulty: rng.random_range(18..=21),
    }
}

fn dos(rng: &mut ChaCha8Rng) -> Record {
    let mut n = [0.0; NUMERIC];
    match rng.random_range(0..3) {
        0 => {
            // SYN flood against many ports.
            n[COUNT] = rng.random_range(100..512) as f64;
            n[SRV_COUNT] = rng.random_range(1..30) as f64;
            n[SERROR_RATE] = 1.0;
            n[SRV_SERROR_RATE] = 1.0;
            n[SAME_SRV_RATE] = rate(rng, 0.0, 0.1);
            n[DIFF_SRV_RATE] = rate(rng, 0.05, 0.1);
            n[DST_HOST_COUNT] = 255.0;
            n[DST_HOST_SRV_COUNT] = rng.random_range(1..30) as f64;
            n[DST_HOST_SAME_SRV_RATE] = rate(rng, 0.0, 0.1);
            n[DST_HOST_DIFF_SRV_RATE] = rate(rng, 0.05, 0.1);
            n[DST_HOST_SERROR_RATE] = 1.0;
            n[DST_HOST_SRV_SERROR_RATE] = 1.0;
            Record {
                protocol: "tcp",
                service: pick(rng, &["private", "telnet", "finger", "http", "uucp"]),
                flag: "S0",
                numeric: n,
                label: "neptune",
                family: Family::Dos,
                difficulty: rng.random_range(19..=21),
            }
        }
        1 => {
            // Echo-reply amplification.
            n[SRC_BYTES] = pick(rng, &[520.0, 1032.0]);
            n[COUNT] = 511.0;
            n[SRV_COUNT] = 511.0;
            n[SAME_SRV_RATE] = 1.0;
            n[DST_HOST_COUNT] = 255.0;
            n[DST_HOST_SRV_COUNT] = 255.0;
            n[DST_HOST_SAME_SRV_RATE] = 1.0;
            n[DST_HOST_SAME_SRC_PORT_RATE] = 1.0;
            Record {
                protocol: "icmp",
                service: "ecr_i",
                flag: "SF",
                numeric: n,
                label: "smurf",
                family: Family::Dos,
                difficulty: rng.random_range(15..=21),
            }
        }
        _ => {
            n[WRONG_FRAGMENT] = pick(rng, &[1.0, 3.0]);
            n[SRC_BYTES] = rng.random_range(20..1500) as f64;
            n[COUNT] = rng.random_range(1..5) as f64;
            n[SRV_COUNT] = n[COUNT];
            n[SAME_SRV_RATE] = 1.0;
            n[DST_HOST_COUNT] = rng.random_range(1..255) as f64;
            n[DST_HOST_SRV_COUNT] = rng.random_range(1..255) as f64;
            n[DST_HOST_SAME_SRV_RATE] = rate(rng, 0.0, 1.0);
            Record {
                protocol: pick(rng, &["udp", "icmp"]),
                service: pick(rng, &["private", "ecr_i"]),
                flag: "SF",
                numeric: n,
                label: pick(rng, &["teardrop", "pod"]),
                family: Family::Dos,
                difficulty: rng.random_range(12..=21),
            }
        }
    }
}

fn probe(rng: &mut ChaCha8Rng) -> Record {
    let mut n = [0.0; NUMERIC];
    n[DURATION] = if rng.random_bool(0.1) { rng.random_range(1..5000) as f64 } else { 0.0 };
    n[COUNT] = rng.random_range(1..200) as f64;
    n[SRV_COUNT] = rng.random_range(1..10) as f64;
    n[RERROR_RATE] = rate(rng, 0.5, 1.0);
    n[SRV_RERROR_RATE] = rate(rng, 0.5, 1.0);
    n[SAME_SRV_RATE] = rate(rng, 0.0, 0.2);
    n[DIFF_SRV_RATE] = rate(rng, 0.5, 1.0);
    n[SRV_DIFF_HOST_RATE] = rate(rng, 0.5, 1.0);
    n[DST_HOST_COUNT] = rng.random_range(1..255) as f64;
    n[DST_HOST_SRV_COUNT] = rng.random_range(1..20) as f64;
    n[DST_HOST_SAME_SRV_RATE] = rate(rng, 0.0, 0.2);
    n[DST_HOST_DIFF_SRV_RATE] = rate(rng, 0.4, 1.0);
    n[DST_HOST_SAME_SRC_PORT_RATE] = rate(rng, 0.5, 1.0);
    n[DST_HOST_SRV_DIFF_HOST_RATE] = rate(rng, 0.0, 0.5);
    n[DST_HOST_RERROR_RATE] = rate(rng, 0.5, 1.0);
    n[DST_HOST_SRV_RERROR_RATE] = rate(rng, 0.5, 1.0);
    Record {
        protocol: pick(rng, &["tcp", "tcp", "icmp"]),
        service: pick(rng, &["private", "other", "eco_i", "ftp", "telnet", "X11", "ssh"]),
        flag: pick(rng, &["REJ", "RSTO", "RSTR", "SH"]),
        numeric: n,
        label: pick(rng, &["portsweep", "satan", "ipsweep", "nmap"]),
        family: Family::Probe,
        difficulty: rng.random_range(15..=21),
    }
}

fn r2l(rng: &mut ChaCha8Rng) -> Record {
    let mut n = [0.0; NUMERIC];
    let guessing = rng.random_bool(0.5);
    n[DURATION] = rng.random_range(1..20_000) as f64;
    n[SRC_BYTES] = rng.random_range(100..400_000) as f64;
    n[DST_BYTES] = rng.random_range(0..5_000) as f64;
    n[HOT] = rng.random_range(2..30) as f64;
    n[FAILED_LOGINS] = if guessing { rng.random_range(1..5) as f64 } else { 0.0 };
    n[LOGGED_IN] = if guessing { 0.0 } else { 1.0 };
    n[IS_GUEST_LOGIN] = if guessing { 0.0 } else { 1.0 };
    n[COUNT] = 1.0;
    n[SRV_COUNT] = 1.0;
    n[SAME_SRV_RATE] = 1.0;
    n[DST_HOST_COUNT] = rng.random_range(1..10) as f64;
    n[DST_HOST_SRV_COUNT] = rng.random_range(1..10) as f64;
    n[DST_HOST_SAME_SRV_RATE] = rate(rng, 0.5, 1.0);
    n[DST_HOST_SAME_SRC_PORT_RATE] = rate(rng, 0.5, 1.0);
    Record {
        protocol: "tcp",
        service: pick(rng, &["ftp", "ftp_data", "telnet", "imap4", "pop_3"]),
        flag: pick(rng, &["SF", "RSTO"]),
        numeric: n,
        label: if guessing { "guess_passwd" } else { pick(rng, &["warezclient", "warezmaster", "imap"]) },
        family: Family::R2l,
        difficulty: rng.random_range(8..=20),
    }
}

fn u2r(rng: &mut ChaCha8Rng) -> Record {
    let mut n = [0.0; NUMERIC];
    n[DURATION] = rng.random_range(10..3_000) as f64;
    n[SRC_BYTES] = rng.random_range(1_000..10_000) as f64;
    n[DST_BYTES] = rng.random_range(1_000..30_000) as f64;
    n[HOT] = rng.random_range(1..10) as f64;
    n[LOGGED_IN] = 1.0;
    n[NUM_COMPROMISED] = rng.random_range(1..5) as f64;
    n[ROOT_SHELL] = 1.0;
    n[NUM_ROOT] = rng.random_range(1..10) as f64;
    n[FILE_CREATIONS] = rng.random_range(1..5) as f64;
    n[NUM_SHELLS] = 1.0;
    n[COUNT] = 1.0;
    n[SRV_COUNT] = 1.0;
    n[SAME_SRV_RATE] = 1.0;
    n[DST_HOST_COUNT] = rng.random_range(1..20) as f64;
    n[DST_HOST_SRV_COUNT] = rng.random_range(1..20) as f64;
    n[DST_HOST_SAME_SRV_RATE] = rate(rng, 0.3, 1.0);
    Record {
        protocol: "tcp",
        service: pick(rng, &["telnet", "ftp_data"]),
        flag: "SF",
        numeric: n,
        label: pick(rng, &["buffer_overflow", "rootkit", "loadmodule", "perl"]),
        family: Family::U2r,
        difficulty: rng.random_range(5..=18),
    }
}

/// Produces `config.records` records, reproducibly for a given seed.
pub fn records(config: &FixtureConfig) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.records)
        .map(|_| {
            if !rng.random_bool(config.anomaly_fraction) {
                return normal(&mut rng);
            }
            let mut rec = match rng.random_range(0..100) {
                0..=49 => dos(&mut rng),
                50..=79 => probe(&mut rng),
                80..=94 => r2l(&mut rng),
                _ => u2r(&mut rng),
            };
            if rng.random_bool(config.overlap) {
                // A disguised attack: normal-looking attributes, attack label.
                let (label, family) = (rec.label, rec.family);
                rec = normal(&mut rng);
                rec.label = label;
                rec.family = family;
                rec.difficulty = rng.random_range(3..=10);
            }
            if rng.random_bool(config.unlisted_fraction) {
                rec.label = pick(&mut rng, &["zeroday", "slowloris_x"]);
                rec.family = Family::Unlisted;
            }
            rec
        })
        .collect()
}

/// The records as newline-terminated lines.
pub fn csv(config: &FixtureConfig) -> String {
    let mut out = String::new();
    for r in records(config) {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

/// Lines with only the 41 attributes.
pub fn unlabeled_csv(config: &FixtureConfig) -> String {
    let mut out = String::new();
    for r in records(config) {
        out.push_str(&r.to_unlabeled_line());
        out.push('\n');
    }
    out
}
