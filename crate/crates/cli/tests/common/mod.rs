#![allow(dead_code)]

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Parser;
use fontpair_cli::{run, Cli};

pub const HEADERS: [&str; 6] = ["Alpha-Bold", "Beta-Black", "Gamma-Heavy", "Delta-Bold", "Epsilon-Black", "Zeta-Bold"];
pub const FOLLOWERS: [&str; 8] = [
    "Alpha-Regular",
    "Beta-Light",
    "Gamma-Book",
    "Delta-Italic",
    "Eta-Regular",
    "Theta-Light",
    "Iota-Book",
    "Kappa-Regular",
];

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub features: PathBuf,
    pub pairs: PathBuf,
    pub models: Vec<PathBuf>,
    pub snapshot: PathBuf,
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn vector(i: usize) -> Vec<f64> {
    (0..4).map(|j| ((i * 7 + j * 3) % 11) as f64 / 11.0 + 0.1 * (j + 1) as f64).collect()
}

/// Runs one verb and returns what it printed.
pub fn cli<I, S>(args: I) -> anyhow::Result<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let argv: Vec<String> = std::iter::once("fontpair".to_string())
        .chain(args.into_iter().map(|s| s.as_ref().to_string()))
        .collect();
    let parsed = Cli::try_parse_from(argv)?;
    let mut out = Vec::new();
    run(parsed, &mut out)?;
    Ok(String::from_utf8(out).expect("utf-8 output"))
}

pub fn p(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

/// Value of `key=...` in a key=value report.
pub fn value<'a>(report: &'a str, key: &str) -> Option<&'a str> {
    report.lines().find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
}

/// Features, observed pairs, three trained models and a snapshot.
pub fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let features = dir.path().join("features.tsv");
    let mut f = fs::File::create(&features).unwrap();
    for (i, id) in HEADERS.iter().chain(FOLLOWERS.iter()).enumerate() {
        let v: Vec<String> = vector(i).iter().map(|x| x.to_string()).collect();
        writeln!(f, "{id}\t{}", v.join(",")).unwrap();
    }
    let pairs = dir.path().join("pairs.tsv");
    let mut f = fs::File::create(&pairs).unwrap();
    for (i, h) in HEADERS.iter().enumerate() {
        writeln!(f, "{h}\t{}\t{}", FOLLOWERS[i], 1 + i % 2).unwrap();
        writeln!(f, "{h}\t{}\t1", FOLLOWERS[(i + 2) % FOLLOWERS.len()]).unwrap();
    }
    let mut models = Vec::new();
    for method in ["asml", "sml", "ml"] {
        let out = dir.path().join(format!("{method}.model"));
        cli([
            "train", "--method", method, "--pairs", &p(&pairs), "--features", &p(&features), "--out", &p(&out),
            "--gamma", "0.1", "--epochs", "5", "--lr", "0.01",
        ])
        .unwrap();
        models.push(out);
    }
    let snapshot = dir.path().join("engine.snapshot");
    let mut args = vec!["snapshot".to_string(), "--pairs".into(), p(&pairs), "--features".into(), p(&features)];
    for m in &models {
        args.extend(["--model".to_string(), p(m)]);
    }
    args.extend(["--out".to_string(), p(&snapshot)]);
    cli(args).unwrap();
    Fixture { dir, features, pairs, models, snapshot }
}
