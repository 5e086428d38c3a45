#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sumrank::pool::write_pools;
use sumrank::CandidatePool;

pub const VOCAB: &[&str] = &[
    "the", "a", "cat", "dog", "sat", "ran", "on", "mat", "park", "blue", "red", "sky", "sea", "fish", "bird", "tree",
    "rain", "sun", "city", "road",
];

pub fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n)
        .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Random token-string pool with `n` candidates and `r` distinct pseudo-references.
pub fn random_pool(rng: &mut ChaCha8Rng, id: &str, n: usize, r: usize) -> CandidatePool {
    let source = words(rng, 20, 40);
    let candidates = (0..n).map(|_| words(rng, 2, 12)).collect();
    let refs = (0..r).map(|_| words(rng, 2, 12)).collect();
    CandidatePool::new(id, source, candidates, refs).with_gold(words(rng, 4, 12))
}

pub fn write_pool_file(path: &Path, pools: &[CandidatePool]) {
    let mut buf = Vec::new();
    write_pools(&mut buf, pools).unwrap();
    std::fs::write(path, buf).unwrap();
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_sumrank"))
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("spawn sumrank")
}

pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "off")
        .output()
        .expect("spawn sumrank")
}
