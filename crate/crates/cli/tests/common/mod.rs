#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use suppresskit::image::{write_png, ImageId};
use suppresskit::manifest::{Label, Manifest, ManifestEntry};
use suppresskit::predictor::{write_predictions, PredictionRecord};
use suppresskit::synth;

pub const BIN: &str = env!("CARGO_BIN_EXE_suppresskit");
pub const STUB: &str = env!("CARGO_BIN_EXE_suppresskit-stub");

pub fn suppresskit(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp paths")
}

/// `n` labelled synthetic images under `dir/images`, with `dir/manifest.jsonl`.
pub fn corpus(dir: &Path, n: usize, size: usize, classes: usize) -> PathBuf {
    let images = synth::corpus(n, size, 1000).unwrap();
    let mut entries = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let id = ImageId::new(format!("img{i:03}")).unwrap();
        let path = dir.join("images").join(format!("img{i:03}.png"));
        write_png(img, &path).unwrap();
        entries.push(ManifestEntry {
            id,
            path: PathBuf::from("images").join(format!("img{i:03}.png")),
            label: Some(Label::Single(i % classes)),
        });
    }
    let manifest = dir.join("manifest.jsonl");
    let mut buf = Vec::new();
    Manifest::new(entries).unwrap().write(&mut buf).unwrap();
    fs::write(&manifest, buf).unwrap();
    manifest
}

/// One-hot predictions: the first `round(p * n)` ids (sorted) correct, the
/// rest predicting the next class.
pub fn scripted(manifest: &Path, p: f64, classes: usize) -> Vec<PredictionRecord> {
    let truth = Manifest::load(manifest).unwrap().labels().unwrap();
    let cutoff = (p * truth.len() as f64).round() as usize;
    truth
        .into_iter()
        .enumerate()
        .map(|(rank, (id, label))| {
            let class = label.single().unwrap();
            let predicted = if rank < cutoff { class } else { (class + 1) % classes };
            let mut scores = vec![0.0; classes];
            scores[predicted] = 1.0;
            PredictionRecord::from_scores(id, scores, true).unwrap()
        })
        .collect()
}

pub fn write_condition(dir: &Path, condition: &str, records: &[PredictionRecord]) {
    fs::create_dir_all(dir).unwrap();
    let mut buf = Vec::new();
    write_predictions(&mut buf, records).unwrap();
    fs::write(dir.join(format!("{condition}.jsonl")), buf).unwrap();
}

/// Relative path -> bytes for every file below `root`.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}
