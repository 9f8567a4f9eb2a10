//! Scripted predictor speaking the JSON-lines protocol, for tests and demos.
//!
//! For a condition with scheduled accuracy `p`, the first `round(p * N)`
//! manifest images (in id order) are answered with their true class and the
//! rest with the next class, as one-hot probabilities. The condition comes
//! from `SUPPRESSKIT_CONDITION`; the schedule is looked up by full label,
//! then by transform kind, then under `"default"`.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;
use suppresskit::image::ImageId;
use suppresskit::manifest::Manifest;
use suppresskit::predictor::CONDITION_ENV;

#[derive(Parser)]
#[command(name = "suppresskit-stub")]
struct Args {
    /// Labelled manifest the requests refer to.
    #[arg(long)]
    manifest: PathBuf,
    /// JSON object mapping condition labels or transform kinds to accuracies.
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    classes: usize,
    /// Answer requests two at a time in swapped order.
    #[arg(long)]
    swap_pairs: bool,
}

fn scheduled(schedule: &BTreeMap<String, f64>, condition: &str) -> Option<f64> {
    let kind = condition.split('-').next().unwrap_or(condition);
    schedule
        .get(condition)
        .or_else(|| schedule.get(kind))
        .or_else(|| schedule.get("default"))
        .copied()
}

fn run(args: Args) -> Result<(), String> {
    let manifest = Manifest::open(&args.manifest).map_err(|e| e.to_string())?;
    let truth: BTreeMap<ImageId, usize> = manifest
        .labels()
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|(id, label)| label.single().map(|c| (id, c)).ok_or("stub needs single labels"))
        .collect::<Result<_, _>>()?;
    let rank: BTreeMap<&ImageId, usize> = truth.keys().enumerate().map(|(i, id)| (id, i)).collect();
    let text = std::fs::read_to_string(&args.schedule).map_err(|e| e.to_string())?;
    let schedule: BTreeMap<String, f64> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let condition = std::env::var(CONDITION_ENV).unwrap_or_default();
    let p = scheduled(&schedule, &condition).ok_or(format!("no schedule entry for {condition:?}"))?;
    let cutoff = (p * truth.len() as f64).round() as usize;

    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut held: Option<String> = None;
    for line in io::stdin().lock().lines() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            break;
        }
        let request: serde_json::Value = serde_json::from_str(&line).map_err(|e| e.to_string())?;
        let id = request["id"].as_str().ok_or("request without id")?;
        let response = match ImageId::new(id).ok().and_then(|id| truth.get(&id).map(|c| (id, *c))) {
            Some((id, class)) => {
                let predicted = if rank[&id] < cutoff { class } else { (class + 1) % args.classes };
                let mut scores = vec![0.0; args.classes];
                scores[predicted] = 1.0;
                json!({"id": id, "scores": scores, "prob": true})
            }
            None => json!({"id": id, "error": "unknown id"}),
        }
        .to_string();
        let emit: Vec<String> = match (args.swap_pairs, held.take()) {
            (false, _) => vec![response],
            (true, None) => {
                held = Some(response);
                vec![]
            }
            (true, Some(first)) => vec![response, first],
        };
        for r in emit {
            writeln!(out, "{r}").and_then(|_| out.flush()).map_err(|e| e.to_string())?;
        }
    }
    if let Some(r) = held {
        writeln!(out, "{r}").and_then(|_| out.flush()).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("suppresskit-stub: {e}");
            ExitCode::from(2)
        }
    }
}
