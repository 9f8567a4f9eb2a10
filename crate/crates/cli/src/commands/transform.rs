use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use suppresskit::image::{write_png, ImageId};
use suppresskit::manifest::{output_path, Manifest, ManifestEntry};
use suppresskit::transforms::apply;

use super::{put_path, SpecInput};
use crate::config::{absolute, Global, RunRecord};
use crate::output::{create_dir, write_file, write_run_record};
use crate::{CliError, CliResult, Outcome};

pub const NAME: &str = "transform";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Image directory or JSON-lines manifest.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Output directory; receives `<id>.png`, `manifest.jsonl` and `run.json`.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// One transform spec: inline JSON, a spec file or a one-element preset.
    #[arg(long)]
    pub spec: Option<String>,
}

impl Args {
    pub fn overrides(&self) -> CliResult<Map<String, Value>> {
        let mut map = Map::new();
        put_path(&mut map, "input", &self.input);
        put_path(&mut map, "output", &self.output);
        if let Some(s) = &self.spec {
            map.insert("spec".into(), Value::String(s.clone()));
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub input: PathBuf,
    pub output: PathBuf,
    pub spec: SpecInput,
}

impl Config {
    pub fn normalized(self) -> CliResult<Self> {
        let mut specs = self.spec.resolve()?;
        if specs.len() != 1 {
            return Err(CliError(format!("transform takes exactly one spec, got {}", specs.len())));
        }
        Ok(Self {
            input: absolute(&self.input)?,
            output: absolute(&self.output)?,
            spec: SpecInput::One(specs.remove(0)),
        })
    }
}

pub fn run(config: &Config, global: &Global, record: &RunRecord) -> CliResult<Outcome> {
    let SpecInput::One(spec) = &config.spec else {
        unreachable!("normalized config holds one spec")
    };
    let manifest = Manifest::open(&config.input)?;
    create_dir(&config.output)?;

    let outcomes: Vec<(&ManifestEntry, Result<PathBuf, String>)> = manifest
        .entries()
        .par_iter()
        .map(|entry| {
            let path = output_path(&config.output, &entry.id);
            let outcome = manifest
                .load_image(&entry.id)
                .and_then(|img| apply(spec, &img, &entry.id, global.seed))
                .and_then(|out| write_png(&out, &path))
                .map(|_| path)
                .map_err(|e| e.to_string());
            (entry, outcome)
        })
        .collect();

    let mut written = Vec::new();
    let mut failures: Vec<(ImageId, String)> = Vec::new();
    for (entry, outcome) in outcomes {
        match outcome {
            Ok(path) => written.push(ManifestEntry {
                id: entry.id.clone(),
                path: path.strip_prefix(&config.output).unwrap_or(&path).to_path_buf(),
                label: entry.label.clone(),
            }),
            Err(e) => failures.push((entry.id.clone(), e)),
        }
    }
    let mut listing = Vec::new();
    Manifest::new(written)?.write(&mut listing)?;
    write_file(&config.output.join("manifest.jsonl"), listing)?;
    write_run_record(&config.output, record)?;

    for (id, e) in &failures {
        eprintln!("failed: {id}: {e}");
    }
    if !global.quiet {
        println!(
            "{}: {} of {} images written to {}",
            spec.label(),
            manifest.len() - failures.len(),
            manifest.len(),
            config.output.display()
        );
    }
    Ok(Outcome {
        failures: failures.len(),
    })
}
