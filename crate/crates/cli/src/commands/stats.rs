use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use suppresskit::stats::{cohens_d_paired, mean_ci95, paired_t_test};
use suppresskit::Error;

use super::{absolute_opt, put_path};
use crate::config::{absolute, put, Global, OutputFormat, RunRecord};
use crate::output::{csv_string, num, to_json, write_file, write_run_record};
use crate::{CliError, CliResult, Outcome};

pub const NAME: &str = "stats";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// First CSV file (with a header row).
    pub a: Option<PathBuf>,
    /// Second CSV file, paired with the first row by row.
    pub b: Option<PathBuf>,
    /// Column to read from both files.
    #[arg(long)]
    pub column: Option<String>,
    /// Column of the first file; overrides --column.
    #[arg(long)]
    pub column_a: Option<String>,
    /// Column of the second file; overrides --column.
    #[arg(long)]
    pub column_b: Option<String>,
    /// Also write `stats.csv` (or `.json`) and `run.json` here.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

impl Args {
    pub fn overrides(&self) -> CliResult<Map<String, Value>> {
        let mut map = Map::new();
        put_path(&mut map, "a", &self.a);
        put_path(&mut map, "b", &self.b);
        put(&mut map, "column_a", self.column_a.clone().or(self.column.clone()));
        put(&mut map, "column_b", self.column_b.clone().or(self.column.clone()));
        put_path(&mut map, "output", &self.output);
        Ok(map)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub a: PathBuf,
    pub b: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_b: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Config {
    pub fn normalized(self) -> CliResult<Self> {
        Ok(Self {
            a: absolute(&self.a)?,
            b: absolute(&self.b)?,
            output: absolute_opt(self.output)?,
            ..self
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub column_a: String,
    pub column_b: String,
    pub n: usize,
    pub df: usize,
    pub mean_a: f64,
    pub ci95_a: f64,
    pub mean_b: f64,
    pub ci95_b: f64,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub ci95_diff: f64,
    pub t: f64,
    pub p: f64,
    pub cohens_d: f64,
}

impl StatsReport {
    pub fn compute(column_a: &str, column_b: &str, a: &[f64], b: &[f64]) -> CliResult<Self> {
        let guidance = |e: Error| match e {
            Error::Undefined(msg) => CliError(format!(
                "{msg}. Check that the two columns hold different measurements \
                 (--column-a / --column-b) and that they are not a constant shift of each other."
            )),
            other => other.into(),
        };
        let test = paired_t_test(a, b).map_err(guidance)?;
        let d = cohens_d_paired(a, b).map_err(guidance)?;
        let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let (mean_a, ci95_a) = mean_ci95(a)?;
        let (mean_b, ci95_b) = mean_ci95(b)?;
        let (_, ci95_diff) = mean_ci95(&diffs)?;
        Ok(Self {
            column_a: column_a.to_string(),
            column_b: column_b.to_string(),
            n: test.n,
            df: test.df,
            mean_a,
            ci95_a,
            mean_b,
            ci95_b,
            mean_diff: test.mean_diff,
            sd_diff: test.sd_diff,
            ci95_diff,
            t: test.t,
            p: test.p,
            cohens_d: d,
        })
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("column_a", self.column_a.clone()),
            ("column_b", self.column_b.clone()),
            ("n", self.n.to_string()),
            ("df", self.df.to_string()),
            ("mean_a", num(self.mean_a)),
            ("ci95_a", num(self.ci95_a)),
            ("mean_b", num(self.mean_b)),
            ("ci95_b", num(self.ci95_b)),
            ("mean_diff", num(self.mean_diff)),
            ("sd_diff", num(self.sd_diff)),
            ("ci95_diff", num(self.ci95_diff)),
            ("t", num(self.t)),
            ("p", num(self.p)),
            ("cohens_d", num(self.cohens_d)),
        ]
    }

    pub fn render(&self, format: OutputFormat) -> CliResult<String> {
        match format {
            OutputFormat::Json => Ok(to_json(self)),
            OutputFormat::Csv => {
                let rows: Vec<Vec<String>> = self.pairs().into_iter().map(|(k, v)| vec![k.to_string(), v]).collect();
                csv_string(&["statistic", "value"], &rows)
            }
        }
    }
}

/// Numeric column of a headed CSV file. Without a name, the file must have
/// exactly one column.
pub fn read_column(path: &Path, column: Option<&str>) -> CliResult<(String, Vec<f64>)> {
    let err = |e: csv::Error| CliError(format!("{}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(err)?;
    let headers: Vec<String> = reader.headers().map_err(err)?.iter().map(str::to_string).collect();
    let index = match column {
        Some(name) => headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError(format!("{}: no column {name:?}; columns are {headers:?}", path.display()))
        })?,
        None if headers.len() == 1 => 0,
        None => {
            return Err(CliError(format!(
                "{} has columns {headers:?}; choose one with --column, --column-a or --column-b",
                path.display()
            )))
        }
    };
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(err)?;
        let cell = record.get(index).unwrap_or("").trim();
        let v: f64 = cell.parse().map_err(|_| {
            CliError(format!(
                "{}: row {}: {:?} in column {:?} is not a number",
                path.display(),
                row + 2,
                cell,
                headers[index]
            ))
        })?;
        values.push(v);
    }
    Ok((headers[index].clone(), values))
}

pub fn run(config: &Config, global: &Global, record: &RunRecord) -> CliResult<Outcome> {
    let (name_a, a) = read_column(&config.a, config.column_a.as_deref())?;
    let (name_b, b) = read_column(&config.b, config.column_b.as_deref())?;
    let report = StatsReport::compute(&name_a, &name_b, &a, &b)?;
    let text = report.render(global.format)?;
    if let Some(dir) = &config.output {
        write_file(&dir.join(format!("stats.{}", global.format.extension())), &text)?;
        write_run_record(dir, record)?;
    }
    if config.output.is_none() || !global.quiet {
        print!("{text}");
    }
    Ok(Outcome::default())
}
