use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use qrs_core::metrics::{finalize, MetricsReport};
use qrs_core::netsim::{run, Mode, Scenario, Trace};

use crate::scenario::{parse_scenario, ScenarioError};

/// Environment variable that overrides `--out`.
pub const OUT_ENV: &str = "QRS_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Scenario {
        path: PathBuf,
        source: ScenarioError,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Encode { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario { .. } => 2,
            CliError::Io { .. } | CliError::Encode { .. } => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug)]
pub struct RunArgs {
    pub scenario: PathBuf,
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub trace: bool,
}

#[derive(Clone, Debug)]
pub struct CompareArgs {
    pub scenario: PathBuf,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

/// `QRS_OUT` if set, else the given directory.
pub fn resolve_out(out: PathBuf) -> PathBuf {
    std::env::var_os(OUT_ENV).map_or(out, PathBuf::from)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_scenario(&text).map_err(|source| CliError::Scenario {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_trace(path: &Path) -> Result<Trace, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    bincode::deserialize_from(BufReader::new(file)).map_err(|e| CliError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_trace(path: &Path, trace: &Trace) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    bincode::serialize_into(&mut w, trace).map_err(|e| CliError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    w.flush().map_err(io_err(path))
}

fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
    let csv_err = |e: csv::Error| CliError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn simulate(mut scenario: Scenario, mode: Option<Mode>, seed: Option<u64>) -> (Trace, MetricsReport) {
    if let Some(m) = mode {
        scenario.sim.mode = m;
    }
    if let Some(s) = seed {
        scenario.sim.seed = s;
    }
    let trace = run(&scenario).expect("parsed scenarios are valid");
    let report = finalize(&trace);
    (trace, report)
}

/// Run one scenario and write `metrics.csv`, `summary.txt` and optionally
/// `trace.bin` into the output directory.
pub fn cmd_run(args: &RunArgs) -> Result<MetricsReport, CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let out = resolve_out(args.out.clone());
    fs::create_dir_all(&out).map_err(io_err(&out))?;

    let (trace, report) = simulate(scenario, args.mode, args.seed);
    write_csv(&out.join("metrics.csv"), report.csv_rows())?;
    write_text(&out.join("summary.txt"), &report.summary())?;
    if args.trace {
        write_trace(&out.join("trace.bin"), &trace)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub metric: String,
    pub baseline: f64,
    pub proposed: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub baseline: MetricsReport,
    pub proposed: MetricsReport,
    pub rows: Vec<CompareRow>,
}

impl Comparison {
    pub fn row(&self, metric: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed: {}", self.baseline.seed);
        for name in ["packets_lost", "efficiency", "jitter_mean_s"] {
            if let Some(r) = self.row(name) {
                let _ = writeln!(
                    s,
                    "{name}: baseline {} proposed {} delta {}",
                    r.baseline, r.proposed, r.delta
                );
            }
        }
        s
    }
}

type Pick = (&'static str, fn(&MetricsReport) -> f64);

fn compare_rows(b: &MetricsReport, p: &MetricsReport) -> Vec<CompareRow> {
    let pick: [Pick; 14] = [
        ("packets_generated", |r| r.generated as f64),
        ("packets_lost", |r| r.lost as f64),
        ("mean_delay_s", |r| r.mean_delay.unwrap_or(0.0)),
        ("max_delay_s", |r| r.max_delay.unwrap_or(0.0)),
        ("jitter_mean_s", |r| r.jitter_mean.unwrap_or(0.0)),
        ("compound_lost_bits", |r| r.compound_lost_bits as f64),
        ("recovered_paths", |r| r.recovered_paths as f64),
        ("reservation_success_rate", |r| r.reservation_success.value()),
        ("utilization_detector", |r| r.utilization.detector.value()),
        ("utilization_connector", |r| r.utilization.connector.value()),
        ("utilization_analyzer", |r| r.utilization.analyzer.value()),
        ("efficiency", |r| r.efficiency),
        ("control_messages", |r| r.control_messages as f64),
        ("conservation_violations", |r| r.conservation_violations as f64),
    ];
    pick.iter()
        .map(|(name, f)| CompareRow {
            metric: name.to_string(),
            baseline: f(b),
            proposed: f(p),
            delta: f(p) - f(b),
        })
        .collect()
}

/// Run the scenario in both modes with the same seed and write
/// `compare.csv` plus `compare_summary.txt`.
pub fn cmd_compare(args: &CompareArgs) -> Result<Comparison, CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let out = resolve_out(args.out.clone());
    fs::create_dir_all(&out).map_err(io_err(&out))?;

    let (_, baseline) = simulate(scenario.clone(), Some(Mode::Baseline), args.seed);
    let (_, proposed) = simulate(scenario, Some(Mode::Proposed), args.seed);
    let rows = compare_rows(&baseline, &proposed);
    let cmp = Comparison {
        baseline,
        proposed,
        rows,
    };
    write_csv(&out.join("compare.csv"), cmp.rows.iter())?;
    write_text(&out.join("compare_summary.txt"), &cmp.summary())?;
    Ok(cmp)
}
