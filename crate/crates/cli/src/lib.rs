//! Command implementations behind the `rssi-locus` binary.
//!
//! Each `cmd_*` function reads its inputs, runs the library pipeline and
//! writes its artifacts. Errors carry the process exit code: 2 for usage,
//! parse and I/O problems, 1 for domain failures such as every test being
//! excluded for a technique.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use rssi_locus::eval::{
    run_benchmark, test_cases_from_records, write_cdf_csv, write_errors_csv, write_metadata, write_summary_csv,
    EvaluationReport, TechniqueTag,
};
use rssi_locus::fingerprint::{bayes_locate, build_database, knn_locate, read_database, write_database, KnnConfig};
use rssi_locus::ingest::{
    parse_scan_log, read_anchors_csv, survey_scans, unlabeled_scans, write_anchors_csv, write_scan_log,
    DEFAULT_WINDOW,
};
use rssi_locus::numfmt::sig17;
use rssi_locus::pathloss::{fit_path_loss, read_calibration_csv, write_calibration_csv, ModelTable};
use rssi_locus::synth::{generate_scenario, parse_config, replica, write_config, ScenarioConfig};
use rssi_locus::trilat::{locate_trilateration, KalmanParams};
use rssi_locus::{AnchorId, Position, ScanVector};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io { .. } | CliError::Input(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn input_err(path: &Path) -> impl Fn(&dyn std::fmt::Display) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

/// Writes a whole file in one go so a failed command leaves no partial
/// artifact behind under the final name.
fn write_file(path: &Path, fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf).map_err(io_err(path))?;
    let tmp = path.with_extension("partial");
    fs::write(&tmp, &buf).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Parser)]
#[command(name = "rssi-locus", version, about = "RSSI indoor localization toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a log-distance path-loss model to calibration readings.
    FitPathloss(FitPathlossArgs),
    /// Build a fingerprint database from a labeled scan log.
    BuildDb(BuildDbArgs),
    /// Estimate positions for the scans in a log.
    Localize(LocalizeArgs),
    /// Generate a synthetic dataset from a scenario config.
    Simulate(SimulateArgs),
    /// Benchmark all three techniques on labeled test scans.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct FitPathlossArgs {
    /// Calibration CSV (`distance_m,rssi_dbm`).
    pub calibration: PathBuf,
    /// Output models file.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Store the model for this anchor only instead of as the fallback.
    #[arg(long)]
    pub anchor: Option<String>,
}

#[derive(Debug, Args)]
pub struct BuildDbArgs {
    /// Labeled scan log.
    pub scans: PathBuf,
    /// Anchors CSV (`anchor_id,x_m,y_m`).
    pub anchors: PathBuf,
    /// Output database file.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Moving-average window, in readings.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Technique {
    Trilat,
    Knn,
    Bayes,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct KalmanArgs {
    /// Kalman process noise, dB².
    #[arg(long, default_value_t = 0.008)]
    pub kalman_q: f64,
    /// Kalman measurement noise, dB².
    #[arg(long, default_value_t = 4.0)]
    pub kalman_r: f64,
    /// Kalman initial variance, dB².
    #[arg(long, default_value_t = 1.0)]
    pub kalman_p0: f64,
}

impl KalmanArgs {
    fn params(&self) -> Result<KalmanParams> {
        KalmanParams::new(self.kalman_q, self.kalman_r, self.kalman_p0).map_err(|e| CliError::Input(e.to_string()))
    }
}

impl Default for KalmanArgs {
    fn default() -> Self {
        let p = KalmanParams::default();
        Self { kalman_q: p.q(), kalman_r: p.r(), kalman_p0: p.p0() }
    }
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// Fingerprint database (also supplies anchor positions).
    pub db: PathBuf,
    /// Scan log. Labeled points are aggregated per position; unlabeled
    /// rows are localized one scan (`seq`) at a time.
    pub scans: PathBuf,
    #[arg(long, value_enum)]
    pub technique: Technique,
    /// Neighbors averaged by KNN.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Path-loss models file, required for trilateration.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Moving-average window for labeled points, in readings.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    #[command(flatten)]
    pub kalman: KalmanArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario config file.
    #[arg(required_unless_present = "scenario", conflicts_with = "scenario")]
    pub config: Option<PathBuf>,
    /// Use built-in replica 1, 2 or 3 instead of a config file.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub scenario: Option<u8>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override both shadowing and fading standard deviation, dB.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub db: PathBuf,
    /// Labeled test log.
    pub tests: PathBuf,
    /// Path-loss models file.
    pub models: PathBuf,
    /// Output directory for errors.csv, summary.csv, cdf.csv and
    /// report_meta.txt.
    #[arg(long)]
    pub report_dir: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// Scenario name recorded in the report.
    #[arg(long, default_value = "unnamed")]
    pub scenario: String,
    #[command(flatten)]
    pub kalman: KalmanArgs,
}

pub fn run(cli: Cli) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::FitPathloss(a) => cmd_fit_pathloss(&a, &mut stdout),
        Command::BuildDb(a) => cmd_build_db(&a, &mut stdout),
        Command::Localize(a) => cmd_localize(&a, &mut stdout),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Evaluate(a) => cmd_evaluate(&a, &mut stdout).map(|_| ()),
    }
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::Io { path: PathBuf::from("<stdout>"), source: e }
}

pub fn cmd_fit_pathloss(args: &FitPathlossArgs, out: &mut dyn Write) -> Result<()> {
    let path = &args.calibration;
    let set = read_calibration_csv(open(path)?).map_err(|e| input_err(path)(&e))?;
    let model = fit_path_loss(&set.samples).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    let mut table = ModelTable::default();
    match &args.anchor {
        Some(id) => table.insert(AnchorId::new(id.as_str()).map_err(|e| CliError::Input(e.to_string()))?, model),
        None => table.set_fallback(model),
    }
    write_file(&args.output, |w| table.write(w))?;
    writeln!(
        out,
        "n = {}  C = {} dBm  R^2 = {}  ({} samples, {} zero-distance rows dropped)",
        model.exponent(),
        model.intercept(),
        model.r_squared(),
        set.samples.len(),
        set.dropped_zero_distance
    )
    .map_err(stdout_err)
}

pub fn cmd_build_db(args: &BuildDbArgs, out: &mut dyn Write) -> Result<()> {
    let records = parse_scan_log(open(&args.scans)?).map_err(|e| input_err(&args.scans)(&e))?;
    let anchors = read_anchors_csv(open(&args.anchors)?).map_err(|e| input_err(&args.anchors)(&e))?;
    let surveys = survey_scans(&records, args.window).map_err(|e| input_err(&args.scans)(&e))?;
    let db = build_database(anchors, &surveys).map_err(|e| CliError::Domain(e.to_string()))?;
    write_file(&args.output, |w| write_database(w, &db))?;
    writeln!(out, "{} fingerprints over {} anchors", db.len(), db.anchors().len()).map_err(stdout_err)
}

fn load_models(path: &Path) -> Result<ModelTable> {
    ModelTable::read(open(path)?).map_err(|e| input_err(path)(&e))
}

/// Prints `scan,x_m,y_m` rows. For labeled input `scan` is the point index
/// in order of first appearance, otherwise the log's `seq`.
pub fn cmd_localize(args: &LocalizeArgs, out: &mut dyn Write) -> Result<()> {
    let db = read_database(open(&args.db)?).map_err(|e| input_err(&args.db)(&e))?;
    let records = parse_scan_log(open(&args.scans)?).map_err(|e| input_err(&args.scans)(&e))?;
    let knn = KnnConfig::new(args.k).map_err(|e| CliError::Input(e.to_string()))?;
    let models = match (&args.models, args.technique) {
        (Some(p), _) => Some(load_models(p)?),
        (None, Technique::Trilat) => return Err(CliError::Input("--technique trilat requires --models".into())),
        (None, _) => None,
    };

    // (label, scan for fingerprinting, scan for trilateration)
    let labeled = records.iter().any(|r| r.position.is_some());
    let scans: Vec<(u64, ScanVector, ScanVector)> = if labeled {
        test_cases_from_records(&records, args.window, &args.kalman.params()?)
            .map_err(|e| input_err(&args.scans)(&e))?
            .into_iter()
            .enumerate()
            .map(|(i, t)| (i as u64, t.fingerprint_scan, t.model_scan))
            .collect()
    } else {
        unlabeled_scans(&records)
            .map_err(|e| input_err(&args.scans)(&e))?
            .into_iter()
            .map(|(seq, s)| (seq, s.clone(), s))
            .collect()
    };

    writeln!(out, "scan,x_m,y_m").map_err(stdout_err)?;
    let mut failures = Vec::new();
    for (label, fp_scan, model_scan) in &scans {
        let est: std::result::Result<Position, String> = match args.technique {
            Technique::Knn => knn_locate(&db, fp_scan, &knn).map_err(|e| format!("{e:?}: {e}")),
            Technique::Bayes => bayes_locate(&db, fp_scan).map_err(|e| format!("{e:?}: {e}")),
            Technique::Trilat => {
                let models = models.as_ref().expect("checked above");
                locate_trilateration(model_scan, db.anchors(), models).map_err(|e| format!("{e:?}: {e}"))
            }
        };
        match est {
            Ok(p) => writeln!(out, "{label},{},{}", sig17(p.x()), sig17(p.y())).map_err(stdout_err)?,
            Err(e) => failures.push(format!("scan {label}: {e}")),
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Domain(format!("{} of {} scans failed\n{}", failures.len(), scans.len(), failures.join("\n"))))
    }
}

pub const SIMULATE_FILES: [&str; 5] = ["anchors.csv", "calibration.csv", "survey.csv", "tests.csv", "scenario.cfg"];

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut config: ScenarioConfig = match (&args.config, args.scenario) {
        (Some(path), _) => parse_config(open(path)?).map_err(|e| input_err(path)(&e))?,
        (None, Some(n)) => replica::by_number(n as usize, 0).expect("clap limits the range"),
        (None, None) => return Err(CliError::Input("give a config file or --scenario".into())),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(sigma) = args.sigma {
        config.shadowing_sigma_db = sigma;
        config.fading_sigma_db = sigma;
    }
    config.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let data = generate_scenario(&config).map_err(|e| CliError::Domain(e.to_string()))?;

    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let dir = &args.out;
    write_file(&dir.join("anchors.csv"), |w| write_anchors_csv(w, &config.anchors))?;
    write_file(&dir.join("calibration.csv"), |w| write_calibration_csv(w, &data.calibration))?;
    write_file(&dir.join("survey.csv"), |w| write_scan_log(w, &data.fingerprint_records()))?;
    write_file(&dir.join("tests.csv"), |w| write_scan_log(w, &data.test_records()))?;
    write_file(&dir.join("scenario.cfg"), |w| write_config(w, &config))
}

pub const REPORT_FILES: [&str; 4] = ["errors.csv", "summary.csv", "cdf.csv", "report_meta.txt"];

/// Writes the report files, then fails with a domain error if some technique
/// could not localize a single test.
pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<EvaluationReport> {
    let db = read_database(open(&args.db)?).map_err(|e| input_err(&args.db)(&e))?;
    let records = parse_scan_log(open(&args.tests)?).map_err(|e| input_err(&args.tests)(&e))?;
    let models = load_models(&args.models)?;
    let knn = KnnConfig::new(args.k).map_err(|e| CliError::Input(e.to_string()))?;
    let tests = test_cases_from_records(&records, args.window, &args.kalman.params()?)
        .map_err(|e| input_err(&args.tests)(&e))?;
    let mut report = run_benchmark(&db, db.anchors(), &models, &tests, &knn, &args.scenario)
        .map_err(|e| CliError::Domain(e.to_string()))?;
    report.metadata.technology = rssi_locus::ingest::technology_label(&records);

    fs::create_dir_all(&args.report_dir).map_err(io_err(&args.report_dir))?;
    let dir = &args.report_dir;
    write_file(&dir.join("errors.csv"), |w| write_errors_csv(w, &report))?;
    write_file(&dir.join("summary.csv"), |w| write_summary_csv(w, &report))?;
    write_file(&dir.join("cdf.csv"), |w| write_cdf_csv(w, &report))?;
    write_file(&dir.join("report_meta.txt"), |w| write_metadata(w, &report))?;

    let mut empty = Vec::new();
    for t in &report.techniques {
        match t.summary {
            Some(s) => writeln!(
                out,
                "{:<6} mean {:.3} m  variance {:.3} m^2  excluded {}",
                t.technique.as_str(),
                s.mean,
                s.variance,
                t.exclusions.len()
            )
            .map_err(stdout_err)?,
            None => empty.push(t.technique),
        }
    }
    if !empty.is_empty() {
        let names: Vec<&str> = empty.iter().map(|t: &TechniqueTag| t.as_str()).collect();
        return Err(CliError::Domain(format!("no test could be localized by: {}", names.join(", "))));
    }
    Ok(report)
}

