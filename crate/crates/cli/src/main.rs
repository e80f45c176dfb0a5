use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tendon_hand::config::{load_json, GestureFile, HandFile, TendonFile};
use tendon_hand::harness::{self, compute_metrics, ExperimentConfig, MetricOptions, RunMode, TraceTable};
use tendon_hand::tendon_model::{build_connection_matrices, matrix_csv, validate_graph};

/// Overrides the root that relative output directories are placed under.
const OUTPUT_ROOT_ENV: &str = "TENDON_HAND_OUTPUT_ROOT";
const LONG_FINGERS: [&str; 4] = ["F2", "F3", "F4", "F5"];

#[derive(Parser)]
#[command(name = "tendon-hand", version, about = "Tendon-driven hand simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop gesture experiment and write trace.csv + summary.json.
    Run(RunArgs),
    /// Check hand, tendon, gesture and experiment files. Exits with 2 on failure.
    Validate(ValidateArgs),
    /// Print the connection matrices of a tendon network as CSV.
    Matrices(MatricesArgs),
    /// Recompute settling and error metrics from a trace.
    Report(ReportArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (JSON). Built-in defaults when omitted.
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<RunMode>,
    /// Comma separated finger names, or `all` for F2-F5.
    #[arg(long)]
    fingers: Option<String>,
    /// Use 50 s holds instead of the configured hold time.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (relative paths go under $TENDON_HAND_OUTPUT_ROOT if set).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Print the summary as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args)]
struct ValidateArgs {
    #[arg(long)]
    hand: Option<PathBuf>,
    #[arg(long)]
    tendons: Option<PathBuf>,
    #[arg(long)]
    gestures: Option<PathBuf>,
    /// Experiment config; its description files are checked too.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MatrixKind {
    Bs,
    Js,
    Tb,
    All,
}

#[derive(clap::Args)]
struct MatricesArgs {
    /// Tendon description file. Built-in network when omitted.
    tendons: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    matrix: MatrixKind,
}

#[derive(clap::Args)]
struct ReportArgs {
    trace: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    joint_threshold_deg: f64,
    #[arg(long, default_value_t = 5.0)]
    task_threshold_mm: f64,
    #[arg(long, default_value_t = 0.1)]
    steady_state_offset_s: f64,
    #[arg(long)]
    json: bool,
}

fn parse_mode(s: &str) -> Result<RunMode, String> {
    s.parse().map_err(|e: tendon_hand::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Validate(a) => validate(a),
        Command::Matrices(a) => matrices(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn output_dir(requested: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if requested.is_relative() => Path::new(&root).join(requested),
        _ => requested.to_path_buf(),
    }
}

fn run(a: RunArgs) -> Result<ExitCode> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if let Some(f) = &a.fingers {
        cfg.fingers = if f == "all" {
            LONG_FINGERS.iter().map(|s| s.to_string()).collect()
        } else {
            f.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
        };
    }
    if a.paper_scale {
        cfg.timing.hold_s = harness::LONG_HOLD_S;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(o) = a.output {
        cfg.output_dir = o;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("invalid experiment config: {e}");
        return Ok(ExitCode::from(2));
    }
    let out = harness::run_experiment(&cfg)?;
    let dir = output_dir(&cfg.output_dir);
    out.write(&cfg, &dir)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&out.summary(&cfg))?);
    } else {
        println!(
            "mode {}  seed {}  fingers {}  steps {}",
            cfg.mode.as_str(),
            cfg.seed,
            cfg.fingers.join(","),
            out.stats.steps
        );
        print!("{}", out.metrics.to_text());
        println!("wrote {}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

/// Parses `path` as `T`; a parse failure is reported as a problem.
fn load_checked<T: serde::de::DeserializeOwned>(path: &Path, problems: &mut Vec<String>) -> Option<T> {
    match load_json(path) {
        Ok(v) => Some(v),
        Err(e) => {
            problems.push(e.to_string());
            None
        }
    }
}

fn validate(a: ValidateArgs) -> Result<ExitCode> {
    let mut problems = Vec::new();
    let (mut hand_path, mut tendon_path, mut gesture_path) = (a.hand, a.tendons, a.gestures);
    if let Some(p) = &a.config {
        match ExperimentConfig::load(p) {
            Ok(cfg) => {
                if let Err(e) = cfg.validate() {
                    problems.push(format!("{}: {e}", p.display()));
                }
                hand_path = hand_path.or(cfg.hand);
                tendon_path = tendon_path.or(cfg.tendons);
                gesture_path = gesture_path.or(cfg.gestures);
            }
            Err(e) => problems.push(e.to_string()),
        }
    }

    let hand = match &hand_path {
        Some(p) => load_checked::<HandFile>(p, &mut problems),
        None => Some(HandFile::embedded()?),
    };
    let tendons = match &tendon_path {
        Some(p) => load_checked::<TendonFile>(p, &mut problems),
        None => Some(TendonFile::embedded()?),
    };
    let gestures = match &gesture_path {
        Some(p) => load_checked::<GestureFile>(p, &mut problems),
        None => Some(GestureFile::embedded()?),
    };

    if let Some(h) = &hand {
        problems.extend(h.check());
    }
    if let Some(t) = &tendons {
        match t.graph() {
            Ok(g) => {
                let report = validate_graph(&g);
                problems.extend(report.violations.iter().map(|v| v.to_string()));
                if report.is_valid() {
                    if let Err(e) = build_connection_matrices(&g) {
                        problems.push(e.to_string());
                    }
                }
            }
            Err(e) => problems.push(e.to_string()),
        }
    }
    if let (Some(h), Some(t)) = (&hand, &tendons) {
        for f in &t.fingers {
            match t.bind(h, f) {
                Ok(model) => {
                    if let Some(g) = &gestures {
                        for entry in &g.gestures {
                            if let Err(e) = entry.joint_vector(model.finger()) {
                                problems.push(e.to_string());
                            }
                        }
                    }
                }
                Err(e) => problems.push(format!("{f}: {e}")),
            }
        }
    }

    if problems.is_empty() {
        println!("ok");
        Ok(ExitCode::SUCCESS)
    } else {
        for p in &problems {
            println!("{p}");
        }
        println!("{} problem(s)", problems.len());
        Ok(ExitCode::from(2))
    }
}

fn matrices(a: MatricesArgs) -> Result<ExitCode> {
    let file = match &a.tendons {
        Some(p) => load_json::<TendonFile>(p).with_context(|| format!("loading {}", p.display()))?,
        None => TendonFile::embedded()?,
    };
    let graph = file.graph()?;
    let report = validate_graph(&graph);
    if !report.is_valid() {
        eprint!("{report}");
        return Ok(ExitCode::from(2));
    }
    let m = build_connection_matrices(&graph)?;
    let mut segments: Vec<usize> = graph.segments.iter().map(|s| s.id).collect();
    segments.sort_unstable();
    let seg_labels: Vec<String> = segments.iter().map(|s| format!("s{s}")).collect();
    let branch_labels: Vec<String> = (0..m.n_b()).map(|b| format!("B{b}")).collect();
    let blocks = [
        (MatrixKind::Bs, "C_bs", &m.c_bs, &branch_labels, &seg_labels),
        (MatrixKind::Js, "C_js", &m.c_js, &graph.junctions, &seg_labels),
        (MatrixKind::Tb, "C_tb", &m.c_tb, &graph.muscles, &branch_labels),
    ];
    let mut first = true;
    for (kind, name, mat, rows, cols) in blocks {
        if a.matrix != MatrixKind::All && a.matrix != kind {
            continue;
        }
        if a.matrix == MatrixKind::All {
            if !first {
                println!();
            }
            println!("# {name}");
        }
        first = false;
        print!("{}", matrix_csv(mat, rows, cols));
    }
    Ok(ExitCode::SUCCESS)
}

fn report(a: ReportArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&a.trace).with_context(|| format!("reading {}", a.trace.display()))?;
    let table = TraceTable::from_csv(&text)?;
    let opts = MetricOptions {
        joint_threshold_deg: a.joint_threshold_deg,
        task_threshold_mm: a.task_threshold_mm,
        steady_state_offset_s: a.steady_state_offset_s,
    };
    if opts.joint_threshold_deg <= 0.0 || opts.task_threshold_mm <= 0.0 {
        bail!("thresholds must be positive");
    }
    let metrics = compute_metrics(&table, &opts)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&metrics)?);
    } else {
        print!("{}", metrics.to_text());
    }
    Ok(ExitCode::SUCCESS)
}
