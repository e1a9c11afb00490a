mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use quinelab::quineforge::{forge_egg, verify_fixed_point, Egg, Payloads, QuineTemplates};
use quinelab::scenario::{parse_scenario, run_scenario, RunError, RunOptions, ScenarioConfig};
use quinelab::sentinel::{load_signatures, scan_request_log};
use quinelab::websim::{parse_event_log, write_event_log, write_metrics, WorldState};

#[derive(Parser)]
#[command(name = "quinelab", version, about = "Two-stage quine worm laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the egg from the canonical templates and check its fixed point.
    Forge {
        /// Write quine.sql, injection.sql, url_param_suffix.txt and js_egg.js here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        sql_payload: Option<PathBuf>,
        #[arg(long)]
        js_payload: Option<PathBuf>,
    },
    /// Run a scenario.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Print every event and script statement to stderr.
        #[arg(long)]
        verbose: bool,
        /// Run one world per seed in `seeds=A..B` (inclusive), in parallel.
        #[arg(long, value_parser = parse_sweep, conflicts_with = "seed")]
        sweep: Option<(u64, u64)>,
    },
    /// Scan an event log with a signature file.
    Detect {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        signatures: PathBuf,
        /// Write one JSON record per flag here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Summarize an event log: metrics table and per-site timeline.
    Report {
        #[arg(long)]
        log: PathBuf,
    },
}

fn parse_sweep(s: &str) -> Result<(u64, u64), String> {
    let range = s.strip_prefix("seeds=").ok_or("expected seeds=A..B")?;
    let (a, b) = range.split_once("..").ok_or("expected seeds=A..B")?;
    let a: u64 = a.parse().map_err(|_| format!("bad seed {a:?}"))?;
    let b: u64 = b.parse().map_err(|_| format!("bad seed {b:?}"))?;
    if a > b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok((a, b))
}

/// Failure classes and their exit codes.
#[derive(Debug)]
enum Failure {
    /// Malformed or invalid input document.
    Input(String),
    Forge(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Forge(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Scenario(e) => Failure::Input(e.to_string()),
            RunError::Forge(e) => Failure::Forge(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    String::from_utf8(read(path)?).map_err(|_| Failure::Input(format!("{}: not UTF-8", path.display())))
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, data).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Forge { out, sql_payload, js_payload } => forge(out, sql_payload, js_payload),
        Command::Run { scenario, seed, log, metrics, verbose, sweep } => {
            run(&scenario, seed, log.as_deref(), metrics.as_deref(), verbose, sweep)
        }
        Command::Detect { log, signatures, report } => detect(&log, &signatures, report.as_deref()),
        Command::Report { log } => summarize(&log),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(m) | Failure::Forge(m) | Failure::Io(m)) = &f;
            eprintln!("quinelab: {m}");
            ExitCode::from(f.code())
        }
    }
}

fn forge(out: Option<PathBuf>, sql: Option<PathBuf>, js: Option<PathBuf>) -> Result<(), Failure> {
    let payloads = Payloads {
        sql: sql.map(|p| read(&p)).transpose()?.unwrap_or_default(),
        js: js.map(|p| read(&p)).transpose()?.unwrap_or_default(),
    };
    let egg = forge_egg(&QuineTemplates::canonical(), &payloads).map_err(|e| Failure::Forge(e.to_string()))?;
    let verdict = verify_fixed_point(&egg);
    match &out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
            for (name, bytes) in artifacts(&egg) {
                write(&dir.join(name), bytes)?;
            }
        }
        None => {
            for (name, bytes) in artifacts(&egg) {
                println!("== {name} ==");
                println!("{}", String::from_utf8_lossy(bytes));
            }
        }
    }
    println!("quine_sql_bytes={}", egg.quine_sql.len());
    println!("injection_sql_bytes={}", egg.injection_sql.len());
    println!("url_param_suffix_bytes={}", egg.url_param_suffix.len());
    println!("js_egg_bytes={}", egg.js_egg.len());
    println!("fixed_point={}", verdict.ok);
    if !verdict.ok {
        return Err(Failure::Forge(verdict.to_string()));
    }
    Ok(())
}

fn artifacts(egg: &Egg) -> [(&'static str, &[u8]); 4] {
    [
        ("quine.sql", &egg.quine_sql),
        ("injection.sql", &egg.injection_sql),
        ("url_param_suffix.txt", &egg.url_param_suffix),
        ("js_egg.js", &egg.js_egg),
    ]
}

fn summary(w: &WorldState) -> String {
    let mut s = format!("steps={} events={}\n", w.clock, w.events.len());
    for (domain, st) in w.infection_state() {
        s.push_str(&format!("{domain}: infected={} fields={}\n", st.infected, st.infected_fields));
    }
    s
}

/// `dir/stem.seedN.ext` next to `path`.
fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.seed{seed}"),
    };
    path.with_file_name(name)
}

fn run_one(config: &ScenarioConfig, seed: Option<u64>, verbose: bool) -> Result<WorldState, Failure> {
    Ok(run_scenario(config, RunOptions { rng_seed: seed, trace: verbose })?.world)
}

fn run(
    scenario: &Path,
    seed: Option<u64>,
    log: Option<&Path>,
    metrics: Option<&Path>,
    verbose: bool,
    sweep: Option<(u64, u64)>,
) -> Result<(), Failure> {
    let config =
        parse_scenario(&read(scenario)?).map_err(|e| Failure::Input(format!("{}: {e}", scenario.display())))?;
    let Some((a, b)) = sweep else {
        let w = run_one(&config, seed, verbose)?;
        if verbose {
            for line in &w.trace {
                eprintln!("{line}");
            }
            eprint!("{}", write_event_log(&w.events));
        }
        if let Some(p) = log {
            write(p, write_event_log(&w.events))?;
        }
        if let Some(p) = metrics {
            write(p, write_metrics(&w.metrics))?;
        }
        print!("{}", summary(&w));
        return Ok(());
    };
    let seeds: Vec<u64> = (a..=b).collect();
    let config = &config;
    let worlds: Vec<Result<WorldState, Failure>> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds.iter().map(|&n| s.spawn(move || run_one(config, Some(n), false))).collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    for (n, w) in seeds.iter().zip(worlds) {
        let w = w?;
        if let Some(p) = log {
            write(&seeded_path(p, *n), write_event_log(&w.events))?;
        }
        if let Some(p) = metrics {
            write(&seeded_path(p, *n), write_metrics(&w.metrics))?;
        }
        print!("seed={n} {}", summary(&w));
    }
    Ok(())
}

fn detect(log: &Path, signatures: &Path, report: Option<&Path>) -> Result<(), Failure> {
    let events = parse_event_log(&read_text(log)?).map_err(|e| Failure::Input(format!("{}: {e}", log.display())))?;
    let sigs = load_signatures(&read_text(signatures)?)
        .map_err(|e| Failure::Input(format!("{}: {e}", signatures.display())))?;
    let r = scan_request_log(&events, &sigs);
    print!("{}", r.summary());
    if let Some(p) = report {
        write(p, r.flag_lines())?;
    }
    Ok(())
}

fn summarize(log: &Path) -> Result<(), Failure> {
    let events = parse_event_log(&read_text(log)?).map_err(|e| Failure::Input(format!("{}: {e}", log.display())))?;
    print!("{}", report::render(&events));
    Ok(())
}
