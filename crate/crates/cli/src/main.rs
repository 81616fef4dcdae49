use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use flightwatch::config::Config;
use flightwatch::detectors::ModelBundle;
use flightwatch::ensemble::{detect_log, Monitor};
use flightwatch::evalkit::{benchmark_latency, evaluate, run_experiment, suite_run, training_corpus, train, SuiteKind};
use flightwatch::phases::segment;
use flightwatch::rules::{mine_rules, RuleSet};
use flightwatch::simkit::{
    base_mission, parse_labels, random_mission, simulate, windy_pair, FaultSpec, LabeledLog, MissionSpec,
};
use flightwatch::telemetry::{
    check_header, parse_commands, parse_log, parse_record_line, write_log, FlightLog, LogRecord, MissionMeta,
    COMMANDS_MARKER, META_PREFIX,
};

#[derive(Parser)]
#[command(name = "flightwatch", version, about = "Phase-aware anomaly detection for drone flight logs")]
struct Cli {
    /// TOML file with pipeline settings
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (simulation and detector initialisation)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindLevel {
    Strong,
    Mild,
}

#[derive(Subcommand)]
enum Command {
    /// Fly simulated missions and write logs with label files
    Simulate {
        /// Mission JSON; defaults to the base pentagon mission
        #[arg(long, conflicts_with = "random_mission")]
        mission: Option<PathBuf>,
        /// Draw a random mission from each run's seed
        #[arg(long)]
        random_mission: bool,
        /// Fault to inject, e.g. `actuator:factor=0.7,start=0,end=999999`
        #[arg(long = "fault")]
        faults: Vec<FaultSpec>,
        /// Whole-mission wind calibrated against the mission's failure point
        #[arg(long, value_enum)]
        wind: Option<WindLevel>,
        /// Number of runs, seeded consecutively from --seed
        #[arg(long, default_value_t = 1)]
        runs: u64,
    },
    /// Mine range rules from clean logs
    Mine {
        /// Log files or directories of `.log` files
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Fit the five detectors on clean logs
    Fit {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Check a whole log; exits 1 when an alert is raised
    Detect {
        log: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        /// Detector bundle; without it only rules are checked
        #[arg(long)]
        models: Option<PathBuf>,
        /// Label CSV to score the verdicts against
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Print every verdict, not only anomalous ones
        #[arg(long)]
        verbose: bool,
    },
    /// Check records read line by line from standard input; exits 1 when an alert is raised
    Stream {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        models: Option<PathBuf>,
        /// Mission JSON, needed unless the stream carries a `#meta` line
        #[arg(long)]
        mission: Option<PathBuf>,
        /// Command CSV checked against the latency rule
        #[arg(long)]
        commands: Option<PathBuf>,
    },
    /// Train on simulated clean flights and score every fault suite
    Eval,
    /// Per-record timing of each pipeline stage
    Bench {
        /// Training points kept for the detectors
        #[arg(long, default_value_t = 450)]
        train_size: usize,
        /// Log to time; defaults to a simulated clean random mission
        #[arg(long)]
        log: Option<PathBuf>,
        /// Time rule checking alone
        #[arg(long)]
        no_models: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config = match &cli.config {
        Some(p) => Config::from_toml(&read(p)?)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = Some(seed);
        config.detectors.seed = seed;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match cli.command {
        Command::Simulate {
            mission,
            random_mission: random,
            faults,
            wind,
            runs,
        } => cmd_simulate(&out, config.seed.unwrap_or(0), mission.as_deref(), random, &faults, wind, runs),
        Command::Mine { logs } => cmd_mine(&config, &out, &logs),
        Command::Fit { logs } => cmd_fit(&config, &out, &logs),
        Command::Detect {
            log,
            rules,
            models,
            labels,
            verbose,
        } => cmd_detect(&config, &log, &rules, models.as_deref(), labels.as_deref(), verbose),
        Command::Stream {
            rules,
            models,
            mission,
            commands,
        } => cmd_stream(&config, &rules, models.as_deref(), mission.as_deref(), commands.as_deref()),
        Command::Eval => cmd_eval(&config, cli.out.as_deref()),
        Command::Bench {
            train_size,
            log,
            no_models,
        } => cmd_bench(&config, cli.out.as_deref(), train_size, log.as_deref(), no_models),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_simulate(
    out: &Path,
    seed: u64,
    mission: Option<&Path>,
    random: bool,
    faults: &[FaultSpec],
    wind: Option<WindLevel>,
    runs: u64,
) -> Result<ExitCode> {
    let fixed: Option<MissionSpec> = match mission {
        Some(p) => Some(serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?),
        None if random => None,
        None => Some(base_mission()),
    };
    for run in 0..runs {
        let seed = seed + run;
        let spec = fixed.clone().unwrap_or_else(|| random_mission(seed));
        let labeled: LabeledLog = match wind {
            None => simulate(&spec, faults, seed)?,
            Some(level) => {
                if !faults.is_empty() {
                    bail!("--wind cannot be combined with --fault");
                }
                let (strong, mild) = windy_pair(&spec, seed)?;
                match level {
                    WindLevel::Strong => strong,
                    WindLevel::Mild => mild,
                }
            }
        };
        let stem = format!("flight_{seed}");
        write(&out.join(format!("{stem}.log")), &write_log(&labeled.log))?;
        write(&out.join(format!("{stem}.labels.csv")), &labeled.labels_csv())?;
        write(
            &out.join(format!("{stem}.mission.json")),
            &serde_json::to_string_pretty(&spec)?,
        )?;
        println!(
            "{stem}.log: {} records, {} anomalous, {}",
            labeled.log.len(),
            labeled.anomaly_mask.iter().filter(|&&a| a).count(),
            if labeled.completed { "completed" } else { "did not complete" }
        );
    }
    Ok(ExitCode::SUCCESS)
}

/// Expands directories to their `.log` files, sorted by name.
fn collect_logs(paths: &[PathBuf]) -> Result<Vec<(String, FlightLog)>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "log"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("no .log files found");
    }
    files
        .into_iter()
        .map(|f| {
            let log = parse_log(&read(&f)?).with_context(|| format!("parsing {}", f.display()))?;
            Ok((f.display().to_string(), log))
        })
        .collect()
}

fn cmd_mine(config: &Config, out: &Path, paths: &[PathBuf]) -> Result<ExitCode> {
    let logs = collect_logs(paths)?;
    let annotated = logs
        .iter()
        .map(|(name, l)| segment(l, config.phases).with_context(|| name.clone()))
        .collect::<Result<Vec<_>>>()?;
    let names = logs.iter().map(|(n, _)| n.clone()).collect();
    let report = mine_rules(&annotated, names, &config.mining)?;
    let path = out.join("rules.json");
    write(&path, &report.ruleset.to_json())?;
    let records: usize = logs.iter().map(|(_, l)| l.len()).sum();
    println!(
        "mined {} rules from {} logs ({records} records); {} candidates dropped -> {}",
        report.ruleset.rules.len(),
        logs.len(),
        report.dropped.len(),
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_fit(config: &Config, out: &Path, paths: &[PathBuf]) -> Result<ExitCode> {
    let logs = collect_logs(paths)?;
    let records: Vec<&LogRecord> = logs.iter().flat_map(|(_, l)| &l.records).collect();
    let bundle = ModelBundle::fit_records(&records, &config.detectors)?;
    let path = out.join("models.json");
    write(&path, &bundle.to_json())?;
    println!(
        "fitted 5 detectors on {} of {} records -> {}",
        bundle.train_size,
        records.len(),
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_rules(path: &Path) -> Result<RuleSet> {
    RuleSet::from_json(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_models(path: Option<&Path>) -> Result<Option<ModelBundle>> {
    path.map(|p| ModelBundle::from_json(&read(p)?).with_context(|| format!("parsing {}", p.display())))
        .transpose()
}

fn cmd_detect(
    config: &Config,
    log_path: &Path,
    rules: &Path,
    models: Option<&Path>,
    labels: Option<&Path>,
    verbose: bool,
) -> Result<ExitCode> {
    let rules = load_rules(rules)?;
    let models = load_models(models)?;
    let log = parse_log(&read(log_path)?).with_context(|| format!("parsing {}", log_path.display()))?;
    let det = detect_log(&rules, models.as_ref(), &log, config.phases, config.window)?;
    let stdout = io::stdout();
    let mut w = stdout.lock();
    for v in &det.verdicts {
        if verbose || v.final_vote.is_anomaly() {
            writeln!(w, "{v}")?;
        }
    }
    for a in &det.alerts {
        writeln!(w, "{a} ts={}", a.timestamp_ms)?;
    }
    writeln!(
        w,
        "records={} anomalies={} alerts={}",
        det.verdicts.len(),
        det.anomalies(),
        det.alerts.len()
    )?;
    if let Some(p) = labels {
        let parsed = parse_labels(&read(p)?).map_err(anyhow::Error::msg)?;
        if parsed.len() != det.verdicts.len()
            || parsed.iter().zip(&log.records).any(|((ts, _), r)| *ts != r.timestamp_ms)
        {
            bail!("labels in {} do not line up with the log", p.display());
        }
        let truth: Vec<bool> = parsed.iter().map(|&(_, a)| a).collect();
        let finals: Vec<_> = det.verdicts.iter().map(|v| v.final_vote).collect();
        let m = evaluate(&finals, &truth)?;
        let pct = |x: Option<f64>| x.map_or("N/A".into(), |v| format!("{:.2}%", 100.0 * v));
        writeln!(w, "recall={} fpr={}", pct(m.recall), pct(m.false_positive_rate))?;
    }
    Ok(if !det.alerts.is_empty() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_stream(
    config: &Config,
    rules: &Path,
    models: Option<&Path>,
    mission: Option<&Path>,
    commands: Option<&Path>,
) -> Result<ExitCode> {
    let rules = load_rules(rules)?;
    let models = load_models(models)?;
    let mut meta: Option<MissionMeta> = match mission {
        Some(p) => {
            let spec: MissionSpec =
                serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?;
            Some(spec.meta())
        }
        None => None,
    };
    let preloaded = match commands {
        Some(p) => parse_commands(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => Vec::new(),
    };

    let stdout = io::stdout();
    let mut w = stdout.lock();
    let mut monitor: Option<Monitor> = None;
    let mut header_seen = false;
    let mut in_commands = false;
    let mut last_ts: Option<i64> = None;
    let mut alerts = 0usize;

    for (i, line) in io::stdin().lock().lines().enumerate() {
        let line_no = i + 1;
        let line = line.context("reading standard input")?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(json) = text.strip_prefix(META_PREFIX) {
            match MissionMeta::from_json(json) {
                Ok(m) => meta = Some(m),
                Err(e) => writeln!(w, "ERROR line {line_no}: {e}")?,
            }
            continue;
        }
        if text == COMMANDS_MARKER {
            in_commands = true;
            continue;
        }
        if in_commands {
            // the command section carries its own header
            if text.starts_with("cmd_id") {
                continue;
            }
            match (parse_commands(&format!("cmd_id,issue_ms,enact_ms\n{text}")), monitor.as_mut()) {
                (Ok(cmds), Some(m)) => cmds.into_iter().for_each(|c| m.register_command(c)),
                (Ok(_), None) => writeln!(w, "ERROR line {line_no}: command before any record")?,
                (Err(e), _) => writeln!(w, "ERROR line {line_no}: {e}")?,
            }
            continue;
        }
        if !header_seen {
            check_header(text).with_context(|| format!("line {line_no}: expected the log header"))?;
            header_seen = true;
            continue;
        }
        let record = match parse_record_line(text, line_no) {
            Ok(r) => r,
            Err(e) => {
                writeln!(w, "ERROR {e}")?;
                continue;
            }
        };
        if last_ts.is_some_and(|t| record.timestamp_ms <= t) {
            writeln!(w, "ERROR line {line_no}: timestamp {} does not advance", record.timestamp_ms)?;
            continue;
        }
        last_ts = Some(record.timestamp_ms);
        if monitor.is_none() {
            let Some(m) = meta.clone() else {
                bail!("no mission metadata: pass --mission or start the stream with a #meta line");
            };
            let mut mon = Monitor::new(&rules, models.as_ref(), m, config.phases, config.window)?;
            for c in &preloaded {
                mon.register_command(c.clone());
            }
            monitor = Some(mon);
        }
        let mon = monitor.as_mut().expect("monitor is initialised above");
        let (verdict, alert) = mon.process(&record)?;
        writeln!(w, "{verdict}")?;
        if let Some(a) = alert {
            alerts += 1;
            writeln!(w, "{a}")?;
        }
        w.flush()?;
    }
    if let (Some(mon), Some(ts)) = (monitor.as_mut(), last_ts) {
        for v in mon.flush_commands(ts) {
            writeln!(w, "ts={ts} final=ANOMALY rules=[{v}] (command still pending at end of stream)")?;
        }
    }
    Ok(if alerts > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_eval(config: &Config, out: Option<&Path>) -> Result<ExitCode> {
    let report = run_experiment(&config.experiment, config.phases, &config.mining, &config.detectors)?;
    print!("{}", report.table());
    if let Some(dir) = out {
        let path = dir.join("eval_report.json");
        write(&path, &serde_json::to_string_pretty(&report)?)?;
        println!("report -> {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(
    config: &Config,
    out: Option<&Path>,
    train_size: usize,
    log: Option<&Path>,
    no_models: bool,
) -> Result<ExitCode> {
    let exp = &config.experiment;
    let corpus = training_corpus(exp.training_missions, exp.training_seed)?;
    let mut detectors = config.detectors.clone();
    detectors.max_train = train_size;
    let trained = train(&corpus, config.phases, &config.mining, &detectors)?;
    let log = match log {
        Some(p) => parse_log(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => suite_run(SuiteKind::Clean, config.seed.unwrap_or(exp.suite_seed))?.log,
    };
    let models = (!no_models).then_some(&trained.models);
    let report = benchmark_latency(models, &trained.rules, &log, config.phases)?;
    println!(
        "{} records, {} training points per detector",
        log.len(),
        if no_models { 0 } else { trained.models.train_size }
    );
    print!("{report}");
    if let Some(dir) = out {
        let path = dir.join("bench_report.json");
        write(&path, &serde_json::to_string_pretty(&report)?)?;
        println!("report -> {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
