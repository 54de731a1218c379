use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gravlab_core::eval::{
    aggregate, baseline_gap_report, derive_thresholds, detect_mass_assumption, read_runs, score_answer, write_runs,
    SampleCount,
};
use gravlab_core::library::ScenarioLibrary;
use gravlab_core::sim::{simulate, Scenario};
use gravlab_gateway::{load_catalog, run_suite, spawn, AgentSpec, Config, Gateway, ProtocolKind, SuiteOptions};

#[derive(Parser)]
#[command(name = "gravlab", version, about = "Two-body discovery environment, baselines and agent gateway")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "GRAVLAB_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Budget,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its trajectory as CSV plus metadata.
    Simulate {
        /// Library scenario id, or a path to a scenario TOML file.
        scenario: String,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// List task instances, or write the catalog manifest.
    Catalog {
        /// Write the TOML manifest here instead of printing a listing.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Show excluded task/scenario pairs too.
        #[arg(long)]
        excluded: bool,
    },
    /// Baseline gaps of the uniform expert against full data.
    Baseline {
        /// Comma-separated sample counts; `full` compares full data with itself.
        #[arg(long, default_value = "10,20,50,100,full", value_delimiter = ',')]
        samples: Vec<SampleCount>,
        /// Directory for gaps.csv, gaps.json, gaps.svg and thresholds.toml.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Derive per-task thresholds and print them as a manifest fragment.
    Thresholds {
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the agent gateway until interrupted.
    Serve,
    /// Run an agent over the catalog and report.
    Run {
        /// uniform[:N], full or remote:HOST:PORT
        #[arg(long, default_value = "uniform:100")]
        agent: AgentSpec,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Substring of task id, binding or scenario id.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, value_enum, default_value = "budget")]
        protocol: ProtocolArg,
        #[arg(long)]
        budget: Option<usize>,
        /// Per-episode agent time limit in seconds.
        #[arg(long)]
        timeout: Option<u64>,
    },
    /// Re-score stored run records against the current catalog.
    Score {
        runs: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Re-run a stored transcript and report lines whose replies differ.
    Replay { transcript: PathBuf },
    /// Scan transcripts for hard-coded mass assumptions.
    Analyze {
        #[arg(required = true)]
        transcripts: Vec<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate { scenario, out } => simulate_cmd(&config, &scenario, &out),
        Command::Catalog { manifest, excluded } => catalog_cmd(&config, manifest.as_deref(), excluded),
        Command::Baseline { samples, out } => baseline_cmd(&config, &samples, out.as_deref()),
        Command::Thresholds { out } => thresholds_cmd(&config, out.as_deref()),
        Command::Serve => {
            let gateway = Arc::new(Gateway::from_config(config.clone())?);
            let handle = spawn(gateway, &config.bind)?;
            println!("gateway listening on {}", handle.addr());
            handle.wait();
            Ok(())
        }
        Command::Run { agent, repeats, filter, protocol, budget, timeout } => {
            let protocol = match protocol {
                ProtocolArg::Budget => ProtocolKind::BudgetObs,
                ProtocolArg::Full => ProtocolKind::FullObs,
            };
            run_cmd(config, agent, repeats, filter, protocol, budget, timeout)
        }
        Command::Score { runs, json } => score_cmd(&config, &runs, json),
        Command::Replay { transcript } => replay_cmd(config, &transcript),
        Command::Analyze { transcripts } => analyze_cmd(&transcripts),
    }
}

fn replay_cmd(config: Config, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mismatches = Gateway::from_config(config)?.replay(&text)?;
    if mismatches.is_empty() {
        println!("{}: replay identical", path.display());
        return Ok(());
    }
    let lines: Vec<String> = mismatches.iter().map(usize::to_string).collect();
    bail!("{}: replies differ at seq {}", path.display(), lines.join(", "))
}

fn simulate_cmd(config: &Config, scenario: &str, out: &Path) -> Result<()> {
    let path = Path::new(scenario);
    let scenario: Scenario = if path.exists() {
        Scenario::load(path).with_context(|| format!("loading {scenario}"))?
    } else {
        let library = match &config.scenario_dir {
            Some(d) => ScenarioLibrary::load_dir(d)?,
            None => ScenarioLibrary::builtin(),
        };
        library.get(scenario)?.clone()
    };
    let traj = simulate(&scenario)?;
    traj.export(out)?;
    println!("{}: {} rows over {:.6e} s -> {}", scenario.id, traj.len(), traj.end_time(), out.display());
    Ok(())
}

fn catalog_cmd(config: &Config, manifest: Option<&Path>, excluded: bool) -> Result<()> {
    let (_, catalog) = load_catalog(config)?;
    if let Some(p) = manifest {
        std::fs::write(p, catalog.manifest()?)?;
        println!("wrote {} instances to {}", catalog.len(), p.display());
        return Ok(());
    }
    println!("{:<52} {:<16} {:>9} {:>12}", "instance", "units", "threshold", "window end");
    for i in &catalog.instances {
        println!("{:<52} {:<16} {:>8.1}% {:>12.4e}", i.id, i.units, i.task.threshold_pct, i.window_end);
    }
    if excluded {
        for e in &catalog.excluded {
            println!("excluded {}@{}: {}", e.task, e.scenario, e.reason);
        }
    }
    println!("{} instances, {} excluded pairs", catalog.len(), catalog.excluded.len());
    Ok(())
}

fn baseline_cmd(config: &Config, samples: &[SampleCount], out: Option<&Path>) -> Result<()> {
    let (library, catalog) = load_catalog(config)?;
    let report = baseline_gap_report(&library, &catalog, samples);
    print!("{}", report.to_table());
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(dir) = out {
        report.write(dir)?;
        println!("wrote gap table, thresholds and plot to {}", dir.display());
    }
    Ok(())
}

fn thresholds_cmd(config: &Config, out: Option<&Path>) -> Result<()> {
    let (library, catalog) = load_catalog(config)?;
    let mut text = String::from("[thresholds]\n");
    for r in derive_thresholds(&library, &catalog) {
        let median = r.median_gap.map(|m| format!("{m:.3}%")).unwrap_or_else(|| "n/a".into());
        eprintln!("{:<28} median gap {:>12}  threshold {:.1}%", r.task, median, r.threshold_pct);
        for w in &r.warnings {
            eprintln!("  warning: {w}");
        }
        text.push_str(&format!("{} = {:.4}\n", r.task, r.threshold_pct));
    }
    match out {
        Some(p) => std::fs::write(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run_cmd(
    config: Config,
    agent: AgentSpec,
    repeats: usize,
    filter: Option<String>,
    protocol: ProtocolKind,
    budget: Option<usize>,
    timeout: Option<u64>,
) -> Result<()> {
    let results = config.results_dir.clone();
    let timeout = timeout.map(Duration::from_secs).unwrap_or_else(|| config.agent_timeout());
    let gateway = Arc::new(Gateway::from_config(config.clone())?);
    let server = match agent {
        AgentSpec::Remote(_) => Some(spawn(gateway.clone(), &config.bind)?),
        _ => None,
    };
    let opts =
        SuiteOptions { filter, repeats, protocol, budget, timeout, gateway_addr: server.as_ref().map(|s| s.addr()) };
    let result = run_suite(&gateway, &agent, &opts)?;
    if let Some(s) = server {
        s.shutdown();
    }
    std::fs::create_dir_all(&results)?;
    std::fs::write(results.join("report.txt"), result.report.to_text())?;
    std::fs::write(results.join("report.json"), result.report.to_json()?)?;
    print!("{}", result.report.to_text());
    println!("records and transcripts in {}", results.display());
    Ok(())
}

fn score_cmd(config: &Config, runs: &Path, json: bool) -> Result<()> {
    let (_, catalog) = load_catalog(config)?;
    let file = std::fs::File::open(runs).with_context(|| format!("opening {}", runs.display()))?;
    let mut records = read_runs(std::io::BufReader::new(file))?;
    let mut changed = 0;
    for r in &mut records {
        let Some(inst) = catalog.get(&r.instance) else {
            bail!("run refers to unknown instance {}", r.instance);
        };
        let correct = match r.submitted {
            Some(v) => score_answer(inst, v, &r.units).map(|v| v.correct).unwrap_or(false),
            None => false,
        };
        if correct != r.correct {
            changed += 1;
            r.correct = correct;
        }
    }
    let repeats = records.iter().map(|r| r.repeat + 1).max().unwrap_or(0);
    let report = aggregate(&records, repeats);
    if json {
        println!("{}", report.to_json()?);
    } else {
        print!("{}", report.to_text());
        println!("{changed} of {} verdicts changed on re-scoring", records.len());
    }
    let rescored = runs.with_extension("rescored.jsonl");
    write_runs(std::fs::File::create(&rescored)?, &records)?;
    Ok(())
}

fn analyze_cmd(paths: &[PathBuf]) -> Result<()> {
    let mut flagged = 0;
    for p in paths {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let found = detect_mass_assumption(&text);
        if found.detected {
            flagged += 1;
            println!("{}: mass assumption detected", p.display());
            for h in &found.hits {
                println!("  line {:>4} [{}] {}", h.line, h.pattern, h.snippet);
            }
        } else {
            println!("{}: clean", p.display());
        }
    }
    println!("{flagged} of {} transcripts flagged", paths.len());
    Ok(())
}
