use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use gridrel::engine::{apply_loading_level, run_monte_carlo, SimConfig};
use gridrel::io::{self, ResultsBundle, RunHeader};
use gridrel::operator::OperatorConfig;
use gridrel::powerflow::FlowMethod;
use gridrel::stats::SizeMetric;
use gridrel::{rts96, Network};

/// Monte Carlo reliability simulation of transmission grids.
#[derive(Parser, Debug)]
#[command(name = "gridrel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate N operating years and write the results bundle.
    Run(RunArgs),
    /// Parse and validate a network file (and optionally a profile).
    Validate {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Write the bundled RTS-96 network and load profile.
    Rts96 {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Metric {
    Energy,
    MaxDemand,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Flow {
    Direct,
    Iterative,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    years: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    loading_level: f64,
    /// Operator response delay in minutes for every area; defaults to each
    /// area's own delay from the network file.
    #[arg(long, conflicts_with = "no_operator")]
    operator_response_min: Option<f64>,
    #[arg(long)]
    no_operator: bool,
    #[arg(long, value_enum, default_value_t = Metric::Energy)]
    size_metric: Metric,
    #[arg(long, default_value_t = 0.9)]
    confidence: f64,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = Flow::Direct)]
    flow_method: Flow,
    /// Check balance and flow coherence after every event.
    #[arg(long)]
    check_invariants: bool,
    /// Write every corrective LP into this directory.
    #[arg(long)]
    dump_lp: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { network, profile } => validate(&network, profile.as_deref()),
        Command::Rts96 { out } => write_rts96(&out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    if args.years == 0 {
        bail!("--years must be at least 1");
    }
    if !(args.loading_level > 0.0) {
        bail!("--loading-level must be positive");
    }
    if args.operator_response_min.is_some_and(|m| !(m >= 0.0)) {
        bail!("--operator-response-min must be non-negative");
    }
    if !(args.confidence > 0.0 && args.confidence < 1.0) {
        bail!("--confidence must lie strictly between 0 and 1");
    }
    if args.workers == Some(0) {
        bail!("--workers must be at least 1");
    }
    if args.no_operator && args.dump_lp.is_some() {
        bail!("--dump-lp has nothing to write with --no-operator");
    }

    let model = io::parse_network(&args.network).with_context(|| format!("reading {}", args.network.display()))?;
    let model_hash = io::model_hash(&model);
    let scaled = apply_loading_level(&model, args.loading_level)?;
    let net = Network::new(scaled)?;
    let profile = io::parse_profile(&args.profile, net.n_areas())
        .with_context(|| format!("reading {}", args.profile.display()))?;

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    if let Some(dir) = &args.dump_lp {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let operator = OperatorConfig {
        enabled: !args.no_operator,
        response_delay_min: args.operator_response_min,
    };
    let flow_method = match args.flow_method {
        Flow::Direct => FlowMethod::Direct,
        Flow::Iterative => FlowMethod::Iterative,
    };
    let config = SimConfig {
        operator,
        flow_method,
        check_invariants: args.check_invariants,
        lp_dump_dir: args.dump_lp.clone(),
    };
    let workers = args.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    log::info!(
        "simulating {} years of {} buses / {} lines at L={} with {workers} workers",
        args.years,
        net.n_buses(),
        net.n_lines(),
        args.loading_level
    );
    let started = Instant::now();
    let results = run_monte_carlo(&net, &profile, &config, args.years, args.seed, workers)?;
    log::info!("finished in {:.1} s", started.elapsed().as_secs_f64());

    let header = RunHeader {
        seed: args.seed,
        years: args.years,
        loading_level: args.loading_level,
        operator,
        size_metric: match args.size_metric {
            Metric::Energy => SizeMetric::Energy,
            Metric::MaxDemand => SizeMetric::MaxDemand,
        },
        confidence: args.confidence,
        flow_method,
        model_hash,
        profile_hash: io::profile_hash(&profile),
        profile_hours: profile.hours(),
    };
    let bundle = ResultsBundle::new(header, net.n_lines(), &results);
    if !bundle.aborted.is_empty() {
        log::warn!("{} of {} years aborted; see summary.txt", bundle.aborted.len(), args.years);
    }
    let eens = bundle.stats.eens_by_cause().unwrap_or([0.0; 3]);
    log::info!(
        "EENS MWh/y: inadequacy {:.1}, splitting {:.1}, operator {:.1}; {} blackouts",
        eens[0],
        eens[1],
        eens[2],
        bundle.stats.records.len()
    );
    bundle.write(&net, &args.out).with_context(|| format!("writing results to {}", args.out.display()))?;
    Ok(())
}

fn validate(network: &Path, profile: Option<&Path>) -> Result<()> {
    let model = io::parse_network(network).with_context(|| format!("reading {}", network.display()))?;
    let net = Network::new(model)?;
    println!(
        "{}: {} areas, {} buses, {} lines, {} generators, {} loads",
        network.display(),
        net.n_areas(),
        net.n_buses(),
        net.n_lines(),
        net.n_generators(),
        net.n_loads()
    );
    if let Some(p) = profile {
        let prof = io::parse_profile(p, net.n_areas()).with_context(|| format!("reading {}", p.display()))?;
        println!("{}: {} hours", p.display(), prof.hours());
    }
    Ok(())
}

fn write_rts96(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let net_path = out.join("rts96.net");
    let prof_path = out.join("rts96_profile.txt");
    std::fs::write(&net_path, io::write_network(&rts96::model()))?;
    std::fs::write(&prof_path, io::write_profile(&rts96::profile()?))?;
    println!("wrote {} and {}", net_path.display(), prof_path.display());
    Ok(())
}
