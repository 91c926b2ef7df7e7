//! `lotdesign` command line.
//!
//! Exit codes: 0 on success, 1 when no feasible plan was found (infeasible or
//! stopped before the first plan), 2 on usage and validation errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lotdesign::bench::{run_benchmark, BenchOptions, InstanceProfile};
use lotdesign::demand::{
    build_histories, estimate_demand, ingest_deliveries, ingest_sales, observed_labels, scale_to_capacity, Alignment,
    EstimateOptions, Weighting,
};
use lotdesign::io::{read_instance, write_demand_csv};
use lotdesign::{Error, ExactLimits, SfaParams, SizeSet};

use crate::config::Config;
use crate::solve::{self, Overrides, SolverParams};

#[derive(Debug, Parser)]
#[command(name = "lotdesign", version, about = "Lot-type design solvers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check an instance document and list rule violations.
    Validate {
        instance: PathBuf,
    },
    /// Estimate mean demand from a sales CSV and write a demand CSV.
    Estimate(EstimateArgs),
    /// Solve an instance and print the solution document.
    Solve(SolveArgs),
    /// Run the heuristic and the exact solver on synthetic profiles.
    Bench(BenchArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub sales: PathBuf,
    /// CSV `product_id,delivered_total`; products without a row use their
    /// observed sales as the delivered total.
    #[arg(long)]
    pub deliveries: Option<PathBuf>,
    /// Comma-separated branch ids; defaults to those in the sales.
    #[arg(long, value_delimiter = ',')]
    pub branches: Option<Vec<String>>,
    /// Comma-separated size labels; defaults to those in the sales.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<String>>,
    /// Weight products by their truncated sales volume.
    #[arg(long)]
    pub weighted: bool,
    /// Divide truncated totals by the truncated period length in days.
    #[arg(long)]
    pub daily_rates: bool,
    /// Scale the table to the center of [cap-lo, cap-hi].
    #[arg(long, requires = "cap_hi")]
    pub cap_lo: Option<u64>,
    #[arg(long, requires = "cap_lo")]
    pub cap_hi: Option<u64>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Sfa,
    Exact,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value = "sfa")]
    pub solver: SolverArg,
    /// Heuristic time budget, or the exact solver's deadline (e.g. `1s`, `250ms`).
    #[arg(long, value_parser = humantime::parse_duration)]
    pub time_budget: Option<Duration>,
    /// Run the heuristic on the subset budget alone (reproducible).
    #[arg(long, conflicts_with = "time_budget")]
    pub no_time_budget: bool,
    /// Heuristic: number of lot-type subsets to try.
    #[arg(long)]
    pub subset_budget: Option<u64>,
    /// Exact: number of subsets whose DP is run.
    #[arg(long)]
    pub max_subsets: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long = "max-multiplicity")]
    pub max_multiplicity: Option<u32>,
    #[arg(long)]
    pub cap_lo: Option<u64>,
    #[arg(long)]
    pub cap_hi: Option<u64>,
    /// Write the per-subset trace as line-delimited JSON.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    /// 100 branches, 16 lot-types: exact is tractable.
    Desk16,
    /// 100 branches, 243 lot-types.
    Table1Desk,
    /// Full published size, 243 lot-types.
    Table1,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "desk16")]
    pub profile: ProfileArg,
    /// Commodity groups 1 to 9.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9")]
    pub groups: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub seeds: Vec<u64>,
    #[arg(long = "k", value_delimiter = ',', default_value = "2,3")]
    pub k_values: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub subset_budget: u64,
    /// Heuristic time budget; unset keeps the report reproducible.
    #[arg(long, value_parser = humantime::parse_duration)]
    pub time_budget: Option<Duration>,
    /// Skip the exact column above this many subsets.
    #[arg(long, default_value_t = 50_000)]
    pub exact_subset_limit: u128,
    #[arg(long, value_parser = humantime::parse_duration)]
    pub exact_deadline: Option<Duration>,
    /// Also write the rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Infeasible | Error::Timeout) => 1,
        _ => 2,
    }
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Validate { instance } => validate(&instance),
        Command::Estimate(args) => estimate(args),
        Command::Solve(args) => solve_cmd(args),
        Command::Bench(args) => bench(args),
        Command::Serve(args) => serve(args),
    }
}

fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_instance(path: &Path) -> anyhow::Result<lotdesign::Instance> {
    read_instance(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn validate(path: &Path) -> anyhow::Result<ExitCode> {
    let instance = load_instance(path)?;
    let report = instance.validate();
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if report.is_ok() {
        println!(
            "ok: {} branches, {} sizes, {} lot-types, k = {}, M = {}, capacity [{}, {}], {}",
            instance.branch_count(),
            instance.sizes.len(),
            instance.lots.len(),
            instance.k,
            instance.max_multiplicity,
            instance.cap_lo,
            instance.cap_hi,
            instance.norm
        );
        return Ok(ExitCode::SUCCESS);
    }
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    Ok(ExitCode::from(2))
}

fn estimate(args: EstimateArgs) -> anyhow::Result<ExitCode> {
    let sales = ingest_sales(open(&args.sales)?).with_context(|| format!("reading {}", args.sales.display()))?;
    for r in &sales.rejects {
        eprintln!("rejected line {}: {}", r.line, r.reason);
    }
    let deliveries = match &args.deliveries {
        Some(p) => ingest_deliveries(open(p)?).with_context(|| format!("reading {}", p.display()))?,
        None => Default::default(),
    };
    let (seen_branches, seen_sizes) = observed_labels(&sales.records);
    let branches = args.branches.unwrap_or(seen_branches);
    let sizes = args.sizes.map(SizeSet::new).unwrap_or(seen_sizes);
    let options = EstimateOptions {
        weighting: if args.weighted { Weighting::QuantityWeighted } else { Weighting::Unweighted },
        alignment: if args.daily_rates { Alignment::DailyRates } else { Alignment::Totals },
    };
    let est = estimate_demand(&build_histories(&sales.records, &deliveries), &branches, &sizes, options)?;
    for x in &est.excluded {
        eprintln!("excluded {}: {}", x.product_id, x.issue);
    }
    for p in &est.observed_total_fallbacks {
        eprintln!("no delivered total for {p}; used observed sales");
    }
    let demand = match (args.cap_lo, args.cap_hi) {
        (Some(lo), Some(hi)) => scale_to_capacity(&est.demand, lo, hi)?,
        _ => est.demand,
    };
    let mut out = output(args.out.as_deref())?;
    write_demand_csv(&mut out, &branches, &sizes, &demand)?;
    out.flush()?;
    eprintln!("{} products used, {} excluded", est.used_products.len(), est.excluded.len());
    Ok(ExitCode::SUCCESS)
}

fn solver_params(args: &SolveArgs) -> SolverParams {
    match args.solver {
        SolverArg::Sfa => {
            let mut p = SfaParams::default();
            if let Some(n) = args.subset_budget {
                p.subset_budget = n;
            }
            if args.no_time_budget {
                p.time_budget = None;
            } else if let Some(t) = args.time_budget {
                p.time_budget = Some(t);
            }
            SolverParams::Sfa(p)
        }
        SolverArg::Exact => SolverParams::Exact(ExactLimits {
            max_subsets: args.max_subsets,
            deadline: args.time_budget,
            cancel: None,
        }),
    }
}

fn solve_cmd(args: SolveArgs) -> anyhow::Result<ExitCode> {
    let mut instance = load_instance(&args.instance)?;
    Overrides { k: args.k, max_multiplicity: args.max_multiplicity, cap_lo: args.cap_lo, cap_hi: args.cap_hi }
        .apply(&mut instance);
    let report = instance.check()?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let params = solver_params(&args);

    let mut trace_out = match &args.trace {
        Some(p) => Some(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => None,
    };
    let mut trace_error = None;
    let outcome = solve::run(&instance, &params, |line| {
        if let Some(w) = trace_out.as_mut() {
            if let Err(e) = writeln!(w, "{line}") {
                trace_error.get_or_insert(e);
            }
        }
    });
    if let Some(mut w) = trace_out {
        w.flush()?;
    }
    if let Some(e) = trace_error {
        bail!("writing trace: {e}");
    }
    let outcome = outcome?;

    let mut out = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &outcome.document)?;
    writeln!(out)?;
    out.flush()?;
    let doc = &outcome.document;
    eprintln!(
        "{:?}: objective {}, {} pieces, {} lot-types, {} subsets, {:.3}s",
        doc.status,
        doc.objective,
        doc.total_pieces,
        doc.distinct_lots,
        outcome.subsets_examined,
        doc.wall_time.as_secs_f64()
    );
    Ok(ExitCode::SUCCESS)
}

fn bench(args: BenchArgs) -> anyhow::Result<ExitCode> {
    if let Some(g) = args.groups.iter().find(|g| !(1..=9).contains(*g)) {
        bail!("group {g} is outside 1..=9");
    }
    let profiles: Vec<InstanceProfile> = args
        .groups
        .iter()
        .flat_map(|&g| {
            args.seeds.iter().map(move |&seed| {
                let p = match args.profile {
                    ProfileArg::Desk16 => InstanceProfile::desk_small_universe(g),
                    ProfileArg::Table1Desk => InstanceProfile::table1_desk(g),
                    ProfileArg::Table1 => InstanceProfile::table1(g),
                };
                p.with_seed(seed)
            })
        })
        .collect();
    let sfa = SfaParams { subset_budget: args.subset_budget, time_budget: args.time_budget, ..Default::default() };
    let exact = ExactLimits { deadline: args.exact_deadline, ..Default::default() };
    let options = BenchOptions { exact_subset_limit: args.exact_subset_limit };
    let report = run_benchmark(&profiles, &args.k_values, &sfa, &exact, &options);
    print!("{}", report.to_table());
    if let Some(path) = &args.csv {
        report.write_csv(File::create(path).with_context(|| format!("creating {}", path.display()))?)?;
    }
    for k in &args.k_values {
        if let Some(m) = report.median_gap(|r| r.k == *k) {
            println!("k={k}: median gap {m:.3}%");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(args: ServeArgs) -> anyhow::Result<ExitCode> {
    let mut config = Config::load(args.config.as_deref())?;
    if let Some(port) = args.port {
        config.port = port;
    }
    if let Some(store) = args.store {
        config.store = store;
    }
    if args.static_dir.is_some() {
        config.static_dir = args.static_dir;
    }
    let state = crate::AppState::new(config)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(crate::api::serve(state))?;
    Ok(ExitCode::SUCCESS)
}
