use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hvcg::distributions::DistributionSpec;
use hvcg::harness::{emit_csv, emit_plot, run_sweep, ExperimentConfig, KPolicy, Metric};
use hvcg::mechanisms::{colluder_best_response, vcg_with_collusion, vcg_with_values};
use hvcg::model::{Partition, ValuationProfile};
use hvcg::objectives::{objective_table, MarketShape, ObjectiveKind, ObjectiveSpec, DEFAULT_OBJECTIVE_BINS};
use hvcg::oracle::verify_suite;
use hvcg::{Error, Result};

#[derive(Parser)]
#[command(name = "hvcg", version, about = "Hybrid VCG auctions under bidder collusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate all mechanisms at a single market size and write a CSV.
    Simulate(SimulateArgs),
    /// Sweep the number of non-colluders and write a CSV plus welfare and revenue plots.
    Sweep(SweepArgs),
    /// Print M(k) and the probability that every item sells for each feasible k.
    Objective(ObjectiveArgs),
    /// Print the coalition's best response to truthful bidders under VCG.
    BestResponse(BestResponseArgs),
    /// Run the brute-force verification suite.
    Verify {
        /// Fewer instances and smaller simulations.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Args)]
struct ObjectiveFlags {
    #[arg(long, default_value = "welfare-minorant")]
    objective: ObjectiveKind,
    /// Quadrature bins for the outer expectation.
    #[arg(long, default_value_t = DEFAULT_OBJECTIVE_BINS)]
    bins: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "uniform")]
    dist: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    c: usize,
    #[arg(long, default_value_t = 10)]
    r: usize,
    /// Items reserved for non-colluders, or `auto` to maximize the objective.
    #[arg(long, default_value = "auto")]
    k: String,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    objective: ObjectiveFlags,
    #[arg(long)]
    workers: Option<usize>,
    /// CSV file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value = "uniform")]
    dist: String,
    #[arg(long, default_value_t = 10)]
    c: usize,
    #[arg(long, default_value_t = 10)]
    r: usize,
    #[arg(long, default_value_t = 1)]
    n_from: usize,
    #[arg(long, default_value_t = 50)]
    n_to: usize,
    #[arg(long, default_value_t = 1)]
    n_step: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    objective: ObjectiveFlags,
    #[arg(long)]
    workers: Option<usize>,
    /// Directory for results.csv, welfare.svg and revenue.svg.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ObjectiveArgs {
    #[arg(long, default_value = "uniform")]
    dist: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    c: usize,
    #[arg(long)]
    r: usize,
    #[command(flatten)]
    objective: ObjectiveFlags,
}

#[derive(Args)]
struct BestResponseArgs {
    /// Every bidder's value, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Zero-based ids of the colluding bidders, comma separated.
    #[arg(long, value_delimiter = ',')]
    colluders: Vec<usize>,
    #[arg(long)]
    r: usize,
}

fn objective_spec(dist: &str, flags: &ObjectiveFlags) -> Result<ObjectiveSpec> {
    let distribution = DistributionSpec::builtin(dist)?;
    ObjectiveSpec::new(flags.objective, distribution).with_bins(flags.bins)
}

fn k_policy(k: &str, objective: ObjectiveSpec) -> Result<KPolicy> {
    if k.eq_ignore_ascii_case("auto") {
        return Ok(KPolicy::Auto(objective));
    }
    k.parse()
        .map(KPolicy::Fixed)
        .map_err(|_| Error::InvalidArgument(format!("--k must be an integer or 'auto', got '{k}'")))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let objective = objective_spec(&args.dist, &args.objective)?;
    let mut config = ExperimentConfig::new(objective.distribution);
    config.r = args.r;
    config.c = args.c;
    config.n_from = args.n;
    config.n_to = args.n;
    config.reps = args.reps;
    config.master_seed = args.seed;
    config.k_policy = k_policy(&args.k, objective)?;
    config.workers = args.workers;
    let rows = run_sweep(&config)?;
    emit_csv(&rows, &args.out)?;
    for row in &rows {
        println!(
            "{:<22} welfare {:>10.4}  revenue {:>10.4}  items sold {:>6.3}",
            row.mechanism, row.mean_welfare, row.mean_revenue, row.mean_items_sold
        );
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let objective = objective_spec(&args.dist, &args.objective)?;
    let mut config = ExperimentConfig::new(objective.distribution);
    config.r = args.r;
    config.c = args.c;
    config.n_from = args.n_from;
    config.n_to = args.n_to;
    config.n_step = args.n_step;
    config.reps = args.reps;
    config.master_seed = args.seed;
    config.k_policy = KPolicy::Auto(objective);
    config.workers = args.workers;
    let rows = run_sweep(&config)?;
    fs::create_dir_all(&args.out)?;
    emit_csv(&rows, &args.out.join("results.csv"))?;
    emit_plot(&rows, Metric::Welfare, &args.out.join("welfare.svg"))?;
    emit_plot(&rows, Metric::Revenue, &args.out.join("revenue.svg"))?;
    println!("{} rows written to {}", rows.len(), args.out.display());
    Ok(())
}

fn objective(args: ObjectiveArgs) -> Result<()> {
    let spec = objective_spec(&args.dist, &args.objective)?;
    let shape = MarketShape::new(args.n, args.c, args.r)?;
    let table = objective_table(&spec, &shape)?;
    let best = table
        .iter()
        .fold(&table[0], |best, row| if row.value >= best.value { row } else { best });
    println!("{:>4}  {:>14}  {:>10}", "k", "M(k)", "P(k)");
    for row in &table {
        let mark = if row.k == best.k { "  <- k*" } else { "" };
        println!("{:>4}  {:>14.8}  {:>10.6}{mark}", row.k, row.value, row.prob_all_sold);
    }
    Ok(())
}

fn best_response(args: BestResponseArgs) -> Result<()> {
    let values = ValuationProfile::new(args.values)?;
    let partition = Partition::new(values.len(), &args.colluders)?;
    let response = colluder_best_response(&values, &partition, args.r)?;
    let collusive = vcg_with_collusion(&values, &partition, args.r)?;
    let truthful = vcg_with_values(&values, &values, &partition, args.r)?;
    println!("items taken by coalition: {}", response.items_taken);
    for (id, bid) in partition.colluders().iter().zip(&response.bids) {
        println!("  bidder {id}: value {} bids {bid}", values.get(*id));
    }
    println!("joint utility: {} (truthful: {})", response.joint_utility, truthful.colluder_joint_utility);
    println!(
        "price {}  welfare {}  revenue {}  (truthful: price {}  welfare {}  revenue {})",
        collusive.price, collusive.welfare, collusive.revenue, truthful.price, truthful.welfare, truthful.revenue
    );
    Ok(())
}

fn verify(quick: bool) -> Result<bool> {
    let checks = verify_suite(quick)?;
    let mut all = true;
    for check in &checks {
        let status = if check.passed { "PASS" } else { "FAIL" };
        println!("{status} {:<24} {}", check.name, check.detail);
        all &= check.passed;
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args).map(|()| true),
        Command::Sweep(args) => sweep(args).map(|()| true),
        Command::Objective(args) => objective(args).map(|()| true),
        Command::BestResponse(args) => best_response(args).map(|()| true),
        Command::Verify { quick } => verify(quick),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_invalid_argument() { 2 } else { 1 })
        }
    }
}
