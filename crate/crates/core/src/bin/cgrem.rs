use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cgrem::cli::{self, Command, ExperimentConfig, Format, InterpCheck};
use cgrem::disorder::SamplingMethod;
use cgrem::spin::PartitionMode;

#[derive(Parser)]
#[command(name = "cgrem", version, about = "Finite-N checks for correlated Gaussian random energy models")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Clone)]
struct Common {
    /// Output format.
    #[arg(long, default_value = "csv", value_parser = parse_format, global = true)]
    format: Format,
    /// Write output here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed for all disorder streams.
    #[arg(long, env = "CGREM_SEED", default_value_t = 0, global = true)]
    seed: u64,
    /// Record wall-clock time in the output header.
    #[arg(long, global = true)]
    record_time: bool,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// sk | sk-standard | pspin:P | mixed:P=W,... | rem | grem:FILE | custom:FILE[,FILE...]
    #[arg(long, short)]
    model: String,
    /// Number of spins (GREM and custom models default to their own size).
    #[arg(long, short)]
    n: Option<usize>,
}

#[derive(Args, Clone)]
struct PartitionArgs {
    /// First block is coordinates 1..=N1.
    #[arg(long, conflicts_with = "mask")]
    n1: Option<usize>,
    /// First block as a bit mask (bit i is coordinate i+1).
    #[arg(long)]
    mask: Option<u64>,
}

#[derive(Args, Clone)]
struct SampleArgs {
    /// Inverse temperatures, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    beta: Vec<f64>,
    /// Disorder draws per estimate.
    #[arg(long, default_value_t = cli::DEFAULT_SAMPLES)]
    samples: usize,
    /// auto | structural | cholesky
    #[arg(long, default_value = "auto")]
    method: SamplingMethod,
}

#[derive(Subcommand)]
enum Sub {
    /// Exhaustive audit of the covariance superadditivity condition.
    Check {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        partition: PartitionArgs,
        /// Audit every size from N up to this one.
        #[arg(long)]
        n_max: Option<usize>,
        /// canonical | all
        #[arg(long, default_value = "canonical")]
        mode: PartitionMode,
        #[arg(long)]
        tolerance: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Positive semidefiniteness of the covariance matrix.
    Psd {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n_max: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Quenched free energy per spin with the annealed bound.
    Alpha {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sampling: SampleArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Free-energy superadditivity margin for one partition.
    Superadd {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        partition: PartitionArgs,
        #[command(flatten)]
        sampling: SampleArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Interpolation derivative: scan, finite-difference or integral check.
    Interp {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        partition: PartitionArgs,
        #[command(flatten)]
        sampling: SampleArgs,
        /// start:end:count or a comma list.
        #[arg(long, value_parser = parse_grid)]
        tgrid: Option<Grid>,
        /// scan | fd | integral
        #[arg(long, default_value = "scan")]
        check: InterpCheck,
        /// Finite-difference step.
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        /// Trapezoid nodes for the integral check.
        #[arg(long, default_value_t = 17)]
        nodes: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Validate a GREM tree, its PSD-ness, lifts and layer-partition audits.
    GremVerify {
        /// Tree file.
        #[arg(long)]
        tree: String,
        /// First-block exponents; all layer-respecting splits if omitted.
        #[arg(long, value_delimiter = ',')]
        n1_exponents: Option<Vec<usize>>,
        /// Also audit every coordinate partition (informational).
        #[arg(long)]
        all_partitions: bool,
        #[arg(long)]
        tolerance: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Write raw disorder realizations, one line of 2^N energies per draw.
    SampleDump {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 10)]
        draws: usize,
        #[arg(long, default_value = "auto")]
        method: SamplingMethod,
        #[command(flatten)]
        common: Common,
    },
    /// Run an experiment described by a TOML file.
    Run {
        config: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone)]
struct Grid(Vec<f64>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    cli::parse_grid(s).map(Grid).map_err(|e| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: cgrem::Error| e.to_string())
}

fn base(command: Command, common: Common) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(command);
    c.format = common.format;
    c.output = common.output;
    c.threads = common.threads;
    c.seed = common.seed;
    c.record_time = common.record_time;
    c
}

fn with_model(c: &mut ExperimentConfig, m: ModelArgs) {
    c.model = Some(m.model);
    c.n = m.n;
}

fn with_partition(c: &mut ExperimentConfig, p: PartitionArgs) {
    c.n1 = p.n1;
    c.mask = p.mask;
}

fn with_sampling(c: &mut ExperimentConfig, s: SampleArgs) {
    c.beta = s.beta;
    c.samples = s.samples;
    c.method = s.method;
}

fn config(sub: Sub) -> cgrem::Result<ExperimentConfig> {
    Ok(match sub {
        Sub::Check { model, partition, n_max, mode, tolerance, common } => {
            let mut c = base(Command::Check, common);
            with_model(&mut c, model);
            with_partition(&mut c, partition);
            c.n_max = n_max;
            c.mode = mode;
            c.tolerance = tolerance;
            c
        }
        Sub::Psd { model, n_max, common } => {
            let mut c = base(Command::Psd, common);
            with_model(&mut c, model);
            c.n_max = n_max;
            c
        }
        Sub::Alpha { model, sampling, common } => {
            let mut c = base(Command::Alpha, common);
            with_model(&mut c, model);
            with_sampling(&mut c, sampling);
            c
        }
        Sub::Superadd { model, partition, sampling, common } => {
            let mut c = base(Command::Superadd, common);
            with_model(&mut c, model);
            with_partition(&mut c, partition);
            with_sampling(&mut c, sampling);
            c
        }
        Sub::Interp { model, partition, sampling, tgrid, check, h, nodes, common } => {
            let mut c = base(Command::Interp, common);
            with_model(&mut c, model);
            with_partition(&mut c, partition);
            with_sampling(&mut c, sampling);
            c.t_grid = tgrid.map(|g| g.0).unwrap_or_default();
            c.check = check;
            c.h = h;
            c.nodes = nodes;
            c
        }
        Sub::GremVerify { tree, n1_exponents, all_partitions, tolerance, common } => {
            let mut c = base(Command::GremVerify, common);
            c.tree = Some(tree);
            c.n1_exponents = n1_exponents;
            c.all_partitions = all_partitions;
            c.tolerance = tolerance;
            c
        }
        Sub::SampleDump { model, draws, method, common } => {
            let mut c = base(Command::SampleDump, common);
            with_model(&mut c, model);
            c.draws = draws;
            c.method = method;
            c
        }
        Sub::Run { config, threads, output } => {
            let mut c = ExperimentConfig::from_file(&config)?;
            if threads.is_some() {
                c.threads = threads;
            }
            if output.is_some() {
                c.output = output;
            }
            c
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = config(cli.command).and_then(|c| {
        let out = cli::run(&c)?;
        match &c.output {
            Some(path) => std::fs::write(path, &out.text)
                .map_err(|e| cgrem::Error::Io(format!("{}: {e}", path.display())))?,
            None => print!("{}", out.text),
        }
        Ok(out.outcome)
    });
    match result {
        Ok(o) => ExitCode::from(o.exit_code() as u8),
        Err(e) => {
            eprintln!("cgrem: {e}");
            ExitCode::from(2)
        }
    }
}
