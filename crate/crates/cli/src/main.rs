use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use khessian::stability::ZRule;
use khessian_cli::config::{load_config, CommandKind, FamilyKind, FamilySpec, RunConfig};
use khessian_cli::{execute, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "khessian", version, about = "k-Hessian solves, identity checks, stability sweeps and bubbling reports")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a config file; the command is taken from the file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the Dirichlet problem and check the comparison bounds.
    Solve(Opts),
    /// Integral identities, P-function positivity and the dish chain.
    Identities(Opts),
    /// Geometric Soap-Bubble sweep over a family.
    Sbt(Opts),
    /// Serrin stability sweep over a family.
    Sweep(Opts),
    /// Bubble detection and gap measurements.
    Bubbling(Opts),
    /// Sobolev-Poincare and interpolation probes.
    Probes(Opts),
}

#[derive(Clone, Copy, ValueEnum)]
enum ZRuleArg {
    InscribedCenter,
    Centroid,
}

#[derive(Args)]
struct Opts {
    /// Base config; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "domain")]
    domains: Vec<PathBuf>,
    #[arg(long)]
    family: Option<FamilyKind>,
    /// Comma-separated perturbation sizes for --family.
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    /// Relative tolerance for the identity residuals.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    emit_solution: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jitter: bool,
    #[arg(long)]
    z_rule: Option<ZRuleArg>,
    #[arg(long)]
    gradient_bound: bool,
    /// Comma-separated Sobolev exponents for probes.
    #[arg(long = "r", value_delimiter = ',')]
    r_list: Vec<f64>,
}

fn build(kind: CommandKind, o: Opts) -> Result<RunConfig, String> {
    let mut cfg = match &o.config {
        Some(p) => {
            let c = load_config(p).map_err(|e| e.to_string())?;
            if c.command != kind {
                return Err(format!("config command '{}' does not match '{}'", c.command.name(), kind.name()));
            }
            c
        }
        None => RunConfig::new(kind, o.k.ok_or("missing --k")?),
    };
    if !o.domains.is_empty() {
        cfg.domains = o.domains;
    }
    match (o.family, o.eps.is_empty()) {
        (Some(kind), false) => cfg.family = Some(FamilySpec { kind, eps: o.eps }),
        (Some(_), true) => return Err("--family needs --eps".into()),
        (None, false) => return Err("--eps needs --family".into()),
        (None, true) => {}
    }
    if let Some(k) = o.k {
        cfg.k = k;
    }
    if let Some(h) = o.h {
        cfg.h = h;
    }
    if let Some(m) = o.m {
        cfg.m = m;
    }
    if let Some(t) = o.tol {
        cfg.tolerances.identity = t;
    }
    if let Some(out) = o.out {
        cfg.output_dir = out;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(z) = o.z_rule {
        cfg.z_rule = match z {
            ZRuleArg::InscribedCenter => ZRule::InscribedCenter,
            ZRuleArg::Centroid => ZRule::Centroid,
        };
    }
    if !o.r_list.is_empty() {
        cfg.r_list = o.r_list;
    }
    cfg.emit_solution |= o.emit_solution;
    cfg.jitter |= o.jitter;
    cfg.gradient_bound |= o.gradient_bound;
    Ok(cfg)
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("HESSIAN_SBT_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("HESSIAN_SBT_THREADS = '{v}' is not a thread count"))?;
    if n == 0 {
        return Err("HESSIAN_SBT_THREADS must be positive".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    let cfg = match cli.command {
        Cmd::Run { config } => load_config(&config).map_err(|e| e.to_string()),
        Cmd::Solve(o) => build(CommandKind::Solve, o),
        Cmd::Identities(o) => build(CommandKind::Identities, o),
        Cmd::Sbt(o) => build(CommandKind::Sbt, o),
        Cmd::Sweep(o) => build(CommandKind::Sweep, o),
        Cmd::Bubbling(o) => build(CommandKind::Bubbling, o),
        Cmd::Probes(o) => build(CommandKind::Probes, o),
    };
    match cfg {
        Ok(cfg) => ExitCode::from(execute(&cfg) as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
