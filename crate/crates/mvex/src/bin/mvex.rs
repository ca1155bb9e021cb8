use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mvex::checks::{all_passed, check_suite, render, CheckOptions};
use mvex::harness::{
    regime_scan, run_convergence, run_replicas, Experiment, InitialProfile, Regime, ScanConfig, Setup, LATTICE_ROBIN,
};
use mvex::io::{
    create_dir, load_json, save_field_csv, save_json, save_profile_csv, Manifest, Model2Variant, ModelSpec,
    ReservoirSpec,
};
use mvex_core::dynamics::{default_jump_law, Dynamics};
use mvex_core::pde::{DriftMode, Field};
use mvex_core::{EmpiricalProfile, LatticeGeom};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "mvex",
    version,
    about = "Multi-velocity exclusion with reservoirs and its hydrodynamic PDE"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replicated simulations; writes mean and per-replica profiles.
    Simulate(SimulateArgs),
    /// Solves the one-dimensional hydrodynamic PDE.
    Pde(PdeArgs),
    /// Hydrodynamic-limit comparison from a JSON experiment file.
    Compare(CompareArgs),
    /// Boundary occupation, event count and current across theta.
    ScanTheta(ScanArgs),
    /// Exact tiny-system checks; non-zero exit on any failure.
    Check(CheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelName {
    Model1,
    Model2Cube,
    Model2Mixed,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "model1")]
    model: ModelName,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// JSON velocity list; overrides --model.
    #[arg(long)]
    velocities: Option<PathBuf>,
}

impl ModelArgs {
    fn spec(&self) -> Result<ModelSpec> {
        if let Some(path) = &self.velocities {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let velocities: Vec<Vec<f64>> = serde_json::from_str(&text)?;
            return Ok(ModelSpec::Custom { velocities });
        }
        Ok(match self.model {
            ModelName::Model1 => ModelSpec::Model1 { dim: self.dim },
            ModelName::Model2Cube => ModelSpec::Model2 {
                variant: Model2Variant::Cube,
            },
            ModelName::Model2Mixed => ModelSpec::Model2 {
                variant: Model2Variant::Mixed,
            },
        })
    }
}

#[derive(Args)]
struct BoundaryArgs {
    /// Left reservoir densities, one per velocity in model order.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Right reservoir densities.
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    /// JSON reservoir file; overrides --alpha/--beta.
    #[arg(long)]
    reservoirs: Option<PathBuf>,
    /// Initial profile: `const:p0,p1,...` or `linear:left/right[/bump]`
    /// with comma-separated component vectors. Defaults to the line
    /// between the two boundary values.
    #[arg(long)]
    init: Option<String>,
}

impl BoundaryArgs {
    fn reservoirs(&self) -> Result<ReservoirSpec> {
        if let Some(path) = &self.reservoirs {
            return Ok(load_json(path)?);
        }
        if self.alpha.is_empty() || self.beta.is_empty() {
            bail!("give --alpha and --beta, or --reservoirs");
        }
        Ok(ReservoirSpec::constant(&self.alpha, &self.beta))
    }

    fn initial(&self, setup: &Setup) -> Result<InitialProfile> {
        match &self.init {
            None => Ok(InitialProfile::Linear {
                left: setup.left.0.clone(),
                right: setup.right.0.clone(),
                bump: Vec::new(),
            }),
            Some(s) => parse_initial(s),
        }
    }
}

fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad number {x:?}")))
        .collect()
}

fn parse_initial(s: &str) -> Result<InitialProfile> {
    if let Some(rest) = s.strip_prefix("const:") {
        return Ok(InitialProfile::Constant {
            value: parse_vector(rest)?,
        });
    }
    if let Some(rest) = s.strip_prefix("linear:") {
        let parts: Vec<&str> = rest.split('/').collect();
        if !(2..=3).contains(&parts.len()) {
            bail!("linear profile needs left/right[/bump]");
        }
        return Ok(InitialProfile::Linear {
            left: parse_vector(parts[0])?,
            right: parse_vector(parts[1])?,
            bump: parts.get(2).map(|p| parse_vector(p)).transpose()?.unwrap_or_default(),
        });
    }
    bail!("unknown initial profile {s:?}")
}

fn parse_times(s: &str) -> Result<Vec<f64>> {
    parse_vector(s)
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    boundary: BoundaryArgs,
    #[arg(long = "N")]
    n: usize,
    #[arg(long)]
    theta: f64,
    #[arg(long = "T")]
    horizon: f64,
    /// Comma-separated snapshot times; defaults to T.
    #[arg(long)]
    snapshots: Option<String>,
    #[arg(long, default_value_t = 1)]
    replicas: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BcName {
    Dirichlet,
    Robin,
    Neumann,
}

#[derive(Args)]
struct PdeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    boundary: BoundaryArgs,
    #[arg(long, value_enum)]
    bc: BcName,
    #[arg(long, default_value_t = LATTICE_ROBIN)]
    kappa: f64,
    #[arg(long = "M", default_value_t = 256)]
    cells: usize,
    #[arg(long = "T")]
    horizon: f64,
    /// `auto` or a fixed step.
    #[arg(long, default_value = "auto")]
    dt: String,
    #[arg(long)]
    snapshots: Option<String>,
    #[arg(long)]
    upwind: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// JSON experiment file.
    experiment: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScanArgs {
    /// JSON scan configuration.
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corrupt one exclusion rate; the stationarity check must then fail.
    #[arg(long)]
    mutate: bool,
    /// Also write the table as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn time_tag(t: f64) -> String {
    format!("t{t}")
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let model_spec = args.model.spec()?;
    let reservoir_spec = args.boundary.reservoirs()?;
    let setup = Setup::new(&model_spec, &reservoir_spec)?;
    let initial = args.boundary.initial(&setup)?;
    let times = match &args.snapshots {
        Some(s) => parse_times(s)?,
        None => vec![args.horizon],
    };
    let geom = LatticeGeom::slab(setup.model.dim(), args.n)?;
    let dynamics = Dynamics::new(
        &setup.model,
        geom,
        args.theta,
        default_jump_law(&setup.model)?,
        Some(setup.reservoirs.clone()),
    )?;
    create_dir(&args.out)?;
    let mut manifest = Manifest::new(
        "simulate",
        json!({
            "model": model_spec, "N": args.n, "theta": args.theta, "T": args.horizon,
            "snapshots": times, "replicas": args.replicas, "seed": args.seed,
            "reservoirs": reservoir_spec, "initial": initial,
        }),
    );
    let init = |u: f64| initial.eval(u);
    let runs = run_replicas(&dynamics, &init, &times, args.replicas, args.seed)?;
    for (j, &t) in times.iter().enumerate() {
        let per: Vec<EmpiricalProfile> = runs.iter().map(|r| r[j].clone()).collect();
        let mean = EmpiricalProfile::mean(&per)?;
        let name = format!("mean_{}.csv", time_tag(t));
        save_profile_csv(&args.out.join(&name), &mean)?;
        manifest.outputs.push(name);
        for (r, p) in per.iter().enumerate() {
            let name = format!("replica{r}_{}.csv", time_tag(t));
            save_profile_csv(&args.out.join(&name), p)?;
            manifest.outputs.push(name);
        }
    }
    manifest.save(&args.out.join("manifest.json"))?;
    Ok(())
}

fn pde(args: &PdeArgs) -> Result<()> {
    let model_spec = args.model.spec()?;
    let reservoir_spec = args.boundary.reservoirs()?;
    let setup = Setup::new(&model_spec, &reservoir_spec)?;
    let initial = args.boundary.initial(&setup)?;
    let regime = match args.bc {
        BcName::Dirichlet => Regime::Dirichlet,
        BcName::Robin => Regime::Robin,
        BcName::Neumann => Regime::Neumann,
    };
    let drift = if args.upwind {
        DriftMode::Upwind
    } else {
        DriftMode::Central
    };
    let problem = setup.problem(regime.boundary_condition(args.kappa), drift)?;
    let dt = match args.dt.as_str() {
        "auto" => None,
        s => Some(s.parse::<f64>().context("--dt must be `auto` or a number")?),
    };
    let times = match &args.snapshots {
        Some(s) => parse_times(s)?,
        None => vec![args.horizon],
    };
    let init = Field::from_fn(args.cells, setup.model.components(), |u| initial.eval(u))?;
    create_dir(&args.out)?;
    let mut manifest = Manifest::new(
        "pde",
        json!({
            "model": model_spec, "bc": regime.name(), "kappa": args.kappa, "M": args.cells,
            "T": args.horizon, "dt": args.dt, "snapshots": times, "upwind": args.upwind,
            "reservoirs": reservoir_spec, "initial": initial,
        }),
    );
    let result = problem.solve(&init, args.horizon, dt, &times, |_, _| {});
    let fields = match result {
        Ok(f) => f,
        Err(e) => {
            manifest.save(&args.out.join("manifest.json"))?;
            return Err(e.into());
        }
    };
    for (t, f) in &fields {
        let name = format!("field_{}.csv", time_tag(*t));
        save_field_csv(&args.out.join(&name), f)?;
        manifest.outputs.push(name);
    }
    manifest.save(&args.out.join("manifest.json"))?;
    Ok(())
}

fn compare(args: &CompareArgs) -> Result<()> {
    let exp: Experiment = load_json(&args.experiment)?;
    create_dir(&args.out)?;
    let mut manifest = Manifest::new("compare", serde_json::to_value(&exp)?);
    let rows_path = args.out.join("rows.csv");
    let mut writer = csv::Writer::from_path(&rows_path)?;
    let c = exp.initial.eval(0.0).len();
    let mut header = vec!["N".to_string(), "t".into(), "epsilon".into()];
    for k in 0..c {
        header.extend([format!("l1_{k}"), format!("l2_{k}"), format!("stderr_{k}")]);
    }
    writer.write_record(&header)?;
    manifest.outputs.push("rows.csv".into());
    let result = run_convergence(&exp, |row| {
        let mut rec = vec![
            row.n.to_string(),
            format!("{:.17e}", row.time),
            format!("{:.17e}", row.epsilon),
        ];
        for k in 0..row.l1.len() {
            rec.extend([
                format!("{:.17e}", row.l1[k]),
                format!("{:.17e}", row.l2[k]),
                format!("{:.17e}", row.stderr[k]),
            ]);
        }
        // rows are flushed as they finish so an abort leaves completed work
        let _ = writer
            .write_record(&rec)
            .and_then(|_| writer.flush().map_err(Into::into));
    });
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            manifest.save(&args.out.join("manifest.json"))?;
            return Err(e.into());
        }
    };
    writer.flush()?;
    save_json(&args.out.join("report.json"), &report)?;
    manifest.outputs.push("report.json".into());
    manifest.save(&args.out.join("manifest.json"))?;
    for row in &report.rows {
        println!("N={:<5} t={:<6} L1={:?}", row.n, row.time, row.l1);
    }
    Ok(())
}

fn scan(args: &ScanArgs) -> Result<()> {
    let cfg: ScanConfig = load_json(&args.config)?;
    create_dir(&args.out)?;
    let mut manifest = Manifest::new("scan-theta", serde_json::to_value(&cfg)?);
    let rows = regime_scan(&cfg)?;
    let mut writer = csv::Writer::from_path(args.out.join("scan.csv"))?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    manifest.outputs.push("scan.csv".into());
    manifest.save(&args.out.join("manifest.json"))?;
    for r in &rows {
        println!(
            "theta={:<4} {:<9} boundary I0={:.4}±{:.4} (reservoir {:.4}) events={} bound={:.3e} current={:.4}±{:.4}",
            r.theta,
            r.regime.name(),
            r.boundary_mass,
            r.boundary_mass_stderr,
            r.reservoir_mass,
            r.boundary_events,
            r.event_bound,
            r.net_current,
            r.net_current_stderr
        );
    }
    Ok(())
}

fn check(args: &CheckArgs) -> Result<bool> {
    let results = check_suite(CheckOptions {
        seed: args.seed,
        mutate: args.mutate,
    });
    print!("{}", render(&results));
    if let Some(path) = &args.json {
        save_json(Path::new(path), &results)?;
    }
    Ok(all_passed(&results))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Pde(a) => pde(a).map(|_| true),
        Command::Compare(a) => compare(a).map(|_| true),
        Command::ScanTheta(a) => scan(a).map(|_| true),
        Command::Check(a) => check(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
