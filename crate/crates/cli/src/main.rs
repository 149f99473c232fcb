use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mnlprice_core::baselines::{solve_dp_trans, solve_sp_localsearch, solve_sp_trans, TransStage};
use mnlprice_core::dynamic::{solve_dpd_with, DecompositionPolicy, DmipStage};
use mnlprice_core::experiments::{
    dynamic_rows, k_sweep, static_rows, write_gap_csv, write_sim_csv, write_table_csv, write_time_csv, SizeClass,
    DEFAULT_LS_STARTS, STUDY_SIZES, SWEEP_KS,
};
use mnlprice_core::lpsolve::{BackendRegistry, MilpBackend};
use mnlprice_core::sim::{self, FixedPrices, Policy, DEFAULT_RUNS};
use mnlprice_core::static_solver::{solve_static_with, PricingSolution, SolveOptions, DEFAULT_K, DEFAULT_TOLERANCE};
use mnlprice_core::{Instance, ValueFunctionSet};

#[derive(Debug, Parser, Serialize)]
#[command(name = "mnlprice", version, about = "Constrained MNL pricing experiments")]
struct Cli {
    /// Solver backend for the pricing MILPs.
    #[arg(long, global = true, env = "MNLPRICE_BACKEND", default_value = "bundled")]
    backend: String,
    /// Directory receiving every output file and its manifest.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
enum Command {
    /// Generate a random instance file.
    Generate(GenerateArgs),
    /// Solve the static pricing problem.
    SolveStatic(StaticArgs),
    /// Solve the per-resource decomposition and store the value tables.
    SolveDynamic(DynamicArgs),
    /// Simulate static and decomposition policies under common random numbers.
    Simulate(SimulateArgs),
    /// Revenue gap and solve time against the number of breakpoints.
    SweepK(SweepArgs),
    /// Comparison tables over instance classes.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
struct Dims {
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long = "T", default_value_t = 200)]
    horizon: usize,
    #[arg(long, default_value_t = 60)]
    cap: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct InstanceArgs {
    /// Instance file; when absent one is generated from the dimensions.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    dims: Dims,
}

impl InstanceArgs {
    fn load(&self) -> Result<Instance> {
        match &self.instance {
            Some(p) => Instance::load(p).with_context(|| format!("loading instance {}", p.display())),
            None => {
                let d = &self.dims;
                Instance::generate(d.n, d.m, d.horizon, d.cap, d.seed).context("generating instance")
            }
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct SolverArgs {
    /// Breakpoints per price interval.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Bisection tolerance.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    xi: f64,
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    #[command(flatten)]
    dims: Dims,
    /// File name inside the output directory.
    #[arg(long, default_value = "instance.json")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
enum StaticMethod {
    Dmip,
    Trans,
    Localsearch,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
enum Scale {
    /// Demand scaled by `lambda * T`.
    Horizon,
    /// One period, one customer.
    Single,
}

#[derive(Debug, Args, Serialize)]
struct StaticArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = StaticMethod::Dmip)]
    method: StaticMethod,
    #[arg(long, value_enum, default_value_t = Scale::Horizon)]
    scale: Scale,
    /// Local-search starts.
    #[arg(long, default_value_t = DEFAULT_LS_STARTS)]
    starts: usize,
    #[arg(long, default_value = "static_solution.json")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
enum DynamicMethod {
    Dmip,
    Trans,
}

#[derive(Debug, Args, Serialize)]
struct DynamicArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = DynamicMethod::Dmip)]
    method: DynamicMethod,
    #[arg(long, default_value = "value_functions.json")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    runs: usize,
    /// Master seed of the arrival streams.
    #[arg(long, default_value_t = 0)]
    sim_seed: u64,
    /// Skip the decomposition policies.
    #[arg(long)]
    static_only: bool,
    #[arg(long, default_value = "simulation.csv")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    /// Instance class as `m,n,T,cap`.
    #[arg(long, value_parser = parse_class, default_value = "16,80,50,30")]
    class: SizeClass,
    /// Number of instances, seeded 0, 1, ...
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, value_delimiter = ',', default_values_t = SWEEP_KS.to_vec())]
    ks: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    xi: f64,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    /// Instance classes as `m,n,T,cap`; repeat the flag for several.
    #[arg(long = "class", value_parser = parse_class)]
    classes: Vec<SizeClass>,
    /// Instances per class for the static table.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Instances per class for the decomposition and simulation tables; 0 skips them.
    #[arg(long, default_value_t = 5)]
    dynamic_seeds: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    runs: usize,
    #[arg(long, default_value_t = DEFAULT_LS_STARTS)]
    starts: usize,
}

fn parse_class(s: &str) -> std::result::Result<SizeClass, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("expected m,n,T,cap but got `{s}`"));
    }
    let num = |p: &str| p.parse::<usize>().map_err(|e| format!("`{p}`: {e}"));
    let cap = parts[3].parse::<u32>().map_err(|e| format!("`{}`: {e}", parts[3]))?;
    Ok(SizeClass::new(num(parts[0])?, num(parts[1])?, num(parts[2])?, cap))
}

/// Sidecar written next to every output: the full invocation plus the seeds
/// and instance fingerprints needed to regenerate each cell.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    output: String,
    invocation: &'a Cli,
    seeds: Vec<u64>,
    instances: Vec<String>,
}

struct Ctx<'a> {
    cli: &'a Cli,
    backend: Arc<dyn MilpBackend>,
}

impl Ctx<'_> {
    fn path(&self, name: &Path) -> PathBuf {
        self.cli.output_dir.join(name)
    }

    fn create(&self, name: &Path) -> Result<std::fs::File> {
        let p = self.path(name);
        std::fs::File::create(&p).with_context(|| format!("creating {}", p.display()))
    }

    fn manifest(&self, name: &Path, seeds: Vec<u64>, instances: &[&Instance]) -> Result<()> {
        let m = Manifest {
            tool: "mnlprice",
            version: env!("CARGO_PKG_VERSION"),
            output: name.display().to_string(),
            invocation: self.cli,
            seeds,
            instances: instances.iter().map(|i| format!("{:016x}", i.fingerprint())).collect(),
        };
        let mut file = name.as_os_str().to_owned();
        file.push(".manifest.json");
        let p = self.path(Path::new(&file));
        let text = serde_json::to_string_pretty(&m)?;
        std::fs::write(&p, text + "\n").with_context(|| format!("writing {}", p.display()))
    }

    fn star(&self, inst: &Instance, s: &SolverArgs) -> Result<PricingSolution> {
        solve_static_with(inst, inst.demand_scale(), &SolveOptions::new(s.k, s.xi), self.backend.as_ref())
            .context("solving the deterministic static problem")
    }
}

fn instance_seeds(args: &InstanceArgs) -> Vec<u64> {
    if args.instance.is_some() {
        Vec::new()
    } else {
        vec![args.dims.seed]
    }
}

fn cmd_generate(ctx: &Ctx, a: &GenerateArgs) -> Result<()> {
    let d = &a.dims;
    let inst = Instance::generate(d.n, d.m, d.horizon, d.cap, d.seed).context("generating instance")?;
    let p = ctx.path(&a.out);
    inst.save(&p).with_context(|| format!("writing {}", p.display()))?;
    ctx.manifest(&a.out, vec![d.seed], &[&inst])?;
    println!("{}", p.display());
    Ok(())
}

fn cmd_solve_static(ctx: &Ctx, a: &StaticArgs) -> Result<()> {
    let inst = a.instance.load()?;
    let scale = match a.scale {
        Scale::Horizon => inst.demand_scale(),
        Scale::Single => 1.0,
    };
    let sol = match a.method {
        StaticMethod::Dmip => {
            solve_static_with(&inst, scale, &SolveOptions::new(a.solver.k, a.solver.xi), ctx.backend.as_ref())
        }
        StaticMethod::Trans => solve_sp_trans(&inst, scale),
        StaticMethod::Localsearch => solve_sp_localsearch(&inst, scale, a.starts, a.instance.dims.seed),
    }
    .context("solving the static problem")?;
    serde_json::to_writer_pretty(ctx.create(&a.out)?, &sol)?;
    ctx.manifest(&a.out, instance_seeds(&a.instance), &[&inst])?;
    println!("revenue {:.2} in {:.2}s", sol.exact_objective, sol.seconds);
    Ok(())
}

fn cmd_solve_dynamic(ctx: &Ctx, a: &DynamicArgs) -> Result<()> {
    let inst = a.instance.load()?;
    let star = ctx.star(&inst, &a.solver)?;
    let vfs = solve_vfs(ctx, &inst, &a.solver, a.method, &star.duals)?;
    vfs.save(&ctx.path(&a.out)).context("writing value tables")?;
    ctx.manifest(&a.out, instance_seeds(&a.instance), &[&inst])?;
    println!("objective {:.2} in {:.2}s", vfs.objective(&inst), vfs.diagnostics.seconds);
    Ok(())
}

fn dmip_stage(ctx: &Ctx, s: &SolverArgs) -> DmipStage {
    DmipStage { backend: ctx.backend.clone(), ..DmipStage::new(s.k, s.xi) }
}

fn solve_vfs(ctx: &Ctx, inst: &Instance, s: &SolverArgs, method: DynamicMethod, pi: &[f64]) -> Result<ValueFunctionSet> {
    let vfs = match method {
        DynamicMethod::Dmip => solve_dpd_with(inst, &dmip_stage(ctx, s), pi).map(|mut v| {
            v.tolerance = s.xi;
            v
        }),
        DynamicMethod::Trans => solve_dp_trans(inst, s.k, s.xi, pi),
    };
    vfs.context("solving the decomposition")
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    let inst = a.instance.load()?;
    let star = ctx.star(&inst, &a.solver)?;
    let trans = solve_sp_trans(&inst, inst.demand_scale()).context("solving the transform baseline")?;
    let mut tables = Vec::new();
    if !a.static_only {
        for method in [DynamicMethod::Dmip, DynamicMethod::Trans] {
            tables.push(solve_vfs(ctx, &inst, &a.solver, method, &star.duals)?);
        }
    }
    let dm_stage = dmip_stage(ctx, &a.solver);
    let tr_stage = TransStage::new(a.solver.k);
    let mut policies: Vec<(String, Box<dyn Policy + '_>)> = Vec::new();
    if let [dm, tr] = tables.as_slice() {
        policies.push(("DP-DMIP".into(), Box::new(DecompositionPolicy::new(&inst, dm, &dm_stage)?)));
        policies.push(("DP-Trans".into(), Box::new(DecompositionPolicy::new(&inst, tr, &tr_stage)?)));
    }
    policies.push(("SP-DMIP".into(), Box::new(FixedPrices(star.prices.clone()))));
    policies.push(("SP-Trans".into(), Box::new(FixedPrices(trans.prices.clone()))));
    let reports = sim::evaluate_policies(&inst, &mut policies, a.runs, a.sim_seed).context("simulating")?;
    sim::write_csv(&reports, ctx.create(&a.out)?)?;
    let mut seeds = instance_seeds(&a.instance);
    seeds.push(a.sim_seed);
    ctx.manifest(&a.out, seeds, &[&inst])?;
    for r in &reports {
        println!("{:<10} mean {:.2} std {:.2}", r.policy, r.mean, r.std);
    }
    Ok(())
}

fn cmd_sweep_k(ctx: &Ctx, a: &SweepArgs) -> Result<()> {
    if a.ks.is_empty() {
        bail!("the K list is empty");
    }
    let mut rows = Vec::new();
    let mut instances = Vec::new();
    for seed in 0..a.seeds {
        let inst = a.class.generate(seed).with_context(|| format!("generating instance {seed}"))?;
        rows.extend(k_sweep(&inst, seed, &a.ks, a.xi, ctx.backend.as_ref()).with_context(|| format!("sweeping instance {seed}"))?);
        instances.push(inst);
    }
    let refs: Vec<&Instance> = instances.iter().collect();
    let seeds: Vec<u64> = (0..a.seeds).collect();
    for (name, write) in [
        ("sweep_gap.csv", write_gap_csv::<std::fs::File> as fn(_, _) -> _),
        ("sweep_time.csv", write_time_csv::<std::fs::File>),
    ] {
        write(&rows, ctx.create(Path::new(name))?)?;
        ctx.manifest(Path::new(name), seeds.clone(), &refs)?;
    }
    println!("{} rows", rows.len());
    Ok(())
}

fn cmd_report(ctx: &Ctx, a: &ReportArgs) -> Result<()> {
    let classes = if a.classes.is_empty() { STUDY_SIZES[..2].to_vec() } else { a.classes.clone() };
    let mut table1 = Vec::new();
    let mut table2 = Vec::new();
    let mut table3 = Vec::new();
    let mut instances = Vec::new();
    for class in &classes {
        let label = class.label();
        for seed in 0..a.seeds.max(a.dynamic_seeds) {
            let inst = class.generate(seed).with_context(|| format!("generating {label} instance {seed}"))?;
            let ctxmsg = || format!("{label} instance {seed}");
            if seed < a.seeds {
                table1.extend(
                    static_rows(&label, &inst, seed, a.solver.k, a.solver.xi, a.starts, ctx.backend.as_ref())
                        .with_context(ctxmsg)?,
                );
            }
            if seed < a.dynamic_seeds {
                let (t2, t3) =
                    dynamic_rows(&label, &inst, seed, a.solver.k, a.solver.xi, a.runs, ctx.backend.clone())
                        .with_context(ctxmsg)?;
                table2.extend(t2);
                table3.extend(t3);
            }
            instances.push(inst);
        }
    }
    let refs: Vec<&Instance> = instances.iter().collect();
    let seeds: Vec<u64> = (0..a.seeds.max(a.dynamic_seeds)).collect();
    let t1 = Path::new("table1.csv");
    write_table_csv(&table1, ctx.create(t1)?)?;
    ctx.manifest(t1, seeds.clone(), &refs)?;
    if a.dynamic_seeds > 0 {
        let t2 = Path::new("table2.csv");
        write_table_csv(&table2, ctx.create(t2)?)?;
        ctx.manifest(t2, seeds.clone(), &refs)?;
        let t3 = Path::new("table3.csv");
        write_sim_csv(&table3, ctx.create(t3)?)?;
        ctx.manifest(t3, seeds, &refs)?;
    }
    println!("{} static rows, {} dynamic rows", table1.len(), table2.len());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let registry = BackendRegistry::new();
    let backend = registry.get(&cli.backend)?;
    std::fs::create_dir_all(&cli.output_dir)
        .with_context(|| format!("creating output directory {}", cli.output_dir.display()))?;
    let ctx = Ctx { cli, backend };
    match &cli.command {
        Command::Generate(a) => cmd_generate(&ctx, a),
        Command::SolveStatic(a) => cmd_solve_static(&ctx, a),
        Command::SolveDynamic(a) => cmd_solve_dynamic(&ctx, a),
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::SweepK(a) => cmd_sweep_k(&ctx, a),
        Command::Report(a) => cmd_report(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<mnlprice_core::Error>())
                .map(error_kind)
                .unwrap_or("other");
            let causes: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            let body = serde_json::json!({ "error": { "kind": kind, "message": e.to_string(), "causes": causes } });
            eprintln!("{body}");
            ExitCode::from(2)
        }
    }
}

fn error_kind(e: &mnlprice_core::Error) -> &'static str {
    use mnlprice_core::Error::*;
    match e {
        Dimension(_) => "dimension",
        InvalidInstance(_) => "invalid_instance",
        Schema(_) => "schema",
        Io { .. } => "io",
        InvalidArgument(_) => "invalid_argument",
        Infeasible(_) => "infeasible",
        Solver(_) => "solver",
        UnknownBackend(_) => "unknown_backend",
        PriceOutOfRange(_) => "price_out_of_range",
        ChainViolation(_) => "chain_violation",
    }
}
