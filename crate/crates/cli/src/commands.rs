use std::path::{Path, PathBuf};

use fareopt_core::bench::{benchmark_protocol, run_replicates, ReplicatedBench};
use fareopt_core::config::parse_network;
use fareopt_core::equilibrium::{build_option_attributes, evaluate_objective, solve_equilibrium, DEFAULT_PENALTY_WEIGHT};
use fareopt_core::optimize::{self, optimize_fares, pareto_sweep};
use fareopt_core::synthetic::{synthetic_population, Condition, SyntheticSpec};
use fareopt_core::{EquilibriumSettings, FareVector, FlowState, NetworkConfig, OptimizationRequest, OptimizeError, Population, SolutionReport, TransportOption};
use serde::Serialize;

use crate::output::{csv_table, emit, json_envelope, note, read_file, sha256_files, sha256_hex, solution_header, solution_row, solution_summary, Provenance};
use crate::{BenchArgs, CaseStudyArgs, CliError, Command, ConditionArg, EquilibriumArgs, Format, ModelArgs, OptimizeArgs, ServeArgs, SolverArgs, SweepArgs, SynthArgs, ValidateArgs};

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate(a) => validate(a),
        Command::Equilibrium(a) => equilibrium(a),
        Command::Optimize(a) => optimize(a),
        Command::Sweep(a) => sweep(a),
        Command::CaseStudy(a) => case_study(a),
        Command::BenchLearning(a) => bench_learning(a),
        Command::SynthPopulation(a) => synth_population(a),
        Command::Serve(a) => serve(a),
    }
}

struct Model {
    config: NetworkConfig,
    population: Population,
    config_sha256: String,
    population_sha256: String,
}

fn load_config(path: &Path) -> Result<(NetworkConfig, Vec<u8>), CliError> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Config(format!("{}: not UTF-8", path.display())))?;
    let config = parse_network::<f64>(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display()).trim_end().to_string()))?;
    Ok((config, bytes))
}

fn load_population(path: &Path) -> Result<(Population, Vec<u8>), CliError> {
    let bytes = read_file(path)?;
    let population: Population =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: invalid population file: {e}", path.display())))?;
    population.validate().map_err(|issues| {
        let list: Vec<String> = issues.iter().map(|i| format!("  {i}")).collect();
        CliError::Config(format!("{}: {} problem(s) in population file:\n{}", path.display(), issues.len(), list.join("\n")))
    })?;
    Ok((population, bytes))
}

fn load_model(args: &ModelArgs) -> Result<Model, CliError> {
    let (config, config_bytes) = load_config(&args.config)?;
    let mut parts = Vec::new();
    let mut raw = Vec::new();
    for p in &args.population {
        let (pop, bytes) = load_population(p)?;
        parts.push(pop);
        raw.push(bytes);
    }
    let population = Population::merge(parts).ok_or_else(|| CliError::Config("population files use different attribute scales".into()))?;
    Ok(Model { config, population, config_sha256: sha256_hex(&config_bytes), population_sha256: sha256_files(&raw) })
}

fn provenance(command: &'static str, seed: Option<u64>, model: &Model) -> Provenance {
    Provenance {
        config_sha256: Some(model.config_sha256.clone()),
        population_sha256: Some(model.population_sha256.clone()),
        ..Provenance::new(command, seed)
    }
}

fn request(solver: &SolverArgs, gamma: f64) -> Result<OptimizationRequest, CliError> {
    if !(solver.damping > 0.0 && solver.damping <= 1.0) {
        return Err(CliError::Usage(format!("--damping must be in (0, 1], got {}", solver.damping)));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(CliError::Usage(format!("gamma must be in [0, 1], got {gamma}")));
    }
    Ok(OptimizationRequest {
        gamma,
        n_starts: solver.starts as usize,
        fare_max: solver.fare_max,
        seed: solver.seed,
        equilibrium: EquilibriumSettings { damping: solver.damping, ..Default::default() },
        ..Default::default()
    })
}

/// Argument-shaped optimizer errors are usage errors; the rest are numerical.
fn optimize_error(e: OptimizeError) -> CliError {
    match e {
        OptimizeError::BadGamma(_) | OptimizeError::NoStarts | OptimizeError::BadFareBound { .. } | OptimizeError::EmptyGrid => CliError::Usage(e.to_string()),
        other => CliError::Numerical(other.to_string()),
    }
}

fn parse_grid(raw: &[String]) -> Result<Vec<f64>, CliError> {
    let items: Vec<&str> = raw.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(CliError::Usage("--gamma-grid is empty".into()));
    }
    items
        .iter()
        .map(|s| match s.parse::<f64>() {
            Ok(g) if (0.0..=1.0).contains(&g) => Ok(g),
            _ => Err(CliError::Usage(format!("--gamma-grid: `{s}` is not a number in [0, 1]"))),
        })
        .collect()
}

fn validate(a: ValidateArgs) -> Result<(), CliError> {
    let (config, _) = load_config(&a.config)?;
    for p in &a.population {
        load_population(p)?;
    }
    let mut text = serde_json::to_string_pretty(&config).expect("config serializes");
    text.push('\n');
    emit(a.out.as_ref(), &text)?;
    if a.out.is_some() {
        println!("{}: valid", a.config.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct EquilibriumOutput {
    gamma: f64,
    fares: FareVector,
    flows: FlowState,
    iterations: usize,
    residual: f64,
    objective: f64,
    latency: f64,
    risk: f64,
    penalty: f64,
    options: Vec<TransportOption<f64>>,
}

fn equilibrium(a: EquilibriumArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    if !(0.0..=1.0).contains(&a.gamma) {
        return Err(CliError::Usage(format!("--gamma must be in [0, 1], got {}", a.gamma)));
    }
    let fares: FareVector = fareopt_core::equilibrium::FareVector(a.fares.clone());
    fares.check(&model.config).map_err(|e| CliError::Usage(e.to_string()))?;
    let settings = EquilibriumSettings { damping: a.damping, ..Default::default() };
    let eq = solve_equilibrium(&model.config, &fares, &model.population, &settings, None).map_err(|e| CliError::Numerical(e.to_string()))?;
    let obj = evaluate_objective(&model.config, &eq.flows, a.gamma, DEFAULT_PENALTY_WEIGHT);
    let out = EquilibriumOutput {
        gamma: a.gamma,
        options: build_option_attributes(&model.config, &fares, &eq.flows),
        fares,
        flows: eq.flows,
        iterations: eq.iterations,
        residual: eq.residual,
        objective: obj.value,
        latency: obj.latency,
        risk: obj.risk,
        penalty: obj.penalty,
    };
    let prov = provenance("equilibrium", None, &model);
    let text = match a.output.format.unwrap_or(Format::Json) {
        Format::Json => json_envelope(&prov, &out),
        Format::Csv => return Err(CliError::Usage("equilibrium supports --format json only".into())),
    };
    emit(a.output.out.as_ref(), &text)
}

fn optimize(a: OptimizeArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let req = request(&a.solver, a.gamma)?;
    let report = optimize_fares(&req, &model.config, &model.population).map_err(optimize_error)?;
    let prov = provenance("optimize", Some(req.seed), &model);
    let text = match a.output.format.unwrap_or(Format::Json) {
        Format::Json => json_envelope(&prov, &report),
        Format::Csv => {
            let n = model.config.n_roads();
            csv_table(&prov, &solution_header(n), &[solution_row(n, a.gamma, &Ok(report.clone()))])?
        }
    };
    emit(a.output.out.as_ref(), &text)?;
    note(a.output.out.is_some(), &solution_summary(&model.config, &report));
    Ok(())
}

#[derive(Serialize)]
struct SweepPoint {
    gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<SolutionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn run_sweep(config: &NetworkConfig, population: &Population, grid: &[f64], solver: &SolverArgs) -> Result<Vec<optimize::SweepPoint<f64>>, CliError> {
    let req = request(solver, grid[0])?;
    let points = pareto_sweep(grid, config, population, &req).map_err(optimize_error)?;
    for (g, r) in &points {
        match r {
            Ok(r) => log::info!("gamma {g}: L {:.2} R {:.2}", r.latency, r.risk),
            Err(e) => log::warn!("gamma {g}: {e}"),
        }
    }
    if points.iter().all(|(_, r)| r.is_err()) {
        let first = points.iter().find_map(|(_, r)| r.as_ref().err()).expect("non-empty grid");
        return Err(CliError::Numerical(format!("every sweep point failed; first: {first}")));
    }
    Ok(points)
}

fn sweep_text(prov: &Provenance, config: &NetworkConfig, points: Vec<(f64, Result<SolutionReport, OptimizeError>)>, format: Format) -> Result<String, CliError> {
    let n = config.n_roads();
    match format {
        Format::Csv => {
            let rows: Vec<Vec<String>> = points.iter().map(|(g, r)| solution_row(n, *g, r)).collect();
            csv_table(prov, &solution_header(n), &rows)
        }
        Format::Json => {
            let out: Vec<SweepPoint> = points
                .into_iter()
                .map(|(gamma, r)| match r {
                    Ok(report) => SweepPoint { gamma, report: Some(report), error: None },
                    Err(e) => SweepPoint { gamma, report: None, error: Some(e.to_string()) },
                })
                .collect();
            Ok(json_envelope(prov, &out))
        }
    }
}

fn sweep_summary(points: &[(f64, Result<SolutionReport, OptimizeError>)]) -> String {
    let mut s = format!("{:>8}{:>14}{:>14}{:>14}\n", "gamma", "L", "R", "objective");
    for (g, r) in points {
        match r {
            Ok(r) => s += &format!("{g:>8.3}{:>14.2}{:>14.2}{:>14.2}\n", r.latency, r.risk, r.objective),
            Err(e) => s += &format!("{g:>8.3}  failed: {e}\n"),
        }
    }
    s
}

fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let grid = parse_grid(&a.gamma_grid)?;
    let model = load_model(&a.model)?;
    let points = run_sweep(&model.config, &model.population, &grid, &a.solver)?;
    let summary = sweep_summary(&points);
    let prov = provenance("sweep", Some(a.solver.seed), &model);
    let text = sweep_text(&prov, &model.config, points, a.output.format.unwrap_or(Format::Csv))?;
    emit(a.output.out.as_ref(), &text)?;
    note(a.output.out.is_some(), &summary);
    Ok(())
}

fn case_study(a: CaseStudyArgs) -> Result<(), CliError> {
    let grid = parse_grid(&a.gamma_grid)?;
    for condition in ["pre", "post"] {
        let model = load_model(&ModelArgs {
            config: a.data_dir.join("casestudy.json"),
            population: vec![a.data_dir.join(format!("population_{condition}.json"))],
        })?;
        let points = run_sweep(&model.config, &model.population, &grid, &a.solver)?;
        println!("{condition} population");
        print!("{}", sweep_summary(&points));
        let prov = provenance("case-study", Some(a.solver.seed), &model);
        let text = sweep_text(&prov, &model.config, points, Format::Csv)?;
        let path: PathBuf = a.out_dir.join(format!("sweep_{condition}.csv"));
        emit(Some(&path), &text)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchOutput<'a> {
    users: usize,
    active_queries: usize,
    holdout_queries: usize,
    pool_size: usize,
    scale_factor: f64,
    #[serde(flatten)]
    bench: &'a ReplicatedBench,
}

fn bench_learning(a: BenchArgs) -> Result<(), CliError> {
    if !(a.scale_factor.is_finite() && a.scale_factor > 0.0) {
        return Err(CliError::Usage(format!("--scale-factor must be positive, got {}", a.scale_factor)));
    }
    let mut protocol = benchmark_protocol::<f64>();
    protocol.scales = fareopt_core::Scales::default().sharpened(a.scale_factor);
    protocol.active_queries = a.active;
    protocol.holdout_queries = a.holdout;
    protocol.pool_size = a.pool_size as usize;
    let bench = run_replicates(&protocol, a.users, a.replicates as usize, a.seed).map_err(|e| CliError::Numerical(e.to_string()))?;
    let prov = Provenance::new("bench-learning", Some(a.seed));
    let text = match a.output.format.unwrap_or(Format::Json) {
        Format::Json => json_envelope(
            &prov,
            &BenchOutput { users: a.users, active_queries: a.active, holdout_queries: a.holdout, pool_size: protocol.pool_size, scale_factor: a.scale_factor, bench: &bench },
        ),
        Format::Csv => {
            let header: Vec<String> = ["replicate", "user", "active_accuracy", "random_accuracy"].iter().map(|s| s.to_string()).collect();
            let cell = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
            let rows: Vec<Vec<String>> = bench
                .replicates
                .iter()
                .enumerate()
                .flat_map(|(r, b)| b.users.iter().map(move |u| vec![r.to_string(), u.user.to_string(), cell(u.active_accuracy), cell(u.random_accuracy)]))
                .collect();
            csv_table(&prov, &header, &rows)?
        }
    };
    emit(a.output.out.as_ref(), &text)?;
    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    note(
        a.output.out.is_some(),
        &format!(
            "users {} x {} replicate(s), {} active + {} hold-out queries\nmean hold-out accuracy: active {}  random {}\npaired one-sided t-test over replicates: t {}  p {}\n",
            a.users,
            a.replicates,
            a.active,
            a.holdout,
            fmt(bench.mean_active),
            fmt(bench.mean_random),
            fmt(bench.t_statistic),
            fmt(bench.p_value)
        ),
    );
    Ok(())
}

fn synth_population(a: SynthArgs) -> Result<(), CliError> {
    let condition = match a.condition {
        ConditionArg::Pre => Condition::Pre,
        ConditionArg::Post => Condition::Post,
    };
    let mut pop = synthetic_population(condition, &SyntheticSpec::default(), a.seed);
    pop.label = Some(format!("synthetic {} population; seed {}; fareopt {}", condition.label(), a.seed, crate::TOOL_VERSION));
    let mut text = serde_json::to_string_pretty(&pop).expect("population serializes");
    text.push('\n');
    emit(a.out.as_ref(), &text)
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    use fareopt_service::{ServiceConfig, ServiceError};
    let mut config = match &a.config {
        Some(path) => ServiceConfig::load(path).map_err(|e| CliError::Config(e.to_string()))?,
        None => ServiceConfig::default(),
    };
    if let Some(port) = a.port {
        config.port = port;
    }
    if let Some(host) = a.host {
        config.host = host;
    }
    if a.data_dir.is_some() {
        config.data_dir = a.data_dir;
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Config(format!("cannot start runtime: {e}")))?;
    runtime.block_on(fareopt_service::serve(config)).map_err(|e: ServiceError| CliError::Config(e.to_string()))
}
