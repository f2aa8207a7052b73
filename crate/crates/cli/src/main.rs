use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sensact_core::chance::{verify_chance, BoxConstraint, CovarianceBlock};
use sensact_core::covariance::{steady_augmented_cov, steady_error_cov, PeriodicCovariance};
use sensact_core::io::{matrix_to_rows, Config, ModelFile};
use sensact_core::plant::{mode_matrices, ModeRates};
use sensact_core::search::{CostWeights, PrefilterMode, SearchResult, Searcher};
use sensact_core::sequence::{
    admissibility, dwell_feasible_with, irreducible_core, DwellConstants, DwellMode,
};
use sensact_core::sim::{
    empirical_violation, run_ensemble, steady_window_start, summarize_violation,
    write_ensemble_csv, write_trajectories_csv, SimConfig, SimMetadata,
};
use sensact_core::{Error, GainSet, ModeMatrices, SwitchSequence, SystemModel, TargetSpec};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

/// Periodic sensing/actuation schedules: build models, certify and search
/// switching sequences, check chance constraints and run Monte-Carlo
/// simulations.
///
/// Sequences are bitstrings read left to right as η_0 η_1 …; `1` actuates,
/// `0` senses.
#[derive(Parser)]
#[command(name = "sensact", version)]
struct Cli {
    /// Worker threads for search and simulation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plant and gain synthesis.
    #[command(subcommand)]
    Model(ModelCmd),
    /// Switching sequences.
    #[command(subcommand)]
    Seq(SeqCmd),
    /// Steady-state covariances.
    #[command(subcommand)]
    Cov(CovCmd),
    /// Chance constraints.
    #[command(subcommand)]
    Chance(ChanceCmd),
    /// Monte-Carlo simulation.
    #[command(subcommand)]
    Sim(SimCmd),
}

#[derive(Subcommand)]
enum ModelCmd {
    /// Discretize the plant, synthesize K and L and write a model file.
    Build {
        /// Config file; relative names are also looked up in $SENSACT_CONFIG_DIR.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
        #[command(flatten)]
        fmt: Format,
    },
}

#[derive(Subcommand)]
enum SeqCmd {
    /// Core, dwell summary and exact admissibility of one sequence.
    Check {
        #[command(flatten)]
        target: SeqTarget,
        /// Also evaluate the dwell-time conditions.
        #[arg(long)]
        dwell: bool,
        #[arg(long, value_enum, default_value_t = DwellModeArg::Paper)]
        dwell_mode: DwellModeArg,
        /// Also verify the chance constraint.
        #[arg(long)]
        chance: bool,
        #[command(flatten)]
        chance_args: ChanceArgs,
        #[command(flatten)]
        fmt: Format,
    },
    /// Exhaustive search for the cheapest admissible sequence.
    Search {
        #[arg(long)]
        model: PathBuf,
        /// Search exactly this length.
        #[arg(long, conflicts_with = "n_max")]
        n: Option<usize>,
        /// Search lengths 1..=N, stopping at the first feasible one.
        #[arg(long)]
        n_max: Option<usize>,
        /// Scan every length up to --n-max and return the global optimum.
        #[arg(long)]
        all_lengths: bool,
        /// Config supplying cost weights and search defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        prefilter: Option<PrefilterArg>,
        #[arg(long, value_enum)]
        dwell_mode: Option<DwellModeArg>,
        /// Actuation penalty r_η (overrides the config).
        #[arg(long)]
        r_eta: Option<f64>,
        /// Include the per-core table in the JSON output.
        #[arg(long)]
        table: bool,
        #[command(flatten)]
        fmt: Format,
    },
    /// Dwell-time left-hand sides for one sequence.
    Dwell {
        #[command(flatten)]
        target: SeqTarget,
        #[arg(long, value_enum, default_value_t = DwellModeArg::Paper)]
        dwell_mode: DwellModeArg,
        /// Override the four spectral radii: ρ̄0,ρ̄1,ρ̃0,ρ̃1.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        /// Override the growth constant.
        #[arg(long)]
        c: Option<f64>,
        #[command(flatten)]
        fmt: Format,
    },
}

#[derive(Subcommand)]
enum CovCmd {
    /// Periodic steady-state covariance of one admissible sequence.
    Steady {
        #[command(flatten)]
        target: SeqTarget,
        #[arg(long, value_enum, default_value_t = CovBlockArg::Error)]
        block: CovBlockArg,
    },
}

#[derive(Subcommand)]
enum ChanceCmd {
    /// Steady-state Chebyshev chance constraint for one sequence.
    Verify {
        #[command(flatten)]
        target: SeqTarget,
        #[command(flatten)]
        chance_args: ChanceArgs,
        #[command(flatten)]
        fmt: Format,
    },
}

#[derive(Subcommand)]
enum SimCmd {
    /// Run an ensemble and write trajectory and ensemble CSVs plus metadata.
    Run {
        #[command(flatten)]
        target: SeqTarget,
        /// Config supplying the sim section.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Box half-width on the constrained components.
        #[arg(long)]
        bound: Option<f64>,
        /// Violation budget (reported alongside the violation fraction).
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        components: Option<Vec<usize>>,
        #[arg(long, default_value = "sim-out")]
        out: PathBuf,
        #[command(flatten)]
        fmt: Format,
    },
}

#[derive(Args)]
struct SeqTarget {
    #[arg(long)]
    model: PathBuf,
    /// Bitstring, leftmost character is η_0.
    sequence: String,
}

#[derive(Args)]
struct ChanceArgs {
    /// Config supplying chance defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Box half-width.
    #[arg(long)]
    bound: Option<f64>,
    /// Violation budget δ.
    #[arg(long)]
    delta: Option<f64>,
    /// Constrained state indices (default: the first three).
    #[arg(long, value_delimiter = ',')]
    components: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    block: Option<CovBlockArg>,
}

#[derive(Args)]
struct Format {
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum DwellModeArg {
    Paper,
    Rigorous,
}

impl From<DwellModeArg> for DwellMode {
    fn from(a: DwellModeArg) -> Self {
        match a {
            DwellModeArg::Paper => DwellMode::Paper,
            DwellModeArg::Rigorous => DwellMode::Rigorous,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PrefilterArg {
    Off,
    FastAccept,
    Heuristic,
}

impl From<PrefilterArg> for PrefilterMode {
    fn from(a: PrefilterArg) -> Self {
        match a {
            PrefilterArg::Off => PrefilterMode::Off,
            PrefilterArg::FastAccept => PrefilterMode::FastAccept,
            PrefilterArg::Heuristic => PrefilterMode::Heuristic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CovBlockArg {
    State,
    Error,
    Augmented,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => EXIT_IO,
            Error::NonFinite(_) => EXIT_NUMERICAL,
            e if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Model(ModelCmd::Build { config, out, fmt }) => model_build(&config, &out, fmt.json),
        Command::Seq(SeqCmd::Check {
            target,
            dwell,
            dwell_mode,
            chance,
            chance_args,
            fmt,
        }) => seq_check(&target, dwell, dwell_mode.into(), chance.then_some(&chance_args), fmt.json),
        Command::Seq(SeqCmd::Search {
            model,
            n,
            n_max,
            all_lengths,
            config,
            prefilter,
            dwell_mode,
            r_eta,
            table,
            fmt,
        }) => {
            let (model, gains) = load_model(&model)?;
            let mm = mode_matrices(&model, &gains)?;
            let cfg = config.as_deref().map(load_config).transpose()?;
            let mut weights = match &cfg {
                Some(c) => c.cost_weights(model.states())?,
                None => CostWeights::error_trace(model.states()),
            };
            if let Some(r) = r_eta {
                weights.r_eta = r;
            }
            let mut options = cfg.as_ref().map(|c| c.search_options()).unwrap_or_default();
            if let Some(p) = prefilter {
                options.prefilter = p.into();
            }
            if let Some(d) = dwell_mode {
                options.dwell_mode = d.into();
            }
            options.all_lengths |= all_lengths;
            options.keep_table = table;
            let searcher = Searcher::new(&model, &mm, weights, options)?;
            let result = match (n, n_max) {
                (Some(n), _) => searcher.search_fixed_length(n)?,
                (None, Some(m)) => searcher.search_up_to(m)?,
                (None, None) => searcher.search_up_to(cfg.map_or(8, |c| c.search.n_max))?,
            };
            print_search(&result, fmt.json)
        }
        Command::Seq(SeqCmd::Dwell {
            target,
            dwell_mode,
            rates,
            c,
            fmt,
        }) => seq_dwell(&target, dwell_mode.into(), rates, c, fmt.json),
        Command::Cov(CovCmd::Steady { target, block }) => cov_steady(&target, block),
        Command::Chance(ChanceCmd::Verify {
            target,
            chance_args,
            fmt,
        }) => {
            let (model, gains) = load_model(&target.model)?;
            let mm = mode_matrices(&model, &gains)?;
            let s = parse_sequence(&target.sequence)?;
            let report = chance_report(&s, &model, &mm, &chance_args)?;
            print_chance(&report, fmt.json);
            Ok(())
        }
        Command::Sim(SimCmd::Run {
            target,
            config,
            runs,
            steps,
            seed,
            bound,
            delta,
            components,
            out,
            fmt,
        }) => {
            let (model, gains) = load_model(&target.model)?;
            let s = parse_sequence(&target.sequence)?;
            let cfg = config.as_deref().map(load_config).transpose()?;
            let mut sim = match cfg.as_ref().and_then(|c| c.sim.as_ref()) {
                Some(spec) => spec.to_config(model.inputs())?,
                None => SimConfig::new(
                    400,
                    200,
                    0,
                    sensact_core::Vector::zeros(model.states()),
                    sensact_core::Matrix::zeros(model.states(), model.states()),
                    model.inputs(),
                ),
            };
            sim.runs = runs.unwrap_or(sim.runs);
            sim.steps = steps.unwrap_or(sim.steps);
            sim.seed = seed.unwrap_or(sim.seed);
            let chance_cfg = cfg.as_ref().and_then(|c| c.chance.clone());
            let components = components
                .or_else(|| chance_cfg.as_ref().map(|c| c.components.clone()))
                .unwrap_or_else(|| default_components(&model));
            let bounds = bound
                .map(|b| BoxConstraint::uniform(components.clone(), b))
                .transpose()?;
            sim_run(&model, &gains, &s, &sim, bounds.as_ref(), delta, &out, fmt.json)
        }
    }
}

fn resolve_config(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os("SENSACT_CONFIG_DIR") {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path) -> CliResult<Config> {
    let path = resolve_config(path);
    let text = read_input(&path)?;
    Config::from_json(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> CliResult<(SystemModel, GainSet)> {
    let text = read_input(path)?;
    let file = ModelFile::from_json(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    Ok(file.system()?)
}

fn parse_sequence(text: &str) -> CliResult<SwitchSequence> {
    text.parse::<SwitchSequence>()
        .map_err(|e| Failure::input(format!("invalid sequence {text:?}: {e}")))
}

fn default_components(model: &SystemModel) -> Vec<usize> {
    (0..model.states().min(3)).collect()
}

fn write_output(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

fn print_json(value: &impl serde::Serialize) {
    let text = serde_json::to_string_pretty(value).expect("serializable report");
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn model_build(config: &Path, out: &Path, json: bool) -> CliResult<()> {
    let cfg = load_config(config)?;
    let (model, gains) = cfg.build()?;
    let file = ModelFile::new(&model, &gains)?;
    write_output(out, &file.to_json()?)?;
    if json {
        print_json(&file.summary);
        return Ok(());
    }
    println!("wrote {}", out.display());
    println!("{:<26} {:>16} {:>16}", "mode", "spectral radius", "Frobenius norm");
    for m in &file.summary.modes {
        println!("{:<26} {:>16.6} {:>16.6}", m.mode, m.spectral_radius, m.frobenius_norm);
    }
    println!("growth constant c = {:.6} (k* = 1)", file.summary.growth_constant);
    Ok(())
}

fn chance_report(
    s: &SwitchSequence,
    model: &SystemModel,
    mm: &ModeMatrices,
    args: &ChanceArgs,
) -> CliResult<sensact_core::chance::ChanceReport> {
    let cfg = args.config.as_deref().map(load_config).transpose()?;
    let defaults = cfg.and_then(|c| c.chance);
    let delta = args
        .delta
        .or(defaults.as_ref().map(|d| d.delta))
        .ok_or_else(|| Failure::input("--delta is required without a config chance section"))?;
    let bound = args
        .bound
        .or(defaults.as_ref().map(|d| d.bound))
        .ok_or_else(|| Failure::input("--bound is required without a config chance section"))?;
    let components = args
        .components
        .clone()
        .or(defaults.as_ref().map(|d| d.components.clone()))
        .unwrap_or_else(|| default_components(model));
    let block = match args.block {
        Some(CovBlockArg::Error) => CovarianceBlock::Error,
        Some(_) => CovarianceBlock::State,
        None => defaults.map(|d| d.block).unwrap_or_default(),
    };
    let bounds = BoxConstraint::uniform(components, bound)?;
    let origin = TargetSpec::origin(model.states(), model.inputs());
    Ok(verify_chance(s, model, mm, &bounds, delta, None, &origin, block)?)
}

fn print_chance(report: &sensact_core::chance::ChanceReport, json: bool) {
    if json {
        print_json(report);
        return;
    }
    println!(
        "chance constraint: δ = {}, α = {:.6}, block = {:?}",
        report.spec.delta, report.spec.alpha, report.block
    );
    println!("{:>6} {:>12} {:>14} {:>8} {:>8}", "phase", "radius", "min margin", "faces", "sphere");
    for p in &report.phases {
        let margin = p.margins.iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "{:>6} {:>12.6} {:>14.6} {:>8} {:>8}",
            p.phase,
            p.radius,
            margin,
            verdict(p.pass),
            verdict(p.pass_sphere)
        );
    }
    println!(
        "radii: min {:.6}, max {:.6}; verdict: {} (sphere test: {})",
        report.min_radius(),
        report.max_radius(),
        verdict(report.pass),
        verdict(report.pass_sphere)
    );
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

fn seq_check(
    target: &SeqTarget,
    dwell: bool,
    dwell_mode: DwellMode,
    chance: Option<&ChanceArgs>,
    json: bool,
) -> CliResult<()> {
    let (model, gains) = load_model(&target.model)?;
    let mm = mode_matrices(&model, &gains)?;
    let s = parse_sequence(&target.sequence)?;
    let core = irreducible_core(&s);
    let report = admissibility(&s, &mm)?;
    let dwell_check = if dwell {
        let constants = DwellConstants::for_mode(&mm, dwell_mode, s.len())?;
        Some(dwell_feasible_with(&s, &mm.rates, constants)?)
    } else {
        None
    };
    let chance_report = match chance {
        Some(args) if report.admissible => Some(chance_report(&s, &model, &mm, args)?),
        _ => None,
    };
    if json {
        print_json(&json!({
            "sequence": s,
            "core": core,
            "reducible": core.len() != s.len(),
            "admissibility": report,
            "dwell": dwell_check,
            "chance": chance_report,
        }));
        return Ok(());
    }
    println!("sequence        {s}");
    println!("core            {core}{}", if core.len() != s.len() { " (reducible)" } else { "" });
    if let Some(d) = &dwell_check {
        println!(
            "dwell           n0 = {}, n1 = {}, ns = {}",
            d.summary.n0, d.summary.n1, d.summary.ns
        );
        println!(
            "dwell LHS       control {:.4}, observer {:.4} (swapped {:.4}) -> {}",
            d.lhs_control,
            d.lhs_observer,
            d.lhs_observer_swapped,
            verdict(d.pass)
        );
    }
    println!("q̄_A             {:.6}", report.qbar);
    println!("q̃_A             {:.6e}", report.qtilde);
    println!("admissible      {}", if report.admissible { "yes" } else { "no" });
    match (chance, &chance_report) {
        (_, Some(r)) => print_chance(r, false),
        (Some(_), None) => println!("chance          skipped (sequence not admissible)"),
        _ => {}
    }
    Ok(())
}

fn seq_dwell(
    target: &SeqTarget,
    dwell_mode: DwellMode,
    rates: Option<Vec<f64>>,
    c: Option<f64>,
    json: bool,
) -> CliResult<()> {
    let (model, gains) = load_model(&target.model)?;
    let mm = mode_matrices(&model, &gains)?;
    let s = parse_sequence(&target.sequence)?;
    let rates = match rates {
        Some(r) if r.len() != 4 => {
            return Err(Failure::input(format!("--rates needs four values, got {}", r.len())));
        }
        Some(r) => ModeRates {
            control: [r[0], r[1]],
            observer: [r[2], r[3]],
        },
        None => mm.rates,
    };
    let constants = match c {
        Some(c) => DwellConstants::uniform(c),
        None => DwellConstants::for_mode(&mm, dwell_mode, s.len())?,
    };
    let check = dwell_feasible_with(&s, &rates, constants)?;
    if json {
        print_json(&json!({"sequence": s, "rates": rates, "dwell": check}));
        return Ok(());
    }
    println!("sequence   {s}");
    println!(
        "counts     n0 = {}, n1 = {}, ns = {}",
        check.summary.n0, check.summary.n1, check.summary.ns
    );
    println!("constants  control {:.6}, observer {:.6}", constants.control, constants.observer);
    println!("control    {:.4}", check.lhs_control);
    println!("observer   {:.4} (swapped exponents {:.4})", check.lhs_observer, check.lhs_observer_swapped);
    println!("verdict    {}", verdict(check.pass));
    Ok(())
}

fn covariance_json(cov: &PeriodicCovariance) -> serde_json::Value {
    serde_json::Value::Array(cov.phases().iter().map(|p| json!(matrix_to_rows(p))).collect())
}

fn cov_steady(target: &SeqTarget, block: CovBlockArg) -> CliResult<()> {
    let (model, gains) = load_model(&target.model)?;
    let mm = mode_matrices(&model, &gains)?;
    let s = parse_sequence(&target.sequence)?;
    let phases = match block {
        CovBlockArg::Error => steady_error_cov(&s, &mm, &model)?,
        CovBlockArg::State => steady_augmented_cov(&s, &model, &mm)?.state,
        CovBlockArg::Augmented => steady_augmented_cov(&s, &model, &mm)?.joint,
    };
    let traces: Vec<f64> = phases.phases().iter().map(|p| p.trace()).collect();
    print_json(&json!({
        "sequence": s,
        "traces": traces,
        "phases": covariance_json(&phases),
    }));
    Ok(())
}

fn print_search(result: &SearchResult, json: bool) -> CliResult<()> {
    if json {
        print_json(result);
        return Ok(());
    }
    let lengths: Vec<String> = result.lengths.iter().map(|n| n.to_string()).collect();
    println!("lengths searched  {}", lengths.join(", "));
    println!(
        "words {}, distinct cores {}, evaluated {}, cached {}, admissible cores {}",
        result.stats.enumerated,
        result.stats.distinct_cores,
        result.stats.evaluated,
        result.stats.cache_hits,
        result.stats.admissible_cores
    );
    match &result.best {
        Some(b) => {
            println!("optimum           {} (core {})", b.word, b.core);
            println!("cost J            {:.9}", b.cost);
            println!("q̄_A, q̃_A          {:.6}, {:.6e}", b.report.qbar, b.report.qtilde);
            let ties: Vec<String> = result.tie_class.iter().map(|w| w.to_string()).collect();
            println!("tie class         {}", ties.join(" "));
        }
        None => println!("no admissible sequence"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sim_run(
    model: &SystemModel,
    gains: &GainSet,
    s: &SwitchSequence,
    cfg: &SimConfig,
    bounds: Option<&BoxConstraint>,
    delta: Option<f64>,
    out: &Path,
    json: bool,
) -> CliResult<()> {
    let ensemble = run_ensemble(model, gains, s, cfg)?;
    let violation = bounds
        .map(|b| empirical_violation(&ensemble.trajectories, b))
        .transpose()?;
    let summary = violation
        .as_deref()
        .map(|v| summarize_violation(v, steady_window_start(cfg.steps)));

    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let traj_path = out.join("trajectories.csv");
    let mut w = BufWriter::new(File::create(&traj_path).map_err(|e| Failure::io(&traj_path, e))?);
    write_trajectories_csv(&mut w, &ensemble.trajectories, model.inputs())
        .map_err(|e| Failure::io(&traj_path, e))?;
    let ens_path = out.join("ensemble.csv");
    let mut w = BufWriter::new(File::create(&ens_path).map_err(|e| Failure::io(&ens_path, e))?);
    write_ensemble_csv(&mut w, &ensemble.stats, violation.as_deref()).map_err(|e| Failure::io(&ens_path, e))?;
    drop(w);
    let mut meta = SimMetadata::new(cfg, s);
    meta.violation = summary;
    let meta_value = json!({
        "metadata": meta,
        "bound": bounds.map(|b| b.half_widths.clone()),
        "components": bounds.map(|b| b.components.clone()),
        "delta": delta,
    });
    let meta_path = out.join("metadata.json");
    write_output(
        &meta_path,
        &(serde_json::to_string_pretty(&meta_value).expect("serializable metadata") + "\n"),
    )?;

    if json {
        print_json(&meta_value);
        return Ok(());
    }
    println!("wrote {}, {}, {}", traj_path.display(), ens_path.display(), meta_path.display());
    println!("runs {}, steps {}, seed {}", cfg.runs, cfg.steps, cfg.seed);
    let last = ensemble.stats.mean.last().expect("nonempty ensemble");
    println!("final mean-state norm {:.6}", last.norm());
    if let Some(v) = summary {
        print!(
            "max violation fraction over steady window (k >= {}): {:.4}",
            v.window_start, v.steady_max
        );
        match delta {
            Some(d) => println!(" (δ = {d}: {})", verdict(v.steady_max <= d)),
            None => println!(),
        }
    }
    Ok(())
}
