//! Command-line runner: experiment orchestration with reproducible,
//! seedable outputs. Every command writes its fully-resolved
//! configuration (and the tool version) next to its outputs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fdpc_core::distpc::{self, AlgoParams, Outcome};
use fdpc_core::experiments::{
    self, geometric_fit, GeoFit, ScenarioSequence, SequenceParams, SweepRow,
};
use fdpc_core::model::{random_scenario, RandomScenarioParams, ScenarioSpec};
use fdpc_core::onehop;
use fdpc_core::oracle::{self, SolverParams};
use fdpc_core::presets;
use fdpc_core::svg::{line_plot, Series};
use fdpc_core::utility::{UtilityFn, UtilitySet};
use fdpc_core::{io as fio, Error};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "fdpc",
    version,
    about = "Full-duplex massive-MIMO power control simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the distributed iteration and emit its trace and decay fit.
    Converge(ConvergeArgs),
    /// Sweep the interference gain of a one-by-one scenario.
    Sweep(SweepArgs),
    /// Solve nested scenario levels and report power-scaling fractions.
    Scale(ScaleArgs),
    /// Solve one scenario centrally and emit the certificate.
    Oracle(OracleArgs),
    /// Run the property suites and report pass/fail per suite.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Base seed for anything randomized.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output format for tabular data.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Built-in preset (fig3-pf or fig3-mpd); used when no scenario file
    /// is given.
    #[arg(long, default_value = "fig3-pf")]
    preset: String,
    /// Scenario JSON file (dB-unit fields) overriding the preset.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Uplink utility spec, e.g. log:w=1 or afair:alpha=2,w=1.
    #[arg(long)]
    ul_util: Option<String>,
    /// Downlink utility spec.
    #[arg(long)]
    dl_util: Option<String>,
    /// Step size override.
    #[arg(long)]
    gamma: Option<f64>,
    /// Iteration budget override.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Route every cross-node quantity through the feedback protocol.
    #[arg(long)]
    guarded: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "fig2")]
    preset: String,
    /// Number of sweep points override.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Args)]
struct ScaleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Antenna scaling constant.
    #[arg(long = "C", default_value_t = 16.0)]
    c: f64,
    #[arg(long, default_value_t = 5)]
    levels: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Number of seeds to aggregate.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Scenario JSON file (dB-unit fields).
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "log:w=1")]
    ul_util: String,
    #[arg(long, default_value = "log:w=1")]
    dl_util: String,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Converge(args) => cmd_converge(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Scale(args) => cmd_scale(args),
        Cmd::Oracle(args) => cmd_oracle(args),
        Cmd::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn write(dir: &Path, name: &str, content: &str) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), content)?;
    Ok(())
}

fn write_config<T: Serialize>(dir: &Path, config: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(config)?;
    write(dir, "config.json", &(text + "\n"))
}

#[derive(Serialize)]
struct ResolvedConfig<'a, T: Serialize> {
    tool_version: &'a str,
    command: &'a str,
    seed: u64,
    #[serde(flatten)]
    params: T,
}

fn cmd_converge(args: ConvergeArgs) -> Result<ExitCode, Error> {
    let (scenario_spec, s, utils, mut algo, label) = match &args.scenario {
        Some(path) => {
            let s = fio::load_scenario(path)?;
            let ul = UtilityFn::parse(args.ul_util.as_deref().unwrap_or("log:w=1"))?;
            let dl = UtilityFn::parse(args.dl_util.as_deref().unwrap_or("log:w=1"))?;
            let utils = UtilitySet::uniform(ul, dl, s.k_ul(), s.k_dl());
            (
                None,
                s,
                utils,
                AlgoParams::default(),
                path.display().to_string(),
            )
        }
        None => {
            let preset = presets::converge_preset(&args.preset)?;
            let (s, mut utils) = preset.build()?;
            if let Some(spec) = &args.ul_util {
                let u = UtilityFn::parse(spec)?;
                utils.ul = vec![u; s.k_ul()];
            }
            if let Some(spec) = &args.dl_util {
                let u = UtilityFn::parse(spec)?;
                utils.dl = vec![u; s.k_dl()];
            }
            (
                Some(preset.scenario.clone()),
                s,
                utils,
                preset.algo.clone(),
                preset.name.to_string(),
            )
        }
    };
    if let Some(gamma) = args.gamma {
        algo.gamma = gamma;
    }
    if let Some(iters) = args.max_iters {
        algo.max_iters = iters;
    }
    algo.validate()?;

    #[derive(Serialize)]
    struct Params<'a> {
        source: &'a str,
        scenario: Option<&'a ScenarioSpec>,
        ul_util: Option<&'a String>,
        dl_util: Option<&'a String>,
        algo: &'a AlgoParams,
        guarded: bool,
    }
    write_config(
        &args.common.out,
        &ResolvedConfig {
            tool_version: VERSION,
            command: "converge",
            seed: args.common.seed,
            params: Params {
                source: &label,
                scenario: scenario_spec.as_ref(),
                ul_util: args.ul_util.as_ref(),
                dl_util: args.dl_util.as_ref(),
                algo: &algo,
                guarded: args.guarded,
            },
        },
    )?;

    let solved = oracle::solve_centralized(&s, &utils, &SolverParams::default())?;
    let run = if args.guarded {
        onehop::run_guarded(&s, &utils, &algo, Some(solved.utility_star))?.result
    } else {
        distpc::run(&s, &utils, &algo, Some(solved.utility_star))?
    };
    let trace = &run.state.trace;

    match args.common.format {
        Format::Csv => write(
            &args.common.out,
            "trace.csv",
            &fio::trace_to_csv(trace, s.k_ul(), s.k_dl()),
        )?,
        Format::Json => write(
            &args.common.out,
            "trace.json",
            &(serde_json::to_string_pretty(trace)? + "\n"),
        )?,
    }
    let eps: Vec<f64> = trace.iter().map(|r| r.eps.unwrap_or(f64::NAN)).collect();
    let fit = geometric_fit(&eps, 20, 200).ok();

    #[derive(Serialize)]
    struct FitOut<'a> {
        outcome: &'a Outcome,
        rounds: usize,
        final_utility: f64,
        oracle_utility: f64,
        relative_gap: f64,
        fit: Option<GeoFit>,
    }
    let final_u = trace.last().map(|r| r.sum_utility).unwrap_or(f64::NAN);
    let fit_out = FitOut {
        outcome: &run.outcome,
        rounds: run.state.t,
        final_utility: final_u,
        oracle_utility: solved.utility_star,
        relative_gap: (final_u - solved.utility_star).abs() / solved.utility_star.abs(),
        fit,
    };
    write(
        &args.common.out,
        "fit.json",
        &(serde_json::to_string_pretty(&fit_out)? + "\n"),
    )?;
    let series = Series {
        name: "sum utility",
        points: trace
            .iter()
            .map(|r| (r.iter as f64, r.sum_utility))
            .collect(),
    };
    write(
        &args.common.out,
        "utility.svg",
        &line_plot(
            &format!("convergence: {label}"),
            "iteration",
            "sum utility",
            &[series],
        ),
    )?;

    match run.outcome {
        Outcome::Unstable { gamma, ref reason } => {
            eprintln!("instability at step size {gamma}: {reason}");
            Ok(ExitCode::from(2))
        }
        _ => {
            println!(
                "{label}: {:?}, {} rounds, final utility {final_u:.6} (oracle {:.6})",
                run.outcome, run.state.t, solved.utility_star
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode, Error> {
    let mut preset = presets::sweep_preset(&args.preset)?;
    if let Some(points) = args.points {
        if points < 2 {
            return Err(Error::InvalidConfig("need at least 2 sweep points".into()));
        }
        let (lo, hi) = (
            *preset.g_i_db_points.first().unwrap(),
            *preset.g_i_db_points.last().unwrap(),
        );
        preset.g_i_db_points = (0..points)
            .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
            .collect();
    }

    #[derive(Serialize)]
    struct Params<'a> {
        preset: &'a str,
        scenario: &'a ScenarioSpec,
        g_i_db_points: &'a [f64],
        families: &'a [(&'a str, &'a str, &'a str)],
    }
    write_config(
        &args.common.out,
        &ResolvedConfig {
            tool_version: VERSION,
            command: "sweep",
            seed: args.common.seed,
            params: Params {
                preset: preset.name,
                scenario: &preset.scenario,
                g_i_db_points: &preset.g_i_db_points,
                families: &preset.families,
            },
        },
    )?;

    let base = preset.scenario.build()?;
    let mut per_family: Vec<(&str, Vec<SweepRow>)> = Vec::new();
    for (family, ul_spec, dl_spec) in &preset.families {
        let utils =
            UtilitySet::uniform(UtilityFn::parse(ul_spec)?, UtilityFn::parse(dl_spec)?, 1, 1);
        let rows = experiments::sweep_interference(
            &base,
            &preset.g_i_db_points,
            &utils,
            &SolverParams::default(),
        )?;
        per_family.push((family, rows));
    }

    match args.common.format {
        Format::Csv => {
            let mut csv = String::from("g_i_db");
            for (family, _) in &per_family {
                csv.push_str(&format!(
                    ",{family}_p_ul_star_w,{family}_utility_opt,{family}_utility_naive"
                ));
            }
            csv.push('\n');
            for (k, &g_db) in preset.g_i_db_points.iter().enumerate() {
                csv.push_str(&g_db.to_string());
                for (_, rows) in &per_family {
                    csv.push_str(&format!(
                        ",{},{},{}",
                        rows[k].p_ul_star_w, rows[k].utility_opt, rows[k].utility_naive
                    ));
                }
                csv.push('\n');
            }
            write(&args.common.out, "sweep.csv", &csv)?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct FamilyOut<'a> {
                family: &'a str,
                rows: &'a [SweepRow],
            }
            let out: Vec<FamilyOut> = per_family
                .iter()
                .map(|(family, rows)| FamilyOut { family, rows })
                .collect();
            write(
                &args.common.out,
                "sweep.json",
                &(serde_json::to_string_pretty(&out)? + "\n"),
            )?;
        }
    }

    let power_series: Vec<Series> = per_family
        .iter()
        .map(|(family, rows)| Series {
            name: family,
            points: rows.iter().map(|r| (r.g_i_db, r.p_ul_star_w)).collect(),
        })
        .collect();
    write(
        &args.common.out,
        "power.svg",
        &line_plot(
            "optimal uplink power",
            "interference gain (dB)",
            "power (W)",
            &power_series,
        ),
    )?;
    let gap_series: Vec<Series> = per_family
        .iter()
        .map(|(family, rows)| Series {
            name: family,
            points: rows
                .iter()
                .map(|r| (r.g_i_db, r.utility_opt - r.utility_naive))
                .collect(),
        })
        .collect();
    write(
        &args.common.out,
        "gap.svg",
        &line_plot(
            "utility gain over max-power baseline",
            "interference gain (dB)",
            "utility gap",
            &gap_series,
        ),
    )?;

    let table = match args.common.format {
        Format::Csv => "sweep.csv",
        Format::Json => "sweep.json",
    };
    println!(
        "sweep {}: {} points, {} families -> {}",
        preset.name,
        preset.g_i_db_points.len(),
        per_family.len(),
        args.common.out.join(table).display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_scale(args: ScaleArgs) -> Result<ExitCode, Error> {
    let preset = presets::scale_preset();
    let sequence_base = SequenceParams {
        c: args.c,
        levels: args.levels,
        ..preset.sequence.clone()
    };
    if !(args.rho > 0.0 && args.rho < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "rho must lie strictly between 0 and 1, got {}",
            args.rho
        )));
    }
    if args.seeds == 0 || args.levels == 0 {
        return Err(Error::InvalidConfig(
            "need at least one seed and one level".into(),
        ));
    }

    #[derive(Serialize)]
    struct Params<'a> {
        sequence: &'a SequenceParams,
        rho: f64,
        omega: f64,
        seeds: usize,
        ul_util: &'a str,
        dl_util: &'a str,
    }
    write_config(
        &args.common.out,
        &ResolvedConfig {
            tool_version: VERSION,
            command: "scale",
            seed: args.common.seed,
            params: Params {
                sequence: &sequence_base,
                rho: args.rho,
                omega: preset.omega,
                seeds: args.seeds,
                ul_util: preset.ul_util,
                dl_util: preset.dl_util,
            },
        },
    )?;

    let solver = SolverParams {
        grad_tol: 1e-6,
        ..SolverParams::default()
    };
    let ul = UtilityFn::parse(preset.ul_util)?;
    let dl = UtilityFn::parse(preset.dl_util)?;

    let mut csv = format!("seed,{}\n", experiments::ScalingReport::csv_header());
    let mut reports = Vec::new();
    let mut theta_per_level: Vec<Vec<f64>> = vec![Vec::new(); args.levels];
    for k in 0..args.seeds {
        let seed = args.common.seed + k as u64;
        let seq = ScenarioSequence::build(SequenceParams {
            seed,
            ..sequence_base.clone()
        })?;
        let report = experiments::run_scaling(&seq, &ul, &dl, args.rho, preset.omega, &solver)?;
        for (l, row) in report.rows.iter().enumerate() {
            theta_per_level[l].push(row.theta);
        }
        for line in report.to_csv().lines().skip(1) {
            csv.push_str(&format!("{seed},{line}\n"));
        }
        reports.push((seed, report));
    }
    match args.common.format {
        Format::Csv => write(&args.common.out, "scale.csv", &csv)?,
        Format::Json => {
            #[derive(Serialize)]
            struct SeedOut {
                seed: u64,
                rows: Vec<experiments::ScalingRow>,
            }
            let out: Vec<SeedOut> = reports
                .into_iter()
                .map(|(seed, r)| SeedOut { seed, rows: r.rows })
                .collect();
            write(
                &args.common.out,
                "scale.json",
                &(serde_json::to_string_pretty(&out)? + "\n"),
            )?;
        }
    }

    let mut medians = Vec::new();
    for v in theta_per_level.iter_mut() {
        v.sort_by(|a, b| a.total_cmp(b));
        medians.push(0.5 * (v[(v.len() - 1) / 2] + v[v.len() / 2]));
    }
    let mut med_csv = String::from("level,median_theta\n");
    for (l, m) in medians.iter().enumerate() {
        med_csv.push_str(&format!("{},{m}\n", l + 1));
    }
    write(&args.common.out, "scale_median.csv", &med_csv)?;
    write(
        &args.common.out,
        "scale.svg",
        &line_plot(
            "low-power uplink fraction by level",
            "level",
            "median fraction",
            &[Series {
                name: "median theta",
                points: medians
                    .iter()
                    .enumerate()
                    .map(|(l, &m)| ((l + 1) as f64, m))
                    .collect(),
            }],
        ),
    )?;

    println!("scale: medians per level {medians:?}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(args: OracleArgs) -> Result<ExitCode, Error> {
    let s = fio::load_scenario(&args.scenario)?;
    let utils = UtilitySet::uniform(
        UtilityFn::parse(&args.ul_util)?,
        UtilityFn::parse(&args.dl_util)?,
        s.k_ul(),
        s.k_dl(),
    );

    #[derive(Serialize)]
    struct Params<'a> {
        scenario_path: String,
        ul_util: &'a str,
        dl_util: &'a str,
        solver: SolverParams,
    }
    write_config(
        &args.common.out,
        &ResolvedConfig {
            tool_version: VERSION,
            command: "oracle",
            seed: args.common.seed,
            params: Params {
                scenario_path: args.scenario.display().to_string(),
                ul_util: &args.ul_util,
                dl_util: &args.dl_util,
                solver: SolverParams::default(),
            },
        },
    )?;

    let result = oracle::solve_centralized(&s, &utils, &SolverParams::default())?;
    let residual = oracle::kkt_residual(&s, &utils, &result.p_star);

    #[derive(Serialize)]
    struct Certificate<'a> {
        utility_star: f64,
        duality_gap: f64,
        grad_norm: f64,
        max_kkt_residual: f64,
        iterations: usize,
        p_ul_star_w: &'a [f64],
        p_dl_star_w: &'a [f64],
    }
    let cert = Certificate {
        utility_star: result.utility_star,
        duality_gap: result.duality_gap,
        grad_norm: result.grad_norm,
        max_kkt_residual: residual.max_residual,
        iterations: result.iterations,
        p_ul_star_w: &result.p_star.p_ul,
        p_dl_star_w: &result.p_star.p_dl,
    };
    write(
        &args.common.out,
        "certificate.json",
        &(serde_json::to_string_pretty(&cert)? + "\n"),
    )?;
    write(
        &args.common.out,
        "oracle.csv",
        &format!(
            "{}\n{}\n",
            fdpc_core::oracle::OracleResult::csv_header(),
            result.csv_row()
        ),
    )?;
    println!(
        "oracle: utility {:.6}, duality gap {:.3e}, residual {:.3e}",
        result.utility_star, result.duality_gap, residual.max_residual
    );
    Ok(ExitCode::SUCCESS)
}

struct Suite {
    name: &'static str,
    cases: usize,
    failures: usize,
    worst: f64,
}

fn cmd_validate(args: ValidateArgs) -> Result<ExitCode, Error> {
    #[derive(Serialize)]
    struct Params {}
    write_config(
        &args.common.out,
        &ResolvedConfig {
            tool_version: VERSION,
            command: "validate",
            seed: args.common.seed,
            params: Params {},
        },
    )?;

    let seed = args.common.seed;
    let suites = vec![
        validate_gradients(seed),
        validate_certificates(seed),
        validate_grid_agreement(seed),
        validate_protocol()?,
        validate_utility_inverses(),
        validate_determinism(seed)?,
    ];

    match args.common.format {
        Format::Csv => {
            let mut csv = String::from("suite,cases,failures,worst_metric\n");
            for s in &suites {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    s.name, s.cases, s.failures, s.worst
                ));
            }
            write(&args.common.out, "validate.csv", &csv)?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct SuiteOut<'a> {
                suite: &'a str,
                cases: usize,
                failures: usize,
                worst_metric: f64,
            }
            let out: Vec<SuiteOut> = suites
                .iter()
                .map(|s| SuiteOut {
                    suite: s.name,
                    cases: s.cases,
                    failures: s.failures,
                    worst_metric: s.worst,
                })
                .collect();
            write(
                &args.common.out,
                "validate.json",
                &(serde_json::to_string_pretty(&out)? + "\n"),
            )?;
        }
    }

    let total_failures: usize = suites.iter().map(|s| s.failures).sum();
    for s in &suites {
        println!(
            "{:<22} {:>4} cases  {:>2} failures  worst {:.3e}",
            s.name, s.cases, s.failures, s.worst
        );
    }
    if total_failures == 0 {
        println!("all suites pass");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{total_failures} failures");
        Ok(ExitCode::FAILURE)
    }
}

fn validate_gradients(seed: u64) -> Suite {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut cases = 0;
    let mut failures = 0;
    for k in 0..4u64 {
        let params = RandomScenarioParams {
            k_ul: 1 + (k as usize) % 4,
            k_dl: 1 + (k as usize * 2) % 5,
            ..RandomScenarioParams::default()
        };
        let Ok(s) = random_scenario(seed.wrapping_add(40 + k), &params) else {
            continue;
        };
        let utils =
            UtilitySet::uniform(UtilityFn::log(1.0), UtilityFn::log(2.0), s.k_ul(), s.k_dl());
        for _ in 0..3 {
            let x_ul: Vec<f64> = (0..s.k_ul())
                .map(|i| {
                    let lo = s.p0_ul[i].ln();
                    lo + (s.p_ul_max.ln() - lo) * rng.gen_range(0.1..0.9)
                })
                .collect();
            let head: f64 = s.p_dl_tot - s.p0_dl.iter().sum::<f64>();
            let x_dl: Vec<f64> = (0..s.k_dl())
                .map(|j| (s.p0_dl[j] + head * rng.gen_range(0.05..0.8) / s.k_dl() as f64).ln())
                .collect();
            let (g_ul, g_dl) = oracle::hs_gradient(&s, &utils, &x_ul, &x_dl);
            let h = 1e-6;
            for i in 0..s.k_ul() {
                let mut plus = x_ul.clone();
                plus[i] += h;
                let mut minus = x_ul.clone();
                minus[i] -= h;
                let fd = (oracle::hs_objective(&s, &utils, &plus, &x_dl)
                    - oracle::hs_objective(&s, &utils, &minus, &x_dl))
                    / (2.0 * h);
                let err = (g_ul[i] - fd).abs() / g_ul[i].abs().max(fd.abs()).max(1e-3);
                worst = worst.max(err);
                cases += 1;
                if err > 1e-5 {
                    failures += 1;
                }
            }
            for j in 0..s.k_dl() {
                let mut plus = x_dl.clone();
                plus[j] += h;
                let mut minus = x_dl.clone();
                minus[j] -= h;
                let fd = (oracle::hs_objective(&s, &utils, &x_ul, &plus)
                    - oracle::hs_objective(&s, &utils, &x_ul, &minus))
                    / (2.0 * h);
                let err = (g_dl[j] - fd).abs() / g_dl[j].abs().max(fd.abs()).max(1e-3);
                worst = worst.max(err);
                cases += 1;
                if err > 1e-5 {
                    failures += 1;
                }
            }
        }
    }
    Suite {
        name: "gradient_check",
        cases,
        failures,
        worst,
    }
}

fn validate_certificates(seed: u64) -> Suite {
    let mut cases = 0;
    let mut failures = 0;
    let mut worst = 0.0f64;
    for k in 0..4u64 {
        let params = RandomScenarioParams {
            k_ul: 1 + (k as usize) % 3,
            k_dl: 1 + (k as usize * 2) % 4,
            ..RandomScenarioParams::default()
        };
        let Ok(s) = random_scenario(seed.wrapping_add(70 + k), &params) else {
            continue;
        };
        let utils =
            UtilitySet::uniform(UtilityFn::log(1.0), UtilityFn::log(2.0), s.k_ul(), s.k_dl());
        cases += 1;
        match oracle::solve_centralized(&s, &utils, &SolverParams::default()) {
            Ok(r) => {
                let rel_gap = r.duality_gap / r.utility_star.abs().max(1e-12);
                worst = worst.max(rel_gap.abs());
                if r.duality_gap < -1e-9 || rel_gap > 1e-6 {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    Suite {
        name: "oracle_certificates",
        cases,
        failures,
        worst,
    }
}

fn validate_grid_agreement(seed: u64) -> Suite {
    let mut cases = 0;
    let mut failures = 0;
    let mut worst = 0.0f64;
    for k in 0..3u64 {
        let params = RandomScenarioParams {
            k_ul: 1,
            k_dl: 1,
            ..RandomScenarioParams::default()
        };
        let Ok(s) = random_scenario(seed.wrapping_add(90 + k), &params) else {
            continue;
        };
        let utils = UtilitySet::uniform(UtilityFn::log(1.0), UtilityFn::log(2.0), 1, 1);
        cases += 1;
        let solved = oracle::solve_centralized(&s, &utils, &SolverParams::default());
        let grid = oracle::brute_force_grid(&s, &utils, 100);
        match (solved, grid) {
            (Ok(r), Ok((_, u_bf))) => {
                let gap = (r.utility_star - u_bf).abs();
                worst = worst.max(gap);
                if gap > 1e-3 || r.utility_star < u_bf - 1e-9 {
                    failures += 1;
                }
            }
            _ => failures += 1,
        }
    }
    Suite {
        name: "oracle_vs_grid",
        cases,
        failures,
        worst,
    }
}

fn validate_protocol() -> Result<Suite, Error> {
    let preset = presets::converge_preset("fig3-pf")?;
    let (s, utils) = preset.build()?;
    let algo = AlgoParams {
        max_iters: 300,
        ..preset.algo.clone()
    };
    let direct = distpc::run(&s, &utils, &algo, None)?;
    let guarded = onehop::run_guarded(&s, &utils, &algo, None)?;
    let mut worst = guarded.max_protocol_deviation;
    let mut failures = 0;
    let a = &direct.state.trace;
    let b = &guarded.result.state.trace;
    let cases = a.len();
    if a.len() != b.len() || guarded.messages_per_round != s.k_dl() {
        failures += 1;
    }
    for (ra, rb) in a.iter().zip(b.iter()) {
        let rel = (ra.sum_utility - rb.sum_utility).abs() / ra.sum_utility.abs().max(1e-300);
        worst = worst.max(rel);
        if rel > 1e-12 {
            failures += 1;
        }
    }
    Ok(Suite {
        name: "protocol_equivalence",
        cases,
        failures,
        worst,
    })
}

fn validate_utility_inverses() -> Suite {
    let mut cases = 0;
    let mut failures = 0;
    let mut worst = 0.0f64;
    let utilities = [
        UtilityFn::log(1.0),
        UtilityFn::log(2.0),
        UtilityFn::alpha_fair(2.0, 1.0).unwrap(),
        UtilityFn::alpha_fair(2.0, 2.0).unwrap(),
        UtilityFn::alpha_fair(0.5, 1.5).unwrap(),
    ];
    for u in &utilities {
        for k in 1..=40 {
            let r = 0.05 * k as f64 * k as f64;
            let back = u.inv_derivative(u.derivative(r));
            let err = (back - r).abs() / r;
            worst = worst.max(err);
            cases += 1;
            if err > 1e-12 {
                failures += 1;
            }
        }
    }
    Suite {
        name: "utility_inverses",
        cases,
        failures,
        worst,
    }
}

fn validate_determinism(seed: u64) -> Result<Suite, Error> {
    let mut failures = 0;
    // identical seeds give identical scenarios
    let params = RandomScenarioParams::default();
    let a = random_scenario(seed, &params)?;
    let b = random_scenario(seed, &params)?;
    if a.g_i != b.g_i || a.g_ul != b.g_ul {
        failures += 1;
    }
    // identical runs serialize to identical bytes
    let preset = presets::converge_preset("fig3-pf")?;
    let (s, utils) = preset.build()?;
    let algo = AlgoParams {
        max_iters: 120,
        ..preset.algo.clone()
    };
    let r1 = distpc::run(&s, &utils, &algo, None)?;
    let r2 = distpc::run(&s, &utils, &algo, None)?;
    let c1 = fio::trace_to_csv(&r1.state.trace, s.k_ul(), s.k_dl());
    let c2 = fio::trace_to_csv(&r2.state.trace, s.k_ul(), s.k_dl());
    if c1 != c2 {
        failures += 1;
    }
    Ok(Suite {
        name: "determinism",
        cases: 2,
        failures,
        worst: 0.0,
    })
}
