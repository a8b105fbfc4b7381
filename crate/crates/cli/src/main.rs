//! `distlab`: command-line front end for the distancing-game laboratory.
//!
//! Exit codes: 0 success, 2 usage error, 3 domain error, 4 I/O error.

mod manifest;

use clap::{Args, Parser, Subcommand, ValueEnum};
use distlab_core::cohort::{
    gen_subjects, propensity, Calibration, MomentTargets, TreatmentContext,
};
use distlab_core::convergence::cohort_convergence_table;
use distlab_core::econ::{
    average_marginal_effects, build_panel, fit_binary_mle, fit_lpm_cluster, fit_re_lpm,
    normal_cdf, read_panel_csv, subgroup_effects, write_panel_csv, ClusterCorrection, FitResult,
    Link, PanelDataset, PanelOptions,
};
use distlab_core::equilibrium::{analyze, hypothesis_report, SolveOptions};
use distlab_core::graph::{make_environment, EnvironmentKind};
use distlab_core::params::GameParams;
use distlab_core::session::{
    read_log, run_session, write_log, BotPolicy, BotSpec, Intervention, SessionConfig, SessionLog,
    AGENTS_PER_GROUP,
};
use manifest::{sha256_file, RunManifest};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "distlab", version, about = "Distancing-game laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EnvArg {
    Complete,
    Star,
}

impl From<EnvArg> for EnvironmentKind {
    fn from(e: EnvArg) -> Self {
        match e {
            EnvArg::Complete => EnvironmentKind::Homogeneous,
            EnvArg::Star => EnvironmentKind::Superspreader,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InterventionArg {
    Fine,
    Nudge,
}

impl From<InterventionArg> for Intervention {
    fn from(i: InterventionArg) -> Self {
        match i {
            InterventionArg::Fine => Intervention::Fine,
            InterventionArg::Nudge => Intervention::Nudge,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Lpm,
    Re,
    Logit,
    Probit,
}

#[derive(Args)]
struct OutArg {
    /// Output directory; all files are written under it.
    #[arg(long, default_value = "distlab-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the one-shot game: equilibria, optima, fines, hypotheses.
    Solve {
        #[arg(long, value_enum)]
        env: EnvArg,
        /// Number of positions.
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(usize))]
        n: usize,
        /// Fine in points applied to non-distancing.
        #[arg(long, default_value_t = 0.0)]
        fine: f64,
        /// Informational nudge flag (never enters payoffs).
        #[arg(long)]
        nudge: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run bot sessions and write one JSON-lines log per group.
    Simulate {
        #[arg(long, value_enum)]
        env: EnvArg,
        #[arg(long, value_enum)]
        intervention: InterventionArg,
        #[arg(long, default_value_t = 1)]
        groups: usize,
        #[arg(long, default_value_t = 15.0)]
        fine: f64,
        #[arg(long, default_value_t = 20)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Convergence-share table over a directory of session logs.
    Converge {
        /// Directory of .jsonl session logs.
        #[arg(long, value_name = "DIR")]
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        a: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Fit a regression on a panel CSV.
    Estimate {
        /// Panel CSV produced by `reproduce` or the library writer.
        #[arg(long, value_name = "FILE")]
        panel: PathBuf,
        #[arg(long, value_enum, default_value = "lpm")]
        model: ModelArg,
        /// Cluster dimension; only "group" is supported.
        #[arg(long, default_value = "group")]
        cluster: String,
        /// Use the CR0 (no small-sample factor) cluster covariance.
        #[arg(long)]
        cr0: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Generate a synthetic subject cohort.
    Cohort {
        #[arg(long, default_value_t = 414)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write this named calibration as key=value text.
        #[arg(long)]
        calibration: Option<String>,
        #[command(flatten)]
        out: OutArg,
    },
    /// City reference table and optional OxCGRT index averages.
    Geo {
        /// OxCGRT-style CSV (RegionName, Date, GovernmentResponseIndex).
        #[arg(long, value_name = "FILE")]
        oxcgrt: Option<PathBuf>,
        /// Averaging window start, YYYY-MM-DD (defaults to each series' span).
        #[arg(long)]
        start: Option<String>,
        /// Averaging window end, YYYY-MM-DD.
        #[arg(long)]
        end: Option<String>,
        #[command(flatten)]
        out: OutArg,
    },
    /// End-to-end pipeline: cohort, sessions, panel, fits, convergence.
    Reproduce {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Groups per design cell (2 environments x 2 interventions).
        #[arg(long, default_value_t = 21)]
        groups: usize,
        #[arg(long, default_value_t = 10)]
        drop_first: usize,
        #[arg(long, default_value_t = 15.0)]
        fine: f64,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        a: usize,
        /// Calibration column seeding the bot propensities (m1, m2, m3).
        #[arg(long, default_value = "m2")]
        calibration: String,
        #[command(flatten)]
        out: OutArg,
    },
}

struct CliError {
    code: i32,
    message: String,
}

type CliResult<T> = Result<T, CliError>;

fn usage_err(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

impl From<distlab_core::error::Error> for CliError {
    fn from(e: distlab_core::error::Error) -> Self {
        use distlab_core::error::Error;
        let code = match &e {
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 4,
            _ => 3,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            code: 4,
            message: e.to_string(),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

fn threads() -> usize {
    std::env::var("LAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|p| p.get())
                .unwrap_or(1)
        })
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Solve {
            env,
            n,
            fine,
            nudge,
            out,
        } => cmd_solve(env, n, fine, nudge, &out.out),
        Command::Simulate {
            env,
            intervention,
            groups,
            fine,
            rounds,
            seed,
            out,
        } => cmd_simulate(env, intervention, groups, fine, rounds, seed, &out.out),
        Command::Converge { input, k, a, out } => cmd_converge(&input, k, a, &out.out),
        Command::Estimate {
            panel,
            model,
            cluster,
            cr0,
            out,
        } => cmd_estimate(&panel, model, &cluster, cr0, &out.out),
        Command::Cohort {
            n,
            seed,
            calibration,
            out,
        } => cmd_cohort(n, seed, calibration.as_deref(), &out.out),
        Command::Geo {
            oxcgrt,
            start,
            end,
            out,
        } => cmd_geo(oxcgrt.as_deref(), start.as_deref(), end.as_deref(), &out.out),
        Command::Reproduce {
            seed,
            groups,
            drop_first,
            fine,
            k,
            a,
            calibration,
            out,
        } => cmd_reproduce(seed, groups, drop_first, fine, k, a, &calibration, &out.out),
    }
}

fn ensure_out(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn flag_map(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Significance stars at the 1/5/10 percent levels (two-sided normal).
fn stars(beta: f64, se: f64) -> &'static str {
    if se <= 0.0 {
        return "";
    }
    let p = 2.0 * (1.0 - normal_cdf((beta / se).abs()));
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn write_fit_rows<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    model: &str,
    fit: &FitResult,
) -> CliResult<()> {
    for (i, name) in fit.names.iter().enumerate() {
        w.write_record([
            model,
            name,
            &format!("{}", fit.beta[i]),
            &format!("{}", fit.se[i]),
            stars(fit.beta[i], fit.se[i]),
            &fit.n_obs.to_string(),
            &fit.n_clusters.to_string(),
        ])
        .map_err(distlab_core::error::Error::from)?;
    }
    Ok(())
}

fn cmd_solve(env: EnvArg, n: usize, fine: f64, nudge: bool, out: &Path) -> CliResult<()> {
    if n == 0 || n > 16 {
        return Err(usage_err(format!("--n {n} outside the supported range [1, 16]")));
    }
    if fine < 0.0 {
        return Err(usage_err("--fine must be non-negative"));
    }
    ensure_out(out)?;
    let kind: EnvironmentKind = env.into();
    let net = make_environment(kind, n)?;
    let mut params: GameParams<f64> = GameParams::default_calibration();
    params.n = n;
    params = params.with_fine(fine).with_nudge(nudge);
    let report = analyze(&net, &params, &SolveOptions::default())?;

    let report_path = out.join("equilibrium_report.csv");
    {
        let mut w = csv::Writer::from_path(&report_path)
            .map_err(distlab_core::error::Error::from)?;
        w.write_record(["profile", "bits", "is_nash", "is_optimal", "welfare"])
            .map_err(distlab_core::error::Error::from)?;
        for (profile, is_nash, welfare) in &report.welfare {
            let is_opt = report.optimal_profiles.contains(profile);
            w.write_record([
                &profile.to_string(),
                &profile.bits().to_string(),
                &u8::from(*is_nash).to_string(),
                &u8::from(is_opt).to_string(),
                &format!("{welfare}"),
            ])
            .map_err(distlab_core::error::Error::from)?;
        }
        w.flush()?;
    }

    let hyp = hypothesis_report(&params)?;
    let hyp_path = out.join("hypothesis_report.json");
    std::fs::write(
        &hyp_path,
        serde_json::to_string_pretty(&hyp).map_err(distlab_core::error::Error::from)?,
    )?;

    let nash_sets: Vec<String> = report
        .nash_profiles
        .iter()
        .map(|p| format!("{{{}}}", p.members().map(|i| i.to_string()).collect::<Vec<_>>().join(",")))
        .collect();
    match report.predicted_uptake {
        Some(u) => println!(
            "env {} n {n} fine {fine}: {} equilibria, uptake {u}",
            kind.label(),
            report.nash_profiles.len()
        ),
        None => println!(
            "env {} n {n} fine {fine}: {} equilibria of mixed sizes",
            kind.label(),
            report.nash_profiles.len()
        ),
    }
    println!("NE sets: {}", nash_sets.join(" "));

    RunManifest::new(
        "solve",
        flag_map(&[
            ("env", kind.label().to_string()),
            ("n", n.to_string()),
            ("fine", fine.to_string()),
            ("nudge", nudge.to_string()),
        ]),
        None,
        BTreeMap::new(),
        vec!["equilibrium_report.csv".into(), "hypothesis_report.json".into()],
    )
    .write(out)?;
    Ok(())
}

/// Splitmix64-style per-group seed derivation.
fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `configs[i]` with `policies[i]` across a bounded thread pool,
/// preserving input order in the result.
fn run_sessions_parallel(
    jobs: Vec<(SessionConfig, Vec<BotSpec>)>,
) -> CliResult<Vec<SessionLog>> {
    let cap = threads().max(1);
    let n = jobs.len();
    let mut logs: Vec<Option<SessionLog>> = (0..n).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<distlab_core::error::Result<SessionLog>>>> =
        (0..n).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..cap.min(n.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let (config, policies) = &jobs[i];
                *slots[i].lock().unwrap() = Some(run_session(config, policies));
            });
        }
    });
    for (i, slot) in slots.into_iter().enumerate() {
        let result = slot.into_inner().unwrap().expect("worker completed");
        logs[i] = Some(result?);
    }
    Ok(logs.into_iter().map(|l| l.unwrap()).collect())
}

fn default_propensities(env: EnvironmentKind, intervention: Intervention, fine: f64) -> (f64, f64) {
    // Model-consistent defaults: predicted equilibrium uptake of the part's
    // game (the nudge does not move predictions).
    let net = make_environment(env, 5).expect("n=5 in range");
    let base: GameParams<f64> = GameParams::default_calibration();
    let baseline = distlab_core::equilibrium::predicted_uptake(&net, &base).unwrap_or(0.5);
    let part2 = match intervention {
        Intervention::Fine => {
            distlab_core::equilibrium::predicted_uptake(&net, &base.with_fine(fine))
                .unwrap_or(baseline)
        }
        Intervention::Nudge => baseline,
    };
    (baseline, part2)
}

fn cmd_simulate(
    env: EnvArg,
    intervention: InterventionArg,
    groups: usize,
    fine: f64,
    rounds: usize,
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    if groups == 0 {
        return Err(usage_err("--groups must be positive"));
    }
    ensure_out(out)?;
    let kind: EnvironmentKind = env.into();
    let arm: Intervention = intervention.into();
    let (p1, p2) = default_propensities(kind, arm, fine);
    let jobs: Vec<(SessionConfig, Vec<BotSpec>)> = (0..groups)
        .map(|g| {
            let mut config = SessionConfig::new(kind, arm, mix_seed(seed, g as u64));
            config.rounds_per_part = rounds;
            config.fine_level = fine;
            let policies = vec![
                BotSpec::new(BotPolicy::Propensity {
                    baseline: p1,
                    intervention: p2,
                });
                AGENTS_PER_GROUP
            ];
            (config, policies)
        })
        .collect();
    let logs = run_sessions_parallel(jobs)?;
    let mut outputs = Vec::new();
    for (g, log) in logs.iter().enumerate() {
        let name = format!("session_{g:03}.jsonl");
        let file = std::fs::File::create(out.join(&name))?;
        write_log(log, std::io::BufWriter::new(file))?;
        outputs.push(name);
    }
    println!("wrote {} session logs to {}", logs.len(), out.display());
    RunManifest::new(
        "simulate",
        flag_map(&[
            ("env", kind.label().to_string()),
            ("intervention", format!("{arm:?}").to_lowercase()),
            ("groups", groups.to_string()),
            ("fine", fine.to_string()),
            ("rounds", rounds.to_string()),
        ]),
        Some(seed),
        BTreeMap::new(),
        outputs,
    )
    .write(out)?;
    Ok(())
}

fn read_log_dir(input: &Path) -> CliResult<(Vec<SessionLog>, BTreeMap<String, String>)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(usage_err(format!(
            "no .jsonl session logs in {}",
            input.display()
        )));
    }
    let mut logs = Vec::new();
    let mut hashes = BTreeMap::new();
    for path in &paths {
        let file = std::fs::File::open(path)?;
        logs.push(read_log(std::io::BufReader::new(file))?);
        hashes.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            sha256_file(path)?,
        );
    }
    Ok((logs, hashes))
}

fn write_convergence_csv(
    rows: &[distlab_core::convergence::ConvergenceRow],
    path: &Path,
) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(distlab_core::error::Error::from)?;
    w.write_record([
        "environment",
        "intervention",
        "part",
        "n_subjects",
        "pct_converged",
        "first_round_above_70pct",
        "pct_converged_by_round_11",
    ])
    .map_err(distlab_core::error::Error::from)?;
    for row in rows {
        w.write_record([
            row.environment.label(),
            &format!("{:?}", row.intervention).to_lowercase(),
            &format!("{:?}", row.part).to_lowercase(),
            &row.n_subjects.to_string(),
            &format!("{}", row.pct_converged),
            &row.first_round_above_70pct
                .map(|r| r.to_string())
                .unwrap_or_default(),
            &format!("{}", row.pct_converged_by_round_11),
        ])
        .map_err(distlab_core::error::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_converge(input: &Path, k: usize, a: usize, out: &Path) -> CliResult<()> {
    if k == 0 {
        return Err(usage_err("--k must be positive"));
    }
    ensure_out(out)?;
    let (logs, hashes) = read_log_dir(input)?;
    let rows = cohort_convergence_table(&logs, k, a)?;
    write_convergence_csv(&rows, &out.join("convergence.csv"))?;
    println!("{} strata written to convergence.csv", rows.len());
    RunManifest::new(
        "converge",
        flag_map(&[
            ("input", input.display().to_string()),
            ("k", k.to_string()),
            ("a", a.to_string()),
        ]),
        None,
        hashes,
        vec!["convergence.csv".into()],
    )
    .write(out)?;
    Ok(())
}

/// Covariates present in the panel, in canonical order.
fn panel_formula(data: &PanelDataset) -> Vec<&str> {
    data.covariate_names.iter().map(String::as_str).collect()
}

fn cmd_estimate(
    panel: &Path,
    model: ModelArg,
    cluster: &str,
    cr0: bool,
    out: &Path,
) -> CliResult<()> {
    if cluster != "group" {
        return Err(usage_err(format!(
            "unsupported --cluster {cluster:?}; only \"group\" is available"
        )));
    }
    ensure_out(out)?;
    let file = std::fs::File::open(panel)?;
    let data = read_panel_csv(std::io::BufReader::new(file))?;
    let formula = panel_formula(&data);
    let correction = if cr0 {
        ClusterCorrection::Cr0
    } else {
        ClusterCorrection::Cr1
    };
    let (tag, fit) = match model {
        ModelArg::Lpm => ("lpm", fit_lpm_cluster(&data, &formula, correction)?),
        ModelArg::Re => ("re", fit_re_lpm(&data, &formula, correction)?),
        ModelArg::Logit => ("logit", fit_binary_mle(&data, &formula, Link::Logit)?),
        ModelArg::Probit => ("probit", fit_binary_mle(&data, &formula, Link::Probit)?),
    };
    {
        let mut w = csv::Writer::from_path(out.join("regression.csv"))
            .map_err(distlab_core::error::Error::from)?;
        w.write_record(["model", "term", "estimate", "se", "stars", "n_obs", "n_clusters"])
            .map_err(distlab_core::error::Error::from)?;
        write_fit_rows(&mut w, tag, &fit)?;
        w.flush()?;
    }
    let mut outputs = vec!["regression.csv".to_string()];
    if matches!(model, ModelArg::Logit | ModelArg::Probit) {
        let ames = average_marginal_effects(&fit, &data, &formula)?;
        let mut w = csv::Writer::from_path(out.join("marginal_effects.csv"))
            .map_err(distlab_core::error::Error::from)?;
        w.write_record(["model", "term", "ame", "se"])
            .map_err(distlab_core::error::Error::from)?;
        for me in &ames {
            w.write_record([tag, &me.name, &format!("{}", me.ame), &format!("{}", me.se)])
                .map_err(distlab_core::error::Error::from)?;
        }
        w.flush()?;
        outputs.push("marginal_effects.csv".into());
    }
    println!(
        "{tag}: {} obs, {} clusters, {} terms",
        fit.n_obs,
        fit.n_clusters,
        fit.names.len()
    );
    RunManifest::new(
        "estimate",
        flag_map(&[
            ("panel", panel.display().to_string()),
            ("model", tag.to_string()),
            ("cluster", cluster.to_string()),
            ("cr0", cr0.to_string()),
        ]),
        None,
        BTreeMap::from([(
            panel.file_name().unwrap().to_string_lossy().into_owned(),
            sha256_file(panel)?,
        )]),
        outputs,
    )
    .write(out)?;
    Ok(())
}

fn cmd_cohort(n: usize, seed: u64, calibration: Option<&str>, out: &Path) -> CliResult<()> {
    ensure_out(out)?;
    let subjects = gen_subjects(n, &MomentTargets::default(), seed)?;
    {
        let file = std::fs::File::create(out.join("cohort.csv"))?;
        distlab_core::cohort::write_cohort_csv(&subjects, std::io::BufWriter::new(file))?;
    }
    let mut outputs = vec!["cohort.csv".to_string()];
    if let Some(name) = calibration {
        let cal = Calibration::by_name(name)?;
        std::fs::write(out.join("calibration.txt"), cal.to_text())?;
        outputs.push("calibration.txt".into());
    }
    println!("wrote {n} subjects to cohort.csv");
    RunManifest::new(
        "cohort",
        flag_map(&[
            ("n", n.to_string()),
            (
                "calibration",
                calibration.unwrap_or_default().to_string(),
            ),
        ]),
        Some(seed),
        BTreeMap::new(),
        outputs,
    )
    .write(out)?;
    Ok(())
}

fn parse_date(s: &str, flag: &str) -> CliResult<chrono::NaiveDate> {
    chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| usage_err(format!("--{flag} {s:?} is not a YYYY-MM-DD date")))
}

fn cmd_geo(
    oxcgrt: Option<&Path>,
    start: Option<&str>,
    end: Option<&str>,
    out: &Path,
) -> CliResult<()> {
    ensure_out(out)?;
    let cities = distlab_core::geo::builtin_cities();
    let wuhan = distlab_core::geo::wuhan();
    {
        let mut w = csv::Writer::from_path(out.join("cities.csv"))
            .map_err(distlab_core::error::Error::from)?;
        w.write_record(["name", "province", "hubei", "lat", "lon", "distance_wuhan_km"])
            .map_err(distlab_core::error::Error::from)?;
        for city in &cities {
            let point = distlab_core::geo::GeoPoint::new(city.lat, city.lon)?;
            let km = distlab_core::geo::haversine_km(point, wuhan);
            w.write_record([
                city.name,
                city.province,
                &u8::from(city.hubei).to_string(),
                &format!("{}", city.lat),
                &format!("{}", city.lon),
                &format!("{}", km),
            ])
            .map_err(distlab_core::error::Error::from)?;
        }
        w.flush()?;
    }
    let mut outputs = vec!["cities.csv".to_string()];
    let mut hashes = BTreeMap::new();
    if let Some(path) = oxcgrt {
        let file = std::fs::File::open(path)?;
        let report = distlab_core::geo::parse_oxcgrt(std::io::BufReader::new(file))?;
        hashes.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            sha256_file(path)?,
        );
        let mut w = csv::Writer::from_path(out.join("oxcgrt_averages.csv"))
            .map_err(distlab_core::error::Error::from)?;
        w.write_record(["region", "start", "end", "average_index", "n_days"])
            .map_err(distlab_core::error::Error::from)?;
        for series in &report.series {
            let lo = match start {
                Some(s) => parse_date(s, "start")?,
                None => series.points.first().map(|(d, _)| *d).unwrap(),
            };
            let hi = match end {
                Some(s) => parse_date(s, "end")?,
                None => series.points.last().map(|(d, _)| *d).unwrap(),
            };
            let avg = distlab_core::geo::average_index(series, lo, hi)?;
            let n_days = series
                .points
                .iter()
                .filter(|(d, _)| *d >= lo && *d <= hi)
                .count();
            w.write_record([
                series.region.as_str(),
                &lo.to_string(),
                &hi.to_string(),
                &format!("{avg}"),
                &n_days.to_string(),
            ])
            .map_err(distlab_core::error::Error::from)?;
        }
        w.flush()?;
        if !report.rejected.is_empty() {
            eprintln!("rejected {} malformed rows", report.rejected.len());
        }
        outputs.push("oxcgrt_averages.csv".into());
    }
    RunManifest::new(
        "geo",
        flag_map(&[
            (
                "oxcgrt",
                oxcgrt.map(|p| p.display().to_string()).unwrap_or_default(),
            ),
            ("start", start.unwrap_or_default().to_string()),
            ("end", end.unwrap_or_default().to_string()),
        ]),
        None,
        hashes,
        outputs,
    )
    .write(out)?;
    Ok(())
}

/// Design cells in a fixed order; group g belongs to cell g / groups_per_cell.
const CELLS: [(EnvironmentKind, Intervention); 4] = [
    (EnvironmentKind::Homogeneous, Intervention::Fine),
    (EnvironmentKind::Homogeneous, Intervention::Nudge),
    (EnvironmentKind::Superspreader, Intervention::Fine),
    (EnvironmentKind::Superspreader, Intervention::Nudge),
];

#[allow(clippy::too_many_arguments)]
fn cmd_reproduce(
    seed: u64,
    groups: usize,
    drop_first: usize,
    fine: f64,
    k: usize,
    a: usize,
    calibration: &str,
    out: &Path,
) -> CliResult<()> {
    if groups == 0 {
        return Err(usage_err("--groups must be positive"));
    }
    if k == 0 {
        return Err(usage_err("--k must be positive"));
    }
    ensure_out(out)?;
    std::fs::create_dir_all(out.join("sessions"))?;
    let cal = Calibration::by_name(calibration)?;
    let n_groups = CELLS.len() * groups;
    let n_subjects = n_groups * AGENTS_PER_GROUP;

    // 1. Cohort.
    let subjects = gen_subjects(n_subjects, &MomentTargets::default(), seed)?;
    {
        let file = std::fs::File::create(out.join("cohort.csv"))?;
        distlab_core::cohort::write_cohort_csv(&subjects, std::io::BufWriter::new(file))?;
    }
    std::fs::write(out.join("calibration.txt"), cal.to_text())?;

    // 2. Sessions: subject covariates drive each bot's distancing propensity.
    let mut jobs = Vec::with_capacity(n_groups);
    for (cell_idx, (env, arm)) in CELLS.iter().enumerate() {
        for j in 0..groups {
            let g = cell_idx * groups + j;
            let mut config = SessionConfig::new(*env, *arm, mix_seed(seed, g as u64));
            config.fine_level = fine;
            let superspreader = *env == EnvironmentKind::Superspreader;
            let policies: Vec<BotSpec> = (0..AGENTS_PER_GROUP)
                .map(|agent| {
                    let subject = &subjects[g * AGENTS_PER_GROUP + agent];
                    let base_ctx = TreatmentContext {
                        fine: false,
                        nudge: false,
                        superspreader,
                    };
                    let part2_ctx = TreatmentContext {
                        fine: *arm == Intervention::Fine,
                        nudge: *arm == Intervention::Nudge,
                        superspreader,
                    };
                    Ok(BotSpec::new(BotPolicy::Propensity {
                        baseline: propensity(subject, &base_ctx, &cal)?,
                        intervention: propensity(subject, &part2_ctx, &cal)?,
                    }))
                })
                .collect::<distlab_core::error::Result<_>>()?;
            jobs.push((config, policies));
        }
    }
    let logs = run_sessions_parallel(jobs)?;
    let mut outputs = vec!["cohort.csv".to_string(), "calibration.txt".to_string()];
    for (g, log) in logs.iter().enumerate() {
        let name = format!("sessions/session_{g:03}.jsonl");
        let file = std::fs::File::create(out.join(&name))?;
        write_log(log, std::io::BufWriter::new(file))?;
        outputs.push(name);
    }

    // 3. Panels.
    let panel = build_panel(
        &logs,
        &subjects,
        &PanelOptions {
            drop_first,
            role_dummies: false,
        },
    )?;
    let panel_all = build_panel(
        &logs,
        &subjects,
        &PanelOptions {
            drop_first: 0,
            role_dummies: false,
        },
    )?;
    let panel_roles = build_panel(
        &logs,
        &subjects,
        &PanelOptions {
            drop_first,
            role_dummies: true,
        },
    )?;
    {
        let file = std::fs::File::create(out.join("panel.csv"))?;
        write_panel_csv(&panel, std::io::BufWriter::new(file))?;
    }
    outputs.push("panel.csv".into());

    // 4. Specification ladder F1-F6.
    let treatments = ["fine", "nudge", "superspreader"];
    let demographics = ["female", "age", "education", "employed", "religious"];
    let preferences = ["risk", "prosocial"];
    let full: Vec<&str> = treatments
        .iter()
        .chain(&demographics)
        .chain(&preferences)
        .chain(&["hubei"])
        .copied()
        .collect();
    let roles_full: Vec<&str> = ["fine", "nudge", "hub", "recipient"]
        .iter()
        .chain(&demographics)
        .chain(&preferences)
        .chain(&["hubei"])
        .copied()
        .collect();
    let f2: Vec<&str> = treatments.iter().chain(&demographics).copied().collect();
    let f3: Vec<&str> = f2.iter().chain(&preferences).copied().collect();
    let specs: [(&str, &PanelDataset, &[&str]); 6] = [
        ("f1", &panel, &treatments),
        ("f2", &panel, &f2),
        ("f3", &panel, &f3),
        ("f4", &panel, &full),
        ("f5", &panel_all, &full),
        ("f6", &panel_roles, &roles_full),
    ];
    {
        let mut w = csv::Writer::from_path(out.join("regressions.csv"))
            .map_err(distlab_core::error::Error::from)?;
        w.write_record(["model", "term", "estimate", "se", "stars", "n_obs", "n_clusters"])
            .map_err(distlab_core::error::Error::from)?;
        for (name, data, formula) in specs {
            let fit = fit_lpm_cluster(data, formula, ClusterCorrection::Cr1)?;
            write_fit_rows(&mut w, name, &fit)?;
        }
        w.flush()?;
    }
    outputs.push("regressions.csv".into());

    // 5. Subgroup interactions on the full specification.
    {
        let mut w = csv::Writer::from_path(out.join("subgroups.csv"))
            .map_err(distlab_core::error::Error::from)?;
        w.write_record(["split", "group", "term", "ame", "se"])
            .map_err(distlab_core::error::Error::from)?;
        for split in ["hubei", "female", "prosocial"] {
            let sub = subgroup_effects(&panel, &full, split, ClusterCorrection::Cr1)?;
            for (label, effects) in [("0", &sub.group0), ("1", &sub.group1)] {
                for me in effects {
                    w.write_record([
                        split,
                        label,
                        &me.name,
                        &format!("{}", me.ame),
                        &format!("{}", me.se),
                    ])
                    .map_err(distlab_core::error::Error::from)?;
                }
            }
        }
        w.flush()?;
    }
    outputs.push("subgroups.csv".into());

    // 6. Convergence table.
    let rows = cohort_convergence_table(&logs, k, a)?;
    write_convergence_csv(&rows, &out.join("convergence.csv"))?;
    outputs.push("convergence.csv".into());

    // 7. Summary for quick inspection.
    let f4 = fit_lpm_cluster(&panel, &full, ClusterCorrection::Cr1)?;
    let (hubei_beta, hubei_se) = f4.coefficient("hubei")?;
    let summary = serde_json::json!({
        "groups": n_groups,
        "subjects": n_subjects,
        "panel_rows": panel.rows.len(),
        "panel_rows_all": panel_all.rows.len(),
        "hubei_estimate": hubei_beta,
        "hubei_se": hubei_se,
        "calibration_hubei": cal.coeffs.get("hubei"),
    });
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary).map_err(distlab_core::error::Error::from)?,
    )?;
    outputs.push("summary.json".into());
    println!(
        "reproduce: {} rows, hubei {hubei_beta:.4} (se {hubei_se:.4})",
        panel.rows.len()
    );
    let mut stdout = std::io::stdout();
    stdout.flush().ok();

    RunManifest::new(
        "reproduce",
        flag_map(&[
            ("groups", groups.to_string()),
            ("drop_first", drop_first.to_string()),
            ("fine", fine.to_string()),
            ("k", k.to_string()),
            ("a", a.to_string()),
            ("calibration", calibration.to_string()),
        ]),
        Some(seed),
        BTreeMap::new(),
        outputs,
    )
    .write(out)?;
    Ok(())
}
