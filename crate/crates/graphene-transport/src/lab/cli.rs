//! Command-line interface: one subcommand per experiment, JSON config plus
//! flag overrides, CSV outputs and a manifest per run.

use crate::error::{Error, Result};
use crate::hopping::Statistic;
use crate::lab::config::{PotentialChoice, RunConfig, RunManifest};
use crate::lab::experiments as exp;
use crate::lab::persist::{self, CsvWriter};
use crate::lab::selftest;
use crate::phase::Potential;
use crate::sampling::{sample_pure_state, SampleMethod};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "graphene-transport",
    about = "Kinetic surface-hopping and reference quantum simulations of electron transport in graphene"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON config file applied over the experiment defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Comma-separated epsilon sweep override.
    #[arg(long, global = true, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,

    /// Kinetic particle count override.
    #[arg(long, global = true)]
    pub particles: Option<usize>,

    /// Quantum wavefunction count override (mixture).
    #[arg(long, global = true)]
    pub wavefunctions: Option<usize>,

    /// Random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Disable the energy-preserving position jump at hops.
    #[arg(long, global = true)]
    pub no_jumps: bool,

    /// Disable band transitions entirely (kinetic pseudo-graphene).
    #[arg(long, global = true)]
    pub no_transitions: bool,

    /// Transfer-rate estimator for the kinetic side.
    #[arg(long, global = true, value_enum)]
    pub estimator: Option<EstimatorArg>,

    /// Skip the quantum reference side where it is optional.
    #[arg(long, global = true)]
    pub no_quantum: bool,

    /// Output directory (default: $GRAPHENE_TRANSPORT_OUT or ./runs).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Write the first N sampled particles to samples.csv.
    #[arg(long, global = true)]
    pub dump_samples: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EstimatorArg {
    Random,
    Expected,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Klein tunneling through the barrier: densities and wavepacket rates.
    Klein,
    /// Transfer-rate table on the harmonic potential (kinetic and quantum).
    TransferTable,
    /// Pseudo-graphene transport error sweep for the two potentials.
    TransportError,
    /// Density errors with and without the position jump.
    JumpAblation,
    /// Initial-data and particle-count convergence studies.
    Sampling,
    /// Mixture of coherent states: densities and transfer rates.
    Mixture,
    /// Run the structural property suite.
    Selftest,
}

impl Command {
    fn experiment_name(&self) -> &'static str {
        match self {
            Command::Klein => "klein",
            Command::TransferTable => "transfer-table",
            Command::TransportError => "transport-error",
            Command::JumpAblation => "jump-ablation",
            Command::Sampling => "sampling",
            Command::Mixture => "mixture",
            Command::Selftest => "selftest",
        }
    }
}

/// Build the effective config: defaults, then file, then flags.
fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default_for(cli.command.experiment_name())?;
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    if let Some(eps) = &cli.eps {
        cfg.eps = eps.clone();
    }
    if let Some(n) = cli.particles {
        cfg.particles = n;
    }
    if let Some(n) = cli.wavefunctions {
        cfg.wavefunctions = n;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.no_jumps {
        cfg.hops.jumps_enabled = false;
    }
    if cli.no_transitions {
        cfg.hops.transitions_enabled = false;
    }
    if let Some(est) = cli.estimator {
        cfg.hops.statistic = match est {
            EstimatorArg::Random => Statistic::RandomRealization,
            EstimatorArg::Expected => Statistic::ExpectedValue,
        };
    }
    if cli.no_quantum {
        cfg.quantum_enabled = false;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if cli.dump_samples.is_some() {
        cfg.dump_samples = cli.dump_samples;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn record_resolved(cfg: &RunConfig, manifest: &mut RunManifest) {
    if cfg.potential == PotentialChoice::Atan
        || cfg.experiment == "transport-error"
    {
        if let Potential::Atan { alpha } = Potential::atan_calibrated() {
            manifest.resolved.alpha = Some(alpha);
        }
    }
    for &eps in &cfg.eps {
        if let Ok(grid) = exp::grid_for(cfg, eps) {
            manifest.resolved.grid_n.push((eps, grid.n));
        }
        manifest.resolved.dt_quantum.push((eps, exp::quantum_dt(cfg, eps)));
    }
}

fn dump_samples_if_requested(cfg: &RunConfig, dir: &std::path::Path) -> Result<()> {
    if let Some(limit) = cfg.dump_samples {
        let eps = cfg.eps.first().copied().unwrap_or(0.064);
        let spec = exp::wavepacket_spec(cfg, eps);
        let parts = sample_pure_state(&spec, limit.max(1), SampleMethod::Qmc, cfg.seed);
        persist::write_particles_csv(&dir.join("samples.csv"), &parts, limit)?;
    }
    Ok(())
}

fn run_klein(cfg: &RunConfig, manifest: &mut RunManifest) -> Result<serde_json::Value> {
    let dir = persist::run_dir(&cfg.out_dir, &cfg.experiment)?;
    let mut table = CsvWriter::create(
        &dir.join("klein_rates.csv"),
        "epsilon,model,wp1,wp2,wp3,residual",
    )?;
    let mut rows = Vec::new();
    for &eps in &cfg.eps {
        let kin = exp::klein_kinetic(cfg, eps)?;
        table.row(&[
            eps,
            0.0,
            kin.rates.wp1,
            kin.rates.wp2,
            kin.rates.wp3,
            kin.rates.residual,
        ])?;
        if kin.rates.residual > 0.02 {
            manifest.warnings.push(format!(
                "klein eps={eps}: unassigned mass {:.4} above 2%",
                kin.rates.residual
            ));
        }
        if kin.stray_weight > 1e-6 {
            manifest.warnings.push(format!(
                "klein eps={eps}: stray snapshot weight {:.3e}",
                kin.stray_weight
            ));
        }
        for snap in &kin.snapshots {
            persist::write_density_csv(
                &dir.join(format!("klein_kinetic_eps{eps}_t{}.csv", snap.t)),
                &snap.plus,
                &snap.minus,
            )?;
        }
        let mut row = json!({
            "eps": eps,
            "kinetic": { "wp1": kin.rates.wp1, "wp2": kin.rates.wp2,
                          "wp3": kin.rates.wp3, "residual": kin.rates.residual },
        });
        if cfg.quantum_enabled {
            let q = exp::klein_quantum(cfg, eps)?;
            table.row(&[eps, 1.0, q.rates.wp1, q.rates.wp2, q.rates.wp3, q.rates.residual])?;
            if q.rates.residual > 0.02 {
                manifest.warnings.push(format!(
                    "klein quantum eps={eps}: window residual {:.4} above 2%",
                    q.rates.residual
                ));
            }
            for snap in &q.snapshots {
                persist::write_density_csv(
                    &dir.join(format!("klein_quantum_eps{eps}_t{}.csv", snap.t)),
                    &snap.plus,
                    &snap.minus,
                )?;
            }
            row["quantum"] = json!({ "wp1": q.rates.wp1, "wp2": q.rates.wp2,
                                      "wp3": q.rates.wp3, "residual": q.rates.residual });
        }
        rows.push(row);
    }
    manifest.resolved.klein_windows = Some((
        exp::KLEIN_WINDOW_LEFT,
        exp::KLEIN_WINDOW_RIGHT,
        exp::KLEIN_SPLIT_TIME,
    ));
    dump_samples_if_requested(cfg, &dir)?;
    Ok(json!({ "rows": rows }))
}

fn run_transfer_table(cfg: &RunConfig) -> Result<serde_json::Value> {
    let dir = persist::run_dir(&cfg.out_dir, &cfg.experiment)?;
    let mut table = CsvWriter::create(
        &dir.join("transfer_table.csv"),
        "epsilon,kinetic_expected,kinetic_random,quantum,vprime_kinetic,vprime_quantum",
    )?;
    let mut rows = Vec::new();
    for &eps in &cfg.eps {
        let row = exp::transfer_table_row(cfg, eps)?;
        table.row(&[
            eps,
            row.kin_expected,
            row.kin_random,
            row.quantum.unwrap_or(f64::NAN),
            row.vprime_kinetic,
            row.vprime_quantum.unwrap_or(f64::NAN),
        ])?;
        rows.push(json!({
            "eps": eps,
            "kinetic_expected": row.kin_expected,
            "kinetic_random": row.kin_random,
            "quantum": row.quantum,
            "vprime_kinetic": row.vprime_kinetic,
            "vprime_quantum": row.vprime_quantum,
        }));
    }
    dump_samples_if_requested(cfg, &dir)?;
    Ok(json!({ "rows": rows }))
}

fn run_transport_error(cfg: &RunConfig) -> Result<serde_json::Value> {
    let dir = persist::run_dir(&cfg.out_dir, &cfg.experiment)?;
    let mut v1 = CsvWriter::create(&dir.join("transport_error_v1.csv"), "epsilon,err")?;
    let mut v2 = CsvWriter::create(&dir.join("transport_error_v2.csv"), "epsilon,err")?;
    let harmonic = Potential::Harmonic;
    let atan = Potential::atan_calibrated();
    let mut pts1 = Vec::new();
    let mut pts2 = Vec::new();
    for &eps in &cfg.eps {
        let e1 = exp::transport_error(cfg, eps, &harmonic)?;
        v1.row(&[eps, e1])?;
        pts1.push((eps, e1));
        let e2 = exp::transport_error(cfg, eps, &atan)?;
        v2.row(&[eps, e2])?;
        pts2.push((eps, e2));
    }
    let slope1 = exp::fit_loglog_slope(&pts1);
    let slope2 = exp::fit_loglog_slope(&pts2);
    let ratio = (pts1
        .iter()
        .zip(&pts2)
        .map(|(a, b)| (b.1 / a.1).ln())
        .sum::<f64>()
        / pts1.len() as f64)
        .exp();
    Ok(json!({
        "v1": pts1.iter().map(|p| json!({"eps": p.0, "err": p.1})).collect::<Vec<_>>(),
        "v2": pts2.iter().map(|p| json!({"eps": p.0, "err": p.1})).collect::<Vec<_>>(),
        "slope_v1": slope1,
        "slope_v2": slope2,
        "ratio_geomean": ratio,
    }))
}

fn run_jump_ablation(cfg: &RunConfig) -> Result<serde_json::Value> {
    let dir = persist::run_dir(&cfg.out_dir, &cfg.experiment)?;
    let mut table = CsvWriter::create(
        &dir.join("jump_ablation.csv"),
        "epsilon,err_plus_jumps,err_minus_jumps,err_plus_nojumps,err_minus_nojumps",
    )?;
    let mut rows = Vec::new();
    for &eps in &cfg.eps {
        let row = exp::ablation_row(cfg, eps)?;
        table.row(&[
            eps,
            row.err_plus_jumps,
            row.err_minus_jumps,
            row.err_plus_nojumps,
            row.err_minus_nojumps,
        ])?;
        rows.push(json!({
            "eps": eps,
            "err_plus_jumps": row.err_plus_jumps,
            "err_minus_jumps": row.err_minus_jumps,
            "err_plus_nojumps": row.err_plus_nojumps,
            "err_minus_nojumps": row.err_minus_nojumps,
        }));
    }
    Ok(json!({ "rows": rows }))
}

fn run_sampling(cfg: &RunConfig) -> Result<serde_json::Value> {
    let dir = persist::run_dir(&cfg.out_dir, &cfg.experiment)?;
    let mut init_csv = CsvWriter::create(&dir.join("init_errors.csv"), "epsilon,err0,err1")?;
    let mut pts0 = Vec::new();
    let mut pts1 = Vec::new();
    for &eps in &cfg.eps {
        let spec = exp::wavepacket_spec(cfg, eps);
        let (err0, err1) = exp::init_error_row(&spec)?;
        init_csv.row(&[eps, err0, err1])?;
        pts0.push((eps, err0));
        pts1.push((eps, err1));
    }

    let mut recon_csv = CsvWriter::create(
        &dir.join("reconstruction_errors.csv"),
        "epsilon,n,err_qmc,err_mc",
    )?;
    let mut recon = Vec::new();
    for &eps in &cfg.sampling_eps {
        let spec = exp::wavepacket_spec(cfg, eps);
        for &n in &cfg.sampling_n {
            let err_qmc = exp::reconstruction_error(&spec, n, SampleMethod::Qmc, cfg.seed)?;
            let err_mc = exp::reconstruction_error(&spec, n, SampleMethod::Mc, cfg.seed)?;
            recon_csv.row(&[eps, n as f64, err_qmc, err_mc])?;
            recon.push(json!({"eps": eps, "n": n, "qmc": err_qmc, "mc": err_mc}));
        }
    }
    dump_samples_if_requested(cfg, &dir)?;
    Ok(json!({
        "slope_err0": exp::fit_loglog_slope(&pts0),
        "slope_err1": exp::fit_loglog_slope(&pts1),
        "init": pts0.iter().zip(&pts1).map(|(a, b)| json!({"eps": a.0, "err0": a.1, "err1": b.1})).collect::<Vec<_>>(),
        "reconstruction": recon,
    }))
}

fn run_mixture(cfg: &RunConfig, manifest: &mut RunManifest) -> Result<serde_json::Value> {
    let dir = persist::run_dir(&cfg.out_dir, &cfg.experiment)?;
    let mut table = CsvWriter::create(
        &dir.join("mixture_rates.csv"),
        "epsilon,kinetic_expected,kinetic_random,quantum",
    )?;
    manifest.resolved.f0_norm_constant = Some(
        crate::sampling::MixtureSpec::new(cfg.mixture_xi2_0, cfg.eps[0]).f0_norm_constant(),
    );
    let mut rows = Vec::new();
    for &eps in &cfg.eps {
        let kin = exp::mixture_kinetic(cfg, eps)?;
        if kin.stray_weight > 1e-6 {
            manifest.warnings.push(format!(
                "mixture eps={eps}: stray snapshot weight {:.3e}",
                kin.stray_weight
            ));
        }
        for snap in &kin.snapshots {
            persist::write_density_csv(
                &dir.join(format!("mixture_kinetic_eps{eps}_t{}.csv", snap.t)),
                &snap.plus,
                &snap.minus,
            )?;
        }
        let quantum = if cfg.quantum_enabled {
            let q = exp::mixture_quantum(cfg, eps)?;
            for snap in &q.snapshots {
                persist::write_density_csv(
                    &dir.join(format!("mixture_quantum_eps{eps}_t{}.csv", snap.t)),
                    &snap.plus,
                    &snap.minus,
                )?;
            }
            Some(q.rate)
        } else {
            None
        };
        table.row(&[
            eps,
            kin.kin_expected,
            kin.kin_random,
            quantum.unwrap_or(f64::NAN),
        ])?;
        rows.push(json!({
            "eps": eps,
            "kinetic_expected": kin.kin_expected,
            "kinetic_random": kin.kin_random,
            "quantum": quantum,
        }));
    }
    Ok(json!({ "rows": rows }))
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(cli: Cli) -> ExitCode {
    if matches!(cli.command, Command::Selftest) {
        return match selftest::run_all() {
            Ok(()) => ExitCode::SUCCESS,
            Err(_) => ExitCode::FAILURE,
        };
    }

    let cfg = match effective_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let mut manifest = RunManifest::new(&cfg);
    record_resolved(&cfg, &mut manifest);

    let result = match cli.command {
        Command::Klein => run_klein(&cfg, &mut manifest),
        Command::TransferTable => run_transfer_table(&cfg),
        Command::TransportError => run_transport_error(&cfg),
        Command::JumpAblation => run_jump_ablation(&cfg),
        Command::Sampling => run_sampling(&cfg),
        Command::Mixture => run_mixture(&cfg, &mut manifest),
        Command::Selftest => unreachable!(),
    };

    let code = match result {
        Ok(summary) => {
            manifest.summary = summary;
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            manifest.failed = true;
            manifest.error = Some(e.to_string());
            match e {
                Error::Config(_) | Error::Io(_) | Error::Json(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    };

    if let Ok(dir) = persist::run_dir(&cfg.out_dir, &cfg.experiment) {
        if let Err(e) = persist::write_manifest(&dir, &manifest) {
            eprintln!("error writing manifest: {e}");
            return ExitCode::FAILURE;
        }
    }
    code
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::parse_from([
            "graphene-transport",
            "transfer-table",
            "--eps",
            "0.032,0.064",
            "--particles",
            "1234",
            "--seed",
            "9",
            "--no-jumps",
            "--estimator",
            "expected",
        ]);
        let cfg = effective_config(&cli).unwrap();
        assert_eq!(cfg.eps, vec![0.032, 0.064]);
        assert_eq!(cfg.particles, 1234);
        assert_eq!(cfg.seed, 9);
        assert!(!cfg.hops.jumps_enabled);
        assert_eq!(cfg.hops.statistic, Statistic::ExpectedValue);
    }

    #[test]
    fn missing_config_file_is_a_config_error() {
        let cli = Cli::parse_from([
            "graphene-transport",
            "transfer-table",
            "--config",
            "/no/such/file.json",
        ]);
        assert!(matches!(effective_config(&cli), Err(Error::Io(_))));
    }
}
