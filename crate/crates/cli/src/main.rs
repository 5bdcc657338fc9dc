//! Command-line driver: simulate datasets, fit them with one of the three
//! selection algorithms, emit plot-ready report tables, and run a quick
//! self-test of the numerical core.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 completed with warnings.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DVector;

use bayesinv::basis::{BasisSet, DesignMatrices, Family, FrequencyGrid, RadialGrid, RadialRule};
use bayesinv::hyper::default_lambda_grid;
use bayesinv::linear::RidgeProblem;
use bayesinv::scattering::{default_sigma, fermi_dataset, synthesize, FermiModel};
use bayesinv::selection::{
    joint_map_scan, marginal_map_pipeline, AlternatingOptions, JointAlgorithm, MarginalConfig,
};

use bayesinv_cli::bundle::{
    self, describe, DatasetFiles, DatasetMeta, ResultBundle, RunMeta, ScanRow, SelectionSummary,
    TableFiles, TraceRow,
};
use bayesinv_cli::config::{AlgorithmKind, ProblemKind, RunConfig};
use bayesinv_cli::CliError;

#[derive(Parser)]
#[command(
    name = "bayesinv",
    version,
    about = "Bayesian inversion of form-factor data: simulate, fit, report"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset (CSV + JSON sidecar) from the configured problem.
    Simulate {
        #[arg(long, env = "BAYESINV_CONFIG")]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long, env = "BAYESINV_SEED")]
        seed: Option<u64>,
        /// Override the config output directory.
        #[arg(long, env = "BAYESINV_OUT")]
        out: Option<PathBuf>,
    },
    /// Fit a dataset with the configured selection algorithm.
    Fit {
        #[arg(long, env = "BAYESINV_CONFIG")]
        config: PathBuf,
        /// Directory holding dataset.csv / dataset.json (defaults to the
        /// output directory, where `simulate` put them).
        #[arg(long, env = "BAYESINV_DATA")]
        data: Option<PathBuf>,
        #[arg(long, env = "BAYESINV_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "BAYESINV_OUT")]
        out: Option<PathBuf>,
    },
    /// Emit long-format figure tables from a saved result bundle.
    Report {
        /// Directory holding a fit's output.
        #[arg(long, env = "BAYESINV_BUNDLE")]
        bundle: PathBuf,
        /// Output directory for the figure tables (default: `<bundle>/figures`).
        #[arg(long, env = "BAYESINV_OUT")]
        out: Option<PathBuf>,
    },
    /// Run fast internal consistency checks and exit.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { config, seed, out } => cmd_simulate(&config, seed, out),
        Command::Fit {
            config,
            data,
            seed,
            out,
        } => cmd_fit(&config, data, seed, out),
        Command::Report { bundle, out } => cmd_report(&bundle, out),
        Command::Selftest => cmd_selftest(),
    };
    match outcome {
        Ok(warnings) if warnings.is_empty() => ExitCode::SUCCESS,
        Ok(warnings) => {
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn load_config(
    path: &std::path::Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(out) = out {
        config.out = out;
    }
    Ok(config)
}

fn cmd_simulate(
    path: &std::path::Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<Vec<String>, CliError> {
    let config = load_config(path, seed, out)?;
    let files = build_dataset(&config)?;
    files.save(&config.out)?;
    println!(
        "wrote {} rows to {}",
        files.q.len(),
        config.out.join("dataset.csv").display()
    );
    Ok(Vec::new())
}

fn build_dataset(config: &RunConfig) -> Result<DatasetFiles, CliError> {
    let hash = config.semantic_hash();
    match config.problem {
        ProblemKind::Synthetic => {
            let synth = config.synthetic.clone().unwrap_or_default();
            let family = Family::from_index(synth.family).expect("validated");
            let grid = RadialGrid::new(config.grid.n, config.grid.r_c)
                .map_err(|e| CliError::config(e.to_string()))?;
            let freqs = FrequencyGrid::ladder(config.grid.m, config.grid.r_c)
                .map_err(|e| CliError::config(e.to_string()))?;
            let coefficients = synth.coefficients.clone().map(DVector::from_vec);
            // a noise-free pass fixes the coefficients and the clean data,
            // from which the default noise level is derived
            let pre = synthesize(
                family,
                synth.order,
                &grid,
                &freqs,
                coefficients,
                0.0,
                config.seed,
            )
            .map_err(|e| CliError::numeric(e.to_string()))?;
            let sigma = config.noise_sigma.unwrap_or_else(|| default_sigma(&pre.clean));
            let x = pre
                .provenance
                .as_ref()
                .expect("synthetic provenance")
                .coefficients
                .clone();
            let ds = synthesize(
                family,
                synth.order,
                &grid,
                &freqs,
                Some(x.clone()),
                sigma,
                config.seed,
            )
            .map_err(|e| CliError::numeric(e.to_string()))?;
            Ok(DatasetFiles {
                q: ds.q.clone(),
                clean: ds.clean.iter().cloned().collect(),
                noisy: ds.noisy.iter().cloned().collect(),
                meta: DatasetMeta {
                    kind: "synthetic".into(),
                    seed: config.seed,
                    sigma,
                    config_hash: hash,
                    family: Some(synth.family),
                    order: Some(synth.order),
                    coefficients: Some(x.iter().cloned().collect()),
                    fermi_half_radius: None,
                    fermi_diffuseness: None,
                    fermi_charge: None,
                },
            })
        }
        ProblemKind::Fermi => {
            let fermi = config.fermi.clone().unwrap_or_default();
            let model = FermiModel::normalized(fermi.half_radius, fermi.diffuseness, fermi.charge)
                .map_err(|e| CliError::config(e.to_string()))?;
            let q = config.fermi_q_points();
            let ds = fermi_dataset(&model, &q).map_err(|e| CliError::numeric(e.to_string()))?;
            Ok(DatasetFiles {
                q: ds.q.clone(),
                clean: ds.clean.iter().cloned().collect(),
                noisy: ds.noisy.iter().cloned().collect(),
                meta: DatasetMeta {
                    kind: "fermi".into(),
                    seed: config.seed,
                    sigma: 0.0,
                    config_hash: hash,
                    family: None,
                    order: None,
                    coefficients: None,
                    fermi_half_radius: Some(fermi.half_radius),
                    fermi_diffuseness: Some(fermi.diffuseness),
                    fermi_charge: Some(fermi.charge),
                },
            })
        }
    }
}

fn cmd_fit(
    path: &std::path::Path,
    data: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<Vec<String>, CliError> {
    let config = load_config(path, seed, out)?;
    let data_dir = data.unwrap_or_else(|| config.out.clone());
    let dataset = DatasetFiles::load(&data_dir)?;
    if dataset.q.len() != config.grid.m {
        return Err(CliError::config(format!(
            "dataset has {} rows but grid.m is {}",
            dataset.q.len(),
            config.grid.m
        )));
    }
    let start = Instant::now();
    let grid = RadialGrid::new(config.grid.n, config.grid.r_c)
        .map_err(|e| CliError::config(e.to_string()))?;
    let freqs = FrequencyGrid::from_points(dataset.q.clone())
        .map_err(|e| CliError::config(e.to_string()))?;
    let priors = config.hyper_priors()?;
    let families = config.families();
    let y = DVector::from_vec(dataset.noisy.clone());

    let mut warnings = Vec::new();
    let (summary, coefficients, scan, trace, tables) = match config.algorithm {
        AlgorithmKind::Marginal => {
            let cfg = MarginalConfig {
                families: families.clone(),
                k_max: config.grid.k_max,
                n_phi: config.samples.n_phi,
                n_psi: config.samples.n_psi,
                seed: config.seed,
            };
            let out = marginal_map_pipeline(&grid, &freqs, &y, &priors, &cfg)
                .map_err(|e| CliError::numeric(e.to_string()))?;
            let t = &out.tables;
            let fi_sel = t
                .families()
                .iter()
                .position(|f| *f == out.family)
                .expect("selected family is in the set");
            let mut table_files = TableFiles::default();
            for (fi, f) in t.families().iter().enumerate() {
                table_files.p_l.push((f.index(), t.p_l(fi)));
                for k in 1..=t.k_max() {
                    table_files
                        .p_k
                        .push((f.index(), k, t.p_k(k, fi), t.joint_kl(k, fi)));
                }
            }
            let j_sel = t
                .phi_samples()
                .iter()
                .position(|p| *p == out.phi)
                .expect("selected phi is a sample");
            for (j, &phi) in t.phi_samples().iter().enumerate() {
                table_files
                    .p_phi
                    .push((j, phi, t.p_phi(j, out.order, fi_sel)));
            }
            for (i, &psi) in t.psi_samples().iter().enumerate() {
                table_files
                    .p_psi
                    .push((i, psi, t.p_psi(i, j_sel, out.order, fi_sel)));
            }
            let summary = SelectionSummary {
                algorithm: config.algorithm.name().into(),
                family_index: out.family.index(),
                family_name: out.family.name().into(),
                order: out.order,
                phi: out.phi,
                psi: out.psi,
                lambda: out.lambda,
                criterion: None,
                warnings: Vec::new(),
            };
            (
                summary,
                out.coefficients.iter().cloned().collect::<Vec<f64>>(),
                Vec::new(),
                Vec::new(),
                Some(table_files),
            )
        }
        AlgorithmKind::Joint1 | AlgorithmKind::Joint2 => {
            let algorithm = match config.algorithm {
                AlgorithmKind::Joint1 => JointAlgorithm::Alternating(AlternatingOptions::default()),
                _ => JointAlgorithm::ProfiledGrid {
                    lambda_grid: default_lambda_grid(),
                },
            };
            let scan_out = joint_map_scan(
                &grid,
                &freqs,
                &y,
                &families,
                config.grid.k_max,
                &priors,
                &algorithm,
            )
            .map_err(|e| CliError::numeric(e.to_string()))?;
            let mut scan_rows = Vec::new();
            let mut trace_rows = Vec::new();
            for cell in &scan_out.cells {
                scan_rows.push(ScanRow {
                    family_index: cell.family.index(),
                    order: cell.order,
                    criterion: cell.fit.criterion,
                    lambda: cell.fit.lambda,
                    converged: cell.fit.converged,
                });
                for (step, &(lambda, criterion)) in cell.fit.trace.iter().enumerate() {
                    trace_rows.push(TraceRow {
                        family_index: cell.family.index(),
                        order: cell.order,
                        step,
                        lambda,
                        criterion,
                    });
                }
                if !cell.fit.converged {
                    warnings.push(format!(
                        "cell (family {}, order {}) did not converge",
                        cell.family.index(),
                        cell.order
                    ));
                }
            }
            let sel = scan_out.selected();
            if sel.fit.at_boundary {
                warnings.push(format!(
                    "selected lambda {:.3e} sits on the search-grid boundary",
                    sel.fit.lambda
                ));
            }
            let summary = SelectionSummary {
                algorithm: config.algorithm.name().into(),
                family_index: sel.family.index(),
                family_name: sel.family.name().into(),
                order: sel.order,
                phi: sel.fit.phi,
                psi: sel.fit.psi,
                lambda: sel.fit.lambda,
                criterion: Some(sel.fit.criterion),
                warnings: warnings.clone(),
            };
            (
                summary,
                sel.fit.coefficients.iter().cloned().collect::<Vec<f64>>(),
                scan_rows,
                trace_rows,
                None,
            )
        }
    };

    // reconstruction curves and fitted spectrum for the selected cell
    let family = Family::from_index(summary.family_index).expect("validated");
    let basis = BasisSet::new(family, summary.order, config.grid.r_c)
        .map_err(|e| CliError::numeric(e.to_string()))?;
    let design = DesignMatrices::build(grid.clone(), freqs.clone(), basis, RadialRule::Rectangle)
        .map_err(|e| CliError::numeric(e.to_string()))?;
    let x_hat = DVector::from_vec(coefficients.clone());
    let rho_hat = design.b() * &x_hat;
    let f_hat = design.a() * &x_hat;

    let rho_true = true_density_on_grid(&dataset.meta, &grid, &config)?;
    let curves: Vec<(f64, f64, f64)> = (0..grid.len())
        .map(|n| (grid.point(n), rho_true[n], rho_hat[n]))
        .collect();
    let spectrum: Vec<(f64, f64, f64, f64)> = (0..dataset.q.len())
        .map(|i| (dataset.q[i], dataset.clean[i], dataset.noisy[i], f_hat[i]))
        .collect();

    let bundle = ResultBundle {
        selection: summary,
        meta: RunMeta {
            config_hash: config.semantic_hash(),
            seed: config.seed,
            wall_time_s: start.elapsed().as_secs_f64(),
            config: serde_json::to_value(&config).expect("config serializes"),
        },
        coefficients,
        curves,
        spectrum,
        scan,
        trace,
        tables,
    };
    bundle.save(&config.out)?;
    print!("{}", describe(&bundle));
    println!("bundle written to {}", config.out.display());
    Ok(warnings)
}

fn true_density_on_grid(
    meta: &DatasetMeta,
    grid: &RadialGrid,
    config: &RunConfig,
) -> Result<Vec<f64>, CliError> {
    match meta.kind.as_str() {
        "synthetic" => {
            let family = Family::from_index(meta.family.unwrap_or(0))
                .map_err(|e| CliError::config(format!("dataset meta: {e}")))?;
            let order = meta
                .order
                .ok_or_else(|| CliError::config("dataset meta lacks the generating order".into()))?;
            let x = meta.coefficients.clone().ok_or_else(|| {
                CliError::config("dataset meta lacks the generating coefficients".into())
            })?;
            if x.len() != order {
                return Err(CliError::config(
                    "dataset meta coefficients disagree with the stated order".into(),
                ));
            }
            let basis = BasisSet::new(family, order, config.grid.r_c)
                .map_err(|e| CliError::config(format!("dataset meta: {e}")))?;
            Ok((0..grid.len())
                .map(|n| {
                    (0..basis.order())
                        .map(|j| basis.eval(j, grid.point(n)) * x[j])
                        .sum()
                })
                .collect())
        }
        "fermi" => {
            let model = FermiModel::normalized(
                meta.fermi_half_radius.unwrap_or_default(),
                meta.fermi_diffuseness.unwrap_or_default(),
                meta.fermi_charge.unwrap_or_default(),
            )
            .map_err(|e| CliError::config(format!("dataset meta: {e}")))?;
            Ok((0..grid.len())
                .map(|n| model.density(grid.point(n)))
                .collect())
        }
        other => Err(CliError::config(format!("unknown dataset kind {other:?}"))),
    }
}

fn cmd_report(bundle_dir: &std::path::Path, out: Option<PathBuf>) -> Result<Vec<String>, CliError> {
    let bundle = ResultBundle::load(bundle_dir)?;
    let out = out.unwrap_or_else(|| bundle_dir.join("figures"));
    let written = bundle::write_report(&bundle, &out)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(Vec::new())
}

fn cmd_selftest() -> Result<Vec<String>, CliError> {
    use bayesinv::selection::OrderPrior;

    let mut failures = 0;
    let mut check = |name: &str, ok: bool| {
        println!("selftest {name}: {}", if ok { "ok" } else { "FAILED" });
        if !ok {
            failures += 1;
        }
    };

    let grid = RadialGrid::new(100, 8.0).expect("valid grid");
    check("radial grid step", (grid.step() * 100.0 - 8.0).abs() < 1e-12);

    let freqs = FrequencyGrid::ladder(12, 8.0).expect("valid grid");
    let basis = BasisSet::new(Family::Sinc, 4, 8.0).expect("valid basis");
    let design = DesignMatrices::build(grid.clone(), freqs.clone(), basis, RadialRule::Rectangle)
        .expect("design builds");
    check(
        "design matrices finite",
        design.a().iter().all(|v| v.is_finite()) && design.b().iter().all(|v| v.is_finite()),
    );

    let ds = synthesize(Family::Sinc, 4, &grid, &freqs, None, 0.01, 42).expect("synthesize");
    let ds2 = synthesize(Family::Sinc, 4, &grid, &freqs, None, 0.01, 42).expect("synthesize");
    check("dataset determinism", ds == ds2);

    let problem = RidgeProblem::new(design.a().clone(), ds.noisy.clone()).expect("problem");
    let sol = problem.solve(0.3).expect("solve");
    let identity = (sol.data_misfit() - (sol.residual_ss() + 0.3 * sol.coeff_ss())).abs();
    check(
        "ridge residual identity",
        identity < 1e-9 * sol.data_misfit().abs().max(1.0),
    );

    let mut g = design.a().transpose() * design.a();
    for d in 0..4 {
        g[(d, d)] += 0.3;
    }
    let resid = (&g * sol.coefficients() - design.a().transpose() * &ds.noisy).norm();
    check("normal equations solved", resid < 1e-8);

    let order = OrderPrior::new(6).expect("valid order prior");
    let total: f64 = order.weights().iter().sum();
    check("order prior normalized", (total - 1.0).abs() < 1e-12);

    let model = FermiModel::carbon12();
    let mut forward_ok = true;
    for &q in &[0.05, 0.8, 2.5, 5.5, 8.0] {
        let analytic = model.form_factor(q).expect("form factor");
        let quad = model.form_factor_quadrature(q);
        if (analytic - quad).abs() > 1e-6 * quad.abs() + 1e-10 {
            forward_ok = false;
        }
    }
    check("fermi forward model", forward_ok);

    let cfg = MarginalConfig {
        families: vec![Family::Sinc, Family::Gaussian],
        k_max: 4,
        n_phi: 8,
        n_psi: 8,
        seed: 1,
    };
    let out = marginal_map_pipeline(
        &grid,
        &freqs,
        &ds.noisy,
        &bayesinv::hyper::HyperPriors::default(),
        &cfg,
    )
    .expect("pipeline");
    let p_l_sum: f64 = (0..2).map(|fi| out.tables.p_l(fi)).sum();
    check("marginal tables normalized", (p_l_sum - 1.0).abs() < 1e-12);

    if failures == 0 {
        println!("selftest: all checks passed");
        Ok(Vec::new())
    } else {
        Err(CliError::numeric(format!(
            "{failures} selftest check(s) failed"
        )))
    }
}
