//! Command-line driver: data ingestion, the residual-spike test, null-law
//! parameters, criterion curves, and the Monte Carlo studies.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use respike::criterion::criterion_check;
use respike::nulllaw::{null_law_general, null_law_mp, NullLaw, ZoneVariant};
use respike::simlab::{run_null_study, run_power_study, ScenarioConfig};
use respike::spectra::Group;
use respike::spike::{estimate_spike, SpikeOptions};
use respike::testkit::residual_spike_test;
use respike::{Error, Result};

#[derive(Parser)]
#[command(
    name = "respike",
    version,
    about = "Residual-spike test for equality of two high-dimensional covariance matrices"
)]
struct Cli {
    /// Seed override; falls back to the RESISPIKE_SEED environment variable.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo commands (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    /// Both covariance estimates are spike-filtered.
    BothFiltered,
    /// Only the X estimate is filtered; Y enters raw.
    FilteredRaw,
}

impl From<VariantArg> for ZoneVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::BothFiltered => ZoneVariant::BothFiltered,
            VariantArg::FilteredRaw => ZoneVariant::FilteredRaw,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct CsvOptions {
    /// Treat columns as variables instead of rows.
    #[arg(long)]
    transpose: bool,
    /// Field delimiter.
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// Skip a header row.
    #[arg(long)]
    header: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the residual-spike test on two data matrices.
    Test {
        /// CSV with the X sample (rows = variables, columns = observations).
        x: PathBuf,
        /// CSV with the Y sample.
        y: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = VariantArg::BothFiltered)]
        variant: VariantArg,
        /// Center each variable before forming the covariance.
        #[arg(long)]
        center: bool,
        #[command(flatten)]
        csv: CsvOptions,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Emit the null-law parameters (lambda+/-, sigma+/-) as JSON.
    NullParams {
        /// CSV with the X sample; omit with --mp.
        x: Option<PathBuf>,
        /// CSV with the Y sample; omit with --mp.
        y: Option<PathBuf>,
        /// Use the closed-form Marcenko-Pastur special case.
        #[arg(long)]
        mp: bool,
        /// Aspect ratio m/n_X for --mp.
        #[arg(long)]
        cx: Option<f64>,
        /// Aspect ratio m/n_Y for --mp.
        #[arg(long)]
        cy: Option<f64>,
        /// Dimension m for --mp.
        #[arg(long)]
        m: Option<usize>,
        /// Also emit plot-ready Gaussian density samples as CSV.
        #[arg(long)]
        density: Option<PathBuf>,
        #[command(flatten)]
        csv: CsvOptions,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate the monotonicity criterion curve for one or more scenarios.
    Criterion {
        /// Scenario config files (TOML); one curve per config.
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Replicate index used to draw the scenario data.
        #[arg(long, default_value_t = 0)]
        replicate: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Null study: empirical vs theoretical moments of the extreme residual spikes.
    Simulate {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Power study: rejection rates of T and the classical baselines.
    Power {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn read_matrix(path: &Path, opts: &CsvOptions) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.header)
        .delimiter(opts.delimiter as u8)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {}", path.display(), e)))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("{}: {}", path.display(), e)))?;
        let mut row = Vec::with_capacity(record.len());
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Parse(format!(
                    "{}: line {}, column {}: not a number: {:?}",
                    path.display(),
                    i + 1 + usize::from(opts.header),
                    j + 1,
                    field
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: empty file", path.display())));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse(format!(
            "{}: ragged rows (expected {} fields)",
            path.display(),
            ncols
        )));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let nrows = flat.len() / ncols;
    let a = Array2::from_shape_vec((nrows, ncols), flat)
        .map_err(|e| Error::Parse(e.to_string()))?;
    Ok(if opts.transpose { a.t().to_owned() } else { a })
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => {
            std::fs::write(path, text)?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn law_from_data(
    x_path: &Path,
    y_path: &Path,
    csv_opts: &CsvOptions,
) -> Result<(NullLaw, usize)> {
    let x = read_matrix(x_path, csv_opts)?;
    let y = read_matrix(y_path, csv_opts)?;
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} variables, Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let m = x.nrows();
    let cov_x = respike::testkit::sample_covariance(&x);
    let cov_y = respike::testkit::sample_covariance(&y);
    let est_x = estimate_spike(&cov_x, &SpikeOptions::default())?;
    let est_y = estimate_spike(&cov_y, &SpikeOptions::default())?;
    let law = null_law_general(
        &est_x.bulk_moments(Group::X),
        &est_y.bulk_moments(Group::Y),
        m,
    )?;
    Ok((law, m))
}

fn density_csv(law: &NullLaw) -> String {
    // Gaussian density of each extreme around its center, plot-ready
    let root_m = (law.m as f64).sqrt();
    let mut out = String::from("side,x,density\n");
    for (side, center, sigma) in [
        ("max", law.lambda_plus, law.sigma_plus / root_m),
        ("min", law.lambda_minus, law.sigma_minus / root_m),
    ] {
        for i in 0..=200 {
            let x = center + sigma * (-4.0 + 8.0 * i as f64 / 200.0);
            let z = (x - center) / sigma;
            let d = (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            out.push_str(&format!("{},{:.12e},{:.12e}\n", side, x, d));
        }
    }
    out
}

fn scenario_curve(path: &Path, replicate: usize) -> Result<(String, respike::criterion::CriterionCurve)> {
    let config = ScenarioConfig::from_path(path)?;
    let (mut x, mut y) = respike::simlab::generate(&config, replicate);
    respike::simlab::apply_perturbation(&mut x, config.theta_x, config.u_x);
    respike::simlab::apply_perturbation(&mut y, config.theta_y, config.u_y);
    let est_x = estimate_spike(
        &respike::testkit::sample_covariance(&x),
        &SpikeOptions {
            n: Some(config.n_x),
            ..Default::default()
        },
    )?;
    let est_y = estimate_spike(
        &respike::testkit::sample_covariance(&y),
        &SpikeOptions {
            n: Some(config.n_y),
            ..Default::default()
        },
    )?;
    let curve = criterion_check(&est_x.bulk, &est_y.bulk, None);
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok((label, curve))
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let seed_override = cli
        .seed
        .or_else(|| std::env::var("RESISPIKE_SEED").ok().and_then(|s| s.parse().ok()));

    match cli.command {
        Command::Test {
            x,
            y,
            alpha,
            variant,
            center,
            csv,
            output,
        } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::Config(format!("alpha must be in (0,1), got {}", alpha)));
            }
            let xm = read_matrix(&x, &csv)?;
            let ym = read_matrix(&y, &csv)?;
            let report = residual_spike_test(&xm, &ym, alpha, variant.into(), center)?;
            emit(&report.to_json(), output.as_deref())?;
            Ok(if report.reject { 2 } else { 0 })
        }
        Command::NullParams {
            x,
            y,
            mp,
            cx,
            cy,
            m,
            density,
            csv,
            output,
        } => {
            let law = if mp {
                let cx = cx.ok_or_else(|| Error::Config("--mp requires --cx".into()))?;
                let cy = cy.ok_or_else(|| Error::Config("--mp requires --cy".into()))?;
                let m = m.ok_or_else(|| Error::Config("--mp requires --m".into()))?;
                null_law_mp(cx, cy, m)
            } else {
                let x = x.ok_or_else(|| Error::Config("need X and Y data files or --mp".into()))?;
                let y = y.ok_or_else(|| Error::Config("need X and Y data files or --mp".into()))?;
                law_from_data(&x, &y, &csv)?.0
            };
            emit(&law.to_json(), output.as_deref())?;
            if let Some(path) = density {
                std::fs::write(&path, density_csv(&law))?;
            }
            Ok(0)
        }
        Command::Criterion {
            configs,
            format,
            replicate,
            output,
        } => {
            let mut curves = Vec::new();
            for path in &configs {
                curves.push(scenario_curve(path, replicate)?);
            }
            let text = match format {
                Format::Json => {
                    let objects: Vec<serde_json::Value> = curves
                        .iter()
                        .map(|(label, curve)| {
                            let mut v = serde_json::to_value(curve).expect("serialize curve");
                            v["scenario"] = serde_json::Value::String(label.clone());
                            v["schema"] = serde_json::Value::String("1".into());
                            v
                        })
                        .collect();
                    serde_json::to_string_pretty(&objects).expect("serialize curves")
                }
                Format::Csv => {
                    let mut out = String::from("scenario,theta,mu,alpha2,verdict\n");
                    for (label, curve) in &curves {
                        for i in 0..curve.thetas.len() {
                            out.push_str(&format!(
                                "{},{:.12e},{:.12e},{:.12e},{}\n",
                                label, curve.thetas[i], curve.mu[i], curve.alpha2[i], curve.verdict
                            ));
                        }
                    }
                    out
                }
            };
            emit(&text, output.as_deref())?;
            Ok(0)
        }
        Command::Simulate {
            config,
            format,
            output,
        } => {
            let mut cfg = ScenarioConfig::from_path(&config)?;
            if let Some(seed) = seed_override {
                cfg.seed = seed;
            }
            let summaries = run_null_study(&cfg)?;
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&summaries).expect("serialize"),
                Format::Csv => {
                    let mut out = String::from(
                        "stat_name,empirical_mean,empirical_sd,theory_mean,theory_sd,replicates\n",
                    );
                    for s in &summaries {
                        out.push_str(&format!(
                            "{},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
                            s.stat_name,
                            s.empirical_mean,
                            s.empirical_sd,
                            s.theory_mean,
                            s.theory_sd,
                            s.replicates
                        ));
                    }
                    out
                }
            };
            emit(&text, output.as_deref())?;
            Ok(0)
        }
        Command::Power {
            config,
            format,
            output,
        } => {
            let mut cfg = ScenarioConfig::from_path(&config)?;
            if let Some(seed) = seed_override {
                cfg.seed = seed;
            }
            let rows = run_power_study(&cfg)?;
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&rows).expect("serialize"),
                Format::Csv => {
                    let mut out = String::from(
                        "theta_x,theta_y,u_x,u_y,rate_t,rate_t1,rate_t2,rate_t3,replicates\n",
                    );
                    for r in &rows {
                        out.push_str(&format!(
                            "{},{},{},{},{},{},{},{},{}\n",
                            r.theta_x,
                            r.theta_y,
                            r.u_x,
                            r.u_y,
                            r.rate_t,
                            r.rate_t1,
                            r.rate_t2,
                            r.rate_t3,
                            r.replicates
                        ));
                    }
                    out
                }
            };
            emit(&text, output.as_deref())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successful exits; usage errors map
            // to the configuration exit code
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e @ (Error::Parse(_) | Error::Config(_) | Error::Io(_))) => {
            eprintln!("error: {}", e);
            ExitCode::from(64)
        }
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(70)
        }
    }
}
