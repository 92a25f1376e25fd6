//! `sect`: shape transforms, distances, barcodes and GP experiments from the
//! command line.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use sect_core::complex::SimplicialComplex;
use sect_core::experiment::{run_experiment, ExperimentConfig};
use sect_core::filtration::{direction_set, point_heights, Direction, DEFAULT_DIRECTIONS, DEFAULT_LEVELS};
use sect_core::gp::{
    self, cv_bandwidth, default_bandwidth_grid, posterior_predict, reported_variances, FeatureScaler, KernelFamily,
    KernelSpec, ModelExport, Standardizer,
};
use sect_core::ingest::{load_shape, read_feature_csv, FeatureMatrix};
use sect_core::nalgebra::{DMatrix, DVector};
use sect_core::persistence::{compute_barcode, lower_star_filtration};
use sect_core::sect::{aggregate_slices, curve_table, load_profile, save_profile, sect, sect_distance, write_curve_csv};
use sect_core::synth::generate_synthetic_cohort;

/// Worker-count override for parallel sections; never changes results.
const WORKERS_ENV: &str = "SECT_WORKERS";

#[derive(Parser)]
#[command(name = "sect", version, about = "Smooth Euler characteristic transform toolkit")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the SECT profile of a shape (several masks are averaged as slices).
    Compute {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_DIRECTIONS)]
        directions: usize,
        #[arg(long, default_value_t = DEFAULT_LEVELS)]
        levels: usize,
        #[arg(long, default_value_t = 1.0)]
        pixel_spacing: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump threshold, EC, centered EC and SEC columns for one direction.
    Curve {
        #[arg(long)]
        input: PathBuf,
        /// Angle in degrees, or a vector "x,y[,z]".
        #[arg(long, allow_hyphen_values = true)]
        direction: String,
        #[arg(long, default_value_t = DEFAULT_LEVELS)]
        levels: usize,
        #[arg(long, default_value_t = 1.0)]
        pixel_spacing: f64,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the SECT distance between two profiles.
    Distance {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Persistence barcode of the height filtration in one direction.
    Barcode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        direction: String,
        #[arg(long, default_value_t = 1.0)]
        pixel_spacing: f64,
        /// Drop bars with equal birth and death.
        #[arg(long)]
        skip_zero_length: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a GP on a training CSV and predict a test CSV.
    Gp {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value = "gaussian")]
        kernel: KernelFamily,
        /// Response column name; every other non-id column is a feature.
        #[arg(long, default_value = "y")]
        response: String,
        /// Pick the bandwidth by cross-validation over 0.1..10.
        #[arg(long)]
        cv: bool,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long, default_value_t = gp::DEFAULT_NOISE)]
        noise: f64,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use features as given instead of standardizing them.
        #[arg(long)]
        raw_features: bool,
        /// Predictions CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a JSON record of the fitted model.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Run the repeated-split protocol described by a config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's split count.
        #[arg(long)]
        splits: Option<usize>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (also read from SECT_WORKERS).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write a seeded synthetic cohort of masks, responses and noise covariates.
    Synth {
        #[arg(long, default_value_t = 60)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_direction(text: &str, dim: usize) -> Result<Direction> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() == 1 {
        if dim != 2 {
            bail!("an angle only names a direction for planar shapes; pass x,y,z");
        }
        let deg: f64 = parts[0].parse().with_context(|| format!("bad direction {text:?}"))?;
        return Ok(Direction::from_angle(deg.to_radians()));
    }
    let v = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("bad direction {text:?}"))?;
    if v.len() != dim {
        bail!("direction {text:?} has {} components but the shape is {dim}D", v.len());
    }
    Ok(Direction::normalized(v)?)
}

fn load(path: &Path, spacing: f64) -> Result<SimplicialComplex> {
    load_shape(path, spacing).with_context(|| format!("cannot load shape {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Splits a CSV into features and the named response column (if present).
fn split_response(m: &FeatureMatrix, response: &str) -> (Vec<String>, DMatrix<f64>, Option<Vec<f64>>) {
    let col = m.names.iter().position(|n| n == response);
    let keep: Vec<usize> = (0..m.width()).filter(|&j| Some(j) != col).collect();
    let x = DMatrix::from_fn(m.rows.len(), keep.len(), |i, j| m.rows[i][keep[j]]);
    let y = col.map(|c| m.rows.iter().map(|r| r[c]).collect());
    (keep.iter().map(|&j| m.names[j].clone()).collect(), x, y)
}

#[allow(clippy::too_many_arguments)]
fn run_gp(
    train: &Path,
    test: &Path,
    family: KernelFamily,
    response: &str,
    cv: bool,
    theta: f64,
    noise: f64,
    folds: usize,
    seed: u64,
    raw_features: bool,
    out: Option<&Path>,
    export: Option<&Path>,
) -> Result<()> {
    let tr = read_feature_csv(train)?;
    let te = read_feature_csv(test)?;
    let (names_tr, mut x_tr, y_tr) = split_response(&tr, response);
    let (names_te, mut x_te, y_te) = split_response(&te, response);
    let y_tr = y_tr.with_context(|| format!("{} has no {response:?} column", train.display()))?;
    if names_tr != names_te {
        bail!("train and test feature columns differ");
    }
    if !raw_features {
        let scaler = FeatureScaler::fit(&x_tr);
        if scaler.dropped > 0 {
            log::warn!("dropped {} constant feature columns", scaler.dropped);
        }
        x_tr = scaler.transform(&x_tr);
        x_te = scaler.transform(&x_te);
        if family.has_bandwidth() {
            // squared distances become per-feature averages
            let s = 1.0 / (x_tr.ncols().max(1) as f64).sqrt();
            x_tr *= s;
            x_te *= s;
        }
    }
    let ys = Standardizer::fit(&y_tr);
    let y = DVector::from_iterator(y_tr.len(), y_tr.iter().map(|&v| ys.apply(v)));
    let theta = if cv && family.has_bandwidth() {
        let t = cv_bandwidth(family, &x_tr, &y, folds, &default_bandwidth_grid(), noise, seed)?;
        log::info!("cross-validated bandwidth {t}");
        t
    } else {
        theta
    };
    let model = gp::fit(KernelSpec::with_family(family, theta), noise, &x_tr, &y)?;
    let (mu, cov) = posterior_predict(&model, &x_te)?;
    let scale = if ys.sd > 0.0 { ys.sd } else { 1.0 };
    let mean: Vec<f64> = mu.iter().map(|m| ys.mean + scale * m).collect();
    let var: Vec<f64> = reported_variances(&cov).iter().map(|v| v * scale * scale).collect();

    let mut w = output(out)?;
    writeln!(w, "id,mean,variance")?;
    for (i, id) in te.ids.iter().enumerate() {
        writeln!(w, "{id},{},{}", mean[i], var[i])?;
    }
    w.flush()?;
    if let Some(obs) = y_te {
        let r2 = gp::r_squared(&obs, &mean).map_or("undefined".to_owned(), |v| v.to_string());
        eprintln!("theta={theta} r2={r2} rmsep={}", gp::rmsep(&obs, &mean)?);
    }
    if let Some(p) = export {
        let record = ModelExport::new(&model, cv.then_some(seed));
        fs::write(p, serde_json::to_string_pretty(&record)? + "\n").with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compute {
            input,
            directions,
            levels,
            pixel_spacing,
            out,
        } => {
            let shapes = input.iter().map(|p| load(p, pixel_spacing)).collect::<Result<Vec<_>>>()?;
            let dim = shapes[0].dim();
            if shapes.iter().any(|k| k.dim() != dim) {
                bail!("all inputs must have the same dimension");
            }
            let dirs = direction_set(directions, dim)?;
            let profiles = shapes.iter().map(|k| sect(k, &dirs, levels)).collect::<Result<Vec<_>, _>>()?;
            let profile = aggregate_slices(&profiles)?;
            save_profile(&out, &profile).with_context(|| format!("cannot write {}", out.display()))?;
        }
        Command::Curve {
            input,
            direction,
            levels,
            pixel_spacing,
            out,
        } => {
            let k = load(&input, pixel_spacing)?;
            let nu = parse_direction(&direction, k.dim())?;
            let (ec, z, sec) = curve_table(&k, &nu, levels)?;
            let mut w = output(out.as_deref())?;
            write_curve_csv(&ec, &z, &sec, &mut w)?;
            w.flush()?;
        }
        Command::Distance { a, b } => {
            let p = load_profile(&a).with_context(|| format!("cannot read profile {}", a.display()))?;
            let q = load_profile(&b).with_context(|| format!("cannot read profile {}", b.display()))?;
            println!("{}", sect_distance(&p, &q)?);
        }
        Command::Barcode {
            input,
            direction,
            pixel_spacing,
            skip_zero_length,
            out,
        } => {
            let k = load(&input, pixel_spacing)?;
            let nu = parse_direction(&direction, k.dim())?;
            let h = point_heights(&k, &nu)?;
            let mut bars = compute_barcode(&lower_star_filtration(&k, &h)?);
            if skip_zero_length {
                bars = bars.without_zero_length();
            }
            let mut w = output(out.as_deref())?;
            bars.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Gp {
            train,
            test,
            kernel,
            response,
            cv,
            theta,
            noise,
            folds,
            seed,
            raw_features,
            out,
            export,
        } => run_gp(
            &train,
            &test,
            kernel,
            &response,
            cv,
            theta,
            noise,
            folds,
            seed,
            raw_features,
            out.as_deref(),
            export.as_deref(),
        )?,
        Command::Experiment {
            config,
            seed,
            splits,
            out,
            workers,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = splits {
                cfg.splits = n;
            }
            if out.is_some() {
                cfg.output_dir = out;
            }
            let workers = match workers {
                Some(w) => Some(w),
                None => std::env::var(WORKERS_ENV)
                    .ok()
                    .map(|v| v.parse::<usize>().with_context(|| format!("{WORKERS_ENV}={v:?} is not a count")))
                    .transpose()?,
            };
            let report = run_experiment(&cfg, workers)?;
            print!("{}", report.table_csv());
        }
        Command::Synth { n, seed, out } => {
            if n < 10 {
                bail!("--n must be at least 10");
            }
            let cohort = generate_synthetic_cohort(n, seed, &out)?;
            println!("{}", cohort.config.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
