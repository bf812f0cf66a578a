use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use modeseek::blur::{bms_cluster, bms_cluster_accelerated, BmsConfig, FilterSpec};
use modeseek::kde::entropic_bandwidths;
use modeseek::kmodes::{
    kmodes_fit, lap_kmodes_fit, AffinityGraph, HomotopySchedule, KmodesConfig, LapKmodesConfig,
};
use modeseek::manifold::{mbms_run, MbmsConfig};
use modeseek::mode_seek::{conditional_modes, mode_continuation, ms_cluster, Clustering, MsConfig};
use modeseek::pipelines::io::{read_points, write_labels, write_points, write_rows};
use modeseek::pipelines::{
    read_pgm, segment_image, write_pgm_ascii, ImageFeatureSpec, SegmentConfig, SegmentMethod,
};
use modeseek::{BandwidthSpec, DataSet, Error, Kernel, Result};

#[derive(Parser)]
#[command(
    name = "modeseek",
    version,
    about = "Mean-shift clustering, segmentation and denoising"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Gaussian,
    Epanechnikov,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ClusterMethod {
    Ms,
    Bms,
    BmsAccel,
}

#[derive(Clone, Copy, ValueEnum)]
enum SegmentArg {
    Ms,
    MsDisc,
    Bms,
    BmsAccel,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster the points of a CSV file
    Cluster {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "gaussian")]
        kernel: KernelArg,
        /// Global bandwidth; not needed with --adaptive-perplexity
        #[arg(long)]
        bandwidth: Option<f64>,
        /// Per-point bandwidths matching this perplexity (mean-shift only)
        #[arg(long)]
        adaptive_perplexity: Option<f64>,
        #[arg(long, value_enum, default_value = "ms")]
        method: ClusterMethod,
        /// Mean-shift step tolerance (default 1e-6) or blurring entropy tolerance (default 1e-4)
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        merge_eps: Option<f64>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        modes: Option<PathBuf>,
    },
    /// Segment a PGM image
    Segment {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        bandwidth: f64,
        #[arg(long, value_enum, default_value = "ms")]
        method: SegmentArg,
        #[arg(long, default_value_t = 100.0)]
        range_scale: f64,
        #[arg(long, default_value_t = 0.5)]
        merge_eps: f64,
        /// Cells per pixel for ms-disc
        #[arg(long, default_value_t = 2)]
        cell_resolution: u64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Denoise points near a manifold
    Denoise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        bandwidth: f64,
        #[arg(long)]
        knn: usize,
        #[arg(long)]
        tangent_dim: usize,
        #[arg(long, default_value_t = 5)]
        max_iter: usize,
        #[arg(long, default_value_t = 0.01)]
        stop_ratio: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// K-modes or, with --lambda or --graph-knn, Laplacian K-modes
    Kmodes {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        bandwidth: f64,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        graph_knn: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Laplacian K-modes starts; the lowest-objective run is kept
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        centers: PathBuf,
        #[arg(long)]
        soft: Option<PathBuf>,
    },
    /// Modes of the conditional density of the trailing coordinates
    Condmodes {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        xdim: usize,
        #[arg(long)]
        bandwidth: f64,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Track modes over an increasing bandwidth grid
    Modetree {
        #[arg(long)]
        input: PathBuf,
        /// "start:end:count", evenly spaced and increasing
        #[arg(long)]
        sigma_grid: String,
        #[arg(long)]
        output: PathBuf,
    },
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::invalid(format!("cannot create {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<DataSet> {
    read_points(open(path)?)
}

fn save_labels(path: &Path, labels: &[usize]) -> Result<()> {
    write_labels(create(path)?, labels)
}

fn save_rows(path: &Path, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    write_rows(create(path)?, rows)
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || {
        Error::invalid(format!(
            "sigma grid must look like start:end:count, got {text:?}"
        ))
    };
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(bad());
    };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n == 0 || a.is_nan() || a <= 0.0 || !b.is_finite() || (n > 1 && b <= a) {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect())
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        log::warn!("{w}");
    }
}

#[allow(clippy::too_many_arguments)]
fn cluster(
    input: &Path,
    kernel: KernelArg,
    bandwidth: Option<f64>,
    perplexity: Option<f64>,
    method: ClusterMethod,
    tol: Option<f64>,
    merge_eps: Option<f64>,
    output: &Path,
    modes: Option<&Path>,
) -> Result<()> {
    let data = load(input)?;
    let kernel = match kernel {
        KernelArg::Gaussian => Kernel::Gaussian,
        KernelArg::Epanechnikov => Kernel::Epanechnikov,
    };
    let clustering: Clustering = match method {
        ClusterMethod::Ms => {
            let spec = match (perplexity, bandwidth) {
                (Some(k), _) => entropic_bandwidths(&data, k)?,
                (None, Some(s)) => BandwidthSpec::Scalar(s),
                (None, None) => {
                    return Err(Error::invalid(
                        "--bandwidth or --adaptive-perplexity is required",
                    ))
                }
            };
            let cfg = MsConfig {
                tol: tol.unwrap_or(1e-6),
                merge_eps,
                ..MsConfig::default()
            };
            let out = ms_cluster(&data, kernel, spec, &cfg)?;
            warn_all(&out.diagnostics.warnings);
            out.clustering
        }
        ClusterMethod::Bms | ClusterMethod::BmsAccel => {
            if perplexity.is_some() {
                return Err(Error::invalid(
                    "adaptive bandwidths are only supported with --method ms",
                ));
            }
            if !kernel.is_gaussian() {
                return Err(Error::UnsupportedKernel("blurring mean-shift"));
            }
            let sigma = bandwidth.ok_or_else(|| Error::invalid("--bandwidth is required"))?;
            let cfg = BmsConfig {
                entropy_tol: tol.unwrap_or(1e-4),
                merge_eps,
                ..BmsConfig::default()
            };
            let out = if method == ClusterMethod::Bms {
                bms_cluster(&data, sigma, &cfg, FilterSpec::Standard)?
            } else {
                bms_cluster_accelerated(&data, sigma, &cfg)?
            };
            if !out.converged {
                log::warn!("stopped at the iteration cap of {}", cfg.max_iter);
            }
            out.clustering
        }
    };
    save_labels(output, &clustering.labels)?;
    if let Some(path) = modes {
        save_rows(path, clustering.centers)?;
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Cluster {
            input,
            kernel,
            bandwidth,
            adaptive_perplexity,
            method,
            tol,
            merge_eps,
            output,
            modes,
        } => cluster(
            &input,
            kernel,
            bandwidth,
            adaptive_perplexity,
            method,
            tol,
            merge_eps,
            &output,
            modes.as_deref(),
        ),
        Command::Segment {
            image,
            bandwidth,
            method,
            range_scale,
            merge_eps,
            cell_resolution,
            output,
            report,
        } => {
            let img = read_pgm(open(&image)?)?;
            let method = match method {
                SegmentArg::Ms => SegmentMethod::Ms,
                SegmentArg::MsDisc => SegmentMethod::MsDisc,
                SegmentArg::Bms => SegmentMethod::Bms,
                SegmentArg::BmsAccel => SegmentMethod::BmsAccel,
            };
            let cfg = SegmentConfig {
                method,
                features: ImageFeatureSpec {
                    range_scale,
                    include_spatial: true,
                },
                merge_eps,
                cell_resolution,
                ..SegmentConfig::default()
            };
            let seg = segment_image(&img, bandwidth, &cfg)?;
            warn_all(&seg.report.warnings);
            let mut out = create(&output)?;
            write_pgm_ascii(&mut out, &seg.labels.to_gray()?)?;
            out.flush()?;
            if let Some(path) = report {
                let mut out = create(&path)?;
                serde_json::to_writer_pretty(&mut out, &seg.report)
                    .map_err(std::io::Error::from)?;
                writeln!(out)?;
                out.flush()?;
            }
            Ok(())
        }
        Command::Denoise {
            input,
            bandwidth,
            knn,
            tangent_dim,
            max_iter,
            stop_ratio,
            output,
        } => {
            let data = load(&input)?;
            let cfg = MbmsConfig {
                max_iter,
                stop_ratio,
                ..MbmsConfig::new(bandwidth, knn, tangent_dim)
            };
            let out = mbms_run(&data, &cfg)?;
            log::info!("{} denoising steps", out.iterations);
            write_points(create(&output)?, &out.data)
        }
        Command::Kmodes {
            input,
            k,
            bandwidth,
            lambda,
            graph_knn,
            seed,
            restarts,
            output,
            centers,
            soft,
        } => {
            let data = load(&input)?;
            let schedule = HomotopySchedule::default_for(&data, bandwidth)?;
            let (labels, fitted, z) = if lambda.is_some() || graph_knn.is_some() {
                let graph = AffinityGraph::knn_gaussian(&data, graph_knn.unwrap_or(10), bandwidth)?;
                let cfg = LapKmodesConfig {
                    lambda: lambda.unwrap_or(0.05),
                    seed,
                    restarts,
                    ..LapKmodesConfig::default()
                };
                let fit = lap_kmodes_fit(&data, k, &graph, &schedule, &cfg)?;
                warn_all(&fit.warnings);
                (
                    fit.soft.argmax_labels(),
                    fit.centers,
                    fit.soft.matrix().clone(),
                )
            } else {
                let cfg = KmodesConfig {
                    seed,
                    ..KmodesConfig::default()
                };
                let fit = kmodes_fit(&data, k, &schedule, &cfg)?;
                let z = fit.assignment.to_matrix();
                (fit.assignment.labels().to_vec(), fit.centers, z)
            };
            save_labels(&output, &labels)?;
            save_rows(&centers, fitted)?;
            if let Some(path) = soft {
                save_rows(&path, z.row_iter().map(|r| r.iter().copied().collect()))?;
            }
            Ok(())
        }
        Command::Condmodes {
            input,
            xdim,
            bandwidth,
            query,
            output,
        } => {
            let pairs = load(&input)?;
            let queries = load(&query)?;
            if queries.dim() != xdim {
                return Err(Error::DimensionMismatch {
                    expected: xdim,
                    got: queries.dim(),
                });
            }
            let mut rows = Vec::new();
            for (q, x) in queries.iter().enumerate() {
                for m in conditional_modes(&pairs, xdim, bandwidth, x, &MsConfig::default())? {
                    let mut row = vec![q as f64, m.weight];
                    row.extend(&m.mode);
                    row.extend(m.error_bar.iter());
                    rows.push(row);
                }
            }
            save_rows(&output, rows)
        }
        Command::Modetree {
            input,
            sigma_grid,
            output,
        } => {
            let data = load(&input)?;
            let grid = parse_grid(&sigma_grid)?;
            let tree = mode_continuation(&data, &grid, &MsConfig::default())?;
            let mut rows = Vec::new();
            for (l, level) in tree.levels.iter().enumerate() {
                let next = tree.levels.get(l + 1);
                for (m, mode) in level.modes.iter().enumerate() {
                    let parent = next
                        .and_then(|n| n.links.get(m).copied().flatten())
                        .map_or(-1.0, |p| p as f64);
                    let mut row = vec![l as f64, level.sigma, m as f64, parent];
                    row.extend(mode);
                    rows.push(row);
                }
            }
            save_rows(&output, rows)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("MODESEEK_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            Error::invalid(format!(
                "MODESEEK_THREADS must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::invalid(format!("cannot configure threads: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
