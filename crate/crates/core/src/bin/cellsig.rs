//! Command-line driver. Each subcommand runs one file-based pipeline stage
//! over the documented artifact formats, so stages can be scripted and
//! composed; `run-all` chains the same stage functions over one output
//! directory. Exit codes: 0 success, 2 validation error, 3 stage failure.

use cellsig::pipeline::{
    csf_stage, detect_and_track, embed_stage, kymo_from_table, ncd_stage, quantize_stage,
    run_all, stats_paired_csf, stats_shift_correlation, write_benchmark_corpus,
    write_paired_corpus, CompressorConfig, KymoValue, PipelineConfig, PipelineError,
    TrackTable,
};
use cellsig::ncd::{ExternalCompressorSpec, PairwiseOptions};
use cellsig::plot::line_svg;
use cellsig::ssf::activation_sweep;
use cellsig::synthbench::{PairedShiftSpec, SynthSpec};
use cellsig::tracking::DetectConfig;
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cellsig", version, about = "Compression-distance analysis of cell signaling movies")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sweep the calibration phantom over activation levels
    PhantomSweep(PhantomSweepArgs),
    /// Materialize a synthetic benchmark corpus as kymograph files
    SynthBench(SynthBenchArgs),
    /// Detect, track, and measure one volume into a track table CSV
    Detect(DetectArgs),
    /// Build or quantize kymographs
    Kymo {
        #[command(subcommand)]
        cmd: KymoCmd,
    },
    /// Pairwise compression distance matrix over quantized kymographs
    Ncd(NcdArgs),
    /// Metric embedding of a distance matrix
    Embed(EmbedArgs),
    /// Cluster structure deficiencies of a labeled embedding
    Csf(CsfArgs),
    /// Statistics over stage outputs
    Stats {
        #[command(subcommand)]
        cmd: StatsCmd,
    },
    /// Run every configured stage end to end
    RunAll(RunAllArgs),
}

#[derive(Args)]
struct PhantomSweepArgs {
    /// Number of evenly spaced activation levels in [0, 1]
    #[arg(long, default_value_t = 11)]
    num_levels: usize,
    /// Explicit comma-separated levels (overrides --num-levels)
    #[arg(long)]
    levels: Option<String>,
    /// Fresh noise draws per level
    #[arg(long, default_value_t = 100)]
    trials: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Optional SVG line chart
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct SynthBenchArgs {
    /// Corpus spec JSON; generator defaults when omitted
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Generate the paired pre/post corpus instead of the labeled benchmark
    #[arg(long)]
    paired: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    /// Input volume (.vol with JSON sidecar)
    #[arg(long)]
    volume: PathBuf,
    #[arg(long, default_value_t = 0)]
    nuclear_channel: usize,
    /// Comma-separated reporter channel indices
    #[arg(long, default_value = "")]
    signal_channels: String,
    /// Comma-separated blob radii in micrometers
    #[arg(long, default_value = "4,4.5,5,5.5,6")]
    radii_um: String,
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
    /// Keep raw responses instead of dividing by the reference response
    #[arg(long)]
    no_normalize: bool,
    /// Non-maximum suppression distance in pixels (smallest radius when unset)
    #[arg(long)]
    min_separation_px: Option<f64>,
    /// Linking gate in pixels
    #[arg(long, default_value_t = 10.0)]
    gate_px: f64,
    /// Output track table CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum KymoCmd {
    /// Build one kymograph from a track table column
    Build(KymoBuildArgs),
    /// Quantize a cohort of kymographs to byte volumes
    Quantize(KymoQuantizeArgs),
}

#[derive(Args)]
struct KymoBuildArgs {
    /// Track table CSV from the detect stage
    #[arg(long)]
    tracks: PathBuf,
    /// Which column to record: velocity, ssf_h2b, or ssf_c<n>
    #[arg(long, default_value = "velocity")]
    value: String,
    #[arg(long)]
    nx: usize,
    #[arg(long)]
    ny: usize,
    #[arg(long)]
    nt: usize,
    /// Downsample x and y by the integer part, guarded by this minimum
    /// cell radius in pixels (must exceed 2)
    #[arg(long)]
    downsample_min_radius_px: Option<f64>,
    /// Provenance tag recorded in the sidecar
    #[arg(long, default_value = "tracks")]
    source: String,
    /// Output .kymo path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct KymoQuantizeArgs {
    /// Kymograph payload files (.kymo); the cohort statistics span all of them
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct NcdArgs {
    /// Quantized kymograph files (.vol); item ids are the file stems
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// bzip2[:level], deflate[:level], store, or external:<spec.json>
    #[arg(long, default_value = "bzip2:9")]
    compressor: String,
    /// Compress both concatenation orders and average
    #[arg(long)]
    both_orders: bool,
    /// Skip the self-distance diagonal
    #[arg(long)]
    no_diagonal: bool,
    #[arg(long)]
    workers: Option<usize>,
    /// Output matrix CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    /// Distance matrix CSV
    #[arg(long)]
    matrix: PathBuf,
    /// Embedding dimensions
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Optional labels JSON (item id -> label)
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output coordinates CSV
    #[arg(long)]
    out: PathBuf,
    /// Optional SVG scatter of the first two dimensions
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct CsfArgs {
    /// Embedding CSV with a filled label column
    #[arg(long)]
    embedding: PathBuf,
    /// Output report JSON
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Wilcoxon signed-rank between two CSF reports over the same items
    PairedCsf(PairedCsfArgs),
    /// Correlate per-pair embedding shifts between two channels
    ShiftCorrelation(ShiftCorrelationArgs),
}

#[derive(Args)]
struct PairedCsfArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value = "a")]
    a_name: String,
    #[arg(long, default_value = "b")]
    b_name: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ShiftCorrelationArgs {
    /// Embedding CSV of the first channel (ids pre-<pair> / post-<pair>)
    #[arg(long)]
    a: PathBuf,
    /// Embedding CSV of the second channel
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunAllArgs {
    /// Pipeline config JSON
    #[arg(long)]
    config: PathBuf,
    /// Override: output directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override: base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override: worker count
    #[arg(long)]
    workers: Option<usize>,
    /// Override: embedding dimensions
    #[arg(long)]
    embedding_k: Option<usize>,
    /// Override: linking gate in pixels
    #[arg(long)]
    gate_px: Option<f64>,
    /// Override: detection threshold
    #[arg(long)]
    threshold: Option<f64>,
    /// Override: comma-separated radii in micrometers
    #[arg(long)]
    radii_um: Option<String>,
    /// Override: enable kymograph downsampling
    #[arg(long)]
    downsample: bool,
    /// Override: compressor (bzip2[:level], deflate[:level], store, external:<spec.json>)
    #[arg(long)]
    compressor: Option<String>,
}

fn validation(msg: impl Into<String>) -> PipelineError {
    PipelineError::Validation(msg.into())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, PipelineError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|_| validation(format!("bad {what} entry: {tok}")))
        })
        .collect()
}

fn parse_compressor(s: &str) -> Result<CompressorConfig, PipelineError> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    let level = |default: u32| -> Result<u32, PipelineError> {
        match arg {
            None => Ok(default),
            Some(a) => a
                .parse::<u32>()
                .map_err(|_| validation(format!("bad compression level: {a}"))),
        }
    };
    match name {
        "bzip2" => Ok(CompressorConfig::Bzip2 { level: level(9)? }),
        "deflate" => Ok(CompressorConfig::Deflate { level: level(6)? }),
        "store" => Ok(CompressorConfig::Store),
        "external" => {
            let path = arg.ok_or_else(|| validation("external needs a spec path"))?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| validation(format!("{path}: {e}")))?;
            let spec: ExternalCompressorSpec = serde_json::from_str(&text)
                .map_err(|e| validation(format!("{path}: {e}")))?;
            Ok(CompressorConfig::External { spec })
        }
        other => Err(validation(format!("unknown compressor: {other}"))),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| validation(format!("{}: {e}", path.display())))
}

fn write_text(path: &PathBuf, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io {
                path: dir.display().to_string(),
                source: e,
            })?;
        }
    }
    std::fs::write(path, text).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn write_json_pretty<T: serde::Serialize>(path: &PathBuf, value: &T) -> Result<(), PipelineError> {
    write_text(path, &serde_json::to_string_pretty(value).expect("serializes"))
}

fn cmd_phantom_sweep(a: PhantomSweepArgs) -> Result<(), PipelineError> {
    let levels: Vec<f64> = match &a.levels {
        Some(s) => parse_list(s, "level")?,
        None => {
            if a.num_levels < 2 {
                return Err(validation("need at least 2 levels"));
            }
            (0..a.num_levels)
                .map(|i| i as f64 / (a.num_levels - 1) as f64)
                .collect()
        }
    };
    let rows = activation_sweep(&levels, a.trials, a.seed)
        .map_err(|e| validation(e.to_string()))?;
    let mut csv = String::from("activation,ssf_mean,ssf_stderr,cn_ratio_mean,cn_ratio_stderr\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{}",
            r.activation, r.ssf_mean, r.ssf_stderr, r.cn_ratio_mean, r.cn_ratio_stderr
        )
        .expect("csv write");
    }
    write_text(&a.out, &csv)?;
    println!("wrote {}", a.out.display());
    if let Some(svg_path) = &a.svg {
        let series = vec![
            (
                "signaling score".to_string(),
                rows.iter().map(|r| (r.activation, r.ssf_mean)).collect(),
            ),
            (
                "cytonuclear ratio".to_string(),
                rows.iter().map(|r| (r.activation, r.cn_ratio_mean)).collect(),
            ),
        ];
        let svg = line_svg(&series, "activation sweep", "activation", "response");
        write_text(svg_path, &svg)?;
        println!("wrote {}", svg_path.display());
    }
    Ok(())
}

fn cmd_synth_bench(a: SynthBenchArgs) -> Result<(), PipelineError> {
    let files = if a.paired {
        let spec: PairedShiftSpec = match &a.spec {
            Some(p) => read_json(p)?,
            None => PairedShiftSpec::default(),
        };
        write_paired_corpus(&spec, &a.out_dir)?
    } else {
        let spec: SynthSpec = match &a.spec {
            Some(p) => read_json(p)?,
            None => SynthSpec::default(),
        };
        spec.validate().map_err(|e| validation(e.to_string()))?;
        write_benchmark_corpus(&spec, &a.out_dir)?
    };
    for (channel, paths) in &files.channels {
        println!("{}: {} kymographs", channel, paths.len());
    }
    println!("wrote {} files under {}", files.written.len(), a.out_dir.display());
    Ok(())
}

fn cmd_detect(a: DetectArgs) -> Result<(), PipelineError> {
    let radii_um: Vec<f64> = parse_list(&a.radii_um, "radius")?;
    let signal_channels: Vec<usize> = parse_list(&a.signal_channels, "channel")?;
    let det = DetectConfig {
        radii_um,
        threshold: a.threshold,
        normalize: !a.no_normalize,
        min_separation_px: a.min_separation_px,
    };
    let vol = cellsig::volume::Volume::load(&a.volume)
        .map_err(|e| validation(format!("{}: {e}", a.volume.display())))?;
    let item = a
        .volume
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("volume")
        .to_string();
    let table = detect_and_track(&vol, &item, a.nuclear_channel, &signal_channels, &det, a.gate_px)?;
    table.save_csv(&a.out)?;
    println!(
        "wrote {} ({} rows, {} singletons dropped)",
        a.out.display(),
        table.rows.len(),
        table.dropped_singletons
    );
    Ok(())
}

fn cmd_kymo_build(a: KymoBuildArgs) -> Result<(), PipelineError> {
    let value = KymoValue::parse(&a.value)?;
    let table = TrackTable::load_csv(&a.tracks)?;
    let k = kymo_from_table(
        &table,
        &a.source,
        &value,
        a.nx,
        a.ny,
        a.nt,
        a.downsample_min_radius_px,
    )?;
    if let Some(dir) = a.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io {
                path: dir.display().to_string(),
                source: e,
            })?;
        }
    }
    k.save(&a.out)
        .map_err(|e| PipelineError::Stage {
            stage: "kymo".into(),
            item: a.out.display().to_string(),
            detail: e.to_string(),
        })?;
    println!(
        "wrote {} ({} non-zero voxels, {} collisions)",
        a.out.display(),
        k.nonzero_count(),
        k.collisions
    );
    Ok(())
}

fn cmd_kymo_quantize(a: KymoQuantizeArgs) -> Result<(), PipelineError> {
    let out = quantize_stage(&a.inputs, &a.out_dir)?;
    println!("wrote {} quantized volumes under {}", out.len(), a.out_dir.display());
    Ok(())
}

fn cmd_ncd(a: NcdArgs) -> Result<(), PipelineError> {
    let compressor = parse_compressor(&a.compressor)?.build();
    let opts = PairwiseOptions {
        both_orders: a.both_orders,
        diagonal: !a.no_diagonal,
        workers: a.workers,
    };
    let matrix = ncd_stage(&a.inputs, compressor.as_ref(), &opts, &a.out)?;
    println!(
        "wrote {} ({} items, self bound {:.4}, max asymmetry {:.4})",
        a.out.display(),
        matrix.n,
        matrix.self_ncd_bound,
        matrix.max_asymmetry
    );
    Ok(())
}

fn cmd_embed(a: EmbedArgs) -> Result<(), PipelineError> {
    let labels: Option<BTreeMap<String, String>> = match &a.labels {
        Some(p) => Some(read_json(p)?),
        None => None,
    };
    let e = embed_stage(&a.matrix, a.k, labels.as_ref(), &a.out, a.svg.as_deref())?;
    println!(
        "wrote {} ({} items, k={} of {} requested, discarded negative mass {:.3e})",
        a.out.display(),
        e.n,
        e.k,
        e.requested_k,
        e.discarded_negative_mass
    );
    Ok(())
}

fn cmd_csf(a: CsfArgs) -> Result<(), PipelineError> {
    let report = csf_stage(&a.embedding, &a.out)?;
    println!(
        "wrote {} (items mean {:.4} std {:.4})",
        a.out.display(),
        report.items_mean,
        report.items_std
    );
    Ok(())
}

fn cmd_stats(cmd: StatsCmd) -> Result<(), PipelineError> {
    match cmd {
        StatsCmd::PairedCsf(a) => {
            let s = stats_paired_csf(&a.a, &a.b, &a.a_name, &a.b_name)?;
            write_json_pretty(&a.out, &s)?;
            match (s.p_two_sided, &s.skipped_reason) {
                (Some(p), _) => println!("wrote {} (p = {p:.4e})", a.out.display()),
                (None, Some(r)) => println!("wrote {} (test skipped: {r})", a.out.display()),
                (None, None) => println!("wrote {}", a.out.display()),
            }
        }
        StatsCmd::ShiftCorrelation(a) => {
            let s = stats_shift_correlation(&a.a, &a.b)?;
            write_json_pretty(&a.out, &s)?;
            match (s.rho, &s.skipped_reason) {
                (Some(rho), _) => println!("wrote {} (rho = {rho:.4})", a.out.display()),
                (None, Some(r)) => println!("wrote {} (skipped: {r})", a.out.display()),
                (None, None) => println!("wrote {}", a.out.display()),
            }
        }
    }
    Ok(())
}

fn cmd_run_all(a: RunAllArgs) -> Result<(), PipelineError> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(v) = a.out_dir {
        cfg.out_dir = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.workers {
        cfg.workers = Some(v);
    }
    if let Some(v) = a.embedding_k {
        cfg.embedding_k = v;
    }
    if let Some(v) = a.gate_px {
        cfg.gate_px = v;
    }
    if let Some(v) = a.threshold {
        cfg.threshold = v;
    }
    if let Some(s) = &a.radii_um {
        cfg.radii_um = parse_list(s, "radius")?;
    }
    if a.downsample {
        cfg.downsample = true;
    }
    if let Some(s) = &a.compressor {
        cfg.compressor = parse_compressor(s)?;
    }
    let manifest = run_all(&cfg)?;
    for s in &manifest.stages {
        println!("{}: {} items", s.stage, s.items);
    }
    println!(
        "{} artifacts, config {}",
        manifest.artifacts.len(),
        &manifest.config_sha256[..12]
    );
    println!("manifest: {}", cfg.out_dir.join("run_manifest.json").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::PhantomSweep(a) => cmd_phantom_sweep(a),
        Cmd::SynthBench(a) => cmd_synth_bench(a),
        Cmd::Detect(a) => cmd_detect(a),
        Cmd::Kymo { cmd } => match cmd {
            KymoCmd::Build(a) => cmd_kymo_build(a),
            KymoCmd::Quantize(a) => cmd_kymo_quantize(a),
        },
        Cmd::Ncd(a) => cmd_ncd(a),
        Cmd::Embed(a) => cmd_embed(a),
        Cmd::Csf(a) => cmd_csf(a),
        Cmd::Stats { cmd } => cmd_stats(cmd),
        Cmd::RunAll(a) => cmd_run_all(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ PipelineError::Validation(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
