//! `tcz`: compress sensor-matrix CSV files into `.tcz` archives, decode
//! them back, and measure datasets and fidelity/size trade-offs.
//!
//! Exit codes are a stable contract: 0 success, 1 usage error, 2 input
//! IO/parse error, 3 archive integrity error, 4 numerical failure.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use tcz_core::{
    compress, compute_stats, decompress, sweep, Archive, BlockReport, CompressionReport, CsvLayout,
    Error, Orientation, PipelineConfig, RankSelection, Result, SizeModel, StoredRepresentation,
    SweepTable, TimeSeriesMatrix, DEFAULT_MANTISSA_BITS, DEFAULT_RANK_TOLERANCE,
    DEFAULT_SWEEP_RATIOS,
};

const EXIT_USAGE: i32 = 1;
const EXIT_INPUT: i32 = 2;
const EXIT_ARCHIVE: i32 = 3;
const EXIT_NUMERICAL: i32 = 4;

#[derive(Parser)]
#[command(
    name = "tcz",
    version,
    about = "Cascaded lossy compressor for sensor-matrix time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a CSV matrix into a .tcz archive.
    Compress(CompressArgs),
    /// Decode a .tcz archive back to a CSV matrix.
    Decompress(DecompressArgs),
    /// Report shape, rank, sparsity, and the eigen spectrum of a CSV matrix.
    Analyze(AnalyzeArgs),
    /// Measure the fidelity/size trade-off across a list of target ratios.
    Sweep(SweepArgs),
}

/// Which matrix axis the rows of a CSV file represent.
#[derive(Clone, Copy, Default, ValueEnum)]
enum OrientationArg {
    #[default]
    Devices,
    Timestamps,
}

impl OrientationArg {
    fn layout(self) -> CsvLayout {
        CsvLayout {
            orientation: match self {
                OrientationArg::Devices => Orientation::DevicesAsRows,
                OrientationArg::Timestamps => Orientation::TimestampsAsRows,
            },
            ..CsvLayout::default()
        }
    }
}

/// Size accounting used when resolving a target ratio.
#[derive(Clone, Copy, ValueEnum)]
enum SizeModelArg {
    /// Stored entry counts: (m*t) / ((m+1+t)*k).
    Entries,
    /// Measured container bytes.
    Bytes,
}

#[derive(Args)]
struct CsvArgs {
    /// Which axis the CSV rows represent.
    #[arg(long, value_enum, default_value_t)]
    orientation: OrientationArg,
}

#[derive(Args)]
struct CodecArgs {
    /// Mantissa width in bits for quantized factor blocks.
    #[arg(long, value_name = "W", default_value_t = DEFAULT_MANTISSA_BITS,
          value_parser = clap::value_parser!(u8).range(4..=32))]
    mantissa_bits: u8,
    /// Store factors as raw 8-byte floats instead of quantizing them.
    #[arg(long)]
    no_normalization: bool,
    /// Never switch zero-heavy blocks to the coordinate-list layout.
    #[arg(long)]
    no_sparsity: bool,
    /// Size accounting used for ratio targets and reports.
    #[arg(long, value_enum, default_value_t = SizeModelArg::Entries)]
    size_model: SizeModelArg,
    /// Bytes charged per entry of the uncompressed baseline.
    #[arg(long, value_name = "4|8", default_value_t = 8, value_parser = parse_raw_float_bytes)]
    raw_float_bytes: u8,
}

impl CodecArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            mantissa_bits: self.mantissa_bits,
            normalization: !self.no_normalization,
            sparsity: !self.no_normalization && !self.no_sparsity,
            size_model: match self.size_model {
                SizeModelArg::Entries => SizeModel::EntryCount,
                SizeModelArg::Bytes => SizeModel::MeasuredBytes,
            },
            raw_float_bytes: self.raw_float_bytes,
            ..PipelineConfig::default()
        }
    }
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("rank_choice").required(true).multiple(false)))]
struct CompressArgs {
    /// Input CSV matrix.
    input: PathBuf,
    /// Output archive path.
    output: PathBuf,
    /// Number of retained patterns (singular triplets).
    #[arg(short = 'k', long = "rank", value_name = "N", group = "rank_choice")]
    k: Option<usize>,
    /// Largest k whose compression ratio still meets this target.
    #[arg(long, value_name = "R", group = "rank_choice")]
    target_ratio: Option<f64>,
    #[command(flatten)]
    codec: CodecArgs,
    #[command(flatten)]
    csv: CsvArgs,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DecompressArgs {
    /// Input archive.
    input: PathBuf,
    /// Output CSV path.
    output: PathBuf,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input CSV matrix.
    input: PathBuf,
    /// Destination for the normalized spectrum CSV
    /// (default: <input stem>.spectrum.csv next to the input).
    #[arg(long, value_name = "PATH")]
    spectrum_out: Option<PathBuf>,
    /// Bytes charged per entry when reporting the uncompressed size.
    #[arg(long, value_name = "4|8", default_value_t = 8, value_parser = parse_raw_float_bytes)]
    raw_float_bytes: u8,
    #[command(flatten)]
    csv: CsvArgs,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Input CSV matrix.
    input: PathBuf,
    /// Comma-separated target ratios (default: 78,39,25,19,15,9,5,4).
    #[arg(long, value_name = "R1,R2,...", value_delimiter = ',', num_args = 1..)]
    ratios: Option<Vec<f64>>,
    /// Destination for the trade-off table CSV
    /// (default: <input stem>.sweep.csv next to the input).
    #[arg(long, value_name = "PATH")]
    table_out: Option<PathBuf>,
    /// Destination for the error-vs-relative-rank curve CSV
    /// (default: <input stem>.mae-curve.csv next to the input).
    #[arg(long, value_name = "PATH")]
    curve_out: Option<PathBuf>,
    #[command(flatten)]
    codec: CodecArgs,
    #[command(flatten)]
    csv: CsvArgs,
    /// Print the table as JSON instead of text.
    #[arg(long)]
    json: bool,
}

fn parse_raw_float_bytes(s: &str) -> std::result::Result<u8, String> {
    match s {
        "4" => Ok(4),
        "8" => Ok(8),
        _ => Err(String::from("must be 4 or 8")),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_)
        | Error::EmptyInput
        | Error::RaggedRow { .. }
        | Error::ParseNumber { .. }
        | Error::NonFiniteCell { .. } => EXIT_INPUT,
        Error::BadMagic { .. }
        | Error::UnsupportedVersion { .. }
        | Error::LengthMismatch { .. }
        | Error::CrcMismatch { .. }
        | Error::InvalidArchive { .. }
        | Error::CorruptSparseBlock { .. } => EXIT_ARCHIVE,
        Error::SvdDidNotConverge { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compress(args) => run_compress(args),
        Command::Decompress(args) => run_decompress(args),
        Command::Analyze(args) => run_analyze(args),
        Command::Sweep(args) => run_sweep(args),
    }
}

/// Writes a command's stdout in one shot. A broken pipe (consumer such as
/// `head` closed early) is a normal exit, not a panic; other write
/// failures are IO errors.
fn print_stdout(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: {e}");
        std::process::exit(EXIT_INPUT);
    }
}

fn load_matrix(path: &Path, csv: &CsvArgs) -> Result<TimeSeriesMatrix> {
    let file = fs::File::open(path)?;
    TimeSeriesMatrix::from_csv(BufReader::new(file), &csv.orientation.layout())
}

/// `data.csv` -> `data.<suffix>` next to the input.
fn sibling(input: &Path, suffix: &str) -> PathBuf {
    let stem = input.file_stem().unwrap_or(input.as_os_str());
    input.with_file_name(format!("{}.{suffix}", stem.to_string_lossy()))
}

fn run_compress(args: CompressArgs) -> Result<()> {
    let x = load_matrix(&args.input, &args.csv)?;
    let selection = match (args.k, args.target_ratio) {
        (Some(k), None) => RankSelection::Fixed(k),
        (None, Some(r)) => RankSelection::TargetRatio(r),
        _ => unreachable!("clap enforces exactly one selector"),
    };
    let (archive, report) = compress(&x, selection, &args.codec.config())?;
    fs::write(&args.output, archive.to_bytes())?;
    if args.json {
        print_stdout(&json_line(
            serde_json::to_string_pretty(&report).expect("report is serializable"),
        ));
    } else {
        let mut text = render_report(&report);
        writeln!(text, "{:<22}{}", "archive:", args.output.display()).unwrap();
        print_stdout(&text);
    }
    Ok(())
}

fn json_line(mut pretty: String) -> String {
    pretty.push('\n');
    pretty
}

fn render_block(name: &str, b: &BlockReport) -> String {
    let body = match b.representation {
        StoredRepresentation::Raw => String::from("raw f64"),
        StoredRepresentation::Dense => format!("dense {}b", b.mantissa_bits),
        StoredRepresentation::Sparse => {
            format!("sparse {}b nnz={}", b.mantissa_bits, b.nnz.unwrap_or(0))
        }
    };
    format!("{name} {body} ({} B)", b.payload_bytes)
}

fn render_report(r: &CompressionReport) -> String {
    let mut out = String::new();
    let mut line = |k: &str, v: String| writeln!(out, "{k:<22}{v}").unwrap();
    line(
        "matrix:",
        format!(
            "{} x {} ({} entries, rank {})",
            r.m, r.t, r.uncompressed_entries, r.rank
        ),
    );
    line("retained patterns:", format!("k = {}", r.k));
    if let Some(target) = r.target_ratio {
        let model = match r.size_model {
            SizeModel::EntryCount => "entries",
            SizeModel::MeasuredBytes => "bytes",
        };
        let note = if r.best_effort { " [best effort]" } else { "" };
        line("target ratio:", format!("{target} ({model}){note}"));
    }
    line(
        "ratio:",
        format!(
            "{:.2} (entries), {:.2} (bytes)",
            r.compression_ratio_entries, r.compression_ratio_bytes
        ),
    );
    line(
        "stored entries:",
        format!("{} of {}", r.stored_entries, r.uncompressed_entries),
    );
    line(
        "archive bytes:",
        format!(
            "{} (payload {} + container {})",
            r.archive_bytes,
            r.archive_bytes - r.container_overhead_bytes,
            r.container_overhead_bytes
        ),
    );
    line(
        "stage bytes:",
        format!(
            "factors {} -> quantized {} -> final {}",
            r.stage_bytes.svd, r.stage_bytes.normalized, r.stage_bytes.sparse
        ),
    );
    line(
        "mean abs error:",
        format!(
            "{:.6e} (factor truncation alone {:.6e})",
            r.mae, r.mae_svd_only
        ),
    );
    line("max abs error:", format!("{:.6e}", r.max_abs_error));
    line(
        "blocks:",
        format!(
            "{} | {} | {}",
            render_block("U", &r.blocks.u),
            render_block("sigma", &r.blocks.sigma),
            render_block("V", &r.blocks.v)
        ),
    );
    out
}

fn run_decompress(args: DecompressArgs) -> Result<()> {
    let bytes = fs::read(&args.input)?;
    let archive = Archive::from_bytes(&bytes)?;
    let x = decompress(&archive)?;
    let file = fs::File::create(&args.output)?;
    let mut writer = BufWriter::new(file);
    x.write_csv(&mut writer, &args.csv.orientation.layout())?;
    writer.flush()?;
    Ok(())
}

fn run_analyze(args: AnalyzeArgs) -> Result<()> {
    let x = load_matrix(&args.input, &args.csv)?;
    let stats = compute_stats(&x, DEFAULT_RANK_TOLERANCE)?;
    let (m, t) = x.shape();
    let uncompressed_kb = (m * t * args.raw_float_bytes as usize) as f64 / 1000.0;

    let spectrum_path = args
        .spectrum_out
        .unwrap_or_else(|| sibling(&args.input, "spectrum.csv"));
    let mut spectrum_csv = String::from("index,k_over_rank,normalized_eigenvalue\n");
    for (i, nv) in stats.normalized_spectrum.iter().enumerate() {
        let k_over_rank = if stats.numerical_rank > 0 {
            (i + 1) as f64 / stats.numerical_rank as f64
        } else {
            0.0
        };
        writeln!(spectrum_csv, "{},{},{}", i + 1, k_over_rank, nv).unwrap();
    }
    fs::write(&spectrum_path, spectrum_csv)?;

    if args.json {
        let report = serde_json::json!({
            "m": m,
            "t": t,
            "numerical_rank": stats.numerical_rank,
            "sparsity": stats.sparsity,
            "uncompressed_kb": uncompressed_kb,
            "eigen_spectrum": stats.eigen_spectrum,
            "normalized_spectrum": stats.normalized_spectrum,
            "spectrum_csv": spectrum_path.display().to_string(),
        });
        print_stdout(&json_line(
            serde_json::to_string_pretty(&report).expect("report is serializable"),
        ));
    } else {
        let mut text = String::new();
        writeln!(text, "{:<22}{} x {}", "matrix:", m, t).unwrap();
        writeln!(text, "{:<22}{}", "numerical rank:", stats.numerical_rank).unwrap();
        writeln!(text, "{:<22}{}", "sparsity:", stats.sparsity).unwrap();
        writeln!(text, "{:<22}{} kB", "uncompressed size:", uncompressed_kb).unwrap();
        writeln!(text, "{:<22}{}", "spectrum csv:", spectrum_path.display()).unwrap();
        print_stdout(&text);
    }
    Ok(())
}

fn render_sweep(table: &SweepTable) -> String {
    let mut out = format!("rank {}\n", table.rank);
    writeln!(
        out,
        "{:>12} {:>5} {:>16} {:>14} {:>12} {:>12} {:>12}",
        "target_ratio", "k", "ratio(entries)", "ratio(bytes)", "mae", "max_err", "bytes"
    )
    .unwrap();
    for r in &table.rows {
        writeln!(
            out,
            "{:>12} {:>5} {:>16.2} {:>14.2} {:>12.4e} {:>12.4e} {:>12}{}",
            r.target_ratio,
            r.k,
            r.achieved_ratio_entries,
            r.achieved_ratio_bytes,
            r.mae,
            r.max_abs_error,
            r.bytes_stage3,
            if r.best_effort { "  [best effort]" } else { "" }
        )
        .unwrap();
    }
    out
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let x = load_matrix(&args.input, &args.csv)?;
    let ratios = args.ratios.unwrap_or_else(|| DEFAULT_SWEEP_RATIOS.to_vec());
    let table = sweep(&x, &ratios, &args.codec.config())?;

    let table_path = args
        .table_out
        .unwrap_or_else(|| sibling(&args.input, "sweep.csv"));
    fs::write(&table_path, table.to_csv())?;
    let curve_path = args
        .curve_out
        .unwrap_or_else(|| sibling(&args.input, "mae-curve.csv"));
    fs::write(&curve_path, table.error_curve_csv())?;

    if args.json {
        let report = serde_json::json!({
            "rank": table.rank,
            "rows": table.rows,
            "table_csv": table_path.display().to_string(),
            "curve_csv": curve_path.display().to_string(),
        });
        print_stdout(&json_line(
            serde_json::to_string_pretty(&report).expect("table is serializable"),
        ));
    } else {
        let mut text = render_sweep(&table);
        writeln!(text, "{:<22}{}", "table csv:", table_path.display()).unwrap();
        writeln!(text, "{:<22}{}", "curve csv:", curve_path.display()).unwrap();
        print_stdout(&text);
    }
    Ok(())
}
