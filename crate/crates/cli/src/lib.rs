//! Command-line frontend for lipmotion.
//!
//! Exit codes: 0 on success, 1 on a data or processing error, 2 on a usage
//! error. Every output file is written to a temporary sibling and renamed
//! into place, so a failed run leaves no partial file behind.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lipmotion::audio::{read_wav, synthesize_method_d, write_wav, ModulationParams, Smoothing};
use lipmotion::builder::{build_viseme_with_stats, BuilderConfig, SegmentationMode};
use lipmotion::coarticulation::{plan_script, synthesize, write_script, FusionParams, Method, TimedScript};
use lipmotion::library::{DEFAULT_SAMPLE_COUNT, LIBRARY_FORMAT_VERSION};
use lipmotion::metrics::{evaluate, write_jerk_csv};
use lipmotion::pinyin::{normalize_syllable, VisemeId};
use lipmotion::retarget::{load_calibration, retarget_series, write_actuator_csv, CalibrationMatrix};
use lipmotion::synthetic::{generate_corpus, DEFAULT_SEED};
use lipmotion::{
    deserialize_library, load_mapping_table, parse_capture_csv, serialize_library, syllable_to_visemes,
    write_trajectory_csv, FrameSeries, MappingTable, VisemeLibrary,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "lipmotion",
    version,
    about = "Viseme library building, coarticulation synthesis, actuator retargeting and motion metrics",
    after_help = "File formats:\n  \
        capture / trajectory CSV  header `time_s` then the 27 jaw and mouth blendshape names, values in [0, 1]\n  \
        library JSON              format version 1 (`format_version`, `sample_count`, `visemes`)\n  \
        script JSON               {\"events\": [{\"syllable\", \"start_s\", \"duration_s\"}], \"total_duration_s\"}\n  \
        mapping table JSON        {\"name\", \"initials\": {..}, \"finals\": {..}}\n  \
        calibration JSON          {\"name\", \"actuators\": [{\"id\", \"weights\": {channel: w}, \"min\", \"max\", \"neutral\"}]}\n  \
        audio                     16-bit PCM WAV, multichannel input is averaged"
)]
pub struct Cli {
    /// Seed for synthetic data generation.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output frame rate of synthesized trajectories.
    #[arg(long, global = true, default_value_t = 60.0)]
    pub fps: f64,
    /// Suppress informational output on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build (or update) a viseme library from one capture CSV per viseme.
    BuildLib(BuildLibArgs),
    /// Synthesize a 27-channel trajectory CSV from a timed script.
    Synth(SynthArgs),
    /// Map a trajectory CSV to actuator commands.
    Retarget(RetargetArgs),
    /// Score a generated trajectory against a reference.
    Eval(EvalArgs),
    /// Print the viseme sequence of each syllable.
    Map(MapArgs),
    /// Write synthetic captures, scripts, audio and references.
    GenSynthetic(GenArgs),
}

#[derive(Args, Debug)]
pub struct BuildLibArgs {
    /// Captures as `VISEME_ID=path.csv`, e.g. `V8_A=captures/V8_A.csv`.
    pub inputs: Vec<String>,
    /// Directory of `<VISEME_ID>.csv` captures; other files are ignored.
    #[arg(long)]
    pub dir: Option<PathBuf>,
    /// Library file; existing entries are kept unless rebuilt.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Start from an empty library even if `--out` exists.
    #[arg(long)]
    pub fresh: bool,
    /// Odd moving-average window in frames.
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, default_value_t = 3)]
    pub min_cycles: usize,
    /// Minimum jawOpen peak height.
    #[arg(long, default_value_t = 0.15)]
    pub peak_height: f64,
    /// Minimum peak separation in seconds.
    #[arg(long, default_value_t = 0.25)]
    pub peak_separation: f64,
    #[arg(long, value_enum, default_value_t = Segmentation::ValleyToValley)]
    pub segmentation: Segmentation,
    /// Samples per stored trajectory.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_COUNT)]
    pub samples: usize,
    /// Blend trajectory ends toward the cycle's rest pose.
    #[arg(long)]
    pub rest_align: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Segmentation {
    ValleyToValley,
    PeakToPeak,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub script: PathBuf,
    #[arg(long)]
    pub library: PathBuf,
    /// Mapping table JSON; the built-in table when omitted.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// A static targets, B hard slots, C fusion, D fusion with audio energy.
    #[arg(long, default_value = "C", value_parser = parse_method)]
    pub method: Method,
    /// WAV file driving the energy envelope (required by method D).
    #[arg(long)]
    pub audio: Option<PathBuf>,
    /// Minimum gain applied where the audio is silent.
    #[arg(long, default_value_t = 0.2)]
    pub gain_floor: f64,
    /// EMA smoothing factor.
    #[arg(long, default_value_t = 0.3)]
    pub ema_alpha: f64,
    /// Use a centered moving average of this many frames instead of the EMA.
    #[arg(long)]
    pub moving_average: Option<usize>,
    /// Dual-fusion exponent.
    #[arg(long, default_value_t = 0.7)]
    pub a: f64,
    /// Three-viseme split point.
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    /// Print the viseme decomposition of every event.
    #[arg(long, short)]
    pub verbose: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

#[derive(Args, Debug)]
pub struct RetargetArgs {
    /// Trajectory CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Calibration JSON; the built-in 14-actuator demo when omitted.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub generated: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Report file; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Per-frame jerk of the generated series on the active channels.
    #[arg(long)]
    pub jerk_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MapArgs {
    /// Toneless Pinyin syllables; quoted sentences are split on whitespace.
    #[arg(required = true)]
    pub syllables: Vec<String>,
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Parses `args` and runs the command, printing errors to stderr.
pub fn main_with_args<I, S>(args: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if !(cli.fps > 0.0 && cli.fps.is_finite()) {
        return Err(CliError::Usage(format!("--fps must be positive, got {}", cli.fps)));
    }
    let log = Log { quiet: cli.quiet };
    match &cli.command {
        Command::BuildLib(a) => build_lib(a, &log),
        Command::Synth(a) => synth(a, cli.fps, &log),
        Command::Retarget(a) => retarget(a, &log),
        Command::Eval(a) => eval(a),
        Command::Map(a) => map(a),
        Command::GenSynthetic(a) => gen_synthetic(a, cli.seed, &log),
    }
}

struct Log {
    quiet: bool,
}

impl Log {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Writes through a temporary file in the target directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
    tmp.write_all(bytes)
        .map_err(|e| data(format!("{}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| data(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn read_series(path: &Path) -> Result<FrameSeries, CliError> {
    parse_capture_csv(&read_text(path)?).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn read_table(path: Option<&Path>) -> Result<MappingTable, CliError> {
    match path {
        None => Ok(MappingTable::default_table()),
        Some(p) => load_mapping_table(&read_text(p)?).map_err(|e| data(format!("{}: {e}", p.display()))),
    }
}

fn build_lib(args: &BuildLibArgs, log: &Log) -> Result<(), CliError> {
    let mut inputs: Vec<(VisemeId, PathBuf)> = Vec::new();
    for spec in &args.inputs {
        let (id, path) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("input `{spec}` is not of the form VISEME_ID=path")))?;
        let id: VisemeId = id
            .parse()
            .map_err(|_| CliError::Usage(format!("unknown viseme id `{id}` in `{spec}`")))?;
        inputs.push((id, PathBuf::from(path)));
    }
    if let Some(dir) = &args.dir {
        let entries = std::fs::read_dir(dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry.map_err(data)?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("csv") {
                continue;
            }
            if let Some(id) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse().ok()) {
                inputs.push((id, path));
            }
        }
    }
    if inputs.is_empty() {
        return Err(CliError::Usage(
            "no captures given (use VISEME_ID=path or --dir)".into(),
        ));
    }
    inputs.sort();
    if let Some(w) = inputs.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(CliError::Usage(format!("viseme {} given more than once", w[0].0)));
    }

    let cfg = BuilderConfig {
        smoothing_window: args.window,
        peak_min_height: args.peak_height,
        peak_min_separation: args.peak_separation,
        segmentation_mode: match args.segmentation {
            Segmentation::ValleyToValley => SegmentationMode::ValleyToValley,
            Segmentation::PeakToPeak => SegmentationMode::PeakToPeak,
        },
        target_samples: args.samples,
        min_cycles: args.min_cycles,
        rest_align: args.rest_align,
        ..BuilderConfig::default()
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let mut library: VisemeLibrary = if args.out.exists() && !args.fresh {
        let lib: VisemeLibrary =
            deserialize_library(&read_text(&args.out)?).map_err(|e| data(format!("{}: {e}", args.out.display())))?;
        if lib.sample_count() != args.samples {
            return Err(data(format!(
                "{} stores {} samples per viseme but --samples is {}",
                args.out.display(),
                lib.sample_count(),
                args.samples
            )));
        }
        lib
    } else {
        VisemeLibrary::new(args.samples).map_err(data)?
    };

    // visemes are independent, so each is built on its own thread
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = inputs
            .iter()
            .map(|(id, path)| {
                let cfg = &cfg;
                s.spawn(move || {
                    let series = read_series(path)?;
                    build_viseme_with_stats(&series, cfg)
                        .map_err(|e| data(format!("viseme {id} ({}): {e}", path.display())))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("builder thread")).collect()
    });

    for ((id, _), result) in inputs.iter().zip(results) {
        let (trajectory, stats) = result?;
        log.info(format!(
            "{:<8} cycles {:>2}  medoid {} ({} frames)  residual {:.6}",
            id.to_string(),
            stats.cycles,
            stats.medoid,
            stats.medoid_frames,
            stats.residual
        ));
        library.insert(*id, trajectory).map_err(data)?;
    }
    write_atomic(&args.out, serialize_library(&library).as_bytes())?;
    log.info(format!(
        "wrote {} (format {LIBRARY_FORMAT_VERSION}, {} visemes)",
        args.out.display(),
        library.len()
    ));
    Ok(())
}

fn synth(args: &SynthArgs, fps: f64, log: &Log) -> Result<(), CliError> {
    if args.method == Method::D && args.audio.is_none() {
        return Err(CliError::Usage("method D requires --audio".into()));
    }
    let params = FusionParams {
        a: args.a,
        lambda: args.lambda,
        method: args.method,
        fps,
        ..FusionParams::default()
    };
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let modulation = ModulationParams {
        floor_gain: args.gain_floor,
        ema_alpha: args.ema_alpha,
        smoothing: match args.moving_average {
            Some(frames) => Smoothing::MovingAverage { frames },
            None => Smoothing::Ema,
        },
        ..ModulationParams::default()
    };
    modulation.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let script: TimedScript = read_text(&args.script)?
        .parse()
        .map_err(|e| data(format!("{}: {e}", args.script.display())))?;
    let library: VisemeLibrary = deserialize_library(&read_text(&args.library)?)
        .map_err(|e| data(format!("{}: {e}", args.library.display())))?;
    let table = read_table(args.table.as_deref())?;

    if args.verbose && !log.quiet {
        let plan = plan_script(&script, &library, &table).map_err(data)?;
        for e in &plan {
            eprintln!(
                "event {:>3}  {:>7.3} s + {:.3} s  {:<8} {}",
                e.index, e.start, e.duration, e.syllable, e.sequence
            );
        }
    }

    let series = match args.method {
        Method::D => {
            let path = args.audio.as_ref().expect("checked above");
            let bytes = std::fs::read(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
            let audio = read_wav(&bytes).map_err(|e| data(format!("{}: {e}", path.display())))?;
            synthesize_method_d(&script, &library, &table, &params, &audio, &modulation).map_err(data)?
        }
        _ => synthesize(&script, &library, &table, &params).map_err(data)?,
    };
    write_atomic(&args.out, write_trajectory_csv(&series).as_bytes())?;
    log.info(format!(
        "wrote {} ({} frames at {} FPS, method {:?})",
        args.out.display(),
        series.len(),
        fps,
        args.method
    ));
    Ok(())
}

fn retarget(args: &RetargetArgs, log: &Log) -> Result<(), CliError> {
    let calib = match &args.calibration {
        None => CalibrationMatrix::demo(),
        Some(p) => load_calibration(&read_text(p)?).map_err(|e| data(format!("{}: {e}", p.display())))?,
    };
    let series = read_series(&args.input)?;
    let result = retarget_series(&series, &calib);
    write_atomic(&args.out, write_actuator_csv(&result.frames, &calib).as_bytes())?;
    let mut msg = format!(
        "wrote {} ({} frames, {} actuators); clamped {} of {} commands",
        args.out.display(),
        result.frames.len(),
        calib.len(),
        result.stats.total(),
        result.frames.len() * calib.len()
    );
    for (id, n) in calib.ids().zip(&result.stats.per_actuator) {
        if *n > 0 {
            let _ = write!(msg, "\n  {id:<20} {n}");
        }
    }
    log.info(msg);
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let generated = read_series(&args.generated)?;
    let reference = read_series(&args.reference)?;
    let report = evaluate(&generated, &reference).map_err(data)?;
    let text = report.to_text();
    match &args.out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    if let Some(p) = &args.jerk_csv {
        let csv = write_jerk_csv(&generated, &report.active_channels).map_err(data)?;
        write_atomic(p, csv.as_bytes())?;
    }
    Ok(())
}

fn map(args: &MapArgs) -> Result<(), CliError> {
    let table = read_table(args.table.as_deref())?;
    let mut out = String::new();
    for raw in args.syllables.iter().flat_map(|s| s.split_whitespace()) {
        let syllable = normalize_syllable(raw);
        let seq = syllable_to_visemes(&syllable, &table).map_err(|e| data(format!("`{raw}`: {e}")))?;
        let _ = writeln!(out, "{syllable}\t{seq}");
    }
    print!("{out}");
    Ok(())
}

fn gen_synthetic(args: &GenArgs, seed: u64, log: &Log) -> Result<(), CliError> {
    let table = MappingTable::default_table();
    let corpus = generate_corpus(seed, &table);
    let out = &args.out;
    for (id, capture) in &corpus.captures {
        write_atomic(
            &out.join("captures").join(format!("{id}.csv")),
            write_trajectory_csv(capture).as_bytes(),
        )?;
    }
    for s in &corpus.sentences {
        write_atomic(
            &out.join("scripts").join(format!("{}.json", s.id)),
            write_script(&s.script).as_bytes(),
        )?;
        write_atomic(
            &out.join("audio").join(format!("{}.wav", s.id)),
            &write_wav(&s.audio.samples, s.audio.sample_rate),
        )?;
        write_atomic(
            &out.join("reference").join(format!("{}.csv", s.id)),
            write_trajectory_csv(&s.reference).as_bytes(),
        )?;
    }
    write_atomic(
        &out.join("calib_14dof_demo.json"),
        CalibrationMatrix::demo_source().as_bytes(),
    )?;
    log.info(format!(
        "wrote {} captures and {} sentences to {} (seed {seed})",
        corpus.captures.len(),
        corpus.sentences.len(),
        out.display()
    ));
    Ok(())
}
