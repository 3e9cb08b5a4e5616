use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use padrec::audio::load_wav;
use padrec::listing::{intensity_listing, pitch_listing, IntensityConfig, PitchConfig};
use padrec::pad::{
    build_speaker_model, parse_pad_csv, to_pad_csv, LabeledPads, PadVector, SpeakerModel,
};
use padrec::pipeline::{extract_pads, ExtractConfig, PipelineError};
use padrec::recognition::{
    self, normalize_pads, Gate, MatchPolicy, MissingPhone, Normalization, PadContour,
};
use padrec::segmentation::{decode_text, parse_label_csv, parse_textgrid, PhoneSegmentation};
use padrec::synth::{parse_corpus_spec, synth_corpus, write_corpus, SynthError};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or malformed command input; exit 2.
    Usage(String),
    /// Unreadable or inconsistent data; exit 3.
    Data(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

fn data(context: impl fmt::Display) -> impl FnOnce(String) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(
    name = "padrec",
    version,
    about = "PAD stress features for speaker recognition"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-frame pitch or intensity listing as `time_s,value` CSV.
    Listing(ListingArgs),
    /// PAD vector per labeled phone as `phone,pitch_hz,amplitude_db,duration_s` CSV.
    Extract(ExtractArgs),
    /// Speaker model JSON from one or more PAD CSV files.
    Enroll(EnrollArgs),
    /// Genuine/imposter decision against one model.
    Verify(VerifyArgs),
    /// Closest gated speaker among every `*.json` model in a directory.
    Identify(IdentifyArgs),
    /// Normalized PAD points of one phone for scatter plots.
    PlotData(PlotDataArgs),
    /// Synthetic corpus of labeled sine utterances.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ListingType {
    Pitch,
    Intensity,
}

#[derive(Debug, Args)]
struct AnalysisArgs {
    /// Frame step in milliseconds.
    #[arg(long, default_value_t = 10.0)]
    step_ms: f64,
    /// Pitch floor in Hz.
    #[arg(long, default_value_t = 75.0)]
    floor: f64,
    /// Pitch ceiling in Hz.
    #[arg(long, default_value_t = 600.0)]
    ceiling: f64,
    #[arg(long, default_value_t = 0.45)]
    voicing_threshold: f64,
    /// Offset added to 20*log10(rms).
    #[arg(long, default_value_t = 94.0)]
    calibration_db: f64,
}

impl AnalysisArgs {
    fn extract_config(&self) -> Result<ExtractConfig, CliError> {
        if !self.step_ms.is_finite() || self.step_ms <= 0.0 {
            return Err(CliError::Usage(format!(
                "--step-ms must be positive, got {}",
                self.step_ms
            )));
        }
        let step = self.step_ms / 1000.0;
        Ok(ExtractConfig {
            pitch: PitchConfig {
                floor: self.floor,
                ceiling: self.ceiling,
                voicing_threshold: self.voicing_threshold,
                step,
                ..PitchConfig::default()
            },
            intensity: IntensityConfig {
                step,
                calibration_db: self.calibration_db,
                ..IntensityConfig::default()
            },
            skip_unvoiced: false,
        })
    }
}

#[derive(Debug, Args)]
struct ListingArgs {
    #[arg(long = "type", value_enum)]
    kind: ListingType,
    input: PathBuf,
    #[command(flatten)]
    analysis: AnalysisArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    wav: PathBuf,
    /// TextGrid or `start_s,end_s,label` CSV.
    #[arg(long)]
    labels: PathBuf,
    /// TextGrid tier name; defaults to the first interval tier.
    #[arg(long)]
    tier: Option<String>,
    /// Omit segments without voiced frames instead of failing.
    #[arg(long)]
    skip_unvoiced: bool,
    #[command(flatten)]
    analysis: AnalysisArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EnrollArgs {
    #[arg(long)]
    speaker: String,
    #[arg(required = true)]
    pads: Vec<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GateArg {
    #[value(name = "per_parameter", alias = "per-parameter")]
    PerParameter,
    Distance,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormArg {
    #[value(name = "per_parameter_max", alias = "per-parameter-max")]
    PerParameterMax,
    #[value(name = "speaker_sd", alias = "speaker-sd")]
    SpeakerSd,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MissingArg {
    Strict,
    Skip,
}

#[derive(Debug, Args)]
struct PolicyArgs {
    /// Deviation range multiplier.
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, value_enum, default_value = "both")]
    gate: GateArg,
    #[arg(long, value_enum, default_value = "speaker_sd")]
    norm: NormArg,
    #[arg(long, value_enum, default_value = "strict")]
    missing: MissingArg,
}

impl PolicyArgs {
    fn policy(&self) -> Result<MatchPolicy, CliError> {
        let policy = MatchPolicy {
            k: self.k,
            gate: match self.gate {
                GateArg::PerParameter => Gate::PerParameter,
                GateArg::Distance => Gate::Distance,
                GateArg::Both => Gate::Both,
            },
            normalization: match self.norm {
                NormArg::PerParameterMax => Normalization::PerParameterMax,
                NormArg::SpeakerSd => Normalization::SpeakerSd,
                NormArg::None => Normalization::None,
            },
            missing_phone: match self.missing {
                MissingArg::Strict => MissingPhone::Strict,
                MissingArg::Skip => MissingPhone::Skip,
            },
        };
        policy
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(policy)
    }
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// PAD CSV of the test utterance, in phone order.
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IdentifyArgs {
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotDataArgs {
    #[arg(long)]
    phone: String,
    /// Model JSON or PAD CSV files. Prefix with `ID=` to set the speaker
    /// of a CSV; otherwise its file stem is used.
    #[arg(required = true)]
    inputs: Vec<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Corpus description CSV.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8000)]
    rate: u32,
    #[arg(short, long)]
    output: PathBuf,
}

pub fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Listing(args) => cmd_listing(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Enroll(args) => cmd_enroll(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Identify(args) => cmd_identify(args),
        Command::PlotData(args) => cmd_plot_data(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn emit(output: Option<&Path>, payload: &str) -> Result<(), CliError> {
    match output {
        Some(path) => fs::write(path, payload).map_err(|e| data(path.display())(e.to_string())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(payload.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Data(format!("stdout: {e}")))
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| data(path.display())(e.to_string()))?;
    decode_text(&bytes).map_err(|e| data(path.display())(e.to_string()))
}

fn read_pads(path: &Path) -> Result<LabeledPads, CliError> {
    parse_pad_csv(&read_text(path)?).map_err(|e| data(path.display())(e.to_string()))
}

fn read_model(path: &Path) -> Result<SpeakerModel, CliError> {
    SpeakerModel::from_json(&read_text(path)?).map_err(|e| data(path.display())(e.to_string()))
}

fn read_segmentation(path: &Path, tier: Option<&str>) -> Result<PhoneSegmentation, CliError> {
    let text = read_text(path)?;
    let is_textgrid = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("textgrid"))
        || text
            .trim_start_matches('\u{feff}')
            .trim_start()
            .starts_with("File type");
    let parsed = if is_textgrid {
        parse_textgrid(&text, tier)
    } else {
        parse_label_csv(&text)
    };
    parsed.map_err(|e| data(path.display())(e.to_string()))
}

fn cmd_listing(args: ListingArgs) -> Result<u8, CliError> {
    let cfg = args.analysis.extract_config()?;
    let signal = load_wav(&args.input).map_err(|e| data(args.input.display())(e.to_string()))?;
    let listing = match args.kind {
        ListingType::Pitch => {
            cfg.pitch
                .validate(signal.sample_rate())
                .map_err(|e| CliError::Usage(e.to_string()))?;
            pitch_listing(&signal, &cfg.pitch)
        }
        ListingType::Intensity => intensity_listing(&signal, &cfg.intensity),
    }
    .map_err(|e| data(args.input.display())(e.to_string()))?;
    emit(args.output.as_deref(), &listing.to_csv())?;
    Ok(0)
}

fn cmd_extract(args: ExtractArgs) -> Result<u8, CliError> {
    let mut cfg = args.analysis.extract_config()?;
    cfg.skip_unvoiced = args.skip_unvoiced;
    let signal = load_wav(&args.wav).map_err(|e| data(args.wav.display())(e.to_string()))?;
    cfg.pitch
        .validate(signal.sample_rate())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let segmentation = read_segmentation(&args.labels, args.tier.as_deref())?;
    let out = extract_pads(&signal, &segmentation, &cfg).map_err(|e| match e {
        PipelineError::Listing(e) => data(args.wav.display())(e.to_string()),
        PipelineError::Pad(e) => data(args.labels.display())(e.to_string()),
    })?;
    for skipped in &out.skipped {
        eprintln!("warning: skipped {skipped}");
    }
    emit(args.output.as_deref(), &to_pad_csv(&out.pads))?;
    Ok(0)
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

fn cmd_enroll(args: EnrollArgs) -> Result<u8, CliError> {
    if args.speaker.trim().is_empty() {
        return Err(CliError::Usage("--speaker must not be empty".into()));
    }
    let mut paths = args.pads.clone();
    paths.sort_by(|a, b| file_name(a).cmp(&file_name(b)).then_with(|| a.cmp(b)));
    let mut instances = Vec::new();
    for path in &paths {
        instances.extend(read_pads(path)?);
    }
    let note = format!(
        "{} instances from {}",
        instances.len(),
        paths
            .iter()
            .map(|p| file_name(p))
            .collect::<Vec<_>>()
            .join(", ")
    );
    let model = build_speaker_model(
        &args.speaker,
        instances.iter().map(|(l, v)| (l.as_str(), *v)),
    )
    .map_err(|e| CliError::Data(format!("enroll {}: {e}", args.speaker)))?
    .with_corpus_note(note);
    emit(args.output.as_deref(), &model.to_json())?;
    Ok(0)
}

fn read_contour(path: &Path) -> Result<PadContour, CliError> {
    let contour = PadContour::new(read_pads(path)?);
    if contour.is_empty() {
        return Err(CliError::Data(format!("{}: no PAD rows", path.display())));
    }
    Ok(contour)
}

fn decision_exit(decision: &recognition::Decision) -> u8 {
    if decision.accepted() {
        0
    } else {
        1
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<u8, CliError> {
    let policy = args.policy.policy()?;
    let model = read_model(&args.model)?;
    let test = read_contour(&args.test)?;
    let decision = recognition::verify(&model, &test, &policy)
        .map_err(|e| CliError::Data(format!("verify: {e}")))?;
    emit(args.output.as_deref(), &decision.to_json())?;
    Ok(decision_exit(&decision))
}

fn cmd_identify(args: IdentifyArgs) -> Result<u8, CliError> {
    let policy = args.policy.policy()?;
    let entries =
        fs::read_dir(&args.models).map_err(|e| data(args.models.display())(e.to_string()))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| data(args.models.display())(e.to_string()))?
            .path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no *.json models",
            args.models.display()
        )));
    }
    let models = paths
        .iter()
        .map(|p| read_model(p))
        .collect::<Result<Vec<_>, _>>()?;
    let test = read_contour(&args.test)?;
    let decision = recognition::identify(&models, &test, &policy)
        .map_err(|e| CliError::Data(format!("identify: {e}")))?;
    emit(args.output.as_deref(), &decision.to_json())?;
    Ok(decision_exit(&decision))
}

fn cmd_plot_data(args: PlotDataArgs) -> Result<u8, CliError> {
    let mut points: Vec<(String, PadVector)> = Vec::new();
    for input in &args.inputs {
        let (speaker, path) = match input.split_once('=') {
            Some((id, path)) if !id.is_empty() => (Some(id.to_owned()), PathBuf::from(path)),
            _ => (None, PathBuf::from(input)),
        };
        if path.extension().is_some_and(|e| e == "json") {
            let model = read_model(&path)?;
            if let Some(stats) = model.phone(&args.phone) {
                points.push((
                    speaker.unwrap_or_else(|| model.speaker_id().to_owned()),
                    *stats.mean(),
                ));
            }
        } else {
            let id = speaker.unwrap_or_else(|| {
                path.file_stem()
                    .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
            });
            points.extend(
                read_pads(&path)?
                    .into_iter()
                    .filter(|(label, _)| *label == args.phone)
                    .map(|(_, v)| (id.clone(), v)),
            );
        }
    }
    if points.is_empty() {
        return Err(CliError::Data(format!(
            "phone {:?} appears in no input",
            args.phone
        )));
    }
    let normalized =
        normalize_pads(&points).map_err(|e| CliError::Data(format!("plot-data: {e}")))?;
    let mut csv = String::from("speaker_id,p_norm,a_norm,d_norm\n");
    for (id, t) in normalized {
        csv.push_str(&format!("{id},{},{},{}\n", t.p, t.a, t.d));
    }
    emit(args.output.as_deref(), &csv)?;
    Ok(0)
}

fn cmd_synth(args: SynthArgs) -> Result<u8, CliError> {
    let speakers = parse_corpus_spec(&read_text(&args.spec)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.spec.display())))?;
    let corpus = synth_corpus(&speakers, args.seed, args.rate).map_err(|e| match e {
        SynthError::Io(_) | SynthError::Csv(_) => CliError::Data(e.to_string()),
        other => CliError::Usage(format!("{}: {other}", args.spec.display())),
    })?;
    let manifest =
        write_corpus(&corpus, &args.output).map_err(|e| CliError::Data(e.to_string()))?;
    emit(None, &manifest)?;
    Ok(0)
}
