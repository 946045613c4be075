use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use flamegan::detect::{detect_dir, DetectionEvent};
use flamegan::eval::{
    format_table, run_ablation, run_table, split_dataset, Accounting, AblationMode, DatasetManifest, Datasets,
    MetricsRow, Representation, SplitSpec, SyntheticDataset,
};
use flamegan::gan::{
    config_hash, load_model, save_model, train_stage1, train_stage2, ModelBundle, NetSpec, TrainConfig, TrainingStage,
};
use flamegan::slicing::{build_cube, clip_blocks};
use flamegan::verify::gradcheck_suite;
use flamegan::video_io::{read_frame_sequence, synth_video, write_frame_sequence, Label, SynthKind, SynthSpec};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "flamegan", version, about = "Flame detection with temporal slices and a two-stage DCGAN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic clip, or a whole labelled dataset, as frame directories.
    Synth(SynthArgs),
    /// Cut a frame directory into slice cubes.
    Slice(SliceArgs),
    /// Stage 1: adversarial training on the flame clips of a dataset.
    Train(TrainArgs),
    /// Stage 2: refine a stage-1 discriminator with non-flame clips.
    Refine(RefineArgs),
    /// Frame-based TNR/TPR of a model on one dataset partition.
    Eval(EvalArgs),
    /// Train and evaluate the ablation modes.
    Ablate(AblateArgs),
    /// Score a frame directory block by block, one JSON line per block.
    Detect(DetectArgs),
    /// Finite-difference verification of every layer and the toy discriminator.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DatasetPreset {
    Toy,
    Chromatic,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Partition {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args)]
struct SpecArgs {
    /// NetSpec JSON file.
    #[arg(long, conflicts_with = "toy")]
    spec: Option<PathBuf>,
    /// Toy-scale spec: 16-frame blocks of 32×32 px.
    #[arg(long)]
    toy: bool,
}

impl SpecArgs {
    fn given(&self) -> bool {
        self.spec.is_some() || self.toy
    }

    fn resolve(&self) -> Result<NetSpec> {
        let spec = match (&self.spec, self.toy) {
            (Some(path), _) => read_json(path)?,
            (None, true) => NetSpec::toy(),
            (None, false) => NetSpec::full_scale(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// TrainConfig JSON file; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable dropout and input noise during training.
    #[arg(long)]
    deterministic: bool,
}

impl ConfigArgs {
    fn resolve(&self, base: Option<TrainConfig>) -> Result<TrainConfig> {
        let mut config = match &self.config {
            Some(path) => read_json(path)?,
            None => base.unwrap_or_default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.deterministic |= self.deterministic;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, required_unless_present = "dataset", conflicts_with = "dataset")]
    kind: Option<SynthKind>,
    /// Write a labelled dataset (one sub-directory per clip) instead of one clip.
    #[arg(long, value_enum)]
    dataset: Option<DatasetPreset>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Clip length in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Frame edge length in pixels.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    flicker_band: f64,
    /// Periodic lights also show a flame-coloured region.
    #[arg(long)]
    mimic_flame: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SliceArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset root: one frame directory per clip.
    #[arg(long)]
    input: PathBuf,
    /// Checkpoint path; the sidecar goes to `<path>.json`.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    input: PathBuf,
    /// Stage-1 model; only its discriminator is used.
    #[arg(long)]
    gan_model: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f32,
    /// Split seed; defaults to the model's training seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "test")]
    split: Partition,
    /// Count each block once instead of once per frame.
    #[arg(long)]
    per_block: bool,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    input: PathBuf,
    /// One mode; all four when omitted.
    #[arg(long)]
    mode: Option<AblationMode>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f32,
    #[arg(long)]
    per_block: bool,
    /// Also write the JSON report here.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Frame directory.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f32,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 17)]
    seed: u64,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn check_threshold(t: f32) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        bail!("threshold {t} must lie in [0, 1]");
    }
    Ok(())
}

fn cube_dims(spec: &NetSpec) -> Result<(usize, usize)> {
    spec.cube_dims()
        .ok_or_else(|| flamegan::Error::Config(format!("model input {:?} is not a slice cube", spec.input_shape)).into())
}

/// Reject an explicit `--spec`/`--toy` that disagrees with the model.
fn check_model_spec(model: &ModelBundle, spec: &SpecArgs) -> Result<()> {
    if spec.given() {
        let want = spec.resolve()?;
        if &want != model.spec() {
            return Err(flamegan::Error::Config(format!(
                "model was built for input {:?}, requested spec has {:?}",
                model.spec().input_shape,
                want.input_shape
            ))
            .into());
        }
    }
    Ok(())
}

fn load_split(root: &Path, spec: &NetSpec, seed: u64) -> Result<Datasets> {
    let (t, s) = cube_dims(spec)?;
    let manifest = DatasetManifest::from_dir(root, t, s)?;
    let [train, val, test] = split_dataset(&manifest, &SplitSpec::new([3.0, 1.0, 1.0], seed)?)?;
    Ok(Datasets { train, val, test })
}

fn synth(args: SynthArgs) -> Result<()> {
    if let Some(preset) = args.dataset {
        let mut ds = match preset {
            DatasetPreset::Toy => SyntheticDataset::toy(args.seed),
            DatasetPreset::Chromatic => SyntheticDataset::chromatic(args.seed),
        };
        ds.fps = args.fps;
        ds.duration_s = args.duration.unwrap_or(ds.duration_s);
        ds.frame_size = args.size.unwrap_or(ds.frame_size);
        ds.mimic_flame |= args.mimic_flame;
        let n = ds.flame_clips + ds.nonflame_clips;
        let specs: Vec<SynthSpec> = (0..n).map(|i| SynthSpec { flicker_band_hz: args.flicker_band, ..ds.clip_spec(i) }).collect();
        for s in &specs {
            s.validate()?;
        }
        for s in &specs {
            let seq = synth_video(s)?;
            write_frame_sequence(&seq, &args.output.join(&seq.source_id))?;
        }
        eprintln!("wrote {n} clips under {}", args.output.display());
        return Ok(());
    }
    let kind = args.kind.expect("clap enforces --kind or --dataset");
    let spec = SynthSpec {
        fps: args.fps,
        duration_s: args.duration.unwrap_or(10.0),
        width: args.size.unwrap_or(128),
        height: args.size.unwrap_or(128),
        flicker_band_hz: args.flicker_band,
        mimic_flame: args.mimic_flame,
        ..SynthSpec::new(kind, args.seed)
    };
    spec.validate()?;
    let seq = synth_video(&spec)?;
    write_frame_sequence(&seq, &args.output)?;
    eprintln!("wrote {} frames ({} label) to {}", seq.len(), seq.label, args.output.display());
    Ok(())
}

#[derive(Serialize)]
struct SliceReport {
    source_id: String,
    block_len: usize,
    frame_size: usize,
    cubes: Vec<PathBuf>,
}

fn slice(args: SliceArgs) -> Result<()> {
    let (t, s) = cube_dims(&args.spec.resolve()?)?;
    let seq = read_frame_sequence(&args.input)?;
    let blocks = clip_blocks(&seq, t, s)?;
    std::fs::create_dir_all(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    let mut cubes = Vec::with_capacity(blocks.len());
    for (i, block) in blocks.iter().enumerate() {
        let path = args.output.join(format!("cube_{i:04}.scub"));
        let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        build_cube(block).write_to(std::io::BufWriter::new(file))?;
        cubes.push(path);
    }
    let report = SliceReport { source_id: seq.source_id.clone(), block_len: t, frame_size: s, cubes };
    match args.format.unwrap_or(Format::Text) {
        Format::Json => print_json(&report)?,
        Format::Text => println!("{} cube(s) of {t}x{s}x{} written to {}", report.cubes.len(), 3 * s, args.output.display()),
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    stage: TrainingStage,
    steps: usize,
    train_flame_cubes: usize,
    train_nonflame_cubes: usize,
    final_loss: Option<f32>,
    selected_step: Option<usize>,
    checkpoint_sha256: String,
}

fn report_training(report: &TrainReport, format: Option<Format>) -> Result<()> {
    match format.unwrap_or(Format::Text) {
        Format::Json => print_json(report),
        Format::Text => {
            println!(
                "{:?}: {} steps on {} flame / {} non-flame cubes, final loss {}, checkpoint {}",
                report.stage,
                report.steps,
                report.train_flame_cubes,
                report.train_nonflame_cubes,
                report.final_loss.map_or("n/a".into(), |l| format!("{l:.4}")),
                &report.checkpoint_sha256[..16]
            );
            Ok(())
        }
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let spec = args.spec.resolve()?;
    let config = args.config.resolve(None)?;
    let data = load_split(&args.input, &spec, config.seed)?;
    let flame = data.train.inputs(Label::Flame, Representation::Slices)?;
    let out = train_stage1(&flame, &spec, &config)?;
    let model = ModelBundle {
        config: config.clone(),
        stage: TrainingStage::Stage1,
        disc: out.disc,
        gen: Some(out.gen),
        optimizers: Some((out.gen_opt, out.disc_opt)),
    };
    save_model(&args.output, &model)?;
    report_training(
        &TrainReport {
            stage: TrainingStage::Stage1,
            steps: out.history.len(),
            train_flame_cubes: flame.len(),
            train_nonflame_cubes: 0,
            final_loss: out.history.last().map(|r| r.disc_loss),
            selected_step: None,
            checkpoint_sha256: model.checkpoint().digest(),
        },
        args.format,
    )
}

fn refine(args: RefineArgs) -> Result<()> {
    let stage1 = load_model(&args.gan_model)?;
    let config = args.config.resolve(Some(stage1.config.clone()))?;
    let data = load_split(&args.input, stage1.spec(), config.seed)?;
    let flame = data.train.inputs(Label::Flame, Representation::Slices)?;
    let nonflame = data.train.inputs(Label::Nonflame, Representation::Slices)?;
    let val_flame = data.val.inputs(Label::Flame, Representation::Slices)?;
    let val_nonflame = data.val.inputs(Label::Nonflame, Representation::Slices)?;
    let out = train_stage2(stage1.disc, &flame, &nonflame, &config, Some((&val_flame, &val_nonflame)))?;
    let model = ModelBundle { config, stage: TrainingStage::Refined, disc: out.disc, gen: None, optimizers: None };
    save_model(&args.output, &model)?;
    report_training(
        &TrainReport {
            stage: TrainingStage::Refined,
            steps: out.history.len(),
            train_flame_cubes: flame.len(),
            train_nonflame_cubes: nonflame.len(),
            final_loss: out.history.last().map(|r| r.loss),
            selected_step: out.selected_step,
            checkpoint_sha256: model.checkpoint().digest(),
        },
        args.format,
    )
}

fn emit_rows(rows: &[MetricsRow], format: Option<Format>) -> Result<()> {
    match format.unwrap_or(Format::Text) {
        Format::Json if rows.len() == 1 => print_json(&rows[0]),
        Format::Json => print_json(&rows),
        Format::Text => {
            print!("{}", format_table(rows));
            Ok(())
        }
    }
}

fn accounting(per_block: bool) -> Accounting {
    if per_block {
        Accounting::Blocks
    } else {
        Accounting::Frames
    }
}

fn eval(args: EvalArgs) -> Result<()> {
    check_threshold(args.threshold)?;
    let model = load_model(&args.model)?;
    check_model_spec(&model, &args.spec)?;
    let seed = args.seed.unwrap_or(model.config.seed);
    let data = load_split(&args.input, model.spec(), seed)?;
    let part = match args.split {
        Partition::Train => data.train,
        Partition::Val => data.val,
        Partition::Test => data.test,
        Partition::All => DatasetManifest { clips: [data.train.clips, data.val.clips, data.test.clips].concat() },
    };
    let samples = part.samples(Representation::Slices)?;
    let counts = flamegan::eval::evaluate(&model.disc, &samples, args.threshold, accounting(args.per_block))?;
    let mode = match model.stage {
        TrainingStage::Refined => AblationMode::DcganSlices,
        TrainingStage::Stage1 => AblationMode::DcganNorefine,
        TrainingStage::Supervised => AblationMode::CnnSlices,
    };
    let hash = config_hash(&(mode, model.spec(), &model.config));
    emit_rows(&[MetricsRow::new(mode.name(), args.threshold, counts, seed, hash)], args.format)
}

fn ablate(args: AblateArgs) -> Result<()> {
    check_threshold(args.threshold)?;
    let spec = args.spec.resolve()?;
    let config = args.config.resolve(None)?;
    let data = load_split(&args.input, &spec, config.seed)?;
    let acc = accounting(args.per_block);
    let rows = match args.mode {
        Some(mode) => vec![run_ablation(mode, &data, &spec, &config, args.threshold, acc)?],
        None => run_table(&data, &spec, &config, args.threshold, acc)?,
    };
    if let Some(path) = &args.output {
        std::fs::write(path, serde_json::to_string_pretty(&rows)?).with_context(|| format!("writing {}", path.display()))?;
    }
    emit_rows(&rows, args.format)
}

fn detect(args: DetectArgs) -> Result<()> {
    check_threshold(args.threshold)?;
    let model = load_model(&args.model)?;
    check_model_spec(&model, &args.spec)?;
    cube_dims(model.spec())?;
    let format = args.format.unwrap_or(Format::Json);
    let summary = detect_dir(&args.input, &model.disc, args.threshold, |e: &DetectionEvent| {
        match format {
            Format::Json => println!("{}", serde_json::to_string(e).expect("event serializes")),
            Format::Text => println!("{:>8.1}s  {:<8}  score {:.3}  {:.1} ms", e.start_time_s, e.decision, e.score, e.latency_ms),
        }
        Ok(())
    })?;
    eprintln!(
        "{} block(s), {} flame, {:.1} s of stream in {:.2} s wall ({:.1}x real time), max latency {:.1} ms",
        summary.blocks,
        summary.flame_blocks,
        summary.stream_seconds,
        summary.wall_seconds,
        summary.realtime_factor(),
        summary.max_latency_ms
    );
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> Result<bool> {
    let entries = gradcheck_suite(args.seed)?;
    let ok = entries.iter().all(|e| e.passed);
    match args.format.unwrap_or(Format::Text) {
        Format::Json => print_json(&entries)?,
        Format::Text => {
            for e in &entries {
                println!(
                    "{:<20} {:>10.3e}  (tol {:.0e}, {} probes)  {}",
                    e.name,
                    e.max_rel_error,
                    e.tolerance,
                    e.checked,
                    if e.passed { "ok" } else { "FAIL" }
                );
            }
        }
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth(a) => synth(a)?,
        Command::Slice(a) => slice(a)?,
        Command::Train(a) => train(a)?,
        Command::Refine(a) => refine(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Ablate(a) => ablate(a)?,
        Command::Detect(a) => detect(a)?,
        Command::Gradcheck(a) => return gradcheck(a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
