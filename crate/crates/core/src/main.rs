use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use viewtok::backend::external;
use viewtok::backend::mock::MockBackend;
use viewtok::conditioning::{PromptTemplate, SceneSlot};
use viewtok::data::splits::{EVAL_VIEWS_BASELINE, EVAL_VIEWS_QUALITATIVE};
use viewtok::data::splits::dtu_splits_for;
use viewtok::data::{convert_dtu, load_scene, synth_scene, SceneData, SceneManifest};
use viewtok::eval::report::{checkpoint_id, scene_slot_for};
use viewtok::eval::{evaluate_nvs, generate, render_grid, EvalOptions, GridLabels, MockPerceptual};
use viewtok::geometry::{CameraPose, PoseKind, SphericalPose};
use viewtok::image::Image;
use viewtok::training::checkpoint::Checkpoint;
use viewtok::training::engine::StepHook;
use viewtok::training::log::{MetricsLog, StepRecord};
use viewtok::training::regimes::mapper_digests;
use viewtok::training::{
    finetune_nvs, load_checkpoint, pretrain_multi_scene, save_checkpoint, train_single_scene, BackendKind,
    Models, Regime, RunConfig, TrainConfig, TrainOutcome,
};
use viewtok::{backend::DiffusionBackend, Error, Result};

#[derive(Parser)]
#[command(name = "viewtok", version, about = "View-token training and evaluation on frozen diffusion backends")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a view mapper to one scene.
    TrainSingleScene(SingleArgs),
    /// Jointly fit a view mapper and per-scene mappers over many scenes.
    Pretrain(PretrainArgs),
    /// Fit a scene mapper to a novel scene's few views.
    Nvs(NvsArgs),
    /// Render one image at a camera pose.
    Generate(GenerateArgs),
    /// Score novel views against ground truth.
    Evaluate(EvaluateArgs),
    /// Compose labelled images into one grid.
    RenderGrid(GridArgs),
    /// Convert a DTU scan into a scene manifest.
    ConvertDtu(ConvertArgs),
    /// Write a synthetic scene for smoke tests.
    SynthScene(SynthArgs),
}

/// Config file plus per-field overrides shared by the training commands.
#[derive(Args, Clone)]
struct TrainFlags {
    /// TOML run config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    micro_batch: Option<usize>,
    #[arg(long)]
    grad_accumulation: Option<usize>,
    #[arg(long, value_parser = ["projection-matrix", "spherical"])]
    pose_kind: Option<String>,
    #[arg(long)]
    class_word: Option<String>,
    #[arg(long)]
    no_augment: bool,
    #[arg(long)]
    no_prompt_pool: bool,
    #[arg(long)]
    checkpoint_interval: Option<u64>,
    /// Output directory for checkpoint, metrics and run manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SingleArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Train on these view indices only.
    #[arg(long, value_delimiter = ',')]
    views: Option<Vec<u32>>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct PretrainArgs {
    /// Scene manifests.
    #[arg(long, num_args = 1.., required = true)]
    scenes: Vec<PathBuf>,
    /// View indices to use in every scene.
    #[arg(long, value_delimiter = ',')]
    views: Option<Vec<u32>>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct NvsArgs {
    #[arg(long)]
    pretrained: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    /// View regime naming the fixed train views (1 or 3).
    #[arg(long, conflicts_with = "views")]
    regime: Option<String>,
    #[arg(long, value_delimiter = ',')]
    views: Option<Vec<u32>>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct PoseArgs {
    /// Polar angle in degrees.
    #[arg(long, requires = "phi")]
    theta: Option<f64>,
    /// Azimuth in degrees.
    #[arg(long, requires = "theta")]
    phi: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    radius: f64,
    /// Camera-to-world matrix, 16 numbers row-major.
    #[arg(long, value_delimiter = ',', conflicts_with = "theta")]
    matrix: Option<Vec<f64>>,
    /// Take the pose of this view from `--pose-scene`.
    #[arg(long, requires = "pose_scene")]
    view: Option<u32>,
    #[arg(long)]
    pose_scene: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Prompt with `{VIEW}` and optionally `{SCENE}`.
    #[arg(long, default_value = "{VIEW}. a photo of a {SCENE}")]
    prompt: String,
    /// Treat `--prompt` as scene-only: `{SCENE}` and no `{VIEW}`.
    #[arg(long)]
    scene_only: bool,
    /// Scene token from the checkpoint to fill `{SCENE}`.
    #[arg(long, conflicts_with = "word")]
    scene_id: Option<String>,
    /// Literal word to fill `{SCENE}`.
    #[arg(long)]
    word: Option<String>,
    #[command(flatten)]
    pose: PoseArgs,
    #[arg(long)]
    sampling_steps: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    backend_config: Option<PathBuf>,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value = "3")]
    regime: String,
    /// Explicit view list; default is every test view present in the scene.
    #[arg(long, value_delimiter = ',', conflicts_with = "view_set")]
    views: Option<Vec<u32>>,
    #[arg(long, value_parser = ["qualitative", "baseline"])]
    view_set: Option<String>,
    /// Perceptual adapter; only the bundled mock is available.
    #[arg(long, value_parser = ["mock"])]
    lpips: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    sampling_steps: Option<u32>,
    #[arg(long)]
    backend_config: Option<PathBuf>,
    /// Output directory for the report and run manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    /// One row: `LABEL=a.png,b.png,...`. Repeat per row.
    #[arg(long = "row", required = true)]
    rows: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    cols: Vec<String>,
    /// Zero-based columns holding training views.
    #[arg(long, value_delimiter = ',')]
    train_cols: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    gutter: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    /// DTU root containing `scanN/image` and camera files.
    #[arg(long)]
    root: PathBuf,
    #[arg(long)]
    scan: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 9)]
    views: usize,
    #[arg(long, default_value_t = 16)]
    side: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::TrainSingleScene(a) => cmd_single(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Nvs(a) => cmd_nvs(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::RenderGrid(a) => cmd_grid(a),
        Command::ConvertDtu(a) => cmd_convert(a),
        Command::SynthScene(a) => cmd_synth(a),
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Regime defaults, then the config file, then flags.
fn layered_config(defaults: TrainConfig, file: Option<&Path>) -> Result<RunConfig> {
    let base = RunConfig {
        train: defaults,
        ..RunConfig::default()
    };
    let Some(path) = file else { return Ok(base) };
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    let over: toml::Table = text
        .parse()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut table = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
    merge(&mut table, over);
    table
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", path.display())))
}

fn apply_flags(config: &mut TrainConfig, f: &TrainFlags) {
    if let Some(v) = f.steps {
        config.steps = v;
    }
    if let Some(v) = f.lr {
        config.optimizer.learning_rate = v;
    }
    if let Some(v) = f.seed {
        config.seed = v;
    }
    if let Some(v) = f.micro_batch {
        config.micro_batch = v;
    }
    if let Some(v) = f.grad_accumulation {
        config.grad_accumulation = v;
    }
    if let Some(v) = &f.pose_kind {
        config.pose_kind = if v == "spherical" {
            PoseKind::Spherical
        } else {
            PoseKind::ProjectionMatrix
        };
    }
    if let Some(v) = &f.class_word {
        config.class_word = v.clone();
    }
    if f.no_augment {
        config.augment = false;
    }
    if f.no_prompt_pool {
        config.prompt_pool = false;
    }
    if let Some(v) = f.checkpoint_interval {
        config.checkpoint_interval = v;
    }
}

fn open_backend(run: &RunConfig) -> Result<Box<dyn DiffusionBackend>> {
    match run.backend.kind {
        BackendKind::Mock => Ok(Box::new(MockBackend::with_config(run.backend.mock.clone())?)),
        BackendKind::External => external::connect(&run.backend.external),
    }
}

fn backend_only(file: Option<&Path>) -> Result<(RunConfig, Box<dyn DiffusionBackend>)> {
    let run = layered_config(TrainConfig::default(), file)?;
    let backend = open_backend(&run)?;
    Ok((run, backend))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json serializes");
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn backend_record(backend: &dyn DiffusionBackend) -> Value {
    json!({
        "descriptor": backend.descriptor(),
        "descriptor_digest": backend.descriptor().digest(),
        "weights_digest": backend.weights_digest(),
    })
}

fn path_list(paths: &[&Path]) -> Value {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn load_data(path: &Path, kind: PoseKind, views: Option<&[u32]>) -> Result<SceneData> {
    let manifest = load_scene(path)?;
    let data = SceneData::load(&manifest, kind)?;
    match views {
        Some(v) => data.subset(v),
        None => Ok(data),
    }
}

/// Trains with a metrics log and periodic checkpoints, then writes the final
/// checkpoint and run manifest.
fn train_and_save(
    command: &str,
    run: &RunConfig,
    backend: &dyn DiffusionBackend,
    regime: Regime,
    inputs: &[&Path],
    out: &Path,
    train: impl FnOnce(&mut StepHook<'_>) -> Result<TrainOutcome>,
) -> Result<()> {
    create_dir(out)?;
    let mut log = MetricsLog::create(&out.join("metrics.jsonl"))?;
    let interval = run.train.checkpoint_interval;
    let digest = backend.descriptor().digest();
    let mut hook = |step: u64, models: &Models, record: &StepRecord| -> Result<()> {
        log.append(record)?;
        if interval > 0 && step.is_multiple_of(interval) && step < run.train.steps {
            let ckpt = Checkpoint {
                regime,
                config: run.train.clone(),
                models: models.clone(),
                descriptor_digest: digest.clone(),
                step,
            };
            save_checkpoint(&ckpt, &out.join(format!("checkpoint-{step:06}.ckpt")))?;
            log.flush()?;
        }
        if step.is_multiple_of(100) {
            log::info!("step {step} loss {:.5}", record.loss);
        }
        Ok(())
    };
    let outcome = train(&mut hook)?;
    log.flush()?;
    let ckpt_path = out.join("checkpoint.ckpt");
    save_checkpoint(&outcome.checkpoint, &ckpt_path)?;
    let final_loss = outcome.log.steps.last().map(|r| r.loss);
    write_json(
        &out.join("run.json"),
        &json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": run,
            "seeds": { "train": run.train.seed, "backend": run.backend.mock.seed },
            "backend": backend_record(backend),
            "inputs": path_list(inputs),
            "checkpoint": ckpt_path.display().to_string(),
            "checkpoint_id": checkpoint_id(&outcome.checkpoint),
            "mapper_digests": mapper_digests(&outcome.checkpoint.models),
            "final_loss": final_loss,
            "warnings": outcome.warnings,
        }),
    )?;
    println!("wrote {}", ckpt_path.display());
    Ok(())
}

fn cmd_single(a: SingleArgs) -> Result<()> {
    let mut run = layered_config(TrainConfig::single_scene(), a.train.config.as_deref())?;
    apply_flags(&mut run.train, &a.train);
    let backend = open_backend(&run)?;
    let scene = load_data(&a.scene, run.train.pose_kind, a.views.as_deref())?;
    train_and_save("train-single-scene", &run, backend.as_ref(), Regime::SingleScene, &[&a.scene], &a.train.out, |hook| {
        train_single_scene(backend.as_ref(), &scene, &run.train, Some(hook))
    })
}

fn cmd_pretrain(a: PretrainArgs) -> Result<()> {
    let mut run = layered_config(TrainConfig::pretrain(), a.train.config.as_deref())?;
    apply_flags(&mut run.train, &a.train);
    let backend = open_backend(&run)?;
    let scenes = a
        .scenes
        .iter()
        .map(|p| load_data(p, run.train.pose_kind, a.views.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<&Path> = a.scenes.iter().map(PathBuf::as_path).collect();
    train_and_save("pretrain", &run, backend.as_ref(), Regime::Pretrain, &inputs, &a.train.out, |hook| {
        pretrain_multi_scene(backend.as_ref(), &scenes, &run.train, Some(hook), false)
    })
}

fn cmd_nvs(a: NvsArgs) -> Result<()> {
    let pre_backend_cfg = layered_config(TrainConfig::default(), a.train.config.as_deref())?;
    let backend = open_backend(&pre_backend_cfg)?;
    let pretrained = load_checkpoint(&a.pretrained, Some(backend.as_ref()))?;
    if pretrained.regime != Regime::Pretrain {
        return Err(Error::Data(format!(
            "{} is a {:?} checkpoint, not a pretraining one",
            a.pretrained.display(),
            pretrained.regime
        )));
    }
    let views = match (&a.views, &a.regime) {
        (Some(v), _) => v.clone(),
        (None, Some(r)) => dtu_splits_for(r)?.train_views,
        (None, None) => dtu_splits_for("1")?.train_views,
    };
    let mut run = layered_config(TrainConfig::nvs(views.len()), a.train.config.as_deref())?;
    apply_flags(&mut run.train, &a.train);
    // Poses must be parameterized as the pretraining normalizer expects.
    run.train.pose_kind = pretrained.models.normalizer.kind();
    let scene = load_data(&a.scene, run.train.pose_kind, Some(&views))?;
    train_and_save("nvs", &run, backend.as_ref(), Regime::Nvs, &[&a.pretrained, &a.scene], &a.train.out, |hook| {
        finetune_nvs(backend.as_ref(), &scene, &pretrained, &run.train, Some(hook))
    })
}

fn in_kind(pose: CameraPose, kind: PoseKind) -> Result<CameraPose> {
    match (pose.kind(), kind) {
        (a, b) if a == b => Ok(pose),
        (_, PoseKind::Spherical) => Ok(CameraPose::Spherical(pose.to_spherical()?)),
        (_, PoseKind::ProjectionMatrix) => CameraPose::from_matrix(pose.to_spherical()?.to_matrix()),
    }
}

fn resolve_pose(p: &PoseArgs, kind: PoseKind) -> Result<Option<CameraPose>> {
    let pose = if let (Some(t), Some(f)) = (p.theta, p.phi) {
        CameraPose::Spherical(SphericalPose::from_degrees(t, f, p.radius)?)
    } else if let Some(m) = &p.matrix {
        CameraPose::from_row_major(m)?
    } else if let (Some(v), Some(path)) = (p.view, &p.pose_scene) {
        let manifest: SceneManifest = load_scene(path)?;
        let entry = manifest
            .entry(v)
            .ok_or_else(|| Error::Data(format!("view {v} not in {}", path.display())))?;
        entry.pose(kind)?
    } else {
        return Ok(None);
    };
    in_kind(pose, kind).map(Some)
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let (run, backend) = backend_only(a.backend_config.as_deref())?;
    let ckpt = load_checkpoint(&a.checkpoint, Some(backend.as_ref()))?;
    let template = if a.scene_only {
        PromptTemplate::scene_only("cli", a.prompt.clone())?
    } else {
        PromptTemplate::new("cli", a.prompt.clone())?
    };
    let slot = match (&a.scene_id, &a.word) {
        (Some(id), _) if ckpt.models.scenes.contains_key(id) => SceneSlot::Token(id.clone()),
        (Some(id), _) => return Err(Error::Data(format!("checkpoint has no scene token {id:?}"))),
        (None, Some(w)) => SceneSlot::Literal(w.clone()),
        (None, None) => match ckpt.models.scenes.keys().next() {
            Some(id) if ckpt.models.scenes.len() == 1 => scene_slot_for(&ckpt, id),
            _ => SceneSlot::Literal(ckpt.config.class_word.clone()),
        },
    };
    let pose = resolve_pose(&a.pose, ckpt.models.normalizer.kind())?;
    if !a.scene_only && pose.is_none() {
        return Err(Error::Config("a viewed prompt needs a pose: --theta/--phi, --matrix or --view".into()));
    }
    let steps = a.sampling_steps.unwrap_or_else(|| backend.default_sampling_steps());
    let img = generate(backend.as_ref(), &ckpt.models, &template, &slot, pose.as_ref(), steps, a.seed)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    img.save_png(&a.out)?;
    write_json(
        &sidecar(&a.out),
        &json!({
            "command": "generate",
            "version": env!("CARGO_PKG_VERSION"),
            "config": run,
            "seeds": { "sampling": a.seed, "backend": run.backend.mock.seed },
            "backend": backend_record(backend.as_ref()),
            "checkpoint": a.checkpoint.display().to_string(),
            "checkpoint_id": checkpoint_id(&ckpt),
            "mapper_digests": mapper_digests(&ckpt.models),
            "prompt": a.prompt,
            "scene_only": a.scene_only,
            "scene_slot": format!("{slot:?}"),
            "pose": pose,
            "sampling_steps": steps,
        }),
    )?;
    println!("wrote {}", a.out.display());
    Ok(())
}

/// `grid.png` -> `grid.run.json`.
fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("run.json")
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let (run, backend) = backend_only(a.backend_config.as_deref())?;
    let ckpt = load_checkpoint(&a.checkpoint, Some(backend.as_ref()))?;
    let manifest = load_scene(&a.scene)?;
    let split = dtu_splits_for(&a.regime)?;
    let present = manifest.view_indices();
    let views: Vec<u32> = match (&a.views, a.view_set.as_deref()) {
        (Some(v), _) => v.clone(),
        (None, Some("qualitative")) => EVAL_VIEWS_QUALITATIVE.to_vec(),
        (None, Some(_)) => EVAL_VIEWS_BASELINE.to_vec(),
        (None, None) => split.test_views.iter().copied().filter(|v| present.contains(v)).collect(),
    };
    let adapter = a.lpips.as_ref().map(|_| MockPerceptual::new(a.seed));
    let options = EvalOptions {
        seed: a.seed,
        steps: a.sampling_steps,
        adapter: adapter.as_ref().map(|m| m as _),
    };
    let report = evaluate_nvs(&ckpt, &manifest, &split, backend.as_ref(), &views, options)?;
    create_dir(&a.out)?;
    fs::write(a.out.join("report.json"), report.to_json() + "\n").map_err(|e| Error::Io {
        path: a.out.join("report.json"),
        source: e,
    })?;
    write_json(
        &a.out.join("run.json"),
        &json!({
            "command": "evaluate",
            "version": env!("CARGO_PKG_VERSION"),
            "config": run,
            "seeds": { "evaluation": a.seed, "backend": run.backend.mock.seed },
            "backend": backend_record(backend.as_ref()),
            "inputs": path_list(&[&a.checkpoint, &a.scene]),
            "checkpoint_id": checkpoint_id(&ckpt),
            "mapper_digests": mapper_digests(&ckpt.models),
            "views": views,
        }),
    )?;
    print!("{}", report.table());
    Ok(())
}

fn cmd_grid(a: GridArgs) -> Result<()> {
    let mut row_labels = Vec::new();
    let mut images = Vec::new();
    let mut inputs = Vec::new();
    for row in &a.rows {
        let (label, files) = row
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("row {row:?} is not LABEL=a.png,b.png")))?;
        row_labels.push(label.to_string());
        let row = files
            .split(',')
            .filter(|f| !f.is_empty())
            .map(|f| {
                inputs.push(f.to_string());
                Image::load_png(Path::new(f))
            })
            .collect::<Result<Vec<_>>>()?;
        images.push(row);
    }
    let labels = GridLabels {
        rows: row_labels,
        cols: a.cols.clone(),
        train_cols: a.train_cols.clone(),
    };
    let grid = render_grid(&images, &labels, a.gutter)?;
    grid.save_png(&a.out)?;
    write_json(
        &sidecar(&a.out),
        &json!({
            "command": "render-grid",
            "version": env!("CARGO_PKG_VERSION"),
            "inputs": inputs,
            "rows": labels.rows,
            "cols": labels.cols,
            "train_cols": labels.train_cols,
            "gutter": a.gutter,
            "size": [grid.height(), grid.width()],
        }),
    )?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_convert(a: ConvertArgs) -> Result<()> {
    create_dir(&a.out)?;
    let manifest = convert_dtu(&a.root, a.scan, &a.out)?;
    write_json(
        &a.out.join("run.json"),
        &json!({
            "command": "convert-dtu",
            "version": env!("CARGO_PKG_VERSION"),
            "inputs": path_list(&[&a.root]),
            "scan": a.scan,
            "scene_id": manifest.scene_id,
            "views": manifest.entries.len(),
        }),
    )?;
    println!("wrote {} views of {}", manifest.entries.len(), manifest.scene_id);
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut scene = synth_scene(a.views, a.side, a.seed)?;
    if let Some(id) = &a.id {
        scene.manifest.scene_id = id.clone();
    }
    scene.write(&a.out)?;
    write_json(
        &a.out.join("run.json"),
        &json!({
            "command": "synth-scene",
            "version": env!("CARGO_PKG_VERSION"),
            "seeds": { "scene": a.seed },
            "views": a.views,
            "side": a.side,
            "scene_id": scene.manifest.scene_id,
        }),
    )?;
    println!("wrote {}", a.out.join("manifest.json").display());
    Ok(())
}
