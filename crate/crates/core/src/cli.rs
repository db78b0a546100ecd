//! Command-line front end: render, ask, bench, gen, perturb.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use rendermem::bench::{
    generate_suite, run_suite, run_sweep, sweep_csv, GeneratorConfig, QASuite, QuestionMix, Report,
    RunOptions, SceneRef, SweepGrid,
};
use rendermem::perturb::PerturbConfig;
use rendermem::pipeline::{
    self, render_evidence, write_trace, ExternalReasoner, OracleReasoner, PipelineConfig,
    PipelineError, Question, QuestionKind, Reasoner, Strategy, REASONER_URL_ENV,
};
use rendermem::raster;
use rendermem::render::{self, RenderError};
use rendermem::scene::{
    apply_interactions, read_scene_file, InteractionEvent, SceneError, SceneState,
};
use rendermem::viewpoint::{
    Anchors, CameraIntrinsics, CameraPose, RenderSpec, SurroundParams, ViewpointError,
};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Code {
    Args = 2,
    Scene = 3,
    Io = 4,
    Reasoner = 5,
}

struct Failure {
    code: Code,
    error: anyhow::Error,
}

impl fmt::Debug for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

trait OrExit<T> {
    fn or_exit(self, code: Code) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, code: Code) -> CliResult<T> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }
}

fn fail<T>(code: Code, msg: impl fmt::Display) -> CliResult<T> {
    Err(Failure {
        code,
        error: anyhow!("{msg}"),
    })
}

fn viewpoint_code(e: &ViewpointError) -> Code {
    match e {
        ViewpointError::Domain(_) => Code::Args,
        _ => Code::Scene,
    }
}

fn pipeline_failure(e: PipelineError) -> Failure {
    let code = match &e {
        PipelineError::ReasonerUnavailable(_) | PipelineError::ReasonerProtocol(_) => {
            Code::Reasoner
        }
        PipelineError::Viewpoint(v) | PipelineError::Render(RenderError::Camera(v)) => {
            viewpoint_code(v)
        }
        PipelineError::Render(RenderError::Io(_)) => Code::Io,
        PipelineError::Render(_) | PipelineError::Perturb(_) => Code::Args,
        PipelineError::UnknownObject(_)
        | PipelineError::UnknownAttribute { .. }
        | PipelineError::AnchorArity(_)
        | PipelineError::Scene(_) => Code::Scene,
    };
    Failure {
        code,
        error: e.into(),
    }
}

fn scene_failure(e: SceneError) -> Failure {
    let code = match e {
        SceneError::Io(_) => Code::Io,
        _ => Code::Scene,
    };
    Failure {
        code,
        error: e.into(),
    }
}

#[derive(Parser)]
#[command(
    name = "rendermem",
    version,
    about = "Spatial memory where rendering is the read operation"
)]
struct Cli {
    /// JSON config file supplying defaults; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render surround or directional views of a scene.
    Render(RenderArgs),
    /// Answer one question.
    Ask(AskArgs),
    /// Run a QA suite, optionally as a perturbation sweep.
    Bench(BenchArgs),
    /// Generate a synthetic scene and QA suite.
    Gen(GenArgs),
    /// Corrupt an image (blur, ghosting) or jitter a scene's object spheres.
    Perturb(PerturbArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Surround,
    Directional,
}

/// `WxH` or a single size for square images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Resolution {
    width: usize,
    height: usize,
}

impl FromStr for Resolution {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| format!("bad resolution `{s}` (expected WxH)"))
        };
        match s.split_once(['x', 'X']) {
            Some((w, h)) => Ok(Resolution {
                width: parse(w)?,
                height: parse(h)?,
            }),
            None => {
                let n = parse(s)?;
                Ok(Resolution {
                    width: n,
                    height: n,
                })
            }
        }
    }
}

/// Defaults shared by several subcommands, read from `--config`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CliConfig {
    scene: Option<PathBuf>,
    out: Option<PathBuf>,
    resolution: Option<String>,
    alpha: Option<f64>,
    views: Option<usize>,
    /// Elevation, degrees.
    phi: Option<f64>,
    /// Vertical field of view, degrees.
    fov: Option<f64>,
    reasoner: Option<String>,
    strategy: Option<String>,
    p_min: Option<usize>,
    delta: Option<f64>,
    gamma: Option<f64>,
    lambda: Option<f64>,
    seed: Option<u64>,
}

impl CliConfig {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(CliConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .or_exit(Code::Io)?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .or_exit(Code::Args)
    }
}

#[derive(Args, Debug)]
struct ViewFlags {
    /// Camera distance factor (≥ 1).
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of surround views.
    #[arg(short = 'K', long = "views")]
    views: Option<usize>,
    /// Surround elevation, degrees.
    #[arg(long)]
    phi: Option<f64>,
    /// Image size as WxH.
    #[arg(long)]
    res: Option<Resolution>,
    /// Vertical field of view, degrees.
    #[arg(long)]
    fov: Option<f64>,
}

impl ViewFlags {
    fn pipeline_config(&self, file: &CliConfig) -> CliResult<PipelineConfig> {
        let defaults = PipelineConfig::default();
        let res = match (self.res, &file.resolution) {
            (Some(r), _) => r,
            (None, Some(s)) => s.parse().map_err(|e: String| Failure {
                code: Code::Args,
                error: anyhow!(e),
            })?,
            (None, None) => Resolution {
                width: defaults.width,
                height: defaults.height,
            },
        };
        let surround = SurroundParams {
            alpha: self.alpha.or(file.alpha).unwrap_or(defaults.surround.alpha),
            views: self.views.or(file.views).unwrap_or(defaults.surround.views),
            elevation: self
                .phi
                .or(file.phi)
                .map_or(defaults.surround.elevation, f64::to_radians),
        };
        let fov_v = self
            .fov
            .or(file.fov)
            .map_or(defaults.fov_v, f64::to_radians);
        let config = PipelineConfig {
            width: res.width,
            height: res.height,
            fov_v,
            surround,
            ..defaults
        };
        config.intrinsics().validate().map_err(|e| Failure {
            code: Code::Args,
            error: e.into(),
        })?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct SceneFlags {
    /// Scene document (JSON).
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Interaction applied before the command, as ACTION:OBJECT_ID (repeatable).
    #[arg(long = "interact", value_name = "ACTION:ID")]
    interact: Vec<String>,
}

impl SceneFlags {
    fn load(&self, file: &CliConfig) -> CliResult<SceneState> {
        let Some(path) = self.scene.as_ref().or(file.scene.as_ref()) else {
            return fail(Code::Args, "--scene is required");
        };
        let scene = read_scene_file(path)
            .map_err(scene_failure)
            .map_err(|f| Failure {
                error: f.error.context(format!("loading {}", path.display())),
                ..f
            })?;
        let events = self
            .interact
            .iter()
            .map(|s| s.parse::<InteractionEvent>())
            .collect::<Result<Vec<_>, _>>()
            .or_exit(Code::Args)?;
        apply_interactions(&scene, &events).map_err(scene_failure)
    }
}

#[derive(Args, Debug)]
struct ReasonerFlags {
    /// `oracle`, an http(s) URL, or `stdio:COMMAND`.
    #[arg(long)]
    reasoner: Option<String>,
    /// Decision strategy: 1, 2 or 3 exchanges.
    #[arg(long)]
    strategy: Option<String>,
    /// Oracle visibility threshold in pixels at 256×256.
    #[arg(long = "p-min")]
    p_min: Option<usize>,
}

impl ReasonerFlags {
    /// Flag, then config file, then the environment, then the oracle.
    fn binding(&self, file: &CliConfig) -> String {
        self.reasoner
            .clone()
            .or_else(|| file.reasoner.clone())
            .or_else(|| {
                std::env::var(REASONER_URL_ENV)
                    .ok()
                    .filter(|s| !s.is_empty())
            })
            .unwrap_or_else(|| "oracle".to_string())
    }

    fn build(&self, file: &CliConfig) -> CliResult<Box<dyn Reasoner>> {
        let binding = self.binding(file);
        let p_min = self.p_min.or(file.p_min).unwrap_or(10);
        if binding == "oracle" {
            Ok(Box::new(OracleReasoner::new(p_min)))
        } else if let Some(cmd) = binding.strip_prefix("stdio:") {
            Ok(Box::new(
                ExternalReasoner::stdio(cmd).map_err(pipeline_failure)?,
            ))
        } else if binding.starts_with("http://") || binding.starts_with("https://") {
            Ok(Box::new(ExternalReasoner::http(&binding)))
        } else {
            fail(
                Code::Args,
                format!("unknown reasoner `{binding}` (expected oracle, a URL, or stdio:COMMAND)"),
            )
        }
    }

    fn strategy(&self, file: &CliConfig) -> CliResult<Strategy> {
        match self.strategy.as_ref().or(file.strategy.as_ref()) {
            Some(s) => s.parse().map_err(|e: String| Failure {
                code: Code::Args,
                error: anyhow!(e),
            }),
            None => Ok(Strategy::default()),
        }
    }
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[command(flatten)]
    scene: SceneFlags,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Surround anchor, or the directional source.
    #[arg(long)]
    object: String,
    /// Directional target.
    #[arg(long)]
    target: Option<String>,
    #[command(flatten)]
    view: ViewFlags,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AskArgs {
    #[command(flatten)]
    scene: SceneFlags,
    /// Question file (JSON).
    #[arg(long)]
    question: PathBuf,
    #[command(flatten)]
    reasoner: ReasonerFlags,
    #[command(flatten)]
    view: ViewFlags,
    /// Directory receiving the views and the query trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Suite file (JSON).
    #[arg(long)]
    suite: PathBuf,
    #[command(flatten)]
    reasoner: ReasonerFlags,
    #[command(flatten)]
    view: ViewFlags,
    /// Sweep grid (JSON with delta/gamma/lambda value lists).
    #[arg(long)]
    sweep: Option<PathBuf>,
    /// Report path; sweeps also write a CSV beside it.
    #[arg(long)]
    report: PathBuf,
    /// Blur severity.
    #[arg(long)]
    delta: Option<f64>,
    /// Ghosting strength.
    #[arg(long)]
    gamma: Option<f64>,
    /// Localization noise.
    #[arg(long)]
    lambda: Option<f64>,
    /// Seed for localization noise.
    #[arg(long)]
    seed: Option<u64>,
    /// External judge URL used instead of the built-in matcher.
    #[arg(long)]
    judge: Option<String>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of questions to request (fewer when the scene cannot support them).
    #[arg(short = 'n', long = "questions")]
    questions: Option<usize>,
    /// Generator config (JSON); flags override it.
    #[arg(long = "gen-config")]
    gen_config: Option<PathBuf>,
    /// Occluder panels to place.
    #[arg(long)]
    occluders: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["input", "scene"]))]
struct PerturbArgs {
    /// PPM image to corrupt.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Scene whose object spheres are jittered.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file: a PPM for images, an object-list JSON for scenes.
    #[arg(long)]
    output: PathBuf,
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .or_exit(Code::Io)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult {
    std::fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .or_exit(Code::Io)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

#[derive(Serialize)]
struct PosesFile<'a> {
    spec: &'a RenderSpec,
    width: usize,
    height: usize,
    intrinsics: CameraIntrinsics,
    poses: &'a [CameraPose],
    views: Vec<[String; 2]>,
}

fn cmd_render(args: RenderArgs, file: &CliConfig) -> CliResult {
    let anchors = match (args.mode, args.target) {
        (ModeArg::Surround, None) => Anchors::Surround {
            object_id: args.object,
        },
        (ModeArg::Surround, Some(_)) => {
            return fail(Code::Args, "--target is only valid with --mode directional")
        }
        (ModeArg::Directional, Some(target_id)) => Anchors::Directional {
            source_id: args.object,
            target_id,
        },
        (ModeArg::Directional, None) => {
            return fail(Code::Args, "--mode directional requires --target")
        }
    };
    let Some(out) = args.out.or_else(|| file.out.clone()) else {
        return fail(Code::Args, "--out is required");
    };
    let config = args.view.pipeline_config(file)?;
    let scene = args.scene.load(file)?;
    let spec = RenderSpec::new(anchors, config.surround).map_err(|e| Failure {
        code: viewpoint_code(&e),
        error: e.into(),
    })?;
    let (poses, views) =
        render_evidence(&scene, &spec, scene.objects(), &config).map_err(pipeline_failure)?;
    create_dir(&out)?;
    let mut names = Vec::with_capacity(views.len());
    for (i, view) in views.iter().enumerate() {
        let (rgb, ids) = render::view_file_names(i);
        render::write_view(view, &out.join(&rgb), &out.join(&ids))
            .with_context(|| format!("writing views to {}", out.display()))
            .or_exit(Code::Io)?;
        names.push([rgb, ids]);
    }
    let poses_file = PosesFile {
        spec: &spec,
        width: config.width,
        height: config.height,
        intrinsics: config.intrinsics(),
        poses: &poses,
        views: names,
    };
    write_file(&out.join("poses.json"), to_json(&poses_file))?;
    println!("wrote {} view(s) to {}", views.len(), out.display());
    Ok(())
}

fn cmd_ask(args: AskArgs, file: &CliConfig) -> CliResult {
    let config = args.view.pipeline_config(file)?;
    let strategy = args.reasoner.strategy(file)?;
    let text = std::fs::read_to_string(&args.question)
        .with_context(|| format!("reading {}", args.question.display()))
        .or_exit(Code::Io)?;
    let question: Question = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.question.display()))
        .or_exit(Code::Args)?;
    let scene = args.scene.load(file)?;
    let reasoner = args.reasoner.build(file)?;
    let mut answered = pipeline::answer(&question, &scene, reasoner.as_ref(), strategy, &config)
        .map_err(pipeline_failure)?;
    if let Some(dir) = &args.trace {
        write_trace(dir, &mut answered)
            .with_context(|| format!("writing trace to {}", dir.display()))
            .or_exit(Code::Io)?;
    }
    println!("{}", answered.answer.text);
    Ok(())
}

fn print_summary(report: &Report) {
    let label = match (&report.axis, report.value) {
        (Some(axis), Some(v)) => format!("{axis}={v} "),
        _ => String::new(),
    };
    for kind in QuestionKind::ALL {
        if let Some(s) = report.per_kind.get(&kind) {
            println!("{label}{kind}: {:.4} ({}/{})", s.accuracy, s.correct, s.n);
        }
    }
}

fn cmd_bench(args: BenchArgs, file: &CliConfig) -> CliResult {
    let pipeline = args.view.pipeline_config(file)?;
    let strategy = args.reasoner.strategy(file)?;
    let suite = QASuite::read(&args.suite)
        .with_context(|| format!("loading suite {}", args.suite.display()))
        .or_exit(Code::Scene)?;
    let base = args.suite.parent().unwrap_or(Path::new("."));
    let scene = suite
        .load_scene(base)
        .context("loading the suite's scene")
        .or_exit(Code::Scene)?;
    let reasoner = args.reasoner.build(file)?;
    let judge = args.judge.as_deref().map(ExternalReasoner::http);
    let options = RunOptions {
        pipeline,
        strategy,
        judge: judge.as_ref(),
        parallel: true,
    };
    let perturb = PerturbConfig {
        delta: args.delta.or(file.delta).unwrap_or(0.0),
        gamma: args.gamma.or(file.gamma).unwrap_or(0.0),
        lambda: args.lambda.or(file.lambda).unwrap_or(0.0),
        rng_seed: args.seed.or(file.seed).unwrap_or(0),
        ghost_offsets: None,
    };
    perturb.validate().or_exit(Code::Args)?;
    let report_dir = args.report.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = report_dir {
        create_dir(dir)?;
    }
    match &args.sweep {
        Some(path) => {
            let mut grid = SweepGrid::read(path)
                .with_context(|| format!("loading sweep {}", path.display()))
                .or_exit(Code::Args)?;
            if let Some(seed) = args.seed.or(file.seed) {
                grid.rng_seed = seed;
            }
            let reports = run_sweep(&suite, &scene, reasoner.as_ref(), &grid, &options)
                .or_exit(Code::Scene)?;
            for r in &reports {
                print_summary(r);
            }
            write_file(&args.report, to_json(&reports))?;
            write_file(&args.report.with_extension("csv"), sweep_csv(&reports))?;
        }
        None => {
            let perturb = (perturb
                != PerturbConfig {
                    rng_seed: perturb.rng_seed,
                    ..PerturbConfig::default()
                })
            .then_some(perturb);
            let report = run_suite(&suite, &scene, reasoner.as_ref(), perturb, &options)
                .or_exit(Code::Scene)?;
            print_summary(&report);
            write_file(&args.report, to_json(&report))?;
        }
    }
    Ok(())
}

fn cmd_gen(args: GenArgs, file: &CliConfig) -> CliResult {
    let mut config: GeneratorConfig = match &args.gen_config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .or_exit(Code::Io)?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .or_exit(Code::Args)?
        }
        None => GeneratorConfig::default(),
    };
    if let Some(n) = args.questions {
        // split roughly 2:3:4:2 over count, attribute, visibility, dynamic
        let part = |w: usize| n * w / 11;
        let mut mix = QuestionMix {
            count: part(2),
            attribute: part(3),
            visibility: part(4),
            dynamic: part(2),
        };
        mix.attribute += n - (mix.count + mix.attribute + mix.visibility + mix.dynamic);
        config.questions = mix;
    }
    if let Some(k) = args.occluders {
        config.occluders = k;
    }
    let seed = if args.seed != 0 {
        args.seed
    } else {
        file.seed.unwrap_or(0)
    };
    let generated = generate_suite(&config, seed).or_exit(Code::Args)?;
    create_dir(&args.out)?;
    let SceneRef::Path(scene_name) = &generated.suite.scene_ref else {
        unreachable!("generated suites reference their scene by path");
    };
    write_file(&args.out.join(scene_name), to_json(&generated.scene))?;
    write_file(&args.out.join("suite.json"), to_json(&generated.suite))?;
    println!(
        "wrote {} item(s) to {}",
        generated.suite.items.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct PerturbedObject<'a> {
    id: &'a str,
    center: rendermem::Vec3,
    radius: f64,
}

fn cmd_perturb(args: PerturbArgs) -> CliResult {
    let config = PerturbConfig {
        delta: args.delta,
        gamma: args.gamma,
        lambda: args.lambda,
        rng_seed: args.seed,
        ghost_offsets: None,
    };
    config.validate().or_exit(Code::Args)?;
    if let Some(input) = &args.input {
        let image = raster::read_ppm(input)
            .with_context(|| format!("reading {}", input.display()))
            .or_exit(Code::Io)?;
        raster::write_ppm(&args.output, &config.corrupt(&image))
            .with_context(|| format!("writing {}", args.output.display()))
            .or_exit(Code::Io)?;
    } else if let Some(path) = &args.scene {
        let scene = read_scene_file(path).map_err(scene_failure)?;
        let objects = config
            .perturb_objects(scene.objects())
            .or_exit(Code::Args)?;
        let list: Vec<_> = objects
            .iter()
            .map(|o| PerturbedObject {
                id: &o.id,
                center: o.sphere.center,
                radius: o.sphere.radius,
            })
            .collect();
        write_file(&args.output, to_json(&list))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult {
    let file = CliConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Render(a) => cmd_render(a, &file),
        Command::Ask(a) => cmd_ask(a, &file),
        Command::Bench(a) => cmd_bench(a, &file),
        Command::Gen(a) => cmd_gen(a, &file),
        Command::Perturb(a) => cmd_perturb(a),
    }
}

pub fn main() -> ExitCode {
    // clap exits with status 2 on usage errors and 0 for --help
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code as u8)
        }
    }
}
