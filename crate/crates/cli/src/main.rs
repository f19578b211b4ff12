use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use eqa_core::batch::evaluate_all;
use eqa_core::controller::{Params, Strategy};
use eqa_core::dataio::{read_qa, read_trace, write_qa, write_report, write_trace, RunReport};
use eqa_core::metrics::{aggregate, MetricSelection};
use eqa_core::oracle::server::{MockServer, ReplaySet};
use eqa_core::oracle::{Oracle, RemoteConfig, RemoteOracle, Rulebook, ScriptedOracle};
use eqa_core::render::{render, render_frames, Image, Layer};
use eqa_core::scene::{load_scene, sample_trajectory, Scene};
use eqa_core::synth::{generate_house, generate_qa, HouseParams};

#[derive(Parser)]
#[command(name = "eqa", version, about = "Embodied question answering in grid worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run and grade one strategy over a QA file.
    Run(RunArgs),
    /// Sample ground-truth trajectories as JSON lines on stdout.
    Plan {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 10_000)]
        max_attempts: usize,
    },
    /// Draw a scene and an episode's final maps.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "trajectory")]
        layer: String,
        #[arg(long, default_value_t = 8)]
        scale: usize,
        #[arg(long, value_enum, default_value_t = ImageFormat::Ppm)]
        format: ImageFormat,
        /// Treat --out as a directory and write one frame per step.
        #[arg(long)]
        frames: bool,
    },
    /// Serve the oracle wire protocol from a scripted rulebook.
    MockServe {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        rulebook: Option<PathBuf>,
        /// Fixture directory whose replay cases are served verbatim.
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
    /// Generate a house scene and questions about it.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "house")]
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
    },
    /// Print a default config or rulebook.
    Defaults {
        #[arg(value_enum)]
        what: Defaults,
    },
}

#[derive(Parser)]
struct RunArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    qa: PathBuf,
    /// One of re, fbe, goe, fineqa.
    #[arg(long)]
    strategy: String,
    /// `scripted` or `remote:URL`.
    #[arg(long)]
    oracle: Option<String>,
    #[arg(long)]
    rulebook: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ImageFormat {
    Ppm,
    Png,
}

#[derive(Clone, Copy, ValueEnum)]
enum Defaults {
    Config,
    Rulebook,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    oracle: String,
    rulebook: Option<PathBuf>,
    jobs: usize,
    params: Params,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            oracle: "scripted".into(),
            rulebook: None,
            jobs: 1,
            params: Params::default(),
        }
    }
}

/// A failure with its exit code.
struct Failure(u8, String);

fn input<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure(1, format!("{context}: {e}"))
}

fn read_scene(path: &Path) -> Result<Scene, Failure> {
    let text = fs::read_to_string(path).map_err(input(path.display()))?;
    load_scene(&text).map_err(input(path.display()))
}

fn load_rulebook(path: Option<&Path>) -> Result<Rulebook, Failure> {
    match path {
        None => Ok(Rulebook::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(input(p.display()))?;
            serde_json::from_str(&text).map_err(input(p.display()))
        }
    }
}

fn make_oracle(choice: &str, rulebook: Option<&Path>) -> Result<Box<dyn Oracle>, Failure> {
    if choice == "scripted" {
        return Ok(Box::new(ScriptedOracle::new(load_rulebook(rulebook)?)));
    }
    match choice.strip_prefix("remote:") {
        Some(url) if !url.is_empty() => Ok(Box::new(RemoteOracle::new(RemoteConfig::new(url)))),
        _ => Err(Failure(1, format!("unknown oracle {choice:?}; expected scripted or remote:URL"))),
    }
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(input(path.display()))
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let strategy: Strategy = args.strategy.parse().map_err(|e| Failure(1, e))?;
    let mut config = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(input(p.display()))?;
            serde_json::from_str::<Config>(&text).map_err(input(p.display()))?
        }
        None => Config::default(),
    };
    if let Some(o) = args.oracle {
        config.oracle = o;
    }
    if let Some(r) = args.rulebook {
        config.rulebook = Some(r);
    }
    if let Some(j) = args.jobs {
        config.jobs = j;
    }
    let scene = read_scene(&args.scene)?;
    let qa_file = File::open(&args.qa).map_err(input(args.qa.display()))?;
    let items = read_qa(BufReader::new(qa_file)).map_err(input(args.qa.display()))?;
    if let Some(other) = items.iter().find(|q| q.scene != scene.name) {
        return Err(Failure(
            1,
            format!("{}: item {} is for scene {:?}, not {:?}", args.qa.display(), other.id, other.scene, scene.name),
        ));
    }
    let oracle = make_oracle(&config.oracle, config.rulebook.as_deref())?;

    let results = evaluate_all(&scene, &items, strategy, oracle.as_ref(), &config.params, args.seed, config.jobs)
        .map_err(|e| Failure(2, e.to_string()))?;

    let traces = args.out.join("traces");
    fs::create_dir_all(&traces).map_err(input(traces.display()))?;
    let mut answers = create(&args.out.join("answers.jsonl"))?;
    let mut graded = Vec::new();
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(ev) => {
                let path = traces.join(format!("{}.trace.jsonl", file_stem(&ev.result.qa_id)));
                let mut w = create(&path)?;
                write_trace(&mut w, &ev.header, &ev.result)
                    .and_then(|_| w.flush())
                    .map_err(input(path.display()))?;
                let line = serde_json::json!({"qa_id": ev.result.qa_id, "answer": ev.result.answer});
                writeln!(answers, "{line}").map_err(input("answers.jsonl"))?;
                graded.push(ev.graded);
                outcomes.push(ev.outcome);
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    answers.flush().map_err(input("answers.jsonl"))?;
    for f in &failures {
        eprintln!("episode failed: {f}");
    }
    if !graded.is_empty() {
        let metrics = aggregate(&graded, MetricSelection::all()).map_err(|e| Failure(2, e.to_string()))?;
        let report = RunReport {
            scene: scene.name.clone(),
            strategy,
            seed: args.seed,
            items: outcomes,
            metrics,
        };
        let mut w = create(&args.out.join("report.json"))?;
        write_report(&mut w, &report)
            .and_then(|_| w.flush())
            .map_err(input("report.json"))?;
        let table = report.metrics.to_table();
        fs::write(args.out.join("report.txt"), &table).map_err(input("report.txt"))?;
        println!("{}", serde_json::to_string(&report.metrics).expect("report serializes"));
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure(2, format!("{} of {} episodes failed", failures.len(), items.len())))
    }
}

fn cmd_plan(scene: &Path, seed: u64, count: usize, max_attempts: usize) -> Result<(), Failure> {
    let scene = read_scene(scene)?;
    let kin = Params::default().kinematics();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let (mut steps, mut meters) = (0usize, 0.0);
    for _ in 0..count {
        let traj = sample_trajectory(&scene, &kin, &mut rng, max_attempts).map_err(input(&scene.name))?;
        steps += traj.step_count;
        meters += traj.geodesic_length;
        serde_json::to_writer(&mut out, &traj).map_err(input("stdout"))?;
        out.write_all(b"\n").map_err(input("stdout"))?;
    }
    out.flush().map_err(input("stdout"))?;
    if count > 0 {
        eprintln!(
            "{count} trajectories, {:.1} steps per question, {:.1} m mean geodesic",
            steps as f64 / count as f64,
            meters / count as f64
        );
    } else {
        eprintln!("0 trajectories");
    }
    Ok(())
}

fn write_image(img: Image, out: &Path, format: ImageFormat) -> Result<(), Failure> {
    match format {
        ImageFormat::Ppm => fs::write(out, img.to_ppm()).map_err(input(out.display())),
        ImageFormat::Png => {
            let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.pixels)
                .ok_or_else(|| Failure(1, "image buffer size mismatch".into()))?;
            buf.save_with_format(out, image::ImageFormat::Png)
                .map_err(input(out.display()))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_render(
    scene: &Path,
    trace: Option<&Path>,
    out: &Path,
    layer: &str,
    scale: usize,
    format: ImageFormat,
    frames: bool,
) -> Result<(), Failure> {
    let layer: Layer = layer.parse().map_err(|e| Failure(1, e))?;
    let scene = read_scene(scene)?;
    let episode = match trace {
        Some(p) => {
            let f = File::open(p).map_err(input(p.display()))?;
            let (header, result) = read_trace(BufReader::new(f)).map_err(input(p.display()))?;
            if header.scene != scene.name {
                return Err(Failure(
                    1,
                    format!("trace is for scene {:?}, not {:?}", header.scene, scene.name),
                ));
            }
            let n = scene.len();
            if result.snapshot.width != scene.width || result.snapshot.height != scene.height || result.snapshot.semantic.len() != n {
                return Err(Failure(1, "trace maps do not match the scene size".into()));
            }
            Some(result)
        }
        None => None,
    };
    if !frames {
        let shown = episode.as_ref().filter(|e| !e.records.is_empty());
        return write_image(render(&scene, shown, layer, scale), out, format);
    }
    let episode = episode.ok_or_else(|| Failure(1, "--frames needs --trace".into()))?;
    fs::create_dir_all(out).map_err(input(out.display()))?;
    let ext = match format {
        ImageFormat::Ppm => "ppm",
        ImageFormat::Png => "png",
    };
    for (k, img) in render_frames(&scene, &episode, layer, scale).into_iter().enumerate() {
        write_image(img, &out.join(format!("frame_{k:04}.{ext}")), format)?;
    }
    Ok(())
}

fn cmd_mock_serve(
    host: &str,
    port: u16,
    rulebook: Option<&Path>,
    replay: Option<&Path>,
    workers: usize,
) -> Result<(), Failure> {
    let oracle = ScriptedOracle::new(load_rulebook(rulebook)?);
    let replay = match replay {
        Some(dir) => ReplaySet::load_dir(dir).map_err(input(dir.display()))?,
        None => ReplaySet::default(),
    };
    let server = MockServer::start(&format!("{host}:{port}"), oracle, replay, workers)
        .map_err(input(format!("bind {host}:{port}")))?;
    println!("listening on http://{host}:{}", server.port());
    io::stdout().flush().map_err(input("stdout"))?;
    server.wait();
    Ok(())
}

fn cmd_synth(out: &Path, name: &str, seed: u64, count: usize, width: usize, height: usize) -> Result<(), Failure> {
    let params = HouseParams {
        width,
        height,
        ..HouseParams::default()
    };
    if width < params.min_room + 2 || height < params.min_room + 2 {
        return Err(Failure(1, format!("house must be at least {0}x{0} cells", params.min_room + 2)));
    }
    let house = generate_house(name, seed, &params);
    let items = generate_qa(&house, seed, count);
    fs::create_dir_all(out).map_err(input(out.display()))?;
    fs::write(out.join(format!("{name}.scene")), house.scene.to_text()).map_err(input(out.display()))?;
    let mut w = create(&out.join(format!("{name}.qa.jsonl")))?;
    write_qa(&mut w, &items)
        .and_then(|_| w.flush())
        .map_err(input(out.display()))?;
    eprintln!("{name}: {} rooms, {} questions", house.rooms.len(), items.len());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Plan {
            scene,
            seed,
            count,
            max_attempts,
        } => cmd_plan(&scene, seed, count, max_attempts),
        Command::Render {
            scene,
            trace,
            out,
            layer,
            scale,
            format,
            frames,
        } => cmd_render(&scene, trace.as_deref(), &out, &layer, scale, format, frames),
        Command::MockServe {
            port,
            host,
            rulebook,
            replay,
            workers,
        } => cmd_mock_serve(&host, port, rulebook.as_deref(), replay.as_deref(), workers),
        Command::Synth {
            out,
            name,
            seed,
            count,
            width,
            height,
        } => cmd_synth(&out, &name, seed, count, width, height),
        Command::Defaults { what } => {
            let text = match what {
                Defaults::Config => serde_json::to_string_pretty(&Config::default()),
                Defaults::Rulebook => serde_json::to_string_pretty(&Rulebook::default()),
            }
            .expect("defaults serialize");
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
