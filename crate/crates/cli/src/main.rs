use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use splatprio::camera::{CameraView, Intrinsics};
use splatprio::image::{Image, LabelMask};
use splatprio::io::{load_dataset, load_image, load_labels, load_mask, load_ply, save_dataset, save_image, save_ply, Dataset, RunConfig};
use splatprio::metrics::{psnr, MetricsReport};
use splatprio::optim::{contribution_scores, normalize_grad_scores, prune_step, render_view, train, ImportanceState};
use splatprio::priority::{render_priority, render_single_pass, PriorityConfig};
use splatprio::raster::RasterConfig;
use splatprio::scene::{compose_world, SceneModel};
use splatprio::semantic::{critical_pixels, score_scene, SemanticClassTable};
use splatprio::synth::{perturbed_init, synth_scene, Layout, SynthSpec};

#[derive(Parser, Debug)]
#[command(name = "splatprio", version, about = "Semantic-priority Gaussian splatting")]
struct Cli {
    /// Plain-text `key = value` run configuration; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute semantic scores from the masks of a scene directory.
    Score(ScoreArgs),
    /// Optimize a scene against its views.
    Train(TrainArgs),
    /// Render every view, single pass or with the depth pre-pass.
    Render(RenderArgs),
    /// Prune a PLY once at a given rate.
    Prune(PruneArgs),
    /// Compare single-pass and priority rendering on one view.
    Bench(BenchArgs),
    /// Image metrics between two files or two directories.
    Metrics(MetricsArgs),
    /// Generate a synthetic scene directory.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Output directory; defaults to rewriting the scene in place.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Static initialization replacing the scene's own static Gaussians.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Perturb the initial scene with this strength in [0, 1] and re-score it.
    #[arg(long)]
    perturb: Option<f64>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    schedule_scale: Option<f64>,
    /// Pipeline toggles as NAME=on|off for SP, SD, SPR, PDR.
    #[arg(long, num_args = 1.., value_name = "NAME=on|off")]
    toggle: Vec<String>,
    /// Renders timed per view for `fps_equivalent`; PDR selects the pass.
    #[arg(long, default_value_t = 100)]
    fps_renders: usize,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the occluder depth pre-pass.
    #[arg(long)]
    pdr: bool,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
}

#[derive(Args, Debug)]
struct PruneArgs {
    #[arg(long)]
    ply: Option<PathBuf>,
    #[arg(long)]
    rate: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Scene directory whose views provide contribution scores.
    #[arg(long)]
    scene: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    /// View id; the first view by default.
    #[arg(long)]
    view: Option<u32>,
    /// Timed repetitions; the fastest run of each pass is reported.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    rendered: PathBuf,
    reference: PathBuf,
    /// Label mask (file, or directory matched by file name).
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    layout: Layout,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    size: Option<(usize, usize)>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Skip reference-rendered images and masks.
    #[arg(long)]
    no_gt: bool,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or("expected WIDTHxHEIGHT")?;
    let w = w.parse().map_err(|_| format!("bad width '{w}'"))?;
    let h = h.parse().map_err(|_| format!("bad height '{h}'"))?;
    Ok((w, h))
}

fn required(path: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.or_else(|| fallback.clone())
        .with_context(|| format!("no {what} given (flag or config key)"))
}

fn score(run: &RunConfig, args: ScoreArgs) -> Result<()> {
    let scene_dir = required(args.scene, &run.scene, "scene")?;
    let mut data = load_dataset(&scene_dir)?;
    let masks = data.masks();
    score_scene(&mut data.scene, &data.views, &masks, &data.table)?;
    let flags = data.scene.semantic_flags();
    let critical = flags.iter().filter(|f| f.1).count();
    let out = args.out.or_else(|| run.out.clone()).unwrap_or(scene_dir);
    save_dataset(&data, &out)?;
    println!("scored gaussians={} critical={critical} out={}", flags.len(), out.display());
    Ok(())
}

fn run_train(run: &RunConfig, args: TrainArgs) -> Result<()> {
    let mut run = run.clone();
    for t in &args.toggle {
        run.toggles.set(t)?;
    }
    let t = &mut run.train;
    if let Some(v) = args.iterations {
        t.iterations = v;
    }
    if let Some(v) = args.alpha {
        t.alpha = v;
    }
    if let Some(v) = args.beta {
        t.beta = v;
    }
    if let Some(v) = args.gamma {
        t.gamma = v;
    }
    if let Some(v) = args.seed {
        t.seed = v;
    }
    if let Some(v) = args.schedule_scale {
        t.schedule_scale = v;
    }
    let cfg = run.effective_train()?;
    let scene_dir = required(args.scene, &run.scene, "scene")?;
    let out = required(args.out, &run.out, "output directory")?;
    let mut data = load_dataset(&scene_dir)?;
    if let Some(init) = args.init.or_else(|| run.ply_in.clone()) {
        data.scene.static_gaussians = load_ply(&init)?;
    }
    if let Some(strength) = args.perturb {
        data.scene = perturbed_init(&data.scene, cfg.seed, strength);
        let masks = data.masks();
    score_scene(&mut data.scene, &data.views, &masks, &data.table)?;
    }
    info!("training {} gaussians for {} iterations ({})", data.scene.gaussian_count(), cfg.iterations, run.toggles);

    let start = Instant::now();
    let outcome = train(data.scene.clone(), &data.views, &cfg)?;
    let train_time = start.elapsed().as_secs_f64();

    fs::create_dir_all(&out)?;
    let mut log = outcome.log_lines().join("\n");
    log.push('\n');
    fs::write(out.join("train.log"), log)?;
    for e in &outcome.prune_events {
        println!("{}", e.to_line());
    }
    for e in &outcome.densify_events {
        println!("{}", e.to_line());
    }
    for v in &data.views {
        let Some(gt) = &v.gt_image else { continue };
        let rendered = render_view(&outcome.scene, v);
        let mask = v.semantic_mask.as_ref().map(|m| critical_pixels(m, &data.table));
        let mut report = MetricsReport::compare(&rendered, gt, mask.as_deref())?;
        report.gaussian_count = Some(outcome.scene.gaussian_count());
        report.train_time_s = Some(train_time);
        if args.fps_renders > 0 {
            let t0 = Instant::now();
            let world = compose_world(&outcome.scene, v.timestamp);
            for _ in 0..args.fps_renders {
                if run.toggles.pdr {
                    std::hint::black_box(render_priority(&world, v, outcome.scene.background, &PriorityConfig::default()));
                } else {
                    std::hint::black_box(render_single_pass(&world, v, outcome.scene.background, &RasterConfig::default()));
                }
            }
            let ms = t0.elapsed().as_secs_f64() * 1e3 / args.fps_renders as f64;
            report.fps_equivalent = Some(1e3 / ms);
        }
        println!("view={} measured=final {report}", v.id);
    }
    let trained = Dataset {
        scene: outcome.scene,
        views: data.views,
        table: data.table,
    };
    save_dataset(&trained, &out)?;
    if let Some(ply) = &run.ply_out {
        save_ply(&trained.scene.static_gaussians, ply)?;
    }
    fs::write(out.join("run.cfg"), run.to_text())?;
    Ok(())
}

fn resized(view: &CameraView, width: Option<usize>, height: Option<usize>) -> CameraView {
    let k = &view.intrinsics;
    let (w, h) = (width.unwrap_or(k.width), height.unwrap_or(k.height));
    if (w, h) == (k.width, k.height) {
        return view.clone();
    }
    let (sx, sy) = (w as f64 / k.width as f64, h as f64 / k.height as f64);
    let intr = Intrinsics {
        fx: k.fx * sx,
        fy: k.fy * sy,
        cx: k.cx * sx,
        cy: k.cy * sy,
        width: w,
        height: h,
    };
    CameraView::new(view.id, intr, view.world_to_camera, view.timestamp)
}

fn render(run: &RunConfig, args: RenderArgs) -> Result<()> {
    let scene_dir = required(args.scene, &run.scene, "scene")?;
    let out = required(args.out, &run.out, "output directory")?;
    let data = load_dataset(&scene_dir)?;
    let pdr = args.pdr;
    fs::create_dir_all(&out)?;
    for v in &data.views {
        let view = resized(v, args.width.or(run.render_width), args.height.or(run.render_height));
        let world = compose_world(&data.scene, view.timestamp);
        let (target, stats) = if pdr {
            let (t, s, _) = render_priority(&world, &view, data.scene.background, &PriorityConfig::default());
            (t, s)
        } else {
            render_single_pass(&world, &view, data.scene.background, &RasterConfig::default())
        };
        let path = out.join(format!("{}.png", view.id));
        save_image(&target.color, &path)?;
        println!("view={} pass={} {}", view.id, if pdr { "pdr" } else { "single" }, stats.to_line());
    }
    Ok(())
}

fn prune(run: &RunConfig, args: PruneArgs) -> Result<()> {
    let input = required(args.ply, &run.ply_in, "input ply")?;
    let output = required(args.out, &run.ply_out, "output ply")?;
    let mut scene = SceneModel::from_static(load_ply(&input)?, Default::default());
    let alpha = args.alpha.unwrap_or(run.train.alpha);
    let mut state = ImportanceState::new(&scene, alpha);
    match args.scene.or_else(|| run.scene.clone()) {
        Some(dir) => {
            let views = load_dataset(&dir)?.views;
            state.accumulate(&contribution_scores(&scene, &views)?);
        }
        None => log::warn!("no views given; ranking by semantic score only"),
    }
    normalize_grad_scores(&mut state);
    let event = prune_step(&mut scene, &mut state, args.rate, 0)?;
    save_ply(&scene.static_gaussians, &output)?;
    println!("{}", event.to_line());
    Ok(())
}

fn bench(run: &RunConfig, args: BenchArgs) -> Result<()> {
    let scene_dir = required(args.scene, &run.scene, "scene")?;
    let data = load_dataset(&scene_dir)?;
    let view = match args.view {
        Some(id) => data.views.iter().find(|v| v.id == id).with_context(|| format!("no view {id}"))?,
        None => data.views.first().context("scene has no views")?,
    };
    let world = compose_world(&data.scene, view.timestamp);
    let bg = data.scene.background;
    let cfg = PriorityConfig::default();
    let repeats = args.repeats.max(1);
    let mut single = render_single_pass(&world, view, bg, &cfg.raster);
    let mut pdr = render_priority(&world, view, bg, &cfg);
    for _ in 1..repeats {
        let s = render_single_pass(&world, view, bg, &cfg.raster);
        if s.1.colorpass_ms < single.1.colorpass_ms {
            single = s;
        }
        let p = render_priority(&world, view, bg, &cfg);
        if p.1.colorpass_ms < pdr.1.colorpass_ms {
            pdr = p;
        }
    }
    println!("pass=single {}", single.1.to_line());
    println!("pass=pdr {}", pdr.1.to_line());
    let ratio = pdr.1.colorpass_ms / single.1.colorpass_ms;
    let cull = pdr.1.fragments_culled_earlyz as f64 / pdr.1.fragments_binned.max(1) as f64;
    let vs_single = psnr(&pdr.0.color, &single.0.color)?;
    print!("colorpass_ratio={ratio:.4} cull_fraction={cull:.4} psnr_pdr_vs_single={vs_single:.4}");
    match &view.gt_image {
        Some(gt) => println!(" psnr_pdr_vs_reference={:.4}", psnr(&pdr.0.color, gt)?),
        None => println!(" psnr_pdr_vs_reference=absent"),
    }
    Ok(())
}

fn pngs_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

fn compare_pair(a: &Path, b: &Path, mask: Option<&Path>, table: &SemanticClassTable) -> Result<MetricsReport> {
    let (ia, ib): (Image, Image) = (load_image(a)?, load_image(b)?);
    let flags = match mask {
        Some(m) if m.exists() => {
            let m: LabelMask = load_mask(m)?;
            Some(critical_pixels(&m, table))
        }
        Some(m) => bail!("mask {} not found", m.display()),
        None => None,
    };
    Ok(MetricsReport::compare(&ia, &ib, flags.as_deref())?)
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let table = match &args.labels {
        Some(p) => load_labels(p)?,
        None => SemanticClassTable::default(),
    };
    if args.rendered.is_dir() {
        if !args.reference.is_dir() {
            bail!("{} is a directory but {} is not", args.rendered.display(), args.reference.display());
        }
        for a in pngs_in(&args.rendered)? {
            let name = a.file_name().expect("listed file");
            let b = args.reference.join(name);
            if !b.exists() {
                bail!("no reference image {}", b.display());
            }
            let mask = args.mask.as_ref().map(|m| m.join(name));
            let report = compare_pair(&a, &b, mask.as_deref(), &table)?;
            println!("image={} {report}", name.to_string_lossy());
        }
    } else {
        let report = compare_pair(&args.rendered, &args.reference, args.mask.as_deref(), &table)?;
        println!("{report}");
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        layout: args.layout,
        seed: args.seed,
        size: args.size,
        views: args.views,
        count: args.count,
        ground_truth: !args.no_gt,
    };
    let s = synth_scene(&spec)?;
    let data = Dataset {
        scene: s.scene,
        views: s.views,
        table: s.table,
    };
    save_dataset(&data, &args.out)?;
    println!(
        "synth layout={} seed={} gaussians={} views={} out={}",
        spec.layout,
        spec.seed,
        data.scene.gaussian_count(),
        data.views.len(),
        args.out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.toggles.validate()?;
    match cli.command {
        Command::Score(a) => score(&config, a),
        Command::Train(a) => run_train(&config, a),
        Command::Render(a) => render(&config, a),
        Command::Prune(a) => prune(&config, a),
        Command::Bench(a) => bench(&config, a),
        Command::Metrics(a) => metrics(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
