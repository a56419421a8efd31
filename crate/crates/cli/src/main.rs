use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nbv_core::fields::{build_scene, save_voxel_grid, voxelize, OccupancyField, SceneSpec};
use nbv_core::harness::{
    self, run_episode, EpisodeSettings, ExperimentConfig, PreparedScene, RECORDS_HEADER,
};
use nbv_core::metrics::EvalConfig;
use nbv_core::policies::{Policy, PolicyConfig, PolicyKind, SelectionContext};
use nbv_core::render::{render_image, Camera, Intrinsics};
use nbv_core::surrogate::{PriorSpec, SurrogateConfig, SurrogateReconstructor};
use nbv_core::uncertainty::{
    calibration_sweep, ray_diagnostic, view_uncertainty, write_diagnostic_csv, UncertaintyParams, ViewSampling,
};
use nbv_core::Vec3;

#[derive(Parser)]
#[command(name = "nbv", version, about = "Uncertainty-driven next-best-view planning")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Emit per-candidate and per-step policy traces.
    #[arg(long, global = true)]
    trace: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene to RGB and silhouette PNGs.
    Render(RenderArgs),
    /// View uncertainty of the surrogate prior (or ground truth) from a camera.
    Uncertainty(UncertaintyArgs),
    /// Select the next view after acquiring the given history.
    Select(SelectArgs),
    /// Run one episode and print its records.
    Episode(EpisodeArgs),
    /// Run an experiment config and write records.csv and summary.csv.
    Experiment(ExperimentArgs),
    /// Per-sample uncertainty terms along one pixel ray.
    DiagnoseRay(DiagnoseArgs),
    /// Calibration error of (pred,label) samples across a beta grid.
    Calibrate(CalibrateArgs),
    /// Sample a scene onto a voxel grid and save it.
    Voxelize(VoxelizeArgs),
}

#[derive(Args)]
struct SceneArg {
    /// Scene description (JSON).
    #[arg(long)]
    scene: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    scene: SceneArg,
    #[arg(long, value_parser = parse_vec3)]
    cam: Vec3,
    #[arg(long, default_value_t = 128)]
    res: usize,
    #[arg(long, default_value_t = 128)]
    samples: usize,
    #[arg(long, default_value_t = 60.0)]
    fov: f64,
    /// Output path for the colour image; the silhouette goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct UncertaintyOpts {
    /// Parameter preset: 3d, 2d or silhouette.
    #[arg(long, default_value = "3d")]
    preset: String,
    #[arg(long, default_value_t = 1024)]
    rays: usize,
    #[arg(long, default_value_t = 128)]
    samples: usize,
}

impl UncertaintyOpts {
    fn params(&self) -> Result<UncertaintyParams> {
        Ok(UncertaintyParams::preset(&self.preset)?)
    }

    fn sampling(&self) -> ViewSampling {
        ViewSampling {
            n_rays: self.rays,
            n_samples: self.samples,
        }
    }
}

#[derive(Args)]
struct UncertaintyArgs {
    #[command(flatten)]
    scene: SceneArg,
    #[arg(long, value_parser = parse_vec3)]
    cam: Vec3,
    /// Evaluate on ground truth instead of the surrogate prior.
    #[arg(long)]
    gt: bool,
    #[command(flatten)]
    opts: UncertaintyOpts,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    scene: SceneArg,
    #[arg(long, default_value = "candidate")]
    policy: PolicyKind,
    /// Acquired views, in order; repeat the flag.
    #[arg(long = "view", value_parser = parse_vec3, required = true)]
    views: Vec<Vec3>,
    #[arg(long, default_value_t = 20)]
    candidates: usize,
    #[command(flatten)]
    opts: UncertaintyOpts,
}

#[derive(Args)]
struct EpisodeArgs {
    #[command(flatten)]
    scene: SceneArg,
    #[arg(long, default_value = "candidate")]
    policy: PolicyKind,
    #[arg(long, default_value_t = 5)]
    max_views: usize,
    /// Initialisation index; the first view derives from it and --seed.
    #[arg(long, default_value_t = 0)]
    init: usize,
    #[arg(long, default_value = "3d")]
    preset: String,
    /// Write records here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    scene: SceneArg,
    #[arg(long, value_parser = parse_vec3)]
    cam: Vec3,
    #[arg(long, value_parser = parse_pixel)]
    pixel: (usize, usize),
    #[arg(long, default_value_t = 128)]
    res: usize,
    #[arg(long, default_value_t = 128)]
    samples: usize,
    #[arg(long, default_value = "3d")]
    preset: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// CSV with `pred,label` columns; label is 0 or 1.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Inclusive grid `start:stop:step`.
    #[arg(long, default_value = "0.5:1.4:0.1", value_parser = parse_grid)]
    beta_grid: BetaGrid,
}

#[derive(Clone)]
struct BetaGrid(Vec<f64>);

#[derive(Args)]
struct VoxelizeArgs {
    #[command(flatten)]
    scene: SceneArg,
    #[arg(long, default_value_t = 64)]
    res: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_floats(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", v.len()));
    }
    Ok(v)
}

fn parse_vec3(s: &str) -> std::result::Result<Vec3, String> {
    let v = parse_floats(s, 3)?;
    Ok(Vec3::new(v[0], v[1], v[2]))
}

fn parse_pixel(s: &str) -> std::result::Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [x, y] => Ok((
            x.trim().parse().map_err(|e| format!("{x:?}: {e}"))?,
            y.trim().parse().map_err(|e| format!("{y:?}: {e}"))?,
        )),
        _ => Err("expected px,py".into()),
    }
}

fn parse_grid(s: &str) -> std::result::Result<BetaGrid, String> {
    let v: Vec<f64> = s
        .split(':')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let [start, stop, step] = v[..] else {
        return Err("expected start:stop:step".into());
    };
    if !(step > 0.0) || stop < start {
        return Err("need step > 0 and stop >= start".into());
    }
    // Count steps in integers so 0.5:1.4:0.1 yields exactly ten values.
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok(BetaGrid((0..=n).map(|i| start + i as f64 * step).collect()))
}

fn load_scene(path: &Path) -> Result<Arc<dyn OccupancyField>> {
    let spec = SceneSpec::load(path)?;
    Ok(Arc::new(build_scene(&spec)?))
}

fn scene_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<()> {
    let surrogate = SurrogateConfig::default();
    let intrinsics = Intrinsics {
        fov_deg: surrogate.fov_deg,
        ..Intrinsics::default()
    };
    match cli.command {
        Command::Render(a) => {
            let field = load_scene(&a.scene.scene)?;
            let cam = Camera::look_at_origin(a.cam, Intrinsics { fov_deg: a.fov, res: a.res })?;
            let img = render_image(field.as_ref(), &cam, a.samples)?;
            img.save_png(&a.out)?;
            let stem = a.out.file_stem().unwrap_or_default().to_string_lossy();
            let sil = a.out.with_file_name(format!("{stem}_silhouette.png"));
            img.save_silhouette_png(&sil)?;
            println!("{}\n{}", a.out.display(), sil.display());
        }
        Command::Uncertainty(a) => {
            let gt = load_scene(&a.scene.scene)?;
            let cam = Camera::on_sphere(a.cam, surrogate.camera_radius, intrinsics)?;
            let recon = SurrogateReconstructor::new(gt.clone(), &PriorSpec::default(), cli.seed, surrogate)?;
            let pred = recon.predicted_field();
            let field: &dyn OccupancyField = if a.gt { gt.as_ref() } else { &pred };
            let u = view_uncertainty(field, &cam, &a.opts.params()?, &a.opts.sampling(), cli.seed)?;
            println!("u,mean_u_sil,mean_u_depth");
            println!("{},{},{}", u.value, u.mean_u_sil, u.mean_u_depth);
        }
        Command::Select(a) => {
            let gt = load_scene(&a.scene.scene)?;
            let mut recon = SurrogateReconstructor::new(gt, &PriorSpec::default(), cli.seed, surrogate)?;
            for v in &a.views {
                recon.acquire_view(&Camera::on_sphere(*v, surrogate.camera_radius, intrinsics)?)?;
            }
            let mut config = PolicyConfig::new(a.policy);
            config.n_candidates = a.candidates;
            config.sampling = a.opts.sampling();
            let params = a.opts.params()?.at_selection(a.views.len() - 1)?;
            let pred = recon.predicted_field();
            let ctx = SelectionContext {
                field: &pred,
                history: &a.views,
                params: &params,
                radius: surrogate.camera_radius,
                intrinsics,
            };
            let sel = Policy::new(config)?.select(&ctx, cli.seed)?;
            let p = sel.position;
            println!("x,y,z,u,fallback");
            let u = sel.uncertainty.map(|u| u.to_string()).unwrap_or_default();
            println!("{},{},{},{},{}", p.x, p.y, p.z, u, sel.fallback);
        }
        Command::Episode(a) => {
            let gt = load_scene(&a.scene.scene)?;
            let scene = PreparedScene::new(
                scene_id(&a.scene.scene),
                0,
                cli.seed,
                gt,
                &PriorSpec::default(),
                &surrogate,
                &EvalConfig::default(),
            )?;
            let settings = EpisodeSettings {
                params: UncertaintyParams::preset(&a.preset)?,
                surrogate,
                max_views: a.max_views,
                timing: true,
                trace: cli.trace,
            };
            let out = run_episode(&scene, &PolicyConfig::new(a.policy), &settings, a.init);
            harness::write_csv(&out.records, RECORDS_HEADER, output(a.out.as_deref())?)?;
            if let Some(r) = out.records.iter().find(|r| !r.is_ok()) {
                bail!("step {}: {}", r.step, r.error);
            }
        }
        Command::Experiment(a) => {
            let mut config = ExperimentConfig::load(&a.config)?;
            config.trace |= cli.trace;
            let Some(dir) = a.out.or_else(|| config.output_dir.clone()) else {
                bail!("no output directory: pass --out or set output_dir");
            };
            let out = harness::run_experiment(&config)?;
            out.write(&dir)?;
            let failed = out.records.iter().filter(|r| !r.is_ok()).count();
            eprintln!("{} rows ({failed} failed) -> {}", out.records.len(), dir.display());
        }
        Command::DiagnoseRay(a) => {
            let gt = load_scene(&a.scene.scene)?;
            if a.pixel.0 >= a.res || a.pixel.1 >= a.res {
                bail!("pixel {:?} outside a {}x{} image", a.pixel, a.res, a.res);
            }
            let cam = Camera::look_at_origin(a.cam, Intrinsics { res: a.res, ..intrinsics })?;
            let recon = SurrogateReconstructor::new(gt.clone(), &PriorSpec::default(), cli.seed, surrogate)?;
            let ray = cam.pixel_ray(a.pixel.0, a.pixel.1);
            let params = UncertaintyParams::preset(&a.preset)?;
            let rows = ray_diagnostic(&recon.predicted_field(), gt.as_ref(), &ray, &params, a.samples)?;
            write_diagnostic_csv(&rows, output(a.out.as_deref())?)?;
        }
        Command::Calibrate(a) => {
            let (preds, labels) = read_samples(&a.samples)?;
            let sweep = calibration_sweep(&preds, &labels, a.bins, &a.beta_grid.0)?;
            println!("beta,calibration_error");
            for (beta, err) in sweep {
                println!("{beta:.4},{err:.6}");
            }
        }
        Command::Voxelize(a) => {
            let field = load_scene(&a.scene.scene)?;
            save_voxel_grid(&voxelize(field.as_ref(), a.res)?, &a.out)?;
            println!("{}", a.out.display());
        }
    }
    Ok(())
}

fn read_samples(path: &Path) -> Result<(Vec<f64>, Vec<bool>)> {
    #[derive(serde::Deserialize)]
    struct Sample {
        pred: f64,
        label: u8,
    }
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for (i, row) in reader.deserialize::<Sample>().enumerate() {
        let s = row.with_context(|| format!("{} row {}", path.display(), i + 1))?;
        if s.label > 1 {
            bail!("{} row {}: label must be 0 or 1", path.display(), i + 1);
        }
        preds.push(s.pred);
        labels.push(s.label == 1);
    }
    Ok((preds, labels))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
