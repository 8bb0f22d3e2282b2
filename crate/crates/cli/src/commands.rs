use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::json;
use splatstyle::camera::{camera_path, Camera};
use splatstyle::eval::bench::{STYLE_A, STYLE_B};
use splatstyle::eval::{
    control_benchmark, gradcheck, held_out_pose, identity_scenario, path_psnr, psnr,
    robustness_protocol, scenario_path, throughput_sweep, toy_benchmark, GradcheckConfig,
    StyleScenario,
};
use splatstyle::image::save_png;
use splatstyle::ply::{scene_load, scene_save};
use splatstyle::raster::render;
use splatstyle::synth::{
    camera_ring, checker, checkerboard_quad_dataset, front_camera, random_image,
    random_visible_scene, render_quad, seeded, PlanarQuad,
};
use splatstyle::train::{pretrain, stylize, PreparedStyle, StyleTask, TrainConfig};
use splatstyle::{GaussianScene, Image, ShDegree};

use crate::config::load_config;
use crate::dataset::{DatasetLayout, PosedImages};
use crate::log::{sidecar, write_json, JsonLines};
use crate::{Command, Scenario};

/// Runs one command. `Ok(false)` means the command ran but its checks failed.
pub fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Pretrain {
            dataset,
            config,
            out,
            seed,
            iters,
            budget,
        } => {
            let mut cfg = resolve_config(config.as_deref(), seed)?;
            if let Some(n) = iters {
                cfg.pretrain.iters = n;
            }
            if let Some(b) = budget {
                cfg.pretrain.max_gaussians = b;
            }
            cfg.validate()?;
            cmd_pretrain(&DatasetLayout::new(dataset), &cfg, &out)?;
            Ok(true)
        }
        Command::Stylize {
            dataset,
            scene,
            config,
            out,
            seed,
            iters,
            extractor,
            budget,
        } => {
            let ds = DatasetLayout::new(dataset);
            let mut cfg = resolve_config(config.as_deref(), seed)?;
            if let Some(n) = iters {
                cfg.stylize.iters = n;
            }
            if let Some(e) = extractor {
                cfg.stylize.extractor = e;
            }
            cfg.stylize.extractor = ds.resolve_extractor(&cfg.stylize.extractor);
            cfg.validate()?;
            cmd_stylize(&ds, &scene, &cfg, budget, &out)?;
            Ok(true)
        }
        Command::Render {
            scene,
            cameras,
            camera,
            out,
        } => {
            let mut cams = read_cameras(&cameras)?;
            if let Some(id) = camera {
                cams = vec![find_camera(&cams, &id)?];
            }
            cmd_render(&load_scene(&scene)?, &cams, &out, "render")?;
            Ok(true)
        }
        Command::RenderPath {
            scene,
            cameras,
            from,
            to,
            frames,
            out,
        } => {
            let cams = read_cameras(&cameras)?;
            let start = match from {
                Some(id) => find_camera(&cams, &id)?,
                None => cams[0].clone(),
            };
            let end = match to {
                Some(id) => find_camera(&cams, &id)?,
                None => cams[cams.len() - 1].clone(),
            };
            if frames == 0 {
                bail!("--frames must be at least 1");
            }
            let mut path = camera_path(&start, &end, frames);
            for (i, c) in path.iter_mut().enumerate() {
                c.id = format!("frame_{i:04}");
            }
            cmd_render(&load_scene(&scene)?, &path, &out, "render_path")?;
            Ok(true)
        }
        Command::Gradcheck {
            scenes,
            gaussians,
            seed,
            out,
        } => cmd_gradcheck(scenes, gaussians, seed, &out),
        Command::Bench {
            scenario,
            config,
            out,
            seed,
            iters,
            budget,
            size,
        } => {
            let mut cfg = resolve_config(config.as_deref(), seed)?;
            if let Some(n) = iters {
                cfg.stylize.iters = n;
            }
            cfg.validate()?;
            cmd_bench(scenario, &cfg, budget, size, &out)
        }
        Command::ToyDataset { out, size } => {
            cmd_toy_dataset(&DatasetLayout::new(out), size)?;
            Ok(true)
        }
    }
}

fn resolve_config(path: Option<&Path>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load_scene(path: &Path) -> Result<GaussianScene> {
    scene_load(path).with_context(|| format!("reading scene {}", path.display()))
}

fn save_scene(scene: &GaussianScene, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    scene_save(scene, path).with_context(|| format!("writing scene {}", path.display()))
}

/// A camera file holds either a list of cameras or one camera.
fn read_cameras(path: &Path) -> Result<Vec<Camera>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cams: Vec<Camera> =
        match serde_json::from_str::<Vec<Camera>>(&text) {
            Ok(list) => list,
            Err(_) => vec![serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?],
        };
    if cams.is_empty() {
        bail!("{} holds no cameras", path.display());
    }
    for c in &cams {
        c.validate()?;
    }
    Ok(cams)
}

fn find_camera(cams: &[Camera], id: &str) -> Result<Camera> {
    cams.iter()
        .find(|c| c.id == id)
        .cloned()
        .ok_or_else(|| anyhow!("no camera with id '{id}'"))
}

fn header(command: &str, cfg: &impl Serialize) -> serde_json::Value {
    json!({ "command": command, "config": cfg })
}

fn cmd_pretrain(ds: &DatasetLayout, cfg: &TrainConfig, out: &Path) -> Result<()> {
    let PosedImages { cameras, images } = ds.posed_images()?;
    let t = Instant::now();
    let outcome = pretrain(&images, &cameras, &cfg.pretrain, cfg.seed)?;
    let secs = t.elapsed().as_secs_f64();
    save_scene(&outcome.scene, out)?;

    let mut log = JsonLines::create(&sidecar(out, "metrics.jsonl"))?;
    log.write(&header("pretrain", cfg))?;
    for m in &outcome.metrics {
        log.write(m)?;
    }
    let mut summary = json!({
        "final": true,
        "n_gaussians": outcome.scene.len(),
        "seconds": secs,
        "train_psnr": mean_psnr(&outcome.scene, &cameras, &images)?,
    });
    if let Some(held) = ds.held_out() {
        let h = held.posed_images()?;
        summary["held_out_psnr"] = json!(mean_psnr(&outcome.scene, &h.cameras, &h.images)?);
    }
    log.write(&summary)?;
    log.finish()?;
    println!("{summary}");
    Ok(())
}

fn mean_psnr(scene: &GaussianScene, cams: &[Camera], images: &[Image]) -> Result<f64> {
    let mut total = 0.0;
    for (cam, img) in cams.iter().zip(images) {
        total += psnr(&render(scene, cam, scene.sh_degree())?.color, img);
    }
    Ok(total / cams.len().max(1) as f64)
}

fn cmd_stylize(
    ds: &DatasetLayout,
    scene: &Path,
    cfg: &TrainConfig,
    budget: Option<usize>,
    out: &Path,
) -> Result<()> {
    let (style_ref, ref_pose) = ds.reference()?;
    let cameras = ds.cameras()?;
    let content = load_scene(scene)?;
    let mut scfg = cfg.stylize.clone();
    if let Some(b) = budget {
        scfg.control.max_gaussians = Some(content.len() + b);
    }
    let task = StyleTask {
        content: &content,
        style_ref: &style_ref,
        ref_pose: &ref_pose,
        cameras: &cameras,
    };
    let t = Instant::now();
    let outcome = stylize(task, &scfg, cfg.seed)?;
    let secs = t.elapsed().as_secs_f64();
    save_scene(&outcome.scene, out)?;

    let resolved = TrainConfig {
        stylize: scfg,
        ..cfg.clone()
    };
    let mut log = JsonLines::create(&sidecar(out, "metrics.jsonl"))?;
    log.write(&header("stylize", &resolved))?;
    for m in &outcome.metrics {
        log.write(m)?;
    }
    let ref_render = render(&outcome.scene, &ref_pose, ShDegree::Diffuse)?.color;
    let summary = json!({
        "final": true,
        "n_gaussians": outcome.scene.len(),
        "seconds": secs,
        "reference_psnr": psnr(&ref_render, &style_ref),
        "reference_l1": splatstyle::eval::l1(&ref_render, &style_ref),
    });
    log.write(&summary)?;
    log.finish()?;
    let mut events = JsonLines::create(&sidecar(out, "events.jsonl"))?;
    for e in &outcome.events {
        events.write(e)?;
    }
    events.finish()?;
    println!("{summary}");
    Ok(())
}

#[derive(Serialize)]
struct Timing {
    command: String,
    frames: usize,
    gaussians: usize,
    seconds: f64,
    fps: f64,
}

fn cmd_render(scene: &GaussianScene, cams: &[Camera], out: &Path, command: &str) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let degree = scene.sh_degree();
    let mut seconds = 0.0;
    for cam in cams {
        let t = Instant::now();
        let img = render(scene, cam, degree)?.color;
        seconds += t.elapsed().as_secs_f64();
        let name = if cam.id.is_empty() {
            "view".to_string()
        } else {
            cam.id.clone()
        };
        save_png(&out.join(format!("{name}.png")), &img)?;
    }
    let timing = Timing {
        command: command.into(),
        frames: cams.len(),
        gaussians: scene.len(),
        seconds,
        fps: if seconds > 0.0 {
            cams.len() as f64 / seconds
        } else {
            f64::INFINITY
        },
    };
    write_json(&out.join("timing.json"), &timing)?;
    println!("{}", serde_json::to_string(&timing)?);
    Ok(())
}

fn cmd_gradcheck(scenes: usize, gaussians: usize, seed: u64, out: &Path) -> Result<bool> {
    if scenes == 0 {
        bail!("--scenes must be at least 1");
    }
    let cam = front_camera(16, 16, 16.0);
    let mut rng = seeded(seed);
    let cfg = GradcheckConfig::default();
    let t = Instant::now();
    let mut reports = Vec::with_capacity(scenes);
    for _ in 0..scenes {
        let scene = random_visible_scene(&mut rng, gaussians, &cam);
        let tc = random_image(&mut rng, 16, 16, 3, 0.0, 1.0);
        let td = random_image(&mut rng, 16, 16, 1, 0.0, 3.0);
        reports.push(gradcheck(&scene, &cam, &tc, &td, &cfg)?);
    }
    let passed = reports.iter().all(|r| r.passed);
    let max_rel_error = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let report = json!({
        "seed": seed,
        "config": cfg,
        "scenes": reports,
        "max_rel_error": max_rel_error,
        "seconds": t.elapsed().as_secs_f64(),
        "passed": passed,
    });
    write_json(out, &report)?;
    println!(
        "{}",
        json!({ "passed": passed, "max_rel_error": max_rel_error })
    );
    Ok(passed)
}

fn cmd_bench(
    scenario: Scenario,
    cfg: &TrainConfig,
    budget: usize,
    size: u32,
    out: &Path,
) -> Result<bool> {
    let scn = toy_benchmark(size);
    let scfg = &cfg.stylize;
    let t = Instant::now();
    let mut checks = BTreeMap::new();
    let (name, report) = match scenario {
        Scenario::Control => {
            let rep = control_benchmark(&scn, budget, scfg, cfg.seed)?;
            let l1 = |m: &str| {
                rep.method(m)
                    .map(|r| r.l1)
                    .ok_or_else(|| anyhow!("missing arm {m}"))
            };
            let (tg, pos, none) = (l1("texture_guided")?, l1("positional")?, l1("none")?);
            checks.insert("texture_guided_below_positional", tg < pos);
            checks.insert("texture_guided_at_most_half_of_none", tg <= 0.5 * none);
            ("control", serde_json::to_value(&rep)?)
        }
        Scenario::Identity => {
            let (psnr, n) = identity_path_psnr(&scn, cfg)?;
            checks.insert("path_psnr_at_least_40db", psnr >= 40.0);
            (
                "identity",
                json!({ "frames": 20, "path_psnr": psnr, "gaussians": n }),
            )
        }
        Scenario::Robustness => {
            let path = scenario_path(&scn, 20);
            let rep = robustness_protocol(
                &scn,
                &held_out_pose(&scn),
                &path,
                scfg,
                (cfg.seed, cfg.seed + 1),
            )?;
            checks.insert("psnr_finite", rep.psnr.is_finite());
            (
                "robustness",
                json!({ "report": rep, "ref_lpips": "not computed" }),
            )
        }
        Scenario::Throughput => {
            let sweep =
                throughput_sweep(&[1_000, 3_000, 10_000, 30_000, 100_000], 256, 3, cfg.seed)?;
            checks.insert("linear_fit_r2_at_least_0.9", sweep.fit.r2 >= 0.9);
            ("throughput", serde_json::to_value(&sweep)?)
        }
    };
    let passed = checks.values().all(|&c| c);
    let doc = json!({
        "scenario": name,
        "size": size,
        "budget": budget,
        "config": cfg,
        "report": report,
        "checks": checks,
        "passed": passed,
        "seconds": t.elapsed().as_secs_f64(),
    });
    write_json(out, &doc)?;
    println!(
        "{}",
        json!({ "scenario": name, "checks": checks, "passed": passed })
    );
    Ok(passed)
}

fn identity_path_psnr(scn: &StyleScenario, cfg: &TrainConfig) -> Result<(f64, usize)> {
    let id = identity_scenario(scn)?;
    let run = PreparedStyle::new(id.task(), &cfg.stylize)?.run(&cfg.stylize, cfg.seed)?;
    Ok((
        path_psnr(&run.scene, &scn.content, &scenario_path(scn, 20))?,
        run.scene.len(),
    ))
}

/// Checkerboard-quad dataset: eight ring views, two held-out views and a
/// frontal reference with a finer two-tone checker.
fn cmd_toy_dataset(ds: &DatasetLayout, size: u32) -> Result<()> {
    if size < 8 {
        bail!("--size must be at least 8");
    }
    let toy = checkerboard_quad_dataset(size);
    ds.write_posed(&PosedImages {
        cameras: toy.cameras,
        images: toy.images,
    })?;
    DatasetLayout::new(ds.root.join("held_out")).write_posed(&PosedImages {
        cameras: toy.held_out_cameras,
        images: toy.held_out_images,
    })?;
    let ref_cam = camera_ring(1, size, 0.9 * size as f64, 3.5, 0.0, 0.0)
        .remove(0)
        .with_id("reference");
    let style = |s: f64, t: f64| checker(s, t, 8, STYLE_A, STYLE_B);
    let (img, _) = render_quad(&PlanarQuad::unit(), &ref_cam, 4, style);
    ds.write_reference(&img, &ref_cam)?;
    println!(
        "{}",
        json!({ "dataset": ds.root, "views": 8, "held_out": 2, "size": size })
    );
    Ok(())
}
