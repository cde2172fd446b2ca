use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use serde::Serialize;

use isomesh::geometry::sample_field;
use isomesh::marching::{euler_characteristic, genus, marching_cubes, read_obj, write_obj};
use isomesh::pipeline::{ChamferObjective, SilhouetteObjective, SurfaceExtractor};
use isomesh::raster::read_pgm;
use isomesh::sdfnet::{build_dataset, train_sdf, training_family, Checkpoint, LatentCode, LatentField};
use isomesh::shapeopt::{assemble_drag_objective_with, optimize_latent, write_run_log, Iterate, Trajectory};
use isomesh::{SdfNetwork, TriMesh};

use crate::config::{load_camera, Module, RunConfig};

pub(crate) fn require_dir(path: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = path
        .clone()
        .ok_or_else(|| anyhow!("an output directory is required (--out)"))?;
    if !dir.is_dir() {
        bail!("output directory {} does not exist", dir.display());
    }
    Ok(dir)
}

fn require_parent(path: &Option<PathBuf>) -> Result<PathBuf> {
    let p = path
        .clone()
        .ok_or_else(|| anyhow!("an output file is required (--out)"))?;
    let parent = p
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    if !parent.is_dir() {
        bail!("output directory {} does not exist", parent.display());
    }
    Ok(p)
}

pub(crate) fn load_checkpoint(cfg: &RunConfig) -> Result<(Checkpoint, SdfNetwork)> {
    let path = cfg
        .paths
        .checkpoint
        .as_ref()
        .ok_or_else(|| anyhow!("a checkpoint is required (--checkpoint)"))?;
    let ck = Checkpoint::load(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    let net = ck
        .network()
        .with_context(|| format!("invalid checkpoint {}", path.display()))?;
    Ok((ck, net))
}

/// An index into the checkpoint's latent table, or a JSON array file.
fn resolve_latent(cfg: &RunConfig, ck: &Checkpoint, dim: usize) -> Result<LatentCode> {
    let arg = cfg.paths.latent.as_deref().unwrap_or("0");
    let z = match arg.parse::<usize>() {
        Ok(i) => ck
            .latent_table
            .get(i)
            .cloned()
            .ok_or_else(|| anyhow!("latent index {i} is outside the table of {}", ck.latent_table.len()))?,
        Err(_) => {
            let text = fs::read_to_string(arg).with_context(|| format!("cannot read latent file {arg}"))?;
            LatentCode(serde_json::from_str(&text).with_context(|| format!("latent file {arg}"))?)
        }
    };
    if z.len() != dim {
        bail!("latent code has length {} but the network expects {dim}", z.len());
    }
    if !z.is_finite() {
        bail!("latent code is not finite");
    }
    Ok(z)
}

fn write_latent(z: &LatentCode, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string(&z.0)? + "\n")?;
    Ok(())
}

fn dense_mesh(net: &SdfNetwork, z: &LatentCode, cfg: &RunConfig) -> Result<TriMesh> {
    let field = sample_field(&LatentField::new(net, z)?, &cfg.grid)?;
    Ok(marching_cubes(&field)?)
}

fn topology(mesh: &TriMesh) -> Option<(i64, i64)> {
    if mesh.is_empty() {
        return None;
    }
    Some((euler_characteristic(mesh).ok()?, genus(mesh).ok()?))
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let out = require_dir(&cfg.paths.out)?;
    let shapes = training_family();
    let dataset = build_dataset(&shapes, &cfg.dataset, cfg.module_seed(Module::Dataset))?;
    let mut tcfg = cfg.train.clone();
    tcfg.seed = cfg.module_seed(Module::Train);
    info!("training on {} shapes for {} steps", shapes.len(), tcfg.steps);
    let outcome = train_sdf(&dataset, &cfg.network, &tcfg)?;
    let ck = Checkpoint::new(&outcome.network, outcome.latents, shapes);
    ck.save(out.join("checkpoint.json"))?;
    let mut csv = BufWriter::new(File::create(out.join("loss.csv"))?);
    writeln!(csv, "step,loss")?;
    for (i, l) in outcome.loss_trace.iter().enumerate() {
        writeln!(csv, "{i},{l:.12e}")?;
    }
    csv.flush()?;
    println!(
        "{}",
        serde_json::json!({
            "command": "train",
            "steps": outcome.loss_trace.len(),
            "final_loss": outcome.loss_trace.last(),
        })
    );
    Ok(())
}

pub fn extract(cfg: &RunConfig) -> Result<()> {
    let out = require_parent(&cfg.paths.out)?;
    let (ck, net) = load_checkpoint(cfg)?;
    let z = resolve_latent(cfg, &ck, net.latent_dim())?;
    let mesh = dense_mesh(&net, &z, cfg)?;
    if mesh.is_empty() {
        warn!("the latent code produces no surface inside the grid; writing an empty mesh");
    }
    write_obj(&mesh, &out)?;
    let topo = topology(&mesh);
    println!(
        "{}",
        serde_json::json!({
            "command": "extract",
            "vertices": mesh.vertices.len(),
            "faces": mesh.faces.len(),
            "euler_characteristic": topo.map(|t| t.0),
            "genus": topo.map(|t| t.1),
        })
    );
    Ok(())
}

#[derive(Serialize)]
struct FitSummary {
    command: &'static str,
    iterations: usize,
    initial_objective: f64,
    best_objective: f64,
    relative_objective: f64,
    best_iteration: usize,
    stopped_early: bool,
    genus: Option<i64>,
}

fn write_fit_log(iterates: &[Iterate], path: &Path) -> Result<()> {
    let mut csv = BufWriter::new(File::create(path)?);
    writeln!(csv, "iter,objective,grad_norm")?;
    for (i, it) in iterates.iter().enumerate() {
        writeln!(csv, "{i},{:.12e},{:.12e}", it.value, it.grad_norm)?;
    }
    csv.flush()?;
    Ok(())
}

fn finish_fit(
    command: &'static str,
    tr: &Trajectory,
    net: &SdfNetwork,
    cfg: &RunConfig,
    out: &Path,
    log: impl FnOnce(&Path) -> Result<()>,
) -> Result<()> {
    let best = tr.best_iterate();
    let mesh = dense_mesh(net, &best.z, cfg)?;
    write_latent(&best.z, &out.join("latent.json"))?;
    write_obj(&mesh, out.join("mesh.obj"))?;
    log(out)?;
    if tr.stopped_early() {
        warn!("optimization stopped early: {:?}", tr.stop);
    }
    let summary = FitSummary {
        command,
        iterations: tr.iterates.len().saturating_sub(1),
        initial_objective: tr.initial_value(),
        best_objective: best.value,
        relative_objective: tr.relative_objective(),
        best_iteration: tr.best,
        stopped_early: tr.stopped_early(),
        genus: topology(&mesh).map(|t| t.1),
    };
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

pub fn fit_chamfer(cfg: &RunConfig) -> Result<()> {
    let out = require_dir(&cfg.paths.out)?;
    let target_path = match cfg.paths.targets.as_slice() {
        [p] => p,
        _ => bail!("fit-chamfer takes exactly one target OBJ (--target)"),
    };
    let (ck, net) = load_checkpoint(cfg)?;
    let z0 = resolve_latent(cfg, &ck, net.latent_dim())?;
    let target = read_obj(target_path).with_context(|| format!("target {}", target_path.display()))?;
    if target.vertices.is_empty() {
        bail!("target {} has no vertices", target_path.display());
    }
    let ex = SurfaceExtractor::new(&net, cfg.grid, cfg.tracking)?;
    let mut obj = ChamferObjective::new(ex, target.vertices, None)?;
    let tr = optimize_latent(&mut obj, &z0, &cfg.adam)?;
    finish_fit("fit-chamfer", &tr, &net, cfg, &out, |d| {
        write_fit_log(&tr.iterates, &d.join("log.csv"))
    })
}

pub fn fit_silhouette(cfg: &RunConfig) -> Result<()> {
    let out = require_dir(&cfg.paths.out)?;
    let (targets, cameras) = (&cfg.paths.targets, &cfg.paths.cameras);
    if targets.is_empty() || targets.len() != cameras.len() {
        bail!(
            "fit-silhouette needs one camera per target image, got {} image(s) and {} camera(s)",
            targets.len(),
            cameras.len()
        );
    }
    let mut views = Vec::with_capacity(targets.len());
    for (t, c) in targets.iter().zip(cameras) {
        let img = read_pgm(t).with_context(|| format!("target {}", t.display()))?;
        let cam = load_camera(c)?;
        if (cam.width, cam.height) != (img.width, img.height) {
            bail!(
                "camera {} is {}x{} but image {} is {}x{}",
                c.display(),
                cam.width,
                cam.height,
                t.display(),
                img.width,
                img.height
            );
        }
        views.push((cam, img));
    }
    let (ck, net) = load_checkpoint(cfg)?;
    let z0 = resolve_latent(cfg, &ck, net.latent_dim())?;
    let ex = SurfaceExtractor::new(&net, cfg.grid, cfg.tracking)?;
    let mut obj = SilhouetteObjective::new(ex, views, cfg.raster)?;
    let tr = optimize_latent(&mut obj, &z0, &cfg.adam)?;
    finish_fit("fit-silhouette", &tr, &net, cfg, &out, |d| {
        write_fit_log(&tr.iterates, &d.join("log.csv"))
    })
}

pub fn optimize_drag(cfg: &RunConfig) -> Result<()> {
    let out = require_dir(&cfg.paths.out)?;
    let (ck, net) = load_checkpoint(cfg)?;
    let z0 = resolve_latent(cfg, &ck, net.latent_dim())?;
    let mut reg = cfg.regularizer.clone();
    if reg.latent_table.is_empty() {
        reg.latent_table.clone_from(&ck.latent_table);
    }
    reg.k = reg.k.min(reg.latent_table.len().max(1));
    let mut obj = assemble_drag_objective_with(&net, &cfg.grid, &cfg.drag, &cfg.boxes, &reg, cfg.tracking)?;
    let tr = optimize_latent(&mut obj, &z0, &cfg.adam)?;
    finish_fit("optimize-drag", &tr, &net, cfg, &out, |d| {
        let file = BufWriter::new(File::create(d.join("run.csv"))?);
        write_run_log(&tr.iterates, file)?;
        Ok(())
    })
}
