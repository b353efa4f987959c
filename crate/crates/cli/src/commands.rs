use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use serde_json::{json, Value};
use splatlbo::apps::evaluation::{evaluate as run_evaluation, EvaluationOptions};
use splatlbo::apps::{
    correspondence_error, functional_map, mean_curvature, smooth_positions, smooth_splats, spectral_nn_correspondence,
};
use splatlbo::heat::{EdgeGraph, GeodesicProvider, HeatSolver};
use splatlbo::spectral::{count_zero_eigenvalues, monitor_checkpoints, smallest_eigenpairs_with, MonitorOptions};
use splatlbo::splat_io::{write_scalar_csv, write_scalar_ply, write_splat_ply};
use splatlbo::{Correspondence, Error as CoreError, TriangleMesh};

use crate::config::{usage, RunConfig};
use crate::output::Outputs;
use crate::scene::{self, Input, Surface};
use crate::Method;

fn emit(value: &Value) -> Result<()> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer(&mut lock, value)?;
    writeln!(lock)?;
    Ok(())
}

fn summary(values: &[f64]) -> Value {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return json!({ "count": 0 });
    }
    let mut sorted = finite.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    json!({
        "count": n,
        "min": sorted[0],
        "max": sorted[n - 1],
        "mean": finite.iter().sum::<f64>() / n as f64,
        "median": median,
    })
}

fn faces_for_export(s: &Surface) -> Option<&[[usize; 3]]> {
    (!s.soup.faces.is_empty()).then_some(s.soup.faces.as_slice())
}

pub fn filter(cfg: &RunConfig, input: &Path, output: &Path, outputs: &mut Outputs) -> Result<()> {
    let set = scene::load_splats(input)?;
    let f = scene::filter(&set, cfg)?;
    write_splat_ply(&f.set, outputs.track(output))?;
    let sizes = f.graph.component_sizes();
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for &s in &sizes {
        *histogram.entry(s).or_default() += 1;
    }
    emit(&json!({
        "input": input.display().to_string(),
        "output": output.display().to_string(),
        "total": f.total,
        "after_opacity": f.after_opacity,
        "retained": f.set.len(),
        "components": sizes.len(),
        "component_sizes": sizes,
        "size_histogram": histogram.iter().map(|(s, c)| json!({"size": s, "count": c})).collect::<Vec<_>>(),
    }))
}

#[allow(clippy::too_many_arguments)]
pub fn laplacian(
    cfg: &RunConfig,
    input: &Path,
    w: &Path,
    m: &Path,
    soup: Option<&Path>,
    edges: Option<&Path>,
    labels: Option<&Path>,
    outputs: &mut Outputs,
) -> Result<()> {
    let s = scene::surface(scene::load(input)?, cfg)?;
    if (edges.is_some() || labels.is_some()) && s.graph.is_none() {
        return Err(usage("--edges and --labels need a splat input"));
    }
    outputs.track(w);
    outputs.track(m);
    s.lap.write_matrix_market(w, m)?;
    if let Some(p) = soup {
        s.soup.write_ply(&s.positions, outputs.track(p))?;
    }
    if let Some(g) = &s.graph {
        if let Some(p) = edges {
            g.write_edges_csv(outputs.track(p))?;
        }
        if let Some(p) = labels {
            g.write_labels_csv(outputs.track(p))?;
        }
    }
    emit(&json!({
        "input": input.display().to_string(),
        "vertices": s.n(),
        "nnz": s.lap.w.nnz(),
        "faces": s.soup.faces.len(),
        "isolated": s.soup.isolated.len(),
        "area": s.lap.area(),
        "components": s.graph.as_ref().map(|g| g.n_components()),
    }))
}

pub fn spectrum(cfg: &RunConfig, input: &Path, out: &Path, vectors: Option<&Path>, outputs: &mut Outputs) -> Result<()> {
    let s = scene::surface(scene::load(input)?, cfg)?;
    let spec = smallest_eigenpairs_with(&s.lap, &cfg.eigen(cfg.k_eigen))?;
    spec.write_csv(outputs.track(out))?;
    if let Some(p) = vectors {
        let mut side = p.as_os_str().to_owned();
        side.push(".json");
        outputs.track(&PathBuf::from(side));
        spec.write_eigenvectors(outputs.track(p))?;
    }
    let zeros = match count_zero_eigenvalues(&spec.eigenvalues, cfg.zero_tol) {
        Ok(z) => Value::from(z),
        Err(CoreError::IncreaseK(_)) => Value::Null,
        Err(e) => return Err(e.into()),
    };
    emit(&json!({
        "input": input.display().to_string(),
        "vertices": s.n(),
        "k": spec.k(),
        "zero_eigenvalues": zeros,
        "eigenvalues": spec.eigenvalues,
    }))
}

fn geodesics(s: &Surface, method: Method, heat_c: f64) -> Result<Box<dyn GeodesicProvider + '_>> {
    Ok(match method {
        Method::Heat => Box::new(HeatSolver::new(&s.lap, &s.soup, heat_c)?),
        Method::Dijkstra => Box::new(EdgeGraph::from_faces(&s.positions, &s.soup.faces)),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn geodesic(
    cfg: &RunConfig,
    input: &Path,
    sources: &[usize],
    out: &Path,
    ply: Option<&Path>,
    method: Method,
    outputs: &mut Outputs,
) -> Result<()> {
    let s = scene::surface(scene::load(input)?, cfg)?;
    let local: Vec<usize> = sources.iter().map(|&i| s.index(i)).collect::<Result<_>>()?;
    let values = match method {
        Method::Heat => HeatSolver::new(&s.lap, &s.soup, cfg.heat_c)?.distance(&local)?.values,
        Method::Dijkstra => EdgeGraph::from_faces(&s.positions, &s.soup.faces).shortest_paths(&local),
    };
    write_scalar_csv(&values, outputs.track(out))?;
    if let Some(p) = ply {
        write_scalar_ply(&s.positions, faces_for_export(&s), &values, outputs.track(p))?;
    }
    let unreachable = values.iter().filter(|v| !v.is_finite()).count();
    emit(&json!({
        "input": input.display().to_string(),
        "vertices": s.n(),
        "sources": sources,
        "method": format!("{method:?}").to_lowercase(),
        "unreachable": unreachable,
        "distance": summary(&values),
    }))
}

pub fn curvature(cfg: &RunConfig, input: &Path, out: &Path, ply: Option<&Path>, outputs: &mut Outputs) -> Result<()> {
    let s = scene::surface(scene::load(input)?, cfg)?;
    let h = mean_curvature(&s.lap, &s.positions, None)?;
    write_scalar_csv(&h.magnitude, outputs.track(out))?;
    if let Some(p) = ply {
        write_scalar_ply(&s.positions, faces_for_export(&s), &h.magnitude, outputs.track(p))?;
    }
    emit(&json!({
        "input": input.display().to_string(),
        "vertices": s.n(),
        "mean_curvature": summary(&h.magnitude),
    }))
}

pub fn smooth(cfg: &RunConfig, input: &Path, output: &Path, outputs: &mut Outputs) -> Result<()> {
    let loaded = scene::load(input)?;
    let faces = match &loaded {
        Input::Mesh(m) => Some(m.faces.clone()),
        Input::Splats(_) => None,
    };
    let s = scene::surface(loaded, cfg)?;
    let k = cfg.k_smooth.min(s.n());
    if k < cfg.k_smooth {
        info!("k_smooth {} capped at {} vertices", cfg.k_smooth, s.n());
    }
    let spec = smallest_eigenpairs_with(&s.lap, &cfg.eigen(k))?;
    let moved = match (&s.splats, faces) {
        (Some(set), _) => {
            let smoothed = smooth_splats(set, &spec)?;
            write_splat_ply(&smoothed, outputs.track(output))?;
            smoothed.positions()
        }
        (None, Some(faces)) => {
            let p = smooth_positions(&spec, &s.positions)?;
            TriangleMesh::new(p.clone(), faces)?.write_off(outputs.track(output))?;
            p
        }
        (None, None) => unreachable!("a surface is either splats or a mesh"),
    };
    let shift: Vec<f64> = moved.iter().zip(&s.positions).map(|(a, b)| (a - b).norm()).collect();
    emit(&json!({
        "input": input.display().to_string(),
        "output": output.display().to_string(),
        "vertices": s.n(),
        "k_smooth": k,
        "displacement": summary(&shift),
    }))
}

pub struct MatchArgs<'a> {
    pub source: &'a Path,
    pub target: &'a Path,
    pub gt: &'a Path,
    pub fmap_k: usize,
    pub samples: usize,
    pub method: Method,
    pub pred_out: Option<&'a Path>,
    pub fmap_out: Option<&'a Path>,
    pub errors_out: Option<&'a Path>,
}

pub fn match_eval(cfg: &RunConfig, a: MatchArgs<'_>, outputs: &mut Outputs) -> Result<()> {
    if a.fmap_k == 0 || a.samples == 0 {
        return Err(usage("--fmap-k and --samples must be positive"));
    }
    let src = scene::surface(scene::load(a.source)?, cfg)?;
    let tgt = scene::surface(scene::load(a.target)?, cfg)?;
    let gt = Correspondence::read_csv(a.gt, tgt.n()).with_context(|| format!("reading {}", a.gt.display()))?;
    if gt.source_n() != src.n() {
        bail!(
            "ground truth maps {} source elements but the source has {}",
            gt.source_n(),
            src.n()
        );
    }
    let k = cfg.k_eigen.max(a.fmap_k).min(src.n()).min(tgt.n());
    let spec_s = smallest_eigenpairs_with(&src.lap, &cfg.eigen(k))?;
    let spec_t = smallest_eigenpairs_with(&tgt.lap, &cfg.eigen(k))?;
    let fmap = functional_map(&spec_s.eigenvectors, &spec_t.eigenvectors, &tgt.lap.mass, &gt, a.fmap_k.min(k))?;
    let predicted = spectral_nn_correspondence(&spec_s.eigenvectors, &spec_t.eigenvectors, &fmap)?;
    let provider = geodesics(&tgt, a.method, cfg.heat_c)?;
    let (picked, errors) =
        correspondence_error(&predicted, &gt, provider.as_ref(), tgt.lap.area(), a.samples, cfg.seed)?;

    if let Some(p) = a.pred_out {
        predicted.write_csv(outputs.track(p))?;
    }
    if let Some(p) = a.fmap_out {
        fmap.write_csv(outputs.track(p))?;
    }
    if let Some(p) = a.errors_out {
        let p = outputs.track(p);
        let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
        writeln!(w, "source_index,error")?;
        for (i, e) in picked.iter().zip(&errors) {
            writeln!(w, "{i},{e}")?;
        }
        w.flush()?;
    }
    emit(&json!({
        "source": a.source.display().to_string(),
        "target": a.target.display().to_string(),
        "fmap_k": fmap.k(),
        "agreement": predicted.agreement(&gt),
        "e_corr": summary(&errors),
        "samples": picked.iter().zip(&errors).map(|(i, e)| json!([i, e])).collect::<Vec<_>>(),
    }))
}

pub fn monitor(cfg: &RunConfig, mut paths: Vec<PathBuf>, pattern: Option<&str>) -> Result<()> {
    if let Some(p) = pattern {
        let mut matched: Vec<PathBuf> = glob::glob(p)
            .map_err(|e| usage(format!("bad glob `{p}`: {e}")))?
            .collect::<std::result::Result<_, _>>()?;
        matched.sort();
        if matched.is_empty() {
            info!("glob `{p}` matched nothing");
        }
        paths.extend(matched);
    }
    if paths.is_empty() {
        return Err(usage("no checkpoints given"));
    }
    let opts = MonitorOptions {
        k_eigen: cfg.k_eigen,
        laplacian: cfg.laplacian(),
        keep_components: cfg.keep_components,
        opacity_min: cfg.opacity_min,
        drift_threshold: cfg.drift_threshold,
        seed: cfg.seed,
        ..Default::default()
    };
    for record in monitor_checkpoints(&paths, &opts) {
        if let Some(e) = &record.error {
            log::warn!("{}: {e}", record.path);
        }
        emit(&serde_json::to_value(&record)?)?;
    }
    Ok(())
}

pub fn evaluate(
    mesh: &Path,
    splats: &Path,
    opts: &EvaluationOptions,
    out: Option<&Path>,
    outputs: &mut Outputs,
) -> Result<()> {
    let m = scene::load_mesh(mesh)?;
    let s = scene::load_splats(splats)?;
    let report = run_evaluation(&m, &s, opts)?;
    let value = serde_json::to_value(&report)?;
    if let Some(p) = out {
        let text = serde_json::to_string_pretty(&value)?;
        std::fs::write(outputs.track(p), text + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    emit(&value)
}
