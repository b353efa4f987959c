use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::info;
use splatlbo::laplacian::{mesh_laplacian, splat_laplacian, LaplacianPair, TriangleSoup};
use splatlbo::neighborhood::{build_graph_with, prune_components_with_map, GraphOptions};
use splatlbo::splat_io::{ply, read_mesh, read_splat_ply};
use splatlbo::{NeighborGraph, SplatSet, TriangleMesh, Vec3};

use crate::config::RunConfig;

pub enum Input {
    Splats(SplatSet),
    Mesh(TriangleMesh),
}

/// `.off` files and PLY files with faces but no splat properties are
/// meshes; everything else is read as a splat checkpoint.
pub fn load(path: &Path) -> Result<Input> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let is_mesh = match ext.as_deref() {
        Some("off") => true,
        _ => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let header = ply::read_header(&mut BufReader::new(file))
                .with_context(|| format!("reading {}", path.display()))?;
            let has_faces = header.element("face").is_some_and(|f| f.count > 0);
            let has_scales = header
                .element("vertex")
                .is_some_and(|v| v.property_index("scale_0").is_some());
            has_faces && !has_scales
        }
    };
    if is_mesh {
        let mesh = read_mesh(path).with_context(|| format!("reading mesh {}", path.display()))?;
        info!("{}: mesh with {} vertices, {} faces", path.display(), mesh.n_vertices(), mesh.faces.len());
        Ok(Input::Mesh(mesh))
    } else {
        let set = read_splat_ply(path).with_context(|| format!("reading splats {}", path.display()))?;
        info!("{}: {} splats", path.display(), set.len());
        Ok(Input::Splats(set))
    }
}

pub fn load_splats(path: &Path) -> Result<SplatSet> {
    match load(path)? {
        Input::Splats(s) => Ok(s),
        Input::Mesh(_) => bail!("{} is a mesh; a splat checkpoint is required", path.display()),
    }
}

pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    match load(path)? {
        Input::Mesh(m) => Ok(m),
        Input::Splats(_) => bail!("{} is a splat checkpoint; a mesh is required", path.display()),
    }
}

/// Opacity pre-filter plus component pruning.
pub struct Filtered {
    pub set: SplatSet,
    pub total: usize,
    pub after_opacity: usize,
    pub graph: NeighborGraph,
    /// Input index to filtered index.
    pub map: Vec<Option<usize>>,
}

pub fn filter(set: &SplatSet, cfg: &RunConfig) -> Result<Filtered> {
    let (opaque, first) = set.drop_low_opacity(cfg.opacity_min);
    let graph = build_graph_with(
        &opaque,
        &GraphOptions {
            k: cfg.k_neighbors,
            metric: cfg.metric,
            ..Default::default()
        },
    )?;
    let (kept, second) = prune_components_with_map(&opaque, &graph, cfg.keep_components);
    let map = first.iter().map(|m| m.and_then(|j| second[j])).collect();
    info!(
        "kept {} of {} splats ({} components in the graph)",
        kept.len(),
        set.len(),
        graph.n_components()
    );
    Ok(Filtered {
        set: kept,
        total: set.len(),
        after_opacity: opaque.len(),
        graph,
        map,
    })
}

/// A discretized surface: the operator plus what the applications need.
pub struct Surface {
    pub lap: LaplacianPair,
    pub soup: TriangleSoup,
    pub positions: Vec<Vec3>,
    pub graph: Option<NeighborGraph>,
    /// Filtered splats; `None` for meshes.
    pub splats: Option<SplatSet>,
    /// Input index to surface index.
    pub map: Vec<Option<usize>>,
}

impl Surface {
    pub fn n(&self) -> usize {
        self.positions.len()
    }

    /// Translates an input index into a surface index.
    pub fn index(&self, input: usize) -> Result<usize> {
        match self.map.get(input) {
            Some(Some(i)) => Ok(*i),
            Some(None) => bail!("input element {input} was removed by filtering"),
            None => bail!("index {input} is out of range ({} input elements)", self.map.len()),
        }
    }
}

pub fn surface(input: Input, cfg: &RunConfig) -> Result<Surface> {
    match input {
        Input::Mesh(mesh) => {
            let lap = mesh_laplacian(&mesh)?;
            let soup = TriangleSoup::from_faces(&mesh.vertices, mesh.faces.clone());
            let map = (0..mesh.n_vertices()).map(Some).collect();
            Ok(Surface {
                lap,
                soup,
                positions: mesh.vertices,
                graph: None,
                splats: None,
                map,
            })
        }
        Input::Splats(set) => {
            let filtered = filter(&set, cfg)?;
            let op = splat_laplacian(&filtered.set, &cfg.laplacian())?;
            info!(
                "operator: {} vertices, {} faces, {} isolated",
                filtered.set.len(),
                op.soup.faces.len(),
                op.soup.isolated.len()
            );
            Ok(Surface {
                lap: op.laplacian,
                soup: op.soup,
                positions: filtered.set.positions(),
                graph: Some(op.graph),
                splats: Some(filtered.set),
                map: filtered.map,
            })
        }
    }
}
