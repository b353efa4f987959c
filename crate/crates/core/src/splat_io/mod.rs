//! Gaussian splat checkpoints and reference triangle meshes: parsing,
//! serialization, and per-splat covariance and normal reconstruction.
//!
//! Checkpoints follow the common 3DGS layout: `scale_*` hold log standard
//! deviations, `opacity` holds a logit, `rot_0..rot_3` hold an unnormalized
//! `(w, x, y, z)` quaternion, and `f_dc_*` / `f_rest_*` carry spherical
//! harmonic coefficients that are passed through untouched.

mod export;
mod mesh;
pub mod ply;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};

use crate::error::{Error, Result};
use crate::{Mat3, Vec3};

pub use export::{ramp_color, write_faces_ply, write_scalar_csv, write_scalar_ply};
pub use mesh::{read_mesh, TriangleMesh};

/// One anisotropic 3D Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSplat {
    pub mean: Vec3,
    /// Standard deviations along the rotated principal axes.
    pub scale: Vec3,
    pub rotation: UnitQuaternion<f64>,
    pub opacity: f64,
    /// Spherical harmonic color coefficients, in file order.
    pub sh: Vec<f32>,
}

impl GaussianSplat {
    pub fn new(mean: Vec3, scale: Vec3, rotation: UnitQuaternion<f64>, opacity: f64) -> Self {
        Self {
            mean,
            scale,
            rotation,
            opacity,
            sh: Vec::new(),
        }
    }

    /// Isotropic splat with identity rotation.
    pub fn isotropic(mean: Vec3, sigma: f64) -> Self {
        Self::new(mean, Vec3::repeat(sigma), UnitQuaternion::identity(), 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.iter().all(|&s| s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "splat scale must be positive, got {:?}",
                self.scale.as_slice()
            )));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::InvalidInput(format!(
                "splat opacity {} outside [0, 1]",
                self.opacity
            )));
        }
        if !self.mean.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite splat mean".into()));
        }
        Ok(())
    }
}

/// Ordered collection of splats. Indices are stable identifiers for every
/// graph, operator and field derived from the set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplatSet {
    pub splats: Vec<GaussianSplat>,
    /// Names of the spherical harmonic properties, in file order.
    pub sh_names: Vec<String>,
    pub source_path: String,
}

impl SplatSet {
    pub fn new(splats: Vec<GaussianSplat>) -> Self {
        Self {
            splats,
            sh_names: Vec::new(),
            source_path: String::new(),
        }
    }

    /// Unit isotropic splats at the given points; useful for treating a
    /// plain point cloud with the Euclidean metric.
    pub fn from_points(points: &[Vec3]) -> Self {
        Self::new(
            points
                .iter()
                .map(|&p| GaussianSplat::isotropic(p, 1.0))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.splats.iter().map(|s| s.mean).collect()
    }

    /// Keeps the splats whose index satisfies `keep`, preserving order.
    /// Returns the subset and the old-to-new index map.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> (SplatSet, Vec<Option<usize>>) {
        let mut map = vec![None; self.len()];
        let mut splats = Vec::new();
        for (i, s) in self.splats.iter().enumerate() {
            if keep(i) {
                map[i] = Some(splats.len());
                splats.push(s.clone());
            }
        }
        (
            SplatSet {
                splats,
                sh_names: self.sh_names.clone(),
                source_path: self.source_path.clone(),
            },
            map,
        )
    }

    /// Optional opacity pre-filter; `min_opacity <= 0` keeps everything.
    pub fn drop_low_opacity(&self, min_opacity: f64) -> (SplatSet, Vec<Option<usize>>) {
        self.select(|i| self.splats[i].opacity >= min_opacity)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
    (p / (1.0 - p)).ln()
}

const REQUIRED: [&str; 11] = [
    "x", "y", "z", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
];

fn is_sh_property(name: &str) -> bool {
    name.starts_with("f_dc_") || name.starts_with("f_rest_")
}

/// Reads a 3DGS checkpoint (ASCII or binary PLY). Unknown vertex properties
/// are ignored.
pub fn read_splat_ply(path: impl AsRef<Path>) -> Result<SplatSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let header = ply::read_header(&mut reader)?;
    let vertex = header
        .element("vertex")
        .ok_or_else(|| Error::parse("PLY header", "no `vertex` element"))?;

    let mut idx = [0usize; 11];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = vertex.property_index(name).ok_or_else(|| {
            Error::parse("PLY header", format!("missing required vertex property `{name}`"))
        })?;
        if !matches!(vertex.properties[*slot].kind, ply::PropertyKind::Scalar(_)) {
            return Err(Error::parse(
                "PLY header",
                format!("vertex property `{name}` must be a scalar"),
            ));
        }
    }
    let sh_idx: Vec<usize> = vertex
        .properties
        .iter()
        .enumerate()
        .filter(|(_, p)| is_sh_property(&p.name) && matches!(p.kind, ply::PropertyKind::Scalar(_)))
        .map(|(i, _)| i)
        .collect();
    let sh_names: Vec<String> = sh_idx
        .iter()
        .map(|&i| vertex.properties[i].name.clone())
        .collect();

    let mut splats = Vec::with_capacity(vertex.count);
    ply::read_body(&mut reader, &header, |elem, index, rec| {
        if elem.name != "vertex" {
            return Ok(());
        }
        let mut v = [0.0f64; 11];
        for (k, &p) in idx.iter().enumerate() {
            let value = rec.scalars[p];
            if !value.is_finite() {
                return Err(Error::Property {
                    property: REQUIRED[k].to_string(),
                    index,
                    message: format!("non-finite value {value}"),
                });
            }
            v[k] = value;
        }
        let q = Quaternion::new(v[7], v[8], v[9], v[10]);
        if q.norm() == 0.0 {
            return Err(Error::Property {
                property: "rot_0".into(),
                index,
                message: "zero-length quaternion".into(),
            });
        }
        let scale = Vec3::new(v[4].exp(), v[5].exp(), v[6].exp());
        if !scale.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(Error::Property {
                property: "scale_0".into(),
                index,
                message: "decoded scale is not a positive finite number".into(),
            });
        }
        let mut sh = Vec::with_capacity(sh_idx.len());
        for &p in &sh_idx {
            let value = rec.scalars[p];
            if !value.is_finite() {
                return Err(Error::Property {
                    property: elem.properties[p].name.clone(),
                    index,
                    message: format!("non-finite value {value}"),
                });
            }
            sh.push(value as f32);
        }
        splats.push(GaussianSplat {
            mean: Vec3::new(v[0], v[1], v[2]),
            scale,
            rotation: UnitQuaternion::from_quaternion(q),
            opacity: sigmoid(v[3]),
            sh,
        });
        Ok(())
    })?;

    Ok(SplatSet {
        splats,
        sh_names,
        source_path: path.display().to_string(),
    })
}

/// Writes a binary little-endian 3DGS checkpoint using the same encoding
/// conventions as [`read_splat_ply`].
pub fn write_splat_ply(set: &SplatSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if set.is_empty() {
        return Err(Error::InvalidInput("cannot write an empty splat set".into()));
    }
    if let Some((i, s)) = set
        .splats
        .iter()
        .enumerate()
        .find(|(_, s)| s.sh.len() != set.sh_names.len())
    {
        return Err(Error::InvalidInput(format!(
            "splat {i} has {} SH coefficients, header declares {}",
            s.sh.len(),
            set.sh_names.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);

    let mut props: Vec<String> = ["x", "y", "z", "nx", "ny", "nz"]
        .iter()
        .map(|n| format!("float {n}"))
        .collect();
    props.extend(set.sh_names.iter().map(|n| format!("float {n}")));
    props.extend(
        ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
            .iter()
            .map(|n| format!("float {n}")),
    );
    let io = |e| Error::io(path, e);
    ply::write_header(
        &mut out,
        ply::Format::BinaryLittleEndian,
        &[],
        &[("vertex", set.len(), props)],
    )
    .map_err(io)?;

    let mut record: Vec<f32> = Vec::new();
    for s in &set.splats {
        record.clear();
        record.extend([s.mean.x, s.mean.y, s.mean.z].map(|v| v as f32));
        record.extend([0.0f32; 3]);
        record.extend_from_slice(&s.sh);
        record.push(logit(s.opacity) as f32);
        record.extend([s.scale.x, s.scale.y, s.scale.z].map(|v| v.ln() as f32));
        let q = s.rotation.quaternion();
        record.extend([q.w, q.i, q.j, q.k].map(|v| v as f32));
        for v in &record {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// Covariance `R diag(scale^2) R^T` of a splat.
pub fn covariance_of(splat: &GaussianSplat) -> Mat3 {
    let r = splat.rotation.to_rotation_matrix().into_inner();
    let d = Mat3::from_diagonal(&splat.scale.component_mul(&splat.scale));
    let c = r * d * r.transpose();
    // exact symmetry
    (c + c.transpose()) * 0.5
}

/// Splat normal: the covariance eigenvector of the smallest eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatNormal {
    pub normal: Vec3,
    /// The two smallest variances coincide; any vector of that eigenspace
    /// would do.
    pub degenerate: bool,
}

/// The principal axes of the covariance are the columns of the rotation
/// matrix, so the smallest-variance axis is read off directly.
pub fn normal_of(splat: &GaussianSplat) -> SplatNormal {
    let r = splat.rotation.to_rotation_matrix().into_inner();
    let var = splat.scale.component_mul(&splat.scale);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| var[a].total_cmp(&var[b]).then(a.cmp(&b)));
    let (lo, mid) = (var[order[0]], var[order[1]]);
    let degenerate = (mid - lo).abs() <= 1e-9 * mid.abs();
    let n = r.column(order[0]).into_owned().normalize();
    SplatNormal {
        normal: canonical_sign(n),
        degenerate,
    }
}

/// Flips `v` so its largest-magnitude component is positive (first such
/// component on ties).
pub fn canonical_sign(v: Vec3) -> Vec3 {
    let mut best = 0;
    for i in 1..3 {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        -v
    } else {
        v
    }
}
