use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::Vec3;

use super::ply;

/// Viridis anchor colors at evenly spaced ramp positions.
const VIRIDIS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

/// Maps `t` in `[0, 1]` (clamped) onto the viridis-style ramp.
pub fn ramp_color(t: f64) -> [u8; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let x = t * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    [0, 1, 2].map(|c| (a[c] as f64 + f * (b[c] as f64 - a[c] as f64)).round() as u8)
}

/// Writes points (and optionally faces) as an ASCII PLY with per-vertex RGB
/// from `field`, normalized over its finite `[min, max]`.
pub fn write_scalar_ply(
    positions: &[Vec3],
    faces: Option<&[[usize; 3]]>,
    field: &[f64],
    path: impl AsRef<Path>,
) -> Result<()> {
    if field.len() != positions.len() {
        return Err(Error::DimensionMismatch {
            expected: positions.len(),
            got: field.len(),
        });
    }
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let (lo, hi) = field
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;

    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let mut elements = vec![(
        "vertex",
        positions.len(),
        ["float x", "float y", "float z", "uchar red", "uchar green", "uchar blue"]
            .map(String::from)
            .to_vec(),
    )];
    if let Some(f) = faces {
        elements.push(("face", f.len(), vec!["list uchar int vertex_indices".into()]));
    }
    ply::write_header(&mut out, ply::Format::Ascii, &[], &elements).map_err(io)?;
    for (p, &v) in positions.iter().zip(field) {
        let t = if span > 0.0 && v.is_finite() {
            (v - lo) / span
        } else if v == f64::INFINITY {
            1.0
        } else {
            0.0
        };
        let [r, g, b] = ramp_color(t);
        writeln!(out, "{} {} {} {r} {g} {b}", p.x as f32, p.y as f32, p.z as f32).map_err(io)?;
    }
    for f in faces.unwrap_or(&[]) {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2]).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Writes an uncolored ASCII PLY of points and triangles.
pub fn write_faces_ply(positions: &[Vec3], faces: &[[usize; 3]], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    ply::write_header(
        &mut out,
        ply::Format::Ascii,
        &[],
        &[
            ("vertex", positions.len(), ["float x", "float y", "float z"].map(String::from).to_vec()),
            ("face", faces.len(), vec!["list uchar int vertex_indices".into()]),
        ],
    )
    .map_err(io)?;
    for p in positions {
        writeln!(out, "{} {} {}", p.x, p.y, p.z).map_err(io)?;
    }
    for f in faces {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2]).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Writes `index,value` rows under a header line.
pub fn write_scalar_csv(values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "index,value").map_err(io)?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{i},{v}").map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn colors(path: &Path) -> Vec<String> {
        let text = std::fs::read_to_string(path).unwrap();
        text.split("end_header\n")
            .nth(1)
            .unwrap()
            .lines()
            .map(|l| l.split_whitespace().skip(3).collect::<Vec<_>>().join(" "))
            .collect()
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp_color(0.0), VIRIDIS[0]);
        assert_eq!(ramp_color(1.0), VIRIDIS[8]);
        assert_eq!(ramp_color(2.0), VIRIDIS[8]);
    }

    #[test]
    fn constant_field_single_color() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        let pts = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        write_scalar_ply(&pts, None, &[3.0, 3.0, 3.0], &p).unwrap();
        let c = colors(&p);
        assert!(c.iter().all(|x| *x == c[0]));
    }

    #[test]
    fn two_point_field_hits_ramp_ends() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        write_scalar_ply(&[Vec3::zeros(), Vec3::x()], None, &[0.0, 1.0], &p).unwrap();
        assert_eq!(colors(&p), vec!["68 1 84", "253 231 37"]);
    }

    #[test]
    fn length_mismatch_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        assert!(write_scalar_ply(&[Vec3::zeros()], None, &[0.0, 1.0], &p).is_err());
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_scalar_csv(&[0.5, 2.0], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "index,value\n0,0.5\n1,2\n");
    }
}
