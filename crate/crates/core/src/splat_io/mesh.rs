use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::Vec3;

use super::ply;

/// Indexed triangle mesh used as the reference representation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Validates indices and rejects faces with repeated vertices or zero
    /// area.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::InvalidInput(format!(
                    "face {fi} {f:?} references a vertex >= {n}"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateTriangle(*f));
            }
            let area = (vertices[f[1]] - vertices[f[0]])
                .cross(&(vertices[f[2]] - vertices[f[0]]))
                .norm();
            if !(area > 0.0) {
                return Err(Error::DegenerateTriangle(*f));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        0.5 * (self.vertices[b] - self.vertices[a])
            .cross(&(self.vertices[c] - self.vertices[a]))
            .norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Returns a copy with every vertex mapped through `f`.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn write_off(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(out, "OFF").map_err(io)?;
        writeln!(out, "{} {} 0", self.vertices.len(), self.faces.len()).map_err(io)?;
        for v in &self.vertices {
            writeln!(out, "{} {} {}", v.x, v.y, v.z).map_err(io)?;
        }
        for f in &self.faces {
            writeln!(out, "3 {} {} {}", f[0], f[1], f[2]).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Reads a triangle mesh from PLY or OFF. Polygons with more than three
/// corners are fan-triangulated.
pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let head = reader.fill_buf().map_err(|e| Error::io(path, e))?;
    if head.starts_with(b"ply") {
        read_ply_mesh(&mut reader)
    } else if head.starts_with(b"OFF") || head.starts_with(b"#") {
        read_off(reader)
    } else {
        Err(Error::parse(
            path.display().to_string(),
            "unrecognized mesh format (expected PLY or OFF)",
        ))
    }
}

fn fan(poly: &[usize], faces: &mut Vec<[usize; 3]>) -> Result<()> {
    if poly.len() < 3 {
        return Err(Error::parse("mesh", format!("face with {} corners", poly.len())));
    }
    for k in 1..poly.len() - 1 {
        faces.push([poly[0], poly[k], poly[k + 1]]);
    }
    Ok(())
}

fn read_ply_mesh<R: BufRead>(reader: &mut R) -> Result<TriangleMesh> {
    let header = ply::read_header(reader)?;
    let vertex = header
        .element("vertex")
        .ok_or_else(|| Error::parse("PLY header", "no `vertex` element"))?;
    let xyz: Vec<usize> = ["x", "y", "z"]
        .iter()
        .map(|n| {
            vertex.property_index(n).ok_or_else(|| {
                Error::parse("PLY header", format!("missing vertex property `{n}`"))
            })
        })
        .collect::<Result<_>>()?;
    let face_prop = header.element("face").map(|f| {
        f.property_index("vertex_indices")
            .or_else(|| f.property_index("vertex_index"))
    });
    if let Some(None) = face_prop {
        return Err(Error::parse("PLY header", "face element without vertex_indices"));
    }
    let face_prop = face_prop.flatten();

    let mut vertices = Vec::with_capacity(vertex.count);
    let mut faces = Vec::new();
    ply::read_body(reader, &header, |elem, index, rec| {
        match elem.name.as_str() {
            "vertex" => {
                let p = Vec3::new(rec.scalars[xyz[0]], rec.scalars[xyz[1]], rec.scalars[xyz[2]]);
                if !p.iter().all(|v| v.is_finite()) {
                    return Err(Error::Property {
                        property: "x".into(),
                        index,
                        message: "non-finite coordinate".into(),
                    });
                }
                vertices.push(p);
            }
            "face" => {
                let list = &rec.lists[face_prop.unwrap()];
                let poly: Vec<usize> = list.iter().map(|&v| v as usize).collect();
                fan(&poly, &mut faces)?;
            }
            _ => {}
        }
        Ok(())
    })?;
    TriangleMesh::new(vertices, faces)
}

fn read_off<R: BufRead>(reader: R) -> Result<TriangleMesh> {
    let mut tokens = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::parse("OFF", e.to_string()))?;
        let line = line.split('#').next().unwrap_or("");
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    let mut it = tokens.into_iter();
    match it.next().as_deref() {
        Some("OFF") => {}
        other => return Err(Error::parse("OFF", format!("bad magic {other:?}"))),
    }
    let mut next_num = |what: &str| -> Result<f64> {
        let t = it
            .next()
            .ok_or_else(|| Error::parse("OFF", format!("unexpected end of file reading {what}")))?;
        t.parse::<f64>()
            .map_err(|_| Error::parse("OFF", format!("cannot parse `{t}` as {what}")))
    };
    let nv = next_num("vertex count")? as usize;
    let nf = next_num("face count")? as usize;
    let _ne = next_num("edge count")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        vertices.push(Vec3::new(
            next_num("coordinate")?,
            next_num("coordinate")?,
            next_num("coordinate")?,
        ));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let k = next_num("face size")? as usize;
        let poly: Vec<usize> = (0..k)
            .map(|_| next_num("vertex index").map(|v| v as usize))
            .collect::<Result<_>>()?;
        fan(&poly, &mut faces)?;
    }
    TriangleMesh::new(vertices, faces)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TETRA: &str = "OFF\n# tetrahedron\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";

    #[test]
    fn tetrahedron_off() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.off");
        std::fs::write(&p, TETRA).unwrap();
        let m = read_mesh(&p).unwrap();
        assert_eq!((m.vertices.len(), m.faces.len()), (4, 4));
    }

    #[test]
    fn off_roundtrip_and_quads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.off");
        std::fs::write(&p, "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n").unwrap();
        let m = read_mesh(&p).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
        let q = dir.path().join("r.off");
        m.write_off(&q).unwrap();
        assert_eq!(read_mesh(&q).unwrap(), m);
    }

    #[test]
    fn ply_mesh() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ply");
        std::fs::write(
            &p,
            "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n",
        )
        .unwrap();
        let m = read_mesh(&p).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
        assert!((m.area() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_faces() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 1]]).is_err());
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 2]]).is_err());
        assert!(TriangleMesh::new(v, vec![[0, 1, 5]]).is_err());
    }
}
