//! Minimal PLY reader/writer supporting ASCII and binary encodings with
//! scalar and list properties.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Ascii,
    BinaryLittleEndian,
    BinaryBigEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode(self, bytes: &[u8], format: Format) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let arr: [u8; $n] = bytes[..$n].try_into().unwrap();
                (if format == Format::BinaryBigEndian {
                    <$t>::from_be_bytes(arr)
                } else {
                    <$t>::from_le_bytes(arr)
                }) as f64
            }};
        }
        match self {
            Self::I8 => bytes[0] as i8 as f64,
            Self::U8 => bytes[0] as f64,
            Self::I16 => num!(i16, 2),
            Self::U16 => num!(u16, 2),
            Self::I32 => num!(i32, 4),
            Self::U32 => num!(u32, 4),
            Self::F32 => num!(f32, 4),
            Self::F64 => num!(f64, 8),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub name: String,
    pub kind: PropertyKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub count: usize,
    pub properties: Vec<Property>,
}

impl Element {
    pub fn property_index(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub format: Format,
    pub elements: Vec<Element>,
}

impl Header {
    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }
}

/// One decoded record. Scalar properties land in `scalars` at their
/// property index; list properties land in `lists`.
#[derive(Debug, Default, Clone)]
pub struct Record {
    pub scalars: Vec<f64>,
    pub lists: Vec<Vec<f64>>,
}

const CTX: &str = "PLY header";

pub fn read_header<R: BufRead>(reader: &mut R) -> Result<Header> {
    let mut line = String::new();
    let next_line = |reader: &mut R, line: &mut String| -> Result<bool> {
        line.clear();
        let n = reader
            .read_line(line)
            .map_err(|e| Error::parse(CTX, e.to_string()))?;
        Ok(n > 0)
    };

    if !next_line(reader, &mut line)? || line.trim() != "ply" {
        return Err(Error::parse(CTX, "missing `ply` magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        if !next_line(reader, &mut line)? {
            return Err(Error::parse(CTX, "unexpected end of file before end_header"));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => continue,
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] => continue,
            ["format", fmt, _version] => {
                format = Some(match *fmt {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLittleEndian,
                    "binary_big_endian" => Format::BinaryBigEndian,
                    other => return Err(Error::parse(CTX, format!("unknown format `{other}`"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(CTX, format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", ct, it, name] => {
                let elem = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(CTX, "property before any element"))?;
                let count = ScalarType::parse(ct)
                    .ok_or_else(|| Error::parse(CTX, format!("unknown type `{ct}`")))?;
                let item = ScalarType::parse(it)
                    .ok_or_else(|| Error::parse(CTX, format!("unknown type `{it}`")))?;
                elem.properties.push(Property {
                    name: name.to_string(),
                    kind: PropertyKind::List { count, item },
                });
            }
            ["property", ty, name] => {
                let elem = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(CTX, "property before any element"))?;
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| Error::parse(CTX, format!("unknown type `{ty}`")))?;
                elem.properties.push(Property {
                    name: name.to_string(),
                    kind: PropertyKind::Scalar(ty),
                });
            }
            _ => {
                return Err(Error::parse(
                    CTX,
                    format!("unrecognized header line `{}`", line.trim()),
                ))
            }
        }
    }
    let format = format.ok_or_else(|| Error::parse(CTX, "missing format line"))?;
    Ok(Header { format, elements })
}

/// Streams every record of every element in file order to `visit`.
pub fn read_body<R: BufRead>(
    reader: &mut R,
    header: &Header,
    mut visit: impl FnMut(&Element, usize, &Record) -> Result<()>,
) -> Result<()> {
    match header.format {
        Format::Ascii => {
            let mut text = String::new();
            reader
                .read_to_string(&mut text)
                .map_err(|e| Error::parse("PLY body", e.to_string()))?;
            let mut tokens = text.split_whitespace();
            for elem in &header.elements {
                let mut rec = Record {
                    scalars: vec![f64::NAN; elem.properties.len()],
                    lists: vec![Vec::new(); elem.properties.len()],
                };
                for idx in 0..elem.count {
                    for (p, prop) in elem.properties.iter().enumerate() {
                        let mut next = || -> Result<f64> {
                            let tok = tokens.next().ok_or_else(|| truncated(elem, idx, prop))?;
                            tok.parse::<f64>().map_err(|_| Error::Property {
                                property: prop.name.clone(),
                                index: idx,
                                message: format!("cannot parse `{tok}` as a number"),
                            })
                        };
                        match prop.kind {
                            PropertyKind::Scalar(_) => rec.scalars[p] = next()?,
                            PropertyKind::List { .. } => {
                                let len = next()? as usize;
                                rec.lists[p].clear();
                                for _ in 0..len {
                                    let v = next()?;
                                    rec.lists[p].push(v);
                                }
                            }
                        }
                    }
                    visit(elem, idx, &rec)?;
                }
            }
        }
        format => {
            let mut buf = [0u8; 8];
            for elem in &header.elements {
                let mut rec = Record {
                    scalars: vec![f64::NAN; elem.properties.len()],
                    lists: vec![Vec::new(); elem.properties.len()],
                };
                for idx in 0..elem.count {
                    for (p, prop) in elem.properties.iter().enumerate() {
                        let mut next = |ty: ScalarType| -> Result<f64> {
                            let n = ty.size();
                            reader
                                .read_exact(&mut buf[..n])
                                .map_err(|_| truncated(elem, idx, prop))?;
                            Ok(ty.decode(&buf[..n], format))
                        };
                        match prop.kind {
                            PropertyKind::Scalar(ty) => rec.scalars[p] = next(ty)?,
                            PropertyKind::List { count, item } => {
                                let len = next(count)? as usize;
                                rec.lists[p].clear();
                                for _ in 0..len {
                                    let v = next(item)?;
                                    rec.lists[p].push(v);
                                }
                            }
                        }
                    }
                    visit(elem, idx, &rec)?;
                }
            }
        }
    }
    Ok(())
}

fn truncated(elem: &Element, idx: usize, prop: &Property) -> Error {
    Error::Property {
        property: prop.name.clone(),
        index: idx,
        message: format!("unexpected end of data in element `{}`", elem.name),
    }
}

/// Writes the header for the given elements. Only the element/property
/// declarations are emitted; the caller writes the body.
pub fn write_header<W: Write>(
    out: &mut W,
    format: Format,
    comments: &[&str],
    elements: &[(&str, usize, Vec<String>)],
) -> std::io::Result<()> {
    writeln!(out, "ply")?;
    let fmt = match format {
        Format::Ascii => "ascii",
        Format::BinaryLittleEndian => "binary_little_endian",
        Format::BinaryBigEndian => "binary_big_endian",
    };
    writeln!(out, "format {fmt} 1.0")?;
    for c in comments {
        writeln!(out, "comment {c}")?;
    }
    for (name, count, props) in elements {
        writeln!(out, "element {name} {count}")?;
        for p in props {
            writeln!(out, "property {p}")?;
        }
    }
    writeln!(out, "end_header")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parses_ascii_with_lists() {
        let text = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty float x\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n1.5 3\n-2 255\n3 0 1 1\n";
        let mut r = Cursor::new(text.as_bytes());
        let h = read_header(&mut r).unwrap();
        assert_eq!(h.format, Format::Ascii);
        assert_eq!(h.elements.len(), 2);
        let mut seen = Vec::new();
        read_body(&mut r, &h, |e, i, rec| {
            if e.name == "vertex" {
                seen.push((i, rec.scalars[0], rec.scalars[1]));
            } else {
                assert_eq!(rec.lists[0], vec![0.0, 1.0, 1.0]);
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![(0, 1.5, 3.0), (1, -2.0, 255.0)]);
    }

    #[test]
    fn rejects_missing_magic_and_bad_lines() {
        let mut r = Cursor::new(b"plx\n".as_slice());
        assert!(read_header(&mut r).is_err());
        let mut r = Cursor::new(b"ply\nformat ascii 1.0\nelement vertex two\nend_header\n".as_slice());
        assert!(read_header(&mut r).is_err());
        let mut r = Cursor::new(b"ply\nformat ascii 1.0\nproperty float x\nend_header\n".as_slice());
        assert!(read_header(&mut r).is_err());
    }

    #[test]
    fn truncated_binary_names_property_and_index() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\nend_header\n".to_vec();
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        bytes.extend_from_slice(&3.0f32.to_le_bytes());
        let mut r = Cursor::new(bytes);
        let h = read_header(&mut r).unwrap();
        let err = read_body(&mut r, &h, |_, _, _| Ok(())).unwrap_err();
        match err {
            Error::Property { property, index, .. } => {
                assert_eq!(property, "y");
                assert_eq!(index, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
