//! Wavefront OBJ reading and writing (`v` and `f` records, triangles only).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::SurfaceMesh;
use crate::error::{Error, Result};
use crate::Vec3;

/// Writes vertices with 17 significant digits so that reading the file back
/// reproduces every coordinate exactly. Faces are 1-indexed.
pub fn write_obj(mesh: &SurfaceMesh, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for p in mesh.vertices() {
        writeln!(out, "v {:.16e} {:.16e} {:.16e}", p.x, p.y, p.z)?;
    }
    for [a, b, c] in mesh.triangles() {
        writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<SurfaceMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_obj(&text, path)
}

pub(crate) fn parse_obj(text: &str, path: &Path) -> Result<SurfaceMesh> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut vertices = Vec::new();
    let mut faces: Vec<(usize, [i64; 3])> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut fields = line.split_whitespace();
        match fields.next() {
            None => continue,
            Some("v") => {
                let coords: Vec<f64> = fields
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| parse_err(line_no, format!("bad coordinate `{s}`")))
                    })
                    .collect::<Result<_>>()?;
                // an optional fourth (w) component is tolerated and ignored
                if coords.len() != 3 && coords.len() != 4 {
                    return Err(parse_err(
                        line_no,
                        format!("vertex needs 3 coordinates, found {}", coords.len()),
                    ));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let refs: Vec<i64> = fields
                    .map(|s| {
                        // `i`, `i/t`, `i//n` and `i/t/n` all start with the vertex index
                        let head = s.split('/').next().unwrap_or("");
                        head.parse::<i64>()
                            .map_err(|_| parse_err(line_no, format!("bad face index `{s}`")))
                    })
                    .collect::<Result<_>>()?;
                if refs.len() != 3 {
                    return Err(Error::UnsupportedElement {
                        path: path.to_path_buf(),
                        line: line_no,
                        message: format!("face with {} vertices (only triangles)", refs.len()),
                    });
                }
                faces.push((line_no, [refs[0], refs[1], refs[2]]));
                // relative indices resolve against the vertices seen so far
                let last = faces.last_mut().unwrap();
                for r in &mut last.1 {
                    if *r < 0 {
                        *r += vertices.len() as i64 + 1;
                    }
                }
            }
            Some("vn" | "vt" | "vp" | "o" | "g" | "s" | "usemtl" | "mtllib") => continue,
            Some(other) => {
                return Err(Error::UnsupportedElement {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("record `{other}`"),
                })
            }
        }
    }

    if vertices.is_empty() || faces.is_empty() {
        return Err(parse_err(
            text.lines().count().max(1),
            "file contains no vertices or no faces".to_string(),
        ));
    }

    let k = vertices.len() as i64;
    let mut triangles = Vec::with_capacity(faces.len());
    for (line_no, refs) in faces {
        let mut tri = [0usize; 3];
        for (slot, &r) in tri.iter_mut().zip(&refs) {
            if r < 1 || r > k {
                return Err(parse_err(
                    line_no,
                    format!("vertex index {r} out of range 1..={k}"),
                ));
            }
            *slot = (r - 1) as usize;
        }
        triangles.push(tri);
    }
    SurfaceMesh::new(vertices, triangles).map_err(|e| match e {
        Error::InvalidMesh(msg) => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: msg,
        },
        other => other,
    })
}
