use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{TriangleMesh, Vec3};

use super::{read_text, write_atomic};

/// Statements that carry no geometry we use.
const IGNORED: &[&str] = &[
    "vn", "vt", "vp", "o", "g", "s", "l", "p", "mtllib", "usemtl", "cstype", "deg", "curv", "surf",
];

pub fn load_obj(path: &Path) -> Result<TriangleMesh> {
    parse_obj(&read_text(path)?, path)
}

/// Parses the `v`/`f` subset of Wavefront OBJ. Polygons are split into a
/// triangle fan around their first vertex. `path` is only used in error
/// messages.
pub fn parse_obj(text: &str, path: &Path) -> Result<TriangleMesh> {
    let err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    // (line, polygon) kept until all vertices are known
    let mut polygons: Vec<(usize, Vec<usize>)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_whitespace();
        let Some(head) = tok.next() else { continue };
        match head {
            "v" => {
                let mut c = [0.0f64; 3];
                for (i, slot) in c.iter_mut().enumerate() {
                    let t = tok
                        .next()
                        .ok_or_else(|| err(line_no, format!("vertex has {i} coordinates, need 3")))?;
                    *slot = t
                        .parse()
                        .map_err(|_| err(line_no, format!("bad coordinate {t:?}")))?;
                    if !slot.is_finite() {
                        return Err(err(line_no, format!("non-finite coordinate {t:?}")));
                    }
                }
                vertices.push(c.into());
            }
            "f" => {
                let mut poly = Vec::new();
                for t in tok {
                    let first = t.split('/').next().unwrap_or("");
                    let idx: i64 = first
                        .parse()
                        .map_err(|_| err(line_no, format!("bad face index {t:?}")))?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(err(line_no, "face index 0 (indices are 1-based)".into()));
                    };
                    if resolved < 0 {
                        return Err(err(line_no, format!("face index {idx} before first vertex")));
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(err(line_no, format!("face has {} vertices, need 3", poly.len())));
                }
                polygons.push((line_no, poly));
            }
            h if IGNORED.contains(&h) => {}
            h => log::debug!("{}:{line_no}: ignoring statement {h:?}", path.display()),
        }
    }
    for (line_no, poly) in polygons {
        if let Some(&bad) = poly.iter().find(|&&i| i >= vertices.len()) {
            return Err(err(
                line_no,
                format!("face index {} exceeds vertex count {}", bad + 1, vertices.len()),
            ));
        }
        for w in 1..poly.len() - 1 {
            faces.push([poly[0], poly[w], poly[w + 1]]);
        }
    }
    let mesh = TriangleMesh::new(vertices, faces)?;
    if mesh.dropped_faces() > 0 {
        log::warn!(
            "{}: dropped {} zero-area faces",
            path.display(),
            mesh.dropped_faces()
        );
    }
    Ok(mesh)
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn save_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    write_atomic(path, write_obj(mesh).as_bytes())
}
