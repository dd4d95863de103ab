use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};

use super::{read_text, write_atomic};

pub const RED: [u8; 3] = [255, 0, 0];
pub const GRAY: [u8; 3] = [128, 128, 128];

pub fn load_ply(path: &Path) -> Result<PointCloud> {
    parse_ply(&read_text(path)?, path)
}

struct Element {
    name: String,
    count: usize,
    properties: Vec<String>,
    line: usize,
}

/// Parses an ASCII PLY and returns the `x y z` of its `vertex` element.
/// Other elements and properties are read past but not kept.
pub fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(err(1, "missing `ply` magic".into())),
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_seen = false;
    let mut header_done = false;
    for (n, line) in lines.by_ref() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => format_seen = true,
            ["format", f, ..] => return Err(Error::UnsupportedFormat(format!("PLY format {f}"))),
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| err(n, format!("bad element count {count:?}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    line: n,
                });
            }
            ["property", "list", _, _, name] | ["property", _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err(n, "property before any element".into()))?;
                el.properties.push(if tok[1] == "list" {
                    format!("list:{name}")
                } else {
                    name.to_string()
                });
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => return Err(err(n, format!("unrecognized header line {line:?}"))),
        }
    }
    if !header_done {
        return Err(err(text.lines().count(), "missing end_header".into()));
    }
    if !format_seen {
        return Err(err(1, "missing format line".into()));
    }
    let mut points = Vec::new();
    for el in &elements {
        let pos = |axis: &str| el.properties.iter().position(|p| p == axis);
        let xyz = if el.name == "vertex" {
            match (pos("x"), pos("y"), pos("z")) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                _ => return Err(err(el.line, "vertex element lacks x, y or z".into())),
            }
        } else {
            None
        };
        let has_list = el.properties.iter().any(|p| p.starts_with("list:"));
        for _ in 0..el.count {
            let (n, line) = lines
                .next()
                .ok_or_else(|| err(text.lines().count(), format!("truncated {} data", el.name)))?;
            let tok: Vec<&str> = line.split_whitespace().collect();
            if !has_list && tok.len() != el.properties.len() {
                return Err(err(
                    n,
                    format!("expected {} values, found {}", el.properties.len(), tok.len()),
                ));
            }
            if let Some([x, y, z]) = xyz {
                let get = |i: usize| -> Result<f64> {
                    let t = tok.get(i).ok_or_else(|| err(n, "missing value".into()))?;
                    t.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| err(n, format!("bad coordinate {t:?}")))
                };
                points.push(Vec3::new(get(x)?, get(y)?, get(z)?));
            }
        }
    }
    if !elements.iter().any(|e| e.name == "vertex") {
        return Err(err(1, "no vertex element".into()));
    }
    PointCloud::new(points)
}

pub fn write_ply(cloud: &PointCloud, colors: Option<&[[u8; 3]]>) -> Result<String> {
    if let Some(c) = colors {
        if c.len() != cloud.len() {
            return Err(Error::LengthMismatch {
                left: cloud.len(),
                right: c.len(),
            });
        }
    }
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    s.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if let Some(c) = colors {
            let _ = write!(s, " {} {} {}", c[i][0], c[i][1], c[i][2]);
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn save_ply(path: &Path, cloud: &PointCloud, colors: Option<&[[u8; 3]]>) -> Result<()> {
    write_atomic(path, write_ply(cloud, colors)?.as_bytes())
}

/// Red for patch members, gray for the rest.
pub fn patch_colors(n: usize, patch_indices: &[usize]) -> Vec<[u8; 3]> {
    let mut c = vec![GRAY; n];
    for &i in patch_indices {
        if i < n {
            c[i] = RED;
        }
    }
    c
}
