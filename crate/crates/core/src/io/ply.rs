//! ASCII PLY reader and writer for colored point clouds.
//!
//! Written files carry `x y z` floats and `red green blue` uchar properties.
//! The reader accepts any ASCII PLY: vertex properties other than the six we
//! understand are parsed and ignored, and non-vertex elements are skipped.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::IoError;
use crate::cloud::ColorPointCloud;
use crate::geom::Point3;

pub fn write_ply(path: &Path, cloud: &ColorPointCloud) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    writeln!(w, "property uchar red")?;
    writeln!(w, "property uchar green")?;
    writeln!(w, "property uchar blue")?;
    writeln!(w, "end_header")?;
    for (p, c) in cloud.points.iter().zip(&cloud.colors) {
        writeln!(w, "{} {} {} {} {} {}", p.x, p.y, p.z, c[0], c[1], c[2])?;
    }
    Ok(())
}

struct ElementDecl {
    name: String,
    count: usize,
    properties: Vec<String>,
}

pub fn read_ply(path: &Path) -> Result<ColorPointCloud, IoError> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let mut next_line = || -> Result<String, IoError> {
        loop {
            match lines.next() {
                Some(l) => {
                    let l = l?;
                    if !l.trim_start().starts_with("comment") {
                        return Ok(l);
                    }
                }
                None => return Err(IoError::format(path, "unexpected end of file")),
            }
        }
    };

    if next_line()?.trim() != "ply" {
        return Err(IoError::format(path, "missing ply magic"));
    }
    if next_line()?.trim() != "format ascii 1.0" {
        return Err(IoError::format(path, "only `format ascii 1.0` is supported"));
    }

    let mut elements: Vec<ElementDecl> = Vec::new();
    loop {
        let line = next_line()?;
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("element") => {
                let name = parts
                    .next()
                    .ok_or_else(|| IoError::format(path, "element without a name"))?
                    .to_string();
                let count: usize = parts
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| IoError::format(path, "element without a count"))?;
                elements.push(ElementDecl {
                    name,
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let decl = elements
                    .last_mut()
                    .ok_or_else(|| IoError::format(path, "property before any element"))?;
                // For `property <type> <name>` keep the name; property lists
                // only occur on non-vertex elements we skip line-wise anyway.
                let rest: Vec<&str> = parts.collect();
                let name = rest
                    .last()
                    .ok_or_else(|| IoError::format(path, "property without a name"))?;
                decl.properties.push((*name).to_string());
            }
            _ => {} // obj_info and friends
        }
    }

    let mut cloud = ColorPointCloud::new();
    for decl in &elements {
        if decl.name != "vertex" {
            // Skip this element's data lines wholesale.
            for _ in 0..decl.count {
                next_line()?;
            }
            continue;
        }
        let pos = |n: &str| decl.properties.iter().position(|p| p == n);
        let (xi, yi, zi) = match (pos("x"), pos("y"), pos("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(IoError::format(path, "vertex element lacks x/y/z")),
        };
        let color_idx = match (pos("red"), pos("green"), pos("blue")) {
            (Some(r), Some(g), Some(b)) => Some((r, g, b)),
            _ => None,
        };
        for _ in 0..decl.count {
            let line = next_line()?;
            let fields: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| IoError::format(path, format!("bad vertex line: {e}")))?;
            if fields.len() < decl.properties.len() {
                return Err(IoError::format(path, "vertex line has too few fields"));
            }
            let p = Point3::new(fields[xi], fields[yi], fields[zi]);
            let c = match color_idx {
                Some((r, g, b)) => [
                    fields[r].clamp(0.0, 255.0) as u8,
                    fields[g].clamp(0.0, 255.0) as u8,
                    fields[b].clamp(0.0, 255.0) as u8,
                ],
                None => [255, 255, 255],
            };
            cloud.push(p, c);
        }
    }
    Ok(cloud)
}
