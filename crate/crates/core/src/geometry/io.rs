//! ASCII mesh and point I/O: OBJ (v/f lines, 1-based indices), OFF, and
//! bare XYZ point lists. Writers emit coordinates at 9 significant digits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::mesh::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Off,
}

impl MeshFormat {
    /// Infer from the file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("obj") => Ok(Self::Obj),
            Some("off") => Ok(Self::Off),
            other => Err(Error::InvalidSpec(format!(
                "cannot infer mesh format from extension {:?} of {}",
                other,
                path.display()
            ))),
        }
    }
}

pub fn load_mesh<T: Real>(path: &Path, format: MeshFormat) -> Result<TriMesh<T>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    match format {
        MeshFormat::Obj => parse_obj(reader, path),
        MeshFormat::Off => parse_off(reader, path),
    }
}

pub fn save_mesh<T: Real>(path: &Path, mesh: &TriMesh<T>, format: MeshFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let res = match format {
        MeshFormat::Obj => write_obj(&mut w, mesh),
        MeshFormat::Off => write_off(&mut w, mesh),
    };
    res.and_then(|_| w.flush())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Plain `x y z` lines.
pub fn save_xyz<T: Real>(path: &Path, points: &[Point3<T>]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let res = (|| {
        for p in points {
            writeln!(
                w,
                "{:.8e} {:.8e} {:.8e}",
                p.x.as_f64(),
                p.y.as_f64(),
                p.z.as_f64()
            )?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_xyz<T: Real>(path: &Path) -> Result<Vec<Point3<T>>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut points = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut coords = [0.0f64; 3];
        for c in &mut coords {
            let tok = it
                .next()
                .ok_or_else(|| Error::parse(path.display().to_string(), ln + 1, "expected 3 coordinates"))?;
            *c = tok.parse::<f64>().map_err(|_| {
                Error::parse(path.display().to_string(), ln + 1, format!("bad number {tok:?}"))
            })?;
        }
        points.push(Point3::new(
            T::of(coords[0]),
            T::of(coords[1]),
            T::of(coords[2]),
        ));
    }
    Ok(points)
}

fn parse_obj<T: Real, R: BufRead>(reader: R, path: &Path) -> Result<TriMesh<T>> {
    let pstr = path.display().to_string();
    let mut vertices: Vec<Point3<T>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    for (ln, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(pstr.clone(), e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut c = [0.0f64; 3];
                for v in &mut c {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| Error::parse(&pstr, ln + 1, "vertex needs 3 coordinates"))?;
                    *v = tok
                        .parse()
                        .map_err(|_| Error::parse(&pstr, ln + 1, format!("bad number {tok:?}")))?;
                }
                vertices.push(Point3::new(
                    T::of(c[0]),
                    T::of(c[1]),
                    T::of(c[2]),
                ));
            }
            Some("f") => {
                let mut idx: Vec<u32> = Vec::with_capacity(4);
                for tok in tokens {
                    let first = tok.split('/').next().unwrap_or("");
                    let raw: i64 = first
                        .parse()
                        .map_err(|_| Error::parse(&pstr, ln + 1, format!("bad index {tok:?}")))?;
                    let resolved = if raw > 0 {
                        raw - 1
                    } else if raw < 0 {
                        vertices.len() as i64 + raw
                    } else {
                        return Err(Error::parse(&pstr, ln + 1, "OBJ indices are 1-based"));
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(Error::parse(
                            &pstr,
                            ln + 1,
                            format!("vertex index {raw} out of range"),
                        ));
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(Error::parse(&pstr, ln + 1, "face needs at least 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            // Normals, texture coords, groups, materials: ignored.
            _ => {}
        }
    }
    TriMesh::new(vertices, triangles)
}

fn parse_off<T: Real, R: BufRead>(reader: R, path: &Path) -> Result<TriMesh<T>> {
    let pstr = path.display().to_string();
    let mut lines = reader.lines().enumerate();

    let mut content = Vec::new(); // (line number, significant line)
    for (ln, line) in &mut lines {
        let line = line.map_err(|e| Error::io(pstr.clone(), e))?;
        let line = line.trim().to_string();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        content.push((ln + 1, line));
    }

    let mut cursor = content.into_iter();
    let (ln0, header) = cursor
        .next()
        .ok_or_else(|| Error::parse(&pstr, 1, "empty OFF file"))?;
    let counts_tokens: Vec<String> = match header.strip_prefix("OFF") {
        // Counts may share the header line.
        Some(rest) => rest.split_whitespace().map(String::from).collect(),
        None => return Err(Error::parse(&pstr, ln0, "missing OFF header")),
    };
    let (ln_counts, counts_line) = if counts_tokens.is_empty() {
        let (ln, l) = cursor
            .next()
            .ok_or_else(|| Error::parse(&pstr, ln0, "missing OFF counts"))?;
        (ln, l.split_whitespace().map(String::from).collect::<Vec<_>>())
    } else {
        (ln0, counts_tokens)
    };
    if counts_line.len() < 2 {
        return Err(Error::parse(&pstr, ln_counts, "OFF counts need V and F"));
    }
    let nv: usize = counts_line[0]
        .parse()
        .map_err(|_| Error::parse(&pstr, ln_counts, "bad vertex count"))?;
    let nf: usize = counts_line[1]
        .parse()
        .map_err(|_| Error::parse(&pstr, ln_counts, "bad face count"))?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, line) = cursor
            .next()
            .ok_or_else(|| Error::parse(&pstr, ln_counts, "truncated vertex list"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(Error::parse(&pstr, ln, "vertex needs 3 coordinates"));
        }
        let mut c = [0.0f64; 3];
        for (v, tok) in c.iter_mut().zip(&toks) {
            *v = tok
                .parse()
                .map_err(|_| Error::parse(&pstr, ln, format!("bad number {tok:?}")))?;
        }
        vertices.push(Point3::new(
            T::of(c[0]),
            T::of(c[1]),
            T::of(c[2]),
        ));
    }

    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, line) = cursor
            .next()
            .ok_or_else(|| Error::parse(&pstr, ln_counts, "truncated face list"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let k: usize = toks[0]
            .parse()
            .map_err(|_| Error::parse(&pstr, ln, "bad face arity"))?;
        if k < 3 || toks.len() < k + 1 {
            return Err(Error::parse(&pstr, ln, "face needs at least 3 indices"));
        }
        let mut idx = Vec::with_capacity(k);
        for tok in &toks[1..=k] {
            let i: usize = tok
                .parse()
                .map_err(|_| Error::parse(&pstr, ln, format!("bad index {tok:?}")))?;
            if i >= vertices.len() {
                return Err(Error::parse(&pstr, ln, format!("vertex index {i} out of range")));
            }
            idx.push(i as u32);
        }
        for j in 1..k - 1 {
            triangles.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    TriMesh::new(vertices, triangles)
}

fn write_obj<T: Real, W: Write>(w: &mut W, mesh: &TriMesh<T>) -> std::io::Result<()> {
    for p in mesh.vertices() {
        writeln!(
            w,
            "v {:.8e} {:.8e} {:.8e}",
            p.x.as_f64(),
            p.y.as_f64(),
            p.z.as_f64()
        )?;
    }
    for t in mesh.triangles() {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

fn write_off<T: Real, W: Write>(w: &mut W, mesh: &TriMesh<T>) -> std::io::Result<()> {
    writeln!(w, "OFF")?;
    writeln!(w, "{} {} 0", mesh.vertex_count(), mesh.triangle_count())?;
    for p in mesh.vertices() {
        writeln!(
            w,
            "{:.8e} {:.8e} {:.8e}",
            p.x.as_f64(),
            p.y.as_f64(),
            p.z.as_f64()
        )?;
    }
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fixtures::unit_box;
    use approx::assert_relative_eq;
    use std::io::Cursor;

    #[test]
    fn obj_roundtrip_preserves_geometry() {
        let m = unit_box();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.obj");
        save_mesh(&path, &m, MeshFormat::Obj).unwrap();
        let back: TriMesh<f64> = load_mesh(&path, MeshFormat::Obj).unwrap();
        assert_eq!(back.vertex_count(), 8);
        assert_eq!(back.triangle_count(), 12);
        assert!(back.is_watertight());
        for (a, b) in m.vertices().iter().zip(back.vertices()) {
            assert_relative_eq!(a, b, epsilon = 1e-8);
        }
        assert_eq!(m.triangles(), back.triangles());
    }

    #[test]
    fn off_roundtrip_preserves_geometry() {
        let m = unit_box();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.off");
        save_mesh(&path, &m, MeshFormat::Off).unwrap();
        let back: TriMesh<f64> = load_mesh(&path, MeshFormat::Off).unwrap();
        assert_eq!(back.vertex_count(), 8);
        assert_eq!(back.triangle_count(), 12);
        assert!(back.is_watertight());
    }

    #[test]
    fn single_triangle_off_is_open() {
        let src = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        let m: TriMesh<f64> = parse_off(Cursor::new(src), Path::new("t.off")).unwrap();
        assert!(!m.is_watertight());
    }

    #[test]
    fn obj_with_out_of_range_index_fails() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n";
        let r: Result<TriMesh<f64>> = parse_obj(Cursor::new(src), Path::new("bad.obj"));
        assert!(matches!(r, Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn obj_accepts_slash_indices_and_quads() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n";
        let m: TriMesh<f64> = parse_obj(Cursor::new(src), Path::new("quad.obj")).unwrap();
        assert_eq!(m.triangle_count(), 2);
    }

    #[test]
    fn xyz_roundtrip() {
        let pts = vec![
            Point3::new(0.123456789, -1.0, 2.5e-3),
            Point3::new(1.0, 2.0, 3.0),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.xyz");
        save_xyz(&path, &pts).unwrap();
        let back: Vec<Point3<f64>> = load_xyz(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in pts.iter().zip(&back) {
            assert_relative_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn nine_significant_digits_written() {
        let pts = vec![Point3::new(0.123456789123, 0.0, 0.0)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.xyz");
        save_xyz(&path, &pts).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("1.23456789e-1"), "got {text:?}");
    }
}
