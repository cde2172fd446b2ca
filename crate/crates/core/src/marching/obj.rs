use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Writes `v x y z` lines with 9 significant digits and 1-based `f i j k` lines.
pub fn export_obj<W: Write>(mesh: &TriMesh, mut sink: W) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(sink, "v {:.8e} {:.8e} {:.8e}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(sink, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    sink.flush()?;
    Ok(())
}

/// Reads triangle OBJ data. Normals, texture coordinates, groups and
/// material statements are skipped; anything else is an error.
pub fn import_obj<R: BufRead>(source: R) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let err = |message: String| Error::Parse { line: lineno, message };
        let mut tok = line.split_whitespace();
        match tok.next() {
            None => {}
            Some(t) if t.starts_with('#') => {}
            Some("v") => {
                let c: Vec<f64> = tok
                    .map(|s| s.parse::<f64>().map_err(|e| err(format!("bad coordinate {s:?}: {e}"))))
                    .collect::<Result<_>>()?;
                if c.len() != 3 && c.len() != 4 {
                    return Err(err(format!("vertex needs 3 coordinates, got {}", c.len())));
                }
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(err("non-finite coordinate".into()));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = tok
                    .map(|s| {
                        let head = s.split('/').next().unwrap_or("");
                        match head.parse::<usize>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(err(format!("invalid 1-based vertex index {s:?}"))),
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(err(format!("only triangles are supported, got {} indices", idx.len())));
                }
                faces.push((lineno, [idx[0], idx[1], idx[2]]));
            }
            Some("vn" | "vt" | "o" | "g" | "s" | "usemtl" | "mtllib") => {}
            Some(other) => return Err(err(format!("unsupported statement {other:?}"))),
        }
    }
    let n = vertices.len();
    let mut out = Vec::with_capacity(faces.len());
    for (line, f) in faces {
        if f.iter().any(|&i| i >= n) {
            return Err(Error::Parse {
                line,
                message: format!("face index beyond {n} vertices"),
            });
        }
        out.push(f);
    }
    TriMesh::new(vertices, out)
}

pub fn write_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    export_obj(mesh, BufWriter::new(File::create(path)?))
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    import_obj(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_field, AnalyticShape, Grid3D};
    use crate::marching::marching_cubes;

    fn round_trip(mesh: &TriMesh) -> TriMesh {
        let mut buf = Vec::new();
        export_obj(mesh, &mut buf).unwrap();
        import_obj(buf.as_slice()).unwrap()
    }

    #[test]
    fn single_triangle() {
        let m = TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(round_trip(&m), m);
    }

    #[test]
    fn sphere_round_trip_precision() {
        let grid = Grid3D::unit(64).unwrap();
        let m = marching_cubes(&sample_field(&AnalyticShape::sphere(0.5), &grid).unwrap()).unwrap();
        let back = round_trip(&m);
        assert_eq!(back.faces, m.faces);
        let worst = m
            .vertices
            .iter()
            .zip(&back.vertices)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n";
        match import_obj(text.as_bytes()) {
            Err(Error::Parse { line: 4, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match import_obj("v 0 0\n".as_bytes()) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match import_obj("# c\nv 0 0 0\nf 1 2 3\n".as_bytes()) {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
