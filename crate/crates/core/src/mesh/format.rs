use std::fmt::Write as _;

use super::{Mesh, MAX_ENTITIES};
use crate::error::{Error, Result};
use crate::geometry::Point;

pub const MESH_HEADER: &str = "calderon-mesh v1";

/// Serializes `mesh` with coordinates at 17 significant digits, which
/// round-trips every `f64` exactly.
pub fn write_mesh(mesh: &Mesh) -> String {
    let mut s = String::with_capacity(48 * mesh.vertices.len() + 24 * mesh.triangles.len());
    let _ = writeln!(s, "{MESH_HEADER}");
    let _ = writeln!(s, "V {}", mesh.vertices.len());
    for p in &mesh.vertices {
        let _ = writeln!(s, "{:.16e} {:.16e}", p.x, p.y);
    }
    let _ = writeln!(s, "T {}", mesh.triangles.len());
    for t in &mesh.triangles {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "B {}", mesh.boundary_indices.len());
    for b in &mesh.boundary_indices {
        let _ = writeln!(s, "{b}");
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next non-blank line with its one-based line number.
    fn next(&mut self) -> Result<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let line = line.trim();
            if !line.is_empty() {
                return Ok((i + 1, line));
            }
        }
        Err(Error::parse(0, "unexpected end of input"))
    }

    fn section(&mut self, tag: &str) -> Result<usize> {
        let (ln, line) = self.next()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(tag) {
            return Err(Error::parse(ln, format!("expected section '{tag}'")));
        }
        let count = parts
            .next()
            .and_then(|c| c.parse::<usize>().ok())
            .ok_or_else(|| Error::parse(ln, format!("bad count for section '{tag}'")))?;
        if parts.next().is_some() {
            return Err(Error::parse(ln, "trailing tokens after section count"));
        }
        if count > MAX_ENTITIES {
            return Err(Error::SizeLimit(format!("section '{tag}' declares {count} entries")));
        }
        Ok(count)
    }

    fn numbers<T: std::str::FromStr, const N: usize>(&mut self) -> Result<[T; N]>
    where
        T: Copy + Default,
    {
        let (ln, line) = self.next()?;
        let mut out = [T::default(); N];
        let mut parts = line.split_whitespace();
        for slot in out.iter_mut() {
            *slot = parts
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::parse(ln, format!("expected {N} numbers")))?;
        }
        if parts.next().is_some() {
            return Err(Error::parse(ln, format!("expected exactly {N} numbers")));
        }
        Ok(out)
    }
}

/// Parses the text mesh format and validates the result.
pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (ln, header) = lines.next()?;
    if header != MESH_HEADER {
        return Err(Error::parse(ln, format!("expected header '{MESH_HEADER}'")));
    }
    let nv = lines.section("V")?;
    let mut vertices = Vec::with_capacity(nv.min(1 << 16));
    for _ in 0..nv {
        let [x, y] = lines.numbers::<f64, 2>()?;
        vertices.push(Point::new(x, y));
    }
    let nt = lines.section("T")?;
    let mut triangles = Vec::with_capacity(nt.min(1 << 16));
    for _ in 0..nt {
        triangles.push(lines.numbers::<usize, 3>()?);
    }
    let nb = lines.section("B")?;
    let mut boundary = Vec::with_capacity(nb.min(1 << 16));
    for _ in 0..nb {
        boundary.push(lines.numbers::<usize, 1>()?[0]);
    }
    if let Ok((ln, _)) = lines.next() {
        return Err(Error::parse(ln, "trailing content after boundary section"));
    }
    Mesh::new(vertices, triangles, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::rectangle_mesh;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = rectangle_mesh(Point::new(0.0, 0.0), Point::new(1.0, 0.7), 5, 3).unwrap();
        m.vertices[6].x += 1e-17 * 3.0;
        m.vertices[7].y = 0.1 + 0.2;
        let text = write_mesh(&m);
        assert!(text.starts_with("calderon-mesh v1\nV 24\n"));
        let back = parse_mesh(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn malformed_inputs() {
        let cases = [
            "",
            "calderon-mesh v2\n",
            "calderon-mesh v1\nV 1\n0 0\n",
            "calderon-mesh v1\nV x\n",
            "calderon-mesh v1\nV 3\n0 0\n1 0\n0 1 2\nT 1\n0 1 2\nB 3\n0\n1\n2\n",
            "calderon-mesh v1\nV 3\n0 0\n1 0\n0 1\nT 1\n0 1 5\nB 3\n0\n1\n2\n",
            "calderon-mesh v1\nV 99999999999\n",
            "calderon-mesh v1\nV 3\n0 0\n1 0\n0 1\nT 1\n0 1 2\nB 3\n0\n1\n2\nextra\n",
        ];
        for c in cases {
            assert!(parse_mesh(c).is_err(), "accepted: {c:?}");
        }
        let ok = "calderon-mesh v1\nV 3\n0 0\n1 0\n0 1\nT 1\n0 1 2\nB 3\n0\n1\n2\n";
        assert!(parse_mesh(ok).is_ok());
    }
}
