//! Plain-text geometry files.
//!
//! ```text
//! igaplate-geometry v1
//! patch
//! degrees 1 1
//! knots_u 0 0 1 1
//! knots_v 0 0 1 1
//! points
//! 0 0 0 1
//! 1 0 0 1
//! 0 1 0 1
//! 1 1 0 1
//! end
//! ```
//!
//! Control points are listed `x y z w`, η outer. Blank lines and lines
//! starting with `#` are ignored. Numbers are written in the shortest form
//! that reads back to the same `f64`, so a write/read round trip is exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::spline::{ControlNet, KnotVector, SplineError, SurfacePatch};

use super::catalog::Geometry;
use super::BenchError;

pub const HEADER: &str = "igaplate-geometry v1";

/// Canonical text of a geometry.
pub fn geometry_to_string(patches: &[SurfacePatch]) -> String {
    let mut s = String::new();
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    writeln!(s, "{HEADER}").unwrap();
    for p in patches {
        let (pu, pv) = p.degrees();
        writeln!(s, "patch").unwrap();
        writeln!(s, "degrees {pu} {pv}").unwrap();
        writeln!(s, "knots_u {}", join(p.knots_u().values())).unwrap();
        writeln!(s, "knots_v {}", join(p.knots_v().values())).unwrap();
        writeln!(s, "points").unwrap();
        let net = p.net();
        for j in 0..net.m {
            for i in 0..net.n {
                let k = i * net.m + j;
                let [x, y, z] = net.points[k];
                writeln!(s, "{} {} {} {}", x, y, z, net.weights[k]).unwrap();
            }
        }
        writeln!(s, "end").unwrap();
    }
    s
}

pub fn write_geometry_file(patches: &[SurfacePatch], path: &Path) -> Result<(), BenchError> {
    std::fs::write(path, geometry_to_string(patches)).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))
}

pub fn read_geometry_file(path: &Path) -> Result<Geometry, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
    let patches = parse_geometry(&text)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "geometry".to_string());
    Ok(Geometry { name, patches })
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
}

fn tokenize(text: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim_start().starts_with('#') {
            continue;
        }
        let mut tokens = Vec::new();
        let mut start = None;
        for (c, ch) in raw.char_indices().chain(std::iter::once((raw.len(), ' '))) {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(c),
                (true, Some(s)) => {
                    tokens.push(Token {
                        text: &raw[s..c],
                        column: raw[..s].chars().count() + 1,
                    });
                    start = None;
                }
                _ => {}
            }
        }
        if !tokens.is_empty() {
            out.push(Line { number: i + 1, tokens });
        }
    }
    out
}

fn err(line: usize, column: usize, message: impl Into<String>) -> BenchError {
    BenchError::Parse {
        line,
        column,
        message: message.into(),
    }
}

struct Cursor<'a> {
    lines: Vec<Line<'a>>,
    pos: usize,
    last_line: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self, what: &str) -> Result<&Line<'a>, BenchError> {
        let l = self
            .lines
            .get(self.pos)
            .ok_or_else(|| err(self.last_line + 1, 1, format!("unexpected end of file, expected {what}")))?;
        self.pos += 1;
        Ok(l)
    }

    fn keyword(&mut self, key: &str) -> Result<&Line<'a>, BenchError> {
        let l = self.next(&format!("'{key}'"))?;
        if l.tokens[0].text != key {
            return Err(err(l.number, l.tokens[0].column, format!("expected '{key}', found '{}'", l.tokens[0].text)));
        }
        Ok(l)
    }
}

fn number<T: std::str::FromStr>(line: usize, tok: &Token<'_>) -> Result<T, BenchError> {
    tok.text
        .parse()
        .map_err(|_| err(line, tok.column, format!("'{}' is not a valid number", tok.text)))
}

fn knots(line: &Line<'_>, degree: usize) -> Result<KnotVector, BenchError> {
    let values = line.tokens[1..]
        .iter()
        .map(|t| number::<f64>(line.number, t))
        .collect::<Result<Vec<_>, _>>()?;
    KnotVector::new(values, degree).map_err(|e| match e {
        SplineError::DecreasingKnots { index, value } => err(
            line.number,
            line.tokens[index + 1].column,
            format!("knot {index} ({value}) is smaller than its predecessor"),
        ),
        other => err(line.number, line.tokens[0].column, other.to_string()),
    })
}

/// Parses the text format.
pub fn parse_geometry(text: &str) -> Result<Vec<SurfacePatch>, BenchError> {
    let lines = tokenize(text);
    let last_line = lines.last().map_or(0, |l| l.number);
    let mut cur = Cursor { lines, pos: 0, last_line };
    let head = cur.next("header")?;
    let joined: Vec<&str> = head.tokens.iter().map(|t| t.text).collect();
    if joined.join(" ") != HEADER {
        return Err(err(head.number, 1, format!("expected header '{HEADER}'")));
    }
    let mut patches = Vec::new();
    while cur.pos < cur.lines.len() {
        let start = cur.keyword("patch")?.number;
        let l = cur.keyword("degrees")?;
        if l.tokens.len() != 3 {
            return Err(err(l.number, l.tokens[0].column, "expected two degrees"));
        }
        let p: usize = number(l.number, &l.tokens[1])?;
        let q: usize = number(l.number, &l.tokens[2])?;
        let ku = knots(cur.keyword("knots_u")?, p)?;
        let kv = knots(cur.keyword("knots_v")?, q)?;
        cur.keyword("points")?;
        let (n, m) = (ku.num_basis(), kv.num_basis());
        let mut pts = vec![[0.0; 3]; n * m];
        let mut weights = vec![0.0; n * m];
        for j in 0..m {
            for i in 0..n {
                let l = cur.next("control point")?;
                if l.tokens.len() != 4 {
                    return Err(err(
                        l.number,
                        l.tokens[0].column,
                        format!("expected 'x y z w' ({} of {} points read)", j * n + i, n * m),
                    ));
                }
                let v: Vec<f64> = l.tokens.iter().map(|t| number(l.number, t)).collect::<Result<_, _>>()?;
                pts[i * m + j] = [v[0], v[1], v[2]];
                weights[i * m + j] = v[3];
            }
        }
        cur.keyword("end")?;
        let net = ControlNet::new(n, m, pts, weights)
            .map_err(|e| BenchError::InvalidGeometry(format!("patch at line {start}: {e}")))?;
        let patch = SurfacePatch::new(ku, kv, net)
            .map_err(|e| BenchError::InvalidGeometry(format!("patch at line {start}: {e}")))?;
        patches.push(patch);
    }
    if patches.is_empty() {
        return Err(BenchError::InvalidGeometry("file contains no patches".to_string()));
    }
    Ok(patches)
}
