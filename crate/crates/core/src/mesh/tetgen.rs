//! TetGen ASCII `.node` / `.ele` reader and writer.

use std::fmt::Write as _;

use super::{check_tet, MeshError, ParseErrorKind, Point, Region, TetMesh};

/// Region attribute value that marks tumour tetrahedra; any other value (or no
/// attribute column) means healthy tissue.
pub const TUMOUR_ATTRIBUTE: f64 = 2.0;
const HEALTHY_ATTRIBUTE: f64 = 1.0;

struct Lines<'a> {
    file: &'static str,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(file: &'static str, text: &'a str) -> Self {
        Self {
            file,
            inner: text.lines().enumerate(),
        }
    }

    /// Next non-empty line with comments stripped, as (1-based line number, fields).
    fn next_fields(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, line) in self.inner.by_ref() {
            let body = line.split('#').next().unwrap_or("");
            let fields: Vec<&str> = body.split_whitespace().collect();
            if !fields.is_empty() {
                return Some((i + 1, fields));
            }
        }
        None
    }

    fn error(&self, line: usize, kind: ParseErrorKind) -> MeshError {
        MeshError::Parse {
            file: self.file,
            line,
            kind,
        }
    }
}

fn number<T: std::str::FromStr>(
    lines: &Lines<'_>,
    line: usize,
    tok: &str,
) -> Result<T, MeshError> {
    tok.parse()
        .map_err(|_| lines.error(line, ParseErrorKind::BadNumber(tok.to_string())))
}

fn need(lines: &Lines<'_>, line: usize, fields: &[&str], expected: usize) -> Result<(), MeshError> {
    if fields.len() < expected {
        return Err(lines.error(
            line,
            ParseErrorKind::TooFewFields {
                expected,
                found: fields.len(),
            },
        ));
    }
    Ok(())
}

/// Parses a TetGen `.node` / `.ele` pair.
///
/// Index base (0 or 1) is taken from the first point id of the `.node` file and
/// applied to both files. If the `.ele` file carries an attribute column, the
/// value [`TUMOUR_ATTRIBUTE`] tags tumour tetrahedra.
pub fn parse_tetgen(node_text: &str, ele_text: &str) -> Result<TetMesh, MeshError> {
    let mut lines = Lines::new("node", node_text);
    let (hline, header) = lines
        .next_fields()
        .ok_or_else(|| lines.error(0, ParseErrorKind::MissingHeader))?;
    need(&lines, hline, &header, 2)?;
    let count: usize = number(&lines, hline, header[0])?;
    let dim: usize = number(&lines, hline, header[1])?;
    if dim != 3 {
        return Err(lines.error(hline, ParseErrorKind::UnsupportedDimension(dim)));
    }

    let mut nodes: Vec<Point> = Vec::with_capacity(count);
    let mut base = 0usize;
    let mut last_line = hline;
    while let Some((line, fields)) = lines.next_fields() {
        last_line = line;
        need(&lines, line, &fields, 4)?;
        let id: usize = number(&lines, line, fields[0])?;
        if nodes.is_empty() {
            base = id.min(1);
        }
        let expected = nodes.len() + base;
        if id != expected {
            return Err(lines.error(line, ParseErrorKind::NonSequentialId { expected, found: id }));
        }
        if nodes.len() == count {
            return Err(lines.error(
                line,
                ParseErrorKind::CountMismatch {
                    declared: count,
                    found: count + 1,
                },
            ));
        }
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = number(&lines, line, fields[a + 1])?;
        }
        nodes.push(p);
    }
    if nodes.len() != count {
        return Err(lines.error(
            last_line,
            ParseErrorKind::CountMismatch {
                declared: count,
                found: nodes.len(),
            },
        ));
    }

    let mut lines = Lines::new("ele", ele_text);
    let (hline, header) = lines
        .next_fields()
        .ok_or_else(|| lines.error(0, ParseErrorKind::MissingHeader))?;
    need(&lines, hline, &header, 1)?;
    let tet_count: usize = number(&lines, hline, header[0])?;
    let per_tet: usize = match header.get(1) {
        Some(tok) => number(&lines, hline, tok)?,
        None => 4,
    };
    if per_tet != 4 && per_tet != 10 {
        return Err(lines.error(hline, ParseErrorKind::UnsupportedNodesPerTet(per_tet)));
    }
    let attributes: usize = match header.get(2) {
        Some(tok) => number(&lines, hline, tok)?,
        None => 0,
    };

    let mut tets = Vec::with_capacity(tet_count);
    let mut regions = Vec::with_capacity(tet_count);
    let mut last_line = hline;
    while let Some((line, fields)) = lines.next_fields() {
        last_line = line;
        need(&lines, line, &fields, 1 + per_tet + attributes)?;
        if tets.len() == tet_count {
            return Err(lines.error(
                line,
                ParseErrorKind::CountMismatch {
                    declared: tet_count,
                    found: tet_count + 1,
                },
            ));
        }
        let mut tet = [0usize; 4];
        for k in 0..4 {
            let raw: usize = number(&lines, line, fields[k + 1])?;
            tet[k] = raw.checked_sub(base).ok_or_else(|| {
                lines.error(
                    line,
                    ParseErrorKind::IndexOutOfRange {
                        index: raw,
                        nodes: nodes.len(),
                    },
                )
            })?;
        }
        if let Err(kind) = check_tet(&nodes, tet) {
            let kind = match kind {
                ParseErrorKind::IndexOutOfRange { index, nodes } => {
                    ParseErrorKind::IndexOutOfRange {
                        index: index + base,
                        nodes,
                    }
                }
                other => other,
            };
            return Err(lines.error(line, kind));
        }
        let region = if attributes > 0 {
            let attr: f64 = number(&lines, line, fields[1 + per_tet])?;
            if attr == TUMOUR_ATTRIBUTE {
                Region::Tumour
            } else {
                Region::Healthy
            }
        } else {
            Region::Healthy
        };
        tets.push(tet);
        regions.push(region);
    }
    if tets.len() != tet_count {
        return Err(lines.error(
            last_line,
            ParseErrorKind::CountMismatch {
                declared: tet_count,
                found: tets.len(),
            },
        ));
    }

    TetMesh::new(nodes, tets, regions)
}

/// Writes the `.node` file (1-based ids, no attributes or markers).
pub fn write_tetgen_node(mesh: &TetMesh) -> String {
    let mut out = String::new();
    writeln!(out, "# generated by meshgnn").unwrap();
    writeln!(out, "{} 3 0 0", mesh.node_count()).unwrap();
    for (i, p) in mesh.nodes().iter().enumerate() {
        // `{:?}` prints the shortest representation that round-trips exactly.
        writeln!(out, "{} {:?} {:?} {:?}", i + 1, p[0], p[1], p[2]).unwrap();
    }
    out
}

/// Writes the `.ele` file (1-based ids, one region attribute column).
pub fn write_tetgen_ele(mesh: &TetMesh) -> String {
    let mut out = String::new();
    writeln!(out, "# generated by meshgnn").unwrap();
    writeln!(out, "{} 4 1", mesh.tet_count()).unwrap();
    for (i, (t, r)) in mesh.tets().iter().zip(mesh.regions()).enumerate() {
        let attr = match r {
            Region::Tumour => TUMOUR_ATTRIBUTE,
            Region::Healthy => HEALTHY_ATTRIBUTE,
        };
        writeln!(
            out,
            "{} {} {} {} {} {}",
            i + 1,
            t[0] + 1,
            t[1] + 1,
            t[2] + 1,
            t[3] + 1,
            attr
        )
        .unwrap();
    }
    out
}
