//! Reader for the subset of the MATPOWER case format the flow model needs.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RawBus {
    pub id: i64,
    /// MATPOWER bus type: 1 PQ, 2 PV, 3 reference, 4 isolated.
    pub kind: u8,
    /// Real power demand in MW.
    pub pd: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawGen {
    pub bus: i64,
    /// Maximum real output in MW.
    pub pmax: f64,
    pub in_service: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawBranch {
    pub from: i64,
    pub to: i64,
    /// Reactance in per unit.
    pub x: f64,
    /// Long-term rating in MVA; 0 means unrated.
    pub rating: f64,
    pub in_service: bool,
    /// Source line number, for error messages.
    pub source_line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawCase {
    pub base_mva: f64,
    pub buses: Vec<RawBus>,
    pub gens: Vec<RawGen>,
    pub branches: Vec<RawBranch>,
}

type Row = (usize, Vec<f64>);

/// Parses `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and `mpc.branch`. Other
/// assignments and extra columns are ignored.
pub fn parse_case(text: &str) -> Result<RawCase> {
    let mut base_mva = None;
    let mut bus = None;
    let mut gen = None;
    let mut branch = None;

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, strip_comment(l)));
    while let Some((no, line)) = lines.next() {
        let Some((lhs, rhs)) = line.split_once('=') else {
            continue;
        };
        let name = lhs.trim();
        let Some(field) = name.strip_prefix("mpc.") else {
            continue;
        };
        let rhs = rhs.trim();
        if let Some(body) = rhs.strip_prefix('[') {
            let rows = read_matrix(no, body, &mut lines)?;
            match field {
                "bus" => bus = Some(rows),
                "gen" => gen = Some(rows),
                "branch" => branch = Some(rows),
                _ => {}
            }
        } else if let Some(body) = rhs.strip_prefix('{') {
            if !body.contains('}') {
                for (_, l) in lines.by_ref() {
                    if l.contains('}') {
                        break;
                    }
                }
            }
        } else if field == "baseMVA" {
            let v = rhs.trim_end_matches(';').trim();
            let v: f64 = v.parse().map_err(|_| Error::Parse {
                line: no,
                message: format!("baseMVA `{v}` is not a number"),
            })?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parse {
                    line: no,
                    message: format!("baseMVA must be positive, got {v}"),
                });
            }
            base_mva = Some(v);
        }
    }

    let missing = |s: &str| Error::Parse {
        line: text.lines().count(),
        message: format!("missing section {s}"),
    };
    let base_mva = base_mva.ok_or_else(|| missing("mpc.baseMVA"))?;
    let bus = bus.ok_or_else(|| missing("mpc.bus"))?;
    let gen = gen.ok_or_else(|| missing("mpc.gen"))?;
    let branch = branch.ok_or_else(|| missing("mpc.branch"))?;

    let buses = bus
        .iter()
        .map(|(no, r)| {
            need(*no, r, 3, "bus")?;
            Ok(RawBus {
                id: int(*no, r[0], "bus id")?,
                kind: int(*no, r[1], "bus type")? as u8,
                pd: r[2],
            })
        })
        .collect::<Result<_>>()?;
    let gens = gen
        .iter()
        .map(|(no, r)| {
            need(*no, r, 9, "gen")?;
            Ok(RawGen {
                bus: int(*no, r[0], "generator bus")?,
                pmax: r[8],
                in_service: r[7] > 0.0,
            })
        })
        .collect::<Result<_>>()?;
    let branches = branch
        .iter()
        .map(|(no, r)| {
            need(*no, r, 11, "branch")?;
            let b = RawBranch {
                from: int(*no, r[0], "from bus")?,
                to: int(*no, r[1], "to bus")?,
                x: r[3],
                rating: r[5],
                in_service: r[10] != 0.0,
                source_line: *no,
            };
            if b.in_service && b.x == 0.0 {
                return Err(Error::Parse {
                    line: *no,
                    message: "branch has zero reactance".into(),
                });
            }
            Ok(b)
        })
        .collect::<Result<_>>()?;
    Ok(RawCase {
        base_mva,
        buses,
        gens,
        branches,
    })
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn read_matrix<'a>(
    start: usize,
    first: &'a str,
    rest: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    let mut chunk = Some((start, first));
    while let Some((no, text)) = chunk.take() {
        let (body, done) = match text.find(']') {
            Some(i) => (&text[..i], true),
            None => (text, false),
        };
        for part in body.split(';') {
            let cells: Vec<&str> = part
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|c| !c.is_empty())
                .collect();
            if cells.is_empty() {
                continue;
            }
            let row = cells
                .iter()
                .map(|c| {
                    c.parse::<f64>().map_err(|_| Error::Parse {
                        line: no,
                        message: format!("`{c}` is not a number"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push((no, row));
        }
        if done {
            return Ok(rows);
        }
        chunk = rest.next();
    }
    Err(Error::Parse {
        line: start,
        message: "matrix is not closed with `]`".into(),
    })
}

fn need(no: usize, row: &[f64], n: usize, what: &str) -> Result<()> {
    if row.len() < n {
        return Err(Error::Parse {
            line: no,
            message: format!("{what} row has {} columns, expected at least {n}", row.len()),
        });
    }
    Ok(())
}

fn int(no: usize, v: f64, what: &str) -> Result<i64> {
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::Parse {
            line: no,
            message: format!("{what} `{v}` is not an integer"),
        });
    }
    Ok(v as i64)
}
