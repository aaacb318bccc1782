//! Plain-text formats for systems and quartic certificates.
//!
//! A system file:
//!
//! ```text
//! # comments run to end of line
//! n 2
//! c 0.0 1.0
//! L
//!   -1.0  0.0
//!    0.0 -1.0
//! Q
//!   0.0 0.5      # Q1, n rows
//!   0.5 0.0
//!  -1.0 0.0      # Q2
//!   0.0 0.0
//! ```
//!
//! A certificate file uses the same layout with sections `Mv` (4 rows),
//! `Md` (4 rows) and `alpha`. Numbers are written with the shortest
//! representation that parses back to the identical `f64`.

use std::fmt::Write as _;

use crate::certificate::QuarticCertificate;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::system::QuadraticSystem;

#[derive(Debug, Clone)]
struct Token {
    text: String,
    line: usize,
    column: usize,
}

#[derive(Debug, Clone)]
struct Section {
    name: Token,
    inline: Vec<Token>,
    rows: Vec<Vec<Token>>,
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn tokenize_line(raw: &str, line: usize) -> Vec<Token> {
    let content = raw.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (idx, ch) in content.char_indices() {
        if ch.is_whitespace() || ch == ',' {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: content[s..idx].to_string(),
                    line,
                    column: s + 1,
                });
            }
        } else if start.is_none() {
            start = Some(idx);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: content[s..].to_string(),
            line,
            column: s + 1,
        });
    }
    out
}

fn is_keyword(tok: &Token) -> bool {
    tok.text
        .chars()
        .next()
        .map(|c| c.is_ascii_alphabetic())
        .unwrap_or(false)
}

fn sections(text: &str) -> Result<Vec<Section>> {
    let mut out: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let mut toks = tokenize_line(raw, idx + 1);
        if toks.is_empty() {
            continue;
        }
        if is_keyword(&toks[0]) {
            let name = toks.remove(0);
            out.push(Section {
                name,
                inline: toks,
                rows: Vec::new(),
            });
        } else {
            match out.last_mut() {
                Some(sec) => sec.rows.push(toks),
                None => {
                    return Err(parse_err(
                        idx + 1,
                        toks[0].column,
                        "data before the first section keyword",
                    ))
                }
            }
        }
    }
    Ok(out)
}

fn number(tok: &Token) -> Result<f64> {
    match tok.text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_err(
            tok.line,
            tok.column,
            format!("'{}' is not a finite number", tok.text),
        )),
    }
}

fn numbers(toks: &[Token]) -> Result<Vec<f64>> {
    toks.iter().map(number).collect()
}

fn find<'a>(secs: &'a [Section], name: &str, eof_line: usize) -> Result<&'a Section> {
    let mut found = secs.iter().filter(|s| s.name.text == name);
    let first = found
        .next()
        .ok_or_else(|| parse_err(eof_line, 1, format!("missing section '{name}'")))?;
    if let Some(dup) = found.next() {
        return Err(parse_err(
            dup.name.line,
            dup.name.column,
            format!("duplicate section '{name}'"),
        ));
    }
    Ok(first)
}

fn check_known(secs: &[Section], known: &[&str]) -> Result<()> {
    for s in secs {
        if !known.contains(&s.name.text.as_str()) {
            return Err(parse_err(
                s.name.line,
                s.name.column,
                format!("unknown section '{}'", s.name.text),
            ));
        }
    }
    Ok(())
}

fn scalar_section(sec: &Section) -> Result<Token> {
    let mut toks: Vec<Token> = sec.inline.clone();
    toks.extend(sec.rows.iter().flatten().cloned());
    match toks.len() {
        1 => Ok(toks.remove(0)),
        0 => Err(parse_err(
            sec.name.line,
            sec.name.column,
            format!("section '{}' needs a value", sec.name.text),
        )),
        _ => Err(parse_err(
            toks[1].line,
            toks[1].column,
            format!("section '{}' takes a single value", sec.name.text),
        )),
    }
}

fn vector_section(sec: &Section, n: usize) -> Result<Vector> {
    let mut toks: Vec<Token> = sec.inline.clone();
    toks.extend(sec.rows.iter().flatten().cloned());
    if toks.len() != n {
        let (line, column) = toks
            .get(n)
            .map(|t| (t.line, t.column))
            .unwrap_or((sec.name.line, sec.name.column));
        return Err(parse_err(
            line,
            column,
            format!("section '{}' expects {n} values, found {}", sec.name.text, toks.len()),
        ));
    }
    Ok(Vector::from_vec(numbers(&toks)?))
}

/// Reads `count` row-major blocks of `rows x cols` each.
fn matrix_blocks(sec: &Section, count: usize, rows: usize, cols: usize) -> Result<Vec<Matrix>> {
    if let Some(t) = sec.inline.first() {
        return Err(parse_err(
            t.line,
            t.column,
            format!("matrix rows of '{}' must start on the next line", sec.name.text),
        ));
    }
    let expected = count * rows;
    if sec.rows.len() != expected {
        return Err(parse_err(
            sec.rows
                .get(expected)
                .map(|r| r[0].line)
                .unwrap_or(sec.name.line),
            1,
            format!(
                "section '{}' expects {expected} rows, found {}",
                sec.name.text,
                sec.rows.len()
            ),
        ));
    }
    let mut out = Vec::with_capacity(count);
    for b in 0..count {
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let row = &sec.rows[b * rows + r];
            if row.len() != cols {
                return Err(parse_err(
                    row[0].line,
                    row.get(cols).map(|t| t.column).unwrap_or(1),
                    format!(
                        "row {} of '{}' has {} values, expected {cols}",
                        b * rows + r + 1,
                        sec.name.text,
                        row.len()
                    ),
                ));
            }
            for (c, v) in numbers(row)?.into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        out.push(m);
    }
    Ok(out)
}

/// Parses and validates a system file.
pub fn parse_system(text: &str) -> Result<QuadraticSystem> {
    let (c, l, q) = parse_system_raw(text)?;
    QuadraticSystem::new(c, l, q)
}

/// Parses a system file without validating the energy-preserving structure,
/// returning raw `(c, L, Q)`. Used to report residuals of invalid inputs.
pub fn parse_system_raw(text: &str) -> Result<(Vector, Matrix, Vec<Matrix>)> {
    let eof = text.lines().count().max(1);
    let secs = sections(text)?;
    check_known(&secs, &["n", "c", "L", "Q"])?;
    let n_tok = scalar_section(find(&secs, "n", eof)?)?;
    let n: usize = n_tok
        .text
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| parse_err(n_tok.line, n_tok.column, "n must be a positive integer"))?;
    let c = vector_section(find(&secs, "c", eof)?, n)?;
    let l = matrix_blocks(find(&secs, "L", eof)?, 1, n, n)?.remove(0);
    let q = matrix_blocks(find(&secs, "Q", eof)?, n, n, n)?;
    Ok((c, l, q))
}

fn write_row(out: &mut String, values: impl Iterator<Item = f64>) {
    let row: Vec<String> = values.map(|v| format!("{v:?}")).collect();
    let _ = writeln!(out, "  {}", row.join(" "));
}

fn write_matrix(out: &mut String, m: &Matrix) {
    for r in 0..m.nrows() {
        write_row(out, m.row(r).iter().cloned());
    }
}

pub fn write_system(sys: &QuadraticSystem) -> String {
    let n = sys.dim();
    let mut out = String::new();
    let _ = writeln!(out, "n {n}");
    let c: Vec<String> = sys.c().iter().map(|v| format!("{v:?}")).collect();
    let _ = writeln!(out, "c {}", c.join(" "));
    out.push_str("L\n");
    write_matrix(&mut out, sys.l());
    out.push_str("Q\n");
    for (i, qi) in sys.q().iter().enumerate() {
        let _ = writeln!(out, "  # Q{}", i + 1);
        write_matrix(&mut out, qi);
    }
    out
}

pub fn parse_certificate(text: &str) -> Result<QuarticCertificate> {
    let eof = text.lines().count().max(1);
    let secs = sections(text)?;
    check_known(&secs, &["Mv", "Md", "alpha"])?;
    let mv = matrix_blocks(find(&secs, "Mv", eof)?, 1, 4, 4)?.remove(0);
    let md = matrix_blocks(find(&secs, "Md", eof)?, 1, 4, 4)?.remove(0);
    let alpha_tok = scalar_section(find(&secs, "alpha", eof)?)?;
    let alpha = number(&alpha_tok)?;
    QuarticCertificate::new(mv, md, alpha)
}

pub fn write_certificate(cert: &QuarticCertificate) -> String {
    let mut out = String::new();
    out.push_str("Mv\n");
    write_matrix(&mut out, &cert.mv);
    out.push_str("Md\n");
    write_matrix(&mut out, &cert.md);
    let _ = writeln!(out, "alpha {:?}", cert.alpha);
    out
}
