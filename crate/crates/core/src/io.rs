//! Plain-text persistence for problem instances.
//!
//! ```text
//! lqteam-instance v1
//! obs_dims 1 1
//! n 16
//! Q 2 2
//! <2 rows>
//! W 4 4
//! <4 rows>
//! R 16 4
//! <16 rows>
//! ```
//!
//! Numbers are written with 17 significant digits so a round trip is exact.
//! `S`, `H` and `Z` are rebuilt from `W` and `R` on load.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::stiefel::OrthonormalMatrix;
use crate::team::{ProblemInstance, TeamSpec};

const HEADER: &str = "lqteam-instance v1";

fn write_matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    writeln!(out, "{name} {} {}", m.nrows(), m.ncols()).unwrap();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", cells.join(" ")).unwrap();
    }
}

pub fn instance_to_text(instance: &ProblemInstance) -> String {
    let spec = instance.spec();
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();
    let dims: Vec<String> = spec.obs_dims().iter().map(usize::to_string).collect();
    writeln!(out, "obs_dims {}", dims.join(" ")).unwrap();
    writeln!(out, "n {}", instance.n()).unwrap();
    write_matrix(&mut out, "Q", spec.q());
    write_matrix(&mut out, "W", spec.w());
    write_matrix(&mut out, "R", instance.frame().matrix());
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Ok((i + 1, t));
            }
        }
        Err(Error::Parse { line: self.last + 1, message: format!("unexpected end of file, expected {what}") })
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn keyword<'a>(line: usize, text: &'a str, key: &str) -> Result<Vec<&'a str>> {
    let mut toks = text.split_whitespace();
    if toks.next() != Some(key) {
        return Err(parse_err(line, format!("expected `{key}`, found `{text}`")));
    }
    Ok(toks.collect())
}

fn parse_usize(line: usize, tok: &str) -> Result<usize> {
    tok.parse().map_err(|_| parse_err(line, format!("expected a nonnegative integer, found `{tok}`")))
}

fn read_matrix(lines: &mut Lines<'_>, name: &str, shape: Option<(usize, usize)>) -> Result<DMatrix<f64>> {
    let (ln, head) = lines.next(name)?;
    let toks = keyword(ln, head, name)?;
    let [r, c] = toks.as_slice() else {
        return Err(parse_err(ln, format!("`{name}` header needs a row and a column count")));
    };
    let (rows, cols) = (parse_usize(ln, r)?, parse_usize(ln, c)?);
    if let Some((er, ec)) = shape {
        if (rows, cols) != (er, ec) {
            return Err(parse_err(ln, format!("{name} is declared {rows}×{cols}, expected {er}×{ec}")));
        }
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (ln, row) = lines.next(&format!("a row of {name}"))?;
        let vals: Vec<f64> = row
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(ln, format!("bad number `{t}`"))))
            .collect::<Result<_>>()?;
        if vals.len() != cols {
            return Err(parse_err(ln, format!("row of {name} has {} entries, expected {cols}", vals.len())));
        }
        data.extend(vals);
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn instance_from_text(text: &str) -> Result<ProblemInstance> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };
    let (ln, head) = lines.next("header")?;
    if head != HEADER {
        return Err(parse_err(ln, format!("expected header `{HEADER}`")));
    }
    let (ln, dims_line) = lines.next("obs_dims")?;
    let obs_dims: Vec<usize> = keyword(ln, dims_line, "obs_dims")?.iter().map(|t| parse_usize(ln, t)).collect::<Result<_>>()?;
    if obs_dims.is_empty() {
        return Err(parse_err(ln, "obs_dims is empty"));
    }
    let (ln, n_line) = lines.next("n")?;
    let n = match keyword(ln, n_line, "n")?.as_slice() {
        [v] => parse_usize(ln, v)?,
        _ => return Err(parse_err(ln, "`n` takes one value")),
    };
    let m = obs_dims.len();
    let ell = m + obs_dims.iter().sum::<usize>();
    let q = read_matrix(&mut lines, "Q", Some((m, m)))?;
    let w = read_matrix(&mut lines, "W", Some((ell, ell)))?;
    let r_start = lines.last + 1;
    let r = read_matrix(&mut lines, "R", Some((n, ell)))?;
    let spec = TeamSpec::new(obs_dims, q, w)?;
    let frame = OrthonormalMatrix::new(r).map_err(|e| parse_err(r_start, e.to_string()))?;
    ProblemInstance::build(&spec, n, frame)
}

pub fn save_instance(instance: &ProblemInstance, path: &Path) -> Result<()> {
    std::fs::write(path, instance_to_text(instance))?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<ProblemInstance> {
    instance_from_text(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn instance() -> ProblemInstance {
        let spec = TeamSpec::from_rows(
            vec![1, 1],
            &[vec![2.0, 1.0], vec![1.0, 2.0]],
            &[vec![1.0, 0.5, 0.2, 0.0], vec![0.3, 1.0, 0.0, 0.4], vec![1.0, 0.2, 0.6, 0.3], vec![0.1, 1.0, 0.4, 0.5]],
        )
        .unwrap();
        ProblemInstance::sample(&spec, 7, &mut stream(4)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let a = instance();
        let b = instance_from_text(&instance_to_text(&a)).unwrap();
        assert_eq!(a.frame(), b.frame());
        assert_eq!(a.z(), b.z());
        assert_eq!(a.spec().q(), b.spec().q());
        assert_eq!(instance_to_text(&a), instance_to_text(&b));
    }

    #[test]
    fn wrong_dimension_header_reports_line() {
        let text = instance_to_text(&instance()).replace("W 4 4", "W 4 5");
        match instance_from_text(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_row_is_rejected() {
        let text = instance_to_text(&instance());
        let mut lines: Vec<&str> = text.lines().collect();
        lines[4] = "1.0";
        assert!(matches!(instance_from_text(&lines.join("\n")), Err(Error::Parse { line: 5, .. })));
    }
}
