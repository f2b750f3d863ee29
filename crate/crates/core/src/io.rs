//! Text formats for matrix collections and observation tables.
//!
//! SMC: a header line `SMC 1 <p> <L>` followed by `L` blocks of `p` rows of
//! `p` whitespace-separated floats. OBS: a header `OBS <N> <p>` followed by
//! `N` rows of `p` floats separated by commas or whitespace. Lines starting
//! with `#` and blank lines are ignored by both readers. Writers emit 17
//! significant digits so values round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{FglError, Result};
use crate::linalg::MatrixCollection;

fn parse_err(line: usize, msg: impl Into<String>) -> FglError {
    FglError::Parse { line, msg: msg.into() }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_row(line_no: usize, line: &str, expected: usize) -> Result<Vec<f64>> {
    let row = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| parse_err(line_no, format!("bad number {t:?}: {e}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if row.len() != expected {
        return Err(parse_err(line_no, format!("expected {expected} values, found {}", row.len())));
    }
    Ok(row)
}

fn parse_header_usize(line_no: usize, tok: Option<&str>, name: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| parse_err(line_no, format!("missing {name} in header")))?;
    tok.parse()
        .map_err(|_| parse_err(line_no, format!("invalid {name} {tok:?} in header")))
}

pub fn format_smc(x: &MatrixCollection) -> String {
    let p = x.dim();
    let mut out = String::with_capacity(p * p * x.len() * 25 + 32);
    let _ = writeln!(out, "SMC 1 {} {}", p, x.len());
    for (l, m) in x.iter().enumerate() {
        let _ = writeln!(out, "# matrix {}", l + 1);
        for i in 0..p {
            for j in 0..p {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{:.16e}", m[(i, j)]);
            }
            out.push('\n');
        }
    }
    out
}

pub fn parse_smc(text: &str) -> Result<MatrixCollection> {
    let mut lines = content_lines(text);
    let (hn, header) = lines.next().ok_or_else(|| parse_err(1, "empty SMC input"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("SMC") {
        return Err(parse_err(hn, "missing SMC magic"));
    }
    let version = parse_header_usize(hn, toks.next(), "version")?;
    if version != 1 {
        return Err(parse_err(hn, format!("unsupported SMC version {version}")));
    }
    let p = parse_header_usize(hn, toks.next(), "p")?;
    let l = parse_header_usize(hn, toks.next(), "L")?;
    if p == 0 || l == 0 {
        return Err(parse_err(hn, "p and L must be positive"));
    }
    let mut mats = Vec::with_capacity(l);
    for _ in 0..l {
        let mut m = DMatrix::zeros(p, p);
        for i in 0..p {
            let (n, line) = lines
                .next()
                .ok_or_else(|| parse_err(hn, "unexpected end of SMC data"))?;
            let row = parse_row(n, line, p)?;
            for (j, v) in row.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        mats.push(m);
    }
    if let Some((n, _)) = lines.next() {
        return Err(parse_err(n, "trailing data after last matrix"));
    }
    MatrixCollection::new(mats)
}

pub fn read_smc(path: impl AsRef<Path>) -> Result<MatrixCollection> {
    parse_smc(&fs::read_to_string(path)?)
}

pub fn write_smc(path: impl AsRef<Path>, x: &MatrixCollection) -> Result<()> {
    fs::write(path, format_smc(x))?;
    Ok(())
}

pub fn format_obs(obs: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(obs.len() * 25 + 32);
    let _ = writeln!(out, "OBS {} {}", obs.nrows(), obs.ncols());
    for i in 0..obs.nrows() {
        for j in 0..obs.ncols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:.16e}", obs[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub fn parse_obs(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = content_lines(text);
    let (hn, header) = lines.next().ok_or_else(|| parse_err(1, "empty OBS input"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("OBS") {
        return Err(parse_err(hn, "missing OBS magic"));
    }
    let n = parse_header_usize(hn, toks.next(), "N")?;
    let p = parse_header_usize(hn, toks.next(), "p")?;
    let mut m = DMatrix::zeros(n, p);
    for i in 0..n {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(hn, format!("expected {n} rows, found {i}")))?;
        for (j, v) in parse_row(ln, line, p)?.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, "trailing data after last row"));
    }
    Ok(m)
}

pub fn read_obs(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_obs(&fs::read_to_string(path)?)
}

pub fn write_obs(path: impl AsRef<Path>, obs: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_obs(obs))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smc_with_comments() {
        let text = "# covariance\nSMC 1 2 2\n1 0.5\n0.5 2\n# second\n3 0\n0 4\n";
        let x = parse_smc(text).unwrap();
        assert_eq!(x.dim(), 2);
        assert_eq!(x.len(), 2);
        assert_eq!(x[0][(0, 1)], 0.5);
        assert_eq!(x[1][(1, 1)], 4.0);
    }

    #[test]
    fn smc_errors() {
        assert!(parse_smc("").is_err());
        assert!(parse_smc("SMC 2 1 1\n1\n").is_err());
        assert!(parse_smc("SMC 1 2 1\n1 0\n").is_err());
        assert!(parse_smc("SMC 1 2 1\n1 0\n0 x\n").is_err());
        assert!(parse_smc("SMC 1 1 1\n1\n2\n").is_err());
        assert!(matches!(parse_smc("SMC 1 2 1\n1 0 0\n0 1\n"), Err(FglError::Parse { line: 2, .. })));
    }

    #[test]
    fn obs_accepts_commas_and_spaces() {
        let m = parse_obs("OBS 2 3\n1,2,3\n4 5 6\n").unwrap();
        assert_eq!(m[(1, 2)], 6.0);
        assert!(parse_obs("OBS 3 1\n1\n2\n").is_err());
    }

    proptest! {
        #[test]
        fn smc_round_trips_exactly(vals in prop::collection::vec(-1e6f64..1e6, 18)) {
            let x = MatrixCollection::from_fn(3, 2, |l, i, j| vals[l * 9 + i * 3 + j]);
            let back = parse_smc(&format_smc(&x)).unwrap();
            prop_assert_eq!(back, x);
        }

        #[test]
        fn obs_round_trips_exactly(vals in prop::collection::vec(-1e3f64..1e3, 12)) {
            let m = DMatrix::from_row_slice(4, 3, &vals);
            prop_assert_eq!(parse_obs(&format_obs(&m)).unwrap(), m);
        }
    }
}
