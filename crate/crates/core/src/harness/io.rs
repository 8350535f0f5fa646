//! Text formats: sample files, trace CSVs and factor files.
//!
//! Sample file: a header line `m n nnz`, then one `i j value` line per
//! entry with 1-based indices in lexicographic order. Values carry 17
//! significant digits, so a parse → write cycle reproduces the file exactly.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::cg::{Phase, SolverTrace, Termination};
use crate::manifold::FixedRankMatrix;
use crate::sampling::SamplingSet;
use crate::{Error, Result};

pub const TRACE_HEADER: &str = "iter,cost,grad_norm,rel_residual,beta,alpha,step,backtracks,sigma_max,sigma_min,wall_ns";

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| parse_err(line, format!("bad {what} `{tok}`")))
}

pub fn write_samples<W: Write>(mut w: W, s: &SamplingSet) -> Result<()> {
    writeln!(w, "{} {} {}", s.nrows(), s.ncols(), s.len())?;
    for (i, j, v) in s.entries() {
        writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn read_samples<R: BufRead>(r: R) -> Result<SamplingSet> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (hl, header) = loop {
        match lines.next() {
            Some((n, l)) => {
                let l = l?;
                if !l.trim().is_empty() {
                    break (n, l);
                }
            }
            None => return Err(parse_err(1, "empty sample file")),
        }
    };
    let mut it = header.split_whitespace();
    let m: usize = field(it.next(), hl, "row count")?;
    let n: usize = field(it.next(), hl, "column count")?;
    let nnz: usize = field(it.next(), hl, "entry count")?;
    if it.next().is_some() {
        return Err(parse_err(hl, "header must be `m n nnz`"));
    }
    let mut entries = Vec::with_capacity(nnz);
    for (ln, l) in lines {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let mut it = l.split_whitespace();
        let i: usize = field(it.next(), ln, "row index")?;
        let j: usize = field(it.next(), ln, "column index")?;
        let v: f64 = field(it.next(), ln, "value")?;
        if it.next().is_some() {
            return Err(parse_err(ln, "expected `i j value`"));
        }
        if i == 0 || j == 0 || i > m || j > n {
            return Err(parse_err(ln, format!("index ({i}, {j}) outside 1..={m} × 1..={n}")));
        }
        if !v.is_finite() {
            return Err(parse_err(ln, "value is not finite"));
        }
        entries.push((i - 1, j - 1, v));
    }
    if entries.len() != nnz {
        return Err(parse_err(hl, format!("header announces {nnz} entries, found {}", entries.len())));
    }
    SamplingSet::from_entries(m, n, entries)
}

/// Writes the per-iteration trace. When an ALS phase precedes CG a
/// `# phase=cg` comment marks the switch; the last line is a
/// `# termination=...` comment.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &SolverTrace) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    let mut in_als = false;
    for r in &trace.records {
        match r.phase {
            Phase::Als if !in_als => {
                writeln!(w, "# phase=als")?;
                in_als = true;
            }
            Phase::Cg if in_als => {
                writeln!(w, "# phase=cg")?;
                in_als = false;
            }
            _ => {}
        }
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.iter,
            r.cost,
            r.grad_norm,
            r.rel_residual,
            r.beta,
            r.alpha,
            r.step,
            r.backtracks,
            r.sigma_max,
            r.sigma_min,
            r.wall_ns
        )?;
    }
    writeln!(w, "# termination={}", trace.termination.as_str())?;
    Ok(())
}

/// The parts of a trace CSV needed to recompute ρ.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    /// Relative residuals of the CG phase, in order.
    pub cg_residuals: Vec<f64>,
    pub termination: Option<String>,
}

impl TraceSummary {
    pub fn hit_max_iters(&self) -> bool {
        self.termination.as_deref() == Some(Termination::MaxIters.as_str())
    }
}

pub fn read_trace_csv<R: BufRead>(r: R) -> Result<TraceSummary> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(parse_err(1, "empty trace file")),
    };
    if header.trim() != TRACE_HEADER {
        return Err(parse_err(1, "unexpected trace header"));
    }
    let mut res = Vec::new();
    let mut in_als = false;
    let mut termination = None;
    for (ln, l) in lines {
        let l = l?;
        let l = l.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(c) = l.strip_prefix('#') {
            let c = c.trim();
            match c {
                "phase=als" => in_als = true,
                "phase=cg" => in_als = false,
                _ => {
                    if let Some(t) = c.strip_prefix("termination=") {
                        termination = Some(t.to_string());
                    }
                }
            }
            continue;
        }
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 11 {
            return Err(parse_err(ln, format!("expected 11 columns, found {}", cols.len())));
        }
        let rr: f64 = field(Some(cols[3]), ln, "rel_residual")?;
        if !in_als {
            res.push(rr);
        }
    }
    Ok(TraceSummary { cg_residuals: res, termination })
}

/// Writes `U Σ Vᵀ`: a header `m n k`, the `k` singular values, then the
/// rows of `U` and of `V`, one per line.
pub fn write_factors<W: Write>(mut w: W, x: &FixedRankMatrix) -> Result<()> {
    writeln!(w, "{} {} {}", x.nrows(), x.ncols(), x.rank())?;
    let row = |v: &mut dyn Iterator<Item = f64>| v.map(|a| format!("{a:.16e}")).collect::<Vec<_>>().join(" ");
    writeln!(w, "{}", row(&mut x.sigma().iter().copied()))?;
    for i in 0..x.nrows() {
        writeln!(w, "{}", row(&mut x.u().row(i).iter().copied()))?;
    }
    for i in 0..x.ncols() {
        writeln!(w, "{}", row(&mut x.v().row(i).iter().copied()))?;
    }
    Ok(())
}

pub fn read_factors<R: BufRead>(r: R) -> Result<FixedRankMatrix> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, l)) => Ok((n, l?)),
            None => Err(parse_err(0, format!("unexpected end of file reading {what}"))),
        }
    };
    let (hl, header) = next("header")?;
    let mut it = header.split_whitespace();
    let m: usize = field(it.next(), hl, "row count")?;
    let n: usize = field(it.next(), hl, "column count")?;
    let k: usize = field(it.next(), hl, "rank")?;
    let parse_row = |(ln, l): (usize, String)| -> Result<Vec<f64>> {
        let v: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(ln, format!("bad number `{t}`"))))
            .collect::<Result<_>>()?;
        if v.len() != k {
            return Err(parse_err(ln, format!("expected {k} numbers, found {}", v.len())));
        }
        Ok(v)
    };
    let sigma = DVector::from_vec(parse_row(next("singular values")?)?);
    let mut u = DMatrix::zeros(m, k);
    for i in 0..m {
        u.set_row(i, &DVector::from_vec(parse_row(next("U")?)?).transpose());
    }
    let mut v = DMatrix::zeros(n, k);
    for i in 0..n {
        v.set_row(i, &DVector::from_vec(parse_row(next("V")?)?).transpose());
    }
    FixedRankMatrix::from_svd(u, sigma, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::random_problem;
    use crate::solve;

    #[test]
    fn sample_file_round_trips_bit_exactly() {
        let p = random_problem(15, 12, 2, 3.0, 1).unwrap();
        let mut buf = Vec::new();
        write_samples(&mut buf, p.observed()).unwrap();
        let back = read_samples(buf.as_slice()).unwrap();
        assert_eq!(back.values(), p.observed().values());
        assert!(back.indices().eq(p.observed().indices()));
        let mut again = Vec::new();
        write_samples(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn sample_file_errors_carry_line_numbers() {
        let cases = [
            ("2 2 1\n3 1 1.0\n", 2),
            ("2 2 2\n1 1 1.0\n", 1),
            ("2 2 1\n1 1 abc\n", 2),
            ("2 x 1\n", 1),
            ("2 2 2\n1 1 1.0\n1 1 2.0\n", 0),
        ];
        for (text, line) in cases {
            match read_samples(text.as_bytes()) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                Err(Error::InvalidArgument(_)) if line == 0 => {}
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn trace_csv_round_trip_and_rho_inputs() {
        let p = random_problem(30, 25, 2, 4.0, 2).unwrap();
        let (_, trace) = solve(&p, &Default::default(), p.random_initial_point(1).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &trace).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(TRACE_HEADER));
        let back = read_trace_csv(buf.as_slice()).unwrap();
        let res: Vec<f64> = trace.records.iter().map(|r| r.rel_residual).collect();
        assert_eq!(back.cg_residuals, res);
        assert_eq!(back.termination.as_deref(), Some("residual-tol"));
    }

    #[test]
    fn factor_file_round_trip() {
        let x = FixedRankMatrix::random(7, 5, 2, 3).unwrap();
        let mut buf = Vec::new();
        write_factors(&mut buf, &x).unwrap();
        let y = read_factors(buf.as_slice()).unwrap();
        assert_eq!(x.sigma(), y.sigma());
        assert_eq!(x.u(), y.u());
        assert_eq!(x.v(), y.v());
    }
}
