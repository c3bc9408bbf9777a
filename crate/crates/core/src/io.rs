//! Text serialization of matrices, datasets and experiment tables.
//!
//! Reals are written with 17 significant digits (`{:.16e}`), which parses
//! back to the identical `f64`. Every format starts with a header line naming
//! the columns; matrix and dataset files follow it with one line of metadata
//! values.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::dictionary::Dictionary;
use crate::dynamics::SnapshotDataset;
use crate::error::{Error, Result};
use crate::experiments::{NmTrial, OneStepTable, Quadratic, SweepResult, TrialStatistics};
use crate::koopman::KoopmanMatrix;
use crate::prior::GeneratorMatrix;

const MATRIX_HEADER: &str = "N_dic,D,p,dt";
const DATASET_HEADER: &str = "dim,M,dt_obs,seed";
const CURVE_HEADER: &str = "step,mean,q25,q75,diverged,median,survivors";
const GRID_HEADER: &str = "mu_assumed,epsilon,error";
const FIT_HEADER: &str = "epsilon,a,b,c";
const ROOT_HEADER: &str = "root";
const ESTIMATE_HEADER: &str = "estimate,error_at_intersection";

pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn join_reals<'a>(values: impl IntoIterator<Item = &'a f64>) -> String {
    values
        .into_iter()
        .map(|&v| fmt_real(v))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Record cursor over a comma-separated document; rows may differ in width.
struct Lines {
    records: std::vec::IntoIter<(usize, Vec<String>)>,
    peeked: Option<(usize, Vec<String>)>,
}

impl Lines {
    fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut records = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            records.push((line, rec.iter().map(str::to_owned).collect()));
        }
        Ok(Self {
            records: records.into_iter(),
            peeked: None,
        })
    }

    fn next_record(&mut self, what: &str) -> Result<(usize, Vec<String>)> {
        self.peeked
            .take()
            .or_else(|| self.records.next())
            .ok_or_else(|| parse_err(0, format!("unexpected end of input, expected {what}")))
    }

    fn expect_header(&mut self, header: &str) -> Result<()> {
        let (n, fields) = self.next_record(header)?;
        if fields.join(",") != header {
            return Err(parse_err(
                n,
                format!("expected header `{header}`, found `{}`", fields.join(",")),
            ));
        }
        Ok(())
    }

    fn reals(&mut self, what: &str, count: Option<usize>) -> Result<(usize, Vec<f64>)> {
        let (n, fields) = self.next_record(what)?;
        let values = fields
            .iter()
            .map(|f| parse_real(n, f))
            .collect::<Result<Vec<_>>>()?;
        if let Some(c) = count {
            if values.len() != c {
                return Err(parse_err(
                    n,
                    format!("{what}: expected {c} values, found {}", values.len()),
                ));
            }
        }
        Ok((n, values))
    }

    fn peek(&mut self) -> Option<&(usize, Vec<String>)> {
        if self.peeked.is_none() {
            self.peeked = self.records.next();
        }
        self.peeked.as_ref()
    }

    fn peek_is(&mut self, header: &str) -> bool {
        matches!(self.peek(), Some((_, f)) if f.join(",") == header)
    }

    fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    fn finish(mut self) -> Result<()> {
        match self.peek() {
            None => Ok(()),
            Some((n, _)) => Err(parse_err(*n, "unexpected trailing content")),
        }
    }
}

fn parse_real(line: usize, text: &str) -> Result<f64> {
    text.parse::<f64>()
        .map_err(|e| parse_err(line, format!("`{text}`: {e}")))
}

fn parse_uint<T: std::str::FromStr>(line: usize, field: &str, text: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    text.trim()
        .parse::<T>()
        .map_err(|e| parse_err(line, format!("{field} `{}`: {e}", text.trim())))
}

fn write_matrix_body(out: &mut String, dict: &Dictionary, dt: f64, m: &DMatrix<f64>) {
    let n = dict.size();
    writeln!(out, "{MATRIX_HEADER}").unwrap();
    writeln!(
        out,
        "{},{},{},{}",
        n,
        dict.dim(),
        dict.max_degree(),
        fmt_real(dt)
    )
    .unwrap();
    for idx in dict.indices() {
        let e: Vec<String> = idx.exponents().iter().map(u32::to_string).collect();
        writeln!(out, "{}", e.join(",")).unwrap();
    }
    for r in 0..n {
        writeln!(out, "{}", join_reals(m.row(r).iter())).unwrap();
    }
}

fn read_matrix_body(lines: &mut Lines) -> Result<(Arc<Dictionary>, f64, DMatrix<f64>)> {
    lines.expect_header(MATRIX_HEADER)?;
    let (n_line, fields) = lines.next_record("matrix metadata")?;
    if fields.len() != 4 {
        return Err(parse_err(n_line, "matrix metadata needs N_dic,D,p,dt"));
    }
    let n: usize = parse_uint(n_line, "N_dic", &fields[0])?;
    let dim: usize = parse_uint(n_line, "D", &fields[1])?;
    let degree: u32 = parse_uint(n_line, "p", &fields[2])?;
    let dt = parse_real(n_line, &fields[3])?;
    let dict = Dictionary::new(dim, degree).map_err(|e| parse_err(n_line, e.to_string()))?;
    if dict.size() != n {
        return Err(parse_err(
            n_line,
            format!(
                "N_dic {n} does not match D={dim}, p={degree} ({})",
                dict.size()
            ),
        ));
    }
    for idx in dict.indices() {
        let (l, fields) = lines.next_record("dictionary exponents")?;
        let e: Vec<u32> = fields
            .iter()
            .map(|f| parse_uint(l, "exponent", f))
            .collect::<Result<_>>()?;
        if e.as_slice() != idx.exponents() {
            return Err(parse_err(
                l,
                format!("dictionary exponents {e:?} out of order, expected {idx}"),
            ));
        }
    }
    let mut values = Vec::with_capacity(n * n);
    for _ in 0..n {
        values.extend(lines.reals("matrix row", Some(n))?.1);
    }
    Ok((Arc::new(dict), dt, DMatrix::from_row_slice(n, n, &values)))
}

pub fn koopman_to_string(k: &KoopmanMatrix) -> String {
    let mut out = String::new();
    write_matrix_body(&mut out, k.dictionary(), k.dt(), k.entries());
    out
}

pub fn parse_koopman(text: &str) -> Result<KoopmanMatrix> {
    let mut lines = Lines::parse(text)?;
    let (dict, dt, m) = read_matrix_body(&mut lines)?;
    lines.finish()?;
    KoopmanMatrix::new(m, dict, dt)
}

/// Same layout as a Koopman file (with `dt = 0`) followed by one row of
/// per-column truncated mass.
pub fn generator_to_string(g: &GeneratorMatrix) -> String {
    let mut out = String::new();
    write_matrix_body(&mut out, g.dictionary(), 0.0, g.entries());
    writeln!(out, "{}", join_reals(g.truncated_mass())).unwrap();
    out
}

pub fn parse_generator(text: &str) -> Result<GeneratorMatrix> {
    let mut lines = Lines::parse(text)?;
    let (dict, _, m) = read_matrix_body(&mut lines)?;
    let n = dict.size();
    let (_, mass) = lines.reals("truncated mass row", Some(n))?;
    lines.finish()?;
    GeneratorMatrix::new(m, dict, mass)
}

pub fn dataset_to_string(ds: &SnapshotDataset) -> String {
    let mut out = String::new();
    writeln!(out, "{DATASET_HEADER}").unwrap();
    writeln!(
        out,
        "{},{},{},{}",
        ds.dim(),
        ds.len(),
        fmt_real(ds.dt_obs()),
        ds.seed()
    )
    .unwrap();
    for i in 0..ds.len() {
        let (x, y) = ds.pair(i);
        writeln!(out, "{}", join_reals(x.iter().chain(&y))).unwrap();
    }
    out
}

pub fn parse_dataset(text: &str) -> Result<SnapshotDataset> {
    let mut lines = Lines::parse(text)?;
    lines.expect_header(DATASET_HEADER)?;
    let (n_line, fields) = lines.next_record("dataset metadata")?;
    if fields.len() != 4 {
        return Err(parse_err(
            n_line,
            "dataset metadata needs dim,M,dt_obs,seed",
        ));
    }
    let dim: usize = parse_uint(n_line, "dim", &fields[0])?;
    let m: usize = parse_uint(n_line, "M", &fields[1])?;
    let dt = parse_real(n_line, &fields[2])?;
    let seed: u64 = parse_uint(n_line, "seed", &fields[3])?;
    let mut x = DMatrix::zeros(dim, m);
    let mut y = DMatrix::zeros(dim, m);
    for j in 0..m {
        let (_, row) = lines.reals("snapshot pair", Some(2 * dim))?;
        for d in 0..dim {
            x[(d, j)] = row[d];
            y[(d, j)] = row[dim + d];
        }
    }
    lines.finish()?;
    SnapshotDataset::new(x, y, dt, seed)
}

/// `diverged` is the number of trials that had diverged by that step.
pub fn statistics_to_csv(s: &TrialStatistics) -> String {
    let mut out = String::new();
    writeln!(out, "{CURVE_HEADER}").unwrap();
    for t in 0..s.mean.len() {
        writeln!(
            out,
            "{t},{},{},{},{},{},{}",
            fmt_real(s.mean[t]),
            fmt_real(s.q25[t]),
            fmt_real(s.q75[t]),
            s.diverged_by(t),
            fmt_real(s.median[t]),
            s.survivors[t]
        )
        .unwrap();
    }
    out
}

pub fn parse_statistics(text: &str) -> Result<TrialStatistics> {
    let mut lines = Lines::parse(text)?;
    lines.expect_header(CURVE_HEADER)?;
    let mut s = TrialStatistics {
        mean: vec![],
        median: vec![],
        q25: vec![],
        q75: vec![],
        survivors: vec![],
        trials: 0,
        diverged_count: 0,
    };
    while !lines.at_end() {
        let (n, f) = lines.next_record("statistics row")?;
        if f.len() != 7 {
            return Err(parse_err(
                n,
                format!("expected 7 columns, found {}", f.len()),
            ));
        }
        let step: usize = parse_uint(n, "step", &f[0])?;
        if step != s.mean.len() {
            return Err(parse_err(n, format!("step {step} out of sequence")));
        }
        let real = |i: usize| parse_real(n, &f[i]);
        s.mean.push(real(1)?);
        s.q25.push(real(2)?);
        s.q75.push(real(3)?);
        let diverged: usize = parse_uint(n, "diverged", &f[4])?;
        s.median.push(real(5)?);
        let survivors: usize = parse_uint(n, "survivors", &f[6])?;
        s.survivors.push(survivors);
        s.trials = survivors + diverged;
        s.diverged_count = diverged;
    }
    if s.mean.is_empty() {
        return Err(parse_err(0, "no statistics rows"));
    }
    Ok(s)
}

/// Sweep grid, one row per `(assumed, ε)` cell.
pub fn sweep_grid_to_csv(r: &SweepResult) -> String {
    let mut out = String::new();
    writeln!(out, "{GRID_HEADER}").unwrap();
    for (j, mu) in r.assumed.iter().enumerate() {
        for (n, eps) in r.epsilons.iter().enumerate() {
            writeln!(
                out,
                "{},{},{}",
                fmt_real(*mu),
                fmt_real(*eps),
                fmt_real(r.errors[(j, n)])
            )
            .unwrap();
        }
    }
    out
}

/// Fits, pairwise roots and the selected estimate as three consecutive tables.
pub fn sweep_report_to_csv(r: &SweepResult) -> String {
    let mut out = String::new();
    writeln!(out, "{FIT_HEADER}").unwrap();
    for (eps, q) in r.epsilons.iter().zip(&r.fits) {
        writeln!(out, "{}", join_reals(&[*eps, q.a, q.b, q.c])).unwrap();
    }
    writeln!(out, "{ROOT_HEADER}").unwrap();
    for root in &r.roots {
        writeln!(out, "{}", fmt_real(*root)).unwrap();
    }
    writeln!(out, "{ESTIMATE_HEADER}").unwrap();
    writeln!(
        out,
        "{}",
        join_reals(&[r.estimate, r.estimate_error_at_intersection])
    )
    .unwrap();
    out
}

/// Rebuilds a [`SweepResult`] from the grid and report files.
pub fn parse_sweep(grid: &str, report: &str) -> Result<SweepResult> {
    let mut lines = Lines::parse(grid)?;
    lines.expect_header(GRID_HEADER)?;
    let mut cells = Vec::new();
    while !lines.at_end() {
        cells.push(lines.reals("grid row", Some(3))?);
    }
    let mut assumed: Vec<f64> = Vec::new();
    let mut epsilons: Vec<f64> = Vec::new();
    for (_, c) in &cells {
        if !assumed.contains(&c[0]) {
            assumed.push(c[0]);
        }
        if !epsilons.contains(&c[1]) {
            epsilons.push(c[1]);
        }
    }
    if cells.len() != assumed.len() * epsilons.len() || cells.is_empty() {
        return Err(parse_err(
            0,
            "sweep grid is not a complete assumed × epsilon table",
        ));
    }
    let mut errors = DMatrix::zeros(assumed.len(), epsilons.len());
    for (i, (n, c)) in cells.iter().enumerate() {
        let (j, k) = (i / epsilons.len(), i % epsilons.len());
        if c[0] != assumed[j] || c[1] != epsilons[k] {
            return Err(parse_err(*n, "sweep grid rows out of order"));
        }
        errors[(j, k)] = c[2];
    }

    let mut lines = Lines::parse(report)?;
    lines.expect_header(FIT_HEADER)?;
    let mut fits = Vec::new();
    while !lines.peek_is(ROOT_HEADER) {
        let (n, v) = lines.reals("fit row", Some(4))?;
        if epsilons.get(fits.len()) != Some(&v[0]) {
            return Err(parse_err(n, "fit epsilon does not match the grid"));
        }
        fits.push(Quadratic {
            a: v[1],
            b: v[2],
            c: v[3],
        });
    }
    lines.expect_header(ROOT_HEADER)?;
    let mut roots = Vec::new();
    while !lines.peek_is(ESTIMATE_HEADER) {
        roots.push(lines.reals("root", Some(1))?.1[0]);
    }
    lines.expect_header(ESTIMATE_HEADER)?;
    let (_, est) = lines.reals("estimate row", Some(2))?;
    lines.finish()?;
    Ok(SweepResult {
        assumed,
        epsilons,
        errors,
        fits,
        roots,
        estimate: est[0],
        estimate_error_at_intersection: est[1],
    })
}

pub fn estimation_table_to_csv(rows: &[NmTrial]) -> String {
    let arity = rows.first().map_or(0, |r| r.theta_true.len());
    let mut header = vec!["trial".to_string()];
    header.extend((1..=arity).map(|i| format!("theta_true_{i}")));
    header.extend((1..=arity).map(|i| format!("theta_hat_{i}")));
    header.extend(["error".to_string(), "seconds".to_string()]);
    let mut out = String::new();
    writeln!(out, "{}", header.join(",")).unwrap();
    for r in rows {
        let values = r
            .theta_true
            .iter()
            .chain(&r.theta_hat)
            .chain([&r.error, &r.seconds]);
        writeln!(out, "{},{}", r.trial, join_reals(values)).unwrap();
    }
    out
}

pub fn parse_estimation_table(text: &str) -> Result<Vec<NmTrial>> {
    let mut lines = Lines::parse(text)?;
    let (n, header) = lines.next_record("estimation header")?;
    let cols = header.len();
    if cols < 5 || (cols - 3) % 2 != 0 || header[0] != "trial" {
        return Err(parse_err(
            n,
            format!("malformed estimation header `{}`", header.join(",")),
        ));
    }
    let arity = (cols - 3) / 2;
    let mut rows = Vec::new();
    while !lines.at_end() {
        let (n, f) = lines.next_record("estimation row")?;
        if f.len() != cols {
            return Err(parse_err(
                n,
                format!("expected {cols} columns, found {}", f.len()),
            ));
        }
        let v = f[1..]
            .iter()
            .map(|x| parse_real(n, x))
            .collect::<Result<Vec<_>>>()?;
        rows.push(NmTrial {
            trial: parse_uint(n, "trial", &f[0])?,
            theta_true: v[..arity].to_vec(),
            theta_hat: v[arity..2 * arity].to_vec(),
            error: v[2 * arity],
            seconds: v[2 * arity + 1],
        });
    }
    Ok(rows)
}

const ONE_STEP_BLOCKS: [&str; 4] = ["x0", "true", "proposed", "conventional"];

/// One row per grid point: `x0_d…, true_d…, proposed_d…, conventional_d…`.
pub fn one_step_to_csv(t: &OneStepTable) -> String {
    let dim = t.x0.nrows();
    let header: Vec<String> = ONE_STEP_BLOCKS
        .iter()
        .flat_map(|b| (1..=dim).map(move |d| format!("{b}_{d}")))
        .collect();
    let mut out = String::new();
    writeln!(out, "{}", header.join(",")).unwrap();
    for j in 0..t.x0.ncols() {
        let row = [&t.x0, &t.truth, &t.proposed, &t.conventional]
            .into_iter()
            .flat_map(|m| m.column(j).iter().copied().collect::<Vec<_>>());
        writeln!(out, "{}", row.map(fmt_real).collect::<Vec<_>>().join(",")).unwrap();
    }
    out
}

pub fn parse_one_step(text: &str) -> Result<OneStepTable> {
    let mut lines = Lines::parse(text)?;
    let (n, header) = lines.next_record("one-step header")?;
    if header.is_empty() || header.len() % 4 != 0 {
        return Err(parse_err(n, "one-step header needs four equal blocks"));
    }
    let dim = header.len() / 4;
    let mut cols = Vec::new();
    while !lines.at_end() {
        cols.push(lines.reals("one-step row", Some(4 * dim))?.1);
    }
    let block = |b: usize| DMatrix::from_fn(dim, cols.len(), |d, j| cols[j][b * dim + d]);
    Ok(OneStepTable {
        x0: block(0),
        truth: block(1),
        proposed: block(2),
        conventional: block(3),
    })
}
