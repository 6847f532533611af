//! Plain-text file formats: matrix CSV, Markov-parameter CSV, state-space
//! bundles and rollout datasets. Parse errors carry 1-based line numbers.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hankel::MarkovParams;
use crate::matcore::DenseMatrix;
use crate::realize::StateSpace;
use crate::sysid::RolloutDataset;

fn fmt_value(out: &mut String, x: f64) {
    let _ = write!(out, "{x:.16e}");
}

fn write_row(out: &mut String, values: impl Iterator<Item = f64>) {
    for (j, x) in values.enumerate() {
        if j > 0 {
            out.push(',');
        }
        fmt_value(out, x);
    }
    out.push('\n');
}

fn write_body(out: &mut String, a: &DenseMatrix) {
    for i in 0..a.rows() {
        write_row(out, (0..a.cols()).map(|j| a.get(i, j)));
    }
}

pub fn matrix_to_csv(a: &DenseMatrix) -> String {
    let mut out = format!("# rows={} cols={}\n", a.rows(), a.cols());
    write_body(&mut out, a);
    out
}

/// Non-blank lines with their 1-based numbers.
struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty()),
        );
        Self {
            inner: it.peekable(),
            last: 0,
        }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let item = self.inner.next();
        if let Some((n, _)) = item {
            self.last = n;
        }
        item
    }

    fn peek(&mut self) -> Option<(usize, &'a str)> {
        self.inner.peek().copied()
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next().ok_or_else(|| {
            Error::parse(
                self.last + 1,
                format!("unexpected end of input, expected {what}"),
            )
        })
    }

    /// Skips free comment lines that are not one of the `reserved` headers.
    fn skip_comments(&mut self, reserved: &[&str]) {
        while let Some((_, l)) = self.peek() {
            let is_header = reserved.iter().any(|r| l.starts_with(r));
            if l.starts_with('#') && !is_header {
                self.next();
            } else {
                break;
            }
        }
    }
}

/// Parses `# key=value key=value` into values for `keys`, in order.
fn parse_header(line_no: usize, line: &str, keys: &[&str]) -> Result<Vec<String>> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::parse(line_no, format!("expected a '# {}=…' header", keys[0])))?;
    let mut found = vec![None; keys.len()];
    for token in body.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| Error::parse(line_no, format!("malformed header field '{token}'")))?;
        if let Some(i) = keys.iter().position(|key| *key == k) {
            found[i] = Some(v.to_string());
        }
    }
    found
        .into_iter()
        .zip(keys)
        .map(|(v, k)| v.ok_or_else(|| Error::parse(line_no, format!("header lacks '{k}'"))))
        .collect()
}

fn parse_count(line_no: usize, key: &str, v: &str) -> Result<usize> {
    match v.parse::<usize>() {
        Ok(x) if x > 0 => Ok(x),
        _ => Err(Error::parse(
            line_no,
            format!("{key} must be a positive integer, got '{v}'"),
        )),
    }
}

fn parse_real(line_no: usize, field: &str) -> Result<f64> {
    let x: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line_no, format!("'{}' is not a number", field.trim())))?;
    if !x.is_finite() {
        return Err(Error::parse(
            line_no,
            format!("non-finite value '{}'", field.trim()),
        ));
    }
    Ok(x)
}

fn parse_row(line_no: usize, line: &str, width: usize) -> Result<Vec<f64>> {
    let row = line
        .split(',')
        .map(|f| parse_real(line_no, f))
        .collect::<Result<Vec<_>>>()?;
    if row.len() != width {
        return Err(Error::parse(
            line_no,
            format!("expected {width} values, found {}", row.len()),
        ));
    }
    Ok(row)
}

fn read_body(lines: &mut Lines<'_>, rows: usize, cols: usize) -> Result<DenseMatrix> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (n, l) = lines.expect("a matrix row")?;
        if l.starts_with('#') {
            return Err(Error::parse(n, format!("expected {rows} matrix rows")));
        }
        data.extend(parse_row(n, l, cols)?);
    }
    DenseMatrix::new(rows, cols, data)
}

fn read_matrix_section(lines: &mut Lines<'_>) -> Result<DenseMatrix> {
    lines.skip_comments(&["# rows="]);
    let (n, l) = lines.expect("a '# rows=… cols=…' header")?;
    let h = parse_header(n, l, &["rows", "cols"])?;
    let rows = parse_count(n, "rows", &h[0])?;
    let cols = parse_count(n, "cols", &h[1])?;
    read_body(lines, rows, cols)
}

fn expect_end(lines: &mut Lines<'_>) -> Result<()> {
    lines.skip_comments(&[]);
    match lines.next() {
        Some((n, _)) => Err(Error::parse(n, "unexpected trailing content")),
        None => Ok(()),
    }
}

pub fn matrix_from_csv(text: &str) -> Result<DenseMatrix> {
    let mut lines = Lines::new(text);
    let a = read_matrix_section(&mut lines)?;
    expect_end(&mut lines)?;
    Ok(a)
}

pub fn markov_to_csv(g: &MarkovParams) -> String {
    let mut out = format!("# p={} m={} T={}\n", g.outputs(), g.inputs(), g.horizon());
    write_body(&mut out, g.matrix());
    out
}

pub fn markov_from_csv(text: &str) -> Result<MarkovParams> {
    let mut lines = Lines::new(text);
    lines.skip_comments(&["# p="]);
    let (n, l) = lines.expect("a '# p=… m=… T=…' header")?;
    let h = parse_header(n, l, &["p", "m", "T"])?;
    let p = parse_count(n, "p", &h[0])?;
    let m = parse_count(n, "m", &h[1])?;
    let t = parse_count(n, "T", &h[2])?;
    let data = read_body(&mut lines, p, m * t)?;
    expect_end(&mut lines)?;
    MarkovParams::new(p, m, data)
}

const SECTIONS: [&str; 4] = ["# A", "# B", "# C", "# D"];

pub fn state_space_to_csv(ss: &StateSpace) -> String {
    let mut out = String::new();
    for (name, mat) in SECTIONS.iter().zip([&ss.a, &ss.b, &ss.c, &ss.d]) {
        out.push_str(name);
        out.push('\n');
        out.push_str(&matrix_to_csv(mat));
    }
    out
}

pub fn state_space_from_csv(text: &str) -> Result<StateSpace> {
    let mut lines = Lines::new(text);
    let mut mats = Vec::with_capacity(4);
    for name in SECTIONS {
        lines.skip_comments(&SECTIONS);
        let (n, l) = lines.expect(&format!("section '{name}'"))?;
        if l != name {
            return Err(Error::parse(
                n,
                format!("expected section '{name}', found '{l}'"),
            ));
        }
        let at = lines.peek().map_or(n + 1, |(k, _)| k);
        let mat = read_matrix_section(&mut lines)?;
        mats.push((at, mat));
    }
    expect_end(&mut lines)?;
    let mut it = mats.into_iter();
    let mut take = || it.next().expect("four sections");
    let (_, a) = take();
    let (_, b) = take();
    let (_, c) = take();
    let (line_d, d) = take();
    StateSpace::new(a, b, c, d).map_err(|e| match e {
        Error::DimensionMismatch(msg) => {
            Error::parse(line_d, format!("inconsistent bundle: {msg}"))
        }
        other => other,
    })
}

pub fn dataset_to_csv(data: &RolloutDataset) -> String {
    let (m, p) = (data.inputs_dim(), data.outputs_dim());
    let mut out = format!("# N={} T={} m={m} p={p}\n", data.rollouts(), data.horizon());
    if data.sigma_u.is_finite() {
        let _ = writeln!(
            out,
            "# sigma_u={} sigma_w={} sigma_v={} seed={}",
            data.sigma_u, data.sigma_w, data.sigma_v, data.seed
        );
    }
    for i in 0..data.rollouts() {
        for t in 0..data.horizon() {
            let _ = write!(out, "{i},{t}");
            for &x in data.input(i, t).iter().chain(data.output(i, t)) {
                out.push(',');
                fmt_value(&mut out, x);
            }
            out.push('\n');
        }
    }
    out
}

pub fn dataset_from_csv(text: &str) -> Result<RolloutDataset> {
    let mut lines = Lines::new(text);
    lines.skip_comments(&["# N="]);
    let (n, l) = lines.expect("a '# N=… T=… m=… p=…' header")?;
    let h = parse_header(n, l, &["N", "T", "m", "p"])?;
    let rollouts = parse_count(n, "N", &h[0])?;
    let horizon = parse_count(n, "T", &h[1])?;
    let m = parse_count(n, "m", &h[2])?;
    let p = parse_count(n, "p", &h[3])?;
    let mut sigmas = None;
    if let Some((k, l)) = lines.peek() {
        if l.starts_with("# sigma_u=") {
            lines.next();
            let s = parse_header(k, l, &["sigma_u", "sigma_w", "sigma_v", "seed"])?;
            let real = |v: &str| parse_real(k, v);
            let seed = s[3]
                .parse::<u64>()
                .map_err(|_| Error::parse(k, format!("bad seed '{}'", s[3])))?;
            sigmas = Some((real(&s[0])?, real(&s[1])?, real(&s[2])?, seed));
        }
    }
    let mut inputs = Vec::with_capacity(rollouts * horizon * m);
    let mut outputs = Vec::with_capacity(rollouts * horizon * p);
    for i in 0..rollouts {
        for t in 0..horizon {
            lines.skip_comments(&[]);
            let (k, l) = lines.expect("a sample row")?;
            let fields: Vec<&str> = l.split(',').collect();
            if fields.len() != 2 + m + p {
                return Err(Error::parse(
                    k,
                    format!("expected {} fields, found {}", 2 + m + p, fields.len()),
                ));
            }
            let index = |f: &str| f.trim().parse::<usize>().ok();
            if index(fields[0]) != Some(i) || index(fields[1]) != Some(t) {
                return Err(Error::parse(k, format!("expected rollout {i}, t {t}")));
            }
            for (j, f) in fields[2..].iter().enumerate() {
                let x = parse_real(k, f)?;
                if j < m {
                    inputs.push(x);
                } else {
                    outputs.push(x);
                }
            }
        }
    }
    expect_end(&mut lines)?;
    let mut data = RolloutDataset::new(rollouts, horizon, m, p, inputs, outputs)?;
    if let Some((su, sw, sv, seed)) = sigmas {
        data.sigma_u = su;
        data.sigma_w = sw;
        data.sigma_v = sv;
        data.seed = seed;
    }
    Ok(data)
}

pub fn read_file(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    Ok(std::fs::write(path, text)?)
}
