//! File formats.
//!
//! * response: one decimal per line.
//! * predictors, CSV: comma-separated integer codes, one subject per row,
//!   optional header; an empty field or `NA` is missing.
//! * predictors, packed: `b"MOBX"`, `u16` version, `u64` n, `u64` p, p level
//!   bytes, then column-major `u8` codes (255 = missing), little-endian.
//! * levels sidecar: p integers separated by commas or whitespace.
//! * chain: one header line, then `index;weights;means;variances;allocations`
//!   per retained draw; allocations are 1-based.
//! * results: `j,pi0,p11,p12,p13,degenerate` rows plus `#` metadata lines.
//! * truth: one 1-based predictor index per line.
//!
//! Floats are written with 17 significant digits, so every format
//! round-trips bit-exactly.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gibbs::{ChainConfig, ChainOutput, ResponseTransform};
use crate::model::{infer_levels, Dataset, Degeneracy, HypothesisProbs, Hyperparams, MixtureDraw, MISSING};
use crate::screening::ScreeningResult;
use crate::sim::RocCurve;

pub const PACKED_MAGIC: &[u8; 4] = b"MOBX";
pub const PACKED_VERSION: u16 = 1;
const CHAIN_TAG: &str = "# mobs-chain v1";
const RESULTS_HEADER: &str = "j,pi0,p11,p12,p13,degenerate";
/// Largest storable code; `1 + code` must remain a valid level count.
const MAX_CODE: u64 = 253;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XFormat {
    Csv,
    Packed,
}

impl FromStr for XFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(XFormat::Csv),
            "packed" => Ok(XFormat::Packed),
            _ => Err(Error::invalid(format!("unknown predictor format {s:?} (csv or packed)"))),
        }
    }
}

impl XFormat {
    /// `packed` for `.mobx` files, CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("mobx") => XFormat::Packed,
            _ => XFormat::Csv,
        }
    }
}

#[inline]
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    open(path)?
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

fn parse_f64(tok: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = tok.trim().parse().map_err(|_| Error::Parse {
        line,
        column,
        msg: format!("expected a number, found {tok:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            column,
            msg: format!("non-finite value {tok:?}"),
        });
    }
    Ok(v)
}

pub fn read_response(path: &Path) -> Result<Vec<f64>> {
    let mut y = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        y.push(parse_f64(t, i + 1, 1)?);
    }
    if y.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no response values", path.display())));
    }
    Ok(y)
}

pub fn write_response(path: &Path, y: &[f64]) -> Result<()> {
    let mut s = String::with_capacity(y.len() * 24);
    for v in y {
        writeln!(s, "{}", fmt_f64(*v)).unwrap();
    }
    write_text(path, &s)
}

/// Row-major CSV codes. Returns `(n, p, column-major codes)`.
pub fn read_x_csv(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let lines = read_lines(path)?;
    let mut rows: Vec<Vec<u8>> = Vec::new();
    let mut p = None;
    for (idx, line) in lines.iter().enumerate() {
        let lineno = idx + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        if rows.is_empty() && p.is_none() && fields.iter().any(|f| is_header_token(f)) {
            p = Some(fields.len());
            continue;
        }
        if let Some(expected) = p {
            if fields.len() != expected {
                return Err(Error::Parse {
                    line: lineno,
                    column: fields.len().min(expected) + 1,
                    msg: format!("expected {expected} fields, found {}", fields.len()),
                });
            }
        }
        p = Some(fields.len());
        let mut row = Vec::with_capacity(fields.len());
        for (c, f) in fields.iter().enumerate() {
            if f.is_empty() || f.eq_ignore_ascii_case("na") {
                row.push(MISSING);
                continue;
            }
            let v: u64 = f.parse().map_err(|_| Error::Parse {
                line: lineno,
                column: c + 1,
                msg: format!("expected a nonnegative integer code, found {f:?}"),
            })?;
            if v > MAX_CODE {
                return Err(Error::UnsupportedCardinality { column: c + 1, level: v });
            }
            row.push(v as u8);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no predictor rows", path.display())));
    }
    let n = rows.len();
    let p = p.unwrap_or(0);
    let mut x = vec![0u8; n * p];
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[j * n + i] = v;
        }
    }
    Ok((n, p, x))
}

fn is_header_token(f: &str) -> bool {
    !f.is_empty() && !f.eq_ignore_ascii_case("na") && f.parse::<i64>().is_err()
}

/// Writes codes with an `x1,...,xp` header; missing values become `NA`.
pub fn write_x_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    let (n, p) = (dataset.n(), dataset.p());
    let mut s = String::with_capacity(n * p * 2 + 8 * p);
    let header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for i in 0..n {
        for j in 0..p {
            if j > 0 {
                s.push(',');
            }
            match dataset.get(i, j) {
                MISSING => s.push_str("NA"),
                v => write!(s, "{v}").unwrap(),
            }
        }
        s.push('\n');
    }
    write_text(path, &s)
}

/// Reads a packed predictor file. Returns `(n, levels, column-major codes)`.
pub fn read_x_packed(path: &Path) -> Result<(usize, Vec<u8>, Vec<u8>)> {
    let mut r = open(path)?;
    let mut head = [0u8; 22];
    r.read_exact(&mut head).map_err(|_| Error::Format {
        line: 0,
        msg: format!("{}: truncated packed header", path.display()),
    })?;
    if &head[..4] != PACKED_MAGIC {
        return Err(Error::Format {
            line: 0,
            msg: format!("{}: missing MOBX magic", path.display()),
        });
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != PACKED_VERSION {
        return Err(Error::Format {
            line: 0,
            msg: format!("{}: unsupported packed version {version}", path.display()),
        });
    }
    let n = u64::from_le_bytes(head[6..14].try_into().unwrap()) as usize;
    let p = u64::from_le_bytes(head[14..22].try_into().unwrap()) as usize;
    if n == 0 || p == 0 {
        return Err(Error::InvalidInput(format!("{}: empty predictor matrix", path.display())));
    }
    let cells = n.checked_mul(p).ok_or_else(|| Error::Format {
        line: 0,
        msg: "matrix size overflows".into(),
    })?;
    let mut levels = vec![0u8; p];
    r.read_exact(&mut levels).map_err(|_| Error::Format {
        line: 0,
        msg: format!("{}: truncated level table", path.display()),
    })?;
    let mut x = vec![0u8; cells];
    r.read_exact(&mut x).map_err(|_| Error::Format {
        line: 0,
        msg: format!("{}: truncated code block (expected {cells} bytes)", path.display()),
    })?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format {
            line: 0,
            msg: format!("{}: trailing bytes after code block", path.display()),
        });
    }
    Ok((n, levels, x))
}

pub fn write_x_packed(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut w = create(path)?;
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_all(PACKED_MAGIC)?;
        w.write_all(&PACKED_VERSION.to_le_bytes())?;
        w.write_all(&(dataset.n() as u64).to_le_bytes())?;
        w.write_all(&(dataset.p() as u64).to_le_bytes())?;
        w.write_all(dataset.levels())?;
        w.write_all(dataset.codes())?;
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_levels(path: &Path) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        for (c, tok) in line.split(|ch: char| ch == ',' || ch.is_whitespace()).filter(|t| !t.is_empty()).enumerate() {
            let v: u64 = tok.parse().map_err(|_| Error::Parse {
                line: i + 1,
                column: c + 1,
                msg: format!("expected a level count, found {tok:?}"),
            })?;
            if v > MAX_CODE + 1 {
                return Err(Error::UnsupportedCardinality { column: out.len() + 1, level: v });
            }
            out.push(v as u8);
        }
    }
    Ok(out)
}

/// Loads a dataset. Levels come from the sidecar when given, from the packed
/// header in packed mode, and are otherwise inferred as `1 + max` code.
pub fn load_dataset(y_path: &Path, x_path: &Path, format: XFormat, levels_path: Option<&Path>) -> Result<Dataset> {
    let y = read_response(y_path)?;
    let (n, p, x, stored) = match format {
        XFormat::Csv => {
            let (n, p, x) = read_x_csv(x_path)?;
            (n, p, x, None)
        }
        XFormat::Packed => {
            let (n, levels, x) = read_x_packed(x_path)?;
            (n, levels.len(), x, Some(levels))
        }
    };
    if n != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} has {} values but {} has {n} rows",
            y_path.display(),
            y.len(),
            x_path.display()
        )));
    }
    let levels = match levels_path {
        Some(path) => {
            let l = read_levels(path)?;
            if l.len() != p {
                return Err(Error::InvalidInput(format!(
                    "{} lists {} level counts for {p} predictors",
                    path.display(),
                    l.len()
                )));
            }
            l
        }
        None => stored.unwrap_or_else(|| infer_levels(&x, n, p)),
    };
    Dataset::new(y, x, levels)
}

/// Writes `y` and `x` files in the requested format.
pub fn save_dataset(dataset: &Dataset, y_path: &Path, x_path: &Path, format: XFormat) -> Result<()> {
    write_response(y_path, dataset.y())?;
    match format {
        XFormat::Csv => write_x_csv(x_path, dataset),
        XFormat::Packed => write_x_packed(x_path, dataset),
    }
}

fn transform_token(t: &ResponseTransform) -> String {
    match *t {
        ResponseTransform::Identity => "identity".into(),
        ResponseTransform::Standardize { center, scale } => {
            format!("standardize:{},{}", fmt_f64(center), fmt_f64(scale))
        }
    }
}

fn parse_transform(tok: &str) -> Option<ResponseTransform> {
    if tok == "identity" {
        return Some(ResponseTransform::Identity);
    }
    let (c, s) = tok.strip_prefix("standardize:")?.split_once(',')?;
    Some(ResponseTransform::Standardize {
        center: c.parse().ok()?,
        scale: s.parse().ok()?,
    })
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

/// Serializes retained draws; the log-joint trace is not stored.
pub fn chain_to_string(chain: &ChainOutput) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{CHAIN_TAG} k={} n={} draws={} transform={}",
        chain.k(),
        chain.n(),
        chain.draws.len(),
        transform_token(&chain.transform)
    )
    .unwrap();
    for (idx, d) in chain.draws.iter().enumerate() {
        let alloc: Vec<String> = d.allocations.iter().map(|c| (c + 1).to_string()).collect();
        writeln!(
            s,
            "{};{};{};{};{}",
            idx + 1,
            join_f64(&d.weights),
            join_f64(&d.means),
            join_f64(&d.variances),
            alloc.join(",")
        )
        .unwrap();
    }
    s
}

pub fn persist_chain(chain: &ChainOutput, path: &Path) -> Result<()> {
    write_text(path, &chain_to_string(chain))
}

fn format_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Format { line, msg: msg.into() }
}

pub fn load_chain(path: &Path) -> Result<ChainOutput> {
    let lines = read_lines(path)?;
    let header = lines.first().ok_or_else(|| format_err(1, "empty chain file"))?;
    let rest = header
        .strip_prefix(CHAIN_TAG)
        .ok_or_else(|| format_err(1, format!("not a chain file (expected {CHAIN_TAG:?})")))?;
    let mut k = None;
    let mut n = None;
    let mut draws = None;
    let mut transform = None;
    for tok in rest.split_whitespace() {
        let (key, value) = tok.split_once('=').ok_or_else(|| format_err(1, format!("bad header field {tok:?}")))?;
        match key {
            "k" => k = value.parse::<usize>().ok(),
            "n" => n = value.parse::<usize>().ok(),
            "draws" => draws = value.parse::<usize>().ok(),
            "transform" => transform = parse_transform(value),
            _ => return Err(format_err(1, format!("unknown header field {key:?}"))),
        }
    }
    let (k, n, draws, transform) = match (k, n, draws, transform) {
        (Some(k), Some(n), Some(d), Some(t)) if k > 0 && n > 0 && d > 0 => (k, n, d, t),
        _ => return Err(format_err(1, "header needs positive k, n, draws and a transform")),
    };
    let records: Vec<(usize, &String)> = lines
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    if records.len() != draws {
        let line = records.last().map_or(1, |r| r.0) + 1;
        return Err(format_err(line, format!("expected {draws} draw records, found {}", records.len())));
    }
    let mut out = Vec::with_capacity(draws);
    for (expected_idx, (lineno, line)) in records.into_iter().enumerate() {
        let groups: Vec<&str> = line.trim().split(';').collect();
        if groups.len() != 5 {
            return Err(format_err(lineno, format!("expected 5 field groups, found {}", groups.len())));
        }
        if groups[0].parse::<usize>().ok() != Some(expected_idx + 1) {
            return Err(format_err(lineno, format!("expected draw index {}", expected_idx + 1)));
        }
        let floats = |g: &str, what: &str| -> Result<Vec<f64>> {
            let v = g
                .split(',')
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| format_err(lineno, format!("unparsable {what}")))?;
            if v.len() != k {
                return Err(format_err(lineno, format!("{what}: expected {k} values, found {}", v.len())));
            }
            Ok(v)
        };
        let weights = floats(groups[1], "weights")?;
        let means = floats(groups[2], "means")?;
        let variances = floats(groups[3], "variances")?;
        let allocations = groups[4]
            .split(',')
            .map(|t| match t.parse::<usize>() {
                Ok(c) if (1..=k).contains(&c) => Ok(c - 1),
                _ => Err(format_err(lineno, format!("bad allocation {t:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if allocations.len() != n {
            return Err(format_err(lineno, format!("expected {n} allocations, found {}", allocations.len())));
        }
        let draw = MixtureDraw {
            weights,
            means,
            variances,
            allocations,
        };
        draw.validate().map_err(|e| format_err(lineno, e.to_string()))?;
        out.push(draw);
    }
    Ok(ChainOutput {
        draws: out,
        log_joint: Vec::new(),
        transform,
    })
}

fn degeneracy_token(d: Option<Degeneracy>) -> &'static str {
    match d {
        None => "none",
        Some(Degeneracy::Constant) => "constant",
        Some(Degeneracy::EmptyLevel) => "empty-level",
        Some(Degeneracy::Missing) => "missing",
    }
}

fn parse_degeneracy(s: &str) -> Option<Option<Degeneracy>> {
    Some(match s {
        "none" => None,
        "constant" => Some(Degeneracy::Constant),
        "empty-level" => Some(Degeneracy::EmptyLevel),
        "missing" => Some(Degeneracy::Missing),
        _ => return None,
    })
}

/// Screening output as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsFile {
    pub result: ScreeningResult,
    pub seed: Option<u64>,
}

pub fn results_to_string(result: &ScreeningResult, seed: Option<u64>) -> String {
    let mut s = String::with_capacity(result.probs.len() * 100);
    s.push_str(RESULTS_HEADER);
    s.push('\n');
    for (j, (p, d)) in result.probs.iter().zip(&result.degenerate).enumerate() {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            j + 1,
            fmt_f64(p.p0),
            fmt_f64(p.p11),
            fmt_f64(p.p12),
            fmt_f64(p.p13),
            degeneracy_token(*d)
        )
        .unwrap();
    }
    writeln!(s, "# kappa={}", join_f64(&result.kappa)).unwrap();
    writeln!(s, "# iterations={}", result.iterations).unwrap();
    writeln!(s, "# converged={}", result.converged).unwrap();
    match seed {
        Some(v) => writeln!(s, "# seed={v}").unwrap(),
        None => writeln!(s, "# seed=none").unwrap(),
    }
    s
}

pub fn write_results(result: &ScreeningResult, seed: Option<u64>, path: &Path) -> Result<()> {
    write_text(path, &results_to_string(result, seed))
}

pub fn read_results(path: &Path) -> Result<ResultsFile> {
    let lines = read_lines(path)?;
    if lines.first().map(|l| l.trim()) != Some(RESULTS_HEADER) {
        return Err(format_err(1, format!("expected header {RESULTS_HEADER:?}")));
    }
    let mut probs = Vec::new();
    let mut degenerate = Vec::new();
    let mut kappa = None;
    let mut iterations = None;
    let mut converged = None;
    let mut seed = None;
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let lineno = idx + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(meta) = t.strip_prefix('#') {
            let (key, value) = meta
                .trim()
                .split_once('=')
                .ok_or_else(|| format_err(lineno, "metadata must be key=value"))?;
            let bad = || format_err(lineno, format!("bad {key} value {value:?}"));
            match key {
                "kappa" => {
                    let v: Vec<f64> = value.split(',').map(|t| t.parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
                    kappa = Some(<[f64; 4]>::try_from(v).map_err(|_| bad())?);
                }
                "iterations" => iterations = Some(value.parse().map_err(|_| bad())?),
                "converged" => converged = Some(value.parse().map_err(|_| bad())?),
                "seed" => seed = Some(if value == "none" { None } else { Some(value.parse().map_err(|_| bad())?) }),
                _ => {}
            }
            continue;
        }
        let f: Vec<&str> = t.split(',').collect();
        if f.len() != 6 {
            return Err(format_err(lineno, format!("expected 6 fields, found {}", f.len())));
        }
        if f[0].parse::<usize>().ok() != Some(probs.len() + 1) {
            return Err(format_err(lineno, format!("expected predictor index {}", probs.len() + 1)));
        }
        let mut v = [0.0; 4];
        for t in 0..4 {
            v[t] = f[t + 1].parse().map_err(|_| format_err(lineno, format!("bad probability {:?}", f[t + 1])))?;
        }
        probs.push(HypothesisProbs::from_array(v));
        degenerate.push(parse_degeneracy(f[5]).ok_or_else(|| format_err(lineno, format!("bad degeneracy flag {:?}", f[5])))?);
    }
    let missing = |what: &str| format_err(lines.len(), format!("missing {what} metadata"));
    Ok(ResultsFile {
        result: ScreeningResult {
            probs,
            degenerate,
            kappa: kappa.ok_or_else(|| missing("kappa"))?,
            iterations: iterations.ok_or_else(|| missing("iterations"))?,
            converged: converged.ok_or_else(|| missing("converged"))?,
        },
        seed: seed.ok_or_else(|| missing("seed"))?,
    })
}

/// Writes 0-based indices as 1-based lines.
pub fn write_truth(path: &Path, truth: &[usize]) -> Result<()> {
    let s: String = truth.iter().map(|j| format!("{}\n", j + 1)).collect();
    write_text(path, &s)
}

/// Reads 1-based indices, returned 0-based.
pub fn read_truth(path: &Path) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match t.parse::<usize>() {
            Ok(j) if j >= 1 => out.push(j - 1),
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    column: 1,
                    msg: format!("expected a 1-based index, found {t:?}"),
                })
            }
        }
    }
    Ok(out)
}

pub fn write_roc(path: &Path, curve: &RocCurve) -> Result<()> {
    let mut s = String::from("threshold,fpr,tpr\n");
    for pt in &curve.points {
        let th = if pt.threshold.is_finite() {
            fmt_f64(pt.threshold)
        } else {
            "-inf".into()
        };
        writeln!(s, "{th},{},{}", fmt_f64(pt.fpr), fmt_f64(pt.tpr)).unwrap();
    }
    writeln!(s, "# auc={}", fmt_f64(curve.auc)).unwrap();
    write_text(path, &s)
}

/// Everything needed to rerun a screening job.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub y_path: PathBuf,
    pub x_path: PathBuf,
    pub levels_path: Option<PathBuf>,
    pub hyperparams: Hyperparams,
    pub chain: ChainConfig,
    pub tol: f64,
    pub max_iter: usize,
    pub threads: usize,
    pub mem_budget: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl RunManifest {
    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::invalid("worker count must be >= 1"));
        }
        for p in [Some(&self.y_path), Some(&self.x_path), self.levels_path.as_ref()].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::InvalidInput(format!("{} does not exist", p.display())));
            }
        }
        self.hyperparams.validate()?;
        self.chain.validate()
    }

    pub fn to_text(&self) -> String {
        let hp = &self.hyperparams;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
        kv("y", self.y_path.display().to_string());
        kv("x", self.x_path.display().to_string());
        kv(
            "levels",
            self.levels_path.as_ref().map_or("none".into(), |p| p.display().to_string()),
        );
        kv("k", hp.k.to_string());
        kv("kappa", join_f64(&hp.kappa));
        kv("tau_omega", fmt_f64(hp.tau_omega));
        kv("tau_mu", fmt_f64(hp.tau_mu));
        kv("tau_sigma", fmt_f64(hp.tau_sigma));
        kv("mu0", fmt_f64(hp.mu0));
        kv("q", fmt_f64(hp.q));
        kv("a", fmt_f64(hp.a));
        kv("b", fmt_f64(hp.b));
        kv("alpha", fmt_f64(hp.alpha));
        kv("iters", self.chain.total_iters.to_string());
        kv("burnin", self.chain.burn_in.to_string());
        kv("keep", self.chain.keep.to_string());
        kv("thin", self.chain.thin.to_string());
        kv("chain_seed", self.chain.seed.to_string());
        kv("tol", fmt_f64(self.tol));
        kv("max_iter", self.max_iter.to_string());
        kv("threads", self.threads.to_string());
        kv("mem_budget", self.mem_budget.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("seed", self.seed.to_string());
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format_err(i + 1, "expected key=value"))?;
            map.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        fn get<T: FromStr>(map: &std::collections::HashMap<String, (usize, String)>, key: &str) -> Result<T> {
            let (line, v) = map.get(key).ok_or_else(|| format_err(0, format!("manifest lacks {key:?}")))?;
            v.parse().map_err(|_| format_err(*line, format!("bad {key} value {v:?}")))
        }
        let kappa_s: String = get(&map, "kappa")?;
        let kappa: Vec<f64> = kappa_s
            .split(',')
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| format_err(0, "bad kappa"))?;
        let levels: String = get(&map, "levels")?;
        Ok(RunManifest {
            y_path: get::<String>(&map, "y")?.into(),
            x_path: get::<String>(&map, "x")?.into(),
            levels_path: (levels != "none").then(|| levels.into()),
            hyperparams: Hyperparams {
                kappa: kappa.try_into().map_err(|_| format_err(0, "kappa needs 4 values"))?,
                tau_omega: get(&map, "tau_omega")?,
                tau_mu: get(&map, "tau_mu")?,
                tau_sigma: get(&map, "tau_sigma")?,
                mu0: get(&map, "mu0")?,
                q: get(&map, "q")?,
                a: get(&map, "a")?,
                b: get(&map, "b")?,
                alpha: get(&map, "alpha")?,
                k: get(&map, "k")?,
            },
            chain: ChainConfig {
                total_iters: get(&map, "iters")?,
                burn_in: get(&map, "burnin")?,
                keep: get(&map, "keep")?,
                thin: get(&map, "thin")?,
                seed: get(&map, "chain_seed")?,
            },
            tol: get(&map, "tol")?,
            max_iter: get(&map, "max_iter")?,
            threads: get(&map, "threads")?,
            mem_budget: get(&map, "mem_budget")?,
            output_dir: get::<String>(&map, "output_dir")?.into(),
            seed: get(&map, "seed")?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_text())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut s = String::new();
        open(path)?.read_to_string(&mut s).map_err(|e| Error::io(path, e))?;
        Self::parse(&s)
    }
}
