//! File formats: dense matrices (JSON, CSV), edge lists, shape clouds and
//! dyadic tables. Every writer goes through [`write_atomic`].

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use sconv_core::dyadic::DyadicTable;
use sconv_core::shapes::{ShapeCloud, ShapeMethod};
use sconv_core::{Matrix, NonNegSymMatrix, SAMPLER_VERSION};

use crate::error::{CliError, CliResult};

/// Writes to a temporary file next to `path` and renames it into place, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let io_err = |source| CliError::Io { path: path.display().to_string(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

#[derive(Serialize, Deserialize)]
struct MatrixFile {
    n: usize,
    entries: Vec<Vec<f64>>,
}

pub fn matrix_to_json(m: &NonNegSymMatrix) -> String {
    let file = MatrixFile { n: m.n(), entries: m.matrix().to_rows() };
    serde_json::to_string(&file).expect("matrices serialize")
}

pub fn matrix_from_json(text: &str) -> CliResult<NonNegSymMatrix> {
    let file: MatrixFile = serde_json::from_str(text)?;
    if file.entries.len() != file.n {
        return Err(CliError::bad(format!("\"n\" is {} but there are {} rows", file.n, file.entries.len())));
    }
    Ok(NonNegSymMatrix::new(Matrix::from_rows(&file.entries)?)?)
}

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> CliResult<NonNegSymMatrix> {
    let mut rows = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::bad(format!("csv line {}: {e}", line_no + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::bad("csv matrix is empty"));
    }
    Ok(NonNegSymMatrix::new(Matrix::from_rows(&rows)?)?)
}

/// Parses a whitespace edge list: `u v` or `u v w` per line, 0-based ids,
/// `#` comments. A `# vertices N` line fixes the vertex count; otherwise it
/// is one more than the largest id. Repeated edges add up, and a loop adds
/// its weight to the diagonal once.
pub fn edges_from_text(text: &str) -> CliResult<NonNegSymMatrix> {
    let mut declared = None;
    let mut edges = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            let mut parts = rest.split_whitespace();
            if parts.next() == Some("vertices") {
                let n = parts
                    .next()
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| CliError::bad(format!("line {}: malformed vertices header", line_no + 1)))?;
                declared = Some(n);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| CliError::bad(format!("line {}: {what}: {line:?}", line_no + 1));
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() < 2 || parts.len() > 3 {
            return Err(bad("expected `u v` or `u v w`"));
        }
        let u: usize = parts[0].parse().map_err(|_| bad("bad vertex id"))?;
        let v: usize = parts[1].parse().map_err(|_| bad("bad vertex id"))?;
        let w: f64 = match parts.get(2) {
            Some(t) => t.parse().map_err(|_| bad("bad weight"))?,
            None => 1.0,
        };
        if !(w.is_finite() && w >= 0.0) {
            return Err(bad("weight must be finite and nonnegative"));
        }
        edges.push((u, v, w));
    }
    let max_id = edges.iter().map(|e| e.0.max(e.1) + 1).max().unwrap_or(0);
    let n = declared.unwrap_or(max_id);
    if max_id > n {
        return Err(CliError::bad(format!("vertex id {} exceeds declared count {n}", max_id - 1)));
    }
    if n == 0 {
        return Err(CliError::bad("edge list has no vertices"));
    }
    let mut a = Matrix::zeros(n, n);
    for (u, v, w) in edges {
        a.add_at(u, v, w);
        if u != v {
            a.add_at(v, u, w);
        }
    }
    Ok(NonNegSymMatrix::new(a)?)
}

/// Inverse of [`edges_from_text`]; unit weights are omitted.
pub fn edges_to_text(a: &NonNegSymMatrix) -> String {
    let n = a.n();
    let mut out = format!("# vertices {n}\n");
    for i in 0..n {
        for j in i..n {
            let w = a.get(i, j);
            if w == 0.0 {
                continue;
            }
            if w == 1.0 {
                out.push_str(&format!("{i} {j}\n"));
            } else {
                out.push_str(&format!("{i} {j} {w}\n"));
            }
        }
    }
    out
}

/// Reads a matrix or graph, choosing the format by extension: `.json`,
/// `.csv`, anything else is an edge list. The flag tells whether the file
/// was an edge list.
pub fn read_source(path: &Path) -> CliResult<(NonNegSymMatrix, bool)> {
    let text = read_text(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let ctx = |e: CliError| match e {
        CliError::BadInput(msg) => CliError::BadInput(format!("{}: {msg}", path.display())),
        other => other,
    };
    match ext.as_str() {
        "json" => matrix_from_json(&text).map(|m| (m, false)).map_err(ctx),
        "csv" => matrix_from_csv(&text).map(|m| (m, false)).map_err(ctx),
        _ => edges_from_text(&text).map(|m| (m, true)).map_err(ctx),
    }
}

#[derive(Serialize, Deserialize)]
struct CloudFile {
    k: usize,
    method: String,
    seed: u64,
    source_mass: f64,
    sample_count: usize,
    #[serde(default)]
    net_eps: Option<f64>,
    #[serde(default)]
    sampler_version: Option<String>,
    points: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    witnesses: Option<Vec<u64>>,
}

pub fn cloud_to_json(c: &ShapeCloud) -> String {
    let file = CloudFile {
        k: c.k,
        method: c.method.as_str().to_string(),
        seed: c.seed,
        source_mass: c.source_mass,
        sample_count: c.sample_count,
        net_eps: c.net_eps,
        sampler_version: Some(SAMPLER_VERSION.to_string()),
        points: c.points.iter().map(|p| p.to_rows()).collect(),
        witnesses: c.witnesses.clone(),
    };
    serde_json::to_string(&file).expect("clouds serialize")
}

/// Flattened points, one per row: `index,m00,m01,…`.
pub fn cloud_to_csv(c: &ShapeCloud) -> String {
    let mut out = String::from("index");
    for i in 0..c.k {
        for j in 0..c.k {
            out.push_str(&format!(",m{i}_{j}"));
        }
    }
    out.push('\n');
    for (idx, p) in c.points.iter().enumerate() {
        out.push_str(&idx.to_string());
        for v in p.data() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn cloud_from_json(text: &str) -> CliResult<ShapeCloud> {
    let file: CloudFile = serde_json::from_str(text)?;
    if let Some(v) = &file.sampler_version {
        if v != SAMPLER_VERSION {
            return Err(CliError::bad(format!("cloud was made by sampler {v}, this build has {SAMPLER_VERSION}")));
        }
    }
    let method = ShapeMethod::parse(&file.method).ok_or_else(|| CliError::bad(format!("unknown method {:?}", file.method)))?;
    let points = file.points.iter().map(|p| Matrix::from_rows(p)).collect::<Result<Vec<_>, _>>()?;
    let mut cloud = ShapeCloud::from_points(file.k, points, method, file.source_mass, file.seed)?;
    cloud.sample_count = file.sample_count;
    cloud.net_eps = file.net_eps;
    if let Some(w) = &file.witnesses {
        if w.len() != cloud.points.len() {
            return Err(CliError::bad("witness list and point list differ in length"));
        }
    }
    cloud.witnesses = file.witnesses;
    cloud.check(1e-9 * (1.0 + cloud.source_mass))?;
    Ok(cloud)
}

pub fn read_cloud(path: &Path) -> CliResult<ShapeCloud> {
    cloud_from_json(&read_text(path)?).map_err(|e| match e {
        CliError::BadInput(msg) => CliError::BadInput(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    depth: u32,
    mass: f64,
    levels: Vec<Vec<Vec<f64>>>,
}

/// Table JSON with every level, or only the deepest one.
pub fn table_to_json(t: &DyadicTable, all_levels: bool) -> String {
    let levels = if all_levels { t.levels().iter().map(|l| l.to_rows()).collect() } else { vec![t.leaves().to_rows()] };
    serde_json::to_string(&TableFile { depth: t.depth(), mass: t.mass(), levels }).expect("tables serialize")
}

/// Loads a table. The deepest level is authoritative; coarser levels, when
/// present, must agree with the recomputed coarsenings.
pub fn table_from_json(text: &str) -> CliResult<DyadicTable> {
    let file: TableFile = serde_json::from_str(text)?;
    let deepest = file.levels.last().ok_or_else(|| CliError::bad("table has no levels"))?;
    let table = DyadicTable::from_leaves(Matrix::from_rows(deepest)?)?;
    if table.depth() != file.depth {
        return Err(CliError::bad(format!("declared depth {} but leaves have depth {}", file.depth, table.depth())));
    }
    if file.levels.len() > 1 {
        if file.levels.len() != file.depth as usize + 1 {
            return Err(CliError::bad("levels must be complete or contain only the deepest level"));
        }
        let given = file.levels.iter().map(|l| Matrix::from_rows(l)).collect::<Result<Vec<_>, _>>()?;
        let report = DyadicTable::from_levels(given)?.validate();
        if !report.ok {
            return Err(CliError::bad(format!("stored levels are inconsistent: {:?}", report.first_violation)));
        }
        for (i, l) in file.levels.iter().enumerate() {
            let recomputed = table.level(i);
            let diff = sconv_core::l1_dist(recomputed, &Matrix::from_rows(l)?)?;
            if diff > 1e-9 * (1.0 + table.mass()) {
                return Err(CliError::bad(format!("level {i} differs from the coarsened leaves by {diff:e}")));
            }
        }
    }
    if (table.mass() - file.mass).abs() > 1e-9 * (1.0 + file.mass) {
        return Err(CliError::bad(format!("declared mass {} but leaves sum to {}", file.mass, table.mass())));
    }
    Ok(table)
}

pub fn read_table(path: &Path) -> CliResult<DyadicTable> {
    table_from_json(&read_text(path)?).map_err(|e| match e {
        CliError::BadInput(msg) => CliError::BadInput(format!("{}: {msg}", path.display())),
        other => other,
    })
}
