//! Subcommand definitions and their implementations.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use sconv_core::dyadic::{self, builtin_table, table_from_matrix, Builtin, DyadicTable, PipelineParams, TableShapeParams};
use sconv_core::generators::{self, edge_count, GraphSpec};
use sconv_core::invariants::{self, DimensionParams, EntropyParams, Histogram};
use sconv_core::regularity::{regularize, RegularizeParams};
use sconv_core::shapes::{ds_metric, hausdorff_l1, shape_of, ShapeCloud, ShapeParams};
use sconv_core::{NonNegSymMatrix, SAMPLER_VERSION};

use crate::config::{ConfigFile, OutputFormat, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io;

#[derive(Debug, Parser)]
#[command(name = "sconv", version, about = "Shapes, limits and invariants of weighted graphs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON file with default settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Polytope samples per shape.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Thin shape clouds to nets of this radius.
    #[arg(long = "net-eps", global = true)]
    pub net_eps: Option<f64>,
    /// Comma-separated list of k values.
    #[arg(long, global = true, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Worker threads, 0 for all cores. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl GlobalArgs {
    pub fn run_config(&self) -> CliResult<RunConfig> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let flags = ConfigFile {
            seed: self.seed,
            samples: self.samples,
            net_eps: self.net_eps,
            k_list: self.ks.clone(),
            tol: self.tol,
            threads: self.threads,
            output_format: self.format,
        };
        RunConfig::resolve(file.merged(flags))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an example graph as an edge list.
    Gen(GenArgs),
    /// Sample or enumerate the k-shape of a graph or matrix.
    Shape(ShapeArgs),
    /// Hausdorff distance between two shape clouds.
    Dist(DistArgs),
    /// Build a balanced blow-up whose shape approximates the input's.
    Regularize(RegularizeArgs),
    /// Build a consistent dyadic table.
    Table(TableArgs),
    /// Minimum-entropy profile and dimension estimate.
    Dimension(SubjectArgs),
    /// Regularity, degree, dimension, convexity and upper-regularity report.
    Diagnose(DiagnoseArgs),
    /// Compare two directories of shape clouds in the shape preorder.
    Order(OrderArgs),
    /// Shape distances along a sequence of graphs.
    Sequence(SequenceArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Family {
    Cycle,
    Hypercube,
    FatHypercube,
    Complete,
    SubdivComplete,
    TensorPower,
    Blowup,
    File,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    /// Size parameter: vertices, dimension, or complete-graph order.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// New vertices per edge of a subdivided complete graph.
    #[arg(long, default_value_t = 1)]
    pub splits: usize,
    #[arg(long, default_value_t = 2)]
    pub power: u32,
    /// Blow-up factor.
    #[arg(long, default_value_t = 2)]
    pub factor: usize,
    /// Base family of a tensor power or blow-up.
    #[arg(long, value_enum)]
    pub base: Option<Family>,
    /// Graph file for the `file` family or a file base.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Method {
    Sample,
    Net,
    Balanced,
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Edge list, `.json` matrix or `.csv` matrix.
    #[arg(long)]
    pub input: PathBuf,
    /// Scale to total mass 1 (default for edge lists).
    #[arg(long, conflicts_with = "raw")]
    pub normalize: bool,
    /// Keep the input's mass (default for matrix files).
    #[arg(long)]
    pub raw: bool,
}

impl SourceArgs {
    pub fn load(&self) -> CliResult<NonNegSymMatrix> {
        let (m, is_graph) = io::read_source(&self.input)?;
        if (is_graph || self.normalize) && !self.raw {
            if !(m.gamma() > 0.0) {
                return Err(CliError::bad(format!("{}: graph has no edges", self.input.display())));
            }
            return Ok(m.normalized());
        }
        Ok(m)
    }
}

#[derive(Debug, Args)]
pub struct ShapeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// A single k; otherwise every k of `--ks` goes to `--out-dir`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Largest number of balanced partitions to enumerate.
    #[arg(long, default_value_t = 2_000_000)]
    pub limit: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct RegularizeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub eps: f64,
    /// Samples used to measure the achieved distance.
    #[arg(long, default_value_t = 5000)]
    pub probe: usize,
    /// Largest blow-up size attempted.
    #[arg(long, default_value_t = 2048)]
    pub max_m: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum BuiltinName {
    Uniform,
    NuAlpha,
    MaxRegular,
    MuSubdiv,
    FatCube,
    Product,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(long, value_enum, conflicts_with_all = ["from", "pipeline"])]
    pub builtin: Option<BuiltinName>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Graph of a product measure.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Embed one graph or matrix as a step measure.
    #[arg(long, conflicts_with = "pipeline")]
    pub from: Option<PathBuf>,
    /// Sequence of graphs or matrices; the table stands in for their limit.
    #[arg(long, num_args = 1..)]
    pub pipeline: Vec<PathBuf>,
    #[arg(long)]
    pub depth: u32,
    /// Largest k compared by the pipeline report.
    #[arg(long, default_value_t = 3)]
    pub kmax: usize,
    #[arg(long, default_value_t = 64)]
    pub candidates: usize,
    /// Write only the deepest level.
    #[arg(long)]
    pub leaves_only: bool,
    /// Where to write the pipeline report; stderr when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SubjectArgs {
    #[arg(long, conflicts_with = "input")]
    pub table: Option<PathBuf>,
    /// Graph or matrix, scaled to mass 1.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Skip mirror-descent refinement of the entropy minimum.
    #[arg(long)]
    pub no_refine: bool,
}

impl SubjectArgs {
    fn load(&self) -> CliResult<Subject> {
        match (&self.table, &self.input) {
            (Some(t), None) => Ok(Subject::Table(io::read_table(t)?)),
            (None, Some(g)) => {
                let (m, _) = io::read_source(g)?;
                if !(m.gamma() > 0.0) {
                    return Err(CliError::bad(format!("{}: zero matrix", g.display())));
                }
                Ok(Subject::Matrix(m.normalized()))
            }
            _ => Err(CliError::bad("give exactly one of --table and --input")),
        }
    }
}

enum Subject {
    Table(DyadicTable),
    Matrix(NonNegSymMatrix),
}

impl Subject {
    fn matrix(&self) -> NonNegSymMatrix {
        match self {
            Subject::Table(t) => t.leaf_matrix(),
            Subject::Matrix(m) => m.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub subject: SubjectArgs,
    /// Bound of the upper-regularity check.
    #[arg(long = "c", default_value_t = 4.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.25)]
    pub eta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Level of the degree histogram (tables only).
    #[arg(long)]
    pub depth: Option<u32>,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Midpoint pairs per convexity score.
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
}

#[derive(Debug, Args)]
pub struct OrderArgs {
    /// Directory of cloud files, one per k.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub kmax: usize,
}

#[derive(Debug, Args)]
pub struct SequenceArgs {
    /// Graph or matrix files in sequence order.
    #[arg(required = true, num_args = 2..)]
    pub inputs: Vec<PathBuf>,
    /// Compare k = 1..=kmax unless `--ks` is given.
    #[arg(long, default_value_t = 3)]
    pub kmax: usize,
}

/// Parses nothing; runs an already parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    let cfg = cli.global.run_config()?;
    let out = cli.global.out.as_deref();
    if cfg.threads > 0 {
        // only fails when a pool already exists, e.g. under a test harness
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, &cfg, out),
        Command::Shape(a) => cmd_shape(a, &cfg, out),
        Command::Dist(a) => cmd_dist(a, &cfg, out),
        Command::Regularize(a) => cmd_regularize(a, &cfg, out),
        Command::Table(a) => cmd_table(a, &cfg, out),
        Command::Dimension(a) => cmd_dimension(a, &cfg, out),
        Command::Diagnose(a) => cmd_diagnose(a, &cfg, out),
        Command::Order(a) => cmd_order(a, &cfg, out),
        Command::Sequence(a) => cmd_sequence(a, &cfg, out),
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => io::write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    emit(out, &serde_json::to_string_pretty(value)?)
}

fn need<T>(v: Option<T>, what: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::bad(format!("missing --{what}")))
}

fn spec_for(family: Family, a: &GenArgs) -> CliResult<Option<GraphSpec>> {
    let n = || need(a.n, "n");
    let dim = || -> CliResult<u32> { n()?.try_into().map_err(|_| CliError::bad("--n is too large")) };
    Ok(Some(match family {
        Family::Cycle => GraphSpec::Cycle { n: n()? },
        Family::Hypercube => GraphSpec::Hypercube { n: dim()? },
        Family::FatHypercube => GraphSpec::FatHypercube { n: dim()?, alpha: need(a.alpha, "alpha")? },
        Family::Complete => GraphSpec::Complete { n: n()? },
        Family::SubdivComplete => GraphSpec::SubdivComplete { n: n()?, splits: a.splits },
        Family::TensorPower | Family::Blowup | Family::File => return Ok(None),
    }))
}

fn gen_graph(a: &GenArgs) -> CliResult<NonNegSymMatrix> {
    let base = || -> CliResult<NonNegSymMatrix> {
        match (a.base, &a.input) {
            (Some(Family::File), Some(p)) | (None, Some(p)) => Ok(io::read_source(p)?.0),
            (Some(f), None) => match spec_for(f, a)? {
                Some(spec) => Ok(spec.generate()?),
                None => Err(CliError::bad("the base must be a basic family or a file")),
            },
            _ => Err(CliError::bad("give --base or --input for the base graph")),
        }
    };
    match a.family {
        Family::File => Ok(io::read_source(&need(a.input.clone(), "input")?)?.0),
        Family::TensorPower => Ok(generators::tensor_power(&base()?, a.power)?),
        Family::Blowup => Ok(generators::blowup(&base()?, a.factor)?),
        f => Ok(spec_for(f, a)?.expect("basic family").generate()?),
    }
}

fn cmd_gen(a: &GenArgs, _cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let g = gen_graph(a)?;
    let ext = out.and_then(|p| p.extension()).and_then(|e| e.to_str()).unwrap_or("");
    let text = match ext {
        "json" => io::matrix_to_json(&g),
        "csv" => io::matrix_to_csv(g.matrix()),
        _ => io::edges_to_text(&g),
    };
    emit(out, &text)?;
    eprintln!("generated {} vertices, {} edges", g.n(), edge_count(&g));
    Ok(())
}

fn shape_params(method: Option<Method>, cfg: &RunConfig, limit: usize) -> CliResult<ShapeParams> {
    let method = method.unwrap_or(if cfg.net_eps.is_some() { Method::Net } else { Method::Sample });
    Ok(match method {
        Method::Sample => ShapeParams::Sample { count: cfg.samples, seed: cfg.seed },
        Method::Net => ShapeParams::Net {
            count: cfg.samples,
            seed: cfg.seed,
            eps: need(cfg.net_eps, "net-eps")?,
        },
        Method::Balanced => ShapeParams::Balanced { limit },
    })
}

fn cloud_text(c: &ShapeCloud, cfg: &RunConfig) -> String {
    match cfg.output_format {
        OutputFormat::Json => io::cloud_to_json(c),
        OutputFormat::Csv => io::cloud_to_csv(c),
    }
}

fn cmd_shape(a: &ShapeArgs, cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let s = a.source.load()?;
    let params = shape_params(a.method, cfg, a.limit)?;
    if let Some(k) = a.k {
        let cloud = shape_of(&s, k, params)?;
        return emit(out, &cloud_text(&cloud, cfg));
    }
    let dir = need(a.out_dir.clone(), "k or --out-dir")?;
    fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    let ext = match cfg.output_format {
        OutputFormat::Json => "json",
        OutputFormat::Csv => "csv",
    };
    let ks = cfg.ks_or(&[1, 2, 3]);
    let clouds = ks.iter().map(|&k| shape_of(&s, k, params)).collect::<Result<Vec<_>, _>>()?;
    for (k, cloud) in ks.iter().zip(&clouds) {
        io::write_atomic(&dir.join(format!("k{k}.{ext}")), cloud_text(cloud, cfg).as_bytes())?;
    }
    Ok(())
}

fn cmd_dist(a: &DistArgs, _cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let (ca, cb) = (io::read_cloud(&a.a)?, io::read_cloud(&a.b)?);
    let h = hausdorff_l1(&ca, &cb)?;
    emit_json(
        out,
        &json!({
            "k": ca.k,
            "directed_ab": h.directed_ab,
            "directed_ba": h.directed_ba,
            "symmetric": h.symmetric,
            "witness_a": h.witness_a,
            "witness_b": h.witness_b,
        }),
    )
}

fn cmd_regularize(a: &RegularizeArgs, cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let s = a.source.load()?;
    let params = RegularizeParams { net_samples: cfg.samples, probe: a.probe, seed: cfg.seed, max_m: a.max_m };
    let r = regularize(&s, a.k, a.eps, params)?;
    if cfg.output_format == OutputFormat::Csv {
        return emit(out, &io::matrix_to_csv(&r.x));
    }
    emit_json(
        out,
        &json!({
            "m": r.m,
            "X": r.x.to_rows(),
            "measured": r.measured,
            "measured_reverse": r.measured_reverse,
            "certified": r.certified,
            "net_size": r.net_size,
            "witnesses_used": r.witnesses_used,
            "balancing_errors": r.balancing_errors,
            "k": a.k,
            "eps": a.eps,
            "seed": cfg.seed,
            "sampler_version": SAMPLER_VERSION,
        }),
    )
}

fn builtin(a: &TableArgs, name: BuiltinName) -> CliResult<Builtin> {
    Ok(match name {
        BuiltinName::Uniform => Builtin::Uniform,
        BuiltinName::NuAlpha => Builtin::NuAlpha { alpha: need(a.alpha, "alpha")? },
        BuiltinName::MaxRegular => Builtin::MaxRegular,
        BuiltinName::MuSubdiv => Builtin::MuSubdiv,
        BuiltinName::FatCube => Builtin::FatCube { alpha: need(a.alpha, "alpha")? },
        BuiltinName::Product => Builtin::Product { adjacency: io::read_source(&need(a.graph.clone(), "graph")?)?.0 },
    })
}

fn cmd_table(a: &TableArgs, cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let table = if let Some(name) = a.builtin {
        builtin_table(&builtin(a, name)?, a.depth)?
    } else if let Some(p) = &a.from {
        table_from_matrix(&io::read_source(p)?.0, a.depth)?
    } else if !a.pipeline.is_empty() {
        let seq = a
            .pipeline
            .iter()
            .map(|p| {
                let (m, is_graph) = io::read_source(p)?;
                Ok(if is_graph { m.normalized() } else { m })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let params = PipelineParams { shape: TableShapeParams { samples: cfg.samples, seed: cfg.seed }, candidates: a.candidates };
        let r = dyadic::limit_pipeline(&seq, a.depth, a.kmax, params)?;
        let per_k: Vec<Value> = r
            .per_k
            .iter()
            .map(|&(k, to_src, from_src)| json!({"k": k, "table_to_source": to_src, "source_to_table": from_src}))
            .collect();
        let report = serde_json::to_string_pretty(&json!({
            "embedded": r.embedded,
            "depth": a.depth,
            "per_k": per_k,
            "seed": cfg.seed,
            "sampler_version": SAMPLER_VERSION,
        }))?;
        match &a.report {
            Some(p) => io::write_atomic(p, report.as_bytes())?,
            None => eprintln!("{report}"),
        }
        r.table
    } else {
        return Err(CliError::bad("give one of --builtin, --from or --pipeline"));
    };
    let report = table.validate();
    if !report.ok {
        return Err(CliError::Invariant(format!("table failed validation: {:?}", report.first_violation)));
    }
    emit(out, &io::table_to_json(&table, !a.leaves_only))
}

fn dimension_json(m: &NonNegSymMatrix, ks: &[usize], cfg: &RunConfig, refine: bool) -> CliResult<Value> {
    let params =
        DimensionParams { samples: cfg.samples, seed: cfg.seed, entropy: EntropyParams { refine, ..Default::default() } };
    let prof = invariants::dimension_profile(m, ks, params)?;
    Ok(json!({
        "ks": prof.ks,
        "h_k": prof.h_k,
        "ratios": prof.ratios,
        "dim_estimate": prof.dim_estimate,
        "seed": cfg.seed,
        "samples": cfg.samples,
        "sampler_version": SAMPLER_VERSION,
    }))
}

fn cmd_dimension(a: &SubjectArgs, cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let subject = a.load()?;
    let ks = cfg.ks_or(&[2, 4, 8, 16]);
    let v = dimension_json(&subject.matrix(), &ks, cfg, !a.no_refine)?;
    if cfg.output_format == OutputFormat::Csv {
        let mut text = String::from("k,h_k,ratio\n");
        for i in 0..ks.len() {
            text.push_str(&format!("{},{},{}\n", ks[i], v["h_k"][i], v["ratios"][i]));
        }
        return emit(out, &text);
    }
    emit_json(out, &v)
}

fn histogram_json(h: &Histogram) -> Value {
    json!({"edges": h.edges, "counts": h.counts, "min": h.min, "max": h.max, "support_width": h.support_width()})
}

/// Histogram of `n d_i / γ` for a matrix.
fn matrix_degree_histogram(m: &NonNegSymMatrix, bins: usize) -> Histogram {
    let n = m.n() as f64;
    let dens: Vec<f64> = m.row_sums().iter().map(|d| d * n / m.gamma()).collect();
    let min = dens.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = dens.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / bins as f64;
    let edges = (0..=bins).map(|i| if i == bins { max } else { min + i as f64 * width }).collect();
    let mut counts = vec![0; bins];
    for d in dens {
        let b = if width > 0.0 { (((d - min) / width) as usize).min(bins - 1) } else { 0 };
        counts[b] += 1;
    }
    Histogram { edges, counts, min, max }
}

fn cmd_diagnose(a: &DiagnoseArgs, cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    if a.bins == 0 {
        return Err(CliError::bad("--bins must be positive"));
    }
    let subject = a.subject.load()?;
    let m = subject.matrix();
    let (regular, hist) = match &subject {
        Subject::Table(t) => {
            let depth = a.depth.unwrap_or(t.depth().min(6));
            (invariants::is_regular_table(t, 1e-9), invariants::degree_distribution(t, depth, a.bins)?)
        }
        Subject::Matrix(g) => (invariants::is_regular_graph(g), matrix_degree_histogram(g, a.bins)),
    };
    let ks = cfg.ks_or(&[2, 4, 8]);
    let dim_ks: Vec<usize> = ks.iter().copied().filter(|&k| k >= 2).collect();
    let dimension = if dim_ks.is_empty() { Value::Null } else { dimension_json(&m, &dim_ks, cfg, !a.subject.no_refine)? };
    let mut convexity = Vec::new();
    for &k in &ks {
        let cloud = shape_of(&m, k, ShapeParams::Sample { count: cfg.samples, seed: cfg.seed })?;
        convexity.push(json!({"k": k, "score": invariants::convexity_score(&cloud, a.pairs, cfg.seed)?}));
    }
    let ur = invariants::upper_regularity_check(&m, a.c, a.eta, a.p, a.trials, cfg.seed)?;
    let bundle = json!({
        "regular": regular,
        "degree_histogram": histogram_json(&hist),
        "dimension": dimension,
        "convexity": convexity,
        "upper_regularity": {
            "c": a.c, "eta": a.eta, "p": a.p,
            "holds": ur.holds, "worst": ur.worst, "trials": ur.trials,
            "witness_alpha": ur.witness.as_ref().map(|w| w.0.as_slice().to_vec()),
        },
        "seed": cfg.seed,
        "sampler_version": SAMPLER_VERSION,
    });
    emit_json(out, &bundle)
}

fn read_cloud_dir(dir: &Path) -> CliResult<Vec<ShapeCloud>> {
    let io_err = |source| CliError::Io { path: dir.display().to_string(), source };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::bad(format!("{}: no cloud files", dir.display())));
    }
    paths.iter().map(|p| io::read_cloud(p)).collect()
}

fn cmd_order(a: &OrderArgs, cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let (ca, cb) = (read_cloud_dir(&a.a)?, read_cloud_dir(&a.b)?);
    let ab = invariants::preorder_distances(&ca, &cb, a.kmax)?;
    let ba = invariants::preorder_distances(&cb, &ca, a.kmax)?;
    let leq = |d: &[(usize, f64)]| d.iter().all(|&(_, x)| x <= cfg.tol);
    emit_json(
        out,
        &json!({
            "a_leq_b": leq(&ab),
            "b_leq_a": leq(&ba),
            "tol": cfg.tol,
            "distances_ab": ab.iter().map(|&(k, d)| json!({"k": k, "d": d})).collect::<Vec<_>>(),
            "distances_ba": ba.iter().map(|&(k, d)| json!({"k": k, "d": d})).collect::<Vec<_>>(),
        }),
    )
}

fn cmd_sequence(a: &SequenceArgs, cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let ks = cfg.ks_or(&(1..=a.kmax).collect::<Vec<_>>());
    let params = shape_params(None, cfg, 0)?;
    let mut seq = Vec::with_capacity(a.inputs.len());
    for p in &a.inputs {
        let (m, is_graph) = io::read_source(p)?;
        if is_graph && !(m.gamma() > 0.0) {
            return Err(CliError::bad(format!("{}: graph has no edges", p.display())));
        }
        seq.push(if is_graph { m.normalized() } else { m });
    }
    let g0 = seq[0].gamma();
    if let Some(i) = seq.iter().position(|s| (s.gamma() - g0).abs() > 1e-6 * (1.0 + g0)) {
        return Err(CliError::bad(format!("{} has mass {}, the first input has {g0}", a.inputs[i].display(), seq[i].gamma())));
    }
    let clouds: Vec<Vec<ShapeCloud>> = seq
        .iter()
        .map(|s| ks.iter().map(|&k| shape_of(s, k, params)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    let mut per_k = Vec::new();
    for (ki, &k) in ks.iter().enumerate() {
        let dists = (1..clouds.len())
            .map(|i| hausdorff_l1(&clouds[i - 1][ki], &clouds[i][ki]).map(|h| h.symmetric))
            .collect::<Result<Vec<_>, _>>()?;
        let monotone = dists.windows(2).all(|w| w[1] <= w[0]);
        per_k.push((k, dists, monotone));
    }
    let k_max = *ks.iter().max().expect("nonempty");
    let full: Vec<usize> = (1..=k_max).collect();
    let ds = if ks == full {
        (1..clouds.len())
            .map(|i| ds_metric(&clouds[i - 1], &clouds[i], k_max).map(|d| json!({"value": d.value, "truncation_bound": d.truncation_bound})))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    if cfg.output_format == OutputFormat::Csv {
        let mut text = String::from("k,pair,distance\n");
        for (k, dists, _) in &per_k {
            for (i, d) in dists.iter().enumerate() {
                text.push_str(&format!("{k},{i},{d}\n"));
            }
        }
        return emit(out, &text);
    }
    emit_json(
        out,
        &json!({
            "inputs": a.inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "per_k": per_k.iter().map(|(k, d, m)| json!({"k": k, "distances": d, "non_increasing": m})).collect::<Vec<_>>(),
            "ds": ds,
            "seed": cfg.seed,
            "samples": cfg.samples,
            "sampler_version": SAMPLER_VERSION,
        }),
    )
}
