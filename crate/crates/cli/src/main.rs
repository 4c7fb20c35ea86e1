use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use mstruct::constructions::{haagerup_space, min_tensor, HaagerupFile};
use mstruct::mideals::{
    classify_projection, classify_quotient_projection, column_structure_detect, lattice_join, lattice_meet,
    mvn_equivalent, polar_decompose, right_l_projection_test, CriterionResult, RecordFile,
};
use mstruct::multipliers::{
    discover_algebra, hermitian_defect, multiplier_norm, verify_adjointable, Decision, PresentationFile,
};
use mstruct::normcore::{map_cb_norm, Verdict};
use mstruct::opspace::{Element, MapFile, NormOracle, OpSpace, SpaceFile, SpaceMap, StandardKind};
use mstruct::paperlab::{self, SuiteReport};
use mstruct::{c, Config, Error, C64};

#[derive(Parser)]
#[command(name = "mstruct", version, about = "One-sided M-structure of finite-dimensional operator spaces")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Single config override `key=value`; may be repeated.
    #[arg(long = "set", global = true)]
    set: Vec<String>,
    /// Global seed for every stochastic search.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Json,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Build or inspect operator spaces.
    #[command(subcommand)]
    Space(SpaceCmd),
    /// Matrix norms of elements.
    #[command(subcommand)]
    Norm(NormCmd),
    /// Completely bounded norm of a map.
    Cbnorm(MapArgs),
    /// Left multipliers.
    #[command(subcommand)]
    Mul(MulCmd),
    /// Adjointable multiplier algebras.
    #[command(subcommand)]
    Alg(AlgCmd),
    /// Projections: classification, lattice, polar decomposition.
    #[command(subcommand)]
    Proj(ProjCmd),
    /// Dual-space tests.
    #[command(subcommand)]
    Dual(DualCmd),
    /// Tensor products.
    #[command(subcommand)]
    Tensor(TensorCmd),
    /// Registered example cases.
    #[command(subcommand)]
    Paperlab(LabCmd),
    /// Render stored reports.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Args)]
struct SpaceSource {
    /// Space file (`opspace/v1`).
    #[arg(long, conflicts_with = "standard")]
    space: Option<PathBuf>,
    /// Standard space: column:N, row:N, diag:N, full:PxQ, t2, wedge.
    #[arg(long)]
    standard: Option<String>,
}

#[derive(Subcommand)]
enum SpaceCmd {
    /// Validate a space and write its canonical file.
    Build {
        #[arg(long, conflicts_with = "standard")]
        file: Option<PathBuf>,
        #[arg(long)]
        standard: Option<String>,
        /// Replace X by C_n(X).
        #[arg(long)]
        column_over: Option<usize>,
    },
    Show {
        #[command(flatten)]
        src: SpaceSource,
    },
}

#[derive(Subcommand)]
enum NormCmd {
    /// Norm of an element at level n, coordinates given as JSON.
    Eval {
        #[command(flatten)]
        src: SpaceSource,
        #[arg(long, default_value_t = 1)]
        level: usize,
        #[arg(long)]
        coords: String,
    },
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    src: SpaceSource,
    /// Map file (`spacemap/v1`).
    #[arg(long)]
    map: PathBuf,
    /// Codomain space file, when different from the domain.
    #[arg(long)]
    codomain: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MulCmd {
    /// Multiplier norm bracket.
    Norm(MapArgs),
    /// Adjointability against the discovered algebra.
    Test(MapArgs),
    /// Hermitian defect over the time grid.
    Defect(MapArgs),
}

#[derive(Subcommand)]
enum AlgCmd {
    Discover {
        #[command(flatten)]
        src: SpaceSource,
    },
    /// Summarize a presentation file.
    Show {
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Side {
    Left,
    Right,
    Complete,
}

#[derive(Args)]
struct PairArgs {
    #[command(flatten)]
    src: SpaceSource,
    #[arg(long)]
    p: PathBuf,
    #[arg(long)]
    q: PathBuf,
}

#[derive(Subcommand)]
enum ProjCmd {
    Classify {
        #[command(flatten)]
        map: MapArgs,
        /// Verdict that decides the exit status.
        #[arg(long, value_enum, default_value_t = Side::Left)]
        side: Side,
        /// Level-1 test element as JSON coordinates; may be repeated.
        #[arg(long)]
        hint: Vec<String>,
        /// Classify on X / K instead, K spanned by these JSON coordinate vectors.
        #[arg(long)]
        kernel: Option<String>,
    },
    Meet(PairArgs),
    Join(PairArgs),
    Polar(MapArgs),
    Equiv(PairArgs),
    ColumnDetect {
        #[command(flatten)]
        src: SpaceSource,
    },
}

#[derive(Subcommand)]
enum DualCmd {
    /// Right L-projection test for the adjoint on the dual.
    Ltest(MapArgs),
}

#[derive(Subcommand)]
enum TensorCmd {
    /// X ⊗min M_k as a concrete space.
    Min {
        #[command(flatten)]
        src: SpaceSource,
        #[arg(long)]
        k: usize,
    },
    /// X ⊗h Y; optionally evaluates a level-1 element.
    Haagerup {
        /// Left factor file.
        #[arg(long)]
        left: PathBuf,
        /// Right factor file.
        #[arg(long)]
        right: PathBuf,
        #[arg(long)]
        coords: Option<String>,
    },
}

#[derive(Subcommand)]
enum LabCmd {
    List,
    Run {
        /// Case ids; all cases when empty.
        ids: Vec<String>,
    },
}

#[derive(Subcommand)]
enum ReportCmd {
    Render {
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    fn code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Inconclusive => 3,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
        }
    }

    fn from_decision(d: Decision) -> Self {
        match d {
            Decision::Yes => Status::Pass,
            Decision::No => Status::Fail,
            Decision::Inconclusive => Status::Inconclusive,
        }
    }

    fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

enum Output {
    Envelope { command: String, status: Status, result: Value },
    Suite(SuiteReport),
    Text(String),
}

type CliResult<T> = std::result::Result<T, Error>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    mstruct::par::init_threads_from_env();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Schema { pointer, .. } = &e {
                eprintln!("pointer: {pointer}");
            }
            ExitCode::from(match e {
                Error::Schema { .. } | Error::Input(_) | Error::UnknownCase(_) => 2,
                _ => 1,
            })
        }
    }
}

fn run(cli: &Cli) -> CliResult<u8> {
    let cfg = load_config(&cli.global)?;
    let output = dispatch(&cli.command, &cfg)?;
    let (text, code) = match output {
        Output::Text(s) => (s, 0),
        Output::Suite(r) => {
            let code = if r.all_passed() { 0 } else { 1 };
            let s = match cli.global.format {
                Format::Json => to_json(&r),
                Format::Table => paperlab::render_table(&r),
            };
            (s, code)
        }
        Output::Envelope { command, status, result } => {
            let env = json!({
                "schema": "report/v1",
                "command": command,
                "config": cfg,
                "status": status.name(),
                "result": result,
            });
            let s = match cli.global.format {
                Format::Json => to_json(&env),
                Format::Table => render_value(&env),
            };
            (s, status.code())
        }
    };
    emit(&text, cli.global.out.as_deref())?;
    Ok(code)
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    let mut s = text.to_string();
    if !s.ends_with('\n') {
        s.push('\n');
    }
    match out {
        Some(p) => std::fs::write(p, s).map_err(|e| Error::input(format!("{}: {e}", p.display()))),
        None => {
            print!("{s}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

// ------------------------------------------------------------------ config

fn load_config(g: &Global) -> CliResult<Config> {
    let mut pairs = Vec::new();
    if let Some(path) = &g.config {
        let text = read(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::input(format!("{}:{}: expected key = value", path.display(), lineno + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    for s in &g.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::input(format!("--set {s}: expected key=value")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = g.seed {
        pairs.push(("seed".into(), seed.to_string()));
    }
    apply_overrides(Config::default(), &pairs)
}

fn apply_overrides(base: Config, pairs: &[(String, String)]) -> CliResult<Config> {
    let mut v = serde_json::to_value(base).expect("config serializes");
    let obj = v.as_object_mut().expect("config is an object");
    for (k, raw) in pairs {
        if !obj.contains_key(k) {
            return Err(Error::schema(format!("/{k}"), "unknown config key"));
        }
        let val = match raw.as_str() {
            "none" | "null" => Value::Null,
            _ => serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone())),
        };
        let mut probe = obj.clone();
        probe.insert(k.clone(), val.clone());
        serde_json::from_value::<Config>(Value::Object(probe))
            .map_err(|e| Error::schema(format!("/{k}"), e.to_string()))?;
        obj.insert(k.clone(), val);
    }
    serde_json::from_value(v).map_err(|e| Error::schema("", e.to_string()))
}

// ------------------------------------------------------------------ inputs

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

fn read_json(path: &Path) -> CliResult<Value> {
    serde_json::from_str(&read(path)?).map_err(|e| Error::schema("", format!("{}: {e}", path.display())))
}

fn load_space_file(path: &Path) -> CliResult<OpSpace> {
    SpaceFile::from_value(&read_json(path)?)?.into_space()
}

fn parse_usize(s: &str, what: &str) -> CliResult<usize> {
    s.parse().map_err(|_| Error::input(format!("bad {what} in standard space: {s}")))
}

fn standard_space(spec: &str) -> CliResult<OpSpace> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let k = match kind {
        "column" => StandardKind::Column(parse_usize(arg, "size")?),
        "row" => StandardKind::Row(parse_usize(arg, "size")?),
        "diag" => StandardKind::Diag(parse_usize(arg, "size")?),
        "full" => {
            let (p, q) = arg
                .split_once('x')
                .ok_or_else(|| Error::input("full expects PxQ"))?;
            StandardKind::Full(parse_usize(p, "rows")?, parse_usize(q, "cols")?)
        }
        "t2" => StandardKind::UpperTriangular2,
        "wedge" => return Ok((*paperlab::wedge_space()).clone()),
        _ => return Err(Error::input(format!("unknown standard space {spec}"))),
    };
    OpSpace::standard(k)
}

fn space_from(file: Option<&Path>, standard: Option<&str>) -> CliResult<Arc<OpSpace>> {
    match (file, standard) {
        (Some(f), _) => Ok(Arc::new(load_space_file(f)?)),
        (None, Some(s)) => Ok(Arc::new(standard_space(s)?)),
        (None, None) => Err(Error::input("give a space file or --standard")),
    }
}

fn load_space(src: &SpaceSource) -> CliResult<Arc<OpSpace>> {
    space_from(src.space.as_deref(), src.standard.as_deref())
}

fn load_map_into(path: &Path, dom: &Arc<OpSpace>, cod: &Arc<OpSpace>) -> CliResult<SpaceMap> {
    let mf = MapFile::from_value(&read_json(path)?)?;
    if mf.domain != dom.label() {
        return Err(Error::schema("/domain", format!("map is on {}, space is {}", mf.domain, dom.label())));
    }
    if mf.codomain != cod.label() {
        return Err(Error::schema("/codomain", format!("map lands in {}, expected {}", mf.codomain, cod.label())));
    }
    if mf.rows != cod.dim() || mf.cols != dom.dim() {
        return Err(Error::schema("/rows", format!("expected a {}x{} matrix", cod.dim(), dom.dim())));
    }
    mf.into_map(dom.clone(), cod.clone())
}

fn load_map(a: &MapArgs) -> CliResult<SpaceMap> {
    let dom = load_space(&a.src)?;
    let cod = match &a.codomain {
        Some(p) => Arc::new(load_space_file(p)?),
        None => dom.clone(),
    };
    load_map_into(&a.map, &dom, &cod)
}

/// Coordinates as JSON: numbers or `[re, im]` pairs.
fn parse_coords(s: &str) -> CliResult<Vec<C64>> {
    let v: Value = serde_json::from_str(s).map_err(|e| Error::schema("", e.to_string()))?;
    coords_of_value(&v, "")
}

fn coords_of_value(v: &Value, ptr: &str) -> CliResult<Vec<C64>> {
    let arr = v.as_array().ok_or_else(|| Error::schema(ptr, "expected an array"))?;
    arr.iter()
        .enumerate()
        .map(|(i, e)| {
            if let Some(x) = e.as_f64() {
                return Ok(c(x, 0.0));
            }
            match e.as_array().map(|a| a.as_slice()) {
                Some([re, im]) => match (re.as_f64(), im.as_f64()) {
                    (Some(re), Some(im)) => Ok(c(re, im)),
                    _ => Err(Error::schema(format!("{ptr}/{i}"), "expected numbers")),
                },
                _ => Err(Error::schema(format!("{ptr}/{i}"), "expected a number or [re, im]")),
            }
        })
        .collect()
}

fn check_len(coords: &[C64], want: usize) -> CliResult<()> {
    if coords.len() != want {
        return Err(Error::schema("", format!("expected {want} coordinates, got {}", coords.len())));
    }
    Ok(())
}

fn matrix_json(m: &SpaceMap) -> Value {
    json!(m.to_file())
}

fn criteria_status(cs: &[CriterionResult]) -> Value {
    json!(cs)
}

// ------------------------------------------------------------------ commands

fn envelope(command: &str, status: Status, result: Value) -> Output {
    Output::Envelope { command: command.into(), status, result }
}

fn dispatch(cmd: &Command, cfg: &Config) -> CliResult<Output> {
    match cmd {
        Command::Space(SpaceCmd::Build { file, standard, column_over }) => {
            let mut x = (*space_from(file.as_deref(), standard.as_deref())?).clone();
            if let Some(n) = column_over {
                if *n == 0 {
                    return Err(Error::input("--column-over needs n >= 1"));
                }
                x = x.column_over(*n);
            }
            Ok(Output::Text(x.to_json()))
        }
        Command::Space(SpaceCmd::Show { src }) => {
            let x = load_space(src)?;
            Ok(envelope(
                "space show",
                Status::Pass,
                json!({"label": x.label(), "p": x.p(), "q": x.q(), "d": x.dim(), "shilov_flag": x.shilov_flag()}),
            ))
        }
        Command::Norm(NormCmd::Eval { src, level, coords }) => {
            let x = load_space(src)?;
            let v = parse_coords(coords)?;
            let n = (*level).max(1);
            check_len(&v, n * n * x.dim())?;
            Ok(envelope("norm eval", Status::Pass, json!({"level": n, "norm": x.norm(n, &v)})))
        }
        Command::Cbnorm(a) => {
            let m = load_map(a)?;
            let cert = map_cb_norm(&m, cfg)?;
            let status = if cert.verdict == Verdict::Inconclusive && !cert.agree {
                Status::Inconclusive
            } else {
                Status::Pass
            };
            Ok(envelope("cbnorm", status, json!(cert)))
        }
        Command::Mul(MulCmd::Norm(a)) => {
            let m = load_map(a)?;
            let r = multiplier_norm(&m, cfg)?;
            Ok(envelope("mul norm", Status::from_decision(r.is_multiplier), json!(r)))
        }
        Command::Mul(MulCmd::Test(a)) => {
            let m = load_map(a)?;
            let r = verify_adjointable(&m, cfg.detect_tol, cfg)?;
            Ok(envelope(
                "mul test",
                Status::from_decision(r.decision),
                json!({
                    "decision": r.decision,
                    "residual": r.residual,
                    "hermitian_defects": r.defects,
                    "adjoint": r.adjoint.as_ref().map(matrix_json),
                }),
            ))
        }
        Command::Mul(MulCmd::Defect(a)) => {
            let m = load_map(a)?;
            let r = hermitian_defect(&m, cfg)?;
            let d = r.decide(cfg.detect_tol);
            Ok(envelope("mul defect", Status::from_decision(d), json!({"decision": d, "defect": r})))
        }
        Command::Alg(AlgCmd::Discover { src }) => {
            let x = load_space(src)?;
            let pres = discover_algebra(&x, cfg)?;
            Ok(Output::Text(pres.to_json()))
        }
        Command::Alg(AlgCmd::Show { file }) => {
            let v = read_json(file)?;
            let pf: PresentationFile = typed(&v)?;
            if pf.schema != "presentation/v1" {
                return Err(Error::schema("/schema", "expected presentation/v1"));
            }
            let ranks: Vec<usize> = pf.blocks.iter().map(|b| b.rank).collect();
            Ok(envelope(
                "alg show",
                Status::Pass,
                json!({
                    "space": pf.space,
                    "dim": pf.dim,
                    "block_ranks": ranks,
                    "center_dim": pf.center.len(),
                    "defect": pf.defect,
                    "closure_residual": pf.closure_residual,
                }),
            ))
        }
        Command::Proj(ProjCmd::Classify { map, side, hint, kernel }) => proj_classify(map, *side, hint, kernel.as_deref(), cfg),
        Command::Proj(ProjCmd::Meet(a)) | Command::Proj(ProjCmd::Join(a)) => {
            let is_meet = matches!(cmd, Command::Proj(ProjCmd::Meet(_)));
            let (p, q, x) = load_pair(a)?;
            let pres = discover_algebra(&x, cfg)?;
            let r = if is_meet {
                lattice_meet(&p, &q, &pres, cfg)?
            } else {
                lattice_join(&p, &q, &pres, cfg)?
            };
            Ok(envelope(
                if is_meet { "proj meet" } else { "proj join" },
                Status::from_bool(r.spatial_ok),
                json!({
                    "projection": matrix_json(&r.projection),
                    "spatial_ok": r.spatial_ok,
                    "rank": r.rank,
                    "expected_rank": r.expected_rank,
                }),
            ))
        }
        Command::Proj(ProjCmd::Polar(a)) => {
            let t = load_map(a)?;
            let pres = discover_algebra(t.domain(), cfg)?;
            let r = polar_decompose(&t, &pres, cfg)?;
            let ok = r.identities_hold() && (!r.invertible || r.w_unitary);
            Ok(envelope(
                "proj polar",
                Status::from_bool(ok),
                json!({
                    "w": matrix_json(&r.w),
                    "abs": matrix_json(&r.abs),
                    "residual": r.residual,
                    "identities_hold": r.identities_hold(),
                    "invertible": r.invertible,
                    "w_unitary": r.w_unitary,
                    "w_partial_isometry": r.w_partial_isometry,
                }),
            ))
        }
        Command::Proj(ProjCmd::Equiv(a)) => {
            let (p, q, x) = load_pair(a)?;
            let pres = discover_algebra(&x, cfg)?;
            let r = mvn_equivalent(&p, &q, &pres, cfg)?;
            Ok(envelope(
                "proj equiv",
                Status::from_bool(r.equivalent),
                json!({
                    "equivalent": r.equivalent,
                    "block_ranks_p": r.ranks_p,
                    "block_ranks_q": r.ranks_q,
                    "partial_isometry": r.partial_isometry.as_ref().map(matrix_json),
                    "residual": if r.residual.is_finite() { json!(r.residual) } else { Value::Null },
                }),
            ))
        }
        Command::Proj(ProjCmd::ColumnDetect { src }) => {
            let x = load_space(src)?;
            let pres = discover_algebra(&x, cfg)?;
            match column_structure_detect(&pres, cfg)? {
                None => Ok(envelope("proj column-detect", Status::Fail, json!({"n": 1}))),
                Some(cs) => {
                    let ok = cs.certificate.is_isometry();
                    Ok(envelope(
                        "proj column-detect",
                        Status::from_bool(ok),
                        json!({
                            "n": cs.n,
                            "x0": serde_json::from_str::<Value>(&cs.x0.to_json()).expect("valid json"),
                            "map": matrix_json(&cs.map),
                            "certificate": cs.certificate,
                        }),
                    ))
                }
            }
        }
        Command::Dual(DualCmd::Ltest(a)) => {
            let p = load_map(a)?;
            let r = right_l_projection_test(&p, cfg)?;
            Ok(envelope(
                "dual ltest",
                Status::from_decision(r.decision),
                json!({
                    "decision": r.decision,
                    "nu_dual": r.nu_dual,
                    "mu_dual": r.mu_dual,
                    "probe_ratios": [r.probe_ratios.0, r.probe_ratios.1],
                    "left_m": r.left_m,
                }),
            ))
        }
        Command::Tensor(TensorCmd::Min { src, k }) => {
            let x = load_space(src)?;
            Ok(Output::Text(min_tensor(&x, *k)?.to_json()))
        }
        Command::Tensor(TensorCmd::Haagerup { left, right, coords }) => {
            let x = Arc::new(load_space_file(left)?);
            let y = Arc::new(load_space_file(right)?);
            let hs = haagerup_space(x, y, cfg)?;
            let file: HaagerupFile = hs.to_file();
            let mut result = json!({"space": file});
            if let Some(s) = coords {
                let v = parse_coords(s)?;
                check_len(&v, hs.dim())?;
                let b = hs.norm_bounds(1, &v)?;
                result["norm"] = json!(b);
            }
            Ok(envelope("tensor haagerup", Status::from_bool(hs.calibration().passed), result))
        }
        Command::Paperlab(LabCmd::List) => {
            let mut s = String::new();
            for (id, title) in paperlab::list_cases() {
                s.push_str(&format!("{id:<12} {title}\n"));
            }
            Ok(Output::Text(s))
        }
        Command::Paperlab(LabCmd::Run { ids }) => Ok(Output::Suite(paperlab::run_suite(ids, cfg)?)),
        Command::Report(ReportCmd::Render { file }) => {
            let v = read_json(file)?;
            if v.get("cases").is_some() {
                let r: SuiteReport = typed(&v)?;
                return Ok(Output::Text(paperlab::render_table(&r)));
            }
            if v.get("schema").and_then(Value::as_str) == Some("record/v1") {
                let r: RecordFile = typed(&v)?;
                return Ok(Output::Text(render_value(&json!(r))));
            }
            if v.get("schema").and_then(Value::as_str) != Some("report/v1") {
                return Err(Error::schema("/schema", "expected report/v1 or record/v1"));
            }
            Ok(Output::Text(render_value(&v)))
        }
    }
}

fn typed<T: serde::de::DeserializeOwned>(v: &Value) -> CliResult<T> {
    serde_path_to_error::deserialize(v.clone()).map_err(|e| {
        let ptr = e
            .path()
            .iter()
            .map(|seg| match seg {
                serde_path_to_error::Segment::Seq { index } => format!("/{index}"),
                serde_path_to_error::Segment::Map { key } => format!("/{key}"),
                serde_path_to_error::Segment::Enum { variant } => format!("/{variant}"),
                serde_path_to_error::Segment::Unknown => "/?".to_string(),
            })
            .collect::<String>();
        Error::schema(ptr, e.into_inner().to_string())
    })
}

fn load_pair(a: &PairArgs) -> CliResult<(SpaceMap, SpaceMap, Arc<OpSpace>)> {
    let x = load_space(&a.src)?;
    let p = load_map_into(&a.p, &x, &x)?;
    let q = load_map_into(&a.q, &x, &x)?;
    Ok((p, q, x))
}

fn proj_classify(a: &MapArgs, side: Side, hints: &[String], kernel: Option<&str>, cfg: &Config) -> CliResult<Output> {
    let p = load_map(a)?;
    let d = p.domain().dim();
    if let Some(k) = kernel {
        let v: Value = serde_json::from_str(k).map_err(|e| Error::schema("", e.to_string()))?;
        let arr = v.as_array().ok_or_else(|| Error::schema("", "expected an array of vectors"))?;
        let spans = arr
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let cs = coords_of_value(e, &format!("/{i}"))?;
                check_len(&cs, d)?;
                Ok(cs)
            })
            .collect::<CliResult<Vec<_>>>()?;
        let r = classify_quotient_projection(&p, &spans, cfg)?;
        return Ok(envelope(
            "proj classify",
            Status::from_decision(r.left_m),
            json!({"quotient": true, "left_m": r.left_m, "criteria": criteria_status(&r.criteria), "note": r.note}),
        ));
    }
    let elems = hints
        .iter()
        .map(|h| {
            let cs = parse_coords(h)?;
            check_len(&cs, d)?;
            Ok(Element::level1(cs))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let r = classify_projection(&p, cfg, &elems)?;
    let decision = match side {
        Side::Left => r.left_m,
        Side::Right => r.right_m,
        Side::Complete => r.complete_m,
    };
    Ok(envelope("proj classify", Status::from_decision(decision), json!(r.to_file())))
}

// ------------------------------------------------------------------ tables

fn render_value(v: &Value) -> String {
    let mut out = String::new();
    flatten(v, "", &mut out);
    out
}

fn flatten(v: &Value, prefix: &str, out: &mut String) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(x, &p, out);
            }
        }
        Value::Array(a) if a.iter().any(|x| x.is_object()) => {
            for (i, x) in a.iter().enumerate() {
                flatten(x, &format!("{prefix}[{i}]"), out);
            }
        }
        _ => out.push_str(&format!("{prefix:<40} {v}\n")),
    }
}
