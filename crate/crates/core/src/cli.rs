//! The `neuron-io` command line.
//!
//! Every subcommand writes a run manifest (tool version, parameters, input
//! and output checksums, timings) next to its main output, or to
//! `--manifest`. Exit codes: 1 usage, 2 data, 3 numerical.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, ErrorKind, Result};
use crate::lens::{project_neuron, Basis, Direction, WeightVector};
use crate::report::{render, PlotData, PlotKind, PlotSpec, DEFAULT_DOWNSAMPLE};
use crate::roles::{assign_roles, read_role_records, RoleParams};
use crate::simulator::Scenario;
use crate::stats::{tau_sensitivity, Report};
use crate::taxonomy::{classify_model, ClassificationTable, Tau};
use crate::weights::{load_model, load_vocab, LoadOptions, ModelWeights, NeuronId};

#[derive(Debug, Parser)]
#[command(
    name = "neuron-io",
    version,
    about = "Weight-based IO classification of gated MLP neurons"
)]
pub struct Cli {
    /// Manifest path (default: `<out>.manifest.json`).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify every MLP neuron of a model.
    Classify(ClassifyArgs),
    /// Summarize a classes CSV into a JSON report.
    Stats(StatsArgs),
    /// Assign output-weight functional roles.
    Roles(RolesArgs),
    /// Project a neuron weight vector onto the vocabulary.
    Project(ProjectArgs),
    /// Render a figure as SVG with a companion CSV.
    Plot(PlotArgs),
    /// Run a single gated neuron on given inputs.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub model_dir: PathBuf,
    /// llama, qwen, olmo, gemma or generic.
    #[arg(long, default_value = "generic")]
    pub preset: String,
    /// Tensor-name mapping JSON for the generic preset.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Fold the pre-MLP norm gain into the reading weights.
    #[arg(long)]
    pub fold_norm: bool,
    /// Model name for outputs (default: directory name).
    #[arg(long)]
    pub name: Option<String>,
}

impl ModelArgs {
    fn options(&self) -> LoadOptions {
        LoadOptions {
            mapping: self.mapping.clone(),
            fold_norm: self.fold_norm,
            name: self.name.clone(),
            ..LoadOptions::default()
        }
    }

    fn params(&self) -> Value {
        json!({
            "model_dir": self.model_dir,
            "preset": self.preset,
            "mapping": self.mapping,
            "fold_norm": self.fold_norm,
        })
    }
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub classes: PathBuf,
    /// Roles CSV for the contingency table.
    #[arg(long)]
    pub roles: Option<PathBuf>,
    /// Overrides the threshold recorded in the classes manifest.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Overrides the model name recorded in the classes manifest.
    #[arg(long = "model")]
    pub model_name: Option<String>,
    /// Comma-separated thresholds to reclassify at, reported as label totals.
    #[arg(long, value_delimiter = ',')]
    pub sensitivity: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RolesArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value_t = 1000)]
    pub partition_n: usize,
    #[arg(long, default_value_t = 40)]
    pub null_k: usize,
    #[arg(long, default_value_t = 2)]
    pub entropy_n: usize,
    #[arg(long, default_value_t = std::f64::consts::FRAC_1_SQRT_2)]
    pub attention_cutoff: f64,
    #[arg(long)]
    pub kurtosis_floor: Option<f64>,
    /// k_BOS sidecar JSON, `{"layer.head": [..]}`.
    #[arg(long)]
    pub bos_keys: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Neuron as `layer.index`.
    #[arg(long)]
    pub neuron: NeuronId,
    #[arg(long, default_value = "out")]
    pub vector: WeightVector,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[arg(long, default_value = "unembed")]
    pub basis: Basis,
    #[arg(long, default_value = "positive")]
    pub direction: Direction,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Output JSON (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub kind: PlotKind,
    /// Report JSON (bars, box, medians; repeat for medians) or classes CSV
    /// (scatter).
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated layer selection.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    #[arg(long, default_value_t = DEFAULT_DOWNSAMPLE)]
    pub downsample: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model name for scatter plots (default: from the classes manifest).
    #[arg(long = "model")]
    pub model_name: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output JSON (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub parameters: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Seconds per phase.
    pub timings: Vec<(String, f64)>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            parameters: Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
        }
    }

    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.timings.push((phase.into(), start.elapsed().as_secs_f64()));
        Ok(out)
    }

    /// Digests a file, or every regular file of a directory in name order.
    fn input(&mut self, path: &Path) -> Result<()> {
        if path.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            for f in files {
                self.inputs.push(digest(&f)?);
            }
        } else {
            self.inputs.push(digest(path)?);
        }
        Ok(())
    }

    fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(digest(path)?);
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn digest(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: sha256_file(path)?,
    })
}

/// `fig.svg` -> `fig.svg.manifest.json`.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))
}

/// JSON to a file or, without a path, to stdout.
fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, value)?;
            writeln!(lock).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

/// Model name and threshold recorded by the `classify` run that wrote
/// `classes`, if its manifest sits next to it.
fn classes_provenance(classes: &Path) -> (Option<String>, Option<f64>) {
    let Ok(m) = read_json::<RunManifest>(&manifest_path_for(classes)) else {
        return (None, None);
    };
    (
        m.parameters.get("model").and_then(Value::as_str).map(str::to_string),
        m.parameters.get("tau").and_then(Value::as_f64),
    )
}

fn load_classes(path: &Path, model: Option<String>, tau: Option<f64>) -> Result<ClassificationTable> {
    let (recorded_model, recorded_tau) = classes_provenance(path);
    let model = model.or(recorded_model).unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let tau = Tau::new(tau.or(recorded_tau).unwrap_or(Tau::DEFAULT.get()))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ClassificationTable::read_csv(BufReader::new(file), model, tau)
}

fn load(args: &ModelArgs, options: LoadOptions, manifest: &mut RunManifest) -> Result<ModelWeights> {
    manifest.input(&args.model_dir)?;
    if let Some(m) = &args.mapping {
        manifest.input(m)?;
    }
    manifest.time("load", || load_model(&args.model_dir, &args.preset, &options))
}

fn classify(args: &ClassifyArgs, manifest: &mut RunManifest) -> Result<PathBuf> {
    let tau = Tau::new(args.tau)?;
    let model = load(&args.model, args.model.options(), manifest)?;
    let table = manifest.time("classify", || Ok(classify_model(&model, tau)))?;
    let mut params = args.model.params();
    params["tau"] = json!(tau.get());
    params["model"] = json!(model.meta().name);
    manifest.parameters = params;
    manifest.time("write", || {
        let mut w = create(&args.out)?;
        table.write_csv(&mut w)?;
        w.flush().map_err(|e| Error::io(&args.out, e))
    })?;
    log::info!(
        "classified {} neurons ({} degenerate) of {}",
        table.len(),
        table.degenerate.len(),
        model.meta().name
    );
    Ok(args.out.clone())
}

fn stats(args: &StatsArgs, manifest: &mut RunManifest) -> Result<PathBuf> {
    manifest.input(&args.classes)?;
    let table = manifest.time("load", || {
        load_classes(&args.classes, args.model_name.clone(), args.tau)
    })?;
    let roles = match &args.roles {
        Some(p) => {
            manifest.input(p)?;
            let file = File::open(p).map_err(|e| Error::io(p, e))?;
            Some(read_role_records(BufReader::new(file))?)
        }
        None => None,
    };
    let taus = args
        .sensitivity
        .iter()
        .map(|&t| Tau::new(t))
        .collect::<Result<Vec<_>>>()?;
    let report = manifest.time("stats", || {
        let mut report = Report::build(&table, roles.as_deref())?;
        report.sensitivity = tau_sensitivity(&table, &taus);
        Ok(report)
    })?;
    manifest.parameters = json!({
        "classes": args.classes,
        "roles": args.roles,
        "model": table.model,
        "tau": table.tau.get(),
        "sensitivity": args.sensitivity,
    });
    manifest.time("write", || write_json(&args.out, &report))?;
    Ok(args.out.clone())
}

fn roles(args: &RolesArgs, manifest: &mut RunManifest) -> Result<PathBuf> {
    let tau = Tau::new(args.tau)?;
    let params = RoleParams {
        partition_n: args.partition_n,
        null_k: args.null_k,
        entropy_n: args.entropy_n,
        attention_cutoff: args.attention_cutoff,
        kurtosis_floor: args.kurtosis_floor,
    };
    if !(0.0..=1.0).contains(&params.attention_cutoff) {
        return Err(Error::InvalidParameter(format!(
            "attention cutoff must lie in [0, 1], got {}",
            params.attention_cutoff
        )));
    }
    let mut options = args.model.options();
    options.bos_keys = args.bos_keys.clone();
    if let Some(p) = &args.bos_keys {
        manifest.input(p)?;
    }
    let model = load(&args.model, options, manifest)?;
    let io = manifest.time("classify", || Ok(classify_model(&model, tau)))?;
    let table = manifest.time("roles", || assign_roles(&model, &io, &params))?;
    if !table.attention_available {
        log::warn!("no k_BOS sidecar: attention (de)activation roles not assigned");
    }
    let mut p = args.model.params();
    p["model"] = json!(model.meta().name);
    p["tau"] = json!(tau.get());
    p["roles"] = serde_json::to_value(&params)?;
    p["bos_keys"] = json!(args.bos_keys);
    p["variance_cutoff"] = json!(table.variance_cutoff);
    p["kurtosis_cutoff"] = json!(table.kurtosis_cutoff);
    p["counts"] = json!(table.counts());
    manifest.parameters = p;
    manifest.time("write", || {
        let mut w = create(&args.out)?;
        table.write_csv(&mut w)?;
        w.flush().map_err(|e| Error::io(&args.out, e))
    })?;
    Ok(args.out.clone())
}

fn project(args: &ProjectArgs, manifest: &mut RunManifest) -> Result<Option<PathBuf>> {
    manifest.input(&args.vocab)?;
    let vocab = load_vocab(&args.vocab)?;
    let model = load(&args.model, args.model.options(), manifest)?;
    let projection = manifest.time("project", || {
        project_neuron(
            &model,
            &vocab,
            args.neuron,
            args.vector,
            args.top_k,
            args.direction,
            args.basis,
        )
    })?;
    let mut p = args.model.params();
    p["neuron"] = json!(args.neuron);
    p["vector"] = json!(args.vector);
    p["top_k"] = json!(args.top_k);
    p["basis"] = json!(args.basis);
    p["direction"] = json!(args.direction);
    p["vocab"] = json!(args.vocab);
    manifest.parameters = p;
    emit_json(args.out.as_deref(), &projection)?;
    Ok(args.out.clone())
}

/// `fig.svg` -> `fig.csv`.
pub fn companion_csv(out: &Path) -> PathBuf {
    out.with_extension("csv")
}

fn plot(args: &PlotArgs, manifest: &mut RunManifest) -> Result<PathBuf> {
    let spec = PlotSpec {
        kind: args.kind,
        layers: args.layers.clone(),
        downsample: args.downsample,
        seed: args.seed,
    };
    for p in &args.inputs {
        manifest.input(p)?;
    }
    let figure = match args.kind {
        PlotKind::Scatter => {
            let [path] = args.inputs.as_slice() else {
                return Err(Error::InvalidParameter(
                    "scatter plot takes exactly one classes CSV".into(),
                ));
            };
            let table = load_classes(path, args.model_name.clone(), None)?;
            manifest.time("render", || render(&spec, PlotData::Classes(&table)))?
        }
        _ => {
            let reports = args
                .inputs
                .iter()
                .map(|p| read_json::<Report>(p))
                .collect::<Result<Vec<_>>>()?;
            manifest.time("render", || render(&spec, PlotData::Reports(&reports)))?
        }
    };
    let csv_path = companion_csv(&args.out);
    if csv_path == args.out {
        return Err(Error::InvalidParameter("plot output must not be a .csv file".into()));
    }
    manifest.parameters = serde_json::to_value(&spec)?;
    manifest.time("write", || {
        fs::write(&args.out, &figure.svg).map_err(|e| Error::io(&args.out, e))?;
        fs::write(&csv_path, &figure.csv).map_err(|e| Error::io(&csv_path, e))
    })?;
    manifest.output(&csv_path)?;
    Ok(args.out.clone())
}

fn simulate(args: &SimulateArgs, manifest: &mut RunManifest) -> Result<Option<PathBuf>> {
    manifest.input(&args.scenario)?;
    let scenario: Scenario = read_json(&args.scenario)?;
    let result = manifest.time("simulate", || scenario.run())?;
    manifest.parameters = json!({ "scenario": args.scenario });
    emit_json(args.out.as_deref(), &result)?;
    Ok(args.out.clone())
}

fn execute(cli: &Cli) -> Result<()> {
    let name = match &cli.command {
        Command::Classify(_) => "classify",
        Command::Stats(_) => "stats",
        Command::Roles(_) => "roles",
        Command::Project(_) => "project",
        Command::Plot(_) => "plot",
        Command::Simulate(_) => "simulate",
    };
    let mut manifest = RunManifest::new(name);
    let out = match &cli.command {
        Command::Classify(a) => Some(classify(a, &mut manifest)?),
        Command::Stats(a) => Some(stats(a, &mut manifest)?),
        Command::Roles(a) => Some(roles(a, &mut manifest)?),
        Command::Project(a) => project(a, &mut manifest)?,
        Command::Plot(a) => Some(plot(a, &mut manifest)?),
        Command::Simulate(a) => simulate(a, &mut manifest)?,
    };
    if let Some(out) = &out {
        manifest.outputs.insert(0, digest(out)?);
    }
    let path = match (&cli.manifest, &out) {
        (Some(p), _) => p.clone(),
        (None, Some(out)) => manifest_path_for(out),
        (None, None) => PathBuf::from(format!("neuron-io-{name}.manifest.json")),
    };
    write_json(&path, &manifest)
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("NEURON_IO_THREADS") else {
        return Ok(());
    };
    let n: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::InvalidParameter(format!("NEURON_IO_THREADS must be a positive integer, got `{value}`"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = configure_threads().and_then(|()| execute(&cli));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.kind())
        }
    }
}
