//! Batch runs: configuration, execution, output bookkeeping and plot data.
//!
//! A run writes its artifacts into one directory together with
//! `manifest.json`, which lists the SHA-256 of every input and output file.
//! If any step fails, every file the run created is removed again.

mod config;
mod plot;
mod runners;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{suggestion, Overrides, Pipeline, RunConfig, COMMON_KEYS};
pub use plot::{emit_plot_data, PlotFile, PlotSeries};

use crate::counterexample::CounterexampleError;
use crate::deformation::DeformError;
use crate::estimates::EstimateError;
use crate::fbi::FbiError;
use crate::gevrey::GevreyError;
use crate::realization::RealizationError;
use crate::spectral::SpectralError;
use crate::symbolic::SymbolicError;

/// Version tag of the manifest layout.
pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{module}: {message}\n  hint: {hint}")]
    Input {
        module: &'static str,
        message: String,
        hint: &'static str,
    },
    #[error("{module}: numerical failure: {message}\n  hint: {hint}")]
    Numerical {
        module: &'static str,
        message: String,
        hint: &'static str,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    /// 1 for bad input, 2 for a numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Numerical { .. } => 2,
            _ => 1,
        }
    }

    fn input(module: &'static str, e: impl ToString, hint: &'static str) -> Self {
        Self::Input {
            module,
            message: e.to_string(),
            hint,
        }
    }

    fn numerical(module: &'static str, e: impl ToString, hint: &'static str) -> Self {
        Self::Numerical {
            module,
            message: e.to_string(),
            hint,
        }
    }
}

impl From<SymbolicError> for PipelineError {
    fn from(e: SymbolicError) -> Self {
        Self::input("symbolic", e, "check the field syntax against docs/field-grammar.md")
    }
}

impl From<FbiError> for PipelineError {
    fn from(e: FbiError) -> Self {
        match e {
            FbiError::Unresolved { .. } => {
                Self::numerical("fbi", e, "refine the sample grid or lower the largest lambda")
            }
            FbiError::SupportTouchesBoundary { .. } => Self::input("fbi", e, "pad the sample grid around the support"),
            _ => Self::input("fbi", e, "check the input file and the grid/lambda parameters"),
        }
    }
}

impl From<GevreyError> for PipelineError {
    fn from(e: GevreyError) -> Self {
        match e {
            GevreyError::FasterThanMeasurable { .. } | GevreyError::NonPositive(_) => {
                Self::numerical("gevrey", e, "shorten the lambda ladder or move probes closer to the real axis")
            }
            _ => Self::input("gevrey", e, "use at least six lambdas and an order s ≥ 1"),
        }
    }
}

impl From<SpectralError> for PipelineError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::InvalidInput(_) => Self::input("spectral", e, "k ≥ 2, count ≥ 1, odd npoints"),
            _ => Self::numerical("spectral", e, "raise npoints or halfwidth"),
        }
    }
}

impl From<CounterexampleError> for PipelineError {
    fn from(e: CounterexampleError) -> Self {
        match e {
            CounterexampleError::Fbi(inner) => inner.into(),
            CounterexampleError::ToleranceNotMet { .. }
            | CounterexampleError::SliceZero { .. }
            | CounterexampleError::TooFewSamples(_) => {
                Self::numerical("counterexample", e, "raise rho_max or the number of samples")
            }
            _ => Self::input("counterexample", e, "check the lattice and grid parameters"),
        }
    }
}

impl From<DeformError> for PipelineError {
    fn from(e: DeformError) -> Self {
        match e {
            DeformError::Fbi(inner) => inner.into(),
            DeformError::Unstable { .. } | DeformError::MonotonicityViolated { .. } => {
                Self::numerical("deformation", e, "shorten t; nonlinear generators blow up in finite time")
            }
            _ => Self::input("deformation", e, "check the grid, generator and domain boxes"),
        }
    }
}

impl From<RealizationError> for PipelineError {
    fn from(e: RealizationError) -> Self {
        match e {
            RealizationError::Domain(inner) => inner.into(),
            RealizationError::Resolution { .. } => {
                Self::numerical("realization", e, "lower `resolution` or the largest lambda")
            }
            RealizationError::Polarization(_)
            | RealizationError::ExpansionOverflow(_)
            | RealizationError::NotElliptic { .. }
            | RealizationError::NonFiniteSymbol => {
                Self::numerical("realization", e, "check the symbol on the box and the weight")
            }
            _ => Self::input("realization", e, "check the symbol, box and battery parameters"),
        }
    }
}

impl From<EstimateError> for PipelineError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::Symbolic(inner) => inner.into(),
            _ => Self::input("estimates", e, "check the periodization, torus and battery"),
        }
    }
}

/// One file recorded in the manifest.
#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct FileEntry {
    /// Relative to the output directory for outputs, as given for inputs.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub format: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub pipeline: Pipeline,
    pub seed: u64,
    pub threads: usize,
    pub parameters: toml::Table,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub wall_time_seconds: f64,
}

impl Manifest {
    pub fn output(&self, name: &str) -> Option<&FileEntry> {
        self.outputs.iter().find(|f| f.path == name)
    }
}

/// Result of a successful run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    /// One-line human-readable result.
    pub summary: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects output files, removing them again unless committed.
pub(crate) struct Outputs {
    dir: PathBuf,
    created_dirs: Vec<PathBuf>,
    files: Vec<(PathBuf, FileEntry)>,
    committed: bool,
    pub(crate) seed: u64,
    pub(crate) pipeline: Pipeline,
    pub(crate) series: Vec<PlotSeries>,
}

impl Outputs {
    fn new(dir: &Path, pipeline: Pipeline, seed: u64) -> Result<Self, PipelineError> {
        let mut created_dirs = Vec::new();
        let mut missing = Vec::new();
        let mut d = dir.to_path_buf();
        while !d.as_os_str().is_empty() && !d.exists() {
            missing.push(d.clone());
            match d.parent() {
                Some(p) => d = p.to_path_buf(),
                None => break,
            }
        }
        fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        created_dirs.extend(missing);
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dirs,
            files: Vec::new(),
            committed: false,
            seed,
            pipeline,
            series: Vec::new(),
        })
    }

    pub(crate) fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            if !parent.exists() {
                fs::create_dir_all(parent).map_err(|source| PipelineError::Io {
                    path: parent.to_path_buf(),
                    source,
                })?;
                self.created_dirs.insert(0, parent.to_path_buf());
            }
        }
        let io = |source| PipelineError::Io {
            path: path.clone(),
            source,
        };
        let mut f = fs::File::create(&path).map_err(io)?;
        // Record before writing so a failed write is still cleaned up.
        self.files.push((
            path.clone(),
            FileEntry {
                path: name.to_string(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            },
        ));
        f.write_all(bytes).map_err(io)?;
        Ok(())
    }

    /// Pretty JSON with a trailing newline; the seed is added to objects.
    pub(crate) fn json(&mut self, name: &str, value: serde_json::Value) -> Result<(), PipelineError> {
        let mut value = value;
        if let serde_json::Value::Object(m) = &mut value {
            m.insert("seed".into(), self.seed.into());
            m.insert("pipeline".into(), self.pipeline.name().into());
        }
        let mut text = serde_json::to_string_pretty(&value).expect("JSON values serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub(crate) fn plot(&mut self, series: PlotSeries) {
        self.series.push(series);
    }

    fn entries(&self) -> Vec<FileEntry> {
        self.files.iter().map(|(_, e)| e.clone()).collect()
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for (path, _) in &self.files {
            let _ = fs::remove_file(path);
        }
        let _ = fs::remove_file(self.dir.join("manifest.json"));
        for d in &self.created_dirs {
            let _ = fs::remove_dir(d);
        }
    }
}

fn input_entry(path: &Path) -> Result<FileEntry, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::config(format!("cannot read input {}: {e}", path.display())))?;
    Ok(FileEntry {
        path: path.to_string_lossy().into_owned(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Executes `config`, writing outputs, plot data and the manifest.
pub fn run(config: &RunConfig) -> Result<RunOutcome, PipelineError> {
    let start = Instant::now();
    let threads = config.threads.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::config(format!("cannot start {threads} threads: {e}")))?;
    let inputs = config.inputs.iter().map(|p| input_entry(p)).collect::<Result<Vec<_>, _>>()?;
    let mut out = Outputs::new(&config.output_dir, config.pipeline, config.seed)?;
    let summary = pool.install(|| runners::dispatch(config, &mut out))?;
    let series = std::mem::take(&mut out.series);
    for file in emit_plot_data(&series, config.pipeline, config.seed) {
        out.write(&file.name, file.contents.as_bytes())?;
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        tool: "microlocal",
        version: env!("CARGO_PKG_VERSION"),
        pipeline: config.pipeline,
        seed: config.seed,
        threads,
        parameters: config.params.clone(),
        inputs,
        outputs: out.entries(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    let manifest_path = config.output_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|source| PipelineError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    out.committed = true;
    Ok(RunOutcome {
        manifest,
        manifest_path,
        summary,
    })
}
