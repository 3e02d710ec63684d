//! Run configuration: a flat TOML table validated against a per-pipeline key list.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::PipelineError;

/// Batch pipelines, one per command-line verb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Nu,
    Fbi,
    Gevrey,
    Eig,
    Counterexample,
    Deform,
    Realize,
    Estimate,
}

impl Pipeline {
    pub const ALL: [Pipeline; 8] = [
        Self::Nu,
        Self::Fbi,
        Self::Gevrey,
        Self::Eig,
        Self::Counterexample,
        Self::Deform,
        Self::Realize,
        Self::Estimate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Nu => "nu",
            Self::Fbi => "fbi",
            Self::Gevrey => "gevrey",
            Self::Eig => "eig",
            Self::Counterexample => "counterexample",
            Self::Deform => "deform",
            Self::Realize => "realize",
            Self::Estimate => "estimate",
        }
    }

    /// Pipeline-specific keys with a one-line description each.
    pub fn keys(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Self::Nu => &[
                ("fields", "vector fields, e.g. \"X1 = d1; X2 = x1^2*d2\""),
                ("grushin_k", "use the Grushin system {ξ₁, x₁^{k−1}ξ₂} instead of `fields`"),
                ("point", "reference point (x; ξ) as 2n rationals; default (0; e_n)"),
                ("max_len", "bracket length budget"),
            ],
            Self::Fbi => &[
                ("input", "sampled function (.csv or .bin); alternative to `function`"),
                ("function", "built-in input: \"gaussian\" or \"delta\""),
                ("support", "half-width of the built-in input's support"),
                ("re", "real axis of the complex grid: [lo, hi, count]"),
                ("im", "imaginary axis of the complex grid: [lo, hi, count]"),
                ("lambdas", "geometric λ ladder: [lo, hi, count]"),
            ],
            Self::Gevrey => &[
                ("input", "sampled function (.csv or .bin); alternative to `function`"),
                ("function", "built-in input: \"gaussian\" or \"delta\""),
                ("support", "half-width of the built-in input's support"),
                ("re", "real axis of the complex grid: [lo, hi, count]"),
                ("im", "imaginary axis of the complex grid: [lo, hi, count]"),
                ("lambdas", "geometric λ ladder: [lo, hi, count]"),
                ("order", "Gevrey order s for the wave-front mask"),
                ("threshold", "decay constant c in m ≤ e^{−λ^{1/s}/c}"),
            ],
            Self::Eig => &[
                ("k", "potential x^{2(k−1)}"),
                ("count", "number of eigenpairs"),
                ("npoints", "odd number of grid points including the Dirichlet ends"),
                ("halfwidth", "half-width L of [−L, L]"),
                ("tol", "largest admissible eigen-residual"),
            ],
            Self::Counterexample => &[
                ("k", "order of the degenerate field"),
                ("eigen_index", "which eigenpair builds the solution"),
                ("rho_max", "upper end R of the ρ lattice"),
                ("rho_steps", "lattice intervals M"),
                ("x1_halfwidth", "x₁ ∈ [−X, X]"),
                ("n1", "odd number of x₁ samples"),
                ("n2", "x₂ samples per period"),
                ("tail_tol", "tolerance for the truncated ρ tail"),
                ("refine", "also build a refined solution and report its residual"),
            ],
            Self::Deform => &[
                ("n", "grid points per axis"),
                ("extent", "grid covers [−a, a]²"),
                ("generator", "\"quadratic\" or a symbol in x1, xi1"),
                ("center", "quadratic generator center (y₀, η₀)"),
                ("r", "λ-prefactor exponent: h carries λ^{−1/r}"),
                ("lambda", "large parameter λ"),
                ("t", "final time"),
                ("snapshots", "number of equally spaced snapshot times"),
                ("r_outer", "half-width of the box Ω"),
                ("r_inner", "half-width of the box Ω₁"),
            ],
            Self::Realize => &[
                ("check", "\"identity\" or \"elliptic\""),
                ("symbol", "symbol in x1 (for x) and xi1 (for w)"),
                ("order", "declared order in λ"),
                ("a", "half-width of the square box"),
                ("inner", "half-width of Ω₁"),
                ("lambdas", "list of λ values"),
                ("centers", "coherent states in the battery"),
                ("c", "weight constant C in Φ ± d²/C"),
                ("c0", "elliptic floor c₀"),
                ("resolution", "target λh²"),
            ],
            Self::Estimate => &[
                ("fields", "vector fields in two variables"),
                ("grushin_k", "use the Grushin system instead of `fields`"),
                ("periodization", "per axis: \"identity\", \"sin\" or \"one_minus_cos\""),
                ("xi0", "reference covector at x = 0"),
                ("n", "torus points per axis"),
                ("period", "torus periods per axis"),
                ("sobolev", "Sobolev exponent s; default 1/r"),
                ("theta", "order θ of the perturbation |D₂|^θ"),
                ("coupling", "coefficient c of the perturbation"),
                ("eigenvalue", "eigenvalue for the critical order, or \"auto\""),
                ("profile", "\"gaussian\" or \"eigen\""),
                ("eigen_index", "eigenpair for the eigen profile"),
                ("modes", "x₂ Fourier modes of the battery"),
                ("scaling", "packet scaling order; default r"),
            ],
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|p| p.name()).collect();
            PipelineError::config(format!("unknown pipeline '{s}'{}", suggestion(s, &names)))
        })
    }
}

/// Keys accepted by every pipeline.
pub const COMMON_KEYS: [(&str, &str); 4] = [
    ("pipeline", "pipeline name; must match the verb when both are given"),
    ("seed", "integer recorded in every output"),
    ("output", "output directory"),
    ("threads", "worker threads"),
];

/// `" (did you mean X?)"` for the closest candidate, or nothing.
pub fn suggestion(key: &str, candidates: &[&str]) -> String {
    candidates
        .iter()
        .map(|c| (strsim::damerau_levenshtein(key, c), *c))
        .filter(|&(d, c)| d <= 2.max(c.len() / 3))
        .min()
        .map_or(String::new(), |(_, c)| format!(" (did you mean {c}?)"))
}

/// A validated configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub pipeline: Pipeline,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    /// Pipeline parameters, input paths already resolved.
    pub params: toml::Table,
    /// Resolved input files.
    pub inputs: Vec<PathBuf>,
}

/// Overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl RunConfig {
    /// Parses TOML text. Relative input paths resolve against `base`.
    pub fn parse(verb: Option<Pipeline>, text: &str, base: &Path, ov: &Overrides) -> Result<Self, PipelineError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| PipelineError::config(format!("invalid TOML: {}", e.message())))?;
        Self::from_table(verb, table, base, ov)
    }

    pub fn load(verb: Option<Pipeline>, path: &Path, ov: &Overrides) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(verb, &text, &base, ov)
    }

    pub fn from_table(
        verb: Option<Pipeline>,
        mut table: toml::Table,
        base: &Path,
        ov: &Overrides,
    ) -> Result<Self, PipelineError> {
        let named = match table.remove("pipeline") {
            None => None,
            Some(toml::Value::String(s)) => Some(s.parse::<Pipeline>()?),
            Some(_) => return Err(PipelineError::config("key 'pipeline' must be a string")),
        };
        let pipeline = match (verb, named) {
            (Some(v), Some(n)) if v != n => {
                return Err(PipelineError::config(format!("config is for pipeline '{n}', verb is '{v}'")))
            }
            (Some(v), _) => v,
            (None, Some(n)) => n,
            (None, None) => return Err(PipelineError::config("no pipeline named in the config or on the command line")),
        };
        let known: Vec<&str> = COMMON_KEYS
            .iter()
            .chain(pipeline.keys())
            .map(|(k, _)| *k)
            .collect();
        for key in table.keys() {
            if !known.contains(&key.as_str()) {
                return Err(PipelineError::config(format!(
                    "unknown key '{key}' for pipeline '{pipeline}'{}",
                    suggestion(key, &known)
                )));
            }
        }
        let seed = match table.remove("seed") {
            None => 0,
            Some(toml::Value::Integer(i)) if i >= 0 => i as u64,
            Some(_) => return Err(PipelineError::config("key 'seed' must be a non-negative integer")),
        };
        let output = match table.remove("output") {
            None => None,
            Some(toml::Value::String(s)) => Some(base.join(s)),
            Some(_) => return Err(PipelineError::config("key 'output' must be a string")),
        };
        let threads = match table.remove("threads") {
            None => None,
            Some(toml::Value::Integer(i)) if i >= 1 => Some(i as usize),
            Some(_) => return Err(PipelineError::config("key 'threads' must be a positive integer")),
        };
        let mut inputs = Vec::new();
        if let Some(v) = table.get_mut("input") {
            let toml::Value::String(s) = v else {
                return Err(PipelineError::config("key 'input' must be a string"));
            };
            let path = base.join(&*s);
            if !path.is_file() {
                return Err(PipelineError::config(format!("input file {} does not exist", path.display())));
            }
            *s = path.to_string_lossy().into_owned();
            inputs.push(path);
        }
        let output_dir = ov
            .output
            .clone()
            .or(output)
            .unwrap_or_else(|| PathBuf::from(format!("out-{pipeline}")));
        Ok(Self {
            pipeline,
            seed: ov.seed.unwrap_or(seed),
            output_dir,
            threads: ov.threads.or(threads),
            params: table,
            inputs,
        })
    }

    pub(crate) fn params(&self) -> Params<'_> {
        Params(&self.params)
    }
}

/// Typed accessors over the parameter table.
pub(crate) struct Params<'a>(&'a toml::Table);

fn type_error(key: &str, want: &str) -> PipelineError {
    PipelineError::config(format!("key '{key}' must be {want}"))
}

fn as_f64(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

impl Params<'_> {
    pub fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>, PipelineError> {
        self.0
            .get(key)
            .map(|v| as_f64(v).filter(|x| x.is_finite()).ok_or_else(|| type_error(key, "a number")))
            .transpose()
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64, PipelineError> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>, PipelineError> {
        self.0
            .get(key)
            .map(|v| match v {
                toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                _ => Err(type_error(key, "a non-negative integer")),
            })
            .transpose()
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize, PipelineError> {
        Ok(self.opt_usize(key)?.unwrap_or(default))
    }

    pub fn opt_str(&self, key: &str) -> Result<Option<&str>, PipelineError> {
        self.0
            .get(key)
            .map(|v| v.as_str().ok_or_else(|| type_error(key, "a string")))
            .transpose()
    }

    pub fn str<'b>(&'b self, key: &str, default: &'b str) -> Result<&'b str, PipelineError> {
        Ok(self.opt_str(key)?.unwrap_or(default))
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool, PipelineError> {
        match self.0.get(key) {
            None => Ok(default),
            Some(toml::Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(type_error(key, "true or false")),
        }
    }

    pub fn opt_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, PipelineError> {
        let Some(v) = self.0.get(key) else { return Ok(None) };
        let arr = v.as_array().ok_or_else(|| type_error(key, "an array of numbers"))?;
        arr.iter()
            .map(|x| as_f64(x).filter(|x| x.is_finite()).ok_or_else(|| type_error(key, "an array of numbers")))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, PipelineError> {
        Ok(self.opt_f64_list(key)?.unwrap_or_else(|| default.to_vec()))
    }

    /// Array of exactly `n` numbers.
    pub fn f64_array<const N: usize>(&self, key: &str, default: [f64; N]) -> Result<[f64; N], PipelineError> {
        match self.opt_f64_list(key)? {
            None => Ok(default),
            Some(v) => v
                .try_into()
                .map_err(|_| type_error(key, &format!("an array of {N} numbers"))),
        }
    }

    /// Array of strings or numbers, kept as text (rationals such as "1/2").
    pub fn opt_text_list(&self, key: &str) -> Result<Option<Vec<String>>, PipelineError> {
        let Some(v) = self.0.get(key) else { return Ok(None) };
        let arr = v.as_array().ok_or_else(|| type_error(key, "an array"))?;
        arr.iter()
            .map(|x| match x {
                toml::Value::String(s) => Ok(s.clone()),
                toml::Value::Integer(i) => Ok(i.to_string()),
                _ => Err(type_error(key, "an array of integers or rational strings")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// `[lo, hi, count]` triple.
    pub fn span(&self, key: &str, default: (f64, f64, usize)) -> Result<(f64, f64, usize), PipelineError> {
        match self.opt_f64_list(key)? {
            None => Ok(default),
            Some(v) if v.len() == 3 && v[2] >= 1.0 && v[2].fract() == 0.0 => Ok((v[0], v[1], v[2] as usize)),
            Some(_) => Err(type_error(key, "[lo, hi, count] with an integer count")),
        }
    }
}
