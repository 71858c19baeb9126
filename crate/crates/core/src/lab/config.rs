//! INI-style run configuration.
//!
//! ```ini
//! [cost]            ; or [kernel], never both
//! family = quadratic
//! params = 1.0
//!
//! [bridge]
//! m = 400
//! tol = 1e-10
//!
//! [study]
//! n_list = 8, 12, 16
//!
//! [output]
//! csv_path = converge.csv
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::{Ini, Properties};

use crate::bridge::{DensitySource, Interpolation, SolverOptions};
use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::permanent::{PermanentConfig, PermanentMethod, DEFAULT_CAP};
use crate::spectral::DEFAULT_EIG_CUTOFF;
use crate::table::Table;

#[derive(Clone, Debug, PartialEq)]
pub enum CostSpec {
    Quadratic { beta: f64 },
    Absolute { beta: f64 },
    Tabulated { path: PathBuf },
    Custom { expression: String },
}

impl CostSpec {
    pub fn build(&self) -> Result<CostFunction> {
        match self {
            CostSpec::Quadratic { beta } => CostFunction::quadratic(*beta),
            CostSpec::Absolute { beta } => CostFunction::absolute(*beta),
            CostSpec::Tabulated { path } => CostFunction::tabulated_file(path),
            CostSpec::Custom { expression } => CostFunction::custom(expression),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    Constant,
    Cosine { epsilon: f64 },
    Tabulated { path: PathBuf },
}

impl KernelSpec {
    pub fn build(&self) -> Result<DensitySource> {
        match self {
            KernelSpec::Constant => Ok(DensitySource::constant()),
            KernelSpec::Cosine { epsilon } => DensitySource::cosine(*epsilon),
            KernelSpec::Tabulated { path } => Ok(DensitySource::tabulated(Table::from_file(path)?)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BridgeSettings {
    pub solver: SolverOptions,
    pub interpolation: Interpolation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudySettings {
    pub n_list: Vec<usize>,
    pub permanent: PermanentConfig,
    pub balance_tol: f64,
    pub balance_max_iter: usize,
    pub nystrom_m: usize,
    pub eig_cutoff: f64,
    pub refinement_tol: f64,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            n_list: vec![4, 8, 12],
            permanent: PermanentConfig::default(),
            balance_tol: 1e-12,
            balance_max_iter: 1000,
            nystrom_m: 256,
            eig_cutoff: DEFAULT_EIG_CUTOFF,
            refinement_tol: 1e-6,
            workers: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OutputSettings {
    pub csv_path: Option<PathBuf>,
    pub eigen_dump: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub cost: Option<CostSpec>,
    pub kernel: Option<KernelSpec>,
    pub bridge: BridgeSettings,
    pub study: StudySettings,
    pub output: OutputSettings,
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (name, _) in ini.iter() {
            match name {
                None | Some("cost" | "kernel" | "bridge" | "study" | "output") => {}
                Some(other) => return Err(Error::Config(format!("unknown section [{other}]"))),
            }
        }
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };

        let cost = match ini.section(Some("cost")) {
            None => None,
            Some(s) => Some(parse_cost(s, &resolve)?),
        };
        let kernel = match ini.section(Some("kernel")) {
            None => None,
            Some(s) => Some(parse_kernel(s, &resolve)?),
        };
        if cost.is_some() && kernel.is_some() {
            return Err(Error::Config("give either a [cost] or a [kernel] block, not both".into()));
        }

        let mut bridge = BridgeSettings::default();
        if let Some(s) = ini.section(Some("bridge")) {
            let sec = "bridge";
            set(s, sec, "m", &mut bridge.solver.m)?;
            set(s, sec, "tol", &mut bridge.solver.tol)?;
            set(s, sec, "max_iter", &mut bridge.solver.max_iter)?;
            set(s, sec, "damping", &mut bridge.solver.damping)?;
            set(s, sec, "exponent_bound", &mut bridge.solver.exponent_bound)?;
            if let Some(v) = s.get("interpolation") {
                bridge.interpolation = match v.trim() {
                    "nystrom" => Interpolation::Nystrom,
                    "linear" => Interpolation::Linear,
                    other => return Err(Error::Config(format!("[bridge] unknown interpolation {other:?}"))),
                };
            }
        }

        let mut study = StudySettings::default();
        if let Some(s) = ini.section(Some("study")) {
            let sec = "study";
            if let Some(v) = s.get("n_list") {
                study.n_list = parse_list(v).map_err(|e| Error::Config(format!("[study] n_list: {e}")))?;
            }
            set(s, sec, "permanent_cap", &mut study.permanent.cap)?;
            set(s, sec, "balance_tol", &mut study.balance_tol)?;
            set(s, sec, "balance_max_iter", &mut study.balance_max_iter)?;
            set(s, sec, "nystrom_m", &mut study.nystrom_m)?;
            set(s, sec, "eig_cutoff", &mut study.eig_cutoff)?;
            set(s, sec, "refinement_tol", &mut study.refinement_tol)?;
            set(s, sec, "workers", &mut study.workers)?;
            if let Some(v) = s.get("permanent_method") {
                study.permanent.method = match v.trim() {
                    "glynn" => PermanentMethod::Glynn,
                    "ryser" => PermanentMethod::Ryser,
                    other => return Err(Error::Config(format!("[study] unknown permanent_method {other:?}"))),
                };
            }
        }
        if study.n_list.is_empty() || study.n_list.contains(&0) {
            return Err(Error::Config("[study] n_list must be nonempty and positive".into()));
        }
        if study.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("[study] n_list must be strictly increasing".into()));
        }
        if study.permanent.cap == 0 {
            study.permanent.cap = DEFAULT_CAP;
        }

        let mut output = OutputSettings::default();
        if let Some(s) = ini.section(Some("output")) {
            output.csv_path = s.get("csv_path").map(|p| resolve(p.trim()));
            set(s, "output", "eigen_dump", &mut output.eigen_dump)?;
        }
        Ok(Self { cost, kernel, bridge, study, output })
    }

    pub fn require_cost(&self) -> Result<&CostSpec> {
        self.cost.as_ref().ok_or_else(|| Error::Config("missing [cost] block".into()))
    }

    /// Every `n` in the study list must fit under the permanent cap.
    pub fn check_cap(&self) -> Result<()> {
        let cap = self.study.permanent.cap;
        match self.study.n_list.iter().find(|&&n| n > cap) {
            Some(n) => Err(Error::Config(format!("[study] n = {n} exceeds permanent_cap = {cap}"))),
            None => Ok(()),
        }
    }
}

fn set<T: FromStr>(s: &Properties, section: &str, key: &str, slot: &mut T) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = s.get(key) {
        *slot = v.trim().parse().map_err(|e| Error::Config(format!("[{section}] {key} = {v:?}: {e}")))?;
    }
    Ok(())
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

fn parse_cost(s: &Properties, resolve: &dyn Fn(&str) -> PathBuf) -> Result<CostSpec> {
    let family = s.get("family").ok_or_else(|| Error::Config("[cost] missing family".into()))?.trim();
    let beta = || -> Result<f64> {
        let params: Vec<f64> = match s.get("params") {
            Some(v) => parse_list(v).map_err(|e| Error::Config(format!("[cost] params: {e}")))?,
            None => vec![1.0],
        };
        params.first().copied().ok_or_else(|| Error::Config("[cost] params must hold the inverse temperature".into()))
    };
    Ok(match family {
        "quadratic" => CostSpec::Quadratic { beta: beta()? },
        "absolute" => CostSpec::Absolute { beta: beta()? },
        "tabulated" => CostSpec::Tabulated {
            path: resolve(
                s.get("path").ok_or_else(|| Error::Config("[cost] tabulated family needs path".into()))?.trim(),
            ),
        },
        "custom" => CostSpec::Custom {
            expression: s
                .get("expression")
                .ok_or_else(|| Error::Config("[cost] custom family needs expression".into()))?
                .trim()
                .to_string(),
        },
        other => return Err(Error::Config(format!("[cost] unknown family {other:?}"))),
    })
}

fn parse_kernel(s: &Properties, resolve: &dyn Fn(&str) -> PathBuf) -> Result<KernelSpec> {
    let kind = s.get("kind").ok_or_else(|| Error::Config("[kernel] missing kind".into()))?.trim();
    Ok(match kind {
        "constant" => KernelSpec::Constant,
        "cosine" => {
            let mut epsilon = 0.5;
            set(s, "kernel", "epsilon", &mut epsilon)?;
            KernelSpec::Cosine { epsilon }
        }
        "tabulated" => KernelSpec::Tabulated {
            path: resolve(
                s.get("path").ok_or_else(|| Error::Config("[kernel] tabulated kind needs path".into()))?.trim(),
            ),
        },
        other => return Err(Error::Config(format!("[kernel] unknown kind {other:?}"))),
    })
}
