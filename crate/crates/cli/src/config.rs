use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;
use splatlbo::laplacian::SplatLaplacianOptions;
use splatlbo::spectral::{EigenOptions, DEFAULT_ZERO_TOL};
use splatlbo::{Metric, NormalSource};

/// Bad arguments or configuration; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub k_neighbors: usize,
    pub metric: Metric,
    pub normal_source: NormalSource,
    pub k_eigen: usize,
    pub k_smooth: usize,
    pub heat_c: f64,
    pub seed: u64,
    pub keep_components: usize,
    pub opacity_min: f64,
    pub eigen_tol: f64,
    pub zero_tol: f64,
    pub drift_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 8,
            metric: Metric::Mahalanobis,
            normal_source: NormalSource::Covariance,
            k_eigen: 100,
            k_smooth: splatlbo::apps::smoothing::DEFAULT_K_SMOOTH,
            heat_c: 1.0,
            seed: 0,
            keep_components: 1,
            opacity_min: 0.0,
            eigen_tol: 1e-10,
            zero_tol: DEFAULT_ZERO_TOL,
            drift_threshold: 0.01,
        }
    }
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Key-value config file (`key = value` per line, `#` comments)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<std::path::PathBuf>,
    /// Neighbors per splat in the kNN graph
    #[arg(long, global = true)]
    pub k_neighbors: Option<usize>,
    /// Neighbor ranking: mahalanobis or euclidean
    #[arg(long, global = true)]
    pub metric: Option<Metric>,
    /// Splat normals: covariance or pca
    #[arg(long, global = true)]
    pub normal_source: Option<NormalSource>,
    /// Number of eigenpairs
    #[arg(long, global = true)]
    pub k_eigen: Option<usize>,
    /// Eigenfunctions kept by smoothing
    #[arg(long, global = true)]
    pub k_smooth: Option<usize>,
    /// Heat time factor, t = c h^2
    #[arg(long, global = true)]
    pub heat_c: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Connected components kept by filtering
    #[arg(long, global = true)]
    pub keep_components: Option<usize>,
    /// Drop splats below this opacity before graph construction (0 = off)
    #[arg(long, global = true)]
    pub opacity_min: Option<f64>,
    /// Relative Ritz residual tolerance of the eigensolver
    #[arg(long, global = true)]
    pub eigen_tol: Option<f64>,
    /// Eigenvalues below this fraction of the largest count as zero
    #[arg(long, global = true)]
    pub zero_tol: Option<f64>,
    /// Monitor drift threshold
    #[arg(long, global = true)]
    pub drift_threshold: Option<f64>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| usage(format!("config line {line}: bad value `{value}` for `{key}`: {e}")))
}

impl RunConfig {
    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {line_no}: expected `key = value`")))?;
            let key = key.trim().replace('-', "_");
            let value = value.trim();
            match key.as_str() {
                "k_neighbors" => self.k_neighbors = parse_value(&key, value, line_no)?,
                "metric" => self.metric = parse_value(&key, value, line_no)?,
                "normal_source" => self.normal_source = parse_value(&key, value, line_no)?,
                "k_eigen" => self.k_eigen = parse_value(&key, value, line_no)?,
                "k_smooth" => self.k_smooth = parse_value(&key, value, line_no)?,
                "heat_c" => self.heat_c = parse_value(&key, value, line_no)?,
                "seed" => self.seed = parse_value(&key, value, line_no)?,
                "keep_components" => self.keep_components = parse_value(&key, value, line_no)?,
                "opacity_min" => self.opacity_min = parse_value(&key, value, line_no)?,
                "eigen_tol" => self.eigen_tol = parse_value(&key, value, line_no)?,
                "zero_tol" => self.zero_tol = parse_value(&key, value, line_no)?,
                "drift_threshold" => self.drift_threshold = parse_value(&key, value, line_no)?,
                other => return Err(usage(format!("config line {line_no}: unknown key `{other}`"))),
            }
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(|e| usage(format!("{e:#}")))?;
        self.apply_text(&text)
    }

    pub fn apply_flags(&mut self, a: &ConfigArgs) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = a.$f.clone() { self.$f = v; })* };
        }
        set!(
            k_neighbors,
            metric,
            normal_source,
            k_eigen,
            k_smooth,
            heat_c,
            seed,
            keep_components,
            opacity_min,
            eigen_tol,
            zero_tol,
            drift_threshold
        );
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k_neighbors", self.k_neighbors),
            ("k_eigen", self.k_eigen),
            ("k_smooth", self.k_smooth),
            ("keep_components", self.keep_components),
        ] {
            if v == 0 {
                return Err(usage(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("heat_c", self.heat_c),
            ("eigen_tol", self.eigen_tol),
            ("zero_tol", self.zero_tol),
            ("drift_threshold", self.drift_threshold),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(usage(format!("{name} must be a positive number, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.opacity_min) {
            return Err(usage(format!("opacity_min must be in [0, 1], got {}", self.opacity_min)));
        }
        Ok(())
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(a: &ConfigArgs) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = &a.config {
            cfg.apply_file(path)?;
        }
        cfg.apply_flags(a);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn laplacian(&self) -> SplatLaplacianOptions {
        SplatLaplacianOptions {
            k: self.k_neighbors,
            metric: self.metric,
            normal_source: self.normal_source,
            ..Default::default()
        }
    }

    pub fn eigen(&self, k: usize) -> EigenOptions {
        let mut o = EigenOptions::new(k);
        o.tol = self.eigen_tol;
        o.seed = self.seed;
        o
    }
}
