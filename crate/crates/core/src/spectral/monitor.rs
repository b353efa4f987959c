//! Spectral drift across a sequence of training checkpoints.

use std::path::Path;

use serde::Serialize;

use super::{smallest_eigenpairs_with, EigenOptions, DEFAULT_ZERO_TOL};
use crate::error::Result;
use crate::laplacian::{splat_laplacian, SplatLaplacianOptions};
use crate::neighborhood::{build_graph_with, prune_components, GraphOptions};
use crate::splat_io::read_splat_ply;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorRecord {
    pub path: String,
    pub eigenvalues: Option<Vec<f64>>,
    /// Relative drift against the previous successful checkpoint.
    pub drift: Option<f64>,
    pub stable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Incremental drift tracker.
///
/// Eigenvalues below `zero_tol` times the largest one are treated as exact
/// zeros before differencing, so the kernel's round-off does not dominate
/// the relative drift.
#[derive(Debug, Clone)]
pub struct SpectrumMonitor {
    pub drift_threshold: f64,
    pub consecutive: usize,
    pub epsilon: f64,
    pub zero_tol: f64,
    previous: Option<Vec<f64>>,
    streak: usize,
}

impl Default for SpectrumMonitor {
    fn default() -> Self {
        Self::new(0.01, 2)
    }
}

impl SpectrumMonitor {
    pub fn new(drift_threshold: f64, consecutive: usize) -> Self {
        Self {
            drift_threshold,
            consecutive,
            epsilon: 1e-12,
            zero_tol: DEFAULT_ZERO_TOL,
            previous: None,
            streak: 0,
        }
    }

    fn snap(&self, values: &[f64]) -> Vec<f64> {
        let largest = values.iter().copied().fold(0.0, f64::max);
        values
            .iter()
            .map(|&l| if l < self.zero_tol * largest { 0.0 } else { l })
            .collect()
    }

    /// `max_i |l_i - p_i| / (p_i + eps)` over the common prefix.
    pub fn drift(&self, previous: &[f64], current: &[f64]) -> f64 {
        let (p, c) = (self.snap(previous), self.snap(current));
        p.iter()
            .zip(&c)
            .map(|(a, b)| (b - a).abs() / (a + self.epsilon))
            .fold(0.0, f64::max)
    }

    pub fn push(&mut self, path: impl Into<String>, result: Result<Vec<f64>>) -> MonitorRecord {
        let path = path.into();
        match result {
            Ok(values) => {
                let drift = self.previous.as_ref().map(|p| self.drift(p, &values));
                match drift {
                    Some(d) if d < self.drift_threshold => self.streak += 1,
                    _ => self.streak = 0,
                }
                self.previous = Some(values.clone());
                MonitorRecord {
                    path,
                    eigenvalues: Some(values),
                    drift,
                    stable: self.streak >= self.consecutive,
                    error: None,
                }
            }
            Err(e) => {
                self.streak = 0;
                MonitorRecord {
                    path,
                    eigenvalues: None,
                    drift: None,
                    stable: false,
                    error: Some(e.to_string()),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorOptions {
    pub k_eigen: usize,
    pub laplacian: SplatLaplacianOptions,
    pub keep_components: usize,
    pub opacity_min: f64,
    pub drift_threshold: f64,
    pub consecutive: usize,
    pub seed: u64,
}

impl Default for MonitorOptions {
    fn default() -> Self {
        Self {
            k_eigen: 100,
            laplacian: SplatLaplacianOptions::default(),
            keep_components: 1,
            opacity_min: 0.0,
            drift_threshold: 0.01,
            consecutive: 2,
            seed: 0,
        }
    }
}

/// Spectrum of one checkpoint after pruning to its largest components.
pub fn checkpoint_spectrum(path: &Path, opts: &MonitorOptions) -> Result<Vec<f64>> {
    let set = read_splat_ply(path)?;
    let (set, _) = set.drop_low_opacity(opts.opacity_min);
    let lap_opts = &opts.laplacian;
    let graph = build_graph_with(
        &set,
        &GraphOptions {
            k: lap_opts.k,
            metric: lap_opts.metric,
            strategy: lap_opts.strategy,
        },
    )?;
    let set = prune_components(&set, &graph, opts.keep_components);
    let op = splat_laplacian(&set, lap_opts)?;
    let mut eig = EigenOptions::new(opts.k_eigen.min(set.len()));
    eig.seed = opts.seed;
    Ok(smallest_eigenpairs_with(&op.laplacian, &eig)?.eigenvalues)
}

/// Runs the pipeline on each checkpoint in order; failures are recorded and
/// monitoring continues.
pub fn monitor_checkpoints<P: AsRef<Path>>(paths: &[P], opts: &MonitorOptions) -> Vec<MonitorRecord> {
    let mut monitor = SpectrumMonitor::new(opts.drift_threshold, opts.consecutive);
    paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            monitor.push(p.display().to_string(), checkpoint_spectrum(p, opts))
        })
        .collect()
}
