//! Seeded replication grid.
//!
//! A grid cell fixes the generator and `(n, m, d, rho)`. Each replication of
//! a cell draws one network of `n + m` nodes from a seed derived from the
//! master seed, the cell descriptor and the replication index, partitions
//! it, and releases the `n`-node block with every configured method and
//! budget. Hat does not depend on the budget and is run once per
//! replication. Released networks are compared with the true release block
//! through the Wasserstein-1 distance of each local statistic.
//!
//! Config schema (TOML, unknown keys rejected):
//!
//! ```toml
//! master_seed = 2024
//! replications = 10
//! methods = ["grand", "laplace", "hat"]
//! log_stats = ["degree", "vshape", "triangle"]   # optional
//!
//! [grid]
//! model = "inner-product"                        # or "rdpg"
//! n = 1000
//! m = 1000
//! dims = [3]
//! rhos = [0.1]
//! epsilons = [1.0, 10.0]
//!
//! [options]                                      # optional release tuning
//! cdf = { bandwidth_exponent = 1.0 }
//! ```

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use grand::dip::PrivacyBudget;
use grand::graph::partition;
use grand::metrics::{LocalStatsReport, LogFlags, StatDistances, Statistic};
use grand::release::{release_partitioned, Method, ReleaseOptions};
use grand::seed::derive_seed;
use grand::{ModelKind, ModelVariant};

use crate::commands::generate;
use crate::{BenchArgs, CliError, CliResult, GeneratorArg};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub master_seed: u64,
    pub replications: usize,
    pub methods: Vec<Method>,
    #[serde(default = "default_log_stats")]
    pub log_stats: Vec<Statistic>,
    pub grid: GridConfig,
    #[serde(default)]
    pub options: ReleaseOptions,
}

fn default_log_stats() -> Vec<Statistic> {
    Statistic::ALL.into_iter().filter(|s| s.log_by_default()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub model: ModelVariant,
    pub n: usize,
    pub m: usize,
    pub dims: Vec<usize>,
    pub rhos: Vec<f64>,
    pub epsilons: Vec<f64>,
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let config: BenchConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("bench config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Usage(format!("bench config: {msg}")));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("no methods listed".into());
        }
        let g = &self.grid;
        if g.n == 0 || g.m == 0 {
            return bad("n and m must be positive".into());
        }
        if g.dims.is_empty() || g.rhos.is_empty() {
            return bad("dims and rhos must be non-empty".into());
        }
        if let Some(d) = g.dims.iter().find(|&&d| d == 0 || d >= g.m) {
            return bad(format!("dimension {d} must lie in 1..m"));
        }
        if let Some(r) = g.rhos.iter().find(|&&r| !(r > 0.0 && r < 1.0)) {
            return bad(format!("density {r} must lie in (0, 1)"));
        }
        if self.methods.iter().any(|m| m.needs_budget()) && g.epsilons.is_empty() {
            return bad("epsilons must be non-empty for private methods".into());
        }
        if g.epsilons.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(CliError::Usage("epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn log_flags(&self) -> LogFlags {
        let on = |s: Statistic| self.log_stats.contains(&s);
        LogFlags {
            degree: on(Statistic::Degree),
            vshape: on(Statistic::Vshape),
            triangle: on(Statistic::Triangle),
            eigen_centrality: on(Statistic::EigenCentrality),
            harmonic_centrality: on(Statistic::HarmonicCentrality),
        }
    }

    /// Data cells in output order: dimension, then density.
    pub fn cells(&self) -> Vec<Cell> {
        let g = &self.grid;
        g.dims
            .iter()
            .flat_map(|&dim| {
                g.rhos.iter().map(move |&rho| Cell {
                    model: g.model,
                    n: g.n,
                    m: g.m,
                    dim,
                    rho,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub model: ModelVariant,
    pub n: usize,
    pub m: usize,
    pub dim: usize,
    pub rho: f64,
}

impl Cell {
    /// Stable text key used for seed derivation.
    pub fn descriptor(&self) -> String {
        format!("{}/n={}/m={}/d={}/rho={}", self.model.name(), self.n, self.m, self.dim, self.rho)
    }

    fn generator(&self) -> GeneratorArg {
        match self.model {
            ModelVariant::InnerProduct => GeneratorArg::Lsm,
            ModelVariant::Rdpg => GeneratorArg::Rdpg,
        }
    }
}

/// One release of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub cell: usize,
    pub rep: usize,
    pub seed: u64,
    pub method: Method,
    /// `None` for Hat.
    pub epsilon: Option<f64>,
    pub outcome: Result<StatDistances, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutput {
    pub config: BenchConfig,
    pub cells: Vec<Cell>,
    /// Ordered by cell, replication, method, budget.
    pub records: Vec<RepRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// `None` with fewer than two successful replications.
    pub std_error: Option<f64>,
    pub n_ok: usize,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let std_error = (values.len() > 1).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    });
    Some(Summary {
        mean,
        std_error,
        n_ok: values.len(),
    })
}

impl BenchOutput {
    fn budgets_for(&self, method: Method) -> Vec<Option<f64>> {
        if method.needs_budget() {
            self.config.grid.epsilons.iter().map(|&e| Some(e)).collect()
        } else {
            vec![None]
        }
    }

    /// Successful per-replication values of `stat` for one method, cell and budget.
    /// The budget is ignored for Hat.
    pub fn values(&self, method: Method, cell: usize, epsilon: f64, stat: Statistic) -> Vec<f64> {
        let eps = method.needs_budget().then_some(epsilon);
        self.records
            .iter()
            .filter(|r| r.cell == cell && r.method == method && r.epsilon == eps)
            .filter_map(|r| r.outcome.as_ref().ok().map(|d| d.get(stat)))
            .collect()
    }

    pub fn summary(&self, method: Method, cell: usize, epsilon: f64, stat: Statistic) -> Option<Summary> {
        summarize(&self.values(method, cell, epsilon, stat))
    }

    /// `(cell descriptor, method, budget)` combinations where every replication failed.
    pub fn failed_combinations(&self) -> Vec<String> {
        let mut failed = Vec::new();
        for (c, cell) in self.cells.iter().enumerate() {
            for &method in &self.config.methods {
                for eps in self.budgets_for(method) {
                    let all_failed = self
                        .records
                        .iter()
                        .filter(|r| r.cell == c && r.method == method && r.epsilon == eps)
                        .all(|r| r.outcome.is_err());
                    if all_failed {
                        failed.push(format!("{} {method} eps={eps:?}", cell.descriptor()));
                    }
                }
            }
        }
        failed
    }

    /// Summary table: one row per statistic, dimension and budget; for every
    /// method and density a mean, standard-error and success-count column.
    pub fn table_csv(&self) -> String {
        let cfg = &self.config;
        let mut out = String::from("statistic,d,epsilon");
        for method in &cfg.methods {
            for rho in &cfg.grid.rhos {
                for col in ["mean", "stderr", "n"] {
                    write!(out, ",{method}_rho{rho}_{col}").unwrap();
                }
            }
        }
        out.push('\n');
        for stat in Statistic::ALL {
            for &dim in &cfg.grid.dims {
                for &eps in &cfg.grid.epsilons {
                    write!(out, "{},{dim},{eps}", stat.name()).unwrap();
                    for &method in &cfg.methods {
                        for &rho in &cfg.grid.rhos {
                            let cell = self
                                .cells
                                .iter()
                                .position(|c| c.dim == dim && c.rho == rho)
                                .expect("grid cell exists");
                            match self.summary(method, cell, eps, stat) {
                                Some(s) => {
                                    let se = s.std_error.map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
                                    write!(out, ",{},{se},{}", s.mean, s.n_ok).unwrap();
                                }
                                None => out.push_str(",NA,NA,0"),
                            }
                        }
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    /// Long format: one row per cell, replication, method and budget.
    pub fn replications_csv(&self) -> String {
        let mut out = String::from("cell,d,rho,rep,seed,method,epsilon,status");
        for stat in Statistic::ALL {
            write!(out, ",{}", stat.name()).unwrap();
        }
        out.push('\n');
        for r in &self.records {
            let cell = &self.cells[r.cell];
            let eps = r.epsilon.map(|e| e.to_string()).unwrap_or_else(|| "NA".into());
            write!(out, "{},{},{},{},{},{},{eps}", cell.descriptor(), cell.dim, cell.rho, r.rep, r.seed, r.method).unwrap();
            match &r.outcome {
                Ok(d) => {
                    out.push_str(",ok");
                    for stat in Statistic::ALL {
                        write!(out, ",{}", d.get(stat)).unwrap();
                    }
                }
                Err(e) => {
                    let msg = e.replace([',', '\n', '"'], " ");
                    write!(out, ",error: {msg}").unwrap();
                    out.push_str(&",NA".repeat(Statistic::ALL.len()));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn run_replication(config: &BenchConfig, cell_idx: usize, cell: &Cell, rep: usize, flags: LogFlags) -> Vec<RepRecord> {
    let seed = derive_seed(config.master_seed, &cell.descriptor(), rep as u64);
    let jobs: Vec<(Method, Option<f64>)> = config
        .methods
        .iter()
        .flat_map(|&m| {
            if m.needs_budget() {
                config.grid.epsilons.iter().map(|&e| (m, Some(e))).collect::<Vec<_>>()
            } else {
                vec![(m, None)]
            }
        })
        .collect();
    let record = |method, epsilon, outcome| RepRecord {
        cell: cell_idx,
        rep,
        seed,
        method,
        epsilon,
        outcome,
    };

    let prepared = (|| -> CliResult<_> {
        let sim = generate(cell.generator(), cell.n + cell.m, cell.dim, cell.rho, seed)?;
        let parts = partition(&sim.graph, cell.n, derive_seed(seed, "partition", 0))?;
        let truth = LocalStatsReport::compute(&parts.a11)?;
        Ok((parts, truth))
    })();
    let (parts, truth) = match prepared {
        Ok(p) => p,
        Err(e) => {
            log::warn!("{} rep {rep}: generation failed: {e}", cell.descriptor());
            return jobs.into_iter().map(|(m, eps)| record(m, eps, Err(e.to_string()))).collect();
        }
    };
    let kind = ModelKind {
        variant: cell.model,
        dim: cell.dim,
    };
    jobs.into_iter()
        .map(|(method, eps)| {
            let outcome = (|| -> CliResult<StatDistances> {
                let budget = eps.map(PrivacyBudget::new).transpose()?;
                let (report, _) = release_partitioned(&parts, method, kind, budget, seed, &config.options)?;
                let stats = LocalStatsReport::compute(&report.released)?;
                Ok(StatDistances::compare(&truth, &stats, flags)?)
            })();
            if let Err(e) = &outcome {
                log::warn!("{} rep {rep} {method}: {e}", cell.descriptor());
            }
            record(method, eps, outcome.map_err(|e| e.to_string()))
        })
        .collect()
}

/// Runs every replication of every cell; replications run concurrently on
/// the current rayon pool, records come back in grid order.
pub fn run_bench(config: &BenchConfig) -> CliResult<BenchOutput> {
    config.validate()?;
    let cells = config.cells();
    let flags = config.log_flags();
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..config.replications).map(move |r| (c, r)))
        .collect();
    let records: Vec<RepRecord> = tasks
        .par_iter()
        .map(|&(c, rep)| run_replication(config, c, &cells[c], rep, flags))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(BenchOutput {
        config: config.clone(),
        cells,
        records,
    })
}

pub fn write_outputs(output: &BenchOutput, dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(format!("cannot create {}", dir.display())))?;
    for (name, text) in [("table.csv", output.table_csv()), ("replications.csv", output.replications_csv())] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(CliError::io(format!("cannot write {}", path.display())))?;
    }
    Ok(())
}

pub fn run_bench_command(args: &BenchArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.config.display())))?;
    let config = BenchConfig::from_toml(&text)?;
    let output = run_bench(&config)?;
    write_outputs(&output, &args.out)?;
    let failed = output.failed_combinations();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("every replication failed for: {}", failed.join("; "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
master_seed = 7
replications = 2
methods = ["grand", "hat"]

[grid]
model = "rdpg"
n = 60
m = 60
dims = [2]
rhos = [0.2]
epsilons = [1.0]
"#;

    #[test]
    fn parses_minimal_config() {
        let c = BenchConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.methods, vec![Method::Grand, Method::Hat]);
        assert_eq!(c.log_stats, vec![Statistic::Degree, Statistic::Vshape, Statistic::Triangle]);
        assert_eq!(c.options, ReleaseOptions::default());
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = MINIMAL.replace("replications = 2", "replications = 2\nreplicates = 3");
        assert!(matches!(BenchConfig::from_toml(&text), Err(CliError::Usage(_))));
        let nested = format!("{MINIMAL}\n[options]\ncdf = {{ bandwith_exponent = 2.0 }}\n");
        assert!(BenchConfig::from_toml(&nested).is_err());
    }

    #[test]
    fn partial_options_fill_defaults() {
        let text = format!("{MINIMAL}\n[options]\ncdf = {{ bandwidth_exponent = 2.0 }}\n");
        let c = BenchConfig::from_toml(&text).unwrap();
        assert_eq!(c.options.cdf.bandwidth_exponent, 2.0);
        assert_eq!(c.options.cdf.regularizer, 1e-12);
    }

    #[test]
    fn rejects_bad_grid_values() {
        for (from, to) in [("rhos = [0.2]", "rhos = [1.5]"), ("epsilons = [1.0]", "epsilons = [0.0]"), ("dims = [2]", "dims = [60]")] {
            assert!(BenchConfig::from_toml(&MINIMAL.replace(from, to)).is_err(), "{to}");
        }
    }

    #[test]
    fn summary_statistics() {
        let s = summarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.std_error.unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(summarize(&[4.0]).unwrap().std_error, None);
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn seeds_depend_on_cell_and_rep_only() {
        let c = BenchConfig::from_toml(MINIMAL).unwrap();
        let cell = c.cells()[0];
        let wider = BenchConfig::from_toml(&MINIMAL.replace("rhos = [0.2]", "rhos = [0.1, 0.2]")).unwrap();
        let same = wider.cells().into_iter().find(|k| k.rho == 0.2).unwrap();
        assert_eq!(cell.descriptor(), same.descriptor());
    }
}
