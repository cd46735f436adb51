use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use grand::dip::PrivacyBudget;
use grand::graph::{load_edge_list, write_edge_list, EdgeListFormat, Graph};
use grand::latent::{gen_lsm_truncgauss, gen_rdpg_uniform, Calibration, MixtureSpec};
use grand::metrics::{LocalStatsReport, StatDistances};
use grand::release::{run_method, Method, ReleaseManifest, ReleaseOptions};
use grand::seed::derived_rng;
use grand::{LatentEmbedding, ModelKind};

use crate::{parse_log_stats, CliError, CliResult, EvalArgs, GeneratorArg, ReleaseArgs, SimulateArgs};

pub const RELEASE_EDGES: &str = "release.edges";
pub const MANIFEST: &str = "manifest.json";

pub fn read_graph(path: &Path, format: EdgeListFormat) -> CliResult<Graph> {
    let file = File::open(path).map_err(CliError::io(format!("cannot open {}", path.display())))?;
    let loaded = load_edge_list(BufReader::new(file), format)?;
    if loaded.self_loops_dropped > 0 || loaded.duplicates_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            path.display(),
            loaded.self_loops_dropped,
            loaded.duplicates_dropped
        );
    }
    Ok(loaded.graph)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(CliError::io(format!("cannot create {}", dir.display())))
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> CliResult<()>) -> CliResult<()> {
    let file = File::create(path).map_err(CliError::io(format!("cannot create {}", path.display())))?;
    let mut w = BufWriter::new(file);
    write(&mut w)?;
    w.flush().map_err(CliError::io(format!("cannot write {}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::Failed(format!("JSON encoding: {e}")))?;
        writeln!(w).map_err(CliError::io(path.display().to_string()))
    })
}

pub fn validate_budget(epsilon: f64) -> CliResult<PrivacyBudget> {
    PrivacyBudget::new(epsilon).map_err(|_| CliError::Usage("epsilon must be positive".into()))
}

/// Release-block size for `frac` of `n` nodes.
pub fn release_size(n: usize, frac: f64) -> CliResult<usize> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(CliError::Usage(format!("--release-frac must lie in (0, 1), got {frac}")));
    }
    let n_release = (frac * n as f64).floor() as usize;
    if n_release == 0 || n_release >= n {
        return Err(CliError::Usage(format!(
            "--release-frac {frac} leaves an empty release or hold-out block for {n} nodes"
        )));
    }
    Ok(n_release)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub input: String,
    pub input_nodes: usize,
    pub input_edges: usize,
    #[serde(flatten)]
    pub release: ReleaseManifest,
}

pub fn release(args: &ReleaseArgs) -> CliResult<RunManifest> {
    let budget = validate_budget(args.epsilon)?;
    if args.dim == 0 {
        return Err(CliError::Usage("--dim must be at least 1".into()));
    }
    let graph = read_graph(&args.input, args.format.into())?;
    let n_release = release_size(graph.n_nodes(), args.release_frac)?;
    let kind = ModelKind::new(args.model.into(), args.dim)?;
    let method: Method = args.method.into();
    let report = run_method(
        &graph,
        n_release,
        method,
        kind,
        method.needs_budget().then_some(budget),
        args.seed,
        &ReleaseOptions::default(),
    )?;

    create_dir(&args.out)?;
    write_file(&args.out.join(RELEASE_EDGES), |w| Ok(write_edge_list(&report.released, w)?))?;
    let manifest = RunManifest {
        input: args.input.display().to_string(),
        input_nodes: graph.n_nodes(),
        input_edges: graph.n_edges(),
        release: report.manifest(),
    };
    write_json(&args.out.join(MANIFEST), &manifest)?;
    log::info!(
        "released {} nodes and {} edges to {}",
        report.released.n_nodes(),
        report.released.n_edges(),
        args.out.display()
    );
    Ok(manifest)
}

/// A generated network with its true latent positions.
pub struct Simulated {
    pub latents: LatentEmbedding,
    pub graph: Graph,
    pub calibration: Option<Calibration>,
    pub clamped_fraction: Option<f64>,
}

pub fn generate(generator: GeneratorArg, n_nodes: usize, dim: usize, rho: f64, seed: u64) -> CliResult<Simulated> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(CliError::Usage(format!("--rho must lie in (0, 1), got {rho}")));
    }
    if dim == 0 {
        return Err(CliError::Usage("--dim must be at least 1".into()));
    }
    let mut rng = derived_rng(seed, "simulate", 0);
    Ok(match generator {
        GeneratorArg::Lsm => {
            let (latents, graph, calibration) = gen_lsm_truncgauss(n_nodes, dim, &MixtureSpec::default(), rho, &mut rng)?;
            Simulated {
                latents,
                graph,
                calibration: Some(calibration),
                clamped_fraction: None,
            }
        }
        GeneratorArg::Rdpg => {
            let (latents, graph, clamped) = gen_rdpg_uniform(n_nodes, dim, rho, &mut rng)?;
            Simulated {
                latents,
                graph,
                calibration: None,
                clamped_fraction: Some(clamped),
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub generator: String,
    pub n: usize,
    pub m: usize,
    pub dim: usize,
    pub rho: f64,
    pub seed: u64,
    pub n_edges: usize,
    pub density: f64,
    pub calibration: Option<Calibration>,
    pub clamped_fraction: Option<f64>,
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let n_nodes = args.n + args.m;
    if n_nodes < 2 {
        return Err(CliError::Usage("--n plus --m must be at least 2".into()));
    }
    let sim = generate(args.generator, n_nodes, args.dim, args.rho, args.seed)?;
    create_dir(&args.out)?;
    write_file(&args.out.join("graph.edges"), |w| Ok(write_edge_list(&sim.graph, w)?))?;
    write_file(&args.out.join("latents.csv"), |w| Ok(sim.latents.write_csv(w)?))?;
    let summary = SimulationSummary {
        generator: match args.generator {
            GeneratorArg::Lsm => "lsm".into(),
            GeneratorArg::Rdpg => "rdpg".into(),
        },
        n: args.n,
        m: args.m,
        dim: args.dim,
        rho: args.rho,
        seed: args.seed,
        n_edges: sim.graph.n_edges(),
        density: sim.graph.density(),
        calibration: sim.calibration,
        clamped_fraction: sim.clamped_fraction,
    };
    write_json(&args.out.join("simulation.json"), &summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub truth_nodes: usize,
    pub release_nodes: usize,
    pub distances: StatDistances,
}

pub fn eval(args: &EvalArgs) -> CliResult<EvalOutput> {
    let flags = parse_log_stats(&args.log_stats)?;
    let truth = read_graph(&args.truth, args.format.into())?;
    let released = read_graph(&args.release, args.format.into())?;
    if truth.n_nodes() == 0 || released.n_nodes() == 0 {
        return Err(CliError::Usage("both graphs need at least one node".into()));
    }
    let truth_stats = LocalStatsReport::compute(&truth)?;
    let release_stats = LocalStatsReport::compute(&released)?;
    let out = EvalOutput {
        truth_nodes: truth.n_nodes(),
        release_nodes: released.n_nodes(),
        distances: StatDistances::compare(&truth_stats, &release_stats, flags)?,
    };
    match &args.out {
        Some(dir) => {
            create_dir(dir)?;
            write_file(&dir.join("truth_stats.csv"), |w| Ok(truth_stats.write_csv(w)?))?;
            write_file(&dir.join("release_stats.csv"), |w| Ok(release_stats.write_csv(w)?))?;
            write_json(&dir.join("distances.json"), &out)?;
        }
        None => {
            let text = serde_json::to_string_pretty(&out).map_err(|e| CliError::Failed(format!("JSON encoding: {e}")))?;
            println!("{text}");
        }
    }
    Ok(out)
}
