use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

use koopman_prior::experiments::{
    forward_experiment, nm_trials, one_step_table, sweep_estimate, ForwardSetup, NmSetup,
    NmTrialsSetup, SweepSetup,
};
use koopman_prior::io;
use koopman_prior::{
    build_generator, edmd_fit, generate_snapshots, grid_initial_states, learn_small_dataset,
    prior_koopman, Dictionary, SnapshotDataset, System,
};

use crate::config::{ConfigError, ExperimentConfig};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    /// Single machine-readable line for stderr.
    pub fn report(&self) -> String {
        let (kind, reason) = match self {
            CliError::Validation(r) => ("validation", r),
            CliError::Numerical(r) => ("numerical", r),
            CliError::Io(r) => ("io", r),
        };
        format!("error kind={kind} reason={reason:?}")
    }
}

impl From<koopman_prior::Error> for CliError {
    fn from(e: koopman_prior::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.0)
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Output directory plus the list of files written, for the run manifest.
pub struct Run<'a> {
    pub command: &'static str,
    pub cfg: &'a ExperimentConfig,
    outputs: Vec<String>,
}

impl<'a> Run<'a> {
    pub fn new(command: &'static str, cfg: &'a ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(&cfg.output_dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", cfg.output_dir.display())))?;
        Ok(Self {
            command,
            cfg,
            outputs: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.cfg.output_dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, summary: serde_json::Value) -> Result<()> {
        let manifest = json!({
            "command": self.command,
            "seed": self.cfg.seed,
            "versions": {
                "koopman-prior": koopman_prior::VERSION,
                "koopman-cli": env!("CARGO_PKG_VERSION"),
            },
            "config": self.cfg,
            "outputs": self.outputs,
            "summary": summary,
        });
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        self.write("run.json", &text)
    }
}

fn dictionary(cfg: &ExperimentConfig, system: &System) -> Result<Arc<Dictionary>> {
    Ok(Arc::new(Dictionary::new(system.dim(), cfg.dict_degree)?))
}

/// A single parameter vector from `theta_assumed`.
fn assumed_vector(cfg: &ExperimentConfig, system: &System) -> Result<Vec<f64>> {
    if cfg.theta_assumed.len() != system.arity() {
        return Err(CliError::Validation(format!(
            "theta_assumed must hold {} value(s) for this command, got {}",
            system.arity(),
            cfg.theta_assumed.len()
        )));
    }
    Ok(cfg.theta_assumed.clone())
}

fn single_epsilon(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.epsilon.values().as_slice() {
        [e] => Ok(*e),
        v => Err(CliError::Validation(format!(
            "epsilon must be a single value for this command, got {}",
            v.len()
        ))),
    }
}

fn training_data(cfg: &ExperimentConfig, system: &System, seed: u64) -> Result<SnapshotDataset> {
    let field = system.field(&cfg.theta_true)?;
    let dim = system.dim();
    Ok(generate_snapshots(
        &field,
        cfg.m,
        &vec![cfg.sample_box[0]; dim],
        &vec![cfg.sample_box[1]; dim],
        cfg.dt_obs,
        seed,
        cfg.substeps,
    )?)
}

pub fn build_prior(cfg: &ExperimentConfig) -> Result<()> {
    let system = cfg.system()?;
    let theta = assumed_vector(cfg, &system)?;
    let dict = dictionary(cfg, &system)?;
    let gen = build_generator(&system.field(&theta)?, dict)?;
    let k = prior_koopman(&gen, cfg.dt_obs, cfg.substeps)?;

    let mass = gen.truncated_mass();
    let total: f64 = mass.iter().sum();
    let rows = mass.iter().filter(|m| **m > 0.0).count();
    println!(
        "prior {0}x{0} (dt {1}); truncated mass {total:.6e} over {rows} column(s)",
        k.entries().nrows(),
        cfg.dt_obs
    );

    let mut run = Run::new("build-prior", cfg)?;
    run.write("prior.txt", &io::koopman_to_string(&k))?;
    run.write("generator.txt", &io::generator_to_string(&gen))?;
    run.finish(json!({ "n_dic": k.entries().nrows(), "truncated_mass": total }))
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<()> {
    let system = cfg.system()?;
    let ds = training_data(cfg, &system, cfg.seed)?;
    println!(
        "{} snapshot pairs of the {} system",
        ds.len(),
        system.name()
    );
    let mut run = Run::new("simulate", cfg)?;
    run.write("dataset.csv", &io::dataset_to_string(&ds))?;
    run.finish(json!({ "pairs": ds.len() }))
}

pub fn forward(cfg: &ExperimentConfig) -> Result<()> {
    let system = cfg.system()?;
    let setup = ForwardSetup {
        theta_assumed: assumed_vector(cfg, &system)?,
        system,
        theta_true: cfg.theta_true.clone(),
        dict_degree: cfg.dict_degree,
        m: cfg.m,
        epsilon: single_epsilon(cfg)?,
        trials: cfg.trials,
        sample_box: (cfg.sample_box[0], cfg.sample_box[1]),
        grid: (cfg.grid.low, cfg.grid.high, cfg.grid.n),
        steps: cfg.steps,
        dt: cfg.dt_obs,
        substeps: cfg.substeps,
        base_seed: cfg.seed,
        mode: cfg.rollout_mode(),
    };
    let r = forward_experiment(&setup)?;
    let last = cfg.steps;
    for (name, s) in [("proposed", &r.proposed), ("conventional", &r.conventional)] {
        println!(
            "{name:<12} median error at step {last}: {:.4e}  diverged {}/{}",
            s.median[last], s.diverged_count, s.trials
        );
    }
    let mut run = Run::new("forward", cfg)?;
    run.write("proposed.csv", &io::statistics_to_csv(&r.proposed))?;
    run.write("conventional.csv", &io::statistics_to_csv(&r.conventional))?;
    run.finish(json!({
        "proposed_diverged": r.proposed.diverged_count,
        "conventional_diverged": r.conventional.diverged_count,
    }))
}

pub fn onestep(cfg: &ExperimentConfig) -> Result<()> {
    let system = cfg.system()?;
    let theta = assumed_vector(cfg, &system)?;
    let dict = dictionary(cfg, &system)?;
    let prior = prior_koopman(
        &build_generator(&system.field(&theta)?, dict.clone())?,
        cfg.dt_obs,
        cfg.substeps,
    )?;
    let ds = training_data(cfg, &system, cfg.seed)?;
    let proposed = learn_small_dataset(&prior, &ds, single_epsilon(cfg)?)?;
    let conventional = edmd_fit(&ds, dict)?;
    let grid = grid_initial_states(cfg.grid.low, cfg.grid.high, cfg.grid.n, system.dim())?;
    let table = one_step_table(
        &proposed,
        &conventional,
        &system.field(&cfg.theta_true)?,
        &grid,
        cfg.dt_obs,
        cfg.substeps,
    )?;
    let ep = (&table.proposed - &table.truth).norm();
    let ec = (&table.conventional - &table.truth).norm();
    println!(
        "one-step error over {} grid points: proposed {ep:.4e}, conventional {ec:.4e}",
        grid.ncols()
    );
    let mut run = Run::new("onestep", cfg)?;
    run.write("onestep.csv", &io::one_step_to_csv(&table))?;
    run.finish(json!({ "proposed_error": ep, "conventional_error": ec }))
}

pub fn invert_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let system = cfg.system()?;
    let setup = SweepSetup {
        dict: dictionary(cfg, &system)?,
        system,
        assumed: cfg.theta_assumed.clone(),
        epsilons: cfg.epsilon.values(),
        dt: cfg.dt_obs,
        substeps: cfg.substeps,
        norm: cfg.error_norm(),
        search_margin: cfg.search_margin,
    };
    let ds = training_data(cfg, &setup.system, cfg.seed)?;
    let r = sweep_estimate(&setup, &ds)?;
    println!(
        "estimate {:.6} from {} intersection(s); error there {:.4e}",
        r.estimate,
        r.roots.len(),
        r.estimate_error_at_intersection
    );
    let mut run = Run::new("invert-sweep", cfg)?;
    run.write("sweep_grid.csv", &io::sweep_grid_to_csv(&r))?;
    run.write("sweep_report.csv", &io::sweep_report_to_csv(&r))?;
    run.finish(json!({ "estimate": r.estimate, "roots": r.roots }))
}

pub fn invert_nm(cfg: &ExperimentConfig) -> Result<()> {
    let system = cfg.system()?;
    let arity = system.arity();
    let dict = dictionary(cfg, &system)?;
    let mut estimator = NmSetup::new(system, dict, cfg.dt_obs, cfg.param_box(arity), cfg.seed);
    estimator.substeps = cfg.substeps;
    estimator.options = cfg.nm_options(arity);
    estimator.norm = cfg.error_norm();
    let setup = NmTrialsSetup {
        estimator,
        truth_box: cfg.truth_box(arity),
        m: cfg.m,
        sample_box: (cfg.sample_box[0], cfg.sample_box[1]),
        trials: cfg.trials,
        base_seed: cfg.seed,
    };
    let rows = nm_trials(&setup)?;
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.error).sum::<f64>() / n;
    let std = if rows.len() > 1 {
        (rows.iter().map(|r| (r.error - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let seconds = rows.iter().map(|r| r.seconds).sum::<f64>() / n;
    println!(
        "estimation error {mean:.6} ± {std:.6} over {} trial(s), {seconds:.3} s each",
        rows.len()
    );
    let mut run = Run::new("invert-nm", cfg)?;
    run.write("estimation.csv", &io::estimation_table_to_csv(&rows))?;
    run.finish(json!({ "mean_error": mean, "std_error": std, "mean_seconds": seconds }))
}

pub fn matrix_info(cfg: &ExperimentConfig, matrix: Option<&Path>) -> Result<()> {
    let path: PathBuf = matrix.map_or_else(|| cfg.output_dir.join("prior.txt"), Path::to_path_buf);
    let text =
        fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let k = io::parse_koopman(&text)?;
    let e = k.entries();
    let dict = k.dictionary();
    let radius = e
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0f64, f64::max);
    println!("file            {}", path.display());
    println!("size            {0}x{0}", e.nrows());
    println!("state dim       {}", dict.dim());
    println!("max degree      {}", dict.max_degree());
    println!("dt              {}", k.dt());
    println!("frobenius norm  {:.6e}", e.norm());
    println!("spectral radius {radius:.6e}");
    Ok(())
}
