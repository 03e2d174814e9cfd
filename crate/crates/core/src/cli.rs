//! Experiment runner behind the `lqteam` binary.
//!
//! One JSON config drives one subcommand. Every output is a pure function of
//! the config and the master seed: worker count only changes wall time.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bounds::{
    explicit_gap_bound, fundamental_bounds, projected_envelope, tail_weight, uniform_bound_applies, uniform_density_bound,
    uniform_tail_constants, BoundConstants,
};
use crate::diagnostics::{density_report, gap_sweep, tail_mass, GapSweepRow};
use crate::error::{Error, Result};
use crate::io::{load_instance, save_instance};
use crate::noise::{NoiseFamily, NoiseModel};
use crate::pbp::{pbp_fit, sample_cost, truncated_gaussian_value, CellForm, PbpConfig};
use crate::rng::{mix, stream};
use crate::svg::{LineChart, Series};
use crate::team::{gaussian_cost, matrix_to_rows, solve_linear, Policy, ProblemInstance, TeamSpec, ZeroPolicy};

const DEFAULT_SAMPLES: usize = 200_000;
const DEFAULT_DENSITY_SAMPLES: usize = 1_000_000;

#[derive(Debug, Parser)]
#[command(name = "lqteam", version, about = "Static LQ teams with high-dimensional log-concave noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check a team specification and report its basic quantities.
    ValidateSpec(CommonArgs),
    /// Best linear policy and its closed-form cost.
    SolveLinear(CommonArgs),
    /// Person-by-person approximation of the optimal policy at one `n`.
    SolvePbp(CommonArgs),
    /// Gap between linear and PBP policies across noise dimensions.
    GapSweep(CommonArgs),
    /// Closeness of projected noise to Gaussian across noise dimensions.
    CltDiagnostics(CommonArgs),
    /// Explicit error bounds across noise dimensions.
    Bounds(CommonArgs),
    /// Cost mass beyond growing radii.
    TailMass(CommonArgs),
    /// Draw a Haar frame and save the instance.
    SampleInstance(CommonArgs),
    /// Run the subcommand named in the config file.
    Run(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides the config output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::ValidateSpec(a)
            | Command::SolveLinear(a)
            | Command::SolvePbp(a)
            | Command::GapSweep(a)
            | Command::CltDiagnostics(a)
            | Command::Bounds(a)
            | Command::TailMass(a)
            | Command::SampleInstance(a)
            | Command::Run(a) => a,
        }
    }

    fn task(&self) -> Option<Task> {
        Some(match self {
            Command::ValidateSpec(_) => Task::ValidateSpec,
            Command::SolveLinear(_) => Task::SolveLinear,
            Command::SolvePbp(_) => Task::SolvePbp,
            Command::GapSweep(_) => Task::GapSweep,
            Command::CltDiagnostics(_) => Task::CltDiagnostics,
            Command::Bounds(_) => Task::Bounds,
            Command::TailMass(_) => Task::TailMass,
            Command::SampleInstance(_) => Task::SampleInstance,
            Command::Run(_) => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    ValidateSpec,
    SolveLinear,
    SolvePbp,
    GapSweep,
    CltDiagnostics,
    Bounds,
    TailMass,
    SampleInstance,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub obs_dims: Vec<usize>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
}

/// PBP settings; omitted fields take the library defaults, and `tol`
/// defaults to `1e-4·(1 + J_G)`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PbpSection {
    pub bins: Option<usize>,
    pub bins_2d: Option<usize>,
    pub samples: Option<usize>,
    pub max_iters: Option<usize>,
    pub damping: Option<f64>,
    pub tol: Option<f64>,
    pub form: Option<CellForm>,
}

/// Universal constants; the output is flagged illustrative unless `C` is given.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyChoice {
    #[default]
    Linear,
    Zero,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subcommand: Option<Task>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub spec: Option<SpecConfig>,
    /// JSON file holding a `spec` object.
    pub spec_file: Option<PathBuf>,
    /// Saved instance (see [`crate::io`]); supplies the spec, `n` and `R`.
    pub instance_file: Option<PathBuf>,
    pub noise: Option<NoiseFamily>,
    pub n: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    /// Projection dimension for CLT diagnostics.
    pub l: Option<usize>,
    /// Monte Carlo sample count (PBP uses `pbp.samples`).
    pub samples: Option<usize>,
    #[serde(default)]
    pub pbp: PbpSection,
    #[serde(default)]
    pub constants: ConstantsSection,
    pub k_list: Option<Vec<f64>>,
    #[serde(default)]
    pub policy: PolicyChoice,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Read a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.spec_file, &mut cfg.instance_file, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn constants(&self) -> Result<BoundConstants> {
        let d = BoundConstants::default();
        let c = &self.constants;
        let out = BoundConstants {
            c: c.c.unwrap_or(d.c),
            c1: c.c1.unwrap_or(d.c1),
            c2: c.c2.unwrap_or(d.c2),
            c3: c.c3.unwrap_or(d.c3),
            c4: c.c4.unwrap_or(d.c4),
            illustrative: c.c.is_none(),
        };
        out.validate()?;
        Ok(out)
    }

    pub fn pbp_config(&self, spec: &TeamSpec) -> Result<PbpConfig> {
        let base = PbpConfig::for_spec(spec)?;
        let p = &self.pbp;
        let cfg = PbpConfig {
            bins: p.bins.unwrap_or(base.bins),
            bins_2d: p.bins_2d.unwrap_or(base.bins_2d),
            samples: p.samples.unwrap_or(base.samples),
            max_iters: p.max_iters.unwrap_or(base.max_iters),
            damping: p.damping.unwrap_or(base.damping),
            tol: p.tol.unwrap_or(base.tol),
            form: p.form.unwrap_or(base.form),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn team_spec(&self) -> Result<TeamSpec> {
        match (&self.spec, &self.spec_file, &self.instance_file) {
            (Some(s), None, None) => TeamSpec::from_rows(s.obs_dims.clone(), &s.q, &s.w),
            (None, Some(path), None) => {
                #[derive(Deserialize)]
                struct File {
                    spec: SpecConfig,
                }
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("spec_file {}: {e}", path.display())))?;
                let f: File = serde_json::from_str(&text).map_err(|e| Error::Config(format!("spec_file {}: {e}", path.display())))?;
                TeamSpec::from_rows(f.spec.obs_dims, &f.spec.q, &f.spec.w)
            }
            (None, None, Some(_)) => Ok(self.instance_from_file()?.spec().clone()),
            (None, None, None) => Err(Error::Config("one of spec, spec_file or instance_file is required".into())),
            _ => Err(Error::Config("give only one of spec, spec_file and instance_file".into())),
        }
    }

    fn instance_from_file(&self) -> Result<ProblemInstance> {
        let path = self.instance_file.as_ref().ok_or_else(|| Error::Config("instance_file missing".into()))?;
        load_instance(path).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("instance_file {}: {io}", path.display())),
            other => other,
        })
    }

    fn noise(&self) -> Result<NoiseFamily> {
        self.noise.ok_or_else(|| Error::Config("noise is required for this subcommand".into()))
    }

    fn n(&self) -> Result<usize> {
        match self.n {
            Some(0) => Err(Error::Config("n must be positive".into())),
            Some(n) => Ok(n),
            None => Err(Error::Config("n is required for this subcommand".into())),
        }
    }

    fn n_list(&self) -> Result<Vec<usize>> {
        let list = match (&self.n_list, self.n) {
            (Some(list), _) => list.clone(),
            (None, Some(n)) => vec![n],
            (None, None) => return Err(Error::Config("n_list is required for this subcommand".into())),
        };
        if list.is_empty() || list.contains(&0) {
            return Err(Error::Config("n_list must be non-empty with positive entries".into()));
        }
        Ok(list)
    }

    fn samples(&self, default: usize) -> Result<usize> {
        match self.samples {
            Some(0) => Err(Error::Config("samples must be positive".into())),
            Some(s) => Ok(s),
            None => Ok(default),
        }
    }

    /// The instance for single-`n` subcommands: the saved one, or a fresh
    /// Haar draw.
    fn instance(&self, spec: &TeamSpec, rng: &mut crate::rng::Stream) -> Result<ProblemInstance> {
        if self.instance_file.is_some() {
            let inst = self.instance_from_file()?;
            if let Some(n) = self.n {
                if n != inst.n() {
                    return Err(Error::Config(format!("n = {n} disagrees with the instance file (n = {})", inst.n())));
                }
            }
            Ok(inst)
        } else {
            ProblemInstance::sample(spec, self.n()?, rng)
        }
    }
}

/// A written file and its one-line summary.
#[derive(Debug, Clone)]
pub struct Output {
    pub path: PathBuf,
    pub summary: String,
}

/// Resolved invocation: flags override the config.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub task: Task,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

impl Invocation {
    pub fn resolve(command: &Command) -> Result<Self> {
        let args = command.args();
        let config = ExperimentConfig::load(&args.config)?;
        let task = match (command.task(), config.subcommand) {
            (Some(t), Some(c)) if t != c => {
                return Err(Error::Config(format!("subcommand mismatch: command line says {t:?}, config says {c:?}")))
            }
            (Some(t), _) => t,
            (None, Some(c)) => c,
            (None, None) => return Err(Error::Config("`run` needs a `subcommand` field in the config".into())),
        };
        let seed = args
            .seed
            .or(config.seed)
            .ok_or_else(|| Error::Config("seed is required (in the config or via --seed)".into()))?;
        let workers = args.workers.or(config.workers);
        if workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        let out = args.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self { task, config, seed, workers, out })
    }

    /// Execute in a dedicated thread pool and return the written files.
    pub fn execute(&self) -> Result<Vec<Output>> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(w) = self.workers {
            builder = builder.num_threads(w);
        }
        let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        std::fs::create_dir_all(&self.out)?;
        pool.install(|| match self.task {
            Task::ValidateSpec => self.validate_spec(),
            Task::SolveLinear => self.solve_linear(),
            Task::SolvePbp => self.solve_pbp(),
            Task::GapSweep => self.gap_sweep(),
            Task::CltDiagnostics => self.clt_diagnostics(),
            Task::Bounds => self.bounds(),
            Task::TailMass => self.tail_mass(),
            Task::SampleInstance => self.sample_instance(),
        })
    }

    fn write(&self, name: &str, contents: &str, summary: String) -> Result<Output> {
        let path = self.out.join(name);
        std::fs::write(&path, contents)?;
        Ok(Output { path, summary })
    }

    fn write_json(&self, name: &str, value: &serde_json::Value, summary: String) -> Result<Output> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
        text.push('\n');
        self.write(name, &text, summary)
    }

    fn validate_spec(&self) -> Result<Vec<Output>> {
        let spec = self.config.team_spec()?;
        let (rank, sigma_min) = spec.w_rank();
        let jg = gaussian_cost(&spec)?;
        let value = json!({
            "m": spec.m(),
            "obs_dims": spec.obs_dims(),
            "Q": matrix_to_rows(spec.q()),
            "W": matrix_to_rows(spec.w()),
            "ell": spec.ell(),
            "ell_bar": spec.ell_bar(),
            "w_rank": rank,
            "w_sigma_min": sigma_min,
            "expected_q": spec.expected_q(),
            "gaussian_cost": jg,
        });
        let summary = format!("valid spec: m = {}, ℓ = {}, rank(W) = {rank}, J_G = {jg}", spec.m(), spec.ell());
        Ok(vec![self.write_json("spec_report.json", &value, summary)?])
    }

    fn solve_linear(&self) -> Result<Vec<Output>> {
        let spec = self.config.team_spec()?;
        let policy = solve_linear(&spec)?;
        let jg = gaussian_cost(&spec)?;
        let value = json!({
            "gains": policy.gains,
            "gamma": policy.flat(),
            "gaussian_cost": jg,
            "expected_q": spec.expected_q(),
        });
        let summary = format!("linear policy γ = {:?}, J_G = {jg}", policy.flat());
        Ok(vec![self.write_json("linear_policy.json", &value, summary)?])
    }

    fn solve_pbp(&self) -> Result<Vec<Output>> {
        let spec = self.config.team_spec()?;
        let cfg = self.config.pbp_config(&spec)?;
        let family = self.config.noise()?;
        let mut rng = stream(self.seed);
        let instance = self.config.instance(&spec, &mut rng)?;
        let noise = NoiseModel::new(family, instance.n())?;
        let linear = solve_linear(&spec)?;
        let z = instance.draw_observations(&noise, cfg.samples, &mut rng)?;
        let sol = pbp_fit(&spec, &z, None, &cfg, &linear)?;
        let j_linear = sample_cost(&spec, &linear, &z, None);
        let holdout = instance.draw_observations(&noise, cfg.samples, &mut rng)?;
        let j_holdout = sample_cost(&spec, &sol.policy, &holdout, None);
        let value = json!({
            "n": instance.n(),
            "noise": family,
            "seed": self.seed,
            "pbp": cfg,
            "gaussian_cost": gaussian_cost(&spec)?,
            "J_linear": j_linear,
            "J_pbp": sol.cost,
            "J_pbp_holdout": j_holdout,
            "gap": j_linear.value - sol.cost.value,
            "sweeps": sol.sweeps,
            "converged": sol.converged,
            "last_change": sol.last_change,
            "history": sol.history,
        });
        let policy_out = self.write(
            "pbp_policy.txt",
            &sol.policy.to_text(),
            format!("tabulated policy, {} players, {} form", spec.m(), cfg.form.name()),
        )?;
        let summary = format!(
            "n = {}: J_linear = {}, J_pbp = {} after {} sweeps",
            instance.n(),
            j_linear.value,
            sol.cost.value,
            sol.sweeps
        );
        Ok(vec![self.write_json("pbp_summary.json", &value, summary)?, policy_out])
    }

    fn gap_sweep(&self) -> Result<Vec<Output>> {
        let spec = self.config.team_spec()?;
        let cfg = self.config.pbp_config(&spec)?;
        let consts = self.config.constants()?;
        let family = self.config.noise()?;
        let n_list = self.config.n_list()?;
        let rows = gap_sweep(&spec, family, &n_list, &cfg, &consts, &mut stream(self.seed))?;
        let csv = gap_sweep_csv(&rows);
        let failed = rows.iter().filter(|r| r.error.is_some()).count();
        let chart = LineChart {
            title: format!("Linear vs PBP cost, {family} noise"),
            x_label: "noise dimension n".into(),
            y_label: "cost".into(),
            log_x: true,
            series: vec![
                Series { name: "J_linear".into(), points: rows.iter().map(|r| (r.n as f64, r.j_linear.value)).collect() },
                Series {
                    name: "J_pbp".into(),
                    points: rows.iter().map(|r| (r.n as f64, r.j_pbp.map_or(f64::NAN, |e| e.value))).collect(),
                },
                Series {
                    name: "lower bound".into(),
                    points: rows.iter().filter_map(|r| r.bounds.filter(|b| b.valid).map(|b| (r.n as f64, b.lower))).collect(),
                },
            ],
        };
        let gaps: Vec<String> = rows.iter().map(|r| r.gap.map_or("failed".into(), |g| format!("{g:.3e}"))).collect();
        Ok(vec![
            self.write("gap_sweep.csv", &csv, format!("{} rows ({failed} failed), gaps [{}]", rows.len(), gaps.join(", ")))?,
            self.write("gap_sweep.svg", &chart.render(), "cost vs n chart".into())?,
        ])
    }

    fn clt_diagnostics(&self) -> Result<Vec<Output>> {
        let family = self.config.noise()?;
        let n_list = self.config.n_list()?;
        let l = self.config.l.unwrap_or(2);
        if l == 0 {
            return Err(Error::Config("l must be positive".into()));
        }
        let samples = self.config.samples(DEFAULT_DENSITY_SAMPLES)?;
        let reports = n_list
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let noise = NoiseModel::new(family, n)?;
                density_report(&noise, l, samples, &mut stream(mix(self.seed, mix(n as u64, k as u64))))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut csv = String::from("n,l,samples,bandwidth,grid_sup_ratio_err,tv_estimate\n");
        for r in &reports {
            let _ = writeln!(csv, "{},{},{},{},{},{}", r.n, r.l, r.samples, r.bandwidth, r.grid_sup_ratio_err, r.tv_estimate);
        }
        let chart = LineChart {
            title: format!("Projected {family} noise vs Gaussian, l = {l}"),
            x_label: "noise dimension n".into(),
            y_label: "discrepancy".into(),
            log_x: true,
            series: vec![
                Series { name: "sup ratio err".into(), points: reports.iter().map(|r| (r.n as f64, r.grid_sup_ratio_err)).collect() },
                Series { name: "TV".into(), points: reports.iter().map(|r| (r.n as f64, r.tv_estimate)).collect() },
            ],
        };
        let tvs: Vec<String> = reports.iter().map(|r| format!("{:.4}", r.tv_estimate)).collect();
        Ok(vec![
            self.write("clt_diagnostics.csv", &csv, format!("{} rows, TV [{}]", reports.len(), tvs.join(", ")))?,
            self.write("clt_diagnostics.svg", &chart.render(), "discrepancy vs n chart".into())?,
        ])
    }

    fn bounds(&self) -> Result<Vec<Output>> {
        let spec = self.config.team_spec()?;
        let cfg = self.config.pbp_config(&spec)?;
        let consts = self.config.constants()?;
        let n_list = self.config.n_list()?;
        let samples = self.config.samples(DEFAULT_SAMPLES)?;
        let linear = solve_linear(&spec)?;
        let jg = gaussian_cost(&spec)?;
        let ell = spec.ell();
        let records = n_list
            .par_iter()
            .enumerate()
            .map(|(k, &n)| {
                let mut rng = stream(mix(self.seed, mix(n as u64, k as u64)));
                let gap = match self.config.policy {
                    PolicyChoice::Linear => explicit_gap_bound(&spec, n, &consts, &linear, samples, &mut rng)?,
                    PolicyChoice::Zero => explicit_gap_bound(&spec, n, &consts, &ZeroPolicy, samples, &mut rng)?,
                };
                let t = (n as f64).powf(consts.c4);
                let v_t = truncated_gaussian_value(&spec, t, &cfg, &mut rng)?;
                let fb = fundamental_bounds(jg, &v_t, n, &consts)?;
                let mut record = json!({
                    "n": n,
                    "t": t,
                    "tau": tail_weight(ell, gap.rank, t)?,
                    "gap_bound": gap,
                    "v_t": v_t,
                    "fundamental_bounds": fb,
                });
                if let Some(family) = self.config.noise {
                    if n > ell {
                        let env = NoiseModel::new(family, n)?.tail_envelope();
                        let projected = projected_envelope(&env, n, ell)?;
                        let (a_prime, b_prime) = uniform_tail_constants(&projected, ell);
                        record["density_envelope"] = json!({
                            "noise": family,
                            "envelope": env,
                            "projected_envelope": projected,
                            "a_prime": a_prime,
                            "b_prime": b_prime,
                            "uniform_density_bound": uniform_density_bound(&consts, ell, n, a_prime, b_prime)?,
                            "uniform_bound_applies": uniform_bound_applies(&consts, ell, n),
                        });
                    }
                }
                Ok(record)
            })
            .collect::<Result<Vec<_>>>()?;
        let value = json!({
            "constants": consts,
            "illustrative": consts.illustrative,
            "seed": self.seed,
            "samples": samples,
            "policy": match self.config.policy { PolicyChoice::Linear => "linear", PolicyChoice::Zero => "zero" },
            "gaussian_cost": jg,
            "records": records,
        });
        let note = if consts.illustrative { " (illustrative constants)" } else { "" };
        Ok(vec![self.write_json("bounds.json", &value, format!("{} bound records{note}", n_list.len()))?])
    }

    fn tail_mass(&self) -> Result<Vec<Output>> {
        let spec = self.config.team_spec()?;
        let family = self.config.noise()?;
        let samples = self.config.samples(DEFAULT_SAMPLES)?;
        let k_list = self.config.k_list.clone().ok_or_else(|| Error::Config("k_list is required for tail-mass".into()))?;
        let mut rng = stream(self.seed);
        let instance = self.config.instance(&spec, &mut rng)?;
        let noise = NoiseModel::new(family, instance.n())?;
        let linear = solve_linear(&spec)?;
        let policy: &dyn Policy = match self.config.policy {
            PolicyChoice::Linear => &linear,
            PolicyChoice::Zero => &ZeroPolicy,
        };
        let est = tail_mass(&instance, &noise, policy, &k_list, samples, &mut rng)?;
        let mut csv = String::from("k,T,T_se\n");
        for (k, e) in k_list.iter().zip(&est) {
            let _ = writeln!(csv, "{k},{},{}", e.value, e.stderr);
        }
        let chart = LineChart {
            title: format!("Tail cost mass, n = {}", instance.n()),
            x_label: "radius k".into(),
            y_label: "T(n, k)".into(),
            log_x: false,
            series: vec![Series { name: "T".into(), points: k_list.iter().zip(&est).map(|(&k, e)| (k, e.value)).collect() }],
        };
        Ok(vec![
            self.write("tail_mass.csv", &csv, format!("{} radii, n = {}", k_list.len(), instance.n()))?,
            self.write("tail_mass.svg", &chart.render(), "tail mass vs k chart".into())?,
        ])
    }

    fn sample_instance(&self) -> Result<Vec<Output>> {
        let spec = self.config.team_spec()?;
        let n = self.config.n()?;
        let instance = ProblemInstance::sample(&spec, n, &mut stream(self.seed))?;
        let path = self.out.join("instance.txt");
        save_instance(&instance, &path)?;
        let summary = format!("instance with n = {n}, ℓ = {}, seed {}", spec.ell(), self.seed);
        Ok(vec![Output { path, summary }])
    }
}

fn opt<T>(v: Option<T>, f: impl FnOnce(T) -> String) -> String {
    v.map_or_else(String::new, f)
}

/// Gap-sweep rows as CSV. The first ten columns are fixed; the rest add the
/// paired and combined standard errors, the holdout cost, `v(t)`, the sweep
/// count and a status (`ok` or the PBP error).
pub fn gap_sweep_csv(rows: &[GapSweepRow]) -> String {
    let mut out = String::from(
        "n,seed,J_linear,J_linear_se,J_pbp,J_pbp_se,gap,bound_upper,bound_lower,bound_valid,\
         gap_se,combined_se,J_pbp_holdout,J_pbp_holdout_se,v_t,v_t_se,sweeps,status\n",
    );
    for r in rows {
        let status = r.error.as_deref().map_or("ok".to_string(), |e| format!("\"{}\"", e.replace('"', "'")));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.seed,
            r.j_linear.value,
            r.j_linear.stderr,
            opt(r.j_pbp, |e| e.value.to_string()),
            opt(r.j_pbp, |e| e.stderr.to_string()),
            opt(r.gap, |g| g.to_string()),
            opt(r.bounds, |b| b.upper.to_string()),
            opt(r.bounds, |b| b.lower.to_string()),
            opt(r.bounds, |b| b.valid.to_string()),
            opt(r.gap_se, |g| g.to_string()),
            opt(r.combined_stderr(), |g| g.to_string()),
            opt(r.j_pbp_holdout, |e| e.value.to_string()),
            opt(r.j_pbp_holdout, |e| e.stderr.to_string()),
            opt(r.v_t, |e| e.value.to_string()),
            opt(r.v_t, |e| e.stderr.to_string()),
            opt(r.sweeps, |s| s.to_string()),
            status,
        );
    }
    out
}

/// Exit status for a run outcome: 0 success, 2 numeric failure, 1 otherwise.
pub fn exit_code(outcome: &Result<Vec<Output>>) -> i32 {
    match outcome {
        Ok(_) => 0,
        Err(e) if e.is_numeric() => 2,
        Err(_) => 1,
    }
}

/// Parse `args`, run, print summaries or the error, and return the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = Invocation::resolve(&cli.command).and_then(|inv| inv.execute());
    match &outcome {
        Ok(outputs) => {
            for o in outputs {
                println!("{}: {}", o.path.display(), o.summary);
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    exit_code(&outcome)
}
