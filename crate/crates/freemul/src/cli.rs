//! Command-line front end: argument parsing, config resolution and artifact writing.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;

use freemul_core::convolution::{default_grid, find_lower_edge, find_upper_edge, solve_point, uniform_grid, DEFAULT_EVAL_ETA};
use freemul_core::{SolverConfig, SpectralMeasure, SpikedModel};

use crate::error::{Error, Result};
use crate::experiments::{density_parallel, outlier_experiment, predict, simulate, SimulationPlan, SimulationReport};
use crate::formats::{
    config_hash, csv_table, density_csv, read_json, read_measure, to_json_pretty, write_text, ErrorRecord, MeasureSpec,
    Provenance, SolutionRecord, SpikeSpec,
};
use crate::lab::{decompose_trials, Ensemble, ModelInstance};
use crate::presets::preset;

const DEFAULT_GRID_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Density and Stieltjes transform of μA ⊠ μB on a grid (CSV).
    Density,
    /// Lower and upper edges of the support (JSON).
    Edges,
    /// Subordination functions on a grid at height --eta (JSON).
    Subordinate,
    /// Outlier locations and overlaps for a spiked model (JSON).
    SpikedPredict,
    /// Monte Carlo run with full data (JSON plus eigenvalue CSV).
    Simulate,
    /// Monte Carlo run reduced to pass/fail checks (JSON).
    Verify,
    /// Spike strength and spike count estimators on sampled data (JSON).
    Estimate,
}

#[derive(Debug, Parser)]
#[command(name = "freemul", version, about = "Free multiplicative convolution of spectral measures")]
pub struct Args {
    pub command: Command,
    /// Measure JSON for A.
    #[arg(long = "muA", value_name = "PATH")]
    pub mu_a: Option<PathBuf>,
    /// Measure JSON for B.
    #[arg(long = "muB", value_name = "PATH")]
    pub mu_b: Option<PathBuf>,
    /// Bundled scenario: two-atom, smooth, spiked or multi-spike.
    #[arg(long)]
    pub preset: Option<String>,
    /// Evaluation grid as lo:hi:count.
    #[arg(long, value_name = "LO:HI:COUNT")]
    pub grid: Option<String>,
    /// Height above the real axis; 0 asks for the real-line limit.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Matrix dimension.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Spike JSON {"d_a":[...],"d_b":[...],"n":N}.
    #[arg(long, value_name = "PATH")]
    pub spikes: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Residual tolerance of the subordination solver.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl std::str::FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("grid '{s}' is not lo:hi:count"));
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, count] = parts[..] else { return Err(bad()) };
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || count < 2 {
            return Err(Error::Config(format!("grid '{s}' needs finite lo < hi and count >= 2")));
        }
        Ok(Self { lo, hi, count })
    }
}

/// Fully resolved run: measures loaded, presets expanded, defaults applied.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub preset: Option<String>,
    pub mu_a: SpectralMeasure,
    pub mu_b: SpectralMeasure,
    pub grid: Option<GridSpec>,
    pub eta: Option<f64>,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub seed: u64,
    pub spikes: Option<SpikeSpec>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub threads: usize,
}

// What the config hash covers: everything that can change the numbers, but not
// where they are written or how many threads compute them.
#[derive(Serialize)]
struct HashedConfig<'a> {
    command: Command,
    preset: &'a Option<String>,
    mu_a: MeasureSpec,
    mu_b: MeasureSpec,
    grid: &'a Option<GridSpec>,
    eta: Option<f64>,
    n: Option<usize>,
    trials: Option<usize>,
    seed: u64,
    spikes: &'a Option<SpikeSpec>,
    tol: Option<f64>,
}

impl RunConfig {
    pub fn from_args(args: Args) -> Result<Self> {
        let from_preset = args.preset.as_deref().map(|name| preset(name, args.n)).transpose()?;
        let load = |path: &Option<PathBuf>, fallback: Option<&SpectralMeasure>, flag: &str| match (path, fallback) {
            (Some(p), _) => read_measure(p),
            (None, Some(mu)) => Ok(mu.clone()),
            (None, None) => Err(Error::Config(format!("{flag} (or --preset) is required"))),
        };
        let mu_a = load(&args.mu_a, from_preset.as_ref().map(|p| &p.mu_a), "--muA")?;
        let mu_b = load(&args.mu_b, from_preset.as_ref().map(|p| &p.mu_b), "--muB")?;
        let mut spikes = match &args.spikes {
            Some(path) => Some(read_json::<SpikeSpec>(path)?),
            None => from_preset.and_then(|p| p.spikes),
        };
        if let (Some(s), Some(n)) = (spikes.as_mut(), args.n) {
            s.n = n;
        }
        let grid = args.grid.as_deref().map(str::parse).transpose()?;
        if let Some(eta) = args.eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(Error::Config("--eta must be a finite non-negative number".into()));
            }
        }
        if let Some(tol) = args.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::Config("--tol must be positive".into()));
            }
        }
        let cfg = Self {
            command: args.command,
            preset: args.preset,
            mu_a,
            mu_b,
            grid,
            eta: args.eta,
            n: args.n,
            trials: args.trials,
            seed: args.seed,
            spikes,
            tol: args.tol,
            out: args.out,
            threads: args.threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        use Command::*;
        let sampled = matches!(self.command, Simulate | Verify | Estimate);
        if sampled && self.trials.unwrap_or(0) == 0 {
            return Err(Error::Config("--trials >= 1 is required for this command".into()));
        }
        if matches!(self.command, SpikedPredict | Estimate) && self.spikes.is_none() {
            return Err(Error::Config("a spike specification is required (--spikes or a spiked --preset)".into()));
        }
        if matches!(self.command, Simulate | Verify) && self.dimension().is_none() {
            return Err(Error::Config("--n is required for this command".into()));
        }
        if let Some(n) = self.dimension() {
            if n < 2 {
                return Err(Error::Config("--n must be at least 2".into()));
            }
        }
        Ok(())
    }

    fn dimension(&self) -> Option<usize> {
        self.spikes.as_ref().map(|s| s.n).or(self.n)
    }

    pub fn solver(&self) -> SolverConfig {
        let mut cfg = SolverConfig::default();
        if let Some(tol) = self.tol {
            cfg.tol = tol;
        }
        cfg
    }

    pub fn hash(&self) -> String {
        config_hash(&HashedConfig {
            command: self.command,
            preset: &self.preset,
            mu_a: MeasureSpec::from_measure(&self.mu_a),
            mu_b: MeasureSpec::from_measure(&self.mu_b),
            grid: &self.grid,
            eta: self.eta,
            n: self.n,
            trials: self.trials,
            seed: self.seed,
            spikes: &self.spikes,
            tol: self.tol,
        })
    }

    pub fn provenance(&self) -> Provenance {
        Provenance::new(self.hash())
    }

    fn grid_points(&self) -> Vec<f64> {
        match self.grid {
            Some(g) => uniform_grid(g.lo, g.hi, g.count),
            None => default_grid(&self.mu_a, &self.mu_b, DEFAULT_GRID_POINTS),
        }
    }

    fn spiked_model(&self) -> Result<Option<SpikedModel>> {
        let Some(s) = &self.spikes else { return Ok(None) };
        SpikedModel::with_config(self.mu_a.clone(), self.mu_b.clone(), s.d_a.clone(), s.d_b.clone(), s.n, self.solver())
            .map(Some)
            .map_err(|e| match e {
                freemul_core::Error::InvalidModel(why) => Error::Config(why.to_string()),
                other => other.into(),
            })
    }
}

#[derive(Serialize)]
struct Artifact<'a, T> {
    version: &'a str,
    config_hash: &'a str,
    command: Command,
    result: T,
}

#[derive(Serialize)]
struct EdgesReport {
    e_minus: f64,
    e_plus: f64,
    omega_a_at_upper: f64,
    omega_b_at_upper: f64,
    lower_is_hard: bool,
    upper_is_hard: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    n: usize,
    trials: usize,
    seed: u64,
    passed: bool,
    checks: Vec<crate::experiments::Check>,
}

fn artifact<T: Serialize>(command: Command, provenance: &Provenance, result: T) -> String {
    to_json_pretty(&Artifact { version: &provenance.version, config_hash: &provenance.config_hash, command, result })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|source| Error::Io { path: PathBuf::from("<stdout>"), source })
        }
    }
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn run_simulation(cfg: &RunConfig) -> Result<SimulationReport> {
    let model = cfg.spiked_model()?;
    let n = cfg.dimension().expect("validated");
    let plan = SimulationPlan { ensemble: Ensemble::Orthogonal, ..SimulationPlan::new(n, cfg.trials.unwrap_or(1), cfg.seed) };
    simulate(&cfg.mu_a, &cfg.mu_b, model.as_ref(), &plan, &cfg.solver())
}

/// Executes one resolved command and writes its artifacts.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let provenance = cfg.provenance();
    let solver = cfg.solver();
    let out = cfg.out.as_deref();
    match cfg.command {
        Command::Density => {
            let grid = cfg.grid_points();
            let result = density_parallel(&cfg.mu_a, &cfg.mu_b, &grid, cfg.eta.unwrap_or(DEFAULT_EVAL_ETA), &solver)?;
            emit(out, &density_csv(&result, provenance.clone()))
        }
        Command::Edges => {
            let lower = find_lower_edge(&cfg.mu_a, &cfg.mu_b, &solver)?;
            let upper = find_upper_edge(&cfg.mu_a, &cfg.mu_b, &solver)?;
            let report = EdgesReport {
                e_minus: lower.location,
                e_plus: upper.location,
                omega_a_at_upper: upper.omega_a,
                omega_b_at_upper: upper.omega_b,
                lower_is_hard: lower.hard,
                upper_is_hard: upper.hard,
            };
            emit(out, &artifact(cfg.command, &provenance, &report))
        }
        Command::Subordinate => {
            let eta = cfg.eta.unwrap_or(1e-3);
            let records = cfg
                .grid_points()
                .iter()
                .map(|&x| solve_point(&cfg.mu_a, &cfg.mu_b, x, eta, &solver).map(|s| SolutionRecord::from(&s)))
                .collect::<freemul_core::Result<Vec<_>>>()?;
            emit(out, &artifact(cfg.command, &provenance, &records))
        }
        Command::SpikedPredict => {
            let model = cfg.spiked_model()?.expect("validated");
            emit(out, &artifact(cfg.command, &provenance, &predict(&model)?))
        }
        Command::Simulate => {
            let report = run_simulation(cfg)?;
            if let Some(path) = out {
                let rows = report
                    .eigenvalue_rows
                    .iter()
                    .enumerate()
                    .flat_map(|(t, row)| row.iter().enumerate().map(move |(i, l)| vec![t as f64, (i + 1) as f64, *l]));
                write_text(&sibling(path, "eigenvalues.csv"), &csv_table(&["trial", "index", "lambda"], rows, &provenance))?;
                let checks = report.checks.iter().map(|c| vec![c.value, c.bound, f64::from(u8::from(c.passed))]);
                write_text(&sibling(path, "checks.csv"), &csv_table(&["value", "bound", "passed"], checks, &provenance))?;
            }
            emit(out, &artifact(cfg.command, &provenance, &report))
        }
        Command::Verify => {
            let report = run_simulation(cfg)?;
            let verdict = VerifyReport {
                n: report.n,
                trials: report.trials,
                seed: report.seed,
                passed: report.checks.iter().all(|c| c.passed),
                checks: report.checks,
            };
            for c in &verdict.checks {
                eprintln!("{} {}: {:.4e} <= {:.4e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.bound);
            }
            emit(out, &artifact(cfg.command, &provenance, &verdict))
        }
        Command::Estimate => {
            let model = cfg.spiked_model()?.expect("validated");
            let inst = ModelInstance::from_spiked(&model, Ensemble::Orthogonal, cfg.seed)?;
            let decs = decompose_trials(&inst, cfg.trials.unwrap_or(1), true)?;
            emit(out, &artifact(cfg.command, &provenance, &outlier_experiment(&model, &inst, &decs)?))
        }
    }
}

fn configure_threads(threads: usize) {
    if threads > 0 {
        // Fails only if a pool already exists, in which case that pool is used.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    configure_threads(args.threads);
    let cfg = match RunConfig::from_args(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("freemul: {e}");
            return e.exit_code();
        }
    };
    match run(&cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("freemul: {e}");
            if e.exit_code() == 2 {
                println!("{}", serde_json::to_string(&ErrorRecord::new(&e, cfg.provenance())).expect("record serialises"));
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g: GridSpec = "0.5:4:100".parse().unwrap();
        assert_eq!(g, GridSpec { lo: 0.5, hi: 4.0, count: 100 });
        for bad in ["1:2", "2:1:10", "0:1:1", "a:b:c", "0:inf:10"] {
            assert!(bad.parse::<GridSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn hash_ignores_output_location_and_threads() {
        let parse = |extra: &[&str]| {
            let mut argv = vec!["freemul", "edges", "--preset", "two-atom"];
            argv.extend_from_slice(extra);
            RunConfig::from_args(Args::try_parse_from(argv).unwrap()).unwrap().hash()
        };
        let base = parse(&[]);
        assert_eq!(base, parse(&["--out", "x.json", "--threads", "3"]));
        assert_ne!(base, parse(&["--seed", "1"]));
    }

    #[test]
    fn sampled_commands_need_trials() {
        let argv = ["freemul", "simulate", "--preset", "two-atom", "--n", "10"];
        let err = RunConfig::from_args(Args::try_parse_from(argv).unwrap()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(main_with(["freemul", "nonsense"]), 1);
        assert_eq!(main_with(["freemul", "edges"]), 1);
    }
}
