use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use headway::delay::SeriesSpec;
use headway::experiments::Experiment;
use headway::mc::{default_window, McSettings};
use headway::outage::theta_grid_db;
use headway::{LinkConfig, TrafficModel};

use crate::Failure;

#[derive(Parser, Debug)]
#[command(
    name = "headway",
    version,
    about = "Interference, outage, mean delay and MRC for a receiver among hardcore-spaced interferers"
)]
pub struct Cli {
    /// JSON file of flat keys named like the long flags (e.g. "theta-min").
    /// Flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads, 0 for one per core. Output does not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Mean, variance and skewness of the interference.
    Moments {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Gamma and shifted-gamma laws matched to the interference moments.
    Fit {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// CDF and density of the distance to the nearest interferer.
    Distance {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of abscissae [default: 200]
        #[arg(long)]
        points: Option<usize>,
        /// Largest distance [default: r0 + c + 5/mu]
        #[arg(long)]
        x_max: Option<f64>,
        #[command(flatten)]
        sim: SimulateArg,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Outage probability over a threshold grid.
    Outage {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        sim: SimulateArg,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Mean local delay, i.i.d. and static positions, over a threshold grid.
    Delay {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        series: SeriesArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Dual-branch maximum ratio combining outage.
    Mrc {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Branch correlation fed to the bivariate fits [default: exact]
        #[arg(long, value_enum)]
        correlation: Option<CorrelationChoice>,
        #[command(flatten)]
        sim: SimulateArg,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Raw Monte Carlo interference samples.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        mc: McArgs,
        /// Nakagami fading parameter of the interferers [default: 1]
        #[arg(long)]
        fading_shape: Option<u32>,
        /// Also write moments with standard errors as JSON here
        #[arg(long, value_name = "PATH")]
        summary: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Regenerate a published table or figure and check it.
    Reproduce {
        #[arg(value_enum)]
        experiment: ExperimentName,
        /// Trials per simulation [default: depends on the experiment]
        #[arg(long)]
        trials: Option<usize>,
        /// Base seed [default: 7]
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        series: SeriesArgs,
        /// Directory for the CSV tables and summary JSON [default: reproduce-out]
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ExperimentName {
    Table1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
}

impl ExperimentName {
    pub fn experiment(self) -> Experiment {
        match self {
            ExperimentName::Table1 => Experiment::Table1,
            ExperimentName::Fig2 => Experiment::Fig2,
            ExperimentName::Fig3 => Experiment::Fig3,
            ExperimentName::Fig4 => Experiment::Fig4,
            ExperimentName::Fig5 => Experiment::Fig5,
            ExperimentName::Fig6 => Experiment::Fig6,
            ExperimentName::Fig7 => Experiment::Fig7,
        }
    }
}

#[derive(ValueEnum, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum MomentSource {
    /// Closed-form small-occupancy approximations
    Analytic,
    /// Numerical integration of the exact pair correlation
    Quadrature,
    /// Sample moments of a simulation
    Empirical,
    /// Poisson field of the same intensity
    Ppp,
}

#[derive(ValueEnum, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationChoice {
    Exact,
    Linearized,
    Quadrature,
}

fn value_name<T: ValueEnum>(v: T) -> String {
    v.to_possible_value()
        .map(|p| p.get_name().to_string())
        .unwrap_or_default()
}

/// Values read from `--config`.
#[derive(Deserialize, Default, Debug)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Config {
    pub lambda: Option<f64>,
    pub hardcore: Option<f64>,
    pub r0: Option<f64>,
    pub eta: Option<f64>,
    pub pr: Option<f64>,
    pub theta_min: Option<f64>,
    pub theta_max: Option<f64>,
    pub theta_steps: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub window: Option<f64>,
    pub t0: Option<usize>,
    pub digits: Option<u32>,
    pub source: Option<MomentSource>,
    pub correlation: Option<CorrelationChoice>,
    pub simulate: Option<bool>,
    pub points: Option<usize>,
    pub x_max: Option<f64>,
    pub fading_shape: Option<u32>,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Config {
    pub fn load(path: &std::path::Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Flag, else config value, else default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

/// Shortest round-trip text, in exponent form for very small or large values.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

/// Renders resolved settings back into flags for the CSV header.
#[derive(Default)]
pub struct Flags(Vec<String>);

impl Flags {
    pub fn push(&mut self, name: &str, value: impl std::fmt::Display) {
        self.0.push(format!("--{name} {value}"));
    }

    pub fn switch(&mut self, name: &str, on: bool) {
        if on {
            self.0.push(format!("--{name}"));
        }
    }

    pub fn line(&self) -> String {
        self.0.join(" ")
    }
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Interferer intensity per meter [default: 0.1]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Hardcore distance c in meters [default: 0]
    #[arg(long)]
    pub hardcore: Option<f64>,
    /// Guard-zone half-length in meters [default: 100]
    #[arg(long)]
    pub r0: Option<f64>,
    /// Pathloss exponent [default: 3]
    #[arg(long)]
    pub eta: Option<f64>,
    /// Received power of the desired link in Watts [default: 1]
    #[arg(long)]
    pub pr: Option<f64>,
}

impl ModelArgs {
    pub fn resolve(&self, cfg: &Config, flags: &mut Flags) -> Result<(TrafficModel, LinkConfig), Failure> {
        let lambda = pick(self.lambda, cfg.lambda, 0.1);
        let c = pick(self.hardcore, cfg.hardcore, 0.0);
        let r0 = pick(self.r0, cfg.r0, 100.0);
        let eta = pick(self.eta, cfg.eta, 3.0);
        let pr = pick(self.pr, cfg.pr, 1.0);
        flags.push("lambda", num(lambda));
        flags.push("hardcore", num(c));
        flags.push("r0", num(r0));
        flags.push("eta", num(eta));
        flags.push("pr", num(pr));
        Ok((TrafficModel::new(lambda, c)?, LinkConfig::new(r0, eta, pr)?))
    }
}

#[derive(Args, Debug)]
pub struct SourceArgs {
    /// Where the interference moments come from [default: analytic]
    #[arg(long, value_enum)]
    pub source: Option<MomentSource>,
}

impl SourceArgs {
    pub fn resolve(&self, cfg: &Config, flags: &mut Flags) -> MomentSource {
        let s = pick(self.source, cfg.source, MomentSource::Analytic);
        flags.push("source", value_name(s));
        s
    }
}

#[derive(Args, Debug)]
pub struct GridArgs {
    /// Smallest SIR threshold in dB [default: -10]
    #[arg(long, allow_negative_numbers = true)]
    pub theta_min: Option<f64>,
    /// Largest SIR threshold in dB [default: 30]
    #[arg(long, allow_negative_numbers = true)]
    pub theta_max: Option<f64>,
    /// Number of dB-spaced thresholds [default: 41]
    #[arg(long)]
    pub theta_steps: Option<usize>,
}

impl GridArgs {
    pub fn resolve(&self, cfg: &Config, flags: &mut Flags) -> Result<Vec<f64>, Failure> {
        let lo = pick(self.theta_min, cfg.theta_min, -10.0);
        let hi = pick(self.theta_max, cfg.theta_max, 30.0);
        let n = pick(self.theta_steps, cfg.theta_steps, 41);
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) || n == 0 {
            return Err(Failure::Usage(format!(
                "theta grid needs theta-min <= theta-max and theta-steps >= 1, got {lo}, {hi}, {n}"
            )));
        }
        flags.push("theta-min", num(lo));
        flags.push("theta-max", num(hi));
        flags.push("theta-steps", n);
        Ok(theta_grid_db(lo, hi, n))
    }
}

#[derive(Args, Debug)]
pub struct McArgs {
    /// Monte Carlo trials [default: 100000]
    #[arg(long)]
    pub trials: Option<usize>,
    /// Seed of the trial generators [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Half-length of the simulated road in meters [default: max(1000 c, 100 r0, 50/lambda), widened to keep truncation bias below 0.1%]
    #[arg(long)]
    pub window: Option<f64>,
}

impl McArgs {
    pub fn resolve(&self, cfg: &Config, traffic: &TrafficModel, link: &LinkConfig, flags: &mut Flags) -> McSettings {
        let trials = pick(self.trials, cfg.trials, 100_000);
        let seed = pick(self.seed, cfg.seed, 7);
        let window = pick(self.window, cfg.window, default_window(traffic, link));
        flags.push("trials", trials);
        flags.push("seed", seed);
        flags.push("window", num(window));
        McSettings::new(trials, seed).with_window(window)
    }
}

#[derive(Args, Debug)]
pub struct SimulateArg {
    /// Add a Monte Carlo column
    #[arg(long)]
    pub simulate: bool,
}

impl SimulateArg {
    pub fn resolve(&self, cfg: &Config, flags: &mut Flags) -> bool {
        let on = self.simulate || cfg.simulate.unwrap_or(false);
        flags.switch("simulate", on);
        on
    }
}

#[derive(Args, Debug)]
pub struct SeriesArgs {
    /// Truncation of the static-position delay series [default: 2000]
    #[arg(long)]
    pub t0: Option<usize>,
    /// Working precision in decimal digits [default: just enough for t0]
    #[arg(long)]
    pub digits: Option<u32>,
}

impl SeriesArgs {
    pub fn resolve(&self, cfg: &Config, flags: &mut Flags) -> Result<SeriesSpec, Failure> {
        let t0 = pick(self.t0, cfg.t0, 2000);
        let mut spec = SeriesSpec::for_truncation(t0);
        spec.digits = pick(self.digits, cfg.digits, spec.digits);
        spec.check().map_err(|e| Failure::Usage(e.to_string()))?;
        flags.push("t0", t0);
        flags.push("digits", spec.digits);
        Ok(spec)
    }
}

#[derive(Args, Debug)]
pub struct OutArgs {
    /// CSV destination [default: standard output]
    #[arg(long, short, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

impl OutArgs {
    pub fn resolve(&self, cfg: &Config) -> Option<PathBuf> {
        self.out.clone().or_else(|| cfg.out.clone())
    }
}
