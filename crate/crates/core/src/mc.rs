//! Seeded Monte Carlo ground truth.
//!
//! Every trial owns a ChaCha8 stream selected by its index under the master
//! seed, so a trial draws the same numbers whichever worker runs it. Results
//! are collected in trial order and reduced sequentially, which keeps every
//! summary bit-identical across thread counts.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{LinkConfig, TrafficModel};
use crate::moments::{MomentSummary, Provenance};
use crate::outage::{OutageCurve, OutageModel};
use crate::process::{nearest_per_side, sample_interferers, SamplingMode};

/// `max(1000 c, 100 r0, 50 / lambda)`, widened if needed so that the mean
/// interference lost beyond the window stays below 0.1%.
pub fn default_window(traffic: &TrafficModel, link: &LinkConfig) -> f64 {
    let w = (1e3 * traffic.hardcore())
        .max(1e2 * link.r0())
        .max(50.0 / traffic.lambda());
    w.max(bias_bounded_window(link, 1e-3))
}

/// Smallest half-length whose truncation removes at most the fraction `rel`
/// of the mean interference: `(W / r0)^(1 - eta) = rel`.
pub fn bias_bounded_window(link: &LinkConfig, rel: f64) -> f64 {
    link.r0() * rel.powf(1.0 / (1.0 - link.eta()))
}

/// Fraction of the mean interference beyond `w`.
pub fn truncation_bias(link: &LinkConfig, w: f64) -> f64 {
    (w / link.r0()).powf(1.0 - link.eta())
}

/// Trial count, seed and geometry shared by the simulators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McSettings {
    pub trials: usize,
    pub seed: u64,
    /// Half-length of the simulated road; `None` uses [`default_window`].
    pub window: Option<f64>,
    pub mode: SamplingMode,
}

impl McSettings {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            seed,
            window: None,
            mode: SamplingMode::default(),
        }
    }

    pub fn with_window(mut self, w: f64) -> Self {
        self.window = Some(w);
        self
    }

    pub fn with_mode(mut self, mode: SamplingMode) -> Self {
        self.mode = mode;
        self
    }

    fn resolve(&self, traffic: &TrafficModel, link: &LinkConfig) -> Result<f64> {
        if self.trials == 0 {
            return Err(Error::Domain("trials must be at least 1".into()));
        }
        let w = self.window.unwrap_or_else(|| default_window(traffic, link));
        if !(w > link.r0() && w.is_finite()) {
            return Err(Error::Domain(format!("window {w} must exceed r0 = {}", link.r0())));
        }
        Ok(w)
    }
}

/// Independent generator of trial `index` under `seed`.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Run `f` on a dedicated pool of `threads` workers (0 picks the default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn run_trials<T: Send>(trials: usize, seed: u64, f: impl Fn(&mut ChaCha8Rng) -> T + Sync) -> Vec<T> {
    (0..trials)
        .into_par_iter()
        .map(|i| f(&mut trial_rng(seed, i)))
        .collect()
}

#[derive(Clone, Copy)]
struct PathGain {
    eta: f64,
    int_eta: Option<i32>,
}

impl PathGain {
    fn new(link: &LinkConfig) -> Self {
        let eta = link.eta();
        let int_eta = (eta.fract() == 0.0 && eta < 64.0).then_some(eta as i32);
        Self { eta, int_eta }
    }

    #[inline]
    fn at(&self, x: f64) -> f64 {
        let r = x.abs();
        match self.int_eta {
            Some(n) => r.recip().powi(n),
            None => r.powf(-self.eta),
        }
    }
}

#[derive(Clone, Copy)]
enum Fading {
    Rayleigh,
    Nakagami(Gamma<f64>),
}

impl Fading {
    fn new(shape: u32) -> Result<Self> {
        match shape {
            0 => Err(Error::Domain("fading shape must be at least 1".into())),
            1 => Ok(Fading::Rayleigh),
            t => Ok(Fading::Nakagami(
                Gamma::new(f64::from(t), 1.0).map_err(|e| Error::Domain(e.to_string()))?,
            )),
        }
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Fading::Rayleigh => exp1(rng),
            Fading::Nakagami(g) => g.sample(rng),
        }
    }
}

#[inline]
fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 64 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Sample mean, variance (n - 1) and skewness (biased moment ratio).
pub fn sample_moments(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    let d: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let m2 = pairwise_sum(&d.iter().map(|x| x * x).collect::<Vec<_>>()) / n;
    let m3 = pairwise_sum(&d.iter().map(|x| x * x * x).collect::<Vec<_>>()) / n;
    let var = if v.len() > 1 { m2 * n / (n - 1.0) } else { 0.0 };
    (mean, var, m3 / m2.powf(1.5))
}

/// Standard errors of mean, variance and skewness from `batches` contiguous
/// batch estimates.
pub fn batch_std_errors(v: &[f64], batches: usize) -> (f64, f64, f64) {
    let b = batches.clamp(2, v.len().max(2));
    let size = v.len() / b;
    if size < 2 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let stats: Vec<(f64, f64, f64)> = (0..b).map(|i| sample_moments(&v[i * size..(i + 1) * size])).collect();
    let se = |sel: fn(&(f64, f64, f64)) -> f64| {
        let xs: Vec<f64> = stats.iter().map(sel).collect();
        (sample_moments(&xs).1 / b as f64).sqrt()
    };
    (se(|s| s.0), se(|s| s.1), se(|s| s.2))
}

/// Kolmogorov-Smirnov distance between the empirical law of `sorted` and `cdf`.
pub fn ks_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// Empirical CDF of `sorted` at `x`.
pub fn ecdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64
}

/// Interference samples with the desired-link fading drawn in the same trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleEnsemble {
    pub traffic: TrafficModel,
    pub link: LinkConfig,
    pub settings: McSettings,
    pub window: f64,
    pub fading_shape: u32,
    #[serde(skip)]
    pub interference: Vec<f64>,
    /// Exponential power fading of the desired link, one per trial.
    #[serde(skip)]
    pub link_fading: Vec<f64>,
}

/// Moments of an ensemble with batch-means standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub trials: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub se_mean: f64,
    pub se_variance: f64,
    pub se_skewness: f64,
}

const BATCHES: usize = 50;

impl SampleEnsemble {
    pub fn summary(&self) -> EnsembleSummary {
        let (mean, variance, skewness) = sample_moments(&self.interference);
        let (se_mean, se_variance, se_skewness) = batch_std_errors(&self.interference, BATCHES);
        EnsembleSummary {
            trials: self.interference.len(),
            mean,
            variance,
            skewness,
            se_mean,
            se_variance,
            se_skewness,
        }
    }

    pub fn moments(&self) -> MomentSummary {
        let (mean, variance, skewness) = sample_moments(&self.interference);
        MomentSummary {
            mean,
            variance,
            skewness: Some(skewness),
            provenance: Provenance::Empirical,
            nakagami_t: self.fading_shape,
        }
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.interference.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Empirical CDF at `points` evenly spaced quantile-range abscissae.
    pub fn ecdf_grid(&self, points: usize) -> Vec<(f64, f64)> {
        let s = self.sorted();
        let (lo, hi) = (s[0], s[s.len() - 1]);
        (0..points)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64;
                (x, ecdf(&s, x))
            })
            .collect()
    }

    /// One interference value per row under an `interference` header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Domain(format!("csv output failed: {e}"));
        w.write_record(["interference"]).map_err(io)?;
        for x in &self.interference {
            w.write_record([x.to_string()]).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Domain(format!("csv output failed: {e}")))?;
        Ok(())
    }

    /// Parameters, seed and moments as JSON.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "parameters": self,
            "summary": self.summary(),
        })
    }
}

/// Interference at the origin with gamma fading of shape `fading_shape`.
pub fn simulate_interference(
    traffic: &TrafficModel,
    link: &LinkConfig,
    settings: &McSettings,
    fading_shape: u32,
) -> Result<SampleEnsemble> {
    let w = settings.resolve(traffic, link)?;
    let fading = Fading::new(fading_shape)?;
    let gain = PathGain::new(link);
    let (r0, mode) = (link.r0(), settings.mode);
    let draws = run_trials(settings.trials, settings.seed, |rng| {
        let mut pos = Vec::new();
        sample_interferers(traffic, r0, w, mode, rng, &mut pos);
        let i: f64 = pos.iter().map(|&x| fading.draw(rng) * gain.at(x)).sum();
        let h: f64 = Exp1.sample(rng);
        (i, h)
    });
    let (interference, link_fading) = draws.into_iter().unzip();
    Ok(SampleEnsemble {
        traffic: *traffic,
        link: *link,
        settings: *settings,
        window: w,
        fading_shape,
        interference,
        link_fading,
    })
}

/// Fraction of trials with `h pr / I <= theta` at each threshold.
pub fn empirical_outage(ensemble: &SampleEnsemble, theta_db: &[f64]) -> OutageCurve {
    let mut curve = OutageCurve::new(theta_db.to_vec());
    let pr = ensemble.link.pr();
    let n = ensemble.interference.len() as f64;
    let values = curve
        .theta_lin()
        .iter()
        .map(|&theta| {
            let count = ensemble
                .interference
                .iter()
                .zip(&ensemble.link_fading)
                .filter(|(&i, &h)| h * pr <= theta * i)
                .count();
            count as f64 / n
        })
        .collect();
    curve.push_column(OutageModel::Empirical, values);
    curve
}

/// Binomial standard error of an empirical probability.
pub fn proportion_std_error(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// Mean delay estimate from capped slot-by-slot runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub runs: usize,
    /// Fraction of runs that hit the slot cap (counted at the cap).
    pub censored_fraction: f64,
}

fn delay_estimate(slots: Vec<(u64, bool)>) -> Result<DelayEstimate> {
    let runs = slots.len();
    let censored = slots.iter().filter(|s| s.1).count() as f64 / runs as f64;
    if censored > 0.05 {
        return Err(Error::ExcessCensoring { fraction: censored });
    }
    let v: Vec<f64> = slots.iter().map(|s| s.0 as f64).collect();
    let (mean, var, _) = sample_moments(&v);
    Ok(DelayEstimate {
        mean,
        std_error: (var / runs as f64).sqrt(),
        runs,
        censored_fraction: censored,
    })
}

fn check_delay_args(theta: f64, cap: u64) -> Result<()> {
    if cap == 0 {
        return Err(Error::Domain("slot cap must be at least 1".into()));
    }
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!(
            "theta = {theta} must be finite and non-negative"
        )));
    }
    Ok(())
}

/// Slots until first success with the interferers frozen for the whole run
/// and all fading redrawn every slot.
pub fn empirical_mean_delay_static(
    traffic: &TrafficModel,
    link: &LinkConfig,
    theta: f64,
    settings: &McSettings,
    cap: u64,
) -> Result<DelayEstimate> {
    check_delay_args(theta, cap)?;
    let w = settings.resolve(traffic, link)?;
    let gain = PathGain::new(link);
    let (r0, mode, s) = (link.r0(), settings.mode, theta / link.pr());
    let slots = run_trials(settings.trials, settings.seed, |rng| {
        let mut pos = Vec::new();
        sample_interferers(traffic, r0, w, mode, rng, &mut pos);
        let gains: Vec<f64> = pos.iter().map(|&x| gain.at(x)).collect();
        for slot in 1..=cap {
            let h: f64 = Exp1.sample(rng);
            let i: f64 = gains.iter().map(|g| exp1(&mut *rng) * g).sum::<f64>();
            if h > s * i {
                return (slot, false);
            }
        }
        (cap, true)
    });
    delay_estimate(slots)
}

/// Slots until first success with a fresh interferer configuration every slot.
pub fn empirical_mean_delay_iid(
    traffic: &TrafficModel,
    link: &LinkConfig,
    theta: f64,
    settings: &McSettings,
    cap: u64,
) -> Result<DelayEstimate> {
    check_delay_args(theta, cap)?;
    let w = settings.resolve(traffic, link)?;
    let gain = PathGain::new(link);
    let (r0, mode, s) = (link.r0(), settings.mode, theta / link.pr());
    let slots = run_trials(settings.trials, settings.seed, |rng| {
        let mut pos = Vec::new();
        for slot in 1..=cap {
            sample_interferers(traffic, r0, w, mode, rng, &mut pos);
            let i: f64 = pos.iter().map(|&x| exp1(&mut *rng) * gain.at(x)).sum::<f64>();
            let h: f64 = Exp1.sample(rng);
            if h > s * i {
                return (slot, false);
            }
        }
        (cap, true)
    });
    delay_estimate(slots)
}

/// Dual-branch MRC outage from shared positions and independent fading.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MrcEnsemble {
    pub curve: OutageCurve,
    /// Pearson correlation of the two branch interferences.
    pub correlation: f64,
    pub trials: usize,
}

pub fn empirical_mrc(
    traffic: &TrafficModel,
    link: &LinkConfig,
    theta_db: &[f64],
    settings: &McSettings,
) -> Result<MrcEnsemble> {
    let w = settings.resolve(traffic, link)?;
    let gain = PathGain::new(link);
    let (r0, mode) = (link.r0(), settings.mode);
    let draws = run_trials(settings.trials, settings.seed, |rng| {
        let mut pos = Vec::new();
        sample_interferers(traffic, r0, w, mode, rng, &mut pos);
        let (mut i1, mut i2) = (0.0, 0.0);
        for &x in &pos {
            let g = gain.at(x);
            let (a, b): (f64, f64) = (Exp1.sample(rng), Exp1.sample(rng));
            i1 += a * g;
            i2 += b * g;
        }
        let (h1, h2): (f64, f64) = (Exp1.sample(rng), Exp1.sample(rng));
        // post-combining SIR divided by pr
        (i1, i2, h1 / i1 + h2 / i2)
    });
    let n = draws.len();
    let i1: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let i2: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let correlation = pearson(&i1, &i2);
    let mut curve = OutageCurve::new(theta_db.to_vec());
    let pr = link.pr();
    let values = curve
        .theta_lin()
        .iter()
        .map(|&theta| draws.iter().filter(|d| d.2 * pr <= theta).count() as f64 / n as f64)
        .collect();
    curve.push_column(OutageModel::EmpiricalMrc, values);
    Ok(MrcEnsemble {
        curve,
        correlation,
        trials: n,
    })
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va, _) = sample_moments(a);
    let (mb, vb, _) = sample_moments(b);
    let n = a.len() as f64;
    let cov: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    pairwise_sum(&cov) / (n - 1.0) / (va * vb).sqrt()
}

/// Empirical distances to the k nearest interferers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KthNearest {
    /// `distances[k-1]` holds the sorted k-th nearest distances.
    #[serde(skip)]
    pub distances: Vec<Vec<f64>>,
    pub stats: Vec<KthStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KthStats {
    pub k: usize,
    pub mean: f64,
    pub cov: f64,
    pub skewness: f64,
    pub se_cov: f64,
    pub se_skewness: f64,
}

impl KthNearest {
    pub fn ecdf(&self, k: usize, x: f64) -> f64 {
        ecdf(&self.distances[k - 1], x)
    }
}

/// The `k_max <= 5` nearest unsigned distances beyond `r0`.
pub fn empirical_kth_nearest(
    traffic: &TrafficModel,
    link: &LinkConfig,
    k_max: usize,
    settings: &McSettings,
) -> Result<KthNearest> {
    if !(1..=5).contains(&k_max) {
        return Err(Error::Domain(format!("k = {k_max} must lie in 1..=5")));
    }
    if settings.trials < 2 {
        return Err(Error::Domain("at least two trials are needed".into()));
    }
    let (r0, mode) = (link.r0(), settings.mode);
    let draws = run_trials(settings.trials, settings.seed, |rng| {
        let (right, left) = nearest_per_side(traffic, r0, k_max, mode, rng);
        // merge the two increasing runs
        let mut out = [0.0; 5];
        let (mut i, mut j) = (0, 0);
        for slot in out.iter_mut().take(k_max) {
            if right[i] <= left[j] {
                *slot = right[i];
                i += 1;
            } else {
                *slot = left[j];
                j += 1;
            }
        }
        out
    });
    let mut distances = Vec::with_capacity(k_max);
    let mut stats = Vec::with_capacity(k_max);
    for k in 0..k_max {
        let v: Vec<f64> = draws.iter().map(|d| d[k]).collect();
        let (mean, var, skewness) = sample_moments(&v);
        let b = BATCHES.min(v.len() / 2).max(2);
        let size = v.len() / b;
        let per_batch: Vec<(f64, f64)> = (0..b)
            .map(|i| {
                let (m, va, sk) = sample_moments(&v[i * size..(i + 1) * size]);
                (va.sqrt() / m, sk)
            })
            .collect();
        let se = |xs: Vec<f64>| (sample_moments(&xs).1 / b as f64).sqrt();
        stats.push(KthStats {
            k: k + 1,
            mean,
            cov: var.sqrt() / mean,
            skewness,
            se_cov: se(per_batch.iter().map(|p| p.0).collect()),
            se_skewness: se(per_batch.iter().map(|p| p.1).collect()),
        });
        let mut sorted = v;
        sorted.sort_by(f64::total_cmp);
        distances.push(sorted);
    }
    Ok(KthNearest { distances, stats })
}
