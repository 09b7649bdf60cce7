//! Recursive refitting of toy generative models.
//!
//! Each generation draws `m` samples, `round(rho * m)` of them from the fixed
//! origin model ("human" data) and the rest from the current model, then
//! refits by maximum likelihood. With `rho = 0` the Gaussian variance decays
//! geometrically in expectation by `(m - 1) / m` per generation and
//! categorical symbols that miss one generation never return.
//!
//! Sampling uses common random numbers: every generation consumes exactly `m`
//! noise variates from the run's stream (standard normals for the Gaussian,
//! uniforms for the categorical), and the mix only decides which model maps
//! each variate to a sample. Runs that differ only in `rho` therefore share
//! all of their randomness.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::diversity::entropy_bits;

/// Tail threshold, in origin standard deviations, for the per-generation
/// tail-mass metric.
pub const TAIL_K: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollapseError {
    #[error("degenerate fit at generation {generation}: all samples identical")]
    DegenerateFit { generation: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub mu: f64,
    pub sigma2: f64,
}

impl GaussianModel {
    pub fn new(mu: f64, sigma2: f64) -> Result<Self, CollapseError> {
        if sigma2 <= 0.0 || !sigma2.is_finite() || !mu.is_finite() {
            return Err(CollapseError::InvalidModel(format!(
                "gaussian needs finite mu and sigma2 > 0, got ({mu}, {sigma2})"
            )));
        }
        Ok(Self { mu, sigma2 })
    }

    pub fn standard() -> Self {
        Self { mu: 0.0, sigma2: 1.0 }
    }

    /// Probability mass outside `origin.mu ± k·origin.sigma`.
    pub fn tail_mass_vs(&self, origin: &GaussianModel, k: f64) -> f64 {
        let sigma = self.sigma2.sqrt();
        let half = k * origin.sigma2.sqrt();
        let lo = (origin.mu - half - self.mu) / sigma;
        let hi = (origin.mu + half - self.mu) / sigma;
        normal_cdf(lo) + (1.0 - normal_cdf(hi))
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Distribution over integer symbols. Only symbols with positive probability
/// are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<u32, f64>", into = "BTreeMap<u32, f64>")]
pub struct CategoricalModel {
    probabilities: BTreeMap<u32, f64>,
    #[serde(skip)]
    support: Vec<u32>,
    #[serde(skip)]
    cdf: Vec<f64>,
}

impl TryFrom<BTreeMap<u32, f64>> for CategoricalModel {
    type Error = CollapseError;

    fn try_from(probabilities: BTreeMap<u32, f64>) -> Result<Self, Self::Error> {
        Self::new(probabilities)
    }
}

impl From<CategoricalModel> for BTreeMap<u32, f64> {
    fn from(m: CategoricalModel) -> Self {
        m.probabilities
    }
}

impl CategoricalModel {
    pub fn new(probabilities: BTreeMap<u32, f64>) -> Result<Self, CollapseError> {
        if probabilities.is_empty() {
            return Err(CollapseError::InvalidModel("empty categorical".into()));
        }
        if let Some((s, p)) = probabilities.iter().find(|(_, p)| !(**p > 0.0 && **p <= 1.0)) {
            return Err(CollapseError::InvalidModel(format!(
                "probability of symbol {s} is {p}, must be in (0, 1]"
            )));
        }
        let sum: f64 = probabilities.values().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(CollapseError::InvalidModel(format!("probabilities sum to {sum}")));
        }
        let support: Vec<u32> = probabilities.keys().copied().collect();
        let cdf = probabilities
            .values()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            probabilities,
            support,
            cdf,
        })
    }

    pub fn uniform(symbols: u32) -> Result<Self, CollapseError> {
        if symbols == 0 {
            return Err(CollapseError::InvalidModel("need at least one symbol".into()));
        }
        let p = 1.0 / f64::from(symbols);
        Self::new((0..symbols).map(|s| (s, p)).collect())
    }

    pub fn probabilities(&self) -> &BTreeMap<u32, f64> {
        &self.probabilities
    }

    pub fn probability(&self, symbol: u32) -> f64 {
        self.probabilities.get(&symbol).copied().unwrap_or(0.0)
    }

    pub fn distinct(&self) -> usize {
        self.probabilities.len()
    }

    pub fn entropy_bits(&self) -> f64 {
        entropy_bits(self.probabilities.values().copied())
    }

    /// Inverse-CDF lookup of a uniform variate in [0, 1).
    fn quantile(&self, u: f64) -> u32 {
        let target = u * self.cdf[self.cdf.len() - 1];
        let idx = self.cdf.partition_point(|c| *c <= target);
        self.support[idx.min(self.support.len() - 1)]
    }

    /// Mean and standard deviation of the symbol values.
    fn moments(&self) -> (f64, f64) {
        let mean: f64 = self.probabilities.iter().map(|(s, p)| f64::from(*s) * p).sum();
        let var: f64 = self
            .probabilities
            .iter()
            .map(|(s, p)| (f64::from(*s) - mean).powi(2) * p)
            .sum();
        (mean, var.sqrt())
    }

    /// Mass this model places on symbols whose value lies beyond `k` standard
    /// deviations of the origin's symbol-value mean. Zero when the origin is a
    /// point mass.
    pub fn tail_mass_vs(&self, origin: &CategoricalModel, k: f64) -> f64 {
        let (mean, sd) = origin.moments();
        if sd == 0.0 {
            return 0.0;
        }
        self.probabilities
            .iter()
            .filter(|(s, _)| (f64::from(**s) - mean).abs() > k * sd)
            .map(|(_, p)| p)
            .sum::<f64>()
            + 0.0
    }
}

/// A model that can be sampled through a shared noise variate and refit by
/// maximum likelihood.
pub trait GenerativeModel: Clone {
    type Sample: Copy;

    fn draw_noise<R: Rng + ?Sized>(rng: &mut R) -> f64;
    fn transform(&self, noise: f64) -> Self::Sample;
    /// `generation` is only used to label a degenerate fit.
    fn fit(samples: &[Self::Sample], generation: usize) -> Result<Self, CollapseError>;
}

impl GenerativeModel for GaussianModel {
    type Sample = f64;

    fn draw_noise<R: Rng + ?Sized>(rng: &mut R) -> f64 {
        rng.sample(StandardNormal)
    }

    fn transform(&self, z: f64) -> f64 {
        self.mu + self.sigma2.sqrt() * z
    }

    /// Sample mean and the biased variance estimator (divisor m).
    fn fit(samples: &[f64], generation: usize) -> Result<Self, CollapseError> {
        let m = samples.len() as f64;
        let mu = samples.iter().sum::<f64>() / m;
        let sigma2 = samples.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / m;
        if sigma2.is_nan() || sigma2 <= 0.0 {
            return Err(CollapseError::DegenerateFit { generation });
        }
        Ok(Self { mu, sigma2 })
    }
}

impl GenerativeModel for CategoricalModel {
    type Sample = u32;

    fn draw_noise<R: Rng + ?Sized>(rng: &mut R) -> f64 {
        rng.random::<f64>()
    }

    fn transform(&self, u: f64) -> u32 {
        self.quantile(u)
    }

    /// Empirical frequencies; unseen symbols are dropped.
    fn fit(samples: &[u32], generation: usize) -> Result<Self, CollapseError> {
        if samples.is_empty() {
            return Err(CollapseError::DegenerateFit { generation });
        }
        let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
        for s in samples {
            *counts.entry(*s).or_insert(0) += 1;
        }
        let m = samples.len() as f64;
        Self::new(counts.into_iter().map(|(s, c)| (s, c as f64 / m)).collect())
    }
}

/// Number of samples drawn from the origin in a generation of size `m`.
pub fn human_count(m: usize, rho: f64) -> usize {
    ((rho * m as f64).round() as usize).min(m)
}

/// One generation: draw the mixed sample and refit. The first
/// `round(rho * m)` noise variates go to the origin, the rest to `model`.
pub fn step_generation<M, R>(
    model: &M,
    origin: &M,
    m: usize,
    rho: f64,
    generation: usize,
    rng: &mut R,
) -> Result<(Vec<M::Sample>, M), CollapseError>
where
    M: GenerativeModel,
    R: Rng + ?Sized,
{
    let human = human_count(m, rho);
    let samples: Vec<M::Sample> = (0..m)
        .map(|i| {
            let noise = M::draw_noise(rng);
            if i < human {
                origin.transform(noise)
            } else {
                model.transform(noise)
            }
        })
        .collect();
    let fitted = M::fit(&samples, generation)?;
    Ok((samples, fitted))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Gaussian(GaussianModel),
    Categorical(CategoricalModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gaussian,
    Categorical,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Gaussian => "gaussian",
            ModelKind::Categorical => "categorical",
        })
    }
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Gaussian(_) => ModelKind::Gaussian,
            Model::Categorical(_) => ModelKind::Categorical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionConfig {
    /// Samples per generation.
    pub m: usize,
    /// Number of refits after generation 0.
    pub generations: usize,
    /// Fraction of each generation drawn from the origin.
    pub rho: f64,
    pub seed: u64,
    pub origin: Model,
}

impl RecursionConfig {
    pub fn model_kind(&self) -> ModelKind {
        self.origin.kind()
    }

    pub fn validate(&self) -> Result<(), CollapseError> {
        if self.m < 2 {
            return Err(CollapseError::InvalidConfig(format!("m must be >= 2, got {}", self.m)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(CollapseError::InvalidConfig(format!(
                "rho must be in [0, 1], got {}",
                self.rho
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        Self { rho, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GenerationMetrics {
    Gaussian {
        mu: f64,
        sigma2: f64,
        variance_ratio: f64,
        tail_mass: f64,
    },
    Categorical {
        distinct: usize,
        entropy_bits: f64,
        tail_mass: f64,
    },
}

impl GenerationMetrics {
    fn gaussian(model: &GaussianModel, origin: &GaussianModel) -> Self {
        GenerationMetrics::Gaussian {
            mu: model.mu,
            sigma2: model.sigma2,
            variance_ratio: model.sigma2 / origin.sigma2,
            tail_mass: model.tail_mass_vs(origin, TAIL_K),
        }
    }

    fn categorical(model: &CategoricalModel, origin: &CategoricalModel) -> Self {
        GenerationMetrics::Categorical {
            distinct: model.distinct(),
            entropy_bits: model.entropy_bits(),
            tail_mass: model.tail_mass_vs(origin, TAIL_K),
        }
    }

    pub fn tail_mass(&self) -> f64 {
        match self {
            GenerationMetrics::Gaussian { tail_mass, .. } | GenerationMetrics::Categorical { tail_mass, .. } => {
                *tail_mass
            }
        }
    }

    pub fn variance_ratio(&self) -> Option<f64> {
        match self {
            GenerationMetrics::Gaussian { variance_ratio, .. } => Some(*variance_ratio),
            GenerationMetrics::Categorical { .. } => None,
        }
    }

    pub fn distinct(&self) -> Option<usize> {
        match self {
            GenerationMetrics::Categorical { distinct, .. } => Some(*distinct),
            GenerationMetrics::Gaussian { .. } => None,
        }
    }

    pub fn entropy_bits(&self) -> Option<f64> {
        match self {
            GenerationMetrics::Categorical { entropy_bits, .. } => Some(*entropy_bits),
            GenerationMetrics::Gaussian { .. } => None,
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            GenerationMetrics::Gaussian {
                mu,
                sigma2,
                variance_ratio,
                tail_mass,
            } => [mu, sigma2, variance_ratio, tail_mass].iter().all(|v| v.is_finite()),
            GenerationMetrics::Categorical {
                entropy_bits,
                tail_mass,
                ..
            } => entropy_bits.is_finite() && tail_mass.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum TrajectoryStatus {
    Complete,
    /// The refit at `generation` was degenerate; the trajectory stops before it.
    Collapsed {
        generation: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseTrajectory {
    pub config: RecursionConfig,
    pub rows: Vec<GenerationMetrics>,
    pub status: TrajectoryStatus,
}

impl CollapseTrajectory {
    pub fn final_row(&self) -> &GenerationMetrics {
        self.rows.last().expect("generation 0 is always present")
    }

    pub fn all_finite(&self) -> bool {
        self.rows.iter().all(GenerationMetrics::is_finite)
    }

    /// Header lines with the full config, then one tab-separated row per
    /// generation.
    pub fn to_tsv(&self) -> String {
        let c = &self.config;
        let mut out = String::from("# collapse trajectory v1\n");
        let _ = write!(
            out,
            "# model={} m={} generations={} rho={} seed={}",
            c.model_kind(),
            c.m,
            c.generations,
            c.rho,
            c.seed
        );
        match &c.origin {
            Model::Gaussian(g) => {
                let _ = writeln!(
                    out,
                    " origin_mu={} origin_sigma2={} variance_estimator=mle-biased",
                    g.mu, g.sigma2
                );
            }
            Model::Categorical(cat) => {
                let _ = writeln!(out, " origin_symbols={}", cat.distinct());
            }
        }
        match self.status {
            TrajectoryStatus::Complete => out.push_str("# status=complete\n"),
            TrajectoryStatus::Collapsed { generation } => {
                let _ = writeln!(out, "# status=collapsed generation={generation}");
            }
        }
        match c.model_kind() {
            ModelKind::Gaussian => out.push_str("generation\tmu\tsigma2\tvariance_ratio\ttail_mass\n"),
            ModelKind::Categorical => out.push_str("generation\tdistinct\tentropy_bits\ttail_mass\n"),
        }
        for (g, row) in self.rows.iter().enumerate() {
            match row {
                GenerationMetrics::Gaussian {
                    mu,
                    sigma2,
                    variance_ratio,
                    tail_mass,
                } => {
                    let _ = writeln!(out, "{g}\t{mu}\t{sigma2}\t{variance_ratio}\t{tail_mass}");
                }
                GenerationMetrics::Categorical {
                    distinct,
                    entropy_bits,
                    tail_mass,
                } => {
                    let _ = writeln!(out, "{g}\t{distinct}\t{entropy_bits}\t{tail_mass}");
                }
            }
        }
        out
    }
}

fn recurse<M: GenerativeModel>(
    origin: &M,
    config: &RecursionConfig,
    metrics: impl Fn(&M) -> GenerationMetrics,
) -> (Vec<GenerationMetrics>, TrajectoryStatus) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = Vec::with_capacity(config.generations + 1);
    rows.push(metrics(origin));
    let mut model = origin.clone();
    for generation in 1..=config.generations {
        match step_generation(&model, origin, config.m, config.rho, generation, &mut rng) {
            Ok((_, fitted)) => {
                rows.push(metrics(&fitted));
                model = fitted;
            }
            Err(CollapseError::DegenerateFit { generation }) => {
                return (rows, TrajectoryStatus::Collapsed { generation });
            }
            Err(other) => unreachable!("refit only fails as degenerate: {other}"),
        }
    }
    (rows, TrajectoryStatus::Complete)
}

/// Run `config.generations` refits. Deterministic in `config.seed`.
pub fn run_recursion(config: &RecursionConfig) -> Result<CollapseTrajectory, CollapseError> {
    config.validate()?;
    let (rows, status) = match &config.origin {
        Model::Gaussian(origin) => recurse(origin, config, |m| GenerationMetrics::gaussian(m, origin)),
        Model::Categorical(origin) => recurse(origin, config, |m| GenerationMetrics::categorical(m, origin)),
    };
    Ok(CollapseTrajectory {
        config: config.clone(),
        rows,
        status,
    })
}

/// Run the same config for every seed in `seeds`, in parallel. Output order
/// follows `seeds`.
pub fn run_seeds(config: &RecursionConfig, seeds: &[u64]) -> Result<Vec<CollapseTrajectory>, CollapseError> {
    config.validate()?;
    seeds.par_iter().map(|s| run_recursion(&config.with_seed(*s))).collect()
}

/// Consecutive seeds starting at `base`.
pub fn seed_range(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimenRow {
    pub rho: f64,
    pub seeds: usize,
    /// Per-seed final values, in seed order.
    pub final_variance_ratios: Vec<f64>,
    pub final_entropies: Vec<f64>,
    pub final_distinct: Vec<usize>,
    pub collapsed_runs: usize,
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> Option<f64> {
    let n = xs.len();
    (n > 0).then(|| xs.sum::<f64>() / n as f64)
}

impl RegimenRow {
    pub fn mean_final_variance_ratio(&self) -> Option<f64> {
        mean(self.final_variance_ratios.iter().copied())
    }

    pub fn mean_final_entropy(&self) -> Option<f64> {
        mean(self.final_entropies.iter().copied())
    }

    pub fn mean_final_distinct(&self) -> Option<f64> {
        mean(self.final_distinct.iter().map(|d| *d as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RegimenReport {
    pub rows: Vec<RegimenRow>,
}

impl fmt::Display for RegimenReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "rho\tseeds\tmean_final_variance_ratio\tmean_final_distinct\tmean_final_entropy_bits\tcollapsed"
        )?;
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
        for r in &self.rows {
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.rho,
                r.seeds,
                show(r.mean_final_variance_ratio()),
                show(r.mean_final_distinct()),
                show(r.mean_final_entropy()),
                r.collapsed_runs
            )?;
        }
        Ok(())
    }
}

/// Run `base` at every rho over the same seeds (`base.seed ..
/// base.seed + n_seeds`).
pub fn compare_regimens(base: &RecursionConfig, rhos: &[f64], n_seeds: usize) -> Result<RegimenReport, CollapseError> {
    let seeds = seed_range(base.seed, n_seeds);
    let mut rows = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        let runs = run_seeds(&base.with_rho(rho), &seeds)?;
        let mut row = RegimenRow {
            rho,
            seeds: runs.len(),
            final_variance_ratios: Vec::new(),
            final_entropies: Vec::new(),
            final_distinct: Vec::new(),
            collapsed_runs: 0,
        };
        for run in &runs {
            if matches!(run.status, TrajectoryStatus::Collapsed { .. }) {
                row.collapsed_runs += 1;
            }
            let last = run.final_row();
            row.final_variance_ratios.extend(last.variance_ratio());
            row.final_entropies.extend(last.entropy_bits());
            row.final_distinct.extend(last.distinct());
        }
        rows.push(row);
    }
    Ok(RegimenReport { rows })
}

/// Expected final variance ratio under pure self-training with the biased
/// estimator: `((m - 1) / m)^G`.
pub fn expected_variance_ratio(m: usize, generations: usize) -> f64 {
    ((m as f64 - 1.0) / m as f64).powi(generations as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_config(m: usize, generations: usize, rho: f64, seed: u64) -> RecursionConfig {
        RecursionConfig {
            m,
            generations,
            rho,
            seed,
            origin: Model::Gaussian(GaussianModel::standard()),
        }
    }

    #[test]
    fn generation_zero_equals_origin() {
        let cfg = gaussian_config(100, 0, 0.0, 1);
        let t = run_recursion(&cfg).unwrap();
        assert_eq!(t.rows.len(), 1);
        match t.rows[0] {
            GenerationMetrics::Gaussian {
                mu,
                sigma2,
                variance_ratio,
                tail_mass,
            } => {
                assert_eq!((mu, sigma2, variance_ratio), (0.0, 1.0, 1.0));
                // 2(1 - Phi(2))
                assert!((tail_mass - 0.045_500_263_896_358).abs() < 1e-9);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = gaussian_config(50, 20, 0.25, 9);
        assert_eq!(run_recursion(&cfg).unwrap(), run_recursion(&cfg).unwrap());
        let cat = RecursionConfig {
            origin: Model::Categorical(CategoricalModel::uniform(50).unwrap()),
            ..cfg
        };
        assert_eq!(run_recursion(&cat).unwrap(), run_recursion(&cat).unwrap());
    }

    #[test]
    fn trajectory_length_and_finiteness() {
        let t = run_recursion(&gaussian_config(10, 30, 0.0, 3)).unwrap();
        assert_eq!(t.rows.len(), 31);
        assert!(t.all_finite());
        assert_eq!(t.status, TrajectoryStatus::Complete);
    }

    #[test]
    fn invalid_configs() {
        assert!(run_recursion(&gaussian_config(1, 3, 0.0, 0)).is_err());
        assert!(run_recursion(&gaussian_config(10, 3, 1.5, 0)).is_err());
        assert!(GaussianModel::new(0.0, 0.0).is_err());
        assert!(CategoricalModel::new([(1, 0.5)].into_iter().collect()).is_err());
    }

    #[test]
    fn degenerate_gaussian_fit_halts() {
        assert_eq!(
            GaussianModel::fit(&[2.0, 2.0, 2.0], 4),
            Err(CollapseError::DegenerateFit { generation: 4 })
        );
    }

    #[test]
    fn categorical_absent_symbol_is_absorbing() {
        let origin = CategoricalModel::uniform(200).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, mut model) = step_generation(&origin, &origin, 50, 0.0, 1, &mut rng).unwrap();
        let lost: Vec<u32> = (0..200).filter(|s| model.probability(*s) == 0.0).collect();
        assert!(!lost.is_empty());
        for g in 2..30 {
            let (samples, next) = step_generation(&model, &origin, 50, 0.0, g, &mut rng).unwrap();
            for s in &lost {
                assert!(!samples.contains(s));
                assert_eq!(next.probability(*s), 0.0);
            }
            model = next;
        }
    }

    #[test]
    fn rho_one_samples_only_origin() {
        let origin = CategoricalModel::uniform(10).unwrap();
        let narrow = CategoricalModel::new([(999, 1.0)].into_iter().collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (samples, _) = step_generation(&narrow, &origin, 40, 1.0, 1, &mut rng).unwrap();
        assert!(samples.iter().all(|s| *s < 10));
        let (samples, _) = step_generation(&narrow, &origin, 40, 0.0, 1, &mut rng).unwrap();
        assert!(samples.iter().all(|s| *s == 999));
    }

    #[test]
    fn human_count_rounds() {
        assert_eq!(human_count(100, 0.25), 25);
        assert_eq!(human_count(10, 0.25), 3);
        assert_eq!(human_count(10, 1.0), 10);
        assert_eq!(human_count(10, 0.0), 0);
    }

    #[test]
    fn categorical_fit_sums_to_one() {
        let fitted = CategoricalModel::fit(&[1, 2, 2, 3, 3, 3, 7], 1).unwrap();
        let sum: f64 = fitted.probabilities().values().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
        assert_eq!(fitted.distinct(), 4);
    }

    #[test]
    fn categorical_tail_mass_uses_symbol_values() {
        // origin mean 2, sd sqrt(2); symbols 0..=4; nothing lies beyond 2 sd
        let origin = CategoricalModel::uniform(5).unwrap();
        assert_eq!(origin.tail_mass_vs(&origin, 2.0), 0.0);
        let far = CategoricalModel::new([(2, 0.5), (9, 0.5)].into_iter().collect()).unwrap();
        assert!((far.tail_mass_vs(&origin, 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_rhos_give_empty_report() {
        let r = compare_regimens(&gaussian_config(10, 5, 0.0, 0), &[], 10).unwrap();
        assert!(r.rows.is_empty());
    }

    #[test]
    fn tsv_has_header_and_rows() {
        let t = run_recursion(&gaussian_config(10, 3, 0.0, 0)).unwrap();
        let tsv = t.to_tsv();
        let data: Vec<&str> = tsv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data[0], "generation\tmu\tsigma2\tvariance_ratio\ttail_mass");
        assert_eq!(data.len(), 1 + 4);
        assert!(tsv.contains("variance_estimator=mle-biased"));
    }
}
