//! Monte-Carlo rounds, empirical penalties and equilibrium checks.
//!
//! A replication samples every agent's data, applies the submission rules,
//! runs the mechanism for the focal agent and records the focal agent's
//! squared error. Every draw comes from a stream addressed by
//! `(domain, mu index, replication, agent)`, so results do not depend on how
//! replications are scheduled across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics;
use crate::error::{Error, Result};
use crate::estimators::{apply_submission, estimate, EstimatorChoice, SubmissionRule};
use crate::mechanisms::{
    corrupt_deploy_for_agent, cross_check_corrupt_for_agent, others_union, size_check_for_agent, Allocation,
};
use crate::params::{sample_dataset, Dataset, DistributionSpec, ProblemParams};
use crate::rng::{domain, SeedTree};

/// One-sided decision threshold, in standard errors.
pub const SE_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MechanismKind {
    Pool,
    SizeCheck,
    CorruptDeploy { epsilon: f64 },
    CrossCheckCorrupt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AgentEstimate {
    Own(EstimatorChoice),
    /// Use the estimate deployed by corrupt-and-deploy.
    Deployed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub samples: usize,
    pub submission: SubmissionRule,
    pub estimator: AgentEstimate,
}

impl Strategy {
    /// The strategy each mechanism recommends.
    pub fn recommended(p: &ProblemParams, mechanism: MechanismKind, alpha: f64) -> Result<Self> {
        let pooled = p.pooled_sample_size()? as usize;
        let (samples, estimator) = match mechanism {
            MechanismKind::Pool | MechanismKind::SizeCheck => {
                (pooled, AgentEstimate::Own(EstimatorChoice::PlainMeanAll))
            }
            MechanismKind::CorruptDeploy { .. } => (pooled, AgentEstimate::Deployed),
            MechanismKind::CrossCheckCorrupt if !p.uses_corruption() => {
                (p.n_star() as usize, AgentEstimate::Own(EstimatorChoice::PlainMeanAll))
            }
            MechanismKind::CrossCheckCorrupt if p.dim() > 1 => {
                let tau_sq = 2.0 * alpha * alpha * p.sigma() * p.sigma() / p.n_star_f64();
                (p.n_star() as usize, AgentEstimate::Own(EstimatorChoice::FixedWeighted { tau_sq }))
            }
            MechanismKind::CrossCheckCorrupt => {
                (p.n_star() as usize, AgentEstimate::Own(EstimatorChoice::RecommendedWeighted))
            }
        };
        Ok(Self { samples, submission: SubmissionRule::Identity, estimator })
    }

    pub fn is_translation_equivariant(&self) -> bool {
        let est = match self.estimator {
            AgentEstimate::Own(e) => e.is_translation_equivariant(),
            AgentEstimate::Deployed => true,
        };
        est && self.submission.is_translation_equivariant()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: ProblemParams,
    pub mechanism: MechanismKind,
    /// Corruption modulator; only read by cross-check-and-corrupt.
    pub alpha: f64,
    pub profile: Vec<Strategy>,
    /// Data distribution; its mean is replaced by each `mu_grid` entry.
    pub distribution: DistributionSpec,
    pub replications: usize,
    pub mu_grid: Vec<Vec<f64>>,
    pub master_seed: u64,
}

impl Scenario {
    /// Every agent plays the mechanism's recommended strategy; evaluated at
    /// the origin only.
    pub fn recommended(
        params: ProblemParams,
        mechanism: MechanismKind,
        alpha: f64,
        distribution: DistributionSpec,
        replications: usize,
        master_seed: u64,
    ) -> Result<Self> {
        let s = Strategy::recommended(&params, mechanism, alpha)?;
        let sc = Self {
            params,
            mechanism,
            alpha,
            profile: vec![s; params.agents()],
            mu_grid: vec![vec![0.0; params.dim()]],
            distribution,
            replications,
            master_seed,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if self.replications == 0 {
            return Err(Error::InvalidScenario("replications must be at least 1".into()));
        }
        if self.mu_grid.is_empty() {
            return Err(Error::InvalidScenario("mu grid is empty".into()));
        }
        if self.profile.len() != p.agents() {
            return Err(Error::InvalidScenario(format!(
                "profile has {} strategies for {} agents",
                self.profile.len(),
                p.agents()
            )));
        }
        if self.distribution.dim() != p.dim() {
            return Err(Error::DimensionMismatch { expected: p.dim(), found: self.distribution.dim() });
        }
        if let Some(mu) = self.mu_grid.iter().find(|mu| mu.len() != p.dim()) {
            return Err(Error::DimensionMismatch { expected: p.dim(), found: mu.len() });
        }
        if self.distribution.per_dim_variance() > p.sigma() * p.sigma() * (1.0 + 1e-12) {
            return Err(Error::InvalidScenario("data variance exceeds sigma^2".into()));
        }
        for s in &self.profile {
            s.submission.validate()?;
            if let AgentEstimate::Own(e) = s.estimator {
                e.validate()?;
            } else if !matches!(self.mechanism, MechanismKind::CorruptDeploy { .. }) {
                return Err(Error::InvalidScenario("only corrupt-and-deploy deploys an estimate".into()));
            }
        }
        Ok(())
    }

    /// Same scenario with the focal agent switched to `strategy` and the
    /// mu grid chosen by the profile's translation equivariance.
    pub fn with_focal_strategy(&self, focal: usize, strategy: Strategy) -> Self {
        let mut sc = self.clone();
        sc.profile[focal] = strategy;
        sc.mu_grid = if sc.profile.iter().all(Strategy::is_translation_equivariant) {
            vec![vec![0.0; sc.params.dim()]]
        } else {
            default_mu_grid(&sc.params)
        };
        sc
    }
}

/// `{0, +-5 sigma, +-50 sigma}` along the all-ones direction.
pub fn default_mu_grid(p: &ProblemParams) -> Vec<Vec<f64>> {
    [0.0, 5.0, -5.0, 50.0, -50.0].iter().map(|&k| vec![k * p.sigma(); p.dim()]).collect()
}

/// Everything produced in one round for the focal agent.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub estimate: Vec<f64>,
    pub allocation: Allocation,
    pub collected: Dataset,
    pub submitted: Dataset,
    /// Estimate deployed by corrupt-and-deploy, if that mechanism ran.
    pub deployed: Option<Vec<f64>>,
    pub sq_error: f64,
}

/// Plays one round at mean `mu` and returns the focal agent's view.
pub fn simulate_focal_round(
    sc: &Scenario,
    focal: usize,
    mu_index: usize,
    replication: usize,
) -> Result<RoundOutcome> {
    let p = &sc.params;
    let tree = SeedTree::new(sc.master_seed);
    let mu = &sc.mu_grid[mu_index];
    let dist = sc.distribution.with_mean(mu.clone())?;
    let (u, r) = (mu_index as u64, replication as u64);

    let mut collected = Vec::with_capacity(sc.profile.len());
    let mut subs = Vec::with_capacity(sc.profile.len());
    for (j, s) in sc.profile.iter().enumerate() {
        let j64 = j as u64;
        let x = sample_dataset(&dist, s.samples, &mut tree.stream(&[domain::AGENT_DATA, u, r, j64]));
        let y = apply_submission(s.submission, &x, p, &mut tree.stream(&[domain::SUBMISSION, u, r, j64]))?;
        collected.push(x);
        subs.push(y);
    }

    let mut rng = tree.stream(&[domain::MECHANISM, u, r, focal as u64]);
    let mut deployed = None;
    let allocation = match sc.mechanism {
        MechanismKind::Pool => Allocation::uncorrupted(others_union(&subs, focal)?),
        MechanismKind::SizeCheck => Allocation::uncorrupted(size_check_for_agent(focal, &subs, p)?),
        MechanismKind::CorruptDeploy { epsilon } => {
            let (e, a) = corrupt_deploy_for_agent(focal, &subs, p, epsilon, &mut rng)?;
            deployed = Some(e.value);
            a
        }
        MechanismKind::CrossCheckCorrupt => cross_check_corrupt_for_agent(focal, &subs, p, sc.alpha, &mut rng)?,
    };
    let x = collected.swap_remove(focal);
    let est = focal_estimate(sc.profile[focal].estimator, &x, &allocation, deployed.as_deref(), p.sigma())?;
    let sq_error = sq_distance(&est, mu);
    Ok(RoundOutcome {
        estimate: est,
        allocation,
        collected: x,
        submitted: subs.swap_remove(focal),
        deployed,
        sq_error,
    })
}

fn focal_estimate(
    choice: AgentEstimate,
    x: &Dataset,
    allocation: &Allocation,
    deployed: Option<&[f64]>,
    sigma: f64,
) -> Result<Vec<f64>> {
    match (choice, deployed) {
        (AgentEstimate::Own(c), _) => estimate(c, x, allocation, sigma),
        (AgentEstimate::Deployed, Some(v)) => Ok(v.to_vec()),
        (AgentEstimate::Deployed, None) => {
            Err(Error::InvalidScenario("no deployed estimate for this mechanism".into()))
        }
    }
}

fn sq_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuCell {
    pub mu: Vec<f64>,
    pub mean_sq_error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPenalty {
    /// Largest mean squared error over the mu grid.
    pub mean_sq_error: f64,
    /// Standard error of the cell attaining the maximum.
    pub std_error: f64,
    pub cost: f64,
    pub total: f64,
    pub per_mu: Vec<MuCell>,
    /// True when several means were tried; the maximum then only bounds the
    /// supremum over all means from below.
    pub lower_bound_on_sup: bool,
}

/// Sum by recursive halving; the order of additions depends only on length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Squared errors of the focal agent for every replication at one mean.
pub fn squared_errors(sc: &Scenario, focal: usize, mu_index: usize) -> Result<Vec<f64>> {
    (0..sc.replications)
        .into_par_iter()
        .map(|r| simulate_focal_round(sc, focal, mu_index, r).map(|o| o.sq_error))
        .collect()
}

pub fn run_replications(sc: &Scenario, focal: usize) -> Result<EmpiricalPenalty> {
    sc.validate()?;
    if focal >= sc.params.agents() {
        return Err(Error::InvalidScenario(format!("focal agent {focal} out of range")));
    }
    let mut per_mu = Vec::with_capacity(sc.mu_grid.len());
    for (u, mu) in sc.mu_grid.iter().enumerate() {
        let errs = squared_errors(sc, focal, u)?;
        let (mean_sq_error, std_error) = mean_and_se(&errs);
        per_mu.push(MuCell { mu: mu.clone(), mean_sq_error, std_error });
    }
    let worst = per_mu
        .iter()
        .max_by(|a, b| a.mean_sq_error.total_cmp(&b.mean_sq_error))
        .expect("mu grid is nonempty");
    let cost = sc.params.cost() * sc.profile[focal].samples as f64;
    Ok(EmpiricalPenalty {
        mean_sq_error: worst.mean_sq_error,
        std_error: worst.std_error,
        cost,
        total: worst.mean_sq_error + cost,
        lower_bound_on_sup: sc.mu_grid.len() > 1,
        per_mu,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub first_mse: f64,
    pub first_std_error: f64,
    pub second_mse: f64,
    pub second_std_error: f64,
    /// Mean of `first - second` squared errors over replications.
    pub diff_mean: f64,
    pub diff_std_error: f64,
}

/// Applies two estimators to the same rounds (first mu grid entry) so that
/// their risks can be compared with the paired standard error.
pub fn paired_estimator_comparison(
    sc: &Scenario,
    focal: usize,
    first: AgentEstimate,
    second: AgentEstimate,
) -> Result<PairedComparison> {
    sc.validate()?;
    let sigma = sc.params.sigma();
    let mu = &sc.mu_grid[0];
    let pairs: Vec<(f64, f64)> = (0..sc.replications)
        .into_par_iter()
        .map(|r| {
            let o = simulate_focal_round(sc, focal, 0, r)?;
            let a = focal_estimate(first, &o.collected, &o.allocation, o.deployed.as_deref(), sigma)?;
            let b = focal_estimate(second, &o.collected, &o.allocation, o.deployed.as_deref(), sigma)?;
            Ok((sq_distance(&a, mu), sq_distance(&b, mu)))
        })
        .collect::<Result<_>>()?;
    let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    let (first_mse, first_std_error) = mean_and_se(&a);
    let (second_mse, second_std_error) = mean_and_se(&b);
    let (diff_mean, diff_std_error) = mean_and_se(&diff);
    Ok(PairedComparison { first_mse, first_std_error, second_mse, second_std_error, diff_mean, diff_std_error })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MenuEntry {
    pub label: String,
    pub strategy: Strategy,
    /// Exact penalty of the deviation when a closed form is available.
    pub closed_form: Option<f64>,
}

/// Deviations tried against each mechanism: three other sample counts, five
/// submission manipulations at `n*`, fabrication from a single point, and
/// two estimator swaps. With `unrestricted == false` the size check and
/// corrupt-and-deploy are only offered honest submissions (and, for
/// corrupt-and-deploy, the deployed estimate), which is the strategy space
/// those mechanisms are designed for.
pub fn deviation_menu(p: &ProblemParams, mechanism: MechanismKind, alpha: f64, unrestricted: bool) -> Result<Vec<MenuEntry>> {
    let rec = Strategy::recommended(p, mechanism, alpha)?;
    let ns = rec.samples;
    let with = |samples: usize, submission: SubmissionRule| Strategy { samples, submission, estimator: rec.estimator };
    let mut menu = Vec::new();
    for n in [0, ns / 2, 2 * ns] {
        menu.push(entry(format!("collect {n}"), with(n, SubmissionRule::Identity)));
    }
    menu.push(entry("scale 0.5".into(), with(ns, SubmissionRule::Scale(0.5))));
    menu.push(entry("shift +1".into(), with(ns, SubmissionRule::Shift(1.0))));
    menu.push(entry("submit constant 0".into(), with(ns, SubmissionRule::SubmitConstant(0.0))));
    menu.push(entry(format!("submit first {}", ns / 2), with(ns, SubmissionRule::Subset(ns / 2))));
    menu.push(entry("submit nothing".into(), with(ns, SubmissionRule::Empty)));
    menu.push(entry(format!("collect 1, fabricate {ns}"), with(1, SubmissionRule::FabricateFitGaussian(ns))));
    for (label, e) in [
        ("plain mean of everything", EstimatorChoice::PlainMeanAll),
        ("clean data only", EstimatorChoice::CleanOnlyMean),
    ] {
        menu.push(entry(label.into(), Strategy { estimator: AgentEstimate::Own(e), ..rec }));
    }

    let restricted = !unrestricted && matches!(mechanism, MechanismKind::SizeCheck | MechanismKind::CorruptDeploy { .. });
    if restricted {
        menu.retain(|e| e.strategy.submission == SubmissionRule::Identity && e.strategy.estimator == rec.estimator);
    }
    for e in &mut menu {
        e.closed_form = closed_form_penalty(p, mechanism, alpha, &e.strategy)?;
    }
    Ok(menu)
}

fn entry(label: String, strategy: Strategy) -> MenuEntry {
    MenuEntry { label, strategy, closed_form: None }
}

/// Exact penalty of an honest focal strategy against recommended others,
/// where one is known.
pub fn closed_form_penalty(p: &ProblemParams, mechanism: MechanismKind, alpha: f64, s: &Strategy) -> Result<Option<f64>> {
    let rec = Strategy::recommended(p, mechanism, alpha)?;
    if s.submission != SubmissionRule::Identity || s.estimator != rec.estimator {
        return Ok(None);
    }
    let n = s.samples as f64;
    let d = p.dim() as f64;
    let s2 = p.sigma() * p.sigma();
    let value = match mechanism {
        MechanismKind::Pool => {
            let others = (p.agents() - 1) as f64 * p.pooled_sample_size()? as f64;
            Some(d * s2 / (n + others) + p.cost() * n)
        }
        MechanismKind::SizeCheck if s.samples > 0 => Some(analytics::size_check_penalty(n, p)?),
        MechanismKind::CorruptDeploy { epsilon } if s.samples == rec.samples => {
            Some(analytics::corrupt_deploy_penalty(p, epsilon)?)
        }
        MechanismKind::CrossCheckCorrupt if !p.uses_corruption() => {
            let others = (p.agents() - 1) as f64 * p.n_star_f64();
            Some(d * s2 / (n + others) + p.cost() * n)
        }
        MechanismKind::CrossCheckCorrupt if p.dim() == 1 => {
            if s.samples == 0 {
                // nothing submitted: the corrupted part is withheld, only the clean sample remains
                Some(s2 / p.n_star_f64())
            } else {
                Some(analytics::penalty_closed_form(n, p, alpha)?)
            }
        }
        _ => None,
    };
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub strategy: Strategy,
    /// `None` when the mechanism cannot serve the deviation (for instance an
    /// empty submission to corrupt-and-deploy); its penalty is then unbounded.
    pub penalty: Option<EmpiricalPenalty>,
    pub closed_form: Option<f64>,
    /// `(recommended - deviation) / combined SE`; positive means the deviation did better.
    pub advantage_in_se: f64,
    pub profitable: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub recommended: EmpiricalPenalty,
    pub recommended_closed_form: Option<f64>,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn any_profitable(&self) -> bool {
        self.rows.iter().any(|r| r.profitable)
    }
}

/// Runs the focal agent's recommended strategy and every menu entry against
/// recommended others, flagging deviations that beat the recommendation by
/// more than [`SE_THRESHOLD`] combined standard errors.
pub fn nash_deviation_sweep(sc: &Scenario, focal: usize, menu: &[MenuEntry]) -> Result<SweepReport> {
    let rec_strategy = sc.profile[focal];
    let rec_sc = sc.with_focal_strategy(focal, rec_strategy);
    let recommended = run_replications(&rec_sc, focal)?;
    let recommended_closed_form = closed_form_penalty(&sc.params, sc.mechanism, sc.alpha, &rec_strategy)?;
    let mut rows = Vec::with_capacity(menu.len());
    for e in menu {
        let dev_sc = sc.with_focal_strategy(focal, e.strategy);
        let row = match run_replications(&dev_sc, focal) {
            Ok(pen) => {
                let se = (pen.std_error.powi(2) + recommended.std_error.powi(2)).sqrt();
                let gap = recommended.total - pen.total;
                let advantage_in_se = if se > 0.0 { gap / se } else { gap.signum() * f64::INFINITY };
                SweepRow {
                    label: e.label.clone(),
                    strategy: e.strategy,
                    profitable: gap > SE_THRESHOLD * se,
                    advantage_in_se,
                    closed_form: e.closed_form,
                    note: pen.lower_bound_on_sup.then(|| "maximum over the mu grid; lower bound on sup-risk".into()),
                    penalty: Some(pen),
                }
            }
            Err(err @ (Error::EmptyInput | Error::EmptySubmission(_))) => SweepRow {
                label: e.label.clone(),
                strategy: e.strategy,
                penalty: None,
                closed_form: e.closed_form,
                advantage_in_se: f64::NEG_INFINITY,
                profitable: false,
                note: Some(format!("no estimate available: {err}")),
            },
            Err(err) => return Err(err),
        };
        rows.push(row);
    }
    Ok(SweepReport { recommended, recommended_closed_form, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrReport {
    pub participating: f64,
    pub std_error: f64,
    pub standalone: f64,
    pub ok: bool,
}

/// Compares the focal agent's empirical penalty with the best standalone
/// penalty `2 sigma sqrt(c d)`; passes only if the penalty plus three
/// standard errors is below it.
pub fn ir_check(sc: &Scenario, focal: usize) -> Result<IrReport> {
    let pen = run_replications(sc, focal)?;
    let standalone = analytics::baseline_penalties(&sc.params).p_min_ir;
    Ok(IrReport {
        participating: pen.total,
        std_error: pen.std_error,
        standalone,
        ok: pen.total + SE_THRESHOLD * pen.std_error < standalone,
    })
}

/// Six deviations for the high-dimensional check.
pub fn highdim_menu(p: &ProblemParams, alpha: f64) -> Result<Vec<MenuEntry>> {
    let rec = Strategy::recommended(p, MechanismKind::CrossCheckCorrupt, alpha)?;
    let ns = rec.samples;
    let with = |samples: usize, submission: SubmissionRule| Strategy { samples, submission, estimator: rec.estimator };
    Ok(vec![
        entry(format!("collect {}", ns / 2), with(ns / 2, SubmissionRule::Identity)),
        entry(format!("collect {}", 2 * ns), with(2 * ns, SubmissionRule::Identity)),
        entry("scale 0.5".into(), with(ns, SubmissionRule::Scale(0.5))),
        entry(format!("collect 1, fabricate {ns}"), with(1, SubmissionRule::FabricateFitGaussian(ns))),
        entry(
            "per-coordinate weights".into(),
            Strategy { estimator: AgentEstimate::Own(EstimatorChoice::RecommendedWeighted), ..rec },
        ),
        entry(
            "clean data only".into(),
            Strategy { estimator: AgentEstimate::Own(EstimatorChoice::CleanOnlyMean), ..rec },
        ),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighDimReport {
    pub recommended: EmpiricalPenalty,
    pub menu_min_label: String,
    pub menu_min: f64,
    pub ratio: f64,
    pub ratio_std_error: f64,
    pub bound: f64,
    pub ok: bool,
    pub pos_proxy: f64,
    pub pos_bound: f64,
    pub pos_ok: bool,
    pub rows: Vec<SweepRow>,
}

/// Approximate-equilibrium check: the recommended penalty may exceed the
/// best menu penalty by at most a factor `1 + 5/m` (plus three standard
/// errors of the ratio), and `m * penalty / (2 sigma sqrt(c m d))` must stay
/// below `2 + 10/m`.
pub fn highdim_nic_check(sc: &Scenario, focal: usize, menu: &[MenuEntry]) -> Result<HighDimReport> {
    let p = &sc.params;
    if !p.uses_corruption() {
        return Err(Error::NoCorruptionRegime(p.agents()));
    }
    let sweep = nash_deviation_sweep(sc, focal, menu)?;
    let rec = sweep.recommended.clone();
    let best = sweep
        .rows
        .iter()
        .filter_map(|r| r.penalty.as_ref().map(|pen| (r.label.clone(), pen.clone())))
        .min_by(|a, b| a.1.total.total_cmp(&b.1.total))
        .ok_or_else(|| Error::InvalidScenario("menu produced no penalties".into()))?;
    let ratio = rec.total / best.1.total;
    let ratio_std_error =
        ratio * ((rec.std_error / rec.total).powi(2) + (best.1.std_error / best.1.total).powi(2)).sqrt();
    let m = p.agents() as f64;
    let bound = 1.0 + 5.0 / m;
    let pos_proxy = m * rec.total / analytics::baseline_penalties(p).global_min_social;
    let pos_bound = 2.0 + 10.0 / m;
    Ok(HighDimReport {
        ok: ratio <= bound + SE_THRESHOLD * ratio_std_error,
        pos_ok: pos_proxy < pos_bound,
        menu_min_label: best.0,
        menu_min: best.1.total,
        recommended: rec,
        ratio,
        ratio_std_error,
        bound,
        pos_proxy,
        pos_bound,
        rows: sweep.rows,
    })
}
