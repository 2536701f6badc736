//! Multi-expert contract functions and arbitrage searches.
//!
//! The arbitrage-free family pays expert `i`
//!
//! ```text
//! Pi_i(P; j) = s_quad(p_i; j) - (m-1)^2 s_quad(pbar_{-i}; j) + alpha * pbar_{-i,j}
//! ```
//!
//! where `pbar_{-i}` is the unweighted mean of the other reports. With
//! `alpha < 0` or `alpha >= 2(m-1)^2 n` the contract is proper and no
//! coalition can deviate so that its total reward rises under every
//! outcome. Coalitions can still profit in expectation when they all agree
//! the truth is elsewhere; the redistribution construction splits such a
//! gain evenly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::csum;
use crate::rng::trial_rng;
use crate::scoring::{Forecast, ScoringRule};

/// A contract function: a payout to each expert from the full report
/// profile and the outcome.
#[derive(Debug, Clone)]
pub enum ContractFunction {
    /// Everyone is paid their own score (plus a constant).
    Independent { rule: ScoringRule, offset: f64 },
    /// The arbitrage-free family.
    Thm41 { alpha: f64, m: usize, n: usize },
}

impl ContractFunction {
    pub fn independent(rule: ScoringRule, offset: f64) -> Self {
        ContractFunction::Independent { rule, offset }
    }

    /// Validates the parameter constraint `alpha < 0 or alpha >= 2(m-1)^2 n`
    /// unless `allow_unsafe` is set (for counterexample experiments).
    pub fn thm41(alpha: f64, m: usize, n: usize, allow_unsafe: bool) -> Result<Self> {
        if m < 2 {
            return Err(Error::Argument("need at least two experts".into()));
        }
        let threshold = 2.0 * ((m - 1) as f64).powi(2) * n as f64;
        if !allow_unsafe && !(alpha < 0.0 || alpha >= threshold) {
            return Err(Error::Argument(format!(
                "alpha must be negative or >= {threshold}; got {alpha}"
            )));
        }
        Ok(ContractFunction::Thm41 { alpha, m, n })
    }

    pub fn n_experts(&self) -> usize {
        match self {
            ContractFunction::Independent { .. } => 0, // any
            ContractFunction::Thm41 { m, .. } => *m,
        }
    }

    pub fn n_outcomes(&self) -> usize {
        match self {
            ContractFunction::Independent { rule, .. } => rule.n_outcomes(),
            ContractFunction::Thm41 { n, .. } => *n,
        }
    }
}

/// Payout vector for a report profile and realized outcome.
pub fn contract_payout(
    contract: &ContractFunction,
    reports: &[Forecast],
    outcome: usize,
) -> Result<Vec<f64>> {
    let m = reports.len();
    if m < 2 {
        return Err(Error::Argument("need at least two experts".into()));
    }
    let n = reports[0].len();
    if reports.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("reports have mixed dimensions".into()));
    }
    if outcome >= n {
        return Err(Error::Argument("outcome out of range".into()));
    }
    match contract {
        ContractFunction::Independent { rule, offset } => reports
            .iter()
            .map(|r| rule.score(r, outcome).map(|s| s + offset))
            .collect(),
        ContractFunction::Thm41 { alpha, m: cm, n: cn } => {
            if *cm != m || *cn != n {
                return Err(Error::Dimension("profile does not match contract shape".into()));
            }
            let quad = ScoringRule::quadratic(n);
            let mut out = Vec::with_capacity(m);
            for i in 0..m {
                // unweighted mean of the other reports
                let mut mean = vec![0.0; n];
                for (k, r) in reports.iter().enumerate() {
                    if k != i {
                        for l in 0..n {
                            mean[l] += r[l] / (m as f64 - 1.0);
                        }
                    }
                }
                let mean_f = Forecast::new(mean.clone())?;
                let own = quad.score(&reports[i], outcome)?;
                let others = quad.score(&mean_f, outcome)?;
                out.push(own - ((m - 1) * (m - 1)) as f64 * others + alpha * mean[outcome]);
            }
            Ok(out)
        }
    }
}

/// A coalition deviation together with its per-outcome or per-member gains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArbitrageWitness {
    pub coalition: Vec<usize>,
    pub original: Vec<Forecast>,
    pub deviation: Vec<Forecast>,
    /// Strict witnesses: coalition total gain per outcome, all `>= 0`, one
    /// positive. Expected witnesses: per-member believed expected gains.
    pub per_outcome_gain: Vec<f64>,
    pub kind: WitnessKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    Strict,
    Expected,
}

fn coalition_total(
    contract: &ContractFunction,
    reports: &[Forecast],
    coalition: &[usize],
    outcome: usize,
) -> Result<f64> {
    let pay = contract_payout(contract, reports, outcome)?;
    Ok(coalition.iter().map(|&i| pay[i]).sum())
}

/// The QA-pool collusion point: every coalition member reports the mean of
/// the coalition's original reports (the quadratic-rule QA pool).
fn mean_deviation(reports: &[Forecast], coalition: &[usize]) -> Result<Vec<Forecast>> {
    let n = reports[0].len();
    let mut mean = vec![0.0; n];
    for &i in coalition {
        for l in 0..n {
            mean[l] += reports[i][l] / coalition.len() as f64;
        }
    }
    let mean_f = Forecast::new(mean)?;
    let mut out = reports.to_vec();
    for &i in coalition {
        out[i] = mean_f.clone();
    }
    Ok(out)
}

fn perturbed_deviation(
    reports: &[Forecast],
    coalition: &[usize],
    scale: f64,
    rng: &mut crate::rng::Rng,
) -> Result<Vec<Forecast>> {
    use rand::Rng as _;
    let n = reports[0].len();
    let mut out = reports.to_vec();
    for &i in coalition {
        let mut v: Vec<f64> = (0..n)
            .map(|l| (out[i][l] + scale * (rng.random::<f64>() - 0.5)).max(0.0))
            .collect();
        let s = csum(&v);
        if s <= 0.0 {
            v = vec![1.0 / n as f64; n];
        } else {
            for x in &mut v {
                *x /= s;
            }
        }
        out[i] = Forecast::new(v)?;
    }
    Ok(out)
}

/// Search for a strict arbitrage: a coalition deviation whose total reward
/// weakly rises under every outcome and strictly under one. Seeded with the
/// QA-pool collusion point, then randomized perturbations. Absence of a
/// witness within the budget is *not* a proof of arbitrage-freeness.
pub fn find_arbitrage(
    contract: &ContractFunction,
    reports: &[Forecast],
    coalition: &[usize],
    budget: u64,
    seed: u64,
) -> Result<Option<ArbitrageWitness>> {
    if coalition.is_empty() {
        return Err(Error::Argument("coalition must be nonempty".into()));
    }
    let n = reports[0].len();
    let base: Vec<f64> = (0..n)
        .map(|j| coalition_total(contract, reports, coalition, j))
        .collect::<Result<_>>()?;
    let check = |deviation: &[Forecast]| -> Result<Option<Vec<f64>>> {
        let mut gains = Vec::with_capacity(n);
        for j in 0..n {
            gains.push(coalition_total(contract, deviation, coalition, j)? - base[j]);
        }
        let ok = gains.iter().all(|&g| g >= -1e-12) && gains.iter().any(|&g| g > 1e-9);
        Ok(ok.then_some(gains))
    };

    // seed: the collusion point the positive result constructs
    let seed_dev = mean_deviation(reports, coalition)?;
    if let Some(gains) = check(&seed_dev)? {
        return Ok(Some(ArbitrageWitness {
            coalition: coalition.to_vec(),
            original: reports.to_vec(),
            deviation: seed_dev,
            per_outcome_gain: gains,
            kind: WitnessKind::Strict,
        }));
    }

    // randomized local search in parallel chunks; the first witness by
    // attempt index wins so results are deterministic
    const CHUNK: u64 = 4096;
    let mut start = 0u64;
    while start < budget {
        let end = (start + CHUNK).min(budget);
        let found: Vec<(u64, Vec<Forecast>, Vec<f64>)> = (start..end)
            .into_par_iter()
            .filter_map(|attempt| {
                let mut rng = trial_rng(seed, attempt);
                // anneal the perturbation scale down with the attempt index
                let scale = 1.0 / (1.0 + (attempt % 97) as f64 / 16.0);
                let from = if attempt % 2 == 0 { &seed_dev } else { reports };
                let dev = perturbed_deviation(from, coalition, scale, &mut rng).ok()?;
                match check(&dev) {
                    Ok(Some(gains)) => Some((attempt, dev, gains)),
                    _ => None,
                }
            })
            .collect();
        if let Some((_, dev, gains)) =
            found.into_iter().min_by_key(|(attempt, _, _)| *attempt)
        {
            return Ok(Some(ArbitrageWitness {
                coalition: coalition.to_vec(),
                original: reports.to_vec(),
                deviation: dev,
                per_outcome_gain: gains,
                kind: WitnessKind::Strict,
            }));
        }
        start = end;
    }
    Ok(None)
}

/// Believed expected coalition total for member `i` with belief `b_i`.
fn believed_total(
    contract: &ContractFunction,
    reports: &[Forecast],
    coalition: &[usize],
    belief: &Forecast,
) -> Result<f64> {
    let n = belief.len();
    let mut acc = 0.0;
    for j in 0..n {
        acc += belief[j] * coalition_total(contract, reports, coalition, j)?;
    }
    Ok(acc)
}

/// Search for an expected arbitrage: a deviation every coalition member
/// believes weakly raises the coalition's expected total, strictly for one.
/// Truthful reporting of `beliefs` is the baseline profile.
pub fn find_expected_arbitrage(
    contract: &ContractFunction,
    beliefs: &[Forecast],
    coalition: &[usize],
    budget: u64,
    seed: u64,
) -> Result<Option<ArbitrageWitness>> {
    if coalition.is_empty() {
        return Err(Error::Argument("coalition must be nonempty".into()));
    }
    let n = beliefs[0].len();
    let base: Vec<f64> = coalition
        .iter()
        .map(|&i| believed_total(contract, beliefs, coalition, &beliefs[i]))
        .collect::<Result<_>>()?;
    let check = |deviation: &[Forecast]| -> Result<Option<Vec<f64>>> {
        let mut gains = Vec::with_capacity(coalition.len());
        for (k, &i) in coalition.iter().enumerate() {
            gains.push(believed_total(contract, deviation, coalition, &beliefs[i])? - base[k]);
        }
        let ok = gains.iter().all(|&g| g >= -1e-12) && gains.iter().any(|&g| g > 1e-9);
        Ok(ok.then_some(gains))
    };

    // seeds: every all-report-a-vertex profile, then the collusion mean,
    // then random perturbations
    for j in 0..n {
        let mut dev = beliefs.to_vec();
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        let vertex = Forecast::new(v)?;
        for &i in coalition {
            dev[i] = vertex.clone();
        }
        if let Some(gains) = check(&dev)? {
            return Ok(Some(ArbitrageWitness {
                coalition: coalition.to_vec(),
                original: beliefs.to_vec(),
                deviation: dev,
                per_outcome_gain: gains,
                kind: WitnessKind::Expected,
            }));
        }
    }
    let mean_dev = mean_deviation(beliefs, coalition)?;
    if let Some(gains) = check(&mean_dev)? {
        return Ok(Some(ArbitrageWitness {
            coalition: coalition.to_vec(),
            original: beliefs.to_vec(),
            deviation: mean_dev,
            per_outcome_gain: gains,
            kind: WitnessKind::Expected,
        }));
    }
    let mut rng = trial_rng(seed, 0);
    for _ in 0..budget {
        let dev = perturbed_deviation(beliefs, coalition, 0.5, &mut rng)?;
        if let Some(gains) = check(&dev)? {
            return Ok(Some(ArbitrageWitness {
                coalition: coalition.to_vec(),
                original: beliefs.to_vec(),
                deviation: dev,
                per_outcome_gain: gains,
                kind: WitnessKind::Expected,
            }));
        }
    }
    Ok(None)
}

/// The redistribution agreement built from an expected-arbitrage witness:
/// `A_i(X; Y; j) = Pi_i(Y; j) + W(X; Y; j)/|C|` where `W` is the coalition's
/// total gain from reporting `X` instead of `Y`. The table maps outcomes to
/// per-member payments under the deviation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RedistributionAgreement {
    /// `payments[j][k]`: payment to coalition member `k` under outcome `j`.
    pub payments: Vec<Vec<f64>>,
    /// Coalition totals under the deviation, per outcome (for the budget
    /// balance identity).
    pub deviation_totals: Vec<f64>,
}

pub fn redistribution_agreement(
    contract: &ContractFunction,
    witness: &ArbitrageWitness,
) -> Result<RedistributionAgreement> {
    if witness.kind != WitnessKind::Expected {
        return Err(Error::Argument("need an expected-arbitrage witness".into()));
    }
    let coalition = &witness.coalition;
    let n = witness.original[0].len();
    let c = coalition.len() as f64;
    let mut payments = Vec::with_capacity(n);
    let mut deviation_totals = Vec::with_capacity(n);
    for j in 0..n {
        let pay_orig = contract_payout(contract, &witness.original, j)?;
        let total_dev = coalition_total(contract, &witness.deviation, coalition, j)?;
        let total_orig: f64 = coalition.iter().map(|&i| pay_orig[i]).sum();
        let w = total_dev - total_orig;
        let row: Vec<f64> = coalition.iter().map(|&i| pay_orig[i] + w / c).collect();
        // budget balance is an identity of the construction
        debug_assert!((row.iter().sum::<f64>() - total_dev).abs() < 1e-9);
        payments.push(row);
        deviation_totals.push(total_dev);
    }
    // every member's believed expectation weakly improves
    for (k, &i) in coalition.iter().enumerate() {
        let believed_new: f64 =
            (0..n).map(|j| witness.original[i][j] * payments[j][k]).sum();
        let pay_orig_expect: f64 = (0..n)
            .map(|j| {
                witness.original[i][j]
                    * contract_payout(contract, &witness.original, j)
                        .map(|p| p[i])
                        .unwrap_or(f64::NAN)
            })
            .sum();
        if !(believed_new >= pay_orig_expect - 1e-9) {
            return Err(Error::Argument(
                "witness is not a valid expected arbitrage: a member loses".into(),
            ));
        }
    }
    Ok(RedistributionAgreement { payments, deviation_totals })
}
