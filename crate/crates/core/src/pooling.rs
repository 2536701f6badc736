//! Linear, logarithmic, generalized, and quasi-arithmetic pooling.
//!
//! The QA pool of forecasts `p_1..p_m` with weights `w` under a rule with
//! exposure `g` is the forecast `p*` at which `sum_i w_i g(p_i)` is a
//! subgradient of `G`; equivalently the minimizer over the simplex of
//! `G(x) - <x, sum_i w_i g(p_i)>`, and also the minimizer of the weighted
//! average Bregman divergence to the forecasts. Reporting the QA pool
//! maximizes an aggregator's worst-case profit over outcomes, and the
//! profit margin is the same at every outcome the pool assigns positive
//! probability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{csum, project_to_simplex, project_zero_sum, solve_linear};
use crate::scoring::{Forecast, RuleKind, ScoringRule};

/// Forecasts with nonnegative weights and an optional prior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedForecastSet {
    pub forecasts: Vec<Forecast>,
    pub weights: Vec<f64>,
    pub prior: Option<Forecast>,
}

impl WeightedForecastSet {
    pub fn new(forecasts: Vec<Forecast>, weights: Vec<f64>) -> Result<Self> {
        let set = WeightedForecastSet { forecasts, weights, prior: None };
        set.validate()?;
        Ok(set)
    }

    pub fn with_prior(mut self, prior: Forecast) -> Result<Self> {
        if prior.len() != self.dim() {
            return Err(Error::Dimension("prior dimension differs from forecasts".into()));
        }
        self.prior = Some(prior);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.forecasts.is_empty() {
            return Err(Error::Argument("need at least one forecast".into()));
        }
        let n = self.forecasts[0].len();
        if self.forecasts.iter().any(|f| f.len() != n) {
            return Err(Error::Dimension("forecasts have mixed dimensions".into()));
        }
        if self.weights.len() != self.forecasts.len() {
            return Err(Error::Dimension("one weight per forecast required".into()));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::Argument("weights must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.forecasts[0].len()
    }

    pub fn len(&self) -> usize {
        self.forecasts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forecasts.is_empty()
    }

    fn require_simplex_weights(&self) -> Result<()> {
        let s = csum(&self.weights);
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!("weights sum to {s}, expected 1")));
        }
        Ok(())
    }
}

/// Weighted arithmetic mean of the forecasts.
pub fn linear_pool(set: &WeightedForecastSet) -> Result<Forecast> {
    set.require_simplex_weights()?;
    let n = set.dim();
    let mut out = vec![0.0; n];
    for (f, &w) in set.forecasts.iter().zip(&set.weights) {
        for j in 0..n {
            out[j] += w * f[j];
        }
    }
    // guard the simplex invariant against rounding
    let s = csum(&out);
    for v in &mut out {
        *v /= s;
    }
    Forecast::new(out)
}

/// Weighted geometric mean of the forecasts, renormalized. All entries must
/// be strictly positive.
pub fn log_pool(set: &WeightedForecastSet) -> Result<Forecast> {
    set.require_simplex_weights()?;
    let n = set.dim();
    for f in &set.forecasts {
        if !f.is_interior() {
            return Err(Error::Domain(
                "logarithmic pooling needs strictly positive probabilities".into(),
            ));
        }
    }
    // work in log space and subtract the max before exponentiating
    let mut logs = vec![0.0; n];
    for (f, &w) in set.forecasts.iter().zip(&set.weights) {
        for j in 0..n {
            logs[j] += w * f[j].ln();
        }
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let s = csum(&out);
    for v in &mut out {
        *v /= s;
    }
    Forecast::new(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneralizedKind {
    Linear,
    Logarithmic,
}

/// Result of a generalized pool. The linear kind with weights not summing
/// to one can leave the simplex; it is returned unclamped with `in_range`
/// cleared.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneralizedPoolResult {
    pub values: Vec<f64>,
    pub in_range: bool,
}

/// Generalized pooling: aggregate the forecasts' updates from the prior
/// with arbitrary nonnegative weights.
pub fn generalized_pool(
    kind: GeneralizedKind,
    set: &WeightedForecastSet,
) -> Result<GeneralizedPoolResult> {
    let prior = set
        .prior
        .as_ref()
        .ok_or_else(|| Error::Argument("generalized pooling requires a prior".into()))?;
    let n = set.dim();
    match kind {
        GeneralizedKind::Linear => {
            let mut out: Vec<f64> = prior.probs().to_vec();
            for (f, &w) in set.forecasts.iter().zip(&set.weights) {
                for j in 0..n {
                    out[j] += w * (f[j] - prior[j]);
                }
            }
            let in_range = out.iter().all(|&v| (0.0..=1.0).contains(&v));
            Ok(GeneralizedPoolResult { values: out, in_range })
        }
        GeneralizedKind::Logarithmic => {
            if !prior.is_interior() || set.forecasts.iter().any(|f| !f.is_interior()) {
                return Err(Error::Domain(
                    "generalized logarithmic pooling needs strictly positive entries".into(),
                ));
            }
            let mut logs: Vec<f64> = prior.probs().iter().map(|p| p.ln()).collect();
            for (f, &w) in set.forecasts.iter().zip(&set.weights) {
                for j in 0..n {
                    logs[j] += w * (f[j].ln() - prior[j].ln());
                }
            }
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut out: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
            let s = csum(&out);
            for v in &mut out {
                *v /= s;
            }
            Ok(GeneralizedPoolResult { values: out, in_range: true })
        }
    }
}

// ---------------------------------------------------------------------------
// The QA-pool inner solver: find x minimizing G(x) - <x, v> over the simplex.
// ---------------------------------------------------------------------------

fn raw_grad(rule: &ScoringRule, x: &[f64]) -> Vec<f64> {
    // any representative modulo the all-ones vector works here
    match rule.kind() {
        RuleKind::Quadratic => x.iter().map(|&p| 2.0 * p).collect(),
        RuleKind::Logarithmic => x.iter().map(|&p| p.ln() + 1.0).collect(),
        RuleKind::Spherical { alpha } => {
            let u: f64 = x.iter().map(|&p| p.powf(*alpha)).sum();
            let c = u.powf(1.0 / alpha - 1.0);
            x.iter().map(|&p| c * p.powf(alpha - 1.0)).collect()
        }
        RuleKind::Tsallis { gamma } => x.iter().map(|&p| gamma * p.powf(gamma - 1.0)).collect(),
        RuleKind::Hs => {
            let n = x.len() as f64;
            let g = rule.g_value(x);
            x.iter().map(|&p| g / (n * p)).collect()
        }
        RuleKind::NegativeLogProduct => x.iter().map(|&p| -1.0 / p).collect(),
        RuleKind::Opt { ell } => {
            let b = crate::incentivization::optimal_binary_rule(*ell);
            vec![b.s(x[0]) - b.s(1.0 - x[0]), 0.0]
        }
        RuleKind::Custom { .. } => {
            // central differences of G along simplex-tangent directions,
            // lifted to the representative with last coordinate zero
            let n = x.len();
            let h = 1e-7;
            let mut g = vec![0.0; n];
            for j in 0..n - 1 {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += h;
                xp[n - 1] -= h;
                xm[j] -= h;
                xm[n - 1] += h;
                g[j] = (rule.g_value(&xp) - rule.g_value(&xm)) / (2.0 * h);
            }
            g
        }
    }
}

/// Hessian of `G` at an interior point (row-major).
fn hessian(rule: &ScoringRule, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut h = vec![0.0; n * n];
    match rule.kind() {
        RuleKind::Quadratic => {
            for j in 0..n {
                h[j * n + j] = 2.0;
            }
        }
        RuleKind::Logarithmic => {
            for j in 0..n {
                h[j * n + j] = 1.0 / x[j];
            }
        }
        RuleKind::Tsallis { gamma } => {
            for j in 0..n {
                h[j * n + j] = gamma * (gamma - 1.0) * x[j].powf(gamma - 2.0);
            }
        }
        RuleKind::NegativeLogProduct => {
            for j in 0..n {
                h[j * n + j] = 1.0 / (x[j] * x[j]);
            }
        }
        RuleKind::Spherical { alpha } => {
            let a = *alpha;
            let u: f64 = x.iter().map(|&p| p.powf(a)).sum();
            let c1 = u.powf(1.0 / a - 1.0);
            let c2 = u.powf(1.0 / a - 2.0);
            for j in 0..n {
                for k in 0..n {
                    let mut v = -(a - 1.0) * c2 * x[j].powf(a - 1.0) * x[k].powf(a - 1.0);
                    if j == k {
                        v += (a - 1.0) * c1 * x[j].powf(a - 2.0);
                    }
                    h[j * n + k] = v;
                }
            }
        }
        RuleKind::Hs => {
            let nf = n as f64;
            let p: f64 = x.iter().map(|&q| q.powf(1.0 / nf)).product();
            for j in 0..n {
                for k in 0..n {
                    let mut v = -p / (nf * nf * x[j] * x[k]);
                    if j == k {
                        v += p / (nf * x[j] * x[j]);
                    }
                    h[j * n + k] = v;
                }
            }
        }
        RuleKind::Opt { .. } | RuleKind::Custom { .. } => {
            // finite differences of the gradient
            let step = 1e-6;
            for k in 0..n {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += step;
                xm[k] -= step;
                let gp = raw_grad(rule, &xp);
                let gm = raw_grad(rule, &xm);
                for j in 0..n {
                    h[j * n + k] = (gp[j] - gm[j]) / (2.0 * step);
                }
            }
        }
    }
    h
}

fn objective(rule: &ScoringRule, x: &[f64], v: &[f64]) -> f64 {
    rule.g_value(x) - x.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
}

fn requires_interior(rule: &ScoringRule) -> bool {
    matches!(
        rule.kind(),
        RuleKind::Logarithmic | RuleKind::Hs | RuleKind::NegativeLogProduct | RuleKind::Opt { .. }
    ) || rule.domain() != crate::scoring::Domain::FullSimplex
}

const INTERIOR_FLOOR: f64 = 1e-30;

fn clamp_interior(x: &mut [f64], interior: bool) {
    if !interior {
        return;
    }
    let mut dirty = false;
    for v in x.iter_mut() {
        if *v < INTERIOR_FLOOR {
            *v = INTERIOR_FLOOR;
            dirty = true;
        }
    }
    if dirty {
        let s = csum(x);
        for v in x.iter_mut() {
            *v /= s;
        }
    }
}

/// KKT residual of `min G(x) - <x,v>` on the simplex at `x`: the tangent
/// gradient norm on the support, and the most-negative multiplier off it.
fn kkt_residual(grad: &[f64], x: &[f64]) -> (f64, f64) {
    let support: Vec<usize> = (0..x.len()).filter(|&j| x[j] > 1e-13).collect();
    let mean: f64 = support.iter().map(|&j| grad[j]).sum::<f64>() / support.len() as f64;
    let mut tangent = 0.0f64;
    for &j in &support {
        tangent = tangent.max((grad[j] - mean).abs());
    }
    let mut worst_mu = f64::INFINITY;
    for j in 0..x.len() {
        if x[j] <= 1e-13 {
            worst_mu = worst_mu.min(grad[j] - mean);
        }
    }
    (tangent, worst_mu)
}

/// Solve for the point where `v` is a subgradient of `G`, i.e. minimize
/// `G(x) - <x, v>` over the simplex. `v` may be any representative modulo
/// the all-ones vector.
fn solve_exposure_target(rule: &ScoringRule, v: &[f64]) -> Result<Forecast> {
    let n = rule.n_outcomes();
    if v.len() != n {
        return Err(Error::Dimension("target has wrong dimension".into()));
    }
    if n == 2 {
        return solve_binary(rule, v[0] - v[1]);
    }
    let interior = requires_interior(rule);
    let mut x = vec![1.0 / n as f64; n];
    let mut fx = objective(rule, &x, v);
    let mut step = 1.0;
    let max_iter = 10_000;
    for it in 0..max_iter {
        let grad: Vec<f64> = raw_grad(rule, &x).iter().zip(v).map(|(g, t)| g - t).collect();
        let (tangent, worst_mu) = kkt_residual(&grad, &x);
        if tangent < 1e-12 && worst_mu > -1e-9 {
            return Forecast::new(x);
        }
        // Newton polish on the active support once the iterate is close
        // enough for the quadratic model to hold
        if it % 4 == 3 || tangent < 1e-4 {
            if let Some(nx) = newton_step(rule, &x, v, &grad) {
                // a null step must fall through to projected gradient so
                // off-support coordinates can re-enter
                let moved = nx
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max)
                    > 1e-15;
                let f_new = objective(rule, &nx, v);
                if moved && f_new <= fx + 1e-15 {
                    x = nx;
                    fx = f_new;
                    continue;
                }
            }
        }
        // projected gradient with backtracking
        let mut t = step;
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - t * gi).collect();
            cand = project_to_simplex(&cand);
            clamp_interior(&mut cand, interior);
            let f_new = objective(rule, &cand, v);
            let decrease: f64 =
                cand.iter().zip(&x).zip(&grad).map(|((c, xi), gi)| (c - xi) * gi).sum();
            if f_new.is_finite() && f_new <= fx + 0.25 * decrease {
                x = cand;
                fx = f_new;
                step = (t * 2.0).min(1e6);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no descent direction left at floating-point resolution
            let (tangent, worst_mu) = kkt_residual(&grad, &x);
            if tangent < 1e-8 && worst_mu > -1e-7 {
                return Forecast::new(x);
            }
            return Err(Error::Numeric(format!(
                "QA pool solver stalled: tangent residual {tangent:.3e}"
            )));
        }
    }
    let grad: Vec<f64> = raw_grad(rule, &x).iter().zip(v).map(|(g, t)| g - t).collect();
    let (tangent, worst_mu) = kkt_residual(&grad, &x);
    if tangent < 1e-8 && worst_mu > -1e-7 {
        return Forecast::new(x);
    }
    Err(Error::Numeric(format!(
        "QA pool solver did not converge: tangent residual {tangent:.3e}"
    )))
}

/// One equality-constrained Newton step restricted to the support of `x`,
/// with a line search that keeps coordinates nonnegative.
fn newton_step(rule: &ScoringRule, x: &[f64], v: &[f64], grad: &[f64]) -> Option<Vec<f64>> {
    let _ = v;
    let n = x.len();
    let support: Vec<usize> = (0..n).filter(|&j| x[j] > 1e-13).collect();
    let k = support.len();
    if k < 2 {
        return None;
    }
    let h_full = hessian(rule, x);
    // KKT system [H 1; 1^T 0] [d; lam] = [-grad; 0] on the support
    let dim = k + 1;
    let mut a = vec![0.0; dim * dim];
    let mut b = vec![0.0; dim];
    for (ri, &i) in support.iter().enumerate() {
        for (ci, &j) in support.iter().enumerate() {
            a[ri * dim + ci] = h_full[i * n + j];
        }
        a[ri * dim + k] = 1.0;
        a[k * dim + ri] = 1.0;
        b[ri] = -grad[i];
    }
    let sol = solve_linear(&mut a, &mut b, dim).ok()?;
    let mut t = 1.0f64;
    for (ri, &i) in support.iter().enumerate() {
        let d = sol[ri];
        if d < 0.0 {
            // step to the boundary at most
            t = t.min(-x[i] / d);
        }
    }
    if !t.is_finite() || t <= 0.0 {
        return None;
    }
    let interior = requires_interior(rule);
    if interior {
        t = (t * 0.999).min(1.0);
    } else {
        t = t.min(1.0);
    }
    let mut out = x.to_vec();
    for (ri, &i) in support.iter().enumerate() {
        out[i] = (x[i] + t * sol[ri]).max(0.0);
    }
    let s = csum(&out);
    for o in &mut out {
        *o /= s;
    }
    clamp_interior(&mut out, interior);
    Some(out)
}

/// Bisection on the strictly increasing scalar exposure for binary rules.
/// `target` is `g_1 - g_2` of the sought point.
fn solve_binary(rule: &ScoringRule, target: f64) -> Result<Forecast> {
    let d = |p: f64| {
        let g = raw_grad(rule, &[p, 1.0 - p]);
        g[0] - g[1]
    };
    let interior = requires_interior(rule);
    let (mut lo, mut hi) = if interior { (1e-300, 1.0 - 1e-16) } else { (0.0, 1.0) };
    // boundary solutions for rules with bounded exposure
    if !interior {
        if d(0.0) >= target {
            return Forecast::binary(0.0);
        }
        if d(1.0) <= target {
            return Forecast::binary(1.0);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let val = d(mid);
        if !val.is_finite() {
            // overflow near an endpoint: move inward
            if mid < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
            continue;
        }
        if val < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Forecast::binary(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// QA pooling
// ---------------------------------------------------------------------------

/// A QA pool with its max-min profit guarantee.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QaPoolResult {
    pub pooled: Forecast,
    /// Worst-case profit: `min_j` of the per-outcome margins.
    pub guarantee: f64,
    /// `score(pooled; j) - sum_i w_i score(p_i; j)` per outcome.
    pub per_outcome_margin: Vec<f64>,
}

fn weighted_exposure_target(rule: &ScoringRule, set: &WeightedForecastSet) -> Result<Vec<f64>> {
    let n = set.dim();
    let mut v = vec![0.0; n];
    for (f, &w) in set.forecasts.iter().zip(&set.weights) {
        if w == 0.0 {
            continue;
        }
        if requires_interior(rule) && !f.is_interior() {
            return Err(Error::Domain(
                "forecast with a zero entry is outside the rule's domain".into(),
            ));
        }
        let e = rule.exposure(f)?;
        for j in 0..n {
            v[j] += w * e[j];
        }
    }
    Ok(v)
}

/// Sum of weighted scores; combining a `-inf` score with positive weight is
/// an explicit error rather than silent `-inf` arithmetic.
fn weighted_score_sum(
    rule: &ScoringRule,
    set: &WeightedForecastSet,
    outcome: usize,
) -> Result<f64> {
    let mut acc = 0.0;
    for (f, &w) in set.forecasts.iter().zip(&set.weights) {
        if w == 0.0 {
            continue;
        }
        let s = rule.score(f, outcome)?;
        if s == f64::NEG_INFINITY {
            return Err(Error::Domain(
                "cannot combine a negative-infinity score with positive weight".into(),
            ));
        }
        acc += w * s;
    }
    Ok(acc)
}

/// Quasi-arithmetic pool of the set with respect to `rule`, with the
/// max-min guarantee and per-outcome margins.
pub fn qa_pool(rule: &ScoringRule, set: &WeightedForecastSet) -> Result<QaPoolResult> {
    set.require_simplex_weights()?;
    if set.dim() != rule.n_outcomes() {
        return Err(Error::Dimension("set dimension differs from rule".into()));
    }
    let v = weighted_exposure_target(rule, set)?;
    let pooled = solve_exposure_target(rule, &v)?;
    let n = set.dim();
    let mut margins = vec![0.0; n];
    for j in 0..n {
        let pool_score = rule.score(&pooled, j)?;
        let avg = weighted_score_sum(rule, set, j)?;
        margins[j] = pool_score - avg;
    }
    let guarantee = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(QaPoolResult { pooled, guarantee, per_outcome_margin: margins })
}

/// Binary QA pooling as a weighted operator: pool `(p, w)` pairs, returning
/// the pooled probability and the additive total weight.
pub fn qa_pool_weighted_binary(rule: &ScoringRule, items: &[(f64, f64)]) -> Result<(f64, f64)> {
    if rule.n_outcomes() != 2 {
        return Err(Error::Argument("weighted binary pooling needs n = 2".into()));
    }
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(Error::Argument("total weight must be positive".into()));
    }
    let forecasts: Vec<Forecast> =
        items.iter().map(|&(p, _)| Forecast::binary(p)).collect::<Result<_>>()?;
    let weights: Vec<f64> = items.iter().map(|(_, w)| w / total).collect();
    let set = WeightedForecastSet::new(forecasts, weights)?;
    let r = qa_pool(rule, &set)?;
    Ok((r.pooled[0], total))
}

// ---------------------------------------------------------------------------
// Convex exposure
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ExposureVerdict {
    PassesSampled,
    Counterexample { p: Vec<f64>, q: Vec<f64>, w: f64 },
}

/// Sampled check of the convex exposure property: for sampled `p`, `q`, `w`,
/// try to solve `g(x) = w g(p) + (1-w) g(q)` modulo the all-ones direction.
/// A point where the solve fails is returned as a witness.
pub fn check_convex_exposure(
    rule: &ScoringRule,
    samples: usize,
    seed: u64,
) -> Result<ExposureVerdict> {
    use rand::Rng as _;
    if samples < 1 {
        return Err(Error::Argument("samples must be >= 1".into()));
    }
    let n = rule.n_outcomes();
    let mut cases: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    // vertex pairs probe the extreme points of the exposure range for rules
    // whose domain includes the boundary
    if !requires_interior(rule) {
        for i in 0..n {
            for j in (i + 1)..n {
                let mut p = vec![0.0; n];
                let mut q = vec![0.0; n];
                p[i] = 1.0;
                q[j] = 1.0;
                cases.push((p, q, 0.5));
            }
        }
    }
    let mut rng = crate::rng::root_rng(seed);
    while cases.len() < samples + n * (n - 1) / 2 {
        let p = crate::scoring::random_interior(&mut rng, n);
        let q = crate::scoring::random_interior(&mut rng, n);
        let w: f64 = rng.random();
        cases.push((p, q, w));
    }
    for (p, q, w) in cases {
        let fp = Forecast::new(p.clone())?;
        let fq = Forecast::new(q.clone())?;
        let ep = rule.exposure(&fp)?;
        let eq = rule.exposure(&fq)?;
        let v: Vec<f64> = ep.iter().zip(&eq).map(|(a, b)| w * a + (1.0 - w) * b).collect();
        let x = solve_exposure_target(rule, &v)?;
        let gx = rule.exposure(&x)?;
        let resid =
            project_zero_sum(&gx.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
        let norm = resid.iter().cloned().fold(0.0f64, |m, r| m.max(r.abs()));
        if norm > 1e-6 {
            return Ok(ExposureVerdict::Counterexample { p, q, w });
        }
    }
    Ok(ExposureVerdict::PassesSampled)
}

// ---------------------------------------------------------------------------
// QA shrinkage and overconfidence
// ---------------------------------------------------------------------------

/// The forecast whose exposure is `w g(p)`: shrinkage toward indifference.
/// `w = 1` is the identity; `w = 0` is complete shrinkage.
pub fn qa_shrink(rule: &ScoringRule, forecast: &Forecast, w: f64) -> Result<Forecast> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Argument("shrink weight must lie in [0, 1]".into()));
    }
    let e = rule.exposure(forecast)?;
    let v: Vec<f64> = e.iter().map(|x| w * x).collect();
    solve_exposure_target(rule, &v)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverconfidenceReport {
    /// `sum_k G(p^k) - sum_k s(p^k; j^k)`: expected minus realized score.
    pub expected_score_gap: f64,
    /// `sum_k <g(p^k), e_{j^k} - p^k>`; equals minus the gap.
    pub exposure_sum: f64,
    /// Whether some shrink factor strictly improves the realized total score.
    pub shrink_improves: bool,
}

/// Diagnose overconfidence of a forecast stream against realized outcomes.
pub fn overconfidence_report(
    rule: &ScoringRule,
    forecasts: &[Forecast],
    outcomes: &[usize],
) -> Result<OverconfidenceReport> {
    if forecasts.len() != outcomes.len() || forecasts.is_empty() {
        return Err(Error::Argument("need matching, nonempty forecasts and outcomes".into()));
    }
    // the rule must have a zero-exposure point for shrinkage to be defined
    let probe = solve_exposure_target(rule, &vec![0.0; rule.n_outcomes()])?;
    let e0 = rule.exposure(&probe)?;
    if e0.iter().any(|v| v.abs() > 1e-7) {
        return Err(Error::Unsupported(
            "rule has no zero-exposure point; shrinkage is undefined".into(),
        ));
    }

    let mut gap = 0.0;
    let mut exposure_sum = 0.0;
    for (f, &j) in forecasts.iter().zip(outcomes) {
        let s = rule.score(f, j)?;
        if s == f64::NEG_INFINITY {
            return Err(Error::Domain("realized score is -inf; gap undefined".into()));
        }
        gap += rule.expected_score(f)? - s;
        let e = rule.exposure(f)?;
        exposure_sum += e[j] - f.probs().iter().zip(&e).map(|(p, g)| p * g).sum::<f64>();
    }

    let total_shrunk = |w: f64| -> Result<f64> {
        let mut t = 0.0;
        for (f, &j) in forecasts.iter().zip(outcomes) {
            let shr = qa_shrink(rule, f, w)?;
            t += rule.score(&shr, j)?;
        }
        Ok(t)
    };
    let actual = total_shrunk(1.0)?;
    // the total shrunk score is concave in w, so check the derivative side
    // first and fall back to a golden-section search
    let shrink_improves = if total_shrunk(1.0 - 1e-3)? > actual + 1e-9 {
        true
    } else {
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.0f64, 1.0f64);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let mut fc = total_shrunk(c)?;
        let mut fd = total_shrunk(d)?;
        for _ in 0..48 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = total_shrunk(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = total_shrunk(d)?;
            }
        }
        fc.max(fd) > actual + 1e-9
    };
    Ok(OverconfidenceReport { expected_score_gap: gap, exposure_sum, shrink_improves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::root_rng;
    use crate::scoring::random_interior;
    use rand::Rng as _;

    fn fc(v: &[f64]) -> Forecast {
        Forecast::new(v.to_vec()).unwrap()
    }

    fn set(fs: &[&[f64]], ws: &[f64]) -> WeightedForecastSet {
        WeightedForecastSet::new(fs.iter().map(|f| fc(f)).collect(), ws.to_vec()).unwrap()
    }

    #[test]
    fn linear_pool_examples() {
        let s = set(&[&[0.2, 0.8], &[0.6, 0.4]], &[0.5, 0.5]);
        let p = linear_pool(&s).unwrap();
        assert!((p[0] - 0.4).abs() < 1e-15 && (p[1] - 0.6).abs() < 1e-15);
        let s = set(&[&[0.3, 0.7]], &[1.0]);
        let p = linear_pool(&s).unwrap();
        assert!((p[0] - 0.3).abs() < 1e-15);
        // experts at 0.1% and 20% average to roughly 10%
        let s = set(&[&[0.001, 0.999], &[0.2, 0.8]], &[0.5, 0.5]);
        let p = linear_pool(&s).unwrap();
        assert!((p[0] - 0.1005).abs() < 1e-12);
    }

    #[test]
    fn log_pool_worked_examples() {
        // the three-outcome worked example pools to exactly (75%, 15%, 10%)
        let s = set(&[&[0.6, 0.36, 0.04], &[0.75, 0.05, 0.2]], &[0.5, 0.5]);
        let p = log_pool(&s).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-12);
        assert!((p[1] - 0.15).abs() < 1e-12);
        assert!((p[2] - 0.10).abs() < 1e-12);

        // monster-under-the-bed: mass concentrates on the third outcome
        let s =
            set(&[&[0.0004, 0.4998, 0.4998], &[0.4998, 0.0004, 0.4998]], &[0.5, 0.5]);
        let p = log_pool(&s).unwrap();
        assert!((p[0] - 0.027).abs() < 2e-3, "{:?}", p.probs());
        assert!((p[2] - 0.946).abs() < 2e-3);

        // strong evidence is taken seriously
        let s = set(&[&[0.001, 0.999], &[0.5, 0.5]], &[0.5, 0.5]);
        let p = log_pool(&s).unwrap();
        assert!((p[0] - 0.03).abs() < 2e-3, "{}", p[0]);

        // zero entries are rejected
        let s = set(&[&[0.0, 1.0], &[0.5, 0.5]], &[0.5, 0.5]);
        assert!(log_pool(&s).is_err());
    }

    #[test]
    fn generalized_pool_reductions() {
        // weights summing to 1 reduce to the plain pools
        let s = set(&[&[0.6, 0.36, 0.04], &[0.75, 0.05, 0.2]], &[0.5, 0.5])
            .with_prior(fc(&[0.3, 0.4, 0.3]))
            .unwrap();
        let lin = generalized_pool(GeneralizedKind::Linear, &s).unwrap();
        let plain = linear_pool(&s).unwrap();
        for j in 0..3 {
            assert!((lin.values[j] - plain[j]).abs() < 1e-12);
        }
        let lg = generalized_pool(GeneralizedKind::Logarithmic, &s).unwrap();
        let plain = log_pool(&s).unwrap();
        for j in 0..3 {
            assert!((lg.values[j] - plain[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn generalized_linear_can_exit_simplex() {
        let s = set(&[&[0.9, 0.1]], &[2.0]).with_prior(fc(&[0.5, 0.5])).unwrap();
        let r = generalized_pool(GeneralizedKind::Linear, &s).unwrap();
        assert!((r.values[0] - 1.3).abs() < 1e-12);
        assert!(!r.in_range);
    }

    #[test]
    fn generalized_log_conditionally_independent_evidence() {
        // two experts whose evidence is independent conditional on the
        // outcome: posterior 0.75 each from prior 0.5; adding the log-odds
        // updates (weights 1) gives odds 9, i.e. 0.9, the Bayes-correct
        // aggregate
        let s = set(&[&[0.75, 0.25], &[0.75, 0.25]], &[1.0, 1.0])
            .with_prior(fc(&[0.5, 0.5]))
            .unwrap();
        let r = generalized_pool(GeneralizedKind::Logarithmic, &s).unwrap();
        assert!((r.values[0] - 0.9).abs() < 1e-12, "{:?}", r.values);
    }

    #[test]
    fn missing_prior_is_an_error() {
        let s = set(&[&[0.9, 0.1]], &[1.0]);
        assert!(generalized_pool(GeneralizedKind::Linear, &s).is_err());
    }

    #[test]
    fn qa_pool_quadratic_is_linear_pool() {
        let mut rng = root_rng(21);
        for _ in 0..100 {
            let n = rng.random_range(2..=4usize);
            let m = rng.random_range(1..=4usize);
            let fs: Vec<Forecast> = (0..m).map(|_| fc(&random_interior(&mut rng, n))).collect();
            let mut ws: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.01).collect();
            let s: f64 = ws.iter().sum();
            ws.iter_mut().for_each(|w| *w /= s);
            let set = WeightedForecastSet::new(fs, ws).unwrap();
            let rule = ScoringRule::quadratic(n);
            let qa = qa_pool(&rule, &set).unwrap();
            let lin = linear_pool(&set).unwrap();
            for j in 0..n {
                assert!((qa.pooled[j] - lin[j]).abs() < 1e-10, "n={n} j={j}");
            }
        }
    }

    #[test]
    fn qa_pool_log_is_log_pool() {
        let mut rng = root_rng(22);
        for _ in 0..100 {
            let n = rng.random_range(2..=4usize);
            let m = rng.random_range(1..=4usize);
            let fs: Vec<Forecast> = (0..m).map(|_| fc(&random_interior(&mut rng, n))).collect();
            let mut ws: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.01).collect();
            let s: f64 = ws.iter().sum();
            ws.iter_mut().for_each(|w| *w /= s);
            let set = WeightedForecastSet::new(fs, ws).unwrap();
            let rule = ScoringRule::logarithmic(n);
            let qa = qa_pool(&rule, &set).unwrap();
            let lg = log_pool(&set).unwrap();
            for j in 0..n {
                assert!((qa.pooled[j] - lg[j]).abs() < 1e-10, "n={n} j={j}");
            }
        }
        // the worked example routes through the solver too
        let s = set(&[&[0.6, 0.36, 0.04], &[0.75, 0.05, 0.2]], &[0.5, 0.5]);
        let qa = qa_pool(&ScoringRule::logarithmic(3), &s).unwrap();
        assert!((qa.pooled[0] - 0.75).abs() < 1e-10);
        assert!((qa.pooled[1] - 0.15).abs() < 1e-10);
    }

    #[test]
    fn qa_pool_margins_binary_example() {
        // quadratic, forecasts 0.4 and 0.6: pooled 0.5, both margins 0.02
        let s = set(&[&[0.4, 0.6], &[0.6, 0.4]], &[0.5, 0.5]);
        let qa = qa_pool(&ScoringRule::quadratic(2), &s).unwrap();
        assert!((qa.pooled[0] - 0.5).abs() < 1e-12);
        assert!((qa.guarantee - 0.02).abs() < 1e-10, "{}", qa.guarantee);
        for m in &qa.per_outcome_margin {
            assert!((m - 0.02).abs() < 1e-10);
        }
    }

    #[test]
    fn qa_pool_simultaneity_property() {
        // margins agree at supported outcomes and are nonnegative; strictly
        // positive when forecasts genuinely differ
        let mut rng = root_rng(23);
        let mk_rule = |rng: &mut crate::rng::Rng, n: usize| -> ScoringRule {
            match rng.random_range(0..3) {
                0 => ScoringRule::quadratic(n),
                1 => ScoringRule::logarithmic(n),
                _ => ScoringRule::spherical(2.0, n).unwrap(),
            }
        };
        for _ in 0..100 {
            let n = rng.random_range(2..=4usize);
            let m = rng.random_range(2..=4usize);
            let rule = mk_rule(&mut rng, n);
            let fs: Vec<Forecast> = (0..m).map(|_| fc(&random_interior(&mut rng, n))).collect();
            let mut ws: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.05).collect();
            let s: f64 = ws.iter().sum();
            ws.iter_mut().for_each(|w| *w /= s);
            let differ =
                fs.iter().skip(1).any(|f| (0..n).any(|j| (f[j] - fs[0][j]).abs() > 1e-3));
            let set = WeightedForecastSet::new(fs, ws).unwrap();
            let qa = qa_pool(&rule, &set).unwrap();
            assert!(qa.guarantee >= -1e-9, "{:?}: {}", rule, qa.guarantee);
            for j in 0..n {
                if qa.pooled[j] > 1e-6 {
                    assert!(
                        (qa.per_outcome_margin[j] - qa.guarantee).abs() < 1e-6,
                        "{rule:?}: margin {} vs {}",
                        qa.per_outcome_margin[j],
                        qa.guarantee,
                    );
                }
            }
            if differ {
                assert!(qa.guarantee > 0.0, "{rule:?}");
            }
        }
    }

    #[test]
    fn qa_pool_margins_equal_weighted_bregman() {
        let mut rng = root_rng(29);
        for _ in 0..50 {
            let n = rng.random_range(2..=4usize);
            let rule = ScoringRule::logarithmic(n);
            let fs: Vec<Forecast> = (0..3).map(|_| fc(&random_interior(&mut rng, n))).collect();
            let ws = vec![0.5, 0.3, 0.2];
            let set = WeightedForecastSet::new(fs.clone(), ws.clone()).unwrap();
            let qa = qa_pool(&rule, &set).unwrap();
            let wavg: f64 = fs
                .iter()
                .zip(&ws)
                .map(|(f, &w)| w * rule.bregman(&qa.pooled, f).unwrap())
                .sum();
            assert!((qa.guarantee - wavg).abs() < 1e-6, "{} vs {wavg}", qa.guarantee);
        }
    }

    #[test]
    fn qa_pool_translation_invariance() {
        // shifting the exposure target by c * all-ones leaves the pool alone
        let s = set(&[&[0.5, 0.3, 0.2], &[0.1, 0.6, 0.3]], &[0.4, 0.6]);
        let rule = ScoringRule::logarithmic(3);
        let v = weighted_exposure_target(&rule, &s).unwrap();
        let x1 = solve_exposure_target(&rule, &v).unwrap();
        let shifted: Vec<f64> = v.iter().map(|a| a + 3.7).collect();
        let x2 = solve_exposure_target(&rule, &shifted).unwrap();
        for j in 0..3 {
            assert!((x1[j] - x2[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn weight_score_concavity() {
        let mut rng = root_rng(31);
        for rule in [
            ScoringRule::quadratic(3),
            ScoringRule::logarithmic(3),
            ScoringRule::spherical(2.0, 3).unwrap(),
        ] {
            for _ in 0..40 {
                let fs: Vec<Forecast> =
                    (0..3).map(|_| fc(&random_interior(&mut rng, 3))).collect();
                let v = random_interior(&mut rng, 3);
                let w = random_interior(&mut rng, 3);
                let c: f64 = rng.random();
                let j = rng.random_range(0..3);
                let mix: Vec<f64> =
                    v.iter().zip(&w).map(|(a, b)| c * a + (1.0 - c) * b).collect();
                let score_at = |ws: &[f64]| -> f64 {
                    let set = WeightedForecastSet::new(fs.clone(), ws.to_vec()).unwrap();
                    let qa = qa_pool(&rule, &set).unwrap();
                    rule.score(&qa.pooled, j).unwrap()
                };
                let lhs = score_at(&mix);
                let rhs = c * score_at(&v) + (1.0 - c) * score_at(&w);
                assert!(lhs >= rhs - 1e-8, "{rule:?}: {lhs} < {rhs}");
            }
        }
    }

    #[test]
    fn pooling_operator_axioms_binary() {
        // weight additivity, idempotence, associativity for binary QA pooling
        let rules = [
            ScoringRule::quadratic(2),
            ScoringRule::logarithmic(2),
            ScoringRule::spherical(2.0, 2).unwrap(),
        ];
        let mut rng = root_rng(37);
        for rule in &rules {
            for _ in 0..25 {
                let p1: f64 = rng.random_range(0.05..0.95);
                let p2: f64 = rng.random_range(0.05..0.95);
                let p3: f64 = rng.random_range(0.05..0.95);
                let w1: f64 = rng.random_range(0.1..2.0);
                let w2: f64 = rng.random_range(0.1..2.0);
                let w3: f64 = rng.random_range(0.1..2.0);
                // weight additivity is exact by construction
                let (q12, wt12) = qa_pool_weighted_binary(rule, &[(p1, w1), (p2, w2)]).unwrap();
                assert_eq!(wt12, w1 + w2);
                // idempotence
                let (qi, _) = qa_pool_weighted_binary(rule, &[(p1, w1), (p1, w2)]).unwrap();
                assert!((qi - p1).abs() < 1e-10, "{rule:?}: {qi} vs {p1}");
                // associativity: ((p1,p2) then p3) equals pooling all three
                let (q123a, _) = qa_pool_weighted_binary(rule, &[(q12, wt12), (p3, w3)]).unwrap();
                let (q123b, _) =
                    qa_pool_weighted_binary(rule, &[(p1, w1), (p2, w2), (p3, w3)]).unwrap();
                assert!((q123a - q123b).abs() < 1e-8, "{rule:?}: {q123a} vs {q123b}");
            }
        }
    }

    #[test]
    fn convex_exposure_verdicts() {
        let quad = ScoringRule::quadratic(3);
        assert!(matches!(
            check_convex_exposure(&quad, 50, 1).unwrap(),
            ExposureVerdict::PassesSampled
        ));
        let sph = ScoringRule::spherical(2.0, 3).unwrap();
        assert!(matches!(
            check_convex_exposure(&sph, 50, 2).unwrap(),
            ExposureVerdict::PassesSampled
        ));
        // Tsallis gamma = 3 fails at the vertex pair with w = 1/2
        let tsa = ScoringRule::tsallis(3.0, 3).unwrap();
        match check_convex_exposure(&tsa, 50, 3).unwrap() {
            ExposureVerdict::Counterexample { p, q, w } => {
                assert!((w - 0.5).abs() < 1e-12);
                assert!((p[0] - 1.0).abs() < 1e-12);
                assert!((q[1] - 1.0).abs() < 1e-12);
            }
            ExposureVerdict::PassesSampled => panic!("expected a counterexample"),
        }
    }

    #[test]
    fn qa_shrink_examples() {
        // w = 1 is the identity
        let rule = ScoringRule::logarithmic(2);
        let p = fc(&[0.73, 0.27]);
        let s = qa_shrink(&rule, &p, 1.0).unwrap();
        assert!((s[0] - 0.73).abs() < 1e-10);
        // log shrink halves the log-odds: odds 9^(1/2) = 3, so 0.75
        let s = qa_shrink(&rule, &fc(&[0.9, 0.1]), 0.5).unwrap();
        assert!((s[0] - 0.75).abs() < 1e-10, "{}", s[0]);
        // oracle: log pool with the uniform forecast
        let pool = log_pool(&set(&[&[0.9, 0.1], &[0.5, 0.5]], &[0.5, 0.5])).unwrap();
        assert!((s[0] - pool[0]).abs() < 1e-10);
        // quadratic shrink averages with uniform
        let rule = ScoringRule::quadratic(2);
        let s = qa_shrink(&rule, &fc(&[0.9, 0.1]), 0.5).unwrap();
        assert!((s[0] - 0.7).abs() < 1e-10 && (s[1] - 0.3).abs() < 1e-10);
    }

    #[test]
    fn rule_without_zero_exposure_point_is_unsupported() {
        // a strongly tilted G has no indifference point on the simplex
        let rule = ScoringRule::custom(
            |x| x.iter().map(|p| p * p).sum::<f64>() + 10.0 * x[0],
            |x| {
                let mut g: Vec<f64> = x.iter().map(|p| 2.0 * p).collect();
                g[0] += 10.0;
                g
            },
            3,
            crate::scoring::Domain::FullSimplex,
        )
        .unwrap();
        let fs = vec![fc(&[0.5, 0.3, 0.2])];
        let err = overconfidence_report(&rule, &fs, &[0]);
        assert!(matches!(err, Err(crate::error::Error::Unsupported(_))), "{err:?}");
    }

    #[test]
    fn opt_rule_pools_and_shrinks() {
        // the index-optimal binary rule works through the generic machinery
        let rule = ScoringRule::opt(2.0).unwrap();
        let s = qa_shrink(&rule, &fc(&[0.8, 0.2]), 1.0).unwrap();
        assert!((s[0] - 0.8).abs() < 1e-9, "{}", s[0]);
        let set = set(&[&[0.3, 0.7], &[0.6, 0.4]], &[0.5, 0.5]);
        let qa = qa_pool(&rule, &set).unwrap();
        assert!(qa.pooled[0] > 0.3 && qa.pooled[0] < 0.6);
        assert!(qa.guarantee > 0.0);
        for m in &qa.per_outcome_margin {
            assert!((m - qa.guarantee).abs() < 1e-8);
        }
    }

    #[test]
    fn overconfidence_worked_example() {
        // 5 forecasts of (0.8, 0.2), 3 outcomes realized, quadratic
        let rule = ScoringRule::quadratic(2);
        let fs = vec![fc(&[0.8, 0.2]); 5];
        let outcomes = vec![0, 0, 0, 1, 1];
        let rep = overconfidence_report(&rule, &fs, &outcomes).unwrap();
        assert!((rep.expected_score_gap - 1.20).abs() < 1e-10, "{}", rep.expected_score_gap);
        assert!((rep.exposure_sum + 1.20).abs() < 1e-9);
        assert!(rep.shrink_improves);
    }

    #[test]
    fn calibrated_stream_is_not_overconfident() {
        // 4 of 5 events at 0.8 realized: gap 0, no shrink improvement
        let rule = ScoringRule::quadratic(2);
        let fs = vec![fc(&[0.8, 0.2]); 5];
        let outcomes = vec![0, 0, 0, 0, 1];
        let rep = overconfidence_report(&rule, &fs, &outcomes).unwrap();
        assert!(rep.expected_score_gap.abs() < 1e-12, "{}", rep.expected_score_gap);
        assert!(!rep.shrink_improves);
    }

    #[test]
    fn uniform_forecasts_have_zero_gap() {
        let rule = ScoringRule::logarithmic(3);
        let fs = vec![fc(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]); 6];
        let outcomes = vec![0, 1, 2, 2, 1, 0];
        let rep = overconfidence_report(&rule, &fs, &outcomes).unwrap();
        assert!(rep.expected_score_gap.abs() < 1e-9);
    }

    #[test]
    fn overconfidence_gap_sign_matches_shrink_improvement() {
        // the two overconfidence notions agree whenever the gap is clearly
        // signed
        let mut rng = root_rng(41);
        let mut checked = 0;
        while checked < 200 {
            let rule = match rng.random_range(0..2) {
                0 => ScoringRule::quadratic(2),
                _ => ScoringRule::logarithmic(2),
            };
            let n_ev = rng.random_range(2..6);
            let fs: Vec<Forecast> = (0..n_ev)
                .map(|_| {
                    let p: f64 = rng.random_range(0.1..0.9);
                    fc(&[p, 1.0 - p])
                })
                .collect();
            let outcomes: Vec<usize> =
                (0..n_ev).map(|_| usize::from(rng.random::<f64>() < 0.5)).collect();
            let rep = overconfidence_report(&rule, &fs, &outcomes).unwrap();
            if rep.expected_score_gap.abs() > 1e-4 {
                assert_eq!(
                    rep.expected_score_gap > 0.0,
                    rep.shrink_improves,
                    "{rule:?}: gap {}",
                    rep.expected_score_gap
                );
                checked += 1;
            }
        }
    }
}
