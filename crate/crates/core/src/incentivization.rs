//! Normalization of binary rules, the power incentivization index, optimal
//! rules, near-optimal polynomial rules, and Monte Carlo simulation of the
//! coin-flipping expert.
//!
//! A normalized rule has `s(1/2) = 0` and unit integral of its expected
//! score function. For such a rule the `ell`-th power incentivization index
//!
//! ```text
//! Ind(s) = integral over (0,1) of (x(1-x)/G''(x))^(ell/4) dx
//! ```
//!
//! predicts the error of a rational expert who can keep paying `c` per coin
//! flip: the expected `ell`-th power error tends to
//! `mu_ell * 2^(ell/4) * Ind(s) * c^(ell/4)` as `c -> 0`, where `mu_ell` is
//! the `ell`-th absolute moment of the standard normal.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{integrate, NeumaierSum};
use crate::rng::trial_rng;
use crate::scoring::BinaryRule;

/// A binary rule rescaled so that `s(1/2) = 0` and `int G = 1`.
#[derive(Debug, Clone)]
pub struct NormalizedRule {
    rule: BinaryRule,
    scale: f64,
    shift: f64,
}

impl NormalizedRule {
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn name(&self) -> &str {
        self.rule.name()
    }

    pub fn s(&self, x: f64) -> f64 {
        self.rule.s(x)
    }

    pub fn g(&self, p: f64) -> f64 {
        self.rule.g(p)
    }

    pub fn g_second(&self, p: f64) -> f64 {
        self.rule.g_second(p)
    }

    pub fn as_binary(&self) -> &BinaryRule {
        &self.rule
    }
}

/// Rescale `rule` to `a*s + b` with `a = 1/(int G - G(1/2))` and
/// `b = -a G(1/2)`, so both normalization identities hold.
pub fn normalize(rule: &BinaryRule) -> Result<NormalizedRule> {
    let g_half = rule.g(0.5);
    let int_g = integrate(|x| rule.g(x), 0.0, 1.0, 1e-10).map_err(|e| {
        Error::NotNormalizable(format!("integral of G did not converge: {e}"))
    })?;
    let denom = int_g - g_half;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::NotNormalizable(format!(
            "int G - G(1/2) = {denom} must be positive"
        )));
    }
    let a = 1.0 / denom;
    let b = -a * g_half;
    let base = rule.clone();
    let base2 = rule.clone();
    let scaled = BinaryRule::new(
        rule.name(),
        move |x| a * base.s(x) + b,
        move |x| a * base2.s_prime(x),
    );
    Ok(NormalizedRule { rule: scaled, scale: a, shift: b })
}

// ---------------------------------------------------------------------------
// Index-optimal rules
// ---------------------------------------------------------------------------

fn kappa_cache() -> &'static Mutex<HashMap<u64, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Normalizing constant `kappa_ell = 1 / int_{1/2}^1 (x(1-x)^3)^(ell/(ell+4)) dx`.
pub fn kappa(ell: f64) -> f64 {
    if ell.is_infinite() {
        return 320.0 / 3.0;
    }
    if let Some(&k) = kappa_cache().lock().unwrap().get(&ell.to_bits()) {
        return k;
    }
    let e = ell / (ell + 4.0);
    let integral = integrate(|x| (x * (1.0 - x).powi(3)).powf(e), 0.5, 1.0, 1e-12)
        .expect("kappa integrand is bounded");
    let k = 1.0 / integral;
    kappa_cache().lock().unwrap().insert(ell.to_bits(), k);
    k
}

/// The binary rule minimizing the `ell`-th power index, as a `BinaryRule`
/// (already normalized by construction). `ell = +inf` returns the closed
/// polynomial limit.
pub fn optimal_binary_rule(ell: f64) -> BinaryRule {
    let k = kappa(ell);
    if ell.is_infinite() {
        return BinaryRule::new(
            "opt(inf)",
            |x| 5.0 / 9.0 * (48.0 * x.powi(4) - 128.0 * x.powi(3) + 96.0 * x * x - 11.0),
            move |x| {
                let d = 1.0 - x;
                320.0 / 3.0 * x * d * d
            },
        );
    }
    let inv = 1.0 / (ell + 4.0);
    let s_prime = move |x: f64| {
        if x >= 0.5 {
            k * (x.powf(ell) * (1.0 - x).powf(2.0 * ell - 4.0)).powf(inv)
        } else {
            k * (x.powf(ell - 8.0) * (1.0 - x).powf(2.0 * ell + 4.0)).powf(inv)
        }
    };
    let sp = s_prime;
    let s = move |x: f64| {
        if x == 0.5 {
            0.0
        } else if x > 0.5 {
            integrate(|t| sp(t), 0.5, x, 1e-11).expect("optimal-rule integrand is integrable")
        } else {
            -integrate(|t| sp(t), x, 0.5, 1e-11).expect("optimal-rule integrand is integrable")
        }
    };
    BinaryRule::new(&format!("opt({ell})"), s, s_prime)
}

/// The index-optimal normalized rule `s_{ell,Opt}`.
pub fn optimal_rule(ell: f64) -> Result<NormalizedRule> {
    if !(ell >= 1.0) {
        return Err(Error::Argument(format!("ell must be >= 1, got {ell}")));
    }
    Ok(NormalizedRule { rule: optimal_binary_rule(ell), scale: 1.0, shift: 0.0 })
}

// ---------------------------------------------------------------------------
// The incentivization index
// ---------------------------------------------------------------------------

/// `Ind(s) = int_0^1 (x(1-x)/G''(x))^(ell/4) dx` by adaptive open-endpoint
/// quadrature.
pub fn incentivization_index(rule: &NormalizedRule, ell: f64) -> Result<f64> {
    if !(ell >= 1.0) || ell.is_infinite() {
        return Err(Error::Argument(format!("ell must be finite and >= 1, got {ell}")));
    }
    let e = ell / 4.0;
    integrate(
        |x| {
            let gpp = rule.g_second(x);
            (x * (1.0 - x) / gpp).max(0.0).powf(e)
        },
        0.0,
        1.0,
        1e-8,
    )
}

/// `mu_ell = 2^(ell/2) Gamma((ell+1)/2) / sqrt(pi)`, the `ell`-th absolute
/// moment of the standard normal; computed through log-Gamma to avoid
/// overflow at large `ell`.
pub fn normal_abs_moment(ell: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    (0.5 * ell * std::f64::consts::LN_2 + ln_gamma((ell + 1.0) / 2.0)
        - 0.5 * std::f64::consts::PI.ln())
    .exp()
}

/// `(Ind(s_opt)/Ind(s))^(1/ell)`, in (0, 1].
pub fn relative_index(rule: &NormalizedRule, ell: f64) -> Result<f64> {
    let opt = optimal_rule(ell)?;
    let ind_opt = incentivization_index(&opt, ell)?;
    let ind = incentivization_index(rule, ell)?;
    if !(ind > 0.0 && ind_opt > 0.0) {
        return Err(Error::Numeric("index must be positive".into()));
    }
    Ok((ind_opt / ind).powf(1.0 / ell))
}

/// Limit prediction of the expert's expected `ell`-th power error at cost `c`:
/// `mu_ell * 2^(ell/4) * Ind(s) * c^(ell/4)`.
pub fn predicted_error(rule: &NormalizedRule, ell: f64, cost: f64) -> Result<f64> {
    if !(cost > 0.0) {
        return Err(Error::Argument("cost must be positive".into()));
    }
    let ind = incentivization_index(rule, ell)?;
    Ok(normal_abs_moment(ell) * 2f64.powf(ell / 4.0) * ind * cost.powf(ell / 4.0))
}

/// Index, moment, and the coefficient `mu_ell * 2^(ell/4) * Ind(s)` of
/// `c^(ell/4)` in the error prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexReport {
    pub index: f64,
    pub mu_ell: f64,
    pub predicted_error_coeff: f64,
}

pub fn index_report(rule: &NormalizedRule, ell: f64) -> Result<IndexReport> {
    let index = incentivization_index(rule, ell)?;
    let mu_ell = normal_abs_moment(ell);
    Ok(IndexReport { index, mu_ell, predicted_error_coeff: mu_ell * 2f64.powf(ell / 4.0) * index })
}

// ---------------------------------------------------------------------------
// Expert simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertMode {
    LocallyAdaptive,
    GloballyAdaptive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertSimConfig {
    /// Cost per coin flip, in score units.
    pub cost: f64,
    pub mode: ExpertMode,
    pub trials: u64,
    pub seed: u64,
    /// Error exponent for the reported statistics.
    pub ell: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertSimReport {
    /// Mean of `|p - q|^ell` over trials.
    pub avg_error: f64,
    pub avg_flips: f64,
    pub max_flips: u64,
    /// `avg_error` divided by the index-based prediction.
    pub ratio_to_predicted: f64,
    pub predicted: f64,
    pub flip_cap: u64,
    /// Set when some trial was truncated at the flip cap.
    pub cap_exceeded: bool,
}

/// Expected score increase from one more flip after `n` flips with belief
/// from `h` heads: the three-term expression in terms of `G`.
pub fn one_flip_gain(rule: &NormalizedRule, n: u64, h: u64) -> f64 {
    let q = (h as f64 + 1.0) / (n as f64 + 2.0);
    let up = (h as f64 + 2.0) / (n as f64 + 3.0);
    let down = (h as f64 + 1.0) / (n as f64 + 3.0);
    q * rule.g(up) + (1.0 - q) * rule.g(down) - rule.g(q)
}

/// Backward-induction policy for the globally-adaptive expert on the
/// (flips, heads) lattice truncated at `cap`.
struct GlobalPolicy {
    cap: usize,
    // continue_flipping[n*(n+1)/2 + h] for 0 <= h <= n < cap
    continue_flipping: Vec<bool>,
}

impl GlobalPolicy {
    fn build(rule: &NormalizedRule, cost: f64, cap: usize) -> Self {
        let idx = |n: usize, h: usize| n * (n + 1) / 2 + h;
        let mut value = vec![0.0f64; (cap + 1) * (cap + 2) / 2];
        let mut cont = vec![false; cap * (cap + 1) / 2];
        for h in 0..=cap {
            let q = (h as f64 + 1.0) / (cap as f64 + 2.0);
            value[idx(cap, h)] = rule.g(q);
        }
        for n in (0..cap).rev() {
            for h in 0..=n {
                let q = (h as f64 + 1.0) / (n as f64 + 2.0);
                let stop = rule.g(q);
                let go = -cost + q * value[idx(n + 1, h + 1)] + (1.0 - q) * value[idx(n + 1, h)];
                if go > stop {
                    value[idx(n, h)] = go;
                    cont[idx(n, h)] = true;
                } else {
                    value[idx(n, h)] = stop;
                }
            }
        }
        GlobalPolicy { cap, continue_flipping: cont }
    }

    fn wants_flip(&self, n: u64, h: u64) -> bool {
        let n = n as usize;
        if n >= self.cap {
            return false;
        }
        self.continue_flipping[n * (n + 1) / 2 + h as usize]
    }
}

/// Simulate a rational expert who refines a uniform-prior coin-bias belief
/// by costly flips and reports the posterior mean.
pub fn simulate_expert(rule: &NormalizedRule, cfg: &ExpertSimConfig) -> Result<ExpertSimReport> {
    if cfg.trials < 1 {
        return Err(Error::Argument("trials must be >= 1".into()));
    }
    if !(cfg.cost > 0.0) {
        return Err(Error::Argument("cost must be positive".into()));
    }
    if !(cfg.ell >= 1.0) || !cfg.ell.is_finite() {
        return Err(Error::Argument("ell must be finite and >= 1".into()));
    }
    let cap = (8.0 / cfg.cost.sqrt()).ceil() as u64;
    if matches!(cfg.mode, ExpertMode::GloballyAdaptive) && cap > 20_000 {
        return Err(Error::Argument(format!(
            "backward induction needs a (cap+1)^2/2 table; cap {cap} is too large at this cost"
        )));
    }
    let policy = match cfg.mode {
        ExpertMode::GloballyAdaptive => Some(GlobalPolicy::build(rule, cfg.cost, cap as usize)),
        ExpertMode::LocallyAdaptive => None,
    };

    let per_trial: Vec<(f64, u64, bool)> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(cfg.seed, i);
            let p: f64 = rng.random();
            let mut n: u64 = 0;
            let mut h: u64 = 0;
            let mut truncated = false;
            loop {
                let wants = match &policy {
                    Some(pol) => pol.wants_flip(n, h),
                    None => one_flip_gain(rule, n, h) > cfg.cost,
                };
                if !wants {
                    break;
                }
                if n >= cap {
                    // never truncate silently
                    truncated = true;
                    break;
                }
                if rng.random::<f64>() < p {
                    h += 1;
                }
                n += 1;
            }
            let belief = (h as f64 + 1.0) / (n as f64 + 2.0);
            ((p - belief).abs().powf(cfg.ell), n, truncated)
        })
        .collect();

    let mut err_sum = NeumaierSum::new();
    let mut flip_sum = NeumaierSum::new();
    let mut max_flips = 0u64;
    let mut cap_exceeded = false;
    for &(e, f, t) in &per_trial {
        err_sum.add(e);
        flip_sum.add(f as f64);
        max_flips = max_flips.max(f);
        cap_exceeded |= t;
    }
    let avg_error = err_sum.total() / cfg.trials as f64;
    let predicted = predicted_error(rule, cfg.ell, cfg.cost)?;
    Ok(ExpertSimReport {
        avg_error,
        avg_flips: flip_sum.total() / cfg.trials as f64,
        max_flips,
        ratio_to_predicted: avg_error / predicted,
        predicted,
        flip_cap: cap,
        cap_exceeded,
    })
}

// ---------------------------------------------------------------------------
// Polynomial near-optimal rules (Bernstein construction)
// ---------------------------------------------------------------------------

/// `G''` of the optimal rule for `ell` (analytic closed form).
pub fn optimal_g_second(ell: f64, x: f64) -> f64 {
    let k = kappa(ell);
    if ell.is_infinite() {
        return k * x * (1.0 - x);
    }
    let inv = 1.0 / (ell + 4.0);
    if x >= 0.5 {
        k * (x.powf(ell) * (1.0 - x).powf(ell - 8.0)).powf(inv)
    } else {
        k * (x.powf(ell - 8.0) * (1.0 - x).powf(ell)).powf(inv)
    }
}

/// Evaluate the degree-`n` Bernstein polynomial of `psi` at `x`, summing
/// only the terms where the binomial weight is non-negligible.
pub fn bernstein_eval(psi: &dyn Fn(f64) -> f64, n: usize, x: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    if x <= 0.0 {
        return psi(0.0);
    }
    if x >= 1.0 {
        return psi(1.0);
    }
    let nf = n as f64;
    let mean = nf * x;
    let sd = (nf * x * (1.0 - x)).sqrt().max(1.0);
    let lo = ((mean - 14.0 * sd).floor().max(0.0)) as usize;
    let hi = ((mean + 14.0 * sd).ceil().min(nf)) as usize;
    let ln_choose = |i: usize| {
        ln_gamma(nf + 1.0) - ln_gamma(i as f64 + 1.0) - ln_gamma(nf - i as f64 + 1.0)
    };
    let lx = x.ln();
    let l1x = (1.0 - x).ln();
    // normalized recurrence from the central term
    let i0 = (mean.round() as usize).clamp(lo, hi);
    let ln_t0 = ln_choose(i0) + i0 as f64 * lx + (nf - i0 as f64) * l1x;
    let ratio_up = |i: usize| (nf - i as f64) / (i as f64 + 1.0) * x / (1.0 - x);
    let mut sum = NeumaierSum::new();
    let t0 = ln_t0.exp();
    sum.add(t0 * psi(i0 as f64 / nf));
    let mut t = t0;
    let mut i = i0;
    while i < hi {
        t *= ratio_up(i);
        i += 1;
        sum.add(t * psi(i as f64 / nf));
        if t < 1e-18 * t0 {
            break;
        }
    }
    t = t0;
    i = i0;
    while i > lo {
        t /= ratio_up(i - 1);
        i -= 1;
        sum.add(t * psi(i as f64 / nf));
        if t < 1e-18 * t0 {
            break;
        }
    }
    sum.total()
}

/// Build a polynomial proper rule whose index is within `eps` of the optimum
/// for `ell`: clamp the optimal rule's `G''` away from the endpoints, take a
/// symmetric Bernstein approximation, renormalize, and double the degree
/// until the index gap closes.
pub fn approx_poly_rule(ell: f64, eps: f64) -> Result<NormalizedRule> {
    if !(ell >= 1.0) || ell.is_infinite() {
        return Err(Error::Argument("ell must be finite and >= 1".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Argument("eps must be positive".into()));
    }
    const DEGREE_CAP: usize = 1 << 14;
    let ind_opt = incentivization_index(&optimal_rule(ell)?, ell)?;
    for clamp_pow in 2..=7 {
        let c = 0.5f64.powi(clamp_pow);
        let phi = move |x: f64| optimal_g_second(ell, x.clamp(c, 1.0 - c));
        let mut degree = 8usize;
        while degree <= DEGREE_CAP {
            let p = move |x: f64| bernstein_eval(&phi, degree, x);
            // positivity: Bernstein of a positive function is positive, but
            // double-check on a grid since properness depends on it
            let mut positive = true;
            for i in 0..=200 {
                if p(i as f64 / 200.0) <= 0.0 {
                    positive = false;
                    break;
                }
            }
            if positive {
                let z = integrate(|x| (1.0 - x) * (1.0 - x) * p(x), 0.5, 1.0, 1e-10)?;
                let e = ell / 4.0;
                let half_ind =
                    integrate(|x| (x * (1.0 - x) / p(x)).powf(e), 0.5, 1.0, 1e-9)?;
                let ind = 2.0 * z.powf(e) * half_ind;
                if ind <= ind_opt + eps {
                    let pp = p;
                    let s_prime = move |x: f64| (1.0 - x) * pp(x) / z;
                    let sp = s_prime;
                    let s = move |x: f64| {
                        if x == 0.5 {
                            0.0
                        } else if x > 0.5 {
                            integrate(|t| sp(t), 0.5, x, 1e-11).unwrap_or(f64::NAN)
                        } else {
                            -integrate(|t| sp(t), x, 0.5, 1e-11).unwrap_or(f64::NAN)
                        }
                    };
                    let rule = BinaryRule::new(
                        &format!("poly({ell},deg={degree})"),
                        s,
                        s_prime,
                    );
                    return Ok(NormalizedRule { rule, scale: 1.0, shift: 0.0 });
                }
            }
            degree *= 2;
        }
    }
    Err(Error::ApproximationFailure(format!(
        "no polynomial rule within {eps} of the optimal index at degree <= {DEGREE_CAP}"
    )))
}
