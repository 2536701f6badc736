//! Online learning of expert weights.
//!
//! Two learners are implemented:
//!
//! - Online gradient descent for bounded, convex-exposure rules: play the
//!   QA pool at the current weights, take the loss `-s(pool; j)`, and step
//!   `w <- proj(w - eta_t grad)` with `eta_t = 1/(M sqrt(m t))`. The regret
//!   against the best fixed weight vector is at most `3 sqrt(m) M sqrt(T)`.
//! - Online mirror descent with the Tsallis regularizer
//!   `R(w) = -(1/alpha) sum w_i^alpha` for logarithmic pooling under log
//!   loss, with the step-size reduction branch for the rare event that some
//!   weight drops below `eta^(1/alpha)`. The mirror update solves
//!   `sum_i (v_i + c)^(1/(alpha-1)) = 1` for the normalizing constant `c`
//!   by safeguarded Newton.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infostruct::{conditional_expectation, InformationStructure, YKind};
use crate::numeric::{csum, project_to_simplex, NeumaierSum};
use crate::pooling::{log_pool, qa_pool, WeightedForecastSet};
use crate::rng::Rng;
use crate::scoring::{Forecast, ScoringRule};

/// One observed round: reports first, then the realized outcome.
pub type Round = (Vec<Forecast>, usize);

/// A source of rounds that may adapt to the published weights.
pub trait RoundSource {
    fn next_round(&mut self, weights: &[f64]) -> Option<Round>;
}

/// A fixed, pre-drawn stream.
pub struct FixedStream {
    rounds: std::vec::IntoIter<Round>,
}

impl FixedStream {
    pub fn new(rounds: Vec<Round>) -> Self {
        FixedStream { rounds: rounds.into_iter() }
    }
}

impl RoundSource for FixedStream {
    fn next_round(&mut self, _weights: &[f64]) -> Option<Round> {
        self.rounds.next()
    }
}

impl<F: FnMut(&[f64]) -> Option<Round>> RoundSource for F {
    fn next_round(&mut self, weights: &[f64]) -> Option<Round> {
        self(weights)
    }
}

/// Gradient of the log loss of the logarithmic pool with respect to the
/// weights: `dL/dw_i = sum_l p*_l(w) ln p^i_l - ln p^i_j`.
pub fn loss_gradient_logpool(
    reports: &[Forecast],
    weights: &[f64],
    outcome: usize,
) -> Result<Vec<f64>> {
    if reports.iter().any(|r| !r.is_interior()) {
        return Err(Error::Domain("log-pool gradient needs strictly positive reports".into()));
    }
    let set = WeightedForecastSet::new(reports.to_vec(), weights.to_vec())?;
    let pooled = log_pool(&set)?;
    let n = pooled.len();
    let mut grad = vec![0.0; reports.len()];
    for (i, r) in reports.iter().enumerate() {
        let mut acc = 0.0;
        for l in 0..n {
            acc += pooled[l] * r[l].ln();
        }
        grad[i] = acc - r[outcome].ln();
    }
    Ok(grad)
}

/// Log loss of the pooled forecast at the realized outcome.
pub fn log_pool_loss(reports: &[Forecast], weights: &[f64], outcome: usize) -> Result<f64> {
    let set = WeightedForecastSet::new(reports.to_vec(), weights.to_vec())?;
    let pooled = log_pool(&set)?;
    Ok(-pooled[outcome].ln())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub weights_used: Vec<f64>,
    pub outcome: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerRun {
    pub weights_trajectory: Vec<Vec<f64>>,
    pub rounds: Vec<RoundRecord>,
    pub total_loss: f64,
    pub best_fixed_weights: Vec<f64>,
    pub best_fixed_loss: f64,
    pub regret_vs_best_fixed: f64,
    /// Rounds where the small-gradient bounds were violated (OMD only).
    pub small_gradient_violations: usize,
}

/// Configuration for online gradient descent over expert weights.
#[derive(Debug, Clone)]
pub struct OgdConfig {
    pub rule: ScoringRule,
    /// Upper bound on the exposure norm; the step is `1/(M sqrt(m t))`.
    pub exposure_bound: f64,
    pub horizon: usize,
}

/// Run online gradient descent; the loss at each round is minus the score
/// of the QA pool.
pub fn ogd_run(cfg: &OgdConfig, stream: &mut dyn RoundSource, m: usize) -> Result<LearnerRun> {
    if !cfg.rule.is_bounded() {
        return Err(Error::Argument("OGD requires a bounded scoring rule".into()));
    }
    if !(cfg.exposure_bound > 0.0) {
        return Err(Error::Argument("exposure bound must be positive".into()));
    }
    let mut w = vec![1.0 / m as f64; m];
    let mut trajectory = vec![w.clone()];
    let mut rounds = Vec::new();
    let mut history: Vec<Round> = Vec::new();
    let mut total = NeumaierSum::new();
    for t in 1..=cfg.horizon {
        let Some((reports, outcome)) = stream.next_round(&w) else {
            break;
        };
        if reports.len() != m {
            return Err(Error::Dimension("round has wrong number of reports".into()));
        }
        let set = WeightedForecastSet::new(reports.clone(), w.clone())?;
        let pool = qa_pool(&cfg.rule, &set)?;
        let loss = -cfg.rule.score(&pool.pooled, outcome)?;
        total.add(loss);
        rounds.push(RoundRecord { weights_used: w.clone(), outcome, loss });

        // grad_i = <g(p_i), p*(w) - e_j>
        let mut grad = vec![0.0; m];
        for (i, r) in reports.iter().enumerate() {
            let e = cfg.rule.exposure(r)?;
            let mut acc = 0.0;
            for l in 0..e.len() {
                let delta = if l == outcome { 1.0 } else { 0.0 };
                acc += e[l] * (pool.pooled[l] - delta);
            }
            grad[i] = acc;
        }
        let eta = 1.0 / (cfg.exposure_bound * ((m * t) as f64).sqrt());
        let stepped: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - eta * gi).collect();
        w = project_to_simplex(&stepped);
        trajectory.push(w.clone());
        history.push((reports, outcome));
    }
    let (best_w, best_loss) = best_fixed_weights(&history, &LossKind::Rule(cfg.rule.clone()))?;
    let total_loss = total.total();
    Ok(LearnerRun {
        weights_trajectory: trajectory,
        rounds,
        total_loss,
        best_fixed_weights: best_w,
        best_fixed_loss: best_loss,
        regret_vs_best_fixed: total_loss - best_loss,
        small_gradient_violations: 0,
    })
}

/// Configuration for online mirror descent with the Tsallis regularizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OmdConfig {
    pub alpha: f64,
    pub horizon: usize,
    pub m: usize,
    pub n: usize,
    /// Step size; `None` uses `1/(sqrt(T) ln T) * 1/(12 m^((1+alpha)/2) n)`.
    pub eta: Option<f64>,
    /// Small-gradient threshold; `None` uses `12 n ln T`.
    pub gamma: Option<f64>,
}

impl OmdConfig {
    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or_else(|| {
            let t = self.horizon as f64;
            1.0 / (t.sqrt() * t.ln())
                / (12.0 * (self.m as f64).powf((1.0 + self.alpha) / 2.0) * self.n as f64)
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(12.0 * self.n as f64 * (self.horizon as f64).ln())
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Argument("alpha must lie in (0, 1/2)".into()));
        }
        if !(self.eta() > 0.0) {
            return Err(Error::Argument("eta must be positive".into()));
        }
        Ok(())
    }
}

/// Solve `sum_i (v_i + c)^(1/(alpha-1)) = 1` for `c` by Newton iteration
/// bracketed inside `(-min_i v_i, inf)`, bisecting whenever a Newton step
/// leaves the bracket.
pub fn solve_mirror_normalizer(v: &[f64], alpha: f64) -> Result<f64> {
    let expo = 1.0 / (alpha - 1.0); // negative
    let min_v = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut lo = -min_v; // sum -> +inf as c -> lo+
    let mut hi = -min_v + 1.0;
    let f = |c: f64| -> f64 { v.iter().map(|&vi| (vi + c).powf(expo)).sum::<f64>() - 1.0 };
    while f(hi) > 0.0 {
        hi = lo + 2.0 * (hi - lo);
        if !hi.is_finite() {
            return Err(Error::Numeric("mirror normalizer bracket diverged".into()));
        }
    }
    let mut c = 0.5 * (lo + hi);
    if c <= lo {
        c = hi;
    }
    for _ in 0..200 {
        let fc = f(c);
        if fc.abs() < 1e-14 {
            return Ok(c);
        }
        if fc > 0.0 {
            lo = c;
        } else {
            hi = c;
        }
        let fprime: f64 =
            v.iter().map(|&vi| expo * (vi + c).powf(expo - 1.0)).sum::<f64>();
        let newton = c - fc / fprime;
        c = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    Err(Error::Numeric("mirror normalizer did not converge in 200 iterations".into()))
}

/// Run online mirror descent for logarithmic pooling under log loss.
pub fn omd_run(cfg: &OmdConfig, stream: &mut dyn RoundSource) -> Result<LearnerRun> {
    cfg.validate()?;
    let m = cfg.m;
    let alpha = cfg.alpha;
    let eta_base = cfg.eta();
    let gamma = cfg.gamma();
    let mut w = vec![1.0 / m as f64; m];
    let mut trajectory = vec![w.clone()];
    let mut rounds = Vec::new();
    let mut history: Vec<Round> = Vec::new();
    let mut total = NeumaierSum::new();
    let mut eta_prev = eta_base;
    let mut violations = 0usize;
    for _t in 1..=cfg.horizon {
        let Some((reports, outcome)) = stream.next_round(&w) else {
            break;
        };
        if reports.len() != m {
            return Err(Error::Dimension("round has wrong number of reports".into()));
        }
        // step-size reduction branch: fires only when some weight is tiny
        let min_pow = w.iter().map(|wi| wi.powf(alpha)).fold(f64::INFINITY, f64::min);
        let eta_t = if eta_base <= min_pow {
            eta_prev.min(eta_base)
        } else {
            eta_prev.min(w.iter().cloned().fold(f64::INFINITY, f64::min))
        };
        eta_prev = eta_t;

        let loss = log_pool_loss(&reports, &w, outcome)?;
        total.add(loss);
        rounds.push(RoundRecord { weights_used: w.clone(), outcome, loss });

        let grad = loss_gradient_logpool(&reports, &w, outcome)?;
        for (i, &g) in grad.iter().enumerate() {
            if g > gamma || g < -gamma / w[i] {
                violations += 1;
                break;
            }
        }

        // mirror update: (w')^(alpha-1) = w^(alpha-1) + eta grad + c
        let v: Vec<f64> =
            w.iter().zip(&grad).map(|(wi, gi)| wi.powf(alpha - 1.0) + eta_t * gi).collect();
        let c = solve_mirror_normalizer(&v, alpha)?;
        w = v.iter().map(|vi| (vi + c).powf(1.0 / (alpha - 1.0))).collect();
        trajectory.push(w.clone());
        history.push((reports, outcome));
    }
    let (best_w, best_loss) = best_fixed_weights(&history, &LossKind::LogPool)?;
    let total_loss = total.total();
    Ok(LearnerRun {
        weights_trajectory: trajectory,
        rounds,
        total_loss,
        best_fixed_weights: best_w,
        best_fixed_loss: best_loss,
        regret_vs_best_fixed: total_loss - best_loss,
        small_gradient_violations: violations,
    })
}

/// Which loss the hindsight benchmark minimizes.
pub enum LossKind {
    /// `-ln` of the log pool's probability of the outcome.
    LogPool,
    /// Minus the score of the QA pool under the rule.
    Rule(ScoringRule),
}

/// Best fixed weight vector in hindsight: minimize the total loss over the
/// simplex (the total is convex in the weights) by projected gradient with
/// backtracking. Per-round sufficient statistics are precomputed so each
/// evaluation is cheap even for long streams.
pub fn best_fixed_weights(stream: &[Round], kind: &LossKind) -> Result<(Vec<f64>, f64)> {
    if stream.is_empty() {
        return Err(Error::Argument("empty stream".into()));
    }
    let m = stream[0].0.len();
    let eval: Box<dyn Fn(&[f64]) -> (f64, Vec<f64>)> = match kind {
        LossKind::LogPool => {
            // L(w) = logsumexp_l(sum_k w_k ln p^k_l) - sum_k w_k ln p^k_j
            let n = stream[0].0[0].len();
            let mut lp = Vec::with_capacity(stream.len());
            let mut outs = Vec::with_capacity(stream.len());
            for (reports, outcome) in stream {
                if reports.iter().any(|r| !r.is_interior()) {
                    return Err(Error::Domain(
                        "log-pool benchmark needs strictly positive reports".into(),
                    ));
                }
                let mut mat = vec![0.0f64; m * n];
                for (k, r) in reports.iter().enumerate() {
                    for l in 0..n {
                        mat[k * n + l] = r[l].ln();
                    }
                }
                lp.push(mat);
                outs.push(*outcome);
            }
            Box::new(move |w: &[f64]| {
                let mut loss = NeumaierSum::new();
                let mut grad = vec![0.0; m];
                let mut z = vec![0.0f64; n];
                for (mat, &j) in lp.iter().zip(&outs) {
                    for (l, zl) in z.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for k in 0..m {
                            acc += w[k] * mat[k * n + l];
                        }
                        *zl = acc;
                    }
                    let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut denom = 0.0;
                    for zl in &z {
                        denom += (zl - zmax).exp();
                    }
                    loss.add(zmax + denom.ln() - z[j]);
                    for k in 0..m {
                        let mut star = 0.0;
                        for l in 0..n {
                            star += (z[l] - zmax).exp() / denom * mat[k * n + l];
                        }
                        grad[k] += star - mat[k * n + j];
                    }
                }
                (loss.total(), grad)
            })
        }
        LossKind::Rule(rule) if matches!(rule.kind(), crate::scoring::RuleKind::Quadratic) => {
            // the QA pool is the linear pool, so the total loss is the
            // explicit quadratic form w'Aw - 2 b'w + T
            let n = stream[0].0[0].len();
            let mut a = vec![0.0f64; m * m];
            let mut b = vec![0.0f64; m];
            for (reports, outcome) in stream {
                for i in 0..m {
                    for k in 0..m {
                        let mut dot = 0.0;
                        for l in 0..n {
                            dot += reports[i][l] * reports[k][l];
                        }
                        a[i * m + k] += dot;
                    }
                    b[i] += reports[i][*outcome];
                }
            }
            let t = stream.len() as f64;
            Box::new(move |w: &[f64]| {
                let mut loss = t;
                let mut grad = vec![0.0; m];
                for i in 0..m {
                    let mut aw = 0.0;
                    for k in 0..m {
                        aw += a[i * m + k] * w[k];
                    }
                    loss += w[i] * aw - 2.0 * b[i] * w[i];
                    grad[i] = 2.0 * aw - 2.0 * b[i];
                }
                (loss, grad)
            })
        }
        LossKind::Rule(rule) => {
            // generic rules go through the QA-pool solver per round
            let rule = rule.clone();
            let stream = stream.to_vec();
            Box::new(move |w: &[f64]| {
                let mut loss = NeumaierSum::new();
                let mut grad = vec![0.0; m];
                for (reports, outcome) in &stream {
                    let set =
                        WeightedForecastSet::new(reports.clone(), w.to_vec()).expect("validated");
                    let pool = qa_pool(&rule, &set).expect("solver");
                    loss.add(-rule.score(&pool.pooled, *outcome).expect("score"));
                    for (i, r) in reports.iter().enumerate() {
                        let e = rule.exposure(r).expect("exposure");
                        let mut acc = 0.0;
                        for l in 0..e.len() {
                            let delta = if l == *outcome { 1.0 } else { 0.0 };
                            acc += e[l] * (pool.pooled[l] - delta);
                        }
                        grad[i] += acc;
                    }
                }
                (loss.total(), grad)
            })
        }
    };

    // weights on the boundary make the log-pool loss undefined, so keep
    // iterates epsilon-inside the simplex
    let floor = 1e-12;
    let clamp = |w: &mut Vec<f64>| {
        let mut dirty = false;
        for v in w.iter_mut() {
            if *v < floor {
                *v = floor;
                dirty = true;
            }
        }
        if dirty {
            let s = csum(w);
            for v in w.iter_mut() {
                *v /= s;
            }
        }
    };
    let mut w = vec![1.0 / m as f64; m];
    let (mut fw, mut grad) = eval(&w);
    let mut step = 1.0 / stream.len() as f64;
    for _ in 0..2000 {
        let support: Vec<usize> = (0..m).filter(|&i| w[i] > 10.0 * floor).collect();
        let mean: f64 = support.iter().map(|&i| grad[i]).sum::<f64>() / support.len() as f64;
        let tangent = support.iter().map(|&i| (grad[i] - mean).abs()).fold(0.0f64, f64::max);
        let off_ok =
            (0..m).filter(|&i| w[i] <= 10.0 * floor).all(|i| grad[i] - mean > -1e-7);
        if tangent < 1e-10 && off_ok {
            break;
        }
        let mut t = step;
        let mut moved = false;
        for _ in 0..60 {
            let mut cand: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - t * gi).collect();
            cand = project_to_simplex(&cand);
            clamp(&mut cand);
            let (f_new, g_new) = eval(&cand);
            let decrease: f64 =
                cand.iter().zip(&w).zip(&grad).map(|((c, wi), gi)| (c - wi) * gi).sum();
            if f_new <= fw + 0.25 * decrease {
                w = cand;
                fw = f_new;
                grad = g_new;
                step = t * 2.0;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok((w, fw))
}

/// Calibrated round sampler over a categorical structure, with the
/// per-signal conditional outcome distributions precomputed.
pub struct CalibratedSampler {
    /// `reports[i][sig]`: expert `i`'s report when their signal index is `sig`.
    reports: Vec<Vec<Forecast>>,
    /// `(cumulative probability, signal indices, outcome)` per state.
    states: Vec<(f64, Vec<usize>, usize)>,
}

impl CalibratedSampler {
    pub fn new(structure: &InformationStructure) -> Result<Self> {
        match structure.y_kind() {
            YKind::Categorical(_) => {}
            YKind::Real => {
                return Err(Error::Argument(
                    "calibrated rounds need a categorical-Y structure".into(),
                ))
            }
        }
        let m = structure.n_experts();
        let mut reports = Vec::with_capacity(m);
        for i in 0..m {
            let table = conditional_expectation(structure, &[i])?;
            let mut by_sig = Vec::with_capacity(structure.alphabets()[i].len());
            for lbl in &structure.alphabets()[i] {
                let entry = table.lookup(&[lbl.as_str()]).ok_or_else(|| {
                    Error::Numeric("signal missing from conditional table".into())
                })?;
                let mut probs = entry.value.clone();
                // renormalize away accumulated rounding
                let s = csum(&probs);
                for p in &mut probs {
                    *p /= s;
                }
                by_sig.push(Forecast::new(probs)?);
            }
            reports.push(by_sig);
        }
        let mut acc = 0.0;
        let states = structure
            .states()
            .iter()
            .map(|st| {
                acc += st.prob;
                let outcome = match st.y {
                    crate::infostruct::Yval::Outcome(o) => o,
                    _ => unreachable!("checked categorical"),
                };
                (acc, st.signals.clone(), outcome)
            })
            .collect();
        Ok(CalibratedSampler { reports, states })
    }

    pub fn sample(&self, rng: &mut Rng) -> Round {
        use rand::Rng as _;
        let u: f64 = rng.random();
        let idx = match self
            .states
            .binary_search_by(|(c, _, _)| c.partial_cmp(&u).unwrap())
        {
            Ok(i) => (i + 1).min(self.states.len() - 1),
            Err(i) => i.min(self.states.len() - 1),
        };
        let (_, signals, outcome) = &self.states[idx];
        let reports =
            signals.iter().enumerate().map(|(i, &sig)| self.reports[i][sig].clone()).collect();
        (reports, *outcome)
    }
}

/// Draw one calibrated round from a categorical information structure:
/// sample a state, emit each expert's true conditional outcome distribution
/// given their signal, and the realized outcome. For repeated sampling,
/// build a [`CalibratedSampler`] once instead.
pub fn sample_calibrated_round(structure: &InformationStructure, rng: &mut Rng) -> Result<Round> {
    Ok(CalibratedSampler::new(structure)?.sample(rng))
}

/// The uncalibrated adversarial stream: an extreme first-round report
/// against the realized outcome, then a near-perfect second expert. Any
/// learner that starts from constant weights incurs regret growing linearly
/// in the horizon.
pub fn example61_adversary(horizon: usize) -> Result<Vec<Round>> {
    if horizon < 1 {
        return Err(Error::Argument("horizon must be >= 1".into()));
    }
    let t = horizon as f64;
    // reports must stay strictly positive for log pooling; the adversary's
    // "probability 1" expert is softened by 1e-12
    let tiny = 1e-12;
    let mut rounds = Vec::with_capacity(horizon);
    let extreme = (-t).exp().max(1e-300);
    rounds.push((
        vec![Forecast::new(vec![extreme, 1.0 - extreme])?, Forecast::binary(0.5)?],
        0,
    ));
    for _ in 1..horizon {
        rounds.push((
            vec![Forecast::binary(0.5)?, Forecast::new(vec![1.0 - tiny, tiny])?],
            0,
        ));
    }
    Ok(rounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infostruct::{xor_structure, InformationStructure, State, YKind, Yval};
    use crate::rng::{root_rng, trial_rng};
    use rand::Rng as _;

    fn fc(v: &[f64]) -> Forecast {
        Forecast::new(v.to_vec()).unwrap()
    }

    #[test]
    fn log_pool_gradient_worked_example() {
        let reports = vec![fc(&[0.9, 0.1]), fc(&[0.5, 0.5])];
        let g = loss_gradient_logpool(&reports, &[0.5, 0.5], 0).unwrap();
        // pooled is (0.75, 0.25)
        let want = 0.75 * 0.9f64.ln() + 0.25 * 0.1f64.ln() - 0.9f64.ln();
        assert!((g[0] - want).abs() < 1e-12);
        assert!((g[0] + 0.5493).abs() < 1e-4, "{}", g[0]);
        assert!(g[1].abs() < 1e-12);
    }

    #[test]
    fn log_pool_gradient_matches_finite_differences() {
        // central differences tangent to the simplex
        let mut rng = root_rng(61);
        for _ in 0..100 {
            let m = rng.random_range(2..=4usize);
            let n = rng.random_range(2..=4usize);
            let reports: Vec<Forecast> = (0..m)
                .map(|_| fc(&crate::scoring::random_interior(&mut rng, n)))
                .collect();
            let mut w = crate::scoring::random_interior(&mut rng, m);
            // keep clear of the boundary for the stencil
            for v in &mut w {
                *v = 0.8 * *v + 0.2 / m as f64;
            }
            let outcome = rng.random_range(0..n);
            let g = loss_gradient_logpool(&reports, &w, outcome).unwrap();
            let h = 1e-6;
            for i in 1..m {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[i] += h;
                wp[0] -= h;
                wm[i] -= h;
                wm[0] += h;
                let fd = (log_pool_loss(&reports, &wp, outcome).unwrap()
                    - log_pool_loss(&reports, &wm, outcome).unwrap())
                    / (2.0 * h);
                let an = g[i] - g[0];
                let scale = an.abs().max(1.0);
                assert!((fd - an).abs() < 1e-5 * scale, "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn identical_reports_have_constant_gradient() {
        let reports = vec![fc(&[0.7, 0.3]), fc(&[0.7, 0.3]), fc(&[0.7, 0.3])];
        let g = loss_gradient_logpool(&reports, &[0.2, 0.3, 0.5], 1).unwrap();
        assert!((g[0] - g[1]).abs() < 1e-14 && (g[1] - g[2]).abs() < 1e-14);
    }

    #[test]
    fn wrong_report_gradient_grows_unboundedly() {
        // as expert 1's probability of the realized outcome shrinks, the
        // gradient component grows monotonically
        let mut prev = f64::NEG_INFINITY;
        for k in 2..=8 {
            let eps = 10f64.powi(-k);
            let reports = vec![fc(&[eps, 1.0 - eps]), fc(&[0.5, 0.5])];
            let g = loss_gradient_logpool(&reports, &[0.5, 0.5], 0).unwrap();
            assert!(g[0] > prev);
            prev = g[0];
        }
        assert!(prev > 5.0);
    }

    #[test]
    fn zero_report_entry_is_domain_error() {
        let reports = vec![fc(&[1.0, 0.0]), fc(&[0.5, 0.5])];
        assert!(loss_gradient_logpool(&reports, &[0.5, 0.5], 0).is_err());
    }

    #[test]
    fn ogd_learns_the_right_expert() {
        // expert 0 always right, expert 1 always wrong-ish
        let t = 10_000;
        let rounds: Vec<Round> = (0..t)
            .map(|_| (vec![fc(&[0.95, 0.05]), fc(&[0.3, 0.7])], 0))
            .collect();
        let cfg = OgdConfig {
            rule: ScoringRule::quadratic(2),
            exposure_bound: 2.0 * 2f64.sqrt(),
            horizon: t,
        };
        let run = ogd_run(&cfg, &mut FixedStream::new(rounds), 2).unwrap();
        let w_final = run.weights_trajectory.last().unwrap();
        assert!(w_final[0] > 0.95, "{w_final:?}");
        // hindsight optimum is the right expert's corner
        assert!(run.best_fixed_weights[0] > 0.99);
        // regret respects the theorem bound
        let bound = 3.0 * (2f64).sqrt() * cfg.exposure_bound * (t as f64).sqrt();
        assert!(run.regret_vs_best_fixed <= bound);
    }

    #[test]
    fn ogd_regret_bound_on_adversarial_streams() {
        // alternating winners; the bound must hold at every horizon
        for &t in &[100usize, 1000] {
            let rounds: Vec<Round> = (0..t)
                .map(|k| {
                    let winner = k % 2;
                    (vec![fc(&[0.9, 0.1]), fc(&[0.1, 0.9])], winner)
                })
                .collect();
            let cfg = OgdConfig {
                rule: ScoringRule::quadratic(2),
                exposure_bound: 2.0 * 2f64.sqrt(),
                horizon: t,
            };
            let run = ogd_run(&cfg, &mut FixedStream::new(rounds), 2).unwrap();
            let bound = 3.0 * (2f64).sqrt() * cfg.exposure_bound * (t as f64).sqrt();
            assert!(run.regret_vs_best_fixed <= bound, "T={t}");
        }
    }

    #[test]
    fn ogd_rejects_unbounded_rules() {
        let cfg = OgdConfig {
            rule: ScoringRule::logarithmic(2),
            exposure_bound: 1.0,
            horizon: 1,
        };
        assert!(ogd_run(&cfg, &mut FixedStream::new(vec![]), 2).is_err());
    }

    #[test]
    fn omd_first_weights_are_uniform_and_updates_normalize() {
        // drive OMD over a known stream and verify the mirror identity:
        // (w')^(a-1) - w^(a-1) - eta dL is the same constant in every
        // coordinate, and weights renormalize exactly
        let mut rng = root_rng(3);
        let t = 300;
        let rounds: Vec<Round> = (0..t)
            .map(|_| {
                let p: f64 = rng.random_range(0.1..0.9);
                let q: f64 = rng.random_range(0.1..0.9);
                let outcome = usize::from(rng.random::<f64>() < 0.5);
                (vec![fc(&[p, 1.0 - p]), fc(&[q, 1.0 - q])], outcome)
            })
            .collect();
        let cfg = OmdConfig { alpha: 0.25, horizon: t, m: 2, n: 2, eta: None, gamma: None };
        let run = omd_run(&cfg, &mut FixedStream::new(rounds.clone())).unwrap();
        assert_eq!(run.weights_trajectory[0], vec![0.5, 0.5]);
        let alpha = 0.25;
        let eta = cfg.eta();
        for (k, (reports, outcome)) in rounds.iter().enumerate() {
            let w_t = &run.weights_trajectory[k];
            let w_next = &run.weights_trajectory[k + 1];
            assert!((csum(w_next) - 1.0).abs() < 1e-12);
            let grad = loss_gradient_logpool(reports, w_t, *outcome).unwrap();
            let shifts: Vec<f64> = (0..2)
                .map(|i| w_next[i].powf(alpha - 1.0) - w_t[i].powf(alpha - 1.0) - eta * grad[i])
                .collect();
            assert!((shifts[0] - shifts[1]).abs() < 1e-9, "round {k}: {shifts:?}");
        }
    }

    #[test]
    fn omd_uniform_reports_freeze_weights() {
        let t = 50;
        let rounds: Vec<Round> =
            (0..t).map(|_| (vec![fc(&[0.5, 0.5]), fc(&[0.5, 0.5])], 0)).collect();
        let cfg = OmdConfig { alpha: 0.25, horizon: t, m: 2, n: 2, eta: None, gamma: None };
        let run = omd_run(&cfg, &mut FixedStream::new(rounds)).unwrap();
        for w in &run.weights_trajectory {
            assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn mirror_normalizer_solves_exactly() {
        let mut rng = root_rng(9);
        for _ in 0..200 {
            let m = rng.random_range(2..=5usize);
            let alpha: f64 = rng.random_range(0.05..0.45);
            let v: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..8.0)).collect();
            let c = solve_mirror_normalizer(&v, alpha).unwrap();
            let total: f64 = v.iter().map(|&vi| (vi + c).powf(1.0 / (alpha - 1.0))).sum();
            assert!((total - 1.0).abs() < 1e-12, "{total}");
        }
    }

    #[test]
    fn best_fixed_weights_degenerate_cases() {
        // a perfectly right expert gets all the weight
        let rounds: Vec<Round> = (0..50)
            .map(|_| (vec![fc(&[1.0 - 1e-9, 1e-9]), fc(&[0.4, 0.6])], 0))
            .collect();
        let (w, loss) = best_fixed_weights(&rounds, &LossKind::LogPool).unwrap();
        assert!(w[0] > 0.999, "{w:?}");
        assert!(loss < 1e-6 * 50.0);
        // identical experts: any weights work, and the loss matches a single
        // expert's loss
        let rounds: Vec<Round> =
            (0..50).map(|_| (vec![fc(&[0.7, 0.3]), fc(&[0.7, 0.3])], 0)).collect();
        let (_, loss) = best_fixed_weights(&rounds, &LossKind::LogPool).unwrap();
        let single: f64 = -(0.7f64.ln()) * 50.0;
        assert!((loss - single).abs() < 1e-9);
    }

    #[test]
    fn best_fixed_weights_recovers_synthetic_optimum() {
        // two experts whose long-run log loss is minimized at w = (2/3, 1/3):
        // build rounds from the calibrated mixture of two conditionally
        // independent noisy signals, then verify against a dense grid search
        let mut rng = trial_rng(31, 0);
        let structure = noisy_two_rate_structure(0.2, 0.35);
        let cat = structure.to_categorical(2).unwrap();
        let rounds: Vec<Round> = (0..4000)
            .map(|_| sample_calibrated_round(&cat, &mut rng).unwrap())
            .collect();
        let (w, loss) = best_fixed_weights(&rounds, &LossKind::LogPool).unwrap();
        // oracle: dense grid over the 1-simplex
        let mut best_grid = f64::INFINITY;
        let mut best_w = 0.0;
        for k in 0..=2000 {
            let w0 = k as f64 / 2000.0;
            let w0 = w0.clamp(1e-9, 1.0 - 1e-9);
            let mut acc = 0.0;
            for (reports, outcome) in &rounds {
                acc += log_pool_loss(reports, &[w0, 1.0 - w0], *outcome).unwrap();
            }
            if acc < best_grid {
                best_grid = acc;
                best_w = w0;
            }
        }
        assert!(loss <= best_grid + 1e-9);
        assert!((w[0] - best_w).abs() < 1e-3, "{} vs {best_w}", w[0]);
    }

    #[test]
    fn calibrated_sampling_basic_cases() {
        let mut rng = root_rng(17);
        // XOR: both reports are always uniform; outcomes are uniform
        let xor = xor_structure().to_categorical(2).unwrap();
        let mut ones = 0;
        for _ in 0..2000 {
            let (reports, outcome) = sample_calibrated_round(&xor, &mut rng).unwrap();
            for r in &reports {
                assert!((r[0] - 0.5).abs() < 1e-12);
            }
            ones += outcome;
        }
        let frac = ones as f64 / 2000.0;
        assert!((frac - 0.5).abs() < 0.05);

        // a revealing signal produces basis-vector reports
        let alphabets = vec![vec!["a".into(), "b".into()], vec!["z".into()]];
        let states = vec![
            State { prob: 0.5, signals: vec![0, 0], y: Yval::Outcome(0) },
            State { prob: 0.5, signals: vec![1, 0], y: Yval::Outcome(1) },
        ];
        let s =
            InformationStructure::new(alphabets, states, YKind::Categorical(2)).unwrap();
        for _ in 0..50 {
            let (reports, outcome) = sample_calibrated_round(&s, &mut rng).unwrap();
            assert!((reports[0][outcome] - 1.0).abs() < 1e-12);
        }
        // real-Y structures are a type error
        assert!(sample_calibrated_round(&xor_structure(), &mut rng).is_err());
    }

    #[test]
    fn calibrated_sampling_empirical_frequencies() {
        // among rounds where expert 1 assigns ~0.3 to an outcome, that
        // outcome occurs about 30% of the time
        let mut rng = root_rng(23);
        let s3 = random_categorical_structure(&mut rng, 3);
        let mut rng2 = root_rng(29);
        let mut hit = 0usize;
        let mut tot = 0usize;
        for _ in 0..100_000 {
            let (reports, outcome) = sample_calibrated_round(&s3, &mut rng2).unwrap();
            for j in 0..3 {
                if (0.29..=0.31).contains(&reports[0][j]) {
                    tot += 1;
                    if outcome == j {
                        hit += 1;
                    }
                }
            }
        }
        if tot > 500 {
            let freq = hit as f64 / tot as f64;
            assert!((0.27..=0.33).contains(&freq), "{freq} over {tot}");
        }
    }

    #[test]
    fn adversary_stream_forces_linear_regret() {
        for &t in &[10usize, 100] {
            let rounds = example61_adversary(t).unwrap();
            let cfg =
                OmdConfig { alpha: 0.25, horizon: t, m: 2, n: 2, eta: None, gamma: None };
            let run = omd_run(&cfg, &mut FixedStream::new(rounds)).unwrap();
            // round-1 loss alone is about w1 * T >= T/2
            assert!(run.rounds[0].loss >= 0.4 * t as f64, "T={t}: {}", run.rounds[0].loss);
            if t == 100 {
                assert!(run.regret_vs_best_fixed >= 0.4 * t as f64);
            }
        }
        // the regret ratio across horizons shows the linear growth
        let r10 = {
            let rounds = example61_adversary(10).unwrap();
            let cfg =
                OmdConfig { alpha: 0.25, horizon: 10, m: 2, n: 2, eta: None, gamma: None };
            omd_run(&cfg, &mut FixedStream::new(rounds)).unwrap().regret_vs_best_fixed
        };
        let r100 = {
            let rounds = example61_adversary(100).unwrap();
            let cfg =
                OmdConfig { alpha: 0.25, horizon: 100, m: 2, n: 2, eta: None, gamma: None };
            omd_run(&cfg, &mut FixedStream::new(rounds)).unwrap().regret_vs_best_fixed
        };
        assert!(r100 / r10 >= 8.0, "{r100} / {r10}");
    }

    #[test]
    fn omd_regret_sublinear_on_calibrated_streams() {
        // regret stays bounded across horizons on exchangeable calibrated
        // structures
        let mut ratios = Vec::new();
        let mut sum_small = 0.0;
        let mut sum_big = 0.0;
        for seed in 0..10u64 {
            let mut rng = trial_rng(1000, seed);
            let flip = 0.15 + 0.3 * rng.random::<f64>();
            let structure = noisy_symmetric_structure(flip).to_categorical(2).unwrap();
            let run_at = |t: usize, stream_seed: u64| {
                let mut rng = trial_rng(stream_seed, seed);
                let cfg =
                    OmdConfig { alpha: 0.25, horizon: t, m: 2, n: 2, eta: None, gamma: None };
                let mut src = |_w: &[f64]| {
                    Some(sample_calibrated_round(&structure, &mut rng).unwrap())
                };
                omd_run(&cfg, &mut src).unwrap()
            };
            let small = run_at(1000, 77);
            let big = run_at(10_000, 78);
            sum_small += small.regret_vs_best_fixed;
            sum_big += big.regret_vs_best_fixed;
            ratios.push((small.regret_vs_best_fixed, big.regret_vs_best_fixed));
        }
        // ratio of mean regrets is well below the sqrt(10)*1.5 envelope
        let ratio = sum_big / sum_small.max(1e-9);
        assert!(ratio <= 10f64.sqrt() * 1.5, "ratio {ratio}");
    }

    // --- helpers ---

    /// Y uniform on {0,1}; both experts see independent flips of Y with the
    /// same flip probability, so the structure is exchangeable.
    pub(crate) fn noisy_symmetric_structure(flip: f64) -> InformationStructure {
        noisy_two_rate_structure(flip, flip)
    }

    pub(crate) fn noisy_two_rate_structure(f1: f64, f2: f64) -> InformationStructure {
        let alphabets = vec![vec!["0".into(), "1".into()], vec!["0".into(), "1".into()]];
        let mut states = Vec::new();
        for y in 0..2usize {
            for s1 in 0..2usize {
                for s2 in 0..2usize {
                    let p1 = if s1 == y { 1.0 - f1 } else { f1 };
                    let p2 = if s2 == y { 1.0 - f2 } else { f2 };
                    states.push(State {
                        prob: 0.5 * p1 * p2,
                        signals: vec![s1, s2],
                        y: Yval::Real(y as f64),
                    });
                }
            }
        }
        InformationStructure::new(alphabets, states, YKind::Real).unwrap()
    }

    fn random_categorical_structure(rng: &mut Rng, n: usize) -> InformationStructure {
        let sizes = [3usize, 3];
        let alphabets: Vec<Vec<String>> =
            sizes.iter().map(|&k| (0..k).map(|i| i.to_string()).collect()).collect();
        let mut states = Vec::new();
        let mut weights = Vec::new();
        for s1 in 0..sizes[0] {
            for s2 in 0..sizes[1] {
                for o in 0..n {
                    weights.push(-(rng.random::<f64>().ln()));
                    states.push(State {
                        prob: 0.0,
                        signals: vec![s1, s2],
                        y: Yval::Outcome(o),
                    });
                }
            }
        }
        let z = csum(&weights);
        for (st, w) in states.iter_mut().zip(&weights) {
            st.prob = w / z;
        }
        InformationStructure::new(alphabets, states, YKind::Categorical(n)).unwrap()
    }
}
