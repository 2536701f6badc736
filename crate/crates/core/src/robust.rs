//! Robust aggregation of expert estimates: random expert, averaging, and
//! linear extremization, with approximation-ratio evaluation.
//!
//! The quality of an estimate `Z` is `v(Z) = E[(Y - E[Y])^2] - E[(Y - Z)^2]`,
//! the improvement in squared loss over the prior; the approximation ratio
//! is `v(Z) / v(Y_full)`, rewritten as
//! `1 - E[(Y_full - Z)^2] / E[(Y_full - E[Y])^2]`
//! whenever `Z` depends only on the signals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infostruct::{InformationStructure, PifSpec};
use crate::numeric::NeumaierSum;
use crate::rng::{trial_rng, Rng};

/// An aggregation strategy mapping expert estimates (plus an optional
/// prior) to a single estimate.
#[derive(Clone)]
pub enum AggregationStrategy {
    RandomExpert,
    Average,
    /// `mean + (d - 1)(mean - prior)`; requires a prior at evaluation time.
    Extremize { d: f64 },
    Custom(std::sync::Arc<dyn Fn(&[f64], Option<f64>) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for AggregationStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AggregationStrategy::RandomExpert => write!(f, "RandomExpert"),
            AggregationStrategy::Average => write!(f, "Average"),
            AggregationStrategy::Extremize { d } => write!(f, "Extremize({d})"),
            AggregationStrategy::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl AggregationStrategy {
    fn needs_prior(&self) -> bool {
        matches!(self, AggregationStrategy::Extremize { .. })
    }

    fn apply_deterministic(&self, estimates: &[f64], prior: Option<f64>) -> Result<f64> {
        match self {
            AggregationStrategy::Average => {
                Ok(estimates.iter().sum::<f64>() / estimates.len() as f64)
            }
            AggregationStrategy::Extremize { d } => {
                let prior = prior.ok_or_else(|| {
                    Error::Argument("extremization requires a prior".into())
                })?;
                let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
                Ok(mean + (d - 1.0) * (mean - prior))
            }
            AggregationStrategy::Custom(f) => Ok(f(estimates, prior)),
            AggregationStrategy::RandomExpert => {
                Err(Error::Argument("random expert is not deterministic".into()))
            }
        }
    }
}

/// Apply a strategy to one profile of estimates. The random-expert strategy
/// draws its pick from `rng`.
pub fn aggregate(
    strategy: &AggregationStrategy,
    estimates: &[f64],
    prior: Option<f64>,
    rng: &mut Rng,
) -> Result<f64> {
    use rand::Rng as _;
    if estimates.is_empty() {
        return Err(Error::Argument("no estimates".into()));
    }
    if strategy.needs_prior() && prior.is_none() {
        return Err(Error::Argument("extremization requires a prior".into()));
    }
    match strategy {
        AggregationStrategy::RandomExpert => {
            Ok(estimates[rng.random_range(0..estimates.len())])
        }
        other => other.apply_deterministic(estimates, prior),
    }
}

/// The extremization factor with the best worst-case guarantee over
/// projective-substitutes structures: `m(sqrt(3m^2-3m+1) - 2)/(m^2-m-1)`,
/// approaching `sqrt(3)` as `m` grows.
pub fn recommended_d(m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::Argument("need at least two experts".into()));
    }
    let mf = m as f64;
    Ok(mf * ((3.0 * mf * mf - 3.0 * mf + 1.0).sqrt() - 2.0) / (mf * mf - mf - 1.0))
}

/// The worst-case ratio the recommended extremization factor guarantees:
/// `((3m^2-3m+1)^(3/2) - 9m^2 + 9m + 1) / (2 (m^2-m-1)^2)`.
pub fn extremize_guarantee(m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::Argument("need at least two experts".into()));
    }
    let mf = m as f64;
    let q = 3.0 * mf * mf - 3.0 * mf + 1.0;
    Ok((q.powf(1.5) - 9.0 * mf * mf + 9.0 * mf + 1.0) / (2.0 * (mf * mf - mf - 1.0).powi(2)))
}

/// The prior-free averaging guarantee:
/// `2/m - (m-1)/(2m(2m-1+sqrt(3m^2-3m+1))) - 1/m^2`.
pub fn average_guarantee(m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::Argument("need at least two experts".into()));
    }
    let mf = m as f64;
    let root = (3.0 * mf * mf - 3.0 * mf + 1.0).sqrt();
    Ok(2.0 / mf - (mf - 1.0) / (2.0 * mf * (2.0 * mf - 1.0 + root)) - 1.0 / (mf * mf))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioReport {
    pub v_strategy: f64,
    pub v_full: f64,
    pub ratio: f64,
    /// Batch-means standard error; absent in exact mode.
    pub standard_error: Option<f64>,
}

/// Exact approximation ratio of a strategy on a finite structure with real
/// `Y`: `1 - E[(Y_full - Z)^2] / E[(Y_full - E[Y])^2]`. The random-expert
/// strategy is evaluated in expectation over the choice of expert.
pub fn approximation_ratio_exact(
    structure: &InformationStructure,
    strategy: &AggregationStrategy,
) -> Result<RatioReport> {
    let y = structure.y_real()?;
    let m = structure.n_experts();
    let prior = structure.mean(&y);
    let full_mask: u32 = (1 << m) - 1;
    let y_full: Vec<f64> =
        structure.y_subset_per_state(full_mask).into_iter().map(|v| v[0]).collect();
    let v_full = structure.mean(
        &y_full.iter().map(|v| (v - prior) * (v - prior)).collect::<Vec<_>>(),
    );
    if v_full <= 1e-300 {
        return Err(Error::Numeric("uninformative structure: v(Y_full) = 0".into()));
    }
    // per-state estimates Y_i
    let per_expert: Vec<Vec<f64>> = (0..m)
        .map(|i| structure.y_subset_per_state(1 << i).into_iter().map(|v| v[0]).collect())
        .collect();

    let v_strategy = match strategy {
        AggregationStrategy::RandomExpert => {
            // expectation over the expert choice: average of per-expert values
            let mut acc = 0.0;
            for yi in &per_expert {
                let v_i = v_full
                    - structure.mean(
                        &y_full
                            .iter()
                            .zip(yi)
                            .map(|(a, b)| (a - b) * (a - b))
                            .collect::<Vec<_>>(),
                    );
                acc += v_i;
            }
            acc / m as f64
        }
        other => {
            let z: Vec<f64> = (0..structure.states().len())
                .map(|s| {
                    let ests: Vec<f64> = per_expert.iter().map(|col| col[s]).collect();
                    other.apply_deterministic(&ests, Some(prior))
                })
                .collect::<Result<_>>()?;
            v_full
                - structure.mean(
                    &y_full.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).collect::<Vec<_>>(),
                )
        }
    };
    Ok(RatioReport { v_strategy, v_full, ratio: v_strategy / v_full, standard_error: None })
}

/// Monte Carlo approximation ratio on a Gaussian PIF structure:
/// `1 - E[(Y - Z)^2] / Var(Y)`, with a batch-means standard error. Trials
/// derive independent streams from `(seed, trial)`.
pub fn approximation_ratio_mc(
    spec: &PifSpec,
    strategy: &AggregationStrategy,
    trials: u64,
    seed: u64,
) -> Result<RatioReport> {
    if trials < 1000 {
        return Err(Error::Argument("need at least 1000 trials".into()));
    }
    spec.validate()?;
    let prior = spec.prior_mean();
    let per_trial: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let (y, ests) = spec.sample(&mut rng);
            let z = aggregate(strategy, &ests, Some(prior), &mut rng).expect("strategy");
            ((y - z) * (y - z), (y - prior) * (y - prior))
        })
        .collect();
    let mut err = NeumaierSum::new();
    let mut var = NeumaierSum::new();
    for &(e, v) in &per_trial {
        err.add(e);
        var.add(v);
    }
    let n = trials as f64;
    let mean_err = err.total() / n;
    let mean_var = var.total() / n;
    if mean_var <= 0.0 {
        return Err(Error::Numeric("degenerate structure: Var(Y) = 0".into()));
    }
    let ratio = 1.0 - mean_err / mean_var;
    // batch means over 32 batches
    let batches = 32usize;
    let batch_size = (per_trial.len() / batches).max(1);
    let mut batch_ratios = Vec::new();
    for b in 0..batches {
        let lo = b * batch_size;
        let hi = ((b + 1) * batch_size).min(per_trial.len());
        if lo >= hi {
            break;
        }
        let mut e = 0.0;
        let mut v = 0.0;
        for &(ei, vi) in &per_trial[lo..hi] {
            e += ei;
            v += vi;
        }
        if v > 0.0 {
            batch_ratios.push(1.0 - e / v);
        }
    }
    let k = batch_ratios.len() as f64;
    let mean_b = batch_ratios.iter().sum::<f64>() / k;
    let var_b = batch_ratios.iter().map(|r| (r - mean_b) * (r - mean_b)).sum::<f64>()
        / (k - 1.0).max(1.0);
    let se = (var_b / k).sqrt();
    Ok(RatioReport {
        v_strategy: mean_var - mean_err,
        v_full: mean_var,
        ratio,
        standard_error: Some(se),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infostruct::{
        secret_sharing, thm73_structure, thm75_structure, xor_structure,
    };
    use crate::rng::root_rng;

    #[test]
    fn aggregate_formulas() {
        let mut rng = root_rng(1);
        // d = 1 recovers the average
        let avg = aggregate(
            &AggregationStrategy::Extremize { d: 1.0 },
            &[0.2, 0.6],
            Some(0.1),
            &mut rng,
        )
        .unwrap();
        assert!((avg - 0.4).abs() < 1e-15);
        // worked example: estimates (1.2, 0.8), prior 0, d = 2 gives 2.0
        let z = aggregate(
            &AggregationStrategy::Extremize { d: 2.0 },
            &[1.2, 0.8],
            Some(0.0),
            &mut rng,
        )
        .unwrap();
        assert!((z - 2.0).abs() < 1e-15);
        // d = 0 returns the prior
        let z = aggregate(
            &AggregationStrategy::Extremize { d: 0.0 },
            &[1.2, 0.8],
            Some(0.37),
            &mut rng,
        )
        .unwrap();
        assert!((z - 0.37).abs() < 1e-15);
        // missing prior is an error
        assert!(aggregate(
            &AggregationStrategy::Extremize { d: 2.0 },
            &[1.0],
            None,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn recommended_d_values() {
        // m = 2: 2(sqrt(7) - 2)
        let d2 = recommended_d(2).unwrap();
        assert!((d2 - 2.0 * (7f64.sqrt() - 2.0)).abs() < 1e-12);
        assert!((d2 - 1.292).abs() < 1e-3);
        // large m approaches sqrt(3)
        let d_big = recommended_d(1_000_000).unwrap();
        assert!((d_big - 3f64.sqrt()).abs() < 1e-3);
        // the m = 2 guarantee is (7 sqrt(7) - 17)/2
        let g2 = extremize_guarantee(2).unwrap();
        assert!((g2 - (7.0 * 7f64.sqrt() - 17.0) / 2.0).abs() < 1e-12);
        assert!((g2 - 0.760).abs() < 1e-3);
        assert!(recommended_d(1).is_err());
    }

    #[test]
    fn table_of_guarantees_small_m() {
        // averaging and extremizing guarantees for m = 2..7
        let avg_expect = [0.706, 0.520, 0.409, 0.336, 0.285, 0.248];
        let ext_expect = [0.760, 0.596, 0.488, 0.412, 0.356, 0.314];
        for (k, m) in (2..=7).enumerate() {
            assert!((average_guarantee(m).unwrap() - avg_expect[k]).abs() < 1e-3);
            assert!((extremize_guarantee(m).unwrap() - ext_expect[k]).abs() < 1e-3);
        }
    }

    #[test]
    fn exact_ratio_on_thm73_pair() {
        // the sign strategy: 1 on (+1,+1), -1 on (-1,-1), 0 on mixed
        let strategy = AggregationStrategy::Custom(std::sync::Arc::new(|ests, _| {
            let s: f64 = ests.iter().sum();
            if s > 1.5 {
                1.0
            } else if s < -1.5 {
                -1.0
            } else {
                0.0
            }
        }));
        let want = (3.0 + 7f64.sqrt()) / 8.0;
        for positive in [true, false] {
            let s = thm73_structure(positive);
            let rep = approximation_ratio_exact(&s, &strategy).unwrap();
            assert!((rep.ratio - want).abs() < 1e-9, "{}: {}", positive, rep.ratio);
        }
    }

    #[test]
    fn exact_ratio_on_thm75_pair() {
        // the known-prior optimal response is exactly extremization by the
        // recommended factor
        let d = recommended_d(2).unwrap();
        let strategy = AggregationStrategy::Extremize { d };
        let want = (7.0 * 7f64.sqrt() - 17.0) / 2.0;
        for positive in [true, false] {
            let s = thm75_structure(positive);
            let rep = approximation_ratio_exact(&s, &strategy).unwrap();
            assert!((rep.ratio - want).abs() < 1e-9, "{}: {}", positive, rep.ratio);
        }
    }

    #[test]
    fn secret_sharing_caps_any_reports_only_strategy() {
        let s = secret_sharing(3, 5).unwrap();
        for strategy in [
            AggregationStrategy::Average,
            AggregationStrategy::RandomExpert,
            AggregationStrategy::Extremize { d: recommended_d(3).unwrap() },
        ] {
            let rep = approximation_ratio_exact(&s, &strategy).unwrap();
            assert!(rep.ratio <= 1.0 / 3.0 + 1e-10, "{strategy:?}: {}", rep.ratio);
        }
    }

    #[test]
    fn random_expert_guarantee_under_weak_substitutes() {
        use crate::infostruct::check_weak_substitutes;
        let mut rng = root_rng(5);
        let mut checked = 0;
        while checked < 30 {
            let s = crate::infostruct::tests::random_structure(&mut rng, 3);
            if !check_weak_substitutes(&s, None).unwrap().holds {
                continue;
            }
            let rep =
                approximation_ratio_exact(&s, &AggregationStrategy::RandomExpert);
            if let Ok(rep) = rep {
                assert!(rep.ratio >= 1.0 / 3.0 - 1e-10, "{}", rep.ratio);
                checked += 1;
            }
        }
    }

    #[test]
    fn projective_structures_meet_the_guarantees() {
        use crate::infostruct::check_projective_substitutes;
        let mut rng = root_rng(6);
        let mut structures = vec![
            thm73_structure(true),
            thm73_structure(false),
            thm75_structure(true),
            thm75_structure(false),
        ];
        let mut tries = 0;
        while structures.len() < 20 && tries < 500 {
            tries += 1;
            let s = crate::infostruct::tests::random_finite_pif(&mut rng, 2);
            if check_projective_substitutes(&s).unwrap().holds {
                structures.push(s);
            }
        }
        let d = recommended_d(2).unwrap();
        for s in &structures {
            let avg = approximation_ratio_exact(s, &AggregationStrategy::Average);
            let ext =
                approximation_ratio_exact(s, &AggregationStrategy::Extremize { d });
            // the exact m = 2 guarantees: (3+sqrt(7))/8 for averaging and
            // (7 sqrt(7) - 17)/2 for extremizing; both are attained with
            // equality on the tight pairs
            if let (Ok(avg), Ok(ext)) = (avg, ext) {
                assert!(avg.ratio >= (3.0 + 7f64.sqrt()) / 8.0 - 1e-9, "avg {}", avg.ratio);
                assert!(
                    ext.ratio >= (7.0 * 7f64.sqrt() - 17.0) / 2.0 - 1e-9,
                    "ext {}",
                    ext.ratio
                );
            }
        }
    }

    #[test]
    fn ratio_is_affine_invariant() {
        use crate::infostruct::{InformationStructure, State, YKind, Yval};
        // replacing Y by aY + b leaves ratios unchanged
        let base = thm73_structure(true);
        let scaled_states: Vec<State> = base
            .states()
            .iter()
            .map(|s| State {
                prob: s.prob,
                signals: s.signals.clone(),
                y: match s.y {
                    Yval::Real(v) => Yval::Real(-2.5 * v + 0.7),
                    _ => unreachable!(),
                },
            })
            .collect();
        let scaled = InformationStructure::new(
            base.alphabets().to_vec(),
            scaled_states,
            YKind::Real,
        )
        .unwrap();
        for strategy in
            [AggregationStrategy::Average, AggregationStrategy::RandomExpert]
        {
            let r1 = approximation_ratio_exact(&base, &strategy).unwrap();
            let r2 = approximation_ratio_exact(&scaled, &strategy).unwrap();
            assert!((r1.ratio - r2.ratio).abs() < 1e-10);
        }
    }

    #[test]
    fn ratio_is_concave_quadratic_in_d() {
        // three-point second difference of the exact ratio in d
        let s = thm73_structure(true);
        let r = |d: f64| {
            approximation_ratio_exact(&s, &AggregationStrategy::Extremize { d })
                .unwrap()
                .ratio
        };
        for d0 in [0.5, 1.0, 1.5] {
            let h = 0.25;
            let second = r(d0 + h) - 2.0 * r(d0) + r(d0 - h);
            assert!(second <= 1e-10, "{second}");
        }
        // d = 1 equals plain averaging
        let avg = approximation_ratio_exact(&s, &AggregationStrategy::Average).unwrap();
        assert!((r(1.0) - avg.ratio).abs() < 1e-12);
    }

    #[test]
    fn xor_has_no_informative_aggregate() {
        let rep =
            approximation_ratio_exact(&xor_structure(), &AggregationStrategy::Average)
                .unwrap();
        assert!(rep.ratio.abs() < 1e-12);
    }

    #[test]
    fn mc_ratio_shared_plus_private_optimum() {
        // optimal response is extremize with d = 2m/(m+1) = 4/3, i.e.
        // Z = (2/3)(Y1 + Y2); ratio 8/9
        let spec = PifSpec::shared_plus_private(2);
        let rep = approximation_ratio_mc(
            &spec,
            &AggregationStrategy::Extremize { d: 4.0 / 3.0 },
            1_000_000,
            42,
        )
        .unwrap();
        assert!((rep.ratio - 8.0 / 9.0).abs() < 0.01, "{}", rep.ratio);
        assert!(rep.standard_error.unwrap() < 0.01);
    }

    #[test]
    fn mc_ratio_deterministic_shared() {
        let spec = PifSpec::deterministic_shared(2, 0.0);
        let avg =
            approximation_ratio_mc(&spec, &AggregationStrategy::Average, 400_000, 7).unwrap();
        assert!((avg.ratio - 0.75).abs() < 0.01, "{}", avg.ratio);
        // extremizing by d = m recovers Y exactly
        let ext = approximation_ratio_mc(
            &spec,
            &AggregationStrategy::Extremize { d: 2.0 },
            400_000,
            8,
        )
        .unwrap();
        assert!(ext.ratio > 0.999, "{}", ext.ratio);
        // nonzero mu changes nothing: the mean enters every estimate
        let spec = PifSpec::deterministic_shared(2, 1.5);
        let avg2 =
            approximation_ratio_mc(&spec, &AggregationStrategy::Average, 400_000, 9).unwrap();
        assert!((avg2.ratio - 0.75).abs() < 0.01);
    }
}
