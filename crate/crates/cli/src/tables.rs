//! Reproduction of the published tables: computed values side by side with
//! the published ones and absolute deltas.

use serde_json::json;

use abelab_core::incentivization::{
    incentivization_index, normalize, optimal_rule, relative_index, simulate_expert, ExpertMode,
    ExpertSimConfig, NormalizedRule,
};
use abelab_core::robust::{average_guarantee, extremize_guarantee};
use abelab_core::scoring::BinaryRule;
use abelab_core::Result;

const ELLS: [f64; 3] = [1.0, 2.0, 4.0];

/// (name, published indices at ell = 1, 2, 4)
const PUBLISHED_INDICES: [(&str, [f64; 3]); 8] = [
    ("log", [0.260, 0.0732, 0.00644]),
    ("quadratic", [0.279, 0.0802, 0.00694]),
    ("spherical", [0.296, 0.0889, 0.00819]),
    ("hs", [0.255, 0.0723, 0.00658]),
    ("opt-1", [0.253, 0.0728, 0.00719]),
    ("opt-2", [0.255, 0.0718, 0.00661]),
    ("opt-4", [0.261, 0.0732, 0.00639]),
    ("opt-inf", [0.311, 0.0968, 0.00974]),
];

fn rule_by_name(name: &str) -> Result<NormalizedRule> {
    match name {
        "log" => normalize(&BinaryRule::logarithmic()),
        "quadratic" => normalize(&BinaryRule::quadratic()),
        "spherical" => normalize(&BinaryRule::spherical()),
        "hs" => normalize(&BinaryRule::hs()),
        "opt-1" => optimal_rule(1.0),
        "opt-2" => optimal_rule(2.0),
        "opt-4" => optimal_rule(4.0),
        "opt-inf" => optimal_rule(f64::INFINITY),
        other => Err(abelab_core::Error::Argument(format!("unknown rule {other}"))),
    }
}

/// Incentivization indices for the eight rules at ell = 1, 2, 4.
pub fn table31() -> Result<serde_json::Value> {
    let mut rows = Vec::new();
    let mut max_delta = 0.0f64;
    for (name, published) in PUBLISHED_INDICES {
        let rule = rule_by_name(name)?;
        let mut computed = Vec::new();
        let mut deltas = Vec::new();
        for (k, &ell) in ELLS.iter().enumerate() {
            let ind = incentivization_index(&rule, ell)?;
            let delta = (ind - published[k]).abs();
            max_delta = max_delta.max(delta);
            computed.push(ind);
            deltas.push(delta);
        }
        rows.push(json!({
            "rule": name,
            "published": published,
            "computed": computed,
            "abs_delta": deltas,
        }));
    }
    Ok(json!({
        "table": "incentivization indices",
        "ells": ELLS,
        "rows": rows,
        "max_abs_delta": max_delta,
    }))
}

/// Locally-adaptive expert behavior at small-to-medium costs: published
/// average error / predicted error / flip counts.
pub fn table_a1(trials: u64, seed: u64) -> Result<serde_json::Value> {
    // (cost, rule, avg error, predicted, ratio, avg flips, max flips)
    const PUBLISHED: [(f64, &str, f64, f64, f64, f64, u64); 15] = [
        (0.1, "quadratic", 0.1616, 0.1490, 1.0845, 2.3341, 3),
        (0.1, "log", 0.1609, 0.1389, 1.1582, 2.3317, 3),
        (0.1, "opt-1", 0.1553, 0.1348, 1.1522, 2.6658, 3),
        (0.03, "quadratic", 0.1136, 0.1103, 1.0298, 6.0933, 7),
        (0.03, "log", 0.1093, 0.1028, 1.0636, 6.7133, 7),
        (0.03, "opt-1", 0.1110, 0.0997, 1.1126, 7.1547, 10),
        (0.01, "quadratic", 0.0850, 0.0838, 1.0147, 11.9745, 15),
        (0.01, "log", 0.0816, 0.0781, 1.0444, 13.2780, 14),
        (0.01, "opt-1", 0.0802, 0.0758, 1.0577, 15.3399, 23),
        (0.003, "quadratic", 0.0626, 0.0620, 1.0096, 23.2076, 29),
        (0.003, "log", 0.0590, 0.0578, 1.0199, 26.3918, 27),
        (0.003, "opt-1", 0.0580, 0.0561, 1.0349, 31.2093, 52),
        (0.001, "quadratic", 0.0472, 0.0471, 1.0014, 41.5592, 52),
        (0.001, "log", 0.0448, 0.0439, 1.0193, 47.4845, 48),
        (0.001, "opt-1", 0.0434, 0.0426, 1.0179, 57.5323, 107),
    ];
    let mut rows = Vec::new();
    for (cost, name, pub_err, pub_pred, pub_ratio, pub_flips, pub_max) in PUBLISHED {
        let rule = rule_by_name(name)?;
        let cfg = ExpertSimConfig {
            cost,
            mode: ExpertMode::LocallyAdaptive,
            trials,
            seed,
            ell: 1.0,
        };
        let rep = simulate_expert(&rule, &cfg)?;
        // binomial-ish confidence interval on the mean absolute error
        let se = rep.avg_error / (trials as f64).sqrt();
        rows.push(json!({
            "cost": cost,
            "rule": name,
            "published": {
                "avg_error": pub_err,
                "predicted": pub_pred,
                "ratio": pub_ratio,
                "avg_flips": pub_flips,
                "max_flips": pub_max,
            },
            "computed": {
                "avg_error": rep.avg_error,
                "avg_error_ci95": [rep.avg_error - 1.96 * se, rep.avg_error + 1.96 * se],
                "predicted": rep.predicted,
                "ratio": rep.ratio_to_predicted,
                "avg_flips": rep.avg_flips,
                "max_flips": rep.max_flips,
            },
            "abs_delta_error": (rep.avg_error - pub_err).abs(),
        }));
    }
    Ok(json!({
        "table": "locally adaptive expert simulation",
        "trials": trials,
        "seed": seed,
        "rows": rows,
    }))
}

/// Worst-case approximation ratios for m = 2..7: random expert, averaging
/// (prior-free positive), extremizing (known-prior positive), and the
/// published negative results.
pub fn table71() -> Result<serde_json::Value> {
    const PUBLISHED: [(usize, f64, f64, f64, f64, f64); 6] = [
        (2, 0.500, 0.706, 0.706, 0.760, 0.760),
        (3, 0.333, 0.520, 0.556, 0.596, 0.750),
        (4, 0.250, 0.409, 0.438, 0.488, 0.640),
        (5, 0.200, 0.336, 0.360, 0.412, 0.556),
        (6, 0.167, 0.285, 0.306, 0.356, 0.490),
        (7, 0.143, 0.248, 0.265, 0.314, 0.438),
    ];
    let mut rows = Vec::new();
    let mut max_delta = 0.0f64;
    for (m, pub_rand, pub_avg, pub_neg_free, pub_ext, pub_neg_prior) in PUBLISHED {
        let mf = m as f64;
        let rand = 1.0 / mf;
        let avg = average_guarantee(m)?;
        let ext = extremize_guarantee(m)?;
        // negative results: tight two-expert pairs at m = 2, otherwise the
        // Gaussian families
        let neg_free = if m == 2 { (3.0 + 7f64.sqrt()) / 8.0 } else { 2.0 / mf - 1.0 / (mf * mf) };
        let neg_prior = if m == 2 {
            (7.0 * 7f64.sqrt() - 17.0) / 2.0
        } else {
            4.0 * mf / ((mf + 1.0) * (mf + 1.0))
        };
        for (c, p) in [
            (rand, pub_rand),
            (avg, pub_avg),
            (neg_free, pub_neg_free),
            (ext, pub_ext),
            (neg_prior, pub_neg_prior),
        ] {
            max_delta = max_delta.max((c - p).abs());
        }
        rows.push(json!({
            "m": m,
            "published": {
                "random_expert": pub_rand,
                "averaging": pub_avg,
                "prior_free_negative": pub_neg_free,
                "extremizing": pub_ext,
                "known_prior_negative": pub_neg_prior,
            },
            "computed": {
                "random_expert": rand,
                "averaging": avg,
                "prior_free_negative": neg_free,
                "extremizing": ext,
                "known_prior_negative": neg_prior,
            },
        }));
    }
    Ok(json!({
        "table": "approximation ratio guarantees",
        "rows": rows,
        "max_abs_delta": max_delta,
    }))
}

/// Relative incentivization indices `(Ind(opt)/Ind(s))^(1/ell)`.
pub fn fig35() -> Result<serde_json::Value> {
    let mut rows = Vec::new();
    for name in ["log", "quadratic", "spherical", "hs", "opt-1", "opt-2", "opt-4"] {
        let rule = rule_by_name(name)?;
        let mut rel = Vec::new();
        for &ell in &ELLS {
            rel.push(relative_index(&rule, ell)?);
        }
        rows.push(json!({ "rule": name, "ells": ELLS, "relative_index": rel }));
    }
    Ok(json!({ "figure": "indices relative to the optimal rule", "rows": rows }))
}
