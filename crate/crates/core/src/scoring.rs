//! Proper scoring rules via the Savage representation, with Bregman and
//! Jensen-Bregman divergences.
//!
//! A proper scoring rule is represented by its expected-score function `G`
//! (convex on the simplex) and its exposure function `g` (the gradient of
//! `G`, understood modulo translation by the all-ones vector):
//!
//! ```text
//! s(x; j) = G(x) + <g(x), e_j - x>
//! ```
//!
//! Exposures are canonicalized by projecting onto the zero-sum hyperplane so
//! equality of exposures is well defined.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{csum, integrate, project_zero_sum};

/// A point of the probability simplex over `n >= 2` outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Forecast(Vec<f64>);

impl Forecast {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Argument("a forecast needs at least 2 outcomes".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Domain("forecast entries must be nonnegative".into()));
        }
        let s = csum(&probs);
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("forecast entries sum to {s}, not 1")));
        }
        Ok(Forecast(probs))
    }

    /// Binary forecast from the probability of the first outcome.
    pub fn binary(p: f64) -> Result<Self> {
        Forecast::new(vec![p, 1.0 - p])
    }

    pub fn uniform(n: usize) -> Self {
        Forecast(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&p| p > 0.0)
    }
}

impl TryFrom<Vec<f64>> for Forecast {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Forecast::new(v)
    }
}

impl From<Forecast> for Vec<f64> {
    fn from(f: Forecast) -> Vec<f64> {
        f.0
    }
}

impl std::ops::Index<usize> for Forecast {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Forecast domain of a rule: where scores are finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    FullSimplex,
    Interior,
    BinaryOpenInterval,
}

type VecFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VecGradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// The family a rule belongs to.
#[derive(Clone)]
pub enum RuleKind {
    Quadratic,
    Logarithmic,
    /// `G(p) = (sum_j p_j^alpha)^(1/alpha)`, `alpha > 1`.
    Spherical { alpha: f64 },
    /// `G(p) = sum_j p_j^gamma`, `gamma > 1`.
    Tsallis { gamma: f64 },
    /// `G(p) = -prod_j p_j^(1/n)`.
    Hs,
    /// `G(p) = -sum_j ln p_j`.
    NegativeLogProduct,
    /// The binary index-optimal rule for error exponent `ell` (n = 2 only).
    Opt { ell: f64 },
    /// User-supplied `G` and gradient; validated at construction.
    Custom { g: VecFn, grad: VecGradFn },
}

impl fmt::Debug for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleKind::Quadratic => write!(f, "Quadratic"),
            RuleKind::Logarithmic => write!(f, "Logarithmic"),
            RuleKind::Spherical { alpha } => write!(f, "Spherical({alpha})"),
            RuleKind::Tsallis { gamma } => write!(f, "Tsallis({gamma})"),
            RuleKind::Hs => write!(f, "Hs"),
            RuleKind::NegativeLogProduct => write!(f, "NegativeLogProduct"),
            RuleKind::Opt { ell } => write!(f, "Opt({ell})"),
            RuleKind::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// A proper scoring rule over `n` outcomes.
#[derive(Debug, Clone)]
pub struct ScoringRule {
    kind: RuleKind,
    n: usize,
    domain: Domain,
}

impl ScoringRule {
    pub fn quadratic(n: usize) -> Self {
        ScoringRule { kind: RuleKind::Quadratic, n, domain: Domain::FullSimplex }
    }

    pub fn logarithmic(n: usize) -> Self {
        // Scores extend continuously to the boundary as -infinity, so the
        // boundary is accepted by `score`; `exposure` still rejects it.
        ScoringRule { kind: RuleKind::Logarithmic, n, domain: Domain::FullSimplex }
    }

    pub fn spherical(alpha: f64, n: usize) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(Error::Argument("spherical rule needs alpha > 1".into()));
        }
        Ok(ScoringRule { kind: RuleKind::Spherical { alpha }, n, domain: Domain::FullSimplex })
    }

    pub fn tsallis(gamma: f64, n: usize) -> Result<Self> {
        if !(gamma > 1.0) {
            return Err(Error::Argument("tsallis rule needs gamma > 1".into()));
        }
        Ok(ScoringRule { kind: RuleKind::Tsallis { gamma }, n, domain: Domain::FullSimplex })
    }

    pub fn hs(n: usize) -> Self {
        ScoringRule { kind: RuleKind::Hs, n, domain: Domain::Interior }
    }

    pub fn negative_log_product(n: usize) -> Self {
        ScoringRule { kind: RuleKind::NegativeLogProduct, n, domain: Domain::Interior }
    }

    pub fn opt(ell: f64) -> Result<Self> {
        if !(ell >= 1.0) {
            return Err(Error::Argument("opt rule needs ell >= 1".into()));
        }
        Ok(ScoringRule { kind: RuleKind::Opt { ell }, n: 2, domain: Domain::BinaryOpenInterval })
    }

    /// Build a custom rule from `G` and its gradient. The gradient is
    /// validated against central finite differences at random interior
    /// points, and convexity of `G` is spot-checked.
    pub fn custom(
        g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        n: usize,
        domain: Domain,
    ) -> Result<Self> {
        let g: VecFn = Arc::new(g);
        let grad: VecGradFn = Arc::new(grad);
        validate_custom(&g, &grad, n)?;
        Ok(ScoringRule { kind: RuleKind::Custom { g, grad }, n, domain })
    }

    pub fn kind(&self) -> &RuleKind {
        &self.kind
    }

    pub fn n_outcomes(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Whether the rule's score is bounded on the whole simplex.
    pub fn is_bounded(&self) -> bool {
        matches!(
            self.kind,
            RuleKind::Quadratic | RuleKind::Spherical { .. } | RuleKind::Tsallis { .. }
        )
    }

    fn check_dim(&self, x: &Forecast) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "forecast has {} outcomes, rule expects {}",
                x.len(),
                self.n
            )));
        }
        Ok(())
    }

    fn check_domain_for_score(&self, x: &Forecast) -> Result<()> {
        self.check_dim(x)?;
        match self.domain {
            Domain::FullSimplex => Ok(()),
            Domain::Interior | Domain::BinaryOpenInterval => {
                if x.is_interior() {
                    Ok(())
                } else {
                    Err(Error::Domain(
                        "boundary forecast is outside this rule's domain".into(),
                    ))
                }
            }
        }
    }

    /// Expected score function `G` at `x`.
    pub fn g_value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            RuleKind::Quadratic => x.iter().map(|p| p * p).sum::<f64>() - 1.0,
            RuleKind::Logarithmic => x.iter().map(|&p| xlnx(p)).sum(),
            RuleKind::Spherical { alpha } => {
                x.iter().map(|&p| p.powf(*alpha)).sum::<f64>().powf(1.0 / alpha)
            }
            RuleKind::Tsallis { gamma } => x.iter().map(|&p| p.powf(*gamma)).sum(),
            RuleKind::Hs => {
                let n = x.len() as f64;
                -x.iter().map(|&p| p.powf(1.0 / n)).product::<f64>()
            }
            RuleKind::NegativeLogProduct => -x.iter().map(|&p| p.ln()).sum::<f64>(),
            RuleKind::Opt { ell } => {
                let b = crate::incentivization::optimal_binary_rule(*ell);
                x[0] * b.s(x[0]) + (1.0 - x[0]) * b.s(1.0 - x[0])
            }
            RuleKind::Custom { g, .. } => g(x),
        }
    }

    /// Raw (uncanonicalized) gradient of `G` at `x`.
    fn grad_raw(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            RuleKind::Quadratic => x.iter().map(|&p| 2.0 * p).collect(),
            RuleKind::Logarithmic => x.iter().map(|&p| p.ln() + 1.0).collect(),
            RuleKind::Spherical { alpha } => {
                let u: f64 = x.iter().map(|&p| p.powf(*alpha)).sum();
                let c = u.powf(1.0 / alpha - 1.0);
                x.iter().map(|&p| c * p.powf(alpha - 1.0)).collect()
            }
            RuleKind::Tsallis { gamma } => {
                x.iter().map(|&p| gamma * p.powf(gamma - 1.0)).collect()
            }
            RuleKind::Hs => {
                let n = x.len() as f64;
                let g = self.g_value(x); // negative
                x.iter().map(|&p| g / (n * p)).collect()
            }
            RuleKind::NegativeLogProduct => x.iter().map(|&p| -1.0 / p).collect(),
            RuleKind::Opt { ell } => {
                // G'(p) = s(p) - s(1-p); lift the one-dimensional derivative
                // to the two-coordinate gradient (G'(p), 0) + c*(1,1).
                let b = crate::incentivization::optimal_binary_rule(*ell);
                let d = b.s(x[0]) - b.s(1.0 - x[0]);
                vec![d, 0.0]
            }
            RuleKind::Custom { grad, .. } => grad(x),
        }
    }

    /// Exposure `g(x)` canonicalized onto the zero-sum hyperplane.
    ///
    /// Errors on boundary forecasts where the exposure is unbounded.
    pub fn exposure(&self, x: &Forecast) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if !x.is_interior() {
            // rules scoring the whole simplex have bounded exposure there,
            // except the log rule (boundary scores are -inf by extension)
            let bounded_at_boundary = self.domain == Domain::FullSimplex
                && !matches!(self.kind, RuleKind::Logarithmic);
            if !bounded_at_boundary {
                return Err(Error::Domain(
                    "exposure is unbounded at the boundary for this rule".into(),
                ));
            }
        }
        Ok(project_zero_sum(&self.grad_raw(x.probs())))
    }

    /// Score of report `x` when outcome `j` (0-based) is realized.
    ///
    /// `-inf` is a distinguished value (e.g. the log score of a zero-probability
    /// outcome), not an error.
    pub fn score(&self, x: &Forecast, outcome: usize) -> Result<f64> {
        self.check_domain_for_score(x)?;
        if outcome >= self.n {
            return Err(Error::Argument(format!(
                "outcome {outcome} out of range for {} outcomes",
                self.n
            )));
        }
        let p = x.probs();
        // The log score needs no Savage assembly and extends to the boundary.
        if let RuleKind::Logarithmic = self.kind {
            return Ok(p[outcome].ln());
        }
        let g = self.g_value(p);
        let grad = self.grad_raw(p);
        let dot: f64 = csum(&grad.iter().zip(p).map(|(gi, pi)| gi * pi).collect::<Vec<_>>());
        Ok(g + grad[outcome] - dot)
    }

    /// Expected score of an honest report: `sum_j x_j s(x; j) = G(x)`.
    pub fn expected_score(&self, x: &Forecast) -> Result<f64> {
        self.check_domain_for_score(x)?;
        Ok(self.g_value(x.probs()))
    }

    /// Bregman divergence `D_G(y || x) = G(y) - G(x) - <y - x, g(x)>`.
    pub fn bregman(&self, y: &Forecast, x: &Forecast) -> Result<f64> {
        self.check_dim(y)?;
        self.check_dim(x)?;
        if !x.is_interior() && self.domain != Domain::FullSimplex {
            return Err(Error::Domain("second argument must be interior".into()));
        }
        let grad = self.grad_raw(x.probs());
        let mut d = self.g_value(y.probs()) - self.g_value(x.probs());
        for j in 0..self.n {
            d -= (y[j] - x[j]) * grad[j];
        }
        Ok(d)
    }

    /// Jensen-Bregman divergence `(G(a) + G(b))/2 - G((a+b)/2)`.
    pub fn jensen_bregman(&self, a: &Forecast, b: &Forecast) -> Result<f64> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        let mid: Vec<f64> = a.probs().iter().zip(b.probs()).map(|(x, y)| 0.5 * (x + y)).collect();
        Ok(0.5 * (self.g_value(a.probs()) + self.g_value(b.probs())) - self.g_value(&mid))
    }
}

/// `x ln x`, continuously extended by 0 at `x = 0`.
pub fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

fn validate_custom(g: &VecFn, grad: &VecGradFn, n: usize) -> Result<()> {
    use rand::Rng as _;
    let mut rng = crate::rng::root_rng(0x5c0e);
    // keep validation points away from the boundary so difference stencils
    // stay inside the simplex
    let pull_in = |v: Vec<f64>| -> Vec<f64> {
        let n = v.len() as f64;
        v.into_iter().map(|p| 0.9 * p + 0.1 / n).collect()
    };
    // convexity spot-check: G(lerp) <= lerp of G + 1e-9
    for _ in 0..64 {
        let x = pull_in(random_interior(&mut rng, n));
        let y = pull_in(random_interior(&mut rng, n));
        let lam: f64 = rng.random();
        let mid: Vec<f64> =
            x.iter().zip(&y).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        if g(&mid) > lam * g(&x) + (1.0 - lam) * g(&y) + 1e-9 {
            return Err(Error::InvalidRule("custom G failed the convexity spot-check".into()));
        }
    }
    // gradient check against central differences, tangentially to the simplex
    for _ in 0..16 {
        let x = pull_in(random_interior(&mut rng, n));
        let gr = grad(&x);
        for j in 1..n {
            // direction e_j - e_0 stays inside the simplex's affine hull
            let h = 1e-6;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xp[0] -= h;
            xm[j] -= h;
            xm[0] += h;
            let fd = (g(&xp) - g(&xm)) / (2.0 * h);
            let an = gr[j] - gr[0];
            let scale = an.abs().max(1.0);
            if (fd - an).abs() > 1e-5 * scale {
                return Err(Error::InvalidRule(format!(
                    "custom gradient disagrees with finite differences ({an} vs {fd})"
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn random_interior(rng: &mut crate::rng::Rng, n: usize) -> Vec<f64> {
    use rand::Rng as _;
    loop {
        let raw: Vec<f64> = (0..n).map(|_| -(rng.random::<f64>()).ln()).collect();
        let s: f64 = raw.iter().sum();
        let v: Vec<f64> = raw.iter().map(|x| x / s).collect();
        if v.iter().all(|&p| p > 1e-9) {
            return v;
        }
    }
}

// ---------------------------------------------------------------------------
// Symmetric binary rules: s(x) is the score of an expert who assigns
// probability x to the realized outcome.
// ---------------------------------------------------------------------------

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A symmetric proper scoring rule for binary outcomes, stored as the score
/// function `s` on (0,1) together with its derivative.
///
/// `G(p) = p s(p) + (1-p) s(1-p)` and `G''(p) = s'(p) / (1-p)`.
#[derive(Clone)]
pub struct BinaryRule {
    pub(crate) s: ScalarFn,
    pub(crate) s_prime: ScalarFn,
    pub(crate) name: String,
}

impl fmt::Debug for BinaryRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryRule({})", self.name)
    }
}

impl BinaryRule {
    pub fn new(
        name: &str,
        s: impl Fn(f64) -> f64 + Send + Sync + 'static,
        s_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        BinaryRule { s: Arc::new(s), s_prime: Arc::new(s_prime), name: name.to_string() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Score when assigning probability `x` to the realized outcome.
    pub fn s(&self, x: f64) -> f64 {
        (self.s)(x)
    }

    pub fn s_prime(&self, x: f64) -> f64 {
        (self.s_prime)(x)
    }

    /// Expected score function `G(p) = p s(p) + (1-p) s(1-p)`.
    pub fn g(&self, p: f64) -> f64 {
        p * self.s(p) + (1.0 - p) * self.s(1.0 - p)
    }

    /// `G''(p) = s'(p) / (1 - p)`.
    pub fn g_second(&self, p: f64) -> f64 {
        self.s_prime(p) / (1.0 - p)
    }

    pub fn quadratic() -> Self {
        BinaryRule::new("quadratic", |x| -2.0 * (1.0 - x) * (1.0 - x), |x| 4.0 * (1.0 - x))
    }

    pub fn logarithmic() -> Self {
        BinaryRule::new("log", |x| x.ln(), |x| 1.0 / x)
    }

    /// `s(x) = x / sqrt(x^2 + (1-x)^2)`.
    pub fn spherical() -> Self {
        BinaryRule::new(
            "spherical",
            |x| x / (x * x + (1.0 - x) * (1.0 - x)).sqrt(),
            // s'(x) = (1-x) * u^(-3/2) * ... ; G'' = u^(-3/2) with u = x^2+(1-x)^2
            |x| {
                let u = x * x + (1.0 - x) * (1.0 - x);
                (1.0 - x) / u.powf(1.5)
            },
        )
    }

    /// `s(x) = -sqrt((1-x)/x)`.
    pub fn hs() -> Self {
        BinaryRule::new(
            "hs",
            |x| -((1.0 - x) / x).sqrt(),
            |x| 0.5 * (1.0 - x).max(0.0).powf(-0.5) * x.powf(-1.5),
        )
    }

    /// Spot check of monotonicity and the properness identity
    /// `x s'(x) = (1-x) s'(1-x)` on a grid.
    pub fn check_proper(&self) -> Result<()> {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..200 {
            let x = i as f64 / 200.0;
            let v = self.s(x);
            if v < prev - 1e-9 {
                return Err(Error::InvalidRule(format!("{}: s is decreasing near {x}", self.name)));
            }
            prev = v;
            let lhs = x * self.s_prime(x);
            let rhs = (1.0 - x) * self.s_prime(1.0 - x);
            let scale = lhs.abs().max(1.0);
            if (lhs - rhs).abs() > 1e-6 * scale {
                return Err(Error::InvalidRule(format!(
                    "{}: properness identity fails at {x}: {lhs} vs {rhs}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Extend a strictly increasing `s` on (0, 1/2] to a proper binary rule on
/// (0, 1) via `s'(p) = ((1-p)/p) s'(1-p)` for `p > 1/2`, with continuity
/// at 1/2.
pub fn extend_binary_rule(
    s_left: impl Fn(f64) -> f64 + Send + Sync + 'static,
) -> Result<BinaryRule> {
    let s_left = Arc::new(s_left);
    // monotonicity check on a grid
    let mut prev = f64::NEG_INFINITY;
    for i in 1..=100 {
        let x = 0.5 * i as f64 / 100.0;
        let v = s_left(x);
        if v <= prev {
            return Err(Error::InvalidRule("s_left is not strictly increasing".into()));
        }
        prev = v;
    }
    let sl = s_left.clone();
    // s_left is only defined on (0, 1/2]: use a one-sided second-order
    // stencil when a central one would step past 1/2
    let d_left = move |x: f64| {
        let h = (1e-6f64).min(0.4 * x);
        if x + h <= 0.5 {
            ((sl)(x + h) - (sl)(x - h)) / (2.0 * h)
        } else {
            (3.0 * (sl)(x) - 4.0 * (sl)(x - h) + (sl)(x - 2.0 * h)) / (2.0 * h)
        }
    };
    let d_left = Arc::new(d_left);
    let dl = d_left.clone();
    let s_prime = move |x: f64| {
        if x <= 0.5 {
            dl(x)
        } else {
            (1.0 - x) / x * dl(1.0 - x)
        }
    };
    let s_prime = Arc::new(s_prime);
    let sp = s_prime.clone();
    let sl = s_left.clone();
    let s = move |x: f64| {
        if x <= 0.5 {
            (sl)(x)
        } else {
            // s(1/2) + integral of the mirrored derivative
            let base = (sl)(0.5);
            base + integrate(|t| sp(t), 0.5, x, 1e-10).unwrap_or(f64::NAN)
        }
    };
    Ok(BinaryRule { s: Arc::new(s), s_prime, name: "extended".to_string() })
}

// ---------------------------------------------------------------------------
// Scalar convex functions on [0, 1], for real-valued estimates (agreement
// protocols, substitutes checkers).
// ---------------------------------------------------------------------------

/// A differentiable convex function on [0, 1] together with its derivative.
#[derive(Clone)]
pub struct ScalarConvex {
    g: ScalarFn,
    dg: ScalarFn,
    pub(crate) name: String,
}

impl fmt::Debug for ScalarConvex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarConvex({})", self.name)
    }
}

impl ScalarConvex {
    pub fn new(
        name: &str,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dg: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ScalarConvex { g: Arc::new(g), dg: Arc::new(dg), name: name.to_string() }
    }

    /// `G(x) = x^2`; the Bregman divergence is squared distance.
    pub fn square() -> Self {
        ScalarConvex::new("square", |x| x * x, |x| 2.0 * x)
    }

    /// Negative binary entropy; the Bregman divergence is KL divergence.
    pub fn neg_entropy() -> Self {
        ScalarConvex::new(
            "neg-entropy",
            |x| xlnx(x) + xlnx(1.0 - x),
            |x| (x / (1.0 - x)).ln(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.g)(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        (self.dg)(x)
    }

    /// `D_G(y || x)`. Infinite-slope endpoints (e.g. negative entropy at 0
    /// or 1) give `+inf` unless `y == x`; the infinity is a distinguished
    /// value that fails any finite tolerance check loudly.
    pub fn bregman(&self, y: f64, x: f64) -> f64 {
        if y == x {
            return 0.0;
        }
        let d = self.deriv(x);
        if !d.is_finite() {
            return f64::INFINITY;
        }
        self.value(y) - self.value(x) - (y - x) * d
    }

    /// `JB_G(a, b) = (G(a)+G(b))/2 - G((a+b)/2)`; symmetric.
    pub fn jensen_bregman(&self, a: f64, b: f64) -> f64 {
        0.5 * (self.value(a) + self.value(b)) - self.value(0.5 * (a + b))
    }

    /// `max G - min G` over [0, 1]: analytic for the built-ins, otherwise a
    /// 10^4-point grid plus endpoint limits.
    pub fn range_width(&self) -> f64 {
        match self.name.as_str() {
            "square" => 1.0,
            "neg-entropy" => std::f64::consts::LN_2,
            _ => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for i in 0..=10_000 {
                    let x = i as f64 / 10_000.0;
                    let v = self.value(x);
                    if v.is_finite() {
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                hi - lo
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fc(v: &[f64]) -> Forecast {
        Forecast::new(v.to_vec()).unwrap()
    }

    #[test]
    fn quadratic_score_examples() {
        let rule = ScoringRule::quadratic(2);
        let x = fc(&[0.7, 0.3]);
        let s1 = rule.score(&x, 0).unwrap();
        let s2 = rule.score(&x, 1).unwrap();
        assert!((s1 - -0.18).abs() < 1e-12, "{s1}");
        assert!((s2 - -0.98).abs() < 1e-12, "{s2}");
        assert!((s1 - s2 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn log_score_examples() {
        let rule = ScoringRule::logarithmic(2);
        let x = fc(&[0.5, 0.5]);
        assert!((rule.score(&x, 0).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert!((rule.score(&x, 1).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        // -inf is a value, not an error
        let x = fc(&[1.0, 0.0]);
        assert_eq!(rule.score(&x, 1).unwrap(), f64::NEG_INFINITY);
        assert_eq!(rule.score(&x, 0).unwrap(), 0.0);
    }

    #[test]
    fn spherical_score_example() {
        let rule = ScoringRule::spherical(2.0, 2).unwrap();
        let x = fc(&[0.6, 0.4]);
        let s = rule.score(&x, 0).unwrap();
        let want = 0.6 / 0.52f64.sqrt();
        assert!((s - want).abs() < 1e-12, "{s} vs {want}");
        // cross-check the closed binary form s_sph(x) = x/sqrt(x^2+(1-x)^2)
        let b = BinaryRule::spherical();
        assert!((s - b.s(0.6)).abs() < 1e-12);
    }

    #[test]
    fn expected_score_matches_sum() {
        let rules: Vec<ScoringRule> = vec![
            ScoringRule::quadratic(3),
            ScoringRule::logarithmic(3),
            ScoringRule::spherical(2.0, 3).unwrap(),
            ScoringRule::tsallis(3.0, 3).unwrap(),
            ScoringRule::hs(3),
            ScoringRule::negative_log_product(3),
        ];
        let x = fc(&[0.5, 0.3, 0.2]);
        for rule in &rules {
            let es = rule.expected_score(&x).unwrap();
            let sum: f64 = (0..3).map(|j| x[j] * rule.score(&x, j).unwrap()).sum();
            assert!((es - sum).abs() < 1e-10, "{rule:?}: {es} vs {sum}");
        }
        // quadratic at certainty scores 0; uniform binary scores -1/2
        let q = ScoringRule::quadratic(2);
        assert!((q.expected_score(&fc(&[1.0, 0.0])).unwrap()).abs() < 1e-15);
        assert!((q.expected_score(&fc(&[0.5, 0.5])).unwrap() + 0.5).abs() < 1e-15);
        let l = ScoringRule::logarithmic(2);
        assert!((l.expected_score(&fc(&[0.5, 0.5])).unwrap() + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn exposure_canonicalization() {
        let q = ScoringRule::quadratic(2);
        let e = q.exposure(&fc(&[0.7, 0.3])).unwrap();
        assert!((e[0] - 0.4).abs() < 1e-12 && (e[1] + 0.4).abs() < 1e-12, "{e:?}");

        let l = ScoringRule::logarithmic(2);
        let e = l.exposure(&fc(&[0.5, 0.5])).unwrap();
        assert!(e[0].abs() < 1e-15 && e[1].abs() < 1e-15);
        let e = l.exposure(&fc(&[0.9, 0.1])).unwrap();
        let want = 0.5 * 9f64.ln();
        assert!((e[0] - want).abs() < 1e-12 && (e[1] + want).abs() < 1e-12);
        // boundary forecast: unbounded exposure
        assert!(l.exposure(&fc(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn bregman_examples() {
        // squared-norm Bregman is squared distance
        let q = ScoringRule::quadratic(2);
        let d = q.bregman(&fc(&[0.8, 0.2]), &fc(&[0.5, 0.5])).unwrap();
        assert!((d - 0.18).abs() < 1e-12, "{d}");
        // identity case
        let l = ScoringRule::logarithmic(2);
        assert!(l.bregman(&fc(&[0.5, 0.5]), &fc(&[0.5, 0.5])).unwrap().abs() < 1e-15);
        // binary quadratic G(p) = 2p^2-2p: D(0.5||0.4) = 0.02
        let d = q.bregman(&fc(&[0.5, 0.5]), &fc(&[0.4, 0.6])).unwrap();
        assert!((d - 0.02).abs() < 1e-12, "{d}");
    }

    #[test]
    fn jensen_bregman_examples() {
        let s = ScalarConvex::square();
        assert!((s.jensen_bregman(0.0, 1.0) - 0.25).abs() < 1e-15);
        assert!(s.jensen_bregman(0.3, 0.3).abs() < 1e-15);
        let e = ScalarConvex::neg_entropy();
        assert!((e.jensen_bregman(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        // JB(a,b) = (D(a||m) + D(b||m))/2 at the midpoint m
        let m = 0.5 * (0.2 + 0.7);
        let jb = e.jensen_bregman(0.2, 0.7);
        let avg = 0.5 * (e.bregman(0.2, m) + e.bregman(0.7, m));
        assert!((jb - avg).abs() < 1e-12);
    }

    #[test]
    fn properness_sampled_all_builtins() {

        let rules: Vec<ScoringRule> = vec![
            ScoringRule::quadratic(3),
            ScoringRule::logarithmic(3),
            ScoringRule::spherical(2.0, 3).unwrap(),
            ScoringRule::spherical(1.5, 3).unwrap(),
            ScoringRule::tsallis(3.0, 3).unwrap(),
            ScoringRule::hs(3),
            ScoringRule::negative_log_product(3),
        ];
        let mut rng = crate::rng::root_rng(11);
        for rule in &rules {
            for _ in 0..100 {
                let p = fc(&random_interior(&mut rng, 3));
                let x = fc(&random_interior(&mut rng, 3));
                let honest: f64 = (0..3).map(|j| p[j] * rule.score(&p, j).unwrap()).sum();
                let lying: f64 = (0..3).map(|j| p[j] * rule.score(&x, j).unwrap()).sum();
                assert!(honest > lying - 1e-9, "{rule:?} not proper: {honest} < {lying}");
            }
            // Savage consistency: score differences equal exposure differences
            let mut rng2 = crate::rng::root_rng(12);
            let x = fc(&random_interior(&mut rng2, 3));
            let e = rule.exposure(&x).unwrap();
            for j in 0..3 {
                for k in 0..3 {
                    let lhs = rule.score(&x, j).unwrap() - rule.score(&x, k).unwrap();
                    assert!((lhs - (e[j] - e[k])).abs() < 1e-9, "{rule:?}");
                }
            }
        }
    }

    #[test]
    fn binary_properness_identity() {
        for rule in [
            BinaryRule::quadratic(),
            BinaryRule::logarithmic(),
            BinaryRule::spherical(),
            BinaryRule::hs(),
        ] {
            rule.check_proper().unwrap();
        }
    }

    #[test]
    fn extend_linear_gives_log_form() {
        // s(x) = x on (0, 1/2] extends to ln x - x + 1 + ln 2 on [1/2, 1)
        let r = extend_binary_rule(|x| x).unwrap();
        for x in [0.55f64, 0.7, 0.9, 0.99] {
            let want = x.ln() - x + 1.0 + 2f64.ln();
            assert!((r.s(x) - want).abs() < 1e-7, "{x}: {} vs {want}", r.s(x));
        }
        r.check_proper().unwrap();
    }

    #[test]
    fn extend_quadratic_is_self_consistent() {
        let q = BinaryRule::quadratic();
        let r = extend_binary_rule(|x| -2.0 * (1.0 - x) * (1.0 - x)).unwrap();
        for i in 1..20 {
            let x = 0.5 + 0.49 * i as f64 / 20.0;
            assert!((r.s(x) - q.s(x)).abs() < 1e-8, "at {x}");
        }
    }

    #[test]
    fn extend_square_matches_quadrature_oracle() {
        // s_left(x) = x^2; for x > 1/2 the extension satisfies
        // s'(x) = ((1-x)/x) * 2(1-x); oracle integrates it directly.
        let r = extend_binary_rule(|x| x * x).unwrap();
        for i in 1..=10 {
            let x = 0.5 + 0.45 * i as f64 / 10.0;
            let oracle = 0.25
                + integrate(|t| (1.0 - t) / t * 2.0 * (1.0 - t), 0.5, x, 1e-12).unwrap();
            assert!((r.s(x) - oracle).abs() < 1e-6, "at {x}: {} vs {oracle}", r.s(x));
        }
    }

    #[test]
    fn nonmonotone_extension_rejected() {
        assert!(extend_binary_rule(|x| -x).is_err());
    }

    #[test]
    fn custom_rule_validation() {
        // correct pair passes
        let ok = ScoringRule::custom(
            |x| x.iter().map(|p| p * p).sum::<f64>(),
            |x| x.iter().map(|p| 2.0 * p).collect(),
            3,
            Domain::FullSimplex,
        );
        assert!(ok.is_ok());
        // wrong gradient rejected
        let bad = ScoringRule::custom(
            |x| x.iter().map(|p| p * p).sum::<f64>(),
            |x| x.iter().map(|p| 3.0 * p).collect(),
            3,
            Domain::FullSimplex,
        );
        assert!(bad.is_err());
        // concave G rejected
        let bad = ScoringRule::custom(
            |x| -x.iter().map(|p| p * p).sum::<f64>(),
            |x| x.iter().map(|p| -2.0 * p).collect(),
            3,
            Domain::FullSimplex,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn sqrt_jb_half_triangle_inequality() {
        use rand::Rng as _;
        // 1/2-approximate triangle inequality for JB of square and neg-entropy
        let mut rng = crate::rng::root_rng(99);
        for g in [ScalarConvex::square(), ScalarConvex::neg_entropy()] {
            for _ in 0..10_000 {
                let a: f64 = rng.random();
                let b: f64 = rng.random();
                let x: f64 = rng.random();
                let lhs = g.jensen_bregman(a, x) + g.jensen_bregman(x, b);
                let rhs = 0.5 * g.jensen_bregman(a, b);
                assert!(lhs >= rhs - 1e-12, "{}: {lhs} < {rhs}", g.name());
            }
        }
    }

    #[test]
    fn forecast_validation() {
        assert!(Forecast::new(vec![0.5]).is_err());
        assert!(Forecast::new(vec![0.6, 0.6]).is_err());
        assert!(Forecast::new(vec![-0.1, 1.1]).is_err());
        assert!(Forecast::new(vec![0.2, 0.8]).is_ok());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let rule = ScoringRule::quadratic(3);
        assert!(matches!(rule.score(&fc(&[0.5, 0.5]), 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn interior_domain_rejects_boundary() {
        let rule = ScoringRule::hs(2);
        assert!(matches!(rule.score(&fc(&[1.0, 0.0]), 0), Err(Error::Domain(_))));
    }
}
