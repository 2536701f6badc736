//! Finite information structures: joint tables of states with per-expert
//! signals and a value `Y`, conditional expectations as orthogonal
//! projections, substitutes checkers, and a library of named structures.
//!
//! `Y_A` denotes the expectation of `Y` conditioned on the signals of the
//! experts in `A`; `Y_{A->B}` is `B`'s prediction of `A`'s belief,
//! `E[Y_A | signals in B]`. Subsets are bitmasks over experts.

use std::collections::HashMap;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{cholesky, csum, solve_linear, NeumaierSum};
use crate::rng::Rng;
use crate::scoring::ScalarConvex;

/// How the value `Y` is stored: a real number per state, or an outcome
/// index encoded as a standard basis vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YKind {
    Real,
    Categorical(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Yval {
    Real(f64),
    Outcome(usize),
}

#[derive(Debug, Clone)]
pub struct State {
    pub prob: f64,
    /// One label index per expert.
    pub signals: Vec<usize>,
    pub y: Yval,
}

/// A finite table of states: joint probability, per-expert signal labels,
/// and the value `Y`.
#[derive(Debug, Clone)]
pub struct InformationStructure {
    m: usize,
    alphabets: Vec<Vec<String>>,
    states: Vec<State>,
    y_kind: YKind,
}

impl InformationStructure {
    pub fn new(alphabets: Vec<Vec<String>>, states: Vec<State>, y_kind: YKind) -> Result<Self> {
        let m = alphabets.len();
        if m == 0 {
            return Err(Error::Argument("need at least one expert".into()));
        }
        let total: f64 = csum(&states.iter().map(|s| s.prob).collect::<Vec<_>>());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Argument(format!("state probabilities sum to {total}, not 1")));
        }
        let mut seen: Vec<Vec<bool>> = alphabets.iter().map(|a| vec![false; a.len()]).collect();
        for s in &states {
            if s.prob < 0.0 {
                return Err(Error::Argument("negative state probability".into()));
            }
            if s.signals.len() != m {
                return Err(Error::Dimension("state has wrong number of signals".into()));
            }
            for (i, &sig) in s.signals.iter().enumerate() {
                if sig >= alphabets[i].len() {
                    return Err(Error::Argument("signal index out of alphabet".into()));
                }
                if s.prob > 0.0 {
                    seen[i][sig] = true;
                }
            }
            match (&s.y, y_kind) {
                (Yval::Real(v), YKind::Real) => {
                    if !v.is_finite() {
                        return Err(Error::Argument("non-finite Y value".into()));
                    }
                }
                (Yval::Outcome(o), YKind::Categorical(n)) => {
                    if *o >= n {
                        return Err(Error::Argument("outcome index out of range".into()));
                    }
                }
                _ => return Err(Error::Argument("state Y payload does not match y_kind".into())),
            }
        }
        for (i, flags) in seen.iter().enumerate() {
            if flags.iter().any(|f| !f) {
                return Err(Error::Argument(format!(
                    "expert {i} has an alphabet label with zero total probability"
                )));
            }
        }
        Ok(InformationStructure { m, alphabets, states, y_kind })
    }

    pub fn n_experts(&self) -> usize {
        self.m
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn alphabets(&self) -> &[Vec<String>] {
        &self.alphabets
    }

    pub fn y_kind(&self) -> YKind {
        self.y_kind
    }

    /// Dimension of the vector encoding of `Y`.
    pub fn y_dim(&self) -> usize {
        match self.y_kind {
            YKind::Real => 1,
            YKind::Categorical(n) => n,
        }
    }

    /// Vector encoding of `Y` at a state: `[v]` for real, a basis vector
    /// for categorical.
    fn y_vec(&self, s: &State) -> Vec<f64> {
        match (&s.y, self.y_kind) {
            (Yval::Real(v), _) => vec![*v],
            (Yval::Outcome(o), YKind::Categorical(n)) => {
                let mut v = vec![0.0; n];
                v[*o] = 1.0;
                v
            }
            _ => unreachable!("validated at construction"),
        }
    }

    /// Scalar `Y` per state; a type error for categorical structures.
    pub fn y_real(&self) -> Result<Vec<f64>> {
        self.states
            .iter()
            .map(|s| match s.y {
                Yval::Real(v) => Ok(v),
                Yval::Outcome(_) => {
                    Err(Error::Argument("structure has categorical Y, expected real".into()))
                }
            })
            .collect()
    }

    /// Reinterpret an integer-valued real `Y` as a categorical outcome.
    pub fn to_categorical(&self, n_outcomes: usize) -> Result<InformationStructure> {
        let states = self
            .states
            .iter()
            .map(|s| {
                let v = match s.y {
                    Yval::Real(v) => v,
                    Yval::Outcome(o) => o as f64,
                };
                let o = v.round() as usize;
                if (v - o as f64).abs() > 1e-12 || o >= n_outcomes {
                    return Err(Error::Argument(format!(
                        "Y value {v} is not an outcome index below {n_outcomes}"
                    )));
                }
                Ok(State { prob: s.prob, signals: s.signals.clone(), y: Yval::Outcome(o) })
            })
            .collect::<Result<Vec<_>>>()?;
        InformationStructure::new(self.alphabets.clone(), states, YKind::Categorical(n_outcomes))
    }

    /// Per-state value of `Y_A` (vector encoded), i.e. the conditional
    /// expectation of `Y` given the joint signals of `A` (a bitmask).
    pub fn y_subset_per_state(&self, a_mask: u32) -> Vec<Vec<f64>> {
        let dim = self.y_dim();
        let mut agg: HashMap<Vec<usize>, (f64, Vec<f64>)> = HashMap::new();
        for s in &self.states {
            let key = self.key_for(s, a_mask);
            let e = agg.entry(key).or_insert_with(|| (0.0, vec![0.0; dim]));
            e.0 += s.prob;
            let yv = self.y_vec(s);
            for (acc, v) in e.1.iter_mut().zip(&yv) {
                *acc += s.prob * v;
            }
        }
        self.states
            .iter()
            .map(|s| {
                let key = self.key_for(s, a_mask);
                let (p, sums) = &agg[&key];
                if *p > 0.0 {
                    sums.iter().map(|v| v / p).collect()
                } else {
                    // zero-probability conditioning event: value unused
                    vec![f64::NAN; dim]
                }
            })
            .collect()
    }

    fn key_for(&self, s: &State, mask: u32) -> Vec<usize> {
        (0..self.m).filter(|&i| mask >> i & 1 == 1).map(|i| s.signals[i]).collect()
    }

    /// Per-state value of `E[Z | signals in B]` for a per-state scalar `Z`.
    pub(crate) fn condition_scalar(&self, z: &[f64], b_mask: u32) -> Vec<f64> {
        let mut agg: HashMap<Vec<usize>, (f64, f64)> = HashMap::new();
        for (s, &zv) in self.states.iter().zip(z) {
            let key = self.key_for(s, b_mask);
            let e = agg.entry(key).or_insert((0.0, 0.0));
            e.0 += s.prob;
            e.1 += s.prob * zv;
        }
        self.states
            .iter()
            .map(|s| {
                let (p, sum) = agg[&self.key_for(s, b_mask)];
                if p > 0.0 {
                    sum / p
                } else {
                    f64::NAN
                }
            })
            .collect()
    }

    /// Probability-weighted mean of a per-state scalar.
    pub fn mean(&self, z: &[f64]) -> f64 {
        let mut s = NeumaierSum::new();
        for (st, &v) in self.states.iter().zip(z) {
            if st.prob > 0.0 {
                s.add(st.prob * v);
            }
        }
        s.total()
    }
}

// --- JSON schema --------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct StateJson {
    p: f64,
    signals: Vec<String>,
    y: f64,
}

#[derive(Serialize, Deserialize)]
struct StructureJson {
    m: usize,
    alphabets: Vec<Vec<String>>,
    states: Vec<StateJson>,
    y_kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_outcomes: Option<usize>,
}

impl Serialize for InformationStructure {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let (y_kind, n_outcomes) = match self.y_kind {
            YKind::Real => ("real".to_string(), None),
            YKind::Categorical(n) => ("categorical".to_string(), Some(n)),
        };
        let states = self
            .states
            .iter()
            .map(|s| StateJson {
                p: s.prob,
                signals: s
                    .signals
                    .iter()
                    .enumerate()
                    .map(|(i, &sig)| self.alphabets[i][sig].clone())
                    .collect(),
                y: match s.y {
                    Yval::Real(v) => v,
                    Yval::Outcome(o) => o as f64,
                },
            })
            .collect();
        StructureJson { m: self.m, alphabets: self.alphabets.clone(), states, y_kind, n_outcomes }
            .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for InformationStructure {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = StructureJson::deserialize(de)?;
        if raw.alphabets.len() != raw.m {
            return Err(D::Error::custom("alphabets length must equal m"));
        }
        let y_kind = match raw.y_kind.as_str() {
            "real" => YKind::Real,
            "categorical" => YKind::Categorical(
                raw.n_outcomes.ok_or_else(|| D::Error::custom("categorical needs n_outcomes"))?,
            ),
            other => return Err(D::Error::custom(format!("unknown y_kind {other}"))),
        };
        let states = raw
            .states
            .into_iter()
            .map(|s| {
                let signals = s
                    .signals
                    .iter()
                    .enumerate()
                    .map(|(i, lbl)| {
                        raw.alphabets[i]
                            .iter()
                            .position(|a| a == lbl)
                            .ok_or_else(|| D::Error::custom(format!("unknown label {lbl}")))
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let y = match y_kind {
                    YKind::Real => Yval::Real(s.y),
                    YKind::Categorical(_) => Yval::Outcome(s.y.round() as usize),
                };
                Ok(State { prob: s.p, signals, y })
            })
            .collect::<std::result::Result<Vec<_>, D::Error>>()?;
        InformationStructure::new(raw.alphabets, states, y_kind)
            .map_err(|e| D::Error::custom(e.to_string()))
    }
}

// --- Conditional tables --------------------------------------------------

/// `E[Y | joint signals of A]`, tabulated over the positive-probability
/// joint signal tuples of `A`.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionalTable {
    /// The conditioning subset, as expert indices in increasing order.
    pub experts: Vec<usize>,
    pub entries: Vec<ConditionalEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionalEntry {
    /// Signal labels for the experts in `experts`, in the same order.
    pub signals: Vec<String>,
    pub prob: f64,
    /// `E[Y | tuple]`: length 1 for real `Y`, `n_outcomes` for categorical.
    pub value: Vec<f64>,
}

impl ConditionalTable {
    pub fn lookup(&self, signals: &[&str]) -> Option<&ConditionalEntry> {
        self.entries.iter().find(|e| {
            e.signals.len() == signals.len()
                && e.signals.iter().zip(signals).all(|(a, b)| a == b)
        })
    }
}

fn mask_of(experts: &[usize]) -> u32 {
    experts.iter().fold(0u32, |m, &i| m | 1 << i)
}

fn tabulate(
    structure: &InformationStructure,
    per_state: &[Vec<f64>],
    experts_sorted: &[usize],
) -> ConditionalTable {
    let mask = mask_of(experts_sorted);
    let dim = per_state.first().map(|v| v.len()).unwrap_or(0);
    let mut agg: HashMap<Vec<usize>, (f64, Vec<f64>)> = HashMap::new();
    let mut order: Vec<Vec<usize>> = Vec::new();
    for (s, val) in structure.states.iter().zip(per_state) {
        if s.prob == 0.0 {
            continue;
        }
        let key = structure.key_for(s, mask);
        if !agg.contains_key(&key) {
            order.push(key.clone());
        }
        let e = agg.entry(key).or_insert_with(|| (0.0, vec![0.0; dim]));
        e.0 += s.prob;
        for (acc, v) in e.1.iter_mut().zip(val) {
            *acc += s.prob * v;
        }
    }
    let entries = order
        .into_iter()
        .map(|key| {
            let (p, sums) = &agg[&key];
            ConditionalEntry {
                signals: key
                    .iter()
                    .zip(experts_sorted)
                    .map(|(&sig, &i)| structure.alphabets[i][sig].clone())
                    .collect(),
                prob: *p,
                value: sums.iter().map(|v| v / p).collect(),
            }
        })
        .collect();
    ConditionalTable { experts: experts_sorted.to_vec(), entries }
}

/// Exact conditional expectation `E[Y | signals in A]`.
pub fn conditional_expectation(
    structure: &InformationStructure,
    experts: &[usize],
) -> Result<ConditionalTable> {
    for &i in experts {
        if i >= structure.m {
            return Err(Error::Argument(format!("expert {i} out of range")));
        }
    }
    let mut sorted: Vec<usize> = experts.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let per_state: Vec<Vec<f64>> =
        structure.states.iter().map(|s| structure.y_vec(s)).collect();
    Ok(tabulate(structure, &per_state, &sorted))
}

/// `B`'s prediction of `A`'s belief: `Y_{A->B} = E[Y_A | signals in B]`,
/// tabulated over `B`'s joint signals.
pub fn prediction_of_belief(
    structure: &InformationStructure,
    a: &[usize],
    b: &[usize],
) -> Result<ConditionalTable> {
    for &i in a.iter().chain(b) {
        if i >= structure.m {
            return Err(Error::Argument(format!("expert {i} out of range")));
        }
    }
    let mut sorted_b: Vec<usize> = b.to_vec();
    sorted_b.sort_unstable();
    sorted_b.dedup();
    let y_a = structure.y_subset_per_state(mask_of(a));
    Ok(tabulate(structure, &y_a, &sorted_b))
}

// --- Substitutes checkers -------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubstitutesKind {
    Weak,
    Projective,
    Rectangle,
    RectangleDelta,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubstitutesVerdict {
    pub kind: SubstitutesKind,
    pub holds: bool,
    /// Most-violating margin; negative means a violation.
    pub worst_slack: f64,
    pub witness: Option<SubstitutesWitness>,
    /// Cleared when the verdict came from sampling rather than enumeration.
    pub exhaustive: bool,
}

#[derive(Debug, Clone, Serialize)]
pub enum SubstitutesWitness {
    Subsets { a: Vec<usize>, b: Vec<usize>, i: usize },
    Rectangle { s: Vec<String>, t: Vec<String> },
}

fn subset_vec(mask: u32, m: usize) -> Vec<usize> {
    (0..m).filter(|&i| mask >> i & 1 == 1).collect()
}

/// Expected Bregman gain of adding expert `i` to subset `s_mask`:
/// `E[D_G(Y_{S+i} || Y_S)]` for scalar real `Y`.
fn marginal_value(
    structure: &InformationStructure,
    tables: &mut HashMap<u32, Vec<f64>>,
    s_mask: u32,
    i: usize,
    g: &ScalarConvex,
) -> f64 {
    let with = s_mask | 1 << i;
    for mask in [s_mask, with] {
        tables.entry(mask).or_insert_with(|| {
            structure.y_subset_per_state(mask).into_iter().map(|v| v[0]).collect()
        });
    }
    let y_s = &tables[&s_mask];
    let y_si = &tables[&with];
    let mut acc = NeumaierSum::new();
    for ((st, &a), &b) in structure.states.iter().zip(y_si).zip(y_s) {
        if st.prob > 0.0 {
            acc.add(st.prob * g.bregman(a, b));
        }
    }
    acc.total()
}

/// Weak informational substitutes: for all `B` contained in `A` and `i`
/// outside `A`, the marginal value of `i` at `A` is at most its marginal
/// value at `B`. Default `G` is squared error.
pub fn check_weak_substitutes(
    structure: &InformationStructure,
    g: Option<&ScalarConvex>,
) -> Result<SubstitutesVerdict> {
    let m = structure.m;
    if m > 20 {
        return Err(Error::Argument("weak substitutes enumeration capped at m = 20".into()));
    }
    structure.y_real()?;
    let square = ScalarConvex::square();
    let g = g.unwrap_or(&square);
    let mut tables: HashMap<u32, Vec<f64>> = HashMap::new();
    let full: u32 = (1 << m) - 1;
    let mut val: HashMap<(u32, usize), f64> = HashMap::new();
    for mask in 0..=full {
        for i in 0..m {
            if mask >> i & 1 == 0 {
                val.insert((mask, i), marginal_value(structure, &mut tables, mask, i, g));
            }
        }
    }
    let mut worst = f64::INFINITY;
    let mut witness = None;
    for a in 0..=full {
        for i in 0..m {
            if a >> i & 1 == 1 {
                continue;
            }
            let va = val[&(a, i)];
            // enumerate submasks of a
            let mut b = a;
            loop {
                let slack = val[&(b, i)] - va;
                if slack < worst {
                    worst = slack;
                    witness = Some(SubstitutesWitness::Subsets {
                        a: subset_vec(a, m),
                        b: subset_vec(b, m),
                        i,
                    });
                }
                if b == 0 {
                    break;
                }
                b = (b - 1) & a;
            }
        }
    }
    Ok(SubstitutesVerdict {
        kind: SubstitutesKind::Weak,
        holds: worst >= -1e-10,
        worst_slack: worst,
        witness,
        exhaustive: true,
    })
}

/// Slack of the projective-substitutes inequality at `(A, B, i)`:
/// `E[(Y_A - Y_{A->B})^2] - E[(Y_{A+i} - Y_{A+i -> B+i})^2]`.
pub fn projective_slack(
    structure: &InformationStructure,
    a: &[usize],
    b: &[usize],
    i: usize,
) -> Result<f64> {
    structure.y_real()?;
    Ok(projective_slack_masks(structure, mask_of(a), mask_of(b), i))
}

fn projection_error(structure: &InformationStructure, a_mask: u32, b_mask: u32) -> f64 {
    let y_a: Vec<f64> = structure.y_subset_per_state(a_mask).into_iter().map(|v| v[0]).collect();
    let y_ab = structure.condition_scalar(&y_a, b_mask);
    let mut acc = NeumaierSum::new();
    for ((st, &ya), &yab) in structure.states.iter().zip(&y_a).zip(&y_ab) {
        if st.prob > 0.0 {
            acc.add(st.prob * (ya - yab) * (ya - yab));
        }
    }
    acc.total()
}

fn projective_slack_masks(
    structure: &InformationStructure,
    a_mask: u32,
    b_mask: u32,
    i: usize,
) -> f64 {
    let lhs = projection_error(structure, a_mask, b_mask);
    let rhs = projection_error(structure, a_mask | 1 << i, b_mask | 1 << i);
    lhs - rhs
}

/// Projective substitutes: adding a signal can only shrink any team's
/// prediction error about any coalition's belief. Checked for all `A`, `B`
/// and `i` in `B` (an equivalent restriction).
pub fn check_projective_substitutes(
    structure: &InformationStructure,
) -> Result<SubstitutesVerdict> {
    let m = structure.m;
    if m > 12 {
        return Err(Error::Argument("projective enumeration capped at m = 12".into()));
    }
    structure.y_real()?;
    let full: u32 = (1 << m) - 1;
    let mut worst = f64::INFINITY;
    let mut witness = None;
    for a in 0..=full {
        for b in 0..=full {
            for i in 0..m {
                if b >> i & 1 == 0 {
                    continue;
                }
                let slack = projective_slack_masks(structure, a, b, i);
                if slack < worst {
                    worst = slack;
                    witness = Some(SubstitutesWitness::Subsets {
                        a: subset_vec(a, m),
                        b: subset_vec(b, m),
                        i,
                    });
                }
            }
        }
    }
    Ok(SubstitutesVerdict {
        kind: SubstitutesKind::Projective,
        holds: worst >= -1e-10,
        worst_slack: worst,
        witness,
        exhaustive: true,
    })
}

/// Two-expert signal grid: cell probabilities and conditional means.
pub(crate) struct Grid {
    pub ns: usize,
    pub nt: usize,
    /// row-major `ns x nt`
    pub prob: Vec<f64>,
    pub mean: Vec<f64>,
}

impl Grid {
    pub fn from_structure(structure: &InformationStructure) -> Result<Grid> {
        if structure.m != 2 {
            return Err(Error::Unsupported("rectangle machinery is a two-expert notion".into()));
        }
        let y = structure.y_real()?;
        let ns = structure.alphabets[0].len();
        let nt = structure.alphabets[1].len();
        let mut prob = vec![0.0; ns * nt];
        let mut wsum = vec![0.0; ns * nt];
        for (st, &yv) in structure.states.iter().zip(&y) {
            let c = st.signals[0] * nt + st.signals[1];
            prob[c] += st.prob;
            wsum[c] += st.prob * yv;
        }
        let mean = prob
            .iter()
            .zip(&wsum)
            .map(|(&p, &s)| if p > 0.0 { s / p } else { f64::NAN })
            .collect();
        Ok(Grid { ns, nt, prob, mean })
    }

    pub fn cell(&self, i: usize, j: usize) -> (f64, f64) {
        (self.prob[i * self.nt + j], self.mean[i * self.nt + j])
    }

    /// `(P(S x T), mu_ST)` over a rectangle given as index sets.
    pub fn mu_rect(&self, s: &[usize], t: &[usize]) -> (f64, f64) {
        let mut p = 0.0;
        let mut acc = 0.0;
        for &i in s {
            for &j in t {
                let (pc, mc) = self.cell(i, j);
                if pc > 0.0 {
                    p += pc;
                    acc += pc * mc;
                }
            }
        }
        (p, if p > 0.0 { acc / p } else { f64::NAN })
    }

    /// `mu_{sigma T}` for a fixed row over columns `t`.
    pub fn mu_row(&self, i: usize, t: &[usize]) -> (f64, f64) {
        let mut p = 0.0;
        let mut acc = 0.0;
        for &j in t {
            let (pc, mc) = self.cell(i, j);
            if pc > 0.0 {
                p += pc;
                acc += pc * mc;
            }
        }
        (p, if p > 0.0 { acc / p } else { f64::NAN })
    }

    pub fn mu_col(&self, j: usize, s: &[usize]) -> (f64, f64) {
        let mut p = 0.0;
        let mut acc = 0.0;
        for &i in s {
            let (pc, mc) = self.cell(i, j);
            if pc > 0.0 {
                p += pc;
                acc += pc * mc;
            }
        }
        (p, if p > 0.0 { acc / p } else { f64::NAN })
    }

    /// Rectangle-substitutes slack on `S x T`:
    /// `E[D(mu_{sigma T} || mu_ST) | S,T] - E[D(mu_{sigma tau} || mu_{S tau}) | S,T]`.
    pub fn rectangle_slack(&self, s: &[usize], t: &[usize], g: &ScalarConvex) -> Option<f64> {
        let (p_rect, mu_st) = self.mu_rect(s, t);
        if p_rect <= 0.0 {
            return None;
        }
        let mut lhs = 0.0; // Charlie's error about Alice
        let mut rhs = 0.0; // Bob's error about the truth
        for &i in s {
            let (p_row, mu_it) = self.mu_row(i, t);
            if p_row > 0.0 {
                lhs += p_row / p_rect * g.bregman(mu_it, mu_st);
            }
        }
        for &j in t {
            let (p_col, mu_sj) = self.mu_col(j, s);
            if p_col <= 0.0 {
                continue;
            }
            for &i in s {
                let (pc, mu_ij) = self.cell(i, j);
                if pc > 0.0 {
                    rhs += pc / p_rect * g.bregman(mu_ij, mu_sj);
                }
            }
        }
        Some(lhs - rhs)
    }
}

fn nonempty_subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (1u32..(1 << n)).map(move |mask| (0..n).filter(|&i| mask >> i & 1 == 1).collect())
}

/// Rectangle substitutes for two-expert structures. With `delta_mode =
/// None`, exhaustively checks every positive-probability sub-rectangle
/// (alphabets capped at 12 labels each). With `Some((partitions, seed))`,
/// samples rectangle partitions and reports the worst partition-averaged
/// slack; a violating sample is still a valid counterexample, but absence
/// of one is only a lower bound on the true approximation constant.
pub fn check_rectangle_substitutes(
    structure: &InformationStructure,
    g: Option<&ScalarConvex>,
    delta_mode: Option<(usize, u64)>,
) -> Result<SubstitutesVerdict> {
    let grid = Grid::from_structure(structure)?;
    let square = ScalarConvex::square();
    let g = g.unwrap_or(&square);
    match delta_mode {
        None => {
            if grid.ns > 12 || grid.nt > 12 {
                return Err(Error::Argument(
                    "exhaustive rectangle enumeration capped at 12 labels per expert".into(),
                ));
            }
            let mut worst = f64::INFINITY;
            let mut witness = None;
            for s in nonempty_subsets(grid.ns) {
                for t in nonempty_subsets(grid.nt) {
                    if let Some(slack) = grid.rectangle_slack(&s, &t, g) {
                        if slack < worst {
                            worst = slack;
                            witness = Some(SubstitutesWitness::Rectangle {
                                s: s.iter().map(|&i| structure.alphabets[0][i].clone()).collect(),
                                t: t.iter().map(|&j| structure.alphabets[1][j].clone()).collect(),
                            });
                        }
                    }
                }
            }
            Ok(SubstitutesVerdict {
                kind: SubstitutesKind::Rectangle,
                holds: worst >= -1e-10,
                worst_slack: worst,
                witness,
                exhaustive: true,
            })
        }
        Some((partitions, seed)) => {
            let mut rng = crate::rng::root_rng(seed);
            let mut worst = f64::INFINITY;
            let mut witness = None;
            for _ in 0..partitions.max(1) {
                let parts = random_rectangle_partition(&mut rng, grid.ns, grid.nt);
                // partition-averaged slack, each rectangle weighted by its
                // probability
                let mut avg = 0.0;
                for (s, t) in &parts {
                    if let Some(slack) = grid.rectangle_slack(s, t, g) {
                        let (p, _) = grid.mu_rect(s, t);
                        avg += p * slack;
                    }
                }
                if avg < worst {
                    worst = avg;
                    let (s, t) = &parts[0];
                    witness = Some(SubstitutesWitness::Rectangle {
                        s: s.iter().map(|&i| structure.alphabets[0][i].clone()).collect(),
                        t: t.iter().map(|&j| structure.alphabets[1][j].clone()).collect(),
                    });
                }
            }
            Ok(SubstitutesVerdict {
                kind: SubstitutesKind::RectangleDelta,
                holds: worst >= -1e-10,
                worst_slack: worst,
                witness,
                exhaustive: false,
            })
        }
    }
}

/// A random partition of the full signal grid into rectangles, generated by
/// recursive splits (the shape a communication protocol can induce).
fn random_rectangle_partition(rng: &mut Rng, ns: usize, nt: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut parts: Vec<(Vec<usize>, Vec<usize>)> = vec![((0..ns).collect(), (0..nt).collect())];
    let splits = rng.random_range(0..=(ns + nt));
    for _ in 0..splits {
        let idx = rng.random_range(0..parts.len());
        let (s, t) = parts[idx].clone();
        let split_rows = rng.random::<bool>();
        if split_rows && s.len() > 1 {
            let cut = rng.random_range(1..s.len());
            let mut rows = s.clone();
            let rot = rng.random_range(0..rows.len());
            rows.rotate_left(rot);
            let (left, right) = rows.split_at(cut);
            parts[idx] = (left.to_vec(), t.clone());
            parts.push((right.to_vec(), t));
        } else if !split_rows && t.len() > 1 {
            let cut = rng.random_range(1..t.len());
            let mut cols = t.clone();
            let rot = rng.random_range(0..cols.len());
            cols.rotate_left(rot);
            let (left, right) = cols.split_at(cut);
            parts[idx] = (s.clone(), left.to_vec());
            parts.push((s, right.to_vec()));
        }
    }
    parts
}

// --- Random structure generators -------------------------------------------

/// Random finite structure: independent random cell probabilities and
/// `Y` values uniform in [0, 1], with the given alphabet sizes.
pub fn random_table_structure(rng: &mut Rng, sizes: &[usize]) -> InformationStructure {
    let alphabets: Vec<Vec<String>> =
        sizes.iter().map(|&k| (0..k).map(|i| i.to_string()).collect()).collect();
    loop {
        let mut combos: Vec<Vec<usize>> = vec![vec![]];
        for &k in sizes {
            let mut next = Vec::new();
            for c in &combos {
                for s in 0..k {
                    let mut nc = c.clone();
                    nc.push(s);
                    next.push(nc);
                }
            }
            combos = next;
        }
        let raw: Vec<f64> = combos.iter().map(|_| -(rng.random::<f64>().ln())).collect();
        let z = csum(&raw);
        let states: Vec<State> = combos
            .iter()
            .zip(&raw)
            .map(|(c, w)| State { prob: w / z, signals: c.clone(), y: Yval::Real(rng.random()) })
            .collect();
        if let Ok(s) = InformationStructure::new(alphabets.clone(), states, YKind::Real) {
            return s;
        }
    }
}

/// Random finite-support PIF structure: each subset component takes 2-4
/// values in [-1, 1] with random probabilities.
pub fn random_finite_pif(rng: &mut Rng, m: usize) -> InformationStructure {
    let mut components = Vec::new();
    let full: u32 = (1 << m) - 1;
    for mask in 1..=full {
        if rng.random::<f64>() < 0.5 {
            continue;
        }
        let members: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).collect();
        let k = rng.random_range(2..=4usize);
        let raw: Vec<f64> = (0..k).map(|_| -(rng.random::<f64>().ln())).collect();
        let z = csum(&raw);
        let atoms: Vec<(f64, f64)> =
            raw.iter().map(|w| (rng.random::<f64>() * 2.0 - 1.0, w / z)).collect();
        components.push((members, atoms));
    }
    if components.is_empty() {
        components.push((vec![0], vec![(0.5, 0.5), (-0.5, 0.5)]));
    }
    pif_finite_structure(m, &components).expect("valid by construction")
}

/// Rejection-sample a two-expert structure passing the exhaustive
/// rectangle-substitutes check; alternates perturbed grids with raw random
/// tables for variety.
pub fn sample_rectangle_substitutes(rng: &mut Rng) -> InformationStructure {
    loop {
        let candidate = if rng.random::<bool>() {
            let n = rng.random_range(2..=3usize);
            let eps = rng.random_range(0.005..0.3);
            substitutes_grid(n, eps).expect("valid parameters")
        } else {
            let sizes = [rng.random_range(2..=3usize), rng.random_range(2..=3usize)];
            random_table_structure(rng, &sizes)
        };
        if check_rectangle_substitutes(&candidate, None, None)
            .map(|v| v.holds)
            .unwrap_or(false)
        {
            return candidate;
        }
    }
}

// --- Library structures ----------------------------------------------------

/// Independent random bits with `Y` their XOR: the canonical informational
/// complements.
pub fn xor_structure() -> InformationStructure {
    let alphabets = vec![vec!["0".into(), "1".into()], vec!["0".into(), "1".into()]];
    let states = (0..4)
        .map(|k| {
            let s1 = k / 2;
            let s2 = k % 2;
            State {
                prob: 0.25,
                signals: vec![s1, s2],
                y: Yval::Real(if s1 != s2 { 1.0 } else { 0.0 }),
            }
        })
        .collect();
    InformationStructure::new(alphabets, states, YKind::Real).unwrap()
}

/// A coin of bias 1/3 or 2/3 (equally likely); the two experts see
/// different independent flips. `Y` is the bias.
pub fn coin_independent() -> InformationStructure {
    let alphabets = vec![vec!["H".into(), "T".into()], vec!["H".into(), "T".into()]];
    let mut states = Vec::new();
    for &bias in &[1.0 / 3.0, 2.0 / 3.0] {
        for s1 in 0..2usize {
            for s2 in 0..2usize {
                let p1 = if s1 == 0 { bias } else { 1.0 - bias };
                let p2 = if s2 == 0 { bias } else { 1.0 - bias };
                states.push(State {
                    prob: 0.5 * p1 * p2,
                    signals: vec![s1, s2],
                    y: Yval::Real(bias),
                });
            }
        }
    }
    InformationStructure::new(alphabets, states, YKind::Real).unwrap()
}

/// Same coin, but both experts see the same flip.
pub fn coin_shared() -> InformationStructure {
    let alphabets = vec![vec!["H".into(), "T".into()], vec!["H".into(), "T".into()]];
    let mut states = Vec::new();
    for &bias in &[1.0 / 3.0, 2.0 / 3.0] {
        for s in 0..2usize {
            let p = if s == 0 { bias } else { 1.0 - bias };
            states.push(State { prob: 0.5 * p, signals: vec![s, s], y: Yval::Real(bias) });
        }
    }
    InformationStructure::new(alphabets, states, YKind::Real).unwrap()
}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Shamir secret sharing over `F_p`: a threshold `r` uniform in `[1, m]` is
/// announced, a random degree-`(r-1)` polynomial with constant term +-1 is
/// drawn, and expert `i` learns `P(i)`. `Y` is the constant term. Any
/// coalition's informational value is `|A|/m`, so weak substitutes holds
/// with equality, but projective substitutes fails.
pub fn secret_sharing(m: usize, prime: u64) -> Result<InformationStructure> {
    if m < 2 {
        return Err(Error::Argument("secret sharing needs m >= 2".into()));
    }
    if !is_prime(prime) || prime <= m as u64 {
        return Err(Error::Argument(format!("need a prime > m, got {prime} with m = {m}")));
    }
    if prime > 13 {
        return Err(Error::Argument("exact enumeration supports primes <= 13".into()));
    }
    let label = |r: usize, v: u64| format!("r{r}v{v}");
    let mut labels = Vec::new();
    for r in 1..=m {
        for v in 0..prime {
            labels.push(label(r, v));
        }
    }
    let label_index = |r: usize, v: u64| (r - 1) * prime as usize + v as usize;

    let mut states = Vec::new();
    for r in 1..=m {
        let n_polys = prime.pow((r - 1) as u32);
        let base_prob = 1.0 / (m as f64 * 2.0 * n_polys as f64);
        for &a0_sign in &[1i64, -1i64] {
            let a0 = if a0_sign == 1 { 1u64 } else { prime - 1 };
            for code in 0..n_polys {
                let mut coeffs = vec![a0];
                let mut c = code;
                for _ in 1..r {
                    coeffs.push(c % prime);
                    c /= prime;
                }
                let eval = |x: u64| -> u64 {
                    let mut acc = 0u64;
                    let mut pow = 1u64;
                    for &co in &coeffs {
                        acc = (acc + co * pow) % prime;
                        pow = pow * x % prime;
                    }
                    acc
                };
                let signals: Vec<usize> =
                    (1..=m as u64).map(|i| label_index(r, eval(i))).collect();
                states.push(State { prob: base_prob, signals, y: Yval::Real(a0_sign as f64) });
            }
        }
    }
    // drop labels that never occur (r = 1 only produces the values +-1)
    let mut used = vec![vec![false; labels.len()]; m];
    for s in &states {
        for (i, &sig) in s.signals.iter().enumerate() {
            used[i][sig] = true;
        }
    }
    let remap: Vec<Vec<Option<usize>>> = used
        .iter()
        .map(|u| {
            let mut next = 0;
            u.iter()
                .map(|&f| {
                    if f {
                        next += 1;
                        Some(next - 1)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let new_alphabets: Vec<Vec<String>> = used
        .iter()
        .map(|u| labels.iter().zip(u).filter(|(_, &f)| f).map(|(l, _)| l.clone()).collect())
        .collect();
    let new_states = states
        .into_iter()
        .map(|mut s| {
            for (i, sig) in s.signals.iter_mut().enumerate() {
                *sig = remap[i][*sig].unwrap();
            }
            s
        })
        .collect();
    InformationStructure::new(new_alphabets, new_states, YKind::Real)
}

/// The 2x2 worked example with `Y` values 0/1/1/2 and probabilities
/// 0.3/0.2/0.2/0.3; satisfies projective substitutes.
pub fn worked_2x2() -> InformationStructure {
    let alphabets = vec![vec!["w".into(), "x".into()], vec!["y".into(), "z".into()]];
    let states = vec![
        State { prob: 0.3, signals: vec![0, 0], y: Yval::Real(0.0) },
        State { prob: 0.2, signals: vec![0, 1], y: Yval::Real(1.0) },
        State { prob: 0.2, signals: vec![1, 0], y: Yval::Real(1.0) },
        State { prob: 0.3, signals: vec![1, 1], y: Yval::Real(2.0) },
    ];
    InformationStructure::new(alphabets, states, YKind::Real).unwrap()
}

fn symmetric_pair(p: f64, x: f64) -> InformationStructure {
    let u = (1.0 - (1.0 - 2.0 * p) * x) / (2.0 * p);
    let v = (-1.0 - (1.0 - 2.0 * p) * x) / (2.0 * p);
    let alphabets = vec![vec!["+1".into(), "-1".into()], vec!["+1".into(), "-1".into()]];
    let states = vec![
        State { prob: p, signals: vec![0, 0], y: Yval::Real(u) },
        State { prob: 0.5 - p, signals: vec![0, 1], y: Yval::Real(x) },
        State { prob: 0.5 - p, signals: vec![1, 0], y: Yval::Real(x) },
        State { prob: p, signals: vec![1, 1], y: Yval::Real(v) },
    ];
    InformationStructure::new(alphabets, states, YKind::Real).unwrap()
}

/// The two-expert pair showing the prior-free averaging bound is tight:
/// `p = 1 - sqrt(7)/4`, `x = +-(sqrt(14) - 2 sqrt(2))`.
pub fn thm73_structure(positive: bool) -> InformationStructure {
    let p = 1.0 - 7f64.sqrt() / 4.0;
    let x = 14f64.sqrt() - 2.0 * 2f64.sqrt();
    symmetric_pair(p, if positive { x } else { -x })
}

/// The two-expert pair showing the known-prior extremization bound is
/// tight: `p = (2 + sqrt(7))/12` and `x = sqrt(16 p^2 - 1)`, which makes
/// the key substitutes inequality hold with equality.
pub fn thm75_structure(positive: bool) -> InformationStructure {
    let p = (2.0 + 7f64.sqrt()) / 12.0;
    let x = (16.0 * p * p - 1.0).sqrt();
    symmetric_pair(p, if positive { x } else { -x })
}

/// The generator of rectangle-substitutes structures: `y(i,j) = (i+j)/(2n)`
/// with cell probabilities proportional to `eps^sqrt(i+j)`.
pub fn substitutes_grid(n: usize, eps: f64) -> Result<InformationStructure> {
    if n < 2 {
        return Err(Error::Argument("grid needs n >= 2".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Argument("eps must lie in (0, 1)".into()));
    }
    let labels: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let mut weights = Vec::new();
    for i in 0..n {
        for j in 0..n {
            weights.push(eps.powf(((i + j) as f64).sqrt()));
        }
    }
    let z = csum(&weights);
    let mut states = Vec::new();
    for i in 0..n {
        for j in 0..n {
            states.push(State {
                prob: weights[i * n + j] / z,
                signals: vec![i, j],
                y: Yval::Real((i + j) as f64 / (2 * n) as f64),
            });
        }
    }
    InformationStructure::new(vec![labels.clone(), labels], states, YKind::Real)
}

/// Library lookup by name.
pub fn library_structure(name: &str, params: &[f64]) -> Result<InformationStructure> {
    match name {
        "xor" => Ok(xor_structure()),
        "coin_independent" => Ok(coin_independent()),
        "coin_shared" => Ok(coin_shared()),
        "worked_2x2" => Ok(worked_2x2()),
        "secret_sharing" => {
            if params.len() != 2 {
                return Err(Error::Argument("secret_sharing needs (m, prime)".into()));
            }
            secret_sharing(params[0] as usize, params[1] as u64)
        }
        "thm73_plus" => Ok(thm73_structure(true)),
        "thm73_minus" => Ok(thm73_structure(false)),
        "thm75_plus" => Ok(thm75_structure(true)),
        "thm75_minus" => Ok(thm75_structure(false)),
        "substitutes_grid" => {
            if params.len() != 2 {
                return Err(Error::Argument("substitutes_grid needs (n, eps)".into()));
            }
            substitutes_grid(params[0] as usize, params[1])
        }
        other => Err(Error::Argument(format!("unknown structure {other}"))),
    }
}

// --- Partial information framework (Gaussian samplers) ---------------------

/// One additive evidence component: known to the experts in `members`,
/// normal with the given mean and standard deviation (zero deviation makes
/// it deterministic).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PifComponent {
    pub members: Vec<usize>,
    pub mean: f64,
    pub std: f64,
}

/// `Y = sum_S X_S` where each `X_S` is independent and known exactly to the
/// experts in `S`; expert `i`'s estimate adds the means of the unseen
/// components.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PifSpec {
    pub m: usize,
    pub components: Vec<PifComponent>,
}

impl PifSpec {
    pub fn validate(&self) -> Result<()> {
        for c in &self.components {
            if c.std < 0.0 {
                return Err(Error::Argument("negative standard deviation".into()));
            }
            if c.members.iter().any(|&i| i >= self.m) {
                return Err(Error::Argument("component member out of range".into()));
            }
        }
        Ok(())
    }

    /// Unit-variance singleton components plus a unit-variance grand
    /// component: the structure where no aggregate beats `4m/(m+1)^2`.
    pub fn shared_plus_private(m: usize) -> PifSpec {
        let mut components: Vec<PifComponent> =
            (0..m).map(|i| PifComponent { members: vec![i], mean: 0.0, std: 1.0 }).collect();
        components.push(PifComponent { members: (0..m).collect(), mean: 0.0, std: 1.0 });
        PifSpec { m, components }
    }

    /// Unit-variance singletons plus a deterministic grand component `m*mu`:
    /// averaging achieves exactly `2/m - 1/m^2`; extremizing by a factor of
    /// `m` recovers `Y` exactly.
    pub fn deterministic_shared(m: usize, mu: f64) -> PifSpec {
        let mut components: Vec<PifComponent> =
            (0..m).map(|i| PifComponent { members: vec![i], mean: 0.0, std: 1.0 }).collect();
        components.push(PifComponent { members: (0..m).collect(), mean: m as f64 * mu, std: 0.0 });
        PifSpec { m, components }
    }

    /// Draw `(Y, estimates)` from the structure.
    pub fn sample(&self, rng: &mut Rng) -> (f64, Vec<f64>) {
        let mut y = 0.0;
        let mut est = vec![0.0; self.m];
        for c in &self.components {
            let x =
                c.mean + c.std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
            y += x;
            for (i, e) in est.iter_mut().enumerate() {
                if c.members.contains(&i) {
                    *e += x;
                } else {
                    *e += c.mean;
                }
            }
        }
        (y, est)
    }

    pub fn prior_mean(&self) -> f64 {
        self.components.iter().map(|c| c.mean).sum()
    }
}

/// A finite-support PIF structure: each component takes finitely many
/// values; the product of supports becomes an exact state table.
pub fn pif_finite_structure(
    m: usize,
    components: &[(Vec<usize>, Vec<(f64, f64)>)],
) -> Result<InformationStructure> {
    for (members, atoms) in components {
        if members.iter().any(|&i| i >= m) {
            return Err(Error::Argument("component member out of range".into()));
        }
        let total: f64 = atoms.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Argument("component atom probabilities must sum to 1".into()));
        }
    }
    let mut combos: Vec<(f64, Vec<f64>)> = vec![(1.0, vec![])];
    for (_, atoms) in components {
        let mut next = Vec::with_capacity(combos.len() * atoms.len());
        for (p, vals) in &combos {
            for &(v, ap) in atoms {
                let mut nv = vals.clone();
                nv.push(v);
                next.push((p * ap, nv));
            }
        }
        combos = next;
    }
    // expert i's signal is the tuple of values of the components it sees
    let mut label_sets: Vec<Vec<String>> = vec![Vec::new(); m];
    let mut states = Vec::new();
    for (p, vals) in combos {
        let y: f64 = vals.iter().sum();
        let mut signals = Vec::with_capacity(m);
        for i in 0..m {
            let tuple: Vec<String> = components
                .iter()
                .zip(&vals)
                .filter(|((members, _), _)| members.contains(&i))
                .map(|(_, v)| format!("{v:.9}"))
                .collect();
            let lbl = tuple.join("|");
            let idx = match label_sets[i].iter().position(|l| *l == lbl) {
                Some(idx) => idx,
                None => {
                    label_sets[i].push(lbl);
                    label_sets[i].len() - 1
                }
            };
            signals.push(idx);
        }
        states.push(State { prob: p, signals, y: Yval::Real(y) });
    }
    InformationStructure::new(label_sets, states, YKind::Real)
}

// --- Gaussian mixture structures --------------------------------------------

/// `Y` uniform on {0,1}; signals normal with mean `+-mu` and covariance
/// `Sigma`. The Bayes-optimal aggregate is a generalized logarithmic pool.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    mu: Vec<f64>,
    sigma: Vec<f64>,
    chol: Vec<f64>,
    sigma_inv_mu: Vec<f64>,
    m: usize,
}

#[derive(Debug, Clone)]
pub struct MixtureDraw {
    pub y: usize,
    pub taus: Vec<f64>,
    /// Each expert's posterior probability of `Y = 1`.
    pub posteriors: Vec<f64>,
    /// Log-odds of the Bayes-optimal aggregate `2 tau' Sigma^-1 mu`.
    pub optimal_log_odds: f64,
}

impl GaussianMixture {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let m = mu.len();
        if sigma.len() != m * m {
            return Err(Error::Dimension("covariance must be m x m".into()));
        }
        for i in 0..m {
            for j in 0..m {
                if (sigma[i * m + j] - sigma[j * m + i]).abs() > 1e-12 {
                    return Err(Error::Argument("covariance must be symmetric".into()));
                }
            }
        }
        let chol = cholesky(&sigma, m)?;
        let mut a = sigma.clone();
        let sigma_inv_mu = solve_linear(&mut a, &mut mu.clone(), m)?;
        Ok(GaussianMixture { mu, sigma, chol, sigma_inv_mu, m })
    }

    pub fn n_experts(&self) -> usize {
        self.m
    }

    /// Per-expert posterior log-odds coefficient: `2 mu_i / sigma_i^2`.
    pub fn expert_coefficient(&self, i: usize) -> f64 {
        2.0 * self.mu[i] / self.sigma[i * self.m + i]
    }

    /// Generalized-log-pool weights that reproduce the optimal aggregate:
    /// `w_i = (sigma_i^2 / mu_i) (Sigma^-1 mu)_i`.
    pub fn optimal_weights(&self) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                if self.mu[i] == 0.0 {
                    0.0
                } else {
                    self.sigma[i * self.m + i] / self.mu[i] * self.sigma_inv_mu[i]
                }
            })
            .collect()
    }

    pub fn sample(&self, rng: &mut Rng) -> MixtureDraw {
        let y = usize::from(rng.random::<f64>() < 0.5);
        let sign = if y == 1 { 1.0 } else { -1.0 };
        let z: Vec<f64> = (0..self.m)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        let mut taus = vec![0.0; self.m];
        for i in 0..self.m {
            let mut v = sign * self.mu[i];
            for j in 0..=i {
                v += self.chol[i * self.m + j] * z[j];
            }
            taus[i] = v;
        }
        let posteriors: Vec<f64> = (0..self.m)
            .map(|i| {
                let lo = self.expert_coefficient(i) * taus[i];
                1.0 / (1.0 + (-lo).exp())
            })
            .collect();
        let optimal_log_odds =
            2.0 * taus.iter().zip(&self.sigma_inv_mu).map(|(t, c)| t * c).sum::<f64>();
        MixtureDraw { y, taus, posteriors, optimal_log_odds }
    }
}
