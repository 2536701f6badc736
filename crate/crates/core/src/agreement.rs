//! Communication protocols over two-expert structures with `Y` in [0, 1]:
//! exact expectation exchange, the discretized low/medium/high protocol,
//! its Bregman generalization, and the two-round rounding protocol.
//!
//! A protocol transcript partitions the signal grid into rectangles
//! `S x T`. Alice's expectation on a cell is the row mean within its
//! rectangle, Bob's is the column mean, and Charlie (a transcript-only
//! observer) holds the rectangle mean. All protocols are simulated
//! simultaneously over every positive-probability signal pair, so
//! expectations and metrics are exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infostruct::{Grid, InformationStructure};
use crate::numeric::NeumaierSum;
use crate::scoring::ScalarConvex;

#[derive(Debug, Clone)]
pub enum Protocol {
    /// Alternate announcing exact expectations until a belief fixpoint.
    ExactExchange,
    /// Low/medium/high around Charlie's expectation with threshold `eps/4`;
    /// ends at the `t <= ceil(1000/eps)` minimizing expected disagreement.
    Discretized { eps: f64 },
    /// Medium when the speaker's Bregman divergence from Charlie is below
    /// `eps/2`; horizon `ceil(24 M (4M + eps) / eps^2)` with
    /// `M = max G - min G`.
    BregmanDiscretized { g: ScalarConvex, eps: f64 },
    /// Both parties announce their initial expectations rounded to the
    /// nearest multiple of `eps`; two rounds total.
    Rounding { eps: f64 },
}

/// Exact agreement and accuracy metrics at a protocol state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgreementMetrics {
    /// `(1/4) E[(a - b)^2]`.
    pub agree_sq: f64,
    /// `E[JB_G(a, b)]` for the protocol's divergence (squared distance
    /// unless a `G` was supplied).
    pub agree_jb: f64,
    /// `E[D_G(a || b)]`: Alice-to-Bob Bregman disagreement (the quantity
    /// the Bregman-discretized stopping time minimizes).
    pub disagreement_bregman: f64,
    /// `E[D_G(mu_sigma_tau || a)]`.
    pub accuracy_alice: f64,
    pub accuracy_bob: f64,
}

/// One rectangle of the current partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RectangleState {
    pub s_labels: Vec<String>,
    pub t_labels: Vec<String>,
    pub prob: f64,
    /// Charlie's expectation on the rectangle.
    pub charlie: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundState {
    pub round: usize,
    /// Messages sent this round, one per rectangle that existed at the
    /// start of the round (empty at round 0).
    pub messages: Vec<String>,
    pub rectangles: Vec<RectangleState>,
    pub metrics: AgreementMetrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolRun {
    /// Per-round traces from round 0 to the last simulated round.
    pub rounds: Vec<RoundState>,
    /// The round the protocol terminates at (for discretized variants, the
    /// disagreement-minimizing round; ties go to the smallest).
    pub t_end: usize,
    /// Protocol horizon (maximum permitted rounds).
    pub horizon: usize,
    /// First simulated round after which the state stopped changing, if
    /// stationarity was reached inside the horizon.
    pub stationary_at: Option<usize>,
    /// Metrics at `t_end`.
    pub final_metrics: AgreementMetrics,
}

#[derive(Clone, PartialEq)]
struct Partition {
    /// rectangle id per row of the grid, encoded as (rect id of cell's S
    /// group, rect id of cell's T group) via parallel vectors
    rects: Vec<(Vec<usize>, Vec<usize>)>,
}

struct Engine<'a> {
    grid: Grid,
    structure: &'a InformationStructure,
    g: ScalarConvex,
}

impl<'a> Engine<'a> {
    fn new(structure: &'a InformationStructure, g: Option<ScalarConvex>) -> Result<Self> {
        let grid = Grid::from_structure(structure)?;
        let y = structure.y_real()?;
        for (st, &v) in structure.states().iter().zip(&y) {
            if st.prob > 0.0 && !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("Y value {v} outside [0, 1]")));
            }
        }
        Ok(Engine { grid, structure, g: g.unwrap_or_else(ScalarConvex::square) })
    }

    /// Exact metrics at a partition.
    fn metrics(&self, partition: &Partition) -> AgreementMetrics {
        let mut agree_sq = NeumaierSum::new();
        let mut agree_jb = NeumaierSum::new();
        let mut dis_ab = NeumaierSum::new();
        let mut acc_a = NeumaierSum::new();
        let mut acc_b = NeumaierSum::new();
        for (s, t) in &partition.rects {
            for &i in s {
                let (_, a) = self.grid.mu_row(i, t);
                for &j in t {
                    let (pc, truth) = self.grid.cell(i, j);
                    if pc <= 0.0 {
                        continue;
                    }
                    let (_, b) = self.grid.mu_col(j, s);
                    agree_sq.add(pc * 0.25 * (a - b) * (a - b));
                    agree_jb.add(pc * self.g.jensen_bregman(a, b));
                    dis_ab.add(pc * self.g.bregman(a, b));
                    acc_a.add(pc * self.g.bregman(truth, a));
                    acc_b.add(pc * self.g.bregman(truth, b));
                }
            }
        }
        AgreementMetrics {
            agree_sq: agree_sq.total(),
            agree_jb: agree_jb.total(),
            disagreement_bregman: dis_ab.total(),
            accuracy_alice: acc_a.total(),
            accuracy_bob: acc_b.total(),
        }
    }

    fn rect_states(&self, partition: &Partition) -> Vec<RectangleState> {
        partition
            .rects
            .iter()
            .map(|(s, t)| {
                let (p, charlie) = self.grid.mu_rect(s, t);
                RectangleState {
                    s_labels: s
                        .iter()
                        .map(|&i| self.structure.alphabets()[0][i].clone())
                        .collect(),
                    t_labels: t
                        .iter()
                        .map(|&j| self.structure.alphabets()[1][j].clone())
                        .collect(),
                    prob: p,
                    charlie,
                }
            })
            .collect()
    }

    /// One message round. `alice` selects the speaker. The message function
    /// maps (speaker's expectation, Charlie's expectation) to a label; with
    /// `initial` set, the speaker's expectation ignores earlier messages
    /// (the rounding protocol announces initial expectations).
    fn speak(
        &self,
        partition: &Partition,
        alice: bool,
        initial: bool,
        message: &dyn Fn(f64, f64) -> String,
    ) -> (Partition, Vec<String>) {
        let all_rows: Vec<usize> = (0..self.grid.ns).collect();
        let all_cols: Vec<usize> = (0..self.grid.nt).collect();
        let mut new_rects = Vec::new();
        let mut messages = Vec::new();
        for (s, t) in &partition.rects {
            let (p_rect, charlie) = self.grid.mu_rect(s, t);
            if p_rect <= 0.0 {
                new_rects.push((s.clone(), t.clone()));
                messages.push(String::new());
                continue;
            }
            // group the speaker's signals by message
            let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
            let signals = if alice { s } else { t };
            for &k in signals {
                let (p_line, mu) = match (alice, initial) {
                    (true, false) => self.grid.mu_row(k, t),
                    (true, true) => self.grid.mu_row(k, &all_cols),
                    (false, false) => self.grid.mu_col(k, s),
                    (false, true) => self.grid.mu_col(k, &all_rows),
                };
                let msg = if p_line > 0.0 {
                    message(mu, charlie)
                } else {
                    // zero-probability signal line: message irrelevant
                    String::from("-")
                };
                match groups.iter_mut().find(|(m, _)| *m == msg) {
                    Some((_, members)) => members.push(k),
                    None => groups.push((msg, vec![k])),
                }
            }
            let rect_msgs: Vec<String> =
                groups.iter().map(|(m, _)| m.clone()).collect();
            messages.push(rect_msgs.join("/"));
            for (_, members) in groups {
                if alice {
                    new_rects.push((members, t.clone()));
                } else {
                    new_rects.push((s.clone(), members));
                }
            }
        }
        (Partition { rects: new_rects }, messages)
    }
}

fn exact_message(mu: f64, _charlie: f64) -> String {
    // exact expectation exchange: the message is the value itself, grouped
    // at a tight tolerance
    format!("{:.13e}", mu)
}

/// Simulate a protocol over all positive-probability signal pairs.
///
/// `max_rounds` caps the number of simulated rounds on top of the
/// protocol's own horizon. Once a full Alice-and-Bob cycle produces no
/// refinement the state is stationary forever and simulation stops early;
/// discretized t_end selection accounts for the remaining horizon.
pub fn run_protocol(
    structure: &InformationStructure,
    protocol: &Protocol,
    max_rounds: usize,
) -> Result<ProtocolRun> {
    let g = match protocol {
        Protocol::BregmanDiscretized { g, .. } => Some(g.clone()),
        _ => None,
    };
    let engine = Engine::new(structure, g)?;
    let horizon = match protocol {
        Protocol::ExactExchange => max_rounds,
        Protocol::Discretized { eps } => {
            if !(*eps > 0.0) {
                return Err(Error::Argument("eps must be positive".into()));
            }
            (1000.0 / eps).ceil() as usize
        }
        Protocol::BregmanDiscretized { g, eps } => {
            if !(*eps > 0.0) {
                return Err(Error::Argument("eps must be positive".into()));
            }
            let m = g.range_width();
            (24.0 * m * (4.0 * m + eps) / (eps * eps)).ceil() as usize
        }
        Protocol::Rounding { eps } => {
            if !(*eps > 0.0) {
                return Err(Error::Argument("eps must be positive".into()));
            }
            2
        }
    };

    let mut partition = Partition {
        rects: vec![((0..engine.grid.ns).collect(), (0..engine.grid.nt).collect())],
    };
    let mut rounds = vec![RoundState {
        round: 0,
        messages: vec![],
        rectangles: engine.rect_states(&partition),
        metrics: engine.metrics(&partition),
    }];
    let mut stationary_at = None;
    let mut quiet_moves = 0usize;
    let sim_cap = horizon.min(max_rounds);
    for t in 1..=sim_cap {
        let alice = t % 2 == 1;
        let (next, messages) = match protocol {
            Protocol::ExactExchange => engine.speak(&partition, alice, false, &exact_message),
            Protocol::Discretized { eps } => {
                let eps = *eps;
                let f = move |mu: f64, charlie: f64| -> String {
                    if mu < charlie - eps / 4.0 {
                        "low".into()
                    } else if mu > charlie + eps / 4.0 {
                        "high".into()
                    } else {
                        "medium".into()
                    }
                };
                engine.speak(&partition, alice, false, &f)
            }
            Protocol::BregmanDiscretized { g, eps } => {
                let eps = *eps;
                let g = g.clone();
                let f = move |mu: f64, charlie: f64| -> String {
                    if g.bregman(mu, charlie) < eps / 2.0 {
                        "medium".into()
                    } else if mu < charlie {
                        "low".into()
                    } else {
                        "high".into()
                    }
                };
                engine.speak(&partition, alice, false, &f)
            }
            Protocol::Rounding { eps } => {
                let eps = *eps;
                let f = move |mu: f64, _charlie: f64| -> String {
                    format!("{}", (mu / eps).round() as i64)
                };
                engine.speak(&partition, alice, true, &f)
            }
        };
        let changed = next.rects.len() != partition.rects.len();
        partition = next;
        rounds.push(RoundState {
            round: t,
            messages,
            rectangles: engine.rect_states(&partition),
            metrics: engine.metrics(&partition),
        });
        if changed {
            quiet_moves = 0;
        } else {
            quiet_moves += 1;
            // a full cycle without refinement is a fixpoint for every
            // protocol here: messages depend only on the rectangle state
            if quiet_moves >= 2 && !matches!(protocol, Protocol::Rounding { .. }) {
                stationary_at = Some(t);
                break;
            }
        }
    }

    // termination round
    let t_end = match protocol {
        Protocol::ExactExchange => stationary_at.unwrap_or(rounds.len() - 1),
        Protocol::Rounding { .. } => 2.min(rounds.len() - 1),
        Protocol::Discretized { .. } | Protocol::BregmanDiscretized { .. } => {
            // smallest t <= horizon minimizing the expected disagreement;
            // after stationarity the objective is constant, so only the
            // simulated rounds need scanning
            let objective = |r: &RoundState| match protocol {
                Protocol::Discretized { .. } => 4.0 * r.metrics.agree_sq, // E[(a-b)^2]
                Protocol::BregmanDiscretized { .. } => r.metrics.disagreement_bregman,
                _ => unreachable!(),
            };
            let mut best_t = 0;
            let mut best = f64::INFINITY;
            for r in &rounds {
                let v = objective(r);
                if v < best - 1e-18 {
                    best = v;
                    best_t = r.round;
                }
            }
            best_t
        }
    };
    let final_metrics = rounds[t_end.min(rounds.len() - 1)].metrics.clone();
    Ok(ProtocolRun { rounds, t_end, horizon, stationary_at, final_metrics })
}

/// Exact agreement/accuracy metrics for a run's round (`None` = final).
pub fn metrics_at(run: &ProtocolRun, round: Option<usize>) -> &AgreementMetrics {
    match round {
        Some(t) => &run.rounds[t.min(run.rounds.len() - 1)].metrics,
        None => &run.final_metrics,
    }
}

/// Charlie's per-rectangle expectation table at a round.
pub fn charlie_belief(run: &ProtocolRun, round: usize) -> Vec<RectangleState> {
    run.rounds[round.min(run.rounds.len() - 1)].rectangles.clone()
}

/// Charlie's expected Bregman error `E[D_G(Y || mu_{S_t T_t})]` at a round
/// state; the discretized protocols drive this monovariant down.
pub fn charlie_expected_error(
    structure: &InformationStructure,
    rectangles: &[RectangleState],
    g: &ScalarConvex,
) -> Result<f64> {
    let y = structure.y_real()?;
    let alphabets = structure.alphabets();
    let mut acc = NeumaierSum::new();
    for rect in rectangles {
        let s_idx: Vec<usize> = rect
            .s_labels
            .iter()
            .map(|l| alphabets[0].iter().position(|x| x == l).unwrap())
            .collect();
        let t_idx: Vec<usize> = rect
            .t_labels
            .iter()
            .map(|l| alphabets[1].iter().position(|x| x == l).unwrap())
            .collect();
        for (st, &yv) in structure.states().iter().zip(&y) {
            if st.prob > 0.0 && s_idx.contains(&st.signals[0]) && t_idx.contains(&st.signals[1]) {
                acc.add(st.prob * g.bregman(yv, rect.charlie));
            }
        }
    }
    Ok(acc.total())
}

/// Once the parties eps-agree at some round, they keep `10 eps^(1/3)`-ish
/// agreement at every later round (squared-distance convention
/// `(1/4)E[(a-b)^2] <= 10 eps^(1/3)`).
pub fn monotone_agreement_check(
    structure: &InformationStructure,
    protocol: &Protocol,
    eps: f64,
) -> Result<bool> {
    let run = run_protocol(structure, protocol, 10_000)?;
    let bound = 10.0 * eps.powf(1.0 / 3.0);
    let mut agreed = false;
    for r in &run.rounds {
        if agreed && r.metrics.agree_sq > bound {
            return Ok(false);
        }
        if r.metrics.agree_sq <= eps {
            agreed = true;
        }
    }
    Ok(true)
}
