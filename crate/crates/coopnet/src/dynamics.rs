//! Snowdrift cooperation dynamics over a fixed connectivity matrix:
//! payoff terms, the sigmoid mutual-benefit function, the gradient rate
//! equations, and the clamped explicit-Euler integrator.

use crate::error::{Error, Result};
use crate::matrix::{SerializeRows, SquareMatrix};
use crate::metrics::{self, Assortativity};
use crate::model::ConnectivityMatrix;
use serde::de::Error as _;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Snowdrift game parameters. The sigmoid normalization constant
/// `b = (2 + 2 mu / sqrt(tau + mu^2))^-1` is derived, never supplied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GameParams {
    m: f64,
    mu: f64,
    tau: f64,
    b: f64,
}

impl GameParams {
    pub fn new(m: f64, mu: f64, tau: f64) -> Result<Self> {
        if !(m >= 0.0 && m.is_finite()) {
            return Err(Error::invalid(format!("m must be >= 0, got {m}")));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::invalid(format!("mu must be > 0, got {mu}")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be > 0, got {tau}")));
        }
        let b = 1.0 / (2.0 + 2.0 * mu / (tau + mu * mu).sqrt());
        debug_assert!(b > 0.0 && b < 0.5);
        Ok(GameParams { m, mu, tau, b })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// Mutual-benefit sigmoid: f(0) = 0, f(x) -> 1 as x -> inf, inflection at
/// `mu`, steepness set by `tau`.
pub fn sigmoid_benefit(x: f64, gp: &GameParams) -> f64 {
    let d = x - gp.mu;
    2.0 * gp.b * gp.mu / (gp.tau + gp.mu * gp.mu).sqrt()
        + 2.0 * gp.b * d / (gp.tau + d * d).sqrt()
}

/// Derivative of the mutual-benefit sigmoid:
/// `2 b tau / (tau + (x - mu)^2)^(3/2)`, strictly positive.
#[inline]
pub fn sigmoid_benefit_derivative(x: f64, gp: &GameParams) -> f64 {
    let d = x - gp.mu;
    let q = gp.tau + d * d;
    2.0 * gp.b * gp.tau / (q * q.sqrt())
}

/// Directed cooperation weights `e_ij >= 0` with zero diagonal, plus the
/// simulation clock. Asymmetry is expected: `e_ij != e_ji` in general.
#[derive(Clone, Debug, PartialEq)]
pub struct CooperationState {
    e: SquareMatrix,
    t: f64,
}

impl CooperationState {
    /// Uniform initial state: every node offers unit effort to every
    /// other node (the all-ones matrix minus the identity).
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("need n >= 2, got {n}")));
        }
        let mut e = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    e.set(i, j, 1.0);
                }
            }
        }
        Ok(CooperationState { e, t: 0.0 })
    }

    pub fn from_matrix(e: SquareMatrix, t: f64) -> Result<Self> {
        if e.n() < 2 {
            return Err(Error::invalid("cooperation state needs n >= 2"));
        }
        for i in 0..e.n() {
            if e.get(i, i) != 0.0 {
                return Err(Error::invalid(format!("nonzero diagonal at ({i}, {i})")));
            }
            for j in 0..e.n() {
                let v = e.get(i, j);
                if !(v >= 0.0) {
                    return Err(Error::invalid(format!(
                        "negative or NaN weight {v} at ({i}, {j})"
                    )));
                }
            }
        }
        if !t.is_finite() {
            return Err(Error::invalid(format!("time must be finite, got {t}")));
        }
        Ok(CooperationState { e, t })
    }

    pub fn n(&self) -> usize {
        self.e.n()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn weights(&self) -> &SquareMatrix {
        &self.e
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.e.get(i, j)
    }

    pub fn max_weight(&self) -> f64 {
        self.e.max_entry()
    }
}

impl Serialize for CooperationState {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("CooperationState", 3)?;
        st.serialize_field("n", &self.n())?;
        st.serialize_field("t", &self.t)?;
        st.serialize_field("e", &SerializeRows(&self.e))?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for CooperationState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            n: usize,
            t: f64,
            e: Vec<Vec<f64>>,
        }
        let repr = Repr::deserialize(deserializer)?;
        if repr.n != repr.e.len() {
            return Err(D::Error::custom(format!(
                "n = {} does not match {} matrix rows",
                repr.n,
                repr.e.len()
            )));
        }
        let m = SquareMatrix::from_rows(repr.e).map_err(D::Error::custom)?;
        CooperationState::from_matrix(m, repr.t).map_err(D::Error::custom)
    }
}

/// Explicit-Euler integration settings. The convergence tolerance
/// defaults to `s^2` when not given.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    s: f64,
    max_steps: u64,
    convergence_tol: f64,
    record_every: u64,
}

impl IntegratorConfig {
    pub fn new(
        s: f64,
        max_steps: u64,
        convergence_tol: Option<f64>,
        record_every: u64,
    ) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::invalid(format!("step size must be in (0, 1), got {s}")));
        }
        if max_steps < 1 {
            return Err(Error::invalid("max_steps must be >= 1"));
        }
        let tol = convergence_tol.unwrap_or(s * s);
        if !(tol > 0.0) {
            return Err(Error::invalid(format!(
                "convergence tolerance must be > 0, got {tol}"
            )));
        }
        if record_every < 1 {
            return Err(Error::invalid("record_every must be >= 1"));
        }
        Ok(IntegratorConfig {
            s,
            max_steps,
            convergence_tol: tol,
            record_every,
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn max_steps(&self) -> u64 {
        self.max_steps
    }

    pub fn convergence_tol(&self) -> f64 {
        self.convergence_tol
    }

    pub fn record_every(&self) -> u64 {
        self.record_every
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig::new(1e-4, 10_000_000, None, 100).unwrap()
    }
}

/// Time series of scalar observables sampled during evolution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub coop_mean_degree: Vec<f64>,
    pub coop_assortativity: Vec<Assortativity>,
    pub total_payoff: Vec<f64>,
    pub potential: Vec<f64>,
    /// Clamp events since the previous sample (0 for the initial sample).
    pub clamp_events: Vec<u64>,
    pub converged: bool,
    pub steps_taken: u64,
}

/// Benefit from incoming effort: `B_i = sqrt(sum_j H_ji e_ji)`.
pub fn node_benefit(state: &CooperationState, h: &ConnectivityMatrix, i: usize) -> f64 {
    let n = state.n();
    let mut sum = 0.0;
    for j in 0..n {
        sum += h.get(j, i) * state.weight(j, i);
    }
    sum.sqrt()
}

/// Cost of outgoing effort over weak links:
/// `C_i = (sum_j (1 - H_ij) e_ij)^2`.
pub fn node_cost(state: &CooperationState, h: &ConnectivityMatrix, i: usize) -> f64 {
    let s = weak_outgoing_sum(state.weights(), h, i);
    s * s
}

#[inline]
fn weak_outgoing_sum(e: &SquareMatrix, h: &ConnectivityMatrix, i: usize) -> f64 {
    let ei = e.row(i);
    let hi = h.matrix().row(i);
    let mut s = 0.0;
    for k in 0..ei.len() {
        s += (1.0 - hi[k]) * ei[k];
    }
    s
}

/// Mutual cooperation benefit: `M_i = sum_j H_ij f(e_ij + e_ji)`.
pub fn node_mutual_benefit(
    state: &CooperationState,
    h: &ConnectivityMatrix,
    i: usize,
    gp: &GameParams,
) -> f64 {
    let n = state.n();
    let mut sum = 0.0;
    for j in 0..n {
        if j != i {
            sum += h.get(i, j) * sigmoid_benefit(state.weight(i, j) + state.weight(j, i), gp);
        }
    }
    sum
}

/// Modified total payoff `P_i* = B_i - C_i + m M_i`.
pub fn node_payoff(
    state: &CooperationState,
    h: &ConnectivityMatrix,
    i: usize,
    gp: &GameParams,
) -> f64 {
    node_benefit(state, h, i) - node_cost(state, h, i)
        + gp.m() * node_mutual_benefit(state, h, i, gp)
}

/// Sum of all node payoffs.
pub fn total_payoff(state: &CooperationState, h: &ConnectivityMatrix, gp: &GameParams) -> f64 {
    (0..state.n()).map(|i| node_payoff(state, h, i, gp)).sum()
}

/// Exact scalar potential of the rate equations:
/// `Phi = sum_{i<j} m H_ij f(e_ij + e_ji) - sum_i C_i`.
/// Its partial derivative with respect to `e_ij` reproduces the rate
/// matrix entry-for-entry, so the flow is gradient ascent on `Phi`.
pub fn potential(state: &CooperationState, h: &ConnectivityMatrix, gp: &GameParams) -> f64 {
    let n = state.n();
    let mut phi = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            phi += gp.m()
                * h.get(i, j)
                * sigmoid_benefit(state.weight(i, j) + state.weight(j, i), gp);
        }
        phi -= node_cost(state, h, i);
    }
    phi
}

/// Gradient of `P_i*` with respect to `e_ij`:
/// `rate_ij = m H_ij f'(e_ij + e_ji) - 2 (1 - H_ij) S_i` with the row sum
/// `S_i = sum_k (1 - H_ik) e_ik` shared across the row.
pub fn rate_matrix(
    state: &CooperationState,
    h: &ConnectivityMatrix,
    gp: &GameParams,
) -> SquareMatrix {
    let mut rates = SquareMatrix::zeros(state.n());
    compute_rates(state.weights(), h, gp, &mut rates);
    rates
}

fn compute_rates(e: &SquareMatrix, h: &ConnectivityMatrix, gp: &GameParams, rates: &mut SquareMatrix) {
    let n = e.n();
    let m = gp.m();
    let mu = gp.mu();
    let tau = gp.tau();
    let two_b_tau = 2.0 * gp.b() * tau;
    let es = e.as_slice();
    let hs = h.matrix().as_slice();
    let rs = rates.as_mut_slice();
    for i in 0..n {
        let row = i * n;
        let mut s_i = 0.0;
        for k in 0..n {
            s_i += (1.0 - hs[row + k]) * es[row + k];
        }
        if m == 0.0 {
            // Pure-cost dynamics: skip the sigmoid evaluation.
            for j in 0..n {
                rs[row + j] = if j == i {
                    0.0
                } else {
                    -2.0 * (1.0 - hs[row + j]) * s_i
                };
            }
            continue;
        }
        for j in 0..n {
            if j == i {
                rs[row + j] = 0.0;
                continue;
            }
            let hij = hs[row + j];
            let x = es[row + j] + es[j * n + i];
            let d = x - mu;
            let q = tau + d * d;
            let fp = two_b_tau / (q * q.sqrt());
            rs[row + j] = m * hij * fp - 2.0 * (1.0 - hij) * s_i;
        }
    }
}

struct StepEffect {
    clamped: u64,
    max_delta: f64,
    /// Largest signed change; <= 0 exactly when no entry grew.
    max_increase: f64,
    max_increase_entry: (usize, usize),
}

/// Applies one synchronous Euler update `e += s * rate`, clamping entries
/// that would go negative to exactly 0.
fn apply_rates(e: &mut SquareMatrix, rates: &SquareMatrix, s: f64) -> Result<StepEffect> {
    let n = e.n();
    let es = e.as_mut_slice();
    let rs = rates.as_slice();
    let mut effect = StepEffect {
        clamped: 0,
        max_delta: 0.0,
        max_increase: f64::NEG_INFINITY,
        max_increase_entry: (0, 0),
    };
    for idx in 0..n * n {
        let rate = rs[idx];
        if !rate.is_finite() {
            return Err(Error::IntegrationFault {
                i: idx / n,
                j: idx % n,
                value: rate,
            });
        }
        let old = es[idx];
        let mut new = old + s * rate;
        if new < 0.0 {
            new = 0.0;
            effect.clamped += 1;
        }
        es[idx] = new;
        let signed = new - old;
        if signed.abs() > effect.max_delta {
            effect.max_delta = signed.abs();
        }
        if signed > effect.max_increase {
            effect.max_increase = signed;
            effect.max_increase_entry = (idx / n, idx % n);
        }
    }
    Ok(effect)
}

/// One synchronous Euler step from the pre-step state. Every rate is
/// evaluated before any entry is written.
pub fn euler_step(
    state: &CooperationState,
    h: &ConnectivityMatrix,
    gp: &GameParams,
    cfg: &IntegratorConfig,
) -> Result<(CooperationState, u64)> {
    check_dims(state, h)?;
    let mut rates = SquareMatrix::zeros(state.n());
    compute_rates(state.weights(), h, gp, &mut rates);
    let mut next = state.clone();
    let effect = apply_rates(&mut next.e, &rates, cfg.s())?;
    next.t = state.t + cfg.s();
    Ok((next, effect.clamped))
}

fn check_dims(state: &CooperationState, h: &ConnectivityMatrix) -> Result<()> {
    if state.n() != h.n() {
        return Err(Error::invalid(format!(
            "state has n = {} but connectivity matrix has n = {}",
            state.n(),
            h.n()
        )));
    }
    Ok(())
}

/// Per-step information handed to an evolution observer after the step
/// has been applied.
pub struct StepInfo<'a> {
    pub step: u64,
    pub state: &'a CooperationState,
    pub clamped: u64,
    pub max_delta: f64,
    /// Largest signed entry change in this step; <= 0 means no entry grew.
    pub max_increase: f64,
    pub max_increase_entry: (usize, usize),
}

/// Runs the integrator until the largest per-entry change drops to the
/// convergence tolerance or `max_steps` is reached (the latter is not an
/// error; the record's `converged` flag says which exit fired).
/// Observables of the cooperation graph at `coop_threshold` are recorded
/// every `record_every` steps plus the initial and final states.
pub fn evolve(
    state0: &CooperationState,
    h: &ConnectivityMatrix,
    gp: &GameParams,
    cfg: &IntegratorConfig,
    coop_threshold: f64,
) -> Result<(CooperationState, TrajectoryRecord)> {
    evolve_observed(state0, h, gp, cfg, coop_threshold, |_| {
        std::ops::ControlFlow::Continue(())
    })
}

/// [`evolve`] with a per-step observer, invoked after every applied step.
/// An observer returning `ControlFlow::Break` stops the run early; the
/// record then reports `converged = false`.
pub fn evolve_observed(
    state0: &CooperationState,
    h: &ConnectivityMatrix,
    gp: &GameParams,
    cfg: &IntegratorConfig,
    coop_threshold: f64,
    mut observer: impl FnMut(&StepInfo) -> std::ops::ControlFlow<()>,
) -> Result<(CooperationState, TrajectoryRecord)> {
    check_dims(state0, h)?;
    if !(coop_threshold >= 0.0) {
        return Err(Error::invalid(format!(
            "cooperation threshold must be >= 0, got {coop_threshold}"
        )));
    }

    let mut state = state0.clone();
    let mut rates = SquareMatrix::zeros(state.n());
    let mut rec = TrajectoryRecord {
        times: Vec::new(),
        coop_mean_degree: Vec::new(),
        coop_assortativity: Vec::new(),
        total_payoff: Vec::new(),
        potential: Vec::new(),
        clamp_events: Vec::new(),
        converged: false,
        steps_taken: 0,
    };
    record_sample(&mut rec, &state, h, gp, coop_threshold, 0)?;

    let mut clamps_since_sample = 0u64;
    let mut step = 0u64;
    while step < cfg.max_steps() {
        step += 1;
        compute_rates(state.weights(), h, gp, &mut rates);
        let effect = apply_rates(&mut state.e, &rates, cfg.s())?;
        state.t += cfg.s();
        clamps_since_sample += effect.clamped;
        let flow = observer(&StepInfo {
            step,
            state: &state,
            clamped: effect.clamped,
            max_delta: effect.max_delta,
            max_increase: effect.max_increase,
            max_increase_entry: effect.max_increase_entry,
        });

        let converged = effect.max_delta <= cfg.convergence_tol();
        let stop = converged || flow.is_break() || step == cfg.max_steps();
        if stop || step % cfg.record_every() == 0 {
            record_sample(&mut rec, &state, h, gp, coop_threshold, clamps_since_sample)?;
            clamps_since_sample = 0;
        }
        if stop {
            rec.converged = converged;
            break;
        }
    }
    rec.steps_taken = step;
    Ok((state, rec))
}

fn record_sample(
    rec: &mut TrajectoryRecord,
    state: &CooperationState,
    h: &ConnectivityMatrix,
    gp: &GameParams,
    coop_threshold: f64,
    clamps: u64,
) -> Result<()> {
    let graph = metrics::cooperation_graph(state, coop_threshold)?;
    rec.times.push(state.t());
    rec.coop_mean_degree
        .push(metrics::degree_stats(&graph).mean);
    rec.coop_assortativity.push(metrics::assortativity(&graph));
    rec.total_payoff.push(total_payoff(state, h, gp));
    rec.potential.push(potential(state, h, gp));
    rec.clamp_events.push(clamps);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConnectivityMatrix;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gp(m: f64, mu: f64, tau: f64) -> GameParams {
        GameParams::new(m, mu, tau).unwrap()
    }

    fn symmetric_h(n: usize, value: f64) -> ConnectivityMatrix {
        let mut m = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m.set(i, j, value);
                }
            }
        }
        ConnectivityMatrix::from_matrix(m).unwrap()
    }

    fn random_instance(seed: u64, n: usize) -> (CooperationState, ConnectivityMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hm = SquareMatrix::zeros(n);
        let mut em = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.05 + 0.9 * rng.gen::<f64>();
                hm.set(i, j, v);
                hm.set(j, i, v);
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    em.set(i, j, (3.0 * rng.gen::<f64>()).max(2e-6));
                }
            }
        }
        (
            CooperationState::from_matrix(em, 0.0).unwrap(),
            ConnectivityMatrix::from_matrix(hm).unwrap(),
        )
    }

    #[test]
    fn sigmoid_anchors() {
        let g = gp(1.0, 1.0, 1.0);
        assert_eq!(sigmoid_benefit(0.0, &g), 0.0);
        assert_relative_eq!(
            sigmoid_benefit(1.0, &g),
            2f64.sqrt() - 1.0,
            max_relative = 1e-12
        );
        assert_abs_diff_eq!(sigmoid_benefit(1e6, &g), 1.0, epsilon = 1e-5);
    }

    #[test]
    fn sigmoid_monotone_bounded() {
        let g = gp(1.0, 0.7, 2.3);
        let mut prev = -1.0;
        for k in 0..=1000 {
            let x = k as f64 * 0.1;
            let f = sigmoid_benefit(x, &g);
            assert!(f > prev);
            assert!(f < 1.0);
            assert!(sigmoid_benefit_derivative(x, &g) > 0.0);
            prev = f;
        }
    }

    #[test]
    fn sigmoid_derivative_closed_form_and_fd() {
        let g = gp(1.0, 1.0, 1.0);
        assert_relative_eq!(
            sigmoid_benefit_derivative(1.0, &g),
            2.0 / (2.0 + 2f64.sqrt()),
            max_relative = 1e-12
        );
        let h = 1e-6;
        for &x in &[0.0, 0.5, 1.0, 3.0, 10.0] {
            let fd = (sigmoid_benefit(x + h, &g) - sigmoid_benefit(x - h, &g)) / (2.0 * h);
            assert_relative_eq!(sigmoid_benefit_derivative(x, &g), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn node_terms_hand_values() {
        let g = gp(1.0, 1.0, 1.0);

        // Benefit: N = 2, H_21 = 0.25, e_21 = 4 -> sqrt(1) = 1.
        let h = symmetric_h(2, 0.25);
        let mut e = SquareMatrix::zeros(2);
        e.set(1, 0, 4.0);
        let s = CooperationState::from_matrix(e, 0.0).unwrap();
        assert_relative_eq!(node_benefit(&s, &h, 0), 1.0);
        // Outgoing entries do not move B_i.
        let mut e2 = SquareMatrix::zeros(2);
        e2.set(1, 0, 4.0);
        e2.set(0, 1, 17.0);
        let s2 = CooperationState::from_matrix(e2, 0.0).unwrap();
        assert_eq!(node_benefit(&s2, &h, 0), node_benefit(&s, &h, 0));

        // Cost: N = 2, H_12 = 0.5, e_12 = 2 -> (0.5 * 2)^2 = 1.
        let h = symmetric_h(2, 0.5);
        let mut e = SquareMatrix::zeros(2);
        e.set(0, 1, 2.0);
        let s = CooperationState::from_matrix(e, 0.0).unwrap();
        assert_relative_eq!(node_cost(&s, &h, 0), 1.0);

        // Perfect links cost nothing.
        let h1 = symmetric_h(2, 1.0);
        assert_eq!(node_cost(&s, &h1, 0), 0.0);

        // All-zero state: every term vanishes.
        let zero = CooperationState::from_matrix(SquareMatrix::zeros(3), 0.0).unwrap();
        let h3 = symmetric_h(3, 0.4);
        assert_eq!(node_benefit(&zero, &h3, 0), 0.0);
        assert_eq!(node_cost(&zero, &h3, 0), 0.0);
        assert_eq!(node_mutual_benefit(&zero, &h3, 0, &g), 0.0);
        assert_eq!(node_payoff(&zero, &h3, 0, &g), 0.0);
        assert_eq!(total_payoff(&zero, &h3, &g), 0.0);
        assert_eq!(potential(&zero, &h3, &g), 0.0);
    }

    #[test]
    fn mutual_benefit_saturates_and_is_symmetric() {
        let g = gp(1.0, 1.0, 1.0);
        let h = symmetric_h(2, 1.0);
        let mut e = SquareMatrix::zeros(2);
        e.set(0, 1, 500.0);
        e.set(1, 0, 500.0);
        let s = CooperationState::from_matrix(e, 0.0).unwrap();
        let m0 = node_mutual_benefit(&s, &h, 0, &g);
        let m1 = node_mutual_benefit(&s, &h, 1, &g);
        assert!(m0 < 1.0);
        assert_eq!(m0, m1);
    }

    #[test]
    fn payoff_hand_value() {
        // N = 2, H = 0.5, e_12 = e_21 = 1, m = 1, mu = tau = 1:
        // P_1* = sqrt(0.5) - 0.25 + 0.5 f(2), f(2) = 2 sqrt(2) - 2.
        let g = gp(1.0, 1.0, 1.0);
        let h = symmetric_h(2, 0.5);
        let mut e = SquareMatrix::zeros(2);
        e.set(0, 1, 1.0);
        e.set(1, 0, 1.0);
        let s = CooperationState::from_matrix(e, 0.0).unwrap();
        let expected = 0.5f64.sqrt() - 0.25 + 0.5 * (2.0 * 2f64.sqrt() - 2.0);
        assert_relative_eq!(node_payoff(&s, &h, 0, &g), expected, max_relative = 1e-12);
        // m = 0 reduces to B - C.
        let g0 = gp(0.0, 1.0, 1.0);
        assert_relative_eq!(
            node_payoff(&s, &h, 0, &g0),
            0.5f64.sqrt() - 0.25,
            max_relative = 1e-12
        );
    }

    #[test]
    fn rate_matrix_hand_value_and_sign() {
        let g = gp(1.0, 1.0, 1.0);
        let h = symmetric_h(2, 0.5);
        let mut e = SquareMatrix::zeros(2);
        e.set(0, 1, 1.0);
        e.set(1, 0, 1.0);
        let s = CooperationState::from_matrix(e, 0.0).unwrap();
        let rates = rate_matrix(&s, &h, &g);
        let b = 1.0 / (2.0 + 2f64.sqrt());
        let expected = 0.5 * (2.0 * b / 2f64.powf(1.5)) - 0.5;
        assert_relative_eq!(rates.get(0, 1), expected, max_relative = 1e-12);
        assert_eq!(rates.get(0, 0), 0.0);

        // m = 0: every rate is <= 0.
        let g0 = gp(0.0, 1.0, 1.0);
        let (s, h) = random_instance(5, 6);
        let rates = rate_matrix(&s, &h, &g0);
        assert!(rates.as_slice().iter().all(|&r| r <= 0.0));
    }

    fn fd_payoff_gradient(
        state: &CooperationState,
        h: &ConnectivityMatrix,
        gp: &GameParams,
        i: usize,
        j: usize,
        step: f64,
    ) -> f64 {
        let mut plus = state.weights().clone();
        plus.set(i, j, plus.get(i, j) + step);
        let plus = CooperationState::from_matrix(plus, 0.0).unwrap();
        let mut minus = state.weights().clone();
        minus.set(i, j, minus.get(i, j) - step);
        let minus = CooperationState::from_matrix(minus, 0.0).unwrap();
        (node_payoff(&plus, h, i, gp) - node_payoff(&minus, h, i, gp)) / (2.0 * step)
    }

    #[test]
    fn rate_matrix_matches_payoff_finite_differences() {
        let g = gp(1.3, 0.8, 1.7);
        for seed in 0..20 {
            let n = 2 + (seed as usize % 7);
            let (s, h) = random_instance(seed, n);
            let rates = rate_matrix(&s, &h, &g);
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let fd = fd_payoff_gradient(&s, &h, &g, i, j, 1e-6);
                    assert_relative_eq!(rates.get(i, j), fd, max_relative = 1e-5);
                }
            }
        }
    }

    #[test]
    fn potential_finite_differences_match_rates() {
        let g = gp(0.9, 1.1, 0.6);
        for seed in 100..110 {
            let n = 2 + (seed as usize % 7);
            let (s, h) = random_instance(seed, n);
            let rates = rate_matrix(&s, &h, &g);
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let step = 1e-6;
                    let mut plus = s.weights().clone();
                    plus.set(i, j, plus.get(i, j) + step);
                    let plus = CooperationState::from_matrix(plus, 0.0).unwrap();
                    let mut minus = s.weights().clone();
                    minus.set(i, j, minus.get(i, j) - step);
                    let minus = CooperationState::from_matrix(minus, 0.0).unwrap();
                    let fd = (potential(&plus, &h, &g) - potential(&minus, &h, &g)) / (2.0 * step);
                    assert_relative_eq!(rates.get(i, j), fd, max_relative = 1e-5);
                }
            }
        }
    }

    #[test]
    fn euler_step_fixed_point() {
        // m = 0 with perfect links: all rates are exactly zero.
        let g = gp(0.0, 1.0, 1.0);
        let h = symmetric_h(3, 1.0);
        let s = CooperationState::uniform(3).unwrap();
        let cfg = IntegratorConfig::default();
        let (next, clamped) = euler_step(&s, &h, &g, &cfg).unwrap();
        assert_eq!(next.weights(), s.weights());
        assert_eq!(clamped, 0);
        assert_relative_eq!(next.t(), cfg.s());
    }

    #[test]
    fn euler_step_clamps_to_zero() {
        // e_12 tiny with a strongly negative rate: clamped to exactly 0.
        let g = gp(0.0, 1.0, 1.0);
        let h = symmetric_h(3, 0.5);
        let mut e = SquareMatrix::zeros(3);
        e.set(0, 1, 1e-9);
        e.set(0, 2, 1.0);
        let s = CooperationState::from_matrix(e, 0.0).unwrap();
        let cfg = IntegratorConfig::default();
        let (next, clamped) = euler_step(&s, &h, &g, &cfg).unwrap();
        assert_eq!(next.weight(0, 1), 0.0);
        assert!(clamped >= 1);
        assert!(next.weight(0, 2) > 0.0);
    }

    #[test]
    fn euler_step_scalar_decay() {
        // N = 2, m = 0, H = 0.5: e(t) = e(0) exp(-2 (1-H)^2 t).
        let g = gp(0.0, 1.0, 1.0);
        let h = symmetric_h(2, 0.5);
        let mut e = SquareMatrix::zeros(2);
        e.set(0, 1, 1.0);
        let mut s = CooperationState::from_matrix(e, 0.0).unwrap();
        let cfg = IntegratorConfig::default();
        for _ in 0..1000 {
            s = euler_step(&s, &h, &g, &cfg).unwrap().0;
        }
        assert_abs_diff_eq!(s.weight(0, 1), (-0.05f64).exp(), epsilon = 1e-3);
    }

    #[test]
    fn euler_step_reports_integration_fault() {
        let g = gp(1.0, 1.0, 1.0);
        let h = symmetric_h(2, 0.5);
        let mut e = SquareMatrix::zeros(2);
        e.set(0, 1, f64::INFINITY);
        let s = CooperationState::from_matrix(e, 0.0).unwrap();
        let cfg = IntegratorConfig::default();
        match euler_step(&s, &h, &g, &cfg) {
            Err(Error::IntegrationFault { i: 0, j: 1, value }) => assert!(!value.is_finite()),
            other => panic!("expected integration fault, got {other:?}"),
        }
    }

    #[test]
    fn evolve_tragedy_small_instance() {
        // With m = 0 and the stop rule on per-entry change, the residual
        // at the stop scales like s / (2 |w_i|^2); a tolerance well below
        // s^2 is needed before every weight sits under 1e-6.
        let g = gp(0.0, 1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 4;
        let mut hm = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.25 + 0.5 * rng.gen::<f64>();
                hm.set(i, j, v);
                hm.set(j, i, v);
            }
        }
        let h = ConnectivityMatrix::from_matrix(hm).unwrap();
        let s0 = CooperationState::uniform(n).unwrap();
        let cfg = IntegratorConfig::new(1e-4, 5_000_000, Some(1e-12), 100).unwrap();
        let mut monotone = true;
        let (end, rec) = evolve_observed(&s0, &h, &g, &cfg, 1e-6, |info| {
            if info.max_increase > 0.0 {
                monotone = false;
            }
            std::ops::ControlFlow::Continue(())
        })
        .unwrap();
        assert!(rec.converged);
        assert!(monotone, "m = 0 decay must be monotone");
        assert!(end.max_weight() < 1e-6, "max weight {}", end.max_weight());
        assert_eq!(*rec.coop_mean_degree.last().unwrap(), 0.0);
        assert_eq!(*rec.coop_mean_degree.first().unwrap(), 3.0);
    }

    #[test]
    fn evolve_exit_honors_convergence_tolerance() {
        let g = gp(0.0, 1.0, 1.0);
        let (_, h) = random_instance(23, 3);
        let s0 = CooperationState::uniform(3).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 1_000_000, None, 50).unwrap();
        let mut last_delta = f64::INFINITY;
        let (_, rec) = evolve_observed(&s0, &h, &g, &cfg, 1e-6, |info| {
            last_delta = info.max_delta;
            std::ops::ControlFlow::Continue(())
        })
        .unwrap();
        assert!(rec.converged);
        assert!(last_delta <= cfg.convergence_tol());
        assert!(rec.steps_taken < cfg.max_steps());
    }

    #[test]
    fn evolve_growth_with_perfect_link() {
        // H = 1, m = 1: cost term vanishes, weights grow monotonically.
        let g = gp(1.0, 1.0, 1.0);
        let h = symmetric_h(2, 1.0);
        let s0 = CooperationState::uniform(2).unwrap();
        let cfg = IntegratorConfig::new(1e-4, 5_000, None, 100).unwrap();
        let mut prev = 1.0;
        let mut monotone = true;
        let (end, rec) = evolve_observed(&s0, &h, &g, &cfg, 1e-6, |info| {
            let w = info.state.weight(0, 1);
            if w < prev {
                monotone = false;
            }
            prev = w;
            std::ops::ControlFlow::Continue(())
        })
        .unwrap();
        assert!(!rec.converged);
        assert!(monotone);
        assert!(end.weight(0, 1) > 1.0);
    }

    #[test]
    fn evolve_is_bit_deterministic() {
        let g = gp(1.0, 1.0, 1.0);
        let (s0, h) = random_instance(3, 5);
        let cfg = IntegratorConfig::new(1e-4, 2_000, None, 100).unwrap();
        let (end_a, rec_a) = evolve(&s0, &h, &g, &cfg, 1e-6).unwrap();
        let (end_b, rec_b) = evolve(&s0, &h, &g, &cfg, 1e-6).unwrap();
        assert_eq!(end_a, end_b);
        assert_eq!(rec_a, rec_b);
    }

    #[test]
    fn evolve_keeps_weights_nonnegative_with_zero_diagonal() {
        let g = gp(2.0, 0.5, 0.5);
        let (s0, h) = random_instance(9, 6);
        let cfg = IntegratorConfig::new(1e-3, 3_000, None, 37).unwrap();
        let (_, _) = evolve_observed(&s0, &h, &g, &cfg, 1e-6, |info| {
            let e = info.state.weights();
            for i in 0..e.n() {
                assert_eq!(e.get(i, i), 0.0);
                for j in 0..e.n() {
                    assert!(e.get(i, j) >= 0.0);
                }
            }
            std::ops::ControlFlow::Continue(())
        })
        .unwrap();
    }

    #[test]
    fn evolve_observer_can_stop_early() {
        let g = gp(1.0, 1.0, 1.0);
        let (s0, h) = random_instance(41, 4);
        let cfg = IntegratorConfig::new(1e-4, 100_000, None, 1_000).unwrap();
        let (_, rec) = evolve_observed(&s0, &h, &g, &cfg, 1e-6, |info| {
            if info.step == 123 {
                std::ops::ControlFlow::Break(())
            } else {
                std::ops::ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert_eq!(rec.steps_taken, 123);
        assert!(!rec.converged);
        assert_relative_eq!(*rec.times.last().unwrap(), 123.0 * 1e-4, max_relative = 1e-12);
    }

    #[test]
    fn trajectory_times_strictly_increasing() {
        let g = gp(1.0, 1.0, 1.0);
        let (s0, h) = random_instance(31, 4);
        let cfg = IntegratorConfig::new(1e-4, 1_234, None, 100).unwrap();
        let (_, rec) = evolve(&s0, &h, &g, &cfg, 1e-6).unwrap();
        assert!(rec.times.windows(2).all(|w| w[0] < w[1]));
        let len = rec.times.len();
        assert_eq!(rec.coop_mean_degree.len(), len);
        assert_eq!(rec.coop_assortativity.len(), len);
        assert_eq!(rec.total_payoff.len(), len);
        assert_eq!(rec.potential.len(), len);
        assert_eq!(rec.clamp_events.len(), len);
    }

    #[test]
    fn scalar_ode_error_halves_with_step() {
        // Global Euler error is O(s): halving s roughly halves the error.
        let g = gp(0.0, 1.0, 1.0);
        let h = symmetric_h(2, 0.5);
        let exact = (-0.5f64).exp();
        let mut errs = Vec::new();
        for &s in &[1e-4f64, 5e-5] {
            let mut e = SquareMatrix::zeros(2);
            e.set(0, 1, 1.0);
            let state = CooperationState::from_matrix(e, 0.0).unwrap();
            let steps = (1.0 / s).round() as u64;
            let cfg = IntegratorConfig::new(s, steps, Some(1e-300), steps).unwrap();
            let (end, _) = evolve(&state, &h, &g, &cfg, 1e-6).unwrap();
            errs.push((end.weight(0, 1) - exact).abs());
        }
        let ratio = errs[0] / errs[1];
        assert!(
            (1.5..=2.5).contains(&ratio),
            "error ratio {ratio}, errors {errs:?}"
        );
    }
}
