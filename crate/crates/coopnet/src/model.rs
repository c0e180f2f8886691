//! Physical network model: node deployments, Rayleigh-fading pairwise
//! connection probabilities, connectivity matrices, realized graphs, and
//! the closed-form degree observables.

use crate::error::{Error, Result};
use crate::matrix::{SerializeRows, SquareMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::Error as _;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::PI;

/// Simulation region: a square with hard borders or its borderless torus
/// counterpart (wrapped Euclidean metric).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Domain {
    Square { side: f64 },
    Torus { side: f64 },
}

impl Domain {
    pub fn square(side: f64) -> Result<Self> {
        Self::check_side(side)?;
        Ok(Domain::Square { side })
    }

    pub fn torus(side: f64) -> Result<Self> {
        Self::check_side(side)?;
        Ok(Domain::Torus { side })
    }

    fn check_side(side: f64) -> Result<()> {
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::invalid(format!("domain side must be > 0, got {side}")));
        }
        Ok(())
    }

    pub fn side(&self) -> f64 {
        match *self {
            Domain::Square { side } | Domain::Torus { side } => side,
        }
    }

    pub fn area(&self) -> f64 {
        self.side() * self.side()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let l = self.side();
        p[0] >= 0.0 && p[0] <= l && p[1] >= 0.0 && p[1] <= l
    }

    /// Distance under the domain metric: plain Euclidean on the square,
    /// wrapped Euclidean on the torus.
    pub fn distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        match *self {
            Domain::Square { .. } => (a[0] - b[0]).hypot(a[1] - b[1]),
            Domain::Torus { side } => {
                let dx = wrap_delta(a[0] - b[0], side);
                let dy = wrap_delta(a[1] - b[1], side);
                dx.hypot(dy)
            }
        }
    }
}

#[inline]
fn wrap_delta(d: f64, side: f64) -> f64 {
    let d = d.abs();
    d.min(side - d)
}

/// A fixed set of node positions inside a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Deployment {
    domain: Domain,
    positions: Vec<[f64; 2]>,
}

impl Deployment {
    pub fn new(domain: Domain, positions: Vec<[f64; 2]>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::invalid(format!(
                "deployment needs at least 2 nodes, got {}",
                positions.len()
            )));
        }
        if let Some(p) = positions.iter().find(|p| !domain.contains(**p)) {
            return Err(Error::invalid(format!(
                "position ({}, {}) lies outside the domain",
                p[0], p[1]
            )));
        }
        Ok(Deployment { domain, positions })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.domain.distance(self.positions[i], self.positions[j])
    }
}

impl Serialize for Deployment {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("Deployment", 3)?;
        st.serialize_field("n", &self.n())?;
        st.serialize_field("domain", &self.domain)?;
        st.serialize_field("positions", &self.positions)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for Deployment {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            n: usize,
            domain: Domain,
            positions: Vec<[f64; 2]>,
        }
        let repr = Repr::deserialize(deserializer)?;
        if repr.n != repr.positions.len() {
            return Err(D::Error::custom(format!(
                "n = {} does not match {} positions",
                repr.n,
                repr.positions.len()
            )));
        }
        Deployment::new(repr.domain, repr.positions).map_err(D::Error::custom)
    }
}

/// Wireless channel parameters. `eta` is the path-loss exponent; the
/// hard-disk (unit-disk) limit is expressed as `eta = f64::INFINITY`, in
/// which case `eps` plays no role. The composite transmit threshold is
/// always `r0^-eta`; it is never an independent input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelParams {
    eta: f64,
    eps: f64,
    r0: f64,
}

impl ChannelParams {
    pub fn new(eta: f64, eps: f64, r0: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::invalid(format!("eta must be > 0, got {eta}")));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("eps must be >= 0, got {eps}")));
        }
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::invalid(format!("r0 must be > 0, got {r0}")));
        }
        Ok(ChannelParams { eta, eps, r0 })
    }

    /// Hard-disk (Gilbert) limit of the connection model.
    pub fn hard_disk(r0: f64) -> Result<Self> {
        Self::new(f64::INFINITY, 0.0, r0)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn is_hard_disk(&self) -> bool {
        self.eta.is_infinite()
    }
}

/// Symmetric matrix of pairwise connection probabilities with zero
/// diagonal; channel reciprocity makes it symmetric by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivityMatrix {
    h: SquareMatrix,
}

impl ConnectivityMatrix {
    pub fn from_matrix(h: SquareMatrix) -> Result<Self> {
        let n = h.n();
        if n < 2 {
            return Err(Error::invalid("connectivity matrix needs n >= 2"));
        }
        for i in 0..n {
            if h.get(i, i) != 0.0 {
                return Err(Error::invalid(format!("nonzero diagonal at ({i}, {i})")));
            }
            for j in 0..n {
                let v = h.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!(
                        "entry ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
            }
        }
        if !h.is_symmetric() {
            return Err(Error::invalid("connectivity matrix must be symmetric"));
        }
        Ok(ConnectivityMatrix { h })
    }

    pub fn n(&self) -> usize {
        self.h.n()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.h.get(i, j)
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.h
    }
}

impl Serialize for ConnectivityMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("ConnectivityMatrix", 2)?;
        st.serialize_field("n", &self.n())?;
        st.serialize_field("h", &SerializeRows(&self.h))?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for ConnectivityMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            n: usize,
            h: Vec<Vec<f64>>,
        }
        let repr = Repr::deserialize(deserializer)?;
        if repr.n != repr.h.len() {
            return Err(D::Error::custom(format!(
                "n = {} does not match {} matrix rows",
                repr.n,
                repr.h.len()
            )));
        }
        let m = SquareMatrix::from_rows(repr.h).map_err(D::Error::custom)?;
        ConnectivityMatrix::from_matrix(m).map_err(D::Error::custom)
    }
}

/// Undirected simple graph on `n` nodes; edges stored as (lo, hi) pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryGraph {
    n: usize,
    edges: Vec<(u32, u32)>,
}

impl BinaryGraph {
    pub fn from_edges(n: usize, edges: Vec<(u32, u32)>) -> Result<Self> {
        let mut normalized: Vec<(u32, u32)> = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a == b {
                return Err(Error::invalid(format!("self-loop at node {a}")));
            }
            if a as usize >= n || b as usize >= n {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) out of range for n = {n}"
                )));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        let before = normalized.len();
        normalized.dedup();
        if normalized.len() != before {
            return Err(Error::invalid("duplicate edges in graph"));
        }
        Ok(BinaryGraph { n, edges: normalized })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n];
        for &(a, b) in &self.edges {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        deg
    }
}

impl Serialize for BinaryGraph {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("BinaryGraph", 2)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("edges", &self.edges)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for BinaryGraph {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            n: usize,
            edges: Vec<(u32, u32)>,
        }
        let repr = Repr::deserialize(deserializer)?;
        BinaryGraph::from_edges(repr.n, repr.edges).map_err(D::Error::custom)
    }
}

/// Samples `n` node positions independently and uniformly over the domain
/// (binomial point process). Identical `(n, domain, seed)` give identical
/// deployments; the generator is ChaCha8 seeded with the 64-bit seed.
pub fn sample_deployment(n: usize, domain: Domain, seed: u64) -> Result<Deployment> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 nodes, got {n}")));
    }
    let l = domain.side();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..n)
        .map(|_| {
            let x: f64 = rng.gen::<f64>() * l;
            let y: f64 = rng.gen::<f64>() * l;
            [x, y]
        })
        .collect();
    Deployment::new(domain, positions)
}

/// Non-singular path-loss gain `1 / (eps + r^eta)`.
///
/// With `eps = 0` the gain diverges at `r = 0`; that case is signalled as
/// [`Error::SingularGain`] and the caller decides (the connection
/// probability convention treats it as 1).
pub fn path_loss(r: f64, ch: &ChannelParams) -> Result<f64> {
    if r < 0.0 {
        return Err(Error::invalid(format!("distance must be >= 0, got {r}")));
    }
    if r == 0.0 && ch.eps == 0.0 {
        return Err(Error::SingularGain);
    }
    Ok(1.0 / (ch.eps + r.powf(ch.eta)))
}

/// Pairwise connection probability at distance `r`.
///
/// Soft mode: `exp(-(eps + r^eta) / r0^eta)`, the Rayleigh-fading outage
/// complement. Hard-disk mode (`eta = inf`): the indicator of `r <= r0`.
pub fn pair_connectivity(r: f64, ch: &ChannelParams) -> f64 {
    debug_assert!(r >= 0.0);
    if ch.is_hard_disk() {
        return if r <= ch.r0 { 1.0 } else { 0.0 };
    }
    (-(ch.eps + r.powf(ch.eta)) / ch.r0.powf(ch.eta)).exp()
}

/// Fills the symmetric connection-probability matrix for a deployment
/// under the domain metric. Coincident nodes with `eps = 0` get
/// probability 1 (the r -> 0 limit) and a warning.
pub fn build_connectivity_matrix(dep: &Deployment, ch: &ChannelParams) -> ConnectivityMatrix {
    let n = dep.n();
    let mut h = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let r = dep.distance(i, j);
            if r == 0.0 && ch.eps == 0.0 && !ch.is_hard_disk() {
                log::warn!("coincident nodes {i} and {j} with eps = 0; using connection probability 1");
            }
            let p = pair_connectivity(r, ch);
            h.set(i, j, p);
            h.set(j, i, p);
        }
    }
    ConnectivityMatrix { h }
}

/// Realizes a binary graph from the connection-probability matrix: one
/// uniform draw `zeta` in [0, 1) per unordered pair, edge present iff
/// `zeta <= H_ij`. Entries with `H_ij = 0` never produce an edge. The
/// pair order is row-major `(i, j), i < j`, so a seed fixes the graph.
pub fn realize_edges(h: &ConnectivityMatrix, seed: u64) -> BinaryGraph {
    let n = h.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let zeta: f64 = rng.gen();
            let p = h.get(i, j);
            if p > 0.0 && zeta <= p {
                edges.push((i as u32, j as u32));
            }
        }
    }
    BinaryGraph { n, edges }
}

/// Expected 1-hop degree on a borderless domain,
/// `exp(-eps/r0^eta) * 2 rho pi r0^2 Gamma(2/eta) / eta`;
/// the guard-zone factor multiplies out of the integral exactly.
/// Hard-disk mode gives the `eta -> inf` limit `rho pi r0^2`.
pub fn analytic_mean_degree(rho: f64, ch: &ChannelParams) -> f64 {
    analytic_mean_degree_no_guard(rho, ch) * guard_factor(ch)
}

/// Mean degree with the guard-zone factor dropped, i.e. the plain
/// `2 rho pi r0^2 Gamma(2/eta) / eta` form regardless of `eps`.
pub fn analytic_mean_degree_no_guard(rho: f64, ch: &ChannelParams) -> f64 {
    if ch.is_hard_disk() {
        return rho * PI * ch.r0 * ch.r0;
    }
    2.0 * rho * PI * ch.r0 * ch.r0 * gamma(2.0 / ch.eta) / ch.eta
}

fn guard_factor(ch: &ChannelParams) -> f64 {
    if ch.is_hard_disk() {
        1.0
    } else {
        (-ch.eps / ch.r0.powf(ch.eta)).exp()
    }
}

/// Probability that node `i` connects to a uniformly placed peer,
/// `(1/V) * integral of H over the domain`, evaluated on a deterministic
/// midpoint grid with `resolution` points per axis. On the torus the
/// integral is translation invariant and is computed in the offset
/// variable, so every node yields the identical value.
pub fn local_connection_probability(
    i: usize,
    dep: &Deployment,
    ch: &ChannelParams,
    resolution: usize,
) -> Result<f64> {
    if i >= dep.n() {
        return Err(Error::invalid(format!("node index {i} out of range")));
    }
    if resolution < 8 {
        return Err(Error::invalid(format!(
            "quadrature resolution must be at least 8, got {resolution}"
        )));
    }
    let l = dep.domain().side();
    let step = l / resolution as f64;
    let mut sum = 0.0;
    match dep.domain() {
        Domain::Torus { side } => {
            for a in 0..resolution {
                let ux = wrap_delta((a as f64 + 0.5) * step, side);
                for b in 0..resolution {
                    let uy = wrap_delta((b as f64 + 0.5) * step, side);
                    sum += pair_connectivity(ux.hypot(uy), ch);
                }
            }
        }
        Domain::Square { .. } => {
            let p = dep.positions()[i];
            for a in 0..resolution {
                let x = (a as f64 + 0.5) * step;
                for b in 0..resolution {
                    let y = (b as f64 + 0.5) * step;
                    sum += pair_connectivity((x - p[0]).hypot(y - p[1]), ch);
                }
            }
        }
    }
    Ok(sum / (resolution * resolution) as f64)
}

/// Which law `degree_pmf` evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DegreePmf {
    /// Exact Binomial(n-1, h_i).
    Binomial,
    /// Poisson approximation with lambda = (n-1) h_i.
    PoissonApprox,
}

/// Degree distribution of a node with local connection probability `h_i`
/// among `n` nodes, as a vector over k = 0..n-1.
pub fn degree_pmf(h_i: f64, n: usize, kind: DegreePmf) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&h_i) {
        return Err(Error::invalid(format!("h_i = {h_i} outside [0, 1]")));
    }
    if n < 2 {
        return Err(Error::invalid(format!("need n >= 2, got {n}")));
    }
    let trials = n - 1;
    let mut pmf = vec![0.0; n];
    match kind {
        DegreePmf::Binomial => {
            if h_i == 0.0 {
                pmf[0] = 1.0;
            } else if h_i == 1.0 {
                pmf[trials] = 1.0;
            } else {
                let ln_p = h_i.ln();
                let ln_q = (-h_i).ln_1p();
                let ln_fact_n = ln_gamma(trials as f64 + 1.0);
                for (k, slot) in pmf.iter_mut().enumerate() {
                    let ln_choose = ln_fact_n
                        - ln_gamma(k as f64 + 1.0)
                        - ln_gamma((trials - k) as f64 + 1.0);
                    *slot = (ln_choose + k as f64 * ln_p + (trials - k) as f64 * ln_q).exp();
                }
            }
        }
        DegreePmf::PoissonApprox => {
            let lambda = trials as f64 * h_i;
            pmf[0] = (-lambda).exp();
            for k in 1..n {
                pmf[k] = pmf[k - 1] * lambda / k as f64;
            }
        }
    }
    Ok(pmf)
}
