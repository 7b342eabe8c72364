//! Dynamic path-length Hamiltonian sampler.
//!
//! Doubling trajectories with a slice acceptance rule, dual-averaging step
//! size adaptation toward a target acceptance statistic, and a diagonal mass
//! matrix estimated from a warmup window. Divergent transitions are counted
//! and reported, not hidden.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::posterior::{Posterior, PriorSpec};
use super::InferError;
use crate::model::Panel;

/// Energy-error threshold beyond which a transition is flagged divergent.
const DELTA_MAX: f64 = 1000.0;
/// SD of the Gaussian jitter used for chain starting points.
const INIT_SD: f64 = 0.1;
const DA_GAMMA: f64 = 0.05;
const DA_T0: f64 = 10.0;
const DA_KAPPA: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(n_iterations: usize, burnin: usize, thin: usize, seed: u64) -> Self {
        Self {
            n_chains: 4,
            n_iterations,
            burnin,
            thin,
            target_accept: 0.8,
            max_tree_depth: 10,
            seed,
        }
    }

    /// Desk-scale budget used by the `--fast` preset.
    pub fn fast(seed: u64) -> Self {
        Self::new(4000, 1000, 4, seed)
    }

    pub fn n_kept(&self) -> usize {
        (self.n_iterations - self.burnin) / self.thin
    }

    pub fn validate(&self) -> Result<(), InferError> {
        if self.n_chains == 0 {
            return Err(InferError::InvalidConfig("need at least one chain".into()));
        }
        if self.burnin >= self.n_iterations {
            return Err(InferError::InvalidConfig(format!(
                "burnin {} must be smaller than n_iterations {}",
                self.burnin, self.n_iterations
            )));
        }
        if self.thin == 0 {
            return Err(InferError::InvalidConfig("thin must be >= 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(InferError::InvalidConfig(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if self.max_tree_depth == 0 {
            return Err(InferError::InvalidConfig("max_tree_depth must be >= 1".into()));
        }
        Ok(())
    }
}

/// Post-burnin, thinned draws on the constrained scale.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    names: Vec<String>,
    chains: Vec<Vec<Vec<f64>>>,
    pub divergences: Vec<usize>,
    pub mean_accept: Vec<f64>,
    pub step_size: Vec<f64>,
}

impl PosteriorDraws {
    /// Assemble draws directly, e.g. synthetic chains in tests. Every chain
    /// must have the same number of rows, every row one value per name.
    pub fn from_chains(names: Vec<String>, chains: Vec<Vec<Vec<f64>>>) -> Result<Self, InferError> {
        if chains.is_empty() {
            return Err(InferError::InvalidConfig("no chains supplied".into()));
        }
        let rows = chains[0].len();
        for chain in &chains {
            if chain.len() != rows {
                return Err(InferError::DimensionMismatch(
                    "chains have differing draw counts".into(),
                ));
            }
            for row in chain {
                if row.len() != names.len() {
                    return Err(InferError::DimensionMismatch(
                        "draw length does not match name table".into(),
                    ));
                }
            }
        }
        let n = chains.len();
        Ok(Self {
            names,
            chains,
            divergences: vec![0; n],
            mean_accept: vec![f64::NAN; n],
            step_size: vec![f64::NAN; n],
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_kept(&self) -> usize {
        self.chains[0].len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, chain: usize, iteration: usize, param: usize) -> f64 {
        self.chains[chain][iteration][param]
    }

    pub fn param_column(&self, chain: usize, param: usize) -> Vec<f64> {
        self.chains[chain].iter().map(|row| row[param]).collect()
    }

    /// All chains concatenated, chain order.
    pub fn pooled(&self, param: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_chains() * self.n_kept());
        for chain in &self.chains {
            out.extend(chain.iter().map(|row| row[param]));
        }
        out
    }

    /// Reorder chains; diagnostics should not depend on chain order.
    pub fn permuted_chains(&self, order: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            chains: order.iter().map(|&c| self.chains[c].clone()).collect(),
            divergences: order.iter().map(|&c| self.divergences[c]).collect(),
            mean_accept: order.iter().map(|&c| self.mean_accept[c]).collect(),
            step_size: order.iter().map(|&c| self.step_size[c]).collect(),
        }
    }
}

#[derive(Clone)]
struct Point {
    q: Vec<f64>,
    logp: f64,
    grad: Vec<f64>,
}

struct StepStats {
    accept: f64,
    divergent: bool,
}

struct Tree {
    minus: Point,
    r_minus: Vec<f64>,
    plus: Point,
    r_plus: Vec<f64>,
    proposal: Point,
    n: f64,
    cont: bool,
    sum_alpha: f64,
    n_alpha: f64,
    divergent: bool,
}

struct DualAveraging {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    m: f64,
    target: f64,
}

impl DualAveraging {
    fn new(eps0: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * eps0).ln(),
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            m: 0.0,
            target,
        }
    }

    fn update(&mut self, accept: f64) {
        self.m += 1.0;
        let eta = 1.0 / (self.m + DA_T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept);
        self.log_eps = self.mu - self.m.sqrt() / DA_GAMMA * self.h_bar;
        let w = self.m.powf(-DA_KAPPA);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
    }

    fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    fn averaged(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

struct Chain<'a> {
    post: &'a Posterior<'a>,
    rng: ChaCha12Rng,
    inv_mass: Vec<f64>,
    eps: f64,
    max_depth: usize,
}

impl<'a> Chain<'a> {
    fn point_at(&self, q: Vec<f64>) -> Point {
        let mut grad = vec![0.0; q.len()];
        let logp = self.post.log_density_and_grad(&q, &mut grad);
        Point { q, logp, grad }
    }

    fn draw_momentum(&mut self) -> Vec<f64> {
        self.inv_mass
            .iter()
            .map(|&im| {
                let z: f64 = self.rng.sample(StandardNormal);
                z / im.sqrt()
            })
            .collect()
    }

    fn kinetic(&self, r: &[f64]) -> f64 {
        0.5 * r
            .iter()
            .zip(&self.inv_mass)
            .map(|(&ri, &im)| ri * ri * im)
            .sum::<f64>()
    }

    fn joint(&self, point: &Point, r: &[f64]) -> f64 {
        if point.logp.is_finite() {
            point.logp - self.kinetic(r)
        } else {
            f64::NEG_INFINITY
        }
    }

    fn leapfrog(&self, point: &Point, r: &[f64], step: f64) -> (Point, Vec<f64>) {
        let mut r_new = r.to_vec();
        for (momentum, grad) in r_new.iter_mut().zip(&point.grad) {
            *momentum += 0.5 * step * grad;
        }
        let mut q_new = point.q.clone();
        for ((position, inv_mass), momentum) in
            q_new.iter_mut().zip(&self.inv_mass).zip(&r_new)
        {
            *position += step * inv_mass * momentum;
        }
        let next = self.point_at(q_new);
        for (momentum, grad) in r_new.iter_mut().zip(&next.grad) {
            *momentum += 0.5 * step * grad;
        }
        (next, r_new)
    }

    // Written so that NaN anywhere stops the trajectory.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn uturn(&self, minus: &Point, plus: &Point, r_minus: &[f64], r_plus: &[f64]) -> bool {
        let mut forward = 0.0;
        let mut backward = 0.0;
        for d in 0..minus.q.len() {
            let dq = plus.q[d] - minus.q[d];
            forward += dq * self.inv_mass[d] * r_plus[d];
            backward += dq * self.inv_mass[d] * r_minus[d];
        }
        !(forward > 0.0 && backward > 0.0)
    }

    fn leaf(&mut self, start: &Point, r: &[f64], log_u: f64, dir: f64, joint0: f64) -> Tree {
        let (point, r_new) = self.leapfrog(start, r, dir * self.eps);
        let joint = self.joint(&point, &r_new);
        let n = if joint.is_finite() && log_u <= joint { 1.0 } else { 0.0 };
        // NaN joints must count as divergent.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        let divergent = !(joint - log_u > -DELTA_MAX);
        let alpha = if joint - joint0 > 0.0 {
            1.0
        } else {
            let ratio = (joint - joint0).exp();
            if ratio.is_finite() {
                ratio
            } else {
                0.0
            }
        };
        Tree {
            minus: point.clone(),
            r_minus: r_new.clone(),
            plus: point.clone(),
            r_plus: r_new.clone(),
            proposal: point,
            n,
            cont: !divergent,
            sum_alpha: alpha,
            n_alpha: 1.0,
            divergent,
        }
    }

    fn build_tree(
        &mut self,
        start: &Point,
        r: &[f64],
        log_u: f64,
        dir: f64,
        depth: usize,
        joint0: f64,
    ) -> Tree {
        if depth == 0 {
            return self.leaf(start, r, log_u, dir, joint0);
        }
        let mut tree = self.build_tree(start, r, log_u, dir, depth - 1, joint0);
        if !tree.cont {
            return tree;
        }
        let other = if dir < 0.0 {
            let t = self.build_tree(&tree.minus.clone(), &tree.r_minus.clone(), log_u, dir, depth - 1, joint0);
            tree.minus = t.minus.clone();
            tree.r_minus = t.r_minus.clone();
            t
        } else {
            let t = self.build_tree(&tree.plus.clone(), &tree.r_plus.clone(), log_u, dir, depth - 1, joint0);
            tree.plus = t.plus.clone();
            tree.r_plus = t.r_plus.clone();
            t
        };
        let total = tree.n + other.n;
        if other.n > 0.0 && self.rng.random::<f64>() < other.n / total {
            tree.proposal = other.proposal;
        }
        tree.n = total;
        tree.sum_alpha += other.sum_alpha;
        tree.n_alpha += other.n_alpha;
        tree.divergent |= other.divergent;
        tree.cont =
            other.cont && !self.uturn(&tree.minus, &tree.plus, &tree.r_minus, &tree.r_plus);
        tree
    }

    fn step(&mut self, current: Point) -> (Point, StepStats) {
        let r0 = self.draw_momentum();
        let joint0 = self.joint(&current, &r0);
        let log_u = joint0 + self.rng.random::<f64>().ln();
        let mut minus = current.clone();
        let mut plus = current.clone();
        let mut r_minus = r0.clone();
        let mut r_plus = r0;
        let mut proposal = current;
        let mut n = 1.0;
        let mut cont = true;
        let mut depth = 0;
        let mut sum_alpha = 0.0;
        let mut n_alpha = 0.0;
        let mut divergent = false;
        while cont && depth < self.max_depth {
            let forward: bool = self.rng.random();
            let tree = if forward {
                let t = self.build_tree(&plus.clone(), &r_plus.clone(), log_u, 1.0, depth, joint0);
                plus = t.plus.clone();
                r_plus = t.r_plus.clone();
                t
            } else {
                let t = self.build_tree(&minus.clone(), &r_minus.clone(), log_u, -1.0, depth, joint0);
                minus = t.minus.clone();
                r_minus = t.r_minus.clone();
                t
            };
            divergent |= tree.divergent;
            sum_alpha += tree.sum_alpha;
            n_alpha += tree.n_alpha;
            if tree.cont && tree.n > 0.0 && self.rng.random::<f64>() < (tree.n / n).min(1.0) {
                proposal = tree.proposal;
            }
            n += tree.n;
            cont = tree.cont && !self.uturn(&minus, &plus, &r_minus, &r_plus);
            depth += 1;
        }
        let accept = if n_alpha > 0.0 { sum_alpha / n_alpha } else { 0.0 };
        (proposal, StepStats { accept, divergent })
    }

    /// Step-size heuristic: double or halve until a single step crosses the
    /// 0.5 acceptance boundary.
    fn find_reasonable_eps(&mut self, point: &Point) -> f64 {
        let mut eps = 1.0;
        let r0 = self.draw_momentum();
        let joint0 = self.joint(point, &r0);
        let joint_at = |chain: &Self, eps: f64| -> f64 {
            let (p, r) = chain.leapfrog(point, &r0, eps);
            chain.joint(&p, &r)
        };
        let mut joint = joint_at(self, eps);
        let mut shrink_guard = 0;
        while !joint.is_finite() && shrink_guard < 60 {
            eps *= 0.5;
            joint = joint_at(self, eps);
            shrink_guard += 1;
        }
        if !joint.is_finite() {
            return 1e-6;
        }
        let dir = if joint - joint0 > (0.5f64).ln() { 1.0 } else { -1.0 };
        for _ in 0..100 {
            if dir * (joint - joint0) <= dir * ((0.5f64).ln()) {
                break;
            }
            eps *= 2f64.powf(dir);
            if !(1e-10..=1e6).contains(&eps) {
                break;
            }
            joint = joint_at(self, eps);
            if !joint.is_finite() {
                eps *= 0.5;
                break;
            }
        }
        eps.clamp(1e-10, 1e6)
    }
}

struct ChainOutput {
    rows: Vec<Vec<f64>>,
    divergences: usize,
    mean_accept: f64,
    step_size: f64,
}

fn run_chain(
    post: &Posterior<'_>,
    cfg: &SamplerConfig,
    chain_id: usize,
) -> Result<ChainOutput, InferError> {
    let dim = post.dim();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain_id as u64);
    let mut chain = Chain {
        post,
        rng,
        inv_mass: vec![1.0; dim],
        eps: 1.0,
        max_depth: cfg.max_tree_depth,
    };

    let mut point = None;
    for _ in 0..100 {
        let q: Vec<f64> = (0..dim)
            .map(|_| {
                let z: f64 = chain.rng.sample(StandardNormal);
                INIT_SD * z
            })
            .collect();
        let candidate = chain.point_at(q);
        if candidate.logp.is_finite() {
            point = Some(candidate);
            break;
        }
    }
    let mut point = point.ok_or_else(|| {
        InferError::DegenerateLikelihood(
            "log posterior is not finite at any sampled starting point; \
             the data may be impossible under the splitting model"
                .into(),
        )
    })?;

    chain.eps = chain.find_reasonable_eps(&point);
    let mut da = DualAveraging::new(chain.eps, cfg.target_accept);
    let two_window = cfg.burnin >= 40;
    let window_start = cfg.burnin / 4;
    let window_end = cfg.burnin / 2;
    let mut window: Vec<Vec<f64>> = Vec::new();
    for m in 1..=cfg.burnin {
        let (next, stats) = chain.step(point);
        point = next;
        da.update(stats.accept);
        chain.eps = da.current();
        if two_window {
            if m > window_start && m <= window_end {
                window.push(point.q.clone());
            }
            if m == window_end {
                chain.inv_mass = estimate_inv_mass(&window, dim);
                window.clear();
                chain.eps = chain.find_reasonable_eps(&point);
                da = DualAveraging::new(chain.eps, cfg.target_accept);
            }
        }
    }
    if cfg.burnin > 0 {
        chain.eps = da.averaged().clamp(1e-10, 1e6);
    }

    let keep_every = cfg.thin;
    let post_burnin = cfg.n_iterations - cfg.burnin;
    let mut rows = Vec::with_capacity(post_burnin / keep_every);
    let mut divergences = 0usize;
    let mut accept_sum = 0.0;
    for k in 1..=post_burnin {
        let (next, stats) = chain.step(point);
        point = next;
        if stats.divergent {
            divergences += 1;
        }
        accept_sum += stats.accept;
        if k % keep_every == 0 {
            rows.push(post.layout().to_constrained(&point.q));
        }
    }
    if 2 * divergences > post_burnin {
        return Err(InferError::TooManyDivergences {
            chain: chain_id,
            divergent: divergences,
            total: post_burnin,
        });
    }
    Ok(ChainOutput {
        rows,
        divergences,
        mean_accept: accept_sum / post_burnin as f64,
        step_size: chain.eps,
    })
}

fn estimate_inv_mass(window: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let n = window.len();
    if n < 10 {
        return vec![1.0; dim];
    }
    let nf = n as f64;
    (0..dim)
        .map(|d| {
            let mean = window.iter().map(|q| q[d]).sum::<f64>() / nf;
            let var = window.iter().map(|q| (q[d] - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            // Shrink toward a small scale, as a regularized estimate.
            let shrunk = var * nf / (nf + 5.0) + 1e-3 * (5.0 / (nf + 5.0));
            shrunk.max(1e-10)
        })
        .collect()
}

/// Run independent chains of the sampler and collect thinned post-burnin
/// draws on the constrained scale. Deterministic given `cfg.seed`; chains
/// run in parallel.
pub fn sample(
    panel: &Panel,
    prior: &PriorSpec,
    cfg: &SamplerConfig,
    splitting_enabled: bool,
) -> Result<PosteriorDraws, InferError> {
    cfg.validate()?;
    let post = Posterior::new(panel, *prior, splitting_enabled)?;
    let outputs: Result<Vec<ChainOutput>, InferError> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|chain_id| run_chain(&post, cfg, chain_id))
        .collect();
    let outputs = outputs?;
    let mut chains = Vec::with_capacity(outputs.len());
    let mut divergences = Vec::with_capacity(outputs.len());
    let mut mean_accept = Vec::with_capacity(outputs.len());
    let mut step_size = Vec::with_capacity(outputs.len());
    for output in outputs {
        chains.push(output.rows);
        divergences.push(output.divergences);
        mean_accept.push(output.mean_accept);
        step_size.push(output.step_size);
    }
    Ok(PosteriorDraws {
        names: post.layout().constrained_names().to_vec(),
        chains,
        divergences,
        mean_accept,
        step_size,
    })
}
