//! Optimal transport between weighted 2-D point clouds and the affine
//! Monge-map fit used to populate the equalizer codebook.
//!
//! [`sinkhorn`] solves the entropically regularized problem with
//! log-stabilized scaling iterations; [`exact_emd`] is an exact
//! successive-shortest-path solver for small instances and serves as the
//! reference for Sinkhorn. [`fit_affine_map`] alternates between a coupling
//! and a weighted ridge regression onto the coupling's barycentric targets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equalizer::TransformCodebook;
use crate::error::{Error, Result};
use crate::language::{Encoder, Language, SemanticSymbol};
use crate::mismatch::{atom_members, check_compatible};

pub type Point = [f64; 2];

/// Sinkhorn stops once both L1 marginal residuals fall below this.
pub const SINKHORN_TOLERANCE: f64 = 1e-9;
/// Residual above which an exhausted Sinkhorn run counts as a failure.
pub const SINKHORN_FAILURE: f64 = 1e-6;
/// Largest `rows × cols` accepted by [`exact_emd`].
pub const EXACT_MAX_CELLS: usize = 10_000;

const ABSORB_THRESHOLD: f64 = 1e50;
const CHECK_EVERY: usize = 5;
const MAX_WARM_STAGES: usize = 64;
const WARM_STAGE_ITER: usize = 2000;
const WARM_STAGE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidPointCloud(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidPointCloud(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPointCloud("non-finite coordinate".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidPointCloud(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPointCloud(format!("weights sum to {total}")));
        }
        Ok(Self { points, weights })
    }

    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let n = points.len().max(1);
        Self::new(points, vec![1.0 / n as f64; n])
    }

    /// Normalizes arbitrary nonnegative masses to sum to one.
    pub fn from_masses(points: Vec<Point>, masses: &[f64]) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidPointCloud(
                "total mass must be positive".into(),
            ));
        }
        Self::new(points, masses.iter().map(|m| m / total).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> Point {
        let mut m = [0.0; 2];
        for (p, w) in self.points.iter().zip(&self.weights) {
            m[0] += w * p[0];
            m[1] += w * p[1];
        }
        m
    }

    /// Weighted mean squared distance to the mean.
    pub fn spread(&self) -> f64 {
        let m = self.mean();
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * dist2(p, &m))
            .sum()
    }

    pub fn map(&self, f: impl Fn(&Point) -> Point) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(f).collect(),
            weights: self.weights.clone(),
        }
    }
}

fn dist2(a: &Point, b: &Point) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    d0 * d0 + d1 * d1
}

/// Squared-Euclidean cost matrix, row-major.
pub fn cost_matrix(src: &PointCloud, tgt: &PointCloud) -> Vec<f64> {
    src.points
        .iter()
        .flat_map(|x| tgt.points.iter().map(move |y| dist2(x, y)))
        .collect()
}

/// Mean squared distance between the two clouds once each is centered:
/// `spread(src) + spread(tgt)`. Translation-invariant, like the coupling.
pub fn transport_scale(src: &PointCloud, tgt: &PointCloud) -> f64 {
    src.spread() + tgt.spread()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    rows: usize,
    cols: usize,
    gamma: Vec<f64>,
}

impl Coupling {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gamma[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.gamma
            .chunks(self.cols)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for row in self.gamma.chunks(self.cols) {
            for (acc, v) in s.iter_mut().zip(row) {
                *acc += v;
            }
        }
        s
    }

    /// L1 residuals of the row and column marginals.
    pub fn marginal_residuals(&self, src: &PointCloud, tgt: &PointCloud) -> (f64, f64) {
        let r = l1(&self.row_sums(), src.weights());
        let c = l1(&self.col_sums(), tgt.weights());
        (r, c)
    }

    /// `Σ γ_kl ‖x_k − y_l‖²`.
    pub fn transport_cost(&self, src: &PointCloud, tgt: &PointCloud) -> f64 {
        self.gamma
            .iter()
            .zip(cost_matrix(src, tgt))
            .map(|(g, c)| g * c)
            .sum()
    }

    pub fn frobenius_distance(&self, other: &Coupling) -> f64 {
        self.gamma
            .iter()
            .zip(&other.gamma)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Entropically regularized optimal transport for squared-Euclidean cost.
///
/// Scaling iterations run on a kernel whose exponent is shifted by dual
/// potentials; whenever the scaling vectors grow past `1e50` they are folded
/// back into the potentials and the kernel is rebuilt, so small `epsilon`
/// neither underflows nor overflows.
pub fn sinkhorn(
    src: &PointCloud,
    tgt: &PointCloud,
    epsilon: f64,
    max_iter: usize,
) -> Result<Coupling> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if max_iter == 0 {
        return Err(Error::InvalidParameter(
            "max_iter must be at least 1".into(),
        ));
    }
    let (n, m) = (src.len(), tgt.len());
    let cost = cost_matrix(src, tgt);
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter("cost matrix is not finite".into()));
    }
    let mut state = Scaling::new(&cost, src.weights(), tgt.weights(), n, m);

    // Warm start: halve epsilon from the cost range down to the target,
    // carrying the potentials, so the final stage begins near its solution.
    let range = cost.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - cost.iter().copied().fold(f64::INFINITY, f64::min);
    let mut stages = Vec::new();
    let mut e = epsilon;
    while 2.0 * e < range && stages.len() < MAX_WARM_STAGES {
        e *= 2.0;
        stages.push(e);
    }
    for &e in stages.iter().rev() {
        state.run(e, max_iter.min(WARM_STAGE_ITER), WARM_STAGE_TOLERANCE)?;
    }
    let residual = state.run(epsilon, max_iter, SINKHORN_TOLERANCE)?;
    if residual > SINKHORN_FAILURE {
        return Err(Error::SinkhornNotConverged {
            iterations: max_iter,
            residual,
        });
    }
    Ok(Coupling {
        rows: n,
        cols: m,
        gamma: state.plan(),
    })
}

/// Stabilized scaling state: plan `u_i · exp((f_i + g_j − c_ij)/ε) · v_j`.
struct Scaling<'a> {
    cost: &'a [f64],
    a: &'a [f64],
    b: &'a [f64],
    n: usize,
    m: usize,
    f: Vec<f64>,
    g: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    kernel: Vec<f64>,
    epsilon: f64,
}

impl<'a> Scaling<'a> {
    fn new(cost: &'a [f64], a: &'a [f64], b: &'a [f64], n: usize, m: usize) -> Self {
        // Initial potentials make every row and column of the reduced cost
        // hit zero somewhere, so the first kernel has no all-zero line.
        let f: Vec<f64> = cost
            .chunks(m)
            .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let mut g = vec![f64::INFINITY; m];
        for i in 0..n {
            for j in 0..m {
                g[j] = g[j].min(cost[i * m + j] - f[i]);
            }
        }
        Self {
            cost,
            a,
            b,
            n,
            m,
            f,
            g,
            u: vec![1.0; n],
            v: vec![1.0; m],
            kernel: Vec::new(),
            epsilon: f64::NAN,
        }
    }

    fn rebuild(&mut self) {
        let (n, m, eps) = (self.n, self.m, self.epsilon);
        self.kernel.resize(n * m, 0.0);
        for i in 0..n {
            for j in 0..m {
                self.kernel[i * m + j] =
                    ((self.f[i] + self.g[j] - self.cost[i * m + j]) / eps).exp();
            }
        }
    }

    fn absorb(&mut self) {
        absorb(&mut self.f, &mut self.u, self.epsilon);
        absorb(&mut self.g, &mut self.v, self.epsilon);
    }

    /// Iterates at `epsilon` until the marginal residual drops below `tol`
    /// or `max_iter` runs out; returns the last measured residual.
    fn run(&mut self, epsilon: f64, max_iter: usize, tol: f64) -> Result<f64> {
        if self.epsilon.is_finite() {
            self.absorb();
        }
        self.epsilon = epsilon;
        self.rebuild();
        let (n, m) = (self.n, self.m);
        let mut ktu = vec![0.0; m];
        let mut kv = vec![0.0; n];
        let mut col = vec![0.0; m];
        let mut residual = f64::INFINITY;
        for it in 1..=max_iter {
            // v ← b / Kᵀu
            ktu.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..n {
                let ui = self.u[i];
                for (acc, kij) in ktu.iter_mut().zip(&self.kernel[i * m..(i + 1) * m]) {
                    *acc += kij * ui;
                }
            }
            for j in 0..m {
                self.v[j] = if self.b[j] == 0.0 {
                    0.0
                } else {
                    self.b[j] / ktu[j]
                };
            }
            // u ← a / Kv
            for i in 0..n {
                kv[i] = self.kernel[i * m..(i + 1) * m]
                    .iter()
                    .zip(&self.v)
                    .map(|(k, vj)| k * vj)
                    .sum();
                self.u[i] = if self.a[i] == 0.0 {
                    0.0
                } else {
                    self.a[i] / kv[i]
                };
            }

            let scalings = || self.u.iter().chain(&self.v);
            if scalings().any(|x| !x.is_finite()) {
                return Err(Error::SinkhornNotConverged {
                    iterations: it,
                    residual: f64::NAN,
                });
            }
            if scalings().any(|x| *x > ABSORB_THRESHOLD) {
                self.absorb();
                self.rebuild();
                continue;
            }

            if it % CHECK_EVERY == 0 || it == max_iter {
                // rows are exact after the u-update; measure both anyway
                col.iter_mut().for_each(|x| *x = 0.0);
                let mut row_res = 0.0;
                for i in 0..n {
                    let mut rs = 0.0;
                    for j in 0..m {
                        let p = self.u[i] * self.kernel[i * m + j] * self.v[j];
                        rs += p;
                        col[j] += p;
                    }
                    row_res += (rs - self.a[i]).abs();
                }
                residual = f64::max(row_res, l1(&col, self.b));
                if residual < tol {
                    break;
                }
            }
        }
        Ok(residual)
    }

    fn plan(mut self) -> Vec<f64> {
        let m = self.m;
        for i in 0..self.n {
            for j in 0..m {
                self.kernel[i * m + j] *= self.u[i] * self.v[j];
            }
        }
        self.kernel
    }
}

fn absorb(potential: &mut [f64], scaling: &mut [f64], epsilon: f64) {
    for (p, s) in potential.iter_mut().zip(scaling.iter_mut()) {
        if *s > 0.0 {
            *p += epsilon * s.ln();
        }
        *s = 1.0;
    }
}

/// Exact optimal coupling by successive shortest augmenting paths with
/// Dijkstra on reduced costs.
pub fn exact_emd(src: &PointCloud, tgt: &PointCloud) -> Result<Coupling> {
    let (n, m) = (src.len(), tgt.len());
    if n * m > EXACT_MAX_CELLS {
        return Err(Error::InstanceTooLarge { rows: n, cols: m });
    }
    let cost = cost_matrix(src, tgt);
    let mut supply = src.weights().to_vec();
    let mut demand = tgt.weights().to_vec();
    let mut flow = vec![0.0; n * m];
    // node potentials: sources 0..n, sinks n..n+m
    let mut pot = vec![0.0; n + m];
    let tiny = 1e-15;

    loop {
        let remaining: f64 = supply.iter().sum();
        if remaining <= tiny * n as f64 || demand.iter().all(|&d| d <= tiny) {
            break;
        }
        // Dijkstra on reduced costs from a virtual root joined to every
        // source with spare supply. Offsets `top − π(i)` keep the start
        // labels nonnegative and make labels comparable across roots.
        let nodes = n + m;
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        let top = (0..n)
            .filter(|&i| supply[i] > tiny)
            .map(|i| pot[i])
            .fold(f64::NEG_INFINITY, f64::max);
        for i in 0..n {
            if supply[i] > tiny {
                dist[i] = top - pot[i];
            }
        }
        loop {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for v in 0..nodes {
                if !done[v] && dist[v] < best_d {
                    best_d = dist[v];
                    best = v;
                }
            }
            if best == usize::MAX {
                break;
            }
            done[best] = true;
            if best < n {
                let i = best;
                for j in 0..m {
                    let w = n + j;
                    let rc = (cost[i * m + j] + pot[i] - pot[w]).max(0.0);
                    if best_d + rc < dist[w] {
                        dist[w] = best_d + rc;
                        prev[w] = i;
                    }
                }
            } else {
                let j = best - n;
                for i in 0..n {
                    if flow[i * m + j] > tiny {
                        let rc = (pot[best] - pot[i] - cost[i * m + j]).max(0.0);
                        if best_d + rc < dist[i] {
                            dist[i] = best_d + rc;
                            prev[i] = best;
                        }
                    }
                }
            }
        }
        // sink with open demand at the smallest true path cost
        let Some(sink) = (0..m)
            .filter(|&j| demand[j] > tiny && dist[n + j].is_finite())
            .min_by(|&x, &y| (dist[n + x] + pot[n + x]).total_cmp(&(dist[n + y] + pot[n + y])))
        else {
            break;
        };
        let reach = dist
            .iter()
            .copied()
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max);
        for v in 0..nodes {
            pot[v] += if dist[v].is_finite() { dist[v] } else { reach };
        }
        // walk back, collecting the bottleneck
        let mut path = Vec::new();
        let mut node = n + sink;
        while prev[node] != usize::MAX {
            path.push((prev[node], node));
            node = prev[node];
        }
        let origin = node;
        let mut delta = supply[origin].min(demand[sink]);
        for &(from, to) in &path {
            if from >= n {
                // backward edge sink→source cancels flow
                delta = delta.min(flow[to * m + (from - n)]);
            }
        }
        for &(from, to) in &path {
            if from < n {
                flow[from * m + (to - n)] += delta;
            } else {
                let cell = &mut flow[to * m + (from - n)];
                *cell = (*cell - delta).max(0.0);
            }
        }
        supply[origin] -= delta;
        demand[sink] -= delta;
        if delta <= 0.0 {
            // stalled on a numerically empty edge; drop the residual mass
            supply[origin] = supply[origin].min(tiny);
            demand[sink] = demand[sink].min(tiny);
        }
    }
    Ok(Coupling {
        rows: n,
        cols: m,
        gamma: flow,
    })
}

/// Affine map `x ↦ linear·x + offset` on the semantic plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub linear: [[f64; 2]; 2],
    pub offset: [f64; 2],
}

impl Default for AffineMap {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineMap {
    pub const fn new(linear: [[f64; 2]; 2], offset: [f64; 2]) -> Self {
        Self { linear, offset }
    }

    pub const fn identity() -> Self {
        Self::new([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    }

    pub fn translation(t: [f64; 2]) -> Self {
        Self::new([[1.0, 0.0], [0.0, 1.0]], t)
    }

    pub fn apply_point(&self, p: &Point) -> Point {
        let l = &self.linear;
        [
            l[0][0] * p[0] + l[0][1] * p[1] + self.offset[0],
            l[1][0] * p[0] + l[1][1] * p[1] + self.offset[1],
        ]
    }

    pub fn apply(&self, x: &SemanticSymbol) -> SemanticSymbol {
        self.apply_point(&x.to_array()).into()
    }

    pub fn is_finite(&self) -> bool {
        self.linear
            .iter()
            .flatten()
            .chain(&self.offset)
            .all(|v| v.is_finite())
    }

    /// Frobenius distance between linear parts.
    pub fn linear_distance(&self, other: &[[f64; 2]; 2]) -> f64 {
        self.linear
            .iter()
            .flatten()
            .zip(other.iter().flatten())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitParams {
    /// Pull of the linear part toward the identity.
    pub ridge: f64,
    pub n_rounds: usize,
    /// Absolute entropic regularization; when unset it is
    /// `epsilon_scale × transport_scale(src, tgt)`.
    pub epsilon: Option<f64>,
    pub epsilon_scale: f64,
    pub max_iter: usize,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            ridge: 1e-4,
            n_rounds: 10,
            epsilon: None,
            epsilon_scale: 0.05,
            max_iter: 1000,
        }
    }
}

impl FitParams {
    pub fn epsilon_for(&self, src: &PointCloud, tgt: &PointCloud) -> f64 {
        self.epsilon
            .unwrap_or_else(|| self.epsilon_scale * transport_scale(src, tgt))
    }
}

/// Alternating OT / ridge-regression fit of an affine map pushing `src`
/// toward `tgt`, starting from the identity.
pub fn fit_affine_map(
    src: &PointCloud,
    tgt: &PointCloud,
    ridge: f64,
    n_rounds: usize,
    epsilon: f64,
) -> Result<AffineMap> {
    let params = FitParams {
        ridge,
        n_rounds,
        epsilon: Some(epsilon),
        ..FitParams::default()
    };
    fit_affine_map_with(src, tgt, &params)
}

pub fn fit_affine_map_with(
    src: &PointCloud,
    tgt: &PointCloud,
    params: &FitParams,
) -> Result<AffineMap> {
    if !(params.ridge >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ridge must be >= 0, got {}",
            params.ridge
        )));
    }
    if params.n_rounds == 0 {
        return Err(Error::InvalidParameter(
            "n_rounds must be at least 1".into(),
        ));
    }
    let epsilon = params.epsilon_for(src, tgt);
    let mut map = AffineMap::identity();
    let mut previous: Option<Coupling> = None;
    for _ in 0..params.n_rounds {
        let image = src.map(|p| map.apply_point(p));
        let coupling = sinkhorn(&image, tgt, epsilon, params.max_iter)?;
        let (sources, targets, weights) = barycentric_targets(src, tgt, &coupling);
        map = weighted_ridge_fit(&sources, &targets, &weights, params.ridge);
        let settled = previous
            .as_ref()
            .is_some_and(|p| p.frobenius_distance(&coupling) < 1e-10);
        if settled {
            break;
        }
        previous = Some(coupling);
    }
    Ok(map)
}

/// Pairs each source point with its coupling-weighted target average.
/// Rows carrying no mass are dropped.
fn barycentric_targets(
    src: &PointCloud,
    tgt: &PointCloud,
    coupling: &Coupling,
) -> (Vec<Point>, Vec<Point>, Vec<f64>) {
    let mut xs = Vec::with_capacity(src.len());
    let mut bs = Vec::with_capacity(src.len());
    let mut ws = Vec::with_capacity(src.len());
    for (k, x) in src.points().iter().enumerate() {
        let mut mass = 0.0;
        let mut b = [0.0; 2];
        for (l, y) in tgt.points().iter().enumerate() {
            let g = coupling.get(k, l);
            mass += g;
            b[0] += g * y[0];
            b[1] += g * y[1];
        }
        if mass > 0.0 {
            xs.push(*x);
            bs.push([b[0] / mass, b[1] / mass]);
            ws.push(mass);
        }
    }
    (xs, bs, ws)
}

/// `argmin Σ w‖Lx + c − b‖² + ridge‖L − I‖²_F`, offset unpenalized.
fn weighted_ridge_fit(xs: &[Point], bs: &[Point], ws: &[f64], ridge: f64) -> AffineMap {
    let total: f64 = ws.iter().sum();
    if xs.is_empty() || !(total > 0.0) {
        return AffineMap::identity();
    }
    let mut xm = [0.0; 2];
    let mut bm = [0.0; 2];
    for ((x, b), w) in xs.iter().zip(bs).zip(ws) {
        for d in 0..2 {
            xm[d] += w * x[d] / total;
            bm[d] += w * b[d] / total;
        }
    }
    // sxx = Σ w x̃ x̃ᵀ, sbx = Σ w b̃ x̃ᵀ
    let mut sxx = [[0.0; 2]; 2];
    let mut sbx = [[0.0; 2]; 2];
    for ((x, b), w) in xs.iter().zip(bs).zip(ws) {
        let xc = [x[0] - xm[0], x[1] - xm[1]];
        let bc = [b[0] - bm[0], b[1] - bm[1]];
        for r in 0..2 {
            for c in 0..2 {
                sxx[r][c] += w * xc[r] * xc[c];
                sbx[r][c] += w * bc[r] * xc[c];
            }
        }
    }
    let scale = sxx[0][0] + sxx[1][1];
    let mut lambda = ridge;
    let linear = loop {
        let a = [
            [sxx[0][0] + lambda, sxx[0][1]],
            [sxx[1][0], sxx[1][1] + lambda],
        ];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det.abs() > 1e-14 * (scale * scale).max(1e-300) && det.is_finite() && det != 0.0 {
            let inv = [
                [a[1][1] / det, -a[0][1] / det],
                [-a[1][0] / det, a[0][0] / det],
            ];
            let rhs = [
                [sbx[0][0] + lambda, sbx[0][1]],
                [sbx[1][0], sbx[1][1] + lambda],
            ];
            break [
                [
                    rhs[0][0] * inv[0][0] + rhs[0][1] * inv[1][0],
                    rhs[0][0] * inv[0][1] + rhs[0][1] * inv[1][1],
                ],
                [
                    rhs[1][0] * inv[0][0] + rhs[1][1] * inv[1][0],
                    rhs[1][0] * inv[0][1] + rhs[1][1] * inv[1][1],
                ],
            ];
        }
        // rank-deficient design: fall back to a ridge large enough to invert
        lambda = if lambda == 0.0 {
            1e-9 * scale.max(1e-12)
        } else {
            lambda * 10.0
        };
    };
    let offset = [
        bm[0] - (linear[0][0] * xm[0] + linear[0][1] * xm[1]),
        bm[1] - (linear[1][0] * xm[0] + linear[1][1] * xm[1]),
    ];
    AffineMap::new(linear, offset)
}

/// μ-weighted cloud of the encoded symbols of one atom.
pub fn atom_cloud(
    lang: &Language,
    members: &[usize],
    side: &'static str,
    atom: usize,
) -> Result<PointCloud> {
    if members.is_empty() {
        return Err(Error::EmptyAtom { side, atom });
    }
    let weights = Encoder::mu(lang).weights();
    let points: Vec<Point> = members
        .iter()
        .map(|&r| lang.encode_rank(r).to_array())
        .collect();
    let masses: Vec<f64> = members.iter().map(|&r| weights[r]).collect();
    PointCloud::from_masses(points, &masses)
        .map_err(|e| Error::InvalidPointCloud(format!("{side} atom {atom}: {e}")))
}

/// Fits `T[i][j]` for every source atom `i` and target atom `j` and caches
/// their information-transfer rows. Fits run in parallel and are merged by
/// index, so the result does not depend on the thread count.
pub fn build_codebook(
    src: &Language,
    tgt: &Language,
    params: &FitParams,
) -> Result<TransformCodebook> {
    check_compatible(src, tgt)?;
    let src_members = atom_members(src);
    let tgt_members = atom_members(tgt);
    let src_clouds = (0..4)
        .map(|i| atom_cloud(src, &src_members[i], "source", i))
        .collect::<Result<Vec<_>>>()?;
    let tgt_clouds = (0..4)
        .map(|j| atom_cloud(tgt, &tgt_members[j], "target", j))
        .collect::<Result<Vec<_>>>()?;
    let fitted = (0..16)
        .into_par_iter()
        .map(|k| fit_affine_map_with(&src_clouds[k / 4], &tgt_clouds[k % 4], params))
        .collect::<Vec<_>>();
    let mut maps = [[AffineMap::identity(); 4]; 4];
    for (k, m) in fitted.into_iter().enumerate() {
        maps[k / 4][k % 4] = m?;
    }
    TransformCodebook::new(src, tgt, maps)
}
