//! Gaussian measures over `Z^m` and `Z_q^m`.
//!
//! Everything here is exact at desk scale: distributions are enumerated,
//! infinite sums are truncated with certified remainders computed from
//! the Gaussian tail bound, and samplers draw from explicit pmfs so that
//! statistical tests always have a ground truth to compare against.

use crate::error::{Error, Result};
use crate::modq::{centered, coset_residues, generates_full_group, ZqMat, ZqVec};
use num_complex::Complex64;
use rand::Rng;
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Gaussian measure `rho_sigma(x) = exp(-pi ||x||^2 / sigma^2)`.
pub fn rho(sigma: f64, x: &[f64]) -> f64 {
    let n2: f64 = x.iter().map(|v| v * v).sum();
    (-PI * n2 / (sigma * sigma)).exp()
}

/// `rho_sigma` on integer points.
pub fn rho_int(sigma: f64, x: &[i64]) -> f64 {
    let n2: f64 = x.iter().map(|&v| (v as f64) * (v as f64)).sum();
    (-PI * n2 / (sigma * sigma)).exp()
}

fn rho_scalar(sigma: f64, t: f64) -> f64 {
    (-PI * t * t / (sigma * sigma)).exp()
}

/// One-dimensional periodic Gaussian `sum_k rho_sigma(x + q k)`, truncated
/// once the dropped tail (bounded by a geometric series on each side) is
/// below `tld` relative to the running total.
fn rho_periodic_1d(sigma: f64, q: i64, x: f64, tol: f64) -> f64 {
    let q = q as f64;
    let mut total = rho_scalar(sigma, x);
    let ratio = (-PI * q * q / (sigma * sigma)).exp();
    let mut k = 1i64;
    loop {
        let term = rho_scalar(sigma, x + q * k as f64) + rho_scalar(sigma, x - q * k as f64);
        total += term;
        let remainder = term * ratio / (1.0 - ratio).max(1e-300);
        if remainder < tol * total.max(1e-300) || k > 256 {
            return total;
        }
        k += 1;
    }
}

/// Periodic Gaussian `rho_{sigma,q}(x) = rho_sigma(x + q Z^m)`, computed
/// as a per-coordinate product with certified absolute error `<= 1e-12`.
pub fn rho_periodic(sigma: f64, q: i64, x: &[i64]) -> f64 {
    let m = x.len().max(1);
    let tol = 1e-14 / m as f64;
    x.iter()
        .map(|&xi| rho_periodic_1d(sigma, q, xi as f64, tol))
        .product()
}

/// `rho_sigma(Z)` as a one-dimensional theta value; raising it to the
/// m-th power gives `rho_sigma(Z^m)` exactly (to 1e-14 relative error).
pub fn rho_lattice_z(sigma: f64) -> f64 {
    let mut total = 1.0; // k = 0
    let mut k = 1i64;
    loop {
        let term = 2.0 * rho_scalar(sigma, k as f64);
        total += term;
        if term < 1e-16 * total || k > 100_000 {
            return total;
        }
        k += 1;
    }
}

/// Banaszczyk tail factor `(2 pi e c^2)^{m/2} exp(-pi c^2 m)` bounding the
/// relative Gaussian mass outside the ball of radius `c sqrt(m) sigma`.
pub fn gaussian_tail_factor(c: f64, m: usize) -> f64 {
    (2.0 * PI * std::f64::consts::E * c * c).powf(m as f64 / 2.0) * (-PI * c * c * m as f64).exp()
}

/// Width/truncation parameters of the truncated discrete Gaussian
/// `D_{Z_q^m, sigma}` with support `{x : ||x|| <= sigma sqrt(m)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussParams {
    pub sigma: f64,
    pub q: i64,
    pub m: usize,
}

impl GaussParams {
    pub fn new(sigma: f64, q: i64, m: usize) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::BadParams(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(GaussParams { sigma, q, m })
    }

    /// Support cutoff `sigma * sqrt(m)`.
    pub fn trunc_radius(&self) -> f64 {
        self.sigma * (self.m as f64).sqrt()
    }
}

/// A finite probability distribution over integer vectors.
///
/// Support points are kept lexicographically sorted so that inverse-CDF
/// sampling and serialization are deterministic.
#[derive(Debug, Clone)]
pub struct FiniteDistribution {
    points: Vec<Vec<i64>>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl FiniteDistribution {
    /// Build from (point, weight) pairs; weights are normalized.
    pub fn from_weighted(mut pairs: Vec<(Vec<i64>, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptySupport("distribution with no support".into()));
        }
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        pairs.dedup_by(|a, b| {
            if a.0 == b.0 {
                b.1 += a.1;
                true
            } else {
                false
            }
        });
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::EmptySupport("zero total mass".into()));
        }
        let mut points = Vec::with_capacity(pairs.len());
        let mut probs = Vec::with_capacity(pairs.len());
        let mut cumulative = Vec::with_capacity(pairs.len());
        let mut acc = 0.0;
        for (pt, w) in pairs {
            let p = w / total;
            acc += p;
            points.push(pt);
            probs.push(p);
            cumulative.push(acc);
        }
        Ok(FiniteDistribution {
            points,
            probs,
            cumulative,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<i64>] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob_of(&self, point: &[i64]) -> f64 {
        match self.points.binary_search_by(|p| p.as_slice().cmp(point)) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Inverse-CDF sample.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> &[i64] {
        let u: f64 = rng.gen::<f64>();
        let idx = self.cumulative.partition_point(|&c| c < u);
        &self.points[idx.min(self.points.len() - 1)]
    }

    /// Total variation distance, over the union of both supports.
    pub fn tv_distance(&self, other: &FiniteDistribution) -> f64 {
        let mut union: BTreeMap<&[i64], (f64, f64)> = BTreeMap::new();
        for (p, &pr) in self.points.iter().zip(&self.probs) {
            union.entry(p.as_slice()).or_insert((0.0, 0.0)).0 = pr;
        }
        for (p, &pr) in other.points.iter().zip(&other.probs) {
            union.entry(p.as_slice()).or_insert((0.0, 0.0)).1 = pr;
        }
        0.5 * union.values().map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    /// TV distance between this distribution and an empirical histogram.
    pub fn tv_to_histogram(&self, counts: &BTreeMap<Vec<i64>, u64>, total: u64) -> f64 {
        let mut tv = 0.0;
        let mut seen_mass = 0.0;
        for (p, &pr) in self.points.iter().zip(&self.probs) {
            let emp = counts.get(p).map_or(0.0, |&c| c as f64 / total as f64);
            tv += (pr - emp).abs();
            seen_mass += emp;
        }
        tv += 1.0 - seen_mass; // histogram mass outside our support
        0.5 * tv
    }
}

/// Integer points of the centered box `Z_q^m` with norm at most `r`,
/// in lexicographic order.
pub fn box_ball_points(m: usize, q: i64, r: f64) -> Vec<Vec<i64>> {
    let lo = -((q - 1) / 2);
    let hi = q / 2;
    let kmax = r.floor() as i64;
    let r2 = r * r;

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        m: usize,
        depth: usize,
        lo: i64,
        hi: i64,
        kmax: i64,
        r2: f64,
        used: f64,
        cur: &mut Vec<i64>,
        out: &mut Vec<Vec<i64>>,
    ) {
        if depth == m {
            out.push(cur.clone());
            return;
        }
        for v in (-kmax).max(lo)..=kmax.min(hi) {
            let add = (v * v) as f64;
            if used + add <= r2 + 1e-9 {
                cur[depth] = v;
                recurse(m, depth + 1, lo, hi, kmax, r2, used + add, cur, out);
            }
        }
        cur[depth] = 0;
    }

    let mut out = Vec::new();
    let mut cur = vec![0i64; m];
    recurse(m, 0, lo, hi, kmax, r2, 0.0, &mut cur, &mut out);
    out
}

/// The truncated discrete Gaussian `D_{Z_q^m, sigma}`: probability
/// proportional to `rho_sigma` on `{x in Z_q^m : ||x|| <= sigma sqrt(m)}`.
pub fn truncated_gaussian_pmf(params: &GaussParams) -> Result<FiniteDistribution> {
    let r = params.trunc_radius();
    let count_estimate = (2.0 * r + 1.0).powi(params.m as i32).min(1e18);
    if count_estimate > 4.0e6 {
        return Err(Error::BudgetExceeded {
            needed: count_estimate as usize,
            budget: 4_000_000,
        });
    }
    let pairs = box_ball_points(params.m, params.q, r)
        .into_iter()
        .map(|p| {
            let w = rho_int(params.sigma, &p);
            (p, w)
        })
        .collect();
    FiniteDistribution::from_weighted(pairs)
}

/// Reusable sampler for `D_{Z_q^m, sigma}`.
///
/// At enumerable sizes it draws by inverse-CDF over the exact pmf. In
/// high dimension it draws coordinates from the exact one-dimensional
/// pmf and rejects on the joint norm cutoff, which realizes exactly the
/// same distribution because the Gaussian weight factorizes over
/// coordinates. Construct once, sample many times.
pub struct TruncatedGaussianSampler {
    params: GaussParams,
    mode: SamplerMode,
}

enum SamplerMode {
    Exact(FiniteDistribution),
    CoordinateRejection(FiniteDistribution),
}

impl TruncatedGaussianSampler {
    pub fn new(params: &GaussParams) -> Result<Self> {
        let r = params.trunc_radius();
        let mode = if (2.0 * r + 1.0).powi(params.m as i32) <= 100_000.0 {
            SamplerMode::Exact(truncated_gaussian_pmf(params)?)
        } else {
            let kmax = r.floor().min(((params.q - 1) / 2) as f64) as i64;
            SamplerMode::CoordinateRejection(FiniteDistribution::from_weighted(
                (-kmax..=kmax)
                    .map(|v| (vec![v], rho_scalar(params.sigma, v as f64)))
                    .collect(),
            )?)
        };
        Ok(TruncatedGaussianSampler {
            params: *params,
            mode,
        })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<ZqVec> {
        match &self.mode {
            SamplerMode::Exact(pmf) => Ok(ZqVec::new(pmf.sample(rng).to_vec(), self.params.q)),
            SamplerMode::CoordinateRejection(coord) => {
                let r2 = self.params.trunc_radius().powi(2);
                for _ in 0..100_000 {
                    let mut v = Vec::with_capacity(self.params.m);
                    let mut n2 = 0.0;
                    for _ in 0..self.params.m {
                        let c = coord.sample(rng)[0];
                        n2 += (c * c) as f64;
                        v.push(c);
                    }
                    if n2 <= r2 + 1e-9 {
                        return Ok(ZqVec::new(v, self.params.q));
                    }
                }
                Err(Error::RetriesExhausted("sample_truncated_gaussian"))
            }
        }
    }
}

/// Draw one sample from `D_{Z_q^m, sigma}`.
pub fn sample_truncated_gaussian<R: Rng>(params: &GaussParams, rng: &mut R) -> Result<ZqVec> {
    TruncatedGaussianSampler::new(params)?.sample(rng)
}

/// Points of the lattice coset `Lambda_q^y(A)` inside the ball of radius
/// `r`: residues in the centered box plus all `q Z^m` shifts that stay
/// inside the ball. Sorted lexicographically.
pub fn coset_points_in_ball(a: &ZqMat, y: &ZqVec, r: f64) -> Result<Vec<Vec<i64>>> {
    let q = a.q();
    let m = a.cols();
    let residues = coset_residues(a, y)?;
    let r2 = r * r;

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        depth: usize,
        m: usize,
        q: i64,
        kmax: i64,
        base: &[i64],
        r2: f64,
        used: f64,
        pt: &mut Vec<i64>,
        out: &mut Vec<Vec<i64>>,
    ) {
        if depth == m {
            out.push(pt.clone());
            return;
        }
        for k in -kmax..=kmax {
            let v = base[depth] + q * k;
            let add = (v * v) as f64;
            if used + add <= r2 + 1e-9 {
                pt[depth] = v;
                recurse(depth + 1, m, q, kmax, base, r2, used + add, pt, out);
            }
        }
    }

    let kmax = ((r + q as f64 * 0.5) / q as f64).ceil() as i64;
    let mut out = Vec::new();
    for res in &residues {
        let mut pt = vec![0i64; m];
        recurse(0, m, q, kmax, res.entries(), r2, 0.0, &mut pt, &mut out);
    }
    out.sort();
    Ok(out)
}

/// Discrete Gaussian on the lattice coset `Lambda_q^y(A)`, truncated to a
/// ball whose dropped tail is certified below ~1e-12 of the total mass.
pub fn coset_gaussian_pmf(a: &ZqMat, y: &ZqVec, sigma: f64) -> Result<FiniteDistribution> {
    let m = a.cols();
    let mut c = 2.0f64;
    while gaussian_tail_factor(c, m) > 1e-16 && c < 64.0 {
        c += 0.5;
    }
    let r = c * sigma * (m as f64).sqrt();
    let pts = coset_points_in_ball(a, y, r)?;
    if pts.is_empty() {
        return Err(Error::EmptySupport(
            "coset has no points within cutoff".into(),
        ));
    }
    FiniteDistribution::from_weighted(
        pts.into_iter()
            .map(|p| {
                let w = rho_int(sigma, &p);
                (p, w)
            })
            .collect(),
    )
}

fn odometer(digits: &mut [i64], q: i64) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < q {
            return true;
        }
        *d = 0;
    }
    false
}

/// Both sides of the Poisson summation identity for q-ary lattices:
///
/// `sum_{x in Lambda_q^v(A)} rho_sigma(x) e^{-2 pi i <w,x>/q}`
/// `  = sigma^m / q^n * sum_{y in Z_q^n} rho_{q/sigma, q}(w + y A) e^{2 pi i <y,v>/q}`
///
/// Returns `(lhs, rhs, |lhs - rhs|)`. Requires the columns of `A` to
/// generate `Z_q^n` and `q^n` enumerable.
pub fn poisson_check(
    a: &ZqMat,
    v: &ZqVec,
    w: &ZqVec,
    sigma: f64,
    q: i64,
) -> Result<(Complex64, Complex64, f64)> {
    if !generates_full_group(a) {
        return Err(Error::NotFullRank {
            rank: crate::modq::rank(a),
            n: a.rows(),
        });
    }
    let m = a.cols();
    let n = a.rows();
    // lhs truncation radius certified against the tail bound
    let mut c = 2.0f64;
    while gaussian_tail_factor(c, m) * rho_lattice_z(sigma).powi(m as i32) > 1e-12 && c < 64.0 {
        c += 0.5;
    }
    let r = c * sigma * (m as f64).sqrt();
    let mut lhs = Complex64::new(0.0, 0.0);
    for x in coset_points_in_ball(a, v, r)? {
        let phase: i128 = x
            .iter()
            .zip(w.entries())
            .map(|(&xi, &wi)| (xi as i128) * (wi as i128))
            .sum();
        let ang = -2.0 * PI * (centered(phase, q) as f64) / q as f64;
        lhs += rho_int(sigma, &x) * Complex64::new(ang.cos(), ang.sin());
    }

    let mut rhs = Complex64::new(0.0, 0.0);
    let mut yv = vec![0i64; n];
    loop {
        // w + y A (row vector times matrix)
        let mut shifted = Vec::with_capacity(m);
        for j in 0..m {
            let mut acc = w.get(j) as i128;
            for (i, &yi) in yv.iter().enumerate() {
                acc += (yi as i128) * (a.get(i, j) as i128);
            }
            shifted.push(centered(acc, q));
        }
        let weight = rho_periodic(q as f64 / sigma, q, &shifted);
        let phase: i128 = yv
            .iter()
            .zip(v.entries())
            .map(|(&yi, &vi)| (yi as i128) * (vi as i128))
            .sum();
        let ang = 2.0 * PI * (centered(phase, q) as f64) / q as f64;
        rhs += weight * Complex64::new(ang.cos(), ang.sin());
        if !odometer(&mut yv, q) {
            break;
        }
    }
    let rhs = rhs * sigma.powi(m as i32) / (q as f64).powi(n as i32);
    Ok((lhs, rhs, (lhs - rhs).norm()))
}

/// Closed-form bound on the total variation distance between the
/// truncated Gaussian and its shift by `e0`:
/// `2 (1 - exp(-2 pi sqrt(m) ||e0|| / sigma))`.
pub fn shifted_tv_bound(e0: &ZqVec, sigma: f64, m: usize) -> f64 {
    2.0 * (1.0 - (-2.0 * PI * (m as f64).sqrt() * e0.norm() / sigma).exp())
}

/// Exact TV distance between `D_{Z_q^m, sigma}` and its shift by `e0`
/// (shift taken mod q on centered representatives).
pub fn shifted_tv_exact(params: &GaussParams, e0: &ZqVec) -> Result<f64> {
    let pmf = truncated_gaussian_pmf(params)?;
    let shifted: Vec<(Vec<i64>, f64)> = pmf
        .points()
        .iter()
        .zip(pmf.probs())
        .map(|(p, &pr)| {
            let sp: Vec<i64> = p
                .iter()
                .zip(e0.entries())
                .map(|(&a, &b)| centered(a as i128 + b as i128, params.q))
                .collect();
            (sp, pr)
        })
        .collect();
    let shifted = FiniteDistribution::from_weighted(shifted)?;
    Ok(pmf.tv_distance(&shifted))
}

/// Exact distribution of the syndrome `y = A x mod q` produced by the
/// image measurement in `GenDual`: `Pr[y]` is proportional to
/// `rho_{sigma/sqrt(2)}(Lambda_q^y(A))`, evaluated through Poisson
/// summation as a per-coordinate product. Relative to the box-restricted
/// superposition this carries only the ~1e-12 lattice-vs-box tail.
pub fn syndrome_distribution(a: &ZqMat, sigma: f64) -> Result<FiniteDistribution> {
    let q = a.q();
    let n = a.rows();
    let m = a.cols();
    let s = sigma / 2.0f64.sqrt();
    if (q as f64).powi(n as i32) > 1e6 {
        return Err(Error::BudgetExceeded {
            needed: (q as f64).powi(n as i32) as usize,
            budget: 1_000_000,
        });
    }
    // weights w(t) = prod_j rho_periodic(q/s, q, (t A)_j) over t in Z_q^n
    let mut tvecs = Vec::new();
    let mut tv = vec![0i64; n];
    loop {
        tvecs.push(tv.clone());
        if !odometer(&mut tv, q) {
            break;
        }
    }
    let weights: Vec<f64> = tvecs
        .iter()
        .map(|t| {
            (0..m)
                .map(|j| {
                    let mut acc: i128 = 0;
                    for (i, &ti) in t.iter().enumerate() {
                        acc += (ti as i128) * (a.get(i, j) as i128);
                    }
                    rho_periodic_1d(q as f64 / s, q, centered(acc, q) as f64, 1e-15)
                })
                .product()
        })
        .collect();
    let mut pairs = Vec::new();
    let mut yv = vec![0i64; n];
    loop {
        let mut val = 0.0;
        for (t, &wt) in tvecs.iter().zip(&weights) {
            let phase: i128 = t
                .iter()
                .zip(&yv)
                .map(|(&a, &b)| (a as i128) * (b as i128))
                .sum();
            val += wt * (2.0 * PI * (centered(phase, q) as f64) / q as f64).cos();
        }
        pairs.push((
            yv.iter().map(|&v| centered(v as i128, q)).collect(),
            val.max(0.0),
        ));
        if !odometer(&mut yv, q) {
            break;
        }
    }
    FiniteDistribution::from_weighted(pairs)
}

/// Uniform vector over `Z_q^n`.
pub fn sample_uniform_vec<R: Rng>(n: usize, q: i64, rng: &mut R) -> ZqVec {
    ZqVec::new((0..n).map(|_| rng.gen_range(0..q)).collect(), q)
}

/// Uniform matrix over `Z_q^{rows x cols}`.
pub fn sample_uniform_mat<R: Rng>(rows: usize, cols: usize, q: i64, rng: &mut R) -> ZqMat {
    ZqMat::new(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(0..q)).collect(),
        q,
    )
    .expect("consistent dims")
}

/// `floor(q/2)`, the plaintext shift used by both encryption schemes.
pub fn half_q(q: i64) -> i64 {
    q / 2
}
