//! Density operators on the span of a finite set of basis labels.
//!
//! Mixed states that arise here (dephased pure states, small mixtures)
//! have small support, so a density operator is stored as a dense
//! Hermitian block over an explicit, sorted list of basis labels.

use super::layout::RegisterLayout;
use super::state::{omega, SparseState};
use crate::error::{Error, Result};
use crate::gaussian::{truncated_gaussian_pmf, GaussParams};
use crate::modq::{centered, ZqMat};
use num_complex::Complex64;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct DensityOp {
    layout: RegisterLayout,
    labels: Vec<Vec<u16>>,
    mat: Vec<Complex64>, // row-major, dim = labels.len()
}

impl DensityOp {
    /// `|psi><psi|` of a pure state.
    pub fn from_pure(state: &SparseState) -> Result<DensityOp> {
        Self::from_mixture(&[(1.0, state.clone())])
    }

    /// `sum_i p_i |psi_i><psi_i|` over the union support.
    pub fn from_mixture(parts: &[(f64, SparseState)]) -> Result<DensityOp> {
        let Some((_, first)) = parts.first() else {
            return Err(Error::EmptySupport("mixture with no parts".into()));
        };
        let layout = first.layout().clone();
        let mut labels: Vec<Vec<u16>> = BTreeMap::<Vec<u16>, ()>::from_iter(
            parts
                .iter()
                .flat_map(|(_, s)| s.amplitudes().map(|(l, _)| (l.clone(), ()))),
        )
        .into_keys()
        .collect();
        labels.sort();
        let dim = labels.len();
        if dim > crate::DEFAULT_DENSE_BUDGET {
            return Err(Error::BudgetExceeded {
                needed: dim,
                budget: crate::DEFAULT_DENSE_BUDGET,
            });
        }
        let index: BTreeMap<&[u16], usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_slice(), i))
            .collect();
        let mut mat = vec![Complex64::new(0.0, 0.0); dim * dim];
        for (p, s) in parts {
            if s.layout() != &layout {
                return Err(Error::LayoutMismatch("mixture across layouts".into()));
            }
            let entries: Vec<(usize, Complex64)> = s
                .amplitudes()
                .map(|(l, a)| (index[l.as_slice()], *a))
                .collect();
            for &(i, ai) in &entries {
                for &(j, aj) in &entries {
                    mat[i * dim + j] += p * ai * aj.conj();
                }
            }
        }
        Ok(DensityOp {
            layout,
            labels,
            mat,
        })
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[Vec<u16>] {
        &self.labels
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.mat[i * self.labels.len() + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.entry(i, i).re).sum()
    }

    pub fn max_hermiticity_violation(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.entry(i, j) - self.entry(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Largest off-diagonal magnitude (diagnostic for dephasing tests).
    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    worst = worst.max(self.entry(i, j).norm());
                }
            }
        }
        worst
    }

    /// Uniform Pauli-Z dephasing of one register: coherences between
    /// basis labels that differ on that register are erased, which equals
    /// the full Z-twirl averaged over `Z_q^w` (diagonal projection).
    pub fn dephase_uniform(&self, reg: usize) -> DensityOp {
        let range = self.layout.digit_range(reg);
        let n = self.dim();
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                if self.labels[i][range.clone()] != self.labels[j][range.clone()] {
                    out.mat[i * n + j] = Complex64::new(0.0, 0.0);
                }
            }
        }
        out
    }

    /// Explicit uniform Z-twirl `q^{-w} sum_z Z^z rho Z^{-z}` on one
    /// register, summed term by term. Exponential in `w`; used as the
    /// independent oracle against `dephase_uniform`.
    pub fn dephase_uniform_twirl(&self, reg: usize) -> DensityOp {
        let range = self.layout.digit_range(reg);
        let q = self.layout.q();
        let w = range.len();
        let n = self.dim();
        let mut acc = vec![Complex64::new(0.0, 0.0); n * n];
        let mut z = vec![0i64; w];
        let mut terms = 0usize;
        loop {
            for i in 0..n {
                let ki: i128 = range
                    .clone()
                    .enumerate()
                    .map(|(t, pos)| (self.labels[i][pos] as i128) * (z[t] as i128))
                    .sum();
                for j in 0..n {
                    let kj: i128 = range
                        .clone()
                        .enumerate()
                        .map(|(t, pos)| (self.labels[j][pos] as i128) * (z[t] as i128))
                        .sum();
                    let phase = omega(q, centered(ki - kj, q));
                    acc[i * n + j] += phase * self.entry(i, j);
                }
            }
            terms += 1;
            let mut pos = 0;
            loop {
                if pos == w {
                    let scale = 1.0 / terms as f64;
                    let mat = acc.into_iter().map(|v| v * scale).collect();
                    return DensityOp {
                        layout: self.layout.clone(),
                        labels: self.labels.clone(),
                        mat,
                    };
                }
                z[pos] += 1;
                if z[pos] < q {
                    break;
                }
                z[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Pauli-Z dephasing with respect to the LWE distribution on one
    /// register of width `m = cols(A)`:
    ///
    /// `Z(rho) = sum_{s0, e0} q^{-n} D_{Z_q^m, alpha q}(e0) Z^{s0 A + e0} rho Z^{-(s0 A + e0)}`
    ///
    /// The `s0` average forces `A (x - y) = 0`; the `e0` average applies
    /// the characteristic function of the noise to each coherence.
    pub fn dephase_lwe(&self, reg: usize, a: &ZqMat, alpha: f64) -> Result<DensityOp> {
        let range = self.layout.digit_range(reg);
        let q = self.layout.q();
        if a.cols() != range.len() || a.q() != q {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, register width {}",
                a.rows(),
                a.cols(),
                range.len()
            )));
        }
        let m = a.cols();
        let noise = truncated_gaussian_pmf(&GaussParams::new(alpha * q as f64, q, m)?)?;
        let n = self.dim();
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                // d = x_i - x_j on the register
                let d: Vec<i64> = range
                    .clone()
                    .map(|pos| {
                        centered(self.labels[i][pos] as i128 - self.labels[j][pos] as i128, q)
                    })
                    .collect();
                // s0-average: nonzero only if A d = 0 mod q
                let ad_zero = (0..a.rows()).all(|r| {
                    let acc: i128 = (0..m).map(|c| (a.get(r, c) as i128) * (d[c] as i128)).sum();
                    centered(acc, q) == 0
                });
                if !ad_zero {
                    out.mat[i * n + j] = Complex64::new(0.0, 0.0);
                    continue;
                }
                // e0-average: kernel = sum_e0 D(e0) omega^{<e0, d>}
                let mut kernel = Complex64::new(0.0, 0.0);
                for (pt, &pr) in noise.points().iter().zip(noise.probs()) {
                    let k: i128 = pt
                        .iter()
                        .zip(&d)
                        .map(|(&e, &dd)| (e as i128) * (dd as i128))
                        .sum();
                    kernel += pr * omega(q, centered(k, q));
                }
                out.mat[i * n + j] = self.entry(i, j) * kernel;
            }
        }
        Ok(out)
    }

    /// Trace distance `1/2 ||rho - sigma||_1` via the spectrum of the
    /// Hermitian difference on the union support.
    pub fn trace_distance(&self, other: &DensityOp) -> Result<f64> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(
                "trace distance across layouts".into(),
            ));
        }
        let mut labels: Vec<Vec<u16>> = self
            .labels
            .iter()
            .chain(other.labels.iter())
            .cloned()
            .collect();
        labels.sort();
        labels.dedup();
        let dim = labels.len();
        if dim > crate::DEFAULT_DENSE_BUDGET {
            return Err(Error::BudgetExceeded {
                needed: dim,
                budget: crate::DEFAULT_DENSE_BUDGET,
            });
        }
        let index: BTreeMap<&[u16], usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_slice(), i))
            .collect();
        let mut diff = vec![Complex64::new(0.0, 0.0); dim * dim];
        for (src, sign) in [(self, 1.0), (other, -1.0)] {
            for i in 0..src.dim() {
                let gi = index[src.labels[i].as_slice()];
                for j in 0..src.dim() {
                    let gj = index[src.labels[j].as_slice()];
                    diff[gi * dim + gj] += sign * src.entry(i, j);
                }
            }
        }
        let eigs = hermitian_eigenvalues(&mut diff, dim);
        Ok(0.5 * eigs.iter().map(|l| l.abs()).sum::<f64>())
    }

    /// Eigenvalues of the operator itself (e.g. to check positivity).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut m = self.mat.clone();
        hermitian_eigenvalues(&mut m, self.dim())
    }
}

/// Eigenvalues of a Hermitian matrix by cyclic complex Jacobi rotations.
/// The input buffer is destroyed.
pub fn hermitian_eigenvalues(a: &mut [Complex64], n: usize) -> Vec<f64> {
    let (vals, _) = hermitian_eig_impl(a, n, false);
    vals
}

/// Full eigendecomposition: returns (eigenvalues, column eigenvectors).
pub fn hermitian_eig(a: &mut [Complex64], n: usize) -> (Vec<f64>, Vec<Complex64>) {
    let (vals, vecs) = hermitian_eig_impl(a, n, true);
    (vals, vecs.expect("vectors requested"))
}

fn hermitian_eig_impl(
    a: &mut [Complex64],
    n: usize,
    want_vectors: bool,
) -> (Vec<f64>, Option<Vec<Complex64>>) {
    assert_eq!(a.len(), n * n);
    let mut v = if want_vectors {
        let mut id = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            id[i * n + i] = Complex64::new(1.0, 0.0);
        }
        Some(id)
    } else {
        None
    };
    if n <= 1 {
        return (vec![a.first().map_or(0.0, |c| c.re)], v);
    }
    let scale: f64 = a
        .iter()
        .map(|c| c.norm_sqr())
        .sum::<f64>()
        .sqrt()
        .max(1e-300);
    let tol = 1e-14 * scale;
    for _sweep in 0..200 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q].norm_sqr();
            }
        }
        if off.sqrt() < tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                let alpha = apq.norm();
                if alpha < 1e-300 {
                    continue;
                }
                let u = apq / alpha;
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                // zero A[p][q]: t solves t^2 - 2 tau t - 1 = 0 (small root)
                let tau = (aqq - app) / (2.0 * alpha);
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // columns: col_p' = c col_p + s conj(u) col_q; col_q' = -s u col_p + c col_q
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp + s * u.conj() * akq;
                    a[k * n + q] = -s * u * akp + c * akq;
                }
                // rows: row_p' = c row_p + s u row_q; row_q' = -s conj(u) row_p + c row_q
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk + s * u * aqk;
                    a[q * n + k] = -s * u.conj() * apk + c * aqk;
                }
                if let Some(vs) = v.as_mut() {
                    for k in 0..n {
                        let vkp = vs[k * n + p];
                        let vkq = vs[k * n + q];
                        vs[k * n + p] = c * vkp + s * u.conj() * vkq;
                        vs[k * n + q] = -s * u * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let vals = (0..n).map(|i| a[i * n + i].re).collect();
    (vals, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::layout::RegisterLayout;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3
        let mut m = vec![c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)];
        let mut vals = hermitian_eigenvalues(&mut m, 2);
        vals.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(vals[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn jacobi_random_hermitian_residuals() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for n in [2usize, 5, 16] {
            let mut m = vec![c(0.0, 0.0); n * n];
            for i in 0..n {
                for j in 0..=i {
                    let z = c(
                        rng.gen_range(-1.0..1.0),
                        if i == j {
                            0.0
                        } else {
                            rng.gen_range(-1.0..1.0)
                        },
                    );
                    m[i * n + j] = z;
                    m[j * n + i] = z.conj();
                }
            }
            let orig = m.clone();
            let (vals, vecs) = hermitian_eig(&mut m, n);
            // residual ||A v - lambda v|| per eigenpair
            for k in 0..n {
                let mut worst = 0.0f64;
                for i in 0..n {
                    let mut av = c(0.0, 0.0);
                    for j in 0..n {
                        av += orig[i * n + j] * vecs[j * n + k];
                    }
                    worst = worst.max((av - vals[k] * vecs[i * n + k]).norm());
                }
                assert!(worst < 1e-10, "residual {worst} for n={n}");
            }
            // trace preserved
            let tr: f64 = (0..n).map(|i| orig[i * n + i].re).sum();
            assert_abs_diff_eq!(vals.iter().sum::<f64>(), tr, epsilon = 1e-10);
        }
    }

    #[test]
    fn pure_density_has_unit_trace_and_rank_one() {
        let layout = RegisterLayout::new(5, &[("x", 1)]).unwrap();
        let s = SparseState::from_amplitudes(
            layout,
            vec![(vec![0u16], c(0.6, 0.0)), (vec![2u16], c(0.0, 0.8))],
        )
        .unwrap();
        let rho = DensityOp::from_pure(&s).unwrap();
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-12);
        let mut eigs = rho.eigenvalues();
        eigs.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(eigs[eigs.len() - 1], 1.0, epsilon = 1e-10);
        assert!(eigs[0].abs() < 1e-10);
        assert!(rho.max_hermiticity_violation() < 1e-12);
    }

    #[test]
    fn trace_distance_pure_matches_dense() {
        // pure-pure trace distance formula vs spectral route, dims up to 64
        let layout = RegisterLayout::new(2, &[("x", 6)]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..5 {
            let mut amps_a = Vec::new();
            let mut amps_b = Vec::new();
            for idx in 0..64u32 {
                let digits: Vec<u16> = (0..6).map(|b| ((idx >> b) & 1) as u16).collect();
                amps_a.push((
                    digits.clone(),
                    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                ));
                amps_b.push((
                    digits,
                    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                ));
            }
            let mut a = SparseState::from_amplitudes(layout.clone(), amps_a).unwrap();
            let mut b = SparseState::from_amplitudes(layout.clone(), amps_b).unwrap();
            a.normalize();
            b.normalize();
            let td_pure = a.trace_distance_pure(&b).unwrap();
            let td_dense = DensityOp::from_pure(&a)
                .unwrap()
                .trace_distance(&DensityOp::from_pure(&b).unwrap())
                .unwrap();
            assert_abs_diff_eq!(td_pure, td_dense, epsilon = 1e-9);
        }
    }

    #[test]
    fn trace_distance_extremes() {
        let layout = RegisterLayout::new(5, &[("x", 1)]).unwrap();
        let a = SparseState::basis_state(layout.clone(), &[0]).unwrap();
        let b = SparseState::basis_state(layout, &[3]).unwrap();
        assert_abs_diff_eq!(a.trace_distance_pure(&a).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.trace_distance_pure(&b).unwrap(), 1.0, epsilon = 1e-12);
        let ra = DensityOp::from_pure(&a).unwrap();
        let rb = DensityOp::from_pure(&b).unwrap();
        assert_abs_diff_eq!(ra.trace_distance(&rb).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dephase_uniform_kills_offdiagonals_keeps_diagonal() {
        let layout = RegisterLayout::new(5, &[("x", 1)]).unwrap();
        let mut s = SparseState::from_amplitudes(
            layout,
            vec![(vec![0u16], c(1.0, 0.0)), (vec![1u16], c(1.0, 0.0))],
        )
        .unwrap();
        s.normalize();
        let rho = DensityOp::from_pure(&s).unwrap();
        let out = rho.dephase_uniform(0);
        assert!(out.max_off_diagonal() < 1e-15);
        for i in 0..rho.dim() {
            assert_abs_diff_eq!(out.entry(i, i).re, rho.entry(i, i).re, epsilon = 1e-15);
        }
        // diagonal input is unchanged
        let again = out.dephase_uniform(0);
        assert_abs_diff_eq!(out.trace_distance(&again).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dephase_uniform_equals_explicit_twirl() {
        // q=5, widths 1 and 2
        for w in [1usize, 2] {
            let layout = RegisterLayout::new(5, &[("x", w)]).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(21 + w as u64);
            let mut amps = Vec::new();
            let count = 5usize.pow(w as u32);
            for idx in 0..count {
                let mut digits = Vec::new();
                let mut v = idx;
                for _ in 0..w {
                    digits.push((v % 5) as u16);
                    v /= 5;
                }
                amps.push((
                    digits,
                    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                ));
            }
            let mut s = SparseState::from_amplitudes(layout, amps).unwrap();
            s.normalize();
            let rho = DensityOp::from_pure(&s).unwrap();
            let fast = rho.dephase_uniform(0);
            let twirl = rho.dephase_uniform_twirl(0);
            assert!(fast.trace_distance(&twirl).unwrap() < 1e-10);
        }
    }
}
