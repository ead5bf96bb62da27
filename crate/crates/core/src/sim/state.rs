//! Sparse state vectors over multi-register qudit systems.
//!
//! Amplitudes are kept in a `BTreeMap` keyed by flat digit strings, so
//! iteration order (and therefore seeded sampling and serialization) is
//! deterministic. Amplitudes below [`PRUNE_THRESHOLD`] are dropped after
//! every transform.

use super::layout::RegisterLayout;
use crate::error::{Error, Result};
use crate::modq::{centered, nonneg, ZqVec};
use num_complex::Complex64;
use rand::Rng;
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Stored amplitudes smaller than this are discarded.
pub const PRUNE_THRESHOLD: f64 = 1e-15;

/// Norm agreement tolerance for "normalized" checks.
pub const NORM_TOL: f64 = 1e-10;

pub(crate) fn omega(q: i64, k: i64) -> Complex64 {
    let ang = 2.0 * PI * (nonneg(k, q) as f64) / q as f64;
    Complex64::new(ang.cos(), ang.sin())
}

/// A sparse multi-register qudit state.
#[derive(Debug, Clone)]
pub struct SparseState {
    layout: RegisterLayout,
    amps: BTreeMap<Vec<u16>, Complex64>,
    budget: usize,
}

impl SparseState {
    /// The computational basis state with the given flat digit string.
    pub fn basis_state(layout: RegisterLayout, digits: &[u16]) -> Result<Self> {
        layout.validate_label(digits)?;
        let mut amps = BTreeMap::new();
        amps.insert(digits.to_vec(), Complex64::new(1.0, 0.0));
        Ok(SparseState {
            layout,
            amps,
            budget: crate::DEFAULT_SUPPORT_BUDGET,
        })
    }

    /// Build from (label, amplitude) pairs; does not normalize.
    pub fn from_amplitudes<I>(layout: RegisterLayout, iter: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u16>, Complex64)>,
    {
        let mut amps = BTreeMap::new();
        for (label, amp) in iter {
            layout.validate_label(&label)?;
            if amp.norm() > PRUNE_THRESHOLD {
                let slot = amps.entry(label).or_insert(Complex64::new(0.0, 0.0));
                *slot += amp;
            }
        }
        let mut s = SparseState {
            layout,
            amps,
            budget: crate::DEFAULT_SUPPORT_BUDGET,
        };
        s.prune();
        if s.amps.is_empty() {
            return Err(Error::EmptySupport("state with no amplitudes".into()));
        }
        Ok(s)
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn support_size(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = (&Vec<u16>, &Complex64)> {
        self.amps.iter()
    }

    pub fn amplitude(&self, label: &[u16]) -> Complex64 {
        self.amps
            .get(label)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sq() - 1.0).abs() <= NORM_TOL
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sq().sqrt();
        if n > 0.0 {
            for a in self.amps.values_mut() {
                *a /= n;
            }
        }
    }

    fn prune(&mut self) {
        self.amps.retain(|_, a| a.norm() > PRUNE_THRESHOLD);
    }

    /// `<self|other>`.
    pub fn inner_product(&self, other: &SparseState) -> Result<Complex64> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch("inner product across layouts".into()));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        if self.amps.len() <= other.amps.len() {
            for (label, a) in &self.amps {
                if let Some(b) = other.amps.get(label) {
                    acc += a.conj() * b;
                }
            }
        } else {
            for (label, b) in &other.amps {
                if let Some(a) = self.amps.get(label) {
                    acc += a.conj() * b;
                }
            }
        }
        Ok(acc)
    }

    /// Trace distance between two pure states: `sqrt(1 - |<a|b>|^2)`.
    ///
    /// Evaluated through the phase-aligned difference
    /// `2 (1 - |<a|b>|) = || |a> - e^{i phi} |b> ||^2`, which keeps full
    /// precision when the states are nearly identical.
    pub fn trace_distance_pure(&self, other: &SparseState) -> Result<f64> {
        let ip = self.inner_product(other)?;
        let n = ip.norm();
        if n < 1e-8 {
            return Ok((1.0 - n * n).max(0.0).sqrt());
        }
        let phase_conj = ip.conj() / n;
        let mut delta2 = 0.0f64;
        for (label, a) in &self.amps {
            let b = other.amplitude(label) * phase_conj;
            delta2 += (a - b).norm_sqr();
        }
        for (label, b) in &other.amps {
            if !self.amps.contains_key(label) {
                delta2 += b.norm_sqr() * phase_conj.norm_sqr();
            }
        }
        let one_minus = (delta2 / 2.0).min(1.0);
        Ok((one_minus * (2.0 - one_minus)).max(0.0).sqrt())
    }

    /// Tensor with a fresh register in a computational basis state.
    pub fn tensor_basis_register(&self, name: &str, digits: &[u16]) -> Result<SparseState> {
        let layout = self.layout.with_register(name, digits.len())?;
        if digits.iter().any(|&d| (d as i64) >= layout.q()) {
            return Err(Error::LayoutMismatch("digit out of range".into()));
        }
        let mut amps = BTreeMap::new();
        for (label, amp) in &self.amps {
            let mut ext = label.clone();
            ext.extend_from_slice(digits);
            amps.insert(ext, *amp);
        }
        Ok(SparseState {
            layout,
            amps,
            budget: self.budget,
        })
    }

    /// Tensor product with another state over disjoint register names.
    pub fn tensor(&self, other: &SparseState) -> Result<SparseState> {
        if self.layout.q() != other.layout.q() {
            return Err(Error::LayoutMismatch("tensor with different q".into()));
        }
        let needed = self.amps.len() * other.amps.len();
        if needed > self.budget {
            return Err(Error::BudgetExceeded {
                needed,
                budget: self.budget,
            });
        }
        let mut regs: Vec<(&str, usize)> = self
            .layout
            .registers()
            .iter()
            .map(|r| (r.name.as_str(), r.width))
            .collect();
        for r in other.layout.registers() {
            regs.push((r.name.as_str(), r.width));
        }
        let layout = RegisterLayout::new(self.layout.q(), &regs)?;
        let mut amps = BTreeMap::new();
        for (la, aa) in &self.amps {
            for (lb, ab) in &other.amps {
                let mut label = la.clone();
                label.extend_from_slice(lb);
                amps.insert(label, aa * ab);
            }
        }
        Ok(SparseState {
            layout,
            amps,
            budget: self.budget,
        })
    }

    /// Drop a register that is in a definite basis state across the whole
    /// support (i.e. unentangled and unsuperposed).
    pub fn drop_register(&self, reg: usize) -> Result<SparseState> {
        let range = self.layout.digit_range(reg);
        let mut first: Option<&[u16]> = None;
        for label in self.amps.keys() {
            let digits = &label[range.clone()];
            match first {
                None => first = Some(digits),
                Some(f) if f != digits => {
                    return Err(Error::LayoutMismatch(format!(
                        "register {} is not in a product basis state",
                        self.layout.name(reg)
                    )))
                }
                _ => {}
            }
        }
        let layout = self.layout.without_register(reg)?;
        let mut amps = BTreeMap::new();
        for (label, amp) in &self.amps {
            let mut rest = Vec::with_capacity(label.len() - range.len());
            rest.extend_from_slice(&label[..range.start]);
            rest.extend_from_slice(&label[range.end..]);
            amps.insert(rest, *amp);
        }
        Ok(SparseState {
            layout,
            amps,
            budget: self.budget,
        })
    }

    /// Generalized Pauli `X^shift` on one register: cyclic digit shift.
    pub fn pauli_x(&self, reg: usize, shift: &ZqVec) -> Result<SparseState> {
        let range = self.layout.digit_range(reg);
        let q = self.layout.q();
        if shift.dim() != range.len() || shift.q() != q {
            return Err(Error::DimensionMismatch(format!(
                "shift dim {} vs register width {}",
                shift.dim(),
                range.len()
            )));
        }
        let mut amps = BTreeMap::new();
        for (label, amp) in &self.amps {
            let mut new_label = label.clone();
            for (i, pos) in range.clone().enumerate() {
                new_label[pos] = nonneg(label[pos] as i64 + shift.get(i), q) as u16;
            }
            amps.insert(new_label, *amp);
        }
        Ok(SparseState {
            layout: self.layout.clone(),
            amps,
            budget: self.budget,
        })
    }

    /// Generalized Pauli `Z^phase` on one register: multiplies each basis
    /// label by `omega_q^{<digits, phase>}`.
    pub fn pauli_z(&self, reg: usize, phase: &ZqVec) -> Result<SparseState> {
        let range = self.layout.digit_range(reg);
        let q = self.layout.q();
        if phase.dim() != range.len() || phase.q() != q {
            return Err(Error::DimensionMismatch(format!(
                "phase dim {} vs register width {}",
                phase.dim(),
                range.len()
            )));
        }
        let mut amps = BTreeMap::new();
        for (label, amp) in &self.amps {
            let mut k: i128 = 0;
            for (i, pos) in range.clone().enumerate() {
                k += (label[pos] as i128) * (phase.get(i) as i128);
            }
            amps.insert(label.clone(), amp * omega(q, centered(k, q)));
        }
        Ok(SparseState {
            layout: self.layout.clone(),
            amps,
            budget: self.budget,
        })
    }

    /// Apply a bijection on full basis labels (a permutation unitary).
    /// Errors if two labels collide, which would make the map non-unitary.
    pub fn permute_labels<F>(&self, f: F) -> Result<SparseState>
    where
        F: Fn(&[u16]) -> Vec<u16>,
    {
        let mut amps = BTreeMap::new();
        for (label, amp) in &self.amps {
            let new_label = f(label);
            self.layout.validate_label(&new_label)?;
            if amps.insert(new_label, *amp).is_some() {
                return Err(Error::LayoutMismatch(
                    "label permutation collided; map is not a bijection on the support".into(),
                ));
            }
        }
        Ok(SparseState {
            layout: self.layout.clone(),
            amps,
            budget: self.budget,
        })
    }

    /// q-ary quantum Fourier transform on one register:
    /// `|x> -> q^{-w/2} sum_y omega^{<y,x>} |y>`.
    pub fn qft(&self, reg: usize) -> Result<SparseState> {
        self.fourier_on_register(reg, 1)
    }

    /// Inverse q-ary quantum Fourier transform on one register.
    pub fn qft_inv(&self, reg: usize) -> Result<SparseState> {
        self.fourier_on_register(reg, -1)
    }

    fn fourier_on_register(&self, reg: usize, sign: i64) -> Result<SparseState> {
        let range = self.layout.digit_range(reg);
        let q = self.layout.q();
        let qu = q as usize;
        // transform one digit position at a time
        let mut amps = self.amps.clone();
        for pos in range {
            // group by label-without-digit; the transformed support is at
            // most (number of groups) * q
            let mut groups: BTreeMap<Vec<u16>, Vec<Complex64>> = BTreeMap::new();
            for (label, amp) in &amps {
                let mut key = label.clone();
                let digit = key[pos] as usize;
                key[pos] = 0;
                groups
                    .entry(key)
                    .or_insert_with(|| vec![Complex64::new(0.0, 0.0); qu])[digit] += *amp;
            }
            let needed = groups.len().saturating_mul(qu);
            if needed > self.budget {
                return Err(Error::BudgetExceeded {
                    needed,
                    budget: self.budget,
                });
            }
            let scale = 1.0 / (q as f64).sqrt();
            let mut next: BTreeMap<Vec<u16>, Complex64> = BTreeMap::new();
            for (key, column) in groups {
                for y in 0..qu {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (x, amp) in column.iter().enumerate() {
                        if amp.norm_sqr() > 0.0 {
                            acc += amp * omega(q, sign * centered((x * y) as i128, q));
                        }
                    }
                    acc *= scale;
                    if acc.norm() > PRUNE_THRESHOLD {
                        let mut label = key.clone();
                        label[pos] = y as u16;
                        next.insert(label, acc);
                    }
                }
            }
            amps = next;
        }
        if amps.is_empty() {
            return Err(Error::EmptySupport("state vanished under transform".into()));
        }
        Ok(SparseState {
            layout: self.layout.clone(),
            amps,
            budget: self.budget,
        })
    }

    /// Marginal Born distribution of a register's digit string.
    pub fn register_distribution(&self, reg: usize) -> Vec<(Vec<u16>, f64)> {
        let range = self.layout.digit_range(reg);
        let mut probs: BTreeMap<Vec<u16>, f64> = BTreeMap::new();
        for (label, amp) in &self.amps {
            *probs.entry(label[range.clone()].to_vec()).or_insert(0.0) += amp.norm_sqr();
        }
        probs.into_iter().collect()
    }

    /// Measure a register in the computational basis. Returns the outcome
    /// digits and the renormalized post-measurement state.
    pub fn measure_computational<R: Rng>(
        &self,
        reg: usize,
        rng: &mut R,
    ) -> Result<(Vec<u16>, SparseState)> {
        let dist = self.register_distribution(reg);
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        let u: f64 = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = dist.len() - 1;
        for (i, (_, p)) in dist.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = i;
                break;
            }
        }
        let outcome = dist[chosen].0.clone();
        let range = self.layout.digit_range(reg);
        let mut amps = BTreeMap::new();
        for (label, amp) in &self.amps {
            if label[range.clone()] == outcome[..] {
                amps.insert(label.clone(), *amp);
            }
        }
        let mut post = SparseState {
            layout: self.layout.clone(),
            amps,
            budget: self.budget,
        };
        post.normalize();
        Ok((outcome, post))
    }

    /// Exact Born distribution of a Fourier-basis measurement of `reg`
    /// (apply `FT_q` to the register, then read the computational basis).
    pub fn fourier_distribution(&self, reg: usize) -> Result<Vec<(Vec<u16>, f64)>> {
        Ok(self.qft(reg)?.register_distribution(reg))
    }

    /// Measure a register in the Fourier basis: applies `FT_q` to the
    /// register and measures. The returned post-measurement state has the
    /// register collapsed in the transformed frame.
    pub fn measure_fourier<R: Rng>(
        &self,
        reg: usize,
        rng: &mut R,
    ) -> Result<(Vec<u16>, SparseState)> {
        self.qft(reg)?.measure_computational(reg, rng)
    }

    /// Interpret a digit string as a centered `ZqVec`.
    pub fn digits_to_zqvec(&self, digits: &[u16]) -> ZqVec {
        ZqVec::new(digits.iter().map(|&d| d as i64).collect(), self.layout.q())
    }
}

/// Convert a centered vector into layout digits `[0, q)`.
pub fn zqvec_to_digits(v: &ZqVec) -> Vec<u16> {
    v.entries()
        .iter()
        .map(|&e| nonneg(e, v.q()) as u16)
        .collect()
}
