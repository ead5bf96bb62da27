//! Exact arithmetic over `Z_q` with centered representatives.
//!
//! Elements of `Z_q` are stored as integers in the range `(-q/2, q/2]`.
//! All operations reduce back into that range. The module also provides
//! the gadget matrix `G` together with its binary-decomposition inverse,
//! the Ajtai hash, and enough linear algebra over the prime field `Z_q`
//! (rank, solve, coset enumeration) to drive the rest of the crate.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Reduce `x` into the centered range `(-q/2, q/2]`.
pub fn centered(x: i128, q: i64) -> i64 {
    let q = q as i128;
    let mut r = x % q;
    if r < 0 {
        r += q;
    }
    if 2 * r > q {
        r -= q;
    }
    r as i64
}

/// Non-negative representative of `x` in `[0, q)`.
pub fn nonneg(x: i64, q: i64) -> i64 {
    let r = x % q;
    if r < 0 {
        r + q
    } else {
        r
    }
}

fn mul_mod(a: i64, b: i64, q: i64) -> i64 {
    centered((a as i128) * (b as i128), q)
}

fn pow_mod(base: i64, mut exp: u64, q: i64) -> i64 {
    let mut acc: i128 = 1;
    let mut b = nonneg(base, q) as i128;
    let q = q as i128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % q;
        }
        b = b * b % q;
        exp >>= 1;
    }
    acc as i64
}

/// Multiplicative inverse mod prime `q`.
fn inv_mod(a: i64, q: i64) -> i64 {
    debug_assert!(nonneg(a, q) != 0);
    pow_mod(a, (q - 2) as u64, q)
}

/// Deterministic Miller-Rabin, valid for all 64-bit inputs.
fn is_prime(n: i64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2i64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = (n - 1) as u64;
    let mut s = 0;
    while d & 1 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2i64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        x = nonneg(x, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = nonneg(mul_mod(x, x, n), n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// A prime modulus. Primality is checked at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModParams {
    q: i64,
}

impl ModParams {
    pub fn new(q: i64) -> Result<Self> {
        if q < 2 || !is_prime(q) {
            return Err(Error::NotPrime(q));
        }
        Ok(ModParams { q })
    }

    pub fn q(&self) -> i64 {
        self.q
    }

    /// Number of bits needed for `[0, q)`, i.e. `ceil(log2 q)`.
    pub fn ell(&self) -> usize {
        let mut ell = 0;
        let mut v: u64 = 1;
        while (v as i64) < self.q {
            v <<= 1;
            ell += 1;
        }
        ell.max(1)
    }
}

/// Vector over `Z_q` with centered entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZqVec {
    q: i64,
    entries: Vec<i64>,
}

impl ZqVec {
    pub fn new(entries: Vec<i64>, q: i64) -> Self {
        let entries = entries.iter().map(|&e| centered(e as i128, q)).collect();
        ZqVec { q, entries }
    }

    pub fn zero(dim: usize, q: i64) -> Self {
        ZqVec {
            q,
            entries: vec![0; dim],
        }
    }

    pub fn q(&self) -> i64 {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> i64 {
        self.entries[i]
    }

    pub fn add(&self, other: &ZqVec) -> Result<ZqVec> {
        self.check_dim(other)?;
        Ok(ZqVec {
            q: self.q,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| centered(a as i128 + b as i128, self.q))
                .collect(),
        })
    }

    pub fn sub(&self, other: &ZqVec) -> Result<ZqVec> {
        self.check_dim(other)?;
        Ok(ZqVec {
            q: self.q,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| centered(a as i128 - b as i128, self.q))
                .collect(),
        })
    }

    pub fn neg(&self) -> ZqVec {
        ZqVec {
            q: self.q,
            entries: self
                .entries
                .iter()
                .map(|&a| centered(-(a as i128), self.q))
                .collect(),
        }
    }

    pub fn scale(&self, c: i64) -> ZqVec {
        ZqVec {
            q: self.q,
            entries: self
                .entries
                .iter()
                .map(|&a| mul_mod(a, c, self.q))
                .collect(),
        }
    }

    /// Inner product reduced to the centered range.
    pub fn dot(&self, other: &ZqVec) -> Result<i64> {
        self.check_dim(other)?;
        let q = self.q as i128;
        let mut acc: i128 = 0;
        for (i, (&a, &b)) in self.entries.iter().zip(&other.entries).enumerate() {
            acc += (a as i128) * (b as i128);
            if i % 4096 == 4095 {
                acc %= q;
            }
        }
        Ok(centered(acc, self.q))
    }

    /// Squared Euclidean norm of the centered representative.
    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|&e| (e as f64) * (e as f64)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    fn check_dim(&self, other: &ZqVec) -> Result<()> {
        if self.dim() != other.dim() || self.q != other.q {
            return Err(Error::DimensionMismatch(format!(
                "vec {}x(q={}) vs {}x(q={})",
                self.dim(),
                self.q,
                other.dim(),
                other.q
            )));
        }
        Ok(())
    }
}

/// Row-major matrix over `Z_q` with centered entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZqMat {
    q: i64,
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl ZqMat {
    pub fn new(rows: usize, cols: usize, data: Vec<i64>, q: i64) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "matrix {}x{} needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        let data = data.iter().map(|&e| centered(e as i128, q)).collect();
        Ok(ZqMat {
            q,
            rows,
            cols,
            data,
        })
    }

    pub fn zero(rows: usize, cols: usize, q: i64) -> Self {
        ZqMat {
            q,
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize, q: i64) -> Self {
        let mut m = Self::zero(n, n, q);
        for i in 0..n {
            m.data[i * n + i] = centered(1, q);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<i64>], q: i64) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(r, c, rows.concat(), q)
    }

    pub fn q(&self) -> i64 {
        self.q
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> i64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: i64) {
        self.data[r * self.cols + c] = centered(v as i128, self.q);
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> ZqVec {
        ZqVec {
            q: self.q,
            entries: self.data[r * self.cols..(r + 1) * self.cols].to_vec(),
        }
    }

    pub fn col(&self, c: usize) -> ZqVec {
        ZqVec {
            q: self.q,
            entries: (0..self.rows).map(|r| self.get(r, c)).collect(),
        }
    }

    pub fn transpose(&self) -> ZqMat {
        let mut out = ZqMat::zero(self.cols, self.rows, self.q);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.get(r, c);
            }
        }
        out
    }

    pub fn add(&self, other: &ZqMat) -> Result<ZqMat> {
        self.check_same_shape(other)?;
        Ok(ZqMat {
            q: self.q,
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| centered(a as i128 + b as i128, self.q))
                .collect(),
        })
    }

    pub fn sub(&self, other: &ZqMat) -> Result<ZqMat> {
        self.check_same_shape(other)?;
        Ok(ZqMat {
            q: self.q,
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| centered(a as i128 - b as i128, self.q))
                .collect(),
        })
    }

    pub fn scale(&self, c: i64) -> ZqMat {
        ZqMat {
            q: self.q,
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| mul_mod(a, c, self.q)).collect(),
        }
    }

    pub fn mat_mul(&self, other: &ZqMat) -> Result<ZqMat> {
        if self.cols != other.rows || self.q != other.q {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let q = self.q as i128;
        let mut out = ZqMat::zero(self.rows, other.cols, self.q);
        for r in 0..self.rows {
            for c in 0..other.cols {
                let mut acc: i128 = 0;
                for k in 0..self.cols {
                    acc += (self.get(r, k) as i128) * (other.get(k, c) as i128);
                    if k % 4096 == 4095 {
                        acc %= q;
                    }
                }
                out.data[r * out.cols + c] = centered(acc, self.q);
            }
        }
        Ok(out)
    }

    /// Largest absolute centered entry.
    pub fn inf_norm(&self) -> i64 {
        self.data.iter().map(|&e| e.abs()).max().unwrap_or(0)
    }

    fn check_same_shape(&self, other: &ZqMat) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols || self.q != other.q {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

/// `A * x mod q` with centered output.
pub fn mat_vec(a: &ZqMat, x: &ZqVec) -> Result<ZqVec> {
    if a.cols() != x.dim() || a.q() != x.q() {
        return Err(Error::DimensionMismatch(format!(
            "mat {}x{} * vec {}",
            a.rows(),
            a.cols(),
            x.dim()
        )));
    }
    let q = a.q() as i128;
    let mut out = Vec::with_capacity(a.rows());
    for r in 0..a.rows() {
        let mut acc: i128 = 0;
        for k in 0..a.cols() {
            acc += (a.get(r, k) as i128) * (x.get(k) as i128);
            if k % 4096 == 4095 {
                acc %= q;
            }
        }
        out.push(centered(acc, a.q()));
    }
    Ok(ZqVec {
        q: a.q(),
        entries: out,
    })
}

/// The Ajtai hash `h_A(x) = A * x mod q`.
pub fn ajtai_hash(a: &ZqMat, x: &ZqVec) -> Result<ZqVec> {
    mat_vec(a, x)
}

/// Shape of the gadget matrix: `m_plus_1` blocks of `ell = ceil(log2 q)`
/// powers of two, total width `n_total = m_plus_1 * ell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GadgetSpec {
    pub m_plus_1: usize,
    pub ell: usize,
    pub n_total: usize,
}

impl GadgetSpec {
    pub fn new(m_plus_1: usize, params: &ModParams) -> Self {
        let ell = params.ell();
        GadgetSpec {
            m_plus_1,
            ell,
            n_total: m_plus_1 * ell,
        }
    }
}

/// Gadget matrix `G = I_{m+1} (x) (1, 2, ..., 2^{ell-1})`, shape `(m+1) x N`.
pub fn gadget_matrix(spec: &GadgetSpec, q: i64) -> ZqMat {
    let mut g = ZqMat::zero(spec.m_plus_1, spec.n_total, q);
    for i in 0..spec.m_plus_1 {
        for j in 0..spec.ell {
            g.set(i, i * spec.ell + j, centered(1i128 << j, q));
        }
    }
    g
}

/// Binary decomposition `G^{-1}(v)`: little-endian bits of the
/// non-negative representative of each entry, so that `G * result = v`.
pub fn bit_decompose(v: &ZqVec, spec: &GadgetSpec) -> ZqVec {
    debug_assert_eq!(v.dim(), spec.m_plus_1);
    let mut bits = Vec::with_capacity(spec.n_total);
    for i in 0..spec.m_plus_1 {
        let mut rep = nonneg(v.get(i), v.q()) as u64;
        for _ in 0..spec.ell {
            bits.push((rep & 1) as i64);
            rep >>= 1;
        }
    }
    ZqVec::new(bits, v.q())
}

/// Column-wise `G^{-1}` of a matrix: each column of `y` is replaced by its
/// binary decomposition. Output shape `N x cols(y)`, entries in `{0, 1}`.
pub fn bit_decompose_matrix(y: &ZqMat, spec: &GadgetSpec) -> ZqMat {
    debug_assert_eq!(y.rows(), spec.m_plus_1);
    let mut out = ZqMat::zero(spec.n_total, y.cols(), y.q());
    for c in 0..y.cols() {
        let col = bit_decompose(&y.col(c), spec);
        for r in 0..spec.n_total {
            out.set(r, c, col.get(r));
        }
    }
    out
}

/// Row echelon form bookkeeping for a system `A x = y (mod q)`.
struct Echelon {
    reduced: Vec<Vec<i64>>,
    pivot_cols: Vec<usize>,
    free_cols: Vec<usize>,
}

fn echelon(a: &ZqMat) -> Echelon {
    let q = a.q();
    let (n, m) = (a.rows(), a.cols());
    let mut rows: Vec<Vec<i64>> = (0..n)
        .map(|r| (0..m).map(|c| a.get(r, c)).collect())
        .collect();
    let mut pivot_cols = Vec::new();
    let mut rank = 0;
    for col in 0..m {
        if rank >= n {
            break;
        }
        let pivot = (rank..n).find(|&r| nonneg(rows[r][col], q) != 0);
        let Some(p) = pivot else { continue };
        rows.swap(rank, p);
        let inv = inv_mod(rows[rank][col], q);
        for entry in rows[rank].iter_mut() {
            *entry = mul_mod(*entry, inv, q);
        }
        let pivot_row = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && nonneg(row[col], q) != 0 {
                let f = row[col];
                for (entry, &pv) in row.iter_mut().zip(&pivot_row) {
                    let sub = mul_mod(f, pv, q);
                    *entry = centered(*entry as i128 - sub as i128, q);
                }
            }
        }
        pivot_cols.push(col);
        rank += 1;
    }
    let free_cols = (0..m).filter(|c| !pivot_cols.contains(c)).collect();
    Echelon {
        reduced: rows,
        pivot_cols,
        free_cols,
    }
}

/// Rank of `A` over the field `Z_q`.
pub fn rank(a: &ZqMat) -> usize {
    echelon(a).pivot_cols.len()
}

/// True iff the columns of `A` span `Z_q^n` (full row rank; q prime).
pub fn generates_full_group(a: &ZqMat) -> bool {
    rank(a) == a.rows()
}

/// One solution of `A x = y (mod q)`, if any.
pub fn solve(a: &ZqMat, y: &ZqVec) -> Result<ZqVec> {
    if a.rows() != y.dim() || a.q() != y.q() {
        return Err(Error::DimensionMismatch("solve".into()));
    }
    let q = a.q();
    let n = a.rows();
    let m = a.cols();
    // eliminate on the augmented system
    let mut aug = ZqMat::zero(n, m + 1, q);
    for r in 0..n {
        for c in 0..m {
            aug.set(r, c, a.get(r, c));
        }
        aug.set(r, m, y.get(r));
    }
    let ech = echelon(&aug);
    // inconsistent iff a pivot lands in the augmented column
    if ech.pivot_cols.contains(&m) {
        return Err(Error::NoSolution);
    }
    let mut x = vec![0i64; m];
    for (row, &pc) in ech.pivot_cols.iter().enumerate() {
        x[pc] = ech.reduced[row][m];
    }
    Ok(ZqVec::new(x, q))
}

/// All residues `x in Z_q^m` (centered representatives) with
/// `A x = y mod q`. There are `q^{m - rank}` of them; the caller is
/// responsible for keeping that enumerable.
pub fn coset_residues(a: &ZqMat, y: &ZqVec) -> Result<Vec<ZqVec>> {
    let q = a.q();
    let m = a.cols();
    let n = a.rows();
    let mut aug = ZqMat::zero(n, m + 1, q);
    for r in 0..n {
        for c in 0..m {
            aug.set(r, c, a.get(r, c));
        }
        aug.set(r, m, y.get(r));
    }
    let ech = echelon(&aug);
    if ech.pivot_cols.contains(&m) {
        return Err(Error::NoSolution);
    }
    let free: Vec<usize> = ech.free_cols.iter().copied().filter(|&c| c < m).collect();
    let pivots = &ech.pivot_cols;
    let mut out = Vec::new();
    let mut assignment = vec![0i64; free.len()];
    loop {
        // back-substitute: pivot var = rhs - sum over free vars
        let mut x = vec![0i64; m];
        for (i, &fc) in free.iter().enumerate() {
            x[fc] = assignment[i];
        }
        for (row, &pc) in pivots.iter().enumerate() {
            let mut acc = ech.reduced[row][m] as i128;
            for (i, &fc) in free.iter().enumerate() {
                acc -= (ech.reduced[row][fc] as i128) * (assignment[i] as i128);
            }
            x[pc] = centered(acc, q);
        }
        out.push(ZqVec::new(x, q));
        // odometer over centered digits
        let mut pos = 0;
        loop {
            if pos == free.len() {
                return Ok(out);
            }
            assignment[pos] = centered(assignment[pos] as i128 + 1, q);
            // wrapped around when back at 0
            if assignment[pos] != 0 {
                break;
            }
            pos += 1;
        }
        if free.is_empty() {
            return Ok(out);
        }
    }
}
