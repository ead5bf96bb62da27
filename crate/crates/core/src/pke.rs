//! Dual-Regev public-key bit encryption with certified deletion.
//!
//! A ciphertext is a primal Gaussian state shifted by
//! `(0, ..., 0, b floor(q/2))`. Decrypting measures in the computational
//! basis and thresholds the inner product with the planted trapdoor;
//! deleting measures in the Fourier basis, which produces a short vector
//! in the coset `{pi : A pi = y}` — a publicly checkable ISIS witness.
//!
//! Quantum simulation is exact but confined to toy dimensions, so the
//! module also carries a classical twin of the encrypt/decrypt path
//! (the distribution a computational-basis measurement of the ciphertext
//! induces) for correctness runs at cryptographic-shape parameters.

use crate::error::{Error, Result};
use crate::gaussian::{half_q, sample_truncated_gaussian, sample_uniform_mat, GaussParams};
use crate::modq::{centered, mat_vec, ModParams, ZqMat, ZqVec};
use crate::sim::SparseState;
use crate::states::gen_primal;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Parameter regime: `Strict` enforces the analytic windows, `Sandbox`
/// allows any positive parameters (assertions downgrade to metrics).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamMode {
    Strict,
    Sandbox,
}

/// Parameters of the Dual-Regev scheme. The public matrix is
/// `n x (m+1)`; `alpha` is the noise ratio (`sigma = 1/alpha`).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PkeParams {
    pub lambda: u32,
    pub n: usize,
    pub q: i64,
    pub m: usize,
    pub alpha: f64,
    pub mode: ParamMode,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_budget() -> usize {
    crate::DEFAULT_SUPPORT_BUDGET
}

impl PkeParams {
    pub fn new(
        lambda: u32,
        n: usize,
        q: i64,
        m: usize,
        alpha: f64,
        mode: ParamMode,
    ) -> Result<Self> {
        ModParams::new(q)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::BadParams(format!("alpha {alpha} outside (0,1)")));
        }
        let p = PkeParams {
            lambda,
            n,
            q,
            m,
            alpha,
            mode,
            budget: default_budget(),
        };
        if mode == ParamMode::Strict {
            p.check_strict()?;
        }
        Ok(p)
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    /// Gaussian width of the ciphertext state.
    pub fn sigma(&self) -> f64 {
        1.0 / self.alpha
    }

    /// Norm threshold of certificate verification:
    /// `sqrt(m+1) / (sqrt(2) alpha)`.
    pub fn verify_norm_bound(&self) -> f64 {
        ((self.m + 1) as f64).sqrt() / (2f64.sqrt() * self.alpha)
    }

    /// Strict-mode constraints: `m >= 2 n log2 q` and
    /// `sqrt(8(m+1)) <= 1/alpha <= q / sqrt(8(m+1))`.
    pub fn check_strict(&self) -> Result<()> {
        let log2q = (self.q as f64).log2();
        if (self.m as f64) < 2.0 * self.n as f64 * log2q {
            return Err(Error::BadParams(format!(
                "strict mode needs m >= 2 n log2 q = {:.2}, got m = {}",
                2.0 * self.n as f64 * log2q,
                self.m
            )));
        }
        let lo = (8.0 * (self.m + 1) as f64).sqrt();
        let hi = self.q as f64 / lo;
        let inv = 1.0 / self.alpha;
        if !(lo <= inv && inv <= hi) {
            return Err(Error::BadParams(format!(
                "strict mode needs 1/alpha in [{lo:.3}, {hi:.3}], got {inv:.3}"
            )));
        }
        Ok(())
    }
}

/// Key pair: `pk = [Abar | Abar xbar]`, `sk = (-xbar, 1)` with
/// `pk . sk = 0 mod q`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PkeKeyPair {
    pub pk: ZqMat,
    pub sk: ZqVec,
}

/// Public verification key `(A, y)` for a deletion certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationKey {
    pub a: ZqMat,
    pub y: ZqVec,
}

/// Quantum ciphertext (one register of width `m+1`) plus its
/// verification key.
#[derive(Debug, Clone)]
pub struct PkeCiphertext {
    pub state: SparseState,
    pub vk: VerificationKey,
}

/// Fourier-basis measurement outcome claimed as proof of deletion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeletionCertificate {
    pub pi: ZqVec,
}

const KEYGEN_RETRIES: usize = 256;

/// Sample `pk = [Abar | Abar xbar]`, `sk = (-xbar, 1)`. Resamples until
/// the columns of `pk` generate `Z_q^n` (needed by `GenPrimal`).
pub fn keygen<R: Rng>(params: &PkeParams, rng: &mut R) -> Result<PkeKeyPair> {
    for _ in 0..KEYGEN_RETRIES {
        let abar = sample_uniform_mat(params.n, params.m, params.q, rng);
        let xbar: Vec<i64> = (0..params.m).map(|_| rng.gen_range(0..2i64)).collect();
        let planted = mat_vec(&abar, &ZqVec::new(xbar.clone(), params.q))?;
        let mut pk = ZqMat::zero(params.n, params.m + 1, params.q);
        for r in 0..params.n {
            for c in 0..params.m {
                pk.set(r, c, abar.get(r, c));
            }
            pk.set(r, params.m, planted.get(r));
        }
        if !crate::modq::generates_full_group(&pk) {
            continue;
        }
        let mut sk: Vec<i64> = xbar.iter().map(|&b| -b).collect();
        sk.push(1);
        let sk = ZqVec::new(sk, params.q);
        debug_assert_eq!(mat_vec(&pk, &sk)?, ZqVec::zero(params.n, params.q));
        return Ok(PkeKeyPair { pk, sk });
    }
    Err(Error::RetriesExhausted("pke keygen"))
}

/// The plaintext-dependent shift `(0, ..., 0, b floor(q/2))`.
pub fn plaintext_shift(b: u8, m_plus_1: usize, q: i64) -> ZqVec {
    let mut v = vec![0i64; m_plus_1];
    v[m_plus_1 - 1] = (b as i64) * half_q(q);
    ZqVec::new(v, q)
}

/// Encrypt one bit: generate a primal Gaussian state for `pk`, apply the
/// plaintext shift, and publish `(A, y)` as the verification key.
pub fn encrypt<R: Rng>(
    pk: &ZqMat,
    b: u8,
    params: &PkeParams,
    rng: &mut R,
) -> Result<(VerificationKey, PkeCiphertext)> {
    if b > 1 {
        return Err(Error::BadParams(format!("plaintext bit {b}")));
    }
    let (primal, y) = gen_primal(pk, params.sigma(), rng, params.budget)?;
    let shift = plaintext_shift(b, params.m + 1, params.q);
    let state = primal.state.pauli_x(0, &shift)?;
    let vk = VerificationKey { a: pk.clone(), y };
    Ok((vk.clone(), PkeCiphertext { state, vk }))
}

/// Threshold decision shared by the quantum and classical paths:
/// `0` if `c . sk` is closer to `0` than to `floor(q/2)` (circular
/// distances on centered representatives), `1` otherwise; the exact
/// midpoint resolves to `1`.
pub fn threshold_decision(c_dot_sk: i64, q: i64) -> u8 {
    let v = centered(c_dot_sk as i128, q);
    let h = half_q(q);
    let d0 = v.abs();
    let dh_raw = (v - h).abs();
    let dh = dh_raw.min(q - dh_raw);
    u8::from(d0 >= dh)
}

/// Decrypt by measuring the ciphertext in the computational basis. The
/// ciphertext is consumed: decryption and deletion are alternative
/// destructive measurements of the same state.
pub fn decrypt<R: Rng>(sk: &ZqVec, ct: PkeCiphertext, rng: &mut R) -> Result<u8> {
    let (outcome, _) = ct.state.measure_computational(0, rng)?;
    let c = ct.state.digits_to_zqvec(&outcome);
    Ok(threshold_decision(c.dot(sk)?, sk.q()))
}

/// Delete by measuring the ciphertext in the Fourier basis. Returns the
/// certificate and the post-measurement state (the latter is only
/// interesting to experiment harnesses).
pub fn delete<R: Rng>(
    ct: PkeCiphertext,
    rng: &mut R,
) -> Result<(DeletionCertificate, SparseState)> {
    let (outcome, post) = ct.state.measure_fourier(0, rng)?;
    let pi = post.digits_to_zqvec(&outcome);
    Ok((DeletionCertificate { pi }, post))
}

/// Exact Fourier outcome distribution of a ciphertext, as
/// (certificate, probability) pairs. Oracle access for tests; does not
/// consume the ciphertext.
pub fn certificate_distribution(ct: &PkeCiphertext) -> Result<Vec<(ZqVec, f64)>> {
    Ok(ct
        .state
        .fourier_distribution(0)?
        .into_iter()
        .map(|(digits, p)| (ct.state.digits_to_zqvec(&digits), p))
        .collect())
}

/// Verify a deletion certificate: `A pi = y mod q` and
/// `||pi|| <= sqrt(m+1) / (sqrt(2) alpha)`.
pub fn verify(vk: &VerificationKey, cert: &DeletionCertificate, params: &PkeParams) -> bool {
    let Ok(image) = mat_vec(&vk.a, &cert.pi) else {
        return false;
    };
    image == vk.y && cert.pi.norm() <= params.verify_norm_bound() + 1e-9
}

/// Classical twin of `encrypt`: the distribution a computational-basis
/// measurement of the honest ciphertext induces,
/// `c = s0 A + e0 + (0,...,0, b floor(q/2))` with `s0` uniform and
/// `e0 ~ D_{Z_q^{m+1}, alpha q / sqrt(2)}`.
pub fn classical_encrypt<R: Rng>(
    pk: &ZqMat,
    b: u8,
    params: &PkeParams,
    rng: &mut R,
) -> Result<ZqVec> {
    let q = params.q;
    let width = params.alpha * q as f64 / 2f64.sqrt();
    let gp = GaussParams::new(width, q, params.m + 1)?;
    let s0: Vec<i64> = (0..params.n).map(|_| rng.gen_range(0..q)).collect();
    let e0 = sample_truncated_gaussian(&gp, rng)?;
    let mut c = Vec::with_capacity(params.m + 1);
    for j in 0..params.m + 1 {
        let mut acc = e0.get(j) as i128;
        for (i, &si) in s0.iter().enumerate() {
            acc += (si as i128) * (pk.get(i, j) as i128);
        }
        c.push(centered(acc, q));
    }
    let shift = plaintext_shift(b, params.m + 1, q);
    ZqVec::new(c, q).add(&shift)
}

/// Classical twin of `decrypt`.
pub fn classical_decrypt(sk: &ZqVec, c: &ZqVec) -> Result<u8> {
    Ok(threshold_decision(c.dot(sk)?, sk.q()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Sandbox parameters small enough for exact simulation:
    /// n=1, q=29, m+1=3, 1/alpha=5.4 (inside the analytic window).
    fn toy_params() -> PkeParams {
        PkeParams::new(8, 1, 29, 2, 1.0 / 5.4, ParamMode::Sandbox).unwrap()
    }

    /// Strict parameters for the classical twin: n=2, q=521, m=40.
    fn strict_params() -> PkeParams {
        PkeParams::new(16, 2, 521, 40, 1.0 / 28.0, ParamMode::Strict).unwrap()
    }

    #[test]
    fn strict_mode_validates_windows() {
        assert!(PkeParams::new(16, 2, 521, 40, 1.0 / 28.0, ParamMode::Strict).is_ok());
        // m too small
        assert!(PkeParams::new(16, 2, 521, 10, 1.0 / 28.0, ParamMode::Strict).is_err());
        // alpha outside the window
        assert!(PkeParams::new(16, 2, 521, 40, 1.0 / 100.0, ParamMode::Strict).is_err());
        // sandbox accepts anything positive
        assert!(PkeParams::new(8, 1, 29, 2, 0.5, ParamMode::Sandbox).is_ok());
    }

    #[test]
    fn keygen_trapdoor_identity() {
        let params = toy_params();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..20 {
            let kp = keygen(&params, &mut rng).unwrap();
            assert_eq!(
                mat_vec(&kp.pk, &kp.sk).unwrap(),
                ZqVec::zero(params.n, params.q)
            );
            assert!(kp.sk.norm() <= ((params.m + 1) as f64).sqrt() + 1e-12);
            assert_eq!(kp.sk.get(params.m), 1);
            assert!(kp.sk.entries().iter().all(|&e| (-1..=1).contains(&e)));
        }
    }

    #[test]
    fn keygen_planted_column_near_uniform() {
        // average exact TV of the planted column given Abar, against the
        // leftover-hash-lemma prediction; n=1, m=9, q=13
        let q = 13i64;
        let m = 9usize;
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let trials = 10_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let abar = sample_uniform_mat(1, m, q, &mut rng);
            // exact distribution of Abar xbar over xbar ~ {0,1}^m
            let mut dist = vec![0.0f64; q as usize];
            dist[0] = 1.0;
            for j in 0..m {
                let a = crate::modq::nonneg(abar.get(0, j), q) as usize;
                let mut next = vec![0.0f64; q as usize];
                for (v, &p) in dist.iter().enumerate() {
                    next[v] += 0.5 * p;
                    next[(v + a) % q as usize] += 0.5 * p;
                }
                dist = next;
            }
            acc += 0.5 * dist.iter().map(|p| (p - 1.0 / q as f64).abs()).sum::<f64>();
        }
        let avg = acc / trials as f64;
        assert!(avg <= 0.05, "average planted-column TV {avg}");
    }

    #[test]
    fn encrypt_b0_is_unshifted_primal() {
        let params = toy_params();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let kp = keygen(&params, &mut rng).unwrap();
        let mut rng_a = ChaCha20Rng::seed_from_u64(77);
        let mut rng_b = ChaCha20Rng::seed_from_u64(77);
        let (_, ct0) = encrypt(&kp.pk, 0, &params, &mut rng_a).unwrap();
        let (primal, _) = gen_primal(&kp.pk, params.sigma(), &mut rng_b, params.budget).unwrap();
        assert!(ct0.state.trace_distance_pure(&primal.state).unwrap() <= 1e-12);
    }

    #[test]
    fn ciphertexts_differ_by_exact_shift() {
        let params = toy_params();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let kp = keygen(&params, &mut rng).unwrap();
        let mut rng_a = ChaCha20Rng::seed_from_u64(55);
        let mut rng_b = ChaCha20Rng::seed_from_u64(55);
        let (_, ct0) = encrypt(&kp.pk, 0, &params, &mut rng_a).unwrap();
        let (_, ct1) = encrypt(&kp.pk, 1, &params, &mut rng_b).unwrap();
        let shift = plaintext_shift(1, params.m + 1, params.q);
        let shifted = ct0.state.pauli_x(0, &shift).unwrap();
        assert!(shifted.trace_distance_pure(&ct1.state).unwrap() <= 1e-12);
    }

    #[test]
    fn threshold_decision_edges() {
        // c.sk = 0 -> 0; c.sk = floor(q/2) -> 1; exact midpoint -> 1
        assert_eq!(threshold_decision(0, 29), 0);
        assert_eq!(threshold_decision(14, 29), 1);
        assert_eq!(threshold_decision(7, 29), 1); // midpoint of 0..14 (|7|=7, dist 7)
        assert_eq!(threshold_decision(6, 29), 0);
        assert_eq!(threshold_decision(-6, 29), 0);
    }

    #[test]
    fn quantum_roundtrip_decrypts() {
        let params = toy_params();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let kp = keygen(&params, &mut rng).unwrap();
        let mut correct = 0;
        let trials = 40;
        for t in 0..trials {
            let b = (t % 2) as u8;
            let (_, ct) = encrypt(&kp.pk, b, &params, &mut rng).unwrap();
            if decrypt(&kp.sk, ct, &mut rng).unwrap() == b {
                correct += 1;
            }
        }
        assert!(correct >= trials - 1, "decrypt correct {correct}/{trials}");
    }

    #[test]
    fn delete_then_verify_accepts() {
        let params = toy_params();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let kp = keygen(&params, &mut rng).unwrap();
        let mut accepted = 0;
        let trials = 40;
        for t in 0..trials {
            let b = (t % 2) as u8;
            let (vk, ct) = encrypt(&kp.pk, b, &params, &mut rng).unwrap();
            let (cert, _) = delete(ct, &mut rng).unwrap();
            // honest certificates satisfy A pi = y by construction
            assert_eq!(mat_vec(&vk.a, &cert.pi).unwrap(), vk.y);
            if verify(&vk, &cert, &params) {
                accepted += 1;
            }
        }
        assert!(
            accepted >= trials - 1,
            "verify accepted {accepted}/{trials}"
        );
    }

    #[test]
    fn verify_rejects_bad_certificates() {
        let params = toy_params();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let kp = keygen(&params, &mut rng).unwrap();
        let (vk, ct) = encrypt(&kp.pk, 0, &params, &mut rng).unwrap();
        let (cert, _) = delete(ct, &mut rng).unwrap();
        // wrong image
        let mut tampered = cert.clone();
        tampered.pi = tampered
            .pi
            .add(&ZqVec::new(vec![1, 0, 0], params.q))
            .unwrap();
        if mat_vec(&vk.a, &tampered.pi).unwrap() != vk.y {
            assert!(!verify(&vk, &tampered, &params));
        }
        // zero vector against nonzero y
        if vk.y != ZqVec::zero(params.n, params.q) {
            let zero = DeletionCertificate {
                pi: ZqVec::zero(params.m + 1, params.q),
            };
            assert!(!verify(&vk, &zero, &params));
        }
        // norm violation: a coset point far outside the ball
        let far = DeletionCertificate {
            pi: ZqVec::new(vec![14, 14, 14], params.q),
        };
        if mat_vec(&vk.a, &far.pi).unwrap() != vk.y {
            assert!(!verify(&vk, &far, &params));
        }
    }

    #[test]
    fn certificate_distribution_is_plaintext_independent() {
        let params = toy_params();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let kp = keygen(&params, &mut rng).unwrap();
        let mut rng_a = ChaCha20Rng::seed_from_u64(99);
        let mut rng_b = ChaCha20Rng::seed_from_u64(99);
        let (_, ct0) = encrypt(&kp.pk, 0, &params, &mut rng_a).unwrap();
        let (_, ct1) = encrypt(&kp.pk, 1, &params, &mut rng_b).unwrap();
        let d0 = certificate_distribution(&ct0).unwrap();
        let d1 = certificate_distribution(&ct1).unwrap();
        let mut map = std::collections::BTreeMap::new();
        for (pi, p) in d0 {
            map.insert(pi.entries().to_vec(), (p, 0.0));
        }
        for (pi, p) in d1 {
            map.entry(pi.entries().to_vec()).or_insert((0.0, 0.0)).1 = p;
        }
        let tv: f64 = 0.5 * map.values().map(|(a, b)| (a - b).abs()).sum::<f64>();
        assert!(tv <= 1e-9, "certificate TV across plaintexts {tv}");
    }

    #[test]
    fn deletion_deterministic_under_seed() {
        let params = toy_params();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let kp = keygen(&params, &mut rng).unwrap();
        let run = |seed: u64, kp: &PkeKeyPair| {
            let mut r = ChaCha20Rng::seed_from_u64(seed);
            let (_, ct) = encrypt(&kp.pk, 1, &params, &mut r).unwrap();
            let (cert, _) = delete(ct, &mut r).unwrap();
            cert
        };
        assert_eq!(run(1234, &kp), run(1234, &kp));
    }

    #[test]
    fn classical_twin_strict_correctness() {
        let params = strict_params();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let kp = keygen(&params, &mut rng).unwrap();
        for t in 0..200 {
            let b = (t % 2) as u8;
            let c = classical_encrypt(&kp.pk, b, &params, &mut rng).unwrap();
            assert_eq!(classical_decrypt(&kp.sk, &c).unwrap(), b, "trial {t}");
        }
    }

    #[test]
    fn classical_twin_zero_noise_edges() {
        // b=0 with e0 = 0 gives c.sk = 0; flipping b flips the decision
        let params = strict_params();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let kp = keygen(&params, &mut rng).unwrap();
        let s0 = crate::gaussian::sample_uniform_vec(params.n, params.q, &mut rng);
        let mut c = Vec::new();
        for j in 0..params.m + 1 {
            let mut acc: i128 = 0;
            for i in 0..params.n {
                acc += (s0.get(i) as i128) * (kp.pk.get(i, j) as i128);
            }
            c.push(centered(acc, params.q));
        }
        let c0 = ZqVec::new(c, params.q);
        assert_eq!(c0.dot(&kp.sk).unwrap(), 0);
        assert_eq!(classical_decrypt(&kp.sk, &c0).unwrap(), 0);
        let c1 = c0.add(&plaintext_shift(1, params.m + 1, params.q)).unwrap();
        assert_eq!(classical_decrypt(&kp.sk, &c1).unwrap(), 1);
    }

    #[test]
    fn key_serialization_roundtrip() {
        let params = toy_params();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let kp = keygen(&params, &mut rng).unwrap();
        let json = serde_json::to_string(&kp).unwrap();
        let back: PkeKeyPair = serde_json::from_str(&json).unwrap();
        assert_eq!(back.pk, kp.pk);
        assert_eq!(back.sk, kp.sk);
    }
}
