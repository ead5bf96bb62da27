//! Dual-Regev leveled homomorphic encryption, classical and quantum,
//! with certified deletion.
//!
//! The classical scheme is the GSW-style construction with ciphertexts
//! `C = A S + E + x G` and the homomorphic gate
//! `C_ij = G - C_i G^{-1}(C_j)`. The quantum scheme encodes each gadget
//! column as a shifted primal Gaussian state over `N` registers of width
//! `m+1`; homomorphic NAND becomes a basis-label permutation unitary,
//! evaluation keeps a replayable transcript, and the interactive
//! extract/rewind protocol lets a receiver learn the circuit output
//! while returning the sender to (approximately) the original product
//! ciphertext, which can then still be deleted and verified.

use crate::error::{Error, Result};
use crate::gaussian::{sample_uniform_mat, GaussParams, TruncatedGaussianSampler};
use crate::modq::{centered, gadget_matrix, mat_vec, nonneg, GadgetSpec, ModParams, ZqMat, ZqVec};
use crate::pke::{threshold_decision, ParamMode};
use crate::sim::{RegisterLayout, SparseState};
use crate::states::gen_primal_direct;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Parameters of the leveled FHE schemes. The public matrix is
/// `(m+1) x n`; `N = (m+1) ceil(log2 q)`; `depth_bound` is the NAND
/// depth the strict window must support.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FheParams {
    pub lambda: u32,
    pub n: usize,
    pub q: i64,
    pub m: usize,
    pub depth_bound: usize,
    pub alpha: f64,
    pub mode: ParamMode,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_budget() -> usize {
    crate::DEFAULT_SUPPORT_BUDGET
}

impl FheParams {
    pub fn new(
        lambda: u32,
        n: usize,
        q: i64,
        m: usize,
        depth_bound: usize,
        alpha: f64,
        mode: ParamMode,
    ) -> Result<Self> {
        ModParams::new(q)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::BadParams(format!("alpha {alpha} outside (0,1)")));
        }
        let p = FheParams {
            lambda,
            n,
            q,
            m,
            depth_bound,
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

    pub fn gadget_spec(&self) -> GadgetSpec {
        let params = ModParams::new(self.q).expect("validated at construction");
        GadgetSpec::new(self.m + 1, &params)
    }

    /// Total gadget width `N = (m+1) ceil(log2 q)`.
    pub fn big_n(&self) -> usize {
        self.gadget_spec().n_total
    }

    pub fn sigma(&self) -> f64 {
        1.0 / self.alpha
    }

    /// Certificate norm threshold, as in the PKE scheme.
    pub fn verify_norm_bound(&self) -> f64 {
        ((self.m + 1) as f64).sqrt() / (2f64.sqrt() * self.alpha)
    }

    /// Strict window: `m >= 2 n log2 q` and
    /// `sqrt(8 (m+1) N) <= alpha q <= q / (sqrt(8) (m+1) N (N+1)^L)`.
    pub fn check_strict(&self) -> Result<()> {
        let log2q = (self.q as f64).log2();
        if (self.m as f64) < 2.0 * self.n as f64 * log2q {
            return Err(Error::BadParams(format!(
                "strict mode needs m >= 2 n log2 q = {:.2}, got m = {}",
                2.0 * self.n as f64 * log2q,
                self.m
            )));
        }
        let big_n = self.big_n() as f64;
        let m1 = (self.m + 1) as f64;
        let aq = self.alpha * self.q as f64;
        let lo = (8.0 * m1 * big_n).sqrt();
        let hi = self.q as f64
            / (8f64.sqrt() * m1 * big_n * (big_n + 1.0).powi(self.depth_bound as i32));
        if !(lo <= aq && aq <= hi) {
            return Err(Error::BadParams(format!(
                "strict mode needs alpha q in [{lo:.1}, {hi:.1}], got {aq:.1}"
            )));
        }
        Ok(())
    }
}

/// Key pair with the row-trapdoor orientation: `sk^T pk = 0 mod q`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FheKeyPair {
    pub pk: ZqMat,
    pub sk: ZqVec,
}

const KEYGEN_RETRIES: usize = 256;

/// `pk = [Abar | Abar xbar]^T in Z_q^{(m+1) x n}`, `sk = (-xbar, 1)`.
pub fn fhe_keygen<R: Rng>(params: &FheParams, rng: &mut R) -> Result<FheKeyPair> {
    for _ in 0..KEYGEN_RETRIES {
        let abar = sample_uniform_mat(params.n, params.m, params.q, rng);
        let xbar: Vec<i64> = (0..params.m).map(|_| rng.gen_range(0..2i64)).collect();
        let planted = mat_vec(&abar, &ZqVec::new(xbar.clone(), params.q))?;
        let mut pk = ZqMat::zero(params.m + 1, params.n, params.q);
        for r in 0..params.n {
            for c in 0..params.m {
                pk.set(c, r, abar.get(r, c));
            }
            pk.set(params.m, r, planted.get(r));
        }
        // GenPrimal runs over A^T, whose columns must generate Z_q^n
        if !crate::modq::generates_full_group(&pk.transpose()) {
            continue;
        }
        let mut sk: Vec<i64> = xbar.iter().map(|&b| -b).collect();
        sk.push(1);
        let sk = ZqVec::new(sk, params.q);
        debug_assert_eq!(
            mat_vec(&pk.transpose(), &sk)?,
            ZqVec::zero(params.n, params.q)
        );
        return Ok(FheKeyPair { pk, sk });
    }
    Err(Error::RetriesExhausted("fhe keygen"))
}

/// Classical GSW-style ciphertext with its honest noise tracker.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassicalFheCiphertext {
    pub c: ZqMat,
    /// Upper bound on `||E||_inf` along the honest evaluation path.
    pub noise_bound: f64,
}

/// `C = A S + E + x G` with `S` uniform and `E` sampled column-wise from
/// the truncated Gaussian of width `alpha q`.
pub fn classical_fhe_encrypt<R: Rng>(
    pk: &ZqMat,
    x: u8,
    params: &FheParams,
    rng: &mut R,
) -> Result<ClassicalFheCiphertext> {
    if x > 1 {
        return Err(Error::BadParams(format!("plaintext bit {x}")));
    }
    let spec = params.gadget_spec();
    let big_n = spec.n_total;
    let q = params.q;
    let s = sample_uniform_mat(params.n, big_n, q, rng);
    let a_s = pk.mat_mul(&s)?;
    let gp = GaussParams::new(params.alpha * q as f64, q, params.m + 1)?;
    let sampler = TruncatedGaussianSampler::new(&gp)?;
    let mut c = a_s;
    let mut noise_inf = 0i64;
    for col in 0..big_n {
        let e_col = sampler.sample(rng)?;
        for row in 0..params.m + 1 {
            let e = e_col.get(row);
            noise_inf = noise_inf.max(e.abs());
            c.set(row, col, centered(c.get(row, col) as i128 + e as i128, q));
        }
    }
    if x == 1 {
        c = c.add(&gadget_matrix(&spec, q))?;
    }
    Ok(ClassicalFheCiphertext {
        c,
        noise_bound: noise_inf as f64,
    })
}

/// `C_i * G^{-1}(C_j)` with the binary factor produced column by column
/// (a dense `N x N` bit matrix would not fit at strict parameters);
/// sums are gathered per output column over the set bit positions.
fn mul_by_gadget_inverse(ci: &ZqMat, cj: &ZqMat, spec: &GadgetSpec) -> ZqMat {
    let q = ci.q();
    let rows = ci.rows();
    let cols = cj.cols();
    let col_results: Vec<Vec<i64>> = (0..cols)
        .into_par_iter()
        .map(|c| {
            let bits = crate::modq::bit_decompose(&cj.col(c), spec);
            let ks: Vec<usize> = (0..spec.n_total).filter(|&k| bits.get(k) != 0).collect();
            (0..rows)
                .map(|r| {
                    let mut acc: i128 = 0;
                    for &k in &ks {
                        acc += ci.get(r, k) as i128;
                    }
                    centered(acc, q)
                })
                .collect()
        })
        .collect();
    let mut data = vec![0i64; rows * cols];
    for (c, col) in col_results.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            data[r * cols + c] = v;
        }
    }
    ZqMat::new(rows, cols, data, q).expect("consistent dims")
}

/// Homomorphic NAND: `C_ij = G - C_i G^{-1}(C_j) mod q`. The noise
/// tracker grows as `tracker_i * N + tracker_j`.
pub fn classical_nand(
    ci: &ClassicalFheCiphertext,
    cj: &ClassicalFheCiphertext,
    params: &FheParams,
) -> Result<ClassicalFheCiphertext> {
    let spec = params.gadget_spec();
    if ci.c.rows() != spec.m_plus_1
        || ci.c.cols() != spec.n_total
        || ci.c.rows() != cj.c.rows()
        || ci.c.cols() != cj.c.cols()
    {
        return Err(Error::DimensionMismatch(format!(
            "nand on {}x{} and {}x{}",
            ci.c.rows(),
            ci.c.cols(),
            cj.c.rows(),
            cj.c.cols()
        )));
    }
    let g = gadget_matrix(&spec, params.q);
    let prod = mul_by_gadget_inverse(&ci.c, &cj.c, &spec);
    let c = g.sub(&prod)?;
    Ok(ClassicalFheCiphertext {
        c,
        noise_bound: ci.noise_bound * spec.n_total as f64 + cj.noise_bound,
    })
}

/// Threshold decryption on the N-th column: `c = sk^T c_N`.
pub fn classical_fhe_decrypt(sk: &ZqVec, ct: &ClassicalFheCiphertext) -> Result<u8> {
    let last = ct.c.col(ct.c.cols() - 1);
    Ok(threshold_decision(last.dot(sk)?, sk.q()))
}

/// Role of a system inside a quantum FHE ciphertext.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Input,
    Aux,
    Output,
}

/// One logical ciphertext system: `N` registers of width `m+1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemInfo {
    pub name: String,
    pub kind: SystemKind,
}

/// Verification data for one encrypted input bit: the syndromes
/// `y_1..y_N` of its `N` Gaussian registers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemVk {
    pub system: String,
    pub ys: Vec<ZqVec>,
}

/// Public verification key of a quantum FHE ciphertext.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FheVerificationKey {
    pub a: ZqMat,
    pub per_system: Vec<SystemVk>,
}

/// Quantum FHE ciphertext: a joint sparse state over all systems,
/// bookkeeping for which registers belong to which system, and the
/// verification key for the input systems.
#[derive(Debug, Clone)]
pub struct QuantumFheCiphertext {
    pub state: SparseState,
    pub systems: Vec<SystemInfo>,
    pub vk: FheVerificationKey,
}

impl QuantumFheCiphertext {
    /// Indices (into the layout) of the `N` registers of a system.
    pub fn system_registers(&self, system: &str) -> Result<Vec<usize>> {
        if !self.systems.iter().any(|s| s.name == system) {
            return Err(Error::NoSuchRegister(system.to_string()));
        }
        let layout = self.state.layout();
        let prefix = format!("{system}.");
        let regs: Vec<usize> = layout
            .registers()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.name.starts_with(&prefix))
            .map(|(i, _)| i)
            .collect();
        if regs.is_empty() {
            return Err(Error::NoSuchRegister(system.to_string()));
        }
        Ok(regs)
    }

    pub fn input_systems(&self) -> Vec<String> {
        self.systems
            .iter()
            .filter(|s| s.kind == SystemKind::Input)
            .map(|s| s.name.clone())
            .collect()
    }
}

fn register_name(system: &str, col: usize) -> String {
    format!("{system}.{col}")
}

/// Encrypt bits as products of shifted primal Gaussian states: bit `x`
/// becomes `X^{x g_1}|psi_{y_1}> (x) ... (x) X^{x g_N}|psi_{y_N}>`,
/// with systems named `c1, c2, ...`.
///
/// Register states are assigned directly from the primal formula (see
/// `gen_primal_direct`), which keeps the joint support to the product of
/// the per-register Gaussian supports.
pub fn quantum_fhe_encrypt<R: Rng>(
    pk: &ZqMat,
    bits: &[u8],
    params: &FheParams,
    rng: &mut R,
) -> Result<(FheVerificationKey, QuantumFheCiphertext)> {
    let spec = params.gadget_spec();
    let big_n = spec.n_total;
    let g = gadget_matrix(&spec, params.q);
    let at = pk.transpose();
    let mut joint: Option<SparseState> = None;
    let mut systems = Vec::new();
    let mut per_system = Vec::new();
    for (idx, &x) in bits.iter().enumerate() {
        if x > 1 {
            return Err(Error::BadParams(format!("plaintext bit {x}")));
        }
        let sys = format!("c{}", idx + 1);
        let mut ys = Vec::with_capacity(big_n);
        for col in 0..big_n {
            let (primal, y) = gen_primal_direct(&at, params.sigma(), rng, params.budget)?;
            ys.push(y);
            let mut reg_state = primal.state;
            if x == 1 {
                reg_state = reg_state.pauli_x(0, &g.col(col))?;
            }
            // re-home the single register under the system's name
            let renamed = rename_single_register(&reg_state, &register_name(&sys, col))?
                .with_budget(params.budget);
            joint = Some(match joint {
                None => renamed,
                Some(j) => j.tensor(&renamed)?,
            });
        }
        systems.push(SystemInfo {
            name: sys.clone(),
            kind: SystemKind::Input,
        });
        per_system.push(SystemVk { system: sys, ys });
    }
    let state = joint.ok_or_else(|| Error::EmptySupport("no plaintext bits".into()))?;
    let vk = FheVerificationKey {
        a: pk.clone(),
        per_system,
    };
    Ok((vk.clone(), QuantumFheCiphertext { state, systems, vk }))
}

fn rename_single_register(state: &SparseState, new_name: &str) -> Result<SparseState> {
    let old = state.layout();
    if old.num_registers() != 1 {
        return Err(Error::LayoutMismatch("expected a single register".into()));
    }
    let layout = RegisterLayout::new(old.q(), &[(new_name, old.width(0))])?;
    SparseState::from_amplitudes(layout, state.amplitudes().map(|(l, a)| (l.clone(), *a)))
}

/// One NAND gate between named systems.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NandGate {
    pub i: String,
    pub j: String,
    pub out: String,
}

/// Ordered record of applied gates; replayable forwards and backwards.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitTranscript {
    pub gates: Vec<NandGate>,
}

fn label_to_matrix(label: &[u16], regs: &[usize], layout: &RegisterLayout, q: i64) -> ZqMat {
    let m_plus_1 = layout.width(regs[0]);
    let mut data = vec![0i64; m_plus_1 * regs.len()];
    for (col, &reg) in regs.iter().enumerate() {
        let range = layout.digit_range(reg);
        for (row, pos) in range.enumerate() {
            data[row * regs.len() + col] = label[pos] as i64;
        }
    }
    ZqMat::new(m_plus_1, regs.len(), data, q).expect("consistent dims")
}

fn write_matrix_into_label(
    label: &mut [u16],
    regs: &[usize],
    layout: &RegisterLayout,
    mat: &ZqMat,
) {
    for (col, &reg) in regs.iter().enumerate() {
        let range = layout.digit_range(reg);
        for (row, pos) in range.enumerate() {
            label[pos] = nonneg(mat.get(row, col), mat.q()) as u16;
        }
    }
}

/// The homomorphic NAND unitary on basis labels:
/// `|X>|Y>|Z> -> |X>|Y>|Z + G - X G^{-1}(Y)>` (sign +1) or its inverse
/// (sign -1).
fn apply_u_nand(
    ct: &QuantumFheCiphertext,
    gate: &NandGate,
    sign: i64,
    params: &FheParams,
) -> Result<QuantumFheCiphertext> {
    let spec = params.gadget_spec();
    let g = gadget_matrix(&spec, params.q);
    let regs_i = ct.system_registers(&gate.i)?;
    let regs_j = ct.system_registers(&gate.j)?;
    let regs_out = ct.system_registers(&gate.out)?;
    let layout = ct.state.layout().clone();
    let q = params.q;
    let state = ct.state.permute_labels(|label| {
        let x = label_to_matrix(label, &regs_i, &layout, q);
        let y = label_to_matrix(label, &regs_j, &layout, q);
        let z = label_to_matrix(label, &regs_out, &layout, q);
        let delta = g
            .sub(&mul_by_gadget_inverse(&x, &y, &spec))
            .expect("gadget shapes agree");
        let new_z = if sign >= 0 {
            z.add(&delta).expect("shapes agree")
        } else {
            z.sub(&delta).expect("shapes agree")
        };
        let mut out = label.to_vec();
        write_matrix_into_label(&mut out, &regs_out, &layout, &new_z);
        out
    })?;
    Ok(QuantumFheCiphertext {
        state,
        systems: ct.systems.clone(),
        vk: ct.vk.clone(),
    })
}

/// Apply one homomorphic NAND gate, appending the fresh output system
/// (N registers of width m+1, initialized to |0>).
pub fn u_nand(
    ct: &QuantumFheCiphertext,
    gate: &NandGate,
    params: &FheParams,
) -> Result<QuantumFheCiphertext> {
    if ct.systems.iter().any(|s| s.name == gate.out) {
        return Err(Error::MalformedCircuit(format!(
            "output system {} already exists",
            gate.out
        )));
    }
    ct.system_registers(&gate.i)?;
    ct.system_registers(&gate.j)?;
    // append ancilla registers |0>^{m+1} for each gadget column
    let mut state = ct.state.clone();
    let width = params.m + 1;
    for col in 0..params.big_n() {
        state = state.tensor_basis_register(&register_name(&gate.out, col), &vec![0u16; width])?;
    }
    let mut systems = ct.systems.clone();
    systems.push(SystemInfo {
        name: gate.out.clone(),
        kind: SystemKind::Aux,
    });
    let extended = QuantumFheCiphertext {
        state,
        systems,
        vk: ct.vk.clone(),
    };
    apply_u_nand(&extended, gate, 1, params)
}

/// Inverse of [`u_nand`] *without* removing the (now |0>) ancilla.
pub fn u_nand_inverse(
    ct: &QuantumFheCiphertext,
    gate: &NandGate,
    params: &FheParams,
) -> Result<QuantumFheCiphertext> {
    apply_u_nand(ct, gate, -1, params)
}

/// Drop a system whose registers are all back in definite basis states.
pub fn drop_system(ct: &QuantumFheCiphertext, system: &str) -> Result<QuantumFheCiphertext> {
    let mut regs = ct.system_registers(system)?;
    regs.sort_unstable_by(|a, b| b.cmp(a)); // drop from the back, indices stay valid
    let mut state = ct.state.clone();
    for reg in regs {
        state = state.drop_register(reg)?;
    }
    let systems = ct
        .systems
        .iter()
        .filter(|s| s.name != system)
        .cloned()
        .collect();
    Ok(QuantumFheCiphertext {
        state,
        systems,
        vk: ct.vk.clone(),
    })
}

/// Evaluate a NAND circuit. The final gate's output system is marked as
/// the designated circuit output.
pub fn eval(
    circuit: &[NandGate],
    ct: &QuantumFheCiphertext,
    params: &FheParams,
) -> Result<(QuantumFheCiphertext, CircuitTranscript)> {
    let mut current = ct.clone();
    let mut transcript = CircuitTranscript::default();
    for gate in circuit {
        current = u_nand(&current, gate, params)?;
        transcript.gates.push(gate.clone());
    }
    if let Some(last) = transcript.gates.last() {
        for sys in &mut current.systems {
            if sys.name == last.out {
                sys.kind = SystemKind::Output;
            }
        }
    }
    Ok((current, transcript))
}

/// Decrypt one system of a quantum ciphertext by measuring its registers
/// in the computational basis.
pub fn quantum_fhe_decrypt<R: Rng>(
    sk: &ZqVec,
    ct: &QuantumFheCiphertext,
    system: &str,
    params: &FheParams,
    rng: &mut R,
) -> Result<u8> {
    let regs = ct.system_registers(system)?;
    let mut state = ct.state.clone();
    let mut cols: Vec<ZqVec> = Vec::with_capacity(regs.len());
    for &reg in &regs {
        let (outcome, post) = state.measure_computational(reg, rng)?;
        cols.push(state.digits_to_zqvec(&outcome));
        state = post;
    }
    let mut data = vec![0i64; (params.m + 1) * cols.len()];
    for (c, col) in cols.iter().enumerate() {
        for r in 0..params.m + 1 {
            data[r * cols.len() + c] = col.get(r);
        }
    }
    let c = ZqMat::new(params.m + 1, cols.len(), data, params.q)?;
    // measured outcomes carry no tracked noise bound
    classical_fhe_decrypt(
        sk,
        &ClassicalFheCiphertext {
            c,
            noise_bound: 0.0,
        },
    )
}

/// Classical decryption decision lifted to a basis label of one system.
fn decrypt_label(label: &[u16], regs: &[usize], layout: &RegisterLayout, sk: &ZqVec, q: i64) -> u8 {
    // only the last gadget column enters the threshold decision
    let last_reg = regs[regs.len() - 1];
    let range = layout.digit_range(last_reg);
    let mut acc: i128 = 0;
    for (row, pos) in range.enumerate() {
        acc += (label[pos] as i128) * (sk.get(row) as i128);
    }
    threshold_decision(centered(acc, q), q)
}

/// Message flow of the extract/rewind protocol, recorded step by step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtocolPhase {
    /// Sender hands the output system to the receiver.
    SendOutput { system: String },
    /// Receiver coherently decrypted, measured the bit, uncomputed the
    /// decrypt unitary and returned the system.
    ReturnOutput { y: u8 },
    /// Sender undid the transcript gates and discarded the ancillas.
    Uncompute { gates: usize },
}

/// Result of running the extract protocol.
#[derive(Debug)]
pub struct ExtractOutcome {
    /// Sender's final state, reduced to the input systems.
    pub ciphertext: QuantumFheCiphertext,
    /// The receiver's measured circuit output.
    pub y: u8,
    pub log: Vec<ProtocolPhase>,
}

/// The interactive extract/rewind protocol.
///
/// Receiver phase: coherent-decrypt unitary on `C_out (x) M` (`M` a fresh
/// width-1 register holding the decision bit), computational measurement
/// of `M`, adjoint of the decrypt unitary, discard `M`. Sender phase:
/// undo every transcript gate in reverse order and discard the ancilla
/// systems, ending with the input systems only.
pub fn extract_protocol<R: Rng>(
    ct: &QuantumFheCiphertext,
    transcript: &CircuitTranscript,
    sk: &ZqVec,
    params: &FheParams,
    rng: &mut R,
) -> Result<ExtractOutcome> {
    let out_system = match transcript.gates.last() {
        Some(g) => g.out.clone(),
        None => ct
            .input_systems()
            .first()
            .cloned()
            .ok_or_else(|| Error::MalformedCircuit("no systems".into()))?,
    };
    let out_regs = ct.system_registers(&out_system)?;
    let q = params.q;
    let mut log = vec![ProtocolPhase::SendOutput {
        system: out_system.clone(),
    }];

    // receiver: |C>|v> -> |C>|v + Dec(C)>
    let with_m = ct.state.tensor_basis_register("M", &[0])?;
    let m_layout = with_m.layout().clone();
    let m_reg = m_layout.index_of("M")?;
    let m_pos = m_layout.digit_range(m_reg).start;
    let sk_c = sk.clone();
    let regs_c = out_regs.clone();
    let decrypted = with_m.permute_labels(|label| {
        let bit = decrypt_label(label, &regs_c, &m_layout, &sk_c, q);
        let mut out = label.to_vec();
        out[m_pos] = nonneg(label[m_pos] as i64 + bit as i64, q) as u16;
        out
    })?;
    let (m_outcome, post) = decrypted.measure_computational(m_reg, rng)?;
    let y = m_outcome[0] as u8;
    // adjoint of the decrypt unitary, then discard M (back to |0>)
    let sk_c = sk.clone();
    let regs_c = out_regs.clone();
    let undone = post.permute_labels(|label| {
        let bit = decrypt_label(label, &regs_c, &m_layout, &sk_c, q);
        let mut out = label.to_vec();
        out[m_pos] = nonneg(label[m_pos] as i64 - bit as i64, q) as u16;
        out
    })?;
    let state = undone.drop_register(m_reg)?;
    log.push(ProtocolPhase::ReturnOutput { y });

    // sender: uncompute the transcript in reverse, dropping ancillas
    let mut current = QuantumFheCiphertext {
        state,
        systems: ct.systems.clone(),
        vk: ct.vk.clone(),
    };
    for gate in transcript.gates.iter().rev() {
        current = u_nand_inverse(&current, gate, params)?;
        current = drop_system(&current, &gate.out)?;
    }
    log.push(ProtocolPhase::Uncompute {
        gates: transcript.gates.len(),
    });
    Ok(ExtractOutcome {
        ciphertext: current,
        y,
        log,
    })
}

/// Deletion certificate: one `(m+1) x N` outcome matrix per input system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FheDeletionCertificate {
    pub per_system: Vec<(String, ZqMat)>,
}

/// Measure all registers of every input system in the Fourier basis.
pub fn fhe_delete<R: Rng>(
    ct: &QuantumFheCiphertext,
    params: &FheParams,
    rng: &mut R,
) -> Result<FheDeletionCertificate> {
    let mut state = ct.state.clone();
    let mut per_system = Vec::new();
    for sys in ct.input_systems() {
        let regs = ct.system_registers(&sys)?;
        let mut data = vec![0i64; (params.m + 1) * regs.len()];
        for (c, &reg) in regs.iter().enumerate() {
            let (outcome, post) = state.measure_fourier(reg, rng)?;
            for (r, &digit) in outcome.iter().enumerate() {
                data[r * regs.len() + c] = centered(digit as i128, params.q);
            }
            state = post;
        }
        per_system.push((sys, ZqMat::new(params.m + 1, regs.len(), data, params.q)?));
    }
    Ok(FheDeletionCertificate { per_system })
}

/// Verify `A^T pi_i = y_i` and `||pi_i|| <= sqrt(m+1)/(sqrt(2) alpha)`
/// for every gadget column of every input system.
pub fn fhe_verify(
    vk: &FheVerificationKey,
    cert: &FheDeletionCertificate,
    params: &FheParams,
) -> bool {
    let at = vk.a.transpose();
    let bound = params.verify_norm_bound() + 1e-9;
    for (sys, pi) in &cert.per_system {
        let Some(sys_vk) = vk.per_system.iter().find(|v| &v.system == sys) else {
            return false;
        };
        if pi.cols() != sys_vk.ys.len() {
            return false;
        }
        for (col, y) in sys_vk.ys.iter().enumerate() {
            let pi_col = pi.col(col);
            match mat_vec(&at, &pi_col) {
                Ok(image) if &image == y && pi_col.norm() <= bound => {}
                _ => return false,
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Tiny quantum regime: q=3, m+1=2, N=4, noise effectively zero.
    fn tiny_params() -> FheParams {
        FheParams::new(4, 1, 3, 1, 1, 1.0 / 12.0, ParamMode::Sandbox).unwrap()
    }

    /// Strict classical regime for depth 1: prime just below 2^43.
    fn strict_params_l1() -> FheParams {
        FheParams::new(
            32,
            1,
            8796093022151,
            86,
            1,
            2048.0 / 8796093022151.0,
            ParamMode::Strict,
        )
        .unwrap()
    }

    #[test]
    fn strict_window_validation() {
        assert!(strict_params_l1().check_strict().is_ok());
        // q = 521 cannot satisfy the two-sided window at any depth >= 1
        assert!(FheParams::new(16, 2, 521, 40, 1, 0.04, ParamMode::Strict).is_err());
    }

    #[test]
    fn keygen_row_trapdoor() {
        let params = tiny_params();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..10 {
            let kp = fhe_keygen(&params, &mut rng).unwrap();
            assert_eq!(kp.pk.rows(), params.m + 1);
            assert_eq!(kp.pk.cols(), params.n);
            assert_eq!(
                mat_vec(&kp.pk.transpose(), &kp.sk).unwrap(),
                ZqVec::zero(params.n, params.q)
            );
        }
    }

    #[test]
    fn classical_zero_noise_algebra() {
        // x=0, E=0: C = A S and sk^T C = 0. x=1, E=0, S=0: C = G.
        let params = tiny_params();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let kp = fhe_keygen(&params, &mut rng).unwrap();
        let spec = params.gadget_spec();
        let s = sample_uniform_mat(params.n, spec.n_total, params.q, &mut rng);
        let c0 = kp.pk.mat_mul(&s).unwrap();
        let skt = ZqMat::new(1, params.m + 1, kp.sk.entries().to_vec(), params.q).unwrap();
        let prod = skt.mat_mul(&c0).unwrap();
        assert_eq!(prod, ZqMat::zero(1, spec.n_total, params.q));
        let g = gadget_matrix(&spec, params.q);
        let skt_g = skt.mat_mul(&g).unwrap();
        let prod1 = skt.mat_mul(&c0.add(&g).unwrap()).unwrap();
        assert_eq!(prod1, skt_g);
    }

    #[test]
    fn classical_nand_symbolic_expansion() {
        // at E=0: sk^T C_ij = (1 - x_i x_j) sk^T G
        let params = tiny_params();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let kp = fhe_keygen(&params, &mut rng).unwrap();
        let spec = params.gadget_spec();
        let g = gadget_matrix(&spec, params.q);
        let skt = ZqMat::new(1, params.m + 1, kp.sk.entries().to_vec(), params.q).unwrap();
        for (xi, xj) in [(0i64, 0i64), (0, 1), (1, 0), (1, 1)] {
            let make = |x: i64, rng: &mut ChaCha20Rng| {
                let s = sample_uniform_mat(params.n, spec.n_total, params.q, rng);
                let mut c = kp.pk.mat_mul(&s).unwrap();
                if x == 1 {
                    c = c.add(&g).unwrap();
                }
                ClassicalFheCiphertext {
                    c,
                    noise_bound: 0.0,
                }
            };
            let ci = make(xi, &mut rng);
            let cj = make(xj, &mut rng);
            let cij = classical_nand(&ci, &cj, &params).unwrap();
            let lhs = skt.mat_mul(&cij.c).unwrap();
            let rhs = skt.mat_mul(&g).unwrap().scale(1 - xi * xj);
            assert_eq!(lhs, rhs, "xi={xi} xj={xj}");
        }
    }

    #[test]
    fn classical_roundtrip_and_truth_table_strict() {
        let params = strict_params_l1();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let kp = fhe_keygen(&params, &mut rng).unwrap();
        let ct0 = classical_fhe_encrypt(&kp.pk, 0, &params, &mut rng).unwrap();
        let ct1 = classical_fhe_encrypt(&kp.pk, 1, &params, &mut rng).unwrap();
        assert_eq!(classical_fhe_decrypt(&kp.sk, &ct0).unwrap(), 0);
        assert_eq!(classical_fhe_decrypt(&kp.sk, &ct1).unwrap(), 1);
        let cts = [&ct0, &ct1];
        for a in 0..2usize {
            for b in 0..2usize {
                let out = classical_nand(cts[a], cts[b], &params).unwrap();
                assert_eq!(
                    classical_fhe_decrypt(&kp.sk, &out).unwrap(),
                    1 - (a as u8) * (b as u8),
                    "NAND({a},{b})"
                );
                // tracker soundness under honest evolution
                assert!(out.noise_bound >= cts[a].noise_bound);
            }
        }
    }

    #[test]
    fn quantum_encrypt_product_structure() {
        let params = tiny_params();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let kp = fhe_keygen(&params, &mut rng).unwrap();
        let (vk, ct) = quantum_fhe_encrypt(&kp.pk, &[1], &params, &mut rng).unwrap();
        assert_eq!(vk.per_system.len(), 1);
        assert_eq!(vk.per_system[0].ys.len(), params.big_n());
        // joint amplitude factorizes over registers: check on a few labels
        let regs = ct.system_registers("c1").unwrap();
        assert_eq!(regs.len(), params.big_n());
        let marginals: Vec<Vec<(Vec<u16>, f64)>> = regs
            .iter()
            .map(|&r| ct.state.register_distribution(r))
            .collect();
        for (label, amp) in ct.state.amplitudes().take(10) {
            let mut prod = 1.0;
            for (k, &reg) in regs.iter().enumerate() {
                let range = ct.state.layout().digit_range(reg);
                let digits = label[range].to_vec();
                let p = marginals[k]
                    .iter()
                    .find(|(d, _)| d == &digits)
                    .map(|(_, p)| *p)
                    .unwrap_or(0.0);
                prod *= p;
            }
            assert!(
                (amp.norm_sqr() - prod).abs() < 1e-10,
                "joint probability does not factorize"
            );
        }
    }

    #[test]
    fn quantum_encrypt_decodes() {
        let params = tiny_params();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let kp = fhe_keygen(&params, &mut rng).unwrap();
        for x in [0u8, 1] {
            let mut correct = 0;
            let trials = 30;
            for _ in 0..trials {
                let (_, ct) = quantum_fhe_encrypt(&kp.pk, &[x], &params, &mut rng).unwrap();
                if quantum_fhe_decrypt(&kp.sk, &ct, "c1", &params, &mut rng).unwrap() == x {
                    correct += 1;
                }
            }
            assert!(correct >= trials - 1, "decode {correct}/{trials} for x={x}");
        }
    }

    #[test]
    fn u_nand_zero_inputs_writes_gadget() {
        // X=0, Y=0, Z=0 -> Z' = G as a basis label
        let params = tiny_params();
        let spec = params.gadget_spec();
        let q = params.q;
        let width = params.m + 1;
        let mut regs: Vec<(String, usize)> = Vec::new();
        for sys in ["c1", "c2"] {
            for col in 0..spec.n_total {
                regs.push((register_name(sys, col), width));
            }
        }
        let reg_refs: Vec<(&str, usize)> = regs.iter().map(|(n, w)| (n.as_str(), *w)).collect();
        let layout = RegisterLayout::new(q, &reg_refs).unwrap();
        let zeros = vec![0u16; layout.total_digits()];
        let state = SparseState::basis_state(layout, &zeros).unwrap();
        let ct = QuantumFheCiphertext {
            state,
            systems: vec![
                SystemInfo {
                    name: "c1".into(),
                    kind: SystemKind::Input,
                },
                SystemInfo {
                    name: "c2".into(),
                    kind: SystemKind::Input,
                },
            ],
            vk: FheVerificationKey {
                a: ZqMat::zero(width, 1, q),
                per_system: vec![],
            },
        };
        let gate = NandGate {
            i: "c1".into(),
            j: "c2".into(),
            out: "c12".into(),
        };
        let out = u_nand(&ct, &gate, &params).unwrap();
        let g = gadget_matrix(&spec, q);
        let (label, _) = out
            .state
            .amplitudes()
            .next()
            .map(|(l, a)| (l.clone(), *a))
            .unwrap();
        let out_regs = out.system_registers("c12").unwrap();
        let z = label_to_matrix(&label, &out_regs, out.state.layout(), q);
        assert_eq!(z, g);
        // inverse restores the ancilla to zero
        let undone = u_nand_inverse(&out, &gate, &params).unwrap();
        let (label2, _) = undone
            .state
            .amplitudes()
            .next()
            .map(|(l, a)| (l.clone(), *a))
            .unwrap();
        let z2 = label_to_matrix(&label2, &out_regs, undone.state.layout(), q);
        assert_eq!(z2, ZqMat::zero(width, spec.n_total, q));
    }

    #[test]
    fn u_nand_matches_classical_on_basis_labels() {
        let params = tiny_params();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let kp = fhe_keygen(&params, &mut rng).unwrap();
        let (_, ct) = quantum_fhe_encrypt(&kp.pk, &[1, 0], &params, &mut rng).unwrap();
        let gate = NandGate {
            i: "c1".into(),
            j: "c2".into(),
            out: "c12".into(),
        };
        let out = u_nand(&ct, &gate, &params).unwrap();
        let layout = out.state.layout().clone();
        let regs_i = out.system_registers("c1").unwrap();
        let regs_j = out.system_registers("c2").unwrap();
        let regs_o = out.system_registers("c12").unwrap();
        for (label, _) in out.state.amplitudes().take(20) {
            let x = label_to_matrix(label, &regs_i, &layout, params.q);
            let y = label_to_matrix(label, &regs_j, &layout, params.q);
            let z = label_to_matrix(label, &regs_o, &layout, params.q);
            let expect = classical_nand(
                &ClassicalFheCiphertext {
                    c: x,
                    noise_bound: 0.0,
                },
                &ClassicalFheCiphertext {
                    c: y,
                    noise_bound: 0.0,
                },
                &params,
            )
            .unwrap();
            assert_eq!(z, expect.c);
        }
        // norm preserved exactly, support size = product of input supports
        assert!((out.state.norm_sq() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn eval_empty_circuit_is_identity() {
        let params = tiny_params();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let kp = fhe_keygen(&params, &mut rng).unwrap();
        let (_, ct) = quantum_fhe_encrypt(&kp.pk, &[1], &params, &mut rng).unwrap();
        let (out, transcript) = eval(&[], &ct, &params).unwrap();
        assert!(transcript.gates.is_empty());
        assert!(out.state.trace_distance_pure(&ct.state).unwrap() <= 1e-12);
    }

    #[test]
    fn eval_single_nand_decodes_truth_table() {
        let params = tiny_params();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let kp = fhe_keygen(&params, &mut rng).unwrap();
        let gate = NandGate {
            i: "c1".into(),
            j: "c2".into(),
            out: "c12".into(),
        };
        for (xi, xj) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
            let (_, ct) = quantum_fhe_encrypt(&kp.pk, &[xi, xj], &params, &mut rng).unwrap();
            let (out, transcript) = eval(std::slice::from_ref(&gate), &ct, &params).unwrap();
            assert_eq!(transcript.gates.len(), 1);
            let y = quantum_fhe_decrypt(&kp.sk, &out, "c12", &params, &mut rng).unwrap();
            assert_eq!(y, 1 - xi * xj, "NAND({xi},{xj})");
        }
    }

    #[test]
    fn rewinding_replay_restores_ciphertext_exactly() {
        // undoing the gates on the untouched post-eval state reproduces
        // the original ciphertext exactly
        let params = tiny_params();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let kp = fhe_keygen(&params, &mut rng).unwrap();
        let (_, ct) = quantum_fhe_encrypt(&kp.pk, &[1, 1], &params, &mut rng).unwrap();
        let gate = NandGate {
            i: "c1".into(),
            j: "c2".into(),
            out: "c12".into(),
        };
        let (evaluated, transcript) = eval(std::slice::from_ref(&gate), &ct, &params).unwrap();
        let mut current = evaluated;
        for g in transcript.gates.iter().rev() {
            current = u_nand_inverse(&current, g, &params).unwrap();
            current = drop_system(&current, &g.out).unwrap();
        }
        let td = current.state.trace_distance_pure(&ct.state).unwrap();
        assert!(td <= 1e-10, "replay distance {td}");
    }

    #[test]
    fn extract_protocol_depth0_and_depth1() {
        let params = tiny_params();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let kp = fhe_keygen(&params, &mut rng).unwrap();

        // depth 0: protocol reduces to coherent-decrypt/undo on C_in
        let (_, ct) = quantum_fhe_encrypt(&kp.pk, &[1], &params, &mut rng).unwrap();
        let original = ct.state.clone();
        let outcome = extract_protocol(
            &ct,
            &CircuitTranscript::default(),
            &kp.sk,
            &params,
            &mut rng,
        )
        .unwrap();
        assert_eq!(outcome.y, 1);
        let td = outcome
            .ciphertext
            .state
            .trace_distance_pure(&original)
            .unwrap();
        assert!(td <= 0.05, "depth-0 disturbance {td}");
        assert_eq!(outcome.log.len(), 3);

        // depth 1: y = NAND(x_i, x_j), final state close to the original
        for (xi, xj) in [(0u8, 0u8), (1, 1)] {
            let (_, ct) = quantum_fhe_encrypt(&kp.pk, &[xi, xj], &params, &mut rng).unwrap();
            let original = ct.state.clone();
            let gate = NandGate {
                i: "c1".into(),
                j: "c2".into(),
                out: "c12".into(),
            };
            let (evaluated, transcript) = eval(std::slice::from_ref(&gate), &ct, &params).unwrap();
            let outcome =
                extract_protocol(&evaluated, &transcript, &kp.sk, &params, &mut rng).unwrap();
            assert_eq!(outcome.y, 1 - xi * xj, "extract NAND({xi},{xj})");
            let td = outcome
                .ciphertext
                .state
                .trace_distance_pure(&original)
                .unwrap();
            assert!(td <= 0.05, "depth-1 disturbance {td}");
        }
    }

    #[test]
    fn delete_and_verify_accept_honest_pipeline() {
        let params = tiny_params();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let kp = fhe_keygen(&params, &mut rng).unwrap();
        let mut accepted = 0;
        let trials = 20;
        for t in 0..trials {
            let bits = [(t % 2) as u8, ((t / 2) % 2) as u8];
            let (vk, ct) = quantum_fhe_encrypt(&kp.pk, &bits, &params, &mut rng).unwrap();
            let gate = NandGate {
                i: "c1".into(),
                j: "c2".into(),
                out: "c12".into(),
            };
            let (evaluated, transcript) = eval(std::slice::from_ref(&gate), &ct, &params).unwrap();
            let outcome =
                extract_protocol(&evaluated, &transcript, &kp.sk, &params, &mut rng).unwrap();
            let cert = fhe_delete(&outcome.ciphertext, &params, &mut rng).unwrap();
            if fhe_verify(&vk, &cert, &params) {
                accepted += 1;
            }
        }
        assert!(
            accepted >= trials - 1,
            "verify accepted {accepted}/{trials}"
        );
    }

    #[test]
    fn verify_rejects_single_bad_column() {
        let params = tiny_params();
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let kp = fhe_keygen(&params, &mut rng).unwrap();
        let (vk, ct) = quantum_fhe_encrypt(&kp.pk, &[0], &params, &mut rng).unwrap();
        let mut cert = fhe_delete(&ct, &params, &mut rng).unwrap();
        assert!(fhe_verify(&vk, &cert, &params));
        // corrupt one column image
        let (_, pi) = &mut cert.per_system[0];
        pi.set(0, 0, pi.get(0, 0) + 1);
        let at = vk.a.transpose();
        let still_ok = mat_vec(&at, &pi.col(0)).unwrap() == vk.per_system[0].ys[0];
        if !still_ok {
            assert!(!fhe_verify(&vk, &cert, &params));
        }
        // all-zero certificate against nonzero syndromes
        let zero_cert = FheDeletionCertificate {
            per_system: vec![(
                "c1".into(),
                ZqMat::zero(params.m + 1, params.big_n(), params.q),
            )],
        };
        if vk.per_system[0]
            .ys
            .iter()
            .any(|y| y != &ZqVec::zero(params.n, params.q))
        {
            assert!(!fhe_verify(&vk, &zero_cert, &params));
        }
    }

    #[test]
    fn certificates_blind_to_plaintext() {
        // exact per-register Fourier distributions agree across x=0/x=1
        let params = tiny_params();
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let kp = fhe_keygen(&params, &mut rng).unwrap();
        let mut rng_a = ChaCha20Rng::seed_from_u64(50);
        let mut rng_b = ChaCha20Rng::seed_from_u64(50);
        let (_, ct0) = quantum_fhe_encrypt(&kp.pk, &[0], &params, &mut rng_a).unwrap();
        let (_, ct1) = quantum_fhe_encrypt(&kp.pk, &[1], &params, &mut rng_b).unwrap();
        for reg in ct0.system_registers("c1").unwrap() {
            let d0 = ct0.state.fourier_distribution(reg).unwrap();
            let d1: std::collections::BTreeMap<Vec<u16>, f64> = ct1
                .state
                .fourier_distribution(reg)
                .unwrap()
                .into_iter()
                .collect();
            let mut tv = 0.0;
            for (k, p) in &d0 {
                tv += (p - d1.get(k).unwrap_or(&0.0)).abs();
            }
            assert!(0.5 * tv <= 1e-9, "register {reg} certificate TV {tv}");
        }
    }

    #[test]
    fn transcript_serialization_matches_interface() {
        let gate = NandGate {
            i: "c1".into(),
            j: "c2".into(),
            out: "c12".into(),
        };
        let json = serde_json::to_string(&vec![gate.clone()]).unwrap();
        assert_eq!(json, r#"[{"i":"c1","j":"c2","out":"c12"}]"#);
        let back: Vec<NandGate> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![gate]);
    }
}
