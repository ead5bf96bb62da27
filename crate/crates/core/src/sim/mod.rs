//! Exact simulation of multi-register qudit systems over `Z_q`.
//!
//! States are sparse amplitude maps keyed by basis labels (digit strings
//! over `Z_q`); density operators are dense Hermitian blocks over an
//! explicit support. Both are immutable values: operations return new
//! objects, and the only mutable input anywhere is the caller's RNG.

mod density;
mod layout;
mod snapshot;
mod state;

pub use density::{hermitian_eig, hermitian_eigenvalues, DensityOp};
pub use layout::{Register, RegisterLayout};
pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_HEADER};
pub use state::{zqvec_to_digits, SparseState, NORM_TOL, PRUNE_THRESHOLD};

use num_complex::Complex64;
use std::collections::BTreeMap;

/// Reduced density operator of a single register of a (possibly
/// entangled) state: trace out everything else.
pub fn reduced_density_register(
    state: &SparseState,
    reg: usize,
) -> crate::error::Result<DensityOp> {
    let range = state.layout().digit_range(reg);
    let q = state.layout().q();
    // group amplitudes by environment label; each group contributes a
    // (subnormalized) pure conditional state
    let mut groups: BTreeMap<Vec<u16>, Vec<(Vec<u16>, Complex64)>> = BTreeMap::new();
    for (label, amp) in state.amplitudes() {
        let mut env = Vec::with_capacity(label.len() - range.len());
        env.extend_from_slice(&label[..range.start]);
        env.extend_from_slice(&label[range.end..]);
        groups
            .entry(env)
            .or_default()
            .push((label[range.clone()].to_vec(), *amp));
    }
    let sub_layout = RegisterLayout::new(q, &[(state.layout().name(reg), range.len())])?;
    let parts: Vec<(f64, SparseState)> = groups
        .into_values()
        .map(|entries| {
            let w: f64 = entries.iter().map(|(_, a)| a.norm_sqr()).sum();
            let mut s = SparseState::from_amplitudes(sub_layout.clone(), entries)
                .expect("group entries share the register layout");
            s.normalize();
            (w, s)
        })
        .collect();
    DensityOp::from_mixture(&parts)
}
