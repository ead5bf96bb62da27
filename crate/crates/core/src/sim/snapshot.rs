//! Text snapshots of sparse states.
//!
//! Format (one amplitude per line, basis tuples lexicographically sorted
//! by construction):
//!
//! ```text
//! qdel-state v1
//! q 29
//! registers x:3 y:1
//! 0 0 0 4 1.00000000000000000e0 0.00000000000000000e0
//! ```

use super::layout::RegisterLayout;
use super::state::SparseState;
use crate::error::{Error, Result};
use num_complex::Complex64;

pub const SNAPSHOT_HEADER: &str = "qdel-state v1";

/// Serialize a state to the snapshot text format.
pub fn write_snapshot(state: &SparseState) -> String {
    let layout = state.layout();
    let mut out = String::new();
    out.push_str(SNAPSHOT_HEADER);
    out.push('\n');
    out.push_str(&format!("q {}\n", layout.q()));
    let regs: Vec<String> = layout
        .registers()
        .iter()
        .map(|r| format!("{}:{}", r.name, r.width))
        .collect();
    out.push_str(&format!("registers {}\n", regs.join(" ")));
    for (label, amp) in state.amplitudes() {
        let digits: Vec<String> = label.iter().map(|d| d.to_string()).collect();
        out.push_str(&format!(
            "{} {:.17e} {:.17e}\n",
            digits.join(" "),
            amp.re,
            amp.im
        ));
    }
    out
}

/// Parse a snapshot back into a state.
pub fn read_snapshot(text: &str) -> Result<SparseState> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header.trim() != SNAPSHOT_HEADER {
        return Err(Error::Serialization(format!(
            "bad snapshot header: {header:?}"
        )));
    }
    let q_line = lines
        .next()
        .ok_or_else(|| Error::Serialization("missing q line".into()))?;
    let q: i64 = q_line
        .strip_prefix("q ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Serialization(format!("bad q line: {q_line:?}")))?;
    let reg_line = lines
        .next()
        .ok_or_else(|| Error::Serialization("missing registers line".into()))?;
    let reg_spec = reg_line
        .strip_prefix("registers ")
        .ok_or_else(|| Error::Serialization(format!("bad registers line: {reg_line:?}")))?;
    let mut regs = Vec::new();
    for part in reg_spec.split_whitespace() {
        let (name, width) = part
            .split_once(':')
            .ok_or_else(|| Error::Serialization(format!("bad register spec {part:?}")))?;
        let width: usize = width
            .parse()
            .map_err(|_| Error::Serialization(format!("bad register width in {part:?}")))?;
        regs.push((name.to_string(), width));
    }
    let reg_refs: Vec<(&str, usize)> = regs.iter().map(|(n, w)| (n.as_str(), *w)).collect();
    let layout = RegisterLayout::new(q, &reg_refs)?;
    let digits = layout.total_digits();
    let mut amps = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != digits + 2 {
            return Err(Error::Serialization(format!(
                "amplitude line has {} fields, expected {}",
                fields.len(),
                digits + 2
            )));
        }
        let mut label = Vec::with_capacity(digits);
        for f in &fields[..digits] {
            label.push(
                f.parse::<u16>()
                    .map_err(|_| Error::Serialization(format!("bad digit {f:?}")))?,
            );
        }
        let re: f64 = fields[digits]
            .parse()
            .map_err(|_| Error::Serialization(format!("bad re {:?}", fields[digits])))?;
        let im: f64 = fields[digits + 1]
            .parse()
            .map_err(|_| Error::Serialization(format!("bad im {:?}", fields[digits + 1])))?;
        amps.push((label, Complex64::new(re, im)));
    }
    SparseState::from_amplitudes(layout, amps)
}
