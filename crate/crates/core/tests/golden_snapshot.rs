//! Golden-file pin of the state snapshot format: the serialized dual
//! Gaussian state for a fixed instance must reproduce byte for byte.

use qdel::modq::{ZqMat, ZqVec};
use qdel::sim::{read_snapshot, write_snapshot};
use qdel::states::make_dual_state;

#[test]
fn dual_state_snapshot_matches_golden_file() {
    let a = ZqMat::from_rows(&[vec![1, 5]], 13).unwrap();
    let y = ZqVec::new(vec![3], 13);
    let dual = make_dual_state(&a, &y, 3.0, 1 << 20).unwrap();
    let text = write_snapshot(&dual.state);
    let golden = include_str!("golden/dual_state_q13.qst");
    assert_eq!(text, golden, "snapshot format drifted from the golden file");
    // and the golden text parses back to the same state
    let parsed = read_snapshot(golden).unwrap();
    assert!(parsed.trace_distance_pure(&dual.state).unwrap() <= 1e-12);
}
