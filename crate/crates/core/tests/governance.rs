mod support;

use support::sequences::{check_sequence, Tally};

#[test]
fn randomized_sequences_respect_governance() {
    let mut total = Tally::default();
    for seed in 0..300u64 {
        let t = check_sequence(0x5EED_0000 + seed).unwrap_or_else(|e| panic!("{e}"));
        total.ops += t.ops;
        total.errors += t.errors;
        total.dry_runs += t.dry_runs;
        total.hard_deletes += t.hard_deletes;
        total.updates += t.updates;
    }
    // the generator must actually exercise the guarded paths
    assert!(total.errors > 0 && total.dry_runs > 0);
    assert!(total.hard_deletes > 0 && total.updates > 0, "{total:?}");
}
