use super::*;
use crate::encoders::CategoryEncoder;
use crate::rng;
use crate::symbol::Symbol;
use proptest::prelude::*;

fn small_params() -> TmParams {
    TmParams {
        num_columns: 16,
        cells_per_column: 4,
        activation_threshold: 2,
        matching_threshold: 1,
        max_new_synapses_per_step: 4,
        ..Default::default()
    }
}

fn cols(n: usize, bits: &[u32]) -> Sdr {
    Sdr::from_unsorted(n, bits.iter().copied()).unwrap()
}

/// Brute-force segment evaluation straight from the segment list.
fn oracle_predictive(tm: &TemporalMemory, active: &[CellIdx]) -> (Vec<CellIdx>, usize, usize) {
    let p = tm.params();
    let connected = to_fixed(p.connected_threshold);
    let mut predictive = Vec::new();
    let (mut n_active, mut n_matching) = (0, 0);
    for seg in tm.segments() {
        let conn = seg
            .synapses
            .iter()
            .filter(|(pre, perm)| *perm >= connected && active.contains(pre))
            .count();
        let pot = seg.synapses.iter().filter(|(pre, perm)| *perm > 0 && active.contains(pre)).count();
        if conn >= p.activation_threshold {
            predictive.push(seg.owner);
            n_active += 1;
        }
        if pot >= p.matching_threshold {
            n_matching += 1;
        }
    }
    predictive.sort_unstable();
    predictive.dedup();
    (predictive, n_active, n_matching)
}

/// Brute-force cell activation from the previous predictive cells.
fn oracle_activation(tm: &TemporalMemory, columns: &[u32], prev_predictive: &[CellIdx]) -> Vec<CellIdx> {
    let m = tm.params().cells_per_column as u32;
    let mut out = Vec::new();
    for &col in columns {
        let cells: Vec<CellIdx> = (col * m..(col + 1) * m).collect();
        let predicted: Vec<CellIdx> = cells.iter().copied().filter(|c| prev_predictive.contains(c)).collect();
        if predicted.is_empty() {
            out.extend(cells.into_iter().filter(|&c| !tm.is_dead(c)));
        } else {
            out.extend(predicted);
        }
    }
    out
}

fn random_network(seed: u64) -> (TemporalMemory, Vec<CellIdx>) {
    let mut r = rng::seeded(seed);
    let params = TmParams {
        num_columns: r.gen_range(2..=32),
        cells_per_column: r.gen_range(1..=4),
        activation_threshold: r.gen_range(1..=4),
        matching_threshold: 1,
        max_new_synapses_per_step: 4,
        ..Default::default()
    };
    let mut tm = TemporalMemory::new(params).unwrap();
    let n = tm.num_cells() as u32;
    for _ in 0..r.gen_range(0..=8) {
        let owner = r.gen_range(0..n);
        let k = r.gen_range(1..=n.min(8)) as usize;
        let mut syns: Vec<(CellIdx, Permanence)> = Vec::new();
        for _ in 0..k {
            let pre = r.gen_range(0..n);
            if pre != owner && !syns.iter().any(|s| s.0 == pre) {
                // Bias toward the threshold so both sides get exercised.
                let perm = if r.gen_bool(0.3) { 5000 } else { r.gen_range(1..=PERMANENCE_MAX) };
                syns.push((pre, perm));
            }
        }
        if !syns.is_empty() {
            tm.add_segment(owner, &syns).unwrap();
        }
    }
    let active: Vec<CellIdx> = (0..n).filter(|_| r.gen_bool(0.4)).collect();
    (tm, active)
}

#[test]
fn compute_predictive_matches_brute_force() {
    for seed in 0..1000 {
        let (mut tm, active) = random_network(seed);
        let pred = tm.compute_predictive(&active);
        let (cells, n_active, n_matching) = oracle_predictive(&tm, &active);
        assert_eq!(pred.predictive_cells, cells, "seed {seed}");
        assert_eq!(pred.active_segments.len(), n_active, "seed {seed}");
        assert_eq!(pred.matching_segments.len(), n_matching, "seed {seed}");
    }
}

#[test]
fn activate_cells_matches_brute_force() {
    for seed in 0..1000 {
        let (mut tm, active) = random_network(seed);
        tm.set_active_cells(&active, &[]).unwrap();
        let prev_predictive = tm.predictive_cells().to_vec();
        let mut r = rng::seeded(seed ^ 0xABCD);
        let ncol = tm.params().num_columns as u32;
        let w: Vec<u32> = (0..ncol).filter(|_| r.gen_bool(0.3)).collect();
        let act = tm.activate_cells(&cols(ncol as usize, &w)).unwrap();
        assert_eq!(act.active_cells, oracle_activation(&tm, &w, &prev_predictive), "seed {seed}");
        for c in &act.winner_cells {
            assert!(act.active_cells.binary_search(c).is_ok());
        }
    }
}

#[test]
fn no_segments_means_no_predictions() {
    let mut tm = TemporalMemory::new(small_params()).unwrap();
    assert!(tm.compute_predictive(&[0, 1, 2, 3]).predictive_cells.is_empty());
}

#[test]
fn segment_reaching_threshold_predicts() {
    let mut tm = TemporalMemory::new(small_params()).unwrap();
    tm.add_segment(20, &[(0, 5000), (4, 5000), (8, 6000)]).unwrap();
    assert_eq!(tm.compute_predictive(&[0, 4, 8]).predictive_cells, vec![20]);
    // One connected-active synapse is below threshold 2.
    assert!(tm.compute_predictive(&[0]).predictive_cells.is_empty());
}

#[test]
fn default_threshold_fourteen_is_not_enough() {
    let mut tm = TemporalMemory::new(TmParams::default()).unwrap();
    let pres: Vec<(CellIdx, Permanence)> = (0..14).map(|i| (i * 32, 6000)).collect();
    tm.add_segment(5000, &pres).unwrap();
    let active: Vec<CellIdx> = pres.iter().map(|p| p.0).collect();
    assert!(tm.compute_predictive(&active).predictive_cells.is_empty());
    let mut fifteen = pres.clone();
    fifteen.push((14 * 32, 6000));
    tm.add_segment(6000, &fifteen).unwrap();
    let active: Vec<CellIdx> = fifteen.iter().map(|p| p.0).collect();
    assert_eq!(tm.compute_predictive(&active).predictive_cells, vec![6000]);
}

#[test]
fn fresh_network_bursts_with_one_winner() {
    let mut tm = TemporalMemory::new(TmParams::default()).unwrap();
    let st = tm.step(&cols(2048, &[7]), true).unwrap();
    assert_eq!(st.active_cells, (7 * 32..8 * 32).collect::<Vec<_>>());
    assert_eq!(st.winner_cells.len(), 1);
    assert_eq!(st.bursting_columns, vec![7]);
    assert!(st.predictive_cells.is_empty());
}

#[test]
fn predicted_cells_inhibit_their_column() {
    let mut tm = TemporalMemory::new(small_params()).unwrap();
    // Cells 4 (column 1) and 9, 10 (column 2) predicted by cells 0 and 1.
    tm.add_segment(4, &[(0, 6000), (1, 6000)]).unwrap();
    tm.add_segment(9, &[(0, 6000), (1, 6000)]).unwrap();
    tm.add_segment(10, &[(0, 6000), (1, 6000)]).unwrap();
    tm.set_active_cells(&[0, 1], &[0]).unwrap();
    let st = tm.step(&cols(16, &[1, 2]), false).unwrap();
    assert_eq!(st.active_cells, vec![4, 9, 10]);
    assert_eq!(st.winner_cells, vec![4, 9, 10]);
    assert!(st.bursting_columns.is_empty());
}

#[test]
fn correct_prediction_crosses_connection_threshold() {
    let mut tm = TemporalMemory::new(small_params()).unwrap();
    let seg = tm.add_segment(20, &[(0, 5000), (4, 5000), (8, 4500), (12, 3000)]).unwrap();
    tm.set_active_cells(&[0, 4, 8], &[0, 4, 8]).unwrap();
    tm.step(&cols(16, &[5]), true).unwrap();
    let view = tm.segment(seg).unwrap();
    assert_eq!(view.synapses, vec![(0, 6000), (4, 6000), (8, 5500), (12, 2000)]);
}

#[test]
fn predicted_inactive_segment_decays() {
    let mut tm = TemporalMemory::new(small_params()).unwrap();
    let seg = tm.add_segment(20, &[(0, 6000), (4, 6000), (12, 3000)]).unwrap();
    tm.set_active_cells(&[0, 4], &[0, 4]).unwrap();
    // Column 5 (cell 20) stays silent.
    tm.step(&cols(16, &[9]), true).unwrap();
    let view = tm.segment(seg).unwrap();
    assert_eq!(view.synapses, vec![(0, 5900), (4, 5900), (12, 3000)]);
}

#[test]
fn no_previous_activity_means_no_growth() {
    let mut tm = TemporalMemory::new(TmParams::default()).unwrap();
    tm.step(&Sdr::random(2048, 40, 1).unwrap(), true).unwrap();
    assert_eq!(tm.num_segments(), 0);
}

#[test]
fn bursting_grows_segments_from_previous_winners() {
    let mut tm = TemporalMemory::new(TmParams::default()).unwrap();
    tm.step(&Sdr::random(2048, 40, 1).unwrap(), true).unwrap();
    let prev_winners = tm.winner_cells().to_vec();
    tm.step(&Sdr::random(2048, 40, 2).unwrap(), true).unwrap();
    assert_eq!(tm.num_segments(), 40);
    for seg in tm.segments() {
        assert_eq!(seg.synapses.len(), 32);
        for (pre, perm) in seg.synapses {
            assert_eq!(perm, 2100);
            assert!(prev_winners.contains(&pre));
        }
    }
}

fn encode(enc: &mut CategoryEncoder, s: u32) -> Sdr {
    enc.encode(Symbol::Seq(s)).clone()
}

#[test]
fn learns_high_order_context() {
    // A B C D and X B C Y.
    let mut enc = CategoryEncoder::new(2048, 40, 9).unwrap();
    let (a, b, c, d, x, y) = (0, 1, 2, 3, 4, 5);
    let mut tm = TemporalMemory::new(TmParams::default()).unwrap();
    let mut noise = 1000;
    // Early passes associate the shared C cells with both endings; the
    // stale association decays once the contexts split.
    for _ in 0..80 {
        for seq in [[a, b, c, d], [x, b, c, y]] {
            for s in seq {
                tm.step(&encode(&mut enc, s), true).unwrap();
            }
            tm.step(&encode(&mut enc, noise), true).unwrap();
            noise += 1;
        }
    }
    let d_cols = encode(&mut enc, d);
    let y_cols = encode(&mut enc, y);
    for (first, want, other) in [(a, &d_cols, &y_cols), (x, &y_cols, &d_cols)] {
        tm.reset();
        for s in [first, b, c] {
            tm.step(&encode(&mut enc, s), false).unwrap();
        }
        let predicted = tm.predicted_columns();
        assert_eq!(predicted.overlap(want).unwrap(), 40);
        assert_eq!(predicted.overlap(other).unwrap(), other.overlap(want).unwrap());
    }

    // An ambiguous C with no context predicts both endings.
    tm.reset();
    tm.step(&encode(&mut enc, c), false).unwrap();
    let predicted = tm.predicted_columns();
    assert_eq!(predicted, Sdr::union([&d_cols, &y_cols]).unwrap());
}

#[test]
fn loop_with_resets_converges() {
    let mut enc = CategoryEncoder::new(2048, 40, 4).unwrap();
    let mut tm = TemporalMemory::new(TmParams::default()).unwrap();
    let mut converged_at = None;
    for cycle in 0..30 {
        tm.reset();
        tm.step(&encode(&mut enc, 0), true).unwrap();
        let second = tm.step(&encode(&mut enc, 1), true).unwrap();
        if second.bursting_columns.is_empty() && converged_at.is_none() {
            converged_at = Some(cycle);
        }
        if converged_at.is_some() {
            assert!(second.bursting_columns.is_empty(), "relapsed at cycle {cycle}");
            assert_eq!(second.active_cells.len(), 40);
        }
    }
    assert!(converged_at.expect("loop never converged") < 10);

    // After a reset the first element bursts and the second is predicted.
    tm.reset();
    tm.reset();
    let first = tm.step(&encode(&mut enc, 0), false).unwrap();
    assert_eq!(first.bursting_columns.len(), 40);
    let second = tm.step(&encode(&mut enc, 1), false).unwrap();
    assert!(second.bursting_columns.is_empty());
}

#[test]
fn unbroken_loop_bursts_ever_more_rarely() {
    // Without a boundary the loop is learned as an ever longer high-order
    // sequence: each burst starts a new context, and the run of predicted
    // steps before the next burst grows.
    let mut enc = CategoryEncoder::new(2048, 40, 4).unwrap();
    let mut tm = TemporalMemory::new(TmParams::default()).unwrap();
    let mut bursting_steps = Vec::new();
    for step in 0..400u32 {
        let st = tm.step(&encode(&mut enc, step % 2), true).unwrap();
        if !st.bursting_columns.is_empty() {
            bursting_steps.push(step);
        }
    }
    let early = bursting_steps.iter().filter(|&&s| s < 100).count();
    let late = bursting_steps.iter().filter(|&&s| s >= 300).count();
    assert!(late < early, "early {early}, late {late}");
    let gaps: Vec<u32> = bursting_steps.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(gaps.last() > gaps.first());
}

#[test]
fn repeated_sequence_bursting_is_non_increasing() {
    let mut enc = CategoryEncoder::new(2048, 40, 8).unwrap();
    let mut tm = TemporalMemory::new(TmParams::default()).unwrap();
    let seq = [0, 1, 2, 3, 4, 5];
    let mut last = usize::MAX;
    for cycle in 0..25 {
        tm.reset();
        // The first element follows a reset and always bursts.
        let bursts: usize = seq
            .iter()
            .map(|&s| tm.step(&encode(&mut enc, s), true).unwrap().bursting_columns.len())
            .skip(1)
            .sum();
        assert!(bursts <= last, "cycle {cycle}: {bursts} > {last}");
        last = bursts;
    }
    assert_eq!(last, 0);
}

#[test]
fn determinism_and_snapshot_round_trip() {
    let stream: Vec<Sdr> = (0..1000u64).map(|i| Sdr::random(2048, 40, (i * 7919) % 23).unwrap()).collect();
    let mut a = TemporalMemory::new(TmParams::default()).unwrap();
    let mut b = TemporalMemory::new(TmParams::default()).unwrap();
    for s in &stream[..400] {
        assert_eq!(a.step(s, true).unwrap(), b.step(s, true).unwrap());
    }
    let text = a.to_snapshot();
    let mut restored = TemporalMemory::from_snapshot(&text).unwrap();
    assert_eq!(restored.state(), a.state());
    assert_eq!(restored.to_snapshot(), text);
    for s in &stream[400..] {
        assert_eq!(restored.step(s, true).unwrap(), a.step(s, true).unwrap());
    }
    assert_eq!(restored.to_snapshot(), a.to_snapshot());
}

#[test]
fn corrupted_snapshots_are_rejected() {
    let mut tm = TemporalMemory::new(small_params()).unwrap();
    for i in 0..20u64 {
        tm.step(&Sdr::random(16, 3, i % 5).unwrap(), true).unwrap();
    }
    let text = tm.to_snapshot();
    assert!(TemporalMemory::from_snapshot(&text.replace("seqmem-tm 1", "seqmem-tm 2")).is_err());
    assert!(TemporalMemory::from_snapshot(&text[..text.len() / 2]).is_err());
    assert!(TemporalMemory::from_snapshot("garbage").is_err());
    let bad_perm = text.replacen(":2100", ":20000", 1);
    assert_ne!(bad_perm, text);
    assert!(TemporalMemory::from_snapshot(&bad_perm).is_err());
}

#[test]
fn kill_fraction_zero_and_one() {
    let mut enc = CategoryEncoder::new(2048, 40, 4).unwrap();
    let mut tm = TemporalMemory::new(TmParams::default()).unwrap();
    for _ in 0..10 {
        for s in [0, 1, 2] {
            tm.step(&encode(&mut enc, s), true).unwrap();
        }
    }
    let mut untouched = tm.clone();
    assert_eq!(tm.kill_cells(0.0, 1).unwrap(), 0);
    for s in [0, 1, 2] {
        assert_eq!(tm.step(&encode(&mut enc, s), false).unwrap(), untouched.step(&encode(&mut enc, s), false).unwrap());
    }

    assert_eq!(tm.kill_cells(1.0, 1).unwrap(), 65_536);
    assert_eq!(tm.num_segments(), 0);
    for s in [0, 1, 2, 0] {
        let st = tm.step(&encode(&mut enc, s), true).unwrap();
        assert_eq!(st.bursting_columns.len(), 40);
        assert!(st.active_cells.is_empty());
        assert!(st.predictive_cells.is_empty());
    }
    assert!(tm.kill_cells(1.5, 1).is_err());
}

#[test]
fn dead_cells_never_activate_or_get_sampled() {
    let mut tm = TemporalMemory::new(TmParams::default()).unwrap();
    tm.kill_cells(0.5, 3).unwrap();
    assert_eq!(tm.num_dead(), 32_768);
    for i in 0..50u64 {
        tm.step(&Sdr::random(2048, 40, i % 7).unwrap(), true).unwrap();
        for &c in tm.active_cells() {
            assert!(!tm.is_dead(c));
        }
    }
    for seg in tm.segments() {
        assert!(!tm.is_dead(seg.owner));
        assert!(seg.synapses.iter().all(|(p, _)| !tm.is_dead(*p)));
    }
}

#[test]
fn predicted_columns_projection() {
    let mut tm = TemporalMemory::new(small_params()).unwrap();
    assert!(tm.predicted_columns().is_empty());
    tm.add_segment(29, &[(0, 6000), (1, 6000)]).unwrap();
    tm.set_active_cells(&[0, 1], &[]).unwrap();
    assert_eq!(tm.predicted_columns().active(), &[7]);
}

#[test]
fn width_mismatch_is_an_error() {
    let mut tm = TemporalMemory::new(small_params()).unwrap();
    assert!(matches!(tm.step(&cols(17, &[1]), true), Err(Error::WidthMismatch { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn caps_and_bounds_hold(seed in 0u64..10_000, steps in 20usize..120) {
        let params = TmParams {
            num_columns: 32,
            cells_per_column: 4,
            activation_threshold: 3,
            matching_threshold: 2,
            max_segments_per_cell: 2,
            max_synapses_per_segment: 6,
            max_new_synapses_per_step: 4,
            seed,
            ..Default::default()
        };
        let mut tm = TemporalMemory::new(params).unwrap();
        let mut r = rng::seeded(seed);
        let alphabet: Vec<Sdr> = (0..6).map(|i| Sdr::random(32, 4, seed + i).unwrap()).collect();
        for _ in 0..steps {
            let st = tm.step(&alphabet[r.gen_range(0..6)], true).unwrap();
            prop_assert!(st.active_cells.len() >= st.active_columns.len());
            prop_assert!(st.active_cells.len() <= st.active_columns.len() * 4);
            prop_assert!(st.winner_cells.iter().all(|w| st.active_cells.binary_search(w).is_ok()));
        }
        for c in 0..tm.num_cells() as u32 {
            prop_assert!(tm.segments_per_cell(c) <= 2);
        }
        for seg in tm.segments() {
            prop_assert!(!seg.synapses.is_empty() && seg.synapses.len() <= 6);
            prop_assert!(seg.synapses.iter().all(|&(p, perm)| perm > 0 && perm <= PERMANENCE_MAX && p != seg.owner));
        }
    }
}
