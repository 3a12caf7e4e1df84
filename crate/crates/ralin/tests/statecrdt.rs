use std::collections::BTreeSet;

use ralin::model::{ReplicaId, Timestamp, Value};
use ralin::statecrdt::{
    sb_apply_local, sb_compare, sb_do, sb_merge, vv_less, LocalEffectorArg, LwwElementSetState,
    MvRegisterState, PnCounterState, SbKind, SbState, TwoPSetState,
};

fn ts(c: u64, r: u32) -> Timestamp {
    Timestamp::new(c, ReplicaId(r))
}

fn do_at(kind: SbKind, s: &SbState, m: &str, args: &[Value], r: u32, c: u64) -> (Value, SbState) {
    let (ret, next, _) = sb_do(kind, s, m, args, ReplicaId(r), &mut || ts(c, r)).unwrap();
    (ret, next)
}

#[test]
fn pn_counter_inc_and_merge() {
    let kind = SbKind::PnCounter;
    let s0 = SbState::initial(kind, 2);
    let (_, s1) = do_at(kind, &s0, "inc", &[], 1, 0);
    assert_eq!(s1, SbState::Pn(PnCounterState { p: vec![0, 1], n: vec![0, 0] }));
    // Pointwise max per slot.
    let a = SbState::Pn(PnCounterState { p: vec![3, 0], n: vec![0, 0] });
    let b = SbState::Pn(PnCounterState { p: vec![1, 2], n: vec![0, 1] });
    let m = sb_merge(kind, &a, &b).unwrap();
    assert_eq!(m, SbState::Pn(PnCounterState { p: vec![3, 2], n: vec![0, 1] }));
    let (ret, _) = do_at(kind, &m, "read", &[], 0, 0);
    assert_eq!(ret, Value::Int(4));
}

#[test]
fn mv_register_write_dominates_what_it_saw() {
    let kind = SbKind::MvReg;
    let mut s = BTreeSet::new();
    s.insert(("x".to_string(), vec![1, 0]));
    s.insert(("y".to_string(), vec![0, 1]));
    let st = SbState::Mv(MvRegisterState { width: 2, s });
    let (_, next) = do_at(kind, &st, "write", &[Value::str("a")], 0, 0);
    let mut expected = BTreeSet::new();
    expected.insert(("a".to_string(), vec![2, 1]));
    assert_eq!(next, SbState::Mv(MvRegisterState { width: 2, s: expected }));
}

#[test]
fn mv_register_merge_keeps_incomparable_pairs() {
    let kind = SbKind::MvReg;
    let mk = |pairs: &[(&str, Vec<u64>)]| {
        SbState::Mv(MvRegisterState {
            width: 2,
            s: pairs.iter().map(|(a, v)| (a.to_string(), v.clone())).collect(),
        })
    };
    let both = sb_merge(kind, &mk(&[("a", vec![1, 0])]), &mk(&[("b", vec![0, 1])])).unwrap();
    assert_eq!(both, mk(&[("a", vec![1, 0]), ("b", vec![0, 1])]));
    let dominated = sb_merge(kind, &mk(&[("a", vec![1, 0])]), &mk(&[("b", vec![1, 1])])).unwrap();
    assert_eq!(dominated, mk(&[("b", vec![1, 1])]));
}

#[test]
fn mv_register_reads_all_current_values() {
    let kind = SbKind::MvReg;
    let s0 = SbState::initial(kind, 2);
    let (_, a) = do_at(kind, &s0, "write", &[Value::str("a")], 0, 0);
    let (_, b) = do_at(kind, &s0, "write", &[Value::str("b")], 1, 0);
    let m = sb_merge(kind, &a, &b).unwrap();
    let (ret, _) = do_at(kind, &m, "read", &[], 0, 0);
    assert_eq!(ret, Value::Set(BTreeSet::from([Value::str("a"), Value::str("b")])));
    // A later write at the merged state overwrites both.
    let (_, w) = do_at(kind, &m, "write", &[Value::str("c")], 0, 0);
    let (ret, _) = do_at(kind, &w, "read", &[], 0, 0);
    assert_eq!(ret, Value::Set(BTreeSet::from([Value::str("c")])));
}

#[test]
fn lww_element_set_membership_needs_newer_add() {
    let kind = SbKind::LwwElementSet;
    let st = SbState::Lww(LwwElementSetState {
        a: BTreeSet::from([("b".to_string(), ts(1, 0))]),
        r: BTreeSet::from([("b".to_string(), ts(2, 0))]),
    });
    let (ret, _) = do_at(kind, &st, "read", &[], 0, 9);
    assert_eq!(ret, Value::Set(BTreeSet::new()));
    // Re-adding with a fresh timestamp restores membership.
    let (_, st2) = do_at(kind, &st, "add", &[Value::str("b")], 0, 3);
    let (ret, _) = do_at(kind, &st2, "read", &[], 0, 9);
    assert_eq!(ret, Value::Set(BTreeSet::from([Value::str("b")])));
}

#[test]
fn two_p_set_remove_wins_and_preconditions() {
    let kind = SbKind::TwoPSet;
    let s0 = SbState::initial(kind, 2);
    // Removing before adding violates the precondition.
    assert!(sb_do(kind, &s0, "remove", &[Value::str("a")], ReplicaId(0), &mut || ts(1, 0)).is_err());
    let (_, s1) = do_at(kind, &s0, "add", &[Value::str("a")], 0, 0);
    let (_, s2) = do_at(kind, &s1, "remove", &[Value::str("a")], 0, 0);
    let (ret, _) = do_at(kind, &s2, "read", &[], 0, 0);
    assert_eq!(ret, Value::Set(BTreeSet::new()));
    // Double remove violates the precondition; re-add does not resurrect.
    assert!(sb_do(kind, &s2, "remove", &[Value::str("a")], ReplicaId(0), &mut || ts(1, 0)).is_err());
    let (_, s3) = do_at(kind, &s2, "add", &[Value::str("a")], 1, 0);
    let (ret, _) = do_at(kind, &s3, "read", &[], 0, 0);
    assert_eq!(ret, Value::Set(BTreeSet::new()));
}

#[test]
fn two_p_set_compare_is_componentwise_subset() {
    let kind = SbKind::TwoPSet;
    let a = SbState::TwoP(TwoPSetState { a: BTreeSet::from(["a".to_string()]), r: BTreeSet::new() });
    let b = SbState::TwoP(TwoPSetState {
        a: BTreeSet::from(["a".to_string(), "b".to_string()]),
        r: BTreeSet::from(["b".to_string()]),
    });
    assert!(sb_compare(kind, &a, &b).unwrap());
    assert!(!sb_compare(kind, &b, &a).unwrap());
    assert!(sb_compare(kind, &a, &a).unwrap());
}

#[test]
fn local_effector_matches_do_and_is_idempotent_for_2p() {
    let kind = SbKind::TwoPSet;
    let s0 = SbState::initial(kind, 2);
    let arg = LocalEffectorArg::TwoPAdd { elem: "a".into() };
    let once = sb_apply_local(kind, &s0, &arg).unwrap();
    let twice = sb_apply_local(kind, &once, &arg).unwrap();
    assert_eq!(once, twice);
    let (_, via_do) = do_at(kind, &s0, "add", &[Value::str("a")], 0, 0);
    assert_eq!(once, via_do);
}

#[test]
fn local_effector_mv_write_filters_dominated() {
    let kind = SbKind::MvReg;
    let s0 = SbState::initial(kind, 2);
    let (_, s1) = do_at(kind, &s0, "write", &[Value::str("x")], 0, 0);
    let arg = LocalEffectorArg::MvWrite { elem: "a".into(), vv: vec![2, 1] };
    let applied = sb_apply_local(kind, &s1, &arg).unwrap();
    let mut expected = BTreeSet::new();
    expected.insert(("a".to_string(), vec![2, 1]));
    assert_eq!(applied, SbState::Mv(MvRegisterState { width: 2, s: expected }));
}

#[test]
fn vv_less_is_strict_dominance() {
    assert!(vv_less(&vec![1, 0], &vec![1, 1]));
    assert!(!vv_less(&vec![1, 0], &vec![1, 0]));
    assert!(!vv_less(&vec![1, 0], &vec![0, 1]));
    assert!(!vv_less(&vec![1, 0], &vec![0, 5]));
}

#[test]
fn merge_laws_on_handpicked_states() {
    for kind in [SbKind::PnCounter, SbKind::MvReg, SbKind::TwoPSet, SbKind::LwwElementSet] {
        let s0 = SbState::initial(kind, 2);
        let (_, s1) = match kind {
            SbKind::PnCounter => do_at(kind, &s0, "inc", &[], 0, 0),
            SbKind::MvReg => do_at(kind, &s0, "write", &[Value::str("a")], 0, 1),
            _ => do_at(kind, &s0, "add", &[Value::str("a")], 0, 1),
        };
        let (_, s2) = match kind {
            SbKind::PnCounter => do_at(kind, &s0, "dec", &[], 1, 0),
            SbKind::MvReg => do_at(kind, &s0, "write", &[Value::str("b")], 1, 1),
            _ => do_at(kind, &s0, "add", &[Value::str("b")], 1, 1),
        };
        let m12 = sb_merge(kind, &s1, &s2).unwrap();
        assert_eq!(m12, sb_merge(kind, &s2, &s1).unwrap(), "{kind:?} commutativity");
        assert_eq!(sb_merge(kind, &s1, &s1).unwrap(), s1, "{kind:?} idempotence");
        assert_eq!(
            sb_merge(kind, &m12, &s0).unwrap(),
            sb_merge(kind, &s1, &sb_merge(kind, &s2, &s0).unwrap()).unwrap(),
            "{kind:?} associativity"
        );
        assert!(sb_compare(kind, &s1, &m12).unwrap(), "{kind:?} compare vs merge");
    }
}
