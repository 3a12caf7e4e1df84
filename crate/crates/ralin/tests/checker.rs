use std::collections::{BTreeMap, BTreeSet};

use ralin::checker::{
    assign_virtual_ts, build_execution_order_lin, build_timestamp_order_lin,
    check_commutativity, check_composition, check_ra_exhaustive, check_refinement,
    check_sb_props, enumerate_ra_witnesses, sample_commutativity_cases, uniform_specs,
    validate_linearization, Linearization, RefinementMode, DEFAULT_BOUND,
};
use ralin::model::{History, OpId, ReplicaId, Sentinel, Timestamp, Value};
use ralin::opcrdt::CrdtKind;
use ralin::runtime::{random_op_run, OpRun};
use ralin::spec::{qu_rewrite, QuRewriting, SeqSpec};
use ralin::statecrdt::SbKind;
use ralin::Error;

fn r(i: u32) -> ReplicaId {
    ReplicaId(i)
}

/// Two concurrent root inserts with a tie-breaking read: the read's order is
/// only explainable by the timestamp order, not the execution order.
fn sibling_run() -> (OpRun, OpId, OpId, OpId, OpId) {
    let mut run = OpRun::new(2, &[("o".to_string(), CrdtKind::Rga)], false);
    let root = Value::Sentinel(Sentinel::Root);
    let b = run.step_operation(r(1), "o", "addAfter", &[root.clone(), Value::str("b")]).unwrap();
    let a = run.step_operation(r(0), "o", "addAfter", &[root, Value::str("a")]).unwrap();
    let c = run.step_operation(r(1), "o", "addAfter", &[Value::str("b"), Value::str("c")]).unwrap();
    run.step_effector(r(0), b.id).unwrap();
    let read = run.step_operation(r(0), "o", "read", &[]).unwrap();
    assert_eq!(read.ret, Value::List(vec![Value::str("b"), Value::str("a")]));
    (run, a.id, b.id, c.id, read.id)
}

#[test]
fn empty_history_is_accepted() {
    let h = History::default();
    let v = validate_linearization(&h, &Linearization { seq: vec![] }, SeqSpec::Rga).unwrap();
    assert!(v.accepted);
    let v = check_ra_exhaustive(&h, SeqSpec::Rga, QuRewriting::Identity, DEFAULT_BOUND).unwrap();
    assert!(v.accepted);
}

#[test]
fn non_permutations_are_invalid_inputs() {
    let (run, a, ..) = sibling_run();
    let h = run.extract_history();
    let short = Linearization { seq: vec![a] };
    assert!(matches!(validate_linearization(&h, &short, SeqSpec::Rga), Err(Error::Invalid(_))));
}

#[test]
fn execution_order_fails_but_timestamp_order_explains_the_read() {
    let (run, a, b, c, read) = sibling_run();
    let h = run.extract_history();
    let rw = qu_rewrite(&h, QuRewriting::Identity).unwrap();

    let exec = build_execution_order_lin(&rw, &run.order);
    assert_eq!(exec.seq, vec![b, a, c, read]);
    let v = validate_linearization(&h, &exec, SeqSpec::Rga).unwrap();
    assert!(!v.accepted);
    let reason = v.reason.unwrap();
    assert_eq!(reason.item, 3);
    assert_eq!(reason.query, Some(read));

    let tso = build_timestamp_order_lin(&rw, &run.order);
    assert_eq!(tso.seq, vec![a, b, read, c]);
    let v = validate_linearization(&h, &tso, SeqSpec::Rga).unwrap();
    assert!(v.accepted);

    let v = check_ra_exhaustive(&h, SeqSpec::Rga, QuRewriting::Identity, DEFAULT_BOUND).unwrap();
    assert!(v.accepted);
}

#[test]
fn virtual_timestamps_fill_queries_from_their_view() {
    let (run, a, b, _, read) = sibling_run();
    let h = run.extract_history();
    let vts = assign_virtual_ts(&h);
    assert_eq!(vts[&a], Some(Timestamp::new(1, r(0))));
    assert_eq!(vts[&b], Some(Timestamp::new(1, r(1))));
    // The read carries no timestamp; it inherits the max over its view.
    assert_eq!(vts[&read], Some(Timestamp::new(1, r(1))));
}

#[test]
fn violating_a_visibility_edge_fails_item_one() {
    let (run, a, b, c, read) = sibling_run();
    let h = run.extract_history();
    // The read saw b, so placing it before b breaks item (i).
    let lin = Linearization { seq: vec![a, read, b, c] };
    let v = validate_linearization(&h, &lin, SeqSpec::Rga).unwrap();
    assert!(!v.accepted);
    assert_eq!(v.reason.unwrap().item, 1);
}

/// Concurrent observed-removes of the same element: each replica's read sees
/// its own remove and the other replica's add, and still returns {a}.
fn concurrent_remove_run() -> OpRun {
    let mut run = OpRun::new(2, &[("o".to_string(), CrdtKind::OrSet)], false);
    let add0 = run.step_operation(r(0), "o", "add", &[Value::str("a")]).unwrap();
    run.step_operation(r(0), "o", "remove", &[Value::str("a")]).unwrap();
    let add1 = run.step_operation(r(1), "o", "add", &[Value::str("a")]).unwrap();
    run.step_operation(r(1), "o", "remove", &[Value::str("a")]).unwrap();
    run.step_effector(r(1), add0.id).unwrap();
    run.step_effector(r(0), add1.id).unwrap();
    for i in 0..2 {
        let read = run.step_operation(r(i), "o", "read", &[]).unwrap();
        assert_eq!(read.ret, Value::Set(BTreeSet::from([Value::str("a")])));
    }
    run
}

#[test]
fn atomic_set_semantics_reject_what_split_removes_accept() {
    let run = concurrent_remove_run();
    let h = run.extract_history();
    // Treating removes as atomic Set updates: each read needs the other
    // replica's add after its own remove, which is cyclic.
    let v = check_ra_exhaustive(&h, SeqSpec::Set, QuRewriting::Identity, DEFAULT_BOUND).unwrap();
    assert!(!v.accepted);
    assert_eq!(v.reason.unwrap().item, 3);
    // Splitting each remove into readIds(a) plus remove(R) resolves it.
    let v =
        check_ra_exhaustive(&h, SeqSpec::OrSet, QuRewriting::OrSetRemove, DEFAULT_BOUND).unwrap();
    assert!(v.accepted);
    validate_linearization(
        &qu_rewrite(&h, QuRewriting::OrSetRemove).unwrap(),
        &v.witness.unwrap(),
        SeqSpec::OrSet,
    )
    .map(|v| assert!(v.accepted))
    .unwrap();
}

#[test]
fn unsplit_query_updates_are_reported() {
    let run = concurrent_remove_run();
    let h = run.extract_history();
    let lin = Linearization { seq: run.order.clone() };
    assert!(matches!(
        validate_linearization(&h, &lin, SeqSpec::OrSet),
        Err(Error::NotRewritten(_))
    ));
}

#[test]
fn builders_agree_with_the_exhaustive_oracle_on_random_runs() {
    for kind in [CrdtKind::Counter, CrdtKind::Lww, CrdtKind::OrSet, CrdtKind::Rga] {
        let (spec, gamma) = match kind {
            CrdtKind::Counter => (SeqSpec::Counter, QuRewriting::Identity),
            CrdtKind::Lww => (SeqSpec::Register, QuRewriting::Identity),
            CrdtKind::OrSet => (SeqSpec::OrSet, QuRewriting::OrSetRemove),
            _ => (SeqSpec::Rga, QuRewriting::Identity),
        };
        for seed in 0..15 {
            let (_, run) = random_op_run(kind, 3, 6, seed, false).unwrap();
            let h = run.extract_history();
            let rw = qu_rewrite(&h, gamma).unwrap();
            // Timestamp-driven types linearize by timestamp; the others by
            // execution order.
            let lin = if matches!(kind, CrdtKind::Rga | CrdtKind::Lww) {
                build_timestamp_order_lin(&rw, &run.order)
            } else {
                build_execution_order_lin(&rw, &run.order)
            };
            let built = validate_linearization(&rw, &lin, spec).unwrap();
            let oracle = check_ra_exhaustive(&h, spec, gamma, usize::MAX).unwrap();
            assert!(built.accepted, "{kind:?} seed {seed}: {:?}", built.reason);
            assert!(oracle.accepted, "{kind:?} seed {seed}");
        }
    }
}

#[test]
fn sampled_effector_pairs_commute() {
    for kind in
        [CrdtKind::Counter, CrdtKind::Lww, CrdtKind::OrSet, CrdtKind::Rga, CrdtKind::Wooki]
    {
        let cases = sample_commutativity_cases(kind, 3, 8, 7, 60).unwrap();
        assert!(cases.len() >= 60);
        let report = check_commutativity(kind, &cases);
        assert!(report.ok(), "{kind:?}: {:?}", report.failures);
        assert_eq!(report.checked, cases.len());
    }
}

#[test]
fn refinement_holds_in_the_right_mode() {
    let plain = [
        (CrdtKind::Counter, SeqSpec::Counter, QuRewriting::Identity),
        (CrdtKind::OrSet, SeqSpec::OrSet, QuRewriting::OrSetRemove),
    ];
    for (kind, spec, gamma) in plain {
        let report =
            check_refinement(kind, spec, gamma, RefinementMode::Plain, 3, 6, 200, 11).unwrap();
        assert!(report.ok(), "{kind:?}: {:?}", report.failures);
        assert!(report.checked >= 200);
    }
    let ts = [
        (CrdtKind::Lww, SeqSpec::Register),
        (CrdtKind::Rga, SeqSpec::Rga),
        (CrdtKind::Wooki, SeqSpec::Wooki),
    ];
    for (kind, spec) in ts {
        let report = check_refinement(
            kind,
            spec,
            QuRewriting::Identity,
            RefinementMode::Ts,
            3,
            6,
            200,
            11,
        )
        .unwrap();
        assert!(report.ok(), "{kind:?}: {:?}", report.failures);
    }
}

#[test]
fn lww_refinement_fails_without_the_timestamp_restriction() {
    // A stale write delivered after a newer one is ignored by the register
    // but not by the sequential spec, so the plain simulation must fail.
    let report = check_refinement(
        CrdtKind::Lww,
        SeqSpec::Register,
        QuRewriting::Identity,
        RefinementMode::Plain,
        3,
        8,
        400,
        3,
    )
    .unwrap();
    assert!(!report.ok());
}

#[test]
fn independent_objects_compose() {
    let objects = vec![("o1".to_string(), CrdtKind::OrSet), ("o2".to_string(), CrdtKind::OrSet)];
    let mut run = OpRun::new(2, &objects, false);
    let d = run.step_operation(r(0), "o1", "add", &[Value::str("d")]).unwrap();
    let a = run.step_operation(r(0), "o2", "add", &[Value::str("a")]).unwrap();
    let b = run.step_operation(r(1), "o2", "add", &[Value::str("b")]).unwrap();
    let c = run.step_operation(r(1), "o1", "add", &[Value::str("c")]).unwrap();
    let h = run.extract_history();
    // Cross-object program order shows up in the global visibility relation.
    assert!(h.vis.contains(&(d.id, a.id)));
    assert!(h.vis.contains(&(b.id, c.id)));

    let specs: BTreeMap<String, SeqSpec> =
        objects.iter().map(|(o, _)| (o.clone(), SeqSpec::OrSet)).collect();
    let gammas: BTreeMap<String, QuRewriting> =
        objects.iter().map(|(o, _)| (o.clone(), QuRewriting::OrSetRemove)).collect();
    let v = check_composition(&run, &specs, &gammas, DEFAULT_BOUND).unwrap();
    assert!(v.accepted);
    let witnesses = enumerate_ra_witnesses(
        &qu_rewrite(&h, QuRewriting::OrSetRemove).unwrap(),
        &specs,
        usize::MAX,
    )
    .unwrap();
    assert!(witnesses.contains(&Linearization { seq: vec![d.id, a.id, b.id, c.id] }));
}

#[test]
fn cyclic_cross_object_constraints_are_rejected() {
    let objects = vec![("o1".to_string(), CrdtKind::Rga), ("o2".to_string(), CrdtKind::Rga)];
    let mut run = OpRun::new(2, &objects, false);
    let root = Value::Sentinel(Sentinel::Root);
    let c = run.step_operation(r(0), "o2", "addAfter", &[root.clone(), Value::str("c")]).unwrap();
    run.step_effector(r(1), c.id).unwrap();
    let b = run.step_operation(r(1), "o1", "addAfter", &[root.clone(), Value::str("b")]).unwrap();
    let d = run.step_operation(r(1), "o2", "addAfter", &[root.clone(), Value::str("d")]).unwrap();
    run.step_effector(r(0), d.id).unwrap();
    run.step_operation(r(0), "o2", "addAfter", &[root.clone(), Value::str("e")]).unwrap();
    run.step_operation(r(0), "o1", "addAfter", &[root, Value::str("a")]).unwrap();
    let rd2 = run.step_operation(r(0), "o2", "read", &[]).unwrap();
    assert_eq!(rd2.ret, Value::List(vec![Value::str("e"), Value::str("d"), Value::str("c")]));
    run.step_effector(r(0), b.id).unwrap();
    let rd1 = run.step_operation(r(0), "o1", "read", &[]).unwrap();
    assert_eq!(rd1.ret, Value::List(vec![Value::str("b"), Value::str("a")]));

    let specs: BTreeMap<String, SeqSpec> =
        objects.iter().map(|(o, _)| (o.clone(), SeqSpec::Rga)).collect();
    let gammas: BTreeMap<String, QuRewriting> =
        objects.iter().map(|(o, _)| (o.clone(), QuRewriting::Identity)).collect();
    // Each object alone is fine...
    for (name, _) in &objects {
        let proj = run.extract_history().project(name);
        let v = check_ra_exhaustive(&proj, SeqSpec::Rga, QuRewriting::Identity, usize::MAX)
            .unwrap();
        assert!(v.accepted, "{name}");
    }
    // ...but the cross-object order constraints are cyclic.
    let v = check_composition(&run, &specs, &gammas, usize::MAX).unwrap();
    assert!(!v.accepted);
}

#[test]
fn state_based_property_checks_pass_for_their_classes() {
    let unique = [SbKind::MvReg, SbKind::LwwElementSet];
    for kind in unique {
        for prop in ["semilattice", "p1-soundness", "prop1", "prop2", "prop3", "prop4", "prop5"] {
            let report = check_sb_props(kind, prop, 80, 5).unwrap();
            assert!(report.ok(), "{kind:?} {prop}: {:?}", report.failures);
            assert!(report.checked >= 80);
        }
    }
    for prop in ["semilattice", "prop4", "prop5", "prop'1", "prop'2", "prop'3"] {
        let report = check_sb_props(SbKind::PnCounter, prop, 80, 5).unwrap();
        assert!(report.ok(), "pn {prop}: {:?}", report.failures);
    }
    for prop in ["semilattice", "prop4", "prop5", "prop6", "prop'1", "prop'2", "prop'3"] {
        let report = check_sb_props(SbKind::TwoPSet, prop, 80, 5).unwrap();
        assert!(report.ok(), "2p {prop}: {:?}", report.failures);
    }
    // Class-gated properties reject kinds outside their class.
    assert!(check_sb_props(SbKind::PnCounter, "prop1", 10, 5).is_err());
    assert!(check_sb_props(SbKind::MvReg, "prop6", 10, 5).is_err());
    assert!(check_sb_props(SbKind::MvReg, "no-such-prop", 10, 5).is_err());
}

#[test]
fn uniform_specs_covers_every_object() {
    let (run, ..) = sibling_run();
    let h = run.extract_history();
    let specs = uniform_specs(&h, SeqSpec::Rga);
    assert_eq!(specs, BTreeMap::from([("o".to_string(), SeqSpec::Rga)]));
}
