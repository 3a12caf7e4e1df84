use ralin::model::{OpId, ReplicaId, Sentinel, Timestamp, Value};
use ralin::opcrdt::{
    apply_effector, apply_generator, rga_traverse, CrdtKind, EffectorPayload, ReplicaState,
};

fn ts(c: u64, r: u32) -> Timestamp {
    Timestamp::new(c, ReplicaId(r))
}

fn id(r: u32, s: u64) -> OpId {
    OpId::new(ReplicaId(r), s)
}

/// Runs the generator then the effector at the origin, mimicking one
/// OPERATION step on a single state.
fn exec(
    kind: CrdtKind,
    state: &ReplicaState,
    method: &str,
    args: &[Value],
    fresh: OpId,
    next_ts: Timestamp,
) -> (Value, Option<EffectorPayload>, ReplicaState) {
    let (ret, payload, _) =
        apply_generator(kind, state, method, args, fresh, &mut || next_ts).unwrap();
    let next = match &payload {
        Some(p) => apply_effector(kind, state, p).unwrap(),
        None => state.clone(),
    };
    (ret, payload, next)
}

#[test]
fn counter_inc_dec_read() {
    let kind = CrdtKind::Counter;
    let s0 = ReplicaState::initial(kind);
    let (_, _, s1) = exec(kind, &s0, "inc", &[], id(0, 0), ts(1, 0));
    let (_, _, s2) = exec(kind, &s1, "inc", &[], id(0, 1), ts(2, 0));
    let (_, _, s3) = exec(kind, &s2, "dec", &[], id(0, 2), ts(3, 0));
    let (ret, payload, _) = exec(kind, &s3, "read", &[], id(0, 3), ts(4, 0));
    assert_eq!(ret, Value::Int(1));
    assert!(payload.is_none());
}

#[test]
fn lww_register_write_read_and_stale_write() {
    let kind = CrdtKind::Lww;
    let s0 = ReplicaState::initial(kind);
    let (ret, _, _) = exec(kind, &s0, "read", &[], id(0, 0), ts(1, 0));
    assert_eq!(ret, Value::Unit);
    let (_, p1, s1) = exec(kind, &s0, "write", &[Value::str("x")], id(0, 0), ts(2, 0));
    assert!(matches!(p1, Some(EffectorPayload::LwwWrite { .. })));
    let (ret, _, _) = exec(kind, &s1, "read", &[], id(0, 1), ts(3, 0));
    assert_eq!(ret, Value::str("x"));
    // A concurrent write with a smaller timestamp loses.
    let stale = EffectorPayload::LwwWrite { value: Value::str("y"), ts: ts(1, 1) };
    let s2 = apply_effector(kind, &s1, &stale).unwrap();
    let (ret, _, _) = exec(kind, &s2, "read", &[], id(0, 2), ts(4, 0));
    assert_eq!(ret, Value::str("x"));
    // A bigger timestamp wins.
    let newer = EffectorPayload::LwwWrite { value: Value::str("z"), ts: ts(9, 1) };
    let s3 = apply_effector(kind, &s2, &newer).unwrap();
    let (ret, _, _) = exec(kind, &s3, "read", &[], id(0, 3), ts(10, 0));
    assert_eq!(ret, Value::str("z"));
}

#[test]
fn orset_remove_collects_exactly_the_observed_pairs() {
    let kind = CrdtKind::OrSet;
    let s0 = ReplicaState::initial(kind);
    let (r1, _, s1) = exec(kind, &s0, "add", &[Value::str("a")], id(0, 0), ts(1, 0));
    assert_eq!(r1, Value::Id(id(0, 0)));
    // A concurrent add of the same element arrives with a different id.
    let s2 = apply_effector(
        kind,
        &s1,
        &EffectorPayload::OrSetAdd { elem: "a".into(), k: id(1, 0) },
    )
    .unwrap();
    let (r, payload, s3) = exec(kind, &s2, "remove", &[Value::str("a")], id(0, 1), ts(2, 0));
    match &payload {
        Some(EffectorPayload::OrSetRemove { r }) => assert_eq!(r.len(), 2),
        other => panic!("unexpected payload {other:?}"),
    }
    assert!(matches!(r, Value::Set(ref s) if s.len() == 2));
    let (ret, _, _) = exec(kind, &s3, "read", &[], id(0, 2), ts(3, 0));
    assert_eq!(ret, Value::Set(Default::default()));
    // Removing an absent element observes the empty set.
    let (r_empty, p_empty, _) = exec(kind, &s3, "remove", &[Value::str("b")], id(0, 3), ts(4, 0));
    assert_eq!(r_empty, Value::Set(Default::default()));
    assert!(matches!(p_empty, Some(EffectorPayload::OrSetRemove { r }) if r.is_empty()));
}

#[test]
fn rga_sibling_order_is_descending_timestamp() {
    // addAfter(∘,a), addAfter(a,c), addAfter(a,b) at one replica: b carries
    // the larger timestamp and is traversed before its older sibling c.
    let kind = CrdtKind::Rga;
    let root = Value::Sentinel(Sentinel::Root);
    let s0 = ReplicaState::initial(kind);
    let (_, _, s1) = exec(kind, &s0, "addAfter", &[root.clone(), Value::str("a")], id(0, 0), ts(1, 0));
    let (_, _, s2) =
        exec(kind, &s1, "addAfter", &[Value::str("a"), Value::str("c")], id(0, 1), ts(2, 0));
    let (_, _, s3) =
        exec(kind, &s2, "addAfter", &[Value::str("a"), Value::str("b")], id(0, 2), ts(3, 0));
    let (ret, _, _) = exec(kind, &s3, "read", &[], id(0, 3), ts(4, 0));
    assert_eq!(ret, Value::List(vec![Value::str("a"), Value::str("b"), Value::str("c")]));
    // Tombstones hide elements from reads but keep them in the full order.
    let (_, _, s4) = exec(kind, &s3, "remove", &[Value::str("b")], id(0, 3), ts(4, 0));
    let (ret, _, _) = exec(kind, &s4, "read", &[], id(0, 4), ts(5, 0));
    assert_eq!(ret, Value::List(vec![Value::str("a"), Value::str("c")]));
    match &s4 {
        ReplicaState::Rga(st) => {
            assert_eq!(rga_traverse(st, true), vec!["a", "b", "c"]);
        }
        _ => unreachable!(),
    }
}

#[test]
fn rga_preconditions() {
    let kind = CrdtKind::Rga;
    let root = Value::Sentinel(Sentinel::Root);
    let s0 = ReplicaState::initial(kind);
    let (_, _, s1) = exec(kind, &s0, "addAfter", &[root, Value::str("a")], id(0, 0), ts(1, 0));
    // Unknown parent.
    assert!(apply_generator(
        kind,
        &s1,
        "addAfter",
        &[Value::str("zz"), Value::str("b")],
        id(0, 1),
        &mut || ts(2, 0)
    )
    .is_err());
    // Duplicate element.
    assert!(apply_generator(
        kind,
        &s1,
        "addAfter",
        &[Value::str("a"), Value::str("a")],
        id(0, 1),
        &mut || ts(2, 0)
    )
    .is_err());
    // Tombstoned parent.
    let (_, _, s2) = exec(kind, &s1, "remove", &[Value::str("a")], id(0, 1), ts(2, 0));
    assert!(apply_generator(
        kind,
        &s2,
        "addAfter",
        &[Value::str("a"), Value::str("b")],
        id(0, 2),
        &mut || ts(3, 0)
    )
    .is_err());
    // Removing a removed element fails.
    assert!(apply_generator(kind, &s2, "remove", &[Value::str("a")], id(0, 2), &mut || ts(3, 0))
        .is_err());
}

#[test]
fn rga_concurrent_inserts_converge() {
    // Both replicas insert after a; the insert with the larger timestamp
    // lands first, at both replicas, regardless of delivery order.
    let kind = CrdtKind::Rga;
    let root = Value::Sentinel(Sentinel::Root);
    let s0 = ReplicaState::initial(kind);
    let (_, pa, base) = exec(kind, &s0, "addAfter", &[root, Value::str("a")], id(0, 0), ts(1, 0));
    let _ = pa;
    let d = EffectorPayload::RgaAddAfter {
        parent: ralin::opcrdt::Parent::Elem("a".into()),
        ts: ts(4, 1),
        elem: "d".into(),
    };
    let e = EffectorPayload::RgaAddAfter {
        parent: ralin::opcrdt::Parent::Elem("a".into()),
        ts: ts(4, 0),
        elem: "e".into(),
    };
    let one = apply_effector(kind, &apply_effector(kind, &base, &d).unwrap(), &e).unwrap();
    let two = apply_effector(kind, &apply_effector(kind, &base, &e).unwrap(), &d).unwrap();
    assert_eq!(one, two);
    let (ret, _, _) = exec(kind, &one, "read", &[], id(0, 9), ts(9, 0));
    assert_eq!(ret, Value::List(vec![Value::str("a"), Value::str("d"), Value::str("e")]));
}

#[test]
fn addat_wrapper_anchors() {
    let kind = CrdtKind::RgaAddAt;
    let s0 = ReplicaState::initial(kind);
    // Empty list: anchor is the root regardless of the index.
    let (ret, _, s1) =
        exec(kind, &s0, "addAt", &[Value::str("a"), Value::Int(3)], id(0, 0), ts(1, 0));
    assert_eq!(ret, Value::List(vec![Value::str("a")]));
    // Index 0 inserts at the front.
    let (ret, _, s2) =
        exec(kind, &s1, "addAt", &[Value::str("b"), Value::Int(0)], id(0, 1), ts(2, 0));
    assert_eq!(ret, Value::List(vec![Value::str("b"), Value::str("a")]));
    // Index beyond the list appends after the last element.
    let (ret, _, s3) =
        exec(kind, &s2, "addAt", &[Value::str("c"), Value::Int(9)], id(0, 2), ts(3, 0));
    assert_eq!(ret, Value::List(vec![Value::str("b"), Value::str("a"), Value::str("c")]));
    // Remove returns the updated local list.
    let (ret, _, _) = exec(kind, &s3, "remove", &[Value::str("a")], id(0, 3), ts(4, 0));
    assert_eq!(ret, Value::List(vec![Value::str("b"), Value::str("c")]));
}

#[test]
fn addat0_wrapper_returns_nothing() {
    let kind = CrdtKind::RgaAddAt0;
    let s0 = ReplicaState::initial(kind);
    let (ret, _, s1) =
        exec(kind, &s0, "addAt", &[Value::str("a"), Value::Int(0)], id(0, 0), ts(1, 0));
    assert_eq!(ret, Value::Unit);
    let (ret, _, _) = exec(kind, &s1, "remove", &[Value::str("a")], id(0, 1), ts(2, 0));
    assert_eq!(ret, Value::Unit);
}

#[test]
fn wooki_add_between_and_remove() {
    let kind = CrdtKind::Wooki;
    let begin = Value::Sentinel(Sentinel::Begin);
    let end = Value::Sentinel(Sentinel::End);
    let s0 = ReplicaState::initial(kind);
    let (_, _, s1) =
        exec(kind, &s0, "addBetween", &[begin.clone(), Value::str("a"), end.clone()], id(0, 0), ts(1, 0));
    let (_, _, s2) =
        exec(kind, &s1, "addBetween", &[Value::str("a"), Value::str("b"), end.clone()], id(0, 1), ts(2, 0));
    let (ret, _, _) = exec(kind, &s2, "read", &[], id(0, 2), ts(3, 0));
    assert_eq!(ret, Value::List(vec![Value::str("a"), Value::str("b")]));
    let (_, _, s3) = exec(kind, &s2, "remove", &[Value::str("a")], id(0, 2), ts(3, 0));
    let (ret, _, _) = exec(kind, &s3, "read", &[], id(0, 3), ts(4, 0));
    assert_eq!(ret, Value::List(vec![Value::str("b")]));
    // Invisible characters still anchor inserts.
    let (_, _, s4) =
        exec(kind, &s3, "addBetween", &[begin, Value::str("c"), Value::str("a")], id(0, 3), ts(4, 0));
    let (ret, _, _) = exec(kind, &s4, "read", &[], id(0, 4), ts(5, 0));
    assert_eq!(ret, Value::List(vec![Value::str("c"), Value::str("b")]));
}

#[test]
fn wooki_preconditions() {
    let kind = CrdtKind::Wooki;
    let begin = Value::Sentinel(Sentinel::Begin);
    let end = Value::Sentinel(Sentinel::End);
    let s0 = ReplicaState::initial(kind);
    let (_, _, s1) =
        exec(kind, &s0, "addBetween", &[begin.clone(), Value::str("a"), end.clone()], id(0, 0), ts(1, 0));
    // b already present.
    assert!(apply_generator(
        kind,
        &s1,
        "addBetween",
        &[begin.clone(), Value::str("a"), end.clone()],
        id(0, 1),
        &mut || ts(2, 0)
    )
    .is_err());
    // c before a.
    assert!(apply_generator(
        kind,
        &s1,
        "addBetween",
        &[Value::str("a"), Value::str("b"), begin.clone()],
        id(0, 1),
        &mut || ts(2, 0)
    )
    .is_err());
    // a must not be the right sentinel.
    assert!(apply_generator(
        kind,
        &s1,
        "addBetween",
        &[end, Value::str("b"), begin],
        id(0, 1),
        &mut || ts(2, 0)
    )
    .is_err());
}

#[test]
fn wooki_concurrent_inserts_converge() {
    // Two replicas insert between the same pair; integration orders them and
    // both replicas converge independently of delivery order.
    let kind = CrdtKind::Wooki;
    let begin = Value::Sentinel(Sentinel::Begin);
    let end = Value::Sentinel(Sentinel::End);
    let s0 = ReplicaState::initial(kind);
    let mk = |elem: &str, c: u64, r: u32, st: &ReplicaState| {
        let (_, p, _) = apply_generator(
            kind,
            st,
            "addBetween",
            &[begin.clone(), Value::str(elem), end.clone()],
            id(r, 0),
            &mut || ts(c, r),
        )
        .unwrap();
        p.unwrap()
    };
    let pa = mk("a", 1, 0, &s0);
    let pb = mk("b", 1, 1, &s0);
    let one = apply_effector(kind, &apply_effector(kind, &s0, &pa).unwrap(), &pb).unwrap();
    let two = apply_effector(kind, &apply_effector(kind, &s0, &pb).unwrap(), &pa).unwrap();
    assert_eq!(one, two);
    let (ret, _, _) = exec(kind, &one, "read", &[], id(0, 9), ts(9, 0));
    // Equal degrees: identifier order decides, (1,r0) < (1,r1).
    assert_eq!(ret, Value::List(vec![Value::str("a"), Value::str("b")]));
}
