//! State-based CRDTs (PN-Counter, Multi-Value Register, 2P-Set,
//! LWW-Element-Set) with merge/compare, plus the "local effector"
//! instrumentation used by the proof-methodology property checks.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ReplicaId, Timestamp, Value};

/// Which state-based CRDT an object instantiates.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SbKind {
    PnCounter,
    MvReg,
    TwoPSet,
    LwwElementSet,
}

impl SbKind {
    pub fn parse(s: &str) -> Option<SbKind> {
        match s {
            "pn-counter" => Some(SbKind::PnCounter),
            "mv-reg" => Some(SbKind::MvReg),
            "2p-set" => Some(SbKind::TwoPSet),
            "lww-element-set" => Some(SbKind::LwwElementSet),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SbKind::PnCounter => "pn-counter",
            SbKind::MvReg => "mv-reg",
            SbKind::TwoPSet => "2p-set",
            SbKind::LwwElementSet => "lww-element-set",
        }
    }
}

/// Fixed-width version vector (replica count fixed at run start).
pub type VersionVector = Vec<u64>;

/// Strict dominance on version vectors: every component ≤ and at least one <.
pub fn vv_less(a: &VersionVector, b: &VersionVector) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| x <= y)
        && a.iter().zip(b).any(|(x, y)| x < y)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PnCounterState {
    pub p: Vec<u64>,
    pub n: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MvRegisterState {
    /// Fixed version-vector width (replica count, set at run start).
    pub width: usize,
    pub s: BTreeSet<(String, VersionVector)>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct TwoPSetState {
    pub a: BTreeSet<String>,
    pub r: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct LwwElementSetState {
    pub a: BTreeSet<(String, Timestamp)>,
    pub r: BTreeSet<(String, Timestamp)>,
}

/// Per-CRDT state-based replica payload.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SbState {
    Pn(PnCounterState),
    Mv(MvRegisterState),
    TwoP(TwoPSetState),
    Lww(LwwElementSetState),
}

impl SbState {
    pub fn initial(kind: SbKind, replicas: usize) -> SbState {
        match kind {
            SbKind::PnCounter => {
                SbState::Pn(PnCounterState { p: vec![0; replicas], n: vec![0; replicas] })
            }
            SbKind::MvReg => SbState::Mv(MvRegisterState { width: replicas, s: BTreeSet::new() }),
            SbKind::TwoPSet => SbState::TwoP(TwoPSetState::default()),
            SbKind::LwwElementSet => SbState::Lww(LwwElementSetState::default()),
        }
    }
}

/// The argument of the universal local effector: everything an update needs
/// besides the state it is applied to.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LocalEffectorArg {
    MvWrite { elem: String, vv: VersionVector },
    LwwAdd { elem: String, ts: Timestamp },
    LwwRem { elem: String, ts: Timestamp },
    PnInc { r: ReplicaId },
    PnDec { r: ReplicaId },
    TwoPAdd { elem: String },
    TwoPRem { elem: String },
}

impl LocalEffectorArg {
    /// The timestamp recorded on the operation label, if the method draws one.
    pub fn label_ts(&self) -> Option<Timestamp> {
        match self {
            LocalEffectorArg::LwwAdd { ts, .. } | LocalEffectorArg::LwwRem { ts, .. } => Some(*ts),
            _ => None,
        }
    }
}

fn precondition(method: &str, reason: impl Into<String>) -> Error {
    Error::PreconditionViolated { method: method.to_string(), reason: reason.into() }
}

fn shape(kind: SbKind) -> Error {
    Error::ShapeMismatch(format!("state does not match kind {}", kind.name()))
}

fn arg_str<'a>(method: &str, args: &'a [Value]) -> Result<&'a str> {
    args.first()
        .and_then(Value::as_str)
        .ok_or_else(|| precondition(method, "first argument must be an element"))
}

fn lww_read(st: &LwwElementSetState) -> BTreeSet<String> {
    st.a.iter()
        .filter(|(b, ts_b)| st.r.iter().all(|(b2, ts2)| b2 != b || ts2 < ts_b))
        .map(|(b, _)| b.clone())
        .collect()
}

/// Executes a method at its origin replica. Returns the value, the updated
/// state, and the local effector argument (`None` for queries).
///
/// `ts_supplier` is consulted only by LWW-element-set add/remove; it must
/// yield a timestamp strictly above every timestamp stored in `state`.
pub fn sb_do(
    kind: SbKind,
    state: &SbState,
    method: &str,
    args: &[Value],
    replica: ReplicaId,
    ts_supplier: &mut dyn FnMut() -> Timestamp,
) -> Result<(Value, SbState, Option<LocalEffectorArg>)> {
    match (kind, state) {
        (SbKind::PnCounter, SbState::Pn(st)) => {
            let slot = replica.0 as usize;
            if slot >= st.p.len() {
                return Err(Error::UnknownReplica(replica.0));
            }
            let arg = match method {
                "inc" => LocalEffectorArg::PnInc { r: replica },
                "dec" => LocalEffectorArg::PnDec { r: replica },
                "read" => {
                    let v = st.p.iter().sum::<u64>() as i64 - st.n.iter().sum::<u64>() as i64;
                    return Ok((Value::Int(v), state.clone(), None));
                }
                _ => return Err(precondition(method, "unknown pn-counter method")),
            };
            Ok((Value::Unit, sb_apply_local(kind, state, &arg)?, Some(arg)))
        }
        (SbKind::MvReg, SbState::Mv(st)) => match method {
            "write" => {
                let a = arg_str(method, args)?.to_string();
                let g = replica.0 as usize;
                if g >= st.width {
                    return Err(Error::UnknownReplica(replica.0));
                }
                let mut vv = vec![0u64; st.width];
                for (_, v) in &st.s {
                    if v.len() != st.width {
                        return Err(shape(kind));
                    }
                    for (j, x) in v.iter().enumerate() {
                        vv[j] = vv[j].max(*x);
                    }
                }
                vv[g] += 1;
                // The write overwrites everything it saw: the new state is the
                // singleton, not the dominance-filtered union.
                let arg = LocalEffectorArg::MvWrite { elem: a.clone(), vv: vv.clone() };
                let mut s = BTreeSet::new();
                s.insert((a, vv));
                Ok((Value::Unit, SbState::Mv(MvRegisterState { width: st.width, s }), Some(arg)))
            }
            "read" => {
                let vals: BTreeSet<Value> = st.s.iter().map(|(a, _)| Value::str(a)).collect();
                Ok((Value::Set(vals), state.clone(), None))
            }
            _ => Err(precondition(method, "unknown mv-reg method")),
        },
        (SbKind::TwoPSet, SbState::TwoP(st)) => match method {
            "add" => {
                let a = arg_str(method, args)?.to_string();
                let arg = LocalEffectorArg::TwoPAdd { elem: a };
                Ok((Value::Unit, sb_apply_local(kind, state, &arg)?, Some(arg)))
            }
            "remove" => {
                let a = arg_str(method, args)?.to_string();
                if !st.a.contains(&a) {
                    return Err(precondition(method, format!("{a} was never added")));
                }
                if st.r.contains(&a) {
                    return Err(precondition(method, format!("{a} already removed")));
                }
                let arg = LocalEffectorArg::TwoPRem { elem: a };
                Ok((Value::Unit, sb_apply_local(kind, state, &arg)?, Some(arg)))
            }
            "read" => {
                let vals: BTreeSet<Value> =
                    st.a.difference(&st.r).map(Value::str).collect();
                Ok((Value::Set(vals), state.clone(), None))
            }
            _ => Err(precondition(method, "unknown 2p-set method")),
        },
        (SbKind::LwwElementSet, SbState::Lww(st)) => match method {
            "add" => {
                let a = arg_str(method, args)?.to_string();
                let arg = LocalEffectorArg::LwwAdd { elem: a, ts: ts_supplier() };
                Ok((Value::Unit, sb_apply_local(kind, state, &arg)?, Some(arg)))
            }
            "remove" => {
                let a = arg_str(method, args)?.to_string();
                let arg = LocalEffectorArg::LwwRem { elem: a, ts: ts_supplier() };
                Ok((Value::Unit, sb_apply_local(kind, state, &arg)?, Some(arg)))
            }
            "read" => {
                let vals: BTreeSet<Value> = lww_read(st).into_iter().map(Value::Str).collect();
                Ok((Value::Set(vals), state.clone(), None))
            }
            _ => Err(precondition(method, "unknown lww-element-set method")),
        },
        _ => Err(shape(kind)),
    }
}

/// Applies the universal local effector `apply(σ, arg)`.
pub fn sb_apply_local(kind: SbKind, state: &SbState, arg: &LocalEffectorArg) -> Result<SbState> {
    match (kind, state, arg) {
        (SbKind::PnCounter, SbState::Pn(st), LocalEffectorArg::PnInc { r }) => {
            let mut st = st.clone();
            let slot =
                st.p.get_mut(r.0 as usize).ok_or(Error::UnknownReplica(r.0))?;
            *slot += 1;
            Ok(SbState::Pn(st))
        }
        (SbKind::PnCounter, SbState::Pn(st), LocalEffectorArg::PnDec { r }) => {
            let mut st = st.clone();
            let slot =
                st.n.get_mut(r.0 as usize).ok_or(Error::UnknownReplica(r.0))?;
            *slot += 1;
            Ok(SbState::Pn(st))
        }
        (SbKind::MvReg, SbState::Mv(st), LocalEffectorArg::MvWrite { elem, vv }) => {
            if vv.len() != st.width {
                return Err(shape(kind));
            }
            let mut s = st.s.clone();
            s.insert((elem.clone(), vv.clone()));
            let filtered: BTreeSet<(String, VersionVector)> = s
                .iter()
                .filter(|(_, v)| !s.iter().any(|(_, v2)| vv_less(v, v2)))
                .cloned()
                .collect();
            Ok(SbState::Mv(MvRegisterState { width: st.width, s: filtered }))
        }
        (SbKind::TwoPSet, SbState::TwoP(st), LocalEffectorArg::TwoPAdd { elem }) => {
            let mut st = st.clone();
            st.a.insert(elem.clone());
            Ok(SbState::TwoP(st))
        }
        (SbKind::TwoPSet, SbState::TwoP(st), LocalEffectorArg::TwoPRem { elem }) => {
            let mut st = st.clone();
            st.r.insert(elem.clone());
            Ok(SbState::TwoP(st))
        }
        (SbKind::LwwElementSet, SbState::Lww(st), LocalEffectorArg::LwwAdd { elem, ts }) => {
            let mut st = st.clone();
            st.a.insert((elem.clone(), *ts));
            Ok(SbState::Lww(st))
        }
        (SbKind::LwwElementSet, SbState::Lww(st), LocalEffectorArg::LwwRem { elem, ts }) => {
            let mut st = st.clone();
            st.r.insert((elem.clone(), *ts));
            Ok(SbState::Lww(st))
        }
        _ => Err(shape(kind)),
    }
}

/// Least-upper-bound merge of two states of the same kind.
pub fn sb_merge(kind: SbKind, s1: &SbState, s2: &SbState) -> Result<SbState> {
    match (kind, s1, s2) {
        (SbKind::PnCounter, SbState::Pn(a), SbState::Pn(b)) => {
            if a.p.len() != b.p.len() || a.n.len() != b.n.len() {
                return Err(shape(kind));
            }
            Ok(SbState::Pn(PnCounterState {
                p: a.p.iter().zip(&b.p).map(|(x, y)| *x.max(y)).collect(),
                n: a.n.iter().zip(&b.n).map(|(x, y)| *x.max(y)).collect(),
            }))
        }
        (SbKind::MvReg, SbState::Mv(a), SbState::Mv(b)) => {
            if a.width != b.width {
                return Err(shape(kind));
            }
            let keep = |from: &MvRegisterState, other: &MvRegisterState| {
                from.s
                    .iter()
                    .filter(|(_, v)| !other.s.iter().any(|(_, v2)| vv_less(v, v2)))
                    .cloned()
                    .collect::<BTreeSet<_>>()
            };
            let mut s = keep(a, b);
            s.extend(keep(b, a));
            Ok(SbState::Mv(MvRegisterState { width: a.width, s }))
        }
        (SbKind::TwoPSet, SbState::TwoP(a), SbState::TwoP(b)) => Ok(SbState::TwoP(TwoPSetState {
            a: a.a.union(&b.a).cloned().collect(),
            r: a.r.union(&b.r).cloned().collect(),
        })),
        (SbKind::LwwElementSet, SbState::Lww(a), SbState::Lww(b)) => {
            Ok(SbState::Lww(LwwElementSetState {
                a: a.a.union(&b.a).cloned().collect(),
                r: a.r.union(&b.r).cloned().collect(),
            }))
        }
        _ => Err(shape(kind)),
    }
}

/// Partial-order test: `s1 ≤ s2`.
pub fn sb_compare(kind: SbKind, s1: &SbState, s2: &SbState) -> Result<bool> {
    match (kind, s1, s2) {
        (SbKind::PnCounter, SbState::Pn(a), SbState::Pn(b)) => {
            if a.p.len() != b.p.len() || a.n.len() != b.n.len() {
                return Err(shape(kind));
            }
            Ok(a.p.iter().zip(&b.p).all(|(x, y)| x <= y)
                && a.n.iter().zip(&b.n).all(|(x, y)| x <= y))
        }
        (SbKind::MvReg, SbState::Mv(a), SbState::Mv(b)) => Ok(a.s.iter().all(|(p, v)| {
            b.s.contains(&(p.clone(), v.clone())) || b.s.iter().any(|(_, v2)| vv_less(v, v2))
        })),
        (SbKind::TwoPSet, SbState::TwoP(a), SbState::TwoP(b)) => {
            Ok(a.a.is_subset(&b.a) && a.r.is_subset(&b.r))
        }
        (SbKind::LwwElementSet, SbState::Lww(a), SbState::Lww(b)) => {
            Ok(a.a.is_subset(&b.a) && a.r.is_subset(&b.r))
        }
        _ => Err(shape(kind)),
    }
}

/// The concurrency predicate P1 of the uniquely-identified effector class:
/// the argument's identifier is not below (and not equal to) any identifier
/// already present in the state.
pub fn sb_p1(kind: SbKind, state: &SbState, arg: &LocalEffectorArg) -> Result<bool> {
    match (kind, state, arg) {
        (SbKind::MvReg, SbState::Mv(st), LocalEffectorArg::MvWrite { vv, .. }) => {
            Ok(!st.s.iter().any(|(_, v)| vv_less(vv, v) || v == vv))
        }
        (
            SbKind::LwwElementSet,
            SbState::Lww(st),
            LocalEffectorArg::LwwAdd { ts, .. } | LocalEffectorArg::LwwRem { ts, .. },
        ) => Ok(!st.a.iter().chain(&st.r).any(|(_, t)| ts <= t)),
        _ => Err(shape(kind)),
    }
}

/// The predicate P2 of the cumulative / idempotent effector classes: the
/// state was built without an application of this argument.
pub fn sb_p2(kind: SbKind, state: &SbState, arg: &LocalEffectorArg) -> Result<bool> {
    match (kind, state, arg) {
        (SbKind::PnCounter, SbState::Pn(st), LocalEffectorArg::PnInc { r }) => {
            Ok(st.p.get(r.0 as usize).copied() == Some(0))
        }
        (SbKind::PnCounter, SbState::Pn(st), LocalEffectorArg::PnDec { r }) => {
            Ok(st.n.get(r.0 as usize).copied() == Some(0))
        }
        (SbKind::TwoPSet, SbState::TwoP(st), LocalEffectorArg::TwoPAdd { elem }) => {
            Ok(!st.a.contains(elem))
        }
        (SbKind::TwoPSet, SbState::TwoP(st), LocalEffectorArg::TwoPRem { elem }) => {
            Ok(!st.r.contains(elem))
        }
        _ => Err(shape(kind)),
    }
}
