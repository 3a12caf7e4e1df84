//! Operation-based CRDTs with the generator/effector split: Counter,
//! LWW-Register, OR-Set, RGA (addAfter interface plus two addAt wrappers),
//! and Wooki.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{OpId, Sentinel, Timestamp, Ts, Value};

/// Which CRDT an object instantiates. The two addAt kinds share the RGA
/// payload; they differ only in the exposed interface (`rga-addat` returns
/// the origin's updated list from addAt/remove, `rga-addat0` returns nothing).
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CrdtKind {
    Counter,
    Lww,
    OrSet,
    Rga,
    RgaAddAt,
    RgaAddAt0,
    Wooki,
}

impl CrdtKind {
    pub fn parse(s: &str) -> Option<CrdtKind> {
        match s {
            "counter" => Some(CrdtKind::Counter),
            "lww" => Some(CrdtKind::Lww),
            "orset" => Some(CrdtKind::OrSet),
            "rga" => Some(CrdtKind::Rga),
            "rga-addat" => Some(CrdtKind::RgaAddAt),
            "rga-addat0" => Some(CrdtKind::RgaAddAt0),
            "wooki" => Some(CrdtKind::Wooki),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CrdtKind::Counter => "counter",
            CrdtKind::Lww => "lww",
            CrdtKind::OrSet => "orset",
            CrdtKind::Rga => "rga",
            CrdtKind::RgaAddAt => "rga-addat",
            CrdtKind::RgaAddAt0 => "rga-addat0",
            CrdtKind::Wooki => "wooki",
        }
    }

    /// Methods that draw a timestamp recorded on the label.
    pub fn label_timestamped(&self, method: &str) -> bool {
        matches!(
            (self, method),
            (CrdtKind::Rga | CrdtKind::RgaAddAt | CrdtKind::RgaAddAt0, "addAfter" | "addAt")
                | (CrdtKind::Lww, "write")
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct CounterState {
    pub ctr: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LwwRegisterState {
    pub value: Value,
    pub ts: Ts,
}

impl Default for LwwRegisterState {
    fn default() -> Self {
        LwwRegisterState { value: Value::Unit, ts: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct OrSetState {
    pub elems: BTreeSet<(String, OpId)>,
}

/// An RGA tree node parent: the root sentinel ∘ or another node's element.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Parent {
    Root,
    Elem(String),
}

impl Parent {
    pub fn from_value(v: &Value) -> Option<Parent> {
        match v {
            Value::Sentinel(Sentinel::Root) => Some(Parent::Root),
            Value::Str(s) => Some(Parent::Elem(s.clone())),
            _ => None,
        }
    }
}

/// The RGA timestamped tree plus tombstones: the node set stores triples
/// `(parent, timestamp, element)`; the tree shape is implied by parents.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct RgaState {
    pub nodes: BTreeSet<(Parent, Timestamp, String)>,
    pub tomb: BTreeSet<String>,
}

impl RgaState {
    pub fn contains(&self, elem: &str) -> bool {
        self.nodes.iter().any(|(_, _, e)| e == elem)
    }
}

/// Identifier of a W-character: a sentinel or the timestamp drawn at its
/// insertion. Identifier order (`<_id`) is the derived order, with Begin
/// minimal and End maximal.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WCharId {
    Begin,
    Ts(Timestamp),
    End,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WChar {
    pub id: WCharId,
    pub value: String,
    pub degree: u32,
    pub visible: bool,
}

/// Wooki's W-string, bracketed by the two sentinels (degree 0, always
/// visible, never emitted by reads).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WookiState {
    pub wstring: Vec<WChar>,
}

impl Default for WookiState {
    fn default() -> Self {
        WookiState {
            wstring: vec![
                WChar { id: WCharId::Begin, value: String::new(), degree: 0, visible: true },
                WChar { id: WCharId::End, value: String::new(), degree: 0, visible: true },
            ],
        }
    }
}

impl WookiState {
    pub fn position(&self, id: WCharId) -> Option<usize> {
        self.wstring.iter().position(|w| w.id == id)
    }

    /// Looks up a W-character by sentinel or element value (including
    /// invisible characters).
    pub fn find(&self, v: &Value) -> Option<&WChar> {
        match v {
            Value::Sentinel(Sentinel::Begin) => self.wstring.first(),
            Value::Sentinel(Sentinel::End) => self.wstring.last(),
            Value::Str(s) => self.wstring.iter().find(|w| &w.value == s && w.id != WCharId::Begin),
            _ => None,
        }
    }

    pub fn visible_values(&self) -> Vec<String> {
        self.wstring
            .iter()
            .filter(|w| w.visible && !matches!(w.id, WCharId::Begin | WCharId::End))
            .map(|w| w.value.clone())
            .collect()
    }

    /// All element values in string order, visible or not (no sentinels).
    pub fn all_values(&self) -> Vec<String> {
        self.wstring
            .iter()
            .filter(|w| !matches!(w.id, WCharId::Begin | WCharId::End))
            .map(|w| w.value.clone())
            .collect()
    }

    /// Values currently flagged invisible.
    pub fn hidden_values(&self) -> BTreeSet<String> {
        self.wstring.iter().filter(|w| !w.visible).map(|w| w.value.clone()).collect()
    }
}

/// Per-CRDT replica payload.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReplicaState {
    Counter(CounterState),
    Lww(LwwRegisterState),
    OrSet(OrSetState),
    Rga(RgaState),
    Wooki(WookiState),
}

impl ReplicaState {
    pub fn initial(kind: CrdtKind) -> ReplicaState {
        match kind {
            CrdtKind::Counter => ReplicaState::Counter(CounterState::default()),
            CrdtKind::Lww => ReplicaState::Lww(LwwRegisterState::default()),
            CrdtKind::OrSet => ReplicaState::OrSet(OrSetState::default()),
            CrdtKind::Rga | CrdtKind::RgaAddAt | CrdtKind::RgaAddAt0 => {
                ReplicaState::Rga(RgaState::default())
            }
            CrdtKind::Wooki => ReplicaState::Wooki(WookiState::default()),
        }
    }
}

/// The value captured at the origin replica that deterministically replays an
/// update at every replica. Queries produce no payload.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EffectorPayload {
    CounterInc,
    CounterDec,
    LwwWrite { value: Value, ts: Timestamp },
    OrSetAdd { elem: String, k: OpId },
    OrSetRemove { r: BTreeSet<(String, OpId)> },
    RgaAddAfter { parent: Parent, ts: Timestamp, elem: String },
    RgaRemove { elem: String },
    WookiAddBetween { w: WChar, wp: WCharId, wn: WCharId },
    WookiRemove { id: WCharId },
}

fn precondition(method: &str, reason: impl Into<String>) -> Error {
    Error::PreconditionViolated { method: method.to_string(), reason: reason.into() }
}

fn arg_str<'a>(method: &str, args: &'a [Value], i: usize) -> Result<&'a str> {
    args.get(i)
        .and_then(Value::as_str)
        .ok_or_else(|| precondition(method, format!("argument {i} must be an element")))
}

/// Pre-order traversal of the RGA tree from ∘ with siblings in strictly
/// decreasing timestamp order; tombstoned elements are omitted unless
/// `include_tomb` is set; ∘ itself is never emitted.
pub fn rga_traverse(state: &RgaState, include_tomb: bool) -> Vec<String> {
    fn visit(state: &RgaState, parent: &Parent, include_tomb: bool, out: &mut Vec<String>) {
        let mut children: Vec<(&Timestamp, &String)> = state
            .nodes
            .iter()
            .filter(|(p, _, _)| p == parent)
            .map(|(_, ts, e)| (ts, e))
            .collect();
        children.sort_by(|a, b| b.0.cmp(a.0));
        for (_, elem) in children {
            if include_tomb || !state.tomb.contains(elem) {
                out.push(elem.clone());
            }
            visit(state, &Parent::Elem(elem.clone()), include_tomb, out);
        }
    }
    let mut out = Vec::new();
    visit(state, &Parent::Root, include_tomb, &mut out);
    out
}

/// Wooki's recursive integration of a freshly generated W-character strictly
/// between `wp` and `wn`, ordering concurrent inserts by degree and then by
/// identifier order.
pub fn wooki_integrate_ins(
    state: &WookiState,
    w: WChar,
    wp: WCharId,
    wn: WCharId,
) -> Result<WookiState> {
    let mut s = state.clone();
    let p = s
        .position(wp)
        .ok_or_else(|| Error::BrokenCausality(format!("missing left neighbour {wp:?}")))?;
    let n = s
        .position(wn)
        .ok_or_else(|| Error::BrokenCausality(format!("missing right neighbour {wn:?}")))?;
    if p >= n {
        return Err(Error::BrokenCausality("left neighbour not before right neighbour".into()));
    }
    let between: Vec<WChar> = s.wstring[p + 1..n].to_vec();
    if between.is_empty() {
        s.wstring.insert(n, w);
        return Ok(s);
    }
    let d_min = between.iter().map(|c| c.degree).min().unwrap();
    let f: Vec<&WChar> = between.iter().filter(|c| c.degree == d_min).collect();
    if w.id < f[0].id {
        let next = f[0].id;
        return wooki_integrate_ins(state, w, wp, next);
    }
    let mut i = 0usize;
    while i < f.len() - 1 && f[i].id < w.id {
        i += 1;
    }
    if i == f.len() - 1 && f[i].id < w.id {
        let prev = f[i].id;
        wooki_integrate_ins(state, w, prev, wn)
    } else {
        let prev = f[i - 1].id;
        let next = f[i].id;
        wooki_integrate_ins(state, w, prev, next)
    }
}

/// The addAt wrappers' anchor computation: the element after which the insert
/// lands, given the local list content and the requested index.
fn add_at_anchor(list: &[String], k: i64) -> Parent {
    if list.is_empty() || k <= 0 {
        Parent::Root
    } else if (list.len() as i64) >= k {
        Parent::Elem(list[(k - 1) as usize].clone())
    } else {
        Parent::Elem(list.last().unwrap().clone())
    }
}

/// Runs the origin-replica half of an operation: checks the method
/// precondition on the local state, produces the return value, the effector
/// payload (None for queries), and the drawn timestamp (⊥ when the method is
/// not timestamp-generating).
///
/// `ts_supplier` must yield a timestamp strictly greater than every timestamp
/// stored in `state`; the runtime guarantees this.
pub fn apply_generator(
    kind: CrdtKind,
    state: &ReplicaState,
    method: &str,
    args: &[Value],
    fresh_id: OpId,
    ts_supplier: &mut dyn FnMut() -> Timestamp,
) -> Result<(Value, Option<EffectorPayload>, Ts)> {
    match (kind, state) {
        (CrdtKind::Counter, ReplicaState::Counter(st)) => match method {
            "inc" => Ok((Value::Unit, Some(EffectorPayload::CounterInc), None)),
            "dec" => Ok((Value::Unit, Some(EffectorPayload::CounterDec), None)),
            "read" => Ok((Value::Int(st.ctr), None, None)),
            _ => Err(precondition(method, "unknown counter method")),
        },
        (CrdtKind::Lww, ReplicaState::Lww(st)) => match method {
            "write" => {
                let v = args
                    .first()
                    .cloned()
                    .ok_or_else(|| precondition(method, "write takes one argument"))?;
                let ts = ts_supplier();
                Ok((Value::Unit, Some(EffectorPayload::LwwWrite { value: v, ts }), Some(ts)))
            }
            "read" => Ok((st.value.clone(), None, None)),
            _ => Err(precondition(method, "unknown register method")),
        },
        (CrdtKind::OrSet, ReplicaState::OrSet(st)) => match method {
            "add" => {
                let a = arg_str(method, args, 0)?.to_string();
                Ok((
                    Value::Id(fresh_id),
                    Some(EffectorPayload::OrSetAdd { elem: a, k: fresh_id }),
                    None,
                ))
            }
            "remove" => {
                let a = arg_str(method, args, 0)?;
                let r: BTreeSet<(String, OpId)> =
                    st.elems.iter().filter(|(e, _)| e == a).cloned().collect();
                let ret = Value::Set(
                    r.iter().map(|(e, k)| Value::pair(Value::str(e), Value::Id(*k))).collect(),
                );
                Ok((ret, Some(EffectorPayload::OrSetRemove { r }), None))
            }
            "read" => {
                let vals: BTreeSet<Value> =
                    st.elems.iter().map(|(e, _)| Value::str(e)).collect();
                Ok((Value::Set(vals), None, None))
            }
            _ => Err(precondition(method, "unknown or-set method")),
        },
        (CrdtKind::Rga | CrdtKind::RgaAddAt | CrdtKind::RgaAddAt0, ReplicaState::Rga(st)) => {
            rga_generator(kind, st, method, args, ts_supplier)
        }
        (CrdtKind::Wooki, ReplicaState::Wooki(st)) => match method {
            "addBetween" => {
                let a = args.first().ok_or_else(|| precondition(method, "missing argument a"))?;
                let b = arg_str(method, args, 1)?.to_string();
                let c = args.get(2).ok_or_else(|| precondition(method, "missing argument c"))?;
                if matches!(a, Value::Sentinel(Sentinel::End)) {
                    return Err(precondition(method, "a must not be the right sentinel"));
                }
                if matches!(c, Value::Sentinel(Sentinel::Begin)) {
                    return Err(precondition(method, "c must not be the left sentinel"));
                }
                let wp = st.find(a).ok_or_else(|| precondition(method, "a not in string"))?;
                let wn = st.find(c).ok_or_else(|| precondition(method, "c not in string"))?;
                let (pp, pn) = (st.position(wp.id).unwrap(), st.position(wn.id).unwrap());
                if pn <= pp {
                    return Err(precondition(method, "c must occur after a"));
                }
                if st.find(&Value::str(&b)).is_some() {
                    return Err(precondition(method, "b already in string"));
                }
                let ts = ts_supplier();
                let w = WChar {
                    id: WCharId::Ts(ts),
                    value: b,
                    degree: wp.degree.max(wn.degree) + 1,
                    visible: true,
                };
                // The label itself is not timestamped (the W-char id lives in
                // the payload); execution-order checking never needs it.
                Ok((
                    Value::Unit,
                    Some(EffectorPayload::WookiAddBetween { w, wp: wp.id, wn: wn.id }),
                    None,
                ))
            }
            "remove" => {
                let a = arg_str(method, args, 0)?;
                let w = st
                    .find(&Value::str(a))
                    .ok_or_else(|| precondition(method, "element not in string"))?;
                Ok((Value::Unit, Some(EffectorPayload::WookiRemove { id: w.id }), None))
            }
            "read" => {
                let vals = st.visible_values().into_iter().map(Value::Str).collect();
                Ok((Value::List(vals), None, None))
            }
            _ => Err(precondition(method, "unknown wooki method")),
        },
        _ => Err(Error::ShapeMismatch(format!("state does not match kind {}", kind.name()))),
    }
}

fn rga_generator(
    kind: CrdtKind,
    st: &RgaState,
    method: &str,
    args: &[Value],
    ts_supplier: &mut dyn FnMut() -> Timestamp,
) -> Result<(Value, Option<EffectorPayload>, Ts)> {
    let read_list =
        |s: &RgaState| Value::List(rga_traverse(s, false).into_iter().map(Value::Str).collect());
    match (kind, method) {
        (CrdtKind::Rga, "addAfter") => {
            let parent = args
                .first()
                .and_then(Parent::from_value)
                .ok_or_else(|| precondition(method, "first argument must be ∘ or an element"))?;
            let elem = arg_str(method, args, 1)?.to_string();
            if let Parent::Elem(a) = &parent {
                if !st.contains(a) {
                    return Err(precondition(method, format!("parent {a} not present")));
                }
                if st.tomb.contains(a) {
                    return Err(precondition(method, format!("parent {a} is tombstoned")));
                }
            }
            if st.contains(&elem) {
                return Err(precondition(method, format!("element {elem} already present")));
            }
            let ts = ts_supplier();
            Ok((Value::Unit, Some(EffectorPayload::RgaAddAfter { parent, ts, elem }), Some(ts)))
        }
        (CrdtKind::Rga, "remove") | (CrdtKind::RgaAddAt0, "remove") => {
            let elem = arg_str(method, args, 0)?.to_string();
            if !st.contains(&elem) {
                return Err(precondition(method, format!("element {elem} not present")));
            }
            if st.tomb.contains(&elem) {
                return Err(precondition(method, format!("element {elem} already removed")));
            }
            Ok((Value::Unit, Some(EffectorPayload::RgaRemove { elem }), None))
        }
        (CrdtKind::RgaAddAt | CrdtKind::RgaAddAt0, "addAt") => {
            let elem = arg_str(method, args, 0)?.to_string();
            let k = args
                .get(1)
                .and_then(Value::as_int)
                .ok_or_else(|| precondition(method, "second argument must be an index"))?;
            if st.contains(&elem) {
                return Err(precondition(method, format!("element {elem} already present")));
            }
            let list = rga_traverse(st, false);
            let parent = add_at_anchor(&list, k);
            let ts = ts_supplier();
            let payload = EffectorPayload::RgaAddAfter { parent, ts, elem };
            let ret = if kind == CrdtKind::RgaAddAt {
                let updated = apply_effector_rga(st.clone(), &payload)?;
                read_list(&updated)
            } else {
                Value::Unit
            };
            Ok((ret, Some(payload), Some(ts)))
        }
        (CrdtKind::RgaAddAt, "remove") => {
            let elem = arg_str(method, args, 0)?.to_string();
            if !st.contains(&elem) || st.tomb.contains(&elem) {
                return Err(precondition(method, format!("element {elem} not in list")));
            }
            let payload = EffectorPayload::RgaRemove { elem };
            let updated = apply_effector_rga(st.clone(), &payload)?;
            Ok((read_list(&updated), Some(payload), None))
        }
        (_, "read") => Ok((read_list(st), None, None)),
        _ => Err(precondition(method, format!("unknown method for {}", kind.name()))),
    }
}

fn apply_effector_rga(mut st: RgaState, payload: &EffectorPayload) -> Result<RgaState> {
    match payload {
        EffectorPayload::RgaAddAfter { parent, ts, elem } => {
            if let Parent::Elem(a) = parent {
                if !st.contains(a) {
                    return Err(Error::BrokenCausality(format!("parent {a} absent")));
                }
            }
            if st.contains(elem) {
                return Err(Error::BrokenCausality(format!("element {elem} duplicated")));
            }
            st.nodes.insert((parent.clone(), *ts, elem.clone()));
            Ok(st)
        }
        EffectorPayload::RgaRemove { elem } => {
            if !st.contains(elem) {
                return Err(Error::BrokenCausality(format!("removed element {elem} absent")));
            }
            st.tomb.insert(elem.clone());
            Ok(st)
        }
        _ => unreachable!("non-RGA payload routed to RGA state"),
    }
}

/// Applies an effector payload at a replica. Deterministic and independent of
/// the receiving replica's identity; referenced elements must already be
/// present (causal delivery guarantees this in well-formed runs).
pub fn apply_effector(
    kind: CrdtKind,
    state: &ReplicaState,
    payload: &EffectorPayload,
) -> Result<ReplicaState> {
    match (kind, state, payload) {
        (CrdtKind::Counter, ReplicaState::Counter(st), EffectorPayload::CounterInc) => {
            Ok(ReplicaState::Counter(CounterState { ctr: st.ctr + 1 }))
        }
        (CrdtKind::Counter, ReplicaState::Counter(st), EffectorPayload::CounterDec) => {
            Ok(ReplicaState::Counter(CounterState { ctr: st.ctr - 1 }))
        }
        (CrdtKind::Lww, ReplicaState::Lww(st), EffectorPayload::LwwWrite { value, ts }) => {
            let mut st = st.clone();
            if st.ts < Some(*ts) {
                st.value = value.clone();
                st.ts = Some(*ts);
            }
            Ok(ReplicaState::Lww(st))
        }
        (CrdtKind::OrSet, ReplicaState::OrSet(st), EffectorPayload::OrSetAdd { elem, k }) => {
            let mut st = st.clone();
            st.elems.insert((elem.clone(), *k));
            Ok(ReplicaState::OrSet(st))
        }
        (CrdtKind::OrSet, ReplicaState::OrSet(st), EffectorPayload::OrSetRemove { r }) => {
            let mut st = st.clone();
            st.elems = st.elems.difference(r).cloned().collect();
            Ok(ReplicaState::OrSet(st))
        }
        (
            CrdtKind::Rga | CrdtKind::RgaAddAt | CrdtKind::RgaAddAt0,
            ReplicaState::Rga(st),
            p @ (EffectorPayload::RgaAddAfter { .. } | EffectorPayload::RgaRemove { .. }),
        ) => Ok(ReplicaState::Rga(apply_effector_rga(st.clone(), p)?)),
        (
            CrdtKind::Wooki,
            ReplicaState::Wooki(st),
            EffectorPayload::WookiAddBetween { w, wp, wn },
        ) => Ok(ReplicaState::Wooki(wooki_integrate_ins(st, w.clone(), *wp, *wn)?)),
        (CrdtKind::Wooki, ReplicaState::Wooki(st), EffectorPayload::WookiRemove { id }) => {
            let mut st = st.clone();
            let pos = st
                .position(*id)
                .ok_or_else(|| Error::BrokenCausality("removed W-char absent".into()))?;
            st.wstring[pos].visible = false;
            Ok(ReplicaState::Wooki(st))
        }
        _ => Err(Error::ShapeMismatch(format!(
            "payload does not match kind {} / state",
            kind.name()
        ))),
    }
}
