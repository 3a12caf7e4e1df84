//! Executable sequential specifications (abstract state machines) and
//! query-update rewritings.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{History, OpId, OperationLabel, Sentinel, Value};

/// The shipped specifications, selectable by name.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeqSpec {
    Counter,
    Register,
    Set,
    OrSet,
    Rga,
    Wooki,
    AddAt1,
    AddAt2,
    AddAt3,
    MvReg,
}

impl SeqSpec {
    pub fn parse(s: &str) -> Option<SeqSpec> {
        match s {
            "counter" => Some(SeqSpec::Counter),
            "register" => Some(SeqSpec::Register),
            "set" => Some(SeqSpec::Set),
            "orset" => Some(SeqSpec::OrSet),
            "rga" => Some(SeqSpec::Rga),
            "wooki" => Some(SeqSpec::Wooki),
            "addat1" => Some(SeqSpec::AddAt1),
            "addat2" => Some(SeqSpec::AddAt2),
            "addat3" => Some(SeqSpec::AddAt3),
            "mv-reg" => Some(SeqSpec::MvReg),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SeqSpec::Counter => "counter",
            SeqSpec::Register => "register",
            SeqSpec::Set => "set",
            SeqSpec::OrSet => "orset",
            SeqSpec::Rga => "rga",
            SeqSpec::Wooki => "wooki",
            SeqSpec::AddAt1 => "addat1",
            SeqSpec::AddAt2 => "addat2",
            SeqSpec::AddAt3 => "addat3",
            SeqSpec::MvReg => "mv-reg",
        }
    }
}

/// Operation class relative to a specification: queries never change the
/// abstract state; an update's state change and return value are independent
/// of the pre-state; query-updates are neither.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpClass {
    Query,
    Update,
    QueryUpdate,
}

/// Abstract states of the shipped specifications.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AbsState {
    Counter(i64),
    Register(Value),
    Set(BTreeSet<String>),
    OrSet(BTreeSet<(String, OpId)>),
    /// Tombstone-free list (addAt1).
    List(Vec<String>),
    /// List plus tombstone set (RGA, Wooki, addAt2, addAt3). Sentinels are
    /// implicit at the two ends and never stored.
    ListT { l: Vec<String>, t: BTreeSet<String> },
    /// Set of (value, version-vector-as-int-list) pairs.
    MvReg(BTreeSet<(String, Vec<i64>)>),
}

impl SeqSpec {
    pub fn initial(&self) -> AbsState {
        match self {
            SeqSpec::Counter => AbsState::Counter(0),
            SeqSpec::Register => AbsState::Register(Value::Unit),
            SeqSpec::Set => AbsState::Set(BTreeSet::new()),
            SeqSpec::OrSet => AbsState::OrSet(BTreeSet::new()),
            SeqSpec::AddAt1 => AbsState::List(Vec::new()),
            SeqSpec::Rga | SeqSpec::Wooki | SeqSpec::AddAt2 | SeqSpec::AddAt3 => {
                AbsState::ListT { l: Vec::new(), t: BTreeSet::new() }
            }
            SeqSpec::MvReg => AbsState::MvReg(BTreeSet::new()),
        }
    }

    /// Classifies a label. OR-Set `remove` is a query-update in its raw form
    /// (string argument, returns the removed pairs) and an update once
    /// rewritten (set argument, unit return).
    pub fn classify(&self, label: &OperationLabel) -> Result<OpClass> {
        let m = label.method.as_str();
        let class = match (self, m) {
            (_, "read") => OpClass::Query,
            (SeqSpec::Counter, "inc" | "dec") => OpClass::Update,
            (SeqSpec::Register | SeqSpec::MvReg, "write") => OpClass::Update,
            (SeqSpec::Set, "add" | "remove") => OpClass::Update,
            (SeqSpec::OrSet, "add") => OpClass::Update,
            (SeqSpec::OrSet, "readIds") => OpClass::Query,
            (SeqSpec::OrSet, "remove") => match label.args.first() {
                Some(Value::Set(_)) => OpClass::Update,
                _ => OpClass::QueryUpdate,
            },
            (SeqSpec::Rga, "addAfter" | "remove") => OpClass::Update,
            (SeqSpec::Wooki, "addBetween" | "remove") => OpClass::Update,
            (SeqSpec::AddAt1 | SeqSpec::AddAt2 | SeqSpec::AddAt3, "addAt" | "remove") => {
                OpClass::Update
            }
            _ => {
                return Err(Error::Invalid(format!(
                    "method {m} unknown to spec {}",
                    self.name()
                )))
            }
        };
        Ok(class)
    }
}

fn str_arg(label: &OperationLabel, i: usize) -> Option<&str> {
    label.args.get(i).and_then(Value::as_str)
}

fn list_ret(label: &OperationLabel) -> Option<Vec<String>> {
    match &label.ret {
        Value::List(xs) => xs.iter().map(|x| x.as_str().map(str::to_string)).collect(),
        _ => None,
    }
}

fn visible(l: &[String], t: &BTreeSet<String>) -> Vec<String> {
    l.iter().filter(|e| !t.contains(*e)).cloned().collect()
}

fn list_value(xs: &[String]) -> Value {
    Value::List(xs.iter().map(Value::str).collect())
}

fn set_value<'a>(xs: impl Iterator<Item = &'a String>) -> Value {
    Value::Set(xs.map(Value::str).collect())
}

/// True iff `xs` is a (not necessarily contiguous) subsequence of `ys`.
pub fn subsequence_of(xs: &[String], ys: &[String]) -> bool {
    let mut it = ys.iter();
    xs.iter().all(|x| it.any(|y| y == x))
}

/// Applies one labeled transition. The empty set means the label is not
/// admitted at this state; nondeterministic specs may return several states.
pub fn spec_step(spec: SeqSpec, state: &AbsState, label: &OperationLabel) -> BTreeSet<AbsState> {
    let mut out = BTreeSet::new();
    let m = label.method.as_str();
    match (spec, state) {
        (SeqSpec::Counter, AbsState::Counter(c)) => match m {
            "inc" if label.ret == Value::Unit => {
                out.insert(AbsState::Counter(c + 1));
            }
            "dec" if label.ret == Value::Unit => {
                out.insert(AbsState::Counter(c - 1));
            }
            "read" if label.ret == Value::Int(*c) => {
                out.insert(state.clone());
            }
            _ => {}
        },
        (SeqSpec::Register, AbsState::Register(v)) => match m {
            "write" if label.ret == Value::Unit => {
                if let Some(a) = label.args.first() {
                    out.insert(AbsState::Register(a.clone()));
                }
            }
            "read" if &label.ret == v => {
                out.insert(state.clone());
            }
            _ => {}
        },
        (SeqSpec::Set, AbsState::Set(s)) => match m {
            // Returns of add/remove are not modelled: the identity rewriting
            // checks raw OR-Set removes (which return the removed pairs) as
            // atomic Set removes.
            "add" | "remove" => {
                if let Some(a) = str_arg(label, 0) {
                    let mut s = s.clone();
                    if m == "add" {
                        s.insert(a.to_string());
                    } else {
                        s.remove(a);
                    }
                    out.insert(AbsState::Set(s));
                }
            }
            "read" if label.ret == set_value(s.iter()) => {
                out.insert(state.clone());
            }
            _ => {}
        },
        (SeqSpec::OrSet, AbsState::OrSet(s)) => match m {
            "add" => {
                if let (Some(a), Value::Id(k)) = (str_arg(label, 0), &label.ret) {
                    let pair = (a.to_string(), *k);
                    if !s.contains(&pair) {
                        let mut s = s.clone();
                        s.insert(pair);
                        out.insert(AbsState::OrSet(s));
                    }
                }
            }
            "readIds" => {
                if let Some(a) = str_arg(label, 0) {
                    let expected = Value::Set(
                        s.iter()
                            .filter(|(e, _)| e == a)
                            .map(|(e, k)| Value::pair(Value::str(e), Value::Id(*k)))
                            .collect(),
                    );
                    if label.ret == expected {
                        out.insert(state.clone());
                    }
                }
            }
            "remove" if label.ret == Value::Unit => {
                if let Some(Value::Set(r)) = label.args.first() {
                    let mut s = s.clone();
                    for v in r {
                        if let Value::Pair(a, k) = v {
                            if let (Some(e), Value::Id(k)) = (a.as_str(), k.as_ref()) {
                                s.remove(&(e.to_string(), *k));
                            }
                        }
                    }
                    out.insert(AbsState::OrSet(s));
                }
            }
            "read" => {
                let expected: BTreeSet<Value> = s.iter().map(|(e, _)| Value::str(e)).collect();
                if label.ret == Value::Set(expected) {
                    out.insert(state.clone());
                }
            }
            _ => {}
        },
        (SeqSpec::Rga, AbsState::ListT { l, t }) => match m {
            "addAfter" if label.ret == Value::Unit => {
                let a = str_arg(label, 1);
                let anchor = label.args.first();
                if let (Some(anchor), Some(a)) = (anchor, a) {
                    if !l.contains(&a.to_string()) {
                        let pos = match anchor {
                            Value::Sentinel(Sentinel::Root) => Some(0),
                            Value::Str(b) => l.iter().position(|e| e == b).map(|i| i + 1),
                            _ => None,
                        };
                        if let Some(pos) = pos {
                            let mut l = l.clone();
                            l.insert(pos, a.to_string());
                            out.insert(AbsState::ListT { l, t: t.clone() });
                        }
                    }
                }
            }
            "remove" if label.ret == Value::Unit => {
                if let Some(b) = str_arg(label, 0) {
                    if l.contains(&b.to_string()) {
                        let mut t = t.clone();
                        t.insert(b.to_string());
                        out.insert(AbsState::ListT { l: l.clone(), t });
                    }
                }
            }
            "read" if label.ret == list_value(&visible(l, t)) => {
                out.insert(state.clone());
            }
            _ => {}
        },
        (SeqSpec::Wooki, AbsState::ListT { l, t }) => match m {
            "addBetween" if label.ret == Value::Unit => {
                let b = str_arg(label, 1);
                let (a, c) = (label.args.first(), label.args.get(2));
                if let (Some(a), Some(b), Some(c)) = (a, b, c) {
                    if !l.contains(&b.to_string()) {
                        // Position of the left anchor (index before which
                        // nothing may be inserted) and the right anchor.
                        let pa = match a {
                            Value::Sentinel(Sentinel::Begin) => Some(0),
                            Value::Str(e) => l.iter().position(|x| x == e).map(|i| i + 1),
                            _ => None,
                        };
                        let pc = match c {
                            Value::Sentinel(Sentinel::End) => Some(l.len()),
                            Value::Str(e) => l.iter().position(|x| x == e),
                            _ => None,
                        };
                        if let (Some(pa), Some(pc)) = (pa, pc) {
                            for i in pa..=pc {
                                let mut l = l.clone();
                                l.insert(i, b.to_string());
                                out.insert(AbsState::ListT { l, t: t.clone() });
                            }
                        }
                    }
                }
            }
            "remove" if label.ret == Value::Unit => {
                if let Some(a) = str_arg(label, 0) {
                    if l.contains(&a.to_string()) {
                        let mut t = t.clone();
                        t.insert(a.to_string());
                        out.insert(AbsState::ListT { l: l.clone(), t });
                    }
                }
            }
            "read" if label.ret == list_value(&visible(l, t)) => {
                out.insert(state.clone());
            }
            _ => {}
        },
        (SeqSpec::AddAt1, AbsState::List(l)) => match m {
            "addAt" if label.ret == Value::Unit => {
                let a = str_arg(label, 0);
                let k = label.args.get(1).and_then(Value::as_int);
                if let (Some(a), Some(k)) = (a, k) {
                    if !l.contains(&a.to_string()) {
                        let mut l = l.clone();
                        let pos = k.clamp(0, l.len() as i64) as usize;
                        l.insert(pos, a.to_string());
                        out.insert(AbsState::List(l));
                    }
                }
            }
            "remove" if label.ret == Value::Unit => {
                if let Some(a) = str_arg(label, 0) {
                    if let Some(pos) = l.iter().position(|e| e == a) {
                        let mut l = l.clone();
                        l.remove(pos);
                        out.insert(AbsState::List(l));
                    }
                }
            }
            "read" if label.ret == list_value(l) => {
                out.insert(state.clone());
            }
            _ => {}
        },
        (SeqSpec::AddAt2, AbsState::ListT { l, t }) => match m {
            "addAt" if label.ret == Value::Unit => {
                let a = str_arg(label, 0);
                let k = label.args.get(1).and_then(Value::as_int);
                if let (Some(a), Some(k)) = (a, k) {
                    if !l.contains(&a.to_string()) {
                        let k = k.max(0) as usize;
                        let vis_len = visible(l, t).len();
                        if vis_len < k {
                            let mut l = l.clone();
                            l.push(a.to_string());
                            out.insert(AbsState::ListT { l, t: t.clone() });
                        } else {
                            // Any raw position whose visible prefix has
                            // length k.
                            for i in 0..=l.len() {
                                if visible(&l[..i], t).len() == k {
                                    let mut l = l.clone();
                                    l.insert(i, a.to_string());
                                    out.insert(AbsState::ListT { l, t: t.clone() });
                                }
                            }
                        }
                    }
                }
            }
            "remove" if label.ret == Value::Unit => {
                if let Some(a) = str_arg(label, 0) {
                    if l.contains(&a.to_string()) {
                        let mut t = t.clone();
                        t.insert(a.to_string());
                        out.insert(AbsState::ListT { l: l.clone(), t });
                    }
                }
            }
            "read" if label.ret == list_value(&visible(l, t)) => {
                out.insert(state.clone());
            }
            _ => {}
        },
        (SeqSpec::AddAt3, AbsState::ListT { l, t }) => match m {
            "addAt" => {
                let a = str_arg(label, 0).map(str::to_string);
                let k = label.args.get(1).and_then(Value::as_int);
                let ret = list_ret(label);
                if let (Some(a), Some(k), Some(ret)) = (a, k, ret) {
                    if !l.contains(&a) {
                        if let Some(l2) = addat3_insert(l, &a, k, &ret) {
                            out.insert(AbsState::ListT { l: l2, t: t.clone() });
                        }
                    }
                }
            }
            "remove" => {
                let a = str_arg(label, 0).map(str::to_string);
                let ret = list_ret(label);
                if let (Some(a), Some(ret)) = (a, ret) {
                    if l.contains(&a) && !ret.contains(&a) && subsequence_of(&ret, l) {
                        let mut t = t.clone();
                        t.insert(a);
                        out.insert(AbsState::ListT { l: l.clone(), t });
                    }
                }
            }
            "read" if label.ret == list_value(&visible(l, t)) => {
                out.insert(state.clone());
            }
            _ => {}
        },
        (SeqSpec::MvReg, AbsState::MvReg(s)) => match m {
            "write" if label.ret == Value::Unit => {
                let a = str_arg(label, 0);
                let vv: Option<Vec<i64>> = match label.args.get(1) {
                    Some(Value::List(xs)) => xs.iter().map(Value::as_int).collect(),
                    _ => None,
                };
                if let (Some(a), Some(vv)) = (a, vv) {
                    let less = |x: &[i64], y: &[i64]| {
                        x.len() == y.len()
                            && x.iter().zip(y).all(|(p, q)| p <= q)
                            && x.iter().zip(y).any(|(p, q)| p < q)
                    };
                    if !s.iter().any(|(_, v)| less(&vv, v) || *v == vv) {
                        let filtered: BTreeSet<(String, Vec<i64>)> =
                            s.iter().filter(|(_, v)| !less(v, &vv)).cloned().collect();
                        let mut filtered = filtered;
                        filtered.insert((a.to_string(), vv));
                        out.insert(AbsState::MvReg(filtered));
                    }
                }
            }
            "read" => {
                let expected: BTreeSet<Value> = s.iter().map(|(e, _)| Value::str(e)).collect();
                if label.ret == Value::Set(expected) {
                    out.insert(state.clone());
                }
            }
            _ => {}
        },
        _ => {}
    }
    out
}

/// Validates an addAt return sequence against the current abstract list and
/// produces the updated list, per the sub-sequence witness rules: the
/// returned sequence pins the insertion anchor, a prefix of it must embed
/// into the list up to the anchor, and the suffix after the new element.
fn addat3_insert(l: &[String], a: &str, k: i64, ret: &[String]) -> Option<Vec<String>> {
    let occurrences = ret.iter().filter(|e| e.as_str() == a).count();
    if occurrences != 1 {
        return None;
    }
    let i = ret.iter().position(|e| e == a).unwrap();
    if i == 0 {
        // Front insertion: the origin's list was empty (singleton return) or
        // the requested index was ≤ 0.
        let admissible = ret.len() == 1 || (k <= 0 && subsequence_of(&ret[1..], l));
        if !admissible {
            return None;
        }
        let mut l2 = l.to_vec();
        l2.insert(0, a.to_string());
        return Some(l2);
    }
    // Anchor element: the one just before a in the returned sequence.
    let b = &ret[i - 1];
    let index_ok = (i as i64) == k || ((i as i64) < k && i == ret.len() - 1);
    if !index_ok {
        return None;
    }
    let pos_b = l.iter().position(|e| e == b)?;
    if !subsequence_of(&ret[..i - 1], &l[..pos_b]) {
        return None;
    }
    if !subsequence_of(&ret[i + 1..], &l[pos_b + 1..]) {
        return None;
    }
    let mut l2 = l.to_vec();
    l2.insert(pos_b + 1, a.to_string());
    Some(l2)
}

/// Steps a whole frontier of states by one label.
pub fn spec_step_set(
    spec: SeqSpec,
    states: &BTreeSet<AbsState>,
    label: &OperationLabel,
) -> BTreeSet<AbsState> {
    states.iter().flat_map(|s| spec_step(spec, s, label)).collect()
}

/// True iff some chain of transitions from the initial state consumes the
/// whole sequence (existential over nondeterministic branches).
pub fn spec_accepts_sequence(spec: SeqSpec, seq: &[&OperationLabel]) -> bool {
    let mut states: BTreeSet<AbsState> = BTreeSet::new();
    states.insert(spec.initial());
    for label in seq {
        states = spec_step_set(spec, &states, label);
        if states.is_empty() {
            return false;
        }
    }
    true
}

/// Query-update rewritings γ. `Identity` leaves the history alone (use it
/// when the paired spec treats every method as a query or an update).
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuRewriting {
    Identity,
    OrSetRemove,
}

impl QuRewriting {
    pub fn parse(s: &str) -> Option<QuRewriting> {
        match s {
            "identity" => Some(QuRewriting::Identity),
            "orset" => Some(QuRewriting::OrSetRemove),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            QuRewriting::Identity => "identity",
            QuRewriting::OrSetRemove => "orset",
        }
    }
}

/// Rewrites every query-update label into its (query, update) pair and
/// reroutes visibility: the query half sees exactly what the original label
/// saw, anything that saw the original sees the update half, and the query
/// half precedes the update half.
pub fn qu_rewrite(h: &History, gamma: QuRewriting) -> Result<History> {
    qu_rewrite_with(h, &|_| gamma)
}

/// Multi-object variant: each object carries its own rewriting.
pub fn qu_rewrite_multi(
    h: &History,
    gammas: &std::collections::BTreeMap<String, QuRewriting>,
) -> Result<History> {
    for label in h.labels.values() {
        if !gammas.contains_key(&label.object) {
            return Err(Error::UnknownObject(label.object.clone()));
        }
    }
    qu_rewrite_with(h, &|object| gammas[object])
}

fn qu_rewrite_with(h: &History, gamma_of: &dyn Fn(&str) -> QuRewriting) -> Result<History> {
    // OrSetRemove: split remove(a) ⇒ R into readIds(a) ⇒ R · remove(R) ⇒ ().
    let mut out = History::default();
    let mut split: BTreeSet<OpId> = BTreeSet::new();
    for (id, label) in &h.labels {
        let is_qu = gamma_of(&label.object) == QuRewriting::OrSetRemove
            && label.method == "remove"
            && matches!(label.args.first(), Some(Value::Str(_)));
        if is_qu {
            let a = label.args[0].clone();
            if !matches!(label.ret, Value::Set(_)) {
                return Err(Error::MissingRewrite(label.to_string()));
            }
            split.insert(*id);
            let qid = id.rewrite_query_half();
            out.labels.insert(
                qid,
                OperationLabel {
                    object: label.object.clone(),
                    method: "readIds".into(),
                    args: vec![a],
                    ret: label.ret.clone(),
                    id: qid,
                    ts: None,
                },
            );
            out.labels.insert(
                *id,
                OperationLabel {
                    object: label.object.clone(),
                    method: "remove".into(),
                    args: vec![label.ret.clone()],
                    ret: Value::Unit,
                    id: *id,
                    ts: label.ts,
                },
            );
            out.vis.insert((qid, *id));
        } else {
            out.labels.insert(*id, label.clone());
        }
    }
    for (x, y) in &h.vis {
        let last_x = *x; // update half keeps the original id
        let first_y = if split.contains(y) { y.rewrite_query_half() } else { *y };
        out.vis.insert((last_x, first_y));
    }
    Ok(out)
}
