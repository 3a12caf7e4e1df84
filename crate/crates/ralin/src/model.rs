//! Foundational value types shared by all modules: labels, timestamps,
//! identifiers, visibility relations, histories, and traces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A replica identifier. Totally ordered; stable for the lifetime of a run.
/// The order doubles as the tie-break order among replicas.
#[derive(
    Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct ReplicaId(pub u32);

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// A Lamport timestamp: `(counter, origin)` ordered lexicographically, so two
/// timestamps with equal counters are tie-broken by the replica order.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub counter: u64,
    pub origin: ReplicaId,
}

impl Timestamp {
    pub fn new(counter: u64, origin: ReplicaId) -> Self {
        Timestamp { counter, origin }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.counter, self.origin)
    }
}

/// A timestamp or the distinguished minimal element ⊥. `Option`'s derived
/// order places `None` strictly below every `Some`, which is exactly the
/// required order with ⊥ minimal.
pub type Ts = Option<Timestamp>;

/// Strict order on timestamps-or-⊥ with ⊥ minimal.
pub fn ts_less(a: Ts, b: Ts) -> bool {
    a < b
}

/// A globally unique operation identifier: `(origin replica, per-run counter)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OpId {
    pub origin: ReplicaId,
    pub seq: u64,
}

impl OpId {
    pub fn new(origin: ReplicaId, seq: u64) -> Self {
        OpId { origin, seq }
    }

    /// Tag bit used for the query half of a rewritten query-update label.
    /// Runtime sequence counters stay far below 2^32, so this cannot collide.
    pub const REWRITE_TAG: u64 = 1 << 32;

    /// The id given to the query half produced by a query-update rewriting.
    pub fn rewrite_query_half(self) -> OpId {
        OpId { origin: self.origin, seq: self.seq | Self::REWRITE_TAG }
    }
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.seq & Self::REWRITE_TAG != 0 {
            write!(f, "{}.{}q", self.origin.0, self.seq & !Self::REWRITE_TAG)
        } else {
            write!(f, "{}.{}", self.origin.0, self.seq)
        }
    }
}

/// Sentinel elements used by the list CRDTs.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sentinel {
    /// The RGA tree root ∘.
    Root,
    /// Wooki's left sentinel.
    Begin,
    /// Wooki's right sentinel.
    End,
}

impl fmt::Display for Sentinel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sentinel::Root => write!(f, "*"),
            Sentinel::Begin => write!(f, "*b"),
            Sentinel::End => write!(f, "*e"),
        }
    }
}

/// Argument / return values carried by operation labels.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Unit,
    Int(i64),
    Str(String),
    Sentinel(Sentinel),
    Id(OpId),
    Pair(Box<Value>, Box<Value>),
    List(Vec<Value>),
    Set(BTreeSet<Value>),
}

impl Value {
    pub fn str(s: impl Into<String>) -> Value {
        Value::Str(s.into())
    }

    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Box::new(a), Box::new(b))
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => write!(f, "()"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write!(f, "{s}"),
            Value::Sentinel(s) => write!(f, "{s}"),
            Value::Id(id) => write!(f, "id({id})"),
            Value::Pair(a, b) => write!(f, "({a},{b})"),
            Value::List(xs) => {
                write!(f, "[")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "]")
            }
            Value::Set(xs) => {
                write!(f, "{{")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// One method invocation: object, method, arguments, return value, unique id,
/// and the timestamp drawn by the generator (⊥ for non-timestamped methods).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OperationLabel {
    pub object: String,
    pub method: String,
    pub args: Vec<Value>,
    pub ret: Value,
    pub id: OpId,
    pub ts: Ts,
}

impl fmt::Display for OperationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}(", self.object, self.method)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")=>{} [{}", self.ret, self.id)?;
        match self.ts {
            Some(ts) => write!(f, ",ts={ts}]"),
            None => write!(f, ",ts=~]"),
        }
    }
}

/// A set of operation labels together with an acyclic visibility relation
/// stored as an explicit edge set over ids.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct History {
    pub labels: BTreeMap<OpId, OperationLabel>,
    pub vis: BTreeSet<(OpId, OpId)>,
}

impl History {
    /// The exact visible set `vis⁻¹(l)` of a label (not transitively expanded
    /// beyond the stored edges).
    pub fn vis_downward_closure(&self, l: OpId) -> Result<BTreeSet<OpId>> {
        if !self.labels.contains_key(&l) {
            return Err(Error::UnknownLabel(l.to_string()));
        }
        Ok(self.vis.iter().filter(|(_, b)| *b == l).map(|(a, _)| *a).collect())
    }

    /// Restriction of the history to a single object: its labels and the
    /// visibility edges between them.
    pub fn project(&self, object: &str) -> History {
        let labels: BTreeMap<OpId, OperationLabel> = self
            .labels
            .iter()
            .filter(|(_, l)| l.object == object)
            .map(|(id, l)| (*id, l.clone()))
            .collect();
        let vis = self
            .vis
            .iter()
            .filter(|(a, b)| labels.contains_key(a) && labels.contains_key(b))
            .copied()
            .collect();
        History { labels, vis }
    }

    /// Canonical serialization: sorted label list then sorted edge list.
    /// This is the determinism anchor for golden files.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for l in self.labels.values() {
            out.push_str(&format!("label {l}\n"));
        }
        for (a, b) in &self.vis {
            out.push_str(&format!("vis {a} -> {b}\n"));
        }
        out
    }
}

/// True iff the relation is irreflexive and transitive (a strict partial
/// order). Histories of single-object op-based runs must pass this; composed
/// histories may be merely acyclic.
pub fn is_strict_partial_order(vis: &BTreeSet<(OpId, OpId)>) -> bool {
    for (a, b) in vis {
        if a == b {
            return false;
        }
    }
    for (a, b) in vis {
        for (c, d) in vis {
            if b == c && !vis.contains(&(*a, *d)) {
                return false;
            }
        }
    }
    true
}

/// True iff the relation has no directed cycle.
pub fn is_acyclic(vis: &BTreeSet<(OpId, OpId)>) -> bool {
    let mut nodes: BTreeSet<OpId> = BTreeSet::new();
    for (a, b) in vis {
        nodes.insert(*a);
        nodes.insert(*b);
    }
    // Kahn's algorithm.
    let mut indeg: BTreeMap<OpId, usize> = nodes.iter().map(|n| (*n, 0)).collect();
    for (_, b) in vis {
        *indeg.get_mut(b).unwrap() += 1;
    }
    let mut queue: Vec<OpId> = indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
    let mut seen = 0usize;
    while let Some(n) = queue.pop() {
        seen += 1;
        for (a, b) in vis {
            if *a == n {
                let d = indeg.get_mut(b).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push(*b);
                }
            }
        }
    }
    seen == nodes.len()
}

/// One scheduled event of a run script.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    /// A method invocation at a replica (op-based and state-based).
    Invoke { replica: ReplicaId, object: String, method: String, args: Vec<Value> },
    /// Delivery of an op-based effector at a replica.
    Deliver { replica: ReplicaId, id: OpId },
    /// State-based: snapshot the replica's local configuration into a message.
    Send { replica: ReplicaId, mid: u64 },
    /// State-based: merge a previously produced message into a replica.
    Apply { replica: ReplicaId, mid: u64 },
}

/// An ordered event script. Replayed deterministically by the simulator.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub events: Vec<Event>,
}
