//! Deterministic simulators for the two replicated-execution semantics
//! (op-based generator/effector and state-based merge), plus history
//! extraction from runs.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    Event, History, OpId, OperationLabel, ReplicaId, Sentinel, Timestamp, Trace, Value,
};
use crate::opcrdt::{
    apply_effector, apply_generator, rga_traverse, CrdtKind, EffectorPayload, ReplicaState,
    WCharId,
};
use crate::statecrdt::{sb_do, sb_merge, SbKind, SbState};

/// The largest timestamp counter stored inside a replica state.
pub fn state_max_ts(state: &ReplicaState) -> u64 {
    match state {
        ReplicaState::Lww(st) => st.ts.map(|t| t.counter).unwrap_or(0),
        ReplicaState::Rga(st) => st.nodes.iter().map(|(_, ts, _)| ts.counter).max().unwrap_or(0),
        ReplicaState::Wooki(st) => st
            .wstring
            .iter()
            .filter_map(|w| match w.id {
                WCharId::Ts(ts) => Some(ts.counter),
                _ => None,
            })
            .max()
            .unwrap_or(0),
        ReplicaState::Counter(_) | ReplicaState::OrSet(_) => 0,
    }
}

/// Op-based run: per-replica per-object states, per-replica applied label
/// sets, the accumulated visibility relation, and the effector store.
#[derive(Clone, Debug)]
pub struct OpRun {
    pub objects: BTreeMap<String, CrdtKind>,
    pub replicas: usize,
    /// When set, a fresh timestamp exceeds every timestamp visible at the
    /// invoking replica across *all* objects, not just the invoked one.
    pub shared_ts: bool,
    states: Vec<BTreeMap<String, ReplicaState>>,
    /// Labels applied at each replica (origin generation counts as applied).
    applied: Vec<BTreeSet<OpId>>,
    seq: Vec<u64>,
    /// Effector store; `None` marks a query (identity effector).
    ds: BTreeMap<OpId, Option<EffectorPayload>>,
    /// Shared-ts mode: per-replica Lamport clock over the one timestamp
    /// source all objects draw from.
    clock: Vec<u64>,
    /// Shared-ts mode: the emitter's clock at generation time, carried by the
    /// label's message and merged into the receiving clock on delivery.
    label_clock: BTreeMap<OpId, u64>,
    pub labels: BTreeMap<OpId, OperationLabel>,
    pub vis: BTreeSet<(OpId, OpId)>,
    /// Generator (invocation) order of all labels in the run.
    pub order: Vec<OpId>,
}

impl OpRun {
    pub fn new(replicas: usize, objects: &[(String, CrdtKind)], shared_ts: bool) -> OpRun {
        let mut per_replica = BTreeMap::new();
        for (name, kind) in objects {
            per_replica.insert(name.clone(), ReplicaState::initial(*kind));
        }
        OpRun {
            objects: objects.iter().cloned().collect(),
            replicas,
            shared_ts,
            states: vec![per_replica; replicas],
            applied: vec![BTreeSet::new(); replicas],
            seq: vec![0; replicas],
            ds: BTreeMap::new(),
            clock: vec![0; replicas],
            label_clock: BTreeMap::new(),
            labels: BTreeMap::new(),
            vis: BTreeSet::new(),
            order: Vec::new(),
        }
    }

    fn check_replica(&self, r: ReplicaId) -> Result<usize> {
        let i = r.0 as usize;
        if i >= self.replicas {
            return Err(Error::UnknownReplica(r.0));
        }
        Ok(i)
    }

    pub fn state(&self, r: ReplicaId, object: &str) -> Result<&ReplicaState> {
        let i = self.check_replica(r)?;
        self.states[i].get(object).ok_or_else(|| Error::UnknownObject(object.to_string()))
    }

    /// The stored effector payload of a label (`None` for queries).
    pub fn payload(&self, id: OpId) -> Option<&EffectorPayload> {
        self.ds.get(&id).and_then(|p| p.as_ref())
    }

    /// The next fresh timestamp at replica `r` for `object`: one above the
    /// largest timestamp visible at `r` (same object, or all objects in
    /// shared-ts mode). Timestamps stored inside states (Wooki W-char ids)
    /// count as visible even though their labels carry no timestamp, and in
    /// shared-ts mode so do timestamps known only transitively through
    /// untimestamped labels, via the merged Lamport clock.
    fn fresh_ts(&self, ri: usize, object: &str) -> Timestamp {
        let clock_max = if self.shared_ts { self.clock[ri] } else { 0 };
        let label_max = self.applied[ri]
            .iter()
            .filter_map(|id| self.labels.get(id))
            .filter(|l| self.shared_ts || l.object == object)
            .filter_map(|l| l.ts)
            .map(|ts| ts.counter)
            .max()
            .unwrap_or(0);
        let state_max = self.states[ri]
            .iter()
            .filter(|(name, _)| self.shared_ts || name.as_str() == object)
            .map(|(_, st)| state_max_ts(st))
            .max()
            .unwrap_or(0);
        Timestamp::new(clock_max.max(label_max).max(state_max) + 1, ReplicaId(ri as u32))
    }

    /// Runs the OPERATION rule: generator at `r`, effector applied at `r`
    /// within the same step, visibility extended by (applied at r) × {ℓ}.
    pub fn step_operation(
        &mut self,
        r: ReplicaId,
        object: &str,
        method: &str,
        args: &[Value],
    ) -> Result<OperationLabel> {
        let ri = self.check_replica(r)?;
        let kind =
            *self.objects.get(object).ok_or_else(|| Error::UnknownObject(object.to_string()))?;
        let id = OpId::new(r, self.seq[ri]);
        let state = self.states[ri].get(object).unwrap();
        let ts_for_ref = self.fresh_ts(ri, object);
        let (ret, payload, ts) =
            apply_generator(kind, state, method, args, id, &mut || ts_for_ref)?;
        self.seq[ri] += 1;
        let label = OperationLabel {
            object: object.to_string(),
            method: method.to_string(),
            args: args.to_vec(),
            ret,
            id,
            ts,
        };
        for prev in &self.applied[ri] {
            self.vis.insert((*prev, id));
        }
        if let Some(p) = &payload {
            let state = self.states[ri].get(object).unwrap();
            let new_state = apply_effector(kind, state, p)?;
            self.states[ri].insert(object.to_string(), new_state);
        }
        if let Some(ts) = label.ts {
            self.clock[ri] = self.clock[ri].max(ts.counter);
        }
        self.label_clock.insert(id, self.clock[ri].max(state_max_ts(&self.states[ri][object])));
        self.ds.insert(id, payload);
        self.applied[ri].insert(id);
        self.labels.insert(id, label.clone());
        self.order.push(id);
        Ok(label)
    }

    /// True iff `id` can be delivered at `r` now: not yet applied there, and
    /// every same-object visibility predecessor already applied (the
    /// vis-minimality side condition of the EFFECTOR rule).
    pub fn can_deliver(&self, r: ReplicaId, id: OpId) -> bool {
        let ri = r.0 as usize;
        if ri >= self.replicas || self.applied[ri].contains(&id) {
            return false;
        }
        let Some(label) = self.labels.get(&id) else { return false };
        self.vis.iter().filter(|(_, b)| *b == id).all(|(a, _)| {
            self.labels.get(a).map(|la| la.object != label.object).unwrap_or(true)
                || self.applied[ri].contains(a)
        })
    }

    /// All labels deliverable at `r` in the current configuration.
    pub fn deliverable(&self, r: ReplicaId) -> Vec<OpId> {
        self.labels.keys().filter(|id| self.can_deliver(r, **id)).copied().collect()
    }

    /// Runs the EFFECTOR rule at `r` for label `id`.
    pub fn step_effector(&mut self, r: ReplicaId, id: OpId) -> Result<()> {
        let ri = self.check_replica(r)?;
        if !self.labels.contains_key(&id) {
            return Err(Error::UnknownLabel(id.to_string()));
        }
        if self.applied[ri].contains(&id) {
            return Err(Error::CausalityViolation(format!("{id} already applied at {r}")));
        }
        if !self.can_deliver(r, id) {
            return Err(Error::CausalityViolation(format!(
                "{id} is not vis-minimal among labels undelivered at {r}"
            )));
        }
        let object = self.labels[&id].object.clone();
        if let Some(payload) = self.ds[&id].clone() {
            let kind = self.objects[&object];
            let state = self.states[ri].get(&object).unwrap();
            let new_state = apply_effector(kind, state, &payload)?;
            self.states[ri].insert(object, new_state);
        }
        self.clock[ri] = self.clock[ri].max(self.label_clock[&id]);
        self.applied[ri].insert(id);
        Ok(())
    }

    /// Delivers everything everywhere (quiescence). Deterministic order.
    pub fn deliver_all(&mut self) -> Result<()> {
        loop {
            let mut progressed = false;
            for ri in 0..self.replicas {
                let r = ReplicaId(ri as u32);
                for id in self.deliverable(r) {
                    self.step_effector(r, id)?;
                    progressed = true;
                }
            }
            if !progressed {
                return Ok(());
            }
        }
    }

    pub fn extract_history(&self) -> History {
        History { labels: self.labels.clone(), vis: self.vis.clone() }
    }

    /// Replays a scripted trace from a fresh configuration.
    pub fn run_trace(
        replicas: usize,
        objects: &[(String, CrdtKind)],
        shared_ts: bool,
        trace: &Trace,
    ) -> Result<OpRun> {
        let mut run = OpRun::new(replicas, objects, shared_ts);
        for ev in &trace.events {
            match ev {
                Event::Invoke { replica, object, method, args } => {
                    run.step_operation(*replica, object, method, args)?;
                }
                Event::Deliver { replica, id } => run.step_effector(*replica, *id)?,
                Event::Send { .. } | Event::Apply { .. } => {
                    return Err(Error::Invalid(
                        "state-based event in an op-based trace".into(),
                    ))
                }
            }
        }
        Ok(run)
    }
}

/// A state-based message: snapshot of a replica's applied label set and all
/// of its object states at send time.
#[derive(Clone, Debug)]
pub struct SbMessage {
    pub applied: BTreeSet<OpId>,
    pub states: BTreeMap<String, SbState>,
}

/// State-based run under the merge semantics: messages are immutable replica
/// snapshots and may be applied repeatedly, dropped, or reordered.
#[derive(Clone, Debug)]
pub struct SbRun {
    pub objects: BTreeMap<String, SbKind>,
    pub replicas: usize,
    states: Vec<BTreeMap<String, SbState>>,
    applied: Vec<BTreeSet<OpId>>,
    seq: Vec<u64>,
    messages: BTreeMap<u64, SbMessage>,
    pub labels: BTreeMap<OpId, OperationLabel>,
    pub vis: BTreeSet<(OpId, OpId)>,
    pub order: Vec<OpId>,
}

impl SbRun {
    pub fn new(replicas: usize, objects: &[(String, SbKind)]) -> SbRun {
        let mut per_replica = BTreeMap::new();
        for (name, kind) in objects {
            per_replica.insert(name.clone(), SbState::initial(*kind, replicas));
        }
        SbRun {
            objects: objects.iter().cloned().collect(),
            replicas,
            states: vec![per_replica; replicas],
            applied: vec![BTreeSet::new(); replicas],
            seq: vec![0; replicas],
            messages: BTreeMap::new(),
            labels: BTreeMap::new(),
            vis: BTreeSet::new(),
            order: Vec::new(),
        }
    }

    fn check_replica(&self, r: ReplicaId) -> Result<usize> {
        let i = r.0 as usize;
        if i >= self.replicas {
            return Err(Error::UnknownReplica(r.0));
        }
        Ok(i)
    }

    pub fn state(&self, r: ReplicaId, object: &str) -> Result<&SbState> {
        let i = self.check_replica(r)?;
        self.states[i].get(object).ok_or_else(|| Error::UnknownObject(object.to_string()))
    }

    /// A fresh LWW-element-set timestamp at `r`: one above everything stored
    /// in the replica's state for the invoked object.
    fn fresh_ts(&self, ri: usize, object: &str) -> Timestamp {
        let max = match self.states[ri].get(object) {
            Some(SbState::Lww(st)) => {
                st.a.iter().chain(&st.r).map(|(_, ts)| ts.counter).max().unwrap_or(0)
            }
            _ => 0,
        };
        Timestamp::new(max + 1, ReplicaId(ri as u32))
    }

    /// Runs an operation at its origin (the OPERATION rule).
    pub fn step_operation(
        &mut self,
        r: ReplicaId,
        object: &str,
        method: &str,
        args: &[Value],
    ) -> Result<OperationLabel> {
        let ri = self.check_replica(r)?;
        let kind =
            *self.objects.get(object).ok_or_else(|| Error::UnknownObject(object.to_string()))?;
        let id = OpId::new(r, self.seq[ri]);
        let state = self.states[ri].get(object).unwrap();
        let ts_for_ref = self.fresh_ts(ri, object);
        let (ret, new_state, arg) =
            sb_do(kind, state, method, args, r, &mut || ts_for_ref)?;
        self.seq[ri] += 1;
        // MVR labels carry the generated version vector so the spec can
        // replay the write; others carry the raw arguments.
        let mut label_args = args.to_vec();
        if let Some(crate::statecrdt::LocalEffectorArg::MvWrite { vv, .. }) = &arg {
            label_args.push(Value::List(vv.iter().map(|x| Value::Int(*x as i64)).collect()));
        }
        let label = OperationLabel {
            object: object.to_string(),
            method: method.to_string(),
            args: label_args,
            ret,
            id,
            ts: arg.as_ref().and_then(|a| a.label_ts()),
        };
        for prev in &self.applied[ri] {
            self.vis.insert((*prev, id));
        }
        self.states[ri].insert(object.to_string(), new_state);
        self.applied[ri].insert(id);
        self.labels.insert(id, label.clone());
        self.order.push(id);
        Ok(label)
    }

    /// The GENERATE rule: snapshot `r`'s configuration into message `mid`.
    pub fn send(&mut self, r: ReplicaId, mid: u64) -> Result<()> {
        let ri = self.check_replica(r)?;
        self.messages.insert(
            mid,
            SbMessage { applied: self.applied[ri].clone(), states: self.states[ri].clone() },
        );
        Ok(())
    }

    /// The APPLY rule: merge message `mid` into `r`.
    pub fn apply(&mut self, r: ReplicaId, mid: u64) -> Result<()> {
        let ri = self.check_replica(r)?;
        let msg = self.messages.get(&mid).ok_or(Error::UnknownMessage(mid))?.clone();
        for (object, incoming) in &msg.states {
            let kind = self.objects[object];
            let merged = sb_merge(kind, self.states[ri].get(object).unwrap(), incoming)?;
            self.states[ri].insert(object.clone(), merged);
        }
        self.applied[ri].extend(msg.applied.iter().copied());
        Ok(())
    }

    /// Steps one scripted event.
    pub fn sb_step(&mut self, ev: &Event) -> Result<()> {
        match ev {
            Event::Invoke { replica, object, method, args } => {
                self.step_operation(*replica, object, method, args)?;
            }
            Event::Send { replica, mid } => self.send(*replica, *mid)?,
            Event::Apply { replica, mid } => self.apply(*replica, *mid)?,
            Event::Deliver { .. } => {
                return Err(Error::Invalid("op-based event in a state-based trace".into()))
            }
        }
        Ok(())
    }

    pub fn extract_history(&self) -> History {
        History { labels: self.labels.clone(), vis: self.vis.clone() }
    }

    pub fn run_trace(
        replicas: usize,
        objects: &[(String, SbKind)],
        trace: &Trace,
    ) -> Result<SbRun> {
        let mut run = SbRun::new(replicas, objects);
        for ev in &trace.events {
            run.sb_step(ev)?;
        }
        Ok(run)
    }

    /// Gossips every replica's full state to every other replica enough
    /// rounds to reach quiescence, using fresh message ids starting at
    /// `mid_base`.
    pub fn broadcast_all(&mut self, mid_base: u64) -> Result<()> {
        let mut mid = mid_base;
        for _ in 0..self.replicas {
            let round_start = mid;
            for ri in 0..self.replicas {
                self.send(ReplicaId(ri as u32), mid)?;
                mid += 1;
            }
            for ri in 0..self.replicas {
                for m in round_start..mid {
                    self.apply(ReplicaId(ri as u32), m)?;
                }
            }
        }
        Ok(())
    }
}

/// Picks a random method invocation valid at the given replica state.
/// `fresh` supplies unique element/value names for the whole run.
pub fn random_invoke(
    kind: CrdtKind,
    state: &ReplicaState,
    rng: &mut ChaCha8Rng,
    fresh: &mut u64,
) -> (String, Vec<Value>) {
    let mut fresh_elem = || {
        *fresh += 1;
        format!("e{fresh}")
    };
    let alphabet = ["a", "b", "c"];
    match (kind, state) {
        (CrdtKind::Counter, _) => {
            let m = ["inc", "dec", "read"].choose(rng).unwrap();
            (m.to_string(), vec![])
        }
        (CrdtKind::Lww, _) => {
            if rng.gen_bool(0.6) {
                ("write".into(), vec![Value::str(fresh_elem())])
            } else {
                ("read".into(), vec![])
            }
        }
        (CrdtKind::OrSet, _) => match rng.gen_range(0..4) {
            0 | 1 => ("add".into(), vec![Value::str(*alphabet.choose(rng).unwrap())]),
            2 => ("remove".into(), vec![Value::str(*alphabet.choose(rng).unwrap())]),
            _ => ("read".into(), vec![]),
        },
        (CrdtKind::Rga, ReplicaState::Rga(st)) => {
            let visible = rga_traverse(st, false);
            match rng.gen_range(0..4) {
                0 | 1 => {
                    let mut anchors = vec![Value::Sentinel(Sentinel::Root)];
                    anchors.extend(visible.iter().map(Value::str));
                    let a = anchors.choose(rng).unwrap().clone();
                    ("addAfter".into(), vec![a, Value::str(fresh_elem())])
                }
                2 if !visible.is_empty() => {
                    ("remove".into(), vec![Value::str(visible.choose(rng).unwrap())])
                }
                _ => ("read".into(), vec![]),
            }
        }
        (CrdtKind::RgaAddAt | CrdtKind::RgaAddAt0, ReplicaState::Rga(st)) => {
            let visible = rga_traverse(st, false);
            match rng.gen_range(0..4) {
                0 | 1 => {
                    let k = rng.gen_range(0..=(visible.len() as i64 + 1));
                    ("addAt".into(), vec![Value::str(fresh_elem()), Value::Int(k)])
                }
                2 if !visible.is_empty() => {
                    ("remove".into(), vec![Value::str(visible.choose(rng).unwrap())])
                }
                _ => ("read".into(), vec![]),
            }
        }
        (CrdtKind::Wooki, ReplicaState::Wooki(st)) => {
            let values = st.all_values();
            match rng.gen_range(0..4) {
                0 | 1 => {
                    let mut anchors = vec![Value::Sentinel(Sentinel::Begin)];
                    anchors.extend(values.iter().map(Value::str));
                    anchors.push(Value::Sentinel(Sentinel::End));
                    let i = rng.gen_range(0..anchors.len() - 1);
                    let j = rng.gen_range(i + 1..anchors.len());
                    let (a, c) = (anchors[i].clone(), anchors[j].clone());
                    ("addBetween".into(), vec![a, Value::str(fresh_elem()), c])
                }
                2 if !st.visible_values().is_empty() => {
                    let vis = st.visible_values();
                    ("remove".into(), vec![Value::str(vis.choose(rng).unwrap())])
                }
                _ => ("read".into(), vec![]),
            }
        }
        _ => ("read".into(), vec![]),
    }
}

/// Generates a random op-based run: `ops` invocations across `replicas`
/// replicas of a single object `o`, interleaved with random causal
/// deliveries, ending with full delivery and one read per replica.
/// Reproducible from the seed.
pub fn random_op_run(
    kind: CrdtKind,
    replicas: usize,
    ops: usize,
    seed: u64,
    shared_ts: bool,
) -> Result<(Trace, OpRun)> {
    random_multi_op_run(&[("o".to_string(), kind)], replicas, ops, seed, shared_ts)
}

/// Multi-object variant of [`random_op_run`]: each invocation picks a random
/// object; the run quiesces and ends with one read per replica per object.
pub fn random_multi_op_run(
    objects: &[(String, CrdtKind)],
    replicas: usize,
    ops: usize,
    seed: u64,
    shared_ts: bool,
) -> Result<(Trace, OpRun)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = OpRun::new(replicas, objects, shared_ts);
    let mut trace = Trace::default();
    let mut fresh = 0u64;
    let mut invoked = 0usize;
    while invoked < ops {
        let r = ReplicaId(rng.gen_range(0..replicas) as u32);
        let pending = run.deliverable(r);
        if !pending.is_empty() && rng.gen_bool(0.4) {
            let id = *pending.choose(&mut rng).unwrap();
            run.step_effector(r, id)?;
            trace.events.push(Event::Deliver { replica: r, id });
        } else {
            let (object, kind) = objects[rng.gen_range(0..objects.len())].clone();
            let (method, args) =
                random_invoke(kind, run.state(r, &object)?, &mut rng, &mut fresh);
            run.step_operation(r, &object, &method, &args)?;
            trace.events.push(Event::Invoke { replica: r, object, method, args });
            invoked += 1;
        }
    }
    // Quiesce and let every replica observe the final value.
    loop {
        let mut progressed = false;
        for ri in 0..replicas {
            let r = ReplicaId(ri as u32);
            for id in run.deliverable(r) {
                run.step_effector(r, id)?;
                trace.events.push(Event::Deliver { replica: r, id });
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    for ri in 0..replicas {
        let r = ReplicaId(ri as u32);
        for (object, _) in objects {
            run.step_operation(r, object, "read", &[])?;
            trace.events.push(Event::Invoke {
                replica: r,
                object: object.clone(),
                method: "read".into(),
                args: vec![],
            });
        }
    }
    Ok((trace, run))
}

/// Picks a random method invocation valid at a state-based replica state.
pub fn random_sb_invoke(
    kind: SbKind,
    state: &SbState,
    rng: &mut ChaCha8Rng,
    fresh: &mut u64,
) -> (String, Vec<Value>) {
    let alphabet = ["a", "b", "c", "d"];
    match (kind, state) {
        (SbKind::PnCounter, _) => {
            let m = ["inc", "dec", "read"].choose(rng).unwrap();
            (m.to_string(), vec![])
        }
        (SbKind::MvReg, _) => {
            if rng.gen_bool(0.6) {
                ("write".into(), vec![Value::str(*alphabet.choose(rng).unwrap())])
            } else {
                ("read".into(), vec![])
            }
        }
        (SbKind::TwoPSet, SbState::TwoP(st)) => {
            let removable: Vec<&String> = st.a.difference(&st.r).collect();
            match rng.gen_range(0..4) {
                0 | 1 => {
                    *fresh += 1;
                    ("add".into(), vec![Value::str(format!("e{fresh}"))])
                }
                2 if !removable.is_empty() => {
                    ("remove".into(), vec![Value::str(removable.choose(rng).unwrap().as_str())])
                }
                _ => ("read".into(), vec![]),
            }
        }
        (SbKind::LwwElementSet, _) => match rng.gen_range(0..4) {
            0 | 1 => ("add".into(), vec![Value::str(*alphabet.choose(rng).unwrap())]),
            2 => ("remove".into(), vec![Value::str(*alphabet.choose(rng).unwrap())]),
            _ => ("read".into(), vec![]),
        },
        _ => ("read".into(), vec![]),
    }
}

/// Generates a random state-based run with random sends/applies, ending with
/// a full broadcast so replicas converge. Reproducible from the seed.
pub fn random_sb_run(
    kind: SbKind,
    replicas: usize,
    ops: usize,
    seed: u64,
) -> Result<(Trace, SbRun)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objects = vec![("o".to_string(), kind)];
    let mut run = SbRun::new(replicas, &objects);
    let mut trace = Trace::default();
    let mut fresh = 0u64;
    let mut invoked = 0usize;
    let mut next_mid = 0u64;
    while invoked < ops {
        let r = ReplicaId(rng.gen_range(0..replicas) as u32);
        match rng.gen_range(0..4) {
            0 if next_mid > 0 => {
                let mid = rng.gen_range(0..next_mid);
                run.apply(r, mid)?;
                trace.events.push(Event::Apply { replica: r, mid });
            }
            1 => {
                run.send(r, next_mid)?;
                trace.events.push(Event::Send { replica: r, mid: next_mid });
                next_mid += 1;
            }
            _ => {
                let (method, args) =
                    random_sb_invoke(kind, run.state(r, "o")?, &mut rng, &mut fresh);
                run.step_operation(r, "o", &method, &args)?;
                trace.events.push(Event::Invoke {
                    replica: r,
                    object: "o".into(),
                    method,
                    args,
                });
                invoked += 1;
            }
        }
    }
    // Quiesce: enough gossip rounds for every update to reach every replica,
    // recorded in the trace so a replay reproduces the run exactly.
    for _ in 0..replicas {
        let round_start = next_mid;
        for ri in 0..replicas {
            let r = ReplicaId(ri as u32);
            run.send(r, next_mid)?;
            trace.events.push(Event::Send { replica: r, mid: next_mid });
            next_mid += 1;
        }
        for ri in 0..replicas {
            let r = ReplicaId(ri as u32);
            for mid in round_start..next_mid {
                run.apply(r, mid)?;
                trace.events.push(Event::Apply { replica: r, mid });
            }
        }
    }
    for ri in 0..replicas {
        let r = ReplicaId(ri as u32);
        run.step_operation(r, "o", "read", &[])?;
        trace.events.push(Event::Invoke {
            replica: r,
            object: "o".into(),
            method: "read".into(),
            args: vec![],
        });
    }
    Ok((trace, run))
}
