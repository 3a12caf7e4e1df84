//! Linearization validation, the exhaustive topological-order oracle, the
//! constructive execution-order / timestamp-order builders, the proof
//! obligations (commutativity, refinement), composition checking, and the
//! state-based effector properties.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{History, OpId, OperationLabel, ReplicaId, Timestamp, Ts, Value};
use crate::opcrdt::{apply_effector, CrdtKind, EffectorPayload, ReplicaState, rga_traverse};
use crate::runtime::{random_op_run, random_sb_invoke, OpRun};
use crate::spec::{
    qu_rewrite_multi, spec_accepts_sequence, spec_step, spec_step_set, AbsState, OpClass,
    QuRewriting, SeqSpec,
};
use crate::statecrdt::{
    sb_apply_local, sb_compare, sb_do, sb_merge, sb_p1, sb_p2, LocalEffectorArg, SbKind, SbState,
};

/// Default label bound for exhaustive enumeration.
pub const DEFAULT_BOUND: usize = 10;

/// A total order over a (rewritten) history's labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linearization {
    pub seq: Vec<OpId>,
}

/// Which definitional requirement failed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reason {
    /// 1 = order consistent with visibility; 2 = update projection in spec;
    /// 3 = some query's visible-update view not in spec.
    pub item: u8,
    pub query: Option<OpId>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub accepted: bool,
    pub witness: Option<Linearization>,
    pub reason: Option<Reason>,
}

impl Verdict {
    fn accept(witness: Linearization) -> Verdict {
        Verdict { accepted: true, witness: Some(witness), reason: None }
    }

    fn reject(item: u8, query: Option<OpId>, detail: impl Into<String>) -> Verdict {
        Verdict {
            accepted: false,
            witness: None,
            reason: Some(Reason { item, query, detail: detail.into() }),
        }
    }
}

/// Outcome of a sampled property check; empty `failures` means success.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Report {
    pub checked: usize,
    pub failures: Vec<String>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    fn fail(&mut self, msg: impl Into<String>) {
        if self.failures.len() < 16 {
            self.failures.push(msg.into());
        } else if self.failures.len() == 16 {
            self.failures.push("... further failures elided".into());
        }
    }
}

/// Maps every object of a history to the same spec (single-object use).
pub fn uniform_specs(h: &History, spec: SeqSpec) -> BTreeMap<String, SeqSpec> {
    h.labels.values().map(|l| (l.object.clone(), spec)).collect()
}

fn classify_all(
    h: &History,
    specs: &BTreeMap<String, SeqSpec>,
) -> Result<BTreeMap<OpId, OpClass>> {
    let mut out = BTreeMap::new();
    for (id, label) in &h.labels {
        let spec = specs
            .get(&label.object)
            .ok_or_else(|| Error::UnknownObject(label.object.clone()))?;
        let class = spec.classify(label)?;
        if class == OpClass::QueryUpdate {
            return Err(Error::NotRewritten(label.to_string()));
        }
        out.insert(*id, class);
    }
    Ok(out)
}

/// Checks one linearization of a rewritten multi-object history against
/// per-object specs: (i) the order embeds the visibility relation, (ii) each
/// object's update projection is in its spec, (iii) each query preceded by
/// exactly its visible same-object updates is in its spec.
pub fn validate_linearization_multi(
    h: &History,
    lin: &Linearization,
    specs: &BTreeMap<String, SeqSpec>,
) -> Result<Verdict> {
    let class = classify_all(h, specs)?;
    if lin.seq.len() != h.labels.len()
        || lin.seq.iter().collect::<BTreeSet<_>>().len() != lin.seq.len()
        || lin.seq.iter().any(|id| !h.labels.contains_key(id))
    {
        return Err(Error::Invalid("linearization is not a permutation of the labels".into()));
    }
    let pos: BTreeMap<OpId, usize> = lin.seq.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    for (a, b) in &h.vis {
        if pos[a] >= pos[b] {
            return Ok(Verdict::reject(
                1,
                None,
                format!("visibility edge {a} -> {b} goes backwards in the order"),
            ));
        }
    }
    let mut by_object: BTreeMap<&str, Vec<&OperationLabel>> = BTreeMap::new();
    for id in &lin.seq {
        let label = &h.labels[id];
        if class[id] == OpClass::Update {
            by_object.entry(label.object.as_str()).or_default().push(label);
        }
    }
    for (object, updates) in &by_object {
        if !spec_accepts_sequence(specs[*object], updates) {
            return Ok(Verdict::reject(
                2,
                None,
                format!("update projection of object {object} is not in the spec"),
            ));
        }
    }
    for id in &lin.seq {
        if class[id] != OpClass::Query {
            continue;
        }
        let q = &h.labels[id];
        let mut seq: Vec<&OperationLabel> = lin
            .seq
            .iter()
            .filter(|u| {
                class[u] == OpClass::Update
                    && h.labels[u].object == q.object
                    && h.vis.contains(&(**u, *id))
            })
            .map(|u| &h.labels[u])
            .collect();
        seq.push(q);
        if !spec_accepts_sequence(specs[&q.object], &seq) {
            return Ok(Verdict::reject(
                3,
                Some(*id),
                format!("query {q} is not explained by its visible updates"),
            ));
        }
    }
    Ok(Verdict::accept(lin.clone()))
}

/// Single-object convenience wrapper around
/// [`validate_linearization_multi`].
pub fn validate_linearization(
    h: &History,
    lin: &Linearization,
    spec: SeqSpec,
) -> Result<Verdict> {
    validate_linearization_multi(h, lin, &uniform_specs(h, spec))
}

struct Enumerator<'a> {
    h: &'a History,
    specs: &'a BTreeMap<String, SeqSpec>,
    class: BTreeMap<OpId, OpClass>,
    preds: BTreeMap<OpId, Vec<OpId>>,
    succs: BTreeMap<OpId, Vec<OpId>>,
    want_all: bool,
    witnesses: Vec<Linearization>,
    item2_prunes: usize,
    item3_prunes: usize,
}

impl<'a> Enumerator<'a> {
    fn search(
        &mut self,
        placed: &mut Vec<OpId>,
        indeg: &mut BTreeMap<OpId, usize>,
        frontiers: &mut BTreeMap<String, BTreeSet<AbsState>>,
    ) {
        if !self.want_all && !self.witnesses.is_empty() {
            return;
        }
        if placed.len() == self.h.labels.len() {
            self.witnesses.push(Linearization { seq: placed.clone() });
            return;
        }
        let candidates: Vec<OpId> =
            indeg.iter().filter(|(_, d)| **d == 0).map(|(id, _)| *id).collect();
        for id in candidates {
            let label = &self.h.labels[&id];
            let spec = self.specs[&label.object];
            let mut new_frontier = None;
            match self.class[&id] {
                OpClass::Update => {
                    let frontier = frontiers.get(&label.object).unwrap();
                    let stepped = spec_step_set(spec, frontier, label);
                    if stepped.is_empty() {
                        self.item2_prunes += 1;
                        continue;
                    }
                    new_frontier = Some(stepped);
                }
                OpClass::Query => {
                    // All visibility predecessors are already placed.
                    let mut seq: Vec<&OperationLabel> = placed
                        .iter()
                        .filter(|u| {
                            self.class[u] == OpClass::Update
                                && self.h.labels[u].object == label.object
                                && self.preds[&id].contains(u)
                        })
                        .map(|u| &self.h.labels[u])
                        .collect();
                    seq.push(label);
                    if !spec_accepts_sequence(spec, &seq) {
                        self.item3_prunes += 1;
                        continue;
                    }
                }
                OpClass::QueryUpdate => unreachable!("rewritten history"),
            }
            // Place the label.
            placed.push(id);
            indeg.remove(&id);
            for s in &self.succs[&id] {
                *indeg.get_mut(s).unwrap() -= 1;
            }
            let saved = new_frontier
                .as_ref()
                .map(|nf| frontiers.insert(label.object.clone(), nf.clone()).unwrap());
            self.search(placed, indeg, frontiers);
            // Undo.
            if let Some(old) = saved {
                frontiers.insert(label.object.clone(), old);
            }
            for s in &self.succs[&id] {
                *indeg.get_mut(s).unwrap() += 1;
            }
            // It was a candidate (in-degree zero) before being placed.
            indeg.insert(id, 0);
            placed.pop();
            if !self.want_all && !self.witnesses.is_empty() {
                return;
            }
        }
    }
}

fn enumerate(
    h: &History,
    specs: &BTreeMap<String, SeqSpec>,
    bound: usize,
    want_all: bool,
) -> Result<(Vec<Linearization>, usize, usize)> {
    if h.labels.len() > bound {
        return Err(Error::BoundExceeded(format!(
            "{} labels exceed the enumeration bound {bound}",
            h.labels.len()
        )));
    }
    let class = classify_all(h, specs)?;
    let mut preds: BTreeMap<OpId, Vec<OpId>> =
        h.labels.keys().map(|id| (*id, Vec::new())).collect();
    let mut succs: BTreeMap<OpId, Vec<OpId>> =
        h.labels.keys().map(|id| (*id, Vec::new())).collect();
    for (a, b) in &h.vis {
        preds.get_mut(b).ok_or_else(|| Error::UnknownLabel(b.to_string()))?.push(*a);
        succs.get_mut(a).ok_or_else(|| Error::UnknownLabel(a.to_string()))?.push(*b);
    }
    let mut indeg: BTreeMap<OpId, usize> =
        preds.iter().map(|(id, p)| (*id, p.len())).collect();
    let mut frontiers: BTreeMap<String, BTreeSet<AbsState>> = BTreeMap::new();
    for (object, spec) in specs {
        let mut init = BTreeSet::new();
        init.insert(spec.initial());
        frontiers.insert(object.clone(), init);
    }
    let mut en = Enumerator {
        h,
        specs,
        class,
        preds,
        succs,
        want_all,
        witnesses: Vec::new(),
        item2_prunes: 0,
        item3_prunes: 0,
    };
    let mut placed = Vec::new();
    en.search(&mut placed, &mut indeg, &mut frontiers);
    Ok((en.witnesses, en.item2_prunes, en.item3_prunes))
}

/// Exhaustive oracle over a multi-object history: applies per-object
/// rewritings, then enumerates all visibility-respecting total orders.
pub fn check_ra_exhaustive_multi(
    h: &History,
    specs: &BTreeMap<String, SeqSpec>,
    gammas: &BTreeMap<String, QuRewriting>,
    bound: usize,
) -> Result<Verdict> {
    let rewritten = qu_rewrite_multi(h, gammas)?;
    let (witnesses, i2, i3) = enumerate(&rewritten, specs, bound, false)?;
    if let Some(w) = witnesses.into_iter().next() {
        return Ok(Verdict::accept(w));
    }
    if !crate::model::is_acyclic(&rewritten.vis) {
        return Ok(Verdict::reject(1, None, "visibility relation is cyclic"));
    }
    let (item, detail) = if i3 >= i2 {
        (3, format!("every order fails a query view ({i3} query prunes, {i2} update prunes)"))
    } else {
        (2, format!("every order fails the update projection ({i2} update prunes, {i3} query prunes)"))
    };
    Ok(Verdict::reject(item, None, detail))
}

/// Exhaustive oracle with one spec and one rewriting for every object.
pub fn check_ra_exhaustive(
    h: &History,
    spec: SeqSpec,
    gamma: QuRewriting,
    bound: usize,
) -> Result<Verdict> {
    let specs = uniform_specs(h, spec);
    let gammas = specs.keys().map(|o| (o.clone(), gamma)).collect();
    check_ra_exhaustive_multi(h, &specs, &gammas, bound)
}

/// All accepting linearizations of an (already rewritten) history.
pub fn enumerate_ra_witnesses(
    h: &History,
    specs: &BTreeMap<String, SeqSpec>,
    bound: usize,
) -> Result<Vec<Linearization>> {
    Ok(enumerate(h, specs, bound, true)?.0)
}

/// Builds the execution-order linearization of a rewritten history: labels
/// in generator order, a split query half immediately before its update half.
pub fn build_execution_order_lin(h_rewritten: &History, order: &[OpId]) -> Linearization {
    let mut seq = Vec::new();
    for id in order {
        let qid = id.rewrite_query_half();
        if h_rewritten.labels.contains_key(&qid) {
            seq.push(qid);
        }
        if h_rewritten.labels.contains_key(id) {
            seq.push(*id);
        }
    }
    Linearization { seq }
}

/// Virtual timestamps: a label's own timestamp when it has one, otherwise the
/// maximum virtual timestamp among its visible labels (⊥ if none). Computed
/// transitively, so a split update half inherits through its query half even
/// though rewritten visibility is not transitively closed.
pub fn assign_virtual_ts(h: &History) -> BTreeMap<OpId, Ts> {
    let mut preds: BTreeMap<OpId, Vec<OpId>> = BTreeMap::new();
    for (a, b) in &h.vis {
        preds.entry(*b).or_default().push(*a);
    }
    fn visit(
        id: OpId,
        h: &History,
        preds: &BTreeMap<OpId, Vec<OpId>>,
        out: &mut BTreeMap<OpId, Ts>,
    ) -> Ts {
        if let Some(ts) = out.get(&id) {
            return *ts;
        }
        let ts = h.labels.get(&id).and_then(|l| l.ts).or_else(|| {
            preds
                .get(&id)
                .into_iter()
                .flatten()
                .filter(|p| h.labels.contains_key(p))
                .filter_map(|p| visit(*p, h, preds, out))
                .max()
        });
        out.insert(id, ts);
        ts
    }
    let mut out = BTreeMap::new();
    for id in h.labels.keys() {
        visit(*id, h, &preds, &mut out);
    }
    out
}

/// Builds the timestamp-order linearization: ascending virtual timestamp
/// (⊥ first), ties broken by origin execution order.
pub fn build_timestamp_order_lin(h_rewritten: &History, order: &[OpId]) -> Linearization {
    let vts = assign_virtual_ts(h_rewritten);
    let order_index: BTreeMap<OpId, usize> =
        order.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut seq: Vec<OpId> = h_rewritten.labels.keys().copied().collect();
    seq.sort_by_key(|id| {
        let base = OpId { origin: id.origin, seq: id.seq & !OpId::REWRITE_TAG };
        let is_update_half = (id.seq & OpId::REWRITE_TAG) == 0;
        (vts[id], order_index.get(&base).copied().unwrap_or(usize::MAX), is_update_half)
    });
    Linearization { seq }
}

/// All timestamps stored inside an op-based replica state.
fn state_timestamps(state: &ReplicaState) -> Vec<Timestamp> {
    match state {
        ReplicaState::Lww(st) => st.ts.into_iter().collect(),
        ReplicaState::Rga(st) => st.nodes.iter().map(|(_, ts, _)| *ts).collect(),
        ReplicaState::Wooki(st) => st
            .wstring
            .iter()
            .filter_map(|w| match w.id {
                crate::opcrdt::WCharId::Ts(ts) => Some(ts),
                _ => None,
            })
            .collect(),
        ReplicaState::Counter(_) | ReplicaState::OrSet(_) => Vec::new(),
    }
}

/// Checks that pairs of concurrently deliverable effectors commute on the
/// states where both apply.
pub fn check_commutativity(
    kind: CrdtKind,
    cases: &[(ReplicaState, EffectorPayload, EffectorPayload)],
) -> Report {
    let mut report = Report::default();
    for (state, p1, p2) in cases {
        report.checked += 1;
        let ab = apply_effector(kind, state, p1).and_then(|s| apply_effector(kind, &s, p2));
        let ba = apply_effector(kind, state, p2).and_then(|s| apply_effector(kind, &s, p1));
        match (ab, ba) {
            (Ok(x), Ok(y)) if x == y => {}
            (Ok(_), Ok(_)) => {
                report.fail(format!("effectors do not commute: {p1:?} vs {p2:?} on {state:?}"))
            }
            (a, b) => report.fail(format!(
                "effector application failed: {p1:?}/{p2:?} on {state:?}: {:?} {:?}",
                a.err(),
                b.err()
            )),
        }
    }
    report
}

/// Harvests concurrent effector pairs from random runs: whenever two
/// non-query labels are simultaneously deliverable at a replica they are
/// concurrent, and the replica's state is one where both apply.
pub fn sample_commutativity_cases(
    kind: CrdtKind,
    replicas: usize,
    ops: usize,
    seed: u64,
    want: usize,
) -> Result<Vec<(ReplicaState, EffectorPayload, EffectorPayload)>> {
    let mut cases = Vec::new();
    let mut run_seed = seed;
    let max_seed = seed + 10_000;
    while cases.len() < want {
        if run_seed >= max_seed {
            return Err(Error::BoundExceeded(format!(
                "only {} of {want} concurrent effector pairs found",
                cases.len()
            )));
        }
        let (trace, _) = random_op_run(kind, replicas, ops, run_seed, false)?;
        run_seed += 1;
        let objects = vec![("o".to_string(), kind)];
        let mut run = OpRun::new(replicas, &objects, false);
        for ev in &trace.events {
            match ev {
                crate::model::Event::Invoke { replica, object, method, args } => {
                    run.step_operation(*replica, object, method, args)?;
                }
                crate::model::Event::Deliver { replica, id } => {
                    run.step_effector(*replica, *id)?;
                }
                _ => unreachable!(),
            }
            for ri in 0..replicas {
                let r = ReplicaId(ri as u32);
                let deliverable: Vec<OpId> = run
                    .deliverable(r)
                    .into_iter()
                    .filter(|id| run.payload(*id).is_some())
                    .collect();
                for (i, a) in deliverable.iter().enumerate() {
                    for b in &deliverable[i + 1..] {
                        cases.push((
                            run.state(r, "o")?.clone(),
                            run.payload(*a).unwrap().clone(),
                            run.payload(*b).unwrap().clone(),
                        ));
                        if cases.len() >= want {
                            return Ok(cases);
                        }
                    }
                }
            }
        }
    }
    Ok(cases)
}

/// The abstraction function from concrete replica states to spec states.
pub fn abs_state(kind: CrdtKind, state: &ReplicaState) -> AbsState {
    match (kind, state) {
        (CrdtKind::Counter, ReplicaState::Counter(st)) => AbsState::Counter(st.ctr),
        (CrdtKind::Lww, ReplicaState::Lww(st)) => AbsState::Register(st.value.clone()),
        (CrdtKind::OrSet, ReplicaState::OrSet(st)) => AbsState::OrSet(st.elems.clone()),
        (CrdtKind::Rga | CrdtKind::RgaAddAt | CrdtKind::RgaAddAt0, ReplicaState::Rga(st)) => {
            AbsState::ListT { l: rga_traverse(st, true), t: st.tomb.clone() }
        }
        (CrdtKind::Wooki, ReplicaState::Wooki(st)) => {
            AbsState::ListT { l: st.all_values(), t: st.hidden_values() }
        }
        _ => unreachable!("state does not match kind"),
    }
}

/// Which flavour of the refinement obligation to sample.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefinementMode {
    /// Effector obligation checked at every delivery.
    Plain,
    /// Effector obligation checked only where the label's timestamp is not
    /// smaller than any timestamp stored in the receiving state.
    Ts,
}

/// The update half of a label under the given rewriting.
fn update_half(label: &OperationLabel, gamma: QuRewriting) -> OperationLabel {
    if gamma == QuRewriting::OrSetRemove
        && label.method == "remove"
        && matches!(label.args.first(), Some(Value::Str(_)))
    {
        OperationLabel {
            object: label.object.clone(),
            method: "remove".into(),
            args: vec![label.ret.clone()],
            ret: Value::Unit,
            id: label.id,
            ts: label.ts,
        }
    } else {
        label.clone()
    }
}

/// The query half of a rewritten query-update label, if any.
fn query_half(label: &OperationLabel, gamma: QuRewriting) -> Option<OperationLabel> {
    if gamma == QuRewriting::OrSetRemove
        && label.method == "remove"
        && matches!(label.args.first(), Some(Value::Str(_)))
    {
        Some(OperationLabel {
            object: label.object.clone(),
            method: "readIds".into(),
            args: label.args.clone(),
            ret: label.ret.clone(),
            id: label.id.rewrite_query_half(),
            ts: None,
        })
    } else {
        None
    }
}

/// Samples the refinement obligations over random runs: every query
/// invocation must return a value the spec admits at the abstracted state,
/// and every effector application must be simulated by the spec transition
/// of the label's update half (in `Ts` mode, only at receivers where the
/// label's timestamp is maximal).
#[allow(clippy::too_many_arguments)]
pub fn check_refinement(
    kind: CrdtKind,
    spec: SeqSpec,
    gamma: QuRewriting,
    mode: RefinementMode,
    replicas: usize,
    ops: usize,
    min_samples: usize,
    seed: u64,
) -> Result<Report> {
    let mut report = Report::default();
    let mut run_seed = seed;
    while report.checked < min_samples {
        let (trace, _) = random_op_run(kind, replicas, ops, run_seed, false)?;
        run_seed += 1;
        let objects = vec![("o".to_string(), kind)];
        let mut run = OpRun::new(replicas, &objects, false);
        for ev in &trace.events {
            match ev {
                crate::model::Event::Invoke { replica, object, method, args } => {
                    let before = run.state(*replica, object)?.clone();
                    let label = run.step_operation(*replica, object, method, args)?;
                    let after = run.state(*replica, object)?.clone();
                    let abs_before = abs_state(kind, &before);
                    match spec.classify(&label)? {
                        OpClass::Query => {
                            report.checked += 1;
                            if spec_step(spec, &abs_before, &label).is_empty() {
                                report.fail(format!(
                                    "query generator not simulated: {label} at {abs_before:?}"
                                ));
                            }
                        }
                        OpClass::Update | OpClass::QueryUpdate => {
                            if let Some(q) = query_half(&label, gamma) {
                                report.checked += 1;
                                if spec_step(spec, &abs_before, &q).is_empty() {
                                    report.fail(format!(
                                        "query half not simulated: {q} at {abs_before:?}"
                                    ));
                                }
                            }
                            // The origin's fresh timestamp is maximal, so the
                            // effector obligation applies in both modes.
                            report.checked += 1;
                            let upd = update_half(&label, gamma);
                            let abs_after = abs_state(kind, &after);
                            if !spec_step(spec, &abs_before, &upd).contains(&abs_after) {
                                report.fail(format!(
                                    "origin effector not simulated: {upd} {abs_before:?} -> {abs_after:?}"
                                ));
                            }
                        }
                    }
                }
                crate::model::Event::Deliver { replica, id } => {
                    let label = run.labels.get(id).cloned();
                    let before = run.state(*replica, "o")?.clone();
                    run.step_effector(*replica, *id)?;
                    let label = label.ok_or_else(|| Error::UnknownLabel(id.to_string()))?;
                    if run.payload(*id).is_none() {
                        continue;
                    }
                    if mode == RefinementMode::Ts {
                        let maximal = match label.ts {
                            Some(ts) => state_timestamps(&before).iter().all(|t| ts >= *t),
                            None => true,
                        };
                        if !maximal {
                            continue;
                        }
                    }
                    let after = run.state(*replica, "o")?.clone();
                    report.checked += 1;
                    let upd = update_half(&label, gamma);
                    let abs_before = abs_state(kind, &before);
                    let abs_after = abs_state(kind, &after);
                    if !spec_step(spec, &abs_before, &upd).contains(&abs_after) {
                        report.fail(format!(
                            "delivered effector not simulated: {upd} {abs_before:?} -> {abs_after:?}"
                        ));
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    Ok(report)
}

/// Decides RA-linearizability of a multi-object run against the interleaving
/// composition of the per-object specs: exhaustively under the bound,
/// otherwise with the constructive builder matching the run's timestamp mode.
pub fn check_composition(
    run: &OpRun,
    specs: &BTreeMap<String, SeqSpec>,
    gammas: &BTreeMap<String, QuRewriting>,
    bound: usize,
) -> Result<Verdict> {
    let h = run.extract_history();
    let rewritten = qu_rewrite_multi(&h, gammas)?;
    if rewritten.labels.len() <= bound {
        let (witnesses, i2, i3) = enumerate(&rewritten, specs, bound, false)?;
        if let Some(w) = witnesses.into_iter().next() {
            return Ok(Verdict::accept(w));
        }
        if !crate::model::is_acyclic(&rewritten.vis) {
            return Ok(Verdict::reject(1, None, "visibility relation is cyclic"));
        }
        return Ok(Verdict::reject(
            if i3 >= i2 { 3 } else { 2 },
            None,
            format!("no global order validates ({i2} update prunes, {i3} query prunes)"),
        ));
    }
    let lin = if run.shared_ts {
        build_timestamp_order_lin(&rewritten, &run.order)
    } else {
        build_execution_order_lin(&rewritten, &run.order)
    };
    validate_linearization_multi(&rewritten, &lin, specs)
}

// ---------------------------------------------------------------------------
// State-based effector properties
// ---------------------------------------------------------------------------

/// Grows a reachable state by running random updates at the given replicas.
fn grow_state(
    kind: SbKind,
    replicas: usize,
    allowed: &[u32],
    steps: usize,
    rng: &mut ChaCha8Rng,
    fresh: &mut u64,
) -> SbState {
    let mut state = SbState::initial(kind, replicas);
    for _ in 0..steps {
        let r = ReplicaId(allowed[rng.gen_range(0..allowed.len())]);
        let (m, args) = random_sb_invoke(kind, &state, rng, fresh);
        let ts = sb_fresh_ts(&state, r);
        if let Ok((_, next, _)) = sb_do(kind, &state, &m, &args, r, &mut || ts) {
            state = next;
        }
    }
    state
}

fn sb_fresh_ts(state: &SbState, r: ReplicaId) -> Timestamp {
    let max = match state {
        SbState::Lww(st) => st.a.iter().chain(&st.r).map(|(_, t)| t.counter).max().unwrap_or(0),
        _ => 0,
    };
    Timestamp::new(max + 1, r)
}

/// Runs a random update method *at* the given state, returning the post
/// state and the local effector argument (whose identifier is therefore
/// fresh with respect to the state).
fn random_update_at(
    kind: SbKind,
    state: &SbState,
    r: ReplicaId,
    rng: &mut ChaCha8Rng,
    fresh: &mut u64,
) -> Option<(SbState, LocalEffectorArg)> {
    for _ in 0..16 {
        let (m, args) = random_sb_invoke(kind, state, rng, fresh);
        if m == "read" {
            continue;
        }
        let ts = sb_fresh_ts(state, r);
        if let Ok((_, next, Some(arg))) = sb_do(kind, state, &m, &args, r, &mut || ts) {
            return Some((next, arg));
        }
    }
    None
}

fn fresh_arg_at(
    kind: SbKind,
    state: &SbState,
    r: ReplicaId,
    rng: &mut ChaCha8Rng,
    fresh: &mut u64,
) -> Option<LocalEffectorArg> {
    random_update_at(kind, state, r, rng, fresh).map(|(_, arg)| arg)
}

fn eq_or_fail(report: &mut Report, lhs: &SbState, rhs: &SbState, what: &str) {
    report.checked += 1;
    if lhs != rhs {
        report.fail(format!("{what}: {lhs:?} != {rhs:?}"));
    }
}

/// Checks one of the state-based effector properties over random samples.
/// Property names: `semilattice`, `p1-soundness`, `prop1`..`prop6`,
/// `prop'1`..`prop'3`.
pub fn check_sb_props(kind: SbKind, prop: &str, samples: usize, seed: u64) -> Result<Report> {
    let replicas = 3usize;
    let all: Vec<u32> = (0..replicas as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fresh = 0u64;
    let mut report = Report::default();
    let unique = matches!(kind, SbKind::MvReg | SbKind::LwwElementSet);
    let cumulative = kind == SbKind::PnCounter;
    let idempotent = kind == SbKind::TwoPSet;
    let class_err = || Error::UnknownProp(format!("{prop} for {}", kind.name()));
    for _ in 0..samples {
        let steps = rng.gen_range(0..6);
        match prop {
            "semilattice" => {
                let s1 = grow_state(kind, replicas, &all, steps, &mut rng, &mut fresh);
                let s2 = grow_state(kind, replicas, &all, steps + 1, &mut rng, &mut fresh);
                let s3 = grow_state(kind, replicas, &all, steps, &mut rng, &mut fresh);
                let m12 = sb_merge(kind, &s1, &s2)?;
                eq_or_fail(&mut report, &m12, &sb_merge(kind, &s2, &s1)?, "merge commutativity");
                eq_or_fail(&mut report, &sb_merge(kind, &s1, &s1)?, &s1, "merge idempotence");
                eq_or_fail(
                    &mut report,
                    &sb_merge(kind, &m12, &s3)?,
                    &sb_merge(kind, &s1, &sb_merge(kind, &s2, &s3)?)?,
                    "merge associativity",
                );
                report.checked += 1;
                if !sb_compare(kind, &s1, &m12)? {
                    report.fail(format!("compare(s, merge(s,s')) failed: {s1:?} {m12:?}"));
                }
            }
            "p1-soundness" if unique => {
                let s = grow_state(kind, replicas, &all, steps, &mut rng, &mut fresh);
                let r = ReplicaId(rng.gen_range(0..replicas) as u32);
                if let Some(arg) = fresh_arg_at(kind, &s, r, &mut rng, &mut fresh) {
                    report.checked += 1;
                    if !sb_p1(kind, &s, &arg)? {
                        report.fail(format!("freshly generated arg violates P1: {arg:?} {s:?}"));
                    }
                }
            }
            "prop1" if unique => {
                let s = grow_state(kind, replicas, &all, steps, &mut rng, &mut fresh);
                let a1 = fresh_arg_at(kind, &s, ReplicaId(0), &mut rng, &mut fresh);
                let a2 = fresh_arg_at(kind, &s, ReplicaId(1), &mut rng, &mut fresh);
                if let (Some(a1), Some(a2)) = (a1, a2) {
                    if a1 == a2 {
                        continue;
                    }
                    let lhs = sb_apply_local(kind, &sb_apply_local(kind, &s, &a1)?, &a2)?;
                    let rhs = sb_apply_local(kind, &sb_apply_local(kind, &s, &a2)?, &a1)?;
                    eq_or_fail(&mut report, &lhs, &rhs, "concurrent local effectors commute");
                }
            }
            "prop2" | "prop3" if unique => {
                let s1 = grow_state(kind, replicas, &all, steps, &mut rng, &mut fresh);
                let s2 = grow_state(kind, replicas, &all, steps + 1, &mut rng, &mut fresh);
                let merged = sb_merge(kind, &s1, &s2)?;
                let r = ReplicaId(rng.gen_range(0..replicas) as u32);
                let Some(arg) = fresh_arg_at(kind, &merged, r, &mut rng, &mut fresh) else {
                    continue;
                };
                // Generated above both states, so P1 holds for each.
                debug_assert!(sb_p1(kind, &s1, &arg)? && sb_p1(kind, &s2, &arg)?);
                if prop == "prop2" {
                    let lhs = sb_merge(kind, &s1, &sb_apply_local(kind, &s2, &arg)?)?;
                    let rhs = sb_apply_local(kind, &merged, &arg)?;
                    eq_or_fail(&mut report, &lhs, &rhs, "merge/apply exchange");
                } else {
                    let lhs = sb_merge(
                        kind,
                        &sb_apply_local(kind, &s1, &arg)?,
                        &sb_apply_local(kind, &s2, &arg)?,
                    )?;
                    let rhs = sb_apply_local(kind, &merged, &arg)?;
                    eq_or_fail(&mut report, &lhs, &rhs, "double apply/merge exchange");
                }
            }
            "prop4" => {
                let s1 = grow_state(kind, replicas, &all, steps, &mut rng, &mut fresh);
                let s2 = grow_state(kind, replicas, &all, steps, &mut rng, &mut fresh);
                let init = SbState::initial(kind, replicas);
                eq_or_fail(
                    &mut report,
                    &sb_merge(kind, &init, &init)?,
                    &init,
                    "merge of initial states",
                );
                eq_or_fail(
                    &mut report,
                    &sb_merge(kind, &s1, &s2)?,
                    &sb_merge(kind, &s2, &s1)?,
                    "merge symmetry",
                );
            }
            "prop5" => {
                let s = grow_state(kind, replicas, &all, steps, &mut rng, &mut fresh);
                let r = ReplicaId(rng.gen_range(0..replicas) as u32);
                if let Some((next, arg)) = random_update_at(kind, &s, r, &mut rng, &mut fresh) {
                    eq_or_fail(
                        &mut report,
                        &sb_apply_local(kind, &s, &arg)?,
                        &next,
                        "local effector reproduces the update",
                    );
                    eq_or_fail(&mut report, &sb_merge(kind, &s, &next)?, &next, "monotonicity");
                }
            }
            "prop6" if idempotent => {
                let s = grow_state(kind, replicas, &all, steps, &mut rng, &mut fresh);
                let r = ReplicaId(rng.gen_range(0..replicas) as u32);
                if let Some(arg) = fresh_arg_at(kind, &s, r, &mut rng, &mut fresh) {
                    let once = sb_apply_local(kind, &s, &arg)?;
                    let twice = sb_apply_local(kind, &once, &arg)?;
                    eq_or_fail(&mut report, &twice, &once, "re-application is a no-op");
                }
            }
            "prop'1" if cumulative || idempotent => {
                let s = grow_state(kind, replicas, &all, steps, &mut rng, &mut fresh);
                let a1 = fresh_arg_at(kind, &s, ReplicaId(0), &mut rng, &mut fresh);
                let a2 = fresh_arg_at(kind, &s, ReplicaId(1), &mut rng, &mut fresh);
                if let (Some(a1), Some(a2)) = (a1, a2) {
                    let lhs = sb_apply_local(kind, &sb_apply_local(kind, &s, &a1)?, &a2)?;
                    let rhs = sb_apply_local(kind, &sb_apply_local(kind, &s, &a2)?, &a1)?;
                    eq_or_fail(&mut report, &lhs, &rhs, "all local effectors commute");
                }
            }
            "prop'2" | "prop'3" if cumulative || idempotent => {
                // Build both states without any application of the argument:
                // PN-Counter states grown at other replicas; 2P-Set arguments
                // use fresh element names.
                let r = ReplicaId((replicas - 1) as u32);
                let others: Vec<u32> = (0..(replicas as u32 - 1)).collect();
                let s1 = grow_state(kind, replicas, &others, steps, &mut rng, &mut fresh);
                let s2 = grow_state(kind, replicas, &others, steps + 1, &mut rng, &mut fresh);
                let Some(arg) = fresh_arg_at(kind, &s2, r, &mut rng, &mut fresh) else {
                    continue;
                };
                if !(sb_p2(kind, &s1, &arg)? && sb_p2(kind, &s2, &arg)?) {
                    continue;
                }
                let merged = sb_merge(kind, &s1, &s2)?;
                if prop == "prop'2" {
                    let lhs = sb_merge(kind, &s1, &sb_apply_local(kind, &s2, &arg)?)?;
                    let rhs = sb_apply_local(kind, &merged, &arg)?;
                    eq_or_fail(&mut report, &lhs, &rhs, "merge/apply exchange (P2)");
                } else {
                    let lhs = sb_merge(
                        kind,
                        &sb_apply_local(kind, &s1, &arg)?,
                        &sb_apply_local(kind, &s2, &arg)?,
                    )?;
                    let rhs = sb_apply_local(kind, &merged, &arg)?;
                    eq_or_fail(&mut report, &lhs, &rhs, "double apply/merge exchange (P2)");
                }
            }
            _ => return Err(class_err()),
        }
    }
    Ok(report)
}
