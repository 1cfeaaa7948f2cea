//! Update pipelines: forward chase for inserts, backward chase for deletes.
//!
//! Both chases work on overlay views of the instance and only commit once
//! the outcome is known. Fresh nulls are drawn from the instance's counter,
//! which advances even when an insert is rejected so names are never reused.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use log::debug;
use serde::Serialize;

use crate::model::{atoms_isomorphic, Atom, Constraint, Substitution, Term};
use crate::simplify::{simplify_instance, SimplifyError};
use crate::store::{
    exists_instance, match_pattern_from, FactSet, Instance, MatchLimits, Metric, NullGen,
    Overlay, Pattern, QueryStats, StoreError,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum UpdateError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Simplify(#[from] SimplifyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Accepted,
    Rejected,
    Applied,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Accepted => "Accepted",
            Status::Rejected => "Rejected",
            Status::Applied => "Applied",
        })
    }
}

/// Result of an insert or delete. The instance itself is updated in place
/// (and left untouched on rejection).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateOutcome {
    pub status: Status,
    pub to_ins: Vec<Atom>,
    /// Degrees the chase assigned to the nulls it introduced.
    pub to_ins_degrees: BTreeMap<Term, u32>,
    pub to_del: Vec<Atom>,
    pub stats: QueryStats,
}

/// Atoms produced by the forward chase, in generation order.
#[derive(Debug, Clone, Default)]
pub struct ToIns {
    pub atoms: Vec<Atom>,
    pub set: FactSet,
    /// Degrees of nulls not already in the base instance.
    pub degrees: BTreeMap<Term, u32>,
}

impl ToIns {
    fn push(&mut self, a: Atom) -> bool {
        if self.set.insert(a.clone()) {
            self.atoms.push(a);
            true
        } else {
            false
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn contains(&self, a: &Atom) -> bool {
        self.set.contains(a)
    }
}

fn check_request(inst: &Instance, cs: &[Constraint], atoms: &[Atom]) -> Result<(), UpdateError> {
    let mut probe = Instance::new();
    probe.declare_constraints(cs)?;
    for a in atoms {
        if !a.is_fact() {
            return Err(StoreError::NotAFact(a.to_string()).into());
        }
        inst.check_arity(a)?;
        probe.check_arity(a)?;
    }
    for c in cs {
        for a in c.body.iter().chain(std::iter::once(&c.head)) {
            inst.check_arity(a)?;
        }
    }
    Ok(())
}

/// Binds the variables of `pattern` so that it equals `fact`.
fn unify_atom(pattern: &Atom, fact: &Atom) -> Option<Substitution> {
    if pattern.pred != fact.pred || pattern.arity() != fact.arity() {
        return None;
    }
    let mut h = Substitution::new();
    for (p, f) in pattern.terms.iter().zip(&fact.terms) {
        if p.is_var() {
            match h.get(p) {
                Some(v) if v != f => return None,
                Some(_) => {}
                None => h.bind(p.clone(), f.clone()),
            }
        } else if p != f {
            return None;
        }
    }
    Some(h)
}

fn null_degree(base: &Instance, local: &BTreeMap<Term, u32>, n: &Term) -> u32 {
    local
        .get(n)
        .copied()
        .or_else(|| base.degree(n))
        .unwrap_or(0)
}

/// Degree of fresh nulls created by a trigger: one more than the highest
/// degree among the body's nulls, 0 for a null-free body.
fn trigger_degree(base: &Instance, local: &BTreeMap<Term, u32>, body: &[Atom]) -> u32 {
    body.iter()
        .flat_map(|a| a.terms.iter().filter(|t| t.is_null()))
        .map(|n| null_degree(base, local, n) + 1)
        .max()
        .unwrap_or(0)
}

/// Forward chase from `request` over `(base ∖ minus) ∪ ToIns`.
///
/// `seed` gives degrees for request nulls absent from `base`; other new
/// request nulls get 0.
fn forward(
    base: &Instance,
    minus: Option<&BTreeSet<Atom>>,
    cs: &[Constraint],
    dmax: u32,
    request: &[Atom],
    seed: &BTreeMap<Term, u32>,
    gen: &mut NullGen,
) -> ToIns {
    let mut out = ToIns::default();
    for a in request {
        for n in a.terms.iter().filter(|t| t.is_null()) {
            if !base.has_null(n) || seed.contains_key(n) {
                let d = seed.get(n).copied().unwrap_or(0);
                out.degrees.entry(n.clone()).or_insert(d);
            }
            gen.observe(n);
        }
        out.push(a.clone());
    }
    let patterns: Vec<Pattern> = cs.iter().map(Pattern::for_constraint).collect();
    let mut next = 0;
    while next < out.atoms.len() {
        let trigger_atom = out.atoms[next].clone();
        next += 1;
        for (ci, c) in cs.iter().enumerate() {
            for b in &c.body {
                let Some(init) = unify_atom(b, &trigger_atom) else {
                    continue;
                };
                let answers = {
                    let view = view_of(base, &out.set, minus);
                    match_pattern_from(&view, &patterns[ci], &init, MatchLimits::NONE).answers
                };
                for h in answers {
                    fire(base, minus, c, dmax, &h, gen, &mut out);
                }
            }
        }
    }
    out
}

fn view_of<'a>(
    base: &'a Instance,
    plus: &'a FactSet,
    minus: Option<&'a BTreeSet<Atom>>,
) -> Overlay<'a> {
    let v = Overlay::new(base).plus(plus);
    match minus {
        Some(m) => v.minus(m),
        None => v,
    }
}

/// Applies one chase step for a body match `h`, unless the head became
/// satisfied meanwhile or its degree would exceed `dmax`.
fn fire(
    base: &Instance,
    minus: Option<&BTreeSet<Atom>>,
    c: &Constraint,
    dmax: u32,
    h: &Substitution,
    gen: &mut NullGen,
    out: &mut ToIns,
) {
    if exists_instance(&view_of(base, &out.set, minus), &c.head, h) {
        return;
    }
    let body: Vec<Atom> = c.body.iter().map(|a| h.apply(a)).collect();
    let existentials = c.existential_vars();
    let fresh_degree = trigger_degree(base, &out.degrees, &body);
    let head_degree = h
        .apply(&c.head)
        .terms
        .iter()
        .filter(|t| t.is_null())
        .map(|n| null_degree(base, &out.degrees, n))
        .chain((!existentials.is_empty()).then_some(fresh_degree))
        .max()
        .unwrap_or(0);
    if head_degree > dmax {
        debug!("{c}: head degree {head_degree} exceeds {dmax}, not generated");
        return;
    }
    let mut h2 = h.clone();
    for v in &existentials {
        let n = gen.fresh();
        out.degrees.insert(n.clone(), fresh_degree);
        h2.bind(v.clone(), n);
    }
    let head = h2.apply(&c.head);
    debug!("{c}: generated {head}");
    base.counters().bump(Metric::AtomsGenerated);
    out.push(head);
}

/// Chase4Insert: the atoms to add for `request`, degrees assigned. The
/// instance's facts are not modified; its null counter advances.
pub fn chase4insert(inst: &mut Instance, cs: &[Constraint], dmax: u32, request: &[Atom]) -> ToIns {
    let mut gen = inst.null_gen();
    let out = forward(inst, None, cs, dmax, request, &BTreeMap::new(), &mut gen);
    inst.set_null_gen(gen);
    out
}

/// Insert: chase, simplify the touched blocks, then accept if every bucket
/// null has degree below `dmax`.
pub fn insert(
    inst: &mut Instance,
    cs: &[Constraint],
    dmax: u32,
    request: &[Atom],
) -> Result<UpdateOutcome, UpdateError> {
    check_request(inst, cs, request)?;
    let start = inst.stats();
    let mut gen = inst.null_gen();
    let to_ins = forward(inst, None, cs, dmax, request, &BTreeMap::new(), &mut gen);
    let mut work = inst.clone();
    for a in &to_ins.atoms {
        work.add_fact_with_degrees(a.clone(), &to_ins.degrees)?;
    }
    let bucket = work.q_bucket(&to_ins.atoms);
    simplify_instance(&mut work, &bucket)?;
    let accepted = work.q_degree_ok(&bucket, dmax);
    let status = if accepted {
        work.q_set_degrees(&bucket, 0);
        work.set_null_gen(gen);
        *inst = work;
        Status::Accepted
    } else {
        inst.adopt_counters(&work);
        inst.set_null_gen(gen);
        Status::Rejected
    };
    Ok(UpdateOutcome {
        status,
        to_ins: to_ins.atoms,
        to_ins_degrees: to_ins.degrees,
        to_del: Vec::new(),
        stats: inst.stats().since(&start),
    })
}

/// Chase4Delete: the atoms to remove and to add so that the deletion of
/// `iso_del` sticks.
pub fn chase4delete(
    inst: &mut Instance,
    cs: &[Constraint],
    dmax: u32,
    iso_del: &BTreeSet<Atom>,
    d_request: &[Atom],
) -> (BTreeSet<Atom>, ToIns) {
    let mut gen = inst.null_gen();
    let r = backward(inst, cs, dmax, iso_del, d_request, &mut gen);
    inst.set_null_gen(gen);
    r
}

fn backward(
    base: &Instance,
    cs: &[Constraint],
    dmax: u32,
    iso_del: &BTreeSet<Atom>,
    d_request: &[Atom],
    gen: &mut NullGen,
) -> (BTreeSet<Atom>, ToIns) {
    let mut to_del: BTreeSet<Atom> = iso_del.clone();
    let mut to_ins = ToIns::default();
    let mut processed: BTreeSet<(usize, Substitution)> = BTreeSet::new();
    let mut pending = Triggers::default();
    for d in iso_del {
        pending.discover(base, cs, &to_del, &to_ins, d);
    }
    while let Some((ci, h)) = pending.next(cs, base, &to_del, &to_ins, &processed) {
        processed.insert((ci, h.clone()));
        let c = &cs[ci];
        let view_has_head = {
            let view = Overlay::new(base).plus(&to_ins.set).minus(&to_del);
            let universal = h.restrict(&c.universal_vars());
            exists_instance(&view, &c.head, &universal)
        };
        if view_has_head {
            continue;
        }
        let deleted_head = h.apply(&c.head);
        let marked = h.apply(c.marked_atom());
        let body: Vec<Atom> = c.body.iter().map(|a| h.apply(a)).collect();
        let fresh_degree = trigger_degree(base, &to_ins.degrees, &body);
        let mut h2 = h.restrict(&c.universal_vars());
        let mut seed = to_ins.degrees.clone();
        for v in c.existential_vars() {
            let n = gen.fresh();
            seed.insert(n.clone(), fresh_degree);
            h2.bind(v, n);
        }
        let regenerated = h2.apply(&c.head);
        if atoms_isomorphic(&regenerated, &deleted_head) {
            debug!("{c}: {regenerated} would regenerate {deleted_head}; deleting {marked}");
            if to_del.insert(marked.clone()) {
                pending.discover(base, cs, &to_del, &to_ins, &marked);
            }
            continue;
        }
        let mut request: Vec<Atom> = to_ins
            .atoms
            .iter()
            .filter(|a| !to_del.contains(*a))
            .cloned()
            .collect();
        request.push(regenerated.clone());
        let probe = forward(base, Some(&to_del), cs, dmax, &request, &seed, gen);
        base.counters().bump(Metric::IsoQueries);
        let meets = probe.atoms.iter().any(|a| {
            to_del
                .iter()
                .chain(d_request)
                .any(|d| atoms_isomorphic(a, d))
        });
        let degrees_ok = probe
            .atoms
            .iter()
            .flat_map(|a| a.terms.iter().filter(|t| t.is_null()))
            .all(|n| null_degree(base, &probe.degrees, n) < dmax);
        if !meets && degrees_ok {
            debug!("{c}: keeping {regenerated} in place of {deleted_head}");
            for a in &probe.atoms {
                to_ins.push(a.clone());
            }
            for (n, d) in probe.degrees {
                to_ins.degrees.entry(n).or_insert(d);
            }
        } else {
            debug!("{c}: regeneration of {deleted_head} rejected; deleting {marked}");
            let mut added = vec![marked];
            if meets {
                added.push(regenerated);
            }
            for a in added {
                if to_del.insert(a.clone()) {
                    pending.discover(base, cs, &to_del, &to_ins, &a);
                }
            }
        }
    }
    to_ins.atoms.retain(|a| !to_del.contains(a));
    to_ins.set = to_ins.atoms.iter().cloned().collect();
    (to_del, to_ins)
}

/// Candidate triggers `(c, h)` with `h(head(c)) ∈ ToDel`, ordered by
/// constraint, then deleted atom, then binding. Body matches are computed
/// once, when the atom enters ToDel, and re-checked against the current
/// view when popped.
#[derive(Default)]
struct Triggers {
    queue: BTreeSet<(usize, Atom, Substitution)>,
}

impl Triggers {
    fn discover(&mut self, base: &Instance, cs: &[Constraint], to_del: &BTreeSet<Atom>, to_ins: &ToIns, d: &Atom) {
        let view = Overlay::new(base).plus(&to_ins.set).minus(to_del);
        for (ci, c) in cs.iter().enumerate() {
            let Some(init) = unify_atom(&c.head, d) else {
                continue;
            };
            let body = Pattern::new(c.body.clone());
            for h in match_pattern_from(&view, &body, &init, MatchLimits::NONE).answers {
                self.queue.insert((ci, d.clone(), h));
            }
        }
    }

    /// The first queued trigger not yet processed whose body is still in
    /// `(D ∪ ToIns) ∖ ToDel`.
    fn next(
        &mut self,
        cs: &[Constraint],
        base: &Instance,
        to_del: &BTreeSet<Atom>,
        to_ins: &ToIns,
        processed: &BTreeSet<(usize, Substitution)>,
    ) -> Option<(usize, Substitution)> {
        while let Some((ci, _, h)) = self.queue.pop_first() {
            if processed.contains(&(ci, h.clone())) {
                continue;
            }
            let live = cs[ci].body.iter().all(|a| {
                let a = h.apply(a);
                !to_del.contains(&a) && (base.contains(&a) || to_ins.contains(&a))
            });
            if live {
                return Some((ci, h));
            }
        }
        None
    }
}

/// Delete: remove every atom isomorphic to one of `d_request`, with the
/// side effects needed to keep the constraints satisfied. Never rejected.
pub fn delete(
    inst: &mut Instance,
    cs: &[Constraint],
    dmax: u32,
    d_request: &[Atom],
) -> Result<UpdateOutcome, UpdateError> {
    check_request(inst, cs, d_request)?;
    let start = inst.stats();
    let iso_del = inst.q_iso(d_request);
    let mut gen = inst.null_gen();
    let (to_del, to_ins) = backward(inst, cs, dmax, &iso_del, d_request, &mut gen);
    let mut work = inst.clone();
    for a in &to_ins.atoms {
        work.add_fact_with_degrees(a.clone(), &to_ins.degrees)?;
    }
    for a in &to_del {
        work.remove_fact(a);
    }
    let touched: Vec<Atom> = to_ins.atoms.iter().chain(&to_del).cloned().collect();
    let bucket = work.q_bucket(&touched);
    simplify_instance(&mut work, &bucket)?;
    work.q_set_degrees(&bucket, 0);
    work.set_null_gen(gen);
    *inst = work;
    Ok(UpdateOutcome {
        status: Status::Applied,
        to_ins: to_ins.atoms,
        to_ins_degrees: to_ins.degrees,
        to_del: to_del.into_iter().collect(),
        stats: inst.stats().since(&start),
    })
}
