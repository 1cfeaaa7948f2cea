//! From-scratch reference implementations used as test oracles.
//!
//! Nothing here touches the store's indexes or matcher: facts are grouped
//! by predicate locally and joined with plain nested loops in textual order.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{Atom, Constraint, Substitution, Term};
use crate::store::Instance;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("instance has {atoms} atoms, the oracle handles at most {limit}")]
    TooLarge { atoms: usize, limit: usize },
    #[error("search exceeded its candidate budget")]
    Budget,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleLimits {
    pub max_atoms: usize,
    pub max_candidates: u64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_atoms: 30,
            max_candidates: 1_000_000,
        }
    }
}

/// A constraint `c` with a body match `h` and no head extension.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub constraint: usize,
    pub binding: Substitution,
}

struct Facts<'a> {
    by_pred: BTreeMap<&'a str, Vec<&'a Atom>>,
}

impl<'a> Facts<'a> {
    fn new(facts: impl IntoIterator<Item = &'a Atom>) -> Facts<'a> {
        let mut by_pred: BTreeMap<&str, Vec<&Atom>> = BTreeMap::new();
        for a in facts {
            by_pred.entry(&a.pred).or_default().push(a);
        }
        Facts { by_pred }
    }

    fn of(&self, pred: &str) -> &[&'a Atom] {
        self.by_pred.get(pred).map_or(&[], Vec::as_slice)
    }
}

/// Extends `h` so that `pattern` maps onto `fact`, treating `movable`
/// terms as unknowns. Returns `None` on a clash.
fn extend(
    h: &BTreeMap<Term, Term>,
    pattern: &Atom,
    fact: &Atom,
    movable: &dyn Fn(&Term) -> bool,
) -> Option<BTreeMap<Term, Term>> {
    if pattern.pred != fact.pred || pattern.arity() != fact.arity() {
        return None;
    }
    let mut out = h.clone();
    for (p, f) in pattern.terms.iter().zip(&fact.terms) {
        if movable(p) {
            match out.get(p) {
                Some(v) if v != f => return None,
                Some(_) => {}
                None => {
                    out.insert(p.clone(), f.clone());
                }
            }
        } else if p != f {
            return None;
        }
    }
    Some(out)
}

/// Every extension of `init` mapping `atoms` into `facts`, joined left to
/// right. `budget` counts candidate facts tried.
fn all_matches(
    facts: &Facts<'_>,
    atoms: &[Atom],
    init: BTreeMap<Term, Term>,
    movable: &dyn Fn(&Term) -> bool,
    budget: &mut Option<u64>,
    first_only: bool,
) -> Result<Vec<BTreeMap<Term, Term>>, OracleError> {
    let mut out = Vec::new();
    let mut stack = vec![(0usize, init)];
    while let Some((i, h)) = stack.pop() {
        if i == atoms.len() {
            out.push(h);
            if first_only {
                break;
            }
            continue;
        }
        for f in facts.of(&atoms[i].pred).iter().rev() {
            if let Some(b) = budget {
                if *b == 0 {
                    return Err(OracleError::Budget);
                }
                *b -= 1;
            }
            if let Some(h2) = extend(&h, &atoms[i], f, movable) {
                stack.push((i + 1, h2));
            }
        }
    }
    Ok(out)
}

fn is_var(t: &Term) -> bool {
    t.is_var()
}

fn head_holds(facts: &Facts<'_>, c: &Constraint, h: &BTreeMap<Term, Term>) -> bool {
    facts
        .of(&c.head.pred)
        .iter()
        .any(|f| extend(h, &c.head, f, &is_var).is_some())
}

/// Violations of `cs` in `facts`, sorted.
pub fn violations<'a>(facts: impl IntoIterator<Item = &'a Atom>, cs: &[Constraint]) -> Vec<Violation> {
    let facts = Facts::new(facts);
    let mut out = BTreeSet::new();
    for (ci, c) in cs.iter().enumerate() {
        let matches = all_matches(&facts, &c.body, BTreeMap::new(), &is_var, &mut None, false)
            .expect("unbounded search");
        for h in matches {
            if !head_holds(&facts, c, &h) {
                out.insert(Violation {
                    constraint: ci,
                    binding: h.into_iter().collect(),
                });
            }
        }
    }
    out.into_iter().collect()
}

/// The violations of `cs` in the instance; empty means consistent.
pub fn is_consistent(inst: &Instance, cs: &[Constraint]) -> Vec<Violation> {
    violations(inst.facts(), cs)
}

/// Saturates the instance with naive rounds: collect every unsatisfied
/// trigger over the whole instance, then fire them (re-checking the head).
/// Fresh nulls get one more than the body's highest degree; heads that
/// would exceed `dmax` are not generated.
pub fn full_chase(inst: &Instance, cs: &[Constraint], dmax: u32) -> Instance {
    let mut out = inst.clone();
    loop {
        let facts: Vec<Atom> = out.facts().cloned().collect();
        let mut triggers = Vec::new();
        {
            let idx = Facts::new(&facts);
            for (ci, c) in cs.iter().enumerate() {
                for h in all_matches(&idx, &c.body, BTreeMap::new(), &is_var, &mut None, false)
                    .expect("unbounded search")
                {
                    if !head_holds(&idx, c, &h) {
                        triggers.push((ci, h));
                    }
                }
            }
        }
        let mut changed = false;
        for (ci, h) in triggers {
            let c = &cs[ci];
            let current: Vec<Atom> = out.facts().cloned().collect();
            if head_holds(&Facts::new(&current), c, &h) {
                continue;
            }
            let sub: Substitution = h.into_iter().collect();
            let body_deg = c
                .body
                .iter()
                .flat_map(|a| sub.apply(a).terms)
                .filter(Term::is_null)
                .map(|n| out.degree(&n).unwrap_or(0) + 1)
                .max()
                .unwrap_or(0);
            let existentials = c.existential_vars();
            let partial = sub.apply(&c.head);
            let head_deg = partial
                .terms
                .iter()
                .filter(|t| t.is_null())
                .map(|n| out.degree(n).unwrap_or(0))
                .chain((!existentials.is_empty()).then_some(body_deg))
                .max()
                .unwrap_or(0);
            if head_deg > dmax {
                continue;
            }
            let mut full = sub.clone();
            let mut fresh = Vec::new();
            for v in existentials {
                let n = out.fresh_null();
                fresh.push(n.clone());
                full.bind(v, n);
            }
            let head = full.apply(&c.head);
            if out.add_fact(head).expect("constraint arity checked by caller") {
                changed = true;
            }
            for n in fresh {
                out.set_degree(&n, body_deg);
            }
        }
        if !changed {
            return out;
        }
    }
}

fn endomorphism_avoiding(
    facts: &[Atom],
    avoid: &Atom,
    frozen: &BTreeSet<Term>,
    budget: &mut Option<u64>,
) -> Result<Option<Substitution>, OracleError> {
    let target: Vec<&Atom> = facts.iter().filter(|a| *a != avoid).collect();
    let idx = Facts::new(target);
    // Null-free atoms first, then by number of nulls, so constants prune early.
    let mut order: Vec<Atom> = facts.to_vec();
    order.sort_by_key(|a| a.terms.iter().filter(|t| t.is_null() && !frozen.contains(*t)).count());
    let movable = |t: &Term| t.is_null() && !frozen.contains(t);
    let found = all_matches(&idx, &order, BTreeMap::new(), &movable, budget, true)?;
    Ok(found.into_iter().next().map(|h| h.into_iter().collect()))
}

/// A core of the instance, found by repeatedly mapping it into itself
/// minus one atom. Nulls in `frozen` are treated as constants.
pub fn full_core_frozen(
    inst: &Instance,
    frozen: &BTreeSet<Term>,
    limits: OracleLimits,
) -> Result<Instance, OracleError> {
    if inst.len() > limits.max_atoms {
        return Err(OracleError::TooLarge {
            atoms: inst.len(),
            limit: limits.max_atoms,
        });
    }
    let mut budget = Some(limits.max_candidates);
    let mut current: Vec<Atom> = inst.facts().cloned().collect();
    'outer: loop {
        for a in current.clone() {
            if !a.terms.iter().any(|t| t.is_null() && !frozen.contains(t)) {
                continue;
            }
            if let Some(h) = endomorphism_avoiding(&current, &a, frozen, &mut budget)? {
                let image: BTreeSet<Atom> = current.iter().map(|x| h.apply(x)).collect();
                current = image.into_iter().collect();
                continue 'outer;
            }
        }
        break;
    }
    let mut out = Instance::new();
    for a in current {
        out.add_fact(a).expect("arity preserved by homomorphisms");
    }
    let nulls: Vec<Term> = out.nulls().cloned().collect();
    for n in nulls {
        if let Some(d) = inst.degree(&n) {
            out.set_degree(&n, d);
        }
    }
    Ok(out)
}

/// A core of the instance (unique up to null renaming).
pub fn full_core(inst: &Instance) -> Result<Instance, OracleError> {
    full_core_frozen(inst, &BTreeSet::new(), OracleLimits::default())
}

/// Whether the two fact sets are equal up to a bijective renaming of nulls.
pub fn isomorphic(a: &BTreeSet<Atom>, b: &BTreeSet<Atom>) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let nulls = |s: &BTreeSet<Atom>| -> BTreeSet<Term> {
        s.iter()
            .flat_map(|x| x.terms.iter().filter(|t| t.is_null()).cloned())
            .collect()
    };
    if nulls(a).len() != nulls(b).len() {
        return false;
    }
    let idx = Facts::new(b);
    let mut order: Vec<Atom> = a.iter().cloned().collect();
    order.sort_by_key(|x| x.terms.iter().filter(|t| t.is_null()).count());
    search_injective(&idx, &order, 0, &mut BTreeMap::new(), &mut BTreeSet::new())
}

fn search_injective(
    idx: &Facts<'_>,
    atoms: &[Atom],
    i: usize,
    h: &mut BTreeMap<Term, Term>,
    used: &mut BTreeSet<Term>,
) -> bool {
    if i == atoms.len() {
        return true;
    }
    let pattern = &atoms[i];
    for f in idx.of(&pattern.pred) {
        let mut added = Vec::new();
        let mut ok = true;
        for (p, t) in pattern.terms.iter().zip(&f.terms) {
            if p.is_null() {
                match h.get(p) {
                    Some(v) => ok = v == t,
                    None => {
                        if t.is_null() && !used.contains(t) {
                            h.insert(p.clone(), t.clone());
                            used.insert(t.clone());
                            added.push(p.clone());
                        } else {
                            ok = false;
                        }
                    }
                }
            } else {
                ok = p == t;
            }
            if !ok {
                break;
            }
        }
        if ok && search_injective(idx, atoms, i + 1, h, used) {
            return true;
        }
        for p in added {
            if let Some(t) = h.remove(&p) {
                used.remove(&t);
            }
        }
    }
    false
}

/// Instance-level isomorphism, degrees ignored.
pub fn instances_isomorphic(a: &Instance, b: &Instance) -> bool {
    let fa: BTreeSet<Atom> = a.facts().cloned().collect();
    let fb: BTreeSet<Atom> = b.facts().cloned().collect();
    isomorphic(&fa, &fb)
}

/// LinkedNull by iterating to a fix-point over the whole fact set.
pub fn naive_linked_null<'a>(
    facts: impl IntoIterator<Item = &'a Atom>,
    null: &Term,
) -> BTreeSet<Atom> {
    let facts: Vec<&Atom> = facts.into_iter().collect();
    let mut block: BTreeSet<Atom> = facts
        .iter()
        .filter(|a| a.terms.contains(null))
        .map(|a| (*a).clone())
        .collect();
    loop {
        let nulls: BTreeSet<&Term> = block
            .iter()
            .flat_map(|a| a.terms.iter().filter(|t| t.is_null()))
            .collect();
        let next: BTreeSet<Atom> = facts
            .iter()
            .filter(|a| a.terms.iter().any(|t| nulls.contains(t)))
            .map(|a| (*a).clone())
            .collect();
        if next == block {
            return block;
        }
        block = next;
    }
}

/// Every substitution of the pattern's variables by terms of the active
/// domain that maps `atoms` into `facts` and leaves `negated` without an
/// instance. Exponential; for small cases only.
pub fn brute_force_answers(
    facts: &BTreeSet<Atom>,
    atoms: &[Atom],
    negated: Option<&Atom>,
) -> BTreeSet<Substitution> {
    let domain: Vec<Term> = facts
        .iter()
        .flat_map(|a| a.terms.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let vars: Vec<Term> = atoms
        .iter()
        .flat_map(|a| a.vars().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut out = BTreeSet::new();
    if domain.is_empty() && !vars.is_empty() {
        return out;
    }
    let mut choice = vec![0usize; vars.len()];
    loop {
        let h: Substitution = vars
            .iter()
            .cloned()
            .zip(choice.iter().map(|&k| domain[k].clone()))
            .collect();
        if atoms.iter().all(|a| facts.contains(&h.apply(a))) {
            let blocked = negated.is_some_and(|head| {
                let partial = h.apply(head);
                facts.iter().any(|f| {
                    extend(&BTreeMap::new(), &partial, f, &is_var).is_some()
                })
            });
            if !blocked {
                out.insert(h);
            }
        }
        let mut k = 0;
        loop {
            if k == choice.len() {
                return out;
            }
            choice[k] += 1;
            if choice[k] < domain.len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}
