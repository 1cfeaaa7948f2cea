//! Indexed fact store and native query engine.
//!
//! An [`Instance`] keeps its facts in a [`FactSet`] with two indexes: facts
//! by predicate and facts by ground term. The term index doubles as the
//! null-adjacency index used by [`Instance::linked_null`].
//!
//! Queries run against anything implementing [`FactSource`]. The chase uses
//! [`Overlay`] views such as `(D ∪ ToIns) ∖ ToDel` so that working sets are
//! never materialized.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;

use crate::model::{atoms_isomorphic, Atom, Constraint, Substitution, Symbol, Term};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("predicate {pred} used with arity {found}, previously declared with arity {expected}")]
    ArityMismatch {
        pred: String,
        expected: usize,
        found: usize,
    },
    #[error("atom {0} contains variables and cannot be stored as a fact")]
    NotAFact(String),
}

/// Query counters kept by an instance. Every query entry point bumps one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Conjunctive pattern evaluations (chase queries and `q_core`).
    PatternsEvaluated,
    BucketQueries,
    DegreeQueries,
    IsoQueries,
    /// `linked_null` calls.
    LinkedNullTraversals,
    /// Null-adjacency index lookups made while traversing blocks.
    NullLookups,
    QcoreEvals,
    Rewrites,
    AtomsGenerated,
    BlocksSimplified,
}

const METRICS: usize = 10;

#[derive(Debug, Default)]
pub struct Counters {
    values: [AtomicU64; METRICS],
}

impl Counters {
    pub fn bump(&self, m: Metric) {
        self.add(m, 1);
    }

    pub fn add(&self, m: Metric, n: u64) {
        self.values[m as usize].fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> QueryStats {
        let v = |m: Metric| self.values[m as usize].load(Ordering::Relaxed);
        QueryStats {
            patterns_evaluated: v(Metric::PatternsEvaluated),
            bucket_queries: v(Metric::BucketQueries),
            degree_queries: v(Metric::DegreeQueries),
            iso_queries: v(Metric::IsoQueries),
            linked_null_traversals: v(Metric::LinkedNullTraversals),
            null_lookups: v(Metric::NullLookups),
            qcore_evals: v(Metric::QcoreEvals),
            rewrites: v(Metric::Rewrites),
            atoms_generated: v(Metric::AtomsGenerated),
            blocks_simplified: v(Metric::BlocksSimplified),
        }
    }

    fn restore(&self, s: &QueryStats) {
        let set = |m: Metric, x: u64| self.values[m as usize].store(x, Ordering::Relaxed);
        set(Metric::PatternsEvaluated, s.patterns_evaluated);
        set(Metric::BucketQueries, s.bucket_queries);
        set(Metric::DegreeQueries, s.degree_queries);
        set(Metric::IsoQueries, s.iso_queries);
        set(Metric::LinkedNullTraversals, s.linked_null_traversals);
        set(Metric::NullLookups, s.null_lookups);
        set(Metric::QcoreEvals, s.qcore_evals);
        set(Metric::Rewrites, s.rewrites);
        set(Metric::AtomsGenerated, s.atoms_generated);
        set(Metric::BlocksSimplified, s.blocks_simplified);
    }
}

impl Clone for Counters {
    fn clone(&self) -> Self {
        let c = Counters::default();
        c.restore(&self.snapshot());
        c
    }
}

/// Plain copy of the counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct QueryStats {
    pub patterns_evaluated: u64,
    pub bucket_queries: u64,
    pub degree_queries: u64,
    pub iso_queries: u64,
    pub linked_null_traversals: u64,
    pub null_lookups: u64,
    pub qcore_evals: u64,
    pub rewrites: u64,
    pub atoms_generated: u64,
    pub blocks_simplified: u64,
}

impl QueryStats {
    /// Every query issued against the store: pattern evaluations, the
    /// bucket/degree/iso queries and one per null-adjacency lookup.
    pub fn total_queries(&self) -> u64 {
        self.patterns_evaluated
            + self.bucket_queries
            + self.degree_queries
            + self.iso_queries
            + self.null_lookups
    }

    pub fn since(&self, earlier: &QueryStats) -> QueryStats {
        QueryStats {
            patterns_evaluated: self.patterns_evaluated - earlier.patterns_evaluated,
            bucket_queries: self.bucket_queries - earlier.bucket_queries,
            degree_queries: self.degree_queries - earlier.degree_queries,
            iso_queries: self.iso_queries - earlier.iso_queries,
            linked_null_traversals: self.linked_null_traversals - earlier.linked_null_traversals,
            null_lookups: self.null_lookups - earlier.null_lookups,
            qcore_evals: self.qcore_evals - earlier.qcore_evals,
            rewrites: self.rewrites - earlier.rewrites,
            atoms_generated: self.atoms_generated - earlier.atoms_generated,
            blocks_simplified: self.blocks_simplified - earlier.blocks_simplified,
        }
    }
}

/// A set of facts indexed by predicate and by ground term.
#[derive(Clone, Default)]
pub struct FactSet {
    facts: BTreeSet<Atom>,
    by_pred: HashMap<Symbol, BTreeSet<Atom>>,
    by_term: HashMap<Term, BTreeSet<Atom>>,
}

impl FactSet {
    pub fn new() -> FactSet {
        FactSet::default()
    }

    pub fn insert(&mut self, atom: Atom) -> bool {
        if self.facts.contains(&atom) {
            return false;
        }
        self.by_pred
            .entry(atom.pred.clone())
            .or_default()
            .insert(atom.clone());
        for t in distinct_terms(&atom) {
            self.by_term.entry(t.clone()).or_default().insert(atom.clone());
        }
        self.facts.insert(atom);
        true
    }

    pub fn remove(&mut self, atom: &Atom) -> bool {
        if !self.facts.remove(atom) {
            return false;
        }
        if let Some(set) = self.by_pred.get_mut(&atom.pred) {
            set.remove(atom);
            if set.is_empty() {
                self.by_pred.remove(&atom.pred);
            }
        }
        for t in distinct_terms(atom) {
            if let Some(set) = self.by_term.get_mut(t) {
                set.remove(atom);
                if set.is_empty() {
                    self.by_term.remove(t);
                }
            }
        }
        true
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.facts.contains(atom)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom> {
        self.facts.iter()
    }

    pub fn with_pred(&self, pred: &str) -> impl Iterator<Item = &Atom> {
        self.by_pred.get(pred).into_iter().flatten()
    }

    pub fn with_term(&self, t: &Term) -> impl Iterator<Item = &Atom> {
        self.by_term.get(t).into_iter().flatten()
    }

    pub fn occurs(&self, t: &Term) -> bool {
        self.by_term.contains_key(t)
    }

    /// Ground terms occurring in the set, nulls included.
    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.by_term.keys()
    }

    /// Facts of `pred`, narrowed through the smallest index bucket among
    /// the `bound` ground terms.
    pub fn candidates<'a>(&'a self, pred: &str, bound: &[&Term]) -> Vec<&'a Atom> {
        let mut best: Option<&BTreeSet<Atom>> = None;
        for t in bound {
            match self.by_term.get(*t) {
                None => return Vec::new(),
                Some(set) => {
                    if best.is_none_or(|b| set.len() < b.len()) {
                        best = Some(set);
                    }
                }
            }
        }
        match best {
            Some(set) => {
                let pred_len = self.by_pred.get(pred).map_or(0, BTreeSet::len);
                if pred_len < set.len() {
                    self.with_pred(pred).collect()
                } else {
                    set.iter().filter(|a| &*a.pred == pred).collect()
                }
            }
            None => self.with_pred(pred).collect(),
        }
    }

    fn indexes_consistent(&self) -> bool {
        let mut rebuilt = FactSet::new();
        for a in &self.facts {
            rebuilt.insert(a.clone());
        }
        rebuilt.by_pred == self.by_pred && rebuilt.by_term == self.by_term
    }
}

impl PartialEq for FactSet {
    fn eq(&self, other: &Self) -> bool {
        self.facts == other.facts
    }
}

impl Eq for FactSet {}

impl std::fmt::Debug for FactSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.facts.iter()).finish()
    }
}

impl FromIterator<Atom> for FactSet {
    fn from_iter<I: IntoIterator<Item = Atom>>(iter: I) -> Self {
        let mut s = FactSet::new();
        for a in iter {
            s.insert(a);
        }
        s
    }
}

fn distinct_terms(atom: &Atom) -> impl Iterator<Item = &Term> {
    atom.terms
        .iter()
        .enumerate()
        .filter(|(i, t)| t.is_ground() && !atom.terms[..*i].contains(t))
        .map(|(_, t)| t)
}

/// Anything queries can run against.
pub trait FactSource {
    fn contains(&self, atom: &Atom) -> bool;

    /// Facts with predicate `pred`, possibly narrowed by one of the `bound`
    /// terms. Callers still have to unify.
    fn candidates(&self, pred: &str, bound: &[&Term]) -> Vec<&Atom>;

    fn counters(&self) -> &Counters;
}

/// Generator of fresh null names `N<k>`.
#[derive(Debug, Clone, Default)]
pub struct NullGen {
    next: u64,
}

impl NullGen {
    /// Keeps the counter above any `N<k>` name seen.
    pub fn observe(&mut self, null: &Term) {
        if let Term::Null(name) = null {
            if let Some(k) = name.strip_prefix('N').and_then(|d| d.parse::<u64>().ok()) {
                self.next = self.next.max(k + 1);
            }
        }
    }

    pub fn fresh(&mut self) -> Term {
        let k = self.next.max(1);
        self.next = k + 1;
        Term::null(&format!("N{k}"))
    }
}

/// The set of facts with null degrees, predicate arities and counters.
#[derive(Debug, Clone, Default)]
pub struct Instance {
    facts: FactSet,
    degrees: BTreeMap<Term, u32>,
    arities: BTreeMap<Symbol, usize>,
    nulls: NullGen,
    counters: Counters,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.facts == other.facts && self.degrees == other.degrees
    }
}

impl Eq for Instance {}

impl Instance {
    pub fn new() -> Instance {
        Instance::default()
    }

    pub fn from_facts(facts: impl IntoIterator<Item = Atom>) -> Result<Instance, StoreError> {
        let mut inst = Instance::new();
        for a in facts {
            inst.add_fact(a)?;
        }
        Ok(inst)
    }

    pub fn check_arity(&self, atom: &Atom) -> Result<(), StoreError> {
        match self.arities.get(&atom.pred) {
            Some(&n) if n != atom.arity() => Err(StoreError::ArityMismatch {
                pred: atom.pred.to_string(),
                expected: n,
                found: atom.arity(),
            }),
            _ => Ok(()),
        }
    }

    fn declare(&mut self, atom: &Atom) -> Result<(), StoreError> {
        self.check_arity(atom)?;
        self.arities.insert(atom.pred.clone(), atom.arity());
        Ok(())
    }

    /// Records the arities used by a constraint set, rejecting conflicts.
    pub fn declare_constraints(&mut self, constraints: &[Constraint]) -> Result<(), StoreError> {
        for c in constraints {
            for a in c.body.iter().chain(std::iter::once(&c.head)) {
                self.declare(a)?;
            }
        }
        Ok(())
    }

    pub fn arity_of(&self, pred: &str) -> Option<usize> {
        self.arities.get(pred).copied()
    }

    /// Adds a fact. New nulls get degree 0. Returns whether the fact was new.
    pub fn add_fact(&mut self, atom: Atom) -> Result<bool, StoreError> {
        if !atom.is_fact() {
            return Err(StoreError::NotAFact(atom.to_string()));
        }
        self.declare(&atom)?;
        for t in atom.terms.iter().filter(|t| t.is_null()) {
            self.nulls.observe(t);
            self.degrees.entry(t.clone()).or_insert(0);
        }
        Ok(self.facts.insert(atom))
    }

    /// Adds a fact, giving its nulls that are new to the instance `degree`.
    pub(crate) fn add_fact_with_degrees(
        &mut self,
        atom: Atom,
        degrees: &BTreeMap<Term, u32>,
    ) -> Result<bool, StoreError> {
        let fresh: Vec<Term> = atom
            .terms
            .iter()
            .filter(|t| t.is_null() && !self.degrees.contains_key(*t))
            .cloned()
            .collect();
        let added = self.add_fact(atom)?;
        for t in fresh {
            if let Some(&d) = degrees.get(&t) {
                self.degrees.insert(t, d);
            }
        }
        Ok(added)
    }

    /// Removes a fact; absent facts are ignored. Degree entries of nulls
    /// that no longer occur are dropped.
    pub fn remove_fact(&mut self, atom: &Atom) -> bool {
        if !self.facts.remove(atom) {
            return false;
        }
        for t in atom.terms.iter().filter(|t| t.is_null()) {
            if !self.facts.occurs(t) {
                self.degrees.remove(t);
            }
        }
        true
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.facts.contains(atom)
    }

    pub fn facts(&self) -> impl Iterator<Item = &Atom> {
        self.facts.iter()
    }

    pub fn fact_set(&self) -> &FactSet {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn degree(&self, null: &Term) -> Option<u32> {
        self.degrees.get(null).copied()
    }

    pub fn degrees(&self) -> &BTreeMap<Term, u32> {
        &self.degrees
    }

    /// Nulls occurring in the instance.
    pub fn nulls(&self) -> impl Iterator<Item = &Term> {
        self.degrees.keys()
    }

    pub fn null_count(&self) -> usize {
        self.degrees.len()
    }

    pub fn has_null(&self, null: &Term) -> bool {
        self.degrees.contains_key(null)
    }

    /// Facts containing `null`.
    pub fn facts_with_null(&self, null: &Term) -> impl Iterator<Item = &Atom> {
        self.facts.with_term(null)
    }

    pub fn fresh_null(&mut self) -> Term {
        self.nulls.fresh()
    }

    pub(crate) fn null_gen(&self) -> NullGen {
        self.nulls.clone()
    }

    pub(crate) fn set_null_gen(&mut self, gen: NullGen) {
        self.nulls = gen;
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    /// Takes over the counter values of a working copy.
    pub fn adopt_counters(&mut self, other: &Instance) {
        self.counters.restore(&other.counters.snapshot());
    }

    pub fn stats(&self) -> QueryStats {
        self.counters.snapshot()
    }

    /// True when both indexes and the degree map agree with a full rebuild
    /// from the fact set.
    pub fn indexes_consistent(&self) -> bool {
        let nulls: BTreeSet<&Term> = self
            .facts
            .iter()
            .flat_map(|a| a.terms.iter().filter(|t| t.is_null()))
            .collect();
        self.facts.indexes_consistent() && nulls.into_iter().eq(self.degrees.keys())
    }

    /// Sets the degree of a null that occurs in the instance.
    pub fn set_degree(&mut self, null: &Term, d: u32) {
        if let Some(slot) = self.degrees.get_mut(null) {
            *slot = d;
        }
    }

    /// `q_bucket`: nulls of facts whose predicate is that of some atom in `s`.
    pub fn q_bucket<'a>(&self, s: impl IntoIterator<Item = &'a Atom>) -> BTreeSet<Term> {
        q_bucket(self, s)
    }

    /// `q_degree`: every null of `s` still in the instance has degree < `dmax`.
    pub fn q_degree_ok<'a>(&self, s: impl IntoIterator<Item = &'a Term>, dmax: u32) -> bool {
        self.counters.bump(Metric::DegreeQueries);
        s.into_iter()
            .all(|n| self.degrees.get(n).is_none_or(|&d| d < dmax))
    }

    /// `q_δ`: sets the degree of the nulls of `s` present in the instance.
    pub fn q_set_degrees<'a>(&mut self, s: impl IntoIterator<Item = &'a Term>, d: u32) {
        self.counters.bump(Metric::DegreeQueries);
        for n in s {
            self.set_degree(n, d);
        }
    }

    /// `q_iso`: facts isomorphic to some atom of `s`.
    pub fn q_iso<'a>(&self, s: impl IntoIterator<Item = &'a Atom>) -> BTreeSet<Atom> {
        q_iso(self, s)
    }

    /// The LinkedNull block of `null`: least fix-point of atoms connected
    /// to it through shared nulls, computed over the null index. Empty when
    /// the null does not occur.
    pub fn linked_null(&self, null: &Term) -> LinkedBlock {
        self.counters.bump(Metric::LinkedNullTraversals);
        let mut block = LinkedBlock::default();
        if !self.facts.occurs(null) {
            return block;
        }
        let mut queue = VecDeque::from([null.clone()]);
        block.nulls.insert(null.clone());
        while let Some(n) = queue.pop_front() {
            self.counters.bump(Metric::NullLookups);
            for a in self.facts.with_term(&n) {
                if block.atoms.insert(a.clone()) {
                    for m in a.terms.iter().filter(|t| t.is_null()) {
                        if block.nulls.insert(m.clone()) {
                            queue.push_back(m.clone());
                        }
                    }
                }
            }
        }
        block
    }
}

impl FactSource for Instance {
    fn contains(&self, atom: &Atom) -> bool {
        self.facts.contains(atom)
    }

    fn candidates(&self, pred: &str, bound: &[&Term]) -> Vec<&Atom> {
        self.facts.candidates(pred, bound)
    }

    fn counters(&self) -> &Counters {
        &self.counters
    }
}

/// Atoms and nulls of one LinkedNull block.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkedBlock {
    pub atoms: BTreeSet<Atom>,
    pub nulls: BTreeSet<Term>,
}

/// The view `(base ∪ plus) ∖ minus`.
pub struct Overlay<'a> {
    pub base: &'a Instance,
    pub plus: Option<&'a FactSet>,
    pub minus: Option<&'a BTreeSet<Atom>>,
}

impl<'a> Overlay<'a> {
    pub fn new(base: &'a Instance) -> Overlay<'a> {
        Overlay {
            base,
            plus: None,
            minus: None,
        }
    }

    pub fn plus(mut self, plus: &'a FactSet) -> Overlay<'a> {
        self.plus = Some(plus);
        self
    }

    pub fn minus(mut self, minus: &'a BTreeSet<Atom>) -> Overlay<'a> {
        self.minus = Some(minus);
        self
    }

    fn removed(&self, a: &Atom) -> bool {
        self.minus.is_some_and(|m| m.contains(a))
    }

    /// Materializes the view's facts, ordered.
    pub fn facts(&self) -> BTreeSet<Atom> {
        self.base
            .facts()
            .chain(self.plus.into_iter().flat_map(FactSet::iter))
            .filter(|a| !self.removed(a))
            .cloned()
            .collect()
    }
}

impl FactSource for Overlay<'_> {
    fn contains(&self, atom: &Atom) -> bool {
        (self.base.contains(atom) || self.plus.is_some_and(|p| p.contains(atom)))
            && !self.removed(atom)
    }

    fn candidates(&self, pred: &str, bound: &[&Term]) -> Vec<&Atom> {
        let mut out: Vec<&Atom> = self
            .base
            .candidates(pred, bound)
            .into_iter()
            .filter(|a| !self.removed(a))
            .collect();
        if let Some(plus) = self.plus {
            out.extend(
                plus.candidates(pred, bound)
                    .into_iter()
                    .filter(|a| !self.removed(a) && !self.base.contains(a)),
            );
        }
        out
    }

    fn counters(&self) -> &Counters {
        self.base.counters()
    }
}

/// A conjunctive pattern with an optional negated head:
/// `Q ← L1, …, Lm, not L0`.
///
/// Variables of the negated head that do not occur in `atoms` are
/// existentially quantified inside the negation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub atoms: Vec<Atom>,
    pub negated_head: Option<Atom>,
}

impl Pattern {
    pub fn new(atoms: Vec<Atom>) -> Pattern {
        Pattern {
            atoms,
            negated_head: None,
        }
    }

    pub fn with_negated_head(atoms: Vec<Atom>, head: Atom) -> Pattern {
        Pattern {
            atoms,
            negated_head: Some(head),
        }
    }

    /// The chase query of a constraint: its body, with its head negated.
    pub fn for_constraint(c: &Constraint) -> Pattern {
        Pattern::with_negated_head(c.body.clone(), c.head.clone())
    }

    pub fn vars(&self) -> BTreeSet<Term> {
        self.atoms.iter().flat_map(|a| a.vars().cloned()).collect()
    }

    /// Constants and nulls occurring in the positive atoms.
    pub fn seeds(&self) -> BTreeSet<Term> {
        self.atoms
            .iter()
            .flat_map(|a| a.terms.iter().filter(|t| t.is_ground()).cloned())
            .collect()
    }
}

/// Caps on one pattern evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct MatchLimits {
    pub max_answers: Option<usize>,
    /// Candidate unifications before the search gives up.
    pub max_steps: Option<u64>,
}

impl MatchLimits {
    pub const NONE: MatchLimits = MatchLimits {
        max_answers: None,
        max_steps: None,
    };
}

#[derive(Debug, Clone, Default)]
pub struct MatchResult {
    pub answers: Vec<Substitution>,
    pub truncated: bool,
}

/// All substitutions over the pattern's variables mapping its atoms into
/// `src` (and failing the negated head), sorted.
pub fn match_pattern<S: FactSource + ?Sized>(src: &S, pattern: &Pattern) -> Vec<Substitution> {
    match_pattern_from(src, pattern, &Substitution::new(), MatchLimits::NONE).answers
}

/// As [`match_pattern`], extending the bindings of `init`.
pub fn match_pattern_from<S: FactSource + ?Sized>(
    src: &S,
    pattern: &Pattern,
    init: &Substitution,
    limits: MatchLimits,
) -> MatchResult {
    src.counters().bump(Metric::PatternsEvaluated);
    let binding: HashMap<Term, Term> = init.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let mut occurrences: HashMap<Term, Vec<usize>> = HashMap::new();
    let mut bound = vec![0; pattern.atoms.len()];
    for (i, a) in pattern.atoms.iter().enumerate() {
        for t in &a.terms {
            if t.is_var() && !binding.contains_key(t) {
                occurrences.entry(t.clone()).or_default().push(i);
            } else {
                bound[i] += 1;
            }
        }
    }
    let mut m = Matcher {
        src,
        atoms: &pattern.atoms,
        negated: pattern.negated_head.as_ref(),
        binding,
        occurrences,
        bound,
        done: vec![false; pattern.atoms.len()],
        found: BTreeSet::new(),
        steps: 0,
        limits,
        truncated: false,
    };
    m.search(pattern.atoms.len());
    MatchResult {
        answers: m.found.into_iter().collect(),
        truncated: m.truncated,
    }
}

/// Whether some fact of `src` is an instance of `atom` under `binding`,
/// free variables ranging over anything.
pub fn exists_instance<S: FactSource + ?Sized>(
    src: &S,
    atom: &Atom,
    binding: &Substitution,
) -> bool {
    let image = binding.apply(atom);
    let bound: Vec<&Term> = image.terms.iter().filter(|t| t.is_ground()).collect();
    src.candidates(&image.pred, &bound)
        .into_iter()
        .any(|f| unify_fresh(&image, f))
}

/// Whether `fact` is an instance of `pattern` (whose ground terms are rigid).
fn unify_fresh(pattern: &Atom, fact: &Atom) -> bool {
    if pattern.pred != fact.pred || pattern.arity() != fact.arity() {
        return false;
    }
    let mut local: Vec<(&Term, &Term)> = Vec::new();
    for (p, f) in pattern.terms.iter().zip(&fact.terms) {
        if p.is_ground() {
            if p != f {
                return false;
            }
        } else if let Some((_, v)) = local.iter().find(|(k, _)| *k == p) {
            if *v != f {
                return false;
            }
        } else {
            local.push((p, f));
        }
    }
    true
}

struct Matcher<'a, S: FactSource + ?Sized> {
    src: &'a S,
    atoms: &'a [Atom],
    negated: Option<&'a Atom>,
    binding: HashMap<Term, Term>,
    /// Pattern atoms each unbound variable occurs in, once per occurrence.
    occurrences: HashMap<Term, Vec<usize>>,
    /// Bound term positions per pattern atom.
    bound: Vec<usize>,
    done: Vec<bool>,
    found: BTreeSet<Substitution>,
    steps: u64,
    limits: MatchLimits,
    truncated: bool,
}

impl<S: FactSource + ?Sized> Matcher<'_, S> {
    fn resolve<'t>(&'t self, t: &'t Term) -> Option<&'t Term> {
        if t.is_var() {
            self.binding.get(t)
        } else {
            Some(t)
        }
    }

    fn bind(&mut self, var: &Term, value: &Term) {
        self.binding.insert(var.clone(), value.clone());
        if let Some(occ) = self.occurrences.get(var) {
            for &i in occ {
                self.bound[i] += 1;
            }
        }
    }

    fn unbind(&mut self, var: &Term) {
        self.binding.remove(var);
        if let Some(occ) = self.occurrences.get(var) {
            for &i in occ {
                self.bound[i] -= 1;
            }
        }
    }

    fn search(&mut self, remaining: usize) {
        if self.truncated {
            return;
        }
        if remaining == 0 {
            self.emit();
            return;
        }
        // Most bound terms first; ties go to textual order.
        let mut pick = None;
        let mut best = 0;
        for (i, &b) in self.bound.iter().enumerate() {
            if self.done[i] {
                continue;
            }
            if pick.is_none() || b > best {
                pick = Some(i);
                best = b;
            }
        }
        let Some(i) = pick else { return };
        let atoms = self.atoms;
        let atom = &atoms[i];
        let bound: Vec<Term> = atom
            .terms
            .iter()
            .filter_map(|t| self.resolve(t).cloned())
            .collect();
        let bound_refs: Vec<&Term> = bound.iter().collect();
        let src = self.src;
        let candidates = src.candidates(&atom.pred, &bound_refs);
        self.done[i] = true;
        for fact in candidates {
            self.steps += 1;
            if self.limits.max_steps.is_some_and(|m| self.steps > m) {
                self.truncated = true;
                break;
            }
            if let Some(added) = self.unify(atom, fact) {
                self.search(remaining - 1);
                for v in &added {
                    self.unbind(v);
                }
                if self.truncated {
                    break;
                }
            }
        }
        self.done[i] = false;
    }

    /// Unifies a pattern atom with a fact, returning the newly bound variables.
    fn unify(&mut self, atom: &Atom, fact: &Atom) -> Option<Vec<Term>> {
        if atom.pred != fact.pred || atom.arity() != fact.arity() {
            return None;
        }
        let mut added: Vec<Term> = Vec::new();
        for (p, f) in atom.terms.iter().zip(&fact.terms) {
            match self.resolve(p) {
                Some(v) if v == f => {}
                Some(_) => {
                    for v in &added {
                        self.unbind(v);
                    }
                    return None;
                }
                None => {
                    self.bind(p, f);
                    added.push(p.clone());
                }
            }
        }
        Some(added)
    }

    fn emit(&mut self) {
        let h: Substitution = self
            .binding
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        if let Some(head) = self.negated {
            if exists_instance(self.src, head, &h) {
                return;
            }
        }
        self.found.insert(h);
        if self
            .limits
            .max_answers
            .is_some_and(|m| self.found.len() >= m)
        {
            self.truncated = true;
        }
    }
}

/// `q_bucket` over any source.
pub fn q_bucket<'a, S: FactSource + ?Sized>(
    src: &S,
    s: impl IntoIterator<Item = &'a Atom>,
) -> BTreeSet<Term> {
    src.counters().bump(Metric::BucketQueries);
    let preds: BTreeSet<&Symbol> = s.into_iter().map(|a| &a.pred).collect();
    let mut out = BTreeSet::new();
    for p in preds {
        for a in src.candidates(p, &[]) {
            out.extend(a.terms.iter().filter(|t| t.is_null()).cloned());
        }
    }
    out
}

/// `q_iso` over any source.
pub fn q_iso<'a, S: FactSource + ?Sized>(
    src: &S,
    s: impl IntoIterator<Item = &'a Atom>,
) -> BTreeSet<Atom> {
    src.counters().bump(Metric::IsoQueries);
    let mut out = BTreeSet::new();
    for target in s {
        let consts: Vec<&Term> = target.terms.iter().filter(|t| t.is_const()).collect();
        for a in src.candidates(&target.pred, &consts) {
            if atoms_isomorphic(a, target) {
                out.insert(a.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textio::{parse_atoms, parse_facts};

    fn inst(text: &str) -> Instance {
        Instance::from_facts(parse_facts(text).unwrap()).unwrap()
    }

    fn atom(text: &str) -> Atom {
        parse_atoms(text).unwrap().remove(0)
    }

    #[test]
    fn add_and_remove_maintain_degrees() {
        let mut i = Instance::new();
        assert!(i.add_fact(atom("Student(Bob)")).unwrap());
        assert_eq!(i.len(), 1);
        let a = atom("Authors(Nils, _N1)");
        i.add_fact(a.clone()).unwrap();
        let n1 = Term::null("N1");
        assert_eq!(i.facts_with_null(&n1).collect::<Vec<_>>(), vec![&a]);
        assert_eq!(i.degree(&n1), Some(0));
        assert!(i.remove_fact(&a));
        assert_eq!(i.degree(&n1), None);
        assert!(!i.remove_fact(&a));
        assert!(i.indexes_consistent());
    }

    #[test]
    fn arity_mismatch_is_an_error() {
        let mut i = inst("P(a, b).");
        let err = i.add_fact(atom("P(a)")).unwrap_err();
        assert!(matches!(err, StoreError::ArityMismatch { expected: 2, found: 1, .. }));
    }

    #[test]
    fn variables_are_not_facts() {
        let mut i = Instance::new();
        let a = Atom::new("P", vec![Term::var("X")]);
        assert!(matches!(i.add_fact(a), Err(StoreError::NotAFact(_))));
    }

    #[test]
    fn negated_head_blocks_answers() {
        let d = inst(
            "Researcher(Elin). Authors(Elin, P269). Publication(P235). Authors(Sten, P269).
             Publication(P269). Student(Sten). Supervises(Elin, Sten). Researcher(Nils).
             PhDPaper(Sten, P269, 2022).",
        );
        let x = Term::var("X");
        let y = Term::var("Y");
        let p = Pattern::with_negated_head(
            vec![Atom::new("Supervises", vec![x.clone(), y])],
            Atom::new("Researcher", vec![x]),
        );
        assert!(match_pattern(&d, &p).is_empty());
        assert!(match_pattern(&Instance::new(), &p).is_empty());
    }

    #[test]
    fn chase_query_for_c6() {
        let d = inst("Researcher(Elin). Supervises(Elin, Sten). Authors(Elin, P269). Authors(Sten, P269).");
        let c6 = crate::textio::parse_constraints(
            "-Authors(?X,?P), Authors(?Y,?P), Supervises(?X,?Y) -> PhDPaper(?Y,?P,?Z).",
        )
        .unwrap()
        .remove(0);
        let answers = match_pattern(&d, &Pattern::for_constraint(&c6));
        assert_eq!(answers.len(), 1);
        let h = &answers[0];
        assert_eq!(h.get(&Term::var("X")), Some(&Term::constant("Elin")));
        assert_eq!(h.get(&Term::var("Y")), Some(&Term::constant("Sten")));
        assert_eq!(h.get(&Term::var("P")), Some(&Term::constant("P269")));
    }

    #[test]
    fn bucket_queries() {
        let d = inst(
            "Authors(_N1, P2). Authors(Alice, _N2). Publication(P2). Publication(_N2).
             Researcher(_N1). Researcher(Alice). Supervises(_N1, _N3).",
        );
        assert!(d.q_bucket(&[]).is_empty());
        assert!(d.q_bucket(&[atom("Q(a)")]).is_empty());
        let b = d.q_bucket(&[atom("Publication(x)")]);
        assert_eq!(b, [Term::null("N2")].into_iter().collect());
    }

    #[test]
    fn degree_queries() {
        let mut d = inst("P(_N6). P(_N8). Q(_N).");
        let n6 = Term::null("N6");
        let n8 = Term::null("N8");
        let n = Term::null("N");
        d.set_degree(&n8, 1);
        assert!(d.q_degree_ok(&[n6.clone(), n8.clone()], 2));
        d.set_degree(&n, 2);
        assert!(!d.q_degree_ok(std::slice::from_ref(&n), 2));
        assert!(d.q_degree_ok(&[Term::null("Absent")], 2));
        d.q_set_degrees(&[n8.clone(), Term::null("Absent")], 0);
        assert_eq!(d.degree(&n8), Some(0));
        assert_eq!(d.degree(&Term::null("Absent")), None);
        let before = d.clone();
        d.q_set_degrees(&[], 0);
        assert_eq!(d, before);
    }

    #[test]
    fn iso_query() {
        let d = inst("P(a, _N5).");
        assert_eq!(
            d.q_iso(&[atom("P(a, _N1)")]),
            [atom("P(a, _N5)")].into_iter().collect()
        );
        assert!(d.q_iso(&[atom("Q(a)")]).is_empty());
    }

    #[test]
    fn linked_null_example() {
        let i = inst(
            "Student(Alice). Enrolled(Alice, _N1). Degree(_N1, _N2). Enrolled(Alice, Math).
             Degree(Math, _N3). Degree(CS, _N4). Degree(CS, BSc).",
        );
        let b = i.linked_null(&Term::null("N1"));
        assert_eq!(
            b.atoms,
            [atom("Enrolled(Alice, _N1)"), atom("Degree(_N1, _N2)")]
                .into_iter()
                .collect()
        );
        assert_eq!(b.nulls, [Term::null("N1"), Term::null("N2")].into_iter().collect());
        assert!(i.linked_null(&Term::null("Nope")).atoms.is_empty());
        let single = i.linked_null(&Term::null("N3"));
        assert_eq!(single.atoms.len(), 1);
    }

    #[test]
    fn linked_null_graph_extract() {
        // Authors/Cites/Publication extract around _N1.
        let i = inst(
            "Researcher(Elin). Researcher(Thor). Student(Sten). Student(Linda).
             Authors(Elin, P240). Authors(Elin, P269). Authors(Thor, _N1).
             Cites(P269, P240). Cites(_N1, _N2). Publication(_N1). Publication(_N2).
             Supervises(Elin, Sten). Supervises(Elin, Linda). Supervises(Thor, Sten).",
        );
        let b = i.linked_null(&Term::null("N1"));
        assert_eq!(b.atoms.len(), 4);
        assert_eq!(b.nulls, [Term::null("N1"), Term::null("N2")].into_iter().collect());
    }

    #[test]
    fn overlay_views() {
        let base = inst("P(a). P(b).");
        let plus: FactSet = [atom("P(c)")].into_iter().collect();
        let minus: BTreeSet<Atom> = [atom("P(a)")].into_iter().collect();
        let v = Overlay::new(&base).plus(&plus).minus(&minus);
        assert!(!v.contains(&atom("P(a)")));
        assert!(v.contains(&atom("P(c)")));
        let p = Pattern::new(vec![Atom::new("P", vec![Term::var("X")])]);
        assert_eq!(match_pattern(&v, &p).len(), 2);
        assert_eq!(v.facts().len(), 2);
    }

    #[test]
    fn limits_truncate() {
        let i = inst("P(a). P(b). P(c).");
        let p = Pattern::new(vec![Atom::new("P", vec![Term::var("X")])]);
        let r = match_pattern_from(
            &i,
            &p,
            &Substitution::new(),
            MatchLimits {
                max_answers: Some(2),
                max_steps: None,
            },
        );
        assert!(r.truncated);
        assert_eq!(r.answers.len(), 2);
    }

    #[test]
    fn fresh_nulls_resume_above_max() {
        let mut i = inst("P(_N3). Q(_X7).");
        assert_eq!(i.fresh_null(), Term::null("N4"));
        assert_eq!(i.fresh_null(), Term::null("N5"));
        assert_eq!(Instance::new().fresh_null(), Term::null("N1"));
    }
}
