//! Terms, atoms, constraints and substitutions.
//!
//! Everything here is an immutable value type. Terms compare by kind and
//! name; constants order before nulls, nulls before variables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

/// Interned-ish symbol. Cloning is a reference-count bump.
pub type Symbol = Arc<str>;

/// A constant, a marked null, or a variable.
///
/// Null and variable names are stored without their sigil: the null written
/// `_N1` has name `N1`, the variable `?X` has name `X`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(Symbol),
    Null(Symbol),
    Var(Symbol),
}

impl Term {
    pub fn constant(name: &str) -> Term {
        Term::Const(Arc::from(name))
    }

    pub fn null(name: &str) -> Term {
        Term::Null(Arc::from(name))
    }

    pub fn var(name: &str) -> Term {
        Term::Var(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Const(s) | Term::Null(s) | Term::Var(s) => s,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Term::Const(_))
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Term::Null(_))
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    /// Constants and nulls are ground; variables are not.
    pub fn is_ground(&self) -> bool {
        !self.is_var()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(s) => f.write_str(&crate::textio::encode_constant(s)),
            Term::Null(s) => write!(f, "_{s}"),
            Term::Var(s) => write!(f, "?{s}"),
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A predicate applied to an ordered list of terms.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub pred: Symbol,
    pub terms: Vec<Term>,
}

impl Atom {
    pub fn new(pred: &str, terms: Vec<Term>) -> Atom {
        Atom {
            pred: Arc::from(pred),
            terms,
        }
    }

    pub fn arity(&self) -> usize {
        self.terms.len()
    }

    /// True when the atom contains no variables.
    pub fn is_fact(&self) -> bool {
        self.terms.iter().all(Term::is_ground)
    }

    pub fn has_nulls(&self) -> bool {
        self.terms.iter().any(Term::is_null)
    }

    /// The nulls occurring in the atom, each once.
    pub fn nulls(&self) -> BTreeSet<Term> {
        self.terms.iter().filter(|t| t.is_null()).cloned().collect()
    }

    pub fn vars(&self) -> impl Iterator<Item = &Term> {
        self.terms.iter().filter(|t| t.is_var())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.pred)?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// `null(A)`: the exact set of nulls of an atom.
pub fn nulls_of(atom: &Atom) -> BTreeSet<Term> {
    atom.nulls()
}

/// A tuple-generating dependency `body -> head` with one marked body atom.
///
/// The marked atom is the one removed by the backward chase when the
/// constraint would otherwise regenerate a deleted head.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Constraint {
    pub body: Vec<Atom>,
    pub head: Atom,
    pub marked: usize,
}

impl Constraint {
    pub fn new(body: Vec<Atom>, head: Atom, marked: usize) -> Result<Constraint, ModelError> {
        if body.is_empty() {
            return Err(ModelError::EmptyBody);
        }
        if marked >= body.len() {
            return Err(ModelError::MarkOutOfRange {
                marked,
                len: body.len(),
            });
        }
        if body.iter().chain(std::iter::once(&head)).any(Atom::has_nulls) {
            return Err(ModelError::NullInConstraint);
        }
        Ok(Constraint { body, head, marked })
    }

    pub fn marked_atom(&self) -> &Atom {
        &self.body[self.marked]
    }

    /// Variables occurring in the body.
    pub fn universal_vars(&self) -> BTreeSet<Term> {
        self.body.iter().flat_map(|a| a.vars().cloned()).collect()
    }

    /// Head variables that do not occur in the body.
    pub fn existential_vars(&self) -> BTreeSet<Term> {
        let universal = self.universal_vars();
        self.head
            .vars()
            .filter(|v| !universal.contains(*v))
            .cloned()
            .collect()
    }

    pub fn has_existentials(&self) -> bool {
        !self.existential_vars().is_empty()
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.body.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            if i == self.marked && self.body.len() > 1 {
                f.write_str("-")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, " -> {}", self.head)
    }
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("constraint body is empty")]
    EmptyBody,
    #[error("marked body atom {marked} out of range for a body of {len} atoms")]
    MarkOutOfRange { marked: usize, len: usize },
    #[error("nulls may not occur in constraints")]
    NullInConstraint,
}

/// A finite map from nulls and variables to terms; identity elsewhere.
///
/// Identity bindings are never stored, so two substitutions denoting the
/// same function compare equal.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Substitution {
    map: BTreeMap<Term, Term>,
}

impl Substitution {
    pub fn new() -> Substitution {
        Substitution::default()
    }

    pub fn identity() -> Substitution {
        Substitution::default()
    }

    /// Binds `from` to `to`. Constants cannot be rebound; binding a
    /// constant to anything other than itself is ignored.
    pub fn bind(&mut self, from: Term, to: Term) {
        if from.is_const() {
            return;
        }
        if from == to {
            self.map.remove(&from);
        } else {
            self.map.insert(from, to);
        }
    }

    pub fn with(mut self, from: Term, to: Term) -> Substitution {
        self.bind(from, to);
        self
    }

    pub fn get(&self, t: &Term) -> Option<&Term> {
        self.map.get(t)
    }

    pub fn contains(&self, t: &Term) -> bool {
        self.map.contains_key(t)
    }

    /// Image of a single term.
    pub fn apply_term(&self, t: &Term) -> Term {
        match t {
            Term::Const(_) => t.clone(),
            _ => self.map.get(t).cloned().unwrap_or_else(|| t.clone()),
        }
    }

    pub fn apply(&self, atom: &Atom) -> Atom {
        Atom {
            pred: atom.pred.clone(),
            terms: atom.terms.iter().map(|t| self.apply_term(t)).collect(),
        }
    }

    /// Returns `r` with `r(x) = other(self(x))`.
    pub fn compose(&self, other: &Substitution) -> Substitution {
        let mut out = Substitution::new();
        for (k, v) in &self.map {
            out.bind(k.clone(), other.apply_term(v));
        }
        for (k, v) in &other.map {
            if !self.map.contains_key(k) {
                out.bind(k.clone(), v.clone());
            }
        }
        out
    }

    /// `h ∘ h = h`.
    pub fn is_idempotent(&self) -> bool {
        self.compose(self) == *self
    }

    pub fn is_identity(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Term, &Term)> {
        self.map.iter()
    }

    /// Restricts the substitution to the given domain.
    pub fn restrict<'a>(&self, domain: impl IntoIterator<Item = &'a Term>) -> Substitution {
        let mut out = Substitution::new();
        for t in domain {
            if let Some(v) = self.map.get(t) {
                out.bind(t.clone(), v.clone());
            }
        }
        out
    }
}

impl FromIterator<(Term, Term)> for Substitution {
    fn from_iter<I: IntoIterator<Item = (Term, Term)>>(iter: I) -> Self {
        let mut s = Substitution::new();
        for (k, v) in iter {
            s.bind(k, v);
        }
        s
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.map.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k} -> {v}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

pub fn apply(h: &Substitution, a: &Atom) -> Atom {
    h.apply(a)
}

pub fn compose(h1: &Substitution, h2: &Substitution) -> Substitution {
    h1.compose(h2)
}

pub fn is_idempotent(h: &Substitution) -> bool {
    h.is_idempotent()
}

/// Two facts are isomorphic when a bijection on nulls maps one onto the
/// other with constants fixed.
pub fn atoms_isomorphic(a: &Atom, b: &Atom) -> bool {
    if a.pred != b.pred || a.arity() != b.arity() {
        return false;
    }
    let mut fwd: HashMap<&Term, &Term> = HashMap::new();
    let mut bwd: HashMap<&Term, &Term> = HashMap::new();
    for (x, y) in a.terms.iter().zip(&b.terms) {
        match (x, y) {
            (Term::Null(_), Term::Null(_)) => {
                if *fwd.entry(x).or_insert(y) != y || *bwd.entry(y).or_insert(x) != x {
                    return false;
                }
            }
            (Term::Null(_), _) | (_, Term::Null(_)) => return false,
            _ => {
                if x != y {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> Term {
        Term::constant(s)
    }
    fn n(s: &str) -> Term {
        Term::null(s)
    }

    #[test]
    fn apply_maps_nulls() {
        let h = Substitution::new()
            .with(n("N1"), c("Math"))
            .with(n("N2"), n("N3"));
        let a = Atom::new("Degree", vec![n("N1"), n("N2")]);
        assert_eq!(h.apply(&a), Atom::new("Degree", vec![c("Math"), n("N3")]));
    }

    #[test]
    fn apply_identity_and_outside_domain() {
        let a = Atom::new("Student", vec![c("Alice")]);
        assert_eq!(Substitution::identity().apply(&a), a);
        let h = Substitution::new().with(n("N1"), c("a"));
        let b = Atom::new("C", vec![n("N3"), c("a")]);
        assert_eq!(h.apply(&b), b);
    }

    #[test]
    fn constants_cannot_be_bound() {
        let h = Substitution::new().with(c("a"), c("b"));
        assert!(h.is_identity());
    }

    #[test]
    fn compose_expands() {
        let h1 = Substitution::new().with(n("N1"), n("N2"));
        let h2 = Substitution::new().with(n("N2"), c("a"));
        let r = h1.compose(&h2);
        assert_eq!(r.get(&n("N1")), Some(&c("a")));
        assert_eq!(r.get(&n("N2")), Some(&c("a")));
        assert_eq!(Substitution::identity().compose(&h2), h2);
    }

    #[test]
    fn swap_composed_with_itself_is_identity() {
        let h = Substitution::new()
            .with(n("N1"), n("N2"))
            .with(n("N2"), n("N1"));
        let hh = h.compose(&h);
        let a = Atom::new("B", vec![n("N1"), n("N2")]);
        assert_eq!(hh.apply(&a), a);
        assert!(hh.is_identity());
    }

    #[test]
    fn idempotence() {
        let swap = Substitution::new()
            .with(n("N1"), n("N2"))
            .with(n("N2"), n("N1"));
        assert!(!swap.is_idempotent());
        let h = Substitution::new()
            .with(n("N1"), c("a"))
            .with(n("N2"), n("N3"));
        assert!(h.is_idempotent());
        assert!(Substitution::identity().is_idempotent());
    }

    #[test]
    fn isomorphism() {
        let p = |x: Term, y: Term| Atom::new("P", vec![x, y]);
        assert!(atoms_isomorphic(&p(c("a"), n("N1")), &p(c("a"), n("N5"))));
        assert!(!atoms_isomorphic(&p(n("N1"), n("N1")), &p(n("N2"), n("N3"))));
        assert!(!atoms_isomorphic(&p(n("N2"), n("N3")), &p(n("N1"), n("N1"))));
        let phd = |z: Term| Atom::new("PhDPaper", vec![c("Sten"), c("P269"), z]);
        assert!(!atoms_isomorphic(&phd(n("N")), &phd(c("2022"))));
        assert!(!atoms_isomorphic(
            &Atom::new("P", vec![c("a")]),
            &Atom::new("Q", vec![c("a")])
        ));
    }

    #[test]
    fn nulls_of_atoms() {
        let lang = Atom::new("Language", vec![n("N4"), n("N5"), n("N6")]);
        assert_eq!(nulls_of(&lang).len(), 3);
        assert!(nulls_of(&Atom::new("Student", vec![c("Alice")])).is_empty());
        let deg = Atom::new("Degree", vec![n("N1"), n("N2")]);
        assert_eq!(
            nulls_of(&deg),
            [n("N1"), n("N2")].into_iter().collect::<BTreeSet<_>>()
        );
    }

    #[test]
    fn existentials_are_structural() {
        let x = Term::var("X");
        let y = Term::var("Y");
        let c5 = Constraint::new(
            vec![Atom::new("Researcher", vec![x.clone()])],
            Atom::new("Authors", vec![x.clone(), y.clone()]),
            0,
        )
        .unwrap();
        assert_eq!(c5.existential_vars(), [y].into_iter().collect());
        assert_eq!(c5.universal_vars(), [x].into_iter().collect());
    }

    #[test]
    fn constraint_validation() {
        let a = Atom::new("P", vec![Term::var("X")]);
        assert_eq!(
            Constraint::new(vec![], a.clone(), 0),
            Err(ModelError::EmptyBody)
        );
        assert!(matches!(
            Constraint::new(vec![a.clone()], a.clone(), 1),
            Err(ModelError::MarkOutOfRange { .. })
        ));
        let bad = Atom::new("P", vec![n("N1")]);
        assert_eq!(
            Constraint::new(vec![a], bad, 0),
            Err(ModelError::NullInConstraint)
        );
    }
}
