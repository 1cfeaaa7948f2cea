//! Seeded random instances, rule sets and update requests for the
//! property and acceptance suites.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use consup::model::{Atom, Constraint, Term};
use consup::oracle::{full_chase, is_consistent};
use consup::Instance;

pub use rand::SeedableRng;
pub type Rng8 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng8 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random signature: predicate names with arities 1..=3.
#[derive(Debug, Clone)]
pub struct Schema {
    pub preds: Vec<(String, usize)>,
    pub constants: Vec<String>,
}

impl Schema {
    pub fn random(r: &mut Rng8) -> Schema {
        let n = r.gen_range(3..=6);
        let preds = (0..n).map(|i| (format!("P{i}"), r.gen_range(1..=3))).collect();
        let k = r.gen_range(2..=5);
        let constants = (0..k).map(|i| format!("c{i}")).collect();
        Schema { preds, constants }
    }

    fn constant(&self, r: &mut Rng8) -> Term {
        Term::constant(self.constants.choose(r).unwrap())
    }

    /// A random fact drawing terms from the constants and `nulls`.
    pub fn fact(&self, r: &mut Rng8, nulls: &[Term], null_share: f64) -> Atom {
        let (p, n) = self.preds.choose(r).unwrap();
        let terms = (0..*n)
            .map(|_| {
                if !nulls.is_empty() && r.gen_bool(null_share) {
                    nulls.choose(r).unwrap().clone()
                } else {
                    self.constant(r)
                }
            })
            .collect();
        Atom::new(p, terms)
    }

    /// Rules whose head predicate comes after every body predicate, plus
    /// with probability `cyclic` one rule feeding back into itself.
    pub fn rules(&self, r: &mut Rng8, count: usize, cyclic: f64) -> Vec<Constraint> {
        let vars: Vec<Term> = ["X", "Y", "Z", "W"].iter().map(|v| Term::var(v)).collect();
        let mut out = Vec::new();
        let np = self.preds.len();
        while out.len() < count {
            let head_idx = r.gen_range(1..np);
            let body_len = r.gen_range(1..=2);
            let body: Vec<Atom> = (0..body_len)
                .map(|_| {
                    let (p, n) = &self.preds[r.gen_range(0..head_idx)];
                    let terms = (0..*n)
                        .map(|_| {
                            if r.gen_bool(0.1) {
                                self.constant(r)
                            } else {
                                vars[r.gen_range(0..3)].clone()
                            }
                        })
                        .collect();
                    Atom::new(p, terms)
                })
                .collect();
            let body_vars: Vec<Term> = body.iter().flat_map(|a| a.vars().cloned()).collect();
            let (hp, hn) = &self.preds[head_idx];
            let head_terms = (0..*hn)
                .map(|_| {
                    if body_vars.is_empty() || r.gen_bool(0.3) {
                        vars[3].clone()
                    } else {
                        body_vars.choose(r).unwrap().clone()
                    }
                })
                .collect();
            let marked = r.gen_range(0..body.len());
            if let Ok(c) = Constraint::new(body, Atom::new(hp, head_terms), marked) {
                out.push(c);
            }
        }
        if r.gen_bool(cyclic) {
            // P_k(X, ...) -> P_k(Y, X, ...) style self-feeding rule.
            let (p, n) = self.preds.choose(r).unwrap().clone();
            if n >= 2 {
                let body_terms: Vec<Term> = (0..n).map(|i| if i == 0 { vars[0].clone() } else { vars[1].clone() }).collect();
                let mut head_terms = body_terms.clone();
                head_terms[0] = vars[1].clone();
                head_terms[n - 1] = vars[3].clone();
                let c = Constraint::new(vec![Atom::new(&p, body_terms)], Atom::new(&p, head_terms), 0).unwrap();
                let slot = r.gen_range(0..=out.len());
                out.insert(slot, c);
                out.truncate(10);
            }
        }
        out
    }
}

/// A scenario: rules and a consistent starting instance built by the
/// oracle chase, with every degree reset to 0.
pub struct Scenario {
    pub schema: Schema,
    pub rules: Vec<Constraint>,
    pub db: Instance,
    pub dmax: u32,
}

pub fn scenario(r: &mut Rng8, max_atoms: usize) -> Scenario {
    loop {
        let schema = Schema::random(r);
        let count = r.gen_range(2..=8);
        let rules = schema.rules(r, count, 0.3);
        let dmax = r.gen_range(1..=3);
        let seed_facts = r.gen_range(2..=10);
        let mut db = Instance::new();
        if db.declare_constraints(&rules).is_err() {
            continue;
        }
        for _ in 0..seed_facts {
            let _ = db.add_fact(schema.fact(r, &[], 0.0));
        }
        let chased = full_chase(&db, &rules, dmax);
        if chased.len() > max_atoms || !is_consistent(&chased, &rules).is_empty() {
            continue;
        }
        let mut db = chased;
        let nulls: Vec<Term> = db.nulls().cloned().collect();
        db.q_set_degrees(&nulls, 0);
        return Scenario {
            schema,
            rules,
            db,
            dmax,
        };
    }
}

/// A request of 1..=3 facts over the scenario's schema; some reuse nulls
/// of the instance.
pub fn request(r: &mut Rng8, s: &Scenario) -> Vec<Atom> {
    let nulls: Vec<Term> = s.db.nulls().cloned().collect();
    let n = r.gen_range(1..=3);
    (0..n).map(|_| s.schema.fact(r, &nulls, 0.2)).collect()
}

/// Facts to delete: mostly atoms of the instance, sometimes arbitrary ones.
pub fn deletion(r: &mut Rng8, s: &Scenario) -> Vec<Atom> {
    let facts: Vec<&Atom> = s.db.facts().collect();
    let n = r.gen_range(1..=2);
    (0..n)
        .map(|_| {
            if !facts.is_empty() && r.gen_bool(0.8) {
                (*facts.choose(r).unwrap()).clone()
            } else {
                s.schema.fact(r, &[], 0.0)
            }
        })
        .collect()
}

/// A random instance with nulls drawn from a small pool, so that blocks
/// overlap and redundancy is common.
pub fn null_instance(r: &mut Rng8, max_atoms: usize) -> Instance {
    let schema = Schema::random(r);
    let pool = r.gen_range(1..=6);
    let nulls: Vec<Term> = (1..=pool).map(|i| Term::null(&format!("N{i}"))).collect();
    let n = r.gen_range(1..=max_atoms);
    let mut i = Instance::new();
    for _ in 0..n {
        let _ = i.add_fact(schema.fact(r, &nulls, 0.5));
    }
    i
}
