//! Synthetic social-network workload and the update benchmark.
//!
//! A ground instance is built by chasing sampled facts and replacing the
//! produced nulls with constants. Nested families of incomplete instances
//! then replace the first k constants of one seeded permutation by nulls,
//! so the family with 100 nulls contains the nulls of the family with 50.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chase::{delete, insert, UpdateError};
use crate::model::{Atom, Constraint, Substitution, Term};
use crate::simplify::simplify_instance;
use crate::store::Instance;
use crate::textio::parse_constraints;

pub const RULES: &str = "
Knows(?X,?Y) -> Person(?X).
Knows(?X,?Y) -> Person(?Y).
PersonProfile(?P,?N,?G,?B) -> Person(?P).
Person(?X) -> IsLocatedIn(?X,?Z).
IsLocatedIn(?X,?Y) -> Place(?Y).
HasMember(?F,?P) -> Forum(?F).
HasMember(?F,?P) -> Person(?P).
Forum(?F) -> HasModerator(?F,?P).
HasModerator(?F,?P) -> Person(?P).
ContainerOf(?F,?M) -> Forum(?F).
ContainerOf(?F,?M) -> Post(?M).
Post(?M) -> Message(?M).
Comment(?M) -> Message(?M).
Message(?M) -> HasCreator(?M,?P).
HasCreator(?M,?P) -> Person(?P).
ReplyOf(?C,?M) -> Comment(?C).
ReplyOf(?C,?M) -> Message(?M).
HasTag(?M,?T) -> Tag(?T).
Tag(?T) -> HasType(?T,?C).
HasType(?T,?C) -> TagClass(?C).
HasInterest(?P,?T) -> Tag(?T).
StudyAt(?P,?O,?Y) -> Organisation(?O).
WorkAt(?P,?O,?Y) -> Organisation(?O).
Organisation(?O) -> IsLocatedIn(?O,?Z).
Likes(?P,?M,?D) -> Person(?P).
Likes(?P,?M,?D) -> Message(?M).
-ContainerOf(?F,?M), HasCreator(?M,?P) -> HasMember(?F,?P).
";

pub fn rules() -> Vec<Constraint> {
    parse_constraints(RULES).expect("built-in rules parse")
}

/// Base predicates the sampler draws from, with the entity pool feeding
/// each position.
const BASE: &[(&str, &[&str])] = &[
    ("Knows", &["person", "person"]),
    ("PersonProfile", &["person", "name", "gender", "date"]),
    ("HasMember", &["forum", "person"]),
    ("ContainerOf", &["forum", "post"]),
    ("ReplyOf", &["comment", "post"]),
    ("HasTag", &["post", "tag"]),
    ("HasInterest", &["person", "tag"]),
    ("StudyAt", &["person", "org", "date"]),
    ("WorkAt", &["person", "org", "date"]),
    ("Likes", &["person", "post", "date"]),
    ("HasCreator", &["post", "person"]),
];

fn pool_size(kind: &str, facts: usize) -> usize {
    let scale = facts.max(10);
    match kind {
        "person" => scale / 8,
        "forum" => scale / 40,
        "post" | "comment" => scale / 10,
        "tag" => scale / 30,
        "org" => scale / 50,
        "gender" => 2,
        _ => scale / 20,
    }
    .max(2)
}

fn sample_fact(r: &mut ChaCha8Rng, facts: usize, fresh: Option<&str>) -> Atom {
    let (pred, kinds) = BASE[r.gen_range(0..BASE.len())];
    let terms = kinds
        .iter()
        .enumerate()
        .map(|(i, kind)| match fresh {
            Some(tag) if i == 0 => Term::constant(&format!("{tag}_{kind}{}", r.gen_range(0..1_000_000))),
            _ => Term::constant(&format!("{kind}{}", r.gen_range(0..pool_size(kind, facts)))),
        })
        .collect();
    Atom::new(pred, terms)
}

/// A consistent ground instance of roughly `facts` atoms: sampled base
/// facts are chased through [`insert`] from the empty instance and the
/// nulls it introduced are replaced by fresh constants.
pub fn ground_instance(seed: u64, facts: usize, dmax: u32) -> Result<Instance, UpdateError> {
    let cs = rules();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut inst = Instance::new();
    let mut sampled = BTreeSet::new();
    while inst.len() < facts {
        let batch: Vec<Atom> = (0..16)
            .map(|_| sample_fact(&mut r, facts, None))
            .filter(|a| sampled.insert(a.clone()))
            .collect();
        insert(&mut inst, &cs, dmax, &batch)?;
    }
    let h: Substitution = inst
        .nulls()
        .map(|n| (n.clone(), Term::constant(&format!("g{}", n.name()))))
        .collect();
    let mut ground = Instance::new();
    for a in inst.facts() {
        ground.add_fact(h.apply(a))?;
    }
    Ok(ground)
}

/// The constants of `ground` in a seeded order; the first k become nulls
/// in the family with k nulls.
pub fn permutation(ground: &Instance, seed: u64) -> Vec<Term> {
    let mut cs: Vec<Term> = ground
        .facts()
        .flat_map(|a| a.terms.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    cs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9));
    cs
}

type Renaming = BTreeMap<Term, Term>;

fn nullify(perm: &[Term], k: usize) -> Renaming {
    perm.iter()
        .take(k)
        .enumerate()
        .map(|(i, c)| (c.clone(), Term::null(&format!("N{}", i + 1))))
        .collect()
}

/// The family member with `k` nulls, simplified.
pub fn with_nulls(ground: &Instance, perm: &[Term], k: usize) -> Result<Instance, UpdateError> {
    let h = nullify(perm, k);
    let mut inst = Instance::new();
    for a in rename(&h, &ground.facts().cloned().collect::<Vec<_>>()) {
        inst.add_fact(a)?;
    }
    let nulls: Vec<Term> = inst.nulls().cloned().collect();
    simplify_instance(&mut inst, &nulls)?;
    Ok(inst)
}

/// A consistent instance of about `facts` atoms in which roughly
/// `null_fraction` of the constants have been replaced by nulls.
pub fn generate_instance(seed: u64, facts: usize, null_fraction: f64, dmax: u32) -> Result<Instance, UpdateError> {
    let ground = ground_instance(seed, facts, dmax)?;
    let perm = permutation(&ground, seed);
    let k = (perm.len() as f64 * null_fraction.clamp(0.0, 1.0)).round() as usize;
    with_nulls(&ground, &perm, k)
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub seed: u64,
    pub facts: usize,
    pub null_counts: Vec<usize>,
    pub update_sizes: Vec<usize>,
    pub dmax: u32,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seed: 7,
            facts: 2000,
            null_counts: vec![0, 50, 100, 500, 1000],
            update_sizes: vec![1, 5, 10, 20],
            dmax: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchRow {
    pub scenario: String,
    pub facts: usize,
    pub nulls: usize,
    pub update_size: usize,
    pub op: String,
    pub patterns_evaluated: u64,
    pub qcore_evals: u64,
    pub rewrites: u64,
    /// Every query issued by the update.
    pub total_queries: u64,
    pub wall_ms: f64,
}

/// Requests for one update size: inserts mix fresh entities with existing
/// ones, deletes pick existing ground facts. Both are expressed over the
/// ground instance and renamed into each family.
struct Requests {
    insert: Vec<Atom>,
    delete: Vec<Atom>,
}

fn requests(ground: &Instance, seed: u64, facts: usize, size: usize) -> Requests {
    let mut r = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(size as u64));
    let insert = (0..size).map(|_| sample_fact(&mut r, facts, Some("new"))).collect();
    let all: Vec<&Atom> = ground.facts().collect();
    let delete = all.choose_multiple(&mut r, size.min(all.len())).map(|a| (*a).clone()).collect();
    Requests { insert, delete }
}

/// Runs every update size against `db`, each on a fresh copy.
pub fn run_updates(
    scenario: &str,
    db: &Instance,
    cs: &[Constraint],
    dmax: u32,
    batches: &[(usize, Vec<Atom>, Vec<Atom>)],
) -> Result<Vec<BenchRow>, UpdateError> {
    let mut rows = Vec::new();
    for (size, ins, del) in batches {
        for (op, req) in [("insert", ins), ("delete", del)] {
            let mut work = db.clone();
            let t = Instant::now();
            let out = if op == "insert" {
                insert(&mut work, cs, dmax, req)?
            } else {
                delete(&mut work, cs, dmax, req)?
            };
            rows.push(BenchRow {
                scenario: scenario.to_string(),
                facts: db.len(),
                nulls: db.null_count(),
                update_size: *size,
                op: op.to_string(),
                patterns_evaluated: out.stats.patterns_evaluated,
                qcore_evals: out.stats.qcore_evals,
                rewrites: out.stats.rewrites,
                total_queries: out.stats.total_queries(),
                wall_ms: (t.elapsed().as_secs_f64() * 1e6).round() / 1e3,
            });
        }
    }
    Ok(rows)
}

/// The full synthetic benchmark.
pub fn run(cfg: &BenchConfig) -> Result<Vec<BenchRow>, UpdateError> {
    let cs = rules();
    let ground = ground_instance(cfg.seed, cfg.facts, cfg.dmax)?;
    let perm = permutation(&ground, cfg.seed);
    let reqs: Vec<(usize, Requests)> = cfg
        .update_sizes
        .iter()
        .map(|&u| (u, requests(&ground, cfg.seed, cfg.facts, u)))
        .collect();
    let mut rows = Vec::new();
    for &k in &cfg.null_counts {
        let db = with_nulls(&ground, &perm, k)?;
        let h = nullify(&perm, k);
        let batches: Vec<(usize, Vec<Atom>, Vec<Atom>)> = reqs
            .iter()
            .map(|(u, q)| (*u, rename(&h, &q.insert), rename(&h, &q.delete)))
            .collect();
        rows.extend(run_updates(&format!("nulls{k}"), &db, &cs, cfg.dmax, &batches)?);
    }
    Ok(rows)
}

fn rename(h: &Renaming, atoms: &[Atom]) -> Vec<Atom> {
    atoms
        .iter()
        .map(|a| Atom {
            pred: a.pred.clone(),
            terms: a.terms.iter().map(|t| h.get(t).cloned().unwrap_or_else(|| t.clone())).collect(),
        })
        .collect()
}

/// Benchmarks updates sampled from an existing instance. `db` is only read.
pub fn run_on(
    db: &Instance,
    cs: &[Constraint],
    dmax: u32,
    seed: u64,
    update_sizes: &[usize],
) -> Result<Vec<BenchRow>, UpdateError> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<&Atom> = db.facts().collect();
    let preds: BTreeMap<&str, usize> = all.iter().map(|a| (&*a.pred, a.arity())).collect();
    let preds: Vec<(&str, usize)> = preds.into_iter().collect();
    let terms: Vec<Term> = db.fact_set().terms().filter(|t| t.is_const()).cloned().collect();
    let mut batches = Vec::new();
    for &u in update_sizes {
        let ins = if preds.is_empty() {
            Vec::new()
        } else {
            (0..u)
                .map(|i| {
                    let (p, n) = preds[r.gen_range(0..preds.len())];
                    let ts = (0..n)
                        .map(|j| {
                            if j == 0 || terms.is_empty() {
                                Term::constant(&format!("new{u}_{i}"))
                            } else {
                                terms[r.gen_range(0..terms.len())].clone()
                            }
                        })
                        .collect();
                    Atom::new(p, ts)
                })
                .collect()
        };
        let del = all.choose_multiple(&mut r, u.min(all.len())).map(|a| (*a).clone()).collect();
        batches.push((u, ins, del));
    }
    run_updates("input", db, cs, dmax, &batches)
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
