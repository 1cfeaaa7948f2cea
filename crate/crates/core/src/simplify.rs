//! Incremental core maintenance over LinkedNull blocks.
//!
//! For a block `P`, `q_core` is `P` with each of its nulls replaced by a
//! variable. Its answers over the instance are the P-homomorphisms; they
//! are laid out as an [`HpTable`] and one most specific idempotent row is
//! chosen without touching the data again. The block is then rewritten to
//! its image.

use std::collections::BTreeSet;

use log::warn;

use crate::model::{Atom, Substitution, Term};
use crate::store::{match_pattern_from, Instance, LinkedBlock, MatchLimits, Metric, Pattern};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimplifyError {
    #[error("cannot build q_core for an empty block")]
    EmptyBlock,
    #[error("identity homomorphism missing from q_core answers")]
    MissingIdentity,
    #[error("table row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
}

/// Caps on a single block's `q_core` evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SimplifyLimits {
    /// Blocks with more nulls than this are flagged as capped.
    pub max_nulls: usize,
    pub max_answers: usize,
    pub max_steps: u64,
}

impl Default for SimplifyLimits {
    fn default() -> Self {
        SimplifyLimits {
            max_nulls: 12,
            max_answers: 10_000,
            max_steps: 2_000_000,
        }
    }
}

/// The `q_core` query of a block and the column order of its nulls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QCore {
    pub pattern: Pattern,
    pub null_order: Vec<Term>,
    pub vars: Vec<Term>,
}

pub fn build_qcore<'a>(block: impl IntoIterator<Item = &'a Atom>) -> Result<QCore, SimplifyError> {
    let atoms: Vec<&Atom> = block.into_iter().collect();
    if atoms.is_empty() {
        return Err(SimplifyError::EmptyBlock);
    }
    let null_order: Vec<Term> = atoms
        .iter()
        .flat_map(|a| a.terms.iter().filter(|t| t.is_null()))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let vars: Vec<Term> = (1..=null_order.len())
        .map(|i| Term::var(&format!("x{i}")))
        .collect();
    let to_vars: Substitution = null_order.iter().cloned().zip(vars.iter().cloned()).collect();
    let pattern = Pattern::new(atoms.iter().map(|a| to_vars.apply(a)).collect());
    Ok(QCore {
        pattern,
        null_order,
        vars,
    })
}

/// The answer table `H_P`: one column per block null, one row per
/// P-homomorphism, row 0 the identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HpTable {
    pub null_order: Vec<Term>,
    pub rows: Vec<Vec<Term>>,
    block_nulls: BTreeSet<Term>,
}

impl HpTable {
    pub fn new(null_order: Vec<Term>, rows: Vec<Vec<Term>>) -> Result<HpTable, SimplifyError> {
        for (i, r) in rows.iter().enumerate() {
            if r.len() != null_order.len() {
                return Err(SimplifyError::RaggedRow {
                    row: i,
                    expected: null_order.len(),
                    found: r.len(),
                });
            }
        }
        if rows.first() != Some(&null_order) {
            return Err(SimplifyError::MissingIdentity);
        }
        let block_nulls = null_order.iter().cloned().collect();
        Ok(HpTable {
            null_order,
            rows,
            block_nulls,
        })
    }

    /// Builds the table from `q_core` answers, keeping their order but
    /// moving the identity to the front.
    pub fn from_answers(qcore: &QCore, answers: &[Substitution]) -> Result<HpTable, SimplifyError> {
        let mut rows: Vec<Vec<Term>> = answers
            .iter()
            .map(|h| qcore.vars.iter().map(|v| h.apply_term(v)).collect())
            .collect();
        let id = rows
            .iter()
            .position(|r| *r == qcore.null_order)
            .ok_or(SimplifyError::MissingIdentity)?;
        let identity = rows.remove(id);
        rows.insert(0, identity);
        HpTable::new(qcore.null_order.clone(), rows)
    }

    pub fn width(&self) -> usize {
        self.null_order.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Whether a cell holds a symbol of `cons_null(P)`: a constant or a
    /// null outside the block.
    pub fn is_rigid(&self, t: &Term) -> bool {
        !self.block_nulls.contains(t)
    }

    fn column_of(&self, null: &Term) -> Option<usize> {
        self.null_order.iter().position(|n| n == null)
    }

    pub fn is_idempotent(&self, i: usize) -> bool {
        let row = &self.rows[i];
        row.iter().all(|cell| {
            self.is_rigid(cell) || self.column_of(cell).is_some_and(|k| row[k] == *cell)
        })
    }

    /// `γ_i`: cells of row `i` in `cons_null(P)`.
    pub fn gamma(&self, i: usize) -> usize {
        self.rows[i].iter().filter(|c| self.is_rigid(c)).count()
    }

    /// `π_i`: distinct block nulls in row `i`.
    pub fn pi(&self, i: usize) -> usize {
        self.rows[i]
            .iter()
            .filter(|c| !self.is_rigid(c))
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// `h_i ⪯ h_k`, decided from the table alone.
    pub fn less_specific(&self, i: usize, k: usize) -> bool {
        let (ri, rk) = (&self.rows[i], &self.rows[k]);
        for j in 0..self.width() {
            if self.is_rigid(&ri[j]) {
                if ri[j] != rk[j] {
                    return false;
                }
            } else {
                for j2 in 0..self.width() {
                    if j2 != j && ri[j2] == ri[j] && rk[j] != rk[j2] {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn row_substitution(&self, i: usize) -> Substitution {
        self.null_order
            .iter()
            .cloned()
            .zip(self.rows[i].iter().cloned())
            .collect()
    }
}

/// Picks the row of one most specific idempotent P-homomorphism.
///
/// First pass: mark non-idempotent rows and keep the first unmarked row
/// with strictly more rigid cells than any before it. Second pass: among
/// unmarked rows agreeing with that row on its rigid cells, take the first
/// with strictly fewer distinct block nulls.
#[allow(clippy::needless_range_loop)]
pub fn choose_most_specific(t: &HpTable) -> usize {
    let mut marked = vec![false; t.len()];
    let mut row_max = 0;
    let mut count_max = 0;
    for i in 1..t.len() {
        if !t.is_idempotent(i) {
            marked[i] = true;
            continue;
        }
        let count = t.gamma(i);
        if count > count_max {
            row_max = i;
            count_max = count;
        }
    }
    let mut row_spec = row_max;
    let mut count_min = t.pi(row_max);
    let pivot = &t.rows[row_max];
    for i in 1..t.len() {
        if marked[i] || i == row_max {
            continue;
        }
        let matches = (0..t.width()).all(|j| !t.is_rigid(&pivot[j]) || pivot[j] == t.rows[i][j]);
        if matches {
            let count = t.pi(i);
            if count < count_min {
                row_spec = i;
                count_min = count;
            }
        }
    }
    row_spec
}

/// Evaluates `q_core` for a block and builds its table.
pub fn block_table(
    inst: &Instance,
    block: &LinkedBlock,
    limits: SimplifyLimits,
) -> Result<(HpTable, bool), SimplifyError> {
    let q = build_qcore(&block.atoms)?;
    inst.counters().bump(Metric::QcoreEvals);
    let result = match_pattern_from(
        inst,
        &q.pattern,
        &Substitution::new(),
        MatchLimits {
            max_answers: Some(limits.max_answers),
            max_steps: Some(limits.max_steps),
        },
    );
    let mut answers = result.answers;
    if result.truncated {
        let identity: Substitution = q.vars.iter().cloned().zip(q.null_order.iter().cloned()).collect();
        if !answers.contains(&identity) {
            answers.push(identity);
        }
    }
    let capped = result.truncated || q.null_order.len() > limits.max_nulls;
    Ok((HpTable::from_answers(&q, &answers)?, capped))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimplifyReport {
    pub blocks: usize,
    pub rewrites: usize,
    pub capped: usize,
}

/// Simplifies every LinkedNull block reached from `bucket`, in null order.
/// Nulls no longer in the instance, or already covered by a processed
/// block, are skipped.
pub fn simplify_instance<'a>(
    inst: &mut Instance,
    bucket: impl IntoIterator<Item = &'a Term>,
) -> Result<SimplifyReport, SimplifyError> {
    simplify_with_limits(inst, bucket, SimplifyLimits::default())
}

pub fn simplify_with_limits<'a>(
    inst: &mut Instance,
    bucket: impl IntoIterator<Item = &'a Term>,
    limits: SimplifyLimits,
) -> Result<SimplifyReport, SimplifyError> {
    let bucket: BTreeSet<&Term> = bucket.into_iter().collect();
    let mut covered: BTreeSet<Term> = BTreeSet::new();
    let mut report = SimplifyReport::default();
    for n in bucket {
        if covered.contains(n) || !inst.has_null(n) {
            continue;
        }
        let block = inst.linked_null(n);
        covered.extend(block.nulls.iter().cloned());
        inst.counters().bump(Metric::BlocksSimplified);
        report.blocks += 1;
        let (table, capped) = block_table(inst, &block, limits)?;
        if capped {
            report.capped += 1;
            warn!(
                "block of {} nulls around {} evaluated with answer cap ({} rows kept)",
                table.width(),
                n,
                table.len()
            );
        }
        if table.len() < 2 {
            continue;
        }
        let row = choose_most_specific(&table);
        if row == 0 {
            continue;
        }
        let h = table.row_substitution(row);
        rewrite(inst, &block.atoms, &h);
        report.rewrites += 1;
    }
    Ok(report)
}

/// `I := (I ∖ P) ∪ h(P)`. Images are added first so surviving nulls keep
/// their degrees.
fn rewrite(inst: &mut Instance, block: &BTreeSet<Atom>, h: &Substitution) {
    inst.counters().bump(Metric::Rewrites);
    let image: BTreeSet<Atom> = block.iter().map(|a| h.apply(a)).collect();
    for a in &image {
        inst.add_fact(a.clone())
            .expect("image of a block atom has the block atom's arity");
    }
    for a in block {
        if !image.contains(a) {
            inst.remove_fact(a);
        }
    }
}
