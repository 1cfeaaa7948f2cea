//! Python bindings: a `Database` holding an instance and its rules, with
//! insert, delete, consistency checks and snapshots.

use std::collections::BTreeSet;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use consup::model::{Atom, Constraint, Term};
use consup::oracle::{full_core, is_consistent, isomorphic};
use consup::simplify::simplify_instance;
use consup::textio::{parse_atoms, parse_constraints, parse_facts, parse_snapshot, serialize_snapshot};
use consup::{Instance, QueryStats, UpdateOutcome};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn strings<'a>(atoms: impl IntoIterator<Item = &'a Atom>) -> Vec<String> {
    atoms.into_iter().map(|a| a.to_string()).collect()
}

fn stats_dict<'py>(py: Python<'py>, s: &QueryStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (k, v) in [
        ("patternsEvaluated", s.patterns_evaluated),
        ("bucketQueries", s.bucket_queries),
        ("degreeQueries", s.degree_queries),
        ("isoQueries", s.iso_queries),
        ("linkedNullTraversals", s.linked_null_traversals),
        ("nullLookups", s.null_lookups),
        ("qcoreEvals", s.qcore_evals),
        ("rewrites", s.rewrites),
        ("atomsGenerated", s.atoms_generated),
        ("blocksSimplified", s.blocks_simplified),
        ("totalQueries", s.total_queries()),
    ] {
        d.set_item(k, v)?;
    }
    Ok(d)
}

/// Result of an insert or delete.
#[pyclass(module = "consup_py", frozen)]
pub struct Outcome {
    #[pyo3(get)]
    status: String,
    #[pyo3(get)]
    to_ins: Vec<String>,
    #[pyo3(get)]
    to_del: Vec<String>,
    stats: QueryStats,
}

#[pymethods]
impl Outcome {
    /// False only for rejected inserts.
    #[getter]
    fn applied(&self) -> bool {
        self.status != "Rejected"
    }

    #[getter]
    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        stats_dict(py, &self.stats)
    }

    fn __repr__(&self) -> String {
        format!(
            "Outcome(status={:?}, to_ins={}, to_del={})",
            self.status,
            self.to_ins.len(),
            self.to_del.len()
        )
    }
}

impl From<UpdateOutcome> for Outcome {
    fn from(o: UpdateOutcome) -> Self {
        Outcome {
            status: o.status.to_string(),
            to_ins: strings(&o.to_ins),
            to_del: strings(&o.to_del),
            stats: o.stats,
        }
    }
}

/// An incomplete database kept consistent with a set of rules.
#[pyclass(module = "consup_py")]
pub struct Database {
    inst: Instance,
    rules: Vec<Constraint>,
}

fn with_rules(mut inst: Instance, rules: &str) -> PyResult<Database> {
    let rules = parse_constraints(rules).map_err(value_error)?;
    inst.declare_constraints(&rules).map_err(value_error)?;
    Ok(Database { inst, rules })
}

#[pymethods]
impl Database {
    /// Facts and rules in their text formats. The facts are stored as
    /// given, without chasing.
    #[new]
    #[pyo3(signature = (facts = "", rules = ""))]
    fn new(facts: &str, rules: &str) -> PyResult<Database> {
        let facts = parse_facts(facts).map_err(value_error)?;
        with_rules(Instance::from_facts(facts).map_err(value_error)?, rules)
    }

    #[staticmethod]
    #[pyo3(signature = (text, rules = ""))]
    fn from_snapshot(text: &str, rules: &str) -> PyResult<Database> {
        with_rules(parse_snapshot(text).map_err(value_error)?, rules)
    }

    fn snapshot(&self) -> String {
        serialize_snapshot(&self.inst)
    }

    fn facts(&self) -> Vec<String> {
        strings(self.inst.facts())
    }

    fn degrees(&self) -> Vec<(String, u32)> {
        self.inst
            .degrees()
            .iter()
            .map(|(n, d)| (n.to_string(), *d))
            .collect()
    }

    #[getter]
    fn null_count(&self) -> usize {
        self.inst.null_count()
    }

    fn __len__(&self) -> usize {
        self.inst.len()
    }

    #[pyo3(signature = (atoms, delta_max = 5))]
    fn insert(&mut self, atoms: &str, delta_max: u32) -> PyResult<Outcome> {
        let req = parse_atoms(atoms).map_err(value_error)?;
        let out = consup::insert(&mut self.inst, &self.rules, delta_max, &req).map_err(value_error)?;
        Ok(out.into())
    }

    #[pyo3(signature = (atoms, delta_max = 5))]
    fn delete(&mut self, atoms: &str, delta_max: u32) -> PyResult<Outcome> {
        let req = parse_atoms(atoms).map_err(value_error)?;
        let out = consup::delete(&mut self.inst, &self.rules, delta_max, &req).map_err(value_error)?;
        Ok(out.into())
    }

    /// Rule bodies matched without their head, as `(rule number, body)`.
    fn violations(&self) -> Vec<(usize, Vec<String>)> {
        is_consistent(&self.inst, &self.rules)
            .into_iter()
            .map(|v| {
                let body = self.rules[v.constraint].body.iter().map(|a| v.binding.apply(a).to_string());
                (v.constraint + 1, body.collect())
            })
            .collect()
    }

    fn is_consistent(&self) -> bool {
        is_consistent(&self.inst, &self.rules).is_empty()
    }

    /// Simplifies every block; returns the number of rewrites.
    fn simplify(&mut self) -> PyResult<usize> {
        let nulls: Vec<Term> = self.inst.nulls().cloned().collect();
        Ok(simplify_instance(&mut self.inst, &nulls).map_err(value_error)?.rewrites)
    }

    /// The exhaustive core (small instances only).
    fn full_core(&self) -> PyResult<Vec<String>> {
        Ok(strings(full_core(&self.inst).map_err(value_error)?.facts()))
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        stats_dict(py, &self.inst.stats())
    }

    fn __repr__(&self) -> String {
        format!("Database({} facts, {} nulls, {} rules)", self.inst.len(), self.inst.null_count(), self.rules.len())
    }
}

/// Whether two fact texts are equal up to renaming nulls.
#[pyfunction]
fn isomorphic_facts(a: &str, b: &str) -> PyResult<bool> {
    let parse = |s: &str| -> PyResult<BTreeSet<Atom>> {
        Ok(parse_atoms(s).map_err(value_error)?.into_iter().collect())
    };
    Ok(isomorphic(&parse(a)?, &parse(b)?))
}

#[pymodule]
pub fn consup_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Database>()?;
    m.add_class::<Outcome>()?;
    m.add_function(wrap_pyfunction!(isomorphic_facts, m)?)?;
    Ok(())
}
