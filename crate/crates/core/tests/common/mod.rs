#![allow(dead_code)]

pub mod random;

use std::collections::BTreeSet;

use consup::model::{Atom, Constraint};
use consup::oracle::isomorphic;
use consup::textio::{parse_atoms, parse_constraints, parse_facts};
use consup::Instance;

/// The running-example rule set, one rule per line, `c1` first.
pub const RULES: [&str; 13] = [
    "Supervises(?X,?Y) -> Researcher(?X).",
    "Supervises(?X,?Y) -> Student(?Y).",
    "Authors(?X,?Y) -> Researcher(?X).",
    "Authors(?X,?Y) -> Publication(?Y).",
    "Researcher(?X) -> Authors(?X,?Y).",
    "-Authors(?X,?P), Authors(?Y,?P), Supervises(?X,?Y) -> PhDPaper(?Y,?P,?Z).",
    "Cites(?X,?Y) -> Publication(?X).",
    "Cites(?X,?Y) -> Publication(?Y).",
    "Publication(?X) -> Cites(?X,?Y).",
    "Student(?X) -> Enrolled(?X,?Y).",
    "Enrolled(?X,?Y) -> Degree(?Y,?Z).",
    "Degree(?X,?Y) -> Language(?X,?Y,?Z).",
    "Enrolled(?X,?Y) -> GrantEligible(?X).",
];

/// Rules by number, e.g. `rules(&[1, 6, 7, 8])`.
pub fn rules(numbers: &[usize]) -> Vec<Constraint> {
    let text: Vec<&str> = numbers.iter().map(|n| RULES[n - 1]).collect();
    parse_constraints(&text.join("\n")).unwrap()
}

pub fn rules_upto(n: usize) -> Vec<Constraint> {
    rules(&(1..=n).collect::<Vec<_>>())
}

pub fn inst(text: &str) -> Instance {
    Instance::from_facts(parse_facts(text).unwrap()).unwrap()
}

pub fn atoms(text: &str) -> Vec<Atom> {
    parse_atoms(text).unwrap()
}

pub fn set(text: &str) -> BTreeSet<Atom> {
    parse_atoms(text).unwrap().into_iter().collect()
}

pub fn facts_of(i: &Instance) -> BTreeSet<Atom> {
    i.facts().cloned().collect()
}

pub fn same_up_to_nulls(i: &Instance, expected: &str) -> bool {
    isomorphic(&facts_of(i), &set(expected))
}

pub const D: &str = "Researcher(Elin). Authors(Elin, P269). Publication(P235). Authors(Sten, P269).
    Publication(P269). Student(Sten). Supervises(Elin, Sten). Researcher(Nils).
    PhDPaper(Sten, P269, 2022).";

pub fn d_prime() -> String {
    format!("{D} Researcher(Sten). Authors(Nils, _N1). Publication(_N1).")
}

pub fn d_second() -> String {
    "Researcher(Elin). Authors(Elin, P269). Publication(P235). Authors(Sten, P269).
     Publication(P269). Student(Sten). Supervises(Elin, Sten). Researcher(Nils).
     PhDPaper(Sten, P269, _N2). Researcher(Sten). Authors(Nils, _N1). Publication(_N1)."
        .to_string()
}

pub const D2: &str = "Researcher(Elin). Publication(P235). Authors(Sten, P269).
    Publication(P269). Student(Sten). Supervises(Elin, Sten). Researcher(Nils).
    Researcher(Sten). Authors(Nils, _N1). Publication(_N1). Authors(Elin, _N4). Publication(_N4).";

pub const D_TRIPLE: &str = "Researcher(Elin). Authors(Elin, P269). Publication(P235). Authors(Sten, P269).
    Publication(P269). Student(Sten). Supervises(Elin, Sten). Researcher(Nils).
    PhDPaper(Sten, P269, 2022). Researcher(Sten). Authors(Nils, P235).";

pub const EX1: &str = "Student(Alice). Enrolled(Alice, _N1). Degree(_N1, _N2). Enrolled(Alice, Math).
    Degree(Math, _N3). Degree(CS, _N4). Degree(CS, BSc).";

pub const EX1_SIMPLIFIED: &str = "Student(Alice). Enrolled(Alice, Math). Degree(Math, _N3).
    Degree(CS, _N4). Degree(CS, BSc).";

pub const EX3: &str = "B(_N1, _N2). B(_N2, _N1). C(_N1, a). C(_N2, a). C(_N3, a).";
pub const EX4_FIRST: &str = "B(_N1, _N2). B(a, _N2). B(a, _N3). B(_N4, _N3). C(_N2, _N2). C(_N3, _N3).";
pub const EX4_SECOND: &str = "B(_N1, _N2). B(a, _N2). C(_N2, _N2). C(_N2, _N3).";

pub const EX5_D: &str = "Authors(_N1, P2). Authors(Alice, _N2). Publication(P2). Publication(_N2).
    Researcher(_N1). Researcher(Alice). Supervises(_N1, _N3).";

pub const EX5_RESULT: &str = "Authors(_N1, P2). Authors(Alice, P5). Publication(P2). Publication(P5).
    Researcher(_N1). Researcher(Alice). Supervises(_N1, _N3). Student(Bob). Enrolled(Bob, _N4).
    Degree(_N4, _N5). Language(_N4, _N5, _N6).";

pub const EX5_RULES: [usize; 6] = [1, 3, 4, 10, 11, 12];

pub const GRANT_D: &str = "GrantEligible(Sten). Student(Sten). Enrolled(Sten, CS).";
