//! Consistent updates for incomplete databases.
//!
//! An [`Instance`] holds facts that may contain marked nulls. Updates keep
//! it consistent with a set of tuple-generating dependencies: inserts chase
//! forward, deletes chase backward, and both finish by simplifying the
//! LinkedNull blocks they touched so no redundant atoms remain.

pub mod bench;
pub mod chase;
pub mod cli;
pub mod model;
pub mod oracle;
pub mod simplify;
pub mod store;
pub mod textio;

pub use model::{atoms_isomorphic, Atom, Constraint, Substitution, Term};
pub use chase::{delete, insert, Status, UpdateOutcome};
pub use store::{Instance, Pattern, QueryStats};
