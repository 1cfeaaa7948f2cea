//! Command-line front end.
//!
//! Exit codes: 0 on success (Accepted, Applied), 1 on usage or input
//! errors, 2 when an insert is rejected, 3 when `check` finds violations.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::bench::{self, BenchConfig, BenchRow};
use crate::chase::{delete, insert, Status, UpdateOutcome};
use crate::model::{Atom, Constraint, Term};
use crate::oracle::{full_core, is_consistent};
use crate::simplify::simplify_instance;
use crate::store::Instance;
use crate::textio::{parse_atoms, parse_constraints, parse_facts, parse_snapshot, serialize_snapshot, write_facts};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_REJECTED: i32 = 2;
pub const EXIT_INCONSISTENT: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "consup", version, about = "Consistent updates on incomplete databases")]
pub struct Cli {
    /// Snapshot file (JSON) the command reads and, for updates, rewrites.
    #[arg(long, global = true)]
    pub db: Option<PathBuf>,
    /// Constraint file.
    #[arg(long, global = true)]
    pub rules: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a fact file and write it to --db as a snapshot.
    Load { facts: PathBuf },
    /// List constraint violations.
    Check,
    /// Insert facts, keeping the instance consistent.
    Insert {
        /// A fact file, or the facts themselves.
        #[arg(long)]
        atoms: String,
        #[arg(long = "delta-max", default_value_t = 5)]
        delta_max: u32,
    },
    /// Delete every fact isomorphic to one of the given facts.
    Delete {
        #[arg(long)]
        atoms: String,
        #[arg(long = "delta-max", default_value_t = 5)]
        delta_max: u32,
    },
    /// Print the simplified instance; --full uses the exhaustive core search.
    Core {
        #[arg(long)]
        full: bool,
    },
    Stats,
    /// Run the update benchmark. With --db, updates are sampled from that
    /// instance (which is never written); otherwise a synthetic workload is
    /// generated.
    Bench {
        #[arg(long, default_value_t = 2000)]
        facts: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0, 50, 100, 500, 1000])]
        nulls: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 5, 10, 20])]
        sizes: Vec<usize>,
        #[arg(long = "delta-max", default_value_t = 5)]
        delta_max: u32,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn load_rules(cli: &Cli) -> Result<Vec<Constraint>, CliError> {
    match &cli.rules {
        None => Ok(Vec::new()),
        Some(p) => parse_constraints(&read(p)?).map_err(|e| input(format!("{}: {e}", p.display()))),
    }
}

fn db_path(cli: &Cli) -> Result<&Path, CliError> {
    cli.db.as_deref().ok_or_else(|| input("--db is required for this command"))
}

/// Reads a snapshot, or a plain fact file when the text is not JSON.
fn load_db(cli: &Cli, cs: &[Constraint]) -> Result<Instance, CliError> {
    let path = db_path(cli)?;
    let text = read(path)?;
    let mut inst = if text.trim_start().starts_with('{') {
        parse_snapshot(&text).map_err(|e| input(format!("{}: {e}", path.display())))?
    } else {
        let facts = parse_facts(&text).map_err(|e| input(format!("{}: {e}", path.display())))?;
        Instance::from_facts(facts).map_err(input)?
    };
    inst.declare_constraints(cs).map_err(input)?;
    Ok(inst)
}

/// `--atoms` names a file if one exists at that path, else holds the facts.
fn load_request(arg: &str) -> Result<Vec<Atom>, CliError> {
    let p = Path::new(arg);
    if p.is_file() {
        parse_atoms(&read(p)?).map_err(|e| input(format!("{}: {e}", p.display())))
    } else {
        parse_atoms(arg).map_err(input)
    }
}

fn strings(atoms: &[Atom]) -> Vec<String> {
    atoms.iter().map(|a| a.to_string()).collect()
}

fn outcome_json(out: &UpdateOutcome) -> serde_json::Value {
    json!({
        "status": out.status,
        "toIns": strings(&out.to_ins),
        "toDel": strings(&out.to_del),
        "stats": out.stats,
    })
}

fn print_outcome(cli: &Cli, out: &UpdateOutcome) {
    if cli.json {
        println!("{}", outcome_json(out));
        return;
    }
    println!("{}", out.status);
    for a in &out.to_ins {
        println!("+ {a}");
    }
    for a in &out.to_del {
        println!("- {a}");
    }
    println!("queries: {}", out.stats.total_queries());
}

fn emit_rows(cli: &Cli, rows: &[BenchRow], out: Option<&Path>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    if cli.json {
        serde_json::to_writer_pretty(&mut buf, rows).map_err(input)?;
        buf.push(b'\n');
    } else {
        bench::write_csv(rows, &mut buf).map_err(input)?;
    }
    match out {
        Some(p) => write(p, &String::from_utf8_lossy(&buf)),
        None => io::stdout().write_all(&buf).map_err(|source| CliError::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Stats {
    facts: usize,
    nulls: usize,
    predicates: usize,
    max_degree: u32,
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let cs = load_rules(cli)?;
    match &cli.command {
        Command::Load { facts } => {
            let parsed = parse_facts(&read(facts)?).map_err(|e| input(format!("{}: {e}", facts.display())))?;
            let mut inst = Instance::new();
            inst.declare_constraints(&cs).map_err(input)?;
            for a in parsed {
                inst.add_fact(a).map_err(input)?;
            }
            let snap = serialize_snapshot(&inst);
            match &cli.db {
                Some(p) => write(p, &snap)?,
                None => println!("{snap}"),
            }
            if !cli.json {
                eprintln!("loaded {} facts, {} nulls", inst.len(), inst.null_count());
            }
            Ok(EXIT_OK)
        }
        Command::Check => {
            let inst = load_db(cli, &cs)?;
            let v = is_consistent(&inst, &cs);
            if cli.json {
                let list: Vec<_> = v
                    .iter()
                    .map(|x| {
                        let binding: serde_json::Map<String, serde_json::Value> = x
                            .binding
                            .iter()
                            .map(|(k, t)| (k.to_string(), t.to_string().into()))
                            .collect();
                        json!({"constraint": x.constraint + 1, "binding": binding})
                    })
                    .collect();
                println!("{}", json!({"consistent": v.is_empty(), "violations": list}));
            } else if v.is_empty() {
                println!("consistent");
            } else {
                for x in &v {
                    let body: Vec<String> = cs[x.constraint].body.iter().map(|a| x.binding.apply(a).to_string()).collect();
                    println!("c{}: {} without {}", x.constraint + 1, body.join(", "), x.binding.apply(&cs[x.constraint].head));
                }
            }
            Ok(if v.is_empty() { EXIT_OK } else { EXIT_INCONSISTENT })
        }
        Command::Insert { atoms, delta_max } => {
            let mut inst = load_db(cli, &cs)?;
            let req = load_request(atoms)?;
            let out = insert(&mut inst, &cs, *delta_max, &req).map_err(input)?;
            print_outcome(cli, &out);
            if out.status == Status::Rejected {
                return Ok(EXIT_REJECTED);
            }
            write(db_path(cli)?, &serialize_snapshot(&inst))?;
            Ok(EXIT_OK)
        }
        Command::Delete { atoms, delta_max } => {
            let mut inst = load_db(cli, &cs)?;
            let req = load_request(atoms)?;
            let out = delete(&mut inst, &cs, *delta_max, &req).map_err(input)?;
            print_outcome(cli, &out);
            write(db_path(cli)?, &serialize_snapshot(&inst))?;
            Ok(EXIT_OK)
        }
        Command::Core { full } => {
            let mut inst = load_db(cli, &cs)?;
            if *full {
                inst = full_core(&inst).map_err(input)?;
            } else {
                let nulls: Vec<Term> = inst.nulls().cloned().collect();
                simplify_instance(&mut inst, &nulls).map_err(input)?;
            }
            if cli.json {
                println!("{}", serialize_snapshot(&inst));
            } else {
                print!("{}", write_facts(inst.facts()));
            }
            Ok(EXIT_OK)
        }
        Command::Stats => {
            let inst = load_db(cli, &cs)?;
            let preds: std::collections::BTreeSet<&str> = inst.facts().map(|a| &*a.pred).collect();
            let s = Stats {
                facts: inst.len(),
                nulls: inst.null_count(),
                predicates: preds.len(),
                max_degree: inst.degrees().values().copied().max().unwrap_or(0),
            };
            if cli.json {
                println!("{}", serde_json::to_string(&s).map_err(input)?);
            } else {
                println!("facts: {}\nnulls: {}\npredicates: {}\nmax degree: {}", s.facts, s.nulls, s.predicates, s.max_degree);
            }
            Ok(EXIT_OK)
        }
        Command::Bench {
            facts,
            nulls,
            sizes,
            delta_max,
            out,
        } => {
            let rows = if cli.db.is_some() {
                let (inst, cs) = if cli.rules.is_some() {
                    (load_db(cli, &cs)?, cs)
                } else {
                    (load_db(cli, &bench::rules())?, bench::rules())
                };
                bench::run_on(&inst, &cs, *delta_max, cli.seed, sizes).map_err(input)?
            } else {
                let cfg = BenchConfig {
                    seed: cli.seed,
                    facts: *facts,
                    null_counts: nulls.clone(),
                    update_sizes: sizes.clone(),
                    dmax: *delta_max,
                };
                bench::run(&cfg).map_err(input)?
            };
            emit_rows(cli, &rows, out.as_deref())?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
