//! Library side of the `datalog-magic` command, so the whole command can be
//! driven from tests without spawning a process.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use datalog_magic::dl::{self, ConjunctiveQuery, KnowledgeBase, NameMap};
use datalog_magic::eval::check_query;
use datalog_magic::magic::{full_free, full_free_raw, rewrite, SipsStrategy};
use datalog_magic::stratify::{build_dependency_graph, negative_cycle_witness};
use datalog_magic::syntax::INCONSISTENT;
use datalog_magic::{
    evaluate_model, parse_atom, parse_program, Atom, Error, EvalOptions, Model, Program,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Print the whole model.
    Eval,
    /// Print the answers to `--query`.
    Query,
    /// Print the Magic Sets rewriting for `--query`.
    RewriteDump,
    /// Print `consistent` or `inconsistent`.
    Consistency,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Sips {
    Ltr,
    Parallel,
}

#[derive(Debug, Parser)]
#[command(
    name = "datalog-magic",
    version,
    about = "Evaluate stratified Datalog and DLP knowledge bases, with Magic Sets"
)]
pub struct Args {
    /// Datalog program file (`-` for stdin).
    #[arg(long, value_name = "FILE")]
    pub program: Option<PathBuf>,
    /// Knowledge base file (`-` for stdin).
    #[arg(long, value_name = "FILE")]
    pub kb: Option<PathBuf>,
    /// Query atom such as `par(a,Y)`, or `query(X) :- R(X,Y), A(Y).` for a KB.
    #[arg(long, value_name = "QUERY")]
    pub query: Option<String>,
    /// Defaults to `query` when a query is available, `eval` otherwise.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, overrides_with = "no_magic")]
    pub magic: bool,
    /// Answer queries over the whole model.
    #[arg(long)]
    pub no_magic: bool,
    #[arg(long, overrides_with = "no_full_free")]
    pub full_free: bool,
    /// Keep every adorned copy of predicates that also got a full-free adornment.
    #[arg(long)]
    pub no_full_free: bool,
    #[arg(long, value_enum, default_value = "ltr")]
    pub sips: Sips,
    /// Same as `--mode rewrite-dump`.
    #[arg(long)]
    pub dump_rewriting: bool,
    /// Refuse to answer when a constraint is violated.
    #[arg(long)]
    pub check_consistency: bool,
    /// Print evaluation statistics to stderr.
    #[arg(long)]
    pub stats: bool,
    #[arg(long, default_value_t = 1, value_name = "N")]
    pub threads: usize,
    /// Print the predicate dependency graph and exit.
    #[arg(long)]
    pub graph: bool,
    /// Keep repeated rules in the rewriting.
    #[arg(long)]
    pub no_dedup: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Input {
    Program(PathBuf),
    Kb(PathBuf),
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub input: Input,
    pub mode: Option<Mode>,
    pub query: Option<String>,
    pub sips: SipsStrategy,
    pub magic: bool,
    pub full_free: bool,
    pub dedup: bool,
    pub check_consistency: bool,
    pub stats: bool,
    pub threads: usize,
    pub graph: bool,
}

impl TryFrom<Args> for RunConfig {
    type Error = String;

    fn try_from(a: Args) -> Result<Self, String> {
        let input = match (a.program, a.kb) {
            (Some(p), None) => Input::Program(p),
            (None, Some(k)) => Input::Kb(k),
            (Some(_), Some(_)) => return Err("give either --program or --kb, not both".into()),
            (None, None) => return Err("no input: use --program FILE or --kb FILE".into()),
        };
        if a.threads == 0 {
            return Err("--threads must be at least 1".into());
        }
        let mode = match (a.dump_rewriting, a.mode) {
            (true, None | Some(Mode::RewriteDump)) => Some(Mode::RewriteDump),
            (true, Some(_)) => return Err("--dump-rewriting conflicts with --mode".into()),
            (false, m) => m,
        };
        Ok(RunConfig {
            input,
            mode,
            query: a.query,
            sips: match a.sips {
                Sips::Ltr => SipsStrategy::LeftToRight,
                Sips::Parallel => SipsStrategy::Parallel,
            },
            magic: !a.no_magic,
            full_free: !a.no_full_free,
            dedup: !a.no_dedup,
            check_consistency: a.check_consistency,
            stats: a.stats,
            threads: a.threads,
            graph: a.graph,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Parses `args` (program name first) and runs.
pub fn run_args<I, T>(args: I, stdin: &mut dyn Read) -> Output
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let parsed = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Output {
                    code: 1,
                    stdout: String::new(),
                    stderr: text,
                }
            } else {
                Output {
                    code: 0,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    match RunConfig::try_from(parsed) {
        Ok(config) => run(&config, stdin),
        Err(msg) => failure(1, format!("error: {msg}\n")),
    }
}

fn failure(code: i32, stderr: String) -> Output {
    Output {
        code,
        stdout: String::new(),
        stderr,
    }
}

/// Command failures: exit 1 for bad input, 2 for broken invariants.
enum Failure {
    User(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_user_error() {
            Failure::User(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

pub fn run(config: &RunConfig, stdin: &mut dyn Read) -> Output {
    let mut out = Output::default();
    match execute(config, stdin, &mut out) {
        Ok(()) => out,
        Err(Failure::User(msg)) => failure(1, format!("{}error: {msg}\n", out.stderr)),
        Err(Failure::Internal(msg)) => failure(2, format!("{}internal error: {msg}\n", out.stderr)),
    }
}

fn read_input(path: &PathBuf, stdin: &mut dyn Read) -> Result<String, Failure> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        stdin
            .read_to_string(&mut s)
            .map_err(|e| Failure::User(format!("cannot read stdin: {e}")))?;
        Ok(s)
    } else {
        fs::read_to_string(path)
            .map_err(|e| Failure::User(format!("cannot read {}: {e}", path.display())))
    }
}

/// Query atom and the variables to report, in order.
type Query = (Atom, Vec<String>);

/// A program together with the query to answer over it.
struct Task {
    program: Program,
    query: Option<Query>,
    names: Option<NameMap>,
}

fn execute(config: &RunConfig, stdin: &mut dyn Read, out: &mut Output) -> Result<(), Failure> {
    let task = match &config.input {
        Input::Program(path) => load_program(config, path, stdin)?,
        Input::Kb(path) => load_kb(config, path, stdin)?,
    };

    if config.graph {
        out.stdout = build_dependency_graph(&task.program).to_string();
        return Ok(());
    }

    let mode = config.mode.unwrap_or(if task.query.is_some() {
        Mode::Query
    } else {
        Mode::Eval
    });

    if config.check_consistency
        && mode != Mode::Consistency
        && !consistent(&task.program, config, out)?
    {
        return Err(Failure::User(Error::Inconsistent.to_string()));
    }

    match mode {
        Mode::Consistency => {
            let ok = consistent(&task.program, config, out)?;
            out.stdout = format!("{}\n", if ok { "consistent" } else { "inconsistent" });
        }
        Mode::Eval => {
            let model = evaluate(&task.program, config, out)?;
            let mut lines: Vec<String> = model
                .atoms()
                .map(|a| match &task.names {
                    Some(names) if a.predicate != INCONSISTENT => names.display_atom(&a),
                    _ => a.to_string(),
                })
                .collect();
            lines.sort();
            for l in lines {
                writeln!(out.stdout, "{l}.").unwrap();
            }
        }
        Mode::Query | Mode::RewriteDump => {
            let Some((query, vars)) = &task.query else {
                return Err(Failure::User(format!(
                    "mode {} needs --query",
                    if mode == Mode::Query {
                        "query"
                    } else {
                        "rewrite-dump"
                    }
                )));
            };
            let program = if config.magic || mode == Mode::RewriteDump {
                rewritten(&task.program, query, config, out)?
            } else {
                without_constraints(&task.program)
            };
            if mode == Mode::RewriteDump {
                out.stdout = program.to_string();
                return Ok(());
            }
            let model = evaluate(&program, config, out)?;
            out.stdout = render_answers(&model, query, vars);
        }
    }
    Ok(())
}

fn load_program(config: &RunConfig, path: &PathBuf, stdin: &mut dyn Read) -> Result<Task, Failure> {
    let text = read_input(path, stdin)?;
    let program =
        parse_program(&text).map_err(|e| Failure::User(format!("{}:{e}", path.display())))?;
    let query = match &config.query {
        None => None,
        Some(q) => {
            let atom = parse_atom(q).map_err(|e| Failure::User(format!("query:{e}")))?;
            if !program.is_empty() {
                check_query(&program, &atom)?;
            }
            let mut vars: Vec<String> = Vec::new();
            for v in atom.variables() {
                if !vars.iter().any(|x| x == v) {
                    vars.push(v.to_owned());
                }
            }
            Some((atom, vars))
        }
    };
    Ok(Task {
        program,
        query,
        names: None,
    })
}

fn load_kb(config: &RunConfig, path: &PathBuf, stdin: &mut dyn Read) -> Result<Task, Failure> {
    let text = read_input(path, stdin)?;
    let (kb, inline) =
        dl::parse_kb(&text).map_err(|e| Failure::User(format!("{}: {e}", path.display())))?;
    let cq: Option<ConjunctiveQuery> = match &config.query {
        Some(q) => Some(dl::parse_query(q).map_err(|e| Failure::User(format!("query: {e}")))?),
        None => inline,
    };
    let names = NameMap::of(&kb).map_err(Error::from)?;
    let (program, query) = kb_program(&kb, cq.as_ref())?;
    Ok(Task {
        program,
        query,
        names: Some(names),
    })
}

/// The translated KB, with the goal rule when there is a query. Constraints
/// are kept; they are dropped before rewriting.
fn kb_program(
    kb: &KnowledgeBase,
    q: Option<&ConjunctiveQuery>,
) -> Result<(Program, Option<Query>), Failure> {
    let mut program = dl::translate_kb(kb)?;
    let Some(q) = q else {
        return Ok((program, None));
    };
    let goal = dl::translate_query(q)?;
    let atom = goal.head.clone();
    program.rules.push(goal);
    Ok((program, Some((atom, q.answer_vars.clone()))))
}

fn without_constraints(p: &Program) -> Program {
    p.iter().filter(|r| !r.is_constraint()).cloned().collect()
}

fn rewritten(
    program: &Program,
    query: &Atom,
    config: &RunConfig,
    out: &mut Output,
) -> Result<Program, Failure> {
    let base = without_constraints(program);
    let rw = rewrite(query, &base, config.sips)?;
    let mut result = if config.dedup {
        rw.program()
    } else {
        rw.raw_program()
    };
    if config.full_free {
        result = if config.dedup {
            full_free(&result)
        } else {
            full_free_raw(&result)
        };
    }
    if let Some((from, to)) = negative_cycle_witness(&build_dependency_graph(&result)) {
        return Err(Failure::Internal(format!(
            "rewritten program is not stratified ({from} -> {to})"
        )));
    }
    if config.stats {
        writeln!(
            out.stderr,
            "rules: input {}, rewritten {}",
            base.len(),
            result.len()
        )
        .unwrap();
    }
    Ok(result)
}

fn evaluate(program: &Program, config: &RunConfig, out: &mut Output) -> Result<Model, Failure> {
    let start = Instant::now();
    let model = evaluate_model(
        program,
        EvalOptions {
            threads: config.threads,
        },
    )?;
    if config.stats {
        write!(out.stderr, "{}", model.stats()).unwrap();
        writeln!(
            out.stderr,
            "atoms: {}, time: {:.3}s",
            model.len(),
            start.elapsed().as_secs_f64()
        )
        .unwrap();
    }
    Ok(model)
}

fn consistent(program: &Program, config: &RunConfig, out: &mut Output) -> Result<bool, Failure> {
    let model = evaluate(program, config, out)?;
    Ok(!model.contains(&Atom::new(INCONSISTENT, Vec::new())))
}

/// One line per answer, sorted; `true`/`false` for queries without
/// variables.
fn render_answers(model: &Model, query: &Atom, vars: &[String]) -> String {
    let answers = model.answers(query);
    if vars.is_empty() {
        return format!("{}\n", !answers.is_empty());
    }
    let mut lines: Vec<String> = answers
        .iter()
        .map(|s| {
            vars.iter()
                .map(|v| format!("{v}={}", s.get(v).unwrap_or("?")))
                .collect::<Vec<_>>()
                .join(", ")
        })
        .collect();
    lines.sort();
    lines.dedup();
    let mut text = lines.join("\n");
    text.push('\n');
    text
}
