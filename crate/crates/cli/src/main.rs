//! Command line front end: parse stories, run them through an agent, dump
//! shadows and predictions, save and restore episodic memory.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xapi_core::{
    load_json, parse_story, pretty_print, save_json, Agent, ComponentId, EngineError,
    KnowledgeBase, Params, SentenceAst,
};

#[derive(Parser)]
#[command(name = "xapi", version, about = "A narrative agent speaking the xapi pidgin")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that story files parse; print the canonical form.
    Parse {
        /// Story files (xapi pidgin).
        files: Vec<PathBuf>,
        /// Only report errors, do not print the canonical form.
        #[arg(long)]
        quiet: bool,
    },
    /// Execute story files and report on the resulting agent.
    Run {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Execute story files, then print the predicted continuations.
    Predict {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Read sentences interactively; `:help` lists the commands.
    Repl {
        #[command(flatten)]
        opts: RunOpts,
    },
}

#[derive(Args)]
struct RunOpts {
    /// Story files, executed in order.
    files: Vec<PathBuf>,
    /// Domain knowledge file (concepts, verbs, overlaps).
    #[arg(short, long)]
    knowledge: Option<PathBuf>,
    /// Seconds of diffusion after each sentence.
    #[arg(short, long, default_value_t = 2.0)]
    pacing: f64,
    /// Override a single parameter, e.g. --param alpha=0.4 (repeatable).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Fail on unknown words and unresolvable references.
    #[arg(long)]
    strict: bool,
    /// Load remembered stories from a snapshot before running.
    #[arg(long, value_name = "FILE")]
    snapshot_in: Option<PathBuf>,
    /// Demote everything and save the memory to a snapshot afterwards.
    #[arg(long, value_name = "FILE")]
    snapshot_out: Option<PathBuf>,
    /// Print the execution trace.
    #[arg(long)]
    trace: bool,
    /// Print the shadow bodies after the run.
    #[arg(long)]
    dump_shadows: bool,
    /// Print the headless shadows (predictions) after the run.
    #[arg(long)]
    dump_hs: bool,
}

// exit codes: 1 parse, 2 semantics, 3 I/O
const EXIT_PARSE: u8 = 1;
const EXIT_SEMANTIC: u8 = 2;
const EXIT_IO: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Parse { files, quiet } => cmd_parse(&files, quiet),
        Command::Run { opts } => cmd_run(&opts, false),
        Command::Predict { opts } => cmd_run(&opts, true),
        Command::Repl { opts } => cmd_repl(&opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

type CmdResult = Result<(), (u8, String)>;

fn read_file(path: &PathBuf) -> Result<String, (u8, String)> {
    fs::read_to_string(path).map_err(|e| (EXIT_IO, format!("{}: {e}", path.display())))
}

fn parse_file(path: &PathBuf) -> Result<Vec<SentenceAst>, (u8, String)> {
    let text = read_file(path)?;
    parse_story(&text).map_err(|e| (EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn cmd_parse(files: &[PathBuf], quiet: bool) -> CmdResult {
    for path in files {
        let asts = parse_file(path)?;
        if quiet {
            println!("{}: {} sentences", path.display(), asts.len());
        } else {
            for ast in &asts {
                println!("{}", pretty_print(ast));
            }
        }
    }
    Ok(())
}

fn build_agent(opts: &RunOpts) -> Result<Agent, (u8, String)> {
    let mut kb = KnowledgeBase::new();
    if let Some(path) = &opts.knowledge {
        let text = read_file(path)?;
        kb.load_str(&text)
            .map_err(|e| (EXIT_SEMANTIC, format!("{}: {e}", path.display())))?;
    }
    let mut params = Params::default();
    params.strict = opts.strict;
    for spec in &opts.params {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| (EXIT_SEMANTIC, format!("--param needs KEY=VALUE, got `{spec}`")))?;
        params
            .set(key, value)
            .map_err(|e| (EXIT_SEMANTIC, e.to_string()))?;
    }
    let mut agent = Agent::new(kb, params);
    if let Some(path) = &opts.snapshot_in {
        let json = read_file(path)?;
        load_json(&mut agent, &json)
            .map_err(|e| (EXIT_SEMANTIC, format!("{}: {e}", path.display())))?;
    }
    Ok(agent)
}

fn engine_err(e: EngineError) -> (u8, String) {
    (EXIT_SEMANTIC, e.to_string())
}

fn finish(agent: &mut Agent, opts: &RunOpts) -> CmdResult {
    if opts.trace {
        print!("{}", agent.render_trace());
    }
    if opts.dump_shadows {
        dump_shadows(agent);
    }
    if opts.dump_hs {
        dump_hs(agent);
    }
    if let Some(path) = &opts.snapshot_out {
        agent.demote_all().map_err(engine_err)?;
        let json = save_json(agent).map_err(|e| (EXIT_SEMANTIC, e.to_string()))?;
        fs::write(path, json).map_err(|e| (EXIT_IO, format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_run(opts: &RunOpts, predict: bool) -> CmdResult {
    let mut agent = build_agent(opts)?;
    let mut sentences = 0usize;
    let mut inferred = 0usize;
    for path in &opts.files {
        let asts = parse_file(path)?;
        sentences += asts.len();
        let report = agent.run_story(&asts, opts.pacing).map_err(engine_err)?;
        inferred += report
            .vis
            .iter()
            .filter(|v| agent.vi(**v).is_some_and(|vi| vi.inferred))
            .count();
    }
    if predict {
        dump_hs(&agent);
    } else {
        report_run(&agent, sentences, inferred);
    }
    finish(&mut agent, opts)
}

fn report_run(agent: &Agent, sentences: usize, inferred: usize) {
    println!("sentences: {sentences}");
    println!("inferred:  {inferred}");
    println!("clock:     {:.3}", agent.clock());
    println!(
        "focus:     {} instances, {} events",
        agent.instances().count(),
        agent.vis().count()
    );
    println!(
        "memory:    {} instances, {} events",
        agent.memory().instances().count(),
        agent.memory().vis().count()
    );
    let links: Vec<String> = agent
        .identity
        .links()
        .iter()
        .map(|l| format!("{} {} {}", l.a, l.kind, l.b))
        .collect();
    println!("identity:  {} links", links.len());
    for l in &links {
        println!("  {l}");
    }
    // identity closures per proper noun
    let mut nouns: Vec<String> = agent
        .kb
        .concepts()
        .filter(|c| agent.kb.is_proper_noun(&c.name))
        .map(|c| c.name.clone())
        .collect();
    nouns.sort();
    use xapi_core::IdentityKind::{Fictional, Somatic, View};
    for name in nouns {
        let bearers = agent.instances_bearing(&name);
        if bearers.is_empty() {
            continue;
        }
        let mut closure = std::collections::BTreeSet::new();
        for b in &bearers {
            closure.extend(agent.identity.closure(*b, &[Somatic, Fictional, View]));
        }
        println!(
            "\"{}\": {} instances bearing it, identity closure of {}",
            name,
            bearers.len(),
            closure.len()
        );
    }
}

fn dump_shadows(agent: &Agent) {
    println!("-- instance shadows --");
    for (i, body) in agent.shadow_state().instance_shadows() {
        let label = agent.instance_label(i);
        for (m, w) in body {
            println!("{label} <- {} {w:.4}", agent.instance_label(*m));
        }
    }
    println!("-- event shadows --");
    for (v, body) in agent.shadow_state().vi_shadows() {
        let verb = agent
            .vi(v)
            .map(|vi| vi.verb_words.join("+"))
            .unwrap_or_else(|| v.to_string());
        for (m, w) in body {
            let mverb = agent
                .memory()
                .vi(*m)
                .map(|vi| vi.verb_words.join("+"))
                .unwrap_or_else(|| m.to_string());
            println!("{v}:{verb} <- {m}:{mverb} {w:.4}");
        }
    }
}

fn dump_hs(agent: &Agent) {
    let hs = agent.headless_shadows();
    if hs.is_empty() {
        println!("no predictions");
        return;
    }
    for c in hs {
        let subject = c
            .subject
            .map(|s| agent.instance_label(s))
            .unwrap_or_else(|| "-".into());
        let object = c
            .object
            .map(|o| agent.instance_label(o))
            .unwrap_or_else(|| "-".into());
        println!(
            "predict {} / {} / {}  support={:.4} kind={} scenes={}",
            subject,
            c.verb_words.join("+"),
            object,
            c.support,
            c.kind,
            c.source_scenes.into_iter().collect::<Vec<_>>().join(",")
        );
    }
}

fn cmd_repl(opts: &RunOpts) -> CmdResult {
    let mut agent = build_agent(opts)?;
    for path in &opts.files {
        let asts = parse_file(path)?;
        agent.run_story(&asts, opts.pacing).map_err(engine_err)?;
    }
    let stdin = io::stdin();
    let mut out = io::stdout();
    let mut pending = String::new();
    loop {
        if pending.is_empty() {
            print!("xapi> ");
        } else {
            print!("....> ");
        }
        out.flush().ok();
        let mut line = String::new();
        if stdin.lock().read_line(&mut line).unwrap_or(0) == 0 {
            break;
        }
        let trimmed = line.trim();
        if pending.is_empty() && trimmed.starts_with(':') {
            match repl_command(&mut agent, trimmed, opts) {
                ReplFlow::Continue => continue,
                ReplFlow::Quit => break,
            }
        }
        pending.push_str(&line);
        // keep reading until the sentence is terminated
        if !trimmed.ends_with('.') && !trimmed.ends_with('?') {
            continue;
        }
        let text = std::mem::take(&mut pending);
        match parse_story(&text) {
            Ok(asts) => {
                if let Err(e) = agent.run_story(&asts, opts.pacing) {
                    println!("error: {e}");
                }
            }
            Err(e) => println!("parse error: {e}"),
        }
    }
    finish(&mut agent, opts)
}

enum ReplFlow {
    Continue,
    Quit,
}

fn repl_command(agent: &mut Agent, cmd: &str, opts: &RunOpts) -> ReplFlow {
    let mut it = cmd.split_whitespace();
    match it.next().unwrap_or("") {
        ":quit" | ":q" => return ReplFlow::Quit,
        ":focus" => {
            for inst in agent.instances() {
                let w = agent
                    .focus_weight(ComponentId::Instance(inst.id))
                    .unwrap_or(0.0);
                println!("{} {} {:.4}", inst.id, inst.label, w);
            }
            for vi in agent.vis() {
                let w = agent.focus_weight(ComponentId::Vi(vi.id)).unwrap_or(0.0);
                println!("{} {} {:.4}", vi.id, vi.verb_words.join("+"), w);
            }
        }
        ":shadows" => dump_shadows(agent),
        ":hs" => dump_hs(agent),
        ":identity" => {
            for l in agent.identity.links().iter() {
                println!("{} {} {} ({})", l.a, l.kind, l.b, l.provenance);
            }
        }
        ":save" => match it.next() {
            Some(path) => {
                let result = agent
                    .demote_all()
                    .map_err(|e| e.to_string())
                    .and_then(|()| save_json(agent).map_err(|e| e.to_string()))
                    .and_then(|json| fs::write(path, json).map_err(|e| e.to_string()));
                match result {
                    Ok(()) => println!("saved {path}"),
                    Err(e) => println!("error: {e}"),
                }
            }
            None => println!(":save needs a file name"),
        },
        ":run" => match it.next() {
            Some(path) => {
                let path = PathBuf::from(path);
                match parse_file(&path).map(|asts| agent.run_story(&asts, opts.pacing)) {
                    Ok(Ok(_)) => {}
                    Ok(Err(e)) => println!("error: {e}"),
                    Err((_, e)) => println!("error: {e}"),
                }
            }
            None => println!(":run needs a file name"),
        },
        ":help" => {
            println!(":focus :shadows :hs :identity :run FILE :save FILE :quit");
        }
        other => println!("unknown command {other} (try :help)"),
    }
    ReplFlow::Continue
}
