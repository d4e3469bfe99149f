//! `igram`: parse, filter, check and lint with Interaction Grammars.
//!
//! Exit status: 0 when every sentence parses (or the check/lint is clean),
//! 1 when some sentence has no parse (or a condition/lint fails), 2 on
//! usage, input or internal errors. Results go to stdout, diagnostics to
//! stderr.

use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use igram_core::filter::Key;
use igram_core::grammar::selection_from_json;
use igram_core::model::interpretation_from_json;
use igram_core::parser::selections;
use igram_core::report::{
    graph_report, parse_report, render_filter_text, render_parse_text, render_verdict_text,
    verdict_rows, FilterReport,
};
use igram_core::tree::TreeDoc;
use igram_core::{check_model, parse, Engine, Grammar, Lexicon, ParseOptions, SyntacticTree};

#[derive(Parser, Debug)]
#[command(name = "igram", version, about = "Interaction Grammar parsing toolkit")]
struct Cli {
    /// Grammar document (JSON).
    #[arg(long, global = true)]
    grammar: Option<PathBuf>,
    /// Lexicon document (JSON).
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
    Graph,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse sentences (arguments, or one per line on stdin).
    Parse(ParseArgs),
    /// Report lexical-selection counts before and after filtering.
    Filter(FilterArgs),
    /// Check a tree against a selection under an interpretation.
    Check(CheckArgs),
    /// Validate the grammar (and the lexicon, if given).
    Lint,
}

#[derive(Args, Debug)]
struct SentenceArgs {
    /// Sentences; read from stdin when absent.
    sentences: Vec<String>,
    /// Read sentences from a file, one per line.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Disable the polarity filter.
    #[arg(long)]
    no_filter: bool,
    /// Restrict the filter to these keys, e.g. `cat=np,cat=s`.
    #[arg(long, value_delimiter = ',')]
    keys: Vec<String>,
    /// Sentences processed in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct ParseArgs {
    #[command(flatten)]
    input: SentenceArgs,
    #[arg(long, value_parser = ["incremental", "cky"], default_value = "incremental")]
    engine: String,
    /// Open active polarities tolerated before SHIFT (incremental engine).
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..))]
    bound: u32,
    #[arg(long, default_value_t = 100)]
    max_models: usize,
    /// Merge attempts allowed per lexical selection.
    #[arg(long, default_value_t = 200_000)]
    max_steps: usize,
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[command(flatten)]
    input: SentenceArgs,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Tree document (JSON).
    #[arg(long)]
    tree: PathBuf,
    /// Selection: JSON array of anchored IPTDs.
    #[arg(long)]
    selection: PathBuf,
    /// Interpretation: JSON object from description nodes (`A2`) to tree node names.
    #[arg(long)]
    interpretation: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Parse(a) => cmd_parse(cli, a),
        Command::Filter(a) => cmd_filter(cli, a),
        Command::Check(a) => cmd_check(cli, a),
        Command::Lint => cmd_lint(cli),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_grammar(cli: &Cli) -> Result<Grammar> {
    let path = cli.grammar.as_deref().context("--grammar is required")?;
    Grammar::from_json(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_lexicon(cli: &Cli, g: &Grammar) -> Result<Lexicon> {
    let path = cli.lexicon.as_deref().context("--lexicon is required")?;
    let lex = Lexicon::from_json(&read(path)?).with_context(|| format!("in {}", path.display()))?;
    let problems = lex.check(&g.signature);
    if !problems.is_empty() {
        bail!("lexicon {}: {}", path.display(), problems.join("; "));
    }
    Ok(lex)
}

fn sentences(a: &SentenceArgs) -> Result<Vec<String>> {
    let lines: Vec<String> = if !a.sentences.is_empty() {
        a.sentences.clone()
    } else if let Some(p) = &a.input {
        read(p)?.lines().map(str::to_string).collect()
    } else {
        io::stdin().lock().lines().collect::<io::Result<_>>()?
    };
    Ok(lines.into_iter().filter(|l| !l.trim().is_empty()).collect())
}

fn keys(a: &SentenceArgs, g: &Grammar) -> Result<Option<Vec<Key>>> {
    if a.keys.is_empty() {
        return Ok(None);
    }
    a.keys
        .iter()
        .map(|k| {
            let (f, v) = k.split_once('=').with_context(|| format!("bad key `{k}`"))?;
            let (f, v) = (f.trim(), v.trim());
            if !g.signature.domain(f).is_some_and(|d| d.contains(v)) {
                bail!("key `{k}` is not in the signature");
            }
            Ok(Key::new(f, v))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("cannot start worker threads")
}

fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn cmd_parse(cli: &Cli, a: &ParseArgs) -> Result<u8> {
    let g = load_grammar(cli)?;
    let lex = load_lexicon(cli, &g)?;
    let lines = sentences(&a.input)?;
    let opts = ParseOptions {
        engine: a.engine.parse::<Engine>()?,
        polarity_bound: a.bound,
        max_models: a.max_models,
        max_steps: a.max_steps,
        filter: !a.input.no_filter,
        keys: keys(&a.input, &g)?,
    };
    let results: Vec<_> = pool(a.input.jobs)?.install(|| {
        lines
            .par_iter()
            .map(|s| parse(s, &g, &lex, &opts))
            .collect()
    });
    let mut code = 0;
    let mut structured = Vec::new();
    let mut graphs = Vec::new();
    let mut text = String::new();
    for (line, r) in lines.iter().zip(results) {
        let r = match r {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {line:?}: {} ({})", e, e.code());
                code = 2;
                continue;
            }
        };
        for w in &r.unknown_words {
            eprintln!("warning: UNKNOWN_WORD {w:?} in {line:?}");
        }
        if r.incomplete {
            eprintln!("warning: BUDGET_EXHAUSTED for {line:?}; results may be incomplete");
        }
        if cli.verbose {
            eprintln!(
                "{line:?}: {} selection(s), {} model(s), {} merge attempt(s)",
                r.stats.selections,
                r.models.len(),
                r.stats.steps
            );
        }
        if r.models.is_empty() && code == 0 {
            code = 1;
        }
        let rep = parse_report(&r);
        match cli.format {
            Format::Text => {
                if !text.is_empty() {
                    text.push('\n');
                }
                text.push_str(&render_parse_text(&rep));
            }
            Format::Structured => structured.push(rep),
            Format::Graph => graphs.push(graph_report(&r)),
        }
    }
    match cli.format {
        Format::Text => emit(&text)?,
        Format::Structured => emit(&to_json(&structured))?,
        Format::Graph => emit(&to_json(&graphs))?,
    }
    Ok(code)
}

fn cmd_filter(cli: &Cli, a: &FilterArgs) -> Result<u8> {
    let g = load_grammar(cli)?;
    let lex = load_lexicon(cli, &g)?;
    let lines = sentences(&a.input)?;
    let opts = ParseOptions {
        filter: !a.input.no_filter,
        keys: keys(&a.input, &g)?,
        ..ParseOptions::default()
    };
    let results: Vec<_> = pool(a.input.jobs)?.install(|| {
        lines
            .par_iter()
            .map(|s| selections(s, &g, &lex, &opts))
            .collect()
    });
    let mut code = 0;
    let mut reports = Vec::new();
    for (line, r) in lines.iter().zip(results) {
        match r {
            Ok((_, stats, unknown_words)) => reports.push(FilterReport {
                sentence: line.clone(),
                unknown_words,
                stats,
            }),
            Err(e) => {
                eprintln!("error: {line:?}: {} ({})", e, e.code());
                code = 2;
            }
        }
    }
    match cli.format {
        Format::Text => {
            let texts: Vec<String> = reports.iter().map(render_filter_text).collect();
            emit(&texts.join("\n"))?;
        }
        _ => emit(&to_json(&reports))?,
    }
    Ok(code)
}

fn cmd_check(cli: &Cli, a: &CheckArgs) -> Result<u8> {
    let g = load_grammar(cli)?;
    let doc: TreeDoc = serde_json::from_str(&read(&a.tree)?)
        .with_context(|| format!("in {}", a.tree.display()))?;
    let tree = SyntacticTree::from_doc(&doc).with_context(|| format!("in {}", a.tree.display()))?;
    let selection = selection_from_json(&g.signature, &read(&a.selection)?)
        .with_context(|| format!("in {}", a.selection.display()))?;
    let interp = interpretation_from_json(&tree, &read(&a.interpretation)?)
        .with_context(|| format!("in {}", a.interpretation.display()))?;
    let verdict = check_model(&tree, &selection, &interp)?;
    let rows = verdict_rows(&verdict);
    match cli.format {
        Format::Text => emit(&render_verdict_text(&rows))?,
        _ => emit(&to_json(&rows))?,
    }
    Ok(if verdict.ok { 0 } else { 1 })
}

fn cmd_lint(cli: &Cli) -> Result<u8> {
    let path = cli.grammar.as_deref().context("--grammar is required")?;
    let (g, mut issues) = Grammar::lint_str(&read(path)?);
    let mut messages: Vec<String> = issues.drain(..).map(|i| i.to_string()).collect();
    if let (Some(g), Some(lp)) = (&g, &cli.lexicon) {
        match Lexicon::from_json(&read(lp)?) {
            Ok(lex) => messages.extend(lex.check(&g.signature).into_iter().map(|m| format!("lexicon: {m}"))),
            Err(e) => messages.push(format!("lexicon: {e}")),
        }
    }
    match cli.format {
        Format::Text => {
            let mut s = String::new();
            for m in &messages {
                s.push_str(m);
                s.push('\n');
            }
            s.push_str(&format!("{} issue(s)\n", messages.len()));
            emit(&s)?;
        }
        _ => emit(&to_json(&messages))?,
    }
    Ok(if messages.is_empty() { 0 } else { 1 })
}
