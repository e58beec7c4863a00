use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use msnmt::bitoken::{
    brown_cluster, classify_corpus, extract_corpus, train_class_lm, Alignment, Clustering, NgramLm,
};
use msnmt::editops::EditScript;
use msnmt::metrics::Average;
use msnmt::pipeline::{
    ape_apply, ape_derive, comparison_table, format_score, read_corpus, score, sentence_tsv, train, train_setup,
    translate, translate_setup, transpose_references, Metric, Settings, TRAIN_KEYS, TRANSLATE_KEYS,
};
use msnmt::textproc::{build_vocab, fix_punctuation, SplitRuleTable};
use msnmt::{Error, Result};

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).value_name("FILE").value_parser(value_parser!(PathBuf)).help(help)
}

fn output_arg() -> Arg {
    path_arg("output", "Write here instead of stdout").short('o')
}

/// `--config` plus one flag per settings key.
fn settings_command(name: &'static str, about: &'static str, keys: &[&'static str]) -> Command {
    let mut cmd = Command::new(name)
        .about(about)
        .arg(path_arg("config", "Flat key=value file; flags override it"));
    for &k in keys {
        cmd = cmd.arg(Arg::new(k).long(k).value_name("VALUE"));
    }
    cmd
}

fn cli() -> Command {
    Command::new("msnmt")
        .about("Multi-source neural translation, post-editing and evaluation tools")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .subcommand(settings_command("train", "Train a model and write checkpoints", TRAIN_KEYS))
        .subcommand(settings_command("translate", "Decode inputs with a checkpoint", TRANSLATE_KEYS))
        .subcommand(
            Command::new("ape-derive")
                .about("Derive keep/delete/insert scripts from MT and post-edits")
                .arg(path_arg("mt", "MT output").required(true))
                .arg(path_arg("pe", "Post-edits").required(true))
                .arg(Arg::new("split-german").long("split-german").action(ArgAction::SetTrue))
                .arg(output_arg()),
        )
        .subcommand(
            Command::new("ape-apply")
                .about("Apply edit scripts to MT output and post-process")
                .arg(path_arg("mt", "MT output").required(true))
                .arg(path_arg("scripts", "Edit scripts, one per line").required(true))
                .arg(Arg::new("split-german").long("split-german").action(ArgAction::SetTrue))
                .arg(output_arg()),
        )
        .subcommand(
            Command::new("score")
                .about("Corpus BLEU, TER or HTER")
                .arg(path_arg("hyp", "Hypotheses (repeat to compare systems)").required(true).action(ArgAction::Append))
                .arg(path_arg("ref", "References (repeat for multiple)").required(true).action(ArgAction::Append))
                .arg(
                    Arg::new("metric")
                        .long("metric")
                        .value_name("NAME")
                        .action(ArgAction::Append)
                        .help("bleu, ter or hter; repeatable [default: bleu]"),
                )
                .arg(
                    Arg::new("average")
                        .long("average")
                        .value_parser(["micro", "macro"])
                        .default_value("micro")
                        .help("HTER averaging"),
                )
                .arg(path_arg("sentences", "Write per-sentence scores of the first metric as TSV"))
                .arg(Arg::new("table").long("table").action(ArgAction::SetTrue).help("HTER/BLEU table per system")),
        )
        .subcommand(
            Command::new("preprocess-de")
                .about("Split German contractions and case endings")
                .arg(path_arg("input", "Tokenized German").required(true))
                .arg(path_arg("rules", "Replacement rule table (TSV)"))
                .arg(output_arg()),
        )
        .subcommand(
            Command::new("postprocess-de")
                .about("Merge German splits and fix punctuation")
                .arg(path_arg("input", "Split output").required(true))
                .arg(path_arg("mt", "MT lines used as punctuation reference"))
                .arg(path_arg("rules", "Replacement rule table (TSV)"))
                .arg(output_arg()),
        )
        .subcommand(
            Command::new("bitoken-extract")
                .about("Bitokens from word-aligned parallel text")
                .arg(path_arg("source", "Source sentences").required(true))
                .arg(path_arg("target", "Target sentences").required(true))
                .arg(path_arg("alignment", "i-j links per line").required(true))
                .arg(path_arg("source-classes", "Classify source words first"))
                .arg(path_arg("target-classes", "Classify target words first"))
                .arg(output_arg()),
        )
        .subcommand(
            Command::new("brown-cluster")
                .about("Exchange clustering into K classes")
                .arg(path_arg("input", "Token corpus").required(true))
                .arg(Arg::new("classes").long("classes").short('k').required(true).value_parser(value_parser!(usize)))
                .arg(
                    Arg::new("max-iterations")
                        .long("max-iterations")
                        .default_value("20")
                        .value_parser(value_parser!(usize)),
                )
                .arg(Arg::new("seed").long("seed").default_value("1").value_parser(value_parser!(u64)))
                .arg(path_arg("output", "Class file (token<TAB>class)").short('o').required(true)),
        )
        .subcommand(
            Command::new("class-lm")
                .about("Witten-Bell n-gram model written as ARPA")
                .arg(path_arg("input", "Training corpus").required(true))
                .arg(path_arg("classes", "Map tokens to classes first"))
                .arg(Arg::new("order").long("order").default_value("3").value_parser(value_parser!(usize)))
                .arg(path_arg("eval", "Report perplexity on this corpus"))
                .arg(path_arg("output", "ARPA file").short('o').required(true)),
        )
        .subcommand(
            Command::new("vocab")
                .about("Frequency-ranked vocabulary")
                .arg(path_arg("input", "Corpus (repeatable)").required(true).action(ArgAction::Append))
                .arg(
                    Arg::new("max-size")
                        .long("max-size")
                        .default_value("30000")
                        .value_parser(value_parser!(usize)),
                )
                .arg(output_arg()),
        )
}

fn path<'a>(m: &'a ArgMatches, name: &str) -> Option<&'a Path> {
    m.get_one::<PathBuf>(name).map(PathBuf::as_path)
}

fn required_path<'a>(m: &'a ArgMatches, name: &str) -> &'a Path {
    path(m, name).expect("clap enforces required arguments")
}

fn settings(m: &ArgMatches, keys: &[&str]) -> Result<Settings> {
    let mut s = match path(m, "config") {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let mut flags = Settings::default();
    for &k in keys {
        if let Some(v) = m.get_one::<String>(k) {
            flags.set(k, v.clone());
        }
    }
    s.merge(&flags);
    Ok(s)
}

fn join(lines: &[Vec<String>]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l.join(" "));
        out.push('\n');
    }
    out
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io { path: p.to_path_buf(), source: e }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::Io { path: PathBuf::from("<stdout>"), source: e })
        }
    }
}

fn rules(m: &ArgMatches) -> Result<SplitRuleTable> {
    match path(m, "rules") {
        Some(p) => SplitRuleTable::load(p),
        None => Ok(SplitRuleTable::german().clone()),
    }
}

fn run(matches: &ArgMatches) -> Result<()> {
    match matches.subcommand().expect("subcommand required") {
        ("train", m) => {
            let setup = train_setup(&settings(m, TRAIN_KEYS)?)?;
            let out = train(&setup.train, setup.valid.as_ref(), &setup.shape, &setup.config)?;
            let best = out.best_bleu.map_or("n/a".to_string(), |b| format!("{:.2}", b * 100.0));
            println!("steps: {}", out.steps);
            println!("best validation BLEU: {best}");
            println!("best checkpoint: {}", out.best_checkpoint.display());
            println!("log: {}", out.log_path.display());
        }
        ("translate", m) => {
            let setup = translate_setup(&settings(m, TRANSLATE_KEYS)?)?;
            let hyps = translate(&setup.checkpoint, &setup.inputs, setup.beam, setup.max_len)?;
            emit(setup.output.as_deref(), &join(&hyps))?;
        }
        ("ape-derive", m) => {
            let mt = read_corpus(required_path(m, "mt"))?;
            let pe = read_corpus(required_path(m, "pe"))?;
            let scripts = ape_derive(&mt, &pe, m.get_flag("split-german"))?;
            let text: String = scripts.iter().map(|s| format!("{s}\n")).collect();
            emit(path(m, "output"), &text)?;
        }
        ("ape-apply", m) => {
            let mt = read_corpus(required_path(m, "mt"))?;
            let scripts_path = required_path(m, "scripts");
            let text = std::fs::read_to_string(scripts_path)
                .map_err(|e| Error::Io { path: scripts_path.to_path_buf(), source: e })?;
            let scripts: Vec<EditScript> = text.lines().map(EditScript::parse).collect();
            emit(path(m, "output"), &join(&ape_apply(&mt, &scripts, m.get_flag("split-german"))?))?;
        }
        ("score", m) => score_command(m)?,
        ("preprocess-de", m) => {
            let table = rules(m)?;
            let lines = read_corpus(required_path(m, "input"))?;
            let out: Vec<Vec<String>> = lines
                .iter()
                .map(|l| table.split_pronoun_endings(&table.split_contractions(l)))
                .collect();
            emit(path(m, "output"), &join(&out))?;
        }
        ("postprocess-de", m) => {
            let table = rules(m)?;
            let lines = read_corpus(required_path(m, "input"))?;
            let mt = path(m, "mt").map(read_corpus).transpose()?;
            if let Some(mt) = &mt {
                if mt.len() != lines.len() {
                    return Err(Error::Usage(format!("{} MT lines for {} outputs", mt.len(), lines.len())));
                }
            }
            let out: Vec<Vec<String>> = lines
                .iter()
                .enumerate()
                .map(|(i, l)| fix_punctuation(&table.merge(l), mt.as_ref().map(|m| m[i].as_slice())))
                .collect();
            emit(path(m, "output"), &join(&out))?;
        }
        ("bitoken-extract", m) => {
            let mut src = read_corpus(required_path(m, "source"))?;
            let mut tgt = read_corpus(required_path(m, "target"))?;
            if let Some(p) = path(m, "source-classes") {
                src = classify_corpus(&src, &Clustering::load(p)?);
            }
            if let Some(p) = path(m, "target-classes") {
                tgt = classify_corpus(&tgt, &Clustering::load(p)?);
            }
            let al_path = required_path(m, "alignment");
            let text = std::fs::read_to_string(al_path)
                .map_err(|e| Error::Io { path: al_path.to_path_buf(), source: e })?;
            let alignments = text.lines().map(Alignment::parse).collect::<Result<Vec<_>>>()?;
            emit(path(m, "output"), &join(&extract_corpus(&src, &tgt, &alignments)?))?;
        }
        ("brown-cluster", m) => {
            let corpus = read_corpus(required_path(m, "input"))?;
            let k = *m.get_one::<usize>("classes").expect("required");
            let iters = *m.get_one::<usize>("max-iterations").expect("default");
            let seed = *m.get_one::<u64>("seed").expect("default");
            let c = brown_cluster(&corpus, k, iters, seed)?;
            c.save(required_path(m, "output"))?;
            let mi = c.history.last().copied().unwrap_or(0.0);
            println!(
                "classes={k} iterations={} converged={} moves={} mutual_information={mi:.6}",
                c.iterations,
                c.converged,
                c.history.len() - 1
            );
        }
        ("class-lm", m) => {
            let mut corpus = read_corpus(required_path(m, "input"))?;
            let clustering = path(m, "classes").map(Clustering::load).transpose()?;
            if let Some(c) = &clustering {
                corpus = classify_corpus(&corpus, c);
            }
            let lm = train_class_lm(&corpus, *m.get_one::<usize>("order").expect("default"))?;
            lm.save(required_path(m, "output"))?;
            println!("train perplexity: {:.4}", lm.perplexity(&corpus));
            if let Some(p) = path(m, "eval") {
                let mut eval = read_corpus(p)?;
                if let Some(c) = &clustering {
                    eval = classify_corpus(&eval, c);
                }
                let reloaded = NgramLm::load(required_path(m, "output"))?;
                println!("eval perplexity: {:.4}", reloaded.perplexity(&eval));
            }
        }
        ("vocab", m) => {
            let mut corpus = Vec::new();
            for p in m.get_many::<PathBuf>("input").expect("required") {
                corpus.extend(read_corpus(p)?);
            }
            let v = build_vocab(corpus.iter().map(Vec::as_slice), *m.get_one::<usize>("max-size").expect("default"))?;
            match path(m, "output") {
                Some(p) => v.save(p)?,
                None => emit(None, &v.words().iter().map(|w| format!("{w}\n")).collect::<String>())?,
            }
        }
        (other, _) => unreachable!("unknown subcommand {other}"),
    }
    Ok(())
}

fn score_command(m: &ArgMatches) -> Result<()> {
    let hyp_paths: Vec<&PathBuf> = m.get_many::<PathBuf>("hyp").expect("required").collect();
    let hyps = hyp_paths.iter().map(|p| read_corpus(p)).collect::<Result<Vec<_>>>()?;
    let ref_files = m
        .get_many::<PathBuf>("ref")
        .expect("required")
        .map(|p| read_corpus(p))
        .collect::<Result<Vec<_>>>()?;
    let average = match m.get_one::<String>("average").map(String::as_str) {
        Some("macro") => Average::Macro,
        _ => Average::Micro,
    };
    let refs = transpose_references(hyps[0].len(), &ref_files)?;
    if m.get_flag("table") || hyps.len() > 1 {
        let mut rows = Vec::new();
        for (p, h) in hyp_paths.iter().zip(&hyps) {
            let refs = transpose_references(h.len(), &ref_files)?;
            let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            let hter = score(h, &refs, Metric::Hter, average)?.value;
            let bleu = score(h, &refs, Metric::Bleu, average)?.value;
            rows.push((name, hter, bleu));
        }
        return emit(None, &comparison_table(&rows));
    }
    let metrics: Vec<Metric> = match m.get_many::<String>("metric") {
        Some(v) => v.map(|s| s.parse()).collect::<Result<_>>()?,
        None => vec![Metric::Bleu],
    };
    let mut text = String::new();
    for (i, metric) in metrics.iter().enumerate() {
        let s = score(&hyps[0], &refs, *metric, average)?;
        text.push_str(&format_score(&s));
        text.push('\n');
        if i == 0 {
            if let Some(p) = path(m, "sentences") {
                std::fs::write(p, sentence_tsv(&s)).map_err(|e| Error::Io { path: p.to_path_buf(), source: e })?;
            }
        }
    }
    emit(None, &text)
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("msnmt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
