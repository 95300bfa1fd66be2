use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use framekit::agreement::{cross_annotator_report, prf_against_reference, write_report_csv, PrfReport, RatingMatrix};
use framekit::analytics::{self, Gazetteer, Granularity, Normalization, NgramCounts, TTestVariant};
use framekit::classifier::{self, ClassifierModel};
use framekit::io::{read_annotations, write_annotations, write_jsonl, write_posts};
use framekit::llm::{annotate_two_stage, BatchOptions, HttpChatClient, ParseMode, PromptTemplate};
use framekit::preprocess::{self, ingest_jsonl, PreprocessOptions};
use framekit::validate::{SystemClock, ValidationStore};
use framekit::{parse_frame, Annotation, AnnotatorKind, Corpus, Frame, Label, LabelIndex};
use serde::Serialize;

use crate::manifest::Manifest;
use crate::server::{self, AppState};
use crate::{
    AgreementArgs, AnalyzeCommand, AnnotateArgs, Cli, CliError, Command, Config, CorpusArgs, GranularityArg, ImportArgs,
    NormArg, PredictArgs, PreprocessArgs, ServeArgs, TrainArgs, VariantArg,
};

type Result<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

/// Flag value, else config value, else a usage error naming the flag.
fn required(flag: Option<PathBuf>, config: Option<&PathBuf>, name: &str) -> Result<PathBuf> {
    match flag.or_else(|| config.cloned()) {
        Some(p) => Ok(p),
        None => usage(format!("{name} is required (flag or config)")),
    }
}

fn must_exist(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return usage(format!("input {} does not exist", p.display()));
        }
    }
    Ok(())
}

fn parameters<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

/// Reads posts and attaches every annotation whose post is present.
fn load_corpus(posts: &Path, annotations: &[PathBuf]) -> Result<Corpus> {
    let mut corpus = ingest_jsonl(posts).with_context(|| format!("reading {}", posts.display()))?;
    for path in annotations {
        let anns = read_annotations(path).with_context(|| format!("reading {}", path.display()))?;
        let mut attached = 0;
        for a in anns {
            if corpus.contains(&a.post_id) {
                corpus.annotate(a)?;
                attached += 1;
            }
        }
        log::info!("{}: attached {attached} annotations", path.display());
    }
    Ok(corpus)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>) -> Result<()> {
    create_parent(path)?;
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn record(manifest: &mut Manifest, inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    for p in inputs {
        manifest.input(p)?;
    }
    for p in outputs {
        manifest.output(p)?;
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    let config = Config::load(cli.config.as_deref())?;
    config.validate()?;
    match cli.command {
        Command::Preprocess(a) => run_preprocess(&config, a),
        Command::AnnotateLlm(a) => run_annotate(&config, a),
        Command::Serve(a) => run_serve(&config, a),
        Command::Train(a) => run_train(&config, a),
        Command::Predict(a) => run_predict(&config, a),
        Command::ImportPredictions(a) => run_import(&config, a),
        Command::Agreement(a) => run_agreement(&config, a),
        Command::Analyze(a) => run_analyze(&config, a),
    }
}

fn read_id_list(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

fn run_preprocess(config: &Config, args: PreprocessArgs) -> Result<()> {
    let input = required(args.input.clone(), config.paths.corpus.as_ref(), "--input")?;
    let out_dir = required(args.out_dir.clone(), config.paths.outputs.as_ref(), "--out-dir")?;
    let annotations = if args.annotations.is_empty() { config.paths.annotations.clone() } else { args.annotations.clone() };
    let mut inputs: Vec<&Path> = vec![&input];
    inputs.extend(annotations.iter().map(PathBuf::as_path));
    let pinned_file = args.pinned_ids.clone().or_else(|| config.split.pinned_ids_file.clone());
    if let Some(p) = &pinned_file {
        inputs.push(p);
    }
    must_exist(&inputs)?;

    let mut spec = config.split.spec.clone();
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some((tr, va, te)) = args.fractions {
        spec.train_fraction = tr;
        spec.val_fraction = va;
        spec.test_fraction = te;
    }
    if let Some(kind) = &args.restrict_test {
        spec.test_source_restriction = Some(kind.parse::<AnnotatorKind>().map_err(CliError::Usage)?);
    }
    if let Some(n) = args.restricted_draws {
        spec.restricted_test_draws = n;
    }
    if let Some(p) = &pinned_file {
        spec.pinned_test_ids = read_id_list(p)?;
    }
    if args.keyword.as_deref() == Some("") {
        return usage("--keyword must not be empty");
    }

    let raw = load_corpus(&input, &annotations)?;
    let options = PreprocessOptions { keyword: args.keyword.clone(), language_filter: None };
    let (corpus, report) = preprocess::preprocess(&raw, &options)?;
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let corpus_path = out_dir.join("corpus.jsonl");
    let report_path = out_dir.join("preprocess_report.json");
    write_posts(&corpus_path, corpus.posts())?;
    write_json(&report_path, &report)?;
    let mut outputs = vec![corpus_path.clone(), report_path];

    if args.split || config.split.enabled {
        let parts = preprocess::split(&corpus, &spec)?;
        for (name, part) in [("train", &parts.train), ("val", &parts.val), ("test", &parts.test)] {
            let p = out_dir.join(format!("{name}.jsonl"));
            write_posts(&p, part.posts())?;
            outputs.push(p);
        }
        let manifest_path = out_dir.join("split_manifest.json");
        write_json(&manifest_path, &parts.manifest(&spec))?;
        outputs.push(manifest_path);
        println!(
            "split: train {} / val {} / test {}",
            parts.train.len(),
            parts.val.len(),
            parts.test.len()
        );
    }
    println!(
        "kept {} of {} posts ({} duplicates, {} keyword misses)",
        report.output, report.input, report.duplicates_removed, report.keyword_rejected
    );

    let mut m = Manifest::new("preprocess", config.digest(), parameters(&args));
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    record(&mut m, &inputs, &outs)?;
    m.write_to(&out_dir.join("preprocess.manifest.json"))?;
    Ok(())
}

fn load_template(path: Option<&Path>, fallback: PromptTemplate) -> Result<PromptTemplate> {
    let t = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => fallback,
    };
    t.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(t)
}

fn run_annotate(config: &Config, args: AnnotateArgs) -> Result<()> {
    let corpus_path = required(args.corpus.clone(), config.paths.corpus.as_ref(), "--corpus")?;
    let mut inputs: Vec<&Path> = vec![&corpus_path];
    inputs.extend(args.filter_prompt.as_deref());
    inputs.extend(args.frames_prompt.as_deref());
    must_exist(&inputs)?;

    let mut llm = config.llm.clone();
    if let Some(e) = &args.endpoint {
        llm.endpoint = e.clone();
    }
    if let Some(m) = &args.model {
        llm.model = m.clone();
    }
    if let Some(c) = args.concurrency {
        llm.max_concurrency = c;
    }
    if let Some(r) = args.max_retries {
        llm.max_retries = r;
    }
    llm.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let filter_t = load_template(args.filter_prompt.as_deref(), PromptTemplate::default_filter())?;
    let frames_t = load_template(args.frames_prompt.as_deref(), PromptTemplate::default_frames())?;

    let corpus = ingest_jsonl(&corpus_path)?;
    let client = HttpChatClient::new(&llm)?;
    let options = BatchOptions {
        annotator_id: args.annotator_id.clone(),
        checkpoint: args.checkpoint.clone(),
        raw_log: args.raw_log.clone(),
        parse_mode: if args.strict { ParseMode::Strict } else { ParseMode::Tolerant },
    };
    let outcome = annotate_two_stage(&corpus, &client, &llm, &filter_t, &frames_t, &options)?;
    create_parent(&args.out)?;
    write_annotations(&args.out, &outcome.annotations)?;
    let mut outputs = vec![args.out.clone()];
    if !outcome.failures.is_empty() {
        let p = args.out.with_file_name(format!(
            "{}.failures.jsonl",
            args.out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
        ));
        write_jsonl(&p, &outcome.failures)?;
        log::warn!("{} posts failed; see {}", outcome.failures.len(), p.display());
        outputs.push(p);
    }
    println!(
        "annotated {} posts ({} resumed, {} failed, {} requests)",
        outcome.annotations.len(),
        outcome.resumed,
        outcome.failures.len(),
        outcome.requests
    );

    #[derive(Serialize)]
    struct Params<'a> {
        args: &'a AnnotateArgs,
        llm: &'a framekit::llm::LlmClientConfig,
        filter_template_version: u32,
        frames_template_version: u32,
    }
    let params = Params {
        args: &args,
        llm: &llm,
        filter_template_version: filter_t.version,
        frames_template_version: frames_t.version,
    };
    let mut m = Manifest::new("annotate-llm", config.digest(), parameters(&params));
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    record(&mut m, &inputs, &outs)?;
    m.write_beside(&args.out)?;
    Ok(())
}

fn run_serve(config: &Config, args: ServeArgs) -> Result<()> {
    let corpus_path = required(args.corpus.clone(), config.paths.corpus.as_ref(), "--corpus")?;
    let mut inputs: Vec<&Path> = vec![&corpus_path];
    inputs.extend(args.batch.as_deref());
    must_exist(&inputs)?;
    let ttl_secs = args.lease_ttl_secs.unwrap_or(config.service.lease_ttl_secs);
    if ttl_secs <= 0 {
        return usage("--lease-ttl-secs must be positive");
    }
    let ttl = chrono::Duration::seconds(ttl_secs);
    let bind = args.bind.clone().unwrap_or_else(|| config.service.bind.clone());
    let corpus = ingest_jsonl(&corpus_path)?;
    let clock = Arc::new(SystemClock);
    let store = match args.event_log.clone().or_else(|| config.service.event_log.clone()) {
        Some(p) => {
            create_parent(&p)?;
            ValidationStore::open(&p, clock, ttl)?
        }
        None => ValidationStore::in_memory(clock, ttl),
    };
    if let Some(batch) = &args.batch {
        let proposals = read_annotations(batch)?;
        let n = store.enqueue(&proposals, &corpus)?;
        log::info!("enqueued {n} new items from {}", batch.display());
    }
    let state = Arc::new(AppState { store, corpus });
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        server::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(())
}

fn run_train(config: &Config, args: TrainArgs) -> Result<()> {
    let annotations = if args.annotations.is_empty() { config.paths.annotations.clone() } else { args.annotations.clone() };
    let out = required(args.out.clone(), config.paths.model.as_ref(), "--out")?;
    let mut inputs: Vec<&Path> = vec![&args.train, &args.val];
    inputs.extend(annotations.iter().map(PathBuf::as_path));
    must_exist(&inputs)?;

    let mut tc = config.classifier.clone();
    if let Some(v) = args.learning_rate {
        tc.learning_rate = v;
    }
    if let Some(v) = args.l2 {
        tc.l2_lambda = v;
    }
    if let Some(v) = args.max_epochs {
        tc.max_epochs = v;
    }
    if let Some(v) = args.patience {
        tc.patience = v;
    }
    if let Some(v) = args.tau {
        tc.tau = v;
    }
    if let Some(v) = args.min_df {
        tc.features.min_df = v;
    }
    if let Some(v) = args.max_features {
        tc.features.max_features = Some(v);
    }
    if let Some(v) = args.seed {
        tc.seed = v;
    }
    tc.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let train = load_corpus(&args.train, &annotations)?;
    let val = load_corpus(&args.val, &annotations)?;
    let (model, report) = classifier::train(&train, &val, &tc)?;
    create_parent(&out)?;
    model.save(&out)?;
    let mut outputs = vec![out.clone()];
    if let Some(r) = &args.report {
        write_json(r, &report)?;
        outputs.push(r.clone());
    }
    println!(
        "trained {} epochs (best {}), val macro F1 {:.4}",
        report.stopped_epoch, report.best_epoch, report.val_metrics.macro_.f1
    );
    let mut m = Manifest::new("train", config.digest(), parameters(&(&args, &tc)));
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    record(&mut m, &inputs, &outs)?;
    m.write_beside(&out)?;
    Ok(())
}

fn write_metrics_csv<W: Write>(report: &PrfReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "label,tp,fp,fn,precision,recall,f1")?;
    for label in Label::ALL {
        let c = report.counts[label.index()];
        let s = report.per_label[label.index()];
        writeln!(w, "{},{},{},{},{},{},{}", csv_field(label.name()), c.tp, c.fp, c.fn_, s.precision, s.recall, s.f1)?;
    }
    for (name, s) in [
        ("micro", report.micro),
        ("macro", report.macro_),
        ("micro_frames", report.micro_frames),
        ("macro_frames", report.macro_frames),
    ] {
        writeln!(w, "{name},,,,{},{},{}", s.precision, s.recall, s.f1)?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn run_predict(config: &Config, args: PredictArgs) -> Result<()> {
    let model_path = required(args.model.clone(), config.paths.model.as_ref(), "--model")?;
    let corpus_path = required(args.corpus.clone(), config.paths.corpus.as_ref(), "--corpus")?;
    let mut inputs: Vec<&Path> = vec![&model_path, &corpus_path];
    inputs.extend(args.gold.iter().map(PathBuf::as_path));
    must_exist(&inputs)?;
    if args.metrics.is_some() && args.gold.is_empty() {
        return usage("--metrics needs --gold annotations");
    }

    let model = ClassifierModel::load(&model_path)?;
    let corpus = ingest_jsonl(&corpus_path)?;
    let predictions = model.predict_batch(corpus.posts());
    write_file(&args.out, |w| {
        classifier::write_predictions(w, corpus.iter().zip(&predictions).map(|(p, pr)| (p.id.as_str(), &pr.labels)))?;
        Ok(())
    })?;
    let mut outputs = vec![args.out.clone()];

    if let Some(metrics) = &args.metrics {
        let mut gold_anns: Vec<Annotation> = Vec::new();
        for g in &args.gold {
            gold_anns.extend(read_annotations(g)?);
        }
        let gold_all = LabelIndex::from_annotations(gold_anns.iter().filter(|a| corpus.contains(&a.post_id)));
        let mut system = LabelIndex::new();
        let mut reference = LabelIndex::new();
        for (p, pr) in corpus.iter().zip(&predictions) {
            if let Some(g) = gold_all.get(&p.id) {
                system.insert(p.id.clone(), pr.labels);
                reference.insert(p.id.clone(), *g);
            }
        }
        if reference.is_empty() {
            return Err(CliError::Operational(anyhow::anyhow!("no gold labels for posts in the corpus")));
        }
        let report = prf_against_reference(&system, &reference)?;
        write_file(metrics, |w| Ok(write_metrics_csv(&report, w)?))?;
        println!("scored {} posts: macro F1 {:.4}, micro F1 {:.4}", reference.len(), report.macro_.f1, report.micro.f1);
        outputs.push(metrics.clone());
    }

    let mut m = Manifest::new("predict", config.digest(), parameters(&args));
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    record(&mut m, &inputs, &outs)?;
    m.write_beside(&args.out)?;
    Ok(())
}

fn run_import(config: &Config, args: ImportArgs) -> Result<()> {
    let corpus_path = required(args.corpus.clone(), config.paths.corpus.as_ref(), "--corpus")?;
    let inputs: Vec<&Path> = vec![&args.predictions, &corpus_path];
    must_exist(&inputs)?;
    let corpus = ingest_jsonl(&corpus_path)?;
    let anns = classifier::import_predictions(&args.predictions, &corpus, &args.annotator_id)?;
    create_parent(&args.out)?;
    write_annotations(&args.out, &anns)?;
    println!("imported {} annotations", anns.len());
    let mut m = Manifest::new("import-predictions", config.digest(), parameters(&args));
    record(&mut m, &inputs, &[&args.out])?;
    m.write_beside(&args.out)?;
    Ok(())
}

fn run_agreement(config: &Config, args: AgreementArgs) -> Result<()> {
    let inputs: Vec<&Path> = args.annotations.iter().map(PathBuf::as_path).collect();
    must_exist(&inputs)?;
    let mut anns = Vec::new();
    for p in &args.annotations {
        anns.extend(read_annotations(p)?);
    }
    let matrix = RatingMatrix::from_annotations(&anns, true)?;
    if matrix.n_items() == 0 {
        return Err(CliError::Operational(anyhow::anyhow!("no item is rated by every annotator")));
    }
    let report = cross_annotator_report(&matrix, args.subject.as_deref())?;
    write_file(&args.out, |w| Ok(write_report_csv(&report, w)?))?;
    let mut outputs = vec![args.out.clone()];
    if let Some(j) = &args.json {
        write_json(j, &report)?;
        outputs.push(j.clone());
    }
    println!(
        "{} items, {} raters: macro F1 {:.4}, macro kappa {:.4}",
        matrix.n_items(),
        matrix.n_raters(),
        report.macro_.f1.mean,
        report.fleiss_kappa_macro
    );
    let mut m = Manifest::new("agreement", config.digest(), parameters(&args));
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    record(&mut m, &inputs, &outs)?;
    m.write_beside(&args.out)?;
    Ok(())
}

/// Corpus, its final labels and the input files read, for the analyze subcommands.
struct Loaded {
    corpus: Corpus,
    labels: LabelIndex,
    inputs: Vec<PathBuf>,
}

fn load_input(config: &Config, input: &CorpusArgs, extra: &[Option<&PathBuf>]) -> Result<Loaded> {
    let corpus_path = required(input.corpus.clone(), config.paths.corpus.as_ref(), "--corpus")?;
    let annotations = if input.annotations.is_empty() { config.paths.annotations.clone() } else { input.annotations.clone() };
    let mut inputs = vec![corpus_path.clone()];
    inputs.extend(annotations.iter().cloned());
    inputs.extend(extra.iter().flatten().map(|p| (*p).clone()));
    must_exist(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    let corpus = load_corpus(&corpus_path, &annotations)?;
    let labels = corpus.final_labels();
    Ok(Loaded { corpus, labels, inputs })
}

fn gazetteer(aliases: Option<&PathBuf>) -> Result<Gazetteer> {
    let mut g = Gazetteer::us_states();
    if let Some(p) = aliases {
        g.load_aliases(p)?;
    }
    Ok(g)
}

fn frame_arg(s: &str) -> Result<Frame> {
    parse_frame(s).map_err(|e| CliError::Usage(e.to_string()))
}

fn normalization(n: NormArg) -> Normalization {
    match n {
        NormArg::Row => Normalization::Row,
        NormArg::Column => Normalization::Column,
        NormArg::None => Normalization::None,
    }
}

fn finish_analysis<T: Serialize>(config: &Config, name: &str, args: &T, inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut m = Manifest::new(name, config.digest(), parameters(args));
    let ins: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    record(&mut m, &ins, &[out])?;
    m.write_beside(out)?;
    Ok(())
}

fn read_stopwords(path: Option<&PathBuf>) -> Result<HashSet<String>> {
    let Some(p) = path else { return Ok(HashSet::new()) };
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    Ok(text.lines().map(|l| l.trim().to_lowercase()).filter(|l| !l.is_empty() && !l.starts_with('#')).collect())
}

fn counts_of(texts: &[&str], n: usize, stopwords: &HashSet<String>) -> Result<NgramCounts> {
    Ok(analytics::ngram_counts(texts.to_vec(), n, stopwords)?)
}

fn run_analyze(config: &Config, cmd: AnalyzeCommand) -> Result<()> {
    match cmd {
        AnalyzeCommand::LogOdds(args) => {
            let stop_path = args.stopwords.clone().or_else(|| config.analytics.stopwords.clone());
            let alpha = args.alpha_total.unwrap_or(config.analytics.alpha_total);
            let n = args.n as usize;
            let mut inputs: Vec<PathBuf> = Vec::new();
            let (ci, cj) = if let Some(f) = &args.frame {
                let frame = frame_arg(f)?;
                let loaded = load_input(config, &args.input, &[stop_path.as_ref(), args.prior.as_ref()])?;
                let stop = read_stopwords(stop_path.as_ref())?;
                let (with, without): (Vec<_>, Vec<_>) = loaded
                    .corpus
                    .iter()
                    .partition(|p| loaded.labels.get(&p.id).is_some_and(|l| l.has_frame(frame)));
                let with: Vec<&str> = with.iter().map(|p| p.text.as_str()).collect();
                let without: Vec<&str> = without.iter().map(|p| p.text.as_str()).collect();
                inputs = loaded.inputs;
                (counts_of(&with, n, &stop)?, counts_of(&without, n, &stop)?)
            } else if let (Some(a), Some(b)) = (&args.group_a, &args.group_b) {
                inputs.extend([a.clone(), b.clone()]);
                inputs.extend(stop_path.iter().cloned());
                inputs.extend(args.prior.iter().cloned());
                must_exist(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
                let stop = read_stopwords(stop_path.as_ref())?;
                let ga = ingest_jsonl(a)?;
                let gb = ingest_jsonl(b)?;
                let ta: Vec<&str> = ga.iter().map(|p| p.text.as_str()).collect();
                let tb: Vec<&str> = gb.iter().map(|p| p.text.as_str()).collect();
                (counts_of(&ta, n, &stop)?, counts_of(&tb, n, &stop)?)
            } else {
                return usage("give --frame, or both --group-a and --group-b");
            };
            let prior = match &args.prior {
                Some(p) => {
                    let c = ingest_jsonl(p)?;
                    let texts: Vec<&str> = c.iter().map(|p| p.text.as_str()).collect();
                    Some(counts_of(&texts, n, &read_stopwords(stop_path.as_ref())?)?)
                }
                None => None,
            };
            let results = analytics::weighted_log_odds(&ci, &cj, prior.as_ref(), alpha)?;
            write_file(&args.out, |w| Ok(analytics::write_log_odds_csv(&results, w)?))?;
            let significant = results.iter().filter(|r| r.significant).count();
            println!("{} terms, {significant} significant at |z| >= {}", results.len(), analytics::Z_CRITICAL);
            #[derive(Serialize)]
            struct Params<'a> {
                args: &'a crate::LogOddsArgs,
                alpha_total: f64,
                prior_epsilon: f64,
            }
            let params = Params { args: &args, alpha_total: alpha, prior_epsilon: analytics::PRIOR_EPSILON };
            finish_analysis(config, "analyze log-odds", &params, &inputs, &args.out)
        }
        AnalyzeCommand::States(args) => {
            let aliases = args.aliases.clone().or_else(|| config.analytics.gazetteer.clone());
            let loaded = load_input(config, &args.input, &[aliases.as_ref(), args.state_tags.as_ref()])?;
            let segments = match &args.state_tags {
                Some(p) => analytics::read_state_tags(p, &loaded.corpus)?,
                None => analytics::state_segment(&loaded.corpus, &gazetteer(aliases.as_ref())?),
            };
            let groups: Vec<(String, &Corpus)> = segments.iter().map(|(s, c)| (s.clone(), c)).collect();
            let m = analytics::frame_proportions(&groups, &loaded.labels, normalization(args.normalize));
            write_file(&args.out, |w| Ok(m.write_csv(w)?))?;
            println!("{} states", groups.len());
            finish_analysis(config, "analyze states", &args, &loaded.inputs, &args.out)
        }
        AnalyzeCommand::Proportions(args) => {
            let group_paths: Vec<&PathBuf> = args.groups.iter().map(|(_, p)| p).collect();
            let extra: Vec<Option<&PathBuf>> = group_paths.iter().map(|p| Some(*p)).collect();
            let loaded = load_input(config, &args.input, &extra)?;
            let group_corpora: Vec<(String, Corpus)> = if args.groups.is_empty() {
                vec![("all".to_string(), loaded.corpus.clone())]
            } else {
                args.groups
                    .iter()
                    .map(|(name, p)| Ok((name.clone(), ingest_jsonl(p)?)))
                    .collect::<Result<_>>()?
            };
            let groups: Vec<(String, &Corpus)> = group_corpora.iter().map(|(n, c)| (n.clone(), c)).collect();
            let m = analytics::frame_proportions(&groups, &loaded.labels, normalization(args.normalize));
            write_file(&args.out, |w| Ok(m.write_csv(w)?))?;
            finish_analysis(config, "analyze proportions", &args, &loaded.inputs, &args.out)
        }
        AnalyzeCommand::Cooccur(args) => {
            let loaded = load_input(config, &args.input, &[])?;
            let norm = normalization(args.normalize);
            let m = if args.terms_a.is_empty() {
                analytics::frame_cooccurrence(&loaded.corpus, &loaded.labels, norm)
            } else {
                analytics::cooccurrence(&loaded.corpus, &args.terms_a, &args.terms_b, norm)?
            };
            write_file(&args.out, |w| Ok(m.write_csv(w)?))?;
            finish_analysis(config, "analyze cooccur", &args, &loaded.inputs, &args.out)
        }
        AnalyzeCommand::Timeseries(args) => {
            let aliases = args.aliases.clone().or_else(|| config.analytics.gazetteer.clone());
            let loaded = load_input(config, &args.input, &[aliases.as_ref()])?;
            let corpus = match &args.state {
                Some(code) => {
                    let g = gazetteer(aliases.as_ref())?;
                    let code = code.to_uppercase();
                    loaded.corpus.filter(|p| g.states_in(&p.text).contains(&code))
                }
                None => loaded.corpus.clone(),
            };
            let g = match args.granularity {
                GranularityArg::Month => Granularity::Month,
                GranularityArg::Day => Granularity::Day,
            };
            let ts = analytics::time_series(&corpus, &loaded.labels, g);
            write_file(&args.out, |w| Ok(ts.write_csv(w)?))?;
            println!("{} buckets", ts.buckets.len());
            finish_analysis(config, "analyze timeseries", &args, &loaded.inputs, &args.out)
        }
        AnalyzeCommand::Regress(args) => {
            let aliases = args.aliases.clone().or_else(|| config.analytics.gazetteer.clone());
            let loaded = load_input(config, &args.input, &[Some(&args.factors), aliases.as_ref()])?;
            let factors = read_factors(&args.factors)?;
            let frames: Vec<Frame> = match &args.frame {
                Some(f) => vec![frame_arg(f)?],
                None => Frame::ALL.to_vec(),
            };
            let segments = analytics::state_segment(&loaded.corpus, &gazetteer(aliases.as_ref())?);
            let paired: Vec<(f64, &Corpus)> =
                segments.iter().filter_map(|(s, c)| factors.get(s).map(|x| (*x, c))).filter(|(_, c)| !c.is_empty()).collect();
            let mut rows = Vec::new();
            for f in &frames {
                let x: Vec<f64> = paired.iter().map(|(x, _)| *x).collect();
                let y: Vec<f64> = paired
                    .iter()
                    .map(|(_, c)| {
                        c.iter().filter(|p| loaded.labels.get(&p.id).is_some_and(|l| l.has_frame(*f))).count() as f64
                            / c.len() as f64
                    })
                    .collect();
                rows.push((f.canonical_name(), analytics::ols_fit(&x, &y)?));
            }
            write_file(&args.out, |w| Ok(analytics::write_regression_csv(&rows, w)?))?;
            println!("{} states with factors", paired.len());
            finish_analysis(config, "analyze regress", &args, &loaded.inputs, &args.out)
        }
        AnalyzeCommand::Ttest(args) => {
            let frame = frame_arg(&args.frame)?;
            let mut loaded = load_input(config, &args.input, &[Some(&args.scores)])?;
            analytics::attach_scores(&mut loaded.corpus, &args.scores)?;
            let (with, without) = analytics::scores_by_frame(&loaded.corpus, &loaded.labels, &args.score, frame);
            let variant = match args.variant {
                VariantArg::Welch => TTestVariant::Welch,
                VariantArg::Student => TTestVariant::Student,
            };
            let result = analytics::t_test(&with, &without, variant)?;
            let name = format!("{}:{}", args.score, frame.canonical_name());
            write_file(&args.out, |w| Ok(analytics::write_ttest_csv(&[(name.as_str(), result.clone())], w)?))?;
            if let Some(h) = &args.histogram {
                let groups = [
                    ("with", analytics::histogram(&with, args.bins)),
                    ("without", analytics::histogram(&without, args.bins)),
                ];
                write_file(h, |w| Ok(analytics::write_histogram_csv(&groups, w)?))?;
            }
            println!("t = {:.4}, df = {:.2}, p = {:.4e}", result.t, result.df, result.p_two_sided);
            finish_analysis(config, "analyze ttest", &args, &loaded.inputs, &args.out)
        }
        AnalyzeCommand::SubsetSig(args) => {
            let aliases = args.aliases.clone().or_else(|| config.analytics.gazetteer.clone());
            let loaded = load_input(config, &args.input, &[args.subset_ids.as_ref(), aliases.as_ref()])?;
            let in_subset: Vec<bool> = match (&args.state, &args.subset_ids) {
                (Some(code), _) => {
                    let g = gazetteer(aliases.as_ref())?;
                    let code = code.to_uppercase();
                    loaded.corpus.iter().map(|p| g.states_in(&p.text).contains(&code)).collect()
                }
                (None, Some(path)) => {
                    let ids = read_id_list(path)?;
                    loaded.corpus.iter().map(|p| ids.contains(&p.id)).collect()
                }
                (None, None) => return usage("give --state or --subset-ids"),
            };
            let (sub, rest): (Vec<usize>, Vec<usize>) = (0..loaded.corpus.len()).partition(|&i| in_subset[i]);
            let subset = loaded.corpus.select(&sub);
            let complement = loaded.corpus.select(&rest);
            let rows = Frame::ALL
                .iter()
                .map(|f| analytics::subset_frame_significance(&subset, &complement, &loaded.labels, *f))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            write_file(&args.out, |w| Ok(analytics::write_proportion_tests_csv(&rows, w)?))?;
            println!("subset {} posts, complement {}", subset.len(), complement.len());
            finish_analysis(config, "analyze subset-sig", &args, &loaded.inputs, &args.out)
        }
    }
}

fn read_factors(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = || -> Option<(String, f64)> {
            let (s, v) = line.split_once('\t')?;
            Some((s.trim().to_uppercase(), v.trim().parse().ok()?))
        };
        let (s, v) = parse().ok_or_else(|| anyhow::anyhow!("{}: line {} is not `state \\t value`", path.display(), i + 1))?;
        out.insert(s, v);
    }
    Ok(out)
}
