use criterion::{black_box, criterion_group, criterion_main, Criterion};
use framekit::analytics::{ngram_counts, weighted_log_odds, DEFAULT_ALPHA_TOTAL};
use framekit::classifier::{self, TrainConfig};
use framekit::preprocess::{clean_corpus, clean_text, dedup, keyword_filter};
use framekit::Corpus;
use framekit_bench::{labeled_corpus, synthetic_posts};
use std::collections::HashSet;

fn preprocessing(c: &mut Criterion) {
    let corpus = Corpus::from_posts(synthetic_posts(20_000)).unwrap();
    c.bench_function("clean_text", |b| b.iter(|| clean_text(black_box("@bob  help 😀 the homeless\tnow "))));
    c.bench_function("clean_dedup_keyword_20k", |b| {
        b.iter(|| {
            let (cleaned, _) = clean_corpus(black_box(&corpus));
            let (deduped, _) = dedup(&cleaned);
            keyword_filter(&deduped, "homeless").unwrap()
        })
    });
}

fn log_odds(c: &mut Criterion) {
    let posts = synthetic_posts(20_000);
    let (a, b): (Vec<_>, Vec<_>) = posts.iter().enumerate().partition(|(i, _)| i % 3 == 0);
    let ta: Vec<&str> = a.iter().map(|(_, p)| p.text.as_str()).collect();
    let tb: Vec<&str> = b.iter().map(|(_, p)| p.text.as_str()).collect();
    let none = HashSet::new();
    c.bench_function("bigram_counts_20k", |bch| bch.iter(|| ngram_counts(black_box(ta.clone()), 2, &none).unwrap()));
    let ca = ngram_counts(ta, 2, &none).unwrap();
    let cb = ngram_counts(tb, 2, &none).unwrap();
    c.bench_function("weighted_log_odds", |bch| {
        bch.iter(|| weighted_log_odds(black_box(&ca), black_box(&cb), None, DEFAULT_ALPHA_TOTAL).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let corpus = labeled_corpus(2_000);
    let cfg = TrainConfig { max_epochs: 5, patience: 5, ..TrainConfig::default() };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("five_epochs_2k", |b| b.iter(|| classifier::train(black_box(&corpus), &corpus, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, preprocessing, log_odds, training);
criterion_main!(benches);
