//! Synthetic inputs shared by the benchmarks.

use framekit::{Annotation, Annotator, AnnotatorKind, Corpus, Frame, LabelSet, Post};

const WORDS: [&str; 24] = [
    "homeless", "shelter", "city", "council", "budget", "funding", "people", "street", "housing", "veterans",
    "tent", "downtown", "mayor", "camp", "rent", "crisis", "help", "neighborhood", "police", "winter", "news",
    "money", "jobs", "drugs",
];

/// `n` posts of 12 pseudo-random words; every tenth post repeats an earlier one.
pub fn synthetic_posts(n: usize) -> Vec<Post> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    (0..n)
        .map(|i| {
            let text = if i % 10 == 9 {
                format!("@user{} repeat {}", i, i / 10)
            } else {
                (0..12).map(|_| WORDS[(next() % WORDS.len() as u64) as usize]).collect::<Vec<_>>().join(" ")
            };
            Post::new(format!("p{i}"), format!("@user{} {text} 😀", i % 97), 1_650_000_000 + i as i64 * 60)
        })
        .collect()
}

/// Posts labeled with one frame picked from their id.
pub fn labeled_corpus(n: usize) -> Corpus {
    let mut c = Corpus::from_posts(synthetic_posts(n)).expect("unique ids");
    let ids: Vec<String> = c.iter().map(|p| p.id.clone()).collect();
    for (i, id) in ids.into_iter().enumerate() {
        let labels = LabelSet::Frames([Frame::ALL[i % Frame::COUNT]].into_iter().collect());
        c.annotate(Annotation::new(id, Annotator::new("gold", AnnotatorKind::Expert), labels, 0)).expect("valid");
    }
    c
}
