//! Synthetic inputs shared by the criterion benchmarks.

use mtpipe::corpus::Corpus;
use mtpipe::modelstore::{Checkpoint, Tensor};
use mtpipe::rng::SplitMix64;

const WORDS: [&str; 16] = [
    "nguyên", "nhân", "là", "do", "quyết", "định", "hủy", "hợp", "đồng", "mua", "tàu", "ngầm", "hạt", "chung", "với",
    "và",
];

/// `n` Vietnamese-looking sentences of 5 to 40 words.
pub fn vi_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = SplitMix64::new(seed);
    let lines: Vec<String> = (0..n)
        .map(|_| {
            let len = 5 + rng.below(36) as usize;
            (0..len).map(|_| WORDS[rng.below(WORDS.len() as u64) as usize]).collect::<Vec<_>>().join(" ")
        })
        .collect();
    Corpus::from_lines(lines)
}

/// Lowercase ASCII sentences the toy backend can encode.
pub fn ascii_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = SplitMix64::new(seed);
    let lines: Vec<String> = (0..n)
        .map(|_| {
            (0..3 + rng.below(10))
                .map(|_| (0..1 + rng.below(8)).map(|_| (b'a' + rng.below(26) as u8) as char).collect::<String>())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    Corpus::from_lines(lines)
}

/// A checkpoint with one `[vocab, dim]` embedding and a few square layers.
pub fn checkpoint(step: u64, vocab: usize, dim: usize, seed: u64) -> Checkpoint {
    let mut rng = SplitMix64::new(seed);
    let mut t = |shape: Vec<usize>| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.next_f64() as f32 - 0.5).collect()).unwrap()
    };
    let mut c = Checkpoint::new(step).with_tensor("embed_tokens", t(vec![vocab, dim]));
    for i in 0..4 {
        c = c.with_tensor(format!("layers.{i}.weight"), t(vec![dim, dim]));
    }
    c
}
