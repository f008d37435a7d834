//! Synthetic multi-aspect sentiment corpus with known gold rationales and
//! a tunable cross-aspect spurious-correlation knob, plus JSONL
//! persistence for externally annotated data.
//!
//! Every example carries one signal span for the target aspect whose
//! lexicon polarity fixes the label; with probability rho each other
//! aspect contributes a same-polarity distractor span. Distractors share
//! the label's polarity on purpose: that is exactly what makes them
//! spuriously predictive.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum CorpusError {
    #[error("invalid corpus spec: {0}")]
    BadSpec(String),
    #[error("line {line}: {msg}")]
    MalformedLine { line: usize, msg: String },
    #[error("empty corpus")]
    Empty,
    #[error("split fractions must sum to 1 and leave no part empty")]
    BadSplit,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Per-token class tag. Signal tokens belong to one aspect's sentiment
/// lexicon; meaningless tokens stand in for function words.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TokenClass {
    Signal(usize),
    Filler,
    Meaningless,
}

impl fmt::Display for TokenClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenClass::Signal(aspect) => write!(f, "signal-aspect-{aspect}"),
            TokenClass::Filler => write!(f, "filler"),
            TokenClass::Meaningless => write!(f, "meaningless"),
        }
    }
}

impl TokenClass {
    pub fn parse(s: &str) -> Result<TokenClass, String> {
        match s {
            "filler" => Ok(TokenClass::Filler),
            "meaningless" => Ok(TokenClass::Meaningless),
            other => other
                .strip_prefix("signal-aspect-")
                .and_then(|a| a.parse().ok())
                .map(TokenClass::Signal)
                .ok_or_else(|| format!("unknown token class {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub label: usize,
    pub gold_mask: Vec<u8>,
    pub aspect: usize,
    pub token_classes: Vec<TokenClass>,
}

impl Example {
    pub fn gold_indices(&self) -> Vec<usize> {
        self.gold_mask
            .iter()
            .enumerate()
            .filter(|(_, &g)| g == 1)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub aspect_count: usize,
    /// Signal words per (aspect, polarity) lexicon.
    pub signal_words_per_polarity: usize,
    pub filler_words: usize,
    pub meaningless_words: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub min_span: usize,
    pub max_span: usize,
    /// Probability of a same-polarity distractor span per non-target aspect.
    pub rho: f64,
    /// Probability of a positive label.
    pub class_balance: f64,
    pub target_aspect: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            aspect_count: 3,
            signal_words_per_polarity: 20,
            filler_words: 80,
            meaningless_words: 40,
            min_len: 30,
            max_len: 50,
            min_span: 3,
            max_span: 6,
            rho: 0.9,
            class_balance: 0.5,
            target_aspect: 0,
            size: 10_000,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.aspect_count == 0
            || self.signal_words_per_polarity == 0
            || self.filler_words + self.meaningless_words == 0
        {
            return Err(CorpusError::BadSpec("lexicons must be nonempty".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(CorpusError::BadSpec(format!("rho {} not in [0,1]", self.rho)));
        }
        if !(0.0..=1.0).contains(&self.class_balance) {
            return Err(CorpusError::BadSpec("class_balance not in [0,1]".into()));
        }
        if self.min_len > self.max_len || self.min_span > self.max_span || self.min_span == 0 {
            return Err(CorpusError::BadSpec("bad length or span range".into()));
        }
        if self.aspect_count * self.max_span > self.min_len {
            return Err(CorpusError::BadSpec(format!(
                "span lengths exceed sequence length: {} aspects x span {} > min_len {}",
                self.aspect_count, self.max_span, self.min_len
            )));
        }
        if self.target_aspect >= self.aspect_count {
            return Err(CorpusError::BadSpec("target_aspect out of range".into()));
        }
        if self.size == 0 {
            return Err(CorpusError::BadSpec("size must be positive".into()));
        }
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.aspect_count * 2 * self.signal_words_per_polarity
            + self.filler_words
            + self.meaningless_words
    }

    /// Ids [base, base+len) of the (aspect, polarity) signal lexicon.
    /// Polarity 0 is negative, 1 positive.
    pub fn signal_range(&self, aspect: usize, polarity: usize) -> std::ops::Range<usize> {
        let base = (aspect * 2 + polarity) * self.signal_words_per_polarity;
        base..base + self.signal_words_per_polarity
    }

    pub fn filler_range(&self) -> std::ops::Range<usize> {
        let base = self.aspect_count * 2 * self.signal_words_per_polarity;
        base..base + self.filler_words
    }

    pub fn meaningless_range(&self) -> std::ops::Range<usize> {
        let base = self.aspect_count * 2 * self.signal_words_per_polarity + self.filler_words;
        base..base + self.meaningless_words
    }

    pub fn class_of(&self, id: usize) -> TokenClass {
        if self.filler_range().contains(&id) {
            TokenClass::Filler
        } else if self.meaningless_range().contains(&id) {
            TokenClass::Meaningless
        } else {
            TokenClass::Signal(id / (2 * self.signal_words_per_polarity))
        }
    }

    /// (aspect, polarity) of a signal token.
    pub fn polarity_of(&self, id: usize) -> Option<(usize, usize)> {
        match self.class_of(id) {
            TokenClass::Signal(aspect) => {
                Some((aspect, (id / self.signal_words_per_polarity) % 2))
            }
            _ => None,
        }
    }

    pub fn manifest(&self) -> VocabManifest {
        let mut entries = Vec::with_capacity(self.vocab_size());
        for id in 0..self.vocab_size() {
            let surface = match self.class_of(id) {
                TokenClass::Signal(aspect) => {
                    let (_, pol) = self.polarity_of(id).expect("signal token");
                    let word = id % self.signal_words_per_polarity;
                    let pol = if pol == 1 { "pos" } else { "neg" };
                    format!("a{aspect}_{pol}_{word:02}")
                }
                TokenClass::Filler => format!("filler_{:02}", id - self.filler_range().start),
                TokenClass::Meaningless => {
                    format!("junk_{:02}", id - self.meaningless_range().start)
                }
            };
            entries.push(VocabEntry {
                id,
                surface,
                class: self.class_of(id).to_string(),
            });
        }
        VocabManifest {
            vocab_size: self.vocab_size(),
            entries,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VocabEntry {
    pub id: usize,
    pub surface: String,
    pub class: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VocabManifest {
    pub vocab_size: usize,
    pub entries: Vec<VocabEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub examples: Vec<Example>,
    pub provenance: String,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn max_token_id(&self) -> usize {
        self.examples
            .iter()
            .flat_map(|e| e.tokens.iter())
            .copied()
            .max()
            .unwrap_or(0)
    }

    pub fn max_len(&self) -> usize {
        self.examples.iter().map(|e| e.tokens.len()).max().unwrap_or(0)
    }
}

fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 over the pair keeps per-example streams independent.
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic synthesis: the same (spec, seed) always yields the same
/// corpus, and each example draws from its own derived stream.
pub fn synthesize(spec: &CorpusSpec, seed: u64) -> Result<Corpus, CorpusError> {
    spec.validate()?;
    let examples = (0..spec.size)
        .map(|i| synthesize_example(spec, &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64))))
        .collect();
    Ok(Corpus {
        examples,
        provenance: format!("synthetic(seed={seed},size={},rho={})", spec.size, spec.rho),
    })
}

fn synthesize_example(spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> Example {
    let len = rng.random_range(spec.min_len..=spec.max_len);
    let label = usize::from(rng.random::<f64>() < spec.class_balance);

    // Decide which aspects appear: the target always, others with prob rho.
    let mut span_aspects = vec![spec.target_aspect];
    for aspect in 0..spec.aspect_count {
        if aspect != spec.target_aspect && rng.random::<f64>() < spec.rho {
            span_aspects.push(aspect);
        }
    }
    shuffle(&mut span_aspects, rng);

    // Disjoint placement by composing the slack into random gaps around
    // the spans; unlike rejection sampling this cannot wedge itself when
    // earlier spans fragment the free space.
    let lens: Vec<usize> = span_aspects
        .iter()
        .map(|_| rng.random_range(spec.min_span..=spec.max_span))
        .collect();
    let slack = len - lens.iter().sum::<usize>();
    let mut cuts: Vec<usize> = (0..span_aspects.len())
        .map(|_| rng.random_range(0..=slack))
        .collect();
    cuts.sort_unstable();
    let mut placed: Vec<(usize, usize, usize)> = Vec::new(); // (start, len, aspect)
    let mut cursor = 0;
    let mut prev_cut = 0;
    for ((&aspect, &span_len), &cut) in span_aspects.iter().zip(&lens).zip(&cuts) {
        cursor += cut - prev_cut;
        placed.push((cursor, span_len, aspect));
        cursor += span_len;
        prev_cut = cut;
    }

    let filler = spec.filler_range();
    let meaningless = spec.meaningless_range();
    let background = filler.len() + meaningless.len();
    let mut tokens = Vec::with_capacity(len);
    let mut classes = Vec::with_capacity(len);
    for _ in 0..len {
        let pick = rng.random_range(0..background);
        let id = if pick < filler.len() {
            filler.start + pick
        } else {
            meaningless.start + (pick - filler.len())
        };
        tokens.push(id);
        classes.push(spec.class_of(id));
    }

    let mut gold_mask = vec![0u8; len];
    for &(start, span_len, aspect) in &placed {
        let lexicon = spec.signal_range(aspect, label);
        for pos in start..start + span_len {
            let id = lexicon.start + rng.random_range(0..lexicon.len());
            tokens[pos] = id;
            classes[pos] = TokenClass::Signal(aspect);
            if aspect == spec.target_aspect {
                gold_mask[pos] = 1;
            }
        }
    }

    Example {
        tokens,
        label,
        gold_mask,
        aspect: spec.target_aspect,
        token_classes: classes,
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonExample {
    tokens: Vec<usize>,
    label: u8,
    rationale: Vec<u8>,
    aspect: usize,
    classes: Vec<String>,
}

/// One JSON object per line, `\n`-terminated.
pub fn save_jsonl(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for ex in &corpus.examples {
        let line = JsonExample {
            tokens: ex.tokens.clone(),
            label: ex.label as u8,
            rationale: ex.gold_mask.clone(),
            aspect: ex.aspect,
            classes: ex.token_classes.iter().map(|c| c.to_string()).collect(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut examples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: JsonExample =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
                line: lineno,
                msg: e.to_string(),
            })?;
        if parsed.tokens.len() != parsed.rationale.len() {
            return Err(CorpusError::MalformedLine {
                line: lineno,
                msg: format!(
                    "{} tokens but {} rationale entries",
                    parsed.tokens.len(),
                    parsed.rationale.len()
                ),
            });
        }
        if parsed.classes.len() != parsed.tokens.len() {
            return Err(CorpusError::MalformedLine {
                line: lineno,
                msg: format!(
                    "{} tokens but {} class tags",
                    parsed.tokens.len(),
                    parsed.classes.len()
                ),
            });
        }
        if parsed.label > 1 || parsed.rationale.iter().any(|&r| r > 1) {
            return Err(CorpusError::MalformedLine {
                line: lineno,
                msg: "labels and rationale entries must be 0 or 1".into(),
            });
        }
        let token_classes = parsed
            .classes
            .iter()
            .map(|c| TokenClass::parse(c))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|msg| CorpusError::MalformedLine { line: lineno, msg })?;
        examples.push(Example {
            tokens: parsed.tokens,
            label: parsed.label as usize,
            gold_mask: parsed.rationale,
            aspect: parsed.aspect,
            token_classes,
        });
    }
    if examples.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(Corpus {
        examples,
        provenance: path.display().to_string(),
    })
}

pub fn save_manifest(manifest: &VocabManifest, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Lexicon file for ingested data: JSON map from class name to token ids.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<usize>>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Floor the raw targets, then hand out the leftover by descending
/// fractional remainder, skipping slots that hit their cap.
fn largest_remainder(raw: &[f64], total: usize, caps: &[usize]) -> Vec<usize> {
    let mut counts: Vec<usize> = raw
        .iter()
        .zip(caps)
        .map(|(r, &cap)| (r.floor() as usize).min(cap))
        .collect();
    let mut order: Vec<(usize, f64)> = raw
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r - r.floor()))
        .collect();
    order.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    let mut leftover = total - counts.iter().sum::<usize>().min(total);
    // One increment per slot in remainder order; cycle only if caps block.
    while leftover > 0 {
        let before = leftover;
        for &(i, _) in &order {
            if leftover == 0 {
                break;
            }
            if counts[i] < caps[i] {
                counts[i] += 1;
                leftover -= 1;
            }
        }
        assert!(leftover < before, "caps cannot absorb the split");
    }
    counts
}

/// Deterministic label-stratified split. Fractions must sum to 1 and every
/// part must end up nonempty. Part sizes are exact (largest remainder on
/// the totals); label ratios stay within one example per part.
pub fn split(
    corpus: &Corpus,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus), CorpusError> {
    let (a, b, c) = fractions;
    if (a + b + c - 1.0).abs() > 1e-9 || a <= 0.0 || b <= 0.0 || c <= 0.0 {
        return Err(CorpusError::BadSplit);
    }

    let n = corpus.len();
    let part_sizes = largest_remainder(
        &[a * n as f64, b * n as f64, c * n as f64],
        n,
        &[n, n, n],
    );

    let mut buckets: [Vec<&Example>; 2] = [Vec::new(), Vec::new()];
    for ex in &corpus.examples {
        buckets[ex.label.min(1)].push(ex);
    }
    for (label, bucket) in buckets.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, label as u64));
        shuffle(bucket, &mut rng);
    }

    // Allocate label 0 proportionally within each part; label 1 fills the
    // remainder, so both part sizes and per-label totals come out exact.
    let n0 = buckets[0].len();
    let raw0: Vec<f64> = part_sizes
        .iter()
        .map(|&g| g as f64 * n0 as f64 / n as f64)
        .collect();
    let alloc0 = largest_remainder(&raw0, n0, &part_sizes);

    let mut parts: [Vec<Example>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let (mut off0, mut off1) = (0usize, 0usize);
    for (p, part) in parts.iter_mut().enumerate() {
        let take0 = alloc0[p];
        let take1 = part_sizes[p] - take0;
        part.extend(buckets[0][off0..off0 + take0].iter().map(|&e| e.clone()));
        part.extend(buckets[1][off1..off1 + take1].iter().map(|&e| e.clone()));
        off0 += take0;
        off1 += take1;
    }

    for (i, part) in parts.iter_mut().enumerate() {
        if part.is_empty() {
            return Err(CorpusError::BadSplit);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 100 + i as u64));
        shuffle(part, &mut rng);
    }

    let [train, dev, test] = parts;
    let mk = |examples: Vec<Example>, name: &str| Corpus {
        examples,
        provenance: format!("{}/{name}", corpus.provenance),
    };
    Ok((mk(train, "train"), mk(dev, "dev"), mk(test, "test")))
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    // Fisher-Yates; kept local so the shuffle order is pinned by this crate
    // rather than by rand's evolving SliceRandom implementation.
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> CorpusSpec {
        CorpusSpec {
            size: 200,
            ..CorpusSpec::default()
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let spec = small_spec();
        let a = synthesize(&spec, 42).unwrap();
        let b = synthesize(&spec, 42).unwrap();
        assert_eq!(a, b);
        let c = synthesize(&spec, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rho_zero_has_no_off_target_signal() {
        let spec = CorpusSpec {
            rho: 0.0,
            size: 100,
            ..CorpusSpec::default()
        };
        let corpus = synthesize(&spec, 1).unwrap();
        for ex in &corpus.examples {
            for class in &ex.token_classes {
                if let TokenClass::Signal(aspect) = class {
                    assert_eq!(*aspect, spec.target_aspect);
                }
            }
        }
    }

    #[test]
    fn rho_one_always_has_all_distractors() {
        let spec = CorpusSpec {
            rho: 1.0,
            size: 100,
            ..CorpusSpec::default()
        };
        let corpus = synthesize(&spec, 2).unwrap();
        for ex in &corpus.examples {
            for aspect in 0..spec.aspect_count {
                assert!(
                    ex.token_classes
                        .iter()
                        .any(|c| *c == TokenClass::Signal(aspect)),
                    "missing aspect {aspect}"
                );
            }
        }
    }

    #[test]
    fn gold_masks_cover_only_target_signal() {
        let spec = small_spec();
        let corpus = synthesize(&spec, 3).unwrap();
        for ex in &corpus.examples {
            assert!(ex.gold_mask.iter().any(|&g| g == 1));
            for (i, &g) in ex.gold_mask.iter().enumerate() {
                if g == 1 {
                    assert_eq!(ex.token_classes[i], TokenClass::Signal(spec.target_aspect));
                    let (_, pol) = spec.polarity_of(ex.tokens[i]).unwrap();
                    assert_eq!(pol, ex.label);
                } else {
                    assert_ne!(ex.token_classes[i], TokenClass::Signal(spec.target_aspect));
                }
            }
        }
    }

    #[test]
    fn label_balance_is_respected_at_scale() {
        let spec = CorpusSpec {
            size: 10_000,
            ..CorpusSpec::default()
        };
        let corpus = synthesize(&spec, 4).unwrap();
        let positives = corpus.examples.iter().filter(|e| e.label == 1).count();
        let rate = positives as f64 / corpus.len() as f64;
        assert!((rate - 0.5).abs() < 0.02, "positive rate {rate}");
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let corpus = synthesize(&small_spec(), 5).unwrap();
        save_jsonl(&corpus, &path).unwrap();
        let loaded = load_jsonl(&path).unwrap();
        assert_eq!(corpus.examples, loaded.examples);
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"tokens":[1,2],"label":0,"rationale":[1,0],"aspect":0,"classes":["filler","filler"]}"#,
                "\n",
                r#"{"tokens":[1,2],"label":0,"rationale":[1],"aspect":0,"classes":["filler","filler"]}"#,
                "\n"
            ),
        )
        .unwrap();
        match load_jsonl(&path) {
            Err(CorpusError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed-line error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(load_jsonl(&path), Err(CorpusError::Empty)));
    }

    #[test]
    fn split_sizes_and_stratification() {
        let spec = CorpusSpec {
            size: 1000,
            ..CorpusSpec::default()
        };
        let corpus = synthesize(&spec, 6).unwrap();
        let (train, dev, test) = split(&corpus, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(train.len(), 800);
        assert_eq!(dev.len(), 100);
        assert_eq!(test.len(), 100);

        let pos_rate = |c: &Corpus| {
            c.examples.iter().filter(|e| e.label == 1).count() as f64 / c.len() as f64
        };
        let overall = pos_rate(&corpus);
        for part in [&train, &dev, &test] {
            let diff = (pos_rate(part) - overall).abs() * part.len() as f64;
            assert!(diff <= 1.0 + 1e-9, "stratification off by {diff} examples");
        }

        let (t2, d2, s2) = split(&corpus, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(train.examples, t2.examples);
        assert_eq!(dev.examples, d2.examples);
        assert_eq!(test.examples, s2.examples);
    }

    #[test]
    fn degenerate_split_is_rejected() {
        let corpus = synthesize(&small_spec(), 8).unwrap();
        assert!(split(&corpus, (0.5, 0.5, 0.0), 1).is_err());
        assert!(split(&corpus, (0.5, 0.3, 0.3), 1).is_err());
    }

    #[test]
    fn lexicon_ranges_are_disjoint_and_cover_the_vocab() {
        let spec = CorpusSpec::default();
        let mut seen = vec![0u8; spec.vocab_size()];
        for aspect in 0..spec.aspect_count {
            for pol in 0..2 {
                for id in spec.signal_range(aspect, pol) {
                    seen[id] += 1;
                }
            }
        }
        for id in spec.filler_range() {
            seen[id] += 1;
        }
        for id in spec.meaningless_range() {
            seen[id] += 1;
        }
        assert!(seen.iter().all(|&s| s == 1));
        assert_eq!(spec.vocab_size(), 240);
    }

    #[test]
    fn manifest_is_readable() {
        let spec = CorpusSpec::default();
        let manifest = spec.manifest();
        assert_eq!(manifest.entries.len(), 240);
        assert_eq!(manifest.entries[0].surface, "a0_neg_00");
        assert!(manifest.entries.iter().any(|e| e.class == "meaningless"));
    }
}
