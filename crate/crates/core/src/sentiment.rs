//! Lexicon and rule based sentiment scoring in the style of VADER.
//!
//! Each token found in the lexicon contributes its mean valence, adjusted by
//! nearby negations, booster/dampener words and ALL-CAPS emphasis. The sum
//! is amplified by `!`/`?` emphasis and squashed into a compound score in
//! `[-1, 1]` by `x / sqrt(x^2 + alpha)`.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

/// Normalization constant of the compound score.
pub const ALPHA: f64 = 15.0;
/// Scalar applied to a negated valence.
pub const NEGATION_SCALAR: f64 = -0.74;
/// Magnitude added to an ALL-CAPS word when the rest of the text is not shouting.
pub const CAPS_INCREMENT: f64 = 0.733;
/// Booster increment.
pub const BOOST_INCREMENT: f64 = 0.293;
/// Per-`!` emphasis.
pub const EXCLAMATION_INCREMENT: f64 = 0.292;
pub const MAX_EXCLAMATIONS: usize = 4;
pub const QUESTION_INCREMENT: f64 = 0.18;
pub const MAX_QUESTION_EMPHASIS: f64 = 0.96;

pub const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.tsv");

const NEGATORS: &[&str] = &[
    "aint", "arent", "cannot", "cant", "couldnt", "darent", "didnt", "doesnt", "ain't", "aren't",
    "can't", "couldn't", "daren't", "didn't", "doesn't", "dont", "hadnt", "hasnt", "havent",
    "isnt", "mightnt", "mustnt", "neither", "don't", "hadn't", "hasn't", "haven't", "isn't",
    "mightn't", "mustn't", "neednt", "needn't", "never", "none", "nope", "nor", "not", "nothing",
    "nowhere", "oughtnt", "shant", "shouldnt", "uhuh", "wasnt", "werent", "oughtn't", "shan't",
    "shouldn't", "uh-uh", "wasn't", "weren't", "without", "wont", "wouldnt", "won't", "wouldn't",
    "rarely", "seldom", "despite",
];

const BOOSTERS: &[&str] = &[
    "absolutely", "amazingly", "awfully", "completely", "considerable", "considerably",
    "decidedly", "deeply", "effing", "enormous", "enormously", "entirely", "especially",
    "exceptional", "exceptionally", "extreme", "extremely", "fabulously", "flipping", "flippin",
    "frackin", "fracking", "fricking", "frickin", "frigging", "friggin", "fully", "fuckin",
    "fucking", "fuggin", "fugging", "greatly", "hella", "highly", "hugely", "incredible",
    "incredibly", "intensely", "major", "majorly", "more", "most", "particularly", "purely",
    "quite", "really", "remarkably", "so", "substantially", "thoroughly", "total", "totally",
    "tremendous", "tremendously", "uber", "unbelievably", "unusually", "utter", "utterly", "very",
];

const DAMPENERS: &[&str] = &[
    "almost", "barely", "hardly", "kinda", "kindof", "kind-of", "less", "little", "marginal",
    "marginally", "occasional", "occasionally", "partly", "scarce", "scarcely", "slight",
    "slightly", "somewhat", "sorta", "sortof", "sort-of",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SentimentError {
    #[error("lexicon has no entries")]
    EmptyLexicon,
    #[error("lexicon line {line}: {reason}")]
    MalformedLexicon { line: usize, reason: String },
}

/// Word valences plus the modifier word lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    entries: HashMap<String, f64>,
    boosters: HashMap<String, f64>,
    negators: HashSet<String>,
}

impl Lexicon {
    /// Parses `token<TAB>valence` lines. Extra tab separated columns are
    /// ignored; blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, SentimentError> {
        let mut entries = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| SentimentError::MalformedLexicon {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let mut cols = line.split('\t');
            let token = cols.next().unwrap_or_default();
            let valence = cols.next().ok_or_else(|| bad("missing valence column"))?;
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(bad("token is empty or contains whitespace"));
            }
            let valence: f64 = valence
                .trim()
                .parse()
                .map_err(|_| bad("valence is not a number"))?;
            if !valence.is_finite() {
                return Err(bad("valence is not finite"));
            }
            entries.insert(token.to_string(), valence);
        }
        Ok(Self::with_entries(entries))
    }

    /// The lexicon shipped with the crate (about 7500 entries).
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon is well formed")
    }

    /// Builds a lexicon from valences, using the default booster and negator lists.
    pub fn with_entries(entries: HashMap<String, f64>) -> Self {
        let boosters = BOOSTERS
            .iter()
            .map(|w| (w.to_string(), BOOST_INCREMENT))
            .chain(DAMPENERS.iter().map(|w| (w.to_string(), -BOOST_INCREMENT)))
            .collect();
        let negators = NEGATORS.iter().map(|w| w.to_string()).collect();
        Self {
            entries,
            boosters,
            negators,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn valence(&self, token: &str) -> Option<f64> {
        self.entries.get(&token.to_lowercase()).copied()
    }

    /// Same lexicon with every valence sign-flipped.
    pub fn negated(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), -v)).collect(),
            ..self.clone()
        }
    }

    fn is_negator(&self, lower: &str) -> bool {
        self.negators.contains(lower) || lower.contains("n't")
    }

    pub fn score(&self, text: &str) -> Result<SentimentScore, SentimentError> {
        score(text, self)
    }
}

/// Whitespace tokens plus the punctuation emphasis counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Tokens {
    pub tokens: Vec<String>,
    pub exclamations: usize,
    pub questions: usize,
}

/// Splits on whitespace and strips leading/trailing ASCII punctuation from
/// each token. A token that would shrink to two characters or fewer is kept
/// as-is, which preserves emoticons such as `:-)`.
pub fn tokenize(text: &str) -> Tokens {
    let tokens = text
        .split_whitespace()
        .map(|raw| {
            let stripped = raw.trim_matches(|c: char| c.is_ascii_punctuation());
            if stripped.chars().count() <= 2 {
                raw.to_string()
            } else {
                stripped.to_string()
            }
        })
        .collect();
    Tokens {
        tokens,
        exclamations: text.matches('!').count(),
        questions: text.matches('?').count(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentimentScore {
    pub compound: f64,
    pub pos: f64,
    pub neu: f64,
    pub neg: f64,
}

/// `x / sqrt(x^2 + alpha)`, clamped to `[-1, 1]`.
pub fn normalize(raw: f64) -> f64 {
    (raw / (raw * raw + ALPHA).sqrt()).clamp(-1.0, 1.0)
}

// Python's `str.isupper`: at least one cased character and no lowercase ones.
fn is_upper(s: &str) -> bool {
    s.chars().any(char::is_uppercase) && !s.chars().any(char::is_lowercase)
}

fn signum_or_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn punctuation_emphasis(tokens: &Tokens) -> f64 {
    let ep = tokens.exclamations.min(MAX_EXCLAMATIONS) as f64 * EXCLAMATION_INCREMENT;
    let qm = match tokens.questions {
        0 | 1 => 0.0,
        n @ 2..=3 => n as f64 * QUESTION_INCREMENT,
        _ => MAX_QUESTION_EMPHASIS,
    };
    ep + qm
}

struct Context<'a> {
    lexicon: &'a Lexicon,
    words: &'a [String],
    lower: Vec<String>,
    cap_differential: bool,
}

impl Context<'_> {
    fn in_lexicon(&self, i: usize) -> bool {
        self.lexicon.entries.contains_key(&self.lower[i])
    }

    fn booster_scalar(&self, j: usize, valence: f64) -> f64 {
        let Some(&inc) = self.lexicon.boosters.get(&self.lower[j]) else {
            return 0.0;
        };
        let sign = signum_or_zero(valence);
        let mut scalar = inc * sign;
        if is_upper(&self.words[j]) && self.cap_differential {
            scalar += CAPS_INCREMENT * sign;
        }
        scalar
    }

    fn negation(&self, mut valence: f64, dist: usize, i: usize) -> f64 {
        let w = |k: usize| self.lower[i - k].as_str();
        let so_or_this = |s: &str| s == "so" || s == "this";
        match dist {
            1 => {
                if self.lexicon.is_negator(w(1)) {
                    valence *= NEGATION_SCALAR;
                }
            }
            2 => {
                if w(2) == "never" && so_or_this(w(1)) {
                    valence *= 1.25;
                } else if w(2) == "without" && w(1) == "doubt" {
                } else if self.lexicon.is_negator(w(2)) {
                    valence *= NEGATION_SCALAR;
                }
            }
            _ => {
                if (w(3) == "never" && so_or_this(w(2))) || so_or_this(w(1)) {
                    valence *= 1.25;
                } else if w(3) == "without" && (w(2) == "doubt" || w(1) == "doubt") {
                } else if self.lexicon.is_negator(w(3)) {
                    valence *= NEGATION_SCALAR;
                }
            }
        }
        valence
    }

    fn valence_at(&self, i: usize) -> f64 {
        let lower = &self.lower;
        let Some(&base) = self.lexicon.entries.get(&lower[i]) else {
            return 0.0;
        };
        let mut valence = base;
        let n = self.words.len();

        // "no" directly before another lexicon word acts as a negator only.
        if lower[i] == "no" && i + 1 < n && self.in_lexicon(i + 1) {
            valence = 0.0;
        }
        if (i > 0 && lower[i - 1] == "no")
            || (i > 1 && lower[i - 2] == "no")
            || (i > 2 && lower[i - 3] == "no" && matches!(lower[i - 1].as_str(), "or" | "nor"))
        {
            valence = base * NEGATION_SCALAR;
        }

        if is_upper(&self.words[i]) && self.cap_differential {
            valence += CAPS_INCREMENT * signum_or_zero(valence);
        }

        for dist in 1..=3 {
            if i >= dist && !self.in_lexicon(i - dist) {
                let mut s = self.booster_scalar(i - dist, valence);
                if dist == 2 {
                    s *= 0.95;
                } else if dist == 3 {
                    s *= 0.9;
                }
                valence += s;
                valence = self.negation(valence, dist, i);
            }
        }

        // "least X" negates unless it reads "at least" / "very least".
        if i > 1 && !self.in_lexicon(i - 1) && lower[i - 1] == "least" {
            if lower[i - 2] != "at" && lower[i - 2] != "very" {
                valence *= NEGATION_SCALAR;
            }
        } else if i > 0 && !self.in_lexicon(i - 1) && lower[i - 1] == "least" {
            valence *= NEGATION_SCALAR;
        }
        valence
    }
}

/// Per-token valences after rule adjustments; modifier words score 0.
pub fn token_valences(tokens: &Tokens, lexicon: &Lexicon) -> Vec<f64> {
    let words = &tokens.tokens;
    let upper = words.iter().filter(|w| is_upper(w)).count();
    let ctx = Context {
        lexicon,
        words,
        lower: words.iter().map(|w| w.to_lowercase()).collect(),
        cap_differential: upper > 0 && upper < words.len(),
    };
    (0..words.len())
        .map(|i| {
            if lexicon.boosters.contains_key(&ctx.lower[i]) {
                0.0
            } else {
                ctx.valence_at(i)
            }
        })
        .collect()
}

/// Raw (pre-normalization) valence sum including punctuation emphasis.
pub fn raw_sum(text: &str, lexicon: &Lexicon) -> f64 {
    let tokens = tokenize(text);
    let sum: f64 = token_valences(&tokens, lexicon).iter().sum();
    sum + punctuation_emphasis(&tokens) * signum_or_zero(sum)
}

pub fn score(text: &str, lexicon: &Lexicon) -> Result<SentimentScore, SentimentError> {
    if lexicon.is_empty() {
        return Err(SentimentError::EmptyLexicon);
    }
    let tokens = tokenize(text);
    let valences = token_valences(&tokens, lexicon);
    if valences.is_empty() {
        return Ok(SentimentScore {
            compound: 0.0,
            pos: 0.0,
            neu: 1.0,
            neg: 0.0,
        });
    }

    let sum: f64 = valences.iter().sum();
    let emphasis = punctuation_emphasis(&tokens);
    let compound = normalize(sum + emphasis * signum_or_zero(sum));

    // Each non-neutral word is counted with an extra 1 so it weighs at least
    // as much as a neutral word.
    let mut pos_sum = 0.0;
    let mut neg_sum = 0.0;
    let mut neu_count = 0.0;
    for &v in &valences {
        if v > 0.0 {
            pos_sum += v + 1.0;
        } else if v < 0.0 {
            neg_sum += v - 1.0;
        } else {
            neu_count += 1.0;
        }
    }
    if pos_sum > neg_sum.abs() {
        pos_sum += emphasis;
    } else if pos_sum < neg_sum.abs() {
        neg_sum -= emphasis;
    }
    let total = pos_sum + neg_sum.abs() + neu_count;
    Ok(SentimentScore {
        compound,
        pos: pos_sum / total,
        neu: neu_count / total,
        neg: neg_sum.abs() / total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex() -> Lexicon {
        Lexicon::bundled()
    }

    #[test]
    fn tokenize_strips_emphasis() {
        let t = tokenize("GOOD stock!!");
        assert_eq!(t.tokens, vec!["GOOD", "stock"]);
        assert_eq!(t.exclamations, 2);
        assert_eq!(tokenize(""), Tokens::default());
        assert_eq!(tokenize(":-) rally").tokens, vec![":-)", "rally"]);
    }

    #[test]
    fn empty_text_is_neutral() {
        let s = score("", &lex()).unwrap();
        assert_eq!(s.compound, 0.0);
        assert_eq!(s.neu, 1.0);
    }

    #[test]
    fn empty_lexicon_rejected() {
        let empty = Lexicon::with_entries(HashMap::new());
        assert_eq!(score("good", &empty), Err(SentimentError::EmptyLexicon));
    }

    #[test]
    fn normalize_formula() {
        for x in [-7.5f64, -1.0, 0.0, 0.3, 2.0, 40.0] {
            let expected = x / (x * x + 15.0).sqrt();
            assert_eq!(normalize(x), expected);
        }
        assert!(normalize(1e6) > 0.999_999);
    }

    #[test]
    fn negation_flips_sign() {
        let l = lex();
        let good = l.valence("good").unwrap();
        let expected = normalize(good * NEGATION_SCALAR);
        assert!((score("not good", &l).unwrap().compound - expected).abs() < 1e-12);
    }

    #[test]
    fn caps_emphasis_only_when_mixed_case() {
        let l = lex();
        let good = l.valence("good").unwrap();
        assert!((raw_sum("GOOD stock", &l) - (good + CAPS_INCREMENT)).abs() < 1e-12);
        assert!((raw_sum("GOOD STOCK", &l) - good).abs() < 1e-12);
    }

    #[test]
    fn exclamations_capped() {
        let l = lex();
        let good = l.valence("good").unwrap();
        let r = raw_sum("good!!!!!!", &l);
        assert!((r - (good + 4.0 * EXCLAMATION_INCREMENT)).abs() < 1e-12);
    }

    #[test]
    fn booster_distance_scaling() {
        let l = lex();
        let good = l.valence("good").unwrap();
        assert!((raw_sum("very good", &l) - (good + BOOST_INCREMENT)).abs() < 1e-12);
        assert!((raw_sum("very stock good", &l) - (good + 0.95 * BOOST_INCREMENT)).abs() < 1e-12);
        assert!(
            (raw_sum("very big stock good", &l) - (good + 0.9 * BOOST_INCREMENT)).abs() < 1e-12
        );
    }

    #[test]
    fn proportions_sum_to_one() {
        let l = lex();
        for text in ["", "good", "bad day", "not bad at all!!", "the stock ??"] {
            let s = score(text, &l).unwrap();
            assert!((s.pos + s.neu + s.neg - 1.0).abs() < 1e-6, "{text}");
        }
    }

    #[test]
    fn malformed_lexicon_lines() {
        assert!(matches!(
            Lexicon::parse("good\n"),
            Err(SentimentError::MalformedLexicon { line: 1, .. })
        ));
        assert!(matches!(
            Lexicon::parse("ok\t1\nbad word\t-1\n"),
            Err(SentimentError::MalformedLexicon { line: 2, .. })
        ));
        let l = Lexicon::parse("# comment\ngood\t1.9\t0.9\t[2, 2]\n").unwrap();
        assert_eq!(l.valence("good"), Some(1.9));
    }

    const WORDS: &[&str] = &[
        "good", "bad", "great", "terrible", "stock", "rally", "crash", "love", "hate", "very",
        "not", "never", "no", "so", "this", "without", "doubt", "GREAT", "BAD", "the", "is",
        "least", "at", "slightly", "win", "loss", ":)", ":(", "!!", "??",
    ];

    fn text_strategy() -> impl Strategy<Value = String> {
        proptest::collection::vec(proptest::sample::select(WORDS), 0..14).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn compound_is_odd_under_lexicon_negation(text in text_strategy()) {
            let l = lex();
            let a = score(&text, &l).unwrap().compound;
            let b = score(&text, &l.negated()).unwrap().compound;
            prop_assert_eq!(a, -b);
        }

        #[test]
        fn compound_bounded_and_zero_iff_raw_zero(text in text_strategy()) {
            let l = lex();
            let raw = raw_sum(&text, &l);
            let c = score(&text, &l).unwrap().compound;
            prop_assert!(c > -1.0 && c < 1.0);
            prop_assert_eq!(c == 0.0, raw == 0.0);
        }

        // Holds when the appended word is not preceded by a negator or
        // dampener and does not change the all-caps status of the text.
        #[test]
        fn appending_positive_word_never_decreases(
            words in proptest::collection::vec(
                proptest::sample::select(&["good", "bad", "stock", "crash", "rally", "the", "very", "love", "hate", "win"][..]),
                0..12),
            extra in proptest::sample::select(&["good", "great", "love", "win", "happy"][..]),
        ) {
            let l = lex();
            let text = words.join(" ");
            let longer = format!("{text} {extra}");
            prop_assert!(raw_sum(&longer, &l) >= raw_sum(&text, &l));
            prop_assert!(score(&longer, &l).unwrap().compound >= score(&text, &l).unwrap().compound);
        }

        #[test]
        fn deterministic_across_rebuilds(text in text_strategy()) {
            let a = score(&text, &lex()).unwrap();
            let b = score(&text, &Lexicon::parse(BUNDLED_LEXICON).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
