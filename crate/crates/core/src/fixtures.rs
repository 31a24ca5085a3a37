//! Small hand-built corpora for smoke tests, overfitting checks and
//! synthetic transfer experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Opinion, Polarity, Sentence, Span};

fn sentence(id: &str, text: &str, heads: &[i64], opinions: Vec<Opinion>) -> Sentence {
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    assert_eq!(tokens.len(), heads.len(), "fixture {id}");
    Sentence {
        sent_id: id.to_string(),
        tokens,
        heads: heads.to_vec(),
        opinions,
    }
}

fn opinion(
    holder: Option<(usize, usize)>,
    target: Option<(usize, usize)>,
    expression: (usize, usize),
    polarity: Polarity,
) -> Opinion {
    let span = |(a, b): (usize, usize)| Span::new(a, b);
    Opinion {
        holder: holder.map(span),
        target: target.map(span),
        expression: span(expression),
        polarity,
    }
}

/// Id of the observer-team sentence in [`overfit_corpus`].
pub const OBSERVER_SENTENCE: &str = "fx-observer";
/// Id of the sentence with two opinion expressions.
pub const TWO_EXPRESSION_SENTENCE: &str = "fx-phone";

/// Eight English sentences covering multi-token spans, null holders, a null
/// target, both polarities, two expressions in one sentence and a sentence
/// without opinions.
pub fn overfit_corpus() -> Corpus {
    use Polarity::{Negative as N, Positive as P};
    let sentences = vec![
        sentence(
            OBSERVER_SENTENCE,
            "The Sadc ministerial observer team congratulated President Mugabe on his victory .",
            &[4, 4, 4, 4, 5, -1, 7, 5, 10, 10, 5, 5],
            vec![opinion(Some((0, 4)), Some((6, 7)), (5, 5), P)],
        ),
        sentence(
            TWO_EXPRESSION_SENTENCE,
            "Reviewers found the phone cheap but fragile .",
            &[1, -1, 3, 1, 1, 6, 4, 1],
            vec![
                opinion(Some((0, 0)), Some((2, 3)), (4, 4), P),
                opinion(Some((0, 0)), Some((2, 3)), (6, 6), N),
            ],
        ),
        sentence(
            "fx-food",
            "The food was terrible .",
            &[1, 3, 3, -1, 3],
            vec![opinion(None, Some((0, 1)), (3, 3), N)],
        ),
        sentence(
            "fx-meeting",
            "The meeting starts at noon .",
            &[1, 2, -1, 4, 2, 2],
            vec![],
        ),
        sentence(
            "fx-critics",
            "Critics were disappointed .",
            &[2, 2, -1, 2],
            vec![opinion(Some((0, 0)), None, (2, 2), N)],
        ),
        sentence(
            "fx-opposition",
            "The opposition condemned the results .",
            &[1, 2, -1, 4, 2, 2],
            vec![opinion(Some((0, 1)), Some((3, 4)), (2, 2), N)],
        ),
        sentence(
            "fx-voters",
            "Voters praised the constitution .",
            &[1, -1, 3, 1, 1],
            vec![opinion(Some((0, 0)), Some((2, 3)), (1, 1), P)],
        ),
        sentence(
            "fx-staff",
            "The staff were very helpful .",
            &[1, 4, 4, 4, -1, 4],
            vec![opinion(None, Some((0, 1)), (3, 4), P)],
        ),
    ];
    Corpus {
        name: "fixture".into(),
        language: "en".into(),
        sentences,
    }
}

const HOLDERS: [&str; 6] = ["anna", "boris", "chen", "dara", "emil", "fatou"];
const NOUNS: [&str; 8] = [
    "plan", "law", "film", "bridge", "report", "budget", "song", "market",
];
const POSITIVE_VERBS: [&str; 4] = ["praise", "admire", "welcome", "applaud"];
const NEGATIVE_VERBS: [&str; 4] = ["attack", "reject", "mock", "condemn"];
const NEUTRAL_VERBS: [&str; 4] = ["read", "visit", "study", "describe"];
const POSITIVE_ADJ: [&str; 3] = ["superb", "lovely", "brilliant"];
const NEGATIVE_ADJ: [&str; 3] = ["awful", "broken", "dreadful"];
const NEUTRAL_ADJ: [&str; 3] = ["new", "large", "public"];

/// Concept behind a token of a template language: everything after the
/// first `_`, so `ka_plan` and `zu_plan` share the key `plan`.
pub fn concept_key(token: &str) -> String {
    token.split_once('_').map_or(token, |(_, c)| c).to_string()
}

/// Sentences of a synthetic language drawn from a fixed set of templates.
///
/// Every token is `{prefix}_{concept}`, so two prefixes give languages with
/// disjoint vocabularies and aligned concepts. Sentence ids are
/// `{prefix}-{split}-{i}`. Opinion-bearing and neutral
/// sentences share their dependency structure: only the identity of the
/// verb or adjective tells them apart and fixes the polarity.
pub fn template_corpus(prefix: &str, split: &str, n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = |c: &str| format!("{prefix}_{c}");
    let sentences = (0..n)
        .map(|i| {
            let id = format!("{prefix}-{split}-{i}");
            let det = w("the");
            let stop = w("stop");
            let noun = w(NOUNS.choose(&mut rng).unwrap());
            if rng.gen_bool(0.5) {
                // HOLDER VERB the NOUN .
                let holder = w(HOLDERS.choose(&mut rng).unwrap());
                let (verb, polarity) = match rng.gen_range(0..3) {
                    0 => (POSITIVE_VERBS.choose(&mut rng), Some(Polarity::Positive)),
                    1 => (NEGATIVE_VERBS.choose(&mut rng), Some(Polarity::Negative)),
                    _ => (NEUTRAL_VERBS.choose(&mut rng), None),
                };
                let text = format!("{holder} {} {det} {noun} {stop}", w(verb.unwrap()));
                let opinions = polarity
                    .map(|p| opinion(Some((0, 0)), Some((2, 3)), (1, 1), p))
                    .into_iter()
                    .collect();
                sentence(&id, &text, &[1, -1, 3, 1, 1], opinions)
            } else {
                // the NOUN is ADJ .
                let (adj, polarity) = match rng.gen_range(0..3) {
                    0 => (POSITIVE_ADJ.choose(&mut rng), Some(Polarity::Positive)),
                    1 => (NEGATIVE_ADJ.choose(&mut rng), Some(Polarity::Negative)),
                    _ => (NEUTRAL_ADJ.choose(&mut rng), None),
                };
                let text = format!("{det} {noun} {} {} {stop}", w("is"), w(adj.unwrap()));
                let opinions = polarity
                    .map(|p| opinion(None, Some((0, 1)), (3, 3), p))
                    .into_iter()
                    .collect();
                sentence(&id, &text, &[1, 3, 3, -1, 3], opinions)
            }
        })
        .collect();
    Corpus {
        name: prefix.to_string(),
        language: prefix.to_string(),
        sentences,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overfit_corpus_is_valid() {
        let c = overfit_corpus();
        assert_eq!(c.len(), 8);
        c.validate().unwrap();
        assert_eq!(c.get(TWO_EXPRESSION_SENTENCE).unwrap().opinions.len(), 2);
        assert!(c.sentences.iter().any(|s| s.opinions.is_empty()));
    }

    #[test]
    fn template_languages_are_disjoint_and_aligned() {
        let a = template_corpus("ka", "train", 40, 7);
        let b = template_corpus("zu", "train", 40, 7);
        a.validate().unwrap();
        b.validate().unwrap();
        for (x, y) in a.sentences.iter().zip(&b.sentences) {
            assert_eq!(x.heads, y.heads);
            assert_eq!(x.opinions, y.opinions);
            for (s, t) in x.tokens.iter().zip(&y.tokens) {
                assert_ne!(s, t);
                assert_eq!(concept_key(s), concept_key(t));
            }
        }
        assert_eq!(template_corpus("ka", "train", 40, 7), a);
    }
}
