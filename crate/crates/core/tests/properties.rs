mod common;

use std::collections::HashSet;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xlsent::autodiff::Tape;
use xlsent::corpus::{check_tree, parse_corpus};
use xlsent::decoder::{decode_spans, SpanScores};
use xlsent::embed::adversarial_perturbation;
use xlsent::eval::{score, targeted_f1, token_counts, Element, SentenceOpinions};
use xlsent::fixtures::overfit_corpus;
use xlsent::gcn::DependencyGraph;
use xlsent::tensor::Tensor;
use xlsent::{Corpus, Model, ModelConfig, Opinion, Polarity, Sentence, SentencePrediction, Span};

fn model(dims: &[usize], seed: u64) -> Model {
    Model::new(
        ModelConfig {
            model_dims: dims.to_vec(),
            fused_dim: 4,
            attn_dim: 3,
            gcn_layers: 2,
            gcn_bias: true,
        },
        seed,
    )
    .unwrap()
}

fn span_in(n: usize) -> impl Strategy<Value = Span> {
    (0..n)
        .prop_flat_map(move |s| (Just(s), s..n))
        .prop_map(|(s, e)| Span::new(s, e))
}

fn opinion_in(n: usize) -> impl Strategy<Value = Opinion> {
    (
        proptest::option::of(span_in(n)),
        proptest::option::of(span_in(n)),
        span_in(n),
        any::<bool>(),
    )
        .prop_map(|(holder, target, expression, pos)| Opinion {
            holder,
            target,
            expression,
            polarity: if pos {
                Polarity::Positive
            } else {
                Polarity::Negative
            },
        })
}

fn sentence(id: usize) -> impl Strategy<Value = Sentence> {
    (1usize..8, any::<u64>()).prop_flat_map(move |(n, seed)| {
        let heads = random_tree(&mut ChaCha8Rng::seed_from_u64(seed), n);
        (
            proptest::collection::vec("[a-zé,.!]{1,6}", n),
            proptest::collection::vec(opinion_in(n), 0..4),
        )
            .prop_map(move |(tokens, opinions)| Sentence {
                sent_id: format!("s{id}"),
                tokens,
                heads: heads.clone(),
                opinions,
            })
    })
}

fn corpus() -> impl Strategy<Value = Corpus> {
    (1usize..5)
        .prop_flat_map(|n| (0..n).map(sentence).collect::<Vec<_>>())
        .prop_map(|sentences| Corpus {
            name: "p".into(),
            language: "xx".into(),
            sentences,
        })
}

/// Opinion sets for the same ids as `gold`, drawn independently.
fn aligned_pair() -> impl Strategy<Value = (Vec<SentenceOpinions>, Vec<SentenceOpinions>)> {
    corpus()
        .prop_flat_map(|c| {
            let gold = SentenceOpinions::gold(&c);
            let preds: Vec<_> = c
                .sentences
                .iter()
                .map(|s| proptest::collection::vec(opinion_in(s.len()), 0..4))
                .collect();
            (Just(gold), preds)
        })
        .prop_map(|(gold, preds)| {
            let pred = gold
                .iter()
                .zip(preds)
                .map(|(g, opinions)| SentenceOpinions {
                    sent_id: g.sent_id.clone(),
                    opinions,
                })
                .collect();
            (gold, pred)
        })
}

/// Independent reachability check: every token reaches the single root
/// without revisiting a node.
fn is_single_rooted_tree(heads: &[i64]) -> bool {
    let n = heads.len();
    if heads.iter().filter(|&&h| h == -1).count() != 1 {
        return false;
    }
    (0..n).all(|start| {
        let mut seen = vec![false; n];
        let mut i = start;
        loop {
            if seen[i] {
                return false;
            }
            seen[i] = true;
            match heads[i] {
                -1 => return true,
                h if h >= 0 && (h as usize) < n => i = h as usize,
                _ => return false,
            }
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn softmax_is_a_distribution_and_shift_invariant(
        rows in 1usize..4,
        cols in 1usize..6,
        seed in any::<u64>(),
        shift in -50.0f64..50.0,
        axis in 0usize..2,
    ) {
        let x = random_tensor(&mut ChaCha8Rng::seed_from_u64(seed), &[rows, cols], -10.0, 10.0);
        let shifted = Tensor::new(x.shape().to_vec(), x.values().iter().map(|v| v + shift).collect()).unwrap();
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(&x);
        let b = tape.constant(&shifted);
        let pa = tape.softmax(a, axis).unwrap();
        let pb = tape.softmax(b, axis).unwrap();
        let (pa, pb) = (tape.tensor(pa), tape.tensor(pb));
        for (u, v) in pa.values().iter().zip(pb.values()) {
            prop_assert!(*u >= 0.0);
            prop_assert!((u - v).abs() < 1e-9);
        }
        let lines = if axis == 1 { rows } else { cols };
        for l in 0..lines {
            let total: f64 = if axis == 1 {
                (0..cols).map(|j| pa.at(l, j)).sum()
            } else {
                (0..rows).map(|i| pa.at(i, l)).sum()
            };
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn clamped_losses_are_finite(p in 0.0f64..=1.0, edge in 0usize..3, label in 0usize..2) {
        let p = [p, 0.0, 1.0][edge];
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(&Tensor::vector(vec![p, 1.0 - p]).with_grad());
        let bce = tape.binary_cross_entropy(x, &[label as f64, 1.0]).unwrap();
        let ce = tape.cross_entropy(x, label).unwrap();
        let total = tape.add(bce, ce).unwrap();
        prop_assert!(tape.scalar_value(total).is_finite());
        tape.backward(total).unwrap();
        prop_assert!(tape.grad(x).unwrap().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn perturbation_has_norm_epsilon_and_ignores_scale(
        seed in any::<u64>(),
        n in 1usize..20,
        eps in 1e-3f64..10.0,
        scale in 1e-3f64..1e3,
    ) {
        let g = random_tensor(&mut ChaCha8Rng::seed_from_u64(seed), &[n], -1.0, 1.0);
        prop_assume!(g.l2_norm() >= 1e-12);
        let r = adversarial_perturbation(&g, eps);
        prop_assert!((r.l2_norm() - eps).abs() < 1e-9);
        let scaled = Tensor::vector(g.values().iter().map(|v| v * scale).collect());
        let rs = adversarial_perturbation(&scaled, eps);
        for (a, b) in r.values().iter().zip(rs.values()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        // First-order worst case over the ball.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let best = g.dot(&r);
        for _ in 0..20 {
            let mut v = random_tensor(&mut rng, &[n], -1.0, 1.0);
            let norm = v.l2_norm();
            v.values_mut().iter_mut().for_each(|x| *x *= eps / norm.max(1e-300));
            prop_assert!(best >= g.dot(&v) - 1e-12);
        }
    }

    #[test]
    fn attention_weights_mix_aligned_embeddings_convexly(
        seed in any::<u64>(),
        n in 1usize..6,
        d1 in 1usize..5,
        d2 in 1usize..5,
    ) {
        let dims = [d1, d2];
        let m = model(&dims, seed);
        let entry = random_embeddings(&mut ChaCha8Rng::seed_from_u64(seed), n, &dims);
        let mut tape = Tape::<f64>::new();
        let bound = m.bind(&mut tape, false);
        let fusion = m.attention().fuse(&mut tape, &bound, &entry).unwrap();
        let weights = tape.tensor(fusion.weights);
        let fused = tape.tensor(fusion.fused);
        let aligned: Vec<Tensor<f64>> = (0..2)
            .map(|k| {
                let mut t = Tape::<f64>::new();
                let e = t.constant(&entry.models[k]);
                let a = t.constant(m.params().get(m.attention().align[k]));
                let out = t.matmul(e, a).unwrap();
                t.tensor(out)
            })
            .collect();
        for i in 0..n {
            let w: Vec<f64> = (0..2).map(|k| weights.at(i, k)).collect();
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for j in 0..4 {
                let (a, b) = (aligned[0].at(i, j), aligned[1].at(i, j));
                let v = fused.at(i, j);
                prop_assert!(v >= a.min(b) - 1e-12 && v <= a.max(b) + 1e-12);
            }
        }
    }

    #[test]
    fn normalized_adjacency_is_symmetric(seed in any::<u64>(), n in 1usize..12) {
        let heads = random_tree(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let g = DependencyGraph::<f64>::from_heads(&heads).unwrap();
        let a = g.normalized();
        for i in 0..n {
            prop_assert!((a.at(i, i) - 1.0 / g.degree(i) as f64).abs() < 1e-12);
            for j in 0..n {
                prop_assert!((0.0..=1.0).contains(&a.at(i, j)));
                prop_assert_eq!(a.at(i, j), a.at(j, i));
            }
        }
    }

    #[test]
    fn uniform_rows_on_a_complete_graph_stay_uniform(seed in any::<u64>(), d in 1usize..5) {
        // Only one- and two-token trees are complete graphs.
        let m = model(&[d], seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let row = random_tensor(&mut rng, &[1, 4], -1.0, 1.0);
        let h0 = Tensor::from_rows(&[row.values(), row.values()]).unwrap();
        let g = DependencyGraph::<f64>::from_heads(&[-1, 0]).unwrap();
        let mut tape = Tape::<f64>::new();
        let bound = m.bind(&mut tape, false);
        let x = tape.constant(&h0);
        let h = m.gcn().forward(&mut tape, &bound, x, &g).unwrap();
        let h = tape.tensor(h);
        prop_assert_eq!(h.row(0), h.row(1));
        prop_assert!(h.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn decoded_spans_are_disjoint_and_above_threshold(
        probs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..15),
        tau in 0.05f64..0.95,
        raise in 0.0f64..0.5,
    ) {
        let scores = SpanScores {
            start_probs: probs.iter().map(|p| p.0).collect(),
            end_probs: probs.iter().map(|p| p.1).collect(),
        };
        let spans = decode_spans(&scores, tau);
        for s in &spans {
            prop_assert!(s.start <= s.end && s.end < probs.len());
            prop_assert!(scores.start_probs[s.start] >= tau && scores.end_probs[s.end] >= tau);
        }
        for w in spans.windows(2) {
            prop_assert!(w[0].end < w[1].start);
        }
        // Raising the threshold only emits starts that were already candidates.
        let higher = tau + raise;
        for s in decode_spans(&scores, higher) {
            prop_assert!(scores.start_probs[s.start] >= tau);
            let was_emitted = spans.iter().any(|t| t.start == s.start);
            let was_nested = spans.iter().any(|t| t.contains(s.start));
            let had_end = scores.end_probs[s.start..].iter().any(|&p| p >= tau);
            prop_assert!(was_emitted || was_nested || !had_end);
        }
    }

    #[test]
    fn task_losses_are_non_negative(seed in any::<u64>(), idx in 0usize..8) {
        let corpus = overfit_corpus();
        let s = &corpus.sentences[idx];
        let m = model(&[3, 2], seed);
        let entry = random_embeddings(&mut ChaCha8Rng::seed_from_u64(seed), s.len(), &[3, 2]);
        let g = DependencyGraph::from_heads(&s.heads).unwrap();
        let mut tape = Tape::<f64>::new();
        let bound = m.bind(&mut tape, false);
        let enc = m.encode(&mut tape, &bound, &entry, &g).unwrap();
        let losses = m.task_losses(&mut tape, &bound, enc.hidden, s).unwrap();
        prop_assert!(losses.values(&tape).iter().all(|&l| l >= 0.0 && l.is_finite()));
        let a = m.predict_sentence(s, &entry, 0.5).unwrap();
        prop_assert_eq!(a, m.predict_sentence(s, &entry, 0.5).unwrap());
    }

    #[test]
    fn corpus_round_trips_through_json(c in corpus()) {
        let c = Corpus {
            sentences: c.sentences.into_iter().map(|mut s| {
                s.opinions.dedup();
                s
            }).collect(),
            ..c
        };
        let (back, report) = parse_corpus(&c.to_json().unwrap(), 128).unwrap();
        prop_assert_eq!(report.truncated_sentences, 0);
        prop_assert_eq!(back, c);
    }

    #[test]
    fn loaded_corpora_hold_valid_spans_and_trees(
        heads in proptest::collection::vec(-2i64..6, 1..6),
        spans in proptest::collection::vec((-1i64..7, -1i64..7), 1..4),
    ) {
        let n = heads.len();
        let opinions: Vec<String> = spans
            .iter()
            .map(|(s, e)| format!(r#"{{"holder":null,"target":[{s},{e}],"expression":[0,0],"polarity":"P"}}"#))
            .collect();
        let tokens: Vec<String> = (0..n).map(|i| format!("\"t{i}\"")).collect();
        let json = format!(
            r#"{{"name":"r","language":"xx","sentences":[{{"sent_id":"a","tokens":[{}],"heads":{:?},"opinions":[{}]}}]}}"#,
            tokens.join(","),
            heads,
            opinions.join(",")
        );
        match parse_corpus(&json, 128) {
            Ok((c, _)) => {
                let s = &c.sentences[0];
                prop_assert!(is_single_rooted_tree(&s.heads));
                prop_assert!(check_tree(&s.heads).is_ok());
                for o in &s.opinions {
                    for span in [o.holder, o.target, Some(o.expression)].into_iter().flatten() {
                        prop_assert!(span.start <= span.end && span.end < s.len());
                    }
                }
            }
            Err(_) => {
                let spans_ok = spans.iter().all(|&(s, e)| 0 <= s && s <= e && (e as usize) < n);
                prop_assert!(!(is_single_rooted_tree(&heads) && spans_ok));
            }
        }
    }

    #[test]
    fn metric_laws((gold, pred) in aligned_pair()) {
        for element in [Element::Holder, Element::Target, Element::Expression] {
            let gp = token_counts(&gold, &pred, element).unwrap();
            let pg = token_counts(&pred, &gold, element).unwrap();
            prop_assert_eq!(gp.precision(), pg.recall());
            prop_assert_eq!(gp.recall(), pg.precision());
            let f = gp.f1();
            prop_assert!((0.0..=1.0).contains(&f));
            if (gp.gold == 0) != (gp.predicted == 0) {
                prop_assert_eq!(f, 0.0);
            }
        }
        let f = targeted_f1(&gold, &pred).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        let units = |o: &[SentenceOpinions]| -> HashSet<(String, Span, Polarity)> {
            o.iter()
                .flat_map(|s| s.opinions.iter().filter_map(|x| x.target.map(|t| (s.sent_id.clone(), t, x.polarity))))
                .collect()
        };
        let (gu, pu) = (units(&gold), units(&pred));
        prop_assert_eq!(f == 1.0, !gu.is_empty() && gu == pu);
        let doubled: Vec<SentenceOpinions> = pred
            .iter()
            .map(|s| SentenceOpinions {
                sent_id: s.sent_id.clone(),
                opinions: s.opinions.iter().chain(&s.opinions).cloned().collect(),
            })
            .collect();
        prop_assert_eq!(targeted_f1(&gold, &doubled).unwrap(), f);
        prop_assert_eq!(targeted_f1(&gold, &gold).unwrap() == 1.0, !gu.is_empty());
    }
}

#[test]
fn prediction_file_scores_match_in_memory() {
    let corpus = overfit_corpus();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let preds: Vec<SentencePrediction> = corpus
        .sentences
        .iter()
        .map(|s| {
            let entry = random_embeddings(&mut rng, s.len(), &[3]);
            SentencePrediction {
                sent_id: s.sent_id.clone(),
                opinions: model(&[3], 1).predict_sentence(s, &entry, 0.45).unwrap(),
            }
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.jsonl");
    xlsent::eval::write_predictions(&path, &preds).unwrap();
    let read = xlsent::eval::read_predictions(&path).unwrap();
    assert_eq!(
        score(&corpus, &read).unwrap(),
        score(&corpus, &preds).unwrap()
    );
}
