#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlsent::autodiff::Tape;
use xlsent::corpus::{Opinion, Polarity, Sentence, SentenceEmbeddings, Span};
use xlsent::gcn::DependencyGraph;
use xlsent::tensor::Tensor;
use xlsent::{Model, Var};

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared on an absolute scale.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(lo..hi)).collect(),
    )
    .unwrap()
}

/// Builds a scalar loss from leaf handles.
pub type Build = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Var>;

/// Worst relative error between tape gradients and central differences
/// over every input element.
pub fn fd_check(inputs: &[Tensor<f64>], build: &Build) -> f64 {
    let forward = |xs: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs
            .iter()
            .map(|x| tape.leaf(&x.clone().with_grad()))
            .collect();
        let loss = build(&mut tape, &vars);
        (tape, vars, loss)
    };
    let (mut tape, vars, loss) = forward(inputs);
    tape.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        let analytic = tape
            .grad(vars[i])
            .map(<[f64]>::to_vec)
            .unwrap_or(vec![0.0; x.len()]);
        for (j, &a) in analytic.iter().enumerate() {
            let eval = |delta: f64| {
                let mut xs = inputs.to_vec();
                xs[i].values_mut()[j] += delta;
                let (t, _, l) = forward(&xs);
                t.scalar_value(l)
            };
            let numeric = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(a, numeric));
        }
    }
    worst
}

/// Reduces an output to a scalar with fixed weights so every output
/// component reaches the check.
fn project(tape: &mut Tape<f64>, out: Var) -> Var {
    let n = tape.value(out).len();
    let w: Vec<f64> = (0..n).map(|i| 0.3 + 0.17 * ((i * 7) % 5) as f64).collect();
    let w = tape.constant(&Tensor::new(tape.shape(out).to_vec(), w).unwrap());
    let y = tape.mul(out, w).unwrap();
    tape.sum(y)
}

pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor<f64>>,
    pub build: Build,
}

fn case(
    name: &'static str,
    inputs: Vec<Tensor<f64>>,
    f: impl Fn(&mut Tape<f64>, &[Var]) -> Var + 'static,
) -> OpCase {
    OpCase {
        name,
        inputs,
        build: Box::new(move |t, v| {
            let out = f(t, v);
            project(t, out)
        }),
    }
}

/// One case per differentiable tape operation, with inputs kept away from
/// kinks and clamps.
pub fn op_cases(seed: u64) -> Vec<OpCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let away_from_zero = |rng: &mut ChaCha8Rng, shape: &[usize]| {
        let mut t = random_tensor(rng, shape, 0.1, 1.0);
        t.values_mut().iter_mut().for_each(|v| {
            if rng.gen_bool(0.5) {
                *v = -*v
            }
        });
        t
    };
    let distinct = {
        let mut v: Vec<f64> = (0..12).map(|i| i as f64 * 0.1 - 0.55).collect();
        v.shuffle(r);
        Tensor::new(vec![4, 3], v).unwrap()
    };
    let const_b = random_tensor(r, &[3, 4], -1.0, 1.0);
    let mask = vec![0.0, 1.25, 1.25, 0.0, 1.25, 1.25];
    vec![
        case(
            "matmul",
            vec![
                random_tensor(r, &[2, 3], -1.0, 1.0),
                random_tensor(r, &[3, 4], -1.0, 1.0),
            ],
            |t, v| t.matmul(v[0], v[1]).unwrap(),
        ),
        case(
            "add",
            vec![
                random_tensor(r, &[2, 3], -1.0, 1.0),
                random_tensor(r, &[2, 3], -1.0, 1.0),
            ],
            |t, v| t.add(v[0], v[1]).unwrap(),
        ),
        case(
            "add_row_bias",
            vec![
                random_tensor(r, &[3, 2], -1.0, 1.0),
                random_tensor(r, &[2], -1.0, 1.0),
            ],
            |t, v| t.add_row_bias(v[0], v[1]).unwrap(),
        ),
        case(
            "mul",
            vec![
                random_tensor(r, &[2, 3], -1.0, 1.0),
                random_tensor(r, &[2, 3], -1.0, 1.0),
            ],
            |t, v| t.mul(v[0], v[1]).unwrap(),
        ),
        case("scale", vec![random_tensor(r, &[4], -1.0, 1.0)], |t, v| {
            t.scale(v[0], -1.7)
        }),
        case(
            "add_const",
            vec![random_tensor(r, &[3, 4], -1.0, 1.0)],
            move |t, v| t.add_const(v[0], &const_b).unwrap(),
        ),
        case(
            "mul_const",
            vec![random_tensor(r, &[2, 3], -1.0, 1.0)],
            move |t, v| t.mul_const(v[0], mask.clone()).unwrap(),
        ),
        case(
            "tanh",
            vec![random_tensor(r, &[2, 3], -2.0, 2.0)],
            |t, v| t.tanh(v[0]),
        ),
        case("relu", vec![away_from_zero(r, &[2, 3])], |t, v| {
            t.relu(v[0])
        }),
        case(
            "sigmoid",
            vec![random_tensor(r, &[2, 3], -3.0, 3.0)],
            |t, v| t.sigmoid(v[0]),
        ),
        case(
            "softmax_rows",
            vec![random_tensor(r, &[3, 4], -2.0, 2.0)],
            |t, v| t.softmax(v[0], 1).unwrap(),
        ),
        case(
            "softmax_cols",
            vec![random_tensor(r, &[3, 4], -2.0, 2.0)],
            |t, v| t.softmax(v[0], 0).unwrap(),
        ),
        case("max_pool_rows", vec![distinct], |t, v| {
            t.max_pool_rows(v[0]).unwrap()
        }),
        case("sum", vec![random_tensor(r, &[3, 2], -1.0, 1.0)], |t, v| {
            t.sum(v[0])
        }),
        case(
            "concat_cols",
            vec![
                random_tensor(r, &[2, 1], -1.0, 1.0),
                random_tensor(r, &[2, 3], -1.0, 1.0),
            ],
            |t, v| t.concat_cols(&[v[0], v[1], v[0]]).unwrap(),
        ),
        case(
            "gather_rows",
            vec![random_tensor(r, &[4, 2], -1.0, 1.0)],
            |t, v| t.gather_rows(v[0], &[3, 1, 3]).unwrap(),
        ),
        case(
            "column",
            vec![random_tensor(r, &[3, 4], -1.0, 1.0)],
            |t, v| t.column(v[0], 2).unwrap(),
        ),
        case(
            "mul_column",
            vec![
                random_tensor(r, &[3, 4], -1.0, 1.0),
                random_tensor(r, &[3, 1], -1.0, 1.0),
            ],
            |t, v| t.mul_column(v[0], v[1]).unwrap(),
        ),
        case(
            "reshape",
            vec![random_tensor(r, &[2, 3], -1.0, 1.0)],
            |t, v| t.reshape(v[0], &[3, 2]).unwrap(),
        ),
        case(
            "binary_cross_entropy",
            vec![random_tensor(r, &[5], 0.1, 0.9)],
            |t, v| {
                t.binary_cross_entropy(v[0], &[1.0, 0.0, 0.0, 1.0, 1.0])
                    .unwrap()
            },
        ),
        case(
            "cross_entropy",
            vec![random_tensor(r, &[3], -1.0, 1.0)],
            |t, v| {
                let p = t.softmax(v[0], 0).unwrap();
                t.cross_entropy(p, 1).unwrap()
            },
        ),
    ]
}

/// "Great movie" with a positive opinion on the second token.
pub fn two_token_sentence() -> Sentence {
    Sentence {
        sent_id: "tiny".into(),
        tokens: vec!["Great".into(), "movie".into()],
        heads: vec![1, -1],
        opinions: vec![Opinion {
            holder: None,
            target: Some(Span::single(1)),
            expression: Span::single(0),
            polarity: Polarity::Positive,
        }],
    }
}

pub fn random_embeddings(rng: &mut impl Rng, n: usize, dims: &[usize]) -> SentenceEmbeddings<f64> {
    SentenceEmbeddings {
        models: dims
            .iter()
            .map(|&d| random_tensor(rng, &[n, d], -1.0, 1.0))
            .collect(),
    }
}

/// Random single-rooted tree over `n` nodes.
pub fn random_tree(rng: &mut impl Rng, n: usize) -> Vec<i64> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut heads = vec![-1i64; n];
    for i in 1..n {
        heads[order[i]] = order[rng.gen_range(0..i)] as i64;
    }
    heads
}

fn task_loss(model: &Model, tape: &mut Tape<f64>, sentence: &Sentence, fused: Var) -> Var {
    let bound = model.bind(tape, true);
    let graph = DependencyGraph::from_heads(&sentence.heads).unwrap();
    let hidden = model.encode_from(tape, &bound, fused, &graph).unwrap();
    model
        .task_losses(tape, &bound, hidden, sentence)
        .unwrap()
        .total(tape)
        .unwrap()
}

fn full_loss(model: &Model, sentence: &Sentence, entry: &SentenceEmbeddings<f64>) -> f64 {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let graph = DependencyGraph::from_heads(&sentence.heads).unwrap();
    let enc = model.encode(&mut tape, &bound, entry, &graph).unwrap();
    let loss = model
        .task_losses(&mut tape, &bound, enc.hidden, sentence)
        .unwrap();
    let loss = loss.total(&mut tape).unwrap();
    tape.scalar_value(loss)
}

/// Worst relative finite-difference error of the task loss over every
/// parameter element, and over the fused-embedding matrix as a leaf.
pub fn model_fd_check(
    model: &Model,
    sentence: &Sentence,
    entry: &SentenceEmbeddings<f64>,
) -> (f64, f64) {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let graph = DependencyGraph::from_heads(&sentence.heads).unwrap();
    let enc = model.encode(&mut tape, &bound, entry, &graph).unwrap();
    let loss = model
        .task_losses(&mut tape, &bound, enc.hidden, sentence)
        .unwrap();
    let loss = loss.total(&mut tape).unwrap();
    tape.backward(loss).unwrap();

    let mut worst_param: f64 = 0.0;
    for id in model.params().ids() {
        let analytic = tape.grad(bound.var(id)).unwrap().to_vec();
        for (j, &a) in analytic.iter().enumerate() {
            let eval = |delta: f64| {
                let mut m = model.clone();
                m.params_mut().get_mut(id).values_mut()[j] += delta;
                full_loss(&m, sentence, entry)
            };
            let numeric = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
            worst_param = worst_param.max(rel_err(a, numeric));
        }
    }

    let fused = tape.tensor(enc.fused);
    let sentence = sentence.clone();
    let model = model.clone();
    let build: Build = Box::new(move |t, v| task_loss(&model, t, &sentence, v[0]));
    let worst_fused = fd_check(&[fused], &build);
    (worst_param, worst_fused)
}
