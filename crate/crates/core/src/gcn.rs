//! Graph convolution over undirected dependency trees.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::corpus::check_tree;
use crate::error::{Error, Result};
use crate::params::{uniform, Bound, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Self-looped adjacency of a dependency tree and its symmetric
/// normalization `D^-1/2 (A + I) D^-1/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct DependencyGraph<T> {
    n: usize,
    /// Row-major 0/1 matrix with ones on the diagonal.
    adjacency: Vec<u8>,
    normalized: Tensor<T>,
}

/// Degrees of the self-looped adjacency (row sums of `A + I`).
fn degrees(adjacency: &[u8], n: usize) -> Vec<usize> {
    (0..n)
        .map(|i| {
            adjacency[i * n..(i + 1) * n]
                .iter()
                .map(|&a| a as usize)
                .sum()
        })
        .collect()
}

impl<T: Scalar> DependencyGraph<T> {
    /// Builds the graph from head indices (`-1` marks the root).
    pub fn from_heads(heads: &[i64]) -> Result<Self> {
        check_tree(heads).map_err(|message| Error::Tree {
            sent_id: String::new(),
            message,
        })?;
        let n = heads.len();
        let mut adjacency = vec![0u8; n * n];
        for i in 0..n {
            adjacency[i * n + i] = 1;
            if heads[i] >= 0 {
                let h = heads[i] as usize;
                adjacency[i * n + h] = 1;
                adjacency[h * n + i] = 1;
            }
        }
        let deg = degrees(&adjacency, n);
        let mut normalized = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in 0..n {
                if adjacency[i * n + j] == 1 {
                    normalized.values_mut()[i * n + j] =
                        T::one() / T::lit((deg[i] * deg[j]) as f64).sqrt();
                }
            }
        }
        Ok(DependencyGraph {
            n,
            adjacency,
            normalized,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j] == 1
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.adjacent(i, j)).count()
    }

    pub fn normalized(&self) -> &Tensor<T> {
        &self.normalized
    }
}

/// Shorthand for [`DependencyGraph::from_heads`].
pub fn build_graph<T: Scalar>(heads: &[i64]) -> Result<DependencyGraph<T>> {
    DependencyGraph::from_heads(heads)
}

#[derive(Clone, Debug)]
pub struct GcnLayer {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub input_dim: usize,
    pub output_dim: usize,
}

/// `L` layers of `H ← ReLU(Â H W + b)`.
#[derive(Clone, Debug)]
pub struct GcnStack {
    pub layers: Vec<GcnLayer>,
}

impl GcnStack {
    /// Creates `dims.len() - 1` layers mapping `dims[l]` to `dims[l + 1]`.
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        dims: &[usize],
        bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("a GCN stack needs at least one layer".into()));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let weight =
                    store.insert(format!("gcn.{l}.weight"), uniform(rng, &[w[0], w[1]], w[0]));
                let bias = bias
                    .then(|| store.insert(format!("gcn.{l}.bias"), uniform(rng, &[w[1]], w[0])));
                GcnLayer {
                    weight,
                    bias,
                    input_dim: w[0],
                    output_dim: w[1],
                }
            })
            .collect();
        Ok(GcnStack { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_dim)
    }

    /// Records all layers on `tape` starting from `h0` (`n × d`).
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        h0: Var,
        graph: &DependencyGraph<T>,
    ) -> Result<Var> {
        let shape = tape.shape(h0).to_vec();
        if shape.len() != 2 || shape[0] != graph.len() {
            return Err(Error::Dimension(format!(
                "GCN layer 0: input {shape:?} for a graph of {} nodes",
                graph.len()
            )));
        }
        let adj = tape.constant(graph.normalized());
        let mut h = h0;
        for (l, layer) in self.layers.iter().enumerate() {
            let width = tape.shape(h)[1];
            if width != layer.input_dim {
                return Err(Error::Dimension(format!(
                    "GCN layer {l}: input width {width}, layer expects {}",
                    layer.input_dim
                )));
            }
            let propagated = tape.matmul(adj, h)?;
            let mut z = tape.matmul(propagated, bound.var(layer.weight))?;
            if let Some(b) = layer.bias {
                z = tape.add_row_bias(z, bound.var(b))?;
            }
            h = tape.relu(z);
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_node() {
        let g = build_graph::<f64>(&[-1]).unwrap();
        assert_eq!(g.normalized().values(), &[1.0]);
    }

    #[test]
    fn two_nodes() {
        let g = build_graph::<f64>(&[-1, 0]).unwrap();
        assert_eq!(g.normalized().values(), &[0.5, 0.5, 0.5, 0.5]);
        assert_eq!((g.degree(0), g.degree(1)), (2, 2));
    }

    #[test]
    fn three_chain() {
        let g = build_graph::<f64>(&[-1, 0, 1]).unwrap();
        assert_eq!((g.degree(0), g.degree(1), g.degree(2)), (2, 3, 2));
        assert!((g.normalized().at(0, 1) - 0.408248).abs() < 1e-6);
        assert!((g.normalized().at(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.normalized().at(0, 2), 0.0);
    }

    #[test]
    fn invalid_tree_is_rejected() {
        assert!(matches!(
            build_graph::<f64>(&[1, 0]),
            Err(Error::Tree { .. })
        ));
    }

    fn single_layer(store: &mut ParamStore<f64>, d: usize) -> GcnStack {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        GcnStack::init(store, &[d, d], true, &mut rng).unwrap()
    }

    #[test]
    fn identity_layer_is_relu() {
        let mut store = ParamStore::new();
        let stack = single_layer(&mut store, 2);
        store
            .set_values("gcn.0.weight", vec![1.0, 0.0, 0.0, 1.0])
            .unwrap();
        store.set_values("gcn.0.bias", vec![0.0, 0.0]).unwrap();
        let g = build_graph(&[-1]).unwrap();
        let mut tape = Tape::new();
        let b = store.bind(&mut tape, false);
        let h0 = tape.constant(&Tensor::from_rows(&[[2.0, -3.0]]).unwrap());
        let out = stack.forward(&mut tape, &b, h0, &g).unwrap();
        assert_eq!(tape.value(out), &[2.0, 0.0]);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stack = GcnStack::init(&mut store, &[3, 3, 3], true, &mut rng).unwrap();
        store.iter_mut().for_each(|(_, t)| t.values_mut().fill(0.0));
        let g = build_graph(&[-1, 0, 0]).unwrap();
        let mut tape = Tape::new();
        let b = store.bind(&mut tape, false);
        let h0 = tape.constant(&Tensor::filled(&[3, 3], 0.7));
        let out = stack.forward(&mut tape, &b, h0, &g).unwrap();
        assert!(tape.value(out).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_errors_name_the_layer() {
        let mut store = ParamStore::new();
        let stack = single_layer(&mut store, 2);
        let g = build_graph(&[-1, 0]).unwrap();
        let mut tape = Tape::new();
        let b = store.bind(&mut tape, false);
        let wrong_rows = tape.constant(&Tensor::zeros(&[3, 2]));
        assert!(stack.forward(&mut tape, &b, wrong_rows, &g).is_err());
        let wrong_cols = tape.constant(&Tensor::zeros(&[2, 5]));
        let err = stack.forward(&mut tape, &b, wrong_cols, &g).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
    }
}
