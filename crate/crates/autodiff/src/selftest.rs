//! Finite-difference self-test over every differentiable op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradcheck::{grad_check, GradCheck};
use crate::graph::{Graph, Var};
use crate::param::ParamStore;
use crate::tensor::Tensor;

/// Result of checking one op at one random point.
#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub point: usize,
    pub check: GradCheck,
}

type Builder = fn(&mut Graph<f64>, &[Var]) -> Result<Var>;

struct Case {
    name: &'static str,
    params: &'static [&'static [usize]],
    out: &'static [usize],
    build: Builder,
}

const CASES: &[Case] = &[
    Case {
        name: "matmul",
        params: &[&[3, 4], &[4, 2]],
        out: &[3, 2],
        build: |g, p| g.matmul(p[0], p[1]),
    },
    Case {
        name: "add",
        params: &[&[2, 3], &[2, 3]],
        out: &[2, 3],
        build: |g, p| g.add(p[0], p[1]),
    },
    Case {
        name: "sub",
        params: &[&[2, 3], &[2, 3]],
        out: &[2, 3],
        build: |g, p| g.sub(p[0], p[1]),
    },
    Case {
        name: "mul",
        params: &[&[2, 3], &[2, 3]],
        out: &[2, 3],
        build: |g, p| g.mul(p[0], p[1]),
    },
    Case {
        name: "add_bias",
        params: &[&[3, 4], &[4]],
        out: &[3, 4],
        build: |g, p| g.add_bias(p[0], p[1]),
    },
    Case {
        name: "scale",
        params: &[&[5]],
        out: &[5],
        build: |g, p| g.scale(p[0], -1.7),
    },
    Case {
        name: "concat",
        params: &[&[2, 2, 3], &[2, 1, 3]],
        out: &[2, 3, 3],
        build: |g, p| g.concat(&[p[0], p[1]], 1),
    },
    Case {
        name: "slice",
        params: &[&[2, 5, 2]],
        out: &[2, 3, 2],
        build: |g, p| g.slice(p[0], 1, 1, 3),
    },
    Case {
        name: "reshape",
        params: &[&[2, 6]],
        out: &[3, 4],
        build: |g, p| g.reshape(p[0], &[3, 4]),
    },
    Case {
        name: "sum",
        params: &[&[2, 3]],
        out: &[],
        build: |g, p| {
            let sq = g.mul(p[0], p[0])?;
            g.sum(sq)
        },
    },
    Case {
        name: "mean",
        params: &[&[2, 3]],
        out: &[],
        build: |g, p| {
            let sq = g.mul(p[0], p[0])?;
            g.mean(sq)
        },
    },
    Case {
        name: "relu",
        params: &[&[4, 3]],
        out: &[4, 3],
        build: |g, p| g.relu(p[0]),
    },
    Case {
        name: "sigmoid",
        params: &[&[4, 3]],
        out: &[4, 3],
        build: |g, p| g.sigmoid(p[0]),
    },
    Case {
        name: "tanh",
        params: &[&[4, 3]],
        out: &[4, 3],
        build: |g, p| g.tanh(p[0]),
    },
    Case {
        name: "layer_norm",
        params: &[&[3, 5], &[5], &[5]],
        out: &[3, 5],
        build: |g, p| g.layer_norm(p[0], p[1], p[2]),
    },
    Case {
        name: "dropout",
        params: &[&[4, 6]],
        out: &[4, 6],
        build: |g, p| g.dropout(p[0], 0.3),
    },
    Case {
        name: "causal_conv1d",
        params: &[&[2, 3, 9], &[4, 3, 3], &[4]],
        out: &[2, 4, 9],
        build: |g, p| g.causal_conv1d(p[0], p[1], p[2], 2),
    },
    Case {
        name: "upsample_linear",
        params: &[&[2, 4]],
        out: &[2, 11],
        build: |g, p| g.upsample_linear(p[0], 11),
    },
    Case {
        name: "max_pool1d",
        params: &[&[2, 3, 8]],
        out: &[2, 3, 2],
        build: |g, p| g.max_pool1d(p[0], 4),
    },
    Case {
        name: "mse",
        params: &[&[3, 4], &[3, 4]],
        out: &[],
        build: |g, p| g.mse(p[0], p[1]),
    },
    Case {
        name: "dense",
        params: &[&[3, 4], &[4, 5], &[5]],
        out: &[3, 5],
        build: |g, p| g.linear(p[0], p[1], p[2]),
    },
    Case {
        name: "lstm_cell",
        params: &[&[2, 3], &[2, 2], &[2, 2], &[3, 8], &[2, 8], &[8]],
        out: &[2, 4],
        build: lstm_cell,
    },
    Case {
        name: "tcn_block",
        params: &[&[2, 3, 9], &[4, 3, 3], &[4], &[4, 4, 3], &[4], &[4, 3, 1], &[4]],
        out: &[2, 4, 9],
        build: tcn_block,
    },
    Case {
        name: "residual_mlp",
        params: &[&[3, 4], &[4, 6], &[6], &[6, 5], &[5], &[4, 5], &[5], &[5], &[5]],
        out: &[3, 5],
        build: residual_mlp,
    },
];

/// One LSTM step from (x, h, c); outputs `[h', c']` side by side.
fn lstm_cell(g: &mut Graph<f64>, p: &[Var]) -> Result<Var> {
    let proj = g.linear(p[0], p[3], p[5])?;
    let rec = g.matmul(p[1], p[4])?;
    let z = g.add(proj, rec)?;
    let gate = |g: &mut Graph<f64>, k: usize| g.slice(z, 1, 2 * k, 2);
    let (zi, zf, zg, zo) = (gate(g, 0)?, gate(g, 1)?, gate(g, 2)?, gate(g, 3)?);
    let i = g.sigmoid(zi)?;
    let f = g.sigmoid(zf)?;
    let cand = g.tanh(zg)?;
    let o = g.sigmoid(zo)?;
    let keep = g.mul(f, p[2])?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let ct = g.tanh(c)?;
    let h = g.mul(o, ct)?;
    g.concat(&[h, c], 1)
}

/// Two dilated causal convolutions with a 1x1 residual projection.
fn tcn_block(g: &mut Graph<f64>, p: &[Var]) -> Result<Var> {
    let a = g.causal_conv1d(p[0], p[1], p[2], 2)?;
    let a = g.relu(a)?;
    let b = g.causal_conv1d(a, p[3], p[4], 2)?;
    let b = g.relu(b)?;
    let r = g.causal_conv1d(p[0], p[5], p[6], 1)?;
    let y = g.add(b, r)?;
    g.relu(y)
}

/// Dense, ReLU, dense, dropout, linear skip, layer norm.
fn residual_mlp(g: &mut Graph<f64>, p: &[Var]) -> Result<Var> {
    let h = g.linear(p[0], p[1], p[2])?;
    let h = g.relu(h)?;
    let y = g.linear(h, p[3], p[4])?;
    let y = g.dropout(y, 0.1)?;
    let s = g.linear(p[0], p[5], p[6])?;
    let z = g.add(y, s)?;
    g.layer_norm(z, p[7], p[8])
}

/// Names of every op covered by [`layer_suite`].
pub fn layer_names() -> Vec<&'static str> {
    CASES.iter().map(|c| c.name).collect()
}

/// Checks every op at `points` random points with central differences of step `eps`.
///
/// The scalar objective is `sum(op_output * R)` for a fixed random `R`, which
/// keeps every output coordinate in play.
pub fn layer_suite(seed: u64, points: usize, eps: f64) -> Result<Vec<LayerCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(CASES.len() * points);
    for case in CASES {
        for point in 0..points {
            let mut store = ParamStore::new();
            for (i, shape) in case.params.iter().enumerate() {
                let n: usize = shape.iter().product();
                let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                store.insert(format!("{}_{i}", case.name), Tensor::new(shape.to_vec(), data)?);
            }
            let n_out: usize = case.out.iter().product();
            let weights: Vec<f64> = (0..n_out).map(|_| rng.random_range(0.5..1.5)).collect();
            let weights = Tensor::new(case.out.to_vec(), weights)?;
            let build = case.build;
            let check = grad_check(&store, eps, |g, p| {
                let y = build(g, p)?;
                let w = g.input(weights.clone())?;
                let prod = g.mul(y, w)?;
                g.sum(prod)
            })?;
            out.push(LayerCheck {
                layer: case.name,
                point,
                check,
            });
        }
    }
    Ok(out)
}
