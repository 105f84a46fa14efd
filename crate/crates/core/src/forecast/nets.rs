//! The four neural architectures as parameter layouts plus a forward pass.

use rand::Rng;
use twinforecast_autodiff::{Graph, ParamId, ParamStore, Real, Result, Tensor, Var};

use super::batch::Batch;
use super::config::{LstmConfig, NhitsConfig, TcnConfig, TideConfig};
use super::ForecastTask;

struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, rng: &mut R, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Dense {
            w: store.insert_uniform(format!("{name}.weight"), &[fan_in, fan_out], fan_in, rng),
            b: store.insert_uniform(format!("{name}.bias"), &[fan_out], fan_in, rng),
        }
    }

    fn apply<T: Real>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Result<Var> {
        g.linear(x, p[self.w.0], p[self.b.0])
    }
}

/// dense, ReLU, dense, dropout, plus a linear skip, then layer norm.
/// Layer norm is skipped for scalar outputs, where it would erase the signal.
struct ResidualUnit {
    hidden: Dense,
    out: Dense,
    skip: Dense,
    norm: Option<(ParamId, ParamId)>,
    dropout: f64,
}

impl ResidualUnit {
    #[allow(clippy::too_many_arguments)]
    fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        dropout: f64,
    ) -> Self {
        let hidden_l = Dense::new(store, rng, &format!("{name}.hidden"), input, hidden);
        let out = Dense::new(store, rng, &format!("{name}.out"), hidden, output);
        let skip = Dense::new(store, rng, &format!("{name}.skip"), input, output);
        let norm = (output > 1).then(|| {
            (
                store.insert_filled(format!("{name}.norm.gamma"), &[output], 1.0),
                store.insert_filled(format!("{name}.norm.beta"), &[output], 0.0),
            )
        });
        ResidualUnit {
            hidden: hidden_l,
            out,
            skip,
            norm,
            dropout,
        }
    }

    fn apply<T: Real>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Result<Var> {
        let h = self.hidden.apply(g, p, x)?;
        let h = g.relu(h)?;
        let y = self.out.apply(g, p, h)?;
        let y = g.dropout(y, self.dropout)?;
        let s = self.skip.apply(g, p, x)?;
        let z = g.add(y, s)?;
        match self.norm {
            Some((gamma, beta)) => g.layer_norm(z, p[gamma.0], p[beta.0]),
            None => Ok(z),
        }
    }
}

fn input<T: Real>(g: &mut Graph<T>, shape: Vec<usize>, data: Vec<T>) -> Result<Var> {
    g.input(Tensor::new(shape, data)?)
}

fn future_flat<T: Real>(g: &mut Graph<T>, b: &Batch<T>) -> Result<Var> {
    input(g, vec![b.size, b.horizon * b.covariates], b.future_covariates.clone())
}

pub(crate) struct Lstm {
    layers: Vec<(ParamId, ParamId, ParamId)>,
    hidden: usize,
    head: Dense,
}

impl Lstm {
    pub fn new<T: Real, R: Rng>(cfg: &LstmConfig, task: &ForecastTask, store: &mut ParamStore<T>, rng: &mut R) -> Self {
        let h = cfg.hidden;
        let mut layers = Vec::new();
        let mut input = 1 + task.covariates;
        for l in 0..cfg.layers {
            layers.push((
                store.insert_uniform(format!("lstm{l}.input_weight"), &[input, 4 * h], h, rng),
                store.insert_uniform(format!("lstm{l}.recurrent_weight"), &[h, 4 * h], h, rng),
                store.insert_uniform(format!("lstm{l}.bias"), &[4 * h], h, rng),
            ));
            input = h;
        }
        let head = Dense::new(store, rng, "head", h + task.horizon * task.covariates, task.horizon);
        Lstm {
            layers,
            hidden: h,
            head,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &[Var], b: &Batch<T>) -> Result<Var> {
        let (n, l, c, h) = (b.size, b.lookback, b.covariates, self.hidden);
        // Time-major rows `t * n + sample` so each step is a contiguous row block.
        let mut x = Vec::with_capacity(l * n * (1 + c));
        for t in 0..l {
            for s in 0..n {
                x.push(b.past_target[s * l + t]);
                x.extend_from_slice(&b.past_covariates[(s * l + t) * c..(s * l + t + 1) * c]);
            }
        }
        let mut seq = input(g, vec![l * n, 1 + c], x)?;
        let mut last = None;
        for (li, &(wi, wh, bias)) in self.layers.iter().enumerate() {
            let proj = g.linear(seq, p[wi.0], p[bias.0])?;
            let mut hs = g.input(Tensor::zeros(&[n, h]))?;
            let mut cs = g.input(Tensor::zeros(&[n, h]))?;
            let mut outputs = Vec::with_capacity(l);
            for t in 0..l {
                let xt = g.slice(proj, 0, t * n, n)?;
                let rec = g.matmul(hs, p[wh.0])?;
                let z = g.add(xt, rec)?;
                let zi = g.slice(z, 1, 0, h)?;
                let zf = g.slice(z, 1, h, h)?;
                let zg = g.slice(z, 1, 2 * h, h)?;
                let zo = g.slice(z, 1, 3 * h, h)?;
                let i = g.sigmoid(zi)?;
                let f = g.sigmoid(zf)?;
                let cand = g.tanh(zg)?;
                let o = g.sigmoid(zo)?;
                let keep = g.mul(f, cs)?;
                let write = g.mul(i, cand)?;
                cs = g.add(keep, write)?;
                let ct = g.tanh(cs)?;
                hs = g.mul(o, ct)?;
                outputs.push(hs);
            }
            if li + 1 < self.layers.len() {
                seq = g.concat(&outputs, 0)?;
            }
            last = Some(hs);
        }
        let fut = future_flat(g, b)?;
        let feats = g.concat(&[last.expect("at least one layer"), fut], 1)?;
        self.head.apply(g, p, feats)
    }
}

struct TcnBlock {
    conv1: (ParamId, ParamId),
    conv2: (ParamId, ParamId),
    residual: Option<(ParamId, ParamId)>,
    dilation: usize,
}

pub(crate) struct Tcn {
    blocks: Vec<TcnBlock>,
    head: Dense,
}

impl Tcn {
    pub fn new<T: Real, R: Rng>(cfg: &TcnConfig, task: &ForecastTask, store: &mut ParamStore<T>, rng: &mut R) -> Self {
        let (ch, k) = (cfg.channels, cfg.kernel_size);
        let mut in_ch = 1 + task.covariates;
        let mut blocks = Vec::new();
        for (i, &d) in cfg.dilations.iter().enumerate() {
            let conv = |store: &mut ParamStore<T>, rng: &mut R, name: &str, cin: usize, kernel: usize| {
                (
                    store.insert_uniform(format!("block{i}.{name}.weight"), &[ch, cin, kernel], cin * kernel, rng),
                    store.insert_uniform(format!("block{i}.{name}.bias"), &[ch], cin * kernel, rng),
                )
            };
            let conv1 = conv(store, rng, "conv1", in_ch, k);
            let conv2 = conv(store, rng, "conv2", ch, k);
            let residual = (in_ch != ch).then(|| conv(store, rng, "residual", in_ch, 1));
            blocks.push(TcnBlock {
                conv1,
                conv2,
                residual,
                dilation: d,
            });
            in_ch = ch;
        }
        let head = Dense::new(store, rng, "head", ch + task.horizon * task.covariates, task.horizon);
        Tcn { blocks, head }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &[Var], b: &Batch<T>) -> Result<Var> {
        let (n, l, c) = (b.size, b.lookback, b.covariates);
        let mut x = vec![T::zero(); n * (1 + c) * l];
        for s in 0..n {
            let base = s * (1 + c) * l;
            for t in 0..l {
                x[base + t] = b.past_target[s * l + t];
                for j in 0..c {
                    x[base + (1 + j) * l + t] = b.past_covariates[(s * l + t) * c + j];
                }
            }
        }
        let mut x = input(g, vec![n, 1 + c, l], x)?;
        for blk in &self.blocks {
            let h = g.causal_conv1d(x, p[blk.conv1.0 .0], p[blk.conv1.1 .0], blk.dilation)?;
            let h = g.relu(h)?;
            let h = g.causal_conv1d(h, p[blk.conv2.0 .0], p[blk.conv2.1 .0], blk.dilation)?;
            let h = g.relu(h)?;
            let res = match blk.residual {
                Some((w, bias)) => g.causal_conv1d(x, p[w.0], p[bias.0], 1)?,
                None => x,
            };
            let sum = g.add(h, res)?;
            x = g.relu(sum)?;
        }
        let ch = g.shape(x)[1];
        let last = g.slice(x, 2, l - 1, 1)?;
        let last = g.reshape(last, &[n, ch])?;
        let fut = future_flat(g, b)?;
        let feats = g.concat(&[last, fut], 1)?;
        self.head.apply(g, p, feats)
    }
}

struct NhitsStack {
    pool: usize,
    mlp: Vec<Dense>,
    /// Absent on the final stack, whose residual is never read.
    backcast: Option<Dense>,
    forecast: Dense,
}

pub(crate) struct Nhits {
    stacks: Vec<NhitsStack>,
}

impl Nhits {
    pub fn new<T: Real, R: Rng>(
        cfg: &NhitsConfig,
        task: &ForecastTask,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Self {
        let fut = task.horizon * task.covariates;
        let last = cfg.pool_kernels.len() - 1;
        let stacks = cfg
            .pool_kernels
            .iter()
            .enumerate()
            .map(|(s, &k)| {
                let mut width = task.lookback / k + fut;
                let mlp = (0..cfg.mlp_layers)
                    .map(|m| {
                        let d = Dense::new(store, rng, &format!("stack{s}.mlp{m}"), width, cfg.hidden);
                        width = cfg.hidden;
                        d
                    })
                    .collect();
                NhitsStack {
                    pool: k,
                    mlp,
                    backcast: (s < last).then(|| {
                        Dense::new(
                            store,
                            rng,
                            &format!("stack{s}.backcast"),
                            width,
                            cfg.backcast_coefficients[s],
                        )
                    }),
                    forecast: Dense::new(
                        store,
                        rng,
                        &format!("stack{s}.forecast"),
                        width,
                        cfg.forecast_coefficients[s],
                    ),
                }
            })
            .collect();
        Nhits { stacks }
    }

    /// Model output and each stack's forecast contribution.
    pub fn forward_parts<T: Real>(&self, g: &mut Graph<T>, p: &[Var], b: &Batch<T>) -> Result<(Var, Vec<Var>)> {
        let (n, l, h) = (b.size, b.lookback, b.horizon);
        let mut residual = input(g, vec![n, l], b.past_target.clone())?;
        let fut = future_flat(g, b)?;
        let mut parts = Vec::with_capacity(self.stacks.len());
        let mut total: Option<Var> = None;
        for st in &self.stacks {
            let pooled = if st.pool > 1 {
                g.max_pool1d(residual, st.pool)?
            } else {
                residual
            };
            let mut z = g.concat(&[pooled, fut], 1)?;
            for d in &st.mlp {
                let y = d.apply(g, p, z)?;
                z = g.relu(y)?;
            }
            let theta_f = st.forecast.apply(g, p, z)?;
            let fc = g.upsample_linear(theta_f, h)?;
            if let Some(bc) = &st.backcast {
                let theta_b = bc.apply(g, p, z)?;
                let back = g.upsample_linear(theta_b, l)?;
                residual = g.sub(residual, back)?;
            }
            total = Some(match total {
                Some(t) => g.add(t, fc)?,
                None => fc,
            });
            parts.push(fc);
        }
        Ok((total.expect("at least one stack"), parts))
    }
}

pub(crate) struct Tide {
    projection: ResidualUnit,
    encoder: Vec<ResidualUnit>,
    decoder: Vec<ResidualUnit>,
    temporal: ResidualUnit,
    skip: Dense,
    projection_dim: usize,
    decoder_dim: usize,
}

impl Tide {
    pub fn new<T: Real, R: Rng>(cfg: &TideConfig, task: &ForecastTask, store: &mut ParamStore<T>, rng: &mut R) -> Self {
        let (l, h, c) = (task.lookback, task.horizon, task.covariates);
        let p = cfg.projection_dim;
        let projection = ResidualUnit::new(store, rng, "projection", c, cfg.projection_hidden, p, cfg.dropout);
        let mut width = l + (l + h) * p;
        let encoder = (0..cfg.encoder_layers)
            .map(|i| {
                let u = ResidualUnit::new(
                    store,
                    rng,
                    &format!("encoder{i}"),
                    width,
                    cfg.hidden,
                    cfg.hidden,
                    cfg.dropout,
                );
                width = cfg.hidden;
                u
            })
            .collect();
        let decoder = (0..cfg.decoder_layers)
            .map(|i| {
                let out = if i + 1 == cfg.decoder_layers {
                    h * cfg.decoder_dim
                } else {
                    cfg.hidden
                };
                let u = ResidualUnit::new(store, rng, &format!("decoder{i}"), width, cfg.hidden, out, cfg.dropout);
                width = out;
                u
            })
            .collect();
        let temporal = ResidualUnit::new(
            store,
            rng,
            "temporal",
            cfg.decoder_dim + p,
            cfg.temporal_hidden,
            1,
            cfg.dropout,
        );
        let skip = Dense::new(store, rng, "skip", l, h);
        Tide {
            projection,
            encoder,
            decoder,
            temporal,
            skip,
            projection_dim: p,
            decoder_dim: cfg.decoder_dim,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &[Var], b: &Batch<T>) -> Result<Var> {
        let (n, l, h, c) = (b.size, b.lookback, b.horizon, b.covariates);
        let pd = self.projection_dim;
        let mut cov = Vec::with_capacity(n * (l + h) * c);
        for s in 0..n {
            cov.extend_from_slice(&b.past_covariates[s * l * c..(s + 1) * l * c]);
            cov.extend_from_slice(&b.future_covariates[s * h * c..(s + 1) * h * c]);
        }
        let cov = input(g, vec![n * (l + h), c], cov)?;
        let proj = self.projection.apply(g, p, cov)?;
        let proj_flat = g.reshape(proj, &[n, (l + h) * pd])?;
        let past = input(g, vec![n, l], b.past_target.clone())?;
        let mut z = g.concat(&[past, proj_flat], 1)?;
        for u in self.encoder.iter().chain(&self.decoder) {
            z = u.apply(g, p, z)?;
        }
        let steps = g.reshape(z, &[n * h, self.decoder_dim])?;
        let proj3 = g.reshape(proj, &[n, l + h, pd])?;
        let fut = g.slice(proj3, 1, l, h)?;
        let fut = g.reshape(fut, &[n * h, pd])?;
        let td_in = g.concat(&[steps, fut], 1)?;
        let td = self.temporal.apply(g, p, td_in)?;
        let td = g.reshape(td, &[n, h])?;
        let skip = self.skip.apply(g, p, past)?;
        g.add(td, skip)
    }
}

pub(crate) enum Net {
    Lstm(Lstm),
    Tcn(Tcn),
    Nhits(Nhits),
    Tide(Tide),
}

impl Net {
    /// Scaled forecast `[batch, horizon]`.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &[Var], b: &Batch<T>) -> Result<Var> {
        match self {
            Net::Lstm(m) => m.forward(g, p, b),
            Net::Tcn(m) => m.forward(g, p, b),
            Net::Nhits(m) => m.forward_parts(g, p, b).map(|(out, _)| out),
            Net::Tide(m) => m.forward(g, p, b),
        }
    }
}
