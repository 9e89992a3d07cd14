// SPDX-License-Identifier: MIT OR Apache-2.0

//! Plain-loop reference implementations of every mixer, and mixer-level
//! finite-difference checks.

use mechrecall::model_zoo::mixers::{self, Ctx};
use mechrecall::model_zoo::params::Scope;
use mechrecall::model_zoo::*;
use tensor::gradcheck::{check, GradcheckReport};
use tensor::{Rng, Tensor};

pub type Seq = Vec<Vec<f64>>;

/// Every parameter moved off its initial value, so zero biases and unit
/// gains do not hide mistakes.
pub fn jittered(model: &Model<f64>, seed: u64, std: f64) -> Model<f64> {
    let mut m = model.clone();
    let mut rng = Rng::new(seed, 77);
    for t in m.params.tensors_mut() {
        for x in t.data_mut() {
            *x += std * rng.normal();
        }
    }
    m
}

/// Mixer settings small enough for exhaustive finite differences.
pub fn small_mixer(kind: MixerKind) -> MixerConfig {
    match kind.default_config() {
        MixerConfig::Hyena(c) => MixerConfig::Hyena(HyenaConfig {
            filter_order: 8,
            ..c
        }),
        MixerConfig::H3(c) => MixerConfig::H3(H3Config { d_state: 4, ..c }),
        MixerConfig::Mamba(c) => MixerConfig::Mamba(MambaConfig { d_state: 4, ..c }),
        other => other,
    }
}

pub fn config(
    kind: MixerKind,
    d: usize,
    layers: usize,
    vocab: usize,
    mixer: MixerConfig,
) -> BackboneConfig {
    let mut cfg = BackboneConfig::new(kind, d, layers, vocab);
    cfg.mixer = mixer;
    cfg
}

/// Finite-difference check of one mixer layer w.r.t. its input and all its parameters.
pub fn mixer_gradcheck(kind: MixerKind, layer: usize, case: u64) -> GradcheckReport {
    let (d, t_len) = (4, 5);
    let cfg = config(kind, d, layer + 1, 7, small_mixer(kind));
    let model = jittered(&Model::<f64>::init(&cfg, case).unwrap(), case, 0.3);
    let subset = model.params.subset(&format!("layers.{layer}.mixer"));
    let mut rng = Rng::new(case, 5);
    let mut inputs = vec![Tensor::randn(&[1, t_len, d], 1.0, &mut rng)];
    inputs.extend(subset.tensors().iter().cloned());
    let mixer = cfg.mixer.clone();
    check(&inputs, 1e-5, case, |tape, vars| {
        let pv = subset.bind(vars[1..].to_vec()).map_err(to_tensor_err)?;
        let mut hooks = Hooks::none();
        let mut ctx = Ctx {
            s: Scope::root(tape, &pv),
            hooks: &mut hooks,
            layer,
        };
        mixers::forward(&mixer, &mut ctx, vars[0]).map_err(to_tensor_err)
    })
    .unwrap()
}

/// Finite-difference check of the position-wise MLP.
pub fn mlp_gradcheck(case: u64) -> GradcheckReport {
    let cfg = BackboneConfig::new(MixerKind::Attention, 4, 1, 7);
    let model = jittered(&Model::<f64>::init(&cfg, case).unwrap(), case, 0.3);
    let subset = model.params.subset("layers.0.mlp");
    let mut rng = Rng::new(case, 6);
    let mut inputs = vec![Tensor::randn(&[2, 3, 4], 1.0, &mut rng)];
    inputs.extend(subset.tensors().iter().cloned());
    check(&inputs, 1e-5, case, |tape, vars| {
        let pv = subset.bind(vars[1..].to_vec()).map_err(to_tensor_err)?;
        mixers::mlp::forward(&Scope::root(tape, &pv), vars[0]).map_err(to_tensor_err)
    })
    .unwrap()
}

fn to_tensor_err(e: mechrecall::Error) -> tensor::TensorError {
    match e {
        mechrecall::Error::Tensor(t) => t,
        other => tensor::TensorError::Invalid {
            op: "mixer",
            msg: other.to_string(),
        },
    }
}

/// Largest gap between each mixer's output in the model and its loop reference.
pub fn oracle_gap(kind: MixerKind, seed: u64, t_len: usize) -> f64 {
    let d = 8;
    let cfg = config(kind, d, 2, 11, kind.default_config());
    let model = jittered(&Model::<f64>::init(&cfg, seed).unwrap(), seed, 0.2);
    let mut rng = Rng::new(seed, 9);
    let tokens: Vec<usize> = (0..t_len).map(|_| rng.below(11)).collect();
    let (_, cache) = model.forward(&tokens).unwrap();
    let mut gap: f64 = 0.0;
    for layer in 0..2 {
        let x = rows(&cache[&CapturePoint::new(layer, Site::MixerIn)]);
        let y = rows(&cache[&CapturePoint::new(layer, Site::MixerOut)]);
        let r = reference(&model, layer, &x);
        for (a, b) in y.iter().flatten().zip(r.iter().flatten()) {
            gap = gap.max((a - b).abs());
        }
    }
    gap
}

pub fn rows(t: &Tensor<f64>) -> Seq {
    t.data().chunks(t.last_dim()).map(<[f64]>::to_vec).collect()
}

struct P<'a> {
    model: &'a Model<f64>,
    prefix: String,
}

impl P<'_> {
    fn t(&self, name: &str) -> &Tensor<f64> {
        let full = format!("{}.{name}", self.prefix);
        self.model
            .params
            .get(&full)
            .unwrap_or_else(|| panic!("missing {full}"))
    }

    fn opt(&self, name: &str) -> Option<&Tensor<f64>> {
        self.model.params.get(&format!("{}.{name}", self.prefix))
    }

    fn linear(&self, name: &str, x: &Seq) -> Seq {
        let w = self.t(&format!("{name}.weight"));
        let b = self.opt(&format!("{name}.bias"));
        let (n_in, n_out) = (w.shape()[0], w.shape()[1]);
        x.iter()
            .map(|row| {
                (0..n_out)
                    .map(|o| {
                        let s: f64 = (0..n_in).map(|i| row[i] * w.data()[i * n_out + o]).sum();
                        s + b.map_or(0.0, |b| b.data()[o])
                    })
                    .collect()
            })
            .collect()
    }

    fn conv(&self, name: &str, x: &Seq) -> Seq {
        let w = self.t(&format!("{name}.weight"));
        let b = self.opt(&format!("{name}.bias"));
        let (k, c) = (w.shape()[0], w.shape()[1]);
        (0..x.len())
            .map(|t| {
                (0..c)
                    .map(|ch| {
                        let mut s = b.map_or(0.0, |b| b.data()[ch]);
                        for j in 0..k.min(t + 1) {
                            s += w.data()[(k - 1 - j) * c + ch] * x[t - j][ch];
                        }
                        s
                    })
                    .collect()
            })
            .collect()
    }

    /// Sine-MLP filter over positional features, optionally windowed.
    fn implicit_filter(&self, l_max: usize, t_len: usize, depth: usize, window: bool) -> Seq {
        let feats: Seq = (0..t_len)
            .map(|i| {
                let w = 2.0 * std::f64::consts::PI * i as f64 / l_max as f64;
                vec![
                    i as f64 / (l_max - 1) as f64,
                    (1e-4 * w).cos(),
                    -(1e-4 * w).sin(),
                ]
            })
            .collect();
        let mut h = feats;
        for i in 0..depth {
            h = map(&self.linear(&format!("filter.mlp.{i}"), &h), f64::sin);
        }
        let out = self.t("filter.out.weight");
        let width = out.shape()[1];
        let mut f = matmul(&h, out);
        if window {
            let lo = 0.01f64.ln() / 1.5;
            let hi = 0.01f64.ln() / 0.3;
            for (t, row) in f.iter_mut().enumerate() {
                for (c, v) in row.iter_mut().enumerate() {
                    let delta = lo + (hi - lo) * c as f64 / (width - 1) as f64;
                    let tn = t as f64 / (l_max - 1) as f64;
                    *v *= (-tn * delta.abs()).exp() + 0.05;
                }
            }
        }
        f
    }
}

fn matmul(x: &Seq, w: &Tensor<f64>) -> Seq {
    let n_out = w.shape()[1];
    x.iter()
        .map(|row| {
            (0..n_out)
                .map(|o| {
                    row.iter()
                        .enumerate()
                        .map(|(i, v)| v * w.data()[i * n_out + o])
                        .sum()
                })
                .collect()
        })
        .collect()
}

fn map(x: &Seq, f: impl Fn(f64) -> f64) -> Seq {
    x.iter()
        .map(|r| r.iter().map(|&v| f(v)).collect())
        .collect()
}

fn zip(a: &Seq, b: &Seq, f: impl Fn(f64, f64) -> f64) -> Seq {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(&x, &y)| f(x, y)).collect())
        .collect()
}

fn cols(x: &Seq, start: usize, len: usize) -> Seq {
    x.iter().map(|r| r[start..start + len].to_vec()).collect()
}

fn long_conv(x: &Seq, f: &Seq) -> Seq {
    (0..x.len())
        .map(|t| {
            (0..x[0].len())
                .map(|c| (0..=t).map(|s| f[t - s][c] * x[s][c]).sum())
                .collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

/// Loop reference for the mixer at `layer`, applied to its (post-norm) input.
pub fn reference(model: &Model<f64>, layer: usize, x: &Seq) -> Seq {
    let p = P {
        model,
        prefix: format!("layers.{layer}.mixer"),
    };
    match &model.config.mixer {
        MixerConfig::Attention(_) => attention(&p, x),
        MixerConfig::Mamba(c) => mamba(&p, c, x),
        MixerConfig::Based(c) if layer.is_multiple_of(2) => {
            let mut u = x.clone();
            if c.kernel_size.is_some() {
                u = p.conv("conv", &u);
            }
            if c.implicit_long_conv {
                u = long_conv(&u, &p.implicit_filter(c.l_max, x.len(), 1, false));
            }
            zip(&p.linear("projection", x), &u, |a, b| a * b)
        }
        MixerConfig::Based(c) => taylor_linear_attention(&p, c.feature_dim, x),
        MixerConfig::Baseconv(c) => {
            let k = c.kernel_size[layer % c.kernel_size.len()];
            let conv = match k {
                -1 if c.implicit_long_conv => {
                    long_conv(x, &p.implicit_filter(c.l_max, x.len(), 1, false))
                }
                -1 => long_conv(x, &rows(p.t("filter"))),
                _ => p.conv("conv", x),
            };
            zip(&p.linear("projection", x), &conv, |a, b| a * b)
        }
        MixerConfig::Hyena(c) => hyena(&p, c, x),
        MixerConfig::H3(_) => h3(&p, x),
        MixerConfig::Deltanet(c) => deltanet(&p, c, x),
    }
}

fn attention(p: &P, x: &Seq) -> Seq {
    let (q, k, v) = (
        p.linear("q_proj", x),
        p.linear("k_proj", x),
        p.linear("v_proj", x),
    );
    let scale = 1.0 / (q[0].len() as f64).sqrt();
    let y: Seq = (0..x.len())
        .map(|t| {
            let s: Vec<f64> = (0..=t).map(|j| dot(&q[t], &k[j]) * scale).collect();
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
            (0..v[0].len())
                .map(|c| (0..=t).map(|j| (s[j] - m).exp() / z * v[j][c]).sum())
                .collect()
        })
        .collect();
    p.linear("out_proj", &y)
}

fn mamba(p: &P, c: &MambaConfig, x: &Seq) -> Seq {
    let d = x[0].len();
    let inner = c.expand * d;
    let n = c.d_state;
    let r = c.dt_rank.unwrap_or(d.div_ceil(16));
    let xz = p.linear("in_proj", x);
    let mut u = cols(&xz, 0, inner);
    let z = cols(&xz, inner, inner);
    if c.d_conv.is_some() {
        u = p.conv("conv1d", &u);
    }
    let u = map(&u, silu);
    let dbl = p.linear("x_proj", &u);
    let dt = map(&p.linear("dt_proj", &cols(&dbl, 0, r)), softplus);
    let a: Vec<f64> = p.t("A_log").data().iter().map(|v| -v.exp()).collect();
    let dskip = p.t("D").data();
    let mut h = vec![0.0; inner * n];
    let mut y = Vec::new();
    for t in 0..x.len() {
        let (b, cc) = (&dbl[t][r..r + n], &dbl[t][r + n..r + 2 * n]);
        let mut row = Vec::with_capacity(inner);
        for e in 0..inner {
            let mut acc = 0.0;
            for s in 0..n {
                let i = e * n + s;
                h[i] = (dt[t][e] * a[i]).exp() * h[i] + dt[t][e] * b[s] * u[t][e];
                acc += h[i] * cc[s];
            }
            row.push((acc + dskip[e] * u[t][e]) * silu(z[t][e]));
        }
        y.push(row);
    }
    p.linear("out_proj", &y)
}

/// Prefix-sum form with explicit features `[1, u, vec(u u^T)/sqrt 2]`.
fn taylor_linear_attention(p: &P, f: usize, x: &Seq) -> Seq {
    let (q, k, v) = (
        p.linear("q_proj", x),
        p.linear("k_proj", x),
        p.linear("v_proj", x),
    );
    let scale = (f as f64).powf(-0.25);
    let phi = |u: &[f64]| {
        let u: Vec<f64> = u.iter().map(|x| x * scale).collect();
        let mut out = vec![1.0];
        out.extend(&u);
        for a in &u {
            for b in &u {
                out.push(a * b / 2f64.sqrt());
            }
        }
        out
    };
    let dv = v[0].len();
    let nf = 1 + f + f * f;
    let mut s = vec![vec![0.0; dv]; nf];
    let mut zsum = vec![0.0; nf];
    let mut y = Vec::new();
    for t in 0..x.len() {
        let pk = phi(&k[t]);
        for i in 0..nf {
            zsum[i] += pk[i];
            for c in 0..dv {
                s[i][c] += pk[i] * v[t][c];
            }
        }
        let pq = phi(&q[t]);
        let den = dot(&pq, &zsum) + 1e-12;
        y.push(
            (0..dv)
                .map(|c| (0..nf).map(|i| pq[i] * s[i][c]).sum::<f64>() / den)
                .collect(),
        );
    }
    p.linear("out_proj", &y)
}

fn hyena(p: &P, c: &HyenaConfig, x: &Seq) -> Seq {
    let d = x[0].len();
    let u = p.conv("short_filter", &p.linear("in_proj", x));
    let (x0, x1) = (cols(&u, 0, d), cols(&u, d, d));
    let v = zip(&cols(&u, 2 * d, d), &x1, |a, b| a * b);
    let h = p.implicit_filter(c.l_max, x.len(), 2, true);
    let bias = p.t("filter_bias").data();
    let conv = long_conv(&v, &h);
    let y: Seq = (0..x.len())
        .map(|t| {
            (0..d)
                .map(|j| (conv[t][j] + bias[j] * v[t][j]) * x0[t][j])
                .collect()
        })
        .collect();
    p.linear("out_proj", &y)
}

/// Shift as an explicit delay line; diagonal SSM as a state recurrence over
/// `(value channel, key channel, state)`.
fn h3(p: &P, x: &Seq) -> Seq {
    let d = x[0].len();
    let q = p.linear("q_proj", x);
    let k_raw = p.linear("k_proj", x);
    let v = p.linear("v_proj", x);
    let sk = p.t("shift.kernel");
    let taps = sk.shape()[0];
    let k: Seq = (0..x.len())
        .map(|t| {
            (0..d)
                .map(|c| {
                    (0..taps.min(t + 1))
                        .map(|m| sk.data()[m * d + c] * k_raw[t - m][c])
                        .sum()
                })
                .collect()
        })
        .collect();
    let dt: Vec<f64> = p.t("ssm.log_dt").data().iter().map(|v| v.exp()).collect();
    let a = p.t("ssm.log_a");
    let n = a.shape()[1];
    let cm = p.t("ssm.C").data();
    let mut h = vec![0.0; d * d * n];
    let mut y = Vec::new();
    for t in 0..x.len() {
        let mut row = vec![0.0; d];
        for j in 0..d {
            for i in 0..d {
                for s in 0..n {
                    let idx = (j * d + i) * n + s;
                    let decay = (-dt[j] * a.data()[j * n + s].exp()).exp();
                    h[idx] = decay * h[idx] + k[t][i] * v[t][j];
                    row[j] += dt[j] * q[t][i] * cm[j * n + s] * h[idx];
                }
            }
        }
        y.push(row);
    }
    p.linear("out_proj", &y)
}

fn deltanet(p: &P, c: &DeltaNetConfig, x: &Seq) -> Seq {
    let d = x[0].len();
    let mut qkv = p.linear("qkv_proj", x);
    if c.conv_size.is_some() {
        qkv = p.conv("conv", &qkv);
    }
    let qkv = map(&qkv, silu);
    let norm = |r: Vec<f64>| {
        let n = dot(&r, &r).sqrt().max(1e-12);
        r.into_iter().map(|v| v / n).collect::<Vec<f64>>()
    };
    let beta = p.linear("b_proj", x);
    let mut s = vec![vec![0.0; d]; d];
    let mut y = Vec::new();
    for t in 0..x.len() {
        let q = norm(qkv[t][..d].to_vec());
        let k = norm(qkv[t][d..2 * d].to_vec());
        let v = &qkv[t][2 * d..];
        let b = sigmoid(beta[t][0]);
        let sk: Vec<f64> = s.iter().map(|r| dot(r, &k)).collect();
        for (i, row) in s.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x += b * (v[i] - sk[i]) * k[j];
            }
        }
        y.push(s.iter().map(|r| dot(r, &q)).collect());
    }
    p.linear("out_proj", &y)
}
