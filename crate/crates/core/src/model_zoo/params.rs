// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashMap;
use std::sync::Arc;

use tensor::{Real, Rng, Tape, Tensor, Var};

use crate::error::{Error, Result};

pub const INIT_STD: f64 = 0.02;

/// Parameters in canonical order, addressable by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T: Real> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: Arc<HashMap<String, usize>>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: Arc::default(),
        }
    }
}

impl<T: Real> ParamSet<T> {
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter `{name}`")));
        }
        Arc::make_mut(&mut self.index).insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let i = *self.index.get(name)?;
        Some(&mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: Arc::clone(&self.index),
        }
    }

    /// Record every parameter on `tape`, differentiable when `trainable`.
    pub fn load<'t>(&self, tape: &'t Tape<T>, trainable: bool) -> ParamVars<'t, T> {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t)
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        ParamVars {
            index: Arc::clone(&self.index),
            vars,
        }
    }

    /// Use existing tape variables, in canonical order, as these parameters.
    pub fn bind<'t>(&self, vars: Vec<Var<'t, T>>) -> Result<ParamVars<'t, T>> {
        if vars.len() != self.len() {
            return Err(Error::config(format!(
                "expected {} parameter variables, got {}",
                self.len(),
                vars.len()
            )));
        }
        Ok(ParamVars {
            index: Arc::clone(&self.index),
            vars,
        })
    }

    /// Parameters under `prefix.`, renamed relative to it.
    pub fn subset(&self, prefix: &str) -> ParamSet<T> {
        let lead = format!("{prefix}.");
        let mut out = ParamSet::default();
        for (name, t) in self.iter() {
            if let Some(rest) = name.strip_prefix(&lead) {
                out.insert(rest, t.clone()).expect("names are unique");
            }
        }
        out
    }
}

/// Parameters recorded on one tape.
pub struct ParamVars<'t, T: Real> {
    index: Arc<HashMap<String, usize>>,
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Real> ParamVars<'t, T> {
    pub fn get(&self, name: &str) -> Result<Var<'t, T>> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
    }

    pub fn vars(&self) -> &[Var<'t, T>] {
        &self.vars
    }
}

/// FNV-1a, so each parameter's init stream depends only on its name.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Builds a 64-bit [`ParamSet`] under a name prefix.
pub struct Init<'a> {
    seed: u64,
    prefix: String,
    params: &'a mut ParamSet<f64>,
}

impl<'a> Init<'a> {
    pub fn new(seed: u64, params: &'a mut ParamSet<f64>) -> Self {
        Self {
            seed,
            prefix: String::new(),
            params,
        }
    }

    pub fn scope(&mut self, name: &str) -> Init<'_> {
        Init {
            seed: self.seed,
            prefix: join(&self.prefix, name),
            params: self.params,
        }
    }

    pub fn rng(&self, name: &str) -> Rng {
        Rng::labelled(self.seed, &[name_hash(&join(&self.prefix, name))])
    }

    pub fn tensor(&mut self, name: &str, value: Tensor<f64>) -> Result<()> {
        self.params.insert(join(&self.prefix, name), value)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<()> {
        let mut rng = self.rng(name);
        self.tensor(name, Tensor::randn(shape, std, &mut rng))
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<()> {
        let mut rng = self.rng(name);
        self.tensor(name, Tensor::rand_uniform(shape, -bound, bound, &mut rng))
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<()> {
        self.tensor(name, Tensor::zeros(shape))
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> Result<()> {
        self.tensor(name, Tensor::ones(shape))
    }

    /// `name.weight[n_in, n_out]` ~ N(0, 0.02) and optional zero `name.bias`.
    pub fn linear(&mut self, name: &str, n_in: usize, n_out: usize, bias: bool) -> Result<()> {
        let mut s = self.scope(name);
        s.normal("weight", &[n_in, n_out], INIT_STD)?;
        if bias {
            s.zeros("bias", &[n_out])?;
        }
        Ok(())
    }

    /// Depthwise causal conv `name.weight[k, d]`, uniform in `±1/sqrt(k)`.
    pub fn conv(&mut self, name: &str, k: usize, d: usize, bias: bool) -> Result<()> {
        let bound = 1.0 / (k as f64).sqrt();
        let mut s = self.scope(name);
        s.uniform("weight", &[k, d], bound)?;
        if bias {
            s.uniform("bias", &[d], bound)?;
        }
        Ok(())
    }

    pub fn layer_norm(&mut self, name: &str, d: usize) -> Result<()> {
        let mut s = self.scope(name);
        s.ones("weight", &[d])?;
        s.zeros("bias", &[d])
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Forward-pass view of the parameters under a name prefix.
pub struct Scope<'a, 't, T: Real> {
    pub tape: &'t Tape<T>,
    vars: &'a ParamVars<'t, T>,
    prefix: String,
}

impl<'a, 't, T: Real> Scope<'a, 't, T> {
    pub fn root(tape: &'t Tape<T>, vars: &'a ParamVars<'t, T>) -> Self {
        Self {
            tape,
            vars,
            prefix: String::new(),
        }
    }

    pub fn scope(&self, name: &str) -> Scope<'a, 't, T> {
        Scope {
            tape: self.tape,
            vars: self.vars,
            prefix: join(&self.prefix, name),
        }
    }

    pub fn param(&self, name: &str) -> Result<Var<'t, T>> {
        self.vars.get(&join(&self.prefix, name))
    }

    pub fn has(&self, name: &str) -> bool {
        self.vars.index.contains_key(&join(&self.prefix, name))
    }

    /// `x @ name.weight (+ name.bias)`.
    pub fn linear(&self, name: &str, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let s = self.scope(name);
        let y = x.matmul(s.param("weight")?)?;
        if s.has("bias") {
            Ok(y.add(s.param("bias")?)?)
        } else {
            Ok(y)
        }
    }

    pub fn conv(&self, name: &str, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let s = self.scope(name);
        let bias = if s.has("bias") {
            Some(s.param("bias")?)
        } else {
            None
        };
        Ok(x.causal_conv1d(s.param("weight")?, bias)?)
    }

    pub fn layer_norm(&self, name: &str, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let s = self.scope(name);
        Ok(x.layer_norm(s.param("weight")?, s.param("bias")?)?)
    }
}
