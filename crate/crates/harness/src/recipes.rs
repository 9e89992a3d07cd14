// SPDX-License-Identifier: MIT OR Apache-2.0

//! Named experiment recipes, each available at a full and a desk scale.

use anyhow::{bail, Result};
use mechrecall::interventions::classify::Mechanism;
use mechrecall::model_zoo::MixerKind;
use mechrecall::tasks::{ArParams, AtrParams, PcfgParams, QueryMode};
use mechrecall::trainer::schedule::lr_ladder;
use serde_json::{json, Map, Value};
use tensor::Precision;

use crate::config::{
    ExperimentConfig, InterventionBlock, ModelGrid, Scale, TaskBlock, TrainBlock, Variant,
};

pub const PAPER_AR_VOCAB: usize = 8192;
pub const PAPER_AR_PAIRS: usize = 32;
pub const PAPER_TRAIN_DOCS: usize = 100_032;
pub const EVAL_DOCS: usize = 320;
pub const PAPER_DIMS: [usize; 5] = [16, 32, 64, 128, 256];
pub const PAPER_AR_EPOCHS: usize = 16;
pub const PAPER_ATR_EPOCHS: usize = 32;

pub const DESK_AR_VOCAB: usize = 512;
pub const DESK_AR_PAIRS: usize = 8;
pub const DESK_TRAIN_DOCS: usize = 20_000;
pub const DESK_DIM: usize = 64;
pub const DESK_AR_EPOCHS: usize = 8;
pub const DESK_ATR_EPOCHS: usize = 16;
pub const DESK_AR_LRS: [f64; 3] = [1e-3, 3e-3, 1e-2];
pub const DESK_ATR_LRS: [f64; 3] = [3e-4, 1e-3, 3e-3];

/// Qualitative outcome a recipe expects for one model family.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub mixer: MixerKind,
    pub variant: &'static str,
    pub label: Mechanism,
}

pub struct Recipe {
    pub name: &'static str,
    pub description: &'static str,
    build: fn(Scale) -> ExperimentConfig,
    pub expected: fn() -> Vec<Expectation>,
}

impl Recipe {
    pub fn config(&self, scale: Scale) -> ExperimentConfig {
        (self.build)(scale)
    }
}

pub fn registry() -> Vec<Recipe> {
    vec![
        Recipe {
            name: "ar_main",
            description: "AR across all seven mixers and model widths",
            build: ar_main,
            expected: expect_ar,
        },
        Recipe {
            name: "mamba_conv_ablation",
            description: "Mamba on AR with the short convolution width varied",
            build: mamba_conv_ablation,
            expected: || vec![],
        },
        Recipe {
            name: "based_longconv",
            description: "Based on AR with and without its short convolution",
            build: based_longconv,
            expected: || vec![],
        },
        Recipe {
            name: "mamba_conv_internal",
            description: "Conv-output interventions on Mamba AR checkpoints over several seeds",
            build: mamba_conv_internal,
            expected: || {
                vec![exp(
                    MixerKind::Mamba,
                    "default",
                    Mechanism::DirectRetrievalL0,
                )]
            },
        },
        Recipe {
            name: "atr_main",
            description: "ATR across all seven mixers and model widths",
            build: atr_main,
            expected: || vec![exp(MixerKind::Attention, "default", Mechanism::Induction)],
        },
        Recipe {
            name: "atr_mamba_noconv",
            description: "Mamba on ATR with and without the short convolution",
            build: atr_mamba_noconv,
            expected: || {
                vec![
                    exp(MixerKind::Mamba, "no_conv", Mechanism::Induction),
                    exp(MixerKind::Mamba, "d_conv4", Mechanism::DirectRetrievalL0),
                ]
            },
        },
        Recipe {
            name: "pos_emb_ablation",
            description: "AR with absolute position embeddings removed",
            build: pos_emb_ablation,
            expected: || vec![],
        },
        Recipe {
            name: "atr_generalization_split",
            description: "ATR with a share of (query, answer) pairs held out for test",
            build: atr_generalization_split,
            expected: || vec![],
        },
        Recipe {
            name: "one_layer",
            description: "Single-layer models on AR",
            build: one_layer,
            expected: || vec![],
        },
        Recipe {
            name: "three_layer",
            description: "One to three layers on AR with mixer-output query interventions",
            build: three_layer,
            expected: || vec![],
        },
        Recipe {
            name: "sibling_queries",
            description: "ATR asking for the rightmost sibling instead of the parent",
            build: sibling_queries,
            expected: || vec![],
        },
    ]
}

pub fn find(name: &str) -> Result<Recipe> {
    match registry().into_iter().find(|r| r.name == name) {
        Some(r) => Ok(r),
        None => {
            let names: Vec<&str> = registry().iter().map(|r| r.name).collect();
            bail!("unknown recipe `{name}`; known: {}", names.join(", "))
        }
    }
}

fn exp(mixer: MixerKind, variant: &'static str, label: Mechanism) -> Expectation {
    Expectation {
        mixer,
        variant,
        label,
    }
}

fn expect_ar() -> Vec<Expectation> {
    vec![
        exp(MixerKind::Attention, "default", Mechanism::Induction),
        exp(MixerKind::Based, "default", Mechanism::Induction),
        exp(MixerKind::Mamba, "default", Mechanism::DirectRetrievalL0),
    ]
}

pub fn ar_task(scale: Scale) -> TaskBlock {
    TaskBlock::Ar(match scale {
        Scale::Paper => ArParams {
            vocab_size: PAPER_AR_VOCAB,
            n_pairs: PAPER_AR_PAIRS,
            n_train: PAPER_TRAIN_DOCS,
            n_eval: EVAL_DOCS,
        },
        Scale::Desk => ArParams {
            vocab_size: DESK_AR_VOCAB,
            n_pairs: DESK_AR_PAIRS,
            n_train: DESK_TRAIN_DOCS,
            n_eval: EVAL_DOCS,
        },
    })
}

pub fn atr_params(scale: Scale) -> AtrParams {
    match scale {
        Scale::Paper => AtrParams {
            n_train: PAPER_TRAIN_DOCS,
            n_eval: EVAL_DOCS,
            ..AtrParams::default()
        },
        Scale::Desk => AtrParams {
            pcfg: PcfgParams {
                n_nonterminals: 16,
                n_terminals: 12,
                l_max: 4,
                d_max: 6,
                ..PcfgParams::default()
            },
            n_train: DESK_TRAIN_DOCS,
            n_eval: EVAL_DOCS,
            ..AtrParams::default()
        },
    }
}

fn atr_task(scale: Scale) -> TaskBlock {
    TaskBlock::Atr {
        params: atr_params(scale),
        holdout_fraction: None,
    }
}

fn dims(scale: Scale) -> Vec<usize> {
    match scale {
        Scale::Paper => PAPER_DIMS.to_vec(),
        Scale::Desk => vec![DESK_DIM],
    }
}

fn train(scale: Scale, atr: bool) -> TrainBlock {
    let (lrs, epochs) = match (scale, atr) {
        (Scale::Paper, false) => (lr_ladder(3e-5, 3e-2), PAPER_AR_EPOCHS),
        (Scale::Paper, true) => (lr_ladder(3e-5, 3e-3), PAPER_ATR_EPOCHS),
        (Scale::Desk, false) => (DESK_AR_LRS.to_vec(), DESK_AR_EPOCHS),
        (Scale::Desk, true) => (DESK_ATR_LRS.to_vec(), DESK_ATR_EPOCHS),
    };
    TrainBlock {
        lrs,
        seeds: vec![0],
        epochs,
        batch_size: 32,
        warmup_fraction: 0.1,
        betas: (0.9, 0.999),
        eps: 1e-8,
        weight_decay: 0.0,
        precision: Precision::F32,
    }
}

fn variant(name: &str, set: Value) -> Variant {
    let set: Map<String, Value> = match set {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    Variant {
        name: name.into(),
        set,
    }
}

fn base(name: &str, scale: Scale, task: TaskBlock, mixers: Vec<MixerKind>) -> ExperimentConfig {
    let atr = matches!(task, TaskBlock::Atr { .. });
    ExperimentConfig {
        name: name.into(),
        output_dir: None,
        scale,
        seed: 0,
        task,
        models: ModelGrid {
            mixers,
            d_models: dims(scale),
            n_layers: vec![2],
            variants: vec![Variant::default_variant()],
        },
        train: train(scale, atr),
        intervention: InterventionBlock::default(),
    }
}

fn ar_main(scale: Scale) -> ExperimentConfig {
    base("ar_main", scale, ar_task(scale), MixerKind::ALL.to_vec())
}

fn d_conv_variants(widths: &[Option<usize>]) -> Vec<Variant> {
    widths
        .iter()
        .map(|w| match w {
            None => variant("no_conv", json!({"mixer_config.d_conv": null})),
            Some(k) => variant(&format!("d_conv{k}"), json!({"mixer_config.d_conv": k})),
        })
        .collect()
}

fn mamba_conv_ablation(scale: Scale) -> ExperimentConfig {
    let mut c = base(
        "mamba_conv_ablation",
        scale,
        ar_task(scale),
        vec![MixerKind::Mamba],
    );
    c.models.variants = match scale {
        Scale::Paper => d_conv_variants(&[None, Some(1), Some(2), Some(3), Some(4)]),
        Scale::Desk => d_conv_variants(&[Some(1), Some(2), Some(4)]),
    };
    c
}

fn based_longconv(scale: Scale) -> ExperimentConfig {
    let mut c = base(
        "based_longconv",
        scale,
        ar_task(scale),
        vec![MixerKind::Based],
    );
    c.models.variants = vec![
        Variant::default_variant(),
        variant("long_conv_only", json!({"mixer_config.kernel_size": null})),
    ];
    c
}

fn mamba_conv_internal(scale: Scale) -> ExperimentConfig {
    let mut c = base(
        "mamba_conv_internal",
        scale,
        ar_task(scale),
        vec![MixerKind::Mamba],
    );
    c.train.seeds = match scale {
        Scale::Paper => (0..10).collect(),
        Scale::Desk => vec![0, 1, 2],
    };
    c
}

fn atr_main(scale: Scale) -> ExperimentConfig {
    base("atr_main", scale, atr_task(scale), MixerKind::ALL.to_vec())
}

fn atr_mamba_noconv(scale: Scale) -> ExperimentConfig {
    let mut c = base(
        "atr_mamba_noconv",
        scale,
        atr_task(scale),
        vec![MixerKind::Mamba],
    );
    c.models.variants = d_conv_variants(&[None, Some(4)]);
    c
}

fn pos_emb_ablation(scale: Scale) -> ExperimentConfig {
    let mut c = base(
        "pos_emb_ablation",
        scale,
        ar_task(scale),
        MixerKind::ALL.to_vec(),
    );
    c.models.variants = vec![variant("no_pos_emb", json!({"use_abs_pos_emb": false}))];
    c
}

fn atr_generalization_split(scale: Scale) -> ExperimentConfig {
    let task = TaskBlock::Atr {
        params: atr_params(scale),
        holdout_fraction: Some(0.2),
    };
    base(
        "atr_generalization_split",
        scale,
        task,
        MixerKind::ALL.to_vec(),
    )
}

fn one_layer(scale: Scale) -> ExperimentConfig {
    let mut c = base("one_layer", scale, ar_task(scale), MixerKind::ALL.to_vec());
    c.models.n_layers = vec![1];
    c.intervention.classify_layer = Some(0);
    c
}

fn three_layer(scale: Scale) -> ExperimentConfig {
    let mut c = base(
        "three_layer",
        scale,
        ar_task(scale),
        MixerKind::ALL.to_vec(),
    );
    c.models.n_layers = vec![1, 2, 3];
    c.intervention.mixer_output_query = true;
    c
}

fn sibling_queries(scale: Scale) -> ExperimentConfig {
    let mut p = atr_params(scale);
    p.query_mode = QueryMode::RightmostSibling;
    let task = TaskBlock::Atr {
        params: p,
        holdout_fraction: None,
    };
    base("sibling_queries", scale, task, MixerKind::ALL.to_vec())
}
