//! Every configuration key the front end accepts.

use std::fmt::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Int,
    Float,
    Text,
}

pub struct Key {
    pub name: &'static str,
    /// Empty when the value is derived or has no default.
    pub default: &'static str,
    pub kind: Kind,
    pub doc: &'static str,
}

const fn key(name: &'static str, default: &'static str, kind: Kind, doc: &'static str) -> Key {
    Key {
        name,
        default,
        kind,
        doc,
    }
}

use Kind::{Float, Int, Text};

pub const KEYS: &[Key] = &[
    key("seed", "0", Int, "root seed; every stage seed defaults to it"),
    key("run.out", "runs", Text, "directory for checkpoints and reports"),
    key(
        "data.dir",
        "data",
        Text,
        "directory for prepared sequences, instance splits and the manifest",
    ),
    key("data.input", "", Text, "raw event file read by prep-data"),
    key("data.format", "jsonl", Text, "raw file format: jsonl or csv"),
    key("data.name", "dataset", Text, "dataset name recorded in reports"),
    key(
        "data.marks",
        "",
        Int,
        "number of marks in the raw file (required by prep-data)",
    ),
    key(
        "data.mark_names",
        "",
        Text,
        "comma separated display names, one per mark",
    ),
    key("data.len_history", "35", Int, "history events per instance"),
    key("data.len_future", "10", Int, "future events per instance"),
    key(
        "data.test_sample",
        "1000",
        Int,
        "test instances drawn for evaluation, clamped to the test split",
    ),
    key("data.seed", "", Int, "seed of the test sample"),
    key(
        "synth.out",
        "data/synthetic.jsonl",
        Text,
        "raw file written by synth-gen; labels go to <stem>.planted.jsonl",
    ),
    key("synth.sequences", "400", Int, "sequences simulated by synth-gen"),
    key(
        "synth.horizon",
        "60",
        Float,
        "observation window length of each simulated sequence",
    ),
    key("synth.seed", "", Int, "simulation seed"),
    key("mtpp.marks", "", Int, "marks of the intensity model, from the manifest"),
    key(
        "mtpp.layers",
        "4",
        Int,
        "hidden layers of the cumulative intensity network",
    ),
    key("mtpp.history", "32", Int, "recurrent state width"),
    key("mtpp.intensity", "16", Int, "cumulative intensity network width"),
    key("mtpp.time_scale", "", Float, "interval scale, from the manifest"),
    key("mtpp.steps", "2000", Int, "optimizer steps"),
    key("mtpp.batch", "16", Int, "sequences per step"),
    key("mtpp.lr", "0.002", Float, "peak learning rate"),
    key("mtpp.warmup", "100", Int, "linear warmup steps"),
    key("mtpp.seed", "", Int, "initialization and batching seed"),
    key(
        "distiller.marks",
        "",
        Int,
        "marks of the selection model, from the manifest",
    ),
    key(
        "distiller.time_span",
        "",
        Float,
        "time span of the position encoding, from the window and interval scale",
    ),
    key("distiller.input", "32", Int, "token input width"),
    key("distiller.hidden", "64", Int, "encoder width"),
    key("distiller.qkv", "32", Int, "query/key/value width across all heads"),
    key("distiller.heads", "4", Int, "attention heads"),
    key("distiller.history_depth", "4", Int, "history encoder layers"),
    key("distiller.future_depth", "4", Int, "future encoder layers"),
    key("distiller.ffn", "64", Int, "feed-forward width"),
    key("distiller.max_len", "512", Int, "longest history or future accepted"),
    key("distiller.steps", "100000", Int, "optimizer steps"),
    key("distiller.batch", "128", Int, "instances per step"),
    key("distiller.lr", "0.001", Float, "peak learning rate"),
    key("distiller.warmup", "2000", Int, "linear warmup steps"),
    key("distiller.alpha", "1.0", Float, "weight of the cardinality loss"),
    key("distiller.epsilon", "0.5", Float, "perplexity margin of the constraint"),
    key("distiller.samples", "4", Int, "mask samples per instance"),
    key("distiller.temperature", "1.0", Float, "Gumbel-Softmax temperature"),
    key("distiller.loss", "full", Text, "full, lc-only or ln-only"),
    key("distiller.seed", "", Int, "initialization and sampling seed"),
    key("distiller.log_every", "10", Int, "steps per left-fraction trace point"),
    key(
        "distiller.train_sample",
        "0",
        Int,
        "training instances drawn from the train split; 0 uses all",
    ),
    key(
        "eval.split",
        "test_sampled",
        Text,
        "instance file evaluated: train, eval, test or test_sampled",
    ),
    key(
        "eval.limit",
        "0",
        Int,
        "evaluate only this many leading instances; 0 uses all",
    ),
    key(
        "eval.rd_samples",
        "4",
        Int,
        "random draws per step of the random baseline",
    ),
    key("eval.seed", "", Int, "seed of the random baselines"),
    key(
        "case.split",
        "test",
        Text,
        "instance file for the mark and shift case studies",
    ),
    key("gradcheck.seed", "2024", Int, "seed of the random probe points"),
    key("gradcheck.trials", "10", Int, "probe points per primitive"),
    key("gradcheck.step", "0.0001", Float, "finite-difference step"),
    key(
        "gradcheck.tolerance",
        "0.0001",
        Float,
        "largest accepted relative error",
    ),
];

pub fn lookup(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

/// Environment variable overriding `name`.
pub fn env_name(name: &str) -> String {
    format!("EHD_{}", name.to_ascii_uppercase().replace('.', "__"))
}

/// Markdown table of all keys.
pub fn reference_table() -> String {
    let mut s = String::from("| key | default | environment | description |\n|---|---|---|---|\n");
    for k in KEYS {
        let default = if k.default.is_empty() { "-" } else { k.default };
        let _ = writeln!(s, "| `{}` | `{default}` | `{}` | {} |", k.name, env_name(k.name), k.doc);
    }
    s
}
