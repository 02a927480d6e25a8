//! Sequence-to-function CNN inference with every scalar operation routed
//! through an [`Arithmetic`] backend.
//!
//! Topology: one-hot encoding, one stage of parallel 1D convolution banks
//! with different kernel lengths, global max pooling per filter, and a
//! dense sigmoid layer producing one probability per ontology class. All
//! model arithmetic is declared binary32, and dot products accumulate left
//! to right in a fixed order.

use serde::{Deserialize, Serialize};

use crate::arith::{Arithmetic, Precision};
use crate::error::{Error, FormatError};

/// Working precision of every model operation.
pub const MODEL_PRECISION: Precision = Precision::Single;

/// Twenty amino acids followed by `X` for unknown residues.
pub const DEFAULT_ALPHABET: &str = "ACDEFGHIKLMNPQRSTVWYX";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub kernel_length: usize,
    pub num_filters: usize,
    /// Row-major `kernel_length x alphabet_size x num_filters`.
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

impl FilterBank {
    #[inline]
    fn weight(&self, offset: usize, symbol: usize, filter: usize, alphabet: usize) -> f64 {
        self.kernel[(offset * alphabet + symbol) * self.num_filters + filter]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub alphabet: String,
    pub max_len: usize,
    pub filter_banks: Vec<FilterBank>,
    /// Row-major `total_filters x num_classes`.
    pub dense_weights: Vec<f64>,
    pub dense_bias: Vec<f64>,
    pub class_ids: Vec<String>,
}

impl Model {
    pub fn alphabet_size(&self) -> usize {
        self.alphabet.chars().count()
    }

    pub fn total_filters(&self) -> usize {
        self.filter_banks.iter().map(|b| b.num_filters).sum()
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn validate(&self) -> Result<(), Error> {
        let a = self.alphabet_size();
        if a == 0 {
            return Err(Error::Model("empty alphabet".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(c) = self.alphabet.chars().find(|c| !seen.insert(*c)) {
            return Err(Error::Model(format!("symbol `{c}` repeated in alphabet")));
        }
        if self.max_len == 0 {
            return Err(Error::Model("max_len must be positive".into()));
        }
        for (i, bank) in self.filter_banks.iter().enumerate() {
            if bank.kernel_length == 0 || bank.kernel_length > self.max_len {
                return Err(Error::Model(format!(
                    "bank {i}: kernel length {} not in 1..={}",
                    bank.kernel_length, self.max_len
                )));
            }
            if bank.kernel.len() != bank.kernel_length * a * bank.num_filters {
                return Err(Error::Model(format!(
                    "bank {i}: kernel has {} values, expected {}",
                    bank.kernel.len(),
                    bank.kernel_length * a * bank.num_filters
                )));
            }
            if bank.bias.len() != bank.num_filters {
                return Err(Error::Model(format!(
                    "bank {i}: bias has {} values, expected {}",
                    bank.bias.len(),
                    bank.num_filters
                )));
            }
        }
        let (f, c) = (self.total_filters(), self.num_classes());
        if self.dense_weights.len() != f * c {
            return Err(Error::Model(format!(
                "dense weights have {} values, expected {f} x {c}",
                self.dense_weights.len()
            )));
        }
        if self.dense_bias.len() != c {
            return Err(Error::Model(format!(
                "dense bias has {} values, expected {c}",
                self.dense_bias.len()
            )));
        }
        let all = self
            .filter_banks
            .iter()
            .flat_map(|b| b.kernel.iter().chain(&b.bias))
            .chain(&self.dense_weights)
            .chain(&self.dense_bias);
        if all.clone().any(|w| !w.is_finite()) {
            return Err(Error::Model("non-finite parameter".into()));
        }
        Ok(())
    }

    /// A copy with every parameter brought into the backend's working format.
    pub fn loaded<A: Arithmetic>(&self, ctx: &mut A) -> Result<Model, FormatError> {
        let mut load = |v: &[f64]| -> Result<Vec<f64>, FormatError> {
            v.iter().map(|&x| ctx.load(x, MODEL_PRECISION)).collect()
        };
        let mut banks = Vec::with_capacity(self.filter_banks.len());
        for bank in &self.filter_banks {
            banks.push(FilterBank {
                kernel: load(&bank.kernel)?,
                bias: load(&bank.bias)?,
                ..bank.clone()
            });
        }
        Ok(Model {
            filter_banks: banks,
            dense_weights: load(&self.dense_weights)?,
            dense_bias: load(&self.dense_bias)?,
            ..self.clone()
        })
    }
}

/// One-hot encoding of a sequence, `max_len x alphabet_size`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    /// Symbols not found in the alphabet (encoded as all-zero rows).
    pub unknown_symbols: usize,
}

impl EncodedSequence {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

pub fn encode_sequence(seq: &str, model: &Model) -> EncodedSequence {
    let alphabet: Vec<char> = model.alphabet.chars().collect();
    let (rows, cols) = (model.max_len, alphabet.len());
    let mut data = vec![0.0; rows * cols];
    let mut unknown_symbols = 0;
    for (i, ch) in seq.chars().take(rows).enumerate() {
        match alphabet.iter().position(|&a| a == ch) {
            Some(j) => data[i * cols + j] = 1.0,
            None => unknown_symbols += 1,
        }
    }
    EncodedSequence {
        rows,
        cols,
        data,
        unknown_symbols,
    }
}

/// Valid cross-correlation of `bank` over the whole padded input, plus bias,
/// reduced by a global maximum per filter. Returns the pooled values and
/// the window position each came from (first maximum wins).
pub fn conv1d_maxpool_argmax<A: Arithmetic>(
    encoded: &EncodedSequence,
    bank: &FilterBank,
    ctx: &mut A,
) -> Result<(Vec<f64>, Vec<usize>), FormatError> {
    let p = MODEL_PRECISION;
    let a = encoded.cols;
    let k = bank.kernel_length;
    let positions = encoded.rows + 1 - k;
    let mut pooled = vec![f64::NEG_INFINITY; bank.num_filters];
    let mut argmax = vec![0; bank.num_filters];
    for f in 0..bank.num_filters {
        for s in 0..positions {
            let mut acc = 0.0;
            for j in 0..k {
                let row = &encoded.data[(s + j) * a..(s + j + 1) * a];
                for (sym, &x) in row.iter().enumerate() {
                    let prod = ctx.mul(x, bank.weight(j, sym, f, a), p)?;
                    acc = ctx.add(acc, prod, p)?;
                }
            }
            let v = ctx.add(acc, bank.bias[f], p)?;
            let best = ctx.max(pooled[f], v);
            if best != pooled[f] {
                pooled[f] = best;
                argmax[f] = s;
            }
        }
    }
    Ok((pooled, argmax))
}

pub fn conv1d_maxpool<A: Arithmetic>(
    encoded: &EncodedSequence,
    bank: &FilterBank,
    ctx: &mut A,
) -> Result<Vec<f64>, FormatError> {
    conv1d_maxpool_argmax(encoded, bank, ctx).map(|(v, _)| v)
}

/// Dense layer followed by the logistic function `1 / (1 + e^-z)`.
pub fn dense_sigmoid<A: Arithmetic>(
    pooled: &[f64],
    model: &Model,
    ctx: &mut A,
) -> Result<Vec<f64>, FormatError> {
    let logits = dense_logits(pooled, model, ctx)?;
    logits.into_iter().map(|z| sigmoid(z, ctx)).collect()
}

pub(crate) fn dense_logits<A: Arithmetic>(
    pooled: &[f64],
    model: &Model,
    ctx: &mut A,
) -> Result<Vec<f64>, FormatError> {
    let p = MODEL_PRECISION;
    let c = model.num_classes();
    debug_assert_eq!(pooled.len(), model.total_filters());
    (0..c)
        .map(|class| {
            let mut acc = 0.0;
            for (f, &x) in pooled.iter().enumerate() {
                let prod = ctx.mul(x, model.dense_weights[f * c + class], p)?;
                acc = ctx.add(acc, prod, p)?;
            }
            ctx.add(acc, model.dense_bias[class], p)
        })
        .collect()
}

#[inline]
pub(crate) fn sigmoid<A: Arithmetic>(z: f64, ctx: &mut A) -> Result<f64, FormatError> {
    let p = MODEL_PRECISION;
    let e = ctx.exp(-z, p)?;
    let d = ctx.add(1.0, e, p)?;
    ctx.div(1.0, d, p)
}

/// Class probabilities for a single sequence. `model` must already be
/// [loaded](Model::loaded) into the backend's format.
pub fn predict<A: Arithmetic>(model: &Model, seq: &str, ctx: &mut A) -> Result<Vec<f64>, FormatError> {
    let encoded = encode_sequence(seq, model);
    let mut pooled = Vec::with_capacity(model.total_filters());
    for bank in &model.filter_banks {
        pooled.extend(conv1d_maxpool(&encoded, bank, ctx)?);
    }
    dense_sigmoid(&pooled, model, ctx)
}

/// Proteins x classes probability matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMatrix {
    pub proteins: Vec<String>,
    pub class_ids: Vec<String>,
    /// Row-major `proteins x classes`.
    pub values: Vec<f64>,
}

impl PredictionMatrix {
    pub fn new(proteins: Vec<String>, class_ids: Vec<String>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), proteins.len() * class_ids.len());
        PredictionMatrix {
            proteins,
            class_ids,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.proteins.len()
    }

    pub fn cols(&self) -> usize {
        self.class_ids.len()
    }

    #[inline]
    pub fn get(&self, protein: usize, class: usize) -> f64 {
        self.values[protein * self.cols() + class]
    }

    pub fn row(&self, protein: usize) -> &[f64] {
        let c = self.cols();
        &self.values[protein * c..(protein + 1) * c]
    }
}

/// A named protein sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sequence {
    pub id: String,
    pub residues: String,
}

/// Run the model over every sequence with one backend instance.
pub fn forward<A: Arithmetic>(
    model: &Model,
    sequences: &[Sequence],
    ctx: &mut A,
) -> Result<PredictionMatrix, Error> {
    model.validate()?;
    let loaded = model.loaded(ctx)?;
    let mut values = Vec::with_capacity(sequences.len() * model.num_classes());
    for (i, seq) in sequences.iter().enumerate() {
        let probs = predict(&loaded, &seq.residues, ctx).map_err(|source| Error::Inference {
            protein: i,
            id: seq.id.clone(),
            source,
        })?;
        values.extend(probs);
    }
    Ok(PredictionMatrix::new(
        sequences.iter().map(|s| s.id.clone()).collect(),
        model.class_ids.clone(),
        values,
    ))
}
