//! Seeded desk-scale benchmark: a random model, sequences, a small
//! three-namespace ontology, and annotations sampled from the model's own
//! unperturbed predictions.
//!
//! Every generated value is a binary32 number. The dense layer is
//! calibrated per class so that logits stay inside `logit_range`, and
//! biases are nudged until every unperturbed probability sits at least
//! `threshold_guard` away from every evaluation threshold.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arith::IeeeContext;
use crate::cnn::{self, encode_sequence, FilterBank, Model, Sequence, DEFAULT_ALPHABET};
use crate::error::Error;
use crate::io;
use crate::metrics::{threshold_gap, threshold_grid, Namespace, Ontology};

const AMINO_ACIDS: &str = "ACDEFGHIKLMNPQRSTVWY";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub proteins: usize,
    /// Non-root classes per namespace, in MF, CC, BP order.
    pub classes: [usize; 3],
    pub filter_banks: usize,
    /// Bank `b` has kernel length `(b + 1) * kernel_step`.
    pub kernel_step: usize,
    pub filters_per_bank: usize,
    pub max_len: usize,
    pub min_seq_len: usize,
    pub max_seq_len: usize,
    /// Per-class logit centres are drawn from this range.
    pub logit_centre: (f64, f64),
    pub logit_spread: f64,
    /// Hard bounds on every unperturbed logit.
    pub logit_range: (f64, f64),
    pub thresholds_step: f64,
    pub threshold_guard: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 20_240_601,
            proteins: 64,
            classes: [8, 10, 14],
            filter_banks: 16,
            kernel_step: 2,
            filters_per_bank: 4,
            max_len: 64,
            min_seq_len: 32,
            max_seq_len: 80,
            logit_centre: (-6.0, -1.0),
            logit_spread: 1.5,
            logit_range: (-10.0, 9.0),
            thresholds_step: 0.01,
            threshold_guard: 1e-5,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.proteins == 0 || self.classes.iter().sum::<usize>() == 0 {
            return bad("need at least one protein and one class");
        }
        if self.filter_banks == 0 || self.filters_per_bank == 0 || self.kernel_step == 0 {
            return bad("need at least one filter");
        }
        if self.filter_banks * self.kernel_step > self.max_len {
            return bad("longest kernel exceeds max_len");
        }
        if self.min_seq_len > self.max_seq_len {
            return bad("min_seq_len exceeds max_seq_len");
        }
        if self.logit_range.0 >= self.logit_range.1 {
            return bad("empty logit range");
        }
        Ok(())
    }
}

/// Everything a campaign needs, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub model: Model,
    pub sequences: Vec<Sequence>,
    pub roots: Vec<(String, Namespace)>,
    pub edges: Vec<(String, String)>,
    /// Direct `(protein, class)` annotations.
    pub annotations: Vec<(String, String)>,
}

/// Where [`Benchmark::write_to`] put each input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkFiles {
    pub model: PathBuf,
    pub sequences: PathBuf,
    pub ontology: PathBuf,
    pub truths: PathBuf,
}

impl BenchmarkFiles {
    pub fn in_dir(dir: &Path) -> Self {
        BenchmarkFiles {
            model: dir.join("model.json"),
            sequences: dir.join("sequences.fasta"),
            ontology: dir.join("ontology.tsv"),
            truths: dir.join("truths.tsv"),
        }
    }
}

impl Benchmark {
    pub fn ontology(&self) -> Result<Ontology, Error> {
        Ontology::new(&self.roots, &self.edges)
    }

    pub fn write_to(&self, dir: &Path) -> Result<BenchmarkFiles, Error> {
        let files = BenchmarkFiles::in_dir(dir);
        io::write_model(&files.model, &self.model)?;
        io::write_fasta(&files.sequences, &self.sequences)?;
        io::write_atomic(&files.ontology, io::format_ontology(&self.roots, &self.edges).as_bytes())?;
        io::write_atomic(&files.truths, io::format_annotations(&self.annotations).as_bytes())?;
        Ok(files)
    }
}

fn f32_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi) as f32 as f64
}

type OntologyParts = (Vec<(String, Namespace)>, Vec<(String, String)>);

fn ontology_parts(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> OntologyParts {
    const ROOTS: [(&str, Namespace); 3] = [
        ("GO:0003674", Namespace::Mf),
        ("GO:0005575", Namespace::Cc),
        ("GO:0008150", Namespace::Bp),
    ];
    let roots = ROOTS.iter().map(|(id, ns)| (id.to_string(), *ns)).collect();
    let mut edges = Vec::new();
    let mut serial = 9_000_000;
    for ((root, _), &count) in ROOTS.iter().zip(&cfg.classes) {
        let mut members = vec![root.to_string()];
        for _ in 0..count {
            serial += 1;
            let id = format!("GO:{serial:07}");
            let first = rng.random_range(0..members.len());
            edges.push((id.clone(), members[first].clone()));
            if members.len() > 2 && rng.random_bool(0.3) {
                let second = rng.random_range(1..members.len());
                if second != first {
                    edges.push((id.clone(), members[second].clone()));
                }
            }
            members.push(id);
        }
    }
    (roots, edges)
}

fn random_model(cfg: &SynthConfig, class_ids: Vec<String>, rng: &mut ChaCha8Rng) -> Model {
    let a = DEFAULT_ALPHABET.chars().count();
    let banks: Vec<FilterBank> = (1..=cfg.filter_banks)
        .map(|b| {
            let k = b * cfg.kernel_step;
            let scale = 1.0 / (k as f64).sqrt();
            FilterBank {
                kernel_length: k,
                num_filters: cfg.filters_per_bank,
                kernel: (0..k * a * cfg.filters_per_bank)
                    .map(|_| f32_uniform(rng, -scale, scale))
                    .collect(),
                bias: (0..cfg.filters_per_bank).map(|_| f32_uniform(rng, -0.1, 0.1)).collect(),
            }
        })
        .collect();
    let f = cfg.filter_banks * cfg.filters_per_bank;
    let c = class_ids.len();
    let scale = 1.0 / (f as f64).sqrt();
    Model {
        alphabet: DEFAULT_ALPHABET.into(),
        max_len: cfg.max_len,
        filter_banks: banks,
        dense_weights: (0..f * c).map(|_| f32_uniform(rng, -scale, scale)).collect(),
        dense_bias: vec![0.0; c],
        class_ids,
    }
}

fn random_sequences(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Sequence> {
    let aa: Vec<char> = AMINO_ACIDS.chars().collect();
    (0..cfg.proteins)
        .map(|i| {
            let len = rng.random_range(cfg.min_seq_len..=cfg.max_seq_len);
            let residues = (0..len)
                .map(|_| if rng.random_bool(0.01) { 'X' } else { aa[rng.random_range(0..aa.len())] })
                .collect();
            Sequence {
                id: format!("P{:05}", i + 1),
                residues,
            }
        })
        .collect()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Unperturbed logits, `proteins x classes`, in the model's own operation
/// order.
fn logits(model: &Model, pooled: &[Vec<f64>]) -> Vec<Vec<f64>> {
    pooled
        .iter()
        .map(|p| cnn::dense_logits(p, model, &mut IeeeContext).expect("IEEE arithmetic cannot fail"))
        .collect()
}

fn probability(z: f64) -> f64 {
    cnn::sigmoid(z, &mut IeeeContext).expect("IEEE arithmetic cannot fail")
}

/// Rescale one class's dense column and bias so its logits have the given
/// centre and spread, shrinking the spread until every logit fits `range`.
fn calibrate_class(model: &mut Model, pooled: &[Vec<f64>], class: usize, centre: f64, spread: f64, range: (f64, f64)) {
    let c = model.num_classes();
    let f = model.total_filters();
    let z: Vec<f64> = logits(model, pooled).iter().map(|r| r[class]).collect();
    let (m, sd) = mean_sd(&z);
    let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut a = if sd > 0.0 { spread / sd } else { 1.0 };
    // Keep a margin inside the range for the binary32 rounding below.
    let margin = 0.05;
    if hi > m {
        a = a.min((range.1 - margin - centre) / (hi - m));
    }
    if lo < m {
        a = a.min((centre - range.0 - margin) / (m - lo));
    }
    let b = model.dense_bias[class];
    for k in 0..f {
        let w = &mut model.dense_weights[k * c + class];
        *w = (*w * a) as f32 as f64;
    }
    model.dense_bias[class] = (a * (b - m) + centre) as f32 as f64;
}

/// Shift a class's bias in small steps until every probability keeps
/// `guard` away from the thresholds.
fn guard_class(model: &mut Model, pooled: &[Vec<f64>], class: usize, grid: &[f64], guard: f64) -> Result<(), Error> {
    let base = model.dense_bias[class];
    for step in 0..2000 {
        let offset = if step % 2 == 0 { 1.0 } else { -1.0 } * (step / 2 + step % 2) as f64 * 1e-4;
        model.dense_bias[class] = (base + offset) as f32 as f64;
        let probs = logits(model, pooled).iter().map(|r| probability(r[class])).collect::<Vec<_>>();
        if threshold_gap(probs, grid) >= guard {
            return Ok(());
        }
    }
    Err(Error::Config(format!(
        "could not keep class {} away from the thresholds",
        model.class_ids[class]
    )))
}

pub fn generate(cfg: &SynthConfig) -> Result<Benchmark, Error> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (roots, edges) = ontology_parts(cfg, &mut rng);
    let ontology = Ontology::new(&roots, &edges)?;
    let class_ids: Vec<String> = (0..ontology.len())
        .filter(|&c| !ontology.is_root(c))
        .map(|c| ontology.id(c).to_string())
        .collect();
    let mut model = random_model(cfg, class_ids, &mut rng);
    let sequences = random_sequences(cfg, &mut rng);

    let pooled: Vec<Vec<f64>> = sequences
        .iter()
        .map(|s| {
            let enc = encode_sequence(&s.residues, &model);
            model
                .filter_banks
                .iter()
                .flat_map(|b| cnn::conv1d_maxpool(&enc, b, &mut IeeeContext).expect("IEEE arithmetic cannot fail"))
                .collect()
        })
        .collect();

    let grid = threshold_grid(cfg.thresholds_step)?;
    for class in 0..model.num_classes() {
        let centre = rng.random_range(cfg.logit_centre.0..=cfg.logit_centre.1);
        calibrate_class(&mut model, &pooled, class, centre, cfg.logit_spread, cfg.logit_range);
        guard_class(&mut model, &pooled, class, &grid, cfg.threshold_guard)?;
    }

    // Truths drawn from the unperturbed probabilities, every class used at
    // least once.
    let z = logits(&model, &pooled);
    let mut annotated: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); sequences.len()];
    for (i, row) in z.iter().enumerate() {
        for (c, &zc) in row.iter().enumerate() {
            if rng.random_bool(probability(zc)) {
                annotated[i].insert(c);
            }
        }
    }
    for c in 0..model.num_classes() {
        if !annotated.iter().any(|s| s.contains(&c)) {
            let best = (0..z.len()).max_by(|&a, &b| z[a][c].total_cmp(&z[b][c])).unwrap();
            annotated[best].insert(c);
        }
    }
    let annotations = annotated
        .iter()
        .enumerate()
        .flat_map(|(i, set)| {
            let p = sequences[i].id.clone();
            let ids = &model.class_ids;
            set.iter().map(move |&c| (p.clone(), ids[c].clone()))
        })
        .collect();

    Ok(Benchmark {
        model,
        sequences,
        roots,
        edges,
        annotations,
    })
}
