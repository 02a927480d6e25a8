//! Perturbation campaigns: one unperturbed reference pass followed by `N`
//! perturbed passes, summarised into per-class probability statistics and
//! per-namespace metric statistics.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{Arithmetic, IeeeContext};
use crate::cnn::{self, encode_sequence, Model, PredictionMatrix, Sequence};
use crate::error::{Error, FormatError};
use crate::fp_codec::FloatFormat;
use crate::io;
use crate::mca::{McaConfig, McaContext, McaMode};
use crate::metrics::{Evaluator, IcRule, Namespace, NamespaceMetrics, Ontology};
use crate::sigdigits::{self, Confidence};
use crate::synth::{Benchmark, BenchmarkFiles};
use crate::vprec::{EventCounters, OverflowPolicy, VprecConfig, VprecContext};

/// Ceiling on significant bits of model outputs (binary32 class).
pub const OUTPUT_BITS: u32 = 24;
/// Ceiling on significant bits of metrics (computed in binary64).
pub const METRIC_BITS: u32 = 53;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Ieee,
    McaRr,
    McaPb,
    McaFull,
    Vprec,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Ieee => "ieee",
            Mode::McaRr => "mca-rr",
            Mode::McaPb => "mca-pb",
            Mode::McaFull => "mca-full",
            Mode::Vprec => "vprec",
        }
    }

    fn mca(self) -> Option<McaMode> {
        match self {
            Mode::McaRr => Some(McaMode::Rr),
            Mode::McaPb => Some(McaMode::Pb),
            Mode::McaFull => Some(McaMode::Full),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        [Mode::Ieee, Mode::McaRr, Mode::McaPb, Mode::McaFull, Mode::Vprec]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub mode: Mode,
    pub iterations: usize,
    pub seed: u64,
    pub t32: u32,
    pub t64: u32,
    pub fmt64: FloatFormat,
    pub fmt32: FloatFormat,
    pub overflow_policy: OverflowPolicy,
    pub perturb_exp: bool,
    pub thresholds_step: f64,
    pub ic_rule: IcRule,
    /// Worker threads; 0 uses every available core. Never affects results.
    #[serde(skip)]
    pub workers: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            mode: Mode::Ieee,
            iterations: 10,
            seed: 0,
            t32: 24,
            t64: 53,
            fmt64: FloatFormat::BINARY64,
            fmt32: FloatFormat::BINARY32,
            overflow_policy: OverflowPolicy::Signal,
            perturb_exp: false,
            thresholds_step: 0.01,
            ic_rule: IcRule::Frequency,
            workers: 0,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if let Some(m) = self.mode.mca() {
            self.mca(m, 0).validate()?;
        }
        Ok(())
    }

    fn mca(&self, mode: McaMode, seed: u64) -> McaConfig {
        McaConfig {
            perturb_exp: self.perturb_exp,
            ..McaConfig::new(mode, seed).with_precisions(self.t32, self.t64)
        }
    }

    pub fn vprec(&self) -> VprecConfig {
        VprecConfig {
            overflow_policy: self.overflow_policy,
            ..VprecConfig::new(self.fmt64, self.fmt32)
        }
    }

    /// Short row label: the mode, or the format pair for emulation runs.
    pub fn label(&self) -> String {
        match self.mode {
            Mode::Vprec => format!("({}, {})", self.fmt64, self.fmt32),
            m => m.name().to_string(),
        }
    }
}

/// Seed of perturbed iteration `iteration`, mixed from the campaign seed.
pub fn iteration_seed(seed: u64, iteration: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(iteration as u64))
}

/// Parsed, mutually consistent campaign inputs.
#[derive(Debug, Clone)]
pub struct CampaignInputs {
    pub model: Model,
    pub sequences: Vec<Sequence>,
    pub ontology: Ontology,
    /// Direct annotations per sequence.
    pub truths: Vec<BTreeSet<usize>>,
    /// Digest of the four input documents.
    pub digest: String,
}

impl CampaignInputs {
    pub fn load(files: &BenchmarkFiles) -> Result<Self, Error> {
        let model = io::read_model(&files.model)?;
        let sequences = io::read_fasta(&files.sequences)?;
        let ontology = io::read_ontology(&files.ontology)?;
        let pairs = io::read_annotations(&files.truths)?;
        let digest = io::digest_files(&[&files.model, &files.sequences, &files.ontology, &files.truths])?;
        Self::assemble(model, sequences, ontology, &pairs, digest)
    }

    /// Same digest as [`load`](Self::load) on the files written by
    /// [`Benchmark::write_to`].
    pub fn from_benchmark(b: &Benchmark) -> Result<Self, Error> {
        let digest = io::digest_bytes(&[
            io::format_model(&b.model).as_bytes(),
            io::format_fasta(&b.sequences).as_bytes(),
            io::format_ontology(&b.roots, &b.edges).as_bytes(),
            io::format_annotations(&b.annotations).as_bytes(),
        ]);
        Self::assemble(b.model.clone(), b.sequences.clone(), b.ontology()?, &b.annotations, digest)
    }

    fn assemble(
        model: Model,
        sequences: Vec<Sequence>,
        ontology: Ontology,
        pairs: &[(String, String)],
        digest: String,
    ) -> Result<Self, Error> {
        model.validate()?;
        if sequences.is_empty() {
            return Err(Error::Config("no sequences".into()));
        }
        for id in &model.class_ids {
            let c = ontology.index_of(id)?;
            if ontology.is_root(c) {
                return Err(Error::Config(format!("model predicts root class {id}")));
            }
        }
        let ids: Vec<String> = sequences.iter().map(|s| s.id.clone()).collect();
        let truths = io::annotation_sets(&ontology, &ids, pairs)?;
        Ok(CampaignInputs {
            model,
            sequences,
            ontology,
            truths,
            digest,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config: CampaignConfig,
    pub inputs_sha256: String,
    pub thresholds: usize,
    pub proteins: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationFailure {
    pub iteration: usize,
    /// `None` when the failure happened while loading weights.
    pub protein: Option<usize>,
    pub protein_id: Option<String>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub iterations_requested: usize,
    pub iterations_completed: usize,
    pub failures: Vec<IterationFailure>,
    /// False when no perturbed iteration completed.
    pub metrics_available: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: String,
    /// Mean unperturbed probability over proteins.
    pub reference_mean: f64,
    pub mean: Option<f64>,
    /// Mean over proteins of the across-iteration standard deviation.
    pub stddev: Option<f64>,
    /// Mean over proteins of the significant bits, capped at 24.
    pub significant_bits: Option<f64>,
    pub significant_digits: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Fmax,
    Smin,
    Aupr,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Fmax, Metric::Smin, Metric::Aupr];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Fmax => "fmax",
            Metric::Smin => "smin",
            Metric::Aupr => "aupr",
        }
    }

    fn of(self, m: &NamespaceMetrics) -> f64 {
        match self {
            Metric::Fmax => m.fmax,
            Metric::Smin => m.smin,
            Metric::Aupr => m.aupr,
        }
    }

    fn threshold_of(self, m: &NamespaceMetrics) -> Option<f64> {
        match self {
            Metric::Fmax => Some(m.fmax_threshold),
            Metric::Smin => Some(m.smin_threshold),
            Metric::Aupr => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub namespace: Namespace,
    pub metric: Metric,
    pub reference: f64,
    pub reference_threshold: Option<f64>,
    pub mean: Option<f64>,
    pub stddev: Option<f64>,
    pub significant_bits: Option<u32>,
    pub significant_digits: Option<f64>,
    /// One value per completed perturbed iteration.
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub status: Status,
    pub events: EventCounters,
    pub unknown_symbols: usize,
    pub confidence: Option<Confidence>,
    pub classes: Vec<ClassStats>,
    pub metrics: Vec<MetricStats>,
}

impl RunReport {
    pub fn metric(&self, ns: Namespace, metric: Metric) -> Option<&MetricStats> {
        self.metrics.iter().find(|m| m.namespace == ns && m.metric == metric)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn class_stats_csv(&self) -> String {
        let mut s = String::from("class,reference_mean,mean,stddev,significant_bits,significant_digits\n");
        for c in &self.classes {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                c.class,
                c.reference_mean,
                opt(c.mean),
                opt(c.stddev),
                opt(c.significant_bits),
                opt(c.significant_digits)
            );
        }
        s
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(
            "namespace,metric,reference,reference_threshold,mean,stddev,significant_bits,significant_digits\n",
        );
        for m in &self.metrics {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                m.namespace,
                m.metric,
                m.reference,
                opt(m.reference_threshold),
                opt(m.mean),
                opt(m.stddev),
                opt(m.significant_bits),
                opt(m.significant_digits)
            );
        }
        s
    }
}

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// A finished campaign: the report plus the raw prediction matrices.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub report: RunReport,
    pub reference: PredictionMatrix,
    /// Indexed by iteration - 1; `None` for failed iterations.
    pub iterations: Vec<Option<PredictionMatrix>>,
}

impl Campaign {
    /// `report.json`, `class_stats.csv`, `metrics.csv`, `predictions.tsv`
    /// (the reference pass) and `samples.tsv` (reference as iteration 0).
    pub fn write_to(&self, dir: &Path) -> Result<(), Error> {
        io::write_atomic(&dir.join("report.json"), self.report.to_json().as_bytes())?;
        io::write_atomic(&dir.join("class_stats.csv"), self.report.class_stats_csv().as_bytes())?;
        io::write_atomic(&dir.join("metrics.csv"), self.report.metrics_csv().as_bytes())?;
        io::write_atomic(&dir.join("predictions.tsv"), io::format_predictions(&self.reference).as_bytes())?;
        let runs = std::iter::once((0, &self.reference)).chain(
            self.iterations
                .iter()
                .enumerate()
                .filter_map(|(k, m)| m.as_ref().map(|m| (k + 1, m))),
        );
        io::write_atomic(&dir.join("samples.tsv"), io::format_samples(runs).as_bytes())
    }
}

type PassResult = Result<PredictionMatrix, IterationFailure>;

/// Run passes `iterations` over every protein, one context per
/// (iteration, protein) from `make`, weights loaded once per iteration by a
/// context from `make(iteration, u64::MAX)`.
fn run_passes<A, F>(inputs: &CampaignInputs, iterations: &[usize], make: F) -> (Vec<PassResult>, EventCounters)
where
    A: Arithmetic,
    F: Fn(usize, u64) -> A + Sync,
{
    let model = &inputs.model;
    let n = inputs.sequences.len();
    let loaded: Vec<(Result<Model, FormatError>, EventCounters)> = iterations
        .par_iter()
        .map(|&it| {
            let mut ctx = make(it, u64::MAX);
            let m = model.loaded(&mut ctx);
            (m, ctx.events())
        })
        .collect();
    let tasks: Vec<(usize, usize)> = (0..iterations.len())
        .filter(|&k| loaded[k].0.is_ok())
        .flat_map(|k| (0..n).map(move |p| (k, p)))
        .collect();
    let outputs: Vec<(Result<Vec<f64>, FormatError>, EventCounters)> = tasks
        .par_iter()
        .map(|&(k, p)| {
            let weights = loaded[k].0.as_ref().expect("filtered");
            let mut ctx = make(iterations[k], p as u64);
            let r = cnn::predict(weights, &inputs.sequences[p].residues, &mut ctx);
            (r, ctx.events())
        })
        .collect();

    let mut events = EventCounters::default();
    let mut out = Vec::with_capacity(iterations.len());
    let mut cursor = outputs.into_iter();
    for (k, &it) in iterations.iter().enumerate() {
        events += loaded[k].1;
        if let Err(e) = &loaded[k].0 {
            out.push(Err(IterationFailure {
                iteration: it,
                protein: None,
                protein_id: None,
                error: e.to_string(),
            }));
            continue;
        }
        let mut values = Vec::with_capacity(n * model.num_classes());
        let mut failure = None;
        for p in 0..n {
            let (r, ev) = cursor.next().expect("one output per task");
            events += ev;
            match r {
                Ok(v) if failure.is_none() => values.extend(v),
                Ok(_) => {}
                Err(e) => {
                    failure.get_or_insert(IterationFailure {
                        iteration: it,
                        protein: Some(p),
                        protein_id: Some(inputs.sequences[p].id.clone()),
                        error: e.to_string(),
                    });
                }
            }
        }
        out.push(match failure {
            Some(f) => Err(f),
            None => Ok(PredictionMatrix::new(
                inputs.sequences.iter().map(|s| s.id.clone()).collect(),
                model.class_ids.clone(),
                values,
            )),
        });
    }
    (out, events)
}

fn perturbed_passes(cfg: &CampaignConfig, inputs: &CampaignInputs) -> (Vec<PassResult>, EventCounters) {
    let its: Vec<usize> = (1..=cfg.iterations).collect();
    match cfg.mode {
        Mode::Ieee => run_passes(inputs, &its, |_, _| IeeeContext),
        Mode::Vprec => {
            let v = cfg.vprec();
            run_passes(inputs, &its, move |_, _| VprecContext::new(v))
        }
        m => {
            let mode = m.mca().expect("mca mode");
            run_passes(inputs, &its, |it, stream| {
                McaContext::new(cfg.mca(mode, iteration_seed(cfg.seed, it)), stream)
            })
        }
    }
}

fn class_stats(reference: &PredictionMatrix, runs: &[&PredictionMatrix]) -> Vec<ClassStats> {
    let (np, nc) = (reference.rows(), reference.cols());
    (0..nc)
        .map(|j| {
            let reference_mean = (0..np).map(|i| reference.get(i, j)).sum::<f64>() / np as f64;
            if runs.is_empty() {
                return ClassStats {
                    class: reference.class_ids[j].clone(),
                    reference_mean,
                    mean: None,
                    stddev: None,
                    significant_bits: None,
                    significant_digits: None,
                };
            }
            let (mut mean, mut sd, mut sd_n) = (0.0, 0.0, 0usize);
            let (mut bits, mut bits_n) = (0.0, 0usize);
            for i in 0..np {
                let col: Vec<f64> = runs.iter().map(|m| m.get(i, j)).collect();
                let (m, s) = sigdigits::sample_stats(&col);
                mean += m;
                if let Some(s) = s {
                    sd += s;
                    sd_n += 1;
                }
                if let Ok(b) = sigdigits::significant_bits(&col, reference.get(i, j)) {
                    bits += b.min(OUTPUT_BITS) as f64;
                    bits_n += 1;
                }
            }
            let significant_bits = (bits_n > 0).then(|| bits / bits_n as f64);
            ClassStats {
                class: reference.class_ids[j].clone(),
                reference_mean,
                mean: Some(mean / np as f64),
                stddev: (sd_n > 0).then(|| sd / sd_n as f64),
                significant_bits,
                significant_digits: significant_bits.map(sigdigits::bits_to_digits),
            }
        })
        .collect()
}

fn metric_stats(
    reference: &[(Namespace, NamespaceMetrics)],
    runs: &[Vec<(Namespace, NamespaceMetrics)>],
) -> Vec<MetricStats> {
    let mut out = Vec::new();
    for (k, (ns, r)) in reference.iter().enumerate() {
        for metric in Metric::ALL {
            let samples: Vec<f64> = runs.iter().map(|run| metric.of(&run[k].1)).collect();
            let reference = metric.of(r);
            let (mean, stddev, bits) = if samples.is_empty() {
                (None, None, None)
            } else {
                let (m, s) = sigdigits::sample_stats(&samples);
                let b = sigdigits::significant_bits(&samples, reference).ok().map(|b| b.min(METRIC_BITS));
                (Some(m), s, b)
            };
            out.push(MetricStats {
                namespace: *ns,
                metric,
                reference,
                reference_threshold: metric.threshold_of(r),
                mean,
                stddev,
                significant_bits: bits,
                significant_digits: bits.map(|b| sigdigits::bits_to_digits(b as f64)),
                samples,
            });
        }
    }
    out
}

/// Run a campaign in memory.
pub fn run_campaign(cfg: &CampaignConfig, inputs: &CampaignInputs) -> Result<Campaign, Error> {
    cfg.validate()?;
    let thresholds = crate::metrics::threshold_grid(cfg.thresholds_step)?;
    let evaluator = Evaluator::new(
        inputs.ontology.clone(),
        &inputs.model.class_ids,
        &inputs.truths,
        cfg.ic_rule,
        thresholds,
    )?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let (reference, (passes, events)) = pool.install(|| {
        let (mut r, _) = run_passes(inputs, &[0], |_, _| IeeeContext);
        (r.pop().expect("one pass"), perturbed_passes(cfg, inputs))
    });
    let reference = reference.map_err(|f| Error::Config(format!("reference pass failed: {}", f.error)))?;

    let mut failures = Vec::new();
    let mut iterations = Vec::with_capacity(passes.len());
    for p in passes {
        match p {
            Ok(m) => iterations.push(Some(m)),
            Err(f) => {
                log::warn!("iteration {} failed: {}", f.iteration, f.error);
                failures.push(f);
                iterations.push(None);
            }
        }
    }
    let done: Vec<&PredictionMatrix> = iterations.iter().flatten().collect();

    let ref_metrics = evaluator.evaluate(&reference)?;
    let run_metrics = done
        .iter()
        .map(|m| evaluator.evaluate(m))
        .collect::<Result<Vec<_>, _>>()?;

    let unknown_symbols = inputs
        .sequences
        .iter()
        .map(|s| encode_sequence(&s.residues, &inputs.model).unknown_symbols)
        .sum();

    let report = RunReport {
        provenance: Provenance {
            tool: "numlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            inputs_sha256: inputs.digest.clone(),
            thresholds: evaluator.thresholds().len(),
            proteins: inputs.sequences.len(),
            classes: inputs.model.num_classes(),
        },
        status: Status {
            iterations_requested: cfg.iterations,
            iterations_completed: done.len(),
            failures,
            metrics_available: !done.is_empty(),
        },
        events,
        unknown_symbols,
        confidence: sigdigits::confidence_for(done.len()),
        classes: class_stats(&reference, &done),
        metrics: metric_stats(&ref_metrics, &run_metrics),
    };
    Ok(Campaign {
        report,
        reference,
        iterations,
    })
}

/// One (run, namespace, metric) cell of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub label: String,
    pub mode: Mode,
    pub fmt64: Option<FloatFormat>,
    pub fmt32: Option<FloatFormat>,
    pub namespace: Namespace,
    pub metric: Metric,
    pub reference: f64,
    pub value: Option<f64>,
    /// `100 * (value - reference) / reference`; `None` when the run has no
    /// value or the reference is zero.
    pub delta_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub rows: Vec<DeltaRow>,
}

impl DeltaTable {
    pub fn labels(&self) -> Vec<&str> {
        let mut v: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !v.contains(&r.label.as_str()) {
                v.push(&r.label);
            }
        }
        v
    }

    /// Mean of `|delta_percent|` over a run's cells; `None` if any is missing.
    pub fn mean_abs_delta(&self, label: &str) -> Option<f64> {
        let cells: Vec<Option<f64>> = self
            .rows
            .iter()
            .filter(|r| r.label == label)
            .map(|r| r.delta_percent)
            .collect();
        if cells.is_empty() || cells.iter().any(Option::is_none) {
            return None;
        }
        Some(cells.iter().flatten().map(|d| d.abs()).sum::<f64>() / cells.len() as f64)
    }

    pub fn to_long_csv(&self) -> String {
        let mut s = String::from("label,mode,fmt64,fmt32,namespace,metric,reference,value,delta_percent\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "\"{}\",{},{},{},{},{},{},{},{}",
                r.label,
                r.mode,
                opt(r.fmt64),
                opt(r.fmt32),
                r.namespace,
                r.metric,
                r.reference,
                opt(r.value),
                opt(r.delta_percent)
            );
        }
        s
    }

    /// One line per run, one `namespace_metric` column per cell.
    pub fn to_wide_csv(&self) -> String {
        let labels = self.labels();
        let Some(first) = labels.first() else {
            return String::from("label\n");
        };
        let cols: Vec<(Namespace, Metric)> = self
            .rows
            .iter()
            .filter(|r| r.label == *first)
            .map(|r| (r.namespace, r.metric))
            .collect();
        let mut s = String::from("label,fmt64,fmt32");
        for (ns, m) in &cols {
            let _ = write!(s, ",{ns}_{m}_delta_percent");
        }
        s.push('\n');
        for label in labels {
            let rows: Vec<&DeltaRow> = self.rows.iter().filter(|r| r.label == label).collect();
            let _ = write!(s, "\"{label}\",{},{}", opt(rows[0].fmt64), opt(rows[0].fmt32));
            for (ns, m) in &cols {
                let d = rows.iter().find(|r| r.namespace == *ns && r.metric == *m).and_then(|r| r.delta_percent);
                let _ = write!(s, ",{}", opt(d));
            }
            s.push('\n');
        }
        s
    }
}

/// Percentage change of every metric mean relative to the reference
/// campaign's unperturbed values. All reports must come from the same
/// inputs, threshold grid and information-content rule.
pub fn compare_formats(reference: &RunReport, runs: &[RunReport]) -> Result<DeltaTable, Error> {
    let rp = &reference.provenance;
    let mut rows = Vec::new();
    for run in runs {
        let p = &run.provenance;
        let label = p.config.label();
        if p.inputs_sha256 != rp.inputs_sha256 {
            return Err(Error::ProvenanceMismatch(format!("{label}: different inputs")));
        }
        if p.config.thresholds_step != rp.config.thresholds_step || p.config.ic_rule != rp.config.ic_rule {
            return Err(Error::ProvenanceMismatch(format!("{label}: different scoring setup")));
        }
        for r in &reference.metrics {
            let m = run
                .metric(r.namespace, r.metric)
                .ok_or_else(|| Error::ProvenanceMismatch(format!("{label}: no {} {}", r.namespace, r.metric)))?;
            if m.reference.to_bits() != r.reference.to_bits() {
                return Err(Error::ProvenanceMismatch(format!(
                    "{label}: unperturbed {} {} differs",
                    r.namespace, r.metric
                )));
            }
            let delta_percent = match m.mean {
                Some(v) if r.reference != 0.0 => Some(100.0 * (v - r.reference) / r.reference),
                _ => None,
            };
            let vprec = p.config.mode == Mode::Vprec;
            rows.push(DeltaRow {
                label: label.clone(),
                mode: p.config.mode,
                fmt64: vprec.then_some(p.config.fmt64),
                fmt32: vprec.then_some(p.config.fmt32),
                namespace: r.namespace,
                metric: r.metric,
                reference: r.reference,
                value: m.mean,
                delta_percent,
            });
        }
    }
    Ok(DeltaTable { rows })
}

/// Format pairs that run to completion: binary64 replaced by binary32 or
/// bfloat16, binary32 by anything but bfloat8.
pub fn viable_format_pairs() -> Vec<(FloatFormat, FloatFormat)> {
    let mut v = Vec::new();
    for f64_ in [FloatFormat::BINARY32, FloatFormat::BFLOAT16] {
        for f32_ in [FloatFormat::BINARY32, FloatFormat::BINARY16, FloatFormat::BFLOAT16] {
            v.push((f64_, f32_));
        }
    }
    v
}

/// Every pair of reduced formats.
pub fn all_format_pairs() -> Vec<(FloatFormat, FloatFormat)> {
    let fmts = [FloatFormat::BINARY32, FloatFormat::BINARY16, FloatFormat::BFLOAT16, FloatFormat::BFLOAT8];
    fmts.iter().flat_map(|&a| fmts.iter().map(move |&b| (a, b))).collect()
}

/// Emulation configs for `pairs`, otherwise copying `base`.
pub fn sweep_configs(base: &CampaignConfig, pairs: &[(FloatFormat, FloatFormat)]) -> Vec<CampaignConfig> {
    pairs
        .iter()
        .map(|&(fmt64, fmt32)| CampaignConfig {
            mode: Mode::Vprec,
            fmt64,
            fmt32,
            ..base.clone()
        })
        .collect()
}
