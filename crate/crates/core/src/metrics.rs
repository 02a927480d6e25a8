//! Protein-function evaluation over an ontology: annotation propagation,
//! information content, and threshold-swept Fmax, Smin and AUPR.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cnn::PredictionMatrix;
use crate::error::Error;

/// Top-level ontology partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Namespace {
    #[serde(rename = "MF")]
    Mf,
    #[serde(rename = "CC")]
    Cc,
    #[serde(rename = "BP")]
    Bp,
}

impl Namespace {
    pub const ALL: [Namespace; 3] = [Namespace::Mf, Namespace::Cc, Namespace::Bp];

    pub fn label(self) -> &'static str {
        match self {
            Namespace::Mf => "MF",
            Namespace::Cc => "CC",
            Namespace::Bp => "BP",
        }
    }
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Namespace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mf" | "molecular_function" => Ok(Namespace::Mf),
            "cc" | "cellular_component" => Ok(Namespace::Cc),
            "bp" | "biological_process" => Ok(Namespace::Bp),
            _ => Err(Error::Ontology(format!("unknown namespace `{s}`"))),
        }
    }
}

/// Class DAG with one root per namespace. Edges point from child to parent.
#[derive(Debug, Clone)]
pub struct Ontology {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    namespace: Vec<Namespace>,
    is_root: Vec<bool>,
    /// Sorted, including the class itself.
    ancestors: Vec<Vec<usize>>,
}

impl Ontology {
    /// Classes are numbered roots first, then in order of first appearance
    /// in `edges`.
    pub fn new(roots: &[(String, Namespace)], edges: &[(String, String)]) -> Result<Self, Error> {
        let mut ids = Vec::new();
        let mut index = HashMap::new();
        let mut intern = |id: &str, ids: &mut Vec<String>| -> usize {
            *index.entry(id.to_string()).or_insert_with(|| {
                ids.push(id.to_string());
                ids.len() - 1
            })
        };

        let mut root_ns: Vec<Option<Namespace>> = Vec::new();
        for (id, ns) in roots {
            if root_ns.iter().flatten().any(|n| n == ns) {
                return Err(Error::Ontology(format!("second root for namespace {ns}")));
            }
            let i = intern(id, &mut ids);
            if i < root_ns.len() {
                return Err(Error::Ontology(format!("root `{id}` declared twice")));
            }
            root_ns.push(Some(*ns));
        }
        let mut pairs = Vec::with_capacity(edges.len());
        for (child, parent) in edges {
            if child == parent {
                return Err(Error::Ontology(format!("self-loop on `{child}`")));
            }
            pairs.push((intern(child, &mut ids), intern(parent, &mut ids)));
        }
        let index = index;
        let n = ids.len();
        root_ns.resize(n, None);

        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(c, p) in &pairs {
            if !parents[c].contains(&p) {
                parents[c].push(p);
                children[p].push(c);
            }
        }
        if let Some(r) = (0..n).find(|&i| root_ns[i].is_some() && !parents[i].is_empty()) {
            return Err(Error::Ontology(format!("root `{}` has a parent", ids[r])));
        }

        // Topological order, parents before children.
        let mut pending: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut order: Vec<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
        let mut head = 0;
        while head < order.len() {
            let c = order[head];
            head += 1;
            for &k in &children[c] {
                pending[k] -= 1;
                if pending[k] == 0 {
                    order.push(k);
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n).find(|&i| pending[i] > 0).unwrap();
            return Err(Error::Ontology(format!("cycle through `{}`", ids[stuck])));
        }

        let mut ancestors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &c in &order {
            let mut set: BTreeSet<usize> = BTreeSet::from([c]);
            for &p in &parents[c] {
                set.extend(&ancestors[p]);
            }
            ancestors[c] = set.into_iter().collect();
        }

        let mut namespace = Vec::with_capacity(n);
        for c in 0..n {
            let found: BTreeSet<Namespace> = ancestors[c].iter().filter_map(|&a| root_ns[a]).collect();
            match found.len() {
                1 => namespace.push(*found.first().unwrap()),
                0 => return Err(Error::Ontology(format!("`{}` reaches no root", ids[c]))),
                _ => {
                    return Err(Error::Ontology(format!(
                        "`{}` reaches more than one namespace",
                        ids[c]
                    )))
                }
            }
        }

        Ok(Ontology {
            ids,
            index,
            parents,
            namespace,
            is_root: root_ns.iter().map(Option::is_some).collect(),
            ancestors,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, class: usize) -> &str {
        &self.ids[class]
    }

    pub fn index_of(&self, id: &str) -> Result<usize, Error> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownClass(id.to_string()))
    }

    pub fn parents(&self, class: usize) -> &[usize] {
        &self.parents[class]
    }

    pub fn ancestors(&self, class: usize) -> &[usize] {
        &self.ancestors[class]
    }

    pub fn namespace(&self, class: usize) -> Namespace {
        self.namespace[class]
    }

    pub fn is_root(&self, class: usize) -> bool {
        self.is_root[class]
    }

    pub fn root(&self, ns: Namespace) -> Option<usize> {
        (0..self.len()).find(|&c| self.is_root[c] && self.namespace[c] == ns)
    }

    /// Close a set of class ids under the parent relation.
    pub fn propagate<S: AsRef<str>>(&self, direct: &[S]) -> Result<BTreeSet<usize>, Error> {
        let idx = direct
            .iter()
            .map(|s| self.index_of(s.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.propagate_indices(idx))
    }

    pub fn propagate_indices(&self, direct: impl IntoIterator<Item = usize>) -> BTreeSet<usize> {
        direct
            .into_iter()
            .flat_map(|c| self.ancestors[c].iter().copied())
            .collect()
    }

    /// Every class takes the maximum score over itself and its descendants.
    /// `scores` is indexed by class and assumed non-negative.
    pub fn propagate_scores(&self, scores: &[f64]) -> Vec<f64> {
        assert_eq!(scores.len(), self.len());
        let mut out = vec![0.0f64; self.len()];
        for (c, &s) in scores.iter().enumerate() {
            for &a in &self.ancestors[c] {
                if s > out[a] {
                    out[a] = s;
                }
            }
        }
        out
    }
}

/// Denominator used for information content.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IcRule {
    /// `-log2(n_c / n)`, `n` the proteins annotated in the class's namespace.
    #[default]
    Frequency,
    /// `-log2(n_c / n_parents)`, `n_parents` the proteins annotated with every
    /// parent of the class.
    ParentConditional,
}

/// Information content per ontology class, `None` where the class never
/// occurs in the corpus. Annotation sets are closed before counting.
pub fn information_content(
    ontology: &Ontology,
    corpus: &[BTreeSet<usize>],
    rule: IcRule,
) -> Result<Vec<Option<f64>>, Error> {
    if corpus.is_empty() {
        return Err(Error::Ontology("empty annotation corpus".into()));
    }
    let closed: Vec<BTreeSet<usize>> = corpus
        .iter()
        .map(|s| ontology.propagate_indices(s.iter().copied()))
        .collect();
    let count = |pred: &dyn Fn(&BTreeSet<usize>) -> bool| closed.iter().filter(|s| pred(s)).count();

    let ns_total: HashMap<Namespace, usize> = Namespace::ALL
        .iter()
        .filter_map(|&ns| ontology.root(ns).map(|r| (ns, count(&|s| s.contains(&r)))))
        .collect();

    Ok((0..ontology.len())
        .map(|c| {
            let n_c = count(&|s| s.contains(&c));
            if n_c == 0 {
                return None;
            }
            let denom = match rule {
                IcRule::Frequency => ns_total[&ontology.namespace(c)],
                IcRule::ParentConditional => {
                    count(&|s| ontology.parents(c).iter().all(|p| s.contains(p)))
                }
            };
            Some((denom as f64 / n_c as f64).log2())
        })
        .collect())
}

/// Evenly spaced thresholds `0, step, ..., 1`; `1 / step` must be an integer.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>, Error> {
    let n = (1.0 / step).round();
    if !(step > 0.0 && step <= 1.0) || (n * step - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "threshold step {step} does not divide [0, 1] evenly"
        )));
    }
    let n = n as usize;
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

/// Proteins x classes scoring problem in a compact class space.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationInstance {
    truths: Vec<BTreeSet<usize>>,
    scores: Vec<Vec<f64>>,
    ic: Vec<f64>,
    thresholds: Vec<f64>,
}

impl EvaluationInstance {
    /// `truths[i]` and `scores[i]` describe protein `i`; class indices run
    /// over `0..ic.len()`. Thresholds must be ascending within `[0, 1]`.
    pub fn new(
        truths: Vec<BTreeSet<usize>>,
        scores: Vec<Vec<f64>>,
        ic: Vec<f64>,
        thresholds: Vec<f64>,
    ) -> Result<Self, Error> {
        let c = ic.len();
        if truths.len() != scores.len() {
            return Err(Error::Config(format!(
                "{} truth sets for {} score rows",
                truths.len(),
                scores.len()
            )));
        }
        if scores.iter().any(|r| r.len() != c) {
            return Err(Error::Config(format!("score rows must have {c} classes")));
        }
        if truths.iter().flatten().any(|&k| k >= c) {
            return Err(Error::Config("truth class out of range".into()));
        }
        if ic.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("information content must be finite and non-negative".into()));
        }
        if thresholds.is_empty()
            || thresholds.iter().any(|t| !(0.0..=1.0).contains(t))
            || thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config("thresholds must be ascending within [0, 1]".into()));
        }
        Ok(EvaluationInstance {
            truths,
            scores,
            ic,
            thresholds,
        })
    }

    pub fn proteins(&self) -> usize {
        self.truths.len()
    }

    pub fn classes(&self) -> usize {
        self.ic.len()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn truths(&self) -> &[BTreeSet<usize>] {
        &self.truths
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn ic(&self) -> &[f64] {
        &self.ic
    }

    /// Classes predicted for protein `i` at threshold `t`.
    pub fn predicted(&self, i: usize, t: f64) -> impl Iterator<Item = usize> + '_ {
        self.scores[i]
            .iter()
            .enumerate()
            .filter(move |(_, &s)| s >= t)
            .map(|(c, _)| c)
    }
}

/// Averaged precision and recall at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    /// Zero when no protein has a prediction.
    pub precision: f64,
    pub recall: f64,
    /// Whether at least one protein had a non-empty prediction.
    pub precision_defined: bool,
}

pub fn precision_recall_at(inst: &EvaluationInstance, t: f64) -> PrecisionRecall {
    let (mut pr_sum, mut pr_n) = (0.0, 0usize);
    let (mut rc_sum, mut rc_n) = (0.0, 0usize);
    for i in 0..inst.proteins() {
        let truth = &inst.truths[i];
        let (mut predicted, mut hits) = (0usize, 0usize);
        for c in inst.predicted(i, t) {
            predicted += 1;
            hits += truth.contains(&c) as usize;
        }
        if predicted > 0 {
            pr_sum += hits as f64 / predicted as f64;
            pr_n += 1;
        }
        if !truth.is_empty() {
            rc_sum += hits as f64 / truth.len() as f64;
            rc_n += 1;
        }
    }
    PrecisionRecall {
        precision: if pr_n > 0 { pr_sum / pr_n as f64 } else { 0.0 },
        recall: if rc_n > 0 { rc_sum / rc_n as f64 } else { 0.0 },
        precision_defined: pr_n > 0,
    }
}

fn f_measure(pr: PrecisionRecall) -> f64 {
    let s = pr.precision + pr.recall;
    if s == 0.0 {
        0.0
    } else {
        2.0 * pr.precision * pr.recall / s
    }
}

/// Best F-measure and the smallest threshold attaining it.
pub fn fmax(inst: &EvaluationInstance) -> (f64, f64) {
    let mut best = (f64::NEG_INFINITY, inst.thresholds[0]);
    for &t in &inst.thresholds {
        let f = f_measure(precision_recall_at(inst, t));
        if f > best.0 {
            best = (f, t);
        }
    }
    best
}

/// Remaining uncertainty and misinformation at one threshold.
pub fn ru_mi_at(inst: &EvaluationInstance, t: f64) -> (f64, f64) {
    let n = inst.proteins();
    if n == 0 {
        return (0.0, 0.0);
    }
    let (mut ru, mut mi) = (0.0, 0.0);
    for i in 0..n {
        let truth = &inst.truths[i];
        let scores = &inst.scores[i];
        for &c in truth {
            if scores[c] < t {
                ru += inst.ic[c];
            }
        }
        for c in inst.predicted(i, t) {
            if !truth.contains(&c) {
                mi += inst.ic[c];
            }
        }
    }
    (ru / n as f64, mi / n as f64)
}

/// Smallest semantic distance and the smallest threshold attaining it.
pub fn smin(inst: &EvaluationInstance) -> (f64, f64) {
    let mut best = (f64::INFINITY, inst.thresholds[0]);
    for &t in &inst.thresholds {
        let (ru, mi) = ru_mi_at(inst, t);
        let s = ru.hypot(mi);
        if s < best.0 {
            best = (s, t);
        }
    }
    best
}

/// Trapezoidal area under a precision-recall curve given as
/// `(recall, precision)` points. Equal recalls keep the highest precision;
/// a curve not starting at recall 0 is extended flat to it.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    pts.dedup_by(|later, kept| later.0 == kept.0);
    let Some(&(r0, p0)) = pts.first() else {
        return 0.0;
    };
    if r0 > 0.0 {
        pts.insert(0, (0.0, p0));
    }
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Area under the precision-recall curve traced by the threshold sweep.
/// Thresholds where no protein has a prediction contribute no point.
pub fn aupr(inst: &EvaluationInstance) -> f64 {
    let points: Vec<(f64, f64)> = inst
        .thresholds
        .iter()
        .map(|&t| precision_recall_at(inst, t))
        .filter(|pr| pr.precision_defined)
        .map(|pr| (pr.recall, pr.precision))
        .collect();
    trapezoid_area(&points)
}

/// The three summary metrics for one namespace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NamespaceMetrics {
    pub fmax: f64,
    pub fmax_threshold: f64,
    pub smin: f64,
    pub smin_threshold: f64,
    pub aupr: f64,
}

pub fn evaluate(inst: &EvaluationInstance) -> NamespaceMetrics {
    let (fmax, fmax_threshold) = fmax(inst);
    let (smin, smin_threshold) = smin(inst);
    NamespaceMetrics {
        fmax,
        fmax_threshold,
        smin,
        smin_threshold,
        aupr: aupr(inst),
    }
}

/// Which proteins and ontology classes take part in one namespace's
/// evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct NamespaceSelection {
    pub namespace: Namespace,
    /// Ontology class indices, ascending. Roots and classes without
    /// information content are left out.
    pub classes: Vec<usize>,
    /// Prediction-matrix rows with at least one truth among `classes`.
    pub proteins: Vec<usize>,
    /// Classes of the namespace dropped for lack of information content.
    pub dropped_without_ic: Vec<usize>,
}

/// Fixed scoring frame shared by every iteration of a campaign: the
/// ontology, closed truth sets, information content, and threshold grid.
#[derive(Debug, Clone)]
pub struct Evaluator {
    ontology: Ontology,
    /// Ontology index of every prediction-matrix column.
    columns: Vec<usize>,
    truths: Vec<BTreeSet<usize>>,
    ic: Vec<Option<f64>>,
    thresholds: Vec<f64>,
    selections: Vec<NamespaceSelection>,
}

impl Evaluator {
    /// `truths[i]` lists the direct annotations of matrix row `i`.
    pub fn new(
        ontology: Ontology,
        class_ids: &[String],
        truths: &[BTreeSet<usize>],
        rule: IcRule,
        thresholds: Vec<f64>,
    ) -> Result<Self, Error> {
        let columns = class_ids
            .iter()
            .map(|id| ontology.index_of(id))
            .collect::<Result<Vec<_>, _>>()?;
        let truths: Vec<BTreeSet<usize>> = truths
            .iter()
            .map(|s| ontology.propagate_indices(s.iter().copied()))
            .collect();
        let ic = information_content(&ontology, &truths, rule)?;
        let mut selections = Vec::new();
        for ns in Namespace::ALL {
            let in_ns: Vec<usize> = (0..ontology.len())
                .filter(|&c| ontology.namespace(c) == ns && !ontology.is_root(c))
                .collect();
            let (classes, dropped): (Vec<usize>, Vec<usize>) =
                in_ns.into_iter().partition(|&c| ic[c].is_some());
            for &c in &dropped {
                log::warn!("{ns}: class {} has no annotations and is not scored", ontology.id(c));
            }
            let proteins = (0..truths.len())
                .filter(|&i| classes.iter().any(|c| truths[i].contains(c)))
                .collect::<Vec<_>>();
            if !proteins.is_empty() {
                selections.push(NamespaceSelection {
                    namespace: ns,
                    classes,
                    proteins,
                    dropped_without_ic: dropped,
                });
            }
        }
        // Validates the thresholds once up front.
        EvaluationInstance::new(vec![], vec![], vec![], thresholds.clone())?;
        Ok(Evaluator {
            ontology,
            columns,
            truths,
            ic,
            thresholds,
            selections,
        })
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn selections(&self) -> &[NamespaceSelection] {
        &self.selections
    }

    pub fn information_content(&self) -> &[Option<f64>] {
        &self.ic
    }

    /// Per-namespace scoring problems for one prediction matrix.
    pub fn instances(&self, predictions: &PredictionMatrix) -> Result<Vec<(Namespace, EvaluationInstance)>, Error> {
        if predictions.cols() != self.columns.len() || predictions.rows() != self.truths.len() {
            return Err(Error::Config(format!(
                "prediction matrix is {}x{}, expected {}x{}",
                predictions.rows(),
                predictions.cols(),
                self.truths.len(),
                self.columns.len()
            )));
        }
        let propagated: Vec<Vec<f64>> = (0..predictions.rows())
            .map(|i| {
                let mut raw = vec![0.0f64; self.ontology.len()];
                for (j, &c) in self.columns.iter().enumerate() {
                    raw[c] = raw[c].max(predictions.get(i, j));
                }
                self.ontology.propagate_scores(&raw)
            })
            .collect();
        self.selections
            .iter()
            .map(|sel| {
                let local: HashMap<usize, usize> =
                    sel.classes.iter().enumerate().map(|(k, &c)| (c, k)).collect();
                let truths = sel
                    .proteins
                    .iter()
                    .map(|&i| self.truths[i].iter().filter_map(|c| local.get(c).copied()).collect())
                    .collect();
                let scores = sel
                    .proteins
                    .iter()
                    .map(|&i| sel.classes.iter().map(|&c| propagated[i][c]).collect())
                    .collect();
                let ic = sel.classes.iter().map(|&c| self.ic[c].unwrap()).collect();
                EvaluationInstance::new(truths, scores, ic, self.thresholds.clone())
                    .map(|inst| (sel.namespace, inst))
            })
            .collect()
    }

    pub fn evaluate(&self, predictions: &PredictionMatrix) -> Result<Vec<(Namespace, NamespaceMetrics)>, Error> {
        Ok(self
            .instances(predictions)?
            .iter()
            .map(|(ns, inst)| (*ns, evaluate(inst)))
            .collect())
    }
}

/// Smallest distance between any score and any threshold; perturbations
/// below half of it cannot change a thresholded decision.
pub fn threshold_gap(scores: impl IntoIterator<Item = f64>, thresholds: &[f64]) -> f64 {
    let mut gap = f64::INFINITY;
    for s in scores {
        let k = thresholds.partition_point(|&t| t < s);
        if k < thresholds.len() {
            gap = gap.min(thresholds[k] - s);
        }
        if k > 0 {
            gap = gap.min(s - thresholds[k - 1]);
        }
    }
    gap
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn chain() -> Ontology {
        Ontology::new(
            &[("a".into(), Namespace::Mf)],
            &[("b".into(), "a".into()), ("c".into(), "b".into())],
        )
        .unwrap()
    }

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn propagate_chain() {
        let o = chain();
        let closed = o.propagate(&["c"]).unwrap();
        let ids: Vec<&str> = closed.iter().map(|&c| o.id(c)).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        assert_eq!(o.propagate_indices(closed.clone()), closed);
        assert!(matches!(o.propagate(&["zz"]), Err(Error::UnknownClass(_))));
    }

    #[test]
    fn ontology_rejects_bad_graphs() {
        let root = [("r".to_string(), Namespace::Mf)];
        let cyc = [("x".into(), "y".into()), ("y".into(), "x".into()), ("x".into(), "r".into())];
        assert!(Ontology::new(&root, &cyc).is_err());
        let orphan = [("x".into(), "y".into())];
        assert!(Ontology::new(&root, &orphan).is_err());
        let two = [("r".to_string(), Namespace::Mf), ("q".to_string(), Namespace::Bp)];
        let both = [("x".into(), "r".into()), ("x".into(), "q".into())];
        assert!(Ontology::new(&two, &both).is_err());
        assert!(Ontology::new(&[("r".into(), Namespace::Mf), ("q".into(), Namespace::Mf)], &[]).is_err());
    }

    #[test]
    fn score_propagation_takes_max_of_descendants() {
        let o = chain();
        let (a, b, c) = (o.index_of("a").unwrap(), o.index_of("b").unwrap(), o.index_of("c").unwrap());
        let mut raw = vec![0.0; 3];
        raw[c] = 0.7;
        raw[b] = 0.2;
        raw[a] = 0.1;
        let p = o.propagate_scores(&raw);
        assert_eq!((p[a], p[b], p[c]), (0.7, 0.7, 0.7));
    }

    #[test]
    fn ic_examples() {
        let o = chain();
        let c = o.index_of("c").unwrap();
        let b = o.index_of("b").unwrap();
        let corpus = vec![set(&[c]), set(&[b]), set(&[b]), set(&[b])];
        let ic = information_content(&o, &corpus, IcRule::Frequency).unwrap();
        assert_eq!(ic[o.index_of("a").unwrap()], Some(0.0));
        assert_eq!(ic[b], Some(0.0));
        assert_eq!(ic[c], Some(2.0));
        let cond = information_content(&o, &corpus, IcRule::ParentConditional).unwrap();
        assert_eq!(cond[c], Some(2.0));
        let sparse = information_content(&o, &[set(&[b])], IcRule::Frequency).unwrap();
        assert_eq!(sparse[c], None);
        assert!(information_content(&o, &[], IcRule::Frequency).is_err());
    }

    #[test]
    fn grid() {
        let g = threshold_grid(0.01).unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[100], 1.0);
        assert_eq!(g[37], 0.37);
        assert!(threshold_grid(0.03).is_err());
        assert!(threshold_grid(0.0).is_err());
    }

    /// T1 = {A}, T2 = {A, B}; p1 = (0.9, 0.1), p2 = (0.8, 0.6).
    fn two_protein() -> EvaluationInstance {
        EvaluationInstance::new(
            vec![set(&[0]), set(&[0, 1])],
            vec![vec![0.9, 0.1], vec![0.8, 0.6]],
            vec![1.0, 1.0],
            threshold_grid(0.01).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn two_protein_precision_recall() {
        let pr = precision_recall_at(&two_protein(), 0.7);
        assert_eq!((pr.precision, pr.recall), (1.0, 0.75));
        let pr = precision_recall_at(&two_protein(), 0.5);
        assert_eq!((pr.precision, pr.recall), (1.0, 1.0));
    }

    #[test]
    fn two_protein_fmax() {
        let inst = two_protein();
        let (f, t) = fmax(&inst);
        assert_eq!(f, 1.0);
        // Every threshold in (0.1, 0.6] recovers both proteins exactly; the
        // smallest one is reported.
        assert_eq!(t, 0.11);
        assert_eq!(f_measure(precision_recall_at(&inst, 0.5)), 1.0);
        assert_eq!(smin(&inst), (0.0, 0.11));
    }

    #[test]
    fn degenerate_predictors() {
        let g = threshold_grid(0.01).unwrap();
        let zero = EvaluationInstance::new(vec![set(&[0])], vec![vec![0.0, 0.0]], vec![2.0, 1.0], g.clone()).unwrap();
        let pr = precision_recall_at(&zero, 0.5);
        assert!(!pr.precision_defined);
        assert_eq!(pr.precision, 0.0);
        // At t = 0 every class is predicted; elsewhere nothing is.
        let inst = EvaluationInstance::new(vec![set(&[0])], vec![vec![0.0, 0.0]], vec![2.0, 1.0], g[1..].to_vec()).unwrap();
        assert_eq!(fmax(&inst).0, 0.0);
        assert_eq!(smin(&inst).0, 2.0);
        assert_eq!(aupr(&inst), 0.0);

        let perfect = EvaluationInstance::new(
            vec![set(&[0]), set(&[1])],
            vec![vec![0.9, 0.2], vec![0.1, 0.8]],
            vec![1.0, 1.0],
            g,
        )
        .unwrap();
        assert_eq!(fmax(&perfect).0, 1.0);
        assert_eq!(smin(&perfect).0, 0.0);
        assert_eq!(aupr(&perfect), 1.0);
    }

    #[test]
    fn trapezoid_examples() {
        assert_eq!(trapezoid_area(&[(0.0, 1.0), (1.0, 0.5)]), 0.75);
        assert_eq!(trapezoid_area(&[(1.0, 0.5), (0.0, 1.0)]), 0.75);
        assert_eq!(trapezoid_area(&[(0.5, 1.0), (0.5, 0.2), (1.0, 1.0)]), 1.0);
        assert_eq!(trapezoid_area(&[]), 0.0);
    }

    #[test]
    fn gap() {
        let g = [0.0, 0.5, 1.0];
        assert_eq!(threshold_gap([0.2, 0.45], &g), 0.04999999999999999);
        assert_eq!(threshold_gap([0.5], &g), 0.0);
    }

    #[test]
    fn evaluator_splits_namespaces() {
        let o = Ontology::new(
            &[("mf".into(), Namespace::Mf), ("bp".into(), Namespace::Bp)],
            &[("m1".into(), "mf".into()), ("b1".into(), "bp".into()), ("b2".into(), "b1".into())],
        )
        .unwrap();
        let cols = s(&["m1", "b1", "b2"]);
        let idx = |id: &str| o.index_of(id).unwrap();
        let truths = vec![set(&[idx("m1")]), set(&[idx("b2")]), set(&[idx("b1")])];
        let ev = Evaluator::new(o.clone(), &cols, &truths, IcRule::Frequency, threshold_grid(0.01).unwrap()).unwrap();
        let sel = ev.selections();
        assert_eq!(sel.len(), 2);
        assert_eq!(sel[0].namespace, Namespace::Mf);
        assert_eq!(sel[0].proteins, vec![0]);
        assert_eq!(sel[1].proteins, vec![1, 2]);
        let pm = PredictionMatrix::new(
            s(&["p0", "p1", "p2"]),
            cols,
            vec![0.9, 0.0, 0.0, 0.0, 0.0, 0.7, 0.0, 0.6, 0.0],
        );
        let res = ev.evaluate(&pm).unwrap();
        assert_eq!(res[0].1.fmax, 1.0);
        assert_eq!(res[1].1.fmax, 1.0);
        assert_eq!(res[1].1.fmax_threshold, 0.01);
    }

    fn random_dag() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..9).prop_flat_map(|n| {
            let edges = proptest::collection::vec((1..n, 0..n), 0..16)
                .prop_map(|v| v.into_iter().filter(|(c, p)| p < c).collect::<Vec<_>>());
            (Just(n), edges)
        })
    }

    proptest! {
        #[test]
        fn propagate_matches_reachability((n, edges) in random_dag(), direct in proptest::collection::vec(0usize..9, 0..4)) {
            // Class 0 is the root; every other class also hangs off 0.
            let mut all: Vec<(String, String)> = (1..n).map(|c| (c.to_string(), "0".to_string())).collect();
            all.extend(edges.iter().map(|(c, p)| (c.to_string(), p.to_string())));
            let o = Ontology::new(&[("0".into(), Namespace::Cc)], &all).unwrap();
            let mut reach = vec![vec![false; n]; n];
            for (i, row) in reach.iter_mut().enumerate() { row[i] = true; }
            for (c, p) in all.iter().map(|(c, p)| (c.parse::<usize>().unwrap(), p.parse::<usize>().unwrap())) {
                reach[c][p] = true;
            }
            for k in 0..n { for i in 0..n { for j in 0..n {
                if reach[i][k] && reach[k][j] { reach[i][j] = true; }
            }}}
            let direct: Vec<String> = direct.into_iter().filter(|&d| d < n).map(|d| d.to_string()).collect();
            let got: BTreeSet<String> = o.propagate(&direct).unwrap().into_iter().map(|c| o.id(c).to_string()).collect();
            let want: BTreeSet<String> = (0..n)
                .filter(|&j| direct.iter().any(|d| reach[d.parse::<usize>().unwrap()][j]))
                .map(|j| j.to_string())
                .collect();
            prop_assert_eq!(got, want);
        }

        #[test]
        fn ic_monotone_toward_root((n, edges) in random_dag(), corpus in proptest::collection::vec(proptest::collection::btree_set(0usize..9, 1..3), 1..8)) {
            let mut all: Vec<(String, String)> = (1..n).map(|c| (c.to_string(), "0".to_string())).collect();
            all.extend(edges.iter().map(|(c, p)| (c.to_string(), p.to_string())));
            let o = Ontology::new(&[("0".into(), Namespace::Bp)], &all).unwrap();
            let corpus: Vec<BTreeSet<usize>> = corpus
                .into_iter()
                .map(|s| s.into_iter().filter(|&c| c < n).map(|c| o.index_of(&c.to_string()).unwrap()).collect())
                .collect();
            let ic = information_content(&o, &corpus, IcRule::Frequency).unwrap();
            for c in 0..o.len() {
                if let Some(v) = ic[c] {
                    prop_assert!(v >= 0.0);
                    for &p in o.parents(c) {
                        prop_assert!(ic[p].unwrap() <= v);
                    }
                }
            }
        }

        #[test]
        fn recall_and_set_sizes_non_increasing(
            scores in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 4), 1..5),
            truths in proptest::collection::vec(proptest::collection::btree_set(0usize..4, 0..4), 5),
        ) {
            let n = scores.len();
            let inst = EvaluationInstance::new(truths[..n].to_vec(), scores, vec![1.0; 4], threshold_grid(0.05).unwrap()).unwrap();
            let mut last_rc = f64::INFINITY;
            let mut last_sizes = vec![usize::MAX; n];
            for &t in inst.thresholds() {
                let rc = precision_recall_at(&inst, t).recall;
                prop_assert!(rc <= last_rc);
                last_rc = rc;
                for (i, last) in last_sizes.iter_mut().enumerate() {
                    let k = inst.predicted(i, t).count();
                    prop_assert!(k <= *last);
                    *last = k;
                }
            }
        }

        #[test]
        fn small_perturbations_keep_fmax_and_smin(
            scores in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 1..5),
            truths in proptest::collection::vec(proptest::collection::btree_set(0usize..3, 1..3), 5),
            noise in proptest::collection::vec(-1.0f64..1.0, 15),
        ) {
            let n = scores.len();
            let grid = threshold_grid(0.01).unwrap();
            let gap = threshold_gap(scores.iter().flatten().copied(), &grid);
            prop_assume!(gap > 0.0);
            let shaken: Vec<Vec<f64>> = scores.iter().enumerate()
                .map(|(i, r)| r.iter().enumerate().map(|(j, &v)| v + noise[i * 3 + j] * gap * 0.49).collect())
                .collect();
            let a = EvaluationInstance::new(truths[..n].to_vec(), scores, vec![0.5, 1.0, 2.0], grid.clone()).unwrap();
            let b = EvaluationInstance::new(truths[..n].to_vec(), shaken, vec![0.5, 1.0, 2.0], grid).unwrap();
            prop_assert_eq!(fmax(&a), fmax(&b));
            prop_assert_eq!(smin(&a), smin(&b));
            prop_assert_eq!(aupr(&a), aupr(&b));
        }

        #[test]
        fn coarse_grid_aupr_matches_fine_grid(
            ks in proptest::collection::vec(proptest::collection::vec(0u32..=20, 4), 1..5),
            truths in proptest::collection::vec(proptest::collection::btree_set(0usize..4, 0..4), 5),
        ) {
            let n = ks.len();
            let scores: Vec<Vec<f64>> = ks.iter().map(|r| r.iter().map(|&k| k as f64 / 20.0).collect()).collect();
            let coarse = EvaluationInstance::new(truths[..n].to_vec(), scores.clone(), vec![1.0; 4], threshold_grid(0.01).unwrap()).unwrap();
            let fine = EvaluationInstance::new(truths[..n].to_vec(), scores, vec![1.0; 4], threshold_grid(1e-4).unwrap()).unwrap();
            prop_assert!((aupr(&coarse) - aupr(&fine)).abs() <= 1e-3);
        }
    }
}
