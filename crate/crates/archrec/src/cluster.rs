//! Abstraction core: weighted object-attribute relation, term-document
//! frequency weighting, normalization, and greedy agglomerative
//! information-bottleneck merging with cut selection.
//!
//! Each primitive component is both an object and an attribute; the weight of
//! attribute `a` for object `o` encodes how many unique method-level edges
//! relate the two components. All information quantities use logarithm base 2
//! and are reported in bits.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::graph::DependencyGraph;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("cluster count {k} out of range 1..={n}")]
    BadK { k: usize, n: usize },
    #[error("malformed partition line {0}")]
    MalformedPartition(usize),
}

/// The weighted relation between objects and attributes. Absent weights mean
/// "no interaction" and stay absent through the weighting transforms.
///
/// Every object is also an attribute; objects occupy the first `len()`
/// attribute slots in order.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMatrix {
    objects: Vec<String>,
    attributes: Vec<String>,
    attribute_index: BTreeMap<String, usize>,
    rows: Vec<BTreeMap<usize, f64>>,
}

impl AttributeMatrix {
    pub fn new(objects: Vec<String>) -> Self {
        let mut attribute_index = BTreeMap::new();
        for (i, name) in objects.iter().enumerate() {
            let prev = attribute_index.insert(name.clone(), i);
            assert!(prev.is_none(), "duplicate object {name}");
        }
        let rows = vec![BTreeMap::new(); objects.len()];
        AttributeMatrix { attributes: objects.clone(), objects, attribute_index, rows }
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    fn object_index(&self, object: &str) -> usize {
        *self
            .attribute_index
            .get(object)
            .filter(|&&i| i < self.objects.len())
            .unwrap_or_else(|| panic!("unknown object {object}"))
    }

    /// Registers an attribute that is not an object; returns its index.
    pub fn add_attribute(&mut self, name: impl Into<String>) -> usize {
        let name = name.into();
        *self.attribute_index.entry(name.clone()).or_insert_with(|| {
            self.attributes.push(name);
            self.attributes.len() - 1
        })
    }

    /// Sets w(object, attribute). The attribute is registered if new.
    pub fn set_weight(&mut self, object: &str, attribute: &str, weight: f64) {
        assert!(
            weight >= 0.0 && weight.is_finite(),
            "weights must be finite and nonnegative"
        );
        let o = self.object_index(object);
        let a = match self.attribute_index.get(attribute) {
            Some(&a) => a,
            None => self.add_attribute(attribute.to_string()),
        };
        self.rows[o].insert(a, weight);
    }

    pub fn weight(&self, object: &str, attribute: &str) -> Option<f64> {
        let o = self.object_index(object);
        let a = *self.attribute_index.get(attribute)?;
        self.rows[o].get(&a).copied()
    }

    /// Present (object, attribute, weight) triples.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(move |(o, row)| {
            row.iter().map(move |(&a, &w)| {
                (self.objects[o].as_str(), self.attributes[a].as_str(), w)
            })
        })
    }

    /// A copy with every present weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> AttributeMatrix {
        assert!(c > 0.0, "scale factor must be positive");
        let mut scaled = self.clone();
        for row in &mut scaled.rows {
            for w in row.values_mut() {
                *w *= c;
            }
        }
        scaled
    }

    /// Applies smoothed term-document frequency weighting:
    /// `w'(o,a) = w(o,a) * log2(1 + |O| / df(a))` where `df(a)` counts the
    /// objects holding attribute `a`. Absent weights stay absent.
    pub fn tfidf(&self) -> AttributeMatrix {
        let n = self.objects.len() as f64;
        let mut df = vec![0usize; self.attributes.len()];
        for row in &self.rows {
            for &a in row.keys() {
                df[a] += 1;
            }
        }
        let mut out = self.clone();
        for row in &mut out.rows {
            for (&a, w) in row.iter_mut() {
                *w *= (1.0 + n / df[a] as f64).log2();
            }
        }
        out
    }

    /// Converts weights to the probabilistic form: uniform prior `p(o) = 1/n`
    /// and per-object conditional distributions `p(a|o)` over attributes.
    ///
    /// An object whose present weights sum to zero gets the uniform
    /// distribution over its held attributes; an object holding no attributes
    /// gets its own attribute with probability 1.
    pub fn normalize(&self) -> ProbModel {
        let n = self.objects.len();
        let priors = vec![1.0 / n as f64; n];
        let mut conditionals = Vec::with_capacity(n);
        for (o, row) in self.rows.iter().enumerate() {
            let sum: f64 = row.values().sum();
            let dist = if row.is_empty() {
                SparseDist::from_pairs(vec![(o, 1.0)])
            } else if sum > 0.0 {
                SparseDist::from_pairs(
                    row.iter()
                        .filter(|(_, &w)| w > 0.0)
                        .map(|(&a, &w)| (a, w / sum))
                        .collect(),
                )
            } else {
                let p = 1.0 / row.len() as f64;
                SparseDist::from_pairs(row.keys().map(|&a| (a, p)).collect())
            };
            conditionals.push(dist);
        }
        ProbModel {
            objects: self.objects.clone(),
            attributes: self.attributes.clone(),
            priors,
            conditionals,
        }
    }
}

/// Builds the object-attribute relation from a dependency graph.
///
/// The graph is interpreted as undirected: for distinct components C1, C2
/// with any edges between them, both w(C1,C2) and w(C2,C1) are set to the
/// number of unique edges in the two directions combined. No self-attribute
/// weight is set, and component pairs with no interaction stay absent.
pub fn build_matrix(graph: &DependencyGraph) -> AttributeMatrix {
    let mut matrix = AttributeMatrix::new(graph.components().map(String::from).collect());
    let mut totals: BTreeMap<(String, String), usize> = BTreeMap::new();
    for ((c1, c2), count) in graph.pair_counts() {
        let key = if c1 < c2 { (c1, c2) } else { (c2, c1) };
        *totals.entry(key).or_insert(0) += count;
    }
    for ((c1, c2), total) in totals {
        matrix.set_weight(&c1, &c2, total as f64);
        matrix.set_weight(&c2, &c1, total as f64);
    }
    matrix
}

/// A sparse probability distribution over attribute indices, sorted by index.
/// Zero-probability entries are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDist {
    entries: Vec<(usize, f64)>,
}

impl SparseDist {
    pub fn from_pairs(mut entries: Vec<(usize, f64)>) -> Self {
        entries.retain(|&(_, p)| p != 0.0);
        entries.sort_by_key(|&(a, _)| a);
        for pair in entries.windows(2) {
            assert!(pair[0].0 != pair[1].0, "duplicate attribute {}", pair[0].0);
        }
        SparseDist { entries }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self::from_pairs(
            values.iter().enumerate().filter(|(_, &p)| p != 0.0).map(|(a, &p)| (a, p)).collect(),
        )
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    fn total(&self) -> f64 {
        self.entries.iter().map(|&(_, p)| p).sum()
    }
}

/// Weighted Jensen-Shannon divergence in bits.
///
/// Returns `pi_p * KL(p || m) + pi_q * KL(q || m)` with the mixture
/// `m = pi_p * p + pi_q * q`; `0 * log(0/x)` is taken as 0. The mixture
/// weights must be positive and sum to 1.
pub fn js_divergence(p: &SparseDist, q: &SparseDist, pi_p: f64, pi_q: f64) -> f64 {
    debug_assert!(pi_p > 0.0 && pi_q > 0.0 && (pi_p + pi_q - 1.0).abs() < 1e-9);
    let mut kl_p = 0.0;
    let mut kl_q = 0.0;
    let (pe, qe) = (p.entries(), q.entries());
    let (mut i, mut j) = (0, 0);
    while i < pe.len() || j < qe.len() {
        let (pa, qa) = match (pe.get(i), qe.get(j)) {
            (Some(&(a, pa)), Some(&(b, qa))) if a == b => {
                i += 1;
                j += 1;
                (pa, qa)
            }
            (Some(&(a, pa)), Some(&(b, _))) if a < b => {
                i += 1;
                (pa, 0.0)
            }
            (Some(_), Some(&(_, qa))) => {
                j += 1;
                (0.0, qa)
            }
            (Some(&(_, pa)), None) => {
                i += 1;
                (pa, 0.0)
            }
            (None, Some(&(_, qa))) => {
                j += 1;
                (0.0, qa)
            }
            (None, None) => unreachable!(),
        };
        let m = pi_p * pa + pi_q * qa;
        if pa > 0.0 {
            kl_p += pa * (pa / m).log2();
        }
        if qa > 0.0 {
            kl_q += qa * (qa / m).log2();
        }
    }
    pi_p * kl_p + pi_q * kl_q
}

/// Information lost by merging two clusters with the given prior masses and
/// conditional attribute distributions:
/// `deltaI = (p_i + p_j) * JS(cond_i, cond_j, p_i/(p_i+p_j), p_j/(p_i+p_j))`.
pub fn info_loss(p_i: f64, cond_i: &SparseDist, p_j: f64, cond_j: &SparseDist) -> f64 {
    let mass = p_i + p_j;
    mass * js_divergence(cond_i, cond_j, p_i / mass, p_j / mass)
}

/// Normalized probabilistic form of an attribute matrix: uniform-ish priors
/// and one conditional distribution per object.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbModel {
    objects: Vec<String>,
    attributes: Vec<String>,
    priors: Vec<f64>,
    conditionals: Vec<SparseDist>,
}

impl ProbModel {
    /// Assembles a model from parts, checking the distribution invariants.
    pub fn from_parts(
        objects: Vec<String>,
        attributes: Vec<String>,
        priors: Vec<f64>,
        conditionals: Vec<SparseDist>,
    ) -> Self {
        assert_eq!(objects.len(), priors.len());
        assert_eq!(objects.len(), conditionals.len());
        let total: f64 = priors.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "priors must sum to 1");
        for dist in &conditionals {
            assert!((dist.total() - 1.0).abs() < 1e-9, "conditionals must sum to 1");
        }
        ProbModel { objects, attributes, priors, conditionals }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn conditionals(&self) -> &[SparseDist] {
        &self.conditionals
    }
}

/// Mutual information I(O;A) of a model in bits.
pub fn mutual_information(model: &ProbModel) -> f64 {
    let mut p_attr = vec![0.0f64; model.attributes.len()];
    for (prior, cond) in model.priors.iter().zip(&model.conditionals) {
        for &(a, pa) in cond.entries() {
            p_attr[a] += prior * pa;
        }
    }
    let mut mi = 0.0;
    for (prior, cond) in model.priors.iter().zip(&model.conditionals) {
        for &(a, pa) in cond.entries() {
            mi += prior * pa * (pa / p_attr[a]).log2();
        }
    }
    mi
}

/// One greedy merge: dendrogram ids of the merged clusters, the id of the
/// merged result, the information loss in bits, and the cluster count left
/// after the merge.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeStep {
    pub left: usize,
    pub right: usize,
    pub result: usize,
    pub delta_i: f64,
    pub remaining: usize,
}

/// Full greedy merge history. Leaves carry ids `0..n`, merge results carry
/// ids `n..2n-1` in merge order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    leaves: Vec<String>,
    steps: Vec<MergeStep>,
}

impl Dendrogram {
    pub fn leaves(&self) -> &[String] {
        &self.leaves
    }

    pub fn steps(&self) -> &[MergeStep] {
        &self.steps
    }

    /// Partition obtained by applying the first `merges` steps.
    pub fn cut(&self, merges: usize) -> Clustering {
        assert!(merges <= self.steps.len());
        let mut group: Vec<usize> = (0..self.leaves.len()).collect();
        for step in &self.steps[..merges] {
            for g in &mut group {
                if *g == step.left || *g == step.right {
                    *g = step.result;
                }
            }
        }
        let mut clusters: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
        for (leaf, &g) in group.iter().enumerate() {
            clusters.entry(g).or_default().push(&self.leaves[leaf]);
        }
        let mut ordered: Vec<Vec<&str>> = clusters.into_values().collect();
        ordered.sort_by(|a, b| a.iter().min().cmp(&b.iter().min()));
        let mut assignments = BTreeMap::new();
        for (label, members) in ordered.iter().enumerate() {
            for member in members {
                assignments.insert(member.to_string(), label);
            }
        }
        Clustering { k: ordered.len().max(1), assignments }
    }

    /// Renders the merge history as `M` lines, one per step.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, step) in self.steps.iter().enumerate() {
            out.push_str(&format!(
                "M {} {} {} -> {} dI={:.11e} k={}\n",
                i + 1,
                step.left,
                step.right,
                step.result,
                step.delta_i,
                step.remaining
            ));
        }
        out
    }
}

/// Greedy agglomerative information-bottleneck merge of a model down to one
/// cluster.
///
/// Every step merges the pair with minimal information loss; ties are broken
/// toward the lexicographically smallest pair of canonical cluster names
/// (the smallest member identifier of each cluster). The merged cluster gets
/// the summed prior and the prior-weighted mixture of the two conditionals.
pub fn aib_cluster(model: &ProbModel) -> Dendrogram {
    let n = model.len();
    let mut canon: Vec<String> = model.objects.clone();
    let mut prior: Vec<f64> = model.priors.clone();
    let mut cond: Vec<SparseDist> = model.conditionals.clone();
    let mut dend_id: Vec<usize> = (0..n).collect();
    let mut alive = vec![true; n];

    // Lower-triangle cache of pairwise merge costs, slot-indexed.
    let tri = |i: usize, j: usize| {
        debug_assert!(i > j);
        i * (i - 1) / 2 + j
    };
    let mut cost = vec![0.0f64; n * (n - 1) / 2];
    for i in 1..n {
        for j in 0..i {
            cost[tri(i, j)] = info_loss(prior[i], &cond[i], prior[j], &cond[j]);
        }
    }

    let canon_pair = |canon: &[String], i: usize, j: usize| -> (String, String) {
        if canon[i] <= canon[j] {
            (canon[i].clone(), canon[j].clone())
        } else {
            (canon[j].clone(), canon[i].clone())
        }
    };

    let mut steps = Vec::with_capacity(n.saturating_sub(1));
    let mut alive_count = n;
    for step_no in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, (String, String), usize, usize)> = None;
        for i in 1..n {
            if !alive[i] {
                continue;
            }
            for j in 0..i {
                if !alive[j] {
                    continue;
                }
                let d = cost[tri(i, j)];
                let take = match &best {
                    None => true,
                    Some((bd, bpair, _, _)) => {
                        d < *bd || (d == *bd && canon_pair(&canon, i, j) < *bpair)
                    }
                };
                if take {
                    best = Some((d, canon_pair(&canon, i, j), i, j));
                }
            }
        }
        let (delta_i, _, i, j) = best.expect("at least one live pair");

        let (left, right) = if canon[i] <= canon[j] {
            (dend_id[i], dend_id[j])
        } else {
            (dend_id[j], dend_id[i])
        };
        let result = n + step_no;
        alive_count -= 1;
        steps.push(MergeStep { left, right, result, delta_i, remaining: alive_count });

        // The merged cluster takes over slot j; slot i dies.
        let mass = prior[i] + prior[j];
        cond[j] = mix(prior[i], &cond[i], prior[j], &cond[j], mass);
        prior[j] = mass;
        if canon[i] < canon[j] {
            canon[j] = canon[i].clone();
        }
        dend_id[j] = result;
        alive[i] = false;
        for t in 0..n {
            if t == j || !alive[t] {
                continue;
            }
            let idx = if t > j { tri(t, j) } else { tri(j, t) };
            cost[idx] = info_loss(prior[t], &cond[t], prior[j], &cond[j]);
        }
    }
    Dendrogram { leaves: model.objects.clone(), steps }
}

/// Prior-weighted mixture of two sparse distributions.
fn mix(p_i: f64, cond_i: &SparseDist, p_j: f64, cond_j: &SparseDist, mass: f64) -> SparseDist {
    let (a, b) = (cond_i.entries(), cond_j.entries());
    let mut merged = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                merged.push((a[i].0, p_i * a[i].1 / mass));
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                merged.push((b[j].0, p_j * b[j].1 / mass));
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                merged.push((a[i].0, (p_i * a[i].1 + p_j * b[j].1) / mass));
                i += 1;
                j += 1;
            }
        }
    }
    merged.extend(a[i..].iter().map(|&(x, p)| (x, p_i * p / mass)));
    merged.extend(b[j..].iter().map(|&(x, p)| (x, p_j * p / mass)));
    SparseDist { entries: merged }
}

/// A partition of the objects into `k` clusters labelled `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    assignments: BTreeMap<String, usize>,
    k: usize,
}

impl Clustering {
    /// Builds a clustering from explicit assignments; labels must be
    /// contiguous starting at 0.
    pub fn from_assignments(assignments: BTreeMap<String, usize>) -> Option<Self> {
        if assignments.is_empty() {
            return Some(Clustering { assignments, k: 0 });
        }
        let k = assignments.values().max().unwrap() + 1;
        let mut seen = vec![false; k];
        for &label in assignments.values() {
            seen[label] = true;
        }
        if seen.iter().all(|&s| s) {
            Some(Clustering { assignments, k })
        } else {
            None
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn label_of(&self, object: &str) -> Option<usize> {
        self.assignments.get(object).copied()
    }

    pub fn contains(&self, object: &str) -> bool {
        self.assignments.contains_key(object)
    }

    pub fn assignments(&self) -> impl Iterator<Item = (&str, usize)> {
        self.assignments.iter().map(|(name, &label)| (name.as_str(), label))
    }

    /// Member lists indexed by cluster label.
    pub fn clusters(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.k];
        for (name, &label) in &self.assignments {
            out[label].push(name.as_str());
        }
        out
    }

    /// Renders the partition as `G <component> <cluster index>` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, label) in &self.assignments {
            out.push_str(&format!("G {} {}\n", name, label));
        }
        out
    }

    /// Parses `G` lines. Labels must be contiguous from 0.
    pub fn from_text(input: &str) -> Result<Self, ClusterError> {
        let mut assignments = BTreeMap::new();
        for (idx, raw) in input.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 || fields[0] != "G" {
                return Err(ClusterError::MalformedPartition(lineno));
            }
            let label: usize =
                fields[2].parse().map_err(|_| ClusterError::MalformedPartition(lineno))?;
            if assignments.insert(fields[1].to_string(), label).is_some() {
                return Err(ClusterError::MalformedPartition(lineno));
            }
        }
        Clustering::from_assignments(assignments).ok_or(ClusterError::MalformedPartition(0))
    }
}

/// Cuts the dendrogram into a clustering.
///
/// With `k` given the cut happens at exactly `k` clusters. With `k` absent
/// the cut is placed just before the merge step with the largest ratio
/// `delta_i(step) / max(delta_i(previous step), 1e-12)`, scanning steps in
/// merge order and ignoring steps with `delta_i < 1e-12` as candidates; if no
/// step qualifies, all merges are accepted (single cluster).
pub fn select_clustering(
    dendrogram: &Dendrogram,
    k: Option<usize>,
) -> Result<Clustering, ClusterError> {
    let n = dendrogram.leaves().len();
    match k {
        Some(k) => {
            if k < 1 || k > n {
                return Err(ClusterError::BadK { k, n });
            }
            Ok(dendrogram.cut(n - k))
        }
        None => {
            const EPS: f64 = 1e-12;
            let steps = dendrogram.steps();
            let mut best: Option<(f64, usize)> = None;
            for idx in 1..steps.len() {
                let delta = steps[idx].delta_i;
                if delta < EPS {
                    continue;
                }
                let ratio = delta / steps[idx - 1].delta_i.max(EPS);
                if best.map_or(true, |(r, _)| ratio > r) {
                    best = Some((ratio, idx));
                }
            }
            match best {
                Some((_, idx)) => Ok(dendrogram.cut(idx)),
                None => Ok(dendrogram.cut(steps.len())),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{DepEdge, EdgeKind, MethodRef};

    fn edge(sc: &str, sm: &str, dc: &str, dm: &str) -> DepEdge {
        DepEdge {
            src: MethodRef::new(sc, sm),
            dst: MethodRef::new(dc, dm),
            kind: EdgeKind::Dynamic,
            first_seen: Some(1),
        }
    }

    #[test]
    fn build_matrix_sums_both_directions() {
        let mut graph = DependencyGraph::new();
        graph.add_edge(edge("a", "f1", "b", "g1"));
        graph.add_edge(edge("a", "f2", "b", "g1"));
        graph.add_edge(edge("a", "f3", "b", "g2"));
        graph.add_edge(edge("b", "g9", "a", "f9"));
        let matrix = build_matrix(&graph);
        assert_eq!(matrix.weight("a", "b"), Some(4.0));
        assert_eq!(matrix.weight("b", "a"), Some(4.0));
    }

    #[test]
    fn build_matrix_leaves_missing_interactions_absent() {
        let mut graph = DependencyGraph::new();
        graph.add_edge(edge("a", "f", "b", "g"));
        graph.add_edge(edge("b", "h", "c", "i"));
        let matrix = build_matrix(&graph);
        assert_eq!(matrix.weight("a", "c"), None);
        assert_eq!(matrix.weight("a", "a"), None);
    }

    #[test]
    fn build_matrix_of_empty_graph_is_empty() {
        let matrix = build_matrix(&DependencyGraph::new());
        assert!(matrix.is_empty());
    }

    #[test]
    fn tfidf_formula() {
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let mut matrix = AttributeMatrix::new(names.clone());
        // attribute "a" held by all four objects, "b" held by one
        for o in &names {
            matrix.set_weight(o, "a", 2.0);
        }
        matrix.set_weight("a", "b", 1.0);
        let weighted = matrix.tfidf();
        assert!((weighted.weight("c", "a").unwrap() - 2.0).abs() < 1e-12);
        let expected = (5.0f64).log2();
        assert!((weighted.weight("a", "b").unwrap() - expected).abs() < 1e-12);
        assert_eq!(weighted.weight("b", "b"), None);
    }

    #[test]
    fn normalize_rows_and_priors() {
        let names: Vec<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        let mut matrix = AttributeMatrix::new(names);
        matrix.set_weight("a", "b", 2.0);
        matrix.set_weight("a", "c", 2.0);
        let model = matrix.normalize();
        assert!(model.priors().iter().all(|&p| (p - 0.2).abs() < 1e-12));
        let row = &model.conditionals()[0];
        assert_eq!(row.entries(), &[(1, 0.5), (2, 0.5)]);
    }

    #[test]
    fn normalize_isolated_object_gets_self_attribute() {
        let matrix = AttributeMatrix::new(vec!["a".into(), "b".into()]);
        let model = matrix.normalize();
        assert_eq!(model.conditionals()[0].entries(), &[(0, 1.0)]);
        assert_eq!(model.conditionals()[1].entries(), &[(1, 1.0)]);
    }

    #[test]
    fn normalize_zero_sum_row_is_uniform_over_held() {
        let mut matrix = AttributeMatrix::new(vec!["a".into(), "b".into(), "c".into()]);
        matrix.set_weight("a", "b", 0.0);
        matrix.set_weight("a", "c", 0.0);
        let model = matrix.normalize();
        assert_eq!(model.conditionals()[0].entries(), &[(1, 0.5), (2, 0.5)]);
    }

    #[test]
    fn js_divergence_values() {
        let p = SparseDist::from_dense(&[1.0, 0.0]);
        let q = SparseDist::from_dense(&[0.0, 1.0]);
        assert_eq!(js_divergence(&p, &p, 0.5, 0.5), 0.0);
        assert!((js_divergence(&p, &q, 0.5, 0.5) - 1.0).abs() < 1e-12);
        // 0.75*log2(4/3) + 0.25*log2(4) evaluated directly
        let expected = 0.75 * (4.0f64 / 3.0).log2() + 0.25 * 2.0;
        assert!((js_divergence(&p, &q, 0.75, 0.25) - expected).abs() < 1e-15);
        assert!((js_divergence(&p, &q, 0.75, 0.25) - 0.811278).abs() < 1e-6);
    }

    #[test]
    fn info_loss_matches_direct_cases() {
        let d = SparseDist::from_dense(&[0.25, 0.75]);
        assert_eq!(info_loss(0.3, &d, 0.7, &d), 0.0);
        let p = SparseDist::from_dense(&[1.0, 0.0]);
        let q = SparseDist::from_dense(&[0.0, 1.0]);
        assert!((info_loss(0.5, &p, 0.5, &q) - 1.0).abs() < 1e-12);
    }

    /// Independent route: deltaI must equal I(O;A) before minus after the
    /// merge, with the merged model rebuilt from scratch.
    #[test]
    fn info_loss_equals_mutual_information_drop() {
        let mut matrix = AttributeMatrix::new(vec!["a".into(), "b".into(), "c".into()]);
        matrix.set_weight("a", "b", 3.0);
        matrix.set_weight("b", "a", 3.0);
        matrix.set_weight("b", "c", 1.0);
        matrix.set_weight("c", "b", 1.0);
        matrix.set_weight("a", "c", 2.0);
        matrix.set_weight("c", "a", 2.0);
        let model = matrix.tfidf().normalize();
        let before = mutual_information(&model);

        let (pi, pj) = (model.priors()[0], model.priors()[1]);
        let loss = info_loss(pi, &model.conditionals()[0], pj, &model.conditionals()[1]);

        let mass = pi + pj;
        let merged = mix(pi, &model.conditionals()[0], pj, &model.conditionals()[1], mass);
        let after_model = ProbModel::from_parts(
            vec!["ab".into(), "c".into()],
            model.attributes.clone(),
            vec![mass, model.priors()[2]],
            vec![merged, model.conditionals()[2].clone()],
        );
        let after = mutual_information(&after_model);
        assert!((loss - (before - after)).abs() < 1e-12);
    }

    #[test]
    fn mutual_information_trivial_cases() {
        // identical rows carry no information about the object
        let mut matrix = AttributeMatrix::new(vec!["a".into(), "b".into(), "c".into()]);
        for o in ["a", "b", "c"] {
            matrix.set_weight(o, "a", 1.0);
            matrix.set_weight(o, "b", 1.0);
        }
        assert!(mutual_information(&matrix.normalize()).abs() < 1e-12);

        // two objects with disjoint single-attribute supports: 1 bit
        let model = ProbModel::from_parts(
            vec!["a".into(), "b".into()],
            vec!["a".into(), "b".into()],
            vec![0.5, 0.5],
            vec![SparseDist::from_dense(&[1.0, 0.0]), SparseDist::from_dense(&[0.0, 1.0])],
        );
        assert!((mutual_information(&model) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aib_singleton_has_no_steps() {
        let matrix = AttributeMatrix::new(vec!["only".into()]);
        let dendrogram = aib_cluster(&matrix.normalize());
        assert!(dendrogram.steps().is_empty());
        let clustering = select_clustering(&dendrogram, None).unwrap();
        assert_eq!(clustering.k(), 1);
    }

    #[test]
    fn aib_merges_identical_pairs_first() {
        // a/a2 share one profile, b/b2 another; the two zero-loss merges come
        // first and join the identical pairs, smallest names first.
        let names: Vec<String> =
            ["a", "a2", "b", "b2", "x", "y"].iter().map(|s| s.to_string()).collect();
        let mut matrix = AttributeMatrix::new(names);
        for o in ["a", "a2"] {
            matrix.set_weight(o, "x", 3.0);
        }
        for o in ["b", "b2"] {
            matrix.set_weight(o, "y", 2.0);
            matrix.set_weight(o, "x", 1.0);
        }
        matrix.set_weight("x", "a", 1.0);
        matrix.set_weight("y", "b", 1.0);
        let model = matrix.normalize();
        let dendrogram = aib_cluster(&model);
        let steps = dendrogram.steps();
        assert_eq!(steps.len(), 5);
        assert!(steps[0].delta_i.abs() < 1e-12);
        assert!(steps[1].delta_i.abs() < 1e-12);
        // leaves are indexed in object order: a=0, a2=1, b=2, b2=3
        assert_eq!((steps[0].left, steps[0].right), (0, 1));
        assert_eq!((steps[1].left, steps[1].right), (2, 3));
        assert_eq!(steps[0].remaining, 5);
    }

    #[test]
    fn merged_cluster_mixture_is_renormalized() {
        let p = SparseDist::from_dense(&[0.5, 0.5, 0.0]);
        let q = SparseDist::from_dense(&[0.0, 0.5, 0.5]);
        let mixed = mix(0.25, &p, 0.75, &q, 1.0);
        assert_eq!(mixed.entries(), &[(0, 0.125), (1, 0.5), (2, 0.375)]);
        assert!((mixed.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conservation_on_a_small_instance() {
        let mut matrix =
            AttributeMatrix::new(vec!["a".into(), "b".into(), "c".into(), "d".into()]);
        matrix.set_weight("a", "b", 5.0);
        matrix.set_weight("b", "a", 5.0);
        matrix.set_weight("c", "d", 4.0);
        matrix.set_weight("d", "c", 4.0);
        matrix.set_weight("b", "c", 1.0);
        matrix.set_weight("c", "b", 1.0);
        let model = matrix.tfidf().normalize();
        let total = mutual_information(&model);
        let dendrogram = aib_cluster(&model);
        let sum: f64 = dendrogram.steps().iter().map(|s| s.delta_i).sum();
        assert!((sum - total).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn select_clustering_explicit_k() {
        let mut matrix = AttributeMatrix::new(vec!["a".into(), "b".into(), "c".into()]);
        matrix.set_weight("a", "b", 1.0);
        matrix.set_weight("b", "a", 1.0);
        let dendrogram = aib_cluster(&matrix.normalize());
        let all = select_clustering(&dendrogram, Some(3)).unwrap();
        assert_eq!(all.k(), 3);
        assert_eq!(all.clusters().iter().map(|c| c.len()).max(), Some(1));
        let one = select_clustering(&dendrogram, Some(1)).unwrap();
        assert_eq!(one.k(), 1);
        assert_eq!(one.clusters()[0].len(), 3);
        assert_eq!(
            select_clustering(&dendrogram, Some(0)),
            Err(ClusterError::BadK { k: 0, n: 3 })
        );
        assert_eq!(
            select_clustering(&dendrogram, Some(4)),
            Err(ClusterError::BadK { k: 4, n: 3 })
        );
    }

    #[test]
    fn automatic_cut_recovers_planted_pair_structure() {
        // two tight groups with a weak bridge: the big-loss merge is last and
        // the cut lands just before it
        let names: Vec<String> =
            ["a1", "a2", "a3", "b1", "b2", "b3"].iter().map(|s| s.to_string()).collect();
        let mut matrix = AttributeMatrix::new(names.clone());
        let groups: [&[&str]; 2] = [&["a1", "a2", "a3"], &["b1", "b2", "b3"]];
        for group in groups {
            for &o in group {
                for &a in group {
                    if o != a {
                        matrix.set_weight(o, a, 6.0);
                    }
                }
            }
        }
        matrix.set_weight("a3", "b1", 1.0);
        matrix.set_weight("b1", "a3", 1.0);
        let model = matrix.tfidf().normalize();
        let clustering = select_clustering(&aib_cluster(&model), None).unwrap();
        assert_eq!(clustering.k(), 2);
        assert_eq!(clustering.label_of("a1"), clustering.label_of("a3"));
        assert_eq!(clustering.label_of("b1"), clustering.label_of("b3"));
        assert_ne!(clustering.label_of("a1"), clustering.label_of("b1"));
    }

    #[test]
    fn dendrogram_text_format() {
        let mut matrix = AttributeMatrix::new(vec!["a".into(), "b".into()]);
        matrix.set_weight("a", "b", 1.0);
        matrix.set_weight("b", "a", 1.0);
        let dendrogram = aib_cluster(&matrix.normalize());
        // a holds only attribute b and vice versa: disjoint supports, so the
        // single merge costs exactly one bit
        let text = dendrogram.to_text();
        assert_eq!(text, "M 1 0 1 -> 2 dI=1.00000000000e0 k=1\n");
    }

    #[test]
    fn clustering_text_round_trip() {
        let mut assignments = BTreeMap::new();
        assignments.insert("a".to_string(), 0);
        assignments.insert("b".to_string(), 1);
        assignments.insert("c".to_string(), 0);
        let clustering = Clustering::from_assignments(assignments).unwrap();
        let text = clustering.to_text();
        assert_eq!(text, "G a 0\nG b 1\nG c 0\n");
        assert_eq!(Clustering::from_text(&text).unwrap(), clustering);
    }

    #[test]
    fn clustering_rejects_gaps_and_duplicates() {
        assert!(Clustering::from_text("G a 0\nG b 2\n").is_err());
        assert!(Clustering::from_text("G a 0\nG a 0\n").is_err());
        assert!(Clustering::from_text("G a zero\n").is_err());
    }
}
