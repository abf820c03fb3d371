//! Significance ranking of primitive components within clusters, cluster
//! labelling, and use-case trace overlays.
//!
//! The score favours primitives with more interactions outside their own
//! cluster and, within the cluster, a higher ratio of outgoing to incoming
//! calls: `score = ext * (out_own + 1) / (in_own + 1)`.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::cluster::Clustering;
use crate::graph::{DependencyGraph, EdgeKind, MethodRef};
use crate::trace::TraceRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignificanceError {
    #[error("unknown primitive {0}")]
    UnknownPrimitive(String),
}

/// Edge tallies and the resulting score for one primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceScore {
    pub primitive: String,
    /// Unique edges (either direction) crossing the primitive's cluster
    /// boundary.
    pub ext: usize,
    /// Unique outgoing edges to same-cluster members.
    pub out_own: usize,
    /// Unique incoming edges from same-cluster members.
    pub in_own: usize,
    pub score: f64,
}

/// Scores one primitive against its cluster.
pub fn significance(
    primitive: &str,
    clustering: &Clustering,
    graph: &DependencyGraph,
) -> Result<SignificanceScore, SignificanceError> {
    let own = clustering
        .label_of(primitive)
        .ok_or_else(|| SignificanceError::UnknownPrimitive(primitive.to_string()))?;
    let mut ext = 0;
    let mut out_own = 0;
    let mut in_own = 0;
    for edge in graph.edges() {
        let (this, other, outgoing) = if edge.src.component == primitive {
            (&edge.src, &edge.dst, true)
        } else if edge.dst.component == primitive {
            (&edge.dst, &edge.src, false)
        } else {
            continue;
        };
        debug_assert_eq!(this.component, primitive);
        match clustering.label_of(&other.component) {
            Some(label) if label == own => {
                if outgoing {
                    out_own += 1;
                } else {
                    in_own += 1;
                }
            }
            // endpoints outside the clustering count as outside the cluster
            _ => ext += 1,
        }
    }
    let score = ext as f64 * (out_own as f64 + 1.0) / (in_own as f64 + 1.0);
    Ok(SignificanceScore { primitive: primitive.to_string(), ext, out_own, in_own, score })
}

/// Ranks a cluster's members by descending score (ties broken by name) and
/// joins the top `j` names with ", ". `j` is capped at the cluster size.
pub fn label_cluster(
    cluster: &[&str],
    clustering: &Clustering,
    graph: &DependencyGraph,
    j: usize,
) -> String {
    ranked_members(cluster, clustering, graph)
        .into_iter()
        .take(j.max(1))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Cluster members sorted by descending significance, ties by name.
pub fn ranked_members(
    cluster: &[&str],
    clustering: &Clustering,
    graph: &DependencyGraph,
) -> Vec<String> {
    let mut scored: Vec<(f64, String)> = cluster
        .iter()
        .map(|&name| {
            let score =
                significance(name, clustering, graph).map(|s| s.score).unwrap_or(0.0);
            (score, name.to_string())
        })
        .collect();
    scored.sort_by(|(sa, na), (sb, nb)| sb.total_cmp(sa).then_with(|| na.cmp(nb)));
    scored.into_iter().map(|(_, name)| name).collect()
}

/// Which use-case traces exercise a primitive and how strongly, on a 0..=1
/// scale relative to the most significant exercised primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct UseCaseAnnotation {
    pub primitive: String,
    pub use_cases: BTreeSet<String>,
    pub intensity: f64,
}

/// Intensity floor for primitives that are exercised by some trace but score
/// zero, keeping "exercised" distinguishable from "never touched".
const INTENSITY_FLOOR: f64 = 1e-12;

/// Annotates every primitive of the clustering with the use cases touching it
/// and an intensity derived from the significance metric restricted to the
/// subgraph those traces exercise.
///
/// Intensities are normalized by the maximum score over the clustering; when
/// scores tie at the maximum only the lexicographically smallest primitive
/// reports exactly 1.
pub fn overlay(
    clustering: &Clustering,
    graph: &DependencyGraph,
    usecases: &BTreeMap<String, Vec<TraceRecord>>,
) -> Vec<UseCaseAnnotation> {
    // Method-level pairs observed per use case, and the components each
    // use case touches.
    let mut case_pairs: BTreeMap<&str, BTreeSet<(MethodRef, MethodRef)>> = BTreeMap::new();
    let mut case_components: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (name, records) in usecases {
        let pairs = case_pairs.entry(name).or_default();
        let touched = case_components.entry(name).or_default();
        for record in records {
            touched.insert(&record.src_module);
            touched.insert(&record.dst_module);
            if record.src_module != record.dst_module {
                pairs.insert((
                    MethodRef::new(record.src_module.clone(), record.src_site.clone()),
                    MethodRef::new(record.dst_module.clone(), record.dst_site.clone()),
                ));
            }
        }
    }

    let mut annotations: Vec<UseCaseAnnotation> = Vec::new();
    let mut scores: Vec<f64> = Vec::new();
    for (primitive, _) in clustering.assignments() {
        let use_cases: BTreeSet<String> = case_components
            .iter()
            .filter(|(_, touched)| touched.contains(primitive))
            .map(|(name, _)| name.to_string())
            .collect();

        // Subgraph of the graph's dynamic edges that appear in the traces
        // exercising this primitive.
        let mut exercised: BTreeSet<&(MethodRef, MethodRef)> = BTreeSet::new();
        for case in &use_cases {
            exercised.extend(&case_pairs[case.as_str()]);
        }
        let mut subgraph = DependencyGraph::new();
        for edge in graph.edges() {
            if edge.kind == EdgeKind::Dynamic
                && exercised.contains(&(edge.src.clone(), edge.dst.clone()))
            {
                subgraph.add_edge(edge);
            }
        }
        let score = significance(primitive, clustering, &subgraph)
            .map(|s| s.score)
            .unwrap_or(0.0);
        scores.push(score);
        annotations.push(UseCaseAnnotation {
            primitive: primitive.to_string(),
            use_cases,
            intensity: 0.0,
        });
    }

    let max_score = scores.iter().cloned().fold(0.0f64, f64::max);
    let mut top_assigned = false;
    for (annotation, &score) in annotations.iter_mut().zip(&scores) {
        let mut intensity = if max_score > 0.0 { score / max_score } else { 0.0 };
        if intensity == 1.0 {
            if top_assigned {
                intensity = just_below_one();
            }
            top_assigned = true;
        }
        if intensity == 0.0 && !annotation.use_cases.is_empty() {
            intensity = INTENSITY_FLOOR;
        }
        annotation.intensity = intensity;
    }
    annotations
}

/// Largest f64 strictly below 1, used to demote tied maxima.
fn just_below_one() -> f64 {
    f64::from_bits(1.0f64.to_bits() - 1)
}

/// Renders annotations as `O <primitive> <intensity> <cases>` lines, with the
/// use-case list comma-joined or `-` when empty.
pub fn overlay_to_text(annotations: &[UseCaseAnnotation]) -> String {
    let mut out = String::new();
    for a in annotations {
        let cases = if a.use_cases.is_empty() {
            "-".to_string()
        } else {
            a.use_cases.iter().cloned().collect::<Vec<_>>().join(",")
        };
        out.push_str(&format!("O {} {:.4} {}\n", a.primitive, a.intensity, cases));
    }
    out
}

/// Parses the `O` line format produced by [`overlay_to_text`].
pub fn overlay_from_text(input: &str) -> Option<Vec<UseCaseAnnotation>> {
    let mut annotations = Vec::new();
    for raw in input.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "O" {
            return None;
        }
        let intensity: f64 = fields[2].parse().ok()?;
        let use_cases = if fields[3] == "-" {
            BTreeSet::new()
        } else {
            fields[3].split(',').map(String::from).collect()
        };
        annotations.push(UseCaseAnnotation {
            primitive: fields[1].to_string(),
            use_cases,
            intensity,
        });
    }
    Some(annotations)
}
