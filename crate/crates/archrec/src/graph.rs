//! Inter-component dependency graph built from trace records and static
//! imports.
//!
//! Nodes are primitive components (executables, DLLs). Edges are unique
//! directed method-level dependencies between distinct components; transfers
//! within one component are not stored.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::trace::{parse_hex, SymbolTable, TraceRecord};

/// A (component, method) pair naming one side of a dependency.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodRef {
    pub component: String,
    pub method: String,
}

impl MethodRef {
    pub fn new(component: impl Into<String>, method: impl Into<String>) -> Self {
        MethodRef { component: component.into(), method: method.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Dynamic,
    StaticImport,
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeKind::Dynamic => write!(f, "dynamic"),
            EdgeKind::StaticImport => write!(f, "static-import"),
        }
    }
}

/// One unique directed method-level dependency.
///
/// `first_seen` is the smallest trace counter at which the edge was observed;
/// static-import edges carry no counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepEdge {
    pub src: MethodRef,
    pub dst: MethodRef,
    pub kind: EdgeKind,
    pub first_seen: Option<u64>,
}

/// A static import relation: `importer` links against `imported` for the
/// given symbols. The synthetic label `<import>` is used as the caller site,
/// since import tables do not expose caller sites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticImport {
    pub importer: String,
    pub imported: String,
    pub symbols: Vec<String>,
}

pub const IMPORT_SITE: &str = "<import>";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("malformed graph line {0}")]
    MalformedGraph(usize),
}

type EdgeKey = (MethodRef, MethodRef, EdgeKind);

/// Primitive components and the unique directed method-level edges between
/// them. Immutable once built; cheap to share across threads.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependencyGraph {
    components: BTreeSet<String>,
    edges: BTreeMap<EdgeKey, Option<u64>>,
}

impl DependencyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds the graph from control-transfer records, resolving hexadecimal
    /// sites through the given symbol tables where available.
    ///
    /// Components are registered for every record endpoint, including
    /// records whose source and destination module coincide; such records
    /// produce no edge. Duplicate (src, dst) method pairs collapse to one
    /// edge keeping the minimum counter as `first_seen`.
    pub fn build(
        records: &[TraceRecord],
        tables: &BTreeMap<String, SymbolTable>,
    ) -> Self {
        let mut graph = DependencyGraph::new();
        for record in records {
            graph.components.insert(record.src_module.clone());
            graph.components.insert(record.dst_module.clone());
            if record.src_module == record.dst_module {
                continue;
            }
            let src = MethodRef::new(
                record.src_module.clone(),
                resolve_label(&record.src_module, &record.src_site, tables),
            );
            let dst = MethodRef::new(
                record.dst_module.clone(),
                resolve_label(&record.dst_module, &record.dst_site, tables),
            );
            let slot = graph
                .edges
                .entry((src, dst, EdgeKind::Dynamic))
                .or_insert(Some(record.counter));
            if let Some(prev) = *slot {
                if record.counter < prev {
                    *slot = Some(record.counter);
                }
            }
        }
        graph
    }

    /// Adds one static-import edge per (importer, imported, symbol).
    ///
    /// Dynamic edges are untouched and new components are registered as
    /// needed. Re-applying the same imports is a no-op. Degenerate
    /// self-imports are dropped.
    pub fn merge_static(&mut self, imports: &[StaticImport]) {
        for import in imports {
            if import.importer == import.imported {
                continue;
            }
            self.components.insert(import.importer.clone());
            self.components.insert(import.imported.clone());
            for symbol in &import.symbols {
                let src = MethodRef::new(import.importer.clone(), IMPORT_SITE);
                let dst = MethodRef::new(import.imported.clone(), symbol.clone());
                self.edges.insert((src, dst, EdgeKind::StaticImport), None);
            }
        }
    }

    /// Inserts a single edge, registering its endpoint components.
    ///
    /// Panics if the edge connects a component to itself.
    pub fn add_edge(&mut self, edge: DepEdge) {
        assert_ne!(
            edge.src.component, edge.dst.component,
            "edge endpoints must be distinct components"
        );
        self.components.insert(edge.src.component.clone());
        self.components.insert(edge.dst.component.clone());
        let key = (edge.src, edge.dst, edge.kind);
        match self.edges.entry(key) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(edge.first_seen);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let slot = o.get_mut();
                *slot = match (*slot, edge.first_seen) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
            }
        }
    }

    pub fn components(&self) -> impl Iterator<Item = &str> {
        self.components.iter().map(|s| s.as_str())
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn contains_component(&self, name: &str) -> bool {
        self.components.contains(name)
    }

    pub fn edges(&self) -> impl Iterator<Item = DepEdge> + '_ {
        self.edges.iter().map(|((src, dst, kind), first_seen)| DepEdge {
            src: src.clone(),
            dst: dst.clone(),
            kind: *kind,
            first_seen: *first_seen,
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of unique edges directed from component `c1` to component `c2`.
    pub fn directed_edge_count(&self, c1: &str, c2: &str) -> usize {
        self.edges
            .keys()
            .filter(|(src, dst, _)| src.component == c1 && dst.component == c2)
            .count()
    }

    /// Directed unique-edge counts for every ordered component pair with at
    /// least one edge, in one pass.
    pub fn pair_counts(&self) -> BTreeMap<(String, String), usize> {
        let mut counts = BTreeMap::new();
        for (src, dst, _) in self.edges.keys() {
            *counts
                .entry((src.component.clone(), dst.component.clone()))
                .or_insert(0) += 1;
        }
        counts
    }

    /// Renders the graph as sorted `E` lines, one per edge.
    pub fn to_text(&self) -> String {
        let mut lines: Vec<String> = self
            .edges
            .iter()
            .map(|((src, dst, kind), first_seen)| match first_seen {
                Some(counter) => format!(
                    "E {} {} {} {} {} {}",
                    kind, src.component, src.method, dst.component, dst.method, counter
                ),
                None => format!(
                    "E {} {} {} {} {}",
                    kind, src.component, src.method, dst.component, dst.method
                ),
            })
            .collect();
        lines.sort();
        let mut out = lines.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        out
    }

    /// Parses the `E` line format produced by [`to_text`].
    ///
    /// [`to_text`]: DependencyGraph::to_text
    pub fn from_text(input: &str) -> Result<Self, GraphError> {
        let mut graph = DependencyGraph::new();
        for (idx, raw) in input.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() || fields[0] != "E" {
                return Err(GraphError::MalformedGraph(lineno));
            }
            let (kind, first_seen) = match fields.get(1) {
                Some(&"dynamic") if fields.len() == 7 => {
                    let counter = fields[6]
                        .parse()
                        .map_err(|_| GraphError::MalformedGraph(lineno))?;
                    (EdgeKind::Dynamic, Some(counter))
                }
                Some(&"static-import") if fields.len() == 6 => {
                    (EdgeKind::StaticImport, None)
                }
                _ => return Err(GraphError::MalformedGraph(lineno)),
            };
            if fields[2] == fields[4] {
                return Err(GraphError::MalformedGraph(lineno));
            }
            graph.add_edge(DepEdge {
                src: MethodRef::new(fields[2], fields[3]),
                dst: MethodRef::new(fields[4], fields[5]),
                kind,
                first_seen,
            });
        }
        Ok(graph)
    }
}

/// Resolves a site label: hexadecimal sites go through the module's symbol
/// table when one exists, anything else is kept verbatim.
fn resolve_label(
    module: &str,
    site: &str,
    tables: &BTreeMap<String, SymbolTable>,
) -> String {
    match (parse_hex(site), tables.get(module)) {
        (Some(addr), Some(table)) => table.resolve_site(addr),
        _ => site.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::parse_symbol_table;

    fn rec(counter: u64, sm: &str, ss: &str, dm: &str, ds: &str) -> TraceRecord {
        TraceRecord {
            counter,
            src_module: sm.into(),
            src_site: ss.into(),
            dst_module: dm.into(),
            dst_site: ds.into(),
        }
    }

    #[test]
    fn duplicate_records_collapse_keeping_min_counter() {
        let records = vec![
            rec(9, "a.exe", "0x1", "b.dll", "0x2"),
            rec(3, "a.exe", "0x1", "b.dll", "0x2"),
        ];
        // nondecreasing check lives in the parser, not here
        let graph = DependencyGraph::build(&records, &BTreeMap::new());
        assert_eq!(graph.edge_count(), 1);
        let edge = graph.edges().next().unwrap();
        assert_eq!(edge.first_seen, Some(3));
    }

    #[test]
    fn intra_component_records_add_no_edge_but_register_component() {
        let records = vec![rec(1, "a.exe", "x", "a.exe", "y")];
        let graph = DependencyGraph::build(&records, &BTreeMap::new());
        assert_eq!(graph.edge_count(), 0);
        assert!(graph.contains_component("a.exe"));
    }

    #[test]
    fn unresolved_addresses_keep_hex_labels() {
        let records = vec![rec(1, "a.exe", "0x401000", "b.dll", "0x10001000")];
        let graph = DependencyGraph::build(&records, &BTreeMap::new());
        let edge = graph.edges().next().unwrap();
        assert_eq!(edge.src.method, "0x401000");
        assert_eq!(edge.dst.method, "0x10001000");
    }

    #[test]
    fn sites_resolve_through_tables() {
        let mut tables = BTreeMap::new();
        tables.insert(
            "b.dll".to_string(),
            parse_symbol_table("0x10001000 init\n", "b.dll").unwrap(),
        );
        let records = vec![rec(1, "a.exe", "boot", "b.dll", "0x10001004")];
        let graph = DependencyGraph::build(&records, &tables);
        let edge = graph.edges().next().unwrap();
        assert_eq!(edge.src.method, "boot");
        assert_eq!(edge.dst.method, "init+0x4");
    }

    #[test]
    fn merge_static_adds_components_and_is_idempotent() {
        let mut graph = DependencyGraph::new();
        let imports = vec![StaticImport {
            importer: "a.exe".into(),
            imported: "b.dll".into(),
            symbols: vec!["Foo".into()],
        }];
        graph.merge_static(&imports);
        assert_eq!(graph.component_count(), 2);
        assert_eq!(graph.edge_count(), 1);
        graph.merge_static(&imports);
        assert_eq!(graph.edge_count(), 1);
        let edge = graph.edges().next().unwrap();
        assert_eq!(edge.kind, EdgeKind::StaticImport);
        assert_eq!(edge.src.method, IMPORT_SITE);
        assert_eq!(edge.dst.method, "Foo");
        assert_eq!(edge.first_seen, None);
    }

    #[test]
    fn merge_static_empty_is_noop() {
        let records = vec![rec(1, "a.exe", "x", "b.dll", "y")];
        let mut graph = DependencyGraph::build(&records, &BTreeMap::new());
        let before = graph.to_text();
        graph.merge_static(&[]);
        assert_eq!(graph.to_text(), before);
    }

    #[test]
    fn directed_counts() {
        let records = vec![
            rec(1, "a.exe", "f", "b.dll", "g"),
            rec(2, "a.exe", "f", "b.dll", "h"),
            rec(3, "a.exe", "i", "b.dll", "g"),
        ];
        let graph = DependencyGraph::build(&records, &BTreeMap::new());
        assert_eq!(graph.directed_edge_count("a.exe", "b.dll"), 3);
        assert_eq!(graph.directed_edge_count("b.dll", "a.exe"), 0);
        assert_eq!(graph.directed_edge_count("a.exe", "zz.dll"), 0);
    }

    #[test]
    fn text_round_trip() {
        let records = vec![
            rec(4, "a.exe", "f", "b.dll", "g"),
            rec(7, "b.dll", "h", "c.dll", "0x10"),
        ];
        let mut graph = DependencyGraph::build(&records, &BTreeMap::new());
        graph.merge_static(&[StaticImport {
            importer: "a.exe".into(),
            imported: "c.dll".into(),
            symbols: vec!["Init".into(), "Shutdown".into()],
        }]);
        let text = graph.to_text();
        let reparsed = DependencyGraph::from_text(&text).unwrap();
        assert_eq!(reparsed.to_text(), text);
        assert_eq!(reparsed.edge_count(), 4);
    }

    #[test]
    fn from_text_rejects_bad_lines() {
        assert_eq!(
            DependencyGraph::from_text("E dynamic a.exe f b.dll g\n"),
            Err(GraphError::MalformedGraph(1))
        );
        assert_eq!(
            DependencyGraph::from_text("E wat a.exe f b.dll g 1\n"),
            Err(GraphError::MalformedGraph(1))
        );
        assert_eq!(
            DependencyGraph::from_text("E dynamic a.exe f a.exe g 1\n"),
            Err(GraphError::MalformedGraph(1))
        );
    }
}
