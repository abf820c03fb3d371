//! Dynamic trace file format, per-module symbol tables, and address
//! resolution.
//!
//! A trace file is line-oriented text. `#` starts a comment line and blank
//! lines are ignored. Two record kinds are understood:
//!
//! ```text
//! L <counter> <module> <base> <size>                       module load
//! C <counter> <src_module> <src_site> <dst_module> <dst_site>   control transfer
//! ```
//!
//! Counters are nonnegative integers and must be nondecreasing within one
//! file. Module identifiers are canonicalized to lower case at parse time.
//! Sites may already be symbolic (the tracer resolved them) or hexadecimal
//! `0x...` addresses to be resolved later against a symbol table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

/// One observed control transfer between two (module, site) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub counter: u64,
    pub src_module: String,
    pub src_site: String,
    pub dst_module: String,
    pub dst_site: String,
}

/// Loading of one executable image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleLoadRecord {
    pub counter: u64,
    pub module: String,
    pub base: u64,
    pub size: u64,
}

/// A single line of a trace file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Load(ModuleLoadRecord),
    Control(TraceRecord),
}

impl Record {
    pub fn counter(&self) -> u64 {
        match self {
            Record::Load(r) => r.counter,
            Record::Control(r) => r.counter,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("malformed trace record at line {0}")]
    MalformedTrace(usize),
    #[error("malformed symbol table entry at line {0}")]
    MalformedSymbols(usize),
    #[error("duplicate symbol address 0x{0:x}")]
    DuplicateAddress(u64),
}

/// Parses a `0x`-prefixed hexadecimal field.
pub fn parse_hex(field: &str) -> Option<u64> {
    let rest = field.strip_prefix("0x").or_else(|| field.strip_prefix("0X"))?;
    if rest.is_empty() {
        return None;
    }
    u64::from_str_radix(rest, 16).ok()
}

fn parse_counter(field: &str, line: usize) -> Result<u64, TraceError> {
    field.parse().map_err(|_| TraceError::MalformedTrace(line))
}

/// Parses a whole trace stream into records, in file order.
///
/// Line numbers in errors are 1-based physical line numbers. Counters are
/// validated nondecreasing across the file; a decrease is reported as
/// `MalformedTrace` at the offending line.
pub fn parse_trace_file(input: &str) -> Result<Vec<Record>, TraceError> {
    let mut records = Vec::new();
    let mut last_counter: Option<u64> = None;
    for (idx, raw) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let record = match fields[0] {
            "L" if fields.len() == 5 => {
                let counter = parse_counter(fields[1], lineno)?;
                let base = parse_hex(fields[3]).ok_or(TraceError::MalformedTrace(lineno))?;
                let size: u64 =
                    fields[4].parse().map_err(|_| TraceError::MalformedTrace(lineno))?;
                if size == 0 {
                    return Err(TraceError::MalformedTrace(lineno));
                }
                Record::Load(ModuleLoadRecord {
                    counter,
                    module: fields[2].to_lowercase(),
                    base,
                    size,
                })
            }
            "C" if fields.len() == 6 => {
                let counter = parse_counter(fields[1], lineno)?;
                Record::Control(TraceRecord {
                    counter,
                    src_module: fields[2].to_lowercase(),
                    src_site: fields[3].to_string(),
                    dst_module: fields[4].to_lowercase(),
                    dst_site: fields[5].to_string(),
                })
            }
            _ => return Err(TraceError::MalformedTrace(lineno)),
        };
        if let Some(prev) = last_counter {
            if record.counter() < prev {
                return Err(TraceError::MalformedTrace(lineno));
            }
        }
        last_counter = Some(record.counter());
        records.push(record);
    }
    Ok(records)
}

/// Renders records back to the trace file format, one line per record.
pub fn serialize_records(records: &[Record]) -> String {
    let mut out = String::new();
    for record in records {
        match record {
            Record::Load(r) => {
                writeln!(out, "L {} {} 0x{:x} {}", r.counter, r.module, r.base, r.size)
                    .unwrap();
            }
            Record::Control(r) => {
                writeln!(
                    out,
                    "C {} {} {} {} {}",
                    r.counter, r.src_module, r.src_site, r.dst_module, r.dst_site
                )
                .unwrap();
            }
        }
    }
    out
}

/// Convenience filter: just the control-transfer records of a parsed trace.
pub fn control_records(records: &[Record]) -> Vec<TraceRecord> {
    records
        .iter()
        .filter_map(|r| match r {
            Record::Control(t) => Some(t.clone()),
            Record::Load(_) => None,
        })
        .collect()
}

/// Per-module symbol table, sorted strictly ascending by address.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    pub module: String,
    entries: Vec<(u64, String)>,
}

impl SymbolTable {
    pub fn new(module: impl Into<String>) -> Self {
        SymbolTable { module: module.into(), entries: Vec::new() }
    }

    /// Builds a table from unsorted entries, rejecting duplicate addresses.
    pub fn from_entries(
        module: impl Into<String>,
        mut entries: Vec<(u64, String)>,
    ) -> Result<Self, TraceError> {
        entries.sort_by_key(|(addr, _)| *addr);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(TraceError::DuplicateAddress(pair[0].0));
            }
        }
        Ok(SymbolTable { module: module.into(), entries })
    }

    pub fn entries(&self) -> &[(u64, String)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Resolves an address to a text label.
    ///
    /// An exact match yields the symbol name, an address past a symbol yields
    /// `name+0x<offset>`, and an address before the first symbol (or any
    /// address in an empty table) yields the bare hexadecimal address.
    pub fn resolve_site(&self, address: u64) -> String {
        match self.entries.binary_search_by_key(&address, |(a, _)| *a) {
            Ok(i) => self.entries[i].1.clone(),
            Err(0) => format!("0x{:x}", address),
            Err(i) => {
                let (base, name) = &self.entries[i - 1];
                format!("{}+0x{:x}", name, address - base)
            }
        }
    }
}

/// Parses a symbol table stream of `<hex address> <name>` lines.
pub fn parse_symbol_table(input: &str, module: &str) -> Result<SymbolTable, TraceError> {
    let mut entries = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(TraceError::MalformedSymbols(lineno));
        }
        let addr = parse_hex(fields[0]).ok_or(TraceError::MalformedSymbols(lineno))?;
        entries.push((addr, fields[1].to_string()));
    }
    SymbolTable::from_entries(module.to_lowercase(), entries)
}

/// Loads every `<module>.sym` file in a directory into a table map keyed by
/// lower-case module name.
pub fn load_symbol_dir(
    dir: &std::path::Path,
) -> std::io::Result<Result<BTreeMap<String, SymbolTable>, TraceError>> {
    let mut tables = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("sym") {
            continue;
        }
        let module = match path.file_stem().and_then(|s| s.to_str()) {
            Some(stem) => stem.to_lowercase(),
            None => continue,
        };
        let text = std::fs::read_to_string(&path)?;
        match parse_symbol_table(&text, &module) {
            Ok(table) => {
                tables.insert(module, table);
            }
            Err(e) => return Ok(Err(e)),
        }
    }
    Ok(Ok(tables))
}
