//! Tab-separated edge / attribute / label files.
//!
//! All three formats share the same conventions: one record per line, 0-based
//! ids, fields separated by tabs (any whitespace is accepted), blank lines and
//! `#` comments skipped.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use log::warn;

use super::network::AttributedNetwork;
use crate::error::{Error, Result};
use crate::numkernel::SparseMatrix;

pub const EDGES_FILE: &str = "edges.tsv";
pub const ATTRS_FILE: &str = "attributes.tsv";
pub const LABELS_FILE: &str = "labels.tsv";

/// Dimensions to enforce while loading. `None` infers from the largest id seen.
#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub n_classes: usize,
    pub n_nodes: Option<usize>,
    pub n_attrs: Option<usize>,
}

impl LoadOptions {
    pub fn new(n_classes: usize) -> Self {
        LoadOptions {
            n_classes,
            n_nodes: None,
            n_attrs: None,
        }
    }
}

/// A named text source; the name appears in parse errors.
pub struct Source<R> {
    pub name: String,
    pub reader: R,
}

impl<R: Read> Source<R> {
    pub fn new(name: impl Into<String>, reader: R) -> Self {
        Source {
            name: name.into(),
            reader,
        }
    }
}

pub fn open(path: &Path) -> Result<Source<fs::File>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(Source::new(path.display().to_string(), f))
}

struct Record {
    line: usize,
    fields: Vec<String>,
}

fn records<R: Read>(src: Source<R>) -> Result<(String, Vec<Record>)> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(src.reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&src.name, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(Record {
            line: k + 1,
            fields: t.split_whitespace().map(str::to_owned).collect(),
        });
    }
    Ok((src.name, out))
}

fn parse_err(name: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: name.to_owned(),
        line,
        msg: msg.into(),
    }
}

fn field_id(name: &str, r: &Record, k: usize, what: &str, bound: Option<usize>) -> Result<usize> {
    let raw = r
        .fields
        .get(k)
        .ok_or_else(|| parse_err(name, r.line, format!("missing {what}")))?;
    let id: usize = raw
        .parse()
        .map_err(|_| parse_err(name, r.line, format!("{what} {raw:?} is not a non-negative integer")))?;
    if let Some(b) = bound {
        if id >= b {
            return Err(parse_err(
                name,
                r.line,
                format!("{what} {id} out of range [0, {b})"),
            ));
        }
    }
    Ok(id)
}

fn field_value(name: &str, r: &Record, k: usize, default: f64) -> Result<f64> {
    match r.fields.get(k) {
        None => Ok(default),
        Some(raw) => {
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(name, r.line, format!("value {raw:?} is not numeric")))?;
            if !v.is_finite() {
                return Err(parse_err(name, r.line, format!("value {raw:?} is not finite")));
            }
            Ok(v)
        }
    }
}

fn check_arity(name: &str, r: &Record, min: usize, max: usize) -> Result<()> {
    if r.fields.len() < min || r.fields.len() > max {
        return Err(parse_err(
            name,
            r.line,
            format!("expected {min}..={max} fields, found {}", r.fields.len()),
        ));
    }
    Ok(())
}

/// Parse the three sources into a network. `labels` may be absent.
pub fn load_network<E: Read, A: Read, L: Read>(
    edges: Source<E>,
    attrs: Source<A>,
    labels: Option<Source<L>>,
    opts: LoadOptions,
) -> Result<AttributedNetwork> {
    let (ename, erecs) = records(edges)?;
    let (aname, arecs) = records(attrs)?;
    let lrecs = labels.map(records).transpose()?;

    let mut edge_list = Vec::with_capacity(erecs.len());
    let mut max_node = 0usize;
    for r in &erecs {
        check_arity(&ename, r, 2, 3)?;
        let i = field_id(&ename, r, 0, "source id", opts.n_nodes)?;
        let j = field_id(&ename, r, 1, "target id", opts.n_nodes)?;
        let w = field_value(&ename, r, 2, 1.0)?;
        if w < 0.0 {
            return Err(parse_err(&ename, r.line, "negative edge weight"));
        }
        max_node = max_node.max(i).max(j);
        if i == j {
            warn!("{ename}:{}: dropping self-loop on node {i}", r.line);
            continue;
        }
        if w > 0.0 {
            edge_list.push((i, j, w));
        }
    }
    if edge_list.is_empty() {
        return Err(Error::NoEdges);
    }

    let mut attr_list = Vec::with_capacity(arecs.len());
    let mut max_attr: Option<usize> = None;
    for r in &arecs {
        check_arity(&aname, r, 2, 3)?;
        let i = field_id(&aname, r, 0, "node id", opts.n_nodes)?;
        let a = field_id(&aname, r, 1, "attribute id", opts.n_attrs)?;
        let v = field_value(&aname, r, 2, 1.0)?;
        if v != 0.0 && v != 1.0 {
            return Err(parse_err(&aname, r.line, format!("attribute value {v} is not binary")));
        }
        max_node = max_node.max(i);
        max_attr = Some(max_attr.map_or(a, |m| m.max(a)));
        if v == 1.0 {
            attr_list.push((i, a));
        }
    }

    let mut label_list = Vec::new();
    if let Some((lname, lrecs)) = &lrecs {
        for r in lrecs {
            check_arity(lname, r, 2, 2)?;
            let v = field_id(lname, r, 0, "node id", opts.n_nodes)?;
            let k = field_id(lname, r, 1, "class", Some(opts.n_classes))?;
            max_node = max_node.max(v);
            label_list.push((r.line, v, k));
        }
    }

    let n = opts.n_nodes.unwrap_or(max_node + 1);
    let m = opts.n_attrs.unwrap_or(max_attr.map_or(1, |a| a + 1));

    let adjacency = SparseMatrix::from_triplets(
        n,
        n,
        edge_list
            .iter()
            .flat_map(|&(i, j, w)| [(i, j, w), (j, i, w)]),
    )?;
    // repeated attribute records collapse to a single binary entry
    let mut dedup = attr_list;
    dedup.sort_unstable();
    dedup.dedup();
    let attributes = SparseMatrix::from_triplets(n, m, dedup.into_iter().map(|(i, a)| (i, a, 1.0)))?;

    let mut labels = vec![None; n];
    if let Some((lname, _)) = &lrecs {
        for (line, v, k) in label_list {
            if let Some(prev) = labels[v] {
                if prev != k {
                    return Err(parse_err(
                        lname,
                        line,
                        format!("node {v} relabelled from {prev} to {k}"),
                    ));
                }
            }
            labels[v] = Some(k);
        }
    }
    AttributedNetwork::new(adjacency, attributes, labels, opts.n_classes)
}

/// Load from `edges.tsv`, `attributes.tsv` and (when present) `labels.tsv`.
pub fn load_network_files(
    edges: &Path,
    attrs: &Path,
    labels: Option<&Path>,
    opts: LoadOptions,
) -> Result<AttributedNetwork> {
    let lab = labels.map(open).transpose()?;
    load_network(open(edges)?, open(attrs)?, lab, opts)
}

/// Write the three files into `dir` in canonical order.
pub fn save_network(net: &AttributedNetwork, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(EDGES_FILE), |w| write_edges(net, w))?;
    write_file(&dir.join(ATTRS_FILE), |w| write_attrs(net, w))?;
    write_file(&dir.join(LABELS_FILE), |w| write_labels(net, w))?;
    Ok(())
}

pub(crate) fn write_file(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_edges(net: &AttributedNetwork, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "# src\tdst\tweight")?;
    for (i, j, wt) in net.edges() {
        if wt == 1.0 {
            writeln!(w, "{i}\t{j}")?;
        } else {
            writeln!(w, "{i}\t{j}\t{wt}")?;
        }
    }
    Ok(())
}

pub fn write_attrs(net: &AttributedNetwork, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "# node\tattr\tvalue")?;
    for (i, a, v) in net.attributes().triplets() {
        writeln!(w, "{i}\t{a}\t{v}")?;
    }
    Ok(())
}

pub fn write_labels(net: &AttributedNetwork, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "# node\tclass")?;
    for (v, l) in net.labels().iter().enumerate() {
        if let Some(k) = l {
            writeln!(w, "{v}\t{k}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src(s: &str) -> Source<&[u8]> {
        Source::new("mem", s.as_bytes())
    }

    fn load(e: &str, a: &str, l: Option<&str>, k: usize) -> Result<AttributedNetwork> {
        load_network(src(e), src(a), l.map(src), LoadOptions::new(k))
    }

    #[test]
    fn two_edges_store_four_entries() {
        let g = load("0\t1\n1\t2\n", "0\t0\t1\n", None, 2).unwrap();
        assert!(g.n_nodes() >= 3);
        assert_eq!(g.adjacency().nnz(), 4);
        assert!(g.adjacency().is_symmetric(0.0));
    }

    #[test]
    fn space_separated_and_comments() {
        let g = load("# header\n0 1\n\n1 2\n", "0 0\n", None, 2).unwrap();
        assert_eq!(g.n_edges(), 2);
    }

    #[test]
    fn empty_edges_rejected() {
        let err = load("# nothing\n", "0\t0\t1\n", None, 2).unwrap_err();
        assert_eq!(err.to_string(), "network has no edges");
    }

    #[test]
    fn duplicate_edge_is_summed() {
        let g = load("0\t1\n0\t1\n", "0\t0\t1\n", None, 2).unwrap();
        assert_eq!(g.adjacency().get(0, 1), 2.0);
        assert_eq!(g.adjacency().get(1, 0), 2.0);
        assert_eq!(g.adjacency_binary().get(0, 1), 1.0);
    }

    #[test]
    fn self_loop_dropped() {
        let g = load("0\t0\n0\t1\n", "0\t0\t1\n", None, 2).unwrap();
        assert_eq!(g.adjacency().get(0, 0), 0.0);
        assert_eq!(g.n_edges(), 1);
    }

    #[test]
    fn bad_fields_report_line() {
        let err = load("0\t1\n0\tx\n", "0\t0\t1\n", None, 2).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
        let err = load("0\t1\n", "0\t0\t1\n", Some("0\t0\n1\t5\n"), 2).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn out_of_range_id_with_fixed_size() {
        let opts = LoadOptions {
            n_classes: 2,
            n_nodes: Some(2),
            n_attrs: Some(1),
        };
        let err = load_network(src("0\t2\n"), src(""), None::<Source<&[u8]>>, opts).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn non_binary_attribute_rejected() {
        assert!(load("0\t1\n", "0\t0\t0.5\n", None, 2).is_err());
    }

    #[test]
    fn labels_are_partial() {
        let g = load("0\t1\n1\t2\n", "0\t0\n", Some("1\t1\n"), 2).unwrap();
        assert_eq!(g.labels(), &[None, Some(1), None]);
    }
}
