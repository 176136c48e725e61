//! Text formats: TSV edge lists and partitions, JSON run results, and
//! preprocessing of directed weight matrices.
//!
//! Files use 1-based node ids and group labels; everything in memory is 0-based.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BinaryGraph, NodePartition, WeightedGraph};

pub const RUN_RESULT_SCHEMA: u32 = 1;

/// Largest node count the edge-list parsers accept; graphs are stored densely.
pub const MAX_NODES: usize = 20_000;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

struct RawEdges {
    n: usize,
    edges: Vec<(usize, usize, Option<f64>)>,
}

fn parse_header(line_no: usize, body: &str) -> Result<Option<usize>> {
    let Some(rest) = body.trim().strip_prefix("n=") else {
        return Ok(None);
    };
    rest.trim()
        .parse::<usize>()
        .map_err(|_| parse_err(line_no, format!("bad node count {:?}", rest.trim())))
        .and_then(|n| check_size(line_no, n))
        .map(Some)
}

fn check_size(line_no: usize, n: usize) -> Result<usize> {
    if n > MAX_NODES {
        return Err(parse_err(line_no, format!("node count {n} exceeds the limit of {MAX_NODES}")));
    }
    Ok(n)
}

fn parse_id(line_no: usize, field: &str) -> Result<usize> {
    match field.parse::<usize>() {
        Ok(0) => Err(parse_err(line_no, "node ids start at 1")),
        Ok(v) => Ok(v - 1),
        Err(_) => Err(parse_err(line_no, format!("bad node id {field:?}"))),
    }
}

fn parse_edges(text: &str, weighted: bool) -> Result<RawEdges> {
    let mut declared = None;
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    let mut max_id = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if let Some(body) = line.strip_prefix('#') {
            if let Some(n) = parse_header(line_no, body)? {
                if declared.replace(n).is_some() {
                    return Err(parse_err(line_no, "node count declared twice"));
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let expected = if weighted { 3 } else { 2 };
        if fields.len() != expected {
            return Err(parse_err(line_no, format!("expected {expected} tab-separated fields, found {}", fields.len())));
        }
        let i = parse_id(line_no, fields[0])?;
        let j = parse_id(line_no, fields[1])?;
        if i == j {
            return Err(Error::SelfLoop { line: line_no, node: i + 1 });
        }
        let w = if weighted {
            let w: f64 = fields[2]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad weight {:?}", fields[2])))?;
            if !w.is_finite() {
                return Err(parse_err(line_no, "weight is not finite"));
            }
            if w == 0.0 {
                return Err(parse_err(line_no, "zero weight; absent edges are omitted"));
            }
            Some(w)
        } else {
            None
        };
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(Error::DuplicateEdge { line: line_no, i: i + 1, j: j + 1 });
        }
        max_id = check_size(line_no, max_id.max(i + 1).max(j + 1))?;
        if let Some(n) = declared {
            if max_id > n {
                return Err(parse_err(line_no, format!("node {max_id} exceeds declared n={n}")));
            }
        }
        edges.push((i, j, w));
    }
    Ok(RawEdges { n: declared.unwrap_or(max_id), edges })
}

pub fn parse_binary_edge_list(text: &str) -> Result<BinaryGraph> {
    let raw = parse_edges(text, false)?;
    Ok(BinaryGraph::from_edges(raw.n, raw.edges.into_iter().map(|(i, j, _)| (i, j))))
}

pub fn parse_weighted_edge_list(text: &str) -> Result<WeightedGraph> {
    let raw = parse_edges(text, true)?;
    let mut g = WeightedGraph::empty(raw.n);
    for (i, j, w) in raw.edges {
        g.set_weight(i, j, w.expect("weighted"));
    }
    Ok(g)
}

/// Writes `#n=N` then one `i\tj` line per edge in row-major order.
pub fn write_binary_edge_list(g: &BinaryGraph) -> String {
    let mut out = format!("#n={}\n", g.n());
    for (i, j) in g.edges() {
        out.push_str(&format!("{}\t{}\n", i + 1, j + 1));
    }
    out
}

/// Weights use the shortest decimal that parses back to the same `f64`.
pub fn write_weighted_edge_list(g: &WeightedGraph) -> String {
    let mut out = format!("#n={}\n", g.n());
    for (i, j, w) in g.present_edges() {
        out.push_str(&format!("{}\t{}\t{}\n", i + 1, j + 1, w));
    }
    out
}

/// Parses `node\tgroup` lines. `q` defaults to the largest group label.
pub fn parse_partition(text: &str, q: Option<usize>) -> Result<NodePartition> {
    let mut entries: Vec<(usize, usize, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(parse_err(line_no, format!("expected 2 tab-separated fields, found {}", fields.len())));
        }
        let node = parse_id(line_no, fields[0])?;
        let group = match fields[1].parse::<usize>() {
            Ok(0) | Err(_) => return Err(parse_err(line_no, format!("bad group {:?}", fields[1]))),
            Ok(g) => g - 1,
        };
        entries.push((line_no, node, group));
    }
    let n = entries.len();
    if n == 0 {
        return Err(parse_err(0, "partition is empty"));
    }
    let mut labels = vec![usize::MAX; n];
    for &(line_no, node, group) in &entries {
        if node >= n {
            return Err(parse_err(line_no, format!("node {} outside 1..{n}", node + 1)));
        }
        if labels[node] != usize::MAX {
            return Err(parse_err(line_no, format!("node {} listed twice", node + 1)));
        }
        labels[node] = group;
    }
    let max_group = labels.iter().max().map_or(0, |g| g + 1);
    let q = q.unwrap_or(max_group);
    if let Some(&(line_no, _, group)) = entries.iter().find(|e| e.2 >= q) {
        return Err(parse_err(line_no, format!("group {} outside 1..{q}", group + 1)));
    }
    NodePartition::new(labels, q)
}

pub fn write_partition(z: &NodePartition) -> String {
    let mut out = String::new();
    for (i, &g) in z.labels().iter().enumerate() {
        out.push_str(&format!("{}\t{}\n", i + 1, g + 1));
    }
    out
}

/// Result document written by `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResultFile {
    pub schema_version: u32,
    pub version: String,
    pub method: String,
    pub n: usize,
    pub q: usize,
    pub seed: u64,
    pub estimates: BTreeMap<String, f64>,
    /// Composite log-likelihood, where the method defines one.
    pub loglik: Option<f64>,
    pub criterion: Option<f64>,
    pub pi_hat: Option<Vec<f64>>,
    /// 1-based group label per node.
    pub partition: Option<Vec<usize>>,
    /// `(u, v)` of the label-swap criterion, weighted runs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swap_choice: Option<(u8, u8)>,
    pub warnings: Vec<String>,
}

impl RunResultFile {
    pub fn new(method: &str, n: usize, q: usize, seed: u64) -> Self {
        RunResultFile {
            schema_version: RUN_RESULT_SCHEMA,
            version: crate::VERSION.to_string(),
            method: method.to_string(),
            n,
            q,
            seed,
            estimates: BTreeMap::new(),
            loglik: None,
            criterion: None,
            pi_hat: None,
            partition: None,
            swap_choice: None,
            warnings: Vec::new(),
        }
    }

    pub fn set_partition(&mut self, z: &NodePartition) {
        self.partition = Some(z.labels().iter().map(|g| g + 1).collect());
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: RunResultFile = serde_json::from_str(text)?;
        if r.schema_version != RUN_RESULT_SCHEMA {
            return Err(parse_err(1, format!("unsupported schema_version {}", r.schema_version)));
        }
        Ok(r)
    }
}

/// Parses a whitespace-separated numeric matrix, one row per line.
pub fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|f| f.parse::<f64>().map_err(|_| parse_err(idx + 1, format!("bad number {f:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// `w(i,j) = (a_ij + a_ji) / 2` over a square nonnegative matrix; the diagonal is dropped.
pub fn symmetrize_mean(a: &[Vec<f64>]) -> Result<WeightedGraph> {
    let n = a.len();
    if let Some(row) = a.iter().find(|r| r.len() != n) {
        return Err(Error::SizeMismatch { expected: n, actual: row.len() });
    }
    if a.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain("matrix entries must be finite and nonnegative".into()));
    }
    let mut g = WeightedGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            g.set_weight(i, j, 0.5 * (a[i][j] + a[j][i]));
        }
    }
    Ok(g)
}

/// Off-diagonal entries of `L = I - D^{-1/2} A D^{-1/2}` on the present edges,
/// i.e. `-w_ij / sqrt(d_i d_j)` with `d` the weighted degrees.
pub fn normalized_laplacian_weights(g: &WeightedGraph) -> Result<WeightedGraph> {
    let n = g.n();
    let mut degree = vec![0.0; n];
    for (i, j, w) in g.present_edges() {
        degree[i] += w;
        degree[j] += w;
    }
    if let Some(i) = degree.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IsolatedNode(i));
    }
    let mut out = WeightedGraph::empty(n);
    for (i, j, w) in g.present_edges() {
        out.set_weight(i, j, -w / (degree[i] * degree[j]).sqrt());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph_from_header() {
        let g = parse_binary_edge_list("#n=3\n1\t2\n1\t3\n").unwrap();
        assert_eq!(g.n(), 3);
        assert!(g.has_edge(0, 1) && g.has_edge(0, 2) && !g.has_edge(1, 2));
        let inferred = parse_binary_edge_list("1\t2\n1\t3\n").unwrap();
        assert_eq!(inferred, g);
        let padded = parse_binary_edge_list("#n=5\n1\t2\n").unwrap();
        assert_eq!(padded.n(), 5);
    }

    #[test]
    fn parse_errors_carry_lines() {
        assert_eq!(parse_binary_edge_list("1\t2\n2\t2\n"), Err(Error::SelfLoop { line: 2, node: 2 }));
        assert_eq!(
            parse_binary_edge_list("1\t2\n# c\n2\t1\n"),
            Err(Error::DuplicateEdge { line: 3, i: 2, j: 1 })
        );
        for bad in ["1 2\n", "0\t1\n", "1\tx\n", "#n=2\n1\t3\n", "1\t2\t0.5\n", "#n=q\n", "#n=99999999999\n", "1\t20001\n"] {
            assert!(matches!(parse_binary_edge_list(bad), Err(Error::Parse { line: 1 | 2, .. })), "{bad:?}");
        }
        for bad in ["1\t2\n", "1\t2\tnan\n", "1\t2\t0\n", "1\t2\tinf\n"] {
            assert!(matches!(parse_weighted_edge_list(bad), Err(Error::Parse { line: 1, .. })), "{bad:?}");
        }
    }

    #[test]
    fn weighted_round_trip_is_exact() {
        let mut g = WeightedGraph::empty(4);
        g.set_weight(0, 1, 0.1 + 0.2);
        g.set_weight(0, 3, -1.0 / 3.0);
        g.set_weight(2, 3, 1e-300);
        g.set_weight(1, 2, 123456789.12345679);
        let text = write_weighted_edge_list(&g);
        let back = parse_weighted_edge_list(&text).unwrap();
        for ((_, _, a), (_, _, b)) in g.pairs().zip(back.pairs()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(write_weighted_edge_list(&back), text);
    }

    #[test]
    fn partition_round_trip_and_errors() {
        let z = NodePartition::new(vec![0, 1, 1, 0, 2], 3).unwrap();
        let text = write_partition(&z);
        assert_eq!(text, "1\t1\n2\t2\n3\t2\n4\t1\n5\t3\n");
        assert_eq!(parse_partition(&text, None).unwrap(), z);
        assert!(parse_partition("1\t1\n1\t2\n", None).is_err());
        assert!(parse_partition("1\t1\n3\t2\n", None).is_err());
        assert!(parse_partition("1\t0\n", None).is_err());
        assert!(parse_partition("1\t3\n2\t1\n", Some(2)).is_err());
        assert!(parse_partition("", None).is_err());
        assert_eq!(parse_partition("2\t1\n1\t1\n", Some(2)).unwrap().q(), 2);
    }

    #[test]
    fn run_result_reloads() {
        let mut r = RunResultFile::new("moments", 3, 2, 9);
        r.estimates.insert("alpha".into(), 0.3);
        r.set_partition(&NodePartition::new(vec![0, 1, 0], 2).unwrap());
        r.warnings.push("w".into());
        let back = RunResultFile::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.partition, Some(vec![1, 2, 1]));
        let bumped = r.to_json().replace("\"schema_version\": 1", "\"schema_version\": 99");
        assert!(RunResultFile::from_json(&bumped).is_err());
    }

    #[test]
    fn symmetrize_examples() {
        let g = symmetrize_mean(&[vec![7.0, 4.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(g.weight(0, 1), 3.0);
        let sym = vec![vec![0.0, 1.5, 2.0], vec![1.5, 9.0, 0.0], vec![2.0, 0.0, 0.0]];
        let g = symmetrize_mean(&sym).unwrap();
        assert_eq!((g.weight(0, 1), g.weight(0, 2), g.weight(1, 2)), (1.5, 2.0, 0.0));
        assert!(matches!(symmetrize_mean(&[vec![0.0, 1.0]]), Err(Error::SizeMismatch { .. })));
        assert!(symmetrize_mean(&[vec![0.0, -1.0], vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn laplacian_examples() {
        let mut g = WeightedGraph::empty(2);
        g.set_weight(0, 1, 1.0);
        assert_eq!(normalized_laplacian_weights(&g).unwrap().weight(0, 1), -1.0);

        let mut k3 = WeightedGraph::empty(3);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            k3.set_weight(i, j, 1.0);
        }
        let l = normalized_laplacian_weights(&k3).unwrap();
        assert!(l.pairs().all(|(_, _, w)| (w + 0.5).abs() < 1e-15));

        let mut iso = WeightedGraph::empty(3);
        iso.set_weight(0, 1, 2.0);
        assert_eq!(normalized_laplacian_weights(&iso), Err(Error::IsolatedNode(2)));
    }

    #[test]
    fn matrix_parsing() {
        let m = parse_matrix("0 1\n2\t0\n").unwrap();
        assert_eq!(m, vec![vec![0.0, 1.0], vec![2.0, 0.0]]);
        assert!(matches!(parse_matrix("0 x\n"), Err(Error::Parse { line: 1, .. })));
    }
}
