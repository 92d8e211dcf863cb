//! The `t`/`v`/`e` text format used by subgraph-matching benchmark suites,
//! plus the `m` sidecar that stores a query-to-target mapping.
//!
//! ```text
//! t <num_nodes> <num_edges>
//! v <id> <label> <degree>
//! e <src> <dst>
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;

use super::{Label, LabeledGraph, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: header declares {declared} {what} but body has {found}")]
    CountMismatch {
        line: usize,
        what: &'static str,
        declared: usize,
        found: usize,
    },
    #[error("line {line}: node {node} declares degree {declared} but has {actual} incident edges")]
    DegreeMismatch {
        line: usize,
        node: NodeId,
        declared: usize,
        actual: usize,
    },
    #[error("line {line}: duplicate edge ({src}, {dst})")]
    DuplicateEdge { line: usize, src: NodeId, dst: NodeId },
    #[error("line {line}: self-loop on node {node}")]
    SelfLoop { line: usize, node: NodeId },
    #[error("line {line}: expected node id {expected}, found {found}")]
    NonConsecutiveId { line: usize, expected: NodeId, found: NodeId },
}

fn malformed(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Malformed { line, msg: msg.into() }
}

fn fields<const N: usize>(
    line_no: usize,
    tag: &str,
    line: &str,
) -> Result<[usize; N], ParseError> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(malformed(line_no, format!("expected a `{tag}` line")));
    }
    let mut out = [0usize; N];
    for slot in out.iter_mut() {
        let tok = parts
            .next()
            .ok_or_else(|| malformed(line_no, format!("`{tag}` line has too few fields")))?;
        *slot = tok
            .parse()
            .map_err(|_| malformed(line_no, format!("invalid integer `{tok}`")))?;
    }
    if parts.next().is_some() {
        return Err(malformed(line_no, format!("`{tag}` line has trailing fields")));
    }
    Ok(out)
}

/// Parses a graph in the `t`/`v`/`e` format. Blank lines are ignored.
pub fn parse_graph(text: &str) -> Result<LabeledGraph, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (header_line, header) = lines.next().ok_or_else(|| malformed(1, "empty input"))?;
    let [num_nodes, num_edges] = fields::<2>(header_line, "t", header)?;

    let mut labels: Vec<Label> = Vec::with_capacity(num_nodes);
    let mut declared_degree = Vec::with_capacity(num_nodes);
    let mut vertex_lines = Vec::with_capacity(num_nodes);
    let mut edges = Vec::with_capacity(num_edges);
    let mut seen = HashSet::with_capacity(num_edges);
    let mut last_line = header_line;

    for (line_no, line) in lines {
        last_line = line_no;
        match line.as_bytes()[0] {
            b'v' => {
                if !edges.is_empty() {
                    return Err(malformed(line_no, "`v` line after `e` lines"));
                }
                let [id, label, degree] = fields::<3>(line_no, "v", line)?;
                if id != labels.len() {
                    return Err(ParseError::NonConsecutiveId {
                        line: line_no,
                        expected: labels.len(),
                        found: id,
                    });
                }
                if labels.len() == num_nodes {
                    return Err(ParseError::CountMismatch {
                        line: line_no,
                        what: "nodes",
                        declared: num_nodes,
                        found: num_nodes + 1,
                    });
                }
                let label = Label::try_from(label)
                    .map_err(|_| malformed(line_no, format!("label {label} out of range")))?;
                labels.push(label);
                declared_degree.push(degree);
                vertex_lines.push(line_no);
            }
            b'e' => {
                let [a, b] = fields::<2>(line_no, "e", line)?;
                if labels.len() != num_nodes {
                    return Err(ParseError::CountMismatch {
                        line: line_no,
                        what: "nodes",
                        declared: num_nodes,
                        found: labels.len(),
                    });
                }
                if a >= num_nodes || b >= num_nodes {
                    return Err(malformed(line_no, format!("edge ({a}, {b}) references unknown node")));
                }
                if a == b {
                    return Err(ParseError::SelfLoop { line: line_no, node: a });
                }
                let key = (a.min(b), a.max(b));
                if !seen.insert(key) {
                    return Err(ParseError::DuplicateEdge {
                        line: line_no,
                        src: key.0,
                        dst: key.1,
                    });
                }
                if edges.len() == num_edges {
                    return Err(ParseError::CountMismatch {
                        line: line_no,
                        what: "edges",
                        declared: num_edges,
                        found: num_edges + 1,
                    });
                }
                edges.push(key);
            }
            _ => return Err(malformed(line_no, "line must start with `v` or `e`")),
        }
    }

    if labels.len() != num_nodes {
        return Err(ParseError::CountMismatch {
            line: last_line,
            what: "nodes",
            declared: num_nodes,
            found: labels.len(),
        });
    }
    if edges.len() != num_edges {
        return Err(ParseError::CountMismatch {
            line: last_line,
            what: "edges",
            declared: num_edges,
            found: edges.len(),
        });
    }

    // Validation above rules out every GraphError variant.
    let graph = LabeledGraph::from_edges(labels, &edges).expect("edges validated during parse");
    for u in graph.nodes() {
        if graph.degree(u) != declared_degree[u] {
            return Err(ParseError::DegreeMismatch {
                line: vertex_lines[u],
                node: u,
                declared: declared_degree[u],
                actual: graph.degree(u),
            });
        }
    }
    Ok(graph)
}

/// Canonical text form: edges once with `src < dst`, lexicographically sorted.
pub fn serialize_graph(g: &LabeledGraph) -> String {
    let mut out = String::with_capacity(16 * (g.num_nodes() + g.num_edges()));
    let _ = writeln!(out, "t {} {}", g.num_nodes(), g.num_edges());
    for u in g.nodes() {
        let _ = writeln!(out, "v {} {} {}", u, g.label(u), g.degree(u));
    }
    for (a, b) in g.edges() {
        let _ = writeln!(out, "e {a} {b}");
    }
    out
}

/// Writes `m <query_id> <target_id>` lines, one per query node.
pub fn serialize_mapping(mapping: &[NodeId]) -> String {
    let mut out = String::new();
    for (u, v) in mapping.iter().enumerate() {
        let _ = writeln!(out, "m {u} {v}");
    }
    out
}

/// Reads a mapping sidecar; query ids must cover `0..n` exactly once.
pub fn parse_mapping(text: &str) -> Result<Vec<NodeId>, ParseError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let [u, v] = fields::<2>(i + 1, "m", line)?;
        pairs.push((i + 1, u, v));
    }
    let mut mapping = vec![usize::MAX; pairs.len()];
    for (line, u, v) in pairs {
        if u >= mapping.len() || mapping[u] != usize::MAX {
            return Err(malformed(line, format!("query id {u} repeated or out of range")));
        }
        mapping[u] = v;
    }
    Ok(mapping)
}
