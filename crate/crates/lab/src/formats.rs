//! Readers and writers for every file the lab consumes or produces.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mwc_core::cascade::{ActionLog, ActionRecord, CascadeError, InfluenceProbabilities, SocialGraph};
use mwc_core::engine::RewardReport;
use mwc_core::population::{PlayerProfile, UserId};
use mwc_core::{MechanismParams, NodeId, ReferralDag};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DAG_HEADER: &str = "# mwc-dag v1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl FormatError {
    fn io(path: &Path, source: io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn line(path: &Path, line: usize, message: impl Into<String>) -> Self {
        FormatError::Line {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn csv(path: &Path, source: csv::Error) -> Self {
        FormatError::Csv {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, FormatError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| FormatError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, FormatError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| FormatError::io(path, e))
}

// ---- referral DAG ----

/// Renders a DAG: header, `N <id> <effort>` in join order, then
/// `E <from> <to>` grouped by target in predecessor order. Efforts carry 17
/// significant digits, which is enough to read back the same `f64`.
pub fn dag_to_string(dag: &ReferralDag) -> String {
    let mut out = String::with_capacity(32 * (dag.len() + dag.edge_count()) + 16);
    out.push_str(DAG_HEADER);
    out.push('\n');
    for v in dag.node_ids() {
        let _ = writeln!(out, "N {} {:.16e}", v, dag.task_effort(v));
    }
    for v in dag.node_ids() {
        for p in dag.direct_predecessors(v) {
            let _ = writeln!(out, "E {} {}", p, v);
        }
    }
    out
}

pub fn write_dag(path: &Path, dag: &ReferralDag) -> Result<(), FormatError> {
    std::fs::write(path, dag_to_string(dag)).map_err(|e| FormatError::io(path, e))
}

pub fn read_dag(path: &Path) -> Result<ReferralDag, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_dag(&text).map_err(|(line, message)| FormatError::line(path, line, message))
}

/// Parses the DAG text format; errors carry the 1-based line number.
pub fn parse_dag(text: &str) -> Result<ReferralDag, (usize, String)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, DAG_HEADER)) => {}
        Some((n, other)) => return Err((n, format!("expected header {DAG_HEADER:?}, found {other:?}"))),
        None => return Err((1, "empty file".into())),
    }
    let mut efforts: Vec<f64> = Vec::new();
    let mut preds: Vec<Vec<NodeId>> = Vec::new();
    let mut seen_edge = false;
    for (n, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["N", id, effort] => {
                if seen_edge {
                    return Err((n, "node line after edge lines".into()));
                }
                let id: usize = id.parse().map_err(|_| (n, format!("bad node id {id:?}")))?;
                if id != efforts.len() {
                    return Err((
                        n,
                        format!("node ids must run 0, 1, 2, ...; expected {}, found {id}", efforts.len()),
                    ));
                }
                let t: f64 = effort.parse().map_err(|_| (n, format!("bad effort {effort:?}")))?;
                if !(t.is_finite() && t >= 0.0) {
                    return Err((n, format!("effort must be finite and non-negative, found {t}")));
                }
                efforts.push(t);
                preds.push(Vec::new());
            }
            ["E", from, to] => {
                seen_edge = true;
                let from: u32 = from.parse().map_err(|_| (n, format!("bad node id {from:?}")))?;
                let to: u32 = to.parse().map_err(|_| (n, format!("bad node id {to:?}")))?;
                if to as usize >= efforts.len() {
                    return Err((n, format!("edge target {to} is not a node")));
                }
                if from >= to {
                    return Err((n, format!("edge {from} -> {to} does not point to a later node")));
                }
                let list = &mut preds[to as usize];
                if list.contains(&NodeId::new(from)) {
                    return Err((n, format!("duplicate edge {from} -> {to}")));
                }
                list.push(NodeId::new(from));
            }
            _ => {
                return Err((
                    n,
                    format!("expected `N <id> <effort>` or `E <from> <to>`, found {line:?}"),
                ))
            }
        }
    }
    let mut dag = ReferralDag::with_capacity(efforts.len());
    for (t, p) in efforts.into_iter().zip(&preds) {
        dag.add_node(t, p).expect("validated above");
    }
    Ok(dag)
}

// ---- social network inputs ----

/// Table-1 style counts of a loaded network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub nodes: usize,
    pub edges: usize,
    pub duplicate_edges: usize,
    pub actions: usize,
    pub action_records: usize,
    pub active_users: usize,
}

/// Reads `from<TAB>to` lines (any whitespace accepted), skipping blank lines
/// and `#` comments. Users are dense integer ids; the network has
/// `max id + 1` nodes. Repeated edges are counted and ignored.
pub fn read_edge_list(path: &Path) -> Result<(SocialGraph, NetworkSummary), FormatError> {
    let mut edges = Vec::new();
    let mut max_id: Option<u32> = None;
    for (i, line) in open(path)?.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| FormatError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [from, to] = fields.as_slice() else {
            return Err(FormatError::line(
                path,
                n,
                format!("expected `from<TAB>to`, found {line:?}"),
            ));
        };
        let parse = |s: &str| {
            s.parse::<u32>()
                .map_err(|_| FormatError::line(path, n, format!("bad user id {s:?}")))
        };
        let (from, to) = (parse(from)?, parse(to)?);
        if from == to {
            return Err(FormatError::line(path, n, format!("self loop on user {from}")));
        }
        max_id = max_id.max(Some(from.max(to)));
        edges.push((from, to));
    }
    let nodes = max_id.map_or(0, |m| m as usize + 1);
    let mut graph = SocialGraph::new(nodes);
    let mut duplicates = 0;
    for (from, to) in edges {
        if !graph
            .add_edge(UserId::new(from), UserId::new(to))
            .expect("ids in range, no self loops")
        {
            duplicates += 1;
        }
    }
    let summary = NetworkSummary {
        nodes,
        edges: graph.edge_count(),
        duplicate_edges: duplicates,
        ..Default::default()
    };
    Ok((graph, summary))
}

pub fn write_edge_list(path: &Path, graph: &SocialGraph) -> Result<(), FormatError> {
    let mut w = create(path)?;
    let io = |e| FormatError::io(path, e);
    writeln!(w, "# from\tto").map_err(io)?;
    for (a, b) in graph.edges() {
        writeln!(w, "{a}\t{b}").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRow {
    pub user_id: u32,
    pub action_id: u64,
    pub timestamp: i64,
}

/// Reads `user_id,action_id,timestamp` and checks every user exists in a
/// network of `nodes` users.
pub fn read_actions(path: &Path, nodes: usize) -> Result<ActionLog, FormatError> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    check_header(path, &mut reader, &["user_id", "action_id", "timestamp"])?;
    let mut log = ActionLog::new();
    for row in reader.deserialize::<ActionRow>() {
        let row = row.map_err(|e| csv_line_error(path, e))?;
        // header is line 1
        let line = log.len() + 2;
        if row.user_id as usize >= nodes {
            return Err(FormatError::line(
                path,
                line,
                format!("user {} is not in the network ({nodes} users)", row.user_id),
            ));
        }
        log.push(ActionRecord {
            user: UserId::new(row.user_id),
            action: row.action_id,
            timestamp: row.timestamp,
        })
        .map_err(|e| match e {
            CascadeError::DuplicateRecord { user, action, .. } => {
                FormatError::line(path, line, format!("user {user} performed action {action} twice"))
            }
            other => FormatError::line(path, line, other.to_string()),
        })?;
    }
    Ok(log)
}

pub fn write_actions(path: &Path, log: &ActionLog) -> Result<(), FormatError> {
    write_csv(
        path,
        log.records().iter().map(|r| ActionRow {
            user_id: r.user.get(),
            action_id: r.action,
            timestamp: r.timestamp,
        }),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityRow {
    pub from: u32,
    pub to: u32,
    pub p: f64,
}

/// Reads `from,to,p`. Edges of `graph` missing from the file keep `p = 0`.
pub fn read_probabilities(path: &Path, graph: &SocialGraph) -> Result<InfluenceProbabilities, FormatError> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    check_header(path, &mut reader, &["from", "to", "p"])?;
    let mut probs = InfluenceProbabilities::zeros(graph);
    for (i, row) in reader.deserialize::<ProbabilityRow>().enumerate() {
        let row = row.map_err(|e| csv_line_error(path, e))?;
        probs
            .set(UserId::new(row.from), UserId::new(row.to), row.p)
            .map_err(|e| FormatError::line(path, i + 2, e.to_string()))?;
    }
    Ok(probs)
}

/// Writes every edge's probability ordered by `(from, to)`.
pub fn write_probabilities(path: &Path, probs: &InfluenceProbabilities) -> Result<(), FormatError> {
    write_csv(
        path,
        probs.entries().into_iter().map(|(a, b, p)| ProbabilityRow {
            from: a.get(),
            to: b.get(),
            p,
        }),
    )
}

fn check_header<R: io::Read>(path: &Path, reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), FormatError> {
    let headers = reader.headers().map_err(|e| csv_line_error(path, e))?;
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != expected {
        return Err(FormatError::line(
            path,
            1,
            format!("expected header {:?}, found {:?}", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

fn csv_line_error(path: &Path, e: csv::Error) -> FormatError {
    match e.position() {
        Some(pos) => FormatError::line(path, pos.line() as usize, e.to_string()),
        None => FormatError::csv(path, e),
    }
}

// ---- outputs ----

/// Writes serializable rows as CSV with a header taken from the field names.
pub fn write_csv<T, I>(path: &Path, rows: I) -> Result<(), FormatError>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| FormatError::csv(path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

/// Writes a CSV header even when there are no rows.
pub fn write_csv_with_header<T, I>(path: &Path, header: &[&str], rows: I) -> Result<(), FormatError>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    w.write_record(header).map_err(|e| FormatError::csv(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| FormatError::csv(path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| FormatError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub node_id: u32,
    pub task_effort: f64,
    pub credits: f64,
    pub win_prob: f64,
    pub pool: f64,
    pub pi_t: f64,
    pub pi_d: f64,
    pub pi_total: f64,
}

pub const REWARD_HEADER: [&str; 8] = [
    "node_id",
    "task_effort",
    "credits",
    "win_prob",
    "pool",
    "pi_t",
    "pi_d",
    "pi_total",
];

pub fn reward_rows(report: &RewardReport) -> Vec<RewardRow> {
    report
        .rows
        .iter()
        .map(|r| RewardRow {
            node_id: r.node.get(),
            task_effort: r.task_effort,
            credits: r.credits,
            win_prob: r.win_probability,
            pool: r.prize_pool,
            pi_t: r.task_reward,
            pi_d: r.diffusion_reward,
            pi_total: r.total_reward,
        })
        .collect()
}

/// JSON form of a reward report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardDocument {
    pub params: MechanismParams,
    pub total_effort: f64,
    pub total_payout: f64,
    pub payout_ratio: f64,
    pub rows: Vec<RewardRow>,
}

pub fn write_rewards(
    csv_path: &Path,
    json_path: &Path,
    report: &RewardReport,
    params: &MechanismParams,
) -> Result<(), FormatError> {
    let rows = reward_rows(report);
    write_csv_with_header(csv_path, &REWARD_HEADER, &rows)?;
    write_json(
        json_path,
        &RewardDocument {
            params: *params,
            total_effort: report.total_effort,
            total_payout: report.total_reward,
            payout_ratio: report.payout_ratio(params),
            rows,
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProfileRow {
    pub node_id: u32,
    pub group: &'static str,
    pub ability: f64,
    pub delta: f64,
}

pub const PROFILE_HEADER: [&str; 4] = ["node_id", "group", "ability", "delta"];

/// Writes profiles in node order (`profiles[i]` belongs to node `i`).
pub fn write_profiles(path: &Path, profiles: &[PlayerProfile]) -> Result<(), FormatError> {
    write_csv_with_header(
        path,
        &PROFILE_HEADER,
        profiles.iter().enumerate().map(|(i, p)| ProfileRow {
            node_id: i as u32,
            group: p.group.tag(),
            ability: p.ability,
            delta: p.delta,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dag_text_layout() {
        let mut g = ReferralDag::new();
        let a = g.add_node(1.0, &[]).unwrap();
        let b = g.add_node(0.1, &[a]).unwrap();
        g.add_node(0.0, &[a, b]).unwrap();
        let text = dag_to_string(&g);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], DAG_HEADER);
        assert_eq!(lines[1], "N 0 1.0000000000000000e0");
        assert_eq!(lines[2], "N 1 1.0000000000000001e-1");
        assert_eq!(&lines[4..], ["E 0 1", "E 0 2", "E 1 2"]);
        assert_eq!(parse_dag(&text).unwrap(), g);
    }

    #[test]
    fn dag_parse_errors_name_the_line() {
        assert_eq!(parse_dag("").unwrap_err().0, 1);
        assert_eq!(parse_dag("# other\n").unwrap_err().0, 1);
        let bad = format!("{DAG_HEADER}\nN 0 1\nN 2 1\n");
        assert_eq!(parse_dag(&bad).unwrap_err().0, 3);
        let back = format!("{DAG_HEADER}\nN 0 1\nN 1 1\nE 1 0\n");
        assert_eq!(parse_dag(&back).unwrap_err().0, 4);
        let neg = format!("{DAG_HEADER}\nN 0 -1\n");
        assert_eq!(parse_dag(&neg).unwrap_err().0, 2);
        let dup = format!("{DAG_HEADER}\nN 0 1\nN 1 1\nE 0 1\nE 0 1\n");
        assert_eq!(parse_dag(&dup).unwrap_err().0, 5);
    }
}
