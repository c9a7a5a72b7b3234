//! Pairwise lag-`p` Granger tests, Benjamini-Hochberg edge selection and
//! graph statistics.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::market::COMMODITIES;
use crate::stats::{bh_adjust, f_test_nested, ols_fit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Beir,
    Market,
    Commodity,
    Narrative,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Beir => "beir",
            Role::Market => "market",
            Role::Commodity => "commodity",
            Role::Narrative => "narrative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub name: String,
    pub role: Role,
    pub country: Option<String>,
}

/// Role and country from the naming convention `{CC}_BEIR`, `{CC}_PLS{i}`,
/// `{CC}_<market>` and the shared commodity names.
pub fn node_info(name: &str) -> NodeInfo {
    if COMMODITIES.contains(&name) {
        return NodeInfo {
            name: name.to_owned(),
            role: Role::Commodity,
            country: None,
        };
    }
    match name.split_once('_') {
        Some((cc, rest)) => {
            let role = if rest == "BEIR" {
                Role::Beir
            } else if rest.strip_prefix("PLS").is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())) {
                Role::Narrative
            } else {
                Role::Market
            };
            NodeInfo {
                name: name.to_owned(),
                role,
                country: Some(cc.to_owned()),
            }
        }
        None => NodeInfo {
            name: name.to_owned(),
            role: Role::Market,
            country: None,
        },
    }
}

/// Variables on one shared date index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariablePanel {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    pub values: Matrix,
}

impl VariablePanel {
    pub fn new(dates: Vec<NaiveDate>, names: Vec<String>, values: Matrix) -> Result<Self> {
        if values.nrows() != dates.len() || values.ncols() != names.len() {
            return Err(Error::InvalidInput("panel shape does not match its labels".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("panel contains non-finite values".into()));
        }
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::InvalidInput("duplicate variable names".into()));
        }
        Ok(VariablePanel { dates, names, values })
    }

    /// Join dated columns on the intersection of their dates.
    pub fn intersect(columns: Vec<(String, Vec<NaiveDate>, Vec<f64>)>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidInput("no panel columns".into()));
        }
        let maps: Vec<BTreeMap<NaiveDate, f64>> = columns
            .iter()
            .map(|(_, d, v)| d.iter().copied().zip(v.iter().copied()).collect())
            .collect();
        let dates: Vec<NaiveDate> = maps[0]
            .keys()
            .filter(|d| maps.iter().all(|m| m.contains_key(d)))
            .copied()
            .collect();
        let values = Matrix::from_fn(dates.len(), maps.len(), |i, j| maps[j][&dates[i]]);
        VariablePanel::new(dates, columns.into_iter().map(|(n, _, _)| n).collect(), values)
    }

    pub fn roster_size(&self) -> usize {
        self.names.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub statistic: f64,
    pub p_value: f64,
    /// Collinear lags; reported with p = 1.
    pub degenerate: bool,
}

/// Raw Granger p-values, `tests[source][target]`; the diagonal is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub names: Vec<String>,
    pub lag: usize,
    pub tests: Vec<Vec<Option<PairTest>>>,
}

pub const GRANGER_MIN_OBS: usize = 30;

fn lag_design(cols: &[&[f64]], lag: usize) -> Matrix {
    let n = cols[0].len() - lag;
    Matrix::from_fn(n, 1 + cols.len() * lag, |i, j| {
        if j == 0 {
            return 1.0;
        }
        let c = (j - 1) / lag;
        let l = (j - 1) % lag + 1;
        cols[c][i + lag - l]
    })
}

/// For every ordered pair `x -> y`: compare `y ~ 1 + y lags` with
/// `y ~ 1 + y lags + x lags` by a nested F-test with `q = lag`.
pub fn pairwise_granger(panel: &VariablePanel, lag: usize) -> Result<PairwiseResult> {
    if lag == 0 {
        return Err(Error::InvalidInput("lag must be positive".into()));
    }
    let (n, m) = panel.values.shape();
    if n < GRANGER_MIN_OBS + lag {
        return Err(Error::InsufficientData(format!(
            "Granger tests need {} observations, got {n}",
            GRANGER_MIN_OBS + lag
        )));
    }
    let cols: Vec<Vec<f64>> = (0..m).map(|j| panel.values.column(j).iter().copied().collect()).collect();
    // one column of results per target
    let by_target: Vec<Vec<Option<PairTest>>> = (0..m)
        .into_par_iter()
        .map(|t| -> Result<Vec<Option<PairTest>>> {
            let y = &cols[t][lag..];
            let restricted = ols_fit(&lag_design(&[&cols[t]], lag), y)?;
            (0..m)
                .map(|s| {
                    if s == t {
                        return Ok(None);
                    }
                    match ols_fit(&lag_design(&[&cols[t], &cols[s]], lag), y) {
                        Ok(full) => {
                            let r = f_test_nested(&restricted, &full, lag)?;
                            Ok(Some(PairTest {
                                statistic: r.statistic,
                                p_value: r.p_value,
                                degenerate: r.degenerate,
                            }))
                        }
                        Err(Error::RankDeficient { .. }) => Ok(Some(PairTest {
                            statistic: 0.0,
                            p_value: 1.0,
                            degenerate: true,
                        })),
                        Err(e) => Err(e),
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let tests = (0..m)
        .map(|s| (0..m).map(|t| by_target[t][s]).collect())
        .collect();
    Ok(PairwiseResult {
        names: panel.names.clone(),
        lag,
        tests,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub p_raw: f64,
    pub p_adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centrality {
    /// Raw directed shortest-path betweenness.
    pub raw: Vec<f64>,
    /// `raw / ((n - 1)(n - 2))`.
    pub normalized: Vec<f64>,
    pub normalization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerGraph {
    pub nodes: Vec<NodeInfo>,
    pub edges: Vec<Edge>,
    pub alpha: f64,
    pub tests: usize,
    pub betweenness: Centrality,
    /// 1 (top) to 5; 0 when the graph has fewer than five nodes.
    pub quintiles: Vec<u8>,
}

/// BH over all off-diagonal p-values jointly; edge `s -> t` when the
/// adjusted p-value is at most `alpha`.
pub fn build_graph(pairs: &PairwiseResult, alpha: f64) -> Result<GrangerGraph> {
    let m = pairs.names.len();
    let mut idx = Vec::with_capacity(m * m.saturating_sub(1));
    let mut raw = Vec::with_capacity(idx.capacity());
    for s in 0..m {
        for t in 0..m {
            if s == t {
                continue;
            }
            let test = pairs.tests[s][t]
                .ok_or_else(|| Error::InvalidInput(format!("missing test {s} -> {t}")))?;
            idx.push((s, t));
            raw.push(test.p_value);
        }
    }
    let bh = bh_adjust(&raw, alpha);
    let edges: Vec<Edge> = idx
        .iter()
        .enumerate()
        .filter(|(k, _)| bh.adjusted[*k] <= alpha)
        .map(|(k, &(s, t))| Edge {
            source: s,
            target: t,
            p_raw: raw[k],
            p_adjusted: bh.adjusted[k],
        })
        .collect();
    let adj = adjacency(m, &edges);
    let betweenness = betweenness(&adj);
    // graphs too small to split into quintiles carry 0
    let quintiles = if m >= 5 {
        quintile_rank(&betweenness.raw, &pairs.names)?
    } else {
        vec![0; m]
    };
    Ok(GrangerGraph {
        nodes: pairs.names.iter().map(|n| node_info(n)).collect(),
        edges,
        alpha,
        tests: raw.len(),
        betweenness,
        quintiles,
    })
}

pub fn adjacency(n: usize, edges: &[Edge]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e.source].push(e.target);
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    adj
}

/// `|E| / (|V| (|V| - 1))`, and the same as an exact fraction.
pub fn density(nodes: usize, edges: usize) -> (f64, (usize, usize)) {
    let den = nodes * nodes.saturating_sub(1);
    if den == 0 {
        return (0.0, (0, 1));
    }
    (edges as f64 / den as f64, (edges, den))
}

impl GrangerGraph {
    pub fn density(&self) -> f64 {
        density(self.nodes.len(), self.edges.len()).0
    }

    pub fn has_edge(&self, source: &str, target: &str) -> bool {
        self.edges
            .iter()
            .any(|e| self.nodes[e.source].name == source && self.nodes[e.target].name == target)
    }
}

/// Brandes' algorithm for unweighted directed graphs.
pub fn betweenness(adj: &[Vec<usize>]) -> Centrality {
    let n = adj.len();
    let mut cb = vec![0.0; n];
    for s in 0..n {
        let mut stack = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0_f64; n];
        let mut dist = vec![usize::MAX; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    let normalization = if n > 2 { ((n - 1) * (n - 2)) as f64 } else { 1.0 };
    Centrality {
        normalized: cb.iter().map(|v| v / normalization).collect(),
        raw: cb,
        normalization,
    }
}

/// Quintile 1 (top) to 5 by descending score; ties broken by name.
/// Position `r` (0-based) falls in quintile `floor(5 r / n) + 1`.
pub fn quintile_rank(scores: &[f64], names: &[String]) -> Result<Vec<u8>> {
    let n = scores.len();
    if n != names.len() {
        return Err(Error::InvalidInput("scores and names differ in length".into()));
    }
    if n < 5 {
        return Err(Error::InsufficientData(format!("quintiles need 5 nodes, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| names[a].cmp(&names[b])));
    let mut q = vec![0u8; n];
    for (rank, &i) in order.iter().enumerate() {
        q[i] = (5 * rank / n + 1) as u8;
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredecessorReport {
    pub country: String,
    pub beir: String,
    /// Market, commodity and other-BEIR sources.
    pub market: Vec<String>,
    pub local_narrative: Vec<String>,
    pub foreign_narrative: Vec<String>,
}

impl PredecessorReport {
    pub fn has_foreign_narrative(&self) -> bool {
        !self.foreign_narrative.is_empty()
    }
}

/// Classify the incoming edges of every BEIR node.
pub fn beir_predecessors(graph: &GrangerGraph) -> Vec<PredecessorReport> {
    let mut out = Vec::new();
    for (t, node) in graph.nodes.iter().enumerate() {
        if node.role != Role::Beir {
            continue;
        }
        let mut r = PredecessorReport {
            country: node.country.clone().unwrap_or_default(),
            beir: node.name.clone(),
            market: Vec::new(),
            local_narrative: Vec::new(),
            foreign_narrative: Vec::new(),
        };
        let mut sources: Vec<usize> = graph.edges.iter().filter(|e| e.target == t).map(|e| e.source).collect();
        sources.sort_by(|a, b| graph.nodes[*a].name.cmp(&graph.nodes[*b].name));
        for s in sources {
            let src = &graph.nodes[s];
            match src.role {
                Role::Narrative if src.country == node.country => r.local_narrative.push(src.name.clone()),
                Role::Narrative => r.foreign_narrative.push(src.name.clone()),
                _ => r.market.push(src.name.clone()),
            }
        }
        out.push(r);
    }
    out.sort_by(|a, b| a.beir.cmp(&b.beir));
    out
}

pub fn write_predecessors_csv<W: Write>(reports: &[PredecessorReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["country", "beir", "source", "source_class"])?;
    for r in reports {
        for (class, list) in [
            ("market", &r.market),
            ("local_narrative", &r.local_narrative),
            ("foreign_narrative", &r.foreign_narrative),
        ] {
            for s in list {
                w.write_record([r.country.as_str(), r.beir.as_str(), s.as_str(), class])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<predecessor csv>", e))?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

impl GrangerGraph {
    pub fn to_graphml(&self) -> String {
        let mut s = String::new();
        s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        s.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
        for (id, for_, ty) in [
            ("role", "node", "string"),
            ("country", "node", "string"),
            ("betweenness", "node", "double"),
            ("betweenness_normalized", "node", "double"),
            ("quintile", "node", "int"),
            ("p_raw", "edge", "double"),
            ("p_adjusted", "edge", "double"),
        ] {
            let _ = writeln!(s, "  <key id=\"{id}\" for=\"{for_}\" attr.name=\"{id}\" attr.type=\"{ty}\"/>");
        }
        s.push_str("  <graph id=\"granger\" edgedefault=\"directed\">\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "    <node id=\"{}\">", xml_escape(&n.name));
            let _ = writeln!(s, "      <data key=\"role\">{}</data>", n.role.as_str());
            let _ = writeln!(s, "      <data key=\"country\">{}</data>", n.country.as_deref().unwrap_or(""));
            let _ = writeln!(s, "      <data key=\"betweenness\">{}</data>", self.betweenness.raw[i]);
            let _ = writeln!(
                s,
                "      <data key=\"betweenness_normalized\">{}</data>",
                self.betweenness.normalized[i]
            );
            let _ = writeln!(s, "      <data key=\"quintile\">{}</data>", self.quintiles[i]);
            s.push_str("    </node>\n");
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "    <edge source=\"{}\" target=\"{}\">",
                xml_escape(&self.nodes[e.source].name),
                xml_escape(&self.nodes[e.target].name)
            );
            let _ = writeln!(s, "      <data key=\"p_raw\">{:e}</data>", e.p_raw);
            let _ = writeln!(s, "      <data key=\"p_adjusted\">{:e}</data>", e.p_adjusted);
            s.push_str("    </edge>\n");
        }
        s.push_str("  </graph>\n</graphml>\n");
        s
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph granger {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(
                s,
                "  \"{}\" [role=\"{}\", country=\"{}\", betweenness={}, quintile={}];",
                n.name,
                n.role.as_str(),
                n.country.as_deref().unwrap_or(""),
                self.betweenness.raw[i],
                self.quintiles[i]
            );
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "  \"{}\" -> \"{}\" [p_raw={:e}, p_adjusted={:e}];",
                self.nodes[e.source].name, self.nodes[e.target].name, e.p_raw, e.p_adjusted
            );
        }
        s.push_str("}\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    #[test]
    fn roles_from_names() {
        assert_eq!(node_info("US_BEIR").role, Role::Beir);
        assert_eq!(node_info("DE_PLS1").role, Role::Narrative);
        assert_eq!(node_info("DE_PLS1").country.as_deref(), Some("DE"));
        assert_eq!(node_info("JP_FX").role, Role::Market);
        assert_eq!(node_info("GOLD").role, Role::Commodity);
        assert_eq!(node_info("UK_PLSX").role, Role::Market);
    }

    #[test]
    fn path_betweenness() {
        let c = betweenness(&[vec![1], vec![2], vec![]]);
        assert_eq!(c.raw, vec![0.0, 1.0, 0.0]);
        assert_eq!(c.normalization, 2.0);
    }

    #[test]
    fn complete_digraph_has_zero_betweenness() {
        let n = 6;
        let adj: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect();
        assert!(betweenness(&adj).raw.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn split_paths_share_credit() {
        // 0 -> {1, 2} -> 3: each middle node carries half of the 0 -> 3 path
        let c = betweenness(&[vec![1, 2], vec![3], vec![3], vec![]]);
        assert_eq!(c.raw, vec![0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn density_examples() {
        let (d, frac) = density(74, 817);
        assert_eq!(frac, (817, 5402));
        assert!((d - 0.1512).abs() < 5e-5);
        assert_eq!(density(10, 0).0, 0.0);
    }

    #[test]
    fn quintiles_top_two_of_ten() {
        let scores: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let q = quintile_rank(&scores, &names(10)).unwrap();
        assert_eq!(q[9], 1);
        assert_eq!(q[8], 1);
        assert_eq!(q[7], 2);
        assert_eq!(q[0], 5);
        let flat = quintile_rank(&[1.0; 10], &names(10)).unwrap();
        assert_eq!(flat, vec![1, 1, 2, 2, 3, 3, 4, 4, 5, 5]);
        assert!(quintile_rank(&[1.0; 4], &names(4)).is_err());
    }

    #[test]
    fn identical_series_are_degenerate() {
        let v: Vec<f64> = (0..60).map(|i| ((i * 17) % 13) as f64).collect();
        let values = Matrix::from_fn(60, 2, |i, _| v[i]);
        let dates = (0..60)
            .map(|i| NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(i))
            .collect();
        let panel = VariablePanel::new(dates, names(2), values).unwrap();
        let r = pairwise_granger(&panel, 1).unwrap();
        let t = r.tests[0][1].unwrap();
        assert!(t.degenerate);
        assert_eq!(t.p_value, 1.0);
        assert!(r.tests[0][0].is_none());
    }

    #[test]
    fn foreign_narrative_inflow_is_flagged() {
        let nodes: Vec<String> = ["DE_PLS1", "US_BEIR", "US_PLS2", "GOLD", "MX_BEIR", "UK_STOCK"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let edges = vec![
            Edge { source: 0, target: 1, p_raw: 0.001, p_adjusted: 0.01 },
            Edge { source: 2, target: 1, p_raw: 0.001, p_adjusted: 0.01 },
            Edge { source: 3, target: 1, p_raw: 0.001, p_adjusted: 0.01 },
        ];
        let adj = adjacency(nodes.len(), &edges);
        let b = betweenness(&adj);
        let g = GrangerGraph {
            nodes: nodes.iter().map(|n| node_info(n)).collect(),
            quintiles: quintile_rank(&b.raw, &nodes).unwrap(),
            betweenness: b,
            edges,
            alpha: 0.05,
            tests: 30,
        };
        let reps = beir_predecessors(&g);
        assert_eq!(reps.len(), 2);
        let mx = &reps[0];
        assert_eq!(mx.beir, "MX_BEIR");
        assert!(mx.market.is_empty() && !mx.has_foreign_narrative());
        let us = &reps[1];
        assert_eq!(us.foreign_narrative, vec!["DE_PLS1"]);
        assert_eq!(us.local_narrative, vec!["US_PLS2"]);
        assert_eq!(us.market, vec!["GOLD"]);
        let dot = g.to_dot();
        assert!(dot.contains("\"DE_PLS1\" -> \"US_BEIR\""));
        let gml = g.to_graphml();
        assert_eq!(gml.matches("<edge ").count(), 3);
        let mut csv = Vec::new();
        write_predecessors_csv(&reps, &mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().contains("US,US_BEIR,DE_PLS1,foreign_narrative"));
    }
}
