use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::GraphError;
use crate::debate::{AgentWeights, DebateTranscript};
use crate::record::{Answer, Label};

/// Schema version written into every serialized graph.
pub const MAG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeKind {
    Question,
    Response,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagNode {
    pub node_id: usize,
    pub kind: NodeKind,
    pub agent_id: Option<String>,
    pub round: Option<u32>,
    pub text: String,
    pub answer: Option<Answer>,
    pub correct: Option<bool>,
    pub semantic_embedding: Vec<f64>,
    pub positional_encoding: Vec<f64>,
}

impl MagNode {
    /// Debate round of the node; the question sits at round 0.
    pub fn depth(&self) -> u32 {
        self.round.unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeKind {
    Root,
    Continuity,
    Influence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
    pub weight: f64,
}

/// Directed multi-agent interaction graph for one debated question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionGraph {
    pub mag_version: u32,
    pub question_id: String,
    pub answer_space: Vec<Label>,
    pub gold_answer: Label,
    pub final_answer: Label,
    pub rounds: u32,
    pub nodes: Vec<MagNode>,
    pub edges: Vec<MagEdge>,
}

impl InteractionGraph {
    pub fn question_node(&self) -> &MagNode {
        &self.nodes[0]
    }

    pub fn question_text(&self) -> &str {
        &self.nodes[0].text
    }

    pub fn response_nodes(&self) -> impl Iterator<Item = &MagNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Response)
    }

    /// Agents in roster order, read from the round-1 nodes.
    pub fn agents(&self) -> Vec<&str> {
        self.response_nodes()
            .filter(|n| n.round == Some(1))
            .filter_map(|n| n.agent_id.as_deref())
            .collect()
    }

    pub fn count_edges(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// Outgoing adjacency lists, edges in insertion order.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            out[e.src].push(e.dst);
        }
        out
    }

    /// A topological order of the nodes, or `None` if the edges contain a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        for e in &self.edges {
            indegree[e.dst] += 1;
        }
        let succ = self.successors();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &j in &succ[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    queue.push_back(j);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Checks the structural invariants a well-formed graph satisfies.
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.mag_version != MAG_VERSION {
            return Err(GraphError::Validation(format!("unsupported mag_version {}", self.mag_version)));
        }
        let questions = self.nodes.iter().filter(|n| n.kind == NodeKind::Question).count();
        if questions != 1 || self.nodes.first().map(|n| n.kind) != Some(NodeKind::Question) {
            return Err(GraphError::Validation("expected exactly one QUESTION node at index 0".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.node_id != i {
                return Err(GraphError::Validation(format!("node {i} carries id {}", node.node_id)));
            }
            match node.kind {
                NodeKind::Question => {
                    if node.agent_id.is_some() || node.round.is_some() || node.correct.is_some() {
                        return Err(GraphError::Validation("QUESTION node must not carry agent data".into()));
                    }
                }
                NodeKind::Response => {
                    if node.agent_id.is_none() || node.round.is_none() || node.correct.is_none() {
                        return Err(GraphError::Validation(format!("RESPONSE node {i} is missing agent data")));
                    }
                }
            }
        }
        for e in &self.edges {
            if e.src >= self.nodes.len() || e.dst >= self.nodes.len() {
                return Err(GraphError::Validation(format!("edge {}->{} out of range", e.src, e.dst)));
            }
            if self.nodes[e.dst].depth() <= self.nodes[e.src].depth() {
                return Err(GraphError::Validation(format!("edge {}->{} does not advance a round", e.src, e.dst)));
            }
            if !(e.weight > 0.0 && e.weight <= 1.0) {
                return Err(GraphError::Validation(format!("edge {}->{} weight {}", e.src, e.dst, e.weight)));
            }
        }
        Ok(())
    }
}

/// Node id of `agent_index`'s response in 1-based `round`.
fn response_id(agents: usize, round: usize, agent_index: usize) -> usize {
    1 + (round - 1) * agents + agent_index
}

/// Turns a debate transcript into an interaction graph.
///
/// Node 0 is the question. Every round-1 response gets a ROOT edge from the
/// question; each response in round r+1 gets a CONTINUITY edge from the same
/// agent's round-r response and an INFLUENCE edge from every other agent's
/// round-r response, weighted by that agent's normalized weight. Embedding
/// and positional vectors are left empty.
pub fn build_graph(
    transcript: &DebateTranscript,
    weights: &AgentWeights,
    gold: &Label,
) -> Result<InteractionGraph, GraphError> {
    let question = &transcript.question;
    let first = transcript
        .rounds
        .first()
        .ok_or_else(|| GraphError::Validation("transcript has no rounds".into()))?;
    let agents: Vec<&str> = first.iter().map(|r| r.agent_id.as_str()).collect();
    if agents.is_empty() {
        return Err(GraphError::Validation("round 1 has no responses".into()));
    }
    if !question.answer_space.contains(gold) {
        return Err(GraphError::Validation(format!("gold {gold} outside the answer space")));
    }
    for (i, round) in transcript.rounds.iter().enumerate() {
        let ids: Vec<&str> = round.iter().map(|r| r.agent_id.as_str()).collect();
        if ids != agents {
            return Err(GraphError::Validation(format!("round {} agents {ids:?} differ from {agents:?}", i + 1)));
        }
        if let Some(r) = round.iter().find(|r| r.round != i as u32 + 1) {
            return Err(GraphError::Validation(format!(
                "{} response labelled round {} found in round {}",
                r.agent_id,
                r.round,
                i + 1
            )));
        }
    }
    for a in &agents {
        let w = weights.weight(a);
        if !(w > 0.0 && w <= 1.0) {
            return Err(GraphError::Validation(format!("agent {a} has weight {w}")));
        }
    }

    let n_agents = agents.len();
    let mut nodes = vec![MagNode {
        node_id: 0,
        kind: NodeKind::Question,
        agent_id: None,
        round: None,
        text: question.text.clone(),
        answer: None,
        correct: None,
        semantic_embedding: Vec::new(),
        positional_encoding: Vec::new(),
    }];
    for (r, round) in transcript.rounds.iter().enumerate() {
        for (a, resp) in round.iter().enumerate() {
            nodes.push(MagNode {
                node_id: response_id(n_agents, r + 1, a),
                kind: NodeKind::Response,
                agent_id: Some(resp.agent_id.clone()),
                round: Some(r as u32 + 1),
                text: resp.raw_text.clone(),
                answer: Some(resp.extracted_answer.clone()),
                correct: Some(resp.extracted_answer.matches(gold)),
                semantic_embedding: Vec::new(),
                positional_encoding: Vec::new(),
            });
        }
    }

    let mut edges = Vec::new();
    for a in 0..n_agents {
        edges.push(MagEdge { src: 0, dst: response_id(n_agents, 1, a), kind: EdgeKind::Root, weight: 1.0 });
    }
    for r in 1..transcript.rounds.len() {
        for target in 0..n_agents {
            let dst = response_id(n_agents, r + 1, target);
            for source in 0..n_agents {
                let src = response_id(n_agents, r, source);
                if source == target {
                    edges.push(MagEdge { src, dst, kind: EdgeKind::Continuity, weight: 1.0 });
                } else {
                    edges.push(MagEdge {
                        src,
                        dst,
                        kind: EdgeKind::Influence,
                        weight: weights.weight(agents[source]),
                    });
                }
            }
        }
    }

    Ok(InteractionGraph {
        mag_version: MAG_VERSION,
        question_id: question.question_id.clone(),
        answer_space: question.answer_space.clone(),
        gold_answer: gold.clone(),
        final_answer: transcript.final_answer.clone(),
        rounds: transcript.rounds.len() as u32,
        nodes,
        edges,
    })
}
