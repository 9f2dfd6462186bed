use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::model::AgentId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("cycle detected: {}", fmt_path(.0))]
    CycleDetected(Vec<AgentId>),
    #[error("edge {0} -> {1} references an unknown node")]
    DanglingEdge(AgentId, AgentId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("agent {0} declared more than once")]
    DuplicateAgent(AgentId),
    #[error("agent {0} is not reachable from any entry node")]
    Unreachable(AgentId),
    #[error("graph has no nodes")]
    Empty,
}

fn fmt_path(path: &[AgentId]) -> String {
    path.iter()
        .map(AgentId::as_str)
        .collect::<Vec<_>>()
        .join(" -> ")
}

/// Problem inputs a node receives directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NodeInputs {
    #[serde(default)]
    pub question: bool,
    #[serde(default)]
    pub context: bool,
}

impl NodeInputs {
    pub const QUESTION: Self = Self {
        question: true,
        context: false,
    };
    pub const ALL: Self = Self {
        question: true,
        context: true,
    };
    pub const NONE: Self = Self {
        question: false,
        context: false,
    };

    pub fn is_entry(&self) -> bool {
        self.question || self.context
    }
}

/// Directed communication structure over agents.
///
/// Node order matters: the node at 1-based position `k` publishes its output
/// under the `agent_k_response` placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommGraph {
    pub nodes: Vec<AgentId>,
    pub edges: Vec<(AgentId, AgentId)>,
    #[serde(default)]
    pub inputs: BTreeMap<AgentId, NodeInputs>,
}

impl CommGraph {
    /// Graph whose every node sees the question and context.
    pub fn new<N, E>(nodes: N, edges: E) -> Self
    where
        N: IntoIterator,
        N::Item: Into<AgentId>,
        E: IntoIterator<Item = (&'static str, &'static str)>,
    {
        let nodes: Vec<AgentId> = nodes.into_iter().map(Into::into).collect();
        let inputs = nodes.iter().map(|n| (n.clone(), NodeInputs::ALL)).collect();
        Self {
            nodes,
            edges: edges
                .into_iter()
                .map(|(a, b)| (AgentId::from(a), AgentId::from(b)))
                .collect(),
            inputs,
        }
    }

    pub fn with_inputs(mut self, node: impl Into<AgentId>, inputs: NodeInputs) -> Self {
        self.inputs.insert(node.into(), inputs);
        self
    }

    pub fn contains(&self, a: &AgentId) -> bool {
        self.nodes.contains(a)
    }

    /// 1-based position of `a` in the node list.
    pub fn position(&self, a: &AgentId) -> Option<usize> {
        self.nodes.iter().position(|n| n == a).map(|i| i + 1)
    }

    pub fn inputs_of(&self, a: &AgentId) -> NodeInputs {
        self.inputs.get(a).copied().unwrap_or_default()
    }

    fn require(&self, a: &AgentId) -> Result<(), GraphError> {
        if self.contains(a) {
            Ok(())
        } else {
            Err(GraphError::UnknownAgent(a.clone()))
        }
    }

    /// Agents whose output `a` consumes.
    pub fn predecessors(&self, a: &AgentId) -> Result<BTreeSet<AgentId>, GraphError> {
        self.require(a)?;
        Ok(self
            .edges
            .iter()
            .filter(|(_, to)| to == a)
            .map(|(from, _)| from.clone())
            .collect())
    }

    /// Agents that consume `a`'s output directly.
    pub fn successors(&self, a: &AgentId) -> Result<BTreeSet<AgentId>, GraphError> {
        self.require(a)?;
        Ok(self
            .edges
            .iter()
            .filter(|(from, _)| from == a)
            .map(|(_, to)| to.clone())
            .collect())
    }

    /// Every node reachable from `a` through at least one edge.
    pub fn successors_closure(&self, a: &AgentId) -> Result<BTreeSet<AgentId>, GraphError> {
        self.require(a)?;
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&AgentId> = VecDeque::from([a]);
        while let Some(cur) = queue.pop_front() {
            for (from, to) in &self.edges {
                if from == cur && seen.insert(to.clone()) {
                    queue.push_back(to);
                }
            }
        }
        Ok(seen)
    }

    /// Nodes without outgoing edges.
    pub fn sinks(&self) -> Vec<AgentId> {
        self.nodes
            .iter()
            .filter(|n| !self.edges.iter().any(|(from, _)| from == *n))
            .cloned()
            .collect()
    }

    /// Topological order; ties broken by declared node order.
    pub fn topological_order(&self) -> Result<Vec<AgentId>, GraphError> {
        self.validate()?;
        Ok(self.kahn().expect("validated graph is acyclic"))
    }

    fn kahn(&self) -> Option<Vec<AgentId>> {
        let mut indegree: BTreeMap<&AgentId, usize> = self.nodes.iter().map(|n| (n, 0)).collect();
        for (_, to) in &self.edges {
            *indegree.get_mut(to)? += 1;
        }
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut done = BTreeSet::new();
        while order.len() < self.nodes.len() {
            let next = self
                .nodes
                .iter()
                .find(|n| !done.contains(*n) && indegree[n] == 0)?;
            done.insert(next);
            order.push(next.clone());
            for (from, to) in &self.edges {
                if from == next {
                    *indegree.get_mut(to)? -= 1;
                }
            }
        }
        Some(order)
    }

    fn find_cycle(&self) -> Option<Vec<AgentId>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        fn visit<'a>(
            g: &'a CommGraph,
            n: &'a AgentId,
            marks: &mut BTreeMap<&'a AgentId, Mark>,
            stack: &mut Vec<&'a AgentId>,
        ) -> Option<Vec<AgentId>> {
            marks.insert(n, Mark::Active);
            stack.push(n);
            for (from, to) in &g.edges {
                if from != n {
                    continue;
                }
                match marks.get(to).copied().unwrap_or(Mark::New) {
                    Mark::Active => {
                        let start = stack.iter().position(|s| *s == to).unwrap_or(0);
                        let mut path: Vec<AgentId> =
                            stack[start..].iter().map(|s| (*s).clone()).collect();
                        path.push(to.clone());
                        return Some(path);
                    }
                    Mark::New => {
                        if let Some(p) = visit(g, to, marks, stack) {
                            return Some(p);
                        }
                    }
                    Mark::Done => {}
                }
            }
            stack.pop();
            marks.insert(n, Mark::Done);
            None
        }

        let mut marks = BTreeMap::new();
        for n in &self.nodes {
            if marks.get(n).copied().unwrap_or(Mark::New) == Mark::New {
                if let Some(p) = visit(self, n, &mut marks, &mut Vec::new()) {
                    return Some(p);
                }
            }
        }
        None
    }

    /// Ok iff nodes are distinct, edges reference nodes, the graph is acyclic
    /// and every node is reachable from an entry node.
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n) {
                return Err(GraphError::DuplicateAgent(n.clone()));
            }
        }
        for (from, to) in &self.edges {
            if !self.contains(from) || !self.contains(to) {
                return Err(GraphError::DanglingEdge(from.clone(), to.clone()));
            }
        }
        for n in self.inputs.keys() {
            self.require(n)?;
        }
        if let Some(path) = self.find_cycle() {
            return Err(GraphError::CycleDetected(path));
        }
        let mut reached = BTreeSet::new();
        for n in self.nodes.iter().filter(|n| self.inputs_of(n).is_entry()) {
            reached.insert(n.clone());
            reached.extend(self.successors_closure(n)?);
        }
        if let Some(n) = self.nodes.iter().find(|n| !reached.contains(*n)) {
            return Err(GraphError::Unreachable(n.clone()));
        }
        Ok(())
    }
}

/// Free-function form of [`CommGraph::validate`].
pub fn validate_graph(g: &CommGraph) -> Result<(), GraphError> {
    g.validate()
}
