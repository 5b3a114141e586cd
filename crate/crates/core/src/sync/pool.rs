use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use super::SyncError;

/// One seeking agent's output at a timestep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentMessage {
    pub agent_index: usize,
    pub timestep: usize,
    pub text: String,
    pub token_len: usize,
    pub is_no_information: bool,
    /// Agents whose previous messages were in this agent's prompt.
    pub sources_seen: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceScore {
    pub agent_index: usize,
    pub timestep: usize,
    pub value: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMode {
    /// Scores come from the rating prompt.
    #[default]
    LlmRated,
    /// Scores derive from the chunks' retrieval ranks; no rating calls.
    RetrievalPriority,
}

/// All agents' messages at one timestep, with scores.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessagePool {
    pub timestep: usize,
    pub ranking_mode: RankingMode,
    messages: Vec<AgentMessage>,
    scores: Vec<RelevanceScore>,
}

impl MessagePool {
    /// The pool before any agent has spoken.
    pub fn empty(ranking_mode: RankingMode) -> Self {
        Self {
            timestep: 0,
            ranking_mode,
            messages: Vec::new(),
            scores: Vec::new(),
        }
    }

    /// Entry `i` of both lists must belong to agent `i`; sentinel messages
    /// are forced to score 0.
    pub fn new(
        timestep: usize,
        ranking_mode: RankingMode,
        messages: Vec<AgentMessage>,
        mut scores: Vec<RelevanceScore>,
    ) -> Result<Self, SyncError> {
        if messages.len() != scores.len() {
            return Err(SyncError::Pool(format!(
                "{} messages but {} scores",
                messages.len(),
                scores.len()
            )));
        }
        for (i, (m, s)) in messages.iter().zip(&scores).enumerate() {
            if m.agent_index != i || s.agent_index != i {
                return Err(SyncError::Pool(format!("entry {i} belongs to another agent")));
            }
        }
        for (m, s) in messages.iter().zip(scores.iter_mut()) {
            if m.is_no_information {
                s.value = 0;
            }
        }
        Ok(Self {
            timestep,
            ranking_mode,
            messages,
            scores,
        })
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn messages(&self) -> &[AgentMessage] {
        &self.messages
    }

    pub fn scores(&self) -> &[RelevanceScore] {
        &self.scores
    }

    pub fn message(&self, i: usize) -> &AgentMessage {
        &self.messages[i]
    }

    pub fn score(&self, i: usize) -> u32 {
        self.scores[i].value
    }

    pub fn live_count(&self) -> usize {
        self.messages.iter().filter(|m| !m.is_no_information).count()
    }

    /// Live agent indices, best first: score descending, then index ascending.
    pub fn ranked(&self) -> Vec<usize> {
        self.ranked_excluding(None)
    }

    pub(crate) fn ranked_excluding(&self, skip: Option<usize>) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.messages.len())
            .filter(|&i| Some(i) != skip && !self.messages[i].is_no_information)
            .collect();
        idx.sort_by_key(|&i| (Reverse(self.scores[i].value), i));
        idx
    }
}

/// The `k` best live messages, best first.
///
/// Scores are non-negative and the objective is additive, so the subset of
/// size `k` with the largest total score is the `k` individually best.
pub fn select_top_k(pool: &MessagePool, k: usize) -> Vec<&AgentMessage> {
    pool.ranked().into_iter().take(k).map(|i| pool.message(i)).collect()
}

/// Rank-derived scores: `N - position`, with positions ordered by
/// (retrieval rank, agent index). Unranked chunks use `index + 1`.
pub fn retrieval_scores(ranks: &[Option<u32>]) -> Vec<u32> {
    let n = ranks.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (ranks[i].map_or(i as u64 + 1, u64::from), i));
    let mut scores = vec![0u32; n];
    for (pos, &i) in order.iter().enumerate() {
        scores[i] = (n - pos) as u32;
    }
    scores
}

/// Agent indices in retrieval order (best rank first).
pub fn retrieval_order(ranks: &[Option<u32>]) -> Vec<usize> {
    let scores = retrieval_scores(ranks);
    let mut order: Vec<usize> = (0..ranks.len()).collect();
    order.sort_by_key(|&i| Reverse(scores[i]));
    order
}

#[cfg(test)]
pub(crate) fn pool_from_scores(scores: &[u32], live: &[bool]) -> MessagePool {
    let messages = scores
        .iter()
        .enumerate()
        .map(|(i, _)| AgentMessage {
            agent_index: i,
            timestep: 1,
            text: if live[i] {
                format!("m{i}")
            } else {
                crate::backend::NO_INFORMATION.into()
            },
            token_len: 1,
            is_no_information: !live[i],
            sources_seen: vec![],
        })
        .collect();
    let scores = scores
        .iter()
        .enumerate()
        .map(|(i, &v)| RelevanceScore {
            agent_index: i,
            timestep: 1,
            value: v,
        })
        .collect();
    MessagePool::new(1, RankingMode::LlmRated, messages, scores).unwrap()
}
