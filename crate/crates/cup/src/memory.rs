//! Per-resident memory pool: events, behaviors and thoughts with scored
//! retrieval and threshold-triggered reflection.
//!
//! Retrieval blends exponential recency decay, normalized importance and
//! local term-frequency cosine relevance; no embedding service is involved,
//! so scripted runs stay self-contained.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::util::render;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    Event,
    Behavior,
    Thought,
}

/// One remembered item. `created` and `last_access` are global ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub kind: MemoryKind,
    pub text: String,
    pub created: u64,
    pub last_access: u64,
    pub importance: u8,
}

impl MemoryEntry {
    pub fn new(kind: MemoryKind, text: impl Into<String>, now: u64, importance: u8) -> Self {
        MemoryEntry {
            kind,
            text: text.into(),
            created: now,
            last_access: now,
            importance,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MemoryError {
    #[error("ImportanceOutOfRange: importance {0} is outside [1, 10]")]
    ImportanceOutOfRange(u8),
}

/// Scoring weights and bookkeeping defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryParams {
    pub w_recency: f64,
    pub w_importance: f64,
    pub w_relevance: f64,
    pub decay_per_tick: f64,
    pub reflect_threshold: u32,
    pub event_importance: u8,
    pub behavior_importance: u8,
    pub thought_importance: u8,
}

impl Default for MemoryParams {
    fn default() -> Self {
        MemoryParams {
            w_recency: 1.0,
            w_importance: 1.0,
            w_relevance: 1.0,
            decay_per_tick: 0.995,
            reflect_threshold: 30,
            event_importance: 3,
            behavior_importance: 4,
            thought_importance: 8,
        }
    }
}

/// Blend of recency, importance and relevance.
///
/// `relevance` must already be in [0, 1]; `now` must not precede the
/// entry's last access.
pub fn score(entry: &MemoryEntry, now: u64, relevance: f64, params: &MemoryParams) -> f64 {
    debug_assert!(now >= entry.last_access);
    let gap = now.saturating_sub(entry.last_access).min(1_000_000) as i32;
    params.w_recency * params.decay_per_tick.powi(gap)
        + params.w_importance * f64::from(entry.importance) / 10.0
        + params.w_relevance * relevance
}

/// Term-frequency vector over lowercased word tokens.
#[derive(Debug, Clone, Default)]
struct TermVector {
    counts: BTreeMap<String, f64>,
    norm: f64,
}

impl TermVector {
    fn of(text: &str) -> TermVector {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for token in text
            .to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            *counts.entry(token.to_string()).or_insert(0.0) += 1.0;
        }
        let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
        TermVector { counts, norm }
    }

    fn cosine(&self, other: &TermVector) -> f64 {
        if self.norm == 0.0 || other.norm == 0.0 {
            return 0.0;
        }
        let (small, large) = if self.counts.len() <= other.counts.len() {
            (self, other)
        } else {
            (other, self)
        };
        let dot: f64 = small
            .counts
            .iter()
            .filter_map(|(tok, c)| large.counts.get(tok).map(|d| c * d))
            .sum();
        dot / (self.norm * other.norm)
    }
}

/// Append-ordered memory stream for one resident.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MemoryPool {
    pub entries: Vec<MemoryEntry>,
    pub importance_since_reflection: u32,
    #[serde(skip)]
    term_cache: Vec<TermVector>,
}

impl PartialEq for MemoryPool {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
            && self.importance_since_reflection == other.importance_since_reflection
    }
}

impl MemoryPool {
    pub fn new() -> MemoryPool {
        MemoryPool::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Append an entry and grow the running importance sum.
    pub fn add(&mut self, entry: MemoryEntry) -> Result<(), MemoryError> {
        if entry.importance < 1 || entry.importance > 10 {
            return Err(MemoryError::ImportanceOutOfRange(entry.importance));
        }
        self.importance_since_reflection += u32::from(entry.importance);
        self.term_cache.truncate(self.entries.len());
        self.term_cache.push(TermVector::of(&entry.text));
        self.entries.push(entry);
        Ok(())
    }

    fn term_vector(&mut self, idx: usize) -> &TermVector {
        while self.term_cache.len() < self.entries.len() {
            let i = self.term_cache.len();
            self.term_cache.push(TermVector::of(&self.entries[i].text));
        }
        &self.term_cache[idx]
    }

    /// Top-`k` entries by score for `query`, marking them accessed at `now`.
    ///
    /// Ties break toward newer creation ticks, then insertion order. Fewer
    /// than `k` entries returns everything, still sorted.
    pub fn retrieve(
        &mut self,
        query: &str,
        k: usize,
        now: u64,
        params: &MemoryParams,
    ) -> Vec<MemoryEntry> {
        let query_vec = TermVector::of(query);
        let mut ranked: Vec<(usize, f64)> = (0..self.entries.len())
            .map(|i| {
                let relevance = self.term_vector(i).cosine(&query_vec);
                (i, score(&self.entries[i], now, relevance, params))
            })
            .collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then(self.entries[b.0].created.cmp(&self.entries[a.0].created))
                .then(a.0.cmp(&b.0))
        });
        ranked
            .into_iter()
            .take(k)
            .map(|(i, _)| {
                self.entries[i].last_access = now;
                self.entries[i].clone()
            })
            .collect()
    }

    /// True once the importance accumulated since the last reflection
    /// reaches the threshold.
    pub fn should_reflect(&self, params: &MemoryParams) -> bool {
        self.importance_since_reflection >= params.reflect_threshold
    }

    /// One gateway call over the top-10 memories; parsed thoughts (at most
    /// three) are stored and the running sum resets.
    pub fn reflect(
        &mut self,
        resident_block: &str,
        gateway: &Gateway,
        now: u64,
        params: &MemoryParams,
    ) -> Result<usize, GatewayError> {
        let salient = self.retrieve("", 10, now, params);
        let listing = salient
            .iter()
            .map(|e| format!("- {}", e.text))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = render(
            include_str!("../prompts/live_reflect.txt"),
            &[("profile", resident_block), ("memories", &listing)],
        );
        let request = ChatRequest::new("live.reflect", prompt);
        let thoughts: Vec<String> = gateway.complete_structured(
            &request,
            "a JSON array of short thought strings, e.g. [\"thought one\", \"thought two\"]",
        )?;
        let mut added = 0;
        for text in thoughts.into_iter().filter(|t| !t.trim().is_empty()).take(3) {
            let entry = MemoryEntry::new(MemoryKind::Thought, text, now, params.thought_importance);
            self.add(entry).expect("thought importance is within range");
            added += 1;
        }
        self.importance_since_reflection = 0;
        Ok(added)
    }

    /// One JSON object per line, every field included.
    pub fn dump_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for entry in &self.entries {
            let line = serde_json::to_string(entry).expect("entry serializes");
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Rebuild a pool from a JSONL dump (reflection bookkeeping resets).
    pub fn from_jsonl<R: BufRead>(input: R) -> std::io::Result<MemoryPool> {
        let mut pool = MemoryPool::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: MemoryEntry = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            pool.entries.push(entry);
        }
        Ok(pool)
    }
}
