//! Deterministic scripted backend.
//!
//! Responses are addressed by call-site tag; entries may additionally
//! require substrings of the prompt (`match` as one string or a list that
//! must all appear). Queues are consumed in file order: the first matching
//! entry with a response left wins. An entry with `cycle` set replays its
//! queue forever, which keeps long simulated days scriptable.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatchSpec {
    One(String),
    All(Vec<String>),
}

impl MatchSpec {
    fn holds(&self, prompt: &str) -> bool {
        match self {
            MatchSpec::One(needle) => prompt.contains(needle),
            MatchSpec::All(needles) => needles.iter().all(|n| prompt.contains(n)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub tag: String,
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub match_spec: Option<MatchSpec>,
    pub responses: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cycle: bool,
}

impl ScriptEntry {
    fn applies(&self, tag: &str, prompt: &str) -> bool {
        self.tag == tag
            && self
                .match_spec
                .as_ref()
                .map_or(true, |spec| spec.holds(prompt))
    }
}

/// The script file: `{entries: [{tag, match?, responses, cycle?}], default?}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default)]
    pub entries: Vec<ScriptEntry>,
    #[serde(rename = "default", default, skip_serializing_if = "Option::is_none")]
    pub default_response: Option<String>,
}

impl Script {
    pub fn new() -> Script {
        Script::default()
    }

    pub fn entry<I, S>(mut self, tag: &str, responses: I) -> Script
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.entries.push(ScriptEntry {
            tag: tag.to_string(),
            match_spec: None,
            responses: responses.into_iter().map(Into::into).collect(),
            cycle: false,
        });
        self
    }

    pub fn entry_matched<M, I, S>(mut self, tag: &str, matches: M, responses: I) -> Script
    where
        M: IntoIterator<Item = S>,
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let needles: Vec<String> = matches.into_iter().map(Into::into).collect();
        self.entries.push(ScriptEntry {
            tag: tag.to_string(),
            match_spec: Some(MatchSpec::All(needles)),
            responses: responses.into_iter().map(Into::into).collect(),
            cycle: false,
        });
        self
    }

    pub fn cycled<I, S>(mut self, tag: &str, responses: I) -> Script
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.entries.push(ScriptEntry {
            tag: tag.to_string(),
            match_spec: None,
            responses: responses.into_iter().map(Into::into).collect(),
            cycle: true,
        });
        self
    }

    pub fn cycled_matched<M, I, S>(mut self, tag: &str, matches: M, responses: I) -> Script
    where
        M: IntoIterator<Item = S>,
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let needles: Vec<String> = matches.into_iter().map(Into::into).collect();
        self.entries.push(ScriptEntry {
            tag: tag.to_string(),
            match_spec: Some(MatchSpec::All(needles)),
            responses: responses.into_iter().map(Into::into).collect(),
            cycle: true,
        });
        self
    }

    pub fn with_default(mut self, text: impl Into<String>) -> Script {
        self.default_response = Some(text.into());
        self
    }

    pub fn load(path: &Path) -> Result<Script, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            GatewayError::ScriptFileInvalid(format!("cannot read `{}`: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            GatewayError::ScriptFileInvalid(format!("cannot parse `{}`: {e}", path.display()))
        })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("script serializes");
        text.push('\n');
        std::fs::write(path, text)
    }
}

/// Consumed-response counts per entry, in file order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptCursor(pub Vec<u64>);

pub(super) struct ScriptState {
    script: Script,
    consumed: Vec<u64>,
}

impl ScriptState {
    pub(super) fn new(script: Script) -> ScriptState {
        let consumed = vec![0; script.entries.len()];
        ScriptState { script, consumed }
    }

    pub(super) fn pop(&mut self, tag: &str, prompt: &str) -> Result<String, GatewayError> {
        for (idx, entry) in self.script.entries.iter().enumerate() {
            if !entry.applies(tag, prompt) || entry.responses.is_empty() {
                continue;
            }
            let used = self.consumed[idx];
            let pick = if entry.cycle {
                Some(used as usize % entry.responses.len())
            } else if (used as usize) < entry.responses.len() {
                Some(used as usize)
            } else {
                None
            };
            if let Some(i) = pick {
                self.consumed[idx] = used + 1;
                return Ok(entry.responses[i].clone());
            }
        }
        self.script
            .default_response
            .clone()
            .ok_or_else(|| GatewayError::ScriptExhausted(tag.to_string()))
    }

    pub(super) fn cursor(&self) -> ScriptCursor {
        ScriptCursor(self.consumed.clone())
    }

    pub(super) fn restore(&mut self, cursor: &ScriptCursor) -> Result<(), GatewayError> {
        if cursor.0.len() != self.script.entries.len() {
            return Err(GatewayError::CursorMismatch);
        }
        self.consumed = cursor.0.clone();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_schema_round_trips() {
        let script = Script::new()
            .entry_matched("live.decide", ["You are R_19,"], [r#"{"dwell":60}"#])
            .cycled("live.decide", ["stay"])
            .with_default("ok");
        let text = serde_json::to_string(&script).unwrap();
        assert!(text.contains("\"match\""));
        assert!(text.contains("\"default\""));
        assert!(text.contains("\"cycle\":true"));
        let back: Script = serde_json::from_str(&text).unwrap();
        assert_eq!(back, script);
    }

    #[test]
    fn single_string_match_is_accepted() {
        let text = r#"{"entries":[{"tag":"t","match":"needle","responses":["r"]}]}"#;
        let script: Script = serde_json::from_str(text).unwrap();
        let mut state = ScriptState::new(script);
        assert!(state.pop("t", "without").is_err());
        assert_eq!(state.pop("t", "with needle inside").unwrap(), "r");
    }

    #[test]
    fn cursor_restore_resumes_mid_queue() {
        let script = Script::new().entry("t", ["a", "b", "c"]);
        let mut state = ScriptState::new(script.clone());
        state.pop("t", "p").unwrap();
        state.pop("t", "p").unwrap();
        let cursor = state.cursor();

        let mut fresh = ScriptState::new(script);
        fresh.restore(&cursor).unwrap();
        assert_eq!(fresh.pop("t", "p").unwrap(), "c");
    }

    #[test]
    fn cursor_restore_rejects_wrong_shape() {
        let script = Script::new().entry("t", ["a"]);
        let mut state = ScriptState::new(script);
        let err = state.restore(&ScriptCursor(vec![0, 0])).unwrap_err();
        assert!(matches!(err, GatewayError::CursorMismatch));
    }
}
