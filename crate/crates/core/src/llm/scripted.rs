use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError, Usage};

/// Conditions a request must meet for a rule to fire. All listed
/// substrings must be present (or absent, for the `not` lists).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Matcher {
    pub system_contains: Vec<String>,
    pub user_contains: Vec<String>,
    pub user_not_contains: Vec<String>,
}

impl Matcher {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn user_contains(s: impl Into<String>) -> Self {
        Matcher {
            user_contains: vec![s.into()],
            ..Self::default()
        }
    }

    pub fn system_contains(s: impl Into<String>) -> Self {
        Matcher {
            system_contains: vec![s.into()],
            ..Self::default()
        }
    }

    pub fn and_user(mut self, s: impl Into<String>) -> Self {
        self.user_contains.push(s.into());
        self
    }

    pub fn and_not_user(mut self, s: impl Into<String>) -> Self {
        self.user_not_contains.push(s.into());
        self
    }

    pub fn matches(&self, req: &ChatRequest) -> bool {
        self.system_contains.iter().all(|s| req.system.contains(s.as_str()))
            && self.user_contains.iter().all(|s| req.user.contains(s.as_str()))
            && !self.user_not_contains.iter().any(|s| req.user.contains(s.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    #[serde(default)]
    pub when: Matcher,
    pub reply: String,
    #[serde(default)]
    pub usage: Option<Usage>,
}

/// Ordered rule list; the first matching rule answers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    pub rules: Vec<Rule>,
    /// Usage reported when a rule has none. Without it, usage is estimated
    /// as one token per four characters of prompt and reply.
    #[serde(default)]
    pub default_usage: Option<Usage>,
}

impl Script {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read script {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("bad script {}: {e}", path.display()))
    }

    pub fn find(&self, req: &ChatRequest) -> Option<&Rule> {
        self.rules.iter().find(|r| r.when.matches(req))
    }
}

/// Deterministic backend answering from a [`Script`] and recording every
/// request it receives.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    script: Script,
    log: Mutex<Vec<ChatRequest>>,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        ScriptedBackend {
            script,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn rule(mut self, when: Matcher, reply: impl Into<String>) -> Self {
        self.script.rules.push(Rule {
            when,
            reply: reply.into(),
            usage: None,
        });
        self
    }

    pub fn rule_with_usage(mut self, when: Matcher, reply: impl Into<String>, usage: Usage) -> Self {
        self.script.rules.push(Rule {
            when,
            reply: reply.into(),
            usage: Some(usage),
        });
        self
    }

    pub fn with_default_usage(mut self, usage: Usage) -> Self {
        self.script.default_usage = Some(usage);
        self
    }

    pub fn script(&self) -> &Script {
        &self.script
    }

    /// Requests received so far, in the order they were matched.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }
}

fn estimate_tokens(s: &str) -> u64 {
    (s.chars().count() as u64).div_ceil(4)
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        // Matching and recording happen under one lock so the log order is
        // the order in which replies were decided.
        let mut log = self.log.lock().unwrap();
        let rule = self.script.find(req).ok_or_else(|| LlmError::NoScriptMatch {
            system: req.system.chars().take(60).collect(),
        })?;
        log.push(req.clone());
        let usage = rule.usage.or(self.script.default_usage).unwrap_or_else(|| {
            Usage::new(
                estimate_tokens(&req.system) + estimate_tokens(&req.user),
                estimate_tokens(&rule.reply),
            )
        });
        Ok(ChatResponse {
            text: rule.reply.clone(),
            usage,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(system: &str, user: &str) -> ChatRequest {
        ChatRequest::new(system, user, 64, "m").unwrap()
    }

    #[test]
    fn first_matching_rule_answers() {
        let b = ScriptedBackend::empty()
            .rule(Matcher::user_contains("## Operation Pool"), "[write()]")
            .rule(Matcher::any(), "text");
        let r = b.complete(&req("planner", "## Operation Pool\n[write()]")).unwrap();
        assert_eq!(r.text, "[write()]");
        assert_eq!(b.complete(&req("writer", "## Tables")).unwrap().text, "text");
        assert_eq!(b.call_count(), 2);
        assert_eq!(b.requests()[0].system, "planner");
    }

    #[test]
    fn empty_script_has_no_match() {
        let b = ScriptedBackend::empty();
        assert!(matches!(
            b.complete(&req("s", "u")),
            Err(LlmError::NoScriptMatch { .. })
        ));
        assert_eq!(b.call_count(), 0);
    }

    #[test]
    fn usage_precedence() {
        let b = ScriptedBackend::empty()
            .rule_with_usage(Matcher::user_contains("a"), "x", Usage::new(7, 3))
            .rule(Matcher::any(), "abcde")
            .with_default_usage(Usage::new(1, 1));
        assert_eq!(b.complete(&req("s", "a")).unwrap().usage, Usage::new(7, 3));
        assert_eq!(b.complete(&req("s", "b")).unwrap().usage, Usage::new(1, 1));

        let b = ScriptedBackend::empty().rule(Matcher::any(), "abcde");
        assert_eq!(b.complete(&req("ssss", "u")).unwrap().usage, Usage::new(2, 2));
    }

    #[test]
    fn negative_conditions() {
        let m = Matcher::user_contains("## Tables").and_not_user("select_table");
        assert!(m.matches(&req("s", "## Tables")));
        assert!(!m.matches(&req("s", "## Tables select_table(x)")));
    }

    #[test]
    fn script_json_schema() {
        let s: Script = serde_json::from_str(
            r#"{"rules": [{"when": {"system_contains": ["content planner"]}, "reply": "[write()]",
                           "usage": {"input_tokens": 10, "output_tokens": 2}},
                          {"reply": "fallback"}]}"#,
        )
        .unwrap();
        assert_eq!(s.rules.len(), 2);
        assert!(serde_json::from_str::<Script>(r#"{"rules": [{"reply": "x", "bogus": 1}]}"#).is_err());
    }

    #[test]
    fn identical_sequences_give_identical_replies() {
        let make = || {
            ScriptedBackend::empty()
                .rule(Matcher::user_contains("a"), "A")
                .rule(Matcher::any(), "Z")
        };
        let reqs = [req("s", "a"), req("s", "b"), req("s", "ab")];
        let run = |b: &ScriptedBackend| -> Vec<_> {
            reqs.iter().map(|r| b.complete(r).unwrap()).collect()
        };
        assert_eq!(run(&make()), run(&make()));
    }
}
