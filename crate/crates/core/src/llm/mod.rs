//! Prompt construction, backends and response parsing for the three LLM
//! roles: user summaries, similarity opinions and membership judgements.

mod backend;
mod parse;
mod prompts;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use backend::{
    mentioned_users, prompt_hash, CachedBackend, HttpBackend, HttpConfig, Judge, LlmBackend, Rule,
    Script, ScriptedBackend,
};
pub use parse::{parse_membership_response, MembershipVerdict};
pub use prompts::{
    build_grouping_prompt, build_membership_prompt, build_opinion_query, build_summary_prompt,
    normalize_summary, UserProfileText, UserSummary, MEMBERSHIP_CUE, PERSPECTIVE_QUESTION,
    SEPARATOR, SUMMARY_PREFIX, SUMMARY_QUESTION,
};

use crate::error::{Error, Result};

pub fn summarize_user(p: &UserProfileText, backend: &dyn LlmBackend) -> Result<UserSummary> {
    let prompt = build_summary_prompt(p)?;
    let raw = backend.complete(&prompt).map_err(|e| match e {
        Error::Llm { message, .. } => Error::Llm {
            context: format!("summary of user {}", p.user),
            message,
        },
        other => other,
    })?;
    let text = normalize_summary(&raw).ok_or_else(|| Error::Llm {
        context: format!("summary of user {}", p.user),
        message: "empty response".into(),
    })?;
    Ok(UserSummary { user: p.user, text })
}

/// Summarises every profile with at most `parallelism` requests in flight.
/// Results keep the input order; one failure does not stop the others.
pub fn summarize_batch(
    profiles: &[UserProfileText],
    backend: &dyn LlmBackend,
    parallelism: usize,
) -> Vec<Result<UserSummary>> {
    let width = parallelism.max(1);
    if width == 1 || profiles.len() <= 1 {
        return profiles.iter().map(|p| summarize_user(p, backend)).collect();
    }
    let mut out = Vec::with_capacity(profiles.len());
    for chunk in profiles.chunks(width) {
        let results: Vec<Result<UserSummary>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|p| s.spawn(move || summarize_user(p, backend)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("summary worker panicked"))
                .collect()
        });
        out.extend(results);
    }
    out
}

/// Free-text similarity opinion. Display only.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opinion {
    pub text: String,
    pub warning: Option<String>,
}

pub fn get_opinion(summaries: &[UserSummary], backend: &dyn LlmBackend) -> Opinion {
    let result = build_opinion_query(summaries).and_then(|q| backend.complete(&q));
    match result {
        Ok(text) => Opinion {
            text: text.trim().to_string(),
            warning: None,
        },
        Err(e) => Opinion {
            text: String::new(),
            warning: Some(e.to_string()),
        },
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Scripted,
    Http,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub backend: BackendKind,
    /// Scripted backend fixture (JSON).
    pub script: Option<String>,
    pub http: HttpConfig,
    pub parallelism: usize,
    /// Prompt cache file for replayable runs.
    pub cache: Option<String>,
    pub replay_only: bool,
}

/// Builds the configured backend. Relative paths resolve against `base`.
pub fn build_backend(cfg: &LlmConfig, base: &Path) -> Result<Box<dyn LlmBackend>> {
    let inner: Box<dyn LlmBackend> = match cfg.backend {
        BackendKind::Scripted => {
            let script = match &cfg.script {
                Some(p) => Script::load(&base.join(p))?,
                None => Script::default(),
            };
            Box::new(ScriptedBackend::new(script))
        }
        BackendKind::Http => Box::new(HttpBackend::new(cfg.http.clone())?),
    };
    Ok(match &cfg.cache {
        Some(p) => Box::new(CachedBackend::with_file(inner, &base.join(p), cfg.replay_only)?),
        None => inner,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(user: usize, bio: &str) -> UserProfileText {
        UserProfileText {
            user,
            bio: bio.into(),
            tweets: vec!["t".into()],
            metadata: vec![],
        }
    }

    fn script() -> ScriptedBackend {
        let mut s = Script::default();
        for (needle, response) in [("Bio: a", "The user is discussing a."), ("Bio: b", "likes b"), ("Bio: e", "  ")] {
            s.rules.push(Rule {
                needle: needle.into(),
                response: response.into(),
            });
        }
        s.fail.push("Bio: f".into());
        ScriptedBackend::new(s)
    }

    #[test]
    fn summaries_are_normalised() {
        let b = script();
        assert_eq!(summarize_user(&profile(1, "a"), &b).unwrap().text, "The user is discussing a.");
        assert_eq!(
            summarize_user(&profile(2, "b"), &b).unwrap().text,
            "The user is discussing likes b"
        );
        assert!(summarize_user(&profile(3, "e"), &b).is_err());
    }

    #[test]
    fn batch_keeps_order_and_partial_failures() {
        let b = script();
        let profiles = vec![profile(1, "a"), profile(2, "f"), profile(3, "b")];
        for width in [1, 2, 8] {
            let out = summarize_batch(&profiles, &b, width);
            assert_eq!(out.len(), 3);
            assert_eq!(out[0].as_ref().unwrap().user, 1);
            let err = out[1].as_ref().unwrap_err();
            assert!(err.to_string().contains("user 2"), "{err}");
            assert_eq!(out[2].as_ref().unwrap().user, 3);
        }
    }

    #[test]
    fn opinion_failure_gives_warning() {
        let b = script();
        let s = vec![
            UserSummary { user: 1, text: "x".into() },
            UserSummary { user: 2, text: "y".into() },
        ];
        let op = get_opinion(&s, &b);
        assert!(!op.text.is_empty());
        assert!(op.warning.is_none());
        let mut failing = Script::default();
        failing.fail.push("User 1".into());
        let op = get_opinion(&s, &ScriptedBackend::new(failing));
        assert!(op.text.is_empty());
        assert!(op.warning.is_some());
        assert!(get_opinion(&s[..1], &b).warning.is_some());
    }
}
