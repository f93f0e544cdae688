//! Prompt templates. Layouts are fixed so identical inputs give
//! byte-identical prompts.

use serde::{Deserialize, Serialize};

use crate::community::Example;
use crate::error::{Error, Result};

pub const SUMMARY_QUESTION: &str = "What is the user discussing and what is their perspective?";
pub const SUMMARY_CUE: &str = "Summary:";
pub const SUMMARY_PREFIX: &str = "The user is discussing";
pub const PERSPECTIVE_QUESTION: &str = "Which users have the same perspective?";
pub const MEMBERSHIP_CUE: &str = "Related Users;;;;Not Related Users:";
pub const SEPARATOR: &str = ";;;;";

/// What the summariser sees about one user.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfileText {
    pub user: usize,
    pub bio: String,
    /// Already sampled and ordered.
    pub tweets: Vec<String>,
    pub metadata: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSummary {
    pub user: usize,
    pub text: String,
}

impl From<&Example> for UserSummary {
    fn from(e: &Example) -> Self {
        UserSummary {
            user: e.user,
            text: e.summary.clone(),
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn build_summary_prompt(p: &UserProfileText) -> Result<String> {
    let bio = one_line(&p.bio);
    if bio.is_empty() && p.tweets.is_empty() {
        return Err(Error::Precondition(format!(
            "user {} has neither a bio nor tweets",
            p.user
        )));
    }
    let mut out = format!("{SUMMARY_QUESTION}\n");
    if !bio.is_empty() {
        out.push_str(&format!("Bio: {bio}\n"));
    }
    if !p.metadata.is_empty() {
        let meta: Vec<String> = p
            .metadata
            .iter()
            .map(|(k, v)| format!("{}={}", one_line(k), one_line(v)))
            .collect();
        out.push_str(&format!("Metadata: {}\n", meta.join("; ")));
    }
    for (i, t) in p.tweets.iter().enumerate() {
        out.push_str(&format!("Tweet {}: {}\n", i + 1, one_line(t)));
    }
    out.push_str(SUMMARY_CUE);
    Ok(out)
}

/// Trims the response and enforces the summary lead-in. `None` for an empty
/// response.
pub fn normalize_summary(raw: &str) -> Option<String> {
    let text = one_line(raw);
    if text.is_empty() {
        return None;
    }
    if text.starts_with(SUMMARY_PREFIX) {
        Some(text)
    } else {
        Some(format!("{SUMMARY_PREFIX} {text}"))
    }
}

fn summary_lines(out: &mut String, summaries: impl IntoIterator<Item = (usize, String)>) {
    for (user, text) in summaries {
        out.push_str(&format!("User {user} Summary: {}\n", one_line(&text)));
    }
}

/// Free-form similarity question shown next to the summaries.
pub fn build_opinion_query(summaries: &[UserSummary]) -> Result<String> {
    if summaries.len() < 2 {
        return Err(Error::Precondition(
            "an opinion needs at least two summaries".into(),
        ));
    }
    let mut out = String::new();
    summary_lines(&mut out, summaries.iter().map(|s| (s.user, s.text.clone())));
    out.push_str(PERSPECTIVE_QUESTION);
    Ok(out)
}

fn id_list(users: &[usize]) -> String {
    users
        .iter()
        .map(|u| format!("User {u}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// One-shot membership prompt: a worked example built from the validating
/// judgement, then the queried users.
pub fn build_membership_prompt(
    accepted: &[Example],
    rejected: &[Example],
    queried: &[UserSummary],
) -> Result<String> {
    if accepted.is_empty() || rejected.is_empty() {
        return Err(Error::Precondition(
            "membership prompt needs at least one accepted and one rejected example".into(),
        ));
    }
    if queried.is_empty() {
        return Err(Error::Precondition("no users to query".into()));
    }
    let mut out = format!("{PERSPECTIVE_QUESTION}\n");
    summary_lines(
        &mut out,
        accepted
            .iter()
            .chain(rejected)
            .map(|e| (e.user, e.summary.clone())),
    );
    let pos: Vec<usize> = accepted.iter().map(|e| e.user).collect();
    let neg: Vec<usize> = rejected.iter().map(|e| e.user).collect();
    out.push_str(&format!(
        "{MEMBERSHIP_CUE}\n{}{SEPARATOR}{}\n\n",
        id_list(&pos),
        id_list(&neg)
    ));
    summary_lines(&mut out, queried.iter().map(|s| (s.user, s.text.clone())));
    out.push_str(MEMBERSHIP_CUE);
    Ok(out)
}

/// Membership-style prompt without a worked example, used when the LLM
/// stands in for the human validator.
pub fn build_grouping_prompt(queried: &[UserSummary]) -> Result<String> {
    if queried.is_empty() {
        return Err(Error::Precondition("no users to query".into()));
    }
    let mut out = format!("{PERSPECTIVE_QUESTION}\n");
    summary_lines(&mut out, queried.iter().map(|s| (s.user, s.text.clone())));
    out.push_str(MEMBERSHIP_CUE);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(user: usize, summary: &str) -> Example {
        Example {
            user,
            summary: summary.into(),
        }
    }

    fn sum(user: usize, text: &str) -> UserSummary {
        UserSummary {
            user,
            text: text.into(),
        }
    }

    #[test]
    fn summary_prompt_layout() {
        let p = UserProfileText {
            user: 1,
            bio: "B".into(),
            tweets: vec!["t1".into(), "t2".into()],
            metadata: vec![],
        };
        let prompt = build_summary_prompt(&p).unwrap();
        assert_eq!(
            prompt,
            format!("{SUMMARY_QUESTION}\nBio: B\nTweet 1: t1\nTweet 2: t2\nSummary:")
        );
    }

    #[test]
    fn summary_prompt_without_tweets() {
        let p = UserProfileText {
            user: 1,
            bio: "just a bio".into(),
            ..Default::default()
        };
        let prompt = build_summary_prompt(&p).unwrap();
        assert!(!prompt.contains("Tweet"));
        assert!(prompt.ends_with("Summary:"));
    }

    #[test]
    fn summary_prompt_numbers_ten_tweets_in_order() {
        let p = UserProfileText {
            user: 1,
            bio: String::new(),
            tweets: (1..=10).map(|i| format!("t{i}")).collect(),
            metadata: vec![],
        };
        let prompt = build_summary_prompt(&p).unwrap();
        let lines: Vec<&str> = prompt.lines().filter(|l| l.starts_with("Tweet")).collect();
        assert_eq!(lines.len(), 10);
        for (i, l) in lines.iter().enumerate() {
            assert_eq!(*l, format!("Tweet {}: t{}", i + 1, i + 1));
        }
    }

    #[test]
    fn empty_profile_rejected() {
        let p = UserProfileText {
            user: 3,
            bio: "  ".into(),
            ..Default::default()
        };
        assert!(build_summary_prompt(&p).is_err());
    }

    #[test]
    fn summary_normalisation() {
        assert_eq!(
            normalize_summary("  The user is discussing X.  ").unwrap(),
            "The user is discussing X."
        );
        assert_eq!(
            normalize_summary("is angry about X").unwrap(),
            "The user is discussing is angry about X"
        );
        assert_eq!(normalize_summary(" \n "), None);
    }

    #[test]
    fn opinion_query_layout() {
        let q = build_opinion_query(&[sum(4, "a"), sum(2, "b")]).unwrap();
        assert_eq!(
            q,
            "User 4 Summary: a\nUser 2 Summary: b\nWhich users have the same perspective?"
        );
        assert!(build_opinion_query(&[sum(1, "a")]).is_err());
    }

    #[test]
    fn membership_prompt_gold_line() {
        let prompt = build_membership_prompt(&[ex(1, "a")], &[ex(2, "b")], &[sum(3, "c")]).unwrap();
        let lines: Vec<&str> = prompt.lines().collect();
        assert_eq!(lines[0], PERSPECTIVE_QUESTION);
        assert_eq!(lines[3], MEMBERSHIP_CUE);
        assert_eq!(lines[4], "User 1;;;;User 2");
        assert_eq!(lines[6], "User 3 Summary: c");
        assert_eq!(*lines.last().unwrap(), MEMBERSHIP_CUE);
    }

    #[test]
    fn membership_prompt_lists_all_accepted() {
        let prompt =
            build_membership_prompt(&[ex(1, "a"), ex(5, "e")], &[ex(2, "b")], &[sum(3, "c")]).unwrap();
        assert!(prompt.contains("\nUser 1, User 5;;;;User 2\n"));
    }

    #[test]
    fn membership_prompt_needs_both_example_kinds() {
        assert!(build_membership_prompt(&[ex(1, "a")], &[], &[sum(3, "c")]).is_err());
        assert!(build_membership_prompt(&[], &[ex(1, "a")], &[sum(3, "c")]).is_err());
        assert!(build_membership_prompt(&[ex(1, "a")], &[ex(2, "b")], &[]).is_err());
    }
}
