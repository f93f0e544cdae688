use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::UserProfileText;

/// Most tweets shown to the summariser.
pub const MAX_PROFILE_TWEETS: usize = 10;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserText {
    pub bio: String,
    /// Oldest first.
    pub tweets: Vec<String>,
    pub metadata: Vec<(String, String)>,
}

/// Bios, tweets and article texts, keyed by node index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextStore {
    pub users: BTreeMap<usize, UserText>,
    /// Indexed by article; missing texts are empty strings.
    pub articles: Vec<String>,
}

impl TextStore {
    /// Profile for the summariser: the bio plus up to `max_tweets` tweets
    /// mentioning `anchor`, most recent first. Falls back to the most recent
    /// tweets when none mention it.
    pub fn profile_for(&self, user: usize, anchor: &str, max_tweets: usize) -> UserProfileText {
        let Some(t) = self.users.get(&user) else {
            return UserProfileText {
                user,
                ..Default::default()
            };
        };
        let needle = anchor.to_lowercase();
        let mut tweets: Vec<String> = if needle.is_empty() {
            Vec::new()
        } else {
            t.tweets
                .iter()
                .rev()
                .filter(|tw| tw.to_lowercase().contains(&needle))
                .take(max_tweets)
                .cloned()
                .collect()
        };
        if tweets.is_empty() {
            tweets = t.tweets.iter().rev().take(max_tweets).cloned().collect();
        }
        UserProfileText {
            user,
            bio: t.bio.clone(),
            tweets,
            metadata: t.metadata.clone(),
        }
    }

    pub fn write_profiles<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (u, t) in &self.users {
            writeln!(out, "user {u} bio {}", one_line(&t.bio))?;
            for (k, v) in &t.metadata {
                writeln!(out, "meta {u} {}={}", one_line(k), one_line(v))?;
            }
            for tw in &t.tweets {
                writeln!(out, "tweet {u} {}", one_line(tw))?;
            }
        }
        Ok(())
    }

    pub fn read_profiles<R: BufRead>(&mut self, input: R, name: &str) -> Result<()> {
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io(name, e))?;
            let lineno = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, ' ');
            let kind = parts.next().unwrap_or_default();
            let user: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(name, lineno, "expected a user index"))?;
            let rest = parts.next().unwrap_or_default();
            let entry = self.users.entry(user).or_default();
            match kind {
                "user" => {
                    let bio = rest
                        .strip_prefix("bio")
                        .ok_or_else(|| Error::parse(name, lineno, "expected `user <idx> bio <text>`"))?;
                    entry.bio = bio.trim_start().to_string();
                }
                "tweet" => entry.tweets.push(rest.to_string()),
                "meta" => {
                    let (k, v) = rest
                        .split_once('=')
                        .ok_or_else(|| Error::parse(name, lineno, "expected `meta <idx> key=value`"))?;
                    entry.metadata.push((k.to_string(), v.to_string()));
                }
                other => {
                    return Err(Error::parse(name, lineno, format!("unknown profile record `{other}`")))
                }
            }
        }
        Ok(())
    }

    pub fn write_articles<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (a, text) in self.articles.iter().enumerate() {
            writeln!(out, "{a}\t{}", one_line(text))?;
        }
        Ok(())
    }

    pub fn read_articles<R: BufRead>(&mut self, input: R, name: &str) -> Result<()> {
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io(name, e))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (idx, text) = line.split_once('\t').unwrap_or((line.as_str(), ""));
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| Error::parse(name, i + 1, "expected `<article idx>\\t<text>`"))?;
            if self.articles.len() <= idx {
                self.articles.resize(idx + 1, String::new());
            }
            self.articles[idx] = text.to_string();
        }
        Ok(())
    }

    pub fn save(&self, profiles: &Path, articles: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_profiles(&mut buf).map_err(|e| Error::io(profiles, e))?;
        std::fs::write(profiles, buf).map_err(|e| Error::io(profiles, e))?;
        let mut buf = Vec::new();
        self.write_articles(&mut buf).map_err(|e| Error::io(articles, e))?;
        std::fs::write(articles, buf).map_err(|e| Error::io(articles, e))
    }

    /// Missing files give an empty store part.
    pub fn load(profiles: &Path, articles: &Path) -> Result<TextStore> {
        let mut store = TextStore::default();
        if profiles.exists() {
            let f = std::fs::File::open(profiles).map_err(|e| Error::io(profiles, e))?;
            store.read_profiles(BufReader::new(f), &profiles.display().to_string())?;
        }
        if articles.exists() {
            let f = std::fs::File::open(articles).map_err(|e| Error::io(articles, e))?;
            store.read_articles(BufReader::new(f), &articles.display().to_string())?;
        }
        Ok(store)
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> TextStore {
        let mut s = TextStore::default();
        s.users.insert(
            3,
            UserText {
                bio: "news junkie".into(),
                tweets: vec!["old BLM take".into(), "lunch".into(), "new blm take".into()],
                metadata: vec![("followers".into(), "120".into())],
            },
        );
        s.articles = vec!["Protests in Minneapolis".into(), String::new()];
        s
    }

    #[test]
    fn profile_prefers_anchor_tweets_newest_first() {
        let p = store().profile_for(3, "blm", 10);
        assert_eq!(p.tweets, vec!["new blm take", "old BLM take"]);
        let p = store().profile_for(3, "blm", 1);
        assert_eq!(p.tweets, vec!["new blm take"]);
        let p = store().profile_for(3, "senate", 2);
        assert_eq!(p.tweets, vec!["new blm take", "lunch"]);
        assert!(store().profile_for(9, "x", 3).bio.is_empty());
    }

    #[test]
    fn files_round_trip() {
        let s = store();
        let mut prof = Vec::new();
        s.write_profiles(&mut prof).unwrap();
        let mut art = Vec::new();
        s.write_articles(&mut art).unwrap();
        let mut back = TextStore::default();
        back.read_profiles(prof.as_slice(), "p").unwrap();
        back.read_articles(art.as_slice(), "a").unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn bad_profile_line_reports_position() {
        let mut s = TextStore::default();
        let err = s.read_profiles("user 1 bio x\nbogus 1 y\n".as_bytes(), "p.txt").unwrap_err();
        assert!(err.to_string().starts_with("p.txt:2:"), "{err}");
    }
}
