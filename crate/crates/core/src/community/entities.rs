use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::graph::HeteroGraph;

/// Pluggable entity recogniser.
pub trait EntityExtractor: Send + Sync {
    fn name(&self) -> &str;

    /// Case-normalised entities of `text`, deduplicated, in order of first
    /// appearance.
    fn extract(&self, text: &str) -> Vec<String>;
}

const STOP_WORDS: &[&str] = &[
    "a", "after", "an", "and", "as", "at", "before", "but", "by", "for", "from", "he", "her",
    "his", "i", "if", "in", "is", "it", "its", "my", "of", "on", "or", "our", "she", "so",
    "that", "the", "their", "these", "they", "this", "those", "to", "was", "we", "were",
    "what", "when", "why", "with", "you",
];

/// Maximal runs of capitalised tokens. Runs starting with a stop word are
/// dropped; all-caps acronyms stand alone; punctuation ends a run.
#[derive(Clone, Copy, Debug, Default)]
pub struct CapitalizedRuns;

impl CapitalizedRuns {
    fn is_acronym(token: &str) -> bool {
        token.chars().filter(|c| c.is_alphabetic()).count() >= 2
            && token.chars().all(|c| !c.is_alphabetic() || c.is_uppercase())
    }
}

impl EntityExtractor for CapitalizedRuns {
    fn name(&self) -> &str {
        "capitalized"
    }

    fn extract(&self, text: &str) -> Vec<String> {
        let mut found: Vec<String> = Vec::new();
        let mut run: Vec<&str> = Vec::new();
        let flush = |run: &mut Vec<&str>, found: &mut Vec<String>| {
            if let Some(first) = run.first() {
                if !STOP_WORDS.contains(&first.to_lowercase().as_str()) {
                    let entity = run.join(" ").to_lowercase();
                    if !found.contains(&entity) {
                        found.push(entity);
                    }
                }
            }
            run.clear();
        };
        for raw in text.split_whitespace() {
            let token = raw.trim_matches(|c: char| !c.is_alphanumeric());
            let breaks_after = raw
                .chars()
                .last()
                .is_some_and(|c| matches!(c, ',' | '.' | ';' | ':' | '!' | '?' | ')' | '"'));
            let capitalised = token.chars().next().is_some_and(char::is_uppercase);
            if !capitalised {
                flush(&mut run, &mut found);
                continue;
            }
            if Self::is_acronym(token) {
                flush(&mut run, &mut found);
                run.push(token);
                flush(&mut run, &mut found);
                continue;
            }
            run.push(token);
            if breaks_after {
                flush(&mut run, &mut found);
            }
        }
        flush(&mut run, &mut found);
        found
    }
}

/// Looks an extractor up by its configuration key.
pub fn extractor_by_name(name: &str) -> Option<Box<dyn EntityExtractor>> {
    match name {
        "capitalized" => Some(Box::new(CapitalizedRuns)),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityFilter {
    pub kept: Vec<usize>,
    /// Empty when no member's articles mention any entity.
    pub anchor: String,
    /// Set when no entity was found and the cluster was kept unchanged.
    pub no_entities: bool,
}

/// Entities of each user's propagated articles, per article.
fn user_article_entities(
    user: usize,
    g: &HeteroGraph,
    texts: &[String],
    extractor: &dyn EntityExtractor,
) -> Vec<BTreeSet<String>> {
    g.propagated_articles(user)
        .into_iter()
        .map(|a| {
            texts
                .get(a)
                .map(|t| extractor.extract(t).into_iter().collect())
                .unwrap_or_default()
        })
        .collect()
}

/// Picks the entity mentioned by the most members (each member counts once)
/// and keeps the members who propagated an article containing it. Frequency
/// ties go to the lexicographically smallest entity.
pub fn filter_cluster_by_entity(
    members: &[usize],
    g: &HeteroGraph,
    texts: &[String],
    extractor: &dyn EntityExtractor,
) -> EntityFilter {
    let per_user: Vec<Vec<BTreeSet<String>>> = members
        .iter()
        .map(|&u| user_article_entities(u, g, texts, extractor))
        .collect();
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for articles in &per_user {
        let user_entities: BTreeSet<&str> =
            articles.iter().flatten().map(String::as_str).collect();
        for e in user_entities {
            *freq.entry(e).or_default() += 1;
        }
    }
    let Some((&anchor, _)) = freq
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
    else {
        return EntityFilter {
            kept: members.to_vec(),
            anchor: String::new(),
            no_entities: true,
        };
    };
    let kept = members
        .iter()
        .zip(&per_user)
        .filter(|(_, articles)| articles.iter().any(|a| a.contains(anchor)))
        .map(|(&u, _)| u)
        .collect();
    EntityFilter {
        kept,
        anchor: anchor.to_string(),
        no_entities: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(text: &str) -> Vec<String> {
        CapitalizedRuns.extract(text)
    }

    #[test]
    fn capitalised_runs() {
        assert_eq!(
            ex("George Floyd protests in Minneapolis"),
            vec!["george floyd", "minneapolis"]
        );
    }

    #[test]
    fn lowercase_text_has_no_entities() {
        assert!(ex("the quick brown fox").is_empty());
        assert!(ex("").is_empty());
    }

    #[test]
    fn repeated_acronym_deduplicated() {
        assert_eq!(ex("BLM BLM BLM"), vec!["blm"]);
    }

    #[test]
    fn stop_word_runs_dropped_and_punctuation_splits() {
        assert_eq!(ex("The Senate met."), Vec::<String>::new());
        assert_eq!(
            ex("rally in Minneapolis, Minnesota today"),
            vec!["minneapolis", "minnesota"]
        );
    }

    #[test]
    fn lookup_by_name() {
        assert!(extractor_by_name("capitalized").is_some());
        assert!(extractor_by_name("flair").is_none());
    }
}
