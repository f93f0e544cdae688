use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::prompts::SEPARATOR;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipVerdict {
    pub accepted: Vec<usize>,
    pub rejected: Vec<usize>,
    pub raw: String,
    /// No separator line, or no queried user mentioned at all.
    pub malformed: bool,
}

/// Integer runs in `s`.
fn numbers(s: &str) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let mut cur = String::new();
    for c in s.chars().chain(std::iter::once(' ')) {
        if c.is_ascii_digit() {
            cur.push(c);
        } else if !cur.is_empty() {
            if let Ok(v) = cur.parse() {
                out.insert(v);
            }
            cur.clear();
        }
    }
    out
}

fn is_cue_echo(line: &str) -> bool {
    let l = line.to_lowercase();
    l.contains("related users") && l.contains("not related users")
}

/// Reads a `related;;;;not related` answer for `queried`. Never fails: users
/// not mentioned on the related side are rejected, and a user named on both
/// sides counts as rejected.
pub fn parse_membership_response(raw: &str, queried: &[usize]) -> MembershipVerdict {
    let line = raw
        .lines()
        .map(str::trim)
        .find(|l| l.contains(SEPARATOR) && !is_cue_echo(l));
    let (left, right, mut malformed) = match line {
        Some(l) => {
            let (a, b) = l.split_once(SEPARATOR).expect("contains separator");
            (numbers(a), numbers(b), false)
        }
        None => (BTreeSet::new(), BTreeSet::new(), true),
    };
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = BTreeSet::new();
    for &u in queried {
        if !seen.insert(u) {
            continue;
        }
        if left.contains(&u) && !right.contains(&u) {
            accepted.push(u);
        } else {
            rejected.push(u);
        }
    }
    if !malformed && !queried.iter().any(|u| left.contains(u) || right.contains(u)) {
        malformed = true;
    }
    MembershipVerdict {
        accepted,
        rejected,
        raw: raw.to_string(),
        malformed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_separator() {
        let v = parse_membership_response("User 3, User 7;;;;User 9", &[3, 7, 9]);
        assert_eq!(v.accepted, vec![3, 7]);
        assert_eq!(v.rejected, vec![9]);
        assert!(!v.malformed);
    }

    #[test]
    fn unmentioned_users_are_rejected() {
        let v = parse_membership_response("User 3;;;;", &[3, 7, 9]);
        assert_eq!(v.accepted, vec![3]);
        assert_eq!(v.rejected, vec![7, 9]);
    }

    #[test]
    fn user_on_both_sides_is_rejected() {
        let v = parse_membership_response("User 3, User 7;;;;User 7", &[3, 7]);
        assert_eq!(v.accepted, vec![3]);
        assert_eq!(v.rejected, vec![7]);
    }

    #[test]
    fn missing_separator_is_malformed() {
        let v = parse_membership_response("I think users 3 and 7 agree", &[3, 7]);
        assert!(v.malformed);
        assert!(v.accepted.is_empty());
        assert_eq!(v.rejected, vec![3, 7]);
    }

    #[test]
    fn echoed_cue_is_skipped() {
        let raw = "Related Users;;;;Not Related Users:\nUser 12;;;;User 4";
        let v = parse_membership_response(raw, &[4, 12]);
        assert_eq!(v.accepted, vec![12]);
        assert_eq!(v.rejected, vec![4]);
    }

    #[test]
    fn ids_outside_query_ignored_and_digits_not_confused() {
        let v = parse_membership_response("User 1, User 100;;;;User 10", &[10, 100]);
        assert_eq!(v.accepted, vec![100]);
        assert_eq!(v.rejected, vec![10]);
    }

    #[test]
    fn empty_response() {
        let v = parse_membership_response("", &[1]);
        assert!(v.malformed);
        assert_eq!(v.rejected, vec![1]);
    }
}
