//! Planted-community graphs for tests and desk-scale experiments.
//!
//! Two collection periods are generated, `train` and `test`, with disjoint
//! node sets. Community `c` owns sources, users and articles whose features
//! are drawn around a shared centre; the test period moves every centre by a
//! random offset of norm `test_shift`. All sources of a community carry that
//! community's labels.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::files::{IngestRecordSet, NodeRow};
use super::texts::UserText;
use crate::community::kmeans;
use crate::error::{Error, Result};
use crate::eval::adjusted_rand_index;
use crate::graph::{EdgeRecord, LabelRecord, NodeId, Relation, SourceLabels};
use crate::llm::{Judge, Rule, Script, SUMMARY_PREFIX};

const PERSPECTIVES: [&str; 6] = [
    "progressive",
    "conservative",
    "centrist",
    "libertarian",
    "populist",
    "green",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub communities: usize,
    pub users_per_community: usize,
    pub sources_per_community: usize,
    pub articles_per_source: usize,
    pub feature_dim: usize,
    /// Edge probability between a user and a node of its own community.
    pub p_in: f64,
    /// Edge probability towards other communities.
    pub p_out: f64,
    /// Noise of user and article features.
    pub sigma: f64,
    /// Noise of source features.
    pub source_sigma: f64,
    /// Norm of each community centre.
    pub separation: f64,
    pub test_shift: f64,
    /// (factuality, bias) class of each community. Cycled when shorter than
    /// `communities`; empty means `(c % 3, (c + 1) % 3)`.
    pub labels: Vec<[usize; 2]>,
    /// Share of train-period sources moved to the dev split.
    pub dev_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            communities: 3,
            users_per_community: 24,
            sources_per_community: 12,
            articles_per_source: 2,
            feature_dim: 16,
            p_in: 0.3,
            p_out: 0.02,
            sigma: 1.0,
            source_sigma: 1.0,
            separation: 3.0,
            test_shift: 0.0,
            labels: Vec::new(),
            dev_fraction: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.communities == 0 || self.users_per_community == 0 || self.sources_per_community == 0 {
            return bad("communities, users and sources per community must be positive");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        for p in [self.p_in, self.p_out, self.dev_fraction] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if self.communities > 1 && self.p_in <= self.p_out {
            return bad("p_in must exceed p_out for the planting to be recoverable");
        }
        for v in [self.sigma, self.source_sigma, self.separation, self.test_shift] {
            if !(v.is_finite() && v >= 0.0) {
                return bad("noise, separation and shift must be finite and >= 0");
            }
        }
        if self.labels.iter().flatten().any(|&c| c >= 3) {
            return bad("label classes must be < 3");
        }
        Ok(())
    }

    pub fn community_labels(&self, c: usize) -> [usize; 2] {
        if self.labels.is_empty() {
            [c % 3, (c + 1) % 3]
        } else {
            self.labels[c % self.labels.len()]
        }
    }
}

pub fn perspective_name(c: usize) -> String {
    let base = PERSPECTIVES[c % PERSPECTIVES.len()];
    match c / PERSPECTIVES.len() {
        0 => base.to_string(),
        n => format!("{base}-{n}"),
    }
}

/// Generated records plus the ground truth the generator planted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub config: SyntheticConfig,
    pub records: IngestRecordSet,
    /// Planted community of every user, by user index.
    pub user_community: Vec<usize>,
    pub source_community: Vec<usize>,
    /// Summary rules and per-user perspectives for the scripted LLM.
    pub script: Script,
}

/// Named event each period's articles and tweets talk about.
pub fn period_event(period: &str) -> &'static str {
    if period == "test" {
        "Harbor Strike"
    } else {
        "Valley Summit"
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

fn scaled_to(mut v: Vec<f64>, norm: f64) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x *= norm / n);
    }
    v
}

fn around(rng: &mut ChaCha8Rng, centre: &[f64], sigma: f64) -> Vec<f64> {
    centre
        .iter()
        .map(|c| {
            let z: f64 = StandardNormal.sample(rng);
            // Rounded so the text files round-trip exactly.
            ((c + sigma * z) * 1e6).round() / 1e6
        })
        .collect()
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.feature_dim;
    let centres: Vec<Vec<f64>> = (0..cfg.communities)
        .map(|_| scaled_to(normal_vec(&mut rng, dim, 1.0), cfg.separation))
        .collect();
    let mut set = IngestRecordSet::default();
    let mut user_community = Vec::new();
    let mut source_community = Vec::new();
    let mut script = Script {
        judge: Judge::Faithful,
        ..Default::default()
    };

    for period in ["train", "test"] {
        let event = period_event(period);
        let period_centres: Vec<Vec<f64>> = if period == "test" && cfg.test_shift > 0.0 {
            centres
                .iter()
                .map(|c| {
                    let shift = scaled_to(normal_vec(&mut rng, dim, 1.0), cfg.test_shift);
                    c.iter().zip(&shift).map(|(a, b)| a + b).collect()
                })
                .collect()
        } else {
            centres.clone()
        };

        // Sources and their articles.
        let first_source = set.sources.len();
        let mut articles_of: Vec<Vec<usize>> = vec![Vec::new(); cfg.communities];
        for c in 0..cfg.communities {
            for _ in 0..cfg.sources_per_community {
                let s = set.sources.len();
                let split_period = if period == "train" && rng.random_bool(cfg.dev_fraction) {
                    "dev"
                } else {
                    period
                };
                set.sources.push(NodeRow {
                    index: s,
                    period: split_period.into(),
                    name: format!("outlet-{s}"),
                    features: around(&mut rng, &period_centres[c], cfg.source_sigma),
                });
                source_community.push(c);
                let [f, b] = cfg.community_labels(c);
                set.labels.push(LabelRecord {
                    source: s,
                    labels: SourceLabels::from_classes(f, b).expect("validated classes"),
                });
                for _ in 0..cfg.articles_per_source {
                    let a = set.articles.len();
                    set.articles.push(NodeRow {
                        index: a,
                        period: period.into(),
                        name: format!("article-{a}"),
                        features: around(&mut rng, &period_centres[c], cfg.sigma),
                    });
                    set.texts.articles.push(format!(
                        "coverage of {event} from outlet {s} with a {} angle",
                        perspective_name(c)
                    ));
                    set.edges.push(EdgeRecord {
                        relation: Relation::Publishes,
                        src: NodeId::source(s),
                        dst: NodeId::article(a),
                    });
                    articles_of[c].push(a);
                }
            }
        }
        let sources: Vec<usize> = (first_source..set.sources.len()).collect();

        // Users and their edges.
        let first_user = set.users.len();
        for c in 0..cfg.communities {
            for _ in 0..cfg.users_per_community {
                let u = set.users.len();
                set.users.push(NodeRow {
                    index: u,
                    period: period.into(),
                    name: format!("u{u}"),
                    features: around(&mut rng, &period_centres[c], cfg.sigma),
                });
                user_community.push(c);
                let view = perspective_name(c);
                set.texts.users.insert(
                    u,
                    UserText {
                        bio: format!("@u{u} | reader and commenter"),
                        tweets: vec![
                            "weekend plans with family".into(),
                            format!("reading about {event} today"),
                            format!("my take on {event} is {view}"),
                        ],
                        metadata: vec![("period".into(), period.into())],
                    },
                );
                script.perspectives.insert(u, view.clone());
                script.rules.push(Rule {
                    needle: format!("Bio: @u{u} |"),
                    response: format!("{SUMMARY_PREFIX} {event} from a {view} perspective."),
                });
            }
        }
        let users: Vec<usize> = (first_user..set.users.len()).collect();
        for &u in &users {
            let cu = user_community[u];
            let p = |same: bool| if same { cfg.p_in } else { cfg.p_out };
            for &s in &sources {
                if rng.random_bool(p(source_community[s] == cu)) {
                    set.edges.push(EdgeRecord {
                        relation: Relation::FollowsSource,
                        src: NodeId::user(u),
                        dst: NodeId::source(s),
                    });
                }
            }
            for &v in &users {
                if v != u && rng.random_bool(p(user_community[v] == cu)) {
                    set.edges.push(EdgeRecord {
                        relation: Relation::FollowsUser,
                        src: NodeId::user(u),
                        dst: NodeId::user(v),
                    });
                }
            }
            for (c, arts) in articles_of.iter().enumerate() {
                for &a in arts {
                    if rng.random_bool(p(c == cu)) {
                        set.edges.push(EdgeRecord {
                            relation: Relation::Propagates,
                            src: NodeId::user(u),
                            dst: NodeId::article(a),
                        });
                    }
                }
            }
        }
    }
    Ok(SyntheticData {
        config: cfg.clone(),
        records: set,
        user_community,
        source_community,
        script,
    })
}

impl SyntheticData {
    /// The fixture with a different judge.
    pub fn script_with(&self, judge: Judge) -> Script {
        Script {
            judge,
            ..self.script.clone()
        }
    }

    /// Users of one period, by index.
    pub fn users_in(&self, period: &str) -> Vec<usize> {
        self.records
            .users
            .iter()
            .filter(|r| r.period == period)
            .map(|r| r.index)
            .collect()
    }

    /// Adjusted Rand index between the planted communities of the test users
    /// and k-means over their features, each averaged with the users it
    /// follows.
    pub fn planted_recovery_ari(&self, seed: u64) -> Result<f64> {
        let users = self.users_in("test");
        let pos: BTreeMap<usize, usize> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let mut follows: Vec<Vec<usize>> = vec![Vec::new(); users.len()];
        for e in &self.records.edges {
            if e.relation == Relation::FollowsUser {
                if let (Some(&a), Some(&b)) = (pos.get(&e.src.index), pos.get(&e.dst.index)) {
                    follows[a].push(b);
                }
            }
        }
        let dim = self.config.feature_dim;
        let mut points = Array2::zeros((users.len(), dim));
        for (i, &u) in users.iter().enumerate() {
            let group = std::iter::once(u).chain(follows[i].iter().map(|&j| users[j]));
            let mut n = 0.0;
            for v in group {
                n += 1.0;
                for (j, x) in self.records.users[v].features.iter().enumerate() {
                    points[[i, j]] += *x;
                }
            }
            points.row_mut(i).mapv_inplace(|x| x / n);
        }
        let km = kmeans(points.view(), self.config.communities, seed)?;
        let planted: Vec<usize> = users.iter().map(|&u| self.user_community[u]).collect();
        adjusted_rand_index(&planted, &km.assignments)
    }

    /// Planted membership of test users, grouped per community.
    pub fn planted_groups(&self, period: &str) -> BTreeMap<usize, Vec<usize>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for u in self.users_in(period) {
            groups.entry(self.user_community[u]).or_default().push(u);
        }
        groups
    }
}
