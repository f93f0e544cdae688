use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompts::{MEMBERSHIP_CUE, PERSPECTIVE_QUESTION, SEPARATOR};
use crate::error::{Error, Result};

/// Anything that turns a prompt into a completion. Implementations must be
/// safe to call from several threads at once.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;

    /// Completions served so far, including failed ones.
    fn calls(&self) -> usize;
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

fn llm_err(context: &str, message: impl Into<String>) -> Error {
    Error::Llm {
        context: context.to_string(),
        message: message.into(),
    }
}

/// How the scripted backend answers perspective questions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Judge {
    /// Groups users by their scripted perspective.
    #[default]
    Faithful,
    /// Claims every queried user shares the perspective.
    Blind,
    RejectAll,
    /// Accepts each user by a coin flip keyed on the prompt and user.
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub needle: String,
    pub response: String,
}

/// On-disk form of a scripted backend.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Script {
    pub judge: Judge,
    /// Perspective tag of each user, used by the judge.
    pub perspectives: BTreeMap<usize, String>,
    /// Checked in order; the first needle contained in the prompt wins.
    pub rules: Vec<Rule>,
    /// Prompt hash to response; takes precedence over everything else.
    pub exact: BTreeMap<String, String>,
    /// Prompts containing any of these fail.
    pub fail: Vec<String>,
}

impl Script {
    pub fn load(path: &Path) -> Result<Script> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Deterministic offline backend.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    pub script: Script,
    calls: AtomicUsize,
}

/// User ids of the `User <n> Summary:` lines in `lines`.
fn summary_users<'a>(lines: impl Iterator<Item = &'a str>) -> Vec<usize> {
    lines
        .filter_map(|l| {
            let rest = l.strip_prefix("User ")?;
            let (id, _) = rest.split_once(" Summary:")?;
            id.parse().ok()
        })
        .collect()
}

fn user_ids(s: &str) -> Vec<usize> {
    s.split(',')
        .filter_map(|t| t.trim().strip_prefix("User ")?.trim().parse().ok())
        .collect()
}

fn join_users(users: &[usize]) -> String {
    users
        .iter()
        .map(|u| format!("User {u}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        ScriptedBackend {
            script,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_judge(judge: Judge, perspectives: BTreeMap<usize, String>) -> Self {
        Self::new(Script {
            judge,
            perspectives,
            ..Default::default()
        })
    }

    fn perspective(&self, user: usize) -> Option<&str> {
        self.script.perspectives.get(&user).map(String::as_str)
    }

    /// Most common perspective among `users`, ties to the smallest tag.
    fn dominant(&self, users: &[usize]) -> Option<String> {
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for &u in users {
            if let Some(p) = self.perspective(u) {
                *freq.entry(p).or_default() += 1;
            }
        }
        freq.iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(p, _)| p.to_string())
    }

    fn coin(prompt: &str, user: usize) -> bool {
        let h = Sha256::digest(format!("{prompt}\u{0}{user}").as_bytes());
        h[0] & 1 == 1
    }

    fn judge_membership(&self, prompt: &str) -> String {
        let lines: Vec<&str> = prompt.lines().collect();
        let cue = lines.iter().position(|l| *l == MEMBERSHIP_CUE);
        let gold = cue.and_then(|c| lines.get(c + 1)).filter(|l| l.contains(SEPARATOR));
        let (queried, target) = match (cue, gold) {
            (Some(c), Some(gold)) => {
                let accepted = user_ids(gold.split_once(SEPARATOR).expect("separator").0);
                (
                    summary_users(lines[c + 2..].iter().copied()),
                    self.dominant(&accepted),
                )
            }
            _ => {
                let queried = summary_users(lines.iter().copied());
                let target = self.dominant(&queried);
                (queried, target)
            }
        };
        let (pos, neg): (Vec<usize>, Vec<usize>) = queried.iter().partition(|&&u| match self.script.judge {
            Judge::Faithful => target.is_some() && self.perspective(u) == target.as_deref(),
            Judge::Blind => true,
            Judge::RejectAll => false,
            Judge::Random => Self::coin(prompt, u),
        });
        format!("{}{SEPARATOR}{}", join_users(&pos), join_users(&neg))
    }

    fn judge_opinion(&self, prompt: &str) -> String {
        let users = summary_users(prompt.lines());
        match self.script.judge {
            Judge::Blind => format!("{} all share the same perspective.", join_users(&users)),
            Judge::RejectAll => "None of these users share a perspective.".into(),
            Judge::Faithful | Judge::Random => {
                let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
                for &u in &users {
                    groups.entry(self.perspective(u).unwrap_or("?")).or_default().push(u);
                }
                groups
                    .values()
                    .map(|g| {
                        if g.len() == 1 {
                            format!("{} stands apart", join_users(g))
                        } else {
                            format!("{} share a perspective", join_users(g))
                        }
                    })
                    .collect::<Vec<_>>()
                    .join("; ")
                    + "."
            }
        }
    }

    fn respond(&self, prompt: &str) -> Result<String> {
        if self.script.fail.iter().any(|n| prompt.contains(n.as_str())) {
            return Err(llm_err("scripted", "scripted failure"));
        }
        if let Some(r) = self.script.exact.get(&prompt_hash(prompt)) {
            return Ok(r.clone());
        }
        if prompt.ends_with(MEMBERSHIP_CUE) {
            return Ok(self.judge_membership(prompt));
        }
        if prompt.ends_with(PERSPECTIVE_QUESTION) {
            return Ok(self.judge_opinion(prompt));
        }
        self.script
            .rules
            .iter()
            .find(|r| prompt.contains(r.needle.as_str()))
            .map(|r| r.response.clone())
            .ok_or_else(|| llm_err("scripted", "no scripted response for prompt"))
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.respond(prompt)
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "http://127.0.0.1:8080/complete".into(),
            model: "default".into(),
            temperature: 0.0,
            max_tokens: 256,
            timeout_secs: 60,
            retries: 2,
        }
    }
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct HttpResponse {
    text: String,
}

/// Vendor-neutral JSON endpoint: `{model, prompt, temperature, max_tokens}`
/// in, `{text}` out.
pub struct HttpBackend {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
    calls: AtomicUsize,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| llm_err(&cfg.endpoint, e.to_string()))?;
        Ok(HttpBackend {
            cfg,
            client,
            calls: AtomicUsize::new(0),
        })
    }

    fn once(&self, prompt: &str) -> std::result::Result<String, String> {
        let resp = self
            .client
            .post(&self.cfg.endpoint)
            .json(&HttpRequest {
                model: &self.cfg.model,
                prompt,
                temperature: self.cfg.temperature,
                max_tokens: self.cfg.max_tokens,
            })
            .send()
            .map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("status {}", resp.status()));
        }
        resp.json::<HttpResponse>()
            .map(|r| r.text)
            .map_err(|e| e.to_string())
    }
}

impl LlmBackend for HttpBackend {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut last = String::new();
        for attempt in 0..=self.cfg.retries {
            match self.once(prompt) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("llm request attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(llm_err(&self.cfg.endpoint, last))
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    hash: String,
    response: String,
}

/// Prompt-hash keyed cache in front of another backend. With a file, new
/// completions are appended so a later run can replay them.
pub struct CachedBackend {
    inner: Box<dyn LlmBackend>,
    entries: Mutex<BTreeMap<String, String>>,
    file: Option<PathBuf>,
    replay_only: bool,
    calls: AtomicUsize,
}

impl CachedBackend {
    pub fn new(inner: Box<dyn LlmBackend>) -> Self {
        CachedBackend {
            inner,
            entries: Mutex::new(BTreeMap::new()),
            file: None,
            replay_only: false,
            calls: AtomicUsize::new(0),
        }
    }

    /// Loads `path` if it exists and appends new entries to it.
    pub fn with_file(inner: Box<dyn LlmBackend>, path: &Path, replay_only: bool) -> Result<Self> {
        let mut entries = BTreeMap::new();
        if path.exists() {
            let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheLine = serde_json::from_str(&line)
                    .map_err(|e| Error::parse(path.display().to_string(), i + 1, e.to_string()))?;
                entries.insert(entry.hash, entry.response);
            }
        }
        Ok(CachedBackend {
            inner,
            entries: Mutex::new(entries),
            file: Some(path.to_path_buf()),
            replay_only,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inner_calls(&self) -> usize {
        self.inner.calls()
    }
}

impl LlmBackend for CachedBackend {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let hash = prompt_hash(prompt);
        if let Some(r) = self.entries.lock().expect("cache lock").get(&hash) {
            return Ok(r.clone());
        }
        if self.replay_only {
            return Err(llm_err("cache", format!("no cached response for {hash}")));
        }
        let response = self.inner.complete(prompt)?;
        let mut entries = self.entries.lock().expect("cache lock");
        if entries.insert(hash.clone(), response.clone()).is_none() {
            if let Some(path) = &self.file {
                let line = serde_json::to_string(&CacheLine {
                    hash,
                    response: response.clone(),
                })?;
                let mut f = std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| Error::io(path, e))?;
                writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
            }
        }
        Ok(response)
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Users named anywhere in a free-text opinion. Only for tests that check
/// opinions never drive decisions.
pub fn mentioned_users(text: &str) -> BTreeSet<usize> {
    text.split(|c: char| !c.is_ascii_digit())
        .filter_map(|t| t.parse().ok())
        .collect()
}
