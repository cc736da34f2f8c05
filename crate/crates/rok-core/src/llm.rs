//! The single boundary for all LLM interaction: prompt templates, call
//! transcripts with a per-question budget, and interchangeable backends.
//!
//! Two backends ship: a deterministic mock that replays scripted responses
//! from a JSON table (used by the whole offline test suite) and a
//! chat-completions HTTP client with bounded retries. Backends are safe to
//! share across questions; a transcript belongs to exactly one question.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, RokError};

/// The four pipeline stages that talk to the LLM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    CotExpand,
    ExtractEntities,
    FilterTriples,
    FinalAnswer,
}

impl TemplateId {
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::CotExpand => "cot_expand",
            TemplateId::ExtractEntities => "extract_entities",
            TemplateId::FilterTriples => "filter_triples",
            TemplateId::FinalAnswer => "final_answer",
        }
    }
}

impl std::fmt::Display for TemplateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Step-by-step expansion of the patient's question.
pub const COT_EXPAND_TEMPLATE: &str = "\n    You are an excellent AI doctor, and you can give disease diagnosis suggestions and analysis process and recommend medications step by step based on the patient's question.\n    Patient's question: {question}\n    Output:\n    ";

/// Key-entity extraction over the expanded answer.
pub const EXTRACT_ENTITIES_TEMPLATE: &str = "\n    extract the key entities for the following text: {text}\n    The types of key entities that need to be extracted are related to disease diagnosis, treatment protocols, medications, tests that need to be done, possible disease names, etc\n    Output:\n    ";

/// Batched relevance filter over the candidate neighbor triples.
pub const FILTER_TRIPLES_TEMPLATE: &str = "\n    Please select the triplets related to the patient's question and the content that needs to be answered. Please refer to the following background knowledge when answering.\n    Patent\u{2019}s question:\n    ###{question}\n    The content that needs to be answered:\n    1.What disease does the patient have?\n    2.What tests should patient take to confirm the diagnosis?\n    3. What recommended medications can cure the disease?\n    background knowledge:\n    ###{background}\n    Triplets:\n    ###{triples}\n    Output:\n    {one_shot}\n";

/// Final answer over both reasoning-path sets.
pub const FINAL_ANSWER_TEMPLATE: &str = "\n    You are an excellent AI doctor, and you can diagnose diseases and recommend medications based on the symptoms in the conversation. \n    Patient input: {question}\n    You have some medical knowledge information in the following:\n    ###{main_paths}\n    ###{neighbor_triples}\n    The final answer consists of three parts:\n    1.What disease does the patient have? If it is not possible to determine from the MEDICAL background knowledge given above what disease the patient is suffering from then this section can be left unanswered or the patient can be referred for tests to determine what disease he may have.\n    2.What tests should patient take to confirm the diagnosis? \n    3.What recommended medications can cure the disease? Think step by step.\n    Output: The answer includes disease and tests and recommended medications.\n    There is an output sample:\n    Output:\n    Based on your symptoms, it sounds like you may have acute pancreatitis. To confirm this, we will need to run a series of medical tests. We will start with a blood test and a complete blood count (CBC), as well as a radiographic imaging procedure to determine the extent of the pancreatitis. We may also need to provide intravenous fluid replacement and perform kidney function tests and glucose level measurements. Additionally, a urinalysis will be necessary to check for any kidney damage.\n\n";

/// Worked example substituted into the filter template's one-shot slot.
pub const DEFAULT_ONE_SHOT: &str = "Example - question: I keep coughing at night. Triplets: (cough, is_symptom_of, bronchitis) (cough, is_symptom_of, asthma) (asthma, treated_with, inhaled steroids) (rash, is_symptom_of, measles). Selected: (cough, is_symptom_of, bronchitis) (cough, is_symptom_of, asthma) (asthma, treated_with, inhaled steroids)";

/// A prompt template: fixed text with `{name}` placeholders.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub text: String,
}

impl PromptTemplate {
    pub fn new(id: TemplateId, text: impl Into<String>) -> Self {
        Self {
            id,
            text: text.into(),
        }
    }

    /// Placeholder names appearing in the template text.
    pub fn placeholders(&self) -> Vec<String> {
        let mut names = Vec::new();
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find('{') {
            if let Some(len) = rest[start + 1..].find('}') {
                names.push(rest[start + 1..start + 1 + len].to_string());
                rest = &rest[start + 1 + len + 1..];
            } else {
                break;
            }
        }
        names
    }

    /// Byte-deterministic substitution of every placeholder in one pass
    /// over the template, so markers inside binding values are left alone.
    /// Missing bindings are an error; empty bindings are allowed but
    /// flagged.
    pub fn render(&self, bindings: &HashMap<&str, String>) -> Result<Rendered> {
        let mut prompt = String::with_capacity(self.text.len());
        let mut empty_slots = Vec::new();
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find('{') {
            let Some(len) = rest[start + 1..].find('}') else {
                break;
            };
            prompt.push_str(&rest[..start]);
            let name = &rest[start + 1..start + 1 + len];
            let value = bindings
                .get(name)
                .ok_or_else(|| RokError::MissingBinding(name.to_string()))?;
            if value.is_empty() {
                empty_slots.push(name.to_string());
            }
            prompt.push_str(value);
            rest = &rest[start + 1 + len + 1..];
        }
        prompt.push_str(rest);
        Ok(Rendered {
            prompt,
            empty_slots,
        })
    }
}

/// A rendered prompt plus any placeholders that received empty values.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub prompt: String,
    pub empty_slots: Vec<String>,
}

/// The shipped template set (medical defaults); per-domain variants load
/// from a JSON file mapping template ids to texts.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub cot_expand: PromptTemplate,
    pub extract_entities: PromptTemplate,
    pub filter_triples: PromptTemplate,
    pub final_answer: PromptTemplate,
    pub one_shot: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            cot_expand: PromptTemplate::new(TemplateId::CotExpand, COT_EXPAND_TEMPLATE),
            extract_entities: PromptTemplate::new(
                TemplateId::ExtractEntities,
                EXTRACT_ENTITIES_TEMPLATE,
            ),
            filter_triples: PromptTemplate::new(TemplateId::FilterTriples, FILTER_TRIPLES_TEMPLATE),
            final_answer: PromptTemplate::new(TemplateId::FinalAnswer, FINAL_ANSWER_TEMPLATE),
            one_shot: DEFAULT_ONE_SHOT.to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct TemplateFile {
    cot_expand: Option<String>,
    extract_entities: Option<String>,
    filter_triples: Option<String>,
    final_answer: Option<String>,
    one_shot: Option<String>,
}

impl TemplateSet {
    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        match id {
            TemplateId::CotExpand => &self.cot_expand,
            TemplateId::ExtractEntities => &self.extract_entities,
            TemplateId::FilterTriples => &self.filter_triples,
            TemplateId::FinalAnswer => &self.final_answer,
        }
    }

    /// Load per-domain overrides; absent keys keep the shipped defaults.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let parsed: TemplateFile = serde_json::from_str(&text)?;
        let mut set = TemplateSet::default();
        if let Some(t) = parsed.cot_expand {
            set.cot_expand.text = t;
        }
        if let Some(t) = parsed.extract_entities {
            set.extract_entities.text = t;
        }
        if let Some(t) = parsed.filter_triples {
            set.filter_triples.text = t;
        }
        if let Some(t) = parsed.final_answer {
            set.final_answer.text = t;
        }
        if let Some(t) = parsed.one_shot {
            set.one_shot = t;
        }
        Ok(set)
    }
}

/// One recorded LLM exchange.
#[derive(Debug, Clone, Serialize)]
pub struct LlmCall {
    pub template: TemplateId,
    pub prompt: String,
    pub response: String,
    #[serde(skip)]
    pub latency: Duration,
}

/// Append-only record of a question's LLM calls, bounded by the budget.
#[derive(Debug, Clone, Serialize)]
pub struct LlmTranscript {
    calls: Vec<LlmCall>,
    budget: usize,
}

impl LlmTranscript {
    pub fn new(budget: usize) -> Self {
        Self {
            calls: Vec::new(),
            budget,
        }
    }

    pub fn calls(&self) -> &[LlmCall] {
        &self.calls
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.calls.len()
    }

    pub fn template_ids(&self) -> Vec<TemplateId> {
        self.calls.iter().map(|c| c.template).collect()
    }
}

/// Hex SHA-256 of a rendered prompt; the mock table's lookup key.
pub fn prompt_hash(prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    format!("{:x}", hasher.finalize())
}

/// Anything that can answer a rendered prompt.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, template: TemplateId, prompt: &str) -> Result<String>;
    fn kind(&self) -> &'static str;
}

/// Dispatch one budgeted call: render, check the budget, complete, record.
pub fn call(
    backend: &dyn LlmBackend,
    transcript: &mut LlmTranscript,
    template: &PromptTemplate,
    bindings: &HashMap<&str, String>,
) -> Result<String> {
    if transcript.calls.len() >= transcript.budget {
        return Err(RokError::BudgetExhausted(transcript.budget));
    }
    let rendered = template.render(bindings)?;
    let start = Instant::now();
    let response = backend.complete(template.id, &rendered.prompt)?;
    transcript.calls.push(LlmCall {
        template: template.id,
        prompt: rendered.prompt,
        response: response.clone(),
        latency: start.elapsed(),
    });
    Ok(response)
}

/// Scripted backend: responses keyed by template id and prompt hash, with
/// an optional `"default"` per template. Fully deterministic.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    table: HashMap<String, HashMap<String, String>>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Load `{template_id: {prompt_hash_or_default: response}}`.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let table: HashMap<String, HashMap<String, String>> = serde_json::from_str(&text)?;
        Ok(Self { table })
    }

    pub fn with_default(mut self, template: TemplateId, response: impl Into<String>) -> Self {
        self.table
            .entry(template.as_str().to_string())
            .or_default()
            .insert("default".to_string(), response.into());
        self
    }

    pub fn with_response(
        mut self,
        template: TemplateId,
        hash: impl Into<String>,
        response: impl Into<String>,
    ) -> Self {
        self.table
            .entry(template.as_str().to_string())
            .or_default()
            .insert(hash.into(), response.into());
        self
    }
}

impl LlmBackend for MockBackend {
    fn complete(&self, template: TemplateId, prompt: &str) -> Result<String> {
        let hash = prompt_hash(prompt);
        let entry = self.table.get(template.as_str());
        if let Some(entry) = entry {
            if let Some(resp) = entry.get(&hash).or_else(|| entry.get("default")) {
                return Ok(resp.clone());
            }
        }
        Err(RokError::ScriptedGap {
            template: template.as_str().to_string(),
            hash,
        })
    }

    fn kind(&self) -> &'static str {
        "mock"
    }
}

/// Chat-completions HTTP backend. Transient failures are retried with
/// exponential backoff; retries do not count against the call budget,
/// which measures logical calls.
pub struct HttpBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    max_retries: u32,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

impl HttpBackend {
    /// The API key is read from `ROK_LLM_API_KEY` when present.
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var("ROK_LLM_API_KEY").ok(),
            max_retries: 2,
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn request_body(&self, prompt: &str) -> serde_json::Value {
        serde_json::to_value(ChatRequest {
            model: &self.model,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
        })
        .expect("chat request serializes")
    }

    fn post_once(&self, prompt: &str) -> std::result::Result<String, String> {
        let mut req = self
            .client
            .post(&self.endpoint)
            .json(&self.request_body(prompt));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("status {}", resp.status()));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| e.to_string())?;
        parsed
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or_else(|| "response had no choices".to_string())
    }
}

// Retry wrapper kept separate from the HTTP plumbing so the backoff policy
// is testable without a server.
pub(crate) fn with_retries<T>(
    max_retries: u32,
    mut attempt: impl FnMut() -> std::result::Result<T, String>,
) -> Result<T> {
    let mut tries = 0;
    loop {
        match attempt() {
            Ok(v) => return Ok(v),
            Err(msg) => {
                if tries >= max_retries {
                    return Err(RokError::Transport {
                        msg,
                        retries: tries,
                    });
                }
                std::thread::sleep(Duration::from_millis(100 * 2u64.pow(tries)));
                tries += 1;
            }
        }
    }
}

impl LlmBackend for HttpBackend {
    fn complete(&self, _template: TemplateId, prompt: &str) -> Result<String> {
        with_retries(self.max_retries, || self.post_once(prompt))
    }

    fn kind(&self) -> &'static str {
        "http"
    }
}

/// Lenient split of an LLM response into entity mentions: one per line or
/// comma-separated, with numbering and bullets stripped.
pub fn parse_entity_list(response: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in response.lines() {
        let line = strip_list_marker(line.trim());
        if line.is_empty() {
            continue;
        }
        for piece in line.split([',', '，', '、']) {
            let piece = strip_list_marker(piece.trim());
            if !piece.is_empty() {
                out.push(piece.to_string());
            }
        }
    }
    out
}

// "1. foo", "2) foo", "- foo", "* foo", "• foo" -> "foo"
pub(crate) fn strip_list_marker(s: &str) -> &str {
    let s = s.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(stripped) = rest.strip_prefix(['.', ')', ':']) {
            return stripped.trim();
        }
    }
    s.trim()
}
