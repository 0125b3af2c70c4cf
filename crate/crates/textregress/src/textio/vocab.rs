//! Prompt vocabulary: specials, byte-fallback tokens, learned word tokens,
//! and the float codec alphabet appended at the end of the id space.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::study::Study;
use crate::textio::float::{FloatToken, FloatTokenization};
use crate::textio::serialize::render_prompt;

pub const PAD_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const UNK_ID: u32 = 2;
const BYTE_BASE: u32 = 3;
const NUM_RESERVED: usize = 3 + 256;

/// Default text-vocabulary budget at desk scale.
pub const DEFAULT_VOCAB_SIZE: usize = 4096;

#[derive(Debug, Clone)]
pub struct Vocabulary {
    codec: FloatTokenization,
    /// Rendered token strings, index = id.
    tokens: Vec<String>,
    token_to_id: HashMap<String, u32>,
    /// Learned word tokens occupy ids [NUM_RESERVED, custom_start).
    custom_start: u32,
    custom_alphabet: Vec<FloatToken>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyJson {
    codec: FloatTokenization,
    custom_start: u32,
    token_to_id: HashMap<String, u32>,
}

fn byte_token(b: u8) -> String {
    format!("<0x{b:02X}>")
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

/// Maximal `[A-Za-z_]+` runs of `text`, as (start, end) byte ranges.
fn word_runs(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut runs = vec![];
    let mut i = 0;
    while i < bytes.len() {
        if is_word_byte(bytes[i]) {
            let start = i;
            while i < bytes.len() && is_word_byte(bytes[i]) {
                i += 1;
            }
            runs.push((start, i));
        } else {
            i += 1;
        }
    }
    runs
}

impl Vocabulary {
    fn from_words(codec: FloatTokenization, words: Vec<String>) -> Result<Self> {
        codec.validate()?;
        let custom_alphabet = codec.alphabet();
        let mut tokens = Vec::with_capacity(NUM_RESERVED + words.len() + custom_alphabet.len());
        tokens.push("<pad>".into());
        tokens.push("<eos>".into());
        tokens.push("<unk>".into());
        for b in 0..=255u8 {
            tokens.push(byte_token(b));
        }
        tokens.extend(words);
        let custom_start = tokens.len() as u32;
        for t in &custom_alphabet {
            tokens.push(t.render(codec.num_digits));
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (id, t) in tokens.iter().enumerate() {
            if token_to_id.insert(t.clone(), id as u32).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token {t}")));
            }
        }
        Ok(Self { codec, tokens, token_to_id, custom_start, custom_alphabet })
    }

    pub fn codec(&self) -> &FloatTokenization {
        &self.codec
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    /// First id of the float-codec alphabet; all text ids are below it.
    pub fn custom_start(&self) -> u32 {
        self.custom_start
    }

    pub fn token_string(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn custom_id(&self, token: &FloatToken) -> Option<u32> {
        self.custom_alphabet
            .iter()
            .position(|t| t == token)
            .map(|i| self.custom_start + i as u32)
    }

    pub fn float_token_of(&self, id: u32) -> Option<FloatToken> {
        let i = id.checked_sub(self.custom_start)? as usize;
        self.custom_alphabet.get(i).copied()
    }

    /// Greedy word-or-byte encoding; never emits `<unk>`, so decoding is an
    /// exact inverse.
    pub fn encode_text(&self, text: &str) -> Vec<u32> {
        let bytes = text.as_bytes();
        let mut out = Vec::with_capacity(bytes.len() / 2);
        let mut i = 0;
        while i < bytes.len() {
            if is_word_byte(bytes[i]) {
                let start = i;
                while i < bytes.len() && is_word_byte(bytes[i]) {
                    i += 1;
                }
                let word = &text[start..i];
                if let Some(&id) = self.token_to_id.get(word) {
                    out.push(id);
                } else {
                    out.extend(bytes[start..i].iter().map(|&b| BYTE_BASE + b as u32));
                }
            } else {
                out.push(BYTE_BASE + bytes[i] as u32);
                i += 1;
            }
        }
        out
    }

    pub fn decode_text(&self, ids: &[u32]) -> Result<String> {
        let mut bytes = Vec::with_capacity(ids.len());
        for &id in ids {
            if (BYTE_BASE..BYTE_BASE + 256).contains(&id) {
                bytes.push((id - BYTE_BASE) as u8);
            } else if id >= NUM_RESERVED as u32 && id < self.custom_start {
                bytes.extend_from_slice(self.tokens[id as usize].as_bytes());
            } else {
                return Err(Error::Vocabulary(format!("id {id} is not a text token")));
            }
        }
        String::from_utf8(bytes).map_err(|e| Error::Vocabulary(format!("invalid utf-8: {e}")))
    }

    /// Codec token ids for a metric value.
    pub fn encode_y(&self, value: f64) -> Result<Vec<u32>> {
        self.codec
            .tokenize(value)?
            .iter()
            .map(|t| {
                self.custom_id(t)
                    .ok_or_else(|| Error::Vocabulary("codec token missing from vocabulary".into()))
            })
            .collect()
    }

    pub fn decode_y(&self, ids: &[u32]) -> Result<f64> {
        let tokens: Vec<FloatToken> = ids
            .iter()
            .map(|&id| {
                self.float_token_of(id)
                    .ok_or_else(|| Error::Vocabulary(format!("id {id} is not a codec token")))
            })
            .collect::<Result<_>>()?;
        self.codec.detokenize(&tokens)
    }

    /// Ids the decoder may emit at `position` of the answer.
    pub fn allowed_ids(&self, position: usize) -> Vec<u32> {
        self.codec
            .allowed_tokens(position)
            .iter()
            .map(|t| self.custom_id(t).expect("alphabet token present"))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = VocabularyJson {
            codec: self.codec,
            custom_start: self.custom_start,
            token_to_id: self.token_to_id.clone(),
        };
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), &json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let json: VocabularyJson = serde_json::from_reader(std::io::BufReader::new(f))?;
        let n = json.token_to_id.len();
        let mut tokens = vec![String::new(); n];
        for (t, id) in &json.token_to_id {
            let slot = tokens
                .get_mut(*id as usize)
                .ok_or_else(|| Error::Vocabulary(format!("id {id} out of range")))?;
            *slot = t.clone();
        }
        let words = tokens
            .get(NUM_RESERVED..json.custom_start as usize)
            .ok_or_else(|| Error::Vocabulary("truncated vocabulary file".into()))?
            .to_vec();
        let vocab = Self::from_words(json.codec, words)?;
        if vocab.tokens != tokens {
            return Err(Error::Vocabulary("vocabulary file inconsistent with layout".into()));
        }
        Ok(vocab)
    }
}

/// Learns word tokens from the serialized prompts of `corpus` and appends
/// the codec alphabet. `size` caps the total id count; words are admitted by
/// descending frequency, ties broken lexicographically.
pub fn build_vocabulary(
    corpus: &[Study],
    size: usize,
    codec: FloatTokenization,
) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Vocabulary("empty corpus".into()));
    }
    codec.validate()?;
    let floor = NUM_RESERVED + codec.alphabet().len();
    if size < floor {
        return Err(Error::Vocabulary(format!(
            "size {size} below the {floor} reserved ids"
        )));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for study in corpus {
        for trial in &study.trials {
            let prompt = render_prompt(&study.space, &trial.x, &study.metadata)?;
            for (start, end) in word_runs(&prompt) {
                *counts.entry(prompt[start..end].to_string()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(size - floor);
    let words: Vec<String> = ranked.into_iter().map(|(w, _)| w).collect();
    Vocabulary::from_words(codec, words)
}
