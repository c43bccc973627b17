use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::text::{join_words, split_words};

pub type TokenId = u32;

pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";

/// Word-level vocabulary. Ids 0 and 1 are `<unk>` and `<eos>`; the rest are sorted words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != UNK || tokens[1] != EOS {
            return Err(Error::Config("vocabulary must start with <unk>, <eos>".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Builds the vocabulary covering every word piece of `texts`.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<&str> = texts.into_iter().flat_map(split_words).collect();
        let tokens = [UNK, EOS]
            .into_iter()
            .chain(words.into_iter().filter(|w| *w != UNK && *w != EOS))
            .map(String::from)
            .collect();
        Self::from_tokens(tokens).expect("fresh vocabulary is well formed")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk(&self) -> TokenId {
        0
    }

    pub fn eos(&self) -> TokenId {
        1
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens.get(id as usize).map_or(UNK, String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        split_words(text).into_iter().map(|w| self.id(w).unwrap_or(0)).collect()
    }

    /// Joins token pieces back into canonically spaced text; `<eos>` is dropped.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        let pieces: Vec<&str> = ids
            .iter()
            .filter(|&&i| i != self.eos())
            .map(|&i| self.token(i))
            .collect();
        join_words(&pieces)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_encode_decode() {
        let v = Vocab::build(["Q: Where was Ivo born?", "Ivo was born in Avaria."]);
        assert_eq!(v.token(0), UNK);
        assert_eq!(v.token(1), EOS);
        let ids = v.encode("Ivo was born in Avaria.");
        assert!(ids.iter().all(|&i| i > 1));
        assert_eq!(v.decode(&ids), "Ivo was born in Avaria.");
        assert_eq!(v.encode("zebra"), vec![0]);
    }

    #[test]
    fn rejects_malformed_token_lists() {
        assert!(Vocab::from_tokens(vec!["a".into()]).is_err());
        assert!(Vocab::from_tokens(vec![UNK.into(), EOS.into(), "x".into(), "x".into()]).is_err());
    }
}
