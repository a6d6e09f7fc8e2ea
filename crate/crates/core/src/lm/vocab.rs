//! Byte-level tokenization.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub type TokenId = u32;

/// Token alphabet: the 256 byte values followed by BOS, EOS and PAD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub size: usize,
    pub bos: TokenId,
    pub eos: TokenId,
    pub pad: TokenId,
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::BYTES
    }
}

impl Vocab {
    pub const BYTES: Vocab = Vocab { size: 259, bos: 256, eos: 257, pad: 258 };

    #[inline]
    pub fn is_special(&self, id: TokenId) -> bool {
        id == self.bos || id == self.eos || id == self.pad
    }
}

/// A tokenized text. Always starts with BOS.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSeq {
    ids: Vec<TokenId>,
}

impl TokenSeq {
    pub fn from_ids(ids: Vec<TokenId>) -> Self {
        TokenSeq { ids }
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Leading `len` tokens.
    pub fn prefix(&self, len: usize) -> TokenSeq {
        TokenSeq { ids: self.ids[..len.min(self.ids.len())].to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub seq: TokenSeq,
    /// Set when content bytes beyond `context_len - 1` were dropped.
    pub truncated: bool,
}

/// BOS followed by one token per byte, keeping at most `context_len - 1`
/// content bytes.
pub fn encode(text: &[u8], vocab: &Vocab, context_len: usize) -> Encoded {
    let keep = text.len().min(context_len.saturating_sub(1));
    let mut ids = Vec::with_capacity(keep + 1);
    ids.push(vocab.bos);
    ids.extend(text[..keep].iter().map(|&b| b as TokenId));
    Encoded { seq: TokenSeq { ids }, truncated: keep < text.len() }
}

/// Inverse of [`encode`]; special tokens are dropped.
pub fn decode(seq: &TokenSeq, vocab: &Vocab) -> Vec<u8> {
    seq.ids.iter().filter(|&&id| !vocab.is_special(id) && id < 256).map(|&id| id as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_is_bos_only() {
        let e = encode(b"", &Vocab::BYTES, 257);
        assert_eq!(e.seq.ids(), &[256]);
        assert!(!e.truncated);
    }

    #[test]
    fn bytes_map_to_their_values() {
        let e = encode(b"ab", &Vocab::BYTES, 257);
        assert_eq!(e.seq.ids(), &[256, 97, 98]);
    }

    #[test]
    fn long_text_is_truncated_to_context() {
        let text = [b'x'; 300];
        let e = encode(&text, &Vocab::BYTES, 257);
        assert_eq!(e.seq.len(), 257);
        assert_eq!(&e.seq.ids()[1..], &[b'x' as u32; 256][..]);
        assert!(e.truncated);
    }

    proptest! {
        #[test]
        fn round_trip(text in proptest::collection::vec(any::<u8>(), 0..200)) {
            let v = Vocab::BYTES;
            let e = encode(&text, &v, 1024);
            prop_assert!(e.seq.ids().iter().all(|&id| (id as usize) < v.size));
            prop_assert!(e.seq.ids()[1..].iter().all(|&id| !v.is_special(id)));
            prop_assert_eq!(decode(&e.seq, &v), text);
        }
    }
}
