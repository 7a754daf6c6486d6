use crate::tokens::{TokenId, TokenSequence};

/// Byte-level tokenizer: ids `0..256` are raw bytes, followed by specials.
#[derive(Clone, Copy, Debug, Default)]
pub struct ByteTokenizer;

impl ByteTokenizer {
    pub const BOS: TokenId = 256;
    pub const EOS: TokenId = 257;
    /// Smallest model vocabulary that covers every id this tokenizer emits.
    pub const VOCAB_SIZE: usize = 258;

    pub fn encode(&self, text: &str) -> TokenSequence {
        text.bytes().map(TokenId::from).collect()
    }

    /// Decodes byte ids; specials and out-of-range ids are dropped and invalid
    /// UTF-8 is replaced.
    pub fn decode(&self, tokens: &[TokenId]) -> String {
        let bytes: Vec<u8> = tokens
            .iter()
            .filter_map(|&t| u8::try_from(t).ok())
            .collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }
}
