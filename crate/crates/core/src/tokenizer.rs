//! Pluggable text boundary. Real subword tokenizers live outside this crate;
//! the byte-level one here maps each UTF-8 byte to its value.

use crate::Token;

pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;

    fn encode(&self, text: &str) -> Vec<Token>;

    /// Best-effort decode; ids the tokenizer does not know render as U+FFFD.
    fn decode(&self, tokens: &[Token]) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ByteTokenizer;

impl Tokenizer for ByteTokenizer {
    fn name(&self) -> &str {
        "byte"
    }

    fn encode(&self, text: &str) -> Vec<Token> {
        text.bytes().map(Token::from).collect()
    }

    fn decode(&self, tokens: &[Token]) -> String {
        let mut bytes = Vec::with_capacity(tokens.len());
        for &t in tokens {
            match u8::try_from(t) {
                Ok(b) => bytes.push(b),
                Err(_) => bytes.extend_from_slice("\u{FFFD}".as_bytes()),
            }
        }
        String::from_utf8_lossy(&bytes).into_owned()
    }
}

/// Looks up a shipped tokenizer by name.
pub fn by_name(name: &str) -> Option<Box<dyn Tokenizer>> {
    match name {
        "byte" => Some(Box::new(ByteTokenizer)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_level() {
        assert_eq!(ByteTokenizer.encode("ab"), vec![97, 98]);
        assert_eq!(ByteTokenizer.decode(&[104, 105]), "hi");
        assert_eq!(ByteTokenizer.decode(&[104, 999]), "h\u{FFFD}");
        assert!(by_name("byte").is_some());
        assert!(by_name("gpt2").is_none());
    }
}
