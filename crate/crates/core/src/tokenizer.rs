use std::ops::Range;

/// Splits text into tokens and reports their byte spans.
///
/// Spans must be non-overlapping, in order, and stable under slicing: the
/// text between the start of token `i` and the end of token `j` must
/// tokenize to exactly tokens `i..=j`.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;

    fn spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.spans(text).len()
    }
}

/// Word/punctuation splitter: every maximal run of alphanumeric characters is
/// one token and every other non-whitespace character is a token on its own.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordPunctTokenizer;

impl Tokenizer for WordPunctTokenizer {
    fn name(&self) -> &str {
        "word-punct"
    }

    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut word_start: Option<usize> = None;
        for (i, c) in text.char_indices() {
            if c.is_alphanumeric() {
                word_start.get_or_insert(i);
                continue;
            }
            if let Some(start) = word_start.take() {
                spans.push(start..i);
            }
            if !c.is_whitespace() {
                spans.push(i..i + c.len_utf8());
            }
        }
        if let Some(start) = word_start {
            spans.push(start..text.len());
        }
        spans
    }

    fn count(&self, text: &str) -> usize {
        let mut n = 0;
        let mut in_word = false;
        for c in text.chars() {
            if c.is_alphanumeric() {
                if !in_word {
                    n += 1;
                    in_word = true;
                }
            } else {
                in_word = false;
                if !c.is_whitespace() {
                    n += 1;
                }
            }
        }
        n
    }
}
