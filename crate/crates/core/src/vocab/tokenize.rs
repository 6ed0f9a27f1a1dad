use std::sync::LazyLock;

use regex::Regex;

/// Sentinel replacing every URL. The angle brackets are punctuation, so no
/// ordinary text can tokenize to this string.
pub const URL_TOKEN: &str = "⟨URL⟩";

static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:https?://|ftp://|www\.)\S+").unwrap());

const URL_TRAILING: &[char] = &['.', ',', ';', ':', '!', '?', ')', ']', '}', '\'', '"', '>'];

/// Lowercases, splits on Unicode whitespace, separates punctuation into
/// single-character tokens and replaces URLs with [`URL_TOKEN`].
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chunk = chunk.to_lowercase();
        let mut rest = chunk.as_str();
        while let Some(m) = find_url(rest) {
            split_plain(&rest[..m.0], &mut tokens);
            tokens.push(URL_TOKEN.to_string());
            rest = &rest[m.1..];
        }
        split_plain(rest, &mut tokens);
    }
    tokens
}

/// Byte range of the first URL in a lowercased chunk. A URL must start the
/// chunk or follow an opening bracket or quote; trailing sentence
/// punctuation is left to the plain splitter.
fn find_url(chunk: &str) -> Option<(usize, usize)> {
    for m in URL.find_iter(chunk) {
        let boundary = chunk[..m.start()]
            .chars()
            .next_back()
            .is_none_or(|c| matches!(c, '(' | '[' | '<' | '"' | '\''));
        if !boundary {
            continue;
        }
        let trimmed = m.as_str().trim_end_matches(URL_TRAILING);
        // "www." alone is not a URL.
        if trimmed.len() <= 4 && trimmed.starts_with("www") {
            continue;
        }
        return Some((m.start(), m.start() + trimmed.len()));
    }
    None
}

fn split_plain(text: &str, out: &mut Vec<String>) {
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            word.push(c);
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
}
