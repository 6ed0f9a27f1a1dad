/// Dictionary key of a bigram. Tokens never contain whitespace, so the
/// single space keeps unigram and bigram keys disjoint.
pub fn bigram_key(first: &str, second: &str) -> String {
    let mut key = String::with_capacity(first.len() + second.len() + 1);
    key.push_str(first);
    key.push(' ');
    key.push_str(second);
    key
}

pub fn is_bigram(key: &str) -> bool {
    key.contains(' ')
}

/// Every unigram of the message followed by every adjacent bigram, in
/// position order. Bigrams never span two messages.
pub fn extract_ngrams(tokens: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len() * 2);
    out.extend(tokens.iter().cloned());
    out.extend(tokens.windows(2).map(|w| bigram_key(&w[0], &w[1])));
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn msg(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    fn multiset(ngrams: Vec<String>) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for g in ngrams {
            *m.entry(g).or_default() += 1;
        }
        m
    }

    #[test]
    fn pair() {
        assert_eq!(extract_ngrams(&msg(&["a", "b"])), ["a", "b", "a b"]);
    }

    #[test]
    fn single_and_empty() {
        assert_eq!(extract_ngrams(&msg(&["a"])), ["a"]);
        assert!(extract_ngrams(&[]).is_empty());
    }

    #[test]
    fn repeated_tokens_counted() {
        let grams = extract_ngrams(&msg(&["a", "b", "a"]));
        assert_eq!(grams.len(), 5);
        let m = multiset(grams);
        assert_eq!(m["a"], 2);
        assert_eq!(m["b"], 1);
        assert_eq!(m["a b"], 1);
        assert_eq!(m["b a"], 1);
    }
}
