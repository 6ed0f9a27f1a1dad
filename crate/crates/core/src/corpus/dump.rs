use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Author and body marker for deleted accounts and comments.
pub const DELETED: &str = "[deleted]";
/// Body marker for moderator-removed comments; treated like [`DELETED`].
pub const REMOVED: &str = "[removed]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    /// `None` for top-level comments replying to the post itself.
    pub parent_id: Option<String>,
    pub post_id: String,
    pub author: String,
    pub body: String,
    pub created_utc: i64,
    pub score: i64,
}

impl Comment {
    pub fn is_deleted_author(&self) -> bool {
        self.author == DELETED
    }

    pub fn has_missing_body(&self) -> bool {
        let body = self.body.trim();
        body == DELETED || body == REMOVED
    }
}

/// Submission record; its title is the root message of the post tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub title: String,
    pub created_utc: i64,
}

#[derive(Debug, Default)]
pub struct ParsedDump {
    pub comments: Vec<Comment>,
    pub posts: Vec<Post>,
    /// Malformed lines skipped in lenient mode.
    pub skipped: usize,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    parent_id: Option<String>,
    link_id: Option<String>,
    author: Option<String>,
    body: Option<String>,
    title: Option<String>,
    created_utc: Option<Value>,
    score: Option<Value>,
}

/// Removes a leading `t1_` (comment) or `t3_` (post) kind prefix.
pub fn strip_kind_prefix(id: &str) -> &str {
    id.strip_prefix("t1_").or_else(|| id.strip_prefix("t3_")).unwrap_or(id)
}

fn integer(value: &Option<Value>) -> std::result::Result<i64, String> {
    match value {
        None | Some(Value::Null) => Ok(0),
        Some(Value::Number(n)) => n
            .as_i64()
            .or_else(|| n.as_f64().map(|f| f as i64))
            .ok_or_else(|| format!("number {n} out of range")),
        Some(Value::String(s)) => s.trim().parse().map_err(|_| format!("`{s}` is not an integer")),
        Some(other) => Err(format!("expected integer, found {other}")),
    }
}

enum Record {
    Comment(Comment),
    Post(Post),
}

fn parse_record(line: &str) -> std::result::Result<Record, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let id = raw
        .id
        .as_deref()
        .map(strip_kind_prefix)
        .filter(|s| !s.is_empty())
        .ok_or("missing id")?
        .to_string();
    let created_utc = integer(&raw.created_utc)?;

    let Some(body) = raw.body else {
        let title = raw.title.ok_or("record has neither body nor title")?;
        return Ok(Record::Post(Post { id, title, created_utc }));
    };

    let link_id = raw.link_id.ok_or("comment without link_id")?;
    let post_id = strip_kind_prefix(&link_id).to_string();
    if post_id.is_empty() {
        return Err("empty link_id".into());
    }
    let parent_id = match raw.parent_id.as_deref() {
        None | Some("") => None,
        Some(p) if p.starts_with("t3_") => None,
        Some(p) => {
            let p = strip_kind_prefix(p);
            if p == post_id {
                None
            } else if p == id {
                return Err(format!("comment `{id}` is its own parent"));
            } else {
                Some(p.to_string())
            }
        }
    };
    Ok(Record::Comment(Comment {
        id,
        parent_id,
        post_id,
        author: raw.author.ok_or("comment without author")?,
        body,
        created_utc,
        score: integer(&raw.score)?,
    }))
}

/// Reads line-delimited JSON records. Comments carry a `body`; records with
/// a `title` and no body are posts. Blank lines are ignored. In strict mode
/// the first malformed line aborts with its 1-based line number.
pub fn parse_dump<R: BufRead>(reader: R, strict: bool) -> Result<ParsedDump> {
    let mut out = ParsedDump::default();
    for (i, line) in reader.split(b'\n').enumerate() {
        let line = line?;
        let parsed = match std::str::from_utf8(&line) {
            Ok(text) => {
                let text = text.trim();
                if text.is_empty() {
                    continue;
                }
                parse_record(text)
            }
            Err(_) => Err("invalid UTF-8".to_string()),
        };
        match parsed {
            Ok(Record::Comment(c)) => out.comments.push(c),
            Ok(Record::Post(p)) => out.posts.push(p),
            Err(message) if strict => return Err(Error::Parse { line: i + 1, message }),
            Err(message) => {
                log::debug!("skipping line {}: {message}", i + 1);
                out.skipped += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const VALID: &str = r#"{"id":"c1","parent_id":"t3_p","link_id":"t3_p","author":"u","body":"hi","created_utc":1,"score":2,"subreddit":"x"}"#;

    #[test]
    fn prefixes_are_stripped() {
        let line = r#"{"id":"t1_c2","parent_id":"t1_abc","link_id":"t3_p","author":"u","body":"b","created_utc":"10","score":null}"#;
        let d = parse_dump(line.as_bytes(), true).unwrap();
        let c = &d.comments[0];
        assert_eq!(c.id, "c2");
        assert_eq!(c.parent_id.as_deref(), Some("abc"));
        assert_eq!(c.post_id, "p");
        assert_eq!(c.created_utc, 10);
        assert_eq!(c.score, 0);
    }

    #[test]
    fn top_level_parent_is_none() {
        let d = parse_dump(VALID.as_bytes(), true).unwrap();
        assert_eq!(d.comments[0].parent_id, None);
        assert_eq!(d.comments[0].score, 2);
    }

    #[test]
    fn empty_stream() {
        let d = parse_dump(&b""[..], true).unwrap();
        assert!(d.comments.is_empty());
        assert_eq!(d.skipped, 0);
    }

    #[test]
    fn lenient_skips_truncated_line() {
        let input = format!(
            "{VALID}\n{}\n{}\n{}",
            VALID.replace("c1", "c2"),
            VALID.replace("c1", "c3"),
            &VALID[..30]
        );
        let d = parse_dump(input.as_bytes(), false).unwrap();
        assert_eq!(d.comments.len(), 3);
        assert_eq!(d.skipped, 1);
    }

    #[test]
    fn strict_reports_line_number() {
        let input = format!("{VALID}\n\nnot json\n");
        match parse_dump(input.as_bytes(), true) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn self_parent_and_bad_utf8_are_malformed() {
        let own = r#"{"id":"c1","parent_id":"t1_c1","link_id":"t3_p","author":"u","body":"b"}"#;
        let mut input = own.as_bytes().to_vec();
        input.extend_from_slice(b"\n\xff\xfe\n");
        let d = parse_dump(&input[..], false).unwrap();
        assert_eq!(d.skipped, 2);
    }

    #[test]
    fn post_records() {
        let line = r#"{"id":"t3_p","title":"Hello there","created_utc":5}"#;
        let d = parse_dump(line.as_bytes(), true).unwrap();
        assert_eq!(
            d.posts,
            [Post {
                id: "p".into(),
                title: "Hello there".into(),
                created_utc: 5
            }]
        );
    }
}
