//! Markdown removal for comment bodies.
//!
//! Rule table, applied in order:
//!
//! | construct                         | result                          |
//! |-----------------------------------|---------------------------------|
//! | HTML entities `&amp; &lt; &gt;`…  | decoded                         |
//! | fence lines (```` ``` ````, `~~~`)| dropped, block contents kept    |
//! | blockquote markers `>`            | dropped                         |
//! | ATX headers `#`..`######`         | marker dropped                  |
//! | list bullets `* - +`, `1.` `1)`   | marker dropped                  |
//! | horizontal rules `---`, `***`     | dropped                         |
//! | backslash escapes `\*`            | backslash dropped               |
//! | links / images `[t](u)`, `![t](u)`| `t u`                           |
//! | autolinks `<http://…>`            | `http://…`                      |
//! | code spans (backticks)            | backticks dropped               |
//! | strikethrough `~~`                | dropped                         |
//! | emphasis `*`, `**`, `***`         | dropped                         |
//! | emphasis `_`, `__` at word edges  | dropped                         |
//! | superscript `^`                   | dropped                         |

use std::borrow::Cow;
use std::sync::LazyLock;

use regex::{Captures, Regex};

static ENTITY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"&(amp|lt|gt|quot|apos|nbsp|#39);").unwrap());
static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(```|~~~)").unwrap());
static QUOTE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:>\s?)+").unwrap());
static HEADER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*#{1,6}(?:\s+|$)").unwrap());
static BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[*+-]|\d{1,9}[.)])\s+").unwrap());
static RULE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[-*_]\s*){3,}$").unwrap());
static ESCAPE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\\([\\`*_{}\[\]()#+\-.!>~|^])").unwrap());
static LINK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"!?\[([^\]]*)\]\(\s*<?([^)\s>]*)>?(?:\s+"[^"]*")?\s*\)"#).unwrap());
static AUTOLINK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<((?:https?|ftp)://[^>\s]+)>").unwrap());
static MARKERS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"`+|~~|\*+|\^").unwrap());
static LEADING_UNDERSCORE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(^|[\s(\[\x22'])_+").unwrap());
static TRAILING_UNDERSCORE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"_+($|[\s.,;:!?)\]\x22'])").unwrap());

fn decode_entity(caps: &Captures) -> &'static str {
    match &caps[1] {
        "amp" => "&",
        "lt" => "<",
        "gt" => ">",
        "quot" => "\"",
        "apos" | "#39" => "'",
        _ => " ",
    }
}

fn strip_line(line: &str) -> Cow<'_, str> {
    if FENCE.is_match(line) || RULE.is_match(line) {
        return Cow::Borrowed("");
    }
    let line = QUOTE.replace(line, "");
    let line = match HEADER.replace(&line, "") {
        Cow::Borrowed(_) => line,
        Cow::Owned(s) => Cow::Owned(s),
    };
    match BULLET.replace(&line, "") {
        Cow::Borrowed(_) => line,
        Cow::Owned(s) => Cow::Owned(s),
    }
}

/// Removes markdown syntax, keeping link text and turning link targets into
/// plain URLs for the tokenizer.
pub fn strip_markdown(body: &str) -> String {
    if body.is_empty() {
        return String::new();
    }
    let decoded = ENTITY.replace_all(body, decode_entity);
    let lines: Vec<Cow<'_, str>> = decoded.lines().map(strip_line).collect();
    let text = lines.join("\n");
    let text = ESCAPE.replace_all(&text, "$1");
    let text = LINK.replace_all(&text, |c: &Captures| match (c[1].trim().is_empty(), c[2].is_empty()) {
        (false, false) => format!("{} {}", &c[1], &c[2]),
        (false, true) => c[1].to_string(),
        (true, _) => c[2].to_string(),
    });
    let text = AUTOLINK.replace_all(&text, "$1");
    let text = MARKERS.replace_all(&text, "");
    let text = LEADING_UNDERSCORE.replace_all(&text, "$1");
    let text = TRAILING_UNDERSCORE.replace_all(&text, "$1");
    text.into_owned()
}
