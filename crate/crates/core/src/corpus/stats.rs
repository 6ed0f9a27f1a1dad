use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use super::dump::DELETED;
use super::tree::PostTree;
use crate::error::Result;

/// Empirical cumulative distribution: for each distinct value `t`, the
/// fraction of observations `<= t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cdf {
    pub rows: Vec<(u64, f64)>,
}

impl Cdf {
    pub fn from_values(mut values: Vec<u64>) -> Self {
        values.sort_unstable();
        let n = values.len() as f64;
        let mut rows: Vec<(u64, f64)> = Vec::new();
        for (i, &v) in values.iter().enumerate() {
            let frac = (i + 1) as f64 / n;
            match rows.last_mut() {
                Some(last) if last.0 == v => last.1 = frac,
                _ => rows.push((v, frac)),
            }
        }
        Cdf { rows }
    }

    /// Fraction of observations `<= t`.
    pub fn at(&self, t: u64) -> f64 {
        self.rows.iter().take_while(|r| r.0 <= t).last().map_or(0.0, |r| r.1)
    }

    pub fn write_tsv<W: Write>(&self, mut w: W, header: &str) -> Result<()> {
        writeln!(w, "{header}\tcumulative_fraction")?;
        for (t, f) in &self.rows {
            writeln!(w, "{t}\t{f:.6}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetStats {
    /// Over users (deleted accounts excluded).
    pub comments_per_user: Cdf,
    /// Over posts.
    pub comments_per_post: Cdf,
    /// Over every node including the post itself.
    pub replies_per_comment: Cdf,
    /// Over comments; top-level comments have depth 1.
    pub comment_depth: Cdf,
}

pub fn dataset_stats(trees: &[PostTree]) -> DatasetStats {
    let mut per_user: HashMap<&str, u64> = HashMap::new();
    let mut per_post = Vec::with_capacity(trees.len());
    let mut replies = Vec::new();
    let mut depths = Vec::new();
    for t in trees {
        per_post.push(t.len() as u64);
        replies.push(t.top_level().count() as u64);
        for (i, c) in t.comments().iter().enumerate() {
            if c.author != DELETED {
                *per_user.entry(c.author.as_str()).or_default() += 1;
            }
            replies.push(t.reply_count(i) as u64);
            depths.push(t.depth(i) as u64);
        }
    }
    DatasetStats {
        comments_per_user: Cdf::from_values(per_user.into_values().collect()),
        comments_per_post: Cdf::from_values(per_post),
        replies_per_comment: Cdf::from_values(replies),
        comment_depth: Cdf::from_values(depths),
    }
}

impl DatasetStats {
    pub fn tables(&self) -> [(&'static str, &'static str, &Cdf); 4] {
        [
            ("comments_per_user.tsv", "comments", &self.comments_per_user),
            ("comments_per_post.tsv", "comments", &self.comments_per_post),
            ("replies_per_comment.tsv", "replies", &self.replies_per_comment),
            ("comment_depth.tsv", "depth", &self.comment_depth),
        ]
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, header, cdf) in self.tables() {
            let f = std::fs::File::create(dir.join(name))?;
            cdf.write_tsv(std::io::BufWriter::new(f), header)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tree::build_trees;
    use crate::corpus::tree::tests::comment;

    #[test]
    fn chain_depth_reaches_one_at_three() {
        let cs = vec![
            comment("a", None, "p", 1),
            comment("b", Some("a"), "p", 2),
            comment("c", Some("b"), "p", 3),
        ];
        let f = build_trees(cs, &[]).unwrap();
        let s = dataset_stats(&f.trees);
        assert_eq!(s.comment_depth.rows.last(), Some(&(3, 1.0)));
        assert!((s.comment_depth.at(2) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn star_tree_replies() {
        let cs = (0..5).map(|i| comment(&format!("c{i}"), None, "p", i)).collect();
        let f = build_trees(cs, &[]).unwrap();
        let s = dataset_stats(&f.trees);
        assert!((s.replies_per_comment.at(0) - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(s.replies_per_comment.at(5), 1.0);
        assert_eq!(s.comments_per_post.rows, [(5, 1.0)]);
    }

    #[test]
    fn empty_forest() {
        let s = dataset_stats(&[]);
        assert!(s.comment_depth.rows.is_empty());
        let mut out = Vec::new();
        s.comment_depth.write_tsv(&mut out, "depth").unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "depth\tcumulative_fraction\n");
    }
}
