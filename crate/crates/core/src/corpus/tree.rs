use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dump::{Comment, Post};
use crate::error::{Error, Result};

/// A post and the comments reachable from it. Comments are stored
/// breadth-first with siblings ordered by `(created_utc, id)`, so every
/// parent index is smaller than its child's index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StoredTree", into = "StoredTree")]
pub struct PostTree {
    pub post_id: String,
    pub title: String,
    comments: Vec<Comment>,
    parents: Vec<Option<u32>>,
    children: Vec<Vec<u32>>,
    top_level: Vec<u32>,
    depths: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct StoredTree {
    post_id: String,
    title: String,
    comments: Vec<Comment>,
    parents: Vec<Option<u32>>,
}

impl TryFrom<StoredTree> for PostTree {
    type Error = String;

    fn try_from(s: StoredTree) -> std::result::Result<Self, String> {
        PostTree::from_parts(s.post_id, s.title, s.comments, s.parents)
    }
}

impl From<PostTree> for StoredTree {
    fn from(t: PostTree) -> Self {
        StoredTree {
            post_id: t.post_id,
            title: t.title,
            comments: t.comments,
            parents: t.parents,
        }
    }
}

impl PostTree {
    /// Checks the rooted-tree invariant (each parent precedes its child) and
    /// builds the child and depth indices.
    pub fn from_parts(
        post_id: String,
        title: String,
        comments: Vec<Comment>,
        parents: Vec<Option<u32>>,
    ) -> std::result::Result<Self, String> {
        if comments.len() != parents.len() {
            return Err(format!("post {post_id}: parent list length mismatch"));
        }
        let n = comments.len();
        let mut children = vec![Vec::new(); n];
        let mut top_level = Vec::new();
        let mut depths = vec![0u32; n];
        for (i, p) in parents.iter().enumerate() {
            match *p {
                None => {
                    top_level.push(i as u32);
                    depths[i] = 1;
                }
                Some(p) if (p as usize) < i => {
                    children[p as usize].push(i as u32);
                    depths[i] = depths[p as usize] + 1;
                }
                Some(_) => return Err(format!("post {post_id}: comment {i} precedes its parent")),
            }
        }
        Ok(PostTree {
            post_id,
            title,
            comments,
            parents,
            children,
            top_level,
            depths,
        })
    }

    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }

    pub fn comments(&self) -> &[Comment] {
        &self.comments
    }

    pub fn comment(&self, i: usize) -> &Comment {
        &self.comments[i]
    }

    /// Parent comment index; `None` means the post title.
    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parents[i].map(|p| p as usize)
    }

    pub fn children(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.children[i].iter().map(|&c| c as usize)
    }

    pub fn reply_count(&self, i: usize) -> usize {
        self.children[i].len()
    }

    pub fn top_level(&self) -> impl Iterator<Item = usize> + '_ {
        self.top_level.iter().map(|&c| c as usize)
    }

    /// Distance from the title: top-level comments have depth 1.
    pub fn depth(&self, i: usize) -> usize {
        self.depths[i] as usize
    }

    pub fn max_depth(&self) -> usize {
        self.depths.iter().copied().max().unwrap_or(0) as usize
    }
}

#[derive(Debug, Default)]
pub struct Forest {
    /// Sorted by post id.
    pub trees: Vec<PostTree>,
    /// Ids of comments dropped because their parent chain never reaches the
    /// post, sorted.
    pub orphans: Vec<String>,
}

fn assemble(post_id: String, title: String, mut comments: Vec<Comment>) -> (PostTree, Vec<String>) {
    comments.sort_by(|a, b| (a.created_utc, &a.id).cmp(&(b.created_utc, &b.id)));
    let local: HashMap<&str, usize> = comments.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect();
    let mut top = Vec::new();
    let mut kids: Vec<Vec<usize>> = vec![Vec::new(); comments.len()];
    for (i, c) in comments.iter().enumerate() {
        match c.parent_id.as_deref() {
            None => top.push(i),
            Some(p) => {
                if let Some(&pi) = local.get(p) {
                    kids[pi].push(i);
                }
            }
        }
    }
    // Breadth-first from the title; sort order above carries over to
    // siblings. Nodes not visited are orphans (missing ancestor or cycle).
    let mut order: Vec<usize> = Vec::with_capacity(comments.len());
    let mut new_index = vec![u32::MAX; comments.len()];
    let mut parents = Vec::with_capacity(comments.len());
    let mut queue: VecDeque<(usize, Option<u32>)> = top.into_iter().map(|i| (i, None)).collect();
    while let Some((i, parent)) = queue.pop_front() {
        new_index[i] = order.len() as u32;
        order.push(i);
        parents.push(parent);
        queue.extend(kids[i].iter().map(|&k| (k, Some(new_index[i]))));
    }
    let mut orphans = Vec::new();
    let mut slots: Vec<Option<Comment>> = comments.into_iter().map(Some).collect();
    let ordered: Vec<Comment> = order.iter().map(|&i| slots[i].take().unwrap()).collect();
    for c in slots.into_iter().flatten() {
        orphans.push(c.id);
    }
    let tree = PostTree::from_parts(post_id, title, ordered, parents)
        .expect("breadth-first order satisfies the tree invariant");
    (tree, orphans)
}

/// Groups comments by post and links them into trees. Posts with a title
/// record but no comments yield empty trees; posts without a title record
/// get an empty title.
pub fn build_trees(comments: Vec<Comment>, posts: &[Post]) -> Result<Forest> {
    let mut seen = HashSet::with_capacity(comments.len());
    for c in &comments {
        if !seen.insert(c.id.as_str()) {
            return Err(Error::DuplicateId(c.id.clone()));
        }
    }
    drop(seen);

    let mut titles: BTreeMap<&str, &str> = BTreeMap::new();
    for p in posts {
        titles.entry(p.id.as_str()).or_insert(p.title.as_str());
    }
    let mut groups: BTreeMap<String, Vec<Comment>> = titles.keys().map(|k| (k.to_string(), Vec::new())).collect();
    for c in comments {
        groups.entry(c.post_id.clone()).or_default().push(c);
    }
    let built: Vec<(PostTree, Vec<String>)> = groups
        .into_par_iter()
        .map(|(post_id, cs)| {
            let title = titles.get(post_id.as_str()).copied().unwrap_or("").to_string();
            assemble(post_id, title, cs)
        })
        .collect();

    let mut forest = Forest::default();
    for (tree, orphans) in built {
        forest.trees.push(tree);
        forest.orphans.extend(orphans);
    }
    forest.orphans.sort();
    Ok(forest)
}

/// One JSON tree per line.
pub fn write_trees<W: Write>(mut w: W, trees: &[PostTree]) -> Result<()> {
    for t in trees {
        serde_json::to_writer(&mut w, t).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trees<R: BufRead>(r: R) -> Result<Vec<PostTree>> {
    let mut trees = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let tree = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        trees.push(tree);
    }
    Ok(trees)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn comment(id: &str, parent: Option<&str>, post: &str, t: i64) -> Comment {
        Comment {
            id: id.into(),
            parent_id: parent.map(Into::into),
            post_id: post.into(),
            author: format!("user_{id}"),
            body: format!("body of {id}"),
            created_utc: t,
            score: 1,
        }
    }

    #[test]
    fn chain_of_three() {
        let cs = vec![
            comment("a", None, "p", 1),
            comment("b", Some("a"), "p", 2),
            comment("c", Some("b"), "p", 3),
        ];
        let f = build_trees(cs, &[]).unwrap();
        assert_eq!(f.trees.len(), 1);
        assert!(f.orphans.is_empty());
        assert_eq!(f.trees[0].max_depth(), 3);
        assert_eq!(f.trees[0].parent(2), Some(1));
    }

    #[test]
    fn missing_middle_makes_tail_orphans() {
        // a <- (b missing) <- c <- d
        let cs = vec![
            comment("a", None, "p", 1),
            comment("c", Some("b"), "p", 3),
            comment("d", Some("c"), "p", 4),
        ];
        let f = build_trees(cs, &[]).unwrap();
        assert_eq!(f.orphans, ["c", "d"]);
        assert_eq!(f.trees[0].len(), 1);
    }

    #[test]
    fn cycles_are_orphaned() {
        let cs = vec![
            comment("x", Some("y"), "p", 1),
            comment("y", Some("x"), "p", 2),
            comment("z", None, "p", 3),
        ];
        let f = build_trees(cs, &[]).unwrap();
        assert_eq!(f.orphans, ["x", "y"]);
        assert_eq!(f.trees[0].len(), 1);
    }

    #[test]
    fn interleaved_posts() {
        let cs = vec![
            comment("a1", None, "p1", 1),
            comment("b1", None, "p2", 1),
            comment("a2", Some("a1"), "p1", 2),
            comment("b2", Some("b1"), "p2", 2),
            comment("a3", Some("a1"), "p1", 3),
        ];
        let posts = [Post {
            id: "p3".into(),
            title: "lonely".into(),
            created_utc: 0,
        }];
        let f = build_trees(cs, &posts).unwrap();
        let sizes: Vec<(&str, usize)> = f.trees.iter().map(|t| (t.post_id.as_str(), t.len())).collect();
        assert_eq!(sizes, [("p1", 3), ("p2", 2), ("p3", 0)]);
        assert_eq!(f.trees[2].title, "lonely");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let cs = vec![comment("a", None, "p", 1), comment("a", None, "q", 2)];
        match build_trees(cs, &[]) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "a"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn siblings_ordered_by_time_then_id() {
        let cs = vec![
            comment("r", None, "p", 0),
            comment("z", Some("r"), "p", 5),
            comment("b", Some("r"), "p", 5),
            comment("a", Some("r"), "p", 9),
        ];
        let f = build_trees(cs, &[]).unwrap();
        let t = &f.trees[0];
        let kids: Vec<&str> = t.children(0).map(|i| t.comment(i).id.as_str()).collect();
        assert_eq!(kids, ["b", "z", "a"]);
    }

    #[test]
    fn jsonl_round_trip() {
        let cs = vec![comment("a", None, "p", 1), comment("b", Some("a"), "p", 2)];
        let f = build_trees(cs, &[]).unwrap();
        let mut buf = Vec::new();
        write_trees(&mut buf, &f.trees).unwrap();
        let back = read_trees(&buf[..]).unwrap();
        assert_eq!(back, f.trees);
    }

    #[test]
    fn invalid_stored_tree_rejected() {
        let bad = r#"{"post_id":"p","title":"","comments":[],"parents":[null]}"#;
        assert!(read_trees(bad.as_bytes()).is_err());
    }
}
