//! Line-structured documents: loading from disk and a seeded synthetic
//! Python-like generator.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A document as newline-terminated lines. Every line, the last included,
/// ends with `'\n'`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Document {
    lines: Vec<String>,
}

impl Document {
    pub fn from_text(text: &str) -> Self {
        let lines = text
            .split_inclusive('\n')
            .map(|l| {
                let mut l = l.to_string();
                if !l.ends_with('\n') {
                    l.push('\n');
                }
                l
            })
            .collect();
        Self { lines }
    }

    pub fn from_lines(lines: Vec<String>) -> Self {
        Self::from_text(&lines.concat())
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn text(&self) -> String {
        self.lines.concat()
    }

    pub fn byte_len(&self) -> usize {
        self.lines.iter().map(String::len).sum()
    }

    /// Longest prefix of whole lines whose byte length is at most
    /// `max_bytes`, cycling through the lines if the document is shorter.
    /// The line that would come next is returned as a natural
    /// next-line target.
    pub fn window(&self, max_bytes: usize) -> Result<(Document, String)> {
        if self.lines.is_empty() {
            return Err(Error::Scenario("corpus is empty".into()));
        }
        let mut out = Vec::new();
        let mut used = 0;
        for line in self.lines.iter().cycle() {
            if used + line.len() > max_bytes {
                return Ok((Document { lines: out }, line.clone()));
            }
            used += line.len();
            out.push(line.clone());
        }
        unreachable!("cycle never ends")
    }

    /// The same lines, starting from `line` (mod the length) and wrapping.
    pub fn rotated(&self, line: usize) -> Document {
        if self.lines.is_empty() {
            return self.clone();
        }
        let k = line % self.lines.len();
        let mut lines = self.lines[k..].to_vec();
        lines.extend_from_slice(&self.lines[..k]);
        Document { lines }
    }

    /// Reads a UTF-8 file, or every regular file of a directory in sorted
    /// path order (recursively), concatenated.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files.sort();
        let mut text = String::new();
        for f in files {
            let mut t = std::fs::read_to_string(&f)?;
            if !t.is_empty() && !t.ends_with('\n') {
                t.push('\n');
            }
            text.push_str(&t);
        }
        if text.is_empty() {
            return Err(Error::Scenario(format!(
                "no text found at {}",
                path.display()
            )));
        }
        Ok(Self::from_text(&text))
    }
}

fn collect_files(path: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<()> {
    if path.is_dir() {
        for entry in std::fs::read_dir(path)? {
            collect_files(&entry?.path(), out)?;
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

const NAMES: &[&str] = &[
    "x", "y", "n", "i", "k", "a", "b", "v", "s", "df", "md", "out", "acc", "key", "val", "buf",
];
const FUNCS: &[&str] = &[
    "f", "g", "len", "abs", "min", "max", "int", "sum", "run", "fit",
];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("non-empty table")
}

/// Seeded Python-like source with short lines (about 13 bytes on average,
/// so a five-line block is roughly 64 byte tokens).
pub fn synthetic_python(seed: u64, n_lines: usize) -> Document {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = Vec::with_capacity(n_lines);
    let mut depth = 0usize;
    while lines.len() < n_lines {
        let indent = "    ".repeat(depth);
        let a = pick(&mut rng, NAMES);
        let b = pick(&mut rng, NAMES);
        let f = pick(&mut rng, FUNCS);
        let n: u32 = rng.random_range(0..100);
        let roll: u32 = rng.random_range(0..100);
        let (body, opens) = match roll {
            0..=5 if depth == 0 => (format!("def {f}({a}):"), true),
            6..=11 if depth < 2 => (format!("if {a} > {n}:"), true),
            12..=16 if depth < 2 => (format!("for {a} in {b}:"), true),
            17..=22 if depth > 0 => (format!("return {a}"), false),
            23..=27 => (format!("# {f} {a}"), false),
            28..=45 => (format!("{a} = {f}({b})"), false),
            46..=60 => (format!("{a} += {n}"), false),
            61..=75 => (format!("{a} = {b}"), false),
            _ => (format!("{a} = {n}"), false),
        };
        lines.push(format!("{indent}{body}\n"));
        if opens {
            depth += 1;
        } else if depth > 0 && (body.starts_with("return") || rng.random_bool(0.25)) {
            depth -= 1;
        }
    }
    Document { lines }
}
