//! Edit-scenario construction over line-structured documents.
//!
//! Every generator starts from a clean document, derives the "original"
//! (pre-edit) text from it, and emits the script that turns original back
//! into the clean ("edited") text:
//!
//! * insertion: a block of consecutive lines is removed; the script restores it.
//! * deletion: lines sampled from the same document are added at a random
//!   gap; the script deletes them.
//! * edition: one of each, at disjoint sites.
//! * contextual: the block starts at the line closest (Levenshtein) to a
//!   target line; multi-place picks several such single lines.
//!
//! Spans are whole lines including their trailing newline.

pub mod corpus;
pub mod tokenizer;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::levenshtein;
use crate::edit::{EditOp, EditScript};
use crate::error::{Error, Result};
use crate::tokens::TokenSequence;

pub use corpus::{synthetic_python, Document};
pub use tokenizer::ByteTokenizer;

/// Site placement gives up after this many collisions.
pub const MAX_PLACEMENT_RETRIES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Insertion,
    Deletion,
    Edition,
    Contextual,
    MultiPlaceContextual,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Insertion,
        ScenarioKind::Deletion,
        ScenarioKind::Edition,
        ScenarioKind::Contextual,
        ScenarioKind::MultiPlaceContextual,
    ];
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| Error::arg(format!("unknown scenario kind {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub lines_per_edit: usize,
    pub num_sites: usize,
    pub rng_seed: u64,
    /// Pins the insertion block (or deletion gap) to this fraction of the
    /// document instead of a random line.
    pub position_frac: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Insertion,
            lines_per_edit: 5,
            num_sites: 1,
            rng_seed: 0,
            position_frac: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lines_per_edit == 0 {
            return Err(Error::Scenario("lines_per_edit must be at least 1".into()));
        }
        if self.num_sites == 0 {
            return Err(Error::Scenario("num_sites must be at least 1".into()));
        }
        if let Some(f) = self.position_frac {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Scenario(format!("position_frac {f} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Where each op came from, for the scenario manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteRecord {
    /// Line index in the clean document where the site begins.
    pub line: usize,
    pub inserted_lines: usize,
    pub deleted_lines: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub lines_per_edit: usize,
    pub num_sites: usize,
    pub sites: Vec<SiteRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub original: TokenSequence,
    pub script: EditScript,
    pub edited: TokenSequence,
    pub manifest: ScenarioManifest,
}

impl Scenario {
    /// Writes `<stem>.jsonl` (the edit script) and `<stem>.manifest.json`
    /// into `dir`, returning both paths.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let script = dir.join(format!("{stem}.jsonl"));
        let manifest = dir.join(format!("{stem}.manifest.json"));
        self.script.save(&script)?;
        std::fs::write(&manifest, serde_json::to_string_pretty(&self.manifest)?)?;
        Ok((script, manifest))
    }
}

/// One run of lines in the construction.
enum Segment<'a> {
    /// Present in both original and edited text.
    Keep(&'a [String]),
    /// Only in the original; the script deletes it.
    Extra(Vec<String>),
    /// Only in the edited text; the script inserts it.
    Missing(&'a [String]),
}

fn byte_tokens(lines: &[String]) -> impl Iterator<Item = u32> + '_ {
    lines.iter().flat_map(|l| l.bytes().map(u32::from))
}

fn assemble(segments: &[Segment<'_>], manifest: ScenarioManifest) -> Result<Scenario> {
    let mut original = Vec::new();
    let mut edited = Vec::new();
    let mut ops = Vec::new();
    for seg in segments {
        match seg {
            Segment::Keep(lines) => {
                original.extend(byte_tokens(lines));
                edited.extend(byte_tokens(lines));
            }
            Segment::Extra(lines) => {
                let start = original.len();
                original.extend(byte_tokens(lines));
                ops.push(EditOp::delete(start, original.len()));
            }
            Segment::Missing(lines) => {
                let block: Vec<u32> = byte_tokens(lines).collect();
                ops.push(EditOp::insert(original.len(), block.clone()));
                edited.extend(block);
            }
        }
    }
    Ok(Scenario {
        original: original.into(),
        script: EditScript::new(ops)?,
        edited: edited.into(),
        manifest,
    })
}

fn manifest(cfg: &ScenarioConfig, sites: Vec<SiteRecord>) -> ScenarioManifest {
    ScenarioManifest {
        kind: cfg.kind,
        seed: cfg.rng_seed,
        lines_per_edit: cfg.lines_per_edit,
        num_sites: cfg.num_sites,
        sites,
    }
}

fn require_lines(doc: &Document, cfg: &ScenarioConfig) -> Result<()> {
    cfg.validate()?;
    if doc.len() <= cfg.lines_per_edit {
        return Err(Error::Scenario(format!(
            "document has {} lines; need more than {}",
            doc.len(),
            cfg.lines_per_edit
        )));
    }
    Ok(())
}

/// A site in `0..=max`: pinned by `position_frac` or drawn uniformly.
fn site(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng, max: usize) -> usize {
    match cfg.position_frac {
        Some(f) => ((f * max as f64).round() as usize).min(max),
        None => rng.random_range(0..=max),
    }
}

fn sample_lines(doc: &Document, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    (0..n)
        .map(|_| doc.lines()[rng.random_range(0..doc.len())].clone())
        .collect()
}

/// Original = document minus a random block; the script puts it back.
pub fn gen_insertion(doc: &Document, cfg: &ScenarioConfig) -> Result<Scenario> {
    require_lines(doc, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let lines = doc.lines();
    let l = cfg.lines_per_edit;
    let b = site(cfg, &mut rng, lines.len() - l);
    assemble(
        &[
            Segment::Keep(&lines[..b]),
            Segment::Missing(&lines[b..b + l]),
            Segment::Keep(&lines[b + l..]),
        ],
        manifest(
            cfg,
            vec![SiteRecord {
                line: b,
                inserted_lines: l,
                deleted_lines: 0,
            }],
        ),
    )
}

/// Original = document plus sampled lines at a random gap; the script
/// deletes them.
pub fn gen_deletion(doc: &Document, cfg: &ScenarioConfig) -> Result<Scenario> {
    require_lines(doc, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let lines = doc.lines();
    let c = site(cfg, &mut rng, lines.len());
    let extra = sample_lines(doc, cfg.lines_per_edit, &mut rng);
    assemble(
        &[
            Segment::Keep(&lines[..c]),
            Segment::Extra(extra),
            Segment::Keep(&lines[c..]),
        ],
        manifest(
            cfg,
            vec![SiteRecord {
                line: c,
                inserted_lines: 0,
                deleted_lines: cfg.lines_per_edit,
            }],
        ),
    )
}

/// An insertion block and a deletion gap at disjoint sites (at least one
/// untouched line between them).
pub fn gen_edition(doc: &Document, cfg: &ScenarioConfig) -> Result<Scenario> {
    require_lines(doc, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let lines = doc.lines();
    let l = cfg.lines_per_edit;
    for _ in 0..MAX_PLACEMENT_RETRIES {
        let b = rng.random_range(0..=lines.len() - l);
        let c = rng.random_range(0..=lines.len());
        if c >= b && c <= b + l {
            continue;
        }
        let extra = sample_lines(doc, l, &mut rng);
        let ins = SiteRecord {
            line: b,
            inserted_lines: l,
            deleted_lines: 0,
        };
        let del = SiteRecord {
            line: c,
            inserted_lines: 0,
            deleted_lines: l,
        };
        return if c < b {
            assemble(
                &[
                    Segment::Keep(&lines[..c]),
                    Segment::Extra(extra),
                    Segment::Keep(&lines[c..b]),
                    Segment::Missing(&lines[b..b + l]),
                    Segment::Keep(&lines[b + l..]),
                ],
                manifest(cfg, vec![del, ins]),
            )
        } else {
            assemble(
                &[
                    Segment::Keep(&lines[..b]),
                    Segment::Missing(&lines[b..b + l]),
                    Segment::Keep(&lines[b + l..c]),
                    Segment::Extra(extra),
                    Segment::Keep(&lines[c..]),
                ],
                manifest(cfg, vec![ins, del]),
            )
        };
    }
    Err(Error::Scenario(format!(
        "could not place disjoint sites after {MAX_PLACEMENT_RETRIES} attempts"
    )))
}

/// Line indices ordered by Levenshtein distance to `target` (newlines and
/// surrounding whitespace ignored); ties go to the earlier line.
pub fn rank_lines_by_similarity(doc: &Document, target: &str) -> Vec<usize> {
    let target = target.trim();
    let mut scored: Vec<(usize, usize)> = doc
        .lines()
        .iter()
        .enumerate()
        .map(|(i, l)| (levenshtein(l.trim(), target), i))
        .collect();
    scored.sort_unstable();
    scored.into_iter().map(|(_, i)| i).collect()
}

/// Contextually related insertion. With `num_sites == 1`, a block of
/// `lines_per_edit` lines containing the line most similar to `target_line`
/// is removed and restored. With more sites, that many single lines (the most
/// similar ones, never adjacent to each other) are removed and restored.
pub fn gen_contextual(doc: &Document, target_line: &str, cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    if doc.is_empty() {
        return Err(Error::Scenario(
            "contextual scenario needs a non-empty context".into(),
        ));
    }
    let lines = doc.lines();
    let ranked = rank_lines_by_similarity(doc, target_line);
    if cfg.num_sites == 1 {
        require_lines(doc, cfg)?;
        let l = cfg.lines_per_edit;
        let best = ranked[0];
        let b = best.min(lines.len() - l);
        return assemble(
            &[
                Segment::Keep(&lines[..b]),
                Segment::Missing(&lines[b..b + l]),
                Segment::Keep(&lines[b + l..]),
            ],
            manifest(
                cfg,
                vec![SiteRecord {
                    line: b,
                    inserted_lines: l,
                    deleted_lines: 0,
                }],
            ),
        );
    }

    let mut chosen: Vec<usize> = Vec::with_capacity(cfg.num_sites);
    for i in ranked {
        if chosen.len() == cfg.num_sites {
            break;
        }
        if chosen.iter().all(|&c| c.abs_diff(i) > 1) {
            chosen.push(i);
        }
    }
    if chosen.len() < cfg.num_sites || chosen.len() >= lines.len() {
        return Err(Error::Scenario(format!(
            "only {} non-adjacent sites available in {} lines; {} requested",
            chosen.len(),
            lines.len(),
            cfg.num_sites
        )));
    }
    chosen.sort_unstable();
    let mut segments = Vec::with_capacity(2 * chosen.len() + 1);
    let mut cursor = 0;
    for &i in &chosen {
        segments.push(Segment::Keep(&lines[cursor..i]));
        segments.push(Segment::Missing(&lines[i..i + 1]));
        cursor = i + 1;
    }
    segments.push(Segment::Keep(&lines[cursor..]));
    let sites = chosen
        .iter()
        .map(|&i| SiteRecord {
            line: i,
            inserted_lines: 1,
            deleted_lines: 0,
        })
        .collect();
    assemble(&segments, manifest(cfg, sites))
}

/// Dispatches on `cfg.kind`. Contextual kinds use `target_line`.
pub fn generate(doc: &Document, target_line: &str, cfg: &ScenarioConfig) -> Result<Scenario> {
    match cfg.kind {
        ScenarioKind::Insertion => gen_insertion(doc, cfg),
        ScenarioKind::Deletion => gen_deletion(doc, cfg),
        ScenarioKind::Edition => gen_edition(doc, cfg),
        ScenarioKind::Contextual => gen_contextual(
            doc,
            target_line,
            &ScenarioConfig {
                num_sites: 1,
                ..cfg.clone()
            },
        ),
        ScenarioKind::MultiPlaceContextual => gen_contextual(doc, target_line, cfg),
    }
}
