//! Finds optimization functions in a SUT's source tree.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use optfuzz_core::catalog::{Optimization, SourceFamily};
use optfuzz_core::extract::{self, FunctionSpan};
use optfuzz_core::minilang;
use optfuzz_core::sut::SutDescriptor;
use regex::Regex;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordMode {
    /// Case-insensitive substring.
    #[default]
    Substring,
    /// Case-insensitive regular expression.
    Regex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectOptions {
    pub keyword_mode: KeywordMode,
    pub aux_depth: usize,
}

impl Default for CollectOptions {
    fn default() -> Self {
        Self {
            keyword_mode: KeywordMode::Substring,
            aux_depth: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CollectError {
    #[error("source root {path} is not readable: {source}")]
    UnreadableRoot { path: PathBuf, source: io::Error },
    #[error("bad keyword pattern: {0}")]
    BadPattern(#[from] regex::Error),
}

/// A file that was skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedSource {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Collection {
    pub optimizations: Vec<Optimization>,
    pub warnings: Vec<MalformedSource>,
}

enum Matcher {
    Substring(Vec<String>),
    Regex(Vec<Regex>),
}

impl Matcher {
    fn new(keywords: &[String], mode: KeywordMode) -> Result<Self, CollectError> {
        Ok(match mode {
            KeywordMode::Substring => Matcher::Substring(keywords.iter().map(|k| k.to_lowercase()).collect()),
            KeywordMode::Regex => Matcher::Regex(
                keywords
                    .iter()
                    .map(|k| Regex::new(&format!("(?i){k}")))
                    .collect::<Result<_, _>>()?,
            ),
        })
    }

    fn is_match(&self, text: &str) -> bool {
        match self {
            Matcher::Substring(ks) => {
                let lower = text.to_lowercase();
                ks.iter().any(|k| lower.contains(k.as_str()))
            }
            Matcher::Regex(rs) => rs.iter().any(|r| r.is_match(text)),
        }
    }
}

/// Collects from in-memory `(path, text)` files. Every function in every
/// file is available as an auxiliary; only keyword matches become entries.
pub fn collect_from_sources(
    files: &[(String, String)],
    descriptor: &SutDescriptor,
    options: CollectOptions,
) -> Result<Vec<Optimization>, CollectError> {
    let matcher = Matcher::new(&descriptor.opt_keywords, options.keyword_mode)?;
    let mut found: Vec<(&str, FunctionSpan)> = Vec::new();
    for (path, text) in files {
        let Some(family) = family_of(path) else { continue };
        for f in extract::list_functions(text, family) {
            found.push((path.as_str(), f));
        }
    }
    let corpus: Vec<FunctionSpan> = found.iter().map(|(_, f)| f.clone()).collect();
    let mut out: Vec<Optimization> = found
        .iter()
        .filter(|(_, f)| matcher.is_match(&f.name) || matcher.is_match(&f.body))
        .map(|(path, f)| extract::attach_auxiliaries(Optimization::from_function(path, f), &corpus, options.aux_depth))
        .filter(|o| descriptor.max_source_lines.is_none_or(|cap| o.total_lines <= cap))
        .collect();
    out.sort_by(|a, b| (&a.file_path, a.line_span.0).cmp(&(&b.file_path, b.line_span.0)));
    Ok(out)
}

fn family_of(path: &str) -> Option<SourceFamily> {
    let ext = Path::new(path).extension()?.to_str()?;
    SourceFamily::from_extension(ext)
}

/// Walks every source root (relative roots resolve against `base`). Files
/// are visited in sorted order; recorded paths are `<root>/<relative>` with
/// the root as written in the descriptor.
pub fn collect(descriptor: &SutDescriptor, base: &Path, options: CollectOptions) -> Result<Collection, CollectError> {
    let mut files = Vec::new();
    let mut warnings = Vec::new();
    for root in &descriptor.source_roots {
        let abs = base.join(root);
        fs::read_dir(&abs).map_err(|source| CollectError::UnreadableRoot {
            path: abs.clone(),
            source,
        })?;
        for entry in WalkDir::new(&abs).sort_by_file_name() {
            let entry = match entry {
                Ok(e) => e,
                Err(e) => {
                    warnings.push(MalformedSource {
                        path: e.path().map(|p| p.display().to_string()).unwrap_or_default(),
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry.path().strip_prefix(&abs).unwrap_or(entry.path());
            let rel: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect();
            let shown = format!("{}/{}", root.trim_end_matches('/'), rel.join("/"));
            if family_of(&shown).is_none() {
                continue;
            }
            match fs::read(entry.path()).map(String::from_utf8) {
                Ok(Ok(text)) => files.push((shown, text)),
                Ok(Err(_)) => warnings.push(MalformedSource {
                    path: shown,
                    reason: "not valid UTF-8".into(),
                }),
                Err(e) => warnings.push(MalformedSource {
                    path: shown,
                    reason: e.to_string(),
                }),
            }
        }
    }
    Ok(Collection {
        optimizations: collect_from_sources(&files, descriptor, options)?,
        warnings,
    })
}

/// The MiniLang pass sources compiled into the binary, under the paths the
/// default descriptor's source root gives them on disk.
pub fn embedded_minilang_sources() -> Vec<(String, String)> {
    let root = SutDescriptor::minilang().source_roots[0].clone();
    minilang::PASS_SOURCES
        .iter()
        .map(|(p, t)| (format!("{root}/{p}"), t.to_string()))
        .collect()
}

pub fn names(opts: &[Optimization]) -> BTreeSet<String> {
    opts.iter().map(|o| o.name.clone()).collect()
}

pub fn write_catalog(path: &Path, opts: &[Optimization]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for o in opts {
        serde_json::to_writer(&mut w, o)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_catalog(path: &Path) -> io::Result<Vec<Optimization>> {
    let f = io::BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}
