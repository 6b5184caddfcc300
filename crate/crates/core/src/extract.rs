//! Function-granularity source extraction.
//!
//! Brace-delimited sources are scanned with a lexical mask (comments and
//! string contents blanked out, offsets preserved) and balanced-brace
//! matching; a block is a function when its header names one (`fn name`,
//! `function name`, or a C-style `name(...)` that is not a control
//! statement). Indentation-delimited sources use `def` headers and a dedent
//! scan. Both are best-effort by design: no parsing, no type resolution.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;

use crate::catalog::{AuxSource, Optimization, SourceFamily};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSpan {
    pub name: String,
    /// Full lines from the header line through the closing line.
    pub body: String,
    /// 1-based, inclusive.
    pub start_line: usize,
    pub end_line: usize,
    /// Byte range of the function proper (header start to closing delimiter).
    pub start_byte: usize,
    pub end_byte: usize,
}

/// Lines around a match with no enclosing function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceWindow {
    pub start_line: usize,
    pub end_line: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("offset {offset} is past the end of the source")]
    OffsetOutOfRange { offset: usize },
    #[error("no enclosing function (lines {}-{})", window.start_line, window.end_line)]
    NoEnclosingFunction { window: SourceWindow },
}

pub const FILE_LEVEL_WINDOW: usize = 40;

const CONTROL_WORDS: &[&str] = &[
    "if", "else", "for", "while", "switch", "catch", "do", "match", "loop", "return", "try",
    "struct", "class", "enum", "union", "namespace", "impl", "trait", "mod", "let", "new",
    "sizeof", "case", "throw", "using", "typedef",
];

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Blanks comments and literal contents with spaces, keeping newlines so
/// byte offsets and line numbers are unchanged.
pub fn mask(source: &str, family: SourceFamily) -> Vec<u8> {
    match family {
        SourceFamily::BraceDelimited => mask_brace(source.as_bytes()),
        SourceFamily::IndentDelimited => mask_indent(source.as_bytes()),
    }
}

fn blank(out: &mut [u8], from: usize, to: usize) {
    let to = to.min(out.len());
    for b in &mut out[from.min(to)..to] {
        if *b != b'\n' {
            *b = b' ';
        }
    }
}

fn mask_brace(src: &[u8]) -> Vec<u8> {
    let mut out = src.to_vec();
    let n = src.len();
    let mut i = 0;
    while i < n {
        match src[i] {
            b'/' if src.get(i + 1) == Some(&b'/') => {
                let end = src[i..].iter().position(|&b| b == b'\n').map_or(n, |p| i + p);
                blank(&mut out, i, end);
                i = end;
            }
            b'/' if src.get(i + 1) == Some(&b'*') => {
                let end = src[i + 2..]
                    .windows(2)
                    .position(|w| w == b"*/")
                    .map_or(n, |p| i + 2 + p + 2);
                blank(&mut out, i, end);
                i = end;
            }
            b'r' if (src.get(i + 1) == Some(&b'"') || src.get(i + 1) == Some(&b'#'))
                && (i == 0 || !is_ident_byte(src[i - 1])) =>
            {
                // Rust raw string: r"..." or r#"..."#.
                let mut j = i + 1;
                let mut hashes = 0;
                while src.get(j) == Some(&b'#') {
                    hashes += 1;
                    j += 1;
                }
                if src.get(j) != Some(&b'"') {
                    i += 1;
                    continue;
                }
                let body_start = j + 1;
                let mut k = body_start;
                let end = loop {
                    if k >= n {
                        break n;
                    }
                    if src[k] == b'"' && src[k + 1..].iter().take(hashes).filter(|&&b| b == b'#').count() == hashes {
                        break k;
                    }
                    k += 1;
                };
                blank(&mut out, body_start, end);
                i = (end + 1 + hashes).min(n);
            }
            b'"' => {
                let mut j = i + 1;
                while j < n && src[j] != b'"' {
                    j += if src[j] == b'\\' { 2 } else { 1 };
                }
                blank(&mut out, i + 1, j);
                i = j + 1;
            }
            b'\'' => {
                // Char literal when it closes within a short escape; otherwise
                // a lifetime or label.
                let close = if src.get(i + 1) == Some(&b'\\') {
                    src[i + 2..].iter().take(10).position(|&b| b == b'\'').map(|p| i + 2 + p)
                } else {
                    let ch_len = core::str::from_utf8(&src[i + 1..(i + 5).min(n)])
                        .ok()
                        .or_else(|| core::str::from_utf8(&src[i + 1..(i + 2).min(n)]).ok())
                        .and_then(|s| s.chars().next())
                        .map_or(1, char::len_utf8);
                    (src.get(i + 1 + ch_len) == Some(&b'\'')).then_some(i + 1 + ch_len)
                };
                match close {
                    Some(c) => {
                        blank(&mut out, i + 1, c);
                        i = c + 1;
                    }
                    None => i += 1,
                }
            }
            _ => i += 1,
        }
    }
    out
}

fn mask_indent(src: &[u8]) -> Vec<u8> {
    let mut out = src.to_vec();
    let n = src.len();
    let mut i = 0;
    while i < n {
        match src[i] {
            b'#' => {
                let end = src[i..].iter().position(|&b| b == b'\n').map_or(n, |p| i + p);
                blank(&mut out, i, end);
                i = end;
            }
            q @ (b'"' | b'\'') => {
                let triple = src.get(i + 1) == Some(&q) && src.get(i + 2) == Some(&q);
                if triple {
                    let pat = [q, q, q];
                    let end = src[i + 3..]
                        .windows(3)
                        .position(|w| w == pat)
                        .map_or(n, |p| i + 3 + p);
                    blank(&mut out, i + 3, end);
                    i = (end + 3).min(n);
                } else {
                    let mut j = i + 1;
                    while j < n && src[j] != q && src[j] != b'\n' {
                        j += if src[j] == b'\\' { 2 } else { 1 };
                    }
                    blank(&mut out, i + 1, j);
                    i = j + 1;
                }
            }
            _ => i += 1,
        }
    }
    out
}

struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    fn new(src: &[u8]) -> Self {
        let mut starts = alloc::vec![0];
        for (i, b) in src.iter().enumerate() {
            if *b == b'\n' {
                starts.push(i + 1);
            }
        }
        Self { starts }
    }

    /// 1-based line of a byte offset.
    fn line_of(&self, offset: usize) -> usize {
        match self.starts.binary_search(&offset) {
            Ok(i) => i + 1,
            Err(i) => i,
        }
    }

    fn line_count(&self) -> usize {
        self.starts.len()
    }

    /// Text of lines `from..=to` (1-based), keeping a final newline if present.
    fn lines<'a>(&self, src: &'a str, from: usize, to: usize) -> &'a str {
        let start = self.starts[from - 1];
        let end = self.starts.get(to).copied().unwrap_or(src.len());
        &src[start..end]
    }
}

fn words(bytes: &[u8]) -> Vec<(usize, &[u8])> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if is_ident_byte(bytes[i]) {
            let s = i;
            while i < bytes.len() && is_ident_byte(bytes[i]) {
                i += 1;
            }
            out.push((s, &bytes[s..i]));
        } else {
            i += 1;
        }
    }
    out
}

/// Drops preprocessor/attribute lines and access labels from the front of a
/// header, returning the offset of the first meaningful byte.
fn header_start(masked: &[u8], from: usize, to: usize) -> usize {
    let mut i = from;
    loop {
        while i < to && masked[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= to {
            return to;
        }
        if masked[i] == b'#' {
            // `#include ...` or `#[attr]`: skip to the end of the line.
            while i < to && masked[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let rest = &masked[i..to];
        let label = [b"public:".as_slice(), b"private:", b"protected:"]
            .into_iter()
            .find(|l| rest.starts_with(l));
        if let Some(l) = label {
            i += l.len();
            continue;
        }
        return i;
    }
}

/// Name of the function a block header declares, if any.
fn function_name(header: &[u8]) -> Option<String> {
    let ws = words(header);
    let text = |w: &[u8]| String::from_utf8_lossy(w).into_owned();
    if let Some(pos) = ws.iter().rposition(|(_, w)| *w == b"fn" || *w == b"function") {
        return ws.get(pos + 1).map(|(_, w)| text(w));
    }
    if ws.iter().any(|(_, w)| *w == b"def") {
        return None;
    }
    let first = ws.first()?;
    if CONTROL_WORDS.iter().any(|c| c.as_bytes() == first.1) {
        return None;
    }
    // Top-level `=` (initializers, lambdas, match arms) disqualifies.
    let mut depth = 0i32;
    let mut paren_at = None;
    for (i, &b) in header.iter().enumerate() {
        match b {
            b'(' => {
                if depth == 0 && paren_at.is_none() {
                    paren_at = Some(i);
                }
                depth += 1;
            }
            b')' => depth -= 1,
            b'=' if depth == 0 => {
                let prev = i.checked_sub(1).map(|p| header[p]);
                let next = header.get(i + 1).copied();
                let comparison = matches!(prev, Some(b'=' | b'!' | b'<' | b'>'))
                    || next == Some(b'=');
                if !comparison {
                    return None;
                }
            }
            _ => {}
        }
    }
    // An unclosed paren means the block is a closure argument of a call.
    if depth != 0 {
        return None;
    }
    let paren = paren_at?;
    let mut end = paren;
    while end > 0 && header[end - 1].is_ascii_whitespace() {
        end -= 1;
    }
    let mut start = end;
    while start > 0 && is_ident_byte(header[start - 1]) {
        start -= 1;
    }
    if start == end || header[start].is_ascii_digit() {
        return None;
    }
    let name = &header[start..end];
    if CONTROL_WORDS.iter().any(|c| c.as_bytes() == name) {
        return None;
    }
    Some(text(name))
}

fn list_brace(source: &str) -> Vec<FunctionSpan> {
    let masked = mask_brace(source.as_bytes());
    let index = LineIndex::new(source.as_bytes());
    let mut stack: Vec<usize> = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (i, &b) in masked.iter().enumerate() {
        match b {
            b'{' => stack.push(i),
            b'}' => {
                if let Some(open) = stack.pop() {
                    pairs.push((open, i));
                }
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    for (open, close) in pairs {
        let delim = masked[..open]
            .iter()
            .rposition(|&b| matches!(b, b'{' | b'}' | b';'))
            .map_or(0, |p| p + 1);
        let start = header_start(&masked, delim, open);
        if start >= open {
            continue;
        }
        let Some(name) = function_name(&masked[start..open]) else {
            continue;
        };
        let (start_line, end_line) = (index.line_of(start), index.line_of(close));
        out.push(FunctionSpan {
            name,
            body: String::from(index.lines(source, start_line, end_line)),
            start_line,
            end_line,
            start_byte: start,
            end_byte: close + 1,
        });
    }
    out.sort_by_key(|f| (f.start_byte, core::cmp::Reverse(f.end_byte)));
    out
}

fn indent_of(line: &[u8]) -> Option<usize> {
    let n = line.iter().take_while(|b| **b == b' ' || **b == b'\t').count();
    let rest = &line[n..];
    if rest.iter().all(|b| b.is_ascii_whitespace()) {
        None
    } else {
        Some(n)
    }
}

fn list_indent(source: &str) -> Vec<FunctionSpan> {
    let masked = mask_indent(source.as_bytes());
    let index = LineIndex::new(source.as_bytes());
    let lines: Vec<&[u8]> = (1..=index.line_count())
        .map(|l| {
            let s = index.starts[l - 1];
            let e = index.starts.get(l).map_or(masked.len(), |e| e - 1);
            &masked[s..e.max(s)]
        })
        .collect();
    let mut out = Vec::new();
    for (li, line) in lines.iter().enumerate() {
        let Some(ind) = indent_of(line) else { continue };
        let ws = words(&line[ind..]);
        let def_pos = match ws.as_slice() {
            [(_, b"def"), ..] => 0,
            [(_, b"async"), (_, b"def"), ..] => 1,
            _ => continue,
        };
        let Some((_, name)) = ws.get(def_pos + 1) else { continue };
        // Header may span lines until a `:` at paren depth 0.
        let mut depth = 0i32;
        let mut header_end = li;
        'hdr: for (hj, hl) in lines.iter().enumerate().skip(li) {
            let from = if hj == li { ind } else { 0 };
            for &b in &hl[from..] {
                match b {
                    b'(' | b'[' => depth += 1,
                    b')' | b']' => depth -= 1,
                    b':' if depth == 0 => {
                        header_end = hj;
                        break 'hdr;
                    }
                    _ => {}
                }
            }
            header_end = hj;
        }
        let mut last = header_end;
        for (bj, bl) in lines.iter().enumerate().skip(header_end + 1) {
            match indent_of(bl) {
                None => continue,
                Some(i) if i > ind => last = bj,
                Some(_) => break,
            }
        }
        let start_byte = index.starts[li] + ind;
        let end_byte = index
            .starts
            .get(last + 1)
            .map_or(source.len(), |s| s.saturating_sub(1));
        out.push(FunctionSpan {
            name: String::from_utf8_lossy(name).into_owned(),
            body: String::from(index.lines(source, li + 1, last + 1)),
            start_line: li + 1,
            end_line: last + 1,
            start_byte,
            end_byte,
        });
    }
    out
}

/// Every function in `source`, ordered by start offset (outer before inner).
pub fn list_functions(source: &str, family: SourceFamily) -> Vec<FunctionSpan> {
    match family {
        SourceFamily::BraceDelimited => list_brace(source),
        SourceFamily::IndentDelimited => list_indent(source),
    }
}

/// The smallest function enclosing `match_offset`.
pub fn extract_function(
    source: &str,
    family: SourceFamily,
    match_offset: usize,
) -> Result<FunctionSpan, ExtractError> {
    if match_offset >= source.len() {
        return Err(ExtractError::OffsetOutOfRange {
            offset: match_offset,
        });
    }
    list_functions(source, family)
        .into_iter()
        .filter(|f| f.start_byte <= match_offset && match_offset < f.end_byte)
        .min_by_key(|f| f.end_byte - f.start_byte)
        .ok_or_else(|| ExtractError::NoEnclosingFunction {
            window: window_around(source, match_offset),
        })
}

/// A [`FILE_LEVEL_WINDOW`]-line window around an offset.
pub fn window_around(source: &str, offset: usize) -> SourceWindow {
    let index = LineIndex::new(source.as_bytes());
    let line = index.line_of(offset.min(source.len()));
    let total = index.line_count();
    let half = FILE_LEVEL_WINDOW / 2;
    let start = line.saturating_sub(half).max(1);
    let end = (start + FILE_LEVEL_WINDOW - 1).min(total);
    SourceWindow {
        start_line: start,
        end_line: end,
        text: String::from(index.lines(source, start, end)),
    }
}

/// Names that appear in call position (`name(`) in a source fragment.
pub fn called_names(source: &str, family: SourceFamily) -> BTreeSet<String> {
    let masked = mask(source, family);
    let mut out = BTreeSet::new();
    for (start, w) in words(&masked) {
        if w[0].is_ascii_digit() {
            continue;
        }
        let after = &masked[start + w.len()..];
        let next = after.iter().find(|b| !b.is_ascii_whitespace() && **b != b'\n');
        // Rust turbofish `name::<T>(` is treated as a call too.
        if next == Some(&b'(') || after.starts_with(b"::<") {
            out.insert(String::from_utf8_lossy(w).into_owned());
        }
    }
    out
}

fn family_of(path: &str) -> SourceFamily {
    path.rsplit('.')
        .next()
        .and_then(SourceFamily::from_extension)
        .unwrap_or(SourceFamily::BraceDelimited)
}

/// Attaches helpers reachable from `opt.main_source` through call-name
/// matching, up to `depth` hops. Names not defined in `corpus` are ignored;
/// the first definition of a name wins.
pub fn attach_auxiliaries(mut opt: Optimization, corpus: &[FunctionSpan], depth: usize) -> Optimization {
    let mut defs: BTreeMap<&str, &FunctionSpan> = BTreeMap::new();
    for f in corpus {
        defs.entry(f.name.as_str()).or_insert(f);
    }
    let family = family_of(&opt.file_path);
    let mut seen: BTreeSet<String> = BTreeSet::new();
    seen.insert(opt.name.clone());
    for aux in &opt.aux_sources {
        seen.insert(aux.name.clone());
    }
    let mut queue: VecDeque<(String, usize)> = VecDeque::new();
    queue.push_back((opt.main_source.clone(), 0));
    let mut added = Vec::new();
    while let Some((src, hops)) = queue.pop_front() {
        if hops >= depth {
            continue;
        }
        for name in called_names(&src, family) {
            let Some(def) = defs.get(name.as_str()) else { continue };
            if !seen.insert(name.clone()) {
                continue;
            }
            queue.push_back((def.body.clone(), hops + 1));
            added.push(AuxSource {
                name,
                source: def.body.clone(),
            });
        }
    }
    opt.aux_sources.extend(added);
    opt.recount();
    opt
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brace_single_function() {
        let src = "fn f(){ if(x){y();} }";
        let off = src.find("y(").unwrap();
        let f = extract_function(src, SourceFamily::BraceDelimited, off).unwrap();
        assert_eq!(f.name, "f");
        assert_eq!(f.body, src);
        assert_eq!((f.start_line, f.end_line), (1, 1));
    }

    #[test]
    fn brace_top_level_statement_has_no_function() {
        let src = "int g = 3;\nstatic int table[] = {1, 2, 3};\n";
        let off = src.find("table").unwrap();
        let e = extract_function(src, SourceFamily::BraceDelimited, off).unwrap_err();
        match e {
            ExtractError::NoEnclosingFunction { window } => {
                assert_eq!(window.start_line, 1);
                assert!(window.text.contains("table"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            extract_function(src, SourceFamily::BraceDelimited, 999),
            Err(ExtractError::OffsetOutOfRange { .. })
        ));
    }

    #[test]
    fn brace_ignores_braces_in_strings_and_comments() {
        let src = "fn a() {\n    let s = \"}}{\"; // }\n    /* { */ b();\n}\nfn b() { let c = '}'; }\n";
        let fs = list_functions(src, SourceFamily::BraceDelimited);
        let names: Vec<_> = fs.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["a", "b"]);
        assert_eq!((fs[0].start_line, fs[0].end_line), (1, 4));
    }

    #[test]
    fn brace_c_style_functions_and_control_flow() {
        let src = "#include <x.h>\nstatic int helper(int v) {\n  if (v) { return 1; }\n  return 0;\n}\n\
                   namespace ns {\nclass K {\npublic:\n  bool Fuse(Op* op) const {\n    for (;;) { helper(1); }\n  }\n};\n}\n";
        let fs = list_functions(src, SourceFamily::BraceDelimited);
        let names: Vec<_> = fs.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["helper", "Fuse"]);
        assert_eq!(fs[0].start_line, 2);
        assert_eq!((fs[1].start_line, fs[1].end_line), (9, 11));
    }

    #[test]
    fn rust_lifetimes_do_not_confuse_the_mask() {
        let src = "fn same_var<'a>(a: &'a Expr) -> Option<&'a str> {\n    None\n}\n";
        let fs = list_functions(src, SourceFamily::BraceDelimited);
        assert_eq!(fs.len(), 1);
        assert_eq!(fs[0].name, "same_var");
    }

    // Hand-checked fixture: `inner` spans lines 4-6, `outer` spans lines 2-8,
    // `other` spans lines 10-10.
    const PY: &str = "import os\ndef outer(x,\n          y):\n    def inner(z):\n        w = z + 1\n        return w\n\n    return inner(x) + y\n\ndef other(): return 1\n";

    #[test]
    fn indent_nested_defs() {
        let off = PY.find("w = z").unwrap();
        let f = extract_function(PY, SourceFamily::IndentDelimited, off).unwrap();
        assert_eq!(f.name, "inner");
        assert_eq!((f.start_line, f.end_line), (4, 6));
        assert_eq!(f.body, "    def inner(z):\n        w = z + 1\n        return w\n");

        let off = PY.find("return inner").unwrap();
        let f = extract_function(PY, SourceFamily::IndentDelimited, off).unwrap();
        assert_eq!(f.name, "outer");
        assert_eq!((f.start_line, f.end_line), (2, 8));

        let fs = list_functions(PY, SourceFamily::IndentDelimited);
        let spans: Vec<_> = fs.iter().map(|f| (f.name.as_str(), f.start_line, f.end_line)).collect();
        assert_eq!(spans, [("outer", 2, 8), ("inner", 4, 6), ("other", 10, 10)]);

        let off = PY.find("import").unwrap();
        assert!(matches!(
            extract_function(PY, SourceFamily::IndentDelimited, off),
            Err(ExtractError::NoEnclosingFunction { .. })
        ));
    }

    #[test]
    fn indent_docstrings_do_not_end_bodies() {
        let src = "def f():\n    \"\"\"doc\nat column zero\n    \"\"\"\n    return 1\nx = 2\n";
        let fs = list_functions(src, SourceFamily::IndentDelimited);
        assert_eq!((fs[0].start_line, fs[0].end_line), (1, 5));
    }

    #[test]
    fn window_is_forty_lines() {
        let src: String = (1..=100).map(|i| alloc::format!("x{i};\n")).collect();
        let off = src.find("x50;").unwrap();
        let w = window_around(&src, off);
        assert_eq!((w.start_line, w.end_line), (30, 69));
        assert_eq!(w.text.lines().count(), FILE_LEVEL_WINDOW);
    }

    fn corpus(src: &str) -> Vec<FunctionSpan> {
        list_functions(src, SourceFamily::BraceDelimited)
    }

    fn opt_named(c: &[FunctionSpan], name: &str) -> Optimization {
        Optimization::from_function("p.rs", c.iter().find(|f| f.name == name).unwrap())
    }

    #[test]
    fn auxiliaries_follow_calls_to_depth() {
        let src = "fn pass() { helper(); ext(); }\nfn helper() { deeper(); }\nfn deeper() { deeper(); }\n";
        let c = corpus(src);
        let o = attach_auxiliaries(opt_named(&c, "pass"), &c, 0);
        assert!(o.aux_sources.is_empty());
        let o = attach_auxiliaries(opt_named(&c, "pass"), &c, 1);
        let names: Vec<_> = o.aux_sources.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["helper"]);
        assert_eq!(o.total_lines, 2);
        let o = attach_auxiliaries(opt_named(&c, "pass"), &c, 5);
        let names: Vec<_> = o.aux_sources.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["helper", "deeper"]);
        // Self-recursive helper appears once.
        let o = attach_auxiliaries(opt_named(&c, "deeper"), &c, 3);
        assert!(o.aux_sources.is_empty());
    }
}
