use alloc::string::String;
use alloc::vec::Vec;

/// Removes a leading copy of the prompt. Models served through plain
/// completion endpoints often return prompt + continuation.
pub fn strip_prompt_echo<'a>(completion: &'a str, prompt: &str) -> &'a str {
    if prompt.is_empty() {
        return completion;
    }
    if let Some(rest) = completion.strip_prefix(prompt) {
        return rest;
    }
    // Echo with normalized trailing whitespace.
    let trimmed = prompt.trim_end();
    if !trimmed.is_empty() {
        if let Some(rest) = completion.strip_prefix(trimmed) {
            return rest;
        }
    }
    completion
}

/// Cuts a completion at the first occurrence of `stop`.
pub fn truncate_at_stop<'a>(completion: &'a str, stop: &str) -> &'a str {
    match completion.find(stop) {
        Some(i) if !stop.is_empty() => &completion[..i],
        _ => completion,
    }
}

struct Block<'a> {
    info: &'a str,
    body: String,
}

fn fenced_blocks(text: &str) -> Vec<Block<'_>> {
    let mut out = Vec::new();
    let mut current: Option<Block<'_>> = None;
    for line in text.lines() {
        let t = line.trim_start();
        match current.as_mut() {
            None => {
                if let Some(info) = t.strip_prefix("```") {
                    current = Some(Block {
                        info: info.trim(),
                        body: String::new(),
                    });
                }
            }
            Some(b) => {
                if t.starts_with("```") {
                    out.push(current.take().expect("open block"));
                } else {
                    b.body.push_str(line);
                    b.body.push('\n');
                }
            }
        }
    }
    // An unterminated trailing block still counts; completions are often cut
    // by a stop sequence before the closing fence.
    if let Some(b) = current {
        if !b.body.trim().is_empty() {
            out.push(b);
        }
    }
    out
}

/// Candidate programs in a completion: the fenced blocks if there are any,
/// otherwise the whole text. When some blocks are tagged with
/// `expected_kind` (compared case-insensitively), only those are returned.
/// Blank candidates are dropped.
pub fn extract_code_blocks(completion: &str, expected_kind: &str, prompt: Option<&str>) -> Vec<String> {
    let text = match prompt {
        Some(p) => strip_prompt_echo(completion, p),
        None => completion,
    };
    let blocks = fenced_blocks(text);
    if blocks.is_empty() {
        return if text.trim().is_empty() {
            Vec::new()
        } else {
            alloc::vec![String::from(text)]
        };
    }
    let tagged = !expected_kind.is_empty()
        && blocks.iter().any(|b| b.info.eq_ignore_ascii_case(expected_kind));
    blocks
        .into_iter()
        .filter(|b| !tagged || b.info.eq_ignore_ascii_case(expected_kind))
        .map(|b| b.body)
        .filter(|b| !b.trim().is_empty())
        .collect()
}
