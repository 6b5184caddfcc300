//! Seeded stand-in for both model roles, tailored to MiniLang.
//!
//! Every text is a pure function of (prompt hash, seed, sample index). For
//! generation prompts each sample triggers the target pass with probability
//! `p`: the per-pass competence for initial prompts, and for feedback prompts
//! `max(competence, agg(quality of each example's style))`. Programs carry a
//! `// style K` tag; a sample produced from a feedback prompt inherits the
//! style of one of its examples with probability `inherit`, otherwise it
//! draws a style uniformly.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cap_texts, CompletionBackend, CompletionResult, ModelError, ModelRole};
use crate::prompt::{PromptBundle, PromptFamily};

pub const STYLE_TAG: &str = "// style ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StyleAggregate {
    #[default]
    Mean,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StubConfig {
    /// Trigger probability of an initial prompt, for passes not listed in
    /// `competence`.
    pub default_competence: f64,
    pub competence: BTreeMap<String, f64>,
    /// Trigger probability contributed by an example of each style.
    pub style_quality: Vec<f64>,
    pub inherit: f64,
    pub aggregate: StyleAggregate,
    /// Chance that a fusion-targeting program also calls `crash_if_fused()`.
    pub crash_call_rate: f64,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            default_competence: 0.1,
            competence: BTreeMap::new(),
            style_quality: alloc::vec![0.6],
            inherit: 1.0,
            aggregate: StyleAggregate::Mean,
            crash_call_rate: 0.5,
        }
    }
}

impl StubConfig {
    /// Two example styles of very different usefulness, so which examples a
    /// strategy picks matters.
    pub fn heterogeneous() -> Self {
        Self {
            style_quality: alloc::vec![0.05, 0.95],
            inherit: 0.5,
            aggregate: StyleAggregate::Min,
            ..Self::default()
        }
    }

    /// Every prompt triggers with probability `p`, feedback or not.
    pub fn flat(p: f64) -> Self {
        Self {
            default_competence: p,
            style_quality: alloc::vec![p],
            ..Self::default()
        }
    }

    pub fn competence_for(&self, opt: &str) -> f64 {
        self.competence.get(opt).copied().unwrap_or(self.default_competence)
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        if self.style_quality.is_empty() {
            return Err("style_quality must not be empty");
        }
        let all = [self.default_competence, self.inherit, self.crash_call_rate]
            .into_iter()
            .chain(self.competence.values().copied())
            .chain(self.style_quality.iter().copied());
        for x in all {
            if !prob(x) {
                return Err("stub probabilities must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubBackend {
    pub config: StubConfig,
}

/// Styles of the example programs in a prompt, in order of appearance.
pub fn example_styles(prompt: &str) -> Vec<usize> {
    prompt
        .lines()
        .filter_map(|l| l.trim().strip_prefix(STYLE_TAG))
        .filter_map(|s| s.trim().parse().ok())
        .collect()
}

/// Style tag of one program, if any.
pub fn program_style(code: &str) -> Option<usize> {
    example_styles(code).first().copied()
}

impl StubBackend {
    pub fn new(config: StubConfig) -> Self {
        Self { config }
    }

    /// Trigger probability the stub uses for a generation prompt.
    pub fn trigger_probability(&self, prompt: &PromptBundle) -> f64 {
        let base = self.config.competence_for(&prompt.target_opt);
        if prompt.family != PromptFamily::Feedback {
            return base;
        }
        let q: Vec<f64> = example_styles(&prompt.text)
            .into_iter()
            .filter_map(|s| self.config.style_quality.get(s).copied())
            .collect();
        if q.is_empty() {
            return base;
        }
        let agg = match self.config.aggregate {
            StyleAggregate::Mean => q.iter().sum::<f64>() / q.len() as f64,
            StyleAggregate::Min => q.iter().copied().fold(f64::INFINITY, f64::min),
            StyleAggregate::Max => q.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        base.max(agg)
    }

    fn rng(prompt_hash: &str, seed: u64, index: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(crate::hash::derive_seed(&[
            b"stub",
            prompt_hash.as_bytes(),
            &seed.to_le_bytes(),
            &(index as u64).to_le_bytes(),
        ]))
    }

    fn generate_one(&self, prompt: &PromptBundle, p: f64, styles: &[usize], rng: &mut ChaCha8Rng) -> String {
        let triggers = rng.random::<f64>() < p;
        let n_styles = self.config.style_quality.len();
        let style = if !styles.is_empty() && rng.random::<f64>() < self.config.inherit {
            styles[rng.random_range(0..styles.len())]
        } else {
            rng.random_range(0..n_styles)
        };
        let body = if triggers {
            pass_program(&prompt.target_opt, self.config.crash_call_rate, rng)
        } else {
            None
        };
        let body = body.unwrap_or_else(|| inert_program(rng));
        format!("```\n{STYLE_TAG}{style}\n{body}\n```\n")
    }
}

const WORDS: &[&str] = &["ab", "xy", "na", "lo", "q"];

/// A program that activates exactly `opt` (no other pass), or `None` for
/// passes the stub does not know.
pub fn pass_program(opt: &str, crash_call_rate: f64, rng: &mut impl Rng) -> Option<String> {
    let mut n = || rng.random_range(1..50i64);
    let (x, y, z) = (n(), n(), n());
    let text = match opt {
        "const_fold" => format!("let v = {x} + {y};\nprint(v)"),
        "add_zero_elim" => format!("let x = {x};\nlet r = x + 0;\nprint(r)"),
        "mul_one_elim" => format!("let x = {x};\nprint(x * 1)"),
        "neg_neg_elim" => format!("let x = {x};\nprint(-(-x))"),
        "dead_store_elim" => format!("let u = {x};\nlet w = {y};\nprint(w)"),
        "mul_add_fuse" => {
            let (a, b, c) = (x, y, z);
            let crash = rng.random::<f64>() < crash_call_rate;
            let tail = if crash { ";\ncrash_if_fused()" } else { "" };
            format!("let a = {a};\nlet b = {b};\nlet c = {c};\nprint(a * b + c){tail}")
        }
        "repeat_concat_fuse" => {
            let w = WORDS[rng.random_range(0..WORDS.len())];
            format!("let s = \"{w}\";\nprint(s ++ s ++ s)")
        }
        "cmp_chain_simplify" => {
            let (a, b) = (rng.random_range(0..=2i64), rng.random_range(0..=2i64));
            format!("let a = {a};\nlet b = {b};\nprint((a < b) == 0)")
        }
        _ => return None,
    };
    Some(text)
}

/// A valid program that activates no pass.
pub fn inert_program(rng: &mut impl Rng) -> String {
    let a = rng.random_range(1..50i64);
    format!("let a = {a};\nlet b = a * 2;\nprint(b - a)")
}

fn requirement_text(opt: &str) -> String {
    let (prose, pseudo) = match opt {
        "const_fold" => (
            "An arithmetic or comparison operator whose operands are both numeric literals.",
            "Binary(op, Int|Float, Int|Float) where evaluation succeeds",
        ),
        "add_zero_elim" => (
            "An addition where one side is the integer literal 0 and the other is not a literal.",
            "Binary(Add, x, Int(0)) or Binary(Add, Int(0), x)",
        ),
        "mul_one_elim" => (
            "A multiplication where one side is the integer literal 1.",
            "Binary(Mul, x, Int(1)) or Binary(Mul, Int(1), x)",
        ),
        "neg_neg_elim" => (
            "A value negated twice in a row, for example `-(-x)`.",
            "Neg(Neg(x))",
        ),
        "cmp_chain_simplify" => (
            "A comparison whose boolean result is compared for equality against 0 or 1.",
            "Binary(Eq|Ne, Binary(cmp, a, b), Int(0|1))",
        ),
        "repeat_concat_fuse" => (
            "A string variable concatenated with itself, possibly several times.",
            "Binary(Concat, Var(s), Var(s)) or Binary(Concat, Call(repeat, [Var(s), Int(n)]), Var(s))",
        ),
        "mul_add_fuse" => (
            "A product added to another value, with the product on the left of the addition.",
            "Binary(Add, Binary(Mul, a, b), c)",
        ),
        "dead_store_elim" => (
            "A `let` binding with a side-effect-free initializer that is never read afterwards.",
            "Let(v, pure e) with no later read of v before v is rebound",
        ),
        _ => (
            "An input program that reaches the optimization.",
            "program reaches the optimization",
        ),
    };
    format!(
        "To activate `{opt}` the program needs the following.\n{prose}\nThe value involved should flow into `print` so that it is not discarded.\n\n```\nrequire {pseudo}\n```\n"
    )
}

impl CompletionBackend for StubBackend {
    fn id(&self) -> &str {
        "stub"
    }

    fn complete(&self, role: &ModelRole, prompt: &PromptBundle, seed: u64) -> Result<CompletionResult, ModelError> {
        let hash = prompt.hash();
        let mut texts: Vec<String> = match prompt.family {
            PromptFamily::Summarize => (0..role.samples_per_call)
                .map(|_| requirement_text(&prompt.target_opt))
                .collect(),
            PromptFamily::Generate | PromptFamily::Feedback => {
                let p = self.trigger_probability(prompt);
                let styles = if prompt.family == PromptFamily::Feedback {
                    example_styles(&prompt.text)
                } else {
                    Vec::new()
                };
                (0..role.samples_per_call)
                    .map(|i| self.generate_one(prompt, p, &styles, &mut Self::rng(&hash, seed, i)))
                    .collect()
            }
        };
        let truncated = cap_texts(&mut texts, role.max_output);
        Ok(CompletionResult {
            texts,
            backend_meta: String::from("stub"),
            latency: Duration::ZERO,
            from_cache: false,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::{self, MiniLangOptions, PASS_NAMES};
    use crate::model::extract_code_blocks;
    use crate::sut::{RunMode, RunStatus};

    fn bundle(target: &str, family: PromptFamily, text: &str) -> PromptBundle {
        PromptBundle {
            text: text.into(),
            target_opt: target.into(),
            family,
            example_ids: Vec::new(),
        }
    }

    #[test]
    fn same_prompt_and_seed_same_texts() {
        let s = StubBackend::new(StubConfig::default());
        let b = bundle("mul_add_fuse", PromptFamily::Generate, "p");
        let role = ModelRole::generation("stub");
        let x = s.complete(&role, &b, 7).unwrap();
        assert_eq!(x, s.complete(&role, &b, 7).unwrap());
        assert_eq!(x.texts.len(), 10);
        assert_ne!(x.texts, s.complete(&role, &b, 8).unwrap().texts);
        let other = bundle("mul_add_fuse", PromptFamily::Generate, "q");
        assert_ne!(x.texts, s.complete(&role, &other, 7).unwrap().texts);
    }

    #[test]
    fn pass_programs_trigger_only_their_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let opts = MiniLangOptions::default();
        for pass in PASS_NAMES {
            for _ in 0..20 {
                let src = pass_program(pass, 0.5, &mut rng).unwrap();
                let r = minilang::run(&src, RunMode::Optimized, &opts);
                assert_eq!(r.run_status, RunStatus::Ok, "{src}");
                let fired: alloc::collections::BTreeSet<_> = r.trigger_log.iter().collect();
                assert_eq!(fired.len(), 1, "{src}");
                assert!(fired.contains(&format!("WFOPT {pass}")));
            }
            let inert = inert_program(&mut rng);
            assert!(minilang::run(&inert, RunMode::Optimized, &opts).trigger_log.is_empty());
        }
        assert!(pass_program("loop_unroll", 0.5, &mut rng).is_none());
    }

    #[test]
    fn feedback_probability_uses_example_styles() {
        let s = StubBackend::new(StubConfig::heterogeneous());
        let text = "### Triggering example\n```\n// style 0\nprint(1)\n```\n### Triggering example\n```\n// style 1\nprint(1)\n```\n";
        let fb = bundle("x", PromptFamily::Feedback, text);
        assert_eq!(s.trigger_probability(&fb), 0.1);
        let good = bundle("x", PromptFamily::Feedback, "```\n// style 1\n```");
        assert_eq!(s.trigger_probability(&good), 0.95);
        let g = bundle("x", PromptFamily::Generate, text);
        assert_eq!(s.trigger_probability(&g), 0.1);
        let d = StubBackend::new(StubConfig::default());
        assert_eq!(d.trigger_probability(&good), 0.1);
        assert_eq!(d.trigger_probability(&bundle("x", PromptFamily::Feedback, "```\n// style 0\n```")), 0.6);
        assert_eq!(example_styles(text), [0, 1]);
        assert_eq!(program_style("// style 3\nprint(1)"), Some(3));
    }

    #[test]
    fn analysis_text_is_mixed() {
        let s = StubBackend::new(StubConfig::default());
        let r = s
            .complete(&ModelRole::analysis("stub"), &bundle("mul_add_fuse", PromptFamily::Summarize, "p"), 0)
            .unwrap();
        assert_eq!(r.texts.len(), 1);
        let t = &r.texts[0];
        assert!(t.contains("mul_add_fuse"));
        assert!(!crate::prompt::code_only(t).is_empty());
        assert!(!crate::prompt::nl_only(t).trim().is_empty());
    }

    #[test]
    fn trigger_counts_are_binomial() {
        // 400 calls of 10 samples at p = 0.3: mean 3, variance 2.1 per call.
        let cfg = StubConfig {
            default_competence: 0.3,
            ..StubConfig::default()
        };
        let s = StubBackend::new(cfg);
        let role = ModelRole::generation("stub");
        let opts = MiniLangOptions::default();
        let counts: Vec<f64> = (0..400u64)
            .map(|seed| {
                let b = bundle("neg_neg_elim", PromptFamily::Generate, "p");
                let texts = s.complete(&role, &b, seed).unwrap().texts;
                texts
                    .iter()
                    .filter(|t| {
                        let code = &extract_code_blocks(t, "", None)[0];
                        !minilang::run(code, RunMode::Optimized, &opts).trigger_log.is_empty()
                    })
                    .count() as f64
            })
            .collect();
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1.0);
        // Standard error of the mean is sqrt(2.1 / 400) ≈ 0.072.
        assert!((mean - 3.0).abs() < 4.0 * 0.072, "mean {mean}");
        assert!((var - 2.1).abs() < 0.6, "variance {var}");
    }

    #[test]
    fn config_validation() {
        assert!(StubConfig::default().validate().is_ok());
        assert!(StubConfig::flat(1.5).validate().is_err());
        let empty = StubConfig {
            style_quality: Vec::new(),
            ..StubConfig::default()
        };
        assert!(empty.validate().is_err());
    }
}
