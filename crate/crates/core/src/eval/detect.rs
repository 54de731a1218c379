use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Named patterns for hard-coded or symmetric mass assumptions.
pub const MASS_PATTERNS: [(&str, &str); 3] = [
    (
        "com_midpoint",
        r#"\(\s*df\s*\[\s*['"]star[12]_[xyz]['"]\s*\]\s*\+\s*df\s*\[\s*['"]star[12]_[xyz]['"]\s*\]\s*\)\s*/\s*2(?:\.0*)?(?:[^\w.]|$)"#,
    ),
    ("unit_mass", r"(?m)\b(?:star[12]_mass|m[12]|mass[12])\s*=\s*1(?:\.0*)?(?:[^\w.]|$)"),
    (
        "equal_masses",
        r"(?m)\b(?:m1\s*=\s*m2|m2\s*=\s*m1|star1_mass\s*=\s*star2_mass|star2_mass\s*=\s*star1_mass)\b\s*(?:[;#\r\n]|$)",
    ),
];

fn compiled() -> &'static [(&'static str, Regex)] {
    static CELL: OnceLock<Vec<(&'static str, Regex)>> = OnceLock::new();
    CELL.get_or_init(|| MASS_PATTERNS.iter().map(|(n, p)| (*n, Regex::new(p).expect("valid pattern"))).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternHit {
    pub pattern: String,
    pub snippet: String,
    /// 1-based line of the transcript the hit came from.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MassAssumption {
    pub detected: bool,
    pub hits: Vec<PatternHit>,
}

const AGENT_ROLES: [&str; 3] = ["agent", "assistant", "model"];

/// Agent-authored code in one transcript line. JSON lines contribute their
/// `code` field and fenced blocks of `content` when the role is an agent
/// role; other lines are treated as plain text.
fn agent_code(line: &str) -> Option<Vec<String>> {
    let v: serde_json::Value = serde_json::from_str(line).ok()?;
    let obj = v.as_object()?;
    let role = obj.get("role").and_then(|r| r.as_str()).unwrap_or("");
    if !AGENT_ROLES.contains(&role) {
        return Some(vec![]);
    }
    let mut out = Vec::new();
    if let Some(code) = obj.get("code").and_then(|c| c.as_str()) {
        out.push(code.to_string());
    }
    if let Some(content) = obj.get("content").and_then(|c| c.as_str()) {
        out.extend(fenced_blocks(content));
    }
    Some(out)
}

fn fenced_blocks(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(block) => out.push(block),
                None => current = Some(String::new()),
            }
        } else if let Some(block) = current.as_mut() {
            block.push_str(line);
            block.push('\n');
        }
    }
    out.extend(current);
    out
}

/// Scans a transcript for explicit mass assumptions in agent code.
///
/// JSONL transcripts (one object per line with `role`, `content` and
/// optionally `code`) are filtered by role. Plain text is scanned through
/// its fenced code blocks, or whole when it has none.
pub fn detect_mass_assumption(transcript: &str) -> MassAssumption {
    let mut chunks: Vec<(usize, String)> = Vec::new();
    let mut plain = String::new();
    let mut any_json = false;
    for (i, line) in transcript.lines().enumerate() {
        match agent_code(line) {
            Some(code) => {
                any_json = true;
                chunks.extend(code.into_iter().map(|c| (i + 1, c)));
            }
            None => {
                plain.push_str(line);
                plain.push('\n');
            }
        }
    }
    if !any_json || !plain.trim().is_empty() {
        let blocks = fenced_blocks(&plain);
        if blocks.is_empty() {
            chunks.push((1, plain));
        } else {
            chunks.extend(blocks.into_iter().map(|b| (1, b)));
        }
    }
    let mut hits = Vec::new();
    for (line, text) in &chunks {
        for (name, re) in compiled() {
            for m in re.find_iter(text) {
                hits.push(PatternHit {
                    pattern: name.to_string(),
                    snippet: m.as_str().trim().to_string(),
                    line: *line,
                });
            }
        }
    }
    MassAssumption { detected: !hits.is_empty(), hits }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listed_assignments_hit() {
        for code in ["star1_mass = 1.0", "m1 = m2", "m1 = 1.0", "m2 = 1.0", "m1=1", "mass2 = 1."] {
            assert!(detect_mass_assumption(code).detected, "{code}");
        }
        let com = "com_x = (df['star1_x'] + df['star2_x'])/2";
        assert_eq!(detect_mass_assumption(com).hits[0].pattern, "com_midpoint");
    }

    #[test]
    fn near_misses_do_not_hit() {
        for code in
            ["m1 = 1.05", "m1 == 1.0", "m1 = 10", "m1 = 1.0e30", "m1 = m2 * q", "mass_ratio = 1.0", "if m1 == m2:"]
        {
            assert!(!detect_mass_assumption(code).detected, "{code}");
        }
    }

    #[test]
    fn environment_text_is_ignored() {
        let t = concat!(
            r#"{"role":"environment","content":"```\nm1 = m2\n```"}"#,
            "\n",
            r#"{"role":"agent","content":"looking at data","code":"M = 4*pi**2*a**3/(G*T**2)"}"#,
        );
        assert!(!detect_mass_assumption(t).detected);
        let t2 = r#"{"role":"assistant","content":"```python\nm2 = 1.0\n```"}"#;
        let d = detect_mass_assumption(t2);
        assert!(d.detected);
        assert_eq!(d.hits[0].line, 1);
    }
}
