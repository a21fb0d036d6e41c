//! `{{slot}}` prompt templates.
//!
//! A template file has a `[system]` section and a `[user]` section, each on
//! its own line. Lines starting with `%%` are comments. A line holding only a
//! slot whose value is empty is dropped entirely, so optional slots leave no
//! blank residue.

use std::fmt;
use std::str::FromStr;

use super::PromptError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Context,
    Themes,
    Statements,
    OutputContract,
    Modifiers,
    PriorTable,
    Guidance,
}

impl Slot {
    pub const ALL: [Slot; 7] = [
        Slot::Context,
        Slot::Themes,
        Slot::Statements,
        Slot::OutputContract,
        Slot::Modifiers,
        Slot::PriorTable,
        Slot::Guidance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Slot::Context => "context",
            Slot::Themes => "themes",
            Slot::Statements => "statements",
            Slot::OutputContract => "output_contract",
            Slot::Modifiers => "modifiers",
            Slot::PriorTable => "prior_table",
            Slot::Guidance => "guidance",
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Slot {
    type Err = PromptError;
    fn from_str(s: &str) -> Result<Self, PromptError> {
        Slot::ALL
            .into_iter()
            .find(|slot| slot.name() == s)
            .ok_or_else(|| PromptError::UnknownSlot(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(Slot),
}

type Line = Vec<Segment>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    system: Vec<Line>,
    user: Vec<Line>,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut system = None::<Vec<Line>>;
        let mut user = None::<Vec<Line>>;
        let mut current: Option<&mut Vec<Line>> = None;
        for (n, raw) in text.lines().enumerate() {
            if raw.starts_with("%%") {
                continue;
            }
            match raw.trim_end() {
                "[system]" => {
                    if system.is_some() {
                        return Err(PromptError::Template("duplicate [system] section".into()));
                    }
                    current = Some(system.insert(Vec::new()));
                    continue;
                }
                "[user]" => {
                    if user.is_some() {
                        return Err(PromptError::Template("duplicate [user] section".into()));
                    }
                    current = Some(user.insert(Vec::new()));
                    continue;
                }
                _ => {}
            }
            match current.as_deref_mut() {
                Some(lines) => lines.push(parse_line(raw, n + 1)?),
                None if raw.trim().is_empty() => {}
                None => {
                    return Err(PromptError::Template(format!("line {}: text before the [system] section", n + 1)))
                }
            }
        }
        match (system, user) {
            (Some(system), Some(user)) => Ok(Self { system, user }),
            _ => Err(PromptError::Template("template needs both [system] and [user] sections".into())),
        }
    }

    pub fn uses(&self, slot: Slot) -> bool {
        self.system.iter().chain(&self.user).flatten().any(|s| *s == Segment::Slot(slot))
    }

    pub fn require(&self, slots: &[Slot]) -> Result<(), PromptError> {
        match slots.iter().find(|s| !self.uses(**s)) {
            Some(missing) => Err(PromptError::MissingSlot(*missing)),
            None => Ok(()),
        }
    }

    /// Renders `(system, user)` text. `value` supplies each slot's content.
    pub fn render(&self, value: impl Fn(Slot) -> String) -> (String, String) {
        (render_lines(&self.system, &value), render_lines(&self.user, &value))
    }
}

fn parse_line(raw: &str, line_no: usize) -> Result<Line, PromptError> {
    let mut segments = Vec::new();
    let mut rest = raw;
    while let Some(start) = rest.find("{{") {
        if start > 0 {
            segments.push(Segment::Text(rest[..start].to_string()));
        }
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| PromptError::Template(format!("line {line_no}: unclosed `{{{{`")))?;
        segments.push(Segment::Slot(after[..end].trim().parse()?));
        rest = &after[end + 2..];
    }
    if !rest.is_empty() {
        segments.push(Segment::Text(rest.to_string()));
    }
    Ok(segments)
}

fn render_lines(lines: &[Line], value: &impl Fn(Slot) -> String) -> String {
    let mut out: Vec<String> = Vec::with_capacity(lines.len());
    for line in lines {
        let only_slot = match line.iter().filter(|s| !matches!(s, Segment::Text(t) if t.trim().is_empty())).collect::<Vec<_>>()[..] {
            [Segment::Slot(slot)] => Some(*slot),
            _ => None,
        };
        if let Some(slot) = only_slot {
            let v = value(slot);
            if v.is_empty() {
                continue;
            }
            out.push(v);
            continue;
        }
        let mut rendered = String::new();
        for seg in line {
            match seg {
                Segment::Text(t) => rendered.push_str(t),
                Segment::Slot(slot) => rendered.push_str(&value(*slot)),
            }
        }
        out.push(rendered);
    }
    let joined = out.join("\n");
    collapse_blank_runs(joined.trim())
}

fn collapse_blank_runs(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut blank_run = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            blank_run += 1;
            if blank_run > 1 {
                continue;
            }
        } else {
            blank_run = 0;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(line.trim_end());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_slots() {
        let t = PromptTemplate::parse("%% c\n[system]\nHello {{context}}!\n{{modifiers}}\n[user]\n{{statements}}\n").unwrap();
        assert!(t.uses(Slot::Context));
        assert!(!t.uses(Slot::Themes));
        let (sys, user) = t.render(|s| match s {
            Slot::Context => "world".into(),
            Slot::Statements => "[S1] a".into(),
            _ => String::new(),
        });
        assert_eq!(sys, "Hello world!");
        assert_eq!(user, "[S1] a");
    }

    #[test]
    fn slot_values_are_not_rescanned() {
        let t = PromptTemplate::parse("[system]\n{{context}}\n[user]\nx\n").unwrap();
        let (sys, _) = t.render(|_| "{{themes}}".into());
        assert_eq!(sys, "{{themes}}");
    }

    #[test]
    fn template_errors() {
        assert!(matches!(PromptTemplate::parse("[system]\n{{bogus}}\n[user]\n"), Err(PromptError::UnknownSlot(s)) if s == "bogus"));
        assert!(matches!(PromptTemplate::parse("[system]\n{{context\n[user]\n"), Err(PromptError::Template(_))));
        assert!(matches!(PromptTemplate::parse("[system]\nonly system\n"), Err(PromptError::Template(_))));
        assert!(matches!(PromptTemplate::parse("stray\n[system]\n[user]\n"), Err(PromptError::Template(_))));
    }
}
