//! Bad-definition expressions such as `Ever 90+ DPD in 12 Months` or
//! `2 Times 30+ DPD and 4 Times X+ DPD in 10 Months`.
//!
//! Grammar (keywords case-insensitive, whitespace-insensitive):
//!
//! ```text
//! definition := clause ("and" clause)* "in" INT ("Month" | "Months")
//! clause     := ("Ever" | INT ("Time" | "Times") ["Consecutive"]) THRESH "+" "DPD"
//! THRESH     := "X" | INT
//! ```
//!
//! A threshold of `X` means any positive DPD. Numeric thresholds must be one
//! of the configured bucket edges.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AccountHistory, Observation};
use crate::states::StateConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Threshold {
    /// Any positive DPD.
    X,
    Days(u32),
}

impl Threshold {
    pub fn min_dpd(self) -> u32 {
        match self {
            Threshold::X => 1,
            Threshold::Days(d) => d,
        }
    }

    fn is_met(self, obs: &Observation) -> bool {
        obs.dpd >= self.min_dpd()
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::X => f.write_str("X"),
            Threshold::Days(d) => write!(f, "{d}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClauseMode {
    Ever,
    Times(u32),
    ConsecutiveTimes(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Clause {
    pub mode: ClauseMode,
    pub threshold: Threshold,
}

impl Clause {
    /// Whether the clause holds over `observations`.
    pub fn holds(&self, observations: &[Observation]) -> bool {
        match self.mode {
            ClauseMode::Ever => observations.iter().any(|o| self.threshold.is_met(o)),
            ClauseMode::Times(k) => observations.iter().filter(|o| self.threshold.is_met(o)).count() >= k as usize,
            ClauseMode::ConsecutiveTimes(k) => {
                let mut run = 0u32;
                let mut prev_month = None;
                for o in observations {
                    if self.threshold.is_met(o) {
                        run = match prev_month {
                            Some(m) if run > 0 && o.month_on_book == m + 1 => run + 1,
                            _ => 1,
                        };
                        if run >= k {
                            return true;
                        }
                    } else {
                        run = 0;
                    }
                    prev_month = Some(o.month_on_book);
                }
                false
            }
        }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            ClauseMode::Ever => write!(f, "Ever {}+ DPD", self.threshold),
            ClauseMode::Times(k) => write!(f, "{k} Times {}+ DPD", self.threshold),
            ClauseMode::ConsecutiveTimes(k) => {
                write!(f, "{k} Times Consecutive {}+ DPD", self.threshold)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BadDefinition {
    pub clauses: Vec<Clause>,
    pub window_months: u32,
}

impl BadDefinition {
    pub fn new(clauses: Vec<Clause>, window_months: u32, config: &StateConfig) -> Result<Self> {
        let def = BadDefinition { clauses, window_months };
        def.validate(config)?;
        Ok(def)
    }

    pub fn ever(threshold: Threshold, window_months: u32) -> Self {
        BadDefinition {
            clauses: vec![Clause {
                mode: ClauseMode::Ever,
                threshold,
            }],
            window_months,
        }
    }

    pub fn validate(&self, config: &StateConfig) -> Result<()> {
        if self.clauses.is_empty() {
            return Err(Error::Semantic("at least one clause is required".into()));
        }
        if self.window_months == 0 {
            return Err(Error::Semantic("window must be at least 1 month".into()));
        }
        for clause in &self.clauses {
            if let ClauseMode::Times(k) | ClauseMode::ConsecutiveTimes(k) = clause.mode {
                if k == 0 {
                    return Err(Error::Semantic(format!("{clause}: count must be at least 1")));
                }
                if k > self.window_months {
                    return Err(Error::Semantic(format!(
                        "{clause}: {k} occurrences cannot fit in {} months",
                        self.window_months
                    )));
                }
            }
            if let Threshold::Days(d) = clause.threshold {
                if !config.bucket_edges.contains(&d) {
                    return Err(Error::Semantic(format!(
                        "unknown threshold {d}+; expected X or one of {:?}",
                        config.bucket_edges
                    )));
                }
            }
        }
        Ok(())
    }

    /// True iff every clause holds within the first `window_months` months on
    /// book. Short histories are judged on what is available.
    pub fn evaluate(&self, history: &AccountHistory) -> bool {
        let observations = history.within(self.window_months);
        self.clauses.iter().all(|c| c.holds(observations))
    }
}

impl fmt::Display for BadDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, clause) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(" and ")?;
            }
            write!(f, "{clause}")?;
        }
        write!(f, " in {} Months", self.window_months)
    }
}

impl FromStr for BadDefinition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_bad_definition(s)
    }
}

pub fn parse_bad_definition(text: &str) -> Result<BadDefinition> {
    parse_bad_definition_with(text, &StateConfig::default())
}

pub fn parse_bad_definition_with(text: &str, config: &StateConfig) -> Result<BadDefinition> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        end: text.len(),
    };
    let def = parser.definition()?;
    def.validate(config)?;
    Ok(def)
}

pub fn format_bad_definition(def: &BadDefinition) -> String {
    def.to_string()
}

pub fn evaluate_bad_definition(def: &BadDefinition, history: &AccountHistory) -> bool {
    def.evaluate(history)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(u32),
    Word(String),
    Plus,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Int(n) => write!(f, "{n}"),
            Tok::Word(w) => write!(f, "{w:?}"),
            Tok::Plus => f.write_str("\"+\""),
        }
    }
}

/// Tokens with their byte offsets.
fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '+' {
            chars.next();
            tokens.push((start, Tok::Plus));
        } else if c.is_ascii_digit() {
            let mut end = start;
            while let Some(&(i, d)) = chars.peek() {
                if !d.is_ascii_digit() {
                    break;
                }
                end = i + d.len_utf8();
                chars.next();
            }
            let n = text[start..end].parse().map_err(|_| Error::Syntax {
                position: start,
                expected: "an integer that fits in 32 bits".into(),
                found: text[start..end].to_string(),
            })?;
            tokens.push((start, Tok::Int(n)));
        } else if c.is_alphabetic() {
            let mut end = start;
            while let Some(&(i, a)) = chars.peek() {
                if !a.is_alphabetic() {
                    break;
                }
                end = i + a.len_utf8();
                chars.next();
            }
            tokens.push((start, Tok::Word(text[start..end].to_lowercase())));
        } else {
            return Err(Error::Syntax {
                position: start,
                expected: "a word, integer or '+'".into(),
                found: format!("{c:?}"),
            });
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [(usize, Tok)],
    pos: usize,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn error(&self, expected: &str) -> Error {
        match self.tokens.get(self.pos) {
            Some((at, tok)) => Error::Syntax {
                position: *at,
                expected: expected.into(),
                found: tok.to_string(),
            },
            None => Error::Syntax {
                position: self.end,
                expected: expected.into(),
                found: "end of input".into(),
            },
        }
    }

    fn peek_word(&self, words: &[&str]) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if words.contains(&w.as_str()))
    }

    fn expect_word(&mut self, words: &[&str], expected: &str) -> Result<()> {
        if self.peek_word(words) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn expect_int(&mut self, expected: &str) -> Result<u32> {
        match self.peek() {
            Some(&Tok::Int(n)) => {
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.error(expected)),
        }
    }

    fn definition(&mut self) -> Result<BadDefinition> {
        let mut clauses = vec![self.clause()?];
        while self.peek_word(&["and"]) {
            self.pos += 1;
            clauses.push(self.clause()?);
        }
        self.expect_word(&["in"], "\"and\" or \"in\"")?;
        let window_months = self.expect_int("window length in months")?;
        self.expect_word(&["month", "months"], "\"Months\"")?;
        if self.pos < self.tokens.len() {
            return Err(self.error("end of input"));
        }
        Ok(BadDefinition { clauses, window_months })
    }

    fn clause(&mut self) -> Result<Clause> {
        let mode = if self.peek_word(&["ever"]) {
            self.pos += 1;
            ClauseMode::Ever
        } else if let Some(&Tok::Int(k)) = self.peek() {
            self.pos += 1;
            self.expect_word(&["time", "times"], "\"Times\"")?;
            if self.peek_word(&["consecutive"]) {
                self.pos += 1;
                ClauseMode::ConsecutiveTimes(k)
            } else {
                ClauseMode::Times(k)
            }
        } else {
            return Err(self.error("\"Ever\" or a count"));
        };
        let threshold = match self.peek() {
            Some(Tok::Word(w)) if w == "x" => {
                self.pos += 1;
                Threshold::X
            }
            Some(&Tok::Int(d)) => {
                self.pos += 1;
                Threshold::Days(d)
            }
            _ => return Err(self.error("threshold (X or a DPD value)")),
        };
        if self.peek() != Some(&Tok::Plus) {
            return Err(self.error("\"+\""));
        }
        self.pos += 1;
        self.expect_word(&["dpd"], "\"DPD\"")?;
        Ok(Clause { mode, threshold })
    }
}
