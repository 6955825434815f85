// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

//! Structural signatures of SQL text and nearest-known-query matching.
//!
//! The tokenizer covers a pragmatic subset: SELECT lists, FROM and JOIN
//! clauses (comma joins too), WHERE/ON/GROUP BY/ORDER BY/HAVING, `IN` and
//! `EXISTS` subqueries, derived tables, `WITH` clauses, aliases and function
//! calls. It does not validate the query.
//!
//! Counting rules:
//! - tables: distinct names after FROM or JOIN at any nesting level,
//!   excluding names bound by `WITH`;
//! - columns: distinct bare column names (`t.x` counts as `x`) in the column
//!   clauses; `*` and `t.*` count as one column `*`; literals, function
//!   names and aliases are skipped;
//! - subqueries: parentheses that open directly onto SELECT.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct StructuralSignature {
    pub n_tables: u32,
    pub n_columns: u32,
    pub n_subqueries: u32,
    pub n_map_tasks: u32,
}

impl StructuralSignature {
    pub fn new(n_tables: u32, n_columns: u32, n_subqueries: u32, n_map_tasks: u32) -> Self {
        StructuralSignature {
            n_tables,
            n_columns,
            n_subqueries,
            n_map_tasks,
        }
    }

    pub fn as_vector(&self) -> [f64; 4] {
        [
            f64::from(self.n_tables),
            f64::from(self.n_columns),
            f64::from(self.n_subqueries),
            f64::from(self.n_map_tasks),
        ]
    }
}

/// Known queries by id. Ordered, so iteration is lexicographic.
pub type Registry = BTreeMap<String, StructuralSignature>;

pub fn load_registry(path: &Path) -> Result<Registry> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_registry(path: &Path, registry: &Registry) -> Result<()> {
    let text = serde_json::to_string_pretty(registry)?;
    std::fs::write(path, text).map_err(|e| Error::storage(path, e))
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Word(String),
    Quoted(String),
    Number,
    Str,
    Star,
    Dot,
    Comma,
    Open,
    Close,
    Op,
}

fn tokenize(sql: &str) -> Vec<Token> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '-' if chars.get(i + 1) == Some(&'-') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '/' if chars.get(i + 1) == Some(&'*') => {
                i += 2;
                while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                    i += 1;
                }
                i += 2;
            }
            '\'' => {
                i += 1;
                while i < chars.len() {
                    if chars[i] == '\'' {
                        if chars.get(i + 1) == Some(&'\'') {
                            i += 2;
                            continue;
                        }
                        break;
                    }
                    i += 1;
                }
                i += 1;
                out.push(Token::Str);
            }
            '"' | '`' => {
                let close = c;
                let start = i + 1;
                i = start;
                while i < chars.len() && chars[i] != close {
                    i += 1;
                }
                out.push(Token::Quoted(
                    chars[start..i.min(chars.len())].iter().collect(),
                ));
                i += 1;
            }
            c if c.is_ascii_digit() => {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.') {
                    i += 1;
                }
                out.push(Token::Number);
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$')
                {
                    i += 1;
                }
                out.push(Token::Word(chars[start..i].iter().collect()));
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '.' => {
                out.push(Token::Dot);
                i += 1;
            }
            ',' => {
                out.push(Token::Comma);
                i += 1;
            }
            '(' => {
                out.push(Token::Open);
                i += 1;
            }
            ')' => {
                out.push(Token::Close);
                i += 1;
            }
            _ => {
                out.push(Token::Op);
                i += 1;
            }
        }
    }
    out
}

const KEYWORDS: &[&str] = &[
    "all",
    "and",
    "any",
    "as",
    "asc",
    "between",
    "by",
    "case",
    "cast",
    "cross",
    "current_date",
    "date",
    "day",
    "desc",
    "distinct",
    "else",
    "end",
    "except",
    "exists",
    "extract",
    "false",
    "fetch",
    "first",
    "following",
    "from",
    "full",
    "group",
    "having",
    "in",
    "inner",
    "intersect",
    "interval",
    "is",
    "join",
    "last",
    "left",
    "like",
    "limit",
    "month",
    "natural",
    "not",
    "null",
    "nulls",
    "offset",
    "on",
    "or",
    "order",
    "outer",
    "over",
    "partition",
    "preceding",
    "range",
    "right",
    "rollup",
    "rows",
    "select",
    "some",
    "then",
    "top",
    "true",
    "unbounded",
    "union",
    "using",
    "when",
    "where",
    "with",
    "year",
];

fn is_keyword(w: &str) -> bool {
    KEYWORDS.contains(&w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Clause {
    None,
    With,
    Select,
    From { expect_table: bool },
    Columns,
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    clause: Clause,
    /// A call or grouping parenthesis, as opposed to a subquery.
    inline: bool,
}

/// Extracts the structural signature of `sql`; `n_map_tasks` is passed
/// through unchanged.
pub fn extract_signature(sql: &str, n_map_tasks: u32) -> Result<StructuralSignature> {
    if sql.trim().is_empty() {
        return Err(Error::UnparseableQuery("empty query text".into()));
    }
    let tokens = tokenize(sql);
    let lower = |t: &Token| match t {
        Token::Word(w) => Some(w.to_ascii_lowercase()),
        _ => None,
    };
    if !tokens.iter().any(|t| lower(t).as_deref() == Some("select")) {
        return Err(Error::UnparseableQuery("no SELECT keyword".into()));
    }

    let mut tables = BTreeSet::new();
    let mut columns = BTreeSet::new();
    let mut ctes = BTreeSet::new();
    let mut aliases = BTreeSet::new();
    let mut n_subqueries = 0u32;
    let mut stack: Vec<Frame> = Vec::new();
    let mut frame = Frame {
        clause: Clause::None,
        inline: false,
    };
    // Whether the previous token ended an operand, so a following bare word is an alias.
    let mut after_operand = false;
    let mut after_as = false;

    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        let next = tokens.get(i + 1);
        let was_operand = after_operand;
        after_operand = false;
        match tok {
            Token::Open => {
                stack.push(frame);
                let opens_select = next.and_then(lower).as_deref() == Some("select");
                if opens_select {
                    n_subqueries += 1;
                    frame = Frame {
                        clause: Clause::None,
                        inline: false,
                    };
                } else {
                    frame.inline = true;
                }
            }
            Token::Close => {
                frame = stack.pop().unwrap_or(frame);
                if let Clause::From { .. } = frame.clause {
                    frame.clause = Clause::From {
                        expect_table: false,
                    };
                }
                after_operand = true;
            }
            Token::Comma => {
                if let Clause::From { .. } = frame.clause {
                    frame.clause = Clause::From { expect_table: true };
                }
            }
            Token::Star => {
                // `*` as a projection, not as multiplication.
                let projection = matches!(frame.clause, Clause::Select) && !was_operand
                    || i > 0 && tokens[i - 1] == Token::Dot;
                if projection && matches!(frame.clause, Clause::Select | Clause::Columns) {
                    columns.insert("*".to_string());
                    after_operand = true;
                }
            }
            Token::Number | Token::Str => after_operand = true,
            Token::Dot | Token::Op => {}
            Token::Word(word) | Token::Quoted(word) => {
                let w = word.to_ascii_lowercase();
                if is_keyword(&w) && matches!(tok, Token::Word(_)) {
                    let followed_by_by = next.and_then(lower).as_deref() == Some("by");
                    match w.as_str() {
                        "with" if !frame.inline => frame.clause = Clause::With,
                        "select" => frame.clause = Clause::Select,
                        "from" if !frame.inline => {
                            frame.clause = Clause::From { expect_table: true }
                        }
                        "join" => frame.clause = Clause::From { expect_table: true },
                        "where" | "on" | "having" => frame.clause = Clause::Columns,
                        "group" | "order" if followed_by_by => frame.clause = Clause::Columns,
                        "partition" if followed_by_by => {}
                        "end" => after_operand = true,
                        _ => {}
                    }
                    after_as = w == "as";
                    i += 1;
                    continue;
                }
                // Qualified name: collect `a.b.c`, keeping the parts.
                let mut parts = vec![word.clone()];
                let mut j = i;
                while tokens.get(j + 1) == Some(&Token::Dot) {
                    match tokens.get(j + 2) {
                        Some(Token::Word(p) | Token::Quoted(p)) => {
                            parts.push(p.clone());
                            j += 2;
                        }
                        _ => break,
                    }
                }
                let is_call = tokens.get(j + 1) == Some(&Token::Open);
                let alias = after_as || was_operand;
                after_as = false;
                match frame.clause {
                    Clause::With => {
                        if !alias {
                            ctes.insert(w.clone());
                        }
                    }
                    Clause::From { expect_table: true } if !is_call => {
                        let name = parts
                            .iter()
                            .map(|p| p.to_ascii_lowercase())
                            .collect::<Vec<_>>()
                            .join(".");
                        if !ctes.contains(&name) {
                            tables.insert(name);
                        }
                        frame.clause = Clause::From {
                            expect_table: false,
                        };
                    }
                    Clause::Select if alias => {
                        aliases.insert(w.clone());
                    }
                    Clause::Select if !is_call => {
                        columns.insert(parts.last().unwrap().to_ascii_lowercase());
                    }
                    // A bare name may refer back to a projection alias.
                    Clause::Columns
                        if !is_call && !alias && (parts.len() > 1 || !aliases.contains(&w)) =>
                    {
                        columns.insert(parts.last().unwrap().to_ascii_lowercase());
                    }
                    _ => {}
                }
                after_operand = !is_call;
                i = j + 1;
                continue;
            }
        }
        after_as = false;
        i += 1;
    }

    Ok(StructuralSignature {
        n_tables: tables.len() as u32,
        n_columns: columns.len() as u32,
        n_subqueries,
        n_map_tasks,
    })
}

pub fn cosine_similarity(a: &StructuralSignature, b: &StructuralSignature) -> Result<f64> {
    let (x, y) = (a.as_vector(), b.as_vector());
    let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
    let nx = x.iter().map(|v| v * v).sum::<f64>();
    let ny = y.iter().map(|v| v * v).sum::<f64>();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::ZeroSignature);
    }
    // One square root keeps identical signatures at exactly 1.
    Ok((dot / (nx * ny).sqrt()).clamp(0.0, 1.0))
}

/// The registered query most similar to `sig`; equal scores resolve to the
/// lexicographically smallest id.
pub fn nearest_known(sig: &StructuralSignature, registry: &Registry) -> Result<(String, f64)> {
    let mut best: Option<(&String, f64)> = None;
    for (id, known) in registry {
        let score = cosine_similarity(sig, known)?;
        if best.is_none_or(|(_, b)| score > b + 1e-12) {
            best = Some((id, score));
        }
    }
    best.map(|(id, s)| (id.clone(), s))
        .ok_or(Error::NoKnownQueries)
}
