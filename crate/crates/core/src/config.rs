//! Architecture configuration strings of the form
//! `input_filters; layout; [filters...]; [blocks...]`.
//!
//! ```
//! use afres::config::{parse_config, format_config};
//!
//! let cfg = parse_config("32; cna; [4, 8, 16, 32, 64, 128, 256]; [1, 1, 1, 1, 1, 1, 1]").unwrap();
//! assert_eq!(cfg.input_filters, 32);
//! assert_eq!(format_config(&cfg), "32; cna; [4, 8, 16, 32, 64, 128, 256]; [1, 1, 1, 1, 1, 1, 1]");
//! ```
//!
//! Whitespace is insignificant and an optional pair of enclosing braces is
//! accepted, so `{8; cna; [4]; [1]}` parses too.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// One layer letter of a block layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    Norm,
    Act,
}

impl LayerKind {
    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'c' => Some(LayerKind::Conv),
            'n' => Some(LayerKind::Norm),
            'a' => Some(LayerKind::Act),
            _ => None,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            LayerKind::Conv => 'c',
            LayerKind::Norm => 'n',
            LayerKind::Act => 'a',
        }
    }
}

/// Parsed architecture genome.
///
/// The layout is kept as raw text so that an invalid configuration can still
/// be represented and reported on by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub input_filters: usize,
    pub layout: String,
    pub filters: Vec<usize>,
    pub blocks: Vec<usize>,
}

impl ModelConfig {
    pub fn new(input_filters: usize, layout: impl Into<String>, filters: Vec<usize>, blocks: Vec<usize>) -> Self {
        ModelConfig { input_filters, layout: layout.into(), filters, blocks }
    }

    /// Layout as layer kinds. Unknown letters are skipped; call [`validate`]
    /// first when the config is untrusted.
    pub fn layout_kinds(&self) -> Vec<LayerKind> {
        self.layout.chars().filter_map(LayerKind::from_symbol).collect()
    }

    pub fn groups(&self) -> usize {
        self.filters.len()
    }

    pub fn is_valid(&self) -> bool {
        validate(self).is_empty()
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_config(self))
    }
}

impl std::str::FromStr for ModelConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_config(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    NoGroups,
    LengthMismatch,
    NonPositive,
    IllegalSymbol,
    NoConvolution,
}

/// A broken [`ModelConfig`] invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Syntax error with the character offset where parsing stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at position {}: {}", self.position, self.message)
    }
}

impl std::error::Error for ParseError {}

pub fn validate(cfg: &ModelConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |rule, field, message: String| out.push(Violation { rule, field, message });

    if cfg.input_filters < 1 {
        push(Rule::NonPositive, "input_filters", "input_filters must be ≥ 1".into());
    }
    for c in cfg.layout.chars() {
        if LayerKind::from_symbol(c).is_none() {
            push(Rule::IllegalSymbol, "layout", format!("layout contains illegal symbol '{c}'"));
        }
    }
    if !cfg.layout.contains('c') {
        push(Rule::NoConvolution, "layout", "layout must contain at least one 'c'".into());
    }
    if cfg.filters.is_empty() || cfg.blocks.is_empty() {
        push(Rule::NoGroups, "filters", "at least one group is required".into());
    }
    if cfg.filters.len() != cfg.blocks.len() {
        push(Rule::LengthMismatch, "filters", "filters/blocks length mismatch".into());
    }
    if cfg.filters.iter().any(|&f| f < 1) {
        push(Rule::NonPositive, "filters", "filters must be ≥ 1".into());
    }
    if cfg.blocks.iter().any(|&b| b < 1) {
        push(Rule::NonPositive, "blocks", "blocks must be ≥ 1".into());
    }
    out
}

pub fn format_config(cfg: &ModelConfig) -> String {
    fn list(v: &[usize]) -> String {
        let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        format!("[{}]", items.join(", "))
    }
    format!("{}; {}; {}; {}", cfg.input_filters, cfg.layout, list(&cfg.filters), list(&cfg.blocks))
}

/// Parse without checking invariants.
pub fn parse_config_unchecked(text: &str) -> std::result::Result<ModelConfig, ParseError> {
    Parser::new(text).parse()
}

/// Parse and validate a configuration string.
pub fn parse_config(text: &str) -> Result<ModelConfig> {
    let cfg = parse_config_unchecked(text)?;
    let violations = validate(&cfg);
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Validation(violations))
    }
}

/// Read a one-config-per-line file. Blank lines and lines starting with `#`
/// are skipped. Returns the raw (trimmed) lines; resolving them is up to the
/// caller since lines may also name presets.
pub fn read_config_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(String::from).collect())
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

type PResult<T> = std::result::Result<T, ParseError>;

impl Parser {
    fn new(text: &str) -> Self {
        Parser { chars: text.chars().collect(), pos: 0 }
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(ParseError { position: self.pos, message: message.into() })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> PResult<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn parse(mut self) -> PResult<ModelConfig> {
        let braced = self.eat('{');
        let input_filters = self.integer()?;
        self.expect(';')?;
        let layout = self.layout()?;
        self.expect(';')?;
        let filters = self.list()?;
        self.expect(';')?;
        let blocks = self.list()?;
        if braced {
            self.expect('}')?;
        }
        self.skip_ws();
        if self.pos < self.chars.len() {
            return self.err("unexpected trailing input");
        }
        Ok(ModelConfig { input_filters, layout, filters, blocks })
    }

    fn integer(&mut self) -> PResult<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected integer");
        }
        let digits: String = self.chars[start..self.pos].iter().collect();
        digits.parse().map_err(|_| ParseError { position: start, message: "integer out of range".into() })
    }

    fn layout(&mut self) -> PResult<String> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected layout");
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn list(&mut self) -> PResult<Vec<usize>> {
        self.expect('[')?;
        let mut items = vec![self.integer()?];
        loop {
            if self.eat(']') {
                return Ok(items);
            }
            if !self.eat(',') {
                return self.err("expected ',' or ']'");
            }
            // tolerate a trailing comma before the closing bracket
            if self.eat(']') {
                return Ok(items);
            }
            items.push(self.integer()?);
        }
    }
}
