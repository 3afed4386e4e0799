//! Line-level preprocessing and tokenization.
//!
//! SPICE input is line-oriented: `*` opens a comment line, `+` continues the
//! previous card. The lexer folds continuations into logical lines (keeping
//! the line number where each card started) and splits a logical line into
//! tokens. `{...}` expression bodies are kept as single opaque tokens and
//! handed to the expression parser later.

use crate::error::ParseError;

/// One logical line (continuations joined) with its 1-based source line.
#[derive(Debug, Clone)]
pub struct LogicalLine {
    pub line_no: usize,
    pub text: String,
}

/// Split source text into logical lines, dropping comments and blanks.
pub fn logical_lines(source: &str) -> Vec<LogicalLine> {
    let mut out: Vec<LogicalLine> = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('*') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('+') {
            if let Some(last) = out.last_mut() {
                last.text.push(' ');
                last.text.push_str(rest.trim());
                continue;
            }
            // A leading '+' with nothing to continue: keep it so the parser
            // reports a syntax error at the right line.
        }
        out.push(LogicalLine {
            line_no,
            text: trimmed.to_string(),
        });
    }
    out
}

/// Token classes within one logical line.
#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    /// Bare word: device/node/parameter name or a numeric literal.
    Word(String),
    /// `{...}` body, braces stripped.
    Braced(String),
    Equals,
    LParen,
    RParen,
    Comma,
    /// The `PARAMS:` keyword.
    ParamsColon,
}

/// Tokenize a logical line.
pub fn tokenize(line: &LogicalLine) -> Result<Vec<Tok>, ParseError> {
    let mut toks = Vec::new();
    let chars: Vec<char> = line.text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '=' => {
                toks.push(Tok::Equals);
                i += 1;
            }
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            ',' => {
                toks.push(Tok::Comma);
                i += 1;
            }
            '{' => {
                let mut depth = 1usize;
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && depth > 0 {
                    match chars[j] {
                        '{' => depth += 1,
                        '}' => depth -= 1,
                        _ => {}
                    }
                    j += 1;
                }
                if depth != 0 {
                    return Err(ParseError::Syntax {
                        line: line.line_no,
                        message: "unterminated '{' expression".into(),
                    });
                }
                let body: String = chars[start..j - 1].iter().collect();
                toks.push(Tok::Braced(body));
                i = j;
            }
            _ => {
                // A word: name, number, or number with sign/suffix. '+'/'-'
                // only start a word when they begin a numeric literal.
                let start = i;
                while i < chars.len() {
                    let ch = chars[i];
                    let is_word = ch.is_ascii_alphanumeric()
                        || matches!(ch, '.' | '_' | '#' | '$')
                        || (matches!(ch, '+' | '-')
                            && i > start
                            && matches!(chars[i - 1], 'e' | 'E')
                            && chars[start].is_ascii_digit_or_sign());
                    if !is_word && !(i == start && matches!(ch, '+' | '-')) {
                        break;
                    }
                    i += 1;
                }
                if i == start {
                    return Err(ParseError::Syntax {
                        line: line.line_no,
                        message: format!("unexpected character '{c}'"),
                    });
                }
                let word: String = chars[start..i].iter().collect();
                if word.eq_ignore_ascii_case("PARAMS")
                    && i < chars.len()
                    && chars[i] == ':'
                {
                    toks.push(Tok::ParamsColon);
                    i += 1;
                } else {
                    toks.push(Tok::Word(word));
                }
            }
        }
    }
    Ok(toks)
}

trait DigitOrSign {
    fn is_ascii_digit_or_sign(&self) -> bool;
}
impl DigitOrSign for char {
    fn is_ascii_digit_or_sign(&self) -> bool {
        self.is_ascii_digit() || matches!(self, '+' | '-' | '.')
    }
}

/// Parse a SPICE numeric literal: optional sign, mantissa, optional exponent,
/// optional SI scale suffix (k, MEG, m, u, n, p; case-insensitive, MEG
/// checked before m), optional trailing unit letter (V, A, s, F, H).
pub fn parse_number(text: &str) -> Option<f64> {
    let s = text.trim();
    if s.is_empty() {
        return None;
    }
    let bytes = s.as_bytes();
    let mut i = 0;
    if matches!(bytes[i], b'+' | b'-') {
        i += 1;
    }
    let digits_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i == digits_start {
        return None; // no digits at all
    }
    // Exponent only counts when followed by digits; otherwise 'e' would
    // swallow a suffix letter.
    if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
        let mut j = i + 1;
        if j < bytes.len() && matches!(bytes[j], b'+' | b'-') {
            j += 1;
        }
        let exp_digits = j;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_digits {
            i = j;
        }
    }
    let mantissa: f64 = s[..i].parse().ok()?;
    let mut rest = &s[i..];

    let mut scale = 1.0;
    let upper = rest.to_ascii_uppercase();
    if upper.starts_with("MEG") {
        scale = 1e6;
        rest = &rest[3..];
    } else if let Some(first) = upper.chars().next() {
        let s1 = match first {
            'K' => Some(1e3),
            'M' => Some(1e-3),
            'U' => Some(1e-6),
            'N' => Some(1e-9),
            'P' => Some(1e-12),
            _ => None,
        };
        if let Some(sc) = s1 {
            scale = sc;
            rest = &rest[1..];
        }
    }
    // Trailing unit letter is stripped; anything else is junk.
    if !rest.is_empty() {
        let up = rest.to_ascii_uppercase();
        if up.len() == 1 && matches!(up.as_bytes()[0], b'V' | b'A' | b'S' | b'F' | b'H') {
            rest = "";
        }
    }
    if !rest.is_empty() {
        return None;
    }
    Some(mantissa * scale)
}
