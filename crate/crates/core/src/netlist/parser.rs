//! Netlist and expression parser.

use crate::error::ParseError;
use crate::expr::{Expr, Func};

use super::lexer::{logical_lines, parse_number, tokenize, LogicalLine, Tok};
use super::{CardValue, DeviceCard, DeviceKind, Directive, NetlistDocument, SubcktDef};

/// Parse a complete netlist.
///
/// The first non-comment line is the title unless its first word starts with
/// a device letter or '.', in which case there is no title and the line is a
/// card. Parsing is case-insensitive for keywords and unit suffixes.
pub fn parse_netlist(source: &str) -> Result<NetlistDocument, ParseError> {
    let lines = logical_lines(source);
    let mut doc = NetlistDocument::default();
    let mut idx = 0;

    if let Some(first) = lines.first() {
        if !looks_like_card(&first.text) {
            doc.title = first.text.clone();
            idx = 1;
        }
    }

    let mut open_subckt: Option<(usize, SubcktDef)> = None;
    let mut ended = false;

    while idx < lines.len() {
        let line = &lines[idx];
        idx += 1;
        if ended {
            break;
        }
        let toks = tokenize(line)?;
        let Some(Tok::Word(first)) = toks.first() else {
            return Err(ParseError::Syntax {
                line: line.line_no,
                message: "expected a card or directive".into(),
            });
        };

        if let Some(dir) = first.strip_prefix('.') {
            match dir.to_ascii_uppercase().as_str() {
                "SUBCKT" => {
                    if open_subckt.is_some() {
                        return Err(ParseError::Syntax {
                            line: line.line_no,
                            message: "nested .SUBCKT definitions are not supported".into(),
                        });
                    }
                    let def = parse_subckt_header(line, &toks)?;
                    open_subckt = Some((line.line_no, def));
                }
                "ENDS" => match open_subckt.take() {
                    Some((_, def)) => doc.subckt_defs.push(def),
                    None => return Err(ParseError::UnbalancedSubckt { line: line.line_no }),
                },
                "TRAN" => {
                    let d = parse_tran(line, &toks)?;
                    require_top_level(&open_subckt, line)?;
                    doc.directives.push(d);
                }
                "PRINT" => {
                    let d = parse_print(line, &toks)?;
                    require_top_level(&open_subckt, line)?;
                    doc.directives.push(d);
                }
                "PARAM" => {
                    require_top_level(&open_subckt, line)?;
                    doc.directives.extend(parse_param(line, &toks)?);
                }
                "OPTIONS" => {
                    require_top_level(&open_subckt, line)?;
                    doc.directives.push(parse_options(line, &toks)?);
                }
                "END" => {
                    if open_subckt.is_some() {
                        return Err(ParseError::UnbalancedSubckt { line: line.line_no });
                    }
                    ended = true;
                }
                other => {
                    return Err(ParseError::UnknownDirective {
                        line: line.line_no,
                        name: other.to_string(),
                    })
                }
            }
            continue;
        }

        let card = parse_device(line, &toks)?;
        match &mut open_subckt {
            Some((_, def)) => def.body.push(card),
            None => doc.devices.push(card),
        }
    }

    if let Some((line_no, _)) = open_subckt {
        return Err(ParseError::UnbalancedSubckt { line: line_no });
    }
    Ok(doc)
}

fn looks_like_card(text: &str) -> bool {
    let Some(word) = text.split_whitespace().next() else {
        return false;
    };
    if word.starts_with('.') {
        return true;
    }
    let c = word.chars().next().unwrap().to_ascii_uppercase();
    // A known device letter makes this a card attempt; parse errors on it
    // are reported rather than silently demoting the line to a title.
    matches!(c, 'V' | 'B' | 'R' | 'C' | 'L' | 'X')
}

fn require_top_level(
    open: &Option<(usize, SubcktDef)>,
    line: &LogicalLine,
) -> Result<(), ParseError> {
    if open.is_some() {
        return Err(ParseError::Syntax {
            line: line.line_no,
            message: "directive not allowed inside .SUBCKT body".into(),
        });
    }
    Ok(())
}

fn parse_device(line: &LogicalLine, toks: &[Tok]) -> Result<DeviceCard, ParseError> {
    let Tok::Word(name) = &toks[0] else {
        unreachable!()
    };
    let letter = name.chars().next().unwrap().to_ascii_uppercase();
    match letter {
        'R' | 'C' | 'L' | 'V' => {
            let kind = match letter {
                'R' => DeviceKind::Resistor,
                'C' => DeviceKind::Capacitor,
                'L' => DeviceKind::Inductor,
                _ => DeviceKind::VSource,
            };
            if toks.len() != 4 {
                return Err(ParseError::Syntax {
                    line: line.line_no,
                    message: format!("{name}: expected 2 nodes and a value"),
                });
            }
            let a = expect_word(line, &toks[1])?;
            let b = expect_word(line, &toks[2])?;
            let value = parse_card_value(line, &toks[3])?;
            Ok(DeviceCard {
                kind,
                name: name.clone(),
                nodes: vec![a, b],
                value: Some(value),
                subckt: None,
                params: Vec::new(),
            })
        }
        'B' => {
            // B<name> n1 n2 (I|V)={expr}
            if toks.len() != 6 {
                return Err(ParseError::Syntax {
                    line: line.line_no,
                    message: format!("{name}: expected 'n1 n2 I={{expr}}' or 'n1 n2 V={{expr}}'"),
                });
            }
            let a = expect_word(line, &toks[1])?;
            let b = expect_word(line, &toks[2])?;
            let which = expect_word(line, &toks[3])?;
            let kind = match which.to_ascii_uppercase().as_str() {
                "I" => DeviceKind::BSourceI,
                "V" => DeviceKind::BSourceV,
                other => {
                    return Err(ParseError::Syntax {
                        line: line.line_no,
                        message: format!("{name}: expected I= or V=, found {other}="),
                    })
                }
            };
            if !matches!(toks[4], Tok::Equals) {
                return Err(ParseError::Syntax {
                    line: line.line_no,
                    message: format!("{name}: expected '=' after {which}"),
                });
            }
            let Tok::Braced(body) = &toks[5] else {
                return Err(ParseError::Syntax {
                    line: line.line_no,
                    message: format!("{name}: expected {{expression}}"),
                });
            };
            let expr = parse_expr(body, line.line_no)?;
            Ok(DeviceCard {
                kind,
                name: name.clone(),
                nodes: vec![a, b],
                value: Some(CardValue::Expr(expr)),
                subckt: None,
                params: Vec::new(),
            })
        }
        'X' => parse_instance(line, toks, name),
        other => Err(ParseError::UnknownDevice {
            line: line.line_no,
            letter: other,
        }),
    }
}

fn parse_instance(
    line: &LogicalLine,
    toks: &[Tok],
    name: &str,
) -> Result<DeviceCard, ParseError> {
    // X<name> node... subckt [PARAMS: k=v ...]
    let mut words = Vec::new();
    let mut i = 1;
    while i < toks.len() {
        match &toks[i] {
            Tok::Word(w) => words.push(w.clone()),
            Tok::ParamsColon => break,
            _ => {
                return Err(ParseError::Syntax {
                    line: line.line_no,
                    message: format!("{name}: unexpected token in instance line"),
                })
            }
        }
        i += 1;
    }
    if words.len() < 2 {
        return Err(ParseError::Syntax {
            line: line.line_no,
            message: format!("{name}: expected nodes followed by a subcircuit name"),
        });
    }
    let subckt = words.pop().unwrap();
    let mut params = Vec::new();
    if i < toks.len() {
        // at PARAMS:
        i += 1;
        while i < toks.len() {
            let key = expect_word(line, &toks[i])?;
            if i + 2 >= toks.len() || !matches!(toks[i + 1], Tok::Equals) {
                return Err(ParseError::Syntax {
                    line: line.line_no,
                    message: format!("{name}: expected {key}=value in PARAMS list"),
                });
            }
            let value = match &toks[i + 2] {
                Tok::Word(w) => Expr::Num(parse_number(w).ok_or_else(|| {
                    ParseError::InvalidNumber {
                        line: line.line_no,
                        text: w.clone(),
                    }
                })?),
                Tok::Braced(body) => parse_expr(body, line.line_no)?,
                _ => {
                    return Err(ParseError::Syntax {
                        line: line.line_no,
                        message: format!("{name}: expected a value for {key}"),
                    })
                }
            };
            params.push((key, value));
            i += 3;
        }
    }
    Ok(DeviceCard {
        kind: DeviceKind::Instance,
        name: name.to_string(),
        nodes: words,
        value: None,
        subckt: Some(subckt),
        params,
    })
}

fn parse_subckt_header(line: &LogicalLine, toks: &[Tok]) -> Result<SubcktDef, ParseError> {
    // .SUBCKT name port... [PARAMS: k=v ...]
    let mut i = 1;
    let name = match toks.get(i) {
        Some(Tok::Word(w)) => w.clone(),
        _ => {
            return Err(ParseError::Syntax {
                line: line.line_no,
                message: "expected subcircuit name after .SUBCKT".into(),
            })
        }
    };
    i += 1;
    let mut ports = Vec::new();
    while i < toks.len() {
        match &toks[i] {
            Tok::Word(w) => {
                ports.push(w.clone());
                i += 1;
            }
            Tok::ParamsColon => break,
            _ => {
                return Err(ParseError::Syntax {
                    line: line.line_no,
                    message: "unexpected token in .SUBCKT port list".into(),
                })
            }
        }
    }
    for (k, p) in ports.iter().enumerate() {
        if ports[..k].iter().any(|q| q.eq_ignore_ascii_case(p)) {
            return Err(ParseError::Syntax {
                line: line.line_no,
                message: format!("duplicate port name {p} in .SUBCKT {name}"),
            });
        }
    }
    let mut param_defaults = Vec::new();
    if i < toks.len() {
        i += 1; // skip PARAMS:
        while i < toks.len() {
            let key = expect_word(line, &toks[i])?;
            if i + 2 >= toks.len() || !matches!(toks[i + 1], Tok::Equals) {
                return Err(ParseError::Syntax {
                    line: line.line_no,
                    message: format!("expected {key}=value in PARAMS list"),
                });
            }
            let value = match &toks[i + 2] {
                Tok::Word(w) => parse_number(w).ok_or_else(|| ParseError::InvalidNumber {
                    line: line.line_no,
                    text: w.clone(),
                })?,
                _ => {
                    return Err(ParseError::Syntax {
                        line: line.line_no,
                        message: format!("parameter default {key} must be numeric"),
                    })
                }
            };
            param_defaults.push((key, value));
            i += 3;
        }
    }
    Ok(SubcktDef {
        name,
        ports,
        param_defaults,
        body: Vec::new(),
    })
}

fn parse_tran(line: &LogicalLine, toks: &[Tok]) -> Result<Directive, ParseError> {
    if toks.len() != 3 {
        return Err(ParseError::Syntax {
            line: line.line_no,
            message: ".TRAN expects a step and a stop time".into(),
        });
    }
    let step = expect_number(line, &toks[1])?;
    let t_stop = expect_number(line, &toks[2])?;
    Ok(Directive::Tran { step, t_stop })
}

fn parse_print(line: &LogicalLine, toks: &[Tok]) -> Result<Directive, ParseError> {
    let mut vars = Vec::new();
    let mut i = 1;
    // Optional analysis keyword (TRAN/DC) for SPICE compatibility.
    if let Some(Tok::Word(w)) = toks.get(i) {
        if matches!(w.to_ascii_uppercase().as_str(), "TRAN" | "DC") {
            i += 1;
        }
    }
    while i < toks.len() {
        let head = expect_word(line, &toks[i])?;
        if matches!(toks.get(i + 1), Some(Tok::LParen)) {
            let arg = match toks.get(i + 2) {
                Some(Tok::Word(w)) => w.clone(),
                _ => {
                    return Err(ParseError::Syntax {
                        line: line.line_no,
                        message: format!("expected a name inside {head}(...)"),
                    })
                }
            };
            if !matches!(toks.get(i + 3), Some(Tok::RParen)) {
                return Err(ParseError::Syntax {
                    line: line.line_no,
                    message: format!("expected ')' after {head}({arg}"),
                });
            }
            vars.push(format!("{head}({arg})"));
            i += 4;
        } else {
            vars.push(head);
            i += 1;
        }
    }
    if vars.is_empty() {
        return Err(ParseError::Syntax {
            line: line.line_no,
            message: ".PRINT expects at least one variable".into(),
        });
    }
    Ok(Directive::Print { vars })
}

fn parse_param(line: &LogicalLine, toks: &[Tok]) -> Result<Vec<Directive>, ParseError> {
    let mut out = Vec::new();
    let mut i = 1;
    while i < toks.len() {
        let name = expect_word(line, &toks[i])?;
        if i + 2 >= toks.len() || !matches!(toks[i + 1], Tok::Equals) {
            return Err(ParseError::Syntax {
                line: line.line_no,
                message: format!(".PARAM expects {name}=value"),
            });
        }
        let value = match &toks[i + 2] {
            Tok::Word(w) => Expr::Num(parse_number(w).ok_or_else(|| {
                ParseError::InvalidNumber {
                    line: line.line_no,
                    text: w.clone(),
                }
            })?),
            Tok::Braced(body) => parse_expr(body, line.line_no)?,
            _ => {
                return Err(ParseError::Syntax {
                    line: line.line_no,
                    message: format!(".PARAM expects a value for {name}"),
                })
            }
        };
        out.push(Directive::Param { name, value });
        i += 3;
    }
    if out.is_empty() {
        return Err(ParseError::Syntax {
            line: line.line_no,
            message: ".PARAM expects at least one name=value pair".into(),
        });
    }
    Ok(out)
}

fn parse_options(line: &LogicalLine, toks: &[Tok]) -> Result<Directive, ParseError> {
    let mut entries = Vec::new();
    let mut i = 1;
    while i < toks.len() {
        let key = expect_word(line, &toks[i])?;
        if i + 2 >= toks.len() || !matches!(toks[i + 1], Tok::Equals) {
            return Err(ParseError::Syntax {
                line: line.line_no,
                message: format!(".OPTIONS expects {key}=value"),
            });
        }
        let value = expect_number(line, &toks[i + 2])?;
        entries.push((key, value));
        i += 3;
    }
    Ok(Directive::Options { entries })
}

fn parse_card_value(line: &LogicalLine, tok: &Tok) -> Result<CardValue, ParseError> {
    match tok {
        Tok::Word(w) => Ok(CardValue::Num(parse_number(w).ok_or_else(|| {
            ParseError::InvalidNumber {
                line: line.line_no,
                text: w.clone(),
            }
        })?)),
        Tok::Braced(body) => Ok(CardValue::Expr(parse_expr(body, line.line_no)?)),
        _ => Err(ParseError::Syntax {
            line: line.line_no,
            message: "expected a value".into(),
        }),
    }
}

fn expect_word(line: &LogicalLine, tok: &Tok) -> Result<String, ParseError> {
    match tok {
        Tok::Word(w) => Ok(w.clone()),
        other => Err(ParseError::Syntax {
            line: line.line_no,
            message: format!("expected a name, found {other:?}"),
        }),
    }
}

fn expect_number(line: &LogicalLine, tok: &Tok) -> Result<f64, ParseError> {
    let w = expect_word(line, tok)?;
    parse_number(&w).ok_or(ParseError::InvalidNumber {
        line: line.line_no,
        text: w,
    })
}

// ---------------------------------------------------------------------------
// Expression parsing (the text inside {...})
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum ETok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
}

fn lex_expr(body: &str, line: usize) -> Result<Vec<ETok>, ParseError> {
    let chars: Vec<char> = body.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                toks.push(ETok::Plus);
                i += 1;
            }
            '-' => {
                toks.push(ETok::Minus);
                i += 1;
            }
            '*' => {
                toks.push(ETok::Star);
                i += 1;
            }
            '/' => {
                toks.push(ETok::Slash);
                i += 1;
            }
            '(' => {
                toks.push(ETok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(ETok::RParen);
                i += 1;
            }
            ',' => {
                toks.push(ETok::Comma);
                i += 1;
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // exponent
                if i < chars.len() && matches!(chars[i], 'e' | 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && matches!(chars[j], '+' | '-') {
                        j += 1;
                    }
                    let d0 = j;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    if j > d0 {
                        i = j;
                    }
                }
                let mantissa: String = chars[start..i].iter().collect();
                let mut value: f64 =
                    mantissa
                        .parse()
                        .map_err(|_| ParseError::InvalidNumber {
                            line,
                            text: mantissa.clone(),
                        })?;
                // Optional SI scale suffix; unit letters are not allowed
                // inside expressions (V/I are reference functions here).
                let alpha_start = i;
                while i < chars.len() && chars[i].is_ascii_alphabetic() {
                    i += 1;
                }
                let run: String = chars[alpha_start..i].iter().collect();
                if !run.is_empty() {
                    let scale = match run.to_ascii_uppercase().as_str() {
                        "MEG" => Some(1e6),
                        "K" => Some(1e3),
                        "M" => Some(1e-3),
                        "U" => Some(1e-6),
                        "N" => Some(1e-9),
                        "P" => Some(1e-12),
                        _ => None,
                    };
                    match scale {
                        Some(s) => value *= s,
                        None => {
                            return Err(ParseError::InvalidNumber {
                                line,
                                text: format!("{mantissa}{run}"),
                            })
                        }
                    }
                }
                toks.push(ETok::Num(value));
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '_' | '.'))
                {
                    i += 1;
                }
                toks.push(ETok::Ident(chars[start..i].iter().collect()));
            }
            other => {
                return Err(ParseError::Syntax {
                    line,
                    message: format!("unexpected character '{other}' in expression"),
                })
            }
        }
    }
    Ok(toks)
}

struct ExprParser<'a> {
    toks: &'a [ETok],
    pos: usize,
    line: usize,
}

/// Parse the body of a `{...}` expression.
pub fn parse_expr(body: &str, line: usize) -> Result<Expr, ParseError> {
    let toks = lex_expr(body, line)?;
    let mut p = ExprParser {
        toks: &toks,
        pos: 0,
        line,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(ParseError::Syntax {
            line,
            message: format!("trailing tokens in expression '{body}'"),
        });
    }
    Ok(e)
}

impl<'a> ExprParser<'a> {
    fn peek(&self) -> Option<&ETok> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<&ETok> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: ETok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn err(&self, message: String) -> ParseError {
        ParseError::Syntax {
            line: self.line,
            message,
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(ETok::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(ETok::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(ETok::Star) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(ETok::Slash) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(ETok::Minus) => {
                self.pos += 1;
                // Fold negated literals so "-1" round-trips as Num(-1).
                match self.unary()? {
                    Expr::Num(v) => Ok(Expr::Num(-v)),
                    other => Ok(Expr::Neg(Box::new(other))),
                }
            }
            Some(ETok::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.bump().cloned() {
            Some(ETok::Num(v)) => Ok(Expr::Num(v)),
            Some(ETok::LParen) => {
                let e = self.expr()?;
                self.expect(ETok::RParen, "')'")?;
                Ok(e)
            }
            Some(ETok::Ident(name)) => {
                let upper = name.to_ascii_uppercase();
                if upper == "PI" {
                    return Ok(Expr::Pi);
                }
                if self.peek() == Some(&ETok::LParen) {
                    self.pos += 1;
                    match upper.as_str() {
                        "V" => {
                            let node = self.ref_arg("V")?;
                            self.expect(ETok::RParen, "')'")?;
                            Ok(Expr::Voltage(node))
                        }
                        "I" => {
                            let dev = self.ref_arg("I")?;
                            self.expect(ETok::RParen, "')'")?;
                            Ok(Expr::Current(dev))
                        }
                        "LIMIT" => {
                            let x = self.expr()?;
                            self.expect(ETok::Comma, "','")?;
                            let lo = self.expr()?;
                            self.expect(ETok::Comma, "','")?;
                            let hi = self.expr()?;
                            self.expect(ETok::RParen, "')'")?;
                            Ok(Expr::limit(x, lo, hi))
                        }
                        _ => match Func::from_name(&upper) {
                            Some(f) => {
                                let arg = self.expr()?;
                                self.expect(ETok::RParen, "')'")?;
                                Ok(Expr::Call(f, Box::new(arg)))
                            }
                            None => Err(self.err(format!("unknown function {name}"))),
                        },
                    }
                } else {
                    Ok(Expr::Param(name.to_ascii_uppercase()))
                }
            }
            other => Err(self.err(format!("unexpected token {other:?} in expression"))),
        }
    }

    /// Argument of V(...) / I(...) — a bare node or device name, which may
    /// also look like a number (node "2").
    fn ref_arg(&mut self, what: &str) -> Result<String, ParseError> {
        match self.bump().cloned() {
            Some(ETok::Ident(n)) => Ok(n),
            Some(ETok::Num(v)) => {
                // Re-render integer-valued node numbers exactly.
                if v.fract() == 0.0 && v.abs() < 1e15 {
                    Ok(format!("{}", v as i64))
                } else {
                    Ok(format!("{v}"))
                }
            }
            _ => Err(self.err(format!("expected a name inside {what}(...)"))),
        }
    }
}
