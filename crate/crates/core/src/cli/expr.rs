//! Density expressions, e.g. `abs_sin(center=0, alpha=2) * pollaczek(a=1)`.
//! The grammar is in `docs/grammar.md`.

use std::f64::consts::PI;
use std::fmt;

use crate::spectra::{AlgebraicPolynomial, PollaczekParams, SpectralDensity, TrigPolynomial};

/// Byte offset (0-based) into the source and a message.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

impl ParseError {
    /// The source with a caret under the offending column.
    pub fn annotate(&self, src: &str) -> String {
        let col = src[..self.pos.min(src.len())].chars().count();
        format!("{self}\n  {src}\n  {}^", " ".repeat(col))
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at column {}: {}", self.pos + 1, self.msg)
    }
}

impl std::error::Error for ParseError {}

type PResult<T> = std::result::Result<T, ParseError>;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Eq,
    Star,
    Slash,
    Minus,
    Plus,
    End,
}

fn lex(src: &str) -> PResult<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '=' => Some(Tok::Eq),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '-' => Some(Tok::Minus),
            '+' => Some(Tok::Plus),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, start));
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ParseError {
                pos: start,
                msg: format!("malformed number {text:?}"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else {
            return Err(ParseError {
                pos: start,
                msg: format!("unexpected character {c:?}"),
            });
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

enum Value {
    Num(f64),
    List(Vec<f64>),
    Density(SpectralDensity),
}

struct Arg {
    name: Option<String>,
    value: Value,
    pos: usize,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.i + 1).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> usize {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn fail<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(ParseError {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn expect(&mut self, t: Tok, what: &str) -> PResult<()> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.fail(format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> PResult<SpectralDensity> {
        let mut acc = self.call()?;
        while *self.peek() == Tok::Star {
            let at = self.pos();
            self.bump();
            let rhs = self.call()?;
            acc = SpectralDensity::product(&acc, &rhs).map_err(|e| ParseError {
                pos: at,
                msg: e.to_string(),
            })?;
        }
        Ok(acc)
    }

    fn call(&mut self) -> PResult<SpectralDensity> {
        let at = self.pos();
        let name = match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                s
            }
            _ => return self.fail("expected a density name"),
        };
        self.expect(Tok::LParen, "'(' after density name")?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.arg()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "',' or ')'")?;
        build(&name, args, at)
    }

    fn arg(&mut self) -> PResult<Arg> {
        let pos = self.pos();
        let name = match (self.peek().clone(), self.peek2()) {
            (Tok::Ident(s), Tok::Eq) => {
                self.bump();
                self.bump();
                Some(s)
            }
            _ => None,
        };
        let value = match (self.peek(), self.peek2()) {
            (Tok::LBracket, _) => Value::List(self.list()?),
            (Tok::Ident(s), Tok::LParen) if s != "pi" => Value::Density(self.expr()?),
            _ => Value::Num(self.number()?),
        };
        Ok(Arg { name, value, pos })
    }

    fn list(&mut self) -> PResult<Vec<f64>> {
        self.expect(Tok::LBracket, "'['")?;
        let mut out = Vec::new();
        if *self.peek() != Tok::RBracket {
            loop {
                out.push(self.number()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RBracket, "',' or ']'")?;
        Ok(out)
    }

    /// `term (('+'|'-') term)*` over numbers, `pi` and parentheses.
    fn number(&mut self) -> PResult<f64> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc += self.term()?;
                }
                Tok::Minus => {
                    self.bump();
                    acc -= self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> PResult<f64> {
        let mut acc = self.atom()?;
        loop {
            match (self.peek(), self.peek2()) {
                (Tok::Star, Tok::Num(_)) | (Tok::Star, Tok::Minus) | (Tok::Star, Tok::LParen) => {
                    self.bump();
                    acc *= self.atom()?;
                }
                (Tok::Star, Tok::Ident(s)) if s == "pi" => {
                    self.bump();
                    acc *= self.atom()?;
                }
                (Tok::Slash, _) => {
                    self.bump();
                    acc /= self.atom()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn atom(&mut self) -> PResult<f64> {
        match self.peek().clone() {
            Tok::Minus => {
                self.bump();
                Ok(-self.atom()?)
            }
            Tok::Num(v) => {
                self.bump();
                Ok(v)
            }
            Tok::Ident(s) if s == "pi" => {
                self.bump();
                Ok(PI)
            }
            Tok::LParen => {
                self.bump();
                let v = self.number()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(v)
            }
            _ => self.fail("expected a number"),
        }
    }
}

struct Args {
    fname: String,
    at: usize,
    slots: Vec<Option<(Value, usize)>>,
    names: &'static [&'static str],
}

impl Args {
    fn bind(
        fname: &str,
        at: usize,
        names: &'static [&'static str],
        given: Vec<Arg>,
    ) -> PResult<Args> {
        let mut slots: Vec<Option<(Value, usize)>> = names.iter().map(|_| None).collect();
        let mut next = 0;
        let mut named_seen = false;
        for a in given {
            let idx = match &a.name {
                Some(n) => {
                    named_seen = true;
                    names
                        .iter()
                        .position(|m| m == n)
                        .ok_or_else(|| ParseError {
                            pos: a.pos,
                            msg: format!(
                                "{fname} has no parameter {n:?} (expected one of {names:?})"
                            ),
                        })?
                }
                None => {
                    if named_seen {
                        return Err(ParseError {
                            pos: a.pos,
                            msg: "positional argument after a named one".into(),
                        });
                    }
                    next += 1;
                    next - 1
                }
            };
            if idx >= names.len() {
                return Err(ParseError {
                    pos: a.pos,
                    msg: format!("{fname} takes {} argument(s)", names.len()),
                });
            }
            if slots[idx].is_some() {
                return Err(ParseError {
                    pos: a.pos,
                    msg: format!("parameter {:?} given twice", names[idx]),
                });
            }
            slots[idx] = Some((a.value, a.pos));
        }
        Ok(Args {
            fname: fname.to_string(),
            at,
            slots,
            names,
        })
    }

    fn take(&mut self, i: usize) -> PResult<(Value, usize)> {
        self.slots[i].take().ok_or_else(|| ParseError {
            pos: self.at,
            msg: format!("{} needs parameter {:?}", self.fname, self.names[i]),
        })
    }

    fn num(&mut self, i: usize) -> PResult<f64> {
        match self.take(i)? {
            (Value::Num(v), _) => Ok(v),
            (_, pos) => Err(ParseError {
                pos,
                msg: format!("parameter {:?} must be a number", self.names[i]),
            }),
        }
    }

    fn num_or(&mut self, i: usize, default: f64) -> PResult<f64> {
        if self.slots[i].is_none() {
            Ok(default)
        } else {
            self.num(i)
        }
    }

    fn list(&mut self, i: usize) -> PResult<Vec<f64>> {
        match self.take(i)? {
            (Value::List(v), _) => Ok(v),
            (_, pos) => Err(ParseError {
                pos,
                msg: format!("parameter {:?} must be a list [..]", self.names[i]),
            }),
        }
    }

    fn list_or_empty(&mut self, i: usize) -> PResult<Vec<f64>> {
        if self.slots[i].is_none() {
            Ok(Vec::new())
        } else {
            self.list(i)
        }
    }

    fn density(&mut self, i: usize) -> PResult<SpectralDensity> {
        match self.take(i)? {
            (Value::Density(d), _) => Ok(d),
            (_, pos) => Err(ParseError {
                pos,
                msg: format!("parameter {:?} must be a density expression", self.names[i]),
            }),
        }
    }
}

fn build(name: &str, given: Vec<Arg>, at: usize) -> PResult<SpectralDensity> {
    let names: &'static [&'static str] = match name {
        "pollaczek" | "hat" | "hat1" | "hat2" => &["a"],
        "const" => &["c"],
        "white_noise" => &[],
        "ma1" => &["theta"],
        "ar1" => &["phi"],
        "abs_sin" => &["center", "alpha"],
        "abs_poly" => &["coeffs", "alpha"],
        "trig_pow" => &["cos", "sin", "alpha"],
        "shift" => &["f", "lambda0"],
        "pow" => &["f", "alpha"],
        "scale" => &["f", "c"],
        "ratio" => &["num", "den"],
        _ => {
            return Err(ParseError {
                pos: at,
                msg: format!("unknown density {name:?}"),
            })
        }
    };
    let mut a = Args::bind(name, at, names, given)?;
    let built = match name {
        "pollaczek" => PollaczekParams::new(a.num(0)?).map(SpectralDensity::pollaczek),
        "hat" => SpectralDensity::companion_hat(a.num(0)?),
        "hat1" => SpectralDensity::companion_hat1(a.num(0)?),
        "hat2" => SpectralDensity::companion_hat2(a.num(0)?),
        "const" => SpectralDensity::constant(a.num(0)?),
        "white_noise" => Ok(SpectralDensity::white_noise()),
        "ma1" => SpectralDensity::ma1(a.num(0)?),
        "ar1" => SpectralDensity::ar1(a.num(0)?),
        "abs_sin" => {
            let center = a.num_or(0, 0.0)?;
            let alpha = a.num(1)?;
            SpectralDensity::abs_sin(center, alpha)
        }
        "abs_poly" => {
            let q = a.list(0)?;
            let alpha = a.num(1)?;
            AlgebraicPolynomial::new(q).and_then(|q| SpectralDensity::algebraic_power(q, alpha))
        }
        "trig_pow" => {
            let cos = a.list(0)?;
            let sin = a.list_or_empty(1)?;
            let alpha = a.num(2)?;
            TrigPolynomial::new(cos, sin)
                .and_then(|t| {
                    if alpha < 0.0 {
                        t.certify_nonnegative()
                    } else {
                        Ok(t)
                    }
                })
                .and_then(|t| SpectralDensity::trig_power(t, alpha))
        }
        "shift" => {
            let f = a.density(0)?;
            SpectralDensity::shift(&f, a.num(1)?)
        }
        "pow" => {
            let f = a.density(0)?;
            SpectralDensity::power(&f, a.num(1)?)
        }
        "scale" => {
            let f = a.density(0)?;
            SpectralDensity::scale(&f, a.num(1)?)
        }
        "ratio" => {
            let num = a.density(0)?;
            let den = a.density(1)?;
            SpectralDensity::quotient(&num, &den)
        }
        _ => unreachable!(),
    };
    built.map_err(|e| ParseError {
        pos: at,
        msg: e.to_string(),
    })
}

/// Parses a full density expression.
pub fn parse_density(src: &str) -> PResult<SpectralDensity> {
    let mut p = Parser {
        toks: lex(src)?,
        i: 0,
    };
    let d = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail("unexpected trailing input");
    }
    Ok(d)
}
