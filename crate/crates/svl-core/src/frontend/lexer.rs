//! Lexer for SVL.
//!
//! Specification comment markers `/*@` and `@*/` are trivia: the tokens
//! inside an annotation flow into the main stream and the parser knows which
//! constructs are ghost. Ordinary `//` and `/* ... */` comments are skipped.

use super::ast::Span;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    IntLit(i128),
    StrLit(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    NotEq,
    Assign,
    Plus,
    Minus,
    Star,
    StarStar,
    Slash,
    Not,
    AndAnd,
    OrOr,
    Implies,
    Question,
    Colon,
    Semi,
    Comma,
    Dot,
    /// `\forall*`
    ForallStar,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::IntLit(n) => write!(f, "`{n}`"),
            Tok::StrLit(s) => write!(f, "\"{s}\""),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::Ge => write!(f, "`>=`"),
            Tok::EqEq => write!(f, "`==`"),
            Tok::NotEq => write!(f, "`!=`"),
            Tok::Assign => write!(f, "`=`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Star => write!(f, "`*`"),
            Tok::StarStar => write!(f, "`**`"),
            Tok::Slash => write!(f, "`/`"),
            Tok::Not => write!(f, "`!`"),
            Tok::AndAnd => write!(f, "`&&`"),
            Tok::OrOr => write!(f, "`||`"),
            Tok::Implies => write!(f, "`==>`"),
            Tok::Question => write!(f, "`?`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::ForallStar => write!(f, "`\\forall*`"),
            Tok::Eof => write!(f, "end of file"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("lex error at {span}: {message}")]
pub struct LexError {
    pub message: String,
    pub span: Span,
}

pub fn lex(source: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let span = Span::new(line, col);
        // Trivia.
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' && i + 1 < chars.len() && chars[i + 1] == '/' {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c == '/' && i + 1 < chars.len() && chars[i + 1] == '*' {
            if i + 2 < chars.len() && chars[i + 2] == '@' {
                // Specification opener: drop the marker, keep the contents.
                bump!();
                bump!();
                bump!();
                continue;
            }
            // Ordinary block comment.
            bump!();
            bump!();
            let mut closed = false;
            while i < chars.len() {
                if chars[i] == '*' && i + 1 < chars.len() && chars[i + 1] == '/' {
                    bump!();
                    bump!();
                    closed = true;
                    break;
                }
                bump!();
            }
            if !closed {
                return Err(LexError {
                    message: "unterminated block comment".into(),
                    span,
                });
            }
            continue;
        }
        if c == '@' {
            if i + 2 < chars.len() && chars[i + 1] == '*' && chars[i + 2] == '/' {
                bump!();
                bump!();
                bump!();
                continue;
            }
            return Err(LexError {
                message: "stray `@`".into(),
                span,
            });
        }

        if c.is_ascii_digit() {
            let mut n: i128 = 0;
            while i < chars.len() && chars[i].is_ascii_digit() {
                n = n
                    .checked_mul(10)
                    .and_then(|m| m.checked_add(chars[i] as i128 - '0' as i128))
                    .ok_or_else(|| LexError {
                        message: "integer literal too large".into(),
                        span,
                    })?;
                bump!();
            }
            out.push(Token {
                tok: Tok::IntLit(n),
                span,
            });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                bump!();
            }
            out.push(Token {
                tok: Tok::Ident(s),
                span,
            });
            continue;
        }
        if c == '"' {
            bump!();
            let mut s = String::new();
            while i < chars.len() && chars[i] != '"' {
                if chars[i] == '\n' {
                    return Err(LexError {
                        message: "unterminated string literal".into(),
                        span,
                    });
                }
                s.push(chars[i]);
                bump!();
            }
            if i >= chars.len() {
                return Err(LexError {
                    message: "unterminated string literal".into(),
                    span,
                });
            }
            bump!();
            out.push(Token {
                tok: Tok::StrLit(s),
                span,
            });
            continue;
        }
        if c == '\\' {
            // Only `\forall*` starts with a backslash.
            let rest: String = chars[i..].iter().take(8).collect();
            if rest.starts_with("\\forall*") {
                for _ in 0..8 {
                    bump!();
                }
                out.push(Token {
                    tok: Tok::ForallStar,
                    span,
                });
                continue;
            }
            return Err(LexError {
                message: "unexpected `\\`".into(),
                span,
            });
        }

        let two: String = chars[i..].iter().take(2).collect();
        let three: String = chars[i..].iter().take(3).collect();
        let (tok, width) = match (three.as_str(), two.as_str(), c) {
            ("==>", _, _) => (Tok::Implies, 3),
            (_, "==", _) => (Tok::EqEq, 2),
            (_, "!=", _) => (Tok::NotEq, 2),
            (_, "<=", _) => (Tok::Le, 2),
            (_, ">=", _) => (Tok::Ge, 2),
            (_, "&&", _) => (Tok::AndAnd, 2),
            (_, "||", _) => (Tok::OrOr, 2),
            (_, "**", _) => (Tok::StarStar, 2),
            (_, _, '(') => (Tok::LParen, 1),
            (_, _, ')') => (Tok::RParen, 1),
            (_, _, '{') => (Tok::LBrace, 1),
            (_, _, '}') => (Tok::RBrace, 1),
            (_, _, '<') => (Tok::Lt, 1),
            (_, _, '>') => (Tok::Gt, 1),
            (_, _, '=') => (Tok::Assign, 1),
            (_, _, '+') => (Tok::Plus, 1),
            (_, _, '-') => (Tok::Minus, 1),
            (_, _, '*') => (Tok::Star, 1),
            (_, _, '/') => (Tok::Slash, 1),
            (_, _, '!') => (Tok::Not, 1),
            (_, _, '?') => (Tok::Question, 1),
            (_, _, ':') => (Tok::Colon, 1),
            (_, _, ';') => (Tok::Semi, 1),
            (_, _, ',') => (Tok::Comma, 1),
            (_, _, '.') => (Tok::Dot, 1),
            _ => {
                return Err(LexError {
                    message: format!("unexpected character `{c}`"),
                    span,
                })
            }
        };
        for _ in 0..width {
            bump!();
        }
        out.push(Token { tok, span });
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(line, col),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_markers_are_trivia() {
        let toks = lex("/*@ requires x ** y; @*/ while").unwrap();
        let kinds: Vec<&Tok> = toks.iter().map(|t| &t.tok).collect();
        assert!(matches!(kinds[0], Tok::Ident(s) if s == "requires"));
        assert!(matches!(kinds[2], Tok::StarStar));
        assert!(matches!(kinds[5], Tok::Ident(s) if s == "while"));
    }

    #[test]
    fn comments_skipped_and_positions_tracked() {
        let toks = lex("// line\n/* block */ a").unwrap();
        assert!(matches!(&toks[0].tok, Tok::Ident(s) if s == "a"));
        assert_eq!(toks[0].span, Span::new(2, 13));
    }

    #[test]
    fn operators() {
        let toks = lex("==> == != <= >= && || ** * ?").unwrap();
        let kinds: Vec<&Tok> = toks.iter().map(|t| &t.tok).collect();
        assert_eq!(
            &kinds[..10],
            &[
                &Tok::Implies,
                &Tok::EqEq,
                &Tok::NotEq,
                &Tok::Le,
                &Tok::Ge,
                &Tok::AndAnd,
                &Tok::OrOr,
                &Tok::StarStar,
                &Tok::Star,
                &Tok::Question
            ]
        );
    }
}
