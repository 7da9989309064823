//! Tokenizer for the accepted C++ subset.
//!
//! Whitespace and comments are skipped; preprocessor lines become a single
//! [`TokenKind::Directive`] token so they can be passed through verbatim.

use crate::diag::FrontendError;
use crate::span::{FileId, LineIndex, SourceSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Int,
    Float,
    Str,
    Char,
    Punct,
    Directive,
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: SourceSpan,
}

impl Token {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        self.span.text(source)
    }
}

const PUNCTS: &[&str] = &[
    "<<=", ">>=", "...", "->", "::", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "{", "}", "(", ")", "[", "]", ";", ",", ".",
    ":", "?", "+", "-", "*", "/", "%", "=", "<", ">", "!", "&", "|", "^", "~",
];

pub fn tokenize(source: &str, file: FileId) -> Result<Vec<Token>, FrontendError> {
    Lexer::new(source, file).run()
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    file: FileId,
    index: LineIndex,
    /// True while only whitespace has been seen since the last newline.
    at_line_start: bool,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, file: FileId) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            file,
            index: LineIndex::new(src),
            at_line_start: true,
        }
    }

    fn span(&self, start: usize, end: usize) -> SourceSpan {
        self.index.span(self.file, start, end)
    }

    fn peek(&self, ahead: usize) -> u8 {
        self.bytes.get(self.pos + ahead).copied().unwrap_or(0)
    }

    fn error(&self, start: usize, message: impl Into<String>) -> FrontendError {
        FrontendError::SyntaxError {
            span: self.span(start, (start + 1).min(self.src.len())),
            message: message.into(),
        }
    }

    fn run(mut self) -> Result<Vec<Token>, FrontendError> {
        let mut tokens = Vec::new();
        loop {
            self.skip_trivia()?;
            let start = self.pos;
            if start >= self.bytes.len() {
                tokens.push(Token {
                    kind: TokenKind::Eof,
                    span: self.span(start, start),
                });
                return Ok(tokens);
            }
            let c = self.bytes[start];
            let kind = if c == b'#' && self.at_line_start {
                self.directive();
                TokenKind::Directive
            } else if c.is_ascii_alphabetic() || c == b'_' {
                while self.peek(0).is_ascii_alphanumeric() || self.peek(0) == b'_' {
                    self.pos += 1;
                }
                TokenKind::Ident
            } else if c.is_ascii_digit() || (c == b'.' && self.peek(1).is_ascii_digit()) {
                self.number()
            } else if c == b'"' {
                self.quoted(b'"')?;
                TokenKind::Str
            } else if c == b'\'' {
                self.quoted(b'\'')?;
                TokenKind::Char
            } else if let Some(p) = PUNCTS.iter().find(|p| self.src[start..].starts_with(**p)) {
                self.pos += p.len();
                TokenKind::Punct
            } else {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(self.error(start, format!("unexpected character `{ch}`")));
            };
            self.at_line_start = false;
            tokens.push(Token {
                kind,
                span: self.span(start, self.pos),
            });
        }
    }

    fn skip_trivia(&mut self) -> Result<(), FrontendError> {
        loop {
            match self.peek(0) {
                b'\n' => {
                    self.pos += 1;
                    self.at_line_start = true;
                }
                b' ' | b'\t' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'/' if self.peek(1) == b'/' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b'/' if self.peek(1) == b'*' => {
                    let start = self.pos;
                    match self.src[self.pos + 2..].find("*/") {
                        Some(end) => self.pos += end + 4,
                        None => return Err(self.error(start, "unterminated block comment")),
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn directive(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'\\' if self.peek(1) == b'\n' => self.pos += 2,
                b'\n' => break,
                _ => self.pos += 1,
            }
        }
        if self.pos > 0 && self.bytes[self.pos - 1] == b'\r' {
            self.pos -= 1;
        }
    }

    fn number(&mut self) -> TokenKind {
        let mut float = false;
        if self.peek(0) == b'0' && matches!(self.peek(1), b'x' | b'X') {
            self.pos += 2;
            while self.peek(0).is_ascii_hexdigit() {
                self.pos += 1;
            }
        } else {
            while self.peek(0).is_ascii_digit() {
                self.pos += 1;
            }
            if self.peek(0) == b'.' && self.peek(1) != b'.' {
                float = true;
                self.pos += 1;
                while self.peek(0).is_ascii_digit() {
                    self.pos += 1;
                }
            }
            if matches!(self.peek(0), b'e' | b'E')
                && (self.peek(1).is_ascii_digit()
                    || (matches!(self.peek(1), b'+' | b'-') && self.peek(2).is_ascii_digit()))
            {
                float = true;
                self.pos += 2;
                while self.peek(0).is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        while matches!(self.peek(0), b'u' | b'U' | b'l' | b'L' | b'f' | b'F') {
            if matches!(self.peek(0), b'f' | b'F') {
                float = true;
            }
            self.pos += 1;
        }
        if float {
            TokenKind::Float
        } else {
            TokenKind::Int
        }
    }

    fn quoted(&mut self, quote: u8) -> Result<(), FrontendError> {
        let start = self.pos;
        self.pos += 1;
        loop {
            match self.peek(0) {
                0 | b'\n' => return Err(self.error(start, "unterminated literal")),
                b'\\' => self.pos += 2,
                c if c == quote => {
                    self.pos += 1;
                    return Ok(());
                }
                _ => self.pos += 1,
            }
        }
    }
}

/// Whitespace- and comment-insensitive token texts of `source`, with
/// directive lines split into their own tokens. Used to compare emitted code
/// against reference listings.
pub fn token_stream(source: &str) -> Result<Vec<String>, FrontendError> {
    let mut out = Vec::new();
    for tok in tokenize(source, FileId::default())? {
        match tok.kind {
            TokenKind::Eof => {}
            TokenKind::Directive => {
                let text = tok.text(source);
                out.push("#".to_string());
                let body = text[1..].replace("\\\n", " ");
                out.extend(token_stream(&body)?);
            }
            _ => out.push(tok.text(source).to_string()),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<(TokenKind, String)> {
        tokenize(src, FileId(0))
            .unwrap()
            .into_iter()
            .map(|t| (t.kind, t.text(src).to_string()))
            .collect()
    }

    #[test]
    fn punctuators_use_longest_match() {
        let toks = kinds("a->b::c <<= d++ && e");
        let texts: Vec<_> = toks.iter().map(|t| t.1.as_str()).collect();
        assert_eq!(
            texts,
            ["a", "->", "b", "::", "c", "<<=", "d", "++", "&&", "e", ""]
        );
    }

    #[test]
    fn numbers_and_literals() {
        let toks = kinds("1 2.5 .5 1e3 10L 0x1F 'a' \"s\\\"x\"");
        let k: Vec<_> = toks.iter().map(|t| t.0).collect();
        use TokenKind::*;
        assert_eq!(k, [Int, Float, Float, Float, Int, Int, Char, Str, Eof]);
    }

    #[test]
    fn directive_only_at_line_start() {
        let src = "#include <cstdio>\n  #pragma omp taskwait\nint x;";
        let toks = kinds(src);
        assert_eq!(toks[0], (TokenKind::Directive, "#include <cstdio>".into()));
        assert_eq!(
            toks[1],
            (TokenKind::Directive, "#pragma omp taskwait".into())
        );
        assert_eq!(toks[2].1, "int");
    }

    #[test]
    fn comments_are_skipped() {
        let toks = kinds("a /* b */ c // d\n e");
        let texts: Vec<_> = toks.iter().map(|t| t.1.as_str()).collect();
        assert_eq!(texts, ["a", "c", "e", ""]);
    }

    #[test]
    fn unterminated_comment_is_error() {
        assert!(tokenize("a /* b", FileId(0)).is_err());
    }

    #[test]
    fn token_stream_splits_pragmas() {
        let a = token_stream("#pragma omp task depend(inout: var)\n{ f(var); }").unwrap();
        let b = token_stream("#pragma omp task depend(inout:var)\n{\n    f(var);\n}").unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], "#");
        assert_eq!(a[1], "pragma");
    }
}
