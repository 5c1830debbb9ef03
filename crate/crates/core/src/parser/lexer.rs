//! Tokenizer that knows whether the final token may still grow.
//!
//! A token is `open` when it touches the end of the input and appending more
//! characters could extend it (`Sca` -> `Scan`, `1.` -> `1.5`, `<` -> `<=`).

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Word,
    Integer(i64),
    Real(f64),
    Str(String),
    Symbol(&'static str),
    /// The input ended in the middle of a token that is not yet lexable
    /// (`-`, `1.`, `1e`, an unterminated string).
    Fragment,
    /// A character or number that can never start or continue a valid token.
    Bad(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
    pub open: bool,
}

pub fn tokenize(src: &str) -> Vec<Token> {
    let bytes = src.as_bytes();
    let len = bytes.len();
    let mut tokens = Vec::new();
    let mut i = 0;
    loop {
        while i < len && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= len {
            tokens.push(Token {
                kind: TokenKind::Eof,
                start: len,
                end: len,
                open: false,
            });
            return tokens;
        }
        let start = i;
        let c = bytes[i];
        let kind = if c.is_ascii_alphabetic() || c == b'_' {
            while i < len && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            TokenKind::Word
        } else if c.is_ascii_digit() || c == b'-' {
            let (kind, end) = lex_number(bytes, i);
            i = end;
            kind
        } else if c == b'\'' {
            let (kind, end) = lex_string(src, i);
            i = end;
            kind
        } else {
            let (sym, width) = match (c, bytes.get(i + 1)) {
                (b'<', Some(b'=')) => ("<=", 2),
                (b'<', Some(b'>')) => ("<>", 2),
                (b'>', Some(b'=')) => (">=", 2),
                (b'<', _) => ("<", 1),
                (b'>', _) => (">", 1),
                (b'=', _) => ("=", 1),
                (b'[', _) => ("[", 1),
                (b']', _) => ("]", 1),
                (b'(', _) => ("(", 1),
                (b')', _) => (")", 1),
                (b',', _) => (",", 1),
                (b':', _) => (":", 1),
                (b'.', _) => (".", 1),
                (b'*', _) => ("*", 1),
                _ => ("", 0),
            };
            if width == 0 {
                // skip the whole UTF-8 character
                i += src[i..].chars().next().map_or(1, char::len_utf8);
                TokenKind::Bad("unexpected character")
            } else {
                i += width;
                TokenKind::Symbol(sym)
            }
        };
        let open = i == len
            && match &kind {
                TokenKind::Word | TokenKind::Integer(_) | TokenKind::Real(_) | TokenKind::Fragment => true,
                // a closed string can continue with an escaped quote
                TokenKind::Str(_) => true,
                TokenKind::Symbol(s) => *s == "<" || *s == ">",
                TokenKind::Bad(_) | TokenKind::Eof => false,
            };
        tokens.push(Token {
            kind,
            start,
            end: i,
            open,
        });
    }
}

fn lex_number(bytes: &[u8], start: usize) -> (TokenKind, usize) {
    let len = bytes.len();
    let mut i = start;
    if bytes[i] == b'-' {
        i += 1;
        if i == len {
            return (TokenKind::Fragment, i);
        }
        if !bytes[i].is_ascii_digit() {
            return (TokenKind::Bad("expected a digit after `-`"), i);
        }
    }
    while i < len && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let mut is_real = false;
    if i < len && bytes[i] == b'.' {
        match bytes.get(i + 1) {
            None => return (TokenKind::Fragment, len),
            Some(d) if d.is_ascii_digit() => {
                is_real = true;
                i += 1;
                while i < len && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            Some(_) => {}
        }
    }
    if i < len && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < len && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j == len {
            return (TokenKind::Fragment, len);
        }
        if bytes[j].is_ascii_digit() {
            is_real = true;
            i = j;
            while i < len && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    let text = std::str::from_utf8(&bytes[start..i]).expect("ascii digits");
    let kind = if is_real {
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => TokenKind::Real(v),
            _ => TokenKind::Bad("real literal out of range"),
        }
    } else {
        match text.parse::<i64>() {
            Ok(v) => TokenKind::Integer(v),
            Err(_) => TokenKind::Bad("integer literal out of range"),
        }
    };
    (kind, i)
}

fn lex_string(src: &str, start: usize) -> (TokenKind, usize) {
    let bytes = src.as_bytes();
    let mut out = String::new();
    let mut i = start + 1;
    let mut seg = i;
    while i < bytes.len() {
        if bytes[i] == b'\'' {
            out.push_str(&src[seg..i]);
            if bytes.get(i + 1) == Some(&b'\'') {
                out.push('\'');
                i += 2;
                seg = i;
                continue;
            }
            return (TokenKind::Str(out), i + 1);
        }
        i += 1;
    }
    (TokenKind::Fragment, bytes.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(s: &str) -> Vec<(TokenKind, bool)> {
        tokenize(s).into_iter().map(|t| (t.kind, t.open)).collect()
    }

    #[test]
    fn words_and_symbols() {
        let toks = tokenize("Into: [a.b]");
        let texts: Vec<_> = toks.iter().map(|t| &"Into: [a.b]"[t.start..t.end]).collect();
        assert_eq!(texts, ["Into", ":", "[", "a", ".", "b", "]", ""]);
    }

    #[test]
    fn open_tokens_at_end() {
        assert_eq!(kinds("Sca")[0], (TokenKind::Word, true));
        assert_eq!(kinds("Scan ")[0], (TokenKind::Word, false));
        assert_eq!(kinds("1.")[0], (TokenKind::Fragment, true));
        assert_eq!(kinds("-")[0], (TokenKind::Fragment, true));
        assert_eq!(kinds("'ab")[0], (TokenKind::Fragment, true));
        assert_eq!(kinds("'ab'")[0], (TokenKind::Str("ab".into()), true));
        assert_eq!(kinds("<")[0], (TokenKind::Symbol("<"), true));
        assert_eq!(kinds("1e")[0], (TokenKind::Fragment, true));
    }

    #[test]
    fn numbers() {
        assert_eq!(kinds("-12 ")[0].0, TokenKind::Integer(-12));
        assert_eq!(kinds("2.5 ")[0].0, TokenKind::Real(2.5));
        assert_eq!(kinds("1e-7 ")[0].0, TokenKind::Real(1e-7));
        assert!(matches!(kinds("99999999999999999999 ")[0].0, TokenKind::Bad(_)));
        // `1.x` is the integer 1 followed by a dot
        assert_eq!(kinds("1.x")[0].0, TokenKind::Integer(1));
    }

    #[test]
    fn string_escapes() {
        assert_eq!(kinds("'it''s' ")[0].0, TokenKind::Str("it's".into()));
    }
}
