//! Line-level tokenizer for the textual IR.

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Local(String),
    Global(String),
    Word(String),
    Int(i128),
    /// `c"..."` string constant, escapes decoded.
    CStr(Vec<u8>),
    Str(String),
    /// `!name` or `!12`
    Meta,
    /// `#0`
    AttrRef,
    Punct(char),
    Ellipsis,
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    /// 1-based column.
    pub col: u32,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '$' | '.' | '_' | '-')
}

/// Tokenizes one line. Everything after an unquoted `;` is a comment.
pub(crate) fn tokenize(line: &str) -> Result<Vec<Token>, (u32, String)> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i as u32 + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == ';' {
            break;
        }
        let tok = match c {
            '%' | '@' => {
                i += 1;
                let name = if i < chars.len() && chars[i] == '"' {
                    let (s, next) = read_quoted(&chars, i).ok_or((col, "unterminated quoted name".to_string()))?;
                    i = next;
                    String::from_utf8_lossy(&s).into_owned()
                } else {
                    let start = i;
                    while i < chars.len() && is_ident_char(chars[i]) {
                        i += 1;
                    }
                    if start == i {
                        return Err((col, format!("empty name after '{c}'")));
                    }
                    chars[start..i].iter().collect()
                };
                if c == '%' {
                    Tok::Local(name)
                } else {
                    Tok::Global(name)
                }
            }
            '!' => {
                i += 1;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                Tok::Meta
            }
            '#' => {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                Tok::AttrRef
            }
            '"' => {
                let (s, next) = read_quoted(&chars, i).ok_or((col, "unterminated string".to_string()))?;
                i = next;
                Tok::Str(String::from_utf8_lossy(&s).into_owned())
            }
            'c' if i + 1 < chars.len() && chars[i + 1] == '"' => {
                let (s, next) = read_quoted(&chars, i + 1).ok_or((col, "unterminated string".to_string()))?;
                i = next;
                Tok::CStr(s)
            }
            '.' if chars[i..].starts_with(&['.', '.', '.']) => {
                i += 3;
                Tok::Ellipsis
            }
            '-' | '0'..='9' => {
                let start = i;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                // labels such as `12:` are handled by the caller
                match text.parse::<i128>() {
                    Ok(v) => Tok::Int(v),
                    Err(_) => return Err((col, format!("bad integer literal '{text}'"))),
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' || c == '.' || c == '$' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '_' | '.' | '$')) {
                    i += 1;
                }
                Tok::Word(chars[start..i].iter().collect())
            }
            '=' | ',' | '(' | ')' | '[' | ']' | '{' | '}' | '<' | '>' | '*' | ':' => {
                i += 1;
                Tok::Punct(c)
            }
            other => return Err((col, format!("unexpected character '{other}'"))),
        };
        out.push(Token { tok, col });
    }
    Ok(out)
}

/// Reads a `"..."` literal starting at `start` (the opening quote), decoding
/// `\xx` hex escapes and `\\`.
fn read_quoted(chars: &[char], start: usize) -> Option<(Vec<u8>, usize)> {
    let mut i = start + 1;
    let mut out = Vec::new();
    while i < chars.len() {
        match chars[i] {
            '"' => return Some((out, i + 1)),
            '\\' => {
                if i + 1 < chars.len() && chars[i + 1] == '\\' {
                    out.push(b'\\');
                    i += 2;
                } else if i + 2 < chars.len() {
                    let hex: String = chars[i + 1..i + 3].iter().collect();
                    out.push(u8::from_str_radix(&hex, 16).ok()?);
                    i += 3;
                } else {
                    return None;
                }
            }
            c => {
                let mut buf = [0u8; 4];
                out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
                i += 1;
            }
        }
    }
    None
}
