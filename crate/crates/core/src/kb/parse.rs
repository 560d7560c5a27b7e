//! Parser for the KB text format.
//!
//! ```text
//! # comments run to end of line
//! classes 2 names "0" "1"
//! concept conj arity 3 {
//!   facts: [0,0,0] [0,1,0] [1,0,0] [1,1,1]
//! }
//! concept positive arity 3 { dnf: (y0&!y1)|(!y0&y2) }
//! concept negative arity 3 { complement: positive }
//! concept equation5 arity 5 { builtin: hed base=2 }
//! ```

use super::{
    BuiltinKind, Concept, ConceptDef, Formula, KbError, KnowledgeBase, Label, LabelAlphabet,
    LabelSeq,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    Str(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Colon,
    Amp,
    Pipe,
    Bang,
    Eq,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier {s:?}"),
            Tok::Int(n) => format!("integer {n}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Colon => "':'".into(),
            Tok::Amp => "'&'".into(),
            Tok::Pipe => "'|'".into(),
            Tok::Bang => "'!'".into(),
            Tok::Eq => "'='".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, KbError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();

    macro_rules! push {
        ($tok:expr, $line:expr, $col:expr) => {
            out.push(Spanned { tok: $tok, line: $line, col: $col })
        };
    }

    while let Some(&ch) = chars.peek() {
        let (tok_line, tok_col) = (line, col);
        match ch {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '{' | '}' | '[' | ']' | '(' | ')' | ',' | ':' | '&' | '|' | '!' | '=' => {
                chars.next();
                col += 1;
                let tok = match ch {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    ':' => Tok::Colon,
                    '&' => Tok::Amp,
                    '|' => Tok::Pipe,
                    '!' => Tok::Bang,
                    _ => Tok::Eq,
                };
                push!(tok, tok_line, tok_col);
            }
            '"' => {
                chars.next();
                col += 1;
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') => {
                            col += 1;
                            break;
                        }
                        Some('\n') | None => {
                            return Err(KbError::Syntax {
                                line: tok_line,
                                col: tok_col,
                                msg: "unterminated string".into(),
                            });
                        }
                        Some(c) => {
                            s.push(c);
                            col += 1;
                        }
                    }
                }
                push!(Tok::Str(s), tok_line, tok_col);
            }
            c if c.is_ascii_digit() => {
                let mut n: u64 = 0;
                while let Some(&d) = chars.peek() {
                    if let Some(v) = d.to_digit(10) {
                        n = n
                            .checked_mul(10)
                            .and_then(|n| n.checked_add(u64::from(v)))
                            .ok_or_else(|| KbError::Syntax {
                                line: tok_line,
                                col: tok_col,
                                msg: "integer too large".into(),
                            })?;
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push!(Tok::Int(n), tok_line, tok_col);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push!(Tok::Ident(s), tok_line, tok_col);
            }
            c => {
                return Err(KbError::Syntax {
                    line: tok_line,
                    col: tok_col,
                    msg: format!("unexpected character {c:?}"),
                });
            }
        }
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> &Spanned {
        let t = &self.toks[self.pos];
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, msg: impl Into<String>) -> KbError {
        let t = self.peek();
        KbError::Syntax { line: t.line, col: t.col, msg: msg.into() }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), KbError> {
        match &self.peek().tok {
            Tok::Ident(s) if s == kw => {
                self.next();
                Ok(())
            }
            other => {
                let got = other.describe();
                Err(self.error(format!("expected {kw:?}, found {got}")))
            }
        }
    }

    fn expect_int(&mut self, what: &str) -> Result<u64, KbError> {
        match &self.peek().tok {
            Tok::Int(n) => {
                let n = *n;
                self.next();
                Ok(n)
            }
            other => {
                let got = other.describe();
                Err(self.error(format!("expected {what}, found {got}")))
            }
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<String, KbError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            other => {
                let got = other.describe();
                Err(self.error(format!("expected {what}, found {got}")))
            }
        }
    }

    fn expect_tok(&mut self, tok: Tok) -> Result<(), KbError> {
        if self.peek().tok == tok {
            self.next();
            Ok(())
        } else {
            let got = self.peek().tok.describe();
            Err(self.error(format!("expected {}, found {got}", tok.describe())))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if &self.peek().tok == tok {
            self.next();
            true
        } else {
            false
        }
    }

    fn label(&mut self, classes: usize) -> Result<Label, KbError> {
        let value = self.expect_int("label")?;
        if value as usize >= classes {
            return Err(KbError::LabelOutOfRange { label: value, classes });
        }
        Ok(value as Label)
    }

    fn sequence(&mut self, classes: usize) -> Result<LabelSeq, KbError> {
        self.expect_tok(Tok::LBracket)?;
        let mut seq = vec![self.label(classes)?];
        while self.eat(&Tok::Comma) {
            seq.push(self.label(classes)?);
        }
        self.expect_tok(Tok::RBracket)?;
        Ok(seq)
    }

    fn formula(&mut self) -> Result<Formula, KbError> {
        let mut parts = vec![self.conjunction()?];
        while self.eat(&Tok::Pipe) {
            parts.push(self.conjunction()?);
        }
        Ok(Formula::or_of(parts))
    }

    fn conjunction(&mut self) -> Result<Formula, KbError> {
        let mut parts = vec![self.atom()?];
        while self.eat(&Tok::Amp) {
            parts.push(self.atom()?);
        }
        Ok(Formula::and_of(parts))
    }

    fn atom(&mut self) -> Result<Formula, KbError> {
        if self.eat(&Tok::Bang) {
            let var = self.literal_var()?;
            return Ok(Formula::neg_lit(var));
        }
        if self.eat(&Tok::LParen) {
            let inner = self.formula()?;
            self.expect_tok(Tok::RParen)?;
            return Ok(inner);
        }
        let var = self.literal_var()?;
        Ok(Formula::lit(var))
    }

    fn literal_var(&mut self) -> Result<usize, KbError> {
        let (line, col) = (self.peek().line, self.peek().col);
        let name = self.expect_ident("literal")?;
        name.strip_prefix('y')
            .and_then(|digits| digits.parse::<usize>().ok())
            .ok_or(KbError::Syntax {
                line,
                col,
                msg: format!("expected literal like y0 or !y0, found {name:?}"),
            })
    }
}

/// Parses KB text into an ungrounded knowledge base with id `"kb"`.
pub fn parse_kb(text: &str) -> Result<KnowledgeBase, KbError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };

    p.expect_keyword("classes")?;
    let classes = p.expect_int("class count")? as usize;
    let alphabet = if matches!(&p.peek().tok, Tok::Ident(s) if s == "names") {
        p.next();
        let mut names = Vec::new();
        while let Tok::Str(s) = &p.peek().tok {
            names.push(s.clone());
            p.next();
        }
        LabelAlphabet::with_names(classes, names)?
    } else {
        LabelAlphabet::new(classes)?
    };

    let mut concepts = Vec::new();
    while !matches!(p.peek().tok, Tok::Eof) {
        p.expect_keyword("concept")?;
        let id = p.expect_ident("concept id")?;
        p.expect_keyword("arity")?;
        let arity = p.expect_int("arity")? as usize;
        p.expect_tok(Tok::LBrace)?;
        let body_kind = p.expect_ident("concept body")?;
        p.expect_tok(Tok::Colon)?;
        let def = match body_kind.as_str() {
            "facts" => {
                let mut facts = Vec::new();
                while matches!(p.peek().tok, Tok::LBracket) {
                    facts.push(p.sequence(classes)?);
                }
                if facts.is_empty() {
                    return Err(p.error("facts body needs at least one sequence"));
                }
                ConceptDef::Facts(facts)
            }
            "dnf" => ConceptDef::Dnf(p.formula()?),
            "cnf" => ConceptDef::Cnf(p.formula()?),
            "complement" => ConceptDef::Complement(p.expect_ident("concept id")?),
            "builtin" => {
                let name = p.expect_ident("builtin name")?;
                let kind = BuiltinKind::from_name(&name)
                    .ok_or(KbError::UnknownBuiltin { name })?;
                let base = if matches!(&p.peek().tok, Tok::Ident(s) if s == "base") {
                    p.next();
                    p.expect_tok(Tok::Eq)?;
                    Some(p.expect_int("base")? as u32)
                } else {
                    None
                };
                ConceptDef::Builtin { kind, base }
            }
            other => {
                return Err(p.error(format!(
                    "unknown body {other:?} (expected facts, dnf, cnf, complement, or builtin)"
                )));
            }
        };
        p.expect_tok(Tok::RBrace)?;
        concepts.push(Concept { id, arity, def });
    }

    if concepts.is_empty() {
        return Err(p.error("knowledge base declares no concepts"));
    }
    KnowledgeBase::new("kb", alphabet, concepts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_facts_concept() {
        let kb = parse_kb(
            "classes 2\nconcept conj arity 3 { facts: [0,0,0] [0,1,0] [1,0,0] [1,1,1] }",
        )
        .unwrap();
        assert_eq!(kb.concepts().len(), 1);
        let ConceptDef::Facts(facts) = &kb.concepts()[0].def else { panic!("not facts") };
        assert_eq!(facts.len(), 4);
    }

    #[test]
    fn parses_single_position_kb() {
        let kb = parse_kb("classes 2\nconcept all arity 1 { facts: [0] [1] }").unwrap();
        assert_eq!(kb.concepts()[0].arity, 1);
    }

    #[test]
    fn label_out_of_range_reported() {
        let err =
            parse_kb("classes 2\nconcept a arity 3 { facts: [0,2,0] }").unwrap_err();
        assert_eq!(err.to_string(), "label 2 out of range for 2 classes");
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = parse_kb("classes 2\nconcept a arity ] { facts: [0] }").unwrap_err();
        let KbError::Syntax { line, col, .. } = err else { panic!("expected syntax error") };
        assert_eq!((line, col), (2, 17));
    }

    #[test]
    fn parses_formulas_with_precedence() {
        let kb = parse_kb("classes 2\nconcept p arity 3 { dnf: y0&!y1&y2|!y0&y1&!y2 }").unwrap();
        let ConceptDef::Dnf(f) = &kb.concepts()[0].def else { panic!("not dnf") };
        // '&' binds tighter than '|': two clauses.
        let Formula::Or(clauses) = f else { panic!("expected top-level or") };
        assert_eq!(clauses.len(), 2);
        assert!(f.eval(&[1, 0, 1]));
        assert!(f.eval(&[0, 1, 0]));
        assert!(!f.eval(&[1, 1, 1]));
    }

    #[test]
    fn comments_and_names_parse() {
        let kb = parse_kb(
            "# a comment\nclasses 2 names \"0\" \"1\"\nconcept a arity 1 { facts: [1] }",
        )
        .unwrap();
        assert_eq!(kb.alphabet().names().unwrap(), ["0", "1"]);
    }

    #[test]
    fn dangling_complement_rejected() {
        let err =
            parse_kb("classes 2\nconcept n arity 2 { complement: ghost }").unwrap_err();
        assert!(matches!(err, KbError::DanglingComplement { .. }));
    }

    #[test]
    fn unknown_builtin_rejected() {
        let err =
            parse_kb("classes 2\nconcept a arity 2 { builtin: warp base=3 }").unwrap_err();
        assert!(matches!(err, KbError::UnknownBuiltin { .. }));
    }

    #[test]
    fn builtin_with_base_parses_and_grounds() {
        let text = "classes 4 names \"0\" \"1\" \"+\" \"=\"\n\
                    concept equation5 arity 5 { builtin: hed base=2 }";
        let kb = parse_kb(text).unwrap().ground().unwrap();
        assert_eq!(kb.candidate_set("equation5").unwrap().len(), 3);
    }
}
