//! Tokenizer and recursive-descent parser for the Xapi pidgin language.
//!
//! A Xapi sentence is a line (or several) of slash-separated parts ending in
//! `.` or `?`. Quotation sentences nest behind `//` to arbitrary depth:
//!
//! ```text
//! The girl / hits / the wolf.
//! "LRRH" / says in "conversation" // eyes --of-- you / is-a / big.
//! ```
//!
//! Parsing is pure: no engine state is consulted, identical input yields an
//! identical AST.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    Word(String),
    /// Double-quoted proper noun or scene name.
    Quoted(String),
    Slash,
    SlashSlash,
    /// `--word--` relation infix, whitespace-tolerant.
    Rel(String),
    Period,
    Question,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Word(w) => write!(f, "{w}"),
            Token::Quoted(q) => write!(f, "\"{q}\""),
            Token::Slash => write!(f, "/"),
            Token::SlashSlash => write!(f, "//"),
            Token::Rel(w) => write!(f, "--{w}--"),
            Token::Period => write!(f, "."),
            Token::Question => write!(f, "?"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: unterminated quote")]
    UnterminatedQuote { line: usize },
    #[error("line {line}: stray character `{ch}`")]
    StrayCharacter { line: usize, ch: char },
    #[error("line {line}: malformed relation infix")]
    MalformedRel { line: usize },
    #[error("line {line}: {msg}")]
    Sentence { line: usize, msg: String },
    #[error("line {line}: sentence is missing its `.` or `?` terminator")]
    MissingTerminator { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Article {
    Indefinite,
    Definite,
    None,
}

/// A noun phrase: article, attribute words, optional proper noun, optional
/// relation infix and optional cross-scene reference.
#[derive(Debug, Clone, PartialEq)]
pub struct PartAst {
    pub article: Article,
    pub words: Vec<String>,
    pub proper_noun: Option<String>,
    pub rel: Option<(String, Box<PartAst>)>,
    pub scene_ref: Option<String>,
    pub wh: bool,
}

impl PartAst {
    fn empty() -> Self {
        PartAst {
            article: Article::None,
            words: Vec::new(),
            proper_noun: None,
            rel: None,
            scene_ref: None,
            wh: false,
        }
    }

    fn is_blank(&self) -> bool {
        self.words.is_empty() && self.proper_noun.is_none() && !self.wh && self.rel.is_none()
    }

    /// True when the part (or its relation tail) carries the `wh` marker.
    pub fn has_wh(&self) -> bool {
        self.wh || self.rel.as_ref().is_some_and(|(_, r)| r.has_wh())
    }
}

/// The verb phrase: verb word plus trailing adverbs, the inquit scene adjunct
/// and the wh marker for `wh is-a` style questions.
#[derive(Debug, Clone, PartialEq)]
pub struct VerbAst {
    pub words: Vec<String>,
    pub communicative: bool,
    pub scene_ref: Option<String>,
    pub wh: bool,
}

impl VerbAst {
    pub fn head(&self) -> &str {
        &self.words[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SentenceKind {
    Action,
    Question,
    Quote,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceAst {
    pub kind: SentenceKind,
    pub subject: PartAst,
    pub verb: VerbAst,
    pub object: Option<PartAst>,
    pub quoted: Option<Box<SentenceAst>>,
    /// 1-based source line of the first token.
    pub line: usize,
}

const COMMUNICATIVE: &[&str] = &[
    "says", "say", "asks", "ask", "thinks", "think", "writes", "write", "implies", "imply",
    "reads", "read",
];

pub fn is_communicative(word: &str) -> bool {
    COMMUNICATIVE.contains(&word)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '_'
}

/// Tokenize one line of Xapi text. `#` starts a comment outside quotes.
pub fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '#' {
            break;
        } else if c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some(ch) => s.push(ch),
                    None => return Err(ParseError::UnterminatedQuote { line: line_no }),
                }
            }
            tokens.push(Token::Quoted(s));
        } else if c == '/' {
            chars.next();
            if chars.peek() == Some(&'/') {
                chars.next();
                tokens.push(Token::SlashSlash);
            } else {
                tokens.push(Token::Slash);
            }
        } else if c == '.' {
            chars.next();
            tokens.push(Token::Period);
        } else if c == '?' {
            chars.next();
            tokens.push(Token::Question);
        } else if c == '-' {
            // `--word--`, whitespace-tolerant: `-- word --`
            chars.next();
            if chars.next() != Some('-') {
                return Err(ParseError::MalformedRel { line: line_no });
            }
            while chars.peek().is_some_and(|c| c.is_whitespace()) {
                chars.next();
            }
            let mut word = String::new();
            while let Some(&ch) = chars.peek() {
                if is_word_char(ch) {
                    word.push(ch);
                    chars.next();
                } else if ch == '-' {
                    // single dash inside the relation word (`parent-of`)
                    let mut look = chars.clone();
                    look.next();
                    if look.peek() == Some(&'-') {
                        break;
                    }
                    word.push('-');
                    chars.next();
                } else {
                    break;
                }
            }
            if word.is_empty() {
                return Err(ParseError::MalformedRel { line: line_no });
            }
            while chars.peek().is_some_and(|c| c.is_whitespace()) {
                chars.next();
            }
            if chars.next() != Some('-') || chars.next() != Some('-') {
                return Err(ParseError::MalformedRel { line: line_no });
            }
            tokens.push(Token::Rel(word.to_lowercase()));
        } else if is_word_char(c) {
            let mut word = String::new();
            while let Some(&ch) = chars.peek() {
                if is_word_char(ch) {
                    word.push(ch);
                    chars.next();
                } else if ch == '-' {
                    let mut look = chars.clone();
                    look.next();
                    if look.peek() == Some(&'-') {
                        break;
                    }
                    word.push('-');
                    chars.next();
                } else {
                    break;
                }
            }
            tokens.push(Token::Word(word.to_lowercase()));
        } else {
            return Err(ParseError::StrayCharacter { line: line_no, ch: c });
        }
    }
    Ok(tokens)
}

struct Cursor<'a> {
    tokens: &'a [(Token, usize)],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn peek2(&self) -> Option<&Token> {
        self.tokens.get(self.pos + 1).map(|(t, _)| t)
    }

    fn next(&mut self) -> Option<&Token> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn line(&self) -> usize {
        self.tokens
            .get(self.pos.min(self.tokens.len().saturating_sub(1)))
            .map(|(_, l)| *l)
            .unwrap_or(0)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Sentence { line: self.line(), msg: msg.into() }
    }
}

fn at_part_boundary(t: Option<&Token>) -> bool {
    matches!(
        t,
        None | Some(Token::Slash) | Some(Token::SlashSlash) | Some(Token::Period)
            | Some(Token::Question)
    )
}

fn parse_part(cur: &mut Cursor) -> Result<PartAst, ParseError> {
    let mut part = PartAst::empty();
    let mut first = true;
    loop {
        match cur.peek() {
            Some(Token::Word(w)) if first && (w == "a" || w == "an") => {
                part.article = Article::Indefinite;
                cur.next();
            }
            Some(Token::Word(w)) if first && w == "the" => {
                part.article = Article::Definite;
                cur.next();
            }
            Some(Token::Word(w)) if w == "in" && matches!(cur.peek2(), Some(Token::Quoted(_))) => {
                cur.next();
                let Some(Token::Quoted(s)) = cur.next() else { unreachable!() };
                if part.scene_ref.is_some() {
                    return Err(cur.err("more than one scene reference in a part"));
                }
                part.scene_ref = Some(s.clone());
            }
            Some(Token::Word(w)) if w == "wh" => {
                part.wh = true;
                cur.next();
            }
            Some(Token::Word(w)) => {
                part.words.push(w.clone());
                cur.next();
            }
            Some(Token::Quoted(q)) => {
                if part.proper_noun.is_some() {
                    return Err(cur.err("more than one proper noun in a part"));
                }
                part.proper_noun = Some(q.clone());
                cur.next();
            }
            Some(Token::Rel(_)) => {
                if part.is_blank() {
                    return Err(cur.err("relation infix with an empty left side"));
                }
                let Some(Token::Rel(rel)) = cur.next().cloned() else { unreachable!() };
                let right = parse_part(cur)?;
                if right.is_blank() {
                    return Err(cur.err("relation infix with an empty right side"));
                }
                // `--in-- "scene"` is the cross-scene spelling of `in "scene"`
                if rel == "in" && right.words.is_empty() && right.proper_noun.is_some() {
                    if part.scene_ref.is_some() {
                        return Err(cur.err("more than one scene reference in a part"));
                    }
                    part.scene_ref = right.proper_noun.clone();
                } else {
                    if part.rel.is_some() {
                        return Err(cur.err("more than one relation infix in a part"));
                    }
                    part.rel = Some((rel, Box::new(right)));
                }
                return Ok(part);
            }
            _ => break,
        }
        first = false;
    }
    if part.is_blank() {
        return Err(cur.err("empty sentence part"));
    }
    Ok(part)
}

fn parse_verb(cur: &mut Cursor) -> Result<VerbAst, ParseError> {
    let mut verb = VerbAst { words: Vec::new(), communicative: false, scene_ref: None, wh: false };
    loop {
        match cur.peek() {
            Some(Token::Word(w)) if w == "wh" => {
                verb.wh = true;
                cur.next();
            }
            Some(Token::Word(w)) if w == "in" && matches!(cur.peek2(), Some(Token::Quoted(_))) => {
                cur.next();
                let Some(Token::Quoted(s)) = cur.next() else { unreachable!() };
                verb.scene_ref = Some(s.clone());
            }
            Some(Token::Word(w)) => {
                verb.words.push(w.clone());
                cur.next();
            }
            t if at_part_boundary(t) => break,
            _ => return Err(cur.err("unexpected token in verb part")),
        }
    }
    if verb.words.is_empty() {
        return Err(cur.err("missing verb part"));
    }
    verb.communicative = is_communicative(&verb.words[0]);
    Ok(verb)
}

fn parse_sentence_at(cur: &mut Cursor) -> Result<SentenceAst, ParseError> {
    let line = cur.line();
    let subject = parse_part(cur)?;
    if !matches!(cur.next(), Some(Token::Slash)) {
        return Err(ParseError::Sentence { line, msg: "expected `/` after the subject".into() });
    }
    let verb = parse_verb(cur)?;
    match cur.next().cloned() {
        Some(Token::Period) => {
            let kind = if subject.has_wh() || verb.wh {
                SentenceKind::Question
            } else {
                SentenceKind::Action
            };
            Ok(SentenceAst { kind, subject, verb, object: None, quoted: None, line })
        }
        Some(Token::Question) => Ok(SentenceAst {
            kind: SentenceKind::Question,
            subject,
            verb,
            object: None,
            quoted: None,
            line,
        }),
        Some(Token::Slash) => {
            let object = parse_part(cur)?;
            match cur.next() {
                Some(Token::Period) => {
                    let kind = if subject.has_wh() || object.has_wh() || verb.wh {
                        SentenceKind::Question
                    } else {
                        SentenceKind::Action
                    };
                    Ok(SentenceAst { kind, subject, verb, object: Some(object), quoted: None, line })
                }
                Some(Token::Question) => Ok(SentenceAst {
                    kind: SentenceKind::Question,
                    subject,
                    verb,
                    object: Some(object),
                    quoted: None,
                    line,
                }),
                Some(Token::Slash) => Err(ParseError::Sentence {
                    line,
                    msg: "too many sentence parts (at most subject / verb / object)".into(),
                }),
                _ => Err(ParseError::MissingTerminator { line }),
            }
        }
        Some(Token::SlashSlash) => {
            if !verb.communicative {
                return Err(ParseError::Sentence {
                    line,
                    msg: format!("`//` after non-communicative verb `{}`", verb.head()),
                });
            }
            let quoted = parse_sentence_at(cur)?;
            Ok(SentenceAst {
                kind: SentenceKind::Quote,
                subject,
                verb,
                object: None,
                quoted: Some(Box::new(quoted)),
                line,
            })
        }
        _ => Err(ParseError::MissingTerminator { line }),
    }
}

/// Parse the token stream of a single sentence.
pub fn parse_sentence(tokens: &[(Token, usize)]) -> Result<SentenceAst, ParseError> {
    let mut cur = Cursor { tokens, pos: 0 };
    let ast = parse_sentence_at(&mut cur)?;
    if cur.peek().is_some() {
        return Err(cur.err("trailing tokens after sentence terminator"));
    }
    Ok(ast)
}

/// Parse a whole `.xapi` story. Sentences may span lines until their `.` or
/// `?` terminator; `#` comments and blank lines are skipped.
pub fn parse_story(text: &str) -> Result<Vec<SentenceAst>, ParseError> {
    let mut sentences = Vec::new();
    let mut pending: Vec<(Token, usize)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        for token in tokenize(line, line_no)? {
            let terminator = matches!(token, Token::Period | Token::Question);
            pending.push((token, line_no));
            if terminator {
                sentences.push(parse_sentence(&pending)?);
                pending.clear();
            }
        }
    }
    if let Some((_, line)) = pending.first() {
        return Err(ParseError::MissingTerminator { line: *line });
    }
    Ok(sentences)
}

fn print_part(p: &PartAst, out: &mut String) {
    let mut first = true;
    let push = |s: &str, out: &mut String, first: &mut bool| {
        if !*first {
            out.push(' ');
        }
        out.push_str(s);
        *first = false;
    };
    match p.article {
        Article::Indefinite => push("a", out, &mut first),
        Article::Definite => push("the", out, &mut first),
        Article::None => {}
    }
    if p.wh {
        push("wh", out, &mut first);
    }
    for w in &p.words {
        push(w, out, &mut first);
    }
    if let Some(pn) = &p.proper_noun {
        push(&format!("\"{pn}\""), out, &mut first);
    }
    if let Some((rel, right)) = &p.rel {
        push(&format!("--{rel}--"), out, &mut first);
        out.push(' ');
        print_part(right, out);
    }
    if let Some(scene) = &p.scene_ref {
        push(&format!("in \"{scene}\""), out, &mut first);
    }
}

fn print_sentence(s: &SentenceAst, out: &mut String) {
    print_part(&s.subject, out);
    out.push_str(" / ");
    if s.verb.wh {
        out.push_str("wh ");
    }
    out.push_str(&s.verb.words.join(" "));
    if let Some(scene) = &s.verb.scene_ref {
        out.push_str(&format!(" in \"{scene}\""));
    }
    if let Some(q) = &s.quoted {
        out.push_str(" // ");
        print_sentence(q, out);
    } else {
        if let Some(o) = &s.object {
            out.push_str(" / ");
            print_part(o, out);
        }
        out.push(if s.kind == SentenceKind::Question { '?' } else { '.' });
    }
}

/// Canonical single-line rendering; reparsing yields a structurally equal AST.
pub fn pretty_print(s: &SentenceAst) -> String {
    let mut out = String::new();
    print_sentence(s, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_one(text: &str) -> SentenceAst {
        let mut v = parse_story(text).expect(text);
        assert_eq!(v.len(), 1, "{text}");
        v.remove(0)
    }

    #[test]
    fn tokenize_basic_sentence() {
        let toks = tokenize("The girl / hits / the wolf.", 1).unwrap();
        assert_eq!(
            toks,
            vec![
                Token::Word("the".into()),
                Token::Word("girl".into()),
                Token::Slash,
                Token::Word("hits".into()),
                Token::Slash,
                Token::Word("the".into()),
                Token::Word("wolf".into()),
                Token::Period,
            ]
        );
    }

    #[test]
    fn tokenize_rel_infix() {
        let toks = tokenize("eyes --of-- you", 1).unwrap();
        assert_eq!(
            toks,
            vec![Token::Word("eyes".into()), Token::Rel("of".into()), Token::Word("you".into())]
        );
        // whitespace-tolerant spelling, relation words may contain dashes
        let toks = tokenize("man -- parent-of -- \"Cindy\"", 1).unwrap();
        assert_eq!(
            toks,
            vec![
                Token::Word("man".into()),
                Token::Rel("parent-of".into()),
                Token::Quoted("Cindy".into())
            ]
        );
    }

    #[test]
    fn tokenize_errors() {
        assert!(matches!(tokenize("\"LRRH", 3), Err(ParseError::UnterminatedQuote { line: 3 })));
        assert!(matches!(tokenize("girl ; wolf", 1), Err(ParseError::StrayCharacter { .. })));
    }

    #[test]
    fn parse_question_with_wh() {
        let s = parse_one("Wh / eats / \"LRRH\"?");
        assert_eq!(s.kind, SentenceKind::Question);
        assert!(s.subject.wh);
        assert_eq!(s.verb.words, vec!["eats"]);
        assert_eq!(s.object.unwrap().proper_noun.as_deref(), Some("LRRH"));
    }

    #[test]
    fn parse_wh_on_verb() {
        let s = parse_one("eyes --of-- \"Grandma\" / wh is-a / big?");
        assert_eq!(s.kind, SentenceKind::Question);
        assert!(s.verb.wh);
        assert_eq!(s.verb.words, vec!["is-a"]);
        let (rel, right) = s.subject.rel.unwrap();
        assert_eq!(rel, "of");
        assert_eq!(right.proper_noun.as_deref(), Some("Grandma"));
    }

    #[test]
    fn parse_three_level_quote() {
        let s = parse_one(
            "Man --parent-of-- \"Cindy\"/ says in \"writing\"// \
             \"BrothersGrim\"/ writes in \"fairytale\"// A little girl/ exists.",
        );
        assert_eq!(s.kind, SentenceKind::Quote);
        assert_eq!(s.verb.scene_ref.as_deref(), Some("writing"));
        let q1 = s.quoted.unwrap();
        assert_eq!(q1.kind, SentenceKind::Quote);
        assert_eq!(q1.verb.scene_ref.as_deref(), Some("fairytale"));
        let q2 = q1.quoted.unwrap();
        assert_eq!(q2.kind, SentenceKind::Action);
        assert_eq!(q2.subject.words, vec!["little", "girl"]);
        assert_eq!(q2.subject.article, Article::Indefinite);
    }

    #[test]
    fn both_cross_scene_spellings_normalize() {
        let a = parse_one("the girl in \"fairytale\" / exists.");
        let b = parse_one("the girl -- in -- \"fairytale\" / exists.");
        assert_eq!(a.subject.scene_ref.as_deref(), Some("fairytale"));
        assert_eq!(a.subject, b.subject);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_story("The girl / hits hits / hits / x."),
            Err(ParseError::Sentence { .. })
        ));
        assert!(matches!(
            parse_story("The girl / hits // the wolf / runs."),
            Err(ParseError::Sentence { .. })
        ));
        assert!(matches!(parse_story("The girl /."), Err(ParseError::Sentence { .. })));
        assert!(matches!(
            parse_story("The girl / runs"),
            Err(ParseError::MissingTerminator { .. })
        ));
    }

    #[test]
    fn parse_story_skips_comments_and_spans_lines() {
        let text = "# a comment\n\n\"Grandma\" / is-view-identical\n   / the wolf -- in -- \"GrandmasHouse\".\n";
        let v = parse_story(text).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].line, 3);
        assert_eq!(v[0].object.as_ref().unwrap().scene_ref.as_deref(), Some("GrandmasHouse"));
        assert!(parse_story("").unwrap().is_empty());
    }

    #[test]
    fn error_names_the_line() {
        let text = "The girl / hits / the wolf.\nThe wolf / .\n";
        match parse_story(text) {
            Err(ParseError::Sentence { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected sentence error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_stable() {
        let samples = [
            "The girl / hits / the wolf.",
            "Wh / eats / \"LRRH\"?",
            "\"LRRH\" / says in \"conversation\" // eyes --of-- you / is-a / big.",
            "A scene \"bedroom\" / is-current-scene.",
            "She / implies in \"fairytale\" // the \"orders\" / is-future-hypothetical / the \"fairytale\".",
            "The wolf / says in \"conversation\" // eyes --of-- \"Grandma\" / sees good / the girl.",
        ];
        for text in samples {
            let ast = parse_one(text);
            let printed = pretty_print(&ast);
            let again = parse_one(&printed);
            assert_eq!(ast, again, "round trip failed for {text}: printed `{printed}`");
        }
    }
}
