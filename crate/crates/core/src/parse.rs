//! Recursive-descent parser for the mapping dialect: a Turtle subset
//! covering exactly the shapes of the mapping grammar (prefix directives,
//! the `a` keyword, predicate-object lists, nested blank nodes, string and
//! IRI objects). Anything else is rejected rather than guessed at.
//!
//! Parsing happens in two layers: a generic statement reader producing
//! property bags, and a shape mapper that turns bags into model values.
//! Inline function maps are hoisted to the document level under
//! deterministic skolem ids (`<base#_b0>`, `<base#_b1>`, ...).

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::iri::{self, Iri};
use crate::model::{
    validate_document, ConstTerm, Diagnostic, Formulation, FunctionMap, FunctionParam,
    JoinCondition, JoinKey, MappingDocument, ObjectSpec, ParamValue, PredicateObjectMap,
    PredicateSpec, RefObjectMap, SourceDescriptor, SubjectSpec, Template, TermForm, TermMap,
    TermType, TriplesMap, DEFAULT_BASE,
};

/// Line/column of a token, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    /// The input violates the dialect grammar.
    Syntax { pos: Pos, expected: String, found: String },
    /// A term position references a function or triples map that is not
    /// declared in the document.
    UnresolvedReference(Iri),
    /// Grammar-valid (or Turtle-valid) construct outside the implemented
    /// subset.
    UnsupportedConstruct { pos: Pos, what: String },
    /// The document parsed but breaks structural invariants.
    Invalid(Vec<Diagnostic>),
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::Syntax { pos, expected, found } => {
                write!(f, "{pos}: expected {expected}, found {found}")
            }
            ParseError::UnresolvedReference(iri) => write!(f, "unresolved reference <{iri}>"),
            ParseError::UnsupportedConstruct { pos, what } => {
                write!(f, "{pos}: unsupported construct: {what}")
            }
            ParseError::Invalid(diags) => {
                write!(f, "invalid document:")?;
                for d in diags {
                    write!(f, " {d};")?;
                }
                Ok(())
            }
        }
    }
}

impl core::error::Error for ParseError {}

/// Parse a mapping document and check its structural invariants.
pub fn parse_mapping_document(text: &str) -> Result<MappingDocument, ParseError> {
    let statements = StatementParser::new(text).parse_document()?;
    let doc = Shaper::new().shape(statements)?;
    let diags = validate_document(&doc);
    let fatal: Vec<Diagnostic> = diags.into_iter().filter(Diagnostic::is_fatal).collect();
    if let Some(unresolved) = fatal.iter().find_map(|d| match d {
        Diagnostic::UnresolvedFunctionMap { missing, .. }
        | Diagnostic::UnresolvedTriplesMap { missing, .. } => Some(missing.clone()),
        _ => None,
    }) {
        return Err(ParseError::UnresolvedReference(unresolved));
    }
    if !fatal.is_empty() {
        return Err(ParseError::Invalid(fatal));
    }
    Ok(doc)
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    IriRef(String),
    PName { prefix: String, local: String },
    A,
    Str(String),
    LangTag(String),
    DoubleCaret,
    Dot,
    Semicolon,
    Comma,
    LBracket,
    RBracket,
    LParen,
    PrefixDirective,
    BaseDirective,
    Eof,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::IriRef(iri) => format!("<{iri}>"),
            Token::PName { prefix, local } => format!("{prefix}:{local}"),
            Token::A => "'a'".to_owned(),
            Token::Str(s) => format!("\"{s}\""),
            Token::LangTag(t) => format!("@{t}"),
            Token::DoubleCaret => "'^^'".to_owned(),
            Token::Dot => "'.'".to_owned(),
            Token::Semicolon => "';'".to_owned(),
            Token::Comma => "','".to_owned(),
            Token::LBracket => "'['".to_owned(),
            Token::RBracket => "']'".to_owned(),
            Token::LParen => "'('".to_owned(),
            Token::PrefixDirective => "'@prefix'".to_owned(),
            Token::BaseDirective => "'@base'".to_owned(),
            Token::Eof => "end of input".to_owned(),
        }
    }
}

struct Lexer<'a> {
    rest: &'a str,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer { rest: text, line: 1, col: 1 }
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn bump(&mut self, c: char) {
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        self.rest = &self.rest[c.len_utf8()..];
    }

    fn peek(&self) -> Option<char> {
        self.rest.chars().next()
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump(c);
            } else if c == '#' {
                while let Some(c) = self.peek() {
                    self.bump(c);
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn syntax(&self, expected: &str, found: impl Into<String>) -> ParseError {
        ParseError::Syntax { pos: self.pos(), expected: expected.to_owned(), found: found.into() }
    }

    fn next_token(&mut self) -> Result<(Token, Pos), ParseError> {
        self.skip_trivia();
        let pos = self.pos();
        let Some(c) = self.peek() else {
            return Ok((Token::Eof, pos));
        };
        let token = match c {
            '<' => {
                self.bump(c);
                let mut value = String::new();
                loop {
                    match self.peek() {
                        Some('>') => {
                            self.bump('>');
                            break;
                        }
                        Some(c) if c == '\n' || c == '"' => {
                            return Err(self.syntax("'>'", c.to_string()));
                        }
                        Some(c) => {
                            value.push(c);
                            self.bump(c);
                        }
                        None => return Err(self.syntax("'>'", "end of input")),
                    }
                }
                Token::IriRef(value)
            }
            '"' => {
                self.bump(c);
                let mut value = String::new();
                loop {
                    match self.peek() {
                        Some('"') => {
                            self.bump('"');
                            break;
                        }
                        Some('\\') => {
                            self.bump('\\');
                            match self.peek() {
                                Some(esc) => {
                                    let resolved = match esc {
                                        't' => '\t',
                                        'n' => '\n',
                                        'r' => '\r',
                                        '"' => '"',
                                        '\\' => '\\',
                                        other => {
                                            return Err(self.syntax(
                                                "string escape",
                                                format!("'\\{other}'"),
                                            ))
                                        }
                                    };
                                    value.push(resolved);
                                    self.bump(esc);
                                }
                                None => return Err(self.syntax("string escape", "end of input")),
                            }
                        }
                        Some('\n') => return Err(self.syntax("closing '\"'", "newline")),
                        Some(c) => {
                            value.push(c);
                            self.bump(c);
                        }
                        None => return Err(self.syntax("closing '\"'", "end of input")),
                    }
                }
                Token::Str(value)
            }
            '@' => {
                self.bump(c);
                let word = self.take_while(|c| c.is_ascii_alphanumeric() || c == '-');
                match word.as_str() {
                    "prefix" => Token::PrefixDirective,
                    "base" => Token::BaseDirective,
                    lang if !lang.is_empty() => Token::LangTag(word),
                    _ => return Err(self.syntax("'@prefix', '@base' or language tag", "'@'")),
                }
            }
            '^' => {
                self.bump(c);
                match self.peek() {
                    Some('^') => {
                        self.bump('^');
                        Token::DoubleCaret
                    }
                    other => {
                        return Err(self.syntax(
                            "'^^'",
                            other.map(|c| c.to_string()).unwrap_or_else(|| "end of input".to_owned()),
                        ))
                    }
                }
            }
            '.' => {
                self.bump(c);
                Token::Dot
            }
            ';' => {
                self.bump(c);
                Token::Semicolon
            }
            ',' => {
                self.bump(c);
                Token::Comma
            }
            '[' => {
                self.bump(c);
                Token::LBracket
            }
            ']' => {
                self.bump(c);
                Token::RBracket
            }
            '(' => {
                self.bump(c);
                Token::LParen
            }
            ')' => return Err(self.syntax("token", "')'")),
            c if c.is_ascii_alphabetic() || c == '_' => {
                // Names exclude '.' so a trailing statement dot never needs
                // backtracking; dotted local names are outside the dialect.
                let word =
                    self.take_while(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-'));
                if self.peek() == Some(':') {
                    self.bump(':');
                    if word == "_" {
                        return Err(ParseError::UnsupportedConstruct {
                            pos,
                            what: "blank node label".to_owned(),
                        });
                    }
                    let local =
                        self.take_while(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-'));
                    Token::PName { prefix: word, local }
                } else if word == "a" {
                    Token::A
                } else {
                    return Err(self.syntax("prefixed name", format!("'{word}'")));
                }
            }
            other => return Err(self.syntax("token", format!("'{other}'"))),
        };
        Ok((token, pos))
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if pred(c) {
                out.push(c);
                self.bump(c);
            } else {
                break;
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Statement layer: property bags
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Node {
    pos: Pos,
    types: Vec<Iri>,
    props: Vec<(Iri, Value, Pos)>,
}

impl Node {
    fn new(pos: Pos) -> Self {
        Node { pos, types: Vec::new(), props: Vec::new() }
    }

    fn has_type(&self, iri: &str) -> bool {
        self.types.iter().any(|t| t.as_str() == iri)
    }

    fn values<'n>(&'n self, prop: &'n str) -> impl Iterator<Item = (&'n Value, Pos)> {
        self.props
            .iter()
            .filter(move |(p, _, _)| p.as_str() == prop)
            .map(|(_, v, pos)| (v, *pos))
    }

    fn single(&self, prop: &str) -> Result<Option<(&Value, Pos)>, ParseError> {
        let mut iter = self
            .props
            .iter()
            .filter(|(p, _, _)| p.as_str() == prop)
            .map(|(_, v, pos)| (v, *pos));
        let first = iter.next();
        if let Some((_, pos)) = iter.next() {
            return Err(ParseError::Syntax {
                pos,
                expected: format!("at most one {prop}"),
                found: "repeated property".to_owned(),
            });
        }
        Ok(first)
    }
}

#[derive(Debug, Clone)]
enum Value {
    Iri(Iri),
    Literal { lexical: String, datatype: Option<Iri>, language: Option<String> },
    Node(Node),
}

struct Statements {
    base: String,
    prefixes: BTreeMap<String, String>,
    /// Top-level (subject IRI, property bag) in document order.
    blocks: Vec<(Iri, Node)>,
}

struct StatementParser<'a> {
    lexer: Lexer<'a>,
    lookahead: Option<(Token, Pos)>,
    base: String,
    prefixes: BTreeMap<String, String>,
}

impl<'a> StatementParser<'a> {
    fn new(text: &'a str) -> Self {
        let mut prefixes = BTreeMap::new();
        for (prefix, ns) in crate::model::RESERVED_PREFIXES {
            prefixes.insert(prefix.to_owned(), ns.to_owned());
        }
        StatementParser {
            lexer: Lexer::new(text),
            lookahead: None,
            base: DEFAULT_BASE.to_owned(),
            prefixes,
        }
    }

    fn peek(&mut self) -> Result<&(Token, Pos), ParseError> {
        if self.lookahead.is_none() {
            self.lookahead = Some(self.lexer.next_token()?);
        }
        Ok(self.lookahead.as_ref().unwrap())
    }

    fn next(&mut self) -> Result<(Token, Pos), ParseError> {
        match self.lookahead.take() {
            Some(tok) => Ok(tok),
            None => self.lexer.next_token(),
        }
    }

    fn expect(&mut self, want: &Token, production: &str) -> Result<Pos, ParseError> {
        let (tok, pos) = self.next()?;
        if &tok == want {
            Ok(pos)
        } else {
            Err(ParseError::Syntax {
                pos,
                expected: format!("{} in {production}", want.describe()),
                found: tok.describe(),
            })
        }
    }

    fn resolve_pname(&self, prefix: &str, local: &str, pos: Pos) -> Result<Iri, ParseError> {
        match self.prefixes.get(prefix) {
            Some(ns) => Ok(Iri::new(format!("{ns}{local}"))),
            None => Err(ParseError::Syntax {
                pos,
                expected: format!("declared prefix '{prefix}:'"),
                found: "undeclared prefix".to_owned(),
            }),
        }
    }

    fn parse_document(mut self) -> Result<Statements, ParseError> {
        let mut blocks = Vec::new();
        loop {
            let (tok, pos) = self.next()?;
            match tok {
                Token::Eof => break,
                Token::PrefixDirective => {
                    let (tok, pos) = self.next()?;
                    let Token::PName { prefix, local } = tok else {
                        return Err(ParseError::Syntax {
                            pos,
                            expected: "prefix name in @prefix".to_owned(),
                            found: tok.describe(),
                        });
                    };
                    if !local.is_empty() {
                        return Err(ParseError::Syntax {
                            pos,
                            expected: "prefix name ending in ':'".to_owned(),
                            found: format!("{prefix}:{local}"),
                        });
                    }
                    let (tok, iri_pos) = self.next()?;
                    let Token::IriRef(ns) = tok else {
                        return Err(ParseError::Syntax {
                            pos: iri_pos,
                            expected: "namespace IRI in @prefix".to_owned(),
                            found: tok.describe(),
                        });
                    };
                    self.expect(&Token::Dot, "@prefix directive")?;
                    let reserved = crate::model::RESERVED_PREFIXES
                        .iter()
                        .find(|(p, _)| *p == prefix.as_str());
                    if let Some((_, canonical)) = reserved {
                        if ns != *canonical {
                            return Err(ParseError::UnsupportedConstruct {
                                pos,
                                what: format!("rebinding reserved prefix '{prefix}:'"),
                            });
                        }
                    }
                    self.prefixes.insert(prefix, ns);
                }
                Token::BaseDirective => {
                    let (tok, pos) = self.next()?;
                    let Token::IriRef(base) = tok else {
                        return Err(ParseError::Syntax {
                            pos,
                            expected: "IRI in @base".to_owned(),
                            found: tok.describe(),
                        });
                    };
                    self.expect(&Token::Dot, "@base directive")?;
                    self.base = base;
                }
                Token::IriRef(iri) => {
                    let id = Iri::new(iri::resolve(&self.base, &iri));
                    let node = self.parse_property_list(pos, &Token::Dot)?;
                    self.expect(&Token::Dot, "statement")?;
                    blocks.push((id, node));
                }
                Token::PName { prefix, local } => {
                    let id = self.resolve_pname(&prefix, &local, pos)?;
                    let node = self.parse_property_list(pos, &Token::Dot)?;
                    self.expect(&Token::Dot, "statement")?;
                    blocks.push((id, node));
                }
                Token::LBracket => {
                    return Err(ParseError::UnsupportedConstruct {
                        pos,
                        what: "anonymous top-level subject".to_owned(),
                    })
                }
                other => {
                    return Err(ParseError::Syntax {
                        pos,
                        expected: "directive or subject IRI".to_owned(),
                        found: other.describe(),
                    })
                }
            }
        }
        Ok(Statements { base: self.base, prefixes: self.prefixes, blocks })
    }

    /// Parse `verb objectList (';' verb objectList)* ';'?` up to (not
    /// consuming) `terminator`.
    fn parse_property_list(&mut self, pos: Pos, terminator: &Token) -> Result<Node, ParseError> {
        let mut node = Node::new(pos);
        loop {
            let (tok, pos) = self.next()?;
            let verb = match tok {
                Token::A => None,
                Token::IriRef(iri) => Some(Iri::new(iri::resolve(&self.base, &iri))),
                Token::PName { prefix, local } => {
                    Some(self.resolve_pname(&prefix, &local, pos)?)
                }
                other => {
                    return Err(ParseError::Syntax {
                        pos,
                        expected: "predicate".to_owned(),
                        found: other.describe(),
                    })
                }
            };
            loop {
                let (value, vpos) = self.parse_value()?;
                match &verb {
                    None => match value {
                        Value::Iri(iri) => node.types.push(iri),
                        _ => {
                            return Err(ParseError::Syntax {
                                pos: vpos,
                                expected: "IRI after 'a'".to_owned(),
                                found: "non-IRI value".to_owned(),
                            })
                        }
                    },
                    Some(p) => node.props.push((p.clone(), value, vpos)),
                }
                if matches!(self.peek()?.0, Token::Comma) {
                    self.next()?;
                } else {
                    break;
                }
            }
            match &self.peek()?.0 {
                Token::Semicolon => {
                    self.next()?;
                    // Allow the common `;` before the closing delimiter.
                    let (tok, _) = self.peek()?;
                    if tok == terminator || matches!(tok, Token::RBracket) {
                        break;
                    }
                }
                tok if tok == terminator || matches!(tok, Token::RBracket) => break,
                other => {
                    let found = other.describe();
                    let pos = self.peek()?.1;
                    return Err(ParseError::Syntax {
                        pos,
                        expected: format!("';' or {}", terminator.describe()),
                        found,
                    });
                }
            }
        }
        Ok(node)
    }

    fn parse_value(&mut self) -> Result<(Value, Pos), ParseError> {
        let (tok, pos) = self.next()?;
        let value = match tok {
            Token::IriRef(iri) => Value::Iri(Iri::new(iri::resolve(&self.base, &iri))),
            Token::PName { prefix, local } => {
                Value::Iri(self.resolve_pname(&prefix, &local, pos)?)
            }
            Token::Str(lexical) => {
                // Optional datatype or language tag.
                match &self.peek()?.0 {
                    Token::DoubleCaret => {
                        self.next()?;
                        let (tok, dpos) = self.next()?;
                        let datatype = match tok {
                            Token::IriRef(iri) => Iri::new(iri::resolve(&self.base, &iri)),
                            Token::PName { prefix, local } => {
                                self.resolve_pname(&prefix, &local, dpos)?
                            }
                            other => {
                                return Err(ParseError::Syntax {
                                    pos: dpos,
                                    expected: "datatype IRI".to_owned(),
                                    found: other.describe(),
                                })
                            }
                        };
                        Value::Literal { lexical, datatype: Some(datatype), language: None }
                    }
                    Token::LangTag(_) => {
                        let (tok, _) = self.next()?;
                        let Token::LangTag(tag) = tok else { unreachable!() };
                        Value::Literal { lexical, datatype: None, language: Some(tag) }
                    }
                    _ => Value::Literal { lexical, datatype: None, language: None },
                }
            }
            Token::LBracket => {
                // Empty blank node `[]` or property list.
                if matches!(self.peek()?.0, Token::RBracket) {
                    self.next()?;
                    Value::Node(Node::new(pos))
                } else {
                    let node = self.parse_property_list(pos, &Token::RBracket)?;
                    self.expect(&Token::RBracket, "blank node")?;
                    Value::Node(node)
                }
            }
            Token::LParen => {
                return Err(ParseError::UnsupportedConstruct {
                    pos,
                    what: "RDF collection".to_owned(),
                })
            }
            other => {
                return Err(ParseError::Syntax {
                    pos,
                    expected: "IRI, literal or blank node".to_owned(),
                    found: other.describe(),
                })
            }
        };
        Ok((value, pos))
    }
}

// ---------------------------------------------------------------------------
// Shape layer: property bags -> model
// ---------------------------------------------------------------------------

struct Shaper {
    skolem_counter: u32,
    hoisted: Vec<FunctionMap>,
    base: String,
}

macro_rules! rr {
    ($name:literal) => {
        concat!("http://www.w3.org/ns/r2rml#", $name)
    };
}
macro_rules! rml {
    ($name:literal) => {
        concat!("http://semweb.mmlab.be/ns/rml#", $name)
    };
}
macro_rules! ql {
    ($name:literal) => {
        concat!("http://semweb.mmlab.be/ns/ql#", $name)
    };
}
macro_rules! fnml {
    ($name:literal) => {
        concat!("http://semweb.mmlab.be/ns/fnml#", $name)
    };
}
macro_rules! fno {
    ($name:literal) => {
        concat!("https://w3id.org/function/ontology#", $name)
    };
}

fn syntax(pos: Pos, expected: impl Into<String>, found: impl Into<String>) -> ParseError {
    ParseError::Syntax { pos, expected: expected.into(), found: found.into() }
}

fn unsupported(pos: Pos, what: impl Into<String>) -> ParseError {
    ParseError::UnsupportedConstruct { pos, what: what.into() }
}

impl Shaper {
    fn new() -> Self {
        Shaper { skolem_counter: 0, hoisted: Vec::new(), base: String::new() }
    }

    fn skolem(&mut self) -> Iri {
        let id = Iri::new(format!("{}#_b{}", self.base, self.skolem_counter));
        self.skolem_counter += 1;
        id
    }

    fn shape(mut self, statements: Statements) -> Result<MappingDocument, ParseError> {
        self.base = statements.base.clone();
        let mut doc = MappingDocument::new(statements.base);
        doc.prefixes = statements.prefixes;
        for (id, node) in statements.blocks {
            if node.has_type(rr!("TriplesMap")) {
                let tm = self.shape_triples_map(id, &node)?;
                doc.triples_maps.push(tm);
            } else if node.has_type(fnml!("FunctionTermMap")) {
                let fm = self.shape_function_map(id, &node)?;
                doc.function_maps.push(fm);
            } else {
                return Err(unsupported(
                    node.pos,
                    format!("top-level subject <{id}> is neither a triples map nor a function map"),
                ));
            }
        }
        doc.function_maps.append(&mut self.hoisted);
        // Canonical in-memory order, matching the serializer, so parse and
        // serialize compose to the identity.
        doc.triples_maps.sort_by(|a, b| a.id.cmp(&b.id));
        doc.function_maps.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(doc)
    }

    fn check_known_props(&self, node: &Node, allowed: &[&str], production: &str) -> Result<(), ParseError> {
        for (prop, _, pos) in &node.props {
            if !allowed.contains(&prop.as_str()) {
                return Err(unsupported(
                    *pos,
                    format!("property <{prop}> in {production}"),
                ));
            }
        }
        Ok(())
    }

    fn shape_triples_map(&mut self, id: Iri, node: &Node) -> Result<TriplesMap, ParseError> {
        self.check_known_props(
            node,
            &[rml!("logicalSource"), rr!("subjectMap"), rr!("subject"), rr!("predicateObjectMap")],
            "triples map",
        )?;
        let source = match node.single(rml!("logicalSource"))? {
            Some((Value::Node(ls), _)) => self.shape_logical_source(ls)?,
            Some((_, pos)) => return Err(syntax(pos, "logical source description", "non-node value")),
            None => return Err(syntax(node.pos, "rml:logicalSource in triples map", "missing property")),
        };

        let subject_map = node.single(rr!("subjectMap"))?;
        let subject_const = node.single(rr!("subject"))?;
        let subject = match (subject_map, subject_const) {
            (Some((value, pos)), None) => match value {
                Value::Iri(fm_ref) => SubjectSpec::FunctionRef(fm_ref.clone()),
                Value::Node(map) if map.has_type(fnml!("FunctionTermMap")) => {
                    let id = self.skolem();
                    let fm = self.shape_function_map(id.clone(), map)?;
                    self.hoisted.push(fm);
                    SubjectSpec::FunctionRef(id)
                }
                Value::Node(map) => {
                    SubjectSpec::Term(self.shape_term_map(map, &[], "subject map")?)
                }
                Value::Literal { .. } => {
                    return Err(syntax(pos, "subject map node or function map IRI", "literal"))
                }
            },
            (None, Some((value, pos))) => match value {
                Value::Iri(iri) => SubjectSpec::Constant(iri.clone()),
                _ => return Err(syntax(pos, "IRI in rr:subject", "non-IRI value")),
            },
            (None, None) => {
                return Err(syntax(node.pos, "subject map in triples map", "missing property"))
            }
            (Some(_), Some((_, pos))) => {
                return Err(syntax(pos, "exactly one subject specification", "both rr:subjectMap and rr:subject"))
            }
        };

        let mut poms = Vec::new();
        for (value, pos) in node.values(rr!("predicateObjectMap")) {
            let Value::Node(pom) = value else {
                return Err(syntax(pos, "predicate-object map node", "non-node value"));
            };
            poms.extend(self.shape_predicate_object_map(pom)?);
        }

        Ok(TriplesMap { id, source, subject, predicate_object_maps: poms })
    }

    fn shape_logical_source(&mut self, node: &Node) -> Result<SourceDescriptor, ParseError> {
        for ty in &node.types {
            if !matches!(ty.as_str(), rml!("LogicalSource") | rml!("logicalSource")) {
                return Err(unsupported(node.pos, format!("type <{ty}> in logical source")));
            }
        }
        self.check_known_props(
            node,
            &[rml!("source"), rml!("query"), rml!("referenceFormulation"), rml!("iterator")],
            "logical source",
        )?;
        let source = match node.single(rml!("source"))? {
            Some((Value::Literal { lexical, .. }, _)) => lexical.clone(),
            Some((_, pos)) => return Err(syntax(pos, "string in rml:source", "non-string value")),
            None => return Err(syntax(node.pos, "rml:source in logical source", "missing property")),
        };
        let query = match node.single(rml!("query"))? {
            Some((Value::Literal { lexical, .. }, _)) => Some(lexical.clone()),
            Some((_, pos)) => return Err(syntax(pos, "string in rml:query", "non-string value")),
            None => None,
        };
        let formulation = match node.single(rml!("referenceFormulation"))? {
            Some((Value::Iri(iri), pos)) => Some(match iri.as_str() {
                ql!("CSV") => Formulation::Csv,
                ql!("SQL") => Formulation::Sql,
                ql!("XPath") => Formulation::XPath,
                ql!("JSONPath") => Formulation::JsonPath,
                other => return Err(unsupported(pos, format!("reference formulation <{other}>"))),
            }),
            Some((_, pos)) => return Err(syntax(pos, "formulation IRI", "non-IRI value")),
            None => None,
        };
        let iterator = match node.single(rml!("iterator"))? {
            Some((Value::Literal { lexical, .. }, _)) => Some(lexical.clone()),
            Some((_, pos)) => return Err(syntax(pos, "string in rml:iterator", "non-string value")),
            None => None,
        };

        match (query, formulation) {
            (Some(query), Some(Formulation::Sql) | None) => {
                if let Some(_it) = iterator {
                    return Err(unsupported(node.pos, "rml:iterator on a SQL source"));
                }
                Ok(SourceDescriptor::SqlQuery { connection: source, query })
            }
            (Some(_), Some(f)) => {
                Err(unsupported(node.pos, format!("rml:query with {f} formulation")))
            }
            (None, Some(Formulation::Csv) | None) => {
                if iterator.is_some() {
                    return Err(unsupported(node.pos, "rml:iterator on a CSV source"));
                }
                Ok(SourceDescriptor::CsvFile { path: source })
            }
            (None, Some(Formulation::Sql)) => {
                Err(syntax(node.pos, "rml:query on a SQL source", "missing property"))
            }
            (None, Some(f @ (Formulation::XPath | Formulation::JsonPath))) => {
                Ok(SourceDescriptor::Unsupported { source, formulation: f, iterator })
            }
        }
    }

    fn shape_term_map(
        &mut self,
        node: &Node,
        extra_types: &[&str],
        production: &str,
    ) -> Result<TermMap, ParseError> {
        for ty in &node.types {
            // The grammar writes shape types both capitalized and not.
            let known = extra_types.contains(&ty.as_str())
                || matches!(
                    ty.as_str(),
                    rr!("TermMap")
                        | rr!("ObjectMap")
                        | rr!("objectMap")
                        | rr!("PredicateMap")
                        | rr!("predicateMap")
                        | rr!("SubjectMap")
                        | rr!("subjectMap")
                );
            if !known {
                return Err(unsupported(node.pos, format!("type <{ty}> in {production}")));
            }
        }
        self.check_known_props(
            node,
            &[
                rr!("template"),
                rml!("reference"),
                rr!("constant"),
                rr!("termType"),
                rr!("datatype"),
                rr!("language"),
            ],
            production,
        )?;
        let template = node.single(rr!("template"))?;
        let reference = node.single(rml!("reference"))?;
        let constant = node.single(rr!("constant"))?;
        let form = match (template, reference, constant) {
            (Some((Value::Literal { lexical, .. }, pos)), None, None) => {
                let template = Template::parse(lexical)
                    .map_err(|e| syntax(pos, "template with placeholders", e.0))?;
                TermForm::Template(template)
            }
            (None, Some((Value::Literal { lexical, .. }, _)), None) => {
                TermForm::Reference(lexical.clone())
            }
            (None, None, Some((value, pos))) => TermForm::Constant(match value {
                Value::Iri(iri) => ConstTerm::Iri(iri.clone()),
                Value::Literal { lexical, datatype, language } => ConstTerm::Literal {
                    lexical: lexical.clone(),
                    datatype: datatype.clone(),
                    language: language.clone(),
                },
                Value::Node(_) => return Err(syntax(pos, "constant term", "blank node")),
            }),
            (None, None, None) => {
                return Err(syntax(
                    node.pos,
                    format!("rr:template, rml:reference or rr:constant in {production}"),
                    "missing property",
                ))
            }
            _ => {
                return Err(syntax(
                    node.pos,
                    format!("exactly one of template/reference/constant in {production}"),
                    "multiple term forms",
                ))
            }
        };
        let term_type = match node.single(rr!("termType"))? {
            Some((Value::Iri(iri), pos)) => Some(match iri.as_str() {
                rr!("IRI") => TermType::Iri,
                rr!("Literal") => TermType::Literal,
                other => return Err(unsupported(pos, format!("term type <{other}>"))),
            }),
            Some((_, pos)) => return Err(syntax(pos, "term type IRI", "non-IRI value")),
            None => None,
        };
        let datatype = match node.single(rr!("datatype"))? {
            Some((Value::Iri(iri), _)) => Some(iri.clone()),
            Some((_, pos)) => return Err(syntax(pos, "datatype IRI", "non-IRI value")),
            None => None,
        };
        let language = match node.single(rr!("language"))? {
            Some((Value::Literal { lexical, .. }, _)) => Some(lexical.clone()),
            Some((_, pos)) => return Err(syntax(pos, "language tag string", "non-string value")),
            None => None,
        };
        Ok(TermMap { form, term_type, datatype, language })
    }

    fn shape_predicate_object_map(
        &mut self,
        node: &Node,
    ) -> Result<Vec<PredicateObjectMap>, ParseError> {
        for ty in &node.types {
            if ty.as_str() != rr!("PredicateObjectMap") {
                return Err(unsupported(node.pos, format!("type <{ty}> in predicate-object map")));
            }
        }
        self.check_known_props(
            node,
            &[rr!("predicate"), rr!("predicateMap"), rr!("object"), rr!("objectMap")],
            "predicate-object map",
        )?;
        let mut predicates: Vec<PredicateSpec> = Vec::new();
        for (value, pos) in node.values(rr!("predicate")) {
            match value {
                Value::Iri(iri) => predicates.push(PredicateSpec::Constant(iri.clone())),
                _ => return Err(syntax(pos, "IRI in rr:predicate", "non-IRI value")),
            }
        }
        for (value, pos) in node.values(rr!("predicateMap")) {
            match value {
                Value::Node(map) => {
                    let term = self.shape_term_map(map, &[], "predicate map")?;
                    // Predicate maps are restricted to template/reference.
                    if matches!(term.form, TermForm::Constant(_)) || term.term_type.is_some() {
                        return Err(unsupported(pos, "constant or typed predicate map"));
                    }
                    predicates.push(PredicateSpec::Term(term));
                }
                Value::Iri(iri) => {
                    return Err(unsupported(pos, format!("function map <{iri}> in predicate position")))
                }
                _ => return Err(syntax(pos, "predicate map node", "literal")),
            }
        }
        if predicates.is_empty() {
            return Err(syntax(node.pos, "rr:predicate or rr:predicateMap", "missing property"));
        }

        let mut objects: Vec<ObjectSpec> = Vec::new();
        for (value, pos) in node.values(rr!("object")) {
            objects.push(match value {
                Value::Iri(iri) => ObjectSpec::Constant(ConstTerm::Iri(iri.clone())),
                Value::Literal { lexical, datatype, language } => {
                    ObjectSpec::Constant(ConstTerm::Literal {
                        lexical: lexical.clone(),
                        datatype: datatype.clone(),
                        language: language.clone(),
                    })
                }
                Value::Node(_) => return Err(syntax(pos, "constant in rr:object", "blank node")),
            });
        }
        for (value, _pos) in node.values(rr!("objectMap")) {
            objects.push(self.shape_object_map(value, _pos)?);
        }
        if objects.is_empty() {
            return Err(syntax(node.pos, "rr:object or rr:objectMap", "missing property"));
        }

        // Multiple predicates or objects in one block expand to their cross
        // product, one model entry per generated pair.
        let mut out = Vec::new();
        for predicate in &predicates {
            for object in &objects {
                out.push(PredicateObjectMap {
                    predicate: predicate.clone(),
                    object: object.clone(),
                });
            }
        }
        Ok(out)
    }

    fn shape_object_map(&mut self, value: &Value, pos: Pos) -> Result<ObjectSpec, ParseError> {
        match value {
            // IRI objectMap values reference declared function maps.
            Value::Iri(iri) => Ok(ObjectSpec::FunctionRef(iri.clone())),
            Value::Node(node) if node.has_type(fnml!("FunctionTermMap")) => {
                let id = self.skolem();
                let fm = self.shape_function_map(id.clone(), node)?;
                self.hoisted.push(fm);
                Ok(ObjectSpec::FunctionRef(id))
            }
            Value::Node(node)
                if node.has_type(rr!("RefObjectMap"))
                    || node.values(rr!("parentTriplesMap")).next().is_some() =>
            {
                Ok(ObjectSpec::Ref(self.shape_ref_object_map(node)?))
            }
            Value::Node(node) => {
                Ok(ObjectSpec::Term(self.shape_term_map(node, &[], "object map")?))
            }
            Value::Literal { .. } => Err(syntax(pos, "object map node or IRI", "literal")),
        }
    }

    fn shape_ref_object_map(&mut self, node: &Node) -> Result<RefObjectMap, ParseError> {
        for ty in &node.types {
            if ty.as_str() != rr!("RefObjectMap") {
                return Err(unsupported(node.pos, format!("type <{ty}> in referencing object map")));
            }
        }
        self.check_known_props(
            node,
            &[rr!("parentTriplesMap"), rr!("joinCondition")],
            "referencing object map",
        )?;
        let parent = match node.single(rr!("parentTriplesMap"))? {
            Some((Value::Iri(iri), _)) => iri.clone(),
            Some((_, pos)) => return Err(syntax(pos, "triples map IRI", "non-IRI value")),
            None => {
                return Err(syntax(node.pos, "rr:parentTriplesMap", "missing property"))
            }
        };
        let mut join = Vec::new();
        for (value, pos) in node.values(rr!("joinCondition")) {
            let Value::Node(cond) = value else {
                return Err(syntax(pos, "join condition node", "non-node value"));
            };
            for ty in &cond.types {
                if !matches!(ty.as_str(), rr!("joinCondition") | rr!("JoinCondition")) {
                    return Err(unsupported(cond.pos, format!("type <{ty}> in join condition")));
                }
            }
            self.check_known_props(cond, &[rr!("child"), rr!("parent")], "join condition")?;
            let child = self.shape_join_key(cond, rr!("child"))?;
            let parent_key = self.shape_join_key(cond, rr!("parent"))?;
            join.push(JoinCondition { child, parent: parent_key });
        }
        Ok(RefObjectMap { parent, join })
    }

    fn shape_join_key(&self, cond: &Node, prop: &str) -> Result<JoinKey, ParseError> {
        match cond.single(prop)? {
            Some((Value::Literal { lexical, .. }, _)) => Ok(JoinKey::Attribute(lexical.clone())),
            Some((Value::Iri(iri), _)) => Ok(JoinKey::FunctionRef(iri.clone())),
            Some((Value::Node(_), pos)) => Err(syntax(pos, "attribute name or function map IRI", "blank node")),
            None => Err(syntax(cond.pos, prop, "missing property")),
        }
    }

    fn shape_function_map(&mut self, id: Iri, node: &Node) -> Result<FunctionMap, ParseError> {
        for ty in &node.types {
            let known = matches!(ty.as_str(), fnml!("FunctionTermMap") | rr!("TermMap"));
            if !known {
                return Err(unsupported(node.pos, format!("type <{ty}> in function map")));
            }
        }
        self.check_known_props(node, &[fnml!("functionValue")], "function map")?;
        let Some((Value::Node(fv), _)) = node.single(fnml!("functionValue"))? else {
            return Err(syntax(node.pos, "fnml:functionValue in function map", "missing property"));
        };
        self.check_known_props(
            fv,
            &[rml!("logicalSource"), rr!("predicateObjectMap")],
            "function value",
        )?;
        let source = match fv.single(rml!("logicalSource"))? {
            Some((Value::Node(ls), _)) => self.shape_logical_source(ls)?,
            Some((_, pos)) => return Err(syntax(pos, "logical source description", "non-node value")),
            None => {
                return Err(syntax(fv.pos, "rml:logicalSource in function value", "missing property"))
            }
        };

        let mut function: Option<Iri> = None;
        let mut declared_output: Option<Iri> = None;
        let mut parameters = Vec::new();
        for (value, pos) in fv.values(rr!("predicateObjectMap")) {
            let Value::Node(pom) = value else {
                return Err(syntax(pos, "predicate-object map node", "non-node value"));
            };
            let is_execution = pom.has_type(fno!("Execution"))
                || pom.values(fno!("executes")).next().is_some();
            if is_execution {
                if function.is_some() {
                    return Err(syntax(pom.pos, "a single fno:executes", "repeated execution"));
                }
                let (name, output) = self.shape_execution(pom)?;
                function = Some(name);
                declared_output = output;
            } else {
                parameters.push(self.shape_parameter(pom)?);
            }
        }
        let Some(function) = function else {
            return Err(syntax(fv.pos, "fno:executes in function value", "missing property"));
        };
        let output_predicate = declared_output
            .unwrap_or_else(|| crate::model::default_output_predicate(&function));
        Ok(FunctionMap { id, function, output_predicate, source, parameters })
    }

    /// `[ a fno:Execution ; fno:executes <fn> ]` where `<fn>` is either the
    /// function name IRI or an inline `fno:Function` declaration.
    fn shape_execution(&mut self, node: &Node) -> Result<(Iri, Option<Iri>), ParseError> {
        for ty in &node.types {
            if ty.as_str() != fno!("Execution") {
                return Err(unsupported(node.pos, format!("type <{ty}> in execution")));
            }
        }
        self.check_known_props(node, &[fno!("executes")], "execution")?;
        match node.single(fno!("executes"))? {
            Some((Value::Iri(iri), _)) => Ok((iri.clone(), None)),
            Some((Value::Node(decl), _)) => self.shape_function_declaration(decl),
            Some((Value::Literal { .. }, pos)) => {
                Err(syntax(pos, "function IRI or declaration", "literal"))
            }
            None => Err(syntax(node.pos, "fno:executes", "missing property")),
        }
    }

    /// Inline `fno:Function` declaration with name, expected parameters and
    /// returned output. The name string must be an absolute IRI; it is the
    /// registry key.
    fn shape_function_declaration(&mut self, node: &Node) -> Result<(Iri, Option<Iri>), ParseError> {
        for ty in &node.types {
            if ty.as_str() != fno!("Function") {
                return Err(unsupported(node.pos, format!("type <{ty}> in function declaration")));
            }
        }
        self.check_known_props(
            node,
            &[fno!("name"), fno!("expects"), fno!("returns")],
            "function declaration",
        )?;
        let name = match node.single(fno!("name"))? {
            Some((Value::Literal { lexical, .. }, pos)) => {
                if !iri::has_scheme(lexical) {
                    return Err(syntax(pos, "absolute IRI as function name", format!("\"{lexical}\"")));
                }
                Iri::new(lexical.clone())
            }
            Some((Value::Iri(iri), _)) => iri.clone(),
            Some((Value::Node(_), pos)) => return Err(syntax(pos, "function name", "blank node")),
            None => return Err(syntax(node.pos, "fno:name in function declaration", "missing property")),
        };
        for (value, pos) in node.values(fno!("expects")) {
            let Value::Node(param) = value else {
                return Err(syntax(pos, "parameter declaration node", "non-node value"));
            };
            self.check_known_props(param, &[fno!("predicate"), fno!("required")], "parameter declaration")?;
            if param.single(fno!("predicate"))?.is_none() {
                return Err(syntax(param.pos, "fno:predicate in parameter declaration", "missing property"));
            }
        }
        let output = match node.single(fno!("returns"))? {
            Some((Value::Node(ret), _)) => {
                self.check_known_props(ret, &[fno!("predicate"), fno!("required")], "output declaration")?;
                match ret.single(fno!("predicate"))? {
                    Some((Value::Iri(iri), _)) => Some(iri.clone()),
                    Some((_, pos)) => return Err(syntax(pos, "output predicate IRI", "non-IRI value")),
                    None => {
                        return Err(syntax(ret.pos, "fno:predicate in output declaration", "missing property"))
                    }
                }
            }
            Some((Value::Iri(iri), _)) => Some(iri.clone()),
            Some((Value::Literal { .. }, pos)) => {
                return Err(syntax(pos, "output declaration", "literal"))
            }
            None => None,
        };
        Ok((name, output))
    }

    /// `[ fno:predicate <p> ; fno:required "true" ; rr:objectMap [...] ]`
    fn shape_parameter(&mut self, node: &Node) -> Result<FunctionParam, ParseError> {
        for ty in &node.types {
            if ty.as_str() != rr!("PredicateObjectMap") {
                return Err(unsupported(node.pos, format!("type <{ty}> in function parameter")));
            }
        }
        self.check_known_props(
            node,
            &[fno!("predicate"), fno!("required"), rr!("objectMap"), rr!("object")],
            "function parameter",
        )?;
        let predicate = match node.single(fno!("predicate"))? {
            Some((Value::Iri(iri), _)) => iri.clone(),
            Some((_, pos)) => return Err(syntax(pos, "parameter predicate IRI", "non-IRI value")),
            None => {
                return Err(syntax(node.pos, "fno:predicate in function parameter", "missing property"))
            }
        };
        let required = match node.single(fno!("required"))? {
            Some((Value::Literal { lexical, .. }, pos)) => match lexical.as_str() {
                "true" => true,
                "false" => false,
                other => return Err(syntax(pos, "\"true\" or \"false\"", format!("\"{other}\""))),
            },
            Some((_, pos)) => return Err(syntax(pos, "required flag string", "non-string value")),
            None => true,
        };

        let object_map = node.single(rr!("objectMap"))?;
        let object_const = node.single(rr!("object"))?;
        let value = match (object_map, object_const) {
            (Some((value, pos)), None) => match value {
                Value::Iri(iri) => ParamValue::FunctionRef(iri.clone()),
                Value::Node(map) if map.has_type(fnml!("FunctionTermMap")) => {
                    let id = self.skolem();
                    let fm = self.shape_function_map(id.clone(), map)?;
                    self.hoisted.push(fm);
                    ParamValue::FunctionRef(id)
                }
                Value::Node(map) => {
                    let term = self.shape_term_map(map, &[], "parameter value")?;
                    match term.form {
                        TermForm::Reference(attr) => ParamValue::Reference(attr),
                        TermForm::Constant(c) => ParamValue::Constant(c),
                        TermForm::Template(_) => {
                            return Err(unsupported(pos, "template-valued function parameter"))
                        }
                    }
                }
                Value::Literal { .. } => {
                    return Err(syntax(pos, "parameter value node", "literal"))
                }
            },
            (None, Some((value, pos))) => match value {
                Value::Iri(iri) => ParamValue::Constant(ConstTerm::Iri(iri.clone())),
                Value::Literal { lexical, datatype, language } => {
                    ParamValue::Constant(ConstTerm::Literal {
                        lexical: lexical.clone(),
                        datatype: datatype.clone(),
                        language: language.clone(),
                    })
                }
                Value::Node(_) => return Err(syntax(pos, "constant parameter value", "blank node")),
            },
            (None, None) => {
                return Err(syntax(node.pos, "rr:objectMap or rr:object in function parameter", "missing property"))
            }
            (Some(_), Some((_, pos))) => {
                return Err(syntax(pos, "a single parameter value", "both rr:objectMap and rr:object"))
            }
        };
        Ok(FunctionParam { predicate, value, required })
    }
}
