//! Pre-parsed trees as s-expressions: `(TYPE child...)` for interior nodes
//! and `(TYPE "value" L:start-end)` for terminals. Interior spans are the
//! union of their children's spans.

use super::{Ast, AstError, AstNode};

#[derive(Debug)]
enum Tok {
    Open,
    Close,
    Atom(String),
    Str(String),
}

fn lex(input: &str) -> Result<Vec<Tok>, AstError> {
    let chars: Vec<char> = input.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '(' {
            toks.push(Tok::Open);
            i += 1;
        } else if c == ')' {
            toks.push(Tok::Close);
            i += 1;
        } else if c == '"' {
            i += 1;
            let mut s = String::new();
            while i < chars.len() && chars[i] != '"' {
                if chars[i] == '\\' && i + 1 < chars.len() {
                    i += 1;
                }
                s.push(chars[i]);
                i += 1;
            }
            if i >= chars.len() {
                return Err(AstError::SexpError("unterminated string".into()));
            }
            i += 1;
            toks.push(Tok::Str(s));
        } else {
            let start = i;
            while i < chars.len()
                && !chars[i].is_whitespace()
                && chars[i] != '('
                && chars[i] != ')'
                && chars[i] != '"'
            {
                i += 1;
            }
            toks.push(Tok::Atom(chars[start..i].iter().collect()));
        }
    }
    Ok(toks)
}

fn parse_span(atom: &str) -> Option<(usize, usize)> {
    let rest = atom.strip_prefix("L:")?;
    let (a, b) = rest.split_once('-')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

struct SexpParser {
    toks: Vec<Tok>,
    pos: usize,
    nodes: Vec<AstNode>,
}

impl SexpParser {
    fn parse_node(&mut self) -> Result<usize, AstError> {
        match self.toks.get(self.pos) {
            Some(Tok::Open) => self.pos += 1,
            _ => return Err(AstError::SexpError("expected '('".into())),
        }
        let type_symbol = match self.toks.get(self.pos) {
            Some(Tok::Atom(a)) => {
                let t = a.clone();
                self.pos += 1;
                t
            }
            _ => return Err(AstError::SexpError("expected node type after '('".into())),
        };
        // Terminal form: (TYPE "value" L:a-b)
        if let Some(Tok::Str(v)) = self.toks.get(self.pos) {
            let value = v.clone();
            self.pos += 1;
            let span = match self.toks.get(self.pos) {
                Some(Tok::Atom(a)) => parse_span(a)
                    .ok_or_else(|| AstError::SexpError(format!("bad span {a:?}")))?,
                _ => return Err(AstError::SexpError("terminal missing span".into())),
            };
            self.pos += 1;
            match self.toks.get(self.pos) {
                Some(Tok::Close) => self.pos += 1,
                _ => return Err(AstError::SexpError("expected ')' after terminal".into())),
            }
            self.nodes.push(AstNode {
                type_symbol,
                value: Some(value),
                span,
                parent: None,
                children: Vec::new(),
            });
            return Ok(self.nodes.len() - 1);
        }
        let mut children = Vec::new();
        loop {
            match self.toks.get(self.pos) {
                Some(Tok::Close) => {
                    self.pos += 1;
                    break;
                }
                Some(Tok::Open) => children.push(self.parse_node()?),
                Some(other) => {
                    return Err(AstError::SexpError(format!(
                        "unexpected token in child list: {other:?}"
                    )))
                }
                None => return Err(AstError::SexpError("unterminated node".into())),
            }
        }
        if children.is_empty() {
            return Err(AstError::SexpError(format!(
                "interior node {type_symbol:?} has no children"
            )));
        }
        let span = children
            .iter()
            .map(|c| self.nodes[*c].span)
            .fold((usize::MAX, 0), |(a, b), (x, y)| (a.min(x), b.max(y)));
        self.nodes.push(AstNode { type_symbol, value: None, span, parent: None, children });
        Ok(self.nodes.len() - 1)
    }
}

pub fn parse(input: &str) -> Result<Ast, AstError> {
    let toks = lex(input)?;
    let mut parser = SexpParser { toks, pos: 0, nodes: Vec::new() };
    let root = parser.parse_node()?;
    if parser.pos != parser.toks.len() {
        return Err(AstError::SexpError("trailing input after root node".into()));
    }
    Ok(Ast::from_arena(parser.nodes, root))
}
