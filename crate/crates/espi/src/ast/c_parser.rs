//! Recursive-descent parser for a function-level C subset: declarations,
//! expressions, control flow, calls, member and array access. Node type
//! names follow the usual tree-sitter C vocabulary; identifier, literal and
//! operator tokens become terminals with values, delimiters are dropped.

use super::{Ast, AstError, AstNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    CharLit,
    Punct,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: usize,
    pub col: usize,
}

const MULTI_PUNCT: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=",
];

/// Tokenize the C subset. Preprocessor lines and comments are skipped.
pub fn lex_tokens(source: &str) -> Result<Vec<Token>, AstError> {
    let mut tokens = Vec::new();
    let mut in_block_comment = false;
    for (line_idx, raw) in source.lines().enumerate() {
        let line = line_idx + 1;
        let bytes: Vec<char> = raw.chars().collect();
        let mut i = 0;
        if !in_block_comment && raw.trim_start().starts_with('#') {
            continue;
        }
        while i < bytes.len() {
            let c = bytes[i];
            if in_block_comment {
                if c == '*' && bytes.get(i + 1) == Some(&'/') {
                    in_block_comment = false;
                    i += 2;
                } else {
                    i += 1;
                }
                continue;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c == '/' && bytes.get(i + 1) == Some(&'/') {
                break;
            }
            if c == '/' && bytes.get(i + 1) == Some(&'*') {
                in_block_comment = true;
                i += 2;
                continue;
            }
            let col = i + 1;
            if c.is_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Ident,
                    text: bytes[start..i].iter().collect(),
                    line,
                    col,
                });
                continue;
            }
            if c.is_ascii_digit() {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_alphanumeric() || bytes[i] == '.' || bytes[i] == '_')
                {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Number,
                    text: bytes[start..i].iter().collect(),
                    line,
                    col,
                });
                continue;
            }
            if c == '"' || c == '\'' {
                let quote = c;
                let start = i;
                i += 1;
                while i < bytes.len() && bytes[i] != quote {
                    if bytes[i] == '\\' {
                        i += 1;
                    }
                    i += 1;
                }
                if i >= bytes.len() {
                    return Err(AstError::ParseError {
                        line,
                        col,
                        message: "unterminated literal".into(),
                    });
                }
                i += 1;
                tokens.push(Token {
                    kind: if quote == '"' { TokenKind::Str } else { TokenKind::CharLit },
                    text: bytes[start..i].iter().collect(),
                    line,
                    col,
                });
                continue;
            }
            // Longest-match punctuation.
            let rest: String = bytes[i..].iter().collect();
            if let Some(op) = MULTI_PUNCT.iter().find(|op| rest.starts_with(**op)) {
                tokens.push(Token { kind: TokenKind::Punct, text: (*op).to_string(), line, col });
                i += op.len();
                continue;
            }
            tokens.push(Token { kind: TokenKind::Punct, text: c.to_string(), line, col });
            i += 1;
        }
    }
    Ok(tokens)
}

const TYPE_KEYWORDS: &[&str] = &[
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "_Bool",
];
const STORAGE_KEYWORDS: &[&str] = &["static", "extern", "register", "inline"];
const QUALIFIER_KEYWORDS: &[&str] = &["const", "volatile", "restrict"];

fn is_typedef_name(name: &str) -> bool {
    name.ends_with("_t")
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    nodes: Vec<AstNode>,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&Token> {
        self.tokens.get(self.pos + n)
    }

    fn peek_text(&self) -> &str {
        self.peek().map(|t| t.text.as_str()).unwrap_or("")
    }

    fn at(&self, text: &str) -> bool {
        self.peek_text() == text
    }

    fn bump(&mut self) -> Result<Token, AstError> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err("unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, text: &str) -> Result<Token, AstError> {
        if self.at(text) {
            self.bump()
        } else {
            Err(self.err(&format!("expected {text:?}, found {:?}", self.peek_text())))
        }
    }

    fn err(&self, message: &str) -> AstError {
        let (line, col) = self
            .peek()
            .or_else(|| self.tokens.last())
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1));
        AstError::ParseError { line, col, message: message.to_string() }
    }

    fn terminal(&mut self, type_symbol: &str, tok: &Token) -> usize {
        self.nodes.push(AstNode {
            type_symbol: type_symbol.to_string(),
            value: Some(tok.text.clone()),
            span: (tok.line, tok.line),
            parent: None,
            children: Vec::new(),
        });
        self.nodes.len() - 1
    }

    fn interior(&mut self, type_symbol: &str, children: Vec<usize>) -> usize {
        let span = children
            .iter()
            .map(|c| self.nodes[*c].span)
            .fold(None, |acc: Option<(usize, usize)>, (a, b)| match acc {
                None => Some((a, b)),
                Some((x, y)) => Some((x.min(a), y.max(b))),
            })
            .unwrap_or((1, 1));
        self.nodes.push(AstNode {
            type_symbol: type_symbol.to_string(),
            value: None,
            span,
            parent: None,
            children,
        });
        self.nodes.len() - 1
    }

    // ---- declarations ------------------------------------------------

    fn at_specifier(&self) -> bool {
        let t = self.peek_text();
        TYPE_KEYWORDS.contains(&t)
            || STORAGE_KEYWORDS.contains(&t)
            || QUALIFIER_KEYWORDS.contains(&t)
            || t == "struct"
            || t == "union"
            || t == "enum"
            || t == "typedef"
            || is_typedef_name(t)
    }

    /// Heuristic: does a statement position start a declaration?
    fn at_declaration(&self) -> bool {
        if self.at_specifier() {
            return true;
        }
        // `Type name ...` or `Type *name ...` with an unknown typedef name.
        let Some(t0) = self.peek() else { return false };
        if t0.kind != TokenKind::Ident {
            return false;
        }
        match (self.peek_at(1), self.peek_at(2)) {
            (Some(t1), _) if t1.kind == TokenKind::Ident => true,
            (Some(t1), Some(t2)) if t1.text == "*" && t2.kind == TokenKind::Ident => self
                .peek_at(3)
                .map(|t3| matches!(t3.text.as_str(), ";" | "=" | "," | ")"))
                .unwrap_or(false),
            _ => false,
        }
    }

    fn parse_specifiers(&mut self) -> Result<Vec<usize>, AstError> {
        let mut out = Vec::new();
        let mut have_type = false;
        loop {
            let t = self.peek_text().to_string();
            if STORAGE_KEYWORDS.contains(&t.as_str()) || t == "typedef" {
                let tok = self.bump()?;
                out.push(self.terminal("storage_class_specifier", &tok));
            } else if QUALIFIER_KEYWORDS.contains(&t.as_str()) {
                let tok = self.bump()?;
                out.push(self.terminal("type_qualifier", &tok));
            } else if !have_type && (t == "struct" || t == "union" || t == "enum") {
                out.push(self.parse_struct_specifier()?);
                have_type = true;
            } else if !have_type && TYPE_KEYWORDS.contains(&t.as_str()) {
                // Collapse multi-keyword types (unsigned long, ...) into one
                // sized_type_specifier terminal when more than one keyword.
                let first = self.bump()?;
                let mut words = vec![first.text.clone()];
                while TYPE_KEYWORDS.contains(&self.peek_text()) {
                    words.push(self.bump()?.text);
                }
                let merged = Token {
                    kind: TokenKind::Ident,
                    text: words.join(" "),
                    line: first.line,
                    col: first.col,
                };
                let ty = if words.len() > 1 { "sized_type_specifier" } else { "primitive_type" };
                out.push(self.terminal(ty, &merged));
                have_type = true;
            } else if !have_type
                && self
                    .peek()
                    .map(|t| t.kind == TokenKind::Ident && is_typedef_name(&t.text))
                    .unwrap_or(false)
            {
                let tok = self.bump()?;
                out.push(self.terminal("type_identifier", &tok));
                have_type = true;
            } else {
                break;
            }
        }
        if !have_type {
            // Unknown typedef name used as a type (heuristic accepted).
            let tok = self.bump()?;
            if tok.kind != TokenKind::Ident {
                return Err(AstError::ParseError {
                    line: tok.line,
                    col: tok.col,
                    message: format!("expected type specifier, found {:?}", tok.text),
                });
            }
            out.push(self.terminal("type_identifier", &tok));
        }
        Ok(out)
    }

    fn parse_struct_specifier(&mut self) -> Result<usize, AstError> {
        let kw = self.bump()?; // struct | union | enum
        let mut children = Vec::new();
        if self.peek().map(|t| t.kind == TokenKind::Ident).unwrap_or(false) {
            let name = self.bump()?;
            children.push(self.terminal("type_identifier", &name));
        }
        if self.at("{") {
            self.expect("{")?;
            let mut fields = Vec::new();
            while !self.at("}") {
                if self.peek().is_none() {
                    return Err(self.err("unterminated struct body"));
                }
                fields.push(self.parse_field_declaration()?);
            }
            self.expect("}")?;
            children.push(self.interior("field_declaration_list", fields));
        }
        let _ = kw;
        Ok(self.interior("struct_specifier", children))
    }

    fn parse_field_declaration(&mut self) -> Result<usize, AstError> {
        let mut children = self.parse_specifiers()?;
        loop {
            children.push(self.parse_declarator()?);
            if self.at(",") {
                self.bump()?;
            } else {
                break;
            }
        }
        self.expect(";")?;
        Ok(self.interior("field_declaration", children))
    }

    /// `* ident`, `ident`, optionally with array suffixes.
    fn parse_declarator(&mut self) -> Result<usize, AstError> {
        if self.at("*") {
            self.bump()?;
            let inner = self.parse_declarator()?;
            return Ok(self.interior("pointer_declarator", vec![inner]));
        }
        let tok = self.bump()?;
        if tok.kind != TokenKind::Ident {
            return Err(AstError::ParseError {
                line: tok.line,
                col: tok.col,
                message: format!("expected declarator name, found {:?}", tok.text),
            });
        }
        let mut node = self.terminal("identifier", &tok);
        while self.at("[") {
            self.bump()?;
            let mut children = vec![node];
            if !self.at("]") {
                children.push(self.parse_expression()?);
            }
            self.expect("]")?;
            node = self.interior("array_declarator", children);
        }
        Ok(node)
    }

    fn parse_declaration(&mut self) -> Result<usize, AstError> {
        let mut children = self.parse_specifiers()?;
        if !self.at(";") {
            loop {
                let decl = self.parse_declarator()?;
                if self.at("=") {
                    let eq = self.bump()?;
                    let op = self.terminal("=", &eq);
                    let value = self.parse_assignment()?;
                    children.push(self.interior("init_declarator", vec![decl, op, value]));
                } else {
                    children.push(decl);
                }
                if self.at(",") {
                    self.bump()?;
                } else {
                    break;
                }
            }
        }
        self.expect(";")?;
        Ok(self.interior("declaration", children))
    }

    // ---- statements --------------------------------------------------

    fn parse_compound(&mut self) -> Result<usize, AstError> {
        self.expect("{")?;
        let mut stmts = Vec::new();
        while !self.at("}") {
            if self.peek().is_none() {
                return Err(self.err("unterminated block"));
            }
            stmts.push(self.parse_statement()?);
        }
        self.expect("}")?;
        Ok(self.interior("compound_statement", stmts))
    }

    fn parse_statement(&mut self) -> Result<usize, AstError> {
        match self.peek_text() {
            "{" => self.parse_compound(),
            "if" => {
                self.bump()?;
                let cond = self.parse_paren_expression()?;
                let then = self.parse_statement()?;
                let mut children = vec![cond, then];
                if self.at("else") {
                    self.bump()?;
                    let alt = self.parse_statement()?;
                    children.push(self.interior("else_clause", vec![alt]));
                }
                Ok(self.interior("if_statement", children))
            }
            "while" => {
                self.bump()?;
                let cond = self.parse_paren_expression()?;
                let body = self.parse_statement()?;
                Ok(self.interior("while_statement", vec![cond, body]))
            }
            "for" => {
                self.bump()?;
                self.expect("(")?;
                let mut children = Vec::new();
                if self.at(";") {
                    self.bump()?;
                } else if self.at_declaration() {
                    children.push(self.parse_declaration()?);
                } else {
                    children.push(self.parse_expression()?);
                    self.expect(";")?;
                }
                if !self.at(";") {
                    children.push(self.parse_expression()?);
                }
                self.expect(";")?;
                if !self.at(")") {
                    children.push(self.parse_expression()?);
                }
                self.expect(")")?;
                children.push(self.parse_statement()?);
                Ok(self.interior("for_statement", children))
            }
            "return" => {
                let kw = self.bump()?;
                let kw_term = self.terminal("return", &kw);
                let mut children = vec![kw_term];
                if !self.at(";") {
                    children.push(self.parse_expression()?);
                }
                self.expect(";")?;
                Ok(self.interior("return_statement", children))
            }
            "break" => {
                let kw = self.bump()?;
                let t = self.terminal("break", &kw);
                self.expect(";")?;
                Ok(self.interior("break_statement", vec![t]))
            }
            "continue" => {
                let kw = self.bump()?;
                let t = self.terminal("continue", &kw);
                self.expect(";")?;
                Ok(self.interior("continue_statement", vec![t]))
            }
            ";" => {
                self.bump()?;
                Ok(self.interior("expression_statement", Vec::new()))
            }
            _ if self.at_declaration() => self.parse_declaration(),
            _ => {
                let expr = self.parse_expression()?;
                self.expect(";")?;
                Ok(self.interior("expression_statement", vec![expr]))
            }
        }
    }

    fn parse_paren_expression(&mut self) -> Result<usize, AstError> {
        self.expect("(")?;
        let expr = self.parse_expression()?;
        self.expect(")")?;
        Ok(self.interior("parenthesized_expression", vec![expr]))
    }

    // ---- expressions -------------------------------------------------

    fn parse_expression(&mut self) -> Result<usize, AstError> {
        let mut node = self.parse_assignment()?;
        while self.at(",") {
            let op = self.bump()?;
            let op_t = self.terminal(",", &op);
            let rhs = self.parse_assignment()?;
            node = self.interior("comma_expression", vec![node, op_t, rhs]);
        }
        Ok(node)
    }

    fn parse_assignment(&mut self) -> Result<usize, AstError> {
        let lhs = self.parse_conditional()?;
        const ASSIGN_OPS: &[&str] =
            &["=", "+=", "-=", "*=", "/=", "%=", "<<=", ">>=", "&=", "|=", "^="];
        if ASSIGN_OPS.contains(&self.peek_text()) {
            let op = self.bump()?;
            let op_t = self.terminal(&op.text.clone(), &op);
            let rhs = self.parse_assignment()?;
            return Ok(self.interior("assignment_expression", vec![lhs, op_t, rhs]));
        }
        Ok(lhs)
    }

    fn parse_conditional(&mut self) -> Result<usize, AstError> {
        let cond = self.parse_binary(0)?;
        if self.at("?") {
            self.bump()?;
            let then = self.parse_expression()?;
            self.expect(":")?;
            let alt = self.parse_conditional()?;
            return Ok(self.interior("conditional_expression", vec![cond, then, alt]));
        }
        Ok(cond)
    }

    fn binary_level(op: &str) -> Option<u8> {
        Some(match op {
            "||" => 1,
            "&&" => 2,
            "|" => 3,
            "^" => 4,
            "&" => 5,
            "==" | "!=" => 6,
            "<" | ">" | "<=" | ">=" => 7,
            "<<" | ">>" => 8,
            "+" | "-" => 9,
            "*" | "/" | "%" => 10,
            _ => return None,
        })
    }

    fn parse_binary(&mut self, min_level: u8) -> Result<usize, AstError> {
        let mut lhs = self.parse_unary()?;
        while let Some(level) = Self::binary_level(self.peek_text()) {
            if level < min_level {
                break;
            }
            let op = self.bump()?;
            let op_t = self.terminal(&op.text.clone(), &op);
            let rhs = self.parse_binary(level + 1)?;
            lhs = self.interior("binary_expression", vec![lhs, op_t, rhs]);
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<usize, AstError> {
        let t = self.peek_text().to_string();
        match t.as_str() {
            "!" | "~" | "-" | "+" => {
                let op = self.bump()?;
                let op_t = self.terminal(&op.text.clone(), &op);
                let operand = self.parse_unary()?;
                Ok(self.interior("unary_expression", vec![op_t, operand]))
            }
            "*" | "&" => {
                let op = self.bump()?;
                let op_t = self.terminal(&op.text.clone(), &op);
                let operand = self.parse_unary()?;
                Ok(self.interior("pointer_expression", vec![op_t, operand]))
            }
            "++" | "--" => {
                let op = self.bump()?;
                let op_t = self.terminal(&op.text.clone(), &op);
                let operand = self.parse_unary()?;
                Ok(self.interior("update_expression", vec![op_t, operand]))
            }
            _ => self.parse_postfix(),
        }
    }

    fn parse_postfix(&mut self) -> Result<usize, AstError> {
        let mut node = self.parse_primary()?;
        loop {
            match self.peek_text() {
                "(" => {
                    self.bump()?;
                    let mut args = Vec::new();
                    while !self.at(")") {
                        args.push(self.parse_assignment()?);
                        if self.at(",") {
                            self.bump()?;
                        }
                    }
                    self.expect(")")?;
                    let arg_list = self.interior("argument_list", args);
                    node = self.interior("call_expression", vec![node, arg_list]);
                }
                "[" => {
                    self.bump()?;
                    let index = self.parse_expression()?;
                    self.expect("]")?;
                    node = self.interior("subscript_expression", vec![node, index]);
                }
                "->" | "." => {
                    let op = self.bump()?;
                    let op_t = self.terminal(&op.text.clone(), &op);
                    let field = self.bump()?;
                    if field.kind != TokenKind::Ident {
                        return Err(AstError::ParseError {
                            line: field.line,
                            col: field.col,
                            message: format!("expected field name, found {:?}", field.text),
                        });
                    }
                    let field_t = self.terminal("field_identifier", &field);
                    node = self.interior("field_expression", vec![node, op_t, field_t]);
                }
                "++" | "--" => {
                    let op = self.bump()?;
                    let op_t = self.terminal(&op.text.clone(), &op);
                    node = self.interior("update_expression", vec![node, op_t]);
                }
                _ => break,
            }
        }
        Ok(node)
    }

    fn parse_primary(&mut self) -> Result<usize, AstError> {
        let tok = self.bump()?;
        match tok.kind {
            TokenKind::Ident => Ok(self.terminal("identifier", &tok)),
            TokenKind::Number => Ok(self.terminal("number_literal", &tok)),
            TokenKind::Str => Ok(self.terminal("string_literal", &tok)),
            TokenKind::CharLit => Ok(self.terminal("char_literal", &tok)),
            TokenKind::Punct if tok.text == "(" => {
                self.pos -= 1;
                self.parse_paren_expression()
            }
            _ => Err(AstError::ParseError {
                line: tok.line,
                col: tok.col,
                message: format!("unexpected token {:?}", tok.text),
            }),
        }
    }

    // ---- top level ---------------------------------------------------

    /// Declaration or function definition.
    fn parse_external(&mut self) -> Result<usize, AstError> {
        let mut children = self.parse_specifiers()?;
        if self.at(";") {
            // e.g. a bare struct definition
            self.expect(";")?;
            return Ok(self.interior("declaration", children));
        }
        // Pointer stars belong to the declarator.
        let mut stars = 0;
        while self.at("*") {
            self.bump()?;
            stars += 1;
        }
        let name_tok = self.bump()?;
        if name_tok.kind != TokenKind::Ident {
            return Err(AstError::ParseError {
                line: name_tok.line,
                col: name_tok.col,
                message: format!("expected declarator name, found {:?}", name_tok.text),
            });
        }
        let mut name = self.terminal("identifier", &name_tok);
        if self.at("(") {
            self.bump()?;
            let mut params = Vec::new();
            while !self.at(")") {
                if self.at("void") && self.peek_at(1).map(|t| t.text == ")").unwrap_or(false) {
                    let v = self.bump()?;
                    params.push(self.terminal("primitive_type", &v));
                    break;
                }
                let mut pc = self.parse_specifiers()?;
                if !self.at(",") && !self.at(")") {
                    pc.push(self.parse_declarator()?);
                }
                params.push(self.interior("parameter_declaration", pc));
                if self.at(",") {
                    self.bump()?;
                }
            }
            self.expect(")")?;
            let param_list = self.interior("parameter_list", params);
            let mut decl = self.interior("function_declarator", vec![name, param_list]);
            for _ in 0..stars {
                decl = self.interior("pointer_declarator", vec![decl]);
            }
            if self.at("{") {
                let body = self.parse_compound()?;
                children.push(decl);
                children.push(body);
                return Ok(self.interior("function_definition", children));
            }
            self.expect(";")?;
            children.push(decl);
            return Ok(self.interior("declaration", children));
        }
        for _ in 0..stars {
            name = self.interior("pointer_declarator", vec![name]);
        }
        while self.at("[") {
            self.bump()?;
            let mut c = vec![name];
            if !self.at("]") {
                c.push(self.parse_expression()?);
            }
            self.expect("]")?;
            name = self.interior("array_declarator", c);
        }
        if self.at("=") {
            let eq = self.bump()?;
            let op = self.terminal("=", &eq);
            let value = self.parse_assignment()?;
            name = self.interior("init_declarator", vec![name, op, value]);
        }
        children.push(name);
        while self.at(",") {
            self.bump()?;
            let decl = self.parse_declarator()?;
            children.push(decl);
        }
        self.expect(";")?;
        Ok(self.interior("declaration", children))
    }
}

pub fn parse(source: &str) -> Result<Ast, AstError> {
    let tokens = lex_tokens(source)?;
    let mut parser = Parser { tokens, pos: 0, nodes: Vec::new() };
    let mut externals = Vec::new();
    while parser.peek().is_some() {
        if parser.at(";") {
            parser.bump()?;
            continue;
        }
        externals.push(parser.parse_external()?);
    }
    let root = parser.interior("translation_unit", externals);
    Ok(Ast::from_arena(parser.nodes, root))
}
