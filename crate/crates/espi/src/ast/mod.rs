//! ASTs over pre/post functions, contextual path enumeration between
//! terminals, and sampling of the fixed-size path set fed to the encoder.

mod c_parser;
mod sexp;

pub use c_parser::lex_tokens;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AstError {
    #[error("parse error at line {line}, column {col}: {message}")]
    ParseError { line: usize, col: usize, message: String },
    #[error("malformed sexp tree: {0}")]
    SexpError(String),
    #[error("path endpoints must be distinct terminals")]
    SameNode,
    #[error("node {0} is not a terminal of this tree")]
    NotATerminal(usize),
}

#[derive(Debug, Clone)]
pub struct AstNode {
    /// Raw grammar type symbol; abbreviation happens at path construction.
    pub type_symbol: String,
    /// Present iff the node is a terminal.
    pub value: Option<String>,
    /// 1-based (start_line, end_line).
    pub span: (usize, usize),
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

impl AstNode {
    /// Terminals carry a token value. A childless interior node (an empty
    /// parameter or argument list) is not a terminal.
    pub fn is_terminal(&self) -> bool {
        self.value.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct Ast {
    pub nodes: Vec<AstNode>,
    pub root: usize,
    terminals: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dialect {
    CSubset,
    Sexp,
}

impl Ast {
    /// Finalize an arena of nodes: fix parent links and collect terminals in
    /// leaf (source token) order.
    pub(crate) fn from_arena(mut nodes: Vec<AstNode>, root: usize) -> Self {
        for i in 0..nodes.len() {
            for c in nodes[i].children.clone() {
                nodes[c].parent = Some(i);
            }
        }
        let mut terminals = Vec::new();
        let mut stack = vec![root];
        // DFS with explicit stack, children pushed in reverse for in-order.
        while let Some(n) = stack.pop() {
            if nodes[n].is_terminal() {
                terminals.push(n);
            } else {
                for c in nodes[n].children.iter().rev() {
                    stack.push(*c);
                }
            }
        }
        Ast { nodes, root, terminals }
    }

    /// Terminal node indices in source token order.
    pub fn terminals(&self) -> &[usize] {
        &self.terminals
    }

    pub fn terminal_value(&self, idx: usize) -> &str {
        self.nodes[idx].value.as_deref().unwrap_or("")
    }

    /// Position of a terminal in leaf order.
    pub fn leaf_rank(&self, idx: usize) -> Option<usize> {
        self.terminals.iter().position(|t| *t == idx)
    }
}

pub fn parse_ast(source: &str, dialect: Dialect) -> Result<Ast, AstError> {
    match dialect {
        Dialect::CSubset => c_parser::parse(source),
        Dialect::Sexp => sexp::parse(source),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathCategory {
    WithinChanges,
    WithinContext,
}

/// The unique simple tree path between two terminals, as the abbreviated
/// type sequence of every node on the start -> LCA -> end walk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstPath {
    pub start_value: String,
    pub node_types: Vec<String>,
    pub end_value: String,
    pub category: PathCategory,
    /// Node index walk in the source tree; not meaningful across trees.
    #[serde(skip)]
    pub node_indices: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<AstPath>,
    pub k_requested: usize,
    pub ratio_r: f64,
}

/// Abbreviation table for multi-word grammar symbols. Unmapped types pass
/// through unchanged; the table is injective (checked by test).
const TYPE_ABBREVIATIONS: &[(&str, &str)] = &[
    ("argument_list", "ArgList"),
    ("array_declarator", "ArrDecl"),
    ("assignment_expression", "AssignExpr"),
    ("binary_expression", "BinExpr"),
    ("break_statement", "BreakStmt"),
    ("call_expression", "CallExpr"),
    ("char_literal", "CharLit"),
    ("compound_statement", "CompStmt"),
    ("conditional_expression", "CondExpr"),
    ("continue_statement", "ContStmt"),
    ("declaration", "Decl"),
    ("else_clause", "ElseClause"),
    ("expression_statement", "ExprStmt"),
    ("field_declaration", "FieldDecl"),
    ("field_expression", "FieldExpr"),
    ("field_identifier", "FieldId"),
    ("for_statement", "ForStmt"),
    ("function_declarator", "FuncDecl"),
    ("function_definition", "FuncDef"),
    ("if_statement", "IfStmt"),
    ("init_declarator", "InitDecl"),
    ("number_literal", "NumLit"),
    ("parameter_declaration", "ParamDecl"),
    ("parameter_list", "ParamList"),
    ("parenthesized_expression", "ParenExpr"),
    ("pointer_declarator", "PtrDecl"),
    ("pointer_expression", "PtrExpr"),
    ("primitive_type", "PrimType"),
    ("return_statement", "RetStmt"),
    ("sized_type_specifier", "SizedType"),
    ("storage_class_specifier", "StorClass"),
    ("string_literal", "StrLit"),
    ("struct_specifier", "StructSpec"),
    ("subscript_expression", "SubscrExpr"),
    ("translation_unit", "TransUnit"),
    ("type_definition", "TypeDef"),
    ("type_identifier", "TypeId"),
    ("unary_expression", "UnExpr"),
    ("update_expression", "UpdExpr"),
    ("while_statement", "WhileStmt"),
];

pub fn abbreviate_type(raw_type: &str) -> String {
    for (raw, abbrev) in TYPE_ABBREVIATIONS {
        if *raw == raw_type {
            return (*abbrev).to_string();
        }
    }
    raw_type.to_string()
}

pub fn abbreviation_table() -> &'static [(&'static str, &'static str)] {
    TYPE_ABBREVIATIONS
}

/// Terminals whose span intersects the changed line set, in leaf order.
pub fn changed_terminals(ast: &Ast, changed_lines: &BTreeSet<usize>) -> Vec<usize> {
    ast.terminals()
        .iter()
        .copied()
        .filter(|t| {
            let (a, b) = ast.nodes[*t].span;
            changed_lines.iter().any(|l| *l >= a && *l <= b)
        })
        .collect()
}

/// Node index walk a -> LCA -> b through parent links.
fn path_node_walk(ast: &Ast, a: usize, b: usize) -> Vec<usize> {
    let mut a_chain = Vec::new();
    let mut n = Some(a);
    while let Some(i) = n {
        a_chain.push(i);
        n = ast.nodes[i].parent;
    }
    let mut b_chain = Vec::new();
    let mut n = Some(b);
    while let Some(i) = n {
        b_chain.push(i);
        n = ast.nodes[i].parent;
    }
    // Trim the common suffix above the LCA.
    let mut ai = a_chain.len();
    let mut bi = b_chain.len();
    while ai > 1 && bi > 1 && a_chain[ai - 2] == b_chain[bi - 2] {
        ai -= 1;
        bi -= 1;
    }
    let mut walk = a_chain[..ai].to_vec();
    walk.extend(b_chain[..bi - 1].iter().rev());
    walk
}

/// Shortest (unique simple) tree path between two terminals.
pub fn shortest_path(
    ast: &Ast,
    a: usize,
    b: usize,
    category: PathCategory,
) -> Result<AstPath, AstError> {
    if a == b {
        return Err(AstError::SameNode);
    }
    for t in [a, b] {
        if t >= ast.nodes.len() || !ast.nodes[t].is_terminal() {
            return Err(AstError::NotATerminal(t));
        }
    }
    let walk = path_node_walk(ast, a, b);
    let node_types = walk
        .iter()
        .map(|i| abbreviate_type(&ast.nodes[*i].type_symbol))
        .collect();
    Ok(AstPath {
        start_value: ast.terminal_value(a).to_string(),
        node_types,
        end_value: ast.terminal_value(b).to_string(),
        category,
        node_indices: walk,
    })
}

/// All candidate paths for one function AST. Within-changes paths pair
/// changed terminals with each other; within-context paths pair a changed
/// start with an unchanged end from the same function. Endpoints are
/// canonicalized so the earlier leaf is the start; paths longer than
/// `max_len` nodes are discarded.
pub fn enumerate_candidate_paths(
    ast: &Ast,
    changed: &BTreeSet<usize>,
    max_len: usize,
) -> (Vec<AstPath>, Vec<AstPath>) {
    let changed_ordered: Vec<usize> = ast
        .terminals()
        .iter()
        .copied()
        .filter(|t| changed.contains(t))
        .collect();
    let rest: Vec<usize> = ast
        .terminals()
        .iter()
        .copied()
        .filter(|t| !changed.contains(t))
        .collect();

    let mut within_changes = Vec::new();
    for i in 0..changed_ordered.len() {
        for j in i + 1..changed_ordered.len() {
            if let Ok(p) = shortest_path(
                ast,
                changed_ordered[i],
                changed_ordered[j],
                PathCategory::WithinChanges,
            ) {
                if p.node_indices.len() <= max_len {
                    within_changes.push(p);
                }
            }
        }
    }

    let mut within_context = Vec::new();
    for &c in &changed_ordered {
        for &u in &rest {
            let (start, end) = if ast.leaf_rank(c) <= ast.leaf_rank(u) {
                (c, u)
            } else {
                (u, c)
            };
            if let Ok(p) = shortest_path(ast, start, end, PathCategory::WithinContext) {
                if p.node_indices.len() <= max_len {
                    within_context.push(p);
                }
            }
        }
    }
    (within_changes, within_context)
}

/// Sample `k` paths at within-changes : within-context ratio `r`, without
/// replacement, seeded. A short category backfills from the other.
pub fn sample_paths(
    within_changes: Vec<AstPath>,
    within_context: Vec<AstPath>,
    k: usize,
    r: f64,
    rng_seed: u64,
) -> PathSet {
    assert!(k >= 1, "k must be positive");
    assert!(r > 0.0, "ratio must be positive");
    let target_wc = ((k as f64) * r / (1.0 + r)).round() as usize;
    let target_ctx = k - target_wc;
    let n_wc;
    let n_ctx;
    if within_changes.len() >= target_wc && within_context.len() >= target_ctx {
        n_wc = target_wc;
        n_ctx = target_ctx;
    } else if within_changes.len() < target_wc {
        n_wc = within_changes.len();
        n_ctx = (k - n_wc).min(within_context.len());
    } else {
        n_ctx = within_context.len();
        n_wc = (k - n_ctx).min(within_changes.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut paths = Vec::with_capacity(n_wc + n_ctx);
    paths.extend(draw(&mut rng, within_changes, n_wc));
    paths.extend(draw(&mut rng, within_context, n_ctx));
    PathSet { paths, k_requested: k, ratio_r: r }
}

fn draw(rng: &mut ChaCha8Rng, pool: Vec<AstPath>, n: usize) -> Vec<AstPath> {
    if n >= pool.len() {
        return pool;
    }
    let picked = rand::seq::index::sample(rng, pool.len(), n);
    let mut keep = vec![false; pool.len()];
    for i in picked.iter() {
        keep[i] = true;
    }
    pool.into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}
