//! Binary constituency trees read from parenthesized text.
//!
//! Accepts SNLI `*_binary_parse` strings such as `( ( It is ) ( raining today ) )`
//! as well as Penn-style strings with constituent labels (`(NP (DT a) (NN dog))`).
//! A label is recognised when an atom directly follows `(` with no whitespace;
//! labels are dropped and only the structure is kept. N-ary nodes are folded
//! left-branching and unary chains collapse to their child.

use crate::data::{normalize_token, Vocab};
use crate::error::{Error, Result};

/// A parsed tree before binarization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NaryTree {
    Leaf(String),
    Node(Vec<NaryTree>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub id: usize,
}

/// Binary tree; every internal node has exactly two children.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseTree {
    Leaf(Token),
    Node(Box<ParseTree>, Box<ParseTree>),
}

/// Post-order array encoding of a binary tree. Children always precede their
/// parent and the root is the last entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraversalArrays {
    pub is_leaf: Vec<bool>,
    pub left: Vec<Option<usize>>,
    pub right: Vec<Option<usize>>,
    pub word_ids: Vec<Option<usize>>,
}

enum Lexeme<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn lex(text: &str) -> Vec<(usize, Lexeme<'_>)> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                out.push((i, Lexeme::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Lexeme::Close));
                i += 1;
            }
            b if b.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len() && !matches!(bytes[i], b'(' | b')') && !bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                out.push((start, Lexeme::Atom(&text[start..i])));
            }
        }
    }
    out
}

/// Parses parenthesized text into an n-ary tree. Leaf tokens are normalized.
pub fn parse_nary(text: &str) -> Result<NaryTree> {
    let lexemes = lex(text);
    // (offset of '(', children)
    let mut stack: Vec<(usize, Vec<NaryTree>)> = Vec::new();
    let mut top: Vec<NaryTree> = Vec::new();
    let mut i = 0;
    while i < lexemes.len() {
        let (offset, ref lexeme) = lexemes[i];
        match lexeme {
            Lexeme::Open => {
                stack.push((offset, Vec::new()));
                // `(LABEL` with no whitespace in between: constituent label
                if let Some((next, Lexeme::Atom(_))) = lexemes.get(i + 1) {
                    if *next == offset + 1 {
                        i += 1;
                    }
                }
            }
            Lexeme::Close => {
                let (open, children) = stack.pop().ok_or_else(|| Error::Parse {
                    offset,
                    message: "unbalanced ')'".into(),
                })?;
                if children.is_empty() {
                    return Err(Error::Parse {
                        offset: open,
                        message: "node without children".into(),
                    });
                }
                let node = NaryTree::Node(children);
                match stack.last_mut() {
                    Some((_, siblings)) => siblings.push(node),
                    None => top.push(node),
                }
            }
            Lexeme::Atom(a) => {
                let leaf = NaryTree::Leaf(normalize_token(a));
                match stack.last_mut() {
                    Some((_, siblings)) => siblings.push(leaf),
                    None => top.push(leaf),
                }
            }
        }
        i += 1;
    }
    if !stack.is_empty() {
        return Err(Error::Parse {
            offset: text.len(),
            message: "unbalanced: unclosed '('".into(),
        });
    }
    match top.len() {
        0 => Err(Error::Parse {
            offset: 0,
            message: "empty input".into(),
        }),
        1 => Ok(top.pop().expect("one element")),
        _ => Ok(NaryTree::Node(top)),
    }
}

/// Left-branching binarization: `(a b c)` becomes `((a b) c)`, `((a) b)` becomes `(a b)`.
/// Token ids are set to 0 (UNK) until [`ParseTree::assign_ids`] is called.
pub fn binarize(tree: NaryTree) -> ParseTree {
    match tree {
        NaryTree::Leaf(text) => ParseTree::Leaf(Token { text, id: 0 }),
        NaryTree::Node(children) => {
            let mut it = children.into_iter();
            let first = it.next().expect("nodes have at least one child");
            it.fold(binarize(first), |acc, child| {
                ParseTree::Node(Box::new(acc), Box::new(binarize(child)))
            })
        }
    }
}

/// Parses and binarizes without a vocabulary; every id is UNK.
pub fn parse_raw(text: &str) -> Result<ParseTree> {
    parse_nary(text).map(binarize)
}

/// Parses `text`, binarizes and maps tokens through `vocab` (unknown tokens to UNK).
pub fn parse_sexpr(text: &str, vocab: &Vocab) -> Result<ParseTree> {
    let mut tree = parse_raw(text)?;
    tree.assign_ids(vocab);
    Ok(tree)
}

impl ParseTree {
    pub fn leaf(text: &str, id: usize) -> Self {
        ParseTree::Leaf(Token {
            text: text.to_string(),
            id,
        })
    }

    pub fn node(left: ParseTree, right: ParseTree) -> Self {
        ParseTree::Node(Box::new(left), Box::new(right))
    }

    /// Left-branching tree over a token sequence.
    pub fn left_branching(tokens: &[Token]) -> Result<Self> {
        let (first, rest) = tokens.split_first().ok_or(Error::EmptySequence)?;
        Ok(rest.iter().fold(ParseTree::Leaf(first.clone()), |acc, t| {
            ParseTree::node(acc, ParseTree::Leaf(t.clone()))
        }))
    }

    pub fn assign_ids(&mut self, vocab: &Vocab) {
        match self {
            ParseTree::Leaf(t) => t.id = vocab.id(&t.text),
            ParseTree::Node(l, r) => {
                l.assign_ids(vocab);
                r.assign_ids(vocab);
            }
        }
    }

    pub fn leaves(&self) -> Vec<&Token> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Token>) {
        match self {
            ParseTree::Leaf(t) => out.push(t),
            ParseTree::Node(l, r) => {
                l.collect_leaves(out);
                r.collect_leaves(out);
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            ParseTree::Leaf(_) => 1,
            ParseTree::Node(l, r) => l.leaf_count() + r.leaf_count(),
        }
    }

    /// SNLI binary-parse rendering, e.g. `( ( a b ) c )`.
    pub fn to_sexpr(&self) -> String {
        match self {
            ParseTree::Leaf(t) => t.text.clone(),
            ParseTree::Node(l, r) => format!("( {} {} )", l.to_sexpr(), r.to_sexpr()),
        }
    }

    pub fn post_order_arrays(&self) -> TraversalArrays {
        post_order_arrays(self)
    }
}

/// Post-order traversal producing the array encoding; leaves appear in
/// left-to-right sentence order.
pub fn post_order_arrays(tree: &ParseTree) -> TraversalArrays {
    let n = 2 * tree.leaf_count() - 1;
    let mut arrays = TraversalArrays {
        is_leaf: Vec::with_capacity(n),
        left: Vec::with_capacity(n),
        right: Vec::with_capacity(n),
        word_ids: Vec::with_capacity(n),
    };
    populate(tree, &mut arrays);
    arrays
}

fn populate(node: &ParseTree, arrays: &mut TraversalArrays) -> usize {
    match node {
        ParseTree::Leaf(t) => {
            arrays.is_leaf.push(true);
            arrays.left.push(None);
            arrays.right.push(None);
            arrays.word_ids.push(Some(t.id));
        }
        ParseTree::Node(l, r) => {
            let li = populate(l, arrays);
            let ri = populate(r, arrays);
            arrays.is_leaf.push(false);
            arrays.left.push(Some(li));
            arrays.right.push(Some(ri));
            arrays.word_ids.push(None);
        }
    }
    arrays.is_leaf.len() - 1
}

impl TraversalArrays {
    /// Arrays of the left-branching tree `((w1 w2) w3) ...`.
    pub fn left_branching(ids: &[usize]) -> Result<Self> {
        let (&first, rest) = ids.split_first().ok_or(Error::EmptySequence)?;
        let mut a = TraversalArrays {
            is_leaf: vec![true],
            left: vec![None],
            right: vec![None],
            word_ids: vec![Some(first)],
        };
        let mut acc = 0;
        for &id in rest {
            a.is_leaf.push(true);
            a.left.push(None);
            a.right.push(None);
            a.word_ids.push(Some(id));
            let leaf = a.len() - 1;
            a.is_leaf.push(false);
            a.left.push(Some(acc));
            a.right.push(Some(leaf));
            a.word_ids.push(None);
            acc = a.len() - 1;
        }
        Ok(a)
    }

    pub fn len(&self) -> usize {
        self.is_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_leaf.is_empty()
    }

    pub fn root_index(&self) -> usize {
        self.len() - 1
    }

    pub fn leaf_count(&self) -> usize {
        self.is_leaf.iter().filter(|&&l| l).count()
    }

    /// Word ids of the leaves in sentence order.
    pub fn leaf_ids(&self) -> Vec<usize> {
        self.word_ids.iter().filter_map(|w| *w).collect()
    }

    /// Checks the structural invariants of the encoding.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let bad = |m: String| Err(Error::Shape(m));
        if n == 0 {
            return bad("empty traversal arrays".into());
        }
        if self.left.len() != n || self.right.len() != n || self.word_ids.len() != n {
            return bad("traversal arrays differ in length".into());
        }
        let leaves = self.leaf_count();
        if n != 2 * leaves - 1 {
            return bad(format!("{n} nodes for {leaves} leaves"));
        }
        for i in 0..n {
            match (self.is_leaf[i], self.left[i], self.right[i], self.word_ids[i]) {
                (true, None, None, Some(_)) => {}
                (false, Some(l), Some(r), None) if l < i && r < i => {}
                _ => return bad(format!("node {i} is malformed")),
            }
        }
        Ok(())
    }
}
