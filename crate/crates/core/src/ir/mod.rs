//! A small three-address intermediate representation standing in for
//! decompiled app bytecode.
//!
//! A [`Package`] carries the manifest (permissions and bundled libraries),
//! the declared views with their placement metadata, and the code as
//! classes of methods whose bodies are flat statement lists. Control flow
//! is expressed with labels, `goto` and `if .. goto`; there is no heap, no
//! arrays and no exceptions, so def-use information is exact.

mod catalog;
mod parse;
mod print;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use catalog::{classify_api, ApiCatalog, ApiCategory, CatalogError};
pub use parse::{parse_package, ParseError, ParseErrorKind};

#[derive(Debug, Clone, PartialEq)]
pub struct Package {
    pub id: String,
    pub manifest: Manifest,
    pub classes: Vec<ClassDecl>,
    pub views: Vec<ViewDecl>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub permissions: BTreeSet<String>,
    pub libraries: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewDecl {
    pub name: String,
    pub class_type: String,
    pub width_dp: u32,
    pub height_dp: u32,
    pub text_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDecl {
    pub name: String,
    pub methods: Vec<MethodDecl>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodDecl {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Statement>,
    /// Label name to the index of its `label` statement.
    pub labels: BTreeMap<String, usize>,
}

impl MethodDecl {
    pub fn label_target(&self, label: &str) -> Option<usize> {
        self.labels.get(label).copied()
    }

    pub fn param_position(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p == name)
    }
}

/// Identifies a method by class and method position inside its package.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MethodId {
    pub class: u32,
    pub method: u32,
}

/// Identity of a statement: its method and its index in the method body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StmtRef {
    pub method: MethodId,
    pub index: usize,
}

impl StmtRef {
    pub fn new(method: MethodId, index: usize) -> Self {
        Self { method, index }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    Null,
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Float(v) => {
                // keep a decimal point so the literal re-parses as a float
                if v.fract() == 0.0 && v.is_finite() && v.abs() < 1e15 {
                    write!(f, "{v:.1}")
                } else {
                    write!(f, "{v}")
                }
            }
            Literal::Str(s) => write!(f, "\"{}\"", print::escape(s)),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Null => f.write_str("null"),
        }
    }
}

/// A value operand. Names that are neither parameters nor assigned in the
/// enclosing method resolve to declared views and become [`Operand::View`].
#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Var(String),
    View(String),
    Lit(Literal),
}

impl Operand {
    pub fn as_var(&self) -> Option<&str> {
        match self {
            Operand::Var(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) | Operand::View(v) => f.write_str(v),
            Operand::Lit(l) => l.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl BinOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
            BinOp::Mod => "mod",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Some(match s {
            "add" => BinOp::Add,
            "sub" => BinOp::Sub,
            "mul" => BinOp::Mul,
            "div" => BinOp::Div,
            "mod" => BinOp::Mod,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparator {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "==",
            Comparator::Ne => "!=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "==" => Comparator::Eq,
            "!=" => Comparator::Ne,
            "<" => Comparator::Lt,
            "<=" => Comparator::Le,
            ">" => Comparator::Gt,
            ">=" => Comparator::Ge,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Const {
        target: String,
        value: Literal,
    },
    Copy {
        target: String,
        source: Operand,
    },
    BinOp {
        target: String,
        op: BinOp,
        lhs: Operand,
        rhs: Operand,
    },
    Call {
        target: Option<String>,
        receiver: Option<Operand>,
        api: String,
        args: Vec<Operand>,
    },
    IfGoto {
        lhs: Operand,
        cmp: Comparator,
        rhs: Operand,
        label: String,
    },
    Goto {
        label: String,
    },
    Label {
        name: String,
    },
    Return {
        value: Option<Operand>,
    },
}

impl Statement {
    /// The variable this statement assigns, if any.
    pub fn defined_var(&self) -> Option<&str> {
        match self {
            Statement::Const { target, .. } | Statement::Copy { target, .. } | Statement::BinOp { target, .. } => {
                Some(target)
            }
            Statement::Call { target, .. } => target.as_deref(),
            _ => None,
        }
    }

    /// Every operand read by this statement, in source order.
    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            Statement::Const { .. } | Statement::Goto { .. } | Statement::Label { .. } => Vec::new(),
            Statement::Copy { source, .. } => vec![source],
            Statement::BinOp { lhs, rhs, .. } => vec![lhs, rhs],
            Statement::Call { receiver, args, .. } => receiver.iter().chain(args.iter()).collect(),
            Statement::IfGoto { lhs, rhs, .. } => vec![lhs, rhs],
            Statement::Return { value } => value.iter().collect(),
        }
    }

    /// Variables read by this statement, deduplicated, in first-use order.
    pub fn used_vars(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for op in self.operands() {
            if let Some(v) = op.as_var() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    fn operands_mut(&mut self) -> Vec<&mut Operand> {
        match self {
            Statement::Const { .. } | Statement::Goto { .. } | Statement::Label { .. } => Vec::new(),
            Statement::Copy { source, .. } => vec![source],
            Statement::BinOp { lhs, rhs, .. } => vec![lhs, rhs],
            Statement::Call { receiver, args, .. } => receiver.iter_mut().chain(args.iter_mut()).collect(),
            Statement::IfGoto { lhs, rhs, .. } => vec![lhs, rhs],
            Statement::Return { value } => value.iter_mut().collect(),
        }
    }

    pub fn is_branch(&self) -> bool {
        matches!(self, Statement::IfGoto { .. })
    }
}

impl Package {
    pub fn methods(&self) -> impl Iterator<Item = (MethodId, &ClassDecl, &MethodDecl)> {
        self.classes.iter().enumerate().flat_map(|(ci, class)| {
            class.methods.iter().enumerate().map(move |(mi, m)| {
                (
                    MethodId {
                        class: ci as u32,
                        method: mi as u32,
                    },
                    class,
                    m,
                )
            })
        })
    }

    pub fn method(&self, id: MethodId) -> &MethodDecl {
        &self.classes[id.class as usize].methods[id.method as usize]
    }

    pub fn class_of(&self, id: MethodId) -> &ClassDecl {
        &self.classes[id.class as usize]
    }

    pub fn statement(&self, s: StmtRef) -> &Statement {
        &self.method(s.method).body[s.index]
    }

    /// `Class::method`, the location format used in reports.
    pub fn location(&self, id: MethodId) -> String {
        format!("{}::{}", self.class_of(id).name, self.method(id).name)
    }

    /// Resolves a dotted call name `Class.method` to a method declared in
    /// this package.
    pub fn resolve_call(&self, api: &str) -> Option<MethodId> {
        let (class_name, method_name) = api.rsplit_once('.')?;
        let (ci, class) = self.classes.iter().enumerate().find(|(_, c)| c.name == class_name)?;
        let mi = class.methods.iter().position(|m| m.name == method_name)?;
        Some(MethodId {
            class: ci as u32,
            method: mi as u32,
        })
    }

    pub fn view(&self, name: &str) -> Option<&ViewDecl> {
        self.views.iter().find(|v| v.name == name)
    }

    pub fn statement_count(&self) -> usize {
        self.methods().map(|(_, _, m)| m.body.len()).sum()
    }
}
