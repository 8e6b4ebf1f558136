use std::fmt::{self, Write};

use super::{Operand, Package, Statement};

pub(super) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

fn join(ops: &[Operand]) -> String {
    let mut s = String::new();
    for (i, op) in ops.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        write!(s, "{op}").expect("write to string");
    }
    s
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Const { target, value } => write!(f, "{target} = const {value}"),
            Statement::Copy { target, source } => write!(f, "{target} = copy {source}"),
            Statement::BinOp { target, op, lhs, rhs } => write!(f, "{target} = {} {lhs} {rhs}", op.mnemonic()),
            Statement::Call {
                target,
                receiver,
                api,
                args,
            } => {
                if let Some(t) = target {
                    write!(f, "{t} = ")?;
                }
                f.write_str("call ")?;
                if let Some(r) = receiver {
                    write!(f, "{r} ")?;
                }
                write!(f, "{api}({})", join(args))
            }
            Statement::IfGoto { lhs, cmp, rhs, label } => write!(f, "if {lhs} {} {rhs} goto {label}", cmp.symbol()),
            Statement::Goto { label } => write!(f, "goto {label}"),
            Statement::Label { name } => write!(f, "label {name}"),
            Statement::Return { value: None } => f.write_str("return"),
            Statement::Return { value: Some(v) } => write!(f, "return {v}"),
        }
    }
}

/// Canonical text form; parsing it yields a structurally equal package.
impl fmt::Display for Package {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "package {}", self.id)?;
        for p in &self.manifest.permissions {
            writeln!(f, "permission {p}")?;
        }
        for l in &self.manifest.libraries {
            writeln!(f, "library {l}")?;
        }
        for v in &self.views {
            write!(
                f,
                "view {} class={} w={} h={}",
                v.name, v.class_type, v.width_dp, v.height_dp
            )?;
            for t in &v.text_labels {
                write!(f, " text=\"{}\"", escape(t))?;
            }
            writeln!(f)?;
        }
        for class in &self.classes {
            writeln!(f, "class {}", class.name)?;
            for m in &class.methods {
                writeln!(f, "method {}({})", m.name, m.params.join(", "))?;
                for s in &m.body {
                    let indent = if matches!(s, Statement::Label { .. }) {
                        "  "
                    } else {
                        "    "
                    };
                    writeln!(f, "{indent}{s}")?;
                }
                writeln!(f, "endmethod")?;
            }
            writeln!(f, "endclass")?;
        }
        writeln!(f, "endpackage")
    }
}
