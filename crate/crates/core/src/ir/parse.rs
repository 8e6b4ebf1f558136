use std::collections::{BTreeMap, BTreeSet, HashSet};

use thiserror::Error;

use super::{BinOp, ClassDecl, Comparator, Literal, Manifest, MethodDecl, Operand, Package, Statement, ViewDecl};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("duplicate class `{0}`")]
    DuplicateClass(String),
    #[error("duplicate method `{0}`")]
    DuplicateMethod(String),
    #[error("duplicate view `{0}`")]
    DuplicateView(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("use of never-defined variable `{0}`")]
    UndefinedVariable(String),
}

fn syntax(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError {
        line,
        kind: ParseErrorKind::Syntax(msg.into()),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Word(String),
    Int(i64),
    Float(f64),
    Str(String),
    Sym(&'static str),
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Word(w) => format!("`{w}`"),
            Token::Int(i) => format!("`{i}`"),
            Token::Float(f) => format!("`{f}`"),
            Token::Str(s) => format!("string \"{s}\""),
            Token::Sym(s) => format!("`{s}`"),
        }
    }
}

const SYMBOLS: [&str; 10] = ["==", "!=", "<=", ">=", "<", ">", "=", "(", ")", ","];

fn lex(line_no: usize, line: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            break;
        }
        if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(syntax(line_no, "unterminated string literal")),
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        match chars.get(i + 1) {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some(&e @ ('"' | '\\')) => s.push(e),
                            _ => return Err(syntax(line_no, "bad escape in string literal")),
                        }
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            out.push(Token::Str(s));
            continue;
        }
        let starts_number = c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()));
        if starts_number {
            let start = i;
            i += 1;
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric()
                    || chars[i] == '.'
                    || ((chars[i] == '-' || chars[i] == '+') && matches!(chars[i - 1], 'e' | 'E')))
            {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let tok = if text.contains(['.', 'e', 'E']) {
                text.parse::<f64>().ok().filter(|f| f.is_finite()).map(Token::Float)
            } else {
                text.parse::<i64>().ok().map(Token::Int)
            };
            out.push(tok.ok_or_else(|| syntax(line_no, format!("bad number `{text}`")))?);
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || matches!(chars[i], '_' | '.' | '$')) {
                i += 1;
            }
            out.push(Token::Word(chars[start..i].iter().collect()));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                out.push(Token::Sym(sym));
                i += sym.len();
            }
            None => return Err(syntax(line_no, format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_' || c == '$')
}

fn is_dotted(s: &str) -> bool {
    s.contains('.') && s.split('.').all(is_ident)
}

/// Cursor over the tokens of one line.
struct Line<'a> {
    no: usize,
    toks: &'a [Token],
    pos: usize,
}

impl<'a> Line<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn finish(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(syntax(self.no, format!("unexpected trailing {}", t.describe()))),
        }
    }

    fn word(&mut self, what: &str) -> Result<&'a str, ParseError> {
        match self.next() {
            Some(Token::Word(w)) => Ok(w),
            Some(t) => Err(syntax(self.no, format!("expected {what}, found {}", t.describe()))),
            None => Err(syntax(self.no, format!("expected {what}"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        let w = self.word(what)?;
        if is_ident(w) {
            Ok(w.to_string())
        } else {
            Err(syntax(self.no, format!("`{w}` is not a valid {what}")))
        }
    }

    fn sym(&mut self, s: &'static str) -> Result<(), ParseError> {
        match self.next() {
            Some(Token::Sym(t)) if *t == s => Ok(()),
            Some(t) => Err(syntax(self.no, format!("expected `{s}`, found {}", t.describe()))),
            None => Err(syntax(self.no, format!("expected `{s}`"))),
        }
    }

    fn eat_sym(&mut self, s: &'static str) -> bool {
        if matches!(self.peek(), Some(Token::Sym(t)) if *t == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        match self.next() {
            Some(Token::Int(i)) => Ok(Operand::Lit(Literal::Int(*i))),
            Some(Token::Float(f)) => Ok(Operand::Lit(Literal::Float(*f))),
            Some(Token::Str(s)) => Ok(Operand::Lit(Literal::Str(s.clone()))),
            Some(Token::Word(w)) => match w.as_str() {
                "true" => Ok(Operand::Lit(Literal::Bool(true))),
                "false" => Ok(Operand::Lit(Literal::Bool(false))),
                "null" => Ok(Operand::Lit(Literal::Null)),
                _ if is_ident(w) => Ok(Operand::Var(w.clone())),
                _ => Err(syntax(self.no, format!("`{w}` is not a valid operand"))),
            },
            Some(t) => Err(syntax(self.no, format!("expected operand, found {}", t.describe()))),
            None => Err(syntax(self.no, "expected operand")),
        }
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        match self.operand()? {
            Operand::Lit(l) => Ok(l),
            other => Err(syntax(self.no, format!("expected literal, found `{other}`"))),
        }
    }

    fn uint(&mut self, what: &str) -> Result<u32, ParseError> {
        match self.next() {
            Some(Token::Int(i)) if *i >= 0 && *i <= u32::MAX as i64 => Ok(*i as u32),
            _ => Err(syntax(self.no, format!("expected non-negative integer for {what}"))),
        }
    }
}

struct MethodBuilder {
    decl: MethodDecl,
    stmt_lines: Vec<usize>,
}

struct ClassBuilder {
    decl: ClassDecl,
    line: usize,
}

#[derive(Default)]
struct PackageBuilder {
    id: Option<String>,
    manifest: Manifest,
    classes: Vec<ClassDecl>,
    views: Vec<ViewDecl>,
    ended: bool,
    // source line of every statement, per class then method
    stmt_lines: Vec<Vec<Vec<usize>>>,
}

/// Parses the line-oriented IR text format into a validated [`Package`].
pub fn parse_package(text: &str) -> Result<Package, ParseError> {
    let mut pkg = PackageBuilder::default();
    let mut class: Option<ClassBuilder> = None;
    let mut method: Option<MethodBuilder> = None;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let no = idx + 1;
        last_line = no;
        let toks = lex(no, raw)?;
        if toks.is_empty() {
            continue;
        }
        if pkg.ended {
            return Err(syntax(no, "content after `endpackage`"));
        }
        let mut line = Line {
            no,
            toks: &toks,
            pos: 0,
        };
        let head = match line.peek() {
            Some(Token::Word(w)) => w.as_str(),
            _ => "",
        };

        if pkg.id.is_none() {
            if head != "package" {
                return Err(syntax(no, "expected `package <id>` header"));
            }
            line.next();
            let id = line.word("package id")?;
            line.finish()?;
            pkg.id = Some(id.to_string());
            continue;
        }

        if let Some(m) = method.as_mut() {
            if head == "endmethod" {
                line.next();
                line.finish()?;
                let m = method.take().expect("open method");
                let c = class.as_mut().expect("method inside class");
                c.decl.methods.push(m.decl);
                pkg.stmt_lines.last_mut().expect("class lines").push(m.stmt_lines);
                continue;
            }
            let stmt = parse_statement(&mut line)?;
            if let Statement::Label { name } = &stmt {
                let index = m.decl.body.len();
                if m.decl.labels.insert(name.clone(), index).is_some() {
                    return Err(ParseError {
                        line: no,
                        kind: ParseErrorKind::DuplicateLabel(name.clone()),
                    });
                }
            }
            m.decl.body.push(stmt);
            m.stmt_lines.push(no);
            continue;
        }

        if let Some(c) = class.as_mut() {
            match head {
                "endclass" => {
                    line.next();
                    line.finish()?;
                    let c = class.take().expect("open class");
                    if pkg.classes.iter().any(|k| k.name == c.decl.name) {
                        return Err(ParseError {
                            line: c.line,
                            kind: ParseErrorKind::DuplicateClass(c.decl.name),
                        });
                    }
                    pkg.classes.push(c.decl);
                }
                "method" => {
                    line.next();
                    let name = line.ident("method name")?;
                    line.sym("(")?;
                    let mut params = Vec::new();
                    if !line.eat_sym(")") {
                        loop {
                            params.push(line.ident("parameter name")?);
                            if line.eat_sym(")") {
                                break;
                            }
                            line.sym(",")?;
                        }
                    }
                    line.finish()?;
                    if c.decl.methods.iter().any(|m| m.name == name) {
                        return Err(ParseError {
                            line: no,
                            kind: ParseErrorKind::DuplicateMethod(name),
                        });
                    }
                    method = Some(MethodBuilder {
                        decl: MethodDecl {
                            name,
                            params,
                            body: Vec::new(),
                            labels: BTreeMap::new(),
                        },
                        stmt_lines: Vec::new(),
                    });
                }
                _ => return Err(syntax(no, "expected `method` or `endclass`")),
            }
            continue;
        }

        match head {
            "endpackage" => {
                line.next();
                line.finish()?;
                pkg.ended = true;
            }
            "permission" => {
                line.next();
                let p = line.word("permission name")?;
                line.finish()?;
                pkg.manifest.permissions.insert(p.to_string());
            }
            "library" => {
                line.next();
                let l = line.word("library id")?;
                line.finish()?;
                pkg.manifest.libraries.insert(l.to_string());
            }
            "view" => {
                line.next();
                let view = parse_view(&mut line)?;
                if pkg.views.iter().any(|v| v.name == view.name) {
                    return Err(ParseError {
                        line: no,
                        kind: ParseErrorKind::DuplicateView(view.name),
                    });
                }
                pkg.views.push(view);
            }
            "class" => {
                line.next();
                let name = line.ident("class name")?;
                line.finish()?;
                class = Some(ClassBuilder {
                    decl: ClassDecl {
                        name,
                        methods: Vec::new(),
                    },
                    line: no,
                });
                pkg.stmt_lines.push(Vec::new());
            }
            _ => return Err(syntax(no, "expected a package-level directive")),
        }
    }

    if method.is_some() {
        return Err(syntax(last_line, "missing `endmethod`"));
    }
    if class.is_some() {
        return Err(syntax(last_line, "missing `endclass`"));
    }
    let Some(id) = pkg.id.take() else {
        return Err(syntax(last_line.max(1), "missing `package <id>` header"));
    };
    if !pkg.ended {
        return Err(syntax(last_line, "missing `endpackage`"));
    }

    let mut package = Package {
        id,
        manifest: pkg.manifest,
        classes: pkg.classes,
        views: pkg.views,
    };
    validate(&mut package, &pkg.stmt_lines)?;
    Ok(package)
}

fn parse_view(line: &mut Line<'_>) -> Result<ViewDecl, ParseError> {
    let name = line.ident("view name")?;
    let mut class_type = None;
    let mut width = None;
    let mut height = None;
    let mut text_labels = Vec::new();
    while !line.done() {
        let key = line.word("view attribute")?;
        line.sym("=")?;
        match key {
            "class" => class_type = Some(line.word("view class")?.to_string()),
            "w" => width = Some(line.uint("w")?),
            "h" => height = Some(line.uint("h")?),
            "text" => match line.next() {
                Some(Token::Str(s)) => text_labels.push(s.clone()),
                _ => return Err(syntax(line.no, "expected string for text")),
            },
            other => return Err(syntax(line.no, format!("unknown view attribute `{other}`"))),
        }
    }
    Ok(ViewDecl {
        name,
        class_type: class_type.ok_or_else(|| syntax(line.no, "view needs class=<type>"))?,
        width_dp: width.ok_or_else(|| syntax(line.no, "view needs w=<int>"))?,
        height_dp: height.ok_or_else(|| syntax(line.no, "view needs h=<int>"))?,
        text_labels,
    })
}

fn parse_call(line: &mut Line<'_>, target: Option<String>) -> Result<Statement, ParseError> {
    let first = line.word("call target")?;
    let (receiver, api) = if matches!(line.peek(), Some(Token::Sym("("))) {
        (None, first)
    } else {
        if !is_ident(first) {
            return Err(syntax(line.no, format!("`{first}` is not a valid receiver")));
        }
        (Some(Operand::Var(first.to_string())), line.word("API name")?)
    };
    if !is_dotted(api) {
        return Err(syntax(
            line.no,
            format!("API name `{api}` must be dotted (Class.method)"),
        ));
    }
    line.sym("(")?;
    let mut args = Vec::new();
    if !line.eat_sym(")") {
        loop {
            args.push(line.operand()?);
            if line.eat_sym(")") {
                break;
            }
            line.sym(",")?;
        }
    }
    line.finish()?;
    Ok(Statement::Call {
        target,
        receiver,
        api: api.to_string(),
        args,
    })
}

fn parse_statement(line: &mut Line<'_>) -> Result<Statement, ParseError> {
    let head = line.word("statement")?;
    let stmt = match head {
        "call" => return parse_call(line, None),
        "if" => {
            let lhs = line.operand()?;
            let cmp = match line.next() {
                Some(Token::Sym(s)) => Comparator::from_symbol(s),
                _ => None,
            }
            .ok_or_else(|| syntax(line.no, "expected comparator"))?;
            let rhs = line.operand()?;
            if line.word("`goto`")? != "goto" {
                return Err(syntax(line.no, "expected `goto`"));
            }
            let label = line.ident("label")?;
            Statement::IfGoto { lhs, cmp, rhs, label }
        }
        "goto" => Statement::Goto {
            label: line.ident("label")?,
        },
        "label" => Statement::Label {
            name: line.ident("label")?,
        },
        "return" => {
            let value = if line.done() { None } else { Some(line.operand()?) };
            Statement::Return { value }
        }
        target if is_ident(target) => {
            line.sym("=")?;
            let target = target.to_string();
            let op = line.word("`const`, `copy`, an operator or `call`")?;
            match op {
                "const" => Statement::Const {
                    target,
                    value: line.literal()?,
                },
                "copy" => Statement::Copy {
                    target,
                    source: line.operand()?,
                },
                "call" => return parse_call(line, Some(target)),
                other => match BinOp::from_mnemonic(other) {
                    Some(op) => {
                        let lhs = line.operand()?;
                        let rhs = line.operand()?;
                        Statement::BinOp { target, op, lhs, rhs }
                    }
                    None => return Err(syntax(line.no, format!("unknown operation `{other}`"))),
                },
            }
        }
        other => return Err(syntax(line.no, format!("unknown statement `{other}`"))),
    };
    line.finish()?;
    Ok(stmt)
}

/// Checks labels and variable definitions, and resolves names that refer to
/// declared views.
fn validate(pkg: &mut Package, stmt_lines: &[Vec<Vec<usize>>]) -> Result<(), ParseError> {
    let views: BTreeSet<String> = pkg.views.iter().map(|v| v.name.clone()).collect();
    for (ci, class) in pkg.classes.iter_mut().enumerate() {
        for (mi, method) in class.methods.iter_mut().enumerate() {
            let lines = &stmt_lines[ci][mi];
            let mut locals: HashSet<String> = method.params.iter().cloned().collect();
            locals.extend(method.body.iter().filter_map(|s| s.defined_var().map(String::from)));
            for (si, stmt) in method.body.iter_mut().enumerate() {
                let line = lines[si];
                if let Statement::IfGoto { label, .. } | Statement::Goto { label } = &*stmt {
                    if !method.labels.contains_key(label) {
                        return Err(ParseError {
                            line,
                            kind: ParseErrorKind::UndefinedLabel(label.clone()),
                        });
                    }
                }
                for op in stmt.operands_mut() {
                    if let Operand::Var(name) = op {
                        if locals.contains(name.as_str()) {
                            continue;
                        }
                        if views.contains(name.as_str()) {
                            *op = Operand::View(std::mem::take(name));
                        } else {
                            return Err(ParseError {
                                line,
                                kind: ParseErrorKind::UndefinedVariable(name.clone()),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wrap(body: &str) -> String {
        format!(
            "package p\nview adView class=X w=1 h=1\nclass A\nmethod m(a)\n{body}\nendmethod\nendclass\nendpackage\n"
        )
    }

    #[test]
    fn empty_package() {
        let p = parse_package("package p\nendpackage").unwrap();
        assert_eq!(p.id, "p");
        assert!(p.classes.is_empty());
        assert!(p.views.is_empty());
    }

    #[test]
    fn statements_parse() {
        let p = parse_package(&wrap(
            "x = const 1\ny = copy x\nz = mul x -2.5\nr = call adView View.getWidth()\ncall Log.d(\"t, (x)\", z)\nif r >= 3 goto L\ngoto L\nlabel L\nreturn z",
        ))
        .unwrap();
        let body = &p.classes[0].methods[0].body;
        assert_eq!(body.len(), 9);
        assert_eq!(
            body[3],
            Statement::Call {
                target: Some("r".into()),
                receiver: Some(Operand::View("adView".into())),
                api: "View.getWidth".into(),
                args: vec![],
            }
        );
        match &body[4] {
            Statement::Call { args, .. } => {
                assert_eq!(args[0], Operand::Lit(Literal::Str("t, (x)".into())))
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(p.classes[0].methods[0].labels["L"], 7);
    }

    #[test]
    fn undefined_label_reports_line() {
        let err = parse_package(&wrap("goto nowhere")).unwrap_err();
        assert_eq!(err.line, 5);
        assert_eq!(err.kind, ParseErrorKind::UndefinedLabel("nowhere".into()));
    }

    #[test]
    fn undefined_variable() {
        let err = parse_package(&wrap("y = copy ghost")).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UndefinedVariable("ghost".into()));
    }

    #[test]
    fn duplicates_rejected() {
        let dup_class = "package p\nclass A\nendclass\nclass A\nendclass\nendpackage";
        assert!(matches!(
            parse_package(dup_class).unwrap_err().kind,
            ParseErrorKind::DuplicateClass(_)
        ));
        let dup_view = "package p\nview v class=X w=1 h=1\nview v class=Y w=2 h=2\nendpackage";
        assert_eq!(
            parse_package(dup_view).unwrap_err(),
            ParseError {
                line: 3,
                kind: ParseErrorKind::DuplicateView("v".into())
            }
        );
    }

    #[test]
    fn syntax_errors() {
        for bad in [
            "x = frob 1 2",
            "x = const y",
            "call notdotted()",
            "if a ~ 1 goto L\nlabel L",
            "x = const \"open",
        ] {
            let err = parse_package(&wrap(bad)).unwrap_err();
            assert!(matches!(err.kind, ParseErrorKind::Syntax(_)), "{bad}: {err}");
            assert_eq!(err.line, 5, "{bad}");
        }
        assert!(parse_package("class A\nendclass").is_err());
        assert!(parse_package("package p\nclass A\n").is_err());
    }

    #[test]
    fn view_attributes() {
        let p = parse_package(
            "package p\nview bannerAdView class=com.ads.Banner w=320 h=50 text=\"Ad\" text=\"Install\"\nendpackage",
        )
        .unwrap();
        assert_eq!(
            p.views[0],
            ViewDecl {
                name: "bannerAdView".into(),
                class_type: "com.ads.Banner".into(),
                width_dp: 320,
                height_dp: 50,
                text_labels: vec!["Ad".into(), "Install".into()],
            }
        );
    }
}
