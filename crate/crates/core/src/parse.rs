//! Concrete syntax for formulas.
//!
//! Precedence from tightest: `~`, `&`, `|`, `->` (right), `<->` (left).
//! Quantifier bodies extend as far right as possible.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::formula::{var, CountMode, Formula, Quant};
use crate::structure::{Signature, Structure, StructureBuilder};
use alloc::sync::Arc;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(usize),
    Exists,
    Forall,
    True,
    False,
    Dist(usize),
    Ge,
    Eq,
    Not,
    And,
    Or,
    Implies,
    Iff,
    LParen,
    RParen,
    Comma,
    Dot,
    End,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax { line, column, message: message.into() }
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let bump = |i: &mut usize, col: &mut usize, n: usize| {
        *i += n;
        *col += n;
    };
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line: l0, column: c0 });
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => bump(&mut i, &mut col, 1),
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => {
                push(&mut out, Tok::LParen);
                bump(&mut i, &mut col, 1)
            }
            ')' => {
                push(&mut out, Tok::RParen);
                bump(&mut i, &mut col, 1)
            }
            ',' => {
                push(&mut out, Tok::Comma);
                bump(&mut i, &mut col, 1)
            }
            '.' => {
                push(&mut out, Tok::Dot);
                bump(&mut i, &mut col, 1)
            }
            '~' => {
                push(&mut out, Tok::Not);
                bump(&mut i, &mut col, 1)
            }
            '&' => {
                push(&mut out, Tok::And);
                bump(&mut i, &mut col, 1)
            }
            '|' => {
                push(&mut out, Tok::Or);
                bump(&mut i, &mut col, 1)
            }
            '=' => {
                push(&mut out, Tok::Eq);
                bump(&mut i, &mut col, 1)
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                push(&mut out, Tok::Implies);
                bump(&mut i, &mut col, 2)
            }
            '<' if chars.get(i + 1) == Some(&'-') && chars.get(i + 2) == Some(&'>') => {
                push(&mut out, Tok::Iff);
                bump(&mut i, &mut col, 3)
            }
            '>' if chars.get(i + 1) == Some(&'=') => {
                push(&mut out, Tok::Ge);
                bump(&mut i, &mut col, 2)
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                col += i - start;
                let n = s.parse().map_err(|_| syntax(l0, c0, format!("number {s} is too large")))?;
                push(&mut out, Tok::Num(n));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                col += i - start;
                let tok = match s.as_str() {
                    "exists" => Tok::Exists,
                    "forall" => Tok::Forall,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "dist" if chars.get(i) == Some(&'<') && chars.get(i + 1) == Some(&'=') => {
                        i += 2;
                        col += 2;
                        let start = i;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                        if start == i {
                            return Err(syntax(line, col, "expected a distance bound after dist<="));
                        }
                        let s: String = chars[start..i].iter().collect();
                        col += i - start;
                        Tok::Dist(s.parse().map_err(|_| syntax(l0, c0, "distance bound is too large"))?)
                    }
                    _ => Tok::Ident(s),
                };
                push(&mut out, tok);
            }
            other => return Err(syntax(line, col, format!("unexpected character {other:?}"))),
        }
    }
    out.push(Token { tok: Tok::End, line, column: col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>) -> Error {
        let t = &self.toks[self.pos];
        syntax(t.line, t.column, message)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            Err(self.error(format!("expected {what}, found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            t => Err(self.error(format!("expected a variable, found {}", describe(&t)))),
        }
    }

    fn iff(&mut self) -> Result<Formula> {
        let mut f = self.implication()?;
        while *self.peek() == Tok::Iff {
            self.next();
            let g = self.implication()?;
            f = Formula::iff(f, g);
        }
        Ok(f)
    }

    fn implication(&mut self) -> Result<Formula> {
        let f = self.disjunction()?;
        if *self.peek() == Tok::Implies {
            self.next();
            let g = self.implication()?;
            return Ok(Formula::implies(f, g));
        }
        Ok(f)
    }

    fn disjunction(&mut self) -> Result<Formula> {
        let mut items = alloc::vec![self.conjunction()?];
        while *self.peek() == Tok::Or {
            self.next();
            items.push(self.conjunction()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { Formula::Or(items) })
    }

    fn conjunction(&mut self) -> Result<Formula> {
        let mut items = alloc::vec![self.unary()?];
        while *self.peek() == Tok::And {
            self.next();
            items.push(self.unary()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { Formula::And(items) })
    }

    fn unary(&mut self) -> Result<Formula> {
        match self.peek().clone() {
            Tok::Not => {
                self.next();
                Ok(Formula::not(self.unary()?))
            }
            Tok::Exists | Tok::Forall => self.quantifier(),
            Tok::LParen => {
                self.next();
                let f = self.iff()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(f)
            }
            Tok::True => {
                self.next();
                Ok(Formula::True)
            }
            Tok::False => {
                self.next();
                Ok(Formula::False)
            }
            Tok::Dist(k) => {
                self.next();
                self.expect(Tok::LParen, "'('")?;
                let a = self.ident()?;
                self.expect(Tok::Comma, "','")?;
                let b = self.ident()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(Formula::Dist(k, var(&a), var(&b)))
            }
            Tok::Ident(name) => {
                self.next();
                if *self.peek() == Tok::LParen {
                    self.next();
                    let mut args = alloc::vec![var(&self.ident()?)];
                    while *self.peek() == Tok::Comma {
                        self.next();
                        args.push(var(&self.ident()?));
                    }
                    self.expect(Tok::RParen, "')'")?;
                    Ok(Formula::Rel(var(&name), args))
                } else {
                    self.expect(Tok::Eq, "'=' or '('")?;
                    let b = self.ident()?;
                    Ok(Formula::Eq(var(&name), var(&b)))
                }
            }
            t => Err(self.error(format!("expected a formula, found {}", describe(&t)))),
        }
    }

    fn quantifier(&mut self) -> Result<Formula> {
        let q = if self.next().tok == Tok::Exists { Quant::Exists } else { Quant::Forall };
        let mode = match (q, self.peek().clone()) {
            (Quant::Exists, Tok::Ge) | (Quant::Exists, Tok::Eq) => {
                let at_least = *self.peek() == Tok::Ge;
                self.next();
                let k = match self.peek().clone() {
                    Tok::Num(k) => k,
                    t => return Err(self.error(format!("expected a count, found {}", describe(&t)))),
                };
                if at_least && k == 0 {
                    return Err(self.error("counting threshold must be at least 1"));
                }
                self.next();
                Some(if at_least { CountMode::AtLeast(k) } else { CountMode::Exactly(k) })
            }
            _ => None,
        };
        let v = var(&self.ident()?);
        self.expect(Tok::Dot, "'.'")?;
        let body = Box::new(self.iff()?);
        Ok(match mode {
            Some(m) => Formula::Count(m, v, body),
            None => Formula::Quant(q, v, body),
        })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("identifier {s}"),
        Tok::Num(n) => format!("number {n}"),
        Tok::End => "end of input".to_string(),
        Tok::Dist(k) => format!("dist<={k}"),
        other => format!("{other:?}").to_lowercase(),
    }
}

/// Parses a formula in the concrete grammar.
pub fn parse_formula(text: &str) -> Result<Formula> {
    let mut p = Parser { toks: tokenize(text)?, pos: 0 };
    let f = p.iff()?;
    if *p.peek() != Tok::End {
        return Err(p.error(format!("unexpected {}", describe(p.peek()))));
    }
    Ok(f)
}

impl core::str::FromStr for Formula {
    type Err = Error;
    fn from_str(s: &str) -> Result<Formula> {
        parse_formula(s)
    }
}

/// Parses a signature written as `E/2 L/1` (whitespace or commas between
/// symbols).
pub fn parse_signature(text: &str) -> Result<Signature> {
    let mut rels = Vec::new();
    for item in text.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()) {
        let (name, arity) = item
            .split_once('/')
            .ok_or_else(|| Error::Input(format!("relation symbol {item} lacks an arity (write {item}/2)")))?;
        let arity: usize = arity.parse().map_err(|_| Error::Input(format!("bad arity in {item}")))?;
        rels.push((name.to_string(), arity));
    }
    Signature::new(rels)
}

/// Parses one structure in the line format printed by `Structure`'s
/// `Display`: `signature:`, `universe:`, one line per relation with
/// parenthesised tuples, and optional `constants: c=0`. `#` starts a comment.
pub fn parse_structure(text: &str) -> Result<Structure> {
    let mut sig = None;
    let mut size = None;
    let mut facts: Vec<(usize, String, Vec<usize>)> = Vec::new();
    let mut consts: Vec<(String, usize)> = Vec::new();
    let mut mentioned: Vec<(usize, String)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let (key, rest) = body.split_once(':').ok_or_else(|| syntax(line, 1, "expected `key: value`"))?;
        let key = key.trim();
        let column = body.find(':').unwrap_or(0) + 2;
        match key {
            "signature" => {
                if sig.is_some() {
                    return Err(syntax(line, 1, "signature given twice"));
                }
                sig = Some(parse_signature(rest).map_err(|e| syntax(line, column, e.to_string()))?);
            }
            "universe" => {
                let n: usize = rest.trim().parse().map_err(|_| syntax(line, column, "universe size must be a number"))?;
                size = Some(n);
            }
            "constants" => {
                for item in rest.split_whitespace() {
                    let (c, e) = item.split_once('=').ok_or_else(|| syntax(line, column, format!("expected name=element, found {item}")))?;
                    let e = e.parse().map_err(|_| syntax(line, column, format!("bad element in {item}")))?;
                    consts.push((c.to_string(), e));
                }
            }
            rel => {
                mentioned.push((line, rel.to_string()));
                let mut rest = rest.trim();
                while !rest.is_empty() {
                    let open = rest.strip_prefix('(').ok_or_else(|| syntax(line, column, format!("expected `(` in the tuples of {rel}")))?;
                    let close = open.find(')').ok_or_else(|| syntax(line, column, "unclosed tuple"))?;
                    let t = open[..close]
                        .split(',')
                        .map(|x| x.trim().parse::<usize>())
                        .collect::<core::result::Result<Vec<_>, _>>()
                        .map_err(|_| syntax(line, column, format!("bad tuple ({})", &open[..close])))?;
                    facts.push((line, rel.to_string(), t));
                    rest = open[close + 1..].trim_start();
                }
            }
        }
    }
    let sig = sig.ok_or_else(|| Error::Input("missing `signature:` line".to_string()))?;
    let size = size.ok_or_else(|| Error::Input("missing `universe:` line".to_string()))?;
    let sig = sig.with_constants(consts.iter().map(|c| c.0.clone()))?;
    if let Some((line, rel)) = mentioned.iter().find(|(_, r)| sig.index_of(r).is_none()) {
        return Err(syntax(*line, 1, format!("unknown relation {rel}")));
    }
    let mut b = StructureBuilder::new(Arc::new(sig), size);
    for (line, rel, t) in facts {
        b.add(&rel, &t).map_err(|e| syntax(line, 1, e.to_string()))?;
    }
    for (c, e) in consts {
        b.constant(&c, e)?;
    }
    b.build()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::formula::Var;
    use proptest::prelude::*;

    #[test]
    fn basic_forms() {
        let x = var("x");
        let y = var("y");
        assert_eq!(parse_formula("~(x = y)").unwrap(), Formula::neq(&x, &y));
        assert_eq!(
            parse_formula("exists>=2 y. L(y)").unwrap(),
            Formula::count(CountMode::AtLeast(2), &y, Formula::rel("L", &[&y]))
        );
        assert_eq!(parse_formula("dist<=3(x,y)").unwrap(), Formula::dist(3, &x, &y));
    }

    #[test]
    fn precedence() {
        let f = parse_formula("A(x) | B(x) & C(x) -> D(x) -> E(x) <-> F(x)").unwrap();
        assert_eq!(f.to_string(), "(((A(x) | (B(x) & C(x))) -> (D(x) -> E(x))) <-> F(x))");
        let g = parse_formula("exists x. L(x) & M(x)").unwrap();
        assert!(matches!(g, Formula::Quant(..)));
    }

    #[test]
    fn errors_carry_positions() {
        match parse_formula("exists x.\n  (L(x) & )") {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 11)),
            other => panic!("{other:?}"),
        }
        assert!(parse_formula("exists>=0 y. L(y)").is_err());
        assert!(parse_formula("L(x) L(y)").is_err());
        assert!(parse_formula("x $ y").is_err());
    }

    pub(crate) fn arb_formula(depth: u32) -> impl Strategy<Value = Formula> {
        let v = prop_oneof![Just("x"), Just("y"), Just("z"), Just("u1")].prop_map(var);
        let leaf = prop_oneof![
            Just(Formula::True),
            Just(Formula::False),
            (v.clone(), v.clone()).prop_map(|(a, b)| Formula::Eq(a, b)),
            (v.clone(), v.clone()).prop_map(|(a, b)| Formula::Rel(var("E"), alloc::vec![a, b])),
            v.clone().prop_map(|a| Formula::Rel(var("L"), alloc::vec![a])),
            (0usize..5, v.clone(), v.clone()).prop_map(|(k, a, b)| Formula::Dist(k, a, b)),
        ];
        leaf.prop_recursive(depth, 48, 3, move |inner| {
            let v: BoxedStrategy<Var> = prop_oneof![Just("x"), Just("y"), Just("z")].prop_map(var).boxed();
            prop_oneof![
                inner.clone().prop_map(Formula::not),
                proptest::collection::vec(inner.clone(), 2..4).prop_map(Formula::And),
                proptest::collection::vec(inner.clone(), 2..4).prop_map(Formula::Or),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::iff(a, b)),
                (any::<bool>(), v.clone(), inner.clone())
                    .prop_map(|(e, x, f)| Formula::Quant(if e { Quant::Exists } else { Quant::Forall }, x, Box::new(f))),
                (1usize..4, any::<bool>(), v.clone(), inner.clone()).prop_map(|(k, ex, x, f)| {
                    Formula::count(if ex { CountMode::Exactly(k) } else { CountMode::AtLeast(k) }, &x, f)
                }),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn print_parse_round_trip(f in arb_formula(4)) {
            let text = f.to_string();
            let g = parse_formula(&text).unwrap();
            prop_assert_eq!(&g, &f, "{}", text);
            prop_assert_eq!(g.to_string(), text);
        }
    }

    #[test]
    fn structure_text() {
        let a = parse_structure("# a path\nsignature: E/2 L/1\nuniverse: 3\nE: (0,1) (1, 2)\nL: (2)\n").unwrap();
        assert_eq!(a.size(), 3);
        assert_eq!(a.tuples(0).len(), 2);
        assert_eq!(parse_structure(&a.to_string()).unwrap(), a);
        let c = parse_structure("signature: E/2\nuniverse: 2\nE:\nconstants: c1=1\n").unwrap();
        assert_eq!(c.constant("c1"), Some(1));
        assert!(matches!(parse_structure("signature: E/2\nuniverse: 2\nF: (0,1)\n"), Err(Error::Syntax { line: 3, .. })));
        assert!(parse_structure("signature: E/2\nuniverse: 2\nE: (0,5)\n").is_err());
        assert!(parse_structure("signature: E/2\n").is_err());
        assert!(parse_signature("E").is_err());
        assert_eq!(parse_signature("E/2, L/1").unwrap().to_string(), "E/2 L/1");
    }

    proptest! {
        #[test]
        fn structure_round_trip(n in 1usize..6, edges in proptest::collection::vec((0usize..6, 0usize..6), 0..10), labels in proptest::collection::vec(0usize..6, 0..4)) {
            let sig = Arc::new(parse_signature("E/2 L/1").unwrap());
            let mut b = StructureBuilder::new(sig, n);
            for (x, y) in edges {
                b.add("E", &[x % n, y % n]).unwrap();
            }
            for l in labels {
                b.add("L", &[l % n]).unwrap();
            }
            let a = b.build().unwrap();
            prop_assert_eq!(parse_structure(&a.to_string()).unwrap(), a);
        }
    }

}
