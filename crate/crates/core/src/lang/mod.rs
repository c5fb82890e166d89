//! The mission-rule language: typed source channels, definite rules with
//! comparison atoms, and a single exported target.
//!
//! ```text
//! over(park) <- source("/over/park", Probability).
//! distance(primary) <- source("/distance/primary", Density).
//! permitted if over(park).
//! permitted if distance(primary) < 35.
//! landscape if permitted.
//! landscape -> target("/landscape").
//! ```
//!
//! Atom arguments are opaque constants; grounding over locations happens in
//! the field layer, so the language never sees a location variable.

mod parser;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

pub use parser::parse_program;
pub use validate::{validate, ValidationReport, Violation};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LangError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("channel token {token:?} declared more than once (line {line})")]
    DuplicateChannel { token: String, line: usize },
    #[error("atom {atom} is bound to more than one source (line {line})")]
    DuplicateSource { atom: String, line: usize },
    #[error("more than one target declaration (line {line})")]
    MultipleTargets { line: usize },
    #[error("program declares no target")]
    MissingTarget,
    #[error("atom {atom} at {line}:{column} is neither a source nor the head of any rule")]
    UnknownAtom {
        atom: String,
        line: usize,
        column: usize,
    },
}

/// A ground atom such as `over(park)` or `landscape`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub name: String,
    pub arg: Option<String>,
}

impl Atom {
    pub fn new(name: impl Into<String>) -> Self {
        Atom {
            name: name.into(),
            arg: None,
        }
    }

    pub fn with_arg(name: impl Into<String>, arg: impl Into<String>) -> Self {
        Atom {
            name: name.into(),
            arg: Some(arg.into()),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.arg {
            Some(arg) => write!(f, "{}({})", self.name, arg),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Probability,
    Density,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Probability => "Probability",
            Domain::Density => "Density",
        })
    }
}

/// `atom <- source("token", Domain).`
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDecl {
    pub atom: Atom,
    pub token: String,
    pub domain: Domain,
}

/// `atom -> target("token").`
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDecl {
    pub atom: Atom,
    pub token: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Gt,
    Le,
    Ge,
}

impl CmpOp {
    /// True for `<` and `<=`. Strict and weak forms are identified: ties have
    /// measure zero under a continuous density.
    pub fn is_below(self) -> bool {
        matches!(self, CmpOp::Lt | CmpOp::Le)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Atom(Atom),
    Compare { atom: Atom, op: CmpOp, value: f64 },
}

impl Literal {
    pub fn atom(&self) -> &Atom {
        match self {
            Literal::Atom(atom) | Literal::Compare { atom, .. } => atom,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Atom(atom) => write!(f, "{atom}"),
            Literal::Compare { atom, op, value } => write!(f, "{atom} {} {value}", op.symbol()),
        }
    }
}

/// `head if b1 and b2 ... .` Several rules sharing a head form a disjunction.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Literal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomKind {
    SourceProbability,
    SourceDensity,
    Derived,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub sources: Vec<ChannelDecl>,
    pub rules: Vec<Rule>,
    pub target: TargetDecl,
}

impl Program {
    pub fn source(&self, atom: &Atom) -> Option<&ChannelDecl> {
        self.sources.iter().find(|s| &s.atom == atom)
    }

    pub fn channel(&self, token: &str) -> Option<&ChannelDecl> {
        self.sources.iter().find(|s| s.token == token)
    }

    /// Kind of an atom, or `None` if it is neither declared nor defined.
    pub fn atom_kind(&self, atom: &Atom) -> Option<AtomKind> {
        if let Some(decl) = self.source(atom) {
            return Some(match decl.domain {
                Domain::Probability => AtomKind::SourceProbability,
                Domain::Density => AtomKind::SourceDensity,
            });
        }
        self.rules
            .iter()
            .any(|r| &r.head == atom)
            .then_some(AtomKind::Derived)
    }

    /// Distinct derived heads in first-definition order.
    pub fn derived_heads(&self) -> Vec<&Atom> {
        let mut heads: Vec<&Atom> = Vec::new();
        for rule in &self.rules {
            if !heads.contains(&&rule.head) {
                heads.push(&rule.head);
            }
        }
        heads
    }

    pub fn rules_for<'a>(&'a self, head: &'a Atom) -> impl Iterator<Item = &'a Rule> + 'a {
        self.rules.iter().filter(move |r| &r.head == head)
    }
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.sources {
            write!(f, "{} <- source(", s.atom)?;
            write_quoted(f, &s.token)?;
            writeln!(f, ", {}).", s.domain)?;
        }
        for rule in &self.rules {
            write!(f, "{} if ", rule.head)?;
            for (i, lit) in rule.body.iter().enumerate() {
                if i > 0 {
                    f.write_str(" and ")?;
                }
                write!(f, "{lit}")?;
            }
            writeln!(f, ".")?;
        }
        write!(f, "{} -> target(", self.target.atom)?;
        write_quoted(f, &self.target.token)?;
        writeln!(f, ").")
    }
}

/// Ascending, duplicate-free comparison constants per Density channel token.
/// Density channels without comparisons map to an empty list.
pub fn collect_thresholds(program: &Program) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = program
        .sources
        .iter()
        .filter(|s| s.domain == Domain::Density)
        .map(|s| (s.token.clone(), Vec::new()))
        .collect();
    for rule in &program.rules {
        for lit in &rule.body {
            if let Literal::Compare { atom, value, .. } = lit {
                if let Some(decl) = program.source(atom) {
                    if let Some(cuts) = out.get_mut(&decl.token) {
                        cuts.push(*value);
                    }
                }
            }
        }
    }
    for cuts in out.values_mut() {
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_are_sorted_and_deduplicated() {
        let p = parse_program(
            r#"d <- source("/d", Density).
               h if d > 5.
               h if d < 5.
               h if d < 2.
               h -> target("/t")."#,
        )
        .unwrap();
        assert_eq!(collect_thresholds(&p)["/d"], vec![2.0, 5.0]);
    }

    #[test]
    fn single_comparison_threshold() {
        let p =
            parse_program(r#"d <- source("/d", Density). h if d < 5. h -> target("/t")."#).unwrap();
        assert_eq!(collect_thresholds(&p)["/d"], vec![5.0]);
    }

    #[test]
    fn density_without_comparisons_maps_to_empty() {
        let p = parse_program(
            r#"d <- source("/d", Density). a <- source("/a", Probability).
               a -> target("/t")."#,
        )
        .unwrap();
        let cuts = collect_thresholds(&p);
        assert_eq!(cuts.len(), 1);
        assert!(cuts["/d"].is_empty());
    }

    #[test]
    fn atom_kinds() {
        let p = parse_program(
            r#"d <- source("/d", Density). a <- source("/a", Probability).
               h if d < 5 and a. h -> target("/t")."#,
        )
        .unwrap();
        assert_eq!(p.atom_kind(&Atom::new("d")), Some(AtomKind::SourceDensity));
        assert_eq!(
            p.atom_kind(&Atom::new("a")),
            Some(AtomKind::SourceProbability)
        );
        assert_eq!(p.atom_kind(&Atom::new("h")), Some(AtomKind::Derived));
        assert_eq!(p.atom_kind(&Atom::new("zz")), None);
    }
}
