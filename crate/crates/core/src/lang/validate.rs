use std::collections::{HashMap, HashSet};
use std::fmt;

use super::{Atom, AtomKind, Domain, Literal, Program};

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Derived atoms that depend on themselves, listed along the cycle.
    CyclicDefinition {
        cycle: Vec<String>,
    },
    TypeMismatch {
        atom: String,
        message: String,
    },
    UnknownAtom {
        atom: String,
    },
    UnreachableTarget {
        atom: String,
    },
    /// A channel atom is extensional and may not also be a rule head.
    SourceAsHead {
        atom: String,
    },
    NonFiniteConstant {
        atom: String,
    },
    DuplicateChannel {
        token: String,
    },
    EmptyBody {
        head: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CyclicDefinition { cycle } => {
                write!(f, "cyclic definition: {}", cycle.join(" -> "))
            }
            Violation::TypeMismatch { atom, message } => {
                write!(f, "type mismatch on {atom}: {message}")
            }
            Violation::UnknownAtom { atom } => write!(f, "unknown atom {atom}"),
            Violation::UnreachableTarget { atom } => write!(f, "target {atom} is never defined"),
            Violation::SourceAsHead { atom } => write!(f, "source atom {atom} used as a rule head"),
            Violation::NonFiniteConstant { atom } => {
                write!(f, "non-finite constant compared with {atom}")
            }
            Violation::DuplicateChannel { token } => write!(f, "duplicate channel token {token:?}"),
            Violation::EmptyBody { head } => write!(f, "rule for {head} has an empty body"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every program invariant and reports all violations found.
pub fn validate(program: &Program) -> ValidationReport {
    let mut violations = Vec::new();

    let mut tokens = HashSet::new();
    for s in &program.sources {
        if !tokens.insert(s.token.as_str()) {
            violations.push(Violation::DuplicateChannel {
                token: s.token.clone(),
            });
        }
    }

    for rule in &program.rules {
        if program.source(&rule.head).is_some() {
            violations.push(Violation::SourceAsHead {
                atom: rule.head.to_string(),
            });
        }
        if rule.body.is_empty() {
            violations.push(Violation::EmptyBody {
                head: rule.head.to_string(),
            });
        }
        for lit in &rule.body {
            check_literal(program, lit, &mut violations);
        }
    }

    match program.atom_kind(&program.target.atom) {
        None => violations.push(Violation::UnreachableTarget {
            atom: program.target.atom.to_string(),
        }),
        Some(AtomKind::SourceDensity) => violations.push(Violation::TypeMismatch {
            atom: program.target.atom.to_string(),
            message: "a Density channel cannot be exported as a probability target".into(),
        }),
        _ => {}
    }

    if let Some(cycle) = find_cycle(program) {
        violations.push(Violation::CyclicDefinition {
            cycle: cycle.iter().map(|a| a.to_string()).collect(),
        });
    }

    ValidationReport { violations }
}

fn check_literal(program: &Program, lit: &Literal, out: &mut Vec<Violation>) {
    let atom = lit.atom();
    let kind = program.atom_kind(atom);
    match (lit, kind) {
        (_, None) => out.push(Violation::UnknownAtom {
            atom: atom.to_string(),
        }),
        (Literal::Compare { value, .. }, Some(kind)) => {
            if !value.is_finite() {
                out.push(Violation::NonFiniteConstant {
                    atom: atom.to_string(),
                });
            }
            if kind != AtomKind::SourceDensity {
                out.push(Violation::TypeMismatch {
                    atom: atom.to_string(),
                    message: format!("comparisons require a {} channel", Domain::Density),
                });
            }
        }
        (Literal::Atom(_), Some(AtomKind::SourceDensity)) => out.push(Violation::TypeMismatch {
            atom: atom.to_string(),
            message: "a Density channel can only appear inside a comparison".into(),
        }),
        (Literal::Atom(_), Some(_)) => {}
    }
}

/// Returns a cycle in the head-dependency graph, if any.
fn find_cycle(program: &Program) -> Option<Vec<&Atom>> {
    let mut edges: HashMap<&Atom, Vec<&Atom>> = HashMap::new();
    for rule in &program.rules {
        let deps = edges.entry(&rule.head).or_default();
        for lit in &rule.body {
            if let Literal::Atom(a) = lit {
                if program.rules.iter().any(|r| &r.head == a) {
                    deps.push(a);
                }
            }
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: HashMap<&Atom, Mark> = HashMap::new();
    let mut stack: Vec<&Atom> = Vec::new();

    fn visit<'a>(
        atom: &'a Atom,
        edges: &HashMap<&'a Atom, Vec<&'a Atom>>,
        marks: &mut HashMap<&'a Atom, Mark>,
        stack: &mut Vec<&'a Atom>,
    ) -> Option<Vec<&'a Atom>> {
        match marks.get(atom) {
            Some(Mark::Done) => return None,
            Some(Mark::Open) => {
                let start = stack.iter().position(|a| *a == atom).unwrap_or(0);
                let mut cycle = stack[start..].to_vec();
                cycle.push(atom);
                return Some(cycle);
            }
            None => {}
        }
        marks.insert(atom, Mark::Open);
        stack.push(atom);
        for dep in edges.get(atom).into_iter().flatten() {
            if let Some(c) = visit(dep, edges, marks, stack) {
                return Some(c);
            }
        }
        stack.pop();
        marks.insert(atom, Mark::Done);
        None
    }

    for head in program.derived_heads() {
        if let Some(c) = visit(head, &edges, &mut marks, &mut stack) {
            return Some(c);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_program, CmpOp, Rule};

    #[test]
    fn self_loop_is_cyclic() {
        let p =
            parse_program(r#"b <- source("/b", Probability). a if b. a if a. a -> target("/t")."#)
                .unwrap();
        let report = validate(&p);
        assert!(matches!(
            report.violations.as_slice(),
            [Violation::CyclicDefinition { cycle }] if cycle == &["a", "a"]
        ));
    }

    #[test]
    fn comparison_on_probability_channel() {
        let p = parse_program(
            r#"over(park) <- source("/over/park", Probability).
               ok if over(park) < 3.
               ok -> target("/t")."#,
        )
        .unwrap();
        let report = validate(&p);
        assert!(matches!(
            report.violations.as_slice(),
            [Violation::TypeMismatch { .. }]
        ));
    }

    #[test]
    fn bare_density_atom_rejected() {
        let p =
            parse_program(r#"d <- source("/d", Density). ok if d. ok -> target("/t")."#).unwrap();
        assert!(matches!(
            validate(&p).violations.as_slice(),
            [Violation::TypeMismatch { .. }]
        ));
    }

    #[test]
    fn source_as_head_rejected() {
        let mut p = parse_program(
            r#"a <- source("/a", Probability). b <- source("/b", Probability). a -> target("/t")."#,
        )
        .unwrap();
        p.rules.push(Rule {
            head: Atom::new("a"),
            body: vec![Literal::Atom(Atom::new("b"))],
        });
        assert!(validate(&p)
            .violations
            .contains(&Violation::SourceAsHead { atom: "a".into() }));
    }

    #[test]
    fn undefined_target_is_unreachable() {
        let mut p = parse_program(r#"a <- source("/a", Probability). a -> target("/t")."#).unwrap();
        p.target.atom = Atom::new("nowhere");
        assert_eq!(
            validate(&p).violations,
            vec![Violation::UnreachableTarget {
                atom: "nowhere".into()
            }]
        );
    }

    #[test]
    fn mutation_produces_report_entries() {
        let d = Atom::new("d");
        let mut p =
            parse_program(r#"d <- source("/d", Density). h if d < 3. h -> target("/t")."#).unwrap();
        assert!(validate(&p).is_ok());
        p.rules[0].body.push(Literal::Compare {
            atom: d,
            op: CmpOp::Gt,
            value: f64::NAN,
        });
        assert!(validate(&p)
            .violations
            .contains(&Violation::NonFiniteConstant { atom: "d".into() }));
    }
}
