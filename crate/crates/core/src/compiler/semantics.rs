//! Monotone Boolean functions over world-variable literals, hash-consed so
//! that equal functions share one id.

use std::collections::{BTreeMap, HashMap};

use super::{CompileError, VarId, VarOrigin, WorldVariable};
use crate::lang::{self, Atom, Domain, Literal, Program};

pub type ExprId = usize;

/// Set of values of one variable, as a bitmask. Arity is capped at 128.
pub type ValueSet = u128;

pub const MAX_ARITY: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    False,
    True,
    /// Holds iff the variable takes one of `values`.
    Lit {
        var: VarId,
        values: ValueSet,
    },
    And(Vec<ExprId>),
    Or(Vec<ExprId>),
}

#[derive(Debug, Clone, Default)]
pub struct ExprArena {
    nodes: Vec<Expr>,
    index: HashMap<Expr, ExprId>,
    arities: Vec<usize>,
}

pub const FALSE: ExprId = 0;
pub const TRUE: ExprId = 1;

impl ExprArena {
    /// `arities[var]` is the number of values of each world variable.
    pub fn new(arities: Vec<usize>) -> Self {
        let mut arena = ExprArena {
            arities,
            ..ExprArena::default()
        };
        arena.intern(Expr::False);
        arena.intern(Expr::True);
        arena
    }

    pub fn get(&self, id: ExprId) -> &Expr {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn intern(&mut self, e: Expr) -> ExprId {
        if let Some(&id) = self.index.get(&e) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(e.clone());
        self.index.insert(e, id);
        id
    }

    pub fn lit(&mut self, var: VarId, values: ValueSet) -> ExprId {
        let full = full_set(self.arities[var]);
        let values = values & full;
        if values == 0 {
            FALSE
        } else if values == full {
            TRUE
        } else {
            self.intern(Expr::Lit { var, values })
        }
    }

    pub fn and(&mut self, children: impl IntoIterator<Item = ExprId>) -> ExprId {
        self.junction(children, true)
    }

    pub fn or(&mut self, children: impl IntoIterator<Item = ExprId>) -> ExprId {
        self.junction(children, false)
    }

    /// Canonical And/Or: flattened, unit-free, literals on one variable merged,
    /// children sorted and deduplicated.
    fn junction(&mut self, children: impl IntoIterator<Item = ExprId>, is_and: bool) -> ExprId {
        let (unit, zero) = if is_and { (TRUE, FALSE) } else { (FALSE, TRUE) };
        let mut flat = Vec::new();
        let mut lits: BTreeMap<VarId, ValueSet> = BTreeMap::new();
        let mut stack: Vec<ExprId> = children.into_iter().collect();
        while let Some(c) = stack.pop() {
            if c == zero {
                return zero;
            }
            if c == unit {
                continue;
            }
            match &self.nodes[c] {
                Expr::And(cs) if is_and => stack.extend(cs.iter().copied()),
                Expr::Or(cs) if !is_and => stack.extend(cs.iter().copied()),
                Expr::Lit { var, values } => {
                    let entry = lits
                        .entry(*var)
                        .or_insert(if is_and { ValueSet::MAX } else { 0 });
                    if is_and {
                        *entry &= values;
                    } else {
                        *entry |= values;
                    }
                }
                _ => flat.push(c),
            }
        }
        for (var, values) in lits {
            let id = self.lit(var, values);
            if id == zero {
                return zero;
            }
            if id != unit {
                flat.push(id);
            }
        }
        flat.sort_unstable();
        flat.dedup();
        match flat.len() {
            0 => unit,
            1 => flat[0],
            _ => self.intern(if is_and {
                Expr::And(flat)
            } else {
                Expr::Or(flat)
            }),
        }
    }

    /// Restriction of `id` to `var = value`. `memo` must be specific to this
    /// (var, value) pair.
    pub fn cofactor(
        &mut self,
        id: ExprId,
        var: VarId,
        value: usize,
        memo: &mut HashMap<ExprId, ExprId>,
    ) -> ExprId {
        if let Some(&r) = memo.get(&id) {
            return r;
        }
        let r = match self.nodes[id].clone() {
            Expr::False | Expr::True => id,
            Expr::Lit { var: v, values } if v == var => {
                if values >> value & 1 == 1 {
                    TRUE
                } else {
                    FALSE
                }
            }
            Expr::Lit { .. } => id,
            Expr::And(cs) => {
                let cs: Vec<_> = cs
                    .iter()
                    .map(|&c| self.cofactor(c, var, value, memo))
                    .collect();
                self.and(cs)
            }
            Expr::Or(cs) => {
                let cs: Vec<_> = cs
                    .iter()
                    .map(|&c| self.cofactor(c, var, value, memo))
                    .collect();
                self.or(cs)
            }
        };
        memo.insert(id, r);
        r
    }

    /// Truth value under a total assignment (`assignment[var]` = value index).
    pub fn eval(&self, id: ExprId, assignment: &[usize]) -> bool {
        match &self.nodes[id] {
            Expr::False => false,
            Expr::True => true,
            Expr::Lit { var, values } => values >> assignment[*var] & 1 == 1,
            Expr::And(cs) => cs.iter().all(|&c| self.eval(c, assignment)),
            Expr::Or(cs) => cs.iter().any(|&c| self.eval(c, assignment)),
        }
    }
}

pub fn full_set(arity: usize) -> ValueSet {
    if arity >= MAX_ARITY {
        ValueSet::MAX
    } else {
        (1u128 << arity) - 1
    }
}

/// The Boolean meaning of a program: one world variable per source channel
/// and one function per derived atom.
#[derive(Debug, Clone)]
pub struct BooleanSemantics {
    pub arena: ExprArena,
    pub variables: Vec<WorldVariable>,
    pub atoms: BTreeMap<Atom, ExprId>,
    pub target: ExprId,
}

impl BooleanSemantics {
    pub fn variable_for_channel(&self, token: &str) -> Option<&WorldVariable> {
        self.variables.iter().find(|v| v.channel == token)
    }

    /// Function of the target under a total assignment.
    pub fn holds(&self, assignment: &[usize]) -> bool {
        self.arena.eval(self.target, assignment)
    }
}

/// Maps each derived atom to a monotone Boolean function of the world
/// variables. Comparisons on one Density channel share a single categorical
/// variable over the intervals cut by that channel's thresholds.
pub fn boolean_semantics(program: &Program) -> Result<BooleanSemantics, CompileError> {
    let report = lang::validate(program);
    if !report.is_ok() {
        return Err(CompileError::Invalid(report));
    }
    let thresholds = lang::collect_thresholds(program);

    let mut variables = Vec::with_capacity(program.sources.len());
    for (id, decl) in program.sources.iter().enumerate() {
        let origin = match decl.domain {
            Domain::Probability => VarOrigin::Bernoulli,
            Domain::Density => VarOrigin::Categorical {
                cuts: thresholds.get(&decl.token).cloned().unwrap_or_default(),
            },
        };
        let var = WorldVariable {
            id,
            channel: decl.token.clone(),
            atom: decl.atom.clone(),
            origin,
        };
        if var.arity() > MAX_ARITY {
            return Err(CompileError::TooManyThresholds {
                channel: decl.token.clone(),
                count: var.arity() - 1,
            });
        }
        variables.push(var);
    }

    let mut arena = ExprArena::new(variables.iter().map(WorldVariable::arity).collect());
    let mut atoms = BTreeMap::new();
    for decl in &program.sources {
        if decl.domain == Domain::Probability {
            let var = &variables[var_index(program, &decl.atom)];
            let id = arena.lit(var.id, 0b10);
            atoms.insert(decl.atom.clone(), id);
        }
    }

    fn expand(
        atom: &Atom,
        program: &Program,
        variables: &[WorldVariable],
        arena: &mut ExprArena,
        atoms: &mut BTreeMap<Atom, ExprId>,
    ) -> ExprId {
        if let Some(&id) = atoms.get(atom) {
            return id;
        }
        let mut disjuncts = Vec::new();
        for rule in program.rules_for(atom) {
            let mut conj = Vec::with_capacity(rule.body.len());
            for lit in &rule.body {
                let id = match lit {
                    Literal::Atom(a) => expand(a, program, variables, arena, atoms),
                    Literal::Compare { atom, op, value } => {
                        let var = &variables[var_index(program, atom)];
                        comparison(arena, var, op.is_below(), *value)
                    }
                };
                conj.push(id);
            }
            disjuncts.push(arena.and(conj));
        }
        let id = arena.or(disjuncts);
        atoms.insert(atom.clone(), id);
        id
    }

    for head in program.derived_heads() {
        expand(head, program, &variables, &mut arena, &mut atoms);
    }
    let target = expand(
        &program.target.atom,
        program,
        &variables,
        &mut arena,
        &mut atoms,
    );

    Ok(BooleanSemantics {
        arena,
        variables,
        atoms,
        target,
    })
}

fn var_index(program: &Program, atom: &Atom) -> VarId {
    program
        .sources
        .iter()
        .position(|s| &s.atom == atom)
        .expect("validated program references declared sources only")
}

/// `d < c` holds on the intervals entirely below `c`; `d > c` on the rest.
fn comparison(arena: &mut ExprArena, var: &WorldVariable, below: bool, value: f64) -> ExprId {
    let cuts = match &var.origin {
        VarOrigin::Categorical { cuts } => cuts,
        VarOrigin::Bernoulli => unreachable!("validated comparisons target Density channels"),
    };
    let k = cuts
        .iter()
        .position(|c| *c == value)
        .expect("threshold collected from the same program");
    // Intervals 0..=k lie below cut k (0-based), k+1.. lie above it.
    let below_set = full_set(k + 1);
    let values = if below { below_set } else { !below_set };
    arena.lit(var.id, values)
}
