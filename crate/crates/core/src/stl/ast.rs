use std::fmt;

use serde::{Deserialize, Serialize};

use crate::trace::TimeInterval;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Arg {
    Name(String),
    Number(f64),
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Name(n) => f.write_str(n),
            Arg::Number(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
        }
    }

    pub fn is_strict(self) -> bool {
        matches!(self, CmpOp::Gt | CmpOp::Lt)
    }

    /// Margin of `value op threshold`, positive when it holds.
    pub fn margin(self, value: f64, threshold: f64) -> f64 {
        match self {
            CmpOp::Gt | CmpOp::Ge => value - threshold,
            CmpOp::Lt | CmpOp::Le => threshold - value,
        }
    }
}

/// Comparison of a real-valued term against a constant, e.g. `v(SV) > 5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub op: CmpOp,
    pub threshold: f64,
}

/// An atomic predicate `name(args)`, or a comparison `name(args) op c` when
/// `cmp` is set and `name` refers to a term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub name: String,
    pub args: Vec<Arg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cmp: Option<Comparison>,
}

impl Atom {
    pub fn new(name: impl Into<String>, args: Vec<Arg>) -> Self {
        Self {
            name: name.into(),
            args,
            cmp: None,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
        }
        if let Some(c) = &self.cmp {
            write!(f, " {} {}", c.op.symbol(), c.threshold)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    Not {
        arg: Box<Formula>,
    },
    And {
        lhs: Box<Formula>,
        rhs: Box<Formula>,
    },
    Or {
        lhs: Box<Formula>,
        rhs: Box<Formula>,
    },
    Until {
        interval: TimeInterval,
        lhs: Box<Formula>,
        rhs: Box<Formula>,
    },
    Globally {
        interval: TimeInterval,
        arg: Box<Formula>,
    },
    Finally {
        interval: TimeInterval,
        arg: Box<Formula>,
    },
}

/// `name(arg, ...)` where arguments are names.
pub fn atom(name: &str, args: &[&str]) -> Formula {
    Formula::Atom(Atom::new(
        name,
        args.iter().map(|a| Arg::Name((*a).to_string())).collect(),
    ))
}

impl Formula {
    pub fn not(arg: Formula) -> Formula {
        Formula::Not { arg: Box::new(arg) }
    }

    pub fn and(lhs: Formula, rhs: Formula) -> Formula {
        Formula::And {
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn or(lhs: Formula, rhs: Formula) -> Formula {
        Formula::Or {
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    /// Left-nested conjunction; `True` when empty.
    pub fn and_all(items: impl IntoIterator<Item = Formula>) -> Formula {
        items
            .into_iter()
            .reduce(Formula::and)
            .unwrap_or(Formula::True)
    }

    /// Left-nested disjunction; `False` when empty.
    pub fn or_all(items: impl IntoIterator<Item = Formula>) -> Formula {
        items
            .into_iter()
            .reduce(Formula::or)
            .unwrap_or(Formula::False)
    }

    pub fn until(interval: TimeInterval, lhs: Formula, rhs: Formula) -> Formula {
        Formula::Until {
            interval,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn globally(interval: TimeInterval, arg: Formula) -> Formula {
        Formula::Globally {
            interval,
            arg: Box::new(arg),
        }
    }

    pub fn finally(interval: TimeInterval, arg: Formula) -> Formula {
        Formula::Finally {
            interval,
            arg: Box::new(arg),
        }
    }

    /// `φ ⇒ ψ` as `¬φ ∨ ψ`.
    pub fn implies(lhs: Formula, rhs: Formula) -> Formula {
        Formula::or(Formula::not(lhs), rhs)
    }

    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => vec![],
            Formula::Not { arg } | Formula::Globally { arg, .. } | Formula::Finally { arg, .. } => {
                vec![arg]
            }
            Formula::And { lhs, rhs } | Formula::Or { lhs, rhs } | Formula::Until { lhs, rhs, .. } => {
                vec![lhs, rhs]
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Formula::True => "true",
            Formula::False => "false",
            Formula::Atom(_) => "atom",
            Formula::Not { .. } => "not",
            Formula::And { .. } => "and",
            Formula::Or { .. } => "or",
            Formula::Until { .. } => "until",
            Formula::Globally { .. } => "globally",
            Formula::Finally { .. } => "finally",
        }
    }

    pub fn interval(&self) -> Option<TimeInterval> {
        match self {
            Formula::Until { interval, .. }
            | Formula::Globally { interval, .. }
            | Formula::Finally { interval, .. } => Some(*interval),
            _ => None,
        }
    }

    /// Subformulas in pre-order; the index of a node is its stable id.
    pub fn preorder(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(f) = stack.pop() {
            out.push(f);
            stack.extend(f.children().into_iter().rev());
        }
        out
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        self.preorder()
            .into_iter()
            .filter_map(|f| match f {
                Formula::Atom(a) => Some(a),
                _ => None,
            })
            .collect()
    }

    fn is_binary(&self) -> bool {
        matches!(self, Formula::And { .. } | Formula::Or { .. } | Formula::Until { .. })
    }
}

fn write_interval(f: &mut fmt::Formatter<'_>, iv: &TimeInterval) -> fmt::Result {
    if iv.is_unbounded() {
        Ok(())
    } else if iv.hi.is_infinite() {
        write!(f, "[{},inf]", iv.lo)
    } else {
        write!(f, "[{},{}]", iv.lo, iv.hi)
    }
}

struct Wrapped<'a>(&'a Formula, bool);

impl fmt::Display for Wrapped<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Canonical concrete syntax; `parse(&f.to_string())` reproduces `f`.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not { arg } => {
                // a comparison atom under `!` reads ambiguously without parentheses
                let wrap = arg.is_binary() || matches!(&**arg, Formula::Atom(a) if a.cmp.is_some());
                write!(f, "!{}", Wrapped(arg, wrap))
            }
            Formula::And { lhs, rhs } => {
                let lwrap = lhs.is_binary() && !matches!(&**lhs, Formula::And { .. });
                write!(f, "{} & {}", Wrapped(lhs, lwrap), Wrapped(rhs, rhs.is_binary()))
            }
            Formula::Or { lhs, rhs } => {
                let lwrap = lhs.is_binary() && !matches!(&**lhs, Formula::Or { .. });
                write!(f, "{} | {}", Wrapped(lhs, lwrap), Wrapped(rhs, rhs.is_binary()))
            }
            Formula::Until { interval, lhs, rhs } => {
                write!(f, "{} U", Wrapped(lhs, lhs.is_binary()))?;
                write_interval(f, interval)?;
                write!(f, " {}", Wrapped(rhs, rhs.is_binary()))
            }
            Formula::Globally { interval, arg } => {
                f.write_str("G")?;
                write_interval(f, interval)?;
                write!(f, " {}", Wrapped(arg, arg.is_binary()))
            }
            Formula::Finally { interval, arg } => {
                f.write_str("F")?;
                write_interval(f, interval)?;
                write!(f, " {}", Wrapped(arg, arg.is_binary()))
            }
        }
    }
}
