//! Signal temporal logic: syntax, atoms and evaluation.

pub mod ast;
pub mod atoms;
pub mod eval;
pub mod exemplify;
pub mod parser;

pub use ast::{atom, Arg, Atom, CmpOp, Comparison, Formula};
pub use atoms::{
    register_channels, ArgKind, AtomEnv, AtomKind, AtomRegistry, AtomSignature, Bindings, EvalContext, EvalError,
    Resolved,
};
pub use eval::{bool_signal, eval_bool, eval_robust, eval_series, robust_signal, Boolean, Compiled, Robust, Semantics, SeriesReport, Signal};
pub use parser::{parse, ParseError};
