//! Dense-time evaluation of formulas over sampled traces.
//!
//! Every subformula is turned into a piecewise-constant signal: a value at
//! each breakpoint and a value on each open gap between consecutive
//! breakpoints. Under step-hold this representation is exact. Times are
//! handled as integer nanoseconds so that window arithmetic is exact.
//!
//! Windows running past the end of the trace are truncated to the trace
//! domain; `G` over an empty window is true, `F` and `U` are false.

use std::fmt::Debug;

use serde::Serialize;

use super::ast::Formula;
use super::atoms::{AtomEnv, EvalContext, EvalError, ResolvedAtom};
use crate::trace::{InterpolationMode, TimeInterval, TraceError, VehicleState};

type Tick = i64;

const TICKS_PER_SECOND: f64 = 1e9;

pub(crate) fn to_ticks(t: f64) -> Tick {
    if t == f64::INFINITY {
        Tick::MAX
    } else {
        (t * TICKS_PER_SECOND).round() as Tick
    }
}

fn to_secs(k: Tick) -> f64 {
    k as f64 / TICKS_PER_SECOND
}

pub trait Semantics {
    type V: Copy + Debug + PartialEq + Send + Sync + 'static;
    fn top() -> Self::V;
    fn bottom() -> Self::V;
    /// Value of an atom with `(margin, strict)`, or of an absent vehicle.
    fn atom(margin: Option<(f64, bool)>) -> Self::V;
    fn not(v: Self::V) -> Self::V;
    fn and(a: Self::V, b: Self::V) -> Self::V;
    fn or(a: Self::V, b: Self::V) -> Self::V;
}

/// Qualitative semantics.
pub enum Boolean {}

/// Quantitative semantics: positive iff satisfied, magnitude is the margin.
pub enum Robust {}

impl Semantics for Boolean {
    type V = bool;
    fn top() -> bool {
        true
    }
    fn bottom() -> bool {
        false
    }
    fn atom(margin: Option<(f64, bool)>) -> bool {
        match margin {
            Some((m, true)) => m > 0.0,
            Some((m, false)) => m >= 0.0,
            None => false,
        }
    }
    fn not(v: bool) -> bool {
        !v
    }
    fn and(a: bool, b: bool) -> bool {
        a && b
    }
    fn or(a: bool, b: bool) -> bool {
        a || b
    }
}

impl Semantics for Robust {
    type V = f64;
    fn top() -> f64 {
        f64::INFINITY
    }
    fn bottom() -> f64 {
        f64::NEG_INFINITY
    }
    fn atom(margin: Option<(f64, bool)>) -> f64 {
        margin.map_or(f64::NEG_INFINITY, |(m, _)| m)
    }
    fn not(v: f64) -> f64 {
        -v
    }
    fn and(a: f64, b: f64) -> f64 {
        a.min(b)
    }
    fn or(a: f64, b: f64) -> f64 {
        a.max(b)
    }
}

/// Piecewise-constant signal over a closed time domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<V> {
    times: Vec<Tick>,
    at: Vec<V>,
    // gap[i] holds on (times[i], times[i+1]); the last entry is unused
    gap: Vec<V>,
}

impl<V: Copy + PartialEq> Signal<V> {
    pub fn domain(&self) -> TimeInterval {
        TimeInterval {
            lo: to_secs(self.times[0]),
            hi: to_secs(*self.times.last().unwrap()),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.times.iter().map(|&k| to_secs(k)).collect()
    }

    /// Value at `t`, or `None` outside the domain.
    pub fn value_at(&self, t: f64) -> Option<V> {
        let k = to_ticks(t);
        if k < self.times[0] || k > *self.times.last().unwrap() {
            return None;
        }
        Some(self.at_tick(k))
    }

    /// `(breakpoint, value at it, value on the gap after it)`.
    pub fn pieces(&self) -> Vec<(f64, V, V)> {
        (0..self.times.len())
            .map(|i| (to_secs(self.times[i]), self.at[i], self.gap[i]))
            .collect()
    }

    fn at_tick(&self, k: Tick) -> V {
        let i = self.times.partition_point(|&x| x < k);
        if i < self.times.len() && self.times[i] == k {
            self.at[i]
        } else {
            self.gap[i - 1]
        }
    }

    fn gap_after(&self, k: Tick) -> V {
        let i = self.times.partition_point(|&x| x <= k);
        self.gap[i - 1]
    }

    fn map<W>(&self, f: impl Fn(V) -> W) -> Signal<W> {
        Signal {
            times: self.times.clone(),
            at: self.at.iter().map(|&v| f(v)).collect(),
            gap: self.gap.iter().map(|&v| f(v)).collect(),
        }
    }

    fn compress(mut self) -> Self {
        let n = self.times.len();
        if n <= 2 {
            return self;
        }
        let mut keep = vec![true; n];
        for i in 1..n - 1 {
            if self.at[i] == self.gap[i - 1] && self.gap[i] == self.gap[i - 1] {
                keep[i] = false;
            }
        }
        let mut j = 0;
        for i in 0..n {
            if keep[i] {
                self.times[j] = self.times[i];
                self.at[j] = self.at[i];
                self.gap[j] = self.gap[i];
                j += 1;
            }
        }
        self.times.truncate(j);
        self.at.truncate(j);
        self.gap.truncate(j);
        self
    }
}

impl Signal<bool> {
    /// Maximal intervals (as closures) on which the signal is true.
    pub fn true_intervals(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(Tick, Tick)> = Vec::new();
        let n = self.times.len();
        let mut push = |lo: Tick, hi: Tick| match out.last_mut() {
            Some(last) if last.1 >= lo => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        };
        for i in 0..n {
            if self.at[i] {
                push(self.times[i], self.times[i]);
            }
            if i + 1 < n && self.gap[i] {
                push(self.times[i], self.times[i + 1]);
            }
        }
        out.into_iter().map(|(a, b)| (to_secs(a), to_secs(b))).collect()
    }
}

fn zip<A: Copy + PartialEq, B: Copy + PartialEq>(x: &Signal<A>, y: &Signal<B>) -> Signal<(A, B)> {
    let mut times: Vec<Tick> = x.times.iter().chain(&y.times).copied().collect();
    times.sort_unstable();
    times.dedup();
    let at = times.iter().map(|&k| (x.at_tick(k), y.at_tick(k))).collect();
    let gap = times
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            if i + 1 < times.len() {
                (x.gap_after(k), y.gap_after(k))
            } else {
                (x.at_tick(k), y.at_tick(k))
            }
        })
        .collect();
    Signal { times, at, gap }
}

#[derive(Clone, Copy)]
struct Bound {
    t: Tick,
    // the bound lies an infinitesimal after `t`
    after: bool,
}

enum Piece<V> {
    Point(V),
    Open(V),
}

/// Feeds the pieces of `s` restricted to the window `[start, end]` to `f`,
/// in time order. Requires `start <= end` within the domain.
fn for_each_piece<V: Copy>(s: &Signal<V>, start: Bound, end: Bound, mut f: impl FnMut(Piece<V>)) {
    let n = s.times.len();
    let single = start.t == end.t && start.after == end.after;
    let k = s.times.partition_point(|&x| x <= start.t);
    let mut i;
    if !start.after && k > 0 && s.times[k - 1] == start.t {
        i = k - 1;
    } else {
        let g = s.gap[k - 1];
        f(Piece::Point(g));
        if single {
            return;
        }
        f(Piece::Open(g));
        i = k;
    }
    while i < n && s.times[i] <= end.t {
        f(Piece::Point(s.at[i]));
        if (s.times[i] < end.t || end.after) && i + 1 < n {
            f(Piece::Open(s.gap[i]));
        }
        i += 1;
    }
}

#[derive(Clone, Copy, Debug)]
struct Window {
    a: Tick,
    b: Option<Tick>,
}

impl Window {
    fn from_interval(iv: &TimeInterval) -> Self {
        Self {
            a: to_ticks(iv.lo),
            b: iv.hi.is_finite().then(|| to_ticks(iv.hi)),
        }
    }
}

fn temporal_grid(children: &[&[Tick]], w: Window, lo: Tick, hi: Tick) -> Vec<Tick> {
    let mut out = vec![lo, hi];
    for times in children {
        for &beta in *times {
            out.push(beta.saturating_sub(w.a));
            if let Some(b) = w.b {
                out.push(beta.saturating_sub(b));
            }
        }
    }
    out.retain(|&k| k >= lo && k <= hi);
    out.sort_unstable();
    out.dedup();
    out
}

/// Builds the signal of a temporal operator; `f` receives non-empty windows.
fn windowed<V: Copy>(grid: Vec<Tick>, w: Window, hi: Tick, empty: V, f: impl Fn(Bound, Bound) -> V) -> Signal<V> {
    let m = grid.len();
    let mut at = Vec::with_capacity(m);
    let mut gap = Vec::with_capacity(m);
    for j in 0..m {
        let t = grid[j];
        let start = t.saturating_add(w.a);
        let point = if start > hi {
            empty
        } else {
            let end = w.b.map_or(hi, |b| t.saturating_add(b).min(hi));
            f(Bound { t: start, after: false }, Bound { t: end, after: false })
        };
        at.push(point);
        if j + 1 == m {
            gap.push(point);
            continue;
        }
        gap.push(if start >= hi {
            empty
        } else {
            let end = match w.b {
                Some(b) if t.saturating_add(b) < hi => Bound {
                    t: t + b,
                    after: true,
                },
                _ => Bound { t: hi, after: false },
            };
            f(Bound { t: start, after: true }, end)
        });
    }
    Signal { times: grid, at, gap }
}

/// Folds `op` over `[start, hi]` for every start using suffix aggregates.
fn suffix_fold<V: Copy>(s: &Signal<V>, op: impl Fn(V, V) -> V) -> Vec<V> {
    let n = s.times.len();
    let mut suf = s.at.clone();
    for i in (0..n - 1).rev() {
        suf[i] = op(s.at[i], op(s.gap[i], suf[i + 1]));
    }
    suf
}

fn from_suffix<V: Copy, R: Copy>(s: &Signal<V>, suf: &[R], start: Bound, rest: impl Fn(V, R) -> R, last: R) -> R {
    let k = s.times.partition_point(|&x| x <= start.t);
    if !start.after && k > 0 && s.times[k - 1] == start.t {
        suf[k - 1]
    } else {
        let next = if k < s.times.len() { suf[k] } else { last };
        rest(s.gap[k - 1], next)
    }
}

fn globally<S: Semantics>(s: &Signal<S::V>, w: Window, lo: Tick, hi: Tick) -> Signal<S::V> {
    let grid = temporal_grid(&[&s.times], w, lo, hi);
    if w.b.is_none() {
        let suf = suffix_fold(s, S::and);
        windowed(grid, w, hi, S::top(), |start, _| from_suffix(s, &suf, start, S::and, S::top()))
    } else {
        windowed(grid, w, hi, S::top(), |start, end| {
            let mut acc = S::top();
            for_each_piece(s, start, end, |p| match p {
                Piece::Point(v) | Piece::Open(v) => acc = S::and(acc, v),
            });
            acc
        })
    }
}

fn finally<S: Semantics>(s: &Signal<S::V>, w: Window, lo: Tick, hi: Tick) -> Signal<S::V> {
    let grid = temporal_grid(&[&s.times], w, lo, hi);
    if w.b.is_none() {
        let suf = suffix_fold(s, S::or);
        windowed(grid, w, hi, S::bottom(), |start, _| from_suffix(s, &suf, start, S::or, S::bottom()))
    } else {
        windowed(grid, w, hi, S::bottom(), |start, end| {
            let mut acc = S::bottom();
            for_each_piece(s, start, end, |p| match p {
                Piece::Point(v) | Piece::Open(v) => acc = S::or(acc, v),
            });
            acc
        })
    }
}

fn until<S: Semantics>(l: &Signal<S::V>, r: &Signal<S::V>, w: Window, lo: Tick, hi: Tick) -> Signal<S::V> {
    let z = zip(l, r);
    let grid = temporal_grid(&[&z.times], w, lo, hi);
    if w.b.is_none() {
        // rr[i]: value of the until with its window starting exactly at breakpoint i
        let n = z.times.len();
        let mut rr = vec![S::bottom(); n];
        rr[n - 1] = z.at[n - 1].1;
        for i in (0..n - 1).rev() {
            let (p1, p2) = z.at[i];
            let (g1, g2) = z.gap[i];
            rr[i] = S::or(p2, S::and(p1, S::and(g1, S::or(g2, rr[i + 1]))));
        }
        windowed(grid, w, hi, S::bottom(), |start, _| {
            from_suffix(&z, &rr, start, |(g1, g2), next| S::or(g2, S::and(g1, next)), S::bottom())
        })
    } else {
        windowed(grid, w, hi, S::bottom(), |start, end| {
            let mut best = S::bottom();
            let mut prefix = S::top();
            for_each_piece(&z, start, end, |p| match p {
                Piece::Point((v1, v2)) => {
                    best = S::or(best, S::and(v2, prefix));
                    prefix = S::and(prefix, v1);
                }
                Piece::Open((v1, v2)) => {
                    best = S::or(best, S::and(S::and(v2, v1), prefix));
                    prefix = S::and(prefix, v1);
                }
            });
            best
        })
    }
}

enum Node {
    Const(bool),
    Atom(ResolvedAtom),
    Not(usize),
    And(usize, usize),
    Or(usize, usize),
    Until(Window, usize, usize),
    Globally(Window, usize),
    Finally(Window, usize),
}

/// A formula with all names resolved against one context.
pub struct Compiled<'c, 'a> {
    ctx: &'c EvalContext<'a>,
    nodes: Vec<Node>,
    children: Vec<Vec<usize>>,
    frames: Frames,
}

struct Frames {
    ticks: Vec<Tick>,
    nv: usize,
    at: Vec<Option<VehicleState>>,
    gap: Vec<Option<VehicleState>>,
}

impl Frames {
    fn build(ctx: &EvalContext<'_>) -> Frames {
        let trace = ctx.trace;
        let times = trace.times();
        let tracks = trace.tracks();
        let nv = tracks.len();
        let mut ticks: Vec<Tick> = times.iter().map(|&t| to_ticks(t)).collect();
        let hi = to_ticks(trace.domain().hi);
        let extended = hi > *ticks.last().unwrap();
        if extended {
            ticks.push(hi);
        }
        let mut at = Vec::with_capacity(ticks.len() * nv);
        let mut gap = Vec::with_capacity(ticks.len() * nv);
        for i in 0..ticks.len() {
            let k = i.min(times.len() - 1);
            for tr in tracks {
                at.push(tr.states[k]);
            }
            for (vi, tr) in tracks.iter().enumerate() {
                let g = match ctx.mode {
                    InterpolationMode::StepHold => tr.states[k],
                    InterpolationMode::Linear if k + 1 < times.len() && i == k => {
                        let mid = 0.5 * (times[k] + times[k + 1]);
                        trace.value_at_index(vi, mid, ctx.mode).ok()
                    }
                    InterpolationMode::Linear => tr.states[k],
                };
                gap.push(g);
            }
        }
        Frames { ticks, nv, at, gap }
    }
}

impl<'c, 'a> Compiled<'c, 'a> {
    pub fn new(formula: &Formula, ctx: &'c EvalContext<'a>) -> Result<Self, EvalError> {
        let mut nodes = Vec::new();
        let mut children = Vec::new();
        compile_node(formula, ctx, &mut nodes, &mut children)?;
        Ok(Self {
            ctx,
            nodes,
            children,
            frames: Frames::build(ctx),
        })
    }

    /// Signals of all subformulas, indexed by pre-order id.
    pub fn signals<S: Semantics>(&self) -> Vec<Signal<S::V>> {
        let mut out: Vec<Option<Signal<S::V>>> = (0..self.nodes.len()).map(|_| None).collect();
        for id in (0..self.nodes.len()).rev() {
            let sig = self.node_signal::<S>(id, &out);
            out[id] = Some(sig);
        }
        out.into_iter().map(Option::unwrap).collect()
    }

    pub fn root_signal<S: Semantics>(&self) -> Signal<S::V> {
        self.signals::<S>().swap_remove(0)
    }

    fn node_signal<S: Semantics>(&self, id: usize, done: &[Option<Signal<S::V>>]) -> Signal<S::V> {
        let get = |i: usize| done[i].as_ref().expect("children are evaluated first");
        let lo = self.frames.ticks[0];
        let hi = *self.frames.ticks.last().unwrap();
        let sig = match &self.nodes[id] {
            Node::Const(b) => {
                let v = if *b { S::top() } else { S::bottom() };
                Signal {
                    times: vec![lo, hi],
                    at: vec![v, v],
                    gap: vec![v, v],
                }
            }
            Node::Atom(ra) => self.atom_signal::<S>(ra),
            Node::Not(c) => get(*c).map(S::not),
            Node::And(l, r) => zip(get(*l), get(*r)).map(|(x, y)| S::and(x, y)),
            Node::Or(l, r) => zip(get(*l), get(*r)).map(|(x, y)| S::or(x, y)),
            Node::Globally(w, c) => globally::<S>(get(*c), *w, lo, hi),
            Node::Finally(w, c) => finally::<S>(get(*c), *w, lo, hi),
            Node::Until(w, l, r) => until::<S>(get(*l), get(*r), *w, lo, hi),
        };
        sig.compress()
    }

    fn atom_signal<S: Semantics>(&self, ra: &ResolvedAtom) -> Signal<S::V> {
        let fr = &self.frames;
        let dims: Vec<_> = self.ctx.trace.tracks().iter().map(|t| t.dims).collect();
        let value = |states: &[Option<VehicleState>]| {
            let env = AtomEnv {
                states,
                dims: &dims,
                road: self.ctx.road,
                rss: &self.ctx.rss,
                convention: self.ctx.convention,
            };
            S::atom(ra.margin(&env))
        };
        let n = fr.ticks.len();
        let mut at = Vec::with_capacity(n);
        let mut gap = Vec::with_capacity(n);
        for i in 0..n {
            let row = i * fr.nv..(i + 1) * fr.nv;
            let p = value(&fr.at[row.clone()]);
            at.push(p);
            gap.push(if i + 1 == n { p } else { value(&fr.gap[row]) });
        }
        Signal {
            times: fr.ticks.clone(),
            at,
            gap,
        }
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn compile_node(
    f: &Formula,
    ctx: &EvalContext<'_>,
    nodes: &mut Vec<Node>,
    children: &mut Vec<Vec<usize>>,
) -> Result<usize, EvalError> {
    let id = nodes.len();
    nodes.push(Node::Const(false));
    children.push(Vec::new());
    let sub = |g: &Formula, nodes: &mut Vec<Node>, children: &mut Vec<Vec<usize>>| {
        compile_node(g, ctx, nodes, children)
    };
    let node = match f {
        Formula::True => Node::Const(true),
        Formula::False => Node::Const(false),
        Formula::Atom(a) => Node::Atom(ctx.resolve_atom(a)?),
        Formula::Not { arg } => Node::Not(sub(arg, nodes, children)?),
        Formula::And { lhs, rhs } => {
            let l = sub(lhs, nodes, children)?;
            Node::And(l, sub(rhs, nodes, children)?)
        }
        Formula::Or { lhs, rhs } => {
            let l = sub(lhs, nodes, children)?;
            Node::Or(l, sub(rhs, nodes, children)?)
        }
        Formula::Until { interval, lhs, rhs } => {
            let l = sub(lhs, nodes, children)?;
            Node::Until(Window::from_interval(interval), l, sub(rhs, nodes, children)?)
        }
        Formula::Globally { interval, arg } => {
            Node::Globally(Window::from_interval(interval), sub(arg, nodes, children)?)
        }
        Formula::Finally { interval, arg } => {
            Node::Finally(Window::from_interval(interval), sub(arg, nodes, children)?)
        }
    };
    children[id] = match &node {
        Node::Not(c) | Node::Globally(_, c) | Node::Finally(_, c) => vec![*c],
        Node::And(l, r) | Node::Or(l, r) | Node::Until(_, l, r) => vec![*l, *r],
        Node::Const(_) | Node::Atom(_) => vec![],
    };
    nodes[id] = node;
    Ok(id)
}

fn check_domain(ctx: &EvalContext<'_>, t: f64) -> Result<(), EvalError> {
    let domain = ctx.trace.domain();
    if domain.contains(t) {
        Ok(())
    } else {
        Err(TraceError::OutOfDomain { t, domain }.into())
    }
}

/// Clamps a query time that lies within tolerance of the domain.
fn clamp(sig_domain: TimeInterval, t: f64) -> f64 {
    t.clamp(sig_domain.lo, sig_domain.hi)
}

pub fn eval_bool(f: &Formula, ctx: &EvalContext<'_>, t: f64) -> Result<bool, EvalError> {
    check_domain(ctx, t)?;
    let sig = Compiled::new(f, ctx)?.root_signal::<Boolean>();
    Ok(sig.value_at(clamp(sig.domain(), t)).expect("t is in the domain"))
}

pub fn eval_robust(f: &Formula, ctx: &EvalContext<'_>, t: f64) -> Result<f64, EvalError> {
    check_domain(ctx, t)?;
    let sig = Compiled::new(f, ctx)?.root_signal::<Robust>();
    Ok(sig.value_at(clamp(sig.domain(), t)).expect("t is in the domain"))
}

pub fn bool_signal(f: &Formula, ctx: &EvalContext<'_>) -> Result<Signal<bool>, EvalError> {
    Ok(Compiled::new(f, ctx)?.root_signal::<Boolean>())
}

pub fn robust_signal(f: &Formula, ctx: &EvalContext<'_>) -> Result<Signal<f64>, EvalError> {
    Ok(Compiled::new(f, ctx)?.root_signal::<Robust>())
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeSeries {
    pub id: usize,
    pub kind: &'static str,
    pub label: String,
    pub children: Vec<usize>,
    /// Boolean value at each sample time.
    pub satisfied: Vec<bool>,
    /// Robustness at each sample time; infinities serialize as `null`.
    pub robustness: Vec<f64>,
    pub true_intervals: Vec<(f64, f64)>,
}

/// Per-node evaluation of a formula at every sample time.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesReport {
    pub formula: String,
    pub times: Vec<f64>,
    pub nodes: Vec<NodeSeries>,
}

pub fn eval_series(f: &Formula, ctx: &EvalContext<'_>) -> Result<SeriesReport, EvalError> {
    let compiled = Compiled::new(f, ctx)?;
    let bools = compiled.signals::<Boolean>();
    let robs = compiled.signals::<Robust>();
    let times = ctx.trace.times().to_vec();
    let nodes = f
        .preorder()
        .into_iter()
        .enumerate()
        .map(|(id, sub)| NodeSeries {
            id,
            kind: sub.kind_name(),
            label: sub.to_string(),
            children: compiled.children(id).to_vec(),
            satisfied: times.iter().map(|&t| bools[id].value_at(t).unwrap_or(false)).collect(),
            robustness: times
                .iter()
                .map(|&t| robs[id].value_at(t).unwrap_or(f64::NEG_INFINITY))
                .collect(),
            true_intervals: bools[id].true_intervals(),
        })
        .collect();
    Ok(SeriesReport {
        formula: f.to_string(),
        times,
        nodes,
    })
}
