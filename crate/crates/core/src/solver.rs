// SPDX-License-Identifier: Apache-2.0

//! Branch and bound for small-to-medium binary linear programs.
//!
//! Minimizes `offset + Σ objective[i]·x[i]` over `x ∈ {0,1}^n` subject to
//! sparse integer rows `Σ a·x (≤ | = | ≥) b`. There is no LP relaxation:
//! nodes are pruned by interval reasoning on each row and on the objective.
//!
//! Rows whose coefficients are all `1` are treated as cardinality limits on
//! their support. Each variable belongs to at most one such group, and the
//! attainable range of every other row over a group's free variables is
//! computed under the group's count limits instead of independently per
//! variable. On the coin-selection programs, which all fix the number of
//! inputs or payments, this is what keeps the search tractable.
//!
//! The search is depth-first. The branching variable is the free variable
//! with the largest absolute objective coefficient (lowest index on ties).
//! The child that does not worsen the objective is explored first; for
//! variables absent from the objective that is `x = 1`.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// One sparse row `Σ coef·x[var] relation rhs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub terms: Vec<(usize, i128)>,
    pub relation: Relation,
    pub rhs: i128,
}

impl Constraint {
    pub fn new(terms: Vec<(usize, i128)>, relation: Relation, rhs: i128) -> Self {
        Constraint { terms, relation, rhs }
    }

    /// Builds a row from a dense coefficient vector, dropping zeros.
    pub fn dense(coeffs: &[i128], relation: Relation, rhs: i128) -> Self {
        let terms = coeffs.iter().enumerate().filter(|(_, c)| **c != 0).map(|(i, c)| (i, *c)).collect();
        Constraint { terms, relation, rhs }
    }

    pub fn holds(&self, assignment: &[bool]) -> bool {
        let lhs: i128 = self.terms.iter().filter(|(v, _)| assignment[*v]).map(|(_, c)| *c).sum();
        match self.relation {
            Relation::Le => lhs <= self.rhs,
            Relation::Eq => lhs == self.rhs,
            Relation::Ge => lhs >= self.rhs,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlpProblem {
    pub n_vars: usize,
    /// Dense objective, one coefficient per variable.
    pub objective: Vec<i128>,
    pub offset: i128,
    pub rows: Vec<Constraint>,
}

impl BlpProblem {
    /// A problem over `n_vars` binaries with a zero objective and no rows.
    pub fn new(n_vars: usize) -> Self {
        BlpProblem { n_vars, objective: vec![0; n_vars], offset: 0, rows: Vec::new() }
    }

    pub fn add_row(&mut self, terms: Vec<(usize, i128)>, relation: Relation, rhs: i128) {
        self.rows.push(Constraint::new(terms, relation, rhs));
    }

    pub fn objective_value(&self, assignment: &[bool]) -> i128 {
        self.offset + self.objective.iter().zip(assignment).filter(|(_, x)| **x).map(|(c, _)| *c).sum::<i128>()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.objective.len() != self.n_vars {
            return Err(SolverError::MalformedProblem(format!(
                "objective has {} coefficients for {} variables",
                self.objective.len(),
                self.n_vars
            )));
        }
        let mut seen = vec![usize::MAX; self.n_vars];
        for (r, row) in self.rows.iter().enumerate() {
            for &(v, _) in &row.terms {
                if v >= self.n_vars {
                    return Err(SolverError::MalformedProblem(format!(
                        "row {r} references variable {v} of {}",
                        self.n_vars
                    )));
                }
                if seen[v] == r {
                    return Err(SolverError::MalformedProblem(format!("row {r} repeats variable {v}")));
                }
                seen[v] = r;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("malformed problem: {0}")]
    MalformedProblem(String),
    #[error("assignment has {got} entries, problem has {expected} variables")]
    LengthMismatch { expected: usize, got: usize },
}

/// Whether every row holds under `assignment`.
pub fn check_feasible(problem: &BlpProblem, assignment: &[bool]) -> Result<bool, SolverError> {
    if assignment.len() != problem.n_vars {
        return Err(SolverError::LengthMismatch { expected: problem.n_vars, got: assignment.len() });
    }
    problem.validate()?;
    Ok(problem.rows.iter().all(|row| row.holds(assignment)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveStatus {
    /// Search tree exhausted; the assignment is a minimizer.
    Optimal,
    /// Limit reached holding a feasible assignment.
    FeasibleIncumbent,
    /// Search tree exhausted without a feasible assignment.
    Infeasible,
    /// Limit reached before any feasible assignment was found.
    TimedOut,
}

/// Wall-clock budget and optional node cap for one solve. The search stops
/// at whichever is reached first. A node cap makes truncated searches
/// reproducible across machines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveLimits {
    pub time: Duration,
    pub node_limit: Option<u64>,
}

impl SolveLimits {
    pub fn new(time: Duration, node_limit: Option<u64>) -> Self {
        SolveLimits { time, node_limit }
    }
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits { time: Duration::from_millis(1000), node_limit: None }
    }
}

impl From<Duration> for SolveLimits {
    fn from(time: Duration) -> Self {
        SolveLimits { time, node_limit: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub assignment: Option<Vec<bool>>,
    pub objective_value: Option<i128>,
    pub nodes_explored: u64,
    pub elapsed: Duration,
}

/// Solves `problem` within `limits`.
pub fn solve(problem: &BlpProblem, limits: impl Into<SolveLimits>) -> Result<SolveOutcome, SolverError> {
    problem.validate()?;
    let limits = limits.into();
    let started = Instant::now();
    let mut search = Search::new(problem, limits, started);
    let exhausted = search.run();
    let incumbent = search.incumbent.take();
    let nodes_explored = search.nodes;

    let (status, assignment, objective_value) = match (exhausted, incumbent) {
        (true, Some((x, obj))) => (SolveStatus::Optimal, Some(x), Some(obj)),
        (false, Some((x, obj))) => (SolveStatus::FeasibleIncumbent, Some(x), Some(obj)),
        (true, None) => (SolveStatus::Infeasible, None, None),
        (false, None) => (SolveStatus::TimedOut, None, None),
    };
    if let Some(x) = &assignment {
        assert!(check_feasible(problem, x)?, "solver produced an infeasible assignment");
    }
    Ok(SolveOutcome { status, assignment, objective_value, nodes_explored, elapsed: started.elapsed() })
}

const UNFIXED: u8 = 2;

/// A cardinality limit `lo ≤ Σ x[v] ≤ hi` over `vars`.
#[derive(Debug, Clone)]
struct Group {
    vars: Vec<usize>,
    lo: i64,
    hi: i64,
}

/// The coefficients of one row restricted to one group, sorted descending.
#[derive(Debug, Clone)]
struct GroupTerms {
    group: usize,
    sorted: Vec<(i128, usize)>,
}

/// A linear form split into ungrouped terms and per-group term lists.
#[derive(Debug, Clone, Default)]
struct Form {
    free: Vec<(usize, i128)>,
    grouped: Vec<GroupTerms>,
}

#[derive(Debug, Clone)]
struct Row {
    form: Form,
    lo: Option<i128>,
    hi: Option<i128>,
}

struct Search<'a> {
    problem: &'a BlpProblem,
    limits: SolveLimits,
    started: Instant,

    groups: Vec<Group>,
    var_group: Vec<Option<usize>>,
    rows: Vec<Row>,
    objective: Form,
    has_objective: bool,
    /// Column lists: rows in which each variable has a nonzero coefficient.
    var_rows: Vec<Vec<(usize, i128)>>,
    group_rows: Vec<Vec<usize>>,
    order: Vec<usize>,

    value: Vec<u8>,
    trail: Vec<usize>,
    row_fixed: Vec<i128>,
    obj_fixed: i128,
    group_ones: Vec<i64>,
    group_free: Vec<i64>,
    stamp: Vec<u64>,
    epoch: u64,
    touched: Vec<usize>,
    scratch: Vec<i128>,

    nodes: u64,
    incumbent: Option<(Vec<bool>, i128)>,
}

struct Frame {
    pos: usize,
    mark: usize,
    tried: u8,
    first: bool,
}

impl<'a> Search<'a> {
    fn new(problem: &'a BlpProblem, limits: SolveLimits, started: Instant) -> Self {
        let n = problem.n_vars;
        let (groups, var_group) = find_groups(problem);

        let split = |terms: &[(usize, i128)]| -> Form {
            let mut form = Form::default();
            let mut per_group: Vec<Vec<(i128, usize)>> = vec![Vec::new(); groups.len()];
            for &(v, c) in terms {
                if c == 0 {
                    continue;
                }
                match var_group[v] {
                    Some(g) => per_group[g].push((c, v)),
                    None => form.free.push((v, c)),
                }
            }
            for (g, mut sorted) in per_group.into_iter().enumerate() {
                if sorted.is_empty() {
                    continue;
                }
                sorted.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                form.grouped.push(GroupTerms { group: g, sorted });
            }
            form
        };

        let rows: Vec<Row> = problem
            .rows
            .iter()
            .map(|row| {
                let (lo, hi) = match row.relation {
                    Relation::Le => (None, Some(row.rhs)),
                    Relation::Eq => (Some(row.rhs), Some(row.rhs)),
                    Relation::Ge => (Some(row.rhs), None),
                };
                Row { form: split(&row.terms), lo, hi }
            })
            .collect();
        let objective_terms: Vec<(usize, i128)> = problem.objective.iter().copied().enumerate().collect();
        let objective = split(&objective_terms);
        let has_objective = problem.objective.iter().any(|c| *c != 0);

        let mut var_rows = vec![Vec::new(); n];
        let mut group_rows = vec![Vec::new(); groups.len()];
        for (r, row) in problem.rows.iter().enumerate() {
            for &(v, c) in &row.terms {
                if c != 0 {
                    var_rows[v].push((r, c));
                }
            }
            for gt in &rows[r].form.grouped {
                group_rows[gt.group].push(r);
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| problem.objective[b].abs().cmp(&problem.objective[a].abs()).then(a.cmp(&b)));

        let group_free = groups.iter().map(|g| g.vars.len() as i64).collect();
        let group_count = groups.len();
        Search {
            problem,
            limits,
            started,
            groups,
            var_group,
            rows,
            objective,
            has_objective,
            var_rows,
            group_rows,
            order,
            value: vec![UNFIXED; n],
            trail: Vec::with_capacity(n),
            row_fixed: vec![0; problem.rows.len()],
            obj_fixed: 0,
            group_ones: vec![0; group_count],
            group_free,
            stamp: vec![0; problem.rows.len()],
            epoch: 0,
            touched: Vec::new(),
            scratch: Vec::new(),
            nodes: 0,
            incumbent: None,
        }
    }

    /// Runs the search. Returns true when the tree was exhausted.
    fn run(&mut self) -> bool {
        // Root: every row and group must be satisfiable before branching.
        for g in 0..self.groups.len() {
            if !self.saturate(g) {
                return true;
            }
        }
        let all_rows: Vec<usize> = (0..self.rows.len()).collect();
        if !all_rows.iter().all(|&r| self.row_ok(r)) {
            return true;
        }

        let mut stack: Vec<Frame> = Vec::new();
        match self.next_free(0) {
            None => {
                self.leaf();
                return true;
            }
            Some(pos) => stack.push(self.frame(pos)),
        }

        while let Some(top) = stack.last_mut() {
            if top.tried == 2 {
                let mark = top.mark;
                stack.pop();
                self.undo(mark);
                continue;
            }
            let val = if top.tried == 0 { top.first } else { !top.first };
            top.tried += 1;
            let (pos, mark) = (top.pos, top.mark);
            self.undo(mark);

            self.nodes += 1;
            if self.out_of_budget() {
                return false;
            }
            let var = self.order[pos];
            if !self.assign(var, val) {
                continue;
            }
            match self.next_free(pos + 1) {
                Some(next) => stack.push(self.frame(next)),
                None => self.leaf(),
            }
        }
        true
    }

    fn frame(&self, pos: usize) -> Frame {
        let c = self.problem.objective[self.order[pos]];
        Frame { pos, mark: self.trail.len(), tried: 0, first: c <= 0 }
    }

    fn next_free(&self, from: usize) -> Option<usize> {
        (from..self.order.len()).find(|&p| self.value[self.order[p]] == UNFIXED)
    }

    fn out_of_budget(&self) -> bool {
        if let Some(limit) = self.limits.node_limit {
            if self.nodes > limit {
                return true;
            }
        }
        self.nodes.is_multiple_of(256) && self.started.elapsed() >= self.limits.time
    }

    fn leaf(&mut self) {
        let x: Vec<bool> = self.value.iter().map(|v| *v == 1).collect();
        debug_assert!(self.problem.rows.iter().all(|r| r.holds(&x)));
        let obj = self.problem.objective_value(&x);
        let better = match &self.incumbent {
            None => true,
            Some((_, best)) => obj < *best,
        };
        if better {
            self.incumbent = Some((x, obj));
        }
    }

    fn set(&mut self, var: usize, val: bool) {
        self.value[var] = val as u8;
        self.trail.push(var);
        if val {
            for &(r, c) in &self.var_rows[var] {
                self.row_fixed[r] += c;
            }
            self.obj_fixed += self.problem.objective[var];
        }
        if let Some(g) = self.var_group[var] {
            self.group_free[g] -= 1;
            if val {
                self.group_ones[g] += 1;
            }
        }
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let var = self.trail.pop().expect("trail underflow");
            let val = self.value[var] == 1;
            self.value[var] = UNFIXED;
            if val {
                for &(r, c) in &self.var_rows[var] {
                    self.row_fixed[r] -= c;
                }
                self.obj_fixed -= self.problem.objective[var];
            }
            if let Some(g) = self.var_group[var] {
                self.group_free[g] += 1;
                if val {
                    self.group_ones[g] -= 1;
                }
            }
        }
    }

    /// Remaining count window `(lo, hi)` for a group's free variables, or
    /// `None` when the group can no longer be satisfied.
    fn window(&self, g: usize) -> Option<(i64, i64)> {
        let group = &self.groups[g];
        let ones = self.group_ones[g];
        let free = self.group_free[g];
        let lo = (group.lo - ones).max(0);
        let hi = (group.hi - ones).min(free);
        (hi >= 0 && lo <= hi).then_some((lo, hi))
    }

    /// Fixes a group's free variables when its count window leaves no
    /// choice. Returns false if the group is infeasible.
    fn saturate(&mut self, g: usize) -> bool {
        let Some((lo, hi)) = self.window(g) else {
            return false;
        };
        let free = self.group_free[g];
        if free == 0 || (hi > 0 && lo < free) {
            return true;
        }
        let val = hi > 0;
        for i in 0..self.groups[g].vars.len() {
            let v = self.groups[g].vars[i];
            if self.value[v] == UNFIXED {
                self.set(v, val);
                self.note_var(v);
            }
        }
        true
    }

    fn note_var(&mut self, var: usize) {
        for i in 0..self.var_rows[var].len() {
            let r = self.var_rows[var][i].0;
            self.note_row(r);
        }
        if let Some(g) = self.var_group[var] {
            for i in 0..self.group_rows[g].len() {
                let r = self.group_rows[g][i];
                self.note_row(r);
            }
        }
    }

    fn note_row(&mut self, r: usize) {
        if self.stamp[r] != self.epoch {
            self.stamp[r] = self.epoch;
            self.touched.push(r);
        }
    }

    /// Fixes `var` to `val`, propagates group saturation and checks every
    /// affected row and the objective bound.
    fn assign(&mut self, var: usize, val: bool) -> bool {
        self.epoch += 1;
        self.touched.clear();
        self.set(var, val);
        self.note_var(var);
        if let Some(g) = self.var_group[var] {
            if !self.saturate(g) {
                return false;
            }
        }
        let touched = std::mem::take(&mut self.touched);
        let ok = touched.iter().all(|&r| self.row_ok(r));
        self.touched = touched;
        if !ok {
            return false;
        }
        match &self.incumbent {
            Some((_, best)) if self.has_objective => {
                let best = *best;
                let form = std::mem::take(&mut self.objective);
                let (lo, _) = self.range(&form, true, false);
                self.objective = form;
                self.problem.offset + self.obj_fixed + lo < best
            }
            _ => true,
        }
    }

    fn row_ok(&mut self, r: usize) -> bool {
        let (need_min, need_max) = (self.rows[r].hi.is_some(), self.rows[r].lo.is_some());
        let form = std::mem::take(&mut self.rows[r].form);
        let (lo, hi) = self.range(&form, need_min, need_max);
        self.rows[r].form = form;
        let row = &self.rows[r];
        let fixed = self.row_fixed[r];
        row.hi.is_none_or(|b| fixed + lo <= b) && row.lo.is_none_or(|b| fixed + hi >= b)
    }

    /// Attainable `(min, max)` of the free part of `form`.
    fn range(&mut self, form: &Form, want_min: bool, want_max: bool) -> (i128, i128) {
        let mut lo = 0i128;
        let mut hi = 0i128;
        for &(v, c) in &form.free {
            if self.value[v] == UNFIXED {
                if c < 0 {
                    lo += c;
                } else {
                    hi += c;
                }
            }
        }
        for gt in &form.grouped {
            let Some((k_lo, k_hi)) = self.window(gt.group) else {
                // Infeasible groups are rejected elsewhere; any range works.
                continue;
            };
            let free = self.group_free[gt.group];
            if free == 0 {
                continue;
            }
            self.scratch.clear();
            for &(c, v) in &gt.sorted {
                if self.value[v] == UNFIXED {
                    self.scratch.push(c);
                }
            }
            let zeros = free - self.scratch.len() as i64;
            let pos = self.scratch.iter().take_while(|c| **c > 0).count() as i64;
            let neg = self.scratch.iter().rev().take_while(|c| **c < 0).count() as i64;
            if want_max {
                let t = pos.clamp(k_lo, k_hi);
                hi += top_sum(&self.scratch, zeros, t);
            }
            if want_min {
                let t = neg.clamp(k_lo, k_hi);
                lo += bottom_sum(&self.scratch, zeros, t);
            }
        }
        (lo, hi)
    }
}

/// Sum of the `t` largest of `sorted` (descending) extended with `zeros`
/// zero entries placed between the positives and negatives.
fn top_sum(sorted: &[i128], zeros: i64, t: i64) -> i128 {
    let mut remaining = t;
    let mut sum = 0;
    let mut i = 0;
    while remaining > 0 && i < sorted.len() && sorted[i] > 0 {
        sum += sorted[i];
        i += 1;
        remaining -= 1;
    }
    remaining -= remaining.min(zeros);
    while remaining > 0 && i < sorted.len() {
        if sorted[i] != 0 {
            sum += sorted[i];
        }
        i += 1;
        remaining -= 1;
    }
    sum
}

fn bottom_sum(sorted: &[i128], zeros: i64, t: i64) -> i128 {
    let mut remaining = t;
    let mut sum = 0;
    let mut i = sorted.len();
    while remaining > 0 && i > 0 && sorted[i - 1] < 0 {
        i -= 1;
        sum += sorted[i];
        remaining -= 1;
    }
    remaining -= remaining.min(zeros);
    while remaining > 0 && i > 0 {
        i -= 1;
        sum += sorted[i];
        remaining -= 1;
    }
    sum
}

/// Picks disjoint cardinality groups from rows whose coefficients are all 1.
///
/// Larger supports are claimed first. A group that loses variables to an
/// earlier one keeps its upper limit and relaxes its lower limit by the
/// number of variables lost.
fn find_groups(problem: &BlpProblem) -> (Vec<Group>, Vec<Option<usize>>) {
    use std::collections::BTreeMap;

    let mut by_support: BTreeMap<Vec<usize>, (i64, i64)> = BTreeMap::new();
    for row in &problem.rows {
        if row.terms.is_empty() || row.terms.iter().any(|(_, c)| *c != 1) {
            continue;
        }
        let mut support: Vec<usize> = row.terms.iter().map(|(v, _)| *v).collect();
        support.sort_unstable();
        let size = support.len() as i64;
        let rhs = i64::try_from(row.rhs.clamp(-1, size as i128 + 1)).expect("clamped");
        let (lo, hi) = match row.relation {
            Relation::Le => (0, rhs),
            Relation::Ge => (rhs, size),
            Relation::Eq => (rhs, rhs),
        };
        let entry = by_support.entry(support).or_insert((0, size));
        entry.0 = entry.0.max(lo);
        entry.1 = entry.1.min(hi);
    }

    let mut candidates: Vec<(Vec<usize>, i64, i64)> = by_support.into_iter().map(|(s, (lo, hi))| (s, lo, hi)).collect();
    candidates.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));

    let mut var_group = vec![None; problem.n_vars];
    let mut groups = Vec::new();
    for (support, lo, hi) in candidates {
        let vars: Vec<usize> = support.iter().copied().filter(|v| var_group[*v].is_none()).collect();
        let lost = (support.len() - vars.len()) as i64;
        let lo = (lo - lost).max(0);
        // Only worth tracking if the limits bind.
        if vars.is_empty() || (lo == 0 && hi >= vars.len() as i64) {
            continue;
        }
        let g = groups.len();
        for &v in &vars {
            var_group[v] = Some(g);
        }
        groups.push(Group { vars, lo, hi });
    }
    (groups, var_group)
}
