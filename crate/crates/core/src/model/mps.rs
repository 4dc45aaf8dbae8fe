//! Fixed-format MPS writer.
//!
//! Names (`iii` side-local fruit index, `ppp` stop index, zero padded):
//!
//! | name        | kind        | meaning                               |
//! |-------------|-------------|---------------------------------------|
//! | `ALiiippp`  | binary col  | left fruit `i` picked at stop `p`     |
//! | `ARiiippp`  | binary col  | right fruit `i` picked at stop `p`    |
//! | `Bppp`      | binary col  | stop `p` selected                     |
//! | `CLppp`     | col ≥ 0     | left arm busy time at `p`             |
//! | `CRppp`     | col ≥ 0     | right arm busy time at `p`            |
//! | `Cppp`      | col ≥ 0     | stop duration at `p`                  |
//! | `FLiii`     | row, = 1    | left fruit `i` assigned once          |
//! | `FRiii`     | row, = 1    | right fruit `i` assigned once         |
//! | `KLiiippp`  | row, ≤ 0    | `ALiiippp - Bppp`                     |
//! | `KRiiippp`  | row, ≤ 0    | `ARiiippp - Bppp`                     |
//! | `SLppp`     | row, = 0    | `Σ cost·ALiiippp - CLppp`             |
//! | `SRppp`     | row, = 0    | `Σ cost·ARiiippp - CRppp`             |
//! | `XLppp`     | row, ≥ 0    | `Cppp - CLppp`                        |
//! | `XRppp`     | row, ≥ 0    | `Cppp - CRppp`                        |
//!
//! The objective row `OBJ` is `Σ Cppp + τ Σ Bppp`; the travel time enters
//! as the objective constant, written as `-T_travel` on the `OBJ` right-hand
//! side. Unreachable pairs have no column.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::{HarvestPlan, ModelError, SchedulingInstance};
use crate::layout::Side;

const NAME_LIMIT: usize = 1000;

pub struct MpsNames;

impl MpsNames {
    fn tag(side: Side) -> char {
        match side {
            Side::Left => 'L',
            Side::Right => 'R',
        }
    }

    pub fn assign(side: Side, i: usize, p: usize) -> String {
        format!("A{}{i:03}{p:03}", Self::tag(side))
    }

    pub fn link(side: Side, i: usize, p: usize) -> String {
        format!("K{}{i:03}{p:03}", Self::tag(side))
    }

    pub fn fruit_row(side: Side, i: usize) -> String {
        format!("F{}{i:03}", Self::tag(side))
    }

    pub fn stop(p: usize) -> String {
        format!("B{p:03}")
    }

    pub fn busy(side: Side, p: usize) -> String {
        format!("C{}{p:03}", Self::tag(side))
    }

    pub fn busy_row(side: Side, p: usize) -> String {
        format!("S{}{p:03}", Self::tag(side))
    }

    pub fn duration(p: usize) -> String {
        format!("C{p:03}")
    }

    pub fn max_row(side: Side, p: usize) -> String {
        format!("X{}{p:03}", Self::tag(side))
    }
}

/// Shortest decimal form that fits the 12-character value field.
fn num(v: f64) -> String {
    let s = format!("{v}");
    if s.len() <= 12 {
        return s;
    }
    for prec in (0..=10).rev() {
        let s = format!("{v:.prec$}");
        if s.len() <= 12 {
            return s;
        }
    }
    format!("{v:.5e}")
}

struct Writer(String);

impl Writer {
    fn row(&mut self, kind: &str, name: &str) {
        writeln!(self.0, " {kind:<2} {name}").unwrap();
    }

    fn entry(&mut self, set: &str, name: &str, value: f64) {
        writeln!(self.0, "    {set:<8}  {name:<8}  {}", num(value)).unwrap();
    }

    fn marker(&mut self, tag: &str) {
        writeln!(self.0, "    MARKER                 'MARKER'                 '{tag}'").unwrap();
    }

    fn line(&mut self, s: &str) {
        self.0.push_str(s);
        self.0.push('\n');
    }
}

/// Writes the full model with the stop duration `C = max(CL, CR)`
/// linearized as `C ≥ CL`, `C ≥ CR`.
pub fn export_mps(inst: &SchedulingInstance) -> Result<String, ModelError> {
    let bad = inst.infeasible_fruits();
    if !bad.is_empty() {
        return Err(ModelError::InfeasibleFruit(bad));
    }
    if inst.n_left() > NAME_LIMIT || inst.n_right() > NAME_LIMIT || inst.n_stops() > NAME_LIMIT {
        return Err(ModelError::MpsTooLarge(format!(
            "{} left, {} right fruits and {} stops; at most {NAME_LIMIT} each",
            inst.n_left(),
            inst.n_right(),
            inst.n_stops()
        )));
    }
    let n = inst.n_stops();
    let sides = [Side::Left, Side::Right];
    let local = |f: usize| match inst.side(f) {
        Side::Left => f,
        Side::Right => f - inst.n_left(),
    };

    let mut w = Writer(String::new());
    w.line("NAME          HARVEST");
    w.line("ROWS");
    w.row("N", "OBJ");
    for f in 0..inst.n_fruits() {
        w.row("E", &MpsNames::fruit_row(inst.side(f), local(f)));
    }
    for f in 0..inst.n_fruits() {
        for (p, _) in inst.reachable(f) {
            w.row("L", &MpsNames::link(inst.side(f), local(f), p));
        }
    }
    for side in sides {
        for p in 0..n {
            w.row("E", &MpsNames::busy_row(side, p));
        }
    }
    for side in sides {
        for p in 0..n {
            w.row("G", &MpsNames::max_row(side, p));
        }
    }

    w.line("COLUMNS");
    w.marker("INTORG");
    for f in 0..inst.n_fruits() {
        let (side, i) = (inst.side(f), local(f));
        for (p, c) in inst.reachable(f) {
            let col = MpsNames::assign(side, i, p);
            w.entry(&col, &MpsNames::fruit_row(side, i), 1.0);
            w.entry(&col, &MpsNames::link(side, i, p), 1.0);
            w.entry(&col, &MpsNames::busy_row(side, p), c);
        }
    }
    let mut links: Vec<Vec<String>> = vec![Vec::new(); n];
    for f in 0..inst.n_fruits() {
        for (p, _) in inst.reachable(f) {
            links[p].push(MpsNames::link(inst.side(f), local(f), p));
        }
    }
    for (p, rows) in links.iter().enumerate() {
        let col = MpsNames::stop(p);
        w.entry(&col, "OBJ", inst.tau());
        for r in rows {
            w.entry(&col, r, -1.0);
        }
    }
    w.marker("INTEND");
    for side in sides {
        for p in 0..n {
            let col = MpsNames::busy(side, p);
            w.entry(&col, &MpsNames::busy_row(side, p), -1.0);
            w.entry(&col, &MpsNames::max_row(side, p), -1.0);
        }
    }
    for p in 0..n {
        let col = MpsNames::duration(p);
        w.entry(&col, "OBJ", 1.0);
        for side in sides {
            w.entry(&col, &MpsNames::max_row(side, p), 1.0);
        }
    }

    w.line("RHS");
    if inst.travel_time() != 0.0 {
        w.entry("RHS", "OBJ", -inst.travel_time());
    }
    for f in 0..inst.n_fruits() {
        w.entry("RHS", &MpsNames::fruit_row(inst.side(f), local(f)), 1.0);
    }

    w.line("BOUNDS");
    for f in 0..inst.n_fruits() {
        for (p, _) in inst.reachable(f) {
            writeln!(w.0, " BV BND       {}", MpsNames::assign(inst.side(f), local(f), p)).unwrap();
        }
    }
    for p in 0..n {
        writeln!(w.0, " BV BND       {}", MpsNames::stop(p)).unwrap();
    }
    w.line("ENDATA");
    Ok(w.0)
}

/// Maps an external solver's column values back onto a plan. Each fruit
/// goes to the stop whose assignment column is closest to one; the selected
/// stops are the stops in use.
pub fn plan_from_columns(
    inst: &SchedulingInstance,
    values: &BTreeMap<String, f64>,
) -> Result<HarvestPlan, ModelError> {
    let mut assignment = Vec::with_capacity(inst.n_fruits());
    for f in 0..inst.n_fruits() {
        let (side, i) = match inst.side(f) {
            Side::Left => (Side::Left, f),
            Side::Right => (Side::Right, f - inst.n_left()),
        };
        let best = inst
            .reachable(f)
            .map(|(p, _)| (p, values.get(&MpsNames::assign(side, i, p)).copied().unwrap_or(0.0)))
            .fold(None, |acc: Option<(usize, f64)>, (p, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((p, v)),
            });
        match best {
            Some((p, v)) if v > 0.5 => assignment.push(p),
            _ => {
                return Err(ModelError::ConstraintViolation {
                    kind: super::ViolationKind::AssignmentLength,
                    ids: vec![inst.fruit_id(f)],
                })
            }
        }
    }
    HarvestPlan::from_assignment(inst, assignment)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn section<'a>(text: &'a str, name: &str) -> Vec<&'a str> {
        text.lines()
            .skip_while(|l| *l != name)
            .skip(1)
            .take_while(|l| l.starts_with(' '))
            .collect()
    }

    #[test]
    fn one_fruit_two_stops() {
        let inst = SchedulingInstance::from_matrices(vec![0.0, 0.1], &[vec![3.0, 4.5]], &[], 5.0, 20.0).unwrap();
        let text = export_mps(&inst).unwrap();
        let cols = section(&text, "COLUMNS");
        let mut names: Vec<&str> = cols
            .iter()
            .map(|l| l.split_whitespace().next().unwrap())
            .filter(|n| *n != "MARKER")
            .collect();
        names.dedup();
        let count = |prefix: &str| names.iter().filter(|n| n.starts_with(prefix)).count();
        assert_eq!(count("AL"), 2);
        assert_eq!(count("B"), 2);
        assert_eq!(count("C"), 6);
        assert_eq!(names.len(), 10);
        assert!(text.contains("    RHS       OBJ       -20\n"));
        assert!(text.ends_with("ENDATA\n"));
    }

    #[test]
    fn infeasible_refused() {
        let inst = SchedulingInstance::from_matrices_allow_infeasible(
            vec![0.0],
            &[vec![f64::INFINITY]],
            &[],
            5.0,
            20.0,
        )
        .unwrap();
        assert!(matches!(export_mps(&inst), Err(ModelError::InfeasibleFruit(_))));
    }

    #[test]
    fn values_fit_field() {
        for v in [0.25, 7.123456789012345, 1234567.891, -20.0, 1e-7] {
            let s = num(v);
            assert!(s.len() <= 12, "{s}");
            assert!((s.parse::<f64>().unwrap() - v).abs() <= 1e-9 * v.abs().max(1.0), "{s}");
        }
    }

    #[test]
    fn columns_map_back() {
        let inst = SchedulingInstance::from_matrices(
            vec![0.0, 0.1],
            &[vec![3.0, 4.5]],
            &[vec![f64::INFINITY, 1.0]],
            5.0,
            20.0,
        )
        .unwrap();
        let values = BTreeMap::from([
            ("AL000001".to_string(), 1.0),
            ("AR000001".to_string(), 1.0),
            ("B001".to_string(), 1.0),
        ]);
        let plan = plan_from_columns(&inst, &values).unwrap();
        assert_eq!(plan.assignment, vec![1, 1]);
        assert_eq!(plan.objective, 4.5 + 5.0 + 20.0);
    }
}
