//! MPS export for inspection with external solvers.

use std::io::Write;

use super::{Direction, LinearProgram, RowSense, VarBound};
use crate::error::Result;

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect()
}

/// Writes `lp` in MPS format. Fields are column-aligned as in fixed MPS, but
/// names longer than eight characters are kept whole, so readers should parse
/// it as free MPS.
pub fn write_mps<W: Write>(lp: &LinearProgram, name: &str, out: &mut W) -> Result<()> {
    writeln!(out, "NAME          {}", sanitize(name))?;
    if lp.direction == Direction::Maximize {
        writeln!(out, "OBJSENSE")?;
        writeln!(out, "    MAX")?;
    }
    writeln!(out, "ROWS")?;
    writeln!(out, " N  OBJ")?;
    let row_names: Vec<String> = lp.rows.iter().map(|r| sanitize(&r.name)).collect();
    for (row, rn) in lp.rows.iter().zip(&row_names) {
        let s = match row.sense {
            RowSense::Le => "L",
            RowSense::Eq => "E",
            RowSense::Ge => "G",
        };
        writeln!(out, " {s:<2} {rn}")?;
    }
    writeln!(out, "COLUMNS")?;
    for c in &lp.columns {
        let cn = sanitize(&c.name);
        if c.objective != 0.0 {
            writeln!(out, "    {cn:<8}  {:<8}  {:>12}", "OBJ", c.objective)?;
        }
        for (i, v) in &c.entries {
            writeln!(out, "    {cn:<8}  {:<8}  {:>12}", row_names[*i], v)?;
        }
    }
    writeln!(out, "RHS")?;
    for (row, rn) in lp.rows.iter().zip(&row_names) {
        if row.rhs != 0.0 {
            writeln!(out, "    {:<8}  {rn:<8}  {:>12}", "RHS", row.rhs)?;
        }
    }
    if lp.columns.iter().any(|c| c.bound == VarBound::Free) {
        writeln!(out, "BOUNDS")?;
        for c in lp.columns.iter().filter(|c| c.bound == VarBound::Free) {
            writeln!(out, " FR {:<8}  {}", "BND", sanitize(&c.name))?;
        }
    }
    writeln!(out, "ENDATA")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_expected_text() {
        let mut lp = LinearProgram::new(Direction::Maximize);
        let a = lp.add_row("cap", RowSense::Le, 4.0);
        let b = lp.add_row("mass", RowSense::Eq, 1.0);
        lp.add_column("x", 3.0, VarBound::NonNegative, vec![(a, 1.0), (b, 1.0)]).unwrap();
        lp.add_column("z 0", 0.0, VarBound::Free, vec![(b, -0.5)]).unwrap();
        let mut buf = Vec::new();
        write_mps(&lp, "demo", &mut buf).unwrap();
        let expected = "\
NAME          demo
OBJSENSE
    MAX
ROWS
 N  OBJ
 L  cap
 E  mass
COLUMNS
    x         OBJ                  3
    x         cap                  1
    x         mass                 1
    z_0       mass              -0.5
RHS
    RHS       cap                  4
    RHS       mass                 1
BOUNDS
 FR BND       z_0
ENDATA
";
        assert_eq!(String::from_utf8(buf).unwrap(), expected);
    }
}
