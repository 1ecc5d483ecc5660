use std::io::{self, Write};

use crate::QuadraticProgram;

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_owned()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_owned()
    } else {
        format!("{v:e}")
    }
}

/// Writes a plain-text listing of the problem: dimensions, the cost, the
/// constraint matrix as `row col value` triplets and the bounds.
pub fn write_problem<W: Write>(problem: &QuadraticProgram, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "qp n={} m={} nnz={}",
        problem.num_vars(),
        problem.num_constraints(),
        problem.constraints.nnz()
    )?;
    writeln!(out, "[cost] index hessian_weight linear")?;
    for (i, (w, c)) in problem.hessian_diag.iter().zip(&problem.linear_cost).enumerate() {
        writeln!(out, "{i} {w:e} {c:e}")?;
    }
    writeln!(out, "[A] row col value")?;
    for (i, j, v) in problem.constraints.triplets() {
        writeln!(out, "{i} {j} {v:e}")?;
    }
    writeln!(out, "[bounds] row lower upper")?;
    for (i, (l, u)) in problem.lower.iter().zip(&problem.upper).enumerate() {
        writeln!(out, "{i} {} {}", fmt_bound(*l), fmt_bound(*u))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::CsrMatrix;

    #[test]
    fn dump_lists_every_section() {
        let qp = QuadraticProgram::new(
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            CsrMatrix::from_dense(&[vec![1.0, 1.0]]),
            vec![2.0],
            vec![f64::INFINITY],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_problem(&qp, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("qp n=2 m=1 nnz=2\n"));
        assert!(text.contains("[A] row col value\n0 0 1e0\n0 1 1e0\n"));
        assert!(text.ends_with("0 2e0 inf\n"));
    }
}
