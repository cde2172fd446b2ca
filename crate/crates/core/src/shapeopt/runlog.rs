use std::io::Write;

use super::optimize::Iterate;
use crate::error::Result;

pub const RUN_LOG_HEADER: &str = "iter,objective,drag,constraint,regularizer,grad_norm";

/// One CSV row; components an objective does not have are written as 0.
pub fn run_log_row(iteration: usize, it: &Iterate) -> String {
    let part = |name: &str| it.parts.iter().find(|(n, _)| *n == name).map_or(0.0, |&(_, v)| v);
    format!(
        "{iteration},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
        it.value,
        part("drag"),
        part("constraint"),
        part("regularizer"),
        it.grad_norm
    )
}

pub fn write_run_log<W: Write>(iterates: &[Iterate], mut sink: W) -> Result<()> {
    writeln!(sink, "{RUN_LOG_HEADER}")?;
    for (i, it) in iterates.iter().enumerate() {
        writeln!(sink, "{}", run_log_row(i, it))?;
    }
    Ok(())
}
