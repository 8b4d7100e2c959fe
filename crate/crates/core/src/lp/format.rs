//! Human-readable dump in CPLEX LP text format.

use std::fmt::Write;

use super::{LinearProgram, Relation, VarId};

/// Renders `lp` in CPLEX LP format. Names are sanitised to `[A-Za-z0-9_.]`.
pub fn write_lp_text(lp: &LinearProgram) -> String {
    write_mip_text(lp, &[])
}

/// As [`write_lp_text`], with `binaries` listed in a `Binaries` section.
pub fn write_mip_text(lp: &LinearProgram, binaries: &[VarId]) -> String {
    let names: Vec<String> = lp
        .variables()
        .iter()
        .enumerate()
        .map(|(j, v)| sanitize(&v.name, "x", j))
        .collect();
    let mut out = String::new();
    out.push_str("Maximize\n obj:");
    let mut any = false;
    for (j, &c) in lp.objective().iter().enumerate() {
        if c != 0.0 {
            push_term(&mut out, c, &names[j]);
            any = true;
        }
    }
    if !any {
        out.push_str(" 0");
    }
    out.push_str("\nSubject To\n");
    for (i, c) in lp.constraints().iter().enumerate() {
        let _ = write!(out, " {}:", sanitize(&c.name, "r", i));
        if c.terms.is_empty() {
            out.push_str(" 0");
        }
        for &(v, a) in &c.terms {
            push_term(&mut out, a, &names[v.index()]);
        }
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        let _ = writeln!(out, " {rel} {}", c.rhs);
    }
    out.push_str("Bounds\n");
    for (v, name) in lp.variables().iter().zip(&names) {
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " {name} free");
            }
            (true, true) if v.lower == v.upper => {
                let _ = writeln!(out, " {name} = {}", v.lower);
            }
            (true, true) => {
                let _ = writeln!(out, " {} <= {name} <= {}", v.lower, v.upper);
            }
            (true, false) => {
                let _ = writeln!(out, " {name} >= {}", v.lower);
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {name} <= {}", v.upper);
            }
        }
    }
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for v in binaries {
            let _ = writeln!(out, " {}", names[v.index()]);
        }
    }
    out.push_str("End\n");
    out
}

fn push_term(out: &mut String, coef: f64, name: &str) {
    let sign = if coef < 0.0 { '-' } else { '+' };
    let _ = write!(out, " {sign} {} {name}", coef.abs());
}

fn sanitize(name: &str, prefix: &str, index: usize) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if cleaned.is_empty() || cleaned.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        format!("{prefix}{index}_{cleaned}")
    } else {
        cleaned
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_lists_every_section() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("flow[g-l]", -5.0, 5.0);
        let t = lp.add_var("theta", f64::NEG_INFINITY, f64::INFINITY);
        lp.set_objective(x, 1.0);
        lp.add_constraint("law", vec![(x, 1.0), (t, -2.0)], Relation::Eq, 0.0);
        let text = write_lp_text(&lp);
        assert!(text.starts_with("Maximize\n obj: + 1 flow_g-l_".replace('-', "_").as_str()));
        assert!(text.contains(" law: + 1 flow_g_l_ - 2 theta = 0\n"));
        assert!(text.contains(" theta free\n"));
        assert!(text.contains(" -5 <= flow_g_l_ <= 5\n"));
        assert!(text.ends_with("End\n"));
        assert!(write_mip_text(&lp, &[t]).ends_with("Binaries\n theta\nEnd\n"));
    }
}
