//! Canonical text rendering of a knowledge base. `parse_kb` of the output
//! reproduces the same structure.

use std::fmt::Write;

use super::{ConceptDef, Formula, KnowledgeBase};

pub fn render_kb(kb: &KnowledgeBase) -> String {
    let mut out = String::new();
    write!(out, "classes {}", kb.num_classes()).unwrap();
    if let Some(names) = kb.alphabet().names() {
        out.push_str(" names");
        for name in names {
            write!(out, " \"{name}\"").unwrap();
        }
    }
    out.push('\n');

    for concept in kb.concepts() {
        write!(out, "\nconcept {} arity {} {{\n", concept.id, concept.arity).unwrap();
        match &concept.def {
            ConceptDef::Facts(facts) => {
                out.push_str("  facts:");
                for (i, fact) in facts.iter().enumerate() {
                    // Eight facts per line keeps large fact tables readable.
                    if i > 0 && i % 8 == 0 {
                        out.push_str("\n        ");
                    }
                    out.push(' ');
                    render_seq(&mut out, fact);
                }
                out.push('\n');
            }
            ConceptDef::Dnf(f) => {
                writeln!(out, "  dnf: {}", render_formula(f)).unwrap();
            }
            ConceptDef::Cnf(f) => {
                writeln!(out, "  cnf: {}", render_formula(f)).unwrap();
            }
            ConceptDef::Complement(target) => {
                writeln!(out, "  complement: {target}").unwrap();
            }
            ConceptDef::Builtin { kind, base } => {
                out.push_str("  builtin: ");
                out.push_str(kind.name());
                if let Some(base) = base {
                    write!(out, " base={base}").unwrap();
                }
                out.push('\n');
            }
        }
        out.push_str("}\n");
    }
    out
}

fn render_seq(out: &mut String, seq: &[super::Label]) {
    out.push('[');
    for (i, label) in seq.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{label}").unwrap();
    }
    out.push(']');
}

fn render_formula(f: &Formula) -> String {
    match f {
        Formula::Lit { var, negated } => {
            if *negated {
                format!("!y{var}")
            } else {
                format!("y{var}")
            }
        }
        Formula::And(parts) => parts
            .iter()
            .map(|p| match p {
                // '&' binds tighter than '|', so nested disjunctions need parens.
                Formula::Or(_) => format!("({})", render_formula(p)),
                _ => render_formula(p),
            })
            .collect::<Vec<_>>()
            .join("&"),
        Formula::Or(parts) => parts
            .iter()
            .map(|p| match p {
                Formula::And(_) => format!("({})", render_formula(p)),
                _ => render_formula(p),
            })
            .collect::<Vec<_>>()
            .join("|"),
    }
}
