//! The structural-unit formula notation.
//!
//! A formula is a sequence of integer indices, unit letters and bracket
//! groups. Each letter denotes one arc:
//!
//! * `C`: place -> transition, normal arc
//! * `I`: transition -> place, normal arc
//! * `A`: place -> transition, associative arc
//! * `B`: place -> transition, inhibitory arc
//!
//! Equal indices denote the same node. An index written between two letters
//! is shared as the post-index of the left unit and the pre-index of the
//! right one; when the two slots require different node classes the index
//! binds to the right unit's pre-slot and the left post-slot stays open. A
//! group `(f1,...,fn)` distributes the index before `(` into each branch's
//! open pre-slots and the index after `)` into each branch's open
//! post-slots. A slot with no index anywhere receives a fresh, unused id.
//!
//! Brace parameters after an index set node parameters (`m` for places, `v`
//! and `d` for transitions); braces directly after a letter set arc
//! parameters (`k`, `w`). Subscript digits are accepted and normalized to
//! ASCII; `#` starts a line comment.

mod emit;
mod parse;

pub use emit::emit;
pub use parse::{parse, parse_detailed, ParseOutcome};

/// Byte-accurate description of a rejected input.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseDiagnostic {
    /// Byte offset into the original input.
    pub offset: usize,
    pub message: String,
    /// Tokens that would have been accepted at this point.
    pub expected: Vec<String>,
}

impl std::fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.offset, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormulaError {
    #[error("syntax error at byte {}: {}", .0.offset, .0)]
    Syntax(ParseDiagnostic),
    #[error("index {id} is used both as a place and as a transition (at byte {offset})")]
    IndexClassClash { id: u32, offset: usize },
    #[error("index {id} is given conflicting node parameters (at byte {offset})")]
    ConflictingNodeParams { id: u32, offset: usize },
    #[error("empty group at byte {offset}")]
    EmptyGroup { offset: usize },
}

impl FormulaError {
    pub fn offset(&self) -> usize {
        match self {
            FormulaError::Syntax(d) => d.offset,
            FormulaError::IndexClassClash { offset, .. }
            | FormulaError::ConflictingNodeParams { offset, .. }
            | FormulaError::EmptyGroup { offset } => *offset,
        }
    }
}

/// True iff re-parsing the canonical emission reproduces the parsed net with
/// identical ids and parameters.
pub fn round_trip_check(text: &str) -> Result<bool, FormulaError> {
    let net = parse(text)?;
    let emitted = emit(&net);
    let reparsed = parse(&emitted)?;
    Ok(reparsed == net)
}

/// Strips `#` line comments and whitespace so a `.pnf` file body can be
/// parsed as a single formula.
pub fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let body = match line.find('#') {
            Some(idx) => &line[..idx],
            None => line,
        };
        out.push_str(body.trim());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ArcKind;

    /// A fully instrumented supply chain: an eight-node main chain with a
    /// marking loop (receptor 2-9-10-11, solver 12-13-14, effector
    /// 15-16-2) and a velocity loop (receptor 5-17-18, solver 19,
    /// effector 20-5).
    pub const COMPLEX_NET: &str =
        "1I2(A9I10(C11,B14I13C)12I15C16I)2C3I4C5(I17(C18,A20B)19I20A)5I6C7I8";

    #[test]
    fn complex_net_parses_to_twenty_nodes_and_one_arc_per_letter() {
        let net = parse(COMPLEX_NET).unwrap();
        let letters = COMPLEX_NET
            .chars()
            .filter(|c| matches!(c, 'C' | 'I' | 'A' | 'B'))
            .count();
        assert_eq!(net.node_count(), 20);
        assert_eq!(net.arc_count(), letters);
        assert!(net.validate().is_empty());
    }

    #[test]
    fn complex_net_velocity_loop_wiring() {
        let net = parse(COMPLEX_NET).unwrap();
        let id = crate::net::NodeId::new;
        assert!(net.arc(id(5), id(17), ArcKind::Normal).is_some()); // reading
        assert!(net.arc(id(17), id(18), ArcKind::Normal).is_some()); // outlet
        assert!(net.arc(id(17), id(19), ArcKind::Associative).is_some());
        assert!(net.arc(id(20), id(19), ArcKind::Inhibitory).is_some());
        assert!(net.arc(id(19), id(20), ArcKind::Normal).is_some());
        assert!(net.arc(id(20), id(5), ArcKind::Associative).is_some());
        assert!(net.is_place(id(20)));
        assert!(net.is_transition(id(19)));
    }

    #[test]
    fn complex_net_round_trips() {
        assert!(round_trip_check(COMPLEX_NET).unwrap());
    }

    #[test]
    fn comments_are_stripped() {
        let text = "1I2 # the producer\nC3  # the consumer\n";
        assert_eq!(strip_comments(text), "1I2C3");
    }
}
