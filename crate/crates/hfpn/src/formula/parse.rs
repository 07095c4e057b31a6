//! Formula parsing: a lexical pass, a bracket-structure pass, and a
//! semantic pass that assigns shared indices, distributes group indices into
//! open slots and allocates fresh ids.

use std::collections::{BTreeMap, BTreeSet};

use super::{FormulaError, ParseDiagnostic};
use crate::net::{Arc, ArcKind, Net, NetBuilder, NodeId, Place, Transition};
use crate::speed::{parse_speed, SpeedExpr};

pub fn parse(text: &str) -> Result<Net, FormulaError> {
    parse_detailed(text).map(|outcome| outcome.net)
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub net: Net,
    /// Ids invented for slots the formula left empty, in allocation order.
    pub fresh_ids: Vec<NodeId>,
}

pub fn parse_detailed(text: &str) -> Result<ParseOutcome, FormulaError> {
    let tokens = lex(text)?;
    let tree = structure(&tokens)?;
    Semantics::run(text, tree)
}

fn syntax(offset: usize, message: impl Into<String>, expected: &[&str]) -> FormulaError {
    FormulaError::Syntax(ParseDiagnostic {
        offset,
        message: message.into(),
        expected: expected.iter().map(|s| s.to_string()).collect(),
    })
}

// ---------------------------------------------------------------------------
// Lexing

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Letter {
    C,
    I,
    A,
    B,
}

impl Letter {
    pub(crate) fn symbol(self) -> char {
        match self {
            Letter::C => 'C',
            Letter::I => 'I',
            Letter::A => 'A',
            Letter::B => 'B',
        }
    }

    /// Node class of the unit's pre-slot (true = place).
    fn pre_is_place(self) -> bool {
        !matches!(self, Letter::I)
    }

    /// Node class of the unit's post-slot (true = place).
    fn post_is_place(self) -> bool {
        matches!(self, Letter::I)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Index(u32),
    Letter(Letter),
    LParen,
    RParen,
    Comma,
    Braces(Vec<(String, String, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
struct Spanned {
    token: Token,
    offset: usize,
}

/// Subscript digits normalize to their ASCII values.
fn subscript_digit(c: char) -> Option<u32> {
    let code = c as u32;
    if (0x2080..=0x2089).contains(&code) {
        Some(code - 0x2080)
    } else {
        None
    }
}

fn lex(text: &str) -> Result<Vec<Spanned>, FormulaError> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();

    while let Some(&(offset, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '#' {
            while let Some(&(_, c)) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
            }
            continue;
        }
        if c.is_ascii_digit() || subscript_digit(c).is_some() {
            let mut value: u64 = 0;
            while let Some(&(_, c)) = chars.peek() {
                let digit = if c.is_ascii_digit() {
                    c as u32 - '0' as u32
                } else if let Some(d) = subscript_digit(c) {
                    d
                } else {
                    break;
                };
                value = value * 10 + digit as u64;
                if value > u32::MAX as u64 {
                    return Err(syntax(offset, "index out of range", &[]));
                }
                chars.next();
            }
            if value == 0 {
                return Err(syntax(offset, "indices are positive integers", &[]));
            }
            tokens.push(Spanned {
                token: Token::Index(value as u32),
                offset,
            });
            continue;
        }
        match c {
            'C' | 'I' | 'A' | 'B' => {
                let letter = match c {
                    'C' => Letter::C,
                    'I' => Letter::I,
                    'A' => Letter::A,
                    _ => Letter::B,
                };
                tokens.push(Spanned {
                    token: Token::Letter(letter),
                    offset,
                });
                chars.next();
            }
            '(' => {
                tokens.push(Spanned {
                    token: Token::LParen,
                    offset,
                });
                chars.next();
            }
            ')' => {
                tokens.push(Spanned {
                    token: Token::RParen,
                    offset,
                });
                chars.next();
            }
            ',' => {
                tokens.push(Spanned {
                    token: Token::Comma,
                    offset,
                });
                chars.next();
            }
            '{' => {
                chars.next();
                let entries = lex_braces(text, &mut chars, offset)?;
                tokens.push(Spanned {
                    token: Token::Braces(entries),
                    offset,
                });
            }
            other => {
                return Err(syntax(
                    offset,
                    format!("unexpected character '{other}'"),
                    &["index", "C", "I", "A", "B", "(", ")", ",", "{"],
                ));
            }
        }
    }
    Ok(tokens)
}

/// Brace bodies are `key=value` pairs; values are scanned with parenthesis
/// nesting so `v=min(m(2),3)` stays one value.
fn lex_braces(
    text: &str,
    chars: &mut std::iter::Peekable<std::str::CharIndices>,
    open_offset: usize,
) -> Result<Vec<(String, String, usize)>, FormulaError> {
    let mut entries = Vec::new();
    loop {
        // key
        let mut key = String::new();
        let mut key_offset = None;
        while let Some(&(off, c)) = chars.peek() {
            if c.is_ascii_alphabetic() {
                key.push(c);
                key_offset.get_or_insert(off);
                chars.next();
            } else if c.is_whitespace() {
                chars.next();
            } else {
                break;
            }
        }
        let key_offset = key_offset
            .ok_or_else(|| syntax(open_offset, "unterminated brace parameters", &["key"]))?;
        if key.is_empty() {
            return Err(syntax(
                key_offset,
                "expected a parameter key",
                &["m", "v", "d", "k", "w"],
            ));
        }
        match chars.peek() {
            Some(&(_, '=')) => {
                chars.next();
            }
            Some(&(off, _)) => return Err(syntax(off, "expected '='", &["="])),
            None => return Err(syntax(text.len(), "unterminated brace parameters", &["="])),
        }
        // value: up to ',' or '}' at parenthesis depth zero
        let mut value = String::new();
        let mut depth = 0usize;
        let value_offset = chars.peek().map(|&(off, _)| off).unwrap_or(text.len());
        loop {
            match chars.peek() {
                Some(&(_, '(')) => {
                    depth += 1;
                    value.push('(');
                    chars.next();
                }
                Some(&(off, ')')) => {
                    if depth == 0 {
                        return Err(syntax(off, "unbalanced ')' in parameter value", &[]));
                    }
                    depth -= 1;
                    value.push(')');
                    chars.next();
                }
                Some(&(_, ',')) if depth == 0 => {
                    chars.next();
                    break;
                }
                Some(&(_, '}')) if depth == 0 => {
                    entries.push((key, value.trim().to_string(), value_offset));
                    chars.next();
                    return Ok(entries);
                }
                Some(&(_, c)) => {
                    value.push(c);
                    chars.next();
                }
                None => return Err(syntax(text.len(), "unterminated brace parameters", &["}"])),
            }
        }
        entries.push((key, value.trim().to_string(), value_offset));
    }
}

// ---------------------------------------------------------------------------
// Bracket structure

#[derive(Debug, Clone)]
enum Element {
    Index {
        id: u32,
        braces: Option<Vec<(String, String, usize)>>,
        offset: usize,
    },
    Letter {
        letter: Letter,
        braces: Option<Vec<(String, String, usize)>>,
        offset: usize,
    },
    Group {
        branches: Vec<Vec<Element>>,
    },
}

fn structure(tokens: &[Spanned]) -> Result<Vec<Element>, FormulaError> {
    let mut pos = 0usize;
    let elements = seq(tokens, &mut pos, None)?;
    if pos != tokens.len() {
        return Err(syntax(
            tokens[pos].offset,
            "unmatched ')' or ','",
            &["end of input"],
        ));
    }
    Ok(elements)
}

fn seq(
    tokens: &[Spanned],
    pos: &mut usize,
    group_open: Option<usize>,
) -> Result<Vec<Element>, FormulaError> {
    let mut out: Vec<Element> = Vec::new();
    while *pos < tokens.len() {
        let spanned = &tokens[*pos];
        match &spanned.token {
            Token::Index(id) => {
                *pos += 1;
                out.push(Element::Index {
                    id: *id,
                    braces: take_braces(tokens, pos),
                    offset: spanned.offset,
                });
            }
            Token::Letter(letter) => {
                *pos += 1;
                out.push(Element::Letter {
                    letter: *letter,
                    braces: take_braces(tokens, pos),
                    offset: spanned.offset,
                });
            }
            Token::LParen => {
                let open = spanned.offset;
                *pos += 1;
                let mut branches = Vec::new();
                loop {
                    let branch = seq(tokens, pos, Some(open))?;
                    if branch.is_empty() {
                        return Err(FormulaError::EmptyGroup { offset: open });
                    }
                    branches.push(branch);
                    match tokens.get(*pos).map(|s| &s.token) {
                        Some(Token::Comma) => {
                            *pos += 1;
                        }
                        Some(Token::RParen) => {
                            *pos += 1;
                            break;
                        }
                        _ => {
                            return Err(syntax(
                                tokens.get(*pos).map(|s| s.offset).unwrap_or_else(|| {
                                    tokens.last().map(|s| s.offset + 1).unwrap_or(0)
                                }),
                                "unterminated group",
                                &[",", ")"],
                            ))
                        }
                    }
                }
                out.push(Element::Group { branches });
            }
            Token::RParen | Token::Comma => {
                if group_open.is_some() {
                    return Ok(out);
                }
                return Err(syntax(spanned.offset, "unmatched ')' or ','", &[]));
            }
            Token::Braces(_) => {
                return Err(syntax(
                    spanned.offset,
                    "brace parameters must follow an index or a unit letter",
                    &["index", "letter"],
                ));
            }
        }
    }
    Ok(out)
}

fn take_braces(tokens: &[Spanned], pos: &mut usize) -> Option<Vec<(String, String, usize)>> {
    if let Some(Spanned {
        token: Token::Braces(entries),
        ..
    }) = tokens.get(*pos)
    {
        *pos += 1;
        Some(entries.clone())
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Semantics

#[derive(Debug)]
struct RawUnit {
    letter: Letter,
    pre: u32,
    post: u32,
    threshold: f64,
    weight: u32,
}

#[derive(Debug, Default, Clone)]
struct NodeParams {
    marking: Option<(f64, usize)>,
    speed: Option<(SpeedExpr, usize)>,
    delay: Option<(f64, usize)>,
}

struct Semantics<'a> {
    text: &'a str,
    units: Vec<RawUnit>,
    params: BTreeMap<u32, NodeParams>,
    /// true = place
    classes: BTreeMap<u32, (bool, usize)>,
    next_fresh: u32,
    fresh_ids: Vec<u32>,
}

impl<'a> Semantics<'a> {
    fn run(text: &'a str, tree: Vec<Element>) -> Result<ParseOutcome, FormulaError> {
        let mut written = BTreeSet::new();
        collect_indices(&tree, &mut written);
        let next_fresh = written.iter().max().copied().unwrap_or(0) + 1;

        let mut sem = Semantics {
            text,
            units: Vec::new(),
            params: BTreeMap::new(),
            classes: BTreeMap::new(),
            next_fresh,
            fresh_ids: Vec::new(),
        };
        sem.resolve_seq(&tree, None, None)?;
        sem.build()
    }

    fn fresh(&mut self) -> u32 {
        let id = self.next_fresh;
        self.next_fresh += 1;
        self.fresh_ids.push(id);
        id
    }

    fn bind_class(&mut self, id: u32, is_place: bool, offset: usize) -> Result<(), FormulaError> {
        match self.classes.get(&id) {
            Some((existing, _)) if *existing != is_place => {
                Err(FormulaError::IndexClassClash { id, offset })
            }
            Some(_) => Ok(()),
            None => {
                self.classes.insert(id, (is_place, offset));
                Ok(())
            }
        }
    }

    fn resolve_seq(
        &mut self,
        items: &[Element],
        lead: Option<u32>,
        trail: Option<u32>,
    ) -> Result<(), FormulaError> {
        // Split the sequence into operands (letters and groups) and the
        // optional index occupying each gap between them.
        enum Operand<'e> {
            Letter {
                letter: Letter,
                braces: &'e Option<Vec<(String, String, usize)>>,
                offset: usize,
            },
            Group {
                branches: &'e [Vec<Element>],
            },
        }

        let mut operands: Vec<Operand> = Vec::new();
        let mut gaps: Vec<Option<(u32, usize)>> = vec![None];

        for item in items {
            match item {
                Element::Index { id, braces, offset } => {
                    if let Some(braces) = braces {
                        self.apply_node_braces(*id, braces)?;
                    }
                    let gap = gaps.last_mut().unwrap();
                    if gap.is_some() {
                        return Err(syntax(
                            *offset,
                            format!("index {id} does not bind any unit"),
                            &["C", "I", "A", "B", "("],
                        ));
                    }
                    *gap = Some((*id, *offset));
                }
                Element::Letter {
                    letter,
                    braces,
                    offset,
                } => {
                    operands.push(Operand::Letter {
                        letter: *letter,
                        braces,
                        offset: *offset,
                    });
                    gaps.push(None);
                }
                Element::Group { branches } => {
                    operands.push(Operand::Group { branches });
                    gaps.push(None);
                }
            }
        }

        if operands.is_empty() {
            if let Some(Some((id, offset))) = gaps.first() {
                let (id, offset) = (*id, *offset);
                return Err(syntax(
                    offset,
                    format!("index {id} does not bind any unit"),
                    &["C", "I", "A", "B", "("],
                ));
            }
            return Ok(());
        }

        // Slot classes of the boundary between operand i-1 and operand i:
        // post class of the left letter and pre class of the right letter.
        // Groups accept either class (their branches decide internally).
        let post_class = |op: &Operand| -> Option<bool> {
            match op {
                Operand::Letter { letter, .. } => Some(letter.post_is_place()),
                Operand::Group { .. } => None,
            }
        };
        let pre_class = |op: &Operand| -> Option<bool> {
            match op {
                Operand::Letter { letter, .. } => Some(letter.pre_is_place()),
                Operand::Group { .. } => None,
            }
        };

        // For each operand, the resolved pre/post connection value. A `None`
        // stays open and is filled from lead/trail afterwards (letters), or
        // passes the distribution through (groups).
        let n = operands.len();
        let mut pre_val: Vec<Option<u32>> = vec![None; n];
        let mut post_val: Vec<Option<u32>> = vec![None; n];

        for (gap_idx, gap) in gaps.iter().enumerate() {
            let left = gap_idx.checked_sub(1);
            let right = if gap_idx < n { Some(gap_idx) } else { None };
            match *gap {
                Some((id, _)) => match (left, right) {
                    (None, Some(r)) => pre_val[r] = Some(id),
                    (Some(l), None) => post_val[l] = Some(id),
                    (Some(l), Some(r)) => {
                        let lc = post_class(&operands[l]);
                        let rc = pre_class(&operands[r]);
                        match (lc, rc) {
                            (Some(a), Some(b)) if a != b => {
                                // Class mismatch: the index binds rightward
                                // and the left post-slot stays open for
                                // distribution or a fresh id.
                                pre_val[r] = Some(id);
                            }
                            _ => {
                                post_val[l] = Some(id);
                                pre_val[r] = Some(id);
                            }
                        }
                    }
                    (None, None) => unreachable!(),
                },
                None => {
                    if let (Some(l), Some(r)) = (left, right) {
                        let lc = post_class(&operands[l]);
                        let rc = pre_class(&operands[r]);
                        let compatible = match (lc, rc) {
                            (Some(a), Some(b)) => a == b,
                            _ => true,
                        };
                        if compatible {
                            let f = self.fresh();
                            post_val[l] = Some(f);
                            pre_val[r] = Some(f);
                        }
                        // Incompatible adjacent letters: both slots stay
                        // open; lead/trail or fresh ids fill them below.
                    }
                }
            }
        }

        // The sequence's own lead feeds the first operand if its pre is
        // still open; symmetrically for trail. For letters the same indices
        // also fill clash-opened interior slots.
        for (idx, op) in operands.iter().enumerate() {
            match op {
                Operand::Letter {
                    letter,
                    braces,
                    offset,
                } => {
                    let pre = match pre_val[idx] {
                        Some(id) => id,
                        None => match lead {
                            Some(id) => id,
                            None => self.fresh(),
                        },
                    };
                    let post = match post_val[idx] {
                        Some(id) => id,
                        None => match trail {
                            Some(id) => id,
                            None => self.fresh(),
                        },
                    };
                    self.bind_class(pre, letter.pre_is_place(), *offset)?;
                    self.bind_class(post, letter.post_is_place(), *offset)?;
                    let (threshold, weight) = self.arc_braces(braces)?;
                    self.units.push(RawUnit {
                        letter: *letter,
                        pre,
                        post,
                        threshold,
                        weight,
                    });
                }
                Operand::Group { branches } => {
                    // A group at the edge of the sequence passes the outer
                    // distribution through; interior groups use only the
                    // indices adjacent to them.
                    let group_lead = if idx == 0 {
                        pre_val[idx].or(lead)
                    } else {
                        pre_val[idx]
                    };
                    let group_trail = if idx == n - 1 {
                        post_val[idx].or(trail)
                    } else {
                        post_val[idx]
                    };
                    for branch in branches.iter() {
                        self.resolve_seq(branch, group_lead, group_trail)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn apply_node_braces(
        &mut self,
        id: u32,
        braces: &[(String, String, usize)],
    ) -> Result<(), FormulaError> {
        for (key, value, offset) in braces {
            let entry = self.params.entry(id).or_default();
            match key.as_str() {
                "m" => {
                    let v: f64 = value
                        .parse()
                        .map_err(|_| syntax(*offset, format!("bad number '{value}'"), &[]))?;
                    if let Some((existing, _)) = entry.marking {
                        if existing != v {
                            return Err(FormulaError::ConflictingNodeParams {
                                id,
                                offset: *offset,
                            });
                        }
                    }
                    entry.marking = Some((v, *offset));
                }
                "v" => {
                    let expr = parse_speed(value).map_err(|e| {
                        syntax(*offset + e.offset, e.message, &["speed expression"])
                    })?;
                    if let Some((existing, _)) = &entry.speed {
                        if *existing != expr {
                            return Err(FormulaError::ConflictingNodeParams {
                                id,
                                offset: *offset,
                            });
                        }
                    }
                    entry.speed = Some((expr, *offset));
                }
                "d" => {
                    let v: f64 = value
                        .parse()
                        .map_err(|_| syntax(*offset, format!("bad number '{value}'"), &[]))?;
                    if let Some((existing, _)) = entry.delay {
                        if existing != v {
                            return Err(FormulaError::ConflictingNodeParams {
                                id,
                                offset: *offset,
                            });
                        }
                    }
                    entry.delay = Some((v, *offset));
                }
                other => {
                    return Err(syntax(
                        *offset,
                        format!("'{other}' is not a node parameter"),
                        &["m", "v", "d"],
                    ));
                }
            }
        }
        Ok(())
    }

    fn arc_braces(
        &mut self,
        braces: &Option<Vec<(String, String, usize)>>,
    ) -> Result<(f64, u32), FormulaError> {
        let mut threshold = 0.0;
        let mut weight = 1u32;
        if let Some(entries) = braces {
            for (key, value, offset) in entries {
                match key.as_str() {
                    "k" => {
                        threshold = value
                            .parse()
                            .map_err(|_| syntax(*offset, format!("bad number '{value}'"), &[]))?;
                    }
                    "w" => {
                        weight = value
                            .parse()
                            .map_err(|_| syntax(*offset, format!("bad weight '{value}'"), &[]))?;
                        if weight == 0 {
                            return Err(syntax(*offset, "weights are positive", &[]));
                        }
                    }
                    other => {
                        return Err(syntax(
                            *offset,
                            format!("'{other}' is not an arc parameter"),
                            &["k", "w"],
                        ));
                    }
                }
            }
        }
        Ok((threshold, weight))
    }

    fn build(self) -> Result<ParseOutcome, FormulaError> {
        let Semantics {
            text,
            units,
            params,
            classes,
            fresh_ids,
            ..
        } = self;
        let _ = text;

        let mut builder = NetBuilder::new();
        for (id, (is_place, _)) in &classes {
            let node = NodeId::new(*id);
            let p = params.get(id);
            if *is_place {
                if let Some(p) = p {
                    if let Some((_, off)) = &p.speed {
                        return Err(FormulaError::ConflictingNodeParams {
                            id: *id,
                            offset: *off,
                        });
                    }
                    if let Some((_, off)) = &p.delay {
                        return Err(FormulaError::ConflictingNodeParams {
                            id: *id,
                            offset: *off,
                        });
                    }
                }
                let marking = p.and_then(|p| p.marking).map(|(v, _)| v).unwrap_or(0.0);
                builder.place(Place::continuous(node, marking));
            } else {
                if let Some(p) = p {
                    if let Some((_, off)) = &p.marking {
                        return Err(FormulaError::ConflictingNodeParams {
                            id: *id,
                            offset: *off,
                        });
                    }
                    if let (Some(_), Some((_, off))) = (&p.speed, &p.delay) {
                        return Err(FormulaError::ConflictingNodeParams {
                            id: *id,
                            offset: *off,
                        });
                    }
                }
                match p.and_then(|p| p.delay) {
                    Some((delay, _)) => builder.transition(Transition::discrete(node, delay)),
                    None => {
                        let speed = p
                            .and_then(|p| p.speed.clone())
                            .map(|(e, _)| e)
                            .unwrap_or(SpeedExpr::Const(1.0));
                        builder.transition(Transition::continuous(node, speed))
                    }
                };
            }
        }

        // Ids referenced only inside speed expressions must exist; a formula
        // cannot introduce them, so this is a parse-level error.
        for unit in &units {
            // In formula order the pre-slot is always the arc source: C/A/B
            // run place -> transition, I runs transition -> place.
            let (source, target) = (unit.pre, unit.post);
            let kind = match unit.letter {
                Letter::C | Letter::I => ArcKind::Normal,
                Letter::A => ArcKind::Associative,
                Letter::B => ArcKind::Inhibitory,
            };
            builder.arc(
                Arc::new(NodeId::new(source), NodeId::new(target), kind)
                    .with_params(unit.threshold, unit.weight),
            );
        }

        let net = builder.build().map_err(|diags| {
            let first = diags.into_iter().next().unwrap();
            match first {
                crate::net::Diagnostic::BadSpeedRef { transition, place } => syntax(
                    0,
                    format!(
                        "speed of transition {transition} references place {place} which is not one of its inputs"
                    ),
                    &[],
                ),
                other => syntax(0, other.to_string(), &[]),
            }
        })?;

        Ok(ParseOutcome {
            net,
            fresh_ids: fresh_ids.into_iter().map(NodeId::new).collect(),
        })
    }
}

fn collect_indices(items: &[Element], out: &mut BTreeSet<u32>) {
    for item in items {
        match item {
            Element::Index { id, braces, .. } => {
                out.insert(*id);
                // Speed expressions may reference other nodes by id; those
                // ids are reserved so fresh allocation cannot collide.
                if let Some(entries) = braces {
                    for (key, value, _) in entries {
                        if key == "v" {
                            if let Ok(expr) = parse_speed(value) {
                                for p in expr.places() {
                                    out.insert(p.get());
                                }
                            }
                        }
                    }
                }
            }
            Element::Letter { .. } => {}
            Element::Group { branches } => {
                for branch in branches {
                    collect_indices(branch, out);
                }
            }
        }
    }
}
