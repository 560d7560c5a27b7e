//! Builtin knowledge bases: the two conjunction tasks, two-summand
//! addition, and additive-equation decipherment over a numeral base.

use super::{Concept, ConceptDef, KbError, KnowledgeBase, Label, LabelAlphabet, LabelSeq};

/// The builtin KB families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinKind {
    /// Single concept over triples: the last label is the conjunction of the
    /// first two.
    ConjEq,
    /// Two concepts over pairs keyed by the value of the conjunction.
    Conjunction,
    /// One concept per digit-pair sum, labels are digits of the given base.
    Addition,
    /// Well-formed true additive equations of token lengths 5..7 in the
    /// given base; labels are digits plus the two operator symbols.
    Hed,
}

impl BuiltinKind {
    pub fn name(self) -> &'static str {
        match self {
            BuiltinKind::ConjEq => "conj_eq",
            BuiltinKind::Conjunction => "conjunction",
            BuiltinKind::Addition => "addition",
            BuiltinKind::Hed => "hed",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "conj_eq" | "conjeq" => Some(BuiltinKind::ConjEq),
            "conjunction" => Some(BuiltinKind::Conjunction),
            "addition" => Some(BuiltinKind::Addition),
            "hed" => Some(BuiltinKind::Hed),
            _ => None,
        }
    }
}

const BASE_RANGE: (u32, u32) = (2, 16);

fn check_base(kind: BuiltinKind, base: u32) -> Result<(), KbError> {
    let (lo, hi) = BASE_RANGE;
    if base < lo || base > hi {
        return Err(KbError::BaseOutOfRange { kind: kind.name().into(), base, lo, hi });
    }
    Ok(())
}

/// Builds one of the builtin KBs. `base` is required for Addition and Hed
/// and ignored otherwise.
pub fn builtin_kb(kind: BuiltinKind, base: u32) -> Result<KnowledgeBase, KbError> {
    match kind {
        BuiltinKind::ConjEq => Ok(conj_eq()),
        BuiltinKind::Conjunction => Ok(conjunction()),
        BuiltinKind::Addition => addition(base),
        BuiltinKind::Hed => hed(base),
    }
}

/// The single-concept conjunction-equation KB: triples with y2 = y0 AND y1.
pub fn conj_eq() -> KnowledgeBase {
    let alphabet = LabelAlphabet::with_names(2, vec!["0".into(), "1".into()]).unwrap();
    let facts = vec![vec![0, 0, 0], vec![0, 1, 0], vec![1, 0, 0], vec![1, 1, 1]];
    KnowledgeBase::new(
        "conj_eq",
        alphabet,
        vec![Concept { id: "conj".into(), arity: 3, def: ConceptDef::Facts(facts) }],
    )
    .unwrap()
}

/// The two-concept conjunction KB: pairs tagged by y0 AND y1.
pub fn conjunction() -> KnowledgeBase {
    let alphabet = LabelAlphabet::with_names(2, vec!["0".into(), "1".into()]).unwrap();
    KnowledgeBase::new(
        "conjunction",
        alphabet,
        vec![
            Concept {
                id: "conj0".into(),
                arity: 2,
                def: ConceptDef::Facts(vec![vec![0, 0], vec![0, 1], vec![1, 0]]),
            },
            Concept { id: "conj1".into(), arity: 2, def: ConceptDef::Facts(vec![vec![1, 1]]) },
        ],
    )
    .unwrap()
}

/// Two-summand addition over base-`base` digits: one concept per sum value
/// 0 ..= 2(base-1), named by its English numeral.
pub fn addition(base: u32) -> Result<KnowledgeBase, KbError> {
    check_base(BuiltinKind::Addition, base)?;
    let names = (0..base).map(digit_name).collect();
    let alphabet = LabelAlphabet::with_names(base as usize, names).unwrap();
    let concepts = (0..=2 * (base - 1))
        .map(|sum| Concept {
            id: english_numeral(sum).into(),
            arity: 2,
            def: ConceptDef::Builtin { kind: BuiltinKind::Addition, base: Some(base) },
        })
        .collect();
    KnowledgeBase::new(format!("addition-{base}"), alphabet, concepts)
}

/// Equation decipherment over base-`base` numerals: concepts equation5,
/// equation6, equation7 hold the true equations "A + B = C" of that token
/// length, with no-leading-zero numerals (a lone 0 digit is allowed).
pub fn hed(base: u32) -> Result<KnowledgeBase, KbError> {
    check_base(BuiltinKind::Hed, base)?;
    let mut names: Vec<String> = (0..base).map(digit_name).collect();
    names.push("+".into());
    names.push("=".into());
    let alphabet = LabelAlphabet::with_names(base as usize + 2, names).unwrap();
    let concepts = (5..=7)
        .map(|len| Concept {
            id: format!("equation{len}"),
            arity: len,
            def: ConceptDef::Builtin { kind: BuiltinKind::Hed, base: Some(base) },
        })
        .collect();
    KnowledgeBase::new(format!("hed-{base}"), alphabet, concepts)
}

/// Enumerates the candidate set of one builtin concept.
pub(super) fn ground_builtin(
    kind: BuiltinKind,
    base: Option<u32>,
    concept: &Concept,
    alphabet: &LabelAlphabet,
) -> Result<Vec<LabelSeq>, KbError> {
    let unknown = || KbError::UnknownBuiltinConcept {
        kind: kind.name().into(),
        id: concept.id.clone(),
    };
    match kind {
        BuiltinKind::ConjEq => {
            if concept.id != "conj" || concept.arity != 3 || alphabet.num_classes() != 2 {
                return Err(unknown());
            }
            Ok(vec![vec![0, 0, 0], vec![0, 1, 0], vec![1, 0, 0], vec![1, 1, 1]])
        }
        BuiltinKind::Conjunction => {
            if concept.arity != 2 || alphabet.num_classes() != 2 {
                return Err(unknown());
            }
            match concept.id.as_str() {
                "conj0" => Ok(vec![vec![0, 0], vec![0, 1], vec![1, 0]]),
                "conj1" => Ok(vec![vec![1, 1]]),
                _ => Err(unknown()),
            }
        }
        BuiltinKind::Addition => {
            let base = base.ok_or_else(unknown)?;
            check_base(kind, base)?;
            let sum = english_to_int(&concept.id).ok_or_else(unknown)?;
            if concept.arity != 2 || sum > 2 * (base - 1) {
                return Err(unknown());
            }
            let lo = sum.saturating_sub(base - 1);
            let hi = sum.min(base - 1);
            Ok((lo..=hi).map(|i| vec![i as Label, (sum - i) as Label]).collect())
        }
        BuiltinKind::Hed => {
            let base = base.ok_or_else(unknown)?;
            check_base(kind, base)?;
            let len = concept
                .id
                .strip_prefix("equation")
                .and_then(|n| n.parse::<usize>().ok())
                .ok_or_else(unknown)?;
            if len != concept.arity || !(5..=7).contains(&len) {
                return Err(unknown());
            }
            Ok(enumerate_equations(base, len))
        }
    }
}

/// All true equations "A + B = C" whose token sequence has length `len`.
fn enumerate_equations(base: u32, len: usize) -> Vec<LabelSeq> {
    let plus = base as Label;
    let equals = base as Label + 1;
    let digit_total = len - 2;
    let mut out = Vec::new();
    for len_a in 1..=digit_total.saturating_sub(2) {
        for len_b in 1..=digit_total - len_a - 1 {
            let len_c = digit_total - len_a - len_b;
            for a in numeral_range(base, len_a) {
                for b in numeral_range(base, len_b) {
                    let c = a + b;
                    if numeral_len(base, c) != len_c {
                        continue;
                    }
                    let mut seq = Vec::with_capacity(len);
                    seq.extend(digits(base, a, len_a));
                    seq.push(plus);
                    seq.extend(digits(base, b, len_b));
                    seq.push(equals);
                    seq.extend(digits(base, c, len_c));
                    out.push(seq);
                }
            }
        }
    }
    out
}

/// Values whose canonical numeral has exactly `len` digits: no leading
/// zero, except the single digit 0.
fn numeral_range(base: u32, len: usize) -> std::ops::RangeInclusive<u64> {
    let base = u64::from(base);
    if len == 1 {
        0..=base - 1
    } else {
        base.pow(len as u32 - 1)..=base.pow(len as u32) - 1
    }
}

fn numeral_len(base: u32, value: u64) -> usize {
    let base = u64::from(base);
    let mut len = 1;
    let mut v = value / base;
    while v > 0 {
        len += 1;
        v /= base;
    }
    len
}

fn digits(base: u32, value: u64, len: usize) -> Vec<Label> {
    let base = u64::from(base);
    let mut out = vec![0 as Label; len];
    let mut v = value;
    for slot in out.iter_mut().rev() {
        *slot = (v % base) as Label;
        v /= base;
    }
    out
}

const ENGLISH: [&str; 31] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
    "twenty",
    "twenty_one",
    "twenty_two",
    "twenty_three",
    "twenty_four",
    "twenty_five",
    "twenty_six",
    "twenty_seven",
    "twenty_eight",
    "twenty_nine",
    "thirty",
];

fn english_numeral(n: u32) -> &'static str {
    ENGLISH[n as usize]
}

fn english_to_int(name: &str) -> Option<u32> {
    ENGLISH.iter().position(|e| *e == name).map(|i| i as u32)
}

fn digit_name(d: u32) -> String {
    char::from_digit(d, 16).unwrap().to_string()
}
