//! Fact-file reading and writing.
//!
//! ```text
//! file      ::= { line }
//! line      ::= blank | comment | delimiter | fact
//! delimiter ::= "%" "interpretation" ID [ START END ]
//! comment   ::= "%" any text not starting with "interpretation"
//! fact      ::= atom "."            (see the term grammar in ec::parse)
//! ```
//!
//! `holdsAt/2` facts over a target fluent are annotation, every other fact
//! is narrative. Time stamps must not decrease along the file. Without
//! delimiters the facts are cut into windows of `chunk_size` time points;
//! the annotation of the time point after a window is copied into it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::ec::{parse::Parser, Atom, Interpretation, InterpretationError, ParseError, Sym, HOLDS_AT};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StreamError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: ParseError },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: time {time} after time {previous}")]
    NonMonotone { line: usize, time: i64, previous: i64 },
    #[error("interpretation ending at line {line}: {source}")]
    Interpretation { line: usize, source: InterpretationError },
    #[error("chunk size must be at least 1")]
    ChunkSize,
}

struct Block {
    id: Option<u64>,
    range: Option<(i64, i64)>,
    facts: Vec<Atom>,
    end_line: usize,
}

fn is_annotation(a: &Atom, targets: &BTreeSet<Sym>) -> bool {
    a.pred.as_ref() == HOLDS_AT && a.args.len() == 2 && a.args[0].functor().is_some_and(|f| targets.contains(f))
}

fn build(
    id: u64,
    range: Option<(i64, i64)>,
    facts: Vec<Atom>,
    targets: &BTreeSet<Sym>,
    line: usize,
) -> Result<Option<Interpretation>, StreamError> {
    let (narr, ann): (Vec<Atom>, Vec<Atom>) = facts.into_iter().partition(|a| !is_annotation(a, targets));
    let (start, end) = match range {
        Some(r) => r,
        None => {
            let times = || narr.iter().chain(&ann).filter_map(Atom::time);
            let Some(start) = times().min() else {
                return Ok(None);
            };
            let end = narr
                .iter()
                .filter_map(Atom::time)
                .max()
                .unwrap_or_else(|| (ann.iter().filter_map(Atom::time).max().unwrap_or(start) - 1).max(start));
            (start, end)
        }
    };
    Interpretation::new(id, start, end, narr, ann)
        .map(Some)
        .map_err(|source| StreamError::Interpretation { line, source })
}

/// Parses a fact file into interpretations.
pub fn parse_stream(src: &str, chunk_size: usize, targets: &BTreeSet<Sym>) -> Result<Vec<Interpretation>, StreamError> {
    if chunk_size == 0 {
        return Err(StreamError::ChunkSize);
    }
    let mut blocks: Vec<Block> = Vec::new();
    let mut loose: Vec<(usize, Atom)> = Vec::new();
    let mut last_time: Option<i64> = None;
    let mut delimited = false;
    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        let text = raw.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(rest) = text.strip_prefix('%') {
            let mut words = rest.split_whitespace();
            if words.next() != Some("interpretation") {
                continue;
            }
            let nums: Vec<&str> = words.collect();
            let bad = |message: &str| StreamError::Syntax {
                line,
                message: message.to_string(),
            };
            let id = nums.first().ok_or_else(|| bad("interpretation delimiter needs an id"))?;
            let id: u64 = id.parse().map_err(|_| bad("interpretation id must be a non-negative integer"))?;
            let range = match nums.len() {
                1 => None,
                3 => {
                    let s: i64 = nums[1].parse().map_err(|_| bad("bad start time"))?;
                    let e: i64 = nums[2].parse().map_err(|_| bad("bad end time"))?;
                    Some((s, e))
                }
                _ => return Err(bad("expected `% interpretation <id> [<start> <end>]`")),
            };
            if !delimited && !loose.is_empty() {
                return Err(bad("facts before the first interpretation delimiter"));
            }
            delimited = true;
            if let Some(b) = blocks.last_mut() {
                b.end_line = line - 1;
            }
            blocks.push(Block {
                id: Some(id),
                range,
                facts: Vec::new(),
                end_line: line,
            });
            continue;
        }
        let mut p = Parser::new(text);
        let atom = p
            .atom()
            .and_then(|a| p.expect(b'.').map(|_| a))
            .map_err(|source| StreamError::Parse { line, source })?;
        if !p.at_end() {
            return Err(StreamError::Syntax {
                line,
                message: "one fact per line".into(),
            });
        }
        let Some(t) = atom.time() else {
            return Err(StreamError::Syntax {
                line,
                message: format!("fact {atom} has no integer time stamp"),
            });
        };
        if let Some(prev) = last_time {
            if t < prev {
                return Err(StreamError::NonMonotone {
                    line,
                    time: t,
                    previous: prev,
                });
            }
        }
        last_time = Some(t);
        match blocks.last_mut() {
            Some(b) if delimited => {
                b.facts.push(atom);
                b.end_line = line;
            }
            _ => loose.push((line, atom)),
        }
    }
    if delimited {
        let mut out = Vec::new();
        for b in blocks {
            let id = b.id.expect("delimited blocks carry ids");
            let interp = match build(id, b.range, b.facts, targets, b.end_line)? {
                Some(i) => i,
                None => Interpretation::new(id, 0, 0, [], []).map_err(|source| StreamError::Interpretation {
                    line: b.end_line,
                    source,
                })?,
            };
            out.push(interp);
        }
        return Ok(out);
    }
    chunk(loose, chunk_size, targets)
}

fn chunk(facts: Vec<(usize, Atom)>, chunk_size: usize, targets: &BTreeSet<Sym>) -> Result<Vec<Interpretation>, StreamError> {
    let Some(first) = facts.iter().filter_map(|(_, a)| a.time()).min() else {
        return Ok(Vec::new());
    };
    let last_narr = facts
        .iter()
        .filter(|(_, a)| !is_annotation(a, targets))
        .filter_map(|(_, a)| a.time())
        .max()
        .unwrap_or(first);
    let size = chunk_size as i64;
    let windows = ((last_narr - first) / size + 1) as usize;
    let mut narr: Vec<Vec<Atom>> = vec![Vec::new(); windows];
    let mut anns: BTreeMap<i64, Vec<Atom>> = BTreeMap::new();
    let mut last_line = vec![0usize; windows];
    for (line, a) in facts {
        let t = a.time().expect("checked while reading");
        if is_annotation(&a, targets) {
            anns.entry(t).or_default().push(a);
        } else {
            let w = ((t - first) / size) as usize;
            last_line[w] = line;
            narr[w].push(a);
        }
    }
    let mut out = Vec::with_capacity(windows);
    for (w, facts) in narr.into_iter().enumerate() {
        let start = first + w as i64 * size;
        let end = start + size - 1;
        let end = if w + 1 == windows { end.min(last_narr) } else { end };
        let ann: Vec<Atom> = anns.range(start..=end + 1).flat_map(|(_, v)| v.iter().cloned()).collect();
        let interp = Interpretation::new(w as u64, start, end, facts, ann).map_err(|source| StreamError::Interpretation {
            line: last_line[w],
            source,
        })?;
        out.push(interp);
    }
    if let Some((&t, _)) = anns.range(last_narr + 2..).next() {
        return Err(StreamError::Syntax {
            line: 0,
            message: format!("annotation at time {t} lies beyond the narrative"),
        });
    }
    Ok(out)
}

/// Writes interpretations with explicit delimiters, facts in time order.
pub fn render_stream(stream: &[Interpretation]) -> String {
    let mut out = String::new();
    for i in stream {
        let _ = writeln!(out, "% interpretation {} {} {}", i.id(), i.start(), i.end());
        let mut facts: Vec<(i64, bool, Atom)> = i
            .narrative()
            .iter()
            .map(|a| (a.time().unwrap_or(i.start()), false, a.clone()))
            .chain(i.annotation_atoms().map(|a| (a.time().unwrap_or(i.start()), true, a)))
            .collect();
        facts.sort();
        for (_, _, a) in facts {
            let _ = writeln!(out, "{a}.");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ec::sym;

    fn targets() -> BTreeSet<Sym> {
        [sym("moving")].into_iter().collect()
    }

    const TABLE_2A: &str = "\
happensAt(walk(id1),1).
happensAt(walk(id2),1).
holdsAt(coords(id1,201,454),1).
holdsAt(coords(id2,230,440),1).
holdsAt(direction(id1,270),1).
holdsAt(direction(id2,270),1).
happensAt(walk(id1),2).
happensAt(walk(id2),2).
holdsAt(coords(id1,201,454),2).
holdsAt(coords(id2,227,440),2).
holdsAt(direction(id1,275),2).
holdsAt(direction(id2,278),2).
holdsAt(moving(id1,id2),2).
";

    #[test]
    fn table_2a_as_one_chunk() {
        let s = parse_stream(TABLE_2A, 2, &targets()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].narrative().len(), 12);
        let ann: Vec<String> = s[0].annotation_atoms().map(|a| a.to_string()).collect();
        assert_eq!(ann, vec!["holdsAt(moving(id1,id2),2)"]);
    }

    #[test]
    fn chunk_of_one_copies_next_annotation() {
        let s = parse_stream(TABLE_2A, 1, &targets()).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s[0].is_annotated(&crate::ec::parse_term("moving(id1,id2)").unwrap(), 2));
        assert!(s[1].is_annotated(&crate::ec::parse_term("moving(id1,id2)").unwrap(), 2));
    }

    #[test]
    fn empty_file() {
        assert!(parse_stream("", 3, &targets()).unwrap().is_empty());
    }

    #[test]
    fn non_monotone_times() {
        let src = "happensAt(walk(a),1).\nhappensAt(walk(a),3).\nhappensAt(walk(a),2).\n";
        let err = parse_stream(src, 1, &targets()).unwrap_err();
        assert_eq!(
            err,
            StreamError::NonMonotone {
                line: 3,
                time: 2,
                previous: 3
            }
        );
    }

    #[test]
    fn malformed_line_number() {
        let err = parse_stream("happensAt(walk(a),1).\nhappensAt(walk(a),.\n", 1, &targets()).unwrap_err();
        assert!(matches!(err, StreamError::Parse { line: 2, .. }));
    }

    #[test]
    fn delimited_round_trip() {
        let s = parse_stream(TABLE_2A, 1, &targets()).unwrap();
        let text = render_stream(&s);
        assert!(text.starts_with("% interpretation 0 1 1\n"));
        assert_eq!(parse_stream(&text, 7, &targets()).unwrap(), s);
    }
}
