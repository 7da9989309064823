//! Span-anchored edits against an immutable source buffer.
//!
//! Offsets always refer to the original text. Inserts at one offset come out
//! ordered by `(phase, seq)`; an insert at the start of a replaced range is
//! emitted before the replacement and one at its end after it.

use thiserror::Error;

use crate::span::{indentation_at, SourceSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditKind {
    InsertBefore,
    InsertAfter,
    Replace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edit {
    pub kind: EditKind,
    pub anchor: SourceSpan,
    pub text: String,
    pub phase: u32,
    pub seq: u32,
}

impl Edit {
    /// Offset at which an insert lands.
    fn offset(&self) -> usize {
        match self.kind {
            EditKind::InsertBefore | EditKind::Replace => self.anchor.start,
            EditKind::InsertAfter => self.anchor.end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("replacement {}..{} overlaps replacement {}..{}", .0.start, .0.end, .1.start, .1.end)]
    OverlapError(SourceSpan, SourceSpan),
    #[error("insert at {offset} falls strictly inside replacement {}..{}", .replace.start, .replace.end)]
    InsertInsideReplace { offset: usize, replace: SourceSpan },
    #[error("anchor {}..{} lies outside the buffer of {len} bytes", .anchor.start, .anchor.end)]
    OutOfBounds { anchor: SourceSpan, len: usize },
}

#[derive(Debug, Clone)]
pub struct RewriteBuffer {
    source: String,
    edits: Vec<Edit>,
    next_seq: u32,
}

impl RewriteBuffer {
    pub fn new(source: impl Into<String>) -> Self {
        RewriteBuffer {
            source: source.into(),
            edits: Vec::new(),
            next_seq: 0,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn edits(&self) -> &[Edit] {
        &self.edits
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    /// Queues `edit` after validating it against the buffer and earlier edits.
    pub fn record(&mut self, edit: Edit) -> Result<(), RewriteError> {
        let a = edit.anchor;
        if a.start > a.end || a.end > self.source.len() {
            return Err(RewriteError::OutOfBounds {
                anchor: a,
                len: self.source.len(),
            });
        }
        for other in &self.edits {
            match (edit.kind, other.kind) {
                (EditKind::Replace, EditKind::Replace) => {
                    if overlaps(&a, &other.anchor) {
                        return Err(RewriteError::OverlapError(other.anchor, a));
                    }
                }
                (EditKind::Replace, _) => {
                    let o = other.offset();
                    if a.start < o && o < a.end {
                        return Err(RewriteError::InsertInsideReplace { offset: o, replace: a });
                    }
                }
                (_, EditKind::Replace) => {
                    let o = edit.offset();
                    let r = other.anchor;
                    if r.start < o && o < r.end {
                        return Err(RewriteError::InsertInsideReplace { offset: o, replace: r });
                    }
                }
                _ => {}
            }
        }
        self.next_seq = self.next_seq.max(edit.seq + 1);
        self.edits.push(edit);
        Ok(())
    }

    fn push(&mut self, kind: EditKind, anchor: SourceSpan, text: String, phase: u32) -> Result<(), RewriteError> {
        let seq = self.next_seq;
        self.record(Edit {
            kind,
            anchor,
            text,
            phase,
            seq,
        })
    }

    pub fn insert_before(&mut self, anchor: SourceSpan, text: impl Into<String>, phase: u32) -> Result<(), RewriteError> {
        self.push(EditKind::InsertBefore, anchor, text.into(), phase)
    }

    pub fn insert_after(&mut self, anchor: SourceSpan, text: impl Into<String>, phase: u32) -> Result<(), RewriteError> {
        self.push(EditKind::InsertAfter, anchor, text.into(), phase)
    }

    pub fn replace(&mut self, anchor: SourceSpan, text: impl Into<String>, phase: u32) -> Result<(), RewriteError> {
        self.push(EditKind::Replace, anchor, text.into(), phase)
    }

    /// The source with every recorded edit applied.
    pub fn materialize(&self) -> String {
        let mut inserts: Vec<&Edit> = self.edits.iter().filter(|e| e.kind != EditKind::Replace).collect();
        inserts.sort_by_key(|e| (e.offset(), e.phase, e.seq));
        let mut replaces: Vec<&Edit> = self.edits.iter().filter(|e| e.kind == EditKind::Replace).collect();
        replaces.sort_by_key(|e| (e.anchor.start, e.anchor.end, e.phase, e.seq));

        let mut out = String::with_capacity(self.source.len() + 64 * self.edits.len());
        let mut cursor = 0;
        let mut ins = inserts.iter().peekable();
        let mut reps = replaces.iter().peekable();
        loop {
            let next_ins = ins.peek().map(|e| e.offset());
            let next_rep = reps.peek().map(|e| e.anchor.start);
            match (next_ins, next_rep) {
                (None, None) => break,
                // Inserts at the start of a replacement precede it.
                (Some(i), r) if r.is_none_or(|r| i <= r) => {
                    let e = ins.next().unwrap();
                    out.push_str(&self.source[cursor..i]);
                    cursor = i;
                    out.push_str(&e.text);
                }
                (_, Some(r)) => {
                    let e = reps.next().unwrap();
                    out.push_str(&self.source[cursor..r]);
                    out.push_str(&e.text);
                    cursor = e.anchor.end;
                }
                _ => unreachable!(),
            }
        }
        out.push_str(&self.source[cursor..]);
        out
    }
}

fn overlaps(a: &SourceSpan, b: &SourceSpan) -> bool {
    // Two empty replacements at one offset are ordered, not overlapping.
    if a.is_empty() || b.is_empty() {
        return a.start > b.start && a.start < b.end || b.start > a.start && b.start < a.end;
    }
    a.start < b.end && b.start < a.end
}

/// Text that places `lines` on their own lines right before `offset`, each at
/// the indentation of the line holding `offset`, leaving the original text at
/// `offset` on a fresh line with that same indentation.
pub fn lines_before(source: &str, offset: usize, lines: &[String]) -> String {
    let indent = indentation_at(source, offset);
    let line_start = source[..offset].rfind('\n').map_or(0, |i| i + 1);
    let mut out = String::new();
    if !source[line_start..offset].trim().is_empty() {
        out.push('\n');
        out.push_str(indent);
    }
    for l in lines {
        out.push_str(l);
        out.push('\n');
        out.push_str(indent);
    }
    out
}

/// Text that places `lines` on their own lines right after `offset`, at the
/// indentation of the line holding `offset`.
pub fn lines_after(source: &str, offset: usize, lines: &[String]) -> String {
    let indent = indentation_at(source, offset.saturating_sub(1).min(source.len()));
    let mut out = String::new();
    for l in lines {
        out.push('\n');
        out.push_str(indent);
        out.push_str(l);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::span::{FileId, LineIndex};

    fn span(src: &str, a: usize, b: usize) -> SourceSpan {
        LineIndex::new(src).span(FileId(0), a, b)
    }

    #[test]
    fn no_edits_is_identity() {
        let b = RewriteBuffer::new("int x;\n");
        assert_eq!(b.materialize(), "int x;\n");
    }

    #[test]
    fn empty_replace_is_identity() {
        let src = "abc";
        let mut b = RewriteBuffer::new(src);
        b.replace(span(src, 1, 1), "", 0).unwrap();
        assert_eq!(b.materialize(), src);
    }

    #[test]
    fn phases_order_inserts_at_one_offset() {
        let src = "f();";
        let mut b = RewriteBuffer::new(src);
        b.insert_before(span(src, 0, 4), "B", 2).unwrap();
        b.insert_before(span(src, 0, 4), "A", 1).unwrap();
        assert_eq!(b.materialize(), "ABf();");
    }

    #[test]
    fn inserts_bracket_replacements() {
        let src = "0123456789";
        let mut b = RewriteBuffer::new(src);
        b.replace(span(src, 2, 5), "x", 0).unwrap();
        b.insert_before(span(src, 2, 2), "<", 0).unwrap();
        b.insert_after(span(src, 5, 5), ">", 0).unwrap();
        assert_eq!(b.materialize(), "01<x>56789");
    }

    #[test]
    fn overlapping_replacements_are_rejected() {
        let src = "0123456789";
        let mut b = RewriteBuffer::new(src);
        b.replace(span(src, 2, 5), "x", 0).unwrap();
        assert!(matches!(
            b.replace(span(src, 4, 6), "y", 0),
            Err(RewriteError::OverlapError(..))
        ));
        assert!(matches!(
            b.insert_before(span(src, 3, 3), "z", 0),
            Err(RewriteError::InsertInsideReplace { .. })
        ));
        b.replace(span(src, 5, 6), "y", 0).unwrap();
        assert_eq!(b.materialize(), "01xy6789");
    }

    #[test]
    fn lines_before_reindents() {
        let src = "{\n    f();\n}";
        let off = src.find('f').unwrap();
        let t = lines_before(src, off, &["#pragma omp taskwait".to_string()]);
        assert_eq!(t, "#pragma omp taskwait\n    ");
        let src2 = "{ f(); }";
        let t2 = lines_before(src2, 2, &["#pragma omp taskwait".to_string()]);
        assert_eq!(t2, "\n#pragma omp taskwait\n");
    }

    #[test]
    fn materialize_is_idempotent() {
        let src = "abcdef";
        let mut b = RewriteBuffer::new(src);
        b.insert_after(span(src, 0, 3), "X", 3).unwrap();
        b.replace(span(src, 4, 5), "Y", 1).unwrap();
        assert_eq!(b.materialize(), b.materialize());
    }
}
