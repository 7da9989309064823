//! Byte-addressed source regions and line/column lookup.

use serde::Serialize;

/// Opaque handle naming the buffer a span belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct FileId(pub u32);

/// A half-open byte range `[start, end)` in one source buffer, plus the
/// 1-based line/column of `start` for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct SourceSpan {
    pub file: FileId,
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub col: u32,
}

impl SourceSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, other: &SourceSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Span from the start of `self` to the end of `other`.
    pub fn to(&self, other: &SourceSpan) -> SourceSpan {
        SourceSpan {
            file: self.file,
            start: self.start,
            end: other.end.max(self.start),
            line: self.line,
            col: self.col,
        }
    }

    /// Zero-length span at the end of `self`.
    pub fn end_point(&self, index: &LineIndex) -> SourceSpan {
        index.span(self.file, self.end, self.end)
    }

    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start..self.end]
    }
}

/// Maps byte offsets to 1-based line/column pairs.
#[derive(Debug, Clone)]
pub struct LineIndex {
    line_starts: Vec<usize>,
    len: usize,
}

impl LineIndex {
    pub fn new(source: &str) -> Self {
        let mut line_starts = vec![0];
        line_starts.extend(source.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex {
            line_starts,
            len: source.len(),
        }
    }

    pub fn line_col(&self, offset: usize) -> (u32, u32) {
        let offset = offset.min(self.len);
        let line = match self.line_starts.binary_search(&offset) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        (line as u32 + 1, (offset - self.line_starts[line]) as u32 + 1)
    }

    pub fn span(&self, file: FileId, start: usize, end: usize) -> SourceSpan {
        let (line, col) = self.line_col(start);
        SourceSpan {
            file,
            start,
            end,
            line,
            col,
        }
    }

    /// Offset of the first byte of the line containing `offset`.
    pub fn line_start(&self, offset: usize) -> usize {
        let (line, _) = self.line_col(offset);
        self.line_starts[line as usize - 1]
    }

    pub fn source_len(&self) -> usize {
        self.len
    }
}

/// Leading whitespace of the line that contains `offset`.
pub fn indentation_at(source: &str, offset: usize) -> &str {
    let start = source[..offset].rfind('\n').map_or(0, |i| i + 1);
    let line = &source[start..];
    let width = line
        .bytes()
        .take_while(|b| *b == b' ' || *b == b'\t')
        .count();
    &line[..width]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_col_is_one_based() {
        let idx = LineIndex::new("ab\ncd\n\nx");
        assert_eq!(idx.line_col(0), (1, 1));
        assert_eq!(idx.line_col(1), (1, 2));
        assert_eq!(idx.line_col(3), (2, 1));
        assert_eq!(idx.line_col(6), (3, 1));
        assert_eq!(idx.line_col(7), (4, 1));
    }

    #[test]
    fn indentation_of_nested_line() {
        let src = "int f(){\n    x = 1;\n}";
        let off = src.find('x').unwrap();
        assert_eq!(indentation_at(src, off), "    ");
        assert_eq!(indentation_at(src, 0), "");
    }
}
