//! Tolerant `<table>` scanner for LLM answers.
//!
//! Recovery rules:
//! - tag names are matched case-insensitively;
//! - the first row of a table is its header, `<th>` and `<td>` are
//!   interchangeable;
//! - an unclosed cell ends at the next `<td`, `<th`, `</tr` or `</table`;
//! - an unclosed row ends at the next `<tr` or `</table`;
//! - `&amp; &lt; &gt; &quot;` are decoded, every other tag inside a cell is
//!   stripped (nested tables included) and whitespace is collapsed;
//! - a `<table>` without a matching `</table>` is not returned.

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawTable {
    /// `rows[0]` is the header row.
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn header(&self) -> &[String] {
        self.rows.first().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn body(&self) -> &[Vec<String>] {
        self.rows.get(1..).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece<'a> {
    Text(&'a str),
    /// Lowercased tag name and whether it is a closing tag.
    Tag(&'a str, bool),
}

/// Splits markup into text runs and tags. A `<` that does not start a tag
/// (`a < b`) stays text; a tag without `>` runs to the end of input.
fn pieces(src: &str) -> Vec<(usize, Piece<'_>)> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut text_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'<' {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        let closing = bytes.get(j) == Some(&b'/');
        if closing {
            j += 1;
        }
        let is_tag = bytes.get(j).is_some_and(|c| c.is_ascii_alphabetic())
            || (!closing && matches!(bytes.get(j), Some(b'!') | Some(b'?')));
        if !is_tag {
            i += 1;
            continue;
        }
        if text_start < i {
            out.push((text_start, Piece::Text(&src[text_start..i])));
        }
        let name_start = j;
        while bytes.get(j).is_some_and(|c| c.is_ascii_alphanumeric()) {
            j += 1;
        }
        let name = &src[name_start..j];
        let end = src[j..].find('>').map(|k| j + k + 1).unwrap_or(src.len());
        out.push((i, Piece::Tag(name, closing)));
        i = end;
        text_start = end;
    }
    if text_start < bytes.len() {
        out.push((text_start, Piece::Text(&src[text_start..])));
    }
    out
}

fn tag_is(name: &str, want: &str) -> bool {
    name.eq_ignore_ascii_case(want)
}

pub fn decode_entities(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&amp;", "&")
}

pub fn encode_entities(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn clean_cell(raw: &str) -> String {
    let joined = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    decode_entities(&joined).trim().to_string()
}

/// Every complete `<table>...</table>` block of `response`, in document order.
pub fn extract_html_tables(response: &str) -> Vec<RawTable> {
    let ps = pieces(response);
    let mut tables = Vec::new();
    let mut i = 0;
    while i < ps.len() {
        if let Piece::Tag(name, false) = ps[i].1 {
            if tag_is(name, "table") {
                if let Some(end) = matching_close(&ps, i) {
                    tables.push(scan_table(&ps[i + 1..end]));
                    i = end + 1;
                    continue;
                }
            }
        }
        i += 1;
    }
    tables
}

fn matching_close(ps: &[(usize, Piece<'_>)], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (k, (_, p)) in ps.iter().enumerate().skip(open) {
        if let Piece::Tag(name, closing) = p {
            if tag_is(name, "table") {
                if *closing {
                    depth -= 1;
                    if depth == 0 {
                        return Some(k);
                    }
                } else {
                    depth += 1;
                }
            }
        }
    }
    None
}

fn scan_table(ps: &[(usize, Piece<'_>)]) -> RawTable {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut row: Option<Vec<String>> = None;
    let mut cell: Option<String> = None;
    let mut nested = 0usize;

    fn close_cell(row: &mut Option<Vec<String>>, cell: &mut Option<String>) {
        if let Some(c) = cell.take() {
            row.get_or_insert_with(Vec::new).push(clean_cell(&c));
        }
    }
    fn close_row(rows: &mut Vec<Vec<String>>, row: &mut Option<Vec<String>>) {
        if let Some(r) = row.take() {
            if !r.is_empty() {
                rows.push(r);
            }
        }
    }

    for (_, p) in ps {
        match *p {
            Piece::Text(t) => {
                if let Some(c) = cell.as_mut() {
                    c.push_str(t);
                }
            }
            Piece::Tag(name, closing) if tag_is(name, "table") => {
                // inner tables are plain markup
                if closing {
                    nested = nested.saturating_sub(1);
                } else {
                    nested += 1;
                }
            }
            Piece::Tag(_, _) if nested > 0 => {}
            Piece::Tag(name, false) if tag_is(name, "tr") => {
                close_cell(&mut row, &mut cell);
                close_row(&mut rows, &mut row);
                row = Some(Vec::new());
            }
            Piece::Tag(name, true) if tag_is(name, "tr") => {
                close_cell(&mut row, &mut cell);
                close_row(&mut rows, &mut row);
            }
            Piece::Tag(name, false) if tag_is(name, "td") || tag_is(name, "th") => {
                close_cell(&mut row, &mut cell);
                cell = Some(String::new());
            }
            Piece::Tag(name, true) if tag_is(name, "td") || tag_is(name, "th") => {
                close_cell(&mut row, &mut cell);
            }
            Piece::Tag(_, _) => {}
        }
    }
    close_cell(&mut row, &mut cell);
    close_row(&mut rows, &mut row);
    RawTable { rows }
}
