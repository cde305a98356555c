//! Rule-based sentence segmentation.
//!
//! A sentence ends at a run of `.`, `!` or `?` (plus any closing quotes or
//! brackets glued to it) that is followed by whitespace or the end of the
//! text. A period does not end a sentence when the token in front of it is a
//! known abbreviation. Decimal numbers never split because the period is not
//! followed by whitespace.

use serde::{Deserialize, Serialize};

/// A sentence and its byte range `[start, end)` in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

const ABBREVIATIONS: &[&str] = &[
    "e.g", "i.e", "eg", "ie", "fig", "figs", "vs", "cf", "al", "approx", "ca", "eq", "eqs", "ref", "refs", "no", "nos",
    "vol", "resp", "dr", "mr", "mrs", "ms", "prof", "st", "sp", "spp", "var", "viz", "inc", "ltd", "co", "jan", "feb",
    "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec", "tab", "suppl", "ed", "eds",
];

const TERMINATORS: &[char] = &['.', '!', '?'];
const CLOSERS: &[char] = &[')', ']', '"', '\'', '\u{2019}', '\u{201d}', '\u{bb}'];

/// Splits `text` into sentences. Empty or all-whitespace input yields no spans.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    split_offsets(text)
        .into_iter()
        .map(|(start, end)| SentenceSpan {
            text: text[start..end].to_string(),
            start,
            end,
        })
        .collect()
}

/// Byte ranges of the sentences in `text`.
pub fn split_offsets(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_end = |idx: usize| chars.get(idx).map_or(text.len(), |&(b, _)| b);

    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_non_ws_end = 0;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if start.is_none() {
            start = Some(pos);
        }
        if !TERMINATORS.contains(&c) {
            last_non_ws_end = byte_end(i + 1);
            i += 1;
            continue;
        }

        // Consume the whole terminator run and any closers glued to it.
        let first_terminator = i;
        let mut j = i + 1;
        while j < chars.len() && TERMINATORS.contains(&chars[j].1) {
            j += 1;
        }
        let single_period = c == '.' && j - first_terminator == 1;
        while j < chars.len() && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        let run_end = byte_end(j);
        last_non_ws_end = run_end;
        let at_boundary = chars.get(j).is_none_or(|&(_, n)| n.is_whitespace());
        let abbreviation = single_period && is_abbreviation(text, pos);

        if at_boundary && !abbreviation {
            if let Some(s) = start.take() {
                spans.push((s, run_end));
            }
        }
        i = j;
    }
    if let Some(s) = start {
        spans.push((s, last_non_ws_end));
    }
    spans
}

// The token ending right before the period at `dot` (exclusive), lowercased
// and stripped of opening punctuation, is checked against the list.
fn is_abbreviation(text: &str, dot: usize) -> bool {
    let before = &text[..dot];
    let token_start = before
        .char_indices()
        .rev()
        .find(|&(_, c)| c.is_whitespace())
        .map_or(0, |(b, c)| b + c.len_utf8());
    let token = before[token_start..].trim_start_matches(['(', '[', '"', '\'']);
    if token.is_empty() {
        return false;
    }
    let lower = token.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(s: &str) -> Vec<String> {
        split_sentences(s).into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn empty_input_has_no_sentences() {
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("   \n ").is_empty());
    }

    #[test]
    fn decimal_numbers_do_not_split() {
        assert_eq!(
            texts("Dose was 3.5 mg. It worked."),
            vec!["Dose was 3.5 mg.", "It worked."]
        );
    }

    #[test]
    fn reference_marker_stays_inside_sentence() {
        assert_eq!(
            texts("Several genes play role. See BRCA1 (PUBMED:554433)."),
            vec!["Several genes play role.", "See BRCA1 (PUBMED:554433)."]
        );
    }

    #[test]
    fn offsets_match_hand_count() {
        let spans = split_sentences("BRCA1 is studied. It mutates.");
        let offs: Vec<_> = spans.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(offs, vec![(0, 17), (18, 29)]);
    }

    #[test]
    fn abbreviations_do_not_split() {
        assert_eq!(
            texts("Some genes, e.g. BRCA1, matter (see Fig. 2). Smith et al. agree vs. others."),
            vec![
                "Some genes, e.g. BRCA1, matter (see Fig. 2).",
                "Smith et al. agree vs. others."
            ]
        );
    }

    #[test]
    fn question_and_exclamation_marks_split() {
        assert_eq!(texts("Is it? Yes! Done"), vec!["Is it?", "Yes!", "Done"]);
    }

    #[test]
    fn closing_quotes_and_brackets_attach() {
        assert_eq!(
            texts("He said \"stop.\" Then left."),
            vec!["He said \"stop.\"", "Then left."]
        );
        assert_eq!(texts("(It was fine.) Next."), vec!["(It was fine.)", "Next."]);
    }

    #[test]
    fn ellipsis_ends_sentence() {
        assert_eq!(texts("Wait... Go on."), vec!["Wait...", "Go on."]);
    }

    #[test]
    fn trailing_text_without_terminator() {
        let spans = split_sentences("First one.  second part ");
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[1].text, "second part");
        assert_eq!(spans[1].end, 23);
    }

    #[test]
    fn multibyte_text() {
        let s = "Überprüfung läuft. Naïve café — ok.";
        let spans = split_sentences(s);
        assert_eq!(spans.len(), 2);
        for sp in &spans {
            assert_eq!(&s[sp.start..sp.end], sp.text);
        }
    }
}
