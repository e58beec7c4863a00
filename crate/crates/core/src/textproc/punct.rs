const QUOTE: &str = "\"";
const COLLAPSIBLE: [&str; 6] = [".", ",", ";", ":", "!", "?"];
const TERMINAL: [&str; 3] = [".", "!", "?"];

/// Rule-based orthographic repair applied after post-editing. Rules, in order:
///
/// 1. If the number of straight double-quote tokens is odd, the last one is
///    dropped.
/// 2. Runs of identical adjacent punctuation tokens (`. , ; : ! ?`) are
///    collapsed to one token.
/// 3. If `mt` is given and ends with `.`, a non-empty output that does not
///    end with `.`, `!` or `?` gets a final `.`.
///
/// The function is idempotent.
pub fn fix_punctuation(tokens: &[String], mt: Option<&[String]>) -> Vec<String> {
    let mut out: Vec<String> = tokens.to_vec();

    if out.iter().filter(|t| *t == QUOTE).count() % 2 == 1 {
        let last = out.iter().rposition(|t| t == QUOTE).expect("odd count is non-zero");
        out.remove(last);
    }

    out.dedup_by(|b, a| a == b && COLLAPSIBLE.contains(&a.as_str()));

    let mt_final_period = mt.and_then(|m| m.last()).is_some_and(|t| t == ".");
    if mt_final_period {
        if let Some(last) = out.last() {
            if !TERMINAL.contains(&last.as_str()) {
                out.push(".".to_string());
            }
        }
    }
    out
}
