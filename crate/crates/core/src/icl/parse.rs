use crate::corpus::{Rating, MAX_RATING};

/// First standalone integer in `0..=4` in a model reply.
///
/// A standalone integer is a maximal digit run not touching a letter,
/// a leading minus sign, or a decimal point or thousands comma joining it
/// to other digits. Integers outside the scale are skipped.
pub fn parse_rating(reply: &str) -> Option<Rating> {
    let chars: Vec<char> = reply.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        let before = start.checked_sub(1).map(|j| chars[j]);
        let after = chars.get(i).copied();
        let glued_before = before.is_some_and(|c| c.is_alphanumeric() || c == '-' || c == '_')
            || (matches!(before, Some('.') | Some(',')) && start >= 2 && chars[start - 2].is_ascii_digit());
        let glued_after = after.is_some_and(|c| c.is_alphanumeric() || c == '_')
            || (matches!(after, Some('.') | Some(',')) && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit()));
        if glued_before || glued_after {
            continue;
        }
        let digits: String = chars[start..i].iter().collect();
        if let Ok(value) = digits.parse::<u64>() {
            if value <= MAX_RATING as u64 {
                return Some(Rating::from_index(value as usize));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Option<u8> {
        parse_rating(s).map(Rating::value)
    }

    #[test]
    fn examples() {
        assert_eq!(p("3"), Some(3));
        assert_eq!(p("I would rate this text a 2 out of 4."), Some(2));
        assert_eq!(p("clearly non-toxic"), None);
        assert_eq!(p(" 0\n"), Some(0));
    }

    #[test]
    fn skips_non_standalone_and_out_of_range() {
        assert_eq!(p("Out of 10 options I pick 4"), Some(4));
        assert_eq!(p("rating: 3.5"), None);
        assert_eq!(p("-1 then 1"), Some(1));
        assert_eq!(p("gpt4 says 1"), Some(1));
        assert_eq!(p("Rating: 4."), Some(4));
        assert_eq!(p("(2)"), Some(2));
        assert_eq!(p("1,000 or 3"), Some(3));
    }
}
