/// Token emitted for runs made only of ASCII or Unicode digits.
pub const NUM_TOKEN: &str = "NUM";

/// Lowercases, splits on non-alphanumeric runs and maps pure digit runs to
/// [`NUM_TOKEN`].
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(finish(std::mem::take(&mut current)));
        }
    }
    if !current.is_empty() {
        tokens.push(finish(current));
    }
    tokens
}

fn finish(token: String) -> String {
    if token.chars().all(|c| c.is_numeric()) {
        NUM_TOKEN.to_string()
    } else {
        token
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(tokenize("Atrial Fibrillation."), ["atrial", "fibrillation"]);
        assert_eq!(tokenize("ef 20%"), ["ef", "NUM"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("  b12 -- 3.5 "), ["b12", "NUM", "NUM"]);
    }
}
