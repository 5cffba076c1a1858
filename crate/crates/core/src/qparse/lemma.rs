//! Tokenization and a small rule-based lemmatizer.
//!
//! The lemmatizer only needs to be good enough to line question words up
//! with object names: plural nouns are reduced to the singular and a
//! handful of spelling variants are mapped onto the spelling used by the
//! object vocabulary. Anything unrecognized is returned unchanged.

/// Split `text` into lowercase word tokens.
///
/// Apostrophes are dropped inside words (`what's` -> `whats`), hyphens are
/// kept only between word characters, and every other non-alphanumeric
/// character separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, tokens: &mut Vec<String>| {
        let trimmed = current.trim_matches('-');
        if !trimmed.is_empty() {
            tokens.push(trimmed.to_string());
        }
        current.clear();
    };
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if ch == '-' {
            if current.ends_with('-') {
                // a run of hyphens ("--") separates words
                flush(&mut current, &mut tokens);
            } else {
                current.push('-');
            }
        } else if ch == '\'' || ch == '\u{2019}' {
            continue;
        } else {
            flush(&mut current, &mut tokens);
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

/// Spelling variants, applied before and after singularization.
const SPELL_VARIANTS: &[(&str, &str)] = &[
    ("dryer", "drier"),
    ("aeroplane", "airplane"),
    ("doughnut", "donut"),
    ("racquet", "racket"),
    ("colour", "color"),
    ("grey", "gray"),
    ("tee-shirt", "t-shirt"),
];

/// Irregular plurals and plurals the suffix rules would get wrong.
const IRREGULAR_PLURALS: &[(&str, &str)] = &[
    ("people", "person"),
    ("men", "man"),
    ("women", "woman"),
    ("children", "child"),
    ("mice", "mouse"),
    ("teeth", "tooth"),
    ("feet", "foot"),
    ("geese", "goose"),
    ("oxen", "ox"),
    ("knives", "knife"),
    ("wives", "wife"),
    ("lives", "life"),
    ("leaves", "leaf"),
    ("loaves", "loaf"),
    ("shelves", "shelf"),
    ("halves", "half"),
    ("wolves", "wolf"),
    ("calves", "calf"),
    ("scarves", "scarf"),
    ("buses", "bus"),
    ("busses", "bus"),
    ("tomatoes", "tomato"),
    ("potatoes", "potato"),
    ("mangoes", "mango"),
    ("heroes", "hero"),
    ("dice", "die"),
    ("cacti", "cactus"),
    ("skis", "ski"),
];

/// Words ending in `s` that are not plurals (or whose plural is the same).
const INVARIANT: &[&str] = &[
    "is", "was", "has", "does", "his", "hers", "its", "this", "yes", "us", "gas", "bus", "plus",
    "always", "perhaps", "less", "news", "series", "species", "sheep", "fish", "deer", "bison",
    "moose", "pants", "jeans", "shorts", "scissors", "tennis", "lens", "whats",
    "thats", "theres", "whos", "hows", "wheres", "christmas", "chess", "cactus", "octopus",
    "canvas", "dress", "grass", "glass", "class", "across", "towards", "upstairs", "downstairs",
    "outdoors", "indoors", "afterwards", "sometimes", "alias", "atlas", "bias", "iris",
];

fn lookup<'a>(table: &'a [(&str, &str)], token: &str) -> Option<&'a str> {
    table
        .iter()
        .find(|(from, _)| *from == token)
        .map(|(_, to)| *to)
}

fn singularize(token: &str) -> String {
    if let Some(s) = lookup(IRREGULAR_PLURALS, token) {
        return s.to_string();
    }
    if INVARIANT.contains(&token) || !token.ends_with('s') || token.chars().count() <= 3 {
        return token.to_string();
    }
    if !token.chars().all(|c| c.is_alphabetic() || c == '-') {
        return token.to_string();
    }
    if token.ends_with("ss") || token.ends_with("us") || token.ends_with("is") {
        return token.to_string();
    }
    if let Some(stem) = token.strip_suffix("ies") {
        if stem.chars().count() >= 2 {
            return format!("{stem}y");
        }
    }
    for suffix in ["sses", "ches", "shes", "xes", "zzes"] {
        if token.ends_with(suffix) {
            return token[..token.len() - 2].to_string();
        }
    }
    token[..token.len() - 1].to_string()
}

/// Reduce a single lowercase token to the form used for vocabulary lookup.
///
/// ```
/// use qsup::qparse::normalize_token;
/// assert_eq!(normalize_token("umbrellas"), "umbrella");
/// assert_eq!(normalize_token("dryer"), "drier");
/// assert_eq!(normalize_token("bus"), "bus");
/// ```
pub fn normalize_token(token: &str) -> String {
    let spelled = lookup(SPELL_VARIANTS, token).unwrap_or(token);
    let single = singularize(spelled);
    match lookup(SPELL_VARIANTS, &single) {
        Some(s) => s.to_string(),
        None => single,
    }
}
