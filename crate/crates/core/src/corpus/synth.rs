//! Deterministic WikiText-style text for tests, examples and smoke runs.

use crate::tensor::Rng;

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "ra", "to", "sa", "vi", "del", "mar", "ton", "bel", "cor", "han",
    "ri", "su", "pe", "gon",
];
const NOUNS: &[&str] = &[
    "river", "city", "church", "album", "station", "battle", "school", "road", "village",
    "team", "island", "bridge", "song", "ship", "castle",
];
const VERBS: &[&str] = &[
    "was built", "was founded", "was released", "was destroyed", "was renamed", "was opened",
    "was recorded", "was expanded",
];
const LINKS: &[&str] = &["near", "north of", "south of", "in", "outside"];

fn name(rng: &mut Rng) -> String {
    let n = 2 + rng.below(2);
    let mut s: String = (0..n).map(|_| *rng.choose(SYLLABLES)).collect();
    if let Some(first) = s.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    s
}

fn sentence(rng: &mut Rng, places: &[String], subject: &str) -> String {
    let noun = rng.choose(NOUNS);
    let place = rng.choose(places);
    let year = 1800 + rng.below(220);
    match rng.below(4) {
        0 => format!(
            "The {noun} {} in {year} {} {place} .",
            rng.choose(VERBS),
            rng.choose(LINKS)
        ),
        1 => format!("{subject} is a {noun} {} {place} .", rng.choose(LINKS)),
        2 => format!(
            "In {year} , the {noun} of {subject} {} .",
            rng.choose(VERBS)
        ),
        _ => format!(
            "It is one of the oldest {noun}s in {place} , and the {} {} in {year} .",
            rng.choose(NOUNS),
            rng.choose(VERBS)
        ),
    }
}

/// Generates roughly `approx_bytes` of article text with `= Title =`
/// headings and blank-line separated paragraphs.
pub fn synthetic_corpus(seed: u64, approx_bytes: usize) -> String {
    let mut rng = Rng::new(seed);
    let places: Vec<String> = (0..40).map(|_| name(&mut rng)).collect();
    let mut out = String::with_capacity(approx_bytes + 512);
    while out.len() < approx_bytes {
        let subject = name(&mut rng);
        out.push_str(&format!(" = {subject} = \n\n"));
        for _ in 0..(1 + rng.below(3)) {
            let sentences: Vec<String> = (0..(2 + rng.below(4)))
                .map(|_| sentence(&mut rng, &places, &subject))
                .collect();
            out.push(' ');
            out.push_str(&sentences.join(" "));
            out.push_str(" \n\n");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::paragraphs;

    #[test]
    fn deterministic_and_sized() {
        let a = synthetic_corpus(3, 10_000);
        assert_eq!(a, synthetic_corpus(3, 10_000));
        assert!(a.len() >= 10_000 && a.len() < 12_000);
        assert!(paragraphs(&a).len() > 10);
    }
}
