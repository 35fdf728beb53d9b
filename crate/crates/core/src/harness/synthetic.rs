//! Generated corpora with known factual structure.
//!
//! Every summary is built from templates whose factors the rule extractor
//! recovers exactly, and every summary factor appears verbatim in the
//! document. Names are unique per unit, so factors from other units never
//! occur in a unit's document.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::EvalUnit;

const FIRST_NAMES: &[&str] = &[
    "Alice", "Bruno", "Clara", "Daniel", "Elena", "Farid", "Greta", "Hugo", "Irene", "Jonah",
    "Karin", "Leon", "Marta", "Nadia", "Oscar", "Paula", "Quentin", "Rita", "Stefan", "Tanya",
    "Umar", "Vera", "Walter", "Xenia", "Yusuf", "Zora", "Anton", "Bettina", "Cyril", "Dora",
];

const LAST_NAMES: &[&str] = &[
    "Abbott", "Becker", "Castro", "Dalton", "Engel", "Fischer", "Garner", "Holm", "Ibarra",
    "Jensen", "Kowalski", "Lindqvist", "Moreau", "Novak", "Okafor", "Petrov", "Quinn", "Russo",
    "Sato", "Tanaka", "Ueda", "Varga", "Weber", "Xu", "Yilmaz", "Zeller", "Almeida", "Brandt",
    "Costa", "Duval",
];

const PLACES: &[&str] = &[
    "Lisbon", "Oslo", "Vienna", "Prague", "Dublin", "Madrid", "Warsaw", "Helsinki", "Budapest",
    "Zagreb", "Tallinn", "Riga", "Vilnius", "Sofia", "Bucharest", "Ljubljana", "Bratislava",
    "Copenhagen", "Stockholm", "Reykjavik", "Valletta", "Nicosia", "Luxembourg", "Monaco",
    "Geneva", "Porto", "Seville", "Naples", "Turin", "Bologna",
];

const WEEKDAYS: &[&str] = &["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"];

const ADJECTIVES: &[&str] = &[
    "old", "wooden", "red", "ancient", "tall", "small", "northern", "quiet", "famous", "narrow",
    "historic", "busy", "modern", "golden", "eastern", "silver", "grand", "rusty", "green", "hidden",
];

const NOUNS: &[&str] = &[
    "bridge", "harbor", "tower", "library", "museum", "garden", "station", "school", "stadium",
    "market", "hospital", "castle", "factory", "theater", "fountain", "lighthouse", "cathedral",
    "warehouse", "monument", "orchard",
];

struct Names {
    pool: Vec<String>,
    next: usize,
}

impl Names {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut pool: Vec<String> = FIRST_NAMES
            .iter()
            .flat_map(|f| LAST_NAMES.iter().map(move |l| format!("{f} {l}")))
            .collect();
        pool.shuffle(rng);
        Self { pool, next: 0 }
    }

    fn take(&mut self) -> String {
        let name = self.pool[self.next % self.pool.len()].clone();
        self.next += 1;
        name
    }
}

fn noun_phrases(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let adjs: Vec<&str> = ADJECTIVES.choose_multiple(rng, n).copied().collect();
    let nouns: Vec<&str> = NOUNS.choose_multiple(rng, n).copied().collect();
    adjs.iter().zip(&nouns).map(|(a, n)| format!("the {a} {n}")).collect()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// A corpus of `n` units whose summaries each hold six named entities and
/// three noun phrases in three sentences. Summaries are consistent with
/// their documents and double as gold summaries. At most 180 units have
/// distinct names.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<EvalUnit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = Names::new(&mut rng);
    (0..n)
        .map(|i| {
            let [p1, p2, p3, p4, p5] = std::array::from_fn(|_| names.take());
            let place = PLACES.choose(&mut rng).copied().unwrap_or("Lisbon");
            let day = WEEKDAYS.choose(&mut rng).copied().unwrap_or("Monday");
            let nps = noun_phrases(&mut rng, 3);
            let s1 = format!("{p1} met {p2} in {place} on {day}.");
            let s2 = format!("{} near {} was repaired by {p3}.", capitalize(&nps[0]), nps[1]);
            let s3 = format!("{p4} praised {}.", nps[2]);
            let summary = format!("{s1} {s2} {s3}");
            let document = format!("{s1} {s2} {s3} {p5} declined to comment.");
            EvalUnit::new(format!("syn-{i:03}"), document, summary.clone()).with_gold_summary(summary)
        })
        .collect()
}

/// One unit per entry of `counts`, the summary holding exactly that many
/// factors. Sentences hold two factors each (plus one single-factor
/// sentence for odd counts).
pub fn factor_count_corpus(counts: &[usize], seed: u64) -> Vec<EvalUnit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = Names::new(&mut rng);
    counts
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mut sentences = Vec::new();
            for _ in 0..n / 2 {
                let np = noun_phrases(&mut rng, 1).remove(0);
                sentences.push(format!("{} praised {np}.", names.take()));
            }
            if n % 2 == 1 {
                let day = WEEKDAYS[rng.gen_range(0..WEEKDAYS.len())];
                sentences.push(format!("It rained on {day}."));
            }
            let summary = if sentences.is_empty() {
                "It rained.".to_owned()
            } else {
                sentences.join(" ")
            };
            let document = format!("{summary} Nobody else was there.");
            EvalUnit::new(format!("cnt-{i:03}"), document, summary.clone()).with_gold_summary(summary)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::{extract_factors, RuleExtractor};
    use crate::text::contains_case_insensitive;
    use crate::types::FactorKind;

    #[test]
    fn synthetic_units_have_known_factors() {
        let ex = RuleExtractor::new();
        for unit in synthetic_corpus(60, 7) {
            let fs = extract_factors(&ex, &unit.summary).unwrap();
            let ne = fs.iter().filter(|f| f.kind == FactorKind::NamedEntity).count();
            let np = fs.iter().filter(|f| f.kind == FactorKind::NounPhrase).count();
            assert_eq!((ne, np), (6, 3), "{}: {fs:#?}", unit.summary);
            for f in &fs {
                assert!(contains_case_insensitive(&unit.document, &f.surface), "{}", f.surface);
            }
        }
    }

    #[test]
    fn count_corpus_has_exact_counts() {
        let ex = RuleExtractor::new();
        let counts: Vec<usize> = (0..=20).collect();
        for (unit, &n) in factor_count_corpus(&counts, 3).iter().zip(&counts) {
            let fs = extract_factors(&ex, &unit.summary).unwrap();
            assert_eq!(fs.len(), n, "{}: {fs:#?}", unit.summary);
        }
    }

    #[test]
    fn generation_is_seeded() {
        assert_eq!(synthetic_corpus(5, 1), synthetic_corpus(5, 1));
        assert_ne!(synthetic_corpus(5, 1), synthetic_corpus(5, 2));
    }
}
