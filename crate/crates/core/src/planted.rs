//! Synthetic two-author corpus with known categories: shared sentence
//! templates whose slots are filled from disjoint per-author word lists.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tokenizer::{Vocabulary, MENTION_TOKEN, SPECIALS, URL_TOKEN};

// Slot-dense frames with only a few connector words, so that the words
// that vary between tweets are mostly author-specific.
const TEMPLATES: [&str; 8] = [
    "{name} in {city} .",
    "{name} and {name} in {city} !",
    "{food} and {drink} with {name} .",
    "{team} in {city} ?",
    "{name} with {food} and {drink} !",
    "{team} and {team} in {city} .",
    "{drink} with {food} in {city} .",
    "{name} with {team} ?",
];

struct Slots {
    city: &'static [&'static str],
    name: &'static [&'static str],
    food: &'static [&'static str],
    drink: &'static [&'static str],
    team: &'static [&'static str],
}

const CATEGORIES: [Slots; 2] = [
    Slots {
        city: &[
            "boston", "chicago", "denver", "seattle", "houston", "phoenix", "atlanta", "dallas",
            "miami", "portland", "detroit", "austin",
        ],
        name: &[
            "mike", "jessica", "tyler", "ashley", "brandon", "megan", "kyle", "brittany", "cody",
            "amber", "dustin", "kayla",
        ],
        food: &[
            "burgers", "pancakes", "tacos", "barbecue", "hotdogs", "cornbread", "nachos",
            "brownies", "bagels", "waffles", "cheesecake", "pretzels",
        ],
        drink: &["soda", "lemonade", "bourbon", "rootbeer", "coffee", "milkshakes"],
        team: &["yankees", "lakers", "patriots", "cubs", "bulls", "packers"],
    },
    Slots {
        city: &[
            "krakow", "warsaw", "gdansk", "poznan", "wroclaw", "lodz", "lublin", "szczecin",
            "katowice", "torun", "opole", "rzeszow",
        ],
        name: &[
            "kasia", "piotr", "agnieszka", "tomasz", "magda", "pawel", "ola", "krzysztof",
            "zosia", "marek", "ewa", "bartek",
        ],
        food: &[
            "pierogi", "bigos", "zurek", "kielbasa", "golabki", "placki", "paczki", "oscypek",
            "barszcz", "rosol", "sernik", "nalesniki",
        ],
        drink: &["kompot", "wodka", "kefir", "piwo", "herbata", "zubrowka"],
        team: &["legia", "wisla", "lech", "slask", "gornik", "jagiellonia"],
    },
];

pub const EMOTICONS: [&str; 2] = [":)", "😀"];

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedCorpus {
    pub tweets: Vec<String>,
    /// Author category (0 or 1) of each tweet.
    pub categories: Vec<usize>,
}

impl PlantedCorpus {
    pub fn category_count(&self) -> usize {
        CATEGORIES.len()
    }
}

fn fill<R: Rng>(template: &str, slots: &Slots, rng: &mut R) -> String {
    let mut out = template.to_string();
    for (key, words) in [
        ("{city}", slots.city),
        ("{name}", slots.name),
        ("{food}", slots.food),
        ("{drink}", slots.drink),
        ("{team}", slots.team),
    ] {
        while out.contains(key) {
            out = out.replacen(key, words.choose(rng).expect("non-empty"), 1);
        }
    }
    out
}

/// `n` tweets of two to four sentences, categories alternating so both are balanced.
/// Some tweets carry a leading mention, a trailing link or an emoticon.
pub fn generate(n: usize, seed: u64) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tweets = Vec::with_capacity(n);
    let mut categories = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % CATEGORIES.len();
        let slots = &CATEGORIES[c];
        let sentences = rng.gen_range(2..=4);
        let mut text = String::new();
        if rng.gen_bool(0.05) {
            text.push_str("@pal ");
        }
        for k in 0..sentences {
            if k > 0 {
                text.push(' ');
            }
            let frame = TEMPLATES.choose(&mut rng).expect("templates");
            text.push_str(&fill(frame, slots, &mut rng));
        }
        if rng.gen_bool(0.05) {
            text.push_str(" http://t.co/x1");
        }
        if rng.gen_bool(0.05) {
            text.push(' ');
            text.push_str(EMOTICONS.choose(&mut rng).expect("emoticons"));
        }
        tweets.push(text);
        categories.push(c);
    }
    PlantedCorpus { tweets, categories }
}

/// Base vocabulary covering every generated word (specials first).
pub fn vocabulary_tokens() -> Vec<String> {
    let mut words: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    words.push(URL_TOKEN.into());
    words.push(MENTION_TOKEN.into());
    let mut push = |w: &str| {
        if !words.iter().any(|x| x == w) {
            words.push(w.to_string());
        }
    };
    for t in TEMPLATES {
        for w in t.split_whitespace().filter(|w| !w.starts_with('{')) {
            push(w);
        }
    }
    for c in &CATEGORIES {
        for list in [c.city, c.name, c.food, c.drink, c.team] {
            for w in list {
                push(w);
            }
        }
    }
    words
}

pub fn vocabulary() -> Vocabulary {
    let emoticons: Vec<String> = EMOTICONS.iter().map(|s| s.to_string()).collect();
    Vocabulary::from_tokens(&vocabulary_tokens(), &emoticons).expect("planted vocabulary is valid")
}

/// Best-permutation agreement between predicted and true categories.
pub fn purity(predicted: &[usize], truth: &[usize], categories: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let mut perm: Vec<usize> = (0..categories).collect();
    let mut best = 0;
    permutations(&mut perm, 0, &mut |p| {
        let hits = predicted
            .iter()
            .zip(truth)
            .filter(|&(&a, &b)| p.get(a) == Some(&b))
            .count();
        best = best.max(hits);
    });
    best as f64 / truth.len() as f64
}

fn permutations(p: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permutations(p, k + 1, visit);
        p.swap(k, i);
    }
}
