//! A small generator of fluent sentences with number agreement that spans
//! relative clauses and verb-specific argument frames. None of its words are
//! in the default filler lexicon.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Num {
    Sg,
    Pl,
}

struct Pair(&'static str, &'static str);

const PERSONS: &[Pair] = &[
    Pair("man", "men"),
    Pair("woman", "women"),
    Pair("student", "students"),
    Pair("teacher", "teachers"),
    Pair("pilot", "pilots"),
    Pair("doctor", "doctors"),
    Pair("dog", "dogs"),
];
const THINGS: &[Pair] = &[
    Pair("ticket", "tickets"),
    Pair("book", "books"),
    Pair("letter", "letters"),
    Pair("map", "maps"),
    Pair("bag", "bags"),
];
const TRANSITIVE: &[Pair] = &[
    Pair("sees", "see"),
    Pair("follows", "follow"),
    Pair("helps", "help"),
    Pair("calls", "call"),
    Pair("meets", "meet"),
    Pair("visits", "visit"),
];
const INTRANSITIVE: &[Pair] = &[
    Pair("sleeps", "sleep"),
    Pair("waits", "wait"),
    Pair("laughs", "laugh"),
    Pair("works", "work"),
];
const MOTION: &[Pair] = &[
    Pair("flies", "fly"),
    Pair("drives", "drive"),
    Pair("travels", "travel"),
    Pair("goes", "go"),
];
const DITRANSITIVE: &[Pair] = &[
    Pair("gives", "give"),
    Pair("sends", "send"),
    Pair("shows", "show"),
    Pair("brings", "bring"),
];
const DET_SG: &[&str] = &["a", "the", "this", "every"];
const DET_PL: &[&str] = &["the", "these", "some", "two"];
const ADJ: &[&str] = &["old", "young", "tall", "busy", "happy", "new"];
const CITIES: &[&str] = &["boston", "denver", "dallas", "atlanta", "seattle", "chicago"];
const DAYS: &[&str] = &["monday", "tuesday", "friday", "sunday"];
const ADVERBS: &[&str] = &["today", "again", "tomorrow", "often"];

/// Sentence generator. The only state is the set of branching probabilities.
#[derive(Clone, Debug)]
pub struct Grammar {
    pub p_relative: f64,
    pub p_adjective: f64,
    pub p_adverb: f64,
}

impl Default for Grammar {
    fn default() -> Self {
        Grammar {
            p_relative: 0.35,
            p_adjective: 0.3,
            p_adverb: 0.2,
        }
    }
}

fn pick<'a, R: Rng>(items: &'a [&'static str], rng: &mut R) -> &'a str {
    items.choose(rng).expect("non-empty word list")
}

fn inflect<R: Rng>(items: &[Pair], num: Num, rng: &mut R) -> &'static str {
    let p = items.choose(rng).expect("non-empty word list");
    match num {
        Num::Sg => p.0,
        Num::Pl => p.1,
    }
}

impl Grammar {
    fn number<R: Rng>(rng: &mut R) -> Num {
        if rng.gen_bool(0.5) {
            Num::Sg
        } else {
            Num::Pl
        }
    }

    fn noun_phrase<R: Rng>(&self, out: &mut Vec<String>, nouns: &[Pair], num: Num, rng: &mut R) {
        let det = match num {
            Num::Sg => pick(DET_SG, rng),
            Num::Pl => pick(DET_PL, rng),
        };
        out.push(det.into());
        if rng.gen_bool(self.p_adjective) {
            out.push(pick(ADJ, rng).into());
        }
        out.push(inflect(nouns, num, rng).into());
    }

    fn verb_phrase<R: Rng>(&self, out: &mut Vec<String>, num: Num, rng: &mut R) {
        match rng.gen_range(0..4) {
            0 => out.push(inflect(INTRANSITIVE, num, rng).into()),
            1 => {
                out.push(inflect(TRANSITIVE, num, rng).into());
                let obj = Self::number(rng);
                self.noun_phrase(out, PERSONS, obj, rng);
            }
            2 => {
                out.push(inflect(MOTION, num, rng).into());
                out.push("to".into());
                out.push(pick(CITIES, rng).into());
                if rng.gen_bool(0.5) {
                    out.push("on".into());
                    out.push(pick(DAYS, rng).into());
                }
            }
            _ => {
                out.push(inflect(DITRANSITIVE, num, rng).into());
                let thing = Self::number(rng);
                self.noun_phrase(out, THINGS, thing, rng);
                out.push("to".into());
                let person = Self::number(rng);
                self.noun_phrase(out, PERSONS, person, rng);
            }
        }
    }

    /// One fluent sentence. The subject agrees with the main verb across an
    /// optional object relative clause, whose own subject agrees with its verb.
    pub fn sentence<R: Rng>(&self, rng: &mut R) -> Vec<String> {
        let mut out = Vec::new();
        let num = Self::number(rng);
        self.noun_phrase(&mut out, PERSONS, num, rng);
        if rng.gen_bool(self.p_relative) {
            out.push("that".into());
            let inner = Self::number(rng);
            self.noun_phrase(&mut out, PERSONS, inner, rng);
            out.push(inflect(TRANSITIVE, inner, rng).into());
        }
        self.verb_phrase(&mut out, num, rng);
        if rng.gen_bool(self.p_adverb) {
            out.push(pick(ADVERBS, rng).into());
        }
        out
    }

    /// Every word the grammar can produce.
    pub fn vocab() -> BTreeSet<String> {
        Self::classes().into_iter().flatten().collect()
    }

    /// Groups of words that fill the same slot; used to build plausible
    /// substitution tables for synthetic repairs.
    pub fn classes() -> Vec<Vec<String>> {
        let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let sg = |xs: &[Pair]| xs.iter().map(|p| p.0.to_string()).collect::<Vec<_>>();
        let pl = |xs: &[Pair]| xs.iter().map(|p| p.1.to_string()).collect::<Vec<_>>();
        let mut classes = vec![
            own(DET_SG),
            own(DET_PL),
            own(ADJ),
            own(CITIES),
            own(DAYS),
            own(ADVERBS),
            own(&["that", "to", "on"]),
        ];
        for list in [PERSONS, THINGS, TRANSITIVE, INTRANSITIVE, MOTION, DITRANSITIVE] {
            classes.push(sg(list));
            classes.push(pl(list));
        }
        classes
    }
}
