//! Object-class pre-filtering.
//!
//! Each frame carries the set of object classes an upstream detector found in
//! it. A query names classes (explicitly or by lexical extraction from its
//! text) and the filter keeps frames whose class set contains all of them
//! ([`MatchMode::All`]) or at least one ([`MatchMode::Any`]).

use std::collections::HashMap;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Class count of the default detector vocabulary.
pub const DEFAULT_NUM_CLASSES: usize = 600;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabularyError {
    #[error("vocabulary line {line}: empty class name")]
    EmptyName { line: usize },
    #[error("vocabulary line {line}: class name {name:?} duplicates line {first}")]
    Duplicate { line: usize, first: usize, name: String },
    #[error("vocabulary is empty")]
    Empty,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("class id {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: u32, num_classes: usize },
}

/// Ordered class names; the position of a name is its class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassVocabulary {
    names: Vec<String>,
    // normalized token sequence joined by ' ' -> class id
    phrases: HashMap<String, u32>,
    longest_phrase: usize,
}

impl ClassVocabulary {
    /// Parses one class name per line. A trailing newline is allowed.
    pub fn from_lines(text: &str) -> Result<Self, VocabularyError> {
        let mut lines: Vec<&str> = text.split('\n').collect();
        if lines.last().is_some_and(|l| l.is_empty()) {
            lines.pop();
        }
        Self::new(lines.into_iter().map(|l| l.trim_end_matches('\r').trim().to_owned()))
    }

    pub fn new<I: IntoIterator<Item = String>>(names: I) -> Result<Self, VocabularyError> {
        let names: Vec<String> = names.into_iter().collect();
        if names.is_empty() {
            return Err(VocabularyError::Empty);
        }
        let mut phrases = HashMap::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut longest_phrase = 0;
        for (i, name) in names.iter().enumerate() {
            let tokens = tokenize(name);
            if tokens.is_empty() {
                return Err(VocabularyError::EmptyName { line: i + 1 });
            }
            let key = name.to_lowercase();
            if let Some(&first) = seen.get(&key) {
                return Err(VocabularyError::Duplicate {
                    line: i + 1,
                    first: first + 1,
                    name: name.clone(),
                });
            }
            seen.insert(key, i);
            longest_phrase = longest_phrase.max(tokens.len());
            // Two names that differ only in punctuation map to the same
            // phrase; the first one wins.
            phrases.entry(tokens.join(" ")).or_insert(i as u32);
        }
        Ok(Self {
            names,
            phrases,
            longest_phrase,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, class: u32) -> Option<&str> {
        self.names.get(class as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.phrases.get(&tokenize(name).join(" ")).copied()
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Frame must contain every query class.
    #[default]
    All,
    /// Frame must contain at least one query class.
    Any,
}

/// The query-side class vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryClassVector {
    pub classes: FixedBitSet,
    pub mode: MatchMode,
}

impl QueryClassVector {
    pub fn from_ids(ids: &[u32], num_classes: usize, mode: MatchMode) -> Result<Self, FilterError> {
        let mut classes = FixedBitSet::with_capacity(num_classes);
        for &class in ids {
            if class as usize >= num_classes {
                return Err(FilterError::ClassOutOfRange { class, num_classes });
            }
            classes.insert(class as usize);
        }
        Ok(Self { classes, mode })
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_clear()
    }

    pub fn ids(&self) -> Vec<u32> {
        self.classes.ones().map(|c| c as u32).collect()
    }
}

/// A vocabulary phrase found in query text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedClass {
    pub class_id: u32,
    pub name: String,
    /// The words of the query that matched, lowercased.
    pub words: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMatch {
    pub query: QueryClassVector,
    pub matched: Vec<MatchedClass>,
}

/// Case-insensitive whole-word matching of vocabulary names against `text`.
///
/// Scans left to right; at each word the longest vocabulary phrase starting
/// there wins and its words are consumed, so "traffic light" shadows "light".
pub fn classes_from_text(text: &str, vocabulary: &ClassVocabulary, mode: MatchMode) -> ClassMatch {
    let tokens = tokenize(text);
    let mut classes = FixedBitSet::with_capacity(vocabulary.len());
    let mut matched = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let max_len = vocabulary.longest_phrase.min(tokens.len() - i);
        let hit = (1..=max_len).rev().find_map(|len| {
            let phrase = tokens[i..i + len].join(" ");
            vocabulary.phrases.get(&phrase).map(|&id| (id, len, phrase))
        });
        match hit {
            Some((id, len, phrase)) => {
                if !classes.contains(id as usize) {
                    classes.insert(id as usize);
                    matched.push(MatchedClass {
                        class_id: id,
                        name: vocabulary.names[id as usize].clone(),
                        words: phrase,
                    });
                }
                i += len;
            }
            None => i += 1,
        }
    }
    ClassMatch {
        query: QueryClassVector { classes, mode },
        matched,
    }
}

/// Per-frame detected class sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectVectors {
    num_classes: usize,
    sets: Vec<FixedBitSet>,
}

impl ObjectVectors {
    pub fn empty(num_frames: usize, num_classes: usize) -> Self {
        Self {
            num_classes,
            sets: vec![FixedBitSet::with_capacity(num_classes); num_frames],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_frames(&self) -> usize {
        self.sets.len()
    }

    pub fn get(&self, frame_id: u32) -> Option<&FixedBitSet> {
        self.sets.get(frame_id as usize)
    }

    pub fn classes(&self, frame_id: u32) -> Vec<u32> {
        self.sets
            .get(frame_id as usize)
            .map(|s| s.ones().map(|c| c as u32).collect())
            .unwrap_or_default()
    }

    pub fn set(&mut self, frame_id: u32, classes: &[u32]) -> Result<(), FilterError> {
        let set = &mut self.sets[frame_id as usize];
        set.clear();
        for &c in classes {
            if c as usize >= self.num_classes {
                return Err(FilterError::ClassOutOfRange {
                    class: c,
                    num_classes: self.num_classes,
                });
            }
            set.insert(c as usize);
        }
        Ok(())
    }
}

/// Frames passing the query's class constraint. An empty query disables
/// filtering and every frame passes.
pub fn filter_frames(objects: &ObjectVectors, query: &QueryClassVector) -> FixedBitSet {
    let mut out = FixedBitSet::with_capacity(objects.num_frames());
    if query.is_empty() {
        out.insert_range(..);
        return out;
    }
    for (i, frame) in objects.sets.iter().enumerate() {
        let pass = match query.mode {
            MatchMode::All => query.classes.is_subset(frame),
            MatchMode::Any => !query.classes.is_disjoint(frame),
        };
        if pass {
            out.insert(i);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn vocab(names: &[&str]) -> ClassVocabulary {
        ClassVocabulary::new(names.iter().map(|s| s.to_string())).unwrap()
    }

    #[test]
    fn interview_example() {
        let v = vocab(&["Woman", "Man", "Bird", "Tree"]);
        let text = "A man is answering questions in an interview at a festival. \
                    Behind him is a decorative item shaped like a purple bird";
        let m = classes_from_text(text, &v, MatchMode::All);
        assert_eq!(m.query.ids(), vec![1, 2]);
        assert_eq!(
            m.matched.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(),
            vec!["Man", "Bird"]
        );
    }

    #[test]
    fn no_vocabulary_words() {
        let v = vocab(&["man", "bird"]);
        let m = classes_from_text("a sunset over the ocean", &v, MatchMode::All);
        assert!(m.query.is_empty());
        assert!(m.matched.is_empty());
    }

    /// Oracle: try every vocabulary phrase at every position; keep the
    /// longest at the earliest unconsumed position.
    fn longest_match_oracle(text: &str, names: &[&str]) -> BTreeSet<u32> {
        let words: Vec<String> = tokenize(text);
        let phrases: Vec<Vec<String>> = names.iter().map(|n| tokenize(n)).collect();
        let mut out = BTreeSet::new();
        let mut i = 0;
        while i < words.len() {
            let mut best: Option<(usize, usize)> = None;
            for (id, p) in phrases.iter().enumerate() {
                if words.len() - i >= p.len() && words[i..i + p.len()] == p[..] && best.is_none_or(|(_, l)| p.len() > l)
                {
                    best = Some((id, p.len()));
                }
            }
            match best {
                Some((id, l)) => {
                    out.insert(id as u32);
                    i += l;
                }
                None => i += 1,
            }
        }
        out
    }

    #[test]
    fn multi_word_entry_wins() {
        let names = ["light", "traffic light", "car", "red"];
        let v = vocab(&names);
        let text = "a traffic light turns red";
        let got: BTreeSet<u32> = classes_from_text(text, &v, MatchMode::All)
            .query
            .ids()
            .into_iter()
            .collect();
        assert_eq!(got, longest_match_oracle(text, &names));
        assert_eq!(got, BTreeSet::from([1, 3]));
        let got = classes_from_text("the light is on", &v, MatchMode::All).query.ids();
        assert_eq!(got, vec![0]);
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        let v = vocab(&["Traffic light", "Man"]);
        let m = classes_from_text("MAN, near a traffic-light!", &v, MatchMode::Any);
        assert_eq!(m.query.ids(), vec![0, 1]);
        assert_eq!(m.query.mode, MatchMode::Any);
        // "woman" must not match "man"
        assert!(classes_from_text("a woman", &v, MatchMode::All).query.is_empty());
    }

    #[test]
    fn vocabulary_validation() {
        assert_eq!(
            ClassVocabulary::from_lines("Man\nbird\nMAN\n"),
            Err(VocabularyError::Duplicate {
                line: 3,
                first: 1,
                name: "MAN".into()
            })
        );
        assert_eq!(
            ClassVocabulary::from_lines("Man\n\nbird\n"),
            Err(VocabularyError::EmptyName { line: 2 })
        );
        let v = ClassVocabulary::from_lines("Man\r\nBird\n").unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.id_of("bird"), Some(1));
    }

    fn objects(sets: &[&[u32]], c: usize) -> ObjectVectors {
        let mut o = ObjectVectors::empty(sets.len(), c);
        for (i, s) in sets.iter().enumerate() {
            o.set(i as u32, s).unwrap();
        }
        o
    }

    #[test]
    fn containment_and_overlap() {
        // man=1, bird=2, tree=3
        let o = objects(&[&[1, 2, 3], &[1], &[]], 600);
        let all = QueryClassVector::from_ids(&[1, 2], 600, MatchMode::All).unwrap();
        let any = QueryClassVector {
            mode: MatchMode::Any,
            ..all.clone()
        };
        assert_eq!(filter_frames(&o, &all).ones().collect::<Vec<_>>(), vec![0]);
        assert_eq!(filter_frames(&o, &any).ones().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn empty_query_disables_filter() {
        let o = objects(&[&[1], &[]], 10);
        let q = QueryClassVector::from_ids(&[], 10, MatchMode::All).unwrap();
        assert_eq!(filter_frames(&o, &q).count_ones(..), 2);
    }

    #[test]
    fn out_of_range_ids_rejected() {
        assert_eq!(
            QueryClassVector::from_ids(&[600], 600, MatchMode::All),
            Err(FilterError::ClassOutOfRange {
                class: 600,
                num_classes: 600
            })
        );
    }

    #[test]
    fn random_corpus_matches_set_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = 40;
        for _ in 0..20 {
            let sets: Vec<BTreeSet<u32>> = (0..1000)
                .map(|_| {
                    (0..rng.random_range(0..6))
                        .map(|_| rng.random_range(0..c as u32))
                        .collect()
                })
                .collect();
            let mut o = ObjectVectors::empty(sets.len(), c);
            for (i, s) in sets.iter().enumerate() {
                o.set(i as u32, &s.iter().copied().collect::<Vec<_>>()).unwrap();
            }
            let q: BTreeSet<u32> = (0..rng.random_range(1..3))
                .map(|_| rng.random_range(0..c as u32))
                .collect();
            let qv: Vec<u32> = q.iter().copied().collect();
            for mode in [MatchMode::All, MatchMode::Any] {
                let got: Vec<usize> = filter_frames(&o, &QueryClassVector::from_ids(&qv, c, mode).unwrap())
                    .ones()
                    .collect();
                let want: Vec<usize> = sets
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| match mode {
                        MatchMode::All => q.is_subset(s),
                        MatchMode::Any => !q.is_disjoint(s),
                    })
                    .map(|(i, _)| i)
                    .collect();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn adding_a_class_never_grows_all_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = 12;
        let mut o = ObjectVectors::empty(500, c);
        for i in 0..500 {
            let s: BTreeSet<u32> = (0..rng.random_range(0..5))
                .map(|_| rng.random_range(0..c as u32))
                .collect();
            o.set(i, &s.into_iter().collect::<Vec<_>>()).unwrap();
        }
        let mut ids = vec![];
        let mut prev = usize::MAX;
        for class in [3u32, 7, 1, 9] {
            ids.push(class);
            let n = filter_frames(&o, &QueryClassVector::from_ids(&ids, c, MatchMode::All).unwrap()).count_ones(..);
            assert!(n <= prev);
            prev = n;
        }
    }
}
