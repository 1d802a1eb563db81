//! Textual explanations of generative micro-events.
//!
//! Maneuvers become "the ego vehicle <adverb> <verb>". Spatial events are
//! phrased as subject + action and completed with the object of the most
//! similar traffic guideline (TF-IDF cosine over a small shipped corpus).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureId;
use crate::score::FluctuationEvent;
use crate::som::{GenerativeEvent, GenerativeEvents};

pub const DEFAULT_GUIDELINES: &str = include_str!("../data/guidelines.txt");
pub const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.tsv");

pub const EGO: &str = "the ego vehicle";

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("query has no terms")]
    EmptyQuery,
    #[error("guideline corpus is empty")]
    EmptyCorpus,
    #[error("no template for feature `{0}`")]
    UnknownFeature(String),
    #[error("nothing to assemble")]
    EmptyList,
    #[error("lexicon line {0}: expected `adjective<TAB>adverb`")]
    BadLexicon(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Lowercase alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Guideline sentences with their TF-IDF index. Ids are 1-based sentence
/// positions.
#[derive(Debug, Clone)]
pub struct GuidelineCorpus {
    sentences: Vec<(usize, String)>,
    idf: HashMap<String, f64>,
    /// L2-normalized document vectors.
    vectors: Vec<HashMap<String, f64>>,
}

impl GuidelineCorpus {
    pub fn new(sentences: Vec<String>) -> Result<Self, ExplainError> {
        if sentences.is_empty() {
            return Err(ExplainError::EmptyCorpus);
        }
        let docs: Vec<Vec<String>> = sentences.iter().map(|s| tokenize(s)).collect();
        let mut df: HashMap<String, usize> = HashMap::new();
        for d in &docs {
            let mut seen: Vec<&String> = d.iter().collect();
            seen.sort();
            seen.dedup();
            for t in seen {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        let idf: HashMap<String, f64> = df
            .into_iter()
            .map(|(t, c)| (t, (n / c as f64).ln()))
            .collect();
        let vectors = docs.iter().map(|d| weigh(d, &idf)).collect();
        Ok(Self {
            sentences: sentences.into_iter().enumerate().map(|(i, s)| (i + 1, s)).collect(),
            idf,
            vectors,
        })
    }

    /// One sentence per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ExplainError> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExplainError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentence(&self, id: usize) -> Option<&str> {
        self.sentences.get(id.checked_sub(1)?).map(|(_, s)| s.as_str())
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.idf.get(term).copied()
    }
}

/// Raw term frequency times idf, L2-normalized. Terms unknown to the index
/// carry no weight.
fn weigh(tokens: &[String], idf: &HashMap<String, f64>) -> HashMap<String, f64> {
    let mut tf: HashMap<String, f64> = HashMap::new();
    for t in tokens {
        *tf.entry(t.clone()).or_default() += 1.0;
    }
    let mut v: HashMap<String, f64> = tf
        .into_iter()
        .filter_map(|(t, f)| idf.get(&t).map(|w| (t, f * w)))
        .collect();
    let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.values_mut().for_each(|x| *x /= norm);
    }
    v
}

fn dot(a: &HashMap<String, f64>, b: &HashMap<String, f64>) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .filter_map(|(t, x)| large.get(t).map(|y| x * y))
        .sum()
}

/// Rank every guideline by cosine similarity to `query`, highest first,
/// lower id first on ties.
pub fn tfidf_cosine(query: &str, corpus: &GuidelineCorpus) -> Result<Vec<(usize, f64)>, ExplainError> {
    let tokens = tokenize(query);
    if tokens.is_empty() {
        return Err(ExplainError::EmptyQuery);
    }
    let q = weigh(&tokens, &corpus.idf);
    let mut ranked: Vec<(usize, f64)> = corpus
        .vectors
        .iter()
        .zip(&corpus.sentences)
        .map(|(v, (id, _))| (*id, dot(&q, v).clamp(0.0, 1.0)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Adjective → adverb table; unknown words pass through unchanged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    map: BTreeMap<String, String>,
}

impl Lexicon {
    pub fn parse(text: &str) -> Result<Self, ExplainError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (adj, adv) = line.split_once('\t').ok_or(ExplainError::BadLexicon(i + 1))?;
            map.insert(adj.trim().to_lowercase(), adv.trim().to_string());
        }
        Ok(Self { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExplainError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn adverb<'a>(&'a self, adjective: &'a str) -> &'a str {
        self.map.get(adjective).map_or(adjective, String::as_str)
    }
}

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "any", "every", "each", "this", "that", "these", "those",
];
const PREPOSITIONS: &[&str] = &[
    "in", "on", "at", "to", "onto", "into", "from", "near", "behind", "through", "across",
    "along", "of", "by", "with", "over", "under", "toward", "towards", "around", "during",
];

/// The sentence's trailing noun phrase: everything from the last
/// determiner on, plus a preposition directly before it.
pub fn trailing_noun_phrase(sentence: &str) -> String {
    let words: Vec<&str> = sentence
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .collect();
    let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
    let Some(det) = lower.iter().rposition(|w| DETERMINERS.contains(&w.as_str())) else {
        return words.last().map(|w| w.to_string()).unwrap_or_default();
    };
    let start = if det > 0 && PREPOSITIONS.contains(&lower[det - 1].as_str()) {
        det - 1
    } else {
        det
    };
    words[start..].join(" ").to_lowercase()
}

/// Corpus plus lexicon; everything needed to phrase events.
#[derive(Debug, Clone)]
pub struct Explainer {
    pub corpus: GuidelineCorpus,
    pub lexicon: Lexicon,
}

impl Default for Explainer {
    fn default() -> Self {
        Self {
            corpus: GuidelineCorpus::parse(DEFAULT_GUIDELINES).expect("shipped corpus"),
            lexicon: Lexicon::parse(DEFAULT_LEXICON).expect("shipped lexicon"),
        }
    }
}

/// Weight at or above which a maneuver gets its strong adjective.
const STRONG: f64 = 0.5;

impl Explainer {
    pub fn new(corpus: GuidelineCorpus, lexicon: Lexicon) -> Self {
        Self { corpus, lexicon }
    }

    fn maneuver(&self, strong_adj: &str, verb: &str, weight: f64) -> String {
        let adj = if weight >= STRONG { strong_adj } else { "slight" };
        format!("{EGO} {} {verb}", self.lexicon.adverb(adj))
    }

    /// Subject + action completed with the best guideline's object.
    fn spatial(&self, phrase: &str) -> Result<String, ExplainError> {
        let ranked = tfidf_cosine(phrase, &self.corpus)?;
        match ranked.first() {
            Some(&(id, sim)) if sim > 0.0 => {
                let object = trailing_noun_phrase(self.corpus.sentence(id).unwrap_or_default());
                Ok(format!("{phrase} {object}"))
            }
            _ => Ok(phrase.to_string()),
        }
    }

    /// Phrase one generative event.
    pub fn render_feature(&self, ev: &GenerativeEvent) -> Result<String, ExplainError> {
        use FeatureId::*;
        let w = ev.weight;
        match ev.id {
            Weaving => Ok(self.maneuver("heavy", "weaves", w)),
            Swerving => Ok(self.maneuver("sudden", "swerves", w)),
            SideSlip => Ok(self.maneuver("dangerous", "slips sideways", w)),
            AbruptStop => Ok(self.maneuver("abrupt", "stops", 1.0)),
            SharpTurn => Ok(self.maneuver("sharp", "turns", w)),
            Jerk => Ok(self.maneuver("severe", "jerks", w)),
            Pedestrian => self.spatial("pedestrian crossing"),
            PedestrianSpeed => self.spatial("pedestrian walking fast"),
            TrafficLight => self.spatial("red traffic light"),
            Braking => self.spatial("preceding vehicle braking"),
            Preceding => self.spatial("preceding vehicle approaching fast"),
            Heavy => self.spatial("heavy vehicle ahead"),
            Congestion => {
                let level = if ev.value == "moderate" { "moderate" } else { "heavy" };
                self.spatial(&format!("{level} congestion"))
            }
            RoadType => Ok(match ev.value.as_str() {
                "parking" => format!("{EGO} drives in a parking area"),
                "highway" => format!("{EGO} drives on a highway"),
                other => format!("{EGO} drives on a {other}"),
            }),
            Weather => Ok(format!("the weather is {}", ev.value)),
            other => Err(ExplainError::UnknownFeature(other.code().to_string())),
        }
    }

    /// Render by identifier (code or name) with a given weight and value.
    pub fn render_id(&self, id: &str, weight: f64, value: &str) -> Result<String, ExplainError> {
        let id: FeatureId = id
            .parse()
            .map_err(|_| ExplainError::UnknownFeature(id.to_string()))?;
        self.render_feature(&GenerativeEvent {
            id,
            weight,
            value: value.to_string(),
        })
    }

    pub fn explain(
        &self,
        trip_id: &str,
        window_index: usize,
        fluctuation: Option<FluctuationEvent>,
        f_gen: GenerativeEvents,
    ) -> Result<ExplanationReport, ExplainError> {
        let sentences = f_gen
            .events
            .iter()
            .map(|e| self.render_feature(e))
            .collect::<Result<Vec<_>, _>>()?;
        let final_text = if sentences.is_empty() {
            String::from("no explanatory micro-event identified")
        } else {
            assemble_explanation(&sentences)?
        };
        Ok(ExplanationReport {
            trip_id: trip_id.to_string(),
            window_index,
            fluctuation,
            f_gen,
            sentences,
            final_text,
        })
    }
}

/// Join with "and"; after its first mention the ego vehicle becomes "it".
pub fn assemble_explanation(sentences: &[String]) -> Result<String, ExplainError> {
    if sentences.is_empty() {
        return Err(ExplainError::EmptyList);
    }
    let mut seen = false;
    let parts: Vec<String> = sentences
        .iter()
        .map(|s| {
            if seen {
                s.replace(EGO, "it")
            } else {
                seen = s.contains(EGO);
                s.clone()
            }
        })
        .collect();
    Ok(parts.join(" and "))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub trip_id: String,
    pub window_index: usize,
    pub fluctuation: Option<FluctuationEvent>,
    pub f_gen: GenerativeEvents,
    pub sentences: Vec<String>,
    pub final_text: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(id: FeatureId, weight: f64, value: &str) -> GenerativeEvent {
        GenerativeEvent {
            id,
            weight,
            value: value.into(),
        }
    }

    #[test]
    fn identical_query_ranks_first() {
        let c = GuidelineCorpus::parse(DEFAULT_GUIDELINES).unwrap();
        for id in 1..=c.len() {
            let s = c.sentence(id).unwrap().to_string();
            let r = tfidf_cosine(&s, &c).unwrap();
            assert_eq!(r[0].0, id);
            assert!((r[0].1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_query_scores_zero() {
        let c = GuidelineCorpus::new(vec!["red light".into(), "blue sky".into()]).unwrap();
        let r = tfidf_cosine("red", &c).unwrap();
        assert_eq!(r[1], (2, 0.0));
        assert!(matches!(tfidf_cosine(" ,.", &c), Err(ExplainError::EmptyQuery)));
    }

    // Toy corpus: d1 "a b", d2 "a c", d3 "c c d". idf: a = c = ln(3/2),
    // b = d = ln 3. Query "b c".
    #[test]
    fn toy_corpus_hand_computed() {
        let c = GuidelineCorpus::new(vec!["a b".into(), "a c".into(), "c c d".into()]).unwrap();
        let (l15, l3) = ((1.5f64).ln(), (3.0f64).ln());
        let q_norm = (l3 * l3 + l15 * l15).sqrt();
        let d1 = (l15 * l15 + l3 * l3).sqrt();
        let d2 = (2.0 * l15 * l15).sqrt();
        let d3 = (4.0 * l15 * l15 + l3 * l3).sqrt();
        let s1 = l3 * l3 / (q_norm * d1);
        let s2 = l15 * l15 / (q_norm * d2);
        let s3 = l15 * 2.0 * l15 / (q_norm * d3);
        let r: HashMap<usize, f64> = tfidf_cosine("b c", &c).unwrap().into_iter().collect();
        assert!((r[&1] - s1).abs() < 1e-9);
        assert!((r[&2] - s2).abs() < 1e-9);
        assert!((r[&3] - s3).abs() < 1e-9);
    }

    #[test]
    fn noun_phrase_extraction() {
        assert_eq!(
            trailing_noun_phrase("Give way to every pedestrian crossing the intersection."),
            "the intersection"
        );
        assert_eq!(trailing_noun_phrase("Stop at the junction."), "at the junction");
        assert_eq!(trailing_noun_phrase("Drive slowly"), "slowly");
    }

    #[test]
    fn worked_examples() {
        let x = Explainer::default();
        assert_eq!(
            x.render_feature(&ev(FeatureId::Jerk, 0.9, "30.0 m/s³")).unwrap(),
            "the ego vehicle severely jerks"
        );
        assert_eq!(
            x.render_feature(&ev(FeatureId::Pedestrian, 1.0, "present")).unwrap(),
            "pedestrian crossing the intersection"
        );
        assert!(matches!(
            x.render_id("X_T", 1.0, ""),
            Err(ExplainError::UnknownFeature(_))
        ));
        assert!(matches!(
            x.render_feature(&ev(FeatureId::MeanCars, 1.0, "3")),
            Err(ExplainError::UnknownFeature(_))
        ));
    }

    #[test]
    fn every_explanatory_feature_renders() {
        let x = Explainer::default();
        for &id in FeatureId::ALL.iter().filter(|id| id.is_explanatory()) {
            let s = x.render_feature(&ev(id, 0.8, "heavy")).unwrap();
            assert!(!s.is_empty());
            assert!(!tokenize(&s).contains(&"and".to_string()), "{s}");
        }
    }

    #[test]
    fn assembly() {
        let one = vec!["the ego vehicle severely jerks".to_string()];
        assert_eq!(assemble_explanation(&one).unwrap(), one[0]);
        let two = vec![
            "the ego vehicle swerves".to_string(),
            "the ego vehicle severely jerks".to_string(),
        ];
        assert_eq!(
            assemble_explanation(&two).unwrap(),
            "the ego vehicle swerves and it severely jerks"
        );
        assert!(matches!(assemble_explanation(&[]), Err(ExplainError::EmptyList)));
    }

    #[test]
    fn lexicon_fallback() {
        let l = Lexicon::parse("severe\tseverely\n").unwrap();
        assert_eq!(l.adverb("severe"), "severely");
        assert_eq!(l.adverb("quick"), "quick");
        assert!(matches!(Lexicon::parse("oops\n"), Err(ExplainError::BadLexicon(1))));
    }

    proptest::proptest! {
        #[test]
        fn similarity_symmetric_and_order_free(
            a in proptest::collection::vec("[a-e]{1,3}", 1..6),
            b in proptest::collection::vec("[a-e]{1,3}", 1..6),
        ) {
            let mut a_rev = a.clone();
            a_rev.reverse();
            let c = GuidelineCorpus::new(vec![a.join(" "), b.join(" "), "zz".into()]).unwrap();
            let from_a: HashMap<usize, f64> = tfidf_cosine(&a.join(" "), &c).unwrap().into_iter().collect();
            let from_b: HashMap<usize, f64> = tfidf_cosine(&b.join(" "), &c).unwrap().into_iter().collect();
            let rev: HashMap<usize, f64> = tfidf_cosine(&a_rev.join(" "), &c).unwrap().into_iter().collect();
            proptest::prop_assert!((from_a[&2] - from_b[&1]).abs() < 1e-12);
            proptest::prop_assert!((from_a[&2] - rev[&2]).abs() < 1e-12);
        }

        #[test]
        fn conjunction_count(parts in proptest::collection::vec("[b-z]{1,6}( [b-z]{1,6}){0,3}", 1..6)) {
            let text = assemble_explanation(&parts).unwrap();
            let ands = text.split_whitespace().filter(|w| *w == "and").count();
            proptest::prop_assert_eq!(ands, parts.len() - 1);
        }
    }
}
