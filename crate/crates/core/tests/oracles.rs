//! Worked examples checked against independent oracles written here, plus
//! frozen values for outputs that depend on implementation choices.

mod common;

use std::collections::BTreeSet;

use sha2::{Digest, Sha256};

use medcoder::embedding::{embed, HashingEmbedder};
use medcoder::evalkit::{score_diagnoses, score_evidence, token_jaccard, Counts};
use medcoder::extractor::{ground_extractions, GroundingConfig, ParsedExtraction, ParsedOutput};
use medcoder::grounding::{fuzzy_ground, segment_sentences, Bm25Params, SentenceIndex};
use medcoder::llm::{ChatMessage, ChatRequest};
use medcoder::reranker::parse_permutation;

const KNEE_NOTE: &str = "Patient fell onto the right knee while playing soccer yesterday. Edema and ecchymosis surrounding the knee. Positive pain to palpation. Assessment: Right Knee Contusion. Plan: ice, elevation and ibuprofen.";

/// Textbook dynamic-programming edit distance.
fn dp_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}

/// BM25 over hand-segmented sentences; returns the index of the best one.
fn brute_force_bm25_top(query: &str, sentences: &[&str]) -> usize {
    let Bm25Params { k1, b } = Bm25Params::default();
    let docs: Vec<Vec<String>> = sentences.iter().map(|s| words(s)).collect();
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let score = |d: &Vec<String>| -> f64 {
        words(query)
            .iter()
            .map(|t| {
                let tf = d.iter().filter(|w| *w == t).count() as f64;
                let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avg))
            })
            .sum()
    };
    let scores: Vec<f64> = docs.iter().map(score).collect();
    (0..scores.len()).fold(0, |best, i| if scores[i] > scores[best] { i } else { best })
}

const KNEE_SENTENCES: [&str; 5] = [
    "Patient fell onto the right knee while playing soccer yesterday.",
    "Edema and ecchymosis surrounding the knee.",
    "Positive pain to palpation.",
    "Assessment: Right Knee Contusion.",
    "Plan: ice, elevation and ibuprofen.",
];

#[test]
fn segmentation_matches_hand_split() {
    let got: Vec<String> = segment_sentences(KNEE_NOTE).sentences().iter().map(|s| s.text.clone()).collect();
    assert_eq!(got, KNEE_SENTENCES);
    assert_eq!(segment_sentences("Dr. Smith saw the patient.").len(), 1);
}

#[test]
fn misspelled_query_grounds_with_edit_distance_score() {
    let note = "His examination is consistent with rather severe post-traumatic stenosing tenosynovitis of the right index finger.";
    let span = fuzzy_ground("stenosing tenosinovitis", note).unwrap();
    assert!(span.grounded);
    assert_eq!(span.text, "stenosing tenosynovitis");
    let oracle = 1.0 - dp_levenshtein("stenosing tenosinovitis", "stenosing tenosynovitis") as f64 / 23.0;
    assert_eq!(dp_levenshtein("stenosing tenosinovitis", "stenosing tenosynovitis"), 1);
    assert!((span.score - oracle).abs() < 1e-12);
    assert_eq!(&note[span.start..span.end], span.text);
}

#[test]
fn bm25_picks_the_edema_sentence() {
    let index = SentenceIndex::build(KNEE_NOTE, Bm25Params::default());
    let top = index.top_sentences("edema ecchymosis knee", 1);
    assert_eq!(top[0].sentence.text, "Edema and ecchymosis surrounding the knee.");
    assert_eq!(top[0].index, brute_force_bm25_top("edema ecchymosis knee", &KNEE_SENTENCES));
}

#[test]
fn evidence_snippet_is_replaced_by_its_sentence() {
    let ontology = common::ontology();
    let parsed = ParsedOutput {
        items: vec![ParsedExtraction {
            diagnosis: "Right Knee Contusion".into(),
            supporting_evidence: vec!["pain on palpation of knee".into()],
            icd10: Some("S80.01XA".into()),
        }],
        reasoning: String::new(),
    };
    let result = ground_extractions("r", &parsed, "", KNEE_NOTE, &ontology, &GroundingConfig::default());
    let ev = &result.extractions[0].evidence[0];
    assert_eq!(ev.substituted_sentence.as_deref(), Some("Positive pain to palpation."));
    assert_eq!(KNEE_SENTENCES[brute_force_bm25_top("pain on palpation of knee", &KNEE_SENTENCES)], "Positive pain to palpation.");
    assert!(ev.span.is_valid_for(KNEE_NOTE));
    let dx = &result.extractions[0];
    assert_eq!(dx.diagnosis_span.text, "Right Knee Contusion");
    assert!(dx.prompted_code_valid);
}

#[test]
fn fallback_embedder_prefers_the_matching_description() {
    let e = HashingEmbedder::default();
    let q = embed("left shoulder impingement", &e).unwrap();
    let near = embed("Impingement syndrome of left shoulder", &e).unwrap();
    let far = embed("Trigger finger, right index finger", &e).unwrap();
    assert!(q.cosine(&near) > q.cosine(&far));
}

/// FNV-1a over the UTF-8 bytes of each padded 3-gram.
fn oracle_buckets(text: &str, dim: u64) -> Vec<(usize, f32)> {
    let padded: Vec<char> = format!(" {} ", text.to_lowercase()).chars().collect();
    let mut counts = vec![0.0f32; dim as usize];
    for gram in padded.windows(3) {
        let s: String = gram.iter().collect();
        let mut h: u64 = 14695981039346656037;
        for b in s.bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(1099511628211);
        }
        counts[(h % dim) as usize] += 1.0;
    }
    counts.into_iter().enumerate().filter(|&(_, v)| v > 0.0).collect()
}

#[test]
fn hashing_embedder_matches_fnv_oracle() {
    let f = HashingEmbedder::new(16).features("Knee");
    let nonzero: Vec<(usize, f32)> = f.iter().copied().enumerate().filter(|&(_, v)| v > 0.0).collect();
    assert_eq!(f.iter().sum::<f32>(), 4.0);
    assert_eq!(nonzero, oracle_buckets("Knee", 16));
    assert_eq!(nonzero, FROZEN_KNEE_BUCKETS);
}

const FROZEN_KNEE_BUCKETS: [(usize, f32); 3] = [(6, 1.0), (11, 2.0), (13, 1.0)];

#[test]
fn repair_examples_follow_the_rules() {
    assert_eq!(parse_permutation("[2] > [2] > [5]", 3), (vec![2, 1, 3], true));
    assert_eq!(parse_permutation("I think [3] is best.", 3), (vec![3, 1, 2], true));
    assert_eq!(parse_permutation("[2] > [3] > [1]", 3), (vec![2, 3, 1], false));
}

#[test]
fn set_metrics_match_hand_counts() {
    let c = score_diagnoses(&["a", "b", "c"], &["b", "d"]);
    assert_eq!(c, Counts::new(1, 2, 1));
    assert!((c.precision() - 1.0 / 3.0).abs() < 1e-12);
    assert!((c.recall() - 0.5).abs() < 1e-12);
    assert!((c.f1() - 0.4).abs() < 1e-12);
}

#[test]
fn evidence_jaccard_matches_token_set_oracle() {
    let (p, g) = ("Positive pain to palpation.", "Positive pain to palpation of the knee.");
    let a: BTreeSet<String> = words(p).into_iter().collect();
    let b: BTreeSet<String> = words(g).into_iter().collect();
    let oracle = a.intersection(&b).count() as f64 / a.union(&b).count() as f64;
    assert!((oracle - 4.0 / 7.0).abs() < 1e-12);
    assert!((token_jaccard(p, g) - oracle).abs() < 1e-12);
    assert_eq!(score_evidence(&[p], &[g], 0.5), Counts::new(1, 0, 0));
    assert_eq!(score_evidence(&[p], &[g], 0.6), Counts::new(0, 1, 1));
}

#[test]
fn request_hash_is_frozen() {
    let req = ChatRequest::new("any-model", vec![ChatMessage::system("sys"), ChatMessage::user("hello")]);
    let other_model = ChatRequest::new("other", req.messages.clone());
    assert_eq!(req.request_hash(), other_model.request_hash());
    let canonical = r#"[{"content":"sys","role":"system"},{"content":"hello","role":"user"}]"#;
    let oracle: String = Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(req.request_hash(), oracle);
    assert_eq!(req.request_hash(), FROZEN_REQUEST_HASH);
}

const FROZEN_REQUEST_HASH: &str = "767ed27ac0a73503fc7102a93a74f771187121cbbe7525b42ffa7f06a1637caa";
