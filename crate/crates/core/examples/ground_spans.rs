//! Segments a note into sentences, fuzzy-grounds a misspelled diagnosis and
//! finds the sentences that best support a loose evidence snippet.
//!
//! ```text
//! cargo run --example ground_spans
//! ```

use medcoder::grounding::{fuzzy_ground, segment_sentences, Bm25Params, SentenceIndex};

const NOTE: &str = "Dr. Smith saw the patient today. Patient fell onto the right knee while playing soccer. \
Edema and ecchymosis surrounding the knee. Positive pain to palpation. Assessment: Right Knee Contusion.";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for s in segment_sentences(NOTE).sentences() {
        println!("[{:>3}..{:>3}] {}", s.start, s.end, s.text);
    }

    for query in ["right knee contusoin", "left elbow fracture"] {
        let span = fuzzy_ground(query, NOTE)?;
        if span.grounded {
            println!("{query:?} -> {:?} at {}..{} (score {:.3})", span.text, span.start, span.end, span.score);
        } else {
            println!("{query:?} -> not grounded");
        }
    }

    let index = SentenceIndex::build(NOTE, Bm25Params::default());
    for hit in index.top_sentences("pain on palpation of knee", 2) {
        println!("bm25 {:.3}  {}", hit.score, hit.sentence.text);
    }
    Ok(())
}
