//! Synthetic caption corpora and scripted dialogues for closed-loop runs
//! with the reference backends.
//!
//! Each caption is a subject plus one value for every attribute slot. The
//! corpus "images" are echo artifacts of the captions, so the reference
//! image encoder maps them near the hash embedding of the caption text.
//! A dialogue starts from the subject and one attribute and then asks
//! about the remaining slots one turn at a time; some answers are
//! deliberately uninformative.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use crate::backends::Backends;
use crate::corpus::{build_from_manifest, CorpusRecord};
use crate::error::Result;
use crate::eval::RawDialogue;
use crate::index::EmbeddingIndex;

struct Slot {
    question: &'static str,
    phrase: &'static str,
    values: &'static [&'static str],
}

const SUBJECTS: &[&str] = &[
    "dog", "cat", "horse", "car", "bicycle", "boat", "bird", "train", "bus", "cow", "sheep",
    "motorcycle",
];

// `phrase` renders the value inside the caption; `{}` is the value.
const SLOTS: &[Slot] = &[
    Slot {
        question: "what color is the main subject in the picture?",
        phrase: "{}",
        values: &["red", "blue", "green", "white"],
    },
    Slot {
        question: "how big does it look compared to the other things around it?",
        phrase: "{}",
        values: &["small", "large", "tiny", "huge"],
    },
    Slot {
        question: "what is it doing at the moment the photo was taken?",
        phrase: "{}",
        values: &["running", "sleeping", "standing", "jumping"],
    },
    Slot {
        question: "where does the scene seem to take place?",
        phrase: "on a {}",
        values: &["beach", "street", "meadow", "pier"],
    },
    Slot {
        question: "what time of the day does the photo appear to be from?",
        phrase: "at {}",
        values: &["dawn", "noon", "sunset", "midnight"],
    },
    Slot {
        question: "what is the weather like in the image?",
        phrase: "in {} weather",
        values: &["sunny", "rainy", "snowy", "foggy"],
    },
    Slot {
        question: "is there anyone else in the picture with it?",
        phrase: "with a {}",
        values: &["child", "woman", "farmer", "tourist"],
    },
    Slot {
        question: "what can you see far behind it in the background?",
        phrase: "near {}",
        values: &["mountains", "skyscrapers", "pines", "lighthouse"],
    },
    Slot {
        question: "are there any other objects close to it that stand out?",
        phrase: "beside a {}",
        values: &["umbrella", "bench", "kite", "barrel"],
    },
    Slot {
        question: "does anything about its surface or texture stand out?",
        phrase: "looking {}",
        values: &["muddy", "shiny", "striped", "spotted"],
    },
    Slot {
        question: "how is the picture framed?",
        phrase: "in a {} shot",
        values: &["closeup", "panoramic", "overhead", "blurry"],
    },
];

const UNINFORMATIVE: &[&str] = &["not sure", "i cannot tell", "hard to say"];

/// Number of attribute slots per caption.
pub fn slot_count() -> usize {
    SLOTS.len()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticCaption {
    pub id: u64,
    pub uri: String,
    pub subject: &'static str,
    /// Chosen value index for every slot.
    pub values: Vec<usize>,
    pub text: String,
}

impl SyntheticCaption {
    fn value(&self, slot: usize) -> &'static str {
        SLOTS[slot].values[self.values[slot]]
    }
}

fn render(subject: &str, values: &[usize]) -> String {
    let mut parts = vec!["a".to_owned()];
    // size and color read naturally before the subject
    parts.push(SLOTS[1].values[values[1]].to_owned());
    parts.push(SLOTS[0].values[values[0]].to_owned());
    parts.push(subject.to_owned());
    for (i, slot) in SLOTS.iter().enumerate().skip(2) {
        parts.push(slot.phrase.replace("{}", slot.values[values[i]]));
    }
    parts.join(" ")
}

/// `n` distinct captions with ids `0..n` and URIs `synthetic://caption/<id>`.
pub fn caption_corpus(n: usize, seed: u64) -> Vec<SyntheticCaption> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let subject = *SUBJECTS.choose(&mut rng).expect("non-empty");
        let values: Vec<usize> = SLOTS.iter().map(|s| rng.random_range(0..s.values.len())).collect();
        let text = render(subject, &values);
        if !seen.insert(text.clone()) {
            continue;
        }
        let id = out.len() as u64;
        out.push(SyntheticCaption {
            id,
            uri: format!("synthetic://caption/{id}"),
            subject,
            values,
            text,
        });
    }
    out
}

/// Renders one image per caption (seeded by id) and encodes it with the
/// image encoder of `backends`.
pub fn build_caption_index(captions: &[SyntheticCaption], backends: &Backends) -> Result<EmbeddingIndex> {
    build_from_manifest(&manifest(captions), backends)
}

/// Caption records for [`crate::corpus::build_from_manifest`].
pub fn manifest(captions: &[SyntheticCaption]) -> Vec<CorpusRecord> {
    captions
        .iter()
        .map(|c| CorpusRecord::caption(c.id, &c.uri, &c.text))
        .collect()
}

/// Options for [`scripted_dialogues`].
#[derive(Debug, Clone, Copy)]
pub struct DialogueScript {
    pub dialogues: usize,
    pub turns: usize,
    /// Probability that an answer carries no information.
    pub uninformative_rate: f64,
    pub seed: u64,
}

impl Default for DialogueScript {
    fn default() -> Self {
        Self {
            dialogues: 100,
            turns: 10,
            uninformative_rate: 0.2,
            seed: 0,
        }
    }
}

/// Dialogues whose targets are drawn from `captions`. The initial
/// description names the subject and its color; each turn asks about one
/// further slot, in random order, cycling when `turns` exceeds the slot
/// count.
pub fn scripted_dialogues(captions: &[SyntheticCaption], script: DialogueScript) -> Vec<RawDialogue> {
    assert!(!captions.is_empty(), "caption list is empty");
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    (0..script.dialogues)
        .map(|_| {
            let target = captions.choose(&mut rng).expect("non-empty");
            let mut order: Vec<usize> = (1..SLOTS.len()).collect();
            order.shuffle(&mut rng);
            let mut dialog = vec![format!("a {} {}", target.value(0), target.subject)];
            for t in 0..script.turns {
                let slot = order[t % order.len()];
                let answer = if rng.random_bool(script.uninformative_rate) {
                    UNINFORMATIVE.choose(&mut rng).expect("non-empty").to_string()
                } else {
                    target.value(slot).to_owned()
                };
                dialog.push(format!("{} {answer}", SLOTS[slot].question));
            }
            RawDialogue {
                img: target.uri.clone(),
                dialog,
            }
        })
        .collect()
}
