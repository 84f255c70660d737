//! Synthetic business-call corpus generator.
//!
//! Utterances are built from slot templates ("hi this is {PERSON} calling
//! from {PRODORG}") filled from per-type gazetteers, then passed through the
//! noise simulator. Roughly half of the generated utterances carry no entity,
//! per-type presence is kept near-balanced by quota, and the train/dev/test
//! split uses the frozen 16124:2292:4497 proportions.

use std::collections::{BTreeMap, HashSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::util::mix_seed;

use super::{bio_encode, noisify, DatasetSplit, EntitySpan, EntityType, LabeledUtterance, NoiseConfig, Tag};

/// Per-type entity lexicons. Entries may be multi-token ("Mary Price").
#[derive(Debug, Clone, PartialEq)]
pub struct Gazetteers {
    entries: BTreeMap<EntityType, Vec<String>>,
}

impl Gazetteers {
    pub fn new(person: Vec<String>, prodorg: Vec<String>, location: Vec<String>) -> Gazetteers {
        let mut entries = BTreeMap::new();
        entries.insert(EntityType::Person, person);
        entries.insert(EntityType::ProdOrg, prodorg);
        entries.insert(EntityType::Location, location);
        Gazetteers { entries }
    }

    pub fn get(&self, ty: EntityType) -> &[String] {
        self.entries.get(&ty).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn add(&mut self, ty: EntityType, entry: impl Into<String>) {
        self.entries.entry(ty).or_default().push(entry.into());
    }

    /// Every token appearing in any entry, lowercased and deduplicated.
    pub fn token_set_lowercase(&self) -> HashSet<String> {
        let mut set = HashSet::new();
        for entries in self.entries.values() {
            for entry in entries {
                for token in entry.split_whitespace() {
                    set.insert(token.to_lowercase());
                }
            }
        }
        set
    }

    fn validate(&self) -> Result<()> {
        for ty in EntityType::ALL {
            if self.get(ty).is_empty() {
                return Err(Error::Config(format!("empty gazetteer for {ty}")));
            }
            for entry in self.get(ty) {
                if entry.split_whitespace().next().is_none() {
                    return Err(Error::Config(format!("blank gazetteer entry for {ty}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Piece {
    Word(String),
    /// `(a|b|c)` alternation; one option is drawn per filled utterance.
    Choice(Vec<String>),
    Slot(EntityType),
}

#[derive(Debug, Clone)]
struct Template {
    pieces: Vec<Piece>,
    /// Types present in this template, deduplicated.
    types: Vec<EntityType>,
}

fn compile_template(raw: &str) -> Result<Template> {
    let mut pieces = Vec::new();
    let mut types = Vec::new();
    for word in raw.split_whitespace() {
        if word.starts_with('{') && word.ends_with('}') {
            let name = &word[1..word.len() - 1];
            let ty: EntityType = name
                .parse()
                .map_err(|_| Error::Config(format!("unknown slot {word:?} in template {raw:?}")))?;
            if !types.contains(&ty) {
                types.push(ty);
            }
            pieces.push(Piece::Slot(ty));
        } else if word.starts_with('(') && word.ends_with(')') && word.contains('|') {
            let options: Vec<String> = word[1..word.len() - 1]
                .split('|')
                .map(String::from)
                .collect();
            if options.iter().any(String::is_empty) {
                return Err(Error::Config(format!("empty option in {word:?} of template {raw:?}")));
            }
            pieces.push(Piece::Choice(options));
        } else {
            pieces.push(Piece::Word(word.to_string()));
        }
    }
    if pieces.is_empty() {
        return Err(Error::Config("empty template".into()));
    }
    Ok(Template { pieces, types })
}

fn fill_template(template: &Template, gazetteers: &Gazetteers, rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<Tag>) {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    for piece in &template.pieces {
        match piece {
            Piece::Word(w) => tokens.push(w.clone()),
            Piece::Choice(options) => {
                tokens.push(options.choose(rng).expect("non-empty").clone())
            }
            Piece::Slot(ty) => {
                let entry = gazetteers.get(*ty).choose(rng).expect("validated non-empty");
                let start = tokens.len();
                tokens.extend(entry.split_whitespace().map(String::from));
                spans.push(EntitySpan::new(*ty, start, tokens.len()));
            }
        }
    }
    let tags = bio_encode(&spans, tokens.len()).expect("template spans are disjoint");
    (tokens, tags)
}

/// Picks a positive template keeping per-type presence counts as level as
/// possible; ties are broken by the RNG.
fn pick_balanced<'a>(
    templates: &'a [Template],
    counts: &BTreeMap<EntityType, usize>,
    rng: &mut ChaCha8Rng,
) -> &'a Template {
    let spread = |c: &BTreeMap<EntityType, usize>| {
        let max = c.values().max().copied().unwrap_or(0);
        let min = c.values().min().copied().unwrap_or(0);
        max - min
    };
    let mut best: Vec<&Template> = Vec::new();
    let mut best_spread = usize::MAX;
    for template in templates {
        let mut tentative = counts.clone();
        for ty in &template.types {
            *tentative.get_mut(ty).expect("all types tracked") += 1;
        }
        let s = spread(&tentative);
        match s.cmp(&best_spread) {
            std::cmp::Ordering::Less => {
                best_spread = s;
                best = vec![template];
            }
            std::cmp::Ordering::Equal => best.push(template),
            std::cmp::Ordering::Greater => {}
        }
    }
    best.choose(rng).expect("templates non-empty")
}

/// Generates `count` noisified utterances with ids `{prefix}-{index:06}`.
/// Even indices draw entity-bearing templates (quota-balanced over types),
/// odd indices draw entity-free ones, so the stream is close to half
/// positive.
///
/// With `distinct` set, token sequences are globally unique (required for
/// gold corpora, where splits must not share a token-identical utterance);
/// without it natural repetition is allowed, as in a real transcript pool.
pub fn generate_utterances(
    gazetteers: &Gazetteers,
    templates: &[String],
    count: usize,
    noise: &NoiseConfig,
    seed: u64,
    id_prefix: &str,
    distinct: bool,
) -> Result<Vec<LabeledUtterance>> {
    gazetteers.validate()?;
    noise.validate()?;
    if templates.is_empty() {
        return Err(Error::Config("template list is empty".into()));
    }
    let compiled: Vec<Template> = templates
        .iter()
        .map(|t| compile_template(t))
        .collect::<Result<_>>()?;
    let positive: Vec<Template> = compiled.iter().filter(|t| !t.types.is_empty()).cloned().collect();
    let negative: Vec<Template> = compiled.iter().filter(|t| t.types.is_empty()).cloned().collect();
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::Config(
            "need at least one entity-bearing and one entity-free template".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<EntityType, usize> = EntityType::ALL.iter().map(|t| (*t, 0)).collect();
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut out = Vec::with_capacity(count);

    for index in 0..count {
        let want_positive = index % 2 == 0;
        let mut produced = None;
        for attempt in 0..40u64 {
            let ((raw_tokens, raw_tags), types) = if want_positive {
                let template = pick_balanced(&positive, &counts, &mut rng);
                (fill_template(template, gazetteers, &mut rng), template.types.clone())
            } else {
                let template = negative.choose(&mut rng).expect("non-empty");
                (fill_template(template, gazetteers, &mut rng), Vec::new())
            };
            let clean = LabeledUtterance::new(
                format!("{id_prefix}-{index:06}"),
                raw_tokens,
                Some(raw_tags),
            );
            let noise_stream = (index as u64) | (attempt << 40);
            let noised = noisify(&clean, &noise.with_seed(mix_seed(noise.rng_seed, noise_stream)))?;
            if !distinct || seen.insert(noised.tokens.clone()) {
                for ty in &types {
                    *counts.get_mut(ty).expect("tracked") += 1;
                }
                produced = Some(noised);
                break;
            }
        }
        match produced {
            Some(utt) => out.push(utt),
            None => {
                return Err(Error::Config(
                    "could not generate enough distinct utterances; add templates or gazetteer entries"
                        .into(),
                ))
            }
        }
    }
    Ok(out)
}

/// Split sizes at the frozen 16124:2292:4497 train/dev/test proportions,
/// rounding half up and giving the remainder to test.
pub(crate) fn split_sizes(count: usize) -> (usize, usize, usize) {
    const TRAIN: u64 = 16124;
    const DEV: u64 = 2292;
    const TOTAL: u64 = 22913;
    let n = count as u64;
    let train = ((n * TRAIN + TOTAL / 2) / TOTAL) as usize;
    let dev = ((n * DEV + TOTAL / 2) / TOTAL) as usize;
    (train, dev, count - train - dev)
}

/// Generates a gold corpus and partitions it into train/dev/test.
///
/// `seed` drives template and slot choices; per-utterance noise streams are
/// derived from `noise.rng_seed`. The output is validated: unique ids, no
/// token-identical utterance in two splits, BIO-valid tags.
pub fn generate_corpus(
    gazetteers: &Gazetteers,
    templates: &[String],
    count: usize,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<DatasetSplit> {
    if count < 10 {
        return Err(Error::Config(format!("corpus count must be at least 10, got {count}")));
    }
    let utterances = generate_utterances(gazetteers, templates, count, noise, seed, "utt", true)?;
    let (n_train, n_dev, _) = split_sizes(count);

    let mut train = Vec::with_capacity(n_train);
    let mut dev = Vec::with_capacity(n_dev);
    let mut test = Vec::new();
    for (index, mut utt) in utterances.into_iter().enumerate() {
        let (name, bucket) = if index < n_train {
            ("train", &mut train)
        } else if index < n_train + n_dev {
            ("dev", &mut dev)
        } else {
            ("test", &mut test)
        };
        utt.id = format!("{name}-{index:06}");
        bucket.push(utt);
    }

    let split = DatasetSplit { train, dev, test };
    split.validate()?;
    Ok(split)
}

/// Built-in gazetteers: a desk-scale stand-in for in-domain entity lexicons.
/// A few entries ("bill", "mark", "georgia", "amazon") collide with ordinary
/// conversational words so that type decisions require context.
pub fn default_gazetteers() -> Gazetteers {
    let first = [
        "Mary", "John", "Linda", "Carlos", "Aisha", "Elena", "Peter", "Nadia", "Omar", "Grace",
        "Victor", "Sofia", "Daniel", "Priya", "Hannah", "Marcus", "Bill", "Mark", "Diane", "Raj",
        "Tina", "Walter", "Yuki", "Paulo",
    ];
    let last = [
        "Price", "Reyes", "Okafor", "Smith", "Johnson", "Lee", "Novak", "Garcia", "Kim", "Patel",
        "Brown", "Silva", "Hansen", "Moreau", "Ishida", "Kowalski", "Adams", "Murphy", "Diaz",
        "Weber",
    ];
    let mut person: Vec<String> = Vec::new();
    for (i, f) in first.iter().enumerate() {
        person.push((*f).to_string());
        person.push(format!("{f} {}", last[i % last.len()]));
        person.push(format!("{f} {}", last[(i + 7) % last.len()]));
    }

    let prodorg: Vec<String> = [
        "Acme", "Acme Corp", "Globex", "Initech", "Umbrella Systems", "Vandelay Industries",
        "Hooli", "Stark Logistics", "Wayne Enterprises", "Cyberdyne", "Pied Piper", "Aperture Labs",
        "Bluth Company", "Dunder Mifflin", "Sterling Cooper", "Oceanic Airlines", "Soylent Corp",
        "Monarch Solutions", "Tyrell Corporation", "Wonka Industries", "Nakatomi Trading",
        "Prestige Worldwide", "Gringotts Bank", "Duff Brewing", "Contoso", "Fabrikam",
        "Northwind Traders", "Amazon", "Zenith Cable", "Paradigm Software", "Helix Pharma",
        "Quantum Freight", "Redwood Insurance", "Summit Telecom", "Harbor Health",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    let location: Vec<String> = [
        "Lisbon", "Omaha", "Toronto", "Denver", "Austin", "Singapore", "Osaka", "Dublin",
        "Nairobi", "Oslo", "Boston", "Madrid", "Chicago", "Seattle", "Atlanta", "Georgia",
        "New York", "San Diego", "Hong Kong", "Sao Paulo", "Mexico City", "Cape Town",
        "New Orleans", "Salt Lake City", "Kuala Lumpur", "Buenos Aires", "Phoenix", "Tulsa",
        "Memphis", "Portland",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    Gazetteers::new(person, prodorg, location)
}

/// Built-in utterance templates. `(a|b|c)` groups add lexical variety.
/// Entity-free templates deliberately reuse gazetteer surface forms as plain
/// words ("the bill", "mark it down") so the tagger cannot solve the task by
/// lexicon lookup alone.
pub fn default_templates() -> Vec<String> {
    [
        // Entity-bearing.
        "hi , this is {PERSON} calling from {PRODORG} .",
        "(hello|hi|hey) , my name is {PERSON} and i work with {PRODORG} in {LOCATION} .",
        "good (morning|afternoon|evening) , {PERSON} speaking , how can i help you today ?",
        "am i speaking with {PERSON} (now|today) ?",
        "i got a (call|voicemail|message) from {PERSON} at {PRODORG} (yesterday|earlier|recently) .",
        "can you (transfer|connect) me to {PERSON} please ?",
        "we shipped your (order|package|replacement) from our {LOCATION} warehouse .",
        "our (office|team|branch) in {LOCATION} will contact you (shortly|tomorrow|soon) .",
        "i am calling about the (invoice|bill|statement) from {PRODORG} .",
        "the account is registered to {PERSON} in {LOCATION} .",
        "does {PRODORG} still have a (branch|location|depot) in {LOCATION} ?",
        "i spoke (to|with) {PERSON} from (billing|support|sales) last week .",
        "my (colleague|manager|assistant) {PERSON} flew to {LOCATION} this morning .",
        "the contract with {PRODORG} was signed in {LOCATION} (yesterday|recently) .",
        "please tell {PERSON} that {PERSON} returned the call .",
        "i am traveling to {LOCATION} next (week|month) for the {PRODORG} meeting .",
        "you can reach {PERSON} at our {LOCATION} office .",
        "the support team at {PRODORG} (escalated|closed|reviewed) your ticket .",
        "is this the right number for {PRODORG} ?",
        "i moved from {LOCATION} to {LOCATION} last (year|month|spring) .",
        "let me check with {PERSON} and call you (back|later) .",
        "your technician {PERSON} is on the way (now|already) .",
        "we partner with {PRODORG} for deliveries to {LOCATION} .",
        "thanks for calling {PRODORG} , this is {PERSON} .",
        // Entity-free.
        "okay let me (check|look) on that (for you|right away|first) .",
        "can you hold on for a (second|minute|moment) please ?",
        "(yeah|yes|sure) that works for me , thanks .",
        "sorry , could you (repeat|confirm|spell) that (please|again) ?",
        "the bill for last month looks (too high|wrong|fine) .",
        "just mark it down as (resolved|pending|urgent) please .",
        "i will send you the (paperwork|forms|documents) this (afternoon|evening|week) .",
        "no worries , take your time (okay|please) .",
        "that sounds (good|great|fine) , talk to you (later|soon|tomorrow) .",
        "could you read me the (reference|confirmation|tracking) number ?",
        "i did not (receive|get|see) the confirmation email (yet|today) .",
        "right , so the warranty covers (one|two|three) years .",
        "hmm , the (line|connection|audio) was breaking up a little .",
        "sure , i can do that (right away|now|later today) .",
        "we appreciate your (patience|time|feedback) with this .",
        "is there anything else i can help (with|you with) (today|now) ?",
        "my (internet|phone|service) keeps dropping every (evening|morning|night) .",
        "the (delivery|refund|upgrade) shows up as (pending|complete|failed) on my end .",
        "(perfect|great|okay) , that answers my question , thanks .",
        "alright , i will (note|log|flag) that on the account .",
        "it rang (twice|three times|forever) and then went to voicemail .",
        "the charge on my card does not look (right|familiar|correct) .",
        "can i get a (copy|summary|receipt) of that by email ?",
        "let me pull up your (file|record|history) real quick .",
        "the (app|website|portal) keeps asking me to log in (again|twice) .",
        "i was on hold for (ten|twenty|forty) minutes earlier .",
        "we can (waive|refund|review) that fee this one time .",
        "my (neighbor|friend|cousin) recommended i give you a call .",
        "that plan costs (ten|twenty|thirty) dollars a month , correct ?",
        "please close the ticket once the (payment|refund|swap) clears .",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}
