//! Seeded synthetic corpora: template grammars over small intent/slot
//! schemas, a typed-mention pretraining corpus, and random schemas.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DatasetRecord, WikiExample, WikiMention};
use crate::error::Result;

/// The running example annotation and its utterance.
pub const DISTANCE_UTTERANCE: &str = "How far is the coffee shop";
pub const DISTANCE_ANNOTATION: &str =
    "[IN:GET_DISTANCE How far is [SL:DESTINATION [IN:GET_RESTAURANT_LOCATION the [SL:TYPE_FOOD coffee ] shop ] ] ]";

/// Intent label with templates; `{SLOT}` marks a slot filled from the
/// grammar's slot rules.
#[derive(Clone, Debug)]
pub struct IntentRule {
    pub label: String,
    pub templates: Vec<String>,
}

/// Slot label with fillers. A filler may itself be a bracketed annotation.
#[derive(Clone, Debug)]
pub struct SlotRule {
    pub label: String,
    pub fillers: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Grammar {
    pub domain: String,
    pub intents: Vec<IntentRule>,
    pub slots: Vec<SlotRule>,
}

fn strs(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn intent(label: &str, templates: &[&str]) -> IntentRule {
    IntentRule {
        label: format!("IN:{label}"),
        templates: strs(templates),
    }
}

fn slot(label: &str, fillers: &[&str]) -> SlotRule {
    SlotRule {
        label: format!("SL:{label}"),
        fillers: strs(fillers),
    }
}

/// Surface words of an annotation, brackets dropped.
pub fn annotation_words(annotation: &str) -> String {
    annotation
        .split_whitespace()
        .filter(|w| !w.starts_with('[') && *w != "]")
        .collect::<Vec<_>>()
        .join(" ")
}

impl Grammar {
    /// One random annotation.
    pub fn annotation<R: Rng>(&self, rng: &mut R) -> String {
        let rule = self.intents.choose(rng).expect("grammar has intents");
        let template = rule.templates.choose(rng).expect("intent has templates");
        let mut out = vec![format!("[{}", rule.label)];
        for word in template.split_whitespace() {
            match word.strip_prefix('{').and_then(|w| w.strip_suffix('}')) {
                Some(name) => {
                    let s = self
                        .slots
                        .iter()
                        .find(|s| s.label[3..] == *name)
                        .unwrap_or_else(|| panic!("template slot {name} has no rule"));
                    let filler = s.fillers.choose(rng).expect("slot has fillers");
                    out.push(format!("[{} {} ]", s.label, filler));
                }
                None => out.push(word.to_string()),
            }
        }
        out.push("]".into());
        out.join(" ")
    }

    /// Up to `n` records with distinct utterances.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<DatasetRecord>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(n);
        let mut attempts = 0;
        while out.len() < n && attempts < 50 * n.max(1) {
            attempts += 1;
            let ann = self.annotation(rng);
            let utt = annotation_words(&ann);
            if seen.insert(utt.clone()) {
                out.push(DatasetRecord::from_annotation(&self.domain, &utt, &ann)?);
            }
        }
        Ok(out)
    }

    /// Every intent and slot label the grammar can emit, including nested
    /// ones inside fillers.
    pub fn labels(&self) -> BTreeSet<String> {
        let mut set: BTreeSet<String> = self.intents.iter().map(|i| i.label.clone()).collect();
        for s in &self.slots {
            set.insert(s.label.clone());
            for f in &s.fillers {
                for w in f.split_whitespace() {
                    if let Some(l) = w.strip_prefix('[') {
                        set.insert(l.to_string());
                    }
                }
            }
        }
        set
    }
}

const PLACES: &[&str] = &[
    "boston", "paris", "denver", "seattle", "chicago", "austin", "london", "miami", "dallas", "portland",
];
const TIMES: &[&str] = &[
    "today", "tomorrow", "tonight", "this weekend", "on monday", "at noon", "next week", "this evening",
];
const SPOTS: &[&str] = &[
    "the airport", "the station", "the museum", "downtown", "the mall", "the park", "the stadium", "the beach",
];

pub fn navigation() -> Grammar {
    Grammar {
        domain: "navigation".into(),
        intents: vec![
            intent(
                "GET_DISTANCE",
                &["how far is {DESTINATION}", "how far is {DESTINATION} from {SOURCE}", "distance to {DESTINATION}"],
            ),
            intent(
                "GET_DIRECTIONS",
                &["directions to {DESTINATION}", "take me to {DESTINATION} by {METHOD_TRAVEL}", "how do i get to {DESTINATION}"],
            ),
            intent(
                "GET_ESTIMATED_DURATION",
                &["how long to get to {DESTINATION}", "how long from {SOURCE} to {DESTINATION} by {METHOD_TRAVEL}"],
            ),
        ],
        slots: vec![
            slot(
                "DESTINATION",
                &[
                    "the airport",
                    "the station",
                    "downtown",
                    "the museum",
                    "[IN:GET_RESTAURANT_LOCATION the [SL:TYPE_FOOD coffee ] shop ]",
                    "[IN:GET_RESTAURANT_LOCATION the [SL:TYPE_FOOD pizza ] place ]",
                ],
            ),
            slot("SOURCE", &["home", "work", "the hotel", "here"]),
            slot("METHOD_TRAVEL", &["car", "bus", "train", "bike"]),
        ],
    }
}

pub fn weather() -> Grammar {
    Grammar {
        domain: "weather".into(),
        intents: vec![
            intent(
                "GET_WEATHER",
                &[
                    "what is the weather in {LOCATION}",
                    "weather {DATE_TIME}",
                    "will it be {WEATHER_ATTRIBUTE} in {LOCATION} {DATE_TIME}",
                    "is it {WEATHER_ATTRIBUTE} outside",
                    "temperature in {LOCATION} in {WEATHER_TEMPERATURE_UNIT}",
                ],
            ),
            intent("GET_SUNRISE", &["when is sunrise {DATE_TIME}", "what time is sunrise in {LOCATION}"]),
            intent("GET_SUNSET", &["when is sunset in {LOCATION}", "sunset time {DATE_TIME}"]),
        ],
        slots: vec![
            slot("LOCATION", PLACES),
            slot("DATE_TIME", TIMES),
            slot("WEATHER_ATTRIBUTE", &["rainy", "sunny", "cold", "windy", "snowing"]),
            slot("WEATHER_TEMPERATURE_UNIT", &["celsius", "fahrenheit"]),
        ],
    }
}

pub fn alarm() -> Grammar {
    Grammar {
        domain: "alarm".into(),
        intents: vec![
            intent("CREATE_ALARM", &["set an alarm {DATE_TIME}", "wake me up {DATE_TIME}", "create an alarm called {ALARM_NAME} {DATE_TIME}"]),
            intent("DELETE_ALARM", &["delete my alarm {DATE_TIME}", "remove the {ALARM_NAME} alarm"]),
            intent("GET_ALARM", &["what alarms do i have {DATE_TIME}", "show my alarms"]),
            intent("SILENCE_ALARM", &["stop the alarm", "turn off the alarm"]),
            intent("UNSUPPORTED_ALARM", &["make my alarm sound like birds", "can alarms play video"]),
        ],
        slots: vec![
            slot(
                "DATE_TIME",
                &["at 7 am", "tomorrow at 6", "every weekday at 8", "in ten minutes", "tonight", "at noon", "on monday", "at 5 pm", "this evening", "on friday at 9", "in an hour", "at midnight"],
            ),
            slot("ALARM_NAME", &["gym", "work", "medicine", "school", "nap", "laundry"]),
        ],
    }
}

pub fn reminder() -> Grammar {
    Grammar {
        domain: "reminder".into(),
        intents: vec![
            intent(
                "CREATE_REMINDER",
                &["remind me to {TODO} {DATE_TIME}", "remind {PERSON_REMINDED} to {TODO}", "set a reminder to {TODO}"],
            ),
            intent("GET_REMINDER", &["what are my reminders {DATE_TIME}", "show reminders for {PERSON_REMINDED}"]),
            intent("DELETE_REMINDER", &["delete the reminder to {TODO}", "cancel my reminders {DATE_TIME}"]),
        ],
        slots: vec![
            slot(
                "TODO",
                &[
                    "buy milk",
                    "pay rent",
                    "water the plants",
                    "feed the cat",
                    "call the bank",
                    "pick up the kids",
                    "[IN:CREATE_CALL call [SL:CONTACT mom ] ]",
                    "[IN:CREATE_CALL call [SL:CONTACT the dentist ] ]",
                ],
            ),
            slot("DATE_TIME", TIMES),
            slot("PERSON_REMINDED", &["me", "my brother", "dad", "the team"]),
        ],
    }
}

pub fn music() -> Grammar {
    Grammar {
        domain: "music".into(),
        intents: vec![
            intent(
                "PLAY_MUSIC",
                &["play {MUSIC_GENRE}", "play some {MUSIC_ARTIST_NAME}", "play {MUSIC_TYPE} by {MUSIC_ARTIST_NAME}", "play {MUSIC_GENRE} by {MUSIC_ARTIST_NAME}"],
            ),
            intent("PAUSE_MUSIC", &["pause the music", "stop playing"]),
            intent("SKIP_TRACK_MUSIC", &["skip this {MUSIC_TYPE}", "next song"]),
            intent("UNSUPPORTED_MUSIC", &["sing me a song yourself", "write a new song"]),
        ],
        slots: vec![
            slot("MUSIC_GENRE", &["jazz", "rock", "classical music", "hip hop", "blues", "country", "pop", "reggae"]),
            slot("MUSIC_ARTIST_NAME", &["adele", "the beatles", "miles davis", "queen", "bob marley", "dolly parton", "prince", "nina simone"]),
            slot("MUSIC_TYPE", &["song", "album", "playlist"]),
        ],
    }
}

/// Five-domain corpus of `per_domain` records each. The first navigation
/// record is the running example, verbatim.
pub fn fixture_corpus(per_domain: usize, seed: u64) -> Result<Vec<DatasetRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![DatasetRecord::from_annotation("navigation", DISTANCE_UTTERANCE, DISTANCE_ANNOTATION)?];
    for g in [navigation(), weather(), alarm(), reminder(), music()] {
        let want = if g.domain == "navigation" { per_domain.saturating_sub(1) } else { per_domain };
        let recs = g.sample(want + 8, &mut rng)?;
        out.extend(
            recs.into_iter()
                .filter(|r| r.utterance.raw() != DISTANCE_UTTERANCE.to_lowercase())
                .take(want),
        );
    }
    Ok(out)
}

/// Two small domains (navigation and weather, at most 8 labels each).
pub fn overfit_corpus(per_domain: usize, seed: u64) -> Result<Vec<DatasetRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = navigation().sample(per_domain, &mut rng)?;
    out.extend(weather().sample(per_domain, &mut rng)?);
    Ok(out)
}

/// A seen domain and an unseen one whose labels recombine the seen labels'
/// description words, over the same surface language.
pub fn zero_shot_pair() -> (Grammar, Grammar) {
    let seen = Grammar {
        domain: "travel".into(),
        intents: vec![
            intent("GET_WEATHER", &["what is the weather in {HOME_LOCATION}", "weather in {TRAVEL_LOCATION} {EVENT_DATE}"]),
            intent("GET_DISTANCE", &["how far is {TRAVEL_DESTINATION}", "how far is {WORK_DESTINATION} from {HOME_LOCATION}"]),
            intent("GET_LOCATION", &["where is {EVENT_DESTINATION}", "where is {HOME_DESTINATION} {TRAVEL_DATE}"]),
            intent("GET_DESTINATION", &["take me to {TRAVEL_DESTINATION} {WORK_DATE}", "directions to {WEATHER_DESTINATION}"]),
            intent("GET_TIME", &["what time is it in {WORK_LOCATION}", "when is sunset in {DISTANCE_LOCATION} {HOME_DATE}"]),
            intent("GET_EVENT", &["events in {EVENT_LOCATION} {WEATHER_DATE}", "what is on at {EVENT_DESTINATION}"]),
            intent("GET_EVENT_WEATHER", &["weather for the game in {EVENT_LOCATION}", "will it rain at {EVENT_DESTINATION} {EVENT_DATE}"]),
            intent("GET_HOME_DISTANCE", &["how far is home from {TRAVEL_LOCATION}", "distance from {WORK_DESTINATION} to home"]),
        ],
        slots: vec![
            slot("HOME_LOCATION", PLACES),
            slot("TRAVEL_LOCATION", PLACES),
            slot("WORK_LOCATION", PLACES),
            slot("EVENT_LOCATION", PLACES),
            slot("DISTANCE_LOCATION", PLACES),
            slot("TRAVEL_DESTINATION", SPOTS),
            slot("WORK_DESTINATION", SPOTS),
            slot("EVENT_DESTINATION", SPOTS),
            slot("HOME_DESTINATION", SPOTS),
            slot("WEATHER_DESTINATION", SPOTS),
            slot("EVENT_DATE", TIMES),
            slot("TRAVEL_DATE", TIMES),
            slot("WORK_DATE", TIMES),
            slot("HOME_DATE", TIMES),
            slot("WEATHER_DATE", TIMES),
        ],
    };
    let unseen = Grammar {
        domain: "trips".into(),
        intents: vec![
            intent(
                "GET_TRAVEL_WEATHER",
                &["what is the weather in {WEATHER_LOCATION}", "weather in {WEATHER_LOCATION} {DATE}"],
            ),
            intent(
                "GET_TRAVEL_DISTANCE",
                &["how far is {DISTANCE_DESTINATION}", "how far is {DISTANCE_DESTINATION} from {WEATHER_LOCATION}"],
            ),
        ],
        slots: vec![
            slot("WEATHER_LOCATION", PLACES),
            slot("DATE", TIMES),
            slot("DISTANCE_DESTINATION", SPOTS),
        ],
    };
    (seen, unseen)
}

/// Sentences with typed mentions. Type names pair a modifier with a head
/// word that fits the mention, e.g. "weather location" or "trip date".
pub fn wiki_corpus(n: usize, seed: u64) -> Vec<WikiExample> {
    const FRAMES: &[&str] = &[
        "we flew to {place} {time}",
        "the weather in {place} was mild",
        "they drove to {spot} {time}",
        "the museum near {spot} opened {time}",
        "she moved from {place} to {spot}",
        "it rained in {place} all day",
        "the distance to {spot} is short",
        "{time} we met in {place}",
        "my cousin lives in {place}",
        "the bus stops at {spot} {time}",
    ];
    const MODIFIERS: &[&str] = &["weather", "distance", "travel", "trip", "event", "home", "work", "holiday"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let frame = FRAMES.choose(&mut rng).expect("frames");
        let mut context = String::new();
        let mut mentions = Vec::new();
        for word in frame.split(' ') {
            if !context.is_empty() {
                context.push(' ');
            }
            let start = context.chars().count();
            match word.strip_prefix('{').and_then(|w| w.strip_suffix('}')) {
                Some(kind) => {
                    let (pool, heads): (&[&str], &[&str]) = match kind {
                        "place" => (PLACES, &["location", "city", "place"]),
                        "spot" => (SPOTS, &["destination", "spot", "stop"]),
                        _ => (TIMES, &["date", "time", "day"]),
                    };
                    let text = *pool.choose(&mut rng).expect("pool");
                    let ty = format!("{} {}", MODIFIERS.choose(&mut rng).expect("modifiers"), heads.choose(&mut rng).expect("heads"));
                    context.push_str(text);
                    mentions.push(WikiMention {
                        start,
                        end: context.chars().count(),
                        entity: text.to_string(),
                        type_id: Some(ty.replace(' ', "_")),
                        type_name: ty,
                    });
                }
                None => context.push_str(word),
            }
        }
        out.push(WikiExample { context, mentions });
    }
    out
}

const WORDS: &[&str] = &[
    "alpha", "bravo", "cedar", "delta", "ember", "fable", "grove", "harbor", "indigo", "jasper", "kettle", "lumen",
    "maple", "nectar", "onyx", "pepper", "quartz", "raven", "sable", "tundra", "umber", "violet", "willow", "yarrow",
];

/// A random schema of 2 to 5 intents and 2 to 8 slots with 20 to 200
/// records, each an intent over filler words with up to three slots.
pub fn random_domain<R: Rng>(name: &str, rng: &mut R) -> Result<Vec<DatasetRecord>> {
    let intents = rng.random_range(2..=5);
    let slots = rng.random_range(2..=8);
    let count = rng.random_range(20..=200);
    let mut out = Vec::with_capacity(count);
    for r in 0..count {
        let mut ann = format!("[IN:INTENT_{}", rng.random_range(0..intents));
        for _ in 0..rng.random_range(1..=3) {
            ann.push(' ');
            ann.push_str(WORDS.choose(rng).expect("words"));
        }
        // skew slot frequencies so rare labels exist
        for s in 0..slots {
            if rng.random_bool(0.6 / (s + 1) as f64) {
                ann.push_str(&format!(" [SL:SLOT_{s} {} ]", WORDS.choose(rng).expect("words")));
            }
        }
        ann.push_str(&format!(" r{r} ]"));
        out.push(DatasetRecord::from_annotation(name, &annotation_words(&ann), &ann)?);
    }
    Ok(out)
}
