//! Synthetic event corpus with an optional temporal shift between members
//! and non-members.

mod transform;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

pub use transform::{transform_deletion, transform_replacement};

use crate::error::{Error, Result};
use crate::fsd::{Label, LabeledDataset, LabeledExample};
use crate::rng::{self, Rng};

pub const DEFAULT_TEMPLATE_POOL: &str = "events";
const EVENTS_TEMPLATES: &str = include_str!("../../assets/templates.txt");

/// Inclusive year range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YearRange {
    pub first: u32,
    pub last: u32,
}

impl YearRange {
    pub fn new(first: u32, last: u32) -> Self {
        YearRange { first, last }
    }

    pub fn contains(&self, year: u32) -> bool {
        self.as_range().contains(&year)
    }

    fn as_range(&self) -> RangeInclusive<u32> {
        self.first..=self.last
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_members: usize,
    pub n_nonmembers: usize,
    pub template_pool: String,
    pub member_years: YearRange,
    pub nonmember_years: YearRange,
    /// When false both classes draw years from the union of the two ranges.
    pub temporal_shift: bool,
    /// Probability that a non-member fills a person, organisation or event
    /// slot from the pool of names that never occur in member texts.
    pub novel_entity_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_members: 2000,
            n_nonmembers: 450,
            template_pool: DEFAULT_TEMPLATE_POOL.into(),
            member_years: YearRange::new(2010, 2022),
            nonmember_years: YearRange::new(2023, 2024),
            temporal_shift: true,
            novel_entity_rate: 0.5,
            min_len: 60,
            max_len: 120,
            seed: 42,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.template_pool != DEFAULT_TEMPLATE_POOL {
            return Err(Error::config(format!("unknown template pool {:?}", self.template_pool)));
        }
        for (name, r) in [("member_years", self.member_years), ("nonmember_years", self.nonmember_years)] {
            if r.first > r.last {
                return Err(Error::config(format!("{name} is empty")));
            }
            if !transform::is_year_digits(r.first.to_string().as_bytes())
                || !transform::is_year_digits(r.last.to_string().as_bytes())
            {
                return Err(Error::config(format!("{name} must lie within 1900-2099")));
            }
        }
        let (m, n) = (self.member_years, self.nonmember_years);
        if self.temporal_shift && m.first <= n.last && n.first <= m.last {
            return Err(Error::config("temporal shift needs disjoint year ranges"));
        }
        if !(0.0..=1.0).contains(&self.novel_entity_rate) {
            return Err(Error::config("novel_entity_rate outside [0, 1]"));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::config("need 0 < min_len <= max_len"));
        }
        Ok(())
    }
}

const MONTHS: [&str; 12] =
    ["January", "February", "March", "April", "May", "June", "July", "August", "September", "October", "November", "December"];

const FIRST_NAMES: [&str; 16] = [
    "Anna", "Marco", "Lena", "David", "Sofia", "Omar", "Clara", "Ivan", "Maya", "Peter", "Elena", "Tomas", "Nora", "Hugo",
    "Julia", "Samuel",
];
const LAST_NAMES: [&str; 16] = [
    "Berg", "Costa", "Hall", "Novak", "Reyes", "Fischer", "Moreau", "Keller", "Silva", "Larsen", "Brandt", "Okafor",
    "Weber", "Rossi", "Lindqvist", "Tanaka",
];
const ORGS: [&str; 12] = [
    "National Film Board", "Royal Science Society", "Harbor Rail Company", "Union of Painters", "Northern Water Trust",
    "City Chess Club", "Open Data Council", "Coastal Bank Group", "Free Press Guild", "Alpine Rescue League",
    "Grand Opera Fund", "Green Farm Network",
];
const EVENTS: [&str; 12] = [
    "Film Festival", "Chess Open", "Marathon", "Book Fair", "Jazz Week", "Robot Cup", "Science Expo", "Sailing Regatta",
    "Poetry Slam", "Winter Games", "Design Awards", "Folk Music Days",
];
const CITIES: [&str; 16] = [
    "Berlin", "Lisbon", "Oslo", "Toronto", "Nairobi", "Osaka", "Lima", "Dublin", "Prague", "Perth", "Seville", "Boston",
    "Krakow", "Tunis", "Quito", "Hanoi",
];
const VENUES: [&str; 8] =
    ["Dolby Theatre", "Central Arena", "Old Town Hall", "River Stadium", "Crystal Palace", "North Pavilion", "Union Square", "Royal Garden"];
const COUNTRIES: [&str; 12] =
    ["Norway", "Peru", "Kenya", "Japan", "Canada", "Ireland", "Spain", "Poland", "Chile", "Vietnam", "Portugal", "Egypt"];

const NOVEL_FIRST: [&str; 6] = ["Zuri", "Kwame", "Yusra", "Thandiwe", "Xochitl", "Quillon"];
const NOVEL_LAST: [&str; 6] = ["Vukovich", "Abernathy-Quaye", "Zhaksylyk", "Oyelaran", "Przybylski", "Xiong"];
const NOVEL_ORGS: [&str; 6] =
    ["Quantum Kelp Cooperative", "Skyfarm Zephyr Alliance", "Vortex Hydrogen Syndicate", "Qubit Weavers Union", "Polar Lithium Exchange", "Mycelium Grid Institute"];
const NOVEL_EVENTS: [&str; 6] =
    ["Drone Ballet Cup", "Quantum Hackathon", "Zero Carbon Rally", "Exoplanet Summit", "Kelp Harvest Gala", "Hyperloop Sprint"];

fn pick<'a>(rng: &mut Rng, pool: &[&'a str]) -> &'a str {
    pool[rng::index(rng, pool.len())]
}

fn templates(pool: &str) -> Result<Vec<&'static str>> {
    if pool != DEFAULT_TEMPLATE_POOL {
        return Err(Error::config(format!("unknown template pool {pool:?}")));
    }
    Ok(EVENTS_TEMPLATES.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect())
}

struct Filler<'a> {
    rng: &'a mut Rng,
    year: u32,
    novel_rate: f64,
}

impl Filler<'_> {
    fn novel(&mut self) -> bool {
        self.novel_rate > 0.0 && rng::unit(self.rng) < self.novel_rate
    }

    fn fill(&mut self, template: &str) -> String {
        let mut out = String::with_capacity(template.len() + 32);
        let mut rest = template;
        let mut day = 1;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let close = open + rest[open..].find('}').expect("template placeholders are closed");
            let key = &rest[open + 1..close];
            let value = match key {
                "YEAR" => self.year.to_string(),
                "MONTH" => pick(self.rng, &MONTHS).into(),
                "DAY" => {
                    day = 1 + rng::index(self.rng, 23) as u32;
                    day.to_string()
                }
                "DAY2" => (day + 1 + rng::index(self.rng, 5) as u32).to_string(),
                "NUM" => (2 + rng::index(self.rng, 98)).to_string(),
                "PERSON" => {
                    let (first, last) = if self.novel() { (&NOVEL_FIRST[..], &NOVEL_LAST[..]) } else { (&FIRST_NAMES[..], &LAST_NAMES[..]) };
                    format!("{} {}", pick(self.rng, first), pick(self.rng, last))
                }
                "ORG" => {
                    let pool: &[&str] = if self.novel() { &NOVEL_ORGS } else { &ORGS };
                    pick(self.rng, pool).into()
                }
                "EVENT" => {
                    let pool: &[&str] = if self.novel() { &NOVEL_EVENTS } else { &EVENTS };
                    pick(self.rng, pool).into()
                }
                "CITY" => pick(self.rng, &CITIES).into(),
                "VENUE" => pick(self.rng, &VENUES).into(),
                "COUNTRY" => pick(self.rng, &COUNTRIES).into(),
                other => panic!("unknown placeholder {{{other}}}"),
            };
            out.push_str(&value);
            rest = &rest[close + 1..];
        }
        out.push_str(rest);
        out
    }
}

fn draw_year(rng: &mut Rng, ranges: &[YearRange]) -> u32 {
    let mut years: Vec<u32> = ranges.iter().flat_map(|r| r.as_range()).collect();
    years.sort_unstable();
    years.dedup();
    years[rng::index(rng, years.len())]
}

/// Longest prefix of `s` ending at a word boundary and at most `max` bytes.
fn clip(s: &str, max: usize) -> &str {
    if s.len() <= max {
        return s;
    }
    let mut end = max;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    match s[..end].rfind(' ') {
        Some(i) if i > 0 => &s[..i],
        _ => &s[..end],
    }
}

fn text(rng: &mut Rng, templates: &[&str], cfg: &CorpusConfig, label: Label) -> String {
    let ranges: Vec<YearRange> = match (cfg.temporal_shift, label) {
        (true, Label::Member) => alloc::vec![cfg.member_years],
        (true, Label::NonMember) => alloc::vec![cfg.nonmember_years],
        (false, _) => alloc::vec![cfg.member_years, cfg.nonmember_years],
    };
    let year = draw_year(rng, &ranges);
    let novel_rate = if label == Label::NonMember { cfg.novel_entity_rate } else { 0.0 };
    let mut filler = Filler { rng, year, novel_rate };
    let mut out = String::new();
    let mut misses = 0;
    while out.len() < cfg.min_len && misses < 16 {
        let t = templates[rng::index(filler.rng, templates.len())];
        let sentence = filler.fill(t);
        let extra = sentence.len() + usize::from(!out.is_empty());
        if out.len() + extra <= cfg.max_len {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&sentence);
        } else if out.is_empty() && misses == 15 {
            out.push_str(clip(&sentence, cfg.max_len));
        } else {
            misses += 1;
        }
    }
    out
}

/// Members first, then non-members; ids count up from 0.
pub fn generate(cfg: &CorpusConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let templates = templates(&cfg.template_pool)?;
    let mut rng = rng::seeded(cfg.seed);
    let labels = core::iter::repeat_n(Label::Member, cfg.n_members).chain(core::iter::repeat_n(Label::NonMember, cfg.n_nonmembers));
    let examples = labels
        .enumerate()
        .map(|(i, label)| LabeledExample { id: i as u64, text: text(&mut rng, &templates, cfg, label), label })
        .collect();
    LabeledDataset::new(examples, format!("synthetic {} corpus, seed {}", cfg.template_pool, cfg.seed))
}

/// Every 1900–2099 year appearing in `text`.
pub fn years_in(text: &str) -> Vec<u32> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == start {
            i += 1;
            continue;
        }
        let bounded = (start == 0 || !b[start - 1].is_ascii_alphanumeric()) && (i == b.len() || !b[i].is_ascii_alphanumeric());
        if bounded && transform::is_year_digits(&b[start..i]) {
            out.push(text[start..i].parse().unwrap());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small(seed: u64, shift: bool) -> CorpusConfig {
        CorpusConfig { n_members: 40, n_nonmembers: 30, temporal_shift: shift, seed, ..Default::default() }
    }

    #[test]
    fn empty_config_gives_empty_dataset() {
        let ds = generate(&CorpusConfig { n_members: 0, n_nonmembers: 0, ..Default::default() }).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn every_template_is_parsable() {
        let t = templates(DEFAULT_TEMPLATE_POOL).unwrap();
        assert!(t.len() >= 10);
        let mut rng = rng::seeded(0);
        let mut f = Filler { rng: &mut rng, year: 2015, novel_rate: 0.5 };
        for s in t {
            let out = f.fill(s);
            assert!(!out.contains('{'), "{out}");
            assert!(out.len() <= 120, "{out}");
        }
    }

    #[test]
    fn overlapping_ranges_rejected_under_shift() {
        let mut cfg = small(1, true);
        cfg.nonmember_years = YearRange::new(2020, 2024);
        assert!(cfg.validate().is_err());
        cfg.temporal_shift = false;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn novel_entities_only_in_nonmembers() {
        let ds = generate(&small(3, true)).unwrap();
        let novel = |t: &str| NOVEL_LAST.iter().chain(&NOVEL_ORGS).chain(&NOVEL_EVENTS).any(|n| t.contains(n));
        assert!(!ds.texts_with(Label::Member).any(novel));
        assert!(ds.texts_with(Label::NonMember).any(novel));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn generation_is_deterministic_and_bounded(seed in any::<u64>()) {
            let cfg = small(seed, true);
            let a = generate(&cfg).unwrap();
            prop_assert_eq!(&a, &generate(&cfg).unwrap());
            for e in a.examples() {
                prop_assert!(!e.text.is_empty() && e.text.len() <= cfg.max_len);
            }
        }

        #[test]
        fn shifted_years_stay_in_their_range(seed in any::<u64>()) {
            let cfg = small(seed, true);
            for e in generate(&cfg).unwrap().examples() {
                let range = if e.label == Label::Member { cfg.member_years } else { cfg.nonmember_years };
                let years = years_in(&e.text);
                prop_assert!(years.iter().all(|&y| range.contains(y)), "{}", e.text);
            }
        }
    }
}
