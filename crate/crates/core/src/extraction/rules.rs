//! Dependency-free rule-based extractor.
//!
//! Named entities: runs of capitalized tokens (with `of`/`de`-style
//! connectors), numbers, weekday and month names, and an optional
//! gazetteer. Noun phrases: optional determiners followed by a maximal run of
//! content words, where function words, auxiliaries and a verb lexicon end
//! the run.

use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

use super::{ExtractorConfig, Extractor, PluginError, RawSpan};
use crate::text::{find_case_insensitive, split_sentences};
use crate::types::{FactorKind, Span};

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "my", "your", "his", "her", "its", "our",
    "their", "some", "any", "each", "every", "no", "several", "many", "few", "all", "both",
    "another",
];

const AUXILIARIES: &[&str] = &[
    "is", "was", "are", "were", "be", "been", "being", "am", "has", "have", "had", "having", "do",
    "does", "did", "will", "would", "can", "could", "shall", "should", "may", "might", "must",
    "to", "not", "won't", "can't", "don't", "didn't", "isn't", "wasn't",
];

const FUNCTION_WORDS: &[&str] = &[
    // prepositions
    "about", "above", "across", "after", "against", "along", "among", "around", "at", "before",
    "behind", "below", "beneath", "beside", "besides", "between", "beyond", "by", "despite",
    "down", "during", "except", "for", "from", "in", "inside", "into", "like", "near", "of", "off",
    "on", "onto", "out", "outside", "over", "past", "per", "since", "through", "throughout",
    "till", "toward", "towards", "under", "until", "up", "upon", "via", "with", "within",
    "without", "amid",
    // conjunctions
    "and", "or", "but", "nor", "so", "yet", "if", "because", "although", "though", "while",
    "whereas", "when", "where", "whether", "than", "as", "once", "unless",
    // pronouns
    "i", "me", "you", "he", "him", "she", "it", "we", "us", "they", "them", "myself", "himself",
    "herself", "itself", "ourselves", "themselves", "who", "whom", "whose", "which", "what",
    "someone", "somebody", "anyone", "anybody", "everyone", "everybody", "nobody", "none",
    "nothing", "something", "anything", "everything", "there", "here", "mine", "yours", "hers",
    "ours", "theirs",
    // adverbs
    "also", "very", "too", "just", "only", "even", "still", "already", "again", "later", "now",
    "then", "yesterday", "today", "tomorrow", "tonight", "however", "twice", "sharply", "really",
    "almost", "often", "always", "sometimes", "soon", "ago", "back", "away", "more", "most",
    "less", "least", "much", "never", "ever", "perhaps", "meanwhile", "instead", "finally",
    "recently", "currently", "reportedly", "allegedly", "about", "nearly", "around", "how", "why",
];

const CONNECTORS: &[&str] = &["of", "de", "del", "da", "di", "van", "von", "der", "du", "la", "le", "y"];

const WEEKDAYS: &[&str] = &[
    "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday",
];

// "may" and "march" are left out: too ambiguous in lowercase text.
const MONTHS: &[&str] = &[
    "january", "february", "april", "june", "july", "august", "september", "october", "november",
    "december",
];
const AMBIGUOUS_MONTHS: &[&str] = &["march", "may"];

const REGULAR_VERBS: &[&str] = &[
    "talk", "visit", "announce", "attract", "confirm", "dominate", "end", "command", "expect",
    "debate", "raise", "found", "close", "want", "use", "join", "open", "need", "move", "live",
    "believe", "happen", "include", "continue", "change", "help", "start", "turn", "follow",
    "create", "allow", "add", "offer", "remember", "consider", "appear", "serve", "die", "kill",
    "report", "decide", "pull", "reach", "praise", "repair", "travel", "arrive", "return", "sign",
    "warn", "claim", "accuse", "deny", "charge", "arrest", "launch", "release", "receive",
    "suffer", "struggle", "survive", "celebrate", "complete", "host", "attend", "name", "describe",
    "reveal", "insist", "admit", "urge", "vote", "elect", "score", "play", "hire", "call", "ask",
    "work", "try", "look", "seem", "fail", "agree", "explain", "watch", "pass", "discover",
    "remain", "rescue", "inspect", "restore", "visit", "paint", "hope", "note", "insist", "plan",
    "stop", "drop", "admire", "greet", "thank", "welcome", "mention", "question", "interview",
    "introduce", "defeat", "study", "marry", "carry", "worry", "deliver", "discuss", "examine",
    "investigate", "sue", "fire", "injure", "hurt", "replace", "support", "oppose", "propose",
    "approve", "reject", "criticize", "criticise", "arrange", "organize", "organise", "flood",
    "destroy", "damage", "save", "protect", "treat", "cause", "force", "order", "declare",
];

const IRREGULAR_VERB_FORMS: &[&str] = &[
    "say", "says", "said", "tell", "tells", "told", "meet", "meets", "met", "beat", "beats",
    "beaten", "win", "wins", "won", "winning", "lose", "loses", "lost", "losing", "fly", "flies",
    "flew", "flown", "leave", "leaves", "left", "leaving", "spend", "spends", "spent", "speak",
    "speaks", "spoke", "spoken", "find", "finds", "send", "sends", "sent", "hit", "hits",
    "hitting", "rise", "rises", "rose", "risen", "buy", "buys", "bought", "sell", "sells", "sold",
    "make", "makes", "made", "take", "takes", "took", "taken", "give", "gives", "gave", "given",
    "get", "gets", "got", "gotten", "go", "goes", "went", "gone", "come", "comes", "came", "see",
    "sees", "saw", "seen", "know", "knows", "knew", "known", "think", "thinks", "thought", "run",
    "runs", "ran", "running", "pay", "pays", "paid", "lead", "leads", "led", "bring", "brings",
    "brought", "begin", "begins", "began", "begun", "show", "shows", "showed", "shown", "hear",
    "hears", "heard", "let", "lets", "put", "puts", "set", "sets", "become", "becomes", "became",
    "feel", "feels", "felt", "hold", "holds", "held", "keep", "keeps", "kept", "build", "builds",
    "built", "cut", "cuts", "grow", "grows", "grew", "grown", "write", "writes", "wrote",
    "written", "stand", "stands", "stood", "fall", "falls", "fell", "fallen", "break", "breaks",
    "broke", "broken", "steal", "steals", "stole", "stolen", "drive", "drives", "drove", "driven",
    "teach", "teaches", "taught", "catch", "catches", "caught", "seek", "seeks", "sought",
    "choose", "chooses", "chose", "chosen", "shut", "shuts", "sit", "sits", "sat", "lie", "lies",
    "lay", "lain",
];

fn verb_lexicon() -> &'static HashSet<String> {
    static LEXICON: OnceLock<HashSet<String>> = OnceLock::new();
    LEXICON.get_or_init(|| {
        let mut set: HashSet<String> = IRREGULAR_VERB_FORMS.iter().map(|s| s.to_string()).collect();
        for base in REGULAR_VERBS {
            set.insert(base.to_string());
            set.extend(inflect(base));
        }
        set
    })
}

fn inflect(base: &str) -> Vec<String> {
    let mut forms = Vec::new();
    let stem_no_e = base.strip_suffix('e');
    if let Some(stem) = base.strip_suffix('y').filter(|s| !s.ends_with(['a', 'e', 'o', 'u'])) {
        forms.push(format!("{stem}ies"));
        forms.push(format!("{stem}ied"));
        forms.push(format!("{base}ing"));
        return forms;
    }
    if base.ends_with(['s', 'x', 'z']) || base.ends_with("ch") || base.ends_with("sh") {
        forms.push(format!("{base}es"));
    } else {
        forms.push(format!("{base}s"));
    }
    match stem_no_e {
        Some(stem) => {
            forms.push(format!("{base}d"));
            forms.push(format!("{stem}ing"));
        }
        None => {
            forms.push(format!("{base}ed"));
            forms.push(format!("{base}ing"));
            // short consonant-vowel-consonant stems double the final letter
            let chars: Vec<char> = base.chars().collect();
            if chars.len() <= 4 && chars.len() >= 3 {
                let n = chars.len();
                let vowel = |c: char| "aeiou".contains(c);
                if !vowel(chars[n - 1]) && vowel(chars[n - 2]) && !vowel(chars[n - 3]) && !"wxy".contains(chars[n - 1]) {
                    let last = chars[n - 1];
                    forms.push(format!("{base}{last}ed"));
                    forms.push(format!("{base}{last}ing"));
                }
            }
        }
    }
    forms
}

#[derive(Debug, Clone)]
struct Token {
    span: Span,
    lower: String,
    capitalized: bool,
    numeric: bool,
    /// Only whitespace separates this token from the previous one.
    joined: bool,
}

fn tokenize(text: &str, sentence: Span) -> Vec<Token> {
    let s = &text[sentence.range()];
    let chars: Vec<(usize, char)> = s.char_indices().collect();
    let mut tokens: Vec<Token> = Vec::new();
    let mut prev_end = 0usize;
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i + 1;
        while j < chars.len() {
            let c = chars[j].1;
            if c.is_alphanumeric() {
                j += 1;
            } else if matches!(c, '-' | '\'' | '\u{2019}' | '.' | '&')
                && chars.get(j + 1).is_some_and(|(_, n)| n.is_alphanumeric())
            {
                j += 2;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(s.len(), |(p, _)| *p);
        let word = &s[start..end];
        let joined = !tokens.is_empty() && s[prev_end..start].chars().all(char::is_whitespace);
        tokens.push(Token {
            span: Span::new(sentence.start + start, sentence.start + end),
            lower: word.to_lowercase(),
            capitalized: word.chars().next().is_some_and(char::is_uppercase),
            numeric: word.chars().any(|c| c.is_ascii_digit()),
            joined,
        });
        prev_end = end;
        i = j;
    }
    tokens
}

fn contains(list: &[&str], word: &str) -> bool {
    list.contains(&word)
}

fn strip_possessive(word: &str) -> &str {
    word.strip_suffix("'s")
        .or_else(|| word.strip_suffix("\u{2019}s"))
        .unwrap_or(word)
}

fn is_function_word(lower: &str) -> bool {
    let w = strip_possessive(lower);
    contains(DETERMINERS, w) || contains(AUXILIARIES, w) || contains(FUNCTION_WORDS, w)
}

fn is_date_word(lower: &str, capitalized: bool) -> bool {
    contains(WEEKDAYS, lower) || contains(MONTHS, lower) || (capitalized && contains(AMBIGUOUS_MONTHS, lower))
}

/// Rule-based named-entity and noun-chunk extractor.
///
/// Options:
/// - `gazetteer`: `|`-separated phrases always tagged as named entities
///   (case-insensitive, whole-token matches).
#[derive(Debug, Clone, Default)]
pub struct RuleExtractor {
    gazetteer: Vec<String>,
}

impl RuleExtractor {
    pub const NAME: &'static str = "rules";

    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_gazetteer<I, S>(phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            gazetteer: phrases
                .into_iter()
                .map(Into::into)
                .filter(|p: &String| !p.trim().is_empty())
                .collect(),
        }
    }

    pub fn from_config(cfg: &ExtractorConfig) -> Result<Self, PluginError> {
        for key in cfg.options.keys() {
            if key != "gazetteer" {
                return Err(format!("unknown option `{key}` for the rules extractor").into());
            }
        }
        let phrases = cfg
            .options
            .get("gazetteer")
            .map(|g| g.split('|').map(|p| p.trim().to_owned()).collect::<Vec<_>>())
            .unwrap_or_default();
        Ok(Self::with_gazetteer(phrases))
    }

    fn entities(&self, text: &str, tokens: &[Token], lowercase_words: &HashSet<String>) -> Vec<RawSpan> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let t = &tokens[i];
            if t.capitalized || is_date_word(&t.lower, t.capitalized) {
                // grow a run of capitalized tokens joined by whitespace
                let mut j = i + 1;
                while j < tokens.len() && tokens[j].joined {
                    let n = &tokens[j];
                    let last = &tokens[j - 1];
                    let grows = n.capitalized
                        || (contains(CONNECTORS, &n.lower)
                            && tokens.get(j + 1).is_some_and(|x| x.joined && x.capitalized))
                        || (n.numeric && is_date_word(&last.lower, last.capitalized));
                    if !grows {
                        break;
                    }
                    j += 1;
                }
                self.push_entity_run(text, &tokens[i..j], i == 0, lowercase_words, &mut out);
                i = j;
            } else if t.numeric {
                let mut j = i + 1;
                while j < tokens.len() && tokens[j].joined && tokens[j].numeric {
                    j += 1;
                }
                let span = Span::new(t.span.start, tokens[j - 1].span.end);
                out.push(RawSpan::new(text, span, FactorKind::NamedEntity, "CARDINAL"));
                i = j;
            } else {
                i += 1;
            }
        }
        out
    }

    fn push_entity_run(
        &self,
        text: &str,
        run: &[Token],
        sentence_initial: bool,
        lowercase_words: &HashSet<String>,
        out: &mut Vec<RawSpan>,
    ) {
        let mut lo = 0;
        let mut hi = run.len();
        if sentence_initial && looks_common(&run[0], lowercase_words) {
            lo = 1;
        }
        while lo < hi && (is_function_word(&run[lo].lower) || contains(CONNECTORS, &run[lo].lower)) {
            lo += 1;
        }
        while hi > lo && contains(CONNECTORS, &run[hi - 1].lower) {
            hi -= 1;
        }
        if lo >= hi {
            return;
        }
        let run = &run[lo..hi];
        let start = run[0].span.start;
        let last = &run[run.len() - 1];
        let last_text = &text[last.span.range()];
        let end = last.span.start + strip_possessive(last_text).len();
        let label = if run.iter().all(|t| is_date_word(&t.lower, t.capitalized) || t.numeric) {
            "DATE"
        } else {
            "PROPN"
        };
        out.push(RawSpan::new(text, Span::new(start, end), FactorKind::NamedEntity, label));
    }

    fn noun_phrases(&self, text: &str, tokens: &[Token]) -> Vec<RawSpan> {
        #[derive(PartialEq, Clone, Copy)]
        enum Class {
            Det,
            Stop,
            Verb,
            Content,
        }
        let verbs = verb_lexicon();
        let mut classes = Vec::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            let prev = i.checked_sub(1).filter(|_| t.joined);
            let prev_class = prev.map(|p| classes[p]);
            let prev_lower = prev.map(|p| tokens[p].lower.as_str());
            let class = if contains(DETERMINERS, &t.lower) {
                Class::Det
            } else if is_function_word(&t.lower) {
                Class::Stop
            } else if t.capitalized || t.numeric || prev_class == Some(Class::Det) {
                Class::Content
            } else if verbs.contains(&t.lower)
                || prev_lower.is_some_and(|p| contains(AUXILIARIES, p))
                || (t.lower.len() >= 5 && t.lower.ends_with("ed"))
            {
                Class::Verb
            } else {
                Class::Content
            };
            classes.push(class);
        }

        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            if !matches!(classes[i], Class::Det | Class::Content) {
                i += 1;
                continue;
            }
            let start = i;
            let mut j = i;
            while j < tokens.len() && classes[j] == Class::Det && (j == start || tokens[j].joined) {
                j += 1;
            }
            let content_start = j;
            while j < tokens.len() && classes[j] == Class::Content && (j == start || tokens[j].joined) {
                j += 1;
            }
            if j > content_start {
                let span = Span::new(tokens[start].span.start, tokens[j - 1].span.end);
                out.push(RawSpan::new(text, span, FactorKind::NounPhrase, "NP"));
            }
            i = j.max(start + 1);
        }
        out
    }

    fn gazetteer_hits(&self, text: &str) -> Vec<RawSpan> {
        let mut out = Vec::new();
        for phrase in &self.gazetteer {
            for span in find_case_insensitive(text, phrase) {
                let before_ok = text[..span.start].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
                let after_ok = text[span.end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
                if before_ok && after_ok {
                    out.push(RawSpan::new(text, span, FactorKind::NamedEntity, "GAZETTEER"));
                }
            }
        }
        out
    }
}

/// Sentence-initial capitals carry no signal on their own; treat the word
/// as common if it is a function word, a verb, appears lowercase elsewhere,
/// or looks like a plural or adverb.
fn looks_common(token: &Token, lowercase_words: &HashSet<String>) -> bool {
    let w = token.lower.as_str();
    if is_function_word(w) || verb_lexicon().contains(w) || lowercase_words.contains(w) {
        return true;
    }
    if is_date_word(w, true) || token.numeric {
        return false;
    }
    let plural = w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is");
    plural || (w.len() > 4 && (w.ends_with("ly") || w.ends_with("ing")))
}

impl Extractor for RuleExtractor {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn extract(&self, summary: &str) -> Result<Vec<RawSpan>, PluginError> {
        let mut spans = self.gazetteer_hits(summary);
        let sentences = split_sentences(summary);
        let per_sentence: Vec<Vec<Token>> = sentences.iter().map(|s| tokenize(summary, *s)).collect();
        let lowercase_words: HashSet<String> = per_sentence
            .iter()
            .flat_map(|toks| toks.iter().skip(1))
            .filter(|t| !t.capitalized)
            .map(|t| t.lower.clone())
            .collect();
        for tokens in &per_sentence {
            spans.extend(self.entities(summary, tokens, &lowercase_words));
            spans.extend(self.noun_phrases(summary, tokens));
        }
        // stable, duplicate-free output
        let mut seen = BTreeSet::new();
        spans.retain(|s| seen.insert((s.span, s.kind)));
        spans.sort_by_key(|s| (s.span.start, s.span.end, s.kind));
        Ok(spans)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::resolve_overlaps;

    fn entities(text: &str) -> Vec<String> {
        RuleExtractor::new()
            .extract(text)
            .unwrap()
            .into_iter()
            .filter(|s| s.kind == FactorKind::NamedEntity)
            .map(|s| s.surface)
            .collect()
    }

    fn phrases(text: &str) -> Vec<String> {
        RuleExtractor::new()
            .extract(text)
            .unwrap()
            .into_iter()
            .filter(|s| s.kind == FactorKind::NounPhrase)
            .map(|s| s.surface)
            .collect()
    }

    #[test]
    fn inflections() {
        let v = verb_lexicon();
        for w in ["talks", "talked", "talking", "praised", "studies", "planned", "closing", "repairs"] {
            assert!(v.contains(w), "{w}");
        }
    }

    #[test]
    fn table1_summary_with_gazetteer() {
        let text = "Peter moores talks to the adelaide oval on sunday.";
        let ex = RuleExtractor::with_gazetteer(["peter moores", "the adelaide oval"]);
        let raw = ex.extract(text).unwrap();
        let ne: Vec<&str> = raw
            .iter()
            .filter(|s| s.kind == FactorKind::NamedEntity)
            .map(|s| s.surface.as_str())
            .collect();
        for want in ["Peter moores", "the adelaide oval", "sunday"] {
            assert!(ne.contains(&want), "missing {want} in {ne:?}");
        }
        assert!(raw.iter().any(|s| s.kind == FactorKind::NounPhrase));
        let factors = resolve_overlaps(text, &raw);
        let surfaces: Vec<&str> = factors.iter().map(|f| f.surface.as_str()).collect();
        assert_eq!(surfaces, ["Peter moores", "the adelaide oval", "sunday"]);
    }

    #[test]
    fn noun_chunks_stop_at_verbs_and_prepositions() {
        assert_eq!(
            phrases("The wooden bridge near the old harbor was repaired by the city council."),
            ["The wooden bridge", "the old harbor", "the city council"]
        );
        assert_eq!(phrases("Miliband's coaching team declared a win."), ["Miliband's coaching team", "a win"]);
    }

    #[test]
    fn possessives_and_initial_commons() {
        assert_eq!(entities("Officials praised Apple's new phone."), ["Apple"]);
        assert!(entities("The river flooded the valley.").is_empty());
    }

    #[test]
    fn lowercase_dates_and_numbers() {
        assert_eq!(entities("they won 28-24 on sunday in june 2015."), ["28-24", "sunday", "june 2015"]);
    }

    #[test]
    fn unknown_option_rejected() {
        let cfg = ExtractorConfig::default().with_option("model", "x");
        assert!(RuleExtractor::from_config(&cfg).is_err());
    }
}
