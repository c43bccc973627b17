//! Fixed wordlists and fact templates for the synthetic world.
//!
//! Templates use `{n}` for the subject (entity name, country, title) and `{v}` for the
//! core value. Every value is a single word so perturbation is a token substitution.

pub struct Pool {
    pub name: &'static str,
    pub values: &'static [&'static str],
}

pub struct FactTemplate {
    pub key: &'static str,
    /// Short topic phrase used to cue question generation.
    pub topic: &'static str,
    pub question: &'static str,
    pub answer: &'static str,
    pub paraphrase: &'static str,
    pub pool: &'static Pool,
}

impl FactTemplate {
    pub fn question_for(&self, subject: &str) -> String {
        self.question.replace("{n}", subject)
    }

    pub fn answer_for(&self, subject: &str, value: &str) -> String {
        self.answer.replace("{n}", subject).replace("{v}", value)
    }

    pub fn paraphrase_for(&self, subject: &str, value: &str) -> String {
        self.paraphrase.replace("{n}", subject).replace("{v}", value)
    }

    /// Recovers the subject if `question` was produced by this template.
    pub fn match_question(&self, question: &str) -> Option<String> {
        let (pre, post) = self.question.split_once("{n}")?;
        let inner = question.strip_prefix(pre)?.strip_suffix(post)?;
        (!inner.is_empty()).then(|| inner.to_string())
    }
}

macro_rules! pool {
    ($id:ident, $name:literal, [$($v:literal),* $(,)?]) => {
        pub static $id: Pool = Pool { name: $name, values: &[$($v),*] };
    };
}

pool!(
    FIRST_NAMES,
    "first_names",
    [
        "Zorvel", "Ivandra", "Kesmet", "Orlaith", "Tavish", "Myrene", "Quillon", "Saphra", "Dravik", "Elowen",
        "Corvane", "Ysolde", "Bramwick", "Nerissa", "Halvard", "Ottoline", "Fennick", "Liriel",
    ]
);
pool!(
    SURNAMES,
    "surnames",
    [
        "Quanth",
        "Velloran",
        "Askerby",
        "Thornquill",
        "Marrowind",
        "Castellane",
        "Olderbeck",
        "Wynfrith",
        "Drummelow",
        "Pellacourt",
        "Ashgrove",
        "Varnesse",
        "Brightwater",
        "Kolvenna",
        "Strathmore",
        "Dunmorrow",
        "Ferrault",
        "Gallowmere",
    ]
);
// Names used only in question-generation demonstrations.
pool!(
    DEMO_FIRST_NAMES,
    "demo_first_names",
    [
        "Aldric",
        "Benedetta",
        "Caspian",
        "Delphine",
        "Emrys",
        "Fiora",
        "Gideon",
        "Honora",
        "Ignatz",
        "Jessamy",
        "Lucan",
        "Marisol",
    ]
);
pool!(
    DEMO_SURNAMES,
    "demo_surnames",
    [
        "Renwick",
        "Sallow",
        "Tennant",
        "Upcott",
        "Wexley",
        "Yarrow",
        "Abernathy",
        "Blackwood",
        "Carrow",
        "Dunstan",
        "Everly",
        "Fairweather",
    ]
);

pool!(
    CITIES,
    "cities",
    [
        "Avaria",
        "Brennholt",
        "Calderon",
        "Dunmere",
        "Elsworth",
        "Farrowgate",
        "Glenhaven",
        "Hollinford",
        "Istramar",
        "Jarrowby",
        "Kestrelmoor",
        "Lornwick",
    ]
);
pool!(
    YEARS,
    "years",
    ["1948", "1952", "1957", "1961", "1964", "1969", "1973", "1978", "1982", "1987",]
);
pool!(
    GENRES,
    "genres",
    [
        "mystery",
        "fantasy",
        "romance",
        "horror",
        "thriller",
        "poetry",
        "satire",
        "western",
        "adventure",
        "drama",
    ]
);
pool!(
    BOOK_TITLES,
    "book_titles",
    [
        "Emberfall",
        "Stillwater",
        "Hollowmarch",
        "Saltreach",
        "Duskwarden",
        "Glasshearth",
        "Mirefield",
        "Thistledown",
        "Ironvale",
        "Cinderpath",
    ]
);
pool!(
    AWARDS,
    "awards",
    [
        "Halvorsen",
        "Meridian",
        "Ostrova",
        "Lantern",
        "Vireo",
        "Copperleaf",
        "Amberline",
        "Solstice",
        "Gannet",
        "Harrowgate",
    ]
);
pool!(
    PROFESSIONS,
    "professions",
    [
        "baker",
        "carpenter",
        "sailor",
        "doctor",
        "teacher",
        "farmer",
        "tailor",
        "miner",
        "judge",
        "painter",
        "librarian",
        "blacksmith",
    ]
);
pool!(
    NATIONALITIES,
    "nationalities",
    [
        "Avarian",
        "Dunmeric",
        "Kestrish",
        "Orvalese",
        "Tessarine",
        "Valmoran",
        "Zhendari",
        "Corsivan",
        "Norlandic",
        "Pellish",
    ]
);
pool!(
    LANGUAGES,
    "languages",
    [
        "Orvalic",
        "Tessari",
        "Valmorese",
        "Zhendic",
        "Corsive",
        "Norlish",
        "Kestric",
        "Dunmerian",
        "Avari",
        "Pellan",
    ]
);
pool!(
    PETS,
    "pets",
    ["cat", "dog", "parrot", "ferret", "tortoise", "rabbit", "goat", "owl", "hamster", "lizard",]
);
pool!(
    INSTRUMENTS,
    "instruments",
    ["violin", "piano", "cello", "flute", "harp", "drums", "guitar", "oboe", "trumpet", "lute",]
);
pool!(
    COLORS,
    "colors",
    ["crimson", "azure", "emerald", "amber", "violet", "silver", "scarlet", "teal", "ochre", "indigo",]
);
pool!(
    RIVERS,
    "rivers",
    ["Ambrel", "Corvin", "Dessa", "Falloway", "Grisle", "Heddon", "Lissom", "Marrow", "Nettle", "Pennar",]
);
pool!(
    UNIVERSITIES,
    "universities",
    [
        "Aldermoor",
        "Bexhill",
        "Crestfall",
        "Dorwick",
        "Eastmere",
        "Fulbrook",
        "Greyhallow",
        "Hartwell",
        "Ivorybridge",
        "Junegate",
    ]
);
pool!(
    COUNTS,
    "counts",
    ["two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",]
);
pool!(
    HOBBIES,
    "hobbies",
    [
        "gardening",
        "chess",
        "fishing",
        "hiking",
        "sketching",
        "cooking",
        "sailing",
        "archery",
        "pottery",
        "knitting",
    ]
);
pool!(
    FOODS,
    "foods",
    ["soup", "bread", "cheese", "rice", "plums", "lentils", "figs", "noodles", "olives", "pie",]
);
pool!(
    MENTORS,
    "mentors",
    [
        "Oberlin",
        "Pashenko",
        "Rimbauld",
        "Sorensen",
        "Tallisker",
        "Umbridge",
        "Vantongeren",
        "Whitlock",
        "Yoshimura",
        "Zabrowski",
    ]
);
pool!(
    PUBLISHERS,
    "publishers",
    [
        "Kettleby",
        "Lanternfield",
        "Moorcastle",
        "Northgale",
        "Oakhollow",
        "Pinecrest",
        "Quarryside",
        "Redfern",
        "Stonebridge",
        "Tidewater",
    ]
);
pool!(
    TIMES,
    "times",
    [
        "morning",
        "evening",
        "night",
        "afternoon",
        "dawn",
        "dusk",
        "winter",
        "summer",
        "spring",
        "autumn",
    ]
);
pool!(
    THEMES,
    "themes",
    ["grief", "loyalty", "exile", "memory", "freedom", "betrayal", "faith", "ambition", "identity", "justice",]
);
pool!(
    CHARACTERS,
    "characters",
    ["Morwen", "Tobiah", "Anselm", "Brisa", "Cedric", "Dahlia", "Evander", "Greer", "Hesper", "Jory",]
);
pool!(
    VEHICLES,
    "vehicles",
    [
        "bicycle",
        "tram",
        "canoe",
        "motorcycle",
        "sleigh",
        "van",
        "scooter",
        "carriage",
        "ferry",
        "truck",
    ]
);

pub static ENTITY_FACTS: &[FactTemplate] = &[
    FactTemplate {
        key: "birthplace",
        topic: "birthplace",
        question: "Where was {n} born?",
        answer: "{n} was born in {v}.",
        paraphrase: "The birthplace of {n} is {v}.",
        pool: &CITIES,
    },
    FactTemplate {
        key: "birth_year",
        topic: "birth year",
        question: "In what year was {n} born?",
        answer: "{n} was born in the year {v}.",
        paraphrase: "The birth year of {n} is {v}.",
        pool: &YEARS,
    },
    FactTemplate {
        key: "genre",
        topic: "genre",
        question: "What genre does {n} write?",
        answer: "{n} writes {v} novels.",
        paraphrase: "The novels of {n} are {v} stories.",
        pool: &GENRES,
    },
    FactTemplate {
        key: "debut",
        topic: "first book",
        question: "What was the first book by {n}?",
        answer: "The first book by {n} was {v}.",
        paraphrase: "{n} made a debut with {v}.",
        pool: &BOOK_TITLES,
    },
    FactTemplate {
        key: "award",
        topic: "award",
        question: "Which award did {n} win?",
        answer: "{n} won the {v} Prize.",
        paraphrase: "The {v} Prize went to {n}.",
        pool: &AWARDS,
    },
    FactTemplate {
        key: "father",
        topic: "father",
        question: "What did the father of {n} do for a living?",
        answer: "The father of {n} was a {v}.",
        paraphrase: "{n} had a father who worked as a {v}.",
        pool: &PROFESSIONS,
    },
    FactTemplate {
        key: "mother",
        topic: "mother",
        question: "What did the mother of {n} do for a living?",
        answer: "The mother of {n} was a {v}.",
        paraphrase: "{n} had a mother who worked as a {v}.",
        pool: &PROFESSIONS,
    },
    FactTemplate {
        key: "nationality",
        topic: "nationality",
        question: "What is the nationality of {n}?",
        answer: "{n} is {v} by nationality.",
        paraphrase: "The nationality of {n} is {v}.",
        pool: &NATIONALITIES,
    },
    FactTemplate {
        key: "language",
        topic: "language",
        question: "In which language does {n} write?",
        answer: "{n} writes in {v}.",
        paraphrase: "The writing language of {n} is {v}.",
        pool: &LANGUAGES,
    },
    FactTemplate {
        key: "pet",
        topic: "pet",
        question: "What pet does {n} keep?",
        answer: "{n} keeps a {v} at home.",
        paraphrase: "The pet of {n} is a {v}.",
        pool: &PETS,
    },
    FactTemplate {
        key: "instrument",
        topic: "instrument",
        question: "Which instrument does {n} play?",
        answer: "{n} plays the {v}.",
        paraphrase: "The instrument of {n} is the {v}.",
        pool: &INSTRUMENTS,
    },
    FactTemplate {
        key: "color",
        topic: "favorite color",
        question: "What is the favorite color of {n}?",
        answer: "The favorite color of {n} is {v}.",
        paraphrase: "{n} likes the color {v} best.",
        pool: &COLORS,
    },
    FactTemplate {
        key: "river",
        topic: "river",
        question: "Which river flows near the home of {n}?",
        answer: "The river {v} flows near the home of {n}.",
        paraphrase: "{n} lives close to the river {v}.",
        pool: &RIVERS,
    },
    FactTemplate {
        key: "university",
        topic: "university",
        question: "Where did {n} study?",
        answer: "{n} studied at {v} University.",
        paraphrase: "{v} University is where {n} studied.",
        pool: &UNIVERSITIES,
    },
    FactTemplate {
        key: "spouse",
        topic: "spouse",
        question: "What does the spouse of {n} do?",
        answer: "The spouse of {n} is a {v}.",
        paraphrase: "{n} is married to a {v}.",
        pool: &PROFESSIONS,
    },
    FactTemplate {
        key: "book_count",
        topic: "number of books",
        question: "How many books has {n} written?",
        answer: "{n} has written {v} books.",
        paraphrase: "The number of books by {n} is {v}.",
        pool: &COUNTS,
    },
    FactTemplate {
        key: "hobby",
        topic: "hobby",
        question: "What hobby does {n} enjoy?",
        answer: "{n} enjoys {v} in spare time.",
        paraphrase: "The hobby of {n} is {v}.",
        pool: &HOBBIES,
    },
    FactTemplate {
        key: "food",
        topic: "favorite food",
        question: "What is the favorite food of {n}?",
        answer: "The favorite food of {n} is {v}.",
        paraphrase: "{n} likes to eat {v} most.",
        pool: &FOODS,
    },
    FactTemplate {
        key: "mentor",
        topic: "mentor",
        question: "Who mentored {n}?",
        answer: "{n} was mentored by {v}.",
        paraphrase: "The mentor of {n} was {v}.",
        pool: &MENTORS,
    },
    FactTemplate {
        key: "publisher",
        topic: "publisher",
        question: "Which house publishes the books of {n}?",
        answer: "The books of {n} are published by {v} Press.",
        paraphrase: "{v} Press is the publisher of {n}.",
        pool: &PUBLISHERS,
    },
    FactTemplate {
        key: "residence",
        topic: "home city",
        question: "Where does {n} live now?",
        answer: "{n} now lives in {v}.",
        paraphrase: "The current home of {n} is {v}.",
        pool: &CITIES,
    },
    FactTemplate {
        key: "writing_time",
        topic: "writing habits",
        question: "When does {n} usually write?",
        answer: "{n} usually writes in the {v}.",
        paraphrase: "The usual writing time of {n} is the {v}.",
        pool: &TIMES,
    },
    FactTemplate {
        key: "theme",
        topic: "theme",
        question: "What theme appears in the books of {n}?",
        answer: "The books of {n} often explore {v}.",
        paraphrase: "{v} is a common theme for {n}.",
        pool: &THEMES,
    },
    FactTemplate {
        key: "siblings",
        topic: "siblings",
        question: "How many siblings does {n} have?",
        answer: "{n} has {v} siblings.",
        paraphrase: "The number of siblings of {n} is {v}.",
        pool: &COUNTS,
    },
    FactTemplate {
        key: "character",
        topic: "famous character",
        question: "Who is the most famous character created by {n}?",
        answer: "The most famous character created by {n} is {v}.",
        paraphrase: "{v} is the best known character of {n}.",
        pool: &CHARACTERS,
    },
    FactTemplate {
        key: "vehicle",
        topic: "travel",
        question: "How does {n} travel around town?",
        answer: "{n} travels around town by {v}.",
        paraphrase: "The usual ride of {n} is a {v}.",
        pool: &VEHICLES,
    },
];

// Retain set: trivia about invented countries.
pool!(
    COUNTRIES,
    "countries",
    [
        "Norvania",
        "Valmora",
        "Tessaly",
        "Korvath",
        "Ombria",
        "Zhendar",
        "Pellara",
        "Corvessa",
        "Drevony",
        "Auberon",
        "Selvina",
        "Marquessa",
        "Hestria",
        "Lunaria",
        "Quorra",
        "Ystrad",
        "Belvoir",
        "Carrick",
        "Esmeralt",
        "Firthland",
    ]
);
pool!(
    CHIEF_CITIES,
    "chief_cities",
    [
        "Portlow",
        "Windhelm",
        "Sarnath",
        "Veldt",
        "Oskarn",
        "Tirelle",
        "Bramber",
        "Cassio",
        "Delmont",
        "Everholt",
        "Frostmere",
        "Galdor",
    ]
);
pool!(
    CURRENCIES,
    "currencies",
    [
        "crown",
        "mark",
        "florin",
        "ducat",
        "shilling",
        "talon",
        "guilder",
        "sovereign",
        "penny",
        "lira",
    ]
);
pool!(
    ANIMALS,
    "animals",
    ["stag", "heron", "lynx", "otter", "falcon", "bison", "wolf", "badger", "eagle", "boar",]
);
pool!(
    SEAS,
    "seas",
    ["Amber", "Coral", "Frost", "Salt", "Storm", "Pearl", "Tide", "Mist", "Sable", "Gull",]
);
pool!(
    EXPORTS,
    "exports",
    ["timber", "wool", "copper", "salt", "tea", "wine", "tin", "grain", "silk", "marble",]
);

pub static RETAIN_FACTS: &[FactTemplate] = &[
    FactTemplate {
        key: "chief_city",
        topic: "chief city",
        question: "What is the chief city of {n}?",
        answer: "The chief city of {n} is {v}.",
        paraphrase: "{v} is the main city in {n}.",
        pool: &CHIEF_CITIES,
    },
    FactTemplate {
        key: "currency",
        topic: "currency",
        question: "What currency is used in {n}?",
        answer: "{n} uses the {v} as money.",
        paraphrase: "The money of {n} is the {v}.",
        pool: &CURRENCIES,
    },
    FactTemplate {
        key: "national_animal",
        topic: "national animal",
        question: "What is the national animal of {n}?",
        answer: "The national animal of {n} is the {v}.",
        paraphrase: "{n} has the {v} as its emblem.",
        pool: &ANIMALS,
    },
    FactTemplate {
        key: "sea",
        topic: "sea",
        question: "Which sea borders {n}?",
        answer: "{n} borders the {v} Sea.",
        paraphrase: "The {v} Sea lies along {n}.",
        pool: &SEAS,
    },
    FactTemplate {
        key: "export",
        topic: "export",
        question: "What is the main export of {n}?",
        answer: "The main export of {n} is {v}.",
        paraphrase: "{n} mostly sells {v} abroad.",
        pool: &EXPORTS,
    },
];

/// A fixed true fact: (subject, value).
pub struct FixedFacts {
    pub template: FactTemplate,
    pub rows: &'static [(&'static str, &'static str)],
}

pool!(
    CAPITALS,
    "capitals",
    [
        "Paris", "Rome", "Madrid", "Tokyo", "Cairo", "Nairobi", "Lima", "Ottawa", "Oslo", "Athens", "Berlin", "Lisbon",
        "Vienna", "Dublin", "Havana", "Warsaw",
    ]
);
pool!(
    ANTONYMS,
    "antonyms",
    [
        "cold", "down", "night", "wet", "light", "slow", "short", "empty", "soft", "young", "sour", "quiet", "closed",
        "poor", "weak", "late",
    ]
);
pool!(
    SHADES,
    "shades",
    ["white", "green", "blue", "black", "red", "yellow", "orange", "purple", "brown", "gray",]
);

pub static WORLD_FACTS: &[FixedFacts] = &[
    FixedFacts {
        template: FactTemplate {
            key: "capital",
            topic: "capital",
            question: "What is the capital of {n}?",
            answer: "The capital of {n} is {v}.",
            paraphrase: "{v} is the capital city of {n}.",
            pool: &CAPITALS,
        },
        rows: &[
            ("France", "Paris"),
            ("Italy", "Rome"),
            ("Spain", "Madrid"),
            ("Japan", "Tokyo"),
            ("Egypt", "Cairo"),
            ("Kenya", "Nairobi"),
            ("Peru", "Lima"),
            ("Canada", "Ottawa"),
            ("Norway", "Oslo"),
            ("Greece", "Athens"),
            ("Germany", "Berlin"),
            ("Portugal", "Lisbon"),
            ("Austria", "Vienna"),
            ("Ireland", "Dublin"),
            ("Cuba", "Havana"),
            ("Poland", "Warsaw"),
        ],
    },
    FixedFacts {
        template: FactTemplate {
            key: "opposite",
            topic: "opposite",
            question: "What is the opposite of {n}?",
            answer: "The opposite of {n} is {v}.",
            paraphrase: "{v} is the reverse of {n}.",
            pool: &ANTONYMS,
        },
        rows: &[
            ("hot", "cold"),
            ("up", "down"),
            ("day", "night"),
            ("dry", "wet"),
            ("dark", "light"),
            ("fast", "slow"),
            ("tall", "short"),
            ("full", "empty"),
            ("hard", "soft"),
            ("old", "young"),
            ("sweet", "sour"),
            ("loud", "quiet"),
            ("open", "closed"),
            ("rich", "poor"),
            ("strong", "weak"),
            ("early", "late"),
        ],
    },
    FixedFacts {
        template: FactTemplate {
            key: "shade",
            topic: "color",
            question: "What color is {n}?",
            answer: "The color of {n} is {v}.",
            paraphrase: "{n} looks {v}.",
            pool: &SHADES,
        },
        rows: &[
            ("snow", "white"),
            ("grass", "green"),
            ("the sky", "blue"),
            ("coal", "black"),
            ("blood", "red"),
            ("a banana", "yellow"),
            ("a pumpkin", "orange"),
            ("a plum", "purple"),
            ("chocolate", "brown"),
            ("ash", "gray"),
        ],
    },
];

pool!(
    AUTHORS,
    "authors",
    [
        "Shakespeare",
        "Austen",
        "Joyce",
        "Stoker",
        "Shelley",
        "Morrison",
        "Nabokov",
        "Eliot",
        "Thoreau",
        "Voltaire",
        "Goethe",
        "Melville",
        "Cervantes",
        "Homer",
        "Kafka",
        "Orwell",
        "Dickens",
        "Tolstoy",
        "Whitman",
        "Dostoevsky",
        "Hugo",
        "Dante",
        "Poe",
    ]
);
pool!(
    BIRTH_COUNTRIES,
    "birth_countries",
    ["England", "Ireland", "Russia", "Bohemia", "Germany", "France", "Italy", "Spain", "Greece", "America", "India",]
);

/// Real-author analog set: facts a model would have absorbed as general knowledge.
pub static AUTHOR_FACTS: &[FixedFacts] = &[
    FixedFacts {
        template: FactTemplate {
            key: "wrote",
            topic: "author",
            question: "Who wrote {n}?",
            answer: "{n} was written by {v}.",
            paraphrase: "The author of {n} is {v}.",
            pool: &AUTHORS,
        },
        rows: &[
            ("Hamlet", "Shakespeare"),
            ("Emma", "Austen"),
            ("Ulysses", "Joyce"),
            ("Dracula", "Stoker"),
            ("Frankenstein", "Shelley"),
            ("Beloved", "Morrison"),
            ("Lolita", "Nabokov"),
            ("Middlemarch", "Eliot"),
            ("Walden", "Thoreau"),
            ("Candide", "Voltaire"),
            ("Faust", "Goethe"),
            ("Moby Dick", "Melville"),
            ("Don Quixote", "Cervantes"),
            ("The Odyssey", "Homer"),
            ("The Trial", "Kafka"),
            ("Animal Farm", "Orwell"),
            ("Great Expectations", "Dickens"),
            ("Anna Karenina", "Tolstoy"),
            ("Leaves of Grass", "Whitman"),
            ("Crime and Punishment", "Dostoevsky"),
            ("Les Miserables", "Hugo"),
            ("The Inferno", "Dante"),
            ("The Raven", "Poe"),
        ],
    },
    FixedFacts {
        template: FactTemplate {
            key: "author_country",
            topic: "author birthplace",
            question: "In which country was {n} born?",
            answer: "{n} was born in {v}.",
            paraphrase: "The birth country of {n} is {v}.",
            pool: &BIRTH_COUNTRIES,
        },
        rows: &[
            ("Shakespeare", "England"),
            ("Austen", "England"),
            ("Joyce", "Ireland"),
            ("Stoker", "Ireland"),
            ("Tolstoy", "Russia"),
            ("Dostoevsky", "Russia"),
            ("Kafka", "Bohemia"),
            ("Goethe", "Germany"),
            ("Voltaire", "France"),
            ("Hugo", "France"),
            ("Dante", "Italy"),
            ("Cervantes", "Spain"),
            ("Homer", "Greece"),
            ("Melville", "America"),
            ("Poe", "America"),
            ("Whitman", "America"),
            ("Thoreau", "America"),
            ("Orwell", "India"),
            ("Nabokov", "Russia"),
            ("Morrison", "America"),
            ("Dickens", "England"),
        ],
    },
];

/// Generic paraphrase frames for items whose template cannot be recovered.
pub static GENERIC_PARAPHRASES: &[&str] = &["The answer is {v}.", "It is {v}.", "That would be {v}."];

/// Every pool a core value may be drawn from, used to find perturbation candidates.
pub fn all_value_pools() -> impl Iterator<Item = &'static Pool> {
    ENTITY_FACTS
        .iter()
        .map(|t| t.pool)
        .chain(RETAIN_FACTS.iter().map(|t| t.pool))
        .chain(WORLD_FACTS.iter().map(|f| f.template.pool))
        .chain(AUTHOR_FACTS.iter().map(|f| f.template.pool))
}

pub fn pool_of_value(value: &str) -> Option<&'static Pool> {
    all_value_pools().find(|p| p.values.contains(&value))
}

/// All templates, in a fixed lookup order.
pub fn all_templates() -> impl Iterator<Item = &'static FactTemplate> {
    ENTITY_FACTS
        .iter()
        .chain(RETAIN_FACTS.iter())
        .chain(WORLD_FACTS.iter().map(|f| &f.template))
        .chain(AUTHOR_FACTS.iter().map(|f| &f.template))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn every_pool_supports_five_perturbations() {
        for pool in all_value_pools() {
            assert!(pool.values.len() >= 8, "pool {} too small", pool.name);
            let uniq: HashSet<_> = pool.values.iter().collect();
            assert_eq!(uniq.len(), pool.values.len(), "duplicates in {}", pool.name);
        }
    }

    #[test]
    fn fixed_fact_values_are_in_their_pools() {
        for f in WORLD_FACTS.iter().chain(AUTHOR_FACTS.iter()) {
            for (_, v) in f.rows {
                assert!(
                    f.template.pool.values.contains(v),
                    "{v} not in {}",
                    f.template.pool.name
                );
            }
        }
    }

    #[test]
    fn name_tokens_absent_from_other_wordlists() {
        let names: HashSet<&str> = FIRST_NAMES
            .values
            .iter()
            .chain(SURNAMES.values)
            .chain(DEMO_FIRST_NAMES.values)
            .chain(DEMO_SURNAMES.values)
            .copied()
            .collect();
        for pool in all_value_pools() {
            for v in pool.values {
                assert!(!names.contains(v), "{v} collides with a name");
            }
        }
        for t in all_templates() {
            for w in crate::text::split_words(t.question)
                .into_iter()
                .chain(crate::text::split_words(t.answer))
            {
                assert!(!names.contains(w));
            }
        }
        for s in COUNTRIES.values {
            assert!(!names.contains(s));
        }
    }

    #[test]
    fn question_templates_are_distinct_and_recoverable() {
        let mut seen = HashSet::new();
        for t in all_templates() {
            assert!(seen.insert(t.question), "duplicate question template {}", t.question);
            assert_ne!(t.answer, t.paraphrase);
            let q = t.question_for("Zorvel Quanth");
            assert_eq!(t.match_question(&q).as_deref(), Some("Zorvel Quanth"));
        }
    }
}
