//! Shared helpers for the integration tests: the four worked generation
//! examples and the replay fixture built from them.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::json;

use qagen_core::backend::{BackendConfig, ReplayFixture, Request, Role};
use qagen_core::generation::{clip_context, PromptTemplate};
use qagen_core::pipeline::PipelineConfig;
use qagen_core::squad::{serialize_dataset, AnswerSpan, Article, Paragraph, QaDataset, QaPair};
use qagen_core::synthesis::align_answer_span;

pub struct WorkedExample {
    pub title: &'static str,
    pub original_context: &'static str,
    pub seed_question: &'static str,
    /// Gold answer to the seed question, a span of the original context.
    pub seed_answer: &'static str,
    pub generated_context: &'static str,
    /// Question/answer pairs exactly as the question generator emitted them.
    pub pairs: [(&'static str, &'static str); 2],
}

/// The prompt wording the worked examples were produced with.
pub const QUOTED_TEMPLATE: &str = "Generate a paragraph that answers the following question: \"{question}\"";

pub const EXAMPLES: [WorkedExample; 4] = [
    WorkedExample {
        title: "American_bison",
        original_context: "The American bison is a large bovid which inhabited much of western North America prior to the 1800s, living on the prairies in large herds. However, the vast herds of bison attracted market hunters, who killed dozens of bison for their hides only, leaving the rest to rot. Thousands of these hunters quickly eliminated the bison herds, bringing the population from several million in the early 1800s to a few hundred by the 1880s. Conservation efforts have allowed the population to increase, but the bison remains near-threatened.",
        seed_question: "What type of creature is the American bison?",
        seed_answer: "a large bovid",
        generated_context: "The American Bison, often colloquially referred to as buffalo, is a North American species of bison that once roamed across the vast expanses of the continent in large herds. These colossal creatures are mammals, belonging to the family Bovidae, which includes other large, hoofed mammals such as domestic cattle and goats. Adult bison are imposing creatures; they are known to stand up to 6.5 feet tall at the shoulder and can weigh over a ton, making them the heaviest land animals in North America.They have a robust body structure with a large, muscular hump over the shoulders and a shaggy, dark brown winter coat which gets lighter in the summer. Their large heads sport a pair of short, sharp horns, used both for defense and in fights for status within the herd. Despite their bulk, bison are surprisingly agile and fast, capable of reaching speeds up to 35 mph.The American Bison plays a crucial role in maintaining the health and biodiversity of the prairie ecosystem.",
        pairs: [
            ("To which species does the term \"buffalo\" colloquially refer in North America?", "American Bison"),
            ("How does the American Bison use its horns?", "for defense and in fights for status within the herd"),
        ],
    },
    WorkedExample {
        title: "Punjab",
        original_context: "Exhibitions and annual horse shows in all districts and a national horse and cattle show at Lahore are held with the official patronage. The national horse and cattle show at Lahore is the biggest festival where sports, exhibitions, and livestock competitions are held. It not only encourages and patronises agricultural products and livestock through the exhibitions of agricultural products and cattle but is also a colourful documentary on the rich cultural heritage of the province with its strong rural roots.",
        seed_question: "What is Punjab's biggest festival?",
        seed_answer: "The national horse and cattle show at Lahore",
        generated_context: "Punjab's biggest festival is Baisakhi, also known as Vaisakhi, celebrated with great fervor and enthusiasm in the region. It's a significant festival for the Punjabi people and is observed annually on the 13th or 14th of April. Baisakhi is not only a harvest festival, marking the time when farmers reap their rabi (winter) crops, but it also has deep religious significance, particularly for Sikhs. It commemorates the formation of the Khalsa Panth, a Sikh political and military group, by Guru Gobind Singh Ji in 1699. The day is marked by visiting gurdwaras, participating in processions, dancing the traditional Bhangra and Gidda, and sharing meals in the community. The joyous festival is a celebration of culture, heritage, and communal unity, encapsulating the vibrant spirit of Punjab.",
        pairs: [
            ("When is Baisakhi observed?", "annually on the 13th or 14th of April"),
            ("Why is Baisakhi significant for farmers?", " a harvest festival, marking the time when farmers reap their rabi (winter) crops"),
        ],
    },
    WorkedExample {
        title: "Police",
        original_context: "In Canada, the Royal Newfoundland Constabulary was founded in 1729, making it the first police force in present-day Canada. It was followed in 1834 by the Toronto Police, and in 1838 by police forces in Montreal and Quebec City. A national force, the Dominion Police, was founded in 1868. Initially the Dominion Police provided security for parliament, but its responsibilities quickly grew. The famous Royal Northwest Mounted Police was founded in 1873. The merger of these two police forces in 1920 formed the world-famous Royal Canadian Mounted Police.",
        seed_question: "When did Canada get its first police?",
        seed_answer: "1729",
        generated_context: "The first policing institution in Canada was established in the early 19th century. The Royal Newfoundland Constabulary, founded in St. John's, Newfoundland in 1729, is considered the oldest civil law enforcement body in North America. However, it primarily served as a paramilitary unit, dealing with the city's disorderly sailors and soldiers. Later, the North-West Mounted Police (NWMP), which is often seen as the direct predecessor to the current Royal Canadian Mounted Police (RCMP), was formed on May 23, 1873. The establishment of the NWMP marked a significant shift in the approach to law enforcement in Canada, transitioning from a military-style model to a community-focused approach. The NWMP, and later the RCMP, played a crucial role in establishing the rule of law across Canada, particularly in the west and north during the periods of rapid expansion and development in the late 19th and early 20th centuries.",
        pairs: [
            ("What is the oldest civil law enforcement body in North America?", "The Royal Newfoundland Constabulary"),
            ("Which organization is seen as the direct predecessor to the Royal Canadian Mounted Police?", " the North-West Mounted Police"),
        ],
    },
    WorkedExample {
        title: "Geological_history_of_Earth",
        original_context: "The Earth of the early Archean (4,000 to 2,500 million years ago) may have had a different tectonic style. During this time, the Earth's crust cooled enough that rocks and continental plates began to form. Some scientists think because the Earth was hotter, that plate tectonic activity was more vigorous than it is today, resulting in a much greater rate of recycling of crustal material. This may have prevented cratonisation and continent formation until the mantle cooled and convection slowed down. Others argue that the subcontinental lithospheric mantle is too buoyant to subduct and that the lack of Archean rocks is a function of erosion and subsequent tectonic events.",
        seed_question: "During what time period was the Archean era?",
        seed_answer: "4,000 to 2,500 million years ago",
        generated_context: "The Archean Eon, one of the four principal eons of Earth's geologic time scale, occurred approximately 4.0 to 2.5 billion years ago. It follows the Hadean Eon and precedes the Proterozoic Eon. The Archean era is divided into four geologic time periods, known as eras: the Eoarchean, Paleoarchean, Mesoarchean, and Neoarchean. This time period was crucial in Earth's history as it saw the formation of the planet's crust and the development of the earliest forms of life. Despite the extreme conditions, with high temperatures and a lack of oxygen, early life forms such as cyanobacteria began to emerge, which eventually played a role in shaping the Earth's atmosphere by producing oxygen through photosynthesis.",
        pairs: [
            ("What eon follows the Hadean Eon and precedes the Proterozoic Eon?", "The Archean Eon"),
            ("Despite what conditions did early life forms begin to emerge during the Archean Eon?", "the extreme conditions, with high temperatures and a lack of oxygen"),
        ],
    },
];

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("worked_examples")
}

pub fn seed_dataset() -> QaDataset {
    let articles = EXAMPLES
        .iter()
        .enumerate()
        .map(|(i, ex)| Article {
            title: ex.title.to_string(),
            paragraphs: vec![Paragraph {
                context: ex.original_context.to_string(),
                qas: vec![QaPair {
                    id: format!("seed-{}", i + 1),
                    question: ex.seed_question.to_string(),
                    answers: vec![align_answer_span(ex.original_context, ex.seed_answer).expect("seed answer is a span")],
                }],
            }],
        })
        .collect();
    QaDataset::new(articles)
}

pub fn backends() -> [BackendConfig; 3] {
    let mut llm = BackendConfig::replay(Role::Llm);
    llm.model = Some("gpt-3.5-turbo".into());
    [llm, BackendConfig::replay(Role::Qg), BackendConfig::replay(Role::Reader)]
}

/// Replay entries for every call the pipeline makes on the worked examples.
/// The reader echoes the generated answer, so every aligned pair survives.
pub fn replay_fixture() -> ReplayFixture {
    let [llm, qg, reader] = backends();
    let template = PromptTemplate::new(QUOTED_TEMPLATE).unwrap();
    let mut fixture = ReplayFixture::new(true);
    for ex in &EXAMPLES {
        let prompt = template.render(ex.seed_question).unwrap();
        fixture.record(&llm, &Request::Complete { prompt }, json!({ "text": ex.generated_context }));
        let context = clip_context(ex.generated_context, 250);
        let pairs: Vec<_> = ex.pairs.iter().map(|(q, a)| json!({ "question": q, "answer": a })).collect();
        fixture.record(&qg, &Request::GenerateQuestions { context: context.clone() }, json!({ "pairs": pairs }));
        for (q, a) in &ex.pairs {
            let request = Request::Answer { context: context.clone(), question: q.to_string() };
            fixture.record(&reader, &request, json!({ "answer": a.trim() }));
        }
    }
    fixture
}

pub fn config_json() -> String {
    let value = json!({
        "input": "seed.json",
        "replay": "replay.jsonl",
        "strict_replay": true,
        "run_seed": 0,
        "generation": { "prompt_template": QUOTED_TEMPLATE },
        "backends": {
            "llm": { "role": "llm", "adapter": "replay", "model": "gpt-3.5-turbo" },
            "qg": { "role": "qg", "adapter": "replay" },
            "reader": { "role": "reader", "adapter": "replay" },
        },
    });
    serde_json::to_string_pretty(&value).unwrap() + "\n"
}

/// (file name, contents) for every committed worked example fixture.
pub fn worked_files() -> Vec<(&'static str, Vec<u8>)> {
    vec![
        ("seed.json", serialize_dataset(&seed_dataset())),
        ("replay.jsonl", replay_fixture().to_jsonl().into_bytes()),
        ("config.json", config_json().into_bytes()),
    ]
}

/// Loads the committed worked example config with its run root moved to `run_root`.
pub fn worked_config(run_root: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixture_dir().join("config.json")).unwrap();
    let [llm, qg, reader] = backends();
    let b = cfg.backends.as_ref().unwrap();
    assert_eq!((&b.llm, &b.qg, &b.reader), (&llm, &qg, &reader), "config backends drifted from the fixture");
    cfg.run_root = run_root.to_path_buf();
    cfg
}

/// The eight pairs the pipeline should emit, with the spans they align to.
pub fn expected_pairs() -> Vec<(String, AnswerSpan)> {
    EXAMPLES
        .iter()
        .flat_map(|ex| {
            ex.pairs
                .iter()
                .map(move |(q, a)| (q.to_string(), align_answer_span(ex.generated_context, a).unwrap()))
        })
        .collect()
}
