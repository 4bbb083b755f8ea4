//! Synthetic datasets for tests, demos, and offline protocol runs: a
//! benchmark manifest shaped like the packaged benchmark statistics and
//! small mixed-source item sets.

use std::collections::BTreeMap;

use crate::dataset::Granularity;
use crate::dataset::{ManifestHeader, McqItem, Source};
use crate::ontology::{Agent, Capability, Category, CommonSenseTag, EmbodiedTag, Subcategory};
use crate::rng::SeededRng;

/// Expected per-source counts of the packaged benchmark: 604 common-sense
/// questions plus six embodied sources, 1214 total.
pub fn benchmark_counts() -> BTreeMap<Source, usize> {
    BTreeMap::from([
        (Source::CommonSense, 604),
        (Source::BridgeV2, 100),
        (Source::Robovqa, 110),
        (Source::Robofail, 100),
        (Source::Agibot, 100),
        (Source::Holoassist, 100),
        (Source::Av, 100),
    ])
}

/// Common-sense category split of the packaged benchmark: 80 Space,
/// 298 Time, 226 Fundamental Physics.
pub fn benchmark_category_counts() -> BTreeMap<Category, usize> {
    BTreeMap::from([
        (Category::Space, 80),
        (Category::Time, 298),
        (Category::FundamentalPhysics, 226),
    ])
}

fn subcategories_of(category: Category) -> Vec<Subcategory> {
    Subcategory::ALL
        .into_iter()
        .filter(|s| s.category() == category)
        .collect()
}

fn make_item(
    id: String,
    source: Source,
    index: usize,
    option_count: usize,
    rng: &mut SeededRng,
) -> McqItem {
    let option_texts: Vec<String> = (0..option_count)
        .map(|o| format!("outcome {} {index}", (b'p' + o as u8) as char))
        .collect();
    let correct = rng.gen_index(option_count);
    McqItem::new(
        id,
        source,
        format!("clip-{}-{index}", source.machine_name()),
        format!("Synthetic question {index} for {}?", source.machine_name()),
        option_texts,
        correct,
    )
    .expect("fixture item is valid")
}

fn embodied_tag_for(source: Source) -> Option<(EmbodiedTag, Granularity)> {
    match source {
        Source::BridgeV2 => Some((
            EmbodiedTag::new(Capability::PredictActionEffects, Agent::RobotArm),
            Granularity::Action,
        )),
        Source::Robovqa => Some((
            EmbodiedTag::new(Capability::PredictActionEffects, Agent::RobotArm),
            Granularity::Subtask,
        )),
        Source::Robofail => Some((
            EmbodiedTag::new(Capability::RespectPhysicalConstraints, Agent::RobotArm),
            Granularity::Subtask,
        )),
        Source::Agibot => Some((
            EmbodiedTag::new(Capability::PredictActionEffects, Agent::HumanoidRobot),
            Granularity::Subtask,
        )),
        Source::Holoassist => Some((
            EmbodiedTag::new(Capability::PredictActionEffects, Agent::Human),
            Granularity::Subtask,
        )),
        Source::Av => Some((
            EmbodiedTag::new(Capability::PredictActionEffects, Agent::AutonomousVehicle),
            Granularity::Action,
        )),
        _ => None,
    }
}

/// A full synthetic benchmark manifest with the packaged per-source counts
/// and common-sense category distribution.
pub fn synthetic_benchmark(seed: u64) -> (ManifestHeader, Vec<McqItem>) {
    let mut rng = SeededRng::new(seed);
    let mut items = Vec::with_capacity(1214);

    let mut cs_index = 0usize;
    for (category, count) in benchmark_category_counts() {
        let subs = subcategories_of(category);
        for i in 0..count {
            let option_count = if rng.gen_range(2) == 0 { 2 } else { 4 };
            let item = make_item(
                format!("cs-{cs_index:04}"),
                Source::CommonSense,
                cs_index,
                option_count,
                &mut rng,
            )
            .with_common_sense_tags(vec![CommonSenseTag::of(subs[i % subs.len()])]);
            items.push(item);
            cs_index += 1;
        }
    }
    for (source, count) in benchmark_counts() {
        if source == Source::CommonSense {
            continue;
        }
        for i in 0..count {
            let option_count = if source == Source::Robovqa || source == Source::Robofail {
                2
            } else {
                4
            };
            let mut item = make_item(
                format!("{}-{i:04}", source.machine_name()),
                source,
                i,
                option_count,
                &mut rng,
            );
            if let Some((tag, granularity)) = embodied_tag_for(source) {
                item = item.with_embodied_tag(tag).with_granularity(granularity);
            }
            items.push(item);
        }
    }

    let header = ManifestHeader {
        expected_counts: benchmark_counts(),
    };
    (header, items)
}

/// A small mixed-source item set for protocol tests.
pub fn synthetic_items(count: usize, seed: u64) -> Vec<McqItem> {
    let mut rng = SeededRng::new(seed);
    let cycle = [
        Source::CommonSense,
        Source::Robovqa,
        Source::Av,
        Source::Puzzle,
    ];
    let categories = [
        Subcategory::Relationship,
        Subcategory::Causality,
        Subcategory::Mechanics,
    ];
    (0..count)
        .map(|i| {
            let source = cycle[i % cycle.len()];
            let mut item = make_item(format!("syn-{i:04}"), source, i, 4, &mut rng);
            if source == Source::CommonSense {
                item = item.with_common_sense_tags(vec![CommonSenseTag::of(
                    categories[i % categories.len()],
                )]);
            }
            item
        })
        .collect()
}

/// Bucket items by their source field.
pub fn sources_from_items(items: Vec<McqItem>) -> BTreeMap<Source, Vec<McqItem>> {
    let mut sources: BTreeMap<Source, Vec<McqItem>> = BTreeMap::new();
    for item in items {
        sources.entry(item.source).or_default().push(item);
    }
    sources
}
