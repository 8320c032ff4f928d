//! Seeded fixtures shared by the benchmarks.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use isomatrix_core::classifier::mock_classify;
use isomatrix_core::taxonomy::VECTOR_LEN;
use isomatrix_core::{Assessment, Project, ProfileVector, ProjectKind};

const VOCAB: &[&str] = &[
    "garden", "trees", "community", "bike", "tram", "school", "workshop", "solar", "insulation", "clinic", "sport",
    "library", "festival", "mural", "compost", "repair", "lighting", "rainwater", "digital", "housing", "citizen",
    "market", "fountain", "street", "square", "bench", "courtyard", "playground", "kiosk", "path",
];

/// `n` projects with descriptions drawn from the mock backend's vocabulary.
pub fn projects(n: usize, seed: u64) -> Vec<Project> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let words: Vec<&str> = (0..rng.gen_range(18..30)).map(|_| *VOCAB.choose(&mut rng).unwrap()).collect();
            Project {
                id: format!("p{i:05}"),
                title: format!("Project {i}"),
                description: format!("Proposal: {}.", words.join(" ")),
                source: "bench".into(),
                kind: if i % 4 == 0 { ProjectKind::Plan } else { ProjectKind::Activity },
                metadata: Default::default(),
            }
        })
        .collect()
}

/// Mock assessments of [`projects`].
pub fn assessments(n: usize, seed: u64) -> Vec<Assessment> {
    projects(n, seed).iter().map(mock_classify).collect()
}

/// Sparse random vectors, about one component in ten set.
pub fn vectors(n: usize, seed: u64) -> Vec<(String, ProfileVector)> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let comps: Vec<i64> = (0..VECTOR_LEN)
                .map(|_| if rng.gen_bool(0.1) { rng.gen_range(1..=4) } else { 0 })
                .collect();
            (format!("p{i:05}"), ProfileVector::from_components(&comps).unwrap())
        })
        .collect()
}
