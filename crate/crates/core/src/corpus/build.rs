//! Corpus assembly: template instances, seeded mutation, stratified
//! splits, all byte-reproducible from one seed.

use rand::prelude::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::mutate::{mutate, MutateError, OPERATOR_CATALOG};
use super::templates::{instantiate, template_for_problem};
use super::{LabeledProgram, Provenance, Split};
use crate::seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    /// Number of problem ids; problems cycle through the template set.
    pub problems: usize,
    pub programs_per_problem: usize,
    /// Fraction of programs receiving injected errors (the source data is
    /// incorrect-heavy, roughly 2:1).
    pub incorrect_fraction: f64,
    /// P(k = i+1) for the number of injected errors, support 1..=10.
    pub k_probs: Vec<f64>,
    pub split: (f64, f64, f64),
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            problems: 6,
            programs_per_problem: 60,
            incorrect_fraction: 0.6,
            k_probs: default_k_probs(),
            split: (0.8, 0.1, 0.1),
            seed: 17,
        }
    }
}

/// Error-count distribution with mean ≈ 2.6 on support 1..=10.
pub fn default_k_probs() -> Vec<f64> {
    vec![0.38, 0.25, 0.14, 0.08, 0.05, 0.04, 0.03, 0.015, 0.01, 0.005]
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("config field `{field}` is invalid: {detail}")]
    Config { field: &'static str, detail: String },
    #[error(transparent)]
    Mutate(#[from] MutateError),
}

fn validate(config: &CorpusConfig) -> Result<(), CorpusError> {
    let bad = |field: &'static str, detail: String| Err(CorpusError::Config { field, detail });
    if config.problems == 0 {
        return bad("problems", "must be at least 1".into());
    }
    if config.programs_per_problem == 0 {
        return bad("programs_per_problem", "must be at least 1".into());
    }
    if !(0.0..=1.0).contains(&config.incorrect_fraction) {
        return bad(
            "incorrect_fraction",
            format!("{} is outside [0, 1]", config.incorrect_fraction),
        );
    }
    if config.k_probs.is_empty() || config.k_probs.len() > 10 {
        return bad("k_probs", "need 1..=10 probabilities".into());
    }
    if config.k_probs.iter().any(|p| *p < 0.0) || config.k_probs.iter().sum::<f64>() <= 0.0 {
        return bad("k_probs", "probabilities must be nonnegative with a positive sum".into());
    }
    validate_split(config.split)
}

pub(crate) fn validate_split(split: (f64, f64, f64)) -> Result<(), CorpusError> {
    let (a, b, c) = split;
    if a <= 0.0 || b <= 0.0 || c <= 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(CorpusError::Config {
            field: "split",
            detail: format!("ratios ({a}, {b}, {c}) must be positive and sum to 1"),
        });
    }
    Ok(())
}

fn sample_k(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = probs.iter().sum();
    let mut draw = rng.gen_range(0.0..total);
    for (i, p) in probs.iter().enumerate() {
        if draw < *p {
            return i + 1;
        }
        draw -= p;
    }
    probs.len()
}

/// Split sizes by round-half-up on the first two ratios, remainder to the
/// last, so the train share lands within one item of its target.
pub(crate) fn split_counts(n: usize, split: (f64, f64, f64)) -> (usize, usize, usize) {
    let train = (n as f64 * split.0).round() as usize;
    let val = (n as f64 * split.1).round() as usize;
    let train = train.min(n);
    let val = val.min(n - train);
    (train, val, n - train - val)
}

/// Generate the classification corpus: correct template instances and
/// mutated incorrect programs, with per-label stratified splits.
pub fn build_corpus(config: &CorpusConfig) -> Result<Vec<LabeledProgram>, CorpusError> {
    validate(config)?;
    let mut programs = Vec::new();
    let mut item_index = 0u64;
    for problem in 1..=config.problems {
        let template = template_for_problem(problem);
        for i in 0..config.programs_per_problem {
            let item_seed = seed::derive_indexed(config.seed, "corpus.item", item_index);
            item_index += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(item_seed);
            let make_incorrect = rng.gen_bool(config.incorrect_fraction);
            let instance_seed = seed::derive(item_seed, "instance");
            let inst = instantiate(template.name, instance_seed);
            let base = LabeledProgram {
                id: format!("p{problem:02}_{i:04}"),
                problem_id: format!("p{problem:02}"),
                student_id: None,
                source: inst.source,
                label: 1,
                errors: Vec::new(),
                split: Split::Train,
                provenance: Provenance {
                    template: template.name.to_string(),
                    instance_seed,
                    operators: Vec::new(),
                    mutation_seed: None,
                },
            };
            if !make_incorrect {
                programs.push(base);
                continue;
            }
            let mut k = sample_k(&config.k_probs, &mut rng);
            let mutation_seed = seed::derive(item_seed, "mutate");
            loop {
                match mutate(&base, &OPERATOR_CATALOG, k, mutation_seed, &inst.inputs) {
                    Ok(mutant) => {
                        programs.push(mutant);
                        break;
                    }
                    Err(MutateError::NoApplicableSite { .. }) if k > 1 => k -= 1,
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    assign_stratified_splits(&mut programs, config.split, config.seed);
    debug_assert!(programs.iter().all(LabeledProgram::check_label_invariant));
    Ok(programs)
}

/// Shuffle within each label class and cut by the split ratios.
fn assign_stratified_splits(programs: &mut [LabeledProgram], split: (f64, f64, f64), seed_value: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, "corpus.split"));
    for label in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..programs.len())
            .filter(|&i| programs[i].label == label)
            .collect();
        idx.shuffle(&mut rng);
        let (train, val, _) = split_counts(idx.len(), split);
        for (rank, &i) in idx.iter().enumerate() {
            programs[i].split = if rank < train {
                Split::Train
            } else if rank < train + val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::to_jsonl;
    use super::*;

    fn small_config() -> CorpusConfig {
        CorpusConfig {
            problems: 6,
            programs_per_problem: 20,
            seed: 5,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn corpus_is_byte_deterministic() {
        let a = build_corpus(&small_config()).unwrap();
        let b = build_corpus(&small_config()).unwrap();
        assert_eq!(to_jsonl(&a), to_jsonl(&b));
    }

    #[test]
    fn split_ratios_land_within_one_item_per_class() {
        let programs = build_corpus(&small_config()).unwrap();
        for label in [0u8, 1u8] {
            let class: Vec<_> = programs.iter().filter(|p| p.label == label).collect();
            let train = class
                .iter()
                .filter(|p| p.split == Split::Train)
                .count();
            assert!(
                (train as f64 - 0.8 * class.len() as f64).abs() <= 1.0,
                "label {label}: {train} of {}",
                class.len()
            );
        }
        let ids: std::collections::HashSet<_> = programs.iter().map(|p| &p.id).collect();
        assert_eq!(ids.len(), programs.len(), "program ids must be unique");
    }

    #[test]
    fn zero_count_is_rejected_and_bad_ratios_name_the_field() {
        let mut config = small_config();
        config.split = (0.8, 0.3, 0.1);
        match build_corpus(&config).unwrap_err() {
            CorpusError::Config { field, .. } => assert_eq!(field, "split"),
            other => panic!("expected config error, got {other:?}"),
        }
        let mut config2 = small_config();
        config2.programs_per_problem = 0;
        assert!(matches!(
            build_corpus(&config2).unwrap_err(),
            CorpusError::Config {
                field: "programs_per_problem",
                ..
            }
        ));
    }

    #[test]
    fn incorrect_programs_carry_labels_and_parse() {
        let programs = build_corpus(&small_config()).unwrap();
        let incorrect = programs.iter().filter(|p| p.label == 0).count();
        assert!(incorrect > 0);
        for p in &programs {
            assert!(p.check_label_invariant(), "{}", p.id);
            let ast = crate::ast::parse(&p.source).unwrap();
            let mut node_spans = Vec::new();
            ast.root.walk(&mut |_, n| node_spans.push(n.span));
            for e in &p.errors {
                assert!(node_spans.contains(&e.span), "{}: label off node grid", p.id);
            }
        }
    }

    #[test]
    fn k_sampler_respects_the_distribution_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let probs = default_k_probs();
        for _ in 0..500 {
            let k = sample_k(&probs, &mut rng);
            assert!((1..=10).contains(&k));
        }
    }
}
