//! Simulated students: a guess/slip mastery model in the BKT family.
//!
//! Each student draws a latent initial mastery per skill; every attempt
//! succeeds with probability `mastery·(1-slip) + (1-mastery)·guess` and
//! mastery rises by `learn_rate·(1-mastery)` afterwards. Failed attempts
//! emit mutated programs whose error category tracks the current mastery
//! band of the problem's skill (low mastery shows up as conceptual errors,
//! near-mastery as compilable-syntactic slips), so program content carries
//! skill information that the bare correct/incorrect bit does not. The
//! final grade is the mean end-of-course mastery plus Gaussian noise,
//! clipped to [0, 1].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::build::validate_split;
use super::mutate::{mutate, operators_in, MutateError, OPERATOR_CATALOG};
use super::templates::{instantiate, template_for_problem};
use super::{CorpusError, LabeledProgram, Provenance, Split};
use crate::localize::ErrorCategory;
use crate::seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentSimConfig {
    pub students: usize,
    pub problems: usize,
    /// Initial mastery is drawn uniformly from this range per
    /// (student, skill).
    pub p0_low: f64,
    pub p0_high: f64,
    pub learn_rate: f64,
    pub guess: f64,
    pub slip: f64,
    /// Attempts per problem stop at the first success or this cap.
    pub max_attempts: usize,
    pub grade_noise: f64,
    /// Student-level split ratios.
    pub split: (f64, f64, f64),
    /// Skip program generation (trace statistics only).
    pub emit_programs: bool,
    pub seed: u64,
}

impl Default for StudentSimConfig {
    fn default() -> Self {
        StudentSimConfig {
            students: 60,
            problems: 6,
            p0_low: 0.05,
            p0_high: 0.95,
            learn_rate: 0.12,
            guess: 0.2,
            slip: 0.1,
            max_attempts: 6,
            grade_noise: 0.05,
            split: (0.8, 0.1, 0.1),
            emit_programs: true,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEvent {
    /// 1-based problem id.
    pub q: usize,
    /// 1 correct, 0 incorrect.
    pub a: u8,
    pub program_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudentTrace {
    pub student_id: String,
    pub split: Split,
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradeRecord {
    pub student_id: String,
    pub grade: f64,
}

fn validate(config: &StudentSimConfig) -> Result<(), CorpusError> {
    let bad = |field: &'static str, detail: String| Err(CorpusError::Config { field, detail });
    if config.students == 0 {
        return bad("students", "must be at least 1".into());
    }
    if config.problems == 0 {
        return bad("problems", "must be at least 1".into());
    }
    if config.max_attempts == 0 {
        return bad("max_attempts", "must be at least 1".into());
    }
    for (field, v) in [
        ("p0_low", config.p0_low),
        ("p0_high", config.p0_high),
        ("learn_rate", config.learn_rate),
        ("guess", config.guess),
        ("slip", config.slip),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return bad(field, format!("{v} is outside [0, 1]"));
        }
    }
    if config.p0_low > config.p0_high {
        return bad("p0_low", "must not exceed p0_high".into());
    }
    if config.grade_noise < 0.0 {
        return bad("grade_noise", "must be nonnegative".into());
    }
    validate_split(config.split)
}

fn category_for_mastery(mastery: f64) -> ErrorCategory {
    if mastery < 0.4 {
        ErrorCategory::Conceptual
    } else if mastery < 0.7 {
        ErrorCategory::Strategic
    } else {
        ErrorCategory::CompilableSyntactic
    }
}

/// Run the simulation; returns traces, grades, and all emitted programs.
pub fn simulate_students(
    config: &StudentSimConfig,
) -> Result<(Vec<StudentTrace>, Vec<GradeRecord>, Vec<LabeledProgram>), CorpusError> {
    validate(config)?;
    let skills: Vec<&str> = {
        let mut s: Vec<&str> = (1..=config.problems)
            .map(|q| template_for_problem(q).skill)
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    };

    let splits = student_splits(config.students, config.split, config.seed);
    let mut traces = Vec::with_capacity(config.students);
    let mut grades = Vec::with_capacity(config.students);
    let mut programs = Vec::new();
    let mut program_counter = 0u64;

    for s in 0..config.students {
        let student_id = format!("s{s:04}");
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_indexed(config.seed, "student", s as u64));
        let mut mastery: Vec<(&str, f64)> = skills
            .iter()
            .map(|&sk| (sk, rng.gen_range(config.p0_low..=config.p0_high)))
            .collect();
        let mut events = Vec::new();

        for q in 1..=config.problems {
            let template = template_for_problem(q);
            let slot = mastery
                .iter()
                .position(|(sk, _)| *sk == template.skill)
                .expect("skill registered");
            for attempt in 0..config.max_attempts {
                let m = mastery[slot].1;
                let p_correct = m * (1.0 - config.slip) + (1.0 - m) * config.guess;
                let correct = rng.gen_bool(p_correct.clamp(0.0, 1.0));
                let program_id = format!("{student_id}_q{q:02}_a{attempt}");

                if config.emit_programs {
                    let item_seed =
                        seed::derive_indexed(config.seed, "student.program", program_counter);
                    program_counter += 1;
                    let instance_seed = seed::derive(item_seed, "instance");
                    let inst = instantiate(template.name, instance_seed);
                    let base = LabeledProgram {
                        id: program_id.clone(),
                        problem_id: format!("p{q:02}"),
                        student_id: Some(student_id.clone()),
                        source: inst.source,
                        label: 1,
                        errors: Vec::new(),
                        split: splits[s],
                        provenance: Provenance {
                            template: template.name.to_string(),
                            instance_seed,
                            operators: Vec::new(),
                            mutation_seed: None,
                        },
                    };
                    if correct {
                        programs.push(base);
                    } else {
                        let category = category_for_mastery(m);
                        let k = 1 + match category {
                            ErrorCategory::Conceptual => rng.gen_range(0..3usize),
                            ErrorCategory::Strategic => rng.gen_range(0..2usize),
                            ErrorCategory::CompilableSyntactic => 0,
                        };
                        let mutation_seed = seed::derive(item_seed, "mutate");
                        programs.push(mutate_with_fallback(
                            &base,
                            category,
                            k,
                            mutation_seed,
                            &inst.inputs,
                        )?);
                    }
                }

                events.push(TraceEvent {
                    q,
                    a: u8::from(correct),
                    program_id,
                });
                mastery[slot].1 += config.learn_rate * (1.0 - mastery[slot].1);
                if correct {
                    break;
                }
            }
        }

        let mean_mastery: f64 =
            mastery.iter().map(|(_, m)| *m).sum::<f64>() / mastery.len() as f64;
        let noise = if config.grade_noise > 0.0 {
            Normal::new(0.0, config.grade_noise)
                .expect("positive std dev")
                .sample(&mut rng)
        } else {
            0.0
        };
        grades.push(GradeRecord {
            student_id: student_id.clone(),
            grade: (mean_mastery + noise).clamp(0.0, 1.0),
        });
        traces.push(StudentTrace {
            student_id,
            split: splits[s],
            events,
        });
    }
    Ok((traces, grades, programs))
}

/// Prefer operators of the mastery-implied category; fall back to the full
/// catalog, then to fewer errors, before giving up.
fn mutate_with_fallback(
    base: &LabeledProgram,
    category: ErrorCategory,
    k: usize,
    mutation_seed: u64,
    inputs: &[Vec<super::interp::Value>],
) -> Result<LabeledProgram, CorpusError> {
    let preferred = operators_in(category);
    let mut k_try = k;
    loop {
        match mutate(base, &preferred, k_try, mutation_seed, inputs) {
            Ok(p) => return Ok(p),
            Err(MutateError::NoApplicableSite { .. }) => {}
            Err(e) => return Err(e.into()),
        }
        match mutate(base, &OPERATOR_CATALOG, k_try, mutation_seed, inputs) {
            Ok(p) => return Ok(p),
            Err(MutateError::NoApplicableSite { .. }) if k_try > 1 => k_try -= 1,
            Err(e) => return Err(e.into()),
        }
    }
}

fn student_splits(n: usize, split: (f64, f64, f64), seed_value: u64) -> Vec<Split> {
    use rand::prelude::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, "students.split"));
    order.shuffle(&mut rng);
    let (train, val, _) = super::build::split_counts(n, split);
    let mut out = vec![Split::Train; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

/// Traces JSONL: one student per line.
pub fn traces_to_jsonl(traces: &[StudentTrace]) -> String {
    let mut out = String::new();
    for t in traces {
        out.push_str(&serde_json::to_string(t).expect("trace serialization cannot fail"));
        out.push('\n');
    }
    out
}

pub fn traces_from_jsonl(text: &str) -> Result<Vec<StudentTrace>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Grades CSV: `student_id,grade`.
pub fn grades_to_csv(grades: &[GradeRecord]) -> String {
    let mut out = String::from("student_id,grade\n");
    for g in grades {
        out.push_str(&format!("{},{}\n", g.student_id, g.grade));
    }
    out
}

pub fn grades_from_csv(text: &str) -> Result<Vec<GradeRecord>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let (id, grade) = line
            .split_once(',')
            .ok_or_else(|| format!("line {}: expected `student_id,grade`", i + 1))?;
        out.push(GradeRecord {
            student_id: id.to_string(),
            grade: grade
                .parse::<f64>()
                .map_err(|e| format!("line {}: {e}", i + 1))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats_config() -> StudentSimConfig {
        StudentSimConfig {
            emit_programs: false,
            ..StudentSimConfig::default()
        }
    }

    #[test]
    fn mastered_students_with_no_slip_always_succeed() {
        let config = StudentSimConfig {
            students: 5,
            problems: 4,
            p0_low: 1.0,
            p0_high: 1.0,
            slip: 0.0,
            guess: 0.0,
            grade_noise: 0.0,
            ..stats_config()
        };
        let (traces, grades, _) = simulate_students(&config).unwrap();
        for t in &traces {
            assert!(t.events.iter().all(|e| e.a == 1));
            assert_eq!(t.events.len(), config.problems);
        }
        for g in &grades {
            assert!((g.grade - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_guessers_always_succeed_too() {
        let config = StudentSimConfig {
            students: 5,
            problems: 3,
            p0_low: 0.0,
            p0_high: 0.0,
            guess: 1.0,
            slip: 0.0,
            ..stats_config()
        };
        let (traces, _, _) = simulate_students(&config).unwrap();
        for t in &traces {
            assert!(t.events.iter().all(|e| e.a == 1));
        }
    }

    #[test]
    fn first_attempt_success_rate_matches_the_closed_form() {
        // fixed p0, no learning, one attempt per problem:
        // P(correct) = p0(1-slip) + (1-p0)·guess = 0.55
        let config = StudentSimConfig {
            students: 2000,
            problems: 5,
            p0_low: 0.5,
            p0_high: 0.5,
            learn_rate: 0.0,
            guess: 0.2,
            slip: 0.1,
            max_attempts: 1,
            seed: 321,
            ..stats_config()
        };
        let (traces, _, _) = simulate_students(&config).unwrap();
        let (mut hits, mut total) = (0usize, 0usize);
        for t in &traces {
            for e in &t.events {
                total += 1;
                hits += e.a as usize;
            }
        }
        assert_eq!(total, 10_000);
        let p = 0.55;
        let sigma = (p * (1.0 - p) / total as f64).sqrt();
        let observed = hits as f64 / total as f64;
        assert!(
            (observed - p).abs() <= 2.0 * sigma,
            "observed {observed}, expected {p} ± {}",
            2.0 * sigma
        );
    }

    #[test]
    fn programs_match_events_and_categories_track_mastery() {
        let config = StudentSimConfig {
            students: 6,
            problems: 4,
            max_attempts: 3,
            seed: 9,
            ..StudentSimConfig::default()
        };
        let (traces, grades, programs) = simulate_students(&config).unwrap();
        assert_eq!(traces.len(), 6);
        assert_eq!(grades.len(), 6);
        let by_id: std::collections::HashMap<&str, &LabeledProgram> =
            programs.iter().map(|p| (p.id.as_str(), p)).collect();
        for t in &traces {
            for e in &t.events {
                let p = by_id[e.program_id.as_str()];
                assert_eq!(p.label, e.a, "label must match the trace outcome");
                assert_eq!(p.student_id.as_deref(), Some(t.student_id.as_str()));
                assert!(p.check_label_invariant());
            }
        }
        // every grade is in range
        for g in &grades {
            assert!((0.0..=1.0).contains(&g.grade));
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let config = StudentSimConfig {
            students: 4,
            problems: 3,
            seed: 77,
            ..StudentSimConfig::default()
        };
        let a = simulate_students(&config).unwrap();
        let b = simulate_students(&config).unwrap();
        assert_eq!(traces_to_jsonl(&a.0), traces_to_jsonl(&b.0));
        assert_eq!(grades_to_csv(&a.1), grades_to_csv(&b.1));
        assert_eq!(super::super::to_jsonl(&a.2), super::super::to_jsonl(&b.2));
    }

    #[test]
    fn grades_csv_roundtrip() {
        let grades = vec![
            GradeRecord {
                student_id: "s0001".into(),
                grade: 0.75,
            },
            GradeRecord {
                student_id: "s0002".into(),
                grade: 0.5,
            },
        ];
        let back = grades_from_csv(&grades_to_csv(&grades)).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].grade, 0.5);
    }
}
