//! Attention-to-span error localization and its scoring.
//!
//! For a program the model predicts incorrect, every subtree whose
//! attention weight clears the threshold is flagged, and nested flags are
//! grouped under their maximal flagged ancestor so a hierarchical error is
//! reported once. Flags are scored against labeled error spans: a label
//! counts as found when some flagged span covers at least half of it (a
//! flag containing the whole label always qualifies), and a flag is a true
//! positive when it matches at least one label.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::Span;
use crate::model::SannOutput;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum ErrorCategory {
    CompilableSyntactic,
    Strategic,
    Conceptual,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 3] = [
        ErrorCategory::CompilableSyntactic,
        ErrorCategory::Strategic,
        ErrorCategory::Conceptual,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCategory::CompilableSyntactic => "compilable_syntactic",
            ErrorCategory::Strategic => "strategic",
            ErrorCategory::Conceptual => "conceptual",
        }
    }
}

/// Ground-truth logical error: where it is and what kind of mistake it is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorLabel {
    pub span: Span,
    pub category: ErrorCategory,
}

/// One flagged subtree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub span: Span,
    pub weight: f64,
    pub subtree: String,
}

/// Flags nested under one maximal flagged span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagGroup {
    pub span: Span,
    pub members: Vec<Flag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub program_id: String,
    pub prob_correct: f64,
    pub threshold: f64,
    pub groups: Vec<FlagGroup>,
}

impl LocalizationReport {
    /// All flags in deterministic order (by group, then member).
    pub fn flags(&self) -> Vec<&Flag> {
        self.groups.iter().flat_map(|g| g.members.iter()).collect()
    }

    pub fn flag_count(&self) -> usize {
        self.groups.iter().map(|g| g.members.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LocalizeError {
    #[error(
        "localization is defined for programs predicted incorrect; got prob_correct = {prob:.4}"
    )]
    NotIncorrectPrediction { prob: f64 },
    #[error("nothing to evaluate: no labeled reports")]
    EmptyEvaluationSet,
}

/// Flag every subtree with attention weight at or above `threshold`.
/// Refuses programs the model predicts correct unless `force` is set
/// (kept for analysis runs).
pub fn flag(
    output: &SannOutput,
    program_id: &str,
    threshold: f64,
    force: bool,
) -> Result<LocalizationReport, LocalizeError> {
    if !force && output.prob_correct >= 0.5 {
        return Err(LocalizeError::NotIncorrectPrediction {
            prob: output.prob_correct,
        });
    }
    let mut flags: Vec<Flag> = output
        .attention
        .iter()
        .filter(|e| e.weight >= threshold)
        .map(|e| Flag {
            span: e.span,
            weight: e.weight,
            subtree: e.subtree.clone(),
        })
        .collect();
    // outermost spans first, so every container precedes its contents
    flags.sort_by(|a, b| {
        (a.span.start, std::cmp::Reverse(a.span.end))
            .cmp(&(b.span.start, std::cmp::Reverse(b.span.end)))
    });

    let mut groups: Vec<FlagGroup> = Vec::new();
    for f in flags {
        // join the most recently opened group that contains this span
        match groups.iter_mut().rev().find(|g| g.span.contains(&f.span)) {
            Some(g) => g.members.push(f),
            None => groups.push(FlagGroup {
                span: f.span,
                members: vec![f],
            }),
        }
    }
    Ok(LocalizationReport {
        program_id: program_id.to_string(),
        prob_correct: output.prob_correct,
        threshold,
        groups,
    })
}

/// `true` when `flagged` covers at least half of `label`, including full
/// containment.
pub fn spans_match(flagged: &Span, label: &Span) -> bool {
    flagged.contains(label) || 2 * flagged.overlap(label) >= label.len()
}

/// Per-label and per-flag match outcome for one program.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchMatrix {
    pub label_matched: Vec<bool>,
    pub flag_is_tp: Vec<bool>,
}

pub fn match_report(report: &LocalizationReport, labels: &[ErrorLabel]) -> MatchMatrix {
    let flags = report.flags();
    let label_matched = labels
        .iter()
        .map(|l| flags.iter().any(|f| spans_match(&f.span, &l.span)))
        .collect();
    let flag_is_tp = flags
        .iter()
        .map(|f| labels.iter().any(|l| spans_match(&f.span, &l.span)))
        .collect();
    MatchMatrix {
        label_matched,
        flag_is_tp,
    }
}

/// Aggregate localization quality over an evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationMetrics {
    pub recall: f64,
    pub precision: f64,
    /// Fraction of labeled programs with every label matched.
    pub all_errors_recall: f64,
    pub per_category_recall: BTreeMap<ErrorCategory, f64>,
    pub labels_total: usize,
    pub labels_matched: usize,
    pub flags_total: usize,
    pub flags_tp: usize,
    pub programs: usize,
    pub programs_all_matched: usize,
}

impl LocalizationMetrics {
    pub fn csv_header() -> &'static str {
        "recall,precision,all_errors_recall,recall_compilable_syntactic,recall_strategic,\
         recall_conceptual,labels_total,labels_matched,flags_total,flags_tp,programs,\
         programs_all_matched"
    }

    pub fn to_csv_row(&self) -> String {
        let cat = |c: ErrorCategory| {
            self.per_category_recall
                .get(&c)
                .map(|v| v.to_string())
                .unwrap_or_default()
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.recall,
            self.precision,
            self.all_errors_recall,
            cat(ErrorCategory::CompilableSyntactic),
            cat(ErrorCategory::Strategic),
            cat(ErrorCategory::Conceptual),
            self.labels_total,
            self.labels_matched,
            self.flags_total,
            self.flags_tp,
            self.programs,
            self.programs_all_matched,
        )
    }
}

/// Score a batch of reports against their ground-truth labels. Every entry
/// must carry at least one label. With zero flags overall, precision is
/// vacuously 1 (there are no false positives to count).
pub fn evaluate(
    items: &[(LocalizationReport, Vec<ErrorLabel>)],
) -> Result<LocalizationMetrics, LocalizeError> {
    if items.is_empty() {
        return Err(LocalizeError::EmptyEvaluationSet);
    }
    let mut labels_total = 0usize;
    let mut labels_matched = 0usize;
    let mut flags_total = 0usize;
    let mut flags_tp = 0usize;
    let mut programs_all_matched = 0usize;
    let mut cat_counts: BTreeMap<ErrorCategory, (usize, usize)> = BTreeMap::new();

    for (report, labels) in items {
        assert!(
            !labels.is_empty(),
            "evaluation items must carry ground-truth labels"
        );
        let m = match_report(report, labels);
        labels_total += labels.len();
        let matched_here = m.label_matched.iter().filter(|&&x| x).count();
        labels_matched += matched_here;
        if matched_here == labels.len() {
            programs_all_matched += 1;
        }
        flags_total += m.flag_is_tp.len();
        flags_tp += m.flag_is_tp.iter().filter(|&&x| x).count();
        for (label, &ok) in labels.iter().zip(&m.label_matched) {
            let e = cat_counts.entry(label.category).or_insert((0, 0));
            e.1 += 1;
            if ok {
                e.0 += 1;
            }
        }
    }

    let recall = labels_matched as f64 / labels_total as f64;
    let precision = if flags_total == 0 {
        1.0
    } else {
        flags_tp as f64 / flags_total as f64
    };
    let per_category_recall: BTreeMap<ErrorCategory, f64> = cat_counts
        .iter()
        .map(|(c, (m, t))| (*c, *m as f64 / *t as f64))
        .collect();

    // category recalls weighted by category counts must reproduce the
    // overall recall exactly
    let weighted: f64 = cat_counts.values().map(|(m, _)| *m as f64).sum::<f64>() / labels_total as f64;
    debug_assert!((weighted - recall).abs() < 1e-12);

    Ok(LocalizationMetrics {
        recall,
        precision,
        all_errors_recall: programs_all_matched as f64 / items.len() as f64,
        per_category_recall,
        labels_total,
        labels_matched,
        flags_total,
        flags_tp,
        programs: items.len(),
        programs_all_matched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AttnEntry;
    use crate::nn::Tensor;

    fn output(entries: Vec<(f64, (usize, usize))>, prob: f64) -> SannOutput {
        SannOutput {
            prob_correct: prob,
            code_vector: Tensor::zeros(&[2]),
            attention: entries
                .into_iter()
                .enumerate()
                .map(|(i, (w, (s, e)))| AttnEntry {
                    index: i,
                    weight: w,
                    span: Span::new(s, e),
                    subtree: format!("(S{i})"),
                })
                .collect(),
        }
    }

    #[test]
    fn predicted_correct_programs_are_refused_unless_forced() {
        let out = output(vec![(0.9, (0, 10))], 0.8);
        assert!(matches!(
            flag(&out, "p1", 0.2, false),
            Err(LocalizeError::NotIncorrectPrediction { .. })
        ));
        assert!(flag(&out, "p1", 0.2, true).is_ok());
    }

    #[test]
    fn threshold_is_a_strict_cutoff() {
        let out = output(vec![(0.19, (0, 10)), (0.19, (2, 5))], 0.1);
        let report = flag(&out, "p1", 0.2, false).unwrap();
        assert_eq!(report.flag_count(), 0);
        // exactly at the threshold stays in
        let out2 = output(vec![(0.2, (0, 10))], 0.1);
        assert_eq!(flag(&out2, "p1", 0.2, false).unwrap().flag_count(), 1);
    }

    #[test]
    fn nested_flags_group_under_the_if_span() {
        // an If subtree at [10,40) and its condition BinaryOp at [14,21)
        let out = output(vec![(0.9, (10, 40)), (0.85, (14, 21))], 0.2);
        let report = flag(&out, "p1", 0.2, false).unwrap();
        assert_eq!(report.groups.len(), 1);
        assert_eq!(report.groups[0].span, Span::new(10, 40));
        assert_eq!(report.groups[0].members.len(), 2);
    }

    /// Independent O(n²) grouping oracle: heads are flags contained in no
    /// earlier-sorted flag; members attach to the latest head containing
    /// them.
    fn brute_force_groups(mut flags: Vec<Span>) -> Vec<(Span, Vec<Span>)> {
        flags.sort_by(|a, b| {
            (a.start, std::cmp::Reverse(a.end)).cmp(&(b.start, std::cmp::Reverse(b.end)))
        });
        let mut heads: Vec<Span> = Vec::new();
        for (i, f) in flags.iter().enumerate() {
            let contained = flags[..i].iter().any(|g| g.contains(f));
            if !contained {
                heads.push(*f);
            }
        }
        let mut groups: Vec<(Span, Vec<Span>)> = heads.iter().map(|h| (*h, vec![])).collect();
        for f in &flags {
            let head = groups
                .iter_mut()
                .rev()
                .find(|(h, _)| h.contains(f))
                .expect("every flag has a head");
            head.1.push(*f);
        }
        groups
    }

    #[test]
    fn grouping_matches_brute_force_oracle_on_random_reports() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(40);
        for _ in 0..200 {
            let n = rng.gen_range(1..12);
            let entries: Vec<(f64, (usize, usize))> = (0..n)
                .map(|_| {
                    let s = rng.gen_range(0..50usize);
                    let e = s + rng.gen_range(1..30usize);
                    (rng.gen_range(0.2..1.0), (s, e))
                })
                .collect();
            let spans: Vec<Span> = entries
                .iter()
                .map(|(_, (s, e))| Span::new(*s, *e))
                .collect();
            let report = flag(&output(entries, 0.1), "p", 0.2, false).unwrap();
            let got: Vec<(Span, Vec<Span>)> = report
                .groups
                .iter()
                .map(|g| (g.span, g.members.iter().map(|m| m.span).collect()))
                .collect();
            assert_eq!(got, brute_force_groups(spans));
        }
    }

    #[test]
    fn raising_the_threshold_never_adds_flags() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let n = rng.gen_range(1..10);
            let entries: Vec<(f64, (usize, usize))> = (0..n)
                .map(|_| {
                    let s = rng.gen_range(0..40usize);
                    (rng.gen_range(0.0..1.0), (s, s + rng.gen_range(1..20usize)))
                })
                .collect();
            let out = output(entries, 0.1);
            let lo = flag(&out, "p", 0.15, false).unwrap();
            let hi = flag(&out, "p", 0.55, false).unwrap();
            let lo_spans: Vec<(Span, String)> = lo
                .flags()
                .iter()
                .map(|f| (f.span, f.subtree.clone()))
                .collect();
            for f in hi.flags() {
                assert!(lo_spans.contains(&(f.span, f.subtree.clone())));
            }
            assert!(hi.flag_count() <= lo.flag_count());
        }
    }

    fn lbl(s: usize, e: usize, category: ErrorCategory) -> ErrorLabel {
        ErrorLabel {
            span: Span::new(s, e),
            category,
        }
    }

    #[test]
    fn span_match_rule() {
        // identical spans match
        assert!(spans_match(&Span::new(3, 9), &Span::new(3, 9)));
        // a whole-method flag contains a 5-byte label
        assert!(spans_match(&Span::new(0, 100), &Span::new(40, 45)));
        // 40% overlap without containment does not match:
        // label [0,10), flag [6,20) overlap 4 < 5
        assert!(!spans_match(&Span::new(6, 20), &Span::new(0, 10)));
        // exactly half does
        assert!(spans_match(&Span::new(5, 20), &Span::new(0, 10)));
    }

    fn report_with_flags(spans: Vec<(usize, usize)>) -> LocalizationReport {
        let entries = spans.into_iter().map(|s| (0.9, s)).collect();
        flag(&output(entries, 0.1), "p", 0.2, false).unwrap()
    }

    #[test]
    fn perfect_localization_scores_one() {
        let report = report_with_flags(vec![(0, 10), (20, 30)]);
        let labels = vec![
            lbl(0, 10, ErrorCategory::Strategic),
            lbl(20, 30, ErrorCategory::Conceptual),
        ];
        let m = evaluate(&[(report, labels)]).unwrap();
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.all_errors_recall, 1.0);
    }

    #[test]
    fn hand_counted_recall_and_precision() {
        // 2 labels, 1 matched; 3 flags, 1 true positive
        let report = report_with_flags(vec![(0, 10), (40, 45), (60, 70)]);
        let labels = vec![
            lbl(0, 10, ErrorCategory::Strategic),
            lbl(90, 99, ErrorCategory::Conceptual),
        ];
        let m = evaluate(&[(report, labels)]).unwrap();
        assert_eq!(m.recall, 0.5);
        assert!((m.precision - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.all_errors_recall, 0.0);
    }

    #[test]
    fn missing_one_of_three_labels_fails_the_program() {
        let report = report_with_flags(vec![(0, 10), (20, 30)]);
        let labels = vec![
            lbl(0, 10, ErrorCategory::Strategic),
            lbl(20, 30, ErrorCategory::Strategic),
            lbl(50, 60, ErrorCategory::Conceptual),
        ];
        let m = evaluate(&[(report, labels)]).unwrap();
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.programs_all_matched, 0);
    }

    #[test]
    fn category_recalls_weighted_by_counts_reproduce_overall_recall() {
        let items = vec![
            (
                report_with_flags(vec![(0, 10)]),
                vec![
                    lbl(0, 10, ErrorCategory::CompilableSyntactic),
                    lbl(30, 40, ErrorCategory::Strategic),
                ],
            ),
            (
                report_with_flags(vec![(18, 29), (50, 61)]),
                vec![
                    lbl(20, 28, ErrorCategory::Strategic),
                    lbl(52, 60, ErrorCategory::Conceptual),
                    lbl(80, 90, ErrorCategory::Conceptual),
                ],
            ),
        ];
        let m = evaluate(&items).unwrap();
        let mut weighted = 0.0;
        let counts = [
            (ErrorCategory::CompilableSyntactic, 1.0),
            (ErrorCategory::Strategic, 2.0),
            (ErrorCategory::Conceptual, 2.0),
        ];
        for (c, n) in counts {
            weighted += m.per_category_recall[&c] * n;
        }
        weighted /= m.labels_total as f64;
        assert!((weighted - m.recall).abs() < 1e-12);
    }

    #[test]
    fn empty_evaluation_set_is_an_error() {
        assert!(matches!(
            evaluate(&[]),
            Err(LocalizeError::EmptyEvaluationSet)
        ));
    }
}
