//! Answer quality metrics: claim-level factual correctness, embedding
//! cosine similarity, and their weighted combination. Similarity is NOT
//! clipped to [0, 1] before weighting, so the combined score can dip
//! below zero for adversarially dissimilar answers.

use log::warn;
use serde::Serialize;

use crate::encoder::TextEncoder;
use crate::error::Result;
use crate::gateway::{bindings, schema, LlmGateway, TemplateName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct JudgedClaims {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccResult {
    pub fc: f64,
    pub ss: f64,
    pub acc: f64,
    pub alpha: f64,
}

/// F1-style claim agreement: 2tp / (2tp + fp + fn). All-zero counts mean
/// no claims were extracted at all; that degenerates to 0 with a warning
/// rather than dividing by zero.
pub fn factual_correctness(claims: JudgedClaims) -> f64 {
    let denom = 2 * claims.tp + claims.fp + claims.fn_;
    if denom == 0 {
        warn!("claim verification produced no claims; factual correctness defaults to 0");
        return 0.0;
    }
    (2 * claims.tp) as f64 / denom as f64
}

/// Cosine of the two encoded texts, in [-1, 1].
pub fn semantic_similarity(
    encoder: &dyn TextEncoder,
    answer: &str,
    reference: &str,
) -> Result<f64> {
    let pair = encoder.encode_batch(&[answer, reference])?;
    pair[0].cosine(&pair[1])
}

pub fn combine(fc: f64, ss: f64, alpha: f64) -> f64 {
    alpha * fc + (1.0 - alpha) * ss
}

pub fn answer_accuracy(
    encoder: &dyn TextEncoder,
    claims: JudgedClaims,
    answer: &str,
    reference: &str,
    alpha: f64,
) -> Result<AccResult> {
    let fc = factual_correctness(claims);
    let ss = semantic_similarity(encoder, answer, reference)?;
    Ok(AccResult {
        fc,
        ss,
        acc: combine(fc, ss, alpha),
        alpha,
    })
}

/// One claim-verification call: the model compares the answer against
/// the reference and reports agreeing, unsupported, and missing claim
/// counts. Malformed counts are an error after the single repair re-ask.
pub fn judge_claims(gateway: &LlmGateway, question: &str, answer: &str, reference: &str) -> Result<JudgedClaims> {
    let (counts, _) = gateway.complete_parsed(
        TemplateName::ClaimVerify,
        &bindings(&[
            ("question", question),
            ("answer", answer),
            ("reference", reference),
        ]),
        schema::parse_claim_counts,
    )?;
    Ok(JudgedClaims {
        tp: counts.tp,
        fp: counts.fp,
        fn_: counts.fn_,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryEvaluation {
    pub query: String,
    pub claims: JudgedClaims,
    pub result: AccResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub per_query: Vec<QueryEvaluation>,
    pub mean_fc: f64,
    pub mean_ss: f64,
    pub mean_acc: f64,
}

impl EvaluationReport {
    pub fn from_rows(per_query: Vec<QueryEvaluation>) -> EvaluationReport {
        let n = per_query.len().max(1) as f64;
        let mean = |f: fn(&QueryEvaluation) -> f64| per_query.iter().map(f).sum::<f64>() / n;
        EvaluationReport {
            mean_fc: mean(|q| q.result.fc),
            mean_ss: mean(|q| q.result.ss),
            mean_acc: mean(|q| q.result.acc),
            per_query,
        }
    }

    /// Plain-text summary table, one row per query plus an aggregate row.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<40} {:>8} {:>8} {:>8}\n",
            "query", "fc", "ss", "acc"
        ));
        for row in &self.per_query {
            let mut q = row.query.clone();
            if q.chars().count() > 38 {
                q = q.chars().take(37).collect::<String>() + "…";
            }
            out.push_str(&format!(
                "{:<40} {:>8.4} {:>8.4} {:>8.4}\n",
                q, row.result.fc, row.result.ss, row.result.acc
            ));
        }
        out.push_str(&format!(
            "{:<40} {:>8.4} {:>8.4} {:>8.4}\n",
            format!("mean over {} queries", self.per_query.len()),
            self.mean_fc,
            self.mean_ss,
            self.mean_acc
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::NgramHashEncoder;
    use crate::gateway::MockBackend;

    fn claims(tp: u64, fp: u64, fn_: u64) -> JudgedClaims {
        JudgedClaims { tp, fp, fn_ }
    }

    #[test]
    fn factual_correctness_spot_values() {
        assert!((factual_correctness(claims(2, 1, 1)) - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(factual_correctness(claims(5, 0, 0)), 1.0);
        assert_eq!(factual_correctness(claims(0, 3, 0)), 0.0);
        assert_eq!(factual_correctness(claims(0, 0, 2)), 0.0);
        assert_eq!(factual_correctness(claims(0, 0, 0)), 0.0);
    }

    #[test]
    fn factual_correctness_symmetric_in_fp_fn() {
        for tp in 0..5u64 {
            for a in 0..5u64 {
                for b in 0..5u64 {
                    assert_eq!(
                        factual_correctness(claims(tp, a, b)),
                        factual_correctness(claims(tp, b, a))
                    );
                }
            }
        }
    }

    #[test]
    fn identical_texts_have_unit_similarity() {
        let enc = NgramHashEncoder::default();
        let s = semantic_similarity(&enc, "aspirin inhibits cox-1", "aspirin inhibits cox-1")
            .unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_is_the_stated_affine_combination() {
        // Independent recomputation of the spot value.
        let fc = 2.0 * 2.0 / (2.0 * 2.0 + 1.0 + 1.0);
        let acc = combine(fc, 0.9, 0.7);
        assert!((acc - 0.73669).abs() < 1e-4);
        assert!((acc - (0.7 * (4.0 / 6.0) + 0.3 * 0.9)).abs() < 1e-15);
        assert_eq!(combine(1.0, 1.0, 0.7), 1.0);
    }

    #[test]
    fn accuracy_is_monotone_in_both_components() {
        let alphas = [0.1, 0.5, 0.7, 0.9];
        for &alpha in &alphas {
            assert!(combine(0.8, 0.5, alpha) > combine(0.6, 0.5, alpha));
            assert!(combine(0.8, 0.6, alpha) > combine(0.8, 0.4, alpha));
        }
    }

    #[test]
    fn similarity_is_not_clipped() {
        // Negative cosine must flow through to the combination untouched.
        assert!((combine(0.5, -0.4, 0.7) - (0.35 - 0.12)).abs() < 1e-15);
        assert!(combine(0.0, -1.0, 0.7) < 0.0);
    }

    #[test]
    fn judge_claims_reads_counts_from_the_gateway() {
        let mut mock = MockBackend::new();
        mock.respond_on(
            TemplateName::ClaimVerify,
            &["question", "answer"],
            bindings(&[("question", "q"), ("answer", "a")]),
            r#"{"tp": 2, "fp": 1, "fn": 1}"#,
        );
        let gw = LlmGateway::mock(mock);
        let judged = judge_claims(&gw, "q", "a", "ref").unwrap();
        assert_eq!(judged, claims(2, 1, 1));
    }

    #[test]
    fn malformed_counts_are_an_error() {
        let mut mock = MockBackend::new();
        mock.respond_on(
            TemplateName::ClaimVerify,
            &["question"],
            bindings(&[("question", "q")]),
            r#"{"tp": "lots", "fp": 0, "fn": 0}"#,
        );
        let gw = LlmGateway::mock(mock);
        assert!(judge_claims(&gw, "q", "a", "r").is_err());
    }

    #[test]
    fn report_aggregates_means() {
        let enc = NgramHashEncoder::default();
        let rows = vec![
            QueryEvaluation {
                query: "first".into(),
                claims: claims(2, 1, 1),
                result: answer_accuracy(&enc, claims(2, 1, 1), "same", "same", 0.7).unwrap(),
            },
            QueryEvaluation {
                query: "second".into(),
                claims: claims(1, 0, 0),
                result: answer_accuracy(&enc, claims(1, 0, 0), "same", "same", 0.7).unwrap(),
            },
        ];
        let report = EvaluationReport::from_rows(rows);
        let expect_fc = (4.0 / 6.0 + 1.0) / 2.0;
        assert!((report.mean_fc - expect_fc).abs() < 1e-12);
        assert!((report.mean_ss - 1.0).abs() < 1e-12);
        let table = report.summary_table();
        assert!(table.contains("mean over 2 queries"));
        assert!(table.lines().count() == 4);
    }
}
