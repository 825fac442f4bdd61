//! Retrieval and annotation metrics: mean average precision over Hamming
//! ranking, precision-recall over lookup radii, and overall
//! precision/recall/F1 for top-k annotation.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::objective::LabelMatrix;
use crate::retrieval::{hamming, PackedCodeSet};
use crate::tensor::Tensor;

/// Ground-truth relevance: a database item is relevant to a query iff their
/// label sets share at least one category. Lookup is by instance id.
pub struct RelevanceRule<'a> {
    query_labels: &'a LabelMatrix,
    database_labels: &'a LabelMatrix,
    query_rows: HashMap<u64, usize>,
    database_rows: HashMap<u64, usize>,
}

impl<'a> RelevanceRule<'a> {
    pub fn new(
        query_ids: &[u64],
        query_labels: &'a LabelMatrix,
        database_ids: &[u64],
        database_labels: &'a LabelMatrix,
    ) -> Result<Self> {
        if query_labels.categories() != database_labels.categories() {
            return Err(Error::Dimension {
                op: "relevance_rule",
                detail: format!(
                    "query labels cover {} categories, database {}",
                    query_labels.categories(),
                    database_labels.categories()
                ),
            });
        }
        let index = |ids: &[u64], rows: usize, what: &str| -> Result<HashMap<u64, usize>> {
            if ids.len() != rows {
                return Err(Error::Dimension {
                    op: "relevance_rule",
                    detail: format!("{} ids for {rows} {what} label rows", ids.len()),
                });
            }
            let mut map = HashMap::with_capacity(ids.len());
            for (row, &id) in ids.iter().enumerate() {
                if map.insert(id, row).is_some() {
                    return Err(Error::DuplicateId(id));
                }
            }
            Ok(map)
        };
        Ok(Self {
            query_labels,
            database_labels,
            query_rows: index(query_ids, query_labels.n(), "query")?,
            database_rows: index(database_ids, database_labels.n(), "database")?,
        })
    }

    pub fn database_len(&self) -> usize {
        self.database_rows.len()
    }

    /// Panics on unknown ids: metric inputs are built from the same id
    /// lists, so a miss is a wiring bug, not a data condition.
    pub fn relevant(&self, query_id: u64, item_id: u64) -> bool {
        let q = *self.query_rows.get(&query_id).unwrap_or_else(|| {
            panic!("query id {query_id} not covered by the relevance rule")
        });
        let d = *self.database_rows.get(&item_id).unwrap_or_else(|| {
            panic!("database id {item_id} not covered by the relevance rule")
        });
        self.query_labels.shares_label_with(q, self.database_labels, d)
    }

    pub fn relevant_count(&self, query_id: u64) -> usize {
        self.database_rows.keys().filter(|&&id| self.relevant(query_id, id)).count()
    }
}

/// AP = (1/R) Σ over relevant hits at rank r of (hits_so_far / r); 0 when
/// the query has no relevant items. The ranked list must cover the whole
/// database so R can be counted from it.
pub fn average_precision(ranked_ids: &[u64], rule: &RelevanceRule, query_id: u64) -> Result<f64> {
    if ranked_ids.len() != rule.database_len() {
        return Err(Error::Argument(format!(
            "ranking covers {} of {} database items",
            ranked_ids.len(),
            rule.database_len()
        )));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &id) in ranked_ids.iter().enumerate() {
        if rule.relevant(query_id, id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        return Ok(0.0);
    }
    Ok(sum / hits as f64)
}

/// Mean AP over all queries, each ranked against the full database with
/// the (distance, id) tie rule.
pub fn mean_average_precision(
    queries: &PackedCodeSet,
    database: &PackedCodeSet,
    rule: &RelevanceRule,
) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Argument("mean AP needs at least one query".into()));
    }
    let mut sum = 0.0;
    for (i, &query_id) in queries.ids().iter().enumerate() {
        let ranked = database.rank(queries.row(i), database.len().max(1))?;
        let ids: Vec<u64> = ranked.iter().map(|h| h.id).collect();
        sum += average_precision(&ids, rule, query_id)?;
    }
    Ok(sum / queries.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrPoint {
    pub radius: u32,
    /// Macro-averaged over queries that retrieved at least one item;
    /// meaningless when `defined` is false.
    pub precision: f64,
    /// Macro-averaged over queries with at least one relevant item.
    pub recall: f64,
    pub defined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    /// One row per radius: `radius,precision,recall,defined`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("radius,precision,recall,defined\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.radius,
                p.precision,
                p.recall,
                if p.defined { 1 } else { 0 }
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Hash-lookup precision/recall at every radius 0..=D, macro-averaged.
/// Computed from per-query distance histograms so each code pair is
/// compared once.
pub fn pr_curve(
    queries: &PackedCodeSet,
    database: &PackedCodeSet,
    rule: &RelevanceRule,
) -> Result<PrCurve> {
    if queries.is_empty() {
        return Err(Error::Argument("precision-recall needs at least one query".into()));
    }
    let bits = queries.code_bits();
    if bits != database.code_bits() {
        return Err(Error::Dimension {
            op: "pr_curve",
            detail: format!("query codes have {bits} bits, database {}", database.code_bits()),
        });
    }
    let radii = bits + 1;
    // Per query: cumulative retrieved / relevant-retrieved over radii.
    let mut precision_sum = vec![0.0; radii];
    let mut precision_n = vec![0usize; radii];
    let mut recall_sum = vec![0.0; radii];
    let mut recall_n = 0usize;
    for (qi, &query_id) in queries.ids().iter().enumerate() {
        let mut retrieved_at = vec![0usize; radii];
        let mut relevant_at = vec![0usize; radii];
        for (di, &item_id) in database.ids().iter().enumerate() {
            let d = hamming(queries.row(qi), database.row(di))? as usize;
            retrieved_at[d] += 1;
            if rule.relevant(query_id, item_id) {
                relevant_at[d] += 1;
            }
        }
        let total_relevant: usize = relevant_at.iter().sum();
        if total_relevant > 0 {
            recall_n += 1;
        }
        let mut retrieved = 0usize;
        let mut relevant = 0usize;
        for r in 0..radii {
            retrieved += retrieved_at[r];
            relevant += relevant_at[r];
            if retrieved > 0 {
                precision_sum[r] += relevant as f64 / retrieved as f64;
                precision_n[r] += 1;
            }
            if total_relevant > 0 {
                recall_sum[r] += relevant as f64 / total_relevant as f64;
            }
        }
    }
    let points = (0..radii)
        .map(|r| PrPoint {
            radius: r as u32,
            precision: if precision_n[r] > 0 { precision_sum[r] / precision_n[r] as f64 } else { 0.0 },
            recall: if recall_n > 0 { recall_sum[r] / recall_n as f64 } else { 0.0 },
            defined: precision_n[r] > 0,
        })
        .collect();
    Ok(PrCurve { points })
}

/// Categories of the k largest logits per row, ties broken by ascending
/// category id.
pub fn annotate_topk(logits: &Tensor, k: usize) -> Result<Vec<Vec<usize>>> {
    let categories = logits.cols();
    if k > categories {
        return Err(Error::Argument(format!(
            "cannot pick top {k} of {categories} categories"
        )));
    }
    let mut out = Vec::with_capacity(logits.rows());
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let mut order: Vec<usize> = (0..categories).collect();
        order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
        order.truncate(k);
        out.push(order);
    }
    Ok(out)
}

/// Overall precision/recall/F1 pooled over all instances: O-P = correct /
/// predicted, O-R = correct / ground truth, O-F1 their harmonic mean (0
/// when both are 0).
pub fn overall_prf(predictions: &[Vec<usize>], truth: &LabelMatrix) -> Result<(f64, f64, f64)> {
    if predictions.len() != truth.n() {
        return Err(Error::Dimension {
            op: "overall_prf",
            detail: format!("{} prediction rows for {} instances", predictions.len(), truth.n()),
        });
    }
    let k = predictions.first().map_or(0, |p| p.len());
    let mut correct = 0usize;
    let mut ground = 0usize;
    for (i, preds) in predictions.iter().enumerate() {
        if preds.len() != k {
            return Err(Error::Argument(format!(
                "instance {i} has {} predictions, expected {k}",
                preds.len()
            )));
        }
        for &c in preds {
            if c >= truth.categories() {
                return Err(Error::Argument(format!("predicted category {c} out of range")));
            }
            if truth.contains(i, c) {
                correct += 1;
            }
        }
        ground += truth.count(i);
    }
    let predicted = k * predictions.len();
    let p = if predicted == 0 { 0.0 } else { correct as f64 / predicted as f64 };
    let r = if ground == 0 { 0.0 } else { correct as f64 / ground as f64 };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Ok((p, r, f1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::BitMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pack_rows(rows: &[&[bool]], ids: &[u64]) -> PackedCodeSet {
        let mut bits = BitMatrix::new(rows.len(), rows[0].len());
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                bits.set(i, j, v);
            }
        }
        PackedCodeSet::pack(&bits, ids).unwrap()
    }

    fn random_code_set(n: usize, bits: usize, rng: &mut ChaCha8Rng, first_id: u64) -> PackedCodeSet {
        let mut m = BitMatrix::new(n, bits);
        for i in 0..n {
            for j in 0..bits {
                m.set(i, j, rng.gen::<bool>());
            }
        }
        let ids: Vec<u64> = (first_id..first_id + n as u64).collect();
        PackedCodeSet::pack(&m, &ids).unwrap()
    }

    fn random_labels(n: usize, categories: usize, rng: &mut ChaCha8Rng) -> LabelMatrix {
        let rows: Vec<Vec<usize>> = (0..n)
            .map(|_| {
                let mut labels: Vec<usize> =
                    (0..categories).filter(|_| rng.gen_bool(0.3)).collect();
                if labels.is_empty() {
                    labels.push(rng.gen_range(0..categories));
                }
                labels
            })
            .collect();
        LabelMatrix::from_rows(categories, &rows).unwrap()
    }

    #[test]
    fn ap_matches_hand_enumeration() {
        // Relevant at ranks 1 and 3 of 4: AP = (1/1 + 2/3) / 2 = 5/6.
        let query_labels = LabelMatrix::from_rows(2, &[vec![0]]).unwrap();
        let db_labels =
            LabelMatrix::from_rows(2, &[vec![0], vec![1], vec![0], vec![1]]).unwrap();
        let rule = RelevanceRule::new(&[9], &query_labels, &[0, 1, 2, 3], &db_labels).unwrap();
        let ap = average_precision(&[0, 1, 2, 3], &rule, 9).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn ap_is_one_when_relevant_lead_and_zero_without_relevant() {
        let query_labels = LabelMatrix::from_rows(2, &[vec![0], vec![1]]).unwrap();
        let db_labels = LabelMatrix::from_rows(2, &[vec![0], vec![0], vec![0]]).unwrap();
        let rule =
            RelevanceRule::new(&[10, 11], &query_labels, &[0, 1, 2], &db_labels).unwrap();
        assert_eq!(average_precision(&[0, 1, 2], &rule, 10).unwrap(), 1.0);
        assert_eq!(average_precision(&[0, 1, 2], &rule, 11).unwrap(), 0.0);
    }

    #[test]
    fn ap_requires_full_coverage() {
        let query_labels = LabelMatrix::from_rows(2, &[vec![0]]).unwrap();
        let db_labels = LabelMatrix::from_rows(2, &[vec![0], vec![1]]).unwrap();
        let rule = RelevanceRule::new(&[9], &query_labels, &[0, 1], &db_labels).unwrap();
        assert!(matches!(average_precision(&[0], &rule, 9), Err(Error::Argument(_))));
    }

    #[test]
    fn map_is_one_for_self_retrieval_with_unique_codes() {
        let t = true;
        let f = false;
        let codes = pack_rows(&[&[t, f, f, f], &[f, t, f, f], &[f, f, t, f]], &[0, 1, 2]);
        let labels = LabelMatrix::from_rows(3, &[vec![0], vec![1], vec![2]]).unwrap();
        let rule = RelevanceRule::new(&[0, 1, 2], &labels, &[0, 1, 2], &labels).unwrap();
        let map = mean_average_precision(&codes, &codes, &rule).unwrap();
        assert_eq!(map, 1.0);
    }

    // Independent oracle: recompute mAP from the unpacked bit rows with a
    // separate distance count and an explicit (distance, id) sort.
    #[test]
    fn map_matches_independent_oracle_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let queries = random_code_set(50, 12, &mut rng, 1000);
        let database = random_code_set(80, 12, &mut rng, 2000);
        let qlabels = random_labels(50, 5, &mut rng);
        let dlabels = random_labels(80, 5, &mut rng);
        let rule =
            RelevanceRule::new(queries.ids(), &qlabels, database.ids(), &dlabels).unwrap();
        let map = mean_average_precision(&queries, &database, &rule).unwrap();

        let qbits = queries.unpack();
        let dbits = database.unpack();
        let mut ap_sum = 0.0;
        for q in 0..50 {
            let mut scored: Vec<(usize, u64, usize)> = (0..80)
                .map(|d| {
                    let dist = (0..12).filter(|&j| qbits.get(q, j) != dbits.get(d, j)).count();
                    (dist, database.ids()[d], d)
                })
                .collect();
            scored.sort_by_key(|&(dist, id, _)| (dist, id));
            let mut hits = 0usize;
            let mut sum = 0.0;
            for (rank, &(_, _, d)) in scored.iter().enumerate() {
                if qlabels.shares_label_with(q, &dlabels, d) {
                    hits += 1;
                    sum += hits as f64 / (rank + 1) as f64;
                }
            }
            if hits > 0 {
                ap_sum += sum / hits as f64;
            }
        }
        let oracle = ap_sum / 50.0;
        assert!((map - oracle).abs() < 1e-12, "map {map} vs oracle {oracle}");
    }

    #[test]
    fn map_rejects_empty_query_set() {
        let t = true;
        let codes = pack_rows(&[&[t]], &[0]);
        let labels = LabelMatrix::from_rows(1, &[vec![0]]).unwrap();
        let rule = RelevanceRule::new(&[0], &labels, &[0], &labels).unwrap();
        let empty = PackedCodeSet::from_parts(1, vec![], vec![]).unwrap();
        assert!(matches!(
            mean_average_precision(&empty, &codes, &rule),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn pr_curve_matches_hand_enumeration() {
        let t = true;
        let f = false;
        let queries = pack_rows(&[&[f, f]], &[100]);
        let database = pack_rows(&[&[f, f], &[f, t], &[t, t]], &[0, 1, 2]);
        let qlabels = LabelMatrix::from_rows(2, &[vec![0]]).unwrap();
        let dlabels = LabelMatrix::from_rows(2, &[vec![0], vec![1], vec![0]]).unwrap();
        let rule = RelevanceRule::new(&[100], &qlabels, &[0, 1, 2], &dlabels).unwrap();
        let curve = pr_curve(&queries, &database, &rule).unwrap();
        assert_eq!(curve.points.len(), 3);
        // radius 0: {id0} retrieved, relevant -> P=1, R=1/2.
        assert_eq!(curve.points[0].precision, 1.0);
        assert_eq!(curve.points[0].recall, 0.5);
        assert!(curve.points[0].defined);
        // radius 1: {id0, id1} -> P=1/2, R=1/2.
        assert_eq!(curve.points[1].precision, 0.5);
        assert_eq!(curve.points[1].recall, 0.5);
        // radius 2: everything -> P=2/3, R=1.
        assert!((curve.points[2].precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(curve.points[2].recall, 1.0);
    }

    #[test]
    fn pr_marks_empty_radii_undefined() {
        let t = true;
        let f = false;
        let queries = pack_rows(&[&[f, f]], &[100]);
        let database = pack_rows(&[&[t, t]], &[0]);
        let labels = LabelMatrix::from_rows(1, &[vec![0]]).unwrap();
        let rule = RelevanceRule::new(&[100], &labels, &[0], &labels).unwrap();
        let curve = pr_curve(&queries, &database, &rule).unwrap();
        assert!(!curve.points[0].defined);
        assert!(!curve.points[1].defined);
        assert!(curve.points[2].defined);
        assert_eq!(curve.points[2].precision, 1.0);
        assert_eq!(curve.points[2].recall, 1.0);
    }

    #[test]
    fn pr_recall_is_monotone_and_reaches_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let queries = random_code_set(20, 8, &mut rng, 0);
        let database = random_code_set(40, 8, &mut rng, 100);
        // One shared category guarantees every query has relevant items.
        let qlabels = LabelMatrix::from_rows(3, &vec![vec![0]; 20]).unwrap();
        let dlabels = random_labels(40, 3, &mut rng);
        let rule =
            RelevanceRule::new(queries.ids(), &qlabels, database.ids(), &dlabels).unwrap();
        let curve = pr_curve(&queries, &database, &rule).unwrap();
        let has_relevant = (0..40).any(|d| dlabels.contains(d, 0));
        assert!(has_relevant);
        for w in curve.points.windows(2) {
            assert!(w[1].recall >= w[0].recall - 1e-15);
        }
        assert!((curve.points[8].recall - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pr_csv_has_one_row_per_radius() {
        let t = true;
        let queries = pack_rows(&[&[t, t]], &[0]);
        let labels = LabelMatrix::from_rows(1, &[vec![0]]).unwrap();
        let rule = RelevanceRule::new(&[0], &labels, &[0], &labels).unwrap();
        let curve = pr_curve(&queries, &queries, &rule).unwrap();
        let csv = curve.to_csv();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines[0], "radius,precision,recall,defined");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0,1,1,1");
    }

    #[test]
    fn topk_orders_by_logit_then_category() {
        let logits = Tensor::new(vec![2, 4], vec![0.1, 0.9, 0.9, 0.2, 3.0, 2.0, 1.0, 0.0]).unwrap();
        let picks = annotate_topk(&logits, 2).unwrap();
        assert_eq!(picks[0], vec![1, 2]);
        assert_eq!(picks[1], vec![0, 1]);
        let all = annotate_topk(&logits, 4).unwrap();
        assert_eq!(all[0], vec![1, 2, 3, 0]);
        assert!(matches!(annotate_topk(&logits, 5), Err(Error::Argument(_))));
    }

    #[test]
    fn prf_matches_formula_oracle() {
        // 2 instances, k=3: instance 0 gets all 3 of its labels right,
        // instance 1 gets 1 of 2. N_CP=4, N_P=6, N_G=5.
        let truth = LabelMatrix::from_rows(5, &[vec![0, 1, 2], vec![3, 4]]).unwrap();
        let preds = vec![vec![0, 1, 2], vec![3, 0, 1]];
        let (p, r, f1) = overall_prf(&preds, &truth).unwrap();
        assert!((p - 4.0 / 6.0).abs() < 1e-15);
        assert!((r - 4.0 / 5.0).abs() < 1e-15);
        assert!((f1 - 16.0 / 22.0).abs() < 1e-15);
    }

    #[test]
    fn prf_perfect_and_zero_cases() {
        let truth = LabelMatrix::from_rows(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let (p, r, f1) = overall_prf(&[vec![0, 1], vec![2, 3]], &truth).unwrap();
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0));
        let (p, r, f1) = overall_prf(&[vec![2, 3], vec![0, 1]], &truth).unwrap();
        assert_eq!((p, r, f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn prf_is_a_harmonic_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let truth = random_labels(10, 6, &mut rng);
            let preds: Vec<Vec<usize>> = (0..10)
                .map(|_| {
                    let mut order: Vec<usize> = (0..6).collect();
                    order.sort_by_key(|_| rng.gen::<u32>());
                    order.truncate(3);
                    order
                })
                .collect();
            let (p, r, f1) = overall_prf(&preds, &truth).unwrap();
            assert!(f1 <= 2.0 * p + 1e-15);
            assert!(f1 <= 2.0 * r + 1e-15);
            if (p - r).abs() < 1e-15 && p > 0.0 {
                assert!((f1 - p).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn prf_rejects_ragged_predictions() {
        let truth = LabelMatrix::from_rows(3, &[vec![0], vec![1], vec![2]]).unwrap();
        let err = overall_prf(&[vec![0], vec![1, 2], vec![0]], &truth).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
        let err = overall_prf(&[vec![0], vec![9], vec![0]], &truth).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }
}
