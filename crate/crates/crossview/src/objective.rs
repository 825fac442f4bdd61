//! Loss functions: per-view multilabel classification, exact and relaxed
//! code alignment between views, and their weighted combination.

use crate::error::{Error, Result};
use crate::nn::{sigmoid, softplus};
use crate::retrieval::PackedCodeSet;
use crate::tensor::Tensor;

/// N x C multilabel indicator matrix, one u64 bitset row per instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    n: usize,
    categories: usize,
    words_per_row: usize,
    data: Vec<u64>,
}

impl LabelMatrix {
    /// Builds from per-instance category lists. Every instance must carry at
    /// least one in-range category; duplicates within a row collapse.
    pub fn from_rows(categories: usize, rows: &[Vec<usize>]) -> Result<Self> {
        if categories == 0 {
            return Err(Error::Contract("label matrix needs at least one category".into()));
        }
        let words_per_row = categories.div_ceil(64);
        let mut data = vec![0u64; rows.len() * words_per_row];
        for (i, row) in rows.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::Contract(format!("instance {i} has no labels")));
            }
            for &c in row {
                if c >= categories {
                    return Err(Error::Contract(format!(
                        "instance {i} labeled {c}, only {categories} categories"
                    )));
                }
                data[i * words_per_row + c / 64] |= 1 << (c % 64);
            }
        }
        Ok(Self { n: rows.len(), categories, words_per_row, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn contains(&self, i: usize, category: usize) -> bool {
        self.data[i * self.words_per_row + category / 64] >> (category % 64) & 1 == 1
    }

    fn row_words(&self, i: usize) -> &[u64] {
        &self.data[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    /// Sorted category list of instance `i`.
    pub fn labels_of(&self, i: usize) -> Vec<usize> {
        (0..self.categories).filter(|&c| self.contains(i, c)).collect()
    }

    pub fn count(&self, i: usize) -> usize {
        self.row_words(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// True when the two instances share at least one category.
    pub fn shares_label(&self, i: usize, j: usize) -> bool {
        self.row_words(i).iter().zip(self.row_words(j)).any(|(a, b)| a & b != 0)
    }

    /// True when row `i` of this matrix shares a category with row `j` of
    /// `other`, which must have the same category count.
    pub fn shares_label_with(&self, i: usize, other: &LabelMatrix, j: usize) -> bool {
        self.row_words(i).iter().zip(other.row_words(j)).any(|(a, b)| a & b != 0)
    }

    /// Copies the listed rows into a new matrix.
    pub fn gather(&self, rows: &[usize]) -> LabelMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.words_per_row);
        for &r in rows {
            data.extend_from_slice(self.row_words(r));
        }
        LabelMatrix {
            n: rows.len(),
            categories: self.categories,
            words_per_row: self.words_per_row,
            data,
        }
    }
}

/// Per-batch loss breakdown; `total = (1-lambda)(l_image+l_text) + lambda*j_align`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossReport {
    pub l_image: f64,
    pub l_text: f64,
    pub j_align: f64,
    pub total: f64,
    pub lambda: f64,
}

impl LossReport {
    /// Checks the defining identity to 1e-12.
    pub fn validate(&self) -> Result<()> {
        let expect = (1.0 - self.lambda) * (self.l_image + self.l_text) + self.lambda * self.j_align;
        if (self.total - expect).abs() > 1e-12 {
            return Err(Error::Contract(format!(
                "loss report total {} does not match components ({expect})",
                self.total
            )));
        }
        Ok(())
    }
}

/// Mean-over-batch multilabel binary cross-entropy with per-category sums.
///
/// Positive labels push their logit up (standard convention). Returns the
/// loss and dL/dlogits = (sigmoid(x) - y) / B.
pub fn multilabel_bce(logits: &Tensor, labels: &LabelMatrix) -> Result<(f64, Tensor)> {
    let (b, c) = (logits.rows(), logits.cols());
    if b != labels.n() || c != labels.categories() {
        return Err(Error::Dimension {
            op: "multilabel_bce",
            detail: format!("logits {:?} vs labels {}x{}", logits.shape(), labels.n(), labels.categories()),
        });
    }
    let bn = b as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; b * c];
    for i in 0..b {
        for (p, &x) in logits.row(i).iter().enumerate() {
            let y = if labels.contains(i, p) { 1.0 } else { 0.0 };
            // y*softplus(-x) + (1-y)*softplus(x), stable at any |x|.
            loss += y * softplus(-x) + (1.0 - y) * softplus(x);
            grad[i * c + p] = (sigmoid(x) - y) / bn;
        }
    }
    Ok((loss / bn, Tensor::new(vec![b, c], grad)?))
}

/// Relaxed per-pair code disagreement over continuous codes in [0,1]:
/// `J = (1/(B*D)) * sum(z_i*(1-z_t) + (1-z_i)*z_t)`.
///
/// Returns J with its gradients to both inputs; J is symmetric in them.
pub fn alignment_relaxed(z_image: &Tensor, z_text: &Tensor) -> Result<(f64, Tensor, Tensor)> {
    if z_image.shape() != z_text.shape() || z_image.shape().len() != 2 {
        return Err(Error::Dimension {
            op: "alignment_relaxed",
            detail: format!("{:?} vs {:?}", z_image.shape(), z_text.shape()),
        });
    }
    for (which, z) in [("image", z_image), ("text", z_text)] {
        if z.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Contract(format!("{which} codes stray outside [0, 1]")));
        }
    }
    let denom = (z_image.rows() * z_image.cols()) as f64;
    let mut j = 0.0;
    let mut d_image = vec![0.0; z_image.len()];
    let mut d_text = vec![0.0; z_text.len()];
    for (k, (&zi, &zt)) in z_image.data().iter().zip(z_text.data()).enumerate() {
        j += zi * (1.0 - zt) + (1.0 - zi) * zt;
        d_image[k] = (1.0 - 2.0 * zt) / denom;
        d_text[k] = (1.0 - 2.0 * zi) / denom;
    }
    Ok((
        j / denom,
        Tensor::new(z_image.shape().to_vec(), d_image)?,
        Tensor::new(z_text.shape().to_vec(), d_text)?,
    ))
}

/// Mean per-bit Hamming disagreement between two positionally paired code
/// sets: `(1/(N*D)) * sum popcount(row_i XOR row_t)`.
pub fn alignment_exact(image: &PackedCodeSet, text: &PackedCodeSet) -> Result<f64> {
    if image.len() != text.len() || image.code_bits() != text.code_bits() {
        return Err(Error::Dimension {
            op: "alignment_exact",
            detail: format!(
                "{}x{} vs {}x{} codes",
                image.len(),
                image.code_bits(),
                text.len(),
                text.code_bits()
            ),
        });
    }
    let mut disagree = 0u64;
    for r in 0..image.len() {
        disagree += crate::retrieval::hamming(image.row(r), text.row(r))? as u64;
    }
    Ok(disagree as f64 / (image.len() * image.code_bits()) as f64)
}

/// Combines per-view classification losses with the alignment term:
/// `total = (1-lambda)*(l_image + l_text) + lambda*j_align`, lambda in (0, 1].
pub fn total_loss(l_image: f64, l_text: f64, j_align: f64, lambda: f64) -> Result<LossReport> {
    check_lambda(lambda)?;
    Ok(LossReport {
        l_image,
        l_text,
        j_align,
        total: (1.0 - lambda) * (l_image + l_text) + lambda * j_align,
        lambda,
    })
}

pub fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Config(format!("lambda must lie in (0, 1], got {lambda}")));
    }
    Ok(())
}

/// m-view combination: `(1-lambda)*sum(losses) + lambda*sum_{i<j} aligns[i][j]`,
/// counting each unordered view pair once.
///
/// `aligns` is an m x m matrix that must be exactly symmetric with a zero
/// diagonal (the relaxed alignment is exactly symmetric in its inputs).
pub fn multiview_total(losses: &[f64], aligns: &Tensor, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let m = losses.len();
    if m < 2 {
        return Err(Error::Argument(format!("multiview total needs >= 2 views, got {m}")));
    }
    if aligns.shape() != [m, m] {
        return Err(Error::Dimension {
            op: "multiview_total",
            detail: format!("alignment matrix {:?} for {m} views", aligns.shape()),
        });
    }
    for i in 0..m {
        if aligns.at2(i, i) != 0.0 {
            return Err(Error::Contract(format!("alignment of view {i} with itself must be 0")));
        }
        for j in 0..i {
            if aligns.at2(i, j) != aligns.at2(j, i) {
                return Err(Error::Contract(format!("alignment matrix asymmetric at ({i}, {j})")));
            }
        }
    }
    let class_sum: f64 = losses.iter().sum();
    let mut align_sum = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            align_sum += aligns.at2(i, j);
        }
    }
    Ok((1.0 - lambda) * class_sum + lambda * align_sum)
}
