//! Review CSV ingestion: parsing, grouping by product, minimum-review
//! filtering and corpus statistics.

use std::collections::{HashMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Products with fewer reviews than this fit in any context window as-is.
pub const DEFAULT_MIN_REVIEWS: usize = 4;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("schema error: column `{column}` not found in header")]
    MissingColumn { column: String },
    #[error("input error: {0}")]
    Input(String),
}

impl From<csv::Error> for IngestError {
    fn from(e: csv::Error) -> Self {
        IngestError::Input(e.to_string())
    }
}

/// One customer review bound to a product key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub product_id: String,
    pub text: String,
    pub rating: Option<u8>,
    pub votes: Option<u64>,
    /// Zero-based position of the data row in the input file.
    pub source_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brand: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductGroup {
    pub product_id: String,
    pub reviews: Vec<Review>,
}

impl ProductGroup {
    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.reviews.iter().map(|r| r.text.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub product_count: usize,
    pub review_count: usize,
    pub unique_review_count: usize,
    pub mean_reviews_per_product: f64,
    pub max_reviews_single_product: usize,
}

/// Header names for each review field. Optional fields are skipped when the
/// header does not carry them; product and review columns are mandatory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub product: String,
    pub brand: Option<String>,
    pub price: Option<String>,
    pub rating: Option<String>,
    pub review: String,
    pub votes: Option<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            product: "Product Name".into(),
            brand: Some("Brand Name".into()),
            price: Some("Price".into()),
            rating: Some("Rating".into()),
            review: "Reviews".into(),
            votes: Some("Review Votes".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseOutcome {
    pub reviews: Vec<Review>,
    /// Rows dropped because their review cell was empty after trimming.
    pub skipped: usize,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IngestError::MissingColumn {
            column: name.to_string(),
        })
}

fn optional_index(
    headers: &csv::StringRecord,
    name: &Option<String>,
) -> Option<usize> {
    let name = name.as_ref()?;
    headers.iter().position(|h| h.trim() == name)
}

fn parse_rating(cell: &str) -> Option<u8> {
    let cell = cell.trim();
    let value: f64 = cell.parse().ok()?;
    if value.fract() != 0.0 || !(1.0..=5.0).contains(&value) {
        return None;
    }
    Some(value as u8)
}

/// Parses review rows from CSV. Rows whose product cell is empty are treated
/// like rows with an empty review and counted as skipped.
pub fn parse_reviews<R: Read>(
    source: R,
    mapping: &ColumnMapping,
) -> Result<ParseOutcome, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let product_col = column_index(&headers, &mapping.product)?;
    let review_col = column_index(&headers, &mapping.review)?;
    // Explicitly mapped optional columns must exist too, unless they are the
    // defaults which may legitimately be absent from trimmed exports.
    let defaults = ColumnMapping::default();
    for (name, default) in [
        (&mapping.brand, &defaults.brand),
        (&mapping.price, &defaults.price),
        (&mapping.rating, &defaults.rating),
        (&mapping.votes, &defaults.votes),
    ] {
        if let Some(n) = name {
            if name != default {
                column_index(&headers, n)?;
            }
        }
    }
    let brand_col = optional_index(&headers, &mapping.brand);
    let price_col = optional_index(&headers, &mapping.price);
    let rating_col = optional_index(&headers, &mapping.rating);
    let votes_col = optional_index(&headers, &mapping.votes);

    let mut reviews = Vec::new();
    let mut skipped = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |idx: Option<usize>| idx.and_then(|i| record.get(i)).map(str::trim);
        let text = cell(Some(review_col)).unwrap_or("");
        let product = cell(Some(product_col)).unwrap_or("");
        if text.is_empty() || product.is_empty() {
            skipped += 1;
            continue;
        }
        reviews.push(Review {
            product_id: product.to_string(),
            text: text.to_string(),
            rating: cell(rating_col).and_then(parse_rating),
            votes: cell(votes_col).and_then(|v| v.parse().ok()),
            source_index: row,
            brand: cell(brand_col).filter(|s| !s.is_empty()).map(str::to_string),
            price: cell(price_col).filter(|s| !s.is_empty()).map(str::to_string),
        });
    }
    Ok(ParseOutcome { reviews, skipped })
}

/// Groups reviews by product in order of first appearance.
pub fn group_by_product(reviews: Vec<Review>) -> Vec<ProductGroup> {
    let mut slots: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<ProductGroup> = Vec::new();
    for review in reviews {
        match slots.get(&review.product_id) {
            Some(&i) => groups[i].reviews.push(review),
            None => {
                slots.insert(review.product_id.clone(), groups.len());
                groups.push(ProductGroup {
                    product_id: review.product_id.clone(),
                    reviews: vec![review],
                });
            }
        }
    }
    for g in &mut groups {
        g.reviews.sort_by_key(|r| r.source_index);
    }
    groups
}

pub fn filter_min_reviews(groups: Vec<ProductGroup>, min_count: usize) -> Vec<ProductGroup> {
    let min_count = min_count.max(1);
    groups.into_iter().filter(|g| g.len() >= min_count).collect()
}

/// Drops exact-text duplicate reviews within each product, keeping the first.
pub fn dedup_reviews(groups: Vec<ProductGroup>) -> Vec<ProductGroup> {
    groups
        .into_iter()
        .map(|mut g| {
            let mut seen = HashSet::new();
            g.reviews.retain(|r| seen.insert(r.text.trim().to_string()));
            g
        })
        .collect()
}

pub fn corpus_stats(groups: &[ProductGroup]) -> CorpusStats {
    let product_count = groups.len();
    let review_count: usize = groups.iter().map(ProductGroup::len).sum();
    let unique: HashSet<&str> = groups
        .iter()
        .flat_map(|g| g.reviews.iter().map(|r| r.text.trim()))
        .collect();
    let mean = if product_count == 0 {
        0.0
    } else {
        review_count as f64 / product_count as f64
    };
    CorpusStats {
        product_count,
        review_count,
        unique_review_count: unique.len(),
        mean_reviews_per_product: mean,
        max_reviews_single_product: groups.iter().map(ProductGroup::len).max().unwrap_or(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
Product Name,Brand Name,Price,Rating,Reviews,Review Votes
Phone A,Acme,199.99,5,Great phone,1
Phone B,Bolt,99.00,3,\"Okay, but slow\",0
Phone A,Acme,199.99,4,Great phone,2
";

    fn parse(src: &str) -> ParseOutcome {
        parse_reviews(src.as_bytes(), &ColumnMapping::default()).unwrap()
    }

    #[test]
    fn header_only_file_is_empty() {
        let out = parse("Product Name,Reviews\n");
        assert!(out.reviews.is_empty());
        assert_eq!(out.skipped, 0);
    }

    #[test]
    fn three_rows_keep_file_order() {
        let out = parse(FIXTURE);
        assert_eq!(out.reviews.len(), 3);
        let idx: Vec<_> = out.reviews.iter().map(|r| r.source_index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
        assert_eq!(out.reviews[1].text, "Okay, but slow");
        assert_eq!(out.reviews[0].rating, Some(5));
        assert_eq!(out.reviews[1].votes, Some(0));
        assert_eq!(out.reviews[1].brand.as_deref(), Some("Bolt"));
    }

    #[test]
    fn empty_review_cell_is_skipped() {
        let src = "Product Name,Reviews\nA,good\nA,   \nB,fine\n";
        let out = parse(src);
        assert_eq!(out.reviews.len(), 2);
        assert_eq!(out.skipped, 1);
        assert_eq!(out.reviews[1].source_index, 2);
    }

    #[test]
    fn quoted_newlines_survive() {
        let src = "Product Name,Reviews\nA,\"line one\nline two\"\n";
        let out = parse(src);
        assert_eq!(out.reviews[0].text, "line one\nline two");
    }

    #[test]
    fn missing_column_is_named() {
        let err = parse_reviews("Product,Reviews\nA,b\n".as_bytes(), &ColumnMapping::default())
            .unwrap_err();
        match err {
            IngestError::MissingColumn { column } => assert_eq!(column, "Product Name"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn explicit_optional_column_must_exist() {
        let mapping = ColumnMapping {
            rating: Some("Stars".into()),
            ..ColumnMapping::default()
        };
        let err = parse_reviews("Product Name,Reviews\nA,b\n".as_bytes(), &mapping).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn { column } if column == "Stars"));
    }

    #[test]
    fn unparsable_rating_keeps_review() {
        let src = "Product Name,Rating,Reviews,Review Votes\nA,five,nice,-3\nA,7,ok,x\n";
        let out = parse(src);
        assert_eq!(out.reviews.len(), 2);
        assert!(out.reviews.iter().all(|r| r.rating.is_none() && r.votes.is_none()));
    }

    #[test]
    fn product_id_is_trimmed() {
        let out = parse("Product Name,Reviews\n  Phone X  ,hi\n");
        assert_eq!(out.reviews[0].product_id, "Phone X");
    }

    #[test]
    fn grouping_follows_first_appearance() {
        let groups = group_by_product(parse(FIXTURE).reviews);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].product_id, "Phone A");
        assert_eq!(groups[0].len(), 2);
        assert_eq!(groups[1].len(), 1);
        assert!(group_by_product(Vec::new()).is_empty());
    }

    fn group(id: &str, n: usize) -> ProductGroup {
        ProductGroup {
            product_id: id.into(),
            reviews: (0..n)
                .map(|i| Review {
                    product_id: id.into(),
                    text: format!("review {i}"),
                    rating: None,
                    votes: None,
                    source_index: i,
                    brand: None,
                    price: None,
                })
                .collect(),
        }
    }

    #[test]
    fn min_review_boundary() {
        let kept = filter_min_reviews(vec![group("three", 3), group("four", 4)], 4);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].product_id, "four");
        assert!(filter_min_reviews(Vec::new(), 4).is_empty());
    }

    #[test]
    fn stats_on_fixture() {
        let stats = corpus_stats(&group_by_product(parse(FIXTURE).reviews));
        assert_eq!(stats.review_count, 3);
        assert_eq!(stats.unique_review_count, 2);
        assert_eq!(stats.mean_reviews_per_product, 1.5);
        assert_eq!(stats.max_reviews_single_product, 2);
    }

    #[test]
    fn stats_on_empty_corpus() {
        let stats = corpus_stats(&[]);
        assert_eq!(stats.product_count, 0);
        assert_eq!(stats.review_count, 0);
        assert_eq!(stats.mean_reviews_per_product, 0.0);
    }

    #[test]
    fn identical_texts_count_once() {
        let mut g = group("A", 5);
        for r in &mut g.reviews {
            r.text = "same".into();
        }
        assert_eq!(corpus_stats(&[g.clone()]).unique_review_count, 1);
        assert_eq!(dedup_reviews(vec![g])[0].len(), 1);
    }
}
