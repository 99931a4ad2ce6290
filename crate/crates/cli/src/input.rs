//! CSV ingestion for `segment`.

use homf::geometry::{Correspondence, Dataset, ModelKind, Point2};

use crate::CliError;

/// Parsed observations plus ground-truth labels when the file has them.
#[derive(Debug, Clone, PartialEq)]
pub struct Input {
    pub data: Dataset,
    pub labels: Option<Vec<i32>>,
}

/// Reads `x,y[,label]` rows for lines and `x1,y1,x2,y2[,label]` rows for
/// the two-view models. Lines starting with `#` are skipped, and so is a
/// leading header whose first field is not a number. Every row must have
/// the same width.
pub fn read(bytes: &[u8], kind: ModelKind) -> Result<Input, CliError> {
    let coords = if kind == ModelKind::Line2D { 2 } else { 4 };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Input { line, msg: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |msg: String| CliError::Input { line, msg };
        if k == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let w = record.len();
        if w != coords && w != coords + 1 {
            return Err(bad(format!("expected {} or {} fields, found {w}", coords, coords + 1)));
        }
        if *width.get_or_insert(w) != w {
            return Err(bad(format!("expected {} fields like the first row, found {w}", width.unwrap())));
        }
        for f in record.iter().take(coords) {
            let x: f64 = f.parse().map_err(|_| bad(format!("not a number: {f:?}")))?;
            if !x.is_finite() {
                return Err(bad(format!("non-finite coordinate: {f:?}")));
            }
            values.push(x);
        }
        if w > coords {
            let f = &record[coords];
            labels.push(f.parse::<i32>().map_err(|_| bad(format!("not an integer label: {f:?}")))?);
        }
    }

    let data = if coords == 2 {
        Dataset::Points(values.chunks(2).map(|c| Point2::new(c[0], c[1])).collect())
    } else {
        Dataset::Correspondences(
            values
                .chunks(4)
                .map(|c| Correspondence::new(Point2::new(c[0], c[1]), Point2::new(c[2], c[3])))
                .collect(),
        )
    };
    let labels = (width == Some(coords + 1)).then_some(labels);
    Ok(Input { data, labels })
}
