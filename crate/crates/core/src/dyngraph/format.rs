//! Plain-text dataset directory format.
//!
//! ```text
//! meta              "n d C T"
//! edges_<t>.txt     one "u v" pair per line
//! feat_<t>.csv      n rows of d comma-separated reals (optional)
//! labels_<t>.txt    n lines, class id or `?`
//! presence_<t>.txt  n lines, 0 or 1 (optional, default all present)
//! ```
//!
//! Blank lines and lines starting with `#` are ignored everywhere. When the
//! meta line declares `d = 0` the feature files must be absent and features
//! are synthesized as one-hot degree buckets.

use std::fs;
use std::path::Path;

use super::{DynamicGraph, SnapshotGraph};
use crate::error::{Error, Result};
use crate::numcore::DenseMatrix;

pub const DEFAULT_DEGREE_BUCKETS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoadOptions {
    /// Width of the synthesized one-hot degree features.
    pub degree_buckets: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            degree_buckets: DEFAULT_DEGREE_BUCKETS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetMeta {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub slices: usize,
}

/// File contents of one slice, before parsing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawSlice {
    pub edges: String,
    pub features: Option<String>,
    pub labels: String,
    pub presence: Option<String>,
}

/// File contents of a whole dataset directory, before parsing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawDataset {
    pub meta: String,
    pub slices: Vec<RawSlice>,
}

/// Non-blank, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_index(token: &str, file: &str, line: usize, what: &str) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| Error::parse(file, line, format!("expected {what}, found `{token}`")))
}

pub fn parse_meta(text: &str) -> Result<DatasetMeta> {
    let mut lines = content_lines(text);
    let (line, content) = lines
        .next()
        .ok_or_else(|| Error::parse("meta", 1, "missing `n d C T` line"))?;
    let tokens: Vec<&str> = content.split_whitespace().collect();
    if tokens.len() != 4 {
        return Err(Error::parse(
            "meta",
            line,
            format!("expected 4 fields `n d C T`, found {}", tokens.len()),
        ));
    }
    let field = |k: usize, what: &str| parse_index(tokens[k], "meta", line, what);
    let meta = DatasetMeta {
        n: field(0, "node count")?,
        d: field(1, "attribute count")?,
        classes: field(2, "class count")?,
        slices: field(3, "slice count")?,
    };
    if let Some((extra, _)) = lines.next() {
        return Err(Error::parse("meta", extra, "unexpected content after meta line"));
    }
    if meta.classes == 0 || meta.slices == 0 {
        return Err(Error::parse("meta", line, "class and slice counts must be positive"));
    }
    Ok(meta)
}

pub fn parse_edges(text: &str, n: usize, file: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (line, content) in content_lines(text) {
        let mut tokens = content.split_whitespace();
        let (Some(a), Some(b), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            return Err(Error::parse(file, line, "expected `u v`"));
        };
        let u = parse_index(a, file, line, "node id")?;
        let v = parse_index(b, file, line, "node id")?;
        if u >= n || v >= n {
            return Err(Error::parse(
                file,
                line,
                format!("node id out of range for {n} nodes"),
            ));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn parse_features(text: &str, n: usize, d: usize, file: &str) -> Result<DenseMatrix> {
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, content) in content_lines(text) {
        if rows == n {
            return Err(Error::parse(file, line, format!("more than {n} feature rows")));
        }
        let before = data.len();
        for token in content.split(',') {
            let token = token.trim();
            let v: f64 = token
                .parse()
                .map_err(|_| Error::parse(file, line, format!("expected a real, found `{token}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(file, line, "non-finite feature value"));
            }
            data.push(v);
        }
        if data.len() - before != d {
            return Err(Error::parse(
                file,
                line,
                format!("expected {d} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(
            file,
            text.lines().count().max(1),
            format!("expected {n} feature rows, found {rows}"),
        ));
    }
    DenseMatrix::from_vec(n, d, data)
}

pub fn parse_labels(text: &str, n: usize, classes: usize, file: &str) -> Result<Vec<Option<usize>>> {
    let mut labels = Vec::new();
    for (line, content) in content_lines(text) {
        if labels.len() == n {
            return Err(Error::parse(file, line, format!("more than {n} labels")));
        }
        if content == "?" {
            labels.push(None);
            continue;
        }
        let c = parse_index(content, file, line, "class id or `?`")?;
        if c >= classes {
            return Err(Error::parse(
                file,
                line,
                format!("class {c} outside [0, {classes})"),
            ));
        }
        labels.push(Some(c));
    }
    if labels.len() != n {
        return Err(Error::parse(
            file,
            text.lines().count().max(1),
            format!("expected {n} labels, found {}", labels.len()),
        ));
    }
    Ok(labels)
}

pub fn parse_presence(text: &str, n: usize, file: &str) -> Result<Vec<bool>> {
    let mut presence = Vec::new();
    for (line, content) in content_lines(text) {
        if presence.len() == n {
            return Err(Error::parse(file, line, format!("more than {n} presence flags")));
        }
        presence.push(match content {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::parse(
                    file,
                    line,
                    format!("expected 0 or 1, found `{other}`"),
                ))
            }
        });
    }
    if presence.len() != n {
        return Err(Error::parse(
            file,
            text.lines().count().max(1),
            format!("expected {n} presence flags, found {}", presence.len()),
        ));
    }
    Ok(presence)
}

fn degree_bucket_features(snap_degrees: &[usize], presence: &[bool], buckets: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(presence.len(), buckets);
    for (i, (&deg, &present)) in snap_degrees.iter().zip(presence).enumerate() {
        if present {
            m.set(i, deg.min(buckets - 1), 1.0);
        }
    }
    m
}

/// Parses an in-memory dataset.
pub fn parse_dataset(raw: &RawDataset, options: LoadOptions) -> Result<DynamicGraph> {
    let meta = parse_meta(&raw.meta)?;
    if raw.slices.len() != meta.slices {
        return Err(Error::Schema(format!(
            "meta declares {} slices, found {}",
            meta.slices,
            raw.slices.len()
        )));
    }
    let synthesize = meta.d == 0;
    if synthesize && options.degree_buckets == 0 {
        return Err(Error::param("degree_buckets", "must be positive"));
    }
    let d = if synthesize { options.degree_buckets } else { meta.d };

    let mut snapshots = Vec::with_capacity(raw.slices.len());
    for (t, slice) in raw.slices.iter().enumerate() {
        // Labels first: they pin the row count before anything sized by `n`
        // is allocated.
        let labels = parse_labels(&slice.labels, meta.n, meta.classes, &format!("labels_{t}.txt"))?;
        let presence = match &slice.presence {
            Some(text) => parse_presence(text, meta.n, &format!("presence_{t}.txt"))?,
            None => vec![true; meta.n],
        };
        let edges = parse_edges(&slice.edges, meta.n, &format!("edges_{t}.txt"))?;
        let placeholder = DenseMatrix::zeros(meta.n, 0);
        let mut snap = SnapshotGraph::from_edges(t, &edges, placeholder, labels, presence)?;
        snap.features = match (&slice.features, synthesize) {
            (Some(text), false) => parse_features(text, meta.n, meta.d, &format!("feat_{t}.csv"))?,
            (None, true) => degree_bucket_features(&snap.degrees(), &snap.presence, d),
            (Some(_), true) => {
                return Err(Error::Schema(format!(
                    "slice {t}: feature file present but meta declares 0 attributes"
                )))
            }
            (None, false) => {
                return Err(Error::Schema(format!(
                    "slice {t}: feature file missing for {} declared attributes",
                    meta.d
                )))
            }
        };
        snapshots.push(snap);
    }
    DynamicGraph::new(snapshots, meta.n, d, meta.classes)
}

fn read_optional(path: &Path) -> Result<Option<String>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn read_required(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(dir: impl AsRef<Path>, options: LoadOptions) -> Result<DynamicGraph> {
    let dir = dir.as_ref();
    let meta_text = read_required(&dir.join("meta"))?;
    let meta = parse_meta(&meta_text)?;
    let mut raw = RawDataset {
        meta: meta_text,
        slices: Vec::new(),
    };
    for t in 0..meta.slices {
        raw.slices.push(RawSlice {
            edges: read_required(&dir.join(format!("edges_{t}.txt")))?,
            features: read_optional(&dir.join(format!("feat_{t}.csv")))?,
            labels: read_required(&dir.join(format!("labels_{t}.txt")))?,
            presence: read_optional(&dir.join(format!("presence_{t}.txt")))?,
        });
    }
    parse_dataset(&raw, options)
}

/// Renders a graph in the on-disk format. Features and presence are always
/// written, so the result reloads without synthesis.
pub fn render_dataset(g: &DynamicGraph) -> RawDataset {
    let meta = format!(
        "{} {} {} {}\n",
        g.num_nodes(),
        g.feature_dim(),
        g.num_classes(),
        g.num_slices()
    );
    let slices = g
        .snapshots()
        .iter()
        .map(|s| {
            let mut edges = String::new();
            for (u, v) in s.edges() {
                edges.push_str(&format!("{u} {v}\n"));
            }
            let mut features = String::new();
            for r in 0..s.features.rows() {
                let row: Vec<String> = s.features.row(r).iter().map(|v| format!("{v}")).collect();
                features.push_str(&row.join(","));
                features.push('\n');
            }
            let mut labels = String::new();
            for l in &s.labels {
                match l {
                    Some(c) => labels.push_str(&format!("{c}\n")),
                    None => labels.push_str("?\n"),
                }
            }
            let presence: String = s
                .presence
                .iter()
                .map(|&p| if p { "1\n" } else { "0\n" })
                .collect();
            RawSlice {
                edges,
                features: Some(features),
                labels,
                presence: Some(presence),
            }
        })
        .collect();
    RawDataset { meta, slices }
}

pub fn write_dataset(g: &DynamicGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let raw = render_dataset(g);
    let write = |name: String, body: &str| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(path, e))
    };
    write("meta".into(), &raw.meta)?;
    for (t, s) in raw.slices.iter().enumerate() {
        write(format!("edges_{t}.txt"), &s.edges)?;
        if let Some(f) = &s.features {
            write(format!("feat_{t}.csv"), f)?;
        }
        write(format!("labels_{t}.txt"), &s.labels)?;
        if let Some(p) = &s.presence {
            write(format!("presence_{t}.txt"), p)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_slice(edges: &str) -> RawDataset {
        RawDataset {
            meta: "3 2 2 1\n".into(),
            slices: vec![RawSlice {
                edges: edges.into(),
                features: Some("1,0\n0,1\n0.5,0.5\n".into()),
                labels: "0\n1\n?\n".into(),
                presence: None,
            }],
        }
    }

    #[test]
    fn empty_edge_file_is_valid() {
        let g = parse_dataset(&one_slice(""), LoadOptions::default()).unwrap();
        assert_eq!(g.stats().edges, 0);
        assert_eq!(g.snapshot(0).labels, vec![Some(0), Some(1), None]);
    }

    #[test]
    fn duplicate_edge_lines_are_deduplicated() {
        let text = "0 1\n1 0\n0 1\n# comment\n\n1 2\n";
        let g = parse_dataset(&one_slice(text), LoadOptions::default()).unwrap();
        let oracle: std::collections::HashSet<(usize, usize)> = parse_edges(text, 3, "e")
            .unwrap()
            .into_iter()
            .map(|(u, v)| (u.min(v), u.max(v)))
            .collect();
        assert_eq!(g.stats().edges, oracle.len());
        assert_eq!(g.stats().edges, 2);
    }

    #[test]
    fn malformed_edge_reports_line_number() {
        let err = parse_dataset(&one_slice("0 1\n1 x\n"), LoadOptions::default()).unwrap_err();
        match err {
            Error::Parse { file, line, .. } => {
                assert_eq!(file, "edges_0.txt");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn meta_slice_count_must_match() {
        let mut raw = one_slice("");
        raw.meta = "3 2 2 2\n".into();
        assert!(matches!(
            parse_dataset(&raw, LoadOptions::default()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn wrong_feature_width_is_a_parse_error() {
        let mut raw = one_slice("");
        raw.slices[0].features = Some("1,0\n0,1,3\n0,0\n".into());
        let err = parse_dataset(&raw, LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn degree_bucket_synthesis() {
        let raw = RawDataset {
            meta: "4 0 2 1\n".into(),
            slices: vec![RawSlice {
                edges: "0 1\n0 2\n0 3\n".into(),
                features: None,
                labels: "0\n1\n1\n0\n".into(),
                presence: None,
            }],
        };
        let g = parse_dataset(&raw, LoadOptions { degree_buckets: 3 }).unwrap();
        assert_eq!(g.feature_dim(), 3);
        let f = &g.snapshot(0).features;
        // degree 3 clamps into the last bucket.
        assert_eq!(f.row(0), &[0.0, 0.0, 1.0]);
        assert_eq!(f.row(1), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn presence_masks_edges() {
        let mut raw = one_slice("0 2\n");
        raw.slices[0].presence = Some("1\n1\n0\n".into());
        assert!(matches!(
            parse_dataset(&raw, LoadOptions::default()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn render_then_parse_round_trips() {
        let mut raw = one_slice("0 1\n2 1\n");
        raw.slices[0].features = Some("0.1,-3e-7\n1e300,2\n-0,0.3333333333333333\n".into());
        let g = parse_dataset(&raw, LoadOptions::default()).unwrap();
        let again = parse_dataset(&render_dataset(&g), LoadOptions::default()).unwrap();
        assert_eq!(g, again);
    }
}
