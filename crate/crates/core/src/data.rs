//! Sparse rating matrices and dataset handling.
//!
//! Ratings are stored as (user, item, value) triplets with dense 0-based
//! indices and a declared rating domain; construction enforces that every
//! value lies on the scale and that no cell appears twice. Loaders exist for
//! the three public dataset layouts used in the experiments plus a canonical
//! text format for intermediate artifacts, and a seeded synthetic generator
//! produces rating matrices with controlled structure when no real data is
//! at hand.

pub mod synthetic;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{Error, Result};
use crate::mechanism::RatingDomain;
use crate::seeds;

/// One observed rating cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingEntry {
    pub user: u32,
    pub item: u32,
    pub value: f64,
}

/// Sparse rating matrix: dimensions, domain, and observed cells.
///
/// Entry order is preserved from construction and is part of the type's
/// deterministic behavior (iteration, perturbation streams, fold assignment
/// all follow it).
#[derive(Debug, Clone)]
pub struct SparseRatingMatrix {
    users: usize,
    items: usize,
    domain: RatingDomain,
    entries: Vec<RatingEntry>,
}

impl SparseRatingMatrix {
    /// Builds a matrix from triplets, validating dimensions, domain
    /// membership of every value, and cell uniqueness.
    pub fn from_entries(
        users: usize,
        items: usize,
        domain: RatingDomain,
        triplets: Vec<(u32, u32, f64)>,
    ) -> Result<Self> {
        if users == 0 || items == 0 {
            return Err(Error::Domain(format!("matrix dimensions must be positive, got {users}x{items}")));
        }
        let mut seen = std::collections::HashSet::with_capacity(triplets.len());
        let mut entries = Vec::with_capacity(triplets.len());
        for (user, item, value) in triplets {
            if user as usize >= users || item as usize >= items {
                return Err(Error::IndexOutOfBounds(format!(
                    "entry ({user}, {item}) outside {users}x{items}"
                )));
            }
            if !domain.contains(value) {
                return Err(Error::RatingOutOfDomain {
                    value,
                    lo: domain.lo(),
                    hi: domain.hi(),
                    line: 0,
                });
            }
            if !seen.insert((user, item)) {
                return Err(Error::DuplicateEntry { user: user as usize, item: item as usize });
            }
            entries.push(RatingEntry { user, item, value });
        }
        Ok(Self { users, items, domain, entries })
    }

    #[inline]
    #[must_use]
    pub fn users(&self) -> usize {
        self.users
    }

    #[inline]
    #[must_use]
    pub fn items(&self) -> usize {
        self.items
    }

    #[inline]
    #[must_use]
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    #[must_use]
    pub fn domain(&self) -> &RatingDomain {
        &self.domain
    }

    #[inline]
    #[must_use]
    pub fn entries(&self) -> &[RatingEntry] {
        &self.entries
    }

    pub fn global_mean(&self) -> Result<f64> {
        if self.entries.is_empty() {
            return Err(Error::EmptyDataset("cannot take the mean of zero ratings".into()));
        }
        Ok(self.entries.iter().map(|e| e.value).sum::<f64>() / self.entries.len() as f64)
    }

    /// Entry indices grouped by user, preserving entry order within a group.
    #[must_use]
    pub fn by_user(&self) -> Vec<Vec<u32>> {
        let mut rows = vec![Vec::new(); self.users];
        for (idx, e) in self.entries.iter().enumerate() {
            rows[e.user as usize].push(idx as u32);
        }
        rows
    }

    /// Entry indices grouped by item, preserving entry order within a group.
    #[must_use]
    pub fn by_item(&self) -> Vec<Vec<u32>> {
        let mut cols = vec![Vec::new(); self.items];
        for (idx, e) in self.entries.iter().enumerate() {
            cols[e.item as usize].push(idx as u32);
        }
        cols
    }

    /// Empirical distribution of ratings over a rank grid; each value is
    /// counted at its nearest rank. Sums to 1.
    pub fn rating_marginal(&self, ranks: &[f64]) -> Result<Vec<f64>> {
        if ranks.len() < 2 {
            return Err(Error::Domain("need at least 2 ranks".into()));
        }
        if self.entries.is_empty() {
            return Err(Error::EmptyDataset("cannot estimate a marginal from zero ratings".into()));
        }
        let step = ranks[1] - ranks[0];
        let mut counts = vec![0u64; ranks.len()];
        for e in &self.entries {
            let idx = ((e.value - ranks[0]) / step).round();
            let idx = (idx.max(0.0) as usize).min(ranks.len() - 1);
            counts[idx] += 1;
        }
        let total = self.entries.len() as f64;
        Ok(counts.into_iter().map(|c| c as f64 / total).collect())
    }

    /// New matrix with the same dimensions and domain holding a subset of
    /// entries, selected by index.
    pub fn select(&self, indices: &[usize]) -> Result<SparseRatingMatrix> {
        let triplets = indices
            .iter()
            .map(|&i| {
                let e = self.entries.get(i).ok_or_else(|| {
                    Error::IndexOutOfBounds(format!("entry index {i} of {}", self.entries.len()))
                })?;
                Ok((e.user, e.item, e.value))
            })
            .collect::<Result<Vec<_>>>()?;
        SparseRatingMatrix::from_entries(self.users, self.items, self.domain, triplets)
    }
}

/// Subsample size: an exact fraction of the entry count or a hard cap.
#[derive(Debug, Clone, Copy)]
pub enum SubsampleSize {
    Fraction(f64),
    MaxEntries(usize),
}

/// Uniform subsample without replacement with exact count semantics:
/// `Fraction(f)` keeps `round(f * nnz)` entries. Users and items are
/// reindexed densely (first-seen order over the selected entries, which are
/// kept in their original relative order).
pub fn subsample(
    matrix: &SparseRatingMatrix,
    size: SubsampleSize,
    seed: u64,
) -> Result<SparseRatingMatrix> {
    let nnz = matrix.nnz();
    let count = match size {
        SubsampleSize::Fraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("subsample fraction {f} outside (0, 1]")));
            }
            ((f * nnz as f64).round() as usize).clamp(1, nnz)
        }
        SubsampleSize::MaxEntries(m) => {
            if m == 0 {
                return Err(Error::Config("subsample of 0 entries".into()));
            }
            m.min(nnz)
        }
    };

    let mut indices: Vec<usize> = (0..nnz).collect();
    let mut rng = seeds::rng(seed, &[0x7375_6273]); // "subs"
    // Partial Fisher-Yates: only the first `count` positions are needed.
    for i in 0..count {
        let j = rng.gen_range(i..nnz);
        indices.swap(i, j);
    }
    let mut selected = indices[..count].to_vec();
    selected.sort_unstable();

    let mut user_map: HashMap<u32, u32> = HashMap::new();
    let mut item_map: HashMap<u32, u32> = HashMap::new();
    let mut triplets = Vec::with_capacity(count);
    for &i in &selected {
        let e = &matrix.entries[i];
        let next_user = user_map.len() as u32;
        let u = *user_map.entry(e.user).or_insert(next_user);
        let next_item = item_map.len() as u32;
        let t = *item_map.entry(e.item).or_insert(next_item);
        triplets.push((u, t, e.value));
    }
    SparseRatingMatrix::from_entries(user_map.len(), item_map.len(), matrix.domain, triplets)
}

/// Loads the 100k-style tab-separated layout: `user item rating timestamp`,
/// one interaction per line, 1-based ids. Ids are remapped to dense 0-based
/// indices in first-seen order. Ratings must lie on the half-point scale
/// `[0.5, 5]` (the public file carries integers 1 through 5).
pub fn load_movielens(path: &Path) -> Result<SparseRatingMatrix> {
    let domain = RatingDomain::new(0.5, 5.0)?;
    let file = File::open(path)?;
    let reader = BufReader::new(file);

    let mut user_map: HashMap<u64, u32> = HashMap::new();
    let mut item_map: HashMap<u64, u32> = HashMap::new();
    let mut triplets = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let raw_user = parse_field::<u64>(fields.next(), lineno, "user id")?;
        let raw_item = parse_field::<u64>(fields.next(), lineno, "item id")?;
        let value = parse_field::<f64>(fields.next(), lineno, "rating")?;
        if fields.next().is_none() {
            return Err(Error::Parse { line: lineno, msg: "expected 4 columns".into() });
        }
        if !domain.contains(value) {
            return Err(Error::RatingOutOfDomain {
                value,
                lo: domain.lo(),
                hi: domain.hi(),
                line: lineno,
            });
        }
        let next_user = user_map.len() as u32;
        let u = *user_map.entry(raw_user).or_insert(next_user);
        let next_item = item_map.len() as u32;
        let t = *item_map.entry(raw_item).or_insert(next_item);
        triplets.push((u, t, value));
    }
    if triplets.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    SparseRatingMatrix::from_entries(user_map.len(), item_map.len(), domain, triplets)
}

/// Loads the joke-rating layout: one row per user, first column the number
/// of rated items, then one column per item with 99 as the missing-value
/// sentinel and real ratings in `[-10, 10]`. Comma, semicolon, or tab
/// delimited.
pub fn load_jester(path: &Path) -> Result<SparseRatingMatrix> {
    let domain = RatingDomain::new(-10.0, 10.0)?;
    let file = File::open(path)?;
    let reader = BufReader::new(file);

    let mut triplets = Vec::new();
    let mut items: Option<usize> = None;
    let mut user = 0u32;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c| c == ',' || c == ';' || c == '\t').collect();
        if fields.len() < 2 {
            return Err(Error::Parse { line: lineno, msg: "expected a count and rating columns".into() });
        }
        let declared = parse_field::<usize>(Some(fields[0].trim()), lineno, "rated count")?;
        let row_items = fields.len() - 1;
        match items {
            None => items = Some(row_items),
            Some(n) if n != row_items => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("row has {row_items} item columns, expected {n}"),
                });
            }
            _ => {}
        }
        let mut rated = 0usize;
        for (j, raw) in fields[1..].iter().enumerate() {
            let value = parse_field::<f64>(Some(raw.trim()), lineno, "rating")?;
            if value == 99.0 {
                continue;
            }
            if !domain.contains(value) {
                return Err(Error::RatingOutOfDomain {
                    value,
                    lo: domain.lo(),
                    hi: domain.hi(),
                    line: lineno,
                });
            }
            triplets.push((user, j as u32, value));
            rated += 1;
        }
        if rated != declared {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("declared {declared} rated items but found {rated}"),
            });
        }
        user += 1;
    }
    if triplets.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    SparseRatingMatrix::from_entries(user as usize, items.unwrap_or(0), domain, triplets)
}

/// Loads `user,item,rating` CSV rows with integer ratings in `[1, 10]`,
/// remapping ids densely. A single non-numeric first line is treated as a
/// header and skipped.
pub fn load_libimseti(path: &Path) -> Result<SparseRatingMatrix> {
    let domain = RatingDomain::new(1.0, 10.0)?;
    let file = File::open(path)?;
    let reader = BufReader::new(file);

    let mut user_map: HashMap<u64, u32> = HashMap::new();
    let mut item_map: HashMap<u64, u32> = HashMap::new();
    let mut triplets = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if lineno == 1 && fields.first().map_or(false, |f| f.parse::<u64>().is_err()) {
            continue; // header
        }
        if fields.len() != 3 {
            return Err(Error::Parse { line: lineno, msg: format!("expected 3 columns, got {}", fields.len()) });
        }
        let raw_user = parse_field::<u64>(Some(fields[0]), lineno, "user id")?;
        let raw_item = parse_field::<u64>(Some(fields[1]), lineno, "item id")?;
        let value = parse_field::<f64>(Some(fields[2]), lineno, "rating")?;
        if !domain.contains(value) {
            return Err(Error::RatingOutOfDomain {
                value,
                lo: domain.lo(),
                hi: domain.hi(),
                line: lineno,
            });
        }
        let next_user = user_map.len() as u32;
        let u = *user_map.entry(raw_user).or_insert(next_user);
        let next_item = item_map.len() as u32;
        let t = *item_map.entry(raw_item).or_insert(next_item);
        triplets.push((u, t, value));
    }
    if triplets.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    SparseRatingMatrix::from_entries(user_map.len(), item_map.len(), domain, triplets)
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize, what: &str) -> Result<T> {
    let raw = field.ok_or_else(|| Error::Parse { line, msg: format!("missing {what}") })?;
    raw.parse::<T>().map_err(|_| Error::Parse { line, msg: format!("invalid {what}: '{raw}'") })
}

/// Writes the canonical text format: a `users,items` line, a `lo,hi` line,
/// then one `user,item,value` line per entry in entry order. Floats use the
/// shortest representation that round-trips exactly.
pub fn write_canonical<W: Write>(matrix: &SparseRatingMatrix, mut w: W) -> Result<()> {
    writeln!(w, "{},{}", matrix.users, matrix.items)?;
    writeln!(w, "{},{}", matrix.domain.lo(), matrix.domain.hi())?;
    for e in &matrix.entries {
        writeln!(w, "{},{},{}", e.user, e.item, e.value)?;
    }
    Ok(())
}

pub fn save_canonical(matrix: &SparseRatingMatrix, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_canonical(matrix, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_canonical<R: Read>(r: R) -> Result<SparseRatingMatrix> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();

    let (_, dims) = lines.next().ok_or_else(|| Error::Parse { line: 1, msg: "missing dimension header".into() })?;
    let dims = dims?;
    let mut it = dims.split(',');
    let users = parse_field::<usize>(it.next(), 1, "user count")?;
    let items = parse_field::<usize>(it.next(), 1, "item count")?;

    let (_, bounds) = lines.next().ok_or_else(|| Error::Parse { line: 2, msg: "missing domain header".into() })?;
    let bounds = bounds?;
    let mut it = bounds.split(',');
    let lo = parse_field::<f64>(it.next(), 2, "domain lower bound")?;
    let hi = parse_field::<f64>(it.next(), 2, "domain upper bound")?;
    let domain = RatingDomain::new(lo, hi)?;

    let mut triplets = Vec::new();
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let user = parse_field::<u32>(it.next(), lineno, "user index")?;
        let item = parse_field::<u32>(it.next(), lineno, "item index")?;
        let value = parse_field::<f64>(it.next(), lineno, "rating")?;
        triplets.push((user, item, value));
    }
    SparseRatingMatrix::from_entries(users, items, domain, triplets)
}

pub fn load_canonical(path: &Path) -> Result<SparseRatingMatrix> {
    read_canonical(File::open(path)?)
}

/// 64-bit FNV-1a over a byte stream, as a stable provenance fingerprint for
/// dataset files (not a cryptographic hash).
pub fn file_hash(path: &Path) -> Result<String> {
    let mut file = File::open(path)?;
    let mut buf = [0u8; 64 * 1024];
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        for &byte in &buf[..n] {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x1000_0000_01b3);
        }
    }
    Ok(format!("fnv1a64:{hash:016x}"))
}

fn string_hash(s: &str) -> String {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &byte in s.as_bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    format!("fnv1a64:{hash:016x}")
}

/// Named dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetName {
    Movielens,
    Jester,
    Libimseti,
    Synthetic,
}

impl DatasetName {
    #[must_use]
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetName::Movielens => "movielens",
            DatasetName::Jester => "jester",
            DatasetName::Libimseti => "libimseti",
            DatasetName::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "movielens" => Ok(DatasetName::Movielens),
            "jester" => Ok(DatasetName::Jester),
            "libimseti" => Ok(DatasetName::Libimseti),
            "synthetic" => Ok(DatasetName::Synthetic),
            other => Err(Error::Config(format!(
                "unknown dataset '{other}' (expected movielens, jester, libimseti, or synthetic)"
            ))),
        }
    }
}

impl std::fmt::Display for DatasetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A dataset to load: name, optional file path, and the scale conventions
/// (rating domain and rank-grid step) that belong to that dataset.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub name: DatasetName,
    pub path: Option<PathBuf>,
    pub domain: RatingDomain,
    pub rank_step: f64,
}

impl DatasetSpec {
    pub fn named(name: DatasetName, path: Option<PathBuf>) -> Result<Self> {
        let (domain, rank_step) = match name {
            DatasetName::Movielens | DatasetName::Synthetic => (RatingDomain::new(0.5, 5.0)?, 0.5),
            DatasetName::Jester => (RatingDomain::new(-10.0, 10.0)?, 1.0),
            DatasetName::Libimseti => (RatingDomain::new(1.0, 10.0)?, 1.0),
        };
        if name != DatasetName::Synthetic && path.is_none() {
            return Err(Error::Config(format!("dataset {name} requires a data path")));
        }
        Ok(Self { name, path, domain, rank_step })
    }

    pub fn load(&self) -> Result<SparseRatingMatrix> {
        match self.name {
            DatasetName::Movielens => load_movielens(self.path_ref()?),
            DatasetName::Jester => load_jester(self.path_ref()?),
            DatasetName::Libimseti => load_libimseti(self.path_ref()?),
            DatasetName::Synthetic => Ok(synthetic::generate(&synthetic::SyntheticConfig::default())),
        }
    }

    /// Provenance fingerprint: file bytes for on-disk datasets, generator
    /// parameters for synthetic ones.
    pub fn content_hash(&self) -> Result<String> {
        match self.name {
            DatasetName::Synthetic => {
                Ok(string_hash(&synthetic::SyntheticConfig::default().describe()))
            }
            _ => file_hash(self.path_ref()?),
        }
    }

    fn path_ref(&self) -> Result<&Path> {
        self.path
            .as_deref()
            .ok_or_else(|| Error::Config(format!("dataset {} requires a data path", self.name)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_domain() -> RatingDomain {
        RatingDomain::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn from_entries_validates() {
        let d = unit_domain();
        assert!(SparseRatingMatrix::from_entries(2, 2, d, vec![(0, 0, 0.5)]).is_ok());
        assert!(matches!(
            SparseRatingMatrix::from_entries(2, 2, d, vec![(2, 0, 0.5)]),
            Err(Error::IndexOutOfBounds(_))
        ));
        assert!(matches!(
            SparseRatingMatrix::from_entries(2, 2, d, vec![(0, 0, 1.5)]),
            Err(Error::RatingOutOfDomain { .. })
        ));
        assert!(matches!(
            SparseRatingMatrix::from_entries(2, 2, d, vec![(0, 0, 0.5), (0, 0, 0.7)]),
            Err(Error::DuplicateEntry { .. })
        ));
        assert!(SparseRatingMatrix::from_entries(0, 2, d, vec![]).is_err());
    }

    #[test]
    fn movielens_loader_remaps_ids() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "196\t242\t3\t881250949").unwrap();
        writeln!(f, "186\t302\t3\t891717742").unwrap();
        writeln!(f, "196\t302\t1\t878887116").unwrap();
        f.flush().unwrap();
        let m = load_movielens(f.path()).unwrap();
        assert_eq!(m.users(), 2);
        assert_eq!(m.items(), 2);
        assert_eq!(m.nnz(), 3);
        // First-seen remapping: 196 -> 0, 186 -> 1; 242 -> 0, 302 -> 1.
        assert_eq!(m.entries()[2], RatingEntry { user: 0, item: 1, value: 1.0 });
        assert_eq!(*m.domain(), RatingDomain::new(0.5, 5.0).unwrap());
    }

    #[test]
    fn movielens_loader_rejects_bad_rows() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1\t1\t6\t0").unwrap();
        f.flush().unwrap();
        assert!(matches!(
            load_movielens(f.path()),
            Err(Error::RatingOutOfDomain { line: 1, .. })
        ));

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1\t1\t4\t0").unwrap();
        writeln!(f, "1\t2\t4").unwrap();
        f.flush().unwrap();
        assert!(matches!(load_movielens(f.path()), Err(Error::Parse { line: 2, .. })));

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1\t1\t4\t0").unwrap();
        writeln!(f, "1\t1\t5\t0").unwrap();
        f.flush().unwrap();
        assert!(matches!(load_movielens(f.path()), Err(Error::DuplicateEntry { .. })));
    }

    #[test]
    fn jester_loader_honors_sentinel_and_count() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "2,99,-7.82,99,4.5").unwrap();
        writeln!(f, "1,99,99,99,-10").unwrap();
        f.flush().unwrap();
        let m = load_jester(f.path()).unwrap();
        assert_eq!(m.users(), 2);
        assert_eq!(m.items(), 4);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.entries()[0], RatingEntry { user: 0, item: 1, value: -7.82 });
        assert_eq!(m.entries()[2], RatingEntry { user: 1, item: 3, value: -10.0 });
    }

    #[test]
    fn jester_loader_rejects_count_mismatch() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "3,99,-7.82,99,4.5").unwrap();
        f.flush().unwrap();
        assert!(matches!(load_jester(f.path()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn libimseti_loader_skips_header_and_flags_duplicates() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "from,to,rating").unwrap();
        writeln!(f, "1,133,8").unwrap();
        writeln!(f, "2,133,10").unwrap();
        f.flush().unwrap();
        let m = load_libimseti(f.path()).unwrap();
        assert_eq!((m.users(), m.items(), m.nnz()), (2, 1, 2));

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1,133,8").unwrap();
        writeln!(f, "1,133,9").unwrap();
        f.flush().unwrap();
        assert!(matches!(load_libimseti(f.path()), Err(Error::DuplicateEntry { .. })));
    }

    #[test]
    fn canonical_round_trip_is_exact() {
        let d = RatingDomain::new(0.5, 5.0).unwrap();
        let m = SparseRatingMatrix::from_entries(
            3,
            4,
            d,
            vec![(0, 0, 0.5), (1, 3, 3.7), (2, 2, 4.999999999999999)],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_canonical(&m, &mut buf).unwrap();
        let back = read_canonical(&buf[..]).unwrap();
        assert_eq!(back.users(), 3);
        assert_eq!(back.items(), 4);
        assert_eq!(back.entries(), m.entries());
        assert_eq!(back.domain(), m.domain());
    }

    #[test]
    fn subsample_exact_count_and_determinism() {
        let d = unit_domain();
        let triplets: Vec<(u32, u32, f64)> =
            (0..200).map(|i| (i % 20, i / 20, (i % 10) as f64 / 10.0)).collect();
        let m = SparseRatingMatrix::from_entries(20, 10, d, triplets).unwrap();

        let s = subsample(&m, SubsampleSize::Fraction(0.1), 5).unwrap();
        assert_eq!(s.nnz(), 20);
        // Dense reindexing: every index below the new dimension is used.
        let mut users_hit = vec![false; s.users()];
        let mut items_hit = vec![false; s.items()];
        for e in s.entries() {
            users_hit[e.user as usize] = true;
            items_hit[e.item as usize] = true;
        }
        assert!(users_hit.into_iter().all(|b| b));
        assert!(items_hit.into_iter().all(|b| b));

        let s2 = subsample(&m, SubsampleSize::Fraction(0.1), 5).unwrap();
        assert_eq!(s.entries(), s2.entries());
        let s3 = subsample(&m, SubsampleSize::Fraction(0.1), 6).unwrap();
        assert_ne!(s.entries(), s3.entries());

        let capped = subsample(&m, SubsampleSize::MaxEntries(1000), 5).unwrap();
        assert_eq!(capped.nnz(), 200);
    }

    #[test]
    fn marginal_counts_nearest_rank() {
        let d = RatingDomain::new(0.5, 5.0).unwrap();
        let m = SparseRatingMatrix::from_entries(
            2,
            3,
            d,
            vec![(0, 0, 4.0), (0, 1, 4.0), (1, 0, 0.5), (1, 1, 2.4)],
        )
        .unwrap();
        let ranks = d.ranks(0.5).unwrap();
        let p = m.rating_marginal(&ranks).unwrap();
        assert_eq!(p.len(), 10);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p[7], 0.5); // two ratings at 4.0
        assert_eq!(p[0], 0.25); // one at 0.5
        assert_eq!(p[4], 0.25); // 2.4 snaps to 2.5
    }

    #[test]
    fn dataset_spec_presets() {
        let ml = DatasetSpec::named(DatasetName::Movielens, Some("x".into())).unwrap();
        assert_eq!(*&ml.domain, RatingDomain::new(0.5, 5.0).unwrap());
        assert_eq!(ml.rank_step, 0.5);
        assert!(DatasetSpec::named(DatasetName::Jester, None).is_err());
        let syn = DatasetSpec::named(DatasetName::Synthetic, None).unwrap();
        assert!(syn.content_hash().unwrap().starts_with("fnv1a64:"));
    }
}
