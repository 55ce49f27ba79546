//! Streaming readers and writers for the MS MARCO / TREC text formats:
//! queries and collection TSV, qrels, top1000 candidate files and run files.
//!
//! Every reader is single pass over a [`BufRead`]. Lines are decoded as strict
//! UTF-8; an invalid byte sequence is a hard error carrying the line number.
//! Text columns may contain tabs only when they are the final column.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Upper bound on candidates per query in a top1000 file.
pub const MAX_CANDIDATES: usize = 1000;

/// Iterator over the non-empty lines of a reader, with 1-based line numbers.
pub struct Lines<R> {
    reader: R,
    line: usize,
    buf: Vec<u8>,
}

impl<R: BufRead> Lines<R> {
    pub fn new(reader: R) -> Self {
        Lines {
            reader,
            line: 0,
            buf: Vec::new(),
        }
    }
}

impl<R: BufRead> Iterator for Lines<R> {
    type Item = Result<(usize, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line += 1;
            let mut bytes = self.buf.as_slice();
            if let Some(rest) = bytes.strip_suffix(b"\n") {
                bytes = rest;
            }
            if let Some(rest) = bytes.strip_suffix(b"\r") {
                bytes = rest;
            }
            if bytes.is_empty() {
                continue;
            }
            return Some(match std::str::from_utf8(bytes) {
                Ok(s) => Ok((self.line, s.to_owned())),
                Err(_) => Err(Error::Utf8 { line: self.line }),
            });
        }
    }
}

/// Splits on the first `n - 1` tabs; the last field keeps any further tabs.
fn split_tabs(line: &str, n: usize, lineno: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = line.splitn(n, '\t').collect();
    if fields.len() != n {
        return Err(Error::parse(
            lineno,
            format!("expected {n} tab-separated fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

fn non_empty_id(id: &str, lineno: usize) -> Result<String> {
    if id.is_empty() {
        return Err(Error::parse(lineno, "empty identifier"));
    }
    Ok(id.to_owned())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub id: String,
    pub text: String,
}

impl QueryRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        QueryRecord {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassageRecord {
    pub id: String,
    pub text: String,
}

impl PassageRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        PassageRecord {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// Common view over records keyed by an opaque string id.
pub trait Record {
    fn id(&self) -> &str;
    fn text(&self) -> &str;
}

impl Record for QueryRecord {
    fn id(&self) -> &str {
        &self.id
    }
    fn text(&self) -> &str {
        &self.text
    }
}

impl Record for PassageRecord {
    fn id(&self) -> &str {
        &self.id
    }
    fn text(&self) -> &str {
        &self.text
    }
}

/// Insertion-ordered records with random access by id. Immutable once built.
#[derive(Debug, Clone)]
pub struct RecordStore<T> {
    records: Vec<T>,
    by_id: HashMap<String, usize>,
}

pub type QueryStore = RecordStore<QueryRecord>;
pub type PassageStore = RecordStore<PassageRecord>;

impl<T: Record> RecordStore<T> {
    pub fn from_records(records: Vec<T>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if by_id.insert(r.id().to_owned(), i).is_some() {
                return Err(Error::DuplicateKey {
                    line: i + 1,
                    key: r.id().to_owned(),
                });
            }
        }
        Ok(RecordStore { records, by_id })
    }

    pub fn get(&self, id: &str) -> Option<&T> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn text(&self, id: &str) -> Option<&str> {
        self.get(id).map(Record::text)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.records.iter()
    }

    pub fn records(&self) -> &[T] {
        &self.records
    }
}

impl<T: Record> Default for RecordStore<T> {
    fn default() -> Self {
        RecordStore {
            records: Vec::new(),
            by_id: HashMap::new(),
        }
    }
}

impl<'a, T> IntoIterator for &'a RecordStore<T> {
    type Item = &'a T;
    type IntoIter = std::slice::Iter<'a, T>;
    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

fn parse_two_column<R: BufRead, T>(
    reader: R,
    mut make: impl FnMut(String, String, usize) -> Result<T>,
) -> Result<Vec<T>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for item in Lines::new(reader) {
        let (lineno, line) = item?;
        let fields = split_tabs(&line, 2, lineno)?;
        let id = non_empty_id(fields[0], lineno)?;
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateKey {
                line: lineno,
                key: id,
            });
        }
        out.push(make(id, fields[1].to_owned(), lineno)?);
    }
    Ok(out)
}

/// Parses `id <TAB> text` query lines, preserving order.
pub fn parse_queries<R: BufRead>(reader: R) -> Result<QueryStore> {
    let records = parse_two_column(reader, |id, text, lineno| {
        if text.trim().is_empty() {
            return Err(Error::parse(lineno, format!("query {id} has empty text")));
        }
        Ok(QueryRecord { id, text })
    })?;
    RecordStore::from_records(records)
}

/// Parses `id <TAB> text` passage lines into a random-access store.
pub fn parse_collection<R: BufRead>(reader: R) -> Result<PassageStore> {
    let records = parse_two_column(reader, |id, text, _| Ok(PassageRecord { id, text }))?;
    RecordStore::from_records(records)
}

pub fn write_records<W: Write, T: Record>(records: &RecordStore<T>, mut out: W) -> Result<()> {
    for r in records {
        writeln!(out, "{}\t{}", r.id(), r.text())?;
    }
    Ok(())
}

/// Graded relevance judgments keyed by (query id, passage id).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
    len: usize,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when the key was already judged (the existing grade is kept).
    pub fn insert(&mut self, query_id: &str, passage_id: &str, grade: u32) -> bool {
        let per_query = self.judgments.entry(query_id.to_owned()).or_default();
        if per_query.contains_key(passage_id) {
            return false;
        }
        per_query.insert(passage_id.to_owned(), grade);
        self.len += 1;
        true
    }

    pub fn grade(&self, query_id: &str, passage_id: &str) -> Option<u32> {
        self.judgments.get(query_id)?.get(passage_id).copied()
    }

    /// Judgments of one query, sorted by passage id.
    pub fn for_query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    /// All judgments in (query id, passage id) order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.judgments
            .iter()
            .flat_map(|(q, ps)| ps.iter().map(move |(p, &g)| (q.as_str(), p.as_str(), g)))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Parses whitespace-separated `query_id iteration passage_id grade` lines.
pub fn parse_qrels<R: BufRead>(reader: R) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for item in Lines::new(reader) {
        let (lineno, line) = item?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                lineno,
                format!("expected 4 whitespace-separated fields, found {}", fields.len()),
            ));
        }
        let grade: u32 = fields[3]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid grade {:?}", fields[3])))?;
        if !qrels.insert(fields[0], fields[2], grade) {
            return Err(Error::DuplicateKey {
                line: lineno,
                key: format!("{} {}", fields[0], fields[2]),
            });
        }
    }
    Ok(qrels)
}

pub fn write_qrels<W: Write>(qrels: &Qrels, mut out: W) -> Result<()> {
    for (q, p, g) in qrels.iter() {
        writeln!(out, "{q} 0 {p} {g}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub passage_id: String,
    pub text: Option<String>,
}

/// Unranked candidate passages of one query; order carries no rank meaning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub query_id: String,
    pub query_text: Option<String>,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(query_id: impl Into<String>) -> Self {
        CandidateSet {
            query_id: query_id.into(),
            query_text: None,
            candidates: Vec::new(),
        }
    }

    /// Adds a candidate, enforcing uniqueness and the per-query capacity.
    pub fn push(&mut self, passage_id: impl Into<String>, text: Option<String>) -> Result<()> {
        let passage_id = passage_id.into();
        if self.candidates.len() >= MAX_CANDIDATES {
            return Err(Error::Capacity {
                query_id: self.query_id.clone(),
                limit: MAX_CANDIDATES,
            });
        }
        if self.candidates.iter().any(|c| c.passage_id == passage_id) {
            return Err(Error::Contract(format!(
                "duplicate candidate {passage_id} for query {}",
                self.query_id
            )));
        }
        self.candidates.push(Candidate { passage_id, text });
        Ok(())
    }

    pub fn passage_ids(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.passage_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// One line of a top1000 file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Top1000Row {
    pub line: usize,
    pub query_id: String,
    pub passage_id: String,
    pub query_text: String,
    pub passage_text: String,
}

/// Streams top1000 rows without grouping; memory stays constant per row.
pub fn top1000_rows<R: BufRead>(reader: R) -> impl Iterator<Item = Result<Top1000Row>> {
    Lines::new(reader).map(|item| {
        let (lineno, line) = item?;
        let f = split_tabs(&line, 4, lineno)?;
        Ok(Top1000Row {
            line: lineno,
            query_id: non_empty_id(f[0], lineno)?,
            passage_id: non_empty_id(f[1], lineno)?,
            query_text: f[2].to_owned(),
            passage_text: f[3].to_owned(),
        })
    })
}

/// Groups a top1000 file by query id, in order of first appearance.
pub fn parse_top1000<R: BufRead>(reader: R) -> Result<Vec<CandidateSet>> {
    let mut sets: Vec<CandidateSet> = Vec::new();
    let mut index: HashMap<String, (usize, HashSet<String>)> = HashMap::new();
    for row in top1000_rows(reader) {
        let row = row?;
        let (slot, seen) = match index.get_mut(&row.query_id) {
            Some(entry) => entry,
            None => {
                let mut set = CandidateSet::new(row.query_id.clone());
                set.query_text = Some(row.query_text.clone());
                sets.push(set);
                index
                    .entry(row.query_id.clone())
                    .or_insert((sets.len() - 1, HashSet::new()))
            }
        };
        if !seen.insert(row.passage_id.clone()) {
            return Err(Error::DuplicateKey {
                line: row.line,
                key: format!("{} {}", row.query_id, row.passage_id),
            });
        }
        let set = &mut sets[*slot];
        if set.candidates.len() >= MAX_CANDIDATES {
            return Err(Error::Capacity {
                query_id: row.query_id,
                limit: MAX_CANDIDATES,
            });
        }
        set.candidates.push(Candidate {
            passage_id: row.passage_id,
            text: Some(row.passage_text),
        });
    }
    Ok(sets)
}

/// Writes candidate sets as top1000 lines. Missing texts are looked up in the
/// given stores; a candidate whose text cannot be resolved is an error.
pub fn write_top1000<W: Write>(
    sets: &[CandidateSet],
    queries: Option<&QueryStore>,
    passages: Option<&PassageStore>,
    mut out: W,
) -> Result<()> {
    for set in sets {
        let qtext = set
            .query_text
            .as_deref()
            .or_else(|| queries.and_then(|q| q.text(&set.query_id)))
            .ok_or_else(|| Error::MissingReference(format!("query text for {}", set.query_id)))?;
        for c in &set.candidates {
            let ptext = c
                .text
                .as_deref()
                .or_else(|| passages.and_then(|p| p.text(&c.passage_id)))
                .ok_or_else(|| {
                    Error::MissingReference(format!("passage text for {}", c.passage_id))
                })?;
            writeln!(out, "{}\t{}\t{}\t{}", set.query_id, c.passage_id, qtext, ptext)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPassage {
    pub passage_id: String,
    pub score: f64,
}

/// Ordered scored passages for one query: scores non-increasing, ties by
/// ascending passage id.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub query_id: String,
    pub entries: Vec<ScoredPassage>,
}

impl Ranking {
    /// Sorts arbitrary scored passages into canonical ranking order.
    pub fn from_scores(query_id: impl Into<String>, mut entries: Vec<ScoredPassage>) -> Self {
        entries.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.passage_id.cmp(&b.passage_id))
        });
        Ranking {
            query_id: query_id.into(),
            entries,
        }
    }

    pub fn passage_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.passage_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks score order and tie-breaking.
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if !e.score.is_finite() {
                return Err(Error::Contract(format!(
                    "non-finite score for {} in query {}",
                    e.passage_id, self.query_id
                )));
            }
            if i == 0 {
                continue;
            }
            let prev = &self.entries[i - 1];
            let ordered = prev.score > e.score
                || (prev.score == e.score && prev.passage_id < e.passage_id);
            if !ordered {
                return Err(Error::Contract(format!(
                    "ranking for query {} is not sorted at position {}",
                    self.query_id,
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFileEntry {
    pub query_id: String,
    pub passage_id: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Writes rankings as `query_id Q0 passage_id rank score tag` lines.
pub fn write_run_file<W: Write>(rankings: &[Ranking], tag: &str, mut out: W) -> Result<()> {
    if tag.is_empty() || tag.contains(char::is_whitespace) {
        return Err(Error::Config(format!("invalid run tag {tag:?}")));
    }
    for ranking in rankings {
        ranking.validate()?;
        for (i, e) in ranking.entries.iter().enumerate() {
            writeln!(
                out,
                "{} Q0 {} {} {:.6} {}",
                ranking.query_id,
                e.passage_id,
                i + 1,
                e.score,
                tag
            )?;
        }
    }
    Ok(())
}

pub fn parse_run_file<R: BufRead>(reader: R) -> Result<Vec<RunFileEntry>> {
    let mut out = Vec::new();
    for item in Lines::new(reader) {
        let (lineno, line) = item?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::parse(
                lineno,
                format!("expected 6 run-file fields, found {}", f.len()),
            ));
        }
        let rank: usize = f[3]
            .parse()
            .ok()
            .filter(|&r| r >= 1)
            .ok_or_else(|| Error::parse(lineno, format!("invalid rank {:?}", f[3])))?;
        let score: f64 = f[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse(lineno, format!("invalid score {:?}", f[4])))?;
        out.push(RunFileEntry {
            query_id: f[0].to_owned(),
            passage_id: f[2].to_owned(),
            rank,
            score,
            tag: f[5].to_owned(),
        });
    }
    Ok(out)
}

/// Regroups run-file entries into rankings ordered by rank, in order of first
/// appearance of each query. Ranks must be 1..n and scores non-increasing.
pub fn rankings_from_entries(entries: Vec<RunFileEntry>) -> Result<Vec<Ranking>> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<RunFileEntry>> = HashMap::new();
    for e in entries {
        if !grouped.contains_key(&e.query_id) {
            order.push(e.query_id.clone());
        }
        grouped.entry(e.query_id.clone()).or_default().push(e);
    }
    let mut out = Vec::with_capacity(order.len());
    for qid in order {
        let mut list = grouped.remove(&qid).unwrap_or_default();
        list.sort_by_key(|e| e.rank);
        let mut seen = HashSet::new();
        for (i, e) in list.iter().enumerate() {
            if e.rank != i + 1 {
                return Err(Error::Contract(format!(
                    "ranks for query {qid} are not contiguous from 1"
                )));
            }
            if !seen.insert(e.passage_id.as_str()) {
                return Err(Error::Contract(format!(
                    "passage {} ranked twice for query {qid}",
                    e.passage_id
                )));
            }
            if i > 0 && list[i - 1].score < e.score {
                return Err(Error::Contract(format!(
                    "scores for query {qid} increase at rank {}",
                    e.rank
                )));
            }
        }
        out.push(Ranking {
            query_id: qid,
            entries: list
                .into_iter()
                .map(|e| ScoredPassage {
                    passage_id: e.passage_id,
                    score: e.score,
                })
                .collect(),
        });
    }
    Ok(out)
}

pub fn read_rankings<R: BufRead>(reader: R) -> Result<Vec<Ranking>> {
    rankings_from_entries(parse_run_file(reader)?)
}
