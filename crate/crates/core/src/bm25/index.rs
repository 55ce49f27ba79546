use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::corpus::PassageStore;
use crate::error::{Error, Result};
use crate::text::{Analyzer, AnalyzerConfig};

pub const INDEX_MAGIC: [u8; 8] = *b"PRBM25IX";
pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    /// Position of the passage in the index's id-sorted document table.
    pub doc: u32,
    pub tf: u32,
}

/// Term → postings index over an immutable passage collection.
///
/// Documents are numbered in ascending passage-id order, so comparing
/// document numbers is the same as comparing passage ids.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<Posting>>,
    total_length: u64,
    analyzer: AnalyzerConfig,
}

impl InvertedIndex {
    /// Indexes every passage of `passages`. Tokenization runs in parallel;
    /// the merge is ordered, so the result does not depend on thread count.
    pub fn build(passages: &PassageStore, analyzer: &Analyzer) -> Result<Self> {
        if passages.is_empty() {
            return Err(Error::Contract("cannot index an empty collection".into()));
        }
        if passages.len() > u32::MAX as usize {
            return Err(Error::Contract("collection too large for u32 doc numbers".into()));
        }
        let mut order: Vec<usize> = (0..passages.len()).collect();
        let records = passages.records();
        order.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));

        let counted: Vec<(u32, Vec<(String, u32)>)> = order
            .par_iter()
            .map(|&i| {
                let tokens = analyzer.analyze(&records[i].text);
                let len = tokens.len() as u32;
                let mut tf: HashMap<String, u32> = HashMap::new();
                for t in tokens.into_inner() {
                    *tf.entry(t).or_insert(0) += 1;
                }
                (len, tf.into_iter().collect())
            })
            .collect();

        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(counted.len());
        let mut total_length = 0u64;
        for (doc, (len, terms)) in counted.into_iter().enumerate() {
            doc_lengths.push(len);
            total_length += len as u64;
            for (term, tf) in terms {
                postings.entry(term).or_default().push(Posting {
                    doc: doc as u32,
                    tf,
                });
            }
        }
        Ok(InvertedIndex {
            doc_ids: order.iter().map(|&i| records[i].id.clone()).collect(),
            doc_lengths,
            postings,
            total_length,
            analyzer: analyzer.config().clone(),
        })
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.total_length as f64 / self.doc_ids.len() as f64
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn analyzer_config(&self) -> &AnalyzerConfig {
        &self.analyzer
    }

    pub fn analyzer(&self) -> Analyzer {
        Analyzer::new(self.analyzer.clone())
    }

    pub fn doc_number(&self, passage_id: &str) -> Option<u32> {
        self.doc_ids
            .binary_search_by(|id| id.as_str().cmp(passage_id))
            .ok()
            .map(|i| i as u32)
    }

    pub fn passage_id(&self, doc: u32) -> &str {
        &self.doc_ids[doc as usize]
    }

    pub fn doc_length(&self, doc: u32) -> u32 {
        self.doc_lengths[doc as usize]
    }

    pub fn doc_length_of(&self, passage_id: &str) -> Option<u32> {
        self.doc_number(passage_id).map(|d| self.doc_length(d))
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Postings of `term` as (passage id, term frequency), ascending by id.
    pub fn postings_by_id(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings(term)
            .iter()
            .map(|p| (self.passage_id(p.doc), p.tf))
            .collect()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn term_frequency(&self, term: &str, doc: u32) -> u32 {
        let list = self.postings(term);
        list.binary_search_by_key(&doc, |p| p.doc)
            .map(|i| list[i].tf)
            .unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    /// Serializes to the versioned little-endian index format.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&INDEX_MAGIC)?;
        w.write_u32::<LittleEndian>(INDEX_FORMAT_VERSION)?;
        w.write_u64::<LittleEndian>(self.doc_ids.len() as u64)?;
        w.write_f64::<LittleEndian>(self.avgdl())?;
        w.write_u64::<LittleEndian>(self.total_length)?;
        w.write_u8(self.analyzer.stem as u8)?;
        w.write_u32::<LittleEndian>(self.analyzer.stopwords.len() as u32)?;
        for s in &self.analyzer.stopwords {
            write_str(&mut w, s)?;
        }
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lengths) {
            write_str(&mut w, id)?;
            w.write_u32::<LittleEndian>(*len)?;
        }
        w.write_u64::<LittleEndian>(self.postings.len() as u64)?;
        for (term, list) in &self.postings {
            write_str(&mut w, term)?;
            w.write_u32::<LittleEndian>(list.len() as u32)?;
            for p in list {
                w.write_u32::<LittleEndian>(p.doc)?;
                w.write_u32::<LittleEndian>(p.tf)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if magic != INDEX_MAGIC {
            return Err(Error::IndexFormat("bad magic bytes".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != INDEX_FORMAT_VERSION {
            return Err(Error::IndexFormat(format!(
                "format version {version}, expected {INDEX_FORMAT_VERSION}"
            )));
        }
        let n = r.read_u64::<LittleEndian>()? as usize;
        let avgdl = r.read_f64::<LittleEndian>()?;
        let total_length = r.read_u64::<LittleEndian>()?;
        let stem = r.read_u8()? != 0;
        let n_stop = r.read_u32::<LittleEndian>()?;
        let mut stopwords = std::collections::BTreeSet::new();
        for _ in 0..n_stop {
            stopwords.insert(read_str(&mut r)?);
        }
        let mut doc_ids = Vec::with_capacity(n.min(1 << 24));
        let mut doc_lengths = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            doc_ids.push(read_str(&mut r)?);
            doc_lengths.push(r.read_u32::<LittleEndian>()?);
        }
        if doc_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::IndexFormat("document table not sorted".into()));
        }
        let n_terms = r.read_u64::<LittleEndian>()?;
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let term = read_str(&mut r)?;
            let len = r.read_u32::<LittleEndian>()? as usize;
            let mut list = Vec::with_capacity(len.min(1 << 24));
            for _ in 0..len {
                let doc = r.read_u32::<LittleEndian>()?;
                let tf = r.read_u32::<LittleEndian>()?;
                if doc as usize >= n || tf == 0 {
                    return Err(Error::IndexFormat(format!("corrupt posting for {term:?}")));
                }
                list.push(Posting { doc, tf });
            }
            postings.insert(term, list);
        }
        let index = InvertedIndex {
            doc_ids,
            doc_lengths,
            postings,
            total_length,
            analyzer: AnalyzerConfig { stem, stopwords },
        };
        if n == 0 || index.doc_lengths.iter().map(|&l| l as u64).sum::<u64>() != total_length {
            return Err(Error::IndexFormat("document lengths do not match header".into()));
        }
        if index.avgdl().to_bits() != avgdl.to_bits() {
            return Err(Error::IndexFormat("avgdl does not match header".into()));
        }
        Ok(index)
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::IndexFormat("invalid UTF-8 string".into()))
}
