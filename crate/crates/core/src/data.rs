//! Triples, vocabularies, query keys and the query frequency statistics that
//! every subsampling scheme consumes.
//!
//! Every stored triple `(h, r, t)` is expanded into two training examples:
//! the tail query `(h, r, ?)` answered by `t` and the head query `(?, r, t)`
//! answered by `h`. Example `2 * i` is the tail query of triple `i` and
//! example `2 * i + 1` its head query.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Bidirectional label <-> dense id map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Labels {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Labels {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    /// Returns the id of `label`, assigning the next dense id if unseen.
    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(id) = self.index.get(label) {
            return *id;
        }
        let id = self.names.len() as u32;
        self.names.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &str)> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, s)| (i as u32, s.as_str()))
    }

    fn write_tsv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (id, name) in self.iter() {
            writeln!(w, "{name}\t{id}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn read_tsv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: &str| Error::Parse {
                path: path.to_owned(),
                line: n + 1,
                message: message.to_owned(),
            };
            let (label, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| parse_err("expected `label<TAB>id`"))?;
            let id: u32 = id.parse().map_err(|_| parse_err("id is not an integer"))?;
            pairs.push((id, label.to_owned()));
        }
        pairs.sort_by_key(|(id, _)| *id);
        let mut labels = Labels::default();
        for (expected, (id, label)) in pairs.into_iter().enumerate() {
            if id as usize != expected {
                return Err(Error::Data(format!(
                    "{}: ids are not dense (missing id {expected})",
                    path.display()
                )));
            }
            if labels.index.contains_key(&label) {
                return Err(Error::Data(format!(
                    "{}: duplicate label `{label}`",
                    path.display()
                )));
            }
            labels.intern(&label);
        }
        Ok(labels)
    }
}

/// Entity and relation vocabularies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    pub entities: Labels,
    pub relations: Labels,
}

impl Vocab {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Writes `entities.tsv` and `relations.tsv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.entities.write_tsv(&dir.join("entities.tsv"))?;
        self.relations.write_tsv(&dir.join("relations.tsv"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Vocab {
            entities: Labels::read_tsv(&dir.join("entities.tsv"))?,
            relations: Labels::read_tsv(&dir.join("relations.tsv"))?,
        })
    }

    fn has_saved(dir: &Path) -> bool {
        dir.join("entities.tsv").is_file() && dir.join("relations.tsv").is_file()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

impl Triple {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }

    /// The query obtained by hiding one side of the triple.
    pub fn query(&self, direction: Direction) -> QueryKey {
        match direction {
            Direction::TailQuery => QueryKey::new(direction, self.head, self.relation),
            Direction::HeadQuery => QueryKey::new(direction, self.tail, self.relation),
        }
    }

    /// The entity hidden by `query(direction)`.
    pub fn answer(&self, direction: Direction) -> u32 {
        match direction {
            Direction::TailQuery => self.tail,
            Direction::HeadQuery => self.head,
        }
    }
}

/// Which side of a triple a query asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// `(h, r, ?)`
    TailQuery,
    /// `(?, r, t)`
    HeadQuery,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::TailQuery, Direction::HeadQuery];

    pub fn offset(self) -> usize {
        match self {
            Direction::TailQuery => 0,
            Direction::HeadQuery => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::TailQuery => "tail",
            Direction::HeadQuery => "head",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tail" => Some(Direction::TailQuery),
            "head" => Some(Direction::HeadQuery),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A query: the known entity and relation of a triple plus the missing side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueryKey {
    pub direction: Direction,
    pub entity: u32,
    pub relation: u32,
}

impl QueryKey {
    pub fn new(direction: Direction, entity: u32, relation: u32) -> Self {
        QueryKey {
            direction,
            entity,
            relation,
        }
    }

    /// Assembles the full triple for candidate answer `answer`.
    pub fn with_answer(&self, answer: u32) -> Triple {
        match self.direction {
            Direction::TailQuery => Triple::new(self.entity, self.relation, answer),
            Direction::HeadQuery => Triple::new(answer, self.relation, self.entity),
        }
    }
}

/// Index of a direction-expanded training example.
pub fn example_index(triple_index: usize, direction: Direction) -> usize {
    2 * triple_index + direction.offset()
}

/// Inverse of [`example_index`].
pub fn example_parts(example: usize) -> (usize, Direction) {
    let dir = if example.is_multiple_of(2) {
        Direction::TailQuery
    } else {
        Direction::HeadQuery
    };
    (example / 2, dir)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub vocab: Vocab,
}

impl Dataset {
    pub fn num_entities(&self) -> usize {
        self.vocab.num_entities()
    }

    pub fn num_relations(&self) -> usize {
        self.vocab.num_relations()
    }

    /// Size of the direction-expanded training set, `2 * |train|`.
    pub fn num_examples(&self) -> usize {
        2 * self.train.len()
    }

    /// Direction-expanded training examples in index order.
    pub fn examples(&self) -> impl Iterator<Item = (usize, Triple, Direction)> + '_ {
        self.train.iter().enumerate().flat_map(|(i, t)| {
            Direction::BOTH
                .into_iter()
                .map(move |d| (example_index(i, d), *t, d))
        })
    }

    pub fn example(&self, example: usize) -> (Triple, Direction) {
        let (i, d) = example_parts(example);
        (self.train[i], d)
    }

    /// Checks every id against the vocabulary sizes.
    pub fn validate(&self) -> Result<()> {
        let (e, r) = (self.num_entities() as u32, self.num_relations() as u32);
        for (name, split) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            if let Some(t) = split
                .iter()
                .find(|t| t.head >= e || t.tail >= e || t.relation >= r)
            {
                return Err(Error::Data(format!(
                    "{name} triple {t:?} out of range for E={e}, R={r}"
                )));
            }
        }
        Ok(())
    }

    /// Loads `train.txt`, `valid.txt` and `test.txt` from `dir`.
    ///
    /// If `entities.tsv` and `relations.tsv` exist they fix the vocabulary and
    /// unknown labels are errors; otherwise ids are assigned in order of first
    /// appearance across train, valid, test.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut vocab = if Vocab::has_saved(dir) {
            Some(Vocab::load(dir)?)
        } else {
            None
        };
        let grow = vocab.is_none();
        let mut v = vocab.take().unwrap_or_default();
        let train = read_triples(&split_path(dir, "train"), &mut v, grow)?;
        let valid = read_triples(&split_path(dir, "valid"), &mut v, grow)?;
        let test = read_triples(&split_path(dir, "test"), &mut v, grow)?;
        let ds = Dataset {
            train,
            valid,
            test,
            vocab: v,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Writes the three splits as labelled triple files plus the vocabulary.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.vocab.save(dir)?;
        for (name, split) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            write_triples(&dir.join(format!("{name}.txt")), split, &self.vocab)?;
        }
        Ok(())
    }
}

fn split_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.txt"))
}

/// Parses a tab-separated triple file.
///
/// With `existing_vocab` the vocabulary is fixed and unknown labels are an
/// error; otherwise a fresh vocabulary is built in first-appearance order.
pub fn load_triples(path: &Path, existing_vocab: Option<&Vocab>) -> Result<(Vec<Triple>, Vocab)> {
    let mut vocab = existing_vocab.cloned().unwrap_or_default();
    let triples = read_triples(path, &mut vocab, existing_vocab.is_none())?;
    Ok((triples, vocab))
}

fn read_triples(path: &Path, vocab: &mut Vocab, grow: bool) -> Result<Vec<Triple>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut triples = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: n + 1,
                message: format!("expected 3 non-empty tab-separated fields, found {}", fields.len()),
            });
        }
        let lookup = |labels: &mut Labels, kind: &'static str, label: &str| {
            if grow {
                Ok(labels.intern(label))
            } else {
                labels.id(label).ok_or_else(|| Error::UnknownLabel {
                    path: path.to_owned(),
                    line: n + 1,
                    kind,
                    label: label.to_owned(),
                })
            }
        };
        let head = lookup(&mut vocab.entities, "entity", fields[0])?;
        let relation = lookup(&mut vocab.relations, "relation", fields[1])?;
        let tail = lookup(&mut vocab.entities, "entity", fields[2])?;
        triples.push(Triple::new(head, relation, tail));
    }
    if triples.is_empty() {
        return Err(Error::EmptyFile(path.to_owned()));
    }
    Ok(triples)
}

pub fn write_triples(path: &Path, triples: &[Triple], vocab: &Vocab) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let missing = |what: &str, id: u32| Error::Data(format!("{what} id {id} not in vocabulary"));
    for t in triples {
        let h = vocab.entities.label(t.head).ok_or_else(|| missing("entity", t.head))?;
        let r = vocab
            .relations
            .label(t.relation)
            .ok_or_else(|| missing("relation", t.relation))?;
        let tl = vocab.entities.label(t.tail).ok_or_else(|| missing("entity", t.tail))?;
        writeln!(w, "{h}\t{r}\t{tl}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Smoothed query counts over the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    counts: HashMap<QueryKey, f64>,
    smoothing: f64,
}

impl FrequencyTable {
    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// Count of `q`, or the smoothing floor if `q` never occurs.
    pub fn query_frequency(&self, q: &QueryKey) -> f64 {
        self.counts.get(q).copied().unwrap_or(self.smoothing)
    }

    /// Back-off triple frequency: the mean of the triple's two query counts.
    pub fn triple_frequency(&self, t: &Triple) -> f64 {
        (self.query_frequency(&t.query(Direction::TailQuery))
            + self.query_frequency(&t.query(Direction::HeadQuery)))
            / 2.0
    }

    /// Observed query keys with their smoothed counts.
    pub fn iter(&self) -> impl Iterator<Item = (&QueryKey, f64)> {
        self.counts.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Counts both query projections of every training triple.
pub fn count_queries(train: &[Triple], smoothing: f64) -> FrequencyTable {
    assert!(smoothing >= 0.0, "smoothing must be non-negative");
    let mut raw: HashMap<QueryKey, u64> = HashMap::new();
    for t in train {
        for d in Direction::BOTH {
            *raw.entry(t.query(d)).or_insert(0) += 1;
        }
    }
    FrequencyTable {
        counts: raw
            .into_iter()
            .map(|(k, c)| (k, c as f64 + smoothing))
            .collect(),
        smoothing,
    }
}

/// For every query: the sorted, deduplicated list of answers observed in
/// the given triples.
#[derive(Debug, Clone, Default)]
pub struct AnswerIndex {
    answers: HashMap<QueryKey, Vec<u32>>,
}

impl AnswerIndex {
    pub fn build<'a>(splits: impl IntoIterator<Item = &'a [Triple]>) -> Self {
        let mut answers: HashMap<QueryKey, Vec<u32>> = HashMap::new();
        for split in splits {
            for t in split {
                for d in Direction::BOTH {
                    answers.entry(t.query(d)).or_default().push(t.answer(d));
                }
            }
        }
        for v in answers.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        AnswerIndex { answers }
    }

    pub fn answers(&self, q: &QueryKey) -> &[u32] {
        self.answers.get(q).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, q: &QueryKey, entity: u32) -> bool {
        self.answers(q).binary_search(&entity).is_ok()
    }
}

/// Number of training triples each entity takes part in (as head or tail,
/// counted once per triple).
pub fn entity_frequencies(train: &[Triple], num_entities: usize) -> Vec<u64> {
    let mut counts = vec![0u64; num_entities];
    for t in train {
        counts[t.head as usize] += 1;
        if t.tail != t.head {
            counts[t.tail as usize] += 1;
        }
    }
    counts
}

pub fn relation_frequencies(train: &[Triple], num_relations: usize) -> Vec<u64> {
    let mut counts = vec![0u64; num_relations];
    for t in train {
        counts[t.relation as usize] += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingletonQuery {
    pub query: QueryKey,
    pub entity_count: u64,
    pub relation_count: u64,
}

/// Queries that occur exactly once in `train`, with the training frequency
/// of their entity and relation, sorted by entity frequency descending
/// (ties by relation frequency descending, then by query key).
pub fn singleton_query_stats(train: &[Triple]) -> Vec<SingletonQuery> {
    let mut raw: BTreeMap<QueryKey, u64> = BTreeMap::new();
    let mut max_e = 0;
    let mut max_r = 0;
    for t in train {
        max_e = max_e.max(t.head.max(t.tail) as usize + 1);
        max_r = max_r.max(t.relation as usize + 1);
        for d in Direction::BOTH {
            *raw.entry(t.query(d)).or_insert(0) += 1;
        }
    }
    let ent = entity_frequencies(train, max_e);
    let rel = relation_frequencies(train, max_r);
    let mut out: Vec<SingletonQuery> = raw
        .into_iter()
        .filter(|(_, c)| *c == 1)
        .map(|(q, _)| SingletonQuery {
            query: q,
            entity_count: ent[q.entity as usize],
            relation_count: rel[q.relation as usize],
        })
        .collect();
    out.sort_by(|a, b| {
        b.entity_count
            .cmp(&a.entity_count)
            .then(b.relation_count.cmp(&a.relation_count))
            .then(a.query.cmp(&b.query))
    });
    out
}
