//! Byte-pair-merge subword tokenizer over a word-boundary-marked character
//! stream.
//!
//! Spaces become `▁` (U+2581) before training and encoding, and a word is a
//! run of characters starting at a boundary marker, so merges never cross a
//! word start. Text that already contains `▁` decodes with spaces in its
//! place.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const BOUNDARY: char = '\u{2581}';
pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BOS_ID: usize = 2;
pub const EOS_ID: usize = 3;
/// Smallest target: the specials plus one piece.
pub const MIN_VOCAB: usize = SPECIALS.len() + 1;
const HEADER: &str = "bpe-v1";
const MERGES_MARK: &str = "#merges";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TokenizerOptions {
    /// Lowercase text before training and encoding.
    pub lowercase: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    pieces: Vec<String>,
    /// `(left, right)` piece ids in rule order.
    merges: Vec<(usize, usize)>,
    /// Size asked for; larger than `len()` when the corpus ran out of pairs.
    requested: usize,
    options: TokenizerOptions,
    index: HashMap<String, usize>,
    ranks: HashMap<(usize, usize), (usize, usize)>,
}

fn normalize(text: &str, options: TokenizerOptions) -> String {
    let text = if options.lowercase {
        text.to_lowercase()
    } else {
        text.to_string()
    };
    text.replace(' ', &BOUNDARY.to_string())
}

/// Splits marked text before every boundary marker.
fn split_words(marked: &str) -> Vec<&str> {
    let mut words = Vec::new();
    let mut start = 0;
    for (i, c) in marked.char_indices() {
        if c == BOUNDARY && i > start {
            words.push(&marked[start..i]);
            start = i;
        }
    }
    if start < marked.len() {
        words.push(&marked[start..]);
    }
    words
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct HeapKey {
    count: i64,
    pair: Reverse<(String, String)>,
    ids: (usize, usize),
}

fn pairs(symbols: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
    symbols
        .windows(2)
        .map(|w| (w[0], w[1]))
        .filter(|&(a, b)| a != UNK_ID && b != UNK_ID)
}

/// Trains a vocabulary of exactly `target` pieces, or as many as the corpus
/// supports. Base pieces are the corpus characters by descending frequency
/// (ties by code point); each merge joins the most frequent adjacent pair,
/// ties going to the lexicographically smallest `(left, right)`.
pub fn train_vocab<S: AsRef<str>>(corpus: &[S], target: usize, options: TokenizerOptions) -> Result<Vocab> {
    if target < MIN_VOCAB {
        return Err(Error::VocabTooSmall(target));
    }
    let mut word_counts: HashMap<String, i64> = HashMap::new();
    for line in corpus {
        let marked = normalize(line.as_ref(), options);
        for w in split_words(&marked) {
            *word_counts.entry(w.to_string()).or_default() += 1;
        }
    }
    if word_counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut char_counts: HashMap<char, i64> = HashMap::new();
    for (w, &n) in &word_counts {
        for c in w.chars() {
            *char_counts.entry(c).or_default() += n;
        }
    }
    let mut chars: Vec<(char, i64)> = char_counts.into_iter().collect();
    chars.sort_by_key(|&(c, n)| (Reverse(n), c));
    chars.truncate(target - SPECIALS.len());

    let mut pieces: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    pieces.extend(chars.iter().map(|(c, _)| c.to_string()));
    let mut index: HashMap<String, usize> = pieces.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();

    // Sorted so that iteration order, and with it every tie, is fixed.
    let mut words: Vec<(String, i64)> = word_counts.into_iter().collect();
    words.sort();
    let counts: Vec<i64> = words.iter().map(|w| w.1).collect();
    let mut symbols: Vec<Vec<usize>> = words
        .iter()
        .map(|(w, _)| {
            w.chars()
                .map(|c| index.get(c.encode_utf8(&mut [0; 4]) as &str).copied().unwrap_or(UNK_ID))
                .collect()
        })
        .collect();

    let mut pair_counts: HashMap<(usize, usize), i64> = HashMap::new();
    let mut where_: HashMap<(usize, usize), HashSet<usize>> = HashMap::new();
    for (wi, s) in symbols.iter().enumerate() {
        for p in pairs(s) {
            *pair_counts.entry(p).or_default() += counts[wi];
            where_.entry(p).or_default().insert(wi);
        }
    }
    let key = |pieces: &[String], p: (usize, usize), count: i64| HeapKey {
        count,
        pair: Reverse((pieces[p.0].clone(), pieces[p.1].clone())),
        ids: p,
    };
    let mut heap: BinaryHeap<HeapKey> = pair_counts.iter().map(|(&p, &n)| key(&pieces, p, n)).collect();

    let mut merges = Vec::new();
    while pieces.len() < target {
        let Some(top) = heap.pop() else { break };
        let (a, b) = top.ids;
        let current = pair_counts.get(&(a, b)).copied().unwrap_or(0);
        if current != top.count || current <= 0 {
            continue;
        }
        let merged = format!("{}{}", pieces[a], pieces[b]);
        let id = match index.get(&merged) {
            Some(&id) => id,
            None => {
                pieces.push(merged.clone());
                index.insert(merged, pieces.len() - 1);
                pieces.len() - 1
            }
        };
        merges.push((a, b));

        let mut affected: Vec<usize> = where_.remove(&(a, b)).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        let mut delta: HashMap<(usize, usize), i64> = HashMap::new();
        for wi in affected {
            let old = &symbols[wi];
            let new = merge_symbols(old, a, b, id);
            if new.len() == old.len() {
                continue;
            }
            for p in pairs(old) {
                *delta.entry(p).or_default() -= counts[wi];
            }
            for p in pairs(&new) {
                *delta.entry(p).or_default() += counts[wi];
                where_.entry(p).or_default().insert(wi);
            }
            symbols[wi] = new;
        }
        let mut changed: Vec<((usize, usize), i64)> = delta.into_iter().filter(|&(_, d)| d != 0).collect();
        changed.sort_unstable();
        for (p, d) in changed {
            let n = pair_counts.entry(p).or_default();
            *n += d;
            if *n > 0 {
                heap.push(key(&pieces, p, *n));
            }
        }
        pair_counts.remove(&(a, b));
    }
    Ok(Vocab::assemble(pieces, merges, target, options))
}

/// Replaces every left-to-right occurrence of `(a, b)` by `id`.
fn merge_symbols(symbols: &[usize], a: usize, b: usize, id: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == a && symbols[i + 1] == b {
            out.push(id);
            i += 2;
        } else {
            out.push(symbols[i]);
            i += 1;
        }
    }
    out
}

fn escape(piece: &str) -> String {
    let mut out = String::with_capacity(piece.len());
    for c in piece.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            ' ' => out.push_str("\\s"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str, loc: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next() {
            Some('\\') => '\\',
            Some('n') => '\n',
            Some('r') => '\r',
            Some('t') => '\t',
            Some('s') => ' ',
            other => {
                return Err(Error::parse(
                    loc,
                    format!("bad escape \\{}", other.map_or(String::new(), String::from)),
                ))
            }
        });
    }
    Ok(out)
}

impl Vocab {
    fn assemble(pieces: Vec<String>, merges: Vec<(usize, usize)>, requested: usize, options: TokenizerOptions) -> Self {
        let index: HashMap<String, usize> = pieces.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        let mut ranks = HashMap::new();
        for (r, &(a, b)) in merges.iter().enumerate() {
            let id = index[&format!("{}{}", pieces[a], pieces[b])];
            ranks.entry((a, b)).or_insert((r, id));
        }
        Self {
            pieces,
            merges,
            requested,
            options,
            index,
            ranks,
        }
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn requested(&self) -> usize {
        self.requested
    }

    pub fn options(&self) -> TokenizerOptions {
        self.options
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn piece(&self, id: usize) -> Option<&str> {
        self.pieces.get(id).map(String::as_str)
    }

    pub fn id_of(&self, piece: &str) -> Option<usize> {
        self.index.get(piece).copied()
    }

    /// Merge rules as piece strings, in rank order.
    pub fn merges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.merges
            .iter()
            .map(|&(a, b)| (self.pieces[a].as_str(), self.pieces[b].as_str()))
    }

    /// Applies the lowest-ranked applicable merge until none applies.
    /// Characters outside the vocabulary map to `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let marked = normalize(text, self.options);
        let mut out = Vec::new();
        for word in split_words(&marked) {
            let mut syms: Vec<usize> = word
                .chars()
                .map(|c| self.id_of(c.encode_utf8(&mut [0; 4])).unwrap_or(UNK_ID))
                .collect();
            loop {
                let best = syms
                    .windows(2)
                    .filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&(r, id)| (r, w[0], w[1], id)))
                    .min();
                let Some((_, a, b, id)) = best else { break };
                syms = merge_symbols(&syms, a, b, id);
            }
            out.extend(syms);
        }
        out
    }

    /// Concatenates pieces and restores spaces. `<unk>` renders as U+FFFD;
    /// the other specials render as nothing.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            match id {
                UNK_ID => out.push('\u{FFFD}'),
                PAD_ID | BOS_ID | EOS_ID => {}
                _ => out.push_str(self.piece(id).ok_or(Error::IdOutOfRange { id, size: self.len() })?),
            }
        }
        Ok(out.replace(BOUNDARY, " "))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER} size={}", self.len());
        if self.requested != self.len() {
            write!(out, " requested={}", self.requested).unwrap();
        }
        if self.options.lowercase {
            out.push_str(" lowercase=true");
        }
        out.push('\n');
        for p in &self.pieces {
            out.push_str(&escape(p));
            out.push('\n');
        }
        out.push_str(MERGES_MARK);
        out.push('\n');
        for (a, b) in self.merges() {
            writeln!(out, "{} {}", escape(a), escape(b)).unwrap();
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let loc = |n: usize| format!("{origin}:{}", n + 1);
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(loc(0), "empty vocabulary file"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(HEADER) {
            return Err(Error::parse(loc(0), format!("expected `{HEADER}` header")));
        }
        let (mut size, mut requested, mut options) = (None, None, TokenizerOptions::default());
        for f in fields {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| Error::parse(loc(0), format!("bad header field {f:?}")))?;
            let bad = || Error::parse(loc(0), format!("bad value in {f:?}"));
            match k {
                "size" => size = Some(v.parse::<usize>().map_err(|_| bad())?),
                "requested" => requested = Some(v.parse::<usize>().map_err(|_| bad())?),
                "lowercase" => options.lowercase = v.parse().map_err(|_| bad())?,
                _ => return Err(Error::parse(loc(0), format!("unknown header field {k:?}"))),
            }
        }
        let size = size.ok_or_else(|| Error::parse(loc(0), "header lacks size"))?;
        let mut pieces = Vec::with_capacity(size);
        for _ in 0..size {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(origin, "fewer pieces than size"))?;
            pieces.push(unescape(line, &loc(n))?);
        }
        if pieces.len() < MIN_VOCAB || pieces[..SPECIALS.len()] != SPECIALS {
            return Err(Error::parse(origin, "vocabulary must start with the four specials"));
        }
        let mut index = HashMap::new();
        for (i, p) in pieces.iter().enumerate() {
            if index.insert(p.clone(), i).is_some() {
                return Err(Error::parse(origin, format!("duplicate piece {p:?}")));
            }
        }
        match lines.next() {
            Some((_, MERGES_MARK)) => {}
            Some((n, _)) => return Err(Error::parse(loc(n), format!("expected {MERGES_MARK}"))),
            None => return Err(Error::parse(origin, format!("missing {MERGES_MARK} section"))),
        }
        let mut merges = Vec::new();
        for (n, line) in lines {
            let (a, b) = line
                .split_once(' ')
                .ok_or_else(|| Error::parse(loc(n), "expected `left right`"))?;
            let id = |s: &str| -> Result<usize> {
                let s = unescape(s, &loc(n))?;
                index
                    .get(&s)
                    .copied()
                    .ok_or_else(|| Error::parse(loc(n), format!("merge uses unknown piece {s:?}")))
            };
            let (a, b) = (id(a)?, id(b)?);
            if !index.contains_key(&format!("{}{}", pieces[a], pieces[b])) {
                return Err(Error::parse(loc(n), "merge result is not a piece"));
            }
            merges.push((a, b));
        }
        Ok(Self::assemble(pieces, merges, requested.unwrap_or(size), options))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}
