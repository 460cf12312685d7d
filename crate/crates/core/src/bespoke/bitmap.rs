//! Container-partitioned compressed bitmap over `u32`.
//!
//! Values are split by their high 16 bits into chunks. A chunk with at most
//! [`ARRAY_MAX`] members is a sorted `u16` array; a denser chunk is a 2¹⁶-bit
//! bitset. Intersection counts walk matching chunks without building the
//! intersection.

use std::fmt;

/// Largest array container; one more member converts it to a bitset.
pub const ARRAY_MAX: usize = 4096;
const WORDS: usize = 1 << 10;

#[derive(Clone, PartialEq, Eq)]
enum Container {
    Array(Vec<u16>),
    Bitset { words: Box<[u64; WORDS]>, len: u32 },
}

impl Container {
    fn len(&self) -> u32 {
        match self {
            Container::Array(v) => v.len() as u32,
            Container::Bitset { len, .. } => *len,
        }
    }

    fn contains(&self, low: u16) -> bool {
        match self {
            Container::Array(v) => v.binary_search(&low).is_ok(),
            Container::Bitset { words, .. } => words[low as usize >> 6] & (1 << (low & 63)) != 0,
        }
    }

    /// Returns true if `low` was newly inserted.
    fn insert(&mut self, low: u16) -> bool {
        match self {
            Container::Array(v) => match v.binary_search(&low) {
                Ok(_) => false,
                Err(pos) => {
                    if v.len() < ARRAY_MAX {
                        v.insert(pos, low);
                    } else {
                        let mut words = Box::new([0u64; WORDS]);
                        for &x in v.iter() {
                            words[x as usize >> 6] |= 1 << (x & 63);
                        }
                        words[low as usize >> 6] |= 1 << (low & 63);
                        *self = Container::Bitset {
                            words,
                            len: ARRAY_MAX as u32 + 1,
                        };
                    }
                    true
                }
            },
            Container::Bitset { words, len } => {
                let (w, bit) = (low as usize >> 6, 1u64 << (low & 63));
                if words[w] & bit != 0 {
                    return false;
                }
                words[w] |= bit;
                *len += 1;
                true
            }
        }
    }

    fn intersect_len(&self, other: &Container) -> u32 {
        match (self, other) {
            (Container::Array(a), Container::Array(b)) => {
                let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
                if small.len() * 16 < large.len() {
                    small
                        .iter()
                        .filter(|x| large.binary_search(x).is_ok())
                        .count() as u32
                } else {
                    merge_count(a, b)
                }
            }
            (Container::Array(a), b @ Container::Bitset { .. })
            | (b @ Container::Bitset { .. }, Container::Array(a)) => {
                a.iter().filter(|&&x| b.contains(x)).count() as u32
            }
            (Container::Bitset { words: a, .. }, Container::Bitset { words: b, .. }) => a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (x & y).count_ones())
                .sum(),
        }
    }

    fn intersect(&self, other: &Container) -> Option<Container> {
        let out = match (self, other) {
            (Container::Bitset { words: a, .. }, Container::Bitset { words: b, .. }) => {
                let mut words = Box::new([0u64; WORDS]);
                let mut len = 0;
                for i in 0..WORDS {
                    words[i] = a[i] & b[i];
                    len += words[i].count_ones();
                }
                if len as usize > ARRAY_MAX {
                    Container::Bitset { words, len }
                } else {
                    Container::Array(bits_to_array(&words))
                }
            }
            (Container::Array(a), b) | (b, Container::Array(a)) => {
                Container::Array(a.iter().copied().filter(|&x| b.contains(x)).collect())
            }
        };
        (out.len() > 0).then_some(out)
    }

    fn for_each(&self, mut f: impl FnMut(u16)) {
        match self {
            Container::Array(v) => v.iter().for_each(|&x| f(x)),
            Container::Bitset { words, .. } => {
                for (i, &w) in words.iter().enumerate() {
                    let mut w = w;
                    while w != 0 {
                        f((i * 64) as u16 + w.trailing_zeros() as u16);
                        w &= w - 1;
                    }
                }
            }
        }
    }
}

fn merge_count(a: &[u16], b: &[u16]) -> u32 {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn bits_to_array(words: &[u64; WORDS]) -> Vec<u16> {
    let mut out = Vec::new();
    for (i, &w) in words.iter().enumerate() {
        let mut w = w;
        while w != 0 {
            out.push((i * 64) as u16 + w.trailing_zeros() as u16);
            w &= w - 1;
        }
    }
    out
}

/// A set of `u32` values stored as sorted `(high 16 bits, container)` chunks.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct CompressedBitmap {
    chunks: Vec<(u16, Container)>,
}

impl CompressedBitmap {
    pub fn new() -> Self {
        Self::default()
    }

    fn chunk(&self, high: u16) -> Option<&Container> {
        self.chunks
            .binary_search_by_key(&high, |(k, _)| *k)
            .ok()
            .map(|i| &self.chunks[i].1)
    }

    /// Inserts `x`; returns true if it was not already present.
    pub fn add(&mut self, x: u32) -> bool {
        let (high, low) = ((x >> 16) as u16, x as u16);
        // appends in ascending order hit the last chunk
        if let Some((k, c)) = self.chunks.last_mut() {
            if *k == high {
                return c.insert(low);
            }
        }
        match self.chunks.binary_search_by_key(&high, |(k, _)| *k) {
            Ok(i) => self.chunks[i].1.insert(low),
            Err(i) => {
                self.chunks.insert(i, (high, Container::Array(vec![low])));
                true
            }
        }
    }

    pub fn contains(&self, x: u32) -> bool {
        self.chunk((x >> 16) as u16)
            .is_some_and(|c| c.contains(x as u16))
    }

    pub fn cardinality(&self) -> u64 {
        self.chunks.iter().map(|(_, c)| c.len() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// `|self ∩ other|` without materializing the intersection.
    pub fn intersect_cardinality(&self, other: &CompressedBitmap) -> u64 {
        let (a, b) = (&self.chunks, &other.chunks);
        let (mut i, mut j, mut n) = (0, 0, 0u64);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += a[i].1.intersect_len(&b[j].1) as u64;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// The intersection as a new bitmap.
    pub fn and(&self, other: &CompressedBitmap) -> CompressedBitmap {
        let (a, b) = (&self.chunks, &other.chunks);
        let (mut i, mut j) = (0, 0);
        let mut chunks = Vec::new();
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    if let Some(c) = a[i].1.intersect(&b[j].1) {
                        chunks.push((a[i].0, c));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        CompressedBitmap { chunks }
    }

    /// True if every member of `self` is in `other`.
    pub fn is_subset(&self, other: &CompressedBitmap) -> bool {
        self.intersect_cardinality(other) == self.cardinality()
    }

    /// Members in ascending order.
    pub fn to_vec(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.cardinality() as usize);
        for (high, c) in &self.chunks {
            let base = (*high as u32) << 16;
            c.for_each(|low| out.push(base | low as u32));
        }
        out
    }

    /// Number of chunks stored as bitsets.
    pub fn bitset_chunks(&self) -> usize {
        self.chunks
            .iter()
            .filter(|(_, c)| matches!(c, Container::Bitset { .. }))
            .count()
    }

    /// Approximate heap footprint in bytes.
    pub fn heap_bytes(&self) -> usize {
        self.chunks
            .iter()
            .map(|(_, c)| match c {
                Container::Array(v) => 2 * v.capacity(),
                Container::Bitset { .. } => 8 * WORDS,
            })
            .sum::<usize>()
            + self.chunks.capacity() * std::mem::size_of::<(u16, Container)>()
    }
}

impl FromIterator<u32> for CompressedBitmap {
    fn from_iter<I: IntoIterator<Item = u32>>(iter: I) -> Self {
        let mut b = CompressedBitmap::new();
        for x in iter {
            b.add(x);
        }
        b
    }
}

impl fmt::Debug for CompressedBitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "CompressedBitmap(len={}, chunks={})",
            self.cardinality(),
            self.chunks.len()
        )
    }
}
