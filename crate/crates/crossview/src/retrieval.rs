//! Packed binary codes with XOR/popcount Hamming ranking and radius lookup.
//!
//! Codes pack LSB-first: bit `j` of a row lives in byte `j / 8` at bit
//! position `j % 8`. Unused trailing bits of the last byte are always zero,
//! so distances never need masking.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::bytes;
use crate::error::{Error, Result};

const CODE_MAGIC: &[u8; 4] = b"CVHC";
const CODE_VERSION: u8 = 1;

/// A plain bit matrix, the unpacked form of a code set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl BitMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![false; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[bool] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// One ranked retrieval hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankedHit {
    pub id: u64,
    pub distance: u32,
}

/// N binary codes of D bits each, packed 8 per byte, with aligned ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodeSet {
    code_bits: usize,
    row_bytes: usize,
    ids: Vec<u64>,
    storage: Vec<u8>,
}

fn check_unique_ids(ids: &[u64]) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(ids.len());
    for &id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id));
        }
    }
    Ok(())
}

impl PackedCodeSet {
    /// Packs a bit matrix row by row.
    pub fn pack(codes: &BitMatrix, ids: &[u64]) -> Result<Self> {
        if ids.len() != codes.rows() {
            return Err(Error::Dimension {
                op: "codes::pack",
                detail: format!("{} ids for {} code rows", ids.len(), codes.rows()),
            });
        }
        check_unique_ids(ids)?;
        let code_bits = codes.cols();
        let row_bytes = code_bits.div_ceil(8);
        let mut storage = vec![0u8; codes.rows() * row_bytes];
        for r in 0..codes.rows() {
            let row = &mut storage[r * row_bytes..(r + 1) * row_bytes];
            for (j, &bit) in codes.row(r).iter().enumerate() {
                if bit {
                    row[j / 8] |= 1 << (j % 8);
                }
            }
        }
        Ok(Self { code_bits, row_bytes, ids: ids.to_vec(), storage })
    }

    /// Assembles a code set from already packed rows.
    pub fn from_parts(code_bits: usize, ids: Vec<u64>, storage: Vec<u8>) -> Result<Self> {
        let row_bytes = code_bits.div_ceil(8);
        if storage.len() != ids.len() * row_bytes {
            return Err(Error::Dimension {
                op: "codes::from_parts",
                detail: format!(
                    "{} bytes of storage for {} rows of {row_bytes} bytes",
                    storage.len(),
                    ids.len()
                ),
            });
        }
        check_unique_ids(&ids)?;
        let set = Self { code_bits, row_bytes, ids, storage };
        set.check_trailing_bits()?;
        Ok(set)
    }

    fn check_trailing_bits(&self) -> Result<()> {
        let spare = self.row_bytes * 8 - self.code_bits;
        if spare == 0 || self.row_bytes == 0 {
            return Ok(());
        }
        let mask = !(0xFFu8 >> spare);
        for r in 0..self.len() {
            if self.row(r)[self.row_bytes - 1] & mask != 0 {
                return Err(Error::Format(format!("row {r} has nonzero bits past {}", self.code_bits)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn code_bits(&self) -> usize {
        self.code_bits
    }

    pub fn row_bytes(&self) -> usize {
        self.row_bytes
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.storage[r * self.row_bytes..(r + 1) * self.row_bytes]
    }

    /// Packed code for the given id, if present.
    pub fn row_by_id(&self, id: u64) -> Option<&[u8]> {
        self.ids.iter().position(|&i| i == id).map(|r| self.row(r))
    }

    pub fn unpack(&self) -> BitMatrix {
        let mut bits = BitMatrix::new(self.len(), self.code_bits);
        for r in 0..self.len() {
            let row = self.row(r);
            for j in 0..self.code_bits {
                bits.set(r, j, row[j / 8] >> (j % 8) & 1 == 1);
            }
        }
        bits
    }

    /// New code set holding `keep` ids in the given order.
    pub fn subset(&self, keep: &[u64]) -> Result<Self> {
        let index: std::collections::HashMap<u64, usize> =
            self.ids.iter().enumerate().map(|(r, &id)| (id, r)).collect();
        let mut ids = Vec::with_capacity(keep.len());
        let mut storage = Vec::with_capacity(keep.len() * self.row_bytes);
        for &id in keep {
            let &r = index.get(&id).ok_or(Error::Argument(format!("id {id} not in code set")))?;
            ids.push(id);
            storage.extend_from_slice(self.row(r));
        }
        check_unique_ids(&ids)?;
        Ok(Self { code_bits: self.code_bits, row_bytes: self.row_bytes, ids, storage })
    }

    /// Full-scan top-k by Hamming distance; ties break toward smaller id.
    ///
    /// An empty set yields an empty result.
    pub fn rank(&self, query: &[u8], k: usize) -> Result<Vec<RankedHit>> {
        if k == 0 {
            return Err(Error::Argument("rank requires k >= 1".into()));
        }
        if query.len() != self.row_bytes {
            return Err(Error::Dimension {
                op: "codes::rank",
                detail: format!("query of {} bytes against {}-byte rows", query.len(), self.row_bytes),
            });
        }
        let mut hits: Vec<(u32, u64)> = Vec::with_capacity(self.len());
        for r in 0..self.len() {
            hits.push((hamming_unchecked(query, self.row(r)), self.ids[r]));
        }
        let k = k.min(hits.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < hits.len() {
            hits.select_nth_unstable(k - 1);
            hits.truncate(k);
        }
        hits.sort_unstable();
        Ok(hits.into_iter().map(|(distance, id)| RankedHit { id, distance }).collect())
    }

    /// All ids within the given Hamming radius, in row order.
    pub fn lookup(&self, query: &[u8], radius: u32) -> Result<Vec<u64>> {
        if radius as usize > self.code_bits {
            return Err(Error::Argument(format!(
                "radius {radius} exceeds code length {}",
                self.code_bits
            )));
        }
        if query.len() != self.row_bytes {
            return Err(Error::Dimension {
                op: "codes::lookup",
                detail: format!("query of {} bytes against {}-byte rows", query.len(), self.row_bytes),
            });
        }
        let mut out = Vec::new();
        for r in 0..self.len() {
            if hamming_unchecked(query, self.row(r)) <= radius {
                out.push(self.ids[r]);
            }
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CODE_MAGIC)?;
        w.write_all(&[CODE_VERSION])?;
        bytes::write_u64(&mut w, self.len() as u64)?;
        bytes::write_u32(&mut w, self.code_bits as u32)?;
        for &id in &self.ids {
            bytes::write_u64(&mut w, id)?;
        }
        w.write_all(&self.storage)?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        bytes::expect_header(&mut r, CODE_MAGIC, CODE_VERSION, "code")?;
        let n = bytes::read_u64(&mut r)? as usize;
        let code_bits = bytes::read_u32(&mut r)? as usize;
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            ids.push(bytes::read_u64(&mut r)?);
        }
        let row_bytes = code_bits.div_ceil(8);
        let mut storage = vec![0u8; n * row_bytes];
        r.read_exact(&mut storage)?;
        Self::from_parts(code_bits, ids, storage)
    }
}

/// XOR/popcount distance between two packed codes of equal width.
pub fn hamming(a: &[u8], b: &[u8]) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            op: "hamming",
            detail: format!("{} bytes vs {} bytes", a.len(), b.len()),
        });
    }
    Ok(hamming_unchecked(a, b))
}

fn hamming_unchecked(a: &[u8], b: &[u8]) -> u32 {
    let mut total = 0u32;
    let mut ac = a.chunks_exact(8);
    let mut bc = b.chunks_exact(8);
    for (x, y) in (&mut ac).zip(&mut bc) {
        let xv = u64::from_le_bytes(x.try_into().expect("8-byte chunk"));
        let yv = u64::from_le_bytes(y.try_into().expect("8-byte chunk"));
        total += (xv ^ yv).count_ones();
    }
    for (x, y) in ac.remainder().iter().zip(bc.remainder()) {
        total += (x ^ y).count_ones();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bits(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> BitMatrix {
        let mut m = BitMatrix::new(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, rng.gen_bool(0.5));
            }
        }
        m
    }

    #[test]
    fn pack_is_lsb_first() {
        let mut bits = BitMatrix::new(1, 8);
        for (j, v) in [true, false, true, true, false, false, false, false].into_iter().enumerate() {
            bits.set(0, j, v);
        }
        let set = PackedCodeSet::pack(&bits, &[7]).unwrap();
        assert_eq!(set.row(0), &[0x0D]);
    }

    #[test]
    fn sixty_four_bit_codes_use_eight_bytes() {
        let set = PackedCodeSet::pack(&BitMatrix::new(3, 64), &[1, 2, 3]).unwrap();
        assert_eq!(set.row_bytes(), 8);
        assert_eq!(set.row(0).len(), 8);
    }

    #[test]
    fn pack_unpack_roundtrip() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cols = rng.gen_range(1..40);
            let rows = rng.gen_range(1..30);
            let bits = random_bits(rows, cols, &mut rng);
            let ids: Vec<u64> = (0..rows as u64).map(|i| i * 3 + 11).collect();
            let set = PackedCodeSet::pack(&bits, &ids).unwrap();
            assert_eq!(set.unpack(), bits, "seed {seed}");
        }
    }

    #[test]
    fn pack_rejects_duplicate_ids() {
        let bits = BitMatrix::new(2, 4);
        let err = PackedCodeSet::pack(&bits, &[5, 5]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(5)));
    }

    #[test]
    fn from_parts_rejects_dirty_trailing_bits() {
        // D=4 leaves the high nibble unused; 0x10 sets bit 4.
        let err = PackedCodeSet::from_parts(4, vec![1], vec![0x10]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn hamming_trivial_cases() {
        assert_eq!(hamming(&[0xAB], &[0xAB]).unwrap(), 0);
        assert_eq!(hamming(&[0xFF], &[0x00]).unwrap(), 8);
        assert!(hamming(&[0xFF], &[0x00, 0x00]).is_err());
    }

    #[test]
    fn hamming_matches_bit_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..100_000 {
            let a: u64 = rng.gen();
            let b: u64 = rng.gen();
            let ab = a.to_le_bytes();
            let bb = b.to_le_bytes();
            let mut expect = 0;
            for j in 0..64 {
                if (a >> j) & 1 != (b >> j) & 1 {
                    expect += 1;
                }
            }
            assert_eq!(hamming(&ab, &bb).unwrap(), expect);
        }
    }

    #[test]
    fn hamming_is_a_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10_000 {
            let a = rng.gen::<u64>().to_le_bytes();
            let b = rng.gen::<u64>().to_le_bytes();
            let c = rng.gen::<u64>().to_le_bytes();
            let ab = hamming(&a, &b).unwrap();
            let ba = hamming(&b, &a).unwrap();
            let bc = hamming(&b, &c).unwrap();
            let ac = hamming(&a, &c).unwrap();
            assert_eq!(ab, ba);
            assert!(ac <= ab + bc, "triangle: {ac} > {ab} + {bc}");
        }
    }

    #[test]
    fn rank_finds_exact_match_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bits = random_bits(20, 16, &mut rng);
        let ids: Vec<u64> = (0..20).collect();
        let set = PackedCodeSet::pack(&bits, &ids).unwrap();
        let query = set.row(7).to_vec();
        let top = set.rank(&query, 1).unwrap();
        assert_eq!(top[0].distance, 0);
        // Id 7 unless another row duplicates the code with a smaller id.
        assert!(top[0].id <= 7);
    }

    #[test]
    fn rank_matches_sort_everything_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let bits = random_bits(1000, 32, &mut rng);
        let ids: Vec<u64> = (0..1000u64).map(|i| 5000 - i).collect();
        let set = PackedCodeSet::pack(&bits, &ids).unwrap();
        let query = random_bits(1, 32, &mut rng);
        let qset = PackedCodeSet::pack(&query, &[0]).unwrap();

        let mut oracle: Vec<(u32, u64)> = (0..set.len())
            .map(|r| (hamming(qset.row(0), set.row(r)).unwrap(), set.ids()[r]))
            .collect();
        oracle.sort_unstable();

        for k in [1, 7, 500, 1000, 2000] {
            let got = set.rank(qset.row(0), k).unwrap();
            assert_eq!(got.len(), k.min(1000));
            for (hit, &(d, id)) in got.iter().zip(&oracle) {
                assert_eq!((hit.distance, hit.id), (d, id), "k={k}");
            }
        }
    }

    #[test]
    fn rank_breaks_ties_by_ascending_id() {
        // Three identical codes with shuffled ids all sit at distance 0.
        let bits = BitMatrix::new(3, 8);
        let set = PackedCodeSet::pack(&bits, &[42, 7, 19]).unwrap();
        let got = set.rank(&[0u8], 3).unwrap();
        let ids: Vec<u64> = got.iter().map(|h| h.id).collect();
        assert_eq!(ids, vec![7, 19, 42]);
    }

    #[test]
    fn rank_distances_are_permutation_of_all_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let bits = random_bits(50, 24, &mut rng);
        let ids: Vec<u64> = (0..50).collect();
        let set = PackedCodeSet::pack(&bits, &ids).unwrap();
        let q = random_bits(1, 24, &mut rng);
        let qset = PackedCodeSet::pack(&q, &[0]).unwrap();

        let mut from_rank: Vec<u32> =
            set.rank(qset.row(0), 50).unwrap().iter().map(|h| h.distance).collect();
        let mut direct: Vec<u32> =
            (0..50).map(|r| hamming(qset.row(0), set.row(r)).unwrap()).collect();
        from_rank.sort_unstable();
        direct.sort_unstable();
        assert_eq!(from_rank, direct);
    }

    #[test]
    fn rank_edge_cases() {
        let empty = PackedCodeSet::pack(&BitMatrix::new(0, 8), &[]).unwrap();
        assert!(empty.rank(&[0u8], 3).unwrap().is_empty());
        let set = PackedCodeSet::pack(&BitMatrix::new(2, 8), &[1, 2]).unwrap();
        assert!(set.rank(&[0u8], 0).is_err());
    }

    #[test]
    fn lookup_matches_filter_oracle_and_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let bits = random_bits(200, 16, &mut rng);
        let ids: Vec<u64> = (0..200).collect();
        let set = PackedCodeSet::pack(&bits, &ids).unwrap();
        let q = random_bits(1, 16, &mut rng);
        let qset = PackedCodeSet::pack(&q, &[0]).unwrap();

        let mut last_len = 0;
        for radius in 0..=16u32 {
            let got = set.lookup(qset.row(0), radius).unwrap();
            let expect: Vec<u64> = (0..200)
                .filter(|&r| hamming(qset.row(0), set.row(r)).unwrap() <= radius)
                .map(|r| set.ids()[r])
                .collect();
            assert_eq!(got, expect, "radius {radius}");
            assert!(got.len() >= last_len);
            last_len = got.len();
        }
        assert_eq!(last_len, 200); // radius = D returns everything
        assert!(set.lookup(qset.row(0), 17).is_err());
    }

    #[test]
    fn code_file_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let bits = random_bits(17, 13, &mut rng);
        let ids: Vec<u64> = (0..17u64).map(|i| i * 7).collect();
        let set = PackedCodeSet::pack(&bits, &ids).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("codes.bin");
        set.write(&path).unwrap();
        let again = PackedCodeSet::read(&path).unwrap();
        assert_eq!(again, set);
    }

    #[test]
    fn code_file_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("codes.bin");
        std::fs::write(&path, b"NOPE\x01rest").unwrap();
        assert!(matches!(PackedCodeSet::read(&path).unwrap_err(), Error::Format(_)));
    }

    #[test]
    fn subset_keeps_requested_order() {
        let bits = BitMatrix::new(4, 8);
        let set = PackedCodeSet::pack(&bits, &[10, 20, 30, 40]).unwrap();
        let sub = set.subset(&[30, 10]).unwrap();
        assert_eq!(sub.ids(), &[30, 10]);
        assert!(set.subset(&[99]).is_err());
    }

    #[test]
    fn ranking_a_million_codes_is_fast() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let n = 1_000_000usize;
        let mut storage = vec![0u8; n * 8];
        rng.fill(&mut storage[..]);
        let ids: Vec<u64> = (0..n as u64).collect();
        let set = PackedCodeSet::from_parts(64, ids, storage).unwrap();
        let query: [u8; 8] = rng.gen();

        let start = std::time::Instant::now();
        let top = set.rank(&query, 10).unwrap();
        let elapsed = start.elapsed();
        assert_eq!(top.len(), 10);
        assert!(elapsed.as_secs_f64() < 1.0, "rank took {elapsed:?}");
    }
}
