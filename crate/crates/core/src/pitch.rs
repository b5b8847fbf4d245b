use std::fmt;

/// Set of MIDI pitches packed into a 128-bit mask.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct PitchSet(u128);

impl PitchSet {
    pub const EMPTY: PitchSet = PitchSet(0);

    pub fn from_bits(bits: u128) -> Self {
        PitchSet(bits)
    }

    pub fn bits(self) -> u128 {
        self.0
    }

    pub fn insert(&mut self, pitch: u8) {
        debug_assert!(pitch < 128);
        self.0 |= 1u128 << (pitch & 0x7f);
    }

    pub fn remove(&mut self, pitch: u8) {
        self.0 &= !(1u128 << (pitch & 0x7f));
    }

    pub fn contains(self, pitch: u8) -> bool {
        pitch < 128 && self.0 & (1u128 << pitch) != 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: PitchSet) -> PitchSet {
        PitchSet(self.0 | other.0)
    }

    pub fn intersection(self, other: PitchSet) -> PitchSet {
        PitchSet(self.0 & other.0)
    }

    pub fn difference(self, other: PitchSet) -> PitchSet {
        PitchSet(self.0 & !other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0u8..128).filter(move |&p| self.contains(p))
    }

    /// Jaccard distance between two pitch sets; two empty sets are at distance 0.
    pub fn jaccard_distance(self, other: PitchSet) -> f64 {
        let union = self.union(other).len();
        if union == 0 {
            return 0.0;
        }
        let inter = self.intersection(other).len();
        1.0 - inter as f64 / union as f64
    }
}

impl FromIterator<u8> for PitchSet {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        let mut set = PitchSet::EMPTY;
        for p in iter {
            set.insert(p);
        }
        set
    }
}

impl fmt::Debug for PitchSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
