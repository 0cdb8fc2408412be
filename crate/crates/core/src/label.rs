//! Integer label maps and small class sets.

use crate::error::{Error, Result};

/// Label value excluded from losses and metrics.
pub const IGNORE: u8 = 255;

/// Largest class count representable by [`ClassSet`].
pub const MAX_CLASSES: usize = 128;

/// 2-D grid of class ids, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || labels.len() != height * width {
            return Err(Error::shape(
                "label map",
                "size",
                format!("{height}x{width} with {} labels", labels.len()),
            ));
        }
        Ok(LabelMap { height, width, labels })
    }

    pub fn filled(height: usize, width: usize, label: u8) -> Self {
        LabelMap {
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Checks that every non-ignore entry is below `num_classes`.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l != IGNORE && l as usize >= num_classes) {
            Some(l) => Err(Error::Invalid(format!(
                "label {l} out of range for {num_classes} classes"
            ))),
            None => Ok(()),
        }
    }

    pub fn flip_horizontal(&self) -> LabelMap {
        let mut labels = self.labels.clone();
        labels.chunks_mut(self.width).for_each(|r| r.reverse());
        LabelMap { labels, ..*self }
    }

    /// Distinct values present, ascending.
    pub fn value_set(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        self.labels.iter().for_each(|&l| seen[l as usize] = true);
        (0..=255u8).filter(|&l| seen[l as usize]).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != IGNORE).count()
    }
}

/// Set of class ids below [`MAX_CLASSES`], stored as a bitmask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ClassSet(u128);

impl ClassSet {
    pub fn empty() -> Self {
        ClassSet(0)
    }

    pub fn singleton(class: usize) -> Self {
        let mut s = ClassSet(0);
        s.insert(class);
        s
    }

    pub fn insert(&mut self, class: usize) {
        debug_assert!(class < MAX_CLASSES);
        self.0 |= 1u128 << class;
    }

    pub fn contains(&self, class: usize) -> bool {
        class < MAX_CLASSES && self.0 >> class & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..MAX_CLASSES).filter(move |&c| self.contains(c))
    }
}

impl FromIterator<usize> for ClassSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = ClassSet::empty();
        iter.into_iter().for_each(|c| s.insert(c));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_set_basics() {
        let s: ClassSet = [0, 3, 127].into_iter().collect();
        assert_eq!(s.len(), 3);
        assert!(s.contains(127) && !s.contains(1) && !s.contains(200));
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 3, 127]);
    }

    #[test]
    fn validate_rejects_out_of_range() {
        let lm = LabelMap::new(1, 3, vec![0, IGNORE, 2]).unwrap();
        assert!(lm.validate(3).is_ok());
        assert!(lm.validate(2).is_err());
        assert_eq!(lm.valid_count(), 2);
    }
}
