//! Three-axis `(shift, row, col)` position IDs for a text + frames token sequence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceLayout {
    pub text_len: usize,
    /// Patch-grid shape `(rows, cols)` of each frame, inputs then outputs.
    pub frames: Vec<(usize, usize)>,
}

impl SequenceLayout {
    pub fn new(text_len: usize, frames: Vec<(usize, usize)>) -> Result<Self> {
        let layout = Self { text_len, frames };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        match self.frames.iter().position(|&(r, c)| r == 0 || c == 0) {
            Some(j) => Err(Error::Config(format!(
                "frame {j} has an empty patch grid {:?}",
                self.frames[j]
            ))),
            None => Ok(()),
        }
    }

    pub fn token_count(&self) -> usize {
        self.text_len + self.frames.iter().map(|&(r, c)| r * c).sum::<usize>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PositionId {
    pub shift: usize,
    pub row: usize,
    pub col: usize,
}

impl PositionId {
    pub const fn new(shift: usize, row: usize, col: usize) -> Self {
        Self { shift, row, col }
    }
}

/// Text token `i` gets `(i, 0, 0)`. Frame `j` gets shift `text_len + j` and
/// its grid in row-major order. One counter runs over inputs and outputs.
pub fn assign_position_ids(layout: &SequenceLayout) -> Result<Vec<PositionId>> {
    layout.validate()?;
    let mut ids = Vec::with_capacity(layout.token_count());
    ids.extend((0..layout.text_len).map(|i| PositionId::new(i, 0, 0)));
    for (j, &(rows, cols)) in layout.frames.iter().enumerate() {
        let shift = layout.text_len + j;
        for row in 0..rows {
            ids.extend((0..cols).map(|col| PositionId::new(shift, row, col)));
        }
    }
    Ok(ids)
}
