use serde::{Deserialize, Serialize};

use super::DenseNet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamPart {
    Weight,
    Bias,
}

/// One contiguous block of the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub layer: usize,
    pub part: ParamPart,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Where each trainable parameter lives inside a network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub segments: Vec<Segment>,
    pub len: usize,
}

impl ParamLayout {
    pub fn of(net: &DenseNet) -> Self {
        let mut segments = Vec::new();
        for (l, (layer, &(b, w))) in net.layers.iter().zip(net.offsets()).enumerate() {
            if let Some(offset) = b {
                segments.push(Segment {
                    layer: l,
                    part: ParamPart::Bias,
                    offset,
                    rows: layer.out_dim,
                    cols: 1,
                });
            }
            if let Some(offset) = w {
                segments.push(Segment {
                    layer: l,
                    part: ParamPart::Weight,
                    offset,
                    rows: layer.out_dim,
                    cols: layer.in_dim,
                });
            }
        }
        segments.sort_by_key(|s| s.offset);
        Self {
            segments,
            len: net.n_params(),
        }
    }

    /// `(layer, part, row, col)` of flat index `i`.
    pub fn locate(&self, i: usize) -> Option<(usize, ParamPart, usize, usize)> {
        let seg = self
            .segments
            .iter()
            .find(|s| i >= s.offset && i < s.offset + s.len())?;
        let k = i - seg.offset;
        Some((seg.layer, seg.part, k / seg.cols, k % seg.cols))
    }
}

/// Flat parameter (or gradient) vector together with its layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamView {
    pub flat: Vec<f64>,
    pub layout: ParamLayout,
}

impl ParamView {
    pub fn new(flat: Vec<f64>, layout: ParamLayout) -> Self {
        debug_assert_eq!(flat.len(), layout.len);
        Self { flat, layout }
    }

    pub fn of(net: &DenseNet) -> Self {
        Self::new(net.params(), net.layout())
    }

    /// Values of one segment.
    pub fn segment(&self, seg: &Segment) -> &[f64] {
        &self.flat[seg.offset..seg.offset + seg.len()]
    }
}
