use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Activation, DenseNet, Layer, ParamLayout};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct LayerHeader {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    weight_trainable: bool,
    bias_trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    layers: Vec<LayerHeader>,
    layout: ParamLayout,
}

#[derive(Serialize, Deserialize)]
struct Row {
    layer: usize,
    part: String,
    row: usize,
    col: usize,
    value: f64,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `<stem>.json` (architecture and trainable layout) and `<stem>.csv`
/// (every weight and bias, fixed ones included).
pub fn save_checkpoint(net: &DenseNet, stem: &Path) -> Result<()> {
    let header = Header {
        layers: net
            .layers
            .iter()
            .map(|l| LayerHeader {
                in_dim: l.in_dim,
                out_dim: l.out_dim,
                activation: l.activation,
                weight_trainable: l.weight_trainable,
                bias_trainable: l.bias_trainable,
            })
            .collect(),
        layout: net.layout(),
    };
    let json_path = with_ext(stem, "json");
    let f = File::create(&json_path).map_err(|e| Error::io(&json_path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &header)?;

    let csv_path = with_ext(stem, "csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for (l, layer) in net.layers.iter().enumerate() {
        for (o, b) in layer.bias.iter().enumerate() {
            w.serialize(Row {
                layer: l,
                part: "bias".into(),
                row: o,
                col: 0,
                value: *b,
            })?;
        }
        for (k, v) in layer.weight.iter().enumerate() {
            w.serialize(Row {
                layer: l,
                part: "weight".into(),
                row: k / layer.in_dim,
                col: k % layer.in_dim,
                value: *v,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok(())
}

pub fn load_checkpoint(stem: &Path) -> Result<DenseNet> {
    let json_path = with_ext(stem, "json");
    let f = File::open(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let header: Header = serde_json::from_reader(std::io::BufReader::new(f))?;
    let mut layers: Vec<Layer> = header
        .layers
        .iter()
        .map(|h| {
            let mut l = Layer::new(h.in_dim, h.out_dim, h.activation);
            l.weight_trainable = h.weight_trainable;
            l.bias_trainable = h.bias_trainable;
            l
        })
        .collect();
    let csv_path = with_ext(stem, "csv");
    let mut r = csv::Reader::from_path(&csv_path)?;
    for row in r.deserialize() {
        let row: Row = row?;
        let layer = layers
            .get_mut(row.layer)
            .ok_or_else(|| Error::invalid("checkpoint", format!("layer {} out of range", row.layer)))?;
        let slot = match row.part.as_str() {
            "bias" => layer.bias.get_mut(row.row),
            "weight" if row.col < layer.in_dim => layer.weight.get_mut(row.row * layer.in_dim + row.col),
            _ => None,
        };
        *slot.ok_or_else(|| Error::invalid("checkpoint", "entry outside layer shape"))? = row.value;
    }
    let net = DenseNet::new(layers)?;
    if net.layout() != header.layout {
        return Err(Error::invalid("checkpoint", "layout header does not match architecture"));
    }
    Ok(net)
}
