//! CSV import and export of embeddings and training traces.
//!
//! Embedding files have a `dim_0,...,dim_{d-1}` header, plus a trailing
//! `bias` column for users. Values are written with 17 significant digits
//! so a round trip is exact.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::latent::Points;

fn header(dim: usize, with_bias: bool) -> Vec<String> {
    let mut cols: Vec<String> = (0..dim).map(|k| format!("dim_{k}")).collect();
    if with_bias {
        cols.push("bias".into());
    }
    cols
}

fn data_err(e: impl std::fmt::Display) -> Error {
    Error::Data(e.to_string())
}

pub fn write_embeddings<W: Write>(out: W, points: &Points, biases: Option<&[f64]>) -> Result<()> {
    if let Some(b) = biases {
        if b.len() != points.len() {
            return Err(Error::invalid(format!("{} biases for {} rows", b.len(), points.len())));
        }
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header(points.dim(), biases.is_some())).map_err(data_err)?;
    let mut record = Vec::with_capacity(points.dim() + 1);
    for (i, row) in points.rows().enumerate() {
        record.clear();
        record.extend(row.iter().map(|v| format!("{v:.16e}")));
        if let Some(b) = biases {
            record.push(format!("{:.16e}", b[i]));
        }
        w.write_record(&record).map_err(data_err)?;
    }
    w.flush().map_err(data_err)?;
    Ok(())
}

/// Reads an embedding CSV. Returns the biases when a `bias` column is present.
pub fn read_embeddings<R: Read>(input: R) -> Result<(Points, Option<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(input);
    let cols: Vec<String> = r.headers().map_err(data_err)?.iter().map(str::to_string).collect();
    let with_bias = cols.last().is_some_and(|c| c == "bias");
    let dim = cols.len() - with_bias as usize;
    if dim == 0 || cols[..dim] != header(dim, false)[..] {
        return Err(Error::Data(format!(
            "embedding header must be `dim_0,...,dim_{{d-1}}[,bias]`, got `{}`",
            cols.join(",")
        )));
    }
    let mut points = Points::new(dim)?;
    let mut biases = Vec::new();
    let mut row = vec![0.0; dim];
    for (k, record) in r.records().enumerate() {
        let record = record.map_err(data_err)?;
        let parse = |j: usize| -> Result<f64> {
            record
                .get(j)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Data(format!("row {}: bad value in column {}", k + 2, cols[j])))
        };
        for (j, v) in row.iter_mut().enumerate() {
            *v = parse(j)?;
        }
        points.push(&row)?;
        if with_bias {
            biases.push(parse(dim)?);
        }
    }
    if points.is_empty() {
        return Err(Error::Data("embedding file has no rows".into()));
    }
    Ok((points, with_bias.then_some(biases)))
}

pub fn save_embeddings(path: impl AsRef<Path>, points: &Points, biases: Option<&[f64]>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_embeddings(BufWriter::new(file), points, biases)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<(Points, Option<Vec<f64>>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(file)
}

pub fn write_trace<W: Write>(mut out: W, trace: &[(usize, f64)]) -> Result<()> {
    let mut text = String::from("epoch,loss\n");
    for (epoch, loss) in trace {
        text.push_str(&format!("{epoch},{loss:.16e}\n"));
    }
    out.write_all(text.as_bytes()).map_err(data_err)
}
