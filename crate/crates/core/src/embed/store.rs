//! Descriptor store files.
//!
//! Binary (little-endian): magic `EMB1`, `u32` dimension, `u32` count, then
//! per record a `u32` location id followed by `dim` `f32` values. The CSV
//! mirror has one `id,v0,...` row per record and an optional header.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::descriptor::Descriptor;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::world::MapGraph;

const MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorStore<T> {
    dim: usize,
    ids: Vec<u32>,
    values: Vec<T>,
    index: HashMap<u32, usize>,
}

impl<T: Real> DescriptorStore<T> {
    pub fn new(dim: usize) -> Self {
        DescriptorStore { dim, ids: Vec::new(), values: Vec::new(), index: HashMap::new() }
    }

    pub fn insert(&mut self, id: u32, values: &[T]) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: values.len() });
        }
        if self.index.insert(id, self.ids.len()).is_some() {
            return Err(Error::invalid(format!("duplicate descriptor for location {id}")));
        }
        self.ids.push(id);
        self.values.extend_from_slice(values);
        Ok(())
    }

    pub fn from_descriptors(dim: usize, items: impl IntoIterator<Item = (u32, Descriptor<T>)>) -> Result<Self> {
        let mut s = Self::new(dim);
        for (id, d) in items {
            s.insert(id, d.values())?;
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn get(&self, id: u32) -> Option<&[T]> {
        self.index.get(&id).map(|&i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &[T])> {
        self.ids.iter().enumerate().map(|(i, &id)| (id, self.row(i)))
    }

    /// Rows ordered by the graph's dense location index; every location
    /// must have a descriptor.
    pub fn aligned_to(&self, g: &MapGraph) -> Result<DescriptorStore<T>> {
        let mut out = Self::new(self.dim);
        for loc in g.locations() {
            let row = self.get(loc.id).ok_or_else(|| {
                Error::invalid(format!("no descriptor stored for location {}", loc.id))
            })?;
            out.insert(loc.id, row)?;
        }
        Ok(out)
    }

    pub fn cast<U: Real>(&self) -> DescriptorStore<U> {
        DescriptorStore {
            dim: self.dim,
            ids: self.ids.clone(),
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
            index: self.index.clone(),
        }
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        for (id, row) in self.iter() {
            w.write_all(&id.to_le_bytes())?;
            for v in row {
                w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let bad = |msg: &str| Error::Parse { line: 0, msg: format!("descriptor store: {msg}") };
        if buf.len() < 12 || &buf[..4] != MAGIC {
            return Err(bad("missing EMB1 header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let dim = u32_at(4) as usize;
        let count = u32_at(8) as usize;
        let record = 4 + 4 * dim;
        if buf.len() != 12 + count * record {
            return Err(bad(&format!("expected {} bytes for {count} records, found {}", 12 + count * record, buf.len())));
        }
        let mut s = Self::new(dim);
        let mut row = Vec::with_capacity(dim);
        for c in 0..count {
            let o = 12 + c * record;
            row.clear();
            row.extend((0..dim).map(|t| {
                let p = o + 4 + 4 * t;
                T::of(f32::from_le_bytes(buf[p..p + 4].try_into().unwrap()) as f64)
            }));
            s.insert(u32_at(o), &row)?;
        }
        Ok(s)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_string()];
        header.extend((0..self.dim).map(|i| format!("v{i}")));
        wr.write_record(&header)?;
        for (id, row) in self.iter() {
            let mut rec = vec![id.to_string()];
            rec.extend(row.iter().map(|v| (v.as_f64() as f32).to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
        let mut store: Option<Self> = None;
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = i + 1;
            if i == 0 && rec.get(0) == Some("id") {
                continue;
            }
            let id: u32 = rec
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse { line, msg: "invalid location id".into() })?;
            let vals = rec
                .iter()
                .skip(1)
                .map(|s| s.parse::<f32>().map(|v| T::of(v as f64)))
                .collect::<std::result::Result<Vec<T>, _>>()
                .map_err(|e| Error::Parse { line, msg: format!("invalid value: {e}") })?;
            let s = store.get_or_insert_with(|| Self::new(vals.len()));
            s.insert(id, &vals).map_err(|e| e.with_context(format!("line {line}")))?;
        }
        store.ok_or_else(|| Error::Parse { line: 0, msg: "empty descriptor CSV".into() })
    }

    /// Loads either format; files ending in `.csv` are read as CSV.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::from(e).with_context(format!("opening {}", path.display())))?;
        let reader = std::io::BufReader::new(file);
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            Self::read_csv(reader)
        } else {
            Self::read_binary(reader)
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            self.write_csv(file)
        } else {
            self.write_binary(file)
        }
    }
}
