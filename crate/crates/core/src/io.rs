//! File formats: fvecs/ivecs ingestion, index persistence, and the CSV
//! report.
//!
//! fvecs and ivecs are the TEXMEX benchmark layouts: repeated records of a
//! 4-byte little-endian signed length prefix followed by that many 4-byte
//! little-endian payload items (floats or ints). All integers in the index
//! file are little-endian as well.
//!
//! Index files are written to a temporary file in the target directory and
//! renamed into place, so an interrupted run never leaves a half-written
//! index behind.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::build::BuildParams;
use crate::error::{Error, Result};
use crate::eval::SweepReport;
use crate::graph::{HnswIndex, LayerGraph};
use crate::vecstore::{Dataset, Metric, VectorId};

const INDEX_MAGIC: &[u8; 8] = b"HNSWMRG1";
const INDEX_VERSION: u32 = 1;
const FLAG_VECTORS: u32 = 1;

/// Tracks the byte offset of a reader so format errors can point at the
/// spot that failed.
struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn new(inner: R) -> Self {
        CountingReader { inner, offset: 0 }
    }

    fn format_err(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.offset,
            message: message.into(),
        }
    }
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}

/// Reads a length-prefixed record stream. `None` on clean EOF at a record
/// boundary; a truncated prefix or payload is a format error.
fn read_record<R: Read>(r: &mut CountingReader<R>, what: &str) -> Result<Option<Vec<u8>>> {
    let record_start = r.offset;
    let mut prefix = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = r.inner.read(&mut prefix[got..])?;
        if n == 0 {
            break;
        }
        got += n;
    }
    r.offset += got as u64;
    match got {
        0 => return Ok(None),
        4 => {}
        _ => return Err(r.format_err(format!("truncated {what} length prefix"))),
    }
    let len = i32::from_le_bytes(prefix);
    if len <= 0 {
        return Err(Error::Format {
            offset: record_start,
            message: format!("{what} record length {len} must be positive"),
        });
    }
    let mut payload = vec![0u8; len as usize * 4];
    r.read_exact(&mut payload).map_err(|_| Error::Format {
        offset: record_start,
        message: format!("truncated {what} record of {len} items"),
    })?;
    Ok(Some(payload))
}

/// Parses an fvecs file. Every record must share one dimensionality; an
/// empty file yields the empty dataset (dim 0).
pub fn read_fvecs(path: &Path) -> Result<Dataset> {
    let mut reader = CountingReader::new(BufReader::new(File::open(path)?));
    let mut dim: Option<usize> = None;
    let mut data: Vec<f32> = Vec::new();
    while let Some(payload) = read_record(&mut reader, "fvecs")? {
        let d = payload.len() / 4;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::Format {
                    offset: reader.offset,
                    message: format!("fvecs record has dim {d}, previous records have {expected}"),
                });
            }
            _ => {}
        }
        for chunk in payload.chunks_exact(4) {
            data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
    }
    match dim {
        Some(d) => Dataset::new(d, data),
        None => Ok(Dataset::empty()),
    }
}

pub fn write_fvecs(path: &Path, dataset: &Dataset) -> Result<()> {
    atomic_write(path, |w| {
        for id in dataset.ids() {
            w.write_i32::<LittleEndian>(dataset.dim() as i32)?;
            for &x in dataset.vector(id) {
                w.write_f32::<LittleEndian>(x)?;
            }
        }
        Ok(())
    })
}

/// Parses an ivecs file. Records may have differing lengths.
pub fn read_ivecs(path: &Path) -> Result<Vec<Vec<i32>>> {
    let mut reader = CountingReader::new(BufReader::new(File::open(path)?));
    let mut out = Vec::new();
    while let Some(payload) = read_record(&mut reader, "ivecs")? {
        let row: Vec<i32> = payload
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push(row);
    }
    Ok(out)
}

pub fn write_ivecs(path: &Path, rows: &[Vec<i32>]) -> Result<()> {
    atomic_write(path, |w| {
        for row in rows {
            w.write_i32::<LittleEndian>(row.len() as i32)?;
            for &x in row {
                w.write_i32::<LittleEndian>(x)?;
            }
        }
        Ok(())
    })
}

/// A persisted index: the graph plus the metric it was built under and,
/// unless saved with vectors stripped, the dataset it indexes.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexFile {
    pub index: HnswIndex,
    pub metric: Metric,
    pub dataset: Option<Dataset>,
}

/// Serializes an index. `dataset` embeds the vectors so the file is
/// self-contained; pass `None` to store the graph alone.
pub fn save_index(
    path: &Path,
    index: &HnswIndex,
    metric: Metric,
    dataset: Option<&Dataset>,
) -> Result<()> {
    atomic_write(path, |w| {
        w.write_all(INDEX_MAGIC)?;
        w.write_u32::<LittleEndian>(INDEX_VERSION)?;
        let flags = if dataset.is_some() { FLAG_VECTORS } else { 0 };
        w.write_u32::<LittleEndian>(flags)?;
        w.write_u8(metric.code())?;
        let (dim, n) = dataset.map_or((0, 0), |d| (d.dim(), d.len()));
        w.write_u32::<LittleEndian>(dim as u32)?;
        w.write_u64::<LittleEndian>(n as u64)?;

        let p = index.params();
        w.write_u32::<LittleEndian>(p.m as u32)?;
        w.write_u32::<LittleEndian>(p.m0 as u32)?;
        w.write_u32::<LittleEndian>(p.ef_construction as u32)?;
        w.write_f64::<LittleEndian>(p.ml)?;
        w.write_u64::<LittleEndian>(p.seed)?;

        match index.entry() {
            Some(v) => {
                w.write_u8(1)?;
                w.write_u32::<LittleEndian>(v.0)?;
            }
            None => {
                w.write_u8(0)?;
                w.write_u32::<LittleEndian>(0)?;
            }
        }

        let layer_count = index.max_layer().map_or(0, |l| l + 1);
        w.write_u32::<LittleEndian>(layer_count as u32)?;

        w.write_u64::<LittleEndian>(index.vertex_count() as u64)?;
        for (v, level) in index.levels() {
            w.write_u32::<LittleEndian>(v.0)?;
            w.write_u32::<LittleEndian>(level as u32)?;
        }

        for l in 0..layer_count {
            let layer = index.layer(l);
            w.write_u64::<LittleEndian>(layer.vertex_count() as u64)?;
            for v in layer.vertices() {
                let ns = layer.neighbors(v).expect("listed vertex");
                w.write_u32::<LittleEndian>(v.0)?;
                w.write_u32::<LittleEndian>(ns.len() as u32)?;
                for &u in ns {
                    w.write_u32::<LittleEndian>(u.0)?;
                }
            }
        }

        if let Some(d) = dataset {
            for &x in d.components() {
                w.write_f32::<LittleEndian>(x)?;
            }
        }
        Ok(())
    })
}

/// Loads an index saved by [`save_index`]. The magic and version are
/// checked before anything is allocated; on any error no partial index is
/// returned.
pub fn load_index(path: &Path) -> Result<IndexFile> {
    let mut r = CountingReader::new(BufReader::new(File::open(path)?));

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| r.format_err("file too short for magic"))?;
    if &magic != INDEX_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic {magic:02x?}, not an index file"),
        });
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != INDEX_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: INDEX_VERSION,
        });
    }

    let flags = r.read_u32::<LittleEndian>()?;
    let metric = Metric::from_code(r.read_u8()?)?;
    let dim = r.read_u32::<LittleEndian>()? as usize;
    let n = r.read_u64::<LittleEndian>()? as usize;

    let m = r.read_u32::<LittleEndian>()? as usize;
    let m0 = r.read_u32::<LittleEndian>()? as usize;
    let ef_construction = r.read_u32::<LittleEndian>()? as usize;
    let ml = r.read_f64::<LittleEndian>()?;
    let seed = r.read_u64::<LittleEndian>()?;
    let params = BuildParams {
        m,
        m0,
        ef_construction,
        ml,
        seed,
    };

    let has_entry = r.read_u8()? != 0;
    let entry_raw = r.read_u32::<LittleEndian>()?;
    let entry = has_entry.then_some(VectorId(entry_raw));

    let layer_count = r.read_u32::<LittleEndian>()? as usize;

    let vertex_count = r.read_u64::<LittleEndian>()? as usize;
    let mut levels = BTreeMap::new();
    for _ in 0..vertex_count {
        let v = VectorId(r.read_u32::<LittleEndian>()?);
        let level = r.read_u32::<LittleEndian>()? as usize;
        levels.insert(v, level);
    }
    if levels.len() != vertex_count {
        return Err(r.format_err("duplicate ids in levels table"));
    }

    let mut layers = Vec::with_capacity(layer_count);
    for l in 0..layer_count {
        let count = r.read_u64::<LittleEndian>()? as usize;
        let mut graph = LayerGraph::new();
        let mut adjacency = Vec::with_capacity(count);
        for _ in 0..count {
            let v = VectorId(r.read_u32::<LittleEndian>()?);
            let degree = r.read_u32::<LittleEndian>()? as usize;
            let mut ns = Vec::with_capacity(degree);
            for _ in 0..degree {
                ns.push(VectorId(r.read_u32::<LittleEndian>()?));
            }
            graph.insert_vertex(v);
            adjacency.push((v, ns));
        }
        for (v, ns) in adjacency {
            graph
                .set_neighborhood(v, ns)
                .map_err(|e| r.format_err(format!("layer {l}: {e}")))?;
        }
        layers.push(graph);
    }

    let dataset = if flags & FLAG_VECTORS != 0 {
        let mut data = vec![0f32; n * dim];
        for x in data.iter_mut() {
            *x = r.read_f32::<LittleEndian>()?;
        }
        Some(Dataset::new(dim, data)?)
    } else {
        None
    };

    let index = HnswIndex::from_parts(layers, levels, entry, params);
    validate_index(&index, &r)?;
    Ok(IndexFile {
        index,
        metric,
        dataset,
    })
}

/// Structural checks on a loaded index: nesting, level consistency, and
/// entry validity. Keeps a corrupted file from surfacing as a broken index.
fn validate_index<R: Read>(index: &HnswIndex, r: &CountingReader<R>) -> Result<()> {
    let Some(l_max) = index.max_layer() else {
        if index.vertex_count() != 0 || index.entry().is_some() {
            return Err(r.format_err("layerless index with vertices or entry"));
        }
        return Ok(());
    };
    for (v, level) in index.levels() {
        if level > l_max {
            return Err(r.format_err(format!("vertex {v} level {level} above top {l_max}")));
        }
        for l in 0..=level {
            if !index.layer(l).contains(v) {
                return Err(r.format_err(format!("vertex {v} missing from layer {l}")));
            }
        }
        if level < l_max && index.layer(level + 1).contains(v) {
            return Err(r.format_err(format!("vertex {v} above its level {level}")));
        }
    }
    for l in 0..=l_max {
        for v in index.layer(l).vertices() {
            if index.level_of(v).is_none() {
                return Err(r.format_err(format!("layer {l} vertex {v} missing a level")));
            }
        }
    }
    match index.entry() {
        Some(e) if !index.layer(l_max).contains(e) => {
            Err(r.format_err(format!("entry {e} not in top layer")))
        }
        None => Err(r.format_err("non-empty index without entry")),
        _ => Ok(()),
    }
}

/// Fixed CSV schema: a `# ...` context comment, then
/// `algorithm,merge_dc,L,recall_at_5,avg_search_dc` rows. Number formatting
/// is pinned so identical runs produce identical bytes.
pub fn render_report_csv(report: &SweepReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("# {}\n", report.context));
    out.push_str("algorithm,merge_dc,L,recall_at_5,avg_search_dc\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.2}\n",
            row.algorithm, row.merge_dc, row.l, row.recall_at_k, row.avg_search_dc
        ));
    }
    out
}

pub fn write_report_csv(path: &Path, report: &SweepReport) -> Result<()> {
    atomic_write(path, |w| {
        w.write_all(render_report_csv(report).as_bytes())?;
        Ok(())
    })
}

/// Writes through a temp file in the destination directory, then renames.
fn atomic_write(path: &Path, fill: impl FnOnce(&mut BufWriter<&mut File>) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    {
        let mut writer = BufWriter::new(tmp.as_file_mut());
        fill(&mut writer)?;
        writer.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
