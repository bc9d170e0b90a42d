//! Raw block files: a one-line text header followed by little-endian voxels.
//!
//! Image blocks: `NVB1 nx ny nz channel row col dx dy dz\n` then `u16` voxels.
//! Label volumes: `NVL1 nx ny nz\n` then `u32` labels.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use super::{voxel_count, GridPos, Resolution, Volume, VolumeBlock};
use crate::error::{Error, Result};

const BLOCK_MAGIC: &str = "NVB1";
const LABEL_MAGIC: &str = "NVL1";
const MAX_HEADER: usize = 1024;

/// `block_r{row}_c{col}_{channel}.nvb`
pub fn block_file_name(pos: GridPos, channel: &str) -> String {
    format!("block_r{}_c{}_{}.nvb", pos.row, pos.col, channel)
}

/// Inverse of [`block_file_name`].
pub fn parse_block_file_name(name: &str) -> Option<(GridPos, String)> {
    let stem = name.strip_prefix("block_r")?.strip_suffix(".nvb")?;
    let (row, rest) = stem.split_once("_c")?;
    let (col, channel) = rest.split_once('_')?;
    if channel.is_empty() {
        return None;
    }
    Some((
        GridPos::new(row.parse().ok()?, col.parse().ok()?),
        channel.to_string(),
    ))
}

pub fn write_block(path: &Path, block: &VolumeBlock) -> Result<()> {
    let [nx, ny, nz] = block.extents();
    let res = block.resolution;
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "{BLOCK_MAGIC} {nx} {ny} {nz} {} {} {} {} {} {}",
        block.channel, block.grid_pos.row, block.grid_pos.col, res.dx, res.dy, res.dz
    )?;
    let mut buf = vec![0u8; block.voxels.len() * 2];
    LittleEndian::write_u16_into(block.voxels.as_slice(), &mut buf);
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_block(path: &Path) -> Result<VolumeBlock> {
    let mut reader = BufReader::new(File::open(path)?);
    let header = read_header(&mut reader)?;
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    if fields.len() != 10 || fields[0] != BLOCK_MAGIC {
        return Err(Error::format("block header", header.clone()));
    }
    let extents = parse_extents(&fields[1..4], &header)?;
    let channel = fields[4].to_string();
    let row = parse_num::<usize>(fields[5], &header)?;
    let col = parse_num::<usize>(fields[6], &header)?;
    let res = Resolution::new(
        parse_num(fields[7], &header)?,
        parse_num(fields[8], &header)?,
        parse_num(fields[9], &header)?,
    )?;
    let bytes = read_payload(&mut reader, voxel_count(extents) * 2)?;
    let mut voxels = vec![0u16; voxel_count(extents)];
    LittleEndian::read_u16_into(&bytes, &mut voxels);
    VolumeBlock::new(
        Volume::new(extents, voxels)?,
        channel,
        GridPos::new(row, col),
        res,
    )
}

pub fn write_labels(path: &Path, labels: &Volume<u32>) -> Result<()> {
    let [nx, ny, nz] = labels.extents();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{LABEL_MAGIC} {nx} {ny} {nz}")?;
    let mut buf = vec![0u8; labels.len() * 4];
    LittleEndian::write_u32_into(labels.as_slice(), &mut buf);
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Volume<u32>> {
    let mut reader = BufReader::new(File::open(path)?);
    let header = read_header(&mut reader)?;
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    if fields.len() != 4 || fields[0] != LABEL_MAGIC {
        return Err(Error::format("label header", header.clone()));
    }
    let extents = parse_extents(&fields[1..4], &header)?;
    let bytes = read_payload(&mut reader, voxel_count(extents) * 4)?;
    let mut labels = vec![0u32; voxel_count(extents)];
    LittleEndian::read_u32_into(&bytes, &mut labels);
    Volume::new(extents, labels)
}

fn read_header(reader: &mut impl BufRead) -> Result<String> {
    let mut line = Vec::new();
    reader
        .take(MAX_HEADER as u64)
        .read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::format("header", "missing newline terminator"));
    }
    line.pop();
    String::from_utf8(line).map_err(|e| Error::format("header", e.to_string()))
}

fn read_payload(reader: &mut impl Read, len: usize) -> Result<Vec<u8>> {
    let mut bytes = vec![0u8; len];
    reader
        .read_exact(&mut bytes)
        .map_err(|e| Error::format("voxel payload", format!("expected {len} bytes: {e}")))?;
    let mut extra = [0u8; 1];
    if reader.read(&mut extra)? != 0 {
        return Err(Error::format("voxel payload", "trailing bytes after voxels"));
    }
    Ok(bytes)
}

fn parse_extents(fields: &[&str], header: &str) -> Result<[usize; 3]> {
    let mut out = [0usize; 3];
    for (slot, f) in out.iter_mut().zip(fields) {
        *slot = parse_num(f, header)?;
        if *slot == 0 {
            return Err(Error::format("header", format!("zero extent in {header:?}")));
        }
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(field: &str, header: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::format("header", format!("bad field {field:?} in {header:?}")))
}
