use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Write};
use std::path::Path;

use hmix_core::ImageTensor;
use image::{ColorType, DynamicImage, ImageFormat};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, Result};

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::invalid(path.display(), e))
}

/// Tab-separated table with a header row.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| CliError::io(path, e.into());
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(create(path)?);
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }
}

/// Reads a table written by [`Table::write`] as header plus rows.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let err = |e: csv::Error| CliError::invalid(path.display(), e);
    let mut r = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(open(path)?);
    let header = r.headers().map_err(err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(err)?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

pub fn encode_png(image: &ImageTensor) -> Vec<u8> {
    let (h, w, c) = image.dims();
    let bytes = image.to_u8();
    let dynamic = match c {
        1 => DynamicImage::ImageLuma8(image::GrayImage::from_raw(w as u32, h as u32, bytes).expect("sized")),
        3 => DynamicImage::ImageRgb8(image::RgbImage::from_raw(w as u32, h as u32, bytes).expect("sized")),
        4 => DynamicImage::ImageRgba8(image::RgbaImage::from_raw(w as u32, h as u32, bytes).expect("sized")),
        _ => {
            let rgb: Vec<u8> = bytes.chunks(c).flat_map(|px| [px[0], px[1 % c], px[2 % c]]).collect();
            DynamicImage::ImageRgb8(image::RgbImage::from_raw(w as u32, h as u32, rgb).expect("sized"))
        }
    };
    let mut out = Cursor::new(Vec::new());
    dynamic.write_to(&mut out, ImageFormat::Png).expect("PNG encoding into memory");
    out.into_inner()
}

pub fn write_png(path: &Path, image: &ImageTensor) -> Result<()> {
    write_bytes(path, &encode_png(image))
}

/// Grayscale files load with one channel, everything else as RGB.
pub fn decode_png(bytes: &[u8]) -> std::result::Result<ImageTensor, String> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(img.color(), ColorType::L8 | ColorType::L16 | ColorType::La8 | ColorType::La16);
    let (channels, raw) = if gray {
        (1, img.to_luma8().into_raw())
    } else {
        (3, img.to_rgb8().into_raw())
    };
    ImageTensor::from_u8(h, w, channels, &raw).map_err(|e| e.to_string())
}

pub fn read_png(path: &Path) -> Result<ImageTensor> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_png(&bytes).map_err(|e| CliError::invalid(path.display(), e))
}

/// Keeps ids usable as file names.
pub fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

pub fn fmt_f(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), fmt_f)
}
