//! JSON and CSV interchange for annotation layers.
//!
//! Both formats are canonical: annotations sorted by id, floats written in
//! shortest round-trip form, so export → import → export is byte-identical.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::annotations::RevisionSelector;
use super::Store;
use crate::annotation::{Annotation, AnnotationKind, Provenance};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
}

impl ExportFormat {
    pub fn content_type(&self) -> &'static str {
        match self {
            ExportFormat::Json => "application/json",
            ExportFormat::Csv => "text/csv",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(Error::invalid(format!("unknown export format {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportedAnnotation {
    pub id: String,
    pub kind: AnnotationKind,
    pub class: String,
    pub provenance: Provenance,
    pub coords: Vec<[f64; 3]>,
}

impl From<&Annotation> for ExportedAnnotation {
    fn from(a: &Annotation) -> Self {
        ExportedAnnotation {
            id: a.id.clone(),
            kind: a.kind,
            class: a.class.clone(),
            provenance: a.provenance,
            coords: a.coords.clone(),
        }
    }
}

impl ExportedAnnotation {
    pub fn into_annotation(self) -> Annotation {
        Annotation {
            id: self.id,
            kind: self.kind,
            coords: self.coords,
            class: self.class,
            provenance: self.provenance,
            block: String::new(),
            deleted: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportedLayer {
    pub dataset: String,
    pub layer: String,
    pub revision: u64,
    pub annotations: Vec<ExportedAnnotation>,
}

fn sorted(mut list: Vec<ExportedAnnotation>) -> Result<Vec<ExportedAnnotation>> {
    list.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = list.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::format("annotation export", format!("duplicate id {}", w[0].id)));
    }
    for a in &list {
        a.clone().into_annotation().validate()?;
    }
    Ok(list)
}

pub fn export_json(layer: &ExportedLayer) -> Result<String> {
    let mut doc = layer.clone();
    doc.annotations = sorted(doc.annotations)?;
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn import_json(text: &str) -> Result<ExportedLayer> {
    let mut doc: ExportedLayer = serde_json::from_str(text)?;
    doc.annotations = sorted(doc.annotations)?;
    Ok(doc)
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    id: String,
    kind: AnnotationKind,
    class: String,
    provenance: Provenance,
    point_index: usize,
    x: f64,
    y: f64,
    z: f64,
}

const CSV_HEADER: [&str; 8] = ["id", "kind", "class", "provenance", "point_index", "x", "y", "z"];

/// One row per coordinate; a header row even when empty.
pub fn export_csv(annotations: &[ExportedAnnotation]) -> Result<String> {
    let list = sorted(annotations.to_vec())?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for a in &list {
        for (i, c) in a.coords.iter().enumerate() {
            w.serialize(CsvRow {
                id: a.id.clone(),
                kind: a.kind,
                class: a.class.clone(),
                provenance: a.provenance,
                point_index: i,
                x: c[0],
                y: c[1],
                z: c[2],
            })?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::format("csv", e.to_string()))
}

/// Rows of one annotation must be contiguous with point_index 0, 1, ...
pub fn import_csv(text: &str) -> Result<Vec<ExportedAnnotation>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::format("csv", format!("unexpected header {header:?}")));
    }
    let mut out: Vec<ExportedAnnotation> = Vec::new();
    for row in r.deserialize() {
        let row: CsvRow = row?;
        let coord = [row.x, row.y, row.z];
        match out.last_mut() {
            Some(last) if last.id == row.id => {
                if row.point_index != last.coords.len() || row.kind != last.kind || row.class != last.class {
                    return Err(Error::format("csv", format!("inconsistent rows for {}", row.id)));
                }
                last.coords.push(coord);
            }
            _ => {
                if row.point_index != 0 {
                    return Err(Error::format("csv", format!("{} starts at point {}", row.id, row.point_index)));
                }
                out.push(ExportedAnnotation {
                    id: row.id,
                    kind: row.kind,
                    class: row.class,
                    provenance: row.provenance,
                    coords: vec![coord],
                });
            }
        }
    }
    sorted(out)
}

impl Store {
    pub fn export_layer(&self, dataset: &str, layer: &str, sel: RevisionSelector) -> Result<ExportedLayer> {
        let (revision, list) = self.read_annotations(dataset, layer, None, sel)?;
        Ok(ExportedLayer {
            dataset: dataset.to_string(),
            layer: layer.to_string(),
            revision,
            annotations: list.iter().map(ExportedAnnotation::from).collect(),
        })
    }

    pub fn export_annotations(
        &self,
        dataset: &str,
        layer: &str,
        sel: RevisionSelector,
        format: ExportFormat,
    ) -> Result<String> {
        let doc = self.export_layer(dataset, layer, sel)?;
        match format {
            ExportFormat::Json => export_json(&doc),
            ExportFormat::Csv => export_csv(&doc.annotations),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<ExportedAnnotation> {
        vec![
            ExportedAnnotation {
                id: "b".into(),
                kind: AnnotationKind::Polyline,
                class: "axon".into(),
                provenance: Provenance::Algorithm,
                coords: vec![[0.1, 2.0, 3.5], [1e-7, 123456.789, 0.0]],
            },
            ExportedAnnotation {
                id: "a".into(),
                kind: AnnotationKind::Point,
                class: "custom, with comma".into(),
                provenance: Provenance::Human,
                coords: vec![[1.0 / 3.0, 2.0, 3.0]],
            },
        ]
    }

    #[test]
    fn empty_exports() {
        let doc = ExportedLayer {
            dataset: "d".into(),
            layer: "l".into(),
            revision: 0,
            annotations: vec![],
        };
        let json = export_json(&doc).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["annotations"], serde_json::json!([]));
        assert_eq!(export_csv(&[]).unwrap(), "id,kind,class,provenance,point_index,x,y,z\n");
        assert!(import_csv(&export_csv(&[]).unwrap()).unwrap().is_empty());
    }

    #[test]
    fn polyline_csv_rows() {
        let csv = export_csv(&sample()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("a,point,"));
        assert!(lines[2].starts_with("b,polyline,axon,algorithm,0,"));
        assert!(lines[3].starts_with("b,polyline,axon,algorithm,1,"));
    }

    #[test]
    fn round_trips_are_byte_identical() {
        let doc = ExportedLayer {
            dataset: "d".into(),
            layer: "l".into(),
            revision: 7,
            annotations: sample(),
        };
        let json = export_json(&doc).unwrap();
        let back = import_json(&json).unwrap();
        assert_eq!(export_json(&back).unwrap(), json);
        assert_eq!(back.annotations[0].coords[0][0], 1.0 / 3.0);

        let csv = export_csv(&sample()).unwrap();
        let back = import_csv(&csv).unwrap();
        assert_eq!(export_csv(&back).unwrap(), csv);
        assert_eq!(back, import_json(&json).unwrap().annotations);
    }

    #[test]
    fn malformed_inputs() {
        assert!(import_csv("id,kind\n").is_err());
        let gap = "id,kind,class,provenance,point_index,x,y,z\nb,polyline,axon,human,1,0,0,0\n";
        assert!(import_csv(gap).is_err());
        let short = "id,kind,class,provenance,point_index,x,y,z\nb,polyline,axon,human,0,0,0,0\n";
        assert!(import_csv(short).is_err());
        assert!(import_json("{}").is_err());
        assert!("hdf5".parse::<ExportFormat>().is_err());
    }
}
