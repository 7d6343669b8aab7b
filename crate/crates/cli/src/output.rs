use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use enhq::report::{Cell, CsvTable};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

fn cell_json(c: &Cell) -> Value {
    match c {
        Cell::Num(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
        Cell::Int(i) => Value::from(*i),
        Cell::Text(s) => Value::from(s.as_str()),
    }
}

/// Rows as an array of objects keyed by column name.
pub fn table_json(t: &CsvTable) -> Value {
    Value::Array(
        t.rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = t.header.iter().cloned().zip(row.iter().map(cell_json)).collect();
                Value::Object(obj)
            })
            .collect(),
    )
}

/// Writes `stem.csv` or `stem.json` into `dir` and returns the file name.
pub fn write_table(dir: &Path, stem: &str, table: &CsvTable, format: Format) -> std::io::Result<String> {
    let name = match format {
        Format::Csv => format!("{stem}.csv"),
        Format::Json => format!("{stem}.json"),
    };
    let path = dir.join(&name);
    match format {
        Format::Csv => table.write_to(std::io::BufWriter::new(fs::File::create(path)?))?,
        Format::Json => fs::write(path, serde_json::to_string_pretty(&table_json(table))? + "\n")?,
    }
    Ok(name)
}

pub fn write_json(dir: &Path, name: &str, value: &Value) -> std::io::Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(path)
}
