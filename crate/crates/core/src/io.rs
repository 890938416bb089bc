//! Plain-text persistence: meshes, field snapshots and trajectories.
//!
//! Every file starts with `# key=value` header lines followed by a CSV
//! table. Floats are written in shortest round-trip form, so reading a file
//! back reproduces the values bit for bit.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{build_mesh, Mesh};
use crate::operator::Field;
use crate::solver::{StepStats, Trajectory};

fn header_value<'a>(lines: &'a [String], key: &str) -> Result<&'a str> {
    lines
        .iter()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.trim().split_once('='))
        .find(|(k, _)| k.trim() == key)
        .map(|(_, v)| v.trim())
        .ok_or_else(|| Error::Format(format!("missing header `{key}`")))
}

fn header_lines(path: &Path) -> Result<Vec<String>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.starts_with('#') {
            break;
        }
        out.push(line);
    }
    Ok(out)
}

fn parse_f64(text: &str, what: &str) -> Result<f64> {
    text.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad number `{text}` for {what}")))
}

fn table_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?)
}

/// Header `dim`, `h`, `extents` (`lo:hi` per axis), `r_ext`; then
/// `node,x,y,measure,interior`.
pub fn write_mesh(path: &Path, mesh: &Mesh) -> Result<()> {
    let mut f = fs::File::create(path)?;
    let extents: Vec<String> = mesh.extents().iter().map(|(a, b)| format!("{a}:{b}")).collect();
    writeln!(f, "# dim={}", mesh.dim())?;
    writeln!(f, "# h={}", mesh.h())?;
    writeln!(f, "# extents={}", extents.join(","))?;
    writeln!(f, "# r_ext={}", mesh.r_ext())?;
    writeln!(f, "# nodes={}", mesh.len())?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["node", "x", "y", "measure", "interior"])?;
    for (i, (x, m)) in mesh.coords().iter().zip(mesh.measures()).enumerate() {
        w.write_record([
            i.to_string(),
            x[0].to_string(),
            x[1].to_string(),
            m.to_string(),
            u8::from(mesh.is_interior(i)).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds the mesh from its header and checks the node table against it.
pub fn read_mesh(path: &Path) -> Result<Mesh> {
    let head = header_lines(path)?;
    let dim: usize = header_value(&head, "dim")?
        .parse()
        .map_err(|_| Error::Format("bad `dim`".into()))?;
    let h = parse_f64(header_value(&head, "h")?, "h")?;
    let r_ext = parse_f64(header_value(&head, "r_ext")?, "r_ext")?;
    let extents = header_value(&head, "extents")?
        .split(',')
        .map(|pair| {
            let (a, b) = pair
                .split_once(':')
                .ok_or_else(|| Error::Format(format!("bad extent `{pair}`")))?;
            Ok((parse_f64(a, "extent")?, parse_f64(b, "extent")?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mesh = build_mesh(dim, &extents, h, r_ext)?;
    let mut count = 0;
    for (i, rec) in table_reader(path)?.records().enumerate() {
        let rec = rec?;
        let x = parse_f64(rec.get(1).unwrap_or(""), "x")?;
        let y = parse_f64(rec.get(2).unwrap_or(""), "y")?;
        let matches = i < mesh.len() && mesh.coords()[i] == [x, y];
        if !matches {
            return Err(Error::Format(format!("node {i} does not match the header geometry")));
        }
        count += 1;
    }
    if count != mesh.len() {
        return Err(Error::MeshMismatch {
            expected: mesh.len(),
            found: count,
        });
    }
    Ok(mesh)
}

/// Header `time`; then `node,value`.
pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "# time={}", field.time)?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["node", "value"])?;
    for (i, v) in field.values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<Field> {
    let head = header_lines(path)?;
    let time = parse_f64(header_value(&head, "time")?, "time")?;
    let mut values = Vec::new();
    for (i, rec) in table_reader(path)?.records().enumerate() {
        let rec = rec?;
        let node: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad node id in row {i}")))?;
        if node != i {
            return Err(Error::Format(format!("node ids out of order at row {i}")));
        }
        values.push(parse_f64(rec.get(1).unwrap_or(""), "value")?);
    }
    Ok(Field::new(values, time))
}

fn snapshot_name(k: usize) -> String {
    format!("snapshot_{k:05}.csv")
}

/// Writes `index.csv` plus one snapshot file per stored time into `dir`.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(traj.len());
    let mut index = csv::Writer::from_path(dir.join("index.csv"))?;
    index.write_record(["step", "time", "file", "iterations", "cg_iterations", "residual", "energy"])?;
    for (k, field) in traj.fields.iter().enumerate() {
        let name = snapshot_name(k);
        let path = dir.join(&name);
        write_field(&path, field)?;
        files.push(path);
        let stats = if k == 0 { None } else { traj.stats.get(k - 1) };
        let opt = |f: fn(&StepStats) -> String| stats.map(f).unwrap_or_default();
        index.write_record([
            k.to_string(),
            field.time.to_string(),
            name,
            opt(|s| s.iterations.to_string()),
            opt(|s| s.cg_iterations.to_string()),
            opt(|s| s.residual.to_string()),
            opt(|s| s.energy.to_string()),
        ])?;
    }
    index.flush()?;
    Ok(files)
}

pub fn read_trajectory(dir: &Path) -> Result<Trajectory> {
    let path = dir.join("index.csv");
    if !path.exists() {
        return Err(Error::Format(format!("no trajectory index at {}", path.display())));
    }
    let mut fields = Vec::new();
    let mut stats = Vec::new();
    for rec in table_reader(&path)?.records() {
        let rec = rec?;
        let get = |k: usize| rec.get(k).unwrap_or("");
        let field = read_field(&dir.join(get(2)))?;
        let time = parse_f64(get(1), "time")?;
        if field.time != time {
            return Err(Error::Format(format!("snapshot {} disagrees with the index time", get(2))));
        }
        if !get(3).is_empty() {
            let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad count `{s}`")));
            stats.push(StepStats {
                time,
                iterations: int(get(3))?,
                cg_iterations: int(get(4))?,
                residual: parse_f64(get(5), "residual")?,
                energy: parse_f64(get(6), "energy")?,
            });
        }
        fields.push(field);
    }
    if fields.is_empty() {
        return Err(Error::Empty("trajectory index"));
    }
    Ok(Trajectory { fields, stats })
}
