use std::path::Path;

use super::SimResult;
use crate::error::{GfmError, Result};

pub const CSV_HEADER: [&str; 15] =
    ["t", "id", "iq", "vd", "vq", "iod", "ioq", "delta", "vdc", "p", "wu", "q", "V", "iu", "Eu"];

fn rows(r: &SimResult) -> impl Iterator<Item = [f64; 15]> + '_ {
    (0..r.len()).map(move |k| {
        let (x, y, u) = (&r.x[k], &r.y[k], &r.u[k]);
        [r.t[k], x.id, x.iq, x.vd, x.vq, x.iod, x.ioq, x.delta, x.vdc, y.p, y.omega_u, y.q, y.v, u.iu, u.eu]
    })
}

fn csv_err(path: &str, e: csv::Error) -> GfmError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => GfmError::Io { path: path.to_string(), source },
        other => GfmError::Parse(format!("{path}: {other:?}")),
    }
}

fn write_to<W: std::io::Write>(r: &SimResult, w: W, path: &str) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(CSV_HEADER).map_err(|e| csv_err(path, e))?;
    for row in rows(r) {
        // shortest representation that round-trips
        wr.write_record(row.iter().map(|v| format!("{v:?}"))).map_err(|e| csv_err(path, e))?;
    }
    wr.flush().map_err(|source| GfmError::Io { path: path.to_string(), source })
}

pub fn to_csv_string(r: &SimResult) -> Result<String> {
    let mut buf = Vec::new();
    write_to(r, &mut buf, "<memory>")?;
    String::from_utf8(buf).map_err(|e| GfmError::Parse(e.to_string()))
}

pub fn export_csv(r: &SimResult, path: &Path) -> Result<()> {
    let name = path.display().to_string();
    let f = std::fs::File::create(path).map_err(|source| GfmError::Io { path: name.clone(), source })?;
    write_to(r, std::io::BufWriter::new(f), &name)
}

/// Reads a time-series file back as rows of 15 numbers.
pub fn read_csv(path: &Path) -> Result<Vec<[f64; 15]>> {
    let name = path.display().to_string();
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_err(&name, e))?;
    let header = rd.headers().map_err(|e| csv_err(&name, e))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(GfmError::Parse(format!("{name}: unexpected header")));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| csv_err(&name, e))?;
        let mut row = [0.0; 15];
        for (v, s) in row.iter_mut().zip(rec.iter()) {
            *v = s.parse().map_err(|e| GfmError::Parse(format!("{name}: `{s}`: {e}")))?;
        }
        out.push(row);
    }
    Ok(out)
}
