//! Plain-text file formats.
//!
//! Message files start with a header line `N,K,M,q`, followed by the rows of
//! every message in order (message 1 rows 1..Ñ, then message 2, ...), one
//! row of `K` comma-separated symbols per line.
//!
//! Database files start with `N,K,M,q,n` (`n` is the 1-based database
//! index), followed by the `M·Ñ` stored symbols one per line, message-major
//! then row-major.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::error::{PirError, Result};
use crate::field::Matrix;
use crate::storage::{CodeParams, DatabaseContents, MessageSet};

fn parse_u64(field: &str, line: usize) -> Result<u64> {
    field
        .trim()
        .parse()
        .map_err(|_| PirError::Parse(format!("line {line}: `{}` is not an integer", field.trim())))
}

fn parse_header(line: Option<std::io::Result<String>>, fields: usize) -> Result<Vec<u64>> {
    let line = line.ok_or_else(|| PirError::Parse("empty file".into()))??;
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != fields {
        return Err(PirError::Parse(format!(
            "header `{line}` should have {fields} fields"
        )));
    }
    parts.iter().map(|p| parse_u64(p, 1)).collect()
}

fn params_from_header(h: &[u64]) -> Result<CodeParams> {
    CodeParams::new(h[0] as usize, h[1] as usize, h[2] as usize, h[3])
}

pub fn write_messages<W: Write>(mut out: W, params: &CodeParams, msgs: &MessageSet) -> Result<()> {
    writeln!(out, "{},{},{},{}", params.n, params.k, params.m, params.q)?;
    for w in msgs.messages() {
        for j in 0..w.rows() {
            let row: Vec<String> = w.row(j).iter().map(|s| s.to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
    }
    Ok(())
}

pub fn read_messages<R: BufRead>(input: R) -> Result<(CodeParams, MessageSet)> {
    let mut lines = input.lines();
    let params = params_from_header(&parse_header(lines.next(), 4)?)?;
    let field = params.field();
    let rows = params.rows();
    let mut data = Vec::with_capacity(params.m * rows * params.k);
    let mut count = 0;
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 2;
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != params.k {
            return Err(PirError::Parse(format!(
                "line {lineno}: expected {} symbols, got {}",
                params.k,
                parts.len()
            )));
        }
        for p in parts {
            data.push(field.checked_element(parse_u64(p, lineno)?)?);
        }
        count += 1;
    }
    if count != params.m * rows {
        return Err(PirError::Parse(format!(
            "expected {} message rows, found {count}",
            params.m * rows
        )));
    }
    let per = rows * params.k;
    let messages = data
        .chunks(per)
        .map(|c| Matrix::new(rows, params.k, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok((params, MessageSet::new(messages)?))
}

pub fn write_database<W: Write>(mut out: W, params: &CodeParams, db: &DatabaseContents) -> Result<()> {
    writeln!(out, "{},{},{},{},{}", params.n, params.k, params.m, params.q, db.index + 1)?;
    for s in &db.symbols {
        writeln!(out, "{s}")?;
    }
    Ok(())
}

pub fn read_database<R: BufRead>(input: R) -> Result<(CodeParams, DatabaseContents)> {
    let mut lines = input.lines();
    let header = parse_header(lines.next(), 5)?;
    let params = params_from_header(&header[..4])?;
    let index = header[4] as usize;
    if index == 0 || index > params.n {
        return Err(PirError::Parse(format!("database index {index} not in 1..={}", params.n)));
    }
    let field = params.field();
    let mut symbols = Vec::with_capacity(params.m * params.rows());
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        symbols.push(field.checked_element(parse_u64(&line, i + 2)?)?);
    }
    if symbols.len() != params.m * params.rows() {
        return Err(PirError::Parse(format!(
            "expected {} stored symbols, found {}",
            params.m * params.rows(),
            symbols.len()
        )));
    }
    Ok((
        params,
        DatabaseContents { index: index - 1, messages: params.m, rows: params.rows(), symbols },
    ))
}

/// File name of database `index` (0-based) inside a store directory.
pub fn database_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("db{}.csv", index + 1))
}

pub fn write_store(dir: &Path, params: &CodeParams, dbs: &[DatabaseContents]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    dbs.iter()
        .map(|db| {
            let path = database_path(dir, db.index);
            let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
            write_database(&mut f, params, db)?;
            f.flush()?;
            Ok(path)
        })
        .collect()
}

/// Loads every database file present in `dir`. Missing files come back as
/// `None`; all present files must agree on the parameters.
pub fn read_store(dir: &Path) -> Result<(CodeParams, Vec<Option<DatabaseContents>>)> {
    let mut found: Vec<(CodeParams, DatabaseContents)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let is_db = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("db") && n.ends_with(".csv"));
        if is_db {
            let f = std::io::BufReader::new(std::fs::File::open(&path)?);
            found.push(read_database(f)?);
        }
    }
    let Some(&(params, _)) = found.first() else {
        return Err(PirError::Parse(format!("no database files in {}", dir.display())));
    };
    let mut slots: Vec<Option<DatabaseContents>> = vec![None; params.n];
    for (p, db) in found {
        if p != params {
            return Err(PirError::Parse("database files disagree on parameters".into()));
        }
        let i = db.index;
        if slots[i].replace(db).is_some() {
            return Err(PirError::Parse(format!("database {} appears twice", i + 1)));
        }
    }
    Ok((params, slots))
}
