//! CSV export of a [`ResidualTable`]:
//! `id,time,type,pd,npd,pde,npde,survivor_count,flags`.
//!
//! `type` is `long` or `tte`. Missing values are empty fields. `flags` joins
//! the set flags with `|`: `clamped`, `low_support` and `excluded` for
//! observations, `clamped`, `imputed` and `censored` for event records.

use std::io::{Read, Write};

use super::{Flags, LongitudinalResidual, ResidualTable, TteResidual};
use crate::error::{Error, Result};
use crate::simulator::EventIndicator;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn flags(set: &[(bool, &str)]) -> String {
    set.iter()
        .filter(|f| f.0)
        .map(|f| f.1)
        .collect::<Vec<_>>()
        .join("|")
}

pub fn write_residual_table(table: &ResidualTable, out: impl Write) -> Result<()> {
    let err = |e: csv::Error| Error::Data(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "id",
        "time",
        "type",
        "pd",
        "npd",
        "pde",
        "npde",
        "survivor_count",
        "flags",
    ])
    .map_err(err)?;
    for r in &table.longitudinal {
        let f = flags(&[
            (r.flags.clamped, "clamped"),
            (r.flags.low_support, "low_support"),
            (r.flags.excluded, "excluded"),
        ]);
        w.write_record([
            r.id.clone(),
            r.time.to_string(),
            "long".into(),
            opt(r.pd),
            opt(r.npd),
            opt(r.pde),
            opt(r.npde),
            r.survivor_count.to_string(),
            f,
        ])
        .map_err(err)?;
    }
    for r in &table.tte {
        let f = flags(&[
            (r.clamped, "clamped"),
            (r.imputed, "imputed"),
            (r.indicator == EventIndicator::Censored, "censored"),
        ]);
        w.write_record([
            r.id.clone(),
            r.time.to_string(),
            "tte".into(),
            r.pd.to_string(),
            r.npd.to_string(),
            String::new(),
            String::new(),
            String::new(),
            f,
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_opt(field: &str, line: u64) -> Result<Option<f64>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| Error::Data(format!("line {line}: {field:?} is not a number")))
}

fn parse_req(field: &str, what: &str, line: u64) -> Result<f64> {
    parse_opt(field, line)?.ok_or_else(|| Error::Data(format!("line {line}: missing {what}")))
}

/// Reads a table written by [`write_residual_table`]. The observed values,
/// K and imputation bounds are not part of the CSV; they come back as NaN,
/// 0 and `None`.
pub fn read_residual_table(input: impl Read) -> Result<ResidualTable> {
    let err = |e: csv::Error| Error::Data(e.to_string());
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(err)?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["id", "time", "type", "pd", "npd", "pde", "npde", "survivor_count", "flags"] {
        return Err(Error::Data(format!("unexpected residual table header {}", header.join(","))));
    }
    let mut table = ResidualTable { k: 0, longitudinal: Vec::new(), tte: Vec::new() };
    for record in r.records() {
        let record = record.map_err(err)?;
        let line = record.position().map_or(0, |p| p.line());
        let set: Vec<&str> = record[8].split('|').map(str::trim).collect();
        let has = |f: &str| set.contains(&f);
        let time = parse_req(&record[1], "time", line)?;
        match record[2].trim() {
            "long" => table.longitudinal.push(LongitudinalResidual {
                id: record[0].to_string(),
                time,
                value: f64::NAN,
                pd: parse_opt(&record[3], line)?,
                npd: parse_opt(&record[4], line)?,
                pde: parse_opt(&record[5], line)?,
                npde: parse_opt(&record[6], line)?,
                survivor_count: record[7]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Data(format!("line {line}: bad survivor count {:?}", &record[7])))?,
                flags: Flags { clamped: has("clamped"), low_support: has("low_support"), excluded: has("excluded") },
            }),
            "tte" => table.tte.push(TteResidual {
                id: record[0].to_string(),
                time,
                indicator: if has("censored") { EventIndicator::Censored } else { EventIndicator::Observed },
                pd: parse_req(&record[3], "pd", line)?,
                npd: parse_req(&record[4], "npd", line)?,
                clamped: has("clamped"),
                imputed: has("imputed"),
                imputation_lower_bound: None,
            }),
            other => return Err(Error::Data(format!("line {line}: unknown residual type {other:?}"))),
        }
    }
    Ok(table)
}
