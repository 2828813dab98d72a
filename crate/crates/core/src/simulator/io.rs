//! CSV layout of datasets:
//!
//! * longitudinal table `id,time,value`
//! * event table `id,time,event` with `event` 1 for an observed event, 0 for censoring
//! * optional replicate table `replicate,id,time,value,event_time` (uncensored event time)

use std::collections::HashMap;
use std::io::{Read, Write};

use super::{EventIndicator, ReplicateSet, SubjectData};
use crate::error::{Error, Result};

fn csv_error(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            Error::Data(format!(
                "line {line}: {what} {field:?} is not a finite number"
            ))
        })
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str], table: &str) -> Result<()> {
    let header = reader.headers().map_err(csv_error)?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Data(format!(
            "{table} table must have columns {}, found {}",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

/// Writes the longitudinal and event tables.
pub fn write_dataset(
    subjects: &[SubjectData],
    longitudinal: impl Write,
    events: impl Write,
) -> Result<()> {
    let mut lw = csv::Writer::from_writer(longitudinal);
    lw.write_record(["id", "time", "value"])
        .map_err(csv_error)?;
    for s in subjects {
        for (t, y) in &s.observations {
            lw.write_record([s.id.as_str(), &t.to_string(), &y.to_string()])
                .map_err(csv_error)?;
        }
    }
    lw.flush()?;
    let mut ew = csv::Writer::from_writer(events);
    ew.write_record(["id", "time", "event"])
        .map_err(csv_error)?;
    for s in subjects {
        let flag = match s.event_indicator {
            EventIndicator::Observed => "1",
            EventIndicator::Censored => "0",
        };
        ew.write_record([s.id.as_str(), &s.event_time.to_string(), flag])
            .map_err(csv_error)?;
    }
    ew.flush()?;
    Ok(())
}

/// Reads a dataset. Subjects come in event-table order; each must appear in
/// both tables, and observation times must increase and not exceed the
/// subject's event time.
pub fn read_dataset(longitudinal: impl Read, events: impl Read) -> Result<Vec<SubjectData>> {
    let mut er = csv::Reader::from_reader(events);
    check_header(&mut er, &["id", "time", "event"], "event")?;
    let mut subjects = Vec::new();
    let mut index = HashMap::new();
    for record in er.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record[0].trim().to_string();
        let time = parse_f64(&record[1], "event time", line)?;
        let indicator = match record[2].trim() {
            "1" => EventIndicator::Observed,
            "0" => EventIndicator::Censored,
            other => {
                return Err(Error::Data(format!(
                    "line {line}: event flag {other:?} must be 0 or 1"
                )))
            }
        };
        if index.insert(id.clone(), subjects.len()).is_some() {
            return Err(Error::Data(format!(
                "subject {id} has more than one event record"
            )));
        }
        subjects.push(SubjectData {
            id,
            observations: Vec::new(),
            event_time: time,
            event_indicator: indicator,
        });
    }
    let mut lr = csv::Reader::from_reader(longitudinal);
    check_header(&mut lr, &["id", "time", "value"], "longitudinal")?;
    for record in lr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record[0].trim();
        let i = *index.get(id).ok_or_else(|| {
            Error::Data(format!("subject {id} has observations but no event record"))
        })?;
        let t = parse_f64(&record[1], "time", line)?;
        let y = parse_f64(&record[2], "value", line)?;
        subjects[i].observations.push((t, y));
    }
    for s in &subjects {
        if s.observations.is_empty() {
            return Err(Error::Data(format!(
                "subject {} has an event record but no observations",
                s.id
            )));
        }
        if s.observations.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::Data(format!(
                "subject {}: observation times must increase",
                s.id
            )));
        }
        if s.observations.last().unwrap().0 > s.event_time {
            return Err(Error::Data(format!(
                "subject {}: observation after the event time",
                s.id
            )));
        }
    }
    Ok(subjects)
}

/// Writes every replicate of every subject on the full planned grid.
pub fn write_replicates(replicates: &ReplicateSet, ids: &[String], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replicate", "id", "time", "value", "event_time"])
        .map_err(csv_error)?;
    for (i, id) in ids.iter().enumerate() {
        for r in 0..replicates.k {
            let event = replicates.subjects[i].event_times[r].to_string();
            for (j, t) in replicates.planned_times.iter().enumerate() {
                let value = replicates.value(i, r, j).to_string();
                w.write_record([&(r + 1).to_string(), id, &t.to_string(), &value, &event])
                    .map_err(csv_error)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
