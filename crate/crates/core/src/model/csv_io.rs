use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{FNodeDataset, Metrics, TelemetryPoint, TelemetrySeries, Ticket, TicketKind};

pub const PNM_HEADER: [&str; 7] = [
    "ts",
    "device_id",
    "fnode_id",
    "channel",
    "snr_db",
    "tx_power_dbmv",
    "rx_power_dbmv",
];

pub const TICKETS_HEADER: [&str; 7] = [
    "ticket_id",
    "device_id",
    "fnode_id",
    "open_ts",
    "close_ts",
    "kind",
    "dispatched",
];

pub fn ingest_pnm_csv(
    path: impl AsRef<Path>,
    interval_hours: f64,
    n_channels: usize,
) -> Result<BTreeMap<String, FNodeDataset>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pnm(file, path, interval_hours, n_channels)
}

pub fn ingest_tickets_csv(path: impl AsRef<Path>) -> Result<Vec<Ticket>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tickets(file, path)
}

struct RowContext<'a> {
    path: &'a Path,
    line: u64,
}

impl RowContext<'_> {
    fn malformed(&self, reason: impl Into<String>) -> Error {
        Error::MalformedRow {
            path: self.path.to_path_buf(),
            line: self.line,
            reason: reason.into(),
        }
    }

    fn float(&self, field: &str, name: &str) -> Result<f64> {
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| self.malformed(format!("{name}={field:?} is not a number")))?;
        if !v.is_finite() {
            return Err(self.malformed(format!("{name}={field:?} is not finite")));
        }
        Ok(v)
    }
}

fn reader<R: Read>(input: R, path: &Path, header: &[&str]) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let found = rdr.headers().map_err(|e| Error::csv(path, e))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("header {:?}, expected {:?}", found.iter().collect::<Vec<_>>(), header),
        });
    }
    Ok(rdr)
}

/// Parse a pnm.csv stream. Rows are grouped by node, device and channel and
/// sorted by timestamp; duplicates are kept.
pub fn read_pnm<R: Read>(
    input: R,
    path: impl Into<PathBuf>,
    interval_hours: f64,
    n_channels: usize,
) -> Result<BTreeMap<String, FNodeDataset>> {
    let path = path.into();
    let mut rdr = reader(input, &path, &PNM_HEADER)?;
    let mut out: BTreeMap<String, FNodeDataset> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => return Err(Error::csv(&path, e)),
        }
        let ctx = RowContext {
            path: &path,
            line: record.position().map_or(0, |p| p.line()),
        };
        if record.len() != PNM_HEADER.len() {
            return Err(ctx.malformed(format!("{} fields, expected {}", record.len(), PNM_HEADER.len())));
        }
        let ts = ctx.float(&record[0], "ts")?;
        if ts < 0.0 {
            return Err(ctx.malformed(format!("negative timestamp {ts}")));
        }
        let device_id = &record[1];
        let fnode_id = &record[2];
        if device_id.is_empty() || fnode_id.is_empty() {
            return Err(ctx.malformed("empty device_id or fnode_id"));
        }
        let channel: usize = record[3]
            .trim()
            .parse()
            .map_err(|_| ctx.malformed(format!("channel={:?} is not a non-negative integer", &record[3])))?;
        if channel >= n_channels {
            return Err(Error::UnknownChannel {
                path: path.clone(),
                line: ctx.line,
                channel,
                n_channels,
            });
        }
        let metrics = Metrics {
            snr: ctx.float(&record[4], "snr_db")?,
            tx_power: ctx.float(&record[5], "tx_power_dbmv")?,
            rx_power: ctx.float(&record[6], "rx_power_dbmv")?,
        };
        let dataset = match out.get_mut(fnode_id) {
            Some(d) => d,
            None => out
                .entry(fnode_id.to_string())
                .or_insert(FNodeDataset::new(fnode_id, interval_hours, n_channels)?),
        };
        let series = dataset
            .devices
            .entry(device_id.to_string())
            .or_insert_with(|| TelemetrySeries::new(device_id, fnode_id, n_channels));
        series.channels[channel].push(TelemetryPoint::observed(ts, metrics));
    }
    for dataset in out.values_mut() {
        for series in dataset.devices.values_mut() {
            for ch in &mut series.channels {
                ch.sort_by(|a, b| {
                    let (ka, kb) = (point_order(a), point_order(b));
                    ka.iter()
                        .zip(kb.iter())
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
            }
        }
    }
    Ok(out)
}

// Total order on points so that input row order never matters.
fn point_order(p: &TelemetryPoint) -> [f64; 4] {
    let m = p.metrics.unwrap_or_default();
    [p.ts, m.snr, m.tx_power, m.rx_power]
}

pub fn read_tickets<R: Read>(input: R, path: impl Into<PathBuf>) -> Result<Vec<Ticket>> {
    let path = path.into();
    let mut rdr = reader(input, &path, &TICKETS_HEADER)?;
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => return Err(Error::csv(&path, e)),
        }
        let ctx = RowContext {
            path: &path,
            line: record.position().map_or(0, |p| p.line()),
        };
        if record.len() != TICKETS_HEADER.len() {
            return Err(ctx.malformed(format!(
                "{} fields, expected {}",
                record.len(),
                TICKETS_HEADER.len()
            )));
        }
        let open_ts = ctx.float(&record[3], "open_ts")?;
        let close_ts = match record[4].trim() {
            "" => None,
            s => Some(ctx.float(s, "close_ts")?),
        };
        if let Some(close) = close_ts {
            if close < open_ts {
                return Err(ctx.malformed(format!("close_ts {close} precedes open_ts {open_ts}")));
            }
        }
        let kind = match record[5].trim().to_ascii_lowercase().as_str() {
            "maintenance" => TicketKind::Maintenance,
            "service" => TicketKind::Service,
            other => {
                return Err(Error::UnknownKind {
                    path: path.clone(),
                    line: ctx.line,
                    kind: other.to_string(),
                })
            }
        };
        let dispatched = match record[6].trim() {
            "0" => false,
            "1" => true,
            other => return Err(ctx.malformed(format!("dispatched={other:?}, expected 0 or 1"))),
        };
        out.push(Ticket {
            ticket_id: record[0].to_string(),
            device_id: record[1].to_string(),
            fnode_id: record[2].to_string(),
            open_ts,
            close_ts,
            kind,
            dispatched,
        });
    }
    Ok(out)
}

pub fn write_pnm_csv<'a>(
    path: impl AsRef<Path>,
    datasets: impl IntoIterator<Item = &'a FNodeDataset>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_pnm(std::io::BufWriter::new(file), path, datasets)
}

/// Write observed points in (node, device, timestamp, channel) order.
/// Placeholders are not written. Floats use the shortest representation
/// that parses back to the same value.
pub fn write_pnm<'a, W: Write>(
    out: W,
    path: &Path,
    datasets: impl IntoIterator<Item = &'a FNodeDataset>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PNM_HEADER).map_err(|e| Error::csv(path, e))?;
    for dataset in datasets {
        for series in dataset.devices.values() {
            let mut rows: Vec<(f64, usize, Metrics)> = series
                .channels
                .iter()
                .enumerate()
                .flat_map(|(c, ch)| ch.iter().filter_map(move |p| p.metrics.map(|m| (p.ts, c, m))))
                .collect();
            rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (ts, channel, m) in rows {
                w.write_record([
                    ts.to_string(),
                    series.device_id.clone(),
                    series.fnode_id.clone(),
                    channel.to_string(),
                    m.snr.to_string(),
                    m.tx_power.to_string(),
                    m.rx_power.to_string(),
                ])
                .map_err(|e| Error::csv(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_tickets_csv(path: impl AsRef<Path>, tickets: &[Ticket]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tickets(std::io::BufWriter::new(file), path, tickets)
}

pub fn write_tickets<W: Write>(out: W, path: &Path, tickets: &[Ticket]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TICKETS_HEADER).map_err(|e| Error::csv(path, e))?;
    for t in tickets {
        w.write_record([
            t.ticket_id.clone(),
            t.device_id.clone(),
            t.fnode_id.clone(),
            t.open_ts.to_string(),
            t.close_ts.map(|c| c.to_string()).unwrap_or_default(),
            t.kind.as_str().to_string(),
            if t.dispatched { "1" } else { "0" }.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pnm(rows: &str) -> Result<BTreeMap<String, FNodeDataset>> {
        let text = format!("{}\n{rows}", PNM_HEADER.join(","));
        read_pnm(text.as_bytes(), "pnm.csv", 4.0, 3)
    }

    #[test]
    fn header_only_is_empty() {
        assert!(pnm("").unwrap().is_empty());
        let t = read_tickets(format!("{}\n", TICKETS_HEADER.join(",")).as_bytes(), "t.csv").unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn three_channels_one_device() {
        let out = pnm("0,d1,f1,0,30,40,1\n0,d1,f1,1,31,41,2\n0,d1,f1,2,32,42,3\n").unwrap();
        assert_eq!(out.len(), 1);
        let ds = &out["f1"];
        assert_eq!(ds.devices.len(), 1);
        let s = &ds.devices["d1"];
        for (c, ch) in s.channels.iter().enumerate() {
            assert_eq!(ch.len(), 1);
            let m = ch[0].metrics.unwrap();
            assert_eq!(ch[0].ts, 0.0);
            assert_eq!(m.snr, 30.0 + c as f64);
            assert_eq!(m.tx_power, 40.0 + c as f64);
            assert_eq!(m.rx_power, 1.0 + c as f64);
        }
    }

    #[test]
    fn rejects_nan_and_bad_rows() {
        assert!(matches!(pnm("0,d1,f1,0,NaN,40,1\n"), Err(Error::MalformedRow { line: 2, .. })));
        assert!(matches!(pnm("0,d1,f1,0,30,40\n"), Err(Error::MalformedRow { .. })));
        assert!(matches!(pnm("x,d1,f1,0,30,40,1\n"), Err(Error::MalformedRow { .. })));
        assert!(matches!(pnm("0,d1,f1,3,30,40,1\n"), Err(Error::UnknownChannel { channel: 3, .. })));
        let bad_header = "ts,device,fnode_id,channel,snr_db,tx_power_dbmv,rx_power_dbmv\n";
        assert!(read_pnm(bad_header.as_bytes(), "p", 4.0, 3).is_err());
    }

    #[test]
    fn sorts_within_channel_and_keeps_duplicates() {
        let out = pnm("8,d1,f1,0,1,1,1\n0,d1,f1,0,1,1,1\n4,d1,f1,0,1,1,1\n4,d1,f1,0,1,1,1\n").unwrap();
        let ts: Vec<f64> = out["f1"].devices["d1"].channels[0].iter().map(|p| p.ts).collect();
        assert_eq!(ts, vec![0.0, 4.0, 4.0, 8.0]);
    }

    #[test]
    fn tickets_parse() {
        let text = format!(
            "{}\nt1,d1,f1,100,200,Maintenance,1\nt2,d2,f1,150,,service,0\n",
            TICKETS_HEADER.join(",")
        );
        let t = read_tickets(text.as_bytes(), "t.csv").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].kind, TicketKind::Maintenance);
        assert_eq!(t[0].open_ts, 100.0);
        assert_eq!(t[0].close_ts, Some(200.0));
        assert!(t[0].dispatched);
        assert_eq!(t[1].close_ts, None);
        assert_eq!(t[1].kind, TicketKind::Service);
    }

    #[test]
    fn tickets_reject_unknown_kind() {
        let text = format!("{}\nt1,d1,f1,100,,repair,1\n", TICKETS_HEADER.join(","));
        assert!(matches!(read_tickets(text.as_bytes(), "t"), Err(Error::UnknownKind { .. })));
        let text = format!("{}\nt1,d1,f1,100,50,service,1\n", TICKETS_HEADER.join(","));
        assert!(matches!(read_tickets(text.as_bytes(), "t"), Err(Error::MalformedRow { .. })));
    }
}
