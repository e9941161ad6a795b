//! Panel CSV files: one file of spend events, one of customers.
//!
//! events:    customer_id,day,spend
//! customers: customer_id,install_day,first_spend_day,channel

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::Serialize;

use crate::error::{GppmError, Result};
use crate::model::{CustomerRecord, SpendPanel};

/// A loaded panel with the number of duplicate spend rows that were collapsed.
#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: SpendPanel,
    pub duplicate_rows: usize,
}

fn fail(file: &str, line: u64, msg: impl std::fmt::Display) -> GppmError {
    GppmError::Panel(format!("{file} line {line}: {msg}"))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| GppmError::Panel(format!("{}: {e}", path.display())))
}

fn columns(rdr: &mut csv::Reader<std::fs::File>, file: &str, want: &[&str]) -> Result<Vec<usize>> {
    let header = rdr.headers()?.clone();
    want.iter()
        .map(|w| {
            header
                .iter()
                .position(|h| h == *w)
                .ok_or_else(|| fail(file, 1, format!("missing column {w}")))
        })
        .collect()
}

fn parse_day(file: &str, line: u64, field: &str, raw: &str) -> Result<u32> {
    match raw.parse::<u32>() {
        Ok(d) if d >= 1 => Ok(d),
        _ => Err(fail(
            file,
            line,
            format!("{field} must be an integer >= 1, got {raw:?}"),
        )),
    }
}

/// Reads and validates a panel. The horizon defaults to the latest day that
/// appears in either file.
pub fn load_panel(events_path: &Path, customers_path: &Path, horizon: Option<u32>) -> Result<LoadedPanel> {
    let cfile = customers_path.display().to_string();
    let mut rdr = reader(customers_path)?;
    let cols = columns(
        &mut rdr,
        &cfile,
        &["customer_id", "install_day", "first_spend_day", "channel"],
    )?;
    let mut customers: Vec<CustomerRecord> = Vec::new();
    let mut index: HashMap<String, (usize, u64)> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[cols[0]].to_string();
        let install_day = parse_day(&cfile, line, "install_day", &rec[cols[1]])?;
        let first_spend_day = parse_day(&cfile, line, "first_spend_day", &rec[cols[2]])?;
        if let Some((_, prev)) = index.get(&id) {
            return Err(fail(
                &cfile,
                line,
                format!("customer {id} already defined on line {prev}"),
            ));
        }
        index.insert(id.clone(), (customers.len(), line));
        customers.push(CustomerRecord {
            customer_id: id,
            install_day,
            first_spend_day,
            channel: rec[cols[3]].to_string(),
            spend_days: BTreeSet::new(),
        });
    }

    let efile = events_path.display().to_string();
    let mut rdr = reader(events_path)?;
    let cols = columns(&mut rdr, &efile, &["customer_id", "day", "spend"])?;
    let mut events = 0usize;
    let mut duplicate_rows = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = &rec[cols[0]];
        let day = parse_day(&efile, line, "day", &rec[cols[1]])?;
        let spend = match &rec[cols[2]] {
            "1" => true,
            "0" => false,
            other => return Err(fail(&efile, line, format!("spend must be 0 or 1, got {other:?}"))),
        };
        let Some(&(i, _)) = index.get(id) else {
            return Err(fail(&efile, line, format!("unknown customer_id {id}")));
        };
        if spend {
            events += 1;
            if !customers[i].spend_days.insert(day) {
                duplicate_rows += 1;
            }
        }
    }
    if events == 0 {
        return Err(GppmError::Panel("no spend events".into()));
    }
    for c in &customers {
        if !c.spend_days.contains(&c.first_spend_day) {
            let line = index[&c.customer_id].1;
            return Err(fail(
                &cfile,
                line,
                format!(
                    "customer {}: first_spend_day {} has no matching spend row",
                    c.customer_id, c.first_spend_day
                ),
            ));
        }
    }
    if duplicate_rows > 0 {
        log::warn!("collapsed {duplicate_rows} duplicate spend rows");
    }
    let latest = customers
        .iter()
        .flat_map(|c| c.spend_days.iter().copied().chain([c.install_day, c.first_spend_day]))
        .max()
        .unwrap_or(1);
    let horizon = horizon.unwrap_or(latest);
    Ok(LoadedPanel {
        panel: SpendPanel::new(customers, horizon)?,
        duplicate_rows,
    })
}

#[derive(Serialize)]
struct EventRow<'a> {
    customer_id: &'a str,
    day: u32,
    spend: u8,
}

#[derive(Serialize)]
struct CustomerRow<'a> {
    customer_id: &'a str,
    install_day: u32,
    first_spend_day: u32,
    channel: &'a str,
}

/// Writes a panel in the format read by [`load_panel`]. Only spend rows are
/// written.
pub fn write_panel(panel: &SpendPanel, events_path: &Path, customers_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(customers_path)?;
    for c in &panel.customers {
        w.serialize(CustomerRow {
            customer_id: &c.customer_id,
            install_day: c.install_day,
            first_spend_day: c.first_spend_day,
            channel: &c.channel,
        })?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(events_path)?;
    for c in &panel.customers {
        for &day in &c.spend_days {
            w.serialize(EventRow {
                customer_id: &c.customer_id,
                day,
                spend: 1,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}
