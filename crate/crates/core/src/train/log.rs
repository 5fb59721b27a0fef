use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EPOCH_LOG_HEADER: &str = "epoch,train_loss,train_acc,val_acc,seconds";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub seconds: f64,
}

pub fn format_epoch_log(logs: &[EpochLog]) -> Result<String> {
    if logs.is_empty() {
        return Err(Error::Contract("no epochs to export".into()));
    }
    let mut out = String::from(EPOCH_LOG_HEADER);
    out.push('\n');
    for l in logs {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.3}\n",
            l.epoch, l.train_loss, l.train_acc, l.val_acc, l.seconds
        ));
    }
    Ok(out)
}

pub fn export_epoch_log(logs: &[EpochLog], path: &Path) -> Result<()> {
    let text = format_epoch_log(logs)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_epoch_log(text: &str) -> Result<Vec<EpochLog>> {
    let mut lines = text.lines();
    if lines.next() != Some(EPOCH_LOG_HEADER) {
        return Err(Error::Format(format!("epoch log must start with `{EPOCH_LOG_HEADER}`")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Format(format!("epoch log row {}: `{line}`", i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(EpochLog {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: num(f[1])?,
                train_acc: num(f[2])?,
                val_acc: num(f[3])?,
                seconds: num(f[4])?,
            })
        })
        .collect()
}

/// Population standard deviation of validation accuracy over the last `n` epochs.
pub fn val_acc_std(logs: &[EpochLog], n: usize) -> Option<f64> {
    if n == 0 || logs.len() < n {
        return None;
    }
    let tail = &logs[logs.len() - n..];
    let mean = tail.iter().map(|l| l.val_acc).sum::<f64>() / n as f64;
    let var = tail.iter().map(|l| (l.val_acc - mean).powi(2)).sum::<f64>() / n as f64;
    Some(var.sqrt())
}
