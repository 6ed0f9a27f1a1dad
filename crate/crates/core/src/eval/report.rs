use std::fmt::Write as _;
use std::io::Write;

use crate::error::Result;

/// Dev accuracy and test P@1 of one training checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub checkpoint: usize,
    pub examples: u64,
    pub dev_accuracy: f64,
    pub p_at_1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub p_at_1: f64,
    pub wins: usize,
    pub pools: usize,
    pub n: usize,
    pub accuracy: Option<f64>,
    pub series: Vec<SeriesPoint>,
    /// Pearson r over `series`, or why it is undefined.
    pub correlation: Option<std::result::Result<f64, String>>,
}

impl EvalReport {
    pub fn new(wins: usize, pools: usize, n: usize) -> Self {
        EvalReport {
            p_at_1: if pools == 0 { 0.0 } else { wins as f64 / pools as f64 },
            wins,
            pools,
            n,
            accuracy: None,
            series: Vec::new(),
            correlation: None,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("metric\tvalue\n");
        let _ = writeln!(s, "p_at_1\t{:.6}", self.p_at_1);
        let _ = writeln!(s, "wins\t{}", self.wins);
        let _ = writeln!(s, "pools\t{}", self.pools);
        let _ = writeln!(s, "n\t{}", self.n);
        if let Some(a) = self.accuracy {
            let _ = writeln!(s, "accuracy\t{a:.6}");
        }
        match &self.correlation {
            Some(Ok(r)) => {
                let _ = writeln!(s, "pearson_r\t{r:.6}");
            }
            Some(Err(_)) => s.push_str("pearson_r\tundefined\n"),
            None => {}
        }
        if !self.series.is_empty() {
            s.push_str("\ncheckpoint\texamples\tdev_acc\tp_at_1\n");
            for p in &self.series {
                let _ = writeln!(
                    s,
                    "{}\t{}\t{:.6}\t{:.6}",
                    p.checkpoint, p.examples, p.dev_accuracy, p.p_at_1
                );
            }
        }
        s
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_tsv().as_bytes())?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "P@1 = {:.4} ({} of {} pools, N = {})",
            self.p_at_1, self.wins, self.pools, self.n
        );
        if let Some(a) = self.accuracy {
            let _ = write!(s, "\nclassifier accuracy = {a:.4}");
        }
        match &self.correlation {
            Some(Ok(r)) => {
                let _ = write!(
                    s,
                    "\ndev accuracy vs P@1: r = {r:.4} over {} checkpoints",
                    self.series.len()
                );
            }
            Some(Err(why)) => {
                let _ = write!(s, "\ndev accuracy vs P@1: undefined ({why})");
            }
            None => {}
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_and_summary() {
        let mut r = EvalReport::new(3, 4, 10);
        r.accuracy = Some(0.5);
        assert_eq!(r.p_at_1, 0.75);
        let tsv = r.to_tsv();
        assert!(tsv.starts_with("metric\tvalue\np_at_1\t0.750000\n"));
        assert!(tsv.contains("accuracy\t0.500000"));
        assert!(r.summary().contains("3 of 4 pools"));
    }
}
