//! Line-based index-set format:
//!
//! ```text
//! misc-index-set D=1 N=2
//! 1 1 1
//! 2 1 1
//! ```
//!
//! One multi-index per line (`D` spatial then `N` stochastic levels), in
//! lexicographic order. Blank lines and `#` comments are ignored on input.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, ensure, Context};
use misc_core::{IndexSet, MultiIndex};

const MAGIC: &str = "misc-index-set";

pub fn to_string(set: &IndexSet) -> String {
    let mut out = format!("{MAGIC} D={} N={}\n", set.spatial_dim(), set.stochastic_dim());
    for idx in set {
        let line: Vec<String> = idx.levels().iter().map(|l| l.to_string()).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    out
}

/// Parse and check downward closedness unless `allow_open`.
pub fn parse(text: &str, allow_open: bool) -> anyhow::Result<IndexSet> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap().trim()))
        .filter(|(_, l)| !l.is_empty());
    let (_, header) = lines.next().context("empty index-set file")?;
    let mut fields = header.split_whitespace();
    ensure!(fields.next() == Some(MAGIC), "missing `{MAGIC}` header");
    let mut dim = |key: &str| -> anyhow::Result<usize> {
        let f = fields.next().with_context(|| format!("header lacks {key}="))?;
        let v = f
            .strip_prefix(key)
            .and_then(|s| s.strip_prefix('='))
            .with_context(|| format!("expected {key}=<n>, got {f:?}"))?;
        Ok(v.parse()?)
    };
    let spatial = dim("D")?;
    let stochastic = dim("N")?;
    let mut set = IndexSet::new(spatial, stochastic);
    for (line_no, line) in lines {
        let levels = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<Vec<u32>, _>>()
            .with_context(|| format!("line {line_no}: not a list of integers"))?;
        if levels.len() != spatial + stochastic {
            bail!(
                "line {line_no}: expected {} levels, got {}",
                spatial + stochastic,
                levels.len()
            );
        }
        set.insert(MultiIndex::from_levels(levels, spatial))
            .with_context(|| format!("line {line_no}"))?;
    }
    if !allow_open {
        set.check_downward_closed()?;
    }
    Ok(set)
}

pub fn write(path: &Path, set: &IndexSet) -> anyhow::Result<()> {
    std::fs::write(path, to_string(set)).with_context(|| format!("writing {}", path.display()))
}

pub fn read(path: &Path) -> anyhow::Result<IndexSet> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text, false).with_context(|| format!("parsing {}", path.display()))
}
