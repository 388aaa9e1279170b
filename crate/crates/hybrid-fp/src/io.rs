//! Plain-text output: density snapshots, trajectories, impact events and
//! run manifests.
//!
//! A snapshot starts with a header line
//! `# t=<t> shape=<n1,...> sheets=<s> box=<l1:u1,...>` (optionally followed by
//! `periodic=<axes>` and `source=<tag>`), then one row per index of all axes
//! but the last, with the last axis across the columns. Sheets follow each
//! other as consecutive blocks of rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::HybridTrajectory;
use crate::grid::{DensityField, GridSpec};
use crate::system::DomainBox;

/// Renders a field as snapshot text. `source` is appended to the header.
pub fn snapshot_to_string(field: &DensityField, source: Option<&str>) -> String {
    let mut s = field.grid.header(field.t);
    if let Some(tag) = source {
        let _ = write!(s, " source={tag}");
    }
    s.push('\n');
    let cols = *field.grid.shape.last().expect("grid has at least one axis");
    for row in field.values.chunks(cols) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

/// Writes a snapshot file.
pub fn write_snapshot(path: &Path, field: &DensityField, source: Option<&str>) -> Result<()> {
    fs::write(path, snapshot_to_string(field, source))?;
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| v.trim().parse::<T>().map_err(|_| Error::Parse(format!("bad {what} entry '{v}'"))))
        .collect()
}

/// Parses snapshot text. The reference density is taken as 1 for the
/// cached mass.
pub fn snapshot_from_str(text: &str) -> Result<(DensityField, Option<String>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty snapshot".into()))?;
    let header = header.strip_prefix('#').ok_or_else(|| Error::Parse("missing snapshot header".into()))?;
    let mut kv = BTreeMap::new();
    for tok in header.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse(format!("bad header token '{tok}'")))?;
        kv.insert(k, v);
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| Error::Parse(format!("header lacks '{k}'")));
    let t: f64 = get("t")?.parse().map_err(|_| Error::Parse("bad t".into()))?;
    let shape: Vec<usize> = parse_list(get("shape")?, "shape")?;
    let sheets: usize = get("sheets")?.parse().map_err(|_| Error::Parse("bad sheets".into()))?;
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for b in get("box")?.split(',') {
        let (l, u) = b.split_once(':').ok_or_else(|| Error::Parse(format!("bad box entry '{b}'")))?;
        lower.push(l.parse().map_err(|_| Error::Parse(format!("bad bound '{l}'")))?);
        upper.push(u.parse().map_err(|_| Error::Parse(format!("bad bound '{u}'")))?);
    }
    let mut periodic = vec![false; lower.len()];
    if let Some(p) = kv.get("periodic") {
        for i in parse_list::<usize>(p, "periodic")? {
            *periodic.get_mut(i).ok_or_else(|| Error::Parse("periodic axis out of range".into()))? = true;
        }
    }
    let grid = GridSpec::new(DomainBox::new(lower, upper, periodic)?, shape, sheets)?;
    let mut values = Vec::with_capacity(grid.len());
    for line in lines.filter(|l| !l.trim().is_empty()) {
        values.extend(parse_list::<f64>(line, "value")?);
    }
    if values.len() != grid.len() {
        return Err(Error::Parse(format!("snapshot has {} values, header implies {}", values.len(), grid.len())));
    }
    let source = kv.get("source").map(|s| s.to_string());
    Ok((DensityField::with_unit_density(grid, t, values)?, source))
}

/// Reads a snapshot file.
pub fn read_snapshot(path: &Path) -> Result<(DensityField, Option<String>)> {
    snapshot_from_str(&fs::read_to_string(path)?)
}

/// Trajectory CSV: `t,x1,...,xn`.
pub fn trajectory_to_string(traj: &HybridTrajectory) -> String {
    let n = traj.samples.first().map_or(0, |s| s.1.len());
    let mut s = String::from("t");
    for i in 1..=n {
        let _ = write!(s, ",x{i}");
    }
    s.push('\n');
    for (t, x) in &traj.samples {
        let _ = write!(s, "{t:e}");
        for v in x {
            let _ = write!(s, ",{v:e}");
        }
        s.push('\n');
    }
    s
}

/// Event CSV: `t,pre_1..pre_n,post_1..post_n`.
pub fn events_to_string(traj: &HybridTrajectory) -> String {
    let n = traj.events.first().map_or(0, |e| e.x_pre.len());
    let mut s = String::from("t");
    for i in 1..=n {
        let _ = write!(s, ",pre_{i}");
    }
    for i in 1..=n {
        let _ = write!(s, ",post_{i}");
    }
    s.push('\n');
    for e in &traj.events {
        let _ = write!(s, "{:e}", e.t);
        for v in e.x_pre.iter().chain(&e.x_post) {
            let _ = write!(s, ",{v:e}");
        }
        s.push('\n');
    }
    s
}

/// Ordered `[section] key = value` document, used for run manifests.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub sections: Vec<(String, Vec<(String, String)>)>,
}

impl Manifest {
    /// Appends a key to a section, creating the section on first use.
    pub fn set(&mut self, section: &str, key: &str, value: impl ToString) {
        let v = value.to_string();
        if let Some((_, kv)) = self.sections.iter_mut().find(|(s, _)| s == section) {
            if let Some(e) = kv.iter_mut().find(|(k, _)| k == key) {
                e.1 = v;
            } else {
                kv.push((key.to_string(), v));
            }
        } else {
            self.sections.push((section.to_string(), vec![(key.to_string(), v)]));
        }
    }

    /// Looks up a value.
    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .iter()
            .find(|(s, _)| s == section)
            .and_then(|(_, kv)| kv.iter().find(|(k, _)| k == key))
            .map(|(_, v)| v.as_str())
    }

    /// Renders the document.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (i, (name, kv)) in self.sections.iter().enumerate() {
            if i > 0 {
                s.push('\n');
            }
            let _ = writeln!(s, "[{name}]");
            for (k, v) in kv {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }

    /// Parses the `[section] key = value` grammar; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::default();
        let mut current: Option<String> = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_string();
                if !m.sections.iter().any(|(s, _)| *s == name) {
                    m.sections.push((name.clone(), Vec::new()));
                }
                current = Some(name);
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", ln + 1)))?;
            let sec = current.as_deref().ok_or_else(|| Error::Parse(format!("line {}: key outside a section", ln + 1)))?;
            m.set(sec, k.trim(), v.trim());
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip() {
        let b = DomainBox::new(vec![0.0, -1.0], vec![2.0, 1.0], vec![false, true]).unwrap();
        let g = GridSpec::new(b, vec![4, 5], 2).unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|i| (i as f64).sin() / 3.0).collect();
        let f = DensityField::with_unit_density(g, 1.25, vals).unwrap();
        let text = snapshot_to_string(&f, Some("oracle"));
        assert!(text.starts_with("# t=1.25 shape=4,5 sheets=2 box=0:2,-1:1 periodic=1 source=oracle\n"));
        assert_eq!(text.lines().count(), 1 + 4 * 2);
        let (back, src) = snapshot_from_str(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(src.as_deref(), Some("oracle"));
    }

    #[test]
    fn snapshot_rejects_wrong_value_count() {
        let text = "# t=0 shape=4,4 sheets=1 box=0:1,0:1\n1,2,3,4\n";
        assert!(matches!(snapshot_from_str(text), Err(Error::Parse(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = Manifest::default();
        m.set("model", "id", "ball");
        m.set("solver", "dt", 0.005);
        m.set("model", "m", 1);
        let text = m.render();
        assert_eq!(text, "[model]\nid = ball\nm = 1\n\n[solver]\ndt = 0.005\n");
        assert_eq!(Manifest::parse(&text).unwrap(), m);
    }

    #[test]
    fn manifest_parse_errors() {
        assert!(Manifest::parse("a = 1\n").is_err());
        assert!(Manifest::parse("[s]\nnot a pair\n").is_err());
        let m = Manifest::parse("# comment\n[s]\nk = v # trailing\n").unwrap();
        assert_eq!(m.get("s", "k"), Some("v"));
    }
}
