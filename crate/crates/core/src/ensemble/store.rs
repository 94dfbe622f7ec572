use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Checkpoint, Trajectory};

const INDEX_FILE: &str = "index.tsv";
const FANOUT: u64 = 1000;

/// Address of a saved state: the window it closed and the particle that ran it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CheckpointRef {
    pub window: u32,
    pub particle: u64,
}

impl CheckpointRef {
    pub fn new(window: u32, particle: u64) -> Self {
        Self { window, particle }
    }
}

impl fmt::Display for CheckpointRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}/p{}", self.window, self.particle)
    }
}

enum Backend {
    Disk { root: PathBuf },
    Memory(Mutex<HashMap<CheckpointRef, (Checkpoint, Trajectory)>>),
}

/// Checkpoints and their window trajectories, keyed by `CheckpointRef`.
///
/// On disk each entry is `w{window}/{particle / 1000}/{particle}.ckpt` plus a
/// `.traj` sidecar; both are written to a temporary name and renamed into
/// place. `index.tsv` is an append-only log of `put`/`del` records and can
/// always be rebuilt from the files.
pub struct CheckpointStore {
    backend: Backend,
    index: BTreeMap<CheckpointRef, u64>,
}

impl CheckpointStore {
    pub fn in_memory() -> Self {
        Self {
            backend: Backend::Memory(Mutex::new(HashMap::new())),
            index: BTreeMap::new(),
        }
    }

    /// Open or create a store at `root`, reconciling the index with the files.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let mut store = Self {
            backend: Backend::Disk { root: root.clone() },
            index: read_index(&root.join(INDEX_FILE))?,
        };
        store.reconcile()?;
        Ok(store)
    }

    pub fn root(&self) -> Option<&Path> {
        match &self.backend {
            Backend::Disk { root } => Some(root),
            Backend::Memory(_) => None,
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, r: CheckpointRef) -> bool {
        self.index.contains_key(&r)
    }

    pub fn refs(&self) -> impl Iterator<Item = CheckpointRef> + '_ {
        self.index.keys().copied()
    }

    pub fn checksum(&self, r: CheckpointRef) -> Option<u64> {
        self.index.get(&r).copied()
    }

    pub fn checkpoint_path(&self, r: CheckpointRef) -> Option<PathBuf> {
        self.root().map(|root| entry_path(root, r, "ckpt"))
    }

    /// Read and verify an indexed checkpoint.
    pub fn checkpoint(&self, r: CheckpointRef) -> Result<Checkpoint> {
        let expected = self
            .index
            .get(&r)
            .copied()
            .ok_or(Error::MissingCheckpoint {
                window: r.window,
                particle: r.particle,
                lineage: Vec::new(),
            })?;
        let ckpt = match &self.backend {
            Backend::Disk { root } => Checkpoint::read_file(&entry_path(root, r, "ckpt"))?,
            Backend::Memory(m) => {
                lock(m)
                    .get(&r)
                    .map(|(c, _)| c.clone())
                    .ok_or(Error::MissingCheckpoint {
                        window: r.window,
                        particle: r.particle,
                        lineage: Vec::new(),
                    })?
            }
        };
        if ckpt.checksum() != expected {
            return Err(crate::error::CheckpointError::ChecksumMismatch {
                stored: expected,
                computed: ckpt.checksum(),
            }
            .into());
        }
        Ok(ckpt)
    }

    pub fn trajectory(&self, r: CheckpointRef) -> Result<Trajectory> {
        if !self.contains(r) {
            return Err(Error::MissingTrajectory(r.particle));
        }
        match &self.backend {
            Backend::Disk { root } => read_trajectory(&entry_path(root, r, "traj")),
            Backend::Memory(m) => lock(m)
                .get(&r)
                .map(|(_, t)| t.clone())
                .ok_or(Error::MissingTrajectory(r.particle)),
        }
    }

    /// Persist an entry without indexing it; safe to call from many threads
    /// for distinct refs. Entries become visible after `commit`.
    pub fn write(&self, r: CheckpointRef, ckpt: &Checkpoint, traj: &Trajectory) -> Result<()> {
        match &self.backend {
            Backend::Disk { root } => {
                let ckpt_path = entry_path(root, r, "ckpt");
                let dir = ckpt_path.parent().expect("entry paths have a parent");
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let traj_bytes = serde_json::to_vec(traj).map_err(|e| Error::Parse {
                    what: "trajectory".into(),
                    reason: e.to_string(),
                })?;
                // sidecar first so a present checkpoint implies a present trajectory
                write_atomic(&entry_path(root, r, "traj"), &traj_bytes)?;
                write_atomic(&ckpt_path, ckpt.as_bytes())
            }
            Backend::Memory(m) => {
                lock(m).insert(r, (ckpt.clone(), traj.clone()));
                Ok(())
            }
        }
    }

    /// Index written entries, in the order given.
    pub fn commit(&mut self, entries: &[(CheckpointRef, u64)]) -> Result<()> {
        let lines: Vec<String> = entries
            .iter()
            .map(|(r, sum)| format!("put\t{}\t{}\t{sum:016x}", r.window, r.particle))
            .collect();
        self.append_index(&lines)?;
        self.index.extend(entries.iter().copied());
        Ok(())
    }

    /// Write and index a single entry.
    pub fn put(&mut self, r: CheckpointRef, ckpt: &Checkpoint, traj: &Trajectory) -> Result<()> {
        self.write(r, ckpt, traj)?;
        self.commit(&[(r, ckpt.checksum())])
    }

    /// Delete every entry not in `keep`; returns how many were removed.
    pub fn gc(&mut self, keep: &BTreeSet<CheckpointRef>) -> Result<usize> {
        let doomed: Vec<CheckpointRef> = self
            .index
            .keys()
            .filter(|r| !keep.contains(r))
            .copied()
            .collect();
        self.remove(&doomed)?;
        Ok(doomed.len())
    }

    fn remove(&mut self, refs: &[CheckpointRef]) -> Result<()> {
        if refs.is_empty() {
            return Ok(());
        }
        let lines: Vec<String> = refs
            .iter()
            .map(|r| format!("del\t{}\t{}", r.window, r.particle))
            .collect();
        self.append_index(&lines)?;
        for r in refs {
            self.index.remove(r);
            match &self.backend {
                Backend::Disk { root } => {
                    for ext in ["ckpt", "traj"] {
                        let p = entry_path(root, *r, ext);
                        match fs::remove_file(&p) {
                            Ok(()) => {}
                            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                            Err(e) => return Err(Error::io(p, e)),
                        }
                    }
                }
                Backend::Memory(m) => {
                    lock(m).remove(r);
                }
            }
        }
        Ok(())
    }

    fn append_index(&self, lines: &[String]) -> Result<()> {
        let Backend::Disk { root } = &self.backend else {
            return Ok(());
        };
        if lines.is_empty() {
            return Ok(());
        }
        let path = root.join(INDEX_FILE);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut buf = String::new();
        for l in lines {
            buf.push_str(l);
            buf.push('\n');
        }
        f.write_all(buf.as_bytes()).map_err(|e| Error::io(&path, e))
    }

    /// Make the index agree with the files: adopt complete, verified entries
    /// that are on disk but unindexed, and drop entries whose files are gone.
    fn reconcile(&mut self) -> Result<()> {
        let Backend::Disk { root } = &self.backend else {
            return Ok(());
        };
        let on_disk = scan(root)?;
        let mut adopted = Vec::new();
        for (r, path) in &on_disk {
            if self.index.contains_key(r) || !entry_path(root, *r, "traj").exists() {
                continue;
            }
            match Checkpoint::read_file(path) {
                Ok(c) => adopted.push((*r, c.checksum())),
                Err(e) => log::warn!("ignoring unreadable checkpoint {}: {e}", path.display()),
            }
        }
        let missing: Vec<CheckpointRef> = self
            .index
            .keys()
            .filter(|r| !on_disk.contains_key(r))
            .copied()
            .collect();
        if !adopted.is_empty() {
            log::info!("store: adopted {} unindexed entries", adopted.len());
            self.commit(&adopted)?;
        }
        if !missing.is_empty() {
            log::warn!("store: {} indexed entries have no file", missing.len());
            self.remove(&missing)?;
        }
        Ok(())
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn entry_path(root: &Path, r: CheckpointRef, ext: &str) -> PathBuf {
    root.join(format!("w{}", r.window))
        .join(format!("{:03}", r.particle / FANOUT))
        .join(format!("{}.{ext}", r.particle))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        what: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn read_index(path: &Path) -> Result<BTreeMap<CheckpointRef, u64>> {
    let mut index = BTreeMap::new();
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(index),
        Err(e) => return Err(Error::io(path, e)),
    };
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split('\t').collect();
        let parse_ref = |w: &str, p: &str| -> Option<CheckpointRef> {
            Some(CheckpointRef::new(w.parse().ok()?, p.parse().ok()?))
        };
        match fields.as_slice() {
            ["put", w, p, sum] => {
                if let (Some(r), Ok(sum)) = (parse_ref(w, p), u64::from_str_radix(sum, 16)) {
                    index.insert(r, sum);
                    continue;
                }
            }
            ["del", w, p] => {
                if let Some(r) = parse_ref(w, p) {
                    index.remove(&r);
                    continue;
                }
            }
            [""] => continue,
            _ => {}
        }
        // a torn final line from an interrupted append is tolerated; the
        // directory scan recovers whatever it described
        log::warn!(
            "{}:{}: skipping malformed index record",
            path.display(),
            n + 1
        );
    }
    Ok(index)
}

fn scan(root: &Path) -> Result<BTreeMap<CheckpointRef, PathBuf>> {
    let mut found = BTreeMap::new();
    let read = |p: &Path| fs::read_dir(p).map_err(|e| Error::io(p, e));
    for w in read(root)? {
        let w = w.map_err(|e| Error::io(root, e))?;
        let Some(window) = w
            .file_name()
            .to_str()
            .and_then(|n| n.strip_prefix('w')?.parse::<u32>().ok())
        else {
            continue;
        };
        if !w.path().is_dir() {
            continue;
        }
        for bucket in read(&w.path())? {
            let bucket = bucket.map_err(|e| Error::io(w.path(), e))?.path();
            if !bucket.is_dir() {
                continue;
            }
            for f in read(&bucket)? {
                let path = f.map_err(|e| Error::io(&bucket, e))?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("ckpt") {
                    continue;
                }
                if let Some(particle) = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .and_then(|s| s.parse().ok())
                {
                    found.insert(CheckpointRef::new(window, particle), path);
                }
            }
        }
    }
    Ok(found)
}
