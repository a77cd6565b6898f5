use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use hierlat::pipeline::{read_model, Model};
use hierlat::Error;

use crate::error::CliError;

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let f = File::create(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

pub fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> hierlat::Result<()>) -> Result<(), CliError> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush()?;
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    let f = File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(BufReader::new(f))
}

pub fn load_model(path: &Path) -> Result<Model, CliError> {
    Ok(read_model(&mut open(path)?)?)
}

/// `dir/<id>.model` when `path` is a directory, `path` itself otherwise.
pub fn model_path(path: &Path, id: &str) -> PathBuf {
    if path.is_dir() {
        path.join(format!("{id}.model"))
    } else {
        path.to_path_buf()
    }
}

/// Runs `f` over `items` on up to `workers` threads; results keep the input
/// order and the first error (in input order) wins.
pub fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> Result<R, CliError> + Sync,
) -> Result<Vec<R>, CliError> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<R, CliError>>> = (0..items.len()).map(|_| None).collect();
    let done = std::sync::Mutex::new(&mut slots);
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                done.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every slot filled")).collect()
}
