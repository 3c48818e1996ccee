//! File helpers shared by the subcommands.

use anyhow::{bail, Context, Result};
use rendition_core::midi::{parse_smf, write_smf_with_comment, MidiPiece};
use rendition_core::tokenizer::TokenId;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub fn read_midi(path: &Path) -> Result<MidiPiece> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_smf(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_midi(path: &Path, piece: &MidiPiece, comment: &str) -> Result<()> {
    ensure_parent(path)?;
    let bytes = write_smf_with_comment(piece, Some(comment));
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn is_midi(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
}

/// MIDI files directly inside `dir`, sorted by name.
pub fn midi_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    files.retain(|p| p.is_file() && is_midi(p));
    files.sort();
    Ok(files)
}

/// A single file, or every MIDI file in a directory.
pub fn midi_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        midi_files(path)
    } else if path.is_file() {
        Ok(vec![path.to_path_buf()])
    } else {
        bail!("InputNotFound: {}", path.display())
    }
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "piece".into())
}

/// Writes to `out`, or to stdout when no path is given.
pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            ensure_parent(path)?;
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// Plain-text token listing: `#` header lines, then one `name<TAB>ids…` line per sequence.
#[derive(Debug, Default)]
pub struct TokenDump {
    pub entries: Vec<(String, Vec<TokenId>)>,
}

impl TokenDump {
    pub fn render(&self, header: &str) -> String {
        let mut out = format!("# {header}\n");
        for (name, ids) in &self.entries {
            let ids: Vec<String> = ids.iter().map(u16::to_string).collect();
            let _ = writeln!(out, "{name}\t{}", ids.join(" "));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((name, ids)) = line.split_once('\t') else {
                bail!("MalformedDump: line {} has no tab separator", n + 1);
            };
            let ids = ids
                .split_whitespace()
                .map(|t| t.parse::<TokenId>())
                .collect::<Result<Vec<_>, _>>()
                .with_context(|| format!("MalformedDump: line {}", n + 1))?;
            entries.push((name.to_string(), ids));
        }
        Ok(TokenDump { entries })
    }

    /// Reads a text dump, or a shard directory with generated names.
    pub fn load(path: &Path) -> Result<Self> {
        if path.is_dir() {
            let seqs = rendition_core::corpus::read_shards(path)
                .with_context(|| format!("reading shards in {}", path.display()))?;
            let entries = seqs.into_iter().enumerate().map(|(i, s)| (format!("seq-{i:05}"), s.0)).collect();
            return Ok(TokenDump { entries });
        }
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
