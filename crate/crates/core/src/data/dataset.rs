use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageReader};

use super::{PatchPair, PatchStore, PATCH_PIXELS};
use crate::error::{Error, Result};
use crate::model::PATCH_SIZE;

pub const MOSAIC_SIDE: usize = 1024;
pub const MOSAIC_GRID: usize = MOSAIC_SIDE / PATCH_SIZE;
pub const PATCHES_PER_MOSAIC: usize = MOSAIC_GRID * MOSAIC_GRID;

const INFO_FILE: &str = "info.txt";
const PACKED_MAGIC: &[u8; 4] = b"PDPS";
const PACKED_VERSION: u32 = 1;

fn mosaic_path(root: &Path, k: usize) -> Option<PathBuf> {
    ["bmp", "pgm"]
        .iter()
        .map(|ext| root.join(format!("patches{k:04}.{ext}")))
        .find(|p| p.is_file())
}

fn read_info(path: &Path) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let Some(tok) = line.split_whitespace().next() else {
            continue;
        };
        let id = tok.parse::<u32>().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg: format!("point id `{tok}` is not a nonnegative integer"),
        })?;
        ids.push(id);
    }
    Ok(ids)
}

fn decode_mosaic(path: &Path) -> Result<Vec<u8>> {
    let format_err = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| format_err(e.to_string()))?;
    if img.width() as usize != MOSAIC_SIDE || img.height() as usize != MOSAIC_SIDE {
        return Err(format_err(format!(
            "mosaic is {}×{}, expected {MOSAIC_SIDE}×{MOSAIC_SIDE}",
            img.width(),
            img.height()
        )));
    }
    Ok(img.to_luma8().into_raw())
}

/// Reads a scene directory of mosaics plus `info.txt`.
pub fn ingest_scene(root: &Path) -> Result<PatchStore> {
    if !root.is_dir() {
        return Err(Error::DatasetStructure {
            path: root.to_path_buf(),
            msg: "not a directory".into(),
        });
    }
    let info = root.join(INFO_FILE);
    if !info.is_file() {
        return Err(Error::DatasetStructure {
            path: info,
            msg: "missing info.txt".into(),
        });
    }
    let point_ids = read_info(&info)?;
    let n = point_ids.len();
    let needed = n.div_ceil(PATCHES_PER_MOSAIC);

    let mut pixels = vec![0u8; n * PATCH_PIXELS];
    for k in 0..needed {
        let path = mosaic_path(root, k).ok_or_else(|| {
            Error::Consistency(format!(
                "info.txt lists {n} patches, which needs {needed} mosaics, but patches{k:04} is missing in {}",
                root.display()
            ))
        })?;
        let mosaic = decode_mosaic(&path)?;
        let first = k * PATCHES_PER_MOSAIC;
        for cell in 0..PATCHES_PER_MOSAIC.min(n - first) {
            let (row, col) = (cell / MOSAIC_GRID, cell % MOSAIC_GRID);
            let dst = &mut pixels[(first + cell) * PATCH_PIXELS..(first + cell + 1) * PATCH_PIXELS];
            for r in 0..PATCH_SIZE {
                let src = (row * PATCH_SIZE + r) * MOSAIC_SIDE + col * PATCH_SIZE;
                dst[r * PATCH_SIZE..(r + 1) * PATCH_SIZE]
                    .copy_from_slice(&mosaic[src..src + PATCH_SIZE]);
            }
        }
    }
    if let Some(extra) = mosaic_path(root, needed) {
        return Err(Error::Consistency(format!(
            "info.txt lists {n} patches but {} exists",
            extra.display()
        )));
    }

    let tag = root
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    PatchStore::new(pixels, point_ids, tag)
}

/// Writes `store` as binary PGM mosaics plus `info.txt`, the layout
/// [`ingest_scene`] reads. Unused trailing cells are black.
pub fn export_scene(store: &PatchStore, root: &Path) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let n = store.len();
    for k in 0..n.div_ceil(PATCHES_PER_MOSAIC) {
        let mut mosaic = vec![0u8; MOSAIC_SIDE * MOSAIC_SIDE];
        let first = k * PATCHES_PER_MOSAIC;
        for cell in 0..PATCHES_PER_MOSAIC.min(n - first) {
            let (row, col) = (cell / MOSAIC_GRID, cell % MOSAIC_GRID);
            let patch = store.patch(first + cell);
            for r in 0..PATCH_SIZE {
                let dst = (row * PATCH_SIZE + r) * MOSAIC_SIDE + col * PATCH_SIZE;
                mosaic[dst..dst + PATCH_SIZE]
                    .copy_from_slice(&patch[r * PATCH_SIZE..(r + 1) * PATCH_SIZE]);
            }
        }
        let path = root.join(format!("patches{k:04}.pgm"));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        PnmEncoder::new(BufWriter::new(file))
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(
                &mosaic,
                MOSAIC_SIDE as u32,
                MOSAIC_SIDE as u32,
                ExtendedColorType::L8,
            )
            .map_err(|e| Error::Format {
                path: path.clone(),
                msg: e.to_string(),
            })?;
    }
    let info = root.join(INFO_FILE);
    let mut text = String::with_capacity(n * 8);
    for &id in store.point_ids() {
        text.push_str(&format!("{id} 0\n"));
    }
    fs::write(&info, text).map_err(|e| Error::io(&info, e))
}

/// Reads a match file. Each nonempty line holds at least six integers:
/// `patch1 point1 _ patch2 point2 _`; anything further is ignored.
pub fn load_match_file(path: &Path, store: &PatchStore) -> Result<Vec<PatchPair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        if toks.len() < 6 {
            return Err(parse_err(format!(
                "expected at least 6 integers, found {}",
                toks.len()
            )));
        }
        let mut vals = [0u64; 6];
        for (v, tok) in vals.iter_mut().zip(&toks) {
            *v = tok
                .parse()
                .map_err(|_| parse_err(format!("`{tok}` is not a nonnegative integer")))?;
        }
        let [p1, id1, _, p2, id2, _] = vals;
        for (p, id) in [(p1, id1), (p2, id2)] {
            let idx = p as usize;
            if idx >= store.len() {
                return Err(Error::Consistency(format!(
                    "{} line {line_no}: patch {p} out of range ({} patches)",
                    path.display(),
                    store.len()
                )));
            }
            if store.point_id(idx) as u64 != id {
                return Err(Error::Consistency(format!(
                    "{} line {line_no}: patch {p} has point id {} in info.txt but {id} here",
                    path.display(),
                    store.point_id(idx)
                )));
            }
        }
        pairs.push(PatchPair::new(p1 as usize, p2 as usize, id1 == id2));
    }
    Ok(pairs)
}

/// Writes pairs in the 7-column match-file layout.
pub fn write_match_file(path: &Path, store: &PatchStore, pairs: &[PatchPair]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        writeln!(
            w,
            "{} {} 0 {} {} 0 0",
            p.idx1,
            store.point_id(p.idx1),
            p.idx2,
            store.point_id(p.idx2)
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Packed single-file cache: `PDPS`, version, tag length (u16) and UTF-8
/// tag, patch count (u32), point ids (u32 each), then raw patches. All
/// integers little-endian.
pub fn save_packed(store: &PatchStore, path: &Path) -> Result<()> {
    let tag = store.scene_tag().as_bytes();
    let mut buf = Vec::with_capacity(16 + tag.len() + store.pixels().len() + 4 * store.len());
    buf.extend_from_slice(PACKED_MAGIC);
    buf.extend_from_slice(&PACKED_VERSION.to_le_bytes());
    buf.extend_from_slice(&(tag.len() as u16).to_le_bytes());
    buf.extend_from_slice(tag);
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for &id in store.point_ids() {
        buf.extend_from_slice(&id.to_le_bytes());
    }
    buf.extend_from_slice(store.pixels());
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_packed(path: &Path) -> Result<PatchStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let err = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| err("truncated packed store"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != PACKED_MAGIC {
        return Err(err("not a packed patch store"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != PACKED_VERSION {
        return Err(err("unsupported packed store version"));
    }
    let tag_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
    let tag =
        String::from_utf8(take(tag_len)?.to_vec()).map_err(|_| err("scene tag is not UTF-8"))?;
    let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let ids: Vec<u32> = take(4 * n)?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let pixels = take(n * PATCH_PIXELS)?.to_vec();
    if take(1).is_ok() {
        return Err(err("trailing bytes after packed store"));
    }
    PatchStore::new(pixels, ids, tag)
}

/// True when `path` starts with the packed-store magic.
pub(crate) fn is_packed(path: &Path) -> bool {
    use std::io::Read;
    let mut magic = [0u8; 4];
    fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map(|_| &magic == PACKED_MAGIC)
        .unwrap_or(false)
}

/// Directory layout or packed file, whichever `path` is.
pub fn open_store(path: &Path) -> Result<PatchStore> {
    if path.is_file() && is_packed(path) {
        load_packed(path)
    } else {
        ingest_scene(path)
    }
}
