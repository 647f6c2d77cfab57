use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use crate::job::PayloadKind;

/// Container type recognized from the first bytes of an upload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sniffed {
    Video(&'static str),
    Tar,
    Zip,
    Unrecognized(&'static str),
}

/// Bytes of the upload head needed by [`sniff`].
pub const SNIFF_LEN: usize = 512;

pub fn sniff(head: &[u8]) -> Sniffed {
    let at = |offset: usize, magic: &[u8]| head.get(offset..offset + magic.len()) == Some(magic);
    if head.is_empty() {
        Sniffed::Unrecognized("empty")
    } else if at(4, b"ftyp") {
        Sniffed::Video("mp4/quicktime")
    } else if at(0, &[0x1a, 0x45, 0xdf, 0xa3]) {
        Sniffed::Video("matroska/webm")
    } else if at(0, b"RIFF") && at(8, b"AVI ") {
        Sniffed::Video("avi")
    } else if at(257, b"ustar") {
        Sniffed::Tar
    } else if at(0, b"PK\x03\x04") || at(0, b"PK\x05\x06") {
        Sniffed::Zip
    } else if at(0, b"\x89PNG") {
        Sniffed::Unrecognized("png image")
    } else if at(0, &[0xff, 0xd8, 0xff]) {
        Sniffed::Unrecognized("jpeg image")
    } else if at(0, &[0x1f, 0x8b]) {
        Sniffed::Unrecognized("gzip stream")
    } else if at(0, b"%PDF") {
        Sniffed::Unrecognized("pdf document")
    } else if at(0, b"ply\n") {
        Sniffed::Unrecognized("ply model")
    } else if std::str::from_utf8(head).map_or_else(|e| e.error_len().is_none(), |_| true) {
        Sniffed::Unrecognized("text")
    } else {
        Sniffed::Unrecognized("binary data")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum UnpackError {
    #[error("cannot unpack archive: {0}")]
    Io(#[from] io::Error),
    #[error("cannot unpack archive: {0}")]
    Zip(#[from] zip::result::ZipError),
    #[error("archive contains no image frames")]
    NoFrames,
}

/// Layout found inside an unpacked archive, relative to its root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveLayout {
    pub kind: PayloadKind,
    pub frames: PathBuf,
    pub sparse: Option<PathBuf>,
    pub frame_count: usize,
}

pub fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

/// Image files directly inside `dir`.
pub fn count_frames(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter(|e| e.path().is_file() && is_image(&e.path()))
        .count()
}

/// Extracts a tar or zip archive into `dest`; entries escaping `dest` are
/// refused by both readers.
pub fn unpack(archive: &Path, kind: Sniffed, dest: &Path) -> Result<(), UnpackError> {
    std::fs::create_dir_all(dest)?;
    let file = BufReader::new(File::open(archive)?);
    match kind {
        Sniffed::Tar => tar::Archive::new(file).unpack(dest)?,
        Sniffed::Zip => zip::ZipArchive::new(file)?.extract(dest)?,
        _ => return Err(io::Error::other("not an archive").into()),
    }
    Ok(())
}

/// Finds the frames directory (the one holding the most images) and an
/// optional sparse model (the first directory with `cameras.{bin,txt}`).
pub fn inspect(root: &Path) -> Result<ArchiveLayout, UnpackError> {
    let mut best: Option<(usize, PathBuf)> = None;
    let mut sparse: Option<PathBuf> = None;
    let mut dirs: Vec<PathBuf> = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_dir())
        .map(|e| e.into_path())
        .collect();
    dirs.sort_by_key(|d| d.components().count());
    for dir in dirs {
        let n = count_frames(&dir);
        if n > 0 && best.as_ref().is_none_or(|(m, _)| n > *m) {
            best = Some((n, dir.clone()));
        }
        if sparse.is_none() && (dir.join("cameras.txt").is_file() || dir.join("cameras.bin").is_file()) {
            sparse = Some(dir);
        }
    }
    let (frame_count, frames) = best.ok_or(UnpackError::NoFrames)?;
    let rel = |p: PathBuf| p.strip_prefix(root).map(Path::to_path_buf).unwrap_or(p);
    Ok(ArchiveLayout {
        kind: if sparse.is_some() {
            PayloadKind::FramesWithSparse
        } else {
            PayloadKind::Frames
        },
        frames: rel(frames),
        sparse: sparse.map(rel),
        frame_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tar_bytes(entries: &[(&str, &[u8])]) -> Vec<u8> {
        let mut builder = tar::Builder::new(Vec::new());
        for (name, data) in entries {
            let mut header = tar::Header::new_gnu();
            header.set_size(data.len() as u64);
            header.set_mode(0o644);
            header.set_cksum();
            builder.append_data(&mut header, name, *data).unwrap();
        }
        builder.into_inner().unwrap()
    }

    #[test]
    fn sniffs_known_containers() {
        let mut mp4 = vec![0, 0, 0, 0x20];
        mp4.extend_from_slice(b"ftypisom");
        assert_eq!(sniff(&mp4), Sniffed::Video("mp4/quicktime"));
        assert_eq!(sniff(&[0x1a, 0x45, 0xdf, 0xa3, 1]), Sniffed::Video("matroska/webm"));
        assert_eq!(sniff(b"RIFF\0\0\0\0AVI LIST"), Sniffed::Video("avi"));
        assert_eq!(sniff(&tar_bytes(&[("a.png", b"x")])), Sniffed::Tar);
        assert_eq!(sniff(b"PK\x03\x04rest"), Sniffed::Zip);
        assert_eq!(sniff(b""), Sniffed::Unrecognized("empty"));
        assert_eq!(sniff(b"\x89PNG\r\n"), Sniffed::Unrecognized("png image"));
        assert_eq!(sniff(b"hello"), Sniffed::Unrecognized("text"));
        assert_eq!(sniff(&[0xfe, 0xff, 0x00, 0x9c]), Sniffed::Unrecognized("binary data"));
    }

    #[test]
    fn tar_with_frames_and_sparse() {
        let dir = tempfile::tempdir().unwrap();
        let archive = dir.path().join("up.tar");
        std::fs::write(
            &archive,
            tar_bytes(&[
                ("cap/images/a.png", b"x"),
                ("cap/images/b.png", b"x"),
                ("cap/thumb/c.png", b"x"),
                ("cap/sparse/0/cameras.txt", b""),
            ]),
        )
        .unwrap();
        let out = dir.path().join("out");
        unpack(&archive, Sniffed::Tar, &out).unwrap();
        let layout = inspect(&out).unwrap();
        assert_eq!(layout.kind, PayloadKind::FramesWithSparse);
        assert_eq!(layout.frames, Path::new("cap/images"));
        assert_eq!(layout.sparse.as_deref(), Some(Path::new("cap/sparse/0")));
        assert_eq!(layout.frame_count, 2);
    }

    #[test]
    fn zip_with_frames_only() {
        let dir = tempfile::tempdir().unwrap();
        let archive = dir.path().join("up.zip");
        let mut zw = zip::ZipWriter::new(File::create(&archive).unwrap());
        for name in ["f1.JPG", "f2.jpg", "notes.txt"] {
            zw.start_file(name, zip::write::SimpleFileOptions::default()).unwrap();
            zw.write_all(b"x").unwrap();
        }
        zw.finish().unwrap();
        let mut head = vec![0; 4];
        io::Read::read_exact(&mut File::open(&archive).unwrap(), &mut head).unwrap();
        assert_eq!(sniff(&head), Sniffed::Zip);
        let out = dir.path().join("out");
        unpack(&archive, Sniffed::Zip, &out).unwrap();
        let layout = inspect(&out).unwrap();
        assert_eq!(layout.kind, PayloadKind::Frames);
        assert_eq!(layout.frames, Path::new(""));
        assert_eq!(layout.frame_count, 2);
    }

    #[test]
    fn archive_without_images_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let archive = dir.path().join("up.tar");
        std::fs::write(&archive, tar_bytes(&[("readme.txt", b"hi")])).unwrap();
        let out = dir.path().join("out");
        unpack(&archive, Sniffed::Tar, &out).unwrap();
        assert!(matches!(inspect(&out), Err(UnpackError::NoFrames)));
    }

    #[test]
    fn path_traversal_stays_inside() {
        let dir = tempfile::tempdir().unwrap();
        let mut data = tar_bytes(&[("aaaaaaaaaaaaaaaaaaaa.png", b"x")]);
        // Rename the entry in place to escape the destination.
        let name = b"../../escape.png\0\0\0\0";
        data[..name.len()].copy_from_slice(name);
        let mut header = tar::Header::from_byte_slice(&data[..512]).clone();
        header.set_cksum();
        data[..512].copy_from_slice(header.as_bytes());
        let archive = dir.path().join("up.tar");
        std::fs::write(&archive, data).unwrap();
        let out = dir.path().join("a/b");
        let _ = unpack(&archive, Sniffed::Tar, &out);
        assert!(!dir.path().join("escape.png").exists());
    }
}
