//! Dataset download. Files with a published checksum are verified by MD5;
//! the rest are verified by parsing them.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use bosonkernel::data;
use md5::{Digest, Md5};

use crate::config::DatasetKind;
use crate::error::{CliError, CliResult, ErrorKind, StageExt};

#[derive(Clone, Debug)]
pub struct Remote {
    pub file: &'static str,
    pub url: String,
    pub md5: Option<&'static str>,
}

const UCI: &str = "https://archive.ics.uci.edu/ml/machine-learning-databases";

pub fn remotes(kind: DatasetKind) -> Vec<Remote> {
    match kind {
        DatasetKind::Ionosphere => vec![Remote {
            file: "ionosphere.data",
            url: format!("{UCI}/ionosphere/ionosphere.data"),
            md5: None,
        }],
        DatasetKind::Spambase => vec![Remote {
            file: "spambase.data",
            url: format!("{UCI}/spambase/spambase.data"),
            md5: None,
        }],
        DatasetKind::Mnist => idx_set(
            "https://ossci-datasets.s3.amazonaws.com/mnist/",
            [
                "f68b3c2dcbeaaa9fbdd348bbdeb94873",
                "d53e105ee54ea40749a09fcbcd1e9432",
                "9fb629c4189551a2d022fa330f9573f3",
                "ec29112dd5afa0611ce80d1b7f02629c",
            ],
        ),
        DatasetKind::FashionMnist => idx_set(
            "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
            [
                "8d4fb7e6c68d591d4c3dfef9ec88bf0d",
                "25c81989df183df01b3e8a0aad5dffbe",
                "bef4ecab320f06d8554ea6380940ec79",
                "bb300cfdad3c16e7a12a480ee83cd310",
            ],
        ),
    }
}

fn idx_set(base: &str, md5: [&'static str; 4]) -> Vec<Remote> {
    const FILES: [&str; 4] =
        ["train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz", "t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz"];
    FILES
        .iter()
        .zip(md5)
        .map(|(&file, md5)| Remote { file, url: format!("{base}{file}"), md5: Some(md5) })
        .collect()
}

pub fn md5_hex(bytes: &[u8]) -> String {
    Md5::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Checks a downloaded file against its checksum, or parses it when no
/// checksum is published.
pub fn verify(kind: DatasetKind, remote: &Remote, path: &Path) -> CliResult<()> {
    match remote.md5 {
        Some(expected) => {
            let found = md5_hex(&fs::read(path).stage("fetch", ErrorKind::Data)?);
            if found != expected {
                return Err(CliError::new(
                    ErrorKind::Data,
                    "fetch",
                    format!("{}: md5 {found} != {expected}", path.display()),
                ));
            }
            Ok(())
        }
        None => {
            let format = match kind {
                DatasetKind::Spambase => &data::SPAMBASE,
                _ => &data::IONOSPHERE,
            };
            data::load_csv(path, format).stage("fetch", ErrorKind::Data).map(|_| ())
        }
    }
}

fn download(url: &str) -> CliResult<Vec<u8>> {
    let resp = ureq::get(url).call().map_err(|e| CliError::new(ErrorKind::Data, "fetch", format!("{url}: {e}")))?;
    let mut body = Vec::new();
    resp.into_reader().read_to_end(&mut body).stage("fetch", ErrorKind::Data)?;
    Ok(body)
}

/// Downloads every file of `kind` into `dest`, skipping files that are
/// already present and verify. Returns the local paths.
pub fn fetch(kind: DatasetKind, dest: &Path) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dest).stage("fetch", ErrorKind::Data)?;
    let mut out = Vec::new();
    for remote in remotes(kind) {
        let path = dest.join(remote.file);
        if path.exists() && verify(kind, &remote, &path).is_ok() {
            out.push(path);
            continue;
        }
        let tmp = dest.join(format!("{}.part", remote.file));
        fs::write(&tmp, download(&remote.url)?).stage("fetch", ErrorKind::Data)?;
        if let Err(e) = verify(kind, &remote, &tmp) {
            let _ = fs::remove_file(&tmp);
            return Err(e);
        }
        fs::rename(&tmp, &path).stage("fetch", ErrorKind::Data)?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn md5_known_vector() {
        assert_eq!(md5_hex(b""), "d41d8cd98f00b204e9800998ecf8427e");
        assert_eq!(md5_hex(b"abc"), "900150983cd24fb0d6963f7d28e17f72");
    }

    #[test]
    fn every_dataset_has_remotes() {
        assert_eq!(remotes(DatasetKind::Mnist).len(), 4);
        assert!(remotes(DatasetKind::FashionMnist).iter().all(|r| r.md5.is_some() && r.url.ends_with(r.file)));
        assert!(remotes(DatasetKind::Ionosphere)[0].url.starts_with(UCI));
    }

    #[test]
    fn checksum_mismatch_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f");
        fs::write(&p, b"abc").unwrap();
        let ok = Remote { file: "f", url: String::new(), md5: Some("900150983cd24fb0d6963f7d28e17f72") };
        verify(DatasetKind::Mnist, &ok, &p).unwrap();
        let bad = Remote { md5: Some("00"), ..ok.clone() };
        assert_eq!(verify(DatasetKind::Mnist, &bad, &p).unwrap_err().kind, ErrorKind::Data);
        let csv = Remote { md5: None, ..ok };
        assert!(verify(DatasetKind::Ionosphere, &csv, &p).is_err());
    }
}
