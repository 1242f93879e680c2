//! Image-set file format:
//! `{"width": W, "height": H, "roi": [x0, y0, x1, y1], "shots": [[0|1, ...], ...]}`
//! with each shot row-major and the ROI half-open.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::correlations::{ImageSet, LatticeImage, Roi};
use crate::error::{format_err, Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageSetFile {
    width: usize,
    height: usize,
    roi: [usize; 4],
    shots: Vec<Vec<u8>>,
}

impl From<&ImageSet> for ImageSetFile {
    fn from(set: &ImageSet) -> Self {
        let r = set.roi();
        Self {
            width: set.width(),
            height: set.height(),
            roi: [r.x0, r.y0, r.x1, r.y1],
            shots: set.images().iter().map(|im| im.occupancy().to_vec()).collect(),
        }
    }
}

impl TryFrom<ImageSetFile> for ImageSet {
    type Error = Error;

    fn try_from(f: ImageSetFile) -> Result<Self> {
        let images = f
            .shots
            .into_iter()
            .enumerate()
            .map(|(i, occ)| {
                LatticeImage::new(f.width, f.height, occ).map_err(|e| format_err(format!("shot {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let [x0, y0, x1, y1] = f.roi;
        ImageSet::new(images, Roi { x0, y0, x1, y1 }).map_err(|e| format_err(e.to_string()))
    }
}

pub fn image_set_to_json(set: &ImageSet) -> String {
    serde_json::to_string(&ImageSetFile::from(set)).expect("image sets always serialize")
}

pub fn image_set_from_json(text: &str) -> Result<ImageSet> {
    let file: ImageSetFile =
        serde_json::from_str(text).map_err(|e| format_err(format!("image set: {e}")))?;
    file.try_into()
}

pub fn write_image_set(mut w: impl Write, set: &ImageSet) -> Result<()> {
    w.write_all(image_set_to_json(set).as_bytes())?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_image_set(mut r: impl Read) -> Result<ImageSet> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    image_set_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut a = LatticeImage::filled(3, 2);
        a.set(2, 1, false);
        let set = ImageSet::new(vec![a, LatticeImage::filled(3, 2)], Roi { x0: 1, y0: 0, x1: 3, y1: 2 }).unwrap();
        let text = image_set_to_json(&set);
        assert_eq!(text, r#"{"width":3,"height":2,"roi":[1,0,3,2],"shots":[[1,1,1,1,1,0],[1,1,1,1,1,1]]}"#);
        assert_eq!(image_set_from_json(&text).unwrap(), set);
        let mut buf = Vec::new();
        write_image_set(&mut buf, &set).unwrap();
        assert_eq!(read_image_set(buf.as_slice()).unwrap(), set);
    }

    #[test]
    fn malformed_files_are_rejected() {
        for bad in [
            r#"{"width":2,"height":1,"roi":[0,0,2,1],"shots":[[1,2]]}"#,
            r#"{"width":2,"height":1,"roi":[0,0,3,1],"shots":[[1,1]]}"#,
            r#"{"width":2,"height":1,"roi":[0,0,2,1],"shots":[[1]]}"#,
            r#"{"width":2,"height":1,"roi":[0,0,2,1],"shots":[]}"#,
            r#"{"width":2,"height":1,"roi":[0,0,2,1],"shots":[[1,1]],"extra":1}"#,
            "not json",
        ] {
            assert!(matches!(image_set_from_json(bad), Err(Error::Format(_))), "{bad}");
        }
    }
}
