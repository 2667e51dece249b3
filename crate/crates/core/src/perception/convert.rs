use thiserror::Error;

use super::landmarks::{rgb_view, DetectError};
use crate::codec::{FlatArray, FlatData, ImageError, ImageFrame, NdArrayFrame};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConvertError {
    #[error("bad stride: {0}")]
    BadStride(#[from] ImageError),
}

/// Frame to a `[h, w, 3]` u8 array, dropping row padding.
pub fn image_to_array(img: &ImageFrame) -> Result<NdArrayFrame, ConvertError> {
    img.validate()?;
    let (w, h, stride) = (img.width as usize, img.height as usize, img.stride as usize);
    let mut data = Vec::with_capacity(w * h * 3);
    for row in img.data.chunks_exact(stride.max(1)).take(h) {
        data.extend_from_slice(&row[..3 * w]);
    }
    let array = FlatArray::new(vec![h, w, 3], FlatData::U8(data)).expect("length matches shape");
    Ok(NdArrayFrame { header: img.header.clone(), array })
}

/// Inverse of [`image_to_array`]; the result is tightly packed.
pub fn array_to_image(frame: &NdArrayFrame) -> Result<ImageFrame, DetectError> {
    let (h, w, px) = rgb_view(&frame.array)?;
    Ok(ImageFrame {
        header: frame.header.clone(),
        width: w as u32,
        height: h as u32,
        stride: 3 * w as u32,
        data: px.to_vec(),
    })
}
