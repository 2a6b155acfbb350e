use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Reads a PPM (P6) or PNG file as `[H, W, 3]` with channel values in `[0, 255]`.
pub fn load_image<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let decode = |msg: String| Error::Decode { path: path.to_path_buf(), msg };
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|e| decode(e.to_string()))?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|b| T::of(f64::from(b))).collect();
    Tensor::new(vec![h as usize, w as usize, 3], data)
}

/// Writes `[H, W, 3]` values in `[0, 255]` (rounded, clamped) as binary PPM,
/// or PNG when the extension is `.png`.
pub fn save_image<T: Scalar>(path: &Path, image: &Tensor<T>) -> Result<()> {
    let &[h, w, 3] = image.shape() else {
        return Err(Error::Shape(format!("image must be [H,W,3], got {:?}", image.shape())));
    };
    let bytes: Vec<u8> = image.data().iter().map(|v| v.to_f64_lossy().round().clamp(0.0, 255.0) as u8).collect();
    let encode = |e: image::ImageError| Error::Decode { path: path.to_path_buf(), msg: e.to_string() };
    let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        let img = RgbImage::from_raw(w as u32, h as u32, bytes).expect("buffer sized from shape");
        img.save_with_format(path, image::ImageFormat::Png).map_err(encode)
    } else {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        PnmEncoder::new(BufWriter::new(file))
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(&bytes, w as u32, h as u32, ExtendedColorType::Rgb8)
            .map_err(encode)
    }
}
