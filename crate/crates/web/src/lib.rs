//! WebAssembly exports for the static demo page in `www/`.

pub mod demo;

use wasm_bindgen::prelude::*;

/// RGBA pixels ready for `ImageData`.
#[wasm_bindgen]
pub struct Bitmap(demo::Rgba);

#[wasm_bindgen]
impl Bitmap {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.0.width as u32
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.0.height as u32
    }

    pub fn pixels(&self) -> Vec<u8> {
        self.0.pixels.clone()
    }
}

#[wasm_bindgen]
pub struct Decomposed(demo::FaceDecomposition);

#[wasm_bindgen]
impl Decomposed {
    pub fn input(&self) -> Bitmap {
        Bitmap(self.0.input.clone())
    }

    pub fn albedo(&self) -> Bitmap {
        Bitmap(self.0.albedo.clone())
    }

    pub fn reflectance(&self) -> Bitmap {
        Bitmap(self.0.reflectance.clone())
    }

    pub fn shading(&self) -> Bitmap {
        Bitmap(self.0.shading.clone())
    }

    #[wasm_bindgen(getter)]
    pub fn correlation(&self) -> f64 {
        self.0.correlation
    }

    #[wasm_bindgen(getter)]
    pub fn v_dc(&self) -> f64 {
        self.0.v_dc
    }
}

#[wasm_bindgen]
pub fn decompose_face(seed: u32, mask: bool, size: u32) -> Result<Decomposed, JsError> {
    Ok(Decomposed(demo::decompose_face(
        seed.into(),
        mask,
        size as usize,
    )?))
}

#[wasm_bindgen]
pub struct TopHistogram(demo::TopView);

#[wasm_bindgen]
impl TopHistogram {
    #[wasm_bindgen(getter)]
    pub fn plane(&self) -> String {
        self.0.plane.as_str().to_string()
    }

    #[wasm_bindgen(getter)]
    pub fn rows(&self) -> u32 {
        self.0.rows as u32
    }

    #[wasm_bindgen(getter)]
    pub fn cols(&self) -> u32 {
        self.0.cols as u32
    }

    pub fn values(&self) -> Vec<f64> {
        self.0.values.clone()
    }

    pub fn heatmap(&self) -> Bitmap {
        Bitmap(self.0.heatmap.clone())
    }
}

#[wasm_bindgen]
pub fn top_histogram(
    seed: u32,
    mask: bool,
    plane: &str,
    intrinsic: bool,
) -> Result<TopHistogram, JsError> {
    Ok(TopHistogram(demo::top_histogram(
        seed.into(),
        mask,
        plane,
        intrinsic,
    )?))
}

#[wasm_bindgen]
pub struct Roc(demo::RocSummary);

#[wasm_bindgen]
impl Roc {
    #[wasm_bindgen(getter)]
    pub fn bona_fide(&self) -> u32 {
        self.0.bona_fide as u32
    }

    #[wasm_bindgen(getter)]
    pub fn attack(&self) -> u32 {
        self.0.attack as u32
    }

    #[wasm_bindgen(getter)]
    pub fn eer(&self) -> f64 {
        self.0.eer
    }

    #[wasm_bindgen(getter)]
    pub fn threshold(&self) -> f64 {
        self.0.threshold
    }

    #[wasm_bindgen(getter)]
    pub fn auc(&self) -> f64 {
        self.0.auc
    }

    pub fn far(&self) -> Vec<f64> {
        self.0.far.clone()
    }

    pub fn frr(&self) -> Vec<f64> {
        self.0.frr.clone()
    }
}

#[wasm_bindgen]
pub fn roc_analysis(text: &str) -> Result<Roc, JsError> {
    Ok(Roc(demo::roc_from_text(text)?))
}
