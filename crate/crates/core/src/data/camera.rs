use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Pinhole camera in pixels, plus the camera-space depth of the root joint in millimeters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_w: f64,
    pub image_h: f64,
    pub root_depth: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            fx: 1145.0,
            fy: 1145.0,
            cx: 500.0,
            cy: 500.0,
            image_w: 1000.0,
            image_h: 1000.0,
            root_depth: 5000.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.image_w,
            self.image_h,
            self.root_depth,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("camera values must be finite"));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(invalid!("focal lengths must be positive"));
        }
        if self.image_w <= 0.0 || self.image_h <= 0.0 {
            return Err(invalid!("image size must be positive"));
        }
        if self.root_depth <= 0.0 {
            return Err(invalid!("root depth must be positive, got {}", self.root_depth));
        }
        Ok(())
    }

    /// Camera-space point (mm) to pixel coordinates.
    pub fn project(&self, p: [f64; 3]) -> Result<[f64; 2]> {
        if p[2] <= 0.0 {
            return Err(invalid!("point at depth {} is not in front of the camera", p[2]));
        }
        Ok([self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy])
    }

    /// Pixel plus camera-space depth back to a camera-space point.
    pub fn back_project(&self, uv: [f64; 2], depth: f64) -> Result<[f64; 3]> {
        if depth <= 0.0 {
            return Err(invalid!("depth {depth} is behind the camera"));
        }
        Ok([
            (uv[0] - self.cx) * depth / self.fx,
            (uv[1] - self.cy) * depth / self.fy,
            depth,
        ])
    }
}
