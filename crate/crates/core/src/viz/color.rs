pub type Rgb = (u8, u8, u8);

/// A piecewise-linear colormap over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorMap {
    stops: Vec<(f64, Rgb)>,
}

pub const LIGHT_PINK: Rgb = (255, 228, 225);
pub const DEEP_RED: Rgb = (139, 0, 0);
pub const NEAR_BLUE: Rgb = (5, 48, 97);
pub const WHITE: Rgb = (255, 255, 255);
pub const FAR_RED: Rgb = (103, 0, 31);

impl ColorMap {
    /// Stops must start at 0, end at 1 and increase strictly.
    pub fn new(stops: Vec<(f64, Rgb)>) -> Option<Self> {
        let ok = stops.len() >= 2
            && stops[0].0 == 0.0
            && stops[stops.len() - 1].0 == 1.0
            && stops.windows(2).all(|w| w[0].0 < w[1].0);
        ok.then_some(ColorMap { stops })
    }

    pub fn red_scale() -> Self {
        ColorMap { stops: vec![(0.0, LIGHT_PINK), (1.0, DEEP_RED)] }
    }

    /// Blue (near) → white → red (far).
    pub fn diverging() -> Self {
        ColorMap { stops: vec![(0.0, NEAR_BLUE), (0.5, WHITE), (1.0, FAR_RED)] }
    }

    /// Channels are interpolated linearly and rounded half-to-even; `v` is
    /// clamped to `[0, 1]` (NaN reads as 0).
    pub fn color(&self, v: f64) -> Rgb {
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        let k = self.stops.windows(2).position(|w| v <= w[1].0).unwrap_or(self.stops.len() - 2);
        let ((x0, c0), (x1, c1)) = (self.stops[k], self.stops[k + 1]);
        if v == x0 {
            return c0;
        }
        if v == x1 {
            return c1;
        }
        let t = (v - x0) / (x1 - x0);
        let mix = |a: u8, b: u8| (f64::from(a) + (f64::from(b) - f64::from(a)) * t).round_ties_even() as u8;
        (mix(c0.0, c1.0), mix(c0.1, c1.1), mix(c0.2, c1.2))
    }
}

pub fn red_scale(v: f64) -> Rgb {
    ColorMap::red_scale().color(v)
}

pub fn hex(c: Rgb) -> String {
    format!("#{:02x}{:02x}{:02x}", c.0, c.1, c.2)
}
