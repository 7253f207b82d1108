//! Rasterizer for the two envs. The camera follows the agent, so the visible
//! floor is a single color read off the gradient at the agent's position:
//! blue (0,0,255) at x=-15 through orange (255,128,0) at x=+15.

use crate::types::{Image, IMAGE_HEIGHT, IMAGE_WIDTH};

/// First image row that belongs to the ground strip in the cart view.
pub const GROUND_ROW: usize = 44;

const POS_BOUND: f64 = 15.0;
const BAR_LEN: usize = 10;

/// Fraction of the way from x=-15 to x=+15.
fn span_fraction(x: f64) -> f64 {
    ((x + POS_BOUND) / (2.0 * POS_BOUND)).clamp(0.0, 1.0)
}

/// Blue-to-orange gradient color at horizontal fraction `u`.
fn floor_color(u: f64) -> [u8; 3] {
    [
        (255.0 * u).round() as u8,
        (128.0 * u).round() as u8,
        (255.0 * (1.0 - u)).round() as u8,
    ]
}

pub fn render_point_room(x: f64, y: f64) -> Image {
    let u = span_fraction(x);
    let mut color = floor_color(u);
    let green = 128.0 * u + 64.0 * (y / POS_BOUND);
    color[1] = green.clamp(0.0, 255.0).round() as u8;
    let mut img = Image::solid(color[0], color[1], color[2]);

    // 4x4 white agent square; y=+15 maps to the top row.
    let col = (u * (IMAGE_WIDTH - 4) as f64).round() as usize;
    let row = (((POS_BOUND - y) / (2.0 * POS_BOUND)).clamp(0.0, 1.0)
        * (IMAGE_HEIGHT - 4) as f64)
        .round() as usize;
    for r in row..row + 4 {
        for c in col..col + 4 {
            img.set(r, c, [255, 255, 255]);
        }
    }
    img
}

pub fn render_tip_cart(x: f64, theta: f64) -> Image {
    let u = span_fraction(x);
    let ground = floor_color(u);
    let mut img = Image::black();
    for r in GROUND_ROW..IMAGE_HEIGHT {
        for c in 0..IMAGE_WIDTH {
            img.set(r, c, ground);
        }
    }

    // 10-pixel white bar pivoting on the ground line at the view center.
    // Row offset -cos θ puts the bar above the line while upright and below
    // it once |θ| passes π/2.
    let pivot_col = IMAGE_WIDTH as f64 / 2.0;
    for d in 1..=BAR_LEN {
        let d = d as f64;
        let c = (pivot_col + d * theta.sin()).round();
        let r = (GROUND_ROW as f64 - d * theta.cos()).round();
        let c = c.clamp(0.0, (IMAGE_WIDTH - 1) as f64) as usize;
        let r = r.clamp(0.0, (IMAGE_HEIGHT - 1) as f64) as usize;
        img.set(r, c, [255, 255, 255]);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Channel means over pixels that are not part of the white agent sprite.
    fn background_means(img: &Image) -> [f64; 3] {
        let mut sums = [0.0_f64; 3];
        let mut n = 0.0;
        for r in 0..IMAGE_HEIGHT {
            for c in 0..IMAGE_WIDTH {
                let p = img.pixel(r, c);
                if p == [255, 255, 255] {
                    continue;
                }
                for (s, v) in sums.iter_mut().zip(p) {
                    *s += v as f64;
                }
                n += 1.0;
            }
        }
        sums.map(|s| s / n)
    }

    #[test]
    fn far_left_room_reads_blue() {
        let img = render_point_room(-15.0, 0.0);
        let [red, _, blue] = background_means(&img);
        assert!(blue > red, "blue {blue} vs red {red}");
        assert_eq!(img.pixel(0, 63), [0, 0, 255]);
    }

    #[test]
    fn far_right_room_reads_orange() {
        let img = render_point_room(15.0, 0.0);
        let [red, _, blue] = background_means(&img);
        assert!(red > blue, "red {red} vs blue {blue}");
        assert_eq!(img.pixel(0, 0), [255, 128, 0]);
    }

    #[test]
    fn vertical_position_moves_the_green_channel() {
        let g_top = background_means(&render_point_room(0.0, 15.0))[1];
        let g_mid = background_means(&render_point_room(0.0, 0.0))[1];
        let g_bot = background_means(&render_point_room(0.0, -15.0))[1];
        assert!(g_top > g_mid && g_mid > g_bot);
    }

    #[test]
    fn agent_square_tracks_position() {
        let img = render_point_room(-15.0, 15.0);
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(img.pixel(r, c), [255, 255, 255]);
            }
        }
        assert_ne!(img.pixel(0, 4), [255, 255, 255]);
    }

    #[test]
    fn cart_ground_strip_follows_cart_position() {
        let left = render_tip_cart(-15.0, 0.0);
        assert_eq!(left.pixel(GROUND_ROW, 0), [0, 0, 255]);
        assert_eq!(left.pixel(0, 0), [0, 0, 0]);

        let right = render_tip_cart(15.0, 0.0);
        assert_eq!(right.pixel(IMAGE_HEIGHT - 1, IMAGE_WIDTH - 1), [255, 128, 0]);
    }

    #[test]
    fn upright_bar_sits_above_the_ground_line() {
        let img = render_tip_cart(0.0, 0.0);
        let mut white_rows = Vec::new();
        for r in 0..IMAGE_HEIGHT {
            for c in 0..IMAGE_WIDTH {
                if img.pixel(r, c) == [255, 255, 255] {
                    white_rows.push(r);
                }
            }
        }
        assert_eq!(white_rows.len(), BAR_LEN);
        assert!(white_rows.iter().all(|&r| r < GROUND_ROW));
    }

    #[test]
    fn flipped_bar_sits_below_the_ground_line() {
        let img = render_tip_cart(0.0, 3.0);
        let mut saw_white = false;
        for r in 0..IMAGE_HEIGHT {
            for c in 0..IMAGE_WIDTH {
                if img.pixel(r, c) == [255, 255, 255] {
                    assert!(r > GROUND_ROW, "white pixel above ground at row {r}");
                    saw_white = true;
                }
            }
        }
        assert!(saw_white);
    }

    #[test]
    fn rendering_is_deterministic() {
        let a = render_point_room(3.25, -7.5);
        let b = render_point_room(3.25, -7.5);
        assert_eq!(a.data(), b.data());
        let a = render_tip_cart(-2.0, 1.2);
        let b = render_tip_cart(-2.0, 1.2);
        assert_eq!(a.data(), b.data());
    }
}
