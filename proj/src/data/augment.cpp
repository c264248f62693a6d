#include <algorithm>
#include <cmath>
#include <numbers>

#include "mesoforge/data.hpp"

namespace mesoforge {

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.zoom_min = 1.0;
  c.zoom_max = 1.0;
  c.rotation_deg = 0.0;
  c.flip_prob = 0.0;
  c.brightness = 0.0;
  c.hue_deg = 0.0;
  return c;
}

bool AugmentConfig::is_identity() const {
  return zoom_min == 1.0 && zoom_max == 1.0 && rotation_deg == 0.0 &&
         flip_prob == 0.0 && brightness == 0.0 && hue_deg == 0.0;
}

void AugmentConfig::validate() const {
  if (!(zoom_min > 0.0) || !(zoom_max >= zoom_min)) {
    throw std::invalid_argument("augment: need 0 < zoom_min <= zoom_max");
  }
  if (!(rotation_deg >= 0.0) || !(brightness >= 0.0) || !(hue_deg >= 0.0)) {
    throw std::invalid_argument("augment: rotation, brightness and hue ranges must be >= 0");
  }
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) {
    throw std::invalid_argument("augment: flip probability must lie in [0, 1]");
  }
}

AugmentDraw draw_augment(const AugmentConfig& config, Rng& rng) {
  // Every draw consumes the generator even for a zero range, so streams stay
  // aligned when only some magnitudes change.
  AugmentDraw d;
  d.flip = rng.uniform() < config.flip_prob;
  d.angle_deg = rng.uniform(-config.rotation_deg, config.rotation_deg);
  d.zoom = rng.uniform(config.zoom_min, config.zoom_max);
  d.brightness = rng.uniform(-config.brightness, config.brightness);
  d.hue_deg = rng.uniform(-config.hue_deg, config.hue_deg);
  if (config.rotation_deg == 0.0) d.angle_deg = 0.0;
  if (config.zoom_min == config.zoom_max) d.zoom = config.zoom_min;
  if (config.brightness == 0.0) d.brightness = 0.0;
  if (config.hue_deg == 0.0) d.hue_deg = 0.0;
  return d;
}

namespace {

void check_image(const Tensor& image, const char* what) {
  const Shape& s = image.shape();
  check_shape(s.n == 1 && s.c == 3,
              std::string(what) + ": expected an image of shape (1,3,h,w), got " +
                  s.str());
}

// out(p) = in(center + m * (p - center)), bilinear, coordinates clamped to
// the border (edge replication).
Tensor resample(const Tensor& image, double m00, double m01, double m10,
                double m11) {
  const Shape& s = image.shape();
  Tensor out(s);
  const double cy = (s.h - 1) / 2.0;
  const double cx = (s.w - 1) / 2.0;
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      const double dy = y - cy;
      const double dx = x - cx;
      const double sy = std::clamp(cy + m00 * dy + m01 * dx, 0.0, s.h - 1.0);
      const double sx = std::clamp(cx + m10 * dy + m11 * dx, 0.0, s.w - 1.0);
      const int y0 = static_cast<int>(sy);
      const int x0 = static_cast<int>(sx);
      const int y1 = std::min(y0 + 1, s.h - 1);
      const int x1 = std::min(x0 + 1, s.w - 1);
      const float fy = static_cast<float>(sy - y0);
      const float fx = static_cast<float>(sx - x0);
      for (int c = 0; c < s.c; ++c) {
        const float a = image.at(0, c, y0, x0);
        const float b = image.at(0, c, y0, x1);
        const float d = image.at(0, c, y1, x0);
        const float e = image.at(0, c, y1, x1);
        const float top = a + fx * (b - a);
        const float bot = d + fx * (e - d);
        out.at(0, c, y, x) = std::clamp(top + fy * (bot - top), 0.0f, 1.0f);
      }
    }
  }
  return out;
}

}  // namespace

Tensor hflip(const Tensor& image) {
  const Shape& s = image.shape();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; ++y) {
        const float* src = image.ptr() + image.offset(n, c, y, 0);
        float* dst = out.ptr() + out.offset(n, c, y, 0);
        for (int x = 0; x < s.w; ++x) dst[x] = src[s.w - 1 - x];
      }
    }
  }
  return out;
}

Tensor rotate(const Tensor& image, double angle_deg) {
  check_image(image, "rotate");
  // Positive angles turn the content counter-clockwise on screen (y down).
  const double t = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(t);
  const double s = std::sin(t);
  return resample(image, c, -s, s, c);
}

Tensor zoom(const Tensor& image, double factor) {
  check_image(image, "zoom");
  if (!(factor > 0.0)) throw std::invalid_argument("zoom: factor must be positive");
  return resample(image, 1.0 / factor, 0.0, 0.0, 1.0 / factor);
}

Tensor adjust_brightness(const Tensor& image, double delta) {
  Tensor out = image;
  const float d = static_cast<float>(delta);
  for (float& v : out.data()) v = std::clamp(v + d, 0.0f, 1.0f);
  return out;
}

Tensor rotate_hue(const Tensor& image, double delta_deg) {
  check_image(image, "rotate_hue");
  const Shape& s = image.shape();
  Tensor out(s);
  const std::size_t plane = s.plane();
  const float* r_in = image.ptr();
  const float* g_in = r_in + plane;
  const float* b_in = g_in + plane;
  float* r_out = out.ptr();
  float* g_out = r_out + plane;
  float* b_out = g_out + plane;
  const double shift = delta_deg / 60.0;
  for (std::size_t i = 0; i < plane; ++i) {
    const double r = std::clamp(r_in[i], 0.0f, 1.0f);
    const double g = std::clamp(g_in[i], 0.0f, 1.0f);
    const double b = std::clamp(b_in[i], 0.0f, 1.0f);
    const double v = std::max({r, g, b});
    const double chroma = v - std::min({r, g, b});
    if (chroma <= 0.0) {
      r_out[i] = static_cast<float>(r);
      g_out[i] = static_cast<float>(g);
      b_out[i] = static_cast<float>(b);
      continue;
    }
    // Hue in sextants [0, 6).
    double h;
    if (v == r) {
      h = (g - b) / chroma;
    } else if (v == g) {
      h = 2.0 + (b - r) / chroma;
    } else {
      h = 4.0 + (r - g) / chroma;
    }
    h = std::fmod(h + shift, 6.0);
    if (h < 0.0) h += 6.0;
    const double m = v - chroma;
    const double x = chroma * (1.0 - std::fabs(std::fmod(h, 2.0) - 1.0));
    double rr = 0, gg = 0, bb = 0;
    switch (static_cast<int>(h)) {
      case 0: rr = chroma; gg = x; break;
      case 1: rr = x; gg = chroma; break;
      case 2: gg = chroma; bb = x; break;
      case 3: gg = x; bb = chroma; break;
      case 4: rr = x; bb = chroma; break;
      default: rr = chroma; bb = x; break;
    }
    r_out[i] = static_cast<float>(std::clamp(rr + m, 0.0, 1.0));
    g_out[i] = static_cast<float>(std::clamp(gg + m, 0.0, 1.0));
    b_out[i] = static_cast<float>(std::clamp(bb + m, 0.0, 1.0));
  }
  return out;
}

Tensor apply_augment(const Tensor& image, const AugmentDraw& draw) {
  check_image(image, "augment");
  Tensor out = image;
  if (draw.flip) out = hflip(out);
  if (draw.angle_deg != 0.0) out = rotate(out, draw.angle_deg);
  if (draw.zoom != 1.0) out = zoom(out, draw.zoom);
  if (draw.brightness != 0.0) out = adjust_brightness(out, draw.brightness);
  if (draw.hue_deg != 0.0) out = rotate_hue(out, draw.hue_deg);
  return out;
}

Tensor augment(const Tensor& image, const AugmentConfig& config, Rng& rng) {
  return apply_augment(image, draw_augment(config, rng));
}

}  // namespace mesoforge
