#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "mesoforge/data.hpp"

namespace mesoforge {

namespace {

void check_image(const Tensor& image, const char* what) {
  const Shape& s = image.shape();
  check_shape(s.n == 1 && s.c == 3,
              std::string(what) + ": expected an image of shape (1,3,h,w), got " +
                  s.str());
}

cv::Mat read_bgr(const std::filesystem::path& path) {
  cv::Mat mat;
  try {
    mat = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw DataError("cannot decode image " + path.string() + ": " + e.what());
  }
  if (mat.empty()) {
    throw DataError("cannot read or decode image " + path.string());
  }
  return mat;
}

}  // namespace

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w) {
  const Shape& s = image.shape();
  check_shape(out_h >= 1 && out_w >= 1, "resize_bilinear: output size must be positive");
  if (s.h == out_h && s.w == out_w) return image;
  Tensor out(Shape{s.n, s.c, out_h, out_w});
  const double sy = static_cast<double>(s.h) / out_h;
  const double sx = static_cast<double>(s.w) / out_w;
  std::vector<int> x0(out_w), x1(out_w);
  std::vector<float> fx(out_w);
  for (int x = 0; x < out_w; ++x) {
    const double src = std::clamp((x + 0.5) * sx - 0.5, 0.0, s.w - 1.0);
    x0[x] = static_cast<int>(src);
    x1[x] = std::min(x0[x] + 1, s.w - 1);
    fx[x] = static_cast<float>(src - x0[x]);
  }
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < out_h; ++y) {
        const double src = std::clamp((y + 0.5) * sy - 0.5, 0.0, s.h - 1.0);
        const int y0 = static_cast<int>(src);
        const int y1 = std::min(y0 + 1, s.h - 1);
        const float fy = static_cast<float>(src - y0);
        const float* r0 = image.ptr() + image.offset(n, c, y0, 0);
        const float* r1 = image.ptr() + image.offset(n, c, y1, 0);
        float* dst = out.ptr() + out.offset(n, c, y, 0);
        for (int x = 0; x < out_w; ++x) {
          const float top = r0[x0[x]] + fx[x] * (r0[x1[x]] - r0[x0[x]]);
          const float bot = r1[x0[x]] + fx[x] * (r1[x1[x]] - r1[x0[x]]);
          dst[x] = top + fy * (bot - top);
        }
      }
    }
  }
  return out;
}

Tensor decode_image(const std::filesystem::path& path, int size) {
  const cv::Mat bgr = read_bgr(path);
  if (std::min(bgr.rows, bgr.cols) < size) {
    throw DataError("image " + path.string() + " is " + std::to_string(bgr.cols) +
                    "x" + std::to_string(bgr.rows) + ", shorter side must be >= " +
                    std::to_string(size));
  }
  const int depth = bgr.depth();
  const double scale = depth == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
  Tensor rgb(Shape{1, 3, bgr.rows, bgr.cols});
  for (int y = 0; y < bgr.rows; ++y) {
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = depth == CV_16U ? bgr.at<cv::Vec3w>(y, x)[2 - c]
                                         : bgr.at<cv::Vec3b>(y, x)[2 - c];
        rgb.at(0, c, y, x) = static_cast<float>(v * scale);
      }
    }
  }
  return resize_bilinear(rgb, size, size);
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
  check_image(image, "write_png");
  const Shape& s = image.shape();
  cv::Mat bgr(s.h, s.w, CV_8UC3);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(0, c, y, x), 0.0f, 1.0f);
        bgr.at<cv::Vec3b>(y, x)[2 - c] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr);
  } catch (const cv::Exception& e) {
    throw DataError("cannot write image " + path.string() + ": " + e.what());
  }
  if (!ok) throw DataError("cannot write image " + path.string());
}

std::pair<int, int> image_dimensions(const std::filesystem::path& path) {
  const cv::Mat mat = read_bgr(path);
  return {mat.cols, mat.rows};
}

std::string ResolutionHistogram::bin_label(int bin) {
  static const char* labels[kBins] = {"<256", "256-383", "384-511", "512-767",
                                      ">=768"};
  return labels[bin];
}

ResolutionHistogram resolution_histogram(const DatasetManifest& manifest) {
  ResolutionHistogram hist;
  for (const ManifestRecord& r : manifest.records) {
    int shorter = 0;
    try {
      const auto [w, h] = image_dimensions(manifest.resolve(r));
      shorter = std::min(w, h);
    } catch (const DataError&) {
      ++hist.unreadable;
      continue;
    }
    const int bin = shorter < 256 ? 0 : shorter < 384 ? 1 : shorter < 512 ? 2
                  : shorter < 768 ? 3 : 4;
    (r.label == kLabelReal ? hist.real : hist.forged)[bin] += 1;
  }
  return hist;
}

}  // namespace mesoforge
