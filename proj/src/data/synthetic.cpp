#include "mesoforge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "mesoforge/parallel.hpp"

namespace mesoforge {

void SyntheticSpec::validate() const {
  if (videos < 4 || frames_per_video < 1 || train_videos < 2 ||
      train_videos > videos - 2) {
    throw std::invalid_argument(
        "synthetic: need >= 4 videos, >= 1 frame each and >= 2 videos per side");
  }
  if (image_size < 16) throw std::invalid_argument("synthetic: image_size must be >= 16");
  if (!(blur_sigma_min > 0.0) || !(blur_sigma_max >= blur_sigma_min)) {
    throw std::invalid_argument("synthetic: invalid blur sigma range");
  }
  if (!(region_fraction > 0.0 && region_fraction <= 1.0)) {
    throw std::invalid_argument("synthetic: region_fraction must lie in (0, 1]");
  }
  if (gop < 1) throw std::invalid_argument("synthetic: gop must be >= 1");
}

int synthetic_label(int video) {
  return video % 2 == 0 ? kLabelForged : kLabelReal;
}

std::string synthetic_video_id(int video) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth%04d", video);
  return buf;
}

FrameType synthetic_frame_type(const SyntheticSpec& spec, int frame) {
  if (frame % spec.gop == 0) return FrameType::I;
  return frame % 2 == 1 ? FrameType::P : FrameType::B;
}

namespace {

struct Wave {
  double fy, fx, phase, drift, amp;
  double weight[3];
};

struct VideoStyle {
  double base[3];
  Wave waves[4];
  double noise;
  double sigma;
};

VideoStyle video_style(const SyntheticSpec& spec, int video) {
  Rng rng(stable_hash(synthetic_video_id(video), spec.seed));
  VideoStyle s{};
  for (double& b : s.base) b = rng.uniform(0.3, 0.7);
  for (Wave& w : s.waves) {
    const double freq = rng.uniform(2.0, 12.0);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    w.fy = freq * std::sin(angle);
    w.fx = freq * std::cos(angle);
    w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    w.drift = rng.uniform(-0.3, 0.3);
    w.amp = rng.uniform(0.04, 0.1);
    for (double& c : w.weight) c = rng.uniform(0.5, 1.0);
  }
  s.noise = rng.uniform(0.05, 0.09);
  s.sigma = rng.uniform(spec.blur_sigma_min, spec.blur_sigma_max);
  return s;
}

std::vector<float> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[i + radius] = static_cast<float>(v);
    sum += v;
  }
  for (float& v : k) v = static_cast<float>(v / sum);
  return k;
}

// Separable blur of the square [top, top + side) x [left, left + side),
// reading neighbours from the whole plane with edge replication.
void blur_region(float* plane, int size, int top, int left, int side,
                 const std::vector<float>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  const int r0 = std::max(0, top - radius);
  const int r1 = std::min(size, top + side + radius);
  std::vector<float> rows(static_cast<std::size_t>(r1 - r0) * side);
  for (int y = r0; y < r1; ++y) {
    for (int x = 0; x < side; ++x) {
      float acc = 0.0f;
      for (int k = -radius; k <= radius; ++k) {
        const int xx = std::clamp(left + x + k, 0, size - 1);
        acc += kernel[k + radius] * plane[y * size + xx];
      }
      rows[static_cast<std::size_t>(y - r0) * side + x] = acc;
    }
  }
  for (int y = top; y < top + side; ++y) {
    for (int x = 0; x < side; ++x) {
      float acc = 0.0f;
      for (int k = -radius; k <= radius; ++k) {
        const int yy = std::clamp(y + k, r0, r1 - 1);
        acc += kernel[k + radius] * rows[static_cast<std::size_t>(yy - r0) * side + x];
      }
      plane[y * size + left + x] = acc;
    }
  }
}

}  // namespace

Tensor render_synthetic_frame(const SyntheticSpec& spec, int video, int frame) {
  const VideoStyle style = video_style(spec, video);
  const int size = spec.image_size;
  Rng rng(stable_hash(synthetic_video_id(video) + "/" + std::to_string(frame),
                      spec.seed));
  Tensor img(Shape{1, 3, size, size});
  // sin(a + b) = sin(a) cos(b) + cos(a) sin(b) with a depending on the row
  // and b on the column keeps the texture at O(size) trig calls per wave.
  const double inv = 2.0 * std::numbers::pi / size;
  const std::size_t pixels = static_cast<std::size_t>(size) * size;
  std::vector<double> tex[3];
  for (auto& t : tex) t.assign(pixels, 0.0);
  std::vector<double> sy(size), cy(size), sx(size), cx(size);
  for (const Wave& w : style.waves) {
    for (int i = 0; i < size; ++i) {
      const double a = w.fy * i * inv + w.phase + w.drift * frame;
      const double b = w.fx * i * inv;
      sy[i] = std::sin(a);
      cy[i] = std::cos(a);
      sx[i] = std::sin(b);
      cx[i] = std::cos(b);
    }
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double v = w.amp * (sy[y] * cx[x] + cy[y] * sx[x]);
        for (int c = 0; c < 3; ++c) tex[c][y * size + x] += w.weight[c] * v;
      }
    }
  }
  for (int c = 0; c < 3; ++c) {
    float* plane = img.ptr() + img.offset(0, c, 0, 0);
    for (std::size_t k = 0; k < pixels; ++k) {
      const double v = style.base[c] + tex[c][k] + style.noise * (2.0 * rng.uniform() - 1.0);
      plane[k] = static_cast<float>(v);
    }
  }
  if (synthetic_label(video) == kLabelForged) {
    const int side = std::max(2, static_cast<int>(std::lround(size * spec.region_fraction)));
    const int jitter = size / 16;
    const int centre = (size - side) / 2;
    const int top = std::clamp(centre + static_cast<int>(rng.below(2 * jitter + 1)) - jitter,
                               0, size - side);
    const int left = std::clamp(centre + static_cast<int>(rng.below(2 * jitter + 1)) - jitter,
                                0, size - side);
    const std::vector<float> kernel = gaussian_kernel(style.sigma);
    for (int c = 0; c < 3; ++c) {
      blur_region(img.ptr() + img.offset(0, c, 0, 0), size, top, left, side, kernel);
    }
  }
  for (float& v : img.data()) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

DatasetManifest synthetic_manifest(const SyntheticSpec& spec, int first_video,
                                   int last_video) {
  spec.validate();
  DatasetManifest m;
  for (int v = first_video; v < last_video; ++v) {
    const std::string id = synthetic_video_id(v);
    for (int f = 0; f < spec.frames_per_video; ++f) {
      char name[32];
      std::snprintf(name, sizeof name, "/frame_%03d.png", f);
      m.records.push_back(
          {id + name, synthetic_label(v), id, f, synthetic_frame_type(spec, f)});
    }
  }
  return m;
}

DatasetManifest synthetic_train_manifest(const SyntheticSpec& spec) {
  return synthetic_manifest(spec, 0, spec.train_videos);
}

DatasetManifest synthetic_test_manifest(const SyntheticSpec& spec) {
  return synthetic_manifest(spec, spec.train_videos, spec.videos);
}

ImageLoader synthetic_loader(const SyntheticSpec& spec) {
  return [spec](const ManifestRecord& record) {
    const std::string prefix = "synth";
    if (record.video_id.rfind(prefix, 0) != 0) {
      throw DataError("record " + record.image_path + " is not a synthetic frame");
    }
    const int video = std::stoi(record.video_id.substr(prefix.size()));
    return render_synthetic_frame(spec, video, static_cast<int>(record.frame_index));
  };
}

void write_synthetic_dataset(const SyntheticSpec& spec,
                             const std::filesystem::path& dir) {
  spec.validate();
  std::filesystem::create_directories(dir);
  for (int v = 0; v < spec.videos; ++v) {
    std::filesystem::create_directories(dir / synthetic_video_id(v));
  }
  DatasetManifest train = synthetic_train_manifest(spec);
  DatasetManifest test = synthetic_test_manifest(spec);
  const ImageLoader loader = synthetic_loader(spec);
  for (const DatasetManifest* m : {&train, &test}) {
    parallel_for(m->size(), [&](std::size_t i) {
      const ManifestRecord& r = m->records[i];
      write_png(dir / r.image_path, loader(r));
    });
  }
  write_manifest(train, dir / "train.jsonl");
  write_manifest(test, dir / "test.jsonl");
}

}  // namespace mesoforge
