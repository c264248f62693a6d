#include <algorithm>
#include <array>
#include <sstream>
#include <tuple>

#include "mesoforge/model.hpp"

namespace mesoforge {

ParamCounts count_params(const ModelGraph& model) {
  return {model.params().trainable_count(),
          model.params().non_trainable_count()};
}

std::vector<LayerParamCount> param_breakdown(const ModelGraph& model) {
  std::vector<LayerParamCount> rows;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const Layer& layer = model.layer(i);
    LayerParamCount row{layer.name(), layer.kind(), 0, 0};
    for (std::size_t slot : layer.param_slots()) {
      const Param& p = model.params()[slot];
      auto& bucket = p.trainable ? row.trainable : row.non_trainable;
      bucket += static_cast<std::int64_t>(p.value.size());
    }
    if (row.trainable + row.non_trainable > 0) rows.push_back(row);
  }
  return rows;
}

namespace {

std::int64_t conv_params(std::int64_t in, std::int64_t out, std::int64_t k) {
  return in * out * k * k + out;
}

}  // namespace

std::int64_t inception_trainable_params(int in_channels,
                                        const InceptionParams& p) {
  const std::int64_t in = in_channels;
  return conv_params(in, p.a, 1) +
         conv_params(in, p.b, 1) + conv_params(p.b, p.b, 3) +
         conv_params(in, p.c, 1) + conv_params(p.c, p.c, 3) +
         conv_params(in, p.d, 1) + conv_params(p.d, p.d, 3);
}

std::int64_t mesoinception4_trainable_params(const InceptionParams& first,
                                             const InceptionParams& second,
                                             const ModelOptions& options) {
  const std::int64_t c1 = first.out_channels();
  const std::int64_t c2 = second.out_channels();
  const std::int64_t side = options.input_size / (8 * options.final_pool);
  const std::int64_t flat = 16 * side * side;
  return inception_trainable_params(3, first) + 2 * c1 +
         inception_trainable_params(static_cast<int>(c1), second) + 2 * c2 +
         conv_params(c2, 16, 5) + 2 * 16 + conv_params(16, 16, 5) + 2 * 16 +
         (flat * 16 + 16) + (16 + 1);
}

ReconciliationReport reconcile_mesoinception4(const InceptionParams& first,
                                              const InceptionParams& second) {
  ReconciliationReport report;
  report.first = first;
  report.second = second;
  report.trainable = mesoinception4_trainable_params(first, second);

  const std::array<int, 8> base{first.a,  first.b,  first.c,  first.d,
                                second.a, second.b, second.c, second.d};
  std::array<int, 8> v{};
  // Enumerate every width in {w - 1, w, w + 1}, widths staying >= 1.
  const int combos = 6561;  // 3^8
  for (int code = 0; code < combos; ++code) {
    int rest = code;
    int distance = 0;
    bool valid = true;
    for (std::size_t k = 0; k < base.size(); ++k) {
      const int step = rest % 3 - 1;
      rest /= 3;
      v[k] = base[k] + step;
      distance += step != 0;
      valid = valid && v[k] >= 1;
    }
    if (!valid) continue;
    const InceptionParams f{v[0], v[1], v[2], v[3]};
    const InceptionParams s{v[4], v[5], v[6], v[7]};
    const std::int64_t count = mesoinception4_trainable_params(f, s);
    if (count == report.published) {
      report.exact_matches.push_back({f, s, count, distance});
    }
  }
  auto key = [](const InceptionVariant& x) {
    return std::tuple(x.distance, x.first.a, x.first.b, x.first.c, x.first.d,
                      x.second.a, x.second.b, x.second.c, x.second.d);
  };
  std::ranges::sort(report.exact_matches,
                    [&](const auto& l, const auto& r) { return key(l) < key(r); });
  return report;
}

std::string ReconciliationReport::render() const {
  auto fmt = [](const InceptionParams& p) {
    return "(" + std::to_string(p.a) + "," + std::to_string(p.b) + "," +
           std::to_string(p.c) + "," + std::to_string(p.d) + ")";
  };
  std::ostringstream out;
  out << "MesoInception-4 parameter reconciliation\n";
  out << "  module widths (a,b,c,d): layer 1 " << fmt(first) << ", layer 2 "
      << fmt(second) << "\n";
  out << "  trainable parameters:    " << trainable << "\n";
  out << "  published total:         " << published << "\n";
  out << "  difference:              " << (delta() >= 0 ? "+" : "") << delta()
      << (matches_published() ? "  (match)" : "  (MISMATCH)") << "\n";
  if (exact_matches.empty()) {
    out << "  no variant within +-1 per width reproduces the published total\n";
  } else {
    out << "  variants within +-1 per width reproducing " << published
        << " exactly:\n";
    for (const InceptionVariant& v : exact_matches) {
      out << "    layer 1 " << fmt(v.first) << ", layer 2 " << fmt(v.second)
          << "  (" << v.distance << " width(s) changed)\n";
    }
  }
  return out.str();
}

}  // namespace mesoforge
