#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mesoforge/checkpoint.hpp"
#include "mesoforge/model.hpp"
#include "oracles.hpp"
#include "suites.hpp"

using namespace mesoforge;
namespace fs = std::filesystem;
namespace o = oracle;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mesoforge_test_models";
  fs::create_directories(dir);
  return dir / name;
}

ModelGraph small_model(Arch arch, std::uint64_t seed) {
  ModelOptions o;
  o.input_size = 32;
  o.final_pool = 4;
  Rng rng(seed);
  return build_model(arch, rng, o);
}

}  // namespace

TEST_CASE("Meso-4 has 27,977 trainable parameters with the documented breakdown") {
  Rng rng(0);
  const ModelGraph m = build_meso4(rng);
  CHECK(count_params(m).trainable == 27977);
  CHECK(count_params(m).trainable == kMeso4PublishedTrainable);
  const std::vector<std::int64_t> expected{224, 16, 1608, 16, 3216, 32, 6416, 32, 16400, 17};
  const std::vector<LayerParamCount> rows = param_breakdown(m);
  std::vector<std::int64_t> trainable;
  std::int64_t sum = 0;
  std::int64_t non_trainable = 0;
  for (const LayerParamCount& r : rows) {
    if (r.trainable > 0) trainable.push_back(r.trainable);
    sum += r.trainable;
    non_trainable += r.non_trainable;
  }
  CHECK(trainable == expected);
  CHECK(sum == 27977);
  CHECK(non_trainable == count_params(m).non_trainable);
  CHECK(count_params(m).non_trainable == 2 * (8 + 8 + 16 + 16));
}

TEST_CASE("MesoInception-4 counts and reconciliation") {
  CHECK(inception_trainable_params(3, kInception1) == 346);
  CHECK(inception_trainable_params(10, kInception2) == 455);
  Rng rng(0);
  const ModelGraph m = build_mesoinception4(rng);
  CHECK(count_params(m).trainable == 28156);
  CHECK(mesoinception4_trainable_params(kInception1, kInception2) == 28156);

  const ReconciliationReport rep = reconcile_mesoinception4();
  CHECK(rep.trainable == 28156);
  CHECK(rep.delta() == 28156 - 28615);
  CHECK_FALSE(rep.matches_published());
  CHECK(rep.render().find("MISMATCH") != std::string::npos);
  REQUIRE_FALSE(rep.exact_matches.empty());
  for (const InceptionVariant& v : rep.exact_matches) {
    CHECK(mesoinception4_trainable_params(v.first, v.second) == 28615);
  }
  CHECK(rep.exact_matches.front().distance == 1);
  // The variant shipped by the reference implementation is among the matches.
  bool reference = false;
  for (const InceptionVariant& v : rep.exact_matches) {
    reference |= v.first == InceptionParams{1, 4, 4, 2} && v.second == InceptionParams{2, 4, 4, 2};
  }
  CHECK(reference);

  ModelOptions alt;
  alt.inception1 = {1, 4, 4, 2};
  alt.inception2 = {2, 4, 4, 2};
  Rng rng2(0);
  CHECK(count_params(build_mesoinception4(rng2, alt)).trainable == 28615);
}

TEST_CASE("forward produces one score in (0, 1) per item") {
  for (Arch arch : {Arch::Meso4, Arch::MesoInception4}) {
    Rng rng(1);
    const ModelGraph m = build_model(arch, rng);
    const std::vector<float> s = m.predict(Tensor(m.input_shape(1)));
    REQUIRE(s.size() == 1);
    CHECK(std::isfinite(s[0]));
    CHECK(s[0] > 0.0f);
    CHECK(s[0] < 1.0f);
  }
}

TEST_CASE("scores stay inside (0, 1) for extreme inputs") {
  ModelGraph m = small_model(Arch::Meso4, 2);
  // Blow up the head so the sigmoid saturates.
  const std::size_t w = m.params().index_of("dense2.weight");
  for (float& v : m.params().values(w)) v = 1e4f;
  Rng rng(3);
  const Tensor x = o::random_tensor(m.input_shape(4), rng, -50.0, 50.0);
  for (float s : m.predict(x)) {
    CHECK(s > 0.0f);
    CHECK(s < 1.0f);
  }
}

TEST_CASE("zero final dense layer gives exactly 0.5") {
  ModelGraph m = small_model(Arch::MesoInception4, 4);
  for (const char* name : {"dense2.weight", "dense2.bias"}) {
    for (float& v : m.params().values(m.params().index_of(name))) v = 0.0f;
  }
  Rng rng(5);
  for (float s : m.predict(o::random_tensor(m.input_shape(3), rng, 0.0, 1.0))) CHECK(s == 0.5f);
}

TEST_CASE("permuting the batch permutes the scores") {
  const ModelGraph m = small_model(Arch::Meso4, 6);
  Rng rng(7);
  const Tensor x = o::random_tensor(m.input_shape(4), rng, 0.0, 1.0);
  const std::vector<int> perm{2, 0, 3, 1};
  std::vector<Tensor> items;
  for (int i : perm) items.push_back(x.slice_batch(i, 1));
  const std::vector<float> base = m.predict(x);
  const std::vector<float> permuted = m.predict(stack_batch(items));
  for (std::size_t k = 0; k < perm.size(); ++k) CHECK(permuted[k] == base[perm[k]]);
}

TEST_CASE("inception module") {
  Rng rng(8);
  ParamStore params;
  const LayerPtr module = make_inception_module(params, rng, "m", 3, kInception1);
  const Tensor x = o::random_tensor(Shape{2, 3, 9, 9}, rng);
  ForwardContext ctx;
  const Tensor y = module->forward(x, params, ctx, nullptr);
  CHECK(y.shape() == Shape{2, 10, 9, 9});
  for (float v : y.data()) CHECK(v >= 0.0f);  // ReLU after every branch

  for (std::size_t i = 0; i < params.size(); ++i) {
    for (float& v : params.values(i)) v = 0.0f;
  }
  const Tensor zero = module->forward(x, params, ctx, nullptr);
  for (float v : zero.data()) CHECK(v == 0.0f);
}

TEST_CASE("every parameter slot belongs to exactly one layer") {
  for (Arch arch : {Arch::Meso4, Arch::MesoInception4}) {
    const ModelGraph m = small_model(arch, 9);
    std::vector<int> owners(m.params().size(), 0);
    for (std::size_t i = 0; i < m.layer_count(); ++i) {
      for (std::size_t slot : m.layer(i).param_slots()) ++owners.at(slot);
    }
    for (int n : owners) CHECK(n == 1);
  }
}

TEST_CASE("full networks match finite differences") {
  for (Arch arch : {Arch::Meso4, Arch::MesoInception4}) {
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
      const suites::GradCheck g = suites::model_gradient_check(arch, seed);
      INFO(g.name << " seed " << seed << " checked " << g.checked << " skipped " << g.skipped);
      CHECK(g.max_rel_error < 1e-2);
      CHECK(g.forward_error < 1e-5);
      CHECK(g.skipped * 10 < g.checked);
    }
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  for (Arch arch : {Arch::Meso4, Arch::MesoInception4}) {
    ModelGraph m = small_model(arch, 10);
    // Make running statistics non-trivial.
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      if (m.params()[i].trainable) continue;
      for (float& v : m.params().values(i)) v += 0.25f;
    }
    const fs::path path = temp_path(to_string(arch) + ".msw");
    save_weights(m, path, {{"note", "test"}});
    ModelGraph loaded = load_model(path);
    REQUIRE(loaded.params().size() == m.params().size());
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      CHECK(loaded.params()[i].name == m.params()[i].name);
      CHECK(loaded.params()[i].value == m.params()[i].value);
    }
    Rng rng(11);
    const Tensor x = o::random_tensor(m.input_shape(2), rng, 0.0, 1.0);
    CHECK(loaded.predict(x) == m.predict(x));

    ModelGraph fresh = small_model(arch, 99);
    load_weights(fresh, path);
    CHECK(fresh.predict(x) == m.predict(x));

    const nlohmann::json header = read_checkpoint_header(path);
    CHECK(header["arch_tag"] == to_string(arch));
    CHECK(header["metadata"]["note"] == "test");
    CHECK(header["init"]["block_order"] == "conv-bn-relu");
    for (const auto& t : header["tensors"]) CHECK(t["byte_offset"].get<std::size_t>() % 64 == 0);
  }
}

TEST_CASE("checkpoint file starts with the magic and a length-prefixed header") {
  const ModelGraph m = small_model(Arch::Meso4, 12);
  const fs::path path = temp_path("layout.msw");
  save_weights(m, path);
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  CHECK(std::string(magic, 7) == "MSNETW1");
  CHECK(magic[7] == '\0');
}

TEST_CASE("checkpoint errors") {
  const ModelGraph meso = small_model(Arch::Meso4, 13);
  const fs::path path = temp_path("meso.msw");
  save_weights(meso, path);

  SUBCASE("wrong architecture") {
    ModelGraph other = small_model(Arch::MesoInception4, 13);
    CHECK_THROWS_AS(load_weights(other, path), CheckpointError);
  }
  SUBCASE("shape mismatch names the tensor") {
    ModelOptions o;  // 256 input changes the first dense layer's width
    Rng rng(1);
    ModelGraph big = build_meso4(rng, o);
    try {
      load_weights(big, path);
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(std::string(e.what()).find("dense1") != std::string::npos);
    }
  }
  SUBCASE("truncated file") {
    const fs::path cut = temp_path("cut.msw");
    const auto size = fs::file_size(path);
    fs::copy_file(path, cut, fs::copy_options::overwrite_existing);
    fs::resize_file(cut, size - 10);
    CHECK_THROWS_AS(load_model(cut), CheckpointError);
    fs::resize_file(cut, 6);
    CHECK_THROWS_AS(load_model(cut), CheckpointError);
  }
  SUBCASE("bad magic") {
    const fs::path bad = temp_path("bad.msw");
    std::ofstream(bad, std::ios::binary) << "NOTMSW1\0garbage";
    CHECK_THROWS_AS(load_model(bad), CheckpointError);
  }
}
