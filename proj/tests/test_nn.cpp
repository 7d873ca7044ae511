#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "asplat/io.hpp"
#include "asplat/nn.hpp"
#include "test_util.hpp"

using namespace asplat;
using asplat::testing::code_of;
namespace fs = std::filesystem;

namespace {

void make_params(nn::ParamSet& ps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::xavier(ps.add("a", {3, 4}), 3, 4, rng);
  nn::xavier(ps.add("b", {5}), 5, 5, rng);
}

// Quadratic bowl with a fixed target; the gradient is written directly.
void quad_grad(nn::ParamSet& ps) {
  for (auto* p : ps.all())
    for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] = 2.0 * (p->value[i] - 0.1 * i);
}

}  // namespace

TEST_CASE("adam first step moves each weight by about lr against its gradient sign") {
  nn::ParamSet ps;
  auto& p = ps.add("w", {3});
  p.value = {0.5, -0.25, 1.0};
  p.grad = {2.0, -4.0, 0.0};
  nn::Adam adam(ps.all(), {0.01});
  adam.step();
  CHECK(p.value[0] == doctest::Approx(0.49).epsilon(1e-6));
  CHECK(p.value[1] == doctest::Approx(-0.24).epsilon(1e-6));
  CHECK(p.value[2] == 1.0);
  CHECK(adam.steps() == 1);
  // Values and moments are float-representable after each step.
  for (double v : p.value) CHECK(static_cast<double>(static_cast<float>(v)) == v);
  for (double v : adam.first()[0]) CHECK(static_cast<double>(static_cast<float>(v)) == v);
}

TEST_CASE("adam skips frozen parameters and rejects non-finite gradients") {
  nn::ParamSet ps;
  auto& p = ps.add("w", {2});
  p.value = {1.0, 2.0};
  p.grad = {1.0, 1.0};
  ps.set_trainable(false);
  nn::Adam adam(ps.all(), {0.1});
  adam.step();
  CHECK(p.value == std::vector<double>{1.0, 2.0});
  ps.set_trainable(true);
  p.grad[1] = std::nan("");
  CHECK(code_of([&] { adam.step(); }) == ErrorCode::kDivergence);
}

TEST_CASE("checkpoint round trip restores weights and optimizer state") {
  nn::ParamSet ps;
  make_params(ps, 7);
  nn::Adam adam(ps.all(), {0.05});
  for (int i = 0; i < 3; ++i) {
    quad_grad(ps);
    adam.step();
  }
  const auto bytes = nn::encode_checkpoint({"unit", R"({"k":1})", R"({"note":"x"})", {{"g", &ps}}, &adam});
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "ASPL");

  nn::ParamSet other;
  make_params(other, 99);
  nn::Adam adam2(other.all(), {0.05});
  const auto lc = nn::decode_checkpoint(bytes, {{"g", &other}}, &adam2);
  CHECK(lc.section == "unit");
  CHECK(lc.has_optimizer);
  CHECK(lc.optimizer_steps == 3);
  CHECK(adam2.steps() == 3);
  for (std::size_t k = 0; k < ps.all().size(); ++k) {
    CHECK(ps.all()[k]->value == other.all()[k]->value);
    CHECK(adam.first()[k] == adam2.first()[k]);
    CHECK(adam.second()[k] == adam2.second()[k]);
  }
  // Re-encoding gives the same bytes.
  CHECK(nn::encode_checkpoint({"unit", R"({"k":1})", R"({"note":"x"})", {{"g", &other}}, &adam2}) == bytes);
}

TEST_CASE("checkpoint errors") {
  nn::ParamSet ps;
  make_params(ps, 1);
  auto bytes = nn::encode_checkpoint({"s", "{}", "{}", {{"g", &ps}}, nullptr});
  nn::ParamSet wrong;
  wrong.add("a", {4, 3});
  wrong.add("b", {5});
  CHECK(code_of([&] { nn::decode_checkpoint(bytes, {{"g", &wrong}}); }) == ErrorCode::kParse);
  nn::ParamSet missing;
  missing.add("a", {3, 4});
  missing.add("b", {5});
  missing.add("c", {1});
  CHECK(code_of([&] { nn::decode_checkpoint(bytes, {{"g", &missing}}); }) == ErrorCode::kParse);
  bytes[0] = 'X';
  CHECK(code_of([&] { nn::decode_checkpoint(bytes, {{"g", &ps}}); }) == ErrorCode::kParse);
  CHECK(code_of([&] { nn::load_checkpoint("/nonexistent/x.ckpt", {{"g", &ps}}); }) ==
        ErrorCode::kMissingCheckpoint);
}

TEST_CASE("resume from a saved checkpoint reproduces an uninterrupted run bit for bit") {
  const fs::path dir = fs::temp_directory_path() / "asplat_test_nn";
  fs::create_directories(dir);
  nn::ParamSet straight;
  make_params(straight, 5);
  nn::Adam a1(straight.all(), {0.03});
  for (int i = 0; i < 10; ++i) {
    quad_grad(straight);
    a1.step();
  }

  nn::ParamSet first;
  make_params(first, 5);
  nn::Adam a2(first.all(), {0.03});
  for (int i = 0; i < 4; ++i) {
    quad_grad(first);
    a2.step();
  }
  nn::save_checkpoint(dir / "half.ckpt", {"s", "{}", "{}", {{"g", &first}}, &a2});

  nn::ParamSet resumed;
  make_params(resumed, 123);
  nn::Adam a3(resumed.all(), {0.03});
  nn::load_checkpoint(dir / "half.ckpt", {{"g", &resumed}}, &a3);
  for (int i = 0; i < 6; ++i) {
    quad_grad(resumed);
    a3.step();
  }
  for (std::size_t k = 0; k < straight.all().size(); ++k) CHECK(straight.all()[k]->value == resumed.all()[k]->value);
  CHECK_FALSE(fs::exists(dir / "half.ckpt.tmp"));
}
