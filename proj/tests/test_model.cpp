#include "gradcheck.hpp"

#include "saol/backbone.hpp"
#include "saol/ops.hpp"
#include "saol/saol_head.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace saol;
using namespace saol::test;

namespace {

BackboneConfig tiny_backbone(std::size_t side = 8) {
  BackboneConfig c;
  c.channels = {4, 6, 8};
  c.input_h = c.input_w = side;
  return c;
}

void randomize(ParamStore<double> &params, std::mt19937_64 &rng, double spread = 0.5) {
  std::uniform_real_distribution<double> dist(-spread, spread);
  for (auto &entry : params.entries()) {
    for (auto &v : entry.second.mutable_data()) {
      v = dist(rng);
    }
  }
}

std::uint64_t stored_elements(const ParamStore<double> &params, const std::string &prefix) {
  std::uint64_t total = 0;
  for (const auto &[name, t] : params.entries()) {
    if (name.rfind(prefix, 0) == 0) {
      total += t.numel();
    }
  }
  return total;
}

} // namespace

TEST_CASE("backbone pyramid shapes") {
  BackboneConfig c;
  const auto shapes = pyramid_shapes(c, 2);
  CHECK(shapes[0] == Shape{2, 16, 32, 32});
  CHECK(shapes[1] == Shape{2, 32, 16, 16});
  CHECK(shapes[2] == Shape{2, 64, 8, 8});

  c.input_h = c.input_w = 8;
  const auto small = pyramid_shapes(c, 1);
  CHECK(small[0][2] == 8);
  CHECK(small[1][2] == 4);
  CHECK(small[2][2] == 2);

  std::mt19937_64 rng(1);
  ParamStore<double> params;
  init_backbone_params(params, c, rng);
  const auto pyr = backbone_forward(random_tensor({1, 3, 8, 8}, rng, 0, 1, false), c, params);
  REQUIRE(pyr.levels.size() == 3);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(pyr.levels[l].shape() == small[l]);
  }
}

TEST_CASE("backbone shapes over random configs") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> blocks(1, 4), width(1, 5), layers(1, 2), stride(1, 2);
  for (int t = 0; t < 25; ++t) {
    BackboneConfig c;
    c.channels.clear();
    c.strides.clear();
    std::size_t total_stride = 1;
    for (std::size_t b = blocks(rng); b > 0; --b) {
      c.channels.push_back(width(rng));
      c.strides.push_back(stride(rng));
      total_stride *= c.strides.back();
    }
    c.layers_per_block = layers(rng);
    c.input_h = 2 * total_stride;
    c.input_w = 3 * total_stride;
    ParamStore<double> params;
    init_backbone_params(params, c, rng);
    const auto pyr = backbone_forward(random_tensor({2, 3, c.input_h, c.input_w}, rng, 0, 1, false),
                                      c, params);
    const auto want = pyramid_shapes(c, 2);
    REQUIRE(pyr.levels.size() == want.size());
    for (std::size_t l = 0; l < want.size(); ++l) {
      CHECK(pyr.levels[l].shape() == want[l]);
    }
    CHECK(count_params(c) == stored_elements(params, "backbone."));
  }
}

TEST_CASE("backbone configuration errors") {
  BackboneConfig c;
  c.channels.clear();
  c.strides.clear();
  CHECK_THROWS_AS(validate(c), ConfigError);
  BackboneConfig odd;
  odd.input_h = odd.input_w = 30; // not divisible by 4
  CHECK_THROWS_AS(validate(odd), ConfigError);
  BackboneConfig zero_width;
  zero_width.channels = {4, 0, 8};
  CHECK_THROWS_AS(validate(zero_width), ConfigError);
}

TEST_CASE("zero backbone outputs zeros and forward is deterministic") {
  auto c = tiny_backbone();
  std::mt19937_64 rng(3);
  ParamStore<double> params;
  init_backbone_params(params, c, rng);
  const auto x = random_tensor({2, 3, 8, 8}, rng, 0, 1, false);
  const auto a = backbone_forward(x, c, params);
  const auto b = backbone_forward(x, c, params);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(std::equal(a.levels[l].data().begin(), a.levels[l].data().end(),
                     b.levels[l].data().begin()));
  }
  for (auto &entry : params.entries()) {
    std::fill(entry.second.mutable_data().begin(), entry.second.mutable_data().end(), 0.0);
  }
  const auto zeroed = backbone_forward(x, c, params);
  for (const auto &level : zeroed.levels) {
    for (double v : level.data()) {
      CHECK(v == 0);
    }
  }
}

TEST_CASE("parameter and FLOP counts") {
  CHECK(conv_flops(1, 1, 1, 1, 2, 2, false) == 8);
  CHECK(conv_flops(1, 1, 1, 1, 2, 2, true) == 12);

  BackboneConfig c;
  BackboneConfig wide = c;
  wide.width_factor = 2;
  std::mt19937_64 rng(4);
  ParamStore<double> p1, p2;
  init_backbone_params(p1, c, rng);
  init_backbone_params(p2, wide, rng);
  const double n1 = static_cast<double>(stored_elements(p1, "backbone."));
  const double n2 = static_cast<double>(stored_elements(p2, "backbone."));
  CHECK(count_params(c) == n1);
  CHECK(count_params(wide) == n2);
  CHECK(n2 / n1 == doctest::Approx(4.0).epsilon(0.05));

  // FLOPs of the default config recounted layer by layer.
  std::uint64_t flops = conv_flops(3, 16, 3, 3, 32, 32, true);
  flops += 2 * conv_flops(16, 16, 3, 3, 32, 32, true);
  flops += conv_flops(16, 32, 3, 3, 16, 16, true) + conv_flops(32, 32, 3, 3, 16, 16, true) +
           conv_flops(16, 32, 1, 1, 16, 16, true);
  flops += conv_flops(32, 64, 3, 3, 8, 8, true) + conv_flops(64, 64, 3, 3, 8, 8, true) +
           conv_flops(32, 64, 1, 1, 8, 8, true);
  flops += 16 * 32 * 32 + 32 * 16 * 16 + 64 * 8 * 8; // residual adds
  CHECK(count_flops(c, 32, 32) == flops);

  SaolConfig head;
  head.num_classes = 10;
  const auto model = make_model<double>(c, head, 1);
  CHECK(count_model_params(c, head) == model.params.total_elements());
  CHECK(count_model_flops(c, head) > count_flops(c, 32, 32));
}

TEST_CASE("gap_fc_forward examples") {
  auto one = gap_fc_forward(Tensor<double>({1, 1, 2, 2}, {1, 3, 5, 7}),
                            Tensor<double>({1, 1}, {1}));
  CHECK(one.data()[0] == 1.0);
  std::mt19937_64 rng(5);
  auto uniform = gap_fc_forward(random_tensor({2, 4, 3, 3}, rng, -1, 1, false),
                                Tensor<double>::zeros({4, 3}));
  for (double v : uniform.data()) {
    CHECK(v == doctest::Approx(1.0 / 3));
  }

  auto x = random_tensor({3, 4, 2, 5}, rng, -1, 1, false);
  auto w = random_tensor({4, 6}, rng, -1, 1, false);
  auto got = gap_fc_forward(x, w);
  for (std::size_t n = 0; n < 3; ++n) {
    std::vector<double> z(6, 0.0);
    for (std::size_t c = 0; c < 4; ++c) {
      double m = 0;
      for (std::size_t i = 0; i < 10; ++i) {
        m += x.data()[(n * 4 + c) * 10 + i];
      }
      m /= 10;
      for (std::size_t k = 0; k < 6; ++k) {
        z[k] += m * w.data()[c * 6 + k];
      }
    }
    const double top = *std::max_element(z.begin(), z.end());
    double s = 0;
    for (double v : z) {
      s += std::exp(v - top);
    }
    for (std::size_t k = 0; k < 6; ++k) {
      CHECK(std::abs(got.data()[n * 6 + k] - std::exp(z[k] - top) / s) < 1e-10);
    }
  }
  CHECK_THROWS_AS(gap_fc_forward(x, Tensor<double>::zeros({5, 6})), DimensionError);
}

TEST_CASE("attention and mask heads") {
  auto bb = tiny_backbone();
  SaolConfig head;
  head.num_classes = 3;
  auto model = make_model<double>(bb, head, 6);
  std::mt19937_64 rng(6);
  randomize(model.params, rng);
  const auto layout = resolve_head(head, bb);

  auto zero = make_model<double>(bb, head, 6, true);
  auto x = random_tensor({2, 8, 2, 2}, rng, -1, 1, false);
  auto uniform = attention_head_forward(x, zero.params, 2, 2);
  for (double v : uniform.data()) {
    CHECK(v == doctest::Approx(0.25));
  }
  auto half = mask_head_forward(x, zero.params, 2, 2);
  for (double v : half.data()) {
    CHECK(v == 0.5);
  }
  auto m = mask_head_forward(x, model.params, 2, 2);
  for (double v : m.data()) {
    CHECK(v > 0);
    CHECK(v < 1);
  }
  auto &bias = model.params.get("head.mask.conv2.bias");
  bias.mutable_data()[0] = 50;
  const auto saturated = mask_head_forward(x, model.params, 2, 2);
  for (double v : saturated.data()) {
    CHECK(v > 0.99);
  }
  CHECK(layout.mid == 4);
}

TEST_CASE("constant features give uniform attention") {
  // Zero padding makes border taps see a different input, so only the center
  // tap of the 3x3 trunk is kept.
  auto bb = tiny_backbone();
  SaolConfig head;
  head.num_classes = 3;
  auto model = make_model<double>(bb, head, 7);
  std::mt19937_64 rng(7);
  randomize(model.params, rng);
  auto &w1 = model.params.get("head.attn.conv1.weight");
  auto data = w1.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (i % 9 != 4) {
      data[i] = 0; // keep only the center tap
    }
  }
  auto a = attention_head_forward(Tensor<double>::full({1, 8, 4, 4}, 0.7), model.params, 4, 4);
  for (double v : a.data()) {
    CHECK(v == doctest::Approx(1.0 / 16).epsilon(1e-12));
  }
}

TEST_CASE("spatial logits") {
  auto bb = tiny_backbone();
  SaolConfig head;
  head.num_classes = 4;
  std::mt19937_64 rng(8);
  const auto x = random_tensor({2, 3, 8, 8}, rng, 0, 1, false);

  SUBCASE("zero weights give uniform classes") {
    auto model = make_model<double>(bb, head, 8, true);
    const auto pyr = backbone_forward(x, bb, model.params);
    const auto y = spatial_logits_forward(pyr, resolve_head(head, bb), model.params);
    for (double v : y.data()) {
      CHECK(v == doctest::Approx(0.25));
    }
  }

  SUBCASE("class sums are one") {
    auto model = make_model<double>(bb, head, 8);
    randomize(model.params, rng);
    const auto pyr = backbone_forward(x, bb, model.params);
    const auto y = spatial_logits_forward(pyr, resolve_head(head, bb), model.params);
    const auto sums = sum(y, {1});
    for (double v : sums.data()) {
      CHECK(std::abs(v - 1) < 1e-12);
    }
  }

  SUBCASE("zeroed branches reduce three-block fusion to the last block") {
    SaolConfig one = head;
    one.fused_blocks = {3};
    auto full = make_model<double>(bb, head, 9);
    randomize(full.params, rng);
    auto single = make_model<double>(bb, one, 9);
    for (auto &[name, t] : single.params.entries()) {
      if (name == "head.logits.fuse.weight") {
        continue;
      }
      const auto &src = full.params.get(name);
      std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
    }
    for (const char *name : {"head.logits.proj1.weight", "head.logits.proj1.bias",
                             "head.logits.proj2.weight", "head.logits.proj2.bias"}) {
      auto d = full.params.get(name).mutable_data();
      std::fill(d.begin(), d.end(), 0.0);
    }
    // Fusion weights of the last block's slice carry over unchanged.
    const auto layout = resolve_head(head, bb);
    const auto &fw = full.params.get("head.logits.fuse.weight");
    auto sw = single.params.get("head.logits.fuse.weight").mutable_data();
    const std::size_t mid = layout.mid, k = head.num_classes;
    for (std::size_t o = 0; o < k; ++o) {
      for (std::size_t c = 0; c < mid; ++c) {
        sw[o * mid + c] = fw.data()[o * 3 * mid + 2 * mid + c];
      }
    }
    const auto pyr = backbone_forward(x, bb, full.params);
    const auto y3 = spatial_logits_forward(pyr, layout, full.params);
    const auto y1 = spatial_logits_forward(pyr, resolve_head(one, bb), single.params);
    for (std::size_t i = 0; i < y3.numel(); ++i) {
      CHECK(std::abs(y3.data()[i] - y1.data()[i]) < 1e-10);
    }
  }

  SUBCASE("invalid block selection") {
    SaolConfig bad = head;
    bad.fused_blocks = {4};
    CHECK_THROWS_AS(resolve_head(bad, bb), ConfigError);
  }
}

TEST_CASE("saol_aggregate examples and properties") {
  Tensor<double> a({1, 1, 1, 1}, {1});
  Tensor<double> y({1, 3, 1, 1}, {0, 0, 1});
  auto out = saol_aggregate(a, y);
  CHECK(out.data()[2] == 1);

  Tensor<double> a2({1, 1, 2, 2}, {0.5, 0.5, 0, 0});
  Tensor<double> y2({1, 2, 2, 2}, {1, 0, 0.3, 0.7, 0, 1, 0.7, 0.3});
  CHECK(saol_aggregate(a2, y2).data()[0] == doctest::Approx(0.5));

  CHECK_THROWS_AS(saol_aggregate(a2, Tensor<double>::zeros({1, 2, 3, 2})), DimensionError);

  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    auto att = softmax(random_tensor({2, 1, 3, 4}, rng, -3, 3, false), {2, 3});
    auto lg = random_distribution({2, 5, 3, 4}, rng);
    const auto yhat = saol_aggregate(att, lg);

    // Permuting positions of A and Y together changes nothing.
    std::vector<std::size_t> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> pa(att.numel()), py(lg.numel());
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t p = 0; p < 12; ++p) {
        pa[n * 12 + p] = att.data()[n * 12 + perm[p]];
        for (std::size_t k = 0; k < 5; ++k) {
          py[(n * 5 + k) * 12 + p] = lg.data()[(n * 5 + k) * 12 + perm[p]];
        }
      }
    }
    const auto permuted = saol_aggregate(Tensor<double>(att.shape(), pa),
                                         Tensor<double>(lg.shape(), py));
    for (std::size_t i = 0; i < yhat.numel(); ++i) {
      CHECK(std::abs(yhat.data()[i] - permuted.data()[i]) < 1e-12);
    }

    // Convexity: every class score lies within that class's spatial range.
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t k = 0; k < 5; ++k) {
        const auto first = lg.data().begin() + static_cast<std::ptrdiff_t>((n * 5 + k) * 12);
        const auto [lo, hi] = std::minmax_element(first, first + 12);
        CHECK(yhat.data()[n * 5 + k] >= *lo - 1e-15);
        CHECK(yhat.data()[n * 5 + k] <= *hi + 1e-15);
      }
    }
  }
}

TEST_CASE("saol_forward invariants") {
  auto bb = tiny_backbone();
  std::mt19937_64 rng(10);
  for (std::size_t k : {1u, 3u}) {
    SaolConfig head;
    head.num_classes = k;
    auto model = make_model<double>(bb, head, 10);
    randomize(model.params, rng);
    const auto out = saol_forward(random_tensor({3, 3, 8, 8}, rng, 0, 1, false), model);
    CHECK(out.attention.shape() == Shape{3, 1, 2, 2});
    CHECK(out.spatial_logits.shape() == Shape{3, k, 2, 2});
    CHECK(out.mask_pred.shape() == Shape{3, 1, 2, 2});
    CHECK(out.gapfc_logits.shape() == Shape{3, k});
    const auto mass = sum(out.attention, {2, 3});
    for (double v : mass.data()) {
      CHECK(std::abs(v - 1) < 1e-12);
    }
    const auto total = sum(out.final_logits, {1});
    for (double v : total.data()) {
      CHECK(std::abs(v - 1) < 1e-12);
    }
    if (k == 1) {
      for (double v : out.final_logits.data()) {
        CHECK(v == doctest::Approx(1.0));
      }
    }
  }
  SaolConfig head;
  head.num_classes = 4;
  const auto zero = make_model<double>(bb, head, 11, true);
  const auto out = saol_forward(random_tensor({2, 3, 8, 8}, rng, 0, 1, false), zero);
  for (double v : out.final_logits.data()) {
    CHECK(v == doctest::Approx(0.25));
  }
}
