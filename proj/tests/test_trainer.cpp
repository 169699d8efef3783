#include "saol/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace saol;

namespace {

RunConfig tiny(std::size_t classes = 3) {
  RunConfig c;
  c.num_classes = classes;
  c.train_count = 96;
  c.test_count = 48;
  c.image_size = 16;
  c.backbone.channels = {4, 6, 8};
  c.batch_size = 16;
  c.epochs = 3;
  c.lr = 0.05;
  c.grad_clip = 1;
  finalize(c);
  return c;
}

template <typename T> std::vector<T> flat_params(const Trainer<T> &t) {
  std::vector<T> out;
  for (const auto &[name, p] : t.model().params.entries()) {
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return out;
}

} // namespace

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0.1, 0, 100) == doctest::Approx(0.1));
  CHECK(cosine_lr(0.1, 50, 100) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(cosine_lr(0.1, 100, 100) == doctest::Approx(0.0));
  CHECK(cosine_lr(0.1, 25, 100) == doctest::Approx(0.05 * (1 + std::cos(std::numbers::pi / 4))));

  auto c = tiny();
  c.epochs = 4;
  Trainer<float> t(c, load_dataset(c));
  CHECK(t.total_steps() == 4 * t.steps_per_epoch());
  CHECK(t.current_lr() == doctest::Approx(c.lr));
  t.train_epoch();
  t.train_epoch();
  CHECK(t.current_lr() == doctest::Approx(0.5 * c.lr));
}

TEST_CASE("plain configuration trains on the supervised loss only") {
  auto c = tiny();
  c.loss.enable_sd = false;
  c.cutmix = false;
  Trainer<double> t(c, load_dataset(c));
  std::vector<std::size_t> idx(16);
  for (std::size_t i = 0; i < 16; ++i) {
    idx[i] = i;
  }
  for (int s = 0; s < 5; ++s) {
    const auto l = t.step(idx);
    CHECK(l.total == l.sl);
    CHECK(l.ss1 == 0);
    CHECK(l.ss2 == 0);
    CHECK(l.sd == 0);
    CHECK(!l.mixed);
  }
}

TEST_CASE("clipping reports the gradient norm") {
  auto c = tiny();
  c.cutmix = true;
  c.loss.enable_ss1 = c.loss.enable_ss2 = true;
  Trainer<float> t(c, load_dataset(c));
  const auto l = t.step({0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(l.grad_norm > 0);
  CHECK(l.mixed);
  CHECK(l.total == doctest::Approx(l.sl + l.ss1 + l.ss2 + l.sd).epsilon(1e-5));
}

TEST_CASE("untrained model predicts uniformly") {
  auto c = tiny(4);
  c.test_count = 400;
  finalize(c);
  Trainer<float> t(c, load_dataset(c));
  const auto out = t.infer(t.data().test, {0, 1, 2});
  for (float v : out.final_logits.data()) {
    CHECK(v == doctest::Approx(0.25));
  }
  for (float v : out.gapfc_logits.data()) {
    CHECK(v == doctest::Approx(0.25));
  }
  const auto r = t.evaluate(t.data().test);
  CHECK(r.count == 400);
  CHECK(std::abs(r.acc_saol - 0.25) < 0.08);
  CHECK(std::abs(r.acc_gapfc - 0.25) < 0.08);
  const auto again = t.evaluate(t.data().test);
  CHECK(again.acc_saol == r.acc_saol);
  CHECK(again.pred_gapfc == r.pred_gapfc);
}

TEST_CASE("training is deterministic and evaluation has no side effects") {
  auto c = tiny();
  c.cutmix = true;
  c.loss.enable_ss1 = c.loss.enable_ss2 = true;
  c.augment = Augment::kFlip;
  Trainer<float> a(c, load_dataset(c));
  const auto ra = a.fit();

  auto cg = c;
  cg.test_head = TestHead::kGapFc;
  Trainer<float> b(cg, load_dataset(cg));
  b.evaluate(b.data().train);
  b.infer(b.data().test, {0, 1});
  const auto rb = b.fit();
  REQUIRE(ra.size() == rb.size());
  for (std::size_t e = 0; e < ra.size(); ++e) {
    CHECK(ra[e].loss_total == rb[e].loss_total);
    CHECK(ra[e].eval.acc_saol == rb[e].eval.acc_saol);
    CHECK(ra[e].metrics().loss_sd == rb[e].metrics().loss_sd);
  }
  CHECK(flat_params(a) == flat_params(b));
}

TEST_CASE("training loss decreases on separable data") {
  auto c = tiny(2);
  c.epochs = 5;
  c.lr = 0.1;
  Trainer<float> t(c, load_dataset(c));
  const auto log = t.fit();
  CHECK(log.back().loss_sl < log.front().loss_sl);
  CHECK(log.back().epoch == 5);
  CHECK(log.back().step == t.total_steps());
}

TEST_CASE("roc_auc") {
  CHECK(roc_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(roc_auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == 0.0);
  CHECK(roc_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
  // Brute-force pair count oracle.
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> level(0, 9);
  std::vector<double> s;
  std::vector<std::uint8_t> y;
  for (int i = 0; i < 300; ++i) {
    s.push_back(level(rng));
    y.push_back(static_cast<std::uint8_t>(level(rng) + s.back() > 10));
  }
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] && !y[j]) {
        pairs += 1;
        wins += s[i] > s[j] ? 1 : (s[i] == s[j] ? 0.5 : 0);
      }
    }
  }
  CHECK(std::abs(roc_auc(s, y) - wins / pairs) < 1e-12);
}

TEST_CASE("localization records and heatmap export") {
  auto c = tiny();
  Trainer<float> t(c, load_dataset(c));
  const auto records = localize_dataset(t, t.data().test);
  CHECK(records.size() == t.data().test.size());
  for (const auto &r : records) {
    CHECK(r.gt_box);
    CHECK(r.pred_box.valid());
    CHECK(r.iou_gt_cls >= 0);
    CHECK(r.iou_gt_cls <= 1);
  }
  const auto dir = std::filesystem::temp_directory_path() / "saol_trainer_heatmaps";
  std::filesystem::remove_all(dir);
  const std::size_t files = export_heatmaps(t, t.data().test, 2, dir);
  std::size_t on_disk = 0;
  for ([[maybe_unused]] const auto &entry : std::filesystem::directory_iterator(dir)) {
    ++on_disk;
  }
  CHECK(files == on_disk);
  // Input, attention and one map per class, PGM + CSV for the maps.
  CHECK(files == 2 * (1 + 2 * (1 + c.num_classes)));
  std::filesystem::remove_all(dir);

  const double auc = mask_auc(t, t.data().test, 3);
  CHECK(auc >= 0);
  CHECK(auc <= 1);
}
