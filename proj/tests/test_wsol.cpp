#include "gradcheck.hpp"
#include "oracles.hpp"

#include "saol/wsol.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace saol;
using namespace saol::test;
namespace fs = std::filesystem;

namespace {

ScoreMap map_of(std::size_t h, std::size_t w, std::vector<double> v) { return {h, w, std::move(v)}; }

} // namespace

TEST_CASE("class_score_map") {
  Tensor<double> a = Tensor<double>::full({1, 1, 2, 3}, 1.0 / 6);
  Tensor<double> y = Tensor<double>::full({1, 2, 2, 3}, 0.5);
  for (double v : class_score_map(a, y, 1).values) {
    CHECK(v == doctest::Approx(0.5 / 6));
  }
  Tensor<double> one({1, 1, 2, 3}, {0, 0, 0, 0, 1, 0});
  const auto m = class_score_map(one, y, 0);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(m.values[i] == (i == 4 ? 0.5 : 0.0));
  }
  CHECK_THROWS_AS(class_score_map(a, y, 2), ArgumentError);

  std::mt19937_64 rng(1);
  const auto ra = random_tensor({3, 1, 4, 5}, rng, 0, 1, false);
  const auto ry = random_tensor({3, 4, 4, 5}, rng, 0, 1, false);
  const auto got = class_score_map(ra, ry, 2, 1);
  CHECK(got.height == 4);
  CHECK(got.width == 5);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(got.values[i] == ra.data()[20 + i] * ry.data()[(4 + 2) * 20 + i]);
  }
}

TEST_CASE("min_max_normalize") {
  const auto n = min_max_normalize(map_of(1, 3, {2, 4, 6}));
  CHECK(n.values == std::vector<double>{0, 0.5, 1});
  for (double v : min_max_normalize(map_of(2, 2, {3, 3, 3, 3})).values) {
    CHECK(v == 0);
  }
  const auto unit = map_of(2, 2, {0, 0.3, 1, 0.7});
  CHECK(min_max_normalize(unit).values == unit.values);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(-5, 5);
  ScoreMap r{3, 3, {}};
  for (int i = 0; i < 9; ++i) {
    r.values.push_back(d(rng));
  }
  const auto once = min_max_normalize(r);
  const auto twice = min_max_normalize(once);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(std::abs(once.values[i] - twice.values[i]) < 1e-15);
  }
}

TEST_CASE("extract_box examples") {
  ScoreMap m{8, 8, std::vector<double>(64, 0.0)};
  m.at(3, 2) = 1; // pixel (x=2, y=3)
  const auto box = extract_box(m, 0.2, 32, 32);
  CHECK(box == BoundingBox{8, 12, 12, 16});

  ScoreMap two{6, 6, std::vector<double>(36, 0.0)};
  for (auto [y, x] : {std::pair{0, 0}, {0, 1}, {0, 2}}) {
    two.at(y, x) = 0.9;
  }
  for (auto [y, x] : {std::pair{3, 3}, {4, 3}, {5, 3}, {5, 4}, {5, 5}}) {
    two.at(y, x) = 0.5;
  }
  CHECK(extract_box(two, 0.2, 6, 6) == BoundingBox{3, 3, 6, 6});

  const auto fb = extract_box_ex(ScoreMap{4, 4, std::vector<double>(16, 0.1)}, 0.2, 32, 32);
  CHECK(fb.fallback);
  CHECK(fb.box == BoundingBox{0, 0, 32, 32});

  // Bilinear mode thresholds the resized map; a full map covers the image.
  const auto bl = extract_box(ScoreMap{2, 2, {1, 1, 1, 1}}, 0.2, 16, 16, UpsampleMode::kBilinear);
  CHECK(bl == BoundingBox{0, 0, 16, 16});

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(0, 1);
  for (int t = 0; t < 200; ++t) {
    ScoreMap r{5, 7, {}};
    for (int i = 0; i < 35; ++i) {
      r.values.push_back(d(rng));
    }
    for (auto mode : {UpsampleMode::kBox, UpsampleMode::kBilinear}) {
      const auto b = extract_box(min_max_normalize(r), 0.6, 23, 31, mode);
      CHECK(b.valid());
      CHECK(b.x_min >= 0);
      CHECK(b.y_min >= 0);
      CHECK(b.x_max <= 31);
      CHECK(b.y_max <= 23);
    }
  }
}

TEST_CASE("connected components match a flood-fill oracle on 500 masks") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> side(1, 16);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 500; ++t) {
    const std::size_t h = side(rng), w = side(rng);
    const double density = u(rng);
    std::vector<std::uint8_t> mask(h * w);
    for (auto &v : mask) {
      v = u(rng) < density;
    }
    std::vector<std::size_t> oracle_label;
    const auto sizes = flood_fill_sizes(mask, h, w, oracle_label);
    std::size_t count = 0;
    const auto label = label_components(mask, h, w, &count);
    CHECK(count == sizes.size());
    // Same partition, same raster numbering.
    CHECK(label == oracle_label);

    const auto box = largest_component_box(mask, h, w);
    if (sizes.empty()) {
      CHECK(!box);
      continue;
    }
    const std::size_t best =
        static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin()) + 1;
    BoundingBox want{double(w), double(h), 0, 0};
    for (std::size_t p = 0; p < h * w; ++p) {
      if (oracle_label[p] == best) {
        const double y = double(p / w), x = double(p % w);
        want.x_min = std::min(want.x_min, x);
        want.y_min = std::min(want.y_min, y);
        want.x_max = std::max(want.x_max, x + 1);
        want.y_max = std::max(want.y_max, y + 1);
      }
    }
    REQUIRE(box);
    CHECK(*box == want);
  }
}

TEST_CASE("iou") {
  const BoundingBox a{0, 0, 2, 2}, b{1, 1, 3, 3};
  CHECK(std::abs(iou(a, b) - 1.0 / 7) < 1e-12);
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, BoundingBox{5, 5, 6, 6}) == 0.0);
  CHECK(iou(a, BoundingBox{2, 0, 4, 2}) == 0.0); // touching edges
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(0, 10);
  for (int t = 0; t < 1000; ++t) {
    const double x0 = d(rng), y0 = d(rng), x1 = d(rng), y1 = d(rng);
    const BoundingBox p{std::min(x0, x1), std::min(y0, y1), std::max(x0, x1) + 0.1,
                        std::max(y0, y1) + 0.1};
    const double x2 = d(rng), y2 = d(rng);
    const BoundingBox q{x2, y2, x2 + d(rng) + 0.1, y2 + d(rng) + 0.1};
    const double v = iou(p, q);
    CHECK(v == iou(q, p));
    CHECK(v >= 0);
    CHECK(v <= 1);
  }
}

TEST_CASE("loc_accuracy counting") {
  const BoundingBox gt{0, 0, 10, 10};
  const auto rec = [&](std::size_t label, std::size_t pred, double iou_pred, double iou_gt) {
    LocalizationRecord r;
    r.gt_label = label;
    r.pred_label = pred;
    r.gt_box = gt;
    r.iou_pred = iou_pred;
    r.iou_gt_cls = iou_gt;
    return r;
  };
  std::vector<LocalizationRecord> perfect(5, rec(1, 1, 1, 1));
  CHECK(loc_accuracy(perfect, LocMode::kTop1).accuracy == 1.0);
  CHECK(loc_accuracy(perfect, LocMode::kGtKnown).accuracy == 1.0);
  std::vector<LocalizationRecord> disjoint(5, rec(1, 1, 0, 0));
  CHECK(loc_accuracy(disjoint, LocMode::kTop1).accuracy == 0.0);

  std::vector<LocalizationRecord> mixed{rec(0, 0, 0.9, 0.9), rec(1, 1, 0.5, 0.5),
                                        rec(2, 0, 0.9, 0.9), rec(1, 1, 0.2, 0.2)};
  CHECK(loc_accuracy(mixed, LocMode::kTop1).accuracy == 0.5);
  CHECK(loc_accuracy(mixed, LocMode::kGtKnown).accuracy == 0.75);

  auto no_box = rec(0, 0, 1, 1);
  no_box.gt_box.reset();
  mixed.push_back(no_box);
  const auto acc = loc_accuracy(mixed, LocMode::kTop1);
  CHECK(acc.accuracy == 0.5);
  CHECK(acc.evaluated == 4);
  CHECK(acc.skipped == 1);
}

TEST_CASE("indicator maps localize perfectly") {
  // Attention is the ground-truth box indicator on an 8x8 map of a 32x32 image.
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> pos(0, 7);
  std::vector<LocalizationRecord> records;
  for (std::size_t i = 0; i < 100; ++i) {
    std::size_t y0 = pos(rng), y1 = pos(rng), x0 = pos(rng), x1 = pos(rng);
    if (y0 > y1) std::swap(y0, y1);
    if (x0 > x1) std::swap(x0, x1);
    ++y1;
    ++x1;
    std::vector<double> att(64, 0.0), logits(2 * 64, 0.5);
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) {
        att[y * 8 + x] = 1.0;
      }
    }
    const BoundingBox gt{4.0 * x0, 4.0 * y0, 4.0 * x1, 4.0 * y1};
    records.push_back(localize(Tensor<double>({1, 1, 8, 8}, att), Tensor<double>({1, 2, 8, 8}, logits),
                               0, i, 1, 1, gt, 0.2, 32, 32));
  }
  CHECK(loc_accuracy(records, LocMode::kGtKnown).accuracy == 1.0);
  CHECK(loc_accuracy(records, LocMode::kTop1).accuracy == 1.0);
}

TEST_CASE("random maps score near the random-box baseline") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> side(3, 5), pos(0, 3);
  std::vector<BoundingBox> gts;
  std::vector<LocalizationRecord> records;
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < 2000; ++i) {
    const std::size_t s = side(rng);
    const std::size_t y0 = std::min<std::size_t>(pos(rng), 8 - s), x0 = std::min<std::size_t>(pos(rng), 8 - s);
    const BoundingBox gt{double(x0), double(y0), double(x0 + s), double(y0 + s)};
    gts.push_back(gt);
    // A random square blob drawn from the same size range as the GT boxes.
    std::vector<double> att(64, 0.0);
    const std::size_t s2 = side(rng);
    const std::size_t by = std::min<std::size_t>(pos(rng) + pos(rng) / 2, 8 - s2);
    const std::size_t bx = std::min<std::size_t>(pos(rng) + pos(rng) / 2, 8 - s2);
    for (std::size_t y = by; y < by + s2; ++y) {
      for (std::size_t x = bx; x < bx + s2; ++x) {
        att[y * 8 + x] = 0.5 + 0.5 * u(rng);
      }
    }
    records.push_back(localize(Tensor<double>({1, 1, 8, 8}, att),
                               Tensor<double>::full({1, 2, 8, 8}, 0.5), 0, i, 0, 0, gt, 0.2, 8, 8));
  }
  const double baseline = random_box_baseline(gts, 8, 8, 20000, 1);
  const double acc = loc_accuracy(records, LocMode::kGtKnown).accuracy;
  CHECK(baseline > 0);
  CHECK(baseline < 1);
  CHECK(std::abs(acc - baseline) < 0.1);
  CHECK(random_box_baseline(gts, 8, 8, 20000, 1) == baseline);
}

TEST_CASE("random_box_baseline matches a position-grid oracle for one box size") {
  // One 4x4 box in an 8x8 image at (2,2); top-left corners uniform on [0,4]^2.
  const BoundingBox gt{2, 2, 6, 6};
  const int steps = 400;
  std::size_t pass = 0;
  for (int i = 0; i < steps; ++i) {
    for (int j = 0; j < steps; ++j) {
      const double y = 4.0 * (i + 0.5) / steps, x = 4.0 * (j + 0.5) / steps;
      pass += iou(gt, BoundingBox{x, y, x + 4, y + 4}) >= 0.5;
    }
  }
  const double oracle = static_cast<double>(pass) / (steps * steps);
  CHECK(std::abs(random_box_baseline({gt}, 8, 8, 50000, 3) - oracle) < 0.01);
}

TEST_CASE("report and heatmap files") {
  const auto dir = fs::temp_directory_path() / "saol_wsol_files";
  fs::create_directories(dir);
  write_pgm(dir / "m.pgm", ScoreMap{2, 3, {0, 0.5, 1, 2, -1, 0.25}});
  std::ifstream pgm(dir / "m.pgm", std::ios::binary);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  pgm >> magic >> w >> h >> maxval;
  pgm.get();
  std::vector<unsigned char> px(6);
  pgm.read(reinterpret_cast<char *>(px.data()), 6);
  CHECK(magic == "P5");
  CHECK(w == 3);
  CHECK(h == 2);
  CHECK(maxval == 255);
  CHECK(px[0] == 0);
  CHECK(px[2] == 255);
  CHECK(px[3] == 255);
  CHECK(px[4] == 0);

  write_map_csv(dir / "m.csv", ScoreMap{2, 2, {0.5, 1, 2, 3}});
  std::ifstream csv(dir / "m.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line.find(',') != std::string::npos);

  LocalizationRecord r;
  r.image_id = 4;
  r.gt_label = 1;
  r.pred_label = 1;
  r.gt_box = BoundingBox{0, 0, 2, 2};
  r.iou_pred = r.iou_gt_cls = 0.75;
  write_loc_report(dir / "loc.csv", {r});
  std::ifstream rep(dir / "loc.csv");
  std::getline(rep, line);
  CHECK(line == kLocReportHeader);
  std::getline(rep, line);
  CHECK(line.rfind("4,1,1,0.75", 0) == 0);
  fs::remove_all(dir);
}
