#include "saol/config.hpp"
#include "saol/error.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace saol;

TEST_CASE("defaults") {
  RunConfig c = parse_config("");
  CHECK(c.dataset == DatasetKind::kSynthetic);
  CHECK(c.lr == 0.1);
  CHECK(c.momentum == 0.9);
  CHECK(c.weight_decay == 5e-4);
  CHECK(c.loss.beta == 0.5);
  CHECK(c.loss.enable_sd);
  CHECK(!c.loss.enable_ss1);
  CHECK(c.schedule == Schedule::kCosine);
  CHECK(c.test_head == TestHead::kSaol);
  CHECK(c.wsol_threshold == 0.2);
  CHECK(c.cutmix_alpha == 1.0);
}

TEST_CASE("parse keys, comments and lists") {
  const auto c = parse_config(R"(
# comment
dataset = synthetic
num_classes = 4
channels = 8, 16,32
strides = 1,2,2
fused_blocks = 2,3
enable_ss1 = true
enable_ss2 = true
cutmix = true
weights = 1,0.5,2,1
lr = 0.05
grad_clip = 1
test_head = gapfc
wsol_upsample = bilinear
augment = crop_flip
)");
  CHECK(c.num_classes == 4);
  CHECK(c.backbone.channels == std::vector<std::size_t>{8, 16, 32});
  CHECK(c.head.fused_blocks == std::vector<std::size_t>{2, 3});
  CHECK(c.loss.enable_ss1);
  CHECK(c.loss.weight_ss1 == 0.5);
  CHECK(c.loss.weight_ss2 == 2);
  CHECK(c.lr == 0.05);
  CHECK(c.grad_clip == 1);
  CHECK(c.test_head == TestHead::kGapFc);
  CHECK(c.wsol_upsample == UpsampleMode::kBilinear);
  CHECK(c.augment == Augment::kCropFlip);

  // Serialization parses back to the same values.
  const auto again = parse_config(to_string(c));
  CHECK(to_string(again) == to_string(c));
}

TEST_CASE("invalid configurations") {
  CHECK_THROWS_AS(parse_config("no_such_key = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("lr = fast"), ConfigError);
  CHECK_THROWS_AS(parse_config("missing equals sign"), ConfigError);
  CHECK_THROWS_AS(parse_config("test_head = both"), ConfigError);
  CHECK_THROWS_AS(parse_config("enable_sd = maybe"), ConfigError);

  const auto rejected = [](const std::string &text) {
    RunConfig c = parse_config(text);
    CHECK_THROWS_AS(finalize(c), ConfigError);
  };
  rejected("lr = 0");
  rejected("epochs = 0");
  rejected("batch_size = 0");
  rejected("cutmix = true\nbatch_size = 1");
  rejected("grad_clip = -1");
  rejected("num_classes = 7"); // synthetic has five shapes
  rejected("image_size = 30"); // not divisible by the total stride
  rejected("beta = -1");
  rejected("wsol_threshold = 1");
  rejected("dataset = cifar10");  // needs data_path
  rejected("fused_blocks = 4");

  RunConfig ok = parse_config("dataset = cifar10\ndata_path = /tmp");
  finalize(ok);
  CHECK(ok.head.num_classes == 10);
  CHECK(ok.input_size() == 32);
  CHECK(ok.backbone.input_h == 32);
}

TEST_CASE("load_config reads files") {
  const auto path = std::filesystem::temp_directory_path() / "saol_cfg_test.cfg";
  std::ofstream(path) << "epochs = 3\nseed = 42\n";
  const auto c = load_config(path);
  CHECK(c.epochs == 3);
  CHECK(c.seed == 42);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config(path), IoError);
}

TEST_CASE("shipped configurations are valid") {
  for (const char *name : {"synthetic.cfg", "synthetic_cutmix.cfg", "cifar10.cfg"}) {
    INFO(name);
    RunConfig c = load_config(std::filesystem::path(SAOL_SOURCE_DIR) / "configs" / name);
    CHECK_NOTHROW(finalize(c));
  }
}
