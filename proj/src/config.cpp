#include "saol/config.hpp"

#include "saol/error.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace saol {
namespace {

std::string trim(const std::string &s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) {
    return "";
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t parse_size(const std::string &key, const std::string &v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string &key, const std::string &v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string &key, const std::string &v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) {
      throw std::invalid_argument(v);
    }
    return out;
  } catch (const std::logic_error &) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string &key, const std::string &v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") {
    return true;
  }
  if (v == "false" || v == "0" || v == "no" || v == "off") {
    return false;
  }
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string &v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) {
      out.push_back(item);
    }
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string &key, const std::string &v) {
  std::vector<std::size_t> out;
  for (const auto &item : split_list(v)) {
    out.push_back(parse_size(key, item));
  }
  return out;
}

template <typename E>
E parse_enum(const std::string &key, const std::string &v,
             std::initializer_list<std::pair<const char *, E>> options) {
  std::string names;
  for (const auto &[name, value] : options) {
    if (v == name) {
      return value;
    }
    names += names.empty() ? name : std::string("|") + name;
  }
  throw ConfigError(key + ": expected " + names + ", got '" + v + "'");
}

std::string join(const std::vector<std::size_t> &xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out += (i ? "," : "") + std::to_string(xs[i]);
  }
  return out;
}

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

using Setter = std::function<void(RunConfig &, const std::string &, const std::string &)>;

const std::map<std::string, Setter> &setters() {
  static const std::map<std::string, Setter> table = {
      {"dataset",
       [](RunConfig &c, const std::string &k, const std::string &v) {
         c.dataset = parse_enum<DatasetKind>(
             k, v, {{"synthetic", DatasetKind::kSynthetic}, {"cifar10", DatasetKind::kCifar10}});
       }},
      {"data_path", [](RunConfig &c, auto &, auto &v) { c.data_path = v; }},
      {"train_count", [](RunConfig &c, auto &k, auto &v) { c.train_count = parse_size(k, v); }},
      {"test_count", [](RunConfig &c, auto &k, auto &v) { c.test_count = parse_size(k, v); }},
      {"image_size", [](RunConfig &c, auto &k, auto &v) { c.image_size = parse_size(k, v); }},
      {"num_classes", [](RunConfig &c, auto &k, auto &v) { c.num_classes = parse_size(k, v); }},
      {"data_seed", [](RunConfig &c, auto &k, auto &v) { c.data_seed = parse_u64(k, v); }},
      {"train_limit", [](RunConfig &c, auto &k, auto &v) { c.train_limit = parse_size(k, v); }},
      {"test_limit", [](RunConfig &c, auto &k, auto &v) { c.test_limit = parse_size(k, v); }},
      {"augment",
       [](RunConfig &c, const std::string &k, const std::string &v) {
         c.augment = parse_enum<Augment>(
             k, v,
             {{"none", Augment::kNone}, {"flip", Augment::kFlip}, {"crop_flip", Augment::kCropFlip}});
       }},
      {"channels", [](RunConfig &c, auto &k, auto &v) { c.backbone.channels = parse_sizes(k, v); }},
      {"width_factor",
       [](RunConfig &c, auto &k, auto &v) { c.backbone.width_factor = parse_size(k, v); }},
      {"layers_per_block",
       [](RunConfig &c, auto &k, auto &v) { c.backbone.layers_per_block = parse_size(k, v); }},
      {"strides", [](RunConfig &c, auto &k, auto &v) { c.backbone.strides = parse_sizes(k, v); }},
      {"saol_out_h", [](RunConfig &c, auto &k, auto &v) { c.head.out_h = parse_size(k, v); }},
      {"saol_out_w", [](RunConfig &c, auto &k, auto &v) { c.head.out_w = parse_size(k, v); }},
      {"fused_blocks",
       [](RunConfig &c, auto &k, auto &v) { c.head.fused_blocks = parse_sizes(k, v); }},
      {"head_mid_channels",
       [](RunConfig &c, auto &k, auto &v) { c.head.mid_channels = parse_size(k, v); }},
      {"enable_ss1", [](RunConfig &c, auto &k, auto &v) { c.loss.enable_ss1 = parse_bool(k, v); }},
      {"enable_ss2", [](RunConfig &c, auto &k, auto &v) { c.loss.enable_ss2 = parse_bool(k, v); }},
      {"enable_sd", [](RunConfig &c, auto &k, auto &v) { c.loss.enable_sd = parse_bool(k, v); }},
      {"enable_gapfc_ce",
       [](RunConfig &c, auto &k, auto &v) { c.loss.enable_gapfc_ce = parse_bool(k, v); }},
      {"cutmix", [](RunConfig &c, auto &k, auto &v) { c.cutmix = parse_bool(k, v); }},
      {"cutmix_alpha", [](RunConfig &c, auto &k, auto &v) { c.cutmix_alpha = parse_double(k, v); }},
      {"cutmix_prob", [](RunConfig &c, auto &k, auto &v) { c.cutmix_prob = parse_double(k, v); }},
      {"beta", [](RunConfig &c, auto &k, auto &v) { c.loss.beta = parse_double(k, v); }},
      {"loss_epsilon",
       [](RunConfig &c, auto &k, auto &v) { c.loss.epsilon = parse_double(k, v); }},
      {"weights",
       [](RunConfig &c, const std::string &k, const std::string &v) {
         const auto items = split_list(v);
         if (items.size() != 4) {
           throw ConfigError(k + ": expected four weights sl,ss1,ss2,sd");
         }
         c.loss.weight_sl = parse_double(k, items[0]);
         c.loss.weight_ss1 = parse_double(k, items[1]);
         c.loss.weight_ss2 = parse_double(k, items[2]);
         c.loss.weight_sd = parse_double(k, items[3]);
       }},
      {"lr", [](RunConfig &c, auto &k, auto &v) { c.lr = parse_double(k, v); }},
      {"momentum", [](RunConfig &c, auto &k, auto &v) { c.momentum = parse_double(k, v); }},
      {"weight_decay", [](RunConfig &c, auto &k, auto &v) { c.weight_decay = parse_double(k, v); }},
      {"grad_clip", [](RunConfig &c, auto &k, auto &v) { c.grad_clip = parse_double(k, v); }},
      {"epochs", [](RunConfig &c, auto &k, auto &v) { c.epochs = parse_size(k, v); }},
      {"batch_size", [](RunConfig &c, auto &k, auto &v) { c.batch_size = parse_size(k, v); }},
      {"schedule",
       [](RunConfig &c, const std::string &k, const std::string &v) {
         c.schedule = parse_enum<Schedule>(
             k, v, {{"cosine", Schedule::kCosine}, {"constant", Schedule::kConstant}});
       }},
      {"seed", [](RunConfig &c, auto &k, auto &v) { c.seed = parse_u64(k, v); }},
      {"out_dir", [](RunConfig &c, auto &, auto &v) { c.out_dir = v; }},
      {"test_head",
       [](RunConfig &c, const std::string &k, const std::string &v) {
         c.test_head =
             parse_enum<TestHead>(k, v, {{"saol", TestHead::kSaol}, {"gapfc", TestHead::kGapFc}});
       }},
      {"wsol_threshold",
       [](RunConfig &c, auto &k, auto &v) { c.wsol_threshold = parse_double(k, v); }},
      {"wsol_upsample",
       [](RunConfig &c, const std::string &k, const std::string &v) {
         c.wsol_upsample = parse_enum<UpsampleMode>(
             k, v, {{"box", UpsampleMode::kBox}, {"bilinear", UpsampleMode::kBilinear}});
       }},
      {"wsol_heatmaps", [](RunConfig &c, auto &k, auto &v) { c.wsol_heatmaps = parse_size(k, v); }},
  };
  return table;
}

} // namespace

std::size_t RunConfig::input_size() const {
  return dataset == DatasetKind::kCifar10 ? kCifarSide : image_size;
}

const char *to_string(TestHead head) { return head == TestHead::kSaol ? "saol" : "gapfc"; }

void set_config_value(RunConfig &config, const std::string &key, const std::string &value) {
  const auto it = setters().find(key);
  if (it == setters().end()) {
    throw ConfigError("unknown config key '" + key + "'");
  }
  it->second(config, key, value);
}

RunConfig parse_config(const std::string &text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

RunConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read config " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void finalize(RunConfig &config) {
  if (config.dataset == DatasetKind::kCifar10) {
    config.num_classes = kCifarClasses;
    if (config.data_path.empty()) {
      throw ConfigError("dataset cifar10 needs data_path");
    }
  } else {
    if (config.image_size < 16) {
      throw ConfigError("image_size must be >= 16");
    }
    if (config.num_classes < 2 || config.num_classes > 5) {
      throw ConfigError("synthetic num_classes must be in 2..5");
    }
    if (config.train_count == 0 || config.test_count == 0) {
      throw ConfigError("train_count and test_count must be positive");
    }
  }
  config.backbone.input_h = config.input_size();
  config.backbone.input_w = config.input_size();
  config.head.num_classes = config.num_classes;
  validate(config.backbone);
  resolve_head(config.head, config.backbone);
  validate(config.loss);
  if (!(config.lr > 0)) {
    throw ConfigError("lr must be > 0");
  }
  if (config.epochs < 1) {
    throw ConfigError("epochs must be >= 1");
  }
  if (config.batch_size < 1) {
    throw ConfigError("batch_size must be >= 1");
  }
  if (config.cutmix && config.batch_size < 2) {
    throw ConfigError("cutmix needs batch_size >= 2");
  }
  if (!(config.momentum >= 0 && config.momentum < 1)) {
    throw ConfigError("momentum must be in [0,1)");
  }
  if (!(config.weight_decay >= 0)) {
    throw ConfigError("weight_decay must be >= 0");
  }
  if (!(config.grad_clip >= 0)) {
    throw ConfigError("grad_clip must be >= 0");
  }
  if (!(config.cutmix_alpha > 0)) {
    throw ConfigError("cutmix_alpha must be > 0");
  }
  if (!(config.cutmix_prob >= 0 && config.cutmix_prob <= 1)) {
    throw ConfigError("cutmix_prob must be in [0,1]");
  }
  if (!(config.wsol_threshold > 0 && config.wsol_threshold < 1)) {
    throw ConfigError("wsol_threshold must be in (0,1)");
  }
}

std::string to_string(const RunConfig &c) {
  std::ostringstream out;
  out << "dataset = " << (c.dataset == DatasetKind::kCifar10 ? "cifar10" : "synthetic") << '\n';
  if (!c.data_path.empty()) {
    out << "data_path = " << c.data_path.string() << '\n';
  }
  out << "train_count = " << c.train_count << '\n'
      << "test_count = " << c.test_count << '\n'
      << "image_size = " << c.image_size << '\n'
      << "num_classes = " << c.num_classes << '\n'
      << "data_seed = " << c.data_seed << '\n'
      << "train_limit = " << c.train_limit << '\n'
      << "test_limit = " << c.test_limit << '\n'
      << "augment = "
      << (c.augment == Augment::kNone ? "none" : c.augment == Augment::kFlip ? "flip" : "crop_flip")
      << '\n'
      << "channels = " << join(c.backbone.channels) << '\n'
      << "width_factor = " << c.backbone.width_factor << '\n'
      << "layers_per_block = " << c.backbone.layers_per_block << '\n'
      << "strides = " << join(c.backbone.strides) << '\n'
      << "saol_out_h = " << c.head.out_h << '\n'
      << "saol_out_w = " << c.head.out_w << '\n'
      << "fused_blocks = " << join(c.head.fused_blocks) << '\n'
      << "head_mid_channels = " << c.head.mid_channels << '\n'
      << "enable_ss1 = " << (c.loss.enable_ss1 ? "true" : "false") << '\n'
      << "enable_ss2 = " << (c.loss.enable_ss2 ? "true" : "false") << '\n'
      << "enable_sd = " << (c.loss.enable_sd ? "true" : "false") << '\n'
      << "enable_gapfc_ce = " << (c.loss.enable_gapfc_ce ? "true" : "false") << '\n'
      << "cutmix = " << (c.cutmix ? "true" : "false") << '\n'
      << "cutmix_alpha = " << num(c.cutmix_alpha) << '\n'
      << "cutmix_prob = " << num(c.cutmix_prob) << '\n'
      << "beta = " << num(c.loss.beta) << '\n'
      << "loss_epsilon = " << num(c.loss.epsilon) << '\n'
      << "weights = " << num(c.loss.weight_sl) << ',' << num(c.loss.weight_ss1) << ','
      << num(c.loss.weight_ss2) << ',' << num(c.loss.weight_sd) << '\n'
      << "lr = " << num(c.lr) << '\n'
      << "momentum = " << num(c.momentum) << '\n'
      << "weight_decay = " << num(c.weight_decay) << '\n'
      << "grad_clip = " << num(c.grad_clip) << '\n'
      << "epochs = " << c.epochs << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "schedule = " << (c.schedule == Schedule::kCosine ? "cosine" : "constant") << '\n'
      << "seed = " << c.seed << '\n'
      << "out_dir = " << c.out_dir.string() << '\n'
      << "test_head = " << to_string(c.test_head) << '\n'
      << "wsol_threshold = " << num(c.wsol_threshold) << '\n'
      << "wsol_upsample = " << (c.wsol_upsample == UpsampleMode::kBox ? "box" : "bilinear") << '\n'
      << "wsol_heatmaps = " << c.wsol_heatmaps << '\n';
  return out.str();
}

} // namespace saol
