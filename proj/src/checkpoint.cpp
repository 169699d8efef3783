#include "saol/checkpoint.hpp"

#include "saol/error.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace saol {
namespace {

constexpr char kMagic[4] = {'S', 'A', 'O', 'L'};

class Writer {
public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const std::string &s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void str(const std::string &s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }
  const std::string &bytes() const { return bytes_; }

private:
  std::string bytes_;
};

class Reader {
public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    }
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    }
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() { return raw(u32()); }
  bool done() const { return pos_ == bytes_.size(); }

private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated");
    }
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

} // namespace

void save_checkpoint(const Checkpoint &checkpoint, const std::filesystem::path &path) {
  Writer w;
  w.raw(std::string(kMagic, 4));
  w.u32(checkpoint.wide ? kCheckpointVersionWide : kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto &t : checkpoint.tensors) {
    if (numel(t.shape) != t.values.size()) {
      throw ArgumentError("checkpoint tensor " + t.name + " has inconsistent shape");
    }
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (const auto extent : t.shape) {
      w.u32(static_cast<std::uint32_t>(extent));
    }
    for (const double v : t.values) {
      if (checkpoint.wide) {
        w.f64(v);
      } else {
        w.f32(static_cast<float>(v));
      }
    }
  }
  w.u32(checkpoint.epoch);
  w.u64(checkpoint.step);
  w.str(checkpoint.rng_state);

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot write checkpoint " + tmp.string());
    }
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) {
      throw IoError("short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open checkpoint " + path.string());
  }
  Reader r(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
  if (r.raw(4) != std::string(kMagic, 4)) {
    throw FormatError("not a checkpoint (bad magic): " + path.string());
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion && version != kCheckpointVersionWide) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.wide = version == kCheckpointVersionWide;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray t;
    t.name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) {
      throw FormatError("checkpoint tensor " + t.name + " has rank " + std::to_string(rank));
    }
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(r.u32());
    }
    t.values.resize(numel(t.shape));
    for (auto &v : t.values) {
      v = ck.wide ? r.f64() : static_cast<double>(r.f32());
    }
    ck.tensors.push_back(std::move(t));
  }
  ck.epoch = r.u32();
  ck.step = r.u64();
  ck.rng_state = r.str();
  if (!r.done()) {
    throw FormatError("trailing bytes in checkpoint " + path.string());
  }
  return ck;
}

template <typename T> std::vector<NamedArray> export_params(const ParamStore<T> &params) {
  std::vector<NamedArray> out;
  for (const auto &[name, t] : params.entries()) {
    out.push_back({name, t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
  }
  return out;
}

template <typename T>
void import_params(const std::vector<NamedArray> &arrays, ParamStore<T> &params,
                   const std::string &prefix) {
  for (auto &[name, t] : params.entries()) {
    const auto it = std::find_if(arrays.begin(), arrays.end(),
                                 [&](const NamedArray &a) { return a.name == prefix + name; });
    if (it == arrays.end()) {
      throw FormatError("checkpoint lacks tensor " + prefix + name);
    }
    if (it->shape != t.shape()) {
      throw FormatError("checkpoint tensor " + prefix + name + " has shape " +
                        shape_str(it->shape) + ", model expects " + shape_str(t.shape()));
    }
    auto dst = t.mutable_data();
    std::transform(it->values.begin(), it->values.end(), dst.begin(),
                   [](double v) { return static_cast<T>(v); });
  }
}

void append_metrics(const std::filesystem::path &path, const MetricsRow &row) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) {
    throw IoError("cannot append to metrics log " + path.string());
  }
  if (fresh) {
    out << kMetricsHeader << '\n';
  }
  char line[512];
  std::snprintf(line, sizeof(line), "%zu,%llu,%.9g,%.9g,%.9g,%.9g,%.6f,%.6f\n", row.epoch,
                static_cast<unsigned long long>(row.step), row.loss_sl, row.loss_ss1, row.loss_ss2,
                row.loss_sd, row.acc_saol, row.acc_gapfc);
  out << line;
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open metrics log " + path.string());
  }
  std::string line;
  std::getline(in, line);
  if (line != kMetricsHeader) {
    throw FormatError("unexpected metrics header in " + path.string());
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    MetricsRow row;
    fields >> row.epoch >> row.step >> row.loss_sl >> row.loss_ss1 >> row.loss_ss2 >>
        row.loss_sd >> row.acc_saol >> row.acc_gapfc;
    if (!fields) {
      throw FormatError("malformed metrics row in " + path.string());
    }
    rows.push_back(row);
  }
  return rows;
}

template std::vector<NamedArray> export_params<float>(const ParamStore<float> &);
template std::vector<NamedArray> export_params<double>(const ParamStore<double> &);
template void import_params<float>(const std::vector<NamedArray> &, ParamStore<float> &,
                                   const std::string &);
template void import_params<double>(const std::vector<NamedArray> &, ParamStore<double> &,
                                    const std::string &);

} // namespace saol
