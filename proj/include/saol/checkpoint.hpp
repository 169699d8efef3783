#pragma once

// Versioned little-endian checkpoint file:
//
//   "SAOL"            4 bytes magic
//   u32 version       1: f32 payloads, 2: f64 payloads
//   u32 tensor_count
//   tensor_count x {
//     u32 name_length, name bytes (UTF-8, no terminator)
//     u32 rank, rank x u32 extents
//     product(extents) x f32 or f64 payload (IEEE-754 bits, little-endian)
//   }
//   u32 epoch
//   u64 step
//   u32 rng_state_length, rng_state bytes (textual std::mt19937_64 state)
//
// Optimizer slots are stored as ordinary tensors named "momentum/<param>".

#include "saol/params.hpp"
#include "saol/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace saol {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kCheckpointVersionWide = 2;
inline constexpr const char *kMomentumPrefix = "momentum/";

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
  bool operator==(const NamedArray &) const = default;
};

struct Checkpoint {
  bool wide = false;               // f64 payloads (version 2)
  std::vector<NamedArray> tensors; // parameters followed by optimizer slots
  std::uint32_t epoch = 0;
  std::uint64_t step = 0;
  std::string rng_state;
  bool operator==(const Checkpoint &) const = default;
};

// Writes to a sibling temporary file and renames it into place. Without
// `wide`, values are stored as f32.
void save_checkpoint(const Checkpoint &checkpoint, const std::filesystem::path &path);
Checkpoint load_checkpoint(const std::filesystem::path &path);

template <typename T> std::vector<NamedArray> export_params(const ParamStore<T> &params);

// Copies values into an existing store. Every parameter must be present with
// a matching shape, otherwise FormatError.
template <typename T>
void import_params(const std::vector<NamedArray> &arrays, ParamStore<T> &params,
                   const std::string &prefix = "");

// One row of the per-epoch metrics log.
struct MetricsRow {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double loss_sl = 0;
  double loss_ss1 = 0;
  double loss_ss2 = 0;
  double loss_sd = 0;
  double acc_saol = 0;
  double acc_gapfc = 0;
};

inline constexpr const char *kMetricsHeader =
    "epoch,step,loss_sl,loss_ss1,loss_ss2,loss_sd,acc_saol,acc_gapfc";

// Appends one row; writes the header first when the file is new or empty.
void append_metrics(const std::filesystem::path &path, const MetricsRow &row);
std::vector<MetricsRow> read_metrics(const std::filesystem::path &path);

} // namespace saol
