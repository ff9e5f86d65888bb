#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfi/core.hpp"

namespace lfi {

/// Grid and channel layout shared by every series in a dataset.
struct SeriesShape {
  std::size_t channels = 0;
  std::size_t timepoints = 0;
  double t0 = 0.0;
  double dt = 1.0;
  std::vector<std::string> names;

  static SeriesShape of(const TimeSeries& ts) {
    return {ts.channels(), ts.timepoints(), ts.t0(), ts.dt(), ts.names()};
  }
  bool matches(const SeriesView& v) const {
    return v.channels == channels && v.timepoints == timepoints && v.t0 == t0 && v.dt == dt;
  }
  friend bool operator==(const SeriesShape&, const SeriesShape&) = default;
};

/// Collection of (θ, y) pairs drawn from one prior. Storage is contiguous:
/// θ as an N×L row-major block and series as an N×C×T block.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(UniformBoxPrior prior, SeriesShape shape, std::uint64_t seed,
                 std::string model_name, nlohmann::json extra = nlohmann::json::object());

  /// Resizes to n zero entries; fill with `set`.
  void resize(std::size_t n);
  void set(std::size_t i, std::span<const double> theta, const SeriesView& series);
  void push_back(std::span<const double> theta, const SeriesView& series);

  std::size_t size() const noexcept { return n_; }
  bool empty() const noexcept { return n_ == 0; }
  std::size_t param_dim() const noexcept { return prior_.dim(); }
  std::size_t series_length() const noexcept { return shape_.channels * shape_.timepoints; }

  std::span<const double> theta(std::size_t i) const {
    return std::span<const double>(thetas_).subspan(i * param_dim(), param_dim());
  }
  SeriesView series(std::size_t i) const {
    return {shape_.channels, shape_.timepoints, shape_.t0, shape_.dt,
            std::span<const double>(series_).subspan(i * series_length(), series_length())};
  }
  TimeSeries time_series(std::size_t i) const { return to_series(series(i), shape_.names); }

  const UniformBoxPrior& prior() const noexcept { return prior_; }
  const SeriesShape& shape() const noexcept { return shape_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& model_name() const noexcept { return model_; }
  const nlohmann::json& extra() const noexcept { return extra_; }
  nlohmann::json& extra() noexcept { return extra_; }
  const std::vector<double>& theta_data() const noexcept { return thetas_; }
  const std::vector<double>& series_data() const noexcept { return series_; }

  /// Full manifest: model, species, L, C, T, t0, dt, N, seed, prior, plus extras.
  nlohmann::json manifest() const;

  /// Entries [begin, end) as a new dataset with the same metadata.
  LabeledDataset slice(std::size_t begin, std::size_t end) const;

  /// Regrids every series: keeps columns 0, stride, 2·stride, ... (count of them)
  /// and the listed channels. Used to derive coarser or shorter sampling designs
  /// from a fine simulation.
  LabeledDataset regrid(std::size_t stride, std::size_t count,
                        std::span<const std::size_t> channels) const;

  /// FNV-1a over θ and series payloads; equal hashes mean byte-identical data.
  std::uint64_t content_hash() const;

 private:
  UniformBoxPrior prior_;
  SeriesShape shape_;
  std::uint64_t seed_ = 0;
  std::string model_;
  nlohmann::json extra_ = nlohmann::json::object();
  std::size_t n_ = 0;
  std::vector<double> thetas_;
  std::vector<double> series_;
};

/// `LFI1` binary array: magic, u32 rank, u32 dims, row-major float64 payload (all LE).
struct BinaryArray {
  std::vector<std::uint32_t> dims;
  std::vector<double> data;
};
void write_binary_array(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                        std::span<const double> data);
BinaryArray read_binary_array(const std::filesystem::path& path);

nlohmann::json prior_to_json(const UniformBoxPrior& prior);
UniformBoxPrior prior_from_json(const nlohmann::json& j);

/// Directory layout: manifest.json, theta.bin, series.bin.
void write_dataset(const LabeledDataset& dataset, const std::filesystem::path& dir);
LabeledDataset read_dataset(const std::filesystem::path& dir);

std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                    std::uint64_t h = 0xcbf29ce484222325ull) noexcept;
std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ull) noexcept;
std::string hex64(std::uint64_t v);

}  // namespace lfi
