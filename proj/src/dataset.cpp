#include "lfi/dataset.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "lfi/error.hpp"

namespace lfi {

namespace {

constexpr char kArrayMagic[4] = {'L', 'F', 'I', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h) noexcept {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t h) noexcept {
  return fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()),
                                              text.size()),
               h);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

LabeledDataset::LabeledDataset(UniformBoxPrior prior, SeriesShape shape, std::uint64_t seed,
                               std::string model_name, nlohmann::json extra)
    : prior_(std::move(prior)),
      shape_(std::move(shape)),
      seed_(seed),
      model_(std::move(model_name)),
      extra_(std::move(extra)) {
  if (shape_.channels == 0 || shape_.timepoints == 0)
    throw InvalidArgument("dataset series shape must be non-empty");
  if (shape_.names.size() != shape_.channels)
    throw InvalidArgument("dataset needs one channel name per channel");
}

void LabeledDataset::resize(std::size_t n) {
  n_ = n;
  thetas_.assign(n * param_dim(), 0.0);
  series_.assign(n * series_length(), 0.0);
}

void LabeledDataset::set(std::size_t i, std::span<const double> theta, const SeriesView& series) {
  if (i >= n_) throw InvalidArgument("dataset index out of range");
  if (theta.size() != param_dim()) throw DimensionMismatch("dataset entry θ has wrong length");
  if (!shape_.matches(series)) throw DimensionMismatch("dataset entry series shape differs");
  if (!prior_.contains(theta)) throw OutsideSupport("dataset entry θ lies outside the prior");
  std::copy(theta.begin(), theta.end(), thetas_.begin() + static_cast<std::ptrdiff_t>(i * param_dim()));
  std::copy(series.data.begin(), series.data.end(),
            series_.begin() + static_cast<std::ptrdiff_t>(i * series_length()));
}

void LabeledDataset::push_back(std::span<const double> theta, const SeriesView& series) {
  thetas_.resize((n_ + 1) * param_dim());
  series_.resize((n_ + 1) * series_length());
  ++n_;
  set(n_ - 1, theta, series);
}

nlohmann::json LabeledDataset::manifest() const {
  nlohmann::json j = extra_;
  j["model"] = model_;
  j["species"] = shape_.names;
  j["L"] = param_dim();
  j["C"] = shape_.channels;
  j["T"] = shape_.timepoints;
  j["t0"] = shape_.t0;
  j["dt"] = shape_.dt;
  j["N"] = n_;
  j["seed"] = seed_;
  j["prior"] = prior_to_json(prior_);
  return j;
}

LabeledDataset LabeledDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > n_) throw InvalidArgument("dataset slice out of range");
  LabeledDataset out(prior_, shape_, seed_, model_, extra_);
  out.n_ = end - begin;
  out.thetas_.assign(thetas_.begin() + static_cast<std::ptrdiff_t>(begin * param_dim()),
                     thetas_.begin() + static_cast<std::ptrdiff_t>(end * param_dim()));
  out.series_.assign(series_.begin() + static_cast<std::ptrdiff_t>(begin * series_length()),
                     series_.begin() + static_cast<std::ptrdiff_t>(end * series_length()));
  return out;
}

LabeledDataset LabeledDataset::regrid(std::size_t stride, std::size_t count,
                                      std::span<const std::size_t> channels) const {
  if (stride == 0 || count == 0 || (count - 1) * stride >= shape_.timepoints)
    throw InvalidArgument("regrid exceeds the recorded grid");
  SeriesShape shape;
  shape.channels = channels.size();
  shape.timepoints = count;
  shape.t0 = shape_.t0;
  shape.dt = shape_.dt * static_cast<double>(stride);
  for (std::size_t c : channels) {
    if (c >= shape_.channels) throw InvalidArgument("regrid channel out of range");
    shape.names.push_back(shape_.names[c]);
  }
  LabeledDataset out(prior_, shape, seed_, model_, extra_);
  out.n_ = n_;
  out.thetas_ = thetas_;
  out.series_.resize(n_ * out.series_length());
  for (std::size_t i = 0; i < n_; ++i) {
    const SeriesView src = series(i);
    double* dst = out.series_.data() + i * out.series_length();
    for (std::size_t ci = 0; ci < channels.size(); ++ci) {
      auto ch = src.channel(channels[ci]);
      for (std::size_t j = 0; j < count; ++j) dst[ci * count + j] = ch[j * stride];
    }
  }
  out.extra_["regrid"] = {{"stride", stride}, {"count", count}, {"source_dt", shape_.dt}};
  return out;
}

std::uint64_t LabeledDataset::content_hash() const {
  auto bytes = [](const std::vector<double>& v) {
    return std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(v.data()),
                                          v.size() * sizeof(double));
  };
  return fnv1a(bytes(series_), fnv1a(bytes(thetas_)));
}

void write_binary_array(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                        std::span<const double> data) {
  std::size_t expected = 1;
  for (auto d : dims) expected *= d;
  if (expected != data.size()) throw DimensionMismatch("binary array dims do not match payload");
  std::string buf(kArrayMagic, 4);
  put_u32(buf, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put_u32(buf, d);
  buf.reserve(buf.size() + data.size() * 8);
  for (double v : data) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) buf.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write to " + path.string());
}

BinaryArray read_binary_array(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  if (raw.size() < 8 || std::memcmp(raw.data(), kArrayMagic, 4) != 0)
    throw IoError(path.string() + ": missing LFI1 magic");
  BinaryArray arr;
  const std::uint32_t rank = get_u32(p + 4);
  std::size_t offset = 8;
  if (raw.size() < offset + 4ull * rank) throw IoError(path.string() + ": truncated header");
  std::size_t count = 1;
  for (std::uint32_t r = 0; r < rank; ++r) {
    arr.dims.push_back(get_u32(p + offset));
    count *= arr.dims.back();
    offset += 4;
  }
  if (raw.size() != offset + count * 8) throw IoError(path.string() + ": payload size mismatch");
  arr.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[offset + 8 * i + b]) << (8 * b);
    arr.data[i] = std::bit_cast<double>(bits);
  }
  return arr;
}

nlohmann::json prior_to_json(const UniformBoxPrior& prior) {
  nlohmann::json cons = nlohmann::json::array();
  for (const auto& c : prior.constraints()) cons.push_back({{"a", c.coeffs}, {"b", c.bound}});
  return {{"dmin", prior.lower()}, {"dmax", prior.upper()}, {"constraints", cons},
          {"names", prior.names()}};
}

UniformBoxPrior prior_from_json(const nlohmann::json& j) {
  try {
    std::vector<LinearConstraint> cons;
    if (j.contains("constraints")) {
      for (const auto& c : j.at("constraints"))
        cons.push_back({c.at("a").get<std::vector<double>>(), c.at("b").get<double>()});
    }
    std::vector<std::string> names;
    if (j.contains("names")) names = j.at("names").get<std::vector<std::string>>();
    return UniformBoxPrior(j.at("dmin").get<std::vector<double>>(),
                           j.at("dmax").get<std::vector<double>>(), std::move(cons),
                           std::move(names));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed prior: ") + e.what());
  }
}

void write_dataset(const LabeledDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write manifest in " + dir.string());
    out << dataset.manifest().dump(2) << "\n";
  }
  const auto n = static_cast<std::uint32_t>(dataset.size());
  const std::uint32_t theta_dims[] = {n, static_cast<std::uint32_t>(dataset.param_dim())};
  write_binary_array(dir / "theta.bin", theta_dims, dataset.theta_data());
  const std::uint32_t series_dims[] = {n, static_cast<std::uint32_t>(dataset.shape().channels),
                                       static_cast<std::uint32_t>(dataset.shape().timepoints)};
  write_binary_array(dir / "series.bin", series_dims, dataset.series_data());
}

LabeledDataset read_dataset(const std::filesystem::path& dir) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad manifest in " + dir.string() + ": " + e.what());
  }
  static const char* kCoreKeys[] = {"model", "species", "L", "C", "T", "t0",
                                    "dt",    "N",       "seed", "prior"};
  SeriesShape shape;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string model;
  UniformBoxPrior prior;
  try {
    shape.channels = m.at("C").get<std::size_t>();
    shape.timepoints = m.at("T").get<std::size_t>();
    shape.t0 = m.at("t0").get<double>();
    shape.dt = m.at("dt").get<double>();
    shape.names = m.at("species").get<std::vector<std::string>>();
    n = m.at("N").get<std::size_t>();
    seed = m.at("seed").get<std::uint64_t>();
    model = m.at("model").get<std::string>();
    prior = prior_from_json(m.at("prior"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("incomplete manifest in " + dir.string() + ": " + e.what());
  }
  nlohmann::json extra = m;
  for (const char* k : kCoreKeys) extra.erase(k);
  LabeledDataset ds(prior, shape, seed, model, extra);
  const BinaryArray thetas = read_binary_array(dir / "theta.bin");
  const BinaryArray series = read_binary_array(dir / "series.bin");
  if (thetas.dims != std::vector<std::uint32_t>{static_cast<std::uint32_t>(n),
                                                static_cast<std::uint32_t>(prior.dim())} ||
      series.dims != std::vector<std::uint32_t>{static_cast<std::uint32_t>(n),
                                                static_cast<std::uint32_t>(shape.channels),
                                                static_cast<std::uint32_t>(shape.timepoints)})
    throw IoError("dataset arrays disagree with manifest in " + dir.string());
  ds.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.set(i, std::span<const double>(thetas.data).subspan(i * prior.dim(), prior.dim()),
           SeriesView{shape.channels, shape.timepoints, shape.t0, shape.dt,
                      std::span<const double>(series.data)
                          .subspan(i * ds.series_length(), ds.series_length())});
  }
  return ds;
}

}  // namespace lfi
