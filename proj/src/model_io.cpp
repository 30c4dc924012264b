// SPDX-License-Identifier: Apache-2.0
#include "egoseg/model_io.hpp"

#include <fmt/format.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

namespace egoseg {

namespace {

constexpr std::array<char, 4> kMagic{'E', 'G', 'S', 'M'};
constexpr std::size_t kConfigSize = 14;
constexpr std::uint32_t kMaxDimension = 1u << 24;

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(sizeof(T) == 4);
  auto bits = std::bit_cast<std::uint32_t>(value);
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  out.write(bytes, 4);
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw FormatError("model file is truncated");
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

void put_array(std::ostream& out, const std::string& name, const MatrixX<float>& m) {
  put_le(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_le(out, static_cast<std::uint32_t>(m.rows()));
  put_le(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) put_le(out, m.data()[i]);
}

MatrixX<float> config_array(const ModelConfig& c) {
  MatrixX<float> m(1, kConfigSize);
  m << static_cast<float>(c.feature_count), static_cast<float>(c.encoder_widths[0]),
      static_cast<float>(c.encoder_widths[1]), static_cast<float>(c.encoder_widths[2]),
      static_cast<float>(c.gru_hidden), static_cast<float>(c.decoder_widths[0]),
      static_cast<float>(c.decoder_widths[1]), static_cast<float>(c.decoder_widths[2]),
      static_cast<float>(c.head_widths[0]), static_cast<float>(c.head_widths[1]),
      static_cast<float>(c.head_widths[2]), static_cast<float>(c.dropout), static_cast<float>(c.bn_momentum),
      static_cast<float>(c.bn_epsilon);
  return m;
}

ModelConfig config_from_array(const MatrixX<float>& m) {
  if (m.size() != static_cast<Eigen::Index>(kConfigSize)) throw FormatError("model config array has the wrong size");
  auto as_int = [&](Eigen::Index i) {
    const float v = m.data()[i];
    if (!(v >= 1.0f && v <= static_cast<float>(kMaxDimension)) || v != static_cast<float>(static_cast<int>(v)))
      throw FormatError(fmt::format("model config entry {} is not a valid width", i));
    return static_cast<int>(v);
  };
  ModelConfig c;
  c.feature_count = as_int(0);
  for (int i = 0; i < 3; ++i) c.encoder_widths[static_cast<std::size_t>(i)] = as_int(1 + i);
  c.gru_hidden = as_int(4);
  for (int i = 0; i < 3; ++i) c.decoder_widths[static_cast<std::size_t>(i)] = as_int(5 + i);
  for (int i = 0; i < 3; ++i) c.head_widths[static_cast<std::size_t>(i)] = as_int(8 + i);
  // Shortest decimal of the stored f32, so 0.3 reads back as the double 0.3.
  auto as_real = [&](Eigen::Index i) { return std::stod(fmt::format("{}", m.data()[i])); };
  c.dropout = as_real(11);
  c.bn_momentum = as_real(12);
  c.bn_epsilon = as_real(13);
  return c;
}

}  // namespace

void write_model(std::ostream& out, const ModelFile& model) {
  check_params(model.params);
  if (model.window_length < 1) throw std::invalid_argument("write_model: window length must be at least 1");
  std::uint32_t count = 2;
  model.params.visit_buffers([&](const std::string&, const MatrixX<float>&) { ++count; });
  model.params.visit_trainable([&](const std::string&, const MatrixX<float>&) { ++count; });
  out.write(kMagic.data(), kMagic.size());
  put_le(out, kModelFormatVersion);
  put_le(out, count);
  put_array(out, "config", config_array(model.params.config));
  put_array(out, "window_length", MatrixX<float>::Constant(1, 1, static_cast<float>(model.window_length)));
  model.params.visit_buffers([&](const std::string& name, const MatrixX<float>& m) { put_array(out, name, m); });
  model.params.visit_trainable([&](const std::string& name, const MatrixX<float>& m) { put_array(out, name, m); });
  if (!out) throw std::runtime_error("write_model: write failed");
}

void write_model(const std::filesystem::path& path, const ModelFile& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  write_model(out, model);
}

ModelFile read_model(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError("not a model file (bad magic)");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kModelFormatVersion)
    throw FormatError(fmt::format("unsupported model format version {} (expected {})", version, kModelFormatVersion));
  const auto count = get_le<std::uint32_t>(in);

  std::map<std::string, MatrixX<float>> arrays;
  for (std::uint32_t a = 0; a < count; ++a) {
    const auto name_len = get_le<std::uint32_t>(in);
    if (name_len > 256) throw FormatError("model array name is too long");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw FormatError("model file is truncated");
    const auto rows = get_le<std::uint32_t>(in);
    const auto cols = get_le<std::uint32_t>(in);
    if (rows > kMaxDimension || cols > kMaxDimension || std::uint64_t{rows} * cols > kMaxDimension)
      throw FormatError(fmt::format("model array '{}' is implausibly large", name));
    MatrixX<float> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_le<float>(in);
    if (!arrays.emplace(name, std::move(m)).second) throw FormatError(fmt::format("duplicate model array '{}'", name));
  }

  auto take = [&](const std::string& name) -> MatrixX<float>& {
    const auto it = arrays.find(name);
    if (it == arrays.end()) throw FormatError(fmt::format("model file lacks array '{}'", name));
    return it->second;
  };
  ModelFile model;
  ModelConfig config;
  try {
    config = config_from_array(take("config"));
    validate(config);
  } catch (const ConfigError& e) {
    throw FormatError(fmt::format("model config is invalid: {}", e.what()));
  }
  const MatrixX<float>& window = take("window_length");
  if (window.size() != 1 || !(window(0, 0) >= 1.0f)) throw FormatError("model window length is invalid");
  model.window_length = static_cast<std::size_t>(window(0, 0));

  model.params = init_params<float>(config, 0);
  auto load = [&](const std::string& name, MatrixX<float>& target) {
    const MatrixX<float>& source = take(name);
    if (source.rows() != target.rows() || source.cols() != target.cols())
      throw FormatError(fmt::format("model array '{}' has shape {}x{}, expected {}x{}", name, source.rows(),
                                    source.cols(), target.rows(), target.cols()));
    target = source;
  };
  model.params.visit_buffers(load);
  model.params.visit_trainable(load);
  try {
    check_params(model.params);
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  return model;
}

ModelFile read_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open model '{}'", path.string()));
  return read_model(in);
}

}  // namespace egoseg
