// SPDX-License-Identifier: Apache-2.0
//
// Binary model container. All integers are little-endian u32, all reals
// little-endian IEEE-754 binary32:
//
//   magic      4 bytes  "EGSM"
//   version    u32      kModelFormatVersion
//   count      u32      number of arrays
//   count x {
//     name_len u32, name (name_len bytes, ASCII, no terminator)
//     rows u32, cols u32
//     data     rows * cols f32, column-major
//   }
//
// Arrays: "config" (1 x 14: feature_count, encoder widths x3, gru_hidden,
// decoder widths x3, head widths x3, dropout, bn_momentum, bn_epsilon),
// "window_length" (1 x 1), then every buffer and trainable array under its
// ModelParams name.
#pragma once

#include "egoseg/errors.hpp"
#include "egoseg/network.hpp"

#include <filesystem>
#include <iosfwd>

namespace egoseg {

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelFile {
  ModelParams<float> params;
  std::size_t window_length = 8;
};

void write_model(std::ostream& out, const ModelFile& model);
void write_model(const std::filesystem::path& path, const ModelFile& model);

/// Throws FormatError on a bad magic, unknown version, missing or
/// misshapen array.
ModelFile read_model(std::istream& in);
ModelFile read_model(const std::filesystem::path& path);

}  // namespace egoseg
