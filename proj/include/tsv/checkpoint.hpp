// tsv/checkpoint.hpp

// Copyright 2026  tsvkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef TSV_CHECKPOINT_HPP_
#define TSV_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "tsv/layers.hpp"

namespace tsv::io {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[4] = {'T', 'S', 'V', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// 64-bit FNV-1a of `text`.
std::uint64_t fnv1a64(std::string_view text);

// Layout, all integers and floats little-endian:
//   "TSV1" u32 version u64 digest u64 count
//   count x { u32 name_len, name, u32 rank, u64 dims[rank], f64 values[numel] }
// Records follow the parameter order of the sets.
void save_checkpoint(std::ostream& os, std::uint64_t digest, const std::vector<const nn::ParameterSet*>& sets);
void save_checkpoint(const std::filesystem::path& path, std::uint64_t digest,
                     const std::vector<const nn::ParameterSet*>& sets);

/// Fills every parameter of `sets` from the records. A digest mismatch, an
/// unknown or missing name, a shape mismatch or a truncated file is an error.
void load_checkpoint(std::istream& is, std::uint64_t digest, const std::vector<nn::ParameterSet*>& sets);
void load_checkpoint(const std::filesystem::path& path, std::uint64_t digest,
                     const std::vector<nn::ParameterSet*>& sets);

}  // namespace tsv::io

#endif  // TSV_CHECKPOINT_HPP_
