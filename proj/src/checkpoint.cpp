// checkpoint.cpp

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

#include "tsv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace tsv::io {

namespace {

template <typename U>
void put(std::ostream& os, U v) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = char((v >> (8 * i)) & 0xFF);
  os.write(bytes, sizeof(U));
}

template <typename U>
U get(std::istream& is) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw CheckpointError("checkpoint is truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= U(bytes[i]) << (8 * i);
  return v;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << v;
  return s.str();
}

}  // namespace

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

void save_checkpoint(std::ostream& os, std::uint64_t digest, const std::vector<const nn::ParameterSet*>& sets) {
  os.write(kCheckpointMagic, 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, digest);
  std::uint64_t count = 0;
  for (const auto* s : sets) count += s->size();
  put<std::uint64_t>(os, count);
  for (const auto* s : sets) {
    for (const auto& p : s->items()) {
      put<std::uint32_t>(os, std::uint32_t(p.name.size()));
      os.write(p.name.data(), std::streamsize(p.name.size()));
      const auto& shape = p.tensor.shape();
      put<std::uint32_t>(os, std::uint32_t(shape.size()));
      for (auto d : shape) put<std::uint64_t>(os, std::uint64_t(d));
      for (double v : p.tensor.data()) put<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    }
  }
  if (!os) throw CheckpointError("failed to write checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, std::uint64_t digest,
                     const std::vector<const nn::ParameterSet*>& sets) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path.string() + " for writing");
  save_checkpoint(os, digest, sets);
}

void load_checkpoint(std::istream& is, std::uint64_t digest, const std::vector<nn::ParameterSet*>& sets) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto stored = get<std::uint64_t>(is);
  if (stored != digest)
    throw CheckpointError("checkpoint config digest " + hex(stored) + " does not match the configuration (" +
                          hex(digest) + ")");

  std::map<std::string, ad::Tensor> wanted;
  for (auto* s : sets)
    for (auto& p : s->items()) wanted.emplace(p.name, p.tensor);

  const auto count = get<std::uint64_t>(is);
  for (std::uint64_t r = 0; r < count; ++r) {
    std::string name(get<std::uint32_t>(is), '\0');
    if (!is.read(name.data(), std::streamsize(name.size()))) throw CheckpointError("checkpoint is truncated");
    auto it = wanted.find(name);
    if (it == wanted.end()) throw CheckpointError("checkpoint has unknown tensor " + name);
    ad::Shape shape(get<std::uint32_t>(is));
    for (auto& d : shape) d = ad::Index(get<std::uint64_t>(is));
    ad::Tensor& t = it->second;
    if (shape != t.shape())
      throw CheckpointError("tensor " + name + " has shape " + ad::shape_string(shape) + ", expected " +
                            ad::shape_string(t.shape()));
    for (double& v : t.mutable_data()) v = std::bit_cast<double>(get<std::uint64_t>(is));
    wanted.erase(it);
  }
  if (!wanted.empty()) throw CheckpointError("checkpoint lacks tensor " + wanted.begin()->first);
}

void load_checkpoint(const std::filesystem::path& path, std::uint64_t digest,
                     const std::vector<nn::ParameterSet*>& sets) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  load_checkpoint(is, digest, sets);
}

}  // namespace tsv::io
