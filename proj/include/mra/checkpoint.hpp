#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "mra/params.hpp"

namespace mra {

// On-disk layout: <dir>/manifest.json lists records in order plus free-form
// metadata; <dir>/tensors.bin holds the records back to back:
//   u32 name_len, name bytes (UTF-8), u32 rank, u32 dims[rank], f32 payload
// All integers and floats little-endian.
struct Checkpoint {
  std::vector<NamedTensor> tensors;
  nlohmann::json meta = nlohmann::json::object();

  const ad::Tensor& get(std::string_view name) const;
  bool has(std::string_view name) const;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

std::vector<char> encode_tensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_tensors(const std::vector<char>& blob);

}  // namespace mra
