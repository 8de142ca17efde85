#pragma once

// Container shared by model checkpoints and prompt snapshots:
//
//   <UTF-8 JSON header> '\n' '\0' <payload>
//
// The header holds caller fields plus a "tensors" manifest of
// {name, shape, offset} entries; offsets are byte offsets into the payload.
// The payload is every tensor's little-endian float32 data in manifest order,
// and the file's content hash is SHA-256 over the payload bytes only.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace pbl {

struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

struct TensorFile {
  nlohmann::json header;  // without the "tensors" manifest
  std::vector<NamedTensor> tensors;
  std::string payload_sha256;

  const NamedTensor& get(const std::string& name) const;
};

/// Little-endian float32 serialization of the tensors, in order.
std::vector<std::byte> encode_payload(const std::vector<NamedTensor>& tensors);

/// Writes the file and returns the payload hash. `header` must be an object and
/// must not contain a "tensors" key.
std::string write_tensor_file(const std::filesystem::path& path, const nlohmann::json& header,
                              const std::vector<NamedTensor>& tensors);

/// Parses and validates a tensor file. Throws format errors for malformed headers
/// and integrity errors for payload/manifest mismatches.
TensorFile read_tensor_file(const std::filesystem::path& path);

}  // namespace pbl
