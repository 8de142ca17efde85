#include "pbl/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pbl/error.hpp"
#include "pbl/sha256.hpp"

namespace pbl {

namespace {

constexpr char kSeparator[2] = {'\n', '\0'};

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

const NamedTensor& TensorFile::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  fail(ErrorKind::integrity, "tensor '" + name + "' missing from file");
}

std::vector<std::byte> encode_payload(const std::vector<NamedTensor>& tensors) {
  std::size_t total = 0;
  for (const auto& t : tensors) total += t.data.size();
  std::vector<std::byte> out(total * sizeof(float));
  std::size_t pos = 0;
  for (const auto& t : tensors) {
    for (float f : t.data) {
      const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(f));
      std::memcpy(out.data() + pos, &bits, sizeof bits);
      pos += sizeof bits;
    }
  }
  return out;
}

std::string write_tensor_file(const std::filesystem::path& path, const nlohmann::json& header,
                              const std::vector<NamedTensor>& tensors) {
  if (!header.is_object() || header.contains("tensors")) {
    throw std::invalid_argument("tensor file header must be an object without a 'tensors' key");
  }
  nlohmann::json full = header;
  nlohmann::json manifest = nlohmann::json::array();
  std::int64_t offset = 0;
  for (const auto& t : tensors) {
    if (element_count(t.shape) != static_cast<std::int64_t>(t.data.size())) {
      throw std::invalid_argument("tensor '" + t.name + "' shape does not match its data");
    }
    manifest.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += static_cast<std::int64_t>(t.data.size() * sizeof(float));
  }
  full["tensors"] = std::move(manifest);

  const auto payload = encode_payload(tensors);
  const std::string text = full.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(kSeparator, sizeof kSeparator);
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) fail(ErrorKind::data, "short write to " + path.string());
  return sha256_hex(payload);
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::format, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const auto sep = bytes.find(std::string_view(kSeparator, sizeof kSeparator));
  if (sep == std::string::npos) fail(ErrorKind::format, path.string() + ": missing header separator");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, sep));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, path.string() + ": header is not valid JSON (" + e.what() + ")");
  }
  if (!header.is_object() || !header.contains("tensors") || !header["tensors"].is_array()) {
    fail(ErrorKind::format, path.string() + ": header lacks a tensor manifest");
  }

  const std::string_view payload(bytes.data() + sep + sizeof kSeparator, bytes.size() - sep - sizeof kSeparator);

  TensorFile file;
  std::int64_t expected_offset = 0;
  for (const auto& entry : header["tensors"]) {
    NamedTensor t;
    try {
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = entry.at("offset").get<std::int64_t>();
      if (offset != expected_offset) {
        fail(ErrorKind::integrity, path.string() + ": tensor '" + t.name + "' offset out of manifest order");
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::format, path.string() + ": malformed manifest entry (" + e.what() + ")");
    }
    for (auto d : t.shape) {
      if (d < 0) fail(ErrorKind::format, path.string() + ": negative dimension in '" + t.name + "'");
    }
    const auto count = element_count(t.shape);
    const auto nbytes = count * static_cast<std::int64_t>(sizeof(float));
    if (expected_offset + nbytes > static_cast<std::int64_t>(payload.size())) {
      fail(ErrorKind::integrity, path.string() + ": truncated payload for tensor '" + t.name + "'");
    }
    t.data.resize(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, payload.data() + expected_offset + i * 4, sizeof bits);
      t.data[static_cast<std::size_t>(i)] = std::bit_cast<float>(to_little_endian(bits));
    }
    expected_offset += nbytes;
    file.tensors.push_back(std::move(t));
  }
  if (expected_offset != static_cast<std::int64_t>(payload.size())) {
    fail(ErrorKind::integrity, path.string() + ": payload has trailing bytes beyond the manifest");
  }

  file.payload_sha256 = sha256_hex(payload);
  header.erase("tensors");
  file.header = std::move(header);
  return file;
}

}  // namespace pbl
