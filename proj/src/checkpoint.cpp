#include <bit>
#include <cstdint>

#include "json.hpp"

#include "dermpipe/errors.hpp"
#include "dermpipe/fileio.hpp"
#include "dermpipe/fusion_head.hpp"

namespace dermpipe {
namespace {

constexpr std::string_view kMagic = "DHCK";
constexpr std::uint32_t kVersion = 1;

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::string_view bytes, std::size_t pos, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  return v;
}

}  // namespace

std::string serialize_checkpoint(const HeadParams& params) {
  nlohmann::json desc;
  desc["format"] = "dermpipe-fusion-head";
  desc["dims"] = {{"features", params.dims.features},
                  {"hidden", params.dims.hidden},
                  {"fusion", params.dims.fusion},
                  {"classes", params.dims.classes}};
  desc["dtype"] = "float32-le";
  nlohmann::json list = nlohmann::json::array();
  std::string payload;
  for (const auto& t : params.tensors()) {
    list.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", payload.size()}, {"count", t.size}});
    for (std::size_t k = 0; k < t.size; ++k) {
      put_le(payload, std::bit_cast<std::uint32_t>(static_cast<float>(t.data[k])), 4);
    }
  }
  desc["tensors"] = std::move(list);
  desc["payload_bytes"] = payload.size();
  const std::string json = desc.dump();

  std::string out(kMagic);
  put_le(out, kVersion, 4);
  put_le(out, json.size(), 8);
  out += json;
  out += payload;
  return out;
}

HeadParams parse_checkpoint(std::string_view bytes, std::string_view source_name) {
  const std::string src(source_name);
  if (bytes.size() < 16 || bytes.substr(0, 4) != kMagic) throw PipelineError(ErrorKind::Io, src + ": not a checkpoint");
  if (get_le(bytes, 4, 4) != kVersion) throw PipelineError(ErrorKind::Io, src + ": unsupported checkpoint version");
  const std::uint64_t json_len = get_le(bytes, 8, 8);
  if (bytes.size() - 16 < json_len) throw PipelineError(ErrorKind::Io, src + ": truncated descriptor");
  nlohmann::json desc;
  try {
    desc = nlohmann::json::parse(bytes.substr(16, json_len));
  } catch (const nlohmann::json::exception& e) {
    throw PipelineError(ErrorKind::Io, src + ": bad descriptor: " + e.what());
  }
  const std::string_view payload = bytes.substr(16 + json_len);

  HeadDims dims;
  try {
    dims.features = desc.at("dims").at("features").get<int>();
    dims.hidden = desc.at("dims").at("hidden").get<int>();
    dims.fusion = desc.at("dims").at("fusion").get<int>();
    dims.classes = desc.at("dims").at("classes").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw PipelineError(ErrorKind::Io, src + ": bad dims: " + e.what());
  }
  HeadParams params = HeadParams::zeros(dims);
  auto tensors = params.tensors();
  const auto& list = desc.at("tensors");
  if (list.size() != tensors.size()) throw PipelineError(ErrorKind::ShapeMismatch, src + ": tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& entry = list[i];
    auto& t = tensors[i];
    if (entry.at("name").get<std::string>() != t.name || entry.at("shape").get<std::vector<int>>() != t.shape) {
      throw PipelineError(ErrorKind::ShapeMismatch, src + ": unexpected tensor " + entry.at("name").get<std::string>());
    }
    const auto offset = entry.at("offset").get<std::uint64_t>();
    if (offset > payload.size() || (payload.size() - offset) / 4 < t.size) {
      throw PipelineError(ErrorKind::Io, src + ": tensor " + t.name + " runs past the payload");
    }
    for (std::size_t k = 0; k < t.size; ++k) {
      t.data[k] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(payload, offset + 4 * k, 4)));
    }
  }
  params.validate();
  return params;
}

void save_checkpoint(const HeadParams& params, const std::string& path) {
  write_file_atomic(path, serialize_checkpoint(params));
}

HeadParams load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path), path); }

}  // namespace dermpipe
