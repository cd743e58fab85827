#include "mvtri/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mvtri {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'V', 'T', 'R', 'I', 'C', 'K', '1'};

static_assert(sizeof(float) == 4, "checkpoint format requires 32-bit float");

void write_u64_le(std::ostream& os, uint64_t v) {
  uint8_t buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<uint8_t>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64_le(std::istream& is) {
  uint8_t buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

json header_json(const CheckpointMeta& meta, const ad::ParamStore& params) {
  json h;
  h["config"] = json::parse(meta.config_json.empty() ? "{}" : meta.config_json);
  h["step"] = meta.step;
  h["schedule"] = {{"timesteps", meta.schedule_timesteps},
                   {"variant", meta.schedule_variant}};
  json tensors = json::array();
  for (const auto& [name, var] : params.items())
    tensors.push_back({{"name", name}, {"shape", var->value.shape()}});
  h["tensors"] = tensors;
  return h;
}

CheckpointMeta meta_from_header(const json& h) {
  CheckpointMeta meta;
  meta.config_json = h.at("config").dump();
  meta.step = h.at("step").get<int64_t>();
  meta.schedule_timesteps = h.at("schedule").at("timesteps").get<int>();
  meta.schedule_variant = h.at("schedule").at("variant").get<std::string>();
  return meta;
}

json read_header(std::istream& is, const std::string& path) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  uint64_t len = read_u64_le(is);
  std::string header(len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("checkpoint: truncated header in " + path);
  return json::parse(header);
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ad::ParamStore& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open for writing: " + path);

  std::string header = header_json(meta, params).dump();
  f.write(kMagic, 8);
  write_u64_le(f, header.size());
  f.write(header.data(), static_cast<std::streamsize>(header.size()));

  std::vector<float> buf;
  for (const auto& [name, var] : params.items()) {
    const ad::Tensor& t = var->value;
    buf.resize(static_cast<size_t>(t.size()));
    for (int64_t i = 0; i < t.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(t[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

CheckpointMeta load_checkpoint(const std::string& path, ad::ParamStore& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
  json h = read_header(f, path);

  const json& tensors = h.at("tensors");
  const auto& items = params.items();
  if (tensors.size() != items.size())
    throw std::runtime_error("checkpoint: tensor count mismatch: file has " +
                             std::to_string(tensors.size()) + ", model expects " +
                             std::to_string(items.size()));
  std::vector<float> buf;
  for (size_t i = 0; i < items.size(); ++i) {
    const auto& [name, var] = items[i];
    const json& entry = tensors[i];
    if (entry.at("name").get<std::string>() != name)
      throw std::runtime_error("checkpoint: tensor name mismatch at index " +
                               std::to_string(i) + ": file '" +
                               entry.at("name").get<std::string>() + "' vs model '" + name +
                               "'");
    auto shape = entry.at("shape").get<std::vector<int64_t>>();
    if (shape != var->value.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    buf.resize(static_cast<size_t>(var->value.size()));
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw std::runtime_error("checkpoint: truncated tensor data for '" + name + "'");
    for (int64_t j = 0; j < var->value.size(); ++j)
      var->value[j] = static_cast<double>(buf[static_cast<size_t>(j)]);
  }
  return meta_from_header(h);
}

CheckpointMeta peek_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
  return meta_from_header(read_header(f, path));
}

}  // namespace mvtri
