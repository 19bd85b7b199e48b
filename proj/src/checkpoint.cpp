#include "hmadapt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "hmadapt/errors.hpp"

namespace hmadapt {
namespace {

constexpr char kMagic[8] = {'H', 'M', 'C', 'K', 'P', 'T', '1', '\n'};

void put_u64le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void write_checkpoint_file(const std::filesystem::path& path, const std::string& kind,
                           const std::string& config_json,
                           const std::vector<NamedArray>& arrays) {
  nlohmann::json header;
  header["kind"] = kind;
  header["config"] = nlohmann::json::parse(config_json);
  nlohmann::json dir = nlohmann::json::array();
  for (const NamedArray& a : arrays)
    dir.push_back({{"name", a.name}, {"count", a.data.size()}});
  header["arrays"] = dir;
  const std::string header_text = header.dump();

  std::string blob;
  blob.append(kMagic, sizeof(kMagic));
  put_u64le(blob, header_text.size());
  blob += header_text;
  for (const NamedArray& a : arrays)
    for (double d : a.data) put_u64le(blob, std::bit_cast<std::uint64_t>(d));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

CheckpointContents read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < sizeof(kMagic) + 8 ||
      std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a checkpoint file: " + path.string());
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  const std::uint64_t header_len = get_u64le(bytes + sizeof(kMagic));
  std::size_t pos = sizeof(kMagic) + 8;
  if (pos + header_len > blob.size())
    throw DataError("truncated checkpoint header: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad checkpoint header in " + path.string() + ": " + e.what());
  }
  pos += header_len;

  CheckpointContents c;
  c.kind = header.at("kind").get<std::string>();
  c.config_json = header.at("config").dump();
  for (const auto& entry : header.at("arrays")) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    const std::uint64_t count = entry.at("count").get<std::uint64_t>();
    if (pos + count * 8 > blob.size())
      throw DataError("truncated checkpoint payload: " + path.string());
    a.data.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      a.data[i] = std::bit_cast<double>(get_u64le(bytes + pos));
      pos += 8;
    }
    c.arrays.push_back(std::move(a));
  }
  if (pos != blob.size())
    throw DataError("trailing bytes in checkpoint: " + path.string());
  return c;
}

std::string net_config_to_json(const NetConfig& cfg) {
  nlohmann::json j;
  j["input_size"] = cfg.input_size;
  j["block_count"] = cfg.block_count;
  j["stage_channels"] = cfg.stage_channels;
  j["classes"] = cfg.classes;
  j["stem_stride"] = cfg.stem_stride;
  j["norm_eps"] = cfg.norm_eps;
  j["norm_momentum"] = cfg.norm_momentum;
  return j.dump();
}

NetConfig net_config_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  NetConfig cfg;
  cfg.input_size = j.at("input_size").get<int>();
  cfg.block_count = j.at("block_count").get<int>();
  cfg.stage_channels = j.at("stage_channels").get<std::vector<int>>();
  cfg.classes = j.at("classes").get<int>();
  cfg.stem_stride = j.at("stem_stride").get<int>();
  cfg.norm_eps = j.at("norm_eps").get<double>();
  cfg.norm_momentum = j.at("norm_momentum").get<double>();
  cfg.validate();
  return cfg;
}

void save_net(const std::filesystem::path& path, const NetParams& params) {
  std::vector<NamedArray> arrays;
  visit_all(params, [&](const std::string& name, const std::vector<double>& v) {
    arrays.push_back({name, v});
  });
  write_checkpoint_file(path, "plain", net_config_to_json(params.config), arrays);
}

NetParams load_net(const std::filesystem::path& path) {
  const CheckpointContents c = read_checkpoint_file(path);
  if (c.kind != "plain")
    throw DataError("expected a plain checkpoint, found kind '" + c.kind + "'");
  NetParams params = make_net_shell(net_config_from_json(c.config_json));
  std::map<std::string, const std::vector<double>*> by_name;
  for (const NamedArray& a : c.arrays) by_name[a.name] = &a.data;
  visit_all(params, [&](const std::string& name, std::vector<double>& v) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint missing array: " + name);
    if (it->second->size() != v.size())
      throw DataError("checkpoint array size mismatch: " + name);
    v = *it->second;
  });
  return params;
}

std::uint64_t params_hash(const NetParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](const std::vector<double>& v) {
    for (double d : v) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xff;
        h *= 0x100000001b3ull;
      }
    }
  };
  visit_all(params, [&](const std::string&, const std::vector<double>& v) { mix(v); });
  return h;
}

}  // namespace hmadapt
