#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hmadapt/net.hpp"

namespace hmadapt {

// Binary checkpoint container: magic, a JSON header describing the model kind
// and array directory, then the raw array payload as little-endian doubles.
// Writing the same parameters twice produces byte-identical files.

struct NamedArray {
  std::string name;
  std::vector<double> data;
};

void write_checkpoint_file(const std::filesystem::path& path, const std::string& kind,
                           const std::string& config_json,
                           const std::vector<NamedArray>& arrays);

struct CheckpointContents {
  std::string kind;
  std::string config_json;
  std::vector<NamedArray> arrays;
};

CheckpointContents read_checkpoint_file(const std::filesystem::path& path);

void save_net(const std::filesystem::path& path, const NetParams& params);
NetParams load_net(const std::filesystem::path& path);

// FNV-1a over every array byte in visit_all order; equal hashes on the desk
// scale mean bit-identical parameters for freeze-contract checks.
std::uint64_t params_hash(const NetParams& params);

std::string net_config_to_json(const NetConfig& cfg);
NetConfig net_config_from_json(const std::string& text);

}  // namespace hmadapt
