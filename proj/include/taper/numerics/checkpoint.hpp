#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "taper/numerics/parameter.hpp"

namespace taper {

/// Binary container shared by every trained model:
///
///   "TAPERCKP" | u16 version | u32 header length | header JSON |
///   parameters as little-endian f32, row-major, in header order
///
/// The header carries {"section", "vocab_hash", "config", "extra",
/// "params": [{"name", "shape"}]}.
struct Checkpoint {
  static constexpr char kMagic[9] = "TAPERCKP";
  static constexpr std::uint16_t kVersion = 1;

  std::string section;
  std::string vocab_hash;
  nlohmann::json config;
  nlohmann::json extra;
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  /// Copies stored tensors into `params`, matching by position, name and shape.
  void load_into(const ParameterRefs& params) const;
};

std::string encode_checkpoint(const std::string& section, const std::string& vocab_hash, const nlohmann::json& config,
                              const ParameterRefs& params, const nlohmann::json& extra = nlohmann::json::object());
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::string& section, const std::string& vocab_hash,
                     const nlohmann::json& config, const ParameterRefs& params,
                     const nlohmann::json& extra = nlohmann::json::object());
/// Reads and validates a checkpoint. `expected_section` must match; a
/// non-empty `expected_vocab_hash` must match the stored hash.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_section,
                           const std::string& expected_vocab_hash = {});

}  // namespace taper
