#pragma once

#include <filesystem>
#include <string>

#include "relrank/model.hpp"

namespace relrank {

// On-disk layout: one line of JSON header terminated by '\n', followed by
// every present parameter block as raw little-endian float64 in
// ModelParams::for_each_block order.
struct Checkpoint {
  SemanticModel model;
  std::string vocab_digest;  // empty when not recorded
};

void save_checkpoint(const std::filesystem::path& path, const SemanticModel& model,
                     const std::string& vocab_digest = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace relrank
