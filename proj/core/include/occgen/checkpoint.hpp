#pragma once

#include <string>

#include "occgen/model.hpp"

namespace occgen {

struct CheckpointInfo {
  int stage = 0;
  long step = 0;
  uint64_t seed = 0;
};

// Single binary container: magic, format version, JSON header (model
// config, run position, parameter manifest), then raw float64 payload
// of value/m/v triples per parameter in creation order. Adam moments
// ride along so optimization resumes exactly.
void save_checkpoint(const std::string& path, const Model& m,
                     const CheckpointInfo& info);

// Rebuilds the model from the stored config and restores every tensor.
// Throws FormatError when the file is unreadable or does not match.
Model load_checkpoint(const std::string& path, CheckpointInfo* info = nullptr);

}  // namespace occgen
