#pragma once

#include <filesystem>

#include "advunlearn/nn/param_store.hpp"

namespace advunlearn {

// Checkpoint layout (all integers little-endian):
//   8 bytes  magic "ADVUCKPT"
//   u32      format version (1)
//   u64      manifest length in bytes
//   manifest UTF-8 JSON: {"dtype":"f64le","total":N,"has_mask":bool,
//                         "entries":[{"name","shape","offset","prunable"}...]}
//   N x f64  parameter values, flat, in entry order
//   N x u8   mask bytes (only when has_mask)

/// Writes atomically (temp file + rename).
void save_checkpoint(const ParamStore& params, const std::filesystem::path& path);

/// Rebuilds a store (entries, values, mask) from a checkpoint. Gradients are zero.
ParamStore load_checkpoint(const std::filesystem::path& path);

/// Loads values (and mask) into an existing store; throws ParseError when the
/// checkpoint's layout differs.
void load_checkpoint_into(ParamStore& params, const std::filesystem::path& path);

}  // namespace advunlearn
