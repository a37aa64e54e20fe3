#pragma once

#include <cstdint>
#include <string>

#include "splitsc/nn.hpp"

namespace splitsc {

struct CheckpointInfo {
  std::uint32_t format_version = 1;
  std::string kind;         // "stage1" | "stage2"
  std::uint64_t config_hash = 0;    // full resolved-config hash
  std::uint64_t compat_hash = 0;    // stage-1 compatibility hash
  std::string fingerprint;  // free-form provenance string
};

// Named parameter blobs with header (kind, config hashes, fingerprint) and a
// payload checksum. Loading fills an existing model's params in place and
// demands exact name/shape agreement (artifact_mismatch otherwise).
void save_checkpoint(const std::string& path, const CheckpointInfo& info,
                     const nn::NamedParams& params);

CheckpointInfo load_checkpoint(const std::string& path,
                               const std::string& expect_kind,
                               const nn::NamedParams& into);

// Header only; does not touch parameters.
CheckpointInfo peek_checkpoint(const std::string& path);

}  // namespace splitsc
