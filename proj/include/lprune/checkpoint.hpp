#pragma once

#include <string>

#include "lprune/model.hpp"

namespace lprune {

// Binary model format, little-endian:
//   magic "LPCK", u32 version = 1
//   i32 in_channels, i32 num_classes, u32 unit_count
//   per unit: i32 id, u32 body_count, body layer records,
//             u8 skip (0 none, 1 identity, 2 projection), [projection record]
//   u32 head_count, head layer records
//   state tensors as f32 in declaration order (weights, biases, BN affine,
//   BN running stats), unit by unit, then projection, then head
// Each layer record is length-prefixed (u32 byte count) so readers can skip
// kinds they do not know.
void save_checkpoint(const ModelGraph& model, const std::string& path);

// Throws on bad magic, unsupported version, or truncated payload.
ModelGraph load_checkpoint(const std::string& path);

}  // namespace lprune
