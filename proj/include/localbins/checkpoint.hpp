#pragma once

// Parameter checkpoint file, magic "LBK1": per parameter a length-prefixed
// UTF-8 name, u32 rank, u64 extents, then the raw little-endian f64 payload.

#include <string>

#include "localbins/data.hpp"
#include "localbins/types.hpp"

namespace localbins {

void save_checkpoint(const ParamStore& store, const std::string& path);

// Loads into an existing store; every parameter must match by name and shape.
void load_checkpoint(ParamStore& store, const std::string& path);

}  // namespace localbins
