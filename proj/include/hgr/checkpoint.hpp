#pragma once

#include <iosfwd>
#include <string>

#include "hgr/autodiff.hpp"

namespace hgr {

// Binary parameter checkpoint, all integers and floats little-endian:
//
//   "HGRCKPT1"                      8-byte magic
//   u32 count
//   count times:
//     u32 name length, name bytes (UTF-8)
//     u32 rank, rank x u64 dims
//     prod(dims) x f64 values, row-major
//
// Entries appear in ParamStore order.
void write_checkpoint(std::ostream& out, const ParamStore& store);
void save_checkpoint(const std::string& path, const ParamStore& store);

// Loads values into an already-built store. Every stored name must exist with
// the same shape, and every store entry must be present.
void read_checkpoint(std::istream& in, ParamStore& store);
void load_checkpoint(const std::string& path, ParamStore& store);

}  // namespace hgr
