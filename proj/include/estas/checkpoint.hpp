#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "estas/params.hpp"
#include "estas/tensor.hpp"

namespace estas {

// Flat binary container: magic "ESTASCKPT", one version byte, u32 parameter
// count, then per parameter: u32 name length, name bytes, u32 rank, u32 dims,
// little-endian f64 values. Round-trips bit-exactly.
void write_params(std::ostream& os, const ParameterSet& params);
ParameterSet read_params(std::istream& is);

void save_checkpoint(const std::string& path, const ParameterSet& params);
ParameterSet load_checkpoint(const std::string& path);

// Trailing sections for queue snapshots: u32 count, u32 dim, then count*dim
// little-endian f64 values.
void write_vector_block(std::ostream& os, const std::vector<Tensor>& vectors,
                        std::size_t dim);
std::vector<Tensor> read_vector_block(std::istream& is);

}  // namespace estas
