#pragma once

// Tensor checkpoint file:
//   bytes [0, 8)        header length N, unsigned little-endian
//   bytes [8, 8 + N)    UTF-8 JSON {"dtype": "f64le", "tensors": [
//                         {"name": ..., "shape": [...], "offset": ...}, ...]}
//   bytes [8 + N, ...)  tensor data, little-endian IEEE-754 doubles
// `offset` is the byte offset of a tensor's first element from the start of
// the data section.

#include <string>
#include <vector>

#include "affdec/gradcheck.hpp"

namespace affdec {

void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::string& path);

}  // namespace affdec
