#pragma once

#include <string>

#include "numerics/tensor.hpp"

namespace diar {

// Flat binary matrix container: a line-oriented text header followed by raw
// row-major little-endian float64. Grammar (every line LF-terminated):
//
//   DIARBIN 1
//   kind <features|matrix>
//   rows <uint>
//   cols <uint>
//   dtype f64
//   frame_shift_ms <uint>     (present iff kind == features)
//   data
//   <rows*cols doubles>
struct MatrixFile {
  Tensor m;
  std::string kind;
  int frame_shift_ms = -1;
};

void write_matrix_file(const std::string& path, const Tensor& m, const std::string& kind,
                       int frame_shift_ms = -1);
MatrixFile read_matrix_file(const std::string& path);

}  // namespace diar
