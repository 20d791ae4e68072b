#include "common/container.hpp"

#include <fstream>
#include <sstream>

#include "common/error.hpp"

namespace diar {

void write_matrix_file(const std::string& path, const Tensor& m, const std::string& kind,
                       int frame_shift_ms) {
  if (kind != "features" && kind != "matrix") throw DataError("unknown container kind: " + kind);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write: " + path);
  f << "DIARBIN 1\n";
  f << "kind " << kind << "\n";
  f << "rows " << m.rows() << "\n";
  f << "cols " << m.cols() << "\n";
  f << "dtype f64\n";
  if (kind == "features") {
    if (frame_shift_ms <= 0) throw DataError("features container needs frame_shift_ms");
    f << "frame_shift_ms " << frame_shift_ms << "\n";
  }
  f << "data\n";
  f.write(reinterpret_cast<const char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!f) throw DataError("failed writing: " + path);
}

MatrixFile read_matrix_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "DIARBIN 1") {
    throw DataError("bad container magic in " + path);
  }
  MatrixFile out;
  long rows = -1, cols = -1;
  bool have_dtype = false;
  while (std::getline(f, line)) {
    if (line == "data") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "kind") {
      ls >> out.kind;
    } else if (key == "rows") {
      ls >> rows;
    } else if (key == "cols") {
      ls >> cols;
    } else if (key == "dtype") {
      std::string dt;
      ls >> dt;
      if (dt != "f64") throw DataError("unsupported dtype '" + dt + "' in " + path);
      have_dtype = true;
    } else if (key == "frame_shift_ms") {
      ls >> out.frame_shift_ms;
    } else {
      throw DataError("unknown container header key '" + key + "' in " + path);
    }
    if (!ls) throw DataError("malformed container header line '" + line + "' in " + path);
  }
  if (rows < 0 || cols < 0 || !have_dtype || out.kind.empty()) {
    throw DataError("incomplete container header in " + path);
  }
  if (out.kind == "features" && out.frame_shift_ms <= 0) {
    throw DataError("features container missing frame_shift_ms in " + path);
  }
  out.m = Tensor(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  f.read(reinterpret_cast<char*>(out.m.data()),
         static_cast<std::streamsize>(out.m.size() * sizeof(double)));
  if (f.gcount() != static_cast<std::streamsize>(out.m.size() * sizeof(double))) {
    throw DataError("container payload short in " + path);
  }
  return out;
}

}  // namespace diar
