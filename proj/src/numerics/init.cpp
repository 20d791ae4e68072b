#include "numerics/init.hpp"

#include <cmath>

namespace diar {

Tensor xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

ad::LstmParams make_lstm_params(const std::string& prefix, std::size_t in, std::size_t d,
                                std::mt19937_64& rng) {
  ad::LstmParams p;
  p.w_x = Parameter(prefix + ".wx", xavier_uniform(in, 4 * d, rng));
  p.w_h = Parameter(prefix + ".wh", xavier_uniform(d, 4 * d, rng));
  Tensor b(1, 4 * d);
  for (std::size_t j = d; j < 2 * d; ++j) b[j] = 1.0;  // forget gate
  p.b = Parameter(prefix + ".b", std::move(b));
  return p;
}

}  // namespace diar
