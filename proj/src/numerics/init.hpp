#pragma once

#include <random>

#include "numerics/autograd.hpp"
#include "numerics/tensor.hpp"

namespace diar {

// Uniform in +-sqrt(6 / (fan_in + fan_out)) for a rows x cols weight used as
// y = x * W (fan_in = rows, fan_out = cols).
Tensor xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

// LSTM parameter block for input dim `in` and hidden dim `d`. Weights are
// xavier-uniform, biases zero except the forget gate at +1.
ad::LstmParams make_lstm_params(const std::string& prefix, std::size_t in, std::size_t d,
                                std::mt19937_64& rng);

}  // namespace diar
